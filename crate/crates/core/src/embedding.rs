//! Skip-gram with negative sampling over a walk corpus.
//!
//! Each context pair `(v, n)` is a positive example (label 1) and each of the
//! `k` sampled nodes a negative example (label 0). Training ascends
//! `label * log σ(f(n)·f(v)) + (1 - label) * log σ(-f(n)·f(v))` with plain SGD.
//! Input vectors are the node features used downstream; output vectors are
//! the context-side parameters.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alias::AliasTable;
use crate::error::{Error, Result};
use crate::graph::{NodeId, NodeKind};
use crate::seed;
use crate::walks::{context_pairs_of, WalkCorpus, DEFAULT_WINDOW};

/// Lower clamp for arguments of `log`.
pub const LOG_FLOOR: f64 = 1e-10;
/// Redraws allowed when a negative collides with the positive context.
pub const MAX_NEGATIVE_REDRAWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    /// One worker, bitwise reproducible.
    DeterministicSequential,
    /// Lock-free shared updates from several workers; lost updates allowed.
    ParallelRelaxed { threads: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub mode: TrainMode,
    pub unigram_power: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 128,
            window: DEFAULT_WINDOW,
            negatives: 5,
            learning_rate: 0.025,
            epochs: 5,
            seed: 0,
            mode: TrainMode::DeterministicSequential,
            unigram_power: 0.75,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 1 {
            return Err(Error::invalid("dim", "must be >= 1"));
        }
        if self.window < 1 {
            return Err(Error::invalid("window", "must be >= 1"));
        }
        if self.negatives < 1 {
            return Err(Error::invalid("negatives", "must be >= 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate", "must be > 0"));
        }
        if self.epochs < 1 {
            return Err(Error::invalid("epochs", "must be >= 1"));
        }
        if !(self.unigram_power.is_finite() && self.unigram_power >= 0.0) {
            return Err(Error::invalid("unigram_power", "must be >= 0"));
        }
        if let TrainMode::ParallelRelaxed { threads } = self.mode {
            if threads < 1 {
                return Err(Error::invalid("threads", "must be >= 1"));
            }
        }
        Ok(())
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let (ca, ra) = (a.chunks_exact(4), a.chunks_exact(4).remainder());
    let rb = b.chunks_exact(4).remainder();
    for (x, y) in ca.zip(b.chunks_exact(4)) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// Log-probability of `label` for the pair: `log σ(x)` for label 1 and
/// `log σ(-x)` for label 0, with `x = center · context`.
pub fn loss_terms(center: &[f64], context: &[f64], label: bool) -> f64 {
    let x = dot(center, context);
    let p = if label { sigmoid(x) } else { sigmoid(-x) };
    p.max(LOG_FLOOR).ln()
}

/// One SGD ascent step on a single pair, applied to raw rows.
///
/// With `g = label - σ(center · context)`:
/// `center += lr * g * context` and `context += lr * g * center_before`.
/// Returns `g`.
#[inline]
pub fn sgd_update(center: &mut [f64], context: &mut [f64], label: bool, lr: f64) -> f64 {
    let g = f64::from(u8::from(label)) - sigmoid(dot(center, context));
    let step = lr * g;
    for (c, o) in center.iter_mut().zip(context.iter_mut()) {
        let before = *c;
        *c += step * *o;
        *o += step * before;
    }
    g
}

/// Per-node input and output vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    nodes: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    input: Vec<f64>,
    output: Vec<f64>,
}

impl EmbeddingMatrix {
    /// Input vectors uniform in `[-0.5/d, 0.5/d]`, output vectors zero.
    pub fn initialized(nodes: Vec<NodeId>, dim: usize, seed: u64) -> Self {
        let mut rng = seed::stream(seed, "init", &[]);
        let half = 0.5 / dim as f64;
        let input = (0..nodes.len() * dim)
            .map(|_| rng.gen_range(-half..=half))
            .collect();
        let output = vec![0.0; nodes.len() * dim];
        Self::from_parts(nodes, dim, input, output)
    }

    pub fn from_parts(nodes: Vec<NodeId>, dim: usize, input: Vec<f64>, output: Vec<f64>) -> Self {
        assert_eq!(input.len(), nodes.len() * dim);
        assert_eq!(output.len(), nodes.len() * dim);
        let index = nodes.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        EmbeddingMatrix {
            dim,
            nodes,
            index,
            input,
            output,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn index_of(&self, node: &NodeId) -> Option<usize> {
        self.index.get(node).copied()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.input[i * self.dim..(i + 1) * self.dim]
    }

    pub fn output(&self, i: usize) -> &[f64] {
        &self.output[i * self.dim..(i + 1) * self.dim]
    }

    /// Feature vector f(v) of a node.
    pub fn vector(&self, node: &NodeId) -> Option<&[f64]> {
        self.index_of(node).map(|i| self.input(i))
    }

    pub fn user_vector(&self, user: &str) -> Option<&[f64]> {
        self.vector(&NodeId::user(user))
    }

    /// Location vectors are kept in storage but are not used for scoring.
    pub fn is_droppable(&self, i: usize) -> bool {
        self.nodes[i].kind == NodeKind::Location
    }

    pub fn user_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| !self.is_droppable(i))
    }

    pub fn all_finite(&self) -> bool {
        self.input.iter().chain(&self.output).all(|x| x.is_finite())
    }

    /// Applies [`sgd_update`] to `center`'s input vector and `context`'s
    /// output vector. Returns `g`.
    pub fn gradient_step(&mut self, center: usize, context: usize, label: bool, lr: f64) -> f64 {
        let d = self.dim;
        let c = &mut self.input[center * d..(center + 1) * d];
        let o = &mut self.output[context * d..(context + 1) * d];
        sgd_update(c, o, label, lr)
    }

    /// Writes `<node_count> <d>` then `token v1 ... vd` per node, with 17
    /// significant digits so values read back exactly.
    pub fn write_dump(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "{} {}", self.nodes.len(), self.dim).map_err(io)?;
        for (i, node) in self.nodes.iter().enumerate() {
            write!(w, "{}", node.token()).map_err(io)?;
            for x in self.input(i) {
                write!(w, " {x:.16e}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Reads an embedding dump. Only input vectors are stored in the dump;
    /// output vectors come back as zeros.
    pub fn read_dump(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let parse_err = |line: usize, field: &str, reason: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            field: field.to_string(),
            reason,
        };
        let header = lines
            .next()
            .ok_or_else(|| parse_err(1, "header", "missing".into()))?
            .map_err(|e| Error::io(path, e))?;
        let mut hf = header.split_whitespace();
        let count: usize = hf
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(1, "node_count", header.clone()))?;
        let dim: usize = hf
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(1, "d", header.clone()))?;
        let mut nodes = Vec::with_capacity(count);
        let mut input = Vec::with_capacity(count * dim);
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut f = line.split_whitespace();
            let tok = f.next().unwrap_or_default();
            let node = NodeId::parse_token(tok)
                .ok_or_else(|| parse_err(line_no, "token", tok.to_string()))?;
            let values: Vec<f64> = f
                .map(|s| s.parse::<f64>().map_err(|e| parse_err(line_no, "value", format!("`{s}`: {e}"))))
                .collect::<Result<_>>()?;
            if values.len() != dim {
                return Err(parse_err(line_no, "value", format!("expected {dim} values, found {}", values.len())));
            }
            nodes.push(node);
            input.extend(values);
        }
        if nodes.len() != count {
            return Err(parse_err(1, "node_count", format!("header says {count}, found {}", nodes.len())));
        }
        let output = vec![0.0; input.len()];
        Ok(Self::from_parts(nodes, dim, input, output))
    }
}

/// Unigram sampler over node occurrence counts raised to `power`.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    table: AliasTable,
}

impl NegativeSampler {
    /// `counts[i]` is the occurrence count of vocabulary node `i`; every count
    /// must be positive.
    pub fn new(counts: &[u64], power: f64) -> Result<Self> {
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(power)).collect();
        Ok(NegativeSampler {
            table: AliasTable::new(&weights)?,
        })
    }

    pub fn masses(&self) -> Vec<f64> {
        self.table.masses()
    }

    #[inline]
    fn draw_one<R: Rng + ?Sized>(&self, avoid: u32, rng: &mut R) -> u32 {
        let mut pick = self.table.sample(rng) as u32;
        let mut redraws = 0;
        while pick == avoid && redraws < MAX_NEGATIVE_REDRAWS {
            pick = self.table.sample(rng) as u32;
            redraws += 1;
        }
        pick
    }

    /// Draws `k` negatives. A draw equal to `positive` is redrawn up to
    /// [`MAX_NEGATIVE_REDRAWS`] times, then kept.
    pub fn sample_negatives<R: Rng + ?Sized>(&self, positive: u32, k: usize, rng: &mut R) -> Vec<u32> {
        (0..k).map(|_| self.draw_one(positive, rng)).collect()
    }
}

/// Maps corpus node indices onto the training vocabulary: nodes that occur
/// at least once, in corpus order.
struct Vocabulary {
    nodes: Vec<NodeId>,
    counts: Vec<u64>,
    remap: Vec<u32>,
}

impl Vocabulary {
    fn from_corpus(corpus: &WalkCorpus) -> Self {
        let all = corpus.node_counts();
        let mut nodes = Vec::new();
        let mut counts = Vec::new();
        let mut remap = vec![u32::MAX; all.len()];
        for (i, &c) in all.iter().enumerate() {
            if c > 0 {
                remap[i] = nodes.len() as u32;
                nodes.push(corpus.nodes()[i].clone());
                counts.push(c);
            }
        }
        Vocabulary { nodes, counts, remap }
    }
}

/// Trains node vectors on every context pair of the corpus.
pub fn train(corpus: &WalkCorpus, cfg: &TrainConfig) -> Result<EmbeddingMatrix> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::Empty("walk corpus"));
    }
    let vocab = Vocabulary::from_corpus(corpus);
    if vocab.nodes.len() < 2 {
        return Err(Error::invalid("corpus", "vocabulary needs at least two nodes"));
    }
    let sampler = NegativeSampler::new(&vocab.counts, cfg.unigram_power)?;
    let mut matrix = EmbeddingMatrix::initialized(vocab.nodes.clone(), cfg.dim, cfg.seed);

    match cfg.mode {
        TrainMode::DeterministicSequential => train_sequential(corpus, cfg, &vocab, &sampler, &mut matrix)?,
        TrainMode::ParallelRelaxed { threads } => {
            train_relaxed(corpus, cfg, &vocab, &sampler, &mut matrix, threads)?
        }
    }
    if !matrix.all_finite() {
        return Err(Error::NonFinite {
            center: "<matrix>".into(),
            context: "<matrix>".into(),
        });
    }
    Ok(matrix)
}

fn train_sequential(
    corpus: &WalkCorpus,
    cfg: &TrainConfig,
    vocab: &Vocabulary,
    sampler: &NegativeSampler,
    matrix: &mut EmbeddingMatrix,
) -> Result<()> {
    let mut rng = seed::stream(cfg.seed, "negatives", &[]);
    let lr = cfg.learning_rate;
    for epoch in 0..cfg.epochs {
        for pair in corpus.context_pairs(cfg.window) {
            let v = vocab.remap[pair.center as usize] as usize;
            let n = vocab.remap[pair.context as usize];
            let g = matrix.gradient_step(v, n as usize, true, lr);
            if !g.is_finite() {
                return Err(non_finite(matrix, v, n as usize));
            }
            for _ in 0..cfg.negatives {
                let neg = sampler.draw_one(n, &mut rng) as usize;
                let g = matrix.gradient_step(v, neg, false, lr);
                if !g.is_finite() {
                    return Err(non_finite(matrix, v, neg));
                }
            }
        }
        log::debug!("epoch {} of {} done", epoch + 1, cfg.epochs);
    }
    Ok(())
}

fn non_finite(matrix: &EmbeddingMatrix, v: usize, n: usize) -> Error {
    Error::NonFinite {
        center: matrix.nodes()[v].token(),
        context: matrix.nodes()[n].token(),
    }
}

/// Parameter store shared by relaxed workers. Rows are read and written with
/// relaxed atomics, so concurrent updates to one row can be lost but no read
/// is torn.
struct SharedStore {
    dim: usize,
    input: Vec<AtomicU64>,
    output: Vec<AtomicU64>,
}

impl SharedStore {
    fn load(dst: &mut [f64], offset: usize, cells: &[AtomicU64]) {
        for (k, x) in dst.iter_mut().enumerate() {
            *x = f64::from_bits(cells[offset + k].load(Ordering::Relaxed));
        }
    }

    fn store(src: &[f64], offset: usize, cells: &[AtomicU64]) {
        for (k, x) in src.iter().enumerate() {
            cells[offset + k].store(x.to_bits(), Ordering::Relaxed);
        }
    }
}

fn train_relaxed(
    corpus: &WalkCorpus,
    cfg: &TrainConfig,
    vocab: &Vocabulary,
    sampler: &NegativeSampler,
    matrix: &mut EmbeddingMatrix,
    threads: usize,
) -> Result<()> {
    let d = cfg.dim;
    let store = SharedStore {
        dim: d,
        input: matrix.input.iter().map(|x| AtomicU64::new(x.to_bits())).collect(),
        output: matrix.output.iter().map(|x| AtomicU64::new(x.to_bits())).collect(),
    };
    let traces = corpus.traces();
    let chunk = traces.len().div_ceil(threads).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid("threads", e.to_string()))?;

    pool.install(|| {
        traces
            .par_chunks(chunk)
            .enumerate()
            .try_for_each(|(worker, part)| -> Result<()> {
                let mut rng = seed::stream(cfg.seed, "negatives", &[worker as u64]);
                let mut center = vec![0.0; d];
                let mut context = vec![0.0; d];
                for _ in 0..cfg.epochs {
                    for pair in context_pairs_of(part, cfg.window) {
                        let v = vocab.remap[pair.center as usize] as usize;
                        let n = vocab.remap[pair.context as usize];
                        let mut targets = Vec::with_capacity(cfg.negatives + 1);
                        targets.push((n as usize, true));
                        for _ in 0..cfg.negatives {
                            targets.push((sampler.draw_one(n, &mut rng) as usize, false));
                        }
                        SharedStore::load(&mut center, v * store.dim, &store.input);
                        for (t, label) in targets {
                            SharedStore::load(&mut context, t * store.dim, &store.output);
                            let g = sgd_update(&mut center, &mut context, label, cfg.learning_rate);
                            if !g.is_finite() {
                                return Err(Error::NonFinite {
                                    center: vocab.nodes[v].token(),
                                    context: vocab.nodes[t].token(),
                                });
                            }
                            SharedStore::store(&context, t * store.dim, &store.output);
                        }
                        SharedStore::store(&center, v * store.dim, &store.input);
                    }
                }
                Ok(())
            })
    })?;

    for (dst, src) in matrix.input.iter_mut().zip(&store.input) {
        *dst = f64::from_bits(src.load(Ordering::Relaxed));
    }
    for (dst, src) in matrix.output.iter_mut().zip(&store.output) {
        *dst = f64::from_bits(src.load(Ordering::Relaxed));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walks::WalkParams;

    fn rand_vec(rng: &mut impl Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn loss_terms_reference_values() {
        let z = [0.0, 0.0];
        assert!((loss_terms(&z, &z, true) - 0.5f64.ln()).abs() < 1e-15);
        assert!((loss_terms(&z, &z, false) - 0.5f64.ln()).abs() < 1e-15);
        let big = loss_terms(&[10.0], &[10.0], true);
        assert!(big <= 0.0 && big > -1e-40);
        assert!((loss_terms(&[100.0], &[100.0], false) - LOG_FLOOR.ln()).abs() < 1e-12);
    }

    #[test]
    fn gradient_at_zero_and_saturation() {
        let mut c = vec![0.3, -0.2];
        let mut o = vec![0.0, 0.0];
        let g = sgd_update(&mut c, &mut o, true, 0.025);
        assert_eq!(g, 0.5);
        assert_eq!(c, vec![0.3, -0.2]);
        assert!((o[0] - 0.025 * 0.5 * 0.3).abs() < 1e-18);
        assert!((o[1] - 0.025 * 0.5 * -0.2).abs() < 1e-18);

        let mut c = vec![10.0, 10.0];
        let mut o = vec![-10.0, -10.0];
        let (c0, o0) = (c.clone(), o.clone());
        let g = sgd_update(&mut c, &mut o, false, 0.025);
        assert!(g.abs() < 1e-80);
        assert_eq!(c, c0);
        assert_eq!(o, o0);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = seed::stream(17, "fd", &[]);
        let eps = 1e-4;
        for case in 0..200 {
            let d = 1 + case % 8;
            let c = rand_vec(&mut rng, d);
            let o = rand_vec(&mut rng, d);
            let label = case % 2 == 0;
            let g = f64::from(u8::from(label)) - sigmoid(dot(&c, &o));
            for k in 0..d {
                let mut plus = c.clone();
                let mut minus = c.clone();
                plus[k] += eps;
                minus[k] -= eps;
                let fd = (loss_terms(&plus, &o, label) - loss_terms(&minus, &o, label)) / (2.0 * eps);
                let an = g * o[k];
                let rel = (fd - an).abs() / an.abs().max(1e-8);
                assert!(rel < 1e-4 || (fd - an).abs() < 1e-10, "case {case}: fd={fd} an={an}");
            }
        }
    }

    #[test]
    fn sequential_steps_increase_objective() {
        let d = 4;
        let nodes: Vec<NodeId> = (0..3).map(|i| NodeId::user(format!("n{i}"))).collect();
        let mut m = EmbeddingMatrix::initialized(nodes, d, 3);
        let pairs = [(0usize, 1usize, true), (1, 0, true), (0, 2, false)];
        let objective = |m: &EmbeddingMatrix| -> f64 {
            pairs.iter().map(|&(v, n, l)| loss_terms(m.input(v), m.output(n), l)).sum()
        };
        let mut prev = objective(&m);
        for step in 0..100 {
            let (v, n, l) = pairs[step % pairs.len()];
            m.gradient_step(v, n, l, 0.025);
            let now = objective(&m);
            assert!(now >= prev - 1e-15, "step {step}: {now} < {prev}");
            prev = now;
        }
    }

    #[test]
    fn negative_sampler_distribution() {
        let mut rng = seed::stream(4, "neg", &[]);
        let s = NegativeSampler::new(&[5, 5], 1.0).unwrap();
        let n = 100_000;
        let zeros = (0..n).filter(|_| s.draw_one(u32::MAX, &mut rng) == 0).count();
        assert!((zeros as f64 / n as f64 - 0.5).abs() < 0.01);

        let uniform = NegativeSampler::new(&[1, 100, 10_000], 0.0).unwrap();
        for m in uniform.masses() {
            assert!((m - 1.0 / 3.0).abs() < 1e-12);
        }

        let counts = [1u64, 16, 81];
        let s = NegativeSampler::new(&counts, 0.75).unwrap();
        let z: f64 = counts.iter().map(|&c| (c as f64).powf(0.75)).sum();
        for (m, c) in s.masses().iter().zip(counts) {
            assert!((m - (c as f64).powf(0.75) / z).abs() < 1e-12);
        }
    }

    #[test]
    fn negatives_avoid_the_positive() {
        let mut rng = seed::stream(5, "neg", &[]);
        let s = NegativeSampler::new(&[1, 1, 1], 1.0).unwrap();
        let negs = s.sample_negatives(1, 1000, &mut rng);
        assert_eq!(negs.len(), 1000);
        let collisions = negs.iter().filter(|&&x| x == 1).count();
        // probability of 11 consecutive collisions is 3^-11
        assert!(collisions <= 1);
        // a vocabulary of one reachable node falls back after the redraw budget
        let single = NegativeSampler::new(&[1], 1.0).unwrap();
        assert_eq!(single.sample_negatives(0, 3, &mut rng), vec![0, 0, 0]);
    }

    fn toy_corpus() -> WalkCorpus {
        // a and b always share the same contexts; c lives in a separate component.
        let traces = vec![
            vec![0, 3, 1, 3, 0, 4, 1, 4],
            vec![1, 4, 0, 3, 1, 3, 0, 4],
            vec![2, 5, 2, 5, 2, 5, 2, 5],
        ];
        let nodes = vec![
            NodeId::user("a"),
            NodeId::user("b"),
            NodeId::user("c"),
            NodeId::location("x"),
            NodeId::location("y"),
            NodeId::location("z"),
        ];
        WalkCorpus::from_parts(nodes, traces, WalkParams::default())
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
    }

    #[test]
    fn co_occurring_nodes_end_up_closer() {
        let corpus = toy_corpus();
        let cfg = TrainConfig {
            dim: 16,
            window: 2,
            epochs: 300,
            seed: 1,
            ..TrainConfig::default()
        };
        let m = train(&corpus, &cfg).unwrap();
        let a = m.user_vector("a").unwrap();
        let b = m.user_vector("b").unwrap();
        let c = m.user_vector("c").unwrap();
        assert!(cosine(a, b) > cosine(a, c));
    }

    #[test]
    fn identical_contexts_converge() {
        // with window 1, a and b both see exactly {x, y}; c only sees z
        let traces = vec![
            vec![0, 3, 0, 4, 0, 3, 0, 4],
            vec![1, 3, 1, 4, 1, 3, 1, 4],
            vec![2, 5, 2, 5, 2, 5, 2, 5],
        ];
        let nodes = ["a", "b", "c"]
            .into_iter()
            .map(NodeId::user)
            .chain(["x", "y", "z"].into_iter().map(NodeId::location))
            .collect();
        let corpus = WalkCorpus::from_parts(nodes, traces, WalkParams::default());
        let cfg = TrainConfig {
            dim: 16,
            window: 1,
            epochs: 500,
            seed: 2,
            ..TrainConfig::default()
        };
        let m = train(&corpus, &cfg).unwrap();
        let a = m.user_vector("a").unwrap();
        let b = m.user_vector("b").unwrap();
        assert!(cosine(a, b) > 0.9, "cos(a,b) = {}", cosine(a, b));
    }

    #[test]
    fn deterministic_mode_is_bitwise_reproducible() {
        let corpus = toy_corpus();
        let cfg = TrainConfig { dim: 8, epochs: 3, seed: 9, ..TrainConfig::default() };
        assert_eq!(train(&corpus, &cfg).unwrap(), train(&corpus, &cfg).unwrap());
    }

    #[test]
    fn relaxed_mode_trains_finite_vectors() {
        let corpus = toy_corpus();
        let cfg = TrainConfig {
            dim: 8,
            epochs: 50,
            seed: 9,
            mode: TrainMode::ParallelRelaxed { threads: 3 },
            ..TrainConfig::default()
        };
        let m = train(&corpus, &cfg).unwrap();
        assert!(m.all_finite());
        assert_eq!(m.len(), 6);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let corpus = toy_corpus();
        for cfg in [
            TrainConfig { dim: 0, ..TrainConfig::default() },
            TrainConfig { negatives: 0, ..TrainConfig::default() },
            TrainConfig { learning_rate: 0.0, ..TrainConfig::default() },
            TrainConfig { epochs: 0, ..TrainConfig::default() },
        ] {
            assert!(train(&corpus, &cfg).is_err());
        }
    }

    #[test]
    fn dump_round_trip_is_exact() {
        let m = train(&toy_corpus(), &TrainConfig { dim: 5, epochs: 2, ..TrainConfig::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("emb.txt");
        m.write_dump(&p).unwrap();
        let back = EmbeddingMatrix::read_dump(&p).unwrap();
        assert_eq!(back.nodes(), m.nodes());
        for i in 0..m.len() {
            assert_eq!(back.input(i), m.input(i));
        }
    }
}
