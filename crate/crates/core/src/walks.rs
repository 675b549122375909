//! Random-walk corpus generation and skip-gram context extraction.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{BipartiteGraph, NodeId};
use crate::seed;

/// Default walks per user.
pub const DEFAULT_WALK_TIMES: usize = 20;
/// Default nodes per trace.
pub const DEFAULT_WALK_LENGTH: usize = 100;
/// Default context radius (nodes on each side).
pub const DEFAULT_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkParams {
    /// Traces started from every user.
    pub walk_times: usize,
    /// Nodes per trace, start node included.
    pub walk_length: usize,
    pub seed: u64,
}

impl Default for WalkParams {
    fn default() -> Self {
        WalkParams {
            walk_times: DEFAULT_WALK_TIMES,
            walk_length: DEFAULT_WALK_LENGTH,
            seed: 0,
        }
    }
}

/// Set of traces over a node vocabulary. Trace entries index into `nodes`.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkCorpus {
    nodes: Vec<NodeId>,
    traces: Vec<Vec<u32>>,
    params: WalkParams,
}

/// Generates `walk_times` traces of `walk_length` nodes from every user.
///
/// Each trace draws from its own stream keyed by `(seed, user id, trace
/// index)`, so the corpus does not depend on how the work is scheduled.
/// Traces are ordered by user, then trace index.
pub fn generate_walks(g: &BipartiteGraph, params: WalkParams) -> Result<WalkCorpus> {
    if params.walk_times < 1 {
        return Err(Error::invalid("walk_times", "must be >= 1"));
    }
    if params.walk_length < 2 {
        return Err(Error::invalid("walk_length", "must be >= 2"));
    }
    if g.user_count() == 0 {
        return Err(Error::Empty("graph has no users"));
    }
    let per_user: Vec<Vec<Vec<u32>>> = (0..g.user_count())
        .into_par_iter()
        .map(|u| {
            let key = seed::fnv1a(&g.node(u).id);
            (0..params.walk_times)
                .map(|t| {
                    let mut rng = seed::stream(params.seed, "walk", &[key, t as u64]);
                    let mut trace = Vec::with_capacity(params.walk_length);
                    let mut cur = u;
                    trace.push(cur as u32);
                    for _ in 1..params.walk_length {
                        cur = g.sample_neighbor_index(cur, &mut rng)?;
                        trace.push(cur as u32);
                    }
                    Ok(trace)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WalkCorpus {
        nodes: g.nodes().to_vec(),
        traces: per_user.into_iter().flatten().collect(),
        params,
    })
}

impl WalkCorpus {
    /// Assembles a corpus from explicit traces over `nodes`.
    ///
    /// # Panics
    /// If a trace refers to a node index outside `nodes`.
    pub fn from_parts(nodes: Vec<NodeId>, traces: Vec<Vec<u32>>, params: WalkParams) -> Self {
        assert!(traces.iter().flatten().all(|&i| (i as usize) < nodes.len()));
        WalkCorpus { nodes, traces, params }
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn traces(&self) -> &[Vec<u32>] {
        &self.traces
    }

    pub fn params(&self) -> WalkParams {
        self.params
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn trace_nodes(&self, t: usize) -> impl Iterator<Item = &NodeId> {
        self.traces[t].iter().map(|&i| &self.nodes[i as usize])
    }

    /// Occurrences of each vocabulary node across all traces.
    pub fn node_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.nodes.len()];
        for trace in &self.traces {
            for &n in trace {
                counts[n as usize] += 1;
            }
        }
        counts
    }

    /// Skip-gram context pairs for a window of `window` nodes on each side.
    pub fn context_pairs(&self, window: usize) -> ContextPairs<'_> {
        context_pairs_of(&self.traces, window)
    }

    /// Writes one trace per line as space-separated node tokens.
    pub fn write_dump(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        for trace in &self.traces {
            let line: Vec<String> = trace.iter().map(|&n| self.nodes[n as usize].token()).collect();
            writeln!(w, "{}", line.join(" ")).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Reads a corpus dump. The vocabulary is the sorted set of tokens seen;
    /// walk parameters are inferred from the trace shape (seed is unknown, 0).
    pub fn read_dump(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut raw: Vec<Vec<NodeId>> = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let trace = line
                .split_whitespace()
                .map(|tok| {
                    NodeId::parse_token(tok).ok_or_else(|| Error::Parse {
                        path: path.to_path_buf(),
                        line: i + 1,
                        field: "token".into(),
                        reason: format!("`{tok}` is not u:<id> or l:<id>"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            raw.push(trace);
        }
        let vocab: BTreeSet<&NodeId> = raw.iter().flatten().collect();
        let nodes: Vec<NodeId> = vocab.into_iter().cloned().collect();
        let traces: Vec<Vec<u32>> = raw
            .iter()
            .map(|t| {
                t.iter()
                    .map(|n| nodes.binary_search(n).expect("token in vocabulary") as u32)
                    .collect()
            })
            .collect();
        let starts: BTreeSet<u32> = traces.iter().filter_map(|t| t.first().copied()).collect();
        let params = WalkParams {
            walk_times: if starts.is_empty() { 0 } else { traces.len() / starts.len() },
            walk_length: traces.first().map_or(0, Vec::len),
            seed: 0,
        };
        Ok(WalkCorpus {
            nodes,
            traces,
            params,
        })
    }
}

/// Context pairs over a borrowed set of traces.
pub fn context_pairs_of(traces: &[Vec<u32>], window: usize) -> ContextPairs<'_> {
    ContextPairs {
        traces,
        window: window.max(1),
        t: 0,
        i: 0,
        j: 0,
    }
}

/// One `(center, context)` co-occurrence, as vocabulary indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextPair {
    pub center: u32,
    pub context: u32,
}

/// Streams context pairs in trace order, then center position, then context
/// position ascending. Windows are clipped at trace ends. Positions holding
/// the same node as the center are skipped.
#[derive(Debug, Clone)]
pub struct ContextPairs<'a> {
    traces: &'a [Vec<u32>],
    window: usize,
    t: usize,
    i: usize,
    j: usize,
}

impl ContextPairs<'_> {
    fn first_j(&self) -> usize {
        self.i.saturating_sub(self.window)
    }
}

impl Iterator for ContextPairs<'_> {
    type Item = ContextPair;

    fn next(&mut self) -> Option<ContextPair> {
        loop {
            let trace = self.traces.get(self.t)?;
            if self.i >= trace.len() {
                self.t += 1;
                self.i = 0;
                self.j = 0;
                continue;
            }
            let last = (self.i + self.window).min(trace.len() - 1);
            if self.j > last {
                self.i += 1;
                self.j = self.first_j();
                continue;
            }
            let j = self.j;
            self.j += 1;
            if j == self.i || trace[j] == trace[self.i] {
                continue;
            }
            return Some(ContextPair {
                center: trace[self.i],
                context: trace[j],
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{CheckIn, CheckInDataset};

    fn ci(user: &str, loc: &str) -> CheckIn {
        CheckIn {
            user: user.into(),
            time: 0,
            lat: 0.0,
            lon: 0.0,
            location: loc.into(),
            category_l1: "a".into(),
            category_l2: "b".into(),
        }
    }

    fn corpus_of(traces: Vec<Vec<u32>>, n: usize) -> WalkCorpus {
        WalkCorpus {
            nodes: (0..n).map(|i| NodeId::user(format!("n{i}"))).collect(),
            traces,
            params: WalkParams::default(),
        }
    }

    #[test]
    fn three_node_window_one() {
        let c = corpus_of(vec![vec![0, 1, 2]], 3);
        let pairs: Vec<(u32, u32)> = c.context_pairs(1).map(|p| (p.center, p.context)).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 0), (1, 2), (2, 1)]);
    }

    #[test]
    fn full_window_pairs_every_position() {
        let c = corpus_of(vec![vec![0, 1, 2, 3], vec![4, 5]], 6);
        let pairs: Vec<(u32, u32)> = c.context_pairs(10).map(|p| (p.center, p.context)).collect();
        assert_eq!(pairs.len(), 4 * 3 + 2);
        for a in 0..4u32 {
            for b in 0..4u32 {
                assert_eq!(pairs.contains(&(a, b)), a != b);
            }
        }
    }

    #[test]
    fn repeated_nodes_are_not_self_paired() {
        let c = corpus_of(vec![vec![0, 1, 0, 1]], 2);
        assert!(c.context_pairs(3).all(|p| p.center != p.context));
        assert_eq!(c.context_pairs(3).count(), 8);
    }

    #[test]
    fn forced_alternation() {
        let ds = CheckInDataset::from_checkins(vec![ci("u", "l")]).unwrap();
        let g = BipartiteGraph::build(&ds).unwrap();
        let c = generate_walks(&g, WalkParams { walk_times: 1, walk_length: 4, seed: 1 }).unwrap();
        let tokens: Vec<String> = c.trace_nodes(0).map(NodeId::token).collect();
        assert_eq!(tokens, vec!["u:u", "l:l", "u:u", "l:l"]);
    }

    #[test]
    fn trace_count_and_validation() {
        let ds = CheckInDataset::from_checkins(vec![ci("a", "x"), ci("b", "x"), ci("c", "y"), ci("c", "x")]).unwrap();
        let g = BipartiteGraph::build(&ds).unwrap();
        let c = generate_walks(&g, WalkParams { walk_times: 5, walk_length: 7, seed: 2 }).unwrap();
        assert_eq!(c.traces().len(), 15);
        assert!(c.traces().iter().all(|t| t.len() == 7));
        assert!(generate_walks(&g, WalkParams { walk_times: 0, walk_length: 7, seed: 2 }).is_err());
        assert!(generate_walks(&g, WalkParams { walk_times: 1, walk_length: 1, seed: 2 }).is_err());
    }

    #[test]
    fn dump_round_trip() {
        let ds = CheckInDataset::from_checkins(vec![ci("a", "x"), ci("b", "x"), ci("b", "y")]).unwrap();
        let g = BipartiteGraph::build(&ds).unwrap();
        let c = generate_walks(&g, WalkParams { walk_times: 3, walk_length: 6, seed: 5 }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("walks.txt");
        c.write_dump(&p).unwrap();
        let back = WalkCorpus::read_dump(&p).unwrap();
        assert_eq!(back.params().walk_times, 3);
        assert_eq!(back.params().walk_length, 6);
        for t in 0..c.traces().len() {
            assert!(c.trace_nodes(t).eq(back.trace_nodes(t)));
        }
    }
}
