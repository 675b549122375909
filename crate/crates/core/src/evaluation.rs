//! Labeled pair sampling, AUC/ROC and the experiment driver.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{baseline_score, BaselineModel};
use crate::csvio;
use crate::dataset::{preprocess, snap_to_grid, CheckInDataset, PreprocessParams, SocialGraph, UserMeta};
use crate::defense::{self, ObfuscationSpec, PopularityTable};
use crate::embedding::{train, EmbeddingMatrix, TrainConfig, TrainMode};
use crate::error::{Error, Result};
use crate::graph::BipartiteGraph;
use crate::seed::{self, fnv1a};
use crate::similarity::{score_pair, Measure};
use crate::walks::{generate_walks, WalkParams, DEFAULT_WALK_LENGTH, DEFAULT_WALK_TIMES, DEFAULT_WINDOW};

pub const REPORT_HEADER: &str = "experiment,config_json,seed,n_pairs,auc";
pub const ROC_HEADER: &str = "threshold,fpr,tpr";
pub const SCORES_HEADER: &str = "user_a,user_b,label,score";
pub const BASELINE_SCORES_HEADER: &str = "model,user_a,user_b,label,score";
/// Default upper bound of the common-location stratification.
pub const DEFAULT_MAX_COMMON: usize = 4;
/// Below this many candidate pairs strangers are sampled by enumeration.
pub const ENUMERATION_LIMIT: usize = 1_000_000;
/// Rejection draws allowed per requested stranger pair.
pub const REJECTION_ATTEMPTS_PER_PAIR: usize = 1000;

/// An unordered user pair, smaller identifier first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabeledPair {
    pub a: String,
    pub b: String,
    /// `true` for friends.
    pub label: bool,
}

impl LabeledPair {
    pub fn new(a: &str, b: &str, label: bool) -> Self {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        LabeledPair {
            a: a.to_string(),
            b: b.to_string(),
            label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPairSet {
    pub pairs: Vec<LabeledPair>,
    pub seed: u64,
}

impl LabeledPairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.pairs.iter().map(|p| p.label).collect()
    }

    pub fn positives(&self) -> usize {
        self.pairs.iter().filter(|p| p.label).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }
}

/// All friend pairs among `users` plus as many stranger pairs, drawn
/// uniformly without replacement from the non-friend pairs.
pub fn sample_pairs(social: &SocialGraph, users: &BTreeSet<String>, seed: u64) -> Result<LabeledPairSet> {
    let ids: Vec<&String> = users.iter().collect();
    let n = ids.len();
    let position = |u: &str| ids.binary_search_by(|x| x.as_str().cmp(u)).ok();
    let mut friends: HashSet<(usize, usize)> = HashSet::new();
    let mut pairs = Vec::new();
    for (a, b) in social.edges() {
        if let (Some(i), Some(j)) = (position(a), position(b)) {
            friends.insert((i.min(j), i.max(j)));
            pairs.push(LabeledPair::new(a, b, true));
        }
    }
    let needed = pairs.len();
    if needed == 0 {
        return Err(Error::Empty("friend pairs among the evaluated users"));
    }
    let total = n * (n - 1) / 2;
    let available = total - friends.len();
    if available < needed {
        return Err(Error::NotEnoughStrangers { needed, available });
    }

    let mut rng = seed::stream(seed, "pairs", &[]);
    let mut strangers: Vec<(usize, usize)> = Vec::with_capacity(needed);
    if total < ENUMERATION_LIMIT {
        let candidates: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|p| !friends.contains(p))
            .collect();
        strangers.extend(index::sample(&mut rng, candidates.len(), needed).into_iter().map(|k| candidates[k]));
    } else {
        let mut chosen = HashSet::with_capacity(needed);
        let cap = needed.saturating_mul(REJECTION_ATTEMPTS_PER_PAIR);
        let mut attempts = 0;
        while strangers.len() < needed {
            if attempts == cap {
                return Err(Error::NotEnoughStrangers {
                    needed,
                    available: strangers.len(),
                });
            }
            attempts += 1;
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            if i == j {
                continue;
            }
            let p = (i.min(j), i.max(j));
            if !friends.contains(&p) && chosen.insert(p) {
                strangers.push(p);
            }
        }
    }
    strangers.sort_unstable();
    pairs.extend(strangers.into_iter().map(|(i, j)| LabeledPair::new(ids[i], ids[j], false)));
    Ok(LabeledPairSet { pairs, seed })
}

fn check_scored(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::invalid("scores", format!("score {i} is NaN")));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass { positives, negatives });
    }
    Ok((positives, negatives))
}

/// Mann-Whitney AUC with ties credited one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_scored(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    // twice the rank sum of positives, so tied mid-ranks stay integral
    let mut twice_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks start+1..=end, mid-rank (start+1+end)/2
        let twice_mid = (start + 1 + end) as u128;
        let tied_pos = order[start..end].iter().filter(|&&i| labels[i]).count() as u128;
        twice_rank_sum += twice_mid * tied_pos;
        start = end;
    }
    let pos = pos as u128;
    let twice_u = twice_rank_sum - pos * (pos + 1);
    Ok(twice_u as f64 / (2 * pos * neg as u128) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    /// Pairs scoring at least this much are predicted friends.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "{ROC_HEADER}").map_err(io)?;
        for p in &self.points {
            writeln!(w, "{},{},{}", p.threshold, p.fpr, p.tpr).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// ROC curve from sweeping the threshold down through every distinct score.
/// The first point has threshold `+inf`. The area is the trapezoid rule,
/// accumulated in integer units.
pub fn roc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    let (pos, neg) = check_scored(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0u128, 0u128);
    let mut twice_area: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let threshold = scores[order[start]];
        let (tp0, fp0) = (tp, fp);
        let mut end = start;
        while end < order.len() && scores[order[end]] == threshold {
            if labels[order[end]] {
                tp += 1;
            } else {
                fp += 1;
            }
            end += 1;
        }
        twice_area += (fp - fp0) * (tp + tp0);
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
        start = end;
    }
    let auc = twice_area as f64 / (2 * pos as u128 * neg as u128) as f64;
    Ok(RocCurve { points, auc })
}

/// Buckets pairs by their number of common locations, `0..=max_k`. Pairs
/// sharing more are dropped. Label balance is inherited, not re-sampled.
pub fn stratify_by_common_locations(
    pairs: &LabeledPairSet,
    ds: &CheckInDataset,
    max_k: usize,
) -> BTreeMap<usize, LabeledPairSet> {
    let mut buckets: BTreeMap<usize, LabeledPairSet> = (0..=max_k)
        .map(|k| {
            (
                k,
                LabeledPairSet {
                    pairs: Vec::new(),
                    seed: pairs.seed,
                },
            )
        })
        .collect();
    for p in &pairs.pairs {
        let k = ds.common_location_count(&p.a, &p.b);
        if let Some(bucket) = buckets.get_mut(&k) {
            bucket.pairs.push(p.clone());
        }
    }
    buckets
}

fn pair_keys(p: &LabeledPair) -> [u64; 2] {
    [fnv1a(&p.a), fnv1a(&p.b)]
}

/// Attack scores for every pair. A pair whose users lack a vector gets a
/// uniform random score between the lowest and highest embedded scores,
/// drawn from a per-pair substream.
pub fn attack_scores(pairs: &LabeledPairSet, emb: &EmbeddingMatrix, measure: Measure, seed: u64) -> Result<Vec<f64>> {
    let mut scores: Vec<Option<f64>> = Vec::with_capacity(pairs.len());
    for p in &pairs.pairs {
        if emb.user_vector(&p.a).is_some() && emb.user_vector(&p.b).is_some() {
            scores.push(Some(score_pair(emb, &p.a, &p.b, measure)?));
        } else {
            scores.push(None);
        }
    }
    let (lo, hi) = scores.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| {
        (lo.min(s), hi.max(s))
    });
    let (lo, hi) = if lo <= hi { (lo, hi) } else { (0.0, 1.0) };
    let missing = scores.iter().filter(|s| s.is_none()).count();
    if missing > 0 {
        log::warn!("{missing} pairs without embeddings scored at random");
    }
    Ok(scores
        .into_iter()
        .zip(&pairs.pairs)
        .map(|(s, p)| {
            s.unwrap_or_else(|| {
                let u: f64 = seed::stream(seed, "missing-vector", &pair_keys(p)).gen();
                lo + u * (hi - lo)
            })
        })
        .collect())
}

/// Baseline scores. Each pair draws its random fallback from its own
/// substream keyed by the model and the pair.
pub fn baseline_scores(
    pairs: &LabeledPairSet,
    ds: &CheckInDataset,
    model: BaselineModel,
    seed: u64,
) -> Result<Vec<f64>> {
    pairs
        .pairs
        .iter()
        .map(|p| {
            let [ka, kb] = pair_keys(p);
            let mut rng = seed::stream(seed, "baseline", &[fnv1a(model.name()), ka, kb]);
            baseline_score(ds, &p.a, &p.b, model, &mut rng)
        })
        .collect()
}

/// Attack hyperparameters. Seeds come from the experiment's master seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackParams {
    pub walk_times: usize,
    pub walk_length: usize,
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub unigram_power: f64,
    pub measure: Measure,
    pub mode: TrainMode,
}

impl Default for AttackParams {
    fn default() -> Self {
        let t = TrainConfig::default();
        AttackParams {
            walk_times: DEFAULT_WALK_TIMES,
            walk_length: DEFAULT_WALK_LENGTH,
            dim: t.dim,
            window: DEFAULT_WINDOW,
            negatives: t.negatives,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            unigram_power: t.unigram_power,
            measure: Measure::Cosine,
            mode: TrainMode::DeterministicSequential,
        }
    }
}

impl AttackParams {
    pub fn walk_params(&self, seed: u64) -> WalkParams {
        WalkParams {
            walk_times: self.walk_times,
            walk_length: self.walk_length,
            seed,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            dim: self.dim,
            window: self.window,
            negatives: self.negatives,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            seed,
            mode: self.mode,
            unigram_power: self.unigram_power,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Scorer {
    Attack(AttackParams),
    Baseline { model: BaselineModel },
}

/// One experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub preprocess: PreprocessParams,
    /// Snap locations to a grid of this many degrees.
    pub grid_deg: Option<f64>,
    /// Applied after pair sampling. Its seed is replaced by one derived from
    /// the master seed.
    pub defense: Option<ObfuscationSpec>,
    pub scorer: Scorer,
    /// Evaluate only pairs sharing exactly this many locations.
    pub common_locations: Option<usize>,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn attack(name: &str, params: AttackParams, seed: u64) -> Self {
        ExperimentConfig {
            name: name.to_string(),
            preprocess: PreprocessParams::default(),
            grid_deg: None,
            defense: None,
            scorer: Scorer::Attack(params),
            common_locations: None,
            seed,
        }
    }

    pub fn baseline(name: &str, model: BaselineModel, seed: u64) -> Self {
        ExperimentConfig {
            scorer: Scorer::Baseline { model },
            ..Self::attack(name, AttackParams::default(), seed)
        }
    }

    /// The configuration as compact JSON, without the name and seed.
    pub fn config_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("name");
            obj.remove("seed");
        }
        v.to_string()
    }
}

/// Seeds of every stage, derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StageSeeds {
    pub master: u64,
    pub pairs: u64,
    pub defense: u64,
    pub walks: u64,
    pub train: u64,
    pub scores: u64,
}

impl StageSeeds {
    pub fn new(master: u64) -> Self {
        StageSeeds {
            master,
            pairs: seed::derive(master, "pairs", &[]),
            defense: seed::derive(master, "defense", &[]),
            walks: seed::derive(master, "walks", &[]),
            train: seed::derive(master, "train", &[]),
            scores: seed::derive(master, "scores", &[]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub experiment: String,
    pub config_json: String,
    pub seed: u64,
    pub n_pairs: usize,
    pub auc: f64,
}

pub fn write_report_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let csv_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record(REPORT_HEADER.split(',')).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.experiment.clone(),
            r.config_json.clone(),
            r.seed.to_string(),
            r.n_pairs.to_string(),
            r.auc.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `user_a,user_b,label,score`, or with a leading `model` column when
/// `model` is given.
pub fn write_scores_csv(path: &Path, pairs: &LabeledPairSet, scores: &[f64], model: Option<&str>) -> Result<()> {
    if pairs.len() != scores.len() {
        return Err(Error::LengthMismatch {
            left: pairs.len(),
            right: scores.len(),
        });
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", if model.is_some() { BASELINE_SCORES_HEADER } else { SCORES_HEADER }).map_err(io)?;
    for (p, s) in pairs.pairs.iter().zip(scores) {
        if let Some(m) = model {
            write!(w, "{m},").map_err(io)?;
        }
        writeln!(w, "{},{},{},{}", p.a, p.b, u8::from(p.label), s).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Scores file contents.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPairs {
    pub pairs: LabeledPairSet,
    pub scores: Vec<f64>,
    /// Rows with a blank label, left out of `pairs`.
    pub unlabeled: usize,
}

/// Reads a file written by [`write_scores_csv`], with or without the model
/// column. Rows with a blank label are counted and skipped.
pub fn read_scores_csv(path: &Path) -> Result<ScoredPairs> {
    let (mut reader, skip) = csvio::open_any(path, &[SCORES_HEADER, BASELINE_SCORES_HEADER])?;
    let names = ["model", "user_a", "user_b", "label", "score"];
    let mut pairs = Vec::new();
    let mut scores = Vec::new();
    let mut unlabeled = 0;
    csvio::for_each_row(path, &mut reader, |line, record| {
        let f = &csvio::fields(path, line, record, &names[1 - skip..])?[skip..];
        let label = match f[2] {
            "" => {
                unlabeled += 1;
                return Ok(());
            }
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    field: "label".into(),
                    reason: format!("`{other}` is not 0 or 1"),
                })
            }
        };
        let score: f64 = csvio::parse(path, line, "score", f[3])?;
        pairs.push(LabeledPair::new(f[0], f[1], label));
        scores.push(score);
        Ok(())
    })?;
    Ok(ScoredPairs {
        pairs: LabeledPairSet { pairs, seed: 0 },
        scores,
        unlabeled,
    })
}

/// Everything one configuration produced.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub row: ReportRow,
    pub seeds: StageSeeds,
    pub pairs: LabeledPairSet,
    pub scores: Vec<f64>,
    pub roc: RocCurve,
    pub embedding: Option<EmbeddingMatrix>,
    /// Mean utility of the defended dataset, when a defense ran.
    pub utility: Option<f64>,
    /// Generalization recovery rate.
    pub recovery_rate: Option<f64>,
}

/// Inputs shared by every configuration of a sweep.
#[derive(Debug, Clone, Copy)]
pub struct ExperimentInputs<'a> {
    pub checkins: &'a CheckInDataset,
    pub social: &'a SocialGraph,
    pub meta: Option<&'a UserMeta>,
    /// Recovery knowledge for generalization. Defaults to location totals of
    /// the dataset being defended.
    pub popularity: Option<&'a PopularityTable>,
}

/// Preprocess, snap, sample pairs, defend, then score with the attack or a
/// baseline and compute the AUC.
pub fn run_one(inputs: &ExperimentInputs<'_>, cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let seeds = StageSeeds::new(cfg.seed);
    let mut ds = preprocess(inputs.checkins, inputs.meta, &cfg.preprocess)?;
    if let Some(deg) = cfg.grid_deg {
        ds = snap_to_grid(&ds, deg)?;
    }
    let mut pairs = sample_pairs(inputs.social, ds.users(), seeds.pairs)?;
    if let Some(k) = cfg.common_locations {
        pairs = stratify_by_common_locations(&pairs, &ds, k)
            .remove(&k)
            .expect("bucket k exists");
    }

    let (mut utility, mut recovery_rate) = (None, None);
    let attacked = match &cfg.defense {
        None => ds,
        Some(spec) => {
            let spec = ObfuscationSpec {
                seed: seeds.defense,
                ..*spec
            };
            let owned_pop;
            let pop = match inputs.popularity {
                Some(p) => p,
                None => {
                    owned_pop = PopularityTable::from_dataset(&ds);
                    &owned_pop
                }
            };
            let (defended, rate) = defense::obfuscate(&ds, &spec, pop)?;
            utility = Some(defense::utility(&ds, &defended)?.aggregate);
            recovery_rate = rate;
            defended
        }
    };

    let (scores, embedding) = match &cfg.scorer {
        Scorer::Attack(params) => {
            let graph = BipartiteGraph::build(&attacked)?;
            let corpus = generate_walks(&graph, params.walk_params(seeds.walks))?;
            let emb = train(&corpus, &params.train_config(seeds.train))?;
            (attack_scores(&pairs, &emb, params.measure, seeds.scores)?, Some(emb))
        }
        Scorer::Baseline { model } => (baseline_scores(&pairs, &attacked, *model, seeds.scores)?, None),
    };
    let labels = pairs.labels();
    let curve = roc(&scores, &labels)?;
    let row = ReportRow {
        experiment: cfg.name.clone(),
        config_json: cfg.config_json(),
        seed: cfg.seed,
        n_pairs: pairs.len(),
        auc: auc(&scores, &labels)?,
    };
    log::info!("{} seed={} auc={}", row.experiment, row.seed, row.auc);
    Ok(ExperimentOutcome {
        row,
        seeds,
        pairs,
        scores,
        roc: curve,
        embedding,
        utility,
        recovery_rate,
    })
}

/// Runs every configuration, in parallel, returning outcomes in input order.
pub fn run_experiment(inputs: &ExperimentInputs<'_>, configs: &[ExperimentConfig]) -> Result<Vec<ExperimentOutcome>> {
    configs.par_iter().map(|c| run_one(inputs, c)).collect()
}

/// Comparison used to sort report rows for display.
pub fn by_experiment(a: &ReportRow, b: &ReportRow) -> Ordering {
    a.experiment.cmp(&b.experiment).then(a.seed.cmp(&b.seed))
}
