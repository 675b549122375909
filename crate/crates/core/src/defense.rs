//! Obfuscation mechanisms, the popularity-based recovery adversary and the
//! Jensen-Shannon utility metric.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::alias::AliasTable;
use crate::csvio;
use crate::dataset::{grid_cell, grid_cell_center, CheckIn, CheckInDataset};
use crate::error::{Error, Result};
use crate::graph::{BipartiteGraph, NodeId};
use crate::seed;

pub const POPULARITY_HEADER: &str = "location_id,checkin_count";
pub const CONTAINMENT_HEADER: &str = "generalized_id,original_location_id";
/// Prefix of generalized location identifiers.
pub const GENERALIZED_PREFIX: &str = "gen:";
pub const DEFAULT_WALK_STEPS: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    Hiding,
    Replacement,
    Generalization,
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hiding" | "hide" => Ok(Mechanism::Hiding),
            "replacement" | "replace" => Ok(Mechanism::Replacement),
            "generalization" | "generalize" => Ok(Mechanism::Generalization),
            _ => Err(Error::invalid("mechanism", format!("unknown mechanism `{s}`"))),
        }
    }
}

/// Geographic generalization level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeoLevel {
    /// 0.01° cells
    Low,
    /// 0.1° cells
    High,
}

impl GeoLevel {
    pub fn cell_deg(self) -> f64 {
        match self {
            GeoLevel::Low => 0.01,
            GeoLevel::High => 0.1,
        }
    }
}

/// Semantic generalization level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SemLevel {
    /// Low-level category (`category_l2`).
    Low,
    /// High-level category (`category_l1`).
    High,
}

/// Parses the `lg-ls` / `lg-hs` / `hg-ls` / `hg-hs` shorthand.
pub fn parse_levels(s: &str) -> Result<(GeoLevel, SemLevel)> {
    let (g, m) = s
        .split_once('-')
        .ok_or_else(|| Error::invalid("levels", format!("`{s}` is not <lg|hg>-<ls|hs>")))?;
    let geo = match g {
        "lg" => GeoLevel::Low,
        "hg" => GeoLevel::High,
        _ => return Err(Error::invalid("levels", format!("bad geo level `{g}`"))),
    };
    let sem = match m {
        "ls" => SemLevel::Low,
        "hs" => SemLevel::High,
        _ => return Err(Error::invalid("levels", format!("bad semantic level `{m}`"))),
    };
    Ok((geo, sem))
}

pub fn levels_name(geo: GeoLevel, sem: SemLevel) -> &'static str {
    match (geo, sem) {
        (GeoLevel::Low, SemLevel::Low) => "lg-ls",
        (GeoLevel::Low, SemLevel::High) => "lg-hs",
        (GeoLevel::High, SemLevel::Low) => "hg-ls",
        (GeoLevel::High, SemLevel::High) => "hg-hs",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObfuscationSpec {
    pub mechanism: Mechanism,
    pub rho: f64,
    pub walk_steps: usize,
    pub geo_level: GeoLevel,
    pub sem_level: SemLevel,
    pub seed: u64,
}

impl ObfuscationSpec {
    pub fn hiding(rho: f64, seed: u64) -> Self {
        ObfuscationSpec {
            mechanism: Mechanism::Hiding,
            rho,
            walk_steps: DEFAULT_WALK_STEPS,
            geo_level: GeoLevel::Low,
            sem_level: SemLevel::Low,
            seed,
        }
    }

    pub fn replacement(rho: f64, walk_steps: usize, seed: u64) -> Self {
        ObfuscationSpec {
            mechanism: Mechanism::Replacement,
            walk_steps,
            ..Self::hiding(rho, seed)
        }
    }

    pub fn generalization(geo_level: GeoLevel, sem_level: SemLevel, seed: u64) -> Self {
        ObfuscationSpec {
            mechanism: Mechanism::Generalization,
            rho: 1.0,
            geo_level,
            sem_level,
            ..Self::hiding(1.0, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_rho(self.rho)?;
        if self.mechanism == Mechanism::Replacement {
            check_walk_steps(self.walk_steps)?;
        }
        Ok(())
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid("rho", format!("{rho} outside [0, 1]")));
    }
    Ok(())
}

fn check_walk_steps(steps: usize) -> Result<()> {
    if steps % 2 == 0 {
        return Err(Error::invalid(
            "walk_steps",
            format!("{steps} must be odd so the walk stops at a location"),
        ));
    }
    Ok(())
}

/// `round(rho * n)`, half-up.
pub fn obfuscated_count(rho: f64, n: usize) -> usize {
    ((rho * n as f64) + 0.5).floor() as usize
}

/// External per-location check-in counts. Unknown locations count as 1.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PopularityTable {
    counts: BTreeMap<String, u64>,
}

impl PopularityTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, location: &str, count: u64) {
        self.counts.insert(location.to_string(), count);
    }

    pub fn get(&self, location: &str) -> u64 {
        self.counts.get(location).copied().unwrap_or(1)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Uses each location's total check-ins in `ds`.
    pub fn from_dataset(ds: &CheckInDataset) -> Self {
        PopularityTable {
            counts: ds
                .locations()
                .iter()
                .map(|l| (l.clone(), ds.location_total(l)))
                .collect(),
        }
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csvio::open(path, POPULARITY_HEADER)?;
        let mut table = PopularityTable::new();
        csvio::for_each_row(path, &mut reader, |line, record| {
            let f = csvio::fields(path, line, record, &["location_id", "checkin_count"])?;
            let count: u64 = csvio::parse(path, line, "checkin_count", f[1])?;
            table.insert(f[0], count);
            Ok(())
        })?;
        Ok(table)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "{POPULARITY_HEADER}").map_err(io)?;
        for (l, c) in &self.counts {
            writeln!(w, "{l},{c}").map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Coordinates and categories of an original location.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationInfo {
    pub lat: f64,
    pub lon: f64,
    pub category_l1: String,
    pub category_l2: String,
}

/// Which original locations each generalized location covers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Containment {
    pub cells: BTreeMap<String, BTreeSet<String>>,
    pub originals: BTreeMap<String, LocationInfo>,
}

impl Containment {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "{CONTAINMENT_HEADER}").map_err(io)?;
        for (g, originals) in &self.cells {
            for o in originals {
                writeln!(w, "{g},{o}").map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }
}

/// Output of an obfuscation mechanism.
#[derive(Debug, Clone)]
pub struct ObfuscatedDataset {
    pub mechanism: Mechanism,
    pub dataset: CheckInDataset,
    /// True original location of every check-in in `dataset`, by position.
    /// Carried for metrics only.
    pub truth: Vec<String>,
    /// Present for generalization.
    pub containment: Option<Containment>,
}

/// Removes `round(rho * N)` check-ins chosen uniformly without replacement.
/// Users left without check-ins stay in the user set.
pub fn hide(ds: &CheckInDataset, rho: f64, seed: u64) -> Result<ObfuscatedDataset> {
    check_rho(rho)?;
    let n = ds.len();
    let m = obfuscated_count(rho, n);
    let mut rng = seed::stream(seed, "hide", &[]);
    let mut removed = vec![false; n];
    for i in index::sample(&mut rng, n, m) {
        removed[i] = true;
    }
    let kept: Vec<CheckIn> = ds
        .checkins()
        .iter()
        .zip(&removed)
        .filter(|(_, &r)| !r)
        .map(|(c, _)| c.clone())
        .collect();
    let truth = kept.iter().map(|c| c.location.clone()).collect();
    Ok(ObfuscatedDataset {
        mechanism: Mechanism::Hiding,
        dataset: CheckInDataset::new(kept, ds.users().iter().cloned())?,
        truth,
        containment: None,
    })
}

/// Replaces the location of `round(rho * N)` uniformly chosen check-ins with
/// the end of a `walk_steps`-move random walk from the check-in's user on the
/// original graph.
pub fn replace(ds: &CheckInDataset, rho: f64, walk_steps: usize, seed: u64) -> Result<ObfuscatedDataset> {
    check_rho(rho)?;
    check_walk_steps(walk_steps)?;
    let n = ds.len();
    let m = obfuscated_count(rho, n);
    let truth: Vec<String> = ds.checkins().iter().map(|c| c.location.clone()).collect();
    if m == 0 {
        return Ok(ObfuscatedDataset {
            mechanism: Mechanism::Replacement,
            dataset: ds.clone(),
            truth,
            containment: None,
        });
    }
    let graph = BipartiteGraph::build(ds)?;
    let mut select = seed::stream(seed, "replace-select", &[]);
    let mut chosen: Vec<usize> = index::sample(&mut select, n, m).into_vec();
    chosen.sort_unstable();

    let mut checkins = ds.checkins().to_vec();
    for i in chosen {
        let c = &mut checkins[i];
        let start = graph
            .index_of(&NodeId::user(c.user.as_str()))
            .ok_or_else(|| Error::UnknownUser(c.user.clone()))?;
        let mut rng = seed::stream(seed, "replace-walk", &[i as u64]);
        let end = graph.walk_from(start, walk_steps, &mut rng)?;
        let node = graph.node(end);
        debug_assert!(!node.is_user());
        let (lat, lon) = ds
            .location_coords(&node.id)
            .ok_or_else(|| Error::UnknownLocation(node.id.clone()))?;
        let (l1, l2) = ds.location_category(&node.id).expect("location has a category");
        c.location = node.id.clone();
        c.lat = lat;
        c.lon = lon;
        c.category_l1 = l1.to_string();
        c.category_l2 = l2.to_string();
    }
    Ok(ObfuscatedDataset {
        mechanism: Mechanism::Replacement,
        dataset: CheckInDataset::new(checkins, ds.users().iter().cloned())?,
        truth,
        containment: None,
    })
}

/// Generalized identifier of a check-in: its grid cell plus its category at
/// the chosen level.
pub fn generalized_id(c: &CheckIn, geo: GeoLevel, sem: SemLevel) -> (String, (f64, f64), String) {
    let cell_deg = geo.cell_deg();
    let cell = grid_cell(c.lat, c.lon, cell_deg);
    let category = match sem {
        SemLevel::Low => &c.category_l2,
        SemLevel::High => &c.category_l1,
    };
    (
        format!("{GENERALIZED_PREFIX}{cell_deg}:{}:{}:{category}", cell.0, cell.1),
        grid_cell_center(cell, cell_deg),
        category.clone(),
    )
}

/// Coarsens every check-in's location to a (grid cell, category) pair and
/// records which originals each generalized location covers.
pub fn generalize(ds: &CheckInDataset, geo: GeoLevel, sem: SemLevel) -> Result<ObfuscatedDataset> {
    let mut containment = Containment::default();
    let mut checkins = Vec::with_capacity(ds.len());
    let mut truth = Vec::with_capacity(ds.len());
    for (i, c) in ds.checkins().iter().enumerate() {
        if c.category_l1.is_empty() || c.category_l2.is_empty() {
            return Err(Error::invalid("category", format!("check-in {i} has no category")));
        }
        let (id, (lat, lon), category) = generalized_id(c, geo, sem);
        containment
            .cells
            .entry(id.clone())
            .or_default()
            .insert(c.location.clone());
        if !containment.originals.contains_key(&c.location) {
            let (lat, lon) = ds.location_coords(&c.location).unwrap_or((c.lat, c.lon));
            let (l1, l2) = ds
                .location_category(&c.location)
                .unwrap_or((&c.category_l1, &c.category_l2));
            containment.originals.insert(
                c.location.clone(),
                LocationInfo {
                    lat,
                    lon,
                    category_l1: l1.to_string(),
                    category_l2: l2.to_string(),
                },
            );
        }
        let (l1, l2) = match sem {
            SemLevel::Low => (c.category_l1.clone(), c.category_l2.clone()),
            SemLevel::High => (category.clone(), category),
        };
        truth.push(c.location.clone());
        checkins.push(CheckIn {
            user: c.user.clone(),
            time: c.time,
            lat: lat.clamp(-90.0, 90.0),
            lon: lon.clamp(-180.0, 180.0),
            location: id,
            category_l1: l1,
            category_l2: l2,
        });
    }
    Ok(ObfuscatedDataset {
        mechanism: Mechanism::Generalization,
        dataset: CheckInDataset::new(checkins, ds.users().iter().cloned())?,
        truth,
        containment: Some(containment),
    })
}

/// Maps each generalized check-in back to an original location sampled in
/// proportion to popularity inside its generalized location. Returns the
/// recovered dataset and the fraction of check-ins recovered correctly.
pub fn recover(gen: &ObfuscatedDataset, pop: &PopularityTable, seed: u64) -> Result<(CheckInDataset, f64)> {
    let containment = gen
        .containment
        .as_ref()
        .ok_or_else(|| Error::invalid("containment", "dataset was not generalized"))?;
    let mut tables: HashMap<&str, (Vec<&String>, AliasTable)> = HashMap::new();
    for (cell, originals) in &containment.cells {
        if originals.is_empty() {
            return Err(Error::EmptyCell(cell.clone()));
        }
        let candidates: Vec<&String> = originals.iter().collect();
        let weights: Vec<f64> = candidates.iter().map(|l| pop.get(l) as f64).collect();
        let table = if weights.iter().all(|&w| w == 0.0) {
            AliasTable::new(&vec![1.0; candidates.len()])?
        } else {
            // zero-popularity originals are never drawn
            let w: Vec<f64> = weights.iter().map(|&w| if w == 0.0 { f64::MIN_POSITIVE } else { w }).collect();
            AliasTable::new(&w)?
        };
        tables.insert(cell.as_str(), (candidates, table));
    }

    let mut rng = seed::stream(seed, "recover", &[]);
    let mut correct = 0usize;
    let mut checkins = Vec::with_capacity(gen.dataset.len());
    for (i, c) in gen.dataset.checkins().iter().enumerate() {
        let (candidates, table) = tables
            .get(c.location.as_str())
            .ok_or_else(|| Error::EmptyCell(c.location.clone()))?;
        let pick = candidates[table.sample(&mut rng)];
        if gen.truth.get(i) == Some(pick) {
            correct += 1;
        }
        let info = &containment.originals[pick];
        checkins.push(CheckIn {
            user: c.user.clone(),
            time: c.time,
            lat: info.lat,
            lon: info.lon,
            location: pick.clone(),
            category_l1: info.category_l1.clone(),
            category_l2: info.category_l2.clone(),
        });
    }
    let rate = if checkins.is_empty() {
        1.0
    } else {
        correct as f64 / checkins.len() as f64
    };
    Ok((CheckInDataset::new(checkins, gen.dataset.users().iter().cloned())?, rate))
}

/// Applies the mechanism in `spec`. Generalization is followed by recovery
/// with `pop` so the result lives in the original identifier space; the
/// recovery rate is returned alongside.
pub fn obfuscate(
    ds: &CheckInDataset,
    spec: &ObfuscationSpec,
    pop: &PopularityTable,
) -> Result<(CheckInDataset, Option<f64>)> {
    spec.validate()?;
    Ok(match spec.mechanism {
        Mechanism::Hiding => (hide(ds, spec.rho, spec.seed)?.dataset, None),
        Mechanism::Replacement => (replace(ds, spec.rho, spec.walk_steps, spec.seed)?.dataset, None),
        Mechanism::Generalization => {
            let gen = generalize(ds, spec.geo_level, spec.sem_level)?;
            let (recovered, rate) = recover(&gen, pop, spec.seed)?;
            (recovered, Some(rate))
        }
    })
}

/// A user's check-in distribution over locations.
#[derive(Debug, Clone, PartialEq)]
pub struct UserDistribution {
    pub user: String,
    pub mass: BTreeMap<String, f64>,
}

/// `P(l) = |tau(u, l)| / |tau(u)|`; empty when the user has no check-ins.
pub fn user_distribution(ds: &CheckInDataset, u: &str) -> Result<UserDistribution> {
    let locs = ds
        .user_locations(u)
        .ok_or_else(|| Error::UnknownUser(u.to_string()))?;
    let total = ds.user_total(u).unwrap_or(0) as f64;
    let mass = locs
        .iter()
        .map(|(l, &c)| (l.clone(), c as f64 / total))
        .collect();
    Ok(UserDistribution {
        user: u.to_string(),
        mass,
    })
}

/// Jensen-Shannon divergence in bits, in `[0, 1]`. An empty distribution
/// against a non-empty one scores 1; two empty ones score 0.
pub fn js_divergence(p: &BTreeMap<String, f64>, q: &BTreeMap<String, f64>) -> f64 {
    match (p.is_empty(), q.is_empty()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return 1.0,
        _ => {}
    }
    let support: BTreeSet<&String> = p.keys().chain(q.keys()).collect();
    // a * log2(a / m) with m = (a + b) / 2, exact when b is zero
    let term = |a: f64, b: f64| if a > 0.0 { a * (2.0 * a / (a + b)).log2() } else { 0.0 };
    let mut sum = 0.0;
    for l in support {
        let a = p.get(l).copied().unwrap_or(0.0);
        let b = q.get(l).copied().unwrap_or(0.0);
        sum += 0.5 * term(a, b) + 0.5 * term(b, a);
    }
    sum.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserUtility {
    /// Utility loss.
    pub phi: f64,
    /// Utility, `1 - phi`.
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtilityReport {
    pub per_user: BTreeMap<String, UserUtility>,
    /// Mean of psi over users.
    pub aggregate: f64,
}

impl UtilityReport {
    /// Writes `user_id,phi,psi` rows and a final `aggregate` line.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "user_id,phi,psi").map_err(io)?;
        for (u, x) in &self.per_user {
            writeln!(w, "{u},{},{}", x.phi, x.psi).map_err(io)?;
        }
        writeln!(w, "aggregate,{},{}", 1.0 - self.aggregate, self.aggregate).map_err(io)?;
        w.flush().map_err(io)
    }
}

impl fmt::Display for UtilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "utility={} users={}", self.aggregate, self.per_user.len())
    }
}

/// Per-user utility of `obfuscated` relative to `original`, and its mean.
pub fn utility(original: &CheckInDataset, obfuscated: &CheckInDataset) -> Result<UtilityReport> {
    if original.users() != obfuscated.users() {
        let only_o = original.users().difference(obfuscated.users()).count();
        let only_b = obfuscated.users().difference(original.users()).count();
        return Err(Error::UserSetMismatch(format!(
            "{only_o} users only in the original, {only_b} only in the obfuscated dataset"
        )));
    }
    let mut per_user = BTreeMap::new();
    for u in original.users() {
        let p = user_distribution(original, u)?;
        let q = user_distribution(obfuscated, u)?;
        let phi = js_divergence(&p.mass, &q.mass);
        per_user.insert(u.clone(), UserUtility { phi, psi: 1.0 - phi });
    }
    let aggregate = if per_user.is_empty() {
        1.0
    } else {
        per_user.values().map(|x| x.psi).sum::<f64>() / per_user.len() as f64
    };
    Ok(UtilityReport { per_user, aggregate })
}
