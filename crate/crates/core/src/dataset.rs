//! Check-in datasets, social ground truth, preprocessing and a synthetic
//! generator.
//!
//! All indexes on [`CheckInDataset`] are derived from the check-in list and
//! are rebuilt by every constructor; they are never edited in place.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::alias::AliasTable;
use crate::csvio;
use crate::error::{Error, Result};
use crate::seed;

pub const CHECKIN_HEADER: &str = "user_id,timestamp,lat,lon,location_id,category_l1,category_l2";
pub const SOCIAL_HEADER: &str = "user_a,user_b";
pub const META_HEADER: &str = "user_id,follower_count";

/// Prefix of grid-cell location identifiers.
pub const GRID_PREFIX: &str = "g:";

#[derive(Debug, Clone, PartialEq)]
pub struct CheckIn {
    pub user: String,
    pub time: i64,
    pub lat: f64,
    pub lon: f64,
    pub location: String,
    pub category_l1: String,
    pub category_l2: String,
}

/// A check-in corpus with per-user and per-location indexes.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckInDataset {
    checkins: Vec<CheckIn>,
    users: BTreeSet<String>,
    locations: BTreeSet<String>,
    /// u -> (l -> |tau(u, l)|); the key set of the inner map is omega(u).
    user_locations: BTreeMap<String, BTreeMap<String, u64>>,
    /// u -> |tau(u)|
    user_totals: BTreeMap<String, u64>,
    /// l -> (u -> |tau(u, l)|)
    location_visitors: BTreeMap<String, BTreeMap<String, u64>>,
    location_coords: BTreeMap<String, (f64, f64)>,
    location_category: BTreeMap<String, (String, String)>,
}

fn validate_checkin(c: &CheckIn) -> Result<()> {
    if !(-90.0..=90.0).contains(&c.lat) {
        return Err(Error::invalid("lat", format!("{} outside [-90, 90]", c.lat)));
    }
    if !(-180.0..=180.0).contains(&c.lon) {
        return Err(Error::invalid("lon", format!("{} outside [-180, 180]", c.lon)));
    }
    if c.location.is_empty() {
        return Err(Error::invalid("location_id", "empty"));
    }
    if c.user.is_empty() {
        return Err(Error::invalid("user_id", "empty"));
    }
    Ok(())
}

impl CheckInDataset {
    /// Builds a dataset from check-ins. The user set is every check-in author
    /// plus `extra_users`, so users whose check-ins were all removed can stay
    /// in U.
    pub fn new<I>(checkins: Vec<CheckIn>, extra_users: I) -> Result<Self>
    where
        I: IntoIterator<Item = String>,
    {
        let mut users: BTreeSet<String> = extra_users.into_iter().collect();
        let mut locations = BTreeSet::new();
        let mut user_locations: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
        let mut user_totals: BTreeMap<String, u64> = BTreeMap::new();
        let mut location_visitors: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
        let mut location_coords = BTreeMap::new();
        let mut location_category = BTreeMap::new();
        let mut l2_parent: BTreeMap<&str, &str> = BTreeMap::new();

        for c in &checkins {
            validate_checkin(c)?;
            match l2_parent.get(c.category_l2.as_str()) {
                Some(&parent) if parent != c.category_l1 => {
                    return Err(Error::CategoryConflict {
                        l2: c.category_l2.clone(),
                        first: parent.to_string(),
                        second: c.category_l1.clone(),
                    });
                }
                Some(_) => {}
                None => {
                    l2_parent.insert(&c.category_l2, &c.category_l1);
                }
            }
            users.insert(c.user.clone());
            locations.insert(c.location.clone());
            *user_locations
                .entry(c.user.clone())
                .or_default()
                .entry(c.location.clone())
                .or_insert(0) += 1;
            *user_totals.entry(c.user.clone()).or_insert(0) += 1;
            *location_visitors
                .entry(c.location.clone())
                .or_default()
                .entry(c.user.clone())
                .or_insert(0) += 1;
            location_coords
                .entry(c.location.clone())
                .or_insert((c.lat, c.lon));
            location_category
                .entry(c.location.clone())
                .or_insert_with(|| (c.category_l1.clone(), c.category_l2.clone()));
        }
        for u in &users {
            user_totals.entry(u.clone()).or_insert(0);
            user_locations.entry(u.clone()).or_default();
        }

        Ok(CheckInDataset {
            checkins,
            users,
            locations,
            user_locations,
            user_totals,
            location_visitors,
            location_coords,
            location_category,
        })
    }

    pub fn from_checkins(checkins: Vec<CheckIn>) -> Result<Self> {
        Self::new(checkins, std::iter::empty())
    }

    pub fn empty() -> Self {
        Self::from_checkins(Vec::new()).expect("empty dataset is valid")
    }

    /// Rebuilds every index from the check-in list and the user set.
    pub fn rebuilt(&self) -> Result<Self> {
        Self::new(self.checkins.clone(), self.users.iter().cloned())
    }

    pub fn checkins(&self) -> &[CheckIn] {
        &self.checkins
    }

    pub fn len(&self) -> usize {
        self.checkins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checkins.is_empty()
    }

    pub fn users(&self) -> &BTreeSet<String> {
        &self.users
    }

    pub fn locations(&self) -> &BTreeSet<String> {
        &self.locations
    }

    pub fn contains_user(&self, u: &str) -> bool {
        self.users.contains(u)
    }

    /// |tau(u, l)|; zero when either is unknown.
    pub fn count(&self, u: &str, l: &str) -> u64 {
        self.user_locations
            .get(u)
            .and_then(|m| m.get(l))
            .copied()
            .unwrap_or(0)
    }

    /// |tau(u)|
    pub fn user_total(&self, u: &str) -> Option<u64> {
        self.user_totals.get(u).copied()
    }

    /// omega(u) with per-location counts.
    pub fn user_locations(&self, u: &str) -> Option<&BTreeMap<String, u64>> {
        self.user_locations.get(u)
    }

    /// Visitors of `l` with their check-in counts at `l`.
    pub fn location_visitors(&self, l: &str) -> Option<&BTreeMap<String, u64>> {
        self.location_visitors.get(l)
    }

    /// Total check-ins at `l`.
    pub fn location_total(&self, l: &str) -> u64 {
        self.location_visitors
            .get(l)
            .map(|m| m.values().sum())
            .unwrap_or(0)
    }

    pub fn location_coords(&self, l: &str) -> Option<(f64, f64)> {
        self.location_coords.get(l).copied()
    }

    pub fn location_category(&self, l: &str) -> Option<(&str, &str)> {
        self.location_category
            .get(l)
            .map(|(a, b)| (a.as_str(), b.as_str()))
    }

    /// |omega(u) ∩ omega(v)|
    pub fn common_location_count(&self, u: &str, v: &str) -> usize {
        match (self.user_locations.get(u), self.user_locations.get(v)) {
            (Some(a), Some(b)) => {
                let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
                small.keys().filter(|l| large.contains_key(*l)).count()
            }
            _ => 0,
        }
    }

    /// Keeps only the check-ins and users of `keep`.
    pub fn restrict_users(&self, keep: &BTreeSet<String>) -> Result<Self> {
        let checkins = self
            .checkins
            .iter()
            .filter(|c| keep.contains(&c.user))
            .cloned()
            .collect();
        let users = self.users.iter().filter(|u| keep.contains(*u)).cloned();
        Self::new(checkins, users)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_checkins_csv(path, &self.checkins)
    }
}

/// Fields of a data row, checking that identifier columns hold identifiers.
fn split_fields<'r>(
    path: &Path,
    line_no: usize,
    record: &'r csv::StringRecord,
    names: &[&str],
) -> Result<Vec<&'r str>> {
    let fields = csvio::fields(path, line_no, record, names)?;
    for (value, name) in fields.iter().zip(names) {
        if !is_identifier(value) && !matches!(*name, "lat" | "lon" | "timestamp" | "follower_count") {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                field: name.to_string(),
                reason: format!("`{value}` is not a valid identifier"),
            });
        }
    }
    Ok(fields)
}

/// Identifiers match `[A-Za-z0-9_:.-]+`.
pub fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b':' | b'.' | b'-'))
}

/// Reads a check-in CSV. Row order is preserved.
pub fn ingest_checkins(path: &Path) -> Result<CheckInDataset> {
    const NAMES: [&str; 7] = [
        "user_id",
        "timestamp",
        "lat",
        "lon",
        "location_id",
        "category_l1",
        "category_l2",
    ];
    let mut reader = csvio::open(path, CHECKIN_HEADER)?;
    let mut checkins = Vec::new();
    csvio::for_each_row(path, &mut reader, |line_no, record| {
        let f = split_fields(path, line_no, record, &NAMES)?;
        let c = CheckIn {
            user: f[0].to_string(),
            time: csvio::parse(path, line_no, "timestamp", f[1])?,
            lat: csvio::parse(path, line_no, "lat", f[2])?,
            lon: csvio::parse(path, line_no, "lon", f[3])?,
            location: f[4].to_string(),
            category_l1: f[5].to_string(),
            category_l2: f[6].to_string(),
        };
        validate_checkin(&c).map_err(|e| {
            let field = match &e {
                Error::InvalidParameter { name, .. } => name.to_string(),
                _ => "row".to_string(),
            };
            Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                field,
                reason: e.to_string(),
            }
        })?;
        checkins.push(c);
        Ok(())
    })?;
    CheckInDataset::from_checkins(checkins)
}

pub fn write_checkins_csv(path: &Path, checkins: &[CheckIn]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{CHECKIN_HEADER}").map_err(io)?;
    for c in checkins {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            c.user, c.time, c.lat, c.lon, c.location, c.category_l1, c.category_l2
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Undirected friendship edges. Each pair is stored once with the smaller
/// identifier first.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SocialGraph {
    edges: BTreeSet<(String, String)>,
}

impl SocialGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, a: &str, b: &str) -> Result<bool> {
        if a == b {
            return Err(Error::SelfLoop(a.to_string()));
        }
        let key = if a < b {
            (a.to_string(), b.to_string())
        } else {
            (b.to_string(), a.to_string())
        };
        Ok(self.edges.insert(key))
    }

    pub fn contains(&self, a: &str, b: &str) -> bool {
        let (x, y) = if a < b { (a, b) } else { (b, a) };
        self.edges.contains(&(x.to_string(), y.to_string()))
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Edges with both endpoints in `users`.
    pub fn restricted_to(&self, users: &BTreeSet<String>) -> SocialGraph {
        SocialGraph {
            edges: self
                .edges
                .iter()
                .filter(|(a, b)| users.contains(a) && users.contains(b))
                .cloned()
                .collect(),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "{SOCIAL_HEADER}").map_err(io)?;
        for (a, b) in self.edges() {
            writeln!(w, "{a},{b}").map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Result of reading a social-link file.
#[derive(Debug, Clone)]
pub struct LoadedLinks {
    pub graph: SocialGraph,
    /// Rows dropped because an endpoint is not in the user set.
    pub skipped_unknown: usize,
}

/// Reads a social-link CSV, keeping pairs whose endpoints are both in `users`.
pub fn ingest_social_links(path: &Path, users: &BTreeSet<String>) -> Result<LoadedLinks> {
    let mut reader = csvio::open(path, SOCIAL_HEADER)?;
    let mut graph = SocialGraph::new();
    let mut skipped_unknown = 0;
    csvio::for_each_row(path, &mut reader, |line_no, record| {
        let f = split_fields(path, line_no, record, &["user_a", "user_b"])?;
        if f[0] == f[1] {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                field: "user_b".into(),
                reason: Error::SelfLoop(f[0].to_string()).to_string(),
            });
        }
        if !(users.contains(f[0]) && users.contains(f[1])) {
            skipped_unknown += 1;
            return Ok(());
        }
        graph.add(f[0], f[1])?;
        Ok(())
    })?;
    if skipped_unknown > 0 {
        log::warn!("{}: skipped {skipped_unknown} links with unknown users", path.display());
    }
    Ok(LoadedLinks {
        graph,
        skipped_unknown,
    })
}

/// Optional follower-count side table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UserMeta {
    followers: BTreeMap<String, u64>,
}

impl UserMeta {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, user: &str, follower_count: u64) -> Result<()> {
        if self.followers.insert(user.to_string(), follower_count).is_some() {
            return Err(Error::invalid("user_id", format!("duplicate meta record for `{user}`")));
        }
        Ok(())
    }

    pub fn get(&self, user: &str) -> Option<u64> {
        self.followers.get(user).copied()
    }

    pub fn len(&self) -> usize {
        self.followers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.followers.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.followers.iter().map(|(u, c)| (u.as_str(), *c))
    }
}

pub fn ingest_user_meta(path: &Path) -> Result<UserMeta> {
    let mut reader = csvio::open(path, META_HEADER)?;
    let mut meta = UserMeta::new();
    csvio::for_each_row(path, &mut reader, |line_no, record| {
        let f = split_fields(path, line_no, record, &["user_id", "follower_count"])?;
        let count: u64 = csvio::parse(path, line_no, "follower_count", f[1])?;
        meta.insert(f[0], count).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            field: "user_id".into(),
            reason: e.to_string(),
        })
    })?;
    Ok(meta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessParams {
    pub min_checkins: u64,
    pub min_distinct_locations: usize,
    pub percentile_low: f64,
    pub percentile_high: f64,
}

impl Default for PreprocessParams {
    fn default() -> Self {
        PreprocessParams {
            min_checkins: 20,
            min_distinct_locations: 2,
            percentile_low: 10.0,
            percentile_high: 90.0,
        }
    }
}

/// Nearest-rank percentile of an ascending slice: the value at rank
/// `ceil(p/100 * n)` (1-based, at least 1).
pub fn nearest_rank(sorted: &[u64], p: f64) -> Option<u64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Removes users with too few distinct locations, follower-count outliers
/// (when `meta` is given) and users with too few check-ins, in that order.
///
/// Percentile thresholds are computed over the whole meta table. A user is
/// kept when `low < followers <= high`; users absent from the table are kept.
/// A low percentile of 0 disables the low cut.
pub fn preprocess(
    ds: &CheckInDataset,
    meta: Option<&UserMeta>,
    params: &PreprocessParams,
) -> Result<CheckInDataset> {
    if params.min_distinct_locations < 1 {
        return Err(Error::invalid("min_distinct_locations", "must be >= 1"));
    }
    let (lo, hi) = (params.percentile_low, params.percentile_high);
    if !(0.0 <= lo && lo < hi && hi <= 100.0) {
        return Err(Error::invalid(
            "percentile_low/percentile_high",
            format!("need 0 <= low < high <= 100, got {lo}, {hi}"),
        ));
    }

    let mut keep: BTreeSet<String> = ds
        .users()
        .iter()
        .filter(|u| {
            ds.user_locations(u).map_or(0, |m| m.len()) >= params.min_distinct_locations
        })
        .cloned()
        .collect();

    if let Some(meta) = meta {
        let mut counts: Vec<u64> = meta.iter().map(|(_, c)| c).collect();
        counts.sort_unstable();
        let low_cut = if lo > 0.0 { nearest_rank(&counts, lo) } else { None };
        let high_cut = nearest_rank(&counts, hi);
        keep.retain(|u| match meta.get(u) {
            None => true,
            Some(c) => low_cut.map_or(true, |l| c > l) && high_cut.map_or(true, |h| c <= h),
        });
    }

    keep.retain(|u| ds.user_total(u).unwrap_or(0) >= params.min_checkins);
    ds.restrict_users(&keep)
}

/// Cell indices of a coordinate on a `cell_deg` grid.
pub fn grid_cell(lat: f64, lon: f64, cell_deg: f64) -> (i64, i64) {
    ((lat / cell_deg).floor() as i64, (lon / cell_deg).floor() as i64)
}

pub fn grid_cell_center(cell: (i64, i64), cell_deg: f64) -> (f64, f64) {
    (
        (cell.0 as f64 + 0.5) * cell_deg,
        (cell.1 as f64 + 0.5) * cell_deg,
    )
}

/// Replaces every location by the `g:<lat-index>:<lon-index>` grid cell that
/// contains it; the cell center becomes the location's coordinates.
pub fn snap_to_grid(ds: &CheckInDataset, cell_deg: f64) -> Result<CheckInDataset> {
    if !(cell_deg.is_finite() && cell_deg > 0.0) {
        return Err(Error::invalid("cell_deg", format!("{cell_deg} must be > 0")));
    }
    let checkins = ds
        .checkins()
        .iter()
        .map(|c| {
            let cell = grid_cell(c.lat, c.lon, cell_deg);
            let (lat, lon) = grid_cell_center(cell, cell_deg);
            CheckIn {
                location: format!("{GRID_PREFIX}{}:{}", cell.0, cell.1),
                lat: lat.clamp(-90.0, 90.0),
                lon: lon.clamp(-180.0, 180.0),
                ..c.clone()
            }
        })
        .collect();
    CheckInDataset::new(checkins, ds.users().iter().cloned())
}

/// High-level categories of the synthetic taxonomy.
pub const SYNTH_CATEGORIES_L1: [&str; 9] = [
    "arts",
    "college",
    "food",
    "nightlife",
    "outdoors",
    "professional",
    "residence",
    "shops",
    "travel",
];

/// Low-level categories per high-level category in the synthetic taxonomy.
pub const SYNTH_L2_PER_L1: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub n_users: usize,
    pub n_locations: usize,
    pub n_communities: usize,
    pub checkins_per_user: usize,
    pub intra_friend_prob: f64,
    pub noise_prob: f64,
    pub seed: u64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            n_users: 500,
            n_locations: 200,
            n_communities: 20,
            checkins_per_user: 40,
            intra_friend_prob: 0.3,
            noise_prob: 0.2,
            seed: 0,
        }
    }
}

impl SyntheticParams {
    fn validate(&self) -> Result<()> {
        if self.n_communities == 0 {
            return Err(Error::invalid("n_communities", "must be >= 1"));
        }
        if self.n_communities > self.n_users {
            return Err(Error::invalid("n_communities", "exceeds n_users"));
        }
        if self.n_communities > self.n_locations {
            return Err(Error::invalid("n_communities", "exceeds n_locations"));
        }
        for (name, p) in [
            ("intra_friend_prob", self.intra_friend_prob),
            ("noise_prob", self.noise_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(name, format!("{p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

pub fn synthetic_user_id(i: usize) -> String {
    format!("u{i:05}")
}

pub fn synthetic_location_id(j: usize) -> String {
    format!("p{j:05}")
}

/// Community of synthetic user `i` (round-robin assignment).
pub fn synthetic_community(i: usize, n_communities: usize) -> usize {
    i % n_communities
}

/// Generates a community-structured check-in dataset and its friendships.
///
/// Layout: user `i` belongs to community `i % C`. Community `c` owns the
/// location block `[c*B, (c+1)*B)` with `B = n_locations / C`; locations past
/// `C*B` belong to no block and are spread over the whole map. Block locations
/// are scattered within ±0.012° of a community center, centers sit on a 0.06°
/// lattice anchored at (40.55, -74.10). A non-noise check-in of community `c`
/// picks the location at distance rank `r` from the center (ties by index)
/// with weight `1/(r+1)`, so neighbouring communities overlap.
/// Location `j` has category `l1 = j % 9`, `l2 = (j / 9) % 3` under it.
///
/// Random streams (all `ChaCha8Rng`, see [`seed::stream`]):
/// * `synth-coords`: two `f64` per location, in location order.
/// * `synth-friends`: one `f64` per intra-community pair, communities in
///   order, pairs `(i, j)` with `i < j` in ascending order.
/// * `synth-checkins` keyed by user index: per check-in one `f64` noise coin,
///   then either one `gen_range(0..n_locations)` or one alias draw over the
///   community's distance ranking (one integer and one `f64`).
pub fn generate_synthetic(p: &SyntheticParams) -> Result<(CheckInDataset, SocialGraph)> {
    p.validate()?;
    let n_c = p.n_communities;
    let block = p.n_locations / n_c;
    let cols = (n_c as f64).sqrt().ceil() as usize;

    let mut coords_rng = seed::stream(p.seed, "synth-coords", &[]);
    let coords: Vec<(f64, f64)> = (0..p.n_locations)
        .map(|j| {
            let (dlat, dlon): (f64, f64) = (coords_rng.gen(), coords_rng.gen());
            if j < n_c * block {
                let c = j / block;
                let (row, col) = (c / cols, c % cols);
                let lat = 40.55 + 0.06 * row as f64 + 0.03 + (dlat - 0.5) * 0.024;
                let lon = -74.10 + 0.06 * col as f64 + 0.03 + (dlon - 0.5) * 0.024;
                (lat, lon)
            } else {
                let span = 0.06 * cols as f64;
                (40.55 + dlat * span, -74.10 + dlon * span)
            }
        })
        .collect();

    let category = |j: usize| {
        let l1 = SYNTH_CATEGORIES_L1[j % SYNTH_CATEGORIES_L1.len()];
        let l2 = (j / SYNTH_CATEGORIES_L1.len()) % SYNTH_L2_PER_L1;
        (l1.to_string(), format!("{l1}_{l2}"))
    };

    let members: Vec<Vec<usize>> = (0..n_c)
        .map(|c| (0..p.n_users).filter(|&i| synthetic_community(i, n_c) == c).collect())
        .collect();

    let mut social = SocialGraph::new();
    let mut friend_rng = seed::stream(p.seed, "synth-friends", &[]);
    for group in &members {
        for (a, &i) in group.iter().enumerate() {
            for &j in &group[a + 1..] {
                let coin: f64 = friend_rng.gen();
                if coin < p.intra_friend_prob {
                    social.add(&synthetic_user_id(i), &synthetic_user_id(j))?;
                }
            }
        }
    }

    // community c ranks every location by distance from its center
    let centers: Vec<(f64, f64)> = (0..n_c)
        .map(|c| {
            let (row, col) = (c / cols, c % cols);
            (40.55 + 0.06 * row as f64 + 0.03, -74.10 + 0.06 * col as f64 + 0.03)
        })
        .collect();
    let mut community_order: Vec<Vec<usize>> = Vec::with_capacity(n_c);
    let mut community_tables = Vec::with_capacity(n_c);
    for &(clat, clon) in &centers {
        let d2 = |j: usize| (coords[j].0 - clat).powi(2) + (coords[j].1 - clon).powi(2);
        let mut order: Vec<usize> = (0..p.n_locations).collect();
        order.sort_by(|&a, &b| d2(a).total_cmp(&d2(b)).then(a.cmp(&b)));
        let weights: Vec<f64> = (0..order.len()).map(|r| 1.0 / (r as f64 + 1.0)).collect();
        community_tables.push(AliasTable::new(&weights)?);
        community_order.push(order);
    }
    let location_ids: Vec<String> = (0..p.n_locations).map(synthetic_location_id).collect();
    let categories: Vec<(String, String)> = (0..p.n_locations).map(category).collect();

    const EPOCH_2016: i64 = 1_451_606_400;
    let mut checkins = Vec::with_capacity(p.n_users * p.checkins_per_user);
    for i in 0..p.n_users {
        let c = synthetic_community(i, n_c);
        let user = synthetic_user_id(i);
        let mut rng = seed::stream(p.seed, "synth-checkins", &[i as u64]);
        for k in 0..p.checkins_per_user {
            let coin: f64 = rng.gen();
            let j = if coin < p.noise_prob {
                rng.gen_range(0..p.n_locations)
            } else {
                community_order[c][community_tables[c].sample(&mut rng)]
            };
            let (lat, lon) = coords[j];
            let (l1, l2) = &categories[j];
            checkins.push(CheckIn {
                user: user.clone(),
                time: EPOCH_2016 + ((i * p.checkins_per_user + k) as i64) * 900,
                lat,
                lon,
                location: location_ids[j].clone(),
                category_l1: l1.clone(),
                category_l2: l2.clone(),
            });
        }
    }
    let users = (0..p.n_users).map(synthetic_user_id);
    Ok((CheckInDataset::new(checkins, users)?, social))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn ci(user: &str, loc: &str, lat: f64, lon: f64) -> CheckIn {
        CheckIn {
            user: user.into(),
            time: 0,
            lat,
            lon,
            location: loc.into(),
            category_l1: "arts".into(),
            category_l2: "museum".into(),
        }
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn ingest_empty_file() {
        let f = write_tmp(&format!("{CHECKIN_HEADER}\n"));
        let ds = ingest_checkins(f.path()).unwrap();
        assert!(ds.is_empty());
        assert!(ds.users().is_empty());
        assert!(ds.locations().is_empty());
    }

    #[test]
    fn ingest_singleton() {
        let f = write_tmp(&format!("{CHECKIN_HEADER}\nu1,0,40.76,-73.97,L1,arts,museum\n"));
        let ds = ingest_checkins(f.path()).unwrap();
        assert_eq!(ds.user_total("u1"), Some(1));
        let omega: Vec<&String> = ds.user_locations("u1").unwrap().keys().collect();
        assert_eq!(omega, vec!["L1"]);
    }

    #[test]
    fn ingest_counts() {
        let f = write_tmp(&format!(
            "{CHECKIN_HEADER}\nu1,0,40.76,-73.97,L1,arts,museum\nu1,5,40.76,-73.97,L1,arts,museum\nu1,9,40.70,-73.90,L2,food,pizza\n"
        ));
        let ds = ingest_checkins(f.path()).unwrap();
        assert_eq!(ds.count("u1", "L1"), 2);
        assert_eq!(ds.user_total("u1"), Some(3));
        assert_eq!(ds.user_locations("u1").unwrap().len(), 2);
        assert_eq!(ds.checkins()[2].location, "L2");
    }

    #[test]
    fn ingest_errors_name_line_and_field() {
        let f = write_tmp(&format!("{CHECKIN_HEADER}\nu1,0,40.76,-73.97,L1,arts,museum\nu2,x,1,1,L1,arts,museum\n"));
        match ingest_checkins(f.path()) {
            Err(Error::Parse { line, field, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(field, "timestamp");
            }
            other => panic!("unexpected {other:?}"),
        }
        let f = write_tmp(&format!("{CHECKIN_HEADER}\nu1,0,95.0,-73.97,L1,arts,museum\n"));
        match ingest_checkins(f.path()) {
            Err(Error::Parse { line, field, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(field, "lat");
            }
            other => panic!("unexpected {other:?}"),
        }
        let f = write_tmp(&format!("{CHECKIN_HEADER}\nu1,0,40,-73,L1,arts,museum\nu1,0,40,-73,L2,food,museum\n"));
        assert!(matches!(ingest_checkins(f.path()), Err(Error::CategoryConflict { .. })));
        let f = write_tmp("user,timestamp\n");
        assert!(matches!(ingest_checkins(f.path()), Err(Error::Header { .. })));
        let f = write_tmp(&format!("{CHECKIN_HEADER}\nu1,0,40,-73,L1,arts\n"));
        assert!(matches!(ingest_checkins(f.path()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn social_links_collapse_and_filter() {
        let users: BTreeSet<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let f = write_tmp(&format!("{SOCIAL_HEADER}\na,b\nb,a\n"));
        let links = ingest_social_links(f.path(), &users).unwrap();
        assert_eq!(links.graph.len(), 1);
        assert!(links.graph.contains("b", "a"));

        let f = write_tmp(&format!("{SOCIAL_HEADER}\na,a\n"));
        assert!(ingest_social_links(f.path(), &users).is_err());

        let ab: BTreeSet<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let f = write_tmp(&format!("{SOCIAL_HEADER}\na,b\na,c\n"));
        let links = ingest_social_links(f.path(), &ab).unwrap();
        assert_eq!(links.graph.edges().collect::<Vec<_>>(), vec![("a", "b")]);
        assert_eq!(links.skipped_unknown, 1);
    }

    #[test]
    fn preprocess_drops_single_location_users() {
        let mut cs: Vec<CheckIn> = (0..25).map(|_| ci("local", "L1", 1.0, 1.0)).collect();
        cs.extend((0..25).map(|k| ci("roamer", if k % 2 == 0 { "L1" } else { "L2" }, 1.0, 1.0)));
        let ds = CheckInDataset::from_checkins(cs).unwrap();
        let params = PreprocessParams {
            min_checkins: 20,
            min_distinct_locations: 2,
            percentile_low: 10.0,
            percentile_high: 90.0,
        };
        let out = preprocess(&ds, None, &params).unwrap();
        assert!(!out.contains_user("local"));
        assert!(out.contains_user("roamer"));
        assert_eq!(out.len(), 25);
    }

    #[test]
    fn preprocess_identity() {
        let cs = vec![ci("a", "L1", 1.0, 1.0), ci("b", "L2", 1.0, 1.0), ci("b", "L1", 1.0, 1.0)];
        let ds = CheckInDataset::from_checkins(cs).unwrap();
        let params = PreprocessParams {
            min_checkins: 0,
            min_distinct_locations: 1,
            percentile_low: 10.0,
            percentile_high: 90.0,
        };
        assert_eq!(preprocess(&ds, None, &params).unwrap(), ds);
    }

    #[test]
    fn preprocess_percentiles() {
        let mut cs = Vec::new();
        let mut meta = UserMeta::new();
        for k in 1..=10u64 {
            let u = format!("u{k:02}");
            cs.push(ci(&u, "L1", 1.0, 1.0));
            cs.push(ci(&u, "L2", 1.0, 1.0));
            meta.insert(&u, k).unwrap();
        }
        let ds = CheckInDataset::from_checkins(cs).unwrap();
        let params = PreprocessParams {
            min_checkins: 0,
            min_distinct_locations: 1,
            percentile_low: 10.0,
            percentile_high: 90.0,
        };
        let out = preprocess(&ds, Some(&meta), &params).unwrap();
        let kept: Vec<&str> = out.users().iter().map(String::as_str).collect();
        assert_eq!(kept, vec!["u02", "u03", "u04", "u05", "u06", "u07", "u08", "u09"]);
        assert_eq!(preprocess(&out, Some(&meta), &params).unwrap(), out);
    }

    #[test]
    fn preprocess_rejects_bad_params() {
        let ds = CheckInDataset::empty();
        let mut p = PreprocessParams::default();
        p.min_distinct_locations = 0;
        assert!(preprocess(&ds, None, &p).is_err());
        let mut p = PreprocessParams::default();
        p.percentile_low = 90.0;
        p.percentile_high = 10.0;
        assert!(preprocess(&ds, None, &p).is_err());
    }

    #[test]
    fn nearest_rank_values() {
        let v: Vec<u64> = (1..=10).collect();
        assert_eq!(nearest_rank(&v, 10.0), Some(1));
        assert_eq!(nearest_rank(&v, 90.0), Some(9));
        assert_eq!(nearest_rank(&v, 100.0), Some(10));
        assert_eq!(nearest_rank(&v, 0.0), Some(1));
        assert_eq!(nearest_rank(&[], 50.0), None);
    }

    #[test]
    fn grid_snapping() {
        assert_eq!(grid_cell(40.7648, -73.9721, 0.01), (4076, -7398));
        let cs = vec![
            ci("a", "MoMA", 40.7614, -73.9776),
            ci("b", "Gallery", 40.7614, -73.9776),
            ci("b", "Far", 34.05, -118.24),
        ];
        let ds = CheckInDataset::from_checkins(cs).unwrap();
        let g = snap_to_grid(&ds, 0.001).unwrap();
        assert_eq!(g.checkins()[0].location, g.checkins()[1].location);
        assert!(g.checkins()[0].location.starts_with(GRID_PREFIX));
        assert_eq!(g.len(), ds.len());
        assert_eq!(g.user_total("b"), Some(2));
        let coarse = snap_to_grid(&ds, 1000.0).unwrap();
        assert_eq!(coarse.locations().len(), 1);
        assert!(snap_to_grid(&ds, 0.0).is_err());
        assert!(snap_to_grid(&ds, -1.0).is_err());
    }

    #[test]
    fn synthetic_properties() {
        let p = SyntheticParams {
            noise_prob: 0.0,
            ..SyntheticParams::default()
        };
        let (ds, social) = generate_synthetic(&p).unwrap();
        assert_eq!(ds.len(), 500 * 40);
        assert_eq!(ds.users().len(), 500);
        // Zipf over distance rank puts H(10)/H(200) ~ 0.5 of the mass on the
        // community's own block
        let mut in_block = 0u64;
        for i in 0..p.n_users {
            let c = synthetic_community(i, p.n_communities);
            for (l, n) in ds.user_locations(&synthetic_user_id(i)).unwrap() {
                let j: usize = l[1..].parse().unwrap();
                if j / 10 == c {
                    in_block += n;
                }
            }
        }
        let share = in_block as f64 / ds.len() as f64;
        assert!((0.4..0.6).contains(&share), "{share}");
        for (a, b) in social.edges() {
            let ia: usize = a[1..].parse().unwrap();
            let ib: usize = b[1..].parse().unwrap();
            assert_eq!(ia % 20, ib % 20);
        }

        let p0 = SyntheticParams {
            intra_friend_prob: 0.0,
            ..SyntheticParams::default()
        };
        assert!(generate_synthetic(&p0).unwrap().1.is_empty());
    }

    #[test]
    fn synthetic_is_deterministic() {
        let p = SyntheticParams {
            n_users: 60,
            n_locations: 30,
            n_communities: 3,
            seed: 11,
            ..SyntheticParams::default()
        };
        let (a, sa) = generate_synthetic(&p).unwrap();
        let (b, sb) = generate_synthetic(&p).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        let dir = tempfile::tempdir().unwrap();
        a.write_csv(&dir.path().join("a.csv")).unwrap();
        b.write_csv(&dir.path().join("b.csv")).unwrap();
        assert_eq!(
            std::fs::read(dir.path().join("a.csv")).unwrap(),
            std::fs::read(dir.path().join("b.csv")).unwrap()
        );
        let (c, _) = generate_synthetic(&SyntheticParams { seed: 12, ..p }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synthetic_rejects_bad_params() {
        let bad = [
            SyntheticParams { n_communities: 600, ..Default::default() },
            SyntheticParams { n_communities: 300, n_users: 400, ..Default::default() },
            SyntheticParams { noise_prob: 1.5, ..Default::default() },
            SyntheticParams { intra_friend_prob: -0.1, ..Default::default() },
        ];
        for p in bad {
            assert!(generate_synthetic(&p).is_err(), "{p:?}");
        }
    }

    #[test]
    fn csv_round_trip() {
        let p = SyntheticParams {
            n_users: 20,
            n_locations: 10,
            n_communities: 2,
            checkins_per_user: 5,
            ..Default::default()
        };
        let (ds, social) = generate_synthetic(&p).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        ds.write_csv(&path).unwrap();
        assert_eq!(ingest_checkins(&path).unwrap(), ds);
        let spath = dir.path().join("s.csv");
        social.write_csv(&spath).unwrap();
        assert_eq!(ingest_social_links(&spath, ds.users()).unwrap().graph, social);
    }
}
