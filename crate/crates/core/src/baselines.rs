//! Heuristic co-location baselines.
//!
//! Every model scores a user pair so that higher means more likely friends.
//! Models flagged [`BaselineModel::requires_common`] fall back to a uniform
//! random guess in `[0, 1)` when the two users share no location.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::CheckInDataset;
use crate::error::{Error, Result};

/// Guards `1 / H(l)` against zero entropy.
pub const ENTROPY_EPS: f64 = 1e-6;
/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineModel {
    CommonP,
    OverlapP,
    WCommonP,
    WOverlapP,
    AaEnt,
    MinEnt,
    AaP,
    MinP,
    Geodist,
    WGeodist,
    Pp,
    Diversity,
    WFrequency,
    Personal,
}

impl BaselineModel {
    pub const ALL: [BaselineModel; 14] = [
        BaselineModel::CommonP,
        BaselineModel::OverlapP,
        BaselineModel::WCommonP,
        BaselineModel::WOverlapP,
        BaselineModel::AaEnt,
        BaselineModel::MinEnt,
        BaselineModel::AaP,
        BaselineModel::MinP,
        BaselineModel::Geodist,
        BaselineModel::WGeodist,
        BaselineModel::Pp,
        BaselineModel::Diversity,
        BaselineModel::WFrequency,
        BaselineModel::Personal,
    ];

    pub fn requires_common(self) -> bool {
        matches!(
            self,
            BaselineModel::AaEnt
                | BaselineModel::MinEnt
                | BaselineModel::AaP
                | BaselineModel::MinP
                | BaselineModel::Diversity
                | BaselineModel::WFrequency
                | BaselineModel::Personal
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            BaselineModel::CommonP => "common_p",
            BaselineModel::OverlapP => "overlap_p",
            BaselineModel::WCommonP => "w_common_p",
            BaselineModel::WOverlapP => "w_overlap_p",
            BaselineModel::AaEnt => "aa_ent",
            BaselineModel::MinEnt => "min_ent",
            BaselineModel::AaP => "aa_p",
            BaselineModel::MinP => "min_p",
            BaselineModel::Geodist => "geodist",
            BaselineModel::WGeodist => "w_geodist",
            BaselineModel::Pp => "pp",
            BaselineModel::Diversity => "diversity",
            BaselineModel::WFrequency => "w_frequency",
            BaselineModel::Personal => "personal",
        }
    }
}

impl fmt::Display for BaselineModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BaselineModel::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid("baseline", format!("unknown model `{s}`")))
    }
}

fn entropy_of(counts: impl Iterator<Item = u64> + Clone) -> f64 {
    let total: u64 = counts.clone().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    -counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / total;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Natural-log Shannon entropy of the visitor distribution at `l`.
pub fn location_entropy(ds: &CheckInDataset, l: &str) -> Result<f64> {
    let visitors = ds
        .location_visitors(l)
        .ok_or_else(|| Error::UnknownLocation(l.to_string()))?;
    Ok(entropy_of(visitors.values().copied()))
}

/// Distinct visitors of `l`.
pub fn popularity(ds: &CheckInDataset, l: &str) -> usize {
    ds.location_visitors(l).map_or(0, |m| m.len())
}

fn home(ds: &CheckInDataset, u: &str, weighted: bool) -> Result<(f64, f64)> {
    let locs = ds
        .user_locations(u)
        .ok_or_else(|| Error::UnknownUser(u.to_string()))?;
    if locs.is_empty() {
        return Err(Error::Empty("user has no check-ins"));
    }
    let (mut lat, mut lon, mut total) = (0.0, 0.0, 0.0);
    for (l, &c) in locs {
        let w = if weighted { c as f64 } else { 1.0 };
        let (a, b) = ds
            .location_coords(l)
            .ok_or_else(|| Error::UnknownLocation(l.clone()))?;
        lat += w * a;
        lon += w * b;
        total += w;
    }
    Ok((lat / total, lon / total))
}

/// Check-in weighted mean of the coordinates of omega(u).
pub fn home_location(ds: &CheckInDataset, u: &str) -> Result<(f64, f64)> {
    home(ds, u, true)
}

/// Unweighted mean of the coordinates of omega(u).
pub fn unweighted_home_location(ds: &CheckInDataset, u: &str) -> Result<(f64, f64)> {
    home(ds, u, false)
}

/// Great-circle distance in kilometres between two (lat, lon) points.
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (la1, lo1) = (a.0.to_radians(), a.1.to_radians());
    let (la2, lo2) = (b.0.to_radians(), b.1.to_radians());
    let h = ((la2 - la1) / 2.0).sin().powi(2)
        + la1.cos() * la2.cos() * ((lo2 - lo1) / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Scores the pair `(u, v)` under `m`. `rng` is only consumed by the random
/// fallback.
pub fn baseline_score<R: Rng + ?Sized>(
    ds: &CheckInDataset,
    u: &str,
    v: &str,
    m: BaselineModel,
    rng: &mut R,
) -> Result<f64> {
    if u == v {
        return Err(Error::invalid("pair", format!("`{u}` paired with itself")));
    }
    let ou = ds
        .user_locations(u)
        .ok_or_else(|| Error::UnknownUser(u.to_string()))?;
    let ov = ds
        .user_locations(v)
        .ok_or_else(|| Error::UnknownUser(v.to_string()))?;
    // (location, |tau(u,l)|, |tau(v,l)|) over common locations
    let common: Vec<(&str, u64, u64)> = ou
        .iter()
        .filter_map(|(l, &cu)| ov.get(l).map(|&cv| (l.as_str(), cu, cv)))
        .collect();
    if m.requires_common() && common.is_empty() {
        return Ok(rng.gen::<f64>());
    }
    let tu = ds.user_total(u).unwrap_or(0) as f64;
    let tv = ds.user_total(v).unwrap_or(0) as f64;
    let w_common = || common.iter().map(|&(_, a, b)| (a + b) as f64).sum::<f64>();
    let entropies = || -> Result<Vec<f64>> {
        common.iter().map(|&(l, _, _)| location_entropy(ds, l)).collect()
    };

    Ok(match m {
        BaselineModel::CommonP => common.len() as f64,
        BaselineModel::OverlapP => {
            let union = ou.len() + ov.len() - common.len();
            if union == 0 {
                0.0
            } else {
                common.len() as f64 / union as f64
            }
        }
        BaselineModel::WCommonP => w_common(),
        BaselineModel::WOverlapP => {
            if tu + tv == 0.0 {
                0.0
            } else {
                w_common() / (tu + tv)
            }
        }
        BaselineModel::AaEnt => entropies()?.iter().map(|h| 1.0 / (ENTROPY_EPS + h)).sum(),
        BaselineModel::MinEnt => -entropies()?.into_iter().fold(f64::INFINITY, f64::min),
        BaselineModel::AaP => common
            .iter()
            .map(|&(l, _, _)| 1.0 / (1.0 + popularity(ds, l) as f64).ln())
            .sum(),
        BaselineModel::MinP => -(common
            .iter()
            .map(|&(l, _, _)| popularity(ds, l))
            .min()
            .unwrap_or(0) as f64),
        BaselineModel::Geodist => {
            -haversine_km(unweighted_home_location(ds, u)?, unweighted_home_location(ds, v)?)
        }
        BaselineModel::WGeodist => -haversine_km(home_location(ds, u)?, home_location(ds, v)?),
        BaselineModel::Pp => (ou.len() * ov.len()) as f64,
        BaselineModel::Diversity => entropy_of(common.iter().map(|&(_, a, b)| a.min(b))),
        BaselineModel::WFrequency => common
            .iter()
            .map(|&(l, a, b)| a.min(b) as f64 / popularity(ds, l) as f64)
            .sum(),
        BaselineModel::Personal => common
            .iter()
            .map(|&(_, a, b)| 1.0 / (a as f64 * b as f64))
            .sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::CheckIn;
    use crate::seed;

    fn ci(user: &str, loc: &str, lat: f64, lon: f64) -> CheckIn {
        CheckIn {
            user: user.into(),
            time: 0,
            lat,
            lon,
            location: loc.into(),
            category_l1: "a".into(),
            category_l2: "b".into(),
        }
    }

    fn ds(rows: &[(&str, &str)]) -> CheckInDataset {
        CheckInDataset::from_checkins(rows.iter().map(|(u, l)| ci(u, l, 0.0, 0.0)).collect()).unwrap()
    }

    #[test]
    fn requires_common_flags() {
        let flagged: Vec<&str> = BaselineModel::ALL
            .iter()
            .filter(|m| m.requires_common())
            .map(|m| m.name())
            .collect();
        assert_eq!(
            flagged,
            vec!["aa_ent", "min_ent", "aa_p", "min_p", "diversity", "w_frequency", "personal"]
        );
        for m in BaselineModel::ALL {
            assert_eq!(m.name().parse::<BaselineModel>().unwrap(), m);
        }
    }

    #[test]
    fn common_and_overlap() {
        let d = ds(&[("u", "L1"), ("u", "L2"), ("v", "L2"), ("v", "L3"), ("w", "L1"), ("w", "L2")]);
        let mut rng = seed::stream(0, "t", &[]);
        assert_eq!(baseline_score(&d, "u", "w", BaselineModel::CommonP, &mut rng).unwrap(), 2.0);
        let o = baseline_score(&d, "u", "v", BaselineModel::OverlapP, &mut rng).unwrap();
        assert!((o - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn random_fallback_without_common_locations() {
        let d = ds(&[("u", "L1"), ("v", "L2")]);
        let mut a = seed::stream(5, "t", &[]);
        let mut b = seed::stream(5, "t", &[]);
        let s = baseline_score(&d, "u", "v", BaselineModel::MinEnt, &mut a).unwrap();
        assert!((0.0..1.0).contains(&s));
        assert_eq!(s, b.gen::<f64>());
        assert_eq!(baseline_score(&d, "u", "v", BaselineModel::CommonP, &mut a).unwrap(), 0.0);
    }

    #[test]
    fn entropy_values() {
        let d = ds(&[("a", "solo"), ("a", "eq"), ("b", "eq"), ("a", "skew"), ("a", "skew"), ("a", "skew"), ("b", "skew")]);
        assert_eq!(location_entropy(&d, "solo").unwrap(), 0.0);
        assert!((location_entropy(&d, "eq").unwrap() - 2f64.ln()).abs() < 1e-15);
        let expected = -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln());
        assert!((location_entropy(&d, "skew").unwrap() - expected).abs() < 1e-15);
        assert!(location_entropy(&d, "nowhere").is_err());
    }

    #[test]
    fn homes() {
        let d = CheckInDataset::from_checkins(vec![
            ci("one", "X", 10.0, 20.0),
            ci("mid", "A", 0.0, 0.0),
            ci("mid", "B", 2.0, 4.0),
            ci("w", "P", 0.0, 0.0),
            ci("w", "P", 0.0, 0.0),
            ci("w", "P", 0.0, 0.0),
            ci("w", "Q", 4.0, 0.0),
        ])
        .unwrap();
        assert_eq!(home_location(&d, "one").unwrap(), (10.0, 20.0));
        assert_eq!(home_location(&d, "mid").unwrap(), (1.0, 2.0));
        assert_eq!(home_location(&d, "w").unwrap(), (1.0, 0.0));
        assert_eq!(unweighted_home_location(&d, "w").unwrap(), (2.0, 0.0));
        assert!(home_location(&d, "ghost").is_err());
    }

    #[test]
    fn haversine_reference() {
        // one degree of latitude
        let d = haversine_km((0.0, 0.0), (1.0, 0.0));
        assert!((d - EARTH_RADIUS_KM * std::f64::consts::PI / 180.0).abs() < 1e-9);
        assert_eq!(haversine_km((40.0, -73.0), (40.0, -73.0)), 0.0);
    }

    #[test]
    fn errors() {
        let d = ds(&[("u", "L1"), ("v", "L1")]);
        let mut rng = seed::stream(0, "t", &[]);
        assert!(baseline_score(&d, "u", "u", BaselineModel::CommonP, &mut rng).is_err());
        assert!(matches!(
            baseline_score(&d, "u", "x", BaselineModel::CommonP, &mut rng),
            Err(Error::UnknownUser(_))
        ));
    }
}
