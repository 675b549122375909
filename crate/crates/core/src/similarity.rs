//! Pairwise vector measures and their orientation as link scores.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Cosine,
    Euclidean,
    Correlation,
    Chebyshev,
    BrayCurtis,
    Canberra,
    Manhattan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    HigherIsSimilar,
    LowerIsSimilar,
}

impl Measure {
    pub const ALL: [Measure; 7] = [
        Measure::Cosine,
        Measure::Euclidean,
        Measure::Correlation,
        Measure::Chebyshev,
        Measure::BrayCurtis,
        Measure::Canberra,
        Measure::Manhattan,
    ];

    pub fn orientation(self) -> Orientation {
        match self {
            Measure::Cosine | Measure::Correlation => Orientation::HigherIsSimilar,
            _ => Orientation::LowerIsSimilar,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Measure::Cosine => "cosine",
            Measure::Euclidean => "euclidean",
            Measure::Correlation => "correlation",
            Measure::Chebyshev => "chebyshev",
            Measure::BrayCurtis => "braycurtis",
            Measure::Canberra => "canberra",
            Measure::Manhattan => "manhattan",
        }
    }
}

impl Default for Measure {
    fn default() -> Self {
        Measure::Cosine
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Measure::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase().replace(['-', '_'], ""))
            .ok_or_else(|| Error::invalid("measure", format!("unknown measure `{s}`")))
    }
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (d / (na * nb)).clamp(-1.0, 1.0)
}

fn centered(a: &[f64]) -> Vec<f64> {
    let mean = a.iter().sum::<f64>() / a.len() as f64;
    a.iter().map(|x| x - mean).collect()
}

/// Raw value of a measure. Degenerate inputs follow fixed conventions:
/// zero-norm cosine is 0, zero-variance correlation is 0, Canberra terms with
/// `|a_i| + |b_i| = 0` contribute 0, and Bray-Curtis with a zero denominator
/// is 0.
pub fn raw_measure(a: &[f64], b: &[f64], m: Measure) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::Empty("measure input vectors"));
    }
    let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
    Ok(match m {
        Measure::Cosine => cosine(a, b),
        Measure::Correlation => {
            // centering a constant vector can leave rounding residue
            let constant = |v: &[f64]| v.iter().all(|x| *x == v[0]);
            if constant(a) || constant(b) {
                0.0
            } else {
                cosine(&centered(a), &centered(b))
            }
        }
        Measure::Euclidean => diffs.map(|d| d * d).sum::<f64>().sqrt(),
        Measure::Chebyshev => diffs.fold(0.0, f64::max),
        Measure::Manhattan => diffs.sum(),
        Measure::BrayCurtis => {
            let den: f64 = a.iter().zip(b).map(|(x, y)| (x + y).abs()).sum();
            if den == 0.0 {
                0.0
            } else {
                diffs.sum::<f64>() / den
            }
        }
        Measure::Canberra => a
            .iter()
            .zip(b)
            .map(|(x, y)| {
                let den = x.abs() + y.abs();
                if den == 0.0 {
                    0.0
                } else {
                    (x - y).abs() / den
                }
            })
            .sum(),
    })
}

/// Orients a raw value so that larger always means more similar.
pub fn orient(raw: f64, m: Measure) -> f64 {
    match m.orientation() {
        Orientation::HigherIsSimilar => raw,
        Orientation::LowerIsSimilar => -raw,
    }
}

/// Similarity score of two users' feature vectors.
pub fn score_pair(emb: &EmbeddingMatrix, u: &str, v: &str, m: Measure) -> Result<f64> {
    let a = emb
        .user_vector(u)
        .ok_or_else(|| Error::UnknownUser(u.to_string()))?;
    let b = emb
        .user_vector(v)
        .ok_or_else(|| Error::UnknownUser(v.to_string()))?;
    Ok(orient(raw_measure(a, b, m)?, m))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Friend,
    Stranger,
}

/// Friend iff `score > threshold`.
pub fn classify_pair(score: f64, threshold: f64) -> Relation {
    if score > threshold {
        Relation::Friend
    } else {
        Relation::Stranger
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeId;
    use proptest::prelude::*;

    fn raw(a: &[f64], b: &[f64], m: Measure) -> f64 {
        raw_measure(a, b, m).unwrap()
    }

    #[test]
    fn identical_vectors() {
        let a = [0.3, -1.2, 2.0];
        assert!((raw(&a, &a, Measure::Cosine) - 1.0).abs() < 1e-15);
        assert!((raw(&a, &a, Measure::Correlation) - 1.0).abs() < 1e-15);
        for m in [
            Measure::Euclidean,
            Measure::Chebyshev,
            Measure::BrayCurtis,
            Measure::Canberra,
            Measure::Manhattan,
        ] {
            assert_eq!(raw(&a, &a, m), 0.0, "{m}");
        }
    }

    #[test]
    fn unit_axes() {
        let (a, b) = ([1.0, 0.0], [0.0, 1.0]);
        assert_eq!(raw(&a, &b, Measure::Cosine), 0.0);
        assert!((raw(&a, &b, Measure::Euclidean) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(raw(&a, &b, Measure::Manhattan), 2.0);
        assert_eq!(raw(&a, &b, Measure::Chebyshev), 1.0);
        assert_eq!(raw(&a, &b, Measure::BrayCurtis), 1.0);
        assert_eq!(raw(&a, &b, Measure::Canberra), 2.0);
    }

    #[test]
    fn anti_correlated() {
        assert!((raw(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0], Measure::Correlation) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_conventions() {
        let z = [0.0, 0.0];
        let c = [2.0, 2.0];
        assert_eq!(raw(&z, &[1.0, 1.0], Measure::Cosine), 0.0);
        assert_eq!(raw(&c, &[1.0, 3.0], Measure::Correlation), 0.0);
        assert_eq!(raw(&[0.1, 0.1, 0.1], &[1.0, 2.0, 4.0], Measure::Correlation), 0.0);
        assert_eq!(raw(&z, &z, Measure::Canberra), 0.0);
        assert_eq!(raw(&[0.0, 1.0], &[0.0, 3.0], Measure::Canberra), 0.5);
        assert_eq!(raw(&[1.0, -1.0], &[-1.0, 1.0], Measure::BrayCurtis), 0.0);
        assert!(raw_measure(&[1.0], &[1.0, 2.0], Measure::Cosine).is_err());
        assert!(raw_measure(&[], &[], Measure::Cosine).is_err());
    }

    #[test]
    fn score_orientation_and_errors() {
        let nodes = vec![NodeId::user("a"), NodeId::user("b")];
        let v = vec![0.5, 1.0, 0.5, 1.0];
        let emb = EmbeddingMatrix::from_parts(nodes, 2, v, vec![0.0; 4]);
        assert!((score_pair(&emb, "a", "b", Measure::Cosine).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(score_pair(&emb, "a", "b", Measure::Euclidean).unwrap(), 0.0);
        assert!(matches!(
            score_pair(&emb, "a", "zed", Measure::Cosine),
            Err(Error::UnknownUser(u)) if u == "zed"
        ));
        assert_eq!(Measure::default(), Measure::Cosine);
    }

    #[test]
    fn classification_threshold() {
        assert_eq!(classify_pair(0.9, 0.86), Relation::Friend);
        assert_eq!(classify_pair(0.86, 0.86), Relation::Stranger);
        assert_eq!(classify_pair(-1e300, f64::NEG_INFINITY), Relation::Friend);
    }

    #[test]
    fn parse_names() {
        for m in Measure::ALL {
            assert_eq!(m.name().parse::<Measure>().unwrap(), m);
        }
        assert_eq!("Bray-Curtis".parse::<Measure>().unwrap(), Measure::BrayCurtis);
        assert!("hamming".parse::<Measure>().is_err());
    }

    fn vec_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..16).prop_flat_map(|d| {
            (
                prop::collection::vec(-10.0f64..10.0, d),
                prop::collection::vec(-10.0f64..10.0, d),
            )
        })
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded((a, b) in vec_pair()) {
            for m in Measure::ALL {
                let ab = raw(&a, &b, m);
                let ba = raw(&b, &a, m);
                prop_assert!((ab - ba).abs() <= 1e-12 * ab.abs().max(1.0));
                match m {
                    Measure::Cosine | Measure::Correlation => prop_assert!((-1.0..=1.0).contains(&ab)),
                    _ => prop_assert!(ab >= 0.0),
                }
            }
            let pa: Vec<f64> = a.iter().map(|x| x.abs()).collect();
            let pb: Vec<f64> = b.iter().map(|x| x.abs()).collect();
            let bc = raw(&pa, &pb, Measure::BrayCurtis);
            prop_assert!((0.0..=1.0).contains(&bc));
        }

        #[test]
        fn scale_behavior((a, b) in vec_pair(), k in 0.01f64..100.0) {
            let ka: Vec<f64> = a.iter().map(|x| x * k).collect();
            let kb: Vec<f64> = b.iter().map(|x| x * k).collect();
            let c = raw(&a, &b, Measure::Cosine);
            prop_assert!((raw(&ka, &b, Measure::Cosine) - c).abs() < 1e-9);
            let m = raw(&a, &b, Measure::Manhattan);
            prop_assert!((raw(&ka, &kb, Measure::Manhattan) - k * m).abs() <= 1e-9 * (k * m).max(1.0));
        }
    }
}
