//! Walker's alias method for O(1) sampling from a discrete distribution.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};

/// Alias table over `n` outcomes.
///
/// Index `i` is drawn with probability
/// `(prob[i] + sum over j with alias[j] == i of (1 - prob[j])) / n`,
/// which equals the normalized input weight.
#[derive(Debug, Clone, PartialEq)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    /// Builds a table with the two-worklist (small/large) construction.
    /// Both worklists are processed lowest index first.
    pub fn new(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("alias table weights"));
        }
        for (index, &weight) in weights.iter().enumerate() {
            if !(weight.is_finite() && weight > 0.0) {
                return Err(Error::InvalidWeight { index, weight });
            }
        }
        let n = weights.len();
        let total: f64 = weights.iter().sum();
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut prob = vec![1.0; n];
        let mut alias: Vec<usize> = (0..n).collect();

        let mut small: VecDeque<usize> = VecDeque::new();
        let mut large: VecDeque<usize> = VecDeque::new();
        for (i, &s) in scaled.iter().enumerate() {
            if s < 1.0 {
                small.push_back(i);
            } else {
                large.push_back(i);
            }
        }

        while let (Some(&s), Some(&l)) = (small.front(), large.front()) {
            small.pop_front();
            prob[s] = scaled[s];
            alias[s] = l;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                large.pop_front();
                small.push_back(l);
            }
        }
        // Leftovers in either list are full columns up to rounding.
        for i in small.into_iter().chain(large) {
            prob[i] = 1.0;
            alias[i] = i;
        }
        Ok(AliasTable { prob, alias })
    }

    /// Convenience constructor for integer counts.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let weights: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        Self::new(&weights)
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    pub fn prob(&self) -> &[f64] {
        &self.prob
    }

    pub fn alias(&self) -> &[usize] {
        &self.alias
    }

    /// Probability mass the table assigns to each index.
    pub fn masses(&self) -> Vec<f64> {
        let n = self.len() as f64;
        let mut mass: Vec<f64> = self.prob.clone();
        for (j, &a) in self.alias.iter().enumerate() {
            mass[a] += 1.0 - self.prob[j];
        }
        mass.iter_mut().for_each(|m| *m /= n);
        mass
    }

    /// Draws one index. Consumes exactly one integer and one float draw.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let i = rng.gen_range(0..self.prob.len());
        let coin: f64 = rng.gen();
        if coin < self.prob[i] {
            i
        } else {
            self.alias[i]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn singleton_always_zero() {
        let t = AliasTable::new(&[1.0]).unwrap();
        let mut rng = seed::stream(1, "t", &[]);
        assert!((0..1000).all(|_| t.sample(&mut rng) == 0));
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(AliasTable::new(&[]).is_err());
        assert!(matches!(
            AliasTable::new(&[1.0, 0.0]),
            Err(Error::InvalidWeight { index: 1, .. })
        ));
        assert!(AliasTable::new(&[1.0, -2.0]).is_err());
        assert!(AliasTable::new(&[f64::NAN]).is_err());
        assert!(AliasTable::new(&[f64::INFINITY, 1.0]).is_err());
    }

    #[test]
    fn two_one_one_masses() {
        let t = AliasTable::new(&[2.0, 1.0, 1.0]).unwrap();
        let m = t.masses();
        assert!((m[0] - 0.5).abs() < 1e-15);
        assert!((m[1] - 0.25).abs() < 1e-15);
        assert!((m[2] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn equal_weights_are_all_full_columns() {
        let t = AliasTable::new(&[1.0, 1.0]).unwrap();
        assert_eq!(t.prob(), &[1.0, 1.0]);
        assert_eq!(t.alias(), &[0, 1]);
    }

    #[test]
    fn monte_carlo_three_to_one() {
        let t = AliasTable::new(&[3.0, 1.0]).unwrap();
        let mut rng = seed::stream(9, "t", &[]);
        let n = 100_000;
        let hits = (0..n).filter(|_| t.sample(&mut rng) == 0).count();
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.75).abs() < 0.01, "freq={freq}");
    }
}
