use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Largest `K` for which the `2^K` enumeration is offered.
pub const ENUMERATION_MAX_K: usize = 12;

/// Explicit distribution over all `2^K` schedules; bit `k` of the state index
/// is `b_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplicitBernoulli {
    k: usize,
    probs: Vec<f64>,
}

impl ExplicitBernoulli {
    pub fn new(k: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != 1usize << k {
            return Err(invalid(format!("expected {} probabilities", 1usize << k)));
        }
        if probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(invalid("probabilities must be nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { k, probs })
    }

    /// Product distribution of independent Bernoulli(π_k).
    pub fn independent(pi: &[f64]) -> Result<Self> {
        let k = pi.len();
        let probs = (0..1usize << k)
            .map(|s| {
                (0..k)
                    .map(|i| if s >> i & 1 == 1 { pi[i] } else { 1.0 - pi[i] })
                    .product()
            })
            .collect();
        Self::normalized(k, probs)
    }

    /// Normalizes nonnegative weights into a distribution.
    pub fn normalized(k: usize, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(invalid("weights must have a positive sum"));
        }
        Self::new(k, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn num_devices(&self) -> usize {
        self.k
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn schedule(&self, state: usize) -> Vec<bool> {
        (0..self.k).map(|i| state >> i & 1 == 1).collect()
    }

    /// Expectation of `f(b)`.
    pub fn expect(&self, mut f: impl FnMut(&[bool]) -> f64) -> f64 {
        let mut b = vec![false; self.k];
        let mut total = 0.0;
        for (s, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (i, bi) in b.iter_mut().enumerate() {
                *bi = s >> i & 1 == 1;
            }
            total += p * f(&b);
        }
        total
    }

    pub fn moments(&self) -> Vec<Vec<f64>> {
        let k = self.k;
        let mut m = vec![vec![0.0; k]; k];
        for (s, &p) in self.probs.iter().enumerate() {
            for i in 0..k {
                if s >> i & 1 == 0 {
                    continue;
                }
                for j in 0..k {
                    if s >> j & 1 == 1 {
                        m[i][j] += p;
                    }
                }
            }
        }
        m
    }

    pub fn entropy(&self) -> f64 {
        self.probs.iter().filter(|&&p| p > 0.0).map(|p| -p * p.ln()).sum()
    }
}

/// Enumerated moments and conditional co-activity statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Enumeration {
    pub moments: Vec<Vec<f64>>,
    /// `E[m_k | b_k = 0]`; `None` when `P(b_k = 0) = 0`.
    pub expected_m: Vec<Option<f64>>,
    /// `E[1 / (1 + m_k) | b_k = 0]`.
    pub expected_share: Vec<Option<f64>>,
}

/// Exact sums over all `2^K` states, `K ≤ 12`.
pub fn enumerate_bernoulli(dist: &ExplicitBernoulli) -> Result<Enumeration> {
    let k = dist.k;
    if k > ENUMERATION_MAX_K {
        return Err(invalid(format!("enumeration limited to K <= {ENUMERATION_MAX_K}")));
    }
    let mut off = vec![0.0; k];
    let mut m_sum = vec![0.0; k];
    let mut share_sum = vec![0.0; k];
    for (s, &p) in dist.probs.iter().enumerate() {
        let idle = (0..k).filter(|&i| s >> i & 1 == 0).count();
        for i in 0..k {
            if s >> i & 1 == 0 {
                let m = (idle - 1) as f64;
                off[i] += p;
                m_sum[i] += p * m;
                share_sum[i] += p / (1.0 + m);
            }
        }
    }
    let cond = |sum: &[f64]| -> Vec<Option<f64>> {
        (0..k).map(|i| if off[i] > 0.0 { Some(sum[i] / off[i]) } else { None }).collect()
    };
    Ok(Enumeration { moments: dist.moments(), expected_m: cond(&m_sum), expected_share: cond(&share_sum) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn independent_gives_product_moments() {
        let pi = [0.2, 0.7, 0.4];
        let m = ExplicitBernoulli::independent(&pi).unwrap().moments();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { pi[i] } else { pi[i] * pi[j] };
                assert!((m[i][j] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn comonotone_pair() {
        // P(00) = 0.5, P(11) = 0.3, P(10) = 0.2 → Π_12 = min(0.5, 0.3)
        let d = ExplicitBernoulli::new(2, vec![0.5, 0.2, 0.0, 0.3]).unwrap();
        let m = d.moments();
        assert!((m[0][0] - 0.5).abs() < 1e-15 && (m[1][1] - 0.3).abs() < 1e-15);
        assert!((m[0][1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn always_sensing_has_no_conditional() {
        let d = ExplicitBernoulli::new(2, vec![0.0, 0.5, 0.0, 0.5]).unwrap();
        let e = enumerate_bernoulli(&d).unwrap();
        assert!(e.expected_m[0].is_none());
        assert_eq!(e.expected_m[1], Some(0.0));
        assert_eq!(e.expected_share[1], Some(1.0));
    }
}
