//! Binary schedule generation matching a joint moment matrix.
//!
//! Two generators are provided: the maximum-entropy Ising model, fitted by
//! exact-gradient moment matching over the full state space, and the
//! dichotomized Gaussian, which thresholds a latent correlated normal vector.
//! [`ExplicitBernoulli`] is the brute-force ground truth used by the tests.

mod dg;
mod enumerate;
mod ising;

pub use dg::{
    bivariate_normal_cdf, dg_calibrate, dg_sample, naive_psd_repair, psd_project, DichotomizedGaussian,
    PSD_EIG_FLOOR,
};
pub use enumerate::{enumerate_bernoulli, Enumeration, ExplicitBernoulli, ENUMERATION_MAX_K};
pub use ising::{ising_fit, ising_sample, IsingFit, IsingFitConfig, IsingModel, ISING_EXACT_MAX_K};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random stream for draw `index` under `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Empirical `Π̂ = (1/n) Σ b bᵀ`.
pub fn empirical_moments(samples: &[Vec<bool>]) -> Vec<Vec<f64>> {
    let k = samples.first().map_or(0, Vec::len);
    let mut counts = vec![vec![0u64; k]; k];
    for b in samples {
        for i in (0..k).filter(|&i| b[i]) {
            for j in (0..k).filter(|&j| b[j]) {
                counts[i][j] += 1;
            }
        }
    }
    let n = samples.len().max(1) as f64;
    counts.iter().map(|r| r.iter().map(|&c| c as f64 / n).collect()).collect()
}

/// Per-entry binomial z-scores of sampled moments against their true values.
#[derive(Debug, Clone, PartialEq)]
pub struct Coverage {
    pub entries: usize,
    /// Entries with `|z| > 3` (degenerate entries count if not matched exactly).
    pub outside: usize,
    pub max_z: f64,
    pub max_abs_error: f64,
}

impl Coverage {
    /// Family-level 3σ rule: the number of entries outside their 3σ band must
    /// not exceed its null expectation by more than three binomial standard
    /// deviations. For a handful of entries this means none may fall outside.
    pub fn passes(&self) -> bool {
        let p = 0.0027;
        let mean = self.entries as f64 * p;
        (self.outside as f64) <= mean + 3.0 * (mean * (1.0 - p)).sqrt()
    }

    pub fn merge(&mut self, other: &Coverage) {
        self.entries += other.entries;
        self.outside += other.outside;
        self.max_z = self.max_z.max(other.max_z);
        self.max_abs_error = self.max_abs_error.max(other.max_abs_error);
    }

    pub fn empty() -> Self {
        Self { entries: 0, outside: 0, max_z: 0.0, max_abs_error: 0.0 }
    }
}

pub fn moment_coverage(truth: &[Vec<f64>], samples: &[Vec<bool>]) -> Coverage {
    let emp = empirical_moments(samples);
    let n = samples.len() as f64;
    let mut cov = Coverage::empty();
    for i in 0..truth.len() {
        for j in i..truth.len() {
            let (p, q) = (truth[i][j], emp[i][j]);
            cov.entries += 1;
            cov.max_abs_error = cov.max_abs_error.max((p - q).abs());
            let var = p * (1.0 - p) / n;
            if var <= 0.0 {
                if (p - q).abs() > 0.0 {
                    cov.outside += 1;
                    cov.max_z = f64::INFINITY;
                }
                continue;
            }
            let z = (q - p).abs() / var.sqrt();
            cov.max_z = cov.max_z.max(z);
            if z > 3.0 {
                cov.outside += 1;
            }
        }
    }
    cov
}

/// True when every entry lies strictly inside its Fréchet–Hoeffding range and
/// the marginals lie in `(0, 1)` by at least `margin`.
pub fn is_interior(moments: &[Vec<f64>], margin: f64) -> bool {
    let k = moments.len();
    for i in 0..k {
        let p = moments[i][i];
        if p <= margin || p >= 1.0 - margin {
            return false;
        }
        for j in i + 1..k {
            let q = moments[j][j];
            let v = moments[i][j];
            if v <= (p + q - 1.0).max(0.0) + margin || v >= p.min(q) - margin {
                return false;
            }
        }
    }
    true
}
