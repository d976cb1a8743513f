use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::GaussLegendre;
use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::stream_rng;
use crate::error::{dim, invalid, Result};
use crate::linalg::{matrix_from_rows, min_eigenvalue, rows_from_matrix, symmetrize};
use crate::model::{validate_moments, MOMENT_TOL};

/// Eigenvalue floor of a repaired latent correlation matrix.
pub const PSD_EIG_FLOOR: f64 = 1e-8;
const QUADRATURE_NODES: usize = 64;

fn std_normal() -> &'static Normal {
    static N: OnceLock<Normal> = OnceLock::new();
    N.get_or_init(|| Normal::new(0.0, 1.0).expect("unit normal"))
}

fn quadrature() -> &'static GaussLegendre {
    static Q: OnceLock<GaussLegendre> = OnceLock::new();
    Q.get_or_init(|| GaussLegendre::new(NonZeroUsize::new(QUADRATURE_NODES).expect("nonzero")))
}

/// `P(Z₁ ≤ a, Z₂ ≤ b)` for a standard bivariate normal with correlation `r`.
///
/// Uses `Φ(a)Φ(b) + (1/2π) ∫₀^{asin r} exp(−(a² − 2ab sinθ + b²) / (2cos²θ)) dθ`,
/// whose integrand stays bounded as `|r| → 1`.
pub fn bivariate_normal_cdf(a: f64, b: f64, r: f64) -> f64 {
    let phi = std_normal();
    let base = phi.cdf(a) * phi.cdf(b);
    if r == 0.0 {
        return base;
    }
    let r = r.clamp(-1.0, 1.0);
    let upper = r.asin();
    let integral = quadrature().integrate(0.0, upper, |t| {
        let (s, c) = t.sin_cos();
        let c2 = c * c;
        if c2 <= 0.0 {
            return 0.0;
        }
        (-(a * a - 2.0 * a * b * s + b * b) / (2.0 * c2)).exp()
    });
    (base + integral / std::f64::consts::TAU).clamp(0.0, 1.0)
}

/// Thresholds and latent correlation of a dichotomized Gaussian:
/// `b_k = 1{z_k ≤ τ_k}` with `z ~ N(0, Σ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DichotomizedGaussian {
    /// `±∞` marks deterministic coordinates.
    #[serde(with = "infinite_as_max")]
    pub tau: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    /// True when the PSD repair moved some entry by more than 1e-6, i.e.
    /// the target moments are only matched approximately.
    pub approximate: bool,
}

mod infinite_as_max {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    // JSON has no infinities; ±f64::MAX stands in for ±∞.
    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let out: Vec<f64> = v.iter().map(|x| x.clamp(f64::MIN, f64::MAX)).collect();
        out.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v: Vec<f64> = Vec::deserialize(d)?;
        Ok(v.into_iter()
            .map(|x| if x >= f64::MAX { f64::INFINITY } else if x <= f64::MIN { f64::NEG_INFINITY } else { x })
            .collect())
    }
}

fn threshold(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        std_normal().inverse_cdf(p)
    }
}

/// Solves `Φ₂(τ_i, τ_j; r) = Π_ij` for `r ∈ [−1, 1]` by bisection.
fn calibrate_pair(ti: f64, tj: f64, target: f64) -> f64 {
    let f = |r: f64| bivariate_normal_cdf(ti, tj, r);
    let (lo_val, hi_val) = (f(-1.0), f(1.0));
    if target >= hi_val {
        return 1.0;
    }
    if target <= lo_val {
        return -1.0;
    }
    let (mut lo, mut hi) = (-1.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Calibrates thresholds `τ_k = Φ⁻¹(Π_kk)` and latent correlations pairwise,
/// then repairs the latent matrix if it is not positive definite.
/// Coordinates with `Π_kk ∈ {0, 1}` are deterministic and left uncorrelated.
pub fn dg_calibrate(moments: &[Vec<f64>]) -> Result<DichotomizedGaussian> {
    validate_moments(moments, MOMENT_TOL)?;
    let k = moments.len();
    let tau: Vec<f64> = (0..k).map(|i| threshold(moments[i][i])).collect();
    let mut sigma = vec![vec![0.0; k]; k];
    for i in 0..k {
        sigma[i][i] = 1.0;
        for j in i + 1..k {
            if !(tau[i].is_finite() && tau[j].is_finite()) {
                continue;
            }
            let r = calibrate_pair(tau[i], tau[j], moments[i][j]);
            sigma[i][j] = r;
            sigma[j][i] = r;
        }
    }
    let raw = matrix_from_rows(&sigma)?;
    // singular but PSD latent matrices (e.g. comonotone pairs) are kept as is;
    // sampling adds its own jitter
    let repaired = if min_eigenvalue(&raw) >= -1e-12 { raw.clone() } else { psd_project(&raw)? };
    let changed = (&repaired - &raw).iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    Ok(DichotomizedGaussian { tau, sigma: rows_from_matrix(&repaired), approximate: changed > 1e-6 })
}

/// Draws `n` schedules by thresholding `z = L ε` with `LLᵀ = Σ + 1e-8·I`.
pub fn dg_sample(dg: &DichotomizedGaussian, n: usize, seed: u64) -> Result<Vec<Vec<bool>>> {
    let k = dg.tau.len();
    let sigma = matrix_from_rows(&dg.sigma)?;
    if sigma.nrows() != k || sigma.ncols() != k {
        return Err(dim("latent correlation does not match thresholds"));
    }
    let jittered = sigma + DMatrix::identity(k, k) * 1e-8;
    let chol = Cholesky::new(jittered).ok_or_else(|| invalid("latent correlation is not positive definite"))?;
    let l = chol.l();
    Ok((0..n)
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let eps = DVector::from_iterator(k, (0..k).map(|_| StandardNormal.sample(&mut rng)));
            let z = &l * eps;
            (0..k).map(|a| z[a] <= dg.tau[a]).collect()
        })
        .collect())
}

fn clip_eigen(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let vals = eig.eigenvalues.map(|l| l.max(floor));
    symmetrize(&(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()))
}

fn unit_diagonal_rescale(m: &DMatrix<f64>) -> DMatrix<f64> {
    let d: Vec<f64> = (0..m.nrows()).map(|i| m[(i, i)].max(1e-300).sqrt()).collect();
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| if i == j { 1.0 } else { m[(i, j)] / (d[i] * d[j]) })
}

/// Naive repair: clip eigenvalues once, then rescale to a unit diagonal.
pub fn naive_psd_repair(m: &DMatrix<f64>) -> DMatrix<f64> {
    unit_diagonal_rescale(&clip_eigen(m, PSD_EIG_FLOOR))
}

/// Nearest unit-diagonal matrix with eigenvalues `≥ 1e-8` (Frobenius sense).
///
/// Alternates eigenvalue clipping (with Dykstra's correction) and unit-diagonal
/// restoration until the iterates settle, then applies clip-and-rescale rounds
/// until the eigenvalue floor holds. Inputs that already satisfy the floor
/// are returned unchanged.
pub fn psd_project(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(dim("psd_project needs a square matrix"));
    }
    let k = m.nrows();
    let m = symmetrize(m);
    let unit = (0..k).all(|i| (m[(i, i)] - 1.0).abs() < 1e-12);
    if unit && min_eigenvalue(&m) >= PSD_EIG_FLOOR {
        return Ok(m);
    }
    let mut y = m.clone();
    let mut correction = DMatrix::zeros(k, k);
    for _ in 0..10_000 {
        let r = &y - &correction;
        let x = clip_eigen(&r, PSD_EIG_FLOOR);
        correction = &x - &r;
        let mut y_new = x.clone();
        for i in 0..k {
            y_new[(i, i)] = 1.0;
        }
        let step = (&y_new - &y).norm();
        y = y_new;
        if step < 1e-13 {
            break;
        }
    }
    for _ in 0..50 {
        if min_eigenvalue(&y) >= PSD_EIG_FLOOR {
            break;
        }
        y = unit_diagonal_rescale(&clip_eigen(&y, PSD_EIG_FLOOR * (1.0 + 1e-3)));
    }
    let y = symmetrize(&y);
    // slow Dykstra convergence can leave us marginally behind the one-shot repair
    let naive = naive_psd_repair(&m);
    if min_eigenvalue(&naive) >= PSD_EIG_FLOOR && (&naive - &m).norm() < (&y - &m).norm() {
        return Ok(naive);
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bivariate_cdf_special_values() {
        assert!((bivariate_normal_cdf(0.0, 0.0, 0.0) - 0.25).abs() < 1e-15);
        // P(Z1 ≤ 0, Z2 ≤ 0) = 1/4 + asin(r)/(2π)
        for r in [-0.9, -0.3, 0.5, 0.99] {
            let want = 0.25 + f64::asin(r) / std::f64::consts::TAU;
            assert!((bivariate_normal_cdf(0.0, 0.0, r) - want).abs() < 1e-13);
        }
        let phi = std_normal();
        assert!((bivariate_normal_cdf(0.3, -0.4, 1.0) - phi.cdf(-0.4)).abs() < 1e-10);
        let anti = (phi.cdf(0.3) + phi.cdf(0.8) - 1.0).max(0.0);
        assert!((bivariate_normal_cdf(0.3, 0.8, -1.0) - anti).abs() < 1e-10);
    }

    #[test]
    fn analytic_calibration_cases() {
        for (off, want) in [(0.25, 0.0), (0.5, 1.0), (0.0, -1.0)] {
            let dg = dg_calibrate(&[vec![0.5, off], vec![off, 0.5]]).unwrap();
            assert!((dg.sigma[0][1] - want).abs() < 1e-8, "off {off}: {}", dg.sigma[0][1]);
        }
    }

    #[test]
    fn deterministic_coordinate_never_fires() {
        let dg = dg_calibrate(&[vec![0.0, 0.0], vec![0.0, 0.4]]).unwrap();
        let s = dg_sample(&dg, 2000, 5).unwrap();
        assert!(s.iter().all(|b| !b[0]));
    }

    #[test]
    fn psd_input_is_unchanged() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, -0.2, 0.3, 1.0, 0.1, -0.2, 0.1, 1.0]);
        assert!((psd_project(&m).unwrap() - &m).norm() < 1e-10);
    }

    #[test]
    fn repair_beats_naive_on_indefinite_input() {
        // the naive repair may dip below the eigenvalue floor after rescaling,
        // which buys it up to a few multiples of the floor in distance
        let slack = 1e-9 + 10.0 * PSD_EIG_FLOOR;
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0]);
        let p = psd_project(&m).unwrap();
        assert!(min_eigenvalue(&p) >= PSD_EIG_FLOOR);
        assert!((0..3).all(|i| (p[(i, i)] - 1.0).abs() < 1e-12));
        let naive = naive_psd_repair(&m);
        assert!((&p - &m).norm() <= (&naive - &m).norm() + slack);

        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.95, 0.1, 0.95, 1.0, 0.9, 0.1, 0.9, 1.0]);
        let p = psd_project(&m).unwrap();
        let naive = naive_psd_repair(&m);
        assert!(min_eigenvalue(&p) >= PSD_EIG_FLOOR);
        assert!((&p - &m).norm() < (&naive - &m).norm() - 1e-4);
    }
}
