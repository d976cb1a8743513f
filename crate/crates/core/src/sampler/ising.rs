use rand::Rng;
use serde::{Deserialize, Serialize};

use super::enumerate::ExplicitBernoulli;
use super::{is_interior, stream_rng};
use crate::error::{dim, invalid, Result};

/// Largest `K` handled by exact state enumeration.
pub const ISING_EXACT_MAX_K: usize = 20;
/// Cap on `|h_k|` and `|J_kk'|` at sampling time.
pub const FIELD_CAP: f64 = 30.0;

/// `p(b) ∝ exp(hᵀb + ½ bᵀJb)` with symmetric, zero-diagonal `J`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsingModel {
    pub h: Vec<f64>,
    pub j: Vec<Vec<f64>>,
    #[serde(skip)]
    probs: Option<Vec<f64>>,
}

impl IsingModel {
    pub fn new(h: Vec<f64>, j: Vec<Vec<f64>>) -> Result<Self> {
        let k = h.len();
        if j.len() != k || j.iter().any(|r| r.len() != k) {
            return Err(dim(format!("J must be {k}×{k}")));
        }
        for a in 0..k {
            if j[a][a] != 0.0 {
                return Err(invalid("J must have a zero diagonal"));
            }
            for b in 0..a {
                if (j[a][b] - j[b][a]).abs() > 1e-12 {
                    return Err(invalid("J must be symmetric"));
                }
            }
        }
        let mut m = Self { h, j, probs: None };
        if k <= ISING_EXACT_MAX_K {
            m.probs = Some(m.state_probabilities());
        }
        Ok(m)
    }

    pub fn num_devices(&self) -> usize {
        self.h.len()
    }

    fn energy(&self, state: usize) -> f64 {
        let k = self.h.len();
        let mut e = 0.0;
        for a in (0..k).filter(|&a| state >> a & 1 == 1) {
            e += self.h[a].clamp(-FIELD_CAP, FIELD_CAP);
            for b in (a + 1..k).filter(|&b| state >> b & 1 == 1) {
                e += self.j[a][b].clamp(-FIELD_CAP, FIELD_CAP);
            }
        }
        e
    }

    fn state_probabilities(&self) -> Vec<f64> {
        let n = 1usize << self.h.len();
        let energies: Vec<f64> = (0..n).map(|s| self.energy(s)).collect();
        let top = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = energies.iter().map(|e| (e - top).exp()).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|x| x / z).collect()
    }

    /// Cached table over all states (exact mode only).
    pub fn probabilities(&self) -> Option<&[f64]> {
        self.probs.as_deref()
    }

    pub fn to_explicit(&self) -> Result<ExplicitBernoulli> {
        let probs = self.probs.clone().ok_or_else(|| invalid("state table unavailable for K > 20"))?;
        ExplicitBernoulli::normalized(self.h.len(), probs)
    }

    pub fn moments(&self) -> Result<Vec<Vec<f64>>> {
        Ok(self.to_explicit()?.moments())
    }

    pub fn entropy(&self) -> Result<f64> {
        Ok(self.to_explicit()?.entropy())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IsingFitConfig {
    pub learning_rate: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Step growth after an accepted iteration (1 keeps the rate fixed).
    pub growth: f64,
    /// Iteration budget for targets on the boundary of the moment polytope.
    pub boundary_max_iter: usize,
}

impl Default for IsingFitConfig {
    fn default() -> Self {
        Self { learning_rate: 1.0, tol: 1e-7, max_iter: 200_000, growth: 1.02, boundary_max_iter: 2_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsingFit {
    pub model: IsingModel,
    /// `max |Π − Π_model|`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Moments of the model and `log Z`.
fn model_moments(h: &[f64], j: &[Vec<f64>], states: &[Vec<usize>]) -> (Vec<Vec<f64>>, f64) {
    let k = h.len();
    let energies: Vec<f64> = states
        .iter()
        .map(|on| {
            let mut e = 0.0;
            for (x, &a) in on.iter().enumerate() {
                e += h[a];
                for &b in &on[x + 1..] {
                    e += j[a][b];
                }
            }
            e
        })
        .collect();
    let top = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    let mut m = vec![vec![0.0; k]; k];
    for (on, e) in states.iter().zip(&energies) {
        let w = (e - top).exp();
        z += w;
        for &a in on {
            for &b in on {
                m[a][b] += w;
            }
        }
    }
    for row in &mut m {
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    (m, top + z.ln())
}

/// Fits `(h, J)` to a target moment matrix by gradient ascent on the
/// likelihood with the exact moments of the current model as gradient.
/// Parameters start at zero; each step adds `α·diag(Δ)` to `h` and `α·Δ` to
/// `J`, then zeroes the diagonal of `J`. A step that lowers the average
/// log-likelihood of the target is undone and the rate halved.
pub fn ising_fit(target: &[Vec<f64>], cfg: &IsingFitConfig) -> Result<IsingFit> {
    let k = target.len();
    if target.iter().any(|r| r.len() != k) {
        return Err(dim("moment matrix must be square"));
    }
    if k > ISING_EXACT_MAX_K {
        return Err(invalid(format!("exact Ising fitting is limited to K <= {ISING_EXACT_MAX_K}")));
    }
    let states: Vec<Vec<usize>> =
        (0..1usize << k).map(|s| (0..k).filter(|&i| s >> i & 1 == 1).collect()).collect();
    let budget = if is_interior(target, 1e-9) { cfg.max_iter } else { cfg.boundary_max_iter };
    let mut h = vec![0.0; k];
    let mut j = vec![vec![0.0; k]; k];
    let error_of = |m: &[Vec<f64>]| -> (f64, Vec<Vec<f64>>) {
        let delta: Vec<Vec<f64>> =
            (0..k).map(|a| (0..k).map(|b| target[a][b] - m[a][b]).collect()).collect();
        let err = delta.iter().flatten().fold(0.0_f64, |acc, d| acc.max(d.abs()));
        (err, delta)
    };
    // Σ h_a Π_aa + Σ_{a<b} J_ab Π_ab − log Z
    let likelihood = |h: &[f64], j: &[Vec<f64>], log_z: f64| -> f64 {
        let mut v = -log_z;
        for a in 0..k {
            v += h[a] * target[a][a];
            for b in a + 1..k {
                v += j[a][b] * target[a][b];
            }
        }
        v
    };
    let (m, log_z) = model_moments(&h, &j, &states);
    let (mut err, mut delta) = error_of(&m);
    let mut ll = likelihood(&h, &j, log_z);
    let mut alpha = cfg.learning_rate;
    let mut iterations = 0;
    while err > cfg.tol && iterations < budget {
        iterations += 1;
        let mut h_new = h.clone();
        let mut j_new = j.clone();
        for a in 0..k {
            h_new[a] += alpha * delta[a][a];
            for b in 0..k {
                j_new[a][b] = if a == b { 0.0 } else { j[a][b] + alpha * delta[a][b] };
            }
        }
        let (m_new, log_z_new) = model_moments(&h_new, &j_new, &states);
        let ll_new = likelihood(&h_new, &j_new, log_z_new);
        // ties within rounding are accepted so the last digits can still move
        if !(ll_new >= ll - 1e-15 * ll.abs().max(1.0)) {
            alpha *= 0.5;
            if alpha < 1e-12 {
                break;
            }
            continue;
        }
        (err, delta) = error_of(&m_new);
        h = h_new;
        j = j_new;
        ll = ll_new;
        alpha *= cfg.growth;
    }
    let converged = err <= cfg.tol;
    if !converged {
        log::info!("Ising fit stopped after {iterations} iterations with residual {err:.3e}");
    }
    Ok(IsingFit { model: IsingModel::new(h, j)?, residual: err, iterations, converged })
}

/// Draws `n` schedules. Exact mode inverts the cumulative state table; for
/// `K > 20` a single-site Gibbs chain is used with burn-in `100·K` sweeps and
/// thinning `K`.
pub fn ising_sample(model: &IsingModel, n: usize, seed: u64) -> Vec<Vec<bool>> {
    let k = model.num_devices();
    match model.probabilities() {
        Some(p) => {
            let mut cdf = Vec::with_capacity(p.len());
            let mut acc = 0.0;
            for &x in p {
                acc += x;
                cdf.push(acc);
            }
            let total = acc;
            (0..n)
                .map(|i| {
                    let u: f64 = stream_rng(seed, i as u64).random::<f64>() * total;
                    let s = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
                    (0..k).map(|a| s >> a & 1 == 1).collect()
                })
                .collect()
        }
        None => gibbs_sample(model, n, seed),
    }
}

fn gibbs_sample(model: &IsingModel, n: usize, seed: u64) -> Vec<Vec<bool>> {
    let k = model.num_devices();
    let mut rng = stream_rng(seed, 0);
    let mut b = vec![false; k];
    let sweep = |b: &mut Vec<bool>, rng: &mut rand_chacha::ChaCha8Rng| {
        for a in 0..k {
            let mut field = model.h[a].clamp(-FIELD_CAP, FIELD_CAP);
            for c in (0..k).filter(|&c| c != a && b[c]) {
                field += model.j[a][c].clamp(-FIELD_CAP, FIELD_CAP);
            }
            let p = 1.0 / (1.0 + (-field).exp());
            b[a] = rng.random::<f64>() < p;
        }
    };
    for _ in 0..100 * k {
        sweep(&mut b, &mut rng);
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        for _ in 0..k {
            sweep(&mut b, &mut rng);
        }
        out.push(b.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn independent_target_gives_zero_parameters() {
        let t = vec![vec![0.5, 0.25], vec![0.25, 0.5]];
        let fit = ising_fit(&t, &IsingFitConfig::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.model.h.iter().all(|h| h.abs() < 1e-12));
        assert!(fit.model.j[0][1].abs() < 1e-12);
    }

    #[test]
    fn single_device_logit() {
        let p = 0.3;
        let fit = ising_fit(&[vec![p]], &IsingFitConfig { tol: 1e-12, ..Default::default() }).unwrap();
        assert!((fit.model.h[0] - (p / (1.0 - p)).ln()).abs() < 1e-9);
    }

    #[test]
    fn saturated_field_gives_all_ones() {
        let m = IsingModel::new(vec![1e3, 1e3], vec![vec![0.0; 2]; 2]).unwrap();
        let s = ising_sample(&m, 1000, 1);
        assert!(s.iter().all(|b| b.iter().all(|&x| x)));
    }

    #[test]
    fn boundary_target_does_not_converge() {
        let t = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let fit = ising_fit(&t, &IsingFitConfig::default()).unwrap();
        assert!(!fit.converged && fit.residual > 1e-6);
    }
}
