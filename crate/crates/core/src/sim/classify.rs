//! Gaussian maximum-likelihood classifier standing in for a trained model.
//!
//! The fusion centre knows the true class means and covariances, so the
//! decision rule is the minimum Mahalanobis distance over the features of the
//! scheduled devices. Unscheduled devices contribute nothing.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::simulate::{draw_schedules, Estimate, SamplerKind};
use super::Scenario;
use crate::error::{invalid, Result};
use crate::model::{feature_precision, IndependentPolicy, JointPolicy};
use crate::sampler::stream_rng;

/// Whitened class offsets for one schedule: `w[c][c'] = L⁻¹ D⁻¹ (μ_c − μ_c')`,
/// so that with `y = μ_c + D L z` the distance to class `c'` is `‖z + w[c][c']‖²`.
struct Discriminant {
    /// Dimension of the informative feature subset (0 means a blind guess).
    dim: usize,
    w: Vec<Vec<DVector<f64>>>,
}

fn discriminant(scenario: &Scenario, schedule: &[bool], power: &[f64]) -> Result<Discriminant> {
    let l = scenario.devices[0].stats.num_classes();
    // (global feature index, class means, 1/D)
    let mut feats: Vec<(usize, Vec<f64>, f64)> = Vec::new();
    let mut offset = 0;
    for (k, d) in scenario.devices.iter().enumerate() {
        let s = &d.stats;
        if schedule[k] {
            for n in 0..s.num_features() {
                let prec = feature_precision(s.residual_var()[n], s.noise_var()[n], power[k]);
                if prec > 0.0 {
                    feats.push((offset + n, s.means().iter().map(|m| m[n]).collect(), prec.sqrt()));
                }
            }
        }
        offset += s.num_features();
    }
    let dim = feats.len();
    let chol = match &scenario.correlation.rho {
        Some(rho) if dim > 0 => {
            let sub = DMatrix::from_fn(dim, dim, |a, b| rho[feats[a].0][feats[b].0]);
            Some(Cholesky::new(sub).ok_or_else(|| invalid("feature correlation submatrix is not positive definite"))?)
        }
        _ => None,
    };
    let w = (0..l)
        .map(|c| {
            (0..l)
                .map(|c2| {
                    let v = DVector::from_iterator(dim, feats.iter().map(|f| (f.1[c] - f.1[c2]) * f.2));
                    match &chol {
                        Some(ch) => ch.l().solve_lower_triangular(&v).unwrap_or(v),
                        None => v,
                    }
                })
                .collect()
        })
        .collect();
    Ok(Discriminant { dim, w })
}

fn run_trials(scenario: &Scenario, policy: &JointPolicy, schedules: &[Vec<bool>], seed: u64) -> Result<Estimate> {
    let l = scenario.devices[0].stats.num_classes();
    let keys: Vec<&[bool]> = {
        let set: BTreeMap<&[bool], ()> = schedules.iter().map(|b| (b.as_slice(), ())).collect();
        set.into_keys().collect()
    };
    let discs: Vec<Discriminant> =
        keys.par_iter().map(|b| discriminant(scenario, b, &policy.power)).collect::<Result<_>>()?;
    let index: BTreeMap<&[bool], usize> = keys.iter().enumerate().map(|(i, b)| (*b, i)).collect();
    let outcomes: Vec<f64> = schedules
        .par_iter()
        .enumerate()
        .map(|(t, b)| {
            let d = &discs[index[b.as_slice()]];
            if d.dim == 0 {
                return 1.0 / l as f64;
            }
            let mut rng = stream_rng(seed, t as u64);
            let c = rng.random_range(0..l);
            let z = DVector::from_iterator(d.dim, (0..d.dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let mut best = (f64::INFINITY, 0);
            for c2 in 0..l {
                let dist = (&z + &d.w[c][c2]).norm_squared();
                if dist < best.0 {
                    best = (dist, c2);
                }
            }
            if best.1 == c {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok(Estimate::from_samples(&outcomes))
}

// schedule and feature draws use separate streams derived from one seed
fn split_seed(seed: u64) -> (u64, u64) {
    (seed, seed ^ 0x9e37_79b9_7f4a_7c15)
}

/// Classification accuracy of the proxy under an independent policy.
/// Trials with no informative feature count as a blind guess, `1/L`.
pub fn classify_proxy(policy: &IndependentPolicy, scenario: &Scenario, trials: usize, seed: u64) -> Result<Estimate> {
    classify_proxy_joint(&policy.to_joint(), scenario, trials, SamplerKind::Independent, seed)
}

/// Classification accuracy of the proxy with schedules drawn by `kind`.
pub fn classify_proxy_joint(
    policy: &JointPolicy,
    scenario: &Scenario,
    trials: usize,
    kind: SamplerKind,
    seed: u64,
) -> Result<Estimate> {
    scenario.validate()?;
    policy.validate(&scenario.devices)?;
    if trials == 0 {
        return Err(invalid("trials must be >= 1"));
    }
    let (s_sched, s_feat) = split_seed(seed);
    let (schedules, _, _) = draw_schedules(&policy.moments, trials, kind, s_sched)?;
    run_trials(scenario, policy, &schedules, s_feat)
}

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &x in &idx[i..=j] {
            ranks[x] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties. `NaN` when either
/// input is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(invalid("spearman needs two samples of equal length >= 2"));
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut num = 0.0;
    let (mut va, mut vb) = (0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        num += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    Ok(num / (va * vb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_scenario, ScenarioParams};

    #[test]
    fn blind_guess_at_zero_policy() {
        let s = generate_scenario(1, &ScenarioParams { num_devices: 3, num_classes: 4, ..Default::default() }).unwrap();
        let acc = classify_proxy(&IndependentPolicy::all_off(3), &s, 200, 1).unwrap();
        assert_eq!(acc.mean, 0.25);
    }

    #[test]
    fn wide_separation_is_nearly_perfect() {
        let p = ScenarioParams { num_devices: 2, separation: 1.0, ..Default::default() };
        let s = generate_scenario(2, &p).unwrap().with_mean_scale(100.0);
        let acc = classify_proxy(&IndependentPolicy::new(vec![1.0; 2], s.max_power()), &s, 2000, 3).unwrap();
        assert!(acc.mean > 0.999, "{}", acc.mean);
    }

    #[test]
    fn correlated_features_reduce_to_mahalanobis() {
        // one feature per device, two devices with correlation 0.8 and opposite means:
        // the error is Φ(−δ/2) with δ² = Δμᵀ Γ⁻¹ Δμ
        use crate::model::{ClassStatistics, CorrelationModel, Device};
        let base = generate_scenario(1, &ScenarioParams { num_devices: 2, num_features: 1, ..Default::default() }).unwrap();
        let mut s = base.clone();
        for (i, d) in s.devices.iter_mut().enumerate() {
            let sign = if i == 0 { 1.0 } else { -1.0 };
            *d = Device {
                stats: ClassStatistics::new(vec![vec![0.0], vec![sign]], vec![1.0], vec![0.0]).unwrap(),
                ..d.clone()
            };
        }
        s.correlation = CorrelationModel { rho: Some(vec![vec![1.0, 0.8], vec![0.8, 1.0]]), cross: None };
        let acc = classify_proxy(&IndependentPolicy::new(vec![1.0; 2], s.max_power()), &s, 100_000, 7).unwrap();
        // Δμ = (1, −1), Γ = ρ: δ² = 2 / (1 − 0.8)
        let delta = (2.0f64 / 0.2).sqrt();
        let want = 1.0 - statrs::function::erf::erfc(delta / 2.0 / 2f64.sqrt()) / 2.0;
        assert!((acc.mean - want).abs() < 3.5 * acc.se.max(1e-4), "{} vs {want}", acc.mean);
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 40.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        // ties: ranks (1.5, 1.5, 3) vs (1, 2, 3)
        let r = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((r - 0.866_025_403_784_438_6).abs() < 1e-12);
    }
}
