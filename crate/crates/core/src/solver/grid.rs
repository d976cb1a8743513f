//! Exhaustive search over equally spaced grids, used as an oracle for small
//! networks. Every candidate is checked against the unrelaxed constraints.

use std::time::Instant;

use rayon::prelude::*;

use super::{gain_terms, SolverReport};
use crate::error::{invalid, Result};
use crate::linalg::min_eigenvalue;
use crate::model::{simplified_gain_from_gains, validate_cross, IndependentPolicy, JointPolicy};
use crate::network::{
    avg_rate_lower_bound_independent, avg_rate_lower_bound_joint, check_independent, check_joint, CHECK_TOL,
};
use crate::sim::Scenario;

/// Largest network handled by the grid search.
pub const GRID_MAX_DEVICES: usize = 3;

fn digits(mut idx: usize, n: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for d in out.iter_mut() {
        *d = idx % n;
        idx /= n;
    }
    out
}

/// Keeps the candidate with the larger value, the lower index on ties.
fn pick(a: (f64, usize), b: (f64, usize)) -> (f64, usize) {
    if a.0 > b.0 || (a.0 == b.0 && a.1 <= b.1) {
        a
    } else {
        b
    }
}

const NONE: (f64, usize) = (f64::NEG_INFINITY, usize::MAX);

fn rate_ok(rate: f64, r_min: f64) -> bool {
    rate >= r_min * (1.0 - 1e-12) - 1e-9
}

struct Setup {
    k: usize,
    n: usize,
    levels: Vec<f64>,
    /// `gain[k][j] = G_k(P_max,k · levels[j])`
    gain: Vec<Vec<f64>>,
    /// `energy[k][j]` = sensing + feature energy of device `k` when it senses at level `j`
    energy: Vec<Vec<f64>>,
    time: Vec<f64>,
}

fn setup(scenario: &Scenario, points: usize, axes: usize, cap: f64) -> Result<Setup> {
    scenario.validate()?;
    let k = scenario.num_devices();
    if k > GRID_MAX_DEVICES {
        return Err(invalid(format!("grid search is limited to K <= {GRID_MAX_DEVICES}")));
    }
    if points < 2 {
        return Err(invalid("grid search needs at least 2 points per axis"));
    }
    let cost = (points as f64).powi(axes as i32);
    if cost > cap {
        return Err(invalid(format!("grid search would visit {cost:.3e} points (cap {cap:.3e})")));
    }
    let levels: Vec<f64> = (0..points).map(|j| j as f64 / (points - 1) as f64).collect();
    let terms = gain_terms(&scenario.devices);
    let t = &scenario.timing;
    let gain = (0..k).map(|i| levels.iter().map(|u| terms[i].value(u * scenario.devices[i].max_sense_power)).collect()).collect();
    let energy = scenario
        .devices
        .iter()
        .map(|d| levels.iter().map(|u| u * d.max_sense_power * t.sensing + d.feature_tx_power * t.feature).collect())
        .collect();
    let time = scenario
        .devices
        .iter()
        .zip(&scenario.rates.efficiency)
        .map(|(d, e)| d.feature_payload / (e * scenario.radio.bandwidth))
        .collect();
    Ok(Setup { k, n: points, levels, gain, energy, time })
}

fn time_ok(s: &Setup, scenario: &Scenario, d: &[f64]) -> bool {
    let used: f64 = d.iter().zip(&s.time).map(|(a, b)| a * b).sum();
    used <= scenario.timing.feature * (1.0 + 1e-12)
}

fn energy_ok(s: &Setup, budget: f64, d: &[f64], pidx: &[usize]) -> bool {
    if !budget.is_finite() {
        return true;
    }
    let e: f64 = (0..s.k).map(|i| d[i] * s.energy[i][pidx[i]]).sum();
    e <= budget * (1.0 + 1e-12)
}

fn report_independent(
    scenario: &Scenario,
    policy: IndependentPolicy,
    objective: f64,
    visited: usize,
    start: Instant,
) -> Result<SolverReport<IndependentPolicy>> {
    let check = check_independent(scenario, &policy, CHECK_TOL)?;
    Ok(SolverReport {
        policy,
        objective,
        iterations: visited,
        converged: true,
        residuals: Vec::new(),
        max_violation: check.max_violation,
        feasible: check.feasible(),
        violations: check.labels(),
        history: Vec::new(),
        wall_time: start.elapsed(),
    })
}

/// Best independent policy on a grid of `points` values per axis for each
/// `π_k ∈ [0, 1]` and `P_k ∈ [0, P_max,k]`.
pub fn policy_grid_search(scenario: &Scenario, points: usize, cost_cap: f64) -> Result<SolverReport<IndependentPolicy>> {
    let start = Instant::now();
    let k = scenario.num_devices();
    let s = setup(scenario, points, 2 * k, cost_cap)?;
    let n = s.n;
    let combos = n.pow(k as u32);
    let budget = scenario.energy.value();
    let t = &scenario.timing;
    let best = (0..combos)
        .into_par_iter()
        .map(|a| {
            let pidx = digits(a, n, k);
            let pi: Vec<f64> = pidx.iter().map(|&j| s.levels[j]).collect();
            if !time_ok(&s, scenario, &pi) {
                return NONE;
            }
            for i in 0..k {
                let r = avg_rate_lower_bound_independent(
                    &pi,
                    i,
                    t,
                    scenario.rates.efficiency[i],
                    scenario.radio.bandwidth,
                );
                if !rate_ok(r, scenario.rates.r_min[i]) {
                    return NONE;
                }
            }
            let mut best = NONE;
            for b in 0..combos {
                let widx = digits(b, n, k);
                if !energy_ok(&s, budget, &pi, &widx) {
                    continue;
                }
                let v: f64 = (0..k).map(|i| pi[i] * s.gain[i][widx[i]]).sum();
                best = pick(best, (v, a * combos + b));
            }
            best
        })
        .reduce(|| NONE, pick);
    if best.1 == usize::MAX {
        return Err(crate::error::Error::Infeasible(vec!["grid: no feasible point".into()]));
    }
    let pi: Vec<f64> = digits(best.1 / combos, n, k).iter().map(|&j| s.levels[j]).collect();
    let power: Vec<f64> = digits(best.1 % combos, n, k)
        .iter()
        .enumerate()
        .map(|(i, &j)| s.levels[j] * scenario.devices[i].max_sense_power)
        .collect();
    report_independent(scenario, IndependentPolicy::new(pi, power), best.0, combos * combos, start)
}

fn pair_list(k: usize) -> Vec<(usize, usize)> {
    (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect()
}

/// Best joint policy on a grid of `points` values per axis for every diagonal
/// and off-diagonal moment in `[0, 1]` and every power in `[0, P_max,k]`,
/// scored with the simplified joint gain.
///
/// The moment constraints do not depend on the powers and the objective is
/// nondecreasing in every off-diagonal moment, so for each diagonal only the
/// Pareto-maximal feasible off-diagonal vectors are kept.
pub fn policy_grid_search_joint(
    scenario: &Scenario,
    cross: &[Vec<f64>],
    points: usize,
    cost_cap: f64,
) -> Result<SolverReport<JointPolicy>> {
    let start = Instant::now();
    let k = scenario.num_devices();
    validate_cross(cross, k)?;
    let pairs = pair_list(k);
    let s = setup(scenario, points, 2 * k + pairs.len(), cost_cap)?;
    let n = s.n;
    let diag_combos = n.pow(k as u32);
    let pair_combos = n.pow(pairs.len() as u32);
    let budget = scenario.energy.value();
    let t = &scenario.timing;
    let moments_of = |d: &[f64], off: &[f64]| -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; k]; k];
        for i in 0..k {
            m[i][i] = d[i];
        }
        for (x, &(i, j)) in pairs.iter().enumerate() {
            m[i][j] = off[x];
            m[j][i] = off[x];
        }
        m
    };
    let stride = pair_combos * diag_combos;
    let best = (0..diag_combos)
        .into_par_iter()
        .map(|a| {
            let d: Vec<f64> = digits(a, n, k).iter().map(|&j| s.levels[j]).collect();
            if !time_ok(&s, scenario, &d) {
                return NONE;
            }
            let mut feasible: Vec<(usize, Vec<f64>)> = Vec::new();
            for b in 0..pair_combos {
                let off: Vec<f64> = digits(b, n, pairs.len()).iter().map(|&j| s.levels[j]).collect();
                let frechet = pairs.iter().zip(&off).all(|(&(i, j), &v)| {
                    v >= (d[i] + d[j] - 1.0).max(0.0) - 1e-12 && v <= d[i].min(d[j]) + 1e-12
                });
                if !frechet {
                    continue;
                }
                let m = moments_of(&d, &off);
                let cov = nalgebra::DMatrix::from_fn(k, k, |i, j| m[i][j] - d[i] * d[j]);
                if min_eigenvalue(&cov) < -1e-12 {
                    continue;
                }
                let rates = (0..k).all(|i| {
                    let r = avg_rate_lower_bound_joint(&m, i, t, scenario.rates.efficiency[i], scenario.radio.bandwidth);
                    rate_ok(r, scenario.rates.r_min[i])
                });
                if rates {
                    feasible.push((b, off));
                }
            }
            // drop vectors dominated componentwise by another feasible one
            let pareto: Vec<&(usize, Vec<f64>)> = feasible
                .iter()
                .filter(|(b, v)| {
                    !feasible.iter().any(|(c, w)| {
                        c != b && w.iter().zip(v).all(|(x, y)| x >= y) && w.iter().zip(v).any(|(x, y)| x > y)
                    })
                })
                .collect();
            if pareto.is_empty() {
                return NONE;
            }
            let mut best = NONE;
            for p in 0..diag_combos {
                let widx = digits(p, n, k);
                if !energy_ok(&s, budget, &d, &widx) {
                    continue;
                }
                let g: Vec<f64> = (0..k).map(|i| s.gain[i][widx[i]]).collect();
                let base: f64 = (0..k).map(|i| d[i] * g[i]).sum();
                for (b, off) in &pareto {
                    let cross_part: f64 =
                        pairs.iter().zip(off).map(|(&(i, j), v)| v * cross[i][j] * (g[i] + g[j])).sum();
                    best = pick(best, (base + cross_part, a * stride + p * pair_combos + b));
                }
            }
            best
        })
        .reduce(|| NONE, pick);
    if best.1 == usize::MAX {
        return Err(crate::error::Error::Infeasible(vec!["grid: no feasible point".into()]));
    }
    let a = best.1 / stride;
    let p = (best.1 % stride) / pair_combos;
    let b = best.1 % pair_combos;
    let d: Vec<f64> = digits(a, n, k).iter().map(|&j| s.levels[j]).collect();
    let off: Vec<f64> = digits(b, n, pairs.len()).iter().map(|&j| s.levels[j]).collect();
    let power: Vec<f64> = digits(p, n, k)
        .iter()
        .enumerate()
        .map(|(i, &j)| s.levels[j] * scenario.devices[i].max_sense_power)
        .collect();
    let policy = JointPolicy { moments: moments_of(&d, &off), power };
    let gains: Vec<f64> = scenario.devices.iter().zip(&policy.power).map(|(dv, &w)| dv.gain(w)).collect();
    let objective = simplified_gain_from_gains(&policy.moments, &gains, cross);
    let check = check_joint(scenario, &policy, CHECK_TOL)?;
    Ok(SolverReport {
        policy,
        objective,
        iterations: stride * diag_combos,
        converged: true,
        residuals: Vec::new(),
        max_violation: check.max_violation,
        feasible: check.feasible(),
        violations: check.labels(),
        history: Vec::new(),
        wall_time: start.elapsed(),
    })
}
