//! Reference policies: fair sensing, importance-aware greedy, and all-on.

use std::time::Instant;

use super::independent::restore_energy;
use super::SolverReport;
use crate::error::{Error, Result};
use crate::model::{network_gain_independent, ExactGainModel, IndependentPolicy};
use crate::network::{check_independent, expected_energy, rate_coefficient, CHECK_TOL};
use crate::sim::Scenario;

fn report(scenario: &Scenario, policy: IndependentPolicy, start: Instant) -> Result<SolverReport<IndependentPolicy>> {
    let check = check_independent(scenario, &policy, CHECK_TOL)?;
    Ok(SolverReport {
        objective: network_gain_independent(&policy, &scenario.devices)?,
        iterations: 0,
        converged: true,
        residuals: Vec::new(),
        max_violation: check.max_violation,
        feasible: check.feasible(),
        violations: check.labels(),
        history: Vec::new(),
        wall_time: start.elapsed(),
        policy,
    })
}

/// Common sensing probability for every device, as large as the constraints
/// allow with every device at `P_max`; then a common power level `p`
/// (`P_k = min(p, P_max,k)`) as large as the energy budget allows.
pub fn policy_fair(scenario: &Scenario) -> Result<SolverReport<IndependentPolicy>> {
    let start = Instant::now();
    scenario.validate()?;
    let k = scenario.num_devices();
    let t = &scenario.timing;
    let p_max = scenario.max_power();
    let budget = scenario.energy.value();

    // each constraint restricted to π = p·1 reads c·p ≤ d
    let mut rows: Vec<(String, f64, f64)> = Vec::new();
    let time: f64 = scenario
        .devices
        .iter()
        .zip(&scenario.rates.efficiency)
        .map(|(d, e)| d.feature_payload / (e * scenario.radio.bandwidth))
        .sum();
    rows.push(("feature-time".into(), time, t.feature));
    for i in 0..k {
        let a = rate_coefficient(scenario, i);
        if a == f64::NEG_INFINITY {
            continue;
        }
        if a == f64::INFINITY {
            return Err(Error::Infeasible(vec![format!("rate[{i}]")]));
        }
        rows.push((format!("rate[{i}]"), 1.0 - a * (k as f64 - 1.0), 1.0 - a * k as f64));
    }
    if budget.is_finite() {
        let e: f64 = scenario.devices.iter().map(|d| d.max_sense_power * t.sensing + d.feature_tx_power * t.feature).sum();
        rows.push(("energy".into(), e, budget));
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut blocking = Vec::new();
    for (label, c, d) in &rows {
        if *c > 0.0 {
            hi = hi.min(d / c);
        } else if *c < 0.0 {
            lo = lo.max(d / c);
        } else if *d < 0.0 {
            blocking.push(label.clone());
        }
    }
    if !blocking.is_empty() || lo > hi + 1e-12 {
        let mut labels = blocking;
        for (label, c, d) in &rows {
            if (*c > 0.0 && d / c < lo) || (*c < 0.0 && d / c > hi) {
                labels.push(label.clone());
            }
        }
        return Err(Error::Infeasible(labels));
    }
    let pi = hi.max(lo);

    let power = if pi <= 0.0 {
        vec![0.0; k]
    } else {
        let energy_at = |p: f64| -> f64 {
            scenario
                .devices
                .iter()
                .map(|d| (p.min(d.max_sense_power) * t.sensing + d.feature_tx_power * t.feature) * pi)
                .sum()
        };
        let top = p_max.iter().copied().fold(0.0, f64::max);
        let level = if energy_at(top) <= budget {
            top
        } else if energy_at(0.0) > budget {
            0.0
        } else {
            let (mut a, mut b) = (0.0, top);
            for _ in 0..100 {
                let m = 0.5 * (a + b);
                if energy_at(m) <= budget {
                    a = m;
                } else {
                    b = m;
                }
            }
            a
        };
        p_max.iter().map(|&pm| level.min(pm)).collect()
    };
    let mut policy = IndependentPolicy::new(vec![pi; k], power);
    restore_energy(scenario, &mut policy, 0.0);
    report(scenario, policy, start)
}

/// Devices in decreasing order of their own gain at `P_max` (the exact
/// single-device gain when a feature correlation is configured), lower index
/// first on ties.
fn importance_order(scenario: &Scenario) -> Result<Vec<(usize, f64)>> {
    let k = scenario.num_devices();
    let keys: Vec<f64> = match &scenario.correlation.rho {
        Some(rho) => {
            let model = ExactGainModel::new(&scenario.devices, rho)?;
            let p_max = scenario.max_power();
            (0..k)
                .map(|i| {
                    let mut m = vec![vec![0.0; k]; k];
                    m[i][i] = 1.0;
                    model.expected(&m, &p_max)
                })
                .collect::<Result<_>>()?
        }
        None => scenario.devices.iter().map(|d| d.gain_at_max()).collect(),
    };
    let mut order: Vec<(usize, f64)> = keys.into_iter().enumerate().collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(order)
}

/// Greedy: in order of importance, schedule each device in every cycle with
/// the largest affordable power until the energy budget or another
/// constraint stops it; the remaining devices never sense.
pub fn policy_importance(scenario: &Scenario) -> Result<SolverReport<IndependentPolicy>> {
    let start = Instant::now();
    scenario.validate()?;
    let k = scenario.num_devices();
    let t = &scenario.timing;
    let budget = scenario.energy.value();
    let mut policy = IndependentPolicy::all_off(k);
    let mut scheduled = 0;
    for (i, key) in importance_order(scenario)? {
        if key <= 0.0 {
            break;
        }
        let d = &scenario.devices[i];
        let remaining = budget - expected_energy(&policy.pi, &policy.power, &scenario.devices, t);
        let affordable = if !budget.is_finite() {
            d.max_sense_power
        } else if t.sensing > 0.0 {
            ((remaining - d.feature_tx_power * t.feature) / t.sensing).min(d.max_sense_power)
        } else if remaining >= d.feature_tx_power * t.feature {
            d.max_sense_power
        } else {
            -1.0
        };
        if affordable <= 0.0 {
            if scheduled == 0 {
                return Err(Error::Infeasible(vec!["energy".into()]));
            }
            break;
        }
        let mut trial = policy.clone();
        trial.pi[i] = 1.0;
        trial.power[i] = affordable;
        let check = check_independent(scenario, &trial, CHECK_TOL)?;
        if !check.feasible() {
            if scheduled == 0 {
                return Err(Error::Infeasible(check.labels()));
            }
            break;
        }
        policy = trial;
        scheduled += 1;
    }
    report(scenario, policy, start)
}

/// Every device senses in every cycle at `P_max`; constraints are only
/// reported.
pub fn policy_all_on(scenario: &Scenario) -> Result<SolverReport<IndependentPolicy>> {
    let start = Instant::now();
    scenario.validate()?;
    let k = scenario.num_devices();
    report(scenario, IndependentPolicy::new(vec![1.0; k], scenario.max_power()), start)
}
