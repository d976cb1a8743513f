//! Independent scheduling: maximize `Σ_k π_k G_k(P_k)` subject to the power
//! limits, the feature-time budget, the Jensen rate bounds and the energy
//! budget.
//!
//! With `z_k = π_k P_k` every term becomes the perspective
//! `A π z / (σ² z + η² π)`, which is jointly concave, while the energy budget
//! becomes linear. The lifted problem is therefore solved directly first; the
//! block alternation (π-LP, sum-of-ratios in `P`, and a McCormick SCA step on a
//! shrinking sub-box) then polishes the incumbent and never accepts a step that
//! lowers the objective or leaves the feasible set.

use std::time::Instant;

use super::conic::ConicProgram;
use super::convex::{inner_convex_solve, ConcaveObjective, LinearObjective, Projector};
use super::ratio::{jong_solve, RatioProgram, RatioTerm};
use super::{drop_pinned_rows, gain_terms, GainTerms, McCormickState, SolverConfig, SolverReport};
use crate::error::{Error, Result};
use crate::model::IndependentPolicy;
use crate::network::{build_constraints_independent, check_independent, ConstraintSet, Layout, CHECK_TOL};
use crate::sim::Scenario;

struct LiftedGain<'a> {
    terms: &'a [GainTerms],
    p_max: &'a [f64],
}

const PI_EPS: f64 = 1e-12;

impl ConcaveObjective for LiftedGain<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        let k = self.terms.len();
        let mut v = 0.0;
        for (i, t) in self.terms.iter().enumerate() {
            let (pi, z) = (x[i].max(0.0), x[k + i].max(0.0));
            v += t.constant * pi;
            if pi < PI_EPS {
                continue;
            }
            for &(a, s2, e2) in &t.groups {
                v += a * pi * z / (s2 * z + e2 * pi);
            }
        }
        v
    }

    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        let k = self.terms.len();
        for (i, t) in self.terms.iter().enumerate() {
            let (pi, z) = (x[i].max(0.0), x[k + i].max(0.0));
            let (mut gp, mut gz) = (t.constant, 0.0);
            for &(a, s2, e2) in &t.groups {
                // degree-zero homogeneous gradient; at the apex use the ray P = P_max
                let (pp, zz) = if pi < PI_EPS { (1.0, self.p_max[i]) } else { (pi, z) };
                let den = s2 * zz + e2 * pp;
                gp += a * s2 * zz * zz / (den * den);
                gz += a * e2 * pp * pp / (den * den);
            }
            g[i] = gp;
            g[k + i] = gz;
        }
    }
}

fn objective(terms: &[GainTerms], pi: &[f64], p: &[f64]) -> f64 {
    terms.iter().zip(pi.iter().zip(p)).map(|(t, (&a, &b))| a * t.value(b)).sum()
}

/// Constraint set of the lifted problem over `x = (π, z)`, `z = π ∘ P`.
pub fn lifted_constraints(scenario: &Scenario) -> Result<ConstraintSet> {
    let k = scenario.num_devices();
    let p_max = scenario.max_power();
    let base = build_constraints_independent(scenario, &McCormickState::full(&p_max))?;
    let layout = Layout::Independent { k };
    let mut lower = vec![0.0; 2 * k];
    let mut upper = vec![1.0; k];
    lower[k..].fill(0.0);
    upper.extend_from_slice(&p_max);
    let mut cs = ConstraintSet::new(layout, lower, upper);
    for r in base.rows.iter().filter(|r| !r.label.starts_with("energy-envelope")) {
        cs.push(r.label.clone(), r.coeffs.clone(), r.rhs);
    }
    let budget = scenario.energy.value();
    if budget.is_finite() {
        let mut row = vec![0.0; 2 * k];
        for (i, d) in scenario.devices.iter().enumerate() {
            row[i] = d.feature_tx_power * scenario.timing.feature;
            row[k + i] = scenario.timing.sensing;
        }
        cs.push("energy", row, budget);
    }
    for i in 0..k {
        let mut row = vec![0.0; 2 * k];
        row[k + i] = 1.0;
        row[i] = -p_max[i];
        cs.push(format!("power-coupling[{i}]"), row, 0.0);
    }
    cs.validate()?;
    Ok(cs)
}

/// The lifted problem as a second-order-cone program over `(π, z, t)`, one
/// `t` per ratio group: `t ≤ xy/(x+y)` with `x = π/σ²`, `y = z/η²` is the cone
/// `‖(2t, x − y)‖ ≤ x + y − 2t`.
fn lifted_socp(lifted: &ConstraintSet, terms: &[GainTerms]) -> ConicProgram {
    let k = terms.len();
    let mut c = vec![0.0; 2 * k];
    let mut cones = Vec::new();
    for (i, t) in terms.iter().enumerate() {
        c[i] -= t.constant;
        for &(a, s2, e2) in &t.groups {
            if s2 == 0.0 {
                c[k + i] -= a / e2;
                continue;
            }
            c.push(-a);
            cones.push((i, c.len() - 1, 1.0 / s2, 1.0 / e2));
        }
    }
    let mut prog = ConicProgram::new(c);
    prog.push_constraints(lifted);
    for (i, t, sx, sy) in cones {
        prog.push_soc(vec![
            (vec![(i, sx), (k + i, sy), (t, -2.0)], 0.0),
            (vec![(t, 2.0)], 0.0),
            (vec![(i, sx), (k + i, -sy)], 0.0),
        ]);
    }
    prog
}

fn unlift(x: &[f64], p_max: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let k = p_max.len();
    let pi: Vec<f64> = x[..k].iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let p = (0..k)
        .map(|i| if pi[i] > PI_EPS { (x[k + i] / pi[i]).clamp(0.0, p_max[i]) } else { 0.0 })
        .collect();
    (pi, p)
}

struct Surrogate<'a> {
    terms: &'a [GainTerms],
    pi0: Vec<f64>,
    g0: Vec<f64>,
}

impl ConcaveObjective for Surrogate<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        let k = self.terms.len();
        (0..k)
            .map(|i| self.pi0[i] * self.terms[i].value(x[k + i]) + self.g0[i] * (x[i] - self.pi0[i]))
            .sum()
    }

    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        let k = self.terms.len();
        for i in 0..k {
            g[i] = self.g0[i];
            g[k + i] = self.pi0[i] * self.terms[i].derivative(x[k + i]);
        }
    }
}

fn pack(pi: &[f64], p: &[f64]) -> Vec<f64> {
    let mut x = pi.to_vec();
    x.extend_from_slice(p);
    x
}

fn feasible(scenario: &Scenario, pi: &[f64], p: &[f64]) -> bool {
    check_independent(scenario, &IndependentPolicy::new(pi.to_vec(), p.to_vec()), CHECK_TOL)
        .map(|r| r.feasible())
        .unwrap_or(false)
}

/// Ratio program in `P` with `π` pinned: one ratio per device and noise group.
pub(crate) fn power_ratio_program(cs: ConstraintSet, terms: &[GainTerms], weights: &[f64]) -> RatioProgram {
    let n = cs.num_vars();
    let layout = cs.layout;
    let mut rterms = Vec::new();
    for (i, t) in terms.iter().enumerate() {
        if weights[i] <= 0.0 {
            continue;
        }
        for &(a, s2, e2) in &t.groups {
            let mut num = vec![0.0; n];
            let mut den = vec![0.0; n];
            num[layout.power(i)] = weights[i] * a;
            den[layout.power(i)] = s2;
            rterms.push(RatioTerm { num, num_const: 0.0, den, den_const: e2 });
        }
    }
    RatioProgram { terms: rterms, linear: vec![0.0; n], constraints: cs }
}

/// Solves the independent scheduling problem.
pub fn solve_independent(scenario: &Scenario, cfg: &SolverConfig) -> Result<SolverReport<IndependentPolicy>> {
    let start = Instant::now();
    scenario.validate()?;
    let k = scenario.num_devices();
    let p_max = scenario.max_power();
    let terms = gain_terms(&scenario.devices);
    let lifted = lifted_constraints(scenario)?;

    let mut x0 = vec![0.5; 2 * k];
    for i in 0..k {
        x0[k + i] = 0.25 * p_max[i];
    }
    let (x0, _) = Projector::new(&lifted).project(&x0, cfg.inner.projection_cycles, cfg.inner.projection_tol);
    if lifted.max_violation(&x0) > 1e-7 {
        return Err(Error::Infeasible(lifted.violated(&x0, 1e-7)));
    }
    let projector = Projector::new(&lifted);
    let conic = lifted_socp(&lifted, &terms).solve(cfg.conic_max_iter).and_then(|sol| {
        // clean up interior-point round-off with an exact projection
        let (x, _) = projector.project(&sol.x[..2 * k], cfg.inner.projection_cycles, cfg.inner.projection_tol);
        (lifted.max_violation(&x) <= 1e-9).then_some((x, sol))
    });
    let (lifted_x, lifted_residual, mut converged, exact) = match conic {
        Some((x, sol)) => {
            log::debug!("lifted cone program: {} in {} iterations", sol.status, sol.iterations);
            (x, 0.0, true, true)
        }
        None => {
            log::info!("cone program failed; falling back to projected gradient on the lifted problem");
            let obj = LiftedGain { terms: &terms, p_max: &p_max };
            let r = inner_convex_solve(&obj, &lifted, &x0, &cfg.inner);
            (r.x, r.kkt_residual, r.converged, false)
        }
    };
    let (mut pi, mut p) = unlift(&lifted_x, &p_max);
    let mut f = objective(&terms, &pi, &p);
    let mut history = vec![f];
    let mut residuals = vec![("lifted-kkt".to_string(), lifted_residual)];
    let max_outer = if exact && feasible(scenario, &pi, &p) { 0 } else { cfg.max_outer };

    let mut mc = McCormickState::full(&p_max);
    mc.recenter(&pi, &p, cfg.shrink, cfg.floor);
    let mut iterations = 0;
    let mut jong_residual = 0.0;
    let mut outer_converged = max_outer == 0;
    let better = |new: f64, old: f64| new > old + 1e-12 * old.abs().max(1e-300);
    while iterations < max_outer {
        iterations += 1;
        let f_start = f;

        // π-block: power pinned, linear objective in π
        let cs = build_constraints_independent(scenario, &mc.with_pinned_power(&p))?;
        let mut c = vec![0.0; 2 * k];
        for i in 0..k {
            c[i] = terms[i].value(p[i]);
        }
        let r = inner_convex_solve(&LinearObjective { c }, &cs, &pack(&pi, &p), &cfg.inner);
        let cand: Vec<f64> = r.x[..k].iter().map(|v| v.clamp(0.0, 1.0)).collect();
        let fc = objective(&terms, &cand, &p);
        if better(fc, f) && feasible(scenario, &cand, &p) {
            pi = cand;
            f = fc;
        }

        // P-block: π pinned, sum of ratios in P
        let mut cs = build_constraints_independent(scenario, &mc.with_pinned_pi(&pi))?;
        drop_pinned_rows(&mut cs);
        let rp = power_ratio_program(cs, &terms, &pi);
        if !rp.terms.is_empty() {
            let r = jong_solve(&rp, &pack(&pi, &p), &cfg.jong, &cfg.inner)?;
            jong_residual = r.residuals.first().map_or(0.0, |v| v.1);
            let cand: Vec<f64> = (0..k).map(|i| r.policy[k + i].clamp(0.0, p_max[i])).collect();
            let fc = objective(&terms, &pi, &cand);
            if better(fc, f) && feasible(scenario, &pi, &cand) {
                p = cand;
                f = fc;
            }
        }

        // joint step on the McCormick sub-box with a concave surrogate
        let cs = build_constraints_independent(scenario, &mc)?;
        let sur = Surrogate { terms: &terms, pi0: pi.clone(), g0: (0..k).map(|i| terms[i].value(p[i])).collect() };
        let r = inner_convex_solve(&sur, &cs, &pack(&pi, &p), &cfg.inner);
        let cand_pi: Vec<f64> = r.x[..k].iter().map(|v| v.clamp(0.0, 1.0)).collect();
        let cand_p: Vec<f64> = (0..k).map(|i| r.x[k + i].clamp(0.0, p_max[i])).collect();
        let fc = objective(&terms, &cand_pi, &cand_p);
        if better(fc, f) && feasible(scenario, &cand_pi, &cand_p) {
            pi = cand_pi;
            p = cand_p;
            f = fc;
        }

        mc.recenter(&pi, &p, cfg.shrink, cfg.floor);
        history.push(f);
        if f - f_start <= cfg.rel_tol * f.abs().max(1e-300) {
            outer_converged = true;
            break;
        }
    }
    converged &= outer_converged;
    residuals.push(("ratio".into(), jong_residual));
    residuals.push(("outer-change".into(), history.windows(2).last().map_or(0.0, |w| w[1] - w[0])));

    let mut policy = IndependentPolicy::new(pi, p);
    restore_energy(scenario, &mut policy, cfg.restore_tol);
    finish(scenario, policy, &terms, iterations, converged, residuals, history, start)
}

/// Scales π uniformly until the bilinear energy constraint holds.
pub(crate) fn restore_energy(scenario: &Scenario, policy: &mut IndependentPolicy, tol: f64) {
    let budget = scenario.energy.value();
    if !budget.is_finite() {
        return;
    }
    let e = crate::network::expected_energy(&policy.pi, &policy.power, &scenario.devices, &scenario.timing);
    if e > budget && (e - budget) / budget.max(1.0) > tol * 1e-3 {
        let s = budget / e * (1.0 - 1e-12);
        log::info!("restoring energy feasibility by scaling π by {s:.9}");
        for v in &mut policy.pi {
            *v *= s;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    scenario: &Scenario,
    policy: IndependentPolicy,
    terms: &[GainTerms],
    iterations: usize,
    converged: bool,
    residuals: Vec<(String, f64)>,
    history: Vec<f64>,
    start: Instant,
) -> Result<SolverReport<IndependentPolicy>> {
    let report = check_independent(scenario, &policy, CHECK_TOL)?;
    let objective = objective(terms, &policy.pi, &policy.power);
    Ok(SolverReport {
        objective,
        iterations,
        converged,
        residuals,
        max_violation: report.max_violation,
        feasible: report.feasible(),
        violations: report.labels(),
        history,
        wall_time: start.elapsed(),
        policy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_scenario, ScenarioParams};

    #[test]
    fn lifted_gain_gradient_matches_finite_differences() {
        let s = generate_scenario(3, &ScenarioParams { num_devices: 4, ..Default::default() }).unwrap();
        let terms = gain_terms(&s.devices);
        let p_max = s.max_power();
        let f = LiftedGain { terms: &terms, p_max: &p_max };
        let x = [0.3, 0.7, 0.5, 0.9, 0.1, 0.35, 0.2, 0.5];
        let mut g = vec![0.0; x.len()];
        f.gradient(&x, &mut g);
        for j in 0..x.len() {
            let h = 1e-6;
            let (mut up, mut dn) = (x.to_vec(), x.to_vec());
            up[j] += h;
            dn[j] -= h;
            let fd = (f.value(&up) - f.value(&dn)) / (2.0 * h);
            assert!((fd - g[j]).abs() <= 1e-5 * g[j].abs().max(1.0), "coordinate {j}: {fd} vs {}", g[j]);
        }
    }
}
