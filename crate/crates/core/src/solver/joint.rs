//! Joint scheduling over the moment matrix `Π` with the simplified joint gain
//! `Σ_k G_k(P_k) s_k(Π)`, `s_k = Π_kk + Σ_{k'≠k} c_kk' Π_kk'`.

use std::time::Instant;

use super::conic::maximize_over;
use super::convex::Projector;
use super::independent::solve_independent;
use super::{drop_pinned_rows, gain_terms, GainTerms, McCormickState, SolverConfig, SolverReport};
use crate::error::{Error, Result};
use crate::model::{simplified_gain_from_gains, validate_cross, JointPolicy};
use crate::network::{build_constraints_joint, check_joint, expected_energy, Layout, CHECK_TOL};
use crate::sim::Scenario;

fn weights(moments: &[Vec<f64>], cross: &[Vec<f64>]) -> Vec<f64> {
    let k = moments.len();
    (0..k)
        .map(|i| moments[i][i] + (0..k).filter(|&j| j != i).map(|j| cross[i][j] * moments[i][j]).sum::<f64>())
        .collect()
}

struct State<'a> {
    scenario: &'a Scenario,
    layout: Layout,
    terms: Vec<GainTerms>,
    cross: &'a [Vec<f64>],
}

impl State<'_> {
    fn gains(&self, x: &[f64]) -> Vec<f64> {
        (0..self.terms.len()).map(|i| self.terms[i].value(x[self.layout.power(i)])).collect()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        simplified_gain_from_gains(&self.layout.moments(x), &self.gains(x), self.cross)
    }

    fn clean(&self, x: &[f64]) -> Vec<f64> {
        let p_max = self.scenario.max_power();
        let mut y = x.to_vec();
        for i in 0..self.terms.len() {
            y[self.layout.prob(i)] = y[self.layout.prob(i)].clamp(0.0, 1.0);
            let pw = self.layout.power(i);
            y[pw] = y[pw].clamp(0.0, p_max[i]);
        }
        for v in y.iter_mut().skip(self.terms.len()).take(self.layout.num_pairs()) {
            *v = v.clamp(0.0, 1.0);
        }
        y
    }

    fn feasible(&self, x: &[f64]) -> bool {
        check_joint(self.scenario, &self.layout.unpack_joint(x), CHECK_TOL).map(|r| r.feasible()).unwrap_or(false)
    }

    /// Moves to `cand` if it is feasible and strictly better.
    fn accept(&self, x: &mut Vec<f64>, f: &mut f64, cand: Vec<f64>) {
        let fc = self.objective(&cand);
        if fc > *f + 1e-12 * f.abs().max(1e-300) && self.feasible(&cand) {
            *x = cand;
            *f = fc;
        }
    }

    fn diag(&self, x: &[f64]) -> Vec<f64> {
        (0..self.terms.len()).map(|i| x[self.layout.prob(i)].clamp(0.0, 1.0)).collect()
    }

    fn power(&self, x: &[f64]) -> Vec<f64> {
        (0..self.terms.len()).map(|i| x[self.layout.power(i)]).collect()
    }
}

/// Solves the joint scheduling problem for cross coefficients `c`.
///
/// Starts from the independent optimum (its product moments are feasible),
/// then alternates a Π-step, a power step and a McCormick SCA step while
/// re-anchoring the rate linearization at the current diagonal.
/// With `c ≡ 0` the problem is the independent one and is delegated.
pub fn solve_joint(scenario: &Scenario, cross: &[Vec<f64>], cfg: &SolverConfig) -> Result<SolverReport<JointPolicy>> {
    let start = Instant::now();
    scenario.validate()?;
    let k = scenario.num_devices();
    validate_cross(cross, k)?;
    let layout = Layout::Joint { k };
    let p_max = scenario.max_power();
    let st = State { scenario, layout, terms: gain_terms(&scenario.devices), cross };

    let warm = match solve_independent(scenario, cfg) {
        Ok(r) => Some(r),
        Err(Error::Infeasible(_)) => None,
        Err(e) => return Err(e),
    };
    if cross.iter().flatten().all(|&c| c == 0.0) {
        if let Some(r) = warm {
            let policy = r.policy.to_joint();
            let x = layout.pack_joint(&policy);
            let mut residuals = r.residuals;
            residuals.push(("delegated".into(), 0.0));
            return finish(&st, x, r.iterations, r.converged, residuals, r.history, start);
        }
    }
    let x = match &warm {
        Some(r) => layout.pack_joint(&r.policy.to_joint()),
        None => {
            // phase 1 on the joint set, anchored at one half
            let cs = build_constraints_joint(scenario, &McCormickState::full(&p_max), &vec![0.5; k])?;
            let mut x0 = vec![0.25; layout.len()];
            for i in 0..k {
                x0[layout.prob(i)] = 0.5;
                x0[layout.power(i)] = 0.5 * p_max[i];
            }
            let (y, _) = Projector::new(&cs).project(&x0, cfg.inner.projection_cycles, cfg.inner.projection_tol);
            if cs.max_violation(&y) > 1e-7 {
                return Err(Error::Infeasible(cs.violated(&y, 1e-7)));
            }
            y
        }
    };
    let mut starts = vec![x];
    // Π = 0 is always feasible; scaled power levels reach corners of the
    // energy trade-off that block ascent from the warm start cannot
    let levels: Vec<Vec<f64>> = if k <= JOINT_START_MAX_K {
        (0..START_LEVELS.len().pow(k as u32))
            .map(|mut idx| {
                (0..k)
                    .map(|_| {
                        let l = START_LEVELS[idx % START_LEVELS.len()];
                        idx /= START_LEVELS.len();
                        l
                    })
                    .collect()
            })
            .collect()
    } else {
        START_LEVELS.iter().map(|&l| vec![l; k]).collect()
    };
    for lv in levels {
        let mut y = vec![0.0; layout.len()];
        for i in 0..k {
            y[layout.power(i)] = lv[i] * p_max[i];
        }
        starts.push(y);
    }
    let mut best: Option<Ascent> = None;
    let mut iterations = 0;
    for x0 in starts {
        let a = ascend(&st, cfg, x0)?;
        iterations += a.iterations;
        if best.as_ref().is_none_or(|b| a.f > b.f * (1.0 + 1e-12)) {
            best = Some(a);
        }
    }
    let best = best.expect("at least one start");
    let residuals = vec![
        ("failed-steps".to_string(), best.failed_steps as f64),
        ("outer-change".into(), best.history.windows(2).last().map_or(0.0, |w| w[1] - w[0])),
    ];
    finish(&st, best.x, iterations, best.converged, residuals, best.history, start)
}

/// Power levels (fractions of `P_max`) of the extra starts.
const START_LEVELS: [f64; 4] = [1.0, 0.5, 0.25, 0.125];
/// Up to this many devices every combination of start levels is tried;
/// beyond it only common levels.
const JOINT_START_MAX_K: usize = 4;

struct Ascent {
    x: Vec<f64>,
    f: f64,
    history: Vec<f64>,
    iterations: usize,
    converged: bool,
    /// Steps skipped because the cone program failed.
    failed_steps: usize,
}

/// Block ascent from `x`: Π-step, power step and SCA step until the
/// objective stalls. `x` must be feasible.
fn ascend(st: &State, cfg: &SolverConfig, mut x: Vec<f64>) -> Result<Ascent> {
    let (scenario, layout, cross) = (st.scenario, st.layout, st.cross);
    let k = st.terms.len();
    let p_max = scenario.max_power();
    let mut f = st.objective(&x);
    let mut history = vec![f];
    let mut mc = McCormickState::full(&p_max);
    mc.recenter(&st.diag(&x), &st.power(&x), cfg.shrink, cfg.floor);
    let mut iterations = 0;
    let mut converged = false;
    let mut failed_steps = 0;
    while iterations < cfg.max_outer {
        iterations += 1;
        let f_start = f;
        let nu = st.diag(&x);
        let power = st.power(&x);

        // Π-step with power pinned: linear objective over the moment set.
        // Pinning the power makes the energy envelope exact on the full π range.
        let full = McCormickState::full(&p_max);
        let mut cs = build_constraints_joint(scenario, &full.with_pinned_power(&power), &nu)?;
        drop_pinned_rows(&mut cs);
        let g = st.gains(&x);
        let mut c = vec![0.0; layout.len()];
        for i in 0..k {
            c[layout.prob(i)] = g[i];
            for j in i + 1..k {
                c[layout.pair(i, j)] = cross[i][j] * (g[i] + g[j]);
            }
        }
        match maximize_over(&cs, &c, &[], cfg.conic_max_iter) {
            Some(y) => st.accept(&mut x, &mut f, st.clean(&y)),
            None => failed_steps += 1,
        }

        // power step with Π pinned: concave and separable up to the energy row
        let diag = st.diag(&x);
        let mut cs = build_constraints_joint(scenario, &full.with_pinned_pi(&diag), &diag)?;
        for i in 0..k {
            for j in i + 1..k {
                let p = layout.pair(i, j);
                cs.lower[p] = x[p];
                cs.upper[p] = x[p];
            }
        }
        cs.psd = false;
        drop_pinned_rows(&mut cs);
        let s = weights(&layout.moments(&x), cross);
        let gains: Vec<(usize, f64, &GainTerms)> = (0..k).map(|i| (layout.power(i), s[i], &st.terms[i])).collect();
        match maximize_over(&cs, &vec![0.0; layout.len()], &gains, cfg.conic_max_iter) {
            Some(y) => {
                let mut cand = x.clone();
                for i in 0..k {
                    cand[layout.power(i)] = y[layout.power(i)].clamp(0.0, p_max[i]);
                }
                st.accept(&mut x, &mut f, cand);
            }
            None => failed_steps += 1,
        }

        // joint SCA step on the McCormick sub-box
        let nu = st.diag(&x);
        let cs = build_constraints_joint(scenario, &mc, &nu)?;
        let s0 = weights(&layout.moments(&x), cross);
        let g0 = st.gains(&x);
        let mut c = vec![0.0; layout.len()];
        for i in 0..k {
            c[layout.prob(i)] = g0[i];
            for j in i + 1..k {
                c[layout.pair(i, j)] = cross[i][j] * (g0[i] + g0[j]);
            }
        }
        let gains: Vec<(usize, f64, &GainTerms)> = (0..k).map(|i| (layout.power(i), s0[i], &st.terms[i])).collect();
        match maximize_over(&cs, &c, &gains, cfg.conic_max_iter) {
            Some(y) => st.accept(&mut x, &mut f, st.clean(&y)),
            None => failed_steps += 1,
        }

        mc.recenter(&st.diag(&x), &st.power(&x), cfg.shrink, cfg.floor);
        history.push(f);
        if f - f_start <= cfg.rel_tol * f.abs().max(1e-300) {
            converged = true;
            break;
        }
    }
    Ok(Ascent { x, f, history, iterations, converged, failed_steps })
}

fn finish(
    st: &State,
    x: Vec<f64>,
    iterations: usize,
    converged: bool,
    residuals: Vec<(String, f64)>,
    history: Vec<f64>,
    start: Instant,
) -> Result<SolverReport<JointPolicy>> {
    let mut policy = st.layout.unpack_joint(&x);
    let budget = st.scenario.energy.value();
    if budget.is_finite() {
        let e = expected_energy(&policy.diag(), &policy.power, &st.scenario.devices, &st.scenario.timing);
        if e > budget {
            // mixing with the empty schedule scales every moment
            let s = budget / e * (1.0 - 1e-12);
            for row in &mut policy.moments {
                for v in row.iter_mut() {
                    *v *= s;
                }
            }
        }
    }
    let report = check_joint(st.scenario, &policy, CHECK_TOL)?;
    let objective = st.objective(&st.layout.pack_joint(&policy));
    Ok(SolverReport {
        policy,
        objective,
        iterations,
        converged,
        residuals,
        max_violation: report.max_violation,
        feasible: report.feasible(),
        violations: report.labels(),
        history,
        wall_time: start.elapsed(),
    })
}
