//! Sum-of-ratios programs `max Σ_i N_i(x)/D_i(x) + cᵀx` with affine `N_i ≥ 0`
//! and affine `D_i > 0`, solved by the parametric (β, u) scheme: each
//! subproblem maximizes `Σ_i u_i (N_i(x) − β_i D_i(x))` over the constraint set
//! and the parameters are driven to `β_i = N_i/D_i`, `u_i = 1/D_i` by damped
//! Newton steps.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::convex::{inner_convex_solve, InnerConfig, LinearObjective, Projector, Proximal};
use super::SolverReport;
use crate::error::{dim, invalid, Error, Result};
use crate::network::ConstraintSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioTerm {
    pub num: Vec<f64>,
    pub num_const: f64,
    pub den: Vec<f64>,
    pub den_const: f64,
}

impl RatioTerm {
    pub fn numerator(&self, x: &[f64]) -> f64 {
        self.num_const + self.num.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn denominator(&self, x: &[f64]) -> f64 {
        self.den_const + self.den.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioProgram {
    pub terms: Vec<RatioTerm>,
    pub linear: Vec<f64>,
    pub constraints: ConstraintSet,
}

impl RatioProgram {
    pub fn validate(&self) -> Result<()> {
        let n = self.constraints.num_vars();
        self.constraints.validate()?;
        if self.linear.len() != n || self.terms.iter().any(|t| t.num.len() != n || t.den.len() != n) {
            return Err(dim(format!("ratio program terms must have {n} coefficients")));
        }
        let (lo, hi) = (&self.constraints.lower, &self.constraints.upper);
        for (i, t) in self.terms.iter().enumerate() {
            let min_over_box = |c: &[f64], c0: f64| {
                c0 + (0..n).map(|j| (c[j] * lo[j]).min(c[j] * hi[j])).sum::<f64>()
            };
            if !(min_over_box(&t.den, t.den_const) > 0.0) {
                return Err(invalid(format!("ratio {i}: denominator not positive on the box")));
            }
            if min_over_box(&t.num, t.num_const) < 0.0 {
                return Err(invalid(format!("ratio {i}: numerator negative on the box")));
            }
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.linear.iter().zip(x).map(|(a, b)| a * b).sum();
        lin + self.terms.iter().map(|t| t.numerator(x) / t.denominator(x)).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JongConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Step contraction `ξ` of the damped update.
    pub damping: f64,
    /// Sufficient-decrease constant `ε` of the residual test.
    pub sufficient: f64,
    pub max_backtracks: usize,
    /// Proximal weight relative to the linearized objective scale.
    pub proximal: f64,
}

impl Default for JongConfig {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 500, damping: 0.5, sufficient: 1e-4, max_backtracks: 8, proximal: 1.0 }
    }
}

struct Params {
    beta: Vec<f64>,
    u: Vec<f64>,
}

fn targets(rp: &RatioProgram, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    rp.terms
        .iter()
        .map(|t| {
            let d = t.denominator(x);
            (t.numerator(x) / d, 1.0 / d)
        })
        .unzip()
}

fn residual_norm(rp: &RatioProgram, p: &Params, x: &[f64]) -> f64 {
    rp.terms
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let d = t.denominator(x);
            let a = p.beta[i] * d - t.numerator(x);
            let b = p.u[i] * d - 1.0;
            a * a + b * b
        })
        .sum::<f64>()
        .sqrt()
}

fn relative_residual(rp: &RatioProgram, p: &Params, x: &[f64]) -> f64 {
    rp.terms.iter().enumerate().fold(0.0_f64, |m, (i, t)| {
        let d = t.denominator(x);
        let rb = (p.beta[i] - t.numerator(x) / d).abs() / p.beta[i].abs().max(1.0);
        m.max(rb).max((p.u[i] * d - 1.0).abs())
    })
}

/// Maximizes the sum of ratios starting from `x0` (projected first).
///
/// A subproblem with parameters `(β, u)` is solved with a proximal term
/// `(μ/2)‖x − x_k‖²` around the current iterate, `μ` scaled to the objective;
/// its fixed points are exactly the KKT points of the ratio program.
pub fn jong_solve(
    rp: &RatioProgram,
    x0: &[f64],
    cfg: &JongConfig,
    inner: &InnerConfig,
) -> Result<SolverReport<Vec<f64>>> {
    let start = Instant::now();
    rp.validate()?;
    let cs = &rp.constraints;
    let n = cs.num_vars();
    if x0.len() != n {
        return Err(dim(format!("start point must have {n} entries")));
    }
    let projector = Projector::new(cs);
    let weights = projector.weights().to_vec();
    let (mut x, _) = projector.project(x0, inner.projection_cycles, inner.projection_tol);
    let phase1 = cs.max_violation(&x);
    if phase1 > 1e-7 {
        return Err(Error::Infeasible(cs.violated(&x, 1e-7)));
    }
    let range = (0..n).map(|j| cs.upper[j] - cs.lower[j]).fold(0.0_f64, f64::max).max(1e-12);
    let (beta, u) = targets(rp, &x);
    let mut params = Params { beta, u };
    let mut best = (rp.value(&x), x.clone());
    let mut inner_ok = true;

    let subproblem = |p: &Params, center: &[f64], ok: &mut bool| -> Vec<f64> {
        let mut c = rp.linear.clone();
        for (i, t) in rp.terms.iter().enumerate() {
            for j in 0..n {
                c[j] += p.u[i] * (t.num[j] - p.beta[i] * t.den[j]);
            }
        }
        let scale = c.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return center.to_vec();
        }
        let mu = cfg.proximal * scale / range;
        let lin = LinearObjective { c };
        let obj = Proximal { inner: &lin, center: center.to_vec(), mu, weights: weights.clone() };
        let icfg = InnerConfig { initial_step: 1.0 / mu, ..*inner };
        let r = inner_convex_solve(&obj, cs, center, &icfg);
        *ok &= r.projection_converged;
        r.x
    };

    let mut iterations = 0;
    let mut converged = false;
    let mut last_residual = f64::INFINITY;
    let mut last_step = f64::INFINITY;
    while iterations < cfg.max_iter {
        iterations += 1;
        let x_hat = subproblem(&params, &x, &mut inner_ok);
        last_residual = relative_residual(rp, &params, &x_hat);
        last_step = x_hat.iter().zip(&x).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())) / range;
        let v = rp.value(&x_hat);
        if v > best.0 {
            best = (v, x_hat.clone());
        }
        if last_residual < cfg.tol && last_step < cfg.tol {
            x = x_hat;
            converged = true;
            break;
        }
        let phi0 = residual_norm(rp, &params, &x_hat);
        let (tb, tu) = targets(rp, &x_hat);
        let mut s = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_backtracks {
            let trial = Params {
                beta: params.beta.iter().zip(&tb).map(|(b, t)| b + s * (t - b)).collect(),
                u: params.u.iter().zip(&tu).map(|(b, t)| b + s * (t - b)).collect(),
            };
            let xt = subproblem(&trial, &x, &mut inner_ok);
            let ok = residual_norm(rp, &trial, &xt) <= (1.0 - cfg.sufficient * s) * phi0;
            accepted = Some((trial, xt));
            if ok {
                break;
            }
            s *= cfg.damping;
        }
        let (p, xt) = accepted.expect("at least one trial");
        let v = rp.value(&xt);
        if v > best.0 {
            best = (v, xt.clone());
        }
        params = p;
        x = xt;
    }
    let final_x = if converged && rp.value(&x) >= best.0 - 1e-12 * best.0.abs().max(1.0) { x } else { best.1 };
    if !converged {
        log::debug!("ratio solve stopped after {iterations} iterations, residual {last_residual:.3e}");
    }
    let max_violation = cs.max_violation(&final_x);
    let objective = rp.value(&final_x);
    let violations = cs.violated(&final_x, 1e-7);
    Ok(SolverReport {
        policy: final_x,
        objective,
        iterations,
        converged,
        residuals: vec![
            ("ratio".into(), last_residual),
            ("step".into(), last_step),
            ("projection".into(), if inner_ok { 0.0 } else { 1.0 }),
        ],
        max_violation,
        feasible: max_violation <= 1e-7,
        violations,
        history: Vec::new(),
        wall_time: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Layout;

    fn single(p_hi: f64) -> RatioProgram {
        // x = (π, P) with π pinned at 1
        let cs = ConstraintSet::new(Layout::Independent { k: 1 }, vec![1.0, 0.0], vec![1.0, p_hi]);
        RatioProgram {
            terms: vec![RatioTerm { num: vec![0.0, 1.0], num_const: 0.0, den: vec![0.0, 1.0], den_const: 1.0 }],
            linear: vec![0.0; 2],
            constraints: cs,
        }
    }

    #[test]
    fn single_ratio_reaches_box_corner() {
        let r = jong_solve(&single(1.0), &[1.0, 0.2], &JongConfig::default(), &InnerConfig::default()).unwrap();
        assert!(r.converged, "{r:?}");
        assert!((r.policy[1] - 1.0).abs() < 1e-8);
        assert!((r.objective - 0.5).abs() < 1e-8);
    }

    #[test]
    fn budget_split_matches_water_filling() {
        // max 2P₁/(P₁+1) + P₂/(P₂+1) s.t. P₁ + P₂ ≤ 1; KKT: 2/(P₁+1)² = 1/(P₂+1)²
        let mut cs = ConstraintSet::new(Layout::Independent { k: 2 }, vec![1.0, 1.0, 0.0, 0.0], vec![1.0, 1.0, 1.0, 1.0]);
        cs.push("budget", vec![0.0, 0.0, 1.0, 1.0], 1.0);
        let term = |j: usize, a: f64| {
            let mut num = vec![0.0; 4];
            let mut den = vec![0.0; 4];
            num[j] = a;
            den[j] = 1.0;
            RatioTerm { num, num_const: 0.0, den, den_const: 1.0 }
        };
        let rp = RatioProgram { terms: vec![term(2, 2.0), term(3, 1.0)], linear: vec![0.0; 4], constraints: cs };
        let r = jong_solve(&rp, &[1.0, 1.0, 0.0, 0.0], &JongConfig::default(), &InnerConfig::default()).unwrap();
        // P₁ + 1 = √2 (P₂ + 1) and P₁ + P₂ = 1
        let s2 = 2f64.sqrt();
        let p2 = (2.0 - s2) / (1.0 + s2);
        assert!((r.policy[3] - p2).abs() < 1e-6, "{:?}", r.policy);
        assert!((r.policy[2] - (1.0 - p2)).abs() < 1e-6);
    }
}
