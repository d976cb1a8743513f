//! Policy optimization: the independent and joint relaxed problems, the
//! baselines they are compared against, and exhaustive grid search.

mod baselines;
mod convex;
mod conic;
mod grid;
mod independent;
mod joint;
mod ratio;

pub use baselines::{policy_all_on, policy_fair, policy_importance};
pub use convex::{
    inner_convex_solve, project_bordered_psd, ConcaveObjective, InnerConfig, InnerResult, LinearObjective, Projector,
    Proximal,
};
pub use grid::{policy_grid_search, policy_grid_search_joint};
pub use independent::{lifted_constraints, solve_independent};
pub use joint::solve_joint;
pub use ratio::{jong_solve, JongConfig, RatioProgram, RatioTerm};

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{dim, invalid, Result};
use crate::model::Device;
use crate::network::ConstraintSet;

/// Current McCormick sub-box `[π^L, π^U] × [P^L, P^U]` inside the global box
/// `[0, 1]^K × [0, P_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McCormickState {
    pub pi_lo: Vec<f64>,
    pub pi_hi: Vec<f64>,
    pub p_lo: Vec<f64>,
    pub p_hi: Vec<f64>,
    pub p_max: Vec<f64>,
    /// Mean relative width of the sub-box after each recentering.
    pub history: Vec<f64>,
}

impl McCormickState {
    pub fn full(p_max: &[f64]) -> Self {
        let k = p_max.len();
        Self {
            pi_lo: vec![0.0; k],
            pi_hi: vec![1.0; k],
            p_lo: vec![0.0; k],
            p_hi: p_max.to_vec(),
            p_max: p_max.to_vec(),
            history: Vec::new(),
        }
    }

    /// Degenerate box holding a single point; both envelopes are then exact.
    pub fn pinned(pi: &[f64], power: &[f64], p_max: &[f64]) -> Self {
        Self {
            pi_lo: pi.to_vec(),
            pi_hi: pi.to_vec(),
            p_lo: power.to_vec(),
            p_hi: power.to_vec(),
            p_max: p_max.to_vec(),
            history: Vec::new(),
        }
    }

    pub fn with_pinned_power(&self, power: &[f64]) -> Self {
        Self { p_lo: power.to_vec(), p_hi: power.to_vec(), ..self.clone() }
    }

    pub fn with_pinned_pi(&self, pi: &[f64]) -> Self {
        Self { pi_lo: pi.to_vec(), pi_hi: pi.to_vec(), ..self.clone() }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        let lens = [self.pi_lo.len(), self.pi_hi.len(), self.p_lo.len(), self.p_hi.len(), self.p_max.len()];
        if lens.iter().any(|&l| l != k) {
            return Err(dim(format!("McCormick bounds must have length {k}")));
        }
        for i in 0..k {
            let ok = 0.0 <= self.pi_lo[i]
                && self.pi_lo[i] <= self.pi_hi[i]
                && self.pi_hi[i] <= 1.0
                && 0.0 <= self.p_lo[i]
                && self.p_lo[i] <= self.p_hi[i]
                && self.p_hi[i] <= self.p_max[i];
            if !ok {
                return Err(invalid(format!("McCormick sub-box for device {i} is empty or outside the global box")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, pi: &[f64], power: &[f64]) -> bool {
        (0..self.pi_lo.len()).all(|i| {
            (self.pi_lo[i]..=self.pi_hi[i]).contains(&pi[i]) && (self.p_lo[i]..=self.p_hi[i]).contains(&power[i])
        })
    }

    /// Shrinks every interval by `shrink` (never below `floor` of the global
    /// range) and recentres it on the incumbent, which always stays inside.
    pub fn recenter(&mut self, pi: &[f64], power: &[f64], shrink: f64, floor: f64) {
        let mut rel = 0.0;
        let k = self.pi_lo.len();
        for i in 0..k {
            let (lo, hi) = shrink_interval(self.pi_lo[i], self.pi_hi[i], pi[i], 1.0, shrink, floor);
            self.pi_lo[i] = lo;
            self.pi_hi[i] = hi;
            rel += hi - lo;
            let (lo, hi) = shrink_interval(self.p_lo[i], self.p_hi[i], power[i], self.p_max[i], shrink, floor);
            self.p_lo[i] = lo;
            self.p_hi[i] = hi;
            rel += (hi - lo) / self.p_max[i];
        }
        self.history.push(rel / (2 * k).max(1) as f64);
    }
}

fn shrink_interval(lo: f64, hi: f64, center: f64, range: f64, shrink: f64, floor: f64) -> (f64, f64) {
    let c = center.clamp(0.0, range);
    let width = (shrink * (hi - lo)).max(floor * range).min(range);
    let mut a = c - 0.5 * width;
    let mut b = c + 0.5 * width;
    if a < 0.0 {
        b -= a;
        a = 0.0;
    }
    if b > range {
        a -= b - range;
        b = range;
    }
    (a.max(0.0).min(c), b.min(range).max(c))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Relative objective change that ends the outer loop.
    pub rel_tol: f64,
    pub max_outer: usize,
    pub shrink: f64,
    pub floor: f64,
    /// Energy violation above which π is scaled back a posteriori.
    pub restore_tol: f64,
    pub inner: InnerConfig,
    pub jong: JongConfig,
    /// Refuse grid searches with more candidate points than this.
    pub grid_cost_cap: f64,
    /// Interior-point iteration cap for the cone programs.
    pub conic_max_iter: u32,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            max_outer: 50,
            shrink: 0.5,
            floor: 0.05,
            restore_tol: 1e-7,
            inner: InnerConfig::default(),
            jong: JongConfig::default(),
            grid_cost_cap: 1e10,
            conic_max_iter: 200,
        }
    }
}

/// A solved (or evaluated) policy with its bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport<P> {
    pub policy: P,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Final residual of each stage, keyed by stage name.
    pub residuals: Vec<(String, f64)>,
    /// Largest scaled violation of the unrelaxed constraints.
    pub max_violation: f64,
    pub feasible: bool,
    pub violations: Vec<String>,
    /// Objective after each outer iteration.
    pub history: Vec<f64>,
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Per-device gain split into ratio groups `A·P / (σ²P + η²)` sharing the
/// same variances, plus the power-independent part from noiseless features.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct GainTerms {
    pub groups: Vec<(f64, f64, f64)>,
    pub constant: f64,
}

impl GainTerms {
    pub fn new(device: &Device) -> Self {
        let s = &device.stats;
        let mut groups: Vec<(f64, f64, f64)> = Vec::new();
        let mut constant = 0.0;
        for ((a, &s2), &e2) in s.separations().iter().zip(s.residual_var()).zip(s.noise_var()) {
            if e2 == 0.0 {
                constant += a / s2;
            } else if let Some(g) = groups.iter_mut().find(|g| g.1 == s2 && g.2 == e2) {
                g.0 += a;
            } else {
                groups.push((*a, s2, e2));
            }
        }
        Self { groups, constant }
    }

    pub fn value(&self, p: f64) -> f64 {
        let p = p.max(0.0);
        self.constant + self.groups.iter().map(|&(a, s2, e2)| a * p / (s2 * p + e2)).sum::<f64>()
    }

    pub fn derivative(&self, p: f64) -> f64 {
        let p = p.max(0.0);
        self.groups
            .iter()
            .map(|&(a, s2, e2)| {
                let d = s2 * p + e2;
                a * e2 / (d * d)
            })
            .sum()
    }
}

/// Removes rows that involve only pinned variables (`lower == upper`); they
/// are constants for the subproblem and would only stall the projection.
pub(crate) fn drop_pinned_rows(cs: &mut ConstraintSet) {
    let free: Vec<bool> = cs.lower.iter().zip(&cs.upper).map(|(l, u)| l < u).collect();
    cs.rows.retain(|r| r.coeffs.iter().zip(&free).any(|(a, f)| *f && *a != 0.0));
}

pub(crate) fn gain_terms(devices: &[Device]) -> Vec<GainTerms> {
    devices.iter().map(GainTerms::new).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recenter_keeps_incumbent_and_respects_floor() {
        let mut mc = McCormickState::full(&[2.0, 1.0]);
        for _ in 0..20 {
            mc.recenter(&[0.99, 0.0], &[0.0, 0.7], 0.5, 0.05);
            assert!(mc.contains(&[0.99, 0.0], &[0.0, 0.7]));
            mc.validate(2).unwrap();
        }
        assert!((mc.pi_hi[0] - mc.pi_lo[0] - 0.05).abs() < 1e-12);
        assert!((mc.p_hi[0] - mc.p_lo[0] - 0.1).abs() < 1e-12);
        assert_eq!(mc.pi_hi[0], 1.0);
        assert_eq!(mc.p_lo[0], 0.0);
    }

    #[test]
    fn gain_terms_match_device_gain() {
        use crate::model::ClassStatistics;
        let stats = ClassStatistics::new(
            vec![vec![0.0, 1.0, 2.0], vec![1.0, -1.0, 0.5]],
            vec![1.0, 1.0, 0.5],
            vec![1.0, 0.0, 2.0],
        )
        .unwrap();
        let d = Device { id: 0, stats, max_sense_power: 1.0, feature_tx_power: 0.1, feature_payload: 96.0, position: None };
        let t = GainTerms::new(&d);
        for p in [0.0, 0.3, 1.0, 7.0] {
            assert!((t.value(p) - d.gain(p)).abs() < 1e-12);
            assert!((t.derivative(p) - crate::model::device_gain_derivative(&d.stats, p)).abs() < 1e-12);
        }
    }
}
