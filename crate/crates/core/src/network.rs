//! Radio and rate model, expected co-active device counts, and the linear
//! constraint sets consumed by the solver.
//!
//! Rates follow the three-stage cycle: during sensing, non-sensing devices
//! share the band with the other non-sensing devices; during feature
//! transmission nobody carries broadband traffic; during the stall stage the
//! band is split evenly among all `K` devices.

use serde::{Deserialize, Serialize};

use crate::error::{dim, invalid, Error, Result};
use crate::linalg::{matrix_from_rows, min_eigenvalue};
use crate::model::{Device, IndependentPolicy, JointPolicy};
use crate::sim::Scenario;
use crate::solver::McCormickState;

/// Attenuated-Shannon spectral efficiency curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EfficiencyModel {
    pub attenuation: f64,
    pub cap: f64,
    pub floor: f64,
}

impl Default for EfficiencyModel {
    fn default() -> Self {
        Self { attenuation: 0.75, cap: 9.6, floor: 0.05 }
    }
}

impl EfficiencyModel {
    /// Spectral efficiency in bit/s/Hz at the given SINR (dB).
    pub fn eval(&self, sinr_db: f64) -> f64 {
        let lin = 10f64.powf(sinr_db / 10.0);
        (self.attenuation * (1.0 + lin).log2()).clamp(self.floor, self.cap)
    }
}

/// `min(0.75·log2(1 + SINR), 9.6)` floored at 0.05.
pub fn spectral_efficiency(sinr_db: f64) -> f64 {
    EfficiencyModel::default().eval(sinr_db)
}

/// Lower edge of the SINR grid used for the standard rate.
pub const SINR_GRID_MIN_DB: f64 = -5.0;
pub const SINR_GRID_MAX_DB: f64 = 35.0;
pub const SINR_GRID_STEP_DB: f64 = 5.0;

/// Floors an SINR onto the `{−5, 0, …, 35}` dB grid; `None` below the grid.
pub fn quantize_sinr_db(sinr_db: f64) -> Option<f64> {
    if sinr_db < SINR_GRID_MIN_DB {
        return None;
    }
    let steps = ((sinr_db - SINR_GRID_MIN_DB) / SINR_GRID_STEP_DB).floor();
    Some((SINR_GRID_MIN_DB + steps * SINR_GRID_STEP_DB).min(SINR_GRID_MAX_DB))
}

/// Spectral efficiency at the quantized SINR; the curve floor below the grid.
pub fn standard_efficiency(model: &EfficiencyModel, sinr_db: f64) -> f64 {
    quantize_sinr_db(sinr_db).map_or(model.floor, |q| model.eval(q))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioEnvironment {
    /// Bandwidth `B` in Hz.
    pub bandwidth: f64,
    pub pathloss_exponent: f64,
    /// Constant path-loss term in dB (distance in metres).
    pub pathloss_const_db: f64,
    pub shadowing_std_db: f64,
    pub noise_density_dbm_hz: f64,
    pub noise_rise_db: f64,
    /// Broadband transmit power per device in watts.
    pub tx_power: Vec<f64>,
    #[serde(default)]
    pub efficiency: EfficiencyModel,
}

impl RadioEnvironment {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(invalid("bandwidth must be > 0"));
        }
        if !(self.shadowing_std_db >= 0.0) {
            return Err(invalid("shadowing_std_db must be >= 0"));
        }
        if self.tx_power.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(invalid("tx_power entries must be > 0"));
        }
        Ok(())
    }

    pub fn noise_dbm(&self) -> f64 {
        self.noise_density_dbm_hz + 10.0 * self.bandwidth.log10() + self.noise_rise_db
    }

    /// SINR in dB of a link of `distance` metres with shadowing `shadow_db`.
    pub fn sinr_db(&self, tx_power_w: f64, distance: f64, shadow_db: f64) -> f64 {
        let tx_dbm = 10.0 * (tx_power_w * 1e3).log10();
        let rx_dbm = tx_dbm
            - self.pathloss_const_db
            - 10.0 * self.pathloss_exponent * distance.log10()
            - shadow_db;
        rx_dbm - self.noise_dbm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timing {
    pub sensing: f64,
    pub feature: f64,
    pub stall: f64,
}

impl Default for Timing {
    fn default() -> Self {
        Self { sensing: 2.0, feature: 0.5, stall: 4.0 }
    }
}

impl Timing {
    pub fn cycle(&self) -> f64 {
        self.sensing + self.feature + self.stall
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.sensing, self.feature, self.stall];
        if all.iter().any(|t| !(*t >= 0.0 && t.is_finite())) || !(self.cycle() > 0.0) {
            return Err(invalid("stage durations must be >= 0 with a positive cycle"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateRequirements {
    /// Spectral efficiency `e_k` (bit/s/Hz).
    pub efficiency: Vec<f64>,
    /// Guaranteed average rate (bit/s).
    pub r_min: Vec<f64>,
    pub gamma: f64,
    /// Rate `r_std` at the quantized SINR; `r_min = γ · r_std`.
    #[serde(default)]
    pub standard_rate: Vec<f64>,
}

impl RateRequirements {
    pub fn validate(&self, k: usize) -> Result<()> {
        if self.efficiency.len() != k || self.r_min.len() != k {
            return Err(dim(format!("rate requirements must have length {k}")));
        }
        if self.efficiency.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(invalid("spectral efficiencies must be > 0"));
        }
        if self.r_min.iter().any(|&r| !(r >= 0.0 && r.is_finite())) {
            return Err(invalid("r_min entries must be >= 0"));
        }
        Ok(())
    }
}

/// Energy budget per cycle in joules; `None` removes the constraint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyBudget {
    pub limit: Option<f64>,
}

impl EnergyBudget {
    pub fn joules(e: f64) -> Self {
        Self { limit: Some(e) }
    }

    pub fn unlimited() -> Self {
        Self { limit: None }
    }

    pub fn value(&self) -> f64 {
        self.limit.unwrap_or(f64::INFINITY)
    }

    pub fn validate(&self) -> Result<()> {
        match self.limit {
            Some(e) if !(e >= 0.0 && e.is_finite()) => Err(invalid("energy budget must be >= 0")),
            _ => Ok(()),
        }
    }
}

/// `E[m_k]` for independent scheduling: `K − 1 − Σ_{k'≠k} π_k'`.
pub fn expected_m_independent(pi: &[f64], k: usize) -> f64 {
    let others: f64 = pi.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, p)| p).sum();
    (pi.len() as f64) - 1.0 - others
}

/// Denominator `K(1 − Π_kk) − Σ_{k'≠k} (Π_k'k' − Π_kk')`, which equals
/// `(1 − Π_kk)(1 + E[m_k | b_k = 0])`.
pub fn joint_share_denominator(moments: &[Vec<f64>], k: usize) -> f64 {
    let n = moments.len();
    let pkk = moments[k][k];
    let s: f64 = (0..n).filter(|&j| j != k).map(|j| moments[j][j] - moments[k][j]).sum();
    n as f64 * (1.0 - pkk) - s
}

/// `E[m_k | b_k = 0]` for a joint policy, from its first and second moments.
pub fn expected_m_joint(moments: &[Vec<f64>], k: usize) -> Result<f64> {
    let n = moments.len();
    let pkk = moments[k][k];
    if 1.0 - pkk <= 0.0 {
        return Err(Error::AlwaysSensing(k));
    }
    let s: f64 = (0..n)
        .filter(|&j| j != k)
        .map(|j| 1.0 - (pkk + moments[j][j] - moments[k][j]))
        .sum();
    Ok(s / (1.0 - pkk))
}

/// Jensen lower bound on the average broadband rate of device `k`.
pub fn avg_rate_lower_bound_independent(
    pi: &[f64],
    k: usize,
    timing: &Timing,
    efficiency: f64,
    bandwidth: f64,
) -> f64 {
    let n = pi.len() as f64;
    let others: f64 = pi.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, p)| p).sum();
    efficiency * bandwidth / timing.cycle()
        * (timing.stall / n + timing.sensing * (1.0 - pi[k]) / (n - others))
}

/// Jensen lower bound on the average rate under a joint policy. The sensing
/// share vanishes when device `k` always senses.
pub fn avg_rate_lower_bound_joint(
    moments: &[Vec<f64>],
    k: usize,
    timing: &Timing,
    efficiency: f64,
    bandwidth: f64,
) -> f64 {
    let n = moments.len() as f64;
    let off = 1.0 - moments[k][k];
    let den = joint_share_denominator(moments, k);
    let share = if off <= 0.0 || den <= 0.0 { 0.0 } else { off * off / den };
    efficiency * bandwidth / timing.cycle() * (timing.stall / n + timing.sensing * share)
}

/// Feature-upload time `Σ_k π_k l_k / (e_k B)`.
pub fn feature_time_used(pi: &[f64], devices: &[Device], efficiency: &[f64], bandwidth: f64) -> f64 {
    pi.iter()
        .zip(devices)
        .zip(efficiency)
        .map(|((p, d), e)| p * d.feature_payload / (e * bandwidth))
        .sum()
}

/// Expected energy per cycle `Σ_k (P_k T_s + P_f,k T_f) π_k`.
pub fn expected_energy(pi: &[f64], power: &[f64], devices: &[Device], timing: &Timing) -> f64 {
    pi.iter()
        .zip(power)
        .zip(devices)
        .map(|((p, w), d)| (w * timing.sensing + d.feature_tx_power * timing.feature) * p)
        .sum()
}

/// Rate-constraint coefficient `a_k = r_min T / (e B T_s) − T_w / (K T_s)`.
///
/// The linear rate constraint reads `π_k − 1 + a_k (K − Σ_{i≠k} π_i) ≤ 0`.
pub fn rate_coefficient(scenario: &Scenario, k: usize) -> f64 {
    let t = &scenario.timing;
    let n = scenario.devices.len() as f64;
    if t.sensing <= 0.0 {
        // no sensing stage: only the stall share is available
        return if scenario.rates.r_min[k] * t.cycle()
            <= scenario.rates.efficiency[k] * scenario.radio.bandwidth * t.stall / n
        {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        };
    }
    scenario.rates.r_min[k] * t.cycle()
        / (scenario.rates.efficiency[k] * scenario.radio.bandwidth * t.sensing)
        - t.stall / (n * t.sensing)
}

/// Where each decision variable lives in the stacked vector `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layout {
    /// `x = (π, P_s)`.
    Independent { k: usize },
    /// `x = (diag Π, upper-triangular Π row-major, P_s)`.
    Joint { k: usize },
}

impl Layout {
    pub fn devices(&self) -> usize {
        match *self {
            Layout::Independent { k } | Layout::Joint { k } => k,
        }
    }

    pub fn len(&self) -> usize {
        match *self {
            Layout::Independent { k } => 2 * k,
            Layout::Joint { k } => 2 * k + k * (k - 1) / 2,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of `π_k` or `Π_kk`.
    pub fn prob(&self, k: usize) -> usize {
        k
    }

    /// Index of `Π_ij`, `i ≠ j` (joint layout only).
    pub fn pair(&self, i: usize, j: usize) -> usize {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let k = self.devices();
        k + a * (2 * k - a - 1) / 2 + (b - a - 1)
    }

    pub fn power(&self, k: usize) -> usize {
        self.len() - self.devices() + k
    }

    pub fn num_pairs(&self) -> usize {
        match *self {
            Layout::Independent { .. } => 0,
            Layout::Joint { k } => k * (k - 1) / 2,
        }
    }

    /// Weights making the Euclidean metric on `x` equal the Frobenius metric
    /// on the bordered moment matrix `[[1, dᵀ], [d, Π]]`.
    pub fn metric_weights(&self) -> Vec<f64> {
        let mut w = vec![1.0; self.len()];
        if let Layout::Joint { k } = *self {
            for v in w.iter_mut().take(k) {
                *v = 3.0;
            }
            for v in w.iter_mut().skip(k).take(self.num_pairs()) {
                *v = 2.0;
            }
        }
        w
    }

    pub fn pack_independent(&self, policy: &IndependentPolicy) -> Vec<f64> {
        let mut x = policy.pi.clone();
        x.extend_from_slice(&policy.power);
        x
    }

    pub fn unpack_independent(&self, x: &[f64]) -> IndependentPolicy {
        let k = self.devices();
        IndependentPolicy { pi: x[..k].to_vec(), power: x[k..2 * k].to_vec() }
    }

    pub fn pack_joint(&self, policy: &JointPolicy) -> Vec<f64> {
        let k = self.devices();
        let mut x = vec![0.0; self.len()];
        for i in 0..k {
            x[i] = policy.moments[i][i];
            for j in i + 1..k {
                x[self.pair(i, j)] = policy.moments[i][j];
            }
            x[self.power(i)] = policy.power[i];
        }
        x
    }

    pub fn moments(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let k = self.devices();
        let mut m = vec![vec![0.0; k]; k];
        for i in 0..k {
            m[i][i] = x[i];
            for j in i + 1..k {
                let v = x[self.pair(i, j)];
                m[i][j] = v;
                m[j][i] = v;
            }
        }
        m
    }

    pub fn unpack_joint(&self, x: &[f64]) -> JointPolicy {
        let k = self.devices();
        JointPolicy { moments: self.moments(x), power: (0..k).map(|i| x[self.power(i)]).collect() }
    }
}

/// `a·x ≤ b` with a human-readable label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub label: String,
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
    }

    /// Violation scaled by the coefficient norm.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let norm = self.coeffs.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-300);
        ((self.value(x) - self.rhs) / norm).max(0.0)
    }
}

/// Canonical convex feasible set: halfspaces, a box, and optionally the
/// covariance PSD condition on the joint layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub layout: Layout,
    pub rows: Vec<LinearConstraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub psd: bool,
}

impl ConstraintSet {
    pub fn new(layout: Layout, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self { layout, rows: Vec::new(), lower, upper, psd: false }
    }

    pub fn num_vars(&self) -> usize {
        self.lower.len()
    }

    pub fn push(&mut self, label: impl Into<String>, coeffs: Vec<f64>, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.num_vars());
        self.rows.push(LinearConstraint { label: label.into(), coeffs, rhs });
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.upper.len() != n || self.layout.len() != n {
            return Err(dim("constraint set bounds do not match the layout"));
        }
        for i in 0..n {
            if !(self.lower[i] <= self.upper[i]) || !self.lower[i].is_finite() || !self.upper[i].is_finite() {
                return Err(invalid(format!("inconsistent bounds for variable {i}")));
            }
        }
        for r in &self.rows {
            if r.coeffs.len() != n || r.coeffs.iter().any(|a| !a.is_finite()) || !r.rhs.is_finite() {
                return Err(invalid(format!("constraint `{}` is not finite", r.label)));
            }
        }
        Ok(())
    }

    /// Minimum eigenvalue of the covariance `Π − ddᵀ` encoded in `x`.
    pub fn covariance_min_eigenvalue(&self, x: &[f64]) -> f64 {
        let m = self.layout.moments(x);
        let d: Vec<f64> = (0..m.len()).map(|i| m[i][i]).collect();
        let cov: Vec<Vec<f64>> = (0..m.len())
            .map(|i| (0..m.len()).map(|j| m[i][j] - d[i] * d[j]).collect())
            .collect();
        matrix_from_rows(&cov).map_or(f64::NEG_INFINITY, |c| min_eigenvalue(&c))
    }

    /// Largest violation over rows, box and PSD block.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut v = 0.0_f64;
        for r in &self.rows {
            v = v.max(r.violation(x));
        }
        for i in 0..x.len() {
            v = v.max(self.lower[i] - x[i]).max(x[i] - self.upper[i]);
        }
        if self.psd {
            v = v.max(-self.covariance_min_eigenvalue(x));
        }
        v
    }

    /// Labels of constraints violated by more than `tol`.
    pub fn violated(&self, x: &[f64], tol: f64) -> Vec<String> {
        let mut out: Vec<String> = self
            .rows
            .iter()
            .filter(|r| r.violation(x) > tol)
            .map(|r| r.label.clone())
            .collect();
        for i in 0..x.len() {
            if x[i] < self.lower[i] - tol || x[i] > self.upper[i] + tol {
                out.push(format!("bounds[{i}]"));
            }
        }
        if self.psd && self.covariance_min_eigenvalue(x) < -tol {
            out.push("covariance-psd".into());
        }
        out
    }
}

/// Devices whose rate guarantee cannot be met by any schedule, even when all
/// other devices sense in every cycle and the device itself never senses.
pub fn hopeless_rate_devices(scenario: &Scenario) -> Vec<usize> {
    (0..scenario.devices.len()).filter(|&k| rate_coefficient(scenario, k) > 1.0).collect()
}

fn hopeless_error(scenario: &Scenario) -> Result<()> {
    let bad = hopeless_rate_devices(scenario);
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::Infeasible(
            bad.iter().map(|k| format!("rate[{k}]: guarantee unreachable for device {k}")).collect(),
        ))
    }
}

fn feature_time_row(scenario: &Scenario, layout: &Layout) -> Vec<f64> {
    let mut a = vec![0.0; layout.len()];
    for (k, d) in scenario.devices.iter().enumerate() {
        a[layout.prob(k)] = d.feature_payload / (scenario.rates.efficiency[k] * scenario.radio.bandwidth);
    }
    a
}

fn push_energy_envelopes(cs: &mut ConstraintSet, scenario: &Scenario, env: &McCormickState) {
    let budget = scenario.energy.value();
    if !budget.is_finite() {
        return;
    }
    let (ts, tf) = (scenario.timing.sensing, scenario.timing.feature);
    let layout = cs.layout;
    let n = layout.len();
    let mut upper = vec![0.0; n];
    let mut lower = vec![0.0; n];
    let (mut rhs_u, mut rhs_l) = (budget, budget);
    for (k, d) in scenario.devices.iter().enumerate() {
        let pf = d.feature_tx_power * tf;
        // overestimators of π·P: P^U π + π^L P − π^L P^U and P^L π + π^U P − π^U P^L
        upper[layout.prob(k)] = env.p_hi[k] * ts + pf;
        upper[layout.power(k)] = env.pi_lo[k] * ts;
        rhs_u += env.p_hi[k] * ts * env.pi_lo[k];
        lower[layout.prob(k)] = env.p_lo[k] * ts + pf;
        lower[layout.power(k)] = env.pi_hi[k] * ts;
        rhs_l += env.p_lo[k] * ts * env.pi_hi[k];
    }
    cs.push("energy-envelope-upper", upper, rhs_u);
    cs.push("energy-envelope-lower", lower, rhs_l);
}

/// Linear constraints over `(π, P_s)`: power limits and sub-box bounds, the
/// feature-time budget, the linearized rate guarantees and the two McCormick
/// energy envelopes on the current sub-box.
pub fn build_constraints_independent(scenario: &Scenario, env: &McCormickState) -> Result<ConstraintSet> {
    let k = scenario.devices.len();
    env.validate(k)?;
    hopeless_error(scenario)?;
    let layout = Layout::Independent { k };
    let mut lower = env.pi_lo.clone();
    lower.extend_from_slice(&env.p_lo);
    let mut upper = env.pi_hi.clone();
    upper.extend_from_slice(&env.p_hi);
    let mut cs = ConstraintSet::new(layout, lower, upper);
    cs.push("feature-time", feature_time_row(scenario, &layout), scenario.timing.feature);
    for i in 0..k {
        let a = rate_coefficient(scenario, i);
        if a == f64::NEG_INFINITY {
            continue;
        }
        let mut row = vec![0.0; layout.len()];
        for j in 0..k {
            row[layout.prob(j)] = if j == i { 1.0 } else { -a };
        }
        cs.push(format!("rate[{i}]"), row, 1.0 - a * k as f64);
    }
    push_energy_envelopes(&mut cs, scenario, env);
    cs.validate()?;
    Ok(cs)
}

/// Linear constraints over `(Π, P_s)` with the rate guarantees linearized
/// around the anchor `ν`, Fréchet–Hoeffding bounds, McCormick energy envelopes
/// on the diagonal, and the covariance PSD block.
pub fn build_constraints_joint(scenario: &Scenario, env: &McCormickState, nu: &[f64]) -> Result<ConstraintSet> {
    let k = scenario.devices.len();
    env.validate(k)?;
    hopeless_error(scenario)?;
    if nu.len() != k || nu.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(invalid("anchor ν must lie in [0, 1]^K"));
    }
    let layout = Layout::Joint { k };
    let n = layout.len();
    let mut lower = vec![0.0; n];
    let mut upper = vec![1.0; n];
    for i in 0..k {
        lower[layout.prob(i)] = env.pi_lo[i];
        upper[layout.prob(i)] = env.pi_hi[i];
        lower[layout.power(i)] = env.p_lo[i];
        upper[layout.power(i)] = env.p_hi[i];
    }
    let mut cs = ConstraintSet::new(layout, lower, upper);
    cs.psd = true;
    cs.push("feature-time", feature_time_row(scenario, &layout), scenario.timing.feature);
    let kf = k as f64;
    for i in 0..k {
        let a = rate_coefficient(scenario, i);
        if a == f64::NEG_INFINITY {
            continue;
        }
        // (1−ν)² − 2(1−ν)(Π_ii − ν) ≥ a (K(1 − Π_ii) − Σ_j (Π_jj − Π_ij))
        let mut row = vec![0.0; n];
        row[layout.prob(i)] = 2.0 * (1.0 - nu[i]) - a * kf;
        for j in (0..k).filter(|&j| j != i) {
            row[layout.prob(j)] = -a;
            row[layout.pair(i, j)] = a;
        }
        cs.push(format!("rate[{i}]"), row, 1.0 - nu[i] * nu[i] - a * kf);
    }
    push_energy_envelopes(&mut cs, scenario, env);
    for i in 0..k {
        for j in i + 1..k {
            let p = layout.pair(i, j);
            for (label, d) in [("upper-i", i), ("upper-j", j)] {
                let mut row = vec![0.0; n];
                row[p] = 1.0;
                row[layout.prob(d)] = -1.0;
                cs.push(format!("frechet-{label}[{i},{j}]"), row, 0.0);
            }
            let mut row = vec![0.0; n];
            row[p] = -1.0;
            row[layout.prob(i)] = 1.0;
            row[layout.prob(j)] = 1.0;
            cs.push(format!("frechet-lower[{i},{j}]"), row, 1.0);
        }
    }
    cs.validate()?;
    Ok(cs)
}

/// Outcome of checking a policy against the unrelaxed constraints.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    /// `(label, scaled violation)` for every violated constraint.
    pub violations: Vec<(String, f64)>,
    pub max_violation: f64,
}

impl ConstraintReport {
    fn record(&mut self, label: String, v: f64, tol: f64) {
        self.max_violation = self.max_violation.max(v);
        if v > tol {
            self.violations.push((label, v));
        }
    }

    pub fn feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn labels(&self) -> Vec<String> {
        self.violations.iter().map(|(l, _)| l.clone()).collect()
    }
}

/// Default tolerance for the unrelaxed checks.
pub const CHECK_TOL: f64 = 1e-7;

fn check_common(
    scenario: &Scenario,
    pi: &[f64],
    power: &[f64],
    tol: f64,
    report: &mut ConstraintReport,
) {
    for (k, d) in scenario.devices.iter().enumerate() {
        report.record(format!("probability[{k}]"), (-pi[k]).max(pi[k] - 1.0).max(0.0), tol);
        report.record(
            format!("power-limit[{k}]"),
            (-power[k]).max(power[k] - d.max_sense_power).max(0.0),
            tol,
        );
    }
    let t = &scenario.timing;
    let used = feature_time_used(pi, &scenario.devices, &scenario.rates.efficiency, scenario.radio.bandwidth);
    report.record("feature-time".into(), (used - t.feature).max(0.0) / t.feature.max(1.0), tol);
    let budget = scenario.energy.value();
    if budget.is_finite() {
        let e = expected_energy(pi, power, &scenario.devices, t);
        report.record("energy".into(), (e - budget).max(0.0) / budget.max(1.0), tol);
    }
}

fn rate_violation(scenario: &Scenario, k: usize, rate: f64) -> f64 {
    let share = scenario.rates.efficiency[k] * scenario.radio.bandwidth / scenario.devices.len() as f64;
    ((scenario.rates.r_min[k] - rate) / share).max(0.0)
}

/// Checks bounds, the feature-time budget, the Jensen rate bound and the
/// bilinear energy constraint.
pub fn check_independent(scenario: &Scenario, policy: &IndependentPolicy, tol: f64) -> Result<ConstraintReport> {
    let k = scenario.devices.len();
    if policy.pi.len() != k || policy.power.len() != k {
        return Err(dim("policy length does not match device count"));
    }
    let mut report = ConstraintReport::default();
    check_common(scenario, &policy.pi, &policy.power, tol, &mut report);
    for i in 0..k {
        let r = avg_rate_lower_bound_independent(
            &policy.pi,
            i,
            &scenario.timing,
            scenario.rates.efficiency[i],
            scenario.radio.bandwidth,
        );
        report.record(format!("rate[{i}]"), rate_violation(scenario, i, r), tol);
    }
    Ok(report)
}

/// Joint counterpart of [`check_independent`], adding the Fréchet–Hoeffding
/// bounds and the covariance PSD condition.
pub fn check_joint(scenario: &Scenario, policy: &JointPolicy, tol: f64) -> Result<ConstraintReport> {
    let k = scenario.devices.len();
    if policy.moments.len() != k || policy.moments.iter().any(|r| r.len() != k) || policy.power.len() != k {
        return Err(dim("joint policy does not match device count"));
    }
    let mut report = ConstraintReport::default();
    let d = policy.diag();
    check_common(scenario, &d, &policy.power, tol, &mut report);
    let m = &policy.moments;
    for i in 0..k {
        let r = avg_rate_lower_bound_joint(
            m,
            i,
            &scenario.timing,
            scenario.rates.efficiency[i],
            scenario.radio.bandwidth,
        );
        report.record(format!("rate[{i}]"), rate_violation(scenario, i, r), tol);
        for j in i + 1..k {
            let lo = (d[i] + d[j] - 1.0).max(0.0);
            let hi = d[i].min(d[j]);
            report.record(format!("frechet[{i},{j}]"), (lo - m[i][j]).max(m[i][j] - hi).max(0.0), tol);
            report.record(format!("symmetry[{i},{j}]"), (m[i][j] - m[j][i]).abs(), tol);
        }
    }
    let cov: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| m[i][j] - d[i] * d[j]).collect()).collect();
    let lmin = matrix_from_rows(&cov).map_or(f64::NEG_INFINITY, |c| min_eigenvalue(&c));
    report.record("covariance-psd".into(), (-lmin).max(0.0), tol);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn efficiency_examples() {
        assert_eq!(spectral_efficiency(f64::NEG_INFINITY), 0.05);
        let e35 = spectral_efficiency(35.0);
        let expected = 0.75 * (1.0 + 10f64.powf(3.5)).log2();
        assert!((e35 - expected).abs() < 1e-12);
        assert!((e35 - 8.7203).abs() < 1e-3);
        assert!(spectral_efficiency(10.0) < spectral_efficiency(20.0));
        assert_eq!(spectral_efficiency(60.0), 9.6);
    }

    #[test]
    fn sinr_grid_floors() {
        assert_eq!(quantize_sinr_db(-5.0), Some(-5.0));
        assert_eq!(quantize_sinr_db(4.99), Some(0.0));
        assert_eq!(quantize_sinr_db(42.0), Some(35.0));
        assert_eq!(quantize_sinr_db(-5.01), None);
    }

    #[test]
    fn expected_m_examples() {
        assert_eq!(expected_m_independent(&[1.0; 4], 0), 0.0);
        assert_eq!(expected_m_independent(&[0.0; 4], 2), 3.0);
        assert!((expected_m_independent(&[0.2, 0.5, 0.7], 0) - 0.8).abs() < 1e-15);
        let como = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        assert!((expected_m_joint(&como, 0).unwrap() - 1.0).abs() < 1e-15);
        let anti = vec![vec![0.5, 0.0], vec![0.0, 0.5]];
        assert_eq!(expected_m_joint(&anti, 0).unwrap(), 0.0);
        let always = vec![vec![1.0, 0.5], vec![0.5, 0.5]];
        assert!(matches!(expected_m_joint(&always, 0), Err(Error::AlwaysSensing(0))));
    }

    #[test]
    fn rate_bound_edge_cases() {
        let t = Timing::default();
        let (e, b) = (2.0, 1e6);
        let zero = avg_rate_lower_bound_independent(&[0.0; 4], 1, &t, e, b);
        assert!((zero - e * b / t.cycle() * (t.stall + t.sensing) / 4.0).abs() < 1e-6);
        let on = avg_rate_lower_bound_independent(&[1.0, 0.3, 0.0, 0.9], 0, &t, e, b);
        assert!((on - e * b * t.stall / (t.cycle() * 4.0)).abs() < 1e-6);
    }

    #[test]
    fn joint_layout_roundtrip() {
        let l = Layout::Joint { k: 4 };
        let mut seen = vec![false; l.len()];
        for i in 0..4 {
            seen[l.prob(i)] = true;
            seen[l.power(i)] = true;
            for j in i + 1..4 {
                assert_eq!(l.pair(i, j), l.pair(j, i));
                assert!(!seen[l.pair(i, j)]);
                seen[l.pair(i, j)] = true;
            }
        }
        assert!(seen.iter().all(|s| *s));
    }
}
