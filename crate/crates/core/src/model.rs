//! Statistical sensing model and discriminant gains.
//!
//! Each device observes `N_k` features whose class-conditional distribution is
//! Gaussian with class mean `μ[ℓ][n]` and variance `σ²[n] + η²[n] / P_s`. The
//! discriminant gain of a class pair is the symmetric KL divergence between the
//! two class-conditional densities; network objectives sum it over all class
//! pairs.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{dim, invalid, Error, Result};
use crate::linalg::{is_symmetric, matrix_from_rows, min_eigenvalue, symmetric_inverse};

/// Tolerance used when validating moment matrices.
pub const MOMENT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ClassStatisticsRaw {
    means: Vec<Vec<f64>>,
    residual_var: Vec<f64>,
    noise_var: Vec<f64>,
}

/// Per-device class means and per-feature residual/noise variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ClassStatisticsRaw")]
pub struct ClassStatistics {
    means: Vec<Vec<f64>>,
    residual_var: Vec<f64>,
    noise_var: Vec<f64>,
}

impl TryFrom<ClassStatisticsRaw> for ClassStatistics {
    type Error = Error;

    fn try_from(raw: ClassStatisticsRaw) -> Result<Self> {
        ClassStatistics::new(raw.means, raw.residual_var, raw.noise_var)
    }
}

impl ClassStatistics {
    /// `means` holds one row of length `N_k` per class.
    pub fn new(means: Vec<Vec<f64>>, residual_var: Vec<f64>, noise_var: Vec<f64>) -> Result<Self> {
        let n = residual_var.len();
        if means.len() < 2 {
            return Err(invalid("at least two classes are required"));
        }
        if n == 0 {
            return Err(invalid("at least one feature is required"));
        }
        if noise_var.len() != n || means.iter().any(|row| row.len() != n) {
            return Err(dim(format!(
                "class statistics: expected {} means of length {n} and noise_var of length {n}",
                means.len()
            )));
        }
        if means.iter().flatten().any(|m| !m.is_finite()) {
            return Err(invalid("class means must be finite"));
        }
        for (i, (&s, &e)) in residual_var.iter().zip(&noise_var).enumerate() {
            if !(s >= 0.0 && s.is_finite() && e >= 0.0 && e.is_finite()) {
                return Err(invalid(format!("feature {i}: variances must be finite and >= 0")));
            }
            if s == 0.0 && e == 0.0 {
                return Err(invalid(format!(
                    "feature {i}: residual and noise variance are both zero (infinite gain)"
                )));
            }
        }
        Ok(Self { means, residual_var, noise_var })
    }

    pub fn num_classes(&self) -> usize {
        self.means.len()
    }

    pub fn num_features(&self) -> usize {
        self.residual_var.len()
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn residual_var(&self) -> &[f64] {
        &self.residual_var
    }

    pub fn noise_var(&self) -> &[f64] {
        &self.noise_var
    }

    /// Mean-difference vectors `μ_ℓ − μ_ℓ'` for every class pair `ℓ < ℓ'`.
    pub fn pair_differences(&self) -> Vec<Vec<f64>> {
        let l = self.num_classes();
        let mut out = Vec::with_capacity(l * (l - 1) / 2);
        for a in 0..l {
            for b in a + 1..l {
                out.push(
                    self.means[a].iter().zip(&self.means[b]).map(|(x, y)| x - y).collect(),
                );
            }
        }
        out
    }

    /// Per-feature separation `Σ_{ℓ<ℓ'} (μ_ℓ[n] − μ_ℓ'[n])²`.
    pub fn separations(&self) -> Vec<f64> {
        let mut sep = vec![0.0; self.num_features()];
        for diff in self.pair_differences() {
            for (s, d) in sep.iter_mut().zip(diff) {
                *s += d * d;
            }
        }
        sep
    }

    /// Same statistics with every class mean multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            means: self.means.iter().map(|r| r.iter().map(|m| m * s).collect()).collect(),
            residual_var: self.residual_var.clone(),
            noise_var: self.noise_var.clone(),
        }
    }
}

/// A sensing device and its hardware limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub id: usize,
    pub stats: ClassStatistics,
    /// Maximum sensing power `P_max` in watts.
    pub max_sense_power: f64,
    /// Power used for feature transmission `P_f` in watts.
    pub feature_tx_power: f64,
    /// Feature payload `l_k` in bits.
    pub feature_payload: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<[f64; 2]>,
}

impl Device {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_sense_power > 0.0 && self.max_sense_power.is_finite()) {
            return Err(invalid(format!("device {}: max_sense_power must be > 0", self.id)));
        }
        if !(self.feature_tx_power >= 0.0 && self.feature_tx_power.is_finite()) {
            return Err(invalid(format!("device {}: feature_tx_power must be >= 0", self.id)));
        }
        if !(self.feature_payload > 0.0 && self.feature_payload.is_finite()) {
            return Err(invalid(format!("device {}: feature_payload must be > 0", self.id)));
        }
        Ok(())
    }

    pub fn gain(&self, power: f64) -> f64 {
        device_gain(&self.stats, power)
    }

    pub fn gain_at_max(&self) -> f64 {
        device_gain(&self.stats, self.max_sense_power)
    }
}

/// `1 / (σ² + η² / P)` with the `P → 0` limit.
pub fn feature_precision(sigma2: f64, eta2: f64, power: f64) -> f64 {
    if eta2 == 0.0 {
        1.0 / sigma2
    } else if power <= 0.0 {
        0.0
    } else {
        power / (sigma2 * power + eta2)
    }
}

/// Discriminant gain of one device at sensing power `power`, summed over all
/// class pairs.
pub fn device_gain(stats: &ClassStatistics, power: f64) -> f64 {
    stats
        .separations()
        .iter()
        .zip(stats.residual_var.iter().zip(&stats.noise_var))
        .map(|(a, (&s, &e))| a * feature_precision(s, e, power))
        .sum()
}

/// Derivative of [`device_gain`] with respect to the sensing power.
pub fn device_gain_derivative(stats: &ClassStatistics, power: f64) -> f64 {
    let p = power.max(0.0);
    stats
        .separations()
        .iter()
        .zip(stats.residual_var.iter().zip(&stats.noise_var))
        .map(|(a, (&s, &e))| {
            if e == 0.0 {
                0.0
            } else {
                let den = s * p + e;
                a * e / (den * den)
            }
        })
        .sum()
}

/// Gains of one device for each class pair separately (diagnostic form).
pub fn pairwise_device_gains(stats: &ClassStatistics, power: f64) -> Vec<f64> {
    stats
        .pair_differences()
        .iter()
        .map(|diff| {
            diff.iter()
                .zip(stats.residual_var.iter().zip(&stats.noise_var))
                .map(|(d, (&s, &e))| d * d * feature_precision(s, e, power))
                .sum()
        })
        .collect()
}

/// Independent policy: scheduling probabilities `π` and sensing powers `P_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependentPolicy {
    pub pi: Vec<f64>,
    pub power: Vec<f64>,
}

impl IndependentPolicy {
    pub fn new(pi: Vec<f64>, power: Vec<f64>) -> Self {
        Self { pi, power }
    }

    pub fn all_off(k: usize) -> Self {
        Self { pi: vec![0.0; k], power: vec![0.0; k] }
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn validate(&self, devices: &[Device]) -> Result<()> {
        if self.pi.len() != devices.len() || self.power.len() != devices.len() {
            return Err(dim(format!(
                "policy has {} probabilities and {} powers for {} devices",
                self.pi.len(),
                self.power.len(),
                devices.len()
            )));
        }
        for (k, d) in devices.iter().enumerate() {
            let (p, w) = (self.pi[k], self.power[k]);
            if !(-MOMENT_TOL..=1.0 + MOMENT_TOL).contains(&p) {
                return Err(invalid(format!("pi[{k}] = {p} outside [0, 1]")));
            }
            if !(w >= -MOMENT_TOL && w <= d.max_sense_power * (1.0 + 1e-9) + MOMENT_TOL) {
                return Err(invalid(format!("power[{k}] = {w} outside [0, P_max]")));
            }
        }
        Ok(())
    }

    /// Product-moment matrix `Π = ππᵀ` with `Π_kk = π_k`.
    pub fn product_moments(&self) -> Vec<Vec<f64>> {
        let k = self.pi.len();
        (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| if i == j { self.pi[i] } else { self.pi[i] * self.pi[j] })
                    .collect()
            })
            .collect()
    }

    pub fn to_joint(&self) -> JointPolicy {
        JointPolicy { moments: self.product_moments(), power: self.power.clone() }
    }
}

/// Joint policy: first/second moment matrix `Π` and sensing powers `P_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPolicy {
    pub moments: Vec<Vec<f64>>,
    pub power: Vec<f64>,
}

impl JointPolicy {
    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.moments.len()).map(|k| self.moments[k][k]).collect()
    }

    pub fn moment_matrix(&self) -> Result<DMatrix<f64>> {
        matrix_from_rows(&self.moments)
    }

    fn check_shape(&self, k: usize) -> Result<()> {
        if self.moments.len() != k || self.moments.iter().any(|r| r.len() != k) || self.power.len() != k
        {
            return Err(dim(format!("joint policy does not match {k} devices")));
        }
        Ok(())
    }

    /// Checks symmetry, `[0, 1]` bounds, Fréchet–Hoeffding bounds and
    /// positive semi-definiteness of `Π − diag(Π) diag(Π)ᵀ`.
    pub fn validate(&self, devices: &[Device]) -> Result<()> {
        let k = devices.len();
        self.check_shape(k)?;
        validate_moments(&self.moments, MOMENT_TOL)?;
        for (i, d) in devices.iter().enumerate() {
            let w = self.power[i];
            if !(w >= -MOMENT_TOL && w <= d.max_sense_power * (1.0 + 1e-9) + MOMENT_TOL) {
                return Err(invalid(format!("power[{i}] = {w} outside [0, P_max]")));
            }
        }
        Ok(())
    }
}

/// Validates a moment matrix against the joint-policy invariants.
pub fn validate_moments(moments: &[Vec<f64>], tol: f64) -> Result<()> {
    let m = matrix_from_rows(moments)?;
    let k = m.nrows();
    if !m.is_square() {
        return Err(dim("moment matrix must be square"));
    }
    if !is_symmetric(&m, tol) {
        return Err(invalid("moment matrix is not symmetric"));
    }
    for i in 0..k {
        for j in 0..k {
            let v = m[(i, j)];
            if !(-tol..=1.0 + tol).contains(&v) {
                return Err(invalid(format!("Π[{i}][{j}] = {v} outside [0, 1]")));
            }
            if i != j {
                let (a, b) = (m[(i, i)], m[(j, j)]);
                if v < (a + b - 1.0).max(0.0) - tol || v > a.min(b) + tol {
                    return Err(invalid(format!(
                        "Π[{i}][{j}] = {v} violates the Fréchet–Hoeffding bounds"
                    )));
                }
            }
        }
    }
    let d = m.diagonal();
    let cov = &m - &d * d.transpose();
    let lmin = min_eigenvalue(&cov);
    if lmin < -tol {
        return Err(invalid(format!("Π − diag·diagᵀ has eigenvalue {lmin:.3e} < 0")));
    }
    Ok(())
}

/// Feature-level correlation matrix `ρ` and/or device-level cross-gain
/// coefficients `c`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrelationModel {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross: Option<Vec<Vec<f64>>>,
}

impl CorrelationModel {
    pub fn validate(&self, devices: &[Device]) -> Result<()> {
        if let Some(rho) = &self.rho {
            validate_rho(rho, devices)?;
        }
        if let Some(c) = &self.cross {
            validate_cross(c, devices.len())?;
        }
        Ok(())
    }
}

pub fn validate_rho(rho: &[Vec<f64>], devices: &[Device]) -> Result<()> {
    let total: usize = devices.iter().map(|d| d.stats.num_features()).sum();
    let m = matrix_from_rows(rho)?;
    if m.nrows() != total || m.ncols() != total {
        return Err(dim(format!("ρ must be {total}×{total}")));
    }
    if !is_symmetric(&m, 1e-12) {
        return Err(invalid("ρ is not symmetric"));
    }
    if (0..total).any(|i| (m[(i, i)] - 1.0).abs() > 1e-12) {
        return Err(invalid("ρ must have a unit diagonal"));
    }
    symmetric_inverse(&m).map(|_| ())
}

pub fn validate_cross(c: &[Vec<f64>], k: usize) -> Result<()> {
    let m = matrix_from_rows(c)?;
    if m.nrows() != k || m.ncols() != k {
        return Err(dim(format!("c must be {k}×{k}")));
    }
    if !is_symmetric(&m, 1e-12) {
        return Err(invalid("c is not symmetric"));
    }
    for i in 0..k {
        if m[(i, i)] != 0.0 {
            return Err(invalid("c must have a zero diagonal"));
        }
        for j in 0..k {
            if !(0.0..=1.0).contains(&m[(i, j)]) {
                return Err(invalid(format!("c[{i}][{j}] = {} outside [0, 1]", m[(i, j)])));
            }
        }
    }
    Ok(())
}

/// `Σ_k π_k G_k(P_k)`.
pub fn network_gain_independent(policy: &IndependentPolicy, devices: &[Device]) -> Result<f64> {
    if policy.pi.len() != devices.len() || policy.power.len() != devices.len() {
        return Err(dim("policy length does not match device count"));
    }
    Ok(devices
        .iter()
        .zip(policy.pi.iter().zip(&policy.power))
        .map(|(d, (&p, &w))| p * d.gain(w))
        .sum())
}

/// Worst class-pair network gain `min_{ℓ≠ℓ'} Σ_k π_k G_k^{(ℓ,ℓ')}` (diagnostic only;
/// objectives always use the sum over pairs).
pub fn min_pair_gain_independent(policy: &IndependentPolicy, devices: &[Device]) -> Result<f64> {
    if policy.pi.len() != devices.len() || policy.power.len() != devices.len() {
        return Err(dim("policy length does not match device count"));
    }
    let mut totals: Option<Vec<f64>> = None;
    for (k, d) in devices.iter().enumerate() {
        let g = pairwise_device_gains(&d.stats, policy.power[k]);
        let acc = totals.get_or_insert_with(|| vec![0.0; g.len()]);
        if acc.len() != g.len() {
            return Err(dim("devices disagree on the number of classes"));
        }
        for (t, gi) in acc.iter_mut().zip(g) {
            *t += policy.pi[k] * gi;
        }
    }
    Ok(totals.unwrap_or_default().into_iter().fold(f64::INFINITY, f64::min))
}

/// `Σ_k Π_kk G_k + Σ_{k<k'} Π_kk' c_kk' (G_k + G_k')`.
pub fn joint_gain_simplified(
    policy: &JointPolicy,
    devices: &[Device],
    cross: &[Vec<f64>],
) -> Result<f64> {
    let k = devices.len();
    policy.check_shape(k)?;
    if cross.len() != k || cross.iter().any(|r| r.len() != k) {
        return Err(dim(format!("c must be {k}×{k}")));
    }
    let gains: Vec<f64> = devices.iter().zip(&policy.power).map(|(d, &p)| d.gain(p)).collect();
    Ok(simplified_gain_from_gains(&policy.moments, &gains, cross))
}

pub(crate) fn simplified_gain_from_gains(moments: &[Vec<f64>], gains: &[f64], cross: &[Vec<f64>]) -> f64 {
    let k = gains.len();
    let mut total = 0.0;
    for i in 0..k {
        total += moments[i][i] * gains[i];
        for j in i + 1..k {
            total += moments[i][j] * cross[i][j] * (gains[i] + gains[j]);
        }
    }
    total
}

/// Exact joint-gain evaluator holding `ρ⁻¹` and the feature layout.
///
/// Scheduled features are selected by masking the mean difference while the
/// full `Γ⁻¹` is retained.
#[derive(Debug, Clone)]
pub struct ExactGainModel {
    inv_rho: DMatrix<f64>,
    feature_device: Vec<usize>,
    /// One concatenated mean-difference vector per class pair.
    diffs: Vec<Vec<f64>>,
    residual_var: Vec<f64>,
    noise_var: Vec<f64>,
    num_devices: usize,
}

impl ExactGainModel {
    pub fn new(devices: &[Device], rho: &[Vec<f64>]) -> Result<Self> {
        let total: usize = devices.iter().map(|d| d.stats.num_features()).sum();
        let m = matrix_from_rows(rho)?;
        if m.nrows() != total || m.ncols() != total {
            return Err(dim(format!("ρ must be {total}×{total}")));
        }
        let inv_rho = symmetric_inverse(&m)?;
        let pairs = devices.first().map_or(0, |d| d.stats.pair_differences().len());
        let mut diffs = vec![Vec::with_capacity(total); pairs];
        let mut feature_device = Vec::with_capacity(total);
        let mut residual_var = Vec::with_capacity(total);
        let mut noise_var = Vec::with_capacity(total);
        for (k, d) in devices.iter().enumerate() {
            let pd = d.stats.pair_differences();
            if pd.len() != pairs {
                return Err(dim("devices disagree on the number of classes"));
            }
            for (acc, diff) in diffs.iter_mut().zip(pd) {
                acc.extend(diff);
            }
            feature_device.extend(std::iter::repeat_n(k, d.stats.num_features()));
            residual_var.extend_from_slice(d.stats.residual_var());
            noise_var.extend_from_slice(d.stats.noise_var());
        }
        Ok(Self { inv_rho, feature_device, diffs, residual_var, noise_var, num_devices: devices.len() })
    }

    pub fn num_devices(&self) -> usize {
        self.num_devices
    }

    /// `1 / D_i` for every feature at the given powers.
    fn inv_scale(&self, power: &[f64]) -> Vec<f64> {
        self.feature_device
            .iter()
            .enumerate()
            .map(|(i, &k)| feature_precision(self.residual_var[i], self.noise_var[i], power[k]).sqrt())
            .collect()
    }

    /// Expected gain under moment matrix `Π` (separate plus cross terms).
    pub fn expected(&self, moments: &[Vec<f64>], power: &[f64]) -> Result<f64> {
        let (sep, cross) = self.expected_terms(moments, power)?;
        Ok(sep + cross)
    }

    /// Returns the separate-feature term and the cross-feature term.
    pub fn expected_terms(&self, moments: &[Vec<f64>], power: &[f64]) -> Result<(f64, f64)> {
        let k = self.num_devices;
        if power.len() != k || moments.len() != k || moments.iter().any(|r| r.len() != k) {
            return Err(dim(format!("joint policy does not match {k} devices")));
        }
        let s = self.inv_scale(power);
        let n = s.len();
        let (mut sep, mut cross) = (0.0, 0.0);
        for diff in &self.diffs {
            let y: Vec<f64> = diff.iter().zip(&s).map(|(d, s)| d * s).collect();
            for i in 0..n {
                if y[i] == 0.0 {
                    continue;
                }
                let ki = self.feature_device[i];
                sep += moments[ki][ki] * y[i] * y[i] * self.inv_rho[(i, i)];
                for j in 0..n {
                    if j != i {
                        let kj = self.feature_device[j];
                        cross += moments[ki][kj] * y[i] * y[j] * self.inv_rho[(i, j)];
                    }
                }
            }
        }
        Ok((sep, cross))
    }

    /// Masked quadratic form `(Δμ ∘ b)ᵀ Γ⁻¹ (Δμ ∘ b)` summed over class pairs.
    pub fn realized(&self, schedule: &[bool], power: &[f64]) -> f64 {
        let s = self.inv_scale(power);
        let n = s.len();
        let mut total = 0.0;
        for diff in &self.diffs {
            let y: Vec<f64> = (0..n)
                .map(|i| if schedule[self.feature_device[i]] { diff[i] * s[i] } else { 0.0 })
                .collect();
            for i in 0..n {
                if y[i] == 0.0 {
                    continue;
                }
                let row: f64 = (0..n).map(|j| self.inv_rho[(i, j)] * y[j]).sum();
                total += y[i] * row;
            }
        }
        total
    }
}

/// Exact joint discriminant gain of a joint policy under feature correlation `ρ`.
pub fn joint_gain_exact(policy: &JointPolicy, devices: &[Device], rho: &[Vec<f64>]) -> Result<f64> {
    ExactGainModel::new(devices, rho)?.expected(&policy.moments, &policy.power)
}

/// Fitted cross-gain coefficients before and after clamping to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCoefficients {
    pub raw: Vec<Vec<f64>>,
    pub clamped: Vec<Vec<f64>>,
}

/// Moment matrix with only devices `a` and `b` active together.
pub fn pair_probe(k: usize, a: usize, b: usize) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; k]; k];
    for &(i, j) in &[(a, a), (b, b), (a, b), (b, a)] {
        m[i][j] = 1.0;
    }
    m
}

/// Fits `c` so that, at each pair probe (`Π_kk = Π_k'k' = Π_kk' = 1`,
/// `P_s = P_max`), the simplified gain equals the exact gain.
pub fn fit_cross_coefficients(devices: &[Device], rho: &[Vec<f64>]) -> Result<CrossCoefficients> {
    let model = ExactGainModel::new(devices, rho)?;
    let k = devices.len();
    let power: Vec<f64> = devices.iter().map(|d| d.max_sense_power).collect();
    let gains: Vec<f64> = devices.iter().map(Device::gain_at_max).collect();
    let mut raw = vec![vec![0.0; k]; k];
    let mut clamped = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in a + 1..k {
            let denom = gains[a] + gains[b];
            let exact = model.expected(&pair_probe(k, a, b), &power)?;
            let c = if denom > 0.0 { (exact - denom) / denom } else { 0.0 };
            let cc = c.clamp(0.0, 1.0);
            if c < 0.0 {
                log::info!("cross coefficient c[{a}][{b}] = {c:.4} clamped to 0");
            } else if c > 1.0 {
                log::info!("cross coefficient c[{a}][{b}] = {c:.4} clamped to 1");
            }
            raw[a][b] = c;
            raw[b][a] = c;
            clamped[a][b] = cc;
            clamped[b][a] = cc;
        }
    }
    Ok(CrossCoefficients { raw, clamped })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats1(means: &[f64], s: f64, e: f64) -> ClassStatistics {
        ClassStatistics::new(means.iter().map(|&m| vec![m]).collect(), vec![s], vec![e]).unwrap()
    }

    fn device(id: usize, stats: ClassStatistics, pmax: f64) -> Device {
        Device {
            id,
            stats,
            max_sense_power: pmax,
            feature_tx_power: 0.1,
            feature_payload: 32.0,
            position: None,
        }
    }

    #[test]
    fn gain_examples() {
        let s = stats1(&[0.0, 2.0], 1.0, 1.0);
        assert!((device_gain(&s, 1.0) - 2.0).abs() < 1e-15);
        assert!((device_gain(&s, 1e12) - 4.0).abs() < 1e-9);
        let s3 = stats1(&[0.0, 1.0, 3.0], 1.0, 0.0);
        assert_eq!(device_gain(&s3, 0.5), 14.0);
        // zero power: noisy features vanish, noiseless ones stay
        assert_eq!(device_gain(&s, 0.0), 0.0);
        assert_eq!(device_gain(&s3, 0.0), 14.0);
    }

    #[test]
    fn rejects_both_zero_variances() {
        let err = ClassStatistics::new(vec![vec![0.0], vec![1.0]], vec![0.0], vec![0.0]);
        assert!(err.is_err());
    }

    #[test]
    fn min_pair_is_below_sum() {
        let s = stats1(&[0.0, 1.0, 3.0], 1.0, 0.0);
        let devs = vec![device(0, s, 1.0)];
        let pol = IndependentPolicy::new(vec![1.0], vec![1.0]);
        assert_eq!(min_pair_gain_independent(&pol, &devs).unwrap(), 1.0);
        assert_eq!(network_gain_independent(&pol, &devs).unwrap(), 14.0);
    }

    #[test]
    fn simplified_examples() {
        let devs = vec![
            device(0, stats1(&[0.0, 2.0], 1.0, 1.0), 1.0),
            device(1, stats1(&[0.0, 1.0], 1.0, 1.0), 1.0),
        ];
        let g: Vec<f64> = devs.iter().map(|d| d.gain(1.0)).collect();
        let pol = JointPolicy { moments: vec![vec![1.0; 2]; 2], power: vec![1.0; 2] };
        let c = vec![vec![0.0, 0.5], vec![0.5, 0.0]];
        let v = joint_gain_simplified(&pol, &devs, &c).unwrap();
        assert!((v - 1.5 * (g[0] + g[1])).abs() < 1e-14);
        let z = vec![vec![0.0; 2]; 2];
        assert!((joint_gain_simplified(&pol, &devs, &z).unwrap() - (g[0] + g[1])).abs() < 1e-14);
    }

    #[test]
    fn identity_rho_gives_zero_cross_coefficients() {
        let devs = vec![
            device(0, stats1(&[0.0, 2.0], 1.0, 1.0), 1.0),
            device(1, stats1(&[0.0, 1.0], 1.0, 1.0), 0.5),
        ];
        let rho = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let fit = fit_cross_coefficients(&devs, &rho).unwrap();
        assert!(fit.raw.iter().flatten().all(|c| c.abs() < 1e-14));
    }

    #[test]
    fn duplicated_features_clamp_to_zero() {
        let s = stats1(&[0.0, 1.0], 1.0, 1.0);
        let devs = vec![device(0, s.clone(), 1.0), device(1, s, 1.0)];
        let rho = vec![vec![1.0, 0.99], vec![0.99, 1.0]];
        let fit = fit_cross_coefficients(&devs, &rho).unwrap();
        // exact pair gain = (a² + a² − 2·0.99·a²)/(1 − 0.99²) = 2a²/1.99
        let g = devs[0].gain(1.0);
        let expected = (2.0 * g / 1.99 - 2.0 * g) / (2.0 * g);
        assert!((fit.raw[0][1] - expected).abs() < 1e-12);
        assert!(fit.raw[0][1] < -0.49);
        assert_eq!(fit.clamped[0][1], 0.0);
    }

    #[test]
    fn moment_validation_flags_frechet_and_psd() {
        let ok = vec![vec![0.5, 0.25], vec![0.25, 0.5]];
        assert!(validate_moments(&ok, MOMENT_TOL).is_ok());
        let bad = vec![vec![0.5, 0.6], vec![0.6, 0.5]];
        assert!(validate_moments(&bad, MOMENT_TOL).is_err());
        // pairwise Fréchet-feasible but not realizable: three disjoint halves
        let nonpsd = vec![vec![0.5, 0.0, 0.0], vec![0.0, 0.5, 0.0], vec![0.0, 0.0, 0.5]];
        assert!(validate_moments(&nonpsd, MOMENT_TOL).is_err());
    }
}
