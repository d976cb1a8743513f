//! Scenario generation, Monte Carlo cycle simulation, the classifier proxy and
//! parameter sweeps.

mod classify;
mod simulate;
mod sweep;

pub use classify::{classify_proxy, classify_proxy_joint, spearman};
pub use simulate::{simulate, simulate_schedules, DeviceRate, Estimate, SamplerKind, SimReport};
pub use sweep::{run_sweep, solve_policy, sweep_scenario, write_sweep_csv, PolicyKind, SweepKind, SweepRow, SweepSpec, SWEEP_COLUMNS};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{dim, invalid, Result};
use crate::linalg::{matrix_from_rows, min_eigenvalue};
use crate::model::{fit_cross_coefficients, ClassStatistics, CorrelationModel, Device};
use crate::network::{
    standard_efficiency, EfficiencyModel, EnergyBudget, RadioEnvironment, RateRequirements, Timing,
};

/// Everything a solver or simulator needs about one network instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub devices: Vec<Device>,
    pub radio: RadioEnvironment,
    pub timing: Timing,
    pub rates: RateRequirements,
    pub energy: EnergyBudget,
    #[serde(default)]
    pub correlation: CorrelationModel,
    /// Link SINR per device in dB (informational).
    #[serde(default)]
    pub sinr_db: Vec<f64>,
    pub seed: u64,
}

impl Scenario {
    pub fn num_devices(&self) -> usize {
        self.devices.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.devices.len();
        if k == 0 {
            return Err(invalid("scenario has no devices"));
        }
        for d in &self.devices {
            d.validate()?;
        }
        let l = self.devices[0].stats.num_classes();
        if self.devices.iter().any(|d| d.stats.num_classes() != l) {
            return Err(dim("devices disagree on the number of classes"));
        }
        self.radio.validate()?;
        if self.radio.tx_power.len() != k {
            return Err(dim(format!("radio.tx_power must have length {k}")));
        }
        self.timing.validate()?;
        self.rates.validate(k)?;
        self.energy.validate()?;
        self.correlation.validate(&self.devices)?;
        Ok(())
    }

    /// Energy per cycle when every device senses at `P_max` in every cycle.
    pub fn all_on_energy(&self) -> f64 {
        self.devices
            .iter()
            .map(|d| d.max_sense_power * self.timing.sensing + d.feature_tx_power * self.timing.feature)
            .sum()
    }

    pub fn max_power(&self) -> Vec<f64> {
        self.devices.iter().map(|d| d.max_sense_power).collect()
    }

    /// Sets the energy budget to `fraction` of [`Scenario::all_on_energy`].
    pub fn with_energy_fraction(mut self, fraction: f64) -> Self {
        self.energy = EnergyBudget::joules(fraction * self.all_on_energy());
        self
    }

    pub fn with_energy(mut self, energy: EnergyBudget) -> Self {
        self.energy = energy;
        self
    }

    /// Rescales the guaranteed rates to `γ · r_std`.
    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.rates.r_min = self.rates.standard_rate.iter().map(|r| gamma * r).collect();
        self.rates.gamma = gamma;
        self
    }

    /// Scales every class mean by `s`.
    pub fn with_mean_scale(mut self, s: f64) -> Self {
        for d in &mut self.devices {
            d.stats = d.stats.scaled(s);
        }
        self
    }

    /// Cross coefficients from the configuration, or fitted from `ρ`.
    pub fn cross_coefficients(&self) -> Result<Option<Vec<Vec<f64>>>> {
        if let Some(c) = &self.correlation.cross {
            return Ok(Some(c.clone()));
        }
        match &self.correlation.rho {
            Some(rho) => Ok(Some(fit_cross_coefficients(&self.devices, rho)?.clamped)),
            None => Ok(None),
        }
    }
}

/// Parameters of the synthetic scenario generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioParams {
    pub num_devices: usize,
    pub num_features: usize,
    pub num_classes: usize,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub power_categories: Vec<f64>,
    pub bandwidth: f64,
    pub pathloss_exponent: f64,
    pub pathloss_const_db: f64,
    pub shadowing_std_db: f64,
    pub noise_density_dbm_hz: f64,
    pub noise_rise_db: f64,
    pub efficiency: EfficiencyModel,
    pub timing: Timing,
    pub gamma: f64,
    /// Energy budget as a fraction of the all-on energy; `None` = unlimited.
    pub energy_fraction: Option<f64>,
    pub residual_var: f64,
    pub noise_var: f64,
    /// Scale of the class-mean differences.
    pub separation: f64,
    pub payload_bits_per_feature: f64,
    /// Cross-device correlation magnitude band upper edge.
    pub rho_max: Option<f64>,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            num_devices: 20,
            num_features: 10,
            num_classes: 2,
            inner_radius: 100.0,
            outer_radius: 1000.0,
            power_categories: vec![0.1, 0.2, 0.4, 0.6, 1.0],
            bandwidth: 10e6,
            pathloss_exponent: 3.76,
            pathloss_const_db: 15.3,
            shadowing_std_db: 8.0,
            noise_density_dbm_hz: -174.0,
            noise_rise_db: 6.0,
            efficiency: EfficiencyModel::default(),
            timing: Timing::default(),
            gamma: 0.5,
            energy_fraction: None,
            residual_var: 1.0,
            noise_var: 1.0,
            separation: 1.0,
            payload_bits_per_feature: 32.0,
            rho_max: None,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_devices == 0 || self.num_features == 0 || self.num_classes < 2 {
            return Err(invalid("need >= 1 device, >= 1 feature and >= 2 classes"));
        }
        if !(self.inner_radius > 0.0 && self.outer_radius >= self.inner_radius) {
            return Err(invalid("radii must satisfy 0 < inner <= outer"));
        }
        if self.power_categories.is_empty() || self.power_categories.iter().any(|&p| !(p > 0.0)) {
            return Err(invalid("power categories must be non-empty and > 0"));
        }
        if let Some(f) = self.energy_fraction {
            if !(f >= 0.0 && f.is_finite()) {
                return Err(invalid("energy_fraction must be >= 0"));
            }
        }
        if let Some(r) = self.rho_max {
            if !(0.0..1.0).contains(&r) {
                return Err(invalid("rho_max must lie in [0, 1)"));
            }
        }
        if !(self.gamma >= 0.0) || !(self.separation.is_finite()) {
            return Err(invalid("gamma must be >= 0 and separation finite"));
        }
        Ok(())
    }
}

/// Builds a random scenario. Identical `(seed, params)` give identical output.
pub fn generate_scenario(seed: u64, params: &ScenarioParams) -> Result<Scenario> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = params.num_devices;
    let n = params.num_features;
    let radio = RadioEnvironment {
        bandwidth: params.bandwidth,
        pathloss_exponent: params.pathloss_exponent,
        pathloss_const_db: params.pathloss_const_db,
        shadowing_std_db: params.shadowing_std_db,
        noise_density_dbm_hz: params.noise_density_dbm_hz,
        noise_rise_db: params.noise_rise_db,
        tx_power: (0..k).map(|i| params.power_categories[i % params.power_categories.len()]).collect(),
        efficiency: params.efficiency,
    };
    let shadow = Normal::new(0.0, params.shadowing_std_db).map_err(|e| invalid(e.to_string()))?;
    // class means ~ N(0, s²/2) so that pairwise differences ~ N(0, s²)
    let mean_sd = params.separation / 2f64.sqrt();
    let (r2_in, r2_out) = (params.inner_radius.powi(2), params.outer_radius.powi(2));
    let mut devices = Vec::with_capacity(k);
    let mut sinr_db = Vec::with_capacity(k);
    for i in 0..k {
        let r = (r2_in + rng.random::<f64>() * (r2_out - r2_in)).sqrt();
        let theta = rng.random::<f64>() * std::f64::consts::TAU;
        let psi = shadow.sample(&mut rng);
        let ptx = radio.tx_power[i];
        sinr_db.push(radio.sinr_db(ptx, r, psi));
        let means = (0..params.num_classes)
            .map(|_| {
                (0..n)
                    .map(|_| mean_sd * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let stats = ClassStatistics::new(means, vec![params.residual_var; n], vec![params.noise_var; n])?;
        devices.push(Device {
            id: i,
            stats,
            max_sense_power: ptx,
            feature_tx_power: ptx,
            feature_payload: params.payload_bits_per_feature * n as f64,
            position: Some([r * theta.cos(), r * theta.sin()]),
        });
    }
    let efficiency: Vec<f64> = sinr_db.iter().map(|&s| params.efficiency.eval(s)).collect();
    let standard_rate: Vec<f64> = sinr_db
        .iter()
        .map(|&s| standard_efficiency(&params.efficiency, s) * params.bandwidth / k as f64)
        .collect();
    let correlation = match params.rho_max {
        Some(rmax) => CorrelationModel {
            rho: Some(random_block_correlation(&mut rng, k, n, rmax)?),
            cross: None,
        },
        None => CorrelationModel::default(),
    };
    let rates = RateRequirements {
        efficiency,
        r_min: standard_rate.iter().map(|r| params.gamma * r).collect(),
        gamma: params.gamma,
        standard_rate,
    };
    let mut scenario = Scenario {
        devices,
        radio,
        timing: params.timing,
        rates,
        energy: EnergyBudget::unlimited(),
        correlation,
        sinr_db,
        seed,
    };
    if let Some(f) = params.energy_fraction {
        scenario = scenario.with_energy_fraction(f);
    }
    scenario.validate()?;
    Ok(scenario)
}

/// Random feature correlation where feature `n` of one device correlates only
/// with feature `n` of the other devices, with magnitudes drawn uniformly from
/// `[ρ_max − 0.1, ρ_max]` and random signs.
pub fn random_block_correlation<R: Rng>(rng: &mut R, k: usize, n: usize, rho_max: f64) -> Result<Vec<Vec<f64>>> {
    let total = k * n;
    let mut rho = vec![vec![0.0; total]; total];
    for i in 0..total {
        rho[i][i] = 1.0;
    }
    let lo = (rho_max - 0.1).max(0.0);
    for f in 0..n {
        let mut block = None;
        for _ in 0..1000 {
            let signs: Vec<f64> = (0..k).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            let mut m = vec![vec![0.0; k]; k];
            for a in 0..k {
                m[a][a] = 1.0;
                for b in a + 1..k {
                    let v = signs[a] * signs[b] * (lo + rng.random::<f64>() * (rho_max - lo));
                    m[a][b] = v;
                    m[b][a] = v;
                }
            }
            if min_eigenvalue(&matrix_from_rows(&m)?) > 1e-3 {
                block = Some(m);
                break;
            }
        }
        let m = block.ok_or_else(|| invalid(format!("could not draw a positive definite block for ρ_max = {rho_max}")))?;
        for a in 0..k {
            for b in 0..k {
                if a != b {
                    rho[a * n + f][b * n + f] = m[a][b];
                }
            }
        }
    }
    Ok(rho)
}

/// Distance of a device from the fusion centre, if its position is known.
pub fn device_distance(d: &Device) -> Option<f64> {
    d.position.map(|[x, y]| x.hypot(y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sizes() {
        let s = generate_scenario(1, &ScenarioParams::default()).unwrap();
        assert_eq!(s.num_devices(), 20);
        assert!(s.devices.iter().all(|d| d.stats.num_features() == 10 && d.stats.num_classes() == 2));
        assert!(s.devices.iter().all(|d| d.feature_payload == 320.0));
        for d in &s.devices {
            let r = device_distance(d).unwrap();
            assert!((100.0..=1000.0).contains(&r));
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let p = ScenarioParams { rho_max: Some(0.5), num_devices: 3, ..Default::default() };
        let a = serde_json::to_string(&generate_scenario(9, &p).unwrap()).unwrap();
        let b = serde_json::to_string(&generate_scenario(9, &p).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sinr_decreasing_without_shadowing() {
        let p = ScenarioParams { shadowing_std_db: 0.0, power_categories: vec![0.4], ..Default::default() };
        let s = generate_scenario(3, &p).unwrap();
        let mut pairs: Vec<(f64, f64)> =
            s.devices.iter().zip(&s.sinr_db).map(|(d, &q)| (device_distance(d).unwrap(), q)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(pairs.windows(2).all(|w| w[1].1 < w[0].1));
    }
}
