//! Monte Carlo cycle simulation of a scheduling policy.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Scenario;
use crate::error::{dim, invalid, Result};
use crate::linalg::pairwise_sum;
use crate::model::{ExactGainModel, JointPolicy};
use crate::sampler::{dg_calibrate, dg_sample, is_interior, ising_fit, ising_sample, stream_rng, IsingFitConfig, ISING_EXACT_MAX_K};

/// Schedule generator used by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    /// Independent Bernoulli draws from the diagonal of `Π`.
    Independent,
    /// Maximum-entropy Ising model fitted to `Π`.
    Ising,
    /// Dichotomized Gaussian calibrated to `Π`.
    Dg,
}

impl std::fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SamplerKind::Independent => "independent",
            SamplerKind::Ising => "ising",
            SamplerKind::Dg => "dg",
        })
    }
}

/// Sample mean with its standard error and 95% normal-approximation interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub ci: [f64; 2],
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, se: f64::NAN, ci: [f64::NAN; 2] };
        }
        let mean = pairwise_sum(xs) / n as f64;
        let se = if n > 1 {
            let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
            (pairwise_sum(&dev) / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, se, ci: [mean - 1.96 * se, mean + 1.96 * se] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceRate {
    /// Broadband rate averaged over the whole cycle, bit/s.
    pub rate: Estimate,
    pub r_min: f64,
    /// `mean + 3·SE < r_min`.
    pub violated: bool,
    /// Number of other non-sensing devices, over cycles where this device does not sense.
    pub m_given_off: Estimate,
    pub off_cycles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub cycles: usize,
    pub sampler_requested: SamplerKind,
    pub sampler_used: SamplerKind,
    /// Why the requested sampler was replaced, if it was.
    pub fallback: Option<String>,
    /// `exact`, `simplified` or `independent`.
    pub gain_model: String,
    pub rates: Vec<DeviceRate>,
    pub energy: Estimate,
    pub energy_budget: Option<f64>,
    /// `mean − 3·SE > E`.
    pub energy_violated: bool,
    pub gain: Estimate,
    /// Filled in by callers that also run the classifier proxy.
    pub accuracy: Option<Estimate>,
    /// Empirical `Π̂` of the simulated schedules.
    pub schedule_moments: Vec<Vec<f64>>,
}

impl SimReport {
    pub fn any_rate_violated(&self) -> bool {
        self.rates.iter().any(|r| r.violated)
    }
}

/// Draws `n` schedules from `moments` with the requested generator, falling
/// back to the dichotomized Gaussian when an Ising model cannot represent the
/// target. Returns the sampler actually used and the fallback reason.
pub(crate) fn draw_schedules(
    moments: &[Vec<f64>],
    n: usize,
    kind: SamplerKind,
    seed: u64,
) -> Result<(Vec<Vec<bool>>, SamplerKind, Option<String>)> {
    let k = moments.len();
    match kind {
        SamplerKind::Independent => {
            let pi: Vec<f64> = (0..k).map(|i| moments[i][i]).collect();
            let samples = (0..n)
                .into_par_iter()
                .map(|c| {
                    let mut rng = stream_rng(seed, c as u64);
                    pi.iter().map(|&p| rng.random::<f64>() < p).collect()
                })
                .collect();
            Ok((samples, SamplerKind::Independent, None))
        }
        SamplerKind::Ising => {
            let reason = if k > ISING_EXACT_MAX_K {
                Some(format!("K = {k} exceeds the exact Ising limit {ISING_EXACT_MAX_K}"))
            } else if !is_interior(moments, 1e-9) {
                Some("target moments lie on the boundary of the moment polytope".to_string())
            } else {
                let fit = ising_fit(moments, &IsingFitConfig::default())?;
                if fit.converged {
                    return Ok((ising_sample(&fit.model, n, seed), SamplerKind::Ising, None));
                }
                Some(format!("Ising fit did not converge (residual {:.3e})", fit.residual))
            };
            log::info!("Ising sampler replaced by DG: {}", reason.as_deref().unwrap_or(""));
            let dg = dg_calibrate(moments)?;
            Ok((dg_sample(&dg, n, seed)?, SamplerKind::Dg, reason))
        }
        SamplerKind::Dg => {
            let dg = dg_calibrate(moments)?;
            Ok((dg_sample(&dg, n, seed)?, SamplerKind::Dg, None))
        }
    }
}

/// Per-cycle gain realization matching the scenario's gain model.
pub(crate) enum Realizer {
    Exact(Box<ExactGainModel>),
    Simplified { gains: Vec<f64>, cross: Vec<Vec<f64>> },
    Independent { gains: Vec<f64> },
}

impl Realizer {
    pub fn new(scenario: &Scenario, power: &[f64]) -> Result<Self> {
        let gains: Vec<f64> = scenario.devices.iter().zip(power).map(|(d, &p)| d.gain(p)).collect();
        if let Some(rho) = &scenario.correlation.rho {
            return Ok(Realizer::Exact(Box::new(ExactGainModel::new(&scenario.devices, rho)?)));
        }
        if let Some(cross) = &scenario.correlation.cross {
            return Ok(Realizer::Simplified { gains, cross: cross.clone() });
        }
        Ok(Realizer::Independent { gains })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Realizer::Exact(_) => "exact",
            Realizer::Simplified { .. } => "simplified",
            Realizer::Independent { .. } => "independent",
        }
    }

    pub fn realize(&self, b: &[bool], power: &[f64]) -> f64 {
        match self {
            Realizer::Exact(m) => m.realized(b, power),
            Realizer::Independent { gains } => (0..b.len()).filter(|&i| b[i]).map(|i| gains[i]).sum(),
            Realizer::Simplified { gains, cross } => {
                let mut g = 0.0;
                for i in (0..b.len()).filter(|&i| b[i]) {
                    g += gains[i];
                    for j in (i + 1..b.len()).filter(|&j| b[j]) {
                        g += cross[i][j] * (gains[i] + gains[j]);
                    }
                }
                g
            }
        }
    }
}

/// Simulates `cycles` sensing cycles of `policy`, drawing schedules with
/// `kind`. Independent policies enter through [`crate::model::IndependentPolicy::to_joint`].
pub fn simulate(policy: &JointPolicy, scenario: &Scenario, cycles: usize, kind: SamplerKind, seed: u64) -> Result<SimReport> {
    scenario.validate()?;
    policy.validate(&scenario.devices)?;
    if cycles == 0 {
        return Err(invalid("cycles must be >= 1"));
    }
    let (schedules, used, fallback) = draw_schedules(&policy.moments, cycles, kind, seed)?;
    let mut report = simulate_schedules(policy, scenario, &schedules)?;
    report.sampler_requested = kind;
    report.sampler_used = used;
    report.fallback = fallback;
    Ok(report)
}

/// Evaluates rates, energy and gain on the given schedules.
pub fn simulate_schedules(policy: &JointPolicy, scenario: &Scenario, schedules: &[Vec<bool>]) -> Result<SimReport> {
    let k = scenario.num_devices();
    if policy.power.len() != k {
        return Err(dim(format!("policy has {} powers for {k} devices", policy.power.len())));
    }
    if schedules.iter().any(|b| b.len() != k) {
        return Err(dim(format!("schedules must have length {k}")));
    }
    let n = schedules.len();
    if n == 0 {
        return Err(invalid("no schedules to simulate"));
    }
    let t = &scenario.timing;
    let bw = scenario.radio.bandwidth;
    let realizer = Realizer::new(scenario, &policy.power)?;

    // distinct schedules are evaluated once; the map keeps the order fixed
    let mut distinct: BTreeMap<&[bool], f64> = schedules.iter().map(|b| (b.as_slice(), 0.0)).collect();
    let keys: Vec<&[bool]> = distinct.keys().copied().collect();
    let values: Vec<f64> = keys.par_iter().map(|b| realizer.realize(b, &policy.power)).collect();
    for (key, v) in keys.into_iter().zip(values) {
        distinct.insert(key, v);
    }

    let per_cycle: Vec<(Vec<f64>, Vec<usize>, f64, f64)> = schedules
        .par_iter()
        .map(|b| {
            let off = b.iter().filter(|&&x| !x).count();
            let mut rates = Vec::with_capacity(k);
            let mut m = Vec::with_capacity(k);
            let mut energy = 0.0;
            for i in 0..k {
                let e = scenario.rates.efficiency[i];
                let stall = t.stall / k as f64;
                if b[i] {
                    rates.push(e * bw * stall / t.cycle());
                    m.push(usize::MAX);
                    let d = &scenario.devices[i];
                    energy += policy.power[i] * t.sensing + d.feature_tx_power * t.feature;
                } else {
                    let others = off - 1;
                    rates.push(e * bw * (t.sensing / (1 + others) as f64 + stall) / t.cycle());
                    m.push(others);
                }
            }
            (rates, m, energy, distinct[b.as_slice()])
        })
        .collect();

    let budget = scenario.energy.value();
    let rates = (0..k)
        .map(|i| {
            let xs: Vec<f64> = per_cycle.iter().map(|c| c.0[i]).collect();
            let rate = Estimate::from_samples(&xs);
            let ms: Vec<f64> = per_cycle.iter().filter(|c| c.1[i] != usize::MAX).map(|c| c.1[i] as f64).collect();
            let r_min = scenario.rates.r_min[i];
            DeviceRate {
                violated: rate.mean + 3.0 * rate.se < r_min,
                rate,
                r_min,
                off_cycles: ms.len(),
                m_given_off: Estimate::from_samples(&ms),
            }
        })
        .collect();
    let energy = Estimate::from_samples(&per_cycle.iter().map(|c| c.2).collect::<Vec<_>>());
    let gain = Estimate::from_samples(&per_cycle.iter().map(|c| c.3).collect::<Vec<_>>());
    Ok(SimReport {
        cycles: n,
        sampler_requested: SamplerKind::Independent,
        sampler_used: SamplerKind::Independent,
        fallback: None,
        gain_model: realizer.name().to_string(),
        rates,
        energy_violated: budget.is_finite() && energy.mean - 3.0 * energy.se > budget,
        energy_budget: budget.is_finite().then_some(budget),
        energy,
        gain,
        accuracy: None,
        schedule_moments: crate::sampler::empirical_moments(schedules),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::IndependentPolicy;
    use crate::network::{expected_m_independent, expected_m_joint};
    use crate::sim::{generate_scenario, ScenarioParams};

    fn scenario(k: usize) -> Scenario {
        generate_scenario(5, &ScenarioParams { num_devices: k, ..Default::default() }).unwrap()
    }

    #[test]
    fn always_on_rate_is_deterministic() {
        let s = scenario(4);
        let p = IndependentPolicy::new(vec![1.0; 4], s.max_power()).to_joint();
        let r = simulate(&p, &s, 50, SamplerKind::Independent, 1).unwrap();
        let t = &s.timing;
        for (i, d) in r.rates.iter().enumerate() {
            let want = s.rates.efficiency[i] * s.radio.bandwidth * t.stall / (t.cycle() * 4.0);
            assert!((d.rate.mean - want).abs() <= 1e-12 * want);
            assert!(d.rate.se < 1e-9 * want);
        }
        assert!((r.energy.mean - s.all_on_energy()).abs() < 1e-9);
    }

    #[test]
    fn never_on_rate_and_zero_energy() {
        let s = scenario(3);
        let p = IndependentPolicy::all_off(3).to_joint();
        let r = simulate(&p, &s, 20, SamplerKind::Dg, 1).unwrap();
        let t = &s.timing;
        for (i, d) in r.rates.iter().enumerate() {
            let want = s.rates.efficiency[i] * s.radio.bandwidth * (t.stall + t.sensing) / (t.cycle() * 3.0);
            assert!((d.rate.mean - want).abs() <= 1e-12 * want);
        }
        assert_eq!(r.energy.mean, 0.0);
        assert_eq!(r.gain.mean, 0.0);
    }

    #[test]
    fn empirical_m_matches_closed_forms() {
        let s = scenario(4);
        let pol = IndependentPolicy::new(vec![0.3, 0.6, 0.1, 0.8], s.max_power());
        let r = simulate(&pol.to_joint(), &s, 100_000, SamplerKind::Independent, 2).unwrap();
        for i in 0..4 {
            let want = expected_m_independent(&pol.pi, i);
            let m = r.rates[i].m_given_off;
            assert!((m.mean - want).abs() < 3.5 * m.se, "device {i}: {} vs {want}", m.mean);
        }
        let gain: f64 = (0..4).map(|i| pol.pi[i] * s.devices[i].gain(pol.power[i])).sum();
        assert!((r.gain.mean - gain).abs() < 3.5 * r.gain.se);

        let h = vec![-0.5, 0.2, -1.0, 0.1];
        let j = vec![
            vec![0.0, 1.2, -0.4, 0.3],
            vec![1.2, 0.0, 0.5, -0.8],
            vec![-0.4, 0.5, 0.0, 0.2],
            vec![0.3, -0.8, 0.2, 0.0],
        ];
        let moments = crate::sampler::IsingModel::new(h, j).unwrap().moments().unwrap();
        let joint = JointPolicy { moments, power: s.max_power() };
        let r = simulate(&joint, &s, 100_000, SamplerKind::Ising, 3).unwrap();
        assert_eq!(r.sampler_used, SamplerKind::Ising);
        for i in 0..4 {
            let want = expected_m_joint(&joint.moments, i).unwrap();
            let m = r.rates[i].m_given_off;
            assert!((m.mean - want).abs() < 3.5 * m.se, "device {i}: {} vs {want}", m.mean);
        }
    }

    #[test]
    fn boundary_moments_fall_back_to_dg() {
        let s = scenario(2);
        let joint = JointPolicy { moments: vec![vec![0.5, 0.5], vec![0.5, 0.5]], power: s.max_power() };
        let r = simulate(&joint, &s, 1000, SamplerKind::Ising, 3).unwrap();
        assert_eq!(r.sampler_used, SamplerKind::Dg);
        assert!(r.fallback.is_some());
        assert!((r.schedule_moments[0][1] - r.schedule_moments[0][0]).abs() < 1e-12);
    }

    #[test]
    fn simulation_is_repeatable() {
        let s = scenario(3);
        let pol = IndependentPolicy::new(vec![0.3, 0.6, 0.1], s.max_power()).to_joint();
        let a = simulate(&pol, &s, 5000, SamplerKind::Independent, 11).unwrap();
        let b = simulate(&pol, &s, 5000, SamplerKind::Independent, 11).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
