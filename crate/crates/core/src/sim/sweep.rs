//! Parameter sweeps: one row per (grid value, policy).

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::classify::classify_proxy_joint;
use super::simulate::{simulate, SamplerKind};
use super::{generate_scenario, random_block_correlation, Scenario, ScenarioParams};
use crate::error::{invalid, Error, Result};
use crate::model::{ExactGainModel, JointPolicy};
use crate::solver::{
    policy_all_on, policy_fair, policy_grid_search, policy_grid_search_joint, policy_importance, solve_independent,
    solve_joint, SolverConfig, SolverReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    /// Energy budget as a fraction of the all-on energy.
    Energy,
    /// Rate guarantee level.
    Gamma,
    /// Upper edge of the cross-device correlation band.
    Correlation,
    /// Features per device.
    Nk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Optimal independent policy.
    Optimal,
    /// Optimal joint policy under the simplified gain.
    Joint,
    Fair,
    Importance,
    #[serde(rename = "allon")]
    #[value(name = "allon")]
    AllOn,
    /// Independent grid search (K ≤ 3).
    Grid,
    /// Joint grid search (K ≤ 3).
    GridJoint,
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PolicyKind::Optimal => "optimal",
            PolicyKind::Joint => "joint",
            PolicyKind::Fair => "fair",
            PolicyKind::Importance => "importance",
            PolicyKind::AllOn => "allon",
            PolicyKind::Grid => "grid",
            PolicyKind::GridJoint => "grid_joint",
        })
    }
}

fn default_grid_points() -> usize {
    9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub kind: SweepKind,
    pub grid: Vec<f64>,
    pub policies: Vec<PolicyKind>,
    /// Simulated cycles per row; 0 skips the simulation.
    #[serde(default)]
    pub cycles: usize,
    #[serde(default = "default_sampler")]
    pub sampler: SamplerKind,
    /// Classifier-proxy trials per row; 0 skips the proxy.
    #[serde(default)]
    pub trials: usize,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
}

fn default_sampler() -> SamplerKind {
    SamplerKind::Independent
}

impl SweepSpec {
    pub fn new(kind: SweepKind, grid: Vec<f64>, policies: Vec<PolicyKind>) -> Self {
        Self {
            kind,
            grid,
            policies,
            cycles: 0,
            sampler: SamplerKind::Independent,
            trials: 0,
            grid_points: default_grid_points(),
            seed: 0,
            solver: SolverConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() || self.policies.is_empty() {
            return Err(invalid("sweep needs a non-empty grid and policy list"));
        }
        if self.grid.iter().any(|v| !v.is_finite()) {
            return Err(invalid("sweep grid values must be finite"));
        }
        let ok = match self.kind {
            SweepKind::Energy | SweepKind::Gamma => self.grid.iter().all(|&v| v >= 0.0),
            SweepKind::Correlation => self.grid.iter().all(|&v| (0.0..1.0).contains(&v)),
            SweepKind::Nk => self.grid.iter().all(|&v| v >= 1.0 && v.fract() == 0.0),
        };
        if !ok {
            return Err(invalid(format!("grid values out of range for a {:?} sweep", self.kind)));
        }
        Ok(())
    }
}

/// One CSV row. Column order is the field order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub kind: SweepKind,
    pub value: f64,
    pub policy: PolicyKind,
    /// `ok`, `violated` (returned policy breaks a constraint), `infeasible`,
    /// `nonconvergent` or `error`.
    pub status: String,
    pub objective: Option<f64>,
    pub exact_gain: Option<f64>,
    pub max_violation: Option<f64>,
    /// Semicolon-separated constraint labels, or the error message.
    pub violations: String,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub energy_budget: Option<f64>,
    pub expected_energy: Option<f64>,
    pub sim_energy: Option<f64>,
    pub sim_energy_se: Option<f64>,
    pub sim_gain: Option<f64>,
    pub sim_gain_se: Option<f64>,
    /// Devices whose simulated rate is below the guarantee by more than 3 SE.
    pub sim_rate_violations: Option<usize>,
    pub sim_energy_violated: Option<bool>,
    pub sampler_used: Option<SamplerKind>,
    pub accuracy: Option<f64>,
    pub accuracy_se: Option<f64>,
    /// Semicolon-separated scheduling probabilities.
    pub pi: String,
    /// Semicolon-separated sensing powers.
    pub power: String,
    #[serde(skip)]
    pub policy_moments: Option<JointPolicy>,
}

impl SweepRow {
    fn empty(kind: SweepKind, value: f64, policy: PolicyKind) -> Self {
        Self {
            kind,
            value,
            policy,
            status: String::new(),
            objective: None,
            exact_gain: None,
            max_violation: None,
            violations: String::new(),
            iterations: None,
            converged: None,
            energy_budget: None,
            expected_energy: None,
            sim_energy: None,
            sim_energy_se: None,
            sim_gain: None,
            sim_gain_se: None,
            sim_rate_violations: None,
            sim_energy_violated: None,
            sampler_used: None,
            accuracy: None,
            accuracy_se: None,
            pi: String::new(),
            power: String::new(),
            policy_moments: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Applies one grid value to the template.
pub fn sweep_scenario(
    kind: SweepKind,
    value: f64,
    template: &Scenario,
    params: Option<&ScenarioParams>,
    seed: u64,
) -> Result<Scenario> {
    let s = match kind {
        SweepKind::Energy => template.clone().with_energy_fraction(value),
        SweepKind::Gamma => template.clone().with_gamma(value),
        SweepKind::Correlation => {
            let n = template.devices[0].stats.num_features();
            if template.devices.iter().any(|d| d.stats.num_features() != n) {
                return Err(invalid("correlation sweeps need the same number of features on every device"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = template.clone();
            s.correlation.rho = Some(random_block_correlation(&mut rng, s.num_devices(), n, value)?);
            s.correlation.cross = None;
            s
        }
        SweepKind::Nk => {
            let params = params.ok_or_else(|| invalid("an Nk sweep needs scenario parameters"))?;
            let p = ScenarioParams { num_features: value as usize, ..params.clone() };
            let mut s = generate_scenario(template.seed, &p)?;
            s.energy = template.energy;
            s
        }
    };
    s.validate()?;
    Ok(s)
}

fn joined(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(";")
}

/// Computes the policy of `kind` on `s`, as moments. Grid searches use
/// `grid_points` values per axis.
pub fn solve_policy(
    kind: PolicyKind,
    s: &Scenario,
    cfg: &SolverConfig,
    grid_points: usize,
) -> Result<SolverReport<JointPolicy>> {
    let to_joint = |r: SolverReport<crate::model::IndependentPolicy>| SolverReport {
        policy: r.policy.to_joint(),
        objective: r.objective,
        iterations: r.iterations,
        converged: r.converged,
        residuals: r.residuals,
        max_violation: r.max_violation,
        feasible: r.feasible,
        violations: r.violations,
        history: r.history,
        wall_time: r.wall_time,
    };
    let cross = || s.cross_coefficients()?.ok_or_else(|| invalid("joint policies need cross coefficients or ρ"));
    let r = match kind {
        PolicyKind::Optimal => to_joint(solve_independent(s, cfg)?),
        PolicyKind::Fair => to_joint(policy_fair(s)?),
        PolicyKind::Importance => to_joint(policy_importance(s)?),
        PolicyKind::AllOn => to_joint(policy_all_on(s)?),
        PolicyKind::Grid => to_joint(policy_grid_search(s, grid_points, cfg.grid_cost_cap)?),
        PolicyKind::Joint => solve_joint(s, &cross()?, cfg)?,
        PolicyKind::GridJoint => policy_grid_search_joint(s, &cross()?, grid_points, cfg.grid_cost_cap)?,
    };
    Ok(r)
}

fn solve(kind: PolicyKind, s: &Scenario, spec: &SweepSpec) -> Result<(SolverReport<JointPolicy>, f64)> {
    let r = solve_policy(kind, s, &spec.solver, spec.grid_points)?;
    let energy = crate::network::expected_energy(&r.policy.diag(), &r.policy.power, &s.devices, &s.timing);
    Ok((r, energy))
}

fn run_row(s: &Scenario, value: f64, kind: PolicyKind, spec: &SweepSpec, point: usize) -> SweepRow {
    let mut row = SweepRow::empty(spec.kind, value, kind);
    let budget = s.energy.value();
    row.energy_budget = budget.is_finite().then_some(budget);
    let (r, energy) = match solve(kind, s, spec) {
        Ok(v) => v,
        Err(e) => {
            let (status, msg) = match &e {
                Error::Infeasible(labels) => ("infeasible", labels.join(";")),
                Error::NonConvergence { .. } => ("nonconvergent", e.to_string()),
                _ => ("error", e.to_string()),
            };
            row.status = status.into();
            row.violations = msg;
            return row;
        }
    };
    row.status = if r.feasible { "ok" } else { "violated" }.into();
    row.objective = Some(r.objective);
    row.max_violation = Some(r.max_violation);
    row.violations = r.violations.join(";");
    row.iterations = Some(r.iterations);
    row.converged = Some(r.converged);
    row.expected_energy = Some(energy);
    row.pi = joined(&r.policy.diag());
    row.power = joined(&r.policy.power);
    if let Some(rho) = &s.correlation.rho {
        row.exact_gain = ExactGainModel::new(&s.devices, rho).and_then(|m| m.expected(&r.policy.moments, &r.policy.power)).ok();
    }
    let seed = spec.seed ^ ((point as u64 + 1) << 32);
    if spec.cycles > 0 {
        match simulate(&r.policy, s, spec.cycles, spec.sampler, seed) {
            Ok(sim) => {
                row.sim_energy = Some(sim.energy.mean);
                row.sim_energy_se = Some(sim.energy.se);
                row.sim_gain = Some(sim.gain.mean);
                row.sim_gain_se = Some(sim.gain.se);
                row.sim_rate_violations = Some(sim.rates.iter().filter(|d| d.violated).count());
                row.sim_energy_violated = Some(sim.energy_violated);
                row.sampler_used = Some(sim.sampler_used);
            }
            Err(e) => log::warn!("simulation failed at {value} for {kind}: {e}"),
        }
    }
    if spec.trials > 0 {
        match classify_proxy_joint(&r.policy, s, spec.trials, spec.sampler, seed.wrapping_add(1)) {
            Ok(acc) => {
                row.accuracy = Some(acc.mean);
                row.accuracy_se = Some(acc.se);
            }
            Err(e) => log::warn!("classifier proxy failed at {value} for {kind}: {e}"),
        }
    }
    row.policy_moments = Some(r.policy);
    row
}

/// Runs every `(grid value, policy)` combination. Rows come out grouped by
/// grid value in grid order, then in policy order. Infeasible or failed
/// solves are kept with their status.
pub fn run_sweep(spec: &SweepSpec, template: &Scenario, params: Option<&ScenarioParams>) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    template.validate()?;
    let scenarios: Vec<Scenario> = spec
        .grid
        .iter()
        .map(|&v| sweep_scenario(spec.kind, v, template, params, spec.seed))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, PolicyKind)> =
        (0..spec.grid.len()).flat_map(|i| spec.policies.iter().map(move |&p| (i, p))).collect();
    Ok(jobs.par_iter().map(|&(i, p)| run_row(&scenarios[i], spec.grid[i], p, spec, i)).collect())
}

/// Writes the rows as CSV with a header line.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(SWEEP_COLUMNS)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Column names of [`write_sweep_csv`], in order.
pub const SWEEP_COLUMNS: &[&str] = &[
    "kind",
    "value",
    "policy",
    "status",
    "objective",
    "exact_gain",
    "max_violation",
    "violations",
    "iterations",
    "converged",
    "energy_budget",
    "expected_energy",
    "sim_energy",
    "sim_energy_se",
    "sim_gain",
    "sim_gain_se",
    "sim_rate_violations",
    "sim_energy_violated",
    "sampler_used",
    "accuracy",
    "accuracy_se",
    "pi",
    "power",
];
