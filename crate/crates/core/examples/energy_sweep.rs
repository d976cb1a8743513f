//! Energy sweep with simulation and the classifier proxy, written as CSV to
//! stdout.

use isac_sched::sim::{generate_scenario, run_sweep, write_sweep_csv, PolicyKind, ScenarioParams, SweepKind, SweepSpec};

fn main() -> isac_sched::Result<()> {
    let params = ScenarioParams::default();
    let template = generate_scenario(1, &params)?;
    let mut spec = SweepSpec::new(
        SweepKind::Energy,
        vec![0.2, 0.4, 0.6, 0.8, 1.0],
        vec![PolicyKind::Optimal, PolicyKind::Importance, PolicyKind::Fair, PolicyKind::AllOn],
    );
    spec.cycles = 20_000;
    spec.trials = 2_000;
    let rows = run_sweep(&spec, &template, Some(&params))?;
    write_sweep_csv(&rows, std::io::stdout().lock())
}
