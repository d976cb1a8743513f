//! Exact gain of the independent and joint policies as cross-device feature
//! correlation grows.

use isac_sched::sim::{generate_scenario, run_sweep, PolicyKind, ScenarioParams, SweepKind, SweepSpec};

fn main() -> isac_sched::Result<()> {
    let template = generate_scenario(1, &ScenarioParams { num_devices: 3, ..Default::default() })?.with_energy_fraction(0.6);
    let grid: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let mut spec = SweepSpec::new(SweepKind::Correlation, grid, vec![PolicyKind::Optimal, PolicyKind::Joint]);
    spec.seed = 1;
    let rows = run_sweep(&spec, &template, None)?;
    println!("{:>5} {:>12} {:>12} {:>8}", "|ρ|", "independent", "joint", "ratio");
    for pair in rows.chunks(2) {
        let (a, b) = (pair[0].exact_gain.unwrap_or(f64::NAN), pair[1].exact_gain.unwrap_or(f64::NAN));
        println!("{:>5.1} {a:>12.4} {b:>12.4} {:>8.4}", pair[0].value, b / a);
    }
    Ok(())
}
