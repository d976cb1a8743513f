//! Drives the command layer from code: generate a scenario, solve, simulate
//! and check the samplers, writing the files a CLI run would.

use isac_sched::cli::{cmd_gen, cmd_sample_check, cmd_simulate, cmd_solve, RunConfig, ScenarioSource};
use isac_sched::sim::{SamplerKind, ScenarioParams};

fn main() -> isac_sched::Result<()> {
    let out = std::env::temp_dir().join("isac-sched-run-config");
    let cfg = RunConfig {
        seed: 3,
        scenario: ScenarioSource::Params(ScenarioParams {
            num_devices: 6,
            energy_fraction: Some(0.4),
            ..Default::default()
        }),
        sampler: SamplerKind::Ising,
        cycles: 20_000,
        out: out.clone(),
        ..RunConfig::default()
    };
    cfg.validate()?;
    for outcome in [cmd_gen(&cfg)?, cmd_solve(&cfg)?, cmd_simulate(&cfg)?, cmd_sample_check(&cfg)?] {
        println!("{} (exit {})", outcome.summary, outcome.code);
        for f in outcome.files {
            println!("  {}", f.display());
        }
    }
    println!("\ndefault configuration:\n{}", serde_json::to_string_pretty(&RunConfig::default())?);
    Ok(())
}
