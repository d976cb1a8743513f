use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use isac_sched::cli::{self, CliPolicy, Mode, Outcome, RunConfig};
use isac_sched::sim::SamplerKind;

#[derive(Parser)]
#[command(name = "isac-sched", version, about = "Sensing schedules for collaborative ISAC networks")]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
    /// Run configuration (JSON). Defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    policy: Option<CliPolicy>,
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    #[arg(long, global = true, value_enum)]
    sampler: Option<SamplerKind>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a scenario.
    Gen,
    /// Solve for a scheduling policy.
    Solve,
    /// Monte Carlo simulation of a policy.
    Simulate,
    /// Run a parameter sweep.
    Sweep,
    /// Check that the samplers reproduce target moments.
    SampleCheck,
    /// Write a configuration file with all defaults.
    InitConfig { path: PathBuf },
}

fn run(args: Args) -> isac_sched::Result<Outcome> {
    if let Cmd::InitConfig { path } = &args.cmd {
        cli::write_default_config(path)?;
        return Ok(Outcome { files: vec![path.clone()], code: 0, summary: String::new() });
    }
    let mut cfg: RunConfig = cli::load_config(args.config.as_deref())?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(p) = args.policy {
        cfg.policy = p;
    }
    if let Some(m) = args.mode {
        cfg.mode = m;
    }
    if let Some(s) = args.sampler {
        cfg.sampler = s;
    }
    if let Some(o) = args.out {
        cfg.out = o;
    }
    match args.cmd {
        Cmd::Gen => cli::cmd_gen(&cfg),
        Cmd::Solve => cli::cmd_solve(&cfg),
        Cmd::Simulate => cli::cmd_simulate(&cfg),
        Cmd::Sweep => cli::cmd_sweep(&cfg),
        Cmd::SampleCheck => cli::cmd_sample_check(&cfg),
        Cmd::InitConfig { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Args::parse()) {
        Ok(o) => {
            if !o.summary.is_empty() {
                println!("{}", o.summary);
            }
            for f in &o.files {
                println!("wrote {}", f.display());
            }
            ExitCode::from(o.code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
