//! Monte Carlo simulation of the optimal policy: simulated rates against the
//! guarantees, energy against the budget, and the realized gain.

use isac_sched::sim::{generate_scenario, simulate, SamplerKind, ScenarioParams};
use isac_sched::solver::{solve_independent, SolverConfig};

fn main() -> isac_sched::Result<()> {
    let s = generate_scenario(2, &ScenarioParams { num_devices: 8, ..Default::default() })?.with_energy_fraction(0.5);
    let opt = solve_independent(&s, &SolverConfig::default())?;
    let r = simulate(&opt.policy.to_joint(), &s, 100_000, SamplerKind::Independent, 9)?;
    println!("designed gain {:.4}, simulated {:.4} ± {:.4}", opt.objective, r.gain.mean, r.gain.se);
    println!("energy {:.4} ± {:.4} J (budget {:.4})", r.energy.mean, r.energy.se, s.energy.value());
    println!("{:>3} {:>12} {:>10} {:>12} {:>8}", "k", "rate", "se", "r_min", "E[m|off]");
    for (k, d) in r.rates.iter().enumerate() {
        println!(
            "{k:>3} {:>12.4e} {:>10.2e} {:>12.4e} {:>8.3}{}",
            d.rate.mean,
            d.rate.se,
            d.r_min,
            d.m_given_off.mean,
            if d.violated { "  violated" } else { "" }
        );
    }
    Ok(())
}
