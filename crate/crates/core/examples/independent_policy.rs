//! Optimal independent scheduling on a 20-device network against the fair,
//! importance-aware and all-on baselines, over a range of energy budgets.

use isac_sched::sim::{generate_scenario, ScenarioParams};
use isac_sched::solver::{policy_all_on, policy_fair, policy_importance, solve_independent, SolverConfig};

fn main() -> isac_sched::Result<()> {
    let base = generate_scenario(1, &ScenarioParams::default())?;
    let cfg = SolverConfig::default();
    println!("{:>7} {:>10} {:>10} {:>10} {:>10}", "energy", "optimal", "importance", "fair", "all-on");
    for f in [0.2, 0.4, 0.6, 0.8, 1.0] {
        let s = base.clone().with_energy_fraction(f);
        let opt = solve_independent(&s, &cfg)?;
        let all_on = policy_all_on(&s)?;
        println!(
            "{:>6.0}% {:>10.4} {:>10.4} {:>10.4} {:>9.4}{}",
            f * 100.0,
            opt.objective,
            policy_importance(&s)?.objective,
            policy_fair(&s)?.objective,
            all_on.objective,
            if all_on.feasible { "" } else { "*" }
        );
    }
    println!("* all-on exceeds the energy budget");

    let s = base.with_energy_fraction(0.4);
    let opt = solve_independent(&s, &cfg)?;
    println!("\n40% energy: {} iterations, max violation {:.2e}", opt.iterations, opt.max_violation);
    for (k, (pi, p)) in opt.policy.pi.iter().zip(&opt.policy.power).enumerate() {
        println!("  device {k:>2}: π = {pi:.4}, P = {p:.4} W");
    }
    Ok(())
}
