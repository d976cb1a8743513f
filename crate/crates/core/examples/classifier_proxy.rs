//! Classification accuracy of the Gaussian proxy classifier as the
//! discriminant gain grows with the energy budget.

use isac_sched::model::IndependentPolicy;
use isac_sched::sim::{classify_proxy, generate_scenario, spearman, ScenarioParams};
use isac_sched::solver::{solve_independent, SolverConfig};

fn main() -> isac_sched::Result<()> {
    let s = generate_scenario(4, &ScenarioParams { num_classes: 4, ..Default::default() })?;
    let blind = classify_proxy(&IndependentPolicy::all_off(s.num_devices()), &s, 5_000, 1)?;
    println!("nobody senses: accuracy {:.3} (1/L = 0.25)", blind.mean);
    let (mut gains, mut accs) = (Vec::new(), Vec::new());
    for f in [0.02, 0.05, 0.1, 0.2, 0.4, 0.7, 1.0] {
        let sf = s.clone().with_energy_fraction(f);
        let opt = solve_independent(&sf, &SolverConfig::default())?;
        let acc = classify_proxy(&opt.policy, &sf, 5_000, 2)?;
        println!("energy {:>4.0}%: gain {:>8.3}, accuracy {:.3} ± {:.3}", f * 100.0, opt.objective, acc.mean, acc.se);
        gains.push(opt.objective);
        accs.push(acc.mean);
    }
    println!("Spearman(gain, accuracy) = {:.3}", spearman(&gains, &accs)?);
    Ok(())
}
