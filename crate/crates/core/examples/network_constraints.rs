//! Link quality, guaranteed rates and constraint checks for a policy.

use isac_sched::model::IndependentPolicy;
use isac_sched::network::{avg_rate_lower_bound_independent, check_independent, expected_energy, CHECK_TOL};
use isac_sched::sim::{generate_scenario, ScenarioParams};

fn main() -> isac_sched::Result<()> {
    let s = generate_scenario(3, &ScenarioParams { num_devices: 5, gamma: 0.6, ..Default::default() })?
        .with_energy_fraction(0.5);
    println!("energy budget {:.3} J, all-on energy {:.3} J", s.energy.value(), s.all_on_energy());
    println!("{:>3} {:>8} {:>8} {:>12} {:>12}", "k", "SINR dB", "e_k", "r_min", "bound(π)");

    let policy = IndependentPolicy::new(vec![0.5, 0.2, 0.8, 0.4, 0.1], s.max_power());
    for k in 0..s.num_devices() {
        let bound = avg_rate_lower_bound_independent(
            &policy.pi,
            k,
            &s.timing,
            s.rates.efficiency[k],
            s.radio.bandwidth,
        );
        println!(
            "{k:>3} {:>8.2} {:>8.3} {:>12.4e} {:>12.4e}",
            s.sinr_db[k], s.rates.efficiency[k], s.rates.r_min[k], bound
        );
    }
    println!("expected energy {:.3} J", expected_energy(&policy.pi, &policy.power, &s.devices, &s.timing));
    let report = check_independent(&s, &policy, CHECK_TOL)?;
    println!("feasible: {}, violated: {:?}", report.feasible(), report.labels());
    Ok(())
}
