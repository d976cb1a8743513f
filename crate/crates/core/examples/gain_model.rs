//! Discriminant gain of one device versus sensing power, and the exact and
//! simplified joint gains of a small correlated network.

use isac_sched::model::{fit_cross_coefficients, joint_gain_exact, joint_gain_simplified, JointPolicy};
use isac_sched::sim::{generate_scenario, random_block_correlation, ScenarioParams};
use rand::SeedableRng;

fn main() -> isac_sched::Result<()> {
    let p = ScenarioParams { num_devices: 3, num_features: 4, ..Default::default() };
    let s = generate_scenario(7, &p)?;

    let d = &s.devices[0];
    println!("device 0, P_max = {} W", d.max_sense_power);
    for frac in [0.0, 0.1, 0.25, 0.5, 1.0] {
        let power = frac * d.max_sense_power;
        println!("  P = {power:.3} W  gain = {:.4}", d.gain(power));
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let rho = random_block_correlation(&mut rng, 3, p.num_features, 0.6)?;
    let c = fit_cross_coefficients(&s.devices, &rho)?;
    println!("cross coefficients (raw, clamped):");
    for (r, k) in c.raw.iter().zip(&c.clamped) {
        println!("  {r:.3?}  {k:.3?}");
    }

    // two devices always together, the third half of the time and independently
    let moments = vec![vec![1.0, 1.0, 0.5], vec![1.0, 1.0, 0.5], vec![0.5, 0.5, 0.5]];
    let policy = JointPolicy { moments, power: s.max_power() };
    println!("exact joint gain      {:.4}", joint_gain_exact(&policy, &s.devices, &rho)?);
    println!("simplified joint gain {:.4}", joint_gain_simplified(&policy, &s.devices, &c.clamped)?);
    Ok(())
}
