//! Joint (correlated) scheduling of three devices with correlated features,
//! compared with the optimal independent policy and a joint grid search.

use isac_sched::model::ExactGainModel;
use isac_sched::sim::{generate_scenario, random_block_correlation, ScenarioParams};
use isac_sched::solver::{policy_grid_search_joint, solve_independent, solve_joint, SolverConfig};
use rand::SeedableRng;

fn main() -> isac_sched::Result<()> {
    let p = ScenarioParams { num_devices: 3, ..Default::default() };
    let mut s = generate_scenario(101, &p)?.with_energy_fraction(0.6);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let rho = random_block_correlation(&mut rng, 3, p.num_features, 0.6)?;
    s.correlation.rho = Some(rho.clone());
    let c = s.cross_coefficients()?.expect("ρ is set");
    let cfg = SolverConfig::default();

    let joint = solve_joint(&s, &c, &cfg)?;
    let grid = policy_grid_search_joint(&s, &c, 9, cfg.grid_cost_cap)?;
    let ind = solve_independent(&s, &cfg)?;
    let exact = ExactGainModel::new(&s.devices, &rho)?;

    println!("simplified-model gain: joint {:.4}, 9-point grid {:.4}", joint.objective, grid.objective);
    println!(
        "exact gain: joint {:.4}, independent {:.4}",
        exact.expected(&joint.policy.moments, &joint.policy.power)?,
        exact.expected(&ind.policy.to_joint().moments, &ind.policy.power)?
    );
    println!("joint moments Π:");
    for row in &joint.policy.moments {
        println!("  {row:.4?}");
    }
    println!("powers {:.4?}", joint.policy.power);
    println!("residuals {:?}", joint.residuals);
    Ok(())
}
