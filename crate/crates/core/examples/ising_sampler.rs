//! Fits a maximum-entropy Ising model to target moments and checks the
//! sampled schedules against them.

use isac_sched::sampler::{empirical_moments, ising_fit, ising_sample, moment_coverage, IsingFitConfig};

fn main() -> isac_sched::Result<()> {
    let target = vec![
        vec![0.6, 0.45, 0.2, 0.3],
        vec![0.45, 0.7, 0.25, 0.35],
        vec![0.2, 0.25, 0.4, 0.1],
        vec![0.3, 0.35, 0.1, 0.5],
    ];
    let fit = ising_fit(&target, &IsingFitConfig::default())?;
    println!("converged {} after {} iterations, residual {:.2e}", fit.converged, fit.iterations, fit.residual);
    println!("fields h = {:.4?}", fit.model.h);

    let samples = ising_sample(&fit.model, 100_000, 42);
    let emp = empirical_moments(&samples);
    for (t, e) in target.iter().zip(&emp) {
        println!("  target {t:.3?}  sampled {e:.3?}");
    }
    let cov = moment_coverage(&target, &samples);
    println!("max |z| = {:.2}, outside 3σ: {} of {}, passes {}", cov.max_z, cov.outside, cov.entries, cov.passes());

    // a comonotone pair has no finite Ising parameters
    let boundary = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
    let fit = ising_fit(&boundary, &IsingFitConfig::default())?;
    println!("boundary target: converged {}, residual {:.2e}", fit.converged, fit.residual);
    Ok(())
}
