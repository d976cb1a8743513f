//! Dichotomized-Gaussian schedules: calibration, sampling, and the PSD repair
//! used when the latent correlation matrix is indefinite.

use isac_sched::sampler::{dg_calibrate, dg_sample, moment_coverage, naive_psd_repair, psd_project};
use nalgebra::DMatrix;

fn main() -> isac_sched::Result<()> {
    let target = vec![vec![0.3, 0.2, 0.12], vec![0.2, 0.5, 0.22], vec![0.12, 0.22, 0.6]];
    let dg = dg_calibrate(&target)?;
    println!("thresholds {:.4?}", dg.tau);
    for row in &dg.sigma {
        println!("  latent {row:.4?}");
    }
    let cov = moment_coverage(&target, &dg_sample(&dg, 100_000, 5)?);
    println!("approximate {}, max |Π − Π̂| = {:.2e}, 3σ coverage passes {}", dg.approximate, cov.max_abs_error, cov.passes());

    // pairwise-attainable moments whose latent correlations are jointly indefinite
    let strained = vec![vec![0.5, 0.45, 0.325], vec![0.45, 0.5, 0.45], vec![0.325, 0.45, 0.5]];
    let dg = dg_calibrate(&strained)?;
    let cov = moment_coverage(&strained, &dg_sample(&dg, 100_000, 6)?);
    println!("strained target: approximate {}, max |Π − Π̂| = {:.2e}", dg.approximate, cov.max_abs_error);

    let bad = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0]);
    let fixed = psd_project(&bad)?;
    let naive = naive_psd_repair(&bad);
    println!("indefinite input, distance of repair: projection {:.4}, clip-and-rescale {:.4}", (&fixed - &bad).norm(), (&naive - &bad).norm());
    println!("min eigenvalue after projection {:.2e}", fixed.symmetric_eigenvalues().min());
    Ok(())
}
