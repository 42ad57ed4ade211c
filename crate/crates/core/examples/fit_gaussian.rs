//! Simulate from a known exponential space-time model and recover its
//! parameters by maximum likelihood.
//!
//! ```text
//! cargo run -p lsgp --example fit_gaussian
//! ```

use lsgp::covariance::{CovParams, DistanceMode, SpaceTimePoint};
use lsgp::gp_gaussian::{fit_mle_gaussian, FitOptions};
use lsgp::validation::{simulate_field, SimModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

pub fn run_example() -> lsgp::Result<()> {
    let truth = CovParams::new(1.0, 3.0, 5.0, 5.0, 0.3)?;
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    let locations: Vec<SpaceTimePoint> = (0..150)
        .map(|_| {
            SpaceTimePoint::new(
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(0.0..90.0),
            )
        })
        .collect();
    let data = simulate_field(&SimModel::Gaussian(truth), DistanceMode::SpaceTime, &locations, 6, 7)?;

    let fit = fit_mle_gaussian(&data, None, DistanceMode::SpaceTime, &FitOptions::default())?;
    let p = fit.params;
    println!("{:>10} {:>8} {:>8}", "", "true", "fitted");
    for (name, t, f) in [
        ("phi", truth.phi, p.phi),
        ("theta_lat", truth.theta_lat, p.theta_lat),
        ("theta_lon", truth.theta_lon, p.theta_lon),
        ("theta_t", truth.theta_t, p.theta_t),
        ("sigma2", truth.sigma2, p.sigma2),
    ] {
        println!("{name:>10} {t:>8.3} {f:>8.3}");
    }
    let r = &fit.report;
    println!(
        "loglik {:.2} (start {:.2}), {} iterations, converged: {}",
        r.loglik, r.init_loglik, r.iterations, r.converged
    );
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
