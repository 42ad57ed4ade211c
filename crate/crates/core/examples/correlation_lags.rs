//! Correlation of fitted local models at fixed lags in km and days, next to
//! the fixed reference covariance.
//!
//! ```text
//! cargo run -p lsgp --example correlation_lags
//! ```

use lsgp::covariance::{rg_correlation, rg_tropic_factor, CovParams, DistanceMode, RgCovConfig, KM_PER_DEGREE};
use lsgp::window::{model_correlation_at_lag, LocalModel, Normalization, DEFAULT_LAGS};

pub fn run_example() -> lsgp::Result<()> {
    let cfg = RgCovConfig::default();
    println!("reference correlation:");
    for d in [0.0, 140.0, 500.0, 1111.0] {
        println!("  {d:>6} km: {:.4}", rg_correlation(d, &cfg));
    }
    println!("  zonal stretch at 0, 10, 30 deg: {}, {}, {}", rg_tropic_factor(0.0), rg_tropic_factor(10.0), rg_tropic_factor(30.0));

    let local = LocalModel::Gaussian(CovParams::new(1.0, 3.0, 8.0, 12.0, 0.25)?);
    let reference = LocalModel::Reference {
        phi: 1.0,
        sigma2: 0.15,
        config: cfg,
    };
    println!("1 deg = {KM_PER_DEGREE} km");
    println!("{:>12} {:>6} {:>10} {:>10} {:>10}", "lag", "lat", "local", "gp-only", "reference");
    for lag in DEFAULT_LAGS {
        for lat in [0.0, 40.0] {
            println!(
                "{:>12} {lat:>6} {:>10.4} {:>10.4} {:>10.4}",
                lag.name,
                model_correlation_at_lag(&local, DistanceMode::SpaceTime, lat, &lag, Normalization::Total)?,
                model_correlation_at_lag(&local, DistanceMode::SpaceTime, lat, &lag, Normalization::GpOnly)?,
                model_correlation_at_lag(&reference, DistanceMode::Spatial, lat, &lag, Normalization::Total)?,
            );
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
