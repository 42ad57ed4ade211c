//! Leave-one-observation-out against leave-one-float-out on drifting floats,
//! with point metrics and interval calibration.
//!
//! ```text
//! cargo run -p lsgp --example cross_validation
//! ```

use lsgp::covariance::{CovParams, DistanceMode, SpaceTimePoint};
use lsgp::gp_gaussian::YearBlock;
use lsgp::gp_student::McOptions;
use lsgp::validation::{calibration, point_metrics, run_cv, simulate_blocks, CvOptions, Scheme, SimModel};
use lsgp::window::{map_grid, GridSpec, MapOptions, ModelVariant, WindowSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

pub fn run_example() -> lsgp::Result<()> {
    let truth = CovParams::new(1.0, 3.0, 5.0, 5.0, 0.3)?;
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let layout: Vec<YearBlock> = (0..3)
        .map(|year| {
            let mut b = YearBlock::empty(year);
            for f in 0..25 {
                let (mut lat, mut lon) = (rng.random_range(-9.0..9.0), rng.random_range(-9.0..9.0));
                let mut t = rng.random_range(0.0..10.0);
                while t < 90.0 {
                    b.push(SpaceTimePoint::new(lat, lon, t), 0.0, format!("float{f}"));
                    lat += rng.random_range(-0.2..0.2);
                    lon += rng.random_range(-0.2..0.2);
                    t += 10.0;
                }
            }
            b
        })
        .collect();
    let data = simulate_blocks(&SimModel::Gaussian(truth), DistanceMode::SpaceTime, &layout, 5)?;

    let grid = GridSpec::regular((0.0, 0.0), (0.0, 0.0), 1.0);
    let field = map_grid(&data, &grid, &ModelVariant::from_id(5)?, &WindowSpec::for_months(3), &MapOptions::default())?;

    for scheme in [Scheme::Looo, Scheme::Lofo] {
        let cv = run_cv(&data, &field, scheme, &CvOptions::default())?;
        let m = point_metrics(&cv)?;
        let cal = calibration(&cv, &[0.68, 0.95], &McOptions::with_seed(0))?;
        println!("{scheme:?}: {} folds, RMSE {:.4}, MdAE {:.4}, Q3AE {:.4}", m.n, m.rmse, m.mdae, m.q3ae);
        for row in &cal.coverage {
            println!(
                "  {:.0}% intervals: coverage {:.3}, mean length {:.3}",
                100.0 * row.level,
                row.coverage,
                row.mean_length
            );
        }
        println!("  KS {:.4} (1% critical {:.4})", cal.ks_statistic, cal.ks_critical_1pct);
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
