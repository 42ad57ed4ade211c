//! Log-likelihood of a two-year dataset and a kriging prediction with its
//! 95% interval.
//!
//! ```text
//! cargo run -p lsgp --example likelihood_and_kriging
//! ```

use lsgp::covariance::{CovParams, DistanceMode, SpaceTimePoint};
use lsgp::gp_gaussian::{gauss_loglik, gaussian_interval, predict_gaussian, YearBlock};

pub fn run_example() -> lsgp::Result<()> {
    let params = CovParams::new(1.0, 3.0, 5.0, 5.0, 0.3)?;
    let mode = DistanceMode::SpaceTime;

    let p = |lat, lon, t| SpaceTimePoint::new(lat, lon, t);
    let y2010 = YearBlock::new(
        2010,
        vec![p(0.0, 0.0, 40.0), p(1.0, 2.0, 45.0), p(-2.0, 1.0, 50.0)],
        vec![0.4, 0.9, -0.3],
        vec!["a".into(), "b".into(), "c".into()],
    )?;
    let y2011 = YearBlock::new(2011, vec![p(0.5, -1.0, 44.0), p(2.0, 3.0, 47.0)], vec![-0.2, 0.1], vec!["a".into(), "d".into()])?;
    let blocks = [y2010, y2011];

    println!("log-likelihood: {:.6}", gauss_loglik(&blocks, &params, mode)?);

    let target = p(0.5, 1.0, 45.0);
    let pred = predict_gaussian(&target, &blocks[0], &params, mode)?;
    let (lo, hi) = gaussian_interval(&pred, 0.05)?;
    println!("prediction at {target:?} in 2010: mean {:.4}, sd {:.4}, 95% [{lo:.4}, {hi:.4}]", pred.mean, pred.sd());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
