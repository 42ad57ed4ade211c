//! Heavy-tailed nugget: fit the Student-t model by Laplace-approximated
//! maximum likelihood and compare its interval with the Gaussian one.
//!
//! ```text
//! cargo run -p lsgp --example student_nugget
//! ```

use lsgp::covariance::{CovParams, DistanceMode, SpaceTimePoint};
use lsgp::gp_gaussian::{fit_mle_gaussian, gaussian_interval, predict_gaussian};
use lsgp::gp_student::{fit_mle_student, predict_student, student_interval, McOptions, StudentFitOptions, StudentInit, StudentParams};
use lsgp::validation::{simulate_field, SimModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

pub fn run_example() -> lsgp::Result<()> {
    let mode = DistanceMode::SpaceTime;
    let truth = StudentParams::new(CovParams::new(1.0, 3.0, 5.0, 5.0, 0.2)?, 3.0)?;
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    let locations: Vec<SpaceTimePoint> = (0..150)
        .map(|_| SpaceTimePoint::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(0.0..90.0)))
        .collect();
    let data = simulate_field(&SimModel::Student(truth), mode, &locations, 4, 3)?;

    let opts = StudentFitOptions::default();
    let gauss = fit_mle_gaussian(&data, None, mode, &opts.base)?;
    let student = fit_mle_student(&data, StudentInit::FromGaussian, mode, &opts)?;
    let s = student.params;
    println!("Gaussian fit: phi {:.3}, sigma2 {:.3}", gauss.params.phi, gauss.params.sigma2);
    println!(
        "Student fit:  phi {:.3}, scale^2 {:.3}, nu {:.2} (true nu {})",
        s.cov.phi, s.cov.sigma2, s.nu, truth.nu
    );

    let target = SpaceTimePoint::new(0.0, 0.0, 45.0);
    let g = predict_gaussian(&target, &data[0], &gauss.params, mode)?;
    let (glo, ghi) = gaussian_interval(&g, 0.05)?;
    let t = predict_student(&target, &data[0], &s, mode)?;
    let (tlo, thi) = student_interval(&t, 0.05, &McOptions::with_seed(11))?;
    println!("95% interval, Gaussian: [{glo:.3}, {ghi:.3}]");
    println!("95% interval, Student:  [{tlo:.3}, {thi:.3}]");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
