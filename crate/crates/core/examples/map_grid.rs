//! Moving-window mapping on a small grid: one local fit per cell, a
//! prediction per year, and a status for cells that could not be fitted.
//!
//! ```text
//! cargo run -p lsgp --example map_grid
//! ```

use lsgp::covariance::{CovParams, DistanceMode, SpaceTimePoint};
use lsgp::gp_gaussian::YearBlock;
use lsgp::validation::{simulate_blocks, SimModel};
use lsgp::window::{map_grid, GridSpec, MapOptions, ModelVariant, WindowSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

pub fn run_example() -> lsgp::Result<()> {
    let truth = CovParams::new(1.0, 2.0, 3.0, 5.0, 0.2)?;
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    // dense in the west, empty east of 6°E
    let layout: Vec<YearBlock> = (2015..2018)
        .map(|year| {
            let mut b = YearBlock::empty(year);
            for i in 0..120 {
                let p = SpaceTimePoint::new(rng.random_range(-3.0..7.0), rng.random_range(-3.0..6.0), rng.random_range(0.0..90.0));
                b.push(p, 0.0, format!("p{i}"));
            }
            b
        })
        .collect();
    let data = simulate_blocks(&SimModel::Gaussian(truth), DistanceMode::SpaceTime, &layout, 1)?;

    let grid = GridSpec::regular((0.5, 3.5), (0.5, 10.5), 2.0);
    let variant = ModelVariant::from_id(5)?;
    let spec = WindowSpec {
        x_win: 3.0,
        ..WindowSpec::for_months(3)
    };
    let field = map_grid(&data, &grid, &variant, &spec, &MapOptions::default())?;

    println!("{:>5} {:>6} {:>18} {:>6} {:>9} {:>9}", "lat", "lon", "status", "n_obs", "pred2016", "var_ratio");
    for c in &field.cells {
        let p = c.predictions.iter().find(|p| p.year == 2016);
        println!(
            "{:>5} {:>6} {:>18} {:>6} {:>9} {:>9}",
            c.cell.lat,
            c.cell.lon,
            c.status.label(),
            c.n_obs,
            p.map_or("-".into(), |p| format!("{:.3}", p.dist.mean())),
            p.map_or("-".into(), |p| format!("{:.3}", p.variance_ratio)),
        );
    }
    println!("{} of {} cells fitted", field.count_status("ok"), field.cells.len());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
