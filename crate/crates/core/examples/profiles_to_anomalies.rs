//! From a profile CSV to anomalies: parse, interpolate to a pressure level,
//! estimate a local-regression mean field and subtract it.
//!
//! ```text
//! cargo run -p lsgp --example profiles_to_anomalies
//! ```

use lsgp::ingest::{
    estimate_mean_field, observations_at, parse_profiles, subtract_mean, write_profiles, MeanConfig, ProfileRecord,
};
use lsgp::window::{GridSpec, MeanMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

pub fn run_example() -> lsgp::Result<()> {
    let dir = std::env::temp_dir().join(format!("lsgp-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| lsgp::Error::Config(e.to_string()))?;
    let path = dir.join("profiles.csv");

    // warm in the south, seasonal cycle, cooling with depth
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let records: Vec<ProfileRecord> = (0..600)
        .map(|i| {
            let (lat, lon) = (rng.random_range(-5.0..5.0), rng.random_range(140.0..150.0));
            let day = rng.random_range(0.0..365.0);
            let surface = 20.0 - 0.3 * lat + 1.5 * (2.0 * std::f64::consts::PI * day / 365.25).sin();
            ProfileRecord {
                source_id: format!("f{}", i % 40),
                lat,
                lon,
                year: 2012 + i % 3,
                day,
                levels: vec![(10.0, surface), (250.0, surface - 8.0), (500.0, surface - 12.0)],
            }
        })
        .collect();
    write_profiles(&path, &records)?;

    let profiles = parse_profiles(&path)?;
    let obs = observations_at(&profiles, 300.0)?;
    println!("{} profiles, {} with a value at 300 db", profiles.len(), obs.len());

    let grid = GridSpec::regular((-2.5, 2.5), (142.5, 147.5), 5.0);
    let cfg = MeanConfig {
        neighbors: 200,
        harmonics: 2,
        ..Default::default()
    };
    let mean = estimate_mean_field(&obs, &grid, &cfg)?;
    for (lat, lon, _) in mean.cells() {
        println!("mean at ({lat}, {lon}), mid-February: {:.3}", mean.value_at(*lat, *lon, 45.0).unwrap_or(f64::NAN));
    }

    let (blocks, report) = subtract_mean(&obs, &mean, MeanMode::SpatioTemporal);
    let n = report.kept as f64;
    let sd = (blocks.iter().flat_map(|b| &b.values).map(|v| v * v).sum::<f64>() / n).sqrt();
    println!("{} anomalies in {} years, rms {sd:.3}; {} excluded", report.kept, blocks.len(), report.excluded);
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
