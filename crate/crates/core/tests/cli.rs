//! End-to-end runs of the command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use lsgp::cli::{read_records, run};
use lsgp::ingest::parse_profiles;

const SMALL: &str = "\
# three-by-three grid, a few floats
lat_min = 10.5
lat_max = 12.5
lon_min = -150.5
lon_max = -148.5
sim_floats = 30
sim_years = 3
mc_samples = 10000
mean = none
";

struct Sandbox {
    dir: tempfile::TempDir,
}

impl Sandbox {
    fn new() -> Self {
        let s = Sandbox {
            dir: tempfile::tempdir().unwrap(),
        };
        fs::write(s.path("small.conf"), SMALL).unwrap();
        s
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn str(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_string()
    }

    fn lsgp(&self, args: &[&str]) -> lsgp::Result<()> {
        let conf = self.str("small.conf");
        let mut all = vec!["lsgp", "--config", conf.as_str()];
        all.extend_from_slice(args);
        run(all)
    }

    /// Simulated profiles for `variant`, returned as a path.
    fn simulate(&self, variant: &str, name: &str) -> String {
        self.lsgp(&["simulate", "--variant", variant, "--seed", "4", "--out", &self.str(name)]).unwrap();
        self.str(&format!("{name}/profiles.csv"))
    }
}

fn lines(p: &Path) -> Vec<String> {
    fs::read_to_string(p).unwrap().lines().map(str::to_string).collect()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn simulate_is_byte_identical_per_seed_and_parses() {
    let s = Sandbox::new();
    let a = s.simulate("5", "a");
    let b = s.simulate("5", "b");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let profiles = parse_profiles(&a).unwrap();
    assert!(!profiles.is_empty());
    s.lsgp(&["simulate", "--seed", "5", "--out", &s.str("c")]).unwrap();
    assert_ne!(fs::read(&a).unwrap(), fs::read(s.path("c/profiles.csv")).unwrap());
}

#[test]
fn simulate_with_no_years_writes_only_the_header() {
    let s = Sandbox::new();
    s.lsgp(&["simulate", "--set", "sim_years=0", "--out", &s.str("z")]).unwrap();
    assert_eq!(lines(&s.path("z/profiles.csv")), vec!["source_id,lat,lon,year,day,pressure_db,temp_c"]);
    assert!(parse_profiles(s.path("z/profiles.csv")).unwrap().is_empty());
}

#[test]
fn map_writes_grids_and_reruns_identically_from_its_config() {
    let s = Sandbox::new();
    let profiles = s.simulate("5", "sim");
    let set = format!("profiles={profiles}");
    s.lsgp(&["map", "--set", &set, "--set", "binary=true", "--out", &s.str("m1")]).unwrap();
    let m1 = s.path("m1");
    let conf = s.str("m1/run.conf");
    run(["lsgp", "map", "--config", conf.as_str(), "--out", &s.str("m2"), "--threads", "3"]).unwrap();
    let m2 = s.path("m2");

    let man = manifest(&m1);
    let outputs: Vec<String> = man["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    for name in ["prediction_2007.csv", "variance_2009.csv", "variance_ratio_2008.csv", "params.csv", "param_phi.csv", "field.json"] {
        assert!(outputs.iter().any(|o| o == name), "{name} missing from {outputs:?}");
    }
    for name in &outputs {
        assert_eq!(fs::read(m1.join(name)).unwrap(), fs::read(m2.join(name)).unwrap(), "{name} differs");
    }
    assert_eq!(manifest(&m1)["config_sha256"], manifest(&m2)["config_sha256"]);
    assert_eq!(man["status_counts"]["ok"], 9);

    let grid = lines(&m1.join("prediction_2008.csv"));
    assert_eq!(grid[0], "lat,lon,value");
    assert_eq!(grid.len(), 10);
    assert_eq!(fs::metadata(m1.join("prediction_2008.bin")).unwrap().len(), 9 * 8);
    assert!(fs::read_to_string(m1.join("prediction_2008.txt")).unwrap().contains("rows = 3"));
    // every value survives a text round trip
    for row in &grid[1..] {
        let v: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(v.to_string(), row.rsplit(',').next().unwrap());
    }
}

#[test]
fn fully_masked_grid_gives_empty_outputs() {
    let s = Sandbox::new();
    let profiles = s.simulate("5", "sim");
    let mut mask = String::from("lat,lon\n");
    for lat in [10.5, 11.5, 12.5] {
        for lon in [-150.5, -149.5, -148.5] {
            mask.push_str(&format!("{lat},{lon}\n"));
        }
    }
    fs::write(s.path("mask.csv"), mask).unwrap();
    s.lsgp(&[
        "map",
        "--set",
        &format!("profiles={profiles}"),
        "--set",
        &format!("mask={}", s.str("mask.csv")),
        "--out",
        &s.str("m"),
    ])
    .unwrap();
    assert_eq!(lines(&s.path("m/cell_status.csv")).len(), 1);
    assert!(!s.path("m/prediction_2007.csv").exists());
}

#[test]
fn cv_schemes_calibrate_and_lagmaps() {
    let s = Sandbox::new();
    let profiles = s.simulate("5", "sim");
    let set = format!("profiles={profiles}");
    let n_obs = parse_profiles(&profiles).unwrap().iter().filter(|p| (31.0..59.0).contains(&p.day)).count();
    for scheme in ["looo", "lofo"] {
        s.lsgp(&["cv", "--set", &set, "--scheme", scheme, "--out", &s.str(scheme)]).unwrap();
    }
    let looo = read_records(&s.path("looo/cv_records.csv")).unwrap();
    let lofo = read_records(&s.path("lofo/cv_records.csv")).unwrap();
    assert_eq!(looo.records.len(), n_obs);
    assert_eq!(lofo.records.len(), n_obs);
    assert_ne!(looo.records[0].dist, lofo.records[0].dist);

    let cov = lines(&s.path("looo/coverage.csv"));
    assert_eq!(cov[0], "Confidence level,Model,Empirical coverage,Mean length,Median length");
    assert_eq!(cov.len(), 4);
    assert!(lines(&s.path("looo/metrics.csv"))[0].starts_with("Model,n,RMSE,Q3AE,MdAE"));
    assert_eq!(lines(&s.path("looo/quantile_curve.csv")).len(), 200);

    let (a, b) = (s.str("lofo/cv_records.csv"), s.str("looo/cv_records.csv"));
    s.lsgp(&["calibrate", &a, &b, "--baseline", &b, "--out", &s.str("cal")]).unwrap();
    let metrics = lines(&s.path("cal/metrics.csv"));
    assert!(metrics[0].ends_with("MdAE improvement %"));
    assert!(metrics[2].ends_with(",0,0,0"), "{}", metrics[2]);

    s.lsgp(&["lagmaps", "--out", &s.str("looo")]).unwrap();
    for lag in ["zonal", "meridional", "temporal"] {
        let rows = lines(&s.path(&format!("looo/corr_{lag}.csv")));
        assert_eq!(rows.len(), lines(&s.path("looo/params.csv")).len());
        for r in &rows[1..] {
            let v: f64 = r.rsplit(',').next().unwrap().parse().unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn binary_reports_errors_with_nonzero_exit() {
    let exe = env!("CARGO_BIN_EXE_lsgp");
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(exe)
        .args(["lagmaps", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing parameter grids"));

    let out = Command::new(exe).args(["map", "--set", "colour=blue"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown configuration key"));

    let out = Command::new(exe).args(["map", "--variant", "9"]).output().unwrap();
    assert!(!out.status.success());

    assert!(Command::new(exe).arg("--help").output().unwrap().status.success());
}

#[test]
fn thread_count_defaults_from_environment() {
    let exe = env!("CARGO_BIN_EXE_lsgp");
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(exe)
        .env("LSGP_THREADS", "3")
        .args(["simulate", "--set", "sim_years=0", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    assert!(fs::read_to_string(dir.path().join("run.conf")).unwrap().contains("threads = 3\n"));
}
