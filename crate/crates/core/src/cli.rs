//! Command-line front end: configuration, pipeline orchestration and file outputs.
//!
//! Configuration comes from a `key = value` file (`--config`) overridden by
//! flags. Every command writes `manifest.json` and the effective `run.conf`
//! into the output directory; rerunning with `--config <out>/run.conf`
//! reproduces the outputs.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::covariance::{CovParams, DistanceMode, SpaceTimePoint};
use crate::error::{Error, Result};
use crate::gp_gaussian::{GaussianPredictive, YearBlock};
use crate::gp_student::{derive_seed, McOptions, StudentParams, StudentPredictive};
use crate::ingest::{
    apply_filters, estimate_mean_field, group_by_year, observations_at, parse_profiles, read_mask, read_mean_field,
    subtract_mean, write_mean_field, write_profiles, CalendarWindow, MeanConfig, ProfileRecord,
};
use crate::validation::{calibration, point_metrics, run_cv, simulate_blocks, CalibrationReport, CvOptions, CvRecord, CvResult, MetricTable, Scheme, SimModel};
use crate::window::{
    map_grid, model_correlation_at_lag, CellMask, EngineOptions, GridField, GridSpec, MapOptions, ModelVariant,
    Normalization, PredictiveDist, WindowSpec, DEFAULT_LAGS,
};

/// Environment variable holding the default thread count.
pub const THREADS_ENV: &str = "LSGP_THREADS";

#[derive(Parser, Debug)]
#[command(name = "lsgp", version, about = "Moving-window Gaussian-process mapping of scattered profile data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(clap::Args, Debug, Default)]
struct CommonArgs {
    /// Key-value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: $LSGP_THREADS, else 1).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run seed for simulation and Monte Carlo draws.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Model variant 1-6.
    #[arg(long, global = true)]
    variant: Option<u8>,
    /// Pressure level in db.
    #[arg(long, global = true)]
    pressure: Option<f64>,
    /// Cross-validation scheme: looo or lofo.
    #[arg(long, global = true)]
    scheme: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Any other configuration key, as key=value (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a synthetic profile dataset.
    Simulate,
    /// Estimate the mean field from profiles.
    Mean,
    /// Fit local models and map the grid.
    Map,
    /// Cross-validate with cached (or freshly mapped) parameters.
    Cv,
    /// Metrics and calibration tables from saved cross-validation records.
    Calibrate {
        /// Record files (default: <out>/cv_records.csv).
        records: Vec<PathBuf>,
        /// Records of the model percent improvements are measured against.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Correlation maps at the default zonal, meridional and temporal lags.
    Lagmaps,
}

/// Where the mean field comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum MeanSource {
    /// Estimate from the profiles by local regression.
    Estimate,
    /// Values are already anomalies.
    Zero,
    File(PathBuf),
}

/// Effective configuration of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub pressure: f64,
    pub variant: u8,
    pub seed: u64,
    pub threads: usize,
    pub out: PathBuf,
    pub profiles: Option<PathBuf>,
    pub mean: MeanSource,
    pub mask: Option<PathBuf>,
    pub field: Option<PathBuf>,
    pub records: Option<PathBuf>,
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    pub step: f64,
    pub eval_time: f64,
    pub eval_years: Vec<i32>,
    pub max_abs_lat: f64,
    pub x_win: f64,
    pub t_win: Option<f64>,
    pub months: Option<u8>,
    pub first_month: Option<u8>,
    pub min_obs: usize,
    pub alpha: f64,
    pub mc_samples: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub student_grad_tol: f64,
    pub fallback_nearest: bool,
    pub binary: bool,
    pub scheme: Scheme,
    pub cv_first_month: u8,
    /// 0 disables the evaluation filter.
    pub cv_months: u8,
    pub levels: Vec<f64>,
    pub normalization: Normalization,
    pub mean_neighbors: usize,
    pub mean_harmonics: usize,
    pub mean_length_km: f64,
    pub sim_phi: f64,
    pub sim_theta_lat: f64,
    pub sim_theta_lon: f64,
    pub sim_theta_t: f64,
    pub sim_sigma2: f64,
    /// Student nugget degrees of freedom; absent means Gaussian.
    pub sim_nu: Option<f64>,
    pub sim_years: usize,
    pub sim_floats: usize,
    pub sim_interval_days: f64,
    pub sim_drift_deg: f64,
    pub sim_mean_c: f64,
    pub sim_start_year: i32,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            pressure: 300.0,
            variant: 5,
            seed: 0,
            threads: 1,
            out: PathBuf::from("lsgp-out"),
            profiles: None,
            mean: MeanSource::Estimate,
            mask: None,
            field: None,
            records: None,
            lat_min: -79.5,
            lat_max: 79.5,
            lon_min: -179.5,
            lon_max: 179.5,
            step: 1.0,
            eval_time: crate::window::MID_FEBRUARY,
            eval_years: Vec::new(),
            max_abs_lat: 80.0,
            x_win: 10.0,
            t_win: None,
            months: None,
            first_month: None,
            min_obs: 20,
            alpha: 0.05,
            mc_samples: 100_000,
            max_iter: 200,
            grad_tol: 1e-6,
            student_grad_tol: 1e-5,
            fallback_nearest: false,
            binary: false,
            scheme: Scheme::Looo,
            cv_first_month: 2,
            cv_months: 1,
            levels: vec![0.68, 0.95, 0.99],
            normalization: Normalization::Total,
            mean_neighbors: 300,
            mean_harmonics: 6,
            mean_length_km: 500.0,
            sim_phi: 1.0,
            sim_theta_lat: 3.0,
            sim_theta_lon: 5.0,
            sim_theta_t: 5.0,
            sim_sigma2: 0.3,
            sim_nu: None,
            sim_years: 10,
            sim_floats: 50,
            sim_interval_days: 10.0,
            sim_drift_deg: 0.1,
            sim_mean_c: 10.0,
            sim_start_year: 2007,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(key, s))
        .collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn opt_none(v: &str) -> bool {
    v.is_empty() || v == "none"
}

impl RunConfig {
    /// Sets one key; unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "pressure" => self.pressure = num(key, v)?,
            "variant" => self.variant = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "threads" => self.threads = num(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "profiles" => self.profiles = (!opt_none(v)).then(|| PathBuf::from(v)),
            "mean" => {
                self.mean = match v {
                    "estimate" => MeanSource::Estimate,
                    "none" | "zero" => MeanSource::Zero,
                    _ => MeanSource::File(PathBuf::from(v)),
                }
            }
            "mask" => self.mask = (!opt_none(v)).then(|| PathBuf::from(v)),
            "field" => self.field = (!opt_none(v)).then(|| PathBuf::from(v)),
            "records" => self.records = (!opt_none(v)).then(|| PathBuf::from(v)),
            "lat_min" => self.lat_min = num(key, v)?,
            "lat_max" => self.lat_max = num(key, v)?,
            "lon_min" => self.lon_min = num(key, v)?,
            "lon_max" => self.lon_max = num(key, v)?,
            "step" => self.step = num(key, v)?,
            "eval_time" => self.eval_time = num(key, v)?,
            "eval_years" => self.eval_years = list(key, v)?,
            "max_abs_lat" => self.max_abs_lat = num(key, v)?,
            "x_win" => self.x_win = num(key, v)?,
            "t_win" => self.t_win = if opt_none(v) { None } else { Some(num(key, v)?) },
            "months" => self.months = if opt_none(v) { None } else { Some(num(key, v)?) },
            "first_month" => self.first_month = if opt_none(v) { None } else { Some(num(key, v)?) },
            "min_obs" => self.min_obs = num(key, v)?,
            "alpha" => self.alpha = num(key, v)?,
            "mc_samples" => self.mc_samples = num(key, v)?,
            "max_iter" => self.max_iter = num(key, v)?,
            "grad_tol" => self.grad_tol = num(key, v)?,
            "student_grad_tol" => self.student_grad_tol = num(key, v)?,
            "fallback_nearest" => self.fallback_nearest = boolean(key, v)?,
            "binary" => self.binary = boolean(key, v)?,
            "scheme" => self.scheme = v.parse()?,
            "cv_first_month" => self.cv_first_month = num(key, v)?,
            "cv_months" => self.cv_months = num(key, v)?,
            "levels" => self.levels = list(key, v)?,
            "normalization" => {
                self.normalization = match v {
                    "total" => Normalization::Total,
                    "gp-only" => Normalization::GpOnly,
                    _ => return Err(Error::Config(format!("normalization must be total or gp-only, got {v:?}"))),
                }
            }
            "mean_neighbors" => self.mean_neighbors = num(key, v)?,
            "mean_harmonics" => self.mean_harmonics = num(key, v)?,
            "mean_length_km" => self.mean_length_km = num(key, v)?,
            "sim_phi" => self.sim_phi = num(key, v)?,
            "sim_theta_lat" => self.sim_theta_lat = num(key, v)?,
            "sim_theta_lon" => self.sim_theta_lon = num(key, v)?,
            "sim_theta_t" => self.sim_theta_t = num(key, v)?,
            "sim_sigma2" => self.sim_sigma2 = num(key, v)?,
            "sim_nu" => self.sim_nu = if opt_none(v) { None } else { Some(num(key, v)?) },
            "sim_years" => self.sim_years = num(key, v)?,
            "sim_floats" => self.sim_floats = num(key, v)?,
            "sim_interval_days" => self.sim_interval_days = num(key, v)?,
            "sim_drift_deg" => self.sim_drift_deg = num(key, v)?,
            "sim_mean_c" => self.sim_mean_c = num(key, v)?,
            "sim_start_year" => self.sim_start_year = num(key, v)?,
            other => return Err(Error::Config(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    /// Applies a `key = value` file; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, source: &Path) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: source.to_path_buf(),
                line: n as u64 + 1,
                message: "expected key = value".into(),
            })?;
            self.set(k, v).map_err(|e| Error::Parse {
                path: source.to_path_buf(),
                line: n as u64 + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Canonical `key = value` text covering every setting.
    pub fn to_conf(&self) -> String {
        let p = |o: &Option<PathBuf>| o.as_ref().map_or("none".to_string(), |p| p.display().to_string());
        let o = |o: Option<String>| o.unwrap_or_else(|| "none".into());
        let mean = match &self.mean {
            MeanSource::Estimate => "estimate".to_string(),
            MeanSource::Zero => "none".to_string(),
            MeanSource::File(f) => f.display().to_string(),
        };
        let scheme = match self.scheme {
            Scheme::Looo => "looo",
            Scheme::Lofo => "lofo",
        };
        let norm = match self.normalization {
            Normalization::Total => "total",
            Normalization::GpOnly => "gp-only",
        };
        let pairs: Vec<(&str, String)> = vec![
            ("pressure", self.pressure.to_string()),
            ("variant", self.variant.to_string()),
            ("seed", self.seed.to_string()),
            ("threads", self.threads.to_string()),
            ("out", self.out.display().to_string()),
            ("profiles", p(&self.profiles)),
            ("mean", mean),
            ("mask", p(&self.mask)),
            ("field", p(&self.field)),
            ("records", p(&self.records)),
            ("lat_min", self.lat_min.to_string()),
            ("lat_max", self.lat_max.to_string()),
            ("lon_min", self.lon_min.to_string()),
            ("lon_max", self.lon_max.to_string()),
            ("step", self.step.to_string()),
            ("eval_time", self.eval_time.to_string()),
            ("eval_years", join(&self.eval_years)),
            ("max_abs_lat", self.max_abs_lat.to_string()),
            ("x_win", self.x_win.to_string()),
            ("t_win", o(self.t_win.map(|v| v.to_string()))),
            ("months", o(self.months.map(|v| v.to_string()))),
            ("first_month", o(self.first_month.map(|v| v.to_string()))),
            ("min_obs", self.min_obs.to_string()),
            ("alpha", self.alpha.to_string()),
            ("mc_samples", self.mc_samples.to_string()),
            ("max_iter", self.max_iter.to_string()),
            ("grad_tol", self.grad_tol.to_string()),
            ("student_grad_tol", self.student_grad_tol.to_string()),
            ("fallback_nearest", self.fallback_nearest.to_string()),
            ("binary", self.binary.to_string()),
            ("scheme", scheme.to_string()),
            ("cv_first_month", self.cv_first_month.to_string()),
            ("cv_months", self.cv_months.to_string()),
            ("levels", join(&self.levels)),
            ("normalization", norm.to_string()),
            ("mean_neighbors", self.mean_neighbors.to_string()),
            ("mean_harmonics", self.mean_harmonics.to_string()),
            ("mean_length_km", self.mean_length_km.to_string()),
            ("sim_phi", self.sim_phi.to_string()),
            ("sim_theta_lat", self.sim_theta_lat.to_string()),
            ("sim_theta_lon", self.sim_theta_lon.to_string()),
            ("sim_theta_t", self.sim_theta_t.to_string()),
            ("sim_sigma2", self.sim_sigma2.to_string()),
            ("sim_nu", o(self.sim_nu.map(|v| v.to_string()))),
            ("sim_years", self.sim_years.to_string()),
            ("sim_floats", self.sim_floats.to_string()),
            ("sim_interval_days", self.sim_interval_days.to_string()),
            ("sim_drift_deg", self.sim_drift_deg.to_string()),
            ("sim_mean_c", self.sim_mean_c.to_string()),
            ("sim_start_year", self.sim_start_year.to_string()),
        ];
        pairs.into_iter().fold(String::new(), |mut s, (k, v)| {
            let _ = writeln!(s, "{k} = {v}");
            s
        })
    }

    /// SHA-256 of the canonical configuration, excluding the thread count
    /// and output directory, which never change results.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.threads = 1;
        c.out = PathBuf::new();
        hex(&Sha256::digest(c.to_conf().as_bytes()))
    }

    pub fn model_variant(&self) -> Result<ModelVariant> {
        ModelVariant::from_id(self.variant)
    }

    /// Months in the data window; warns when it contradicts the variant.
    pub fn effective_months(&self) -> Result<u8> {
        let v = self.model_variant()?;
        match self.months {
            Some(m) if m != v.months => {
                log::warn!("variant {} is defined with a {}-month window; using {m} months as configured", v.id, v.months);
                Ok(m)
            }
            Some(m) => Ok(m),
            None => Ok(v.months),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_variant()?;
        let m = self.effective_months()?;
        if !(1..=12).contains(&m) {
            return Err(Error::Config(format!("months must be 1-12, got {m}")));
        }
        if !(self.pressure > 0.0) {
            return Err(Error::Config("pressure must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config("alpha must lie in (0, 1)".into()));
        }
        if self.mc_samples < 10_000 {
            return Err(Error::Config("mc_samples must be at least 10000".into()));
        }
        if self.levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
            return Err(Error::Config("levels must lie in (0, 1)".into()));
        }
        self.grid(CellMask::default()).validate()?;
        self.window()?.validate()
    }

    pub fn window(&self) -> Result<WindowSpec> {
        let m = self.effective_months()?;
        let base = WindowSpec::for_months(m);
        Ok(WindowSpec {
            x_win: self.x_win,
            t_win: self.t_win.unwrap_or(if m == 1 || m == 3 { base.t_win } else { 15.0 * m as f64 }),
            min_obs: self.min_obs,
        })
    }

    /// Calendar window of the data used for mapping.
    pub fn data_window(&self) -> Result<CalendarWindow> {
        let m = self.effective_months()?;
        let first = self.first_month.unwrap_or_else(|| (2 + 12 - (m - 1) / 2 - 1) % 12 + 1);
        CalendarWindow::months(first, m)
    }

    pub fn cv_window(&self) -> Result<Option<CalendarWindow>> {
        if self.cv_months == 0 {
            return Ok(None);
        }
        CalendarWindow::months(self.cv_first_month, self.cv_months).map(Some)
    }

    pub fn grid(&self, mask: CellMask) -> GridSpec {
        GridSpec {
            lat_min: self.lat_min,
            lat_max: self.lat_max,
            lat_step: self.step,
            lon_min: self.lon_min,
            lon_max: self.lon_max,
            lon_step: self.step,
            eval_time: self.eval_time,
            eval_years: self.eval_years.clone(),
            mask,
            max_abs_lat: self.max_abs_lat,
        }
    }

    pub fn engine(&self) -> EngineOptions {
        let mut e = EngineOptions {
            alpha: self.alpha,
            mc_samples: self.mc_samples,
            seed: self.seed,
            ..Default::default()
        };
        e.fit.min_obs = self.min_obs;
        e.fit.optimizer.max_iter = self.max_iter;
        e.fit.optimizer.grad_tol = self.grad_tol;
        e.student.base.optimizer.max_iter = self.max_iter;
        e.student.base.optimizer.grad_tol = self.student_grad_tol;
        e
    }

    pub fn mean_config(&self) -> MeanConfig {
        MeanConfig {
            neighbors: self.mean_neighbors,
            harmonics: self.mean_harmonics,
            length_scale_km: self.mean_length_km,
            ridge: 0.0,
            eval_time: self.eval_time,
        }
    }

    fn out_file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn field_path(&self) -> PathBuf {
        self.field.clone().unwrap_or_else(|| self.out_file("field.json"))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn default_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|n: &usize| *n > 0)
        .unwrap_or(1)
}

fn build_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig {
        threads: default_threads(),
        ..Default::default()
    };
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg.apply_text(&text, path)?;
    }
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k, v)?;
    }
    if let Some(v) = common.threads {
        cfg.threads = v.max(1);
    }
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(v) = common.variant {
        cfg.variant = v;
    }
    if let Some(v) = common.pressure {
        cfg.pressure = v;
    }
    if let Some(v) = &common.scheme {
        cfg.scheme = v.parse()?;
    }
    if let Some(v) = &common.out {
        cfg.out = v.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct InputHash {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    command: String,
    config_sha256: String,
    seed: u64,
    threads: usize,
    inputs: Vec<InputHash>,
    status_counts: BTreeMap<String, usize>,
    outputs: Vec<String>,
    notes: Vec<String>,
}

struct Run {
    cfg: RunConfig,
    command: &'static str,
    inputs: Vec<InputHash>,
    outputs: Vec<String>,
    status_counts: BTreeMap<String, usize>,
    notes: Vec<String>,
}

impl Run {
    fn new(cfg: RunConfig, command: &'static str) -> Result<Self> {
        fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
        Ok(Run {
            cfg,
            command,
            inputs: Vec::new(),
            outputs: Vec::new(),
            status_counts: BTreeMap::new(),
            notes: Vec::new(),
        })
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        if !self.inputs.iter().any(|i| i.path == path.display().to_string()) {
            self.inputs.push(InputHash {
                path: path.display().to_string(),
                sha256: file_sha256(path)?,
            });
        }
        Ok(())
    }

    fn path(&mut self, name: &str) -> PathBuf {
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
        self.cfg.out_file(name)
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }

    fn finish(self) -> Result<()> {
        let conf = self.cfg.out_file("run.conf");
        fs::write(&conf, self.cfg.to_conf()).map_err(|e| Error::io(&conf, e))?;
        let m = Manifest {
            tool: "lsgp",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command.to_string(),
            config_sha256: self.cfg.hash(),
            seed: self.cfg.seed,
            threads: self.cfg.threads,
            inputs: self.inputs,
            status_counts: self.status_counts,
            outputs: self.outputs,
            notes: self.notes,
        };
        let p = self.cfg.out_file("manifest.json");
        fs::write(&p, serde_json::to_string_pretty(&m)? + "\n").map_err(|e| Error::io(&p, e))
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn flush(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_grid_csv(path: &Path, rows: &[(f64, f64, f64)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["lat", "lon", "value"])?;
    for (a, b, v) in rows {
        w.write_record([a.to_string(), b.to_string(), v.to_string()])?;
    }
    flush(w, path)
}

/// Row-major little-endian f64 grid over the full grid shape, NaN where no
/// value exists, plus a text sidecar describing the layout.
fn write_grid_binary(run: &mut Run, stem: &str, grid: &GridSpec, rows: &[(usize, f64)]) -> Result<()> {
    let (nr, nc) = grid.shape();
    let mut data = vec![f64::NAN; nr * nc];
    for &(i, v) in rows {
        data[i] = v;
    }
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    let p = run.path(&format!("{stem}.bin"));
    fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
    let side = format!(
        "rows = {nr}\ncols = {nc}\nlat_min = {}\nlat_step = {}\nlon_min = {}\nlon_step = {}\ndtype = float64 little-endian\norder = row-major, latitude rows ascending, longitude columns ascending\nmissing = NaN\n",
        grid.lat_min, grid.lat_step, grid.lon_min, grid.lon_step
    );
    run.write_text(&format!("{stem}.txt"), &side)
}

fn emit_grid(run: &mut Run, stem: &str, grid: &GridSpec, rows: &[(usize, f64, f64, f64)]) -> Result<()> {
    let p = run.path(&format!("{stem}.csv"));
    let triples: Vec<(f64, f64, f64)> = rows.iter().map(|r| (r.1, r.2, r.3)).collect();
    write_grid_csv(&p, &triples)?;
    if run.cfg.binary {
        let idx: Vec<(usize, f64)> = rows.iter().map(|r| (r.0, r.3)).collect();
        write_grid_binary(run, stem, grid, &idx)?;
    }
    Ok(())
}

/// Profiles → observations at the pressure level → residual year blocks.
fn load_residuals(run: &mut Run) -> Result<Vec<YearBlock>> {
    let cfg = run.cfg.clone();
    let path = cfg
        .profiles
        .clone()
        .ok_or_else(|| Error::Config("no input profiles: set profiles = <file>".into()))?;
    run.input(&path)?;
    let profiles = parse_profiles(&path)?;
    let mask = match &cfg.mask {
        Some(m) => {
            run.input(m)?;
            read_mask(m)?
        }
        None => CellMask::default(),
    };
    let spatial = apply_filters(&profiles, &CalendarWindow::all_year(), &mask);
    let variant = cfg.model_variant()?;
    let window = cfg.data_window()?;
    let mean = match &cfg.mean {
        MeanSource::Zero => None,
        MeanSource::File(f) => {
            run.input(f)?;
            Some(read_mean_field(f, cfg.step, cfg.eval_time)?)
        }
        MeanSource::Estimate => {
            let obs = observations_at(&spatial, cfg.pressure)?;
            let m = estimate_mean_field(&obs, &cfg.grid(mask.clone()), &cfg.mean_config())?;
            if m.ridge_count() > 0 {
                run.notes.push(format!("mean field: {} cells needed a ridge", m.ridge_count()));
            }
            let p = run.path("mean.csv");
            write_mean_field(&p, &m)?;
            Some(m)
        }
    };
    let in_window: Vec<ProfileRecord> = spatial.into_iter().filter(|r| window.contains(r.day)).collect();
    let obs = observations_at(&in_window, cfg.pressure)?;
    let blocks = match mean {
        None => group_by_year(&obs),
        Some(m) => {
            let (b, rep) = subtract_mean(&obs, &m, variant.mean_mode);
            if rep.excluded > 0 {
                run.notes.push(format!("{} observations outside the mean field were excluded", rep.excluded));
            }
            b
        }
    };
    log::info!("{} observations in {} years", crate::gp_gaussian::total_obs(&blocks), blocks.len());
    Ok(blocks)
}

fn cmd_simulate(cfg: RunConfig) -> Result<()> {
    let mut run = Run::new(cfg, "simulate")?;
    let cfg = run.cfg.clone();
    let cov = CovParams::new(cfg.sim_phi, cfg.sim_theta_lat, cfg.sim_theta_lon, cfg.sim_theta_t, cfg.sim_sigma2)?;
    let model = match cfg.sim_nu {
        Some(nu) => SimModel::Student(StudentParams::new(cov, nu)?),
        None => SimModel::Gaussian(cov),
    };
    let window = cfg.data_window()?;
    let span = if window.start_day <= window.end_day {
        window.end_day - window.start_day
    } else {
        window.end_day + 365.0 - window.start_day
    };
    let lat_hi = cfg.lat_max.min(cfg.max_abs_lat);
    let lat_lo = cfg.lat_min.max(-cfg.max_abs_lat);
    let mut layout = Vec::with_capacity(cfg.sim_years);
    for y in 0..cfg.sim_years {
        let year = cfg.sim_start_year + y as i32;
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(cfg.seed, u64::MAX, year as i64));
        let mut b = YearBlock::empty(year);
        for f in 0..cfg.sim_floats {
            let mut lat = rng.random_range(lat_lo..=lat_hi);
            let mut lon = rng.random_range(cfg.lon_min..=cfg.lon_max);
            let mut t = rng.random_range(0.0..cfg.sim_interval_days.min(span));
            while t < span {
                let day = (window.start_day + t) % 365.0;
                b.push(SpaceTimePoint::new(lat, lon, day), 0.0, format!("float{f:04}"));
                lat = (lat + cfg.sim_drift_deg * rng.random_range(-1.0..=1.0)).clamp(lat_lo, lat_hi);
                lon += cfg.sim_drift_deg * rng.random_range(-1.0..=1.0);
                t += cfg.sim_interval_days;
            }
        }
        layout.push(b);
    }
    let mode = cfg.model_variant()?.time_mode;
    let sim = simulate_blocks(&model, mode, &layout, cfg.seed)?;
    let records: Vec<ProfileRecord> = sim
        .iter()
        .flat_map(|b| {
            (0..b.len()).map(move |i| ProfileRecord {
                source_id: b.source_ids[i].clone(),
                lat: b.points[i].lat,
                lon: b.points[i].lon,
                year: b.year,
                day: b.points[i].t,
                levels: vec![(cfg.pressure, cfg.sim_mean_c + b.values[i])],
            })
        })
        .collect();
    let p = run.path("profiles.csv");
    write_profiles(&p, &records)?;
    run.notes.push(format!("{} profiles in {} years", records.len(), cfg.sim_years));
    run.finish()
}

fn cmd_mean(cfg: RunConfig) -> Result<()> {
    let mut run = Run::new(cfg, "mean")?;
    let cfg = run.cfg.clone();
    let path = cfg
        .profiles
        .clone()
        .ok_or_else(|| Error::Config("no input profiles: set profiles = <file>".into()))?;
    run.input(&path)?;
    let mask = match &cfg.mask {
        Some(m) => {
            run.input(m)?;
            read_mask(m)?
        }
        None => CellMask::default(),
    };
    let profiles = apply_filters(&parse_profiles(&path)?, &CalendarWindow::all_year(), &mask);
    let obs = observations_at(&profiles, cfg.pressure)?;
    let m = estimate_mean_field(&obs, &cfg.grid(mask), &cfg.mean_config())?;
    run.status_counts.insert("cells".into(), m.len());
    run.status_counts.insert("ridge".into(), m.ridge_count());
    let p = run.path("mean.csv");
    write_mean_field(&p, &m)?;
    run.finish()
}

fn field_for(run: &mut Run) -> Result<(GridField, Vec<YearBlock>)> {
    let cfg = run.cfg.clone();
    let mask = match &cfg.mask {
        Some(m) => read_mask(m)?,
        None => CellMask::default(),
    };
    let data = load_residuals(run)?;
    let field = map_grid(
        &data,
        &cfg.grid(mask),
        &cfg.model_variant()?,
        &cfg.window()?,
        &MapOptions {
            threads: cfg.threads,
            fallback_nearest: cfg.fallback_nearest,
            engine: cfg.engine(),
        },
    )?;
    Ok((field, data))
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn write_field_outputs(run: &mut Run, field: &GridField) -> Result<()> {
    let mut years: Vec<i32> = field
        .cells
        .iter()
        .flat_map(|c| c.predictions.iter().map(|p| p.year))
        .collect();
    years.sort_unstable();
    years.dedup();
    for year in years {
        type Getter = fn(&crate::window::YearPrediction) -> f64;
        let quantities: [(&str, Getter); 5] = [
            ("prediction", |p| p.dist.mean()),
            ("variance", |p| p.dist.variance()),
            ("variance_ratio", |p| p.variance_ratio),
            ("lower", |p| p.lower),
            ("upper", |p| p.upper),
        ];
        for (name, get) in quantities {
            let rows: Vec<(usize, f64, f64, f64)> = field
                .cells
                .iter()
                .filter_map(|c| {
                    c.predictions
                        .iter()
                        .find(|p| p.year == year)
                        .map(|p| (c.cell.index, c.cell.lat, c.cell.lon, get(p)))
                })
                .collect();
            emit_grid(run, &format!("{name}_{year}"), &field.grid, &rows)?;
        }
    }
    let p = run.path("params.csv");
    let mut w = csv_writer(&p)?;
    w.write_record([
        "lat", "lon", "status", "n_obs", "phi", "theta_lat", "theta_lon", "theta_t", "sigma2", "nu", "loglik", "converged",
    ])?;
    for c in &field.cells {
        let cov = c.model.and_then(|m| m.cov_params());
        w.write_record([
            c.cell.lat.to_string(),
            c.cell.lon.to_string(),
            c.status.label().to_string(),
            c.n_obs.to_string(),
            opt(c.model.map(|m| m.phi())),
            opt(cov.map(|p| p.theta_lat)),
            opt(cov.map(|p| p.theta_lon)),
            opt(cov.map(|p| p.theta_t)),
            opt(c.model.map(|m| m.sigma2())),
            opt(c.model.and_then(|m| m.nu())),
            opt(c.fit.as_ref().map(|f| f.loglik)),
            c.fit.as_ref().map_or(String::new(), |f| f.converged.to_string()),
        ])?;
    }
    flush(w, &p)?;
    for (name, get) in [
        ("param_phi", (|m: &crate::window::LocalModel| Some(m.phi())) as fn(&crate::window::LocalModel) -> Option<f64>),
        ("param_theta_lat", |m| m.cov_params().map(|p| p.theta_lat)),
        ("param_theta_lon", |m| m.cov_params().map(|p| p.theta_lon)),
        ("param_theta_t", |m| m.cov_params().map(|p| p.theta_t)),
        ("param_sigma2", |m| Some(m.sigma2())),
        ("param_nu", |m| m.nu()),
    ] {
        let rows: Vec<(usize, f64, f64, f64)> = field
            .cells
            .iter()
            .filter_map(|c| c.model.as_ref().and_then(get).map(|v| (c.cell.index, c.cell.lat, c.cell.lon, v)))
            .collect();
        if !rows.is_empty() {
            emit_grid(run, name, &field.grid, &rows)?;
        }
    }
    let p = run.path("cell_status.csv");
    let mut w = csv_writer(&p)?;
    w.write_record(["index", "lat", "lon", "status", "n_obs", "message"])?;
    for c in &field.cells {
        let msg = match &c.status {
            crate::window::CellStatus::FitFailed { message } => message.clone(),
            crate::window::CellStatus::Fallback { source, message } => format!("parameters from cell {source}: {message}"),
            crate::window::CellStatus::InsufficientData { found, required } => format!("{found} < {required}"),
            crate::window::CellStatus::Ok => String::new(),
        };
        w.write_record([
            c.cell.index.to_string(),
            c.cell.lat.to_string(),
            c.cell.lon.to_string(),
            c.status.label().to_string(),
            c.n_obs.to_string(),
            msg,
        ])?;
    }
    flush(w, &p)?;
    // timings vary run to run and are kept apart from the results
    let p = run.cfg.out_file("cell_times.csv");
    let mut w = csv_writer(&p)?;
    w.write_record(["index", "lat", "lon", "seconds"])?;
    for (c, t) in field.cells.iter().zip(&field.wall_times) {
        w.write_record([c.cell.index.to_string(), c.cell.lat.to_string(), c.cell.lon.to_string(), t.to_string()])?;
    }
    flush(w, &p)?;
    let mut cached = field.clone();
    cached.wall_times.clear();
    let p = run.path("field.json");
    fs::write(&p, serde_json::to_string(&cached)?).map_err(|e| Error::io(&p, e))?;
    for c in &field.cells {
        *run.status_counts.entry(c.status.label().to_string()).or_default() += 1;
    }
    Ok(())
}

fn cmd_map(cfg: RunConfig) -> Result<()> {
    let mut run = Run::new(cfg, "map")?;
    let (field, _) = field_for(&mut run)?;
    write_field_outputs(&mut run, &field)?;
    run.finish()
}

fn load_field(path: &Path) -> Result<GridField> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::Looo => "LOOO",
        Scheme::Lofo => "LOFO",
    }
}

fn model_label(variant: u8, scheme: Scheme) -> String {
    format!("model {variant} ({})", scheme_name(scheme))
}

const RECORD_HEADER: [&str; 12] = [
    "fold", "year", "source_id", "cell", "variant", "scheme", "truth", "kind", "mean", "variance", "scale", "dof",
];

fn write_records(path: &Path, cv: &CvResult) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(RECORD_HEADER)?;
    for r in &cv.records {
        let (kind, mean, var, scale, dof) = match &r.dist {
            PredictiveDist::Gaussian(g) => ("gaussian", g.mean, g.variance, String::new(), String::new()),
            PredictiveDist::Student(s) => ("student", s.f_mean, s.f_var, s.scale.to_string(), s.dof.to_string()),
        };
        w.write_record([
            r.fold.to_string(),
            r.year.to_string(),
            r.source_id.clone(),
            r.cell.to_string(),
            r.variant.to_string(),
            scheme_name(cv.scheme).to_ascii_lowercase(),
            r.truth.to_string(),
            kind.to_string(),
            mean.to_string(),
            var.to_string(),
            scale,
            dof,
        ])?;
    }
    flush(w, path)
}

/// Reads records written by `cv`. For Student records `variance` is the
/// latent variance `f_var`.
pub fn read_records(path: &Path) -> Result<CvResult> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(f);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != RECORD_HEADER {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header {}", RECORD_HEADER.join(",")),
        });
    }
    let mut records = Vec::new();
    let mut scheme = Scheme::Looo;
    let mut variant = 0;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |m: &str| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: m.to_string(),
        };
        let g = |i: usize| rec.get(i).unwrap_or("");
        let f = |i: usize| g(i).parse::<f64>().map_err(|_| bad(&format!("column {}: not a number", RECORD_HEADER[i])));
        scheme = g(5).parse()?;
        variant = g(4).parse().map_err(|_| bad("bad variant"))?;
        let dist = match g(7) {
            "gaussian" => PredictiveDist::Gaussian(GaussianPredictive {
                mean: f(8)?,
                variance: f(9)?,
            }),
            "student" => PredictiveDist::Student(StudentPredictive {
                f_mean: f(8)?,
                f_var: f(9)?,
                scale: f(10)?,
                dof: f(11)?,
            }),
            other => return Err(bad(&format!("unknown kind {other:?}"))),
        };
        records.push(CvRecord {
            fold: g(0).parse().map_err(|_| bad("bad fold"))?,
            year: g(1).parse().map_err(|_| bad("bad year"))?,
            source_id: g(2).to_string(),
            cell: g(3).parse().map_err(|_| bad("bad cell"))?,
            variant,
            truth: f(6)?,
            dist,
        });
    }
    Ok(CvResult {
        scheme,
        variant,
        records,
        skipped: Vec::new(),
    })
}

struct Evaluated {
    label: String,
    metrics: MetricTable,
    calib: CalibrationReport,
}

fn evaluate(cv: &CvResult, cfg: &RunConfig) -> Result<Evaluated> {
    let mc = McOptions {
        samples: cfg.mc_samples,
        seed: cfg.seed,
    };
    Ok(Evaluated {
        label: model_label(cv.variant, cv.scheme),
        metrics: point_metrics(cv)?,
        calib: calibration(cv, &cfg.levels, &mc)?,
    })
}

fn write_tables(run: &mut Run, models: &[Evaluated], baseline: Option<&MetricTable>) -> Result<()> {
    let p = run.path("metrics.csv");
    let mut w = csv_writer(&p)?;
    let mut head = vec!["Model", "n", "RMSE", "Q3AE", "MdAE"];
    if baseline.is_some() {
        head.extend(["RMSE improvement %", "Q3AE improvement %", "MdAE improvement %"]);
    }
    w.write_record(&head)?;
    for m in models {
        let t = &m.metrics;
        let mut row = vec![m.label.clone(), t.n.to_string(), t.rmse.to_string(), t.q3ae.to_string(), t.mdae.to_string()];
        if let Some(b) = baseline {
            let [r, md, q3] = t.improvement_over(b);
            row.extend([r.to_string(), q3.to_string(), md.to_string()]);
        }
        w.write_record(&row)?;
    }
    flush(w, &p)?;
    let p = run.path("coverage.csv");
    let mut w = csv_writer(&p)?;
    w.write_record(["Confidence level", "Model", "Empirical coverage", "Mean length", "Median length"])?;
    for k in 0..run.cfg.levels.len() {
        for m in models {
            let c = &m.calib.coverage[k];
            w.write_record([
                c.level.to_string(),
                m.label.clone(),
                c.coverage.to_string(),
                c.mean_length.to_string(),
                c.median_length.to_string(),
            ])?;
        }
    }
    flush(w, &p)?;
    let p = run.path("quantile_curve.csv");
    let mut w = csv_writer(&p)?;
    let mut head = vec!["q_theory".to_string()];
    head.extend(models.iter().map(|m| format!("{} q_sample - q_theory", m.label)));
    w.write_record(&head)?;
    if let Some(first) = models.first() {
        for i in 0..first.calib.curve.len() {
            let mut row = vec![first.calib.curve[i].0.to_string()];
            row.extend(models.iter().map(|m| m.calib.curve[i].1.to_string()));
            w.write_record(&row)?;
        }
    }
    flush(w, &p)?;
    let mut text = String::new();
    for m in models {
        let _ = writeln!(
            text,
            "{}: n = {}, KS = {}, 1% critical = {}, infinite residuals = {}",
            m.label,
            m.calib.residuals.len(),
            m.calib.ks_statistic,
            m.calib.ks_critical_1pct,
            m.calib.infinite.len()
        );
    }
    run.write_text("calibration.txt", &text)
}

fn cmd_cv(cfg: RunConfig) -> Result<()> {
    let mut run = Run::new(cfg, "cv")?;
    let cfg = run.cfg.clone();
    let fp = cfg.field_path();
    let cached = if fp.exists() {
        let f = load_field(&fp)?;
        if f.variant.id == cfg.variant {
            run.input(&fp)?;
            Some(f)
        } else {
            log::warn!("{} holds variant {}, refitting variant {}", fp.display(), f.variant.id, cfg.variant);
            None
        }
    } else {
        None
    };
    let (field, data) = match cached {
        Some(f) => (f, load_residuals(&mut run)?),
        None => {
            let (f, d) = field_for(&mut run)?;
            write_field_outputs(&mut run, &f)?;
            (f, d)
        }
    };
    let cv = run_cv(
        &data,
        &field,
        cfg.scheme,
        &CvOptions {
            eval_window: cfg.cv_window()?,
            threads: cfg.threads,
        },
    )?;
    let p = run.path("cv_records.csv");
    write_records(&p, &cv)?;
    let p = run.path("cv_skipped.csv");
    let mut w = csv_writer(&p)?;
    w.write_record(["fold", "reason"])?;
    for s in &cv.skipped {
        w.write_record([s.fold.to_string(), s.reason.clone()])?;
    }
    flush(w, &p)?;
    run.status_counts.insert("records".into(), cv.records.len());
    run.status_counts.insert("skipped".into(), cv.skipped.len());
    if !cv.records.is_empty() {
        let e = evaluate(&cv, &cfg)?;
        write_tables(&mut run, &[e], None)?;
    }
    run.finish()
}

fn cmd_calibrate(cfg: RunConfig, records: Vec<PathBuf>, baseline: Option<PathBuf>) -> Result<()> {
    let mut run = Run::new(cfg, "calibrate")?;
    let cfg = run.cfg.clone();
    let paths = if records.is_empty() {
        vec![cfg.records.clone().unwrap_or_else(|| cfg.out_file("cv_records.csv"))]
    } else {
        records
    };
    let mut models = Vec::new();
    for p in &paths {
        run.input(p)?;
        models.push(evaluate(&read_records(p)?, &cfg)?);
    }
    let base = match &baseline {
        Some(b) => {
            run.input(b)?;
            Some(point_metrics(&read_records(b)?)?)
        }
        None => None,
    };
    write_tables(&mut run, &models, base.as_ref())?;
    run.finish()
}

fn cmd_lagmaps(cfg: RunConfig) -> Result<()> {
    let mut run = Run::new(cfg, "lagmaps")?;
    let fp = run.cfg.field_path();
    if !fp.exists() {
        return Err(Error::Config(format!(
            "missing parameter grids: {} not found (run `lsgp map` first)",
            fp.display()
        )));
    }
    run.input(&fp)?;
    let field = load_field(&fp)?;
    let mode: DistanceMode = field.variant.time_mode;
    for lag in DEFAULT_LAGS {
        let mut rows = Vec::new();
        for c in &field.cells {
            if let Some(m) = &c.model {
                let v = model_correlation_at_lag(m, mode, c.cell.lat, &lag, run.cfg.normalization)?;
                rows.push((c.cell.index, c.cell.lat, c.cell.lon, v));
            }
        }
        emit_grid(&mut run, &format!("corr_{}", lag.name), &field.grid, &rows)?;
    }
    run.finish()
}

/// Parses arguments and runs one command.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string()))?;
    let cfg = build_config(&cli.common)?;
    match cli.command {
        Command::Simulate => cmd_simulate(cfg),
        Command::Mean => cmd_mean(cfg),
        Command::Map => cmd_map(cfg),
        Command::Cv => cmd_cv(cfg),
        Command::Calibrate { records, baseline } => cmd_calibrate(cfg, records, baseline),
        Command::Lagmaps => cmd_lagmaps(cfg),
    }
}

/// Entry point of the `lsgp` binary.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args: Vec<OsString> = std::env::args_os().collect();
    // let clap print help and version itself
    if let Err(e) = Cli::try_parse_from(&args) {
        let _ = e.print();
        return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
    }
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conf_round_trip_and_hash() {
        let mut c = RunConfig::default();
        c.set("variant", "3").unwrap();
        c.set("sim_nu", "4").unwrap();
        c.set("eval_years", "2010, 2012").unwrap();
        c.set("mean", "none").unwrap();
        let mut d = RunConfig::default();
        d.apply_text(&c.to_conf(), Path::new("x")).unwrap();
        assert_eq!(c, d);
        assert_eq!(c.hash(), d.hash());
        d.threads = 8;
        assert_eq!(c.hash(), d.hash());
        d.seed = 1;
        assert_ne!(c.hash(), d.hash());
        assert!(c.set("bogus", "1").is_err());
    }

    #[test]
    fn defaults_follow_the_reference_setup() {
        let c = RunConfig::default();
        let w = c.window().unwrap();
        assert_eq!(w.x_win, 10.0);
        assert_eq!(c.step, 1.0);
        assert_eq!(c.variant, 5);
        assert_eq!(w.t_win, 45.0);
        let jfm = c.data_window().unwrap();
        assert_eq!((jfm.start_day, jfm.end_day), (0.0, 90.0));
        let mut one = c.clone();
        one.variant = 2;
        let feb = one.data_window().unwrap();
        assert_eq!((feb.start_day, feb.end_day), (31.0, 59.0));
        assert_eq!(one.window().unwrap().t_win, 14.0);
    }

    #[test]
    fn month_override_is_allowed() {
        let mut c = RunConfig::default();
        c.months = Some(1);
        assert!(c.validate().is_ok());
        assert_eq!(c.effective_months().unwrap(), 1);
        c.variant = 9;
        assert!(c.validate().is_err());
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let conf = dir.path().join("a.conf");
        fs::write(&conf, "seed = 5\nvariant = 2 # comment\nthreads = 3\n").unwrap();
        let cli = Cli::try_parse_from(["lsgp", "map", "--config", conf.to_str().unwrap(), "--seed", "9", "--set", "x_win=7"]).unwrap();
        let cfg = build_config(&cli.common).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.variant, 2);
        assert_eq!(cfg.threads, 3);
        assert_eq!(cfg.x_win, 7.0);
    }

    #[test]
    fn bad_config_line_reports_position() {
        let mut c = RunConfig::default();
        match c.apply_text("seed = 1\nnonsense\n", Path::new("f.conf")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
