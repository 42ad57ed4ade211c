//! Moving-window orchestration: neighborhood selection, per-cell fit and
//! prediction for the six model variants, and parallel grid mapping.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{
    lon_diff, normalize_lon, rg_correlation, rg_distance, CovParams, DistanceMode, ExpKernel, Kernel, RgCovConfig,
    RgKernel, SpaceTimePoint, KM_PER_DEGREE,
};
use crate::error::{Error, Result};
use crate::gp_gaussian::{fit_mle_gaussian, gaussian_interval, total_obs, FitOptions, FitReport, GaussianPredictive, Kriging, YearBlock};
use crate::gp_student::{
    derive_seed, fit_mle_student, McOptions, PredictiveSample, StudentFitOptions, StudentInit, StudentKriging,
    StudentParams, StudentPredictive,
};
use crate::ingest::rg_phi_hat_of;
use crate::linalg::Jitter;
use crate::stats::normal_cdf;

/// Window half-widths around a center.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    /// Degrees, applied to both latitude and (wrapped) longitude.
    pub x_win: f64,
    /// Days, applied within each year.
    pub t_win: f64,
    pub min_obs: usize,
}

/// Half-width in days of a one-month window (February: days 31–59).
pub const ONE_MONTH_HALF_WIDTH: f64 = 14.0;
/// Half-width in days of a three-month window (January–March: days 0–90).
pub const THREE_MONTH_HALF_WIDTH: f64 = 45.0;
/// Mid-February, the center of both default windows, as a zero-based day of year.
pub const MID_FEBRUARY: f64 = 45.0;

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            x_win: 10.0,
            t_win: THREE_MONTH_HALF_WIDTH,
            min_obs: 20,
        }
    }
}

impl WindowSpec {
    /// 20° × 20° window spanning `months` (1 or 3) around mid-February.
    pub fn for_months(months: u8) -> Self {
        WindowSpec {
            t_win: if months == 1 {
                ONE_MONTH_HALF_WIDTH
            } else {
                THREE_MONTH_HALF_WIDTH
            },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_win > 0.0) || !self.x_win.is_finite() {
            return Err(Error::invalid(format!("x_win must be positive, got {}", self.x_win)));
        }
        if !(self.t_win >= 0.0) {
            return Err(Error::invalid(format!("t_win must be nonnegative, got {}", self.t_win)));
        }
        if self.min_obs == 0 {
            return Err(Error::invalid("min_obs must be at least 1"));
        }
        Ok(())
    }

    pub fn contains(&self, center: &SpaceTimePoint, p: &SpaceTimePoint) -> bool {
        (p.lat - center.lat).abs() <= self.x_win
            && lon_diff(p.lon, center.lon).abs() <= self.x_win
            && (p.t - center.t).abs() <= self.t_win
    }
}

/// Subsets of each year's observations inside the window; every input year is
/// kept, possibly empty.
pub fn select_window(data: &[YearBlock], center: &SpaceTimePoint, spec: &WindowSpec) -> Vec<YearBlock> {
    data.iter()
        .map(|b| {
            let idx: Vec<usize> = (0..b.len()).filter(|&i| spec.contains(center, &b.points[i])).collect();
            b.select(&idx)
        })
        .collect()
}

/// Set of excluded 1° cells, keyed by `(floor(lat), floor(lon))` with
/// longitude in `[-180, 180)`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellMask {
    cells: BTreeSet<(i32, i32)>,
}

impl CellMask {
    pub fn key(lat: f64, lon: f64) -> (i32, i32) {
        let mut lo = normalize_lon(lon);
        if lo >= 180.0 {
            lo -= 360.0;
        }
        (lat.floor() as i32, lo.floor() as i32)
    }

    pub fn insert(&mut self, lat: f64, lon: f64) {
        self.cells.insert(Self::key(lat, lon));
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        self.cells.contains(&Self::key(lat, lon))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Regular prediction grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lat_step: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    pub lon_step: f64,
    /// Day of year at which predictions are made.
    pub eval_time: f64,
    /// Years to predict; empty means every year present in the data.
    pub eval_years: Vec<i32>,
    pub mask: CellMask,
    /// Cells poleward of this latitude are skipped.
    pub max_abs_lat: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            lat_min: -79.5,
            lat_max: 79.5,
            lat_step: 1.0,
            lon_min: -179.5,
            lon_max: 179.5,
            lon_step: 1.0,
            eval_time: MID_FEBRUARY,
            eval_years: Vec::new(),
            mask: CellMask::default(),
            max_abs_lat: 80.0,
        }
    }
}

/// One grid node; `index` is row-major over (lat, lon).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub index: usize,
    pub lat: f64,
    pub lon: f64,
}

fn axis(min: f64, max: f64, step: f64) -> Vec<f64> {
    let n = ((max - min) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|i| min + i as f64 * step).collect()
}

impl GridSpec {
    /// Grid over the given box with 1° steps and the default evaluation time.
    pub fn regular(lat: (f64, f64), lon: (f64, f64), step: f64) -> Self {
        GridSpec {
            lat_min: lat.0,
            lat_max: lat.1,
            lat_step: step,
            lon_min: lon.0,
            lon_max: lon.1,
            lon_step: step,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lat_step > 0.0 && self.lon_step > 0.0) {
            return Err(Error::invalid("grid steps must be positive"));
        }
        if !(self.lat_max >= self.lat_min && self.lon_max >= self.lon_min) {
            return Err(Error::invalid("grid ranges must be nonempty"));
        }
        if !self.eval_time.is_finite() {
            return Err(Error::invalid("eval_time must be finite"));
        }
        Ok(())
    }

    pub fn lats(&self) -> Vec<f64> {
        axis(self.lat_min, self.lat_max, self.lat_step)
    }

    pub fn lons(&self) -> Vec<f64> {
        axis(self.lon_min, self.lon_max, self.lon_step)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.lats().len(), self.lons().len())
    }

    /// Every node, masked or not.
    pub fn cells(&self) -> Vec<GridCell> {
        let lons = self.lons();
        self.lats()
            .into_iter()
            .enumerate()
            .flat_map(|(i, lat)| {
                let nl = lons.len();
                lons.iter().enumerate().map(move |(j, &lon)| GridCell {
                    index: i * nl + j,
                    lat,
                    lon,
                })
            })
            .collect()
    }

    pub fn is_active(&self, cell: &GridCell) -> bool {
        cell.lat.abs() <= self.max_abs_lat && !self.mask.contains(cell.lat, cell.lon)
    }

    /// Unmasked nodes in index order.
    pub fn active_cells(&self) -> Vec<GridCell> {
        self.cells().into_iter().filter(|c| self.is_active(c)).collect()
    }
}

/// Which nugget distribution a variant uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nugget {
    Gaussian,
    Student,
}

/// Whether the mean field is held constant over the window or varies in time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanMode {
    Spatial,
    SpatioTemporal,
}

/// One of the six model configurations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelVariant {
    pub id: u8,
    pub time_mode: DistanceMode,
    pub nugget: Nugget,
    pub months: u8,
    /// Fixed reference covariance instead of a local fit.
    pub reference: bool,
    pub mean_mode: MeanMode,
}

impl ModelVariant {
    pub fn from_id(id: u8) -> Result<Self> {
        use DistanceMode::*;
        let (time_mode, nugget, months, reference, mean_mode) = match id {
            1 => (Spatial, Nugget::Gaussian, 1, true, MeanMode::Spatial),
            2 => (Spatial, Nugget::Gaussian, 1, false, MeanMode::Spatial),
            3 => (Spatial, Nugget::Student, 1, false, MeanMode::Spatial),
            4 => (Spatial, Nugget::Gaussian, 3, false, MeanMode::SpatioTemporal),
            5 => (SpaceTime, Nugget::Gaussian, 3, false, MeanMode::SpatioTemporal),
            6 => (SpaceTime, Nugget::Student, 3, false, MeanMode::SpatioTemporal),
            _ => return Err(Error::Config(format!("model variant must be 1-6, got {id}"))),
        };
        Ok(ModelVariant {
            id,
            time_mode,
            nugget,
            months,
            reference,
            mean_mode,
        })
    }

    pub fn all() -> [ModelVariant; 6] {
        [1, 2, 3, 4, 5, 6].map(|i| Self::from_id(i).expect("valid id"))
    }
}

/// Parameters of a fitted (or fixed) local model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LocalModel {
    Reference { phi: f64, sigma2: f64, config: RgCovConfig },
    Gaussian(CovParams),
    Student(StudentParams),
}

impl LocalModel {
    pub fn phi(&self) -> f64 {
        match self {
            LocalModel::Reference { phi, .. } => *phi,
            LocalModel::Gaussian(p) => p.phi,
            LocalModel::Student(p) => p.cov.phi,
        }
    }

    /// `σ²` of the Gaussian nugget, or the squared Student scale.
    pub fn sigma2(&self) -> f64 {
        match self {
            LocalModel::Reference { sigma2, .. } => *sigma2,
            LocalModel::Gaussian(p) => p.sigma2,
            LocalModel::Student(p) => p.cov.sigma2,
        }
    }

    pub fn nu(&self) -> Option<f64> {
        match self {
            LocalModel::Student(p) => Some(p.nu),
            _ => None,
        }
    }

    /// Exponential-kernel parameters; `None` for the reference covariance.
    pub fn cov_params(&self) -> Option<CovParams> {
        match self {
            LocalModel::Reference { .. } => None,
            LocalModel::Gaussian(p) => Some(*p),
            LocalModel::Student(p) => Some(p.cov),
        }
    }

    /// Variance of the nugget term; infinite for a Student nugget with `ν ≤ 2`.
    pub fn nugget_variance(&self) -> f64 {
        match self {
            LocalModel::Student(p) if p.nu > 2.0 => p.cov.sigma2 * p.nu / (p.nu - 2.0),
            LocalModel::Student(_) => f64::INFINITY,
            _ => self.sigma2(),
        }
    }

    pub fn prior_variance(&self) -> f64 {
        self.phi() + self.nugget_variance()
    }
}

/// Predictive distribution of a new observation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PredictiveDist {
    Gaussian(GaussianPredictive),
    Student(StudentPredictive),
}

impl PredictiveDist {
    pub fn mean(&self) -> f64 {
        match self {
            PredictiveDist::Gaussian(g) => g.mean,
            PredictiveDist::Student(s) => s.f_mean,
        }
    }

    /// Variance of the observation, latent plus nugget.
    pub fn variance(&self) -> f64 {
        match self {
            PredictiveDist::Gaussian(g) => g.variance,
            PredictiveDist::Student(s) => s.total_variance(),
        }
    }

    /// Central `1 − alpha` interval; Student intervals are Monte Carlo.
    pub fn interval(&self, alpha: f64, mc: &McOptions) -> Result<(f64, f64)> {
        match self {
            PredictiveDist::Gaussian(g) => gaussian_interval(g, alpha),
            PredictiveDist::Student(s) => PredictiveSample::draw(s, mc)?.interval(alpha),
        }
    }

    /// Predictive CDF at `value`.
    pub fn pit(&self, value: f64, mc: &McOptions) -> Result<f64> {
        match self {
            PredictiveDist::Gaussian(g) => {
                let sd = g.sd();
                Ok(if sd > 0.0 {
                    normal_cdf((value - g.mean) / sd)
                } else if value >= g.mean {
                    1.0
                } else {
                    0.0
                })
            }
            PredictiveDist::Student(s) => Ok(PredictiveSample::draw(s, mc)?.pit(value)),
        }
    }
}

/// Ratio of predictive to prior variance, clamped to `[0, 1]`.
///
/// For a Student nugget with `ν ≤ 2` both variances are infinite and the ratio
/// of the latent parts `f_var / φ` is returned instead.
pub fn variance_ratio(pred: &PredictiveDist, model: &LocalModel) -> f64 {
    let r = match pred {
        PredictiveDist::Student(s) if !(s.dof > 2.0) => s.f_var / model.phi(),
        _ => pred.variance() / model.prior_variance(),
    };
    r.clamp(0.0, 1.0)
}

/// How lag correlations are normalized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Divide by `φ + σ²`.
    #[default]
    Total,
    /// Divide by `φ` only.
    GpOnly,
}

/// Lag in degrees and days.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lag {
    pub dlat: f64,
    pub dlon: f64,
    pub dt: f64,
}

impl Lag {
    /// Converts kilometre lags to degrees at latitude `lat`.
    pub fn from_km(dlat_km: f64, dlon_km: f64, dt: f64, lat: f64) -> Self {
        Lag {
            dlat: dlat_km / KM_PER_DEGREE,
            dlon: dlon_km / (KM_PER_DEGREE * lat.to_radians().cos()),
            dt,
        }
    }
}

/// A lag expressed in kilometres and days.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KmLag {
    pub name: &'static str,
    pub dlat_km: f64,
    pub dlon_km: f64,
    pub dt: f64,
}

/// Zonal 800 km, meridional 800 km and 10-day lags.
pub const DEFAULT_LAGS: [KmLag; 3] = [
    KmLag {
        name: "zonal",
        dlat_km: 0.0,
        dlon_km: 800.0,
        dt: 0.0,
    },
    KmLag {
        name: "meridional",
        dlat_km: 800.0,
        dlon_km: 0.0,
        dt: 0.0,
    },
    KmLag {
        name: "temporal",
        dlat_km: 0.0,
        dlon_km: 0.0,
        dt: 10.0,
    },
];

/// Model correlation `φ·exp(−d(lag)) / (φ + σ²)` (or `/ φ`).
pub fn correlation_at_lag(params: &CovParams, mode: DistanceMode, lag: &Lag, norm: Normalization) -> Result<f64> {
    let k = ExpKernel::new(params, mode)?;
    let origin = SpaceTimePoint::new(0.0, 0.0, 0.0);
    let c = k.cov(&origin, &SpaceTimePoint::new(lag.dlat, lag.dlon, lag.dt));
    Ok(match norm {
        Normalization::Total => c / (params.phi + params.sigma2),
        Normalization::GpOnly => c / params.phi,
    })
}

/// Lag correlation for any local model at a cell; `lag` is in kilometres.
pub fn model_correlation_at_lag(model: &LocalModel, mode: DistanceMode, lat: f64, lag: &KmLag, norm: Normalization) -> Result<f64> {
    let denom = match norm {
        Normalization::Total => model.prior_variance(),
        Normalization::GpOnly => model.phi(),
    };
    match model {
        LocalModel::Reference { phi, config, .. } => {
            let deg = Lag::from_km(lag.dlat_km, lag.dlon_km, lag.dt, lat);
            let d = rg_distance((lat, 0.0), (lat + deg.dlat, deg.dlon), true);
            Ok(phi * rg_correlation(d, config) / denom)
        }
        _ => {
            let p = model.cov_params().expect("exponential model");
            let deg = Lag::from_km(lag.dlat_km, lag.dlon_km, lag.dt, lat);
            let k = ExpKernel::new(&p, mode)?;
            let c = k.cov(&SpaceTimePoint::new(0.0, 0.0, 0.0), &SpaceTimePoint::new(deg.dlat, deg.dlon, deg.dt));
            Ok(c / denom)
        }
    }
}

/// Settings shared by every cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineOptions {
    pub fit: FitOptions,
    pub student: StudentFitOptions,
    /// Interval level is `1 − alpha`.
    pub alpha: f64,
    pub mc_samples: usize,
    pub seed: u64,
    pub rg: RgCovConfig,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            fit: FitOptions::default(),
            student: StudentFitOptions::default(),
            alpha: 0.05,
            mc_samples: 100_000,
            seed: 0,
            rg: RgCovConfig::default(),
        }
    }
}

impl EngineOptions {
    pub fn mc(&self, cell: usize, year: i32) -> McOptions {
        McOptions {
            samples: self.mc_samples,
            seed: derive_seed(self.seed, cell as u64, year as i64),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum CellStatus {
    Ok,
    InsufficientData { found: usize, required: usize },
    FitFailed { message: String },
    /// Predictions use the parameters of cell `source` after this cell's own fit failed.
    Fallback { source: usize, message: String },
}

impl CellStatus {
    pub fn label(&self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::InsufficientData { .. } => "insufficient-data",
            CellStatus::FitFailed { .. } => "fit-failed",
            CellStatus::Fallback { .. } => "fallback",
        }
    }

    pub fn has_model(&self) -> bool {
        matches!(self, CellStatus::Ok | CellStatus::Fallback { .. })
    }
}

/// Prediction for one year at a cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YearPrediction {
    pub year: i32,
    pub dist: PredictiveDist,
    pub lower: f64,
    pub upper: f64,
    pub variance_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: GridCell,
    pub n_obs: usize,
    pub status: CellStatus,
    pub model: Option<LocalModel>,
    pub fit: Option<FitReport>,
    pub predictions: Vec<YearPrediction>,
}

/// Fits the variant's local model to an already selected window.
pub fn fit_local_model(
    window: &[YearBlock],
    variant: &ModelVariant,
    opts: &EngineOptions,
) -> Result<(LocalModel, Option<FitReport>)> {
    if variant.reference {
        let phi = rg_phi_hat_of(window, &opts.rg)?;
        return Ok((
            LocalModel::Reference {
                phi,
                sigma2: opts.rg.noise_signal_ratio * phi,
                config: opts.rg,
            },
            None,
        ));
    }
    match variant.nugget {
        Nugget::Gaussian => {
            let fit = fit_mle_gaussian(window, None, variant.time_mode, &opts.fit)?;
            Ok((LocalModel::Gaussian(fit.params), Some(fit.report)))
        }
        Nugget::Student => {
            let mut sopts = opts.student;
            sopts.base.min_obs = opts.fit.min_obs;
            let fit = fit_mle_student(window, StudentInit::FromGaussian, variant.time_mode, &sopts)?;
            Ok((LocalModel::Student(fit.params), Some(fit.report)))
        }
    }
}

/// Kernel of a Gaussian-nugget or reference model.
pub fn model_kernel(model: &LocalModel, mode: DistanceMode) -> Result<Box<dyn Kernel>> {
    Ok(match model {
        LocalModel::Reference { phi, config, .. } => Box::new(RgKernel::new(*phi, *config)?),
        LocalModel::Gaussian(p) => Box::new(ExpKernel::new(p, mode)?),
        LocalModel::Student(p) => Box::new(ExpKernel::new(&p.cov, mode)?),
    })
}

/// Predictive distribution at `target` from one year's block.
pub fn predict_with_model(
    block: &YearBlock,
    model: &LocalModel,
    mode: DistanceMode,
    target: &SpaceTimePoint,
) -> Result<PredictiveDist> {
    match model {
        LocalModel::Student(p) => Ok(PredictiveDist::Student(StudentKriging::new(block, p, mode)?.predict(target))),
        _ => {
            let k = model_kernel(model, mode)?;
            let kr = Kriging::new(block, k.as_ref(), model.sigma2(), Jitter::default())?;
            Ok(PredictiveDist::Gaussian(kr.predict(target)))
        }
    }
}

fn requested_years(data: &[YearBlock], grid: &GridSpec) -> Vec<i32> {
    if grid.eval_years.is_empty() {
        let mut y: Vec<i32> = data.iter().map(|b| b.year).collect();
        y.sort_unstable();
        y.dedup();
        y
    } else {
        grid.eval_years.clone()
    }
}

fn predict_years(
    window: &[YearBlock],
    model: &LocalModel,
    variant: &ModelVariant,
    cell: &GridCell,
    eval_time: f64,
    years: &[i32],
    opts: &EngineOptions,
) -> Result<Vec<YearPrediction>> {
    let target = SpaceTimePoint::new(cell.lat, cell.lon, eval_time);
    years
        .iter()
        .map(|&year| {
            let empty;
            let block = match window.iter().find(|b| b.year == year) {
                Some(b) => b,
                None => {
                    empty = YearBlock::empty(year);
                    &empty
                }
            };
            let dist = predict_with_model(block, model, variant.time_mode, &target)?;
            let (lower, upper) = dist.interval(opts.alpha, &opts.mc(cell.index, year))?;
            Ok(YearPrediction {
                year,
                dist,
                lower,
                upper,
                variance_ratio: variance_ratio(&dist, model),
            })
        })
        .collect()
}

/// Fit and predict at one grid cell. Never fails: problems become the status.
pub fn fit_grid_point(
    data: &[YearBlock],
    cell: &GridCell,
    variant: &ModelVariant,
    spec: &WindowSpec,
    grid: &GridSpec,
    opts: &EngineOptions,
) -> CellResult {
    let years = requested_years(data, grid);
    let center = SpaceTimePoint::new(cell.lat, cell.lon, grid.eval_time);
    let window = select_window(data, &center, spec);
    let n_obs = total_obs(&window);
    let mut out = CellResult {
        cell: *cell,
        n_obs,
        status: CellStatus::Ok,
        model: None,
        fit: None,
        predictions: Vec::new(),
    };
    let required = spec.min_obs.max(2);
    if n_obs < required {
        out.status = CellStatus::InsufficientData { found: n_obs, required };
        return out;
    }
    let mut local = *opts;
    local.fit.min_obs = spec.min_obs;
    let fitted = fit_local_model(&window, variant, &local)
        .and_then(|(m, r)| predict_years(&window, &m, variant, cell, grid.eval_time, &years, opts).map(|p| (m, r, p)));
    match fitted {
        Ok((model, report, predictions)) => {
            out.model = Some(model);
            out.fit = report;
            out.predictions = predictions;
        }
        Err(Error::InsufficientData { found, required }) => {
            out.status = CellStatus::InsufficientData { found, required };
        }
        Err(e) => {
            log::warn!("cell {} ({}, {}): {e}", cell.index, cell.lat, cell.lon);
            out.status = CellStatus::FitFailed { message: e.to_string() };
        }
    }
    out
}

/// Parallelism and failure policy for [`map_grid`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapOptions {
    pub threads: usize,
    /// Reuse the nearest successful cell's parameters where a fit failed.
    pub fallback_nearest: bool,
    pub engine: EngineOptions,
}

impl Default for MapOptions {
    fn default() -> Self {
        MapOptions {
            threads: 1,
            fallback_nearest: false,
            engine: EngineOptions::default(),
        }
    }
}

/// Results for every unmasked cell, in grid index order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridField {
    pub grid: GridSpec,
    pub variant: ModelVariant,
    pub window: WindowSpec,
    pub cells: Vec<CellResult>,
    /// Seconds spent per cell, parallel to `cells`; not part of the result proper.
    pub wall_times: Vec<f64>,
    /// Number of cells the engine actually processed.
    pub visits: usize,
}

impl GridField {
    pub fn cell(&self, index: usize) -> Option<&CellResult> {
        self.cells
            .binary_search_by_key(&index, |c| c.cell.index)
            .ok()
            .map(|i| &self.cells[i])
    }

    pub fn count_status(&self, label: &str) -> usize {
        self.cells.iter().filter(|c| c.status.label() == label).count()
    }
}

fn grid_distance2(a: &GridCell, b: &GridCell) -> f64 {
    let dl = a.lat - b.lat;
    let dn = lon_diff(a.lon, b.lon);
    dl * dl + dn * dn
}

/// Applies [`fit_grid_point`] at every unmasked cell on a pool of
/// `opts.threads` workers. The result does not depend on the thread count.
pub fn map_grid(
    data: &[YearBlock],
    grid: &GridSpec,
    variant: &ModelVariant,
    spec: &WindowSpec,
    opts: &MapOptions,
) -> Result<GridField> {
    grid.validate()?;
    spec.validate()?;
    let cells = grid.active_cells();
    let visits = AtomicUsize::new(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let run = |c: &GridCell| {
        visits.fetch_add(1, Ordering::Relaxed);
        let start = Instant::now();
        let r = fit_grid_point(data, c, variant, spec, grid, &opts.engine);
        (r, start.elapsed().as_secs_f64())
    };
    let timed: Vec<(CellResult, f64)> = pool.install(|| cells.par_iter().map(run).collect());
    let (mut results, wall_times): (Vec<CellResult>, Vec<f64>) = timed.into_iter().unzip();
    if opts.fallback_nearest {
        let years = requested_years(data, grid);
        let donors: Vec<(GridCell, LocalModel)> = results
            .iter()
            .filter(|r| r.status == CellStatus::Ok)
            .map(|r| (r.cell, r.model.expect("ok cell has a model")))
            .collect();
        let patched: Vec<Option<CellResult>> = pool.install(|| {
            results
                .par_iter()
                .map(|r| {
                    let CellStatus::FitFailed { message } = &r.status else {
                        return None;
                    };
                    // strict < keeps the lowest index among equidistant donors
                    let mut best: Option<&(GridCell, LocalModel)> = None;
                    for d in &donors {
                        if best.is_none_or(|b| grid_distance2(&r.cell, &d.0) < grid_distance2(&r.cell, &b.0)) {
                            best = Some(d);
                        }
                    }
                    let (src, model) = best?;
                    let center = SpaceTimePoint::new(r.cell.lat, r.cell.lon, grid.eval_time);
                    let window = select_window(data, &center, spec);
                    let preds = predict_years(&window, model, variant, &r.cell, grid.eval_time, &years, &opts.engine).ok()?;
                    Some(CellResult {
                        status: CellStatus::Fallback {
                            source: src.index,
                            message: message.clone(),
                        },
                        model: Some(*model),
                        fit: None,
                        predictions: preds,
                        ..r.clone()
                    })
                })
                .collect()
        });
        for (r, p) in results.iter_mut().zip(patched) {
            if let Some(p) = p {
                *r = p;
            }
        }
    }
    Ok(GridField {
        grid: grid.clone(),
        variant: *variant,
        window: *spec,
        cells: results,
        wall_times,
        visits: visits.into_inner(),
    })
}
