//! Synthetic fields, leave-one-out cross-validation, point metrics and
//! calibration diagnostics.

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{cov_matrix, lon_diff, CovParams, DistanceMode, ExpKernel, SpaceTimePoint};
use crate::error::{Error, Result};
use crate::gp_gaussian::{factor_block, GaussianPredictive, YearBlock};
use crate::gp_student::{derive_seed, McOptions, PredictiveSample, StudentKriging, StudentParams};
use crate::ingest::CalendarWindow;
use crate::linalg::{Jitter, SpdFactor};
use crate::stats::{normal_cdf, normal_quantile, quantile_sorted, sort_floats};
use crate::window::{model_kernel, predict_with_model, select_window, GridField, LocalModel, PredictiveDist};

/// Generating model for synthetic data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "nugget", rename_all = "lowercase")]
pub enum SimModel {
    Gaussian(CovParams),
    Student(StudentParams),
}

impl SimModel {
    fn cov(&self) -> &CovParams {
        match self {
            SimModel::Gaussian(p) => p,
            SimModel::Student(p) => &p.cov,
        }
    }
}

/// Fills `values` of every block with an independent draw `f + ε`, keeping
/// points and source ids. Each year uses its own RNG stream derived from
/// `seed` and the block position.
pub fn simulate_blocks(model: &SimModel, mode: DistanceMode, layout: &[YearBlock], seed: u64) -> Result<Vec<YearBlock>> {
    let cov = model.cov();
    cov.validate()?;
    if let SimModel::Student(p) = model {
        p.validate()?;
    }
    let kernel = ExpKernel::new(cov, mode)?;
    layout
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let mut out = b.clone();
            if b.is_empty() {
                return Ok(out);
            }
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, i as u64, b.year as i64));
            let k = cov_matrix(&b.points, &kernel)?;
            let f = SpdFactor::new(&k, cov.phi, Jitter::default(), b.year)?;
            let z: Vec<f64> = (0..b.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
            let field = f.lower_mul(&z);
            out.values = match model {
                SimModel::Gaussian(p) => {
                    let s = p.sigma2.sqrt();
                    field
                        .iter()
                        .map(|v| {
                            let e: f64 = StandardNormal.sample(&mut rng);
                            v + s * e
                        })
                        .collect()
                }
                SimModel::Student(p) => {
                    let t = StudentT::new(p.nu).map_err(|e| Error::invalid(e.to_string()))?;
                    let s = p.scale();
                    field.iter().map(|v| v + s * t.sample(&mut rng)).collect()
                }
            };
            Ok(out)
        })
        .collect()
}

/// `n_years` independent draws at the same locations; years are numbered
/// from 0 and observation `i` gets source id `s{i}`.
pub fn simulate_field(
    model: &SimModel,
    mode: DistanceMode,
    locations: &[SpaceTimePoint],
    n_years: usize,
    seed: u64,
) -> Result<Vec<YearBlock>> {
    let ids: Vec<String> = (0..locations.len()).map(|i| format!("s{i}")).collect();
    let layout: Vec<YearBlock> = (0..n_years)
        .map(|y| YearBlock::new(y as i32, locations.to_vec(), vec![0.0; locations.len()], ids.clone()))
        .collect::<Result<_>>()?;
    simulate_blocks(model, mode, &layout, seed)
}

/// Cross-validation scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Leave one observation out.
    Looo,
    /// Leave out every observation of the held-out observation's source.
    Lofo,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "looo" => Ok(Scheme::Looo),
            "lofo" => Ok(Scheme::Lofo),
            _ => Err(Error::Config(format!("unknown scheme {s:?}, expected looo or lofo"))),
        }
    }
}

/// One held-out observation and the observations removed with it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    /// Position of the held-out observation: `(block, index)`.
    pub held_out: (usize, usize),
    /// Every removed `(block, index)`, sorted, including `held_out`.
    pub removed: Vec<(usize, usize)>,
}

impl Fold {
    /// The data with this fold's observations removed.
    pub fn remaining(&self, blocks: &[YearBlock]) -> Vec<YearBlock> {
        blocks
            .iter()
            .enumerate()
            .map(|(b, blk)| {
                let drop: Vec<usize> = self.removed.iter().filter(|(bb, _)| *bb == b).map(|(_, i)| *i).collect();
                if drop.is_empty() {
                    blk.clone()
                } else {
                    blk.without(&drop)
                }
            })
            .collect()
    }

    /// Removed indices within the held-out observation's year.
    pub fn removed_in_block(&self) -> Vec<usize> {
        self.removed
            .iter()
            .filter(|(b, _)| *b == self.held_out.0)
            .map(|(_, i)| *i)
            .collect()
    }
}

/// One fold per observation, removing only that observation.
pub fn loo_partition(blocks: &[YearBlock]) -> impl Iterator<Item = Fold> + '_ {
    blocks.iter().enumerate().flat_map(|(b, blk)| {
        (0..blk.len()).map(move |i| Fold {
            held_out: (b, i),
            removed: vec![(b, i)],
        })
    })
}

/// One fold per observation, removing every observation with the same source id
/// (in all years).
pub fn lofo_partition(blocks: &[YearBlock]) -> Result<Vec<Fold>> {
    let mut by_id: HashMap<&str, Vec<(usize, usize)>> = HashMap::new();
    for (b, blk) in blocks.iter().enumerate() {
        for (i, id) in blk.source_ids.iter().enumerate() {
            if id.is_empty() {
                return Err(Error::invalid(format!("observation {i} of year {} has no source id", blk.year)));
            }
            by_id.entry(id).or_default().push((b, i));
        }
    }
    Ok(blocks
        .iter()
        .enumerate()
        .flat_map(|(b, blk)| {
            let by_id = &by_id;
            blk.source_ids.iter().enumerate().map(move |(i, id)| Fold {
                held_out: (b, i),
                removed: by_id[id.as_str()].clone(),
            })
        })
        .collect())
}

pub fn partition(blocks: &[YearBlock], scheme: Scheme) -> Result<Vec<Fold>> {
    match scheme {
        Scheme::Looo => Ok(loo_partition(blocks).collect()),
        Scheme::Lofo => lofo_partition(blocks),
    }
}

/// Prediction of one held-out observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvRecord {
    /// Fold number: position of the observation in block order.
    pub fold: usize,
    pub year: i32,
    pub source_id: String,
    pub cell: usize,
    pub variant: u8,
    pub truth: f64,
    pub dist: PredictiveDist,
}

impl CvRecord {
    pub fn error(&self) -> f64 {
        self.truth - self.dist.mean()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvSkip {
    pub fold: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub scheme: Scheme,
    pub variant: u8,
    pub records: Vec<CvRecord>,
    pub skipped: Vec<CvSkip>,
}

/// Options for [`run_cv`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    /// Only observations whose day falls in this window are held out.
    pub eval_window: Option<CalendarWindow>,
    pub threads: usize,
}

/// Index of the grid cell nearest to `(lat, lon)`; ties go to the lower index.
fn nearest_cell(lats: &[f64], lons: &[f64], lat: f64, lon: f64) -> usize {
    let argmin = |v: &mut dyn Iterator<Item = f64>| {
        let mut best = (0, f64::INFINITY);
        for (i, d) in v.enumerate() {
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    };
    let r = argmin(&mut lats.iter().map(|a| (a - lat).abs()));
    let c = argmin(&mut lons.iter().map(|a| lon_diff(*a, lon).abs()));
    r * lons.len() + c
}

struct Task {
    cell: usize,
    block: usize,
    folds: Vec<(usize, Fold)>,
}

fn held_out_point<'a>(blocks: &'a [YearBlock], f: &Fold) -> (SpaceTimePoint, f64, &'a str) {
    let b = &blocks[f.held_out.0];
    let i = f.held_out.1;
    (b.points[i], b.values[i], &b.source_ids[i])
}

/// Maps data indices of `block` to positions in the window block `w`, which was
/// built by selecting a subset in order.
fn window_positions(block: &YearBlock, center: &SpaceTimePoint, field: &GridField) -> Vec<Option<usize>> {
    let mut pos = 0;
    (0..block.len())
        .map(|i| {
            if field.window.contains(center, &block.points[i]) {
                pos += 1;
                Some(pos - 1)
            } else {
                None
            }
        })
        .collect()
}

fn run_task(data: &[YearBlock], field: &GridField, model: &LocalModel, task: &Task) -> Result<Vec<(usize, PredictiveDist)>> {
    let cell = field.cell(task.cell).expect("task cell exists").cell;
    let center = SpaceTimePoint::new(cell.lat, cell.lon, field.grid.eval_time);
    let block = &data[task.block];
    let window = select_window(std::slice::from_ref(block), &center, &field.window).remove(0);
    let pos = window_positions(block, &center, field);
    let mode = field.variant.time_mode;
    let mut out = Vec::with_capacity(task.folds.len());
    match model {
        LocalModel::Student(p) => {
            let full = StudentKriging::new(&window, p, mode)?;
            let a_full = full.state().map(|s| s.a.clone());
            for (n, f) in &task.folds {
                let removed: Vec<usize> = f.removed_in_block().iter().filter_map(|&i| pos[i]).collect();
                let rest = window.without(&removed);
                let warm: Option<Vec<f64>> = a_full.as_ref().map(|a| {
                    (0..a.len()).filter(|i| !removed.contains(i)).map(|i| a[i]).collect()
                });
                let (target, _, _) = held_out_point(data, f);
                let sk = StudentKriging::with_warm_start(&rest, p, mode, warm.as_deref())?;
                out.push((*n, PredictiveDist::Student(sk.predict(&target))));
            }
        }
        _ => {
            let kernel = model_kernel(model, mode)?;
            let sigma2 = model.sigma2();
            // P = Σ⁻¹ of the full window; conditionals of removed subsets follow from P.
            let fac = if window.is_empty() {
                None
            } else {
                Some(factor_block(&window, kernel.as_ref(), sigma2, Jitter::default())?.1)
            };
            let prec = fac.as_ref().map(|f| f.inverse());
            let alpha = fac.as_ref().map(|f| f.solve(&window.values));
            for (n, f) in &task.folds {
                let in_window: Vec<usize> = f.removed_in_block().iter().filter_map(|&i| pos[i]).collect();
                let (target, _, _) = held_out_point(data, f);
                let dist = match (pos[f.held_out.1], &prec, &alpha) {
                    (Some(j), Some(p), Some(a)) => {
                        let s = &in_window;
                        let k = s.len();
                        let pss = faer::Mat::from_fn(k, k, |u, v| p[(s[u], s[v])]);
                        let pf = SpdFactor::new(&pss, 1.0, Jitter::default(), block.year)?;
                        let a_s: Vec<f64> = s.iter().map(|&i| a[i]).collect();
                        let corr = pf.solve(&a_s);
                        let jj = s.iter().position(|&i| i == j).expect("held-out is removed");
                        let mut e = vec![0.0; k];
                        e[jj] = 1.0;
                        let var = pf.solve(&e)[jj];
                        PredictiveDist::Gaussian(GaussianPredictive {
                            mean: window.values[j] - corr[jj],
                            variance: var.max(0.0),
                        })
                    }
                    _ => predict_with_model(&window.without(&in_window), model, mode, &target)?,
                };
                out.push((*n, dist));
            }
        }
    }
    Ok(out)
}

/// Cross-validates every observation (inside `opts.eval_window`) with the
/// parameters cached in `field` at its nearest grid cell.
///
/// Gaussian and reference models use exact block leave-out formulas from the
/// window's precision matrix; Student models recompute the Laplace mode per
/// fold.
pub fn run_cv(data: &[YearBlock], field: &GridField, scheme: Scheme, opts: &CvOptions) -> Result<CvResult> {
    let folds = partition(data, scheme)?;
    let lats = field.grid.lats();
    let lons = field.grid.lons();
    let mut skipped = Vec::new();
    let mut groups: BTreeMap<(usize, usize), Vec<(usize, Fold)>> = BTreeMap::new();
    for (n, f) in folds.into_iter().enumerate() {
        let (p, _, _) = held_out_point(data, &f);
        if let Some(w) = &opts.eval_window {
            if !w.contains(p.t) {
                continue;
            }
        }
        let c = nearest_cell(&lats, &lons, p.lat, p.lon);
        match field.cell(c) {
            Some(r) if r.status.has_model() => groups.entry((c, f.held_out.0)).or_default().push((n, f)),
            Some(r) => skipped.push(CvSkip {
                fold: n,
                reason: format!("cell {c} has status {}", r.status.label()),
            }),
            None => skipped.push(CvSkip {
                fold: n,
                reason: format!("cell {c} is masked or outside the grid"),
            }),
        }
    }
    let tasks: Vec<Task> = groups
        .into_iter()
        .map(|((cell, block), folds)| Task { cell, block, folds })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<Vec<(usize, PredictiveDist)>>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|t| {
                let model = field.cell(t.cell).and_then(|c| c.model).expect("fitted cell");
                run_task(data, field, &model, t)
            })
            .collect()
    });
    let mut records = Vec::new();
    for (t, r) in tasks.iter().zip(results) {
        match r {
            Ok(preds) => {
                for ((n, f), (_, dist)) in t.folds.iter().zip(preds) {
                    let (_, truth, id) = held_out_point(data, f);
                    records.push(CvRecord {
                        fold: *n,
                        year: data[f.held_out.0].year,
                        source_id: id.to_string(),
                        cell: t.cell,
                        variant: field.variant.id,
                        truth,
                        dist,
                    });
                }
            }
            Err(e) => {
                for (n, _) in &t.folds {
                    skipped.push(CvSkip {
                        fold: *n,
                        reason: e.to_string(),
                    });
                }
            }
        }
    }
    records.sort_by_key(|r| r.fold);
    skipped.sort_by_key(|s| s.fold);
    Ok(CvResult {
        scheme,
        variant: field.variant.id,
        records,
        skipped,
    })
}

/// RMSE, median and third quartile of absolute errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub n: usize,
    pub rmse: f64,
    pub mdae: f64,
    pub q3ae: f64,
}

impl MetricTable {
    pub fn from_errors(errors: &[f64]) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::EmptyInput("metrics need at least one error"));
        }
        let n = errors.len();
        let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / n as f64).sqrt();
        let mut abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
        sort_floats(&mut abs);
        Ok(MetricTable {
            n,
            rmse,
            mdae: quantile_sorted(&abs, 0.5),
            q3ae: quantile_sorted(&abs, 0.75),
        })
    }

    /// Percent improvement over `baseline` for `[rmse, mdae, q3ae]`.
    pub fn improvement_over(&self, baseline: &MetricTable) -> [f64; 3] {
        let pct = |a: f64, b: f64| 100.0 * (b - a) / b;
        [
            pct(self.rmse, baseline.rmse),
            pct(self.mdae, baseline.mdae),
            pct(self.q3ae, baseline.q3ae),
        ]
    }
}

pub fn point_metrics(cv: &CvResult) -> Result<MetricTable> {
    MetricTable::from_errors(&cv.records.iter().map(CvRecord::error).collect::<Vec<_>>())
}

/// Coverage and interval lengths at one confidence level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub level: f64,
    pub coverage: f64,
    pub mean_length: f64,
    pub median_length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    /// Standardized residuals (Gaussian) or `Φ⁻¹(PIT)` (Student), sorted.
    pub residuals: Vec<f64>,
    /// Folds whose residual is infinite (zero predictive variance, truth off the mean).
    pub infinite: Vec<usize>,
    /// `(q_theory, q_sample − q_theory)` on the grid `p = k/200`, `k = 1..199`.
    pub curve: Vec<(f64, f64)>,
    pub coverage: Vec<CoverageRow>,
    pub ks_statistic: f64,
    pub ks_critical_1pct: f64,
}

/// Probabilities of the quantile-difference curve.
pub fn quantile_grid() -> Vec<f64> {
    (1..200).map(|k| k as f64 / 200.0).collect()
}

/// Kolmogorov–Smirnov distance between sorted data and the standard normal.
pub fn ks_statistic(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = normal_cdf(x);
            ((i + 1) as f64 / n - c).max(c - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

/// Residual on the standard-normal scale and interval bounds per level.
fn record_diagnostics(r: &CvRecord, levels: &[f64], mc: &McOptions) -> Result<(f64, Vec<(f64, f64)>)> {
    match &r.dist {
        PredictiveDist::Gaussian(g) => {
            let sd = g.sd();
            let z = if sd > 0.0 {
                (r.truth - g.mean) / sd
            } else if r.truth == g.mean {
                0.0
            } else {
                (r.truth - g.mean).signum() * f64::INFINITY
            };
            let iv = levels
                .iter()
                .map(|l| {
                    let h = normal_quantile(0.5 + 0.5 * l) * sd;
                    (g.mean - h, g.mean + h)
                })
                .collect();
            Ok((z, iv))
        }
        PredictiveDist::Student(s) => {
            let sample = PredictiveSample::draw(s, mc)?;
            let n = sample.len() as f64;
            // keep Φ⁻¹ finite: PIT lies on the grid of sample ranks
            let u = sample.pit(r.truth).clamp(0.5 / n, 1.0 - 0.5 / n);
            let iv = levels.iter().map(|l| sample.interval(1.0 - l)).collect::<Result<_>>()?;
            Ok((normal_quantile(u), iv))
        }
    }
}

/// Quantile curve, coverage table and KS statistic of cross-validated predictions.
///
/// Student records draw `mc.samples` predictive samples each, seeded by fold.
pub fn calibration(cv: &CvResult, levels: &[f64], mc: &McOptions) -> Result<CalibrationReport> {
    if cv.records.is_empty() {
        return Err(Error::EmptyInput("calibration needs at least one record"));
    }
    if let Some(l) = levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
        return Err(Error::invalid(format!("confidence level {l} outside (0, 1)")));
    }
    let diag: Vec<(f64, Vec<(f64, f64)>)> = cv
        .records
        .par_iter()
        .map(|r| {
            let m = McOptions {
                samples: mc.samples,
                seed: derive_seed(mc.seed, r.fold as u64, r.year as i64),
            };
            record_diagnostics(r, levels, &m)
        })
        .collect::<Result<_>>()?;
    let infinite: Vec<usize> = cv
        .records
        .iter()
        .zip(&diag)
        .filter(|(_, d)| d.0.is_infinite())
        .map(|(r, _)| r.fold)
        .collect();
    let mut residuals: Vec<f64> = diag.iter().map(|d| d.0).collect();
    sort_floats(&mut residuals);
    let curve = quantile_grid()
        .into_iter()
        .map(|p| {
            let qt = normal_quantile(p);
            (qt, quantile_sorted(&residuals, p) - qt)
        })
        .collect();
    let coverage = levels
        .iter()
        .enumerate()
        .map(|(k, &level)| {
            let mut lengths: Vec<f64> = diag.iter().map(|d| d.1[k].1 - d.1[k].0).collect();
            let hits = cv
                .records
                .iter()
                .zip(&diag)
                .filter(|(r, d)| d.1[k].0 <= r.truth && r.truth <= d.1[k].1)
                .count();
            let mean_length = lengths.iter().sum::<f64>() / lengths.len() as f64;
            sort_floats(&mut lengths);
            CoverageRow {
                level,
                coverage: hits as f64 / cv.records.len() as f64,
                mean_length,
                median_length: quantile_sorted(&lengths, 0.5),
            }
        })
        .collect();
    Ok(CalibrationReport {
        ks_statistic: ks_statistic(&residuals),
        ks_critical_1pct: ks_critical_1pct(residuals.len()),
        residuals,
        infinite,
        curve,
        coverage,
    })
}
