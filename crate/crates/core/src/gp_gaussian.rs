//! Exact inference for the Gaussian-nugget model.
//!
//! Years are independent realizations of the same field, so the likelihood is
//! a sum over [`YearBlock`]s. Every solve goes through a Cholesky factor of
//! `K + σ²I`; nothing here forms an explicit inverse except the likelihood
//! gradient, which needs the full trace term.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::covariance::{cov_matrix_unchecked, CovParams, DistanceMode, ExpKernel, Kernel, SpaceTimePoint};
use crate::error::{Error, Result};
use crate::linalg::{dot, Jitter, SpdFactor};
use crate::optimize::{minimize, BfgsOptions, Termination};
use crate::stats::normal_quantile;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Observations of one year inside a window.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct YearBlock {
    pub year: i32,
    pub points: Vec<SpaceTimePoint>,
    /// Mean-subtracted values.
    pub values: Vec<f64>,
    pub source_ids: Vec<String>,
}

impl YearBlock {
    pub fn new(year: i32, points: Vec<SpaceTimePoint>, values: Vec<f64>, source_ids: Vec<String>) -> Result<Self> {
        if points.len() != values.len() || points.len() != source_ids.len() {
            return Err(Error::invalid(format!(
                "year {year}: {} points, {} values, {} source ids",
                points.len(),
                values.len(),
                source_ids.len()
            )));
        }
        Ok(YearBlock {
            year,
            points,
            values,
            source_ids,
        })
    }

    pub fn empty(year: i32) -> Self {
        YearBlock {
            year,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Keeps the observations at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> YearBlock {
        YearBlock {
            year: self.year,
            points: indices.iter().map(|&i| self.points[i]).collect(),
            values: indices.iter().map(|&i| self.values[i]).collect(),
            source_ids: indices.iter().map(|&i| self.source_ids[i].clone()).collect(),
        }
    }

    /// Drops the observations at the (sorted or unsorted) `indices`.
    pub fn without(&self, indices: &[usize]) -> YearBlock {
        let keep: Vec<usize> = (0..self.len()).filter(|i| !indices.contains(i)).collect();
        self.select(&keep)
    }

    pub fn push(&mut self, point: SpaceTimePoint, value: f64, source_id: impl Into<String>) {
        self.points.push(point);
        self.values.push(value);
        self.source_ids.push(source_id.into());
    }
}

pub fn total_obs(blocks: &[YearBlock]) -> usize {
    blocks.iter().map(YearBlock::len).sum()
}

/// Predictive distribution of `y* = f* + ε*` under the Gaussian nugget.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPredictive {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianPredictive {
    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// `K + σ²I` for a block.
fn noisy_cov<K: Kernel + ?Sized>(points: &[SpaceTimePoint], kernel: &K, sigma2: f64) -> Mat<f64> {
    let mut c = cov_matrix_unchecked(points, kernel);
    for i in 0..points.len() {
        c[(i, i)] += sigma2;
    }
    c
}

/// Factor of `K + σ²I` for one year.
pub(crate) fn factor_block<K: Kernel + ?Sized>(
    block: &YearBlock,
    kernel: &K,
    sigma2: f64,
    jitter: Jitter,
) -> Result<(Mat<f64>, SpdFactor)> {
    let c = noisy_cov(&block.points, kernel, sigma2);
    let f = SpdFactor::new(&c, kernel.variance() + sigma2, jitter, block.year)?;
    Ok((c, f))
}

fn block_loglik<K: Kernel + ?Sized>(block: &YearBlock, kernel: &K, sigma2: f64, jitter: Jitter) -> Result<f64> {
    if block.is_empty() {
        return Ok(0.0);
    }
    let (_, f) = factor_block(block, kernel, sigma2, jitter)?;
    let m = block.len() as f64;
    Ok(-0.5 * (f.logdet() + f.quad_form(&block.values) + m * LN_2PI))
}

/// Log-likelihood of independent yearly blocks under any kernel plus nugget.
pub fn loglik_with_kernel<K: Kernel + ?Sized>(blocks: &[YearBlock], kernel: &K, sigma2: f64, jitter: Jitter) -> Result<f64> {
    blocks.iter().map(|b| block_loglik(b, kernel, sigma2, jitter)).sum()
}

/// Multi-year Gaussian-nugget log-likelihood.
pub fn gauss_loglik(blocks: &[YearBlock], params: &CovParams, mode: DistanceMode) -> Result<f64> {
    if total_obs(blocks) == 0 {
        return Err(Error::EmptyInput("likelihood needs at least one observation"));
    }
    let kernel = ExpKernel::new(params, mode)?;
    loglik_with_kernel(blocks, &kernel, params.sigma2, Jitter::default())
}

/// Log-likelihood and its gradient with respect to
/// `[ln φ, ln θ_lat, ln θ_lon, ln θ_t, ln σ²]`.
pub fn gauss_loglik_grad(
    blocks: &[YearBlock],
    params: &CovParams,
    mode: DistanceMode,
    jitter: Jitter,
) -> Result<(f64, [f64; 5])> {
    let kernel = ExpKernel::new(params, mode)?;
    let mut total = 0.0;
    let mut grad = [0.0; 5];
    for block in blocks.iter().filter(|b| !b.is_empty()) {
        let m = block.len();
        let (c, f) = factor_block(block, &kernel, params.sigma2, jitter)?;
        let alpha = f.solve(&block.values);
        total += -0.5 * (f.logdet() + dot(&block.values, &alpha) + m as f64 * LN_2PI);
        // dℓ/dθ = ½ tr((ααᵀ − Σ⁻¹) ∂Σ/∂θ)
        let inv = f.inverse();
        let mut trace_q = 0.0;
        for j in 0..m {
            let q = alpha[j] * alpha[j] - inv[(j, j)];
            trace_q += q;
            grad[0] += 0.5 * q * params.phi;
            for k in (j + 1)..m {
                let q = alpha[j] * alpha[k] - inv[(j, k)];
                let kjk = c[(j, k)];
                // factor 2 for the symmetric pair, ½ from the trace formula
                grad[0] += q * kjk;
                let lags = kernel.scaled_sq_lags(&block.points[j], &block.points[k]);
                let d = (lags[0] + lags[1] + lags[2]).sqrt();
                if d > 0.0 {
                    let w = q * kjk / d;
                    grad[1] += w * lags[0];
                    grad[2] += w * lags[1];
                    grad[3] += w * lags[2];
                }
            }
        }
        grad[4] += 0.5 * params.sigma2 * trace_q;
    }
    Ok((total, grad))
}

/// Quasi-Newton settings and data requirements for maximum likelihood.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub optimizer: BfgsOptions,
    pub min_obs: usize,
    #[serde(skip)]
    pub jitter: Jitter,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            optimizer: BfgsOptions::default(),
            min_obs: 20,
            jitter: Jitter::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub loglik: f64,
    pub init_loglik: f64,
    /// Infinity norm of the log-parameter gradient at the returned point.
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianFit {
    pub params: CovParams,
    pub report: FitReport,
}

/// Pooled variance of all values about their overall mean.
pub(crate) fn pooled_variance(blocks: &[YearBlock]) -> f64 {
    let n = total_obs(blocks);
    if n < 2 {
        return 0.0;
    }
    let mean = blocks.iter().flat_map(|b| &b.values).sum::<f64>() / n as f64;
    blocks
        .iter()
        .flat_map(|b| &b.values)
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / (n - 1) as f64
}

/// Default starting point: half the pooled variance each for `φ` and `σ²`,
/// 5° ranges and 5 days.
pub fn default_init(blocks: &[YearBlock]) -> CovParams {
    let half = 0.5 * pooled_variance(blocks);
    CovParams {
        phi: half,
        theta_lat: 5.0,
        theta_lon: 5.0,
        theta_t: 5.0,
        sigma2: half,
    }
}

pub(crate) fn check_fit_data(blocks: &[YearBlock], min_obs: usize) -> Result<()> {
    let n = total_obs(blocks);
    if n < min_obs.max(2) {
        return Err(Error::InsufficientData {
            found: n,
            required: min_obs.max(2),
        });
    }
    let first = blocks.iter().flat_map(|b| &b.values).next().copied().unwrap_or(0.0);
    if blocks.iter().flat_map(|b| &b.values).all(|v| *v == first) {
        return Err(Error::InsufficientVariance(n));
    }
    Ok(())
}

/// Maximum-likelihood fit over the five log-parameters.
///
/// Non-convergence is reported in [`FitReport`], not as an error; the best
/// iterate is returned either way.
pub fn fit_mle_gaussian(
    blocks: &[YearBlock],
    init: Option<CovParams>,
    mode: DistanceMode,
    opts: &FitOptions,
) -> Result<GaussianFit> {
    check_fit_data(blocks, opts.min_obs)?;
    let init = init.unwrap_or_else(|| default_init(blocks));
    init.validate()?;
    if init.sigma2 <= 0.0 {
        return Err(Error::invalid("initial sigma2 must be positive for a log-parameter fit"));
    }
    let x0 = init.to_log();
    let objective = |x: &[f64]| {
        let p = CovParams::from_log(x);
        gauss_loglik_grad(blocks, &p, mode, opts.jitter)
            .ok()
            .map(|(l, g)| (-l, g.iter().map(|v| -v).collect()))
    };
    let res = minimize(objective, &x0, &opts.optimizer)?;
    let init_loglik = gauss_loglik_grad(blocks, &init, mode, opts.jitter)?.0;
    let report = FitReport {
        loglik: -res.f,
        init_loglik,
        grad_norm: res.grad_norm(),
        iterations: res.iterations,
        evaluations: res.evaluations,
        termination: res.termination,
        converged: res.converged(),
    };
    if !report.converged {
        log::debug!("Gaussian fit stopped with {:?} after {} iterations", res.termination, res.iterations);
    }
    Ok(GaussianFit {
        params: CovParams::from_log(&res.x),
        report,
    })
}

/// Conditioned kriging system for one block, reusable across targets.
pub struct Kriging<'a, K: Kernel + ?Sized> {
    block: &'a YearBlock,
    kernel: &'a K,
    sigma2: f64,
    factor: Option<SpdFactor>,
    alpha: Vec<f64>,
}

impl<'a, K: Kernel + ?Sized> Kriging<'a, K> {
    pub fn new(block: &'a YearBlock, kernel: &'a K, sigma2: f64, jitter: Jitter) -> Result<Self> {
        if block.is_empty() {
            return Ok(Kriging {
                block,
                kernel,
                sigma2,
                factor: None,
                alpha: Vec::new(),
            });
        }
        let (_, f) = factor_block(block, kernel, sigma2, jitter)?;
        let alpha = f.solve(&block.values);
        Ok(Kriging {
            block,
            kernel,
            sigma2,
            factor: Some(f),
            alpha,
        })
    }

    pub fn predict(&self, target: &SpaceTimePoint) -> GaussianPredictive {
        let prior = self.kernel.variance() + self.sigma2;
        let Some(f) = &self.factor else {
            return GaussianPredictive {
                mean: 0.0,
                variance: prior,
            };
        };
        let kstar: Vec<f64> = self.block.points.iter().map(|p| self.kernel.cov(target, p)).collect();
        let mean = dot(&kstar, &self.alpha);
        let variance = (prior - f.quad_form(&kstar)).clamp(0.0, prior);
        GaussianPredictive { mean, variance }
    }
}

/// Kriging mean and predictive variance at `target` from one block.
pub fn predict_gaussian(
    target: &SpaceTimePoint,
    block: &YearBlock,
    params: &CovParams,
    mode: DistanceMode,
) -> Result<GaussianPredictive> {
    let kernel = ExpKernel::new(params, mode)?;
    Ok(Kriging::new(block, &kernel, params.sigma2, Jitter::default())?.predict(target))
}

/// Central `1 − alpha` interval `mean ± z · sd`.
pub fn gaussian_interval(pred: &GaussianPredictive, alpha: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if pred.variance < 0.0 {
        return Err(Error::invalid("negative predictive variance"));
    }
    let half = normal_quantile(1.0 - 0.5 * alpha) * pred.variance.sqrt();
    Ok((pred.mean - half, pred.mean + half))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimize::central_gradient;

    fn p(phi: f64, s2: f64) -> CovParams {
        CovParams::new(phi, 2.0, 3.0, 4.0, s2).unwrap()
    }

    fn block(year: i32, pts: &[(f64, f64, f64)], vals: &[f64]) -> YearBlock {
        YearBlock::new(
            year,
            pts.iter().map(|&(a, b, c)| SpaceTimePoint::new(a, b, c)).collect(),
            vals.to_vec(),
            (0..vals.len()).map(|i| format!("f{i}")).collect(),
        )
        .unwrap()
    }

    /// Dense Gaussian elimination inverse for tiny matrices.
    fn brute_inverse(a: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
        let n = a.len();
        let mut m: Vec<Vec<f64>> = a
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut row = r.clone();
                row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
                row
            })
            .collect();
        let mut det = 1.0;
        for c in 0..n {
            let piv = (c..n).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
            if piv != c {
                m.swap(piv, c);
                det = -det;
            }
            det *= m[c][c];
            let d = m[c][c];
            for v in m[c].iter_mut() {
                *v /= d;
            }
            for r in 0..n {
                if r != c {
                    let f = m[r][c];
                    for k in 0..2 * n {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
        (m.into_iter().map(|r| r[n..].to_vec()).collect(), det)
    }

    #[test]
    fn scalar_zero_observation() {
        let b = block(0, &[(0.0, 0.0, 0.0)], &[0.0]);
        let prm = p(1.5, 0.5);
        let l = gauss_loglik(&[b], &prm, DistanceMode::SpaceTime).unwrap();
        let want = -0.5 * (2.0f64.ln() + LN_2PI);
        assert!((l - want).abs() < 1e-14);
    }

    #[test]
    fn additive_over_years() {
        let a = block(1, &[(0.0, 0.0, 0.0), (1.0, 1.0, 3.0)], &[0.4, -0.2]);
        let b = block(2, &[(2.0, -1.0, 1.0), (0.5, 0.5, 0.5), (1.0, 2.0, 9.0)], &[1.0, 0.3, -0.7]);
        let prm = p(1.0, 0.2);
        let m = DistanceMode::SpaceTime;
        let joint = gauss_loglik(&[a.clone(), b.clone()], &prm, m).unwrap();
        let sep = gauss_loglik(&[a], &prm, m).unwrap() + gauss_loglik(&[b], &prm, m).unwrap();
        assert!((joint - sep).abs() < 1e-12);
    }

    #[test]
    fn matches_dense_density() {
        let b = block(0, &[(0.0, 0.0, 0.0), (1.0, 2.0, 3.0), (-1.0, 0.5, 7.0)], &[0.3, -1.1, 0.8]);
        let prm = p(1.3, 0.4);
        let k = ExpKernel::new(&prm, DistanceMode::SpaceTime).unwrap();
        let sig: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..3).map(|j| k.cov(&b.points[i], &b.points[j]) + if i == j { 0.4 } else { 0.0 }).collect())
            .collect();
        let (inv, det) = brute_inverse(&sig);
        let q: f64 = (0..3).map(|i| (0..3).map(|j| b.values[i] * inv[i][j] * b.values[j]).sum::<f64>()).sum();
        let want = -0.5 * (det.ln() + q + 3.0 * LN_2PI);
        let got = gauss_loglik(&[b], &prm, DistanceMode::SpaceTime).unwrap();
        assert!(((got - want) / want).abs() < 1e-8);
    }

    #[test]
    fn empty_blocks_contribute_nothing() {
        let a = block(1, &[(0.0, 0.0, 0.0)], &[0.4]);
        let prm = p(1.0, 0.2);
        let m = DistanceMode::Spatial;
        let with = gauss_loglik(&[a.clone(), YearBlock::empty(5)], &prm, m).unwrap();
        assert_eq!(with, gauss_loglik(&[a], &prm, m).unwrap());
        assert!(gauss_loglik(&[YearBlock::empty(5)], &prm, m).is_err());
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let b = block(
            0,
            &[(0.0, 0.0, 0.0), (1.0, 2.0, 3.0), (-1.0, 0.5, 7.0), (0.3, -2.0, 1.0)],
            &[0.3, -1.1, 0.8, 0.1],
        );
        let b2 = block(1, &[(0.5, 0.5, 2.0), (1.5, -1.0, 4.0)], &[0.9, 0.2]);
        let blocks = [b, b2];
        for mode in [DistanceMode::SpaceTime, DistanceMode::Spatial] {
            let x = p(1.3, 0.4).to_log();
            let (_, g) = gauss_loglik_grad(&blocks, &CovParams::from_log(&x), mode, Jitter::default()).unwrap();
            let fd = central_gradient(|x| gauss_loglik(&blocks, &CovParams::from_log(x), mode).ok(), &x, 1e-6).unwrap();
            for i in 0..5 {
                assert!((g[i] - fd[i]).abs() < 1e-6, "{mode:?} {i}: {} vs {}", g[i], fd[i]);
            }
        }
    }

    #[test]
    fn prediction_examples() {
        let prm = p(2.0, 0.5);
        let m = DistanceMode::SpaceTime;
        let t = SpaceTimePoint::new(1.0, 1.0, 1.0);
        let empty = predict_gaussian(&t, &YearBlock::empty(0), &prm, m).unwrap();
        assert_eq!(empty, GaussianPredictive { mean: 0.0, variance: 2.5 });

        let one = block(0, &[(1.0, 1.0, 1.0)], &[1.2]);
        let pr = predict_gaussian(&t, &one, &prm, m).unwrap();
        assert!((pr.mean - 2.0 / 2.5 * 1.2).abs() < 1e-14);
        assert!((pr.variance - (2.5 - 4.0 / 2.5)).abs() < 1e-14);

        let exact = p(2.0, 0.0);
        let two = block(0, &[(1.0, 1.0, 1.0), (3.0, 0.0, 5.0)], &[1.2, -0.4]);
        let pr = predict_gaussian(&t, &two, &exact, m).unwrap();
        assert!((pr.mean - 1.2).abs() < 1e-12);
        assert!(pr.variance.abs() < 1e-12);
    }

    #[test]
    fn interval_examples() {
        let (lo, hi) = gaussian_interval(&GaussianPredictive { mean: 0.0, variance: 1.0 }, 0.05).unwrap();
        assert!((hi - 1.95996).abs() < 1e-5 && (lo + 1.95996).abs() < 1e-5);
        let (lo, hi) = gaussian_interval(&GaussianPredictive { mean: 3.0, variance: 0.0 }, 0.05).unwrap();
        assert_eq!((lo, hi), (3.0, 3.0));
        let w1 = gaussian_interval(&GaussianPredictive { mean: 0.0, variance: 1.0 }, 0.1).unwrap();
        let w4 = gaussian_interval(&GaussianPredictive { mean: 0.0, variance: 4.0 }, 0.1).unwrap();
        assert!(((w4.1 - w4.0) - 2.0 * (w1.1 - w1.0)).abs() < 1e-12);
        for a in [0.0, 1.0, -0.1, 1.5] {
            assert!(gaussian_interval(&GaussianPredictive { mean: 0.0, variance: 1.0 }, a).is_err());
        }
    }

    #[test]
    fn fit_rejects_degenerate_windows() {
        let pts: Vec<(f64, f64, f64)> = (0..30).map(|i| (i as f64 * 0.1, 0.0, 0.0)).collect();
        let flat = block(0, &pts, &[2.0; 30]);
        assert!(matches!(
            fit_mle_gaussian(&[flat], None, DistanceMode::Spatial, &FitOptions::default()),
            Err(Error::InsufficientVariance(30))
        ));
        let few = block(0, &pts[..5], &[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!(matches!(
            fit_mle_gaussian(&[few], None, DistanceMode::Spatial, &FitOptions::default()),
            Err(Error::InsufficientData { found: 5, required: 20 })
        ));
    }

    #[test]
    fn selection_helpers() {
        let b = block(3, &[(0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (2.0, 0.0, 0.0)], &[1.0, 2.0, 3.0]);
        assert_eq!(b.without(&[1]).values, vec![1.0, 3.0]);
        assert_eq!(b.select(&[2, 0]).values, vec![3.0, 1.0]);
        assert!(YearBlock::new(0, vec![], vec![1.0], vec![]).is_err());
    }
}
