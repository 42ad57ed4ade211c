//! Laplace-approximated inference for the Student-t nugget model.
//!
//! The latent field `f` is a zero-mean GP and `y − f` is `σ·t_ν`. The posterior
//! of `f` is replaced by a Gaussian at its mode. All solves use
//! `B = I + W½ K W½`, which stays well conditioned even when `K` is nearly
//! singular, so `K⁻¹` is never formed.

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::covariance::{cov_matrix_unchecked, CovParams, DistanceMode, ExpKernel, Kernel, SpaceTimePoint};
use crate::error::{Error, Result};
use crate::gp_gaussian::{check_fit_data, fit_mle_gaussian, total_obs, FitOptions, FitReport, YearBlock};
use crate::linalg::{dot, mat_vec, Jitter, SpdFactor};
use crate::optimize::{central_gradient, minimize};
use crate::stats::{quantile_sorted, sort_floats, student_logpdf};

/// Covariance parameters plus degrees of freedom; `cov.sigma2` is the squared
/// Student scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudentParams {
    pub cov: CovParams,
    pub nu: f64,
}

impl StudentParams {
    pub fn new(cov: CovParams, nu: f64) -> Result<Self> {
        let p = StudentParams { cov, nu };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.cov.validate()?;
        if !(self.cov.sigma2 > 0.0) {
            return Err(Error::invalid("Student scale must be positive"));
        }
        if !(self.nu > 1.0) || self.nu.is_nan() {
            return Err(Error::invalid(format!("nu must exceed 1, got {}", self.nu)));
        }
        Ok(())
    }

    pub fn scale(&self) -> f64 {
        self.cov.sigma2.sqrt()
    }

    /// `[ln φ, ln θ_lat, ln θ_lon, ln θ_t, ln σ, ln(ν − 1)]`.
    pub fn to_log(&self) -> [f64; 6] {
        let c = &self.cov;
        [
            c.phi.ln(),
            c.theta_lat.ln(),
            c.theta_lon.ln(),
            c.theta_t.ln(),
            0.5 * c.sigma2.ln(),
            (self.nu - 1.0).ln(),
        ]
    }

    pub fn from_log(x: &[f64]) -> Self {
        StudentParams {
            cov: CovParams {
                phi: x[0].exp(),
                theta_lat: x[1].exp(),
                theta_lon: x[2].exp(),
                theta_t: x[3].exp(),
                sigma2: (2.0 * x[4]).exp(),
            },
            nu: 1.0 + x[5].exp(),
        }
    }
}

/// Newton controls for the mode search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeOptions {
    pub max_iter: usize,
    /// Tolerance per observation: stop once `‖∇Ψ‖ < tol · m` or the Newton
    /// decrement falls below `(tol · m)²`.
    pub tol_per_obs: f64,
}

impl Default for ModeOptions {
    fn default() -> Self {
        ModeOptions {
            max_iter: 100,
            tol_per_obs: 1e-8,
        }
    }
}

/// Laplace approximation of one block at the posterior mode.
#[derive(Clone, Debug, PartialEq)]
pub struct LaplaceState {
    pub f_hat: Vec<f64>,
    /// Negative Hessian of the log likelihood at the mode, floored at 0.
    pub w: Vec<f64>,
    /// `K⁻¹ f̂`, equal to the likelihood gradient at the mode.
    pub a: Vec<f64>,
    pub log_q: f64,
    /// `Ψ(f̂)` without constants in `K`.
    pub psi: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    /// Number of `W` entries that were negative before flooring.
    pub floored: usize,
}

#[derive(Clone, Copy)]
struct Lik {
    nu: f64,
    s2: f64,
    scale: f64,
}

impl Lik {
    fn new(p: &StudentParams) -> Self {
        Lik {
            nu: p.nu,
            s2: p.cov.sigma2,
            scale: p.scale(),
        }
    }

    fn logp(&self, r: f64) -> f64 {
        student_logpdf(r, self.nu, self.scale)
    }

    /// `∂/∂f log p(y|f)` at residual `r = y − f`.
    fn grad(&self, r: f64) -> f64 {
        (self.nu + 1.0) * r / (self.nu * self.s2 + r * r)
    }

    /// `−∂²/∂f² log p(y|f)`, may be negative.
    fn neg_hess(&self, r: f64) -> f64 {
        let d = self.nu * self.s2 + r * r;
        (self.nu + 1.0) * (self.nu * self.s2 - r * r) / (d * d)
    }
}

/// `B = I + W½ K W½` and its factor.
fn b_factor(k: &Mat<f64>, sw: &[f64], year: i32) -> Result<SpdFactor> {
    let m = sw.len();
    let b = Mat::from_fn(m, m, |i, j| sw[i] * k[(i, j)] * sw[j] + if i == j { 1.0 } else { 0.0 });
    SpdFactor::new(&b, 1.0, Jitter::default(), year)
}

fn psi_of(lik: &Lik, y: &[f64], f: &[f64], a: &[f64]) -> f64 {
    y.iter().zip(f).map(|(yi, fi)| lik.logp(yi - fi)).sum::<f64>() - 0.5 * dot(a, f)
}

struct Newton {
    f: Vec<f64>,
    a: Vec<f64>,
    psi: f64,
    grad_norm: f64,
    iterations: usize,
    converged: bool,
}

/// Damped Newton iteration in the `a = K⁻¹f` parameterization.
fn newton(k: &Mat<f64>, y: &[f64], lik: &Lik, a0: Vec<f64>, opts: &ModeOptions, year: i32) -> Result<Newton> {
    let m = y.len();
    let tol = opts.tol_per_obs * m as f64;
    let mut a = a0;
    let mut f = mat_vec(k, &a);
    let mut psi = psi_of(lik, y, &f, &a);
    let mut iterations = 0;
    loop {
        let r: Vec<f64> = y.iter().zip(&f).map(|(yi, fi)| yi - fi).collect();
        let dlp: Vec<f64> = r.iter().map(|&ri| lik.grad(ri)).collect();
        let grad_norm = dlp.iter().zip(&a).map(|(g, ai)| (g - ai) * (g - ai)).sum::<f64>().sqrt();
        if grad_norm < tol || iterations >= opts.max_iter || !psi.is_finite() {
            let converged = grad_norm < tol && psi.is_finite();
            return Ok(Newton {
                f,
                a,
                psi,
                grad_norm,
                iterations,
                converged,
            });
        }
        iterations += 1;
        let w: Vec<f64> = r.iter().map(|&ri| lik.neg_hess(ri).max(0.0)).collect();
        let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
        let lb = b_factor(k, &sw, year)?;
        let b: Vec<f64> = (0..m).map(|i| w[i] * f[i] + dlp[i]).collect();
        let kb = mat_vec(k, &b);
        let rhs: Vec<f64> = (0..m).map(|i| sw[i] * kb[i]).collect();
        let c = lb.solve(&rhs);
        let a_new: Vec<f64> = (0..m).map(|i| b[i] - sw[i] * c[i]).collect();
        let da: Vec<f64> = a_new.iter().zip(&a).map(|(n, o)| n - o).collect();
        let df = mat_vec(k, &da);
        // Newton decrement gᵀ(W + K⁻¹)⁻¹g: invariant to the nugget scale,
        // unlike the gradient norm, which grows like 1/scale²
        let decrement: f64 = (0..m).map(|i| (dlp[i] - a[i]) * df[i]).sum();
        if decrement.is_finite() && decrement < tol * tol {
            return Ok(Newton {
                f,
                a,
                psi,
                grad_norm,
                iterations,
                converged: true,
            });
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let a_try: Vec<f64> = (0..m).map(|i| a[i] + step * da[i]).collect();
            let f_try: Vec<f64> = (0..m).map(|i| f[i] + step * df[i]).collect();
            let p = psi_of(lik, y, &f_try, &a_try);
            if p >= psi {
                a = a_try;
                f = f_try;
                psi = p;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no ascent direction left at working precision
            let r: Vec<f64> = y.iter().zip(&f).map(|(yi, fi)| yi - fi).collect();
            let grad_norm = r
                .iter()
                .zip(&a)
                .map(|(&ri, ai)| (lik.grad(ri) - ai).powi(2))
                .sum::<f64>()
                .sqrt();
            return Ok(Newton {
                f,
                a,
                psi,
                grad_norm,
                iterations,
                converged: grad_norm < tol,
            });
        }
    }
}

fn finish(k: &Mat<f64>, y: &[f64], lik: &Lik, n: Newton, year: i32) -> Result<(LaplaceState, SpdFactor)> {
    let r: Vec<f64> = y.iter().zip(&n.f).map(|(yi, fi)| yi - fi).collect();
    let raw: Vec<f64> = r.iter().map(|&ri| lik.neg_hess(ri)).collect();
    let floored = raw.iter().filter(|v| **v < 0.0).count();
    let w: Vec<f64> = raw.iter().map(|v| v.max(0.0)).collect();
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let lb = b_factor(k, &sw, year)?;
    let log_q = n.psi - 0.5 * lb.logdet();
    if !log_q.is_finite() {
        return Err(Error::ModeFailure(format!("year {year}: non-finite Laplace likelihood")));
    }
    let state = LaplaceState {
        f_hat: n.f,
        w,
        a: n.a,
        log_q,
        psi: n.psi,
        grad_norm: n.grad_norm,
        iterations: n.iterations,
        floored,
    };
    Ok((state, lb))
}

/// Starting vectors tried in order: the caller's warm start (if any), `f = 0`,
/// and the Gaussian-limit solution `a = (K + σ²I)⁻¹ y`.
fn mode_with_factor(
    k: &Mat<f64>,
    block: &YearBlock,
    params: &StudentParams,
    warm: Option<&[f64]>,
    opts: &ModeOptions,
) -> Result<(LaplaceState, SpdFactor)> {
    let y = &block.values;
    let m = y.len();
    if m == 0 {
        return Err(Error::EmptyInput("mode search needs at least one observation"));
    }
    let lik = Lik::new(params);
    let mut best: Option<Newton> = None;
    let mut diagnostics = Vec::new();
    let mut consider = |n: Newton, label: &str, best: &mut Option<Newton>| -> bool {
        if n.converged {
            let better = best.as_ref().is_none_or(|b| n.psi > b.psi);
            if better {
                *best = Some(n);
            }
            true
        } else {
            diagnostics.push(format!(
                "{label}: |grad| {:.3e} after {} iterations, psi {:.6e}",
                n.grad_norm, n.iterations, n.psi
            ));
            false
        }
    };
    if let Some(a0) = warm.filter(|a| a.len() == m) {
        let n = newton(k, y, &lik, a0.to_vec(), opts, block.year)?;
        if consider(n, "warm start", &mut best) {
            return finish(k, y, &lik, best.unwrap(), block.year);
        }
    }
    let n = newton(k, y, &lik, vec![0.0; m], opts, block.year)?;
    if !consider(n, "f = 0", &mut best) {
        let mut c = k.clone();
        for i in 0..m {
            c[(i, i)] += params.cov.sigma2;
        }
        let g = SpdFactor::new(&c, params.cov.phi + params.cov.sigma2, Jitter::default(), block.year)?;
        let n = newton(k, y, &lik, g.solve(y), opts, block.year)?;
        consider(n, "Gaussian limit", &mut best);
    }
    match best {
        Some(n) => finish(k, y, &lik, n, block.year),
        None => Err(Error::ModeFailure(format!(
            "year {} ({m} obs, nu {:.4}, scale {:.4e}): {}",
            block.year,
            params.nu,
            params.scale(),
            diagnostics.join("; ")
        ))),
    }
}

fn block_kernel_matrix(block: &YearBlock, params: &StudentParams, mode: DistanceMode) -> Result<(ExpKernel, Mat<f64>)> {
    params.validate()?;
    let kernel = ExpKernel::new(&params.cov, mode)?;
    let k = cov_matrix_unchecked(&block.points, &kernel);
    Ok((kernel, k))
}

/// Posterior mode of the latent field for one block.
pub fn find_mode(block: &YearBlock, params: &StudentParams, mode: DistanceMode) -> Result<LaplaceState> {
    find_mode_with(block, params, mode, None, &ModeOptions::default())
}

/// [`find_mode`] with an optional warm start `a₀ = K⁻¹f₀` and explicit controls.
pub fn find_mode_with(
    block: &YearBlock,
    params: &StudentParams,
    mode: DistanceMode,
    warm: Option<&[f64]>,
    opts: &ModeOptions,
) -> Result<LaplaceState> {
    let (_, k) = block_kernel_matrix(block, params, mode)?;
    Ok(mode_with_factor(&k, block, params, warm, opts)?.0)
}

/// Laplace-approximated log-likelihood summed over years.
pub fn laplace_loglik(blocks: &[YearBlock], params: &StudentParams, mode: DistanceMode) -> Result<f64> {
    if total_obs(blocks) == 0 {
        return Err(Error::EmptyInput("likelihood needs at least one observation"));
    }
    let mut total = 0.0;
    for b in blocks.iter().filter(|b| !b.is_empty()) {
        total += find_mode(b, params, mode)?.log_q;
    }
    Ok(total)
}

/// Starting point for the Student fit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StudentInit {
    Params(StudentParams),
    /// Covariance from a Gaussian-nugget fit, `ν = 4`, scale matched to the
    /// Gaussian nugget variance.
    FromGaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudentFitOptions {
    pub base: FitOptions,
    pub mode: ModeOptions,
    /// Finite-difference step in log-parameter space.
    pub fd_step: f64,
}

impl Default for StudentFitOptions {
    fn default() -> Self {
        let mut base = FitOptions::default();
        // finite-difference gradients cannot resolve the default tolerance
        base.optimizer.grad_tol = 1e-5;
        StudentFitOptions {
            base,
            mode: ModeOptions::default(),
            fd_step: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudentFit {
    pub params: StudentParams,
    pub report: FitReport,
    /// Total Newton failures encountered during the search (points treated as undefined).
    pub mode_failures: usize,
}

const INIT_NU: f64 = 4.0;

/// Student parameters from a Gaussian fit: same covariance, `ν = 4`, and
/// `σ²` chosen so the Student nugget variance equals the Gaussian one.
pub fn student_init_from_gaussian(cov: &CovParams) -> StudentParams {
    let mut c = *cov;
    c.sigma2 = (cov.sigma2 * (INIT_NU - 2.0) / INIT_NU).max(1e-6 * cov.phi);
    StudentParams { cov: c, nu: INIT_NU }
}

struct CachedLik<'a> {
    blocks: &'a [YearBlock],
    mode: DistanceMode,
    opts: ModeOptions,
    warm: Vec<Option<Vec<f64>>>,
    failures: usize,
}

impl CachedLik<'_> {
    /// Log-likelihood at `x`; warm starts come from the last center evaluation.
    fn eval(&mut self, x: &[f64], update: bool) -> Option<f64> {
        let p = StudentParams::from_log(x);
        if p.validate().is_err() {
            return None;
        }
        let kernel = ExpKernel::new(&p.cov, self.mode).ok()?;
        let mut total = 0.0;
        let mut new_warm = Vec::with_capacity(self.blocks.len());
        for (b, w) in self.blocks.iter().zip(&self.warm) {
            if b.is_empty() {
                new_warm.push(None);
                continue;
            }
            let k = cov_matrix_unchecked(&b.points, &kernel);
            match mode_with_factor(&k, b, &p, w.as_deref(), &self.opts) {
                Ok((s, _)) => {
                    total += s.log_q;
                    new_warm.push(Some(s.a));
                }
                Err(e) => {
                    log::debug!("Laplace evaluation failed: {e}");
                    self.failures += 1;
                    return None;
                }
            }
        }
        if update {
            self.warm = new_warm;
        }
        Some(total)
    }
}

/// Maximizes the Laplace log-likelihood over `log(φ, θ_lat, θ_lon, θ_t, σ)` and
/// `log(ν − 1)` with central finite-difference gradients.
pub fn fit_mle_student(
    blocks: &[YearBlock],
    init: StudentInit,
    mode: DistanceMode,
    opts: &StudentFitOptions,
) -> Result<StudentFit> {
    check_fit_data(blocks, opts.base.min_obs)?;
    let init = match init {
        StudentInit::Params(p) => p,
        StudentInit::FromGaussian => {
            let g = fit_mle_gaussian(blocks, None, mode, &opts.base)?;
            student_init_from_gaussian(&g.params)
        }
    };
    init.validate()?;
    let x0 = init.to_log();
    let init_loglik = laplace_loglik(blocks, &init, mode)?;
    let state = std::cell::RefCell::new(CachedLik {
        blocks,
        mode,
        opts: opts.mode,
        warm: vec![None; blocks.len()],
        failures: 0,
    });
    let h = opts.fd_step;
    let objective = |x: &[f64]| {
        let mut st = state.borrow_mut();
        let f = -st.eval(x, true)?;
        let g = central_gradient(|z: &[f64]| st.eval(z, false).map(|v| -v), x, h)?;
        Some((f, g))
    };
    let res = minimize(objective, &x0, &opts.base.optimizer)?;
    let params = StudentParams::from_log(&res.x);
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
        log::debug!("Student fit stopped with {:?} after {} iterations", res.termination, res.iterations);
    }
    let mode_failures = state.borrow().failures;
    Ok(StudentFit {
        params,
        report,
        mode_failures,
    })
}

/// Approximate predictive distribution of `y* = f* + ε*`: `f*` Gaussian,
/// `ε*` scaled Student-t.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudentPredictive {
    pub f_mean: f64,
    pub f_var: f64,
    pub scale: f64,
    pub dof: f64,
}

impl StudentPredictive {
    /// Variance of `f* + ε*`; infinite for `ν ≤ 2`.
    pub fn total_variance(&self) -> f64 {
        if self.dof > 2.0 {
            self.f_var + self.scale * self.scale * self.dof / (self.dof - 2.0)
        } else {
            f64::INFINITY
        }
    }
}

/// Laplace predictive system for one block, reusable across targets.
pub struct StudentKriging<'a> {
    block: &'a YearBlock,
    kernel: ExpKernel,
    params: StudentParams,
    state: Option<(LaplaceState, SpdFactor)>,
}

impl<'a> StudentKriging<'a> {
    pub fn new(block: &'a YearBlock, params: &StudentParams, mode: DistanceMode) -> Result<Self> {
        Self::with_warm_start(block, params, mode, None)
    }

    pub fn with_warm_start(
        block: &'a YearBlock,
        params: &StudentParams,
        mode: DistanceMode,
        warm: Option<&[f64]>,
    ) -> Result<Self> {
        let (kernel, k) = block_kernel_matrix(block, params, mode)?;
        let state = if block.is_empty() {
            None
        } else {
            Some(mode_with_factor(&k, block, params, warm, &ModeOptions::default())?)
        };
        Ok(StudentKriging {
            block,
            kernel,
            params: *params,
            state,
        })
    }

    pub fn state(&self) -> Option<&LaplaceState> {
        self.state.as_ref().map(|(s, _)| s)
    }

    pub fn predict(&self, target: &SpaceTimePoint) -> StudentPredictive {
        let phi = self.params.cov.phi;
        let mut out = StudentPredictive {
            f_mean: 0.0,
            f_var: phi,
            scale: self.params.scale(),
            dof: self.params.nu,
        };
        if let Some((s, lb)) = &self.state {
            let kstar: Vec<f64> = self.block.points.iter().map(|p| self.kernel.cov(target, p)).collect();
            out.f_mean = dot(&kstar, &s.a);
            // k*ᵀ(K + W⁻¹)⁻¹k* = ‖L_B⁻¹ W½ k*‖²; floored entries drop out
            let v: Vec<f64> = kstar.iter().zip(&s.w).map(|(k, w)| k * w.sqrt()).collect();
            out.f_var = (phi - lb.quad_form(&v)).clamp(0.0, phi);
        }
        out
    }
}

/// Laplace predictive distribution at `target` from one block.
pub fn predict_student(
    target: &SpaceTimePoint,
    block: &YearBlock,
    params: &StudentParams,
    mode: DistanceMode,
) -> Result<StudentPredictive> {
    Ok(StudentKriging::new(block, params, mode)?.predict(target))
}

/// Monte Carlo sample size and seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct McOptions {
    pub samples: usize,
    pub seed: u64,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            samples: 100_000,
            seed: 0,
        }
    }
}

impl McOptions {
    pub fn with_seed(seed: u64) -> Self {
        McOptions {
            seed,
            ..Default::default()
        }
    }
}

/// Seed for a Monte Carlo draw tied to `(cell, year)` under a run seed.
pub fn derive_seed(run_seed: u64, cell: u64, year: i64) -> u64 {
    // splitmix64 finalizer over a simple combination
    let mut z = run_seed
        .wrapping_add(cell.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((year as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sorted draws of `(Z₁ − f_mean) + Z₂`.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveSample {
    pub f_mean: f64,
    offsets: Vec<f64>,
}

impl PredictiveSample {
    pub fn draw(pred: &StudentPredictive, mc: &McOptions) -> Result<Self> {
        if mc.samples < 2 {
            return Err(Error::invalid("Monte Carlo needs at least two samples"));
        }
        if !(pred.dof > 0.0) || !(pred.scale >= 0.0) || !(pred.f_var >= 0.0) {
            return Err(Error::invalid("invalid Student predictive distribution"));
        }
        let t = StudentT::new(pred.dof).map_err(|e| Error::invalid(e.to_string()))?;
        let mut rng = ChaCha12Rng::seed_from_u64(mc.seed);
        let sd = pred.f_var.sqrt();
        let mut offsets: Vec<f64> = (0..mc.samples)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                let e: f64 = t.sample(&mut rng);
                sd * z + pred.scale * e
            })
            .collect();
        sort_floats(&mut offsets);
        Ok(PredictiveSample {
            f_mean: pred.f_mean,
            offsets,
        })
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Interval `f_mean ± q_{1−α/2}`.
    pub fn interval(&self, alpha: f64) -> Result<(f64, f64)> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        let q = quantile_sorted(&self.offsets, 1.0 - 0.5 * alpha);
        Ok((self.f_mean - q, self.f_mean + q))
    }

    /// Fraction of draws `f_mean + offset ≤ value`.
    pub fn pit(&self, value: f64) -> f64 {
        let x = value - self.f_mean;
        if x.is_nan() {
            return f64::NAN;
        }
        self.offsets.partition_point(|o| *o <= x) as f64 / self.offsets.len() as f64
    }
}

/// Monte Carlo `1 − alpha` interval of the Student predictive distribution.
pub fn student_interval(pred: &StudentPredictive, alpha: f64, mc: &McOptions) -> Result<(f64, f64)> {
    PredictiveSample::draw(pred, mc)?.interval(alpha)
}

/// Monte Carlo estimate of `P(Z₁ + Z₂ ≤ value)`.
pub fn student_pit(value: f64, pred: &StudentPredictive, mc: &McOptions) -> Result<f64> {
    Ok(PredictiveSample::draw(pred, mc)?.pit(value))
}
