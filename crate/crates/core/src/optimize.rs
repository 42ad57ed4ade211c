//! BFGS quasi-Newton minimization with a Wolfe line search.
//!
//! Used on log-transformed covariance parameters, so the search space is
//! unconstrained. The objective may decline to evaluate a point (returning
//! `None`, e.g. when a covariance factorization fails); the line search then
//! backs off toward the last good step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when `‖g‖∞ ≤ grad_tol · max(1, |f|)`.
    pub grad_tol: f64,
    /// Stop when an accepted step moves no coordinate by more than this.
    pub step_tol: f64,
    /// Largest allowed move of any coordinate in one line search.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            max_iter: 200,
            grad_tol: 1e-6,
            step_tol: 1e-9,
            max_step: 3.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GradientTolerance,
    StepTolerance,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

impl BfgsResult {
    pub fn grad_norm(&self) -> f64 {
        inf_norm(&self.grad)
    }

    /// True for the tolerance exits. A line-search stall also counts when the
    /// gradient is already at the noise floor of the objective.
    pub fn converged(&self) -> bool {
        match self.termination {
            Termination::GradientTolerance | Termination::StepTolerance => true,
            Termination::LineSearchFailed => self.grad_norm() <= 1e-4 * self.f.abs().max(1.0),
            Termination::MaxIterations => false,
        }
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Counted<F> {
    f: F,
    evals: usize,
}

impl<F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>> Counted<F> {
    fn eval(&mut self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        self.evals += 1;
        (self.f)(x).filter(|(v, g)| v.is_finite() && g.iter().all(|x| x.is_finite()))
    }
}

struct Trial {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

/// Minimizes `objective`, which returns the value and gradient at a point.
pub fn minimize<F>(objective: F, x0: &[f64], opts: &BfgsOptions) -> Result<BfgsResult>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut obj = Counted { f: objective, evals: 0 };
    let (mut f, mut g) = obj
        .eval(x0)
        .ok_or_else(|| Error::invalid("objective is not finite at the starting point"))?;
    let mut x = x0.to_vec();
    // inverse Hessian approximation, row-major
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    let mut first = true;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        if inf_norm(&g) <= opts.grad_tol * f.abs().max(1.0) {
            termination = Termination::GradientTolerance;
            break;
        }
        iterations += 1;
        let mut d: Vec<f64> = (0..n).map(|i| -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>()).collect();
        let mut dg = dot(&d, &g);
        if dg >= 0.0 {
            // lost descent; restart from steepest descent
            d = g.iter().map(|v| -v).collect();
            dg = dot(&d, &g);
            h.iter_mut().enumerate().for_each(|(k, v)| *v = if k % (n + 1) == 0 { 1.0 } else { 0.0 });
            first = true;
        }
        let dmax = inf_norm(&d);
        let alpha_max = opts.max_step / dmax;
        let alpha0 = if first { (1.0 / dmax).min(alpha_max) } else { alpha_max.min(1.0) };

        let Some(trial) = line_search(&mut obj, &x, f, dg, &d, alpha0, alpha_max) else {
            termination = Termination::LineSearchFailed;
            break;
        };
        let s: Vec<f64> = d.iter().map(|v| v * trial.alpha).collect();
        let y: Vec<f64> = trial.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        for i in 0..n {
            x[i] += s[i];
        }
        f = trial.f;
        g = trial.g;

        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if first {
                let scale = sy / dot(&y, &y);
                h.iter_mut().for_each(|v| *v *= scale);
                first = false;
            }
            bfgs_update(&mut h, &s, &y, sy);
        }
        if inf_norm(&s) < opts.step_tol {
            termination = Termination::StepTolerance;
            break;
        }
    }
    if iterations == opts.max_iter && inf_norm(&g) <= opts.grad_tol * f.abs().max(1.0) {
        termination = Termination::GradientTolerance;
    }
    Ok(BfgsResult {
        x,
        f,
        grad: g,
        iterations,
        evaluations: obj.evals,
        termination,
    })
}

fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum()).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

fn line_search<F>(
    obj: &mut Counted<F>,
    x: &[f64],
    f0: f64,
    dg0: f64,
    d: &[f64],
    alpha0: f64,
    alpha_max: f64,
) -> Option<Trial>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let at = |obj: &mut Counted<F>, alpha: f64| -> Option<Trial> {
        let xa: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + alpha * b).collect();
        obj.eval(&xa).map(|(f, g)| Trial { alpha, f, g })
    };
    let mut best: Option<Trial> = None;
    let note = |t: &Trial, best: &mut Option<Trial>| {
        if t.f <= f0 + C1 * t.alpha * dg0 && best.as_ref().is_none_or(|b| t.f < b.f) {
            *best = Some(Trial {
                alpha: t.alpha,
                f: t.f,
                g: t.g.clone(),
            });
        }
    };

    let mut prev = Trial {
        alpha: 0.0,
        f: f0,
        g: Vec::new(),
    };
    let mut prev_dg = dg0;
    let mut alpha = alpha0;
    for i in 0..30 {
        let Some(t) = at(obj, alpha) else {
            alpha = prev.alpha + 0.25 * (alpha - prev.alpha);
            if alpha - prev.alpha < 1e-16 {
                break;
            }
            continue;
        };
        note(&t, &mut best);
        let dga = dot(&t.g, d);
        if t.f > f0 + C1 * alpha * dg0 || (i > 0 && t.f >= prev.f) {
            return zoom(obj, &at, f0, dg0, d, (prev, prev_dg), (t, dga), &mut best).or(best);
        }
        if dga.abs() <= -C2 * dg0 {
            return Some(t);
        }
        if dga >= 0.0 {
            return zoom(obj, &at, f0, dg0, d, (t, dga), (prev, prev_dg), &mut best).or(best);
        }
        if alpha >= alpha_max {
            return Some(t);
        }
        prev = t;
        prev_dg = dga;
        alpha = (2.0 * alpha).min(alpha_max);
    }
    best
}

#[allow(clippy::too_many_arguments)]
fn zoom<F, A>(
    obj: &mut Counted<F>,
    at: &A,
    f0: f64,
    dg0: f64,
    d: &[f64],
    lo: (Trial, f64),
    hi: (Trial, f64),
    best: &mut Option<Trial>,
) -> Option<Trial>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
    A: Fn(&mut Counted<F>, f64) -> Option<Trial>,
{
    let (mut lo, mut lo_dg) = lo;
    let (mut hi_alpha, mut hi_f) = (hi.0.alpha, hi.0.f);
    for _ in 0..30 {
        let width = hi_alpha - lo.alpha;
        if width.abs() < 1e-14 * lo.alpha.abs().max(1e-10) {
            break;
        }
        // quadratic interpolation from (lo.f, lo_dg, hi_f), safeguarded
        let denom = 2.0 * (hi_f - lo.f - lo_dg * width);
        let mut a = if denom.is_finite() && denom > 0.0 {
            lo.alpha - lo_dg * width * width / denom
        } else {
            lo.alpha + 0.5 * width
        };
        let (lb, ub) = if width > 0.0 {
            (lo.alpha + 0.1 * width, hi_alpha - 0.1 * width)
        } else {
            (hi_alpha - 0.1 * width, lo.alpha + 0.1 * width)
        };
        if !(a >= lb.min(ub) && a <= lb.max(ub)) {
            a = lo.alpha + 0.5 * width;
        }
        let Some(t) = at(obj, a) else {
            hi_alpha = a;
            hi_f = f64::INFINITY;
            continue;
        };
        if t.f <= f0 + C1 * t.alpha * dg0 && best.as_ref().is_none_or(|b| t.f < b.f) {
            *best = Some(Trial {
                alpha: t.alpha,
                f: t.f,
                g: t.g.clone(),
            });
        }
        let dga = dot(&t.g, d);
        if t.f > f0 + C1 * a * dg0 || t.f >= lo.f {
            hi_alpha = a;
            hi_f = t.f;
        } else {
            if dga.abs() <= -C2 * dg0 {
                return Some(t);
            }
            if dga * (hi_alpha - lo.alpha) >= 0.0 {
                hi_alpha = lo.alpha;
                hi_f = lo.f;
            }
            lo = t;
            lo_dg = dga;
        }
    }
    None
}

/// Central finite-difference gradient with per-coordinate step `h`.
pub fn central_gradient<F: FnMut(&[f64]) -> Option<f64>>(mut f: F, x: &[f64], h: f64) -> Option<Vec<f64>> {
    let mut xp = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let fp = f(&xp)?;
        xp[i] = x[i] - h;
        let fm = f(&xp)?;
        xp[i] = x[i];
        g.push((fp - fm) / (2.0 * h));
    }
    Some(g)
}
