//! Scalar distribution helpers.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Standard normal quantile `Φ⁻¹(p)`.
pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Standard normal CDF `Φ(x)`.
pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

/// Log density of `scale · t_nu` at `r`.
pub fn student_logpdf(r: f64, nu: f64, scale: f64) -> f64 {
    let z = r / scale;
    ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * std::f64::consts::PI).ln() - scale.ln()
        - 0.5 * (nu + 1.0) * (z * z / nu).ln_1p()
}

/// Linear-interpolation sample quantile (type 7) of already sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let n = sorted.len();
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median_sorted(sorted: &[f64]) -> f64 {
    quantile_sorted(sorted, 0.5)
}

pub(crate) fn sort_floats(v: &mut [f64]) {
    v.sort_by(|a, b| a.total_cmp(b));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_quantile_values() {
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-9);
        assert!((normal_cdf(normal_quantile(0.3)) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn student_density_integrates_to_one() {
        // trapezoid on a wide grid; nu = 3 tails decay like |x|^-4
        let (nu, s) = (3.0, 0.7);
        let h = 1e-3;
        let total: f64 = (-200_000..=200_000).map(|i| student_logpdf(i as f64 * h, nu, s).exp() * h).sum();
        assert!((total - 1.0).abs() < 1e-4, "{total}");
    }

    #[test]
    fn student_matches_cauchy() {
        // nu = 1 is Cauchy
        let v = student_logpdf(2.0, 1.0, 1.0).exp();
        assert!((v - 1.0 / (std::f64::consts::PI * 5.0)).abs() < 1e-12);
    }

    #[test]
    fn type7_quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.75), 3.25);
        assert_eq!(median_sorted(&v), 2.5);
        assert_eq!(quantile_sorted(&[5.0], 0.3), 5.0);
    }
}
