//! Distance metrics and covariance kernels.
//!
//! Two kernels are provided: the locally fitted anisotropic exponential kernel
//! `φ·exp(−d)` with `d` the range-scaled Euclidean lag in degrees and days, and
//! the fixed Roemmich–Gilson reference kernel (Gaussian plus exponential in
//! kilometres, with a zonal stretch in the tropics). Kernels never include the
//! nugget; callers add it on the diagonal.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kilometres per degree of latitude (and of longitude at the equator).
pub const KM_PER_DEGREE: f64 = 111.2;

/// A location in latitude/longitude (degrees) and time within the year (days).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimePoint {
    pub lat: f64,
    pub lon: f64,
    pub t: f64,
}

impl SpaceTimePoint {
    /// Builds a point, normalizing longitude into `[-180, 180)`.
    pub fn new(lat: f64, lon: f64, t: f64) -> Self {
        SpaceTimePoint {
            lat,
            lon: normalize_lon(lon),
            t,
        }
    }
}

/// Maps any longitude into `[-180, 180)`.
pub fn normalize_lon(lon: f64) -> f64 {
    let x = (lon + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if x >= 180.0 {
        x - 360.0
    } else {
        x
    }
}

/// Longitude difference `a − b` taken on the circle, in `(-180, 180]`.
pub fn lon_diff(a: f64, b: f64) -> f64 {
    let mut d = a - b;
    if !(-540.0..=540.0).contains(&d) {
        d = d.rem_euclid(360.0);
    }
    // shift by whole turns so that lon_diff(b, a) == -lon_diff(a, b) exactly
    if d > 180.0 {
        d -= 360.0;
    } else if d <= -180.0 {
        d += 360.0;
    }
    d
}

/// Whether the time lag enters the distance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMode {
    SpaceTime,
    Spatial,
}

/// GP variance, range parameters and nugget variance of the local model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovParams {
    pub phi: f64,
    /// Degrees.
    pub theta_lat: f64,
    /// Degrees.
    pub theta_lon: f64,
    /// Days.
    pub theta_t: f64,
    pub sigma2: f64,
}

impl CovParams {
    pub fn new(phi: f64, theta_lat: f64, theta_lon: f64, theta_t: f64, sigma2: f64) -> Result<Self> {
        let p = CovParams {
            phi,
            theta_lat,
            theta_lon,
            theta_t,
            sigma2,
        };
        p.validate()?;
        Ok(p)
    }

    /// Ranges and `phi` must be strictly positive; `sigma2` may be zero.
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("phi", self.phi),
            ("theta_lat", self.theta_lat),
            ("theta_lon", self.theta_lon),
            ("theta_t", self.theta_t),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::invalid(format!(
                "sigma2 must be nonnegative and finite, got {}",
                self.sigma2
            )));
        }
        Ok(())
    }

    /// `[ln φ, ln θ_lat, ln θ_lon, ln θ_t, ln σ²]`.
    pub fn to_log(&self) -> [f64; 5] {
        [
            self.phi.ln(),
            self.theta_lat.ln(),
            self.theta_lon.ln(),
            self.theta_t.ln(),
            self.sigma2.ln(),
        ]
    }

    pub fn from_log(x: &[f64]) -> Self {
        CovParams {
            phi: x[0].exp(),
            theta_lat: x[1].exp(),
            theta_lon: x[2].exp(),
            theta_t: x[3].exp(),
            sigma2: x[4].exp(),
        }
    }
}

/// A stationary or reference covariance function without nugget.
pub trait Kernel: Sync {
    fn cov(&self, a: &SpaceTimePoint, b: &SpaceTimePoint) -> f64;

    /// Value at zero lag.
    fn variance(&self) -> f64;
}

/// The anisotropic exponential kernel `φ·exp(−d)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpKernel {
    phi: f64,
    inv_lat: f64,
    inv_lon: f64,
    /// Zero in spatial mode.
    inv_t: f64,
}

impl ExpKernel {
    pub fn new(params: &CovParams, mode: DistanceMode) -> Result<Self> {
        params.validate()?;
        Ok(ExpKernel {
            phi: params.phi,
            inv_lat: 1.0 / params.theta_lat,
            inv_lon: 1.0 / params.theta_lon,
            inv_t: match mode {
                DistanceMode::SpaceTime => 1.0 / params.theta_t,
                DistanceMode::Spatial => 0.0,
            },
        })
    }

    /// Squared range-scaled lags along latitude, longitude and time.
    #[inline]
    pub fn scaled_sq_lags(&self, a: &SpaceTimePoint, b: &SpaceTimePoint) -> [f64; 3] {
        let dlat = (a.lat - b.lat) * self.inv_lat;
        let dlon = lon_diff(a.lon, b.lon) * self.inv_lon;
        let dt = (a.t - b.t) * self.inv_t;
        [dlat * dlat, dlon * dlon, dt * dt]
    }

    #[inline]
    pub fn distance(&self, a: &SpaceTimePoint, b: &SpaceTimePoint) -> f64 {
        let [x, y, z] = self.scaled_sq_lags(a, b);
        (x + y + z).sqrt()
    }
}

impl Kernel for ExpKernel {
    #[inline]
    fn cov(&self, a: &SpaceTimePoint, b: &SpaceTimePoint) -> f64 {
        self.phi * (-self.distance(a, b)).exp()
    }

    fn variance(&self) -> f64 {
        self.phi
    }
}

/// Range-scaled distance between two points.
pub fn anisotropic_distance(
    p1: &SpaceTimePoint,
    p2: &SpaceTimePoint,
    params: &CovParams,
    mode: DistanceMode,
) -> Result<f64> {
    Ok(ExpKernel::new(params, mode)?.distance(p1, p2))
}

pub fn exp_cov(p1: &SpaceTimePoint, p2: &SpaceTimePoint, params: &CovParams, mode: DistanceMode) -> Result<f64> {
    Ok(ExpKernel::new(params, mode)?.cov(p1, p2))
}

/// Dense covariance matrix `K` of a point set, no nugget.
pub fn cov_matrix<K: Kernel + ?Sized>(points: &[SpaceTimePoint], kernel: &K) -> Result<Mat<f64>> {
    if points.is_empty() {
        return Err(Error::EmptyInput("covariance matrix needs at least one point"));
    }
    Ok(cov_matrix_unchecked(points, kernel))
}

pub(crate) fn cov_matrix_unchecked<K: Kernel + ?Sized>(points: &[SpaceTimePoint], kernel: &K) -> Mat<f64> {
    let m = points.len();
    let var = kernel.variance();
    let mut k = Mat::<f64>::zeros(m, m);
    for j in 0..m {
        k[(j, j)] = var;
        for i in (j + 1)..m {
            let c = kernel.cov(&points[i], &points[j]);
            k[(i, j)] = c;
            k[(j, i)] = c;
        }
    }
    k
}

/// Covariances between `target` and each point.
pub fn cross_cov_vector<K: Kernel + ?Sized>(
    target: &SpaceTimePoint,
    points: &[SpaceTimePoint],
    kernel: &K,
) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(Error::EmptyInput("cross covariance needs at least one point"));
    }
    Ok(points.iter().map(|p| kernel.cov(target, p)).collect())
}

/// Constants of the reference covariance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RgCovConfig {
    pub gauss_weight: f64,
    pub exp_weight: f64,
    pub gauss_scale_km: f64,
    pub exp_scale_km: f64,
    /// Nugget variance over GP variance.
    pub noise_signal_ratio: f64,
}

impl Default for RgCovConfig {
    fn default() -> Self {
        RgCovConfig {
            gauss_weight: 0.77,
            exp_weight: 0.23,
            gauss_scale_km: 140.0,
            exp_scale_km: 1111.0,
            noise_signal_ratio: 0.15,
        }
    }
}

/// Zonal stretch factor: 1 poleward of 20°, `1/8 + 7|lat|/160` inside.
pub fn rg_tropic_factor(lat: f64) -> f64 {
    let a = lat.abs();
    if a > 20.0 {
        1.0
    } else {
        0.125 + 7.0 * a / 160.0
    }
}

/// Horizontal distance in km between `(lat, lon)` pairs.
///
/// Zonal lags are converted at the midpoint latitude and, when `tropic` is
/// set, multiplied by [`rg_tropic_factor`] of that latitude.
pub fn rg_distance(x1: (f64, f64), x2: (f64, f64), tropic: bool) -> f64 {
    let mid = 0.5 * (x1.0 + x2.0);
    let dlat_km = (x1.0 - x2.0) * KM_PER_DEGREE;
    let mut dlon_km = lon_diff(x1.1, x2.1) * KM_PER_DEGREE * mid.to_radians().cos();
    if tropic {
        dlon_km *= rg_tropic_factor(mid);
    }
    dlat_km.hypot(dlon_km)
}

/// Reference covariance shape as a function of distance in km, unit variance.
pub fn rg_correlation(d_km: f64, cfg: &RgCovConfig) -> f64 {
    let g = d_km / cfg.gauss_scale_km;
    cfg.gauss_weight * (-(g * g)).exp() + cfg.exp_weight * (-d_km / cfg.exp_scale_km).exp()
}

pub fn rg_cov(x1: (f64, f64), x2: (f64, f64), phi_hat: f64, cfg: &RgCovConfig, tropic: bool) -> Result<f64> {
    if !(phi_hat > 0.0 && phi_hat.is_finite()) {
        return Err(Error::invalid(format!("phi_hat must be positive, got {phi_hat}")));
    }
    Ok(phi_hat * rg_correlation(rg_distance(x1, x2, tropic), cfg))
}

/// The reference covariance as a [`Kernel`] (time is ignored).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RgKernel {
    pub phi: f64,
    pub config: RgCovConfig,
    pub tropic: bool,
}

impl RgKernel {
    pub fn new(phi: f64, config: RgCovConfig) -> Result<Self> {
        if !(phi > 0.0 && phi.is_finite()) {
            return Err(Error::invalid(format!("phi_hat must be positive, got {phi}")));
        }
        Ok(RgKernel {
            phi,
            config,
            tropic: true,
        })
    }

    /// Nugget variance implied by the fixed noise-to-signal ratio.
    pub fn nugget(&self) -> f64 {
        self.config.noise_signal_ratio * self.phi
    }
}

impl Kernel for RgKernel {
    fn cov(&self, a: &SpaceTimePoint, b: &SpaceTimePoint) -> f64 {
        self.phi * rg_correlation(rg_distance((a.lat, a.lon), (b.lat, b.lon), self.tropic), &self.config)
    }

    fn variance(&self) -> f64 {
        self.phi
    }
}
