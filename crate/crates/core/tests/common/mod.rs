//! Independent dense oracles shared by the integration tests.
#![allow(dead_code)]

use lsgp::covariance::{CovParams, DistanceMode, SpaceTimePoint};
use lsgp::gp_gaussian::YearBlock;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Longitude difference folded into [-180, 180).
fn wrap(d: f64) -> f64 {
    (d + 180.0).rem_euclid(360.0) - 180.0
}

pub fn kernel(a: &SpaceTimePoint, b: &SpaceTimePoint, p: &CovParams, mode: DistanceMode) -> f64 {
    let x = (a.lat - b.lat) / p.theta_lat;
    let y = wrap(a.lon - b.lon) / p.theta_lon;
    let z = match mode {
        DistanceMode::SpaceTime => (a.t - b.t) / p.theta_t,
        DistanceMode::Spatial => 0.0,
    };
    p.phi * (-(x * x + y * y + z * z).sqrt()).exp()
}

/// K + σ²I as row-major nested vectors.
pub fn cov(points: &[SpaceTimePoint], p: &CovParams, mode: DistanceMode, nugget: f64) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            k[i][j] = kernel(&points[i], &points[j], p, mode);
        }
        k[i][i] += nugget;
    }
    k
}

/// Textbook Cholesky, lower factor.
pub fn cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                assert!(d > 0.0, "matrix not positive definite");
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    l
}

pub fn chol_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut z = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i][k] * z[k]).sum();
        z[i] = (b[i] - s) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k][i] * x[k]).sum();
        x[i] = (z[i] - s) / l[i][i];
    }
    x
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Multivariate normal log-density with zero mean.
pub fn mvn_logpdf(y: &[f64], s: &[Vec<f64>]) -> f64 {
    let l = cholesky(s);
    let logdet: f64 = 2.0 * (0..l.len()).map(|i| l[i][i].ln()).sum::<f64>();
    let q = dot(y, &chol_solve(&l, y));
    -0.5 * (q + logdet + y.len() as f64 * (2.0 * std::f64::consts::PI).ln())
}

pub fn block_loglik(blocks: &[YearBlock], p: &CovParams, mode: DistanceMode) -> f64 {
    blocks
        .iter()
        .map(|b| mvn_logpdf(&b.values, &cov(&b.points, p, mode, p.sigma2)))
        .sum()
}

/// Conditional mean and variance of a new noisy observation at `target`.
pub fn conditional(block: &YearBlock, p: &CovParams, mode: DistanceMode, target: &SpaceTimePoint) -> (f64, f64) {
    let l = cholesky(&cov(&block.points, p, mode, p.sigma2));
    let k: Vec<f64> = block.points.iter().map(|q| kernel(q, target, p, mode)).collect();
    let mean = dot(&k, &chol_solve(&l, &block.values));
    let var = p.phi + p.sigma2 - dot(&k, &chol_solve(&l, &k));
    (mean, var)
}

/// Posterior mean of the latent field at the observed points.
pub fn latent_posterior_mean(block: &YearBlock, p: &CovParams, mode: DistanceMode) -> Vec<f64> {
    let k = cov(&block.points, p, mode, 0.0);
    let l = cholesky(&cov(&block.points, p, mode, p.sigma2));
    let a = chol_solve(&l, &block.values);
    k.iter().map(|row| dot(row, &a)).collect()
}

pub fn random_params(r: &mut ChaCha12Rng) -> CovParams {
    CovParams::new(
        r.random_range(0.5..2.0),
        r.random_range(1.0..5.0),
        r.random_range(1.0..8.0),
        r.random_range(2.0..10.0),
        r.random_range(0.05..1.0),
    )
    .unwrap()
}

/// Uniform points in a box; longitudes are normalized so boxes may straddle
/// the antimeridian.
pub fn random_points(r: &mut ChaCha12Rng, n: usize, lat: (f64, f64), lon: (f64, f64), t: (f64, f64)) -> Vec<SpaceTimePoint> {
    (0..n)
        .map(|_| {
            SpaceTimePoint::new(
                r.random_range(lat.0..=lat.1),
                r.random_range(lon.0..=lon.1),
                r.random_range(t.0..=t.1),
            )
        })
        .collect()
}

/// Zero-valued blocks at random points, one per year, to be filled by simulation.
pub fn layout(r: &mut ChaCha12Rng, years: usize, per_year: usize, lat: (f64, f64), lon: (f64, f64), t: (f64, f64)) -> Vec<YearBlock> {
    (0..years)
        .map(|y| {
            let pts = random_points(r, per_year, lat, lon, t);
            let ids = (0..per_year).map(|i| format!("y{y}o{i}")).collect();
            YearBlock::new(y as i32, pts, vec![0.0; per_year], ids).unwrap()
        })
        .collect()
}

/// Drifting floats: each float starts at a random point and moves by at
/// most `drift` degrees per cycle of `cycle` days.
pub fn float_layout(
    r: &mut ChaCha12Rng,
    years: usize,
    floats: usize,
    cycles: usize,
    cycle: f64,
    drift: f64,
    lat: (f64, f64),
    lon: (f64, f64),
) -> Vec<YearBlock> {
    (0..years)
        .map(|y| {
            let mut b = YearBlock::empty(y as i32);
            for f in 0..floats {
                let (mut la, mut lo) = (r.random_range(lat.0..=lat.1), r.random_range(lon.0..=lon.1));
                let mut t = r.random_range(0.0..cycle);
                for _ in 0..cycles {
                    b.push(SpaceTimePoint::new(la, lo, t), 0.0, format!("f{f}"));
                    la = (la + drift * r.random_range(-1.0..=1.0)).clamp(lat.0, lat.1);
                    lo = (lo + drift * r.random_range(-1.0..=1.0)).clamp(lon.0, lon.1);
                    t += cycle;
                }
            }
            b
        })
        .collect()
}

pub fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs()
    }
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
