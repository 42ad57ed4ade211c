//! Profile parsing, vertical interpolation, mean-field estimation and
//! subtraction, filters, and the reference-model variance estimate.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{lon_diff, normalize_lon, rg_distance, RgCovConfig, SpaceTimePoint};
use crate::error::{Error, Result};
use crate::gp_gaussian::{pooled_variance, total_obs, YearBlock};
use crate::linalg::{Jitter, SpdFactor};
use crate::window::{select_window, CellMask, GridSpec, MeanMode, WindowSpec};

pub const PROFILE_HEADER: [&str; 7] = ["source_id", "lat", "lon", "year", "day", "pressure_db", "temp_c"];

/// One vertical profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub source_id: String,
    pub lat: f64,
    pub lon: f64,
    pub year: i32,
    /// Fractional day of year, 0 at 1 January 00:00.
    pub day: f64,
    /// `(pressure in db, temperature in °C)`, pressure strictly increasing.
    pub levels: Vec<(f64, f64)>,
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, path: &Path, line: u64) -> Result<T> {
    let raw = rec.get(i).unwrap_or("").trim();
    raw.parse()
        .map_err(|_| parse_err(path, line, format!("column {}: cannot parse {raw:?}", PROFILE_HEADER[i])))
}

fn finite(v: f64, name: &str, path: &Path, line: u64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(parse_err(path, line, format!("{name} must be finite")))
    }
}

/// Reads profiles from any reader; `path` only labels errors.
pub fn parse_profiles_from<R: Read>(reader: R, path: &Path) -> Result<Vec<ProfileRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Ok(Vec::new()),
        Some(h) => h?,
    };
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != PROFILE_HEADER {
        return Err(parse_err(path, 1, format!("expected header {}", PROFILE_HEADER.join(","))));
    }
    let mut out: Vec<ProfileRecord> = Vec::new();
    let mut seen: HashSet<(String, i32, u64)> = HashSet::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != PROFILE_HEADER.len() {
            return Err(parse_err(path, line, format!("expected 7 fields, found {}", rec.len())));
        }
        let source_id = rec.get(0).unwrap_or("").trim().to_string();
        if source_id.is_empty() {
            return Err(parse_err(path, line, "empty source_id"));
        }
        let lat = finite(field(&rec, 1, path, line)?, "lat", path, line)?;
        let lon = finite(field(&rec, 2, path, line)?, "lon", path, line)?;
        let year: i32 = field(&rec, 3, path, line)?;
        let day = finite(field(&rec, 4, path, line)?, "day", path, line)?;
        let pressure = finite(field(&rec, 5, path, line)?, "pressure_db", path, line)?;
        let temp = finite(field(&rec, 6, path, line)?, "temp_c", path, line)?;
        if !(-90.0..=90.0).contains(&lat) {
            return Err(parse_err(path, line, format!("latitude {lat} out of range")));
        }
        if !(0.0..=366.0).contains(&day) {
            return Err(parse_err(path, line, format!("day {day} outside [0, 366]")));
        }
        let same = out.last().is_some_and(|p| {
            p.source_id == source_id && p.year == year && p.day == day && p.lat == lat && p.lon == lon
        });
        if same {
            let last = out.last_mut().expect("checked");
            let prev = last.levels.last().expect("profiles have a level").0;
            if !(pressure > prev) {
                return Err(parse_err(
                    path,
                    line,
                    format!("pressure {pressure} not above previous level {prev} in profile {source_id}"),
                ));
            }
            last.levels.push((pressure, temp));
        } else {
            if !seen.insert((source_id.clone(), year, day.to_bits())) {
                return Err(parse_err(path, line, format!("rows of profile {source_id} ({year}, day {day}) are not contiguous")));
            }
            out.push(ProfileRecord {
                source_id,
                lat,
                lon,
                year,
                day,
                levels: vec![(pressure, temp)],
            });
        }
    }
    Ok(out)
}

pub fn parse_profiles(path: impl AsRef<Path>) -> Result<Vec<ProfileRecord>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_profiles_from(f, path)
}

/// Writes profiles in the canonical CSV layout. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_profiles_to<W: Write>(w: W, records: &[ProfileRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(PROFILE_HEADER)?;
    for r in records {
        for &(p, t) in &r.levels {
            wtr.write_record([
                r.source_id.clone(),
                r.lat.to_string(),
                r.lon.to_string(),
                r.year.to_string(),
                r.day.to_string(),
                p.to_string(),
                t.to_string(),
            ])?;
        }
    }
    wtr.flush().map_err(|e| Error::Io {
        path: PathBuf::from("<profile writer>"),
        source: e,
    })
}

pub fn write_profiles(path: impl AsRef<Path>, records: &[ProfileRecord]) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_profiles_to(BufWriter::new(f), records)
}

/// Linear interpolation to `level` db; `None` outside the profile's range.
pub fn interpolate_to_pressure(profile: &ProfileRecord, level: f64) -> Option<f64> {
    let lv = &profile.levels;
    let i = lv.partition_point(|(p, _)| *p < level);
    if i < lv.len() && lv[i].0 == level {
        return Some(lv[i].1);
    }
    if i == 0 || i == lv.len() {
        return None;
    }
    let (p0, t0) = lv[i - 1];
    let (p1, t1) = lv[i];
    Some(t0 + (t1 - t0) * (level - p0) / (p1 - p0))
}

/// A single-level observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub source_id: String,
    pub year: i32,
    pub point: SpaceTimePoint,
    pub value: f64,
}

/// Interpolates every profile to `level`, dropping profiles that do not span it.
pub fn observations_at(profiles: &[ProfileRecord], level: f64) -> Result<Vec<Observation>> {
    if !(level > 0.0) {
        return Err(Error::invalid(format!("pressure level must be positive, got {level}")));
    }
    Ok(profiles
        .iter()
        .filter_map(|p| {
            interpolate_to_pressure(p, level).map(|value| Observation {
                source_id: p.source_id.clone(),
                year: p.year,
                point: SpaceTimePoint::new(p.lat, p.lon, p.day),
                value,
            })
        })
        .collect())
}

/// Groups observations by year, years ascending, input order kept within a year.
pub fn group_by_year(obs: &[Observation]) -> Vec<YearBlock> {
    let mut map: BTreeMap<i32, YearBlock> = BTreeMap::new();
    for o in obs {
        map.entry(o.year)
            .or_insert_with(|| YearBlock::empty(o.year))
            .push(o.point, o.value, o.source_id.clone());
    }
    map.into_values().collect()
}

/// Calendar window `[start_day, end_day)` applied to every year; wraps past
/// the year end when `start_day > end_day`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalendarWindow {
    pub start_day: f64,
    pub end_day: f64,
}

const MONTH_START: [f64; 13] = [0.0, 31.0, 59.0, 90.0, 120.0, 151.0, 181.0, 212.0, 243.0, 273.0, 304.0, 334.0, 365.0];

impl CalendarWindow {
    /// `count` whole months starting at `first` (1 = January), non-leap calendar.
    pub fn months(first: u8, count: u8) -> Result<Self> {
        if !(1..=12).contains(&first) || !(1..=12).contains(&count) {
            return Err(Error::invalid("months must be in 1..=12"));
        }
        let start = MONTH_START[(first - 1) as usize];
        let last = (first as usize - 1 + count as usize) % 12;
        let end = if count == 12 { 366.0 } else { MONTH_START[last] };
        let end = if end == 0.0 { 366.0 } else { end };
        Ok(CalendarWindow {
            start_day: start,
            end_day: end,
        })
    }

    pub fn all_year() -> Self {
        CalendarWindow {
            start_day: 0.0,
            end_day: 367.0,
        }
    }

    pub fn contains(&self, day: f64) -> bool {
        if self.start_day <= self.end_day {
            day >= self.start_day && day < self.end_day
        } else {
            day >= self.start_day || day < self.end_day
        }
    }
}

/// Reads a mask file with header `lat,lon`; each row names a 1° cell.
pub fn read_mask(path: impl AsRef<Path>) -> Result<CellMask> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(f);
    let mut mask = CellMask::default();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let get = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| parse_err(path, line, "expected numeric lat,lon"))
        };
        mask.insert(get(0)?, get(1)?);
    }
    Ok(mask)
}

/// Keeps records inside the calendar window and outside masked cells.
pub fn apply_filters(records: &[ProfileRecord], window: &CalendarWindow, mask: &CellMask) -> Vec<ProfileRecord> {
    records
        .iter()
        .filter(|r| window.contains(r.day) && !mask.contains(r.lat, r.lon))
        .cloned()
        .collect()
}

/// Reference GP variance `φ̂`: unbiased sample variance of the window values
/// divided by `1 + noise_signal_ratio`.
pub fn rg_phi_hat_of(window: &[YearBlock], cfg: &RgCovConfig) -> Result<f64> {
    let n = total_obs(window);
    if n < 2 {
        return Err(Error::InsufficientData { found: n, required: 2 });
    }
    let v = pooled_variance(window) / (1.0 + cfg.noise_signal_ratio);
    if !(v > 0.0) {
        return Err(Error::InsufficientVariance(n));
    }
    Ok(v)
}

/// [`rg_phi_hat_of`] over the window around `center`.
pub fn rg_phi_hat(data: &[YearBlock], center: &SpaceTimePoint, spec: &WindowSpec) -> Result<f64> {
    rg_phi_hat_of(&select_window(data, center, spec), &RgCovConfig::default())
}

/// Settings of the local mean regression.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanConfig {
    pub neighbors: usize,
    pub harmonics: usize,
    /// Length scale of the Gaussian neighbor weights, km.
    pub length_scale_km: f64,
    /// Ridge added to the normal equations up front; 0 disables it.
    pub ridge: f64,
    /// Day of year at which the spatial (time-constant) mean is evaluated.
    pub eval_time: f64,
}

impl Default for MeanConfig {
    fn default() -> Self {
        MeanConfig {
            neighbors: 300,
            harmonics: 6,
            length_scale_km: 500.0,
            ridge: 0.0,
            eval_time: crate::window::MID_FEBRUARY,
        }
    }
}

pub const DAYS_PER_YEAR: f64 = 365.25;

/// Names of the regression coefficients for `harmonics` harmonic pairs.
pub fn coefficient_names(harmonics: usize) -> Vec<String> {
    let mut v: Vec<String> = ["intercept", "lat", "lon", "lat2", "latlon", "lon2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for k in 1..=harmonics {
        v.push(format!("sin{k}"));
        v.push(format!("cos{k}"));
    }
    v
}

/// Basis row at offsets `(dlat, dlon)` degrees from the cell center and day `t`.
pub fn basis_row(dlat: f64, dlon: f64, t: f64, harmonics: usize) -> Vec<f64> {
    let mut v = vec![1.0, dlat, dlon, dlat * dlat, dlat * dlon, dlon * dlon];
    for k in 1..=harmonics {
        let w = 2.0 * std::f64::consts::PI * k as f64 * t / DAYS_PER_YEAR;
        v.push(w.sin());
        v.push(w.cos());
    }
    v
}

/// Mean-field value or regression coefficients of one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum MeanEntry {
    Value(f64),
    Coefficients {
        beta: Vec<f64>,
        /// The normal equations needed a ridge to be solvable.
        ridge: bool,
    },
}

/// Mean field on a regular grid of cell centers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanField {
    pub lat0: f64,
    pub lon0: f64,
    pub step: f64,
    pub harmonics: usize,
    /// Evaluation day for the spatial mean.
    pub eval_time: f64,
    pub pressure_db: Option<f64>,
    entries: BTreeMap<(i64, i64), (f64, f64, MeanEntry)>,
}

impl MeanField {
    pub fn new(lat0: f64, lon0: f64, step: f64, harmonics: usize, eval_time: f64) -> Self {
        MeanField {
            lat0,
            lon0,
            step,
            harmonics,
            eval_time,
            pressure_db: None,
            entries: BTreeMap::new(),
        }
    }

    fn key(&self, lat: f64, lon: f64) -> (i64, i64) {
        let nlon = (360.0 / self.step).round() as i64;
        let i = ((lat - self.lat0) / self.step).round() as i64;
        let j = (lon_diff(lon, self.lon0) / self.step).round() as i64;
        (i, j.rem_euclid(nlon.max(1)))
    }

    pub fn insert(&mut self, lat: f64, lon: f64, entry: MeanEntry) {
        let k = self.key(lat, lon);
        self.entries.insert(k, (lat, normalize_lon(lon), entry));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Cells as `(lat, lon, entry)` in key order.
    pub fn cells(&self) -> impl Iterator<Item = &(f64, f64, MeanEntry)> {
        self.entries.values()
    }

    /// Number of cells whose fit needed a ridge.
    pub fn ridge_count(&self) -> usize {
        self.cells()
            .filter(|(_, _, e)| matches!(e, MeanEntry::Coefficients { ridge: true, .. }))
            .count()
    }

    /// Mean at the cell nearest `(lat, lon)`, evaluated at day `t`.
    pub fn value_at(&self, lat: f64, lon: f64, t: f64) -> Option<f64> {
        let (_, _, e) = self.entries.get(&self.key(lat, lon))?;
        Some(match e {
            MeanEntry::Value(v) => *v,
            MeanEntry::Coefficients { beta, .. } => {
                basis_row(0.0, 0.0, t, self.harmonics).iter().zip(beta).map(|(x, b)| x * b).sum()
            }
        })
    }

    /// Mean at an observation under the given mode.
    pub fn eval(&self, p: &SpaceTimePoint, mode: MeanMode) -> Option<f64> {
        let t = match mode {
            MeanMode::Spatial => self.eval_time,
            MeanMode::SpatioTemporal => p.t,
        };
        self.value_at(p.lat, p.lon, t)
    }
}

/// Weighted least squares with an optional ridge; falls back to a small ridge
/// when the plain normal equations are singular. Returns `(β, ridge_used)`.
fn wls(x: &[Vec<f64>], y: &[f64], w: &[f64], ridge: f64) -> Result<(Vec<f64>, bool)> {
    let p = x[0].len();
    let mut a = Mat::<f64>::zeros(p, p);
    let mut b = vec![0.0; p];
    for ((row, yi), wi) in x.iter().zip(y).zip(w) {
        for j in 0..p {
            b[j] += wi * row[j] * yi;
            for k in 0..=j {
                a[(j, k)] += wi * row[j] * row[k];
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            a[(k, j)] = a[(j, k)];
        }
    }
    let scale = (0..p).map(|j| a[(j, j)]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    if ridge > 0.0 {
        for j in 0..p {
            a[(j, j)] += ridge * scale;
        }
    }
    // Jacobi scaling keeps the conditioning check independent of units.
    let d: Vec<f64> = (0..p).map(|j| a[(j, j)].max(f64::MIN_POSITIVE).sqrt()).collect();
    let s = Mat::from_fn(p, p, |j, k| a[(j, k)] / (d[j] * d[k]));
    let rhs: Vec<f64> = (0..p).map(|j| b[j] / d[j]).collect();
    let no_ridge = Jitter {
        attempts: 0,
        ..Jitter::default()
    };
    let well_conditioned = |f: &SpdFactor| f.logdet() > (p as f64) * (1e-12f64).ln();
    let (f, used) = match SpdFactor::new(&s, 1.0, no_ridge, 0) {
        Ok(f) if well_conditioned(&f) => (f, ridge > 0.0),
        _ => {
            let mut r = s.clone();
            for j in 0..p {
                r[(j, j)] += 1e-8;
            }
            (SpdFactor::new(&r, 1.0, Jitter::default(), 0)?, true)
        }
    };
    let z = f.solve(&rhs);
    Ok(((0..p).map(|j| z[j] / d[j]).collect(), used))
}

/// Local weighted regression of the mean at every active grid cell.
///
/// Each cell uses its `neighbors` nearest observations (horizontal distance in
/// km) weighted by `exp(−(d/L)²)`. Cells with fewer observations than basis
/// functions are left out of the field.
pub fn estimate_mean_field(obs: &[Observation], grid: &GridSpec, cfg: &MeanConfig) -> Result<MeanField> {
    grid.validate()?;
    if (grid.lat_step - grid.lon_step).abs() > 1e-12 {
        return Err(Error::Config("mean field needs equal lat/lon steps".into()));
    }
    let p = 6 + 2 * cfg.harmonics;
    let cells = grid.active_cells();
    let fits: Vec<Option<MeanEntry>> = cells
        .par_iter()
        .map(|c| {
            let mut d: Vec<(f64, usize)> = obs
                .iter()
                .enumerate()
                .map(|(i, o)| (rg_distance((c.lat, c.lon), (o.point.lat, o.point.lon), false), i))
                .collect();
            let k = cfg.neighbors.min(d.len());
            if k < p {
                return Ok(None);
            }
            if k < d.len() {
                d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                d.truncate(k);
            }
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let x: Vec<Vec<f64>> = d
                .iter()
                .map(|&(_, i)| {
                    let o = &obs[i];
                    basis_row(o.point.lat - c.lat, lon_diff(o.point.lon, c.lon), o.point.t, cfg.harmonics)
                })
                .collect();
            let y: Vec<f64> = d.iter().map(|&(_, i)| obs[i].value).collect();
            let w: Vec<f64> = d
                .iter()
                .map(|&(dist, _)| (-(dist / cfg.length_scale_km).powi(2)).exp())
                .collect();
            if w.iter().all(|v| *v == 0.0) {
                return Ok(None);
            }
            let (beta, ridge) = wls(&x, &y, &w, cfg.ridge)?;
            Ok(Some(MeanEntry::Coefficients { beta, ridge }))
        })
        .collect::<Result<_>>()?;
    let mut field = MeanField::new(grid.lat_min, grid.lon_min, grid.lat_step, cfg.harmonics, cfg.eval_time);
    for (c, e) in cells.iter().zip(fits) {
        if let Some(e) = e {
            field.insert(c.lat, c.lon, e);
        }
    }
    Ok(field)
}

/// Counts of observations dropped while subtracting the mean.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtractReport {
    pub kept: usize,
    pub excluded: usize,
}

/// Residuals `value − mean` grouped by year; observations without a mean cell
/// are excluded and counted.
pub fn subtract_mean(obs: &[Observation], mean: &MeanField, mode: MeanMode) -> (Vec<YearBlock>, SubtractReport) {
    let mut kept = Vec::with_capacity(obs.len());
    let mut report = SubtractReport::default();
    for o in obs {
        match mean.eval(&o.point, mode) {
            Some(m) => {
                kept.push(Observation {
                    value: o.value - m,
                    ..o.clone()
                });
                report.kept += 1;
            }
            None => report.excluded += 1,
        }
    }
    (group_by_year(&kept), report)
}

/// Reads a mean-field file: `lat,lon,mean_c` or `lat,lon,coef_name,coef_value`.
///
/// The grid origin is taken from the first row; `step` must match the file.
pub fn read_mean_field(path: impl AsRef<Path>, step: f64, eval_time: f64) -> Result<MeanField> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(f);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let gridded = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["lat", "lon", "mean_c"] => true,
        ["lat", "lon", "coef_name", "coef_value"] => false,
        _ => return Err(parse_err(path, 1, "expected header lat,lon,mean_c or lat,lon,coef_name,coef_value")),
    };
    let mut field: Option<MeanField> = None;
    let mut coefs: BTreeMap<(u64, u64), (f64, f64, BTreeMap<String, f64>)> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(path, line, format!("column {}: expected a finite number", i + 1)))
        };
        let (lat, lon) = (num(0)?, num(1)?);
        let fld = field.get_or_insert_with(|| MeanField::new(lat, lon, step, 0, eval_time));
        if gridded {
            fld.insert(lat, lon, MeanEntry::Value(num(2)?));
        } else {
            let name = rec.get(2).unwrap_or("").trim().to_string();
            coefs
                .entry((lat.to_bits(), lon.to_bits()))
                .or_insert_with(|| (lat, lon, BTreeMap::new()))
                .2
                .insert(name, num(3)?);
        }
    }
    let Some(mut field) = field else {
        return Ok(MeanField::new(0.0, 0.0, step, 0, eval_time));
    };
    if !gridded {
        let max_k = coefs
            .values()
            .flat_map(|(_, _, m)| m.keys())
            .filter_map(|n| n.strip_prefix("sin").or_else(|| n.strip_prefix("cos")))
            .filter_map(|k| k.parse::<usize>().ok())
            .max()
            .unwrap_or(0);
        field.harmonics = max_k;
        let names = coefficient_names(max_k);
        for (lat, lon, m) in coefs.into_values() {
            if let Some(bad) = m.keys().find(|k| !names.contains(k)) {
                return Err(parse_err(path, 0, format!("unknown coefficient {bad:?}")));
            }
            let beta = names.iter().map(|n| m.get(n).copied().unwrap_or(0.0)).collect();
            field.insert(lat, lon, MeanEntry::Coefficients { beta, ridge: false });
        }
    }
    Ok(field)
}

/// Writes a mean field in coefficient form (or gridded form when every entry is a value).
pub fn write_mean_field(path: impl AsRef<Path>, field: &MeanField) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(f));
    let all_values = field.cells().all(|(_, _, e)| matches!(e, MeanEntry::Value(_)));
    if all_values {
        w.write_record(["lat", "lon", "mean_c"])?;
    } else {
        w.write_record(["lat", "lon", "coef_name", "coef_value"])?;
    }
    let names = coefficient_names(field.harmonics);
    for (lat, lon, e) in field.cells() {
        match e {
            MeanEntry::Value(v) if all_values => w.write_record([lat.to_string(), lon.to_string(), v.to_string()])?,
            MeanEntry::Value(v) => w.write_record([lat.to_string(), lon.to_string(), "intercept".into(), v.to_string()])?,
            MeanEntry::Coefficients { beta, .. } => {
                for (n, b) in names.iter().zip(beta) {
                    w.write_record([lat.to_string(), lon.to_string(), n.clone(), b.to_string()])?;
                }
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
