//! Met Office historic station data and the sliding-window forecasting
//! dataset built from it.
//!
//! Station files are the plain-text layout published for UK historic
//! stations: a free-form header, then one row per month with columns
//! `yyyy mm tmax tmin af rain sun`. Values may carry a `*` (estimated), `#`
//! or `$` suffix, `---` marks a missing value, and anything after the seventh
//! column (such as `Provisional`) is ignored.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, Matrix};

pub const VARIABLES: [&str; 5] = ["tmax", "tmin", "af", "rain", "sun"];
const NVARS: usize = VARIABLES.len();

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonthRecord {
    pub year: i32,
    pub month: u32,
    pub values: [Option<f64>; NVARS],
}

impl MonthRecord {
    fn index(&self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    fn complete(&self) -> Option<[f64; NVARS]> {
        let mut out = [0.0; NVARS];
        for (o, v) in out.iter_mut().zip(self.values) {
            *o = v?;
        }
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationSeries {
    pub name: String,
    pub records: Vec<MonthRecord>,
}

fn parse_value(tok: &str) -> std::result::Result<Option<f64>, String> {
    let t = tok.trim_end_matches(['*', '#', '$']);
    if t == "---" {
        return Ok(None);
    }
    t.parse::<f64>()
        .map(Some)
        .map_err(|_| format!("bad value {tok:?}"))
}

/// Parses one station file. `path` is used for the station name (file stem)
/// and in error messages.
pub fn parse_station(path: &Path, text: &str) -> Result<StationSeries> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut records: Vec<MonthRecord> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        let is_data = toks
            .first()
            .is_some_and(|t| t.len() == 4 && t.bytes().all(|b| b.is_ascii_digit()));
        if !is_data {
            continue;
        }
        if toks.len() < 2 + NVARS {
            return Err(err(lineno, format!("expected {} columns, found {}", 2 + NVARS, toks.len())));
        }
        let year: i32 = toks[0].parse().map_err(|_| err(lineno, format!("bad year {:?}", toks[0])))?;
        let month: u32 = toks[1]
            .parse()
            .ok()
            .filter(|m| (1..=12).contains(m))
            .ok_or_else(|| err(lineno, format!("bad month {:?}", toks[1])))?;
        let mut values = [None; NVARS];
        for (v, tok) in values.iter_mut().zip(&toks[2..2 + NVARS]) {
            *v = parse_value(tok).map_err(|m| err(lineno, m))?;
        }
        let rec = MonthRecord { year, month, values };
        if let Some(prev) = records.last() {
            if rec.index() <= prev.index() {
                return Err(err(
                    lineno,
                    format!(
                        "dates not increasing: {}-{:02} follows {}-{:02}",
                        year, month, prev.year, prev.month
                    ),
                ));
            }
        }
        records.push(rec);
    }
    if records.is_empty() {
        return Err(err(0, "no monthly records found".into()));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(StationSeries { name, records })
}

fn station_path(dir: &Path, name: &str) -> Option<PathBuf> {
    [name.to_string(), format!("{name}.txt"), format!("{name}data.txt")]
        .into_iter()
        .map(|f| dir.join(f))
        .find(|p| p.is_file())
}

/// Loads the named stations from `dir` (trying `<name>`, `<name>.txt` and
/// `<name>data.txt`), or every `*.txt` file in name order when no list is
/// given.
pub fn load_metoffice(dir: &Path, stations: Option<&[String]>) -> Result<Vec<StationSeries>> {
    let paths: Vec<PathBuf> = match stations {
        Some(names) => names
            .iter()
            .map(|n| {
                station_path(dir, n).ok_or_else(|| Error::Parse {
                    path: dir.join(n),
                    line: 0,
                    message: "station file not found".into(),
                })
            })
            .collect::<Result<_>>()?,
        None => {
            let mut v: Vec<PathBuf> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt"))
                .collect();
            v.sort();
            v
        }
    };
    if paths.is_empty() {
        return Err(Error::arg(format!("no station files in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Parse {
                path: p.clone(),
                line: 0,
                message: e.to_string(),
            })?;
            parse_station(p, &text)
        })
        .collect()
}

/// Samples for forecasting the next `horizon` months from the previous
/// `window` months at every station.
///
/// Covariate entry `v + V·s + V·S·w` holds variable `v` at station `s` in
/// window slot `w` (slot 0 is the oldest month); targets are
/// `N × horizon × S × V`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastDataset {
    pub x: Matrix,
    pub y: DenseTensor,
    /// `(year, month)` of each sample's first target month.
    pub target_months: Vec<(i32, u32)>,
    pub stations: Vec<String>,
    pub window: usize,
    pub horizon: usize,
}

/// Builds the dataset from the months complete at every station (optionally
/// restricted to an inclusive year range). A sample is kept only when all of
/// its `window + horizon` months are consecutive and complete.
pub fn build_forecast_dataset(
    series: &[StationSeries],
    window: usize,
    horizon: usize,
    years: Option<(i32, i32)>,
) -> Result<ForecastDataset> {
    if series.is_empty() {
        return Err(Error::arg("no stations"));
    }
    if window == 0 || horizon == 0 {
        return Err(Error::arg("window and horizon must be at least 1"));
    }
    let s_count = series.len();
    let in_range = |r: &MonthRecord| years.is_none_or(|(a, b)| (a..=b).contains(&r.year));
    let mut table: BTreeMap<i64, Vec<Option<[f64; NVARS]>>> = BTreeMap::new();
    for (s, st) in series.iter().enumerate() {
        for r in st.records.iter().filter(|r| in_range(r)) {
            if let Some(vals) = r.complete() {
                table.entry(r.index()).or_insert_with(|| vec![None; s_count])[s] = Some(vals);
            }
        }
    }
    let complete: BTreeMap<i64, Vec<[f64; NVARS]>> = table
        .into_iter()
        .filter_map(|(m, v)| v.into_iter().collect::<Option<Vec<_>>>().map(|v| (m, v)))
        .collect();

    let span = (window + horizon) as i64;
    let starts: Vec<i64> = complete
        .keys()
        .copied()
        .filter(|&t0| (0..span).all(|o| complete.contains_key(&(t0 + o))))
        .collect();
    if starts.is_empty() {
        return Err(Error::arg(format!(
            "no run of {span} consecutive months is complete at every station"
        )));
    }
    let n = starts.len();
    let d0 = window * s_count * NVARS;
    let mut x = Matrix::zeros(n, d0);
    let mut y = DenseTensor::zeros(&[n, horizon, s_count, NVARS])?;
    let mut target_months = Vec::with_capacity(n);
    for (i, &t0) in starts.iter().enumerate() {
        for w in 0..window {
            let month = &complete[&(t0 + w as i64)];
            for (s, vals) in month.iter().enumerate() {
                for (v, &val) in vals.iter().enumerate() {
                    x[(i, v + NVARS * s + NVARS * s_count * w)] = val;
                }
            }
        }
        for h in 0..horizon {
            let month = &complete[&(t0 + (window + h) as i64)];
            for (s, vals) in month.iter().enumerate() {
                for (v, &val) in vals.iter().enumerate() {
                    let idx = i + n * (h + horizon * (s + s_count * v));
                    y.data_mut()[idx] = val;
                }
            }
        }
        let t = t0 + window as i64;
        target_months.push(((t.div_euclid(12)) as i32, (t.rem_euclid(12) + 1) as u32));
    }
    Ok(ForecastDataset {
        x,
        y,
        target_months,
        stations: series.iter().map(|s| s.name.clone()).collect(),
        window,
        horizon,
    })
}

/// Per-variable z-scoring, with statistics taken over every covariate entry
/// of the rows it was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Column `j` of `x` is taken to hold variable `j mod V`.
    pub fn fit(x: &Matrix) -> Result<Self> {
        if x.nrows() == 0 || !x.ncols().is_multiple_of(NVARS) {
            return Err(Error::arg(format!(
                "covariates must have a multiple of {NVARS} columns and at least one row"
            )));
        }
        let mut sum = [0.0; NVARS];
        let mut sq = [0.0; NVARS];
        let per_var = (x.nrows() * x.ncols() / NVARS) as f64;
        for j in 0..x.ncols() {
            for &val in x.column(j).iter() {
                sum[j % NVARS] += val;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / per_var).collect();
        for j in 0..x.ncols() {
            for &val in x.column(j).iter() {
                sq[j % NVARS] += (val - mean[j % NVARS]).powi(2);
            }
        }
        let std = sq
            .iter()
            .map(|s| {
                let sd = (s / per_var).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply_x(&self, x: &Matrix) -> Matrix {
        Matrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            let v = j % NVARS;
            (x[(i, j)] - self.mean[v]) / self.std[v]
        })
    }

    /// Normalizes targets whose last mode indexes the variables.
    pub fn apply_y(&self, y: &DenseTensor) -> Result<DenseTensor> {
        let last = *y.shape().last().unwrap_or(&0);
        if last != NVARS {
            return Err(Error::arg(format!("targets must end in a mode of size {NVARS}")));
        }
        let stride = y.len() / NVARS;
        let mut out = y.clone();
        for (idx, val) in out.data_mut().iter_mut().enumerate() {
            let v = idx / stride;
            *val = (*val - self.mean[v]) / self.std[v];
        }
        Ok(out)
    }
}

/// Station files in the historic-station layout with seasonal synthetic
/// values, for smoke runs and tests. Returns `(file name, contents)` pairs
/// covering every month of the inclusive year range.
pub fn synthetic_station_files(stations: usize, years: (i32, i32), seed: u64) -> Vec<(String, String)> {
    use crate::datagen::{derive_seed, Rng};
    const BASE: [f64; NVARS] = [14.0, 6.0, 3.0, 70.0, 120.0];
    const AMP: [f64; NVARS] = [6.0, 5.0, 3.0, 20.0, 70.0];
    (0..stations)
        .map(|s| {
            let mut rng = Rng::new(derive_seed(seed, s as u64));
            let offset = rng.normal();
            let mut text = format!(
                "Station{s:02}\nLocation: synthetic\nEstimated data is marked with a * after the value.\n\
                 Missing data (more than 2 days missing in month) is marked by  ---.\n\
                 {:>7}{:>4}{:>7}{:>8}{:>8}{:>8}{:>8}\n{:>18}{:>8}{:>8}{:>8}{:>8}\n",
                "yyyy", "mm", "tmax", "tmin", "af", "rain", "sun", "degC", "degC", "days", "mm", "hours"
            );
            let mut state = [0.0; NVARS];
            for year in years.0..=years.1 {
                for month in 1..=12u32 {
                    let phase = 2.0 * std::f64::consts::PI * (month as f64 - 4.0) / 12.0;
                    let mut cols = Vec::with_capacity(NVARS);
                    for v in 0..NVARS {
                        state[v] = 0.6 * state[v] + rng.normal();
                        let sign = if v == 2 || v == 3 { -1.0 } else { 1.0 };
                        let val = (BASE[v] + offset + sign * AMP[v] * phase.sin() + 0.15 * AMP[v] * state[v]).max(0.0);
                        cols.push(if v == 2 { format!("{}", val.round()) } else { format!("{val:.1}") });
                    }
                    if rng.below(800) == 0 {
                        cols[rng.below(NVARS)] = "---".into();
                    } else if rng.below(10) == 0 {
                        cols[0].push('*');
                    }
                    text.push_str(&format!("{year:>7}{month:>4}"));
                    for c in cols {
                        text.push_str(&format!("{c:>8}"));
                    }
                    if year == years.1 && month == 12 {
                        text.push_str("  Provisional");
                    }
                    text.push('\n');
                }
            }
            (format!("station{s:02}.txt"), text)
        })
        .collect()
}
