//! Experiment runners for the synthetic, image and forecasting studies, and
//! the reports they emit.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::datagen::{
    derive_seed, encode_ppm, gen_image_measurements, gen_linear_synthetic, gen_nonlinear_synthetic, green_cross,
    load_ppm, ImageTask, Rng, Stream, SynthSpec,
};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::tensor::{DenseTensor, Matrix};

use super::cv::{grid_search_cv, holdout_search, log_grid, select_rows, GridSpec};
use super::metoffice::{build_forecast_dataset, load_metoffice, Normalizer};
use super::method::{fit_method, Estimator, Fitted, Hyper, MethodSpec};
use super::rmse;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SynthLinear,
    SynthNonlinear,
    Image,
    Forecast,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        ExperimentKind::SynthLinear,
        ExperimentKind::SynthNonlinear,
        ExperimentKind::Image,
        ExperimentKind::Forecast,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SynthLinear => "synth-linear",
            ExperimentKind::SynthNonlinear => "synth-nonlinear",
            ExperimentKind::Image => "image",
            ExperimentKind::Forecast => "forecast",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::arg(format!("unknown experiment {s:?} (expected synth-linear, synth-nonlinear, image or forecast)")))
    }
}

fn parse_methods(names: &[&str]) -> Vec<MethodSpec> {
    names.iter().map(|m| m.parse().expect("built-in method name")).collect()
}

/// Synthetic study: `Y = W ×̄_0 x + E` (linear) or `W ×̄_0 (x ⊗ x) + E`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub sizes: Vec<usize>,
    pub trials: usize,
    pub n_test: usize,
    pub noise_std: f64,
    pub input_dim: usize,
    pub output_shape: Vec<usize>,
    /// Multilinear rank of the generating tensor, input mode first.
    pub ranks: Vec<usize>,
    pub methods: Vec<MethodSpec>,
    pub gammas: Vec<f64>,
    pub folds: usize,
    /// LRR rank candidates; default `1..=min(input features, outputs)`.
    pub lrr_ranks: Option<Vec<usize>>,
    /// HOLRR rank candidates; default every tuple with entries in
    /// `{r-2, r, r+2}` around the generating ranks, clipped to the dimensions.
    pub holrr_ranks: Option<Vec<Vec<usize>>>,
    /// Final fits are timed this many times and the median kept; 0 skips
    /// timing and records 0 seconds.
    pub timing_repeats: usize,
    pub jobs: usize,
}

impl SynthConfig {
    pub fn defaults(nonlinear: bool, quick: bool) -> Self {
        let base = if nonlinear {
            SynthSpec::standard_nonlinear(1, 0)
        } else {
            SynthSpec::standard_linear(1, 0)
        };
        let methods = if nonlinear {
            parse_methods(&["rls@poly:2,1", "lrr@poly:2,1", "holrr@poly:2,1"])
        } else {
            parse_methods(&["rls", "lrr", "holrr"])
        };
        Self {
            seed: 0,
            sizes: if quick { vec![20, 60, 100] } else { vec![20, 40, 60, 80, 100] },
            trials: if quick { 5 } else { 20 },
            n_test: base.n_test,
            noise_std: base.noise_std,
            input_dim: base.input_dim,
            output_shape: base.output_shape,
            ranks: base.ranks,
            methods,
            gammas: if quick { log_grid(-3.0, 0.0, 4) } else { log_grid(-4.0, 2.0, 7) },
            folds: 3,
            lrr_ranks: None,
            holrr_ranks: None,
            timing_repeats: 3,
            jobs: 1,
        }
    }
}

/// Recovery of an image from noisy linear measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageConfig {
    pub seed: u64,
    /// PPM file; the built-in green cross when absent.
    pub image: Option<PathBuf>,
    pub cross_size: usize,
    pub task: ImageTask,
    pub n: usize,
    pub noise_std: f64,
    pub gamma: f64,
    pub methods: Vec<MethodSpec>,
    pub lrr_ranks: Option<Vec<usize>>,
    pub holrr_ranks: Option<Vec<Vec<usize>>>,
    pub timing_repeats: usize,
    pub jobs: usize,
}

impl ImageConfig {
    pub fn defaults() -> Self {
        Self {
            seed: 0,
            image: None,
            cross_size: 50,
            task: ImageTask::Channels,
            n: 200,
            noise_std: 1.0,
            gamma: 1e-3,
            methods: parse_methods(&["rls", "lrr", "holrr"]),
            lrr_ranks: None,
            holrr_ranks: None,
            timing_repeats: 3,
            jobs: 1,
        }
    }
}

/// Forecasting every variable at every station `k` months ahead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastConfig {
    pub seed: u64,
    pub data_dir: Option<PathBuf>,
    /// Station files to load; every `*.txt` in `data_dir` when absent.
    pub stations: Option<Vec<String>>,
    /// Inclusive year range.
    pub years: Option<(i32, i32)>,
    pub window: usize,
    pub horizons: Vec<usize>,
    pub sizes: Vec<usize>,
    pub n_test: usize,
    pub n_val: usize,
    pub runs: usize,
    pub normalize: bool,
    pub methods: Vec<MethodSpec>,
    pub gammas: Vec<f64>,
    pub lrr_ranks: Vec<usize>,
    /// HOLRR candidates; default `R_0 ∈ {5,10,20,40}`, `R_k ∈ {1,k}`,
    /// `R_s ∈ {4,8,16}`, `R_v ∈ {2,3,5}`, clipped to the dimensions.
    pub holrr_ranks: Option<Vec<Vec<usize>>>,
    pub timing_repeats: usize,
    pub jobs: usize,
}

impl ForecastConfig {
    pub fn defaults(quick: bool) -> Self {
        Self {
            seed: 0,
            data_dir: None,
            stations: None,
            years: Some((1960, 2000)),
            window: 2,
            horizons: if quick { vec![1, 3] } else { vec![1, 3, 5] },
            sizes: if quick { vec![50] } else { vec![50, 100] },
            n_test: 50,
            n_val: 20,
            runs: if quick { 2 } else { 10 },
            normalize: true,
            methods: parse_methods(&[
                "rls",
                "lrr",
                "holrr",
                "rls@rbf:15",
                "lrr@rbf:15",
                "holrr@rbf:15",
                "rls@poly:2,1",
                "lrr@poly:2,1",
                "holrr@poly:2,1",
            ]),
            gammas: if quick { log_grid(-3.0, 0.0, 4) } else { log_grid(-4.0, 2.0, 7) },
            lrr_ranks: vec![1, 2, 5, 10, 20, 40],
            holrr_ranks: None,
            timing_repeats: 3,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExperimentConfig {
    Synth(SynthConfig),
    Image(ImageConfig),
    Forecast(ForecastConfig),
}

fn merge_value(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge_value(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

impl ExperimentConfig {
    pub fn defaults(kind: ExperimentKind, quick: bool) -> Self {
        match kind {
            ExperimentKind::SynthLinear => Self::Synth(SynthConfig::defaults(false, quick)),
            ExperimentKind::SynthNonlinear => Self::Synth(SynthConfig::defaults(true, quick)),
            ExperimentKind::Image => Self::Image(ImageConfig::defaults()),
            ExperimentKind::Forecast => Self::Forecast(ForecastConfig::defaults(quick)),
        }
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Overlays a JSON object on this configuration; nested objects merge
    /// key by key, anything else replaces. Unknown keys are rejected.
    pub fn merge(&self, overrides: &Value) -> Result<Self> {
        if !overrides.is_object() {
            return Err(Error::arg("configuration overrides must be a JSON object"));
        }
        let mut v = self.to_json();
        merge_value(&mut v, overrides);
        let bad = |e: serde_json::Error| Error::arg(format!("invalid configuration: {e}"));
        Ok(match self {
            Self::Synth(_) => Self::Synth(serde_json::from_value(v).map_err(bad)?),
            Self::Image(_) => Self::Image(serde_json::from_value(v).map_err(bad)?),
            Self::Forecast(_) => Self::Forecast(serde_json::from_value(v).map_err(bad)?),
        })
    }
}

/// One row of `report.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub experiment: String,
    pub method: String,
    pub kernel: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub k: Option<usize>,
    pub trial: usize,
    pub seed: u64,
    pub rmse: f64,
    pub fit_seconds: f64,
}

impl TrialRecord {
    fn label(&self) -> String {
        if self.kernel.is_empty() {
            self.method.clone()
        } else {
            format!("{}@{}", self.method, self.kernel)
        }
    }
}

/// Hyperparameters used for one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub method: String,
    pub kernel: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub k: Option<usize>,
    pub trial: usize,
    pub gamma: f64,
    pub ranks: Vec<usize>,
    /// Validation RMSE of the chosen point, when it was selected by search.
    pub validation_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub kernel: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub k: Option<usize>,
    pub trials: usize,
    pub mean_rmse: f64,
    /// Sample standard deviation; 0 for a single trial.
    pub std_rmse: f64,
    pub mean_fit_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub experiment: ExperimentKind,
    pub config: Value,
    pub records: Vec<TrialRecord>,
    pub selections: Vec<Selection>,
    /// Extra files (such as reconstructed images) by file name.
    pub artifacts: Vec<(String, Vec<u8>)>,
}

impl ExperimentReport {
    /// Means and deviations per (method, kernel, N, k), in order of first
    /// appearance.
    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut order: Vec<(String, String, usize, Option<usize>)> = Vec::new();
        let mut groups: BTreeMap<(String, String, usize, Option<usize>), Vec<&TrialRecord>> = BTreeMap::new();
        for r in &self.records {
            let key = (r.method.clone(), r.kernel.clone(), r.n, r.k);
            if !groups.contains_key(&key) {
                order.push(key.clone());
            }
            groups.entry(key).or_default().push(r);
        }
        order
            .into_iter()
            .map(|key| {
                let rs = &groups[&key];
                let n = rs.len() as f64;
                let mean = rs.iter().map(|r| r.rmse).sum::<f64>() / n;
                let var = if rs.len() > 1 {
                    rs.iter().map(|r| (r.rmse - mean).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                Aggregate {
                    method: key.0,
                    kernel: key.1,
                    n: key.2,
                    k: key.3,
                    trials: rs.len(),
                    mean_rmse: mean,
                    std_rmse: var.sqrt(),
                    mean_fit_seconds: rs.iter().map(|r| r.fit_seconds).sum::<f64>() / n,
                }
            })
            .collect()
    }

    /// Mean test RMSE of one (method, kernel, N, k) cell.
    pub fn mean_rmse(&self, method: &str, kernel: &str, n: usize, k: Option<usize>) -> Option<f64> {
        self.aggregates()
            .into_iter()
            .find(|a| a.method == method && a.kernel == kernel && a.n == n && a.k == k)
            .map(|a| a.mean_rmse)
    }

    pub fn csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    pub fn json_bytes(&self) -> Result<Vec<u8>> {
        let v = serde_json::json!({
            "experiment": self.experiment,
            "config": self.config,
            "aggregates": self.aggregates(),
            "selections": self.selections,
        });
        let mut out = serde_json::to_vec_pretty(&v)?;
        out.push(b'\n');
        Ok(out)
    }

    /// Plot data, one file per horizon: rows are training sizes, columns the
    /// mean test RMSE of each method. Experiments with a single size have
    /// none.
    pub fn plot_csvs(&self) -> Result<Vec<(String, Vec<u8>)>> {
        let mut ks: Vec<Option<usize>> = self.records.iter().map(|r| r.k).collect();
        ks.sort();
        ks.dedup();
        let mut out = Vec::new();
        for k in ks {
            let recs: Vec<&TrialRecord> = self.records.iter().filter(|r| r.k == k).collect();
            let mut sizes: Vec<usize> = recs.iter().map(|r| r.n).collect();
            sizes.sort_unstable();
            sizes.dedup();
            if sizes.len() < 2 && self.experiment == ExperimentKind::Image {
                continue;
            }
            let mut labels: Vec<String> = Vec::new();
            for r in &recs {
                let l = r.label();
                if !labels.contains(&l) {
                    labels.push(l);
                }
            }
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["N".to_string()];
            header.extend(labels.iter().cloned());
            w.write_record(&header)?;
            for &n in &sizes {
                let mut row = vec![n.to_string()];
                for l in &labels {
                    let vals: Vec<f64> = recs.iter().filter(|r| r.n == n && &r.label() == l).map(|r| r.rmse).collect();
                    row.push(if vals.is_empty() {
                        String::new()
                    } else {
                        (vals.iter().sum::<f64>() / vals.len() as f64).to_string()
                    });
                }
                w.write_record(&row)?;
            }
            let name = match k {
                Some(k) => format!("plot_rmse_k{k}.csv"),
                None => "plot_rmse.csv".to_string(),
            };
            out.push((name, w.into_inner().map_err(|e| Error::Io(e.into_error()))?));
        }
        Ok(out)
    }

    /// Every output file by name: `report.csv`, `report.json`, plot data and
    /// artifacts.
    pub fn files(&self) -> Result<Vec<(String, Vec<u8>)>> {
        let mut files = vec![
            ("report.csv".to_string(), self.csv_bytes()?),
            ("report.json".to_string(), self.json_bytes()?),
        ];
        files.extend(self.plot_csvs()?);
        files.extend(self.artifacts.iter().cloned());
        Ok(files)
    }

    /// Writes [`ExperimentReport::files`] into `dir` (created if needed), each
    /// file atomically. Returns the paths written.
    pub fn write_to_dir(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let files = self.files()?;
        std::fs::create_dir_all(dir)?;
        files
            .into_iter()
            .map(|(name, bytes)| {
                let p = dir.join(name);
                write_atomic(&p, &bytes)?;
                Ok(p)
            })
            .collect()
    }
}

/// Runs `kind` under `config` (which must be of the matching variant).
pub fn run_experiment(kind: ExperimentKind, config: &ExperimentConfig) -> Result<ExperimentReport> {
    let (records, selections, artifacts) = match (kind, config) {
        (ExperimentKind::SynthLinear, ExperimentConfig::Synth(c)) => run_synth(kind, c, false)?,
        (ExperimentKind::SynthNonlinear, ExperimentConfig::Synth(c)) => run_synth(kind, c, true)?,
        (ExperimentKind::Image, ExperimentConfig::Image(c)) => run_image(c)?,
        (ExperimentKind::Forecast, ExperimentConfig::Forecast(c)) => run_forecast(c)?,
        _ => return Err(Error::arg(format!("configuration does not belong to experiment {kind}"))),
    };
    Ok(ExperimentReport {
        experiment: kind,
        config: config.to_json(),
        records,
        selections,
        artifacts,
    })
}

type Outcome = (Vec<TrialRecord>, Vec<Selection>, Vec<(String, Vec<u8>)>);

fn run_tasks<T, R, F>(jobs: usize, tasks: Vec<T>, f: F) -> Result<Vec<R>>
where
    T: Send,
    R: Send,
    F: Fn(T) -> Result<R> + Send + Sync,
{
    if jobs <= 1 {
        return tasks.into_iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::arg(format!("cannot start worker pool: {e}")))?;
    pool.install(|| tasks.into_par_iter().map(f).collect())
}

/// Fits once per repetition and returns the last model with the median time.
fn timed_fit(method: &MethodSpec, x: &Matrix, y: &DenseTensor, hyper: &Hyper, repeats: usize) -> Result<(Fitted, f64)> {
    if repeats == 0 {
        return Ok((fit_method(method, x, y, hyper)?, 0.0));
    }
    let mut times = Vec::with_capacity(repeats);
    let mut fitted = None;
    for _ in 0..repeats {
        let t = Instant::now();
        fitted = Some(fit_method(method, x, y, hyper)?);
        times.push(t.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    let m = times.len() / 2;
    let median = if times.len() % 2 == 1 { times[m] } else { 0.5 * (times[m - 1] + times[m]) };
    Ok((fitted.expect("at least one repetition"), median))
}

fn check_common(methods: &[MethodSpec], gammas: &[f64]) -> Result<()> {
    if methods.is_empty() {
        return Err(Error::arg("no methods configured"));
    }
    if gammas.is_empty() {
        return Err(Error::arg("γ grid is empty"));
    }
    Ok(())
}

/// Every tuple whose entry `i` is drawn from `choices[i]`, in lexicographic
/// order.
fn product(choices: &[Vec<usize>]) -> Vec<Vec<usize>> {
    choices.iter().fold(vec![Vec::new()], |acc, c| {
        acc.iter()
            .flat_map(|p| {
                c.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect()
    })
}

fn clipped(values: impl IntoIterator<Item = usize>, cap: usize) -> Vec<usize> {
    let mut v: Vec<usize> = values.into_iter().map(|r| r.clamp(1, cap.max(1))).collect();
    v.sort_unstable();
    v.dedup();
    v
}

fn rank_candidates(
    method: &MethodSpec,
    lrr: &[usize],
    holrr: &[Vec<usize>],
) -> Vec<Vec<usize>> {
    match method.estimator {
        Estimator::Rls => vec![Vec::new()],
        Estimator::Lrr => lrr.iter().map(|&r| vec![r]).collect(),
        Estimator::Holrr => holrr.to_vec(),
    }
}

fn run_synth(kind: ExperimentKind, c: &SynthConfig, nonlinear: bool) -> Result<Outcome> {
    check_common(&c.methods, &c.gammas)?;
    if c.sizes.is_empty() || c.trials == 0 {
        return Err(Error::arg("need at least one training size and one trial"));
    }
    let w_in = if nonlinear { c.input_dim * c.input_dim } else { c.input_dim };
    let q: usize = c.output_shape.iter().product();
    let tasks: Vec<(usize, usize)> = c.sizes.iter().flat_map(|&n| (0..c.trials).map(move |t| (n, t))).collect();
    let results = run_tasks(c.jobs, tasks, |(n, t)| {
        let seed = derive_seed(c.seed, ((n as u64) << 32) | t as u64);
        let spec = SynthSpec {
            input_dim: c.input_dim,
            output_shape: c.output_shape.clone(),
            ranks: c.ranks.clone(),
            noise_std: c.noise_std,
            n_train: n,
            n_test: c.n_test,
            seed,
        };
        let data = if nonlinear { gen_nonlinear_synthetic(&spec)? } else { gen_linear_synthetic(&spec)? };
        let mut recs = Vec::new();
        let mut sels = Vec::new();
        for m in &c.methods {
            let cap0 = if m.kernel.is_some() { w_in } else { c.input_dim };
            let lrr = c.lrr_ranks.clone().unwrap_or_else(|| (1..=cap0.min(q)).collect());
            let holrr = c.holrr_ranks.clone().unwrap_or_else(|| {
                let mut dims = vec![cap0];
                dims.extend_from_slice(&c.output_shape);
                let choices: Vec<Vec<usize>> = c
                    .ranks
                    .iter()
                    .zip(&dims)
                    .map(|(&r, &d)| clipped([r.saturating_sub(2), r, r + 2], d))
                    .collect();
                product(&choices)
            });
            let grid = GridSpec {
                gammas: c.gammas.clone(),
                ranks: rank_candidates(m, &lrr, &holrr),
                folds: c.folds,
                seed: derive_seed(seed, 1),
            };
            let cv = grid_search_cv(m, &data.x_train, &data.y_train, &grid)?;
            let (fitted, secs) = timed_fit(m, &data.x_train, &data.y_train, &cv.best, c.timing_repeats)?;
            let err = rmse(&data.y_test, &fitted.predict(&data.x_test)?)?;
            log::info!("{kind} N={n} trial={t} {m}: rmse {err:.4} (γ={}, ranks {:?})", cv.best.gamma, cv.best.ranks);
            recs.push(TrialRecord {
                experiment: kind.name().into(),
                method: m.estimator.name().into(),
                kernel: m.kernel_label(),
                n,
                k: None,
                trial: t,
                seed,
                rmse: err,
                fit_seconds: secs,
            });
            sels.push(Selection {
                method: m.estimator.name().into(),
                kernel: m.kernel_label(),
                n,
                k: None,
                trial: t,
                gamma: cv.best.gamma,
                ranks: cv.best.ranks,
                validation_rmse: Some(cv.score),
            });
        }
        Ok((recs, sels))
    })?;
    let (recs, sels): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok((recs.concat(), sels.concat(), Vec::new()))
}

fn image_defaults(task: ImageTask) -> (Vec<usize>, Vec<Vec<usize>>) {
    match task {
        ImageTask::Channels => (vec![1, 2, 3], vec![vec![3, 1, 1], vec![3, 2, 2], vec![3, 3, 3], vec![3, 5, 5]]),
        ImageTask::Height => (vec![1, 2, 5, 10], vec![vec![2, 2, 2], vec![4, 4, 3], vec![8, 8, 3]]),
    }
}

/// The regression tensor a primal model has learned.
fn learned_tensor(fitted: &Fitted, input_dim: usize) -> Result<DenseTensor> {
    match fitted {
        Fitted::Linear { coef, out_shape, .. } => {
            let mut shape = vec![input_dim];
            shape.extend_from_slice(out_shape);
            DenseTensor::from_unfold0(coef, &shape)
        }
        Fitted::Holrr(m) => Ok(m.regression_tensor()),
        Fitted::Dual { .. } | Fitted::KernelHolrr(_) => {
            Err(Error::arg("the image experiment needs primal (non-kernel) methods"))
        }
    }
}

fn run_image(c: &ImageConfig) -> Result<Outcome> {
    check_common(&c.methods, &[c.gamma])?;
    let image = match &c.image {
        Some(p) => load_ppm(p)?,
        None => {
            if c.cross_size == 0 {
                return Err(Error::arg("cross_size must be positive"));
            }
            green_cross(c.cross_size)
        }
    };
    let (x, y) = gen_image_measurements(&image, c.task, c.n, c.noise_std, c.seed)?;
    let w_true = c.task.to_regression_tensor(&image)?;
    let dims = w_true.shape().to_vec();
    let (def_lrr, def_holrr) = image_defaults(c.task);
    let lrr = clipped(c.lrr_ranks.clone().unwrap_or(def_lrr), dims[0].min(y.len() / c.n));
    let mut holrr: Vec<Vec<usize>> = c
        .holrr_ranks
        .clone()
        .unwrap_or(def_holrr)
        .into_iter()
        .map(|r| r.iter().zip(&dims).map(|(&r, &d)| r.clamp(1, d)).collect())
        .collect();
    holrr.dedup();

    let mut points: Vec<(MethodSpec, Vec<usize>)> = Vec::new();
    for m in &c.methods {
        if m.kernel.is_some() {
            return Err(Error::arg(format!("{m}: the image experiment needs primal (non-kernel) methods")));
        }
        for r in rank_candidates(m, &lrr, &holrr) {
            points.push((*m, r));
        }
    }
    let task = c.task;
    let results = run_tasks(c.jobs, points, |(m, ranks)| {
        let hyper = Hyper { gamma: c.gamma, ranks };
        let (fitted, secs) = timed_fit(&m, &x, &y, &hyper, c.timing_repeats)?;
        let recon = task.to_image(&learned_tensor(&fitted, dims[0])?)?;
        let err = rmse(&image, &recon)?;
        let label = format!(
            "{}{}",
            m.estimator.name(),
            hyper.ranks.iter().map(|r| format!("_{r}")).collect::<String>()
        );
        let file = format!("{task}_{label}.ppm");
        log::info!("image {task} {label}: rmse {err:.4}");
        let rec = TrialRecord {
            experiment: ExperimentKind::Image.name().into(),
            method: label.clone(),
            kernel: String::new(),
            n: c.n,
            k: None,
            trial: 0,
            seed: c.seed,
            rmse: err,
            fit_seconds: secs,
        };
        let sel = Selection {
            method: label,
            kernel: String::new(),
            n: c.n,
            k: None,
            trial: 0,
            gamma: c.gamma,
            ranks: hyper.ranks,
            validation_rmse: None,
        };
        Ok((rec, sel, (file, encode_ppm(&recon)?)))
    })?;
    let mut artifacts = vec![(format!("{task}_truth.ppm"), encode_ppm(&image)?)];
    let mut recs = Vec::new();
    let mut sels = Vec::new();
    for (r, s, a) in results {
        recs.push(r);
        sels.push(s);
        artifacts.push(a);
    }
    Ok((recs, sels, artifacts))
}

fn forecast_holrr_defaults(k: usize, stations: usize, quick: bool) -> Vec<Vec<usize>> {
    let choices = if quick {
        vec![vec![5, 20], vec![1, k], vec![4, 16], vec![3, 5]]
    } else {
        vec![vec![5, 10, 20, 40], vec![1, k], vec![4, 8, 16], vec![2, 3, 5]]
    };
    let dims = [usize::MAX, k, stations, super::metoffice::VARIABLES.len()];
    let choices: Vec<Vec<usize>> = choices.into_iter().zip(dims).map(|(c, d)| clipped(c, d)).collect();
    product(&choices)
}

fn run_forecast(c: &ForecastConfig) -> Result<Outcome> {
    check_common(&c.methods, &c.gammas)?;
    let dir = c
        .data_dir
        .as_deref()
        .ok_or_else(|| Error::arg("the forecast experiment needs data_dir (station files)"))?;
    if c.horizons.is_empty() || c.sizes.is_empty() || c.runs == 0 || c.n_test == 0 || c.n_val == 0 {
        return Err(Error::arg("need horizons, sizes, runs and non-empty test and validation sets"));
    }
    let series = load_metoffice(dir, c.stations.as_deref())?;
    let quick = c.gammas.len() < 7;
    let mut tasks = Vec::new();
    let mut datasets = BTreeMap::new();
    for &k in &c.horizons {
        let d = build_forecast_dataset(&series, c.window, k, c.years)?;
        let need = c.sizes.iter().max().copied().unwrap_or(0) + c.n_val + c.n_test;
        if d.x.nrows() < need {
            return Err(Error::arg(format!(
                "horizon {k}: {} samples available, {need} needed",
                d.x.nrows()
            )));
        }
        log::info!("forecast k={k}: {} samples, X {}×{}, Y {:?}", d.x.nrows(), d.x.nrows(), d.x.ncols(), d.y.shape());
        datasets.insert(k, d);
        for &n in &c.sizes {
            for run in 0..c.runs {
                tasks.push((k, n, run));
            }
        }
    }
    let results = run_tasks(c.jobs, tasks, |(k, n, run)| {
        let d = &datasets[&k];
        let seed = derive_seed(c.seed, ((k as u64) << 40) | ((n as u64) << 20) | run as u64);
        let perm = Rng::stream(seed, Stream::Split).permutation(d.x.nrows());
        let train = &perm[..n];
        let val = &perm[n..n + c.n_val];
        let test = &perm[n + c.n_val..n + c.n_val + c.n_test];
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for rows in [train, val, test] {
            xs.push(select_rows(&d.x, rows));
            ys.push(DenseTensor::stack(&rows.iter().map(|&i| d.y.slice0(i)).collect::<Result<Vec<_>>>()?)?);
        }
        if c.normalize {
            let norm = Normalizer::fit(&xs[0])?;
            for (x, y) in xs.iter_mut().zip(ys.iter_mut()) {
                *x = norm.apply_x(x);
                *y = norm.apply_y(y)?;
            }
        }
        let holrr = c
            .holrr_ranks
            .clone()
            .unwrap_or_else(|| forecast_holrr_defaults(k, d.stations.len(), quick));
        let mut recs = Vec::new();
        let mut sels = Vec::new();
        for m in &c.methods {
            let cands = rank_candidates(m, &c.lrr_ranks, &holrr);
            let sel = holdout_search(m, (&xs[0], &ys[0]), (&xs[1], &ys[1]), &c.gammas, &cands)?;
            let (fitted, secs) = timed_fit(m, &xs[0], &ys[0], &sel.best, c.timing_repeats)?;
            let err = rmse(&ys[2], &fitted.predict(&xs[2])?)?;
            log::info!("forecast k={k} N={n} run={run} {m}: rmse {err:.4}");
            recs.push(TrialRecord {
                experiment: ExperimentKind::Forecast.name().into(),
                method: m.estimator.name().into(),
                kernel: m.kernel_label(),
                n,
                k: Some(k),
                trial: run,
                seed,
                rmse: err,
                fit_seconds: secs,
            });
            sels.push(Selection {
                method: m.estimator.name().into(),
                kernel: m.kernel_label(),
                n,
                k: Some(k),
                trial: run,
                gamma: sel.best.gamma,
                ranks: sel.best.ranks,
                validation_rmse: Some(sel.score),
            });
        }
        Ok((recs, sels))
    })?;
    let (recs, sels): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok((recs.concat(), sels.concat(), Vec::new()))
}
