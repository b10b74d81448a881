//! `tensorreg`: fit and apply tensor-output regression models and run the
//! experiment pipelines.
//!
//! Each command prints one JSON line on stdout; diagnostics go to stderr.
//! Exit status is 2 for usage, input and I/O errors and 3 for numerical
//! failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use tensorreg::fsutil::write_atomic;
use tensorreg::harness::{
    build_forecast_dataset, load_metoffice, run_experiment, ExperimentConfig, ExperimentKind,
};
use tensorreg::regress::{holrr_fit, kholrr_fit, KernelSpec, Model, RegressionProblem};
use tensorreg::tensor::{encode_tensor, load_tensor, multilinear_rank, DEFAULT_RANK_TOL};
use tensorreg::{DenseTensor, Error, Matrix};

#[derive(Parser)]
#[command(name = "tensorreg", version, about = "Tensor-output regression under multilinear rank constraints")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a HOLRR model (kernelized with --kernel) and save it.
    Fit(FitArgs),
    /// Predict outputs for the rows of an input matrix.
    Predict(PredictArgs),
    /// Run an experiment and write its reports.
    Experiment(ExperimentArgs),
    /// Inspect or convert tensor files.
    #[command(subcommand)]
    Tensor(TensorCommand),
    /// Build forecasting inputs and targets from Met Office station files.
    IngestMet(IngestArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Inputs, one row per sample (CSV or order-2 DTEN).
    #[arg(long)]
    x: PathBuf,
    /// Outputs stacked along the first mode (DTEN, or CSV for vector outputs).
    #[arg(long)]
    y: PathBuf,
    /// Multilinear rank, input mode first, e.g. 3,2,2.
    #[arg(long, value_delimiter = ',', required = true)]
    ranks: Vec<usize>,
    #[arg(long, default_value_t = 1e-3)]
    gamma: f64,
    /// linear, rbf:<sigma> or poly:<degree>[,<offset>].
    #[arg(long)]
    kernel: Option<KernelSpec>,
    /// Model file to write.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Inputs, one row per sample (CSV or order-2 DTEN).
    #[arg(long)]
    x: PathBuf,
    /// Predictions file (DTEN, or CSV for vector outputs).
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// synth-linear, synth-nonlinear, image or forecast.
    name: ExperimentKind,
    /// JSON configuration overlaid on the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Reduced grid for a fast run.
    #[arg(long)]
    quick: bool,
    /// Base seed; falls back to the config file, then TENSORREG_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for independent trials.
    #[arg(long)]
    jobs: Option<usize>,
    /// Methods such as holrr or lrr@rbf:2, comma separated.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Fit repetitions for timing (0 records no time).
    #[arg(long)]
    timing_repeats: Option<usize>,
    /// PPM image (image experiment).
    #[arg(long)]
    image: Option<PathBuf>,
    /// channels or height (image experiment).
    #[arg(long)]
    task: Option<String>,
    /// Station file directory (forecast experiment).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short, default_value = "results")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum TensorCommand {
    /// Print shape and summary statistics.
    Inspect { file: PathBuf },
    /// Convert between DTEN and CSV (chosen by extension).
    Convert { input: PathBuf, output: PathBuf },
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    data_dir: PathBuf,
    /// Station names; every *.txt file when omitted.
    #[arg(long, value_delimiter = ',')]
    stations: Option<Vec<String>>,
    #[arg(long, default_value_t = 1)]
    horizon: usize,
    #[arg(long, default_value_t = 2)]
    window: usize,
    /// Inclusive year range, e.g. 1960,2000.
    #[arg(long, value_delimiter = ',')]
    years: Option<Vec<i32>>,
    /// Directory for x.dten, y.dten and months.csv.
    #[arg(long, short)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Tensor(t) => cmd_tensor(t),
        Command::IngestMet(a) => cmd_ingest(a),
    };
    match result {
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}

fn load_matrix(path: &Path) -> Result<Matrix, Error> {
    let t = load_tensor(path)?;
    if t.order() != 2 {
        return Err(Error::Argument(format!(
            "{}: expected a matrix, found shape {:?}",
            path.display(),
            t.shape()
        )));
    }
    Ok(t.unfold0().into_owned())
}

fn rmse(a: &DenseTensor, b: &DenseTensor) -> Result<f64, Error> {
    tensorreg::harness::rmse(a, b)
}

fn cmd_fit(a: FitArgs) -> Result<Value, Error> {
    let x = load_matrix(&a.x)?;
    let y = load_tensor(&a.y)?;
    let start = Instant::now();
    let model: Model = match a.kernel {
        None => holrr_fit(&RegressionProblem::new(x.clone(), y.clone(), a.gamma, a.ranks)?)?.into(),
        Some(k) => kholrr_fit(k, &x, &y, a.gamma, &a.ranks)?.into(),
    };
    let secs = start.elapsed().as_secs_f64();
    let train_rmse = rmse(&y, &model.predict_batch(&x)?)?;
    model.save(&a.out)?;
    for w in model.warnings() {
        log::warn!("{w}");
    }
    Ok(json!({
        "command": "fit",
        "model": a.out,
        "ranks": model.ranks(),
        "train_rmse": train_rmse,
        "fit_seconds": secs,
        "warnings": model.warnings(),
    }))
}

fn cmd_predict(a: PredictArgs) -> Result<Value, Error> {
    let model = Model::load(&a.model)?;
    let x = load_matrix(&a.x)?;
    let pred = model.predict_batch(&x)?;
    write_atomic(&a.out, &encode_tensor(&a.out, &pred)?)?;
    Ok(json!({"command": "predict", "output": a.out, "shape": pred.shape()}))
}

fn cmd_experiment(a: ExperimentArgs) -> Result<Value, Error> {
    let mut config = ExperimentConfig::defaults(a.name, a.quick);
    let file: Option<Value> = match &a.config {
        Some(p) => Some(serde_json::from_slice(&std::fs::read(p)?)?),
        None => None,
    };
    let file_has_seed = file.as_ref().is_some_and(|v| v.get("seed").is_some());
    if a.seed.is_none() && !file_has_seed {
        if let Ok(s) = std::env::var("TENSORREG_SEED") {
            let seed: u64 = s
                .trim()
                .parse()
                .map_err(|_| Error::Argument(format!("TENSORREG_SEED is not an integer: {s:?}")))?;
            config = config.merge(&json!({ "seed": seed }))?;
        }
    }
    if let Some(f) = &file {
        config = config.merge(f)?;
    }
    let mut flags = serde_json::Map::new();
    if let Some(s) = a.seed {
        flags.insert("seed".into(), json!(s));
    }
    if let Some(j) = a.jobs {
        flags.insert("jobs".into(), json!(j));
    }
    if let Some(m) = a.methods {
        flags.insert("methods".into(), json!(m));
    }
    if let Some(t) = a.timing_repeats {
        flags.insert("timing_repeats".into(), json!(t));
    }
    if let Some(p) = a.image {
        flags.insert("image".into(), json!(p));
    }
    if let Some(t) = a.task {
        flags.insert("task".into(), json!(t));
    }
    if let Some(d) = a.data_dir {
        flags.insert("data_dir".into(), json!(d));
    }
    let config = config.merge(&Value::Object(flags))?;
    let report = run_experiment(a.name, &config)?;
    let files = report.write_to_dir(&a.out)?;
    Ok(json!({
        "command": "experiment",
        "experiment": a.name,
        "records": report.records.len(),
        "files": files,
        "aggregates": report.aggregates(),
    }))
}

fn cmd_tensor(t: TensorCommand) -> Result<Value, Error> {
    match t {
        TensorCommand::Inspect { file } => {
            let t = load_tensor(&file)?;
            let min = t.data().iter().copied().fold(f64::INFINITY, f64::min);
            let max = t.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok(json!({
                "command": "tensor inspect",
                "file": file,
                "shape": t.shape(),
                "entries": t.len(),
                "min": min,
                "max": max,
                "frobenius_norm": t.frobenius_norm(),
                "multilinear_rank": multilinear_rank(&t, DEFAULT_RANK_TOL)?,
            }))
        }
        TensorCommand::Convert { input, output } => {
            let t = load_tensor(&input)?;
            write_atomic(&output, &encode_tensor(&output, &t)?)?;
            Ok(json!({"command": "tensor convert", "input": input, "output": output, "shape": t.shape()}))
        }
    }
}

fn cmd_ingest(a: IngestArgs) -> Result<Value, Error> {
    let series = load_metoffice(&a.data_dir, a.stations.as_deref())?;
    let years = match a.years.as_deref() {
        None => None,
        Some(&[lo, hi]) => Some((lo, hi)),
        Some(_) => return Err(Error::Argument("--years takes two values, e.g. 1960,2000".into())),
    };
    let d = build_forecast_dataset(&series, a.window, a.horizon, years)?;
    std::fs::create_dir_all(&a.out)?;
    let xp = a.out.join("x.dten");
    let yp = a.out.join("y.dten");
    let mp = a.out.join("months.csv");
    write_atomic(&xp, &encode_tensor(&xp, &DenseTensor::from_matrix(&d.x))?)?;
    write_atomic(&yp, &encode_tensor(&yp, &d.y)?)?;
    let mut months = String::from("year,month\n");
    for (y, m) in &d.target_months {
        months.push_str(&format!("{y},{m}\n"));
    }
    write_atomic(&mp, months.as_bytes())?;
    Ok(json!({
        "command": "ingest-met",
        "stations": d.stations,
        "samples": d.x.nrows(),
        "x_shape": [d.x.nrows(), d.x.ncols()],
        "y_shape": d.y.shape(),
        "files": [xp, yp, mp],
    }))
}
