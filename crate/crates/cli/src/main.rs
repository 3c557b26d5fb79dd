//! `cnnfd`: generate a synthetic dataset, train the surrogate, evaluate it and
//! predict single builds.
//!
//! Exit codes: 0 success, 1 runtime or I/O failure, 2 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use cnnfd::config::KeyValueConfig;
use cnnfd::field::{STATION_NAMES, VARIABLE_NAMES};
use cnnfd::report::{evaluate, export_report, summary_csv};
use cnnfd::synth::{generate_dataset, read_manifest, write_manifest, GeneratorConfig, GENERATOR_KEYS};
use cnnfd::tensor::write_tensor_file;
use cnnfd::train::{train_run, DatasetDir, TrainConfig, TrainedModel, BEST_CHECKPOINT, TRAIN_KEYS};

/// Resolved configuration echoed into output directories.
const RUN_CONFIG: &str = "run.conf";
const THREADS_ENV: &str = "CNNFD_THREADS";

#[derive(Parser)]
#[command(name = "cnnfd", version, about = "Flow-field surrogate for compressor tip-clearance studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample clearances and write a synthetic dataset with its manifest.
    Generate(GenerateArgs),
    /// Split, standardize and train; writes checkpoint and history into the run directory.
    Train(TrainArgs),
    /// Score a trained model on a split and export the report files.
    #[command(alias = "report")]
    Evaluate(EvaluateArgs),
    /// Predict fields and overall performance for one clearance triple.
    Predict(PredictArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Number of samples.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output dataset directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Key = value config file (`[generate]`, `[generator]` sections).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory produced by `generate`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Run directory for checkpoint, history and config echo.
    #[arg(long)]
    run: Option<PathBuf>,
    /// Key = value config file (`[train]`, `[split]`, `[model]`, `[paths]` sections).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override `train.max_epochs`.
    #[arg(long)]
    epochs: Option<usize>,
    /// Override `train.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Checkpoint file, or a run directory containing `best.ckpt`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// One of train, validation, holdout.
    #[arg(long, default_value = "holdout")]
    split: String,
    /// Output directory for report files.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Checkpoint file, or a run directory containing `best.ckpt`.
    #[arg(long)]
    model: PathBuf,
    /// IGV, rotor and stator clearance in % span, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    clearances: String,
    /// Write the predicted field tensor (f64) here.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<cnnfd::Error> for Failure {
    fn from(e: cnnfd::Error) -> Self {
        match e {
            cnnfd::Error::Config(_) | cnnfd::Error::InvalidArgument(_) => Failure::Usage(e.into()),
            other => Failure::Runtime(other.into()),
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(anyhow!(msg.into()))
}

fn load_config(path: Option<&Path>, known: &[&str]) -> Result<KeyValueConfig, Failure> {
    let Some(p) = path else {
        return Ok(KeyValueConfig::new());
    };
    let kv = KeyValueConfig::from_file(p).map_err(|e| match e {
        cnnfd::Error::Io { .. } => Failure::Runtime(anyhow!(e)),
        other => Failure::Usage(anyhow!(other)),
    })?;
    kv.reject_unknown(known).map_err(|e| Failure::Usage(e.into()))?;
    Ok(kv)
}

fn write_echo(dir: &Path, kv: &KeyValueConfig) -> anyhow::Result<()> {
    let p = dir.join(RUN_CONFIG);
    std::fs::write(&p, kv.to_text()).with_context(|| format!("writing {}", p.display()))
}

fn checkpoint_path(model: &Path) -> PathBuf {
    if model.is_dir() {
        model.join(BEST_CHECKPOINT)
    } else {
        model.to_path_buf()
    }
}

fn load_model(model: &Path) -> Result<TrainedModel, Failure> {
    let path = checkpoint_path(model);
    if !path.exists() {
        return Err(Failure::Runtime(anyhow!(
            "no checkpoint at {}; run `cnnfd train --data <dataset> --run <dir>` first",
            path.display()
        )));
    }
    TrainedModel::load(&path)
        .with_context(|| format!("loading checkpoint {}", path.display()))
        .map_err(Failure::Runtime)
}

fn cmd_generate(a: GenerateArgs) -> Result<(), Failure> {
    let mut known = vec!["generate.n", "generate.seed", "paths.out"];
    known.extend_from_slice(GENERATOR_KEYS);
    let mut kv = load_config(a.config.as_deref(), &known)?;
    if let Some(n) = a.n {
        kv.set("generate.n", n.to_string());
    }
    if let Some(s) = a.seed {
        kv.set("generate.seed", s.to_string());
    }
    if let Some(o) = &a.out {
        kv.set("paths.out", o.display().to_string());
    }
    let n: usize = kv.get_parsed("generate.n")?.ok_or_else(|| usage("--n is required"))?;
    if n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let seed: u64 = kv.get_parsed("generate.seed")?.unwrap_or(0);
    let out = PathBuf::from(kv.get("paths.out").ok_or_else(|| usage("--out is required"))?);
    let mut cfg = GeneratorConfig::default();
    cfg.apply(&kv)?;
    cfg.validate()?;
    let mut echo = cfg.to_key_values();
    echo.set("generate.n", n.to_string());
    echo.set("generate.seed", seed.to_string());
    echo.set("paths.out", out.display().to_string());

    let t = Instant::now();
    let manifest = generate_dataset(n, seed, &cfg, &out)?;
    let secs = t.elapsed().as_secs_f64();
    write_echo(&out, &echo)?;
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for s in &manifest.samples {
        for i in 0..3 {
            lo[i] = lo[i].min(s.clearances[i]);
            hi[i] = hi[i].max(s.clearances[i]);
        }
    }
    println!("samples      {}", manifest.n_samples);
    println!("mesh         4 x {} x {}", cfg.n_tangential, cfg.n_radial);
    for (i, name) in ["igv", "rotor", "stator"].iter().enumerate() {
        println!("{name:<12} {:.4} .. {:.4} % span", lo[i], hi[i]);
    }
    println!("checksum     {}", manifest.checksum);
    println!("wall time    {secs:.2} s ({:.2} ms per sample)", 1e3 * secs / n as f64);
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<(), Failure> {
    let mut known = vec!["paths.data", "paths.run"];
    known.extend_from_slice(TRAIN_KEYS);
    let mut kv = load_config(a.config.as_deref(), &known)?;
    if let Some(d) = &a.data {
        kv.set("paths.data", d.display().to_string());
    }
    if let Some(r) = &a.run {
        kv.set("paths.run", r.display().to_string());
    }
    if let Some(e) = a.epochs {
        kv.set("train.max_epochs", e.to_string());
    }
    if let Some(s) = a.seed {
        kv.set("train.seed", s.to_string());
    }
    let data = PathBuf::from(kv.get("paths.data").ok_or_else(|| usage("--data is required"))?);
    let run = PathBuf::from(kv.get("paths.run").ok_or_else(|| usage("--run is required"))?);
    let mut cfg = TrainConfig::default();
    cfg.apply(&kv)?;
    cfg.validate()?;

    if !data.join(cnnfd::synth::MANIFEST_FILE).exists() {
        return Err(Failure::Runtime(anyhow!(
            "no dataset manifest in {}; run `cnnfd generate` first",
            data.display()
        )));
    }
    let source = DatasetDir::open(&data).with_context(|| format!("opening dataset {}", data.display()))?;
    let mut manifest = source.manifest().clone();
    std::fs::create_dir_all(&run).with_context(|| format!("creating {}", run.display()))?;
    let mut echo = cfg.to_key_values();
    echo.set("paths.data", data.display().to_string());
    echo.set("paths.run", run.display().to_string());
    write_echo(&run, &echo)?;

    let t = Instant::now();
    let summary = train_run(&source, &mut manifest, &cfg, &run)?;
    write_manifest(&manifest, &data)?;
    let s = &summary.split;
    println!("split        {} / {} / {} (train / validation / holdout)", s.train.len(), s.validation.len(), s.holdout.len());
    println!("epochs       {}{}", summary.epochs_run, if summary.stopped_early { " (early stop)" } else { "" });
    println!("best epoch   {} (validation MSE {:.6e})", summary.best_epoch, summary.best_val_mse);
    println!("checkpoint   {}", summary.checkpoint.display());
    println!("wall time    {:.1} s", t.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<(), Failure> {
    let model = load_model(&a.model)?;
    let manifest = read_manifest(&a.data).with_context(|| format!("reading dataset {}", a.data.display()))?;
    let split = manifest
        .split
        .as_ref()
        .ok_or_else(|| Failure::Runtime(anyhow!("dataset has no frozen split; train on it first")))?;
    let indices = match a.split.as_str() {
        "train" => &split.train,
        "validation" => &split.validation,
        "holdout" => &split.holdout,
        other => return Err(usage(format!("unknown split {other:?}; expected train, validation or holdout"))),
    };
    let source = DatasetDir::open(&a.data)?;
    let t = Instant::now();
    let eval = evaluate(&model, &source, indices, &a.split)?;
    export_report(&eval, &model, &a.report)?;
    print!("{}", summary_csv(&eval));
    let w = &eval.worst;
    let at = w.error_range.argmax;
    println!(
        "worst case   sample {} peak {:.4}% of range at {} j={} k={} {}",
        w.id, w.error_range.peak, STATION_NAMES[at.station], at.j, at.k, VARIABLE_NAMES[at.variable]
    );
    println!("report       {}", a.report.display());
    println!("wall time    {:.2} s", t.elapsed().as_secs_f64());
    Ok(())
}

fn parse_clearances(s: &str) -> Result<[f64; 3], Failure> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(usage(format!("--clearances needs three comma-separated values, got {s:?}")));
    }
    let mut c = [0.0; 3];
    for (slot, p) in c.iter_mut().zip(&parts) {
        *slot = p
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| usage(format!("clearance {p:?} is not a finite number")))?;
    }
    Ok(c)
}

fn cmd_predict(a: PredictArgs) -> Result<(), Failure> {
    let clearances = parse_clearances(&a.clearances)?;
    let model = load_model(&a.model)?;
    let t = Instant::now();
    let p = model.predict(clearances)?;
    let ms = 1e3 * t.elapsed().as_secs_f64();
    if p.extrapolated {
        eprintln!("warning: clearances outside the sampled range; the prediction is an extrapolation");
    }
    let perf = &p.performance;
    let d = perf.deltas.expect("predict reports deltas");
    println!("mass_flow          {:.6} kg/s ({:+.4}% vs baseline)", perf.mass_flow, d.mass_flow_pct);
    println!("pressure_ratio     {:.6} ({:+.4}% vs baseline)", perf.pressure_ratio, d.pressure_ratio_pct);
    println!("temperature_ratio  {:.6}", perf.temperature_ratio);
    println!("efficiency         {:.6} ({:+.4}% vs baseline)", perf.efficiency, d.efficiency_pct);
    println!("latency            {ms:.2} ms");
    if let Some(out) = &a.out {
        write_tensor_file(p.field.tensor(), out)?;
        println!("field              {}", out.display());
    }
    Ok(())
}

fn threads_from_env() -> Result<Option<usize>, Failure> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let threads = threads_from_env()?;
    let go = move || match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Predict(a) => cmd_predict(a),
    };
    match threads {
        Some(n) => cnnfd::par::with_threads(n, go),
        None => go(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
