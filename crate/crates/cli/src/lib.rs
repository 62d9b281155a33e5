//! `journey-risk` command line: generate / train / evaluate / impute /
//! gradcheck / report.
//!
//! Flags mirror config keys one-to-one. Precedence: flag, then `JR_SEED`
//! (seed only), then the `--config` file, then defaults. Exit codes: 0 on
//! success, 1 on usage errors, 2 on runtime failures.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use journey_risk_core::baselines;
use journey_risk_core::checks::{self, CheckSetup};
use journey_risk_core::data::{load_dataset, metadata_path, save_dataset};
use journey_risk_core::datagen::{self, GenConfig};
use journey_risk_core::json;
use journey_risk_core::model::{load_checkpoint, save_checkpoint, Variant};
use journey_risk_core::protocol::{self, EvalReport, Method, RunMetrics};
use journey_risk_core::train::TrainConfig;
use journey_risk_core::{Normalizer, VERSION};

pub const SEED_ENV: &str = "JR_SEED";

#[derive(Parser, Debug)]
#[command(name = "journey-risk", version, about = "Risk prediction on patient journeys with missing values")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic cohort (JSONL + metadata + summary).
    Generate(GenerateArgs),
    /// Split, train, evaluate on the held-out test split; writes an experiment directory.
    Train(TrainArgs),
    /// Score a dataset with a saved checkpoint.
    Evaluate(EvaluateArgs),
    /// Fill missing cells with the mean or KNN baseline.
    Impute(ImputeArgs),
    /// Finite-difference check of every model gradient.
    Gradcheck(GradcheckArgs),
    /// Aggregate experiment directories into a mean(std) table.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
#[command(rename_all = "snake_case")]
struct GenerateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output JSONL path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    n_patients: Option<usize>,
    #[arg(long)]
    n_features: Option<usize>,
    #[arg(long)]
    t_min: Option<usize>,
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long)]
    missing_rate: Option<f64>,
    #[arg(long, value_parser = ["mcar", "mnar"])]
    missingness: Option<String>,
    #[arg(long, value_parser = ["easy", "short_term", "long_range"])]
    signal: Option<String>,
    #[arg(long)]
    prevalence: Option<f64>,
    #[arg(long)]
    signal_strength: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
#[command(rename_all = "snake_case")]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset JSONL.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Experiment directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    adam_eps: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long, value_parser = ["auprc", "auroc", "loss"])]
    early_stop: Option<String>,
    #[arg(long, value_parser = ["full", "no_recurrent", "mean", "knn", "simple"])]
    method: Option<String>,
    #[arg(long, value_parser = ["paper_scale", "zscore"])]
    normalization: Option<String>,
    #[arg(long, value_parser = ["balanced", "none"])]
    class_weight: Option<String>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    kernel_size: Option<usize>,
    #[arg(long)]
    clip_grad: Option<bool>,
    #[arg(long)]
    knn_k: Option<usize>,
}

#[derive(Args, Debug)]
#[command(rename_all = "snake_case")]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Directory for scores.csv and metrics.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(rename_all = "snake_case")]
struct ImputeArgs {
    #[arg(long, value_parser = ["mean", "knn"])]
    method: String,
    /// Dataset to fill.
    #[arg(long)]
    data: PathBuf,
    /// Dataset the statistics / neighbours come from (defaults to --data).
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    knn_k: usize,
}

#[derive(Args, Debug)]
#[command(rename_all = "snake_case")]
struct GradcheckArgs {
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    t: usize,
    #[arg(long, default_value_t = 8)]
    g: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = checks::DEFAULT_EPS)]
    eps: f64,
    #[arg(long, default_value_t = 3)]
    kernel_size: usize,
    #[arg(long, value_parser = ["full", "no_recurrent", "gru_only"], default_value = "full")]
    variant: String,
}

#[derive(Args, Debug)]
#[command(rename_all = "snake_case")]
struct ReportArgs {
    /// Experiment directories written by `train`.
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    /// Directory for report.md and report.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    mean_digits: usize,
    #[arg(long, default_value_t = 3)]
    std_digits: usize,
}

/// Parses `argv` (including the program name), runs, returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", render(&e));
            2
        }
    }
}

/// Joins the error chain, skipping causes whose text the previous
/// message already embeds.
fn render(e: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut last = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !last.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
        last = msg;
    }
    out
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Impute(a) => impute(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Report(a) => report(a),
    }
}

fn read_config(path: Option<&Path>) -> Result<Map<String, Value>> {
    let Some(path) = path else {
        return Ok(Map::new());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    match serde_json::from_str(&text).with_context(|| format!("{} is not valid JSON", path.display()))? {
        Value::Object(map) => Ok(map),
        _ => bail!("{}: config must be a JSON object", path.display()),
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| anyhow!("{SEED_ENV}={v:?} is not an unsigned integer")),
        Err(_) => Ok(None),
    }
}

/// Writes `key` into the map when the flag was given.
fn set<T: Into<Value>>(map: &mut Map<String, Value>, key: &str, flag: Option<T>) {
    if let Some(v) = flag {
        map.insert(key.to_string(), v.into());
    }
}

fn apply_seed(map: &mut Map<String, Value>, flag: Option<u64>) -> Result<()> {
    set(map, "seed", env_seed()?);
    set(map, "seed", flag);
    Ok(())
}

fn take_path(map: &mut Map<String, Value>, key: &str) -> Result<Option<PathBuf>> {
    match map.remove(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(PathBuf::from(s))),
        Some(other) => bail!("config key `{key}` must be a path string, got {other}"),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    json::write_atomic(path, text.as_bytes()).map_err(Into::into)
}

fn json_line<T: serde::Serialize>(value: &T) -> String {
    let mut s = json::to_string(value);
    s.push('\n');
    s
}

fn generate(a: GenerateArgs) -> Result<()> {
    let mut map = read_config(a.config.as_deref())?;
    let out = a.out.or(take_path(&mut map, "out")?).ok_or_else(|| anyhow!("--out is required"))?;
    map.remove("version");
    set(&mut map, "n_patients", a.n_patients);
    set(&mut map, "n_features", a.n_features);
    set(&mut map, "t_min", a.t_min);
    set(&mut map, "t_max", a.t_max);
    set(&mut map, "missing_rate", a.missing_rate);
    set(&mut map, "missingness", a.missingness);
    set(&mut map, "signal", a.signal);
    set(&mut map, "prevalence", a.prevalence);
    set(&mut map, "signal_strength", a.signal_strength);
    apply_seed(&mut map, a.seed)?;
    let cfg: GenConfig = serde_json::from_value(Value::Object(map)).context("invalid generate config")?;
    let ds = datagen::generate(&cfg)?;
    save_dataset(&ds, &out)?;
    let summary = datagen::describe(&ds);
    write_text(&out.with_extension("summary.md"), &summary.to_markdown())?;
    write_text(&out.with_extension("summary.json"), &json_line(&summary))?;
    let mut resolved = serde_json::to_value(&cfg)?;
    resolved["version"] = VERSION.into();
    resolved["out"] = out.display().to_string().into();
    write_text(&out.with_extension("config.json"), &json_line(&resolved))?;
    println!(
        "wrote {} patients ({} positive) to {} (metadata {})",
        ds.len(),
        ds.positives(),
        out.display(),
        metadata_path(&out).display()
    );
    print!("{}", summary.to_markdown());
    Ok(())
}

/// Resolved `train` inputs; `config.json` is this, serialized.
struct TrainJob {
    data: PathBuf,
    out: PathBuf,
    cfg: TrainConfig,
}

impl TrainJob {
    fn resolve(a: TrainArgs) -> Result<Self> {
        let mut map = read_config(a.config.as_deref())?;
        map.remove("version");
        let data = a.data.or(take_path(&mut map, "data")?).ok_or_else(|| anyhow!("--data is required"))?;
        let out = a.out.or(take_path(&mut map, "out")?).ok_or_else(|| anyhow!("--out is required"))?;
        set(&mut map, "epochs", a.epochs);
        set(&mut map, "batch_size", a.batch_size);
        set(&mut map, "lr", a.lr);
        set(&mut map, "beta1", a.beta1);
        set(&mut map, "beta2", a.beta2);
        set(&mut map, "adam_eps", a.adam_eps);
        set(&mut map, "patience", a.patience);
        set(&mut map, "early_stop", a.early_stop);
        set(&mut map, "method", a.method);
        set(&mut map, "normalization", a.normalization);
        set(&mut map, "class_weight", a.class_weight);
        set(&mut map, "hidden", a.hidden);
        set(&mut map, "kernel_size", a.kernel_size);
        set(&mut map, "clip_grad", a.clip_grad);
        set(&mut map, "knn_k", a.knn_k);
        apply_seed(&mut map, a.seed)?;
        let cfg: TrainConfig = serde_json::from_value(Value::Object(map)).context("invalid train config")?;
        cfg.validate()?;
        Ok(TrainJob { data, out, cfg })
    }

    fn config_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(&self.cfg)?;
        v["version"] = VERSION.into();
        v["data"] = self.data.display().to_string().into();
        v["out"] = self.out.display().to_string().into();
        Ok(json_line(&v))
    }
}

fn train(a: TrainArgs) -> Result<()> {
    let job = TrainJob::resolve(a)?;
    let ds = load_dataset(&job.data, None)?;
    let seed = job.cfg.seed;
    let run = protocol::run_once(&ds, &job.cfg, seed)?;
    let dir = &job.out;
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;

    let h = &run.model.history;
    let mut log = format!(
        "journey-risk {VERSION}\ndata {} ({} journeys, {} features)\nmethod {} seed {seed}\ninitial train loss {:.6}\n",
        job.data.display(),
        ds.len(),
        ds.n_features(),
        job.cfg.method.as_str(),
        h.initial_train_loss
    );
    for e in &h.epochs {
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
        log.push_str(&format!(
            "epoch {:3} train_loss {:.6} val_loss {:.6} val_auroc {} val_auprc {}\n",
            e.epoch,
            e.train_loss,
            e.val_loss,
            opt(e.val_auroc),
            opt(e.val_auprc)
        ));
    }
    log.push_str(&format!(
        "stopped after {} epochs; kept epoch {}\ntest auroc {:.4} auprc {:.4}\n",
        h.epochs.len(),
        h.best_epoch,
        run.test.auroc,
        run.test.auprc
    ));

    let single = EvalReport::from_runs(job.cfg.method.display_name(), vec![run.metrics()]);
    let report_md = format!(
        "# {} (seed {seed})\n\nTest journeys: {}\nBest epoch: {} of {}\n\n{}",
        job.cfg.method.display_name(),
        run.test.scores.len(),
        h.best_epoch,
        h.epochs.len(),
        protocol::markdown_table(&[single], 4, 3)
    );
    let metrics = serde_json::json!({
        "method": job.cfg.method,
        "seed": seed,
        "auroc": run.test.auroc,
        "auprc": run.test.auprc,
        "n_test": run.test.scores.len(),
        "best_epoch": h.best_epoch,
        "epochs_run": h.epochs.len(),
    });

    write_text(&dir.join("config.json"), &job.config_json()?)?;
    save_checkpoint(&run.model.checkpoint, &dir.join("checkpoint.json"))?;
    write_text(&dir.join("history.csv"), &h.to_csv())?;
    write_text(&dir.join("scores.csv"), &run.test.scores_csv())?;
    write_text(&dir.join("metrics.json"), &json_line(&metrics))?;
    write_text(&dir.join("report.md"), &report_md)?;
    write_text(&dir.join("log.txt"), &log)?;
    println!(
        "{} seed {seed}: test AUROC {:.4} AUPRC {:.4} (best epoch {}) -> {}",
        job.cfg.method.as_str(),
        run.test.auroc,
        run.test.auprc,
        h.best_epoch,
        dir.display()
    );
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let ds = load_dataset(&a.data, Some(ck.preprocessor.n_features()))?;
    let ev = protocol::evaluate_checkpoint(&ck, &ds)?;
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        write_text(&dir.join("scores.csv"), &ev.scores_csv())?;
        write_text(&dir.join("metrics.json"), &json_line(&ev.metrics_json()))?;
    }
    println!("AUROC {:.4} AUPRC {:.4} over {} journeys", ev.auroc, ev.auprc, ev.scores.len());
    Ok(())
}

fn impute(a: ImputeArgs) -> Result<()> {
    let ds = load_dataset(&a.data, None)?;
    let train = match &a.train {
        Some(p) => load_dataset(p, Some(ds.n_features()))?,
        None => ds.clone(),
    };
    let filled = match a.method.as_str() {
        "mean" => baselines::mean_impute(&Normalizer::fit(&train, Default::default()), &ds)?,
        _ => baselines::knn_impute(&train, &ds, a.knn_k)?,
    };
    filled.save(&a.out)?;
    let cells: usize = filled.imputed.iter().map(|m| m.observed_count()).sum();
    println!("imputed {cells} cells with {} -> {}", a.method, a.out.display());
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> Result<()> {
    let variant = match a.variant.as_str() {
        "full" => Variant::Full,
        "no_recurrent" => Variant::NoRecurrent,
        _ => Variant::GruOnly,
    };
    let setup = CheckSetup {
        variant,
        n: a.n,
        t: a.t,
        hidden: a.g,
        kernel_size: a.kernel_size,
        seed: a.seed,
        eps: a.eps,
    };
    let report = checks::model_gradient_check(&setup)?;
    println!("{:<14} {:>6} {:>14}  status", "tensor", "size", "max rel err");
    for c in &report {
        println!(
            "{:<14} {:>6} {:>14.3e}  {}",
            c.name,
            c.len,
            c.max_rel_err,
            if c.passed() { "ok" } else { "FAIL" }
        );
    }
    let failed: Vec<_> = report.iter().filter(|c| !c.passed()).map(|c| c.name).collect();
    if !failed.is_empty() {
        bail!("gradient check above {:e} for {}", checks::TOLERANCE, failed.join(", "));
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let mut groups: Vec<(Method, Vec<RunMetrics>)> = Vec::new();
    for dir in &a.dirs {
        let path = dir.join("metrics.json");
        let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
        let v: Value = serde_json::from_str(&text).with_context(|| format!("{} is not valid JSON", path.display()))?;
        let field = |k: &str| v.get(k).cloned().ok_or_else(|| anyhow!("{}: missing `{k}`", path.display()));
        let method: Method = serde_json::from_value(field("method")?)?;
        let run = RunMetrics {
            seed: serde_json::from_value(field("seed")?)?,
            auroc: serde_json::from_value(field("auroc")?)?,
            auprc: serde_json::from_value(field("auprc")?)?,
        };
        match groups.iter_mut().find(|(m, _)| *m == method) {
            Some((_, runs)) => runs.push(run),
            None => groups.push((method, vec![run])),
        }
    }
    let reports: Vec<EvalReport> = groups
        .into_iter()
        .map(|(m, runs)| EvalReport::from_runs(m.display_name(), runs))
        .collect();
    let md = protocol::markdown_table(&reports, a.mean_digits, a.std_digits);
    let csv = protocol::csv_table(&reports);
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        write_text(&dir.join("report.md"), &md)?;
        write_text(&dir.join("report.csv"), &csv)?;
    }
    print!("{md}");
    Ok(())
}
