//! `toxnet` command-line entry point.
//!
//! Settings come from defaults, then an optional `--config` JSON file, then
//! flags. The effective settings are echoed to standard error as one JSON
//! line before any work starts; machine-readable results go to standard
//! output (or `--out`) and carry a `schema_version`.

use std::ffi::OsString;
use std::io::Read;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use toxnet_core::checkpoint::Checkpoint;
use toxnet_core::data::io::{load_dataset, load_dataset_dir, save_dataset_dir, write_file};
use toxnet_core::data::{synth_generate, Dataset, MetaRecord, RawCase, SynthSpec};
use toxnet_core::model::fixtures::{gradcheck_suite, GRADCHECK_SEED};
use toxnet_core::model::Variant;
use toxnet_core::predict::{Prediction, Predictor};
use toxnet_core::training::{f1_scores, fit, run_benchmark, BenchConfig, Method, TrainConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// Gradient checks pass below this relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "toxnet", version, about = "Toxin-class prediction from symptoms and a population graph")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Train one variant on a whole dataset and write a checkpoint.
    Train(TrainArgs),
    /// Cross-validated comparison of methods.
    Bench(BenchArgs),
    /// Metrics of a checkpoint on labelled cases.
    Eval(EvalArgs),
    /// Rank toxins for one case.
    Predict(PredictArgs),
    /// Finite-difference gradient check of every variant on a tiny model.
    Gradcheck(GradcheckArgs),
    /// Start the HTTP inference service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// JSON settings file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset directory (cases.jsonl + literature.jsonl) or a cases file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Literature file, when --data names a cases file.
    #[arg(long)]
    lit: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Checkpoint path; the training report is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Defaults to the synthetic dataset of the `synth` settings.
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated methods, e.g. naive,mlp,gat_only,toxnet.
    #[arg(long)]
    variants: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    /// First seed; runs use `seed, seed+1, ...`.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of seeds.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Report path (default: standard output). Timings go to `<out>.timings.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Checkpoint file.
    #[arg(long)]
    model: PathBuf,
    /// Training dataset the checkpoint belongs to.
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[command(flatten)]
    model: ModelArgs,
    /// JSONL file of labelled cases; defaults to the training cases themselves.
    #[arg(long)]
    case: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[command(flatten)]
    model: ModelArgs,
    /// JSON file `{"symptoms": [...], "meta": {...}}`; `-` or absent reads standard input.
    #[arg(long)]
    case: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Fixture seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    host: Option<String>,
}

/// Everything a subcommand can be configured with.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Training seed (first seed for `bench`).
    pub seed: u64,
    pub seeds: usize,
    pub folds: usize,
    pub variant: Variant,
    pub variants: Vec<Method>,
    pub host: String,
    pub port: u16,
    /// Origins allowed by CORS; empty allows any.
    pub cors_origins: Vec<String>,
    pub train: TrainConfig,
    /// Generator settings for `synth` and for `bench` without `--data`.
    pub synth: SynthSpec,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            seed: 1,
            seeds: 3,
            folds: 10,
            variant: Variant::Toxnet,
            variants: vec![
                Method::Naive,
                Method::Model(Variant::Mlp),
                Method::Model(Variant::GatOnly),
                Method::Model(Variant::Toxnet),
            ],
            host: "127.0.0.1".into(),
            port: 8080,
            cors_origins: Vec::new(),
            train: TrainConfig::default(),
            synth: SynthSpec::default(),
        }
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<toxnet_core::Error> for CliError {
    fn from(e: toxnet_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            EXIT_FAILURE
        }
    }
}

fn load_settings(config: &ConfigArg) -> CliResult<Settings> {
    match &config.config {
        None => Ok(Settings::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
        }
    }
}

fn banner(command: &str, effective: serde_json::Value) {
    eprintln!("toxnet {command} effective config: {effective}");
}

fn load_data(args: &DataArgs) -> CliResult<Dataset> {
    let data = args
        .data
        .as_ref()
        .ok_or_else(|| CliError::Usage("--data is required".into()))?;
    if data.is_dir() {
        if args.lit.is_some() {
            return Err(CliError::Usage("--lit conflicts with a --data directory".into()));
        }
        Ok(load_dataset_dir(data)?)
    } else {
        let lit = args
            .lit
            .as_ref()
            .ok_or_else(|| CliError::Usage("--data names a file, so --lit is required".into()))?;
        Ok(load_dataset(data, lit)?)
    }
}

fn data_json(args: &DataArgs) -> serde_json::Value {
    json!({"data": args.data, "lit": args.lit})
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn versioned<T: Serialize>(value: &T) -> CliResult<serde_json::Value> {
    let mut v = serde_json::to_value(value)?;
    match v.as_object_mut() {
        Some(map) => {
            map.insert("schema_version".into(), json!(SCHEMA_VERSION));
            Ok(v)
        }
        None => Ok(json!({"schema_version": SCHEMA_VERSION, "value": v})),
    }
}

fn dispatch(command: Command) -> CliResult<i32> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Bench(a) => bench(a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Serve(a) => serve(a),
    }
}

fn synth(a: SynthArgs) -> CliResult<i32> {
    let mut spec = load_settings(&a.config)?.synth;
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    banner("synth", json!({"out": a.out, "synth": spec}));
    let out = synth_generate(&spec)?;
    let (cases, literature) = save_dataset_dir(&out.dataset, &a.out)?;
    let synonyms = a.out.join("synonyms.json");
    write_file(&synonyms, &serde_json::to_string_pretty(&out.synonyms)?)?;
    print_json(&json!({
        "schema_version": SCHEMA_VERSION,
        "cases": out.dataset.cases.len(),
        "classes": out.dataset.encoder.classes,
        "class_counts": out.dataset.class_histogram(),
        "dataset_hash": out.dataset.content_hash()?,
        "files": {"cases": cases, "literature": literature, "synonyms": synonyms},
    }))?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct TrainReport<'a> {
    schema_version: u32,
    variant: Variant,
    seed: u64,
    cases: usize,
    dataset_hash: String,
    best_epoch: usize,
    epochs_run: usize,
    checkpoint: &'a Path,
    model_hash: &'a str,
    config_hash: &'a str,
    curve: &'a [toxnet_core::training::EpochLog],
}

fn report_path(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.file_name().map(OsString::from).unwrap_or_default();
    name.push(suffix);
    out.with_file_name(name)
}

fn train(a: TrainArgs) -> CliResult<i32> {
    let mut s = load_settings(&a.config)?;
    if let Some(v) = a.variant {
        s.variant = v;
    }
    if let Some(seed) = a.seed {
        s.seed = seed;
    }
    if let Some(e) = a.epochs {
        s.train.epochs = e;
    }
    s.train.model.variant = s.variant;
    banner(
        "train",
        json!({"data": data_json(&a.data), "out": a.out, "seed": s.seed, "train": s.train}),
    );
    let ds = load_data(&a.data)?;
    let all: Vec<usize> = (0..ds.cases.len()).filter(|&i| ds.cases[i].label.is_some()).collect();
    let fitted = fit(&ds, &all, &s.train, s.seed, &mut |_| {})?;
    let population = fitted.graph.as_ref().map(|g| g.content_hash());
    let ckpt = Checkpoint::from_model(&fitted.model, &ds.encoder, &s.train.meta_fields, population)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    ckpt.save(&a.out)?;
    let report = TrainReport {
        schema_version: SCHEMA_VERSION,
        variant: s.variant,
        seed: s.seed,
        cases: all.len(),
        dataset_hash: ds.content_hash()?,
        best_epoch: fitted.best_epoch,
        epochs_run: fitted.curve.len(),
        checkpoint: &a.out,
        model_hash: &ckpt.model_hash,
        config_hash: &ckpt.config_hash,
        curve: &fitted.curve,
    };
    write_file(&report_path(&a.out, ".report.json"), &serde_json::to_string_pretty(&report)?)?;
    print_json(&report)?;
    Ok(EXIT_OK)
}

fn bench(a: BenchArgs) -> CliResult<i32> {
    let mut s = load_settings(&a.config)?;
    if let Some(v) = &a.variants {
        s.variants = Method::parse_list(v).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if let Some(f) = a.folds {
        s.folds = f;
    }
    if let Some(seed) = a.seed {
        s.seed = seed;
    }
    if let Some(n) = a.seeds {
        s.seeds = n;
    }
    if let Some(e) = a.epochs {
        s.train.epochs = e;
    }
    if s.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let config = BenchConfig {
        methods: s.variants.clone(),
        folds: s.folds,
        seeds: (0..s.seeds as u64).map(|k| s.seed + k).collect(),
        train: s.train.clone(),
    };
    let generated = a.data.data.is_none();
    banner(
        "bench",
        json!({
            "data": if generated { json!({"synth": s.synth}) } else { data_json(&a.data) },
            "out": a.out,
            "bench": config,
        }),
    );
    let ds = if generated {
        synth_generate(&s.synth)?.dataset
    } else {
        load_data(&a.data)?
    };
    let (report, timings) = run_benchmark(&ds, &config)?;
    eprint!("{}", report.to_table());
    eprintln!("total {:.1}s", timings.total_seconds);
    let text = serde_json::to_string_pretty(&report)?;
    match &a.out {
        Some(path) => {
            write_file(path, &format!("{text}\n"))?;
            write_file(
                &report_path(path, ".timings.json"),
                &serde_json::to_string_pretty(&timings)?,
            )?;
        }
        None => println!("{text}"),
    }
    Ok(EXIT_OK)
}

fn load_predictor(m: &ModelArgs) -> CliResult<(Dataset, Predictor)> {
    let ds = load_data(&m.data)?;
    let ckpt = Checkpoint::load(&m.model)?;
    let p = Predictor::from_checkpoint(&ckpt, &ds)?;
    Ok((ds, p))
}

fn eval(a: EvalArgs) -> CliResult<i32> {
    load_settings(&a.config)?;
    banner(
        "eval",
        json!({"model": a.model.model, "data": data_json(&a.model.data), "case": a.case}),
    );
    let (ds, p) = load_predictor(&a.model)?;
    let (split, cases) = match &a.case {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let raw: Vec<RawCase> = toxnet_core::data::io::parse_jsonl(&text, &path.display().to_string())?;
            let cases = raw
                .iter()
                .map(|r| ds.encoder.encode_case(r))
                .collect::<toxnet_core::Result<Vec<_>>>()?;
            ("external", cases)
        }
        None => ("training", ds.cases.clone()),
    };
    let labelled: Vec<_> = cases.into_iter().filter(|c| c.label.is_some()).collect();
    if labelled.is_empty() {
        return Err(CliError::Runtime("no labelled cases to evaluate".into()));
    }
    let preds = labelled
        .iter()
        .map(|c| Ok(ds.encoder.class_index(p.predict(c)?.top())?))
        .collect::<CliResult<Vec<usize>>>()?;
    let labels: Vec<usize> = labelled.iter().map(|c| c.label.expect("filtered")).collect();
    let scores = f1_scores(&preds, &labels, ds.class_count())?;
    print_json(&json!({
        "schema_version": SCHEMA_VERSION,
        "model_hash": p.model_hash(),
        "split": split,
        "cases": labelled.len(),
        "micro": scores.micro,
        "macro_f1": scores.macro_f1,
        "per_class": ds.encoder.classes.iter().zip(&scores.per_class)
            .map(|(name, s)| json!({"toxin": name, "precision": s.precision, "recall": s.recall, "f1": s.f1, "support": s.support}))
            .collect::<Vec<_>>(),
    }))?;
    Ok(EXIT_OK)
}

/// Input of `predict`: the same body `/predict` accepts.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseInput {
    symptoms: Vec<String>,
    meta: MetaRecord,
}

fn predict(a: PredictArgs) -> CliResult<i32> {
    load_settings(&a.config)?;
    banner(
        "predict",
        json!({"model": a.model.model, "data": data_json(&a.model.data), "case": a.case}),
    );
    let text = match a.case.as_deref() {
        Some(p) if p != Path::new("-") => std::fs::read_to_string(p)?,
        _ => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s)?;
            s
        }
    };
    let input: CaseInput = serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("invalid case: {e}")))?;
    let (_, p) = load_predictor(&a.model)?;
    let case = p.encode(&input.symptoms, &input.meta)?;
    let prediction: Prediction = p.predict(&case)?;
    print_json(&versioned(&prediction)?)?;
    Ok(EXIT_OK)
}

fn gradcheck(a: GradcheckArgs) -> CliResult<i32> {
    load_settings(&a.config)?;
    let seed = a.seed.unwrap_or(GRADCHECK_SEED);
    banner("gradcheck", json!({"seed": seed, "tolerance": GRADCHECK_TOLERANCE}));
    let results = gradcheck_suite(seed)?;
    let mut worst: f64 = 0.0;
    let mut rows = Vec::new();
    for (variant, report) in &results {
        let e = report.max_relative_error();
        worst = worst.max(e);
        eprintln!("{:<20} max relative error {e:.3e}", variant.name());
        rows.push(json!({"variant": variant, "max_relative_error": e, "params": report.params}));
    }
    let pass = worst < GRADCHECK_TOLERANCE;
    println!("max relative error {worst:.3e} ({})", if pass { "pass" } else { "FAIL" });
    print_json(&json!({
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "tolerance": GRADCHECK_TOLERANCE,
        "max_relative_error": worst,
        "pass": pass,
        "variants": rows,
    }))?;
    Ok(if pass { EXIT_OK } else { EXIT_FAILURE })
}

fn serve(a: ServeArgs) -> CliResult<i32> {
    let mut s = load_settings(&a.config)?;
    if let Some(p) = a.port {
        s.port = p;
    }
    if let Some(h) = a.host {
        s.host = h;
    }
    let addr: SocketAddr = format!("{}:{}", s.host, s.port)
        .parse()
        .map_err(|e| CliError::Usage(format!("invalid host/port: {e}")))?;
    banner(
        "serve",
        json!({"model": a.model.model, "data": data_json(&a.model.data), "host": s.host, "port": s.port, "cors_origins": s.cors_origins}),
    );
    let (_, p) = load_predictor(&a.model)?;
    let cors = if s.cors_origins.is_empty() {
        toxnet_service::Cors::AnyOrigin
    } else {
        toxnet_service::Cors::Origins(s.cors_origins.clone())
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(toxnet_service::serve(p, addr, cors))?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn settings_round_trip_and_reject_unknown_keys() {
        let s = Settings::default();
        let text = serde_json::to_string(&s).unwrap();
        let back: Settings = serde_json::from_str(&text).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
        assert!(serde_json::from_str::<Settings>(r#"{"sed": 3}"#).is_err());
        let partial: Settings = serde_json::from_str(r#"{"folds": 5}"#).unwrap();
        assert_eq!((partial.folds, partial.seeds), (5, 3));
    }

    #[test]
    fn report_paths() {
        assert_eq!(
            report_path(Path::new("out/model.json"), ".report.json"),
            PathBuf::from("out/model.json.report.json")
        );
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["toxnet", "bench", "--bogus"]), EXIT_USAGE);
        assert_eq!(run(["toxnet"]), EXIT_USAGE);
        assert_eq!(run(["toxnet", "--help"]), EXIT_OK);
    }
}
