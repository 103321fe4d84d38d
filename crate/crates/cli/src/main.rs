use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use diffprob_core::baselines::{dynunc_prune, random_prune, DynUncParams, RandParams, DEFAULT_WINDOW};
use diffprob_core::calibrator::{calibrate, geometric_grid, sweep, write_sweep_csv, CalibrateParams, T_MAX};
use diffprob_core::cleaner::{clean, clean_stats};
use diffprob_core::diffprob::{prune_dataset, DiffProbParams, DEFAULT_N_MIN, DEFAULT_T_STEP};
use diffprob_core::manifest::{read_id_list, read_manifest_from, write_id_list, write_manifest};
use diffprob_core::report::report;
use diffprob_core::synth::{flip_detection_metrics, generate, read_truth, toy_eval, write_truth, SynthConfig};
use diffprob_core::{Format, Manifest, PruneResult};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(
    name = "diffprob",
    version,
    about = "Per-identity dataset pruning on probability manifests"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Drop samples whose predicted class differs from their label.
    Clean(CleanArgs),
    /// Select a kept set with DiffProb or a baseline.
    Prune(PruneArgs),
    /// Search for the DiffProb threshold that hits a kept fraction.
    Calibrate(CalibrateArgs),
    /// Kept fraction over a geometric grid of thresholds.
    Sweep(SweepArgs),
    /// Generate a synthetic manifest with ground truth.
    Synth(SynthArgs),
    /// Nearest-class-mean holdout accuracy of a kept set.
    EvalToy(EvalToyArgs),
    /// Summarize a saved prune result against its manifest.
    Report(ReportArgs),
    /// Write the manifest restricted to a list of ids.
    Subset(SubsetArgs),
}

#[derive(Args)]
struct InputArgs {
    #[arg(long)]
    input: PathBuf,
    /// Manifest format (default: from the file extension).
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Number of classes, when larger than the highest label present.
    #[arg(long)]
    classes: Option<u32>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Jsonl,
    Csv,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Format {
        match f {
            FormatArg::Jsonl => Format::Jsonl,
            FormatArg::Csv => Format::Csv,
        }
    }
}

#[derive(Args)]
struct CleanArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Cleaned manifest.
    #[arg(long)]
    out: PathBuf,
    /// Removed ids (default: <out>.removed.txt).
    #[arg(long)]
    removed: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_N_MIN)]
    n_min: usize,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Diffprob,
    Dynunc,
    Random,
}

#[derive(Args)]
struct PruneArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Gap threshold (diffprob).
    #[arg(long)]
    t: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_N_MIN)]
    n_min: usize,
    #[arg(long, default_value_t = DEFAULT_T_STEP)]
    t_step: f64,
    /// Fraction of samples to keep (dynunc, random).
    #[arg(long)]
    keep_fraction: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Kept ids, one per line, in manifest order.
    #[arg(long)]
    out: PathBuf,
    /// Raw prune result JSON, readable by `report`.
    #[arg(long)]
    result: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    target: f64,
    #[arg(long, default_value_t = 0.005)]
    tol: f64,
    #[arg(long, default_value_t = 60)]
    max_iter: usize,
    #[arg(long, default_value_t = DEFAULT_N_MIN)]
    n_min: usize,
    #[arg(long, default_value_t = DEFAULT_T_STEP)]
    t_step: f64,
    /// Upper end of the threshold search.
    #[arg(long, default_value_t = T_MAX)]
    t_max: f64,
    /// Also write a 50-point sweep table as CSV.
    #[arg(long)]
    sweep_out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 1e-6)]
    t_min: f64,
    #[arg(long, default_value_t = 0.1)]
    t_max: f64,
    #[arg(long, default_value_t = 50)]
    points: usize,
    #[arg(long, default_value_t = DEFAULT_N_MIN)]
    n_min: usize,
    #[arg(long, default_value_t = DEFAULT_T_STEP)]
    t_step: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides any seed in the config file.
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Args)]
struct EvalToyArgs {
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    kept: PathBuf,
    /// Removed ids from `clean`, scored against the injected flips.
    #[arg(long)]
    removed: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    result: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SubsetArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    ids: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

struct Loaded {
    manifest: Manifest,
    digest: String,
}

fn load(args: &InputArgs) -> anyhow::Result<Loaded> {
    let bytes = fs::read(&args.input).map_err(|e| io_error(&args.input, e))?;
    let digest = format!("{:x}", Sha256::digest(&bytes));
    let format = args.format.map_or_else(|| Format::from_path(&args.input), Format::from);
    let manifest = read_manifest_from(bytes.as_slice(), format, args.classes)
        .with_context(|| format!("reading {}", args.input.display()))?;
    log::info!(
        "{}: {} records, {} classes",
        args.input.display(),
        manifest.len(),
        manifest.class_count()
    );
    Ok(Loaded { manifest, digest })
}

fn io_error(path: &Path, e: std::io::Error) -> anyhow::Error {
    anyhow::Error::new(e).context(path.display().to_string())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_error(path, e))
}

struct Run {
    command: &'static str,
    started: Instant,
}

impl Run {
    fn new(command: &'static str) -> Self {
        Run {
            command,
            started: Instant::now(),
        }
    }

    fn finish(&self, mut body: Value, digest: Option<&str>, path: Option<&PathBuf>) -> anyhow::Result<()> {
        let Some(path) = path else { return Ok(()) };
        let obj = body.as_object_mut().expect("report body is an object");
        obj.insert("command".into(), json!(self.command));
        if let Some(d) = digest {
            obj.insert("input_sha256".into(), json!(d));
        }
        obj.insert("wall_clock_seconds".into(), json!(self.started.elapsed().as_secs_f64()));
        write_json(path, &body)
    }
}

fn cmd_clean(args: &CleanArgs) -> anyhow::Result<()> {
    let run = Run::new("clean");
    let loaded = load(&args.input)?;
    let (cleaned, removed) = clean(&loaded.manifest);
    let stats = clean_stats(&loaded.manifest, &removed, args.n_min)?;
    let format = args
        .input
        .format
        .map_or_else(|| Format::from_path(&args.out), Format::from);
    write_manifest(&cleaned, &args.out, format)?;
    let removed_path = args.removed.clone().unwrap_or_else(|| {
        let mut name = args.out.clone().into_os_string();
        name.push(".removed.txt");
        PathBuf::from(name)
    });
    write_id_list(&removed_path, &removed)?;
    for identity in &stats.below_n_min {
        log::warn!("identity {identity} drops below n_min = {} after cleaning", args.n_min);
    }
    println!(
        "removed {} of {} ({:.4}%)",
        stats.removed,
        stats.total,
        100.0 * stats.removed_fraction
    );
    run.finish(
        json!({ "params": { "n_min": args.n_min }, "kept_fraction": 1.0 - stats.removed_fraction, "summary": stats }),
        Some(&loaded.digest),
        args.report.as_ref(),
    )
}

enum Selector {
    DiffProb(DiffProbParams),
    DynUnc(DynUncParams),
    Random(RandParams),
}

fn selector(args: &PruneArgs) -> anyhow::Result<(Selector, Value)> {
    Ok(match args.method {
        MethodArg::Diffprob => {
            let Some(t) = args.t else {
                bail!(Usage("--method diffprob requires --t".into()))
            };
            let params = DiffProbParams::new(t, args.n_min, args.t_step)?;
            (
                Selector::DiffProb(params),
                json!({ "t": t, "n_min": args.n_min, "t_step": args.t_step }),
            )
        }
        MethodArg::Dynunc => {
            let keep_fraction = need_fraction(args, "dynunc")?;
            (
                Selector::DynUnc(DynUncParams {
                    window: args.window,
                    keep_fraction,
                    n_min: args.n_min,
                }),
                json!({ "keep_fraction": keep_fraction, "window": args.window, "n_min": args.n_min }),
            )
        }
        MethodArg::Random => {
            let keep_fraction = need_fraction(args, "random")?;
            let Some(seed) = args.seed else {
                bail!(Usage("--method random requires --seed".into()))
            };
            (
                Selector::Random(RandParams {
                    keep_fraction,
                    n_min: args.n_min,
                    seed,
                }),
                json!({ "keep_fraction": keep_fraction, "n_min": args.n_min, "seed": seed }),
            )
        }
    })
}

fn cmd_prune(args: &PruneArgs) -> anyhow::Result<()> {
    let run = Run::new("prune");
    let (selector, params) = selector(args)?;
    let loaded = load(&args.input)?;
    let result = match &selector {
        Selector::DiffProb(p) => prune_dataset(&loaded.manifest, p)?,
        Selector::DynUnc(p) => dynunc_prune(&loaded.manifest, p)?,
        Selector::Random(p) => random_prune(&loaded.manifest, p)?,
    };
    write_id_list(&args.out, &result.kept_in_order(&loaded.manifest))?;
    if let Some(path) = &args.result {
        write_json(path, &result)?;
    }
    let summary = report(&loaded.manifest, &result)?;
    println!(
        "kept {} of {} ({:.6})",
        summary.kept, summary.total, summary.kept_fraction
    );
    run.finish(
        json!({
            "method": result.method,
            "params": params,
            "kept_fraction": summary.kept_fraction,
            "summary": summary,
        }),
        Some(&loaded.digest),
        args.report.as_ref(),
    )
}

fn need_fraction(args: &PruneArgs, method: &str) -> anyhow::Result<f64> {
    match args.keep_fraction {
        Some(f) => Ok(f),
        None => bail!(Usage(format!("--method {method} requires --keep-fraction"))),
    }
}

fn cmd_calibrate(args: &CalibrateArgs) -> anyhow::Result<()> {
    let run = Run::new("calibrate");
    let loaded = load(&args.input)?;
    let params = CalibrateParams {
        target: args.target,
        n_min: args.n_min,
        t_step: args.t_step,
        tol: args.tol,
        max_iter: args.max_iter,
        t_max: args.t_max,
    };
    let cal = calibrate(&loaded.manifest, &params).map_err(|e| {
        let hint = matches!(e, diffprob_core::Error::NonMonotone { .. })
            .then_some("; large thresholds reach the decay regime, try a smaller --t-max")
            .unwrap_or_default();
        anyhow::anyhow!("{e}{hint}")
    })?;
    if !cal.within_tol() {
        log::warn!(
            "target {} not reached within ±{}: {:?}",
            args.target,
            args.tol,
            cal.outcome
        );
    }
    println!("{:?} {:?}", cal.t, cal.achieved_fraction);
    if let Some(path) = &args.sweep_out {
        let grid = geometric_grid(1e-6, args.t_max, 50)?;
        write_sweep_csv(&sweep(&loaded.manifest, &grid, args.n_min, args.t_step)?, path)?;
    }
    run.finish(
        json!({
            "method": "diffprob",
            "params": {
                "target": args.target,
                "tol": args.tol,
                "max_iter": args.max_iter,
                "n_min": args.n_min,
                "t_step": args.t_step,
                "t_max": args.t_max,
            },
            "kept_fraction": cal.achieved_fraction,
            "summary": cal,
        }),
        Some(&loaded.digest),
        args.report.as_ref(),
    )
}

fn cmd_sweep(args: &SweepArgs) -> anyhow::Result<()> {
    let loaded = load(&args.input)?;
    let grid = geometric_grid(args.t_min, args.t_max, args.points)?;
    let rows = sweep(&loaded.manifest, &grid, args.n_min, args.t_step)?;
    write_sweep_csv(&rows, &args.out)?;
    println!("{} rows written to {}", rows.len(), args.out.display());
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> anyhow::Result<()> {
    let text = fs::read_to_string(&args.config).map_err(|e| io_error(&args.config, e))?;
    let mut config: SynthConfig =
        serde_json::from_str(&text).map_err(|e| Usage(format!("{}: {e}", args.config.display())))?;
    config.seed = args.seed;
    let (manifest, truth) = generate(&config)?;
    let format = args.format.map_or_else(|| Format::from_path(&args.out), Format::from);
    write_manifest(&manifest, &args.out, format)?;
    write_truth(&truth, &args.truth)?;
    println!(
        "{} samples, {} identities, {} flipped",
        manifest.len(),
        config.class_count,
        truth.flipped.len()
    );
    Ok(())
}

fn cmd_eval_toy(args: &EvalToyArgs) -> anyhow::Result<()> {
    let run = Run::new("eval-toy");
    let truth = read_truth(&args.truth)?;
    let kept = read_id_list(&args.kept)?;
    let accuracy = toy_eval(&truth, &kept)?;
    let mut body = json!({ "kept": kept.len(), "total": truth.samples.len(), "accuracy": accuracy });
    println!("accuracy {accuracy:?}");
    if let Some(path) = &args.removed {
        let removed = read_id_list(path)?;
        let (precision, recall) = flip_detection_metrics(&removed, &truth);
        println!("flip precision {precision:?} recall {recall:?}");
        body["flip_precision"] = json!(precision);
        body["flip_recall"] = json!(recall);
    }
    body["kept_fraction"] = json!(kept.len() as f64 / truth.samples.len() as f64);
    run.finish(body, None, args.report.as_ref())
}

fn cmd_report(args: &ReportArgs) -> anyhow::Result<()> {
    let loaded = load(&args.input)?;
    let text = fs::read_to_string(&args.result).map_err(|e| io_error(&args.result, e))?;
    let result: PruneResult =
        serde_json::from_str(&text).map_err(|e| Usage(format!("{}: {e}", args.result.display())))?;
    let summary = report(&loaded.manifest, &result)?;
    match &args.out {
        Some(path) => write_json(path, &summary),
        None => {
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            serde_json::to_writer_pretty(&mut out, &summary)?;
            writeln!(out)?;
            Ok(())
        }
    }
}

fn cmd_subset(args: &SubsetArgs) -> anyhow::Result<()> {
    let loaded = load(&args.input)?;
    let ids = read_id_list(&args.ids)?;
    let subset = loaded.manifest.subset(&ids)?;
    let format = args
        .input
        .format
        .map_or_else(|| Format::from_path(&args.out), Format::from);
    write_manifest(&subset, &args.out, format)?;
    println!("{} of {} records written", subset.len(), loaded.manifest.len());
    Ok(())
}

/// Argument problem detected after parsing.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// 2 for filesystem failures anywhere in the chain, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    let io = err.chain().any(|cause| {
        cause.is::<std::io::Error>()
            || cause
                .downcast_ref::<diffprob_core::Error>()
                .is_some_and(diffprob_core::Error::is_io)
    });
    if io {
        2
    } else {
        1
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!(Usage("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    match &cli.command {
        Command::Clean(a) => cmd_clean(a),
        Command::Prune(a) => cmd_prune(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Synth(a) => cmd_synth(a),
        Command::EvalToy(a) => cmd_eval_toy(a),
        Command::Report(a) => cmd_report(a),
        Command::Subset(a) => cmd_subset(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
