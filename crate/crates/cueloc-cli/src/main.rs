//! `cueloc` command line: dataset generation, training, experiment
//! evaluation, the pick-and-place mock, visualization, and the built-in
//! self-test suite.
//!
//! Machine contract: exit code 0 on success, 1 when an experiment misses its
//! pass thresholds (or the self-test fails), 2 on configuration errors, 3 on
//! data-ingestion errors. Human-readable logs go to standard error; the only
//! things written to standard output are single-line JSON reports.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use cueloc::eval::{
    pick_place_mock, run_experiment, visualize, ExperimentName, ExperimentSpec,
    DEFAULT_GRASP_TOLERANCE, DEFAULT_TRIALS,
};
use cueloc::model::ArchitectureConfig;
use cueloc::scene::{archive, CueKind, EpisodeStream, SceneConfig, Split};
use cueloc::selftest::run_selftest;
use cueloc::train::{train, Checkpoint, Protocol, TrainConfig};
use cueloc::{Error, Real, Result, REAL_BITS};

#[derive(Parser)]
#[command(
    name = "cueloc",
    version,
    about = "One-shot visual-cue localization: generate episodes, train, evaluate, visualize"
)]
struct Cli {
    /// Worker threads for batch gradients and evaluation. Results are
    /// bit-identical for any value; 1 is the conservative default.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,

    /// Suppress per-step progress logs (reports still go to stdout and
    /// metric files).
    #[arg(long, global = true, default_value_t = false)]
    quiet: bool,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write an episode archive (PNG pairs + metadata) to a directory.
    Generate(GenerateArgs),
    /// Train a localizer and save the checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint under a named experiment's thresholds.
    Eval(EvalArgs),
    /// Run the geometric pick-and-place mock against a checkpoint.
    Pickplace(PickplaceArgs),
    /// Render attention/score-map PNGs for test episodes.
    Visualize(VisualizeArgs),
    /// Run the built-in verification suite (gradient checks and oracles).
    Selftest,
}

#[derive(Args)]
struct GenerateArgs {
    /// omniglot | synthetic-glyphs | shapes | shapes-truncated
    #[arg(long)]
    protocol: Protocol,
    /// train | test identity split.
    #[arg(long, default_value = "train")]
    split: Split,
    /// Number of episodes to write.
    #[arg(long)]
    count: u64,
    /// red | green cue on the adaptation image.
    #[arg(long, default_value = "red")]
    cue: CueKind,
    /// Cue-center jitter as a fraction of object size (red dot only).
    #[arg(long, default_value_t = 0.0)]
    jitter: Real,
    /// Master seed of the episode stream.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Square canvas side in pixels.
    #[arg(long, default_value_t = 64)]
    canvas: usize,
    /// Seed for the procedurally generated corpora.
    #[arg(long, default_value_t = 2024)]
    data_seed: u64,
    /// Root of an on-disk character corpus (omniglot protocol only);
    /// falls back to the OMNIGLOT_ROOT environment variable.
    #[arg(long)]
    omniglot_root: Option<PathBuf>,
    /// Output directory for the archive.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON training config (strict schema; flags below override its values).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoint output path. The metric log and run manifest are written
    /// next to it as <out>.metrics.jsonl and <out>.manifest.json.
    #[arg(long)]
    out: PathBuf,
    /// Resume from this checkpoint (must match config and seed).
    #[arg(long)]
    resume: Option<PathBuf>,
    /// omniglot | synthetic-glyphs | shapes | shapes-truncated
    /// (required when no --config file is given).
    #[arg(long)]
    protocol: Option<Protocol>,
    /// Architecture preset: full | desk | tiny. Sets the canvas size too.
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    cue: Option<CueKind>,
    #[arg(long)]
    jitter: Option<Real>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<Real>,
    #[arg(long)]
    eval_interval: Option<u64>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    #[arg(long)]
    data_seed: Option<u64>,
    /// Stop as soon as validation mse reaches this value.
    #[arg(long)]
    stop_at_val_mse: Option<Real>,
    #[arg(long)]
    omniglot_root: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint to evaluate.
    #[arg(long)]
    ckpt: PathBuf,
    /// omniglot-base | omniglot-jitter | omniglot-green | shapes-full |
    /// shapes-truncated
    #[arg(long)]
    experiment: ExperimentName,
    /// Evaluation-set size (test-split episodes).
    #[arg(long, default_value_t = 256)]
    episodes: usize,
    /// Seed of the held-out evaluation stream.
    #[arg(long, default_value_t = 999)]
    eval_seed: u64,
    #[arg(long, default_value_t = 2024)]
    data_seed: u64,
    #[arg(long)]
    omniglot_root: Option<PathBuf>,
    /// Directory for report.json and the run manifest (optional).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PickplaceArgs {
    /// Checkpoint to drive the mock with.
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    /// Normalized localization error under which a grasp counts as success.
    #[arg(long, default_value_t = DEFAULT_GRASP_TOLERANCE)]
    tolerance: Real,
    /// Protocol the trial episodes are drawn from (test split).
    #[arg(long, default_value = "shapes")]
    protocol: Protocol,
    #[arg(long, default_value = "red")]
    cue: CueKind,
    #[arg(long, default_value_t = 0.0)]
    jitter: Real,
    #[arg(long, default_value_t = 999)]
    eval_seed: u64,
    #[arg(long, default_value_t = 2024)]
    data_seed: u64,
    #[arg(long)]
    omniglot_root: Option<PathBuf>,
    /// Exit with code 1 unless at least this many trials succeed.
    #[arg(long)]
    min_successes: Option<usize>,
    /// Directory for report.json and the run manifest (optional).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VisualizeArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Seed of the episode stream being rendered.
    #[arg(long, default_value_t = 999)]
    seed: u64,
    /// Number of consecutive episodes to render.
    #[arg(long, default_value_t = 4)]
    episodes: u64,
    #[arg(long, default_value = "synthetic-glyphs")]
    protocol: Protocol,
    #[arg(long, default_value = "test")]
    split: Split,
    #[arg(long, default_value = "red")]
    cue: CueKind,
    #[arg(long, default_value_t = 0.0)]
    jitter: Real,
    #[arg(long, default_value_t = 2024)]
    data_seed: u64,
    #[arg(long)]
    omniglot_root: Option<PathBuf>,
    /// Output directory for the PNG sets.
    #[arg(long)]
    out: PathBuf,
}

/// Reproducibility record written next to every artifact-producing run.
#[derive(Serialize)]
struct Manifest<T: Serialize> {
    command: &'static str,
    version: &'static str,
    real_bits: u32,
    workers: usize,
    config: T,
}

fn write_manifest<T: Serialize>(path: &Path, command: &'static str, workers: usize, config: T) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        real_bits: REAL_BITS,
        workers,
        config,
    };
    std::fs::write(path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

fn omniglot_root_or_env(flag: Option<PathBuf>) -> Option<PathBuf> {
    flag.or_else(|| std::env::var_os("OMNIGLOT_ROOT").map(PathBuf::from))
}

/// A config carrying protocol/corpus fields, used to build episode sources
/// for the non-training subcommands.
fn source_config(
    protocol: Protocol,
    cue: CueKind,
    jitter: Real,
    seed: u64,
    data_seed: u64,
    omniglot_root: Option<PathBuf>,
) -> TrainConfig {
    let mut cfg = TrainConfig::desk(protocol, cue, jitter, seed);
    cfg.data_seed = data_seed;
    cfg.omniglot_root = omniglot_root_or_env(omniglot_root);
    cfg
}

fn cmd_generate(g: Global, a: GenerateArgs) -> Result<u8> {
    let scene = SceneConfig::for_canvas(a.canvas, a.cue, a.jitter)?;
    let cfg = source_config(a.protocol, a.cue, a.jitter, a.seed, a.data_seed, a.omniglot_root);
    let source = cfg.build_source()?;
    let stream = EpisodeStream::new(source, a.split, scene, a.seed)?;
    let t0 = Instant::now();
    archive::write_archive(&a.out, &stream, a.count)?;
    write_manifest(
        &a.out.join("manifest.json"),
        "generate",
        g.workers,
        serde_json::json!({
            "protocol": a.protocol,
            "split": a.split,
            "count": a.count,
            "cue": a.cue,
            "jitter": a.jitter,
            "seed": a.seed,
            "canvas": a.canvas,
            "data_seed": a.data_seed,
            "omniglot_root": cfg.omniglot_root,
        }),
    )?;
    eprintln!(
        "wrote {} episodes to {} in {:.1}s",
        a.count,
        a.out.display(),
        t0.elapsed().as_secs_f64()
    );
    Ok(0)
}

fn resolve_train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::ingestion(path.clone(), format!("unreadable config: {e}")))?;
            serde_json::from_str::<TrainConfig>(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => {
            let protocol = a.protocol.ok_or_else(|| {
                Error::Config("--protocol is required when no --config file is given".into())
            })?;
            TrainConfig::desk(protocol, a.cue.unwrap_or(CueKind::RedDot), 0.0, 1)
        }
    };
    if let Some(name) = &a.arch {
        cfg.architecture = ArchitectureConfig::by_name(name)?;
        cfg.canvas = cfg.architecture.input_size;
    }
    if let Some(v) = a.protocol {
        cfg.protocol = v;
    }
    if let Some(v) = a.cue {
        cfg.cue = v;
    }
    if let Some(v) = a.jitter {
        cfg.jitter = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.steps {
        cfg.steps = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.lr {
        cfg.adam.lr = v;
    }
    if let Some(v) = a.eval_interval {
        cfg.eval_interval = v;
    }
    if let Some(v) = a.eval_episodes {
        cfg.eval_episodes = v;
    }
    if let Some(v) = a.data_seed {
        cfg.data_seed = v;
    }
    if let Some(v) = a.stop_at_val_mse {
        cfg.stop_at_val_mse = Some(v);
    }
    cfg.omniglot_root = omniglot_root_or_env(a.omniglot_root.clone()).or(cfg.omniglot_root);
    cfg.validate()?;
    Ok(cfg)
}

fn sibling_with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

fn cmd_train(g: Global, a: TrainArgs) -> Result<u8> {
    let cfg = resolve_train_config(&a)?;
    let resume = match &a.resume {
        Some(path) => Some(Checkpoint::load(path)?),
        None => None,
    };
    if let Some(parent) = a.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    write_manifest(
        &sibling_with_suffix(&a.out, ".manifest.json"),
        "train",
        g.workers,
        serde_json::json!({
            "train": cfg,
            "resume": a.resume,
            "out": a.out,
        }),
    )?;

    let metrics_path = sibling_with_suffix(&a.out, ".metrics.jsonl");
    let mut metrics = std::io::BufWriter::new(std::fs::File::create(&metrics_path)?);
    let quiet = g.quiet;
    let t0 = Instant::now();
    let start_step = resume.as_ref().map_or(0, |c| c.step);
    let mut observer = |rec: &cueloc::train::MetricRecord| {
        if let Ok(line) = serde_json::to_string(rec) {
            let _ = writeln!(metrics, "{line}");
            let _ = metrics.flush();
        }
        if let Some(val) = &rec.val {
            eprintln!(
                "step {:>6}  loss {:.5}  val mse {:.5}  s@15 {:.3}  [{:.0}s]",
                rec.step,
                rec.loss,
                val.mse,
                val.success_at_15,
                t0.elapsed().as_secs_f64()
            );
        } else if !quiet && rec.step % 100 == 0 {
            let done = rec.step.saturating_sub(start_step).max(1);
            eprintln!(
                "step {:>6}  loss {:.5}  [{:.2}s/step]",
                rec.step,
                rec.loss,
                t0.elapsed().as_secs_f64() / done as f64
            );
        }
    };

    let outcome = train(&cfg, resume, g.workers, Some(&mut observer))?;
    outcome.checkpoint.save(&a.out)?;
    eprintln!(
        "saved checkpoint at step {} to {} ({:.1}s total)",
        outcome.checkpoint.step,
        a.out.display(),
        t0.elapsed().as_secs_f64()
    );
    if let Some(val) = &outcome.checkpoint.metrics {
        println!("{}", serde_json::to_string(val)?);
    }
    Ok(0)
}

/// Clamp an evaluation config onto the checkpoint's architecture so the
/// episode canvas matches the network input.
fn adopt_architecture(cfg: &mut TrainConfig, ck: &Checkpoint) {
    cfg.architecture = ck.architecture.clone();
    cfg.canvas = ck.architecture.input_size;
}

fn cmd_eval(g: Global, a: EvalArgs) -> Result<u8> {
    let ck = Checkpoint::load(&a.ckpt)?;
    let mut spec = ExperimentSpec::by_name(a.experiment);
    spec.eval_episodes = a.episodes;
    let mut cfg = spec.train_config(ck.seed);
    cfg.data_seed = a.data_seed;
    cfg.omniglot_root = omniglot_root_or_env(a.omniglot_root.clone());
    adopt_architecture(&mut cfg, &ck);
    let localizer = ck.localizer();
    let t0 = Instant::now();
    let outcome = run_experiment(&spec, &localizer, &cfg, a.eval_seed, g.workers)?;
    eprintln!(
        "{}: {} ({:.1}s)",
        spec.name.as_str(),
        outcome.report,
        t0.elapsed().as_secs_f64()
    );
    eprintln!(
        "thresholds: mse <= {} and success@15 >= {} -> {}",
        spec.max_mse,
        spec.min_success_at_15,
        if outcome.passed { "pass" } else { "FAIL" }
    );
    println!("{}", serde_json::to_string(&outcome)?);
    if let Some(out) = &a.out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("report.json"), serde_json::to_string_pretty(&outcome)? + "\n")?;
        write_manifest(
            &out.join("manifest.json"),
            "eval",
            g.workers,
            serde_json::json!({
                "ckpt": a.ckpt,
                "experiment": spec.name.as_str(),
                "episodes": a.episodes,
                "eval_seed": a.eval_seed,
                "eval": cfg,
            }),
        )?;
    }
    Ok(if outcome.passed { 0 } else { 1 })
}

fn cmd_pickplace(g: Global, a: PickplaceArgs) -> Result<u8> {
    let ck = Checkpoint::load(&a.ckpt)?;
    let mut cfg = source_config(a.protocol, a.cue, a.jitter, ck.seed, a.data_seed, a.omniglot_root.clone());
    adopt_architecture(&mut cfg, &ck);
    let stream = cfg.test_stream(cfg.build_source()?, a.eval_seed)?;
    let localizer = ck.localizer();
    let report = pick_place_mock(&localizer, &stream, 0, a.trials, a.tolerance, g.workers)?;
    eprintln!("{report}");
    println!("{}", serde_json::to_string(&report)?);
    if let Some(out) = &a.out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
        write_manifest(
            &out.join("manifest.json"),
            "pickplace",
            g.workers,
            serde_json::json!({
                "ckpt": a.ckpt,
                "trials": a.trials,
                "tolerance": a.tolerance,
                "eval_seed": a.eval_seed,
                "eval": cfg,
            }),
        )?;
    }
    let met = a.min_successes.map_or(true, |m| report.successes >= m);
    Ok(if met { 0 } else { 1 })
}

fn cmd_visualize(g: Global, a: VisualizeArgs) -> Result<u8> {
    let ck = Checkpoint::load(&a.ckpt)?;
    let mut cfg = source_config(a.protocol, a.cue, a.jitter, ck.seed, a.data_seed, a.omniglot_root.clone());
    adopt_architecture(&mut cfg, &ck);
    let scene = cfg.scene_config()?;
    let stream = EpisodeStream::new(cfg.build_source()?, a.split, scene, a.seed)?;
    let localizer = ck.localizer();
    for i in 0..a.episodes {
        let episode = stream.episode(i)?;
        let files = visualize(&localizer, &episode, &a.out, &format!("ep{i:03}"))?;
        if !g.quiet {
            eprintln!("episode {i}: wrote {}", files.target_prediction.display());
        }
    }
    write_manifest(
        &a.out.join("manifest.json"),
        "visualize",
        g.workers,
        serde_json::json!({
            "ckpt": a.ckpt,
            "seed": a.seed,
            "episodes": a.episodes,
            "split": a.split,
            "eval": cfg,
        }),
    )?;
    Ok(0)
}

fn cmd_selftest() -> Result<u8> {
    let t0 = Instant::now();
    let report = run_selftest();
    eprintln!("{report} ({:.1}s)", t0.elapsed().as_secs_f64());
    Ok(if report.all_passed() { 0 } else { 1 })
}

/// Flags shared by every subcommand.
#[derive(Clone, Copy)]
struct Global {
    workers: usize,
    quiet: bool,
}

fn run(cli: Cli) -> Result<u8> {
    let g = Global { workers: cli.workers, quiet: cli.quiet };
    match cli.command {
        Cmd::Generate(a) => cmd_generate(g, a),
        Cmd::Train(a) => cmd_train(g, a),
        Cmd::Eval(a) => cmd_eval(g, a),
        Cmd::Pickplace(a) => cmd_pickplace(g, a),
        Cmd::Visualize(a) => cmd_visualize(g, a),
        Cmd::Selftest => cmd_selftest(),
    }
}

/// Exit-code mapping for errors: data-ingestion problems are 3, everything
/// else that prevents the run is 2.
fn exit_for(err: &Error) -> u8 {
    match err {
        Error::Ingestion { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_for(&err))
        }
    }
}
