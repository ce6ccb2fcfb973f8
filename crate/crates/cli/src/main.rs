mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use edgeview::edges::{edge_alignment_table, EdgeParams};
use edgeview::io;
use edgeview::selection::{angle_spacing_table, candidate_grid};
use edgeview::workflow::{self, ExperimentConfig, Method, PhantomSource, RunArtifacts};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use config::{read_json, resolve, RunConfig};
use manifest::{NamedNormalization, RunManifest};

pub const TOOL: &str = "edgeview";

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration; exit code 1.
    Config(String),
    /// Failure while running; exit code 2.
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

#[derive(Parser)]
#[command(name = "edgeview", version, about = "Edge-alignment view selection for tomography experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config file, or a manifest from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-path override, e.g. `recon.beta=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Noise seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one acquisition experiment (or a comparison when `compare_with` is set).
    Run(Common),
    /// Run the configured method against `compare_with` (golden by default).
    Compare(Common),
    /// Write edge-alignment and angle-spacing curves for a volume.
    Score(ScoreArgs),
    /// Generate a phantom and save it.
    Phantom(Common),
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    common: Common,
    /// Raw volume to score.
    #[arg(long)]
    volume: PathBuf,
    /// Measured angles, comma separated; enables the spacing curve.
    #[arg(long, value_delimiter = ',')]
    angles: Option<Vec<f64>>,
}

/// Settings of the `score` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ScoreConfig {
    #[serde(default)]
    edges: EdgeParams,
    #[serde(default = "one")]
    alpha: f64,
    #[serde(default = "one")]
    grid_step: f64,
    #[serde(default)]
    threads: Option<usize>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PhantomConfig {
    phantom: PhantomSource,
    #[serde(default)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("edgeview: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run(c) => cmd_run(&c, false),
        Command::Compare(c) => cmd_run(&c, true),
        Command::Score(s) => cmd_score(&s),
        Command::Phantom(c) => cmd_phantom(&c),
    }
}

/// Base document plus `--set` overrides, with `--threads` always and
/// `--seed`/`--out` for experiment runs folded in as further overrides.
fn load(common: &Common, default: Value, experiment: bool) -> Result<(Value, Vec<String>), CliError> {
    let raw = match &common.config {
        Some(path) => read_json(path)?,
        None => default,
    };
    let mut overrides = common.overrides.clone();
    if let Some(t) = common.threads {
        overrides.push(format!("threads={t}"));
    }
    if experiment {
        if let Some(seed) = common.seed {
            overrides.push(format!("noise_seed={seed}"));
        }
        if let Some(out) = &common.out {
            overrides.push(format!("output_dir={}", Value::String(out.display().to_string())));
        }
    }
    Ok((raw, overrides))
}

fn set_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(invalid("threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(runtime)?;
    }
    Ok(())
}

fn out_dir(dir: Option<&PathBuf>, fallback: &str) -> Result<PathBuf, CliError> {
    let dir = dir.cloned().unwrap_or_else(|| PathBuf::from(fallback));
    std::fs::create_dir_all(&dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

/// `subdir` is where the run's files live relative to the manifest.
fn record(manifest: &mut RunManifest, art: &RunArtifacts, subdir: &str) {
    manifest.artifacts.extend(art.all_paths().into_iter().map(Path::to_path_buf));
    for (name, n) in &art.image_normalization {
        manifest.image_normalization.push(NamedNormalization {
            image_prefix: format!("{subdir}images/{name}"),
            min: n.min,
            max: n.max,
        });
    }
}

fn method_name(m: &Method) -> &'static str {
    match m {
        Method::Adaptive => "adaptive",
        Method::Golden => "golden",
        Method::FixedList(_) => "fixed_list",
    }
}

fn cmd_run(common: &Common, compare: bool) -> Result<(), CliError> {
    let Some(_) = &common.config else {
        return Err(invalid("--config is required"));
    };
    let (raw, overrides) = load(common, Value::Null, true)?;
    let (mut cfg, _): (RunConfig, Value) = resolve(raw, &overrides)?;
    if compare && cfg.compare_with.is_none() {
        cfg.compare_with = Some(Method::Golden);
    }
    let resolved = serde_json::to_value(&cfg).map_err(runtime)?;
    cfg.experiment.validate().map_err(invalid)?;
    if let Some(m) = &cfg.compare_with {
        let mut other = cfg.experiment.clone();
        other.method = m.clone();
        other.validate().map_err(invalid)?;
    }
    set_threads(cfg.threads)?;
    let dir = out_dir(cfg.output_dir.as_ref(), "edgeview-out")?;
    let command = if cfg.compare_with.is_some() { "compare" } else { "run" };
    let mut manifest = RunManifest::new(command, &common.overrides, resolved);

    let outcome = execute(&cfg, &dir, &mut manifest);
    if let Err(e) = &outcome {
        manifest.status = "failed".into();
        manifest.error = Some(e.to_string());
    } else {
        manifest.status = "ok".into();
    }
    let path = manifest.write(&dir)?;
    outcome?;
    println!("{}", path.display());
    Ok(())
}

fn execute(cfg: &RunConfig, dir: &Path, manifest: &mut RunManifest) -> Result<(), CliError> {
    match &cfg.compare_with {
        None => {
            let trace = workflow::run_experiment(&cfg.experiment).map_err(runtime)?;
            manifest.truncated = trace.truncated;
            let art = workflow::write_trace(&trace, dir).map_err(runtime)?;
            record(manifest, &art, "");
        }
        Some(other) => {
            let mut second: ExperimentConfig = cfg.experiment.clone();
            second.method = other.clone();
            let cmp = workflow::run_comparison(&cfg.experiment, &second, &cfg.thresholds).map_err(runtime)?;
            manifest.truncated = cmp.first.truncated || cmp.second.truncated;
            for (tag, trace, m) in [
                ("first", &cmp.first, &cfg.experiment.method),
                ("second", &cmp.second, other),
            ] {
                let name = format!("{tag}_{}", method_name(m));
                let art = workflow::write_trace(trace, &dir.join(&name)).map_err(runtime)?;
                record(manifest, &art, &format!("{name}/"));
            }
            for (name, text) in [("curves.csv", cmp.curves_csv()), ("crossings.csv", cmp.crossings_csv())] {
                let path = dir.join(name);
                std::fs::write(&path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
                manifest.artifacts.push(path);
            }
        }
    }
    Ok(())
}

fn cmd_score(args: &ScoreArgs) -> Result<(), CliError> {
    let (raw, overrides) = load(&args.common, json!({}), false)?;
    let (cfg, resolved): (ScoreConfig, Value) = resolve(raw, &overrides)?;
    cfg.edges.validate().map_err(invalid)?;
    set_threads(cfg.threads)?;
    let dir = out_dir(args.common.out.as_ref(), "edgeview-score")?;

    let volume = io::read_volume_raw(&args.volume).map_err(runtime)?;
    let grid = candidate_grid(cfg.grid_step).map_err(invalid)?;
    let table = edge_alignment_table(&volume, &grid, &cfg.edges).map_err(runtime)?;
    let mut manifest = RunManifest::new("score", &args.common.overrides, resolved);

    let mut text = String::from("theta,f\n");
    for (a, f) in table.angles.iter().zip(&table.values) {
        text.push_str(&format!("{a},{f}\n"));
    }
    let path = dir.join("alignment.csv");
    std::fs::write(&path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    manifest.artifacts.push(path);

    if let Some(angles) = &args.angles {
        angles
            .iter()
            .try_for_each(|&a| edgeview::projector::check_angle(a))
            .map_err(invalid)?;
        let h = angle_spacing_table(&grid, angles, cfg.alpha).map_err(runtime)?;
        let mut text = String::from("theta,h\n");
        for (a, v) in h.angles.iter().zip(&h.values) {
            text.push_str(&format!("{a},{v}\n"));
        }
        let path = dir.join("spacing.csv");
        std::fs::write(&path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        manifest.artifacts.push(path);
    }
    manifest.status = "ok".into();
    let path = manifest.write(&dir)?;
    println!("{}", path.display());
    Ok(())
}

fn cmd_phantom(common: &Common) -> Result<(), CliError> {
    let default = json!({
        "phantom": {"preset": {"preset": "rectangle", "dims": {"nz": 1, "nx": 150, "ny": 150}}}
    });
    let (mut raw, overrides) = load(common, default, false)?;
    // keep only the sections this command uses
    if let Value::Object(map) = &mut raw {
        map.retain(|k, _| k == "phantom" || k == "threads");
    }
    let (cfg, resolved): (PhantomConfig, Value) = resolve(raw, &overrides)?;
    set_threads(cfg.threads)?;
    let dir = out_dir(common.out.as_ref(), "edgeview-phantom")?;
    let volume = cfg.phantom.load().map_err(runtime)?;
    let mut manifest = RunManifest::new("phantom", &common.overrides, resolved);
    let path = dir.join("phantom.raw");
    io::write_volume_raw(&path, &volume).map_err(runtime)?;
    manifest.artifacts.push(path);
    let (images, norm) = io::write_slice_pngs(&dir.join("images"), "phantom", &volume).map_err(runtime)?;
    manifest.artifacts.extend(images);
    manifest.image_normalization.push(NamedNormalization {
        image_prefix: "images/phantom".into(),
        min: norm.min,
        max: norm.max,
    });
    manifest.status = "ok".into();
    let path = manifest.write(&dir)?;
    println!("{}", path.display());
    Ok(())
}
