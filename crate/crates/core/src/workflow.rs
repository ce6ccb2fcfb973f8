//! The closed acquisition loop: reconstruct, pick the next view, measure
//! it, reconstruct again with a warm start, and track NRMSE against the
//! ground truth after every reconstruction.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::edges::EdgeParams;
use crate::error::{Error, Result};
use crate::io;
use crate::measurement::{
    counts_to_attenuation, simulate_counts, CountData, WeightedProjection, DEFAULT_BLANK_INTENSITY,
};
use crate::phantom::{generate_phantom, PhantomSpec, Preset};
use crate::projector::{forward_project, ProjectionGeometry};
use crate::recon::{auto_beta, reconstruct_with_report, ReconParams};
use crate::selection::{evenly_spaced, golden_ratio_angle, select_next_angle, AngleState, ScoreTable};
use crate::volume::{Dims, Volume};

/// `|x - ref| / |ref|` over all voxels.
pub fn nrmse(x: &Volume, reference: &Volume) -> Result<f64> {
    if x.dims() != reference.dims() {
        return Err(Error::Geometry(format!(
            "cannot compare {:?} with {:?}",
            x.dims(),
            reference.dims()
        )));
    }
    let denom = reference.norm();
    if denom == 0.0 {
        return Err(Error::UndefinedMetric("reference volume is identically zero".into()));
    }
    let num: f64 = x
        .data()
        .iter()
        .zip(reference.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(num.sqrt() / denom)
}

/// Anything that can acquire a view at a requested angle.
pub trait Instrument {
    fn dims(&self) -> Dims;
    fn geometry(&self) -> &ProjectionGeometry;
    fn measure(&self, angle: f64) -> Result<CountData>;
}

/// Forward projects a known volume and draws Poisson counts. Each view's
/// noise depends only on its angle and the noise seed.
#[derive(Debug, Clone)]
pub struct SimulatedInstrument {
    truth: Volume,
    geom: ProjectionGeometry,
    blank_intensity: f64,
    noise_seed: u64,
    noiseless: bool,
}

impl SimulatedInstrument {
    pub fn new(truth: Volume, blank_intensity: f64, noise_seed: u64, noiseless: bool) -> Self {
        let geom = ProjectionGeometry::for_dims(truth.dims());
        Self {
            truth,
            geom,
            blank_intensity,
            noise_seed,
            noiseless,
        }
    }

    pub fn truth(&self) -> &Volume {
        &self.truth
    }
}

impl Instrument for SimulatedInstrument {
    fn dims(&self) -> Dims {
        self.truth.dims()
    }

    fn geometry(&self) -> &ProjectionGeometry {
        &self.geom
    }

    fn measure(&self, angle: f64) -> Result<CountData> {
        let projection = forward_project(&self.truth, angle, &self.geom)?;
        if self.noiseless {
            // expected counts, rounded
            let counts = projection
                .values()
                .iter()
                .map(|p| (self.blank_intensity * (-p).exp()).round() as u64)
                .collect();
            return CountData::new(angle, projection.nz(), projection.nc(), counts, self.blank_intensity);
        }
        simulate_counts(&projection, self.blank_intensity, self.noise_seed)
    }
}

/// Where the ground-truth volume comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomSource {
    Preset {
        preset: Preset,
        dims: Dims,
        #[serde(default = "default_attenuation")]
        attenuation: f64,
    },
    Spec(PhantomSpec),
    /// Raw float volume on disk.
    Path(PathBuf),
}

fn default_attenuation() -> f64 {
    crate::phantom::DEFAULT_ATTENUATION
}

impl PhantomSource {
    pub fn load(&self) -> Result<Volume> {
        match self {
            PhantomSource::Preset {
                preset,
                dims,
                attenuation,
            } => {
                let mut spec = PhantomSpec::preset(*preset, *dims);
                spec.attenuation = *attenuation;
                generate_phantom(&spec)
            }
            PhantomSource::Spec(spec) => generate_phantom(spec),
            PhantomSource::Path(path) => io::read_volume_raw(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialAngles {
    EvenlySpaced(usize),
    List(Vec<f64>),
}

impl InitialAngles {
    pub fn resolve(&self) -> Vec<f64> {
        match self {
            InitialAngles::EvenlySpaced(k) => evenly_spaced(*k),
            InitialAngles::List(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Edge alignment plus angle spacing.
    Adaptive,
    /// Golden-ratio angles snapped to the grid, skipping measured ones.
    Golden,
    /// Angles taken in order, skipping measured ones.
    FixedList(Vec<f64>),
}

/// Reconstruction settings; `beta`/`delta` left unset are resolved per run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconConfig {
    /// Fixed prior strength; automatic when unset.
    pub beta: Option<f64>,
    /// Multiplier of the automatic prior strength.
    pub beta_scale: f64,
    /// Huber threshold; 10% of the ground-truth peak when unset.
    pub delta: Option<f64>,
    /// Solver iterations per reconstruction.
    pub max_iterations: usize,
    pub tolerance: f64,
    pub nonnegative: bool,
}

impl Default for ReconConfig {
    fn default() -> Self {
        let base = ReconParams::default();
        Self {
            beta: None,
            beta_scale: DEFAULT_BETA_SCALE,
            delta: None,
            max_iterations: base.max_iterations,
            tolerance: base.tolerance,
            nonnegative: base.nonnegative,
        }
    }
}

/// Default multiplier of the automatic prior strength.
pub const DEFAULT_BETA_SCALE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub phantom: PhantomSource,
    #[serde(default = "default_initial")]
    pub initial_angles: InitialAngles,
    /// Number of views acquired after the initial set.
    pub additional_views: usize,
    #[serde(default = "default_step")]
    pub grid_step: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default)]
    pub edges: EdgeParams,
    #[serde(default = "default_blank")]
    pub blank_intensity: f64,
    #[serde(default)]
    pub noise_seed: u64,
    #[serde(default)]
    pub noiseless: bool,
    #[serde(default)]
    pub recon: ReconConfig,
    pub method: Method,
    /// Keep every intermediate reconstruction in the trace.
    #[serde(default)]
    pub keep_snapshots: bool,
}

fn default_initial() -> InitialAngles {
    InitialAngles::EvenlySpaced(3)
}
fn default_step() -> f64 {
    1.0
}
fn one() -> f64 {
    1.0
}
fn default_blank() -> f64 {
    DEFAULT_BLANK_INTENSITY
}

impl ExperimentConfig {
    pub fn new(phantom: PhantomSource, method: Method, additional_views: usize) -> Self {
        Self {
            phantom,
            initial_angles: default_initial(),
            additional_views,
            grid_step: default_step(),
            gamma: 1.0,
            alpha: 1.0,
            edges: EdgeParams::default(),
            blank_intensity: DEFAULT_BLANK_INTENSITY,
            noise_seed: 0,
            noiseless: false,
            recon: ReconConfig::default(),
            method,
            keep_snapshots: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.additional_views == 0 {
            return Err(Error::Parameter("additional_views must be >= 1".into()));
        }
        let initial = self.initial_angles.resolve();
        if initial.is_empty() {
            return Err(Error::Parameter("initial angle list is empty".into()));
        }
        AngleState::new(self.grid_step, &initial)?;
        if let Method::FixedList(list) = &self.method {
            list.iter().try_for_each(|&a| crate::projector::check_angle(a))?;
        }
        if !(self.gamma >= 0.0 && self.alpha >= 0.0) {
            return Err(Error::Parameter("gamma and alpha must be >= 0".into()));
        }
        if !(self.blank_intensity > 0.0 && self.blank_intensity.is_finite()) {
            return Err(Error::Parameter("blank_intensity must be > 0".into()));
        }
        self.edges.validate()
    }
}

/// One row of the trace; step 0 is the initial reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    /// View acquired at this step; `None` for the initial reconstruction.
    pub angle: Option<f64>,
    pub views: usize,
    pub nrmse: f64,
    pub beta: f64,
    pub recon_iterations: usize,
    pub selection_ms: f64,
    pub recon_ms: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentTrace {
    pub initial_angles: Vec<f64>,
    pub steps: Vec<TraceStep>,
    /// Score tables of adaptive selections, one per step after the first.
    pub scores: Vec<Option<ScoreTable>>,
    /// Reconstructions after every step when snapshots are kept.
    pub snapshots: Vec<Volume>,
    pub final_volume: Volume,
    pub ground_truth: Volume,
    /// The loop stopped early because the candidate grid ran out.
    pub truncated: bool,
}

impl ExperimentTrace {
    /// Every measured angle in acquisition order.
    pub fn angles(&self) -> Vec<f64> {
        let mut all = self.initial_angles.clone();
        all.extend(self.steps.iter().filter_map(|s| s.angle));
        all
    }

    pub fn nrmse_curve(&self) -> Vec<(usize, f64)> {
        self.steps.iter().map(|s| (s.views, s.nrmse)).collect()
    }

    /// Deterministic trace table: `step,angle,views,nrmse`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("step,angle,views,nrmse\n");
        for s in &self.steps {
            let angle = s.angle.map(|a| a.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", s.step, angle, s.views, s.nrmse);
        }
        out
    }

    /// Wall-clock timings, kept apart from the reproducible trace.
    pub fn timings_csv(&self) -> String {
        let mut out = String::from("step,selection_ms,recon_ms,recon_iterations,beta\n");
        for s in &self.steps {
            let _ = writeln!(
                out,
                "{},{:.3},{:.3},{},{}",
                s.step, s.selection_ms, s.recon_ms, s.recon_iterations, s.beta
            );
        }
        out
    }

    pub fn angles_txt(&self) -> String {
        self.angles().iter().map(|a| format!("{a}\n")).collect()
    }
}

struct Stopwatch(#[cfg(not(target_arch = "wasm32"))] std::time::Instant);

impl Stopwatch {
    fn start() -> Self {
        #[cfg(not(target_arch = "wasm32"))]
        {
            Stopwatch(std::time::Instant::now())
        }
        #[cfg(target_arch = "wasm32")]
        {
            Stopwatch()
        }
    }

    fn ms(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.0.elapsed().as_secs_f64() * 1e3
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }
}

/// Resolved solver settings for one reconstruction.
fn recon_params(
    config: &ReconConfig,
    data: &[WeightedProjection],
    geom: &ProjectionGeometry,
    dims: Dims,
    delta: f64,
) -> Result<ReconParams> {
    let beta = match config.beta {
        Some(b) => b,
        None => auto_beta(data, geom, dims, delta, config.beta_scale)?,
    };
    Ok(ReconParams {
        beta,
        delta,
        max_iterations: config.max_iterations,
        tolerance: config.tolerance,
        nonnegative: config.nonnegative,
    })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentTrace> {
    config.validate()?;
    let truth = config.phantom.load()?;
    let instrument = SimulatedInstrument::new(
        truth.clone(),
        config.blank_intensity,
        config.noise_seed,
        config.noiseless,
    );
    run_with_instrument(config, &instrument, truth)
}

/// Runs the loop against any instrument; `reference` is the volume NRMSE is
/// measured against.
pub fn run_with_instrument(
    config: &ExperimentConfig,
    instrument: &dyn Instrument,
    reference: Volume,
) -> Result<ExperimentTrace> {
    config.validate()?;
    let dims = instrument.dims();
    let geom = *instrument.geometry();
    let delta = config
        .recon
        .delta
        .unwrap_or_else(|| 0.1 * reference.min_max().1.max(f64::MIN_POSITIVE));
    let initial = config.initial_angles.resolve();
    let mut state = AngleState::new(config.grid_step, &initial)?;

    let mut data = Vec::with_capacity(initial.len() + config.additional_views);
    for &a in &initial {
        data.push(counts_to_attenuation(&instrument.measure(a)?));
    }
    let clock = Stopwatch::start();
    let params = recon_params(&config.recon, &data, &geom, dims, delta)?;
    let (mut x, report) = reconstruct_with_report(&data, &geom, dims, None, &params)?;
    let mut steps = vec![TraceStep {
        step: 0,
        angle: None,
        views: data.len(),
        nrmse: nrmse(&x, &reference)?,
        beta: params.beta,
        recon_iterations: report.iterations,
        selection_ms: 0.0,
        recon_ms: clock.ms(),
    }];
    let mut snapshots = Vec::new();
    if config.keep_snapshots {
        snapshots.push(x.clone());
    }
    let mut scores = Vec::new();
    let mut golden_index = 0u64;
    let mut fixed_index = 0usize;
    let mut truncated = false;

    for n in 1..=config.additional_views {
        if state.remaining().is_empty() {
            truncated = true;
            break;
        }
        let clock = Stopwatch::start();
        let (angle, table) = match &config.method {
            Method::Adaptive => {
                let sel = select_next_angle(&x, &state, config.gamma, config.alpha, &config.edges)?;
                (sel.angle, Some(sel.scores))
            }
            Method::Golden => loop {
                let a = state.snap(golden_ratio_angle(golden_index));
                golden_index += 1;
                if !state.contains(a) {
                    break (a, None);
                }
            },
            Method::FixedList(list) => {
                let next = loop {
                    match list.get(fixed_index) {
                        None => break None,
                        Some(&a) => {
                            fixed_index += 1;
                            if !state.contains(a) {
                                break Some(a);
                            }
                        }
                    }
                };
                match next {
                    Some(a) => (a, None),
                    None => {
                        truncated = true;
                        break;
                    }
                }
            }
        };
        let selection_ms = clock.ms();

        data.push(counts_to_attenuation(&instrument.measure(angle)?));
        state.push(angle)?;
        let clock = Stopwatch::start();
        let params = recon_params(&config.recon, &data, &geom, dims, delta)?;
        let (next, report) = reconstruct_with_report(&data, &geom, dims, Some(&x), &params)?;
        x = next;
        steps.push(TraceStep {
            step: n,
            angle: Some(angle),
            views: data.len(),
            nrmse: nrmse(&x, &reference)?,
            beta: params.beta,
            recon_iterations: report.iterations,
            selection_ms,
            recon_ms: clock.ms(),
        });
        scores.push(table);
        if config.keep_snapshots {
            snapshots.push(x.clone());
        }
    }

    Ok(ExperimentTrace {
        initial_angles: initial,
        steps,
        scores,
        snapshots,
        final_volume: x,
        ground_truth: reference,
        truncated,
    })
}

/// View count at which a curve first drops below a threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub threshold: f64,
    pub first: Option<usize>,
    pub second: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub first: ExperimentTrace,
    pub second: ExperimentTrace,
    pub crossings: Vec<Crossing>,
}

impl Comparison {
    /// `views,nrmse_first,nrmse_second`, one row per shared view count.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("views,nrmse_first,nrmse_second\n");
        for (a, b) in self.first.steps.iter().zip(&self.second.steps) {
            let _ = writeln!(out, "{},{},{}", a.views, a.nrmse, b.nrmse);
        }
        out
    }

    pub fn crossings_csv(&self) -> String {
        let fmt = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_default();
        let mut out = String::from("threshold,views_first,views_second\n");
        for c in &self.crossings {
            let _ = writeln!(out, "{},{},{}", c.threshold, fmt(c.first), fmt(c.second));
        }
        out
    }
}

/// First view count whose NRMSE is below `threshold`.
pub fn first_crossing(trace: &ExperimentTrace, threshold: f64) -> Option<usize> {
    trace.steps.iter().find(|s| s.nrmse < threshold).map(|s| s.views)
}

fn check_shared(a: &ExperimentConfig, b: &ExperimentConfig) -> Result<()> {
    let mut diffs = Vec::new();
    if a.phantom != b.phantom {
        diffs.push("phantom");
    }
    if a.noise_seed != b.noise_seed || a.noiseless != b.noiseless || a.blank_intensity != b.blank_intensity {
        diffs.push("noise");
    }
    if a.recon != b.recon {
        diffs.push("recon");
    }
    if a.initial_angles.resolve() != b.initial_angles.resolve() {
        diffs.push("initial_angles");
    }
    if a.grid_step != b.grid_step {
        diffs.push("grid_step");
    }
    if diffs.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidComparison(format!("configs differ in {}", diffs.join(", "))))
    }
}

/// Runs two configurations with matched phantom, noise and solver settings.
pub fn run_comparison(
    first: &ExperimentConfig,
    second: &ExperimentConfig,
    thresholds: &[f64],
) -> Result<Comparison> {
    check_shared(first, second)?;
    #[cfg(feature = "parallel")]
    let (a, b) = rayon::join(|| run_experiment(first), || run_experiment(second));
    #[cfg(not(feature = "parallel"))]
    let (a, b) = (run_experiment(first), run_experiment(second));
    let (first, second) = (a?, b?);
    let crossings = thresholds
        .iter()
        .map(|&t| Crossing {
            threshold: t,
            first: first_crossing(&first, t),
            second: first_crossing(&second, t),
        })
        .collect();
    Ok(Comparison {
        first,
        second,
        crossings,
    })
}

/// Files written for one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunArtifacts {
    pub trace_csv: PathBuf,
    pub timings_csv: PathBuf,
    pub angles_txt: PathBuf,
    pub score_csvs: Vec<PathBuf>,
    pub volumes: Vec<PathBuf>,
    pub images: Vec<PathBuf>,
    /// Grey-level range of each volume's slice images, by file stem.
    pub image_normalization: Vec<(String, io::GrayNormalization)>,
}

impl RunArtifacts {
    pub fn all_paths(&self) -> Vec<&Path> {
        let mut v: Vec<&Path> = vec![&self.trace_csv, &self.timings_csv, &self.angles_txt];
        v.extend(self.score_csvs.iter().map(PathBuf::as_path));
        v.extend(self.volumes.iter().map(PathBuf::as_path));
        v.extend(self.images.iter().map(PathBuf::as_path));
        v
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes trace, timings, angles, score tables, and volumes (raw + PNG
/// slices, each volume min-max normalised on its own) under `dir`.
pub fn write_trace(trace: &ExperimentTrace, dir: &Path) -> Result<RunArtifacts> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut art = RunArtifacts {
        trace_csv: dir.join("trace.csv"),
        timings_csv: dir.join("timings.csv"),
        angles_txt: dir.join("angles.txt"),
        ..Default::default()
    };
    write_text(&art.trace_csv, &trace.trace_csv())?;
    write_text(&art.timings_csv, &trace.timings_csv())?;
    write_text(&art.angles_txt, &trace.angles_txt())?;

    let scores_dir = dir.join("scores");
    for (i, table) in trace.scores.iter().enumerate() {
        if let Some(table) = table {
            std::fs::create_dir_all(&scores_dir).map_err(|e| Error::io(&scores_dir, e))?;
            let path = scores_dir.join(format!("step_{:03}.csv", i + 1));
            table.write_csv(&path)?;
            art.score_csvs.push(path);
        }
    }

    let images = dir.join("images");
    let mut volumes: Vec<(String, &Volume)> = vec![
        ("ground_truth".into(), &trace.ground_truth),
        ("final".into(), &trace.final_volume),
    ];
    for (i, v) in trace.snapshots.iter().enumerate() {
        volumes.push((format!("step_{i:03}"), v));
    }
    for (name, v) in volumes {
        let path = dir.join(format!("{name}.raw"));
        io::write_volume_raw(&path, v)?;
        art.volumes.push(path);
        let (paths, norm) = io::write_slice_pngs(&images, &name, v)?;
        art.images.extend(paths);
        art.image_normalization.push((name, norm));
    }
    Ok(art)
}
