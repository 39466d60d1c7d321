//! Command-line driver behind the `gridtrack` binary.

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::checks::{grad_check, interp_check, precond_check};
use crate::config::RunConfig;
use crate::geometry::{normalize_sequence, NormalizationTransform, PointCloudSequence, TriMesh};
use crate::gradients::FdInstance;
use crate::grid::checkpoint;
use crate::io::{read_mesh, read_point_cloud, write_obj, write_ply_points, write_xyz};
use crate::keyframe::{select_keyframe, KeyframeReport};
use crate::metrics::{evaluate_frame, track_error, MetricsConfig, SequenceReport, ThresholdBase, UnitBox};
use crate::objective::LossBreakdown;
use crate::optim::PreconditionOrder;
use crate::pipeline::{deform_all, prepare, solve};
use crate::synth::{add_noise, generate, SceneKind, SceneParams};
use crate::{Error, Result};

pub const EXIT_CHECK_FAILED: i32 = 5;

#[derive(Parser, Debug)]
#[command(name = "gridtrack", version, about = "Track a surface through a point-cloud sequence")]
pub struct Cli {
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// More log output; repeat for more.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Optimize the template and grids, export per-frame meshes.
    Run(RunArgs),
    /// Write a synthetic sequence with ground truth.
    Synth(SynthArgs),
    /// Compare predicted meshes with ground truth.
    Eval(EvalArgs),
    /// Run a verification harness.
    Check(CheckArgs),
    /// Report the keyframe choice for a sequence.
    Keyframe(KeyframeArgs),
}

#[derive(Args, Debug, Default)]
pub struct InputArgs {
    /// Frames in order.
    #[arg(long, num_args = 1.., conflicts_with = "glob")]
    pub frames: Vec<PathBuf>,
    /// Frame pattern, matches sorted lexicographically.
    #[arg(long)]
    pub glob: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct RunArgs {
    /// TOML configuration; flags override it.
    #[arg(long, conflicts_with = "manifest")]
    pub config: Option<PathBuf>,
    /// Re-run the configuration recorded in a run manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// Frame the template mesh belongs to (default: selected keyframe).
    #[arg(long)]
    pub template_frame: Option<usize>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub levels: Option<u32>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub log_interval: Option<usize>,
    /// Gaussian noise added to the inputs, percent of the bounding-box diagonal.
    #[arg(long)]
    pub noise_pct: Option<f64>,
    #[arg(long)]
    pub no_precondition: bool,
    #[arg(long)]
    pub no_multires: bool,
    #[arg(long)]
    pub no_isometry: bool,
    /// Keep the template vertices fixed.
    #[arg(long)]
    pub fixed_mesh: bool,
    #[arg(long, value_enum)]
    pub precondition_order: Option<OrderArg>,
    #[arg(long)]
    pub save_grids: Option<PathBuf>,
    #[arg(long)]
    pub load_grids: Option<PathBuf>,
    /// Ground-truth meshes to score the export against.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Also report tracking error (ground-truth vertices must follow the
    /// template's vertex order).
    #[arg(long, requires = "gt")]
    pub correspondence: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum OrderArg {
    BeforeAdam,
    AfterAdam,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "rigid-sphere")]
    pub kind: SceneKind,
    #[arg(long, default_value_t = 8)]
    pub frames: usize,
    #[arg(long, default_value_t = 2000)]
    pub points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub noise_pct: f64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Directory of predicted meshes, one per frame.
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory of ground-truth meshes, one per frame.
    #[arg(long)]
    pub gt: PathBuf,
    /// Metric settings are read from its `[metrics]` table.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub threshold_base: Option<BaseArg>,
    #[arg(long)]
    pub correspondence: bool,
    /// Where to write metrics.json and metrics.csv.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum BaseArg {
    Diagonal,
    Edge,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[command(subcommand)]
    pub which: CheckKind,
}

#[derive(Subcommand, Debug)]
pub enum CheckKind {
    /// Analytic gradients against central differences.
    Grad {
        #[arg(long, default_value_t = 2)]
        levels: u32,
        #[arg(long, default_value_t = 3)]
        frames: usize,
        #[arg(long, default_value_t = 50)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Double one gradient entry first; the check must then fail.
        #[arg(long)]
        corrupt: bool,
    },
    /// Smoothing solves on lattices and meshes.
    Precond {
        /// Largest lattice side to test.
        #[arg(long, default_value_t = 9)]
        max_side: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Cayley map, trilinear weights and identity grids.
    Interp {
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Debug)]
pub struct KeyframeArgs {
    #[command(flatten)]
    pub input: InputArgs,
}

/// Everything needed to repeat a run, plus what it produced.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    /// Fully resolved: explicit frame list and epoch count.
    pub config: RunConfig,
    pub keyframe_report: KeyframeReport,
    pub keyframe: usize,
    pub normalization: NormalizationTransform,
    pub active_parameters: usize,
    pub dense_parameters: usize,
    pub active_fraction: f64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_loss: LossBreakdown,
    pub final_loss: LossBreakdown,
    pub wall_time_s: f64,
    pub metrics: Option<SequenceReport>,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return 2;
        }
    }
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Run(a) => cmd_run(&a).map(|_| 0),
        Command::Synth(a) => cmd_synth(&a).map(|_| 0),
        Command::Eval(a) => cmd_eval(&a).map(|_| 0),
        Command::Check(a) => cmd_check(&a),
        Command::Keyframe(a) => cmd_keyframe(&a).map(|_| 0),
    }
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("reports serialize"));
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn resolve_frames(frames: &[PathBuf], glob: Option<&str>) -> Result<Vec<PathBuf>> {
    match (frames.is_empty(), glob) {
        (false, Some(_)) => Err(Error::Config("give either a frame list or a glob, not both".into())),
        (false, None) => Ok(frames.to_vec()),
        (true, Some(pattern)) => {
            let mut paths = Vec::new();
            for entry in ::glob::glob(pattern).map_err(|e| Error::Config(format!("bad glob '{pattern}': {e}")))? {
                paths.push(entry.map_err(|e| Error::io(e.path().to_path_buf(), e.into()))?);
            }
            paths.sort();
            if paths.is_empty() {
                return Err(Error::InvalidInput(format!("glob '{pattern}' matched no files")));
            }
            Ok(paths)
        }
        (true, None) => Err(Error::Config("no input frames: give a frame list or a glob".into())),
    }
}

fn read_sequence(paths: &[PathBuf]) -> Result<PointCloudSequence> {
    let frames = paths.par_iter().map(read_point_cloud).collect::<Result<Vec<_>>>()?;
    PointCloudSequence::new(frames)
}

/// Mesh files of a directory in lexicographic order.
pub fn mesh_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
        if path.is_file() && (ext == "obj" || ext == "ply") {
            out.push(path);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::InvalidInput(format!("no .obj or .ply meshes in {}", dir.display())));
    }
    Ok(out)
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).map_err(|e| Error::io(p, e))
}

fn relative_to(base: &Path, p: &Path) -> PathBuf {
    if p.is_relative() {
        base.join(p)
    } else {
        p.to_path_buf()
    }
}

/// Config from file or manifest, then command-line overrides. Relative paths
/// inside a config file are taken from the file's directory.
pub fn resolve_run_config(args: &RunArgs) -> Result<RunConfig> {
    let mut c = if let Some(path) = &args.manifest {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: RunManifest = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        m.config
    } else if let Some(path) = &args.config {
        let mut c = RunConfig::load(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        c.input.frames = c.input.frames.iter().map(|p| relative_to(base, p)).collect();
        c.input.template = c.input.template.as_ref().map(|p| relative_to(base, p));
        c.input.glob = c.input.glob.as_ref().map(|g| relative_to(base, Path::new(g)).to_string_lossy().into_owned());
        c.output_dir = relative_to(base, &c.output_dir);
        c.save_grids = c.save_grids.as_ref().map(|p| relative_to(base, p));
        c.load_grids = c.load_grids.as_ref().map(|p| relative_to(base, p));
        c
    } else {
        RunConfig::default()
    };
    if !args.input.frames.is_empty() {
        c.input.frames = args.input.frames.clone();
        c.input.glob = None;
    }
    if let Some(g) = &args.input.glob {
        c.input.glob = Some(g.clone());
        c.input.frames.clear();
    }
    if let Some(t) = &args.template {
        c.input.template = Some(t.clone());
    }
    if args.template_frame.is_some() {
        c.input.template_frame = args.template_frame;
    }
    if let Some(o) = &args.output {
        c.output_dir = o.clone();
    }
    if let Some(v) = args.levels {
        c.levels = v;
    }
    if args.epochs.is_some() {
        c.epochs = args.epochs;
    }
    if let Some(v) = args.seed {
        c.seed = v;
    }
    if let Some(v) = args.log_interval {
        c.log_interval = v;
    }
    if let Some(v) = args.noise_pct {
        c.noise_pct = v;
    }
    c.precondition &= !args.no_precondition;
    c.multires &= !args.no_multires;
    c.isometry &= !args.no_isometry;
    c.optimize_mesh &= !args.fixed_mesh;
    if let Some(o) = args.precondition_order {
        c.precondition_order = match o {
            OrderArg::BeforeAdam => PreconditionOrder::BeforeAdam,
            OrderArg::AfterAdam => PreconditionOrder::AfterAdam,
        };
    }
    if args.save_grids.is_some() {
        c.save_grids = args.save_grids.clone();
    }
    if args.load_grids.is_some() {
        c.load_grids = args.load_grids.clone();
    }
    c.validate()?;
    Ok(c)
}

/// Per-frame metrics of exported meshes against ground truth; tracking
/// error in each ground-truth frame's unit box when requested.
pub fn score(pred: &[TriMesh], gt: &[TriMesh], metrics: &MetricsConfig, correspondence: bool) -> Result<SequenceReport> {
    if pred.len() != gt.len() {
        return Err(Error::InvalidInput(format!("{} predicted frames vs {} ground-truth frames", pred.len(), gt.len())));
    }
    let mut frames = Vec::with_capacity(pred.len());
    for (p, g) in pred.iter().zip(gt) {
        let mut m = evaluate_frame(p, g, metrics)?;
        if correspondence {
            let unit = UnitBox::fit(&g.bounding_box())?;
            m.corr = Some(track_error(&unit.apply_all(p.vertices()), &unit.apply_all(g.vertices()))?);
        }
        frames.push(m);
    }
    SequenceReport::new(frames)
}

pub fn cmd_run(args: &RunArgs) -> Result<RunManifest> {
    let start = Instant::now();
    let mut config = resolve_run_config(args)?;
    let paths = resolve_frames(&config.input.frames, config.input.glob.as_deref())?;
    let template_path = config
        .input
        .template
        .clone()
        .ok_or_else(|| Error::Config("a template mesh is required (--template or input.template)".into()))?;
    let mut raw = read_sequence(&paths)?;
    if config.noise_pct > 0.0 {
        let noisy = raw
            .frames()
            .iter()
            .enumerate()
            .map(|(t, f)| add_noise(f, config.noise_pct, config.seed.wrapping_add(t as u64)))
            .collect::<Result<Vec<_>>>()?;
        raw = PointCloudSequence::new(noisy)?;
    }
    let template = read_mesh(&template_path)?;
    // pin everything a rerun needs, independent of the working directory
    config.input.frames = paths.iter().map(|p| absolute(p)).collect::<Result<_>>()?;
    config.input.glob = None;
    config.input.template = Some(absolute(&template_path)?);
    config.output_dir = absolute(&config.output_dir)?;
    config.epochs = Some(config.epochs_for(raw.len()));

    let prepared = prepare(&raw, &template, config.input.template_frame)?;
    info!(
        "{} frames, keyframe {} (scores favour {}), template {} vertices",
        raw.len(),
        prepared.keyframe,
        prepared.report.keyframe,
        template.vertices().len()
    );
    let initial = match &config.load_grids {
        Some(p) => Some(checkpoint::load(p)?),
        None => None,
    };
    let out = config.output_dir.clone();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let history_path = out.join("history.jsonl");
    let mut history = std::io::BufWriter::new(fs::File::create(&history_path).map_err(|e| Error::io(&history_path, e))?);
    let mut write_err = None;
    let solution = solve(&prepared, &config, initial, |h| {
        info!("epoch {} total {:.4e}", h.epoch, h.loss.total);
        let line = serde_json::to_string(h).expect("history serializes");
        if let Err(e) = writeln!(history, "{line}") {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(Error::io(&history_path, e));
    }
    history.flush().map_err(|e| Error::io(&history_path, e))?;

    let outcome = &solution.outcome;
    let tracks = deform_all(&outcome.grids, &outcome.vertices);
    let norm = prepared.normalization;
    let mut exported = Vec::with_capacity(tracks.len());
    for (t, x) in tracks.iter().enumerate() {
        let mesh = template.with_vertices(norm.invert_all(x))?;
        write_obj(out.join("frames").join(format!("frame_{t:03}.obj")), &mesh)?;
        exported.push(mesh);
    }
    write_obj(out.join("template.obj"), &template.with_vertices(norm.invert_all(&outcome.vertices))?)?;
    if let Some(p) = &config.save_grids {
        checkpoint::save(p, &outcome.grids)?;
    }
    let metrics = match &args.gt {
        Some(dir) => {
            let gt = mesh_files(dir)?.iter().map(read_mesh).collect::<Result<Vec<_>>>()?;
            Some(score(&exported, &gt, &config.metrics, args.correspondence)?)
        }
        None => None,
    };
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").into(),
        keyframe_report: prepared.report.clone(),
        keyframe: prepared.keyframe,
        normalization: norm,
        active_parameters: solution.counts.active,
        dense_parameters: solution.counts.dense,
        active_fraction: solution.counts.fraction(),
        epochs: solution.epochs,
        best_epoch: outcome.best_epoch,
        best_loss: outcome.best_loss.clone(),
        final_loss: outcome.final_loss.clone(),
        wall_time_s: start.elapsed().as_secs_f64(),
        metrics,
        config,
    };
    write_text(&out.join("config.toml"), &manifest.config.to_toml())?;
    write_text(&out.join("manifest.json"), &serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;
    if let Some(m) = &manifest.metrics {
        write_text(&out.join("metrics.csv"), &m.to_csv())?;
    }
    info!("best epoch {} total {:.4e} in {:.1}s", outcome.best_epoch, outcome.best_loss.total, manifest.wall_time_s);
    Ok(manifest)
}

/// Synthetic scene layout: `frames/frame_NNN.ply`, `gt/mesh_NNN.obj`,
/// `tracks/track_NNN.xyz`, `template.obj` (ground truth at the selected
/// keyframe), `scene.json` and a ready-to-run `config.toml`.
pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let params = SceneParams {
        kind: args.kind,
        frames: args.frames,
        points: args.points,
        seed: args.seed,
        ..SceneParams::new(args.kind)
    };
    let mut scene = generate(&params)?;
    if args.noise_pct > 0.0 {
        scene.clouds = scene
            .clouds
            .iter()
            .enumerate()
            .map(|(t, c)| add_noise(c, args.noise_pct, args.seed.wrapping_add(1000 + t as u64)))
            .collect::<Result<Vec<_>>>()?;
    }
    let out = &args.output;
    let mut frame_paths = Vec::new();
    for (t, (cloud, mesh)) in scene.clouds.iter().zip(&scene.meshes).enumerate() {
        let rel = PathBuf::from("frames").join(format!("frame_{t:03}.ply"));
        write_ply_points(out.join(&rel), cloud.points())?;
        write_obj(out.join("gt").join(format!("mesh_{t:03}.obj")), mesh)?;
        write_xyz(out.join("tracks").join(format!("track_{t:03}.xyz")), mesh.vertices())?;
        frame_paths.push(rel);
    }
    let report = select_keyframe(&normalize_sequence(&scene.sequence()?)?.0);
    write_obj(out.join("template.obj"), &scene.meshes[report.keyframe])?;
    #[derive(Serialize)]
    struct SceneFile<'a> {
        params: &'a SceneParams,
        noise_pct: f64,
        template_frame: usize,
        keyframe_report: &'a KeyframeReport,
    }
    let info = SceneFile {
        params: &params,
        noise_pct: args.noise_pct,
        template_frame: report.keyframe,
        keyframe_report: &report,
    };
    write_text(&out.join("scene.json"), &serde_json::to_string_pretty(&info).expect("scene serializes"))?;
    let mut config = RunConfig::default();
    config.input.frames = frame_paths;
    config.input.template = Some("template.obj".into());
    config.input.template_frame = Some(report.keyframe);
    config.output_dir = "run".into();
    write_text(&out.join("config.toml"), &config.to_toml())?;
    info!("wrote {} frames to {}", params.frames, out.display());
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<SequenceReport> {
    let mut metrics = match &args.config {
        Some(p) => RunConfig::load(p)?.metrics,
        None => MetricsConfig::default(),
    };
    if let Some(n) = args.samples {
        metrics.samples = n;
    }
    if let Some(s) = args.seed {
        metrics.seed = s;
    }
    if let Some(b) = args.threshold_base {
        metrics.threshold_base = match b {
            BaseArg::Diagonal => ThresholdBase::Diagonal,
            BaseArg::Edge => ThresholdBase::Edge,
        };
    }
    if metrics.samples == 0 {
        return Err(Error::Config("samples must be positive".into()));
    }
    let pred = mesh_files(&args.pred)?.iter().map(read_mesh).collect::<Result<Vec<_>>>()?;
    let gt = mesh_files(&args.gt)?.iter().map(read_mesh).collect::<Result<Vec<_>>>()?;
    let report = score(&pred, &gt, &metrics, args.correspondence)?;
    if let Some(out) = &args.output {
        write_text(&out.join("metrics.json"), &serde_json::to_string_pretty(&report).expect("report serializes"))?;
        write_text(&out.join("metrics.csv"), &report.to_csv())?;
    }
    print_json(&report.mean);
    Ok(report)
}

pub fn cmd_check(args: &CheckArgs) -> Result<i32> {
    let passed = match &args.which {
        CheckKind::Grad {
            levels,
            frames,
            points,
            seed,
            corrupt,
        } => {
            let r = grad_check(
                FdInstance {
                    levels: *levels,
                    frames: *frames,
                    points: *points,
                    seed: *seed,
                },
                *corrupt,
            )?;
            print_json(&r);
            r.passed
        }
        CheckKind::Precond { max_side, seed } => {
            let r = precond_check(*max_side, *seed)?;
            print_json(&r);
            r.passed
        }
        CheckKind::Interp { samples, seed } => {
            let r = interp_check(*samples, *seed)?;
            print_json(&r);
            r.passed
        }
    };
    if !passed {
        warn!("check failed");
    }
    Ok(if passed { 0 } else { EXIT_CHECK_FAILED })
}

pub fn cmd_keyframe(args: &KeyframeArgs) -> Result<KeyframeReport> {
    let paths = resolve_frames(&args.input.frames, args.input.glob.as_deref())?;
    let (seq, _) = normalize_sequence(&read_sequence(&paths)?)?;
    let report = select_keyframe(&seq);
    print_json(&report);
    Ok(report)
}
