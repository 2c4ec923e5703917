//! The `ergokit` command line: synth, train, eval, predict, angles, rula.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::features::{batch_tensors, FeatureError};
use crate::io::{self, angles_csv, IoError, ReportFormat, ReportTable};
use crate::regressor::{evaluate, predict_all, train_models, ModelError, ModelSet, TrainConfig};
use crate::rula::{rula_score, ArmAdjustments, RulaBins, RulaError, RulaInput, RulaResult, Side};
use crate::skeleton::{apparent_angles_2d, AngleName, JointAngleSet, PoseFrame};
use crate::synth::{
    generate_dataset, CameraSource, CameraSpec, DatasetSpec, OcclusionPolicy, PosePrior, Projection, SynthError,
};

/// Environment variable capping the worker-thread count (0 or unset: one per core).
pub const THREADS_ENV: &str = "ERGOKIT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ergokit", version, about = "Joint angles from 2D BODY_25 keypoints, and RULA scores")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labelled synthetic dataset (JSON Lines).
    Synth(SynthArgs),
    /// Train per-angle regressors and write `<ANGLE>.json` model files.
    Train(TrainArgs),
    /// Report per-angle and pooled errors of a model directory.
    Eval(EvalArgs),
    /// Predict all sixteen angles for the most confident person in an OpenPose file.
    Predict(PredictArgs),
    /// Measure the angles directly from visible keypoints (no models).
    Angles(AnglesArgs),
    /// Score a posture with RULA.
    Rula(RulaArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProjectionArg {
    Pinhole,
    Orthographic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PriorArg {
    Tasks,
    Independent,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `none`, `random:<p>` or `limb:<right_arm|left_arm|right_leg|left_leg|head>`.
    #[arg(long, default_value = "none")]
    occlusion: OcclusionPolicy,
    /// Standard deviation of pixel noise added to visible keypoints.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    /// Number of cameras evenly spaced around the subject.
    #[arg(long, default_value_t = 8)]
    views: usize,
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    elevation: f64,
    #[arg(long, value_enum, default_value_t = ProjectionArg::Pinhole)]
    projection: ProjectionArg,
    #[arg(long, value_enum, default_value_t = PriorArg::Tasks)]
    prior: PriorArg,
    /// Per-parameter spread (degrees) around each task posture.
    #[arg(long, default_value_t = 10.0)]
    spread: f64,
    /// Id of the first sample; later ones are numbered consecutively.
    #[arg(long, default_value_t = 0)]
    first_id: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Angle to train (repeatable).
    #[arg(long = "angle", required_unless_present = "all", conflicts_with = "all")]
    angles: Vec<AngleName>,
    /// Train all sixteen angles.
    #[arg(long)]
    all: bool,
    #[arg(long)]
    data: PathBuf,
    /// Optional validation set, reported per epoch.
    #[arg(long)]
    val_data: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Per-epoch probability of hiding each keypoint of a training example.
    #[arg(long, default_value_t = 0.15)]
    keypoint_dropout: f64,
    /// Seeds weight initialisation, shuffling and dropout.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    models: PathBuf,
    #[arg(long)]
    train_data: PathBuf,
    #[arg(long)]
    test_data: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    format: ReportFormat,
    /// Write the report here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    models: PathBuf,
    /// OpenPose JSON file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    format: ReportFormat,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnglesArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    format: ReportFormat,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RulaArgs {
    /// JSON object of angle acronyms to degrees (or `predict` JSON output).
    #[arg(long, conflicts_with_all = ["input", "models"], required_unless_present = "input")]
    angles_file: Option<PathBuf>,
    /// OpenPose JSON file; angles are predicted with --models.
    #[arg(long, requires = "models")]
    input: Option<PathBuf>,
    #[arg(long)]
    models: Option<PathBuf>,
    #[arg(long, default_value = "left")]
    side: Side,
    /// Wrist posture score, 1–4.
    #[arg(long, default_value_t = 1)]
    wrist: u8,
    /// Wrist twist score, 1–2.
    #[arg(long, default_value_t = 1)]
    wrist_twist: u8,
    /// Muscle use score, 0–1.
    #[arg(long, default_value_t = 0)]
    muscle: u8,
    /// Force or load score, 0–3.
    #[arg(long, default_value_t = 0)]
    force: u8,
    #[arg(long)]
    legs_unsupported: bool,
    #[arg(long)]
    shoulder_raised: bool,
    #[arg(long)]
    arm_abducted: bool,
    #[arg(long)]
    arm_supported: bool,
    #[arg(long)]
    lower_arm_out_of_line: bool,
    /// Replacement bins file (TOML); defaults to the shipped tables.
    #[arg(long)]
    rula_bins: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    format: ReportFormat,
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Exit status classes.
#[derive(Debug)]
enum CliError {
    /// Bad flags, unreadable or invalid input files: exit 1.
    Input(String),
    /// Anything that should not happen on valid input: exit 2.
    Internal(String),
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Model(m) => m.into(),
            e => CliError::Input(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::DivergedLoss { .. } | ModelError::EmptyBatch => CliError::Internal(e.to_string()),
            e => CliError::Input(e.to_string()),
        }
    }
}

impl From<RulaError> for CliError {
    fn from(e: RulaError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidConfig(_) | SynthError::InvalidAngle { .. } | SynthError::InconsistentConfig(_) => {
                CliError::Input(e.to_string())
            }
            e => CliError::Internal(e.to_string()),
        }
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        CliError::Input(format!("cannot build features for this pose: {e}"))
    }
}

type CliResult = Result<(), CliError>;

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code. Normal output goes to `out`, diagnostics to `err`.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                1
            } else {
                // --help and --version
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    if let Err(message) = configure_threads() {
        let _ = writeln!(err, "error: {message}");
        return 1;
    }
    let result = match cli.command {
        Command::Synth(a) => synth(a, out),
        Command::Train(a) => train(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Predict(a) => predict(a, out),
        Command::Angles(a) => angles(a, out),
        Command::Rula(a) => rula(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Input(m)) => {
            let _ = writeln!(err, "error: {m}");
            1
        }
        Err(CliError::Internal(m)) => {
            let _ = writeln!(err, "internal error: {m}");
            2
        }
    }
}

/// Sizes the global worker pool from [`THREADS_ENV`]. Results never depend on
/// the thread count; only speed does.
fn configure_threads() -> Result<(), String> {
    let threads = match std::env::var(THREADS_ENV) {
        Err(_) => 0,
        Ok(v) if v.trim().is_empty() => 0,
        Ok(v) => v.trim().parse::<usize>().map_err(|_| format!("{THREADS_ENV}={v:?} is not a thread count"))?,
    };
    if threads > 0 {
        // Fails only if the pool already exists (e.g. repeated in-process runs).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    Ok(())
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> CliResult {
    match path {
        Some(p) => io::write_atomic(p, |w| w.write_all(text.as_bytes()).map_err(|e| IoError::io(p, e)))?,
        None => out.write_all(text.as_bytes()).map_err(|e| CliError::Internal(e.to_string()))?,
    }
    Ok(())
}

fn say(out: &mut dyn Write, text: &str) -> CliResult {
    out.write_all(text.as_bytes()).map_err(|e| CliError::Internal(e.to_string()))
}

fn synth(a: SynthArgs, out: &mut dyn Write) -> CliResult {
    let mode = match a.projection {
        ProjectionArg::Pinhole => Projection::Pinhole,
        ProjectionArg::Orthographic => Projection::Orthographic,
    };
    if a.views == 0 {
        return Err(CliError::Input("--views must be at least 1".into()));
    }
    let prior = match a.prior {
        PriorArg::Tasks => PosePrior::Tasks { spread: a.spread },
        PriorArg::Independent => PosePrior::Independent,
    };
    let spec = DatasetSpec {
        count: a.count,
        seed: a.seed,
        occlusion: a.occlusion,
        cameras: CameraSource::ring(a.views, a.elevation, CameraSpec { mode, ..CameraSpec::default() }),
        jitter_sigma: a.jitter,
        prior,
        first_id: a.first_id,
        ..DatasetSpec::default()
    };
    let samples = generate_dataset(&spec)?;
    io::save_dataset(&a.out, &samples)?;
    say(out, &format!("seed: {}\nwrote {} samples to {}\n", a.seed, samples.len(), a.out.display()))
}

fn load_batch(path: &Path) -> Result<crate::features::TensorBatch, CliError> {
    let samples = io::load_dataset(path)?;
    let batch = batch_tensors(&samples);
    if !batch.dropped.is_empty() {
        log::warn!("{}: {} samples without usable features were skipped", path.display(), batch.dropped.len());
    }
    Ok(batch)
}

fn train(a: TrainArgs, out: &mut dyn Write) -> CliResult {
    let angles: Vec<AngleName> = if a.all { AngleName::ALL.to_vec() } else { a.angles.clone() };
    let config = TrainConfig {
        learning_rate: a.lr,
        batch_size: a.batch_size,
        epochs: a.epochs,
        seed: a.seed,
        keypoint_dropout: a.keypoint_dropout,
        ..TrainConfig::default()
    };
    config.validate().map_err(|e| CliError::Input(e.to_string()))?;
    let train_set = load_batch(&a.data)?;
    if train_set.is_empty() {
        return Err(CliError::Input(format!("{} holds no usable samples", a.data.display())));
    }
    let val_set = a.val_data.as_deref().map(load_batch).transpose()?;
    let (models, histories) = train_models(&angles, a.seed, &train_set, val_set.as_ref(), &config)?;
    io::save_model_dir(&a.out_dir, &models)?;

    let mut text = format!("seed: {}\n", a.seed);
    for (angle, history) in &histories {
        let last = history.last().expect("at least one epoch");
        write!(text, "{angle}: {} epochs, train RMSE {:.4}", history.len(), last.train_rmse).unwrap();
        if let Some(v) = last.val_rmse {
            write!(text, ", validation RMSE {v:.4}").unwrap();
        }
        text.push('\n');
    }
    writeln!(text, "wrote {} models to {}", models.len(), a.out_dir.display()).unwrap();
    say(out, &text)
}

fn load_complete_models(dir: &Path) -> Result<ModelSet, CliError> {
    let models = io::load_model_dir(dir)?;
    models.require_complete()?;
    Ok(models)
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> CliResult {
    let models = load_complete_models(&a.models)?;
    let train_set = load_batch(&a.train_data)?;
    let test_set = load_batch(&a.test_data)?;
    let report = evaluate(&models, &train_set, &test_set)?;
    emit(out, a.output.as_deref(), &ReportTable::from(&report).render(a.format))
}

fn read_person(path: &Path) -> Result<PoseFrame, CliError> {
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    let frames = io::parse_openpose_json(&bytes)?;
    Ok(io::select_person(&frames)?)
}

fn render_angles(angles: &JointAngleSet, person: usize, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            serde_json::to_string_pretty(&json!({ "person_index": person, "angles": angles })).unwrap() + "\n"
        }
        ReportFormat::Csv => angles_csv(angles),
        ReportFormat::Text => {
            let mut text = format!("person {person}\n");
            for (name, v) in angles.iter() {
                let value = v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.4}"));
                writeln!(text, "{:<4} {:<28} {value}", name.acronym(), name.label()).unwrap();
            }
            text
        }
    }
}

fn predict(a: PredictArgs, out: &mut dyn Write) -> CliResult {
    let models = load_complete_models(&a.models)?;
    let frame = read_person(&a.input)?;
    let angles = predict_all(&models, &frame)?;
    emit(out, a.output.as_deref(), &render_angles(&angles, frame.person_index, a.format))
}

fn angles(a: AnglesArgs, out: &mut dyn Write) -> CliResult {
    let frame = read_person(&a.input)?;
    let angles = apparent_angles_2d(&frame);
    emit(out, a.output.as_deref(), &render_angles(&angles, frame.person_index, a.format))
}

fn read_angles_file(path: &Path) -> Result<JointAngleSet, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    if let Some(inner) = value.get_mut("angles") {
        value = inner.take();
    }
    serde_json::from_value(value).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn rula(a: RulaArgs, out: &mut dyn Write) -> CliResult {
    let bins = match &a.rula_bins {
        Some(p) => RulaBins::load(p)?,
        None => RulaBins::default_bins(),
    };
    let angles = match (&a.angles_file, &a.input, &a.models) {
        (Some(path), _, _) => read_angles_file(path)?,
        (None, Some(input), Some(models)) => predict_all(&load_complete_models(models)?, &read_person(input)?)?,
        _ => return Err(CliError::Input("give --angles-file, or --input with --models".into())),
    };
    let input = RulaInput {
        angles,
        wrist_score: a.wrist,
        wrist_twist_score: a.wrist_twist,
        muscle_score: a.muscle,
        force_score: a.force,
        legs_supported: !a.legs_unsupported,
        side: a.side,
        arm: ArmAdjustments {
            shoulder_raised: a.shoulder_raised,
            upper_arm_abducted: a.arm_abducted,
            arm_supported: a.arm_supported,
            lower_arm_out_of_line: a.lower_arm_out_of_line,
        },
    };
    let result = rula_score(&input, &bins)?;
    emit(out, a.output.as_deref(), &render_rula(&result, a.format))
}

fn render_rula(r: &RulaResult, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(r).unwrap() + "\n",
        ReportFormat::Csv => {
            let mut text = String::from("item,score\n");
            for (k, v) in rula_items(r) {
                writeln!(text, "{k},{v}").unwrap();
            }
            text
        }
        ReportFormat::Text => {
            let mut text = format!("RULA ({} side)\n", r.side);
            for (k, v) in rula_items(r) {
                writeln!(text, "{k:<22} {v}").unwrap();
            }
            writeln!(text, "action: {}", r.action).unwrap();
            text
        }
    }
}

fn rula_items(r: &RulaResult) -> [(&'static str, u8); 13] {
    [
        ("upper_arm", r.upper_arm),
        ("lower_arm", r.lower_arm),
        ("wrist", r.wrist),
        ("wrist_twist", r.wrist_twist),
        ("table_a", r.table_a),
        ("wrist_arm_score", r.wrist_arm_score),
        ("neck", r.neck),
        ("trunk", r.trunk),
        ("legs", r.legs),
        ("table_b", r.table_b),
        ("neck_trunk_leg_score", r.neck_trunk_leg_score),
        ("grand_score", r.grand_score),
        ("action_level", r.action_level),
    ]
}
