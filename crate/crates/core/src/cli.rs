//! The `repcount` command line.
//!
//! Every command reads its inputs, never modifies them, and writes outputs
//! through a temporary file renamed into place. Failures print one JSON
//! record on stderr and map to an exit code: 2 for unparsable input or bad
//! arguments, 3 for evaluation mismatches, 4 for training failures, 1 for
//! anything else.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer};
use serde_json::json;
use thiserror::Error;

use crate::data::{
    parse_annotations, parse_landmarks, parse_ledger, parse_predictions, synthesize, write_annotations,
    write_landmarks, DataError, IncompleteRep, LandmarkSequence, SynthSpec, SynthTemplate, YawChange,
};
use crate::geometry::{AnkleDistal, CoordinateChannels, FeatureMode, GeometryConfig, DEFAULT_VISIBILITY_THRESHOLD};
use crate::metrics::{
    compare_modes, evaluate, evaluate_with_ledger, CorrectionLedger, EvalError, EvalReport, ModeSummary, Prediction,
    VideoAnnotation,
};
use crate::pipeline::{Pipeline, PipelineError, Scorer, VideoCount};
use crate::scorer::{
    parse_checkpoint, train_with_history, write_checkpoint, CheckpointError, GeometricRule, ScorerError,
    ScorerModel, TrainConfig, CHECKPOINT_MAGIC,
};
use crate::trigger::{density_csv, RepOrder, TriggerConfig};

pub const ANNOTATIONS_FILE: &str = "annotations.csv";
pub const LANDMARK_EXT: &str = "lmjsonl";

#[derive(Debug, Parser)]
#[command(name = "repcount", version, about = "Count exercise repetitions from pose landmark files")]
pub struct Cli {
    #[command(flatten)]
    pub settings: Settings,
    #[command(subcommand)]
    pub command: Command,
}

/// Settings shared by all commands. Flags take precedence over `--config`.
#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// TOML file holding any of the settings below
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Feature scenario: landmarks, left5, lr10 or avg5 [default: avg5]
    #[arg(long, global = true)]
    #[serde(default, deserialize_with = "parsed")]
    pub mode: Option<FeatureMode>,
    /// Upper limit of the action trigger [default: 0.8]
    #[arg(long, global = true)]
    pub upper: Option<f64>,
    /// Lower limit of the action trigger [default: 0.2]
    #[arg(long, global = true)]
    pub lower: Option<f64>,
    /// Odd smoothing window in frames, 1 disables smoothing [default: 5]
    #[arg(long, global = true)]
    pub smooth: Option<usize>,
    /// Salient pose that opens a repetition: i_then_ii or ii_then_i
    #[arg(long, global = true)]
    #[serde(default, deserialize_with = "parsed")]
    pub order: Option<RepOrder>,
    /// Seed for synthesis and training [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Landmarks below this visibility invalidate a frame [default: 0.3]
    #[arg(long, global = true)]
    pub visibility_threshold: Option<f64>,
    /// Coordinate channels per landmark: xyz, xy or xyzv
    #[arg(long, global = true)]
    #[serde(default, deserialize_with = "parsed")]
    pub channels: Option<CoordinateChannels>,
    /// Distal landmark of the ankle angle: foot_index or heel
    #[arg(long, global = true)]
    #[serde(default, deserialize_with = "parsed")]
    pub ankle: Option<AnkleDistal>,
    /// Training epochs [default: 20]
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// SGD step size [default: 0.05]
    #[arg(long, global = true)]
    pub learning_rate: Option<f64>,
    /// Mini-batch size [default: 32]
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    /// Hidden layer widths, comma separated [default: 64,32]
    #[arg(long, global = true, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
}

fn parsed<'de, D, T>(d: D) -> Result<Option<T>, D::Error>
where
    D: Deserializer<'de>,
    T: FromStr,
    T::Err: Display,
{
    let s: Option<String> = Option::deserialize(d)?;
    s.map(|s| s.parse().map_err(serde::de::Error::custom)).transpose()
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic landmark file and add it to annotations.csv
    Synth(SynthArgs),
    /// Parse landmark, annotation, ledger or model files and report problems
    Validate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Count repetitions in landmark files
    Count(CountArgs),
    /// Compare predicted counts with annotations (MAE, OBO)
    Eval(EvalArgs),
    /// Train a saliency scorer on annotated salient frames
    Train(TrainArgs),
    /// Rank the four feature modes by MAE and OBO
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// squat, jump_jack or pull_up
    #[arg(long)]
    pub template: SynthTemplate,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    /// Frames per repetition
    #[arg(long, default_value_t = 30)]
    pub period: usize,
    /// Standard deviation of coordinate noise
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Camera yaw change as FRAME:DEGREES (repeatable)
    #[arg(long, value_parser = parse_yaw)]
    pub yaw: Vec<YawChange>,
    /// Make one repetition partial, as REP:FRACTION
    #[arg(long, value_parser = parse_incomplete)]
    pub incomplete: Option<IncompleteRep>,
    /// Append a distractor movement that must not be counted
    #[arg(long)]
    pub sub_action: bool,
    #[arg(long)]
    pub video_id: Option<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn parse_yaw(s: &str) -> Result<YawChange, String> {
    let (frame, deg) = s.split_once(':').ok_or("expected FRAME:DEGREES")?;
    Ok(YawChange {
        start_frame: frame.parse().map_err(|e| format!("bad frame: {e}"))?,
        yaw_degrees: deg.parse().map_err(|e| format!("bad yaw: {e}"))?,
    })
}

fn parse_incomplete(s: &str) -> Result<IncompleteRep, String> {
    let (rep, frac) = s.split_once(':').ok_or("expected REP:FRACTION")?;
    Ok(IncompleteRep {
        rep_index: rep.parse().map_err(|e| format!("bad repetition index: {e}"))?,
        completion: frac.parse().map_err(|e| format!("bad fraction: {e}"))?,
    })
}

#[derive(Debug, Args)]
pub struct CountArgs {
    /// Landmark files, or directories searched for *.lmjsonl
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Trained scorer checkpoint
    #[arg(long, conflicts_with = "rule")]
    pub model: Option<PathBuf>,
    /// Geometric scorer as JOINT:THETA_I:THETA_II, e.g. knee:150:120
    #[arg(long)]
    pub rule: Option<GeometricRule>,
    /// Action of every input (overridden per video by --annotations)
    #[arg(long)]
    pub action: Option<String>,
    /// Annotation CSV supplying each video's action
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    /// CSV with video_id and count columns (e.g. counts.csv)
    #[arg(long)]
    pub predictions: PathBuf,
    /// Correction ledger applied to the annotations first
    #[arg(long)]
    pub ledger: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory with annotations.csv and one <video_id>.lmjsonl per row
    #[arg(long)]
    pub train_dir: PathBuf,
    /// Where to write the checkpoint
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// CSV of precomputed results with columns mode,mae,obo,n_videos
    #[arg(long, conflicts_with_all = ["train_dir", "test_dir"])]
    pub fixture: Option<PathBuf>,
    #[arg(long, requires = "test_dir")]
    pub train_dir: Option<PathBuf>,
    #[arg(long, requires = "train_dir")]
    pub test_dir: Option<PathBuf>,
    /// Correction ledger applied to the test annotations
    #[arg(long)]
    pub ledger: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Data { path: PathBuf, source: DataError },
    #[error("{}: {source}", path.display())]
    Checkpoint { path: PathBuf, source: CheckpointError },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {reason}", path.display())]
    Config { path: PathBuf, reason: String },
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("training failed: {0}")]
    Train(ScorerError),
    #[error("video '{video_id}': {source}")]
    Pipeline { video_id: String, source: PipelineError },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Data {
                source: DataError::Io(_), ..
            }
            | CliError::Checkpoint {
                source: CheckpointError::Io(_),
                ..
            }
            | CliError::Io { .. }
            | CliError::Pipeline { .. } => 1,
            CliError::Data { .. } | CliError::Checkpoint { .. } | CliError::Config { .. } | CliError::Usage(_) => 2,
            CliError::Eval(_) => 3,
            CliError::Train(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "parse_error",
            3 => "evaluation_mismatch",
            4 => "training_failure",
            _ => match self {
                CliError::Pipeline { .. } => "pipeline_error",
                _ => "io_error",
            },
        }
    }

    /// Machine-readable form printed on stderr.
    pub fn record(&self) -> serde_json::Value {
        let mut rec = json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        match self {
            CliError::Data { path, source } => {
                rec["path"] = json!(path.display().to_string());
                if let Some(line) = source.line() {
                    rec["line"] = json!(line);
                }
            }
            CliError::Checkpoint { path, source } => {
                rec["path"] = json!(path.display().to_string());
                if let CheckpointError::Format { line, .. } = source {
                    rec["line"] = json!(line);
                }
            }
            CliError::Io { path, .. } | CliError::Config { path, .. } => {
                rec["path"] = json!(path.display().to_string());
            }
            CliError::Pipeline { video_id, .. } => rec["video_id"] = json!(video_id),
            _ => {}
        }
        rec
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn data_err(path: &Path) -> impl FnOnce(DataError) -> CliError + '_ {
    move |source| CliError::Data {
        path: path.to_path_buf(),
        source,
    }
}

impl Settings {
    fn or(self, other: Settings) -> Settings {
        Settings {
            config: self.config,
            mode: self.mode.or(other.mode),
            upper: self.upper.or(other.upper),
            lower: self.lower.or(other.lower),
            smooth: self.smooth.or(other.smooth),
            order: self.order.or(other.order),
            seed: self.seed.or(other.seed),
            visibility_threshold: self.visibility_threshold.or(other.visibility_threshold),
            channels: self.channels.or(other.channels),
            ankle: self.ankle.or(other.ankle),
            epochs: self.epochs.or(other.epochs),
            learning_rate: self.learning_rate.or(other.learning_rate),
            batch_size: self.batch_size.or(other.batch_size),
            hidden: self.hidden.or(other.hidden),
        }
    }

    /// Fills unset values from the `--config` file, if any.
    pub fn resolve(self) -> Result<Settings, CliError> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let file: Settings = toml::from_str(&text).map_err(|e| CliError::Config {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        Ok(self.or(file))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn pipeline(&self, mode: FeatureMode) -> Result<Pipeline, CliError> {
        let mut geometry = GeometryConfig::with_ankle_distal(self.ankle.unwrap_or(AnkleDistal::FootIndex));
        geometry.visibility_threshold = self.visibility_threshold.unwrap_or(DEFAULT_VISIBILITY_THRESHOLD);
        if !(0.0..=1.0).contains(&geometry.visibility_threshold) {
            return Err(CliError::Usage("visibility threshold must be in [0, 1]".into()));
        }
        geometry.channels = self.channels.unwrap_or(CoordinateChannels::Xyz);
        let defaults = TriggerConfig::default();
        let trigger = TriggerConfig {
            upper: self.upper.unwrap_or(defaults.upper),
            lower: self.lower.unwrap_or(defaults.lower),
            smoothing_window: self.smooth.unwrap_or(defaults.smoothing_window),
            order: self.order.unwrap_or_default(),
        };
        trigger.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(Pipeline {
            mode,
            geometry,
            trigger,
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            epochs: self.epochs.unwrap_or(d.epochs),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            seed: self.seed(),
            hidden_layers: self.hidden.clone().unwrap_or(d.hidden_layers),
        }
    }
}

/// Writes `contents` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(contents).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

pub fn load_landmarks(path: &Path) -> Result<LandmarkSequence, CliError> {
    let video_id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    parse_landmarks(open(path)?, video_id).map_err(data_err(path))
}

pub fn load_annotations(path: &Path) -> Result<Vec<VideoAnnotation>, CliError> {
    parse_annotations(open(path)?).map_err(data_err(path))
}

pub fn load_ledger(path: &Path) -> Result<CorrectionLedger, CliError> {
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("ledger");
    parse_ledger(open(path)?, name).map_err(data_err(path))
}

pub fn load_model(path: &Path) -> Result<ScorerModel, CliError> {
    parse_checkpoint(open(path)?).map_err(|source| CliError::Checkpoint {
        path: path.to_path_buf(),
        source,
    })
}

/// Annotated videos of a dataset directory, in annotation order.
pub fn load_dataset(dir: &Path) -> Result<Vec<(VideoAnnotation, LandmarkSequence)>, CliError> {
    let annotations = load_annotations(&dir.join(ANNOTATIONS_FILE))?;
    annotations
        .into_par_iter()
        .map(|ann| {
            let seq = load_landmarks(&dir.join(format!("{}.{LANDMARK_EXT}", ann.video_id)))?;
            Ok((ann, seq))
        })
        .collect()
}

fn landmark_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(input)
                .map_err(io_err(input))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == LANDMARK_EXT))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(input.clone());
        }
    }
    Ok(out)
}

pub fn counts_csv(counts: &[VideoCount]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(["video_id", "action", "count", "final_state", "events"])
        .expect("in-memory write");
    for c in counts {
        let events: Vec<String> = c
            .result
            .events
            .iter()
            .map(|e| format!("{}-{}", e.pose_i_frame, e.pose_ii_frame))
            .collect();
        w.write_record([
            c.density.video_id.as_str(),
            &c.density.action,
            &c.result.count.to_string(),
            c.result.final_state.name(),
            &events.join(";"),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn default_scorer(action: &str) -> Result<Scorer, CliError> {
    action
        .parse::<SynthTemplate>()
        .map(|t| Scorer::Geometric(t.default_rule()))
        .map_err(|_| CliError::Usage(format!("no scorer for action '{action}': pass --model or --rule")))
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stdout = io::stdout().lock();
    match run(cli, &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let settings = cli.settings.resolve()?;
    let stdout_err = |e| CliError::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    };
    match cli.command {
        Command::Synth(args) => {
            let msg = synth_cmd(&settings, args)?;
            writeln!(out, "{msg}").map_err(stdout_err)?;
        }
        Command::Validate { files } => {
            for f in &files {
                let msg = validate_file(f)?;
                writeln!(out, "{}: ok, {msg}", f.display()).map_err(stdout_err)?;
            }
        }
        Command::Count(args) => {
            let counts = count_cmd(&settings, args)?;
            for c in &counts {
                writeln!(out, "{} {} {}", c.density.video_id, c.density.action, c.result.count).map_err(stdout_err)?;
            }
        }
        Command::Eval(args) => {
            let report = eval_cmd(args)?;
            writeln!(out, "{}", report.summary_line()).map_err(stdout_err)?;
        }
        Command::Train(args) => {
            let msg = train_cmd(&settings, args)?;
            writeln!(out, "{msg}").map_err(stdout_err)?;
        }
        Command::Compare(args) => {
            let text = compare_cmd(&settings, args)?;
            write!(out, "{text}").map_err(stdout_err)?;
        }
    }
    Ok(())
}

fn synth_cmd(settings: &Settings, args: SynthArgs) -> Result<String, CliError> {
    let mut spec = SynthSpec::new(args.template, args.reps, args.period);
    if let Some(id) = args.video_id {
        spec.video_id = id;
    }
    spec.noise_std = args.noise;
    spec.camera_yaw_schedule = args.yaw;
    spec.incomplete_rep_at = args.incomplete;
    spec.sub_action_at_end = args.sub_action;
    spec.seed = settings.seed();
    let output = synthesize(&spec).map_err(|e| CliError::Usage(e.to_string()))?;

    let lm_path = args.out_dir.join(format!("{}.{LANDMARK_EXT}", spec.video_id));
    let mut buf = Vec::new();
    write_landmarks(&output.frames, &mut buf).map_err(data_err(&lm_path))?;
    write_atomic(&lm_path, &buf)?;

    let ann_path = args.out_dir.join(ANNOTATIONS_FILE);
    let mut annotations = if ann_path.exists() {
        load_annotations(&ann_path)?
    } else {
        Vec::new()
    };
    match annotations.iter_mut().find(|a| a.video_id == spec.video_id) {
        Some(slot) => *slot = output.annotation,
        None => annotations.push(output.annotation),
    }
    let mut buf = Vec::new();
    write_annotations(&annotations, &mut buf).map_err(data_err(&ann_path))?;
    write_atomic(&ann_path, &buf)?;
    Ok(format!(
        "{}: {} frames, {} repetitions",
        lm_path.display(),
        output.frames.len(),
        output.true_count
    ))
}

fn validate_file(path: &Path) -> Result<String, CliError> {
    if path.extension().is_some_and(|x| x == LANDMARK_EXT) {
        let seq = load_landmarks(path)?;
        return Ok(format!("{} frames", seq.frames.len()));
    }
    let mut first = String::new();
    open(path)?.read_line(&mut first).map_err(io_err(path))?;
    if first.starts_with(CHECKPOINT_MAGIC) {
        let model = load_model(path)?;
        Ok(format!("model mode={} actions={}", model.mode, model.action_names.join(";")))
    } else if first.starts_with("video_id,wrong,") {
        let ledger = load_ledger(path)?;
        Ok(format!("{} corrections", ledger.entries.len()))
    } else {
        let anns = load_annotations(path)?;
        Ok(format!("{} annotations", anns.len()))
    }
}

fn count_cmd(settings: &Settings, args: CountArgs) -> Result<Vec<VideoCount>, CliError> {
    let model = args.model.as_deref().map(load_model).transpose()?;
    let mode = match (&model, settings.mode) {
        (Some(m), Some(flag)) if m.mode != flag => {
            return Err(CliError::Usage(format!("--mode {flag} conflicts with the model's mode {}", m.mode)));
        }
        (Some(m), _) => m.mode,
        (None, flag) => flag.unwrap_or(FeatureMode::LandmarksAvg5),
    };
    let mut pipeline = settings.pipeline(mode)?;
    if let Some(m) = &model {
        if settings.channels.is_none() {
            pipeline.geometry.channels = m.channels;
        }
    }

    let actions: BTreeMap<String, String> = match &args.annotations {
        Some(p) => load_annotations(p)?
            .into_iter()
            .map(|a| (a.video_id, a.action))
            .collect(),
        None => BTreeMap::new(),
    };
    let files = landmark_files(&args.inputs)?;
    let sequences: Vec<LandmarkSequence> = files.par_iter().map(|p| load_landmarks(p)).collect::<Result<_, _>>()?;

    let fixed = match (model, args.rule) {
        (Some(m), _) => Some(Scorer::Trained(m)),
        (None, Some(rule)) => Some(Scorer::Geometric(rule)),
        (None, None) => None,
    };
    let counts = sequences
        .par_iter()
        .map(|seq| {
            let action = actions
                .get(&seq.video_id)
                .or(args.action.as_ref())
                .ok_or_else(|| CliError::Usage(format!("no action for video '{}': pass --action or --annotations", seq.video_id)))?;
            let scorer = match &fixed {
                Some(s) => s.clone(),
                None => default_scorer(action)?,
            };
            pipeline
                .count(&seq.video_id, &seq.frames, &scorer, action)
                .map_err(|source| CliError::Pipeline {
                    video_id: seq.video_id.clone(),
                    source,
                })
        })
        .collect::<Result<Vec<_>, _>>()?;

    write_atomic(&args.out_dir.join("counts.csv"), counts_csv(&counts).as_bytes())?;
    for c in &counts {
        let path = args.out_dir.join("density").join(format!("{}.csv", c.density.video_id));
        write_atomic(&path, density_csv(&c.density).as_bytes())?;
    }
    Ok(counts)
}

fn eval_cmd(args: EvalArgs) -> Result<EvalReport, CliError> {
    let annotations = load_annotations(&args.annotations)?;
    let predictions = parse_predictions(open(&args.predictions)?).map_err(data_err(&args.predictions))?;
    let report = match &args.ledger {
        Some(p) => evaluate_with_ledger(&annotations, &predictions, &load_ledger(p)?)?,
        None => evaluate(&annotations, &predictions)?,
    };
    write_report(&args.out_dir, "report.csv", "summary.txt", &report)?;
    Ok(report)
}

fn write_report(dir: &Path, csv_name: &str, summary_name: &str, report: &EvalReport) -> Result<(), CliError> {
    write_atomic(&dir.join(csv_name), report.to_csv().as_bytes())?;
    write_atomic(&dir.join(summary_name), format!("{}\n", report.summary_line()).as_bytes())
}

fn train_model(settings: &Settings, mode: FeatureMode, dataset: &[(VideoAnnotation, LandmarkSequence)]) -> Result<(ScorerModel, f64), CliError> {
    let pipeline = settings.pipeline(mode)?;
    let data: Vec<_> = dataset
        .iter()
        .flat_map(|(ann, seq)| pipeline.labeled_poses(&seq.frames, ann))
        .collect();
    let (mut model, history) = train_with_history(&data, &settings.train_config()).map_err(CliError::Train)?;
    model.channels = pipeline.geometry.channels;
    Ok((model, history.last().copied().unwrap_or(f64::NAN)))
}

fn train_cmd(settings: &Settings, args: TrainArgs) -> Result<String, CliError> {
    let dataset = load_dataset(&args.train_dir)?;
    let mode = settings.mode.unwrap_or(FeatureMode::LandmarksAvg5);
    let (model, loss) = train_model(settings, mode, &dataset)?;
    let mut buf = Vec::new();
    write_checkpoint(&model, &mut buf).map_err(|source| CliError::Checkpoint {
        path: args.model.clone(),
        source,
    })?;
    write_atomic(&args.model, &buf)?;
    Ok(format!(
        "{}: mode={} actions={} final_loss={loss:.6}",
        args.model.display(),
        model.mode,
        model.action_names.join(";")
    ))
}

/// Reads `mode,mae,obo,n_videos` rows.
pub fn parse_fixture(path: &Path) -> Result<BTreeMap<FeatureMode, ModeSummary>, CliError> {
    #[derive(Deserialize)]
    struct Row {
        mode: String,
        mae: f64,
        obo: f64,
        n_videos: usize,
    }
    let bad = |line: usize, reason: String| CliError::Data {
        path: path.to_path_buf(),
        source: DataError::Parse { line, reason },
    };
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let mut out = BTreeMap::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| bad(line, e.to_string()))?;
        let mode: FeatureMode = row.mode.parse().map_err(|e| bad(line, e))?;
        if out.insert(mode, ModeSummary { mae: row.mae, obo: row.obo, n_videos: row.n_videos }).is_some() {
            return Err(bad(line, format!("mode {mode} listed twice")));
        }
    }
    if out.len() < 2 {
        return Err(bad(0, "need at least two modes to compare".into()));
    }
    Ok(out)
}

fn compare_cmd(settings: &Settings, args: CompareArgs) -> Result<String, CliError> {
    let summaries = match (&args.fixture, &args.train_dir, &args.test_dir) {
        (Some(f), _, _) => parse_fixture(f)?,
        (None, Some(train_dir), Some(test_dir)) => {
            let train_set = load_dataset(train_dir)?;
            let test_set = load_dataset(test_dir)?;
            let ledger = args.ledger.as_deref().map(load_ledger).transpose()?;
            let reports = FeatureMode::ALL
                .par_iter()
                .map(|&mode| {
                    let report = train_and_evaluate(settings, mode, &train_set, &test_set, ledger.as_ref())?;
                    Ok((mode, report))
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            let mut out = BTreeMap::new();
            for (mode, report) in reports {
                write_report(
                    &args.out_dir,
                    &format!("report_{mode}.csv"),
                    &format!("summary_{mode}.txt"),
                    &report,
                )?;
                out.insert(mode, report.summary());
            }
            out
        }
        _ => return Err(CliError::Usage("compare needs --fixture or both --train-dir and --test-dir".into())),
    };
    let table = compare_modes(&summaries);
    write_atomic(&args.out_dir.join("comparison.csv"), table.to_csv().as_bytes())?;
    let text = table.to_text();
    write_atomic(&args.out_dir.join("comparison.txt"), text.as_bytes())?;
    Ok(text)
}

/// Trains a scorer for `mode`, counts the test set with it and evaluates.
pub fn train_and_evaluate(
    settings: &Settings,
    mode: FeatureMode,
    train_set: &[(VideoAnnotation, LandmarkSequence)],
    test_set: &[(VideoAnnotation, LandmarkSequence)],
    ledger: Option<&CorrectionLedger>,
) -> Result<EvalReport, CliError> {
    let (model, _) = train_model(settings, mode, train_set)?;
    let pipeline = settings.pipeline(mode)?;
    let scorer = Scorer::Trained(model);
    let predictions = test_set
        .par_iter()
        .map(|(ann, seq)| {
            let c = pipeline
                .count(&ann.video_id, &seq.frames, &scorer, &ann.action)
                .map_err(|source| CliError::Pipeline {
                    video_id: ann.video_id.clone(),
                    source,
                })?;
            Ok(Prediction::new(ann.video_id.clone(), c.result.count as u32))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let annotations: Vec<VideoAnnotation> = test_set.iter().map(|(a, _)| a.clone()).collect();
    Ok(match ledger {
        Some(l) => evaluate_with_ledger(&annotations, &predictions, l)?,
        None => evaluate(&annotations, &predictions)?,
    })
}
