//! Command-line front end.
//!
//! Every command reads an optional JSON [`AppConfig`] (`--config`), applies
//! the global `--seed` and `--out` overrides, and reports failures as one
//! JSON line on stderr with exit code 2 (configuration or usage), 3 (I/O),
//! 4 (data format) or 1 (anything else).

mod infer;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cnn::{load_model, save_model, train, write_history_csv, ArchSpec, TrainConfig};
use crate::config::RadarConfig;
use crate::dataset::{
    evaluate, generate_dataset, load_eval_samples, load_sample, split, DatasetManifest, DatasetSpec, EvalSample,
    GenerationConfig, GroupKey, Split,
};
use crate::dsp::CfarParams;
use crate::error::{Error, FormatError, Result};
use crate::features::{write_pgm, FeatureParams};
use crate::sim::{make_trajectory, render_gesture, write_raw_file, GestureClass, RawMeta, RenderOptions, TrajectoryParams};

pub use infer::{run_infer, FrameSource, InferOptions, InferSummary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub radar: RadarConfig,
    pub cfar: CfarParams,
    pub features: FeatureParams,
    pub trajectory: TrajectoryParams,
    pub train: TrainConfig,
    pub dataset: DatasetSpec,
    /// Fraction of each class used for training.
    pub train_fraction: f64,
    /// Seed for simulation, dataset generation and splitting.
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            radar: RadarConfig::default(),
            cfar: CfarParams::default(),
            features: FeatureParams::default(),
            trajectory: TrajectoryParams::default(),
            train: TrainConfig::default(),
            dataset: DatasetSpec::default(),
            train_fraction: 0.7,
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path.display(), e))?;
        let cfg: Self =
            serde_json::from_slice(&bytes).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.generation().validate()?;
        self.train.validate()?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config("train_fraction must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn generation(&self) -> GenerationConfig {
        GenerationConfig {
            dataset: self.dataset.clone(),
            radar: self.radar.clone(),
            cfar: self.cfar,
            features: self.features.clone(),
            trajectory: self.trajectory.clone(),
        }
    }

    /// CNN shape implied by the feature settings.
    pub fn arch(&self) -> ArchSpec {
        ArchSpec::with_input([self.features.channels.len(), self.features.bins, self.features.window_frames])
    }
}

#[derive(Debug, Parser)]
#[command(name = "qgesture", version, about = "Synthetic mmWave gesture radar: simulate, extract, train, classify")]
struct Cli {
    /// JSON configuration file; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path: a file for `simulate`, a directory otherwise.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render one gesture to a raw frame file.
    Simulate(SimulateArgs),
    /// Generate a labeled dataset directory.
    MakeDataset,
    /// Train the CNN on a dataset.
    Train(TrainArgs),
    /// Evaluate a model on a dataset.
    Eval(EvalArgs),
    /// Stream frames through the full chain and classify captured windows.
    Infer(InferArgs),
    /// Write the time-spectrum images of a sample file as PGM.
    ExportImages(ExportArgs),
    /// Print the effective configuration as JSON.
    Config,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    class: String,
    /// User profile id from the dataset settings.
    #[arg(long)]
    user: Option<String>,
    /// Scene profile id from the dataset settings.
    #[arg(long)]
    scene: Option<String>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Leave this user out of training and validation entirely.
    #[arg(long)]
    exclude_user: Option<String>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Which samples to score: all, train or val (split by the configured
    /// fraction and seed).
    #[arg(long, default_value = "all")]
    split: String,
    /// Restrict to these users (comma separated).
    #[arg(long, value_delimiter = ',')]
    users: Vec<String>,
    /// Grouping keys for the CSV report.
    #[arg(long, value_delimiter = ',', default_value = "scene,user")]
    group_by: Vec<String>,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    /// Raw frame file to replay.
    #[arg(long, conflicts_with_all = ["class", "idle"])]
    input: Option<PathBuf>,
    /// Simulate one performance of this class instead.
    #[arg(long)]
    class: Option<String>,
    /// Simulate this many frames of an empty scene instead.
    #[arg(long, conflicts_with = "class")]
    idle: Option<usize>,
    #[arg(long)]
    user: Option<String>,
    #[arg(long)]
    scene: Option<String>,
    /// Pace the source at the frame rate in wall-clock time.
    #[arg(long)]
    realtime: bool,
}

#[derive(Debug, Args)]
struct ExportArgs {
    /// Sample file (`.qgfw`).
    #[arg(long)]
    sample: PathBuf,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidInput(_) => 2,
        Error::Io { .. } => 3,
        Error::Format(_) => 4,
        Error::Degenerate(_) | Error::Generation { .. } => 1,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Config(_) => "config",
        Error::InvalidInput(_) => "invalid_input",
        Error::Io { .. } => "io",
        Error::Format(_) => "format",
        Error::Degenerate(_) => "degenerate",
        Error::Generation { .. } => "generation",
    }
}

fn report_error(kind: &str, message: &str) {
    eprintln!("{}", json!({ "error": kind, "message": message }));
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            report_error("usage", e.to_string().lines().next().unwrap_or("bad arguments"));
            return 2;
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match dispatch(cli, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            report_error(error_kind(&e), &e.to_string());
            exit_code(&e)
        }
    }
}

fn effective_config(cli: &Cli) -> Result<AppConfig> {
    let mut cfg = match &cli.config {
        Some(p) => AppConfig::load(p)?,
        None => AppConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_line<W: Write>(out: &mut W, line: impl std::fmt::Display) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| Error::io("stdout", e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display(), e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path.display(), e))
}

/// Trajectory parameters, radar and render options for an optional
/// (user, scene) pair from the dataset settings.
fn performer(cfg: &AppConfig, user: Option<&str>, scene: Option<&str>) -> Result<(TrajectoryParams, RadarConfig, RenderOptions)> {
    let traj = match user {
        Some(id) => cfg
            .dataset
            .users
            .iter()
            .find(|u| u.id == id)
            .ok_or_else(|| Error::invalid(format!("unknown user profile {id:?}")))?
            .apply(&cfg.trajectory),
        None => cfg.trajectory.clone(),
    };
    let (radar, opts) = match scene {
        Some(id) => {
            let s = cfg
                .dataset
                .scenes
                .iter()
                .find(|s| s.id == id)
                .ok_or_else(|| Error::invalid(format!("unknown scene profile {id:?}")))?;
            (s.radar(&cfg.radar), s.render_options())
        }
        None => (cfg.radar.clone(), RenderOptions::default()),
    };
    Ok((traj, radar, opts))
}

fn dispatch<W: Write>(cli: Cli, out: &mut W) -> Result<()> {
    let cfg = effective_config(&cli)?;
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(&cfg, a, cli.out.as_deref(), out),
        Command::MakeDataset => cmd_make_dataset(&cfg, out),
        Command::Train(a) => cmd_train(&cfg, a, out),
        Command::Eval(a) => cmd_eval(&cfg, a, out),
        Command::Infer(a) => cmd_infer(&cfg, a, out),
        Command::ExportImages(a) => cmd_export_images(&cfg, a, out),
        Command::Config => print_line(out, serde_json::to_string_pretty(&cfg).expect("config serializes")),
    }
}

fn cmd_simulate<W: Write>(cfg: &AppConfig, a: &SimulateArgs, path: Option<&Path>, out: &mut W) -> Result<()> {
    let class: GestureClass = a.class.parse()?;
    let (tp, radar, opts) = performer(cfg, a.user.as_deref(), a.scene.as_deref())?;
    let traj = make_trajectory(class, cfg.seed, &tp)?;
    let frames = render_gesture(&traj, &radar, crate::rng::mix_seed(cfg.seed, 1), &opts)?;
    let path = match path {
        Some(p) => p.to_path_buf(),
        None => {
            create_dir(&cfg.out)?;
            cfg.out.join(format!("{}-{}.raw", class.slug(), cfg.seed))
        }
    };
    let mut meta = RawMeta::new(&radar, frames.iter().map(|f| f.frame_index).collect());
    meta.seed = Some(cfg.seed);
    meta.label = Some(class.name().to_string());
    write_raw_file(&path, meta, &frames)?;
    print_line(out, format!("wrote {} ({} frames)", path.display(), frames.len()))?;
    print_line(
        out,
        format!(
            "ΔR = {:.4} m  v_res = {:.4} m/s  v_max = {:.3} m/s  max range = {:.2} m",
            radar.range_resolution(),
            radar.velocity_resolution(),
            radar.max_velocity(),
            radar.max_range()
        ),
    )
}

fn cmd_make_dataset<W: Write>(cfg: &AppConfig, out: &mut W) -> Result<()> {
    let dir = &cfg.out;
    let m = generate_dataset(&cfg.generation(), cfg.seed, dir)?;
    print_line(
        out,
        json!({
            "dataset": dir.display().to_string(),
            "samples": m.samples.len(),
            "regenerations": m.regenerations,
        }),
    )
}

fn dataset_split(cfg: &AppConfig, m: &DatasetManifest, exclude_user: Option<&str>) -> Result<Split> {
    let records: Vec<_> = m
        .samples
        .iter()
        .filter(|r| Some(r.user.as_str()) != exclude_user)
        .cloned()
        .collect();
    split(&records, cfg.train_fraction, cfg.seed)
}

fn cmd_train<W: Write>(cfg: &AppConfig, a: &TrainArgs, out: &mut W) -> Result<()> {
    let m = DatasetManifest::load(&a.dataset)?;
    let s = dataset_split(cfg, &m, a.exclude_user.as_deref())?;
    let arch = cfg.arch();
    let load = |ids: &[String]| -> Result<Vec<_>> {
        Ok(load_eval_samples(&m, &a.dataset, ids)?
            .iter()
            .map(EvalSample::labeled)
            .collect())
    };
    let (tr, va) = (load(&s.train)?, load(&s.val)?);
    if let Some(x) = tr.first() {
        if x.input.len() != arch.input_len() {
            return Err(FormatError::ArchitectureMismatch(format!(
                "samples hold {} values, configured features imply {:?}",
                x.input.len(),
                arch.input
            ))
            .into());
        }
    }
    let outcome = train(&arch, &tr, &va, &cfg.train)?;
    let dir = &cfg.out;
    create_dir(dir)?;
    save_model(&dir.join("model.qgcnn"), &outcome.model, Some(&outcome.optimizer))?;
    let hist_path = dir.join("history.csv");
    let f = File::create(&hist_path).map_err(|e| Error::io(hist_path.display(), e))?;
    let mut w = BufWriter::new(f);
    write_history_csv(&mut w, &outcome.history)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(hist_path.display(), e))?;
    write_file(
        &dir.join("split.json"),
        &serde_json::to_vec_pretty(&s).expect("split serializes"),
    )?;
    let last = outcome.history.last().expect("at least one epoch");
    print_line(
        out,
        json!({
            "model": dir.join("model.qgcnn").display().to_string(),
            "epochs": outcome.history.len(),
            "train": tr.len(),
            "val": va.len(),
            "final_val_acc": last.val_acc,
            "final_train_loss": last.train_loss,
            "best_epoch": outcome.best_epoch,
            "best_val_acc": outcome.best_val_acc,
        }),
    )
}

fn cmd_eval<W: Write>(cfg: &AppConfig, a: &EvalArgs, out: &mut W) -> Result<()> {
    let keys = a
        .group_by
        .iter()
        .map(|k| k.parse::<GroupKey>())
        .collect::<Result<Vec<_>>>()?;
    let (model, _) = load_model(&a.model)?;
    let m = DatasetManifest::load(&a.dataset)?;
    let ids: Vec<String> = match a.split.as_str() {
        "all" => m.samples.iter().map(|r| r.id.clone()).collect(),
        "train" => dataset_split(cfg, &m, None)?.train,
        "val" => dataset_split(cfg, &m, None)?.val,
        other => return Err(Error::invalid(format!("unknown split {other:?} (all, train, val)"))),
    };
    let ids: Vec<String> = ids
        .into_iter()
        .filter(|id| a.users.is_empty() || m.record(id).is_some_and(|r| a.users.contains(&r.user)))
        .collect();
    let samples = load_eval_samples(&m, &a.dataset, &ids)?;
    if let Some(x) = samples.first() {
        if x.input.len() != model.arch.input_len() {
            return Err(FormatError::ArchitectureMismatch(format!(
                "samples hold {} values, model expects {:?}",
                x.input.len(),
                model.arch.input
            ))
            .into());
        }
    }
    let report = evaluate(&model, &samples)?;
    let dir = &cfg.out;
    create_dir(dir)?;
    write_file(&dir.join("report.csv"), report.grouped_csv(&keys).as_bytes())?;
    write_file(&dir.join("confusion.csv"), report.confusion_csv().as_bytes())?;
    write_file(&dir.join("table.txt"), report.table().as_bytes())?;
    print_line(out, report.table().trim_end())
}

fn cmd_infer<W: Write>(cfg: &AppConfig, a: &InferArgs, out: &mut W) -> Result<()> {
    let (model, _) = load_model(&a.model)?;
    let source = match (&a.input, &a.class, a.idle) {
        (Some(p), _, _) => FrameSource::File(p.clone()),
        (None, Some(c), _) => {
            let class: GestureClass = c.parse()?;
            let (tp, radar, opts) = performer(cfg, a.user.as_deref(), a.scene.as_deref())?;
            FrameSource::Gesture {
                trajectory: make_trajectory(class, cfg.seed, &tp)?,
                radar,
                opts,
                seed: crate::rng::mix_seed(cfg.seed, 1),
            }
        }
        (None, None, Some(n)) => {
            let (_, radar, opts) = performer(cfg, None, a.scene.as_deref())?;
            FrameSource::Idle {
                frames: n,
                radar,
                opts,
                seed: cfg.seed,
            }
        }
        (None, None, None) => return Err(Error::invalid("infer needs --input, --class or --idle")),
    };
    let opts = InferOptions {
        cfar: cfg.cfar,
        features: cfg.features.clone(),
        realtime: a.realtime,
    };
    run_infer(&model, source, &opts, out)?;
    Ok(())
}

fn cmd_export_images<W: Write>(cfg: &AppConfig, a: &ExportArgs, out: &mut W) -> Result<()> {
    let s = load_sample(&a.sample)?;
    create_dir(&cfg.out)?;
    for p in write_pgm(&s.window, &cfg.out, &s.header.id)? {
        print_line(out, p.display())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_and_rejects_unknown_keys() {
        let cfg = AppConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: AppConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        let partial: AppConfig = serde_json::from_str(r#"{"seed": 5, "radar": {"noise_std": 0.02}}"#).unwrap();
        assert_eq!(partial.seed, 5);
        assert_eq!(partial.radar.noise_std, 0.02);
        assert_eq!(partial.radar.n_tx, 4);
        assert!(serde_json::from_str::<AppConfig>(r#"{"sed": 5}"#).is_err());
        assert!(serde_json::from_str::<AppConfig>(r#"{"cfar": {"gaurd": 1}}"#).is_err());
    }

    #[test]
    fn default_arch_matches_features() {
        assert_eq!(AppConfig::default().arch(), ArchSpec::default());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::config("x")), 2);
        assert_eq!(exit_code(&Error::io("p", std::io::Error::other("x"))), 3);
        assert_eq!(exit_code(&FormatError::TrailingBytes(1).into()), 4);
        assert_eq!(run(["qgesture", "frobnicate"]), 2);
        assert_eq!(run(["qgesture", "simulate", "--class", "jazz-hands", "--out", "/nonexistent/x.raw"]), 2);
    }
}
