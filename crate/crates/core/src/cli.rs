//! Command-line front end: `gen-synth`, `train`, `spot`, `eval`, `verify`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::au_prior::default_au_roi_map;
use crate::config::{ConfigError, PipelineConfig};
use crate::evaluation::{evaluate, IntervalError};
use crate::feature_io::{
    load_annotations, load_dataset, AnnotationError, AnnotationInstance, Dataset, DatasetLoadError, FeatureIoError,
};
use crate::model::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
use crate::spotting::{format_proposals, parse_proposals, spot_video, ProposalParseError, SpotError};
use crate::synthdata::{generate_dataset, SynthConfig, SynthError};
use crate::training::{loso, train_fold, FoldResult, PriorSource, TrainError};
use crate::verify::{run_all, VerifyOptions, GRADIENT_CHECKS};

pub const CHECKPOINT_EXTENSION: &str = "auwc";

#[derive(Debug, Parser)]
#[command(
    name = "expspot",
    version,
    about = "Spot macro- and micro-expression intervals in long videos"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PriorArg {
    /// AU co-occurrence over the training subjects.
    Cooccurrence,
    /// Every adjacency entry 1/12.
    Uniform,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset with planted expressions.
    GenSynth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..))]
        subjects: u32,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
        videos_per_subject: u32,
        #[arg(long, default_value_t = 30.0)]
        fps: f32,
        #[arg(long, default_value_t = 60.0)]
        video_seconds: f64,
        #[arg(long, default_value_t = 3.0)]
        macro_rate: f64,
        #[arg(long, default_value_t = 2.0)]
        micro_rate: f64,
        #[arg(long, default_value_t = 0.2)]
        noise_sigma: f32,
        #[arg(long, default_value_t = 1.0)]
        signal_amp: f32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Leave-one-subject-out training; one checkpoint per held-out subject.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Train only the fold that holds out this subject.
        #[arg(long)]
        subject: Option<String>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = PriorArg::Cooccurrence)]
        prior: PriorArg,
        /// Folds trained concurrently.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
        workers: u32,
    },
    /// Spot every video with the checkpoint of the fold that held out its subject.
    Spot {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoints: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the `config.txt` written next to the checkpoints.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Score proposals against annotations.
    Eval {
        #[arg(long)]
        proposals: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        /// Writes `key=value` scores here; the table goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        k_iou: f64,
    },
    /// Run the gradient checks and oracle comparisons.
    Verify {
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[arg(long, default_value_t = 200)]
        oracle_cases: u64,
        /// Corrupt one gradient check's analytic gradient (harness self-test).
        #[arg(long, hide = true, value_parser = clap::builder::PossibleValuesParser::new(GRADIENT_CHECKS))]
        inject_fault: Option<String>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Dataset(#[from] DatasetLoadError),
    #[error(transparent)]
    Features(#[from] FeatureIoError),
    #[error(transparent)]
    Annotations(#[from] AnnotationError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Spot(#[from] SpotError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Proposals(#[from] ProposalParseError),
    #[error(transparent)]
    Interval(#[from] IntervalError),
    #[error("no checkpoint for subject {subject} (expected {path})")]
    MissingCheckpoint { subject: String, path: PathBuf },
    #[error("checkpoint for subject {subject} was trained with a different model config")]
    ConfigMismatch { subject: String },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("verification failed: {0}")]
    Verify(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Synth(_) => 2,
            _ => 1,
        }
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| CliError::Write {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, CliError> {
    Ok(match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    })
}

pub fn checkpoint_path(dir: &Path, subject: &str) -> PathBuf {
    dir.join(format!("{subject}.{CHECKPOINT_EXTENSION}"))
}

fn synth_manifest(cfg: &SynthConfig) -> String {
    format!(
        "generator = expspot {}\nsubjects = {}\nvideos_per_subject = {}\nfps = {}\nvideo_seconds = {}\nmacro_rate = {}\nmicro_rate = {}\nnoise_sigma = {}\nsignal_amp = {}\nseed = {}\n",
        env!("CARGO_PKG_VERSION"),
        cfg.subjects,
        cfg.videos_per_subject,
        cfg.fps,
        cfg.video_seconds,
        cfg.macro_rate,
        cfg.micro_rate,
        cfg.noise_sigma,
        cfg.signal_amp,
        cfg.seed
    )
}

fn train_manifest(
    cfg: &PipelineConfig,
    data: &Path,
    prior: PriorArg,
    folds: &[(FoldResult, PathBuf, f64)],
    total: f64,
) -> String {
    let mut m = String::new();
    let _ = writeln!(m, "version = expspot {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(m, "data = {}", data.display());
    let _ = writeln!(m, "seed = {}", cfg.train.seed);
    let _ = writeln!(m, "prior = {}", prior.to_possible_value().expect("named").get_name());
    let _ = writeln!(m, "total_seconds = {total:.3}");
    let _ = writeln!(m, "\n[config]\n{cfg}");
    let _ = writeln!(m, "[folds]");
    for (f, path, secs) in folds {
        let _ = writeln!(
            m,
            "{} checkpoint={} steps={} initial_loss={:.6} final_loss={:.6} seconds={secs:.3}",
            f.held_out,
            path.display(),
            f.steps,
            f.initial_loss,
            f.final_loss
        );
    }
    m
}

fn cmd_train(
    data: &Path,
    out: &Path,
    config: Option<&Path>,
    subject: Option<&str>,
    seed: Option<u64>,
    prior_arg: PriorArg,
    workers: usize,
) -> Result<String, CliError> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg = cfg.with_seed(s);
    }
    let ds = load_dataset(data)?;
    let prior = match prior_arg {
        PriorArg::Cooccurrence => PriorSource::Cooccurrence(default_au_roi_map()),
        PriorArg::Uniform => PriorSource::Uniform,
    };
    let start = Instant::now();
    let results: Vec<(FoldResult, f64)> = match subject {
        Some(s) => {
            let t = Instant::now();
            let f = train_fold(&ds, s, &cfg.train, &cfg.model, &prior)?;
            vec![(f, t.elapsed().as_secs_f64())]
        }
        None => {
            let folds = loso(&ds, &cfg.train, &cfg.model, &prior, workers)?;
            // Folds may overlap in time; report the even share.
            let share = start.elapsed().as_secs_f64() / folds.len() as f64;
            folds.into_values().map(|f| (f, share)).collect()
        }
    };
    let total = start.elapsed().as_secs_f64();
    fs::create_dir_all(out).map_err(|source| CliError::Write {
        path: out.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    let mut summary = String::new();
    for (fold, secs) in results {
        let path = checkpoint_path(out, &fold.held_out);
        save_checkpoint(&fold.checkpoint, &path)?;
        let _ = writeln!(
            summary,
            "fold {}: {} steps, loss {:.4} -> {:.4}, {}",
            fold.held_out,
            fold.steps,
            fold.initial_loss,
            fold.final_loss,
            path.display()
        );
        written.push((fold, path, secs));
    }
    write_file(&out.join("config.txt"), cfg.to_string())?;
    write_file(
        &out.join("manifest.txt"),
        train_manifest(&cfg, data, prior_arg, &written, total),
    )?;
    Ok(summary)
}

fn cmd_spot(data: &Path, checkpoints: &Path, out: &Path, config: Option<&Path>) -> Result<String, CliError> {
    let default_cfg = checkpoints.join("config.txt");
    let cfg = match config {
        Some(p) => load_config(Some(p))?,
        None if default_cfg.exists() => load_config(Some(&default_cfg))?,
        None => PipelineConfig::default(),
    };
    let ds = load_dataset(data)?;
    let mut cache: BTreeMap<String, Checkpoint> = BTreeMap::new();
    let mut proposals = Vec::new();
    for video in &ds.videos {
        let subject = &video.subject_id;
        if !cache.contains_key(subject) {
            let path = checkpoint_path(checkpoints, subject);
            if !path.exists() {
                return Err(CliError::MissingCheckpoint {
                    subject: subject.clone(),
                    path,
                });
            }
            let ckpt = load_checkpoint(&path)?;
            if ckpt.params.config != cfg.model {
                return Err(CliError::ConfigMismatch {
                    subject: subject.clone(),
                });
            }
            cache.insert(subject.clone(), ckpt);
        }
        proposals.extend(spot_video(&cache[subject], video, &cfg.train, &cfg.spot)?);
    }
    write_file(out, format_proposals(&proposals))?;
    Ok(format!(
        "{} proposals over {} videos -> {}\n",
        proposals.len(),
        ds.videos.len(),
        out.display()
    ))
}

fn cmd_eval(proposals: &Path, annotations: &Path, out: Option<&Path>, k_iou: f64) -> Result<String, CliError> {
    let text = fs::read_to_string(proposals).map_err(|source| {
        CliError::Features(FeatureIoError::Io {
            path: proposals.to_path_buf(),
            source,
        })
    })?;
    let props = parse_proposals(&text)?;
    for p in &props {
        crate::evaluation::interval_iou(p.span(), p.span())?;
    }
    let mut gts: BTreeMap<String, Vec<AnnotationInstance>> = BTreeMap::new();
    for row in load_annotations(annotations)? {
        gts.entry(row.video_id).or_default().push(row.instance);
    }
    let (summary, _) = evaluate(&props, &gts, k_iou);
    match out {
        Some(path) => {
            write_file(path, summary.to_key_values())?;
            Ok(summary.to_string())
        }
        None => Ok(format!("{summary}\n{}", summary.to_key_values())),
    }
}

fn cmd_verify(opts: VerifyOptions) -> Result<String, CliError> {
    let report = run_all(&opts);
    if report.passed() {
        Ok(report.to_string())
    } else {
        print!("{report}");
        let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        Err(CliError::Verify(names.join(", ")))
    }
}

/// Executes a parsed command, returning what it prints on success.
pub fn execute(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::GenSynth {
            out,
            subjects,
            videos_per_subject,
            fps,
            video_seconds,
            macro_rate,
            micro_rate,
            noise_sigma,
            signal_amp,
            seed,
        } => {
            let cfg = SynthConfig {
                subjects: subjects as usize,
                videos_per_subject: videos_per_subject as usize,
                fps,
                video_seconds,
                macro_rate,
                micro_rate,
                noise_sigma,
                signal_amp,
                seed,
            };
            let ds: Dataset = generate_dataset(&cfg)?;
            ds.save_dir(&out)?;
            write_file(&out.join("manifest.txt"), synth_manifest(&cfg))?;
            let n: usize = ds.annotations.values().map(Vec::len).sum();
            Ok(format!(
                "{} videos, {n} instances -> {}\n",
                ds.videos.len(),
                out.display()
            ))
        }
        Command::Train {
            data,
            out,
            config,
            subject,
            seed,
            prior,
            workers,
        } => cmd_train(
            &data,
            &out,
            config.as_deref(),
            subject.as_deref(),
            seed,
            prior,
            workers as usize,
        ),
        Command::Spot {
            data,
            checkpoints,
            out,
            config,
        } => cmd_spot(&data, &checkpoints, &out, config.as_deref()),
        Command::Eval {
            proposals,
            annotations,
            out,
            k_iou,
        } => cmd_eval(&proposals, &annotations, out.as_deref(), k_iou),
        Command::Verify {
            seeds,
            oracle_cases,
            inject_fault,
        } => cmd_verify(VerifyOptions {
            seeds,
            oracle_cases,
            inject_fault,
        }),
    }
}

/// Parses `args` (including the program name), runs the command, prints
/// output or the error, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
