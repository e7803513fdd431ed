//! Window construction, focal-loss optimization with Adam, and the
//! leave-one-subject-out training protocol.

pub mod focal;
pub mod windows;

use std::collections::{BTreeMap, BTreeSet};
use std::thread;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use focal::{focal_loss, FocalParams};
pub use windows::{encode_labels, make_windows, FrameClass, KindTargets, LabelError, Targets, WindowSample};

use crate::au_prior::{AdjacencyMatrix, AuRoiMap};
use crate::feature_io::{Dataset, FeatureSequence, NUM_ROIS};
use crate::model::{self, init_params, Checkpoint, ModelConfig, ModelError, ModelParams};
use crate::numerics::{adam_step, AdamConfig, AdamState, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub window_seconds: f64,
    pub window_stride_fraction: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub boundary_radius_seconds: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            epochs: 100,
            window_seconds: 2.2,
            window_stride_fraction: 0.5,
            alpha: 0.75,
            gamma: 2.0,
            boundary_radius_seconds: 1.0 / 30.0,
            seed: 0,
        }
    }
}

/// Shortest window that still covers the conv stack's receptive field.
pub const MIN_WINDOW: usize = 11;

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.window_stride_fraction > 0.0 && self.window_stride_fraction <= 1.0) {
            return Err(format!(
                "window_stride_fraction must be in (0, 1], got {}",
                self.window_stride_fraction
            ));
        }
        if !(0.0..=1.0).contains(&self.alpha) || self.gamma.is_nan() || self.gamma < 0.0 {
            return Err(format!(
                "need alpha in [0, 1] and gamma >= 0, got {} / {}",
                self.alpha, self.gamma
            ));
        }
        if self.boundary_radius_seconds.is_nan() || self.boundary_radius_seconds < 0.0 {
            return Err("boundary_radius_seconds must be non-negative".into());
        }
        // The slowest supported rate must still produce a window past the receptive field.
        if self.window_seconds.is_nan() || self.window_seconds * 30.0 < MIN_WINDOW as f64 {
            return Err(format!(
                "window_seconds {} gives fewer than {MIN_WINDOW} frames at 30 fps",
                self.window_seconds
            ));
        }
        Ok(())
    }

    /// Window length in frames at `fps`.
    pub fn window_len(&self, fps: f32) -> Result<usize, TrainError> {
        let len = (self.window_seconds * fps as f64).round() as usize;
        if len < MIN_WINDOW {
            return Err(TrainError::WindowTooShort { len, fps });
        }
        Ok(len)
    }

    pub fn window_stride(&self, len: usize) -> usize {
        ((len as f64 * self.window_stride_fraction).ceil() as usize).max(1)
    }

    pub fn boundary_radius(&self, fps: f32) -> usize {
        (self.boundary_radius_seconds * fps as f64).round() as usize
    }

    pub fn focal(&self) -> FocalParams {
        FocalParams {
            alpha: self.alpha,
            gamma: self.gamma,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("window of {len} frames at {fps} fps is shorter than the receptive field ({MIN_WINDOW})")]
    WindowTooShort { len: usize, fps: f32 },
    #[error("subject {0} is not in the dataset")]
    UnknownSubject(String),
    #[error("no training videos remain after holding out subject {0}")]
    EmptyTrainingSet(String),
    #[error("leave-one-subject-out needs at least 2 subjects, found {0}")]
    TooFewSubjects(usize),
    #[error(transparent)]
    Labels(#[from] LabelError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Where a fold's adjacency comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorSource {
    /// AU co-occurrence counted over the training subjects' annotations.
    Cooccurrence(AuRoiMap),
    /// Every entry `1/12`.
    Uniform,
}

impl PriorSource {
    pub fn adjacency(&self, ds: &Dataset, held_out: &str) -> AdjacencyMatrix {
        match self {
            PriorSource::Cooccurrence(map) => {
                let train_annotations = ds
                    .videos
                    .iter()
                    .filter(|v| v.subject_id != held_out)
                    .flat_map(|v| ds.annotations_for(&v.video_id));
                AdjacencyMatrix::from_annotations(train_annotations, map)
            }
            PriorSource::Uniform => AdjacencyMatrix::uniform(),
        }
    }
}

pub fn adjacency_tensor(adj: &AdjacencyMatrix) -> Tensor<f32> {
    Tensor::from_vec(&[NUM_ROIS, NUM_ROIS], adj.normalized_f32()).expect("12x12")
}

/// Labeled training windows for one video.
pub fn labeled_windows(
    ds: &Dataset,
    video: &FeatureSequence,
    cfg: &TrainConfig,
) -> Result<Vec<WindowSample>, TrainError> {
    let len = cfg.window_len(video.fps())?;
    let radius = cfg.boundary_radius(video.fps());
    let annotations = ds.annotations_for(&video.video_id);
    make_windows(video, len, cfg.window_stride(len))
        .into_iter()
        .map(|mut w| {
            w.targets = Some(encode_labels(annotations, &w, radius)?);
            Ok(w)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub held_out: String,
    pub checkpoint: Checkpoint,
    pub adjacency: AdjacencyMatrix,
    /// Mean loss over all training windows before the first update.
    pub initial_loss: f64,
    /// Mean loss over the last 10% of optimization steps.
    pub final_loss: f64,
    pub steps: usize,
    /// Every video that contributed a window to an optimization step.
    pub trained_videos: BTreeSet<String>,
}

fn window_loss(
    params: &ModelParams<f32>,
    adj: &Tensor<f32>,
    w: &WindowSample,
    fp: FocalParams,
) -> Result<(f64, Tensor<f32>, model::Tape<f32>), ModelError> {
    let (logits, tape) = model::forward(params, adj, &w.feats)?;
    let targets = w.targets.as_ref().expect("training windows are labeled");
    let (loss, grad) = focal_loss(&logits, targets, w.valid_len, fp);
    Ok((loss, grad, tape))
}

/// Trains one fold on every subject except `held_out`.
pub fn train_fold(
    ds: &Dataset,
    held_out: &str,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    prior: &PriorSource,
) -> Result<FoldResult, TrainError> {
    if !ds.subjects().contains(held_out) {
        return Err(TrainError::UnknownSubject(held_out.to_string()));
    }
    let mut windows = Vec::new();
    for v in ds.videos.iter().filter(|v| v.subject_id != held_out) {
        windows.extend(labeled_windows(ds, v, cfg)?);
    }
    if windows.is_empty() {
        return Err(TrainError::EmptyTrainingSet(held_out.to_string()));
    }
    let adjacency = prior.adjacency(ds, held_out);
    let adj = adjacency_tensor(&adjacency);
    let fp = cfg.focal();

    let mut params: ModelParams<f32> = init_params(model_cfg)?;
    let mut states: Vec<AdamState> = params
        .parameters()
        .into_iter()
        .map(|p| AdamState::new(p, AdamConfig::default()))
        .collect();

    let mut initial = 0.0;
    for w in &windows {
        initial += window_loss(&params, &adj, w, fp)?.0;
    }
    let initial_loss = initial / windows.len() as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs * windows.len());
    let mut trained_videos = BTreeSet::new();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let w = &windows[i];
            let (loss, grad, tape) = window_loss(&params, &adj, w, fp)?;
            model::backward(&mut params, &adj, &tape, &grad)?;
            for (p, s) in params.parameters_mut().into_iter().zip(states.iter_mut()) {
                adam_step(p, s, cfg.lr);
            }
            losses.push(loss);
            trained_videos.insert(w.video_id.clone());
        }
    }
    let tail = (losses.len() / 10).max(1).min(losses.len());
    let final_loss = if losses.is_empty() {
        initial_loss
    } else {
        losses[losses.len() - tail..].iter().sum::<f64>() / tail as f64
    };
    Ok(FoldResult {
        held_out: held_out.to_string(),
        checkpoint: Checkpoint { params, adjacency: adj },
        adjacency,
        initial_loss,
        final_loss,
        steps: losses.len(),
        trained_videos,
    })
}

/// One fold per subject. Folds run on up to `workers` threads; results do
/// not depend on scheduling.
pub fn loso(
    ds: &Dataset,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    prior: &PriorSource,
    workers: usize,
) -> Result<BTreeMap<String, FoldResult>, TrainError> {
    let subjects: Vec<String> = ds.subjects().into_iter().collect();
    if subjects.len() < 2 {
        return Err(TrainError::TooFewSubjects(subjects.len()));
    }
    let workers = workers.clamp(1, subjects.len());
    let mut results = BTreeMap::new();
    for chunk in subjects.chunks(workers) {
        let outcomes: Vec<Result<FoldResult, TrainError>> = thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|s| scope.spawn(move || train_fold(ds, s, cfg, model_cfg, prior)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("fold thread panicked"))
                .collect()
        });
        for r in outcomes {
            let r = r?;
            results.insert(r.held_out.clone(), r);
        }
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::au_prior::default_au_roi_map;
    use crate::feature_io::AnnotationInstance;
    use crate::feature_io::{AnnotationRow, ExpressionKind, FeatureSequence, FRAME_STRIDE};

    fn tiny_dataset() -> Dataset {
        let mut videos = Vec::new();
        let mut rows = Vec::new();
        for s in 0..3 {
            let subject = format!("s{s}");
            let video_id = format!("{subject}_v0");
            let data = (0..40 * FRAME_STRIDE)
                .map(|i| ((i * 13 + s) % 7) as f32 * 0.1)
                .collect();
            videos.push(FeatureSequence::new(&video_id, &subject, 30.0, data).unwrap());
            let aus: &[&str] = if s == 2 { &["AU12"] } else { &["AU1", "AU2"] };
            rows.push(AnnotationRow {
                subject_id: subject,
                video_id,
                instance: AnnotationInstance::new(10, 14, 20, ExpressionKind::Macro, aus.iter().copied()),
            });
        }
        Dataset::from_rows(videos, rows)
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            window_seconds: 0.5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn window_geometry() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.window_len(30.0).unwrap(), 66);
        assert_eq!(cfg.window_stride(66), 33);
        assert_eq!(cfg.boundary_radius(30.0), 1);
        assert_eq!(cfg.boundary_radius(200.0), 7);
        let short = TrainConfig {
            window_seconds: 0.2,
            ..cfg
        };
        assert!(matches!(
            short.window_len(30.0),
            Err(TrainError::WindowTooShort { len: 6, .. })
        ));
    }

    #[test]
    fn fold_is_deterministic_and_leak_free() {
        let ds = tiny_dataset();
        let prior = PriorSource::Cooccurrence(default_au_roi_map());
        let a = train_fold(&ds, "s1", &quick(), &ModelConfig::default(), &prior).unwrap();
        let b = train_fold(&ds, "s1", &quick(), &ModelConfig::default(), &prior).unwrap();
        assert_eq!(
            model::encode_checkpoint(&a.checkpoint),
            model::encode_checkpoint(&b.checkpoint)
        );
        assert!(!a.trained_videos.contains("s1_v0"));
        assert_eq!(a.trained_videos.len(), 2);
    }

    #[test]
    fn fold_errors() {
        let ds = tiny_dataset();
        let prior = PriorSource::Uniform;
        assert!(matches!(
            train_fold(&ds, "nobody", &quick(), &ModelConfig::default(), &prior),
            Err(TrainError::UnknownSubject(_))
        ));
        let mut one = ds.clone();
        one.videos.truncate(1);
        assert!(matches!(
            loso(&one, &quick(), &ModelConfig::default(), &prior, 1),
            Err(TrainError::TooFewSubjects(1))
        ));
        assert!(matches!(
            train_fold(&one, "s0", &quick(), &ModelConfig::default(), &prior),
            Err(TrainError::EmptyTrainingSet(_))
        ));
    }

    #[test]
    fn loso_folds_use_training_subjects_only() {
        let ds = tiny_dataset();
        let prior = PriorSource::Cooccurrence(default_au_roi_map());
        let cfg = TrainConfig { epochs: 1, ..quick() };
        let folds = loso(&ds, &cfg, &ModelConfig::default(), &prior, 2).unwrap();
        assert_eq!(folds.keys().cloned().collect::<Vec<_>>(), vec!["s0", "s1", "s2"]);
        // s2 carries the only AU12 instance: mouth-corner counts vanish when it is held out.
        assert_eq!(folds["s2"].adjacency.raw[10][11], 0);
        assert_eq!(folds["s0"].adjacency.raw[10][11], 1);
        assert_ne!(folds["s2"].adjacency, folds["s0"].adjacency);
    }
}
