//! Sliding windows over a video and per-frame training targets.

use thiserror::Error;

use crate::feature_io::{AnnotationInstance, ExpressionKind, FeatureSequence, FRAME_STRIDE, NUM_CHANNELS, NUM_ROIS};
use crate::numerics::Tensor;

/// Per-frame class for the 4-way boundary task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum FrameClass {
    Onset = 0,
    Apex = 1,
    Offset = 2,
    Background = 3,
}

impl FrameClass {
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LabelError {
    #[error("video {video_id}: overlapping {kind} instances at frames {first:?} and {second:?}")]
    Overlap {
        video_id: String,
        kind: ExpressionKind,
        first: (usize, usize),
        second: (usize, usize),
    },
}

/// Targets for one kind over one window.
#[derive(Debug, Clone, PartialEq)]
pub struct KindTargets {
    /// 1.0 inside a ground-truth interval of this kind.
    pub expression: Vec<f32>,
    pub class: Vec<FrameClass>,
}

/// Targets for both kinds, indexed by [`ExpressionKind::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub kinds: [KindTargets; 2],
}

impl Targets {
    pub fn kind(&self, kind: ExpressionKind) -> &KindTargets {
        &self.kinds[kind.index()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub video_id: String,
    pub window_start: usize,
    /// Frames `[0, valid_len)` are real; the rest is zero padding excluded from the loss.
    pub valid_len: usize,
    /// `len × 12 × 2`.
    pub feats: Tensor<f32>,
    pub targets: Option<Targets>,
}

impl WindowSample {
    pub fn len(&self) -> usize {
        self.feats.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Window start offsets: `0, s, 2s, …`, stopping at the first window that
/// reaches the end of the video.
pub fn window_starts(num_frames: usize, len: usize, stride: usize) -> Vec<usize> {
    assert!(len > 0 && stride > 0, "window length and stride must be positive");
    let mut starts = vec![0];
    let mut s = 0;
    while s + len < num_frames {
        s += stride;
        starts.push(s);
    }
    starts
}

/// Cuts `video` into windows of `len` frames at `stride`; the final window is
/// zero-padded.
pub fn make_windows(video: &FeatureSequence, len: usize, stride: usize) -> Vec<WindowSample> {
    let t = video.num_frames();
    window_starts(t, len, stride)
        .into_iter()
        .map(|start| {
            let valid_len = len.min(t - start);
            let mut data = vec![0f32; len * FRAME_STRIDE];
            data[..valid_len * FRAME_STRIDE]
                .copy_from_slice(&video.data()[start * FRAME_STRIDE..(start + valid_len) * FRAME_STRIDE]);
            WindowSample {
                video_id: video.video_id.clone(),
                window_start: start,
                valid_len,
                feats: Tensor::from_vec(&[len, NUM_ROIS, NUM_CHANNELS], data).expect("window shape"),
                targets: None,
            }
        })
        .collect()
}

/// Per-frame targets for a window. `radius` widens the onset/apex/offset
/// labels to `±radius` frames; overlapping labels resolve apex, then onset,
/// then offset. Annotation indices address feature frames as stored; no
/// frame-pair offset is applied.
pub fn encode_labels(
    annotations: &[AnnotationInstance],
    window: &WindowSample,
    radius: usize,
) -> Result<Targets, LabelError> {
    let len = window.len();
    let mut kinds = [0, 1].map(|_| KindTargets {
        expression: vec![0.0; len],
        class: vec![FrameClass::Background; len],
    });
    for kind in ExpressionKind::ALL {
        let mut own: Vec<&AnnotationInstance> = annotations.iter().filter(|a| a.kind == kind).collect();
        own.sort_by_key(|a| a.onset);
        for w in own.windows(2) {
            if w[1].onset <= w[0].offset {
                return Err(LabelError::Overlap {
                    video_id: window.video_id.clone(),
                    kind,
                    first: (w[0].onset, w[0].offset),
                    second: (w[1].onset, w[1].offset),
                });
            }
        }
        let targets = &mut kinds[kind.index()];
        for local in 0..window.valid_len {
            let g = window.window_start + local;
            let near = |f: usize| g.abs_diff(f) <= radius;
            if own.iter().any(|a| a.onset <= g && g <= a.offset) {
                targets.expression[local] = 1.0;
            }
            targets.class[local] = if own.iter().any(|a| near(a.apex)) {
                FrameClass::Apex
            } else if own.iter().any(|a| near(a.onset)) {
                FrameClass::Onset
            } else if own.iter().any(|a| near(a.offset)) {
                FrameClass::Offset
            } else {
                FrameClass::Background
            };
        }
    }
    Ok(Targets { kinds })
}
