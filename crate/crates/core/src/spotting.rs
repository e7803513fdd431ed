//! From probability maps to scored intervals: apex-anchored proposal
//! generation, then greedy non-maximum suppression per expression kind.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::evaluation::interval_iou_unchecked;
use crate::feature_io::{ExpressionKind, FeatureSequence};
use crate::model::{self, decode_probabilities, Checkpoint, ModelError, ProbabilityMaps};
use crate::training::{make_windows, TrainConfig, TrainError};

pub const PROPOSAL_HEADER: &str = "video_id,kind,start,end,score";

#[derive(Debug, Clone, PartialEq)]
pub struct SpotConfig {
    pub thr_ap: f64,
    pub k_dis_seconds_macro: f64,
    pub k_dis_seconds_micro: f64,
    pub nms_iou: f64,
}

impl Default for SpotConfig {
    fn default() -> Self {
        Self {
            thr_ap: 0.4,
            k_dis_seconds_macro: 2.0,
            k_dis_seconds_micro: 0.25,
            nms_iou: 0.5,
        }
    }
}

impl SpotConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.thr_ap > 0.0 && self.thr_ap < 1.0) {
            return Err(format!("thr_ap must be in (0, 1), got {}", self.thr_ap));
        }
        if !(self.nms_iou > 0.0 && self.nms_iou <= 1.0) {
            return Err(format!("nms_iou must be in (0, 1], got {}", self.nms_iou));
        }
        if !(self.k_dis_seconds_macro > 0.0 && self.k_dis_seconds_micro > 0.0) {
            return Err("k_dis seconds must be positive".into());
        }
        Ok(())
    }

    /// Search radius in frames for `kind` at `fps`, at least 1.
    pub fn k_dis(&self, kind: ExpressionKind, fps: f32) -> usize {
        let secs = match kind {
            ExpressionKind::Macro => self.k_dis_seconds_macro,
            ExpressionKind::Micro => self.k_dis_seconds_micro,
        };
        ((secs * fps as f64).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub video_id: String,
    pub kind: ExpressionKind,
    /// Inclusive frame interval.
    pub start: usize,
    pub end: usize,
    pub score: f64,
}

impl Proposal {
    pub fn span(&self) -> (usize, usize) {
        (self.start, self.end)
    }
}

/// Index of the largest value in `seq[lo..=hi]`, preferring the index nearest
/// `anchor` on ties.
fn argmax_near(seq: &[f32], lo: usize, hi: usize, anchor: usize) -> usize {
    let mut best = if anchor > hi { hi } else { lo };
    let order: Box<dyn Iterator<Item = usize>> = if anchor > hi {
        Box::new((lo..=hi).rev())
    } else {
        Box::new(lo..=hi)
    };
    for i in order {
        if seq[i] > seq[best] {
            best = i;
        }
    }
    best
}

/// Every frame whose apex probability reaches `thr_ap` anchors one proposal:
/// the onset is the most likely onset frame within `k_dis` before it, the
/// offset the most likely offset frame within `k_dis` after it, and the score
/// the product of the three probabilities. Apexes on the first or last frame
/// have an empty search range and are skipped.
pub fn generate_proposals(
    maps: &ProbabilityMaps,
    kind: ExpressionKind,
    video_id: &str,
    thr_ap: f64,
    k_dis: usize,
) -> Vec<Proposal> {
    let m = maps.kind(kind);
    let t_len = m.len();
    let mut out = Vec::new();
    for i in 0..t_len {
        let sc_ap = m.apex[i] as f64;
        if sc_ap < thr_ap || i == 0 || i + 1 >= t_len {
            continue;
        }
        let s = argmax_near(&m.onset, i.saturating_sub(k_dis), i - 1, i);
        let e = argmax_near(&m.offset, i + 1, (i + k_dis).min(t_len - 1), i);
        out.push(Proposal {
            video_id: video_id.to_string(),
            kind,
            start: s,
            end: e,
            score: m.onset[s] as f64 * sc_ap * m.offset[e] as f64,
        });
    }
    out
}

/// Greedy NMS: highest score first (ties: earlier start, then shorter), drop
/// anything overlapping a kept proposal with IoU ≥ `iou_thr`.
pub fn nms(proposals: &[Proposal], iou_thr: f64) -> Vec<Proposal> {
    let mut order: Vec<&Proposal> = proposals.iter().collect();
    order.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.start.cmp(&b.start))
            .then((a.end - a.start).cmp(&(b.end - b.start)))
    });
    let mut kept: Vec<Proposal> = Vec::new();
    for p in order {
        if kept
            .iter()
            .all(|k| interval_iou_unchecked(k.span(), p.span()) < iou_thr)
        {
            kept.push(p.clone());
        }
    }
    kept
}

#[derive(Debug, Error)]
pub enum SpotError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Window(#[from] TrainError),
}

/// Per-frame probabilities for a whole video: windows at half-window stride,
/// averaged where they overlap.
pub fn video_probabilities(
    ckpt: &Checkpoint,
    video: &FeatureSequence,
    train_cfg: &TrainConfig,
) -> Result<ProbabilityMaps, SpotError> {
    let len = train_cfg.window_len(video.fps())?;
    let t_len = video.num_frames();
    let mut merged = ProbabilityMaps::zeros(t_len);
    let mut counts = vec![0u32; t_len];
    for w in make_windows(video, len, (len / 2).max(1)) {
        let (logits, _) = model::forward(&ckpt.params, &ckpt.adjacency, &w.feats)?;
        let maps = decode_probabilities(&logits)?;
        merged.accumulate(&maps, w.window_start, w.valid_len, &mut counts);
    }
    merged.divide(&counts);
    Ok(merged)
}

/// Proposals for both kinds of one video, after per-kind NMS, sorted by
/// kind then start.
pub fn spot_video(
    ckpt: &Checkpoint,
    video: &FeatureSequence,
    train_cfg: &TrainConfig,
    spot_cfg: &SpotConfig,
) -> Result<Vec<Proposal>, SpotError> {
    let maps = video_probabilities(ckpt, video, train_cfg)?;
    Ok(proposals_from_maps(&maps, &video.video_id, video.fps(), spot_cfg))
}

pub fn proposals_from_maps(maps: &ProbabilityMaps, video_id: &str, fps: f32, cfg: &SpotConfig) -> Vec<Proposal> {
    let mut out = Vec::new();
    for kind in ExpressionKind::ALL {
        let cands = generate_proposals(maps, kind, video_id, cfg.thr_ap, cfg.k_dis(kind, fps));
        let mut kept = nms(&cands, cfg.nms_iou);
        kept.sort_by(|a, b| a.start.cmp(&b.start).then(a.end.cmp(&b.end)));
        out.extend(kept);
    }
    out
}

pub fn format_proposals(proposals: &[Proposal]) -> String {
    let mut out = String::from(PROPOSAL_HEADER);
    out.push('\n');
    for p in proposals {
        let _ = writeln!(out, "{},{},{},{},{:.6}", p.video_id, p.kind, p.start, p.end, p.score);
    }
    out
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("proposal line {line}: {reason}")]
pub struct ProposalParseError {
    pub line: usize,
    pub reason: String,
}

pub fn parse_proposals(text: &str) -> Result<Vec<Proposal>, ProposalParseError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        None => return Ok(Vec::new()),
        Some((_, h)) if h.trim() == PROPOSAL_HEADER => {}
        Some((_, h)) => {
            return Err(ProposalParseError {
                line: 1,
                reason: format!("unexpected header {h:?}"),
            })
        }
    }
    let mut out = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let err = |reason: String| ProposalParseError { line, reason };
        let cols: Vec<&str> = raw.split(',').map(str::trim).collect();
        if cols.len() != 5 {
            return Err(err(format!("expected 5 columns, found {}", cols.len())));
        }
        let kind = ExpressionKind::from_str(cols[1]).map_err(|k| err(format!("unknown kind {k:?}")))?;
        let num = |s: &str| s.parse::<usize>().map_err(|_| err(format!("bad frame index {s:?}")));
        let (start, end) = (num(cols[2])?, num(cols[3])?);
        if start > end {
            return Err(err(format!("start {start} after end {end}")));
        }
        let score = cols[4]
            .parse::<f64>()
            .map_err(|_| err(format!("bad score {:?}", cols[4])))?;
        out.push(Proposal {
            video_id: cols[0].to_string(),
            kind,
            start,
            end,
            score,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::KindMaps;

    fn maps(onset: &[f32], apex: &[f32], offset: &[f32]) -> ProbabilityMaps {
        let mut m = ProbabilityMaps::zeros(apex.len());
        m.macro_maps = KindMaps {
            expression: vec![0.0; apex.len()],
            onset: onset.to_vec(),
            apex: apex.to_vec(),
            offset: offset.to_vec(),
            background: vec![0.0; apex.len()],
        };
        m
    }

    fn prop(start: usize, end: usize, score: f64) -> Proposal {
        Proposal {
            video_id: "v".into(),
            kind: ExpressionKind::Macro,
            start,
            end,
            score,
        }
    }

    #[test]
    fn hand_traced_example() {
        let m = maps(
            &[0.1, 0.2, 0.8, 0.3, 0.1, 0.1, 0.1, 0.1, 0.1],
            &[0.1, 0.1, 0.1, 0.1, 0.9, 0.1, 0.1, 0.1, 0.1],
            &[0.1, 0.1, 0.1, 0.1, 0.1, 0.2, 0.3, 0.7, 0.1],
        );
        let p = generate_proposals(&m, ExpressionKind::Macro, "v", 0.4, 3);
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].start, p[0].end), (2, 7));
        assert!((p[0].score - 0.8f32 as f64 * 0.9f32 as f64 * 0.7f32 as f64).abs() < 1e-12);
        assert!((p[0].score - 0.504).abs() < 1e-6);
    }

    #[test]
    fn below_threshold_gives_nothing() {
        let m = maps(&[0.5; 6], &[0.39; 6], &[0.5; 6]);
        assert!(generate_proposals(&m, ExpressionKind::Macro, "v", 0.4, 2).is_empty());
    }

    #[test]
    fn boundary_apexes_are_skipped_and_ties_go_near() {
        let m = maps(&[0.2; 5], &[0.9, 0.1, 0.9, 0.1, 0.9], &[0.2; 5]);
        let p = generate_proposals(&m, ExpressionKind::Macro, "v", 0.4, 2);
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].start, p[0].end), (1, 3));
    }

    #[test]
    fn nms_basics() {
        assert_eq!(nms(&[prop(0, 9, 0.3)], 0.5), vec![prop(0, 9, 0.3)]);
        let kept = nms(&[prop(5, 20, 0.8), prop(5, 20, 0.9)], 0.5);
        assert_eq!(kept, vec![prop(5, 20, 0.9)]);
        // IoU 5/15 < 0.5 keeps both
        assert_eq!(nms(&[prop(0, 9, 0.8), prop(5, 14, 0.9)], 0.5).len(), 2);
    }

    #[test]
    fn k_dis_conversion() {
        let c = SpotConfig::default();
        assert_eq!(c.k_dis(ExpressionKind::Macro, 30.0), 60);
        assert_eq!(c.k_dis(ExpressionKind::Micro, 30.0), 8);
        assert_eq!(c.k_dis(ExpressionKind::Micro, 200.0), 50);
    }

    #[test]
    fn csv_round_trip() {
        let ps = vec![prop(1, 5, 0.123456), prop(7, 30, 0.5)];
        let text = format_proposals(&ps);
        assert!(text.starts_with("video_id,kind,start,end,score\n"));
        assert!(text.contains("v,macro,1,5,0.123456\n"));
        assert_eq!(parse_proposals(&text).unwrap(), ps);
        assert!(parse_proposals("video_id,kind,start,end,score\nv,macro,5,1,0.1").is_err());
    }
}
