//! Interval IoU, greedy one-to-one matching within kind, and pooled
//! precision/recall/F1.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::feature_io::{AnnotationInstance, ExpressionKind};
use crate::spotting::Proposal;

pub const DEFAULT_K_IOU: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("malformed interval [{start}, {end}]")]
pub struct IntervalError {
    pub start: usize,
    pub end: usize,
}

/// IoU of two inclusive frame intervals.
pub fn interval_iou(a: (usize, usize), b: (usize, usize)) -> Result<f64, IntervalError> {
    for (start, end) in [a, b] {
        if start > end {
            return Err(IntervalError { start, end });
        }
    }
    Ok(interval_iou_unchecked(a, b))
}

pub(crate) fn interval_iou_unchecked(a: (usize, usize), b: (usize, usize)) -> f64 {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    if hi < lo {
        return 0.0;
    }
    let inter = (hi - lo + 1) as f64;
    let union = (a.1 - a.0 + 1) as f64 + (b.1 - b.0 + 1) as f64 - inter;
    inter / union
}

#[derive(Debug, Clone, PartialEq)]
pub struct Match {
    pub proposal: usize,
    pub ground_truth: usize,
    pub iou: f64,
}

/// Outcome of matching one video's proposals of one kind.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchReport {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// Indices into the slices passed to [`match_intervals`].
    pub matches: Vec<Match>,
}

/// Greedy one-to-one matching. Proposals are visited by score descending
/// (ties: earlier start); each claims the unclaimed ground truth of highest
/// IoU (ties: lowest index) if that IoU reaches `k_iou`.
pub fn match_intervals(proposals: &[Proposal], ground_truths: &[(usize, usize)], k_iou: f64) -> MatchReport {
    let mut order: Vec<usize> = (0..proposals.len()).collect();
    order.sort_by(|&a, &b| {
        proposals[b]
            .score
            .total_cmp(&proposals[a].score)
            .then(proposals[a].start.cmp(&proposals[b].start))
    });
    let mut claimed = vec![false; ground_truths.len()];
    let mut matches = Vec::new();
    for pi in order {
        let mut best: Option<(usize, f64)> = None;
        for (gi, &gt) in ground_truths.iter().enumerate() {
            if claimed[gi] {
                continue;
            }
            let iou = interval_iou_unchecked(proposals[pi].span(), gt);
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        if let Some((gi, iou)) = best.filter(|&(_, iou)| iou >= k_iou) {
            claimed[gi] = true;
            matches.push(Match {
                proposal: pi,
                ground_truth: gi,
                iou,
            });
        }
    }
    MatchReport {
        tp: matches.len(),
        fp: proposals.len() - matches.len(),
        fn_: ground_truths.len() - matches.len(),
        matches,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Scores {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

impl Scores {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ScoreSummary {
    pub macro_: Scores,
    pub micro: Scores,
    pub overall: Scores,
}

impl ScoreSummary {
    pub fn kind(&self, kind: ExpressionKind) -> &Scores {
        match kind {
            ExpressionKind::Macro => &self.macro_,
            ExpressionKind::Micro => &self.micro,
        }
    }

    /// `key=value` lines, one metric per line.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        for (name, s) in [
            ("macro", &self.macro_),
            ("micro", &self.micro),
            ("overall", &self.overall),
        ] {
            let _ = writeln!(out, "{name}.tp={}", s.tp);
            let _ = writeln!(out, "{name}.fp={}", s.fp);
            let _ = writeln!(out, "{name}.fn={}", s.fn_);
            let _ = writeln!(out, "{name}.precision={:.6}", s.precision);
            let _ = writeln!(out, "{name}.recall={:.6}", s.recall);
            let _ = writeln!(out, "{name}.f1={:.6}", s.f1);
        }
        out
    }
}

impl fmt::Display for ScoreSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<8} {:>6} {:>6} {:>6} {:>9} {:>9} {:>9}",
            "kind", "tp", "fp", "fn", "precision", "recall", "f1"
        )?;
        for (name, s) in [
            ("macro", &self.macro_),
            ("micro", &self.micro),
            ("overall", &self.overall),
        ] {
            writeln!(
                f,
                "{:<8} {:>6} {:>6} {:>6} {:>9.4} {:>9.4} {:>9.4}",
                name, s.tp, s.fp, s.fn_, s.precision, s.recall, s.f1
            )?;
        }
        Ok(())
    }
}

/// Pools counts per kind across all reports, then pools both kinds for
/// the overall row.
pub fn summarize<'a>(reports: impl IntoIterator<Item = (ExpressionKind, &'a MatchReport)>) -> ScoreSummary {
    let mut counts = [[0usize; 3]; 2];
    for (kind, r) in reports {
        let c = &mut counts[kind.index()];
        c[0] += r.tp;
        c[1] += r.fp;
        c[2] += r.fn_;
    }
    let [m, u] = counts;
    ScoreSummary {
        macro_: Scores::from_counts(m[0], m[1], m[2]),
        micro: Scores::from_counts(u[0], u[1], u[2]),
        overall: Scores::from_counts(m[0] + u[0], m[1] + u[1], m[2] + u[2]),
    }
}

/// Matches every video's proposals against its annotations, per kind.
/// Videos present on only one side still count (all FP or all FN).
pub fn evaluate(
    proposals: &[Proposal],
    annotations: &BTreeMap<String, Vec<AnnotationInstance>>,
    k_iou: f64,
) -> (ScoreSummary, Vec<(String, ExpressionKind, MatchReport)>) {
    let mut by_video: BTreeMap<&str, Vec<Proposal>> = BTreeMap::new();
    for p in proposals {
        by_video.entry(&p.video_id).or_default().push(p.clone());
    }
    for v in annotations.keys() {
        by_video.entry(v).or_default();
    }
    let mut reports = Vec::new();
    for (video, props) in by_video {
        let gts = annotations.get(video).map(Vec::as_slice).unwrap_or(&[]);
        for kind in ExpressionKind::ALL {
            let ps: Vec<Proposal> = props.iter().filter(|p| p.kind == kind).cloned().collect();
            let gs: Vec<(usize, usize)> = gts
                .iter()
                .filter(|a| a.kind == kind)
                .map(|a| (a.onset, a.offset))
                .collect();
            reports.push((video.to_string(), kind, match_intervals(&ps, &gs, k_iou)));
        }
    }
    let summary = summarize(reports.iter().map(|(_, k, r)| (*k, r)));
    (summary, reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(start: usize, end: usize, score: f64) -> Proposal {
        Proposal {
            video_id: "v".into(),
            kind: ExpressionKind::Macro,
            start,
            end,
            score,
        }
    }

    #[test]
    fn iou_examples() {
        assert_eq!(interval_iou((3, 8), (3, 8)).unwrap(), 1.0);
        assert!((interval_iou((0, 9), (5, 14)).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(interval_iou((0, 4), (10, 14)).unwrap(), 0.0);
        assert_eq!(interval_iou((5, 4), (0, 1)), Err(IntervalError { start: 5, end: 4 }));
    }

    #[test]
    fn match_examples() {
        let r = match_intervals(&[], &[(0, 5), (10, 15), (20, 25)], 0.5);
        assert_eq!((r.tp, r.fp, r.fn_), (0, 0, 3));
        let r = match_intervals(&[p(10, 15, 0.7)], &[(10, 15)], 0.5);
        assert_eq!((r.tp, r.fp, r.fn_), (1, 0, 0));
        let r = match_intervals(&[p(10, 20, 0.8), p(11, 20, 0.9)], &[(10, 20)], 0.5);
        assert_eq!((r.tp, r.fp, r.fn_), (1, 1, 0));
        assert_eq!(r.matches[0].proposal, 1);
    }

    #[test]
    fn summary_arithmetic() {
        let s = Scores::from_counts(1, 1, 1);
        assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));
        assert_eq!(Scores::from_counts(0, 4, 2).f1, 0.0);
        let a = MatchReport {
            tp: 3,
            fp: 1,
            fn_: 2,
            matches: vec![],
        };
        let b = MatchReport {
            tp: 1,
            fp: 3,
            fn_: 1,
            matches: vec![],
        };
        let s = summarize([(ExpressionKind::Macro, &a), (ExpressionKind::Micro, &b)]);
        assert_eq!(s.overall.precision, 0.5);
        assert!((s.overall.recall - 4.0 / 7.0).abs() < 1e-12);
        assert!((s.overall.f1 - 0.533333).abs() < 1e-5);
        assert!(s.to_key_values().contains("overall.tp=4\n"));
        assert!(s.to_string().contains("overall"));
    }

    #[test]
    fn evaluate_counts_unmatched_videos() {
        let mut ann = BTreeMap::new();
        ann.insert(
            "w".to_string(),
            vec![AnnotationInstance::new(1, 2, 3, ExpressionKind::Micro, ["AU4"])],
        );
        let (s, reports) = evaluate(&[p(0, 9, 0.5)], &ann, 0.5);
        assert_eq!((s.macro_.fp, s.micro.fn_), (1, 1));
        assert_eq!(reports.len(), 4);
    }
}
