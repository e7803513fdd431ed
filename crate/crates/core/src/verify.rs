//! Self-checks: finite-difference gradient checks for every differentiable
//! op and the full network, brute-force oracles for proposal generation,
//! NMS, matching and AU co-occurrence, and the receptive-field probe.

// Oracles index explicitly so they stay independent of the iterator-based
// implementations they check.
#![allow(clippy::needless_range_loop)]

use std::collections::BTreeSet;
use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::au_prior::{count_cooccurrence, default_au_roi_map, normalize, AdjacencyMatrix, AuRoiMap};
use crate::evaluation::match_intervals;
use crate::feature_io::{AnnotationInstance, ExpressionKind, NUM_CHANNELS, NUM_ROIS};
use crate::model::{self, init_params, KindMaps, ModelConfig, ModelParams, ProbabilityMaps, HEAD_CHANNELS};
use crate::numerics::{finite_diff_check, ops, relative_error, Conv1dSpec, Real, Tensor};
use crate::spotting::{generate_proposals, nms, Proposal};
use crate::training::{focal_loss, FocalParams, FrameClass, KindTargets, Targets};

pub const OP_TOLERANCE: f64 = 1e-3;
pub const COMPOSITE_TOLERANCE: f64 = 1e-2;

/// Names accepted by [`VerifyOptions::inject_fault`].
pub const GRADIENT_CHECKS: [&str; 9] = [
    "matmul",
    "relu",
    "sigmoid",
    "softmax",
    "conv1d",
    "gcn_layer",
    "focal_loss",
    "model_f64",
    "model_focal_f32",
];

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    /// Random instances per gradient check.
    pub seeds: u64,
    /// Random instances per oracle comparison.
    pub oracle_cases: u64,
    /// Perturbs the analytic gradient of the named check so it must fail.
    pub inject_fault: Option<String>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seeds: 100,
            oracle_cases: 200,
            inject_fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    /// Max relative error for gradient checks, mismatch count for oracles.
    pub max_error: f64,
    pub tolerance: f64,
    pub cases: u64,
    /// Coordinates excluded because their stencil straddles a ReLU kink,
    /// out of `probed`. Zero for checks that never skip.
    pub skipped: u64,
    pub probed: u64,
    pub elapsed: Duration,
}

/// Above this skipped fraction a check fails regardless of its error.
pub const MAX_SKIPPED_FRACTION: f64 = 0.1;

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance && self.skipped as f64 <= MAX_SKIPPED_FRACTION * self.probed as f64
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<18} max_err={:.3e} tol={:.0e} cases={} time={:.2}s",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.max_error,
            self.tolerance,
            self.cases,
            self.elapsed.as_secs_f64()
        )?;
        if self.probed > 0 {
            write!(f, " skipped={}/{}", self.skipped, self.probed)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub checks: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckOutcome::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| !c.passed())
    }

    pub fn get(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------- gradients

fn rand_tensor<T: Real>(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::from_f64_lossy(rng.random_range(-scale..scale)))
}

/// Random values kept at least `gap` away from zero, so ReLU kinks stay
/// outside the finite-difference stencil.
fn rand_nonzero(rng: &mut ChaCha8Rng, shape: &[usize], gap: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let v: f64 = rng.random_range(gap..1.0);
        if rng.random_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

fn dot<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| x.as_f64() * y.as_f64())
        .sum()
}

fn random_targets(rng: &mut ChaCha8Rng, len: usize) -> Targets {
    let classes = [
        FrameClass::Onset,
        FrameClass::Apex,
        FrameClass::Offset,
        FrameClass::Background,
    ];
    Targets {
        kinds: [0, 1].map(|_| KindTargets {
            expression: (0..len).map(|_| rng.random_bool(0.3) as u8 as f32).collect(),
            class: (0..len).map(|_| classes[rng.random_range(0..4)]).collect(),
        }),
    }
}

fn random_adjacency<T: Real>(rng: &mut ChaCha8Rng) -> Tensor<T> {
    let mut raw = [[0u64; NUM_ROIS]; NUM_ROIS];
    for i in 0..NUM_ROIS {
        for j in 0..=i {
            let v = rng.random_range(0..6);
            raw[i][j] = v;
            raw[j][i] = v;
        }
    }
    let n = AdjacencyMatrix::from_raw(raw).normalized;
    Tensor::from_fn(&[NUM_ROIS, NUM_ROIS], |i| {
        T::from_f64_lossy(n[i / NUM_ROIS][i % NUM_ROIS])
    })
}

/// One gradient-check instance: returns the max relative error.
fn op_instance(name: &str, rng: &mut ChaCha8Rng, fault: bool) -> f64 {
    let corrupt = |mut g: Vec<Tensor<f64>>| {
        if fault {
            g[0] = g[0].map(|v| v * 1.05 + 1e-3);
        }
        g
    };
    let eps = 1e-6;
    match name {
        "matmul" => {
            let (m, k, n) = (rng.random_range(1..5), rng.random_range(1..6), rng.random_range(1..5));
            let mut params = vec![rand_tensor(rng, &[m, k], 1.0), rand_tensor(rng, &[k, n], 1.0)];
            let r = rand_tensor(rng, &[m, n], 1.0);
            let (da, db) = ops::matmul_backward(&params[0], &params[1], &r).expect("shapes");
            let g = corrupt(vec![da, db]);
            finite_diff_check(
                |p| dot(&ops::matmul(&p[0], &p[1]).expect("shapes"), &r),
                &mut params,
                &g,
                eps,
                None,
            )
            .max_rel_error
        }
        "relu" | "sigmoid" => {
            let shape = [rng.random_range(1..4), rng.random_range(1..8)];
            let mut params = vec![rand_nonzero(rng, &shape, 0.05)];
            let r = rand_tensor(rng, &shape, 1.0);
            let g = if name == "relu" {
                ops::relu_backward(&params[0], &r)
            } else {
                ops::sigmoid_backward(&ops::sigmoid(&params[0]), &r)
            };
            let f = |x: &Tensor<f64>| if name == "relu" { ops::relu(x) } else { ops::sigmoid(x) };
            finite_diff_check(|p| dot(&f(&p[0]), &r), &mut params, &corrupt(vec![g]), eps, None).max_rel_error
        }
        "softmax" => {
            let shape = [rng.random_range(2..6), rng.random_range(1..7)];
            let mut params = vec![rand_tensor(rng, &shape, 3.0)];
            let r = rand_tensor(rng, &shape, 1.0);
            let y = ops::softmax_channels(&params[0]).expect("2-d");
            let g = ops::softmax_channels_backward(&y, &r).expect("shapes");
            finite_diff_check(
                |p| dot(&ops::softmax_channels(&p[0]).expect("2-d"), &r),
                &mut params,
                &corrupt(vec![g]),
                eps,
                None,
            )
            .max_rel_error
        }
        "conv1d" => {
            let spec = Conv1dSpec::new(
                rng.random_range(1..4),
                rng.random_range(1..4),
                [1, 3, 5][rng.random_range(0..3)],
                rng.random_range(1..4),
            )
            .expect("odd kernel");
            let t_len = rng.random_range(1..12);
            let mut params = vec![
                rand_tensor(rng, &[spec.c_in, t_len], 1.0),
                rand_tensor(rng, &[spec.c_out, spec.c_in, spec.kernel], 1.0),
                rand_tensor(rng, &[spec.c_out], 1.0),
            ];
            let r = rand_tensor(rng, &[spec.c_out, t_len], 1.0);
            let gr = ops::conv1d_backward(&spec, &params[0], &params[1], &r).expect("shapes");
            let g = corrupt(vec![gr.input, gr.weight, gr.bias]);
            finite_diff_check(
                |p| dot(&ops::conv1d(&spec, &p[0], &p[1], &p[2]).expect("shapes"), &r),
                &mut params,
                &g,
                eps,
                None,
            )
            .max_rel_error
        }
        "gcn_layer" => {
            let hidden = rng.random_range(1..6);
            let adj = random_adjacency::<f64>(rng);
            let mut params = vec![
                rand_tensor(rng, &[NUM_ROIS, NUM_CHANNELS], 1.0),
                rand_tensor(rng, &[NUM_CHANNELS, hidden], 1.0),
            ];
            let r = rand_tensor(rng, &[NUM_ROIS, hidden], 1.0);
            let layer = |p: &[Tensor<f64>]| {
                let ax = ops::matmul(&adj, &p[0]).expect("shapes");
                let pre = ops::matmul(&ax, &p[1]).expect("shapes");
                (ax, pre)
            };
            let (ax, pre) = layer(&params);
            if pre.data().iter().any(|v| v.abs() < 1e-3) {
                return 0.0; // kink inside the stencil; the draw is uninformative
            }
            let g1 = ops::relu_backward(&pre, &r);
            let (d_ax, dw) = ops::matmul_backward(&ax, &params[1], &g1).expect("shapes");
            let (_, dx) = ops::matmul_backward(&adj, &params[0], &d_ax).expect("shapes");
            let g = corrupt(vec![dx, dw]);
            finite_diff_check(|p| dot(&ops::relu(&layer(p).1), &r), &mut params, &g, eps, None).max_rel_error
        }
        "focal_loss" => {
            let len = rng.random_range(1..10);
            let valid = rng.random_range(1..=len);
            let fp = FocalParams {
                alpha: rng.random_range(0.1..0.9),
                gamma: [0.0, 1.0, 2.0, 3.5][rng.random_range(0..4)],
            };
            let targets = random_targets(rng, len);
            let mut params = vec![rand_tensor(rng, &[HEAD_CHANNELS, len], 4.0)];
            let (_, g) = focal_loss(&params[0], &targets, valid, fp);
            finite_diff_check(
                |p| focal_loss(&p[0], &targets, valid, fp).0,
                &mut params,
                &corrupt(vec![g]),
                eps,
                None,
            )
            .max_rel_error
        }
        other => panic!("unknown gradient check {other}"),
    }
}

/// Max error over the coordinates it kept, plus probe counts.
struct CompositeProbe {
    max_error: f64,
    probed: u64,
    skipped: u64,
}

/// Full network plus focal loss with `T` parameters and `T` analytic
/// gradients on a short window. The numeric side evaluates the same
/// parameters in f64, so for f32 the difference quotient is free of f32
/// rounding. With 51k parameters some stencils straddle a ReLU kink; a
/// coordinate whose one-sided quotients disagree is skipped and counted.
fn composite_instance<T: Real>(rng: &mut ChaCha8Rng, fault: bool, eps: f64, tolerance: f64) -> CompositeProbe {
    const COORDS: usize = 12;
    let cfg = ModelConfig {
        init_seed: rng.random(),
        ..ModelConfig::default()
    };
    let len = rng.random_range(11..20);
    let mut net: ModelParams<T> = init_params(&cfg).expect("default config");
    for p in net.parameters_mut() {
        if p.value.shape().len() == 1 {
            p.value = rand_tensor(rng, p.value.shape(), 0.1);
        }
    }
    let adj = random_adjacency::<T>(rng);
    let feats = rand_tensor::<T>(rng, &[len, NUM_ROIS, NUM_CHANNELS], 1.0);
    let targets = random_targets(rng, len);
    let fp = FocalParams {
        alpha: 0.75,
        gamma: 2.0,
    };

    let (logits, tape) = model::forward(&net, &adj, &feats).expect("shapes");
    let (_, g) = focal_loss(&logits, &targets, len, fp);
    net.zero_grad();
    model::backward(&mut net, &adj, &tape, &g).expect("tape");
    let mut analytic: Vec<Tensor<T>> = net.parameters().iter().map(|p| p.grad.clone()).collect();
    if fault {
        analytic[0] = analytic[0].map(|v| v * T::from_f64_lossy(1.05) + T::from_f64_lossy(1e-3));
    }

    let mut wide: ModelParams<f64> = net.cast();
    let (adj64, feats64) = (adj.cast::<f64>(), feats.cast::<f64>());
    let mut loss_at = |tensor: usize, idx: usize, value: T| {
        let slot = &mut wide.parameters_mut()[tensor].value;
        let orig = slot.data()[idx];
        slot.data_mut()[idx] = value.as_f64();
        let (logits, _) = model::forward(&wide, &adj64, &feats64).expect("shapes");
        let loss = focal_loss(&logits, &targets, len, fp).0;
        wide.parameters_mut()[tensor].value.data_mut()[idx] = orig;
        loss
    };
    let values: Vec<Tensor<T>> = net.parameters().iter().map(|p| p.value.clone()).collect();
    let mut probe = CompositeProbe {
        max_error: 0.0,
        probed: 0,
        skipped: 0,
    };
    for (t, v) in values.iter().enumerate() {
        let n = v.len();
        let count = COORDS.min(n);
        for s in 0..count {
            let idx = s * n / count;
            let x = v.data()[idx];
            // Steps are measured after rounding to T.
            let plus = T::from_f64_lossy(x.as_f64() + eps);
            let minus = T::from_f64_lossy(x.as_f64() - eps);
            let (f_plus, f_mid, f_minus) = (loss_at(t, idx, plus), loss_at(t, idx, x), loss_at(t, idx, minus));
            let forward = (f_plus - f_mid) / (plus.as_f64() - x.as_f64());
            let backward = (f_mid - f_minus) / (x.as_f64() - minus.as_f64());
            probe.probed += 1;
            if relative_error(forward, backward) > tolerance && (forward - backward).abs() > 1e-6 {
                probe.skipped += 1;
                continue;
            }
            let numeric = (f_plus - f_minus) / (plus.as_f64() - minus.as_f64());
            probe.max_error = probe
                .max_error
                .max(relative_error(analytic[t].data()[idx].as_f64(), numeric));
        }
    }
    probe
}

/// Runs `name` over `opts.seeds` random instances.
pub fn gradient_check(name: &str, opts: &VerifyOptions) -> CheckOutcome {
    let start = Instant::now();
    let fault = opts.inject_fault.as_deref() == Some(name);
    let composite = name.starts_with("model_");
    let tolerance = if name == "model_focal_f32" {
        COMPOSITE_TOLERANCE
    } else {
        OP_TOLERANCE
    };
    let (mut worst, mut probed, mut skipped) = (0.0f64, 0, 0);
    for seed in 0..opts.seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if composite {
            let p = if name == "model_f64" {
                composite_instance::<f64>(&mut rng, fault, 1e-6, tolerance)
            } else {
                composite_instance::<f32>(&mut rng, fault, 1e-5, tolerance)
            };
            worst = worst.max(p.max_error);
            probed += p.probed;
            skipped += p.skipped;
        } else {
            worst = worst.max(op_instance(name, &mut rng, fault));
        }
    }
    CheckOutcome {
        name: name.to_string(),
        max_error: worst,
        tolerance,
        cases: opts.seeds,
        skipped,
        probed,
        elapsed: start.elapsed(),
    }
}

// ------------------------------------------------------------------ oracles

fn oracle_outcome(name: &str, mismatches: u64, cases: u64, start: Instant) -> CheckOutcome {
    CheckOutcome {
        name: name.to_string(),
        max_error: mismatches as f64,
        tolerance: 0.0,
        cases,
        skipped: 0,
        probed: 0,
        elapsed: start.elapsed(),
    }
}

/// Inclusive-interval IoU by counting frames.
fn frame_iou(a: (usize, usize), b: (usize, usize)) -> f64 {
    let sa: BTreeSet<usize> = (a.0..=a.1).collect();
    let sb: BTreeSet<usize> = (b.0..=b.1).collect();
    sa.intersection(&sb).count() as f64 / sa.union(&sb).count() as f64
}

/// Values on a coarse grid half the time, so argmax and score ties occur.
fn rand_prob(rng: &mut ChaCha8Rng) -> f32 {
    if rng.random_bool(0.5) {
        rng.random_range(0..=10) as f32 / 10.0
    } else {
        rng.random::<f32>()
    }
}

pub fn brute_force_proposals(
    onset: &[f32],
    apex: &[f32],
    offset: &[f32],
    thr: f64,
    k_dis: usize,
) -> Vec<(usize, usize, f64)> {
    let t_len = apex.len();
    let mut out = Vec::new();
    for i in 0..t_len {
        if (apex[i] as f64) < thr {
            continue;
        }
        let before: Vec<usize> = (0..i).filter(|&j| i - j <= k_dis).collect();
        let after: Vec<usize> = (i + 1..t_len).filter(|&j| j - i <= k_dis).collect();
        if before.is_empty() || after.is_empty() {
            continue;
        }
        let pick = |cands: &[usize], seq: &[f32]| {
            let mut best = cands[0];
            for &j in cands {
                let closer = j.abs_diff(i) < best.abs_diff(i);
                if seq[j] > seq[best] || (seq[j] == seq[best] && closer) {
                    best = j;
                }
            }
            best
        };
        let s = pick(&before, onset);
        let e = pick(&after, offset);
        out.push((s, e, onset[s] as f64 * apex[i] as f64 * offset[e] as f64));
    }
    out
}

pub fn proposal_oracle_check(cases: u64) -> CheckOutcome {
    let start = Instant::now();
    let mut mismatches = 0;
    for seed in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t_len = rng.random_range(1..=64);
        let mut seq = || (0..t_len).map(|_| rand_prob(&mut rng)).collect::<Vec<f32>>();
        let (onset, apex, offset) = (seq(), seq(), seq());
        let thr = rng.random_range(0.05..0.95);
        let k_dis = rng.random_range(1..=12);
        let mut maps = ProbabilityMaps::zeros(t_len);
        maps.micro_maps = KindMaps {
            expression: vec![0.0; t_len],
            onset: onset.clone(),
            apex: apex.clone(),
            offset: offset.clone(),
            background: vec![0.0; t_len],
        };
        let got: Vec<(usize, usize, f64)> = generate_proposals(&maps, ExpressionKind::Micro, "v", thr, k_dis)
            .into_iter()
            .map(|p| (p.start, p.end, p.score))
            .collect();
        if got != brute_force_proposals(&onset, &apex, &offset, thr, k_dis) {
            mismatches += 1;
        }
    }
    oracle_outcome("proposal_oracle", mismatches, cases, start)
}

fn random_proposals(rng: &mut ChaCha8Rng, max: usize) -> Vec<Proposal> {
    let n = rng.random_range(0..=max);
    (0..n)
        .map(|_| {
            let start = rng.random_range(0..40);
            Proposal {
                video_id: "v".into(),
                kind: ExpressionKind::Macro,
                start,
                end: start + rng.random_range(1..16),
                score: rand_prob(rng).max(0.01) as f64,
            }
        })
        .collect()
}

pub fn brute_force_nms(proposals: &[Proposal], iou_thr: f64) -> Vec<Proposal> {
    let mut remaining: Vec<Proposal> = proposals.to_vec();
    let mut kept = Vec::new();
    while !remaining.is_empty() {
        let mut top = 0;
        for (i, p) in remaining.iter().enumerate() {
            let q = &remaining[top];
            let better = p.score > q.score
                || (p.score == q.score && p.start < q.start)
                || (p.score == q.score && p.start == q.start && p.end - p.start < q.end - q.start);
            if better {
                top = i;
            }
        }
        let chosen = remaining.remove(top);
        remaining.retain(|p| frame_iou(p.span(), chosen.span()) < iou_thr);
        kept.push(chosen);
    }
    kept
}

pub fn nms_oracle_check(cases: u64) -> CheckOutcome {
    let start = Instant::now();
    let mut mismatches = 0;
    for seed in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let props = random_proposals(&mut rng, 20);
        let thr = rng.random_range(0.1..=1.0);
        if nms(&props, thr) != brute_force_nms(&props, thr) {
            mismatches += 1;
        }
    }
    oracle_outcome("nms_oracle", mismatches, cases, start)
}

/// `(proposal, ground truth)` pairs of the greedy one-to-one matching.
pub fn brute_force_match(proposals: &[Proposal], gts: &[(usize, usize)], k_iou: f64) -> Vec<(usize, usize)> {
    let mut visited = vec![false; proposals.len()];
    let mut claimed = vec![false; gts.len()];
    let mut pairs = Vec::new();
    for _ in 0..proposals.len() {
        let mut next: Option<usize> = None;
        for (i, p) in proposals.iter().enumerate() {
            if visited[i] {
                continue;
            }
            let better = match next {
                None => true,
                Some(n) => {
                    p.score > proposals[n].score || (p.score == proposals[n].score && p.start < proposals[n].start)
                }
            };
            if better {
                next = Some(i);
            }
        }
        let pi = next.expect("unvisited proposal remains");
        visited[pi] = true;
        let mut best: Option<(usize, f64)> = None;
        for (gi, &g) in gts.iter().enumerate() {
            let iou = frame_iou(proposals[pi].span(), g);
            if !claimed[gi] && best.is_none_or(|(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        if let Some((gi, iou)) = best {
            if iou >= k_iou {
                claimed[gi] = true;
                pairs.push((pi, gi));
            }
        }
    }
    pairs
}

pub fn match_oracle_check(cases: u64) -> CheckOutcome {
    let start = Instant::now();
    let mut mismatches = 0;
    for seed in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let props = random_proposals(&mut rng, 20);
        let gts: Vec<(usize, usize)> = random_proposals(&mut rng, 10).iter().map(Proposal::span).collect();
        let k = rng.random_range(0.1..=1.0);
        let report = match_intervals(&props, &gts, k);
        let got: Vec<(usize, usize)> = report.matches.iter().map(|m| (m.proposal, m.ground_truth)).collect();
        let consistent =
            report.tp == got.len() && report.fp + report.tp == props.len() && report.fn_ + report.tp == gts.len();
        if !consistent || got != brute_force_match(&props, &gts, k) {
            mismatches += 1;
        }
    }
    oracle_outcome("match_oracle", mismatches, cases, start)
}

/// Raw counts by looping over every instance, ordered AU pair, and ROI pair.
pub fn brute_force_cooccurrence(annotations: &[AnnotationInstance], map: &AuRoiMap) -> [[u64; NUM_ROIS]; NUM_ROIS] {
    let mut counts = [[0u64; NUM_ROIS]; NUM_ROIS];
    for inst in annotations {
        for a in &inst.aus {
            for b in &inst.aus {
                for (i, row) in counts.iter_mut().enumerate() {
                    for (j, c) in row.iter_mut().enumerate() {
                        let hit =
                            |au: &String, r: usize| map.rois(au).is_some_and(|s| s.iter().any(|x| x.index() == r));
                        if hit(a, i) && hit(b, j) {
                            *c += 1;
                        }
                    }
                }
            }
        }
    }
    counts
}

/// Largest eigenvalue magnitude of a symmetric non-negative matrix by power
/// iteration.
pub fn spectral_radius(m: &[[f64; NUM_ROIS]; NUM_ROIS]) -> f64 {
    let mut v = [1.0 / (NUM_ROIS as f64).sqrt(); NUM_ROIS];
    let mut lambda = 0.0;
    for _ in 0..500 {
        let mut w = [0.0; NUM_ROIS];
        for i in 0..NUM_ROIS {
            w[i] = (0..NUM_ROIS).map(|j| m[i][j] * v[j]).sum();
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        v = w.map(|x| x / norm);
    }
    lambda
}

pub fn adjacency_check(cases: u64) -> CheckOutcome {
    let start = Instant::now();
    let map = default_au_roi_map();
    let aus: Vec<String> = map
        .entries()
        .keys()
        .cloned()
        .chain(["AU43".to_string(), "AU12R".to_string()])
        .collect();
    let mut mismatches = 0;
    for seed in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(0..30);
        let anns: Vec<AnnotationInstance> = (0..n)
            .map(|_| {
                let k = rng.random_range(0..4);
                let set: Vec<String> = (0..k).map(|_| aus[rng.random_range(0..aus.len())].clone()).collect();
                AnnotationInstance::new(0, 1, 2, ExpressionKind::Macro, set)
            })
            .collect();
        let raw = count_cooccurrence(&anns, &map).counts;
        let norm = normalize(&raw);
        let symmetric =
            (0..NUM_ROIS).all(|i| (0..NUM_ROIS).all(|j| raw[i][j] == raw[j][i] && norm[i][j] == norm[j][i]));
        let finite = norm.iter().flatten().all(|v| v.is_finite());
        if raw != brute_force_cooccurrence(&anns, &map) || !symmetric || !finite || spectral_radius(&norm) > 1.0 + 1e-6
        {
            mismatches += 1;
        }
    }
    let zero = normalize(&[[0; NUM_ROIS]; NUM_ROIS]);
    let is_identity = (0..NUM_ROIS).all(|i| (0..NUM_ROIS).all(|j| zero[i][j] == if i == j { 1.0 } else { 0.0 }));
    if !is_identity {
        mismatches += 1;
    }
    oracle_outcome("adjacency", mismatches, cases + 1, start)
}

/// Perturbs one input frame and counts output frames whose change
/// disagrees with `|t − t'| ≤ radius`.
pub fn receptive_field_check(trials: u64) -> CheckOutcome {
    let start = Instant::now();
    let cfg = ModelConfig::default();
    let radius = cfg.receptive_radius();
    let len = 40;
    let mut mismatches = 0;
    for seed in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net: ModelParams<f64> = init_params(&ModelConfig {
            init_seed: seed,
            ..cfg.clone()
        })
        .expect("default config");
        let adj = random_adjacency::<f64>(&mut rng);
        let feats = rand_tensor::<f64>(&mut rng, &[len, NUM_ROIS, NUM_CHANNELS], 1.0);
        let (base, _) = model::forward(&net, &adj, &feats).expect("shapes");
        let t_prime = rng.random_range(0..len);
        let mut bumped = feats.clone();
        let stride = NUM_ROIS * NUM_CHANNELS;
        for v in &mut bumped.data_mut()[t_prime * stride..(t_prime + 1) * stride] {
            *v += 5.0;
        }
        let (moved, _) = model::forward(&net, &adj, &bumped).expect("shapes");
        for t in 0..len {
            let changed = (0..HEAD_CHANNELS).any(|c| base.at2(c, t) != moved.at2(c, t));
            if changed != (t.abs_diff(t_prime) <= radius) {
                mismatches += 1;
            }
        }
    }
    oracle_outcome("receptive_field", mismatches, trials, start)
}

/// Every gradient check, then every oracle.
pub fn run_all(opts: &VerifyOptions) -> VerifyReport {
    let mut checks: Vec<CheckOutcome> = GRADIENT_CHECKS.iter().map(|n| gradient_check(n, opts)).collect();
    checks.push(proposal_oracle_check(opts.oracle_cases));
    checks.push(nms_oracle_check(opts.oracle_cases));
    checks.push(match_oracle_check(opts.oracle_cases));
    checks.push(adjacency_check(opts.oracle_cases));
    checks.push(receptive_field_check(20));
    VerifyReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_run_passes() {
        let opts = VerifyOptions {
            seeds: 5,
            oracle_cases: 30,
            inject_fault: None,
        };
        let report = run_all(&opts);
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn injected_fault_is_caught_and_named() {
        for name in ["relu", "conv1d", "model_focal_f32"] {
            let opts = VerifyOptions {
                seeds: 3,
                oracle_cases: 1,
                inject_fault: Some(name.into()),
            };
            assert!(!gradient_check(name, &opts).passed(), "{name}");
        }
    }

    #[test]
    fn frame_iou_matches_closed_form() {
        assert!((frame_iou((0, 9), (5, 14)) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(frame_iou((0, 4), (10, 14)), 0.0);
    }

    #[test]
    fn brute_force_proposals_hand_trace() {
        let p = brute_force_proposals(
            &[0.1, 0.2, 0.8, 0.3, 0.1, 0.1, 0.1, 0.1, 0.1],
            &[0.1, 0.1, 0.1, 0.1, 0.9, 0.1, 0.1, 0.1, 0.1],
            &[0.1, 0.1, 0.1, 0.1, 0.1, 0.2, 0.3, 0.7, 0.1],
            0.4,
            3,
        );
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].0, p[0].1), (2, 7));
    }
}
