//! Proposal generation, NMS and matching on hand-written probability maps.
//!
//!     cargo run --release --example spot_and_eval

use std::collections::BTreeMap;

use expspot::evaluation::{evaluate, DEFAULT_K_IOU};
use expspot::feature_io::{AnnotationInstance, ExpressionKind};
use expspot::model::ProbabilityMaps;
use expspot::spotting::{format_proposals, generate_proposals, nms};

fn main() {
    let mut maps = ProbabilityMaps::zeros(9);
    let m = maps.kind_mut(ExpressionKind::Macro);
    m.apex = vec![0.1, 0.1, 0.1, 0.1, 0.9, 0.5, 0.1, 0.1, 0.1];
    m.onset = vec![0.1, 0.2, 0.8, 0.3, 0.1, 0.1, 0.1, 0.1, 0.1];
    m.offset = vec![0.1, 0.1, 0.1, 0.1, 0.1, 0.2, 0.3, 0.7, 0.1];

    // Two apexes clear the threshold and yield overlapping candidates.
    let raw = generate_proposals(&maps, ExpressionKind::Macro, "demo", 0.4, 3);
    print!("candidates:\n{}", format_proposals(&raw));
    let kept = nms(&raw, 0.5);
    print!("after NMS:\n{}", format_proposals(&kept));

    let mut gts = BTreeMap::new();
    gts.insert(
        "demo".to_string(),
        vec![AnnotationInstance::new(2, 4, 7, ExpressionKind::Macro, ["AU4"])],
    );
    let (summary, reports) = evaluate(&kept, &gts, DEFAULT_K_IOU);
    for (video, kind, r) in &reports {
        println!("{video} {kind}: tp {} fp {} fn {}", r.tp, r.fp, r.fn_);
    }
    print!("{summary}");
}
