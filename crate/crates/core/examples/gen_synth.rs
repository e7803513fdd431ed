//! Generate a synthetic dataset, print per-video instance counts, and write
//! it in the on-disk layout the CLI reads.
//!
//!     cargo run --release --example gen_synth -- [out_dir] [seed]

use std::path::PathBuf;

use expspot::feature_io::{load_dataset, validate_dataset, ExpressionKind};
use expspot::synthdata::{generate_dataset, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("expspot_synth"));
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let cfg = SynthConfig {
        seed,
        ..SynthConfig::default()
    };
    let ds = generate_dataset(&cfg)?;

    println!("{:<10} {:>7} {:>6} {:>6}", "video", "frames", "macro", "micro");
    for v in &ds.videos {
        let insts = ds.annotations_for(&v.video_id);
        let count = |k| insts.iter().filter(|i| i.kind == k).count();
        println!(
            "{:<10} {:>7} {:>6} {:>6}",
            v.video_id,
            v.num_frames(),
            count(ExpressionKind::Macro),
            count(ExpressionKind::Micro)
        );
    }
    if let Some(first) = ds.annotations.values().flatten().next() {
        println!(
            "first instance: {:?} [{}, {}] apex {} AUs {:?}",
            first.kind, first.onset, first.offset, first.apex, first.aus
        );
    }

    ds.save_dir(&out)?;
    let back = load_dataset(&out)?;
    assert_eq!(back.videos.len(), ds.videos.len());
    println!(
        "wrote {} ({} violations on reload)",
        out.display(),
        validate_dataset(&back).len()
    );
    Ok(())
}
