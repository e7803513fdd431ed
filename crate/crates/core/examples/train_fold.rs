//! Train one leave-one-subject-out fold on synthetic data, round-trip the
//! checkpoint through a file, and score the held-out subject.
//!
//!     cargo run --release --example train_fold -- [epochs]

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use expspot::au_prior::default_au_roi_map;
use expspot::config::PipelineConfig;
use expspot::evaluation::{evaluate, DEFAULT_K_IOU};
use expspot::model::{load_checkpoint, save_checkpoint};
use expspot::spotting::spot_video;
use expspot::synthdata::{generate_dataset, SynthConfig};
use expspot::training::{train_fold, PriorSource};

const CONFIG: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/synthetic_benchmark.txt");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = PipelineConfig::load(Path::new(CONFIG))?;
    if let Some(epochs) = std::env::args().nth(1) {
        cfg.train.epochs = epochs.parse()?;
    }
    let ds = generate_dataset(&SynthConfig::default())?;
    let held_out = "s01";

    let t0 = Instant::now();
    let prior = PriorSource::Cooccurrence(default_au_roi_map());
    let fold = train_fold(&ds, held_out, &cfg.train, &cfg.model, &prior)?;
    let secs = t0.elapsed().as_secs_f64();
    println!(
        "{} steps in {secs:.1}s ({:.2} ms/step), loss {:.4} -> {:.4}",
        fold.steps,
        1e3 * secs / fold.steps as f64,
        fold.initial_loss,
        fold.final_loss
    );

    let path = std::env::temp_dir().join(format!("expspot_{held_out}_{}.auwc", std::process::id()));
    save_checkpoint(&fold.checkpoint, &path)?;
    let ckpt = load_checkpoint(&path)?;
    std::fs::remove_file(&path)?;

    let mut proposals = Vec::new();
    for v in ds.videos_of(held_out) {
        proposals.extend(spot_video(&ckpt, v, &cfg.train, &cfg.spot)?);
    }
    let gts: BTreeMap<_, _> = ds
        .videos_of(held_out)
        .map(|v| (v.video_id.clone(), ds.annotations_for(&v.video_id).to_vec()))
        .collect();
    let (summary, _) = evaluate(&proposals, &gts, DEFAULT_K_IOU);
    print!("{summary}");
    Ok(())
}
