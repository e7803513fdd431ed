//! Full leave-one-subject-out benchmark on a synthetic dataset: every video
//! is spotted by the model of the fold that held out its subject.
//!
//!     cargo run --release --example loso_benchmark -- [seed] [cooccurrence|uniform]

use std::path::Path;
use std::time::Instant;

use expspot::au_prior::default_au_roi_map;
use expspot::config::PipelineConfig;
use expspot::evaluation::{evaluate, DEFAULT_K_IOU};
use expspot::spotting::spot_video;
use expspot::synthdata::{generate_dataset, SynthConfig};
use expspot::training::{loso, PriorSource};

const CONFIG: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/synthetic_benchmark.txt");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let prior = match args.next().as_deref() {
        None | Some("cooccurrence") => PriorSource::Cooccurrence(default_au_roi_map()),
        Some("uniform") => PriorSource::Uniform,
        Some(other) => return Err(format!("unknown prior {other:?}").into()),
    };
    let cfg = PipelineConfig::load(Path::new(CONFIG))?;
    let ds = generate_dataset(&SynthConfig {
        seed,
        ..SynthConfig::default()
    })?;

    let t0 = Instant::now();
    let folds = loso(&ds, &cfg.train, &cfg.model, &prior, 1)?;
    for f in folds.values() {
        println!(
            "fold {}: loss {:.4} -> {:.4} over {} steps",
            f.held_out, f.initial_loss, f.final_loss, f.steps
        );
    }
    let mut proposals = Vec::new();
    for v in &ds.videos {
        proposals.extend(spot_video(&folds[&v.subject_id].checkpoint, v, &cfg.train, &cfg.spot)?);
    }
    let (summary, _) = evaluate(&proposals, &ds.annotations, DEFAULT_K_IOU);
    println!("{} proposals in {:.0}s", proposals.len(), t0.elapsed().as_secs_f64());
    print!("{summary}");
    Ok(())
}
