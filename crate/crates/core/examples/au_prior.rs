//! Build the AU co-occurrence adjacency from synthetic annotations and
//! compare it with the uniform baseline.
//!
//!     cargo run --release --example au_prior

use expspot::au_prior::{count_cooccurrence, default_au_roi_map, AdjacencyMatrix};
use expspot::feature_io::NUM_ROIS;
use expspot::synthdata::{generate_dataset, SynthConfig};
use expspot::verify::spectral_radius;

fn print_matrix(name: &str, m: &[[f64; NUM_ROIS]; NUM_ROIS]) {
    println!("{name}:");
    for row in m {
        println!(
            "  {}",
            row.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(" ")
        );
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let map = default_au_roi_map();
    println!("AU -> ROI map:\n{map}");

    let ds = generate_dataset(&SynthConfig::default())?;
    let insts: Vec<_> = ds.annotations.values().flatten().cloned().collect();
    let co = count_cooccurrence(&insts, &map);
    println!("{} instances, unknown AUs: {:?}", insts.len(), co.unknown_aus);
    for (i, row) in co.counts.iter().enumerate() {
        println!("  roi {i:>2}: {row:?}");
    }

    let adj = AdjacencyMatrix::from_raw(co.counts);
    print_matrix("normalized co-occurrence adjacency", &adj.normalized);
    println!("spectral radius {:.6}", spectral_radius(&adj.normalized));
    println!(
        "uniform baseline entry {:.4}",
        AdjacencyMatrix::uniform().normalized[0][0]
    );
    Ok(())
}
