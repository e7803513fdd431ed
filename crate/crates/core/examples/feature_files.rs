//! Write and read the binary feature format and the annotation CSV.
//!
//!     cargo run --release --example feature_files

use expspot::feature_io::{
    encode_features, format_annotations, load_features, parse_annotations, save_features, AnnotationInstance,
    AnnotationRow, ExpressionKind, FeatureSequence, FRAME_STRIDE,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let frames = 45;
    let data: Vec<f32> = (0..frames * FRAME_STRIDE).map(|i| (i as f32 * 0.01).sin()).collect();
    let seq = FeatureSequence::new("s01_v01", "s01", 30.0, data)?;
    let dir = tempfile_dir()?;
    let path = dir.join("s01_v01.auwf");
    save_features(&seq, &path)?;
    let back = load_features(&path)?;
    println!(
        "{} frames at {} fps, {} bytes, identical after reload: {}",
        back.num_frames(),
        back.fps(),
        encode_features(&seq).len(),
        back.data() == seq.data()
    );

    let rows = vec![AnnotationRow {
        subject_id: "s01".into(),
        video_id: "s01_v01".into(),
        instance: AnnotationInstance::new(10, 14, 20, ExpressionKind::Micro, ["AU1", "au2"]),
    }];
    let csv = format_annotations(&rows);
    print!("{csv}");
    assert_eq!(parse_annotations(&csv)?, rows);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

fn tempfile_dir() -> std::io::Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join(format!("expspot_feature_files_{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
