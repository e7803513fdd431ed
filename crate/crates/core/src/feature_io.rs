//! On-disk data contracts for motion features and expression annotations,
//! plus the in-memory [`Dataset`] model.
//!
//! Feature files (`.auwf`) are little-endian binary:
//!
//! | field   | type | value                     |
//! |---------|------|---------------------------|
//! | magic   | 4 B  | `AUWF`                    |
//! | version | u16  | 1                         |
//! | fps     | f32  |                           |
//! | T       | u32  | frame count               |
//! | N       | u16  | 12 (ROIs)                 |
//! | C       | u16  | 2 (flow channels)         |
//! | payload | f32  | T·N·C values, `[frame][roi][channel]` |
//!
//! Annotation files are UTF-8 CSV with the header
//! `subject_id,video_id,kind,onset,apex,offset,aus`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

pub const NUM_ROIS: usize = 12;
pub const NUM_CHANNELS: usize = 2;
/// Values per frame in a feature tensor.
pub const FRAME_STRIDE: usize = NUM_ROIS * NUM_CHANNELS;

pub const FEATURE_MAGIC: &[u8; 4] = b"AUWF";
pub const FEATURE_VERSION: u16 = 1;
/// magic + version + fps + T + N + C
pub const FEATURE_HEADER_LEN: usize = 4 + 2 + 4 + 4 + 2 + 2;
pub const FEATURE_EXTENSION: &str = "auwf";
pub const ANNOTATION_HEADER: &str = "subject_id,video_id,kind,onset,apex,offset,aus";

#[derive(Debug, Error)]
pub enum FeatureIoError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("bad magic {found:?}, expected \"AUWF\"")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported feature format version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("non-finite value at frame {frame}, roi {roi}, channel {channel}")]
    NonFinite { frame: usize, roi: usize, channel: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid fps {0}")]
    InvalidFps(f32),
}

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: malformed row: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: expected onset <= apex <= offset, got {onset},{apex},{offset}")]
    Order {
        line: usize,
        onset: usize,
        apex: usize,
        offset: usize,
    },
    #[error("line {line}: unknown expression kind {kind:?}")]
    UnknownKind { line: usize, kind: String },
}

/// Index of one of the twelve facial regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RoiId(u8);

impl RoiId {
    pub fn new(index: usize) -> Option<Self> {
        (index < NUM_ROIS).then_some(RoiId(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = RoiId> {
        (0..NUM_ROIS as u8).map(RoiId)
    }
}

impl fmt::Display for RoiId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExpressionKind {
    Macro,
    Micro,
}

impl ExpressionKind {
    pub const ALL: [ExpressionKind; 2] = [ExpressionKind::Macro, ExpressionKind::Micro];

    pub fn as_str(self) -> &'static str {
        match self {
            ExpressionKind::Macro => "macro",
            ExpressionKind::Micro => "micro",
        }
    }

    /// Position in [`ExpressionKind::ALL`]; also the head's channel group.
    pub fn index(self) -> usize {
        match self {
            ExpressionKind::Macro => 0,
            ExpressionKind::Micro => 1,
        }
    }
}

impl fmt::Display for ExpressionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExpressionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "macro" => Ok(ExpressionKind::Macro),
            "micro" => Ok(ExpressionKind::Micro),
            other => Err(other.to_string()),
        }
    }
}

/// Per-video ROI motion features, `T × 12 × 2` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub video_id: String,
    pub subject_id: String,
    fps: f32,
    frames: Vec<f32>,
}

impl FeatureSequence {
    pub fn new(
        video_id: impl Into<String>,
        subject_id: impl Into<String>,
        fps: f32,
        frames: Vec<f32>,
    ) -> Result<Self, FeatureIoError> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(FeatureIoError::InvalidFps(fps));
        }
        if frames.is_empty() || !frames.len().is_multiple_of(FRAME_STRIDE) {
            return Err(FeatureIoError::ShapeMismatch(format!(
                "{} values is not a positive multiple of {}x{}",
                frames.len(),
                NUM_ROIS,
                NUM_CHANNELS
            )));
        }
        if let Some(pos) = frames.iter().position(|v| !v.is_finite()) {
            return Err(FeatureIoError::NonFinite {
                frame: pos / FRAME_STRIDE,
                roi: (pos % FRAME_STRIDE) / NUM_CHANNELS,
                channel: pos % NUM_CHANNELS,
            });
        }
        Ok(Self {
            video_id: video_id.into(),
            subject_id: subject_id.into(),
            fps,
            frames,
        })
    }

    pub fn zeros(
        video_id: impl Into<String>,
        subject_id: impl Into<String>,
        fps: f32,
        num_frames: usize,
    ) -> Result<Self, FeatureIoError> {
        Self::new(video_id, subject_id, fps, vec![0.0; num_frames * FRAME_STRIDE])
    }

    pub fn fps(&self) -> f32 {
        self.fps
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len() / FRAME_STRIDE
    }

    pub fn data(&self) -> &[f32] {
        &self.frames
    }

    /// The 24 values of frame `t`, ROI-major.
    pub fn frame(&self, t: usize) -> &[f32] {
        &self.frames[t * FRAME_STRIDE..(t + 1) * FRAME_STRIDE]
    }

    pub fn value(&self, t: usize, roi: usize, channel: usize) -> f32 {
        self.frames[t * FRAME_STRIDE + roi * NUM_CHANNELS + channel]
    }

    /// Converts a duration to a whole number of frames at this video's rate.
    pub fn seconds_to_frames(&self, seconds: f64) -> usize {
        (seconds * self.fps as f64).round().max(0.0) as usize
    }
}

pub fn encode_features(seq: &FeatureSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(FEATURE_HEADER_LEN + seq.frames.len() * 4);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&seq.fps.to_le_bytes());
    out.extend_from_slice(&(seq.num_frames() as u32).to_le_bytes());
    out.extend_from_slice(&(NUM_ROIS as u16).to_le_bytes());
    out.extend_from_slice(&(NUM_CHANNELS as u16).to_le_bytes());
    for v in &seq.frames {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses a feature file body. Ids are supplied by the caller.
pub fn decode_features(bytes: &[u8], video_id: &str, subject_id: &str) -> Result<FeatureSequence, FeatureIoError> {
    if bytes.len() < 4 || &bytes[..4] != FEATURE_MAGIC {
        return Err(FeatureIoError::BadMagic {
            found: bytes[..bytes.len().min(4)].to_vec(),
        });
    }
    if bytes.len() < FEATURE_HEADER_LEN {
        return Err(FeatureIoError::Truncated {
            expected: FEATURE_HEADER_LEN,
            found: bytes.len(),
        });
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]);
    let version = u16_at(4);
    if version != FEATURE_VERSION {
        return Err(FeatureIoError::UnsupportedVersion(version));
    }
    let fps = f32::from_bits(u32_at(6));
    let t = u32_at(10) as usize;
    let n = u16_at(14) as usize;
    let c = u16_at(16) as usize;
    if n != NUM_ROIS || c != NUM_CHANNELS {
        return Err(FeatureIoError::ShapeMismatch(format!(
            "header declares N={n}, C={c}; expected N={NUM_ROIS}, C={NUM_CHANNELS}"
        )));
    }
    if t == 0 {
        return Err(FeatureIoError::ShapeMismatch("header declares T=0".into()));
    }
    let expected = FEATURE_HEADER_LEN + t * n * c * 4;
    if bytes.len() < expected {
        return Err(FeatureIoError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(FeatureIoError::TrailingBytes(bytes.len() - expected));
    }
    let frames = bytes[FEATURE_HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    FeatureSequence::new(video_id, subject_id, fps, frames)
}

/// Loads a feature file. The video id is the file stem and the subject id
/// is the name of the containing directory.
pub fn load_features(path: &Path) -> Result<FeatureSequence, FeatureIoError> {
    let bytes = fs::read(path).map_err(|source| FeatureIoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let video_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let subject_id = path
        .parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_features(&bytes, &video_id, &subject_id)
}

pub fn save_features(seq: &FeatureSequence, path: &Path) -> Result<(), FeatureIoError> {
    fs::write(path, encode_features(seq)).map_err(|source| FeatureIoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// One ground-truth expression instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationInstance {
    pub onset: usize,
    pub apex: usize,
    pub offset: usize,
    pub kind: ExpressionKind,
    pub aus: BTreeSet<String>,
}

impl AnnotationInstance {
    pub fn new<I, S>(onset: usize, apex: usize, offset: usize, kind: ExpressionKind, aus: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            onset,
            apex,
            offset,
            kind,
            aus: aus.into_iter().filter_map(|a| normalize_au(a.as_ref())).collect(),
        }
    }

    pub fn is_ordered(&self) -> bool {
        self.onset <= self.apex && self.apex <= self.offset
    }

    /// Inclusive frame count.
    pub fn len(&self) -> usize {
        self.offset - self.onset + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Upper-cases an AU label and ensures the `AU` prefix (`"au4"`, `"4"` → `"AU4"`).
/// Returns `None` for labels without a numeric code.
pub fn normalize_au(raw: &str) -> Option<String> {
    let upper = raw.trim().to_ascii_uppercase();
    let rest = upper.strip_prefix("AU").unwrap_or(&upper);
    if !rest.starts_with(|c: char| c.is_ascii_digit()) {
        return None;
    }
    Some(format!("AU{rest}"))
}

/// Numeric stem of an AU label: `"AU12R"` → `"AU12"`.
pub fn au_stem(au: &str) -> Option<String> {
    let norm = normalize_au(au)?;
    let digits: String = norm[2..].chars().take_while(|c| c.is_ascii_digit()).collect();
    let trimmed = digits.trim_start_matches('0');
    Some(format!("AU{}", if trimmed.is_empty() { "0" } else { trimmed }))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationRow {
    pub subject_id: String,
    pub video_id: String,
    pub instance: AnnotationInstance,
}

pub fn parse_annotations(text: &str) -> Result<Vec<AnnotationRow>, AnnotationError> {
    let mut rows = Vec::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim().trim_start_matches('\u{feff}') == ANNOTATION_HEADER => {}
        Some((_, header)) => {
            return Err(AnnotationError::Malformed {
                line: 1,
                reason: format!("unexpected header {header:?}"),
            })
        }
        None => return Ok(rows),
    }
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = raw.split(',').map(str::trim).collect();
        if cols.len() != 7 {
            return Err(AnnotationError::Malformed {
                line,
                reason: format!("expected 7 columns, found {}", cols.len()),
            });
        }
        if cols[0].is_empty() || cols[1].is_empty() {
            return Err(AnnotationError::Malformed {
                line,
                reason: "empty subject_id or video_id".into(),
            });
        }
        let kind = cols[2]
            .parse::<ExpressionKind>()
            .map_err(|kind| AnnotationError::UnknownKind { line, kind })?;
        let frame = |s: &str, name: &str| {
            s.parse::<usize>().map_err(|_| AnnotationError::Malformed {
                line,
                reason: format!("{name} {s:?} is not a frame index"),
            })
        };
        let onset = frame(cols[3], "onset")?;
        let apex = frame(cols[4], "apex")?;
        let offset = frame(cols[5], "offset")?;
        if !(onset <= apex && apex <= offset) {
            return Err(AnnotationError::Order {
                line,
                onset,
                apex,
                offset,
            });
        }
        let mut aus = BTreeSet::new();
        for au in cols[6].split(';').map(str::trim).filter(|a| !a.is_empty()) {
            let norm = normalize_au(au).ok_or_else(|| AnnotationError::Malformed {
                line,
                reason: format!("invalid AU label {au:?}"),
            })?;
            aus.insert(norm);
        }
        rows.push(AnnotationRow {
            subject_id: cols[0].to_string(),
            video_id: cols[1].to_string(),
            instance: AnnotationInstance {
                onset,
                apex,
                offset,
                kind,
                aus,
            },
        });
    }
    Ok(rows)
}

pub fn load_annotations(path: &Path) -> Result<Vec<AnnotationRow>, AnnotationError> {
    let text = fs::read_to_string(path).map_err(|source| AnnotationError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_annotations(&text)
}

pub fn format_annotations(rows: &[AnnotationRow]) -> String {
    let mut out = String::from(ANNOTATION_HEADER);
    out.push('\n');
    for r in rows {
        let aus: Vec<&str> = r.instance.aus.iter().map(String::as_str).collect();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.subject_id,
            r.video_id,
            r.instance.kind,
            r.instance.onset,
            r.instance.apex,
            r.instance.offset,
            aus.join(";")
        ));
    }
    out
}

pub fn write_annotations(path: &Path, rows: &[AnnotationRow]) -> io::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(format_annotations(rows).as_bytes())
}

/// A collection of videos with their ground-truth annotations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub videos: Vec<FeatureSequence>,
    pub annotations: BTreeMap<String, Vec<AnnotationInstance>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    MissingVideo {
        video_id: String,
    },
    DuplicateVideo {
        video_id: String,
    },
    OutOfRange {
        video_id: String,
        offset: usize,
        num_frames: usize,
    },
    Unordered {
        video_id: String,
        onset: usize,
        apex: usize,
        offset: usize,
    },
    Overlap {
        video_id: String,
        kind: ExpressionKind,
        first: (usize, usize),
        second: (usize, usize),
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingVideo { video_id } => {
                write!(f, "annotation references missing video {video_id}")
            }
            Violation::DuplicateVideo { video_id } => write!(f, "duplicate video id {video_id}"),
            Violation::OutOfRange {
                video_id,
                offset,
                num_frames,
            } => write!(
                f,
                "video {video_id}: offset {offset} out of range for {num_frames} frames"
            ),
            Violation::Unordered {
                video_id,
                onset,
                apex,
                offset,
            } => write!(f, "video {video_id}: instance ({onset},{apex},{offset}) is not ordered"),
            Violation::Overlap {
                video_id,
                kind,
                first,
                second,
            } => write!(
                f,
                "video {video_id}: overlapping {kind} instances {first:?} and {second:?}"
            ),
        }
    }
}

impl Dataset {
    pub fn from_rows(videos: Vec<FeatureSequence>, rows: Vec<AnnotationRow>) -> Self {
        let mut annotations: BTreeMap<String, Vec<AnnotationInstance>> = BTreeMap::new();
        for row in rows {
            annotations.entry(row.video_id).or_default().push(row.instance);
        }
        for list in annotations.values_mut() {
            list.sort_by_key(|a| (a.onset, a.offset, a.kind));
        }
        Self { videos, annotations }
    }

    pub fn subjects(&self) -> BTreeSet<String> {
        self.videos.iter().map(|v| v.subject_id.clone()).collect()
    }

    pub fn video(&self, video_id: &str) -> Option<&FeatureSequence> {
        self.videos.iter().find(|v| v.video_id == video_id)
    }

    pub fn annotations_for(&self, video_id: &str) -> &[AnnotationInstance] {
        self.annotations.get(video_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn videos_of<'a>(&'a self, subject: &'a str) -> impl Iterator<Item = &'a FeatureSequence> + 'a {
        self.videos.iter().filter(move |v| v.subject_id == subject)
    }

    /// Flattens annotations back into CSV rows, ordered by video then onset.
    pub fn rows(&self) -> Vec<AnnotationRow> {
        let mut rows = Vec::new();
        for v in &self.videos {
            for a in self.annotations_for(&v.video_id) {
                rows.push(AnnotationRow {
                    subject_id: v.subject_id.clone(),
                    video_id: v.video_id.clone(),
                    instance: a.clone(),
                });
            }
        }
        rows
    }

    /// Writes `features/<subject>/<video>.auwf` and `annotations.csv` under `dir`.
    pub fn save_dir(&self, dir: &Path) -> Result<(), FeatureIoError> {
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| FeatureIoError::Io { path, source }
        };
        for v in &self.videos {
            let sub = dir.join("features").join(&v.subject_id);
            fs::create_dir_all(&sub).map_err(io_err(&sub))?;
            save_features(v, &sub.join(format!("{}.{FEATURE_EXTENSION}", v.video_id)))?;
        }
        let csv = dir.join("annotations.csv");
        write_annotations(&csv, &self.rows()).map_err(io_err(&csv))
    }
}

#[derive(Debug, Error)]
pub enum DatasetLoadError {
    #[error(transparent)]
    Features(#[from] FeatureIoError),
    #[error(transparent)]
    Annotations(#[from] AnnotationError),
    #[error("dataset at {0} has no feature files")]
    Empty(PathBuf),
}

/// Loads a directory laid out as written by [`Dataset::save_dir`]. A missing
/// `annotations.csv` yields an unannotated dataset.
pub fn load_dataset(dir: &Path) -> Result<Dataset, DatasetLoadError> {
    let features_dir = dir.join("features");
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| FeatureIoError::Io { path, source }
    };
    let mut subject_dirs: Vec<PathBuf> = fs::read_dir(&features_dir)
        .map_err(io_err(&features_dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subject_dirs.sort();
    let mut videos = Vec::new();
    for sub in subject_dirs {
        let mut files: Vec<PathBuf> = fs::read_dir(&sub)
            .map_err(io_err(&sub))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == FEATURE_EXTENSION))
            .collect();
        files.sort();
        for f in files {
            videos.push(load_features(&f)?);
        }
    }
    if videos.is_empty() {
        return Err(DatasetLoadError::Empty(dir.to_path_buf()));
    }
    let csv = dir.join("annotations.csv");
    let rows = if csv.exists() {
        load_annotations(&csv)?
    } else {
        Vec::new()
    };
    Ok(Dataset::from_rows(videos, rows))
}

/// Checks every dataset invariant; an empty result means the dataset is consistent.
pub fn validate_dataset(ds: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for v in &ds.videos {
        if !seen.insert(v.video_id.as_str()) {
            out.push(Violation::DuplicateVideo {
                video_id: v.video_id.clone(),
            });
        }
    }
    for (video_id, list) in &ds.annotations {
        let Some(video) = ds.video(video_id) else {
            if !list.is_empty() {
                out.push(Violation::MissingVideo {
                    video_id: video_id.clone(),
                });
            }
            continue;
        };
        let t = video.num_frames();
        for a in list {
            if !a.is_ordered() {
                out.push(Violation::Unordered {
                    video_id: video_id.clone(),
                    onset: a.onset,
                    apex: a.apex,
                    offset: a.offset,
                });
            } else if a.offset >= t {
                out.push(Violation::OutOfRange {
                    video_id: video_id.clone(),
                    offset: a.offset,
                    num_frames: t,
                });
            }
        }
        for kind in ExpressionKind::ALL {
            let mut spans: Vec<(usize, usize)> = list
                .iter()
                .filter(|a| a.kind == kind)
                .map(|a| (a.onset, a.offset))
                .collect();
            spans.sort_unstable();
            for w in spans.windows(2) {
                if w[1].0 <= w[0].1 {
                    out.push(Violation::Overlap {
                        video_id: video_id.clone(),
                        kind,
                        first: w[0],
                        second: w[1],
                    });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(t: usize) -> FeatureSequence {
        let frames = (0..t * FRAME_STRIDE).map(|i| (i as f32 * 0.37).sin()).collect();
        FeatureSequence::new("v1", "s1", 30.0, frames).unwrap()
    }

    #[test]
    fn round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("s1");
        fs::create_dir(&sub).unwrap();
        let path = sub.join("v1.auwf");
        let s = seq(17);
        save_features(&s, &path).unwrap();
        let back = load_features(&path).unwrap();
        assert_eq!(back, s);
        assert_eq!(
            back.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            s.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn file_size_matches_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.auwf");
        save_features(&FeatureSequence::zeros("z", "s", 30.0, 3).unwrap(), &path).unwrap();
        // 18-byte header + 3 frames * 12 rois * 2 channels * 4 bytes
        assert_eq!(fs::metadata(&path).unwrap().len(), 18 + 288);
    }

    #[test]
    fn single_zero_frame() {
        let s = FeatureSequence::zeros("v", "s", 200.0, 1).unwrap();
        let back = decode_features(&encode_features(&s), "v", "s").unwrap();
        assert_eq!(back.num_frames(), 1);
        assert!(back.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn truncated_payload_is_reported() {
        let mut bytes = encode_features(&seq(10));
        bytes.truncate(FEATURE_HEADER_LEN + 9 * FRAME_STRIDE * 4);
        assert!(matches!(
            decode_features(&bytes, "v", "s"),
            Err(FeatureIoError::Truncated { .. })
        ));
    }

    #[test]
    fn each_corruption_has_its_own_error() {
        let good = encode_features(&seq(2));

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(
            decode_features(&bad, "v", "s"),
            Err(FeatureIoError::BadMagic { .. })
        ));

        let mut bad = good.clone();
        bad.push(0);
        assert!(matches!(
            decode_features(&bad, "v", "s"),
            Err(FeatureIoError::TrailingBytes(1))
        ));

        let mut bad = good.clone();
        bad[14] = 13;
        assert!(matches!(
            decode_features(&bad, "v", "s"),
            Err(FeatureIoError::ShapeMismatch(_))
        ));

        let mut bad = good.clone();
        let nan = f32::NAN.to_le_bytes();
        let at = FEATURE_HEADER_LEN + (FRAME_STRIDE + 5) * 4;
        bad[at..at + 4].copy_from_slice(&nan);
        assert!(matches!(
            decode_features(&bad, "v", "s"),
            Err(FeatureIoError::NonFinite {
                frame: 1,
                roi: 2,
                channel: 1
            })
        ));

        let mut bad = good;
        bad[4] = 9;
        assert!(matches!(
            decode_features(&bad, "v", "s"),
            Err(FeatureIoError::UnsupportedVersion(9))
        ));
    }

    #[test]
    fn save_to_unwritable_path_fails() {
        let err = save_features(&seq(1), Path::new("/nonexistent-dir/x/y.auwf")).unwrap_err();
        assert!(matches!(err, FeatureIoError::Io { .. }));
    }

    #[test]
    fn roi_id_bounds() {
        assert!(RoiId::new(11).is_some());
        assert!(RoiId::new(12).is_none());
        assert_eq!(RoiId::all().count(), 12);
    }

    #[test]
    fn parses_annotation_row() {
        let text = format!("{ANNOTATION_HEADER}\ns1,v1,micro,10,14,19,AU4;AU7\n");
        let rows = parse_annotations(&text).unwrap();
        assert_eq!(rows.len(), 1);
        let a = &rows[0].instance;
        assert_eq!((a.onset, a.apex, a.offset, a.kind), (10, 14, 19, ExpressionKind::Micro));
        assert_eq!(a.aus.iter().cloned().collect::<Vec<_>>(), vec!["AU4", "AU7"]);
    }

    #[test]
    fn annotation_errors() {
        let bad_order = format!("{ANNOTATION_HEADER}\ns1,v1,macro,10,20,15,AU4\n");
        assert!(matches!(
            parse_annotations(&bad_order),
            Err(AnnotationError::Order { line: 2, .. })
        ));
        let bad_kind = format!("{ANNOTATION_HEADER}\ns1,v1,mega,10,14,19,\n");
        assert!(matches!(
            parse_annotations(&bad_kind),
            Err(AnnotationError::UnknownKind { .. })
        ));
        let short = format!("{ANNOTATION_HEADER}\ns1,v1,macro,10,14\n");
        assert!(matches!(
            parse_annotations(&short),
            Err(AnnotationError::Malformed { .. })
        ));
    }

    #[test]
    fn empty_aus_and_normalization() {
        let text = format!("{ANNOTATION_HEADER}\ns1,v1,macro,1,2,3,\ns1,v1,micro,5,6,7,au12r; 4\n");
        let rows = parse_annotations(&text).unwrap();
        assert!(rows[0].instance.aus.is_empty());
        assert_eq!(
            rows[1].instance.aus.iter().cloned().collect::<Vec<_>>(),
            vec!["AU12R", "AU4"]
        );
        assert_eq!(au_stem("AU12R").as_deref(), Some("AU12"));
        assert_eq!(au_stem("au07").as_deref(), Some("AU7"));
    }

    #[test]
    fn validation_reports_violations() {
        let v = FeatureSequence::zeros("v1", "s1", 30.0, 50).unwrap();
        let ok = Dataset::from_rows(
            vec![v.clone()],
            vec![AnnotationRow {
                subject_id: "s1".into(),
                video_id: "v1".into(),
                instance: AnnotationInstance::new(10, 12, 20, ExpressionKind::Macro, ["AU4"]),
            }],
        );
        assert!(validate_dataset(&ok).is_empty());

        let missing = Dataset::from_rows(
            vec![v.clone()],
            vec![AnnotationRow {
                subject_id: "s1".into(),
                video_id: "ghost".into(),
                instance: AnnotationInstance::new(1, 2, 3, ExpressionKind::Micro, Vec::<&str>::new()),
            }],
        );
        let errs = validate_dataset(&missing);
        assert_eq!(
            errs,
            vec![Violation::MissingVideo {
                video_id: "ghost".into()
            }]
        );

        let out_of_range = Dataset::from_rows(
            vec![v],
            vec![AnnotationRow {
                subject_id: "s1".into(),
                video_id: "v1".into(),
                instance: AnnotationInstance::new(40, 45, 50, ExpressionKind::Macro, ["AU1"]),
            }],
        );
        let errs = validate_dataset(&out_of_range);
        assert_eq!(errs.len(), 1);
        assert!(matches!(
            errs[0],
            Violation::OutOfRange {
                offset: 50,
                num_frames: 50,
                ..
            }
        ));
    }
}
