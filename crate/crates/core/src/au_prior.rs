//! AU co-occurrence prior: counts how often ROI pairs are jointly driven by
//! the action units of annotated expressions, then normalizes the counts
//! into the GCN adjacency.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::feature_io::{au_stem, AnnotationInstance, RoiId, NUM_ROIS};

pub type RawCounts = [[u64; NUM_ROIS]; NUM_ROIS];
pub type Matrix12 = [[f64; NUM_ROIS]; NUM_ROIS];

const DEFAULT_MAP: &str = include_str!("../data/default_au_roi_map.txt");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AuMapError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{au} maps to no ROI")]
    EmptyEntry { au: String },
}

/// Where a ROI sits on the face.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceRegion {
    Upper,
    Middle,
    Lower,
}

/// Region of each ROI index in the default layout: brows 0-3, glabella 4,
/// cheeks 5-6, lower eyelids 7-8, nose/upper lip 9, mouth corners 10-11.
pub fn face_region(roi: RoiId) -> FaceRegion {
    match roi.index() {
        0..=4 | 7 | 8 => FaceRegion::Upper,
        5 | 6 => FaceRegion::Middle,
        _ => FaceRegion::Lower,
    }
}

/// Mapping from an AU stem to the ROIs it moves.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AuRoiMap {
    entries: BTreeMap<String, BTreeSet<RoiId>>,
}

impl AuRoiMap {
    pub fn new(entries: BTreeMap<String, BTreeSet<RoiId>>) -> Result<Self, AuMapError> {
        let mut norm = BTreeMap::new();
        for (au, rois) in entries {
            if rois.is_empty() {
                return Err(AuMapError::EmptyEntry { au });
            }
            let stem = au_stem(&au).ok_or_else(|| AuMapError::Parse {
                line: 0,
                reason: format!("invalid AU label {au:?}"),
            })?;
            norm.entry(stem).or_insert_with(BTreeSet::new).extend(rois);
        }
        Ok(Self { entries: norm })
    }

    /// ROIs for an AU label; side-coded labels fall back to their numeric stem.
    pub fn rois(&self, au: &str) -> Option<&BTreeSet<RoiId>> {
        self.entries.get(&au_stem(au)?)
    }

    pub fn entries(&self) -> &BTreeMap<String, BTreeSet<RoiId>> {
        &self.entries
    }

    /// Union of the ROIs of every AU in `aus`; unknown AUs are ignored.
    pub fn rois_of_set<'a, I>(&self, aus: I) -> BTreeSet<RoiId>
    where
        I: IntoIterator<Item = &'a String>,
    {
        aus.into_iter()
            .filter_map(|a| self.rois(a))
            .flat_map(|s| s.iter().copied())
            .collect()
    }
}

impl FromStr for AuRoiMap {
    type Err = AuMapError;

    /// Parses `AU<k>: <roi>,<roi>,...` lines; `#` starts a comment.
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (au, rois) = body.split_once(':').ok_or_else(|| AuMapError::Parse {
                line,
                reason: "expected `AU<k>: <roi>,...`".into(),
            })?;
            let au = au.trim();
            if au_stem(au).is_none() {
                return Err(AuMapError::Parse {
                    line,
                    reason: format!("invalid AU label {au:?}"),
                });
            }
            let mut set = BTreeSet::new();
            for tok in rois.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                let roi = tok
                    .parse::<usize>()
                    .ok()
                    .and_then(RoiId::new)
                    .ok_or_else(|| AuMapError::Parse {
                        line,
                        reason: format!("ROI {tok:?} is not in 0..{NUM_ROIS}"),
                    })?;
                set.insert(roi);
            }
            if set.is_empty() {
                return Err(AuMapError::EmptyEntry { au: au.to_string() });
            }
            entries.insert(au.to_string(), set);
        }
        AuRoiMap::new(entries)
    }
}

impl fmt::Display for AuRoiMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut aus: Vec<&String> = self.entries.keys().collect();
        aus.sort_by_key(|a| (a[2..].parse::<u32>().unwrap_or(u32::MAX), a.as_str()));
        for au in aus {
            let rois: Vec<String> = self.entries[au].iter().map(|r| r.to_string()).collect();
            writeln!(f, "{au}: {}", rois.join(","))?;
        }
        Ok(())
    }
}

/// The shipped FACS-based AU→ROI table (`data/default_au_roi_map.txt`).
pub fn default_au_roi_map() -> AuRoiMap {
    DEFAULT_MAP.parse().expect("bundled AU map is valid")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cooccurrence {
    pub counts: RawCounts,
    /// AU labels that had no entry in the map, in first-seen order.
    pub unknown_aus: Vec<String>,
}

/// Counts ROI co-activation over every ordered AU pair (self-pairs included)
/// of every instance.
pub fn count_cooccurrence<'a, I>(annotations: I, map: &AuRoiMap) -> Cooccurrence
where
    I: IntoIterator<Item = &'a AnnotationInstance>,
{
    let mut counts = [[0u64; NUM_ROIS]; NUM_ROIS];
    let mut unknown_aus: Vec<String> = Vec::new();
    for inst in annotations {
        let mapped: Vec<&BTreeSet<RoiId>> = inst
            .aus
            .iter()
            .filter_map(|au| {
                let rois = map.rois(au);
                if rois.is_none() && !unknown_aus.contains(au) {
                    unknown_aus.push(au.clone());
                }
                rois
            })
            .collect();
        for a in &mapped {
            for b in &mapped {
                for ra in a.iter() {
                    for rb in b.iter() {
                        counts[ra.index()][rb.index()] += 1;
                    }
                }
            }
        }
    }
    Cooccurrence { counts, unknown_aus }
}

/// Symmetric renormalization with self-loops: `D^-1/2 (A' + I) D^-1/2`.
pub fn normalize(raw: &RawCounts) -> Matrix12 {
    let mut a = [[0f64; NUM_ROIS]; NUM_ROIS];
    for i in 0..NUM_ROIS {
        for j in 0..NUM_ROIS {
            a[i][j] = raw[i][j] as f64 + if i == j { 1.0 } else { 0.0 };
        }
    }
    let inv_sqrt: Vec<f64> = a.iter().map(|row| row.iter().sum::<f64>().powf(-0.5)).collect();
    for i in 0..NUM_ROIS {
        for j in 0..NUM_ROIS {
            a[i][j] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    a
}

/// Raw counts together with the normalized matrix fed to the GCN.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    pub raw: RawCounts,
    pub normalized: Matrix12,
}

impl AdjacencyMatrix {
    pub fn from_raw(raw: RawCounts) -> Self {
        Self {
            normalized: normalize(&raw),
            raw,
        }
    }

    pub fn from_annotations<'a, I>(annotations: I, map: &AuRoiMap) -> Self
    where
        I: IntoIterator<Item = &'a AnnotationInstance>,
    {
        Self::from_raw(count_cooccurrence(annotations, map).counts)
    }

    pub fn identity() -> Self {
        Self::from_raw([[0; NUM_ROIS]; NUM_ROIS])
    }

    /// Every entry `1/12`: every node sees the mean of all nodes. Used as the
    /// no-prior baseline.
    pub fn uniform() -> Self {
        Self {
            raw: [[1; NUM_ROIS]; NUM_ROIS],
            normalized: [[1.0 / NUM_ROIS as f64; NUM_ROIS]; NUM_ROIS],
        }
    }

    /// Normalized matrix flattened row-major as f32.
    pub fn normalized_f32(&self) -> Vec<f32> {
        self.normalized.iter().flatten().map(|&v| v as f32).collect()
    }
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::feature_io::ExpressionKind;

    fn inst(aus: &[&str]) -> AnnotationInstance {
        AnnotationInstance::new(0, 1, 2, ExpressionKind::Macro, aus.iter().copied())
    }

    #[test]
    fn empty_annotations_give_zero_counts() {
        let c = count_cooccurrence(std::iter::empty(), &default_au_roi_map());
        assert_eq!(c.counts, [[0; 12]; 12]);
    }

    #[test]
    fn single_au_expands_to_its_roi_block() {
        let map: AuRoiMap = "AU5: 3,4".parse().unwrap();
        let c = count_cooccurrence(&[inst(&["AU5"])], &map).counts;
        for i in 0..12 {
            for j in 0..12 {
                let expected = u64::from((i == 3 || i == 4) && (j == 3 || j == 4));
                assert_eq!(c[i][j], expected, "({i},{j})");
            }
        }
    }

    #[test]
    fn unknown_aus_are_recorded_not_fatal() {
        let c = count_cooccurrence(&[inst(&["AU99", "AU12"])], &default_au_roi_map());
        assert_eq!(c.unknown_aus, vec!["AU99".to_string()]);
        assert_eq!(c.counts[10][11], 1);
    }

    #[test]
    fn side_coded_au_uses_stem() {
        let map = default_au_roi_map();
        assert_eq!(map.rois("AU12R"), map.rois("AU12"));
    }

    #[test]
    fn zero_raw_normalizes_to_identity() {
        let n = normalize(&[[0; 12]; 12]);
        for i in 0..12 {
            for j in 0..12 {
                assert_eq!(n[i][j], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn all_ones_raw_normalizes_to_thirteenths() {
        // A' + I = J + I, every degree is 13.
        let n = normalize(&[[1; 12]; 12]);
        for i in 0..12 {
            for j in 0..12 {
                let expected = if i == j { 2.0 / 13.0 } else { 1.0 / 13.0 };
                assert!((n[i][j] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn default_map_shape() {
        let map = default_au_roi_map();
        assert!(map.entries().values().all(|s| !s.is_empty()));
        for au in ["AU1", "AU2", "AU4"] {
            assert!(
                map.rois(au)
                    .unwrap()
                    .iter()
                    .all(|&r| face_region(r) == FaceRegion::Upper),
                "{au}"
            );
        }
        for au in ["AU12", "AU14", "AU15"] {
            assert!(
                map.rois(au)
                    .unwrap()
                    .iter()
                    .all(|&r| face_region(r) == FaceRegion::Lower),
                "{au}"
            );
        }
        let covered: BTreeSet<RoiId> = map.entries().values().flatten().copied().collect();
        assert_eq!(covered.len(), NUM_ROIS);
    }

    #[test]
    fn map_round_trips_through_text() {
        let map = default_au_roi_map();
        let text = map.to_string();
        assert_eq!(text.parse::<AuRoiMap>().unwrap(), map);
    }

    #[test]
    fn map_parse_errors() {
        assert!(matches!(
            "AU1: 12".parse::<AuRoiMap>(),
            Err(AuMapError::Parse { line: 1, .. })
        ));
        assert!(matches!("AU1:".parse::<AuRoiMap>(), Err(AuMapError::EmptyEntry { .. })));
        assert!(matches!(
            "# c\nfoo: 1".parse::<AuRoiMap>(),
            Err(AuMapError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn counts_are_order_invariant_and_monotone() {
        let map = default_au_roi_map();
        let list = vec![inst(&["AU1", "AU2"]), inst(&["AU12"]), inst(&["AU4", "AU7", "AU9"])];
        let mut rev = list.clone();
        rev.reverse();
        let a = count_cooccurrence(&list, &map).counts;
        assert_eq!(a, count_cooccurrence(&rev, &map).counts);
        let mut more = list.clone();
        more.push(inst(&["AU6", "AU12"]));
        let b = count_cooccurrence(&more, &map).counts;
        for i in 0..12 {
            for j in 0..12 {
                assert!(b[i][j] >= a[i][j]);
                assert_eq!(a[i][j], a[j][i]);
            }
        }
    }
}
