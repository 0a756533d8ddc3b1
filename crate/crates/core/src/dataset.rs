//! Detection and ground-truth files.
//!
//! Detections are JSON Lines, one box per line:
//!
//! ```text
//! {"image_id":"img000","person_id":"A","cx":1311.2,"cy":1002.9,"w":61.0,"h":88.5,"occluded":false}
//! ```
//!
//! Ground truth is a CSV with header `id_a,id_b,distance_in,category`. Ids
//! are either a bare `person_id` (when it is unique in the detections file)
//! or `image_id:person_id`.

use crate::adjust::BoundingBox;
use crate::camera::PixelPoint;
use crate::metrics::PairCategory;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use thiserror::Error;

pub const DEFAULT_IMAGE_SIDE: f64 = 2048.0;

/// Bucket edges in inches: [0, 6 ft), [6 ft, 12 ft], above 12 ft.
pub const BUCKET_EDGES_IN: [f64; 2] = [72.0, 144.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: invalid record: {message}")]
    Validation {
        path: String,
        line: usize,
        message: String,
    },
    #[error("ground truth pair {index} ({id_a}, {id_b}): {message}")]
    Unresolved {
        index: usize,
        id_a: String,
        id_b: String,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DetectionRecord {
    image_id: String,
    person_id: String,
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    occluded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: String,
    pub bbox: BoundingBox,
}

impl Detection {
    pub fn key(&self) -> String {
        format!("{}:{}", self.image_id, self.bbox.person_id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionsFile {
    pub image_side: f64,
    pub detections: Vec<Detection>,
}

impl DetectionsFile {
    pub fn image_center(&self) -> PixelPoint {
        PixelPoint::new(self.image_side / 2.0, self.image_side / 2.0)
    }

    fn validate_box(&self, b: &BoundingBox) -> Result<(), String> {
        if b.person_id.is_empty() {
            return Err("empty person_id".into());
        }
        if !(b.width > 0.0) || !(b.height > 0.0) {
            return Err(format!(
                "person {}: box size must be positive (w={}, h={})",
                b.person_id, b.width, b.height
            ));
        }
        if !b.center.is_finite() || !b.center.within_image(self.image_side) {
            return Err(format!(
                "person {}: center ({}, {}) outside the {} px image",
                b.person_id, b.center.u, b.center.v, self.image_side
            ));
        }
        Ok(())
    }

    /// Preferred id of each detection: the bare person id when it is unique
    /// in the file, otherwise `image_id:person_id`.
    pub fn ids(&self) -> Vec<String> {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for d in &self.detections {
            *counts.entry(d.bbox.person_id.as_str()).or_default() += 1;
        }
        self.detections
            .iter()
            .map(|d| {
                if counts[d.bbox.person_id.as_str()] == 1 {
                    d.bbox.person_id.clone()
                } else {
                    d.key()
                }
            })
            .collect()
    }

    /// Every pair `(i, j)`, `i < j`, of detections in the same image, in file order.
    pub fn image_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.detections.len();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.detections[i].image_id == self.detections[j].image_id)
            .collect()
    }

    /// Index from every accepted id spelling to the detection.
    pub fn index(&self) -> HashMap<String, usize> {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for d in &self.detections {
            *counts.entry(d.bbox.person_id.as_str()).or_default() += 1;
        }
        let mut index = HashMap::new();
        for (i, d) in self.detections.iter().enumerate() {
            index.insert(d.key(), i);
            if counts[d.bbox.person_id.as_str()] == 1 {
                index.insert(d.bbox.person_id.clone(), i);
            }
        }
        index
    }
}

pub fn load_detections(
    path: impl AsRef<Path>,
    image_side: f64,
) -> Result<DetectionsFile, DatasetError> {
    let path = path.as_ref();
    let p = path.display().to_string();
    let file = fs::File::open(path).map_err(|e| DatasetError::Io {
        path: p.clone(),
        message: e.to_string(),
    })?;
    let mut out = DetectionsFile {
        image_side,
        detections: Vec::new(),
    };
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| DatasetError::Io {
            path: p.clone(),
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DetectionRecord =
            serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
                path: p.clone(),
                line: line_no,
                message: e.to_string(),
            })?;
        let invalid = |message: String| DatasetError::Validation {
            path: p.clone(),
            line: line_no,
            message,
        };
        let det = Detection {
            image_id: rec.image_id,
            bbox: BoundingBox {
                person_id: rec.person_id,
                center: PixelPoint::new(rec.cx, rec.cy),
                width: rec.w,
                height: rec.h,
                occluded: rec.occluded,
            },
        };
        out.validate_box(&det.bbox).map_err(invalid)?;
        if !seen.insert(det.key()) {
            return Err(invalid(format!(
                "duplicate person_id {} in image {}",
                det.bbox.person_id, det.image_id
            )));
        }
        out.detections.push(det);
    }
    Ok(out)
}

pub fn save_detections(path: impl AsRef<Path>, file: &DetectionsFile) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let io = |e: std::io::Error| DatasetError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    for d in &file.detections {
        let rec = DetectionRecord {
            image_id: d.image_id.clone(),
            person_id: d.bbox.person_id.clone(),
            cx: d.bbox.center.u,
            cy: d.bbox.center.v,
            w: d.bbox.width,
            h: d.bbox.height,
            occluded: d.bbox.occluded,
        };
        let line = serde_json::to_string(&rec).expect("detection serializes");
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthPair {
    pub id_a: String,
    pub id_b: String,
    pub distance_in: f64,
    pub category: PairCategory,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruthFile {
    pub pairs: Vec<GroundTruthPair>,
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruthFile, DatasetError> {
    let path = path.as_ref();
    let p = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| DatasetError::Io {
        path: p.clone(),
        message: e.to_string(),
    })?;
    let headers = reader.headers().map_err(|e| DatasetError::Parse {
        path: p.clone(),
        line: 1,
        message: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != ["id_a", "id_b", "distance_in", "category"] {
        return Err(DatasetError::Parse {
            path: p,
            line: 1,
            message: format!("unexpected header {headers:?}"),
        });
    }
    let mut pairs = Vec::new();
    for (i, row) in reader.deserialize::<GroundTruthPair>().enumerate() {
        let line = i + 2;
        let pair = row.map_err(|e| DatasetError::Parse {
            path: p.clone(),
            line,
            message: e.to_string(),
        })?;
        if !(pair.distance_in > 0.0) || !pair.distance_in.is_finite() {
            return Err(DatasetError::Validation {
                path: p.clone(),
                line,
                message: format!("distance {} must be positive", pair.distance_in),
            });
        }
        pairs.push(pair);
    }
    Ok(GroundTruthFile { pairs })
}

pub fn save_ground_truth(path: impl AsRef<Path>, gt: &GroundTruthFile) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let err = |e: csv::Error| DatasetError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    if gt.pairs.is_empty() {
        w.write_record(["id_a", "id_b", "distance_in", "category"])
            .map_err(err)?;
    }
    for pair in &gt.pairs {
        w.serialize(pair).map_err(err)?;
    }
    w.flush().map_err(|e| DatasetError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// A ground-truth pair joined with its two detections.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedPair {
    pub id_a: String,
    pub id_b: String,
    pub a: BoundingBox,
    pub b: BoundingBox,
    pub distance_in: f64,
    pub category: PairCategory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub image_side: f64,
    pub pairs: Vec<ResolvedPair>,
}

impl Dataset {
    pub fn image_center(&self) -> PixelPoint {
        PixelPoint::new(self.image_side / 2.0, self.image_side / 2.0)
    }
}

/// Joins ground truth to detections, checking that each stored category
/// agrees with the two boxes' occlusion flags.
pub fn resolve(det: &DetectionsFile, gt: &GroundTruthFile) -> Result<Dataset, DatasetError> {
    let index = det.index();
    let mut pairs = Vec::with_capacity(gt.pairs.len());
    for (i, g) in gt.pairs.iter().enumerate() {
        let unresolved = |message: String| DatasetError::Unresolved {
            index: i,
            id_a: g.id_a.clone(),
            id_b: g.id_b.clone(),
            message,
        };
        let find = |id: &str| {
            index
                .get(id)
                .map(|&k| &det.detections[k].bbox)
                .ok_or_else(|| unresolved(format!("id {id:?} not found (or ambiguous)")))
        };
        let a = find(&g.id_a)?;
        let b = find(&g.id_b)?;
        let derived = PairCategory::from_flags(a.occluded, b.occluded);
        if derived != g.category {
            return Err(unresolved(format!(
                "stored category {} disagrees with occlusion flags ({derived})",
                g.category
            )));
        }
        pairs.push(ResolvedPair {
            id_a: g.id_a.clone(),
            id_b: g.id_b.clone(),
            a: a.clone(),
            b: b.clone(),
            distance_in: g.distance_in,
            category: g.category,
        });
    }
    Ok(Dataset {
        image_side: det.image_side,
        pairs,
    })
}

pub fn load_dataset(
    detections: impl AsRef<Path>,
    ground_truth: impl AsRef<Path>,
    image_side: f64,
) -> Result<Dataset, DatasetError> {
    let det = load_detections(detections, image_side)?;
    let gt = load_ground_truth(ground_truth)?;
    resolve(&det, &gt)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetStats {
    pub vv: usize,
    pub vo: usize,
    pub oo: usize,
    pub all: usize,
    /// Number of distinct measured distances.
    pub distinct_distances: usize,
    pub min_distance_in: Option<f64>,
    pub max_distance_in: Option<f64>,
    /// Pairs below 6 ft, between 6 and 12 ft, above 12 ft.
    pub buckets: [usize; 3],
}

pub fn bucket_of(distance: f64) -> usize {
    if distance < BUCKET_EDGES_IN[0] {
        0
    } else if distance <= BUCKET_EDGES_IN[1] {
        1
    } else {
        2
    }
}

pub fn dataset_stats(gt: &GroundTruthFile) -> DatasetStats {
    let mut s = DatasetStats::default();
    let mut distinct = BTreeMap::new();
    for p in &gt.pairs {
        match p.category {
            PairCategory::VisibleVisible => s.vv += 1,
            PairCategory::VisibleOccluded => s.vo += 1,
            PairCategory::OccludedOccluded => s.oo += 1,
        }
        s.all += 1;
        s.buckets[bucket_of(p.distance_in)] += 1;
        *distinct.entry(p.distance_in.to_bits()).or_insert(0usize) += 1;
        s.min_distance_in = Some(
            s.min_distance_in
                .map_or(p.distance_in, |m| m.min(p.distance_in)),
        );
        s.max_distance_in = Some(
            s.max_distance_in
                .map_or(p.distance_in, |m| m.max(p.distance_in)),
        );
    }
    s.distinct_distances = distinct.len();
    s
}

/// Statistics after checking that the ground truth resolves against the detections.
pub fn dataset_stats_checked(
    det: &DetectionsFile,
    gt: &GroundTruthFile,
) -> Result<DatasetStats, DatasetError> {
    resolve(det, gt)?;
    Ok(dataset_stats(gt))
}
