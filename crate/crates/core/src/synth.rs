//! Synthetic ground truth rendered through the forward camera model.
//!
//! Two generators: a virtual calibration grid (coplanar corners at a fixed
//! height, exact pairwise distances) used to train the regressor, and
//! scenes of virtual people whose bounding boxes are synthesised from the
//! projections of their head and lowest visible body point.

use crate::adjust::BoundingBox;
use crate::camera::{project, CameraParams, PixelPoint, WorldPoint};
use crate::dataset::{
    bucket_of, DatasetError, Detection, DetectionsFile, GroundTruthFile, GroundTruthPair,
    DEFAULT_IMAGE_SIDE,
};
use crate::metrics::PairCategory;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Shoulder width used for the tangential extent of synthetic boxes.
pub const BODY_WIDTH_IN: f64 = 18.0;

/// Room footprint, 72 ft x 28 ft, centered under the camera.
pub const ROOM_LENGTH_IN: f64 = 864.0;
pub const ROOM_WIDTH_IN: f64 = 336.0;

pub const CLASSROOM_MIN_DISTANCE_IN: f64 = 11.63;
pub const CLASSROOM_MAX_DISTANCE_IN: f64 = 701.96;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("grid corner ({row}, {col}) does not project into the image")]
    GridOutsideFov { row: usize, col: usize },
    #[error("person {index} does not project into the image")]
    PersonOutsideFov { index: usize },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub spacing: f64,
    pub rows: usize,
    pub cols: usize,
    /// Height of the grid plane above the floor.
    pub plane_height: f64,
    /// Floor position of corner (0, 0); `None` centers the grid under the camera.
    pub origin: Option<(f64, f64)>,
}

impl Default for GridSpec {
    fn default() -> Self {
        // Covers the whole 72 x 28 ft room.
        Self {
            spacing: 12.5,
            rows: 27,
            cols: 70,
            plane_height: 32.5,
            origin: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCorner {
    pub row: usize,
    pub col: usize,
    pub world: WorldPoint,
    pub pixel: PixelPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "GridPairRecord", into = "GridPairRecord")]
pub struct GridPair {
    pub a: PixelPoint,
    pub b: PixelPoint,
    pub distance: f64,
    /// Absolute index offsets between the two corners.
    pub d_row: usize,
    pub d_col: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct GridPairRecord {
    u_a: f64,
    v_a: f64,
    u_b: f64,
    v_b: f64,
    distance_in: f64,
    d_row: usize,
    d_col: usize,
}

impl From<GridPairRecord> for GridPair {
    fn from(r: GridPairRecord) -> Self {
        GridPair {
            a: PixelPoint::new(r.u_a, r.v_a),
            b: PixelPoint::new(r.u_b, r.v_b),
            distance: r.distance_in,
            d_row: r.d_row,
            d_col: r.d_col,
        }
    }
}

impl From<GridPair> for GridPairRecord {
    fn from(p: GridPair) -> Self {
        GridPairRecord {
            u_a: p.a.u,
            v_a: p.a.v,
            u_b: p.b.u,
            v_b: p.b.v,
            distance_in: p.distance,
            d_row: p.d_row,
            d_col: p.d_col,
        }
    }
}

/// Writes grid pairs as CSV `u_a,v_a,u_b,v_b,distance_in,d_row,d_col`.
pub fn save_grid_pairs(path: impl AsRef<Path>, pairs: &[GridPair]) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let err = |e: csv::Error| DatasetError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for p in pairs {
        w.serialize(p).map_err(err)?;
    }
    w.flush().map_err(|e| err(e.into()))
}

pub fn load_grid_pairs(path: impl AsRef<Path>) -> Result<Vec<GridPair>, DatasetError> {
    let path = path.as_ref();
    let p = path.display().to_string();
    let mut r = csv::Reader::from_path(path).map_err(|e| DatasetError::Io {
        path: p.clone(),
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (i, rec) in r.deserialize::<GridPair>().enumerate() {
        let pair = rec.map_err(|e| DatasetError::Parse {
            path: p.clone(),
            line: i + 2,
            message: e.to_string(),
        })?;
        if !pair.a.is_finite() || !pair.b.is_finite() || !(pair.distance >= 0.0) {
            return Err(DatasetError::Validation {
                path: p.clone(),
                line: i + 2,
                message: "non-finite pixel or negative distance".into(),
            });
        }
        out.push(pair);
    }
    Ok(out)
}

pub fn grid_corners(
    spec: &GridSpec,
    params: &CameraParams,
    image_side: f64,
) -> Result<Vec<GridCorner>, SynthError> {
    if !(spec.spacing > 0.0) || spec.rows == 0 || spec.cols == 0 {
        return Err(SynthError::InvalidSpec(
            "grid needs positive spacing and extent".into(),
        ));
    }
    if !(spec.plane_height < params.mount_height) {
        return Err(SynthError::InvalidSpec(format!(
            "grid plane at {} in is not below the camera at {} in",
            spec.plane_height, params.mount_height
        )));
    }
    let (x0, y0) = spec.origin.unwrap_or((
        -spec.spacing * (spec.cols - 1) as f64 / 2.0,
        -spec.spacing * (spec.rows - 1) as f64 / 2.0,
    ));
    let z = params.mount_height - spec.plane_height;
    let mut corners = Vec::with_capacity(spec.rows * spec.cols);
    for row in 0..spec.rows {
        for col in 0..spec.cols {
            let world = WorldPoint::new(
                x0 + col as f64 * spec.spacing,
                y0 + row as f64 * spec.spacing,
                z,
            );
            let pixel = project(&world, params)
                .ok()
                .filter(|p| p.within_image(image_side))
                .ok_or(SynthError::GridOutsideFov { row, col })?;
            corners.push(GridCorner {
                row,
                col,
                world,
                pixel,
            });
        }
    }
    Ok(corners)
}

/// Inverse of the row-major upper-triangle enumeration of pairs `(i, j)`, `i < j`.
fn pair_from_index(k: usize, n: usize) -> (usize, usize) {
    // Row i starts at offset(i) = i * (2n - i - 1) / 2.
    let offset = |i: usize| i * (2 * n - i - 1) / 2;
    let (mut lo, mut hi) = (0usize, n - 1);
    while lo + 1 < hi {
        let mid = (lo + hi) / 2;
        if offset(mid) <= k {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let i = lo;
    (i, i + 1 + (k - offset(i)))
}

/// Samples up to `pair_budget` distinct corner pairs, in random order, with
/// their exact in-plane distances `spacing * sqrt(d_row^2 + d_col^2)`.
pub fn generate_grid(
    spec: &GridSpec,
    params: &CameraParams,
    pair_budget: usize,
    seed: u64,
    quantize: bool,
) -> Result<Vec<GridPair>, SynthError> {
    let mut corners = grid_corners(spec, params, DEFAULT_IMAGE_SIDE)?;
    if quantize {
        corners.iter_mut().for_each(|c| c.pixel = c.pixel.rounded());
    }
    let n = corners.len();
    if n < 2 {
        return Ok(Vec::new());
    }
    let total = n * (n - 1) / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = index::sample(&mut rng, total, pair_budget.min(total)).into_vec();
    // Sampling order is algorithm dependent; fix it, then shuffle so any
    // prefix is an unbiased subsample.
    picks.sort_unstable();
    picks.shuffle(&mut rng);
    Ok(picks
        .into_iter()
        .map(|k| {
            let (i, j) = pair_from_index(k, n);
            let (a, b) = (&corners[i], &corners[j]);
            let d_row = a.row.abs_diff(b.row);
            let d_col = a.col.abs_diff(b.col);
            GridPair {
                a: a.pixel,
                b: b.pixel,
                distance: spec.spacing * ((d_row * d_row + d_col * d_col) as f64).sqrt(),
                d_row,
                d_col,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualPerson {
    pub id: String,
    /// Floor position in inches, camera-centered.
    pub x: f64,
    pub y: f64,
    pub height: f64,
    /// Fraction of the body hidden from the bottom up, in `[0, 1)`.
    #[serde(default)]
    pub occlusion_fraction: f64,
}

impl VirtualPerson {
    pub fn new(id: impl Into<String>, x: f64, y: f64, height: f64) -> Self {
        Self {
            id: id.into(),
            x,
            y,
            height,
            occlusion_fraction: 0.0,
        }
    }

    pub fn occluded(mut self, fraction: f64) -> Self {
        self.occlusion_fraction = fraction;
        self
    }

    pub fn is_occluded(&self) -> bool {
        self.occlusion_fraction > 0.0
    }

    /// Floor distance to another person.
    pub fn floor_distance(&self, other: &VirtualPerson) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneOptions {
    pub quantize: bool,
    pub image_side: f64,
    pub body_width: f64,
}

impl Default for SceneOptions {
    fn default() -> Self {
        Self {
            quantize: false,
            image_side: DEFAULT_IMAGE_SIDE,
            body_width: BODY_WIDTH_IN,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image_id: String,
    pub image_side: f64,
    pub people: Vec<VirtualPerson>,
    pub boxes: Vec<BoundingBox>,
    /// Row-major `n x n` floor distances.
    pub distances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenePair {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
    pub category: PairCategory,
}

impl Scene {
    pub fn len(&self) -> usize {
        self.people.len()
    }

    pub fn is_empty(&self) -> bool {
        self.people.is_empty()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distances[i * self.people.len() + j]
    }

    pub fn category(&self, i: usize, j: usize) -> PairCategory {
        PairCategory::from_flags(self.boxes[i].occluded, self.boxes[j].occluded)
    }

    pub fn pairs(&self) -> Vec<ScenePair> {
        let n = self.len();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| ScenePair {
                i,
                j,
                distance: self.distance(i, j),
                category: self.category(i, j),
            })
            .collect()
    }

    pub fn detections(&self) -> DetectionsFile {
        DetectionsFile {
            image_side: self.image_side,
            detections: self
                .boxes
                .iter()
                .map(|b| Detection {
                    image_id: self.image_id.clone(),
                    bbox: b.clone(),
                })
                .collect(),
        }
    }

    /// Ground truth for every pair, ids qualified by image.
    pub fn ground_truth(&self) -> GroundTruthFile {
        let id = |k: usize| format!("{}:{}", self.image_id, self.boxes[k].person_id);
        GroundTruthFile {
            pairs: self
                .pairs()
                .into_iter()
                .map(|p| GroundTruthPair {
                    id_a: id(p.i),
                    id_b: id(p.j),
                    distance_in: p.distance,
                    category: p.category,
                })
                .collect(),
        }
    }
}

/// Bounding box of one virtual person.
///
/// The radial extent spans the projections of the head and of the lowest
/// visible body point; the center is the projection of the midpoint of the
/// visible body segment, so an unoccluded person's center is exactly the
/// image of their mid-height point. Width is `body_width` projected at that
/// midpoint.
pub fn synthesize_box(
    person: &VirtualPerson,
    params: &CameraParams,
    opts: &SceneOptions,
    index: usize,
) -> Result<BoundingBox, SynthError> {
    let h = person.height;
    if !(h > 0.0 && h < 2.0 * params.mount_height) {
        return Err(SynthError::InvalidSpec(format!(
            "person {index}: height {h} in"
        )));
    }
    if !(0.0..1.0).contains(&person.occlusion_fraction) {
        return Err(SynthError::InvalidSpec(format!(
            "person {index}: occlusion fraction {}",
            person.occlusion_fraction
        )));
    }
    let b = params.mount_height;
    let low = h * person.occlusion_fraction;
    let mid = (h + low) / 2.0;
    let at = |x: f64, y: f64, above_floor: f64| {
        project(&WorldPoint::new(x, y, b - above_floor), params)
            .ok()
            .filter(|p| p.within_image(opts.image_side))
            .ok_or(SynthError::PersonOutsideFov { index })
    };
    let head = at(person.x, person.y, h)?;
    let foot = at(person.x, person.y, low)?;
    let center = at(person.x, person.y, mid)?;

    let rho = person.x.hypot(person.y);
    let (tx, ty) = if rho > 0.0 {
        (-person.y / rho, person.x / rho)
    } else {
        (1.0, 0.0)
    };
    let half = opts.body_width / 2.0;
    let left = at(person.x - half * tx, person.y - half * ty, mid)?;
    let right = at(person.x + half * tx, person.y + half * ty, mid)?;

    let mut bbox = BoundingBox {
        person_id: person.id.clone(),
        center,
        width: left.distance(&right),
        // A person straight below the camera has no radial extent.
        height: head.distance(&foot).max(1.0),
        occluded: person.is_occluded(),
    };
    if opts.quantize {
        bbox.center = bbox.center.rounded();
        bbox.width = bbox.width.round().max(1.0);
        bbox.height = bbox.height.round().max(1.0);
        if !bbox.center.within_image(opts.image_side) {
            return Err(SynthError::PersonOutsideFov { index });
        }
    }
    Ok(bbox)
}

pub fn generate_scene(
    image_id: impl Into<String>,
    people: &[VirtualPerson],
    params: &CameraParams,
    opts: &SceneOptions,
) -> Result<Scene, SynthError> {
    let boxes = people
        .iter()
        .enumerate()
        .map(|(i, p)| synthesize_box(p, params, opts, i))
        .collect::<Result<Vec<_>, _>>()?;
    let n = people.len();
    let mut distances = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = people[i].floor_distance(&people[j]);
            distances[i * n + j] = d;
            distances[j * n + i] = d;
        }
    }
    Ok(Scene {
        image_id: image_id.into(),
        image_side: opts.image_side,
        people: people.to_vec(),
        boxes,
        distances,
    })
}

/// Random crowd over the room floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrowdSpec {
    pub people: usize,
    pub height_min: f64,
    pub height_max: f64,
    /// Probability that a person is occluded.
    pub occluded_probability: f64,
    /// Hidden fraction of an occluded person.
    pub occlusion_fraction: f64,
    /// Minimum floor distance between two people.
    pub min_separation: f64,
}

impl Default for CrowdSpec {
    fn default() -> Self {
        Self {
            people: 30,
            height_min: 60.0,
            height_max: 76.0,
            occluded_probability: 0.0,
            occlusion_fraction: 0.5,
            min_separation: 18.0,
        }
    }
}

/// People placed uniformly in the room by rejection sampling, ids `p0`, `p1`, ...
pub fn random_crowd(spec: &CrowdSpec, seed: u64) -> Result<Vec<VirtualPerson>, SynthError> {
    if !(spec.height_min > 0.0 && spec.height_min <= spec.height_max) {
        return Err(SynthError::InvalidSpec(
            "height range must be positive and ordered".into(),
        ));
    }
    if !(0.0..=1.0).contains(&spec.occluded_probability)
        || !(0.0..1.0).contains(&spec.occlusion_fraction)
    {
        return Err(SynthError::InvalidSpec(
            "occlusion probability or fraction out of range".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (hx, hy) = (ROOM_LENGTH_IN / 2.0 - 12.0, ROOM_WIDTH_IN / 2.0 - 12.0);
    let mut people: Vec<VirtualPerson> = Vec::with_capacity(spec.people);
    let mut attempts = 0usize;
    while people.len() < spec.people {
        attempts += 1;
        if attempts > 1000 * (spec.people + 1) {
            return Err(SynthError::InvalidSpec(format!(
                "cannot place {} people {} in apart in the room",
                spec.people, spec.min_separation
            )));
        }
        let x = rng.random_range(-hx..hx);
        let y = rng.random_range(-hy..hy);
        if people
            .iter()
            .any(|p| (p.x - x).hypot(p.y - y) < spec.min_separation)
        {
            continue;
        }
        let height = if spec.height_min == spec.height_max {
            spec.height_min
        } else {
            rng.random_range(spec.height_min..spec.height_max)
        };
        let mut p = VirtualPerson::new(format!("p{}", people.len()), x, y, height);
        if rng.random_bool(spec.occluded_probability) {
            p = p.occluded(spec.occlusion_fraction);
        }
        people.push(p);
    }
    Ok(people)
}

/// A labelled floor location in the test room.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub label: String,
    pub x: f64,
    pub y: f64,
}

impl Marker {
    pub fn distance(&self, other: &Marker) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

fn in_room(x: f64, y: f64) -> bool {
    x.abs() <= ROOM_LENGTH_IN / 2.0 - 12.0 && y.abs() <= ROOM_WIDTH_IN / 2.0 - 12.0
}

/// Floor markers for a classroom layout: ten lettered locations `A`-`J` and
/// numbered locations `1`-`21` along three lines.
///
/// `A` and `J` sit at the ends of a 701.96 in baseline; every other marker
/// lies strictly inside the circle on that baseline, which makes A-J the
/// largest pairwise distance. Marker `11` is placed 11.63 in from `G` and all
/// other pairs are further apart, which makes G-11 the smallest.
pub fn classroom_markers(seed: u64) -> Vec<Marker> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = CLASSROOM_MAX_DISTANCE_IN / 2.0;
    let inner = radius - 10.0;
    let min_sep = 16.0;
    let fits = |markers: &[Marker], x: f64, y: f64, skip: Option<usize>| {
        x.hypot(y) < inner
            && in_room(x, y)
            && markers
                .iter()
                .enumerate()
                .filter(|(k, _)| Some(*k) != skip)
                .all(|(_, m)| (m.x - x).hypot(m.y - y) >= min_sep)
    };
    let mut markers = vec![
        Marker {
            label: "A".into(),
            x: -radius,
            y: 0.0,
        },
        Marker {
            label: "J".into(),
            x: radius,
            y: 0.0,
        },
    ];
    for label in ["B", "C", "D", "E", "F", "G", "H", "I"] {
        loop {
            let x = rng.random_range(-inner..inner);
            let y = rng.random_range(-150.0..150.0);
            if fits(&markers, x, y, None)
                && markers.iter().all(|m| {
                    m.distance(&Marker {
                        label: String::new(),
                        x,
                        y,
                    }) > 60.0
                })
            {
                markers.push(Marker {
                    label: label.into(),
                    x,
                    y,
                });
                break;
            }
        }
    }
    // Three dashed lines of seven numbered markers.
    let mut number = 1;
    while number <= 21 {
        let line_start = number;
        let (mut x, mut y) = (
            rng.random_range(-250.0..250.0),
            rng.random_range(-120.0..120.0),
        );
        let heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let mut placed = Vec::new();
        for _ in 0..7 {
            let step = rng.random_range(20.0..70.0);
            let turn: f64 = rng.random_range(-0.4..0.4);
            let (nx, ny) = (
                x + step * (heading + turn).cos(),
                y + step * (heading + turn).sin(),
            );
            if number == 11 {
                // Placed relative to G below.
                placed.push(number);
                number += 1;
                continue;
            }
            if !fits(&markers, nx, ny, None) {
                break;
            }
            markers.push(Marker {
                label: number.to_string(),
                x: nx,
                y: ny,
            });
            placed.push(number);
            number += 1;
            x = nx;
            y = ny;
        }
        if placed.len() < 7 {
            // Line ran into the wall or another marker; retry it from scratch.
            markers.retain(|m| m.label.parse::<usize>().map_or(true, |k| k < line_start));
            number = line_start;
        }
    }
    let g = markers.iter().position(|m| m.label == "G").unwrap();
    let (gx, gy) = (markers[g].x, markers[g].y);
    loop {
        let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let (x, y) = (
            gx + CLASSROOM_MIN_DISTANCE_IN * a.cos(),
            gy + CLASSROOM_MIN_DISTANCE_IN * a.sin(),
        );
        if fits(&markers, x, y, Some(g)) {
            markers.push(Marker {
                label: "11".into(),
                x,
                y,
            });
            break;
        }
    }
    markers.sort_by_key(|m| {
        (
            m.label.parse::<usize>().is_ok(),
            m.label.parse::<usize>().unwrap_or(0),
            m.label.clone(),
        )
    });
    markers
}

/// A scene with one person on every marker, heights drawn from 60-76 in
/// and roughly a third of the people hidden below the waist.
pub fn generate_classroom_layout(seed: u64, params: &CameraParams) -> Result<Scene, SynthError> {
    let markers = classroom_markers(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let people: Vec<_> = markers
        .iter()
        .map(|m| {
            let p = VirtualPerson::new(m.label.clone(), m.x, m.y, rng.random_range(60.0..76.0));
            if rng.random_bool(1.0 / 3.0) {
                p.occluded(0.5)
            } else {
                p
            }
        })
        .collect();
    generate_scene(
        format!("layout{seed}"),
        &people,
        params,
        &SceneOptions::default(),
    )
}

/// Height of every participant in the fixed-height collection.
pub const FIXED_HEIGHT_IN: f64 = 70.08;

/// Target composition of a classroom pair collection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollectionSpec {
    /// V-V, V-O, O-O pair counts.
    pub categories: [usize; 3],
    /// Pairs per distance bucket.
    pub buckets: [usize; 3],
    /// Distinct marker pairs (hence distinct distances) used.
    pub distinct: [usize; 3],
    /// `None` draws every height uniformly from 60-76 in.
    pub fixed_height: Option<f64>,
}

impl CollectionSpec {
    pub const FIXED_HEIGHT: CollectionSpec = CollectionSpec {
        categories: [35, 32, 6],
        buckets: [25, 15, 33],
        distinct: [25, 15, 33],
        fixed_height: Some(FIXED_HEIGHT_IN),
    };

    pub const VARYING_HEIGHT: CollectionSpec = CollectionSpec {
        categories: [100, 126, 30],
        buckets: [45, 73, 138],
        distinct: [12, 19, 36],
        fixed_height: None,
    };

    pub fn total(&self) -> usize {
        self.categories.iter().sum()
    }

    fn check(&self) -> Result<(), SynthError> {
        let ok = self.buckets.iter().sum::<usize>() == self.total()
            && (0..3).all(|k| self.distinct[k] >= 1 && self.distinct[k] <= self.buckets[k]);
        if ok {
            Ok(())
        } else {
            Err(SynthError::InvalidSpec(format!(
                "inconsistent collection {self:?}"
            )))
        }
    }
}

/// Rounds to the 0.01 in resolution of tape measurements.
pub fn round_centi(d: f64) -> f64 {
    (d * 100.0).round() / 100.0
}

/// One image per pair, two people standing on a pair of floor markers.
///
/// Marker pairs are drawn per distance bucket with distinct rounded
/// distances; G-11 and A-J are always included, so the shortest and longest
/// distances are 11.63 in and 701.96 in. Occluded people are hidden below
/// the waist. Centers are rounded to whole pixels.
pub fn generate_collection(
    name: &str,
    spec: &CollectionSpec,
    seed: u64,
    params: &CameraParams,
) -> Result<(DetectionsFile, GroundTruthFile), SynthError> {
    spec.check()?;
    let markers = classroom_markers(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc011_ec71);

    let label = |m: &Marker| m.label.clone();
    let find = |l: &str| markers.iter().position(|m| m.label == l).unwrap();
    let forced = [(find("G"), find("11")), (find("A"), find("J"))];
    let mut by_bucket: [Vec<(usize, usize, f64)>; 3] = Default::default();
    for i in 0..markers.len() {
        for j in i + 1..markers.len() {
            if forced.contains(&(i, j)) || forced.contains(&(j, i)) {
                continue;
            }
            let d = round_centi(markers[i].distance(&markers[j]));
            by_bucket[bucket_of(d)].push((i, j, d));
        }
    }
    let mut chosen: [Vec<(usize, usize, f64)>; 3] = Default::default();
    let mut seen: Vec<f64> = Vec::new();
    for &(i, j) in &forced {
        let d = round_centi(markers[i].distance(&markers[j]));
        seen.push(d);
        chosen[bucket_of(d)].push((i, j, d));
    }
    for k in 0..3 {
        by_bucket[k].shuffle(&mut rng);
        for &(i, j, d) in &by_bucket[k] {
            if chosen[k].len() == spec.distinct[k] {
                break;
            }
            if !seen.contains(&d) {
                seen.push(d);
                chosen[k].push((i, j, d));
            }
        }
        if chosen[k].len() < spec.distinct[k] {
            return Err(SynthError::InvalidSpec(format!(
                "layout {seed} has only {} distinct pairs in bucket {k}",
                chosen[k].len()
            )));
        }
    }
    // Every distinct pair once, then repeats within the bucket.
    let mut instances = Vec::with_capacity(spec.total());
    for k in 0..3 {
        instances.extend(chosen[k].iter().copied());
        for _ in chosen[k].len()..spec.buckets[k] {
            instances.push(chosen[k][rng.random_range(0..chosen[k].len())]);
        }
    }
    instances.shuffle(&mut rng);
    let mut categories: Vec<PairCategory> = PairCategory::ALL
        .iter()
        .zip(spec.categories)
        .flat_map(|(&c, n)| std::iter::repeat_n(c, n))
        .collect();
    categories.shuffle(&mut rng);

    let opts = SceneOptions {
        quantize: true,
        ..SceneOptions::default()
    };
    let mut det = DetectionsFile {
        image_side: opts.image_side,
        detections: Vec::new(),
    };
    let mut gt = GroundTruthFile { pairs: Vec::new() };
    for (k, (&(i, j, d), cat)) in instances.iter().zip(&categories).enumerate() {
        let (occ_a, occ_b) = match cat {
            PairCategory::VisibleVisible => (false, false),
            PairCategory::OccludedOccluded => (true, true),
            PairCategory::VisibleOccluded => {
                let first = rng.random_bool(0.5);
                (first, !first)
            }
        };
        let mut person = |m: &Marker, occluded: bool| {
            let h = spec
                .fixed_height
                .unwrap_or_else(|| rng.random_range(60.0..76.0));
            let p = VirtualPerson::new(label(m), m.x, m.y, h);
            if occluded {
                p.occluded(0.5)
            } else {
                p
            }
        };
        let people = [person(&markers[i], occ_a), person(&markers[j], occ_b)];
        let scene = generate_scene(format!("{name}-{k:03}"), &people, params, &opts)?;
        det.detections.extend(scene.detections().detections);
        let mut pair = scene.ground_truth().pairs.remove(0);
        pair.distance_in = d;
        gt.pairs.push(pair);
    }
    Ok((det, gt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{dataset_stats, resolve};

    fn cam() -> CameraParams {
        CameraParams::synthetic_default()
    }

    #[test]
    fn pair_index_decoding() {
        let n = 7;
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                assert_eq!(pair_from_index(k, n), (i, j));
                k += 1;
            }
        }
    }

    #[test]
    fn grid_distances() {
        let spec = GridSpec {
            rows: 3,
            cols: 9,
            ..GridSpec::default()
        };
        let pairs = generate_grid(&spec, &cam(), usize::MAX, 0, false).unwrap();
        assert_eq!(pairs.len(), 27 * 26 / 2);
        let find = |dr: usize, dc: usize| {
            pairs
                .iter()
                .find(|p| p.d_row == dr && p.d_col == dc)
                .unwrap()
        };
        assert_eq!(find(0, 1).distance, 12.5);
        assert!((find(1, 1).distance - 17.67766952966369).abs() < 1e-12);
        assert_eq!(find(0, 8).distance, 100.0);
        for p in &pairs {
            let k = p.d_row * p.d_row + p.d_col * p.d_col;
            assert_eq!(p.distance, 12.5 * (k as f64).sqrt());
        }
    }

    #[test]
    fn grid_budget_and_determinism() {
        let spec = GridSpec::default();
        let a = generate_grid(&spec, &cam(), 500, 3, false).unwrap();
        let b = generate_grid(&spec, &cam(), 500, 3, false).unwrap();
        assert_eq!(a.len(), 500);
        assert_eq!(a, b);
        let c = generate_grid(&spec, &cam(), 500, 4, false).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn grid_outside_view_is_rejected() {
        let spec = GridSpec {
            rows: 2,
            cols: 2,
            origin: Some((5000.0, 0.0)),
            ..GridSpec::default()
        };
        assert!(matches!(
            generate_grid(&spec, &cam(), 10, 0, false),
            Err(SynthError::GridOutsideFov { .. })
        ));
        let high = GridSpec {
            plane_height: 200.0,
            ..GridSpec::default()
        };
        assert!(generate_grid(&high, &cam(), 10, 0, false).is_err());
    }

    #[test]
    fn two_visible_people() {
        let people = [
            VirtualPerson::new("a", 0.0, 0.0, 70.0),
            VirtualPerson::new("b", 30.0, 40.0, 62.0),
        ];
        let s = generate_scene("s", &people, &cam(), &SceneOptions::default()).unwrap();
        assert_eq!(s.distance(0, 1), 50.0);
        assert_eq!(s.category(0, 1), PairCategory::VisibleVisible);
        assert!(s.boxes.iter().all(|b| b.width > 0.0 && b.height > 0.0));
    }

    #[test]
    fn occlusion_shifts_center_outward() {
        let c = cam().principal_point();
        let visible = VirtualPerson::new("a", 150.0, -90.0, 70.0);
        let occluded = visible.clone().occluded(0.5);
        let s = generate_scene(
            "s",
            &[
                visible.clone(),
                VirtualPerson::new("b", -100.0, 0.0, 65.0).occluded(0.5),
            ],
            &cam(),
            &SceneOptions::default(),
        )
        .unwrap();
        assert_eq!(s.category(0, 1), PairCategory::VisibleOccluded);
        let bv = synthesize_box(&visible, &cam(), &SceneOptions::default(), 0).unwrap();
        let bo = synthesize_box(&occluded, &cam(), &SceneOptions::default(), 0).unwrap();
        assert!(bo.center.distance(&c) > bv.center.distance(&c));
        assert!(bo.height < bv.height);
    }

    #[test]
    fn occlusion_monotonicity() {
        let c = cam().principal_point();
        let mut last = 0.0;
        for k in 0..10 {
            let p = VirtualPerson::new("a", -220.0, 75.0, 68.0).occluded(k as f64 * 0.1);
            let r = synthesize_box(&p, &cam(), &SceneOptions::default(), 0)
                .unwrap()
                .center
                .distance(&c);
            assert!(r > last);
            last = r;
        }
    }

    #[test]
    fn person_outside_view() {
        let far = [VirtualPerson::new("far", 2000.0, 0.0, 70.0)];
        assert!(matches!(
            generate_scene("s", &far, &cam(), &SceneOptions::default()),
            Err(SynthError::PersonOutsideFov { index: 0 })
        ));
    }

    #[test]
    fn quantized_boxes_are_integral() {
        let opts = SceneOptions {
            quantize: true,
            ..SceneOptions::default()
        };
        let s = generate_scene(
            "s",
            &[VirtualPerson::new("a", 123.4, 56.7, 70.0)],
            &cam(),
            &opts,
        )
        .unwrap();
        let b = &s.boxes[0];
        assert_eq!(b.center, b.center.rounded());
        assert_eq!(b.height, b.height.round());
    }

    #[test]
    fn classroom_layout_spans_bucket_ranges() {
        let s = generate_classroom_layout(7, &cam()).unwrap();
        let pairs = s.pairs();
        let min = pairs
            .iter()
            .map(|p| p.distance)
            .fold(f64::INFINITY, f64::min);
        let max = pairs.iter().map(|p| p.distance).fold(0.0, f64::max);
        assert!(min <= CLASSROOM_MIN_DISTANCE_IN + 1e-9, "min {min}");
        assert!(max >= CLASSROOM_MAX_DISTANCE_IN - 1e-9, "max {max}");
        let mut buckets = [0; 3];
        pairs
            .iter()
            .for_each(|p| buckets[bucket_of(p.distance)] += 1);
        assert!(buckets.iter().all(|&b| b >= 1), "{buckets:?}");
        assert_eq!(generate_classroom_layout(7, &cam()).unwrap(), s);
    }

    #[test]
    fn classroom_markers_extremes() {
        for seed in 0..5 {
            let m = classroom_markers(seed);
            assert_eq!(m.len(), 31);
            let get = |l: &str| m.iter().find(|x| x.label == l).unwrap();
            assert!((get("A").distance(get("J")) - CLASSROOM_MAX_DISTANCE_IN).abs() < 1e-9);
            assert!((get("G").distance(get("11")) - CLASSROOM_MIN_DISTANCE_IN).abs() < 1e-9);
            for (i, a) in m.iter().enumerate() {
                for b in &m[i + 1..] {
                    let d = a.distance(b);
                    assert!(
                        (CLASSROOM_MIN_DISTANCE_IN - 1e-9..=CLASSROOM_MAX_DISTANCE_IN + 1e-9)
                            .contains(&d)
                    );
                }
            }
        }
    }

    #[test]
    fn collections_match_their_spec() {
        for spec in [CollectionSpec::FIXED_HEIGHT, CollectionSpec::VARYING_HEIGHT] {
            let (det, gt) = generate_collection("c", &spec, 0, &cam()).unwrap();
            let stats = dataset_stats(&gt);
            assert_eq!([stats.vv, stats.vo, stats.oo], spec.categories);
            assert_eq!(stats.buckets, spec.buckets);
            assert_eq!(
                stats.distinct_distances,
                spec.distinct.iter().sum::<usize>()
            );
            assert_eq!(stats.min_distance_in, Some(CLASSROOM_MIN_DISTANCE_IN));
            assert_eq!(stats.max_distance_in, Some(CLASSROOM_MAX_DISTANCE_IN));
            resolve(&det, &gt).unwrap();
        }
    }

    #[test]
    fn grid_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.csv");
        let pairs = generate_grid(&GridSpec::default(), &cam(), 50, 2, false).unwrap();
        save_grid_pairs(&path, &pairs).unwrap();
        assert_eq!(load_grid_pairs(&path).unwrap(), pairs);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("u_a,v_a,u_b,v_b,distance_in,d_row,d_col\n"));
    }

    #[test]
    fn crowd_respects_spec() {
        let spec = CrowdSpec {
            people: 50,
            occluded_probability: 0.5,
            ..CrowdSpec::default()
        };
        let crowd = random_crowd(&spec, 4).unwrap();
        assert_eq!(crowd.len(), 50);
        assert_eq!(crowd, random_crowd(&spec, 4).unwrap());
        let occluded = crowd.iter().filter(|p| p.is_occluded()).count();
        assert!(occluded > 10 && occluded < 40);
        for (i, a) in crowd.iter().enumerate() {
            assert!((60.0..76.0).contains(&a.height));
            assert!(crowd[i + 1..].iter().all(|b| a.floor_distance(b) >= 18.0));
        }
        generate_scene("s", &crowd, &cam(), &SceneOptions::default()).unwrap();
        let packed = CrowdSpec {
            people: 2000,
            min_separation: 100.0,
            ..CrowdSpec::default()
        };
        assert!(random_crowd(&packed, 0).is_err());
    }
}
