//! End-to-end estimation over a resolved dataset: center adjustment, then
//! either estimator, then metrics.

use crate::adjust::{adjust_pair, AdjustError, Adjustment, ALPHA_MAX, ALPHA_MIN};
use crate::camera::{CameraError, CameraParams, PixelPoint};
use crate::dataset::Dataset;
use crate::geometry::{estimate_distance, LocalizedPerson};
use crate::metrics::{CategoryFilter, EvalReport, MetricsError, PairCategory, PairResult};
use crate::mlp::{extract_feature, MlpModel, TrainingSample};
use crate::synth::GridPair;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("pair {index} ({id}): {source}")]
    Camera {
        index: usize,
        id: String,
        source: CameraError,
    },
    #[error("pair {index} ({id}): {source}")]
    Adjust {
        index: usize,
        id: String,
        source: AdjustError,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone)]
pub enum Estimator {
    /// Inverse projection with every person assumed to be `assumed_height` tall.
    Geometry {
        camera: CameraParams,
        assumed_height: f64,
    },
    Mlp(MlpModel),
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Geometry { .. } => "geometry",
            Estimator::Mlp(_) => "mlp",
        }
    }

    pub fn estimate(&self, a: &PixelPoint, b: &PixelPoint) -> Result<f64, CameraError> {
        match self {
            Estimator::Geometry {
                camera,
                assumed_height,
            } => estimate_distance(
                &LocalizedPerson::new(*a, *assumed_height),
                &LocalizedPerson::new(*b, *assumed_height),
                camera,
            ),
            Estimator::Mlp(model) => {
                Ok(model.predict(&extract_feature(a, b, &model.scaling.origin)))
            }
        }
    }
}

/// Adjusts both centers of every pair and runs the estimator on them.
pub fn estimate_dataset(
    estimator: &Estimator,
    adjustment: &Adjustment,
    dataset: &Dataset,
) -> Result<Vec<PairResult>, PipelineError> {
    let center = dataset.image_center();
    let mut centers = Vec::with_capacity(dataset.pairs.len());
    for (index, p) in dataset.pairs.iter().enumerate() {
        let id = || format!("{}-{}", p.id_a, p.id_b);
        let c = adjust_pair(&p.a, &p.b, adjustment, &center).map_err(|source| {
            PipelineError::Adjust {
                index,
                id: id(),
                source,
            }
        })?;
        centers.push(c);
    }
    let estimates: Vec<f64> = match estimator {
        Estimator::Mlp(model) => {
            let features: Vec<_> = centers
                .iter()
                .map(|(a, b)| extract_feature(a, b, &model.scaling.origin))
                .collect();
            model.predict_batch(&features)
        }
        _ => centers
            .iter()
            .enumerate()
            .map(|(index, (a, b))| {
                estimator
                    .estimate(a, b)
                    .map_err(|source| PipelineError::Camera {
                        index,
                        id: format!(
                            "{}-{}",
                            dataset.pairs[index].id_a, dataset.pairs[index].id_b
                        ),
                        source,
                    })
            })
            .collect::<Result<_, _>>()?,
    };
    Ok(dataset
        .pairs
        .iter()
        .zip(estimates)
        .map(|(p, est)| PairResult {
            pair_id: format!("{}-{}", p.id_a, p.id_b),
            category: p.category,
            gt_distance: p.distance_in,
            est_distance: est,
        })
        .collect())
}

pub fn evaluate_pipeline(
    estimator: &Estimator,
    adjustment: &Adjustment,
    dataset: &Dataset,
    threshold: f64,
) -> Result<EvalReport, PipelineError> {
    let results = estimate_dataset(estimator, adjustment, dataset)?;
    Ok(EvalReport::from_results(&results, threshold)?)
}

/// Shared-alpha values from `ALPHA_MIN` up to (excluding) `ALPHA_MAX`.
pub fn alpha_grid(step: f64) -> Vec<f64> {
    let n = ((ALPHA_MAX - ALPHA_MIN) / step - 1e-9).ceil() as usize;
    // Snap to 1e-9 so printed values read 0.05 rather than 0.05000000000000002.
    (0..n)
        .map(|k| ((ALPHA_MIN + k as f64 * step) * 1e9).round() / 1e9)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    /// `V-V`, `V-O`, `O-O` or `All`.
    pub category: &'static str,
    pub mae_in: f64,
}

/// MAE per category for each shared alpha. Alphas whose shift overshoots the
/// image center for some box are skipped, as are empty categories.
pub fn sweep_alpha(
    estimator: &Estimator,
    dataset: &Dataset,
    alphas: &[f64],
) -> Result<Vec<SweepRow>, PipelineError> {
    let filters = [
        CategoryFilter::Only(PairCategory::VisibleVisible),
        CategoryFilter::Only(PairCategory::VisibleOccluded),
        CategoryFilter::Only(PairCategory::OccludedOccluded),
        CategoryFilter::All,
    ];
    let mut rows = Vec::new();
    for &alpha in alphas {
        let results = match estimate_dataset(estimator, &Adjustment::shared(alpha), dataset) {
            Ok(r) => r,
            Err(PipelineError::Adjust {
                source: AdjustError::OvershootsCenter { .. },
                ..
            }) => continue,
            Err(e) => return Err(e),
        };
        for f in filters {
            if let Ok(m) = crate::metrics::mae(&results, f) {
                rows.push(SweepRow {
                    alpha,
                    category: f.label(),
                    mae_in: m,
                });
            }
        }
    }
    Ok(rows)
}

/// Alpha with the lowest MAE for `category` among the sweep rows.
pub fn best_alpha(rows: &[SweepRow], category: &str) -> Option<SweepRow> {
    rows.iter()
        .filter(|r| r.category == category)
        .min_by(|a, b| a.mae_in.total_cmp(&b.mae_in))
        .copied()
}

pub fn grid_training_samples(pairs: &[GridPair], origin: &PixelPoint) -> Vec<TrainingSample> {
    pairs
        .iter()
        .map(|p| TrainingSample {
            feature: extract_feature(&p.a, &p.b, origin),
            distance: p.distance,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::resolve;
    use crate::synth::{generate_scene, SceneOptions, VirtualPerson};

    fn dataset(people: &[VirtualPerson]) -> Dataset {
        let s = generate_scene(
            "img",
            people,
            &CameraParams::synthetic_default(),
            &SceneOptions::default(),
        )
        .unwrap();
        resolve(&s.detections(), &s.ground_truth()).unwrap()
    }

    #[test]
    fn alpha_grid_bounds() {
        let g = alpha_grid(0.01);
        assert_eq!(g.len(), 110);
        assert_eq!(g[0], -0.1);
        assert_eq!(g[10], 0.0);
        assert_eq!(g[15], 0.05);
        assert!(*g.last().unwrap() < ALPHA_MAX);
    }

    #[test]
    fn geometry_is_exact_on_matching_heights() {
        let people = [
            VirtualPerson::new("a", -120.0, 40.0, 65.0),
            VirtualPerson::new("b", 80.0, -35.0, 65.0),
            VirtualPerson::new("c", 200.0, 100.0, 65.0),
        ];
        let est = Estimator::Geometry {
            camera: CameraParams::synthetic_default(),
            assumed_height: 65.0,
        };
        let r = estimate_dataset(&est, &Adjustment::NONE, &dataset(&people)).unwrap();
        assert_eq!(r.len(), 3);
        for p in r {
            assert!((p.est_distance - p.gt_distance).abs() < 1e-6, "{p:?}");
        }
    }

    #[test]
    fn sweep_reports_every_category() {
        let people = [
            VirtualPerson::new("a", -120.0, 40.0, 65.0),
            VirtualPerson::new("b", 80.0, -35.0, 70.0).occluded(0.5),
            VirtualPerson::new("c", 200.0, 100.0, 60.0).occluded(0.4),
        ];
        let est = Estimator::Geometry {
            camera: CameraParams::synthetic_default(),
            assumed_height: 65.0,
        };
        let rows = sweep_alpha(&est, &dataset(&people), &[0.0, 0.5]).unwrap();
        // No visible-visible pair: three categories per alpha.
        assert_eq!(rows.len(), 6);
        assert!(best_alpha(&rows, "O-O").is_some());
        assert!(best_alpha(&rows, "nope").is_none());
    }
}
