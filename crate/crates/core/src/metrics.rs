//! Distance-error and violation-detection metrics.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Social-distancing threshold: 6 ft.
pub const VIOLATION_THRESHOLD_IN: f64 = 72.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no pairs in category {0}")]
    EmptyCategory(String),
}

/// Occlusion status of a pair of people.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PairCategory {
    #[serde(rename = "V-V")]
    VisibleVisible,
    #[serde(rename = "V-O")]
    VisibleOccluded,
    #[serde(rename = "O-O")]
    OccludedOccluded,
}

impl PairCategory {
    pub const ALL: [PairCategory; 3] = [
        PairCategory::VisibleVisible,
        PairCategory::VisibleOccluded,
        PairCategory::OccludedOccluded,
    ];

    pub fn from_flags(a_occluded: bool, b_occluded: bool) -> Self {
        match (a_occluded, b_occluded) {
            (false, false) => PairCategory::VisibleVisible,
            (true, true) => PairCategory::OccludedOccluded,
            _ => PairCategory::VisibleOccluded,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PairCategory::VisibleVisible => "V-V",
            PairCategory::VisibleOccluded => "V-O",
            PairCategory::OccludedOccluded => "O-O",
        }
    }
}

impl fmt::Display for PairCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PairCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "V-V" | "VV" => Ok(PairCategory::VisibleVisible),
            "V-O" | "VO" | "O-V" | "OV" => Ok(PairCategory::VisibleOccluded),
            "O-O" | "OO" => Ok(PairCategory::OccludedOccluded),
            other => Err(format!("unknown pair category {other:?}")),
        }
    }
}

/// Category selector for aggregate metrics; `All` is the union.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CategoryFilter {
    Only(PairCategory),
    All,
}

impl CategoryFilter {
    pub fn accepts(&self, c: PairCategory) -> bool {
        match self {
            CategoryFilter::Only(x) => *x == c,
            CategoryFilter::All => true,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            CategoryFilter::Only(c) => c.label(),
            CategoryFilter::All => "All",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub pair_id: String,
    pub category: PairCategory,
    pub gt_distance: f64,
    pub est_distance: f64,
}

/// Mean absolute error in inches over the selected pairs.
pub fn mae(results: &[PairResult], filter: CategoryFilter) -> Result<f64, MetricsError> {
    let (sum, n) = results
        .iter()
        .filter(|r| filter.accepts(r.category))
        .fold((0.0, 0usize), |(s, n), r| {
            (s + (r.est_distance - r.gt_distance).abs(), n + 1)
        });
    if n == 0 {
        return Err(MetricsError::EmptyCategory(filter.label().into()));
    }
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn predicted_positive(&self) -> usize {
        self.tp + self.fp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub threshold_in: f64,
    pub confusion: Confusion,
    /// Percent.
    pub ccr: f64,
    /// Percent; 100 when there are no positives at all.
    pub f1: f64,
    /// Set when TP + FP + FN = 0 and F1 is undefined.
    pub degenerate_f1: bool,
}

/// Positive means closer than `threshold` (strictly). Ground truth and
/// estimate are thresholded independently.
pub fn violations(results: &[PairResult], threshold: f64) -> Result<ViolationReport, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyCategory("All".into()));
    }
    let mut c = Confusion::default();
    for r in results {
        match (r.gt_distance < threshold, r.est_distance < threshold) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    let ccr = 100.0 * (c.tp + c.tn) as f64 / c.total() as f64;
    let denom = 2 * c.tp + c.fp + c.fn_;
    let (f1, degenerate_f1) = if denom == 0 {
        (100.0, true)
    } else {
        (100.0 * (2 * c.tp) as f64 / denom as f64, false)
    };
    Ok(ViolationReport {
        threshold_in: threshold,
        confusion: c,
        ccr,
        f1,
        degenerate_f1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryMae {
    pub n: usize,
    /// `None` when the category is empty.
    pub mae_in: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub vv: CategoryMae,
    pub vo: CategoryMae,
    pub oo: CategoryMae,
    pub all: CategoryMae,
    pub violations: ViolationReport,
}

impl EvalReport {
    pub fn from_results(results: &[PairResult], threshold: f64) -> Result<Self, MetricsError> {
        let cat = |filter: CategoryFilter| CategoryMae {
            n: results
                .iter()
                .filter(|r| filter.accepts(r.category))
                .count(),
            mae_in: mae(results, filter).ok(),
        };
        Ok(Self {
            vv: cat(CategoryFilter::Only(PairCategory::VisibleVisible)),
            vo: cat(CategoryFilter::Only(PairCategory::VisibleOccluded)),
            oo: cat(CategoryFilter::Only(PairCategory::OccludedOccluded)),
            all: cat(CategoryFilter::All),
            violations: violations(results, threshold)?,
        })
    }

    pub fn category(&self, filter: CategoryFilter) -> &CategoryMae {
        match filter {
            CategoryFilter::Only(PairCategory::VisibleVisible) => &self.vv,
            CategoryFilter::Only(PairCategory::VisibleOccluded) => &self.vo,
            CategoryFilter::Only(PairCategory::OccludedOccluded) => &self.oo,
            CategoryFilter::All => &self.all,
        }
    }
}
