//! Polar pair features.
//!
//! Each center is expressed in polar coordinates about a fixed origin; the
//! pair is described by both radii and the angle between the two position
//! vectors. Rotating the whole image about the origin leaves the feature
//! unchanged.

use crate::camera::PixelPoint;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairFeature {
    pub r_a: f64,
    pub r_b: f64,
    /// Angle between the two position vectors, in `[0, pi]`.
    pub theta: f64,
}

impl PairFeature {
    /// Orders the radii so that `r_a >= r_b`. `theta` is already symmetric
    /// in the two people, so this makes the feature order-free.
    pub fn canonical(self) -> Self {
        if self.r_a >= self.r_b {
            self
        } else {
            Self {
                r_a: self.r_b,
                r_b: self.r_a,
                theta: self.theta,
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.r_a.is_finite() && self.r_b.is_finite() && self.theta.is_finite()
    }
}

fn polar(x: &PixelPoint, origin: &PixelPoint) -> (f64, f64) {
    let du = x.u - origin.u;
    let dv = x.v - origin.v;
    let r = du.hypot(dv);
    if r == 0.0 {
        (0.0, 0.0)
    } else {
        (r, dv.atan2(du))
    }
}

/// Folds an angle difference to the unsigned separation in `[0, pi]`.
pub fn angle_between(theta_a: f64, theta_b: f64) -> f64 {
    let d = (theta_a - theta_b).abs().rem_euclid(TAU);
    let folded = if d > PI { TAU - d } else { d };
    folded.clamp(0.0, PI)
}

pub fn extract_feature(x_a: &PixelPoint, x_b: &PixelPoint, origin: &PixelPoint) -> PairFeature {
    let (r_a, t_a) = polar(x_a, origin);
    let (r_b, t_b) = polar(x_b, origin);
    PairFeature {
        r_a,
        r_b,
        theta: angle_between(t_a, t_b),
    }
}
