//! Unified spherical camera model.
//!
//! Camera frame: origin at the optical center, `z` pointing straight down at
//! the floor, so every point below the camera has `z > 0`. A point is first
//! normalised onto the unit sphere and then perspectively projected from a
//! centre offset by `xi` along the optical axis:
//!
//! ```text
//! s = p / |p|
//! m = (s_x / (s_z + xi), s_y / (s_z + xi))
//! u = fx * m_x + cx,  v = fy * m_y + cy
//! ```
//!
//! The inverse lifts a pixel back onto the sphere and scales the resulting
//! ray to a requested depth `z`, which is how a person's location is
//! recovered once the height of the observed body point is known.

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;
use thiserror::Error;

/// Guard on `s_z + xi` below which a point is treated as outside the model.
pub const DEGENERATE_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("invalid camera parameters: {0}")]
    InvalidParams(String),
    #[error("point ({x}, {y}, {z}) is outside the camera model's field of view")]
    DegenerateProjection { x: f64, y: f64, z: f64 },
    #[error("pixel ({u}, {v}) has no preimage with positive depth")]
    NoPreimage { u: f64, v: f64 },
    #[error("invalid person height {height} in for mount height {mount_height} in")]
    InvalidHeight { height: f64, mount_height: f64 },
    #[error("camera file {path}: {message}")]
    Io { path: String, message: String },
}

/// 3D point in the camera frame, in inches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl WorldPoint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn distance(&self, other: &WorldPoint) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Continuous image coordinates in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance(&self, other: &PixelPoint) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }

    /// Nearest integer pixel.
    pub fn rounded(&self) -> PixelPoint {
        PixelPoint::new(self.u.round(), self.v.round())
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    pub fn within_image(&self, side: f64) -> bool {
        self.u >= 0.0 && self.v >= 0.0 && self.u < side && self.v < side
    }
}

/// Intrinsics `{xi, fx, fy, cx, cy}` plus the mounting height of the optical
/// center above the floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraParams {
    pub xi: f64,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(rename = "mount_height_in")]
    pub mount_height: f64,
}

impl CameraParams {
    pub fn new(
        xi: f64,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        mount_height: f64,
    ) -> Result<Self, CameraError> {
        let params = Self {
            xi,
            fx,
            fy,
            cx,
            cy,
            mount_height,
        };
        params.validate()?;
        Ok(params)
    }

    /// Camera used by the synthetic scenes: a 2048x2048 sensor looking at a
    /// 72 x 28 ft room from 114 in, with the whole room inside the image.
    pub fn synthetic_default() -> Self {
        Self {
            xi: 1.0,
            fx: 1100.0,
            fy: 1100.0,
            cx: 1024.0,
            cy: 1024.0,
            mount_height: 114.0,
        }
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        let all = [
            self.xi,
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            self.mount_height,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(CameraError::InvalidParams("non-finite value".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(CameraError::InvalidParams(format!(
                "focal scales must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.xi < 0.0 {
            return Err(CameraError::InvalidParams(format!("xi={} < 0", self.xi)));
        }
        if self.mount_height <= 0.0 {
            return Err(CameraError::InvalidParams(format!(
                "mount height {} must be positive",
                self.mount_height
            )));
        }
        Ok(())
    }

    pub fn principal_point(&self) -> PixelPoint {
        PixelPoint::new(self.cx, self.cy)
    }

    /// The five model parameters in fitting order.
    pub fn intrinsics(&self) -> [f64; 5] {
        [self.xi, self.fx, self.fy, self.cx, self.cy]
    }

    pub fn with_intrinsics(&self, w: [f64; 5]) -> Self {
        Self {
            xi: w[0],
            fx: w[1],
            fy: w[2],
            cx: w[3],
            cy: w[4],
            mount_height: self.mount_height,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CameraError> {
        let path = path.as_ref();
        let io_err = |message: String| CameraError::Io {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| io_err(e.to_string()))?;
        let params: CameraParams =
            serde_json::from_str(&text).map_err(|e| io_err(e.to_string()))?;
        params.validate()?;
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CameraError> {
        let path = path.as_ref();
        // serde_json writes the shortest representation that parses back to
        // the same f64, so this round-trips bit-exactly.
        let text = serde_json::to_string_pretty(self).expect("camera params serialize");
        fs::write(path, text + "\n").map_err(|e| CameraError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Forward projection of a camera-frame point to pixels.
pub fn project(p: &WorldPoint, params: &CameraParams) -> Result<PixelPoint, CameraError> {
    let n = p.norm();
    let degenerate = CameraError::DegenerateProjection {
        x: p.x,
        y: p.y,
        z: p.z,
    };
    if !(n > 0.0) || !n.is_finite() {
        return Err(degenerate);
    }
    let (sx, sy, sz) = (p.x / n, p.y / n, p.z / n);
    let denom = sz + params.xi;
    if denom <= DEGENERATE_EPS {
        return Err(degenerate);
    }
    Ok(PixelPoint::new(
        params.fx * sx / denom + params.cx,
        params.fy * sy / denom + params.cy,
    ))
}

/// Unit-sphere direction seen at pixel `x`. Fails when the pixel lies
/// outside the image of the model or its ray does not point below the camera.
pub fn unproject_ray(x: &PixelPoint, params: &CameraParams) -> Result<[f64; 3], CameraError> {
    let no_preimage = CameraError::NoPreimage { u: x.u, v: x.v };
    if !x.is_finite() {
        return Err(no_preimage);
    }
    let mx = (x.u - params.cx) / params.fx;
    let my = (x.v - params.cy) / params.fy;
    let r2 = mx * mx + my * my;
    let disc = 1.0 + (1.0 - params.xi * params.xi) * r2;
    if disc < 0.0 {
        return Err(no_preimage);
    }
    let eta = (params.xi + disc.sqrt()) / (r2 + 1.0);
    let s = [eta * mx, eta * my, eta - params.xi];
    if s[2] <= DEGENERATE_EPS {
        return Err(no_preimage);
    }
    Ok(s)
}

/// Recovers the point on the ray through `x` whose depth coordinate is `p_z`.
pub fn inverse_project(
    x: &PixelPoint,
    p_z: f64,
    params: &CameraParams,
) -> Result<WorldPoint, CameraError> {
    if !(p_z > 0.0) || !p_z.is_finite() {
        return Err(CameraError::NoPreimage { u: x.u, v: x.v });
    }
    let s = unproject_ray(x, params)?;
    let scale = p_z / s[2];
    Ok(WorldPoint::new(s[0] * scale, s[1] * scale, p_z))
}

/// Depth of a person's mid-height point: `B - H/2`.
pub fn height_to_pz(params: &CameraParams, person_height: f64) -> Result<f64, CameraError> {
    let b = params.mount_height;
    if !(person_height > 0.0) || person_height >= 2.0 * b {
        return Err(CameraError::InvalidHeight {
            height: person_height,
            mount_height: b,
        });
    }
    Ok(b - person_height / 2.0)
}
