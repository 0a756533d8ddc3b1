//! Intrinsics fitting from 3D/2D correspondences.
//!
//! Damped Gauss-Newton (Levenberg-Marquardt with Marquardt diagonal scaling)
//! over the five intrinsics, with a central-difference Jacobian. The mount
//! height is carried through untouched.

use crate::camera::{project, CameraParams, PixelPoint, WorldPoint};
use nalgebra::{DMatrix, DVector, Matrix5, Vector5};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const MIN_CORRESPONDENCES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub world: WorldPoint,
    pub pixel: PixelPoint,
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Stop once the relative cost decrease of an accepted step falls below this.
    pub rel_cost_tol: f64,
    /// Central-difference step, relative to each parameter's magnitude.
    pub jacobian_step: f64,
    pub initial_damping: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            rel_cost_tol: 1e-12,
            jacobian_step: 1e-6,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub rmse_px: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fit {
    pub params: CameraParams,
    pub report: FitReport,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("singular fit: {0}")]
    SingularFit(String),
    #[error("no convergence after {} iterations (rmse {:.6} px)", .best.report.iterations, .best.report.rmse_px)]
    NoConvergence { best: Box<Fit> },
    #[error("correspondence file {path}: {message}")]
    Io { path: String, message: String },
}

fn residuals(w: &[f64; 5], base: &CameraParams, data: &[Correspondence]) -> Option<DVector<f64>> {
    let params = base.with_intrinsics(*w);
    if params.fx <= 0.0 || params.fy <= 0.0 || params.xi < 0.0 {
        return None;
    }
    let mut r = DVector::zeros(2 * data.len());
    for (i, c) in data.iter().enumerate() {
        let x = project(&c.world, &params).ok()?;
        r[2 * i] = x.u - c.pixel.u;
        r[2 * i + 1] = x.v - c.pixel.v;
    }
    Some(r)
}

fn jacobian(
    w: &[f64; 5],
    base: &CameraParams,
    data: &[Correspondence],
    rel_step: f64,
) -> Option<DMatrix<f64>> {
    let mut jac = DMatrix::zeros(2 * data.len(), 5);
    for k in 0..5 {
        let h = rel_step * w[k].abs().max(1.0);
        let mut plus = *w;
        let mut minus = *w;
        plus[k] += h;
        minus[k] -= h;
        // Near the xi >= 0 boundary fall back to a one-sided difference.
        let (rp, rm, span) = match residuals(&minus, base, data) {
            Some(rm) => (residuals(&plus, base, data)?, rm, 2.0 * h),
            None => (residuals(&plus, base, data)?, residuals(w, base, data)?, h),
        };
        jac.set_column(k, &((rp - rm) / span));
    }
    Some(jac)
}

/// Fits `{xi, fx, fy, cx, cy}` to minimise the summed squared pixel error.
pub fn fit_params(
    data: &[Correspondence],
    initial: &CameraParams,
    opts: &FitOptions,
) -> Result<Fit, FitError> {
    if data.len() < MIN_CORRESPONDENCES {
        return Err(FitError::SingularFit(format!(
            "{} correspondences, need at least {MIN_CORRESPONDENCES}",
            data.len()
        )));
    }
    let mut w = initial.intrinsics();
    let mut r = residuals(&w, initial, data).ok_or_else(|| {
        FitError::SingularFit("initial parameters do not project every point".into())
    })?;
    let mut cost = r.norm_squared();
    let mut lambda = opts.initial_damping;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        if cost == 0.0 {
            converged = true;
            break;
        }
        let jac = jacobian(&w, initial, data, opts.jacobian_step)
            .ok_or_else(|| FitError::SingularFit("jacobian evaluation failed".into()))?;
        let jtj: Matrix5<f64> = (jac.transpose() * &jac)
            .fixed_view::<5, 5>(0, 0)
            .into_owned();
        let jtr: Vector5<f64> = (jac.transpose() * &r).fixed_rows::<5>(0).into_owned();
        check_rank(&jtj)?;

        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj;
            for k in 0..5 {
                a[(k, k)] += lambda * jtj[(k, k)];
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-jtr))) else {
                lambda *= 10.0;
                continue;
            };
            let trial: [f64; 5] = std::array::from_fn(|k| w[k] + step[k]);
            match residuals(&trial, initial, data) {
                Some(rt) if rt.norm_squared() <= cost => {
                    let new_cost = rt.norm_squared();
                    let rel = (cost - new_cost) / cost;
                    w = trial;
                    r = rt;
                    cost = new_cost;
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    if rel < opts.rel_cost_tol {
                        converged = true;
                    }
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        // No downhill step at any damping: we are at a minimum to machine precision.
        if !accepted || converged {
            converged = true;
            break;
        }
    }

    let fit = Fit {
        params: initial.with_intrinsics(w),
        report: FitReport {
            rmse_px: (cost / data.len() as f64).sqrt(),
            iterations,
            converged,
        },
    };
    if converged {
        Ok(fit)
    } else {
        Err(FitError::NoConvergence {
            best: Box::new(fit),
        })
    }
}

fn check_rank(jtj: &Matrix5<f64>) -> Result<(), FitError> {
    // Rank test on the column-normalised normal matrix so the very different
    // parameter scales (xi ~ 1, focal ~ 1e3) do not mask a deficiency.
    let d: [f64; 5] = std::array::from_fn(|k| jtj[(k, k)].sqrt());
    if d.iter().any(|&v| !(v > 0.0)) {
        return Err(FitError::SingularFit(
            "a parameter has no effect on the residuals".into(),
        ));
    }
    let normed = Matrix5::from_fn(|i, j| jtj[(i, j)] / (d[i] * d[j]));
    let sv = normed.singular_values();
    let max = sv.max();
    let min = sv.min();
    if !(min > max * 1e-14) {
        return Err(FitError::SingularFit(format!(
            "rank-deficient jacobian (condition {:.3e})",
            max / min
        )));
    }
    Ok(())
}

/// RMS reprojection error in pixels.
pub fn reprojection_rmse(data: &[Correspondence], params: &CameraParams) -> Option<f64> {
    let r = residuals(&params.intrinsics(), params, data)?;
    Some((r.norm_squared() / data.len() as f64).sqrt())
}

#[derive(Debug, Serialize, Deserialize)]
struct CorrespondenceRow {
    x_in: f64,
    y_in: f64,
    z_in: f64,
    u_px: f64,
    v_px: f64,
}

/// Reads a `x_in,y_in,z_in,u_px,v_px` CSV.
pub fn load_correspondences(path: impl AsRef<Path>) -> Result<Vec<Correspondence>, FitError> {
    let path = path.as_ref();
    let io_err = |message: String| FitError::Io {
        path: path.display().to_string(),
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| io_err(e.to_string()))?;
    let headers = reader.headers().map_err(|e| io_err(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["x_in", "y_in", "z_in", "u_px", "v_px"] {
        return Err(io_err(format!("unexpected header {:?}", headers)));
    }
    reader
        .deserialize::<CorrespondenceRow>()
        .enumerate()
        .map(|(i, row)| {
            let row = row.map_err(|e| io_err(format!("record {}: {e}", i + 1)))?;
            Ok(Correspondence {
                world: WorldPoint::new(row.x_in, row.y_in, row.z_in),
                pixel: PixelPoint::new(row.u_px, row.v_px),
            })
        })
        .collect()
}

pub fn save_correspondences(
    path: impl AsRef<Path>,
    data: &[Correspondence],
) -> Result<(), FitError> {
    let path = path.as_ref();
    let io_err = |message: String| FitError::Io {
        path: path.display().to_string(),
        message,
    };
    let mut writer = csv::Writer::from_path(path).map_err(|e| io_err(e.to_string()))?;
    for c in data {
        writer
            .serialize(CorrespondenceRow {
                x_in: c.world.x,
                y_in: c.world.y,
                z_in: c.world.z,
                u_px: c.pixel.u,
                v_px: c.pixel.v,
            })
            .map_err(|e| io_err(e.to_string()))?;
    }
    writer.flush().map_err(|e| io_err(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn truth() -> CameraParams {
        CameraParams::new(1.0, 600.0, 600.0, 1024.0, 1024.0, 114.0).unwrap()
    }

    // Points on the floor and at table/head heights, spread across the view.
    fn synth(n: usize, noise: f64, seed: u64) -> Vec<Correspondence> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise.max(1e-300)).unwrap();
        let cam = truth();
        (0..n)
            .map(|_| {
                let world = WorldPoint::new(
                    rng.random_range(-400.0..400.0),
                    rng.random_range(-400.0..400.0),
                    rng.random_range(40.0..114.0),
                );
                let mut pixel = project(&world, &cam).unwrap();
                if noise > 0.0 {
                    pixel.u += normal.sample(&mut rng);
                    pixel.v += normal.sample(&mut rng);
                }
                Correspondence { world, pixel }
            })
            .collect()
    }

    fn initial() -> CameraParams {
        CameraParams::new(0.8, 500.0, 500.0, 1000.0, 1000.0, 114.0).unwrap()
    }

    #[test]
    fn recovers_noiseless_parameters() {
        let data = synth(50, 0.0, 1);
        let fit = fit_params(&data, &initial(), &FitOptions::default()).unwrap();
        for (got, want) in fit.params.intrinsics().iter().zip(truth().intrinsics()) {
            assert!(((got - want) / want).abs() < 1e-6, "{got} vs {want}");
        }
        assert!(fit.report.rmse_px < 1e-8, "rmse {}", fit.report.rmse_px);
        assert!(fit.report.converged);
        assert_eq!(fit.params.mount_height, 114.0);
    }

    #[test]
    fn noisy_fit_tracks_noise_level() {
        let data = synth(50, 0.5, 2);
        let fit = fit_params(&data, &initial(), &FitOptions::default()).unwrap();
        assert!(fit.report.rmse_px <= 0.75, "rmse {}", fit.report.rmse_px);
        let w = fit.params.intrinsics();
        assert!((w[1] - 600.0).abs() < 20.0 && (w[3] - 1024.0).abs() < 2.0);
        // The fit can only improve on the generating parameters.
        assert!(fit.report.rmse_px <= reprojection_rmse(&data, &truth()).unwrap() + 1e-9);
    }

    #[test]
    fn too_few_correspondences() {
        let data = synth(3, 0.0, 3);
        assert!(matches!(
            fit_params(&data, &initial(), &FitOptions::default()),
            Err(FitError::SingularFit(_))
        ));
    }

    #[test]
    fn degenerate_geometry_is_singular() {
        // Every point on the optical axis: only cx, cy are observable.
        let cam = truth();
        let data: Vec<_> = (0..10)
            .map(|i| {
                let world = WorldPoint::new(0.0, 0.0, 50.0 + i as f64);
                Correspondence {
                    world,
                    pixel: project(&world, &cam).unwrap(),
                }
            })
            .collect();
        assert!(matches!(
            fit_params(&data, &initial(), &FitOptions::default()),
            Err(FitError::SingularFit(_))
        ));
    }

    #[test]
    fn iteration_cap_reports_best_so_far() {
        let data = synth(50, 0.0, 4);
        let opts = FitOptions {
            max_iterations: 1,
            ..FitOptions::default()
        };
        match fit_params(&data, &initial(), &opts) {
            Err(FitError::NoConvergence { best }) => {
                assert_eq!(best.report.iterations, 1);
                assert!(!best.report.converged);
                assert!(best.report.rmse_px < reprojection_rmse(&data, &initial()).unwrap());
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn correspondence_csv_round_trip() {
        let data = synth(7, 0.0, 5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corr.csv");
        save_correspondences(&path, &data).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x_in,y_in,z_in,u_px,v_px\n"));
        assert_eq!(load_correspondences(&path).unwrap(), data);
    }
}
