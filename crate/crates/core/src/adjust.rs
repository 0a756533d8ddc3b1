//! Test-time height adjustment of bounding-box centers.
//!
//! A center is moved radially toward the image center by `alpha * h / 2`
//! pixels, where `h` is the box height. Positive `alpha` lowers the observed
//! body point; negative `alpha` moves it outward.

use crate::camera::PixelPoint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ALPHA_MIN: f64 = -0.1;
pub const ALPHA_MAX: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdjustError {
    #[error("alpha {0} outside [-0.1, 1.0)")]
    AlphaOutOfRange(f64),
    #[error("displacement {displacement:.3} px overshoots the image center ({radius:.3} px away)")]
    OvershootsCenter { displacement: f64, radius: f64 },
    #[error("box center coincides with the image center; no radial direction")]
    UndefinedDirection,
}

/// A detected person's box. `width` is the tangential extent and `height`
/// the radial extent, as for boxes aligned with the radial axis of an
/// overhead fisheye image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub person_id: String,
    pub center: PixelPoint,
    pub width: f64,
    pub height: f64,
    pub occluded: bool,
}

/// Per-visibility adjustment factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adjustment {
    pub visible: f64,
    pub occluded: f64,
}

impl Adjustment {
    pub const NONE: Adjustment = Adjustment {
        visible: 0.0,
        occluded: 0.0,
    };

    pub fn shared(alpha: f64) -> Self {
        Self {
            visible: alpha,
            occluded: alpha,
        }
    }

    pub fn for_box(&self, b: &BoundingBox) -> f64 {
        if b.occluded {
            self.occluded
        } else {
            self.visible
        }
    }
}

pub fn check_alpha(alpha: f64) -> Result<(), AdjustError> {
    if (ALPHA_MIN..ALPHA_MAX).contains(&alpha) {
        Ok(())
    } else {
        Err(AdjustError::AlphaOutOfRange(alpha))
    }
}

/// Displaces `b.center` by `alpha * h / 2` along the unit vector pointing at
/// `image_center`.
pub fn adjust(
    b: &BoundingBox,
    alpha: f64,
    image_center: &PixelPoint,
) -> Result<PixelPoint, AdjustError> {
    check_alpha(alpha)?;
    if alpha == 0.0 {
        return Ok(b.center);
    }
    let du = image_center.u - b.center.u;
    let dv = image_center.v - b.center.v;
    let radius = du.hypot(dv);
    if radius == 0.0 {
        return Err(AdjustError::UndefinedDirection);
    }
    let displacement = alpha * b.height / 2.0;
    if displacement > radius {
        return Err(AdjustError::OvershootsCenter {
            displacement,
            radius,
        });
    }
    let t = displacement / radius;
    Ok(PixelPoint::new(b.center.u + t * du, b.center.v + t * dv))
}

pub fn adjust_pair(
    a: &BoundingBox,
    b: &BoundingBox,
    adjustment: &Adjustment,
    image_center: &PixelPoint,
) -> Result<(PixelPoint, PixelPoint), AdjustError> {
    Ok((
        adjust(a, adjustment.for_box(a), image_center)?,
        adjust(b, adjustment.for_box(b), image_center)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const C: PixelPoint = PixelPoint::new(1024.0, 1024.0);

    fn bx(u: f64, v: f64, h: f64, occluded: bool) -> BoundingBox {
        BoundingBox {
            person_id: "p".into(),
            center: PixelPoint::new(u, v),
            width: 40.0,
            height: h,
            occluded,
        }
    }

    #[test]
    fn axis_aligned_displacement() {
        let got = adjust(&bx(1524.0, 1024.0, 200.0, false), 0.5, &C).unwrap();
        assert_eq!(got, PixelPoint::new(1474.0, 1024.0));
    }

    #[test]
    fn zero_alpha_is_identity() {
        let b = bx(1300.5, 777.25, 120.0, false);
        assert_eq!(adjust(&b, 0.0, &C).unwrap(), b.center);
        // Even at the image center.
        assert_eq!(
            adjust(&bx(1024.0, 1024.0, 50.0, false), 0.0, &C).unwrap(),
            C
        );
    }

    #[test]
    fn overshoot_and_undefined_direction() {
        assert!(matches!(
            adjust(&bx(1024.0, 1124.0, 300.0, false), 0.8, &C),
            Err(AdjustError::OvershootsCenter { .. })
        ));
        assert_eq!(
            adjust(&bx(1024.0, 1024.0, 300.0, false), 0.2, &C),
            Err(AdjustError::UndefinedDirection)
        );
        assert!(matches!(
            adjust(&bx(1500.0, 1024.0, 100.0, false), 1.0, &C),
            Err(AdjustError::AlphaOutOfRange(_))
        ));
        assert!(adjust(&bx(1500.0, 1024.0, 100.0, false), -0.11, &C).is_err());
    }

    #[test]
    fn negative_alpha_moves_outward() {
        let got = adjust(&bx(1524.0, 1024.0, 200.0, false), -0.1, &C).unwrap();
        assert!((got.u - 1534.0).abs() < 1e-12);
    }

    #[test]
    fn per_person_alpha() {
        let v = bx(1524.0, 1024.0, 200.0, false);
        let o = bx(1024.0, 424.0, 160.0, true);
        let (a, b) = adjust_pair(
            &v,
            &o,
            &Adjustment {
                visible: 0.1,
                occluded: 0.5,
            },
            &C,
        )
        .unwrap();
        assert!((v.center.distance(&a) - 200.0 * 0.05).abs() < 1e-12);
        assert!((o.center.distance(&b) - 160.0 * 0.25).abs() < 1e-12);

        let (a0, _) = adjust_pair(
            &v,
            &o,
            &Adjustment {
                visible: 0.0,
                occluded: 0.5,
            },
            &C,
        )
        .unwrap();
        assert_eq!(a0, v.center);

        let o2 = bx(700.0, 1300.0, 90.0, true);
        let (p, q) = adjust_pair(&o, &o2, &Adjustment::shared(0.5), &C).unwrap();
        assert_eq!(p, adjust(&o, 0.5, &C).unwrap());
        assert_eq!(q, adjust(&o2, 0.5, &C).unwrap());
    }

    proptest! {
        #[test]
        fn radius_law_and_angle(
            u in 0.0..2048.0f64,
            v in 0.0..2048.0f64,
            h in 1.0..400.0f64,
            alpha in -0.1..0.999f64,
        ) {
            let b = bx(u, v, h, false);
            let r0 = b.center.distance(&C);
            prop_assume!(r0 > 1e-6);
            match adjust(&b, alpha, &C) {
                Ok(p) => {
                    let r1 = p.distance(&C);
                    prop_assert!((r1 - (r0 - alpha * h / 2.0)).abs() < 1e-9);
                    if r1 > 1e-6 {
                        let a0 = (v - C.v).atan2(u - C.u);
                        let a1 = (p.v - C.v).atan2(p.u - C.u);
                        let diff = (a0 - a1).sin().abs();
                        prop_assert!(diff < 1e-9);
                    }
                }
                Err(AdjustError::OvershootsCenter { .. }) => prop_assert!(alpha * h / 2.0 > r0),
                Err(e) => prop_assert!(false, "unexpected {e:?}"),
            }
        }
    }
}
