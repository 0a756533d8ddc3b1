//! Geometry-based distance estimation: inverse-project each person's center
//! at the depth of their mid-height point and take the 3D Euclidean norm.

use crate::camera::{
    height_to_pz, inverse_project, CameraError, CameraParams, PixelPoint, WorldPoint,
};

/// A detected person reduced to a center pixel and an assumed height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizedPerson {
    pub center: PixelPoint,
    pub assumed_height: f64,
    world: Option<WorldPoint>,
}

impl LocalizedPerson {
    pub fn new(center: PixelPoint, assumed_height: f64) -> Self {
        Self {
            center,
            assumed_height,
            world: None,
        }
    }

    /// Caches the inverse projection so repeated distance queries reuse it.
    pub fn localize(mut self, params: &CameraParams) -> Result<Self, CameraError> {
        self.world = Some(self.world_point(params)?);
        Ok(self)
    }

    pub fn cached_world(&self) -> Option<WorldPoint> {
        self.world
    }

    pub fn world_point(&self, params: &CameraParams) -> Result<WorldPoint, CameraError> {
        if let Some(p) = self.world {
            return Ok(p);
        }
        let pz = height_to_pz(params, self.assumed_height)?;
        inverse_project(&self.center, pz, params)
    }
}

pub fn estimate_distance(
    a: &LocalizedPerson,
    b: &LocalizedPerson,
    params: &CameraParams,
) -> Result<f64, CameraError> {
    let pa = a.world_point(params)?;
    let pb = b.world_point(params)?;
    Ok(pa.distance(&pb))
}

/// Symmetric pairwise distance matrix. People whose inverse projection
/// failed keep their error and yield `None` in every entry they touch.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
    failures: Vec<Option<CameraError>>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let v = self.values[i * self.n + j];
        (!v.is_nan()).then_some(v)
    }

    pub fn failure(&self, i: usize) -> Option<&CameraError> {
        self.failures[i].as_ref()
    }

    /// Upper-triangle entries `(i, j, d)` with `i < j` that could be computed.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            (i + 1..self.n).filter_map(move |j| self.get(i, j).map(|d| (i, j, d)))
        })
    }
}

/// Maps every person to 3D once, then fills all pairwise norms.
pub fn batch_distances(people: &[LocalizedPerson], params: &CameraParams) -> DistanceMatrix {
    let n = people.len();
    let mut points = Vec::with_capacity(n);
    let mut failures = Vec::with_capacity(n);
    for p in people {
        match p.world_point(params) {
            Ok(w) => {
                points.push(Some(w));
                failures.push(None);
            }
            Err(e) => {
                points.push(None);
                failures.push(Some(e));
            }
        }
    }
    let mut values = vec![f64::NAN; n * n];
    for i in 0..n {
        let Some(pi) = points[i] else { continue };
        values[i * n + i] = 0.0;
        for j in i + 1..n {
            if let Some(pj) = points[j] {
                let d = pi.distance(&pj);
                values[i * n + j] = d;
                values[j * n + i] = d;
            }
        }
    }
    DistanceMatrix {
        n,
        values,
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::project;

    fn cam() -> CameraParams {
        CameraParams::new(1.0, 600.0, 600.0, 1024.0, 1024.0, 114.0).unwrap()
    }

    // Person whose mid-height point sits at `(x, y)` for height `h`.
    fn person_at(x: f64, y: f64, h: f64, params: &CameraParams) -> LocalizedPerson {
        let pz = params.mount_height - h / 2.0;
        let c = project(&WorldPoint::new(x, y, pz), params).unwrap();
        LocalizedPerson::new(c, h)
    }

    #[test]
    fn identical_centers_are_zero_apart() {
        let p = LocalizedPerson::new(PixelPoint::new(1300.0, 900.0), 65.0);
        assert_eq!(estimate_distance(&p, &p, &cam()).unwrap(), 0.0);
    }

    #[test]
    fn three_four_five() {
        // B - H/2 = 100
        let c = cam();
        let a = person_at(0.0, 0.0, 28.0, &c);
        let b = person_at(30.0, 40.0, 28.0, &c);
        assert!((estimate_distance(&a, &b, &c).unwrap() - 50.0).abs() < 1e-9);
        assert_eq!(
            estimate_distance(&a, &b, &c).unwrap(),
            estimate_distance(&b, &a, &c).unwrap()
        );
    }

    #[test]
    fn collinear_batch() {
        let c = cam();
        let people: Vec<_> = [0.0, 60.0, 120.0]
            .iter()
            .map(|&x| person_at(x - 60.0, 25.0, 70.0, &c))
            .collect();
        let m = batch_distances(&people, &c);
        assert!((m.get(0, 1).unwrap() - 60.0).abs() < 1e-6);
        assert!((m.get(1, 2).unwrap() - 60.0).abs() < 1e-6);
        assert!((m.get(0, 2).unwrap() - 120.0).abs() < 1e-6);
        assert_eq!(m.get(2, 2), Some(0.0));
        let single = estimate_distance(&people[0], &people[2], &c).unwrap();
        assert_eq!(m.get(0, 2).unwrap(), single);
    }

    #[test]
    fn invalid_people_are_marked_not_fatal() {
        let c = cam();
        let people = vec![
            person_at(0.0, 0.0, 70.0, &c),
            LocalizedPerson::new(PixelPoint::new(1024.0 + 900.0, 1024.0), 70.0),
            person_at(50.0, 0.0, 70.0, &c),
            LocalizedPerson::new(PixelPoint::new(1024.0, 1024.0), 300.0),
        ];
        let m = batch_distances(&people, &c);
        assert!(matches!(m.failure(1), Some(CameraError::NoPreimage { .. })));
        assert!(matches!(
            m.failure(3),
            Some(CameraError::InvalidHeight { .. })
        ));
        assert_eq!(m.get(0, 1), None);
        assert_eq!(m.get(1, 1), None);
        assert!((m.get(0, 2).unwrap() - 50.0).abs() < 1e-6);
        assert_eq!(m.pairs().count(), 1);
    }

    #[test]
    fn cached_world_point_is_used() {
        let c = cam();
        let p = person_at(40.0, -30.0, 70.0, &c).localize(&c).unwrap();
        let w = p.cached_world().unwrap();
        assert!((w.x - 40.0).abs() < 1e-9 && (w.y + 30.0).abs() < 1e-9);
    }
}
