//! Analytic primitive geometry: capsules, planes, and their queries.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

/// Segment-plus-radius volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capsule {
    pub a: Point3<f64>,
    pub b: Point3<f64>,
    pub radius: f64,
}

impl Capsule {
    pub fn new(a: Point3<f64>, b: Point3<f64>, radius: f64) -> Self {
        Self { a, b, radius }
    }

    pub fn aabb(&self) -> (Point3<f64>, Point3<f64>) {
        let mut lo = Point3::origin();
        let mut hi = Point3::origin();
        for i in 0..3 {
            lo[i] = self.a[i].min(self.b[i]) - self.radius;
            hi[i] = self.a[i].max(self.b[i]) + self.radius;
        }
        (lo, hi)
    }

    /// Closest point on the axis segment to `p`.
    pub fn closest_axis_point(&self, p: &Point3<f64>) -> Point3<f64> {
        let ab = self.b - self.a;
        let len2 = ab.norm_squared();
        if len2 <= 0.0 {
            return self.a;
        }
        let t = ((p - self.a).dot(&ab) / len2).clamp(0.0, 1.0);
        self.a + ab * t
    }
}

/// Closest points between two segments (Ericson, Real-Time Collision
/// Detection 5.1.9). Returns `(point_on_pq, point_on_rs)`.
pub fn segment_segment_closest(
    p: Point3<f64>,
    q: Point3<f64>,
    r: Point3<f64>,
    s: Point3<f64>,
) -> (Point3<f64>, Point3<f64>) {
    let d1 = q - p;
    let d2 = s - r;
    let rr = p - r;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&rr);

    let (t1, t2);
    if a <= 1e-18 && e <= 1e-18 {
        return (p, r);
    }
    if a <= 1e-18 {
        t1 = 0.0;
        t2 = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&rr);
        if e <= 1e-18 {
            t2 = 0.0;
            t1 = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s1 = if denom.abs() > 1e-18 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut s2 = (b * s1 + f) / e;
            if s2 < 0.0 {
                s2 = 0.0;
                s1 = (-c / a).clamp(0.0, 1.0);
            } else if s2 > 1.0 {
                s2 = 1.0;
                s1 = ((b - c) / a).clamp(0.0, 1.0);
            }
            t1 = s1;
            t2 = s2;
        }
    }
    (p + d1 * t1, r + d2 * t2)
}

/// Signed gap between two capsules (negative when overlapping).
pub fn capsule_gap(a: &Capsule, b: &Capsule) -> f64 {
    let (pa, pb) = segment_segment_closest(a.a, a.b, b.a, b.b);
    (pb - pa).norm() - a.radius - b.radius
}

/// First intersection of ray `o + t*d` (`d` unit) with a capsule, `t >= 0`.
pub fn ray_capsule(o: &Point3<f64>, d: &Vector3<f64>, c: &Capsule) -> Option<f64> {
    let mut best: Option<f64> = None;
    let mut consider = |t: f64| {
        if t >= 0.0 && best.map_or(true, |b| t < b) {
            best = Some(t);
        }
    };

    let axis = c.b - c.a;
    let len2 = axis.norm_squared();
    if len2 > 1e-18 {
        // infinite cylinder part, then clamp to the segment span
        let m = o - c.a;
        let nd = d - axis * (d.dot(&axis) / len2);
        let md = m - axis * (m.dot(&axis) / len2);
        let aq = nd.norm_squared();
        let bq = 2.0 * nd.dot(&md);
        let cq = md.norm_squared() - c.radius * c.radius;
        if aq > 1e-18 {
            let disc = bq * bq - 4.0 * aq * cq;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                for t in [(-bq - sq) / (2.0 * aq), (-bq + sq) / (2.0 * aq)] {
                    if t >= 0.0 {
                        let hit = o + d * t;
                        let s = (hit - c.a).dot(&axis) / len2;
                        if (0.0..=1.0).contains(&s) {
                            consider(t);
                        }
                    }
                }
            }
        }
    }
    // spherical caps
    for center in [c.a, c.b] {
        let m = o - center;
        let b = m.dot(d);
        let cc = m.norm_squared() - c.radius * c.radius;
        let disc = b * b - cc;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            consider(-b - sq);
            consider(-b + sq);
        }
        if len2 <= 1e-18 {
            break;
        }
    }
    best
}

/// Infinite plane through `point` with unit `normal`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Plane {
    pub point: Point3<f64>,
    pub normal: Vector3<f64>,
}

impl Plane {
    /// Intersection parameter of ray `o + t*d` with the plane, `t >= 0`.
    pub fn raycast(&self, o: &Point3<f64>, d: &Vector3<f64>) -> Option<f64> {
        let denom = d.dot(&self.normal);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = (self.point - o).dot(&self.normal) / denom;
        (t >= 0.0).then_some(t)
    }

    /// Signed gap between a capsule and the plane (negative when crossing).
    pub fn capsule_gap(&self, c: &Capsule) -> f64 {
        let da = (c.a - self.point).dot(&self.normal);
        let db = (c.b - self.point).dot(&self.normal);
        if da.signum() != db.signum() {
            return -c.radius - da.abs().min(db.abs());
        }
        da.abs().min(db.abs()) - c.radius
    }
}
