//! Minimal 3D geometry: points, axis-aligned boxes, segment distance queries.
//!
//! All coordinates are micrometers unless a function says otherwise.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn axis(self, i: usize) -> f64 {
        match i {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("axis index {i} out of range"),
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Axis-aligned box given by its two corners (`min` componentwise ≤ `max`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Aabb { min, max }
    }

    /// Smallest box enclosing all points. `None` for an empty iterator.
    pub fn from_points(points: impl IntoIterator<Item = Vec3>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut min = first;
        let mut max = first;
        for p in it {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            min.z = min.z.min(p.z);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
            max.z = max.z.max(p.z);
        }
        Some(Aabb { min, max })
    }

    pub fn dilated(&self, r: f64) -> Aabb {
        Aabb {
            min: self.min - Vec3::new(r, r, r),
            max: self.max + Vec3::new(r, r, r),
        }
    }

    pub fn contains(&self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    /// Squared Euclidean distance from a point to this box (0 inside).
    pub fn dist_sq_to_point(&self, p: Vec3) -> f64 {
        let mut d2 = 0.0;
        for i in 0..3 {
            let v = p.axis(i);
            let lo = self.min.axis(i);
            let hi = self.max.axis(i);
            let d = if v < lo {
                lo - v
            } else if v > hi {
                v - hi
            } else {
                0.0
            };
            d2 += d * d;
        }
        d2
    }
}

/// Squared distance from point `p` to the segment `a`..`b`.
/// Degenerate segments (a == b) reduce to point distance.
pub fn point_segment_dist_sq(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return (p - a).norm_sq();
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm_sq()
}

/// Squared distance between the segment `a`..`b` and box `bb`.
///
/// The squared distance from a segment point to the box is piecewise
/// quadratic in the segment parameter t; the pieces change where the
/// segment crosses one of the six slab planes. We minimize each piece in
/// closed form.
pub fn segment_box_dist_sq(a: Vec3, b: Vec3, bb: &Aabb) -> f64 {
    let d = b - a;

    // Breakpoints of the active-constraint set along t.
    let mut ts = vec![0.0_f64, 1.0];
    for i in 0..3 {
        let di = d.axis(i);
        if di == 0.0 {
            continue;
        }
        let ai = a.axis(i);
        for plane in [bb.min.axis(i), bb.max.axis(i)] {
            let t = (plane - ai) / di;
            if t > 0.0 && t < 1.0 {
                ts.push(t);
            }
        }
    }
    ts.sort_by(|x, y| x.partial_cmp(y).unwrap());

    let mut best = f64::INFINITY;
    for w in ts.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        if t1 <= t0 {
            continue;
        }
        let tm = 0.5 * (t0 + t1);
        let pm = a + d * tm;

        // On this interval the per-axis violation is affine: g_i(t) = c_i + s_i t.
        let mut c = [0.0_f64; 3];
        let mut s = [0.0_f64; 3];
        for i in 0..3 {
            let v = pm.axis(i);
            if v < bb.min.axis(i) {
                c[i] = bb.min.axis(i) - a.axis(i);
                s[i] = -d.axis(i);
            } else if v > bb.max.axis(i) {
                c[i] = a.axis(i) - bb.max.axis(i);
                s[i] = d.axis(i);
            }
        }
        // f(t) = sum (c_i + s_i t)^2; vertex at t* = -sum(c s)/sum(s^2).
        let ss: f64 = s.iter().map(|v| v * v).sum();
        let cs: f64 = c.iter().zip(&s).map(|(c, s)| c * s).sum();
        let t_star = if ss > 0.0 {
            (-cs / ss).clamp(t0, t1)
        } else {
            t0
        };
        for t in [t0, t_star, t1] {
            let f: f64 = (0..3).map(|i| (c[i] + s[i] * t).max(0.0).powi(2)).sum();
            best = best.min(f);
        }
    }
    best
}

/// Clip the segment `a`..`b` to box `bb` (Liang–Barsky slab clipping).
/// Returns the clipped endpoints, or `None` when the segment misses the box.
pub fn clip_segment_to_box(a: Vec3, b: Vec3, bb: &Aabb) -> Option<(Vec3, Vec3)> {
    let d = b - a;
    if d.norm_sq() == 0.0 {
        return bb.contains(a).then_some((a, a));
    }
    let mut t0 = 0.0_f64;
    let mut t1 = 1.0_f64;
    for i in 0..3 {
        let ai = a.axis(i);
        let di = d.axis(i);
        let lo = bb.min.axis(i);
        let hi = bb.max.axis(i);
        if di == 0.0 {
            if ai < lo || ai > hi {
                return None;
            }
            continue;
        }
        let mut ta = (lo - ai) / di;
        let mut tb = (hi - ai) / di;
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return None;
        }
    }
    let p0 = if t0 == 0.0 { a } else { a + d * t0 };
    let p1 = if t1 == 1.0 { b } else { a + d * t1 };
    Some((p0, p1))
}
