//! Planar geometry: points, arc-length parameterized polylines, Frenet
//! projection and segment intersection.

use alloc::vec::Vec;
use core::ops::{Add, Mul, Neg, Sub};

#[allow(unused_imports)] // used without std
use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Consecutive vertices closer than this are merged.
const DUPLICATE_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("polyline needs at least two distinct points, got {0}")]
    TooFewPoints(usize),
    #[error("non-finite coordinate in polyline")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Self) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Self) -> f64 {
        (self - other).norm()
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            self * (1.0 / n)
        } else {
            self
        }
    }

    pub fn lerp(self, other: Self, t: f64) -> Self {
        self + (other - self) * t
    }

    pub fn from_angle(heading: f64) -> Self {
        Self::new(heading.cos(), heading.sin())
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        Self::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Point2 {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * core::f64::consts::PI;
    let mut r = a % two_pi;
    if r <= -core::f64::consts::PI {
        r += two_pi;
    } else if r > core::f64::consts::PI {
        r -= two_pi;
    }
    r
}

/// Result of projecting a point onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the foot point, in `[0, length]`.
    pub s: f64,
    /// Signed lateral offset, positive to the left of the travel direction.
    pub d: f64,
    /// Euclidean distance to the foot point.
    pub distance: f64,
    pub segment: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub s_a: f64,
    pub s_b: f64,
    pub point: Point2,
    pub segment_a: usize,
    pub segment_b: usize,
}

/// A polyline with cumulative arc lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point2>", into = "Vec<Point2>")]
pub struct Polyline {
    points: Vec<Point2>,
    cum: Vec<f64>,
}

impl TryFrom<Vec<Point2>> for Polyline {
    type Error = GeometryError;
    fn try_from(points: Vec<Point2>) -> Result<Self, Self::Error> {
        Polyline::new(points)
    }
}

impl From<Polyline> for Vec<Point2> {
    fn from(p: Polyline) -> Self {
        p.points
    }
}

impl Polyline {
    pub fn new(points: Vec<Point2>) -> Result<Self, GeometryError> {
        if points.iter().any(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let raw = points.len();
        let mut dedup: Vec<Point2> = Vec::with_capacity(raw);
        for p in points {
            if dedup.last().is_none_or(|q| q.distance(p) > DUPLICATE_EPS) {
                dedup.push(p);
            }
        }
        if dedup.len() < 2 {
            return Err(GeometryError::TooFewPoints(raw.min(dedup.len())));
        }
        let mut cum = Vec::with_capacity(dedup.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for w in dedup.windows(2) {
            acc += w[0].distance(w[1]);
            cum.push(acc);
        }
        Ok(Self { points: dedup, cum })
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    /// Cumulative arc length at each vertex.
    pub fn arc_lengths(&self) -> &[f64] {
        &self.cum
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn length(&self) -> f64 {
        *self.cum.last().unwrap_or(&0.0)
    }

    pub fn first(&self) -> Point2 {
        self.points[0]
    }

    pub fn last(&self) -> Point2 {
        self.points[self.points.len() - 1]
    }

    /// Index of the segment containing arc length `s` (clamped).
    pub fn segment_at(&self, s: f64) -> usize {
        let n = self.points.len() - 1;
        if s <= 0.0 {
            return 0;
        }
        // first vertex with cum > s, minus one
        let idx = self.cum.partition_point(|&c| c <= s);
        idx.saturating_sub(1).min(n - 1)
    }

    fn segment_dir(&self, seg: usize) -> Point2 {
        (self.points[seg + 1] - self.points[seg]).normalized()
    }

    /// Point at arc length `s`; extrapolates linearly past either end.
    pub fn point_at(&self, s: f64) -> Point2 {
        let seg = self.segment_at(s);
        let dir = self.segment_dir(seg);
        self.points[seg] + dir * (s - self.cum[seg])
    }

    /// Unit tangent at arc length `s`.
    pub fn tangent_at(&self, s: f64) -> Point2 {
        self.segment_dir(self.segment_at(s))
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        self.tangent_at(s).angle()
    }

    /// Inverse of [`Polyline::project`] for points on a straight stretch.
    pub fn unproject(&self, s: f64, d: f64) -> Point2 {
        self.point_at(s) + self.tangent_at(s).perp() * d
    }

    /// Nearest point on the polyline. Ties go to the lower segment index.
    pub fn project(&self, p: Point2) -> Projection {
        let mut best = Projection {
            s: 0.0,
            d: 0.0,
            distance: f64::INFINITY,
            segment: 0,
        };
        let mut best_sq = f64::INFINITY;
        for seg in 0..self.points.len() - 1 {
            let a = self.points[seg];
            let b = self.points[seg + 1];
            let ab = b - a;
            let len_sq = ab.dot(ab);
            let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
            let foot = a + ab * t;
            let dist_sq = (p - foot).dot(p - foot);
            if dist_sq < best_sq - 1e-18 {
                best_sq = dist_sq;
                let seg_len = self.cum[seg + 1] - self.cum[seg];
                let dir = ab * (1.0 / seg_len);
                best = Projection {
                    s: self.cum[seg] + t * seg_len,
                    d: dir.cross(p - foot),
                    distance: dist_sq.sqrt(),
                    segment: seg,
                };
            }
        }
        best
    }

    /// `n >= 2` points spaced uniformly in arc length, endpoints included.
    pub fn resample_uniform(&self, n: usize) -> Vec<Point2> {
        let n = n.max(2);
        let len = self.length();
        (0..n)
            .map(|i| {
                if i == n - 1 {
                    self.last()
                } else {
                    self.point_at(len * i as f64 / (n - 1) as f64)
                }
            })
            .collect()
    }

    /// Resamples with spacing at most `spacing`.
    pub fn resampled(&self, spacing: f64) -> Polyline {
        let n = (self.length() / spacing).ceil() as usize + 1;
        Polyline::new(self.resample_uniform(n)).expect("resampling a valid polyline")
    }

    /// Portion between arc lengths `s0 < s1` (clamped to the polyline).
    pub fn slice(&self, s0: f64, s1: f64) -> Option<Polyline> {
        let s0 = s0.max(0.0);
        let s1 = s1.min(self.length());
        if s1 - s0 <= DUPLICATE_EPS {
            return None;
        }
        let mut pts = Vec::new();
        pts.push(self.point_at(s0));
        for (p, &c) in self.points.iter().zip(&self.cum) {
            if c > s0 && c < s1 {
                pts.push(*p);
            }
        }
        pts.push(self.point_at(s1));
        Polyline::new(pts).ok()
    }

    /// Appends `other`, dropping its first vertex when it coincides with our last.
    pub fn concat(&self, other: &Polyline) -> Polyline {
        let mut pts = self.points.clone();
        pts.extend_from_slice(&other.points);
        Polyline::new(pts).expect("concatenation of valid polylines")
    }

    /// All crossings with `other`, sorted by arc length along `self`.
    pub fn crossings(&self, other: &Polyline) -> Vec<Crossing> {
        let mut out = Vec::new();
        let bbox_b: Vec<[f64; 4]> = other
            .points
            .windows(2)
            .map(|w| {
                [
                    w[0].x.min(w[1].x),
                    w[0].x.max(w[1].x),
                    w[0].y.min(w[1].y),
                    w[0].y.max(w[1].y),
                ]
            })
            .collect();
        for i in 0..self.points.len() - 1 {
            let (p0, p1) = (self.points[i], self.points[i + 1]);
            let (xmin, xmax) = (p0.x.min(p1.x), p0.x.max(p1.x));
            let (ymin, ymax) = (p0.y.min(p1.y), p0.y.max(p1.y));
            for (j, bb) in bbox_b.iter().enumerate() {
                if bb[0] > xmax + 1e-9 || bb[1] < xmin - 1e-9 || bb[2] > ymax + 1e-9 || bb[3] < ymin - 1e-9 {
                    continue;
                }
                let (q0, q1) = (other.points[j], other.points[j + 1]);
                if let Some((t, u)) = segment_intersection(p0, p1, q0, q1) {
                    out.push(Crossing {
                        s_a: self.cum[i] + t * (self.cum[i + 1] - self.cum[i]),
                        s_b: other.cum[j] + u * (other.cum[j + 1] - other.cum[j]),
                        point: p0.lerp(p1, t),
                        segment_a: i,
                        segment_b: j,
                    });
                }
            }
        }
        out.sort_by(|a, b| a.s_a.total_cmp(&b.s_a).then(a.s_b.total_cmp(&b.s_b)));
        out
    }
}

/// Intersection of segments `p0p1` and `q0q1`, endpoints inclusive.
///
/// Returns the parameters `(t, u)` along each segment. Parallel and
/// collinear pairs yield `None`.
pub fn segment_intersection(p0: Point2, p1: Point2, q0: Point2, q1: Point2) -> Option<(f64, f64)> {
    let r = p1 - p0;
    let s = q1 - q0;
    let denom = r.cross(s);
    let scale = r.norm() * s.norm();
    if denom.abs() <= 1e-12 * scale {
        return None;
    }
    let qp = q0 - p0;
    let t = qp.cross(s) / denom;
    let u = qp.cross(r) / denom;
    const TOL: f64 = 1e-9;
    if (-TOL..=1.0 + TOL).contains(&t) && (-TOL..=1.0 + TOL).contains(&u) {
        Some((t.clamp(0.0, 1.0), u.clamp(0.0, 1.0)))
    } else {
        None
    }
}

/// Signed curvature of the circle through three points (positive for a left turn).
pub fn three_point_curvature(a: Point2, b: Point2, c: Point2) -> f64 {
    let ab = a.distance(b);
    let bc = b.distance(c);
    let ca = c.distance(a);
    let denom = ab * bc * ca;
    if denom <= 1e-15 {
        return 0.0;
    }
    2.0 * (b - a).cross(c - b) / denom
}

/// Signed curvature at each vertex; endpoints copy their neighbour.
pub fn vertex_curvatures(points: &[Point2]) -> Vec<f64> {
    let n = points.len();
    if n < 3 {
        return alloc::vec![0.0; n];
    }
    let mut k = Vec::with_capacity(n);
    k.push(0.0);
    for w in points.windows(3) {
        k.push(three_point_curvature(w[0], w[1], w[2]));
    }
    k.push(0.0);
    k[0] = k[1];
    k[n - 1] = k[n - 2];
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn straight(len: f64) -> Polyline {
        Polyline::new(vec![Point2::new(0.0, 0.0), Point2::new(len, 0.0)]).unwrap()
    }

    #[test]
    fn rejects_degenerate() {
        assert!(matches!(
            Polyline::new(vec![Point2::new(1.0, 1.0)]),
            Err(GeometryError::TooFewPoints(1))
        ));
        assert!(Polyline::new(vec![Point2::new(1.0, 1.0), Point2::new(1.0, 1.0)]).is_err());
    }

    #[test]
    fn projection_left_positive() {
        let p = straight(10.0);
        let pr = p.project(Point2::new(5.0, 1.0));
        assert!((pr.s - 5.0).abs() < 1e-12);
        assert!((pr.d - 1.0).abs() < 1e-12);
        let pr = p.project(Point2::new(5.0, -2.0));
        assert!((pr.d + 2.0).abs() < 1e-12);
    }

    #[test]
    fn corner_tie_goes_to_lower_segment() {
        let p = Polyline::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(10.0, 0.0),
            Point2::new(10.0, 10.0),
        ])
        .unwrap();
        // equidistant from both segments' interior feet is the corner itself
        let pr = p.project(Point2::new(11.0, -1.0));
        assert_eq!(pr.segment, 0);
        assert!((pr.s - 10.0).abs() < 1e-12);
    }

    #[test]
    fn crossing_of_perpendicular_lines() {
        let a = straight(10.0);
        let b = Polyline::new(vec![Point2::new(4.0, -5.0), Point2::new(4.0, 5.0)]).unwrap();
        let c = a.crossings(&b);
        assert_eq!(c.len(), 1);
        assert!((c[0].s_a - 4.0).abs() < 1e-12);
        assert!((c[0].s_b - 5.0).abs() < 1e-12);
    }

    #[test]
    fn curvature_of_circle_points() {
        let r = 20.0;
        let pts: Vec<Point2> = (0..3)
            .map(|i| Point2::from_angle(0.1 * i as f64) * r)
            .collect();
        assert!((three_point_curvature(pts[0], pts[1], pts[2]) - 1.0 / r).abs() < 1e-9);
        assert!((three_point_curvature(pts[2], pts[1], pts[0]) + 1.0 / r).abs() < 1e-9);
    }

    #[test]
    fn slice_and_extrapolate() {
        let p = straight(10.0);
        let s = p.slice(2.0, 7.0).unwrap();
        assert!((s.length() - 5.0).abs() < 1e-12);
        assert_eq!(p.point_at(12.0), Point2::new(12.0, 0.0));
        assert_eq!(p.point_at(-1.0), Point2::new(-1.0, 0.0));
    }
}
