//! Parametric curve primitives in pixel coordinates.
//!
//! Every primitive is parameterized over `t ∈ [0, 1]`. Points use image
//! coordinates: origin top-left, x to the right, y downward.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of uniform samples in the coarse scan of [`Primitive::closest_point`].
const SCAN_SAMPLES: usize = 64;
const GOLDEN_ITERS: usize = 30;
const NEWTON_ITERS: usize = 12;
/// Step used when a Bézier cusp forces a one-sided tangent estimate.
pub const CUSP_FALLBACK_STEP: f64 = 1e-4;
/// Maximum deviation of a flattened polyline from its curve.
pub const FLATNESS: f64 = 1e-3;
/// Default distance within which two curves are considered to meet.
pub const DEFAULT_INTERSECTION_TOL: f64 = 0.5;
/// Refined intersections with a smaller residual are true crossings.
const EXACT_RESIDUAL: f64 = 1e-9;
/// Crossings closer than this are one point.
const SAME_POINT: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("curve parameter {0} outside [0, 1]")]
    ParameterOutOfRange(f64),
    #[error("zero derivative at t = {0}")]
    DegenerateTangent(f64),
    #[error("invalid primitive: {0}")]
    InvalidPrimitive(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// A 2D point or vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        self + (other - self) * t
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// Reduces an angle to `[0, π)`.
pub fn reduce_mod_pi(angle: f64) -> f64 {
    let r = angle.rem_euclid(PI);
    // rem_euclid can round up to exactly π for tiny negative inputs
    if r >= PI {
        0.0
    } else {
        r
    }
}

/// Distance between two undirected angles, in `[0, π/2]`.
pub fn angle_distance_mod_pi(a: f64, b: f64) -> f64 {
    let d = reduce_mod_pi(a - b);
    d.min(PI - d)
}

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub min: Point,
    pub max: Point,
}

impl Bounds {
    fn from_points(points: &[Point]) -> Bounds {
        let mut min = Point::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        Bounds { min, max }
    }

    /// Euclidean distance from `p` to the box, zero inside it.
    pub fn distance_to(&self, p: Point) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        dx.hypot(dy)
    }

    fn overlaps(&self, other: &Bounds, margin: f64) -> bool {
        self.min.x <= other.max.x + margin
            && other.min.x <= self.max.x + margin
            && self.min.y <= other.max.y + margin
            && other.min.y <= self.max.y + margin
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Primitive {
    Line {
        p0: Point,
        p1: Point,
    },
    /// Circular arc swept from `angle_start` to `angle_end` (either direction).
    Arc {
        center: Point,
        radius: f64,
        angle_start: f64,
        angle_end: f64,
    },
    CubicBezier {
        p0: Point,
        p1: Point,
        p2: Point,
        p3: Point,
    },
}

impl Primitive {
    pub fn line(p0: Point, p1: Point) -> Result<Self> {
        let prim = Primitive::Line { p0, p1 };
        prim.validate()?;
        Ok(prim)
    }

    pub fn arc(center: Point, radius: f64, angle_start: f64, angle_end: f64) -> Result<Self> {
        let prim = Primitive::Arc {
            center,
            radius,
            angle_start,
            angle_end,
        };
        prim.validate()?;
        Ok(prim)
    }

    pub fn cubic_bezier(p0: Point, p1: Point, p2: Point, p3: Point) -> Result<Self> {
        let prim = Primitive::CubicBezier { p0, p1, p2, p3 };
        prim.validate()?;
        Ok(prim)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: &str| Err(GeometryError::InvalidPrimitive(msg.to_string()));
        match *self {
            Primitive::Line { p0, p1 } => {
                if !(p0.is_finite() && p1.is_finite()) {
                    return invalid("line has non-finite coordinates");
                }
                if p0 == p1 {
                    return invalid("line endpoints coincide");
                }
            }
            Primitive::Arc {
                center,
                radius,
                angle_start,
                angle_end,
            } => {
                if !(center.is_finite() && angle_start.is_finite() && angle_end.is_finite()) {
                    return invalid("arc has non-finite parameters");
                }
                if !(radius > 0.0 && radius.is_finite()) {
                    return invalid("arc radius must be positive");
                }
                let sweep = angle_end - angle_start;
                if sweep == 0.0 {
                    return invalid("arc has zero sweep");
                }
                if sweep.abs() > TAU {
                    return invalid("arc sweep exceeds a full turn");
                }
            }
            Primitive::CubicBezier { p0, p1, p2, p3 } => {
                if ![p0, p1, p2, p3].iter().all(|p| p.is_finite()) {
                    return invalid("bezier has non-finite control points");
                }
                if p0 == p1 && p1 == p2 && p2 == p3 {
                    return invalid("bezier control points all coincide");
                }
            }
        }
        Ok(())
    }

    /// Point at parameter `t`.
    pub fn eval(&self, t: f64) -> Result<Point> {
        check_param(t)?;
        Ok(self.point_at(t))
    }

    /// Unchecked evaluation; `t` may lie slightly outside `[0, 1]`.
    pub fn point_at(&self, t: f64) -> Point {
        match *self {
            Primitive::Line { p0, p1 } => p0.lerp(p1, t),
            Primitive::Arc {
                center,
                radius,
                angle_start,
                angle_end,
            } => {
                let theta = angle_start + t * (angle_end - angle_start);
                center + Point::new(theta.cos(), theta.sin()) * radius
            }
            Primitive::CubicBezier { p0, p1, p2, p3 } => {
                let s = 1.0 - t;
                p0 * (s * s * s) + p1 * (3.0 * s * s * t) + p2 * (3.0 * s * t * t) + p3 * (t * t * t)
            }
        }
    }

    /// First derivative with respect to `t`.
    pub fn derivative(&self, t: f64) -> Point {
        match *self {
            Primitive::Line { p0, p1 } => p1 - p0,
            Primitive::Arc {
                radius,
                angle_start,
                angle_end,
                ..
            } => {
                let sweep = angle_end - angle_start;
                let theta = angle_start + t * sweep;
                Point::new(-theta.sin(), theta.cos()) * (radius * sweep)
            }
            Primitive::CubicBezier { p0, p1, p2, p3 } => {
                let s = 1.0 - t;
                ((p1 - p0) * (s * s) + (p2 - p1) * (2.0 * s * t) + (p3 - p2) * (t * t)) * 3.0
            }
        }
    }

    pub fn second_derivative(&self, t: f64) -> Point {
        match *self {
            Primitive::Line { .. } => Point::default(),
            Primitive::Arc {
                radius,
                angle_start,
                angle_end,
                ..
            } => {
                let sweep = angle_end - angle_start;
                let theta = angle_start + t * sweep;
                Point::new(-theta.cos(), -theta.sin()) * (radius * sweep * sweep)
            }
            Primitive::CubicBezier { p0, p1, p2, p3 } => {
                let s = 1.0 - t;
                ((p2 - p1 * 2.0 + p0) * s + (p3 - p2 * 2.0 + p1) * t) * 6.0
            }
        }
    }

    /// Slope angle of the tangent at `t`, reduced to `[0, π)`.
    ///
    /// Fails with [`GeometryError::DegenerateTangent`] where the derivative
    /// vanishes (Bézier cusps).
    pub fn tangent_angle(&self, t: f64) -> Result<f64> {
        check_param(t)?;
        let d = self.derivative(t);
        if d.norm() <= 1e-12 * (1.0 + self.scale()) {
            return Err(GeometryError::DegenerateTangent(t));
        }
        Ok(reduce_mod_pi(d.y.atan2(d.x)))
    }

    /// Like [`tangent_angle`](Self::tangent_angle), but falls back to a
    /// one-sided finite difference of step [`CUSP_FALLBACK_STEP`] at cusps.
    pub fn tangent_angle_or_fallback(&self, t: f64) -> Result<f64> {
        match self.tangent_angle(t) {
            Err(GeometryError::DegenerateTangent(_)) => {
                let h = CUSP_FALLBACK_STEP;
                let d = if t + h <= 1.0 {
                    self.point_at(t + h) - self.point_at(t)
                } else {
                    self.point_at(t) - self.point_at(t - h)
                };
                Ok(reduce_mod_pi(d.y.atan2(d.x)))
            }
            other => other,
        }
    }

    /// Parameter of the point on the curve nearest to `p`, and its distance.
    pub fn closest_point(&self, p: Point) -> (f64, f64) {
        match *self {
            Primitive::Line { p0, p1 } => {
                let d = p1 - p0;
                let t = ((p - p0).dot(d) / d.norm_sq()).clamp(0.0, 1.0);
                (t, self.point_at(t).distance(p))
            }
            Primitive::Arc {
                center,
                angle_start,
                angle_end,
                ..
            } => {
                let mut best = (0.0, self.point_at(0.0).distance(p));
                let end = self.point_at(1.0).distance(p);
                if end < best.1 {
                    best = (1.0, end);
                }
                let rel = p - center;
                if rel.norm() > 0.0 {
                    let sweep = angle_end - angle_start;
                    let phi = rel.y.atan2(rel.x);
                    let offset = if sweep > 0.0 {
                        (phi - angle_start).rem_euclid(TAU)
                    } else {
                        (angle_start - phi).rem_euclid(TAU)
                    };
                    if offset <= sweep.abs() {
                        let t = offset / sweep.abs();
                        let d = self.point_at(t).distance(p);
                        if d < best.1 {
                            best = (t, d);
                        }
                    }
                }
                best
            }
            Primitive::CubicBezier { .. } => self.closest_point_numeric(p),
        }
    }

    /// Coarse uniform scan, golden-section refinement around every local
    /// minimum of the scan, then Newton polishing.
    fn closest_point_numeric(&self, p: Point) -> (f64, f64) {
        let dist2 = |t: f64| (self.point_at(t) - p).norm_sq();
        let samples: Vec<f64> = (0..=SCAN_SAMPLES)
            .map(|i| dist2(i as f64 / SCAN_SAMPLES as f64))
            .collect();
        let step = 1.0 / SCAN_SAMPLES as f64;
        let mut best_t = 0.0;
        let mut best_d2 = samples[0];
        for i in 0..=SCAN_SAMPLES {
            let left = if i == 0 { f64::INFINITY } else { samples[i - 1] };
            let right = if i == SCAN_SAMPLES {
                f64::INFINITY
            } else {
                samples[i + 1]
            };
            if samples[i] > left || samples[i] > right {
                continue;
            }
            let lo = (i as f64 - 1.0).max(0.0) * step;
            let hi = ((i + 1) as f64).min(SCAN_SAMPLES as f64) * step;
            let mut t = golden_section(&dist2, lo, hi);
            let mut d2 = dist2(t);
            let ti = i as f64 * step;
            if samples[i] < d2 {
                t = ti;
                d2 = samples[i];
            }
            let (t, d2) = self.newton_polish(p, t, d2, lo, hi);
            if d2 < best_d2 || (d2 == best_d2 && t < best_t) {
                best_t = t;
                best_d2 = d2;
            }
        }
        (best_t, best_d2.sqrt())
    }

    /// Newton iterations on `(B(t) − p)·B'(t) = 0`, accepted while the
    /// stationarity residual shrinks.
    fn newton_polish(&self, p: Point, t0: f64, d2_0: f64, lo: f64, hi: f64) -> (f64, f64) {
        let grad = |t: f64| (self.point_at(t) - p).dot(self.derivative(t));
        let mut t = t0;
        let mut g = grad(t);
        for _ in 0..NEWTON_ITERS {
            let r = self.point_at(t) - p;
            let d1 = self.derivative(t);
            let h = d1.norm_sq() + r.dot(self.second_derivative(t));
            if h <= 0.0 || g == 0.0 {
                break;
            }
            let next = (t - g / h).clamp(lo, hi);
            let next_g = grad(next);
            if next == t || next_g.abs() >= g.abs() {
                break;
            }
            t = next;
            g = next_g;
        }
        let d2 = (self.point_at(t) - p).norm_sq();
        // tolerate roundoff in the distance itself, which is far noisier than
        // the stationarity residual close to the curve
        if d2.sqrt() > d2_0.sqrt() + 1e-9 {
            (t0, d2_0)
        } else {
            (t, d2)
        }
    }

    /// Bounding box of the curve (a superset for Béziers and arcs).
    pub fn bounds(&self) -> Bounds {
        match *self {
            Primitive::Line { p0, p1 } => Bounds::from_points(&[p0, p1]),
            Primitive::Arc { center, radius, .. } => Bounds {
                min: center - Point::new(radius, radius),
                max: center + Point::new(radius, radius),
            },
            Primitive::CubicBezier { p0, p1, p2, p3 } => Bounds::from_points(&[p0, p1, p2, p3]),
        }
    }

    /// Polyline approximation within `tolerance` pixels of the curve, as
    /// `(point, parameter)` vertices with increasing parameter.
    pub fn flatten(&self, tolerance: f64) -> Vec<(Point, f64)> {
        match *self {
            Primitive::Line { p0, p1 } => vec![(p0, 0.0), (p1, 1.0)],
            Primitive::Arc {
                radius,
                angle_start,
                angle_end,
                ..
            } => {
                let max_step = if tolerance >= radius {
                    PI / 2.0
                } else {
                    2.0 * (1.0 - tolerance / radius).acos()
                };
                let n = ((angle_end - angle_start).abs() / max_step).ceil().max(1.0) as usize;
                (0..=n)
                    .map(|i| {
                        let t = i as f64 / n as f64;
                        (self.point_at(t), t)
                    })
                    .collect()
            }
            Primitive::CubicBezier { p0, p1, p2, p3 } => {
                let mut out = vec![(p0, 0.0)];
                flatten_bezier([p0, p1, p2, p3], 0.0, 1.0, tolerance, 0, &mut out);
                out
            }
        }
    }

    /// Whether two non-adjacent pieces of the flattened curve cross.
    /// Lines and arcs shorter than a full turn never self-intersect.
    pub fn has_self_intersection(&self) -> bool {
        if !matches!(self, Primitive::CubicBezier { .. }) {
            return false;
        }
        let flat = self.flatten(FLATNESS);
        let boxes: Vec<Bounds> = flat
            .windows(2)
            .map(|w| Bounds::from_points(&[w[0].0, w[1].0]))
            .collect();
        for i in 0..boxes.len() {
            for j in i + 2..boxes.len() {
                if !boxes[i].overlaps(&boxes[j], 0.0) {
                    continue;
                }
                let (_, _, d) =
                    segment_segment_closest(flat[i].0, flat[i + 1].0, flat[j].0, flat[j + 1].0);
                if d == 0.0 {
                    return true;
                }
            }
        }
        false
    }

    /// Characteristic coordinate magnitude, used to scale degeneracy checks.
    fn scale(&self) -> f64 {
        let b = self.bounds();
        (b.max - b.min).norm()
    }
}

fn check_param(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(GeometryError::ParameterOutOfRange(t))
    }
}

fn golden_section(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..GOLDEN_ITERS {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

fn flatten_bezier(
    ctrl: [Point; 4],
    t0: f64,
    t1: f64,
    tolerance: f64,
    depth: u32,
    out: &mut Vec<(Point, f64)>,
) {
    let [p0, p1, p2, p3] = ctrl;
    if depth >= 24 || control_deviation(ctrl) <= tolerance {
        out.push((p3, t1));
        return;
    }
    // de Casteljau split at the midpoint
    let p01 = p0.lerp(p1, 0.5);
    let p12 = p1.lerp(p2, 0.5);
    let p23 = p2.lerp(p3, 0.5);
    let p012 = p01.lerp(p12, 0.5);
    let p123 = p12.lerp(p23, 0.5);
    let mid = p012.lerp(p123, 0.5);
    let tm = 0.5 * (t0 + t1);
    flatten_bezier([p0, p01, p012, mid], t0, tm, tolerance, depth + 1, out);
    flatten_bezier([mid, p123, p23, p3], tm, t1, tolerance, depth + 1, out);
}

/// Upper bound on the distance between a cubic and its chord.
fn control_deviation([p0, p1, p2, p3]: [Point; 4]) -> f64 {
    point_segment_distance(p1, p0, p3).max(point_segment_distance(p2, p0, p3))
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let d = b - a;
    let len2 = d.norm_sq();
    if len2 == 0.0 {
        return p.distance(a);
    }
    let s = ((p - a).dot(d) / len2).clamp(0.0, 1.0);
    p.distance(a + d * s)
}

/// Closest points between segments `[p1, q1]` and `[p2, q2]`, returned as
/// `(s, u, distance)` with `s`, `u` the local segment parameters.
fn segment_segment_closest(p1: Point, q1: Point, p2: Point, q2: Point) -> (f64, f64, f64) {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.norm_sq();
    let e = d2.norm_sq();
    let f = d2.dot(r);
    let (s, u);
    if a <= f64::EPSILON && e <= f64::EPSILON {
        return (0.0, 0.0, p1.distance(p2));
    }
    if a <= f64::EPSILON {
        s = 0.0;
        u = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(r);
        if e <= f64::EPSILON {
            u = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > 0.0 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut u0 = (b * s0 + f) / e;
            if u0 < 0.0 {
                u0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if u0 > 1.0 {
                u0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            u = u0;
        }
    }
    let dist = (p1 + d1 * s).distance(p2 + d2 * u);
    (s, u, dist)
}

/// Meeting point of two curves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intersection {
    pub t_a: f64,
    pub t_b: f64,
    pub point: Point,
    /// `|a(t_a) − b(t_b)|`.
    pub residual: f64,
}

/// Junction of two primitives of a scene.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Junction {
    pub primitive_index_a: usize,
    pub primitive_index_b: usize,
    pub t_a: f64,
    pub t_b: f64,
    pub point: Point,
}

impl Junction {
    pub fn involves(&self, index: usize) -> bool {
        self.primitive_index_a == index || self.primitive_index_b == index
    }

    /// The other primitive and its parameter, if `index` takes part.
    pub fn partner_of(&self, index: usize) -> Option<(usize, f64)> {
        if self.primitive_index_a == index {
            Some((self.primitive_index_b, self.t_b))
        } else if self.primitive_index_b == index {
            Some((self.primitive_index_a, self.t_a))
        } else {
            None
        }
    }
}

/// All points where `a` and `b` come within `tol` pixels of each other.
///
/// Both curves are flattened to [`FLATNESS`], nearby segment pairs are
/// grouped into connected clusters, and each cluster yields one point
/// refined with Newton iterations on `a(t_a) = b(t_b)`.
pub fn intersections(a: &Primitive, b: &Primitive, tol: f64) -> Vec<Intersection> {
    let fa = a.flatten(FLATNESS);
    let fb = b.flatten(FLATNESS);
    intersect_flattened(a, &fa, b, &fb, tol)
}

fn intersect_flattened(
    a: &Primitive,
    fa: &[(Point, f64)],
    b: &Primitive,
    fb: &[(Point, f64)],
    tol: f64,
) -> Vec<Intersection> {
    if !a.bounds().overlaps(&b.bounds(), tol) {
        return Vec::new();
    }
    let seg_bounds = |f: &[(Point, f64)]| -> Vec<Bounds> {
        f.windows(2)
            .map(|w| Bounds::from_points(&[w[0].0, w[1].0]))
            .collect()
    };
    let ba = seg_bounds(fa);
    let bb = seg_bounds(fb);

    struct Candidate {
        i: usize,
        j: usize,
        t_a: f64,
        t_b: f64,
        dist: f64,
    }
    let mut candidates = Vec::new();
    for (i, box_a) in ba.iter().enumerate() {
        for (j, box_b) in bb.iter().enumerate() {
            if !box_a.overlaps(box_b, tol) {
                continue;
            }
            let (s, u, dist) = segment_segment_closest(fa[i].0, fa[i + 1].0, fb[j].0, fb[j + 1].0);
            if dist <= tol {
                candidates.push(Candidate {
                    i,
                    j,
                    t_a: fa[i].1 + s * (fa[i + 1].1 - fa[i].1),
                    t_b: fb[j].1 + u * (fb[j + 1].1 - fb[j].1),
                    dist,
                });
            }
        }
    }
    if candidates.is_empty() {
        return Vec::new();
    }

    // cluster candidates whose segment indices are 8-adjacent
    let index: HashMap<(usize, usize), usize> = candidates
        .iter()
        .enumerate()
        .map(|(k, c)| ((c.i, c.j), k))
        .collect();
    let mut parent: Vec<usize> = (0..candidates.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (k, c) in candidates.iter().enumerate() {
        for di in -1i64..=1 {
            for dj in -1i64..=1 {
                let ni = c.i as i64 + di;
                let nj = c.j as i64 + dj;
                if ni < 0 || nj < 0 {
                    continue;
                }
                if let Some(&other) = index.get(&(ni as usize, nj as usize)) {
                    let ra = find(&mut parent, k);
                    let rb = find(&mut parent, other);
                    if ra != rb {
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                }
            }
        }
    }
    let mut best: HashMap<usize, usize> = HashMap::new();
    for k in 0..candidates.len() {
        let root = find(&mut parent, k);
        let entry = best.entry(root).or_insert(k);
        if candidates[k].dist < candidates[*entry].dist {
            *entry = k;
        }
    }
    // every crossing segment pair seeds a refinement, plus each cluster's
    // closest pair so that near misses are reported too
    let mut seeds: Vec<usize> = best.into_values().collect();
    seeds.extend((0..candidates.len()).filter(|&k| candidates[k].dist <= EXACT_RESIDUAL));
    seeds.sort_unstable();
    seeds.dedup();

    let mut found: Vec<Intersection> = seeds
        .into_iter()
        .map(|k| refine_intersection(a, b, candidates[k].t_a, candidates[k].t_b))
        .filter(|x| x.residual <= tol)
        .collect();

    // Closed curves can report the same point from both ends of the
    // polyline. Distinct exact crossings are kept however close they are;
    // near misses merge with anything within `tol`.
    found.sort_by(|x, y| x.residual.total_cmp(&y.residual));
    let mut unique: Vec<Intersection> = Vec::new();
    for x in found {
        let duplicate = unique.iter().any(|u| {
            let d = u.point.distance(x.point);
            let exact = u.residual <= EXACT_RESIDUAL && x.residual <= EXACT_RESIDUAL;
            d <= SAME_POINT || (!exact && d <= tol)
        });
        if !duplicate {
            unique.push(x);
        }
    }
    unique.sort_by(|x, y| x.t_a.total_cmp(&y.t_a));
    unique
}

fn refine_intersection(a: &Primitive, b: &Primitive, mut ta: f64, mut tb: f64) -> Intersection {
    let residual = |ta: f64, tb: f64| (a.point_at(ta) - b.point_at(tb)).norm();
    let mut res = residual(ta, tb);
    for _ in 0..20 {
        if res == 0.0 {
            break;
        }
        let f = a.point_at(ta) - b.point_at(tb);
        let da = a.derivative(ta);
        let db = -b.derivative(tb);
        let det = da.cross(db);
        if det.abs() <= 1e-12 * da.norm() * db.norm() {
            break;
        }
        // solve [da db] (δa, δb)ᵀ = −f
        let step_a = -f.cross(db) / det;
        let step_b = -da.cross(f) / det;
        let na = (ta + step_a).clamp(0.0, 1.0);
        let nb = (tb + step_b).clamp(0.0, 1.0);
        let nres = residual(na, nb);
        if nres >= res {
            break;
        }
        ta = na;
        tb = nb;
        res = nres;
    }
    let point = (a.point_at(ta) + b.point_at(tb)) * 0.5;
    Intersection {
        t_a: ta,
        t_b: tb,
        point,
        residual: res,
    }
}

/// An ordered set of primitives on a `width × height` canvas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub width: u32,
    pub height: u32,
    pub primitives: Vec<Primitive>,
}

impl Scene {
    pub fn new(width: u32, height: u32, primitives: Vec<Primitive>) -> Result<Self> {
        let scene = Scene {
            width,
            height,
            primitives,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidScene(
                "canvas dimensions must be positive".into(),
            ));
        }
        self.primitives.iter().try_for_each(Primitive::validate)
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, SceneParseError> {
        let scene: Scene = serde_json::from_str(text)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serialization cannot fail")
    }

    /// Pairwise junctions between distinct primitives, ordered by
    /// `(primitive_index_a, primitive_index_b, t_a)`.
    pub fn junctions(&self, tol: f64) -> Vec<Junction> {
        let flat: Vec<_> = self.primitives.iter().map(|p| p.flatten(FLATNESS)).collect();
        let mut out = Vec::new();
        for i in 0..self.primitives.len() {
            for j in i + 1..self.primitives.len() {
                let found = intersect_flattened(
                    &self.primitives[i],
                    &flat[i],
                    &self.primitives[j],
                    &flat[j],
                    tol,
                );
                out.extend(found.into_iter().map(|x| Junction {
                    primitive_index_a: i,
                    primitive_index_b: j,
                    t_a: x.t_a,
                    t_b: x.t_b,
                    point: x.point,
                }));
            }
        }
        out
    }

    /// Index, parameter and distance of the primitive nearest to `p`.
    /// Ties go to the lower index.
    pub fn closest_primitive(&self, p: Point) -> Option<(usize, f64, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for (i, prim) in self.primitives.iter().enumerate() {
            if let Some((_, _, d)) = best {
                if prim.bounds().distance_to(p) > d {
                    continue;
                }
            }
            let (t, d) = prim.closest_point(p);
            if best.is_none_or(|(_, _, bd)| d < bd) {
                best = Some((i, t, d));
            }
        }
        best
    }
}

#[derive(Debug, Error)]
pub enum SceneParseError {
    #[error("malformed scene JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
