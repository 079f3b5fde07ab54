#![allow(dead_code)]

pub mod variational;

use std::f64::consts::{PI, TAU};

use polyfield::geometry::{Point, Primitive};
use proptest::prelude::*;
use rand::Rng;

pub fn point_in(lo: f64, hi: f64) -> impl Strategy<Value = Point> {
    (lo..hi, lo..hi).prop_map(|(x, y)| Point::new(x, y))
}

pub fn line() -> impl Strategy<Value = Primitive> {
    (point_in(0.0, 64.0), point_in(0.0, 64.0))
        .prop_filter_map("degenerate", |(a, b)| {
            (a.distance(b) > 1e-2).then(|| Primitive::line(a, b).unwrap())
        })
}

pub fn arc() -> impl Strategy<Value = Primitive> {
    (point_in(8.0, 56.0), 0.5f64..30.0, -TAU..TAU, -TAU..TAU).prop_filter_map(
        "zero sweep",
        |(c, r, a0, sweep)| (sweep.abs() > 1e-2).then(|| Primitive::arc(c, r, a0, a0 + sweep).unwrap()),
    )
}

pub fn bezier() -> impl Strategy<Value = Primitive> {
    (point_in(0.0, 64.0), point_in(0.0, 64.0), point_in(0.0, 64.0), point_in(0.0, 64.0))
        .prop_map(|(a, b, c, d)| Primitive::cubic_bezier(a, b, c, d).unwrap())
}

pub fn primitive() -> impl Strategy<Value = Primitive> {
    prop_oneof![line(), arc(), bezier()]
}

/// Uniformly random primitive from a plain RNG, for loops too large for proptest.
pub fn random_primitive<R: Rng>(rng: &mut R) -> Primitive {
    fn p<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> Point {
        Point::new(rng.gen_range(lo..hi), rng.gen_range(lo..hi))
    }
    match rng.gen_range(0..3) {
        0 => loop {
            let (a, b) = (p(rng, 0.0, 64.0), p(rng, 0.0, 64.0));
            if a.distance(b) > 1e-2 {
                return Primitive::line(a, b).unwrap();
            }
        },
        1 => {
            let c = p(rng, 8.0, 56.0);
            let r = rng.gen_range(0.5..30.0);
            let a0 = rng.gen_range(-PI..PI);
            let mut sweep = rng.gen_range(-TAU..TAU);
            if sweep.abs() < 1e-2 {
                sweep = 1.0;
            }
            Primitive::arc(c, r, a0, a0 + sweep).unwrap()
        }
        _ => {
            let pts = [p(rng, 0.0, 64.0), p(rng, 0.0, 64.0), p(rng, 0.0, 64.0), p(rng, 0.0, 64.0)];
            Primitive::cubic_bezier(pts[0], pts[1], pts[2], pts[3]).unwrap()
        }
    }
}

/// Central finite-difference tangent angle in `[0, π)`, one-sided at the ends.
pub fn fd_tangent(prim: &Primitive, t: f64, h: f64) -> Option<f64> {
    let (a, b) = ((t - h).max(0.0), (t + h).min(1.0));
    let d = prim.point_at(b) - prim.point_at(a);
    (d.norm() / (b - a) > 1e-2).then(|| d.y.atan2(d.x).rem_euclid(PI))
}

pub fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

/// SHA-256 of every file under `dir`, keyed by relative path.
pub fn tree_digest(dir: &std::path::Path) -> std::collections::BTreeMap<String, String> {
    use sha2::{Digest, Sha256};
    let mut out = std::collections::BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, hex::encode(Sha256::digest(std::fs::read(&path).unwrap())));
            }
        }
    }
    out
}
