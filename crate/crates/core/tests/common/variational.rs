use nalgebra::{DMatrix, DVector};
use polyfield::geometry::{Point, Primitive, Scene};
use polyfield::polyvector::{decode, PolyVectorField};
use polyfield::raster::{self, PixelMask, RasterImage};
use polyfield::variational::{energy, energy_gradient, solve, SolveConfig};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{angle_gap, random_primitive};

pub struct Instance {
    pub field: PolyVectorField,
    pub target: PolyVectorField,
    pub weights: Vec<f64>,
    pub gamma: f64,
}

pub fn random_instance(rng: &mut ChaCha8Rng, w: u32, h: u32, density: f64) -> Instance {
    let n = (w * h) as usize;
    let mask = PixelMask::from_data(w, h, (0..n).map(|_| rng.gen_bool(density)).collect()).unwrap();
    let mut channels = || -> Vec<[f64; 4]> {
        (0..n).map(|_| [0; 4].map(|_: i32| rng.gen_range(-1.5..1.5))).collect()
    };
    let field = PolyVectorField::from_parts(mask.clone(), channels()).unwrap();
    let target = PolyVectorField::from_parts(mask, channels()).unwrap();
    let weights = (0..n)
        .map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.1..2.0) })
        .collect();
    Instance { field, target, weights, gamma: rng.gen_range(0.0..3.0) }
}

pub fn with_channels(f: &PolyVectorField, data: Vec<[f64; 4]>) -> PolyVectorField {
    PolyVectorField::from_parts(f.mask().clone(), data).unwrap()
}

pub fn defined_indices(f: &PolyVectorField) -> Vec<usize> {
    (0..f.data().len()).filter(|&k| f.mask().data()[k]).collect()
}

/// `‖∇E − ∇_fd E‖ / max(‖∇E‖, 1)` with central differences of step `h`.
pub fn gradient_relative_error(inst: &Instance, h: f64) -> f64 {
    let grad = energy_gradient(&inst.field, &inst.target, &inst.weights, inst.gamma).unwrap();
    let e = |data: Vec<[f64; 4]>| {
        energy(&with_channels(&inst.field, data), &inst.target, &inst.weights, inst.gamma).unwrap()
    };
    let (mut diff2, mut norm2) = (0.0, 0.0);
    for k in 0..grad.len() {
        for c in 0..4 {
            let fd = if inst.field.mask().data()[k] {
                let mut plus = inst.field.data().to_vec();
                let mut minus = plus.clone();
                plus[k][c] += h;
                minus[k][c] -= h;
                (e(plus) - e(minus)) / (2.0 * h)
            } else {
                0.0
            };
            diff2 += (grad[k][c] - fd).powi(2);
            norm2 += grad[k][c].powi(2);
        }
    }
    diff2.sqrt() / norm2.sqrt().max(1.0)
}

pub fn random_scene_image(rng: &mut ChaCha8Rng, side: u32) -> RasterImage {
    let count = rng.gen_range(1..4);
    let prims: Vec<Primitive> = (0..count).map(|_| random_primitive(rng)).collect();
    let scale = side as f64 / 64.0;
    let prims = prims
        .into_iter()
        .map(|p| match p {
            Primitive::Line { p0, p1 } => Primitive::Line { p0: p0 * scale, p1: p1 * scale },
            Primitive::Arc { center, radius, angle_start, angle_end } => Primitive::Arc {
                center: center * scale,
                radius: radius * scale,
                angle_start,
                angle_end,
            },
            Primitive::CubicBezier { p0, p1, p2, p3 } => Primitive::CubicBezier {
                p0: p0 * scale,
                p1: p1 * scale,
                p2: p2 * scale,
                p3: p3 * scale,
            },
        })
        .collect();
    raster::rasterize(&Scene::new(side, side, prims).unwrap(), 1.5).unwrap()
}

/// Minimizer of the energy from a dense quadratic model assembled by
/// probing the energy itself, or `None` when the model is singular.
pub fn dense_minimizer(inst: &Instance) -> Option<Vec<[f64; 4]>> {
    let pixels = defined_indices(&inst.target);
    let n = pixels.len() * 4;
    let e = |x: &DVector<f64>| {
        let mut data = vec![[0.0; 4]; inst.target.data().len()];
        for (i, &k) in pixels.iter().enumerate() {
            for c in 0..4 {
                data[k][c] = x[4 * i + c];
            }
        }
        energy(&with_channels(&inst.target, data), &inst.target, &inst.weights, inst.gamma).unwrap()
    };
    let unit = |i: usize| DVector::from_fn(n, |k, _| if k == i { 1.0 } else { 0.0 });
    let e0 = e(&DVector::zeros(n));
    let ei: Vec<f64> = (0..n).map(|i| e(&unit(i))).collect();
    let mut hess = DMatrix::zeros(n, n);
    let mut lin = DVector::zeros(n);
    for i in 0..n {
        lin[i] = (ei[i] - e(&(-unit(i)))) / 2.0;
        for j in 0..n {
            // E is quadratic, so these second differences are exact
            hess[(i, j)] = e(&(unit(i) + unit(j))) - ei[i] - ei[j] + e0;
        }
    }
    let x = hess.cholesky()?.solve(&(-lin));
    Some((0..pixels.len()).map(|i| [x[4 * i], x[4 * i + 1], x[4 * i + 2], x[4 * i + 3]]).collect())
}

/// Largest angular error, in degrees, of the decoded direction closest to
/// horizontal over stroke pixels at least `margin` columns from either end.
pub fn horizontal_error_deg(y: f64, margin: u32) -> f64 {
    let scene = Scene::new(64, 64, vec![Primitive::line(Point::new(8.0, y), Point::new(56.0, y)).unwrap()]).unwrap();
    let img = raster::rasterize(&scene, 1.5).unwrap();
    let result = solve(&img, &SolveConfig::default()).unwrap();
    let mut worst: f64 = 0.0;
    for py in 0..64 {
        for px in (8 + margin)..(56 - margin) {
            let Some(c) = result.field.get(px, py) else { continue };
            let pair = decode(c);
            let err = angle_gap(pair.alpha, 0.0).min(angle_gap(pair.beta, 0.0));
            worst = worst.max(err);
        }
    }
    worst.to_degrees()
}

