//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run with `cargo test -p polyfield --test acceptance`.

mod common;

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI, TAU};
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use common::variational::{
    dense_minimizer, defined_indices, gradient_relative_error, horizontal_error_deg,
    random_instance, random_scene_image,
};
use common::{angle_gap, fd_tangent, random_primitive, tree_digest};
use num_complex::Complex64;
use polyfield::dataset::{decode_field, encode_field, generate, quantize_field, SampleSpec};
use polyfield::geometry::{Point, Primitive, Scene};
use polyfield::groundtruth::{assign_pixel, build_field, FieldParams};
use polyfield::metrics::regularized_loss;
use polyfield::polyvector::{
    decode, encode, encode_angles, rotate_pair, Coefficients, DirectionPair, PolyVectorField,
};
use polyfield::raster::{pixel_center, PixelMask};
use polyfield::variational::{solve, solve_with_target, SolveConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut max_angle, mut max_residual): (f64, f64) = (0.0, 0.0);
    for _ in 0..100_000 {
        let pair = DirectionPair::new(rng.gen_range(0.0..PI), rng.gen_range(0.0..PI));
        let c = encode(pair);
        let back = decode(c);
        max_angle = max_angle.max(back.distance(&pair));
        for g in [back.alpha, back.beta] {
            let z = Complex64::from_polar(1.0, 2.0 * g);
            max_residual = max_residual.max((z * z + c.c2 * z + c.c0).norm());
        }
    }
    let elapsed = start.elapsed();
    outcome(
        max_angle < 1e-9 && max_residual < 1e-9 && elapsed < Duration::from_secs(5),
        format!("max angle error {max_angle:.2e}, max root residual {max_residual:.2e}, {}", secs(elapsed)),
    )
}

fn symmetry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut max_sym, mut max_rot): (f64, f64) = (0.0, 0.0);
    let gap = |a: Coefficients, b: Coefficients| (a.c0 - b.c0).norm().max((a.c2 - b.c2).norm());
    for _ in 0..10_000 {
        let (a, b) = (rng.gen_range(-TAU..TAU), rng.gen_range(-TAU..TAU));
        let theta = rng.gen_range(-TAU..TAU);
        let base = encode_angles(a, b);
        for other in [
            encode_angles(b, a),
            encode_angles(a + PI, b),
            encode_angles(a - PI, b),
            encode_angles(a, b + PI),
            encode_angles(a, b - PI),
        ] {
            max_sym = max_sym.max(gap(base, other));
        }
        let pair = DirectionPair::new(a, b);
        let c = encode(pair);
        let expected = Coefficients::new(
            c.c0 * Complex64::from_polar(1.0, 4.0 * theta),
            c.c2 * Complex64::from_polar(1.0, 2.0 * theta),
        );
        max_rot = max_rot.max(gap(encode(rotate_pair(pair, theta)), expected));
    }
    outcome(
        max_sym < 1e-12 && max_rot < 1e-9,
        format!("max symmetry gap {max_sym:.2e}, max equivariance gap {max_rot:.2e}"),
    )
}

fn tangents() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst, mut checked, mut cusps): (f64, usize, usize) = (0.0, 0, 0);
    for _ in 0..1000 {
        let prim = random_primitive(&mut rng);
        for _ in 0..10 {
            let t: f64 = rng.gen_range(0.0..=1.0);
            match (prim.tangent_angle(t), fd_tangent(&prim, t, 1e-5)) {
                (Ok(a), Some(fd)) => {
                    worst = worst.max(angle_gap(a, fd));
                    checked += 1;
                }
                _ => cusps += 1,
            }
        }
    }
    outcome(
        worst < 1e-4 && checked >= 9_900,
        format!("max error {worst:.2e} rad over {checked} samples ({cusps} near-cusp samples skipped)"),
    )
}

fn ground_truth_probes() -> Outcome {
    let params = FieldParams::default();
    let sharp = FieldParams { sigma: 1e-3, ..params };
    let err = |a: [f64; 4], b: [f64; 4]| a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let mut worst: f64 = 0.0;

    let horizontal = Scene::new(32, 32, vec![Primitive::line(Point::new(4.0, 16.5), Point::new(28.0, 16.5)).unwrap()]).unwrap();
    let gt = build_field(&horizontal, &sharp).unwrap();
    for k in defined_indices(&gt.field) {
        worst = worst.max(err(gt.field.data()[k], [-1.0, 0.0, 0.0, 0.0]));
    }

    let cross = Scene::new(
        10,
        10,
        vec![
            Primitive::line(Point::new(0.5, 0.5), Point::new(9.5, 9.5)).unwrap(),
            Primitive::line(Point::new(0.5, 9.5), Point::new(9.5, 0.5)).unwrap(),
        ],
    )
    .unwrap();
    let gt = build_field(&cross, &sharp).unwrap();
    worst = worst.max(err(gt.raw_field.channels(4, 4), [1.0, 0.0, 0.0, 0.0]));
    worst = worst.max(err(gt.field.channels(4, 4), [1.0, 0.0, 0.0, 0.0]));

    // horizontal segment crossed at (8.5, 8.5) by a segment at 60°
    let dir = Point::new(FRAC_PI_3.cos(), FRAC_PI_3.sin());
    let c = Point::new(8.5, 8.5);
    let skew = Scene::new(
        17,
        17,
        vec![
            Primitive::line(Point::new(0.5, 8.5), Point::new(16.5, 8.5)).unwrap(),
            Primitive::line(c - dir * 7.0, c + dir * 7.0).unwrap(),
        ],
    )
    .unwrap();
    let junctions = skew.junctions(params.intersection_tol);
    let probe = |x: u32| encode(assign_pixel(&skew, &junctions, pixel_center(x, 8), &params).unwrap()).to_channels();
    // dJ = d_near, dJ = d_far, and the midpoint of the blend
    worst = worst.max(err(probe(10), encode_angles(0.0, FRAC_PI_3).to_channels()));
    worst = worst.max(err(probe(14), encode_angles(0.0, FRAC_PI_2).to_channels()));
    worst = worst.max(err(probe(12), encode_angles(0.0, 5.0 * PI / 12.0).to_channels()));

    outcome(worst < 1e-6, format!("max channel error {worst:.2e}"))
}

fn variational() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut monotone = 0;
    let mut solved = 0;
    while solved < 100 {
        let img = random_scene_image(&mut rng, 64);
        let config = SolveConfig { gamma: rng.gen_range(0.01..1.0), ..Default::default() };
        let Ok(result) = solve(&img, &config) else { continue };
        solved += 1;
        if result.energies.windows(2).all(|w| w[1] <= w[0]) && result.converged {
            monotone += 1;
        }
    }

    let mut grad_err: f64 = 0.0;
    for _ in 0..10 {
        grad_err = grad_err.max(gradient_relative_error(&random_instance(&mut rng, 8, 8, 0.75), 1e-6));
    }

    let (mut dense_err, mut dense_cases): (f64, usize) = (0.0, 0);
    while dense_cases < 30 {
        let (w, h) = (rng.gen_range(1..5), rng.gen_range(1..5));
        let inst = random_instance(&mut rng, w, h, 0.8);
        let n = inst.target.defined_count();
        if n == 0 || n > 12 {
            continue;
        }
        let Some(expected) = dense_minimizer(&inst) else { continue };
        let config = SolveConfig { gamma: inst.gamma, ..Default::default() };
        let result = solve_with_target(&inst.target, &inst.weights, &config).unwrap();
        for (i, &k) in defined_indices(&inst.target).iter().enumerate() {
            for (got, want) in result.field.data()[k].iter().zip(&expected[i]) {
                dense_err = dense_err.max((got - want).abs());
            }
        }
        dense_cases += 1;
    }

    let tangent_err = [32.0, 31.7, 32.2, 32.5].map(|y| horizontal_error_deg(y, 4)).into_iter().fold(0.0, f64::max);
    let elapsed = start.elapsed();
    outcome(
        monotone == 100 && grad_err < 1e-5 && dense_err < 1e-6 && tangent_err < 2.0 && elapsed < Duration::from_secs(120),
        format!(
            "{monotone}/100 monotone converged traces, gradient rel. error {grad_err:.2e}, dense solve gap {dense_err:.2e}, segment tangent error {tangent_err:.2e} deg, {}",
            secs(elapsed)
        ),
    )
}

fn synth(out: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_polyfield"))
        .args(["synth", "--seed", "7", "--count", "50", "--train", "45", "--size", "64", "--out"])
        .arg(out)
        .env_remove("POLYFIELD_THREADS")
        .stdout(Stdio::null())
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn dataset() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let identical = synth(&a) && synth(&b) && {
        let (da, db) = (tree_digest(&a), tree_digest(&b));
        da.len() == 151 && da == db
    };

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut exact = true;
    for _ in 0..200 {
        let (w, h) = (rng.gen_range(1..40), rng.gen_range(1..40));
        let n = (w * h) as usize;
        let mask = PixelMask::from_data(w, h, (0..n).map(|_| rng.gen_bool(0.5)).collect()).unwrap();
        let data = (0..n).map(|_| [0; 4].map(|_: i32| rng.gen_range(-2.0..2.0))).collect();
        let field = PolyVectorField::from_parts(mask, data).unwrap();
        let bytes = encode_field(&field);
        exact &= decode_field(&bytes).map(|f| f == quantize_field(&field)).unwrap_or(false);
    }

    let big = dir.path().join("big");
    let start = Instant::now();
    let generated = generate(7, 5500, 5000, &SampleSpec::default(), &big, None).is_ok();
    let elapsed = start.elapsed();
    outcome(
        identical && exact && generated && elapsed < Duration::from_secs(600),
        format!(
            "repeat runs identical: {identical}, PVF1 exact: {exact}, 5500 records in {} ({} threads)",
            secs(elapsed),
            rayon::current_num_threads()
        ),
    )
}

fn metric_oracle() -> Outcome {
    let field = |w, h, data: Vec<[f64; 4]>| PolyVectorField::from_parts(PixelMask::full(w, h), data).unwrap();
    let gt = field(2, 1, vec![[-1.0, 0.0, 0.0, 0.0]; 2]);
    let pred = field(2, 1, vec![[-1.0, 0.0, 0.0, 0.0], [0.0; 4]]);
    let r = regularized_loss(&pred, &gt, 0.25).unwrap();
    let one_by_two = (r.mse, r.smoothness, r.regularized) == (0.125, 1.0, 0.25);

    let one = [1.0, 0.0, 0.0, 0.0];
    let gt = field(2, 2, vec![one; 4]);
    let pred = field(2, 2, vec![one, [0.0; 4], one, one]);
    let r = regularized_loss(&pred, &gt, 0.5).unwrap();
    let two_by_two = (r.mse, r.smoothness, r.regularized) == (0.0625, 2.0, 0.3125);
    let same = regularized_loss(&gt, &gt, 0.5).unwrap();
    let zero = (same.mse, same.smoothness, same.regularized) == (0.0, 0.0, 0.0);
    outcome(
        one_by_two && two_by_two && zero,
        format!("1x2 exact: {one_by_two}, 2x2 exact: {two_by_two}, self-comparison zero: {zero}"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 7] = [
        ("encode/decode round trip", round_trip),
        ("symmetry and rotation equivariance", symmetry),
        ("tangent correctness", tangents),
        ("ground-truth probes", ground_truth_probes),
        ("variational solver", variational),
        ("dataset determinism and throughput", dataset),
        ("metric oracle", metric_oracle),
    ];
    let mut failures = 0;
    for (name, check) in criteria {
        let result = check();
        if !result.pass {
            failures += 1;
        }
        println!("{} {name}: {}", if result.pass { "PASS" } else { "FAIL" }, result.detail);
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
