mod common;

use common::variational::*;
use polyfield::variational::{
    energy, energy_gradient, solve, solve_with_target, SolveConfig, GRADIENT_TOL,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let inst = random_instance(&mut rng, 8, 8, 0.7);
        let err = gradient_relative_error(&inst, 1e-6);
        assert!(err <= 1e-5, "relative error {err}");
    }
}

#[test]
fn small_masks_match_dense_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut checked = 0;
    while checked < 40 {
        let (w, h) = (rng.gen_range(1..5), rng.gen_range(1..5));
        let inst = random_instance(&mut rng, w, h, 0.8);
        let defined = inst.target.defined_count();
        if defined == 0 || defined > 12 {
            continue;
        }
        let Some(expected) = dense_minimizer(&inst) else { continue };
        let result = solve_with_target(&inst.target, &inst.weights, &SolveConfig { gamma: inst.gamma, ..Default::default() }).unwrap();
        for (i, &k) in defined_indices(&inst.target).iter().enumerate() {
            for (c, (got, want)) in result.field.data()[k].iter().zip(&expected[i]).enumerate() {
                assert!((got - want).abs() < 1e-6, "pixel {k} channel {c}: {got} vs {want}");
            }
        }
        checked += 1;
    }
}

#[test]
fn huge_gamma_flattens_connected_fields() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let mut inst = random_instance(&mut rng, 9, 7, 1.0);
        inst.weights.iter_mut().for_each(|w| *w = 1.0);
        let config = SolveConfig { gamma: 1e6, max_iters: 5000, ..Default::default() };
        let result = solve_with_target(&inst.target, &inst.weights, &config).unwrap();
        for c in 0..4 {
            let vals: Vec<f64> = result.field.data().iter().map(|p| p[c]).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(var <= 1e-3, "channel {c} variance {var}");
        }
    }
}

#[test]
fn traces_never_increase_and_gradients_vanish() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..10 {
        let img = random_scene_image(&mut rng, 32);
        let config = SolveConfig { gamma: rng.gen_range(0.01..2.0), ..Default::default() };
        let Ok(result) = solve(&img, &config) else { continue };
        assert!(result.energies.windows(2).all(|w| w[1] <= w[0]));
        assert!(result.converged);
        assert!(result.gradient_norm <= GRADIENT_TOL * (1.0 + result.final_energy()));
        assert_eq!(result.iterations + 1, result.energies.len());
    }
}

#[test]
fn single_segment_recovers_tangent() {
    for y in [32.0, 31.7, 32.2] {
        let err = horizontal_error_deg(y, 4);
        assert!(err < 2.0, "y = {y}: {err} degrees");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solution_is_a_stationary_point(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, 10, 10, 0.6);
        prop_assume!(inst.target.defined_count() > 0);
        let config = SolveConfig { gamma: inst.gamma, ..Default::default() };
        let result = solve_with_target(&inst.target, &inst.weights, &config).unwrap();
        let grad = energy_gradient(&result.field, &inst.target, &inst.weights, inst.gamma).unwrap();
        let norm = grad.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
        prop_assert!(norm <= GRADIENT_TOL * (1.0 + result.final_energy()), "{}", norm);
        prop_assert!(result.energies.windows(2).all(|w| w[1] <= w[0]));
        let e = energy(&result.field, &inst.target, &inst.weights, inst.gamma).unwrap();
        prop_assert!((e - result.final_energy()).abs() <= 1e-9 * (1.0 + e));
    }

    #[test]
    fn zero_gamma_returns_weighted_targets(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, 6, 6, 0.8);
        prop_assume!(inst.target.defined_count() > 0);
        let config = SolveConfig { gamma: 0.0, ..Default::default() };
        let result = solve_with_target(&inst.target, &inst.weights, &config).unwrap();
        for k in defined_indices(&inst.target) {
            if inst.weights[k] > 0.0 {
                prop_assert_eq!(result.field.data()[k], inst.target.data()[k]);
            }
        }
    }
}
