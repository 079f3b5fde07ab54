//! Classical field estimate: minimize alignment to a Sobel tangent target
//! plus γ times the smoothness energy over the stroke mask.
//!
//! The energy is a convex quadratic in the four real channels and the
//! channels decouple, so each channel solves `(W + γL) x = W c*` where `W`
//! holds the per-pixel alignment weights and `L` is the graph Laplacian of
//! the mask's right/down neighbor pairs. The solver is Jacobi-preconditioned
//! conjugate gradients, which decreases the energy at every step.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::reduce_mod_pi;
use crate::polyvector::{self, FieldError, PolyVectorField};
use crate::raster::{self, PixelMask, RasterImage};

/// Gradient magnitudes below this mark a pixel as low-confidence.
pub const MIN_GRADIENT: f64 = 1e-6;
/// Final gradient norm must not exceed `GRADIENT_TOL · (1 + E)`.
pub const GRADIENT_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VariationalError {
    #[error("the image has no pixels above the threshold")]
    EmptyMask,
    #[error("weights have {len} entries, expected {expected}")]
    WeightLength { len: usize, expected: usize },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    /// Smoothness weight γ.
    pub gamma: f64,
    pub max_iters: usize,
    /// Relative energy decrease below which a converged run stops.
    pub tol: f64,
    pub threshold: f64,
    /// Optional masked Gaussian smoothing of the target before solving.
    pub sigma: Option<f64>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            gamma: 0.1,
            max_iters: 500,
            tol: 1e-8,
            threshold: raster::DEFAULT_THRESHOLD,
            sigma: None,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<(), VariationalError> {
        let bad = |m: &str| Err(VariationalError::InvalidConfig(m.into()));
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be a non-negative number");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold must lie in (0, 1)");
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0) {
                return bad("sigma must be positive");
            }
        }
        Ok(())
    }
}

/// Per-pixel tangent angles estimated from image gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentEstimate {
    pub width: u32,
    pub height: u32,
    /// Angles in `[0, π)`, row-major.
    pub angles: Vec<f64>,
    /// False where the gradient is too weak to define a direction.
    pub confident: Vec<bool>,
}

/// Tangent directions from 3×3 Sobel gradients (replicated borders),
/// rotated by 90°.
pub fn sobel_tangent(image: &RasterImage) -> TangentEstimate {
    let (w, h) = (image.width() as i64, image.height() as i64);
    let at = |x: i64, y: i64| {
        image.get(x.clamp(0, w - 1) as u32, y.clamp(0, h - 1) as u32)
    };
    let mut angles = Vec::with_capacity((w * h) as usize);
    let mut confident = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            confident.push(gx.hypot(gy) >= MIN_GRADIENT);
            angles.push(reduce_mod_pi(gy.atan2(gx) + FRAC_PI_2));
        }
    }
    TangentEstimate {
        width: image.width(),
        height: image.height(),
        angles,
        confident,
    }
}

/// Target coefficients with their alignment weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Target {
    /// Defined on the threshold mask; low-confidence pixels hold zeros.
    pub field: PolyVectorField,
    /// 1 at confident mask pixels, 0 elsewhere.
    pub weights: Vec<f64>,
}

/// Tangent/normal target at each confident pixel of the threshold mask.
pub fn build_target(
    image: &RasterImage,
    threshold: f64,
    sigma: Option<f64>,
) -> Result<Target, VariationalError> {
    let stroke = raster::mask(image, threshold);
    let tangents = sobel_tangent(image);
    let mut weights = vec![0.0; stroke.data().len()];
    let data = stroke
        .data()
        .iter()
        .enumerate()
        .map(|(k, &inside)| {
            if inside && tangents.confident[k] {
                weights[k] = 1.0;
                polyvector::encode(polyvector::tangent_normal_pair(tangents.angles[k])).to_channels()
            } else {
                [0.0; 4]
            }
        })
        .collect();
    let mut field = PolyVectorField::from_parts(stroke, data)?;
    if let Some(s) = sigma {
        // smooth only over confident pixels, then restore the full mask
        let confident = PixelMask::from_data(
            field.width(),
            field.height(),
            weights.iter().map(|&w| w > 0.0).collect(),
        )
        .expect("same dimensions");
        let partial = PolyVectorField::from_parts(confident, field.data().to_vec())?;
        let smoothed = polyvector::smooth(&partial, s)?;
        field = PolyVectorField::from_parts(field.mask().clone(), smoothed.data().to_vec())?;
    }
    Ok(Target { field, weights })
}

fn check_inputs(
    field: &PolyVectorField,
    target: &PolyVectorField,
    weights: &[f64],
) -> Result<(), VariationalError> {
    field.check_dims(target)?;
    let expected = field.width() as usize * field.height() as usize;
    if weights.len() != expected {
        return Err(VariationalError::WeightLength {
            len: weights.len(),
            expected,
        });
    }
    Ok(())
}

/// `Σ w_p ‖c(p) − c*(p)‖² + γ · smoothness(c)` over the field's defined pixels.
pub fn energy(
    field: &PolyVectorField,
    target: &PolyVectorField,
    weights: &[f64],
    gamma: f64,
) -> Result<f64, VariationalError> {
    check_inputs(field, target, weights)?;
    let mut alignment = 0.0;
    for (k, (&defined, (c, t))) in field
        .mask()
        .data()
        .iter()
        .zip(field.data().iter().zip(target.data()))
        .enumerate()
    {
        if defined && weights[k] != 0.0 {
            let d2: f64 = c.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
            alignment += weights[k] * d2;
        }
    }
    Ok(alignment + gamma * polyvector::smoothness_energy(field))
}

/// Gradient of [`energy`] with respect to every channel of every defined
/// pixel; zero elsewhere.
pub fn energy_gradient(
    field: &PolyVectorField,
    target: &PolyVectorField,
    weights: &[f64],
    gamma: f64,
) -> Result<Vec<[f64; 4]>, VariationalError> {
    check_inputs(field, target, weights)?;
    let (w, h) = (field.width() as usize, field.height() as usize);
    let m = field.mask().data();
    let c = field.data();
    let t = target.data();
    let mut grad = vec![[0.0; 4]; w * h];
    for k in 0..w * h {
        if m[k] {
            for ch in 0..4 {
                grad[k][ch] += 2.0 * weights[k] * (c[k][ch] - t[k][ch]);
            }
        }
    }
    for (p, q) in neighbor_pairs(field.mask()) {
        for ch in 0..4 {
            let d = 2.0 * gamma * (c[p][ch] - c[q][ch]);
            grad[p][ch] += d;
            grad[q][ch] -= d;
        }
    }
    Ok(grad)
}

/// Right and down neighbor pairs `(p, q)` with both pixels defined, as
/// row-major pixel indices.
fn neighbor_pairs(mask: &PixelMask) -> Vec<(usize, usize)> {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let m = mask.data();
    let mut pairs = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let k = y * w + x;
            if !m[k] {
                continue;
            }
            if x + 1 < w && m[k + 1] {
                pairs.push((k, k + 1));
            }
            if y + 1 < h && m[k + w] {
                pairs.push((k, k + w));
            }
        }
    }
    pairs
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub field: PolyVectorField,
    /// Energy before the first iteration and after each one.
    pub energies: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// Whether the gradient norm met `GRADIENT_TOL · (1 + E)`.
    pub converged: bool,
    pub gamma: f64,
}

impl SolveResult {
    pub fn final_energy(&self) -> f64 {
        *self.energies.last().expect("trace is never empty")
    }

    /// Energy trace as `iter,energy` CSV.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iter,energy")?;
        for (i, e) in self.energies.iter().enumerate() {
            writeln!(out, "{i},{e:e}")?;
        }
        Ok(())
    }
}

/// Builds the Sobel target for `image` and minimizes the energy.
pub fn solve(image: &RasterImage, config: &SolveConfig) -> Result<SolveResult, VariationalError> {
    config.validate()?;
    let target = build_target(image, config.threshold, config.sigma)?;
    solve_with_target(&target.field, &target.weights, config)
}

/// Minimizes the energy over `target`'s mask with explicit weights.
pub fn solve_with_target(
    target: &PolyVectorField,
    weights: &[f64],
    config: &SolveConfig,
) -> Result<SolveResult, VariationalError> {
    config.validate()?;
    check_inputs(target, target, weights)?;
    if target.mask().is_empty() {
        return Err(VariationalError::EmptyMask);
    }
    let system = System::new(target, weights, config.gamma);
    let (x, energies, iterations, gradient_norm) = system.minimize(config);
    let final_energy = *energies.last().expect("nonempty");

    let mut data = vec![[0.0; 4]; weights.len()];
    for (i, &k) in system.pixels.iter().enumerate() {
        data[k] = x[i];
    }
    let field = PolyVectorField::from_parts(target.mask().clone(), data)?;
    Ok(SolveResult {
        field,
        energies,
        iterations,
        gradient_norm,
        converged: gradient_norm <= GRADIENT_TOL * (1.0 + final_energy),
        gamma: config.gamma,
    })
}

/// The per-channel linear system restricted to defined pixels.
struct System {
    /// Row-major pixel index of each unknown.
    pixels: Vec<usize>,
    weights: Vec<f64>,
    targets: Vec<[f64; 4]>,
    /// Neighbor pairs in unknown indices.
    pairs: Vec<(usize, usize)>,
    gamma: f64,
    /// Diagonal of `W + γL`, with zeros replaced by one.
    diagonal: Vec<f64>,
}

impl System {
    fn new(target: &PolyVectorField, weights: &[f64], gamma: f64) -> Self {
        let mut unknown = vec![usize::MAX; weights.len()];
        let mut pixels = Vec::new();
        for (k, &m) in target.mask().data().iter().enumerate() {
            if m {
                unknown[k] = pixels.len();
                pixels.push(k);
            }
        }
        let pairs: Vec<(usize, usize)> = neighbor_pairs(target.mask())
            .into_iter()
            .map(|(p, q)| (unknown[p], unknown[q]))
            .collect();
        let w: Vec<f64> = pixels.iter().map(|&k| weights[k]).collect();
        let mut diagonal = w.clone();
        for &(p, q) in &pairs {
            diagonal[p] += gamma;
            diagonal[q] += gamma;
        }
        diagonal.iter_mut().filter(|d| **d <= 0.0).for_each(|d| *d = 1.0);
        System {
            targets: pixels.iter().map(|&k| target.data()[k]).collect(),
            pixels,
            weights: w,
            pairs,
            gamma,
            diagonal,
        }
    }

    fn apply(&self, x: &[[f64; 4]]) -> Vec<[f64; 4]> {
        let mut y: Vec<[f64; 4]> = x
            .iter()
            .zip(&self.weights)
            .map(|(v, &w)| [w * v[0], w * v[1], w * v[2], w * v[3]])
            .collect();
        for &(p, q) in &self.pairs {
            for ch in 0..4 {
                let d = self.gamma * (x[p][ch] - x[q][ch]);
                y[p][ch] += d;
                y[q][ch] -= d;
            }
        }
        y
    }

    fn rhs(&self) -> Vec<[f64; 4]> {
        self.targets
            .iter()
            .zip(&self.weights)
            .map(|(t, &w)| [w * t[0], w * t[1], w * t[2], w * t[3]])
            .collect()
    }

    fn energy(&self, x: &[[f64; 4]]) -> f64 {
        let mut e = 0.0;
        for ((v, t), &w) in x.iter().zip(&self.targets).zip(&self.weights) {
            if w != 0.0 {
                e += w * (0..4).map(|c| (v[c] - t[c]) * (v[c] - t[c])).sum::<f64>();
            }
        }
        let mut s = 0.0;
        for &(p, q) in &self.pairs {
            s += (0..4).map(|c| (x[p][c] - x[q][c]) * (x[p][c] - x[q][c])).sum::<f64>();
        }
        e + self.gamma * s
    }

    /// Residual `b − Ax`; the energy gradient is `−2r`.
    fn residual(&self, x: &[[f64; 4]]) -> Vec<[f64; 4]> {
        let ax = self.apply(x);
        self.rhs()
            .iter()
            .zip(&ax)
            .map(|(b, a)| [b[0] - a[0], b[1] - a[1], b[2] - a[2], b[3] - a[3]])
            .collect()
    }

    fn gradient_norm(r: &[[f64; 4]]) -> f64 {
        2.0 * r.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn minimize(&self, config: &SolveConfig) -> (Vec<[f64; 4]>, Vec<f64>, usize, f64) {
        let n = self.pixels.len();
        let mut x = self.targets.clone();
        let mut r = self.residual(&x);
        let precondition = |r: &[[f64; 4]]| -> Vec<[f64; 4]> {
            r.iter()
                .zip(&self.diagonal)
                .map(|(v, &d)| [v[0] / d, v[1] / d, v[2] / d, v[3] / d])
                .collect()
        };
        let mut z = precondition(&r);
        let mut dir = z.clone();
        let mut rz: [f64; 4] = channel_dots(&r, &z);

        let mut energies = vec![self.energy(&x)];
        let mut grad = Self::gradient_norm(&r);
        let mut iterations = 0;
        while iterations < config.max_iters {
            let e_prev = *energies.last().expect("nonempty");
            if grad <= GRADIENT_TOL * (1.0 + e_prev) && iterations > 0 {
                let prev2 = energies[energies.len() - 2];
                if prev2 - e_prev <= config.tol * prev2.abs().max(f64::MIN_POSITIVE) {
                    break;
                }
            }
            if grad == 0.0 {
                break;
            }
            let ad = self.apply(&dir);
            let dad = channel_dots(&dir, &ad);
            let mut next = x.clone();
            for ch in 0..4 {
                if dad[ch] <= 0.0 || rz[ch] == 0.0 {
                    continue;
                }
                let step = rz[ch] / dad[ch];
                for i in 0..n {
                    next[i][ch] += step * dir[i][ch];
                }
            }
            let e_next = self.energy(&next);
            if e_next > e_prev {
                // rounding floor reached
                break;
            }
            iterations += 1;
            x = next;
            energies.push(e_next);

            // recompute the true residual periodically against drift
            let new_r = if iterations % 50 == 0 {
                self.residual(&x)
            } else {
                let mut nr = r.clone();
                for ch in 0..4 {
                    if dad[ch] <= 0.0 || rz[ch] == 0.0 {
                        continue;
                    }
                    let step = rz[ch] / dad[ch];
                    for i in 0..n {
                        nr[i][ch] -= step * ad[i][ch];
                    }
                }
                nr
            };
            r = new_r;
            z = precondition(&r);
            let rz_new = channel_dots(&r, &z);
            for ch in 0..4 {
                let beta = if rz[ch] > 0.0 { rz_new[ch] / rz[ch] } else { 0.0 };
                for i in 0..n {
                    dir[i][ch] = z[i][ch] + beta * dir[i][ch];
                }
            }
            rz = rz_new;
            grad = Self::gradient_norm(&r);
        }
        // report the true gradient, not the recurrence
        let grad = Self::gradient_norm(&self.residual(&x));
        (x, energies, iterations, grad)
    }
}

fn channel_dots(a: &[[f64; 4]], b: &[[f64; 4]]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (u, v) in a.iter().zip(b) {
        for ch in 0..4 {
            out[ch] += u[ch] * v[ch];
        }
    }
    out
}
