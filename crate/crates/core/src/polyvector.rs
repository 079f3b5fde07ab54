//! 2-PolyVector algebra.
//!
//! A pair of sign-free directions `{u, v}` is stored as the coefficients of
//! `f(z) = (z² − u²)(z² − v²) = z⁴ + c₂z² + c₀`, i.e. `c₀ = u²v²` and
//! `c₂ = −(u² + v²)`. The coefficients do not depend on the order of the
//! pair or the sign of either vector.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::reduce_mod_pi;
use crate::raster::PixelMask;

/// Smoothed pixels whose mask weight falls below this stay undefined.
pub const MIN_MASK_WEIGHT: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("gaussian sigma must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("field is {actual:?} but {expected:?} was required")]
    DimensionMismatch {
        expected: (u32, u32),
        actual: (u32, u32),
    },
    #[error("field data has {len} pixels, expected {expected}")]
    DataLength { len: usize, expected: usize },
}

/// Two slope angles in `[0, π)`, ordered ascending.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirectionPair {
    pub alpha: f64,
    pub beta: f64,
}

impl DirectionPair {
    /// Reduces both angles to `[0, π)` and orders them.
    pub fn new(alpha: f64, beta: f64) -> Self {
        let a = reduce_mod_pi(alpha);
        let b = reduce_mod_pi(beta);
        if b < a {
            DirectionPair { alpha: b, beta: a }
        } else {
            DirectionPair { alpha: a, beta: b }
        }
    }

    /// Largest angular mismatch against `other`, minimized over the two
    /// ways of matching the directions and measured modulo π.
    pub fn distance(&self, other: &DirectionPair) -> f64 {
        use crate::geometry::angle_distance_mod_pi as d;
        let straight = d(self.alpha, other.alpha).max(d(self.beta, other.beta));
        let crossed = d(self.alpha, other.beta).max(d(self.beta, other.alpha));
        straight.min(crossed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coefficients {
    pub c0: Complex64,
    pub c2: Complex64,
}

impl Coefficients {
    pub fn new(c0: Complex64, c2: Complex64) -> Self {
        Coefficients { c0, c2 }
    }

    /// Channel order used everywhere: `[Re c0, Im c0, Re c2, Im c2]`.
    pub fn to_channels(self) -> [f64; 4] {
        [self.c0.re, self.c0.im, self.c2.re, self.c2.im]
    }

    pub fn from_channels(ch: [f64; 4]) -> Self {
        Coefficients {
            c0: Complex64::new(ch[0], ch[1]),
            c2: Complex64::new(ch[2], ch[3]),
        }
    }

    /// Both coefficients vanish; the polynomial `z⁴` carries no direction.
    pub fn is_degenerate(&self) -> bool {
        self.c0.norm() <= 1e-12 && self.c2.norm() <= 1e-12
    }

    /// `|z⁴ + c₂z² + c₀|` at `z = e^{iγ}`.
    pub fn residual(&self, gamma: f64) -> f64 {
        let w = Complex64::from_polar(1.0, 2.0 * gamma);
        (w * w + self.c2 * w + self.c0).norm()
    }
}

pub fn encode(pair: DirectionPair) -> Coefficients {
    encode_angles(pair.alpha, pair.beta)
}

/// Encodes two slope angles; works for any real angles, not only `[0, π)`.
pub fn encode_angles(alpha: f64, beta: f64) -> Coefficients {
    let u2 = Complex64::from_polar(1.0, 2.0 * alpha);
    let v2 = Complex64::from_polar(1.0, 2.0 * beta);
    Coefficients {
        c0: u2 * v2,
        c2: -(u2 + v2),
    }
}

/// Recovers the direction pair from `c` by solving `w² + c₂w + c₀ = 0` for
/// `w ∈ {u², v²}`. Degenerate coefficients decode to `(0, 0)`.
pub fn decode(c: Coefficients) -> DirectionPair {
    if c.is_degenerate() {
        return DirectionPair { alpha: 0.0, beta: 0.0 };
    }
    let [w1, w2] = squared_roots(c);
    DirectionPair::new(w1.arg() / 2.0, w2.arg() / 2.0)
}

/// Roots of `w² + c₂w + c₀`, larger magnitude first.
pub fn squared_roots(c: Coefficients) -> [Complex64; 2] {
    let disc = (c.c2 * c.c2 - 4.0 * c.c0).sqrt();
    // pick the sign that avoids cancellation in −c₂ ∓ √disc
    let sq = if (c.c2.conj() * disc).re >= 0.0 {
        disc
    } else {
        -disc
    };
    let w1 = (-c.c2 - sq) * 0.5;
    if w1.norm() > 1e-12 {
        [w1, c.c0 / w1]
    } else {
        [w1, -c.c2 - w1]
    }
}

/// Advances both angles by `theta`.
pub fn rotate_pair(pair: DirectionPair, theta: f64) -> DirectionPair {
    DirectionPair::new(pair.alpha + theta, pair.beta + theta)
}

/// Pair made of a tangent angle and its normal.
pub fn tangent_normal_pair(alpha: f64) -> DirectionPair {
    DirectionPair::new(alpha, alpha + FRAC_PI_2)
}

/// Per-pixel coefficients over a grid, defined only where the mask is set.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyVectorField {
    width: u32,
    height: u32,
    data: Vec<[f64; 4]>,
    mask: PixelMask,
}

impl PolyVectorField {
    /// Field with no defined pixels.
    pub fn empty(width: u32, height: u32) -> Self {
        PolyVectorField {
            width,
            height,
            data: vec![[0.0; 4]; width as usize * height as usize],
            mask: PixelMask::new(width, height),
        }
    }

    /// Builds a field, zeroing channels at undefined pixels.
    pub fn from_parts(mask: PixelMask, mut data: Vec<[f64; 4]>) -> Result<Self, FieldError> {
        let expected = mask.width() as usize * mask.height() as usize;
        if data.len() != expected {
            return Err(FieldError::DataLength {
                len: data.len(),
                expected,
            });
        }
        for (px, &m) in data.iter_mut().zip(mask.data()) {
            if !m {
                *px = [0.0; 4];
            }
        }
        Ok(PolyVectorField {
            width: mask.width(),
            height: mask.height(),
            data,
            mask,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn mask(&self) -> &PixelMask {
        &self.mask
    }

    /// Channels for every pixel, row-major. Undefined pixels hold zeros.
    pub fn data(&self) -> &[[f64; 4]] {
        &self.data
    }

    pub fn defined_count(&self) -> usize {
        self.mask.count()
    }

    fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn is_defined(&self, x: u32, y: u32) -> bool {
        self.mask.get(x, y)
    }

    pub fn get(&self, x: u32, y: u32) -> Option<Coefficients> {
        self.is_defined(x, y)
            .then(|| Coefficients::from_channels(self.data[self.index(x, y)]))
    }

    pub fn channels(&self, x: u32, y: u32) -> [f64; 4] {
        self.data[self.index(x, y)]
    }

    /// Defines pixel `(x, y)` with the given coefficients.
    pub fn set(&mut self, x: u32, y: u32, c: Coefficients) {
        let i = self.index(x, y);
        self.data[i] = c.to_channels();
        self.mask.set(x, y, true);
    }

    pub fn unset(&mut self, x: u32, y: u32) {
        let i = self.index(x, y);
        self.data[i] = [0.0; 4];
        self.mask.set(x, y, false);
    }

    pub fn check_dims(&self, other: &PolyVectorField) -> Result<(), FieldError> {
        if self.dims() == other.dims() {
            Ok(())
        } else {
            Err(FieldError::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            })
        }
    }
}

/// Truncated 1D Gaussian, radius `⌈3σ⌉`, normalized to sum 1.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|w| *w /= sum);
    kernel
}

/// Masked normalized Gaussian smoothing, applied to each channel separately.
///
/// Computes `G * (channel·mask) / G * mask` with a separable kernel. Only
/// pixels that were already defined are written; the mask never grows.
pub fn smooth(field: &PolyVectorField, sigma: f64) -> Result<PolyVectorField, FieldError> {
    if !(sigma > 0.0) {
        return Err(FieldError::NonPositiveSigma(sigma));
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let (w, h) = (field.width as usize, field.height as usize);

    // five planes: the mask followed by the four masked channels
    let input: Vec<[f64; 5]> = field
        .data
        .iter()
        .zip(field.mask.data())
        .map(|(c, &m)| {
            if m {
                [1.0, c[0], c[1], c[2], c[3]]
            } else {
                [0.0; 5]
            }
        })
        .collect();

    let convolve = |src: &[[f64; 5]], horizontal: bool| -> Vec<[f64; 5]> {
        (0..w * h)
            .into_par_iter()
            .map(|k| {
                let (x, y) = ((k % w) as i64, (k / w) as i64);
                let mut acc = [0.0; 5];
                for (i, &kw) in kernel.iter().enumerate() {
                    let off = i as i64 - radius;
                    let (sx, sy) = if horizontal { (x + off, y) } else { (x, y + off) };
                    if sx < 0 || sy < 0 || sx >= w as i64 || sy >= h as i64 {
                        continue;
                    }
                    let s = &src[sy as usize * w + sx as usize];
                    for (a, v) in acc.iter_mut().zip(s) {
                        *a += kw * v;
                    }
                }
                acc
            })
            .collect()
    };
    let blurred = convolve(&convolve(&input, true), false);

    let mut mask = field.mask.clone();
    let data = blurred
        .iter()
        .enumerate()
        .map(|(k, b)| {
            if !field.mask.data()[k] {
                return [0.0; 4];
            }
            if b[0] < MIN_MASK_WEIGHT {
                mask.set((k % w) as u32, (k / w) as u32, false);
                return [0.0; 4];
            }
            [b[1] / b[0], b[2] / b[0], b[3] / b[0], b[4] / b[0]]
        })
        .collect();
    PolyVectorField::from_parts(mask, data)
}

/// Sum of squared forward differences of `c₀` and `c₂` (real and imaginary
/// parts) between horizontally and vertically adjacent defined pixels.
pub fn smoothness_energy(field: &PolyVectorField) -> f64 {
    let (w, h) = (field.width as usize, field.height as usize);
    let m = field.mask.data();
    let mut energy = 0.0;
    for y in 0..h {
        for x in 0..w {
            let k = y * w + x;
            if !m[k] {
                continue;
            }
            if x + 1 < w && m[k + 1] {
                energy += squared_difference(&field.data[k], &field.data[k + 1]);
            }
            if y + 1 < h && m[k + w] {
                energy += squared_difference(&field.data[k], &field.data[k + w]);
            }
        }
    }
    energy
}

fn squared_difference(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (q - p) * (q - p)).sum()
}

/// Decodes every defined pixel.
pub fn decode_field(field: &PolyVectorField) -> Vec<Option<DirectionPair>> {
    field
        .data
        .iter()
        .zip(field.mask.data())
        .map(|(c, &m)| m.then(|| decode(Coefficients::from_channels(*c))))
        .collect()
}

/// Rotation by `theta` acts as `c₀ ↦ c₀e^{4iθ}`, `c₂ ↦ c₂e^{2iθ}`.
pub fn rotate_coefficients(c: Coefficients, theta: f64) -> Coefficients {
    Coefficients {
        c0: c.c0 * Complex64::from_polar(1.0, 4.0 * theta),
        c2: c.c2 * Complex64::from_polar(1.0, 2.0 * theta),
    }
}
