//! Analytic ground-truth fields for rasterized scenes.
//!
//! Each pixel inside the thresholded stroke takes its first direction from
//! the tangent of the nearest primitive. The second direction is the normal
//! of that primitive far from junctions, the tangent of the crossing curve at
//! a junction, and a blend of the two in between.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, GeometryError, Junction, Point, Scene};
use crate::polyvector::{self, DirectionPair, FieldError, PolyVectorField};
use crate::raster::{self, PixelMask, RasterError, RasterImage};

#[derive(Debug, Error)]
pub enum GroundTruthError {
    #[error("invalid field parameters: {0}")]
    InvalidParams(String),
    #[error("pixel ({0}, {1}) has no primitive to follow")]
    NoPrimitive(f64, f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldParams {
    /// Within this distance of a junction the second direction follows the
    /// crossing curve.
    pub d_near: f64,
    /// Beyond this distance the second direction is the normal.
    pub d_far: f64,
    pub sigma: f64,
    pub threshold: f64,
    pub stroke_width: f64,
    pub intersection_tol: f64,
}

impl Default for FieldParams {
    fn default() -> Self {
        FieldParams {
            d_near: 2.0,
            d_far: 6.0,
            sigma: 1.0,
            threshold: raster::DEFAULT_THRESHOLD,
            stroke_width: raster::DEFAULT_STROKE_WIDTH,
            intersection_tol: geometry::DEFAULT_INTERSECTION_TOL,
        }
    }
}

impl FieldParams {
    pub fn validate(&self) -> Result<(), GroundTruthError> {
        let bad = |m: &str| Err(GroundTruthError::InvalidParams(m.into()));
        if !(self.d_near > 0.0 && self.d_near < self.d_far && self.d_far.is_finite()) {
            return bad("require 0 < d_near < d_far");
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be positive");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold must lie in (0, 1)");
        }
        if !(self.stroke_width > 0.0 && self.stroke_width <= 4.0) {
            return bad("stroke width must lie in (0, 4]");
        }
        if !(self.intersection_tol > 0.0 && self.intersection_tol.is_finite()) {
            return bad("intersection tolerance must be positive");
        }
        Ok(())
    }
}

/// Directions assigned to a single pixel, before canonical ordering.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelAssignment {
    pub primitive: usize,
    pub t: f64,
    /// Tangent of the nearest primitive.
    pub alpha: f64,
    /// Normal, crossing tangent, or their blend.
    pub beta: f64,
    /// Distance to the nearest junction involving `primitive`, if any.
    pub junction_distance: Option<f64>,
}

impl PixelAssignment {
    pub fn pair(&self) -> DirectionPair {
        DirectionPair::new(self.alpha, self.beta)
    }
}

/// Blends two undirected angles along the shorter arc of the doubled circle.
/// `weight = 0` gives `from`, `weight = 1` gives `to`.
pub fn blend_directions(from: f64, to: f64, weight: f64) -> f64 {
    let mut delta = (2.0 * to - 2.0 * from).rem_euclid(2.0 * PI);
    if delta > PI {
        delta -= 2.0 * PI;
    }
    geometry::reduce_mod_pi((2.0 * from + weight * delta) / 2.0)
}

/// Second direction given the tangent `alpha`, the crossing curve's tangent
/// and the distance to the junction.
pub fn second_direction(
    alpha: f64,
    crossing: Option<(f64, f64)>,
    params: &FieldParams,
) -> f64 {
    let normal = geometry::reduce_mod_pi(alpha + FRAC_PI_2);
    match crossing {
        None => normal,
        Some((_, dist)) if dist >= params.d_far => normal,
        Some((other, dist)) if dist <= params.d_near => other,
        Some((other, dist)) => {
            let weight = (params.d_far - dist) / (params.d_far - params.d_near);
            blend_directions(normal, other, weight)
        }
    }
}

/// Assigns directions to the pixel centered at `p`.
pub fn assign_directions(
    scene: &Scene,
    junctions: &[Junction],
    p: Point,
    params: &FieldParams,
) -> Result<PixelAssignment, GroundTruthError> {
    let (index, t, _) = scene
        .closest_primitive(p)
        .ok_or(GroundTruthError::NoPrimitive(p.x, p.y))?;
    let alpha = scene.primitives[index].tangent_angle_or_fallback(t)?;

    let mut nearest: Option<(&Junction, f64)> = None;
    for j in junctions.iter().filter(|j| j.involves(index)) {
        let d = j.point.distance(p);
        if nearest.is_none_or(|(_, best)| d < best) {
            nearest = Some((j, d));
        }
    }
    let crossing = match nearest {
        Some((j, d)) => {
            let (other, t_other) = j.partner_of(index).expect("junction involves primitive");
            Some((scene.primitives[other].tangent_angle_or_fallback(t_other)?, d))
        }
        None => None,
    };
    Ok(PixelAssignment {
        primitive: index,
        t,
        alpha,
        beta: second_direction(alpha, crossing, params),
        junction_distance: nearest.map(|(_, d)| d),
    })
}

pub fn assign_pixel(
    scene: &Scene,
    junctions: &[Junction],
    p: Point,
    params: &FieldParams,
) -> Result<DirectionPair, GroundTruthError> {
    assign_directions(scene, junctions, p, params).map(|a| a.pair())
}

/// Output of [`build_field`].
#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub image: RasterImage,
    /// Field after Gaussian smoothing.
    pub field: PolyVectorField,
    /// Field straight from the assignment rules.
    pub raw_field: PolyVectorField,
    pub junctions: Vec<Junction>,
    pub warnings: Vec<String>,
}

/// Rasterizes `scene`, assigns directions to every pixel of the stroke mask
/// and returns the field before smoothing.
pub fn build_raw_field(
    scene: &Scene,
    params: &FieldParams,
) -> Result<(RasterImage, PolyVectorField, Vec<Junction>, Vec<String>), GroundTruthError> {
    params.validate()?;
    scene.validate()?;
    let image = raster::rasterize(scene, params.stroke_width)?;
    let stroke = raster::mask(&image, params.threshold);
    let junctions = scene.junctions(params.intersection_tol);
    let warnings = multiway_junction_warnings(&junctions, params.intersection_tol);

    let w = scene.width as usize;
    let assigned: Vec<Option<[f64; 4]>> = stroke
        .data()
        .par_iter()
        .enumerate()
        .map(|(k, &inside)| {
            if !inside {
                return Ok(None);
            }
            let p = raster::pixel_center((k % w) as u32, (k / w) as u32);
            let pair = assign_pixel(scene, &junctions, p, params)?;
            Ok(Some(polyvector::encode(pair).to_channels()))
        })
        .collect::<Result<_, GroundTruthError>>()?;

    let mut mask = PixelMask::new(scene.width, scene.height);
    let data = assigned
        .iter()
        .enumerate()
        .map(|(k, a)| match a {
            Some(ch) => {
                mask.set((k % w) as u32, (k / w) as u32, true);
                *ch
            }
            None => [0.0; 4],
        })
        .collect();
    let field = PolyVectorField::from_parts(mask, data)?;
    Ok((image, field, junctions, warnings))
}

/// Rasterize, mask, assign, encode, smooth.
pub fn build_field(scene: &Scene, params: &FieldParams) -> Result<GroundTruth, GroundTruthError> {
    let (image, raw_field, junctions, warnings) = build_raw_field(scene, params)?;
    let field = polyvector::smooth(&raw_field, params.sigma)?;
    Ok(GroundTruth {
        image,
        field,
        raw_field,
        junctions,
        warnings,
    })
}

/// Clusters of junction points within `tol` of each other that involve three
/// or more primitives. Only the two-curve rules are applied at such points.
pub fn multiway_junction_warnings(junctions: &[Junction], tol: f64) -> Vec<String> {
    let mut seen = vec![false; junctions.len()];
    let mut warnings = Vec::new();
    for i in 0..junctions.len() {
        if seen[i] {
            continue;
        }
        let cluster: Vec<usize> = (0..junctions.len())
            .filter(|&k| junctions[k].point.distance(junctions[i].point) <= tol)
            .collect();
        let mut prims: Vec<usize> = cluster
            .iter()
            .flat_map(|&k| [junctions[k].primitive_index_a, junctions[k].primitive_index_b])
            .collect();
        prims.sort_unstable();
        prims.dedup();
        if prims.len() >= 3 {
            cluster.iter().for_each(|&k| seen[k] = true);
            let p = junctions[i].point;
            warnings.push(format!(
                "junction of {} curves near ({:.2}, {:.2}); using the two nearest",
                prims.len(),
                p.x,
                p.y
            ));
        }
    }
    warnings
}

/// Whether any point is shared by three or more primitives within `tol`.
pub fn has_multiway_junction(junctions: &[Junction], tol: f64) -> bool {
    !multiway_junction_warnings(junctions, tol).is_empty()
}
