//! Anti-aliased rendering of scenes and the thresholded pixel domain.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{Point, Scene};

pub const DEFAULT_STROKE_WIDTH: f64 = 1.5;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("stroke width must lie in (0, 4], got {0}")]
    StrokeWidth(f64),
    #[error("image dimensions {width}x{height} do not match {len} intensities")]
    Dimensions { width: u32, height: u32, len: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("png encoding error: {0}")]
    PngEncode(#[from] png::EncodingError),
    #[error("png decoding error: {0}")]
    PngDecode(#[from] png::DecodingError),
    #[error("unsupported png layout: {0}")]
    UnsupportedPng(String),
}

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    data: Vec<f64>,
}

impl RasterImage {
    pub fn zeros(width: u32, height: u32) -> Self {
        RasterImage {
            width,
            height,
            data: vec![0.0; width as usize * height as usize],
        }
    }

    /// Builds an image from row-major intensities, clamping them to `[0, 1]`.
    pub fn from_data(width: u32, height: u32, data: Vec<f64>) -> Result<Self, RasterError> {
        if data.len() != width as usize * height as usize {
            return Err(RasterError::Dimensions {
                width,
                height,
                len: data.len(),
            });
        }
        let data = data
            .into_iter()
            .map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
            .collect();
        Ok(RasterImage {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    /// 8-bit quantization, `round(255·v)`.
    pub fn to_gray8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (255.0 * v).round() as u8)
            .collect()
    }

    /// Writes an 8-bit grayscale PNG containing only IHDR, IDAT and IEND.
    pub fn write_png(&self, path: &Path) -> Result<(), RasterError> {
        let file = File::create(path)?;
        let mut out = BufWriter::new(file);
        self.encode_png(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn encode_png<W: Write>(&self, out: W) -> Result<(), RasterError> {
        let mut encoder = png::Encoder::new(out, self.width, self.height);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Eight);
        encoder.set_compression(png::Compression::Balanced);
        encoder.set_filter(png::Filter::NoFilter);
        let mut writer = encoder.write_header()?;
        writer.write_image_data(&self.to_gray8())?;
        writer.finish()?;
        Ok(())
    }

    /// Reads a PNG as intensities `v/max`. Color images are averaged over
    /// their color channels; alpha is ignored.
    pub fn read_png(path: &Path) -> Result<Self, RasterError> {
        let mut decoder = png::Decoder::new(BufReader::new(File::open(path)?));
        decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = decoder.read_info()?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| RasterError::UnsupportedPng("image too large".into()))?;
        let mut buf = vec![0; size];
        let info = reader.next_frame(&mut buf)?;
        let (colors, has_alpha) = match info.color_type {
            png::ColorType::Grayscale => (1, false),
            png::ColorType::GrayscaleAlpha => (1, true),
            png::ColorType::Rgb => (3, false),
            png::ColorType::Rgba => (3, true),
            other => return Err(RasterError::UnsupportedPng(format!("{other:?}"))),
        };
        if info.bit_depth != png::BitDepth::Eight {
            return Err(RasterError::UnsupportedPng(format!("{:?}", info.bit_depth)));
        }
        let stride = colors + usize::from(has_alpha);
        let data = buf[..info.buffer_size()]
            .chunks(stride)
            .map(|px| {
                let sum: f64 = px[..colors].iter().map(|&c| f64::from(c)).sum();
                sum / (255.0 * colors as f64)
            })
            .collect();
        RasterImage::from_data(info.width, info.height, data)
    }
}

/// Row-major boolean grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PixelMask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl PixelMask {
    pub fn new(width: u32, height: u32) -> Self {
        PixelMask {
            width,
            height,
            data: vec![false; width as usize * height as usize],
        }
    }

    pub fn full(width: u32, height: u32) -> Self {
        PixelMask {
            width,
            height,
            data: vec![true; width as usize * height as usize],
        }
    }

    pub fn from_data(width: u32, height: u32, data: Vec<bool>) -> Option<Self> {
        (data.len() == width as usize * height as usize).then_some(PixelMask {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.data[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }
}

/// Center of pixel `(x, y)`.
pub fn pixel_center(x: u32, y: u32) -> Point {
    Point::new(f64::from(x) + 0.5, f64::from(y) + 0.5)
}

/// Coverage `clamp(w/2 + 0.5 − d, 0, 1)` where `d` is the distance from the
/// pixel center to the nearest primitive.
pub fn rasterize(scene: &Scene, stroke_width: f64) -> Result<RasterImage, RasterError> {
    if !(stroke_width > 0.0 && stroke_width <= 4.0) {
        return Err(RasterError::StrokeWidth(stroke_width));
    }
    let (w, h) = (scene.width, scene.height);
    let reach = stroke_width / 2.0 + 0.5;
    let bounds: Vec<_> = scene.primitives.iter().map(|p| p.bounds()).collect();
    let data: Vec<f64> = (0..w as usize * h as usize)
        .into_par_iter()
        .map(|k| {
            let p = pixel_center((k % w as usize) as u32, (k / w as usize) as u32);
            let mut d = f64::INFINITY;
            for (prim, b) in scene.primitives.iter().zip(&bounds) {
                // coverage is zero beyond `reach`, so far primitives can be skipped
                let lower = b.distance_to(p);
                if lower >= reach || lower >= d {
                    continue;
                }
                d = d.min(prim.closest_point(p).1);
            }
            (reach - d).clamp(0.0, 1.0)
        })
        .collect();
    Ok(RasterImage {
        width: w,
        height: h,
        data,
    })
}

/// Pixels with intensity at or above `threshold`.
pub fn mask(image: &RasterImage, threshold: f64) -> PixelMask {
    PixelMask {
        width: image.width,
        height: image.height,
        data: image.data.iter().map(|&v| v >= threshold).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Primitive;

    fn segment_scene() -> Scene {
        Scene::new(
            16,
            16,
            vec![Primitive::line(Point::new(2.0, 8.5), Point::new(14.0, 8.5)).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn empty_scene_is_blank() {
        let scene = Scene::new(64, 64, vec![]).unwrap();
        let img = rasterize(&scene, 1.5).unwrap();
        assert!(img.data().iter().all(|&v| v == 0.0));
        assert!(mask(&img, 0.5).is_empty());
    }

    #[test]
    fn on_curve_and_far_pixels() {
        let img = rasterize(&segment_scene(), 1.5).unwrap();
        assert_eq!(img.get(7, 8), 1.0);
        assert_eq!(img.get(7, 9), 0.25);
        assert_eq!(img.get(7, 11), 0.0);
        assert_eq!(img.get(7, 5), 0.0);
    }

    #[test]
    fn stroke_width_bounds() {
        assert!(rasterize(&segment_scene(), 0.0).is_err());
        assert!(rasterize(&segment_scene(), 4.5).is_err());
        assert!(rasterize(&segment_scene(), 4.0).is_ok());
    }

    #[test]
    fn mask_threshold_is_inclusive() {
        let img = RasterImage::from_data(3, 1, vec![0.5, 0.49, 1.0]).unwrap();
        let m = mask(&img, 0.5);
        assert_eq!(m.data(), &[true, false, true]);
        let ones = RasterImage::from_data(2, 2, vec![1.0; 4]).unwrap();
        assert_eq!(mask(&ones, 0.5).count(), 4);
        assert!(mask(&RasterImage::zeros(2, 2), 0.5).is_empty());
    }

    #[test]
    fn png_round_trip_quantizes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let img = RasterImage::from_data(3, 2, vec![0.0, 0.25, 0.5, 0.75, 1.0, 0.1]).unwrap();
        img.write_png(&path).unwrap();
        let back = RasterImage::read_png(&path).unwrap();
        assert_eq!(back.width(), 3);
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn png_has_only_critical_chunks() {
        let mut bytes = Vec::new();
        rasterize(&segment_scene(), 1.5)
            .unwrap()
            .encode_png(&mut bytes)
            .unwrap();
        let mut chunks = Vec::new();
        let mut pos = 8;
        while pos < bytes.len() {
            let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
            chunks.push(String::from_utf8_lossy(&bytes[pos + 4..pos + 8]).into_owned());
            pos += 12 + len;
        }
        chunks.dedup();
        assert_eq!(chunks, ["IHDR", "IDAT", "IEND"]);
    }
}
