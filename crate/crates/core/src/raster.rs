//! In-memory RGB rasters with samples normalized to `[0, 1]`.

use std::path::Path;

use image::{ImageBuffer, Rgb, RgbImage};

use crate::color;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: u32,
    height: u32,
    /// Interleaved RGB, row-major.
    data: Vec<f32>,
}

impl Raster {
    pub fn new(width: u32, height: u32, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage);
        }
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "raster {width}x{height} needs {expected} samples, got {}",
                data.len()
            )));
        }
        Ok(Raster {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [f32; 3]) -> Result<Self> {
        Self::from_fn(width, height, |_, _| rgb)
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [f32; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn samples(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> [f32; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f32; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    /// Applies `f` to every pixel, keeping dimensions.
    pub fn map_pixels(&self, mut f: impl FnMut([f32; 3]) -> [f32; 3]) -> Raster {
        let mut data = Vec::with_capacity(self.data.len());
        for p in self.pixels() {
            data.extend_from_slice(&f(p));
        }
        Raster {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn mean_rgb(&self) -> [f64; 3] {
        let mut sum = [0.0f64; 3];
        for p in self.pixels() {
            for c in 0..3 {
                sum[c] += p[c] as f64;
            }
        }
        let n = self.pixel_count() as f64;
        sum.map(|s| s / n)
    }

    /// Mean color in the opponent working space.
    pub fn mean_opponent(&self) -> [f64; 3] {
        color::rgb_to_opponent(self.mean_rgb())
    }

    /// Area-averaged luminance on a `cols x rows` grid, row-major.
    ///
    /// Every source pixel contributes with weight proportional to its overlap
    /// with each grid cell, so the grid mean equals the image mean.
    pub fn luminance_grid(&self, cols: u32, rows: u32) -> Vec<f64> {
        let xw = area_weights(self.width, cols);
        let yw = area_weights(self.height, rows);
        let mut out = Vec::with_capacity(cols as usize * rows as usize);
        for wy in &yw {
            for wx in &xw {
                let mut acc = 0.0;
                let mut total = 0.0;
                for &(sy, ky) in wy {
                    for &(sx, kx) in wx {
                        let k = ky * kx;
                        acc += k * color::luminance(self.pixel(sx, sy));
                        total += k;
                    }
                }
                out.push(acc / total);
            }
        }
        out
    }

    pub fn from_rgb8(img: &RgbImage) -> Result<Self> {
        let data = img.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
        Self::new(img.width(), img.height(), data)
    }

    /// Quantizes to 8 bits per channel, clamping out-of-range samples.
    pub fn to_rgb8(&self) -> RgbImage {
        let raw: Vec<u8> = self
            .data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        ImageBuffer::<Rgb<u8>, _>::from_raw(self.width, self.height, raw)
            .expect("buffer length matches dimensions")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_rgb8(&img.to_rgb8()).map_err(|e| e.in_file(path))
    }

    /// Writes PNG or JPEG depending on the file extension.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_rgb8().save(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// For each of `dst` output cells, the source indices it overlaps and the
/// overlap length (in source pixels).
fn area_weights(src: u32, dst: u32) -> Vec<Vec<(u32, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let lo = i as f64 * scale;
            let hi = (i + 1) as f64 * scale;
            let first = lo.floor() as u32;
            let last = (hi.ceil() as u32).min(src);
            (first..last)
                .filter_map(|s| {
                    let overlap = (hi.min(s as f64 + 1.0) - lo.max(s as f64)).max(0.0);
                    (overlap > 0.0).then_some((s, overlap))
                })
                .collect()
        })
        .collect()
}
