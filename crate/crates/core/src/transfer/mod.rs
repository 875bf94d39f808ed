//! Style translation between domains: statistical color transfer in the
//! opponent space, synthetic haze, pluggable translators, and translator
//! quality metrics.

mod loss;
mod translator;

use serde::{Deserialize, Serialize};

use crate::color;
use crate::domain::StyleDomain;
use crate::error::{Error, Result};
use crate::raster::Raster;

pub use loss::{adversarial_loss, cycle_loss, DiscriminatorLabel};
pub use translator::{
    ExternalTranslator, Provenance, StyleTargets, TranslationResult, Translator, TranslatorKind,
};

pub const DEFAULT_STD_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazeParams {
    pub airlight: [f64; 3],
    pub transmission: f64,
}

impl HazeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.transmission > 0.0 && self.transmission <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "transmission {} outside (0, 1]",
                self.transmission
            )));
        }
        if self.airlight.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::InvalidArgument(format!(
                "airlight {:?} outside [0, 1]",
                self.airlight
            )));
        }
        Ok(())
    }
}

impl Default for HazeParams {
    fn default() -> Self {
        HazeParams {
            airlight: [1.0, 1.0, 1.0],
            transmission: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleTarget {
    pub domain: StyleDomain,
    /// Per-channel mean in the opponent space.
    pub channel_mean: [f64; 3],
    /// Per-channel population standard deviation in the opponent space.
    pub channel_std: [f64; 3],
    pub haze: HazeParams,
}

impl StyleTarget {
    pub fn validate(&self) -> Result<()> {
        if self.channel_std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "style target `{}` has non-positive std {:?}",
                self.domain, self.channel_std
            )));
        }
        self.haze.validate()
    }
}

/// Streaming first and second moments of opponent-space pixels.
#[derive(Debug, Clone, Default)]
pub struct MomentAccumulator {
    n: u64,
    sum: [f64; 3],
    sum_sq: [f64; 3],
}

impl MomentAccumulator {
    pub fn add_image(&mut self, image: &Raster) {
        for p in image.pixels() {
            let o = color::rgb_to_opponent(p.map(f64::from));
            for c in 0..3 {
                self.sum[c] += o[c];
                self.sum_sq[c] += o[c] * o[c];
            }
        }
        self.n += image.pixel_count() as u64;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> [f64; 3] {
        let n = self.n as f64;
        self.sum.map(|s| s / n)
    }

    pub fn std(&self) -> [f64; 3] {
        let n = self.n as f64;
        let mean = self.mean();
        let mut out = [0.0; 3];
        for c in 0..3 {
            out[c] = (self.sum_sq[c] / n - mean[c] * mean[c]).max(0.0).sqrt();
        }
        out
    }

    /// Finishes into a style target, flooring each std at `std_floor`.
    pub fn finish(&self, domain: StyleDomain, haze: HazeParams, std_floor: f64) -> Result<StyleTarget> {
        if self.n == 0 {
            return Err(Error::InvalidArgument(format!("empty style pool for `{domain}`")));
        }
        haze.validate()?;
        let mut std = self.std();
        for (c, s) in std.iter_mut().enumerate() {
            if *s < std_floor {
                log::warn!("style pool `{domain}` channel {c} std {s:.2e} floored at {std_floor:.0e}");
                *s = std_floor;
            }
        }
        Ok(StyleTarget {
            domain,
            channel_mean: self.mean(),
            channel_std: std,
            haze,
        })
    }
}

/// Pooled opponent-space moments over all pixels of all pool images.
pub fn compute_style_target(
    pool: &[Raster],
    domain: StyleDomain,
    haze: HazeParams,
    std_floor: f64,
) -> Result<StyleTarget> {
    let mut acc = MomentAccumulator::default();
    for img in pool {
        acc.add_image(img);
    }
    acc.finish(domain, haze, std_floor)
}

/// Per-channel affine map in opponent space taking `source` statistics onto
/// `target` statistics: `out = in * scale + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransfer {
    pub scale: [f64; 3],
    pub offset: [f64; 3],
}

impl AffineTransfer {
    pub fn between(source: &StyleTarget, target: &StyleTarget) -> Self {
        let mut scale = [0.0; 3];
        let mut offset = [0.0; 3];
        for c in 0..3 {
            scale[c] = target.channel_std[c] / source.channel_std[c];
            offset[c] = target.channel_mean[c] - source.channel_mean[c] * scale[c];
        }
        AffineTransfer { scale, offset }
    }

    pub fn then(&self, next: &AffineTransfer) -> AffineTransfer {
        let mut scale = [0.0; 3];
        let mut offset = [0.0; 3];
        for c in 0..3 {
            scale[c] = self.scale[c] * next.scale[c];
            offset[c] = self.offset[c] * next.scale[c] + next.offset[c];
        }
        AffineTransfer { scale, offset }
    }

    pub fn apply(&self, opp: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for c in 0..3 {
            out[c] = opp[c] * self.scale[c] + self.offset[c];
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferOutput {
    pub image: Raster,
    /// Fraction of output samples that fell outside `[0, 1]` and were clipped.
    pub clipped_fraction: f64,
}

/// Mean/std transfer in the opponent space, clipped back into `[0, 1]` RGB.
pub fn color_transfer(image: &Raster, source: &StyleTarget, target: &StyleTarget) -> TransferOutput {
    let map = AffineTransfer::between(source, target);
    let mut clipped = 0usize;
    let out = image.map_pixels(|p| {
        let rgb = color::opponent_to_rgb(map.apply(color::rgb_to_opponent(p.map(f64::from))));
        rgb.map(|v| {
            if !(0.0..=1.0).contains(&v) {
                clipped += 1;
            }
            v.clamp(0.0, 1.0) as f32
        })
    });
    TransferOutput {
        image: out,
        clipped_fraction: clipped as f64 / image.samples().len() as f64,
    }
}

/// Scattering model `out = in * t + airlight * (1 - t)`, per channel.
pub fn apply_haze(image: &Raster, airlight: [f64; 3], transmission: f64) -> Result<Raster> {
    HazeParams {
        airlight,
        transmission,
    }
    .validate()?;
    let t = transmission;
    Ok(image.map_pixels(|p| {
        let mut out = [0.0f32; 3];
        for c in 0..3 {
            out[c] = (p[c] as f64 * t + airlight[c] * (1.0 - t)) as f32;
        }
        out
    }))
}
