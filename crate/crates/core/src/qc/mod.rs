//! Quality control for generated images: automatic artifact flags and the
//! human accept/reject review that gates export.

mod log;
mod queue;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;

pub use self::log::{replay, DecisionLog, DecisionRecord, ReviewState};
pub use queue::{
    review_summary, DecisionOutcome, JobRef, ReviewItem, ReviewQueue, ReviewSummary, StateCounts,
    AUTO_REVIEWER,
};

/// Side of the structure grid used for the luminance correlation.
pub const STRUCTURE_GRID: u32 = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QcThresholds {
    pub warn_clipped: f64,
    pub block_clipped: f64,
    pub warn_structure: f64,
    pub block_structure: f64,
}

impl Default for QcThresholds {
    fn default() -> Self {
        QcThresholds {
            warn_clipped: 0.10,
            block_clipped: 0.25,
            warn_structure: 0.8,
            block_structure: 0.6,
        }
    }
}

impl QcThresholds {
    pub fn validate(&self) -> Result<()> {
        if self.warn_clipped > self.block_clipped {
            return Err(Error::Config("clipping warn threshold exceeds block threshold".into()));
        }
        if self.warn_structure < self.block_structure {
            return Err(Error::Config("structure warn threshold is below block threshold".into()));
        }
        Ok(())
    }

    pub fn severity(&self, clipped_fraction: f64, structure_score: f64) -> Severity {
        if clipped_fraction > self.block_clipped || structure_score < self.block_structure {
            Severity::Block
        } else if clipped_fraction > self.warn_clipped || structure_score < self.warn_structure {
            Severity::Warn
        } else {
            Severity::None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    None,
    Warn,
    Block,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcFlags {
    pub item_id: String,
    pub clipped_fraction: f64,
    pub structure_score: f64,
    pub severity: Severity,
}

/// Flags a generated image against its source: the fraction of samples
/// saturated at exactly 0 or 1, and the luminance correlation on a 32x32
/// grid mapped to `[0, 1]` as `(r + 1) / 2`.
pub fn auto_flag(item_id: &str, source: &Raster, generated: &Raster, thresholds: &QcThresholds) -> Result<QcFlags> {
    if source.dimensions() != generated.dimensions() {
        return Err(Error::DimensionMismatch {
            expected: source.dimensions(),
            actual: generated.dimensions(),
        });
    }
    let clipped_fraction = saturated_fraction(generated);
    let structure_score = structure_score(source, generated);
    Ok(QcFlags {
        item_id: item_id.to_string(),
        clipped_fraction,
        structure_score,
        severity: thresholds.severity(clipped_fraction, structure_score),
    })
}

pub fn saturated_fraction(image: &Raster) -> f64 {
    let n = image
        .samples()
        .iter()
        .filter(|&&v| v <= 0.0 || v >= 1.0)
        .count();
    n as f64 / image.samples().len() as f64
}

pub fn structure_score(source: &Raster, generated: &Raster) -> f64 {
    let a = source.luminance_grid(STRUCTURE_GRID, STRUCTURE_GRID);
    let b = generated.luminance_grid(STRUCTURE_GRID, STRUCTURE_GRID);
    (pearson(&a, &b) + 1.0) / 2.0
}

/// Pearson correlation. Two flat signals count as perfectly correlated; one
/// flat signal against a varying one as uncorrelated.
fn pearson(a: &[f64], b: &[f64]) -> f64 {
    const FLAT: f64 = 1e-12;
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    let (flat_a, flat_b) = (va / n < FLAT, vb / n < FLAT);
    match (flat_a, flat_b) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => (cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured() -> Raster {
        Raster::from_fn(64, 48, |x, y| {
            let v = 0.2 + 0.6 * (((x as f32) * 0.3).sin() * ((y as f32) * 0.2).cos() * 0.5 + 0.5);
            [v, v * 0.8 + 0.1, 0.5 - v * 0.3]
        })
        .unwrap()
    }

    #[test]
    fn self_comparison() {
        let src = textured();
        let f = auto_flag("i", &src, &src, &QcThresholds::default()).unwrap();
        assert_eq!(f.clipped_fraction, saturated_fraction(&src));
        assert!((f.structure_score - 1.0).abs() < 1e-12);
        assert_eq!(f.severity, Severity::None);
    }

    #[test]
    fn white_output_is_blocked() {
        let src = textured();
        let white = Raster::filled(64, 48, [1.0; 3]).unwrap();
        let f = auto_flag("i", &src, &white, &QcThresholds::default()).unwrap();
        assert_eq!(f.clipped_fraction, 1.0);
        assert_eq!(f.severity, Severity::Block);
    }

    #[test]
    fn affine_shift_keeps_structure() {
        let src = textured();
        let shifted = src.map_pixels(|p| [p[0] * 0.9 + 0.05, p[1] * 0.8 + 0.1, p[2] * 1.1]);
        assert!(shifted.samples().iter().all(|v| *v > 0.0 && *v < 1.0));
        let f = auto_flag("i", &src, &shifted, &QcThresholds::default()).unwrap();
        assert!(f.structure_score >= 0.99, "{}", f.structure_score);
        assert_eq!(f.severity, Severity::None);
    }

    #[test]
    fn inverted_structure_is_blocked_and_mismatch_errors() {
        let src = textured();
        let inv = src.map_pixels(|p| [1.0 - p[0], 1.0 - p[1], 1.0 - p[2]]);
        let f = auto_flag("i", &src, &inv, &QcThresholds::default()).unwrap();
        assert!(f.structure_score < 0.1);
        assert_eq!(f.severity, Severity::Block);
        let other = Raster::filled(10, 10, [0.5; 3]).unwrap();
        assert!(matches!(
            auto_flag("i", &src, &other, &QcThresholds::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn severity_rule() {
        let t = QcThresholds::default();
        assert_eq!(t.severity(0.0, 1.0), Severity::None);
        assert_eq!(t.severity(0.10, 0.8), Severity::None);
        assert_eq!(t.severity(0.11, 1.0), Severity::Warn);
        assert_eq!(t.severity(0.0, 0.79), Severity::Warn);
        assert_eq!(t.severity(0.26, 1.0), Severity::Block);
        assert_eq!(t.severity(0.0, 0.59), Severity::Block);
        let bad = QcThresholds {
            warn_clipped: 0.5,
            ..QcThresholds::default()
        };
        assert!(bad.validate().is_err());
    }
}
