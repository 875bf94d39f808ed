use serde::{Deserialize, Serialize};

use super::Translator;
use crate::domain::StyleDomain;
use crate::error::{Error, Result};
use crate::raster::Raster;

/// Mean absolute per-sample difference between `image` and its round trip
/// `a -> b -> a`.
pub fn cycle_loss(translator: &Translator, image: &Raster, a: &StyleDomain, b: &StyleDomain) -> Result<f64> {
    let forward = translator.translate(image, a, b)?;
    let back = translator.translate(&forward.image, b, a)?;
    Ok(mean_abs_diff(image, &back.image))
}

pub(crate) fn mean_abs_diff(x: &Raster, y: &Raster) -> f64 {
    let sum: f64 = x
        .samples()
        .iter()
        .zip(y.samples())
        .map(|(p, q)| (*p as f64 - *q as f64).abs())
        .sum();
    sum / x.samples().len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscriminatorLabel {
    Real,
    Fake,
}

impl DiscriminatorLabel {
    pub fn target(&self) -> f64 {
        match self {
            DiscriminatorLabel::Real => 1.0,
            DiscriminatorLabel::Fake => 0.0,
        }
    }
}

/// Least-squares adversarial loss: mean of `(score - target)^2`, with target
/// 1 for real and 0 for fake.
pub fn adversarial_loss(scores: &[f64], labels: &[DiscriminatorLabel]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::InvalidArgument("no discriminator scores".into()));
    }
    let sum: f64 = scores
        .iter()
        .zip(labels)
        .map(|(s, l)| (s - l.target()).powi(2))
        .sum();
    Ok(sum / scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::DiscriminatorLabel::{Fake, Real};
    use super::*;

    #[test]
    fn adversarial_examples() {
        assert_eq!(adversarial_loss(&[1.0, 0.0, 1.0], &[Real, Fake, Real]).unwrap(), 0.0);
        assert_eq!(adversarial_loss(&[0.0], &[Real]).unwrap(), 1.0);
        let l = adversarial_loss(&[0.8, 0.3, 0.9], &[Real, Fake, Real]).unwrap();
        assert!((l - (0.04 + 0.09 + 0.01) / 3.0).abs() < 1e-12);
        assert!(adversarial_loss(&[], &[]).is_err());
        assert!(adversarial_loss(&[0.5], &[Real, Fake]).is_err());
    }

    #[test]
    fn constant_gray_translator_loss() {
        use crate::transfer::ExternalTranslator;
        use std::time::Duration;

        let dir = tempfile::tempdir().unwrap();
        let gray_path = dir.path().join("gray.png");
        let gray = Raster::filled(5, 5, [128.0 / 255.0; 3]).unwrap();
        gray.save(&gray_path).unwrap();
        let t = Translator::External(ExternalTranslator::new(
            format!("cp {} {{output}}", gray_path.display()),
            Duration::from_secs(30),
        ));
        let img = Raster::from_fn(5, 5, |x, y| [(x * 60) as f32 / 255.0, (y * 50) as f32 / 255.0, 0.2]).unwrap();
        let a = StyleDomain::new("blue").unwrap();
        let b = StyleDomain::new("green").unwrap();
        let loss = cycle_loss(&t, &img, &a, &b).unwrap();
        // Oracle: direct pixel scan against the gray level.
        let direct: f64 = img
            .samples()
            .iter()
            .map(|v| (*v as f64 - 128.0 / 255.0).abs())
            .sum::<f64>()
            / 75.0;
        assert!((loss - direct).abs() < 1e-6);
        assert_eq!(cycle_loss(&Translator::Identity, &img, &a, &b).unwrap(), 0.0);
    }
}
