//! Minority-class identification and minority-rich image selection.

use serde::{Deserialize, Serialize};

use crate::dataset::{ClassDistribution, ClassLabel, Dataset, ImageRecord, Vocabulary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinoritySpec {
    minority: Vec<ClassLabel>,
    majority: Vec<ClassLabel>,
}

impl MinoritySpec {
    /// Builds a spec from a user-supplied minority list.
    pub fn explicit<S: AsRef<str>>(vocabulary: &Vocabulary, minority: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut picked = vec![false; vocabulary.len()];
        for name in minority {
            let name = name.as_ref().trim().to_lowercase();
            let i = vocabulary
                .index_of(&name)
                .ok_or(Error::UnknownClass { name })?;
            picked[i] = true;
        }
        Self::from_mask(vocabulary, &picked)
    }

    fn from_mask(vocabulary: &Vocabulary, mask: &[bool]) -> Result<Self> {
        let n = mask.iter().filter(|&&m| m).count();
        if n == 0 {
            return Err(Error::MinorityUndefined("no minority classes".into()));
        }
        if n == vocabulary.len() {
            return Err(Error::MinorityUndefined("every class would be a minority".into()));
        }
        let (mut minority, mut majority) = (Vec::new(), Vec::new());
        for (label, &m) in vocabulary.labels().iter().zip(mask) {
            if m {
                minority.push(label.clone());
            } else {
                majority.push(label.clone());
            }
        }
        Ok(MinoritySpec { minority, majority })
    }

    pub fn minority(&self) -> &[ClassLabel] {
        &self.minority
    }

    pub fn majority(&self) -> &[ClassLabel] {
        &self.majority
    }

    pub fn is_minority(&self, label: &ClassLabel) -> bool {
        self.minority.contains(label)
    }
}

/// Classes whose count is below `threshold_fraction` of the largest count.
pub fn identify_minority_classes(dist: &ClassDistribution, threshold_fraction: f64) -> Result<MinoritySpec> {
    if !(threshold_fraction > 0.0 && threshold_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold fraction {threshold_fraction} outside (0, 1]"
        )));
    }
    if let Some((label, _)) = dist.iter().find(|(_, c)| *c == 0) {
        return Err(Error::MinorityUndefined(format!("class `{label}` has no instances")));
    }
    let cutoff = threshold_fraction * dist.max() as f64;
    let mask: Vec<bool> = dist.counts().iter().map(|&c| (c as f64) < cutoff).collect();
    let vocab = Vocabulary::new(dist.labels().iter().map(ClassLabel::as_str))?;
    MinoritySpec::from_mask(&vocab, &mask)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionScore {
    pub image_id: String,
    pub minority_count: u64,
    pub majority_count: u64,
    pub score: f64,
}

/// `minority_count - lambda * majority_count`.
pub fn score_image(record: &ImageRecord, spec: &MinoritySpec, lambda: f64) -> SelectionScore {
    let minority_count = record
        .objects
        .iter()
        .filter(|o| spec.is_minority(&o.label))
        .count() as u64;
    let majority_count = record.objects.len() as u64 - minority_count;
    SelectionScore {
        image_id: record.id.clone(),
        minority_count,
        majority_count,
        score: minority_count as f64 - lambda * majority_count as f64,
    }
}

/// Ids of positively scored images, best first, ties by ascending id.
pub fn select_images(dataset: &Dataset, spec: &MinoritySpec, lambda: f64) -> Result<Vec<String>> {
    Ok(ranked_scores(dataset, spec, lambda)?
        .into_iter()
        .map(|s| s.image_id)
        .collect())
}

/// Positive scores in selection order.
pub fn ranked_scores(dataset: &Dataset, spec: &MinoritySpec, lambda: f64) -> Result<Vec<SelectionScore>> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda {lambda} must be a non-negative number")));
    }
    let mut scores: Vec<SelectionScore> = dataset
        .records()
        .iter()
        .map(|r| score_image(r, spec, lambda))
        .filter(|s| s.minority_count > 0 && s.score > 0.0)
        .collect();
    scores.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.image_id.cmp(&b.image_id))
    });
    Ok(scores)
}
