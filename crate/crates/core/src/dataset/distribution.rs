use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ClassLabel, Dataset, Vocabulary};

/// Per-class instance counts in vocabulary order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDistribution {
    labels: Vec<ClassLabel>,
    counts: Vec<u64>,
}

impl ClassDistribution {
    pub fn zeros(vocabulary: &Vocabulary) -> Self {
        ClassDistribution {
            labels: vocabulary.labels().to_vec(),
            counts: vec![0; vocabulary.len()],
        }
    }

    pub fn from_counts(vocabulary: &Vocabulary, counts: Vec<u64>) -> Self {
        assert_eq!(vocabulary.len(), counts.len(), "one count per class");
        ClassDistribution {
            labels: vocabulary.labels().to_vec(),
            counts,
        }
    }

    pub fn labels(&self) -> &[ClassLabel] {
        &self.labels
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn get(&self, label: &str) -> Option<u64> {
        self.labels
            .iter()
            .position(|l| l.as_str() == label)
            .map(|i| self.counts[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ClassLabel, u64)> {
        self.labels.iter().zip(self.counts.iter().copied())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn max(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub fn min(&self) -> u64 {
        self.counts.iter().copied().min().unwrap_or(0)
    }

    /// `max / min`; `None` while some class has no instances.
    pub fn imbalance_ratio(&self) -> Option<f64> {
        let min = self.min();
        (min > 0).then(|| self.max() as f64 / min as f64)
    }

    /// Adds `copies` times the given per-class counts.
    pub fn add_scaled(&mut self, counts: &[u64], copies: u64) {
        for (c, d) in self.counts.iter_mut().zip(counts) {
            *c += d * copies;
        }
    }
}

impl fmt::Display for ClassDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.labels.iter().map(|l| l.as_str().len()).max().unwrap_or(0);
        for (label, count) in self.iter() {
            writeln!(f, "  {:<width$}  {count:>8}", label.as_str())?;
        }
        match self.imbalance_ratio() {
            Some(r) => write!(f, "  imbalance ratio: {r:.4}"),
            None => write!(f, "  imbalance ratio: undefined"),
        }
    }
}

pub fn class_distribution(dataset: &Dataset) -> ClassDistribution {
    let mut dist = ClassDistribution::zeros(dataset.vocabulary());
    for r in dataset.records() {
        dist.add_scaled(&r.class_counts(dataset.vocabulary()), 1);
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{AnnotatedObject, BoundingBox, ImageRecord};

    fn dataset_with(counts: [usize; 4]) -> Dataset {
        let v = Vocabulary::default();
        let mut records = Vec::new();
        for (ci, &n) in counts.iter().enumerate() {
            for k in 0..n {
                records.push(ImageRecord {
                    id: format!("c{ci}_{k}"),
                    image_path: format!("c{ci}_{k}.jpg").into(),
                    width: 10,
                    height: 10,
                    depth: 3,
                    objects: vec![AnnotatedObject {
                        label: v.labels()[ci].clone(),
                        bbox: BoundingBox::new(0, 0, 5, 5),
                    }],
                    domain: None,
                });
            }
        }
        Dataset::new(records, v).unwrap()
    }

    #[test]
    fn ratio_of_skewed_counts() {
        let ds = dataset_with([400, 250, 80, 60]);
        let d = class_distribution(&ds);
        // Oracle: flat scan over all objects.
        let mut flat = [0u64; 4];
        for r in ds.records() {
            for o in &r.objects {
                flat[ds.vocabulary().index_of(o.label.as_str()).unwrap()] += 1;
            }
        }
        assert_eq!(d.counts(), &flat);
        assert_eq!(d.total(), 790);
        assert!((d.imbalance_ratio().unwrap() - 400.0 / 60.0).abs() < 1e-12);
    }

    #[test]
    fn empty_and_equal() {
        let d = class_distribution(&Dataset::empty(Vocabulary::default()));
        assert_eq!(d.counts(), &[0, 0, 0, 0]);
        assert_eq!(d.imbalance_ratio(), None);
        let d = class_distribution(&dataset_with([50, 50, 50, 50]));
        assert_eq!(d.imbalance_ratio(), Some(1.0));
    }
}
