//! Box-annotated detection datasets: records, vocabularies, parsing and
//! splitting.

mod distribution;
mod manifest;
mod split;
mod voc;

use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::domain::StyleDomain;
use crate::error::{Error, Result};

pub use distribution::{class_distribution, ClassDistribution};
pub use manifest::{load_dataset, parse_manifest, write_manifest, ManifestEntry};
pub use split::{split_dataset, test_size};
pub use voc::{parse_voc_annotation, serialize_voc_annotation};

pub const DEFAULT_VOCABULARY: [&str; 4] = ["seacucumber", "seaurchin", "scallop", "starfish"];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassLabel(String);

impl ClassLabel {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::InvalidArgument("empty class label".into()));
        }
        Ok(ClassLabel(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Ordered, duplicate-free list of the classes a dataset may use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary(Vec<ClassLabel>);

impl Vocabulary {
    pub fn new<S: AsRef<str>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut labels: Vec<ClassLabel> = Vec::new();
        for n in names {
            let label = ClassLabel::new(n.as_ref().trim().to_lowercase())?;
            if labels.contains(&label) {
                return Err(Error::InvalidArgument(format!(
                    "class `{label}` listed twice in vocabulary"
                )));
            }
            labels.push(label);
        }
        if labels.is_empty() {
            return Err(Error::InvalidArgument("empty vocabulary".into()));
        }
        Ok(Vocabulary(labels))
    }

    pub fn labels(&self) -> &[ClassLabel] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|l| l.as_str() == name)
    }

    /// Resolves a raw name to the vocabulary label, failing on unknown names.
    pub fn resolve(&self, name: &str) -> Result<ClassLabel> {
        self.index_of(name)
            .map(|i| self.0[i].clone())
            .ok_or_else(|| Error::UnknownClass {
                name: name.to_string(),
            })
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary::new(DEFAULT_VOCABULARY).expect("default vocabulary is valid")
    }
}

/// Pixel box, half-open: covers columns `xmin..xmax` and rows `ymin..ymax`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub xmin: i64,
    pub ymin: i64,
    pub xmax: i64,
    pub ymax: i64,
}

impl BoundingBox {
    pub fn new(xmin: i64, ymin: i64, xmax: i64, ymax: i64) -> Self {
        BoundingBox {
            xmin,
            ymin,
            xmax,
            ymax,
        }
    }

    pub fn area(&self) -> i64 {
        (self.xmax - self.xmin) * (self.ymax - self.ymin)
    }

    /// Checks the box against the owning image size.
    pub fn check(&self, width: u32, height: u32) -> std::result::Result<(), String> {
        if self.xmin >= self.xmax {
            return Err(format!("xmin {} >= xmax {}", self.xmin, self.xmax));
        }
        if self.ymin >= self.ymax {
            return Err(format!("ymin {} >= ymax {}", self.ymin, self.ymax));
        }
        if self.xmin < 0 || self.ymin < 0 {
            return Err(format!("negative origin ({}, {})", self.xmin, self.ymin));
        }
        if self.xmax > width as i64 || self.ymax > height as i64 {
            return Err(format!(
                "extent ({}, {}) outside image {width}x{height}",
                self.xmax, self.ymax
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedObject {
    pub label: ClassLabel,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub image_path: PathBuf,
    pub width: u32,
    pub height: u32,
    pub depth: u32,
    pub objects: Vec<AnnotatedObject>,
    pub domain: Option<StyleDomain>,
}

impl ImageRecord {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::InvalidArgument("record with empty id".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Geometry {
                record_id: self.id.clone(),
                index: None,
                reason: format!("image size {}x{}", self.width, self.height),
            });
        }
        for (i, obj) in self.objects.iter().enumerate() {
            obj.bbox
                .check(self.width, self.height)
                .map_err(|reason| Error::Geometry {
                    record_id: self.id.clone(),
                    index: Some(i),
                    reason,
                })?;
        }
        Ok(())
    }

    /// Per-class instance counts, indexed like `vocab`. Labels outside the
    /// vocabulary are ignored.
    pub fn class_counts(&self, vocab: &Vocabulary) -> Vec<u64> {
        let mut counts = vec![0u64; vocab.len()];
        for obj in &self.objects {
            if let Some(i) = vocab.index_of(obj.label.as_str()) {
                counts[i] += 1;
            }
        }
        counts
    }

    /// File name written into annotations.
    pub fn file_name(&self) -> String {
        self.image_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.id.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    records: Vec<ImageRecord>,
    vocabulary: Vocabulary,
}

impl Dataset {
    pub fn new(records: Vec<ImageRecord>, vocabulary: Vocabulary) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId(r.id.clone()));
            }
            r.validate()?;
            for obj in &r.objects {
                vocabulary.resolve(obj.label.as_str())?;
            }
        }
        Ok(Dataset {
            records,
            vocabulary,
        })
    }

    pub fn empty(vocabulary: Vocabulary) -> Self {
        Dataset {
            records: Vec::new(),
            vocabulary,
        }
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn records_mut(&mut self) -> &mut [ImageRecord] {
        &mut self.records
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ImageRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn into_records(self) -> Vec<ImageRecord> {
        self.records
    }
}
