//! Balanced dataset export: originals plus accepted augmentations, written
//! atomically with a provenance manifest, and read-only balance verification.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    parse_voc_annotation, serialize_voc_annotation, ClassDistribution, Dataset, ImageRecord, Vocabulary,
};
use crate::domain::StyleDomain;
use crate::error::{Error, Result};
use crate::qc::{ReviewItem, ReviewQueue, ReviewState};
use crate::transfer::TranslatorKind;

pub const MANIFEST_NAME: &str = "manifest";
pub const IMAGES_DIR: &str = "images";
pub const ANNOTATIONS_DIR: &str = "annotations";
const MANIFEST_MAGIC: &str = "# stylebal-manifest/1";

/// What to do with items nobody has reviewed yet.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PendingPolicy {
    #[default]
    Block,
    Accept,
    Reject,
}

impl std::str::FromStr for PendingPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "block" => Ok(PendingPolicy::Block),
            "accept" => Ok(PendingPolicy::Accept),
            "reject" => Ok(PendingPolicy::Reject),
            other => Err(Error::InvalidArgument(format!("unknown pending policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExportOptions {
    pub pending: PendingPolicy,
    pub config_hash: String,
    pub config_snapshot: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedProvenance {
    pub source_id: String,
    pub source_domain: StyleDomain,
    pub target_domain: StyleDomain,
    pub translator: TranslatorKind,
    pub copy_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportEntry {
    /// Relative to the export root.
    pub image_path: String,
    pub annotation_path: String,
    /// `None` for original images.
    pub provenance: Option<AugmentedProvenance>,
}

impl ExportEntry {
    pub fn is_augmented(&self) -> bool {
        self.provenance.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportManifest {
    pub entries: Vec<ExportEntry>,
    pub final_distribution: ClassDistribution,
    pub config_hash: String,
    pub config_snapshot: BTreeMap<String, String>,
}

impl ExportManifest {
    pub fn vocabulary(&self) -> Result<Vocabulary> {
        Vocabulary::new(self.final_distribution.labels().iter().map(|l| l.as_str()))
    }

    pub fn format(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MANIFEST_MAGIC}");
        let _ = writeln!(out, "# config_hash: {}", self.config_hash);
        let names: Vec<&str> = self.final_distribution.labels().iter().map(|l| l.as_str()).collect();
        let _ = writeln!(out, "# vocabulary: {}", names.join(","));
        for (label, count) in self.final_distribution.iter() {
            let _ = writeln!(out, "# final.{label}: {count}");
        }
        match self.final_distribution.imbalance_ratio() {
            Some(r) => {
                let _ = writeln!(out, "# final_ratio: {r}");
            }
            None => {
                let _ = writeln!(out, "# final_ratio: undefined");
            }
        }
        for (k, v) in &self.config_snapshot {
            let _ = writeln!(out, "# config.{k}: {}", v.replace('\n', " "));
        }
        let _ = writeln!(out, "# entries: {}", self.entries.len());
        let _ = writeln!(
            out,
            "# columns: image_path\tannotation_path\torigin\tsource_id\tsource_domain\ttarget_domain\ttranslator\tcopy"
        );
        for e in &self.entries {
            match &e.provenance {
                None => {
                    let _ = writeln!(out, "{}\t{}\toriginal\t-\t-\t-\t-\t-", e.image_path, e.annotation_path);
                }
                Some(p) => {
                    let _ = writeln!(
                        out,
                        "{}\t{}\taugmented\t{}\t{}\t{}\t{}\t{}",
                        e.image_path,
                        e.annotation_path,
                        p.source_id,
                        p.source_domain,
                        p.target_domain,
                        p.translator.as_str(),
                        p.copy_index
                    );
                }
            }
        }
        out
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Format {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l == MANIFEST_MAGIC => {}
            _ => return Err(err(1, "not an export manifest".into())),
        }
        let mut header: Vec<(usize, String, String)> = Vec::new();
        let mut entries = Vec::new();
        for (n, line) in lines {
            if let Some(rest) = line.strip_prefix("# ") {
                if let Some((k, v)) = rest.split_once(": ") {
                    header.push((n + 1, k.to_string(), v.to_string()));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let [image, annotation, origin_kind, source_id, src, dst, kind, copy] = cols[..] else {
                return Err(err(n + 1, format!("expected 8 columns, found {}", cols.len())));
            };
            let provenance = match origin_kind {
                "original" => None,
                "augmented" => Some(AugmentedProvenance {
                    source_id: source_id.to_string(),
                    source_domain: StyleDomain::new(src).map_err(|e| err(n + 1, e.to_string()))?,
                    target_domain: StyleDomain::new(dst).map_err(|e| err(n + 1, e.to_string()))?,
                    translator: kind.parse().map_err(|e: Error| err(n + 1, e.to_string()))?,
                    copy_index: copy.parse().map_err(|_| err(n + 1, format!("bad copy `{copy}`")))?,
                }),
                other => return Err(err(n + 1, format!("unknown origin `{other}`"))),
            };
            entries.push(ExportEntry {
                image_path: image.to_string(),
                annotation_path: annotation.to_string(),
                provenance,
            });
        }
        let find = |key: &str| header.iter().find(|(_, k, _)| k == key);
        let (_, _, vocab) = find("vocabulary").ok_or_else(|| err(0, "missing vocabulary".into()))?;
        let vocabulary = Vocabulary::new(vocab.split(','))?;
        let mut counts = Vec::with_capacity(vocabulary.len());
        for label in vocabulary.labels() {
            let (line, _, v) = find(&format!("final.{label}"))
                .ok_or_else(|| err(0, format!("missing final count for `{label}`")))?;
            counts.push(v.parse().map_err(|_| err(*line, "bad count".into()))?);
        }
        let config_hash = find("config_hash").map(|(_, _, v)| v.clone()).unwrap_or_default();
        let config_snapshot = header
            .iter()
            .filter_map(|(_, k, v)| k.strip_prefix("config.").map(|k| (k.to_string(), v.clone())))
            .collect();
        Ok(ExportManifest {
            entries,
            final_distribution: ClassDistribution::from_counts(&vocabulary, counts),
            config_hash,
            config_snapshot,
        })
    }
}

struct PlannedWrite {
    record: ImageRecord,
    source_file: PathBuf,
    entry: ExportEntry,
}

fn extension_of(path: &Path) -> String {
    path.extension()
        .map(|e| e.to_string_lossy().to_lowercase())
        .unwrap_or_else(|| "png".into())
}

fn ensure_empty_or_absent(out_dir: &Path) -> Result<()> {
    match fs::read_dir(out_dir) {
        Ok(mut it) => {
            if it.next().is_some() {
                return Err(Error::OutputNotEmpty(out_dir.to_path_buf()));
            }
            Ok(())
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        Err(e) => Err(Error::io(out_dir, e)),
    }
}

/// Which review items make it into the export under `policy`.
pub fn exported_items(queue: &ReviewQueue, policy: PendingPolicy) -> Result<Vec<&ReviewItem>> {
    let pending = queue.counts().pending;
    if pending > 0 && policy == PendingPolicy::Block {
        return Err(Error::PendingItems { count: pending });
    }
    Ok(queue
        .items()
        .iter()
        .filter(|i| match queue.state(&i.item_id) {
            Some(ReviewState::Accepted) => true,
            Some(ReviewState::Pending) => policy == PendingPolicy::Accept,
            _ => false,
        })
        .collect())
}

/// Writes originals and accepted copies into `out_dir`. The export is staged
/// next to `out_dir` and renamed into place only after every annotation has
/// been re-parsed against its image and the classes recounted.
pub fn export_balanced_dataset(
    dataset: &Dataset,
    queue: &ReviewQueue,
    out_dir: &Path,
    options: &ExportOptions,
) -> Result<ExportManifest> {
    ensure_empty_or_absent(out_dir)?;
    let items = exported_items(queue, options.pending)?;

    let mut writes = Vec::with_capacity(dataset.len() + items.len());
    let mut ids: HashSet<String> = HashSet::new();
    for r in dataset.records() {
        let ext = extension_of(&r.image_path);
        let mut record = r.clone();
        record.image_path = PathBuf::from(format!("{}.{ext}", r.id));
        ids.insert(r.id.clone());
        writes.push(PlannedWrite {
            entry: ExportEntry {
                image_path: format!("{IMAGES_DIR}/{}.{ext}", r.id),
                annotation_path: format!("{ANNOTATIONS_DIR}/{}.xml", r.id),
                provenance: None,
            },
            source_file: r.image_path.clone(),
            record,
        });
    }
    for item in items {
        let source = dataset
            .get(&item.job.image_id)
            .ok_or_else(|| Error::UnknownImage(item.job.image_id.clone()))?;
        if !item.generated_image_path.is_file() {
            return Err(Error::MissingGenerated {
                item_id: item.item_id.clone(),
                path: item.generated_image_path.clone(),
            });
        }
        let id = item.job.output_id();
        if !ids.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        let ext = extension_of(&item.generated_image_path);
        let mut record = source.clone();
        record.id = id.clone();
        record.image_path = PathBuf::from(format!("{id}.{ext}"));
        record.domain = Some(item.job.target_domain.clone());
        writes.push(PlannedWrite {
            entry: ExportEntry {
                image_path: format!("{IMAGES_DIR}/{id}.{ext}"),
                annotation_path: format!("{ANNOTATIONS_DIR}/{id}.xml"),
                provenance: Some(AugmentedProvenance {
                    source_id: source.id.clone(),
                    source_domain: item.job.source_domain.clone(),
                    target_domain: item.job.target_domain.clone(),
                    translator: item.translator,
                    copy_index: item.job.copy_index,
                }),
            },
            source_file: item.generated_image_path.clone(),
            record,
        });
    }
    writes.sort_by(|a, b| a.entry.image_path.cmp(&b.entry.image_path));

    let parent = match out_dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
    let staging = tempfile::Builder::new()
        .prefix(".stylebal-staging-")
        .tempdir_in(&parent)
        .map_err(|e| Error::io(&parent, e))?;
    let root = staging.path();
    for d in [IMAGES_DIR, ANNOTATIONS_DIR] {
        fs::create_dir_all(root.join(d)).map_err(|e| Error::io(root.join(d), e))?;
    }

    writes.par_iter().try_for_each(|w| -> Result<()> {
        let img = root.join(&w.entry.image_path);
        fs::copy(&w.source_file, &img).map_err(|e| Error::io(&w.source_file, e))?;
        let xml = root.join(&w.entry.annotation_path);
        fs::write(&xml, serialize_voc_annotation(&w.record)).map_err(|e| Error::io(&xml, e))
    })?;

    let entries: Vec<ExportEntry> = writes.into_iter().map(|w| w.entry).collect();
    let final_distribution = recount(root, &entries, dataset.vocabulary())?;
    let manifest = ExportManifest {
        entries,
        final_distribution,
        config_hash: options.config_hash.clone(),
        config_snapshot: options.config_snapshot.clone(),
    };
    let manifest_path = root.join(MANIFEST_NAME);
    fs::write(&manifest_path, manifest.format()).map_err(|e| Error::io(&manifest_path, e))?;

    if out_dir.exists() {
        fs::remove_dir(out_dir).map_err(|e| Error::io(out_dir, e))?;
    }
    let staged = staging.keep();
    fs::rename(&staged, out_dir).map_err(|e| {
        let _ = fs::remove_dir_all(&staged);
        Error::io(out_dir, e)
    })?;
    Ok(manifest)
}

/// Re-parses every entry's annotation, checks it against the image file's
/// real dimensions, and recounts classes. Collects all offenders.
fn recount(root: &Path, entries: &[ExportEntry], vocabulary: &Vocabulary) -> Result<ClassDistribution> {
    let results: Vec<std::result::Result<Vec<u64>, String>> = entries
        .par_iter()
        .map(|e| {
            let xml_path = root.join(&e.annotation_path);
            let img_path = root.join(&e.image_path);
            let bytes = fs::read(&xml_path).map_err(|err| format!("{}: {err}", e.annotation_path))?;
            let record =
                parse_voc_annotation(&bytes, vocabulary).map_err(|err| format!("{}: {err}", e.annotation_path))?;
            let (w, h) = image::image_dimensions(&img_path).map_err(|err| format!("{}: {err}", e.image_path))?;
            if (w, h) != (record.width, record.height) {
                return Err(format!(
                    "{}: annotation says {}x{}, image is {w}x{h}",
                    e.annotation_path, record.width, record.height
                ));
            }
            Ok(record.class_counts(vocabulary))
        })
        .collect();
    let mut dist = ClassDistribution::zeros(vocabulary);
    let mut offenders = Vec::new();
    for r in results {
        match r {
            Ok(c) => dist.add_scaled(&c, 1),
            Err(o) => offenders.push(o),
        }
    }
    if !offenders.is_empty() {
        return Err(Error::Integrity { offenders });
    }
    Ok(dist)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub balanced: bool,
    pub ratio: Option<f64>,
    pub counts: ClassDistribution,
    pub tolerance: f64,
}

/// Recounts an export from the files on disk and compares the imbalance
/// ratio with `tolerance`. Never writes.
pub fn verify_balance(export_dir: &Path, tolerance: f64) -> Result<BalanceReport> {
    let manifest_path = export_dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest = ExportManifest::parse(&text, &manifest_path)?;
    let vocabulary = manifest.vocabulary()?;

    let mut offenders = Vec::new();
    let listed: BTreeSet<String> = manifest
        .entries
        .iter()
        .flat_map(|e| [e.image_path.clone(), e.annotation_path.clone()])
        .collect();
    for path in &listed {
        if !export_dir.join(path).is_file() {
            offenders.push(format!("{path}: listed in manifest but missing"));
        }
    }
    for dir in [IMAGES_DIR, ANNOTATIONS_DIR] {
        if let Ok(it) = fs::read_dir(export_dir.join(dir)) {
            for f in it.flatten() {
                let rel = format!("{dir}/{}", f.file_name().to_string_lossy());
                if !listed.contains(&rel) {
                    offenders.push(format!("{rel}: present but not in manifest"));
                }
            }
        }
    }
    if !offenders.is_empty() {
        return Err(Error::Integrity { offenders });
    }
    let counts = recount(export_dir, &manifest.entries, &vocabulary)?;
    if counts != manifest.final_distribution {
        return Err(Error::Integrity {
            offenders: vec![format!(
                "manifest counts {:?} differ from recount {:?}",
                manifest.final_distribution.counts(),
                counts.counts()
            )],
        });
    }
    let ratio = counts.imbalance_ratio();
    Ok(BalanceReport {
        balanced: ratio.is_some_and(|r| r <= tolerance),
        ratio,
        counts,
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_text_round_trip() {
        let vocab = Vocabulary::new(["a", "b"]).unwrap();
        let m = ExportManifest {
            entries: vec![
                ExportEntry {
                    image_path: "images/x.png".into(),
                    annotation_path: "annotations/x.xml".into(),
                    provenance: None,
                },
                ExportEntry {
                    image_path: "images/x__green__0.png".into(),
                    annotation_path: "annotations/x__green__0.xml".into(),
                    provenance: Some(AugmentedProvenance {
                        source_id: "x".into(),
                        source_domain: StyleDomain::new("blue").unwrap(),
                        target_domain: StyleDomain::new("green").unwrap(),
                        translator: TranslatorKind::StatTransfer,
                        copy_index: 0,
                    }),
                },
            ],
            final_distribution: ClassDistribution::from_counts(&vocab, vec![4, 3]),
            config_hash: "h".into(),
            config_snapshot: [("seed".to_string(), "7".to_string())].into_iter().collect(),
        };
        let text = m.format();
        assert_eq!(ExportManifest::parse(&text, Path::new("manifest")).unwrap(), m);
        // The manifest doubles as a dataset manifest.
        let ds_entries = crate::dataset::parse_manifest(&text, Path::new("manifest")).unwrap();
        assert_eq!(ds_entries.len(), 2);
    }

    #[test]
    fn refuses_non_empty_output() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("junk"), b"x").unwrap();
        let ds = Dataset::empty(Vocabulary::default());
        let q = ReviewQueue::in_memory();
        assert!(matches!(
            export_balanced_dataset(&ds, &q, dir.path(), &ExportOptions::default()),
            Err(Error::OutputNotEmpty(_))
        ));
    }
}
