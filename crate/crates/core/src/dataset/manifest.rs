//! Line-delimited dataset manifests: `image_relpath<TAB>xml_relpath`.
//!
//! Blank lines and lines starting with `#` are ignored, as are any columns
//! past the second, so export manifests can be read back as datasets.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{parse_voc_annotation, Dataset, ImageRecord, Vocabulary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub annotation: PathBuf,
}

pub fn parse_manifest(text: &str, origin: &Path) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        let (Some(image), Some(annotation)) = (cols.next(), cols.next()) else {
            return Err(Error::Format {
                path: origin.to_path_buf(),
                line: n + 1,
                message: "expected `image_path<TAB>annotation_path`".into(),
            });
        };
        if image.is_empty() || annotation.is_empty() {
            return Err(Error::Format {
                path: origin.to_path_buf(),
                line: n + 1,
                message: "empty path".into(),
            });
        }
        entries.push(ManifestEntry {
            image: PathBuf::from(image),
            annotation: PathBuf::from(annotation),
        });
    }
    Ok(entries)
}

/// Loads every manifest entry, resolving paths against `root`. Each record's
/// `image_path` is set to the resolved image file.
pub fn load_dataset(root: &Path, manifest: &Path, vocabulary: &Vocabulary) -> Result<Dataset> {
    let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let entries = parse_manifest(&text, manifest)?;
    let records: Vec<Result<ImageRecord>> = entries
        .par_iter()
        .map(|entry| {
            let xml_path = root.join(&entry.annotation);
            let bytes = fs::read(&xml_path).map_err(|e| Error::io(&xml_path, e))?;
            let mut record =
                parse_voc_annotation(&bytes, vocabulary).map_err(|e| e.in_file(&xml_path))?;
            record.image_path = root.join(&entry.image);
            Ok(record)
        })
        .collect();
    let records = records.into_iter().collect::<Result<Vec<_>>>()?;
    Dataset::new(records, vocabulary.clone()).map_err(|e| e.in_file(manifest))
}

/// Renders manifest lines sorted by record id. `relpaths` maps a record to its
/// (image, annotation) paths relative to the dataset root.
pub fn write_manifest<'a>(
    records: impl IntoIterator<Item = &'a ImageRecord>,
    relpaths: impl Fn(&ImageRecord) -> (String, String),
) -> String {
    let mut rows: Vec<(&str, String)> = records
        .into_iter()
        .map(|r| {
            let (img, xml) = relpaths(r);
            (r.id.as_str(), format!("{img}\t{xml}\n"))
        })
        .collect();
    rows.sort_by(|a, b| a.0.cmp(b.0));
    rows.into_iter().map(|(_, line)| line).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skips_comments_and_extra_columns() {
        let text = "# header: 1\n\nimages/a.jpg\tannotations/a.xml\toriginal\nimages/b.jpg\tannotations/b.xml\n";
        let entries = parse_manifest(text, Path::new("m")).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].annotation, PathBuf::from("annotations/a.xml"));
    }

    #[test]
    fn rejects_single_column() {
        let err = parse_manifest("a.jpg\n", Path::new("m")).unwrap_err();
        assert!(matches!(err, Error::Format { line: 1, .. }));
    }

    #[test]
    fn writes_sorted_by_id() {
        let mk = |id: &str| ImageRecord {
            id: id.into(),
            image_path: format!("{id}.jpg").into(),
            width: 1,
            height: 1,
            depth: 3,
            objects: vec![],
            domain: None,
        };
        let recs = [mk("b"), mk("a"), mk("c")];
        let out = write_manifest(&recs, |r| (format!("images/{}.jpg", r.id), format!("annotations/{}.xml", r.id)));
        assert_eq!(
            out,
            "images/a.jpg\tannotations/a.xml\nimages/b.jpg\tannotations/b.xml\nimages/c.jpg\tannotations/c.xml\n"
        );
    }
}
