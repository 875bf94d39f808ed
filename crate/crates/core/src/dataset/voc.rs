//! VOC-style XML annotations.
//!
//! Only the fields this tool consumes are read (`filename`, `size`, optional
//! `domain`, and each `object`'s `name` and `bndbox`); everything else is
//! skipped. Box coordinates are taken verbatim as half-open pixel bounds.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use quick_xml::escape::{escape, resolve_predefined_entity};
use quick_xml::events::Event;
use quick_xml::Reader;

use super::{AnnotatedObject, BoundingBox, ImageRecord, Vocabulary};
use crate::domain::StyleDomain;
use crate::error::{Error, Result};

#[derive(Default)]
struct PendingObject {
    name: Option<String>,
    coords: [Option<i64>; 4],
}

pub fn parse_voc_annotation(xml: &[u8], vocabulary: &Vocabulary) -> Result<ImageRecord> {
    let mut reader = Reader::from_reader(xml);
    let mut buf = Vec::new();
    let mut path: Vec<String> = Vec::new();
    let mut text = String::new();
    let mut text_offset = 0u64;

    let mut filename: Option<String> = None;
    let mut size: [Option<i64>; 3] = [None; 3];
    let mut domain: Option<String> = None;
    let mut objects: Vec<(String, [Option<i64>; 4], u64)> = Vec::new();
    let mut current: Option<PendingObject> = None;
    let mut saw_root = false;

    let xml_err = |offset: u64, message: String| Error::Xml { offset, message };

    loop {
        let event = reader
            .read_event_into(&mut buf)
            .map_err(|e| xml_err(reader.error_position(), e.to_string()))?;
        match event {
            Event::Start(e) => {
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                if path.is_empty() {
                    if saw_root {
                        return Err(xml_err(reader.buffer_position(), "multiple root elements".into()));
                    }
                    saw_root = true;
                }
                if path.len() == 1 && name == "object" {
                    current = Some(PendingObject::default());
                }
                path.push(name);
                text.clear();
                text_offset = reader.buffer_position();
            }
            Event::Empty(e) => {
                if path.is_empty() {
                    saw_root = true;
                }
                let _ = e;
            }
            Event::Text(t) => {
                let s = t
                    .decode()
                    .map_err(|e| xml_err(reader.buffer_position(), e.to_string()))?;
                text.push_str(&s);
            }
            Event::CData(t) => {
                let s = t
                    .decode()
                    .map_err(|e| xml_err(reader.buffer_position(), e.to_string()))?;
                text.push_str(&s);
            }
            Event::GeneralRef(r) => {
                if let Some(ch) = r
                    .resolve_char_ref()
                    .map_err(|e| xml_err(reader.buffer_position(), e.to_string()))?
                {
                    text.push(ch);
                } else {
                    let name = r
                        .decode()
                        .map_err(|e| xml_err(reader.buffer_position(), e.to_string()))?;
                    let resolved = resolve_predefined_entity(&name).ok_or_else(|| {
                        xml_err(reader.buffer_position(), format!("unknown entity &{name};"))
                    })?;
                    text.push_str(resolved);
                }
            }
            Event::End(_) => {
                let value = text.trim().to_string();
                let p: Vec<&str> = path.iter().map(String::as_str).collect();
                match p.as_slice() {
                    [_, "filename"] => filename = Some(value),
                    [_, "domain"] => domain = Some(value),
                    [_, "size", dim @ ("width" | "height" | "depth")] => {
                        let i = match *dim {
                            "width" => 0,
                            "height" => 1,
                            _ => 2,
                        };
                        size[i] = Some(parse_int(&value, text_offset)?);
                    }
                    [_, "object", "name"] => {
                        if let Some(obj) = current.as_mut() {
                            obj.name = Some(value);
                        }
                    }
                    [_, "object", "bndbox", c @ ("xmin" | "ymin" | "xmax" | "ymax")] => {
                        let i = match *c {
                            "xmin" => 0,
                            "ymin" => 1,
                            "xmax" => 2,
                            _ => 3,
                        };
                        if let Some(obj) = current.as_mut() {
                            obj.coords[i] = Some(parse_int(&value, text_offset)?);
                        }
                    }
                    [_, "object"] => {
                        let obj = current.take().unwrap_or_default();
                        let name = obj.name.ok_or_else(|| {
                            xml_err(reader.buffer_position(), "object without <name>".into())
                        })?;
                        objects.push((name, obj.coords, reader.buffer_position()));
                    }
                    _ => {}
                }
                path.pop();
                text.clear();
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }

    let end = xml.len() as u64;
    if !path.is_empty() {
        return Err(xml_err(end, format!("unclosed element <{}>", path.last().unwrap())));
    }
    if !saw_root {
        return Err(xml_err(end, "no root element".into()));
    }
    let filename = filename.ok_or_else(|| xml_err(end, "missing <filename>".into()))?;
    let (width, height) = match size {
        [Some(w), Some(h), _] => (w, h),
        _ => return Err(xml_err(end, "missing <size> width/height".into())),
    };
    let depth = size[2].unwrap_or(3);
    let id = Path::new(&filename)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .ok_or_else(|| xml_err(end, format!("cannot derive record id from filename `{filename}`")))?;

    let geometry = |index: Option<usize>, reason: String| Error::Geometry {
        record_id: id.clone(),
        index,
        reason,
    };
    let to_u32 = |v: i64, what: &str| {
        u32::try_from(v).map_err(|_| geometry(None, format!("{what} {v} out of range")))
    };
    let width = to_u32(width, "width")?;
    let height = to_u32(height, "height")?;
    let depth = to_u32(depth, "depth")?;

    let mut parsed = Vec::with_capacity(objects.len());
    for (i, (name, coords, offset)) in objects.into_iter().enumerate() {
        let label = vocabulary.resolve(&name.to_lowercase())?;
        let [Some(xmin), Some(ymin), Some(xmax), Some(ymax)] = coords else {
            return Err(xml_err(offset, format!("object {i} has an incomplete <bndbox>")));
        };
        parsed.push(AnnotatedObject {
            label,
            bbox: BoundingBox::new(xmin, ymin, xmax, ymax),
        });
    }

    let domain = domain.filter(|d| !d.is_empty()).map(StyleDomain::new).transpose()?;
    let record = ImageRecord {
        id,
        image_path: PathBuf::from(&filename),
        width,
        height,
        depth,
        objects: parsed,
        domain,
    };
    record.validate()?;
    Ok(record)
}

fn parse_int(value: &str, offset: u64) -> Result<i64> {
    if let Ok(v) = value.parse::<i64>() {
        return Ok(v);
    }
    // Some exporters write integral coordinates as "110.0".
    match value.parse::<f64>() {
        Ok(f) if f.fract() == 0.0 && f.abs() < 1e15 => Ok(f as i64),
        _ => Err(Error::Xml {
            offset,
            message: format!("expected an integer, found `{value}`"),
        }),
    }
}

/// Serializes a record with a fixed element order, so equal records always
/// produce identical bytes.
pub fn serialize_voc_annotation(record: &ImageRecord) -> Vec<u8> {
    let mut out = String::new();
    out.push_str("<annotation>\n");
    let _ = writeln!(out, "\t<filename>{}</filename>", escape(record.file_name()));
    out.push_str("\t<size>\n");
    let _ = writeln!(out, "\t\t<width>{}</width>", record.width);
    let _ = writeln!(out, "\t\t<height>{}</height>", record.height);
    let _ = writeln!(out, "\t\t<depth>{}</depth>", record.depth);
    out.push_str("\t</size>\n");
    if let Some(d) = &record.domain {
        let _ = writeln!(out, "\t<domain>{}</domain>", escape(d.as_str()));
    }
    for obj in &record.objects {
        out.push_str(&object_block(obj));
    }
    out.push_str("</annotation>\n");
    out.into_bytes()
}

pub(crate) fn object_block(obj: &AnnotatedObject) -> String {
    let b = &obj.bbox;
    format!(
        "\t<object>\n\t\t<name>{}</name>\n\t\t<bndbox>\n\t\t\t<xmin>{}</xmin>\n\t\t\t<ymin>{}</ymin>\n\t\t\t<xmax>{}</xmax>\n\t\t\t<ymax>{}</ymax>\n\t\t</bndbox>\n\t</object>\n",
        escape(obj.label.as_str()),
        b.xmin,
        b.ymin,
        b.xmax,
        b.ymax
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ClassLabel;

    fn doc(objects: &str) -> String {
        format!(
            "<annotation><folder>x</folder><filename>img_01.jpg</filename>\
             <size><width>800</width><height>600</height><depth>3</depth></size>{objects}</annotation>"
        )
    }

    fn obj(name: &str, b: [i64; 4]) -> String {
        format!(
            "<object><name>{name}</name><pose>Unspecified</pose><difficult>0</difficult>\
             <bndbox><xmin>{}</xmin><ymin>{}</ymin><xmax>{}</xmax><ymax>{}</ymax></bndbox></object>",
            b[0], b[1], b[2], b[3]
        )
    }

    #[test]
    fn parses_single_object() {
        let v = Vocabulary::default();
        let r = parse_voc_annotation(doc(&obj("scallop", [10, 20, 110, 220])).as_bytes(), &v).unwrap();
        assert_eq!(r.id, "img_01");
        assert_eq!((r.width, r.height, r.depth), (800, 600, 3));
        assert_eq!(r.objects.len(), 1);
        assert_eq!(r.objects[0].label, ClassLabel::new("scallop").unwrap());
        assert_eq!(r.objects[0].bbox, BoundingBox::new(10, 20, 110, 220));
    }

    #[test]
    fn degenerate_box_is_geometry_error() {
        let v = Vocabulary::default();
        let err = parse_voc_annotation(doc(&obj("scallop", [110, 20, 110, 220])).as_bytes(), &v)
            .unwrap_err();
        match err {
            Error::Geometry {
                record_id, index, ..
            } => {
                assert_eq!(record_id, "img_01");
                assert_eq!(index, Some(0));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_class_names_offender() {
        let v = Vocabulary::default();
        let err = parse_voc_annotation(doc(&obj("octopus", [1, 1, 5, 5])).as_bytes(), &v).unwrap_err();
        assert!(matches!(err, Error::UnknownClass { ref name } if name == "octopus"));
        assert!(err.to_string().contains("octopus"));
    }

    #[test]
    fn malformed_xml_reports_offset() {
        let v = Vocabulary::default();
        let bad = "<annotation><filename>a.jpg</filename><size><width>5</width></annotation>";
        match parse_voc_annotation(bad.as_bytes(), &v) {
            Err(Error::Xml { offset, .. }) => assert!(offset > 0 && offset <= bad.len() as u64),
            other => panic!("unexpected {other:?}"),
        }
        let truncated = &doc("")[..40];
        assert!(matches!(
            parse_voc_annotation(truncated.as_bytes(), &v),
            Err(Error::Xml { .. })
        ));
    }

    #[test]
    fn accepts_integral_float_coordinates_and_entities() {
        let v = Vocabulary::default();
        let d = "<annotation><filename>a&amp;b.jpg</filename><size><width>50</width><height>40</height></size>\
                 <object><name>Starfish</name><bndbox><xmin>1.0</xmin><ymin>2</ymin><xmax>30</xmax><ymax>39</ymax></bndbox></object></annotation>";
        let r = parse_voc_annotation(d.as_bytes(), &v).unwrap();
        assert_eq!(r.id, "a&b");
        assert_eq!(r.depth, 3);
        assert_eq!(r.objects[0].bbox.xmin, 1);
        assert_eq!(r.objects[0].label.as_str(), "starfish");
        let frac = d.replace("<xmin>1.0</xmin>", "<xmin>1.5</xmin>");
        assert!(matches!(parse_voc_annotation(frac.as_bytes(), &v), Err(Error::Xml { .. })));
    }

    #[test]
    fn zero_objects_serializes_size_only() {
        let v = Vocabulary::default();
        let r = parse_voc_annotation(doc("").as_bytes(), &v).unwrap();
        let out = String::from_utf8(serialize_voc_annotation(&r)).unwrap();
        assert!(out.contains("<size>"));
        assert!(!out.contains("<object>"));
        assert_eq!(parse_voc_annotation(out.as_bytes(), &v).unwrap(), r);
    }

    #[test]
    fn object_blocks_keep_record_order() {
        let v = Vocabulary::default();
        let names = ["starfish", "scallop", "seaurchin"];
        let objs: String = names
            .iter()
            .enumerate()
            .map(|(i, n)| obj(n, [i as i64, 0, 10 + i as i64, 10]))
            .collect();
        let r = parse_voc_annotation(doc(&objs).as_bytes(), &v).unwrap();
        let out = String::from_utf8(serialize_voc_annotation(&r)).unwrap();
        // Positional oracle: locate each object's <name> tag in the output.
        let positions: Vec<usize> = names
            .iter()
            .map(|n| out.find(&format!("<name>{n}</name>")).unwrap())
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(out.matches("<object>").count(), 3);
    }

    #[test]
    fn domain_tag_round_trips() {
        let v = Vocabulary::default();
        let mut r = parse_voc_annotation(doc("").as_bytes(), &v).unwrap();
        r.domain = Some(StyleDomain::new("deepblue").unwrap());
        let back = parse_voc_annotation(&serialize_voc_annotation(&r), &v).unwrap();
        assert_eq!(back, r);
    }
}
