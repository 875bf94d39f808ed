#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use stylebal::raster::Raster;

const COLORS: [[f32; 3]; 4] = [[0.15, 0.45, 0.30], [0.10, 0.35, 0.55], [0.05, 0.15, 0.35], [0.60, 0.65, 0.65]];

/// Writes a small VOC-style dataset under `root/data` and a config at
/// `root/stylebal.toml`. Each entry is (id, labels); domains rotate.
pub fn write_workspace(root: &Path, images: &[(&str, &[&str])], extra: &str) -> PathBuf {
    let data = root.join("data");
    fs::create_dir_all(data.join("images")).unwrap();
    fs::create_dir_all(data.join("annotations")).unwrap();
    let mut manifest = String::new();
    for (i, (id, labels)) in images.iter().enumerate() {
        let c = COLORS[i % 4];
        Raster::from_fn(32, 24, |x, y| {
            let t = ((x * 3 + y * 5 + i as u32) % 7) as f32 * 0.01;
            [c[0] + t, c[1] + t, c[2] + t]
        })
        .unwrap()
        .save(&data.join(format!("images/{id}.png")))
        .unwrap();
        let mut xml = format!("<annotation>\n  <filename>{id}.png</filename>\n  <size><width>32</width><height>24</height><depth>3</depth></size>\n");
        for (k, l) in labels.iter().enumerate() {
            let x = k as u32 % 20;
            let _ = writeln!(
                xml,
                "  <object><name>{l}</name><bndbox><xmin>{x}</xmin><ymin>2</ymin><xmax>{}</xmax><ymax>12</ymax></bndbox></object>",
                x + 6
            );
        }
        xml.push_str("</annotation>\n");
        fs::write(data.join(format!("annotations/{id}.xml")), xml).unwrap();
        let _ = writeln!(manifest, "images/{id}.png\tannotations/{id}.xml");
    }
    fs::write(data.join("manifest"), manifest).unwrap();
    let cfg = root.join("stylebal.toml");
    fs::write(
        &cfg,
        format!("seed = 3\n{extra}\n[paths]\ndataset_root = \"data\"\nmanifest = \"data/manifest\"\nwork_dir = \"work\"\nout_dir = \"export\"\n"),
    )
    .unwrap();
    cfg
}
