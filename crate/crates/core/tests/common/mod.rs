#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use stylebal::raster::Raster;

/// Default anchor colors, in config domain order.
pub const GREEN: [f64; 3] = [0.15, 0.45, 0.30];
pub const BLUE: [f64; 3] = [0.10, 0.35, 0.55];
pub const DEEPBLUE: [f64; 3] = [0.05, 0.15, 0.35];
pub const WHITE: [f64; 3] = [0.60, 0.65, 0.65];
pub const DOMAIN_COLORS: [[f64; 3]; 4] = [GREEN, BLUE, DEEPBLUE, WHITE];

pub struct FixtureImage {
    pub id: String,
    pub rgb: [f64; 3],
    pub labels: Vec<&'static str>,
}

impl FixtureImage {
    pub fn new(id: impl Into<String>, rgb: [f64; 3], labels: Vec<&'static str>) -> Self {
        FixtureImage {
            id: id.into(),
            rgb,
            labels,
        }
    }
}

pub const WIDTH: u32 = 64;
pub const HEIGHT: u32 = 48;

/// A zero-mean ripple of amplitude `amp` over a flat `rgb` base. The pattern
/// is periodic over the image so the mean stays at `rgb`.
pub fn textured(rgb: [f64; 3], w: u32, h: u32, phase: u32, amp: f64) -> Raster {
    use std::f64::consts::TAU;
    Raster::from_fn(w, h, |x, y| {
        let u = TAU * (x + phase) as f64 / w as f64;
        let v = TAU * y as f64 / h as f64;
        let t = u.sin() * 0.6 + (2.0 * v).cos() * 0.4;
        let s = (u + v).cos();
        [
            (rgb[0] + amp * t) as f32,
            (rgb[1] + amp * (0.7 * t + 0.3 * s)) as f32,
            (rgb[2] + amp * (0.5 * t - 0.5 * s)) as f32,
        ]
    })
    .unwrap()
}

pub fn annotation_xml(id: &str, w: u32, h: u32, labels: &[&str]) -> String {
    let mut s = format!(
        "<annotation>\n  <folder>train</folder>\n  <filename>{id}.png</filename>\n  <size><width>{w}</width><height>{h}</height><depth>3</depth></size>\n"
    );
    for (i, l) in labels.iter().enumerate() {
        let x = (i as u32 * 7) % (w - 10);
        let y = (i as u32 * 5) % (h - 10);
        let _ = writeln!(
            s,
            "  <object><name>{l}</name><difficult>0</difficult><bndbox><xmin>{x}</xmin><ymin>{y}</ymin><xmax>{}</xmax><ymax>{}</ymax></bndbox></object>",
            x + 8,
            y + 9
        );
    }
    s.push_str("</annotation>\n");
    s
}

/// Writes `images/`, `annotations/` and `manifest` under `root`.
pub fn write_dataset(root: &Path, images: &[FixtureImage]) {
    fs::create_dir_all(root.join("images")).unwrap();
    fs::create_dir_all(root.join("annotations")).unwrap();
    let mut manifest = String::new();
    for (i, img) in images.iter().enumerate() {
        textured(img.rgb, WIDTH, HEIGHT, i as u32 % WIDTH, 0.04)
            .save(&root.join(format!("images/{}.png", img.id)))
            .unwrap();
        fs::write(
            root.join(format!("annotations/{}.xml", img.id)),
            annotation_xml(&img.id, WIDTH, HEIGHT, &img.labels),
        )
        .unwrap();
        let _ = writeln!(manifest, "images/{0}.png\tannotations/{0}.xml", img.id);
    }
    fs::write(root.join("manifest"), manifest).unwrap();
}

/// Config with data under `data/`, work under `work/`, export under `export/`.
pub fn write_config(root: &Path, extra: &str) -> PathBuf {
    let path = root.join("stylebal.toml");
    fs::write(
        &path,
        format!(
            "seed = 11\n{extra}\n[paths]\ndataset_root = \"data\"\nmanifest = \"data/manifest\"\nwork_dir = \"work\"\nout_dir = \"export\"\n"
        ),
    )
    .unwrap();
    path
}

/// 200 images with instance counts seaurchin 400, starfish 250, scallop 80,
/// seacucumber 60; 40 images carry minority instances. Scallop and
/// seacucumber co-occur, so they never tie for the minimum count (a tie is a
/// plateau the max/min objective cannot leave one copy at a time). Domains
/// rotate through the four anchors.
pub fn imbalanced_fixture() -> Vec<FixtureImage> {
    let mut out = Vec::new();
    let mut push = |prefix: &str, n: usize, labels: Vec<&'static str>| {
        for i in 0..n {
            let k = out.len();
            out.push(FixtureImage::new(
                format!("{prefix}{i:03}"),
                DOMAIN_COLORS[k % 4],
                labels.clone(),
            ));
        }
    };
    push(
        "a_mixed_",
        30,
        vec!["scallop", "scallop", "seacucumber", "seacucumber", "starfish"],
    );
    push("b_scallop_", 10, vec!["scallop", "scallop"]);
    push("c_common_", 80, vec!["seaurchin", "seaurchin", "seaurchin", "starfish"]);
    push("d_common_", 60, vec!["seaurchin", "seaurchin", "starfish", "starfish"]);
    push("e_common_", 20, vec!["seaurchin", "seaurchin", "starfish"]);
    out
}
