//! Declarative run configuration, read from a TOML file.
//!
//! Relative paths resolve against the directory holding the config file. The
//! config hash is taken over the config as written (not the resolved paths),
//! so the same run moved to another directory hashes the same.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{Vocabulary, DEFAULT_VOCABULARY};
use crate::domain::{parse_anchor_config, DomainAnchor, DomainOverrides, DomainSet, DEFAULT_DOMAINS};
use crate::error::{Error, Result};
use crate::planner::PlannerConfig;
use crate::qc::QcThresholds;
use crate::transfer::{HazeParams, TranslatorKind, DEFAULT_STD_FLOOR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub dataset_root: PathBuf,
    /// Dataset manifest, relative to the config file (not to `dataset_root`).
    pub manifest: PathBuf,
    pub work_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Optional anchor file (`domain: r g b tolerance` lines); replaces the
    /// `[domains.anchors]` table when set.
    pub anchors: Option<PathBuf>,
    /// Optional `image_id<TAB>domain` override file.
    pub overrides: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            dataset_root: PathBuf::from("."),
            manifest: PathBuf::from("manifest"),
            work_dir: PathBuf::from("work"),
            out_dir: PathBuf::from("export"),
            anchors: None,
            overrides: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorSpec {
    /// Normalized RGB in [0, 1].
    pub rgb: [f64; 3],
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainsConfig {
    pub names: Vec<String>,
    pub anchors: BTreeMap<String, AnchorSpec>,
    pub haze: BTreeMap<String, HazeParams>,
}

impl Default for DomainsConfig {
    fn default() -> Self {
        let anchor = |rgb| AnchorSpec { rgb, tolerance: 0.25 };
        let haze = |airlight, transmission| HazeParams { airlight, transmission };
        DomainsConfig {
            names: DEFAULT_DOMAINS.iter().map(|s| s.to_string()).collect(),
            anchors: [
                ("green", anchor([0.15, 0.45, 0.30])),
                ("blue", anchor([0.10, 0.35, 0.55])),
                ("deepblue", anchor([0.05, 0.15, 0.35])),
                ("white", anchor([0.60, 0.65, 0.65])),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
            haze: [
                ("green", haze([0.30, 0.60, 0.45], 0.85)),
                ("blue", haze([0.25, 0.55, 0.75], 0.85)),
                ("deepblue", haze([0.10, 0.25, 0.50], 0.70)),
                ("white", haze([0.80, 0.85, 0.85], 0.95)),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub threshold_fraction: f64,
    /// Explicit minority classes; when non-empty, `threshold_fraction` is unused.
    pub minority: Vec<String>,
    pub lambda: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            threshold_fraction: 0.5,
            minority: Vec::new(),
            lambda: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TranslatorConfig {
    pub kind: TranslatorKind,
    /// Command template for the external translator.
    pub command: String,
    pub timeout_secs: u64,
    pub max_concurrent: usize,
    pub std_floor: f64,
}

impl Default for TranslatorConfig {
    fn default() -> Self {
        TranslatorConfig {
            kind: TranslatorKind::StatTransfer,
            command: String::new(),
            timeout_secs: 120,
            max_concurrent: 4,
            std_floor: DEFAULT_STD_FLOOR,
        }
    }
}

impl TranslatorConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1:8750".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub vocabulary: Vec<String>,
    pub paths: PathsConfig,
    pub domains: DomainsConfig,
    pub selection: SelectionConfig,
    pub planner: PlannerConfig,
    pub translator: TranslatorConfig,
    pub qc: QcThresholds,
    pub service: ServiceConfig,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            vocabulary: DEFAULT_VOCABULARY.iter().map(|s| s.to_string()).collect(),
            paths: PathsConfig::default(),
            domains: DomainsConfig::default(),
            selection: SelectionConfig::default(),
            planner: PlannerConfig::default(),
            translator: TranslatorConfig::default(),
            qc: QcThresholds::default(),
            service: ServiceConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| e.in_file(path))
    }

    /// Parses TOML text; relative paths will resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_base_dir(mut self, base_dir: impl Into<PathBuf>) -> Self {
        self.base_dir = base_dir.into();
        self
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.vocabulary()?;
        let domains = self.domain_set()?;
        for name in self.domains.anchors.keys().chain(self.domains.haze.keys()) {
            domains.resolve(name).map_err(|e| Error::Config(e.to_string()))?;
        }
        for h in self.domains.haze.values() {
            h.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        if !(self.planner.tolerance >= 1.0) {
            return Err(Error::Config(format!("planner.tolerance {} must be at least 1", self.planner.tolerance)));
        }
        if self.translator.max_concurrent == 0 {
            return Err(Error::Config("translator.max_concurrent must be at least 1".into()));
        }
        if self.translator.kind == TranslatorKind::External && self.translator.command.trim().is_empty() {
            return Err(Error::Config("translator.command is required for the external translator".into()));
        }
        self.qc.validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn dataset_root(&self) -> PathBuf {
        self.resolve(&self.paths.dataset_root)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.resolve(&self.paths.manifest)
    }

    pub fn work_dir(&self) -> PathBuf {
        self.resolve(&self.paths.work_dir)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.paths.out_dir)
    }

    pub fn vocabulary(&self) -> Result<Vocabulary> {
        Vocabulary::new(&self.vocabulary).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn domain_set(&self) -> Result<DomainSet> {
        DomainSet::new(&self.domains.names).map_err(|e| Error::Config(e.to_string()))
    }

    /// Anchors in domain order, from the anchor file when one is configured.
    pub fn anchors(&self) -> Result<Vec<DomainAnchor>> {
        let domains = self.domain_set()?;
        if let Some(p) = &self.paths.anchors {
            let path = self.resolve(p);
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            return parse_anchor_config(&text, &domains, &path);
        }
        domains
            .domains()
            .iter()
            .filter_map(|d| self.domains.anchors.get(d.as_str()).map(|a| (d, a)))
            .map(|(d, a)| DomainAnchor::from_rgb(d.clone(), a.rgb, a.tolerance))
            .collect()
    }

    pub fn overrides(&self) -> Result<DomainOverrides> {
        match &self.paths.overrides {
            None => Ok(DomainOverrides::default()),
            Some(p) => {
                let path = self.resolve(p);
                let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                DomainOverrides::parse(&text, &self.domain_set()?, &path)
            }
        }
    }

    pub fn haze_for(&self, domain: &str) -> HazeParams {
        self.domains.haze.get(domain).copied().unwrap_or_default()
    }

    /// Hex SHA-256 of the canonical JSON form of the config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    /// Flattened `section.key -> value` pairs for provenance headers.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        flatten("", &serde_json::to_value(self).expect("config serializes"), &mut out);
        out
    }
}

fn flatten(prefix: &str, value: &serde_json::Value, out: &mut BTreeMap<String, String>) {
    match value {
        serde_json::Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        serde_json::Value::String(s) => {
            out.insert(prefix.to_string(), s.clone());
        }
        serde_json::Value::Null => {
            out.insert(prefix.to_string(), "none".into());
        }
        other => {
            out.insert(prefix.to_string(), other.to_string());
        }
    }
}
