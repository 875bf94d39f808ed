use std::collections::BTreeMap;
use std::fs::{self, File};
use std::process::{Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use super::{apply_haze, color_transfer, StyleTarget};
use crate::domain::StyleDomain;
use crate::error::{Error, Result};
use crate::raster::Raster;

pub type StyleTargets = BTreeMap<StyleDomain, StyleTarget>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranslatorKind {
    Identity,
    StatTransfer,
    StatTransferWithHaze,
    External,
}

impl TranslatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TranslatorKind::Identity => "identity",
            TranslatorKind::StatTransfer => "stat_transfer",
            TranslatorKind::StatTransferWithHaze => "stat_transfer_with_haze",
            TranslatorKind::External => "external",
        }
    }
}

impl std::str::FromStr for TranslatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "identity" => TranslatorKind::Identity,
            "stat_transfer" => TranslatorKind::StatTransfer,
            "stat_transfer_with_haze" => TranslatorKind::StatTransferWithHaze,
            "external" => TranslatorKind::External,
            other => return Err(Error::Config(format!("unknown translator kind `{other}`"))),
        })
    }
}

/// Shells out to a command template with `{input}`, `{output}`,
/// `{source_domain}` and `{target_domain}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalTranslator {
    pub command: String,
    pub timeout: Duration,
}

impl ExternalTranslator {
    pub fn new(command: impl Into<String>, timeout: Duration) -> Self {
        ExternalTranslator {
            command: command.into(),
            timeout,
        }
    }

    fn run(&self, image: &Raster, source: &StyleDomain, target: &StyleDomain) -> Result<Raster> {
        let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
        let input = dir.path().join("input.png");
        let output = dir.path().join("output.png");
        image.save(&input)?;
        let command = self
            .command
            .replace("{input}", &input.to_string_lossy())
            .replace("{output}", &output.to_string_lossy())
            .replace("{source_domain}", source.as_str())
            .replace("{target_domain}", target.as_str());

        let out_log = dir.path().join("stdout.log");
        let err_log = dir.path().join("stderr.log");
        let stdout = File::create(&out_log).map_err(|e| Error::io(&out_log, e))?;
        let stderr = File::create(&err_log).map_err(|e| Error::io(&err_log, e))?;
        let fail = |message: String| {
            let transcript = format!(
                "$ {command}\n[stdout]\n{}\n[stderr]\n{}",
                fs::read_to_string(&out_log).unwrap_or_default().trim_end(),
                fs::read_to_string(&err_log).unwrap_or_default().trim_end()
            );
            Error::Translation { message, transcript }
        };

        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&command)
            .stdin(Stdio::null())
            .stdout(stdout)
            .stderr(stderr)
            .spawn()
            .map_err(|e| fail(format!("cannot spawn: {e}")))?;
        let status = match child
            .wait_timeout(self.timeout)
            .map_err(|e| fail(format!("wait failed: {e}")))?
        {
            Some(status) => status,
            None => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(fail(format!("timed out after {:?}", self.timeout)));
            }
        };
        if !status.success() {
            return Err(fail(format!("command exited with {status}")));
        }
        if !output.exists() {
            return Err(fail("command produced no output image".into()));
        }
        let result = Raster::load(&output).map_err(|e| fail(e.to_string()))?;
        if result.dimensions() != image.dimensions() {
            return Err(fail(format!(
                "output is {}x{}, input was {}x{}",
                result.width(),
                result.height(),
                image.width(),
                image.height()
            )));
        }
        Ok(result)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Translator {
    Identity,
    StatTransfer(StyleTargets),
    StatTransferWithHaze(StyleTargets),
    External(ExternalTranslator),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_id: String,
    pub source_domain: StyleDomain,
    pub target_domain: StyleDomain,
    pub translator: TranslatorKind,
    pub copy_index: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslationResult {
    pub image: Raster,
    pub clipped_fraction: f64,
    pub provenance: Provenance,
}

impl TranslationResult {
    pub fn with_source(mut self, source_id: impl Into<String>, copy_index: u32) -> Self {
        self.provenance.source_id = source_id.into();
        self.provenance.copy_index = copy_index;
        self
    }
}

impl Translator {
    pub fn kind(&self) -> TranslatorKind {
        match self {
            Translator::Identity => TranslatorKind::Identity,
            Translator::StatTransfer(_) => TranslatorKind::StatTransfer,
            Translator::StatTransferWithHaze(_) => TranslatorKind::StatTransferWithHaze,
            Translator::External(_) => TranslatorKind::External,
        }
    }

    /// Translates `image` from `source` to `target`. Output dimensions always
    /// equal input dimensions. The provenance carries an empty source id and
    /// copy 0 until [`TranslationResult::with_source`] fills them in.
    pub fn translate(&self, image: &Raster, source: &StyleDomain, target: &StyleDomain) -> Result<TranslationResult> {
        let (out, clipped_fraction) = match self {
            Translator::Identity => (image.clone(), 0.0),
            Translator::StatTransfer(targets) | Translator::StatTransferWithHaze(targets) => {
                let get = |d: &StyleDomain| {
                    targets
                        .get(d)
                        .ok_or_else(|| Error::MissingStyleTarget(d.to_string()))
                };
                let (from, to) = (get(source)?, get(target)?);
                let t = color_transfer(image, from, to);
                let img = if matches!(self, Translator::StatTransferWithHaze(_)) {
                    apply_haze(&t.image, to.haze.airlight, to.haze.transmission)?
                } else {
                    t.image
                };
                (img, t.clipped_fraction)
            }
            Translator::External(ext) => {
                let img = ext.run(image, source, target)?;
                (img, 0.0)
            }
        };
        debug_assert_eq!(out.dimensions(), image.dimensions());
        Ok(TranslationResult {
            image: out,
            clipped_fraction,
            provenance: Provenance {
                source_id: String::new(),
                source_domain: source.clone(),
                target_domain: target.clone(),
                translator: self.kind(),
                copy_index: 0,
            },
        })
    }
}
