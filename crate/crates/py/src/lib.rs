//! Python bindings. Structured results cross the boundary as plain dicts and
//! lists (serialized through `json`), so Python never holds Rust references.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::Serialize;
use stylebal_core as sb;

use sb::config::RunConfig;
use sb::dataset::{class_distribution, load_dataset, split_dataset, Vocabulary};
use sb::domain::{classify_style, DomainAnchor, StyleDomain};
use sb::export::PendingPolicy;
use sb::pipeline;
use sb::qc::{review_summary, DecisionOutcome, ReviewState};
use sb::raster::Raster;
use sb::transfer::DiscriminatorLabel;

create_exception!(stylebal, StylebalError, PyException);

fn err(e: sb::Error) -> PyErr {
    let mut msg = e.to_string();
    let mut src = std::error::Error::source(&e);
    while let Some(s) = src {
        msg.push_str(": ");
        msg.push_str(&s.to_string());
        src = s.source();
    }
    StylebalError::new_err(msg)
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| StylebalError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_state(s: &str) -> PyResult<ReviewState> {
    s.parse().map_err(err)
}

/// A loaded image collection with its class vocabulary.
#[pyclass(module = "stylebal", frozen)]
struct Dataset {
    inner: sb::dataset::Dataset,
}

#[pymethods]
impl Dataset {
    /// Loads `manifest` (image and annotation paths relative to `root`).
    #[staticmethod]
    #[pyo3(signature = (root, manifest, vocabulary=None))]
    fn load(root: PathBuf, manifest: PathBuf, vocabulary: Option<Vec<String>>) -> PyResult<Self> {
        let vocab = match vocabulary {
            Some(v) => Vocabulary::new(v).map_err(err)?,
            None => Vocabulary::default(),
        };
        let inner = load_dataset(&root, &manifest, &vocab).map_err(err)?;
        Ok(Dataset { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn ids(&self) -> Vec<String> {
        self.inner.records().iter().map(|r| r.id.clone()).collect()
    }

    fn vocabulary(&self) -> Vec<String> {
        self.inner.vocabulary().labels().iter().map(|l| l.as_str().to_owned()).collect()
    }

    /// Instance count per class, in vocabulary order.
    fn counts(&self) -> Vec<(String, u64)> {
        class_distribution(&self.inner)
            .iter()
            .map(|(l, c)| (l.as_str().to_owned(), c))
            .collect()
    }

    /// max/min instance count; None when some class has no instances.
    fn imbalance_ratio(&self) -> Option<f64> {
        class_distribution(&self.inner).imbalance_ratio()
    }

    fn record<'py>(&self, py: Python<'py>, id: &str) -> PyResult<Bound<'py, PyAny>> {
        let r = self
            .inner
            .get(id)
            .ok_or_else(|| StylebalError::new_err(format!("unknown image `{id}`")))?;
        to_py(py, r)
    }

    /// Seeded train/test split; returns the two id lists.
    fn split(&self, seed: u64, test_fraction: f64) -> PyResult<(Vec<String>, Vec<String>)> {
        let (train, test) = split_dataset(&self.inner, seed, test_fraction).map_err(err)?;
        let ids = |d: &sb::dataset::Dataset| d.records().iter().map(|r| r.id.clone()).collect();
        Ok((ids(&train), ids(&test)))
    }

    fn __repr__(&self) -> String {
        format!("Dataset({} images)", self.inner.len())
    }
}

/// The staged pipeline driven by one config file.
#[pyclass(module = "stylebal", frozen)]
struct Pipeline {
    cfg: RunConfig,
}

#[pymethods]
impl Pipeline {
    #[new]
    #[pyo3(signature = (config, seed=None))]
    fn new(config: PathBuf, seed: Option<u64>) -> PyResult<Self> {
        let mut cfg = RunConfig::load(&config).map_err(err)?;
        if let Some(seed) = seed {
            cfg.seed = seed;
        }
        Ok(Pipeline { cfg })
    }

    fn config_hash(&self) -> String {
        self.cfg.hash()
    }

    fn ingest<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let s = py.detach(|| pipeline::ingest(&self.cfg)).map_err(err)?;
        to_py(py, &s)
    }

    /// Writes the plan file and returns the plan with the selection behind it.
    fn plan<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let out = py.detach(|| pipeline::plan(&self.cfg)).map_err(err)?;
        let d = to_py(py, &out.plan)?;
        d.set_item("balanced", out.plan.is_balanced())?;
        d.set_item("path", out.path)?;
        d.set_item("minority", out.minority)?;
        d.set_item("selected", out.selected)?;
        Ok(d)
    }

    fn generate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let s = py.detach(|| pipeline::generate(&self.cfg)).map_err(err)?;
        to_py(py, &s)
    }

    /// `pending` is "block", "accept" or "reject".
    #[pyo3(signature = (pending="block"))]
    fn export<'py>(&self, py: Python<'py>, pending: &str) -> PyResult<Bound<'py, PyAny>> {
        let policy: PendingPolicy = pending.parse().map_err(err)?;
        let out = py.detach(|| pipeline::export(&self.cfg, policy)).map_err(err)?;
        let d = to_py(py, &out.report)?;
        d.set_item("entries", out.manifest.entries.len())?;
        Ok(d)
    }

    fn verify<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let r = py.detach(|| pipeline::verify(&self.cfg)).map_err(err)?;
        to_py(py, &r)
    }

    /// Review items with their current state, optionally filtered by state.
    #[pyo3(signature = (state=None))]
    fn queue<'py>(&self, py: Python<'py>, state: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
        let filter = state.map(parse_state).transpose()?;
        let q = pipeline::open_queue(&self.cfg).map_err(err)?;
        let items: Vec<serde_json::Value> = q
            .items()
            .iter()
            .filter_map(|item| {
                let st = q.state(&item.item_id)?;
                if filter.is_some_and(|f| f != st) {
                    return None;
                }
                let mut v = serde_json::to_value(item).ok()?;
                v["state"] = serde_json::Value::String(st.to_string());
                Some(v)
            })
            .collect();
        to_py(py, &items)
    }

    /// Records a review decision; returns False if it was already in place.
    #[pyo3(signature = (item_id, new_state, reviewer, prior_state=None))]
    fn decide(&self, item_id: &str, new_state: &str, reviewer: &str, prior_state: Option<&str>) -> PyResult<bool> {
        let new_state = parse_state(new_state)?;
        let prior = prior_state.map(parse_state).transpose()?;
        let mut q = pipeline::open_queue(&self.cfg).map_err(err)?;
        let outcome = q.record_decision(item_id, new_state, reviewer, prior).map_err(err)?;
        Ok(matches!(outcome, DecisionOutcome::Applied(_)))
    }

    fn progress<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let prepared = pipeline::prepare(&self.cfg).map_err(err)?;
        let q = pipeline::open_queue(&self.cfg).map_err(err)?;
        to_py(py, &review_summary(&q, &prepared.dataset).map_err(err)?)
    }
}

#[pyfunction]
fn rgb_to_opponent(rgb: [f64; 3]) -> [f64; 3] {
    sb::color::rgb_to_opponent(rgb)
}

#[pyfunction]
fn opponent_to_rgb(opp: [f64; 3]) -> [f64; 3] {
    sb::color::opponent_to_rgb(opp)
}

/// Nearest anchor for the image at `path`. `anchors` maps domain name to a
/// linear RGB color in [0, 1].
#[pyfunction]
#[pyo3(signature = (path, anchors, tolerance=0.25))]
fn classify_image(path: PathBuf, anchors: Vec<(String, [f64; 3])>, tolerance: f64) -> PyResult<(String, f64)> {
    let anchors = anchors
        .into_iter()
        .map(|(name, rgb)| DomainAnchor::from_rgb(StyleDomain::new(name)?, rgb, tolerance))
        .collect::<sb::Result<Vec<_>>>()
        .map_err(err)?;
    let img = Raster::load(&path).map_err(err)?;
    let c = classify_style(&img, &anchors).map_err(err)?;
    Ok((c.domain.as_str().to_owned(), c.distance))
}

/// Mean squared error of discriminator scores; `real[i]` marks real samples.
#[pyfunction]
fn adversarial_loss(scores: Vec<f64>, real: Vec<bool>) -> PyResult<f64> {
    let labels: Vec<DiscriminatorLabel> = real
        .into_iter()
        .map(|r| if r { DiscriminatorLabel::Real } else { DiscriminatorLabel::Fake })
        .collect();
    sb::transfer::adversarial_loss(&scores, &labels).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (export_dir, tolerance=1.25))]
fn verify_balance<'py>(py: Python<'py>, export_dir: PathBuf, tolerance: f64) -> PyResult<Bound<'py, PyAny>> {
    let r = sb::export::verify_balance(&export_dir, tolerance).map_err(err)?;
    to_py(py, &r)
}

#[pymodule]
fn stylebal(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("StylebalError", m.py().get_type::<StylebalError>())?;
    m.add_class::<Dataset>()?;
    m.add_class::<Pipeline>()?;
    m.add_function(wrap_pyfunction!(rgb_to_opponent, m)?)?;
    m.add_function(wrap_pyfunction!(opponent_to_rgb, m)?)?;
    m.add_function(wrap_pyfunction!(classify_image, m)?)?;
    m.add_function(wrap_pyfunction!(adversarial_loss, m)?)?;
    m.add_function(wrap_pyfunction!(verify_balance, m)?)?;
    Ok(())
}
