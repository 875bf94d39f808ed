//! Pipeline stages over a work directory. Each stage reads only the inputs
//! named in the config plus the artifacts earlier stages left in `work_dir`
//! (plan file, review items, decision log), so stages can run as separate
//! processes.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::dataset::{class_distribution, load_dataset, ClassDistribution, Dataset};
use crate::domain::{balance_domain_pool, build_domain_pools, DomainPool, StyleDomain};
use crate::error::{Error, Result};
use crate::export::{export_balanced_dataset, verify_balance, BalanceReport, ExportManifest, ExportOptions, PendingPolicy};
use crate::planner::{
    format_plan_file, parse_plan_file, plan_augmentation, AugmentationPlan, Objective, PlanHeader,
};
use crate::qc::{auto_flag, JobRef, ReviewItem, ReviewQueue};
use crate::raster::Raster;
use crate::selection::{identify_minority_classes, select_images, MinoritySpec};
use crate::transfer::{ExternalTranslator, MomentAccumulator, StyleTargets, Translator, TranslatorKind};

pub const PLAN_FILE: &str = "plan";
pub const ITEMS_FILE: &str = "items.jsonl";
pub const LOG_FILE: &str = "decisions.jsonl";
pub const FAILURES_FILE: &str = "failures.jsonl";
pub const GENERATED_DIR: &str = "generated";

/// The dataset with every record assigned a style domain.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: Dataset,
    pub pools: DomainPool,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let vocabulary = cfg.vocabulary()?;
    let mut dataset = load_dataset(&cfg.dataset_root(), &cfg.manifest_path(), &vocabulary)?;
    let pools = build_domain_pools(
        &mut dataset,
        &cfg.domain_set()?,
        &cfg.anchors()?,
        &cfg.overrides()?,
        |r| Raster::load(&r.image_path),
    )?;
    Ok(Prepared { dataset, pools })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub records: usize,
    pub distribution: ClassDistribution,
    pub pool_sizes: Vec<(StyleDomain, usize)>,
    pub config_hash: String,
}

impl fmt::Display for IngestSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "config {}", self.config_hash)?;
        writeln!(f, "{} records", self.records)?;
        writeln!(f, "{}", self.distribution)?;
        writeln!(f, "domain pools:")?;
        for (d, n) in &self.pool_sizes {
            writeln!(f, "  {d:<10} {n}")?;
        }
        Ok(())
    }
}

pub fn ingest(cfg: &RunConfig) -> Result<IngestSummary> {
    let p = prepare(cfg)?;
    Ok(IngestSummary {
        records: p.dataset.len(),
        distribution: class_distribution(&p.dataset),
        pool_sizes: p.pools.iter().map(|(d, ids)| (d.clone(), ids.len())).collect(),
        config_hash: cfg.hash(),
    })
}

#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub plan: AugmentationPlan,
    pub path: PathBuf,
    /// Empty when the dataset was already balanced.
    pub minority: Vec<String>,
    pub selected: Vec<String>,
}

/// Selects minority-rich images, runs the planner, and writes the plan file.
/// An unreachable balance is not an error: the plan is still written and
/// `plan.is_balanced()` reports false.
pub fn plan(cfg: &RunConfig) -> Result<PlanOutcome> {
    let p = prepare(cfg)?;
    let dist = class_distribution(&p.dataset);
    let (minority, selected) = if Objective::of(dist.counts()).within(cfg.planner.tolerance) {
        (Vec::new(), Vec::new())
    } else {
        let spec = if cfg.selection.minority.is_empty() {
            identify_minority_classes(&dist, cfg.selection.threshold_fraction)?
        } else {
            MinoritySpec::explicit(p.dataset.vocabulary(), &cfg.selection.minority)?
        };
        let selected = select_images(&p.dataset, &spec, cfg.selection.lambda)?;
        (spec.minority().iter().map(|l| l.to_string()).collect(), selected)
    };
    let plan = plan_augmentation(&p.dataset, &selected, &p.pools, &cfg.planner)?;
    let header = PlanHeader {
        tolerance: cfg.planner.tolerance,
        lambda: cfg.selection.lambda,
        seed: cfg.seed,
        config_hash: cfg.hash(),
    };
    let work = cfg.work_dir();
    fs::create_dir_all(&work).map_err(|e| Error::io(&work, e))?;
    let path = work.join(PLAN_FILE);
    write_atomic(&path, format_plan_file(&plan, &header).as_bytes())?;
    Ok(PlanOutcome {
        plan,
        path,
        minority,
        selected,
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Per-domain style targets from the domain pools after equal-count
/// balancing. A domain whose balanced pool is empty falls back to its full
/// pool; a domain with no images at all gets no target.
pub fn style_targets(cfg: &RunConfig, prepared: &Prepared) -> Result<StyleTargets> {
    let balanced = balance_domain_pool(&prepared.pools, cfg.seed);
    let mut targets = StyleTargets::new();
    for (domain, ids) in balanced.iter() {
        let ids = if ids.is_empty() { prepared.pools.pool(domain) } else { ids };
        if ids.is_empty() {
            log::warn!("domain `{domain}` has no images; it cannot be a transfer target");
            continue;
        }
        let mut acc = MomentAccumulator::default();
        // Load in parallel, accumulate in pool order so sums are reproducible.
        for chunk in ids.chunks(32) {
            let images: Vec<Raster> = chunk
                .par_iter()
                .map(|id| {
                    let r = prepared
                        .dataset
                        .get(id)
                        .ok_or_else(|| Error::UnknownImage(id.clone()))?;
                    Raster::load(&r.image_path)
                })
                .collect::<Result<_>>()?;
            for img in &images {
                acc.add_image(img);
            }
        }
        let target = acc.finish(domain.clone(), cfg.haze_for(domain.as_str()), cfg.translator.std_floor)?;
        targets.insert(domain.clone(), target);
    }
    Ok(targets)
}

pub fn build_translator(cfg: &RunConfig, prepared: &Prepared) -> Result<Translator> {
    Ok(match cfg.translator.kind {
        TranslatorKind::Identity => Translator::Identity,
        TranslatorKind::StatTransfer => Translator::StatTransfer(style_targets(cfg, prepared)?),
        TranslatorKind::StatTransferWithHaze => Translator::StatTransferWithHaze(style_targets(cfg, prepared)?),
        TranslatorKind::External => Translator::External(ExternalTranslator::new(
            cfg.translator.command.clone(),
            cfg.translator.timeout(),
        )),
    })
}

/// Hash of everything that determines one generated image: the source file
/// bytes, the domains, the copy index, and the translator with its parameters.
pub fn job_key(source_bytes: &[u8], job: &JobRef, translator: &Translator) -> String {
    let mut h = Sha256::new();
    h.update(Sha256::digest(source_bytes));
    h.update(format!("{}\0{}\0{}\0", job.source_domain, job.target_domain, job.copy_index));
    h.update(translator.kind().as_str());
    match translator {
        Translator::Identity => {}
        Translator::StatTransfer(t) | Translator::StatTransferWithHaze(t) => {
            for d in [&job.source_domain, &job.target_domain] {
                if let Some(target) = t.get(d) {
                    h.update(serde_json::to_vec(target).expect("target serializes"));
                }
            }
        }
        Translator::External(ext) => h.update(ext.command.as_bytes()),
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobFailure {
    pub item_id: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub created: usize,
    pub skipped: usize,
    pub failures: Vec<JobFailure>,
}

impl fmt::Display for GenerateSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} generated, {} already present, {} failed",
            self.created,
            self.skipped,
            self.failures.len()
        )?;
        for fail in &self.failures {
            writeln!(f, "  {}: {}", fail.item_id, fail.message.lines().next().unwrap_or(""))?;
        }
        Ok(())
    }
}

pub fn open_queue(cfg: &RunConfig) -> Result<ReviewQueue> {
    let work = cfg.work_dir();
    fs::create_dir_all(&work).map_err(|e| Error::io(&work, e))?;
    ReviewQueue::open(&work.join(ITEMS_FILE), &work.join(LOG_FILE))
}

pub fn read_plan(cfg: &RunConfig) -> Result<AugmentationPlan> {
    let path = cfg.work_dir().join(PLAN_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let file = parse_plan_file(&text, &cfg.domain_set()?, &path)?;
    if file.header.config_hash != cfg.hash() {
        log::warn!("plan file was written under a different config ({})", file.header.config_hash);
    }
    Ok(file.plan)
}

enum JobOutcome {
    Created(ReviewItem),
    Skipped,
    Failed(JobFailure),
}

/// Executes every (job, copy) of the plan, flags the results, and enqueues
/// them for review. Items already in the queue under the same job key are
/// skipped, so an interrupted run can simply be repeated. Translation
/// failures are recorded and do not stop the run.
pub fn generate(cfg: &RunConfig) -> Result<GenerateSummary> {
    let plan = read_plan(cfg)?;
    let prepared = prepare(cfg)?;
    let translator = build_translator(cfg, &prepared)?;
    let mut queue = open_queue(cfg)?;
    let gen_dir = cfg.work_dir().join(GENERATED_DIR);
    fs::create_dir_all(&gen_dir).map_err(|e| Error::io(&gen_dir, e))?;

    let refs: Vec<JobRef> = plan
        .jobs
        .iter()
        .flat_map(|j| {
            (0..j.copies).map(|copy_index| JobRef {
                image_id: j.image_id.clone(),
                source_domain: j.source_domain.clone(),
                target_domain: j.target_domain.clone(),
                copy_index,
            })
        })
        .collect();

    let workers = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.translator.max_concurrent)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut summary = GenerateSummary::default();
    for chunk in refs.chunks(cfg.translator.max_concurrent * 4) {
        let outcomes: Vec<JobOutcome> = workers.install(|| {
            chunk
                .par_iter()
                .map(|job| run_job(cfg, &prepared.dataset, &translator, &queue, &gen_dir, job))
                .collect()
        });
        let mut fresh = Vec::new();
        for o in outcomes {
            match o {
                JobOutcome::Created(item) => fresh.push(item),
                JobOutcome::Skipped => summary.skipped += 1,
                JobOutcome::Failed(f) => summary.failures.push(f),
            }
        }
        summary.created += fresh.len();
        queue.enqueue(fresh)?;
    }

    let failures_path = cfg.work_dir().join(FAILURES_FILE);
    let mut text = String::new();
    for f in &summary.failures {
        text.push_str(&serde_json::to_string(f).expect("failure serializes"));
        text.push('\n');
    }
    write_atomic(&failures_path, text.as_bytes())?;
    Ok(summary)
}

fn run_job(
    cfg: &RunConfig,
    dataset: &Dataset,
    translator: &Translator,
    queue: &ReviewQueue,
    gen_dir: &Path,
    job: &JobRef,
) -> JobOutcome {
    let item_id = job.output_id();
    let fail = |e: Error| {
        JobOutcome::Failed(JobFailure {
            item_id: item_id.clone(),
            message: e.to_string(),
        })
    };
    let Some(record) = dataset.get(&job.image_id) else {
        return fail(Error::UnknownImage(job.image_id.clone()));
    };
    let bytes = match fs::read(&record.image_path) {
        Ok(b) => b,
        Err(e) => return fail(Error::io(&record.image_path, e)),
    };
    let key = job_key(&bytes, job, translator);
    let out_path = gen_dir.join(format!("{item_id}.png"));
    let existing = queue.get(&item_id);
    if let Some(item) = existing {
        if item.job_key != key {
            return fail(Error::InvalidArgument(format!(
                "queue already holds `{item_id}` from different inputs; use a fresh work_dir"
            )));
        }
        if out_path.is_file() {
            return JobOutcome::Skipped;
        }
    }
    let result = (|| -> Result<ReviewItem> {
        let source = Raster::load(&record.image_path)?;
        let out = translator.translate(&source, &job.source_domain, &job.target_domain)?;
        let tmp = gen_dir.join(format!(".{item_id}.tmp.png"));
        out.image.save(&tmp)?;
        fs::rename(&tmp, &out_path).map_err(|e| Error::io(&out_path, e))?;
        let flags = auto_flag(&item_id, &source, &out.image, &cfg.qc)?;
        Ok(ReviewItem {
            item_id: item_id.clone(),
            job: job.clone(),
            job_key: key.clone(),
            translator: translator.kind(),
            source_image_path: record.image_path.clone(),
            generated_image_path: out_path.clone(),
            flags,
        })
    })();
    match result {
        // The file went missing after enqueueing; it has been rewritten.
        Ok(_) if existing.is_some() => JobOutcome::Skipped,
        Ok(item) => JobOutcome::Created(item),
        Err(e) => fail(e),
    }
}

#[derive(Debug, Clone)]
pub struct ExportOutcome {
    pub manifest: ExportManifest,
    pub report: BalanceReport,
}

/// Exports originals plus accepted copies to `out_dir`, then verifies the
/// balance by recounting the written files.
pub fn export(cfg: &RunConfig, pending: PendingPolicy) -> Result<ExportOutcome> {
    let prepared = prepare(cfg)?;
    let queue = open_queue(cfg)?;
    let out_dir = cfg.out_dir();
    let options = ExportOptions {
        pending,
        config_hash: cfg.hash(),
        config_snapshot: cfg.snapshot(),
    };
    let manifest = export_balanced_dataset(&prepared.dataset, &queue, &out_dir, &options)?;
    let report = verify_balance(&out_dir, cfg.planner.tolerance)?;
    Ok(ExportOutcome { manifest, report })
}

pub fn verify(cfg: &RunConfig) -> Result<BalanceReport> {
    verify_balance(&cfg.out_dir(), cfg.planner.tolerance)
}

impl fmt::Display for BalanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.counts)?;
        let verdict = if self.balanced { "balanced" } else { "NOT balanced" };
        writeln!(f, "{verdict} at tolerance {}", self.tolerance)
    }
}
