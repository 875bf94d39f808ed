//! Greedy augmentation planning toward class balance.
//!
//! The objective is the imbalance ratio `max count / min count`. Each step
//! adds one style-transferred copy of one selected image into one target
//! domain, choosing the copy that lowers the ratio most.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{ClassDistribution, Dataset, Vocabulary};
use crate::domain::{DomainPool, DomainSet, StyleDomain};
use crate::error::{Error, Result};

/// Exact imbalance ratio. A distribution with an empty class is infinitely
/// imbalanced; an all-zero one counts as balanced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Ratio { max: u64, min: u64 },
    Infinite,
}

impl Objective {
    pub fn of(counts: &[u64]) -> Objective {
        let max = counts.iter().copied().max().unwrap_or(0);
        let min = counts.iter().copied().min().unwrap_or(0);
        match (max, min) {
            (0, _) => Objective::Ratio { max: 1, min: 1 },
            (_, 0) => Objective::Infinite,
            (max, min) => Objective::Ratio { max, min },
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            Objective::Ratio { max, min } => max as f64 / min as f64,
            Objective::Infinite => f64::INFINITY,
        }
    }

    pub fn within(&self, tolerance: f64) -> bool {
        self.value() <= tolerance
    }
}

impl Ord for Objective {
    fn cmp(&self, other: &Self) -> Ordering {
        match (*self, *other) {
            (Objective::Infinite, Objective::Infinite) => Ordering::Equal,
            (Objective::Infinite, _) => Ordering::Greater,
            (_, Objective::Infinite) => Ordering::Less,
            (Objective::Ratio { max: a, min: b }, Objective::Ratio { max: c, min: d }) => {
                (a as u128 * d as u128).cmp(&(c as u128 * b as u128))
            }
        }
    }
}

impl PartialOrd for Objective {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub tolerance: f64,
    pub max_copies_per_pair: u32,
    /// Cap on the total number of copies planned.
    pub max_total_jobs: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            tolerance: 1.25,
            max_copies_per_pair: 3,
            max_total_jobs: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationJob {
    pub image_id: String,
    pub source_domain: StyleDomain,
    pub target_domain: StyleDomain,
    pub copies: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    WithinTolerance,
    NoImprovement,
    JobLimit,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::WithinTolerance => "within_tolerance",
            StopReason::NoImprovement => "no_improvement",
            StopReason::JobLimit => "job_limit",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "within_tolerance" => StopReason::WithinTolerance,
            "no_improvement" => StopReason::NoImprovement,
            "job_limit" => StopReason::JobLimit,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub jobs: Vec<AugmentationJob>,
    pub original: ClassDistribution,
    pub predicted: ClassDistribution,
    pub objective_trace: Vec<f64>,
    pub stop: StopReason,
    pub tolerance: f64,
}

impl AugmentationPlan {
    pub fn total_copies(&self) -> u64 {
        self.jobs.iter().map(|j| j.copies as u64).sum()
    }

    pub fn final_objective(&self) -> Objective {
        Objective::of(self.predicted.counts())
    }

    pub fn is_balanced(&self) -> bool {
        self.final_objective().within(self.tolerance)
    }
}

/// Runs the greedy loop. Candidates are `(selected image, target domain)`
/// pairs with fewer than `max_copies_per_pair` copies. Among the candidates
/// reaching the lowest objective, the lower image id wins, then the target
/// domain with fewer copies so far (spreading copies round-robin), then the
/// earlier domain in the configured order.
pub fn plan_augmentation(
    dataset: &Dataset,
    selected: &[String],
    pools: &DomainPool,
    config: &PlannerConfig,
) -> Result<AugmentationPlan> {
    if !(config.tolerance >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance {} must be at least 1",
            config.tolerance
        )));
    }
    let vocab = dataset.vocabulary();
    let domains = pools.domains();

    struct Candidate {
        id: String,
        source: usize,
        counts: Vec<u64>,
        copies: Vec<u32>,
    }
    let mut candidates: Vec<Candidate> = Vec::with_capacity(selected.len());
    for id in selected {
        let record = dataset
            .get(id)
            .ok_or_else(|| Error::UnknownImage(id.clone()))?;
        let source = pools
            .domain_of(id)
            .and_then(|d| domains.index_of(d))
            .ok_or_else(|| Error::MissingDomain {
                image_id: id.clone(),
            })?;
        candidates.push(Candidate {
            id: id.clone(),
            source,
            counts: record.class_counts(vocab),
            copies: vec![0; domains.len()],
        });
    }
    candidates.sort_by(|a, b| a.id.cmp(&b.id));
    candidates.dedup_by(|a, b| a.id == b.id);

    let original = crate::dataset::class_distribution(dataset);
    let mut counts = original.counts().to_vec();
    let mut current = Objective::of(&counts);
    let mut trace = vec![current.value()];
    let mut steps = 0usize;
    let mut scratch = vec![0u64; counts.len()];

    let stop = loop {
        if current.within(config.tolerance) {
            break StopReason::WithinTolerance;
        }
        if steps >= config.max_total_jobs {
            break StopReason::JobLimit;
        }
        // Every open target of one image yields the same objective, so score
        // images once and pick the domain by the secondary tie-breaks.
        let mut best: Option<(Objective, usize, usize)> = None;
        for (ci, cand) in candidates.iter().enumerate() {
            let Some(di) = (0..domains.len())
                .filter(|&d| d != cand.source && cand.copies[d] < config.max_copies_per_pair)
                .min_by_key(|&d| (cand.copies[d], d))
            else {
                continue;
            };
            for ((s, c), d) in scratch.iter_mut().zip(&counts).zip(&cand.counts) {
                *s = c + d;
            }
            let j = Objective::of(&scratch);
            if best.is_none_or(|(bj, _, _)| j < bj) {
                best = Some((j, ci, di));
            }
        }
        match best {
            Some((j, ci, di)) if j < current => {
                let cand = &mut candidates[ci];
                cand.copies[di] += 1;
                for (c, d) in counts.iter_mut().zip(&cand.counts) {
                    *c += d;
                }
                current = j;
                trace.push(j.value());
                steps += 1;
            }
            _ => break StopReason::NoImprovement,
        }
    };

    let mut jobs = Vec::new();
    let mut predicted = original.clone();
    for cand in &candidates {
        for (di, &n) in cand.copies.iter().enumerate() {
            if n > 0 {
                predicted.add_scaled(&cand.counts, n as u64);
                jobs.push(AugmentationJob {
                    image_id: cand.id.clone(),
                    source_domain: domains.domains()[cand.source].clone(),
                    target_domain: domains.domains()[di].clone(),
                    copies: n,
                });
            }
        }
    }
    debug_assert_eq!(predicted.counts(), counts.as_slice());

    Ok(AugmentationPlan {
        jobs,
        original,
        predicted,
        objective_trace: trace,
        stop,
        tolerance: config.tolerance,
    })
}

/// Provenance written into the plan file header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanHeader {
    pub tolerance: f64,
    pub lambda: f64,
    pub seed: u64,
    pub config_hash: String,
}

const PLAN_MAGIC: &str = "# stylebal-plan/1";

/// Renders the plan file: `# key: value` header lines followed by one
/// `image_id<TAB>source<TAB>target<TAB>copies` line per job.
pub fn format_plan_file(plan: &AugmentationPlan, header: &PlanHeader) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{PLAN_MAGIC}");
    let _ = writeln!(out, "# tolerance: {}", header.tolerance);
    let _ = writeln!(out, "# lambda: {}", header.lambda);
    let _ = writeln!(out, "# seed: {}", header.seed);
    let _ = writeln!(out, "# config_hash: {}", header.config_hash);
    let _ = writeln!(out, "# stop: {}", plan.stop.as_str());
    let _ = writeln!(out, "# balanced: {}", plan.is_balanced());
    let trace: Vec<String> = plan.objective_trace.iter().map(|v| v.to_string()).collect();
    let _ = writeln!(out, "# objective_trace: {}", trace.join(","));
    let _ = writeln!(out, "# original: {}", format_counts(&plan.original));
    let _ = writeln!(out, "# predicted: {}", format_counts(&plan.predicted));
    let _ = writeln!(out, "# total_copies: {}", plan.total_copies());
    for j in &plan.jobs {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            j.image_id, j.source_domain, j.target_domain, j.copies
        );
    }
    out
}

fn format_counts(d: &ClassDistribution) -> String {
    d.iter()
        .map(|(l, c)| format!("{l}={c}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// A plan file read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanFile {
    pub header: PlanHeader,
    pub plan: AugmentationPlan,
}

pub fn parse_plan_file(text: &str, domains: &DomainSet, origin: &Path) -> Result<PlanFile> {
    let err = |line: usize, message: String| Error::Format {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l == PLAN_MAGIC => {}
        _ => return Err(err(1, "not a plan file".into())),
    }
    let mut fields: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut jobs = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# ") {
            if let Some((k, v)) = rest.split_once(": ") {
                fields.insert(k.to_string(), (n + 1, v.to_string()));
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let [id, src, dst, copies] = cols[..] else {
            return Err(err(n + 1, "expected 4 tab-separated columns".into()));
        };
        let source_domain = domains.resolve(src).map_err(|e| err(n + 1, e.to_string()))?;
        let target_domain = domains.resolve(dst).map_err(|e| err(n + 1, e.to_string()))?;
        if source_domain == target_domain {
            return Err(err(n + 1, "target domain equals source domain".into()));
        }
        let copies: u32 = copies
            .parse()
            .ok()
            .filter(|&c| c >= 1)
            .ok_or_else(|| err(n + 1, format!("bad copy count `{copies}`")))?;
        jobs.push(AugmentationJob {
            image_id: id.to_string(),
            source_domain,
            target_domain,
            copies,
        });
    }
    let get = |k: &str| {
        fields
            .get(k)
            .ok_or_else(|| err(0, format!("missing header `{k}`")))
    };
    let num = |k: &str| -> Result<f64> {
        let (line, v) = get(k)?;
        v.parse().map_err(|_| err(*line, format!("bad `{k}`")))
    };
    let (seed_line, seed) = get("seed")?;
    let header = PlanHeader {
        tolerance: num("tolerance")?,
        lambda: num("lambda")?,
        seed: seed.parse().map_err(|_| err(*seed_line, "bad `seed`".into()))?,
        config_hash: get("config_hash")?.1.clone(),
    };
    let (stop_line, stop) = get("stop")?;
    let stop = StopReason::parse(stop).ok_or_else(|| err(*stop_line, "bad `stop`".into()))?;
    let (trace_line, trace) = get("objective_trace")?;
    let objective_trace = trace
        .split(',')
        .map(|v| v.parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| err(*trace_line, "bad `objective_trace`".into()))?;
    let parse_dist = |k: &str| -> Result<ClassDistribution> {
        let (line, v) = get(k)?;
        let mut names = Vec::new();
        let mut counts = Vec::new();
        for part in v.split(',') {
            let (name, c) = part
                .split_once('=')
                .ok_or_else(|| err(*line, format!("bad `{k}`")))?;
            names.push(name.to_string());
            counts.push(c.parse().map_err(|_| err(*line, format!("bad `{k}`")))?);
        }
        let vocab = Vocabulary::new(names)?;
        Ok(ClassDistribution::from_counts(&vocab, counts))
    };
    Ok(PlanFile {
        plan: AugmentationPlan {
            jobs,
            original: parse_dist("original")?,
            predicted: parse_dist("predicted")?,
            objective_trace,
            stop,
            tolerance: header.tolerance,
        },
        header,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{AnnotatedObject, BoundingBox, ClassLabel, ImageRecord};

    fn vocab2() -> Vocabulary {
        Vocabulary::new(["a", "b"]).unwrap()
    }

    fn rec(id: &str, labels: &[&str]) -> ImageRecord {
        ImageRecord {
            id: id.into(),
            image_path: format!("{id}.png").into(),
            width: 64,
            height: 64,
            depth: 3,
            objects: labels
                .iter()
                .map(|l| AnnotatedObject {
                    label: ClassLabel::new(*l).unwrap(),
                    bbox: BoundingBox::new(0, 0, 4, 4),
                })
                .collect(),
            domain: None,
        }
    }

    /// `a:10, b:2` in filler images plus one selectable image.
    fn fixture(selected_labels: &[&str]) -> (Dataset, DomainPool) {
        let mut records = vec![rec("filler_a", &["a"; 10])];
        let extra_b = 2 - selected_labels.iter().filter(|l| **l == "b").count();
        let extra_a = selected_labels.iter().filter(|l| **l == "a").count();
        records[0].objects.truncate(10 - extra_a);
        records.push(rec("filler_b", &vec!["b"; extra_b]));
        records.push(rec("sel", selected_labels));
        let ds = Dataset::new(records, vocab2()).unwrap();
        let domains = DomainSet::default();
        let pool = DomainPool::from_assignments(
            domains.clone(),
            ds.records()
                .iter()
                .map(|r| (r.id.clone(), domains.domains()[0].clone())),
        )
        .unwrap();
        (ds, pool)
    }

    #[test]
    fn objective_ordering_is_exact() {
        let a = Objective::Ratio { max: 10, min: 8 };
        let b = Objective::Ratio { max: 5, min: 4 };
        assert_eq!(a.cmp(&b), Ordering::Equal);
        assert!(Objective::Ratio { max: 10, min: 9 } < a);
        assert!(a < Objective::Infinite);
        assert_eq!(Objective::of(&[0, 0]), Objective::Ratio { max: 1, min: 1 });
        assert_eq!(Objective::of(&[3, 0]), Objective::Infinite);
    }

    #[test]
    fn balanced_dataset_gives_empty_plan() {
        let ds = Dataset::new(vec![rec("x", &["a", "b"])], vocab2()).unwrap();
        let pool = DomainPool::empty(DomainSet::default());
        let plan = plan_augmentation(&ds, &[], &pool, &PlannerConfig::default()).unwrap();
        assert!(plan.jobs.is_empty());
        assert_eq!(plan.predicted, plan.original);
        assert_eq!(plan.stop, StopReason::WithinTolerance);
        assert_eq!(plan.objective_trace, vec![1.0]);
    }

    #[test]
    fn minority_only_image_reaches_tolerance() {
        let (ds, pool) = fixture(&["b"]);
        let plan = plan_augmentation(&ds, &["sel".into()], &pool, &PlannerConfig::default()).unwrap();
        // Hand-rolled recount of the greedy loop: each copy adds one `b`,
        // J = 10 / (2 + k) first reaches <= 1.25 at k = 6.
        let mut b = 2u64;
        let mut expect = vec![5.0];
        while 10.0 / b as f64 > 1.25 {
            b += 1;
            expect.push(10.0 / b as f64);
        }
        assert_eq!(b - 2, 6);
        assert_eq!(plan.total_copies(), 6);
        assert_eq!(plan.objective_trace, expect);
        assert_eq!(plan.stop, StopReason::WithinTolerance);
        assert_eq!(plan.predicted.counts(), &[10, 8]);
        // Round-robin over the three other domains.
        let per_domain: Vec<(&str, u32)> = plan
            .jobs
            .iter()
            .map(|j| (j.target_domain.as_str(), j.copies))
            .collect();
        assert_eq!(per_domain, vec![("blue", 2), ("deepblue", 2), ("white", 2)]);
        assert!(plan.jobs.iter().all(|j| j.source_domain.as_str() == "green"));
    }

    #[test]
    fn mixed_image_stops_at_copy_cap() {
        let (ds, pool) = fixture(&["a", "b"]);
        assert_eq!(crate::dataset::class_distribution(&ds).counts(), &[10, 2]);
        let config = PlannerConfig::default();
        let plan = plan_augmentation(&ds, &["sel".into()], &pool, &config).unwrap();
        // Brute force over k = 0..=9 copies: (10+k)/(2+k) decreases strictly,
        // never reaches 1.25, so every available copy is used.
        let best_k = (0..=9u64)
            .min_by(|&x, &y| ((10 + x) * (2 + y)).cmp(&((10 + y) * (2 + x))))
            .unwrap();
        assert_eq!(plan.total_copies(), best_k);
        assert_eq!(plan.predicted.counts(), &[19, 11]);
        assert_eq!(plan.stop, StopReason::NoImprovement);
        assert!(!plan.is_balanced());
        assert!(plan.objective_trace.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn job_limit_and_missing_domain() {
        let (ds, pool) = fixture(&["b"]);
        let config = PlannerConfig {
            max_total_jobs: 2,
            ..PlannerConfig::default()
        };
        let plan = plan_augmentation(&ds, &["sel".into()], &pool, &config).unwrap();
        assert_eq!(plan.total_copies(), 2);
        assert_eq!(plan.stop, StopReason::JobLimit);

        let empty = DomainPool::empty(DomainSet::default());
        assert!(matches!(
            plan_augmentation(&ds, &["sel".into()], &empty, &PlannerConfig::default()),
            Err(Error::MissingDomain { .. })
        ));
    }

    #[test]
    fn empty_selection_is_an_unreachable_report() {
        let (ds, pool) = fixture(&["b"]);
        let plan = plan_augmentation(&ds, &[], &pool, &PlannerConfig::default()).unwrap();
        assert!(plan.jobs.is_empty());
        assert_eq!(plan.stop, StopReason::NoImprovement);
        assert!(!plan.is_balanced());
        assert_eq!(plan.final_objective().value(), 5.0);
    }

    #[test]
    fn plan_file_round_trip() {
        let (ds, pool) = fixture(&["b"]);
        let plan = plan_augmentation(&ds, &["sel".into()], &pool, &PlannerConfig::default()).unwrap();
        let header = PlanHeader {
            tolerance: 1.25,
            lambda: 1.0,
            seed: 7,
            config_hash: "abc".into(),
        };
        let text = format_plan_file(&plan, &header);
        let back = parse_plan_file(&text, &DomainSet::default(), Path::new("plan")).unwrap();
        assert_eq!(back.header, header);
        assert_eq!(back.plan, plan);
        assert_eq!(format_plan_file(&back.plan, &back.header), text);
    }
}
