//! Color-style domains: classification of images by mean color and
//! equal-size per-domain pools.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::color;
use crate::dataset::{Dataset, ImageRecord};
use crate::error::{Error, Result};
use crate::raster::Raster;

pub const DEFAULT_DOMAINS: [&str; 4] = ["green", "blue", "deepblue", "white"];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StyleDomain(String);

impl StyleDomain {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into().trim().to_lowercase();
        if name.is_empty() || name.chars().any(|c| c.is_whitespace() || c == ':') {
            return Err(Error::InvalidArgument(format!("invalid domain name `{name}`")));
        }
        Ok(StyleDomain(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StyleDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The fixed, ordered set of domains for one run. Order drives tie-breaks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainSet(Vec<StyleDomain>);

impl DomainSet {
    pub fn new<S: AsRef<str>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut out: Vec<StyleDomain> = Vec::new();
        for n in names {
            let d = StyleDomain::new(n.as_ref())?;
            if out.contains(&d) {
                return Err(Error::InvalidArgument(format!("domain `{d}` listed twice")));
            }
            out.push(d);
        }
        if out.len() < 2 {
            return Err(Error::InvalidArgument("need at least two style domains".into()));
        }
        Ok(DomainSet(out))
    }

    pub fn domains(&self) -> &[StyleDomain] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn index_of(&self, d: &StyleDomain) -> Option<usize> {
        self.0.iter().position(|x| x == d)
    }

    pub fn resolve(&self, name: &str) -> Result<StyleDomain> {
        let d = StyleDomain::new(name)?;
        if self.0.contains(&d) {
            Ok(d)
        } else {
            Err(Error::UnknownDomain(d.0))
        }
    }
}

impl Default for DomainSet {
    fn default() -> Self {
        DomainSet::new(DEFAULT_DOMAINS).expect("default domains are valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainAnchor {
    pub domain: StyleDomain,
    /// Mean color in the opponent working space.
    pub mean_color: [f64; 3],
    pub tolerance: f64,
}

impl DomainAnchor {
    pub fn from_rgb(domain: StyleDomain, rgb: [f64; 3], tolerance: f64) -> Result<Self> {
        if !(tolerance > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "anchor `{domain}` tolerance must be positive"
            )));
        }
        Ok(DomainAnchor {
            domain,
            mean_color: color::rgb_to_opponent(rgb),
            tolerance,
        })
    }

    pub fn rgb(&self) -> [f64; 3] {
        color::opponent_to_rgb(self.mean_color)
    }
}

/// Checks anchors are non-empty, pairwise distinct, and cover only known domains.
pub fn validate_anchors(anchors: &[DomainAnchor], domains: &DomainSet) -> Result<()> {
    if anchors.is_empty() {
        return Err(Error::InvalidArgument("no domain anchors".into()));
    }
    for (i, a) in anchors.iter().enumerate() {
        if domains.index_of(&a.domain).is_none() {
            return Err(Error::UnknownDomain(a.domain.to_string()));
        }
        if !(a.tolerance > 0.0) {
            return Err(Error::InvalidArgument(format!("anchor `{}` tolerance must be positive", a.domain)));
        }
        for b in &anchors[..i] {
            if b.domain == a.domain || b.mean_color == a.mean_color {
                return Err(Error::InvalidArgument(format!(
                    "anchors `{}` and `{}` are not distinct",
                    b.domain, a.domain
                )));
            }
        }
    }
    Ok(())
}

/// Parses `domain: r g b tolerance` lines (RGB normalized to `[0, 1]`).
pub fn parse_anchor_config(text: &str, domains: &DomainSet, origin: &Path) -> Result<Vec<DomainAnchor>> {
    let fmt_err = |line: usize, message: String| Error::Format {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut anchors = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, rest) = line
            .split_once(':')
            .ok_or_else(|| fmt_err(n + 1, "expected `domain: r g b tolerance`".into()))?;
        let domain = domains.resolve(name).map_err(|e| fmt_err(n + 1, e.to_string()))?;
        let nums: Vec<f64> = rest
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| fmt_err(n + 1, format!("bad number: {e}")))?;
        let [r, g, b, tol] = nums[..] else {
            return Err(fmt_err(n + 1, format!("expected 4 numbers, found {}", nums.len())));
        };
        anchors.push(DomainAnchor::from_rgb(domain, [r, g, b], tol).map_err(|e| fmt_err(n + 1, e.to_string()))?);
    }
    validate_anchors(&anchors, domains)?;
    Ok(anchors)
}

pub fn format_anchor_config(anchors: &[DomainAnchor]) -> String {
    anchors
        .iter()
        .map(|a| {
            let [r, g, b] = a.rgb();
            format!("{}: {r:.6} {g:.6} {b:.6} {}\n", a.domain, a.tolerance)
        })
        .collect()
}

/// Manual `image_id -> domain` assignments, which win over classification.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DomainOverrides(BTreeMap<String, StyleDomain>);

impl DomainOverrides {
    pub fn parse(text: &str, domains: &DomainSet, origin: &Path) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fmt_err = |message: String| Error::Format {
                path: origin.to_path_buf(),
                line: n + 1,
                message,
            };
            let (id, dom) = line
                .split_once('\t')
                .ok_or_else(|| fmt_err("expected `image_id<TAB>domain`".into()))?;
            let domain = domains.resolve(dom).map_err(|e| fmt_err(e.to_string()))?;
            map.insert(id.to_string(), domain);
        }
        Ok(DomainOverrides(map))
    }

    pub fn insert(&mut self, id: impl Into<String>, domain: StyleDomain) {
        self.0.insert(id.into(), domain);
    }

    pub fn get(&self, id: &str) -> Option<&StyleDomain> {
        self.0.get(id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub domain: StyleDomain,
    pub distance: f64,
    /// Whether the image mean lies within the winning anchor's tolerance.
    pub within_tolerance: bool,
}

/// Nearest anchor to the image's mean opponent color. Ties go to the anchor
/// listed first.
pub fn classify_style(image: &Raster, anchors: &[DomainAnchor]) -> Result<Classification> {
    if image.pixel_count() == 0 {
        return Err(Error::EmptyImage);
    }
    classify_mean(image.mean_opponent(), anchors)
}

const TIE_EPSILON: f64 = 1e-12;

pub fn classify_mean(mean: [f64; 3], anchors: &[DomainAnchor]) -> Result<Classification> {
    let mut best: Option<(&DomainAnchor, f64)> = None;
    for a in anchors {
        let d = color::distance(mean, a.mean_color);
        // Distances within rounding noise count as ties; the first anchor keeps them.
        if best.is_none_or(|(_, bd)| d < bd - TIE_EPSILON) {
            best = Some((a, d));
        }
    }
    let (anchor, distance) =
        best.ok_or_else(|| Error::InvalidArgument("no domain anchors".into()))?;
    Ok(Classification {
        domain: anchor.domain.clone(),
        distance,
        within_tolerance: distance <= anchor.tolerance,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainPool {
    domains: DomainSet,
    assignments: BTreeMap<String, StyleDomain>,
    pools: Vec<Vec<String>>,
}

impl DomainPool {
    pub fn empty(domains: DomainSet) -> Self {
        let pools = vec![Vec::new(); domains.len()];
        DomainPool {
            domains,
            assignments: BTreeMap::new(),
            pools,
        }
    }

    /// Builds pools from `(id, domain)` pairs in the given order.
    pub fn from_assignments(
        domains: DomainSet,
        assignments: impl IntoIterator<Item = (String, StyleDomain)>,
    ) -> Result<Self> {
        let mut pool = DomainPool::empty(domains);
        for (id, d) in assignments {
            let i = pool
                .domains
                .index_of(&d)
                .ok_or_else(|| Error::UnknownDomain(d.to_string()))?;
            if pool.assignments.insert(id.clone(), d).is_some() {
                return Err(Error::DuplicateId(id));
            }
            pool.pools[i].push(id);
        }
        Ok(pool)
    }

    pub fn domains(&self) -> &DomainSet {
        &self.domains
    }

    pub fn domain_of(&self, id: &str) -> Option<&StyleDomain> {
        self.assignments.get(id)
    }

    pub fn assignments(&self) -> &BTreeMap<String, StyleDomain> {
        &self.assignments
    }

    pub fn pool(&self, d: &StyleDomain) -> &[String] {
        self.domains
            .index_of(d)
            .map(|i| self.pools[i].as_slice())
            .unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StyleDomain, &[String])> {
        self.domains
            .domains()
            .iter()
            .zip(self.pools.iter().map(Vec::as_slice))
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.pools.iter().map(Vec::len).collect()
    }
}

/// Assigns every record a domain (override, then an existing annotation tag,
/// then classification of the loaded image) and writes it back onto the
/// record. Images are only loaded for records that need classification.
pub fn build_domain_pools<F>(
    dataset: &mut Dataset,
    domains: &DomainSet,
    anchors: &[DomainAnchor],
    overrides: &DomainOverrides,
    load: F,
) -> Result<DomainPool>
where
    F: Fn(&ImageRecord) -> Result<Raster> + Sync,
{
    validate_anchors(anchors, domains)?;
    let assigned: Vec<Result<StyleDomain>> = dataset
        .records()
        .par_iter()
        .map(|r| {
            if let Some(d) = overrides.get(&r.id) {
                return Ok(d.clone());
            }
            if let Some(d) = &r.domain {
                if domains.index_of(d).is_some() {
                    return Ok(d.clone());
                }
            }
            let img = load(r).map_err(|e| Error::InFile {
                path: r.image_path.clone(),
                source: Box::new(e),
            })?;
            let c = classify_style(&img, anchors)?;
            if !c.within_tolerance {
                log::warn!(
                    "image `{}` is {:.3} from nearest anchor `{}` (outside tolerance)",
                    r.id,
                    c.distance,
                    c.domain
                );
            }
            Ok(c.domain)
        })
        .collect();
    let assigned = assigned.into_iter().collect::<Result<Vec<_>>>()?;
    for (r, d) in dataset.records_mut().iter_mut().zip(&assigned) {
        r.domain = Some(d.clone());
    }
    DomainPool::from_assignments(
        domains.clone(),
        dataset.records().iter().map(|r| r.id.clone()).zip(assigned),
    )
}

/// Truncates every pool to the smallest pool size by seeded sampling without
/// replacement. Survivors keep their relative order.
pub fn balance_domain_pool(pool: &DomainPool, seed: u64) -> DomainPool {
    let k = pool.pools.iter().map(Vec::len).min().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pools: Vec<Vec<String>> = pool
        .pools
        .iter()
        .map(|ids| {
            let mut picks = index::sample(&mut rng, ids.len(), k).into_vec();
            picks.sort_unstable();
            picks.into_iter().map(|i| ids[i].clone()).collect()
        })
        .collect();
    let kept: HashSet<&str> = pools.iter().flatten().map(String::as_str).collect();
    let assignments = pool
        .assignments
        .iter()
        .filter(|(id, _)| kept.contains(id.as_str()))
        .map(|(id, d)| (id.clone(), d.clone()))
        .collect();
    DomainPool {
        domains: pool.domains.clone(),
        assignments,
        pools,
    }
}
