mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use stylebal::dataset::{AnnotatedObject, BoundingBox, ClassLabel, Dataset, ImageRecord, Vocabulary};
use stylebal::domain::{
    balance_domain_pool, build_domain_pools, classify_style, DomainAnchor, DomainOverrides, DomainPool, DomainSet,
    StyleDomain,
};
use stylebal::raster::Raster;

fn default_anchors() -> Vec<DomainAnchor> {
    let ds = DomainSet::default();
    ds.domains()
        .iter()
        .zip(common::DOMAIN_COLORS)
        .map(|(d, rgb)| DomainAnchor::from_rgb(d.clone(), rgb, 0.25).unwrap())
        .collect()
}

fn pool_from(sizes: &[usize]) -> DomainPool {
    let ds = DomainSet::default();
    let pairs = sizes.iter().enumerate().flat_map(|(d, &n)| {
        let dom = ds.domains()[d].clone();
        (0..n).map(move |i| (format!("d{d}_{i:03}"), dom.clone()))
    });
    DomainPool::from_assignments(ds.clone(), pairs).unwrap()
}

proptest! {
    #[test]
    fn balanced_pools_are_equal_size_subsets(sizes in prop::collection::vec(0usize..40, 4), seed in any::<u64>()) {
        let pool = pool_from(&sizes);
        let bal = balance_domain_pool(&pool, seed);
        let k = *sizes.iter().min().unwrap();
        prop_assert!(bal.sizes().iter().all(|&s| s == k));
        for ((d, kept), (_, orig)) in bal.iter().zip(pool.iter()) {
            let orig: BTreeSet<&String> = orig.iter().collect();
            prop_assert!(kept.iter().all(|id| orig.contains(id)));
            prop_assert!(kept.iter().all(|id| bal.domain_of(id) == Some(d)));
        }
        prop_assert_eq!(bal, balance_domain_pool(&pool, seed));
    }

    #[test]
    fn pools_partition_the_dataset(assign in prop::collection::vec(0usize..4, 0..60)) {
        let ds = DomainSet::default();
        let pool = DomainPool::from_assignments(
            ds.clone(),
            assign.iter().enumerate().map(|(i, &d)| (format!("r{i}"), ds.domains()[d].clone())),
        ).unwrap();
        prop_assert_eq!(pool.sizes().iter().sum::<usize>(), assign.len());
        let all: BTreeSet<&String> = pool.iter().flat_map(|(_, ids)| ids.iter()).collect();
        prop_assert_eq!(all.len(), assign.len());
    }

    #[test]
    fn classification_ignores_pixel_order(seed in any::<u64>(), base in 0usize..4) {
        let img = common::textured(common::DOMAIN_COLORS[base], 16, 12, (seed % 16) as u32, 0.04);
        let mut pixels: Vec<[f32; 3]> = img.pixels().collect();
        let mut s = seed | 1;
        for i in (1..pixels.len()).rev() {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            pixels.swap(i, (s % (i as u64 + 1)) as usize);
        }
        let shuffled = Raster::new(16, 12, pixels.into_iter().flatten().collect()).unwrap();
        let anchors = default_anchors();
        let a = classify_style(&img, &anchors).unwrap();
        let b = classify_style(&shuffled, &anchors).unwrap();
        prop_assert_eq!(a.domain, b.domain);
    }
}

#[test]
fn anchor_fixture_classifies_correctly() {
    let anchors = default_anchors();
    let mut correct = 0;
    for i in 0..40u32 {
        let d = (i % 4) as usize;
        let img = common::textured(common::DOMAIN_COLORS[d], 32, 24, i, 0.05);
        if classify_style(&img, &anchors).unwrap().domain == anchors[d].domain {
            correct += 1;
        }
    }
    assert_eq!(correct, 40);
}

#[test]
fn override_beats_tag_beats_classification() {
    let vocab = Vocabulary::default();
    let rec = |id: &str, domain: Option<&str>| ImageRecord {
        id: id.into(),
        image_path: format!("{id}.png").into(),
        width: 8,
        height: 8,
        depth: 3,
        objects: vec![AnnotatedObject {
            label: ClassLabel::new("scallop").unwrap(),
            bbox: BoundingBox::new(0, 0, 4, 4),
        }],
        domain: domain.map(|d| StyleDomain::new(d).unwrap()),
    };
    let mut ds = Dataset::new(vec![rec("a", Some("white")), rec("b", Some("white")), rec("c", None)], vocab).unwrap();
    let mut overrides = DomainOverrides::default();
    overrides.insert("a", StyleDomain::new("green").unwrap());
    let loads = std::sync::atomic::AtomicUsize::new(0);
    let pool = build_domain_pools(&mut ds, &DomainSet::default(), &default_anchors(), &overrides, |_| {
        loads.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        Ok(common::textured(common::DEEPBLUE, 8, 8, 0, 0.02))
    })
    .unwrap();
    assert_eq!(pool.domain_of("a").unwrap().as_str(), "green");
    assert_eq!(pool.domain_of("b").unwrap().as_str(), "white");
    assert_eq!(pool.domain_of("c").unwrap().as_str(), "deepblue");
    assert_eq!(loads.into_inner(), 1);
    assert_eq!(ds.get("c").unwrap().domain.as_ref().unwrap().as_str(), "deepblue");
}
