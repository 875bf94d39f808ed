mod common;

use std::time::Duration;

use proptest::prelude::*;
use stylebal::domain::StyleDomain;
use stylebal::raster::Raster;
use stylebal::transfer::{
    adversarial_loss, apply_haze, color_transfer, compute_style_target, cycle_loss, DiscriminatorLabel,
    ExternalTranslator, HazeParams, StyleTargets, Translator, DEFAULT_STD_FLOOR,
};

fn dom(s: &str) -> StyleDomain {
    StyleDomain::new(s).unwrap()
}

fn targets() -> StyleTargets {
    let mut t = StyleTargets::new();
    for (name, rgb, phase) in [("blue", common::BLUE, 0), ("green", common::GREEN, 5)] {
        let pool: Vec<Raster> = (0..3).map(|i| common::textured(rgb, 24, 16, phase + i, 0.05)).collect();
        t.insert(
            dom(name),
            compute_style_target(&pool, dom(name), HazeParams::default(), DEFAULT_STD_FLOOR).unwrap(),
        );
    }
    t
}

proptest! {
    #[test]
    fn haze_is_a_convex_combination(
        px in prop::array::uniform3(0.0f32..=1.0),
        a in prop::array::uniform3(0.0f64..=1.0),
        t in 0.001f64..=1.0,
    ) {
        let img = Raster::filled(1, 1, px).unwrap();
        let out = apply_haze(&img, a, t).unwrap().pixel(0, 0);
        for c in 0..3 {
            let lo = (px[c] as f64).min(a[c]) - 1e-6;
            let hi = (px[c] as f64).max(a[c]) + 1e-6;
            prop_assert!((lo..=hi).contains(&(out[c] as f64)));
            prop_assert!((0.0..=1.0).contains(&out[c]));
        }
    }

    #[test]
    fn adversarial_loss_ignores_pair_order(
        pairs in prop::collection::vec((0.0f64..=1.0, any::<bool>()), 1..20),
        rot in 0usize..20,
    ) {
        let label = |b: bool| if b { DiscriminatorLabel::Real } else { DiscriminatorLabel::Fake };
        let (s, l): (Vec<f64>, Vec<_>) = pairs.iter().map(|&(s, b)| (s, label(b))).unzip();
        let mut rotated = pairs.clone();
        rotated.rotate_left(rot % pairs.len());
        rotated.reverse();
        let (s2, l2): (Vec<f64>, Vec<_>) = rotated.iter().map(|&(s, b)| (s, label(b))).unzip();
        let a = adversarial_loss(&s, &l).unwrap();
        let b = adversarial_loss(&s2, &l2).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        let exact: Vec<f64> = l.iter().map(|l| l.target()).collect();
        prop_assert_eq!(adversarial_loss(&exact, &l).unwrap(), 0.0);
    }
}

#[test]
fn stat_transfer_round_trip_is_nearly_lossless() {
    let tr = Translator::StatTransfer(targets());
    for phase in 0..5 {
        let img = common::textured(common::BLUE, 24, 16, phase, 0.04);
        let loss = cycle_loss(&tr, &img, &dom("blue"), &dom("green")).unwrap();
        assert!(loss <= 1e-3, "phase {phase}: {loss}");
    }
    let img = common::textured(common::BLUE, 24, 16, 0, 0.04);
    assert_eq!(cycle_loss(&Translator::Identity, &img, &dom("blue"), &dom("green")).unwrap(), 0.0);
}

#[test]
fn transferred_image_takes_target_moments() {
    let t = targets();
    let img = common::textured(common::BLUE, 24, 16, 7, 0.04);
    let own = compute_style_target(std::slice::from_ref(&img), dom("blue"), HazeParams::default(), DEFAULT_STD_FLOOR).unwrap();
    let out = color_transfer(&img, &own, &t[&dom("green")]);
    assert_eq!(out.clipped_fraction, 0.0);
    let got = compute_style_target(&[out.image], dom("green"), HazeParams::default(), DEFAULT_STD_FLOOR).unwrap();
    let want = &t[&dom("green")];
    for c in 0..3 {
        assert!((got.channel_mean[c] - want.channel_mean[c]).abs() <= 0.02 * want.channel_mean[c].abs().max(0.01));
        assert!((got.channel_std[c] - want.channel_std[c]).abs() <= 0.02 * want.channel_std[c]);
    }
}

#[test]
fn external_copy_command_behaves_as_identity() {
    let tr = Translator::External(ExternalTranslator::new("cp {input} {output}", Duration::from_secs(20)));
    let img = common::textured(common::WHITE, 10, 6, 0, 0.05);
    let out = tr.translate(&img, &dom("white"), &dom("green")).unwrap();
    // Through an 8-bit PNG, so compare after quantization.
    assert_eq!(out.image.to_rgb8(), img.to_rgb8());
}

#[test]
fn haze_with_target_parameters() {
    let mut t = targets();
    let green = t.get_mut(&dom("green")).unwrap();
    green.haze = HazeParams {
        airlight: [0.3, 0.6, 0.45],
        transmission: 0.8,
    };
    let plain = Translator::StatTransfer(t.clone());
    let hazy = Translator::StatTransferWithHaze(t);
    let img = common::textured(common::BLUE, 12, 8, 0, 0.04);
    let a = plain.translate(&img, &dom("blue"), &dom("green")).unwrap().image;
    let b = hazy.translate(&img, &dom("blue"), &dom("green")).unwrap().image;
    let expect = apply_haze(&a, [0.3, 0.6, 0.45], 0.8).unwrap();
    assert_eq!(b, expect);
}
