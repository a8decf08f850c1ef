use d4::dataset::{
    parse_manifest, BBox, DatasetManifest, DomainTag, ImageRecord, Keypoint, Provenance, ShootAnnotation, Split,
    ValidationOptions,
};
use d4::edge::{canny, default_presets};
use d4::eval::{average_precision, iou, oks, OksParams, PredKeypoint};
use d4::iqa::{fid, FeatureSet, FeatureVector};
use d4::raster::{hflip, render_annotation_plot, synth_layout, LayoutParams, PlotStyle, RasterImage};
use d4::selection::{quality_gate, DistanceMetric};
use proptest::prelude::*;

const W: u32 = 512;

fn layout(seed: u64) -> Vec<ShootAnnotation> {
    synth_layout(&LayoutParams::default(), seed).unwrap()
}

fn int_box() -> impl Strategy<Value = BBox> {
    (0u32..60, 0u32..60, 1u32..40, 1u32..40).prop_map(|(x, y, w, h)| BBox::new(x.into(), y.into(), w.into(), h.into()))
}

fn rows(n: std::ops::Range<usize>, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0f64..5.0, dim), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn manifest_survives_a_json_round_trip(seeds in prop::collection::vec(any::<u64>(), 1..6)) {
        let records = seeds
            .iter()
            .enumerate()
            .map(|(i, s)| ImageRecord {
                id: format!("r{i}"),
                path: format!("img/r{i}.png"),
                width: W,
                height: W,
                domain: "night".into(),
                split: if i % 2 == 0 { Split::Train } else { Split::Val },
                provenance: Provenance::Real,
                annotations: layout(*s),
            })
            .collect();
        let m = DatasetManifest::new(vec![DomainTag::new("night", "night")], records);
        let text = serde_json::to_string(&m).unwrap();
        let back = parse_manifest(&text, &ValidationOptions::default()).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn flip_is_an_involution(seed in any::<u64>()) {
        let anns = layout(seed);
        let img = render_annotation_plot(&anns, W, W, &PlotStyle::default()).unwrap();
        let (fi, fa) = hflip(Some(&img), &anns, W).unwrap();
        let (ffi, ffa) = hflip(fi.as_ref(), &fa, W).unwrap();
        prop_assert_eq!(ffa, anns);
        prop_assert_eq!(ffi.unwrap(), img);
    }

    #[test]
    fn flip_commutes_with_rendering(seed in any::<u64>()) {
        let anns = layout(seed);
        let style = PlotStyle::default();
        let img = render_annotation_plot(&anns, W, W, &style).unwrap();
        let (fi, fa) = hflip(Some(&img), &anns, W).unwrap();
        prop_assert_eq!(render_annotation_plot(&fa, W, W, &style).unwrap(), fi.unwrap());
    }

    #[test]
    fn canny_commutes_with_flip(pixels in prop::collection::vec(any::<u8>(), 24 * 20), preset in 0usize..4) {
        let img = RasterImage::new(24, 20, 1, pixels).unwrap();
        let p = &default_presets()[preset];
        let a = canny(&img.flipped_horizontally(), p).unwrap();
        let b = canny(&img, p).unwrap().flipped_horizontally();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn iou_is_a_bounded_symmetric_similarity(a in int_box(), b in int_box()) {
        let v = iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, iou(&b, &a));
        prop_assert_eq!(iou(&a, &a), 1.0);
        let far = BBox::new(a.right() + 1.0, a.y, a.w, a.h);
        prop_assert_eq!(iou(&a, &far), 0.0);
    }

    #[test]
    fn oks_is_bounded_and_decreases_with_distance(seed in any::<u64>(), d1 in 0.0f64..30.0, extra in 0.1f64..30.0) {
        let gt = layout(seed).remove(0);
        let p = OksParams::default();
        let shifted = |d: f64| -> Vec<PredKeypoint> {
            (1..=10u8).map(|i| gt.keypoint(i).map_or([0.0, 0.0, 0.0], |k: &Keypoint| [k.x + d, k.y, 2.0])).collect()
        };
        prop_assert_eq!(oks(&shifted(0.0), &gt, &p).unwrap(), 1.0);
        let near = oks(&shifted(d1), &gt, &p).unwrap();
        let far = oks(&shifted(d1 + extra), &gt, &p).unwrap();
        prop_assert!((0.0..=1.0).contains(&near));
        prop_assert!(far < near);
        prop_assert_eq!(oks(&[], &gt, &p).unwrap(), 0.0);
    }

    #[test]
    fn ap_is_bounded_and_rewards_ranking_hits_first(tp in prop::collection::vec(any::<bool>(), 1..60), extra_gt in 0usize..5) {
        let hits = tp.iter().filter(|t| **t).count();
        let n_gt = hits + extra_gt;
        prop_assume!(n_gt > 0);
        let ap = average_precision(&tp, n_gt).unwrap().ap;
        prop_assert!((0.0..=1.0).contains(&ap));
        let mut sorted = tp.clone();
        sorted.sort_by(|a, b| b.cmp(a));
        let best = average_precision(&sorted, n_gt).unwrap().ap;
        prop_assert!(best >= ap);
        if extra_gt == 0 && hits > 0 {
            prop_assert_eq!(best, 1.0);
        }
    }

    #[test]
    fn fid_is_invariant_to_shared_rigid_motion(a in rows(6..12, 3), b in rows(6..12, 3), theta in 0.0f64..std::f64::consts::TAU, shift in -10.0f64..10.0) {
        let (c, s) = (theta.cos(), theta.sin());
        let motion = |r: &Vec<f64>| vec![c * r[0] - s * r[1] + shift, s * r[0] + c * r[1], r[2] - shift];
        let set = |rs: &[Vec<f64>]| FeatureSet::from_rows("p", rs.to_vec()).unwrap();
        let base = fid(&set(&a), &set(&b)).unwrap();
        let ma: Vec<_> = a.iter().map(motion).collect();
        let mb: Vec<_> = b.iter().map(motion).collect();
        let moved = fid(&set(&ma), &set(&mb)).unwrap();
        prop_assert!(base >= -1e-9);
        prop_assert!((base - moved).abs() <= 1e-6 * (1.0 + base), "{} vs {}", base, moved);
    }

    #[test]
    fn gate_acceptance_is_kept_when_moving_toward_the_target(t in rows(3..15, 4), g in prop::collection::vec(-5.0f64..5.0, 4), lambda in 0.0f64..1.0) {
        let set = FeatureSet::from_rows("p", t).unwrap();
        let g = FeatureVector(g);
        let d = quality_gate(&set, "g", &g, DistanceMetric::Euclidean).unwrap();
        prop_assert_eq!(d.accepted, d.median_pairwise > d.nearest_distance);
        let anchor = &set.vectors()[set.ids().iter().position(|i| *i == d.nearest_id).unwrap()];
        let closer = FeatureVector(anchor.0.iter().zip(&g.0).map(|(a, x)| a + lambda * (x - a)).collect());
        let d2 = quality_gate(&set, "g", &closer, DistanceMetric::Euclidean).unwrap();
        prop_assert!(d2.nearest_distance <= d.nearest_distance + 1e-12);
        if d.accepted {
            prop_assert!(d2.accepted);
        }
    }
}
