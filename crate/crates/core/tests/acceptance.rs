//! Acceptance suite. Each criterion prints one PASS/FAIL line with its
//! runtime; the process exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use d4::dataset::{
    load_manifest_with, save_manifest, BBox, DatasetManifest, DomainTag, ImageRecord, Keypoint, Provenance,
    ShootAnnotation, Split, ValidationOptions,
};
use d4::edge::{canny, default_presets};
use d4::eval::{
    average_precision, default_thresholds, iou, map_report, oks, simulate_detections, write_detections_jsonl,
    Detection, DetectorSim, OksParams, PredKeypoint, Task,
};
use d4::iqa::{fid, kid, FeatureSet, FeatureVector};
use d4::pipeline::{
    build_plans, enumerate_stage1_pairs, generate_batch, pca_project, select_best_checkpoint, CheckpointSeries,
    GenerationRequest, MockGenerator, MockMode, Polarity, RetryPolicy,
};
use d4::raster::{hflip, render_annotation_plot, synth_layout, LayoutParams, PlotStyle, RasterImage};
use d4::selection::{gate_batch, pairwise_median, quality_gate, DistanceMetric};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

struct Outcome {
    name: &'static str,
    ok: bool,
}

fn criterion(name: &'static str, limit: Option<f64>, f: impl FnOnce() -> Check) -> Outcome {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let elapsed = start.elapsed();
    let over = limit.is_some_and(|l| elapsed > Duration::from_secs_f64(l));
    let limit_txt = limit.map_or(String::new(), |l| format!(", limit {l} s"));
    let (ok, detail) = match result {
        Ok(d) if !over => (true, d),
        Ok(d) => (false, format!("too slow; {d}")),
        Err(e) => (false, e),
    };
    println!(
        "{} {name} ({:.2} s{limit_txt}) {detail}",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    Outcome { name, ok }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian_rows(r: &mut ChaCha8Rng, n: usize, d: usize, mean: &[f64], sd: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..d)
                .map(|j| mean[j] + sd * r.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}

fn record(id: &str, anns: Vec<ShootAnnotation>) -> ImageRecord {
    ImageRecord {
        id: id.into(),
        path: format!("{id}.png"),
        width: 512,
        height: 512,
        domain: "night".into(),
        split: Split::Test,
        provenance: Provenance::Real,
        annotations: anns,
    }
}

fn oks_oracle() -> Check {
    let mut r = rng(1);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (w, h) = (r.random_range(4.0..200.0), r.random_range(4.0..300.0));
        let bbox = BBox::new(r.random_range(0.0..100.0), r.random_range(0.0..100.0), w, h);
        let n = r.random_range(1..=10usize);
        let kps: Vec<Keypoint> = (1..=n as u8)
            .map(|i| {
                Keypoint::new(
                    i,
                    bbox.x + r.random_range(0.0..w),
                    bbox.y + r.random_range(0.0..h),
                    r.random_bool(0.8),
                )
            })
            .collect();
        let gt = ShootAnnotation::new(bbox, kps.clone());
        let k: Vec<f64> = (0..10).map(|_| r.random_range(0.03..0.3)).collect();
        let params = OksParams { k_per_class: k.clone() };
        let n_pred = r.random_range(0..=10usize);
        let pred: Vec<PredKeypoint> = (0..n_pred)
            .map(|_| {
                [
                    r.random_range(0.0..300.0),
                    r.random_range(0.0..400.0),
                    r.random_range(0.0..2.0),
                ]
            })
            .collect();
        let visible: Vec<&Keypoint> = kps.iter().filter(|k| k.visible).collect();
        let got = oks(&pred, &gt, &params);
        if visible.is_empty() {
            ensure!(got.is_err(), "zero visible nodes must be an error");
            continue;
        }
        let s2 = w * h;
        let mut total = 0.0;
        for kp in &visible {
            let i = (kp.index - 1) as usize;
            if let Some(p) = pred.get(i) {
                let d2 = (p[0] - kp.x).powi(2) + (p[1] - kp.y).powi(2);
                total += (-d2 / (2.0 * s2 * k[i].powi(2))).exp();
            }
        }
        let want = total / visible.len() as f64;
        let got = got.map_err(|e| e.to_string())?;
        worst = worst.max((got - want).abs());
        checked += 1;
    }
    ensure!(worst <= 1e-12, "max deviation {worst:e}");

    let bbox = BBox::new(10.0, 10.0, 40.0, 90.0);
    let s = bbox.area().sqrt();
    let p = OksParams::default();
    let d = s * p.k_per_class[0] * (2.0 * 2f64.ln()).sqrt();
    let gt = ShootAnnotation::new(bbox, vec![Keypoint::new(1, 30.0, 40.0, true)]);
    let half = oks(&[[30.0 + d, 40.0, 2.0]], &gt, &p).map_err(|e| e.to_string())?;
    ensure!((half - 0.5).abs() <= 1e-9, "half-distance case gave {half}");
    Ok(format!("{checked} instances, max deviation {worst:.1e}"))
}

fn iou_oracle() -> Check {
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let mut b = || {
            let x = r.random_range(0..40u32);
            let y = r.random_range(0..40u32);
            (x, y, r.random_range(0..30u32), r.random_range(0..30u32))
        };
        let (a, c) = (b(), b());
        let inside = |p: (u32, u32, u32, u32), x: u32, y: u32| x >= p.0 && x < p.0 + p.2 && y >= p.1 && y < p.1 + p.3;
        let (mut inter, mut union) = (0u32, 0u32);
        for y in 0..70 {
            for x in 0..70 {
                let (ia, ic) = (inside(a, x, y), inside(c, x, y));
                inter += (ia && ic) as u32;
                union += (ia || ic) as u32;
            }
        }
        let want = if union == 0 { 0.0 } else { inter as f64 / union as f64 };
        let bb = |p: (u32, u32, u32, u32)| BBox::new(p.0 as f64, p.1 as f64, p.2 as f64, p.3 as f64);
        let got = iou(&bb(a), &bb(c));
        worst = worst.max((got - want).abs());
    }
    ensure!(worst <= 1e-9, "max deviation {worst:e}");
    Ok(format!("1000 pairs, max deviation {worst:.1e}"))
}

/// Independent evaluator: one global pass per threshold, matching against
/// a per-image claimed set, then brute-force interpolated precision.
fn brute_force_map(dets: &[Detection], gt: &DatasetManifest, thresholds: &[f64]) -> f64 {
    let gts: BTreeMap<&str, &[ShootAnnotation]> =
        gt.records.iter().map(|r| (r.id.as_str(), &r.annotations[..])).collect();
    let n_gt: usize = gts.values().map(|g| g.len()).sum();
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap()
            .then(dets[a].image_id.cmp(&dets[b].image_id))
            .then(a.cmp(&b))
    });
    let area_iou = |a: &BBox, b: &BBox| {
        let (ax1, ay1, bx1, by1) = (a.x + a.w, a.y + a.h, b.x + b.w, b.y + b.h);
        let iw = (ax1.min(bx1) - a.x.max(b.x)).max(0.0);
        let ih = (ay1.min(by1) - a.y.max(b.y)).max(0.0);
        let inter = iw * ih;
        let union = a.w * a.h + b.w * b.h - inter;
        if inter == 0.0 || union == 0.0 {
            0.0
        } else {
            inter / union
        }
    };
    let mut sum_ap = 0.0;
    for &thr in thresholds {
        let mut claimed: BTreeMap<(&str, usize), bool> = BTreeMap::new();
        let mut hits = Vec::new();
        let mut h = 0usize;
        for &d in &order {
            let det = &dets[d];
            let mut best: Option<usize> = None;
            let mut best_sim = f64::NEG_INFINITY;
            for (g, ann) in gts[det.image_id.as_str()].iter().enumerate() {
                if claimed.contains_key(&(det.image_id.as_str(), g)) {
                    continue;
                }
                let s = area_iou(&det.bbox, &ann.bbox);
                if s >= thr && s > best_sim {
                    best = Some(g);
                    best_sim = s;
                }
            }
            if let Some(g) = best {
                claimed.insert((det.image_id.as_str(), g), true);
                h += 1;
            }
            hits.push(h);
        }
        let mut sum = 0.0;
        for level in 0..=100usize {
            let mut p: Option<f64> = None;
            for (k, &hk) in hits.iter().enumerate() {
                if hk * 100 >= level * n_gt {
                    let prec = hk as f64 / (k + 1) as f64;
                    p = Some(p.map_or(prec, |q: f64| q.max(prec)));
                }
            }
            sum += p.unwrap_or(0.0);
        }
        sum_ap += sum / 101.0;
    }
    sum_ap / thresholds.len() as f64
}

fn map_oracle() -> Check {
    let mut r = rng(3);
    let thresholds = default_thresholds();
    let grid = |r: &mut ChaCha8Rng| r.random_range(0..16u32) as f64 * 2.0;
    let mut done = 0;
    while done < 200 {
        let n_images = r.random_range(1..=5usize);
        let mut records = Vec::new();
        let mut dets = Vec::new();
        for i in 0..n_images {
            let id = format!("img{i}");
            let anns: Vec<ShootAnnotation> = (0..r.random_range(0..=5usize))
                .map(|_| {
                    ShootAnnotation::new(
                        BBox::new(grid(&mut r), grid(&mut r), grid(&mut r) + 2.0, grid(&mut r) + 2.0),
                        vec![],
                    )
                })
                .collect();
            for a in &anns {
                if r.random_bool(0.8) {
                    let j = |r: &mut ChaCha8Rng| r.random_range(-2..=2i32) as f64;
                    let b = a.bbox;
                    dets.push(Detection {
                        image_id: id.clone(),
                        bbox: BBox::new(
                            (b.x + j(&mut r)).max(0.0),
                            (b.y + j(&mut r)).max(0.0),
                            (b.w + j(&mut r)).max(1.0),
                            (b.h + j(&mut r)).max(1.0),
                        ),
                        score: r.random_range(1..=9u32) as f64 / 10.0,
                        keypoints: None,
                    });
                }
            }
            for _ in 0..r.random_range(0..=2usize) {
                dets.push(Detection {
                    image_id: id.clone(),
                    bbox: BBox::new(grid(&mut r), grid(&mut r), grid(&mut r) + 1.0, grid(&mut r) + 1.0),
                    score: r.random_range(1..=9u32) as f64 / 10.0,
                    keypoints: None,
                });
            }
            records.push(record(&id, anns));
        }
        let gt = DatasetManifest::new(vec![DomainTag::new("night", "night")], records);
        if gt.records.iter().all(|r| r.annotations.is_empty()) {
            continue;
        }
        dets.shuffle(&mut r);
        let got = map_report(&dets, &gt, Task::BBox, &thresholds, &OksParams::default()).map_err(|e| e.to_string())?;
        let want = brute_force_map(&dets, &gt, &thresholds);
        ensure!(
            got.map == want,
            "instance {done}: map_report {} vs brute force {want}",
            got.map
        );
        done += 1;
    }

    let fixture = average_precision(&[true, false, true], 2).map_err(|e| e.to_string())?;
    ensure!(format!("{:.4}", fixture.ap) == "0.8350", "fixture AP {}", fixture.ap);
    let gt = DatasetManifest::new(
        vec![DomainTag::new("night", "night")],
        vec![record(
            "a",
            vec![
                ShootAnnotation::new(BBox::new(0.0, 0.0, 10.0, 10.0), vec![]),
                ShootAnnotation::new(BBox::new(40.0, 0.0, 10.0, 10.0), vec![]),
            ],
        )],
    );
    let det = |x: f64, score: f64| Detection {
        image_id: "a".into(),
        bbox: BBox::new(x, 0.0, 10.0, 10.0),
        score,
        keypoints: None,
    };
    let rep = map_report(
        &[det(0.0, 0.9), det(80.0, 0.8), det(40.0, 0.7)],
        &gt,
        Task::BBox,
        &[0.5],
        &OksParams::default(),
    )
    .map_err(|e| e.to_string())?;
    ensure!(
        format!("{:.4}", rep.map50) == "0.8350",
        "fixture through map_report gave {}",
        rep.map50
    );
    Ok("200 instances equal, fixture 0.8350".into())
}

fn fid_analytic() -> Check {
    let mut r = rng(4);
    let zero = vec![0.0; 8];
    let mu: Vec<f64> = vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
    let set = |rows| FeatureSet::from_rows("gauss", rows).unwrap();
    let a = set(gaussian_rows(&mut r, 10_000, 8, &zero, 1.0));
    let b = set(gaussian_rows(&mut r, 10_000, 8, &mu, 1.0));
    let c = set(gaussian_rows(&mut r, 10_000, 8, &zero, 2.0));
    let shift = fid(&a, &b).map_err(|e| e.to_string())?;
    let scale = fid(&a, &c).map_err(|e| e.to_string())?;
    ensure!((3.8..=4.2).contains(&shift), "mean shift FID {shift}");
    ensure!((7.6..=8.4).contains(&scale), "scale FID {scale}");
    Ok(format!("shift {shift:.4}, scale {scale:.4}"))
}

fn kid_unbiased() -> Check {
    let trials = 200;
    let zero = vec![0.0; 8];
    let values: Vec<f64> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..4)
            .map(|t| {
                let zero = &zero;
                s.spawn(move || {
                    (t..trials)
                        .step_by(4)
                        .map(|i| {
                            let mut r = rng(1000 + i as u64);
                            let a = FeatureSet::from_rows("g", gaussian_rows(&mut r, 2000, 8, zero, 1.0)).unwrap();
                            let b = FeatureSet::from_rows("g", gaussian_rows(&mut r, 2000, 8, zero, 1.0)).unwrap();
                            kid(&a, &b).unwrap()
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
    });
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut r = rng(5);
    let boots: Vec<f64> = (0..2000)
        .map(|_| {
            (0..values.len())
                .map(|_| values[r.random_range(0..values.len())])
                .sum::<f64>()
                / values.len() as f64
        })
        .collect();
    let bm = boots.iter().sum::<f64>() / boots.len() as f64;
    let se = (boots.iter().map(|b| (b - bm).powi(2)).sum::<f64>() / (boots.len() - 1) as f64).sqrt();
    ensure!(mean.abs() <= 3.0 * se, "mean KID {mean:e} vs 3 SE {:e}", 3.0 * se);
    Ok(format!("mean {mean:.2e}, bootstrap SE {se:.2e}"))
}

fn selection_gate() -> Check {
    let mut r = rng(6);
    let dim = 16;
    let zero = vec![0.0; dim];
    let rows = gaussian_rows(&mut r, 50, dim, &zero, 1.0);
    let ids: Vec<String> = (0..50).map(|i| format!("t{i:02}")).collect();
    let target = FeatureSet::new("g", ids.clone(), rows.iter().cloned().map(FeatureVector).collect()).unwrap();
    let m = DistanceMetric::Euclidean;
    let mut max_pair: f64 = 0.0;
    for i in 0..50 {
        for j in i + 1..50 {
            max_pair = max_pair.max(m.distance(&target.vectors()[i], &target.vectors()[j]).unwrap());
        }
    }
    let dup = FeatureVector(rows[7].iter().map(|v| v + 1e-4).collect());
    let outlier = FeatureVector(vec![max_pair * 3.0; dim]);
    let d = quality_gate(&target, "dup", &dup, m).map_err(|e| e.to_string())?;
    ensure!(d.accepted && d.nearest_id == "t07", "near duplicate: {d:?}");
    let o = quality_gate(&target, "out", &outlier, m).map_err(|e| e.to_string())?;
    ensure!(!o.accepted && o.nearest_distance > max_pair, "outlier: {o:?}");

    let cands = FeatureSet::new(
        "g",
        (0..30).map(|i| format!("c{i}")).collect(),
        gaussian_rows(&mut r, 30, dim, &zero, 1.1)
            .into_iter()
            .chain([dup.0.clone(), outlier.0.clone()])
            .take(30)
            .map(FeatureVector)
            .collect(),
    )
    .unwrap();
    for metric in [DistanceMetric::Cosine, DistanceMetric::Euclidean] {
        let base = gate_batch(&target, &cands, metric).map_err(|e| e.to_string())?;
        for _ in 0..20 {
            let mut idx: Vec<usize> = (0..50).collect();
            idx.shuffle(&mut r);
            let perm = target.select(&idx);
            let again = gate_batch(&perm, &cands, metric).map_err(|e| e.to_string())?;
            ensure!(again == base, "{metric:?}: decisions changed under permutation");
        }
    }

    for n in [2usize, 3, 4, 5, 10, 17, 64, 101, 200] {
        let set = FeatureSet::from_rows("g", gaussian_rows(&mut r, n, 8, &[0.0; 8], 1.0)).unwrap();
        for metric in [DistanceMetric::Cosine, DistanceMetric::Euclidean] {
            let mut all = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    if i < j {
                        all.push(metric.distance(&set.vectors()[i], &set.vectors()[j]).unwrap());
                    }
                }
            }
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let k = all.len();
            let want = if k % 2 == 1 {
                all[k / 2]
            } else {
                (all[k / 2 - 1] + all[k / 2]) / 2.0
            };
            let got = pairwise_median(&set, metric).map_err(|e| e.to_string())?;
            ensure!(got == want, "n={n} {metric:?}: median {got} vs oracle {want}");
        }
    }
    Ok("duplicate accepted, outlier rejected, 20 permutations stable, medians exact".into())
}

fn canny_checks() -> Check {
    let presets = default_presets();
    let count = |img: &RasterImage| img.pixels().iter().filter(|&&p| p == 255).count();
    for p in &presets {
        let e = canny(&RasterImage::filled_gray(40, 30, 90), p).map_err(|e| e.to_string())?;
        ensure!(count(&e) == 0, "{}: constant image has edges", p.name);
        // a 0..255 step blurred at sigma 1.4 peaks near 145 gradient units,
        // so the strictest preset may see nothing; none may misplace it
        let step = RasterImage::from_fn_gray(64, 32, |x, _| if x < 30 { 0 } else { 255 });
        let e = canny(&step, p).map_err(|e| e.to_string())?;
        let peak = d4::edge::canny_stages(&step, p)
            .unwrap()
            .magnitude
            .iter()
            .cloned()
            .fold(0.0, f64::max);
        for y in 0..32 {
            let cols: Vec<u32> = (0..64).filter(|&x| e.gray_at(x, y) == 255).collect();
            ensure!(
                cols.iter().all(|&c| (29..=30).contains(&c)),
                "{}: row {y} edges at {cols:?}",
                p.name
            );
            ensure!(
                peak < p.high_threshold || cols.len() == 1,
                "{}: row {y} edges at {cols:?}",
                p.name
            );
        }
    }
    let mut r = rng(7);
    for i in 0..10 {
        let (w, h) = (r.random_range(20..80u32), r.random_range(20..80u32));
        let raw = RasterImage::from_fn_gray(w, h, |_, _| r.random_range(0..=255u8));
        let img = if i % 2 == 0 {
            d4::edge::gaussian_blur(&raw, 1.5).unwrap()
        } else {
            raw
        };
        for p in &presets {
            let a = canny(&img.flipped_horizontally(), p).unwrap();
            let b = canny(&img, p).unwrap().flipped_horizontally();
            ensure!(a == b, "image {i}, preset {}: flip does not commute", p.name);
        }
    }
    let anns = synth_layout(&LayoutParams::default(), 11).map_err(|e| e.to_string())?;
    let fixture = d4::raster::synth_scene(&anns, 512, 512, d4::raster::SceneLighting::Night, 11);
    let counts: Vec<usize> = presets.iter().map(|p| count(&canny(&fixture, p).unwrap())).collect();
    ensure!(counts.windows(2).all(|w| w[0] >= w[1]), "preset edge counts {counts:?}");
    Ok(format!("preset edge counts {counts:?}"))
}

fn bits(anns: &[ShootAnnotation]) -> Vec<u64> {
    anns.iter()
        .flat_map(|a| {
            let b = a.bbox;
            [b.x, b.y, b.w, b.h]
                .into_iter()
                .chain(
                    a.keypoints
                        .iter()
                        .flat_map(|k| [k.index as f64, k.x, k.y, k.visible as u8 as f64]),
                )
                .map(f64::to_bits)
                .collect::<Vec<_>>()
        })
        .collect()
}

fn raster_flip() -> Check {
    let mut r = rng(8);
    let style = PlotStyle::default();
    for i in 0..100 {
        let anns = synth_layout(&LayoutParams::default(), 100 + i).map_err(|e| e.to_string())?;
        let img = RasterImage::new(512, 512, 3, (0..512 * 512 * 3).map(|_| r.random::<u8>()).collect()).unwrap();
        let (fi, fa) = hflip(Some(&img), &anns, 512).map_err(|e| e.to_string())?;
        let (bi, ba) = hflip(fi.as_ref(), &fa, 512).map_err(|e| e.to_string())?;
        ensure!(
            bi.as_ref() == Some(&img) && bits(&ba) == bits(&anns),
            "pair {i}: hflip is not an involution"
        );
        if i < 20 {
            let a = render_annotation_plot(&fa, 512, 512, &style).unwrap();
            let b = render_annotation_plot(&anns, 512, 512, &style)
                .unwrap()
                .flipped_horizontally();
            ensure!(a == b, "pair {i}: render and flip do not commute");
        }
    }
    for _ in 0..200 {
        let t = r.random_range(1..=4u32);
        let (x, y) = (r.random_range(0..40u32), r.random_range(0..40u32));
        let (w, h) = (r.random_range(1..40u32), r.random_range(1..40u32));
        let style = PlotStyle {
            bbox_thickness: t,
            ..PlotStyle::default()
        };
        let ann = ShootAnnotation::new(BBox::new(x as f64, y as f64, w as f64, h as f64), vec![]);
        let img = render_annotation_plot(&[ann], 96, 96, &style).unwrap();
        let drawn = (0..96 * 96)
            .filter(|i| img.pixel(i % 96, i / 96) == style.bbox_color)
            .count();
        let mut want = 0;
        for py in y..y + h {
            for px in x..x + w {
                let depth = (px - x).min(x + w - 1 - px).min(py - y).min(y + h - 1 - py);
                want += (depth < t) as usize;
            }
        }
        ensure!(
            drawn == want,
            "box {x},{y},{w},{h} t={t}: {drawn} pixels vs oracle {want}"
        );
    }
    Ok("100 involutions, 20 commutations, 200 perimeters".into())
}

fn pipeline_protocol() -> Check {
    let stub = |id: String, split: Split, provenance: Provenance| ImageRecord {
        path: format!("{id}.png"),
        id,
        width: 512,
        height: 512,
        domain: "night".into(),
        split,
        provenance,
        annotations: vec![],
    };
    let mut records: Vec<ImageRecord> = Vec::new();
    records.extend((0..60).map(|i| stub(format!("real-{i}"), Split::Train, Provenance::Real)));
    records.extend((0..20).map(|i| stub(format!("realval-{i}"), Split::Val, Provenance::Real)));
    records.extend((0..60).map(|i| stub(format!("tr-{i}"), Split::Train, Provenance::Transferred)));
    records.extend((0..20).map(|i| stub(format!("trval-{i}"), Split::Val, Provenance::Transferred)));
    records.extend((0..1200).map(|i| stub(format!("gen-{i}"), Split::Pool, Provenance::Generated)));
    let base = DatasetManifest::new(vec![DomainTag::new("night", "night")], records);
    let plans = build_plans(&base, 3).map_err(|e| e.to_string())?;
    let totals: Vec<usize> = plans.iter().map(|p| p.target_total).collect();
    let labels: String = plans.iter().map(|p| p.label.as_str()).collect();
    ensure!(totals == [50, 50, 100, 150, 300, 550, 1050], "totals {totals:?}");
    ensure!(labels == "abcdefg", "labels {labels}");
    for p in &plans {
        ensure!(
            p.member_ids().count() == p.target_total,
            "plan {} has {} members",
            p.label,
            p.member_ids().count()
        );
    }

    let pool = DatasetManifest::new(
        vec![DomainTag::new("night", "night")],
        (0..20_704)
            .map(|i| stub(format!("p{i:05}"), Split::Pool, Provenance::Real))
            .collect(),
    );
    let pairs = enumerate_stage1_pairs(&pool, &default_presets(), None).map_err(|e| e.to_string())?;
    ensure!(pairs.len() == 165_632, "{} stage-1 pairs", pairs.len());
    let unique: std::collections::HashSet<&str> = pairs.iter().map(|p| p.id.as_str()).collect();
    ensure!(unique.len() == pairs.len(), "duplicate pair ids");

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let style = PlotStyle::default();
    let mut reqs = Vec::new();
    for i in 0..1000u64 {
        let anns = synth_layout(&LayoutParams::default(), 5000 + i).map_err(|e| e.to_string())?;
        reqs.push(GenerationRequest {
            id: format!("g{i:04}"),
            conditioning: render_annotation_plot(&anns, 512, 512, &style).unwrap(),
            conditioning_path: None,
            prompt: "vineyard rows, Daytime shooting".into(),
            seed: i,
            domain: "day".into(),
            source_id: Some(format!("s{i}")),
            source_annotations: anns,
        });
    }
    let mock = MockGenerator::new(MockMode::NoiseOverlay { amplitude: 10 });
    let out = generate_batch(&mock, &reqs, dir.path(), &RetryPolicy::default(), 4);
    ensure!(
        out.records.len() == 1000,
        "{} of 1000 generations succeeded",
        out.records.len()
    );
    let m = DatasetManifest::new(vec![DomainTag::new("day", "day")], out.records);
    let path = dir.path().join("generated.json");
    save_manifest(&m, &path).map_err(|e| e.to_string())?;
    let back = load_manifest_with(&path, &ValidationOptions::default()).map_err(|e| e.to_string())?;
    for (req, rec) in reqs.iter().zip(&back.records) {
        ensure!(rec.id == req.id, "order changed at {}", req.id);
        ensure!(
            bits(&rec.annotations) == bits(&req.source_annotations),
            "{}: annotations changed",
            req.id
        );
        ensure!(
            rec.provenance == Provenance::Generated,
            "{}: provenance {:?}",
            rec.id,
            rec.provenance
        );
    }
    Ok("plan totals exact, 165632 pairs, 1000 generations preserve annotations".into())
}

fn checkpoint_monitor() -> Check {
    let mut r = rng(9);
    let points: Vec<(u64, f64)> = (1..=60u64)
        .map(|i| {
            let step = i * 500;
            let t = step as f64 / 30_000.0;
            (
                step,
                0.45 - 0.25 * (1.0 - (-6.0 * t).exp()) + 0.08 * t * t + r.random_range(-0.01..0.01),
            )
        })
        .collect();
    let s = CheckpointSeries::from_points("lpips", Polarity::LowerIsBetter, &points).map_err(|e| e.to_string())?;
    let want = points.iter().fold(points[0], |b, p| if p.1 < b.1 { *p } else { b }).0;
    let got = select_best_checkpoint(&s).map_err(|e| e.to_string())?;
    ensure!(got == want, "best {got} vs global minimum {want}");
    let ties = CheckpointSeries::from_points(
        "lpips",
        Polarity::LowerIsBetter,
        &[(100, 0.5), (200, 0.3), (300, 0.3), (400, 0.4)],
    )
    .map_err(|e| e.to_string())?;
    ensure!(
        select_best_checkpoint(&ties).unwrap() == 200,
        "tie not resolved to earliest"
    );
    let up = CheckpointSeries::from_points("ssim", Polarity::HigherIsBetter, &[(1, 0.7), (2, 0.9), (3, 0.9)]).unwrap();
    ensure!(
        select_best_checkpoint(&up).unwrap() == 2,
        "higher-is-better tie not resolved to earliest"
    );
    Ok(format!("best step {got}"))
}

fn pca_checks() -> Check {
    let mut r = rng(10);
    let dir: Vec<f64> = (0..8).map(|_| r.random_range(-1.0..1.0)).collect();
    let rows: Vec<Vec<f64>> = (0..300)
        .map(|_| {
            let t: f64 = r.random_range(-5.0..5.0);
            dir.iter().map(|d| 2.0 + t * d).collect()
        })
        .collect();
    let p = pca_project(&FeatureSet::from_rows("r1", rows).unwrap(), 2).map_err(|e| e.to_string())?;
    let r1 = p.explained_variance_ratio[0];
    ensure!((r1 - 1.0).abs() <= 1e-9, "rank-1 ratio {r1}");
    let iso = FeatureSet::from_rows("iso", gaussian_rows(&mut r, 5000, 8, &[0.0; 8], 1.0)).unwrap();
    let p = pca_project(&iso, 2).map_err(|e| e.to_string())?;
    let top = &p.explained_variance_ratio;
    ensure!(
        top.iter().all(|v| (0.10..=0.15).contains(v)),
        "isotropic ratios {top:?}"
    );
    Ok(format!("rank-1 {r1:.12}, isotropic {:.4} {:.4}", top[0], top[1]))
}

fn walk(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn hermetic_run(dir: &Path) -> Result<(), String> {
    std::fs::write(
        dir.join("prompts.json"),
        r#"{"common":"vineyard rows, grapevine shoots","per_domain":{"night":"Nighttime shooting with artificial lighting","day":"Daytime shooting"}}"#,
    )
    .unwrap();
    let sh = |args: &[&str], stdout_to: &str| -> Result<(), String> {
        let out = Command::new(env!("CARGO_BIN_EXE_d4"))
            .current_dir(dir)
            .args(["--seed", "11"])
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!(
                "`d4 {}` exited {:?}: {}",
                args.join(" "),
                out.status.code(),
                String::from_utf8_lossy(&out.stderr)
            ));
        }
        std::fs::create_dir_all(dir.join("stdout")).unwrap();
        std::fs::write(dir.join("stdout").join(stdout_to), out.stdout).unwrap();
        Ok(())
    };
    sh(
        &["ingest", "--synthetic", "25", "--out", "data/night.json"],
        "ingest_night",
    )?;
    sh(
        &[
            "ingest",
            "--synthetic",
            "12",
            "--lighting",
            "day",
            "--domain",
            "day",
            "--out",
            "day/day.json",
        ],
        "ingest_day",
    )?;
    sh(
        &[
            "validate",
            "--manifest",
            "data/night.json",
            "--check-files",
            "--out",
            "reports/validate.json",
        ],
        "validate",
    )?;
    sh(
        &[
            "split",
            "--manifest",
            "data/night.json",
            "--fraction",
            "0.8",
            "--out-train",
            "data/train.json",
            "--out-val",
            "data/val.json",
        ],
        "split",
    )?;
    sh(
        &["plot", "--manifest", "data/train.json", "--out-dir", "plots", "--flip"],
        "plot",
    )?;
    sh(
        &[
            "canny",
            "--preset",
            "medium",
            "--manifest",
            "data/train.json",
            "--out-dir",
            "edges",
        ],
        "canny",
    )?;
    sh(
        &[
            "generate",
            "--manifest",
            "data/train.json",
            "--out-dir",
            "gen",
            "--prompts",
            "prompts.json",
            "--mock",
            "noise:6",
            "--per-record",
            "5",
        ],
        "generate",
    )?;
    sh(
        &[
            "select",
            "--target",
            "day/day.json",
            "--candidates",
            "gen/generated.json",
            "--out",
            "reports/gate.jsonl",
            "--accepted-out",
            "reports/accepted.txt",
        ],
        "select",
    )?;
    let gt =
        load_manifest_with(dir.join("data/night.json"), &ValidationOptions::default()).map_err(|e| e.to_string())?;
    let dets = simulate_detections(&gt, &DetectorSim::default(), 11);
    let f = std::fs::File::create(dir.join("dets.jsonl")).unwrap();
    write_detections_jsonl(std::io::BufWriter::new(f), &dets).map_err(|e| e.to_string())?;
    sh(
        &[
            "eval",
            "--gt",
            "data/night.json",
            "--dets",
            "dets.jsonl",
            "--out",
            "reports/eval.json",
            "--csv",
            "reports/eval.csv",
        ],
        "eval",
    )?;
    sh(
        &[
            "coco-export",
            "--manifest",
            "data/night.json",
            "--out",
            "reports/coco.json",
        ],
        "coco",
    )?;
    Ok(())
}

fn end_to_end() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    hermetic_run(a.path())?;
    hermetic_run(b.path())?;
    let (fa, fb) = (walk(a.path()), walk(b.path()));
    ensure!(fa.keys().eq(fb.keys()), "runs produced different file sets");
    let differing: Vec<_> = fa
        .iter()
        .filter(|(k, v)| fb[*k] != **v)
        .map(|(k, _)| k.display().to_string())
        .collect();
    ensure!(differing.is_empty(), "files differ between runs: {differing:?}");
    let generated = fa
        .keys()
        .filter(|k| k.starts_with("gen") && k.extension().is_some_and(|x| x == "png") && k.components().count() == 2)
        .count();
    ensure!(generated == 100, "{generated} generated images");
    let reports: serde_json::Value = serde_json::from_slice(&fa[Path::new("reports/eval.json")]).unwrap();
    let maps: Vec<f64> = reports
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["map"].as_f64().unwrap())
        .collect();
    ensure!(
        maps.len() == 2 && maps.iter().all(|m| *m > 0.0 && *m <= 1.0),
        "eval maps {maps:?}"
    );
    Ok(format!(
        "{} files byte-identical, mAP bbox {:.3} keypoint {:.3}",
        fa.len(),
        maps[0],
        maps[1]
    ))
}

fn main() {
    let outcomes = [
        criterion("oks_oracle", Some(1.0), oks_oracle),
        criterion("iou_oracle", Some(5.0), iou_oracle),
        criterion("map_oracle", Some(10.0), map_oracle),
        criterion("fid_analytic", Some(20.0), fid_analytic),
        criterion("kid_unbiasedness", Some(60.0), kid_unbiased),
        criterion("selection_gate", Some(5.0), selection_gate),
        criterion("canny", Some(10.0), canny_checks),
        criterion("raster_flip", None, raster_flip),
        criterion("pipeline_protocol", Some(120.0), pipeline_protocol),
        criterion("checkpoint_monitor", None, checkpoint_monitor),
        criterion("pca", None, pca_checks),
        criterion("end_to_end_hermetic_run", None, end_to_end),
    ];
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.ok).map(|o| o.name).collect();
    println!(
        "{} of {} criteria passed",
        outcomes.len() - failed.len(),
        outcomes.len()
    );
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
