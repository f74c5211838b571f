//! Acceptance checks. Runs without the libtest harness so every criterion
//! prints exactly one PASS/FAIL line whether or not it passes.

mod common;

use std::collections::{HashMap, HashSet, VecDeque};
use std::io::Read;
use std::process::Stdio;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use wildsynth_core::curation::{
    build_base_set, largest_remainder, stratified_subsample, stratum_counts, BaseImageRecord,
};
use wildsynth_core::editor::{
    mock_perturb, MockBackend, MockMode, MockOverride, MockStep, PerturbKind, Rect, RetryPolicy,
    Variant,
};
use wildsynth_core::eval::{
    self, auroc, class_weights, kfold_cv, stratified_folds, FeatureRecord, HeadConfig, Split,
    FEATURE_DIM,
};
use wildsynth_core::fixtures::{base_record, night_scene, textured_scene};
use wildsynth_core::orchestrator::{read_manifest, run_pipeline, PipelineConfig, SyntheticSource};
use wildsynth_core::qc::components::connected_components;
use wildsynth_core::qc::{diff_mask, evaluate_pair, gate, scene_scores, MaskSummary, SceneScore};
use wildsynth_core::report::{summarize, variant_breakdown};
use wildsynth_core::rng::seeded;
use wildsynth_core::{BBox, DayNight, FailReason, GatePath, ManifestEntry, QcParams, StepStatus};

type Outcome = Result<String, String>;

fn check(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(
        elapsed < limit,
        format!("took {elapsed:.2?}, limit {limit:?}"),
    )
}

// 1 -------------------------------------------------------------------------

fn gate_truth_table() -> Outcome {
    let start = Instant::now();
    let p = QcParams::default();
    let score = |raw, norm, ssim| SceneScore {
        raw_mae: raw,
        norm_mae: norm,
        ssim,
        scored_pixel_count: 1000,
        ssim_window_count: 100,
    };
    let mask = |area| MaskSummary {
        area_fraction: area,
        blob_count: 1,
        anchored: true,
    };
    let cases: [(SceneScore, f64, DayNight, bool, FailReason, GatePath); 10] = [
        (
            score(9.0, 7.0, 0.5),
            0.1,
            DayNight::Day,
            true,
            FailReason::Pass,
            GatePath::NormMaeOnly,
        ),
        (
            score(9.0, 7.000001, 0.85),
            0.1,
            DayNight::Day,
            true,
            FailReason::Pass,
            GatePath::SsimOnly,
        ),
        (
            score(9.0, 7.0, 0.85),
            0.1,
            DayNight::Day,
            true,
            FailReason::Pass,
            GatePath::Both,
        ),
        (
            score(9.0, 7.000001, 0.849999),
            0.1,
            DayNight::Day,
            false,
            FailReason::DayGateFail,
            GatePath::None,
        ),
        (
            score(5.0, 50.0, 0.1),
            0.1,
            DayNight::Night,
            true,
            FailReason::Pass,
            GatePath::NightMae,
        ),
        (
            score(5.000001, 0.0, 1.0),
            0.1,
            DayNight::Night,
            false,
            FailReason::NightGateFail,
            GatePath::None,
        ),
        (
            score(0.0, 0.0, 1.0),
            0.70,
            DayNight::Day,
            true,
            FailReason::Pass,
            GatePath::Both,
        ),
        (
            score(0.0, 0.0, 1.0),
            0.700001,
            DayNight::Day,
            false,
            FailReason::GlobalRerender,
            GatePath::None,
        ),
        (
            score(0.0, 0.0, 1.0),
            0.70,
            DayNight::Night,
            true,
            FailReason::Pass,
            GatePath::NightMae,
        ),
        (
            score(0.0, 0.0, 1.0),
            0.95,
            DayNight::Night,
            false,
            FailReason::GlobalRerender,
            GatePath::None,
        ),
    ];
    for (i, (s, area, dn, pass, reason, path)) in cases.iter().enumerate() {
        let v = gate(Some(s), &mask(*area), *dn, &p);
        check(
            v.pass == *pass && v.reason == *reason && v.gate_path == *path,
            format!(
                "case {i}: got {:?}/{:?}/{:?}",
                v.pass, v.reason, v.gate_path
            ),
        )?;
    }
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!(
        "{} boundary cases exact in {:.2?}",
        cases.len(),
        start.elapsed()
    ))
}

// 2 -------------------------------------------------------------------------

fn fixture_classification() -> Outcome {
    let start = Instant::now();
    let (w, h) = (256, 192);
    let p = QcParams::default();
    let bbox = BBox::new(0.35, 0.3, 0.3, 0.35).unwrap();
    let (bx0, _, bx1, _) = bbox.to_pixels(w, h);
    let mut rng = seeded(2);
    let mut total = 0;
    let mut wrong = Vec::new();
    for i in 0..250u64 {
        let dn = if i % 2 == 0 {
            DayNight::Day
        } else {
            DayNight::Night
        };
        let scene = match dn {
            DayNight::Day => textured_scene(w, h, 1000 + i),
            DayNight::Night => night_scene(w, h, 1000 + i),
        };
        let (kind, expected) = match i % 5 {
            0 => (PerturbKind::Identity, FailReason::Pass),
            1 => {
                let d: [i16; 3] = std::array::from_fn(|_| rng.random_range(-12..=12));
                let raw = d.iter().map(|v| v.abs() as f64).sum::<f64>() / 3.0;
                let expected = match dn {
                    DayNight::Day => FailReason::Pass,
                    DayNight::Night if raw <= 5.0 => FailReason::Pass,
                    DayNight::Night => FailReason::NightGateFail,
                };
                (PerturbKind::DcShift(d[0], d[1], d[2]), expected)
            }
            2 => (
                PerturbKind::InBoxEdit {
                    bbox,
                    texture_amp: rng.random_range(24..=96),
                },
                FailReason::Pass,
            ),
            3 => {
                // large noise patch entirely left or right of the box
                let pw = rng.random_range(70..=80);
                let ph = rng.random_range(140..=170);
                let x = if rng.random_bool(0.5) {
                    bx0 - 4 - pw
                } else {
                    bx1 + 4
                };
                let y = rng.random_range(0..=h - ph);
                let expected = match dn {
                    DayNight::Day => FailReason::DayGateFail,
                    DayNight::Night => FailReason::NightGateFail,
                };
                (
                    PerturbKind::LocalPatch {
                        rect: Rect::new(x, y, pw.min(w - x), ph),
                        noise_amp: 100,
                    },
                    expected,
                )
            }
            _ => (PerturbKind::GlobalRerender, FailReason::GlobalRerender),
        };
        let edit = mock_perturb(&scene, &kind).map_err(|e| e.to_string())?;
        let v = evaluate_pair(&scene, &edit, &bbox, dn, &p).map_err(|e| e.to_string())?;
        total += 1;
        if v.reason != expected || v.pass != (expected == FailReason::Pass) {
            wrong.push(format!("#{i} {kind:?} {dn}: {:?}", v.reason));
        }
    }
    check(
        wrong.is_empty(),
        format!(
            "{} of {total} disagree: {:?}",
            wrong.len(),
            &wrong[..wrong.len().min(5)]
        ),
    )?;
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!(
        "{total}/{total} pairs agree in {:.2?}",
        start.elapsed()
    ))
}

// 3 -------------------------------------------------------------------------

fn flood_fill_labels(plane: &[bool], w: usize, h: usize) -> (Vec<u32>, Vec<usize>) {
    let mut labels = vec![0u32; w * h];
    let mut areas = Vec::new();
    for start in 0..w * h {
        if !plane[start] || labels[start] != 0 {
            continue;
        }
        areas.push(0);
        let label = areas.len() as u32;
        labels[start] = label;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            areas[label as usize - 1] += 1;
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if plane[j] && labels[j] == 0 {
                        labels[j] = label;
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    (labels, areas)
}

fn components_match_flood_fill() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded(3);
    for case in 0..1000 {
        let w = rng.random_range(1..=64usize);
        let h = rng.random_range(1..=64usize);
        let density = rng.random_range(0.05..0.8);
        let plane: Vec<bool> = (0..w * h).map(|_| rng.random_bool(density)).collect();
        let got = connected_components(&plane, w as u32, h as u32);
        let (labels, areas) = flood_fill_labels(&plane, w, h);
        let got_areas: Vec<usize> = got.blobs.iter().map(|b| b.area).collect();
        check(
            got.labels == labels && got_areas == areas,
            format!("plane {case} ({w}x{h}) differs"),
        )?;
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("1000 planes identical in {:.2?}", start.elapsed()))
}

// 4 -------------------------------------------------------------------------

fn dc_shift_identity() -> Outcome {
    let bbox = BBox::new(0.35, 0.3, 0.3, 0.35).unwrap();
    let mut checked = 0;
    for seed in 0..4 {
        let scene = textured_scene(256, 192, 40 + seed);
        for d in -20i16..=20 {
            if d == 0 {
                continue;
            }
            // beyond the diff threshold the whole frame would count as
            // changed, so score those shifts against an empty mask
            let p = if d.abs() <= 12 {
                QcParams::default()
            } else {
                QcParams {
                    diff_threshold: 255,
                    ..QcParams::default()
                }
            };
            let edit =
                mock_perturb(&scene, &PerturbKind::DcShift(d, d, d)).map_err(|e| e.to_string())?;
            let mask = diff_mask(&scene, &edit, &bbox, &p).map_err(|e| e.to_string())?;
            let s = scene_scores(&scene, &edit, &mask, &p)
                .map_err(|e| e.to_string())?
                .ok_or("no scene pixels")?;
            check(
                s.raw_mae == d.abs() as f64,
                format!("delta {d}: raw {}", s.raw_mae),
            )?;
            check(
                s.norm_mae <= 1e-9,
                format!("delta {d}: norm {}", s.norm_mae),
            )?;
            checked += 1;
        }
    }
    Ok(format!("{checked} shifts, raw exact and norm <= 1e-9"))
}

// 5 -------------------------------------------------------------------------

fn sham_budget() -> Outcome {
    let bases = common::bases(191);
    let errored_steps = 5;
    let mut overrides = Vec::new();
    for b in bases.iter().take(31) {
        overrides.push(MockOverride {
            base_image_id: b.image_id.clone(),
            order_index: 0,
            step: MockStep::Perturb(PerturbKind::GlobalRerender),
        });
    }
    for (k, b) in bases.iter().skip(31).take(errored_steps).enumerate() {
        overrides.push(MockOverride {
            base_image_id: b.image_id.clone(),
            order_index: 1 + (k % 3) as u8,
            step: MockStep::Fail { transient: false },
        });
    }
    let backend = MockBackend::new(MockMode {
        overrides,
        ..MockMode::default()
    });
    let mut config = PipelineConfig::new("acceptance-budget", 5);
    config.retry = RetryPolicy::immediate();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let summary = run_pipeline(
        &bases,
        &SyntheticSource {
            width: 256,
            height: 192,
        },
        &backend,
        &config,
        &dir.path().join("m.jsonl"),
    )
    .map_err(|e| e.to_string())?;
    let expected_calls = 191 + 3 * 160 - errored_steps as u64;
    check(
        summary.sham_rejections == 31,
        format!("sham rejections {}", summary.sham_rejections),
    )?;
    check(
        summary.variants_skipped == 93,
        format!("skipped {}", summary.variants_skipped),
    )?;
    check(
        summary.calls_saved == 93,
        format!("calls saved {}", summary.calls_saved),
    )?;
    check(
        backend.calls() == expected_calls,
        format!("backend calls {} != {expected_calls}", backend.calls()),
    )?;
    check(
        summary.errored_steps == errored_steps,
        format!("errored steps {}", summary.errored_steps),
    )?;
    Ok(format!(
        "93 skipped, {} backend calls = 671 - {errored_steps} errored",
        backend.calls()
    ))
}

// 6 -------------------------------------------------------------------------

fn entry(
    base: &str,
    dn: DayNight,
    variant: Variant,
    status: StepStatus,
    pass: Option<bool>,
) -> ManifestEntry {
    ManifestEntry {
        run_id: "table".into(),
        timestamp: "2024-01-01T00:00:00Z".parse().unwrap(),
        base_image_id: base.into(),
        species: "elk".into(),
        day_night: dn,
        order_index: variant.order_index(),
        variant,
        severity: variant.severity(),
        status,
        pass,
        reason: pass.map(|p| {
            if p {
                FailReason::Pass
            } else {
                FailReason::DayGateFail
            }
        }),
        gate_path: pass.map(|p| if p { GatePath::Both } else { GatePath::None }),
        raw_mae: None,
        norm_mae: None,
        ssim: None,
        mask_area_fraction: None,
        error: None,
        params_fingerprint: QcParams::default().fingerprint(),
        template_version: "fixture".into(),
        seed: 0,
        backend_id: "fixture".into(),
        latency_ms: 0,
        attempts: 1,
    }
}

/// Day bases pass 80 / fail 17; night bases pass 80 / fail 14 with five
/// errored phenotype steps; ten further bases errored at the sham.
fn table1_fixture() -> Vec<ManifestEntry> {
    let mut out = Vec::new();
    let mut pass_budget: HashMap<DayNight, usize> =
        HashMap::from([(DayNight::Day, 207), (DayNight::Night, 186)]);
    let groups = [(DayNight::Day, 80, 17), (DayNight::Night, 80, 14)];
    let mut errored_left = 5;
    let mut n = 0;
    for (dn, passing, failing) in groups {
        for _ in 0..passing {
            let id = format!("b{n:03}");
            n += 1;
            out.push(entry(
                &id,
                dn,
                Variant::Sham,
                StepStatus::Generated,
                Some(true),
            ));
            for v in &Variant::ALL[1..] {
                if dn == DayNight::Night && errored_left > 0 {
                    errored_left -= 1;
                    out.push(entry(&id, dn, *v, StepStatus::Errored, None));
                    continue;
                }
                let budget = pass_budget.get_mut(&dn).unwrap();
                let pass = *budget > 0;
                *budget = budget.saturating_sub(1);
                out.push(entry(&id, dn, *v, StepStatus::Generated, Some(pass)));
            }
        }
        for _ in 0..failing {
            let id = format!("b{n:03}");
            n += 1;
            out.push(entry(
                &id,
                dn,
                Variant::Sham,
                StepStatus::Generated,
                Some(false),
            ));
            for v in &Variant::ALL[1..] {
                out.push(entry(&id, dn, *v, StepStatus::Skipped, None));
            }
        }
    }
    for _ in 0..10 {
        let id = format!("b{n:03}");
        n += 1;
        out.push(entry(
            &id,
            DayNight::Day,
            Variant::Sham,
            StepStatus::Errored,
            None,
        ));
    }
    out
}

/// 100 daytime shams: 74 pass both arms, 4 pass on SSIM only, 22 fail.
fn table2_sham_fixture() -> Vec<ManifestEntry> {
    (0..100)
        .map(|i| {
            let mut e = entry(
                &format!("s{i:03}"),
                DayNight::Day,
                Variant::Sham,
                StepStatus::Generated,
                Some(i < 78),
            );
            let (path, ssim) = match i {
                0..74 => (GatePath::Both, 0.95),
                74..78 => (GatePath::SsimOnly, 0.90),
                _ => (GatePath::None, 0.7318),
            };
            e.gate_path = Some(path);
            e.ssim = Some(ssim);
            e
        })
        .collect()
}

fn report_arithmetic() -> Outcome {
    let t = summarize(&table1_fixture());
    let got = [
        t.passes.count_text(),
        t.sham_rejections.ratio_text(),
        t.day.percent_text(),
        t.night.percent_text(),
    ];
    let want = ["553 (83%)", "31/191 (16%)", "85%", "81%"];
    check(got == want, format!("table 1 gave {got:?}"))?;
    check(
        t.variants_skipped == 93 && t.bases_seen == 201,
        format!("skipped {} bases {}", t.variants_skipped, t.bases_seen),
    )?;

    let rows = variant_breakdown(&table2_sham_fixture(), true);
    let sham = rows
        .iter()
        .find(|r| r.variant == Variant::Sham)
        .ok_or("no sham row")?;
    let got = (
        sham.pass.percent_text(),
        sham.norm_mae_only,
        sham.ssim_only,
        sham.both,
        sham.mean_ssim.clone(),
    );
    check(
        got == ("78%".into(), 0, 4, 74, Some("0.900".into())),
        format!("table 2 sham row {got:?}"),
    )?;
    Ok("553 (83%) | 31/191 (16%) | day 85% | night 81% | sham 78% / 0 / 4 / 74 / 0.900".into())
}

// 7 -------------------------------------------------------------------------

fn record(id: &str, species: &str, dn: DayNight, month: u32, bbox: BBox) -> BaseImageRecord {
    base_record(id, species, dn, Some(month), bbox)
}

fn sampling_ratios() -> Outcome {
    let center = BBox::new(0.4, 0.4, 0.2, 0.2).unwrap();
    let corner = BBox::new(0.0, 0.0, 0.1, 0.1).unwrap();
    let pool = [
        record("center.jpg", "elk", DayNight::Day, 6, center),
        record("corner.jpg", "elk", DayNight::Day, 6, corner),
    ];
    check(
        pool[0].placement_weight() == 0.6 && pool[1].placement_weight() == 0.1,
        "fixture weights",
    )?;
    let trials = 10_000;
    let mut hits = 0;
    for seed in 0..trials {
        let pick = build_base_set(&pool, 1, seed).map_err(|e| e.to_string())?;
        hits += (pick[0].image_id == "center.jpg") as usize;
    }
    let freq = hits as f64 / trials as f64;
    check(
        (freq - 6.0 / 7.0).abs() <= 0.02,
        format!("frequency {freq:.4}"),
    )?;

    // exact quotas for the 60/30/10 layout
    let mut base = Vec::new();
    for (k, (n, species)) in [(60, "elk"), (30, "raccoon"), (10, "gray wolf")]
        .into_iter()
        .enumerate()
    {
        for i in 0..n {
            base.push(record(
                &format!("q{k}-{i}.jpg"),
                species,
                DayNight::Day,
                7,
                center,
            ));
        }
    }
    let counts = stratum_counts(&stratified_subsample(&base, 10, 1).map_err(|e| e.to_string())?);
    let mut got: Vec<usize> = counts.values().copied().collect();
    got.sort_unstable_by(|a, b| b.cmp(a));
    check(got == [6, 3, 1], format!("60/30/10 quotas {got:?}"))?;

    // Hamilton property on random layouts
    let mut rng = seeded(7);
    let species = ["elk", "raccoon", "gray wolf", "mule deer"];
    for case in 0..200 {
        let mut base = Vec::new();
        for (s, sp) in species.iter().enumerate() {
            for dn in [DayNight::Day, DayNight::Night] {
                let size = rng.random_range(0..25);
                for i in 0..size {
                    base.push(record(
                        &format!("r{s}-{dn}-{i}.jpg"),
                        sp,
                        dn,
                        1 + (i % 12) as u32,
                        center,
                    ));
                }
            }
        }
        if base.is_empty() {
            continue;
        }
        let n = rng.random_range(0..=base.len());
        let sizes = stratum_counts(&base);
        let got = stratum_counts(&stratified_subsample(&base, n, case).map_err(|e| e.to_string())?);
        let total = base.len();
        let mut sum = 0;
        let mut raised = Vec::new();
        let mut kept = Vec::new();
        for (key, &size) in &sizes {
            let q = got.get(key).copied().unwrap_or(0);
            sum += q;
            let floor = size * n / total;
            let rem = size * n % total;
            check(
                q == floor || q == floor + 1,
                format!(
                    "case {case}: quota {q} for exact {}",
                    size as f64 * n as f64 / total as f64
                ),
            )?;
            if q == floor + 1 {
                raised.push(rem)
            } else {
                kept.push(rem)
            }
        }
        check(sum == n, format!("case {case}: quotas sum {sum} != {n}"))?;
        let min_raised = raised.iter().min().copied().unwrap_or(usize::MAX);
        let max_kept = kept.iter().max().copied().unwrap_or(0);
        check(
            raised.is_empty() || min_raised >= max_kept,
            format!("case {case}: remainder order violated"),
        )?;
    }
    check(
        largest_remainder(&[80, 20], 10) == [8, 2],
        "80/20 species quotas",
    )?;
    Ok(format!(
        "0.6-candidate frequency {freq:.4} (6/7 = {:.4}); quotas exact",
        6.0 / 7.0
    ))
}

// 8 -------------------------------------------------------------------------

fn pairwise_auroc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut num, mut den) = (0u64, 0u64);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                den += 2;
                num += if si > sj {
                    2
                } else if si == sj {
                    1
                } else {
                    0
                };
            }
        }
    }
    num as f64 / den as f64
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    d / na.max(nb)
}

fn eval_oracles() -> Outcome {
    let mut rng = seeded(8);
    for case in 0..100 {
        let n = rng.random_range(2..300);
        let scores: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0..30) as f64 * 0.1)
            .collect();
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_bool(0.3) as u8).collect();
        labels[0] = 0;
        labels[1] = 1;
        let a = auroc(&scores, &labels).map_err(|e| e.to_string())?;
        check(
            a == pairwise_auroc(&scores, &labels),
            format!("auroc case {case}"),
        )?;
    }

    // linear head: full gradient at 10 random points
    let n = 24;
    let x = Array2::from_shape_fn((n, FEATURE_DIM), |_| rng.random_range(-1.0..1.0));
    let y = Array1::from_shape_fn(n, |i| (i % 3 == 0) as u8 as f64);
    let obj = eval::linear::Objective::new(x.view(), y.view(), 1e-2).map_err(|e| e.to_string())?;
    let h = 1e-6;
    let mut worst_linear: f64 = 0.0;
    for _ in 0..10 {
        let w = Array1::from_shape_fn(FEATURE_DIM, |_| rng.random_range(-0.1..0.1));
        let b = rng.random_range(-1.0..1.0);
        let (gw, gb) = obj.gradient(&w, b);
        let mut fd = Vec::with_capacity(FEATURE_DIM + 1);
        for j in 0..FEATURE_DIM {
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp[j] += h;
            wm[j] -= h;
            fd.push((obj.loss(&wp, b) - obj.loss(&wm, b)) / (2.0 * h));
        }
        fd.push((obj.loss(&w, b + h) - obj.loss(&w, b - h)) / (2.0 * h));
        let mut g = gw.to_vec();
        g.push(gb);
        worst_linear = worst_linear.max(rel_err(&g, &fd));
    }
    check(
        worst_linear < 1e-5,
        format!("linear gradient rel-err {worst_linear:e}"),
    )?;

    // MLP head: sampled coordinates of every parameter block
    let c = class_weights(y.view()).map_err(|e| e.to_string())?;
    let mut model = eval::MlpModel::init(FEATURE_DIM, 256, 9);
    model.b1.mapv_inplace(|_| rng.random_range(-0.1..0.1));
    let g = model.gradient(x.view(), y.view(), c.view(), 1e-3);
    let loss = |m: &eval::MlpModel| m.loss(x.view(), y.view(), c.view(), 1e-3);
    let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
    for k in 0..300 {
        let (mut p, mut m) = (model.clone(), model.clone());
        let a = match k % 3 {
            0 => {
                let (i, j) = (rng.random_range(0..FEATURE_DIM), rng.random_range(0..256));
                p.w1[[i, j]] += h;
                m.w1[[i, j]] -= h;
                g.w1[[i, j]]
            }
            1 => {
                let j = rng.random_range(0..256);
                p.w2[j] += h;
                m.w2[j] -= h;
                g.w2[j]
            }
            _ => {
                let j = rng.random_range(0..256);
                p.b1[j] += h;
                m.b1[j] -= h;
                g.b1[j]
            }
        };
        analytic.push(a);
        numeric.push((loss(&p) - loss(&m)) / (2.0 * h));
    }
    let mlp_err = rel_err(&analytic, &numeric);
    check(mlp_err < 1e-4, format!("mlp gradient rel-err {mlp_err:e}"))?;

    // 5-fold CV determinism
    let records: Vec<FeatureRecord> = (0..60)
        .map(|i| FeatureRecord {
            id: format!("cv{i}"),
            split: Split::TrainSynthetic,
            label: (i % 3 == 0) as u8,
            vector: (0..FEATURE_DIM)
                .map(|j| {
                    ((i * 7 + j * 13) % 17) as f64 / 17.0
                        + if j == 0 && i % 3 == 0 { 0.4 } else { 0.0 }
                })
                .collect(),
        })
        .collect();
    let refs: Vec<&FeatureRecord> = records.iter().collect();
    let labels: Vec<u8> = records.iter().map(|r| r.label).collect();
    check(
        stratified_folds(&labels, 5, 11).unwrap() == stratified_folds(&labels, 5, 11).unwrap(),
        "fold assignment differs",
    )?;
    let cfg = HeadConfig {
        epochs: 5,
        hidden_units: 16,
        ..HeadConfig::mlp()
    };
    let a = kfold_cv(&refs, 5, &cfg, 11).map_err(|e| e.to_string())?;
    let b = kfold_cv(&refs, 5, &cfg, 11).map_err(|e| e.to_string())?;
    check(a == b, "cv results differ between identical runs")?;
    Ok(format!("auroc exact on 100 sets; grad rel-err linear {worst_linear:.1e}, mlp {mlp_err:.1e}; cv deterministic"))
}

// 9 -------------------------------------------------------------------------

/// Each class is two Gaussian clusters on opposite diagonals of the first
/// two dimensions; the other 766 dimensions are low-variance nuisance.
fn xor_clusters(n_per_cluster: usize, seed: u64) -> Vec<FeatureRecord> {
    let mut rng = seeded(seed);
    let signal = Normal::new(0.0, 1.0).unwrap();
    let nuisance = Normal::new(0.0, 0.25).unwrap();
    let mut out = Vec::new();
    for (k, (sx, sy)) in [(1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)]
        .into_iter()
        .enumerate()
    {
        let label = (k >= 2) as u8;
        for i in 0..n_per_cluster {
            let mut vector: Vec<f64> = (0..FEATURE_DIM)
                .map(|_| nuisance.sample(&mut rng))
                .collect();
            vector[0] = 3.0 * sx + signal.sample(&mut rng);
            vector[1] = 3.0 * sy + signal.sample(&mut rng);
            out.push(FeatureRecord {
                id: format!("c{k}-{i}"),
                split: Split::TrainSynthetic,
                label,
                vector,
            });
        }
    }
    out
}

fn mlp_beats_linear() -> Outcome {
    let train = xor_clusters(200, 91);
    let test: Vec<FeatureRecord> = xor_clusters(100, 92)
        .into_iter()
        .map(|r| FeatureRecord {
            split: Split::TestReal,
            ..r
        })
        .collect();
    let all: Vec<FeatureRecord> = train.into_iter().chain(test).collect();
    let lin = eval::evaluate(
        &all,
        &HeadConfig {
            seed: 1,
            ..HeadConfig::linear()
        },
        None,
    )
    .map_err(|e| e.to_string())?;
    let mlp = eval::evaluate(
        &all,
        &HeadConfig {
            seed: 1,
            ..HeadConfig::mlp()
        },
        None,
    )
    .map_err(|e| e.to_string())?;
    let (l, m) = (lin.auroc.unwrap(), mlp.auroc.unwrap());
    check(m >= l + 0.10, format!("mlp {m:.3} vs linear {l:.3}"))?;
    Ok(format!(
        "held-out AUROC mlp {m:.3} vs linear {l:.3} (gap {:.3})",
        m - l
    ))
}

// 10 ------------------------------------------------------------------------

/// Returns (outcome, counts_toward_exit_status).
fn throughput() -> (Outcome, bool) {
    let (w, h) = (1920, 1080);
    let p = QcParams::default();
    let bbox = BBox::new(0.35, 0.3, 0.3, 0.35).unwrap();
    let pairs: Vec<_> = (0..8u64)
        .map(|i| {
            let scene = textured_scene(w, h, 500 + i);
            let edit = mock_perturb(
                &scene,
                &PerturbKind::InBoxEdit {
                    bbox,
                    texture_amp: 48,
                },
            )
            .unwrap();
            (scene, edit)
        })
        .collect();
    let qc = |(a, b): &(wildsynth_core::ImageBuffer, wildsynth_core::ImageBuffer)| {
        evaluate_pair(a, b, &bbox, DayNight::Day, &p).unwrap()
    };
    qc(&pairs[0]);
    let mut times: Vec<Duration> = pairs
        .iter()
        .map(|pair| {
            let t = Instant::now();
            qc(pair);
            t.elapsed()
        })
        .collect();
    times.sort();
    let median = times[times.len() / 2];
    if median >= Duration::from_millis(250) {
        return (
            Err(format!("single pair median {median:.2?} >= 250 ms")),
            true,
        );
    }

    let work: Vec<usize> = (0..32).map(|i| i % pairs.len()).collect();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let t = Instant::now();
        pool.install(|| {
            use rayon::prelude::*;
            work.par_iter().for_each(|&i| {
                qc(&pairs[i]);
            })
        });
        t.elapsed()
    };
    let one = run(1);
    let eight = run(8);
    let speedup = one.as_secs_f64() / eight.as_secs_f64();
    let cores = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let detail =
        format!("single pair median {median:.2?}; 8 workers {speedup:.2}x on {cores} core(s)");
    if speedup >= 6.0 {
        (Ok(detail), true)
    } else {
        // scaling cannot be demonstrated on a machine with fewer than 8 cores
        (Err(format!("{detail}, need >= 6x")), cores >= 8)
    }
}

// 11 ------------------------------------------------------------------------

fn read_call_log(path: &std::path::Path) -> Vec<(String, u8)> {
    let mut s = String::new();
    if let Ok(mut f) = std::fs::File::open(path) {
        f.read_to_string(&mut s).unwrap();
    }
    s.lines()
        .filter_map(|l| {
            let (b, o) = l.split_once('\t')?;
            Some((b.to_string(), o.parse().ok()?))
        })
        .collect()
}

fn crash_safe_resume() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let n = 50;
    let base_set = common::write_bases(dir.path(), &common::bases(n));
    let config = common::write_config(dir.path(), "in_flight = 3\n");
    let manifest = dir.path().join("manifest.jsonl");
    let cmd = |log: &std::path::Path| {
        let mut c = common::bin();
        c.args([
            "run",
            "--synthetic",
            "256x192",
            "--seed",
            "11",
            "--base-set",
        ])
        .arg(&base_set)
        .arg("--config")
        .arg(&config)
        .arg("--manifest")
        .arg(&manifest)
        .arg("--call-log")
        .arg(log)
        .stdout(Stdio::piped())
        .stderr(Stdio::null());
        c
    };
    let (log1, log2) = (dir.path().join("calls1"), dir.path().join("calls2"));
    let mut child = cmd(&log1)
        .args(["--mock-delay-ms", "30"])
        .spawn()
        .map_err(|e| e.to_string())?;
    let start = Instant::now();
    loop {
        let lines = std::fs::read_to_string(&manifest)
            .map(|s| s.lines().count())
            .unwrap_or(0);
        if lines >= 60 {
            break;
        }
        if child.try_wait().map_err(|e| e.to_string())?.is_some()
            || start.elapsed() > Duration::from_secs(60)
        {
            return Err("first run ended before it could be killed".into());
        }
        std::thread::sleep(Duration::from_millis(5));
    }
    child.kill().map_err(|e| e.to_string())?;
    child.wait().map_err(|e| e.to_string())?;
    let snapshot = read_manifest(&manifest).map_err(|e| e.to_string())?;
    let recorded: HashSet<(String, u8)> = snapshot
        .iter()
        .map(|e| (e.base_image_id.clone(), e.order_index))
        .collect();

    let out = cmd(&log2).output().map_err(|e| e.to_string())?;
    check(out.status.success(), "restart failed")?;
    let resent: Vec<_> = read_call_log(&log2)
        .into_iter()
        .filter(|k| recorded.contains(k))
        .collect();
    check(
        resent.is_empty(),
        format!(
            "{} duplicate backend calls: {:?}",
            resent.len(),
            &resent[..resent.len().min(3)]
        ),
    )?;
    let entries = read_manifest(&manifest).map_err(|e| e.to_string())?;
    let keys: HashSet<_> = entries
        .iter()
        .map(|e| (e.base_image_id.clone(), e.order_index))
        .collect();
    check(
        entries.len() == 4 * n && keys.len() == 4 * n,
        format!("final manifest has {} entries", entries.len()),
    )?;
    Ok(format!(
        "killed after {} of {} steps; restart sent {} calls, 0 duplicates",
        recorded.len(),
        4 * n,
        read_call_log(&log2).len()
    ))
}

fn main() {
    let criteria: Vec<(u8, &str, Box<dyn Fn() -> (Outcome, bool)>)> = vec![
        (
            1,
            "QC gate truth table",
            Box::new(|| (gate_truth_table(), true)),
        ),
        (
            2,
            "fixture classification",
            Box::new(|| (fixture_classification(), true)),
        ),
        (
            3,
            "connected components vs flood fill",
            Box::new(|| (components_match_flood_fill(), true)),
        ),
        (
            4,
            "DC-shift identity",
            Box::new(|| (dc_shift_identity(), true)),
        ),
        (
            5,
            "sham pre-filter budget",
            Box::new(|| (sham_budget(), true)),
        ),
        (
            6,
            "report arithmetic",
            Box::new(|| (report_arithmetic(), true)),
        ),
        (7, "sampling ratios", Box::new(|| (sampling_ratios(), true))),
        (8, "eval oracles", Box::new(|| (eval_oracles(), true))),
        (
            9,
            "MLP over linear gap",
            Box::new(|| (mlp_beats_linear(), true)),
        ),
        (10, "QC throughput", Box::new(throughput)),
        (
            11,
            "crash-safe resume",
            Box::new(|| (crash_safe_resume(), true)),
        ),
    ];
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        let (outcome, binding) = run();
        match outcome {
            Ok(detail) => println!("acceptance {id:>2} PASS  {name}: {detail}"),
            Err(detail) => {
                println!("acceptance {id:>2} FAIL  {name}: {detail}");
                if binding {
                    failed.push(id);
                }
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
}
