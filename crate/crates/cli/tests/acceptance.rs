//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails.

mod support;

use std::collections::HashMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use support::*;
use textforge_core::annotator::{filter_response, AnnotatorResponse, Exchange};
use textforge_core::dataset::{compute_stats, read_manifest, Method, TamperRecord};
use textforge_core::forge::{forge_corpus, ForgeConfig, ForgeMethod};
use textforge_core::imaging::{render_fused_mask, BBox, BinaryMask, ImageBuf};
use textforge_core::metrics::{classify, detection_prf, score_sample_with, ScoreExtractor, Similarity};
use textforge_core::prompts::{build_grounding_prompt, normalize_box};
use textforge_core::robustness::Distortion;
use textforge_core::tamper::{poisson_blend, SolverParams};
use textforge_core::AUTHENTIC_DESCRIPTION;

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Option<Duration>,
    run: fn(),
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "fused-mask exactness", limit: Some(Duration::from_secs(5)), run: fused_mask_exactness },
        Criterion { id: 2, name: "poisson solver correctness", limit: Some(Duration::from_secs(10)), run: poisson_solver },
        Criterion { id: 3, name: "metric formula reproduction", limit: None, run: metric_formula },
        Criterion { id: 4, name: "classification rule", limit: None, run: classification_rule },
        Criterion { id: 5, name: "filter gate", limit: None, run: filter_gate },
        Criterion { id: 6, name: "grounding prompt", limit: None, run: grounding_prompt },
        Criterion { id: 7, name: "detection evaluation", limit: None, run: detection_evaluation },
        Criterion { id: 8, name: "forged-area statistic", limit: None, run: forged_area },
        Criterion { id: 9, name: "robustness harness", limit: Some(Duration::from_secs(60)), run: robustness_harness },
        Criterion { id: 10, name: "end-to-end pipeline smoke", limit: Some(Duration::from_secs(60)), run: pipeline_smoke },
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.run));
        let elapsed = start.elapsed();
        let verdict = match (&result, c.limit) {
            (Err(e), _) => Err(panic_message(e.as_ref())),
            (Ok(()), Some(limit)) if elapsed > limit => Err(format!("took longer than {limit:?}")),
            _ => Ok(()),
        };
        let limit = c.limit.map_or(String::new(), |l| format!(", limit {}s", l.as_secs()));
        match verdict {
            Ok(()) => println!("criterion {:>2} PASS  {} ({:.2}s{limit})", c.id, c.name, elapsed.as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {} ({:.2}s{limit}): {msg}", c.id, c.name, elapsed.as_secs_f64());
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn panic_message(e: &(dyn std::any::Any + Send)) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panicked".into())
}

fn fused_mask_exactness() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let (w, h) = (rng.gen_range(1..64), rng.gen_range(1..64));
        let image = ImageBuf::from_fn(w, h, |_, _| rng.gen());
        let bits: Vec<u8> = (0..w * h).map(|_| if rng.gen_bool(0.3) { 255 } else { 0 }).collect();
        let mask = BinaryMask::new(w, h, bits.clone()).unwrap();
        let fused = render_fused_mask(&image, &mask, 0.5, 0.5).unwrap();
        for y in 0..h {
            for x in 0..w {
                let m = bits[(y * w + x) as usize] as f64;
                let expect = image.pixel(x, y).map(|v| (0.5 * v as f64 + 0.5 * m).round().clamp(0.0, 255.0) as u8);
                assert_eq!(fused.pixel(x, y), expect, "pixel ({x},{y})");
            }
        }
    }
}

/// Dense Gaussian elimination on the explicitly assembled blend system for one channel.
fn dense_blend(target: &ImageBuf, patch: &ImageBuf, origin: (u32, u32), c: usize) -> Vec<f64> {
    let (w, h) = (patch.width() as usize, patch.height() as usize);
    let (iw, ih) = (w - 2, h - 2);
    let n = iw * ih;
    let p = |x: usize, y: usize| patch.pixel(x as u32, y as u32)[c] as f64;
    let t = |x: usize, y: usize| target.pixel(origin.0 + x as u32, origin.1 + y as u32)[c] as f64;
    let mut a = vec![vec![0.0; n + 1]; n];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let k = (y - 1) * iw + (x - 1);
            a[k][k] = 4.0;
            for (nx, ny) in [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)] {
                a[k][n] += p(x, y) - p(nx, ny);
                if nx == 0 || ny == 0 || nx == w - 1 || ny == h - 1 {
                    a[k][n] += t(nx, ny);
                } else {
                    a[k][(ny - 1) * iw + (nx - 1)] = -1.0;
                }
            }
        }
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                let pivot_row = a[col].clone();
                for (v, pv) in a[row].iter_mut().zip(&pivot_row).skip(col) {
                    *v -= f * pv;
                }
            }
        }
    }
    (0..n).map(|k| a[k][n] / a[k][k]).collect()
}

fn poisson_solver() {
    let params = SolverParams::default();
    // (a) constant patch into a constant target
    let target = ImageBuf::filled(20, 20, [90, 140, 200]);
    let patch = ImageBuf::filled(8, 6, [90, 140, 200]);
    let r = poisson_blend(&target, &patch, (5, 7), &params).unwrap();
    assert_eq!(r.image, target, "constant case changed the target");

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    // (b) ten random 5x5 cases against the dense solve
    for case in 0..10 {
        let target = ImageBuf::from_fn(9, 9, |_, _| rng.gen());
        let patch = ImageBuf::from_fn(5, 5, |_, _| rng.gen());
        let origin = (rng.gen_range(0..=4), rng.gen_range(0..=4));
        let r = poisson_blend(&target, &patch, origin, &params).unwrap();
        for c in 0..3 {
            let dense = dense_blend(&target, &patch, origin, c);
            let err = r.solution[c].iter().zip(&dense).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err <= 1e-4, "5x5 case {case} channel {c}: max error {err}");
        }
    }
    // (c) residual on 12x12 blends
    for case in 0..10 {
        let target = ImageBuf::from_fn(30, 30, |x, y| [(x * 8) as u8, (y * 8) as u8, rng.gen()]);
        let patch = ImageBuf::from_fn(12, 12, |_, _| rng.gen());
        let origin = (rng.gen_range(0..=18), rng.gen_range(0..=18));
        let r = poisson_blend(&target, &patch, origin, &params).unwrap();
        assert!(r.max_residual <= 1e-3, "12x12 case {case}: residual {}", r.max_residual);
    }
}

struct Stub {
    acc: f64,
    sim: f64,
}

impl ScoreExtractor for Stub {
    fn ocr_accuracy(&self, _: &str, _: &str) -> f64 {
        self.acc
    }
    fn paragraph_similarity(&self, _: &str, _: &str) -> Similarity {
        Similarity {
            value: self.sim,
            degenerate: false,
        }
    }
}

fn tampered_record() -> TamperRecord {
    let mut r = TamperRecord::authentic("x", "images/x.png", textforge_core::Split::Test);
    r.method = Method::CopyMove;
    r.mask = Some("masks/x.png".into());
    r.gt_ocr = Some("TOTAL".into());
    r.description = "The tampered text is \"TOTAL\". The font is thicker.".into();
    r.boxes = vec![BBox::new(0, 0, 4, 4)];
    r
}

fn metric_formula() {
    let rec = tampered_record();
    let authentic = TamperRecord::authentic("a", "images/a.png", textforge_core::Split::Test);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let stub = Stub {
            acc: rng.gen_range(0.0..=1.0),
            sim: rng.gen_range(-1.0..=1.0),
        };
        let s = score_sample_with("The tampered text is \"T0TAL\". Font.", &rec, &stub, 3).unwrap();
        assert!((s.final_score - (0.3 * stub.acc + 0.7 * stub.sim)).abs() <= 1e-12);
        assert_eq!((s.acc_ocr, s.sim_para), (stub.acc, stub.sim));

        let missed = score_sample_with(AUTHENTIC_DESCRIPTION, &rec, &stub, 3).unwrap();
        assert_eq!((missed.sim_para, missed.acc_ocr, missed.final_score), (0.0, 0.0, 0.0));
        let false_alarm = score_sample_with("The tampered text is \"X\".", &authentic, &stub, 3).unwrap();
        assert_eq!((false_alarm.sim_para, false_alarm.final_score), (0.0, 0.0));
    }
}

fn classification_rule() {
    assert!(!classify(AUTHENTIC_DESCRIPTION));
    let chars: Vec<char> = AUTHENTIC_DESCRIPTION.chars().collect();
    let alphabet: Vec<char> = "abcxyzT .!?".chars().collect();
    let mut variants = Vec::new();
    for i in 0..=chars.len() {
        if i < chars.len() {
            let mut d = chars.clone();
            d.remove(i);
            variants.push(d);
        }
        for &c in &alphabet {
            let mut ins = chars.clone();
            ins.insert(i, c);
            variants.push(ins);
            if i < chars.len() {
                let mut sub = chars.clone();
                sub[i] = c;
                variants.push(sub);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..500 {
        let mut v = chars.clone();
        for _ in 0..3 {
            let i = rng.gen_range(0..v.len());
            v[i] = alphabet[rng.gen_range(0..alphabet.len())];
        }
        variants.push(v);
    }
    for v in &variants {
        let s: String = v.iter().collect();
        assert!(!classify(&s), "{s:?} classified tampered");
    }
    assert!(classify("The tampered text is \"TOTAL\". The font strokes are thicker than the rest."));
    assert!(classify("Yes. The tampered text is \"LOT 7\"."));
    // four substitutions cross the boundary
    assert!(classify("There is no tampered text in thXX imXX."));
}

fn filter_gate() {
    let gt: String = "ABCDEFGHIJ".repeat(10);
    let mut kept = Vec::new();
    for (edits, expect_acc) in [(21, 0.79), (20, 0.80), (19, 0.81)] {
        let read: String = gt.chars().enumerate().map(|(i, c)| if i < edits { 'z' } else { c }).collect();
        let raw = format!("The tampered text is \"{read}\". The word {read} looks pasted onto the line.");
        let d = filter_response(&AnnotatorResponse::parse(&raw), &gt).unwrap();
        assert!((d.ocr_accuracy - expect_acc).abs() < 1e-12, "measured {}", d.ocr_accuracy);
        if d.kept {
            assert!(d.final_description.contains(&gt), "kept reply lacks gt_ocr");
            assert!(!d.final_description.contains(&read), "kept reply keeps the annotator's OCR");
        } else {
            assert!(d.final_description.is_empty());
        }
        kept.push(d.kept);
    }
    assert_eq!(kept, [false, true, true]);
}

fn grounding_prompt() {
    let golden = [
        ((500, 250, 1500, 750), (2000, 1000), "The suspected tampered text <box>[[250, 250, 750, 750]]</box>"),
        ((0, 0, 640, 480), (640, 480), "The suspected tampered text <box>[[0, 0, 1000, 1000]]</box>"),
        ((123, 45, 381, 222), (640, 480), "The suspected tampered text <box>[[192, 94, 595, 463]]</box>"),
    ];
    for ((a, b, c, d), (w, h), text) in golden {
        assert_eq!(build_grounding_prompt(&BBox::new(a, b, c, d), w, h).unwrap().text, text);
    }
    let cli = run_ok(&["render-prompt", "grounding", "--box", "500,250,1500,750", "--size", "2000x1000"]);
    assert_eq!(cli.trim_end(), golden[0].2);

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let (w, h) = (rng.gen_range(2..800u32), rng.gen_range(2..800u32));
        let x0 = rng.gen_range(0..w - 1);
        let y0 = rng.gen_range(0..h - 1);
        let b = BBox::new(x0, y0, rng.gen_range(x0 + 1..=w), rng.gen_range(y0 + 1..=h));
        let k = rng.gen_range(2..6u32);
        let scaled = BBox::new(b.x_min * k, b.y_min * k, b.x_max * k, b.y_max * k);
        let n1 = normalize_box(&b, w, h).unwrap();
        let n2 = normalize_box(&scaled, w * k, h * k).unwrap();
        for (p, q) in [(n1.x_min, n2.x_min), (n1.y_min, n2.y_min), (n1.x_max, n2.x_max), (n1.y_max, n2.y_max)] {
            assert!(p.abs_diff(q) <= 1, "{b:?} in {w}x{h} scaled by {k}: {n1:?} vs {n2:?}");
        }
    }
}

fn detection_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    forge_corpus(
        &ForgeConfig {
            tampered: 6,
            authentic: 4,
            seed: 7,
            ..Default::default()
        },
        &corpus,
    )
    .unwrap();
    let m = read_manifest(corpus.join("manifest.jsonl")).unwrap();
    let lines: String = m
        .records
        .iter()
        .map(|r| serde_json::json!({"id": r.id, "boxes": r.boxes}).to_string() + "\n")
        .collect();
    let pred = dir.path().join("boxes.jsonl");
    fs::write(&pred, lines).unwrap();
    let out = dir.path().join("det.json");
    run_ok(&["detect-eval", "--pred", p(&pred), "--manifest", p(&corpus.join("manifest.jsonl")), "--out", p(&out), "--iou", "0.5"]);
    let s = &read_json(&out)["scores"];
    assert_eq!((s["precision"].as_f64(), s["recall"].as_f64(), s["f1"].as_f64()), (Some(1.0), Some(1.0), Some(1.0)));

    let third = detection_prf(&[BBox::new(0, 0, 10, 10)], &[BBox::new(5, 0, 15, 10)], 0.5);
    assert_eq!((third.precision, third.recall, third.f1), (0.0, 0.0, 0.0));
}

/// Mean foreground fraction of the tampered masks, decoded straight from the PNG files.
fn brute_force_forged_area(root: &Path, records: &[TamperRecord]) -> f64 {
    let ratios: Vec<f64> = records
        .iter()
        .filter_map(|r| r.mask.as_ref())
        .map(|rel| {
            let img = image::open(root.join(rel)).unwrap().to_luma8();
            let fg = img.pixels().filter(|p| p.0[0] == 255).count();
            fg as f64 / (img.width() as f64 * img.height() as f64)
        })
        .collect();
    ratios.iter().sum::<f64>() / ratios.len() as f64
}

fn forged_area() {
    let dir = tempfile::tempdir().unwrap();
    forge_corpus(
        &ForgeConfig {
            tampered: 14,
            authentic: 6,
            method: ForgeMethod::Mixed,
            blend: true,
            seed: 8,
            ..Default::default()
        },
        dir.path(),
    )
    .unwrap();
    let m = read_manifest(dir.path().join("manifest.jsonl")).unwrap();
    assert_eq!(m.records.len(), 20);
    let oracle = brute_force_forged_area(dir.path(), &m.records);
    let stats = compute_stats(&m).unwrap();
    let got = stats.forged_area.expect("corpus has tampered records");
    assert!((got - oracle).abs() <= 1e-9, "{got} vs {oracle}");
    assert!(got > 0.0 && got < 1.0);
    let out = dir.path().join("stats.json");
    run_ok(&["stats", "--manifest", p(&dir.path().join("manifest.jsonl")), "--out", p(&out)]);
    let cli = read_json(&out)["forged_area"].as_f64().unwrap();
    assert!((cli - oracle).abs() <= 1e-9);
}

struct Pipeline {
    root: PathBuf,
    annotated: PathBuf,
    predictions: PathBuf,
    report: PathBuf,
}

/// forge -> render prompts -> mock annotate -> filter -> score, all through the CLI.
fn run_pipeline(root: &Path) -> Pipeline {
    let corpus = root.join("corpus");
    run_ok(&["forge", "--out", p(&corpus), "--tampered", "10", "--authentic", "10", "--method", "mixed", "--blend", "--seed", "2024"]);
    let manifest = corpus.join("manifest.jsonl");
    let stats = root.join("stats.json");
    run_ok(&["stats", "--manifest", p(&manifest), "--out", p(&stats)]);
    let s = read_json(&stats);
    assert_eq!((s["tampered"].as_u64(), s["authentic"].as_u64()), (Some(10), Some(10)));

    let prompts = root.join("prompts");
    run_ok(&["render-prompt", "batch", "--manifest", p(&manifest), "--out", p(&prompts)]);

    let mock = root.join("mock");
    write_mock_fixtures(&read_manifest(&manifest).unwrap(), &mock);
    let exchanges = root.join("exchanges.jsonl");
    run_ok(&["annotate", "--manifest", p(&manifest), "--mock", p(&mock), "--out", p(&exchanges)]);

    let hashes: HashMap<String, String> = fs::read_to_string(prompts.join("prompts.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .filter(|v| v["tampered"] == true)
        .map(|v| (v["id"].as_str().unwrap().to_owned(), v["request_hash"].as_str().unwrap().to_owned()))
        .collect();
    let xs: Vec<Exchange> = fs::read_to_string(&exchanges)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(xs.len(), 10);
    for x in &xs {
        assert_eq!(hashes[&x.id], x.request_hash, "rendered prompt and annotate request differ for {}", x.id);
    }

    let annotated_dir = root.join("annotated");
    run_ok(&["filter", "--manifest", p(&manifest), "--exchanges", p(&exchanges), "--out", p(&annotated_dir)]);
    let annotated = annotated_dir.join("manifest.jsonl");
    let input = read_manifest(&manifest).unwrap();
    for r in read_manifest(&annotated).unwrap().records.iter().filter(|r| r.is_tampered()) {
        let gt = r.gt_ocr.as_deref().unwrap();
        assert!(r.description.contains(&format!("\"{gt}\"")), "{}: {}", r.id, r.description);
        let i = input.records.iter().filter(|x| x.is_tampered()).position(|x| x.id == r.id).unwrap();
        let (read, _) = scripted_reading(i, gt);
        if read != gt {
            assert!(!r.description.contains(&read), "{} keeps divergent OCR", r.id);
        }
    }

    let predictions = root.join("predictions.jsonl");
    write_predictions(&scripted_predictions(&annotated), &predictions);
    let report = root.join("report.json");
    let vectors = fixtures().join("toy_vectors.txt");
    run_ok(&["score", "--pred", p(&predictions), "--manifest", p(&annotated), "--vectors", p(&vectors), "--out", p(&report)]);
    Pipeline {
        root: root.to_owned(),
        annotated,
        predictions,
        report,
    }
}

fn robustness_harness() {
    let dir = tempfile::tempdir().unwrap();
    let base = run_pipeline(dir.path());
    let original = read_manifest(&base.annotated).unwrap();
    let vectors = fixtures().join("toy_vectors.txt");
    for d in Distortion::GRID {
        let out = base.root.join(format!("perturbed-{}", d.label().replace(':', "-")));
        run_ok(&["perturb", "--manifest", p(&base.annotated), "--out", p(&out), "--distortion", &d.label()]);
        let m = read_manifest(out.join("manifest.jsonl")).unwrap();
        assert_eq!(m.records.len(), original.records.len());
        for (a, b) in original.records.iter().zip(&m.records) {
            assert_eq!(
                (&a.id, a.method, &a.gt_ocr, &a.description, a.split),
                (&b.id, b.method, &b.gt_ocr, &b.description, b.split),
                "label changed under {}",
                d.label()
            );
            if let Some(mask) = m.load_mask(b).unwrap() {
                assert!(mask.data().iter().all(|&v| v == 0 || v == 255));
                if matches!(d, Distortion::Jpeg { .. }) {
                    assert_eq!(Some(mask), original.load_mask(a).unwrap());
                }
            }
        }
        let report = out.join("report.json");
        run_ok(&["score", "--pred", p(&base.predictions), "--manifest", p(&out.join("manifest.jsonl")), "--vectors", p(&vectors), "--out", p(&report)]);
        assert_eq!(read_json(&report)["samples"].as_array().unwrap().len(), m.records.len());
    }
}

fn pipeline_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_pipeline(dir.path());
    let golden = read_json(&fixtures().join("pipeline/golden_report.json"));
    assert_json_close(&read_json(&run.report), &golden, 1e-9, "report");
}
