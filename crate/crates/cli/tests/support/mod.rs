#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use textforge_core::annotator::{build_request, AnnotateOptions, MockClient};
use textforge_core::dataset::{read_manifest, Manifest};
use textforge_core::metrics::Prediction;
use textforge_core::AUTHENTIC_DESCRIPTION;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_textforge"))
}

/// Runs the CLI and returns its output; panics with stderr when it cannot start.
pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("textforge binary runs")
}

pub fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "textforge {args:?} exited with {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Structural JSON equality with an absolute tolerance on numbers.
pub fn assert_json_close(actual: &Value, expected: &Value, tol: f64, path: &str) {
    match (actual, expected) {
        (Value::Number(a), Value::Number(e)) => {
            let (a, e) = (a.as_f64().unwrap(), e.as_f64().unwrap());
            assert!((a - e).abs() <= tol, "{path}: {a} vs {e}");
        }
        (Value::Array(a), Value::Array(e)) => {
            assert_eq!(a.len(), e.len(), "{path}: length");
            for (i, (x, y)) in a.iter().zip(e).enumerate() {
                assert_json_close(x, y, tol, &format!("{path}[{i}]"));
            }
        }
        (Value::Object(a), Value::Object(e)) => {
            let ka: Vec<_> = a.keys().collect();
            let ke: Vec<_> = e.keys().collect();
            assert_eq!(ka, ke, "{path}: keys");
            for (k, v) in a {
                assert_json_close(v, &e[k], tol, &format!("{path}.{k}"));
            }
        }
        _ => assert_eq!(actual, expected, "{path}"),
    }
}

const ANOMALIES: [&str; 3] = [
    "The font strokes are thicker than the surrounding letters and the edges look pasted.",
    "Its background tint is slightly different and the boundary shows a halo.",
    "The ink color is darker and the glyphs are sharper than the rest of the line.",
];

/// What the scripted annotator reads for tampered record `i`: exact, last
/// character wrong, exact in curly quotes, or unreadable.
pub fn scripted_reading(i: usize, gt: &str) -> (String, bool) {
    match i % 4 {
        0 => (gt.to_owned(), false),
        1 => {
            let mut s: String = gt.chars().take(gt.chars().count() - 1).collect();
            s.push(if gt.ends_with('X') { 'Y' } else { 'X' });
            (s, false)
        }
        2 => (gt.to_owned(), true),
        _ => ("UNREADABLE".to_owned(), false),
    }
}

pub fn scripted_reply(i: usize, gt: &str) -> String {
    let (read, curly) = scripted_reading(i, gt);
    let (o, c) = if curly { ('\u{201C}', '\u{201D}') } else { ('"', '"') };
    format!(
        "The tampered text is {o}{read}{c}. {} The word {read} does not match its line.",
        ANOMALIES[i % ANOMALIES.len()]
    )
}

/// Writes a mock fixture directory answering every tampered record of `manifest`.
pub fn write_mock_fixtures(manifest: &Manifest, dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    let opts = AnnotateOptions::default();
    let mut mock = MockClient::new();
    for (i, rec) in manifest.records.iter().filter(|r| r.is_tampered()).enumerate() {
        let image = manifest.load_image(rec).unwrap();
        let mask = manifest.load_mask(rec).unwrap().unwrap();
        let req = build_request(&image, &mask, &opts).unwrap();
        mock.insert(req.content_hash(), MockClient::body_for(&scripted_reply(i, rec.gt_ocr.as_deref().unwrap())));
    }
    mock.save(dir.join("replies.json")).unwrap();
}

/// Simulated detector answers for an annotated manifest: a mix of exact
/// explanations, paraphrases, OCR slips, misses and one false alarm.
pub fn scripted_predictions(manifest_path: &Path) -> Vec<Prediction> {
    let m = read_manifest(manifest_path).unwrap();
    let mut t = 0;
    let mut a = 0;
    m.records
        .iter()
        .map(|r| {
            let output_text = if r.is_tampered() {
                t += 1;
                let gt = r.gt_ocr.as_deref().unwrap();
                match t % 4 {
                    0 => r.description.clone(),
                    1 => format!("The tampered text is \"{gt}\". {}", ANOMALIES[t % 3]),
                    2 => AUTHENTIC_DESCRIPTION.to_owned(),
                    _ => format!("The tampered text is \"{gt}Q\". {}", ANOMALIES[(t + 1) % 3]),
                }
            } else {
                a += 1;
                if a % 5 == 0 {
                    "The tampered text is \"LOT\". The font is thicker.".to_owned()
                } else {
                    AUTHENTIC_DESCRIPTION.to_owned()
                }
            };
            Prediction {
                id: r.id.clone(),
                output_text,
            }
        })
        .collect()
}

pub fn write_predictions(preds: &[Prediction], path: &Path) {
    let text: String = preds
        .iter()
        .map(|p| serde_json::to_string(p).unwrap() + "\n")
        .collect();
    std::fs::write(path, text).unwrap();
}
