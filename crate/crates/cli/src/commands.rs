use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{de::DeserializeOwned, Serialize};
use serde_json::json;
use textforge_core::annotator::{
    annotate_manifest, build_request, filter_exchanges, AnnotatorClient, Exchange, HttpClient, MockClient,
};
use textforge_core::dataset::{compute_stats, read_manifest, write_manifest, Manifest, MANIFEST_FILE};
use textforge_core::forge::{forge_corpus, ForgeConfig, ForgeMethod};
use textforge_core::imaging::{render_fused_mask, BBox, BinaryMask, ImageBuf};
use textforge_core::json::{to_canonical_line, to_canonical_pretty};
use textforge_core::metrics::{
    evaluate_detections, read_predictions, score_predictions, DetectionPrediction, WordVectorScorer,
    WordVectorTable,
};
use textforge_core::prompts::{
    build_annotation_query, build_grounded_query, build_grounding_prompt, build_inference_query, QueryMode,
};
use textforge_core::robustness::{perturb_corpus, Distortion};

use crate::config::Config;
use crate::{
    AnnotateArgs, DetectEvalArgs, FilterArgs, ForgeArgs, MethodArg, ModeArg, Outcome, PerturbArgs, PromptCommand,
    ScoreArgs, StatsArgs,
};

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let mut text = to_canonical_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let mut f = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
    for item in items {
        writeln!(f, "{}", to_canonical_line(item)?)?;
    }
    Ok(())
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!("{} does not exist", path.display());
    }
    Ok(())
}

fn load_manifest(path: &Path) -> Result<Manifest> {
    require_file(path)?;
    Ok(read_manifest(path)?)
}

/// Refuses output directories that would overwrite the input corpus.
fn ensure_separate(out_dir: &Path, manifest: &Path) -> Result<()> {
    let input = manifest
        .parent()
        .map(|p| if p.as_os_str().is_empty() { Path::new(".") } else { p })
        .unwrap_or(Path::new("."));
    if let (Ok(a), Ok(b)) = (fs::canonicalize(out_dir), fs::canonicalize(input)) {
        if a == b {
            bail!("output directory {} is the input corpus directory", out_dir.display());
        }
    }
    Ok(())
}

fn outcome(failed: impl IntoIterator<Item = String>) -> Outcome {
    let ids: Vec<String> = failed.into_iter().collect();
    if ids.is_empty() {
        Outcome::Done
    } else {
        Outcome::Partial(ids)
    }
}

pub fn parse_box(s: &str) -> Result<BBox> {
    let v: Vec<u32> = s
        .split(',')
        .map(|t| t.trim().parse::<u32>())
        .collect::<Result<_, _>>()
        .map_err(|_| anyhow!("box {s:?} must be four non-negative integers x_min,y_min,x_max,y_max"))?;
    let [a, b, c, d] = v[..] else {
        bail!("box {s:?} must have four coordinates");
    };
    Ok(BBox::try_new(a, b, c, d)?)
}

pub fn parse_size(s: &str) -> Result<(u32, u32)> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| anyhow!("size {s:?} must look like WIDTHxHEIGHT"))?;
    let w: u32 = w.trim().parse().map_err(|_| anyhow!("bad width in {s:?}"))?;
    let h: u32 = h.trim().parse().map_err(|_| anyhow!("bad height in {s:?}"))?;
    if w == 0 || h == 0 {
        bail!("size {s:?} must be positive");
    }
    Ok((w, h))
}

fn parse_pair(s: &str, what: &str) -> Result<(f64, f64)> {
    let (a, b) = s.split_once(',').ok_or_else(|| anyhow!("{what} {s:?} must be two comma-separated numbers"))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn parse_ratios(s: &str) -> Result<[f64; 3]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| anyhow!("split {s:?} must be three numbers train,test,cd"))?;
    let [a, b, c] = v[..] else {
        bail!("split {s:?} must have three ratios");
    };
    Ok([a, b, c])
}

pub fn forge(config: &Config, a: ForgeArgs) -> Result<Outcome> {
    let cfg = ForgeConfig {
        tampered: a.tampered,
        authentic: a.authentic,
        method: match a.method {
            MethodArg::CopyMove => ForgeMethod::CopyMove,
            MethodArg::Splicing => ForgeMethod::Splicing,
            MethodArg::Mixed => ForgeMethod::Mixed,
        },
        blend: a.blend,
        seed: a.seed,
        solver: config.solver,
        split_ratios: a.split.as_deref().map(parse_ratios).transpose()?,
    };
    let summary = forge_corpus(&cfg, &a.out)?;
    write_json(&a.out.join("forge_report.json"), &json!({"config": cfg, "summary": summary}))?;
    println!(
        "forged {} tampered ({} copy-move, {} splicing) and {} authentic images into {}",
        summary.tampered,
        summary.copy_move,
        summary.splicing,
        summary.authentic,
        a.out.display()
    );
    if !summary.blend_fallbacks.is_empty() {
        println!("blending fell back to a hard paste for: {}", summary.blend_fallbacks.join(", "));
    }
    Ok(Outcome::Done)
}

pub fn render_prompt(config: &Config, c: PromptCommand) -> Result<Outcome> {
    match c {
        PromptCommand::Annotation { out } => {
            let q = build_annotation_query();
            println!("{}", q.text);
            if let Some(out) = out {
                write_json(&out, &q)?;
            }
        }
        PromptCommand::Inference { mode, bbox, size } => {
            let mode = match mode {
                ModeArg::FineTuned => QueryMode::FineTuned,
                ModeArg::ZeroShot => QueryMode::ZeroShot,
            };
            match (bbox, size) {
                (Some(b), Some(s)) => {
                    let (w, h) = parse_size(&s)?;
                    println!("{}", build_grounded_query(&parse_box(&b)?, w, h, mode)?);
                }
                _ => println!("{}", build_inference_query(mode)),
            }
        }
        PromptCommand::Grounding { bbox, size } => {
            let (w, h) = parse_size(&size)?;
            println!("{}", build_grounding_prompt(&parse_box(&bbox)?, w, h)?.text);
        }
        PromptCommand::Fused {
            image,
            mask,
            out,
            weights,
        } => {
            require_file(&image)?;
            require_file(&mask)?;
            let (l1, l2) = parse_pair(&weights, "weights")?;
            let fused = render_fused_mask(&ImageBuf::load(&image)?, &BinaryMask::load(&mask)?, l1, l2)?;
            fused.save_png(&out)?;
            println!("wrote {}", out.display());
        }
        PromptCommand::Batch { manifest, out } => {
            let m = load_manifest(&manifest)?;
            ensure_separate(&out, &manifest)?;
            let fused_dir = out.join("fused");
            fs::create_dir_all(&fused_dir)?;
            let opts = config.annotate_options();
            let query = build_annotation_query();
            fs::write(out.join("annotation_query.txt"), format!("{}\n", query.text))?;
            let mut lines = Vec::new();
            let mut failed = Vec::new();
            for rec in &m.records {
                let result = (|| -> Result<serde_json::Value> {
                    let image = m.load_image(rec)?;
                    let (w, h) = image.dims();
                    let grounding: Vec<String> = rec
                        .boxes
                        .iter()
                        .map(|b| build_grounding_prompt(b, w, h).map(|g| g.text))
                        .collect::<Result<_, _>>()?;
                    let mut line = json!({"id": rec.id, "tampered": rec.is_tampered(), "grounding": grounding});
                    if let Some(mask) = m.load_mask(rec)? {
                        let req = build_request(&image, &mask, &opts)?;
                        let rel = format!("fused/{}.png", rec.id);
                        req.fused_mask().save_png(out.join(&rel))?;
                        line["fused"] = json!(rel);
                        line["request_hash"] = json!(req.content_hash());
                        line["query_version"] = json!(query.version);
                    }
                    Ok(line)
                })();
                match result {
                    Ok(l) => lines.push(l),
                    Err(e) => {
                        eprintln!("{}: {e:#}", rec.id);
                        failed.push(rec.id.clone());
                    }
                }
            }
            write_jsonl(&out.join("prompts.jsonl"), &lines)?;
            println!("rendered prompts for {} record(s) into {}", lines.len(), out.display());
            return Ok(outcome(failed));
        }
    }
    Ok(Outcome::Done)
}

pub fn annotate(mut config: Config, a: AnnotateArgs) -> Result<Outcome> {
    if let Some(e) = a.endpoint {
        config.annotator.endpoint = e;
    }
    if let Some(m) = a.model {
        config.annotator.model = m;
    }
    if let Some(c) = a.concurrency {
        config.annotator.concurrency = c;
    }
    config.validate()?;
    let m = load_manifest(&a.manifest)?;
    let client: Box<dyn AnnotatorClient + Sync> = match &a.mock {
        Some(dir) => {
            if !dir.is_dir() {
                bail!("mock fixture directory {} does not exist", dir.display());
            }
            Box::new(MockClient::load_dir(dir)?)
        }
        None => {
            let http = config.http_config();
            if http.api_key.is_none() {
                bail!("environment variable {} is not set", config.annotator.api_key_env);
            }
            Box::new(HttpClient::new(http))
        }
    };
    let run = annotate_manifest(&m, client.as_ref(), &config.annotate_options());
    write_jsonl(&a.out, &run.exchanges)?;
    println!(
        "annotated {} record(s), {} failed, {} authentic skipped",
        run.exchanges.len(),
        run.failures.len(),
        run.skipped_authentic
    );
    for f in &run.failures {
        eprintln!("{}: {}", f.id, f.error);
    }
    Ok(outcome(run.failures.into_iter().map(|f| f.id)))
}

fn copy_into(m: &Manifest, rel: &str, out: &Path) -> Result<()> {
    let dst = out.join(rel);
    if let Some(p) = dst.parent() {
        fs::create_dir_all(p)?;
    }
    fs::copy(m.resolve(rel), &dst).with_context(|| format!("copying {rel}"))?;
    Ok(())
}

pub fn filter(config: &Config, a: FilterArgs) -> Result<Outcome> {
    let threshold = a.threshold.unwrap_or(config.thresholds.filter);
    if !(0.0..=1.0).contains(&threshold) {
        bail!("threshold {threshold} outside [0, 1]");
    }
    let m = load_manifest(&a.manifest)?;
    require_file(&a.exchanges)?;
    ensure_separate(&a.out, &a.manifest)?;
    let exchanges: Vec<Exchange> = read_jsonl(&a.exchanges)?;
    let run = filter_exchanges(&m.records, &exchanges, threshold);
    for rec in &run.records {
        copy_into(&m, &rec.image, &a.out)?;
        if let Some(mask) = &rec.mask {
            copy_into(&m, mask, &a.out)?;
        }
    }
    write_manifest(&run.records, a.out.join(MANIFEST_FILE))?;
    let kept = run.kept();
    let rejected = run.decisions.len() - kept;
    write_json(
        &a.out.join("filter_report.json"),
        &json!({
            "threshold": threshold,
            "kept": kept,
            "rejected": rejected,
            "records": run.records.len(),
            "decisions": run.decisions,
            "failures": run.failures,
        }),
    )?;
    println!(
        "kept {kept} of {} annotated record(s) at threshold {threshold}; wrote {} record(s) to {}",
        run.decisions.len(),
        run.records.len(),
        a.out.display()
    );
    Ok(outcome(run.failures.into_iter().map(|f| f.id)))
}

fn resolve(flag: Option<PathBuf>, configured: &Option<PathBuf>) -> Option<PathBuf> {
    flag.or_else(|| configured.clone())
}

pub fn score(config: &Config, a: ScoreArgs) -> Result<Outcome> {
    let vectors = resolve(a.vectors, &config.scoring.vectors)
        .ok_or_else(|| anyhow!("no word-vector file: pass --vectors or set scoring.vectors"))?;
    require_file(&vectors)?;
    require_file(&a.pred)?;
    let mut table = WordVectorTable::load(&vectors)?;
    if let Some(sw) = resolve(a.stopwords, &config.scoring.stopwords) {
        require_file(&sw)?;
        table = table.load_stopwords(&sw)?;
    }
    let max_edits = a.classify_max_edits.unwrap_or(config.thresholds.classify_max_edits);
    let m = load_manifest(&a.manifest)?;
    let preds = read_predictions(&a.pred)?;
    let report = score_predictions(&m.records, &preds, &WordVectorScorer { table: &table }, max_edits);
    write_json(&a.out, &report)?;
    if let Some(csv) = &a.csv {
        report.write_csv(csv)?;
    }
    match &report.aggregate {
        Some(agg) => println!(
            "scored {} sample(s): acc_ocr {:.2} sim_para {:.2} final {:.2} (classification {:.2})",
            agg.count, agg.acc_ocr, agg.sim_para, agg.final_score, agg.classification_accuracy
        ),
        None => println!("no sample could be scored"),
    }
    if let Some(t) = &report.tampered_only {
        println!(
            "tampered only ({}): acc_ocr {:.2} sim_para {:.2} final {:.2}",
            t.count, t.acc_ocr, t.sim_para, t.final_score
        );
    }
    if report.degenerate_samples > 0 {
        println!("{} sample(s) had no usable words for paragraph similarity", report.degenerate_samples);
    }
    Ok(outcome(report.failures.iter().map(|f| f.id.clone())))
}

pub fn perturb(a: PerturbArgs) -> Result<Outcome> {
    let d = Distortion::parse(&a.distortion)?;
    require_file(&a.manifest)?;
    ensure_separate(&a.out, &a.manifest)?;
    let summary = perturb_corpus(&a.manifest, &a.out, d)?;
    write_json(&a.out.join("perturb_report.json"), &summary)?;
    println!(
        "applied {} to {} of {} record(s) into {}",
        d.label(),
        summary.written_records,
        summary.input_records,
        a.out.display()
    );
    for f in &summary.failures {
        eprintln!("{}: {}", f.id, f.error);
    }
    Ok(outcome(summary.failures.into_iter().map(|f| f.id)))
}

pub fn stats(a: StatsArgs) -> Result<Outcome> {
    let m = load_manifest(&a.manifest)?;
    let s = compute_stats(&m)?;
    write_json(&a.out, &s)?;
    let area = s.forged_area.map_or("n/a".to_owned(), |v| format!("{v:.4}"));
    println!(
        "{} record(s): {} tampered, {} authentic, forged area {area}",
        s.total, s.tampered, s.authentic
    );
    if !s.totals_consistent {
        println!("warning: per-method and per-split totals disagree");
    }
    if !s.box_mismatches.is_empty() {
        println!("warning: stored boxes disagree with masks for {}", s.box_mismatches.join(", "));
    }
    if !s.cd_violations.is_empty() {
        println!("warning: methods not allowed in the cd split: {}", s.cd_violations.join(", "));
    }
    Ok(Outcome::Done)
}

pub fn detect_eval(config: &Config, a: DetectEvalArgs) -> Result<Outcome> {
    let iou = a.iou.unwrap_or(config.thresholds.iou);
    if !(iou > 0.0 && iou <= 1.0) {
        bail!("IoU threshold {iou} outside (0, 1]");
    }
    let m = load_manifest(&a.manifest)?;
    require_file(&a.pred)?;
    let preds: Vec<DetectionPrediction> = read_jsonl(&a.pred)?;
    let s = evaluate_detections(&m.records, &preds, iou);
    write_json(&a.out, &json!({"iou_threshold": iou, "scores": s}))?;
    println!(
        "precision {:.4} recall {:.4} f1 {:.4} at IoU {iou}",
        s.precision, s.recall, s.f1
    );
    Ok(Outcome::Done)
}
