//! Annotation pipeline around an external vision-chat model: request
//! construction, reply parsing, the OCR-accuracy gate and ground-truth
//! OCR substitution.

mod client;

pub use client::{
    chat_request_body, content_from_body, AnnotatorClient, ClientError, HttpClient, HttpClientConfig,
    MockClient,
};

use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{DatasetError, Manifest, TamperRecord};
use crate::imaging::{render_fused_mask, BinaryMask, ImageBuf, ImagingError, DEFAULT_FUSE_WEIGHTS};
use crate::metrics::acc_ocr;
use crate::prompts::build_annotation_query;
use crate::text::{first_sentence_len, first_sentence_quote, normalize_quotes, quote_spans};
use crate::AUTHENTIC_DESCRIPTION;

/// Minimum OCR accuracy for a reply to be kept.
pub const DEFAULT_FILTER_THRESHOLD: f64 = 0.8;

#[derive(Debug, Error)]
pub enum AnnotatorError {
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("annotator refused the request: {0}")]
    Rejected(String),
    #[error("ground-truth OCR is empty")]
    EmptyGroundTruth,
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// The sentence used as the description of every authentic image.
pub fn authentic_annotation() -> &'static str {
    AUTHENTIC_DESCRIPTION
}

/// One call to the annotator: the query plus `[tampered image, fused-mask image]`.
#[derive(Debug, Clone)]
pub struct AnnotatorRequest {
    pub query: String,
    pub images: [ImageBuf; 2],
    pub model_id: String,
    pub temperature: f64,
}

impl AnnotatorRequest {
    pub fn tampered(&self) -> &ImageBuf {
        &self.images[0]
    }

    pub fn fused_mask(&self) -> &ImageBuf {
        &self.images[1]
    }

    /// Hex SHA-256 over both images' dimensions and pixels; keys mock fixtures.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for img in &self.images {
            h.update(img.width().to_le_bytes());
            h.update(img.height().to_le_bytes());
            h.update(img.data());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parsed annotator reply. The OCR is the first quoted span of the first
/// sentence; the description is whatever follows that sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorResponse {
    pub raw_text: String,
    pub parsed_ocr: String,
    pub parsed_description: String,
    /// Byte range of the OCR inside `raw_text`, without its quotes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ocr_span: Option<(usize, usize)>,
    /// Byte offset where `parsed_description` starts in `raw_text`.
    pub description_start: usize,
}

impl AnnotatorResponse {
    pub fn parse(raw: &str) -> Self {
        let ocr_span = first_sentence_quote(raw).map(|q| (q.open + q.open_len, q.close));
        let first = first_sentence_len(raw);
        let rest = &raw[first..];
        let description_start = first + (rest.len() - rest.trim_start().len());
        Self {
            raw_text: raw.to_owned(),
            parsed_ocr: ocr_span.map_or(String::new(), |(a, b)| raw[a..b].to_owned()),
            parsed_description: raw[description_start..].to_owned(),
            ocr_span,
            description_start,
        }
    }

    /// Rebuilds the reply from its parsed parts and the text between them.
    pub fn reassemble(&self) -> String {
        let raw = &self.raw_text;
        let mut out = String::with_capacity(raw.len());
        let mut cursor = 0;
        if let Some((a, b)) = self.ocr_span {
            out.push_str(&raw[..a]);
            out.push_str(&self.parsed_ocr);
            cursor = b;
        }
        out.push_str(&raw[cursor..self.description_start]);
        out.push_str(&self.parsed_description);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: usize,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay_ms: 500,
            max_delay_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: usize) -> Duration {
        let ms = self
            .base_delay_ms
            .saturating_mul(1u64 << attempt.min(20))
            .min(self.max_delay_ms);
        Duration::from_millis(ms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotateOptions {
    pub model_id: String,
    pub temperature: f64,
    pub retry: RetryPolicy,
    pub fuse_weights: (f64, f64),
    /// Upper bound on requests in flight.
    pub concurrency: usize,
}

impl Default for AnnotateOptions {
    fn default() -> Self {
        Self {
            model_id: "gpt-4o".into(),
            temperature: 0.0,
            retry: RetryPolicy::default(),
            fuse_weights: DEFAULT_FUSE_WEIGHTS,
            concurrency: 4,
        }
    }
}

pub fn build_request(
    image: &ImageBuf,
    mask: &BinaryMask,
    opts: &AnnotateOptions,
) -> Result<AnnotatorRequest, AnnotatorError> {
    let fused = render_fused_mask(image, mask, opts.fuse_weights.0, opts.fuse_weights.1)?;
    Ok(AnnotatorRequest {
        query: build_annotation_query().text,
        images: [image.clone(), fused],
        model_id: opts.model_id.clone(),
        temperature: opts.temperature,
    })
}

/// Sends a request, retrying transient failures with exponential backoff.
pub fn send_with_retry<C: AnnotatorClient + ?Sized>(
    client: &C,
    request: &AnnotatorRequest,
    retry: &RetryPolicy,
) -> Result<AnnotatorResponse, AnnotatorError> {
    let mut attempt = 0;
    loop {
        match client.complete(request) {
            Ok(text) => return Ok(AnnotatorResponse::parse(&text)),
            Err(ClientError::Transient(msg)) => {
                if attempt >= retry.max_retries {
                    return Err(AnnotatorError::Transport {
                        attempts: attempt + 1,
                        message: msg,
                    });
                }
                std::thread::sleep(retry.delay(attempt));
                attempt += 1;
            }
            Err(ClientError::Malformed(msg)) => return Err(AnnotatorError::MalformedResponse(msg)),
            Err(ClientError::Rejected(msg)) => return Err(AnnotatorError::Rejected(msg)),
        }
    }
}

/// Asks the annotator to describe one tampered image given its mask.
pub fn annotate<C: AnnotatorClient + ?Sized>(
    image: &ImageBuf,
    mask: &BinaryMask,
    client: &C,
    opts: &AnnotateOptions,
) -> Result<AnnotatorResponse, AnnotatorError> {
    let request = build_request(image, mask, opts)?;
    send_with_retry(client, &request, &opts.retry)
}

/// Annotator output for one record, as stored between the annotate and filter steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub id: String,
    pub request_hash: String,
    pub model_id: String,
    pub response: AnnotatorResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordFailure {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRun {
    pub exchanges: Vec<Exchange>,
    pub failures: Vec<RecordFailure>,
    /// Authentic records; they get the fixed sentence without a request.
    pub skipped_authentic: usize,
}

/// Annotates every tampered record, at most `opts.concurrency` at a time.
pub fn annotate_manifest<C: AnnotatorClient + Sync + ?Sized>(
    manifest: &Manifest,
    client: &C,
    opts: &AnnotateOptions,
) -> AnnotationRun {
    use rayon::prelude::*;

    let tampered: Vec<&TamperRecord> = manifest.records.iter().filter(|r| r.is_tampered()).collect();
    let work = |rec: &TamperRecord| -> Result<Exchange, AnnotatorError> {
        let image = manifest.load_image(rec)?;
        let mask = manifest
            .load_mask(rec)?
            .ok_or_else(|| AnnotatorError::MalformedResponse("tampered record has no mask".into()))?;
        let request = build_request(&image, &mask, opts)?;
        let response = send_with_retry(client, &request, &opts.retry)?;
        Ok(Exchange {
            id: rec.id.clone(),
            request_hash: request.content_hash(),
            model_id: opts.model_id.clone(),
            response,
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.concurrency.max(1))
        .build()
        .expect("thread pool");
    let results: Vec<Result<Exchange, RecordFailure>> = pool.install(|| {
        tampered
            .par_iter()
            .map(|rec| {
                work(rec).map_err(|e| RecordFailure {
                    id: rec.id.clone(),
                    error: e.to_string(),
                })
            })
            .collect()
    });
    let mut run = AnnotationRun {
        skipped_authentic: manifest.records.len() - tampered.len(),
        ..Default::default()
    };
    for r in results {
        match r {
            Ok(x) => run.exchanges.push(x),
            Err(f) => run.failures.push(f),
        }
    }
    run
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub ocr_accuracy: f64,
    pub kept: bool,
    /// The reply with the annotator's OCR replaced by the ground truth; empty when rejected.
    pub final_description: String,
}

pub fn filter_response(response: &AnnotatorResponse, gt_ocr: &str) -> Result<FilterDecision, AnnotatorError> {
    filter_response_with(response, gt_ocr, DEFAULT_FILTER_THRESHOLD)
}

pub fn filter_response_with(
    response: &AnnotatorResponse,
    gt_ocr: &str,
    threshold: f64,
) -> Result<FilterDecision, AnnotatorError> {
    if gt_ocr.is_empty() {
        return Err(AnnotatorError::EmptyGroundTruth);
    }
    let ocr_accuracy = acc_ocr(&response.parsed_ocr, gt_ocr);
    let kept = ocr_accuracy >= threshold;
    let final_description = if kept {
        substitute_ocr(&response.raw_text, &response.parsed_ocr, gt_ocr)
    } else {
        String::new()
    };
    Ok(FilterDecision {
        ocr_accuracy,
        kept,
        final_description,
    })
}

/// Replaces the annotator's OCR with `gt`: every quoted span equal to it, and
/// every whole-word occurrence outside quotes. Curly quotes become straight.
fn substitute_ocr(raw: &str, annotator_ocr: &str, gt: &str) -> String {
    let text = normalize_quotes(raw);
    if annotator_ocr.is_empty() {
        return text;
    }
    let annotator_ocr = normalize_quotes(annotator_ocr);
    let mut out = String::with_capacity(text.len() + gt.len());
    let mut last = 0;
    for q in quote_spans(&text) {
        out.push_str(&replace_words(&text[last..q.open], &annotator_ocr, gt));
        let content = q.content(&text);
        out.push('"');
        out.push_str(if content == annotator_ocr { gt } else { content });
        out.push('"');
        last = q.end();
    }
    out.push_str(&replace_words(&text[last..], &annotator_ocr, gt));
    out
}

fn replace_words(s: &str, needle: &str, replacement: &str) -> String {
    if needle == replacement {
        return s.to_owned();
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    let mut prev: Option<char> = None;
    while let Some(pos) = rest.find(needle) {
        let before = rest[..pos].chars().next_back().or(prev);
        let after = rest[pos + needle.len()..].chars().next();
        let boundary = |c: Option<char>| c.is_none_or(|c| !c.is_alphanumeric());
        out.push_str(&rest[..pos]);
        if boundary(before) && boundary(after) {
            out.push_str(replacement);
        } else {
            out.push_str(needle);
        }
        prev = needle.chars().next_back();
        rest = &rest[pos + needle.len()..];
    }
    out.push_str(rest);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRow {
    pub id: String,
    pub ocr_accuracy: f64,
    pub kept: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterRun {
    /// Authentic records plus kept tampered records with their final description.
    pub records: Vec<TamperRecord>,
    pub decisions: Vec<DecisionRow>,
    pub failures: Vec<RecordFailure>,
}

impl FilterRun {
    pub fn kept(&self) -> usize {
        self.decisions.iter().filter(|d| d.kept).count()
    }
}

/// Applies the OCR gate to every exchange and produces the annotated record set.
pub fn filter_exchanges(records: &[TamperRecord], exchanges: &[Exchange], threshold: f64) -> FilterRun {
    let by_id: HashMap<&str, &Exchange> = exchanges.iter().map(|e| (e.id.as_str(), e)).collect();
    let mut run = FilterRun::default();
    for rec in records {
        if !rec.is_tampered() {
            let mut r = rec.clone();
            r.description = AUTHENTIC_DESCRIPTION.to_owned();
            run.records.push(r);
            continue;
        }
        let Some(x) = by_id.get(rec.id.as_str()) else {
            run.failures.push(RecordFailure {
                id: rec.id.clone(),
                error: "no annotator exchange".into(),
            });
            continue;
        };
        let gt = rec.gt_ocr.as_deref().unwrap_or("");
        match filter_response_with(&x.response, gt, threshold) {
            Ok(d) => {
                run.decisions.push(DecisionRow {
                    id: rec.id.clone(),
                    ocr_accuracy: d.ocr_accuracy,
                    kept: d.kept,
                });
                if d.kept {
                    let mut r = rec.clone();
                    r.description = d.final_description;
                    run.records.push(r);
                }
            }
            Err(e) => run.failures.push(RecordFailure {
                id: rec.id.clone(),
                error: e.to_string(),
            }),
        }
    }
    run
}
