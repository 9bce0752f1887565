use std::collections::{HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use super::MetricsError;
use crate::text::{strip_quoted, tokenize};

/// English stopword list used when no override is given.
pub const DEFAULT_STOPWORDS: &str = include_str!("../../resources/stopwords_en.txt");

/// Pretrained word vectors plus the stopword set applied before averaging.
#[derive(Debug, Clone)]
pub struct WordVectorTable {
    dim: usize,
    entries: HashMap<String, Vec<f64>>,
    stopwords: HashSet<String>,
}

fn parse_stopwords(text: &str) -> HashSet<String> {
    text.lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

impl WordVectorTable {
    pub fn from_entries<I, S>(dim: usize, entries: I) -> Result<Self, MetricsError>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: AsRef<str>,
    {
        if dim == 0 {
            return Err(MetricsError::Dimension(0, 0));
        }
        let mut map = HashMap::new();
        for (word, v) in entries {
            if v.len() != dim {
                return Err(MetricsError::Dimension(dim, v.len()));
            }
            map.entry(word.as_ref().to_lowercase()).or_insert(v);
        }
        Ok(Self {
            dim,
            entries: map,
            stopwords: parse_stopwords(DEFAULT_STOPWORDS),
        })
    }

    /// Parses `word v1 ... vd` lines; a leading `count dim` header is detected and skipped.
    pub fn read(reader: impl BufRead, source: &str) -> Result<Self, MetricsError> {
        let fmt_err = |line: usize, msg: String| MetricsError::Format {
            path: source.to_owned(),
            line,
            msg,
        };
        let mut dim = None;
        let mut entries = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if idx == 0
                && fields.len() == 2
                && fields.iter().all(|f| f.parse::<usize>().is_ok())
            {
                dim = Some(fields[1].parse::<usize>().unwrap());
                continue;
            }
            let values = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| fmt_err(lineno, format!("bad component: {e}")))?;
            if values.iter().any(|v| !v.is_finite()) {
                return Err(fmt_err(lineno, "non-finite component".into()));
            }
            match dim {
                None if values.is_empty() => {
                    return Err(fmt_err(lineno, "entry has no components".into()))
                }
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(fmt_err(
                        lineno,
                        format!("expected {d} components, found {}", values.len()),
                    ))
                }
                _ => {}
            }
            entries.push((fields[0].to_owned(), values));
        }
        let dim = dim.ok_or_else(|| fmt_err(0, "no vectors found".into()))?;
        Self::from_entries(dim, entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MetricsError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(file), &path.display().to_string())
    }

    pub fn with_stopwords(mut self, words: impl IntoIterator<Item = impl AsRef<str>>) -> Self {
        self.stopwords = words.into_iter().map(|w| w.as_ref().to_lowercase()).collect();
        self
    }

    pub fn load_stopwords(self, path: impl AsRef<Path>) -> Result<Self, MetricsError> {
        let text = std::fs::read_to_string(path)?;
        let words = parse_stopwords(&text);
        Ok(self.with_stopwords(words))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.entries.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(&word.to_lowercase())
    }
}

/// Mean word vector of a paragraph. Degenerate when no token contributed.
#[derive(Debug, Clone, PartialEq)]
pub struct ParagraphVector {
    pub components: Vec<f64>,
    pub contributing_words: usize,
}

impl ParagraphVector {
    pub fn is_degenerate(&self) -> bool {
        self.contributing_words == 0
    }
}

pub fn paragraph_vector(text: &str, table: &WordVectorTable, strip_quoted_spans: bool) -> ParagraphVector {
    let cleaned;
    let text = if strip_quoted_spans {
        cleaned = strip_quoted(text);
        cleaned.as_str()
    } else {
        text
    };
    let mut sum = vec![0.0; table.dim];
    let mut n = 0usize;
    for tok in tokenize(text) {
        if table.stopwords.contains(&tok) {
            continue;
        }
        if let Some(v) = table.entries.get(&tok) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
            n += 1;
        }
    }
    if n > 0 {
        for s in &mut sum {
            *s /= n as f64;
        }
    }
    ParagraphVector {
        components: sum,
        contributing_words: n,
    }
}

/// Cosine similarity; `(0.0, true)` when either side is degenerate or has zero norm.
pub fn cosine(a: &ParagraphVector, b: &ParagraphVector) -> Result<(f64, bool), MetricsError> {
    if a.components.len() != b.components.len() {
        return Err(MetricsError::Dimension(a.components.len(), b.components.len()));
    }
    if a.is_degenerate() || b.is_degenerate() {
        return Ok((0.0, true));
    }
    let dot: f64 = a.components.iter().zip(&b.components).map(|(x, y)| x * y).sum();
    let na = a.components.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.components.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok((0.0, true));
    }
    Ok(((dot / (na * nb)).clamp(-1.0, 1.0), false))
}
