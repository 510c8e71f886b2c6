//! Semantic deviation between original and augmented sentences.
//!
//! A pair is "similar" when the cosine of the two sentence embeddings is at
//! least the threshold (closed inequality). Corpus reports count pairs that
//! fall below it.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::Sentence;
use crate::embedding::{EmbeddingStore, SentenceEmbedding};

/// Default deviation threshold.
pub const DEFAULT_DELTA: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Similar,
    Dissimilar,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Similar => "similar",
            Verdict::Dissimilar => "dissimilar",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationVerdict {
    pub similarity: f64,
    pub verdict: Verdict,
}

/// Compares two unit-normalized sentence embeddings.
pub fn deviction(orig: &SentenceEmbedding, aug: &SentenceEmbedding, delta: f64) -> DeviationVerdict {
    let similarity = if orig.vector == aug.vector {
        1.0
    } else {
        let dot: f64 = orig.vector.iter().zip(&aug.vector).map(|(a, b)| a * b).sum();
        dot.clamp(-1.0, 1.0)
    };
    let verdict = if similarity >= delta {
        Verdict::Similar
    } else {
        Verdict::Dissimilar
    };
    DeviationVerdict { similarity, verdict }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationReport {
    pub total_pairs: usize,
    /// Pairs scoring below `delta`, including unembeddable ones.
    pub below_threshold: usize,
    /// Pairs where at least one side had no in-vocabulary token.
    pub unembeddable: usize,
    pub fraction_below: f64,
    pub delta: f64,
}

impl DeviationReport {
    fn from_counts(total_pairs: usize, below_threshold: usize, unembeddable: usize, delta: f64) -> Self {
        let fraction_below = if total_pairs == 0 {
            0.0
        } else {
            below_threshold as f64 / total_pairs as f64
        };
        DeviationReport {
            total_pairs,
            below_threshold,
            unembeddable,
            fraction_below,
            delta,
        }
    }
}

/// Per-pair outcome; `None` when a side could not be embedded.
pub fn pair_similarity(store: &EmbeddingStore, orig: &Sentence, aug: &Sentence) -> Option<f64> {
    let a = store.sentence_embedding(orig).ok()?;
    let b = store.sentence_embedding(aug).ok()?;
    Some(deviction(&a, &b, DEFAULT_DELTA).similarity)
}

fn aggregate<I>(outcomes: I, delta: f64) -> DeviationReport
where
    I: ParallelIterator<Item = Option<f64>>,
{
    let (total, below, unembeddable) = outcomes
        .map(|sim| match sim {
            Some(s) if s >= delta => (1, 0, 0),
            Some(_) => (1, 1, 0),
            None => (1, 1, 1),
        })
        .reduce(|| (0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    DeviationReport::from_counts(total, below, unembeddable, delta)
}

/// Embeds both sides of every pair with pooled word vectors and counts
/// pairs below `delta`.
pub fn deviation_report(pairs: &[(Sentence, Sentence)], store: &EmbeddingStore, delta: f64) -> DeviationReport {
    aggregate(
        pairs
            .par_iter()
            .map(|(orig, aug)| pair_similarity(store, orig, aug)),
        delta,
    )
}

/// Same as [`deviation_report`] for precomputed similarities, `None`
/// marking an unembeddable pair.
pub fn report_from_similarities(similarities: &[Option<f64>], delta: f64) -> DeviationReport {
    aggregate(similarities.par_iter().copied(), delta)
}

#[derive(Debug, Error)]
pub enum PrecomputedError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("duplicate id {id:?} at line {line}")]
    DuplicateId { id: String, line: usize },
    #[error("vector for {id:?} has dimension {found}, expected {expected}")]
    DimensionMismatch { id: String, expected: usize, found: usize },
    #[error("no vector for id {0:?}")]
    MissingId(String),
}

/// Externally computed sentence vectors keyed by sentence id.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedEmbeddings {
    vectors: HashMap<String, Option<SentenceEmbedding>>,
    dim: usize,
}

impl PrecomputedEmbeddings {
    /// `None` for an all-zero vector.
    pub fn get(&self, id: &str) -> Result<Option<&SentenceEmbedding>, PrecomputedError> {
        self.vectors
            .get(id)
            .map(Option::as_ref)
            .ok_or_else(|| PrecomputedError::MissingId(id.to_owned()))
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Similarity of two ids; `Ok(None)` when either vector is zero.
    pub fn similarity(&self, a: &str, b: &str) -> Result<Option<f64>, PrecomputedError> {
        Ok(match (self.get(a)?, self.get(b)?) {
            (Some(x), Some(y)) => Some(deviction(x, y, DEFAULT_DELTA).similarity),
            _ => None,
        })
    }
}

/// Reads `id<TAB>f1 f2 ... fD` lines; vectors are normalized on load.
pub fn load_precomputed(path: impl AsRef<Path>) -> Result<PrecomputedEmbeddings, PrecomputedError> {
    let path = path.as_ref();
    let io_err = |source| PrecomputedError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let mut out = PrecomputedEmbeddings::default();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(io_err)?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let Some((id, values)) = line.split_once('\t') else {
            return Err(PrecomputedError::MalformedRow {
                line: line_no,
                reason: "expected `id<TAB>values`".into(),
            });
        };
        let vector = values
            .split_whitespace()
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| PrecomputedError::MalformedRow {
                        line: line_no,
                        reason: format!("bad value {v:?}"),
                    })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if vector.is_empty() {
            return Err(PrecomputedError::MalformedRow {
                line: line_no,
                reason: "empty vector".into(),
            });
        }
        if out.dim == 0 {
            out.dim = vector.len();
        } else if vector.len() != out.dim {
            return Err(PrecomputedError::DimensionMismatch {
                id: id.to_owned(),
                expected: out.dim,
                found: vector.len(),
            });
        }
        if out.vectors.contains_key(id) {
            return Err(PrecomputedError::DuplicateId {
                id: id.to_owned(),
                line: line_no,
            });
        }
        out.vectors
            .insert(id.to_owned(), SentenceEmbedding::from_raw(vector, 1));
    }
    Ok(out)
}
