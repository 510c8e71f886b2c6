//! Word-embedding store with exact cosine nearest-neighbor search.
//!
//! Rows are normalized once at load, so cosine similarity is a plain dot
//! product. Scores are accumulated in `f64` over `f32` rows.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corpus::{Sentence, Token};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("malformed line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("header declares {declared}, file contains {actual}")]
    HeaderMismatch { declared: String, actual: String },
    #[error("non-finite value in vector for {word:?} (line {line})")]
    NonFiniteValue { word: String, line: usize },
    #[error("duplicate word {word:?} at line {line}")]
    DuplicateWord { word: String, line: usize },
    #[error("zero vector for {word:?} cannot be normalized")]
    ZeroVector { word: String },
    #[error("word {0:?} is not in the vocabulary")]
    OutOfVocabulary(String),
    #[error("no token of the sentence is in the vocabulary")]
    EmptyEmbedding,
    #[error("embedding dimension must be positive")]
    ZeroDimension,
}

/// One neighbor-query hit.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborResult {
    pub word: String,
    pub score: f64,
}

/// Mean-pooled, unit-normalized sentence vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceEmbedding {
    pub vector: Vec<f64>,
    pub covered_tokens: usize,
}

impl SentenceEmbedding {
    /// Normalizes an arbitrary vector. Returns `None` for a zero or
    /// non-finite vector.
    pub fn from_raw(vector: Vec<f64>, covered_tokens: usize) -> Option<Self> {
        let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return None;
        }
        Some(SentenceEmbedding {
            vector: vector.into_iter().map(|x| x / norm).collect(),
            covered_tokens,
        })
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// Immutable vocabulary → unit vector table.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    // row-major, words.len() * dim
    matrix: Vec<f32>,
    // rows sharing a lowercase form share a group id
    fold_group: Vec<u32>,
}

impl EmbeddingStore {
    /// Builds a store from raw rows, normalizing each.
    pub fn from_rows<I, S>(dim: usize, rows: I) -> Result<Self, EmbeddingError>
    where
        I: IntoIterator<Item = (S, Vec<f32>)>,
        S: Into<String>,
    {
        let mut builder = Builder::new(dim)?;
        for (line, (word, values)) in rows.into_iter().enumerate() {
            builder.push(word.into(), &values, line + 1)?;
        }
        Ok(builder.finish())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Vocabulary in file order.
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn row_index(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// The unit-normalized row of `word`.
    pub fn vector(&self, word: &str) -> Option<&[f32]> {
        self.row_index(word).map(|i| self.row(i))
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }

    /// Resolves a token to a vocabulary entry: exact surface first, then
    /// the lowercase lookup form.
    pub fn resolve<'a>(&'a self, token: &Token) -> Option<&'a str> {
        self.index
            .get_key_value(token.surface())
            .or_else(|| self.index.get_key_value(token.lookup_form()))
            .map(|(k, _)| k.as_str())
    }

    fn dot_rows(&self, a: usize, b: usize) -> f64 {
        dot(self.row(a), self.row(b))
    }

    pub fn cosine(&self, w1: &str, w2: &str) -> Result<f64, EmbeddingError> {
        let a = self.lookup(w1)?;
        let b = self.lookup(w2)?;
        Ok(self.dot_rows(a, b))
    }

    fn lookup(&self, word: &str) -> Result<usize, EmbeddingError> {
        self.row_index(word)
            .ok_or_else(|| EmbeddingError::OutOfVocabulary(word.to_owned()))
    }

    /// Exact top-`k` neighbors of `word` by cosine similarity.
    ///
    /// The query itself, its case variants and every word in `exclude` are
    /// skipped. Results are ordered by descending score, ties by ascending
    /// word.
    pub fn nearest_neighbors(
        &self,
        word: &str,
        k: usize,
        exclude: &HashSet<String>,
    ) -> Result<Vec<NeighborResult>, EmbeddingError> {
        let query = self.lookup(word)?;
        if k == 0 {
            return Ok(Vec::new());
        }
        let query_group = self.fold_group[query];
        let mut heap: BinaryHeap<Reverse<Ranked<'_>>> = BinaryHeap::with_capacity(k + 1);
        for (i, candidate) in self.words.iter().enumerate() {
            if self.fold_group[i] == query_group || exclude.contains(candidate) {
                continue;
            }
            let ranked = Ranked {
                score: self.dot_rows(query, i),
                word: candidate,
            };
            if heap.len() < k {
                heap.push(Reverse(ranked));
            } else if let Some(mut worst) = heap.peek_mut() {
                if ranked > worst.0 {
                    *worst = Reverse(ranked);
                }
            }
        }
        let mut hits: Vec<Ranked<'_>> = heap.into_iter().map(|r| r.0).collect();
        hits.sort_by(|a, b| b.cmp(a));
        Ok(hits
            .into_iter()
            .map(|r| NeighborResult {
                word: r.word.clone(),
                score: r.score,
            })
            .collect())
    }

    /// Mean of the unit rows of all in-vocabulary tokens, re-normalized.
    ///
    /// Out-of-vocabulary tokens are skipped. Rows are summed in row-index
    /// order so the result does not depend on token order.
    pub fn sentence_embedding(&self, sentence: &Sentence) -> Result<SentenceEmbedding, EmbeddingError> {
        let mut rows: Vec<usize> = sentence
            .tokens()
            .iter()
            .filter_map(|t| self.resolve(t))
            .map(|w| self.index[w])
            .collect();
        if rows.is_empty() {
            return Err(EmbeddingError::EmptyEmbedding);
        }
        rows.sort_unstable();
        let covered = rows.len();
        let mut sum = vec![0.0f64; self.dim];
        for (row, count) in run_lengths(&rows) {
            let weight = count as f64;
            for (acc, &x) in sum.iter_mut().zip(self.row(row)) {
                *acc += weight * f64::from(x);
            }
        }
        for acc in &mut sum {
            *acc /= covered as f64;
        }
        // The mean of unit vectors can only vanish when rows cancel exactly.
        SentenceEmbedding::from_raw(sum, covered).ok_or(EmbeddingError::EmptyEmbedding)
    }
}

fn run_lengths(sorted: &[usize]) -> impl Iterator<Item = (usize, usize)> + '_ {
    sorted
        .chunk_by(|a, b| a == b)
        .map(|run| (run[0], run.len()))
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

#[derive(Debug, Clone, Copy)]
struct Ranked<'a> {
    score: f64,
    word: &'a String,
}

// Greater means better: higher score, then lexicographically smaller word.
impl Ord for Ranked<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.word.cmp(self.word))
    }
}

impl PartialOrd for Ranked<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Ranked<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked<'_> {}

struct Builder {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    matrix: Vec<f32>,
    fold_group: Vec<u32>,
    groups: HashMap<String, u32>,
}

impl Builder {
    fn new(dim: usize) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::ZeroDimension);
        }
        Ok(Builder {
            dim,
            words: Vec::new(),
            index: HashMap::new(),
            matrix: Vec::new(),
            fold_group: Vec::new(),
            groups: HashMap::new(),
        })
    }

    fn push(&mut self, word: String, values: &[f32], line: usize) -> Result<(), EmbeddingError> {
        if values.len() != self.dim {
            return Err(EmbeddingError::HeaderMismatch {
                declared: format!("dim {}", self.dim),
                actual: format!("{} values for {word:?} on line {line}", values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFiniteValue { word, line });
        }
        if self.index.contains_key(&word) {
            return Err(EmbeddingError::DuplicateWord { word, line });
        }
        let norm = values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(EmbeddingError::ZeroVector { word });
        }
        self.matrix
            .extend(values.iter().map(|&v| (f64::from(v) / norm) as f32));
        let next_group = self.groups.len() as u32;
        let group = *self.groups.entry(word.to_lowercase()).or_insert(next_group);
        self.fold_group.push(group);
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        Ok(())
    }

    fn finish(self) -> EmbeddingStore {
        EmbeddingStore {
            dim: self.dim,
            words: self.words,
            index: self.index,
            matrix: self.matrix,
            fold_group: self.fold_group,
        }
    }
}

/// Loads a model in word2vec text format: a `<count> <dim>` header line,
/// then one `<word> <f1> ... <fdim>` line per word.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingStore, EmbeddingError> {
    let path = path.as_ref();
    let io_err = |source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    read_embeddings(BufReader::new(file)).map_err(|e| match e {
        EmbeddingError::Io { source, .. } => io_err(source),
        other => other,
    })
}

pub fn read_embeddings<R: BufRead>(reader: R) -> Result<EmbeddingStore, EmbeddingError> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line.map_err(|source| EmbeddingError::Io {
            path: PathBuf::new(),
            source,
        })?,
        None => return Err(EmbeddingError::MalformedHeader("empty file".into())),
    };
    let (count, dim) = parse_header(header.trim_end())?;
    let mut builder = Builder::new(dim)?;
    let mut values = Vec::with_capacity(dim);
    let mut rows = 0usize;
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line.map_err(|source| EmbeddingError::Io {
            path: PathBuf::new(),
            source,
        })?;
        // Many writers leave a trailing space before the newline.
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(' ');
        let word = fields.next().unwrap_or_default();
        if word.is_empty() {
            return Err(EmbeddingError::MalformedLine {
                line: line_no,
                reason: "empty word".into(),
            });
        }
        values.clear();
        for field in fields {
            let v: f32 = field.parse().map_err(|_| EmbeddingError::MalformedLine {
                line: line_no,
                reason: format!("cannot parse {field:?} as a number"),
            })?;
            values.push(v);
        }
        builder.push(word.to_owned(), &values, line_no)?;
        rows += 1;
    }
    if rows != count {
        return Err(EmbeddingError::HeaderMismatch {
            declared: format!("{count} words"),
            actual: format!("{rows} words"),
        });
    }
    Ok(builder.finish())
}

/// Writes the store in word2vec text format. Rows are written as stored
/// (unit-normalized).
pub fn write_embeddings<W: std::io::Write>(store: &EmbeddingStore, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{} {}", store.len(), store.dim())?;
    for (i, word) in store.words().iter().enumerate() {
        out.write_all(word.as_bytes())?;
        for v in store.row(i) {
            write!(out, " {v}")?;
        }
        out.write_all(b"\n")?;
    }
    out.flush()
}

fn parse_header(header: &str) -> Result<(usize, usize), EmbeddingError> {
    let mut parts = header.split(' ');
    let (Some(count), Some(dim), None) = (parts.next(), parts.next(), parts.next()) else {
        return Err(EmbeddingError::MalformedHeader(format!(
            "expected `<vocab_count> <dim>`, got {header:?}"
        )));
    };
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| EmbeddingError::MalformedHeader(format!("not a count: {s:?}")))
    };
    Ok((parse(count)?, parse(dim)?))
}
