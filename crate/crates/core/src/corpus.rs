//! Tokenization, stopwords and labeled dataset I/O.
//!
//! The tokenizer is deliberately simple: whitespace splits a text into
//! chunks, and every leading or trailing punctuation character of a chunk
//! becomes a token of its own. Interior punctuation ("don't", "e.g") stays
//! attached to the word.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;

/// Tag assigned to tokens that have no known part of speech.
pub const UNK_TAG: &str = "UNK";

/// Prefix of metadata lines written by the command-line tools. Dataset
/// readers skip such lines.
pub const META_PREFIX: &str = "#meta ";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("duplicate record id {id:?} at line {line}")]
    DuplicateId { id: String, line: usize },
    #[error("record {id:?} contains a tab; TSV output would be lossy")]
    TabInText { id: String },
    #[error("record {id:?} contains a line break; line-oriented output would be lossy")]
    NewlineInText { id: String },
    #[error("record {id:?} has an empty label")]
    EmptyLabel { id: String },
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// True for characters that split off from word chunks. Combining marks
/// stay with their base letter, so decomposed text tokenizes like composed
/// text.
pub fn is_punct_char(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace() && !is_combining_mark(c)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    surface: String,
    lookup_form: String,
    is_stopword: bool,
    pos_tag: Option<String>,
    is_alphabetic: bool,
}

impl Token {
    /// Builds a token from a non-empty surface string.
    pub fn new(surface: impl Into<String>) -> Self {
        let surface = surface.into();
        debug_assert!(!surface.is_empty(), "token surface must be non-empty");
        let lookup_form = surface.to_lowercase();
        let is_alphabetic = surface.chars().next().is_some_and(char::is_alphabetic)
            && surface.chars().all(|c| c.is_alphabetic() || is_combining_mark(c));
        Token {
            surface,
            lookup_form,
            is_stopword: false,
            pos_tag: None,
            is_alphabetic,
        }
    }

    pub fn surface(&self) -> &str {
        &self.surface
    }

    pub fn lookup_form(&self) -> &str {
        &self.lookup_form
    }

    pub fn is_stopword(&self) -> bool {
        self.is_stopword
    }

    pub fn pos_tag(&self) -> Option<&str> {
        self.pos_tag.as_deref()
    }

    pub fn is_alphabetic(&self) -> bool {
        self.is_alphabetic
    }

    /// A punctuation-only token. These never take part in a perturbation.
    pub fn is_punctuation(&self) -> bool {
        self.surface.chars().all(is_punct_char)
    }

    pub fn with_stopword(mut self, is_stopword: bool) -> Self {
        self.is_stopword = is_stopword;
        self
    }

    pub fn with_tag(mut self, tag: Option<String>) -> Self {
        self.pos_tag = tag;
        self
    }

    pub(crate) fn set_tag(&mut self, tag: Option<String>) {
        self.pos_tag = tag;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    tokens: Vec<Token>,
    raw: String,
}

impl Sentence {
    pub fn from_tokens(tokens: Vec<Token>) -> Self {
        let raw = join_surfaces(&tokens);
        Sentence { tokens, raw }
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn surfaces(&self) -> Vec<&str> {
        self.tokens.iter().map(Token::surface).collect()
    }

    /// Marks stopwords according to `stopwords`.
    pub fn with_stopwords(mut self, stopwords: &StopwordSet) -> Self {
        for token in &mut self.tokens {
            token.is_stopword = stopwords.contains(&token.lookup_form);
        }
        self
    }

    pub(crate) fn tokens_mut(&mut self) -> &mut [Token] {
        &mut self.tokens
    }

    pub fn into_tokens(self) -> Vec<Token> {
        self.tokens
    }
}

/// Splits `text` into tokens.
pub fn tokenize(text: &str) -> Sentence {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let start = chunk
            .char_indices()
            .find(|&(_, c)| !is_punct_char(c))
            .map(|(i, _)| i);
        let Some(start) = start else {
            tokens.extend(chunk.chars().map(|c| Token::new(c.to_string())));
            continue;
        };
        // `start` exists, so there is a last non-punctuation char as well.
        let (last, last_char) = chunk
            .char_indices()
            .rev()
            .find(|&(_, c)| !is_punct_char(c))
            .unwrap();
        let end = last + last_char.len_utf8();

        tokens.extend(chunk[..start].chars().map(|c| Token::new(c.to_string())));
        tokens.push(Token::new(&chunk[start..end]));
        tokens.extend(chunk[end..].chars().map(|c| Token::new(c.to_string())));
    }
    Sentence {
        tokens,
        raw: text.to_owned(),
    }
}

fn join_surfaces(tokens: &[Token]) -> String {
    let mut out = String::new();
    for (i, token) in tokens.iter().enumerate() {
        if i > 0 && !token.is_punctuation() {
            out.push(' ');
        }
        out.push_str(&token.surface);
    }
    out
}

/// Joins tokens with single spaces; punctuation-only tokens attach to the
/// preceding token.
pub fn detokenize(sentence: &Sentence) -> String {
    join_surfaces(&sentence.tokens)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StopwordSet {
    words: HashSet<String>,
}

impl StopwordSet {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        StopwordSet {
            words: words
                .into_iter()
                .map(|w| w.as_ref().trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect(),
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        // Fast path for callers that already pass a lookup form.
        self.words.contains(word) || self.words.contains(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Reads a stopword file: one word per line, `#` comments and blank lines
/// ignored.
pub fn load_stopwords(path: impl AsRef<Path>) -> Result<StopwordSet, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut words = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        let entry = line.trim();
        if entry.is_empty() || entry.starts_with('#') {
            continue;
        }
        words.push(entry.to_owned());
    }
    Ok(StopwordSet::new(words))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub id: String,
    pub text: String,
    pub label: String,
}

impl LabeledRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: impl Into<String>) -> Self {
        LabeledRecord {
            id: id.into(),
            text: text.into(),
            label: label.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatasetFormat {
    Tsv,
    Jsonl,
}

impl DatasetFormat {
    /// Guesses the format from a file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("tsv") => DatasetFormat::Tsv,
            _ => DatasetFormat::Jsonl,
        }
    }
}

impl std::str::FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" => Ok(DatasetFormat::Tsv),
            "jsonl" => Ok(DatasetFormat::Jsonl),
            other => Err(format!("unknown dataset format {other:?} (expected tsv or jsonl)")),
        }
    }
}

#[derive(Deserialize)]
struct JsonRow {
    id: Option<String>,
    text: String,
    label: String,
}

/// Parses dataset rows from a reader. Line numbers in errors are 1-based.
pub fn read_dataset<R: BufRead>(
    reader: R,
    format: DatasetFormat,
    path: &Path,
) -> Result<Vec<LabeledRecord>, CorpusError> {
    let mut records = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (line_idx, line) in reader.lines().enumerate() {
        let line_no = line_idx + 1;
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.starts_with(META_PREFIX) {
            continue;
        }
        // ids default to the zero-based index among data lines
        let auto_id = records.len().to_string();
        let record = match format {
            DatasetFormat::Tsv => {
                let fields: Vec<&str> = line.split('\t').collect();
                if fields.len() != 2 {
                    return Err(CorpusError::MalformedRow {
                        line: line_no,
                        reason: format!("expected 2 tab-separated fields, found {}", fields.len()),
                    });
                }
                LabeledRecord::new(auto_id, fields[0], fields[1])
            }
            DatasetFormat::Jsonl => {
                let row: JsonRow =
                    serde_json::from_str(line).map_err(|e| CorpusError::MalformedRow {
                        line: line_no,
                        reason: e.to_string(),
                    })?;
                LabeledRecord::new(row.id.unwrap_or(auto_id), row.text, row.label)
            }
        };
        if record.label.is_empty() {
            return Err(CorpusError::MalformedRow {
                line: line_no,
                reason: "empty label".into(),
            });
        }
        if seen.insert(record.id.clone(), line_no).is_some() {
            return Err(CorpusError::DuplicateId {
                id: record.id,
                line: line_no,
            });
        }
        records.push(record);
    }
    Ok(records)
}

pub fn load_dataset(
    path: impl AsRef<Path>,
    format: DatasetFormat,
) -> Result<Vec<LabeledRecord>, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    read_dataset(BufReader::new(file), format, path)
}

/// Serializes records. TSV output carries no ids, so a TSV round trip
/// reproduces ids only when they are the zero-based record indices.
pub fn write_records<W: Write>(
    mut out: W,
    records: &[LabeledRecord],
    format: DatasetFormat,
) -> Result<(), CorpusError> {
    let mut ids = HashSet::new();
    for record in records {
        if record.text.contains(['\n', '\r']) || record.label.contains(['\n', '\r']) {
            return Err(CorpusError::NewlineInText {
                id: record.id.clone(),
            });
        }
        if record.label.is_empty() {
            return Err(CorpusError::EmptyLabel {
                id: record.id.clone(),
            });
        }
        if format == DatasetFormat::Tsv && (record.text.contains('\t') || record.label.contains('\t')) {
            return Err(CorpusError::TabInText {
                id: record.id.clone(),
            });
        }
        if !ids.insert(record.id.as_str()) {
            return Err(CorpusError::DuplicateId {
                id: record.id.clone(),
                line: ids.len() + 1,
            });
        }
    }

    let io_err = |e| CorpusError::io(Path::new("<output>"), e);
    for record in records {
        match format {
            DatasetFormat::Tsv => writeln!(out, "{}\t{}", record.text, record.label),
            DatasetFormat::Jsonl => {
                let line = serde_json::to_string(record).expect("records serialize");
                writeln!(out, "{line}")
            }
        }
        .map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

pub fn write_dataset(
    records: &[LabeledRecord],
    path: impl AsRef<Path>,
    format: DatasetFormat,
) -> Result<(), CorpusError> {
    let path = path.as_ref();
    // Validate before creating the file so a refused write leaves nothing behind.
    write_records(std::io::sink(), records, format)?;
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    write_records(BufWriter::new(file), records, format).map_err(|e| match e {
        CorpusError::Io { source, .. } => CorpusError::io(path, source),
        other => other,
    })
}
