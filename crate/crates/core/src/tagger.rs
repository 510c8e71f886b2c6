//! Part-of-speech tags from a lexicon or from pre-tagged CoNLL-style input.
//!
//! Tags are opaque uppercase symbols. Tokens the lexicon does not know are
//! tagged [`UNK_TAG`].

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corpus::{Sentence, Token, UNK_TAG};

#[derive(Debug, Error)]
pub enum TaggerError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("sentence starting at line {line} has no `# label = ...` comment")]
    MissingLabel { line: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PosLexicon {
    entries: HashMap<String, String>,
    tagset: BTreeSet<String>,
}

impl PosLexicon {
    /// Builds a lexicon from `(word, tag)` pairs; the first tag seen for a
    /// word wins.
    pub fn from_entries<I, W, T>(entries: I) -> Self
    where
        I: IntoIterator<Item = (W, T)>,
        W: AsRef<str>,
        T: AsRef<str>,
    {
        let mut lexicon = PosLexicon::default();
        for (word, tag) in entries {
            lexicon.insert(word.as_ref(), tag.as_ref());
        }
        lexicon
    }

    fn insert(&mut self, word: &str, tag: &str) {
        let tag = tag.trim().to_uppercase();
        let key = word.trim().to_lowercase();
        if !self.entries.contains_key(&key) {
            self.tagset.insert(tag.clone());
            self.entries.insert(key, tag);
        }
    }

    pub fn tag_of(&self, word: &str) -> Option<&str> {
        self.entries
            .get(word)
            .or_else(|| self.entries.get(&word.to_lowercase()))
            .map(String::as_str)
    }

    pub fn tagset(&self) -> &BTreeSet<String> {
        &self.tagset
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Reads a `word<TAB>tag` lexicon.
pub fn load_lexicon(path: impl AsRef<Path>) -> Result<PosLexicon, TaggerError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| TaggerError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lexicon = PosLexicon::default();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| TaggerError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        match line.split('\t').collect::<Vec<_>>()[..] {
            [word, tag] if !word.trim().is_empty() && !tag.trim().is_empty() => {
                lexicon.insert(word, tag)
            }
            _ => {
                return Err(TaggerError::MalformedRow {
                    line: idx + 1,
                    reason: "expected `word<TAB>tag`".into(),
                })
            }
        }
    }
    Ok(lexicon)
}

/// Sets every token's tag from the lexicon, falling back to `UNK`.
pub fn tag_sentence(sentence: &Sentence, lexicon: &PosLexicon) -> Sentence {
    let mut tagged = sentence.clone();
    for token in tagged.tokens_mut() {
        let tag = lexicon.tag_of(token.lookup_form()).unwrap_or(UNK_TAG);
        token.set_tag(Some(tag.to_owned()));
    }
    tagged
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedRecord {
    pub id: String,
    pub sentence: Sentence,
    pub label: String,
}

/// Parses a CoNLL-style file: `form<TAB>tag` lines, blank-line separated
/// sentences, each preceded by `# label = X`. An optional `# id = X`
/// comment names the sentence; otherwise ids are zero-based block indices.
pub fn parse_pretagged(path: impl AsRef<Path>) -> Result<Vec<TaggedRecord>, TaggerError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| TaggerError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_pretagged(BufReader::new(file), path)
}

pub fn read_pretagged<R: BufRead>(reader: R, path: &Path) -> Result<Vec<TaggedRecord>, TaggerError> {
    struct Block {
        start: usize,
        id: Option<String>,
        label: Option<String>,
        tokens: Vec<Token>,
    }

    fn flush(block: &mut Option<Block>, out: &mut Vec<TaggedRecord>) -> Result<(), TaggerError> {
        let Some(b) = block.take() else {
            return Ok(());
        };
        if b.tokens.is_empty() && b.label.is_none() && b.id.is_none() {
            return Ok(());
        }
        let label = b.label.ok_or(TaggerError::MissingLabel { line: b.start })?;
        out.push(TaggedRecord {
            id: b.id.unwrap_or_else(|| out.len().to_string()),
            sentence: Sentence::from_tokens(b.tokens),
            label,
        });
        Ok(())
    }

    let mut out = Vec::new();
    let mut block: Option<Block> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| TaggerError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            flush(&mut block, &mut out)?;
            continue;
        }
        let current = block.get_or_insert_with(|| Block {
            start: line_no,
            id: None,
            label: None,
            tokens: Vec::new(),
        });
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                match key.trim() {
                    "label" => current.label = Some(value.trim().to_owned()),
                    "id" => current.id = Some(value.trim().to_owned()),
                    _ => {}
                }
            }
            continue;
        }
        match line.split('\t').collect::<Vec<_>>()[..] {
            [form, tag] if !form.is_empty() && !form.contains(char::is_whitespace) && !tag.is_empty() => {
                current
                    .tokens
                    .push(Token::new(form).with_tag(Some(tag.to_owned())));
            }
            _ => {
                return Err(TaggerError::MalformedRow {
                    line: line_no,
                    reason: "expected `form<TAB>tag`".into(),
                })
            }
        }
    }
    flush(&mut block, &mut out)?;
    Ok(out)
}
