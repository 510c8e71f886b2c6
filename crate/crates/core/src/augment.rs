//! The perturbation engine.
//!
//! Four embedding-backed EDA operations (replace, insert, swap, delete),
//! their composition, and tag-constrained single-token replacement. Every
//! variant draws from its own RNG stream keyed by `(seed, record id, round,
//! operation)`, so output never depends on processing order.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

use crate::corpus::{detokenize, tokenize, LabeledRecord, Sentence, StopwordSet, Token, UNK_TAG};
use crate::embedding::{EmbeddingError, EmbeddingStore};
use crate::seeding;
use crate::tagger::{tag_sentence, PosLexicon};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AugmentError {
    #[error("no token carries tag {0:?}")]
    NoMatchingToken(String),
    #[error("no tagged token to choose from")]
    NoTaggedToken,
    #[error("word {0:?} is not in the vocabulary")]
    OutOfVocabulary(String),
    #[error("no replacement candidate for {0:?} survives the similarity floor")]
    NoCandidate(String),
    #[error("invalid augmentation config: {0}")]
    InvalidConfig(String),
}

/// The four EDA-style operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EddaOp {
    Rsr,
    Ri,
    Rs,
    Rd,
}

impl EddaOp {
    /// Fixed application order in composed mode.
    pub const ALL: [EddaOp; 4] = [EddaOp::Rsr, EddaOp::Ri, EddaOp::Rs, EddaOp::Rd];

    pub fn label(self) -> OpLabel {
        match self {
            EddaOp::Rsr => OpLabel::Rsr,
            EddaOp::Ri => OpLabel::Ri,
            EddaOp::Rs => OpLabel::Rs,
            EddaOp::Rd => OpLabel::Rd,
        }
    }
}

impl FromStr for EddaOp {
    type Err = AugmentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "RSR" => Ok(EddaOp::Rsr),
            "RI" => Ok(EddaOp::Ri),
            "RS" => Ok(EddaOp::Rs),
            "RD" => Ok(EddaOp::Rd),
            other => Err(AugmentError::InvalidConfig(format!("unknown operation {other:?}"))),
        }
    }
}

impl fmt::Display for EddaOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.label().fmt(f)
    }
}

/// Provenance label of an augmented record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpLabel {
    Rsr,
    Ri,
    Rs,
    Rd,
    Edda,
    Tssr,
}

impl OpLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            OpLabel::Rsr => "RSR",
            OpLabel::Ri => "RI",
            OpLabel::Rs => "RS",
            OpLabel::Rd => "RD",
            OpLabel::Edda => "EDDA",
            OpLabel::Tssr => "TSSR",
        }
    }
}

impl fmt::Display for OpLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OpLabel {
    type Err = AugmentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "EDDA" => Ok(OpLabel::Edda),
            "TSSR" => Ok(OpLabel::Tssr),
            other => other.parse::<EddaOp>().map(EddaOp::label),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum EddaMode {
    /// One variant per enabled operation per round.
    #[default]
    PerOp,
    /// One variant per round with all enabled operations applied in order.
    Composed,
}

impl FromStr for EddaMode {
    type Err = AugmentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "per-op" | "perop" => Ok(EddaMode::PerOp),
            "composed" => Ok(EddaMode::Composed),
            other => Err(AugmentError::InvalidConfig(format!("unknown mode {other:?}"))),
        }
    }
}

impl fmt::Display for EddaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EddaMode::PerOp => "per-op",
            EddaMode::Composed => "composed",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationConfig {
    /// Fraction of tokens edited per sentence, in (0, 1].
    pub alpha: f64,
    /// Sentences created per input.
    pub n_aug: usize,
    /// Neighbor pool size for candidate sampling.
    pub top_k: usize,
    pub seed: u64,
    pub enabled_ops: BTreeSet<EddaOp>,
    pub mode: EddaMode,
    /// When set, only records with one of these labels are augmented.
    pub augment_labels: Option<BTreeSet<String>>,
    /// Candidates scoring below this cosine are never used.
    pub min_similarity: f64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            alpha: 0.2,
            n_aug: 1,
            top_k: 10,
            seed: 0,
            enabled_ops: EddaOp::ALL.into_iter().collect(),
            mode: EddaMode::PerOp,
            augment_labels: None,
            min_similarity: 0.0,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        let bad = |msg: String| Err(AugmentError::InvalidConfig(msg));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must be in (0, 1], got {}", self.alpha));
        }
        if self.n_aug == 0 {
            return bad("n_aug must be at least 1".into());
        }
        if self.top_k == 0 {
            return bad("top_k must be at least 1".into());
        }
        if self.enabled_ops.is_empty() {
            return bad("at least one operation must be enabled".into());
        }
        if !self.min_similarity.is_finite() {
            return bad("min_similarity must be finite".into());
        }
        Ok(())
    }

    pub fn with_ops(mut self, ops: impl IntoIterator<Item = EddaOp>) -> Self {
        self.enabled_ops = ops.into_iter().collect();
        self
    }

    pub fn should_augment(&self, label: &str) -> bool {
        self.augment_labels
            .as_ref()
            .is_none_or(|labels| labels.contains(label))
    }
}

/// Number of edits for a sentence with `eligible` candidate positions:
/// `max(1, round(alpha * eligible))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EditBudget {
    pub n_edits: usize,
}

impl EditBudget {
    pub fn new(alpha: f64, eligible: usize) -> Self {
        EditBudget {
            n_edits: ((alpha * eligible as f64).round() as usize).max(1),
        }
    }
}

/// One edit. Positions refer to the sentence as it was when the edit was
/// applied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Edit {
    Replace {
        position: usize,
        old: String,
        new: String,
    },
    Insert {
        position: usize,
        new: String,
    },
    Delete {
        position: usize,
        old: String,
    },
    Swap {
        first: usize,
        second: usize,
    },
}

impl fmt::Display for Edit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Edit::Replace { position, old, new } => write!(f, "{position}:{old}->{new}"),
            Edit::Insert { position, new } => write!(f, "{position}:+{new}"),
            Edit::Delete { position, old } => write!(f, "{position}:-{old}"),
            Edit::Swap { first, second } => write!(f, "{first}<->{second}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedRecord {
    pub source_id: String,
    pub variant_index: usize,
    pub op: OpLabel,
    pub text: String,
    pub label: String,
    pub edits: Vec<Edit>,
    pub noop: bool,
}

impl AugmentedRecord {
    fn new(source: &LabeledRecord, variant_index: usize, op: OpLabel, sentence: &Sentence, edits: Vec<Edit>) -> Self {
        // A noop keeps the original text byte-for-byte.
        let text = if edits.is_empty() {
            source.text.clone()
        } else {
            detokenize(sentence)
        };
        AugmentedRecord {
            source_id: source.id.clone(),
            variant_index,
            op,
            text,
            label: source.label.clone(),
            noop: edits.is_empty(),
            edits,
        }
    }

    /// Provenance id `<source_id>#<op>#<variant_index>`.
    pub fn id(&self) -> String {
        format!("{}#{}#{}", self.source_id, self.op, self.variant_index)
    }

    pub fn to_record(&self) -> LabeledRecord {
        LabeledRecord::new(self.id(), self.text.clone(), self.label.clone())
    }
}

/// Shared read-only inputs of the augmentation operations.
#[derive(Debug, Clone, Copy)]
pub struct Resources<'a> {
    pub store: &'a EmbeddingStore,
    pub stopwords: &'a StopwordSet,
    pub lexicon: Option<&'a PosLexicon>,
}

impl<'a> Resources<'a> {
    pub fn new(store: &'a EmbeddingStore, stopwords: &'a StopwordSet) -> Self {
        Resources {
            store,
            stopwords,
            lexicon: None,
        }
    }

    pub fn with_lexicon(mut self, lexicon: &'a PosLexicon) -> Self {
        self.lexicon = Some(lexicon);
        self
    }
}

/// Alphabetic, not a stopword, and in the vocabulary.
pub fn is_replaceable(token: &Token, store: &EmbeddingStore, stopwords: &StopwordSet) -> bool {
    token.is_alphabetic()
        && !stopwords.contains(token.lookup_form())
        && store.resolve(token).is_some()
}

fn replaceable_positions(s: &Sentence, store: &EmbeddingStore, stopwords: &StopwordSet) -> Vec<usize> {
    s.tokens()
        .iter()
        .enumerate()
        .filter(|(_, t)| is_replaceable(t, store, stopwords))
        .map(|(i, _)| i)
        .collect()
}

fn word_positions(s: &Sentence) -> Vec<usize> {
    s.tokens()
        .iter()
        .enumerate()
        .filter(|(_, t)| !t.is_punctuation())
        .map(|(i, _)| i)
        .collect()
}

/// Copies the initial capital of `template` onto `word`.
fn match_case(template: &str, word: &str) -> String {
    let starts_upper = template.chars().next().is_some_and(char::is_uppercase);
    let mut chars = word.chars();
    match chars.next() {
        Some(first) if starts_upper && first.is_lowercase() => first.to_uppercase().chain(chars).collect(),
        _ => word.to_owned(),
    }
}

/// A vocabulary entry usable as a replacement: it must survive tokenization
/// as a single identical token.
fn is_clean_word(word: &str) -> bool {
    let s = tokenize(word);
    s.len() == 1 && s.tokens()[0].surface() == word && !s.tokens()[0].is_punctuation()
}

/// Samples a replacement for `token` uniformly from its `top_k` neighbors
/// scoring at least `min_similarity`. The result carries the token's
/// initial capitalization.
pub fn find_candidate<R: Rng + ?Sized>(
    store: &EmbeddingStore,
    token: &Token,
    cfg: &AugmentationConfig,
    rng: &mut R,
) -> Result<String, AugmentError> {
    sample_neighbor(store, token, cfg, rng).map(|w| match_case(token.surface(), w))
}

/// Like [`find_candidate`] but returns the vocabulary entry as stored.
fn sample_neighbor<'s, R: Rng + ?Sized>(
    store: &'s EmbeddingStore,
    token: &Token,
    cfg: &AugmentationConfig,
    rng: &mut R,
) -> Result<&'s str, AugmentError> {
    let word = store
        .resolve(token)
        .ok_or_else(|| AugmentError::OutOfVocabulary(token.surface().to_owned()))?;
    let neighbors = store
        .nearest_neighbors(word, cfg.top_k, &HashSet::new())
        .map_err(|e| match e {
            EmbeddingError::OutOfVocabulary(w) => AugmentError::OutOfVocabulary(w),
            other => unreachable!("neighbor query on a resolved word: {other}"),
        })?;
    let pool: Vec<&str> = neighbors
        .iter()
        .filter(|n| n.score >= cfg.min_similarity)
        .map(|n| n.word.as_str())
        .filter(|w| is_clean_word(w) && w.to_lowercase() != token.lookup_form())
        .collect();
    if pool.is_empty() {
        return Err(AugmentError::NoCandidate(token.surface().to_owned()));
    }
    let choice = pool[rng.random_range(0..pool.len())];
    let idx = store.row_index(choice).expect("neighbor is in the vocabulary");
    Ok(store.words()[idx].as_str())
}

fn replacement_token(surface: String, stopwords: &StopwordSet) -> Token {
    let token = Token::new(surface);
    let stop = stopwords.contains(token.lookup_form());
    token.with_stopword(stop)
}

/// Random synonym replacement.
pub fn rsr<R: Rng + ?Sized>(
    s: &Sentence,
    store: &EmbeddingStore,
    stopwords: &StopwordSet,
    cfg: &AugmentationConfig,
    rng: &mut R,
) -> (Sentence, Vec<Edit>) {
    let eligible = replaceable_positions(s, store, stopwords);
    if eligible.is_empty() {
        return (s.clone(), Vec::new());
    }
    let n = EditBudget::new(cfg.alpha, eligible.len()).n_edits.min(eligible.len());
    let mut picks = index::sample(rng, eligible.len(), n).into_vec();
    picks.sort_unstable();

    let mut tokens = s.tokens().to_vec();
    let mut edits = Vec::new();
    for pick in picks {
        let position = eligible[pick];
        let Ok(new) = find_candidate(store, &tokens[position], cfg, rng) else {
            continue;
        };
        let old = tokens[position].surface().to_owned();
        tokens[position] = replacement_token(new.clone(), stopwords);
        edits.push(Edit::Replace { position, old, new });
    }
    (Sentence::from_tokens(tokens), edits)
}

/// Random insertion of a neighbor of a random replaceable word.
pub fn ri<R: Rng + ?Sized>(
    s: &Sentence,
    store: &EmbeddingStore,
    stopwords: &StopwordSet,
    cfg: &AugmentationConfig,
    rng: &mut R,
) -> (Sentence, Vec<Edit>) {
    let sources = replaceable_positions(s, store, stopwords);
    if sources.is_empty() {
        return (s.clone(), Vec::new());
    }
    let n = EditBudget::new(cfg.alpha, sources.len()).n_edits;
    let mut tokens = s.tokens().to_vec();
    let mut edits = Vec::new();
    for _ in 0..n {
        let source = &s.tokens()[sources[rng.random_range(0..sources.len())]];
        // Inserted words keep their vocabulary casing.
        let Ok(new) = sample_neighbor(store, source, cfg, rng).map(str::to_owned) else {
            continue;
        };
        let position = rng.random_range(0..=tokens.len());
        tokens.insert(position, replacement_token(new.clone(), stopwords));
        edits.push(Edit::Insert { position, new });
    }
    (Sentence::from_tokens(tokens), edits)
}

/// Random swap of word positions.
pub fn rs<R: Rng + ?Sized>(s: &Sentence, cfg: &AugmentationConfig, rng: &mut R) -> (Sentence, Vec<Edit>) {
    let words = word_positions(s);
    if words.len() < 2 {
        return (s.clone(), Vec::new());
    }
    let n = EditBudget::new(cfg.alpha, words.len()).n_edits;
    let mut tokens = s.tokens().to_vec();
    let mut edits = Vec::with_capacity(n);
    for _ in 0..n {
        let pair = index::sample(rng, words.len(), 2);
        let (a, b) = (words[pair.index(0)], words[pair.index(1)]);
        tokens.swap(a, b);
        edits.push(Edit::Swap {
            first: a.min(b),
            second: a.max(b),
        });
    }
    (Sentence::from_tokens(tokens), edits)
}

/// Random deletion of word positions. At least one word always survives.
pub fn rd<R: Rng + ?Sized>(s: &Sentence, cfg: &AugmentationConfig, rng: &mut R) -> (Sentence, Vec<Edit>) {
    let words = word_positions(s);
    if words.len() < 2 {
        return (s.clone(), Vec::new());
    }
    let n = EditBudget::new(cfg.alpha, words.len()).n_edits.min(words.len() - 1);
    let mut doomed: Vec<usize> = index::sample(rng, words.len(), n)
        .into_iter()
        .map(|i| words[i])
        .collect();
    doomed.sort_unstable();
    let edits = doomed
        .iter()
        .map(|&position| Edit::Delete {
            position,
            old: s.tokens()[position].surface().to_owned(),
        })
        .collect();
    let tokens = s
        .tokens()
        .iter()
        .enumerate()
        .filter(|(i, _)| doomed.binary_search(i).is_err())
        .map(|(_, t)| t.clone())
        .collect();
    (Sentence::from_tokens(tokens), edits)
}

/// Applies a single EDDA operation.
pub fn apply_op<R: Rng + ?Sized>(
    op: EddaOp,
    s: &Sentence,
    res: &Resources<'_>,
    cfg: &AugmentationConfig,
    rng: &mut R,
) -> (Sentence, Vec<Edit>) {
    match op {
        EddaOp::Rsr => rsr(s, res.store, res.stopwords, cfg, rng),
        EddaOp::Ri => ri(s, res.store, res.stopwords, cfg, rng),
        EddaOp::Rs => rs(s, cfg, rng),
        EddaOp::Rd => rd(s, cfg, rng),
    }
}

/// EDA-style augmentation of one record.
///
/// Per-op mode yields `n_aug * |enabled_ops|` variants; composed mode yields
/// `n_aug`. Records whose label is filtered out by `augment_labels` yield
/// nothing.
pub fn edda(record: &LabeledRecord, res: &Resources<'_>, cfg: &AugmentationConfig) -> Vec<AugmentedRecord> {
    if !cfg.should_augment(&record.label) {
        return Vec::new();
    }
    let sentence = tokenize(&record.text);
    let mut out = Vec::new();
    for round in 0..cfg.n_aug {
        let round_key = round.to_string();
        match cfg.mode {
            EddaMode::PerOp => {
                for &op in &cfg.enabled_ops {
                    let mut rng = seeding::stream(cfg.seed, &[&record.id, &round_key, op.label().as_str()]);
                    let (variant, edits) = apply_op(op, &sentence, res, cfg, &mut rng);
                    out.push(AugmentedRecord::new(record, round, op.label(), &variant, edits));
                }
            }
            EddaMode::Composed => {
                let mut rng = seeding::stream(cfg.seed, &[&record.id, &round_key, OpLabel::Edda.as_str()]);
                let mut current = sentence.clone();
                let mut all_edits = Vec::new();
                for &op in &cfg.enabled_ops {
                    let (next, edits) = apply_op(op, &current, res, cfg, &mut rng);
                    current = next;
                    all_edits.extend(edits);
                }
                out.push(AugmentedRecord::new(record, round, OpLabel::Edda, &current, all_edits));
            }
        }
    }
    out
}

/// Picks a random position carrying `tag`, or any tagged (non-`UNK`)
/// position when no tag is requested. Punctuation is never picked.
pub fn find_random_token<R: Rng + ?Sized>(s: &Sentence, tag: Option<&str>, rng: &mut R) -> Result<usize, AugmentError> {
    let matches: Vec<usize> = s
        .tokens()
        .iter()
        .enumerate()
        .filter(|(_, t)| !t.is_punctuation())
        .filter(|(_, t)| match (tag, t.pos_tag()) {
            (Some(wanted), Some(have)) => wanted == have,
            (None, Some(have)) => have != UNK_TAG,
            (_, None) => false,
        })
        .map(|(i, _)| i)
        .collect();
    if matches.is_empty() {
        return Err(match tag {
            Some(t) => AugmentError::NoMatchingToken(t.to_owned()),
            None => AugmentError::NoTaggedToken,
        });
    }
    Ok(matches[rng.random_range(0..matches.len())])
}

fn tssr_once<R: Rng + ?Sized>(
    s: &Sentence,
    tag: Option<&str>,
    res: &Resources<'_>,
    cfg: &AugmentationConfig,
    rng: &mut R,
) -> Result<(Sentence, Edit), AugmentError> {
    let position = find_random_token(s, tag, rng)?;
    let chosen = &s.tokens()[position];
    let candidate = find_candidate(res.store, chosen, cfg, rng)?;
    let mut tokens = s.tokens().to_vec();
    let old = chosen.surface().to_owned();
    tokens[position] = replacement_token(candidate.clone(), res.stopwords).with_tag(chosen.pos_tag().map(str::to_owned));
    Ok((
        Sentence::from_tokens(tokens),
        Edit::Replace {
            position,
            old,
            new: candidate,
        },
    ))
}

/// Tag-constrained similar-word replacement over an already tagged
/// sentence. Always returns exactly `n` variants; failed iterations are
/// noops.
pub fn tssr_tagged(
    record: &LabeledRecord,
    sentence: &Sentence,
    tag: Option<&str>,
    n: usize,
    res: &Resources<'_>,
    cfg: &AugmentationConfig,
) -> Vec<AugmentedRecord> {
    (0..n)
        .map(|i| {
            let mut rng = seeding::stream(cfg.seed, &[&record.id, &i.to_string(), OpLabel::Tssr.as_str()]);
            match tssr_once(sentence, tag, res, cfg, &mut rng) {
                Ok((variant, edit)) => AugmentedRecord::new(record, i, OpLabel::Tssr, &variant, vec![edit]),
                Err(_) => AugmentedRecord::new(record, i, OpLabel::Tssr, sentence, Vec::new()),
            }
        })
        .collect()
}

/// Tokenizes and tags `record` with the resources' lexicon, then runs
/// [`tssr_tagged`]. Without a lexicon every token is `UNK`.
pub fn tssr(
    record: &LabeledRecord,
    tag: Option<&str>,
    n: usize,
    res: &Resources<'_>,
    cfg: &AugmentationConfig,
) -> Vec<AugmentedRecord> {
    let empty = PosLexicon::default();
    let sentence = tag_sentence(&tokenize(&record.text), res.lexicon.unwrap_or(&empty));
    tssr_tagged(record, &sentence, tag, n, res, cfg)
}
