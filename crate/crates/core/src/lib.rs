//! Distributional text augmentation.
//!
//! EDA-style perturbations whose synonym source is a word-embedding space,
//! part-of-speech constrained single-word replacement, a sentence-level
//! semantic deviation check, and a learning-curve harness that measures what
//! augmentation does for a linear classifier on small data.
//!
//! Everything is deterministic under a seed: each augmented variant draws
//! from an RNG stream keyed by `(seed, record id, round, operation)`.

pub mod augment;
pub mod corpus;
pub mod deviation;
pub mod embedding;
pub mod experiment;
pub mod seeding;
pub mod synth;
pub mod tagger;

#[cfg(test)]
pub(crate) mod testutil;

pub use augment::{
    edda, find_candidate, find_random_token, rd, ri, rs, rsr, tssr, tssr_tagged, AugmentError, AugmentationConfig,
    AugmentedRecord, Edit, EditBudget, EddaMode, EddaOp, OpLabel, Resources,
};
pub use corpus::{
    detokenize, load_dataset, load_stopwords, tokenize, write_dataset, CorpusError, DatasetFormat, LabeledRecord,
    Sentence, StopwordSet, Token, UNK_TAG,
};
pub use deviation::{deviation_report, deviction, DeviationReport, DeviationVerdict, Verdict, DEFAULT_DELTA};
pub use embedding::{load_embeddings, EmbeddingError, EmbeddingStore, NeighborResult, SentenceEmbedding};
pub use experiment::{
    augment_partition, f1_scores, predict, run_experiment, stratified_partitions, train_linear, EvalResult,
    ExperimentError, ExperimentOptions, LinearModel, Partition, PartitionSpec, ResultsTable, Technique, TrainParams,
};
pub use tagger::{load_lexicon, parse_pretagged, tag_sentence, PosLexicon, TaggedRecord, TaggerError};

/// Any error the library can produce.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Tagger(#[from] TaggerError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Deviation(#[from] deviation::PrecomputedError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
}
