//! Synthetic corpora for tests, benchmarks and demos.
//!
//! Words are grouped by (class, part of speech). Each group has a random
//! centroid and its words scatter around it, so embedding neighbors mostly
//! stay inside their group and sentences drawn mostly from one class's
//! groups are linearly separable by their pooled embedding.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rand::Rng;

use crate::corpus::{LabeledRecord, StopwordSet};
use crate::embedding::{write_embeddings, EmbeddingStore};
use crate::seeding;
use crate::tagger::PosLexicon;

pub const CONTENT_TAGS: [&str; 3] = ["NOUN", "VERB", "ADJ"];
pub const STOPWORD_TAG: &str = "DET";

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "su", "te", "ra", "no", "vi", "pe", "då", "bö", "lä", "fa", "gu", "hi", "jo", "se", "ty", "ma",
    "ne", "sk", "ri", "tå", "ög",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub classes: Vec<String>,
    pub words_per_group: usize,
    pub stopwords: usize,
    pub dim: usize,
    /// Spread of words around their group centroid.
    pub noise: f32,
    /// Content tokens per sentence, inclusive range.
    pub min_len: usize,
    pub max_len: usize,
    /// Chance that a slot holds a stopword.
    pub stopword_rate: f64,
    /// Chance that a content word comes from another class.
    pub cross_class_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            classes: vec!["neg".into(), "pos".into()],
            words_per_group: 10,
            stopwords: 8,
            dim: 16,
            noise: 0.5,
            min_len: 5,
            max_len: 14,
            stopword_rate: 0.3,
            cross_class_rate: 0.15,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    pub store: EmbeddingStore,
    pub stopwords: StopwordSet,
    pub lexicon: PosLexicon,
    /// (class index, tag) → words
    pub groups: BTreeMap<(usize, &'static str), Vec<String>>,
    pub stopword_list: Vec<String>,
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 1e-3 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn fresh_word<R: Rng + ?Sized>(rng: &mut R, taken: &mut HashSet<String>) -> String {
    loop {
        let n = rng.random_range(2..=3);
        let word: String = (0..n).map(|_| SYLLABLES[rng.random_range(0..SYLLABLES.len())]).collect();
        if taken.insert(word.clone()) {
            return word;
        }
    }
}

impl SynthCorpus {
    pub fn generate(config: &SynthConfig) -> Self {
        let mut rng = seeding::stream(config.seed, &["synth", "vocab"]);
        let mut taken = HashSet::new();
        let mut rows = Vec::new();
        let mut groups = BTreeMap::new();
        let mut entries = Vec::new();

        for class in 0..config.classes.len() {
            for tag in CONTENT_TAGS {
                let centroid = random_unit(&mut rng, config.dim);
                let mut words = Vec::with_capacity(config.words_per_group);
                for _ in 0..config.words_per_group {
                    let word = fresh_word(&mut rng, &mut taken);
                    let jitter = random_unit(&mut rng, config.dim);
                    let v: Vec<f32> = centroid.iter().zip(&jitter).map(|(c, j)| c + config.noise * j).collect();
                    rows.push((word.clone(), v));
                    entries.push((word.clone(), tag));
                    words.push(word);
                }
                groups.insert((class, tag), words);
            }
        }
        let mut stopword_list = Vec::with_capacity(config.stopwords);
        for _ in 0..config.stopwords {
            let word = fresh_word(&mut rng, &mut taken);
            rows.push((word.clone(), random_unit(&mut rng, config.dim)));
            entries.push((word.clone(), STOPWORD_TAG));
            stopword_list.push(word);
        }

        SynthCorpus {
            config: config.clone(),
            store: EmbeddingStore::from_rows(config.dim, rows).expect("synthetic rows are valid"),
            stopwords: StopwordSet::new(&stopword_list),
            lexicon: PosLexicon::from_entries(entries),
            groups,
            stopword_list,
        }
    }

    /// `n` sentences with labels cycling through the classes. Ids are
    /// `<prefix><index>`.
    pub fn records(&self, n: usize, prefix: &str, seed: u64) -> Vec<LabeledRecord> {
        let cfg = &self.config;
        (0..n)
            .map(|i| {
                let mut rng = seeding::stream(seed, &["synth", prefix, &i.to_string()]);
                let class = i % cfg.classes.len();
                let len = rng.random_range(cfg.min_len..=cfg.max_len);
                let mut words: Vec<String> = Vec::with_capacity(len + len / 2);
                let mut content = 0;
                while content < len {
                    if rng.random_bool(cfg.stopword_rate) {
                        words.push(self.stopword_list[rng.random_range(0..self.stopword_list.len())].clone());
                        continue;
                    }
                    let source = if cfg.classes.len() > 1 && rng.random_bool(cfg.cross_class_rate) {
                        (class + rng.random_range(1..cfg.classes.len())) % cfg.classes.len()
                    } else {
                        class
                    };
                    let tag = CONTENT_TAGS[rng.random_range(0..CONTENT_TAGS.len())];
                    let group = &self.groups[&(source, tag)];
                    words.push(group[rng.random_range(0..group.len())].clone());
                    content += 1;
                }
                let mut text = capitalize(&words.join(" "));
                text.push('.');
                LabeledRecord::new(format!("{prefix}{i}"), text, cfg.classes[class].clone())
            })
            .collect()
    }

    /// Writes `embeddings.vec`, `stopwords.txt` and `lexicon.tsv` into
    /// `dir`.
    pub fn write_resources(&self, dir: &Path) -> io::Result<()> {
        write_embeddings(&self.store, BufWriter::new(File::create(dir.join("embeddings.vec"))?))?;

        let mut stop = BufWriter::new(File::create(dir.join("stopwords.txt"))?);
        for w in &self.stopword_list {
            writeln!(stop, "{w}")?;
        }
        stop.flush()?;

        let mut lex = BufWriter::new(File::create(dir.join("lexicon.tsv"))?);
        for ((_, tag), words) in &self.groups {
            for w in words {
                writeln!(lex, "{w}\t{tag}")?;
            }
        }
        for w in &self.stopword_list {
            writeln!(lex, "{w}\t{STOPWORD_TAG}")?;
        }
        lex.flush()
    }
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}
