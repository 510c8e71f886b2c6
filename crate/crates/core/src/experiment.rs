//! Learning-curve harness: nested stratified partitions, per-technique
//! augmentation, a linear SVM over pooled sentence embeddings, and F1
//! tables.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::augment::{edda, tssr, AugmentationConfig, AugmentedRecord, EddaOp, Resources};
use crate::corpus::{tokenize, LabeledRecord};
use crate::deviation::{deviation_report, DeviationReport, DEFAULT_DELTA};
use crate::embedding::EmbeddingStore;
use crate::seeding;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid partition spec: {0}")]
    InvalidSpec(String),
    #[error("training data has a single class")]
    SingleClass,
    #[error("feature dimension {found} does not match expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("train and test sets share id {0:?}")]
    OverlappingIds(String),
    #[error("unknown technique {0:?}")]
    UnknownTechnique(String),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSpec {
    pub fractions: Vec<f64>,
    pub seed: u64,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        PartitionSpec {
            fractions: (1..=10).map(|i| i as f64 / 10.0).collect(),
            seed: 0,
        }
    }
}

impl PartitionSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.fractions.is_empty() {
            return Err(ExperimentError::InvalidSpec("no fractions".into()));
        }
        if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(ExperimentError::InvalidSpec(format!("fraction {f} outside (0, 1]")));
        }
        if self.fractions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ExperimentError::InvalidSpec("fractions must be strictly increasing".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub fraction: f64,
    /// Selected ids in dataset order.
    pub record_ids: Vec<String>,
}

/// Number of records of a class of size `class_count` in a partition.
pub fn stratum_size(fraction: f64, class_count: usize) -> usize {
    ((fraction * class_count as f64).round() as usize).clamp(1, class_count)
}

/// Nested, stratified subsets of `records`, one per fraction.
///
/// Each class is shuffled once under the partition seed; a partition takes a
/// prefix of every shuffled class, so smaller partitions are subsets of
/// larger ones.
pub fn stratified_partitions(records: &[LabeledRecord], spec: &PartitionSpec) -> Result<Vec<Partition>, ExperimentError> {
    spec.validate()?;
    if records.is_empty() {
        return Err(ExperimentError::EmptyDataset);
    }
    let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_label.entry(&r.label).or_default().push(i);
    }
    for (label, members) in &mut by_label {
        let mut rng = seeding::stream(spec.seed, &["partition", label]);
        members.shuffle(&mut rng);
    }
    Ok(spec
        .fractions
        .iter()
        .map(|&fraction| {
            let mut chosen: Vec<usize> = by_label
                .values()
                .flat_map(|members| members[..stratum_size(fraction, members.len())].iter().copied())
                .collect();
            chosen.sort_unstable();
            Partition {
                fraction,
                record_ids: chosen.into_iter().map(|i| records[i].id.clone()).collect(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Technique {
    Baseline,
    Edda,
    Tssr,
    Rsr,
}

impl Technique {
    pub const ALL: [Technique; 4] = [Technique::Baseline, Technique::Edda, Technique::Tssr, Technique::Rsr];

    pub fn as_str(self) -> &'static str {
        match self {
            Technique::Baseline => "baseline",
            Technique::Edda => "EDDA",
            Technique::Tssr => "TSSR",
            Technique::Rsr => "RSR",
        }
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Technique {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" => Ok(Technique::Baseline),
            "edda" => Ok(Technique::Edda),
            "tssr" => Ok(Technique::Tssr),
            "rsr" => Ok(Technique::Rsr),
            _ => Err(ExperimentError::UnknownTechnique(s.to_owned())),
        }
    }
}

/// Result of augmenting a set of records with one technique.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSet {
    /// Originals followed by every non-noop variant.
    pub records: Vec<LabeledRecord>,
    /// Every variant produced, noops included.
    pub variants: Vec<AugmentedRecord>,
}

impl AugmentedSet {
    pub fn added(&self) -> usize {
        self.variants.iter().filter(|v| !v.noop).count()
    }

    pub fn noops(&self) -> usize {
        self.variants.iter().filter(|v| v.noop).count()
    }
}

/// Variants of one record for a technique. Label conditioning applies to
/// every technique.
pub fn technique_variants(
    record: &LabeledRecord,
    technique: Technique,
    res: &Resources<'_>,
    cfg: &AugmentationConfig,
    tssr_tag: Option<&str>,
) -> Vec<AugmentedRecord> {
    if !cfg.should_augment(&record.label) {
        return Vec::new();
    }
    match technique {
        Technique::Baseline => Vec::new(),
        Technique::Edda => edda(record, res, &cfg.clone().with_ops(EddaOp::ALL)),
        Technique::Rsr => edda(record, res, &cfg.clone().with_ops([EddaOp::Rsr])),
        Technique::Tssr => tssr(record, tssr_tag, cfg.n_aug, res, cfg),
    }
}

/// Augments `records` and appends the non-noop variants as new records
/// with ids `<source_id>#<op>#<round>`.
pub fn augment_partition(
    records: &[LabeledRecord],
    technique: Technique,
    res: &Resources<'_>,
    cfg: &AugmentationConfig,
    tssr_tag: Option<&str>,
) -> AugmentedSet {
    let variants: Vec<AugmentedRecord> = records
        .par_iter()
        .flat_map_iter(|r| technique_variants(r, technique, res, cfg, tssr_tag))
        .collect();
    let mut out = records.to_vec();
    out.extend(variants.iter().filter(|v| !v.noop).map(AugmentedRecord::to_record));
    AugmentedSet { records: out, variants }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainParams {
    pub epochs: usize,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            epochs: 20,
            lambda: 1e-4,
            seed: 0,
        }
    }
}

/// One-vs-rest linear SVM. Each weight vector has `dim + 1` entries, the
/// last being the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub classes: Vec<String>,
    pub weights: Vec<Vec<f64>>,
    pub dim: usize,
    pub params: TrainParams,
}

impl LinearModel {
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>, ExperimentError> {
        if x.len() != self.dim {
            return Err(ExperimentError::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(self.weights.iter().map(|w| decision(w, x)).collect())
    }
}

fn decision(w: &[f64], x: &[f64]) -> f64 {
    let (bias, weights) = w.split_last().expect("weights include a bias");
    weights.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + bias
}

/// Trains a one-vs-rest hinge-loss model with Pegasos-style stochastic
/// subgradient steps of size `1 / (lambda * t)`.
pub fn train_linear(features: &[Vec<f64>], labels: &[String], params: &TrainParams) -> Result<LinearModel, ExperimentError> {
    if features.len() != labels.len() {
        return Err(ExperimentError::LengthMismatch {
            left: features.len(),
            right: labels.len(),
        });
    }
    let classes: Vec<String> = labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if classes.len() < 2 {
        return Err(ExperimentError::SingleClass);
    }
    let dim = features[0].len();
    if let Some(bad) = features.iter().find(|f| f.len() != dim) {
        return Err(ExperimentError::DimensionMismatch {
            expected: dim,
            found: bad.len(),
        });
    }
    if params.lambda.is_nan() || params.lambda <= 0.0 {
        return Err(ExperimentError::InvalidSpec("lambda must be positive".into()));
    }

    let weights = classes
        .iter()
        .map(|class| {
            let targets: Vec<f64> = labels.iter().map(|l| if l == class { 1.0 } else { -1.0 }).collect();
            let mut rng = seeding::stream(params.seed, &["svm", class]);
            pegasos(features, &targets, params, &mut rng)
        })
        .collect();
    Ok(LinearModel {
        classes,
        weights,
        dim,
        params: *params,
    })
}

fn pegasos<R: Rng + ?Sized>(features: &[Vec<f64>], targets: &[f64], params: &TrainParams, rng: &mut R) -> Vec<f64> {
    let dim = features[0].len();
    let mut w = vec![0.0; dim + 1];
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut t = 0u64;
    for _ in 0..params.epochs {
        order.shuffle(rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (params.lambda * t as f64);
            let x = &features[i];
            let y = targets[i];
            let margin = y * decision(&w, x);
            let shrink = 1.0 - eta * params.lambda;
            for wj in &mut w {
                *wj *= shrink;
            }
            if margin < 1.0 {
                let step = eta * y;
                for (wj, xj) in w.iter_mut().zip(x) {
                    *wj += step * xj;
                }
                w[dim] += step;
            }
        }
    }
    w
}

/// Argmax over class scores; ties go to the lexicographically smallest
/// label.
pub fn predict(model: &LinearModel, features: &[Vec<f64>]) -> Result<Vec<String>, ExperimentError> {
    features
        .iter()
        .map(|x| {
            let scores = model.scores(x)?;
            let mut best = 0;
            for (i, s) in scores.iter().enumerate().skip(1) {
                if *s > scores[best] {
                    best = i;
                }
            }
            Ok(model.classes[best].clone())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    /// Sorted union of gold and predicted labels; indexes the confusion
    /// matrix.
    pub labels: Vec<String>,
    pub per_class: Vec<ClassScores>,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    /// `confusion[gold][predicted]`
    pub confusion: Vec<Vec<usize>>,
}

impl EvalResult {
    pub fn accuracy(&self) -> f64 {
        let total: usize = self.confusion.iter().flatten().sum();
        let correct: usize = (0..self.labels.len()).map(|i| self.confusion[i][i]).sum();
        correct as f64 / total as f64
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class precision, recall and F1 with macro (over gold classes) and
/// support-weighted averages.
pub fn f1_scores<S: AsRef<str>>(predictions: &[S], golds: &[S]) -> Result<EvalResult, ExperimentError> {
    if predictions.len() != golds.len() {
        return Err(ExperimentError::LengthMismatch {
            left: predictions.len(),
            right: golds.len(),
        });
    }
    if golds.is_empty() {
        return Err(ExperimentError::EmptyDataset);
    }
    let labels: Vec<String> = golds
        .iter()
        .chain(predictions)
        .map(|s| s.as_ref().to_owned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let n = labels.len();
    let mut confusion = vec![vec![0usize; n]; n];
    for (p, g) in predictions.iter().zip(golds) {
        confusion[index[g.as_ref()]][index[p.as_ref()]] += 1;
    }

    let per_class: Vec<ClassScores> = labels
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let tp = confusion[i][i];
            let support: usize = confusion[i].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[i]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassScores {
                label: label.clone(),
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();

    let gold_classes: Vec<&ClassScores> = per_class.iter().filter(|c| c.support > 0).collect();
    let macro_f1 = gold_classes.iter().map(|c| c.f1).sum::<f64>() / gold_classes.len() as f64;
    let weighted_f1 = gold_classes.iter().map(|c| c.f1 * c.support as f64).sum::<f64>() / golds.len() as f64;
    Ok(EvalResult {
        labels,
        per_class,
        macro_f1,
        weighted_f1,
        confusion,
    })
}

/// Pooled sentence embedding of `text`; the zero vector when no token is
/// in the vocabulary.
pub fn text_features(store: &EmbeddingStore, text: &str) -> Vec<f64> {
    store
        .sentence_embedding(&tokenize(text))
        .map(|e| e.vector)
        .unwrap_or_else(|_| vec![0.0; store.dim()])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOptions {
    pub train: TrainParams,
    pub tssr_tag: Option<String>,
    /// Worker threads; 0 uses the rayon default.
    pub workers: usize,
    pub delta: f64,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            train: TrainParams::default(),
            tssr_tag: None,
            workers: 0,
            delta: DEFAULT_DELTA,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub fraction: f64,
    pub technique: Technique,
    pub eval: EvalResult,
    pub n_train: usize,
    pub n_aug_added: usize,
    pub noop_count: usize,
    pub deviation: DeviationReport,
    pub test_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultsTable {
    pub cells: Vec<Cell>,
}

pub const RESULTS_HEADER: &str = "fraction,technique,macro_f1,weighted_f1,n_train,n_aug_added,noop_count";

impl ResultsTable {
    pub fn cell(&self, fraction: f64, technique: Technique) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.technique == technique && (c.fraction - fraction).abs() < 1e-9)
    }

    /// The F1 table as CSV, one row per cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(RESULTS_HEADER);
        out.push('\n');
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{:.2},{},{:.6},{:.6},{},{},{}",
                c.fraction, c.technique, c.eval.macro_f1, c.eval.weighted_f1, c.n_train, c.n_aug_added, c.noop_count
            );
        }
        out
    }

    /// Deviation counts per cell.
    pub fn deviation_csv(&self) -> String {
        let mut out = String::from("fraction,technique,delta,total_pairs,below_threshold,unembeddable,fraction_below\n");
        for c in &self.cells {
            let d = &c.deviation;
            let _ = writeln!(
                out,
                "{:.2},{},{},{},{},{},{:.6}",
                c.fraction, c.technique, d.delta, d.total_pairs, d.below_threshold, d.unembeddable, d.fraction_below
            );
        }
        out
    }
}

struct TechniquePool {
    technique: Technique,
    variants: HashMap<String, Vec<AugmentedRecord>>,
    features: HashMap<String, Vec<f64>>,
}

/// Runs every partition × technique cell: augment, embed, train, predict
/// on the fixed test set, score.
///
/// Augmentation of a record depends only on its id and the config, so
/// variants are generated once per technique and shared across the nested
/// partitions. Cells are independent and may run on any number of
/// workers; the table does not depend on the schedule.
pub fn run_experiment(
    train: &[LabeledRecord],
    test: &[LabeledRecord],
    spec: &PartitionSpec,
    techniques: &[Technique],
    res: &Resources<'_>,
    cfg: &AugmentationConfig,
    opts: &ExperimentOptions,
) -> Result<ResultsTable, ExperimentError> {
    if test.is_empty() {
        return Err(ExperimentError::EmptyDataset);
    }
    let train_ids: HashSet<&str> = train.iter().map(|r| r.id.as_str()).collect();
    if let Some(shared) = test.iter().find(|r| train_ids.contains(r.id.as_str())) {
        return Err(ExperimentError::OverlappingIds(shared.id.clone()));
    }
    let test_ids: HashSet<&str> = test.iter().map(|r| r.id.as_str()).collect();
    let partitions = stratified_partitions(train, spec)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| ExperimentError::ThreadPool(e.to_string()))?;

    pool.install(|| {
        let store = res.store;
        let test_x: Vec<Vec<f64>> = test.par_iter().map(|r| text_features(store, &r.text)).collect();
        let test_y: Vec<&str> = test.iter().map(|r| r.label.as_str()).collect();
        let train_x: HashMap<&str, Vec<f64>> = train
            .par_iter()
            .map(|r| (r.id.as_str(), text_features(store, &r.text)))
            .collect();
        let by_id: HashMap<&str, &LabeledRecord> = train.iter().map(|r| (r.id.as_str(), r)).collect();

        let pools: Vec<TechniquePool> = techniques
            .iter()
            .map(|&technique| {
                let per_record: Vec<(String, Vec<AugmentedRecord>)> = train
                    .par_iter()
                    .map(|r| {
                        let v = technique_variants(r, technique, res, cfg, opts.tssr_tag.as_deref());
                        (r.id.clone(), v)
                    })
                    .collect();
                let features = per_record
                    .par_iter()
                    .flat_map_iter(|(_, vs)| vs.iter().filter(|v| !v.noop))
                    .map(|v| (v.id(), text_features(store, &v.text)))
                    .collect();
                TechniquePool {
                    technique,
                    variants: per_record.into_iter().collect(),
                    features,
                }
            })
            .collect();

        let jobs: Vec<(&Partition, &TechniquePool)> = partitions
            .iter()
            .flat_map(|p| pools.iter().map(move |t| (p, t)))
            .collect();

        jobs.par_iter()
            .map(|&(partition, tp)| {
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                let mut ids = Vec::new();
                let mut variants = Vec::new();
                for id in &partition.record_ids {
                    xs.push(train_x[id.as_str()].clone());
                    ys.push(by_id[id.as_str()].label.clone());
                    ids.push(id.clone());
                    variants.extend(tp.variants[id].iter());
                }
                let mut added = 0;
                let mut pairs = Vec::new();
                for v in variants.iter().filter(|v| !v.noop) {
                    let vid = v.id();
                    xs.push(tp.features[&vid].clone());
                    ys.push(v.label.clone());
                    ids.push(vid);
                    added += 1;
                    pairs.push((tokenize(&by_id[v.source_id.as_str()].text), tokenize(&v.text)));
                }
                if let Some(leak) = ids.iter().find(|id| test_ids.contains(id.as_str())) {
                    return Err(ExperimentError::OverlappingIds(leak.clone()));
                }
                let frac_key = format!("{:.2}", partition.fraction);
                let params = TrainParams {
                    seed: seeding::derive_seed(opts.train.seed, &["cell", &frac_key, tp.technique.as_str()]),
                    ..opts.train
                };
                let model = train_linear(&xs, &ys, &params)?;
                let predicted = predict(&model, &test_x)?;
                let predicted: Vec<&str> = predicted.iter().map(String::as_str).collect();
                let eval = f1_scores(&predicted, &test_y)?;
                Ok(Cell {
                    fraction: partition.fraction,
                    technique: tp.technique,
                    eval,
                    n_train: xs.len(),
                    n_aug_added: added,
                    noop_count: variants.len() - added,
                    deviation: deviation_report(&pairs, store, opts.delta),
                    test_size: test.len(),
                })
            })
            .collect::<Result<Vec<Cell>, ExperimentError>>()
            .map(|cells| ResultsTable { cells })
    })
}
