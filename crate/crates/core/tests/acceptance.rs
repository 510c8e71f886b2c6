//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any criterion fails.
//!
//! Run with `cargo test -p edda-core --test acceptance`.

use std::collections::{BTreeSet, HashSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use edda_core::augment::{self, AugmentationConfig, EddaOp, Edit, Resources};
use edda_core::corpus::{tokenize, Sentence, Token};
use edda_core::deviation::{deviation_report, deviction, report_from_similarities, Verdict};
use edda_core::embedding::{EmbeddingStore, SentenceEmbedding};
use edda_core::experiment::{
    f1_scores, run_experiment, ExperimentOptions, PartitionSpec, ResultsTable, Technique,
};
use edda_core::synth::{SynthConfig, SynthCorpus};
use edda_core::tagger::tag_sentence;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        {
            let holds: bool = $cond;
            if !holds {
                return Err(format!($($fmt)+));
            }
        }
    };
}

fn within(limit: Duration, started: Instant) -> Result<Duration, String> {
    let elapsed = started.elapsed();
    if elapsed > limit {
        Err(format!("took {elapsed:.2?}, limit {limit:?}"))
    } else {
        Ok(elapsed)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn n_edits(alpha: f64, count: usize) -> usize {
    ((alpha * count as f64).round() as usize).max(1)
}

/// Random sentence mixing vocabulary words, stopwords, out-of-vocabulary
/// words, numbers and punctuation.
fn random_sentence(corpus: &SynthCorpus, r: &mut ChaCha8Rng, len: usize) -> Sentence {
    let words = corpus.store.words();
    let tokens = (0..len)
        .map(|_| {
            let surface = match r.random_range(0..10) {
                0..=5 => words[r.random_range(0..words.len())].clone(),
                6 => {
                    let w = &words[r.random_range(0..words.len())];
                    let mut c = w.chars();
                    let first = c.next().unwrap();
                    first.to_uppercase().chain(c).collect()
                }
                7 => format!("okänd{}", r.random_range(0..5)),
                8 => r.random_range(0..100).to_string(),
                _ => [",", ".", "!", "?"][r.random_range(0..4)].to_string(),
            };
            Token::new(surface)
        })
        .collect();
    Sentence::from_tokens(tokens)
}

fn edit_count_suite() -> Outcome {
    let started = Instant::now();
    let corpus = SynthCorpus::generate(&SynthConfig::default());
    let store = &corpus.store;
    let stop = &corpus.stopwords;
    let mut checked = 0usize;
    let mut r = rng(2024);
    for i in 0..1000 {
        let len = r.random_range(1..=40);
        let s = random_sentence(&corpus, &mut r, len);
        let surfaces = s.surfaces();
        let eligible = s
            .tokens()
            .iter()
            .filter(|t| {
                t.surface().chars().all(char::is_alphabetic)
                    && !stop.contains(&t.surface().to_lowercase())
                    && (store.contains(t.surface()) || store.contains(&t.surface().to_lowercase()))
            })
            .count();
        let words = s
            .tokens()
            .iter()
            .filter(|t| t.surface().chars().any(char::is_alphanumeric))
            .count();
        for alpha in [0.1, 0.2, 0.5] {
            let cfg = AugmentationConfig {
                alpha,
                ..AugmentationConfig::default()
            };
            let seed = (i as u64) << 8 | (alpha * 10.0) as u64;

            // RS: multiset conserved, n_edits swaps
            let (out, edits) = augment::rs(&s, &cfg, &mut rng(seed));
            let mut a = surfaces.clone();
            let mut b = out.surfaces();
            a.sort();
            b.sort();
            ensure!(a == b, "RS changed the multiset of {surfaces:?}");
            let want = if words >= 2 { n_edits(alpha, words) } else { 0 };
            ensure!(edits.len() == want, "RS made {} edits, expected {want}", edits.len());

            // RD: length shrinks by the edit count, order kept
            let (out, edits) = augment::rd(&s, &cfg, &mut rng(seed));
            ensure!(out.len() == s.len() - edits.len(), "RD length law broken");
            let want = if words >= 2 { n_edits(alpha, words).min(words - 1) } else { 0 };
            ensure!(edits.len() == want, "RD made {} edits, expected {want}", edits.len());
            let mut it = surfaces.iter();
            ensure!(
                out.surfaces().iter().all(|w| it.any(|x| x == w)),
                "RD reordered tokens"
            );

            // RI: length grows by the edit count
            let (out, edits) = augment::ri(&s, store, stop, &cfg, &mut rng(seed));
            ensure!(out.len() == s.len() + edits.len(), "RI length law broken");
            let want = if eligible > 0 { n_edits(alpha, eligible) } else { 0 };
            ensure!(edits.len() == want, "RI made {} edits, expected {want}", edits.len());

            // RSR: exactly n_edits positions replaced, the rest byte-identical
            let (out, edits) = augment::rsr(&s, store, stop, &cfg, &mut rng(seed));
            ensure!(out.len() == s.len(), "RSR changed the length");
            let changed: Vec<usize> = (0..s.len()).filter(|&p| out.tokens()[p].surface() != surfaces[p]).collect();
            let want = if eligible > 0 { n_edits(alpha, eligible) } else { 0 };
            ensure!(
                changed.len() == want && edits.len() == want,
                "RSR replaced {} positions ({} edits), expected {want} for {surfaces:?}",
                changed.len(),
                edits.len()
            );
            checked += 4;
        }
    }
    let elapsed = within(Duration::from_secs(10), started)?;
    Ok(format!("{checked} op applications in {elapsed:.2?}"))
}

/// Full-sort reference: score every other word, sort, truncate.
fn brute_force(store: &EmbeddingStore, query: &str, k: usize) -> Vec<(String, f64)> {
    let q = store.vector(query).unwrap();
    let fold = query.to_lowercase();
    let mut all: Vec<(String, f64)> = store
        .words()
        .iter()
        .filter(|w| w.to_lowercase() != fold)
        .map(|w| {
            let v = store.vector(w).unwrap();
            let score: f64 = q.iter().zip(v).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum();
            (w.clone(), score)
        })
        .collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

fn knn_oracle() -> Outcome {
    let started = Instant::now();
    let mut r = rng(77);
    let mut queries = 0usize;
    for store_idx in 0..50 {
        let vocab = r.random_range(2..=200);
        let dim = r.random_range(1..=16);
        let mut words = BTreeSet::new();
        let mut rows = Vec::new();
        while rows.len() < vocab {
            let len = r.random_range(1..=3);
            let w: String = (0..len).map(|_| ['a', 'b', 'c', 'A', 'ö', 'Ö'][r.random_range(0..6)]).collect();
            if !words.insert(w.clone()) {
                continue;
            }
            // quantized values produce exact score ties
            let v: Vec<f32> = if !rows.is_empty() && r.random_bool(0.1) {
                let (_, prev): &(String, Vec<f32>) = &rows[r.random_range(0..rows.len())];
                prev.clone()
            } else {
                loop {
                    let v: Vec<f32> = (0..dim).map(|_| r.random_range(-4i32..=4) as f32 / 4.0).collect();
                    if v.iter().any(|x| *x != 0.0) {
                        break v;
                    }
                }
            };
            rows.push((w, v));
        }
        let store = EmbeddingStore::from_rows(dim, rows).map_err(|e| e.to_string())?;
        for word in store.words() {
            for k in [1, 5, 50] {
                let got = store
                    .nearest_neighbors(word, k, &HashSet::new())
                    .map_err(|e| e.to_string())?;
                let want = brute_force(&store, word, k);
                ensure!(
                    got.len() == want.len(),
                    "store {store_idx}, {word:?}, k={k}: {} results vs {}",
                    got.len(),
                    want.len()
                );
                for (g, (w, s)) in got.iter().zip(&want) {
                    ensure!(
                        &g.word == w && (g.score - s).abs() <= 1e-9,
                        "store {store_idx}, {word:?}, k={k}: got {:?}/{} want {w:?}/{s}",
                        g.word,
                        g.score
                    );
                }
                queries += 1;
            }
        }
    }
    let elapsed = within(Duration::from_secs(10), started)?;
    Ok(format!("{queries} queries matched in {elapsed:.2?}"))
}

fn tssr_contract() -> Outcome {
    let corpus = SynthCorpus::generate(&SynthConfig {
        seed: 11,
        ..SynthConfig::default()
    });
    let res = Resources::new(&corpus.store, &corpus.stopwords).with_lexicon(&corpus.lexicon);
    let records = corpus.records(500, "t", 5);
    let tags: [Option<&str>; 5] = [Some("NOUN"), Some("VERB"), Some("ADJ"), Some("ADV"), None];
    let mut variants = 0usize;
    let mut replaced = 0usize;
    for (i, rec) in records.iter().enumerate() {
        let tag = tags[i % tags.len()];
        let n = 1 + i % 4;
        let cfg = AugmentationConfig {
            seed: i as u64,
            ..AugmentationConfig::default()
        };
        let original = tag_sentence(&tokenize(&rec.text), &corpus.lexicon);
        let out = augment::tssr(rec, tag, n, &res, &cfg);
        ensure!(out.len() == n, "record {}: {} variants for n={n}", rec.id, out.len());
        for v in &out {
            variants += 1;
            if v.noop {
                ensure!(v.text == rec.text, "noop variant changed text");
                continue;
            }
            replaced += 1;
            let after = tokenize(&v.text);
            ensure!(after.len() == original.len(), "TSSR changed the token count");
            let diffs: Vec<usize> = (0..original.len())
                .filter(|&p| original.tokens()[p].surface() != after.tokens()[p].surface())
                .collect();
            ensure!(diffs.len() == 1, "{} tokens differ in {:?}", diffs.len(), v.text);
            let was = original.tokens()[diffs[0]].pos_tag();
            match tag {
                Some(t) => ensure!(was == Some(t), "replaced a {was:?} token, requested {t}"),
                None => ensure!(
                    was.is_some_and(|t| t != "UNK"),
                    "untagged request replaced a {was:?} token"
                ),
            }
            let Edit::Replace { position, .. } = &v.edits[0] else {
                return Err("TSSR edit is not a replacement".into());
            };
            ensure!(*position == diffs[0], "edit position disagrees with diff");
        }
    }
    ensure!(replaced > variants / 2, "only {replaced}/{variants} variants replaced anything");
    Ok(format!("{variants} variants, {replaced} replacements, all single-token and tag-matched"))
}

fn synthetic_experiment(workers: usize) -> Result<ResultsTable, String> {
    let corpus = SynthCorpus::generate(&SynthConfig {
        seed: 3,
        ..SynthConfig::default()
    });
    let all = corpus.records(300, "d", 9);
    let (train, test) = all.split_at(200);
    let res = Resources::new(&corpus.store, &corpus.stopwords).with_lexicon(&corpus.lexicon);
    let cfg = AugmentationConfig {
        seed: 42,
        ..AugmentationConfig::default()
    };
    let opts = ExperimentOptions {
        workers,
        tssr_tag: Some("NOUN".into()),
        ..ExperimentOptions::default()
    };
    let spec = PartitionSpec {
        seed: 42,
        ..PartitionSpec::default()
    };
    run_experiment(train, test, &spec, &Technique::ALL, &res, &cfg, &opts).map_err(|e| e.to_string())
}

fn determinism() -> Outcome {
    let a = synthetic_experiment(1)?;
    let b = synthetic_experiment(1)?;
    let c = synthetic_experiment(4)?;
    ensure!(a.to_csv() == b.to_csv(), "two identical runs differ");
    ensure!(a.to_csv() == c.to_csv(), "1 vs 4 workers differ");
    ensure!(a.deviation_csv() == c.deviation_csv(), "deviation tables differ");
    ensure!(a.cells.len() == 40, "expected 40 cells, got {}", a.cells.len());
    Ok(format!("40-cell table byte-identical across runs and worker counts ({} bytes)", a.to_csv().len()))
}

fn deviction_behavior() -> Outcome {
    let e = SentenceEmbedding::from_raw(vec![0.2, -0.4, 0.7], 3).unwrap();
    let same = deviction(&e, &e, 0.9);
    ensure!(same.verdict == Verdict::Similar, "identical sentences judged {}", same.verdict);

    let a = SentenceEmbedding {
        vector: vec![1.0, 0.0],
        covered_tokens: 1,
    };
    let b = SentenceEmbedding {
        vector: vec![0.9, 0.19f64.sqrt()],
        covered_tokens: 1,
    };
    let edge = deviction(&a, &b, 0.9);
    ensure!(edge.similarity == 0.9, "boundary pair scored {}", edge.similarity);
    ensure!(edge.verdict == Verdict::Similar, "similarity exactly at delta judged dissimilar");

    // 200-pair corpus: monotone in delta
    let corpus = SynthCorpus::generate(&SynthConfig::default());
    let res = Resources::new(&corpus.store, &corpus.stopwords);
    let cfg = AugmentationConfig {
        alpha: 0.3,
        ..AugmentationConfig::default()
    };
    let pairs: Vec<(Sentence, Sentence)> = corpus
        .records(200, "m", 1)
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let op = EddaOp::ALL[i % 4];
            let v = augment::edda(r, &res, &cfg.clone().with_ops([op]));
            (tokenize(&r.text), tokenize(&v[0].text))
        })
        .collect();
    let deltas: Vec<f64> = (0..=40).map(|i| 0.6 + 0.01 * f64::from(i)).collect();
    let fractions: Vec<f64> = deltas
        .iter()
        .map(|&d| deviation_report(&pairs, &corpus.store, d).fraction_below)
        .collect();
    ensure!(
        fractions.windows(2).all(|w| w[0] <= w[1]),
        "fraction_below not monotone: {fractions:?}"
    );
    let sims: Vec<Option<f64>> = pairs
        .iter()
        .map(|(o, a)| edda_core::deviation::pair_similarity(&corpus.store, o, a))
        .collect();
    let recomputed = report_from_similarities(&sims, 0.9);
    ensure!(
        recomputed == deviation_report(&pairs, &corpus.store, 0.9),
        "per-pair recomputation disagrees"
    );
    Ok(format!(
        "identity and boundary similar; fraction_below {:.3} -> {:.3} over delta 0.60..1.00",
        fractions[0],
        fractions[fractions.len() - 1]
    ))
}

fn deviation_direction() -> Outcome {
    let started = Instant::now();
    let corpus = SynthCorpus::generate(&SynthConfig {
        seed: 21,
        ..SynthConfig::default()
    });
    ensure!(corpus.store.len() >= 50, "vocabulary too small");
    let res = Resources::new(&corpus.store, &corpus.stopwords).with_lexicon(&corpus.lexicon);
    let records = corpus.records(200, "a", 4);
    let cfg = AugmentationConfig {
        seed: 1,
        ..AugmentationConfig::default()
    };

    let mut tssr_pairs = Vec::new();
    let mut edda_pairs = Vec::new();
    for r in &records {
        let orig = tokenize(&r.text);
        for v in augment::tssr(r, Some("NOUN"), 1, &res, &cfg) {
            if !v.noop {
                tssr_pairs.push((orig.clone(), tokenize(&v.text)));
            }
        }
        for v in augment::edda(r, &res, &cfg) {
            if !v.noop {
                edda_pairs.push((orig.clone(), tokenize(&v.text)));
            }
        }
    }
    let t = deviation_report(&tssr_pairs, &corpus.store, 0.9);
    let e = deviation_report(&edda_pairs, &corpus.store, 0.9);
    within(Duration::from_secs(30), started)?;
    let summary = format!(
        "TSSR {}/{} = {:.1}% below 0.9, EDDA {}/{} = {:.1}%",
        t.below_threshold,
        t.total_pairs,
        100.0 * t.fraction_below,
        e.below_threshold,
        e.total_pairs,
        100.0 * e.fraction_below
    );
    ensure!(t.fraction_below <= e.fraction_below, "{summary}");
    Ok(if t.fraction_below < e.fraction_below {
        summary
    } else {
        format!("{summary} (equal, not strict)")
    })
}

fn f1_oracle() -> Outcome {
    let mut r = rng(5);
    let labels = ["a", "b", "c", "d", "e"];
    for case in 0..100 {
        let len = r.random_range(1..=1000);
        let classes = r.random_range(1..=5);
        let golds: Vec<&str> = (0..len).map(|_| labels[r.random_range(0..classes)]).collect();
        let preds: Vec<&str> = (0..len).map(|_| labels[r.random_range(0..classes)]).collect();
        let got = f1_scores(&preds, &golds).map_err(|e| e.to_string())?;

        // independent: count tp/fp/fn per label by direct scans
        let present: BTreeSet<&str> = golds.iter().chain(&preds).copied().collect();
        let mut f1s = Vec::new();
        let mut weighted = 0.0;
        for (i, &l) in present.iter().enumerate() {
            let tp = golds.iter().zip(&preds).filter(|(g, p)| **g == l && **p == l).count();
            let fp = golds.iter().zip(&preds).filter(|(g, p)| **g != l && **p == l).count();
            let fn_ = golds.iter().zip(&preds).filter(|(g, p)| **g == l && **p != l).count();
            let support = tp + fn_;
            let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
            let rc = if support == 0 { 0.0 } else { tp as f64 / support as f64 };
            let f1 = if p + rc == 0.0 { 0.0 } else { 2.0 * p * rc / (p + rc) };
            let row: usize = got.confusion[i].iter().sum();
            ensure!(got.labels[i] == l, "case {case}: label order");
            ensure!(got.per_class[i].f1 == f1, "case {case}: F1 of {l} {} vs {f1}", got.per_class[i].f1);
            ensure!(row == support, "case {case}: confusion row of {l} sums to {row}, support {support}");
            if support > 0 {
                f1s.push(f1);
                weighted += f1 * support as f64;
            }
        }
        let macro_f1 = f1s.iter().sum::<f64>() / f1s.len() as f64;
        ensure!(got.macro_f1 == macro_f1, "case {case}: macro {} vs {macro_f1}", got.macro_f1);
        ensure!(
            got.weighted_f1 == weighted / len as f64,
            "case {case}: weighted {} vs {}",
            got.weighted_f1,
            weighted / len as f64
        );
    }
    Ok("100 random label vectors matched exactly".into())
}

fn harness_sanity() -> Outcome {
    let table = synthetic_experiment(0)?;
    let base_full = table.cell(1.0, Technique::Baseline).ok_or("missing baseline@1.0")?;
    ensure!(
        base_full.eval.macro_f1 >= 0.95,
        "baseline@1.0 macro F1 {:.4} < 0.95",
        base_full.eval.macro_f1
    );
    let base_small = table.cell(0.1, Technique::Baseline).ok_or("missing baseline@0.1")?.eval.macro_f1;
    let mut arms = Vec::new();
    for t in [Technique::Edda, Technique::Tssr, Technique::Rsr] {
        let f1 = table.cell(0.1, t).ok_or("missing arm")?.eval.macro_f1;
        ensure!(f1 >= base_small - 0.05, "{t}@0.1 macro F1 {f1:.4} < baseline@0.1 {base_small:.4} - 0.05");
        arms.push(format!("{t} {f1:.3}"));
    }
    let sizes: HashSet<usize> = table.cells.iter().map(|c| c.test_size).collect();
    ensure!(sizes.len() == 1, "test-set size varies across cells");
    ensure!(
        table
            .cells
            .iter()
            .all(|c| (0.0..=1.0).contains(&c.eval.macro_f1) && (0.0..=1.0).contains(&c.eval.weighted_f1)),
        "score outside [0, 1]"
    );
    Ok(format!(
        "baseline@1.0 {:.3}; @0.1 baseline {base_small:.3}, {}",
        base_full.eval.macro_f1,
        arms.join(", ")
    ))
}

fn main() -> ExitCode {
    // Let `cargo test -- --list` and filters pass through harmlessly.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let criteria: [(&str, Check); 8] = [
        ("edit-count laws", edit_count_suite),
        ("knn oracle", knn_oracle),
        ("tssr contract", tssr_contract),
        ("determinism", determinism),
        ("deviction behavior", deviction_behavior),
        ("tssr deviates less than edda", deviation_direction),
        ("f1 oracle", f1_oracle),
        ("harness sanity", harness_sanity),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
