use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use edda_core::{load_dataset, DatasetFormat};
use tempfile::TempDir;

fn edda(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edda"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// A synthetic corpus written by the binary itself.
fn synth_dir() -> TempDir {
    let dir = TempDir::new().unwrap();
    let out = edda(&["synth", "--out-dir", s(dir.path()), "--train-size", "40", "--test-size", "20", "--seed", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir
}

#[test]
fn neighbors_of_katt_start_with_hund() {
    let vec = fixture("mini.vec");
    let out = edda(&["neighbors", "--embeddings", s(&vec), "--word", "katt", "--k", "1"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("#meta tool=edda "));
    let row: Vec<&str> = lines.next().unwrap().split('\t').collect();
    assert_eq!(row[0], "hund");
    assert!((row[1].parse::<f64>().unwrap() - 0.998618).abs() < 1e-6);
    assert_eq!(lines.next(), None);
}

#[test]
fn neighbors_of_unknown_word_is_a_data_error() {
    let vec = fixture("mini.vec");
    let out = edda(&["neighbors", "--embeddings", s(&vec), "--word", "zebra"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn augment_twice_is_byte_identical() {
    let dir = synth_dir();
    let d = dir.path();
    let run = |name: &str, workers: &str| {
        let out_path = d.join(name);
        let out = edda(&[
            "augment",
            "--input",
            s(&d.join("train.jsonl")),
            "--embeddings",
            s(&d.join("embeddings.vec")),
            "--stopwords",
            s(&d.join("stopwords.txt")),
            "--seed",
            "11",
            "--n-aug",
            "2",
            "--workers",
            workers,
            "--output",
            s(&out_path),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        fs::read(out_path).unwrap()
    };
    let a = run("a.jsonl", "1");
    let b = run("b.jsonl", "4");
    assert_eq!(a, b);
    let header = String::from_utf8_lossy(&a).lines().next().unwrap().to_owned();
    assert!(header.contains("seed=11"), "{header}");
}

#[test]
fn augment_output_loads_back_with_provenance_ids() {
    let dir = synth_dir();
    let d = dir.path();
    let out_path = d.join("aug.jsonl");
    let out = edda(&[
        "augment",
        "--input",
        s(&d.join("train.jsonl")),
        "--embeddings",
        s(&d.join("embeddings.vec")),
        "--ops",
        "RSR,RD",
        "--include-original",
        "--output",
        s(&out_path),
    ]);
    assert!(out.status.success());
    let sources = load_dataset(d.join("train.jsonl"), DatasetFormat::Jsonl).unwrap();
    let rows = load_dataset(&out_path, DatasetFormat::Jsonl).unwrap();
    assert_eq!(rows.len(), sources.len() * 3);
    assert_eq!(&rows[..sources.len()], &sources[..]);
    for r in &rows[sources.len()..] {
        let parts: Vec<&str> = r.id.rsplitn(3, '#').collect();
        assert_eq!(parts[0], "0");
        assert!(parts[1] == "RSR" || parts[1] == "RD");
        assert!(sources.iter().any(|src| src.id == parts[2] && src.label == r.label));
    }
}

#[test]
fn tssr_gives_exactly_n_rows_per_sentence() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("one.tsv");
    fs::write(&data, "Min katt sover.\tpos\n").unwrap();
    let lexicon = dir.path().join("lex.tsv");
    fs::write(&lexicon, "katt\tNOUN\nsover\tVERB\n").unwrap();
    let out = edda(&[
        "tssr",
        "--input",
        s(&data),
        "--embeddings",
        s(&fixture("mini.vec")),
        "--lexicon",
        s(&lexicon),
        "--tag",
        "NOUN",
        "--n",
        "3",
        "--top-k",
        "1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with("#meta ")).collect();
    assert_eq!(rows.len(), 3);
    for (k, row) in rows.iter().enumerate() {
        assert!(row.contains(&format!("\"id\":\"0#TSSR#{k}\"")), "{row}");
        assert!(row.contains("Min hund sover."), "{row}");
    }
}

#[test]
fn tssr_reads_pretagged_input() {
    let dir = TempDir::new().unwrap();
    let conll = dir.path().join("in.conll");
    fs::write(&conll, "# id = s1\n# label = pos\nMin\tDET\nkatt\tNOUN\n.\tPUNCT\n").unwrap();
    let out = edda(&[
        "tssr",
        "--pretagged",
        s(&conll),
        "--embeddings",
        s(&fixture("mini.vec")),
        "--tag",
        "noun",
        "--n",
        "2",
        "--top-k",
        "1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.contains("Min hund.") && r.contains("s1#TSSR#")));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(edda(&[]).status.code(), Some(1));
    assert_eq!(edda(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(edda(&["neighbors", "--word"]).status.code(), Some(1));
    let vec = fixture("mini.vec");
    let out = edda(&["augment", "--input", s(&vec), "--embeddings", s(&vec), "--alpha", "0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
    assert_eq!(edda(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.tsv");
    let vec = fixture("mini.vec");
    let out = edda(&["augment", "--input", s(&missing), "--embeddings", s(&vec)]);
    assert_eq!(out.status.code(), Some(2));

    let bad = dir.path().join("bad.tsv");
    fs::write(&bad, "no label column\n").unwrap();
    let out = edda(&["augment", "--input", s(&bad), "--embeddings", s(&vec)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = synth_dir();
    let d = dir.path();
    let cfg = d.join("run.conf");
    fs::write(
        &cfg,
        format!(
            "input = {}\nembeddings = {}\nseed = 9\nops = RD\n",
            s(&d.join("train.jsonl")),
            s(&d.join("embeddings.vec"))
        ),
    )
    .unwrap();
    let out = edda(&["augment", "--config", s(&cfg), "--seed", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let header = text.lines().next().unwrap();
    assert!(header.contains("seed=4") && header.contains("ops=RD"), "{header}");
    assert!(text.lines().skip(1).all(|l| l.contains("#RD#0")));

    fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(edda(&["augment", "--config", s(&cfg)]).status.code(), Some(1));
}

#[test]
fn deviation_reports_per_operation() {
    let dir = synth_dir();
    let d = dir.path();
    let aug = d.join("aug.jsonl");
    let out = edda(&[
        "augment",
        "--input",
        s(&d.join("train.jsonl")),
        "--embeddings",
        s(&d.join("embeddings.vec")),
        "--output",
        s(&aug),
    ]);
    assert!(out.status.success());
    let out = edda(&[
        "deviation",
        "--original",
        s(&d.join("train.jsonl")),
        "--augmented",
        s(&aug),
        "--embeddings",
        s(&d.join("embeddings.vec")),
        "--delta",
        "0.9",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let ops: Vec<&str> = text.lines().skip(2).map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(ops, ["RD", "RI", "RS", "RSR", "ALL"]);
    let all: Vec<&str> = text.lines().last().unwrap().split('\t').collect();
    let total: usize = all[1].parse().unwrap();
    let below: usize = all[2].parse().unwrap();
    assert!(total > 0 && below <= total);
}

#[test]
fn deviation_with_unknown_source_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let orig = dir.path().join("o.jsonl");
    let aug = dir.path().join("a.jsonl");
    fs::write(&orig, "{\"id\":\"a\",\"text\":\"katt\",\"label\":\"x\"}\n").unwrap();
    fs::write(&aug, "{\"id\":\"b#RSR#0\",\"text\":\"hund\",\"label\":\"x\"}\n").unwrap();
    let out = edda(&[
        "deviation",
        "--original",
        s(&orig),
        "--augmented",
        s(&aug),
        "--embeddings",
        s(&fixture("mini.vec")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn partition_output_is_nested() {
    let dir = synth_dir();
    let out = edda(&[
        "partition",
        "--input",
        s(&dir.path().join("train.jsonl")),
        "--fractions",
        "0.25,0.5,1.0",
        "--seed",
        "2",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut by_fraction: Vec<(String, Vec<String>)> = Vec::new();
    for line in text.lines().skip(1) {
        let (f, id) = line.split_once('\t').unwrap();
        match by_fraction.last_mut() {
            Some((last, ids)) if last == f => ids.push(id.to_owned()),
            _ => by_fraction.push((f.to_owned(), vec![id.to_owned()])),
        }
    }
    let sizes: Vec<usize> = by_fraction.iter().map(|(_, ids)| ids.len()).collect();
    assert_eq!(sizes, [10, 20, 40]);
    for pair in by_fraction.windows(2) {
        assert!(pair[0].1.iter().all(|id| pair[1].1.contains(id)));
    }
}

#[test]
fn experiment_writes_a_full_table() {
    let dir = synth_dir();
    let d = dir.path();
    let csv = d.join("results.csv");
    let dev = d.join("deviation.csv");
    let out = edda(&[
        "experiment",
        "--train",
        s(&d.join("train.jsonl")),
        "--test",
        s(&d.join("test.jsonl")),
        "--embeddings",
        s(&d.join("embeddings.vec")),
        "--stopwords",
        s(&d.join("stopwords.txt")),
        "--lexicon",
        s(&d.join("lexicon.tsv")),
        "--tag",
        "NOUN",
        "--fractions",
        "0.5,1.0",
        "--output",
        s(&csv),
        "--deviation-output",
        s(&dev),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert!(lines[0].starts_with("#meta ") && lines[0].contains("seed=0"));
    assert_eq!(lines[1], "fraction,technique,macro_f1,weighted_f1,n_train,n_aug_added,noop_count");
    assert_eq!(lines.len(), 2 + 2 * 4);
    for row in &lines[2..] {
        let f1: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&f1));
    }
    assert_eq!(fs::read_to_string(&dev).unwrap().lines().count(), 2 + 2 * 4);
}

#[test]
fn tsv_output_round_trips() {
    let dir = synth_dir();
    let d = dir.path();
    let tsv = d.join("aug.tsv");
    let out = edda(&[
        "augment",
        "--input",
        s(&d.join("train.jsonl")),
        "--embeddings",
        s(&d.join("embeddings.vec")),
        "--ops",
        "RS",
        "--output",
        s(&tsv),
    ]);
    assert!(out.status.success());
    let rows = load_dataset(&tsv, DatasetFormat::Tsv).unwrap();
    assert_eq!(rows.len(), 40);
    assert!(fs::read_to_string(&tsv).unwrap().starts_with("#meta "));
}
