use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;

use edda_core::corpus::{write_records, META_PREFIX};
use edda_core::deviation::{load_precomputed, pair_similarity, report_from_similarities};
use edda_core::synth::{SynthConfig, SynthCorpus};
use edda_core::{
    edda, load_dataset, load_embeddings, load_lexicon, load_stopwords, parse_pretagged, run_experiment,
    stratified_partitions, tokenize, tssr_tagged, AugmentationConfig, AugmentedRecord, DatasetFormat, EddaMode,
    EddaOp, EmbeddingStore, ExperimentOptions, LabeledRecord, PartitionSpec, PosLexicon, Resources, StopwordSet,
    Technique, TrainParams, DEFAULT_DELTA,
};

use crate::config::ConfigFile;
use crate::{CliError, ConfigArg};

const AUG_KEYS: [&str; 8] = [
    "alpha",
    "n_aug",
    "top_k",
    "seed",
    "ops",
    "mode",
    "augment_labels",
    "min_similarity",
];

/// Knobs shared by every command that generates variants.
#[derive(Debug, Args, Clone, Default)]
pub struct AugOpts {
    /// Fraction of tokens edited per sentence, in (0, 1].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Rounds of augmentation per sentence.
    #[arg(long)]
    pub n_aug: Option<usize>,
    /// Neighbor pool size for candidate sampling.
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated subset of RSR,RI,RS,RD.
    #[arg(long)]
    pub ops: Option<String>,
    /// per-op or composed.
    #[arg(long)]
    pub mode: Option<String>,
    /// Only augment records with one of these comma-separated labels.
    #[arg(long)]
    pub augment_labels: Option<String>,
    /// Ignore neighbors below this cosine.
    #[arg(long)]
    pub min_similarity: Option<f64>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ResourceOpts {
    /// word2vec text format vectors.
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
    /// One stopword per line.
    #[arg(long, value_name = "FILE")]
    pub stopwords: Option<PathBuf>,
    /// `word<TAB>TAG` lines.
    #[arg(long, value_name = "FILE")]
    pub lexicon: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct IoOpts {
    /// Input dataset (TSV `text<TAB>label` or JSONL).
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Input format; guessed from the extension when absent.
    #[arg(long)]
    pub format: Option<DatasetFormat>,
    /// Output file; stdout when absent.
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
    /// Output format, JSONL unless the output path ends in .tsv.
    #[arg(long)]
    pub output_format: Option<DatasetFormat>,
    /// Worker threads; 0 picks one per core.
    #[arg(long)]
    pub workers: Option<usize>,
}

const IO_KEYS: [&str; 5] = ["input", "format", "output", "output_format", "workers"];
const RESOURCE_KEYS: [&str; 3] = ["embeddings", "stopwords", "lexicon"];

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[command(flatten)]
    io: IoOpts,
    #[command(flatten)]
    resources: ResourceOpts,
    #[command(flatten)]
    aug: AugOpts,
    /// Emit the source records before their variants.
    #[arg(long)]
    include_original: bool,
    /// Leave out variants where no edit could be made.
    #[arg(long)]
    drop_noops: bool,
}

#[derive(Debug, Args)]
pub struct TssrArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[command(flatten)]
    io: IoOpts,
    #[command(flatten)]
    resources: ResourceOpts,
    #[command(flatten)]
    aug: AugOpts,
    /// Part-of-speech tag to replace; any tagged word when absent.
    #[arg(long)]
    tag: Option<String>,
    /// Variants per sentence.
    #[arg(long)]
    n: Option<usize>,
    /// Pre-tagged input (`form<TAB>TAG` lines, blank line between
    /// sentences, `# label = X` per sentence) instead of --input.
    #[arg(long, value_name = "FILE")]
    pretagged: Option<PathBuf>,
    #[arg(long)]
    include_original: bool,
    #[arg(long)]
    drop_noops: bool,
}

#[derive(Debug, Args)]
pub struct NeighborsArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, value_name = "FILE")]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    word: String,
    #[arg(long)]
    k: Option<usize>,
    /// Comma-separated words to leave out.
    #[arg(long)]
    exclude: Option<String>,
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DeviationArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Source sentences.
    #[arg(long, value_name = "FILE")]
    original: Option<PathBuf>,
    /// Variants with ids `<source_id>#<op>#<k>`.
    #[arg(long, value_name = "FILE")]
    augmented: Option<PathBuf>,
    #[arg(long)]
    format: Option<DatasetFormat>,
    #[arg(long, value_name = "FILE")]
    embeddings: Option<PathBuf>,
    /// `id<TAB>f1 f2 ...` sentence vectors used instead of pooled word
    /// vectors.
    #[arg(long, value_name = "FILE")]
    precomputed: Option<PathBuf>,
    /// Similarity threshold; pairs below it count as deviating.
    #[arg(long)]
    delta: Option<f64>,
    /// Also score variants identical to their source.
    #[arg(long)]
    include_noops: bool,
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    #[arg(long)]
    format: Option<DatasetFormat>,
    /// Comma-separated, strictly increasing, in (0, 1].
    #[arg(long)]
    fractions: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[command(flatten)]
    resources: ResourceOpts,
    #[command(flatten)]
    aug: AugOpts,
    #[arg(long, value_name = "FILE")]
    train: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    test: Option<PathBuf>,
    #[arg(long)]
    format: Option<DatasetFormat>,
    /// Comma-separated subset of baseline,EDDA,TSSR,RSR.
    #[arg(long)]
    techniques: Option<String>,
    /// Tag targeted by TSSR.
    #[arg(long)]
    tag: Option<String>,
    #[arg(long)]
    fractions: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    /// F1 table as CSV; stdout when absent.
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
    /// Per-cell deviation counts as CSV.
    #[arg(long, value_name = "FILE")]
    deviation_output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Directory receiving embeddings.vec, stopwords.txt, lexicon.tsv,
    /// train.jsonl and test.jsonl.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train_size: Option<usize>,
    #[arg(long)]
    test_size: Option<usize>,
}

fn load_config(arg: &ConfigArg, groups: &[&[&str]]) -> Result<ConfigFile, CliError> {
    let Some(path) = &arg.config else {
        return Ok(ConfigFile::default());
    };
    let cfg = ConfigFile::load(path)?;
    let known: Vec<&str> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    cfg.check_keys(&known)?;
    Ok(cfg)
}

/// Every referenced input must exist before any work starts.
fn check_inputs(paths: &[&Path]) -> Result<(), CliError> {
    match paths.iter().find(|p| !p.is_file()) {
        Some(p) => Err(CliError::Data(format!("input file not found: {}", p.display()))),
        None => Ok(()),
    }
}

fn comma_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(str::to_owned).collect()
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

fn aug_config(opts: &AugOpts, file: &ConfigFile) -> Result<AugmentationConfig, CliError> {
    let defaults = AugmentationConfig::default();
    let mut cfg = AugmentationConfig {
        alpha: file.pick_or(opts.alpha, "alpha", defaults.alpha)?,
        n_aug: file.pick_or(opts.n_aug, "n_aug", defaults.n_aug)?,
        top_k: file.pick_or(opts.top_k, "top_k", defaults.top_k)?,
        seed: file.pick_or(opts.seed, "seed", defaults.seed)?,
        min_similarity: file.pick_or(opts.min_similarity, "min_similarity", defaults.min_similarity)?,
        ..defaults
    };
    if let Some(ops) = file.pick::<String>(opts.ops.clone(), "ops")? {
        cfg.enabled_ops = comma_list(&ops)
            .iter()
            .map(|o| o.parse::<EddaOp>())
            .collect::<Result<_, _>>()
            .map_err(usage)?;
    }
    if let Some(mode) = file.pick::<String>(opts.mode.clone(), "mode")? {
        cfg.mode = mode.parse::<EddaMode>().map_err(usage)?;
    }
    if let Some(labels) = file.pick::<String>(opts.augment_labels.clone(), "augment_labels")? {
        cfg.augment_labels = Some(comma_list(&labels).into_iter().collect());
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn aug_meta(cfg: &AugmentationConfig) -> Vec<(&'static str, String)> {
    let ops: Vec<&str> = cfg.enabled_ops.iter().map(|o| o.label().as_str()).collect();
    let mut out = vec![
        ("seed", cfg.seed.to_string()),
        ("alpha", cfg.alpha.to_string()),
        ("n_aug", cfg.n_aug.to_string()),
        ("top_k", cfg.top_k.to_string()),
        ("ops", ops.join(",")),
        ("mode", cfg.mode.to_string()),
        ("min_similarity", cfg.min_similarity.to_string()),
    ];
    if let Some(labels) = &cfg.augment_labels {
        out.push(("augment_labels", labels.iter().cloned().collect::<Vec<_>>().join(",")));
    }
    out
}

/// The `#meta` line that opens every output.
fn meta_line(command: &str, fields: &[(&str, String)]) -> String {
    let mut line = format!("{META_PREFIX}tool=edda version={} command={command}", env!("CARGO_PKG_VERSION"));
    for (k, v) in fields {
        let v: String = v.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect();
        let _ = write!(line, " {k}={v}");
    }
    line.push('\n');
    line
}

fn emit(output: Option<&Path>, body: &[u8]) -> Result<(), CliError> {
    match output {
        Some(path) => fs::write(path, body)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Data(e.to_string()))
}

fn input_format(flag: Option<DatasetFormat>, file: &ConfigFile, path: &Path) -> Result<DatasetFormat, CliError> {
    Ok(file.pick(flag, "format")?.unwrap_or_else(|| DatasetFormat::from_path(path)))
}

struct LoadedResources {
    store: EmbeddingStore,
    stopwords: StopwordSet,
    lexicon: Option<PosLexicon>,
}

impl LoadedResources {
    fn resources(&self) -> Resources<'_> {
        let res = Resources::new(&self.store, &self.stopwords);
        match &self.lexicon {
            Some(lex) => res.with_lexicon(lex),
            None => res,
        }
    }
}

struct ResourcePaths {
    embeddings: PathBuf,
    stopwords: Option<PathBuf>,
    lexicon: Option<PathBuf>,
}

impl ResourcePaths {
    fn resolve(opts: &ResourceOpts, file: &ConfigFile) -> Result<Self, CliError> {
        Ok(ResourcePaths {
            embeddings: file.require_path(opts.embeddings.clone(), "embeddings")?,
            stopwords: file.path(opts.stopwords.clone(), "stopwords"),
            lexicon: file.path(opts.lexicon.clone(), "lexicon"),
        })
    }

    fn all(&self) -> Vec<&Path> {
        let mut out = vec![self.embeddings.as_path()];
        out.extend(self.stopwords.as_deref());
        out.extend(self.lexicon.as_deref());
        out
    }

    fn load(&self) -> Result<LoadedResources, CliError> {
        Ok(LoadedResources {
            store: load_embeddings(&self.embeddings)?,
            stopwords: match &self.stopwords {
                Some(p) => load_stopwords(p)?,
                None => StopwordSet::default(),
            },
            lexicon: self.lexicon.as_ref().map(load_lexicon).transpose()?,
        })
    }
}

/// Which rows a variant-producing command writes.
struct RowSelection {
    include_original: bool,
    drop_noops: bool,
}

/// Writes a dataset of variants, optionally preceded by their sources.
fn write_variants(
    command: &str,
    meta: &[(&str, String)],
    io: &IoOpts,
    file: &ConfigFile,
    sources: &[LabeledRecord],
    variants: &[AugmentedRecord],
    select: RowSelection,
) -> Result<(), CliError> {
    let RowSelection {
        include_original,
        drop_noops,
    } = select;
    let output = file.path(io.output.clone(), "output");
    let format = file.pick(io.output_format, "output_format")?.unwrap_or_else(|| match &output {
        Some(p) => DatasetFormat::from_path(p),
        None => DatasetFormat::Jsonl,
    });
    let mut rows: Vec<LabeledRecord> = Vec::new();
    if include_original {
        rows.extend(sources.iter().cloned());
    }
    rows.extend(variants.iter().filter(|v| !(drop_noops && v.noop)).map(AugmentedRecord::to_record));

    let mut body = meta_line(command, meta).into_bytes();
    write_records(&mut body, &rows, format)?;
    emit(output.as_deref(), &body)?;

    let noops = variants.iter().filter(|v| v.noop).count();
    eprintln!(
        "edda {command}: {} records, {} variants, {} noops",
        sources.len(),
        variants.len(),
        noops
    );
    Ok(())
}

pub fn augment(args: AugmentArgs) -> Result<(), CliError> {
    let file = load_config(&args.config, &[&AUG_KEYS, &IO_KEYS, &RESOURCE_KEYS])?;
    let cfg = aug_config(&args.aug, &file)?;
    let input = file.require_path(args.io.input.clone(), "input")?;
    let paths = ResourcePaths::resolve(&args.resources, &file)?;
    let mut inputs = paths.all();
    inputs.push(&input);
    check_inputs(&inputs)?;
    let workers = file.pick_or(args.io.workers, "workers", 0)?;

    let records = load_dataset(&input, input_format(args.io.format, &file, &input)?)?;
    let loaded = paths.load()?;
    let res = loaded.resources();
    let variants: Vec<AugmentedRecord> =
        pool(workers)?.install(|| records.par_iter().flat_map_iter(|r| edda(r, &res, &cfg)).collect());

    write_variants(
        "augment",
        &aug_meta(&cfg),
        &args.io,
        &file,
        &records,
        &variants,
        RowSelection {
            include_original: args.include_original,
            drop_noops: args.drop_noops,
        },
    )
}

pub fn tssr(args: TssrArgs) -> Result<(), CliError> {
    let file = load_config(&args.config, &[&AUG_KEYS, &IO_KEYS, &RESOURCE_KEYS, &["tag", "n", "pretagged"]])?;
    let cfg = aug_config(&args.aug, &file)?;
    let n: usize = file.pick_or(args.n, "n", 1)?;
    if n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let tag = file.pick::<String>(args.tag.clone(), "tag")?.map(|t| t.to_ascii_uppercase());
    let pretagged = file.path(args.pretagged.clone(), "pretagged");
    let input = file.path(args.io.input.clone(), "input");
    let paths = ResourcePaths::resolve(&args.resources, &file)?;
    let mut inputs = paths.all();
    match (&input, &pretagged) {
        (Some(i), None) => inputs.push(i),
        (None, Some(p)) => inputs.push(p),
        _ => return Err(CliError::Usage("give exactly one of --input and --pretagged".into())),
    }
    check_inputs(&inputs)?;
    let workers = file.pick_or(args.io.workers, "workers", 0)?;

    let loaded = paths.load()?;
    let res = loaded.resources();
    let pool = pool(workers)?;
    let (records, variants): (Vec<LabeledRecord>, Vec<AugmentedRecord>) = if let Some(path) = &pretagged {
        let tagged = parse_pretagged(path)?;
        let records: Vec<LabeledRecord> = tagged
            .iter()
            .map(|t| LabeledRecord::new(t.id.clone(), edda_core::detokenize(&t.sentence), t.label.clone()))
            .collect();
        let variants = pool.install(|| {
            tagged
                .par_iter()
                .zip(&records)
                .filter(|(_, r)| cfg.should_augment(&r.label))
                .flat_map_iter(|(t, r)| {
                    let sentence = t.sentence.clone().with_stopwords(&loaded.stopwords);
                    tssr_tagged(r, &sentence, tag.as_deref(), n, &res, &cfg)
                })
                .collect()
        });
        (records, variants)
    } else {
        let input = input.expect("checked above");
        if loaded.lexicon.is_none() {
            eprintln!("edda tssr: no --lexicon given, every token is untagged and all variants will be noops");
        }
        let records = load_dataset(&input, input_format(args.io.format, &file, &input)?)?;
        let variants = pool.install(|| {
            records
                .par_iter()
                .filter(|r| cfg.should_augment(&r.label))
                .flat_map_iter(|r| edda_core::tssr(r, tag.as_deref(), n, &res, &cfg))
                .collect()
        });
        (records, variants)
    };

    let mut meta = aug_meta(&cfg);
    meta.push(("n", n.to_string()));
    meta.push(("tag", tag.unwrap_or_else(|| "any".into())));
    write_variants(
        "tssr",
        &meta,
        &args.io,
        &file,
        &records,
        &variants,
        RowSelection {
            include_original: args.include_original,
            drop_noops: args.drop_noops,
        },
    )
}

pub fn neighbors(args: NeighborsArgs) -> Result<(), CliError> {
    let file = load_config(&args.config, &[&["embeddings", "k", "exclude", "output"]])?;
    let embeddings = file.require_path(args.embeddings.clone(), "embeddings")?;
    check_inputs(&[&embeddings])?;
    let k: usize = file.pick_or(args.k, "k", 10)?;
    let exclude: HashSet<String> = file
        .pick::<String>(args.exclude.clone(), "exclude")?
        .map(|s| comma_list(&s).into_iter().collect())
        .unwrap_or_default();

    let store = load_embeddings(&embeddings)?;
    let hits = store.nearest_neighbors(&args.word, k, &exclude)?;
    let mut body = meta_line("neighbors", &[("word", args.word.clone()), ("k", k.to_string())]);
    for hit in hits {
        let _ = writeln!(body, "{}\t{:.6}", hit.word, hit.score);
    }
    emit(file.path(args.output.clone(), "output").as_deref(), body.as_bytes())
}

/// Splits `<source_id>#<op>#<k>` from the right so source ids may
/// themselves contain `#`.
fn parse_variant_id(id: &str) -> Option<(&str, &str)> {
    let mut parts = id.rsplitn(3, '#');
    let k = parts.next()?;
    let op = parts.next()?;
    let source = parts.next()?;
    k.parse::<usize>().ok()?;
    Some((source, op))
}

pub fn deviation(args: DeviationArgs) -> Result<(), CliError> {
    let file = load_config(
        &args.config,
        &[&["original", "augmented", "format", "embeddings", "precomputed", "delta", "output"]],
    )?;
    let original = file.require_path(args.original.clone(), "original")?;
    let augmented = file.require_path(args.augmented.clone(), "augmented")?;
    let precomputed = file.path(args.precomputed.clone(), "precomputed");
    let embeddings = file.path(args.embeddings.clone(), "embeddings");
    let delta: f64 = file.pick_or(args.delta, "delta", DEFAULT_DELTA)?;
    if !(-1.0..=1.0).contains(&delta) {
        return Err(CliError::Usage(format!("--delta must be in [-1, 1], got {delta}")));
    }
    let mut inputs = vec![original.as_path(), augmented.as_path()];
    match (&precomputed, &embeddings) {
        (Some(p), _) => inputs.push(p),
        (None, Some(e)) => inputs.push(e),
        (None, None) => return Err(CliError::Usage("give --embeddings or --precomputed".into())),
    }
    check_inputs(&inputs)?;

    let sources = load_dataset(&original, input_format(args.format, &file, &original)?)?;
    let variants = load_dataset(&augmented, input_format(args.format, &file, &augmented)?)?;
    let by_id: HashMap<&str, &LabeledRecord> = sources.iter().map(|r| (r.id.as_str(), r)).collect();

    let mut pairs: BTreeMap<String, Vec<(&LabeledRecord, &LabeledRecord)>> = BTreeMap::new();
    for v in &variants {
        let Some((source, op)) = parse_variant_id(&v.id) else {
            if by_id.contains_key(v.id.as_str()) {
                continue; // an original included alongside its variants
            }
            return Err(CliError::Data(format!("id {:?} is not of the form <source>#<op>#<k>", v.id)));
        };
        let Some(src) = by_id.get(source) else {
            return Err(CliError::Data(format!("variant {:?} names unknown source {source:?}", v.id)));
        };
        if !args.include_noops && src.text == v.text {
            continue;
        }
        pairs.entry(op.to_owned()).or_default().push((src, v));
    }

    let similarities: BTreeMap<&str, Vec<Option<f64>>> = if let Some(path) = &precomputed {
        let vectors = load_precomputed(path)?;
        pairs
            .iter()
            .map(|(op, ps)| {
                let sims = ps
                    .iter()
                    .map(|(s, v)| vectors.similarity(&s.id, &v.id))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok((op.as_str(), sims))
            })
            .collect::<Result<_, CliError>>()?
    } else {
        let store = load_embeddings(embeddings.as_ref().expect("checked above"))?;
        pairs
            .iter()
            .map(|(op, ps)| {
                let sims = ps
                    .par_iter()
                    .map(|(s, v)| pair_similarity(&store, &tokenize(&s.text), &tokenize(&v.text)))
                    .collect();
                (op.as_str(), sims)
            })
            .collect()
    };

    let mut body = meta_line(
        "deviation",
        &[
            ("delta", delta.to_string()),
            ("source", if precomputed.is_some() { "precomputed" } else { "pooled" }.to_owned()),
        ],
    );
    body.push_str("op\ttotal_pairs\tbelow_threshold\tunembeddable\tfraction_below\n");
    let mut all = Vec::new();
    for (op, sims) in &similarities {
        let r = report_from_similarities(sims, delta);
        let _ = writeln!(
            body,
            "{op}\t{}\t{}\t{}\t{:.6}",
            r.total_pairs, r.below_threshold, r.unembeddable, r.fraction_below
        );
        all.extend_from_slice(sims);
    }
    let r = report_from_similarities(&all, delta);
    let _ = writeln!(
        body,
        "ALL\t{}\t{}\t{}\t{:.6}",
        r.total_pairs, r.below_threshold, r.unembeddable, r.fraction_below
    );
    emit(file.path(args.output.clone(), "output").as_deref(), body.as_bytes())
}

fn parse_fractions(s: &str) -> Result<Vec<f64>, CliError> {
    comma_list(s)
        .iter()
        .map(|f| f.parse::<f64>().map_err(|e| CliError::Usage(format!("fraction {f:?}: {e}"))))
        .collect()
}

fn partition_spec(flag: Option<String>, seed: u64, file: &ConfigFile) -> Result<PartitionSpec, CliError> {
    let mut spec = PartitionSpec { seed, ..PartitionSpec::default() };
    if let Some(f) = file.pick::<String>(flag, "fractions")? {
        spec.fractions = parse_fractions(&f)?;
    }
    spec.validate().map_err(usage)?;
    Ok(spec)
}

fn fractions_meta(spec: &PartitionSpec) -> String {
    spec.fractions.iter().map(|f| format!("{f:.2}")).collect::<Vec<_>>().join(",")
}

pub fn partition(args: PartitionArgs) -> Result<(), CliError> {
    let file = load_config(&args.config, &[&["input", "format", "fractions", "seed", "output"]])?;
    let input = file.require_path(args.input.clone(), "input")?;
    let seed: u64 = file.pick_or(args.seed, "seed", 0)?;
    let spec = partition_spec(args.fractions.clone(), seed, &file)?;
    check_inputs(&[&input])?;

    let records = load_dataset(&input, input_format(args.format, &file, &input)?)?;
    let partitions = stratified_partitions(&records, &spec).map_err(|e| CliError::Data(e.to_string()))?;
    let mut body = meta_line(
        "partition",
        &[("seed", seed.to_string()), ("fractions", fractions_meta(&spec))],
    );
    for p in &partitions {
        for id in &p.record_ids {
            let _ = writeln!(body, "{:.2}\t{id}", p.fraction);
        }
    }
    emit(file.path(args.output.clone(), "output").as_deref(), body.as_bytes())
}

pub fn experiment(args: ExperimentArgs) -> Result<(), CliError> {
    let file = load_config(
        &args.config,
        &[
            &AUG_KEYS,
            &RESOURCE_KEYS,
            &[
                "train",
                "test",
                "format",
                "techniques",
                "tag",
                "fractions",
                "epochs",
                "lambda",
                "delta",
                "workers",
                "output",
                "deviation_output",
            ],
        ],
    )?;
    let cfg = aug_config(&args.aug, &file)?;
    let spec = partition_spec(args.fractions.clone(), cfg.seed, &file)?;
    let techniques: Vec<Technique> = match file.pick::<String>(args.techniques.clone(), "techniques")? {
        Some(list) => {
            let parsed: BTreeSet<Technique> = comma_list(&list)
                .iter()
                .map(|t| t.parse::<Technique>())
                .collect::<Result<_, _>>()
                .map_err(usage)?;
            parsed.into_iter().collect()
        }
        None => Technique::ALL.to_vec(),
    };
    if techniques.is_empty() {
        return Err(CliError::Usage("--techniques is empty".into()));
    }
    let defaults = TrainParams::default();
    let train_params = TrainParams {
        epochs: file.pick_or(args.epochs, "epochs", defaults.epochs)?,
        lambda: file.pick_or(args.lambda, "lambda", defaults.lambda)?,
        seed: cfg.seed,
    };
    if train_params.epochs == 0 || !(train_params.lambda > 0.0 && train_params.lambda.is_finite()) {
        return Err(CliError::Usage("--epochs must be at least 1 and --lambda positive".into()));
    }
    let opts = ExperimentOptions {
        train: train_params,
        tssr_tag: file.pick::<String>(args.tag.clone(), "tag")?.map(|t| t.to_ascii_uppercase()),
        workers: file.pick_or(args.workers, "workers", 0)?,
        delta: file.pick_or(args.delta, "delta", DEFAULT_DELTA)?,
    };
    let train_path = file.require_path(args.train.clone(), "train")?;
    let test_path = file.require_path(args.test.clone(), "test")?;
    let paths = ResourcePaths::resolve(&args.resources, &file)?;
    let mut inputs = paths.all();
    inputs.push(&train_path);
    inputs.push(&test_path);
    check_inputs(&inputs)?;

    let train = load_dataset(&train_path, input_format(args.format, &file, &train_path)?)?;
    let test = load_dataset(&test_path, input_format(args.format, &file, &test_path)?)?;
    let loaded = paths.load()?;
    let table = run_experiment(&train, &test, &spec, &techniques, &loaded.resources(), &cfg, &opts)
        .map_err(|e| CliError::Data(e.to_string()))?;

    let mut meta = aug_meta(&cfg);
    meta.extend([
        ("fractions", fractions_meta(&spec)),
        ("techniques", techniques.iter().map(|t| t.as_str()).collect::<Vec<_>>().join(",")),
        ("tag", opts.tssr_tag.clone().unwrap_or_else(|| "any".into())),
        ("epochs", opts.train.epochs.to_string()),
        ("lambda", opts.train.lambda.to_string()),
        ("delta", opts.delta.to_string()),
    ]);
    let body = meta_line("experiment", &meta) + &table.to_csv();
    emit(file.path(args.output.clone(), "output").as_deref(), body.as_bytes())?;
    if let Some(path) = file.path(args.deviation_output.clone(), "deviation_output") {
        let body = meta_line("experiment", &meta) + &table.deviation_csv();
        emit(Some(&path), body.as_bytes())?;
    }
    Ok(())
}

pub fn synth(args: SynthArgs) -> Result<(), CliError> {
    let file = load_config(&args.config, &[&["out_dir", "seed", "train_size", "test_size"]])?;
    let dir = file.require_path(args.out_dir.clone(), "out_dir")?;
    let seed: u64 = file.pick_or(args.seed, "seed", 0)?;
    let train_size: usize = file.pick_or(args.train_size, "train_size", 200)?;
    let test_size: usize = file.pick_or(args.test_size, "test_size", 100)?;
    if train_size == 0 || test_size == 0 {
        return Err(CliError::Usage("--train-size and --test-size must be positive".into()));
    }

    fs::create_dir_all(&dir)?;
    let corpus = SynthCorpus::generate(&SynthConfig { seed, ..SynthConfig::default() });
    corpus.write_resources(&dir)?;
    let meta = [
        ("seed", seed.to_string()),
        ("train_size", train_size.to_string()),
        ("test_size", test_size.to_string()),
    ];
    for (name, records) in [
        ("train.jsonl", corpus.records(train_size, "train-", seed)),
        ("test.jsonl", corpus.records(test_size, "test-", seed)),
    ] {
        let mut body = meta_line("synth", &meta).into_bytes();
        write_records(&mut body, &records, DatasetFormat::Jsonl)?;
        emit(Some(&dir.join(name)), &body)?;
    }
    eprintln!("edda synth: wrote resources and {train_size}+{test_size} records to {}", dir.display());
    Ok(())
}
