//! Subcommand implementations. Each command resolves and validates all of
//! its options before creating any output.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::Args;
use regex::Regex;
use serde::Serialize;

use semshift_core::aggregate::{
    build_representations, read_store_set, write_store_set, AggregateOptions, ScopeSelection, StoreSet,
    DEFAULT_MIN_COUNT, GLOBAL_SCOPE,
};
use semshift_core::corpus::{self, load_corpus, PeriodSet, PreprocessRules};
use semshift_core::embedding_io::{open_stream, write_stream, write_stream_jsonl};
use semshift_core::eval::{
    evaluate, load_gold, synth_stream, write_gold, PValueMethod, SynthSpec, DEFAULT_PERMUTATIONS,
};
use semshift_core::shift::{
    self, rank_shifts, select_changed_seeds, shift_score, sort_shifts, ShiftError, DEFAULT_NEIGHBORS,
    DEFAULT_NORM_LD_THRESHOLD, DEFAULT_TOP_CHANGED, DEFAULT_WORD_FILTER,
};
use semshift_core::tokenizer::{chunk, write_manifest_line, TokenizedSequence, Vocab, DEFAULT_CONTENT_LIMIT};

use crate::config::{config_error, require, Failure, OrConfig, RunConfig};
use crate::output::{write_atomic, write_json, write_records, Format};
use crate::Globals;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const STORE_FILE: &str = "representations.tsr";

fn create_out_dir(g: &Globals) -> Result<(), Failure> {
    std::fs::create_dir_all(&g.out_dir)
        .map_err(|e| Failure::runtime(anyhow::anyhow!("cannot create {}: {e}", g.out_dir.display())))
}

fn open_input(path: &Path, what: &str) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::runtime(anyhow::anyhow!("cannot open {what} {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// prepare

#[derive(Args)]
pub struct PrepareArgs {
    /// Corpus file (JSON lines: id, date, lang, title, body)
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Period config file (JSON array of {label, start, end})
    #[arg(long)]
    periods: Option<PathBuf>,
    /// Shipped period preset: liverpoolfc, brexit or immigration
    #[arg(long)]
    preset: Option<String>,
    /// WordPiece vocabulary, one token per line
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    lowercase: Option<bool>,
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    strip_urls: Option<bool>,
    /// Maximum content tokens per sequence
    #[arg(long)]
    limit: Option<u64>,
    /// Shuffle documents (seeded) before writing the manifest
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    shuffle: Option<bool>,
}

#[derive(Debug, Default, Clone, Serialize)]
struct PeriodStats {
    period: String,
    documents: u64,
    sequences: u64,
    words: u64,
    subwords: u64,
}

impl PeriodStats {
    fn add(&mut self, other: &PeriodStats) {
        self.documents += other.documents;
        self.sequences += other.sequences;
        self.words += other.words;
        self.subwords += other.subwords;
    }
}

fn resolve_periods(a: &PrepareArgs, cfg: &RunConfig) -> Result<PeriodSet, Failure> {
    let (file, preset) = if a.periods.is_some() || a.preset.is_some() {
        (a.periods.clone(), a.preset.clone())
    } else {
        (cfg.path(None, "periods")?, cfg.string(None, "preset")?)
    };
    match (file, preset) {
        (Some(_), Some(_)) => Err(config_error("--periods and --preset are mutually exclusive")),
        (Some(path), None) => PeriodSet::load(&path).or_config(),
        (None, Some(name)) => PeriodSet::preset(&name).or_config(),
        (None, None) => Err(config_error("one of --periods or --preset is required")),
    }
}

pub fn prepare(a: PrepareArgs, cfg: &RunConfig, g: &Globals) -> Result<(), Failure> {
    let periods = resolve_periods(&a, cfg)?;
    let corpus_path = require(cfg.path(a.corpus, "corpus")?, "corpus")?;
    let vocab_path = require(cfg.path(a.vocab, "vocab")?, "vocab")?;
    let rules = PreprocessRules {
        lowercase: cfg.bool(a.lowercase, "lowercase")?.unwrap_or(false),
        strip_urls: cfg.bool(a.strip_urls, "strip_urls")?.unwrap_or(false),
    };
    let limit = cfg.u64(a.limit, "limit")?.unwrap_or(DEFAULT_CONTENT_LIMIT as u64);
    if limit == 0 || limit > u32::MAX as u64 {
        return Err(config_error("--limit must be at least 1"));
    }
    let shuffle = cfg.bool(a.shuffle, "shuffle")?.unwrap_or(false);
    let vocab = Vocab::load(&vocab_path)?;
    let reader = load_corpus(&corpus_path)?;
    create_out_dir(g)?;

    let mut stats: BTreeMap<String, PeriodStats> = periods
        .labels()
        .map(|l| (l.to_string(), PeriodStats { period: l.to_string(), ..Default::default() }))
        .collect();
    let mut skipped = 0u64;
    let manifest = g.out_dir.join(MANIFEST_FILE);
    write_atomic(&manifest, |out| {
        let mut emit = |doc: corpus::Document| -> anyhow::Result<()> {
            let Some(label) = periods.assign(doc.date) else {
                skipped += 1;
                return Ok(());
            };
            let text = corpus::preprocess(&doc.text(), rules);
            let seq = TokenizedSequence::from_text(&doc.id, label, &text, rules.lowercase, &vocab);
            let chunks = chunk(&seq, limit as usize)?;
            let s = stats.get_mut(label).expect("label from period set");
            s.documents += 1;
            s.sequences += chunks.len() as u64;
            s.words += seq.words().count() as u64;
            s.subwords += seq.len() as u64;
            for c in &chunks {
                write_manifest_line(out, c)?;
            }
            Ok(())
        };
        if shuffle {
            let docs = reader.collect::<Result<Vec<_>, _>>()?;
            for doc in corpus::shuffle(docs, g.seed) {
                emit(doc)?;
            }
        } else {
            for doc in reader {
                emit(doc?)?;
            }
        }
        Ok(())
    })?;

    let mut rows: Vec<PeriodStats> = periods.labels().map(|l| stats[l].clone()).collect();
    let mut total = PeriodStats { period: "Entire corpus".into(), ..Default::default() };
    rows.iter().for_each(|r| total.add(r));
    rows.push(total);
    let stats_path = write_records(&g.out_dir, "corpus_stats", g.format, &rows)?;

    let millions = |n: u64| format!("{:.1}", n as f64 / 1e6);
    let width = rows.iter().map(|r| r.period.len()).max().unwrap_or(0).max(11);
    println!("{:<width$}  {:>9}  {:>25}  {:>22}", "Time period", "Documents", "Num. tokens (in millions)", "Subwords (in millions)");
    for r in &rows {
        println!("{:<width$}  {:>9}  {:>25}  {:>22}", r.period, r.documents, millions(r.words), millions(r.subwords));
    }
    if skipped > 0 {
        println!("skipped {skipped} documents outside all periods");
    }
    println!("wrote {} and {}", manifest.display(), stats_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// aggregate

#[derive(Args)]
pub struct AggregateArgs {
    /// Embedding stream (CTE1 or JSON lines); repeat for shards
    #[arg(long = "stream")]
    streams: Vec<PathBuf>,
    /// Minimum usages for a word to be kept
    #[arg(long)]
    min_count: Option<u64>,
    /// Which scopes to build: period, global or both
    #[arg(long)]
    scope: Option<String>,
    /// Vocabulary used to identify the [UNK] token id
    #[arg(long, conflicts_with = "unk_id")]
    vocab: Option<PathBuf>,
    /// Token id of [UNK]; words containing it are skipped
    #[arg(long)]
    unk_id: Option<u64>,
    /// Regex of words to exclude
    #[arg(long)]
    exclude: Option<String>,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    scope: &'a str,
    kept: usize,
    dropped: usize,
}

fn parse_scope(s: &str) -> Result<ScopeSelection, Failure> {
    match s {
        "period" | "per-period" => Ok(ScopeSelection::PerPeriod),
        "global" => Ok(ScopeSelection::Global),
        "both" => Ok(ScopeSelection::Both),
        other => Err(config_error(format!("unknown scope {other:?} (expected period, global or both)"))),
    }
}

pub fn aggregate(a: AggregateArgs, cfg: &RunConfig, g: &Globals) -> Result<(), Failure> {
    let streams = cfg.paths(a.streams, "streams")?;
    if streams.is_empty() {
        return Err(config_error("at least one --stream is required"));
    }
    let min_count = cfg.u64(a.min_count, "min_count")?.unwrap_or(DEFAULT_MIN_COUNT);
    if min_count == 0 {
        return Err(config_error("--min-count must be at least 1"));
    }
    let scope = parse_scope(&cfg.string(a.scope, "scope")?.unwrap_or_else(|| "both".into()))?;
    let exclude = cfg
        .string(a.exclude, "exclude")?
        .map(|re| Regex::new(&re).or_config())
        .transpose()?;
    let (vocab, unk_id) = if a.vocab.is_some() || a.unk_id.is_some() {
        (a.vocab, a.unk_id)
    } else {
        (cfg.path(None, "vocab")?, cfg.u64(None, "unk_id")?)
    };
    let unk_id = match (vocab, unk_id) {
        (Some(_), Some(_)) => return Err(config_error("--vocab and --unk-id are mutually exclusive")),
        (Some(path), None) => Some(Vocab::load(&path)?.unk_id),
        (None, Some(id)) => Some(u32::try_from(id).map_err(|_| config_error("--unk-id out of range"))?),
        (None, None) => None,
    };

    let force_jsonl = g.format == Format::Jsonl;
    let mut shards = Vec::with_capacity(streams.len());
    for path in &streams {
        let reader = open_stream(path, force_jsonl)
            .map_err(|e| Failure::runtime(anyhow::anyhow!("{}: {e}", path.display())))?;
        shards.push((reader.header().clone(), reader));
    }
    let is_excluded = |w: &str| exclude.as_ref().is_some_and(|re| re.is_match(w));
    let opts = AggregateOptions {
        scope,
        min_count,
        unk_id,
        exclude: exclude.as_ref().map(|_| &is_excluded as &(dyn Fn(&str) -> bool + Sync)),
    };
    let (stores, summary) = build_representations(shards, &opts)?;

    create_out_dir(g)?;
    let store_path = g.out_dir.join(STORE_FILE);
    write_atomic(&store_path, |out| {
        write_store_set(&stores, out)?;
        Ok(())
    })?;
    let rows: Vec<SummaryRow> =
        summary.iter().map(|s| SummaryRow { scope: &s.scope, kept: s.kept, dropped: s.dropped }).collect();
    let summary_path = write_records(&g.out_dir, "aggregate_summary", g.format, &rows)?;
    println!("scope\tkept\tdropped (min_count={min_count})");
    for s in &summary {
        println!("{}\t{}\t{}", s.scope, s.kept, s.dropped);
    }
    println!("wrote {} and {}", store_path.display(), summary_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// shared query options

#[derive(Args)]
pub struct QueryArgs {
    /// Representation store (default: <out-dir>/representations.tsr)
    #[arg(long)]
    store: Option<PathBuf>,
    /// Regex of candidate words to ignore; empty string disables
    #[arg(long)]
    filter: Option<String>,
    /// Case-fold query words, matching a lowercased pipeline
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    lowercase: Option<bool>,
}

struct Query {
    store_path: PathBuf,
    filter: Option<Regex>,
    lowercase: bool,
}

impl Query {
    fn resolve(a: QueryArgs, cfg: &RunConfig, g: &Globals) -> Result<Self, Failure> {
        let store_path = cfg.path(a.store, "store")?.unwrap_or_else(|| g.out_dir.join(STORE_FILE));
        let pattern = cfg.string(a.filter, "filter")?.unwrap_or_else(|| DEFAULT_WORD_FILTER.to_string());
        let filter = if pattern.is_empty() { None } else { Some(Regex::new(&pattern).or_config()?) };
        Ok(Self { store_path, filter, lowercase: cfg.bool(a.lowercase, "lowercase")?.unwrap_or(false) })
    }

    fn load(&self) -> Result<StoreSet, Failure> {
        let set = read_store_set(open_input(&self.store_path, "store")?)
            .map_err(|e| Failure::runtime(anyhow::anyhow!("{}: {e}", self.store_path.display())))?;
        Ok(set)
    }

    fn rejects(&self, word: &str) -> bool {
        self.filter.as_ref().is_some_and(|re| re.is_match(word))
    }

    fn fold(&self, words: Vec<String>) -> Vec<String> {
        if self.lowercase {
            words.into_iter().map(|w| w.to_lowercase()).collect()
        } else {
            words
        }
    }
}

fn check_scope(stores: &StoreSet, label: &str) -> Result<(), Failure> {
    if stores.get(label).is_some() {
        return Ok(());
    }
    let known: Vec<&str> = stores.stores.iter().map(|s| s.scope.as_str()).collect();
    Err(config_error(format!("scope {label:?} not in store (available: {})", known.join(", "))))
}

fn report_missing(what: &str, missing: &[String], strict: bool) -> Result<(), Failure> {
    if missing.is_empty() {
        return Ok(());
    }
    eprintln!("not found: {what}: {}", missing.join(", "));
    if strict {
        return Err(Failure::runtime(anyhow::anyhow!("{} {what} not found (--strict)", missing.len())));
    }
    Ok(())
}

fn periods_pair(
    cfg: &RunConfig,
    a: Option<String>,
    b: Option<String>,
    keys: [&str; 2],
) -> Result<Option<(String, String)>, Failure> {
    match (cfg.string(a, keys[0])?, cfg.string(b, keys[1])?) {
        (Some(a), Some(b)) => Ok(Some((a, b))),
        (None, None) => Ok(None),
        _ => Err(config_error(format!("--{} and --{} must be given together", keys[0], keys[1]).replace('_', "-"))),
    }
}

// ---------------------------------------------------------------------------
// shift

#[derive(Args)]
pub struct ShiftArgs {
    #[command(flatten)]
    query: QueryArgs,
    #[arg(long)]
    period_a: Option<String>,
    #[arg(long)]
    period_b: Option<String>,
    /// Words to score (default: every word present in both periods)
    #[arg(long = "word", value_delimiter = ',')]
    words: Vec<String>,
}

pub fn shift(a: ShiftArgs, cfg: &RunConfig, g: &Globals) -> Result<(), Failure> {
    let q = Query::resolve(a.query, cfg, g)?;
    let (pa, pb) = periods_pair(cfg, a.period_a, a.period_b, ["period_a", "period_b"])?
        .ok_or_else(|| config_error("--period-a and --period-b are required"))?;
    let words = q.fold(cfg.strings(a.words, "words")?);
    let stores = q.load()?;
    check_scope(&stores, &pa)?;
    check_scope(&stores, &pb)?;

    let mut missing = Vec::new();
    let mut scores = if words.is_empty() {
        rank_shifts(&pa, &pb, &stores).map_err(Failure::runtime)?
    } else {
        let mut scores = Vec::new();
        for w in &words {
            match shift_score(w, &pa, &pb, &stores) {
                Ok(s) => scores.push(s),
                Err(ShiftError::NotFound { .. } | ShiftError::ZeroNorm) => missing.push(w.clone()),
                Err(e) => return Err(Failure::runtime(e)),
            }
        }
        scores
    };
    scores.retain(|s| !q.rejects(&s.word));
    sort_shifts(&mut scores);

    create_out_dir(g)?;
    let path = write_records(&g.out_dir, "shift", g.format, &scores)?;
    for s in scores.iter().take(10) {
        println!("{}\t{:.6}", s.word, s.distance);
    }
    println!("wrote {} ({} words)", path.display(), scores.len());
    report_missing("words", &missing, g.strict)
}

// ---------------------------------------------------------------------------
// neighbors

#[derive(Args)]
pub struct NeighborArgs {
    /// Scope searched for neighbors (a period label or GLOBAL)
    #[arg(long)]
    scope: Option<String>,
    /// Number of neighbors
    #[arg(long)]
    k: Option<u64>,
    /// Maximum normalized Levenshtein similarity to the target
    #[arg(long)]
    threshold: Option<f64>,
    /// First period for meaning-change ranking
    #[arg(long)]
    first: Option<String>,
    /// Last period for meaning-change ranking
    #[arg(long)]
    last: Option<String>,
    /// Number of most-changed neighbors kept
    #[arg(long)]
    top: Option<u64>,
}

struct NeighborOpts {
    scope: String,
    k: usize,
    threshold: f64,
    span: Option<(String, String)>,
    top: usize,
}

impl NeighborOpts {
    fn resolve(a: NeighborArgs, cfg: &RunConfig) -> Result<Self, Failure> {
        let k = cfg.u64(a.k, "k")?.unwrap_or(DEFAULT_NEIGHBORS as u64);
        let threshold = cfg.f64(a.threshold, "threshold")?.unwrap_or(DEFAULT_NORM_LD_THRESHOLD);
        let top = cfg.u64(a.top, "top")?.unwrap_or(DEFAULT_TOP_CHANGED as u64);
        if k == 0 || top == 0 {
            return Err(config_error("--k and --top must be at least 1"));
        }
        if !(0.0..=1.0).contains(&threshold) {
            return Err(config_error("--threshold must lie in [0, 1]"));
        }
        Ok(Self {
            scope: cfg.string(a.scope, "scope")?.unwrap_or_else(|| GLOBAL_SCOPE.to_string()),
            k: k as usize,
            threshold,
            span: periods_pair(cfg, a.first, a.last, ["first", "last"])?,
            top: top as usize,
        })
    }

    fn check(&self, stores: &StoreSet) -> Result<(), Failure> {
        check_scope(stores, &self.scope)?;
        if let Some((first, last)) = &self.span {
            check_scope(stores, first)?;
            check_scope(stores, last)?;
        }
        Ok(())
    }
}

#[derive(Args)]
pub struct NeighborsArgs {
    #[command(flatten)]
    query: QueryArgs,
    #[command(flatten)]
    opts: NeighborArgs,
    /// Target word; repeat or comma-separate for several
    #[arg(long = "target", value_delimiter = ',')]
    targets: Vec<String>,
}

#[derive(Serialize)]
struct NeighborRow<'a> {
    target: &'a str,
    word: &'a str,
    similarity: f64,
    normld: f64,
    rank: usize,
}

pub fn neighbors(a: NeighborsArgs, cfg: &RunConfig, g: &Globals) -> Result<(), Failure> {
    let q = Query::resolve(a.query, cfg, g)?;
    let opts = NeighborOpts::resolve(a.opts, cfg)?;
    let targets = q.fold(cfg.strings(a.targets, "targets")?);
    if targets.is_empty() {
        return Err(config_error("at least one --target is required"));
    }
    let stores = q.load()?;
    opts.check(&stores)?;
    let store = stores.get(&opts.scope).expect("checked scope");

    let mut sets = Vec::new();
    let mut changes = Vec::new();
    let mut missing = Vec::new();
    for target in &targets {
        let set = match shift::neighbors(target, store, opts.k, opts.threshold, |w| q.rejects(w)) {
            Ok(set) => set,
            Err(ShiftError::NotFound { .. } | ShiftError::ZeroNorm) => {
                missing.push(target.clone());
                continue;
            }
            Err(e) => return Err(Failure::runtime(e)),
        };
        if let Some((first, last)) = &opts.span {
            let candidates = set.entries.iter().map(|n| n.word.as_str());
            let sel = select_changed_seeds(target, candidates, first, last, &stores, opts.top)
                .map_err(Failure::runtime)?;
            if !sel.skipped.is_empty() {
                eprintln!("{target}: neighbors absent from {first} or {last}: {}", sel.skipped.join(", "));
            }
            changes.extend(sel.ranked);
        }
        sets.push(set);
    }
    let rows: Vec<NeighborRow> = sets
        .iter()
        .flat_map(|s| {
            s.entries.iter().enumerate().map(|(i, n)| NeighborRow {
                target: &s.target,
                word: &n.word,
                similarity: n.similarity,
                normld: n.norm_ld,
                rank: i + 1,
            })
        })
        .collect();

    create_out_dir(g)?;
    let path = write_records(&g.out_dir, "neighbors", g.format, &rows)?;
    println!("wrote {} ({} rows)", path.display(), rows.len());
    if opts.span.is_some() {
        let path = write_records(&g.out_dir, "meaning_change", g.format, &changes)?;
        println!("wrote {} ({} rows)", path.display(), changes.len());
    }
    report_missing("targets", &missing, g.strict)
}

// ---------------------------------------------------------------------------
// trajectory

#[derive(Args)]
pub struct TrajectoryArgs {
    #[command(flatten)]
    query: QueryArgs,
    #[command(flatten)]
    opts: NeighborArgs,
    /// Target word; repeat or comma-separate for several
    #[arg(long = "target", value_delimiter = ',')]
    targets: Vec<String>,
    /// Seed words (default: the most-changed neighbors of each target)
    #[arg(long = "seed-word", value_delimiter = ',')]
    seeds: Vec<String>,
    /// Periods in trajectory order (default: store order)
    #[arg(long = "period", value_delimiter = ',')]
    periods: Vec<String>,
}

#[derive(Serialize)]
struct TrajectoryRow<'a> {
    target: &'a str,
    seed: &'a str,
    period: &'a str,
    similarity: f64,
}

pub fn trajectory(a: TrajectoryArgs, cfg: &RunConfig, g: &Globals) -> Result<(), Failure> {
    let q = Query::resolve(a.query, cfg, g)?;
    let mut opts = NeighborOpts::resolve(a.opts, cfg)?;
    let targets = q.fold(cfg.strings(a.targets, "targets")?);
    if targets.is_empty() {
        return Err(config_error("at least one --target is required"));
    }
    let seeds = q.fold(cfg.strings(a.seeds, "seeds")?);
    let mut periods = cfg.strings(a.periods, "trajectory_periods")?;
    let stores = q.load()?;
    if periods.is_empty() {
        periods = stores.period_labels().map(str::to_string).collect();
    }
    for p in &periods {
        check_scope(&stores, p)?;
    }
    if seeds.is_empty() && opts.span.is_none() {
        match (periods.first(), periods.last()) {
            (Some(first), Some(last)) if first != last => opts.span = Some((first.clone(), last.clone())),
            _ => return Err(config_error("deriving seeds needs at least two periods or --first/--last")),
        }
    }
    opts.check(&stores)?;

    let mut missing = Vec::new();
    let mut trajectories = Vec::new();
    for target in &targets {
        let target_seeds: Vec<String> = if seeds.is_empty() {
            let store = stores.get(&opts.scope).expect("checked scope");
            let (first, last) = opts.span.as_ref().expect("span set when seeds are derived");
            let set = match shift::neighbors(target, store, opts.k, opts.threshold, |w| q.rejects(w)) {
                Ok(set) => set,
                Err(ShiftError::NotFound { .. } | ShiftError::ZeroNorm) => {
                    missing.push(target.clone());
                    continue;
                }
                Err(e) => return Err(Failure::runtime(e)),
            };
            let candidates = set.entries.iter().map(|n| n.word.as_str());
            select_changed_seeds(target, candidates, first, last, &stores, opts.top)
                .map_err(Failure::runtime)?
                .ranked
                .into_iter()
                .map(|m| m.seed)
                .collect()
        } else {
            seeds.clone()
        };
        for seed in &target_seeds {
            let t = shift::trajectory(target, seed, periods.iter().map(String::as_str), &stores)
                .map_err(Failure::runtime)?;
            if let Some(w) = &t.warning {
                eprintln!("{target}/{seed}: {w}");
            }
            if !t.missing.is_empty() {
                missing.push(format!("{target}/{seed} in {}", t.missing.join(" ")));
            }
            trajectories.push(t);
        }
    }
    let rows: Vec<TrajectoryRow> = trajectories
        .iter()
        .flat_map(|t| {
            t.points.iter().map(|p| TrajectoryRow {
                target: &t.target,
                seed: &t.seed,
                period: &p.period,
                similarity: p.similarity,
            })
        })
        .collect();

    create_out_dir(g)?;
    let path = write_records(&g.out_dir, "trajectory", g.format, &rows)?;
    println!("wrote {} ({} rows)", path.display(), rows.len());
    report_missing("trajectory words", &missing, g.strict)
}

// ---------------------------------------------------------------------------
// eval

#[derive(Args)]
pub struct EvalArgs {
    /// Representation store (default: <out-dir>/representations.tsr)
    #[arg(long)]
    store: Option<PathBuf>,
    /// Gold standard TSV: word<TAB>index
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long)]
    period_a: Option<String>,
    #[arg(long)]
    period_b: Option<String>,
    /// p-value method: t-dist or permutation
    #[arg(long)]
    method: Option<String>,
    /// Shuffles for the permutation method
    #[arg(long)]
    permutations: Option<u64>,
    /// Case-fold gold words
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    lowercase: Option<bool>,
}

pub fn eval(a: EvalArgs, cfg: &RunConfig, g: &Globals) -> Result<(), Failure> {
    let store_path = cfg.path(a.store, "store")?.unwrap_or_else(|| g.out_dir.join(STORE_FILE));
    let gold_path = require(cfg.path(a.gold, "gold")?, "gold")?;
    let (pa, pb) = periods_pair(cfg, a.period_a, a.period_b, ["period_a", "period_b"])?
        .ok_or_else(|| config_error("--period-a and --period-b are required"))?;
    let permutations = cfg.u64(a.permutations, "permutations")?.unwrap_or(DEFAULT_PERMUTATIONS as u64);
    if permutations == 0 {
        return Err(config_error("--permutations must be at least 1"));
    }
    let method = match cfg.string(a.method, "method")?.as_deref().unwrap_or("t-dist") {
        "t-dist" => PValueMethod::TDist,
        "permutation" => PValueMethod::Permutation { permutations: permutations as usize, seed: g.seed },
        other => return Err(config_error(format!("unknown method {other:?} (expected t-dist or permutation)"))),
    };
    let lowercase = cfg.bool(a.lowercase, "lowercase")?.unwrap_or(false);
    let gold = load_gold(&gold_path, lowercase)?;
    let stores = read_store_set(open_input(&store_path, "store")?)?;
    check_scope(&stores, &pa)?;
    check_scope(&stores, &pb)?;
    let report = evaluate(&stores, &gold, &pa, &pb, method)?;

    create_out_dir(g)?;
    let report_path = g.out_dir.join("eval_report.json");
    write_json(&report_path, &report)?;
    let pairs_path = write_records(&g.out_dir, "eval_pairs", g.format, &report.pairs)?;
    println!(
        "pearson r = {:.4}, p = {:.3e} ({}), n = {}, missing = {}",
        report.pearson_r, report.p_value, report.method, report.n_evaluated, report.n_missing
    );
    println!("wrote {} and {}", report_path.display(), pairs_path.display());
    report_missing("gold words", &report.missing, g.strict)
}

// ---------------------------------------------------------------------------
// synth

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    vocab_size: Option<u64>,
    #[arg(long)]
    dim: Option<u64>,
    /// Usages per word per period
    #[arg(long)]
    usages: Option<u64>,
    /// Gaussian noise standard deviation
    #[arg(long)]
    sigma: Option<f64>,
    /// Number of words with a planted shift
    #[arg(long)]
    planted: Option<u64>,
    /// Rotation angle of planted words, in radians
    #[arg(long)]
    theta: Option<f64>,
}

pub fn synth(a: SynthArgs, cfg: &RunConfig, g: &Globals) -> Result<(), Failure> {
    let d = SynthSpec::default();
    let size = |v: Option<u64>, key: &str, default: usize| -> Result<usize, Failure> {
        Ok(cfg.u64(v, key)?.map(|x| x as usize).unwrap_or(default))
    };
    let spec = SynthSpec {
        vocab_size: size(a.vocab_size, "vocab_size", d.vocab_size)?,
        dim: size(a.dim, "dim", d.dim)?,
        usages: size(a.usages, "usages", d.usages)?,
        sigma: cfg.f64(a.sigma, "sigma")?.unwrap_or(d.sigma),
        planted: size(a.planted, "planted", d.planted)?,
        theta: cfg.f64(a.theta, "theta")?.unwrap_or(d.theta),
        seed: g.seed,
    };
    spec.validate().or_config()?;
    let out = synth_stream(&spec)?;

    create_out_dir(g)?;
    let stream_path = g.out_dir.join(if g.format == Format::Jsonl { "synth.jsonl" } else { "synth.cte" });
    write_atomic(&stream_path, |sink| {
        if g.format == Format::Jsonl {
            write_stream_jsonl(&out.header, &out.blocks, sink)?;
        } else {
            write_stream(&out.header, &out.blocks, sink)?;
        }
        Ok(())
    })?;
    let gold_path = g.out_dir.join("gold.tsv");
    write_atomic(&gold_path, |sink| {
        write_gold(&out.gold, &mut *sink)?;
        sink.flush()?;
        Ok(())
    })?;
    println!("planted: {}", out.planted.join(", "));
    println!("wrote {} and {}", stream_path.display(), gold_path.display());
    Ok(())
}
