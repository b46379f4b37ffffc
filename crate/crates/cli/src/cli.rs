//! Command-line entry points. Every subcommand reads standard input and
//! writes standard output unless file flags are given.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use agqr_core::augment::{augment_corpus, AugmentConfig, AugmentRule};
use agqr_core::checkpoint::{load_checkpoint, save_checkpoint};
use agqr_core::classifier::{fit, EvalPoint, TrainConfig};
use agqr_core::eval::{classification_metrics, compare_frameworks, render_framework_table};
use agqr_core::lexical::mask_text;
use agqr_core::synthetic::SyntheticCorpus;
use agqr_core::types::{parse_dataset, write_dataset};
use agqr_core::{
    AmbiguityDetector, AmbiguityLabel, ClassifierModel, DatasetRecord, Embedder, HashingEmbedder, MockRewriter,
    Pipeline, Query, QueryClassifier, Rewriter,
};
use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::{load_lexicons, ServiceConfig};
use crate::error::CliError;
use crate::server::ClassifyResponse;

#[derive(Debug, Parser)]
#[command(name = "agqr", version, about = "Ambiguity detection and ambiguity-guided query rewriting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a classifier checkpoint from a labeled dataset.
    Train(TrainArgs),
    /// Classify queries (plain lines or JSON objects with a "query" field).
    Classify(ClassifyArgs),
    /// Replace entity values with ENTITY, one query per line.
    Mask(MaskArgs),
    /// Generate ambiguous queries from the clear records of a dataset.
    Augment(AugmentArgs),
    /// Score a checkpoint against a labeled dataset.
    Eval(EvalArgs),
    /// Compare no-rewrite, always-rewrite and guided routing against golden rewrites.
    Compare(CompareArgs),
    /// Write a synthetic labeled corpus with golden rewrites.
    Synth(SynthArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct Io {
    /// Input file; standard input when omitted or "-".
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    /// Output file; standard output when omitted or "-".
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Lexicons {
    /// Entity-type word list (one entry per line, `#` comments).
    #[arg(long)]
    pub entity_types: Option<PathBuf>,
    /// Common hyphenated words exempt from masking.
    #[arg(long)]
    pub common_words: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub io: Io,
    /// Validation dataset; otherwise a stratified split of the input.
    #[arg(long)]
    pub validation: Option<PathBuf>,
    #[arg(long, default_value_t = 0.15)]
    pub val_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2e-5)]
    pub lr: f64,
    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 3)]
    pub epochs: usize,
    #[arg(long, default_value_t = 50)]
    pub eval_every: usize,
    #[arg(long, default_value_t = 0.1)]
    pub dropout: f64,
    #[arg(long, default_value_t = 384)]
    pub hidden: usize,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Hashing embedder dimension.
    #[arg(long, default_value_t = 768)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub embed_seed: u64,
    /// Writes the validation history and split sizes as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub io: Io,
    #[arg(long, required = true)]
    pub checkpoint: PathBuf,
    /// Service config supplying embedder and lexicons.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub lexicons: Lexicons,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    #[command(flatten)]
    pub io: Io,
    #[arg(long)]
    pub common_words: Option<PathBuf>,
    /// Emit the masked text with its spans as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[command(flatten)]
    pub io: Io,
    /// Per-rule counts; defaults to `<output>.report.json` when writing a file.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub repetitions: usize,
    /// Comma-separated subset of omit_details, add_referential, vague_statement, remove_entity_type.
    #[arg(long, value_delimiter = ',')]
    pub rules: Vec<String>,
    /// Write only generated records, not the input.
    #[arg(long)]
    pub only_generated: bool,
    #[command(flatten)]
    pub lexicons: Lexicons,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub io: Io,
    #[arg(long, required = true)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub lexicons: Lexicons,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub io: Io,
    #[arg(long, required = true)]
    pub checkpoint: PathBuf,
    /// Service config supplying embedder, lexicons and rewriter.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Mock rewrite table (JSON object query → rewrite); overrides the configured rewriter.
    #[arg(long)]
    pub rewrites: Option<PathBuf>,
    /// Machine-readable report; the table always goes to the output.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub clear: usize,
    #[arg(long, default_value_t = 500)]
    pub ambiguous: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Overrides the configured bind address.
    #[arg(long)]
    pub bind: Option<String>,
}

fn is_stdio(p: &Option<PathBuf>) -> Option<&Path> {
    p.as_deref().filter(|p| p.as_os_str() != "-")
}

fn open_input<'a>(path: &Option<PathBuf>, stdin: &'a mut dyn BufRead) -> Result<Box<dyn BufRead + 'a>, CliError> {
    Ok(match is_stdio(path) {
        Some(p) => Box::new(BufReader::new(File::open(p).map_err(|e| CliError::io(p, e))?)),
        None => Box::new(stdin),
    })
}

fn open_output<'a>(path: &Option<PathBuf>, stdout: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>, CliError> {
    Ok(match is_stdio(path) {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::io(p, e))?)),
        None => Box::new(stdout),
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn write_json_line<W: Write + ?Sized, T: Serialize>(w: &mut W, value: &T) -> Result<(), CliError> {
    let line = serde_json::to_string(value).map_err(CliError::runtime)?;
    writeln!(w, "{line}").map_err(CliError::runtime)
}

fn read_dataset(path: &Option<PathBuf>, stdin: &mut dyn BufRead) -> Result<Vec<DatasetRecord>, CliError> {
    parse_dataset(open_input(path, stdin)?).map_err(CliError::input)
}

fn load_model(path: &Path) -> Result<ClassifierModel, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    load_checkpoint(&bytes).map_err(|e| CliError::config(path, e))
}

/// Checkpoint plus embedder and lexicons from config or flags.
fn load_detector(checkpoint: &Path, config: &Option<PathBuf>, lexicons: Option<&Lexicons>) -> Result<AmbiguityDetector, CliError> {
    let mut cfg = match config {
        Some(p) => ServiceConfig::load(p)?,
        None => ServiceConfig::default(),
    };
    if let Some(l) = lexicons {
        if l.entity_types.is_some() {
            cfg.entity_types = l.entity_types.clone();
        }
        if l.common_words.is_some() {
            cfg.common_words = l.common_words.clone();
        }
    }
    let mut model = load_model(checkpoint)?;
    if let Some(t) = cfg.threshold {
        model.threshold = t;
    }
    let embedder = cfg.embedder_for(&model.embedder)?;
    let (types, common) = cfg.lexicons()?;
    AmbiguityDetector::new(Arc::new(model), embedder, types, common).map_err(|e| CliError::config(checkpoint, e))
}

/// Per-class shuffle with `seed`, holding out `fraction` of each class.
pub fn stratified_split(records: &[DatasetRecord], fraction: f64, seed: u64) -> (Vec<DatasetRecord>, Vec<DatasetRecord>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for label in [AmbiguityLabel::Clear, AmbiguityLabel::Ambiguous] {
        let mut class: Vec<_> = records.iter().filter(|r| r.label == label).cloned().collect();
        class.shuffle(&mut rng);
        let n_val = (class.len() as f64 * fraction).round() as usize;
        train.extend(class.split_off(n_val));
        val.extend(class);
    }
    (train, val)
}

#[derive(Serialize)]
struct TrainReport<'a> {
    model_version: &'a str,
    train_size: usize,
    validation_size: usize,
    total_steps: usize,
    best_step: usize,
    evaluations: &'a [EvalPoint],
}

fn train(args: TrainArgs, stdin: &mut dyn BufRead, stdout: &mut dyn Write) -> Result<(), CliError> {
    if !(0.0..1.0).contains(&args.val_fraction) {
        return Err(CliError::Usage(format!("--val-fraction must be in [0, 1), got {}", args.val_fraction)));
    }
    if args.dim == 0 {
        return Err(CliError::Usage("--dim must be positive".into()));
    }
    let records = read_dataset(&args.io.input, stdin)?;
    let (train_set, val_set) = match &args.validation {
        Some(p) => (records, parse_dataset(BufReader::new(File::open(p).map_err(|e| CliError::io(p, e))?)).map_err(CliError::input)?),
        None => stratified_split(&records, args.val_fraction, args.seed),
    };
    let cfg = TrainConfig {
        learning_rate: args.lr,
        batch_size: args.batch_size,
        epochs: args.epochs,
        eval_every: args.eval_every,
        seed: args.seed,
        dropout_p: args.dropout,
        hidden: args.hidden,
        threshold: args.threshold,
        ..TrainConfig::default()
    };
    let embedder = HashingEmbedder::new(args.dim, args.embed_seed);
    let out = fit(&train_set, &val_set, &cfg, &embedder).map_err(CliError::input)?;
    let best = out.best();
    tracing::info!(step = best.step, f1 = best.f1, recall = best.recall, "selected checkpoint");
    if let Some(p) = &args.report {
        let report = TrainReport {
            model_version: &out.model.version,
            train_size: train_set.len(),
            validation_size: val_set.len(),
            total_steps: out.total_steps,
            best_step: out.best_step,
            evaluations: &out.evaluations,
        };
        write_file(p, &serde_json::to_vec_pretty(&report).map_err(CliError::runtime)?)?;
    }
    let mut w = open_output(&args.io.output, stdout)?;
    w.write_all(&save_checkpoint(&out.model)).map_err(CliError::runtime)?;
    w.flush().map_err(CliError::runtime)
}

/// A query line is either plain text or a JSON object with a `query` field.
fn parse_query_line(line: &str, line_no: usize) -> Result<Option<Query>, CliError> {
    let trimmed = line.trim();
    if trimmed.is_empty() {
        return Ok(None);
    }
    let text = if trimmed.starts_with('{') {
        let v: serde_json::Value =
            serde_json::from_str(trimmed).map_err(|e| CliError::Input(format!("line {line_no}: {e}")))?;
        v.get("query")
            .and_then(|q| q.as_str())
            .ok_or_else(|| CliError::Input(format!("line {line_no}: missing string field \"query\"")))?
            .to_string()
    } else {
        trimmed.to_string()
    };
    Query::new(text).map(Some).map_err(|e| CliError::Input(format!("line {line_no}: {e}")))
}

#[derive(Serialize)]
struct ClassifyLine {
    query: Query,
    #[serde(flatten)]
    result: ClassifyResponse,
}

fn classify(args: ClassifyArgs, stdin: &mut dyn BufRead, stdout: &mut dyn Write) -> Result<(), CliError> {
    let detector = load_detector(&args.checkpoint, &args.config, Some(&args.lexicons))?;
    let input = open_input(&args.io.input, stdin)?;
    let mut w = open_output(&args.io.output, stdout)?;
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(CliError::runtime)?;
        let Some(query) = parse_query_line(&line, i + 1)? else { continue };
        let result = detector.classify_detailed(&query).map_err(CliError::runtime)?;
        write_json_line(&mut w, &ClassifyLine { query, result: result.into() })?;
    }
    w.flush().map_err(CliError::runtime)
}

fn mask(args: MaskArgs, stdin: &mut dyn BufRead, stdout: &mut dyn Write) -> Result<(), CliError> {
    let (_, common) = load_lexicons(None, args.common_words.as_deref())?;
    let input = open_input(&args.io.input, stdin)?;
    let mut w = open_output(&args.io.output, stdout)?;
    for line in input.lines() {
        let line = line.map_err(CliError::runtime)?;
        let masked = mask_text(&line, &common);
        if args.json {
            write_json_line(&mut w, &masked)?;
        } else {
            writeln!(w, "{}", masked.text).map_err(CliError::runtime)?;
        }
    }
    w.flush().map_err(CliError::runtime)
}

fn parse_rule(name: &str) -> Result<AugmentRule, CliError> {
    serde_json::from_value(json!(name.trim())).map_err(|_| CliError::Usage(format!("unknown rule {name:?}")))
}

#[derive(Serialize)]
struct AugmentSummary {
    seed: u64,
    input_records: usize,
    generated: usize,
    per_rule: BTreeMap<&'static str, usize>,
}

fn augment(args: AugmentArgs, stdin: &mut dyn BufRead, stdout: &mut dyn Write) -> Result<(), CliError> {
    let records = read_dataset(&args.io.input, stdin)?;
    let mut cfg = AugmentConfig::new(args.seed);
    cfg.repetitions = args.repetitions;
    if !args.rules.is_empty() {
        let rules = args.rules.iter().map(|r| parse_rule(r)).collect::<Result<Vec<_>, _>>()?;
        cfg = cfg.with_rules(&rules);
    }
    let (types, common) = load_lexicons(args.lexicons.entity_types.as_deref(), args.lexicons.common_words.as_deref())?;
    cfg.entity_types = types;
    cfg.common_words = common;

    let out = augment_corpus(&records, &cfg);
    let summary = AugmentSummary {
        seed: args.seed,
        input_records: records.len(),
        generated: out.records.len(),
        per_rule: out.counts(),
    };
    let report_path = args.report.clone().or_else(|| {
        is_stdio(&args.io.output).map(|p| {
            let mut s = p.as_os_str().to_owned();
            s.push(".report.json");
            PathBuf::from(s)
        })
    });
    if let Some(p) = report_path {
        let body = json!({ "summary": summary, "records": out.reports });
        write_file(&p, &serde_json::to_vec_pretty(&body).map_err(CliError::runtime)?)?;
    }
    let mut w = open_output(&args.io.output, stdout)?;
    if !args.only_generated {
        write_dataset(&mut w, &records).map_err(CliError::runtime)?;
    }
    write_dataset(&mut w, &out.records).map_err(CliError::runtime)?;
    w.flush().map_err(CliError::runtime)
}

fn eval(args: EvalArgs, stdin: &mut dyn BufRead, stdout: &mut dyn Write) -> Result<(), CliError> {
    let detector = load_detector(&args.checkpoint, &args.config, Some(&args.lexicons))?;
    let records = read_dataset(&args.io.input, stdin)?;
    let preds = records
        .iter()
        .map(|r| detector.classify(&r.query).map(|v| v.label))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::runtime)?;
    let gold: Vec<_> = records.iter().map(|r| r.label).collect();
    let report = classification_metrics(&preds, &gold).map_err(CliError::input)?;
    let mut w = open_output(&args.io.output, stdout)?;
    write_json_line(&mut w, &report)?;
    w.flush().map_err(CliError::runtime)
}

fn compare(args: CompareArgs, stdin: &mut dyn BufRead, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = match &args.config {
        Some(p) => ServiceConfig::load(p)?,
        None => ServiceConfig::default(),
    };
    let detector = load_detector(&args.checkpoint, &args.config, None)?;
    let embedder: Arc<dyn Embedder> = detector.embedder().clone();
    let rewriter: Arc<dyn Rewriter> = match &args.rewrites {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            Arc::new(MockRewriter::from_json(&text).map_err(|e| CliError::config(p, e))?)
        }
        None => cfg.rewriter.build()?,
    };
    let classifier: Arc<dyn QueryClassifier> = Arc::new(detector);
    let pipeline = Pipeline::new(Some(classifier), rewriter).with_history_window(cfg.history_window);
    let records = read_dataset(&args.io.input, stdin)?;
    let reports = compare_frameworks(&records, &pipeline, embedder.as_ref()).map_err(CliError::input)?;
    if let Some(p) = &args.report {
        write_file(p, &serde_json::to_vec_pretty(&reports).map_err(CliError::runtime)?)?;
    }
    let mut w = open_output(&args.io.output, stdout)?;
    w.write_all(render_framework_table(&reports).as_bytes()).map_err(CliError::runtime)?;
    w.flush().map_err(CliError::runtime)
}

fn synth(args: SynthArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let corpus = SyntheticCorpus::generate(args.seed, args.clear, args.ambiguous);
    let mut w = open_output(&args.output, stdout)?;
    write_dataset(&mut w, &corpus.golden_fixture()).map_err(CliError::runtime)?;
    w.flush().map_err(CliError::runtime)
}

fn serve(args: ServeArgs) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(p) => ServiceConfig::load(p)?,
        None => ServiceConfig::default(),
    };
    if args.checkpoint.is_some() {
        cfg.checkpoint = args.checkpoint;
    }
    if let Some(b) = args.bind {
        cfg.bind = b;
    }
    if cfg.checkpoint.is_none() {
        return Err(CliError::Usage("serve needs a checkpoint (--checkpoint or config)".into()));
    }
    let rt = tokio::runtime::Runtime::new().map_err(CliError::runtime)?;
    rt.block_on(crate::server::serve(cfg))
}

pub fn run(cli: Cli, stdin: &mut dyn BufRead, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => train(a, stdin, stdout),
        Command::Classify(a) => classify(a, stdin, stdout),
        Command::Mask(a) => mask(a, stdin, stdout),
        Command::Augment(a) => augment(a, stdin, stdout),
        Command::Eval(a) => eval(a, stdin, stdout),
        Command::Compare(a) => compare(a, stdin, stdout),
        Command::Synth(a) => synth(a, stdout),
        Command::Serve(a) => serve(a),
    }
}
