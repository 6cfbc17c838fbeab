//! `negpmi`: build a vocabulary, count cooccurrences, train PMI-variant
//! embeddings and evaluate them.
//!
//! Each stage writes a file the next stage reads, so pipelines can be resumed
//! at any boundary:
//!
//! ```text
//! negpmi vocab --corpus text.txt --out vocab.tsv
//! negpmi cooc  --corpus text.txt --vocab vocab.tsv --out m.cooc
//! negpmi train --corpus text.txt --vocab vocab.tsv --cooc m.cooc --out vectors.txt
//! negpmi eval-ws --vectors vectors.txt --dataset simlex999.txt
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use negpmi::cooccurrence::count_cooccurrences;
use negpmi::corpus::{read_text, VocabCounter};
use negpmi::evaluation::{
    eval_analogies, eval_sts, eval_word_similarity, histogram, is_syntactic_category,
    load_analogies, load_sts, load_word_pairs, HistogramSpec, SpectrumSummary, StsColumns,
    WordVectors,
};
use negpmi::factorizer::{sample_spectrum, train, TrainError};
use negpmi::storage;
use negpmi::{CoocMatrix, Corpus, PmiVariantSpec, TrainConfig, Vocabulary};

/// Exit status categories.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Category {
    Usage = 2,
    Data = 3,
    Train = 4,
}

#[derive(Debug)]
struct Failure {
    category: Category,
    error: anyhow::Error,
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        category: Category::Usage,
        error: anyhow::anyhow!(msg.into()),
    }
}

fn data<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure {
        category: Category::Data,
        error: e.into(),
    }
}

fn training(e: TrainError) -> Failure {
    let category = match e {
        TrainError::Config(_) | TrainError::MatrixMismatch { .. } => Category::Usage,
        TrainError::EmptyCorpus | TrainError::VocabMismatch { .. } => Category::Data,
        _ => Category::Train,
    };
    Failure {
        category,
        error: e.into(),
    }
}

type Result<T> = std::result::Result<T, Failure>;

#[derive(Parser, Debug)]
#[command(name = "negpmi", version, about = "Word embeddings from PMI-variant matrix factorization")]
struct Cli {
    /// Directory searched for relative input paths that do not exist in the
    /// working directory.
    #[arg(long, env = "NEGPMI_DATA_DIR", global = true)]
    data_dir: Option<PathBuf>,

    /// Also write the configuration and results as JSON lines to this file.
    #[arg(long, global = true)]
    report: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Count words and write a frequency-sorted vocabulary.
    Vocab(VocabArgs),
    /// Count (word, context) pairs into a binary matrix.
    Cooc(CoocArgs),
    /// Train word and context embeddings.
    Train(TrainArgs),
    /// Spearman correlation on a word-similarity data set.
    EvalWs(EvalWsArgs),
    /// 3CosAdd accuracy on a Google-format analogy data set.
    EvalAnalogy(EvalAnalogyArgs),
    /// Pearson correlation of bag-of-vectors cosines on an STS data set.
    EvalSts(EvalStsArgs),
    /// Histogram of clipped PMI over pairs sampled in training order.
    Histogram(HistogramArgs),
}

#[derive(Args, Debug)]
struct VocabArgs {
    /// Corpus text, one document per line.
    #[arg(long)]
    corpus: PathBuf,
    /// Drop words seen fewer times than this.
    #[arg(long, default_value_t = 5)]
    min_count: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CountArgs {
    /// Window radius.
    #[arg(long, default_value_t = TrainConfig::default().window)]
    window: usize,
    /// Use plain (word) contexts instead of (word, offset) contexts.
    #[arg(long)]
    non_positional: bool,
    /// Subsampling threshold t; pass 0 to disable.
    #[arg(long, default_value_t = TrainConfig::default().subsample.unwrap_or(0.0))]
    subsample: f64,
    #[arg(long, default_value_t = TrainConfig::default().seed)]
    seed: u64,
}

impl CountArgs {
    fn subsample(&self) -> Option<f64> {
        (self.subsample > 0.0).then_some(self.subsample)
    }
}

#[derive(Args, Debug)]
struct CoocArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    count: CountArgs,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Embedding dimension.
    #[arg(long, default_value_t = TrainConfig::default().dim)]
    dim: usize,
    /// Negative samples per center word.
    #[arg(long, default_value_t = TrainConfig::default().negatives)]
    negatives: usize,
    /// Initial learning rate, decayed linearly.
    #[arg(long, default_value_t = TrainConfig::default().lr)]
    lr: f64,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    /// Context smoothing exponent.
    #[arg(long, default_value_t = TrainConfig::default().alpha)]
    alpha: f64,
    /// Exponent of the negative sampling distribution.
    #[arg(long, default_value_t = TrainConfig::default().neg_power)]
    neg_power: f64,
    /// ppmi | cpmi:<z> | npmi | nnegpmi | lpmi:<beta>, optionally + "+pos" or "+neg".
    #[arg(long, default_value_t = TrainConfig::default().variant, value_parser = parse_variant)]
    variant: PmiVariantSpec,
    /// Worker threads; more than one trades bitwise reproducibility for speed.
    #[arg(long, default_value_t = TrainConfig::default().threads)]
    threads: usize,
    /// Force single-threaded seeded execution.
    #[arg(long)]
    deterministic: bool,
}

fn parse_variant(s: &str) -> std::result::Result<PmiVariantSpec, String> {
    s.parse().map_err(|e: negpmi::pmi::PmiError| e.to_string())
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Precounted matrix; counted from the corpus when omitted.
    #[arg(long)]
    cooc: Option<PathBuf>,
    /// Word vectors output.
    #[arg(long)]
    out: PathBuf,
    /// Also write context vectors next to the word vectors.
    #[arg(long)]
    save_contexts: bool,
    #[command(flatten)]
    count: CountArgs,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args, Debug)]
struct EvalWsArgs {
    #[arg(long)]
    vectors: PathBuf,
    /// word1<TAB>word2<TAB>score file.
    #[arg(long)]
    dataset: PathBuf,
}

#[derive(Args, Debug)]
struct EvalAnalogyArgs {
    #[arg(long)]
    vectors: PathBuf,
    /// Google analogy file.
    #[arg(long)]
    dataset: PathBuf,
}

#[derive(Args, Debug)]
struct EvalStsArgs {
    #[arg(long)]
    vectors: PathBuf,
    /// Tab-separated sentence pairs.
    #[arg(long)]
    dataset: PathBuf,
    /// Zero-based column of the gold score.
    #[arg(long, default_value_t = StsColumns::default().score)]
    score_col: usize,
    #[arg(long, default_value_t = StsColumns::default().sent_1)]
    sent1_col: usize,
    #[arg(long, default_value_t = StsColumns::default().sent_2)]
    sent2_col: usize,
}

#[derive(Args, Debug)]
struct HistogramArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    cooc: Option<PathBuf>,
    /// Number of sampled pairs.
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    /// Clip floor.
    #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
    z: f64,
    #[arg(long, default_value_t = HistogramSpec::DEFAULT_WIDTH)]
    bucket_width: f64,
    /// CSV output; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    count: CountArgs,
    /// Negative samples per center word.
    #[arg(long, default_value_t = TrainConfig::default().negatives)]
    negatives: usize,
    #[arg(long, default_value_t = TrainConfig::default().alpha)]
    alpha: f64,
    #[arg(long, default_value_t = TrainConfig::default().neg_power)]
    neg_power: f64,
}

/// Line-delimited JSON sink for `--report`.
struct Report {
    out: Option<BufWriter<File>>,
}

impl Report {
    fn open(path: Option<&Path>) -> Result<Self> {
        let out = match path {
            Some(p) => Some(BufWriter::new(
                File::create(p).map_err(|e| data(anyhow::anyhow!("{}: {e}", p.display())))?,
            )),
            None => None,
        };
        Ok(Report { out })
    }

    fn emit(&mut self, record: Value) -> Result<()> {
        if let Some(w) = &mut self.out {
            writeln!(w, "{record}").and_then(|_| w.flush()).map_err(data)?;
        }
        Ok(())
    }
}

struct Ctx {
    data_dir: Option<PathBuf>,
    report: Report,
}

impl Ctx {
    /// Resolve an input path, falling back to the data directory.
    fn input(&self, path: &Path) -> Result<PathBuf> {
        if path.exists() {
            return Ok(path.to_owned());
        }
        if let Some(dir) = &self.data_dir {
            let p = dir.join(path);
            if path.is_relative() && p.exists() {
                return Ok(p);
            }
        }
        Err(usage(format!("input file not found: {}", path.display())))
    }

    /// Print the resolved configuration and record it.
    fn echo(&mut self, command: &str, config: Vec<(&str, Value)>) -> Result<()> {
        let mut obj = serde_json::Map::new();
        for (k, v) in config {
            let shown = match &v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            println!("# {k} = {shown}");
            obj.insert(k.to_owned(), v);
        }
        self.report.emit(json!({"event": "config", "command": command, "config": obj}))
    }
}

fn load_vocab(ctx: &Ctx, path: &Path) -> Result<Vocabulary> {
    storage::load_vocab(&ctx.input(path)?).map_err(data)
}

fn load_corpus(ctx: &Ctx, path: &Path, vocab: &Vocabulary) -> Result<Corpus> {
    let text = read_text(&ctx.input(path)?).map_err(data)?;
    Ok(Corpus::from_text(&text, vocab))
}

fn check_matrix_fits(m: &CoocMatrix, vocab: &Vocabulary, window: usize, positional: bool) -> Result<()> {
    if m.window() != window || m.positional() != positional {
        return Err(usage(format!(
            "cooccurrence file has window {} positional={}, but flags ask for window {window} positional={positional}",
            m.window(),
            m.positional()
        )));
    }
    if m.n_words() != vocab.len() {
        return Err(data(anyhow::anyhow!(
            "cooccurrence file has {} words but the vocabulary has {}",
            m.n_words(),
            vocab.len()
        )));
    }
    Ok(())
}

/// Load and check a precounted matrix before any corpus work.
fn precounted(ctx: &Ctx, cooc: Option<&Path>, vocab: &Vocabulary, cfg: &TrainConfig) -> Result<Option<CoocMatrix>> {
    let Some(p) = cooc else { return Ok(None) };
    let m = storage::load_cooc(&ctx.input(p)?).map_err(data)?;
    check_matrix_fits(&m, vocab, cfg.window, cfg.positional)?;
    Ok(Some(m))
}

fn matrix_or_count(pre: Option<CoocMatrix>, corpus: &Corpus, vocab: &Vocabulary, cfg: &TrainConfig) -> Result<CoocMatrix> {
    match pre {
        Some(m) => Ok(m),
        None => count_cooccurrences(corpus, vocab, cfg.window, cfg.positional, cfg.count_subsample())
            .map_err(data),
    }
}

fn cmd_vocab(ctx: &mut Ctx, a: &VocabArgs) -> Result<()> {
    let corpus = ctx.input(&a.corpus)?;
    ctx.echo(
        "vocab",
        vec![
            ("corpus", json!(corpus.display().to_string())),
            ("min_count", json!(a.min_count)),
            ("out", json!(a.out.display().to_string())),
        ],
    )?;
    let text = read_text(&corpus).map_err(data)?;
    let vocab = VocabCounter::from_text_parallel(&text)
        .finish(a.min_count)
        .map_err(|e| usage(e.to_string()))?;
    storage::save_vocab(&vocab, &a.out).map_err(data)?;
    println!(
        "words {}  kept_tokens {}  raw_tokens {}",
        vocab.len(),
        vocab.total_tokens(),
        vocab.raw_tokens()
    );
    ctx.report.emit(json!({
        "event": "result", "command": "vocab", "words": vocab.len(),
        "kept_tokens": vocab.total_tokens(), "raw_tokens": vocab.raw_tokens(),
    }))
}

fn cmd_cooc(ctx: &mut Ctx, a: &CoocArgs) -> Result<()> {
    let c = &a.count;
    ctx.echo(
        "cooc",
        vec![
            ("corpus", json!(a.corpus.display().to_string())),
            ("vocab", json!(a.vocab.display().to_string())),
            ("window", json!(c.window)),
            ("positional", json!(!c.non_positional)),
            ("subsample", json!(c.subsample())),
            ("seed", json!(c.seed)),
            ("out", json!(a.out.display().to_string())),
        ],
    )?;
    let vocab = load_vocab(ctx, &a.vocab)?;
    let corpus = load_corpus(ctx, &a.corpus, &vocab)?;
    let cfg = TrainConfig {
        window: c.window,
        positional: !c.non_positional,
        subsample: c.subsample(),
        seed: c.seed,
        ..TrainConfig::default()
    };
    cfg.validate().map_err(training)?;
    let m = count_cooccurrences(&corpus, &vocab, cfg.window, cfg.positional, cfg.count_subsample())
        .map_err(|e| usage(e.to_string()))?;
    storage::save_cooc(&m, &a.out).map_err(data)?;
    println!(
        "words {}  contexts {}  nonzero {}  total {}",
        m.n_words(),
        m.n_contexts(),
        m.nnz(),
        m.grand_total()
    );
    ctx.report.emit(json!({
        "event": "result", "command": "cooc", "words": m.n_words(), "contexts": m.n_contexts(),
        "nonzero": m.nnz(), "total": m.grand_total(),
    }))
}

fn train_config(c: &CountArgs, m: &ModelArgs) -> Result<TrainConfig> {
    if m.deterministic && m.threads > 1 {
        return Err(usage("--deterministic conflicts with --threads > 1"));
    }
    let variant = m
        .variant
        .with_alpha(m.alpha)
        .map_err(|e| usage(e.to_string()))?;
    let cfg = TrainConfig {
        window: c.window,
        positional: !c.non_positional,
        dim: m.dim,
        negatives: m.negatives,
        lr: m.lr,
        epochs: m.epochs,
        subsample: c.subsample(),
        alpha: m.alpha,
        neg_power: m.neg_power,
        variant,
        seed: c.seed,
        threads: if m.deterministic { 1 } else { m.threads },
    };
    cfg.validate().map_err(training)?;
    Ok(cfg)
}

fn config_fields(cfg: &TrainConfig) -> Vec<(&'static str, Value)> {
    vec![
        ("window", json!(cfg.window)),
        ("positional", json!(cfg.positional)),
        ("dim", json!(cfg.dim)),
        ("negatives", json!(cfg.negatives)),
        ("lr", json!(cfg.lr)),
        ("epochs", json!(cfg.epochs)),
        ("subsample", json!(cfg.subsample)),
        ("alpha", json!(cfg.alpha)),
        ("neg_power", json!(cfg.neg_power)),
        ("variant", json!(cfg.variant.to_string())),
        ("seed", json!(cfg.seed)),
        ("threads", json!(cfg.threads)),
    ]
}

fn cmd_train(ctx: &mut Ctx, a: &TrainArgs) -> Result<()> {
    let cfg = train_config(&a.count, &a.model)?;
    let mut fields = vec![
        ("corpus", json!(a.corpus.display().to_string())),
        ("vocab", json!(a.vocab.display().to_string())),
        ("cooc", json!(a.cooc.as_ref().map(|p| p.display().to_string()))),
        ("out", json!(a.out.display().to_string())),
    ];
    fields.extend(config_fields(&cfg));
    ctx.echo("train", fields)?;

    let vocab = load_vocab(ctx, &a.vocab)?;
    let pre = precounted(ctx, a.cooc.as_deref(), &vocab, &cfg)?;
    let corpus = load_corpus(ctx, &a.corpus, &vocab)?;
    let m = matrix_or_count(pre, &corpus, &vocab, &cfg)?;
    let started = Instant::now();
    let (emb, report) = train(&corpus, &vocab, &m, &cfg).map_err(training)?;
    for line in report.log_lines() {
        println!("{line}");
    }
    for e in &report.epochs {
        ctx.report.emit(json!({
            "event": "epoch", "epoch": e.epoch, "mean_loss": e.mean_loss,
            "executed": e.executed, "skipped": e.skipped,
            "executed_positive": e.executed_positive,
            "executed_nonpositive": e.executed_nonpositive,
            "undefined": e.undefined, "wall_s": e.wall_seconds,
        }))?;
    }
    storage::save_embeddings(&emb, &vocab, &a.out).map_err(data)?;
    if a.save_contexts {
        storage::save_context_embeddings(&emb, &storage::context_path(&a.out)).map_err(data)?;
    }
    println!(
        "steps_executed {}  steps_skipped {}  seconds {:.1}",
        report.steps_executed(),
        report.steps_skipped(),
        started.elapsed().as_secs_f64()
    );
    ctx.report.emit(json!({
        "event": "result", "command": "train",
        "steps_executed": report.steps_executed(), "steps_skipped": report.steps_skipped(),
        "final_mean_loss": report.mean_losses().last(),
    }))
}

fn load_vectors(ctx: &Ctx, path: &Path) -> Result<(negpmi::Embeddings, Vocabulary)> {
    storage::load_embeddings(&ctx.input(path)?).map_err(data)
}

fn cmd_eval_ws(ctx: &mut Ctx, a: &EvalWsArgs) -> Result<()> {
    let dataset = ctx.input(&a.dataset)?;
    ctx.echo(
        "eval-ws",
        vec![
            ("vectors", json!(a.vectors.display().to_string())),
            ("dataset", json!(dataset.display().to_string())),
        ],
    )?;
    let pairs = load_word_pairs(&dataset).map_err(data)?;
    let (emb, vocab) = load_vectors(ctx, &a.vectors)?;
    let r = eval_word_similarity(WordVectors::new(&emb, &vocab), &pairs).map_err(data)?;
    println!("spearman {:.4}  covered {}/{}  coverage {:.3}", r.spearman, r.covered, r.total, r.coverage());
    ctx.report.emit(json!({
        "event": "result", "command": "eval-ws", "spearman": r.spearman,
        "covered": r.covered, "total": r.total,
    }))
}

fn cmd_eval_analogy(ctx: &mut Ctx, a: &EvalAnalogyArgs) -> Result<()> {
    let dataset = ctx.input(&a.dataset)?;
    ctx.echo(
        "eval-analogy",
        vec![
            ("vectors", json!(a.vectors.display().to_string())),
            ("dataset", json!(dataset.display().to_string())),
        ],
    )?;
    let questions = load_analogies(&dataset).map_err(data)?;
    let (emb, vocab) = load_vectors(ctx, &a.vectors)?;
    let r = eval_analogies(WordVectors::new(&emb, &vocab), &questions).map_err(data)?;
    println!("{:<32} {:>8} {:>10} {:>7}", "category", "correct", "answerable", "acc%");
    for (name, s) in &r.per_category {
        println!("{name:<32} {:>8} {:>10} {:>7.2}", s.correct, s.answerable, 100.0 * s.accuracy());
    }
    let sem = r.subset(|c| !is_syntactic_category(c));
    let syn = r.subset(is_syntactic_category);
    println!("semantic   {:>7.2}%  ({}/{})", 100.0 * sem.accuracy(), sem.correct, sem.answerable);
    println!("syntactic  {:>7.2}%  ({}/{})", 100.0 * syn.accuracy(), syn.correct, syn.answerable);
    println!(
        "overall    {:>7.2}%  ({}/{}, {} unanswerable)",
        100.0 * r.accuracy,
        r.correct,
        r.answerable,
        r.unanswerable
    );
    ctx.report.emit(json!({
        "event": "result", "command": "eval-analogy", "accuracy": r.accuracy,
        "semantic_accuracy": sem.accuracy(), "syntactic_accuracy": syn.accuracy(),
        "answerable": r.answerable, "unanswerable": r.unanswerable,
    }))
}

fn cmd_eval_sts(ctx: &mut Ctx, a: &EvalStsArgs) -> Result<()> {
    let dataset = ctx.input(&a.dataset)?;
    let cols = StsColumns {
        score: a.score_col,
        sent_1: a.sent1_col,
        sent_2: a.sent2_col,
    };
    ctx.echo(
        "eval-sts",
        vec![
            ("vectors", json!(a.vectors.display().to_string())),
            ("dataset", json!(dataset.display().to_string())),
            ("columns", json!([cols.score, cols.sent_1, cols.sent_2])),
        ],
    )?;
    let pairs = load_sts(&dataset, cols).map_err(data)?;
    let (emb, vocab) = load_vectors(ctx, &a.vectors)?;
    let r = eval_sts(WordVectors::new(&emb, &vocab), &pairs).map_err(data)?;
    println!("pearson {:.4}  covered {}/{}  coverage {:.3}", r.pearson, r.covered, r.total, r.coverage());
    ctx.report.emit(json!({
        "event": "result", "command": "eval-sts", "pearson": r.pearson,
        "covered": r.covered, "total": r.total,
    }))
}

fn cmd_histogram(ctx: &mut Ctx, a: &HistogramArgs) -> Result<()> {
    if !(a.z.is_finite() && a.z <= 0.0) {
        return Err(usage(format!("--z must be finite and <= 0, got {}", a.z)));
    }
    if !(a.bucket_width > 0.0 && a.bucket_width.is_finite()) {
        return Err(usage(format!("--bucket-width must be positive, got {}", a.bucket_width)));
    }
    let cfg = TrainConfig {
        window: a.count.window,
        positional: !a.count.non_positional,
        subsample: a.count.subsample(),
        seed: a.count.seed,
        negatives: a.negatives,
        alpha: a.alpha,
        neg_power: a.neg_power,
        ..TrainConfig::default()
    };
    cfg.validate().map_err(training)?;
    let mut fields = vec![
        ("corpus", json!(a.corpus.display().to_string())),
        ("vocab", json!(a.vocab.display().to_string())),
        ("cooc", json!(a.cooc.as_ref().map(|p| p.display().to_string()))),
        ("n", json!(a.n)),
        ("z", json!(a.z)),
        ("bucket_width", json!(a.bucket_width)),
    ];
    fields.extend(
        config_fields(&cfg)
            .into_iter()
            .filter(|(k, _)| ["window", "positional", "negatives", "subsample", "alpha", "neg_power", "seed"].contains(k)),
    );
    ctx.echo("histogram", fields)?;

    let vocab = load_vocab(ctx, &a.vocab)?;
    let pre = precounted(ctx, a.cooc.as_deref(), &vocab, &cfg)?;
    let corpus = load_corpus(ctx, &a.corpus, &vocab)?;
    let m = matrix_or_count(pre, &corpus, &vocab, &cfg)?;
    let sample = sample_spectrum(&corpus, &vocab, &m, &cfg, a.n, a.z).map_err(training)?;
    let values: Vec<f64> = sample.pairs.iter().map(|p| p.target).collect();
    let spec = HistogramSpec::fit(&values, a.bucket_width).map_err(data)?;
    let hist = histogram(&values, spec).map_err(data)?;
    let summary = SpectrumSummary::from_values(&values, a.z);
    let mut csv = hist.to_csv();
    csv.push_str(&summary.summary_line(a.z));
    csv.push('\n');
    match &a.out {
        Some(p) => fs::write(p, &csv).map_err(|e| data(anyhow::anyhow!("{}: {e}", p.display())))?,
        None => print!("{csv}"),
    }
    if sample.wrapped {
        println!("# corpus exhausted; sampling continued into further epochs");
    }
    println!("{}", summary.summary_line(a.z));
    ctx.report.emit(json!({
        "event": "result", "command": "histogram", "n": values.len(), "wrapped": sample.wrapped,
        "at_floor": summary.at_floor, "floor_to_zero": summary.floor_to_zero,
        "minus_two_to_zero": summary.minus_two_to_zero, "positive": summary.positive,
    }))
}

fn run(cli: Cli) -> Result<()> {
    let mut ctx = Ctx {
        data_dir: cli.data_dir,
        report: Report::open(cli.report.as_deref())?,
    };
    match &cli.command {
        Command::Vocab(a) => cmd_vocab(&mut ctx, a),
        Command::Cooc(a) => cmd_cooc(&mut ctx, a),
        Command::Train(a) => cmd_train(&mut ctx, a),
        Command::EvalWs(a) => cmd_eval_ws(&mut ctx, a),
        Command::EvalAnalogy(a) => cmd_eval_analogy(&mut ctx, a),
        Command::EvalSts(a) => cmd_eval_sts(&mut ctx, a),
        Command::Histogram(a) => cmd_histogram(&mut ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let label = match f.category {
                Category::Usage => "usage error",
                Category::Data => "data error",
                Category::Train => "training error",
            };
            eprintln!("negpmi: {label}: {:#}", f.error);
            ExitCode::from(f.category as u8)
        }
    }
}
