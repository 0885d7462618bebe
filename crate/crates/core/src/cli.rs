//! The `repmot` command line.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::analysis::{
    most_populated_code, render_table, run_mask_eval, topic_report, word_cloud_svg, DistanceMetric, MaskEvalReport,
    MaskMethod, TestPairing, TopicMode, TopicReport,
};
use crate::attribution::{AttributionConfig, AttributionReport, BaselineMode};
use crate::config::RunConfig;
use crate::corpus::{load_corpus, load_qrels, Corpus, TokenSeq};
use crate::error::Error;
use crate::quantizer::{quantize_corpus, QuantIndex};
use crate::retrieval::{evaluate, retrieve, retrieve_asymmetric, to_trec_run, RunList};
use crate::synthetic::generate;
use crate::trainer::loss_csv;

type Model = crate::model::Model<f64>;

#[derive(Debug, Parser)]
#[command(name = "repmot", version, about = "Product-quantized dual encoder with codeword attribution")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write it with its loss history.
    Train(TrainArgs),
    /// Encode and quantize a corpus into a code index.
    Quantize(QuantizeArgs),
    /// Per-token, per-sub-vector attributions as JSON lines.
    Attribute(AttributeArgs),
    /// Masking evaluation over all keep-set methods.
    MaskEval(MaskEvalArgs),
    /// Rank a corpus for a query set and optionally score the run.
    Retrieve(RetrieveArgs),
    /// Top words of the documents assigned to one codeword.
    Inspect(InspectArgs),
    /// Render a topic report as an SVG word cloud.
    Wordcloud(WordcloudArgs),
    /// Write a synthetic topical corpus with queries and qrels.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    /// Model file to write (default: <output>/model.bin).
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub warmup_epochs: Option<usize>,
    #[arg(long)]
    pub joint_epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub num_subvectors: Option<usize>,
    #[arg(long)]
    pub num_centroids: Option<usize>,
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Capacity-constrained assignment over the whole corpus.
    #[arg(long)]
    pub balanced: bool,
}

#[derive(Debug, Args)]
pub struct AttributeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Document ids to attribute (default: all).
    #[arg(long = "doc", value_delimiter = ',')]
    pub docs: Vec<String>,
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MaskEvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// One or more model files; each becomes a table column.
    #[arg(long = "model", value_delimiter = ',')]
    pub models: Vec<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Comma-separated method names.
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    #[arg(long, value_enum)]
    pub pairing: Option<PairingArg>,
    /// Include the full distance tensor in the JSON report.
    #[arg(long)]
    pub include_tensor: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Euclidean,
    Squared,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PairingArg {
    PerEntry,
    PerDocument,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Score continuous query embeddings against document codes.
    #[arg(long)]
    pub asymmetric: bool,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Code index from `quantize` (default: nearest-centroid codes).
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Pool (0-based).
    #[arg(long)]
    pub pool: usize,
    /// Code within the pool (default: the most populated one).
    #[arg(long)]
    pub code: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub top_n: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Frequency)]
    pub mode: ModeArg,
    /// Also write an SVG word cloud.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Frequency,
    Attribution,
}

#[derive(Debug, Args)]
pub struct WordcloudArgs {
    /// Topic report JSON written by `inspect`.
    pub report: PathBuf,
    /// SVG file to write.
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 600.0)]
    pub width: f64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub num_docs: Option<usize>,
    #[arg(long)]
    pub num_queries: Option<usize>,
}

/// A failed command: exit code and message for standard error.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_)
            | Error::UnknownDocument(_)
            | Error::OutOfRange(_)
            | Error::MissingContext { .. }
            | Error::UnlinkedQueries(_) => 2,
            _ => 1,
        };
        Self { code, message: e.to_string() }
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

struct Ctx {
    cfg: RunConfig,
    output: PathBuf,
}

impl Ctx {
    fn new(common: &Common) -> CliResult<Self> {
        let mut cfg = match &common.config {
            Some(p) => {
                require(p, "config file")?;
                RunConfig::load(p).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if common.seed.is_some() {
            cfg.seed = common.seed;
        }
        let output = common.output.clone().or_else(|| cfg.paths.output.clone()).unwrap_or_else(|| PathBuf::from("."));
        cfg.paths.output = Some(output.clone());
        Ok(Self { cfg, output })
    }

    fn finish_config(&mut self) -> CliResult {
        self.cfg.resolve_seed();
        self.cfg.validate()?;
        Ok(())
    }

    fn path(&self, flag: &Option<PathBuf>, from_cfg: &Option<PathBuf>, what: &str) -> CliResult<PathBuf> {
        let p = flag
            .clone()
            .or_else(|| from_cfg.clone())
            .ok_or_else(|| CliError::usage(format!("no {what} path given (flag or [paths] entry)")))?;
        require(&p, what)?;
        Ok(p)
    }

    fn write(&self, name: &str, content: &str) -> CliResult<PathBuf> {
        fs::create_dir_all(&self.output).map_err(|e| Error::io(&self.output, e))?;
        let path = self.output.join(name);
        fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    fn echo_config(&self) -> CliResult {
        self.write("effective_config.toml", &self.cfg.to_toml()?)?;
        Ok(())
    }
}

fn require(path: &Path, what: &str) -> CliResult {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::usage(format!("{what} not found: {}", path.display())))
    }
}

fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> CliResult<R> + Send) -> CliResult<R> {
    match threads {
        Some(0) => Err(CliError::usage("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError { code: 1, message: e.to_string() })?
            .install(f),
        None => f(),
    }
}

fn load_model(path: &Path) -> CliResult<Model> {
    Ok(Model::load(path)?)
}

fn tokenize_corpus(model: &Model, corpus: &Corpus) -> CliResult<(Vec<String>, Vec<TokenSeq>)> {
    let ids = corpus.iter().map(|d| d.id.clone()).collect();
    Ok((ids, corpus.tokenize(&model.vocab)?))
}

fn attribution_config(cfg: &RunConfig, model: &Model) -> AttributionConfig {
    let keep: BTreeSet<u32> = cfg.attribution.keep_words.iter().filter_map(|w| model.vocab.id(w)).collect();
    AttributionConfig {
        steps: cfg.attribution.steps,
        baseline: if keep.is_empty() { BaselineMode::AllUnk } else { BaselineMode::KeepTokens(keep) },
    }
}

fn json<T: serde::Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Serialize(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Train(a) => {
            let t = a.common.threads;
            with_threads(t, || cmd_train(a))
        }
        Command::Quantize(a) => {
            let t = a.common.threads;
            with_threads(t, || cmd_quantize(a))
        }
        Command::Attribute(a) => {
            let t = a.common.threads;
            with_threads(t, || cmd_attribute(a))
        }
        Command::MaskEval(a) => {
            let t = a.common.threads;
            with_threads(t, || cmd_mask_eval(a))
        }
        Command::Retrieve(a) => {
            let t = a.common.threads;
            with_threads(t, || cmd_retrieve(a))
        }
        Command::Inspect(a) => {
            let t = a.common.threads;
            with_threads(t, || cmd_inspect(a))
        }
        Command::Wordcloud(a) => cmd_wordcloud(a),
        Command::Synth(a) => {
            let t = a.common.threads;
            with_threads(t, || cmd_synth(a))
        }
    }
}

fn cmd_train(a: TrainArgs) -> CliResult {
    let mut ctx = Ctx::new(&a.common)?;
    let c = &mut ctx.cfg;
    c.train.lambda = a.lambda.unwrap_or(c.train.lambda);
    c.train.warmup_epochs = a.warmup_epochs.unwrap_or(c.train.warmup_epochs);
    c.train.joint_epochs = a.joint_epochs.unwrap_or(c.train.joint_epochs);
    c.train.batch_size = a.batch_size.unwrap_or(c.train.batch_size);
    c.model.num_subvectors = a.num_subvectors.unwrap_or(c.model.num_subvectors);
    c.model.num_centroids = a.num_centroids.unwrap_or(c.model.num_centroids);
    ctx.finish_config()?;
    let corpus_path = ctx.path(&a.corpus, &ctx.cfg.paths.corpus, "corpus")?;
    let queries_path = ctx.path(&a.queries, &ctx.cfg.paths.queries, "queries")?;
    let qrels_path = ctx.path(&a.qrels, &ctx.cfg.paths.qrels, "qrels")?;
    let model_path = a.model.clone().or_else(|| ctx.cfg.paths.model.clone()).unwrap_or_else(|| ctx.output.join("model.bin"));
    ctx.cfg.paths.corpus = Some(corpus_path.clone());
    ctx.cfg.paths.queries = Some(queries_path.clone());
    ctx.cfg.paths.qrels = Some(qrels_path.clone());
    ctx.cfg.paths.model = Some(model_path.clone());

    let corpus = load_corpus(&corpus_path)?;
    let queries = load_corpus(&queries_path)?;
    let (qrels, missing) = load_qrels(&qrels_path)?.restrict_to(&corpus);
    if missing > 0 {
        eprintln!("warning: {missing} judgments reference documents outside the corpus");
    }
    let (model, outcome) = Model::train(&corpus, &queries, &qrels, &ctx.cfg.model, &ctx.cfg.train)?;
    if let Some(dir) = model_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    model.save(&model_path)?;
    ctx.write("loss.csv", &loss_csv(&outcome.history))?;
    ctx.echo_config()?;
    match outcome.history.last() {
        Some(r) => println!("final loss: L_r = {:.6}, L_m = {:.6}, total = {:.6}", r.ranking, r.mse, r.total),
        None => println!("no training steps run"),
    }
    println!("model written to {}", model_path.display());
    Ok(())
}

fn cmd_quantize(a: QuantizeArgs) -> CliResult {
    let mut ctx = Ctx::new(&a.common)?;
    ctx.cfg.retrieval.balanced_index |= a.balanced;
    ctx.finish_config()?;
    let model_path = ctx.path(&a.model, &ctx.cfg.paths.model, "model")?;
    let corpus_path = ctx.path(&a.corpus, &ctx.cfg.paths.corpus, "corpus")?;
    let model = load_model(&model_path)?;
    let corpus = load_corpus(&corpus_path)?;
    let (ids, docs) = tokenize_corpus(&model, &corpus)?;
    let index = quantize_corpus(&model.encoder, &ids, &docs, &model.codebooks, ctx.cfg.retrieval.balanced_index)?;
    let path = ctx.write("index.tsv", &index.to_tsv())?;
    ctx.echo_config()?;
    println!("quantized {} documents into {}", index.len(), path.display());
    Ok(())
}

fn cmd_attribute(a: AttributeArgs) -> CliResult {
    let mut ctx = Ctx::new(&a.common)?;
    ctx.cfg.attribution.steps = a.steps.unwrap_or(ctx.cfg.attribution.steps);
    ctx.finish_config()?;
    let model_path = ctx.path(&a.model, &ctx.cfg.paths.model, "model")?;
    let corpus_path = ctx.path(&a.corpus, &ctx.cfg.paths.corpus, "corpus")?;
    let model = load_model(&model_path)?;
    let corpus = load_corpus(&corpus_path)?;
    let selected: Vec<&crate::corpus::Document> = if a.docs.is_empty() {
        corpus.iter().collect()
    } else {
        a.docs
            .iter()
            .map(|id| corpus.get(id).ok_or_else(|| Error::UnknownDocument(id.clone())))
            .collect::<Result<_, _>>()?
    };
    let cfg = attribution_config(&ctx.cfg, &model);
    let lines: Vec<String> = selected
        .par_iter()
        .map(|d| {
            let tokens = model.tokenize(&d.text)?;
            AttributionReport::build(&model, &d.id, &tokens, &cfg)?.to_json_line()
        })
        .collect::<Result<_, _>>()?;
    let mut out = lines.join("\n");
    out.push('\n');
    let path = ctx.write("attributions.jsonl", &out)?;
    ctx.echo_config()?;
    println!("attributed {} documents into {}", lines.len(), path.display());
    Ok(())
}

fn cmd_mask_eval(a: MaskEvalArgs) -> CliResult {
    let mut ctx = Ctx::new(&a.common)?;
    let m = &mut ctx.cfg.mask_eval;
    if !a.methods.is_empty() {
        m.methods = a.methods.clone();
    }
    m.rho = a.rho.unwrap_or(m.rho);
    m.include_tensor |= a.include_tensor;
    if let Some(metric) = a.metric {
        m.metric = match metric {
            MetricArg::Euclidean => DistanceMetric::Euclidean,
            MetricArg::Squared => DistanceMetric::Squared,
        };
    }
    if let Some(p) = a.pairing {
        m.pairing = match p {
            PairingArg::PerEntry => TestPairing::PerEntry,
            PairingArg::PerDocument => TestPairing::PerDocument,
        };
    }
    ctx.cfg.attribution.steps = a.steps.unwrap_or(ctx.cfg.attribution.steps);
    let methods: Vec<MaskMethod> = ctx
        .cfg
        .mask_eval
        .methods
        .iter()
        .map(|s| s.parse::<MaskMethod>())
        .collect::<Result<_, _>>()?;
    ctx.finish_config()?;
    let model_paths: Vec<PathBuf> = if a.models.is_empty() {
        vec![ctx.path(&None, &ctx.cfg.paths.model, "model")?]
    } else {
        a.models.iter().map(|p| require(p, "model").map(|_| p.clone())).collect::<CliResult<_>>()?
    };
    let corpus_path = ctx.path(&a.corpus, &ctx.cfg.paths.corpus, "corpus")?;
    let corpus = load_corpus(&corpus_path)?;
    let mut reports: Vec<MaskEvalReport> = Vec::new();
    for p in &model_paths {
        let model = load_model(p)?;
        let (ids, docs) = tokenize_corpus(&model, &corpus)?;
        let mut cfg = ctx.cfg.mask_config()?;
        cfg.methods = methods.clone();
        cfg.attribution = attribution_config(&ctx.cfg, &model);
        reports.push(run_mask_eval(&model, &ids, &docs, &cfg)?);
    }
    let include = ctx.cfg.mask_eval.include_tensor;
    let shown: Vec<MaskEvalReport> =
        reports.iter().map(|r| if include { r.clone() } else { r.without_tensor() }).collect();
    ctx.write("mask_eval.json", &json(&shown)?)?;
    let table = render_table(&reports.iter().collect::<Vec<_>>());
    ctx.write("mask_eval.txt", &table)?;
    ctx.echo_config()?;
    print!("{table}");
    Ok(())
}

fn cmd_retrieve(a: RetrieveArgs) -> CliResult {
    let mut ctx = Ctx::new(&a.common)?;
    ctx.cfg.retrieval.k = a.k.unwrap_or(ctx.cfg.retrieval.k);
    ctx.cfg.retrieval.asymmetric |= a.asymmetric;
    ctx.finish_config()?;
    let model_path = ctx.path(&a.model, &ctx.cfg.paths.model, "model")?;
    let corpus_path = ctx.path(&a.corpus, &ctx.cfg.paths.corpus, "corpus")?;
    let queries_path = ctx.path(&a.queries, &ctx.cfg.paths.queries, "queries")?;
    let qrels_path = match (&a.qrels, &ctx.cfg.paths.qrels) {
        (None, None) => None,
        _ => Some(ctx.path(&a.qrels, &ctx.cfg.paths.qrels, "qrels")?),
    };
    let model = load_model(&model_path)?;
    let corpus = load_corpus(&corpus_path)?;
    let queries = load_corpus(&queries_path)?;
    let (ids, docs) = tokenize_corpus(&model, &corpus)?;
    let index = quantize_corpus(&model.encoder, &ids, &docs, &model.codebooks, ctx.cfg.retrieval.balanced_index)?;
    let runs = retrieve_all(&model, &queries, &index, ctx.cfg.retrieval.k, ctx.cfg.retrieval.asymmetric)?;
    let path = ctx.write("run.trec", &to_trec_run(&runs))?;
    println!("run for {} queries written to {}", runs.len(), path.display());
    if let Some(qp) = qrels_path {
        let (qrels, _) = load_qrels(&qp)?.restrict_to(&corpus);
        let m = evaluate(&runs, &qrels)?;
        ctx.write("metrics.json", &json(&m)?)?;
        println!(
            "MRR@10 {:.4}  R@100 {:.4}  NDCG@10 {:.4}  MRR@100 {:.4}  ({} queries, {} skipped)",
            m.mrr_10, m.recall_100, m.ndcg_10, m.mrr_100, m.num_queries, m.skipped
        );
    }
    ctx.echo_config()?;
    Ok(())
}

/// Runs every query against an index; results keyed by query id.
pub fn retrieve_all(
    model: &Model,
    queries: &Corpus,
    index: &QuantIndex,
    k: usize,
    asymmetric: bool,
) -> crate::error::Result<BTreeMap<String, RunList>> {
    queries
        .docs()
        .par_iter()
        .map(|q| {
            let tokens = model.tokenize(&q.text)?;
            let run = if asymmetric {
                retrieve_asymmetric(&model.encode(&tokens), index, &model.codebooks, k)?
            } else {
                retrieve(&model.code(&tokens), index, &model.codebooks, k)?
            };
            Ok((q.id.clone(), run))
        })
        .collect()
}

fn cmd_inspect(a: InspectArgs) -> CliResult {
    let mut ctx = Ctx::new(&a.common)?;
    ctx.finish_config()?;
    let model_path = ctx.path(&a.model, &ctx.cfg.paths.model, "model")?;
    let corpus_path = ctx.path(&a.corpus, &ctx.cfg.paths.corpus, "corpus")?;
    let model = load_model(&model_path)?;
    let corpus = load_corpus(&corpus_path)?;
    let (ids, docs) = tokenize_corpus(&model, &corpus)?;
    let index = match &a.index {
        Some(p) => {
            require(p, "index")?;
            let content = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            QuantIndex::parse_tsv(&content)?
        }
        None => quantize_corpus(&model.encoder, &ids, &docs, &model.codebooks, false)?,
    };
    if a.pool >= model.num_subvectors() {
        return Err(Error::OutOfRange(format!("pool {} of {}", a.pool, model.num_subvectors())).into());
    }
    let code = match a.code {
        Some(c) => c,
        None => most_populated_code(&index, a.pool).map_or(0, |(c, _)| c),
    };
    let mode = match a.mode {
        ModeArg::Frequency => TopicMode::Frequency,
        ModeArg::Attribution => TopicMode::Attribution,
    };
    let report =
        topic_report(&model, &index, &docs, a.pool, code, a.top_n, mode, &attribution_config(&ctx.cfg, &model))?;
    let path = ctx.write("topic.json", &json(&report)?)?;
    if a.svg {
        ctx.write("topic.svg", &word_cloud_svg(&report, 600.0, 12.0, 48.0))?;
    }
    ctx.echo_config()?;
    let mut summary = format!("pool {} code {} ({} documents):", report.pool, report.code, report.doc_count);
    for w in &report.words {
        let _ = write!(summary, " {}", w.word);
    }
    println!("{summary}");
    println!("report written to {}", path.display());
    Ok(())
}

fn cmd_wordcloud(a: WordcloudArgs) -> CliResult {
    require(&a.report, "topic report")?;
    let content = fs::read_to_string(&a.report).map_err(|e| Error::io(&a.report, e))?;
    let report: TopicReport = serde_json::from_str(&content)
        .map_err(|e| CliError::usage(format!("{}: not a topic report: {e}", a.report.display())))?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(&a.out, word_cloud_svg(&report, a.width, 12.0, 48.0)).map_err(|e| Error::io(&a.out, e))?;
    println!("word cloud written to {}", a.out.display());
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> CliResult {
    let mut ctx = Ctx::new(&a.common)?;
    ctx.cfg.synth.num_docs = a.num_docs.unwrap_or(ctx.cfg.synth.num_docs);
    ctx.cfg.synth.num_queries = a.num_queries.unwrap_or(ctx.cfg.synth.num_queries);
    ctx.finish_config()?;
    let data = generate(&ctx.cfg.synth)?;
    ctx.cfg.paths.corpus = Some(ctx.write("corpus.tsv", &data.corpus.to_tsv())?);
    ctx.cfg.paths.queries = Some(ctx.write("queries.tsv", &data.queries.to_tsv())?);
    ctx.cfg.paths.qrels = Some(ctx.write("qrels.txt", &data.qrels.to_trec())?);
    ctx.echo_config()?;
    println!(
        "wrote {} documents and {} queries to {}",
        data.corpus.len(),
        data.queries.len(),
        ctx.output.display()
    );
    Ok(())
}
