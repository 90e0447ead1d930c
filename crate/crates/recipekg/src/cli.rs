//! Command-line grammar, config-file merging and dispatch.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::commands;
use crate::error::{Error, Result};
use crate::formats::{data_lines, origin, read_text};
use crate::report::{artifacts, RunManifest};

#[derive(Debug, Parser)]
#[command(
    name = "recipekg",
    version,
    about = "Knowledge-graph recipe recommendation: embeddings, evaluation, clustering, alignment and retrieval",
    args_override_self = true,
    propagate_version = true
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize)]
pub struct GlobalArgs {
    /// Top-level seed; every randomized stage derives its own stream from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for evaluation (training is always single-threaded).
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// `key = value` file of flag defaults; command-line flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Where to write the run manifest (default: next to the output).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Merge triple files (and thresholded ratings) into one graph.
    Ingest(IngestArgs),
    /// Drop rarely-interacted recipes, then users with too few interactions.
    Filter(FilterArgs),
    /// Split one relation into train/valid/test (and a zero-shot holdout).
    Split(SplitArgs),
    /// Train a knowledge-graph embedding model on a split.
    TrainKge(TrainKgeArgs),
    /// Rank held-out triples and report Hit@K, nDCG@K, MRR and mean rank.
    Eval(EvalArgs),
    /// K-means recipe clusters with Elbow/Silhouette model selection.
    Cluster(ClusterArgs),
    /// Add cluster sub-graph triples or decouple persons per cluster.
    CrTransform(CrTransformArgs),
    /// Fit the text-to-KG alignment network.
    TrainAligner(TrainAlignerArgs),
    /// Recommend for holdout users through the placeholder node.
    ZeroShot(ZeroShotArgs),
    /// Review-based retrieval: text, KGE or hybrid ranking.
    Rrs(RrsArgs),
    /// Train the KGE-guided variational autoencoder on recipe images.
    TrainKgvae(TrainKgvaeArgs),
    /// Retrieve the most similar gallery images for one image.
    ImageQuery(ImageQueryArgs),
    /// Generate a planted synthetic benchmark.
    Synth(SynthArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Ingest(_) => "ingest",
            Self::Filter(_) => "filter",
            Self::Split(_) => "split",
            Self::TrainKge(_) => "train-kge",
            Self::Eval(_) => "eval",
            Self::Cluster(_) => "cluster",
            Self::CrTransform(_) => "cr-transform",
            Self::TrainAligner(_) => "train-aligner",
            Self::ZeroShot(_) => "zero-shot",
            Self::Rrs(_) => "rrs",
            Self::TrainKgvae(_) => "train-kgvae",
            Self::ImageQuery(_) => "image-query",
            Self::Synth(_) => "synth",
        }
    }

    fn config_json(&self) -> serde_json::Value {
        let v = match self {
            Self::Ingest(a) => serde_json::to_value(a),
            Self::Filter(a) => serde_json::to_value(a),
            Self::Split(a) => serde_json::to_value(a),
            Self::TrainKge(a) => serde_json::to_value(a),
            Self::Eval(a) => serde_json::to_value(a),
            Self::Cluster(a) => serde_json::to_value(a),
            Self::CrTransform(a) => serde_json::to_value(a),
            Self::TrainAligner(a) => serde_json::to_value(a),
            Self::ZeroShot(a) => serde_json::to_value(a),
            Self::Rrs(a) => serde_json::to_value(a),
            Self::TrainKgvae(a) => serde_json::to_value(a),
            Self::ImageQuery(a) => serde_json::to_value(a),
            Self::Synth(a) => serde_json::to_value(a),
        };
        v.expect("arguments serialize")
    }
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    /// Triple TSV files, merged in order.
    #[arg(long, required = true, num_args = 1..)]
    pub triples: Vec<PathBuf>,
    /// `person<TAB>recipe<TAB>rating` file turned into likes.
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    /// Ratings at or above this become likes.
    #[arg(long, default_value_t = 4)]
    pub threshold: u8,
    /// Derive ingredient co-occurrence triples.
    #[arg(long)]
    pub cooccurrence: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct FilterArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, default_value = "psn:likes:rcp")]
    pub relation: String,
    #[arg(long, default_value_t = 50)]
    pub min_recipe: usize,
    #[arg(long, default_value_t = 10)]
    pub min_user: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// One interaction per user goes to test.
    Loo,
    /// Fractions with largest-remainder rounding.
    Ratio,
    /// Ratio split plus holdout users with only isolated recipes.
    ZeroShot,
}

#[derive(Debug, Args, Serialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, default_value = "psn:likes:rcp")]
    pub relation: String,
    #[arg(long, value_enum, default_value = "ratio")]
    pub protocol: Protocol,
    /// Train, valid and test fractions.
    #[arg(long, value_delimiter = ',', default_value = "0.8,0.1,0.1")]
    pub fractions: Vec<f64>,
    /// Users moved to the holdout for the zero-shot protocol.
    #[arg(long, default_value_t = 10)]
    pub holdout_users: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArg {
    Rotate,
    Transe,
    Distmult,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormArg {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorruptionArg {
    Head,
    Tail,
    Both,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainKgeArgs {
    /// Split directory.
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long, value_enum, default_value = "rotate")]
    pub model: ModelArg,
    #[arg(long, value_enum, default_value = "l2")]
    pub norm: NormArg,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    /// Negatives per positive.
    #[arg(long, default_value_t = 10)]
    pub neg: usize,
    /// Margin γ.
    #[arg(long, default_value_t = 5.0)]
    pub gamma: f64,
    /// Self-adversarial temperature α.
    #[arg(long, default_value_t = 1.0)]
    pub adv_temp: f64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, value_enum, default_value = "both")]
    pub corruption: CorruptionArg,
    /// `rand`, or `pretrained:<embedding file>`.
    #[arg(long, default_value = "rand")]
    pub init: String,
    /// Reduce pretrained vectors to `--dim` with the autoencoder when widths differ.
    #[arg(long)]
    pub reduce: bool,
    #[arg(long, default_value_t = 200)]
    pub reduce_epochs: usize,
    /// Accept hyperparameters outside the search grid.
    #[arg(long)]
    pub allow_off_grid: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Part {
    Valid,
    Test,
    Holdout,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub split: PathBuf,
    /// KGE checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub part: Part,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Rank against all candidates instead of filtering known positives.
    #[arg(long)]
    pub raw: bool,
    /// Second checkpoint; adds a paired Wilcoxon test on per-query ranks.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Per-query ranks as TSV.
    #[arg(long)]
    pub ranks: Option<PathBuf>,
    /// Metrics JSON (a `.txt` sibling gets the flat form).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ClusterArgs {
    /// Recipe vectors keyed by recipe id, or `<id>#name`/`<id>#instructions`.
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub k_min: usize,
    #[arg(long, default_value_t = 10)]
    pub k_max: usize,
    /// Restarts per k (best SSD kept).
    #[arg(long, default_value_t = 3)]
    pub seeds: usize,
    /// Skip selection and use this k.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    /// Cluster TSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Selection report JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrMode {
    /// Decouple persons into per-cluster conditional nodes.
    Cr,
    /// Add cluster (and optional extra) triples to training.
    Subgraph,
}

#[derive(Debug, Args, Serialize)]
pub struct CrTransformArgs {
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub clusters: PathBuf,
    #[arg(long, value_enum)]
    pub mode: CrMode,
    /// Extra triple files added to training in sub-graph mode.
    #[arg(long, num_args = 1..)]
    pub extra: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairKind {
    Persons,
    Reviews,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainAlignerArgs {
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Text embeddings.
    #[arg(long)]
    pub text: PathBuf,
    #[arg(long, value_enum, default_value = "persons")]
    pub pairs: PairKind,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.005)]
    pub lr: f64,
    /// Fraction of pairs held out for early stopping.
    #[arg(long, default_value_t = 0.0)]
    pub valid_fraction: f64,
    #[arg(long, default_value_t = 20)]
    pub patience: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZeroShotArg {
    Rand,
    Avg,
    KgAligned,
}

#[derive(Debug, Args, Serialize)]
pub struct ZeroShotArgs {
    /// Split directory with a holdout part.
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value = "kg-aligned")]
    pub mode: ZeroShotArg,
    #[arg(long)]
    pub aligner: Option<PathBuf>,
    /// Text embeddings of the holdout users (or of their reviews).
    #[arg(long)]
    pub text: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Top-K recommendations per holdout user as TSV.
    #[arg(long)]
    pub recommendations: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RrsMode {
    Text,
    Kge,
    Hybrid,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregateArg {
    Max,
    Mean,
}

#[derive(Debug, Args, Serialize)]
pub struct RrsArgs {
    /// Split directory holding the review graph.
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long, value_enum, default_value = "hybrid")]
    pub mode: RrsMode,
    /// Review text embeddings (keys `<review>` or `<review>#content`).
    #[arg(long)]
    pub reviews: PathBuf,
    /// `query-id<TAB>relevant-recipe-id` file.
    #[arg(long)]
    pub queries: PathBuf,
    /// Query text embeddings keyed by query id.
    #[arg(long)]
    pub query_embeddings: PathBuf,
    /// KGE checkpoint (kge and hybrid modes).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Aligner checkpoint (kge and hybrid modes).
    #[arg(long)]
    pub aligner: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "max")]
    pub aggregate: AggregateArg,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Top-K per query as TSV.
    #[arg(long)]
    pub rankings: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainKgvaeArgs {
    /// RIMG file.
    #[arg(long)]
    pub images: PathBuf,
    /// `row<TAB>recipe-id` index.
    #[arg(long)]
    pub index: PathBuf,
    /// Recipe embeddings; either this or `--split` with `--model`.
    #[arg(long)]
    pub recipe_embeddings: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// One value, or a comma list tuned on a validation part.
    #[arg(long, value_delimiter = ',', default_value = "0.01")]
    pub lambda: Vec<f64>,
    /// Plain VAE without the guidance term.
    #[arg(long)]
    pub vanilla: bool,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    /// Validation fraction used when tuning λ.
    #[arg(long, default_value_t = 0.2)]
    pub valid_fraction: f64,
    /// Neighbours scored when tuning λ.
    #[arg(long, default_value_t = 5)]
    pub tune_k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ImageQueryArgs {
    /// KG-VAE checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub image_row: usize,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Separate gallery (RIMG); default is the query file minus the query.
    #[arg(long, requires = "gallery_index")]
    pub gallery: Option<PathBuf>,
    #[arg(long)]
    pub gallery_index: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Benchmark {
    /// Two-block likes graph with block-correlated person text.
    Blocks,
    /// Multi-interest likes over planted recipe clusters.
    Interest,
    /// Reviews, raw text and retrieval queries.
    Reviews,
    /// Class-textured recipe images with ingredient triples.
    Textures,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub benchmark: Benchmark,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Side effects of one command, for the manifest.
#[derive(Debug, Default)]
pub struct Outcome {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub summary: serde_json::Map<String, serde_json::Value>,
    /// Default manifest location.
    pub manifest: PathBuf,
}

/// Config-file entries turned into flags for `subcommand`, placed before
/// the real arguments so those override them.
fn config_args(path: &Path, subcommand: &str) -> Result<Vec<OsString>> {
    let text = read_text(path)?;
    let origin = origin(path);
    let cmd = Cli::command();
    let sub = cmd
        .find_subcommand(subcommand)
        .ok_or_else(|| Error::Usage(format!("unknown subcommand `{subcommand}`")))?;
    let mut out = Vec::new();
    for (no, line) in data_lines(&text) {
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| Error::Usage(format!("{origin}:{no}: expected `key = value`")))?;
        let arg = sub
            .get_arguments()
            .chain(cmd.get_arguments())
            .find(|a| a.get_long() == Some(key))
            .ok_or_else(|| Error::Usage(format!("{origin}:{no}: unknown key `{key}` for {subcommand}")))?;
        if key == "config" {
            return Err(Error::Usage(format!("{origin}:{no}: config files do not nest")));
        }
        if arg.get_action().takes_values() {
            out.push(OsString::from(format!("--{key}")));
            out.push(OsString::from(value));
        } else {
            match value {
                "true" => out.push(OsString::from(format!("--{key}"))),
                "false" => {}
                other => {
                    return Err(Error::Usage(format!(
                        "{origin}:{no}: `{key}` is a switch; expected true or false, got `{other}`"
                    )))
                }
            }
        }
    }
    Ok(out)
}

/// Pull `--config` out of the raw arguments and splice its entries in right
/// after the subcommand name.
fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut config = None;
    let mut rest = Vec::with_capacity(argv.len());
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        match a.to_str() {
            Some("--config") => config = it.next().map(PathBuf::from),
            Some(s) if s.starts_with("--config=") => config = Some(PathBuf::from(&s["--config=".len()..])),
            _ => rest.push(a),
        }
    }
    let Some(config) = config else { return Ok(rest) };
    let cmd = Cli::command();
    let names: Vec<&str> = cmd.get_subcommands().map(|s| s.get_name()).collect();
    let Some(pos) = rest.iter().skip(1).position(|a| a.to_str().is_some_and(|s| names.contains(&s))) else {
        return Ok(rest);
    };
    let pos = pos + 1;
    let sub = rest[pos].to_str().unwrap_or_default().to_string();
    let extra = config_args(&config, &sub)?;
    rest.splice(pos + 1..pos + 1, extra);
    Ok(rest)
}

fn init_logging(global: &GlobalArgs) {
    let level = if global.quiet {
        log::LevelFilter::Error
    } else {
        match global.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            _ => log::LevelFilter::Debug,
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .try_init();
}

/// Parse, execute and write the manifest. Returns the process exit code:
/// 0 on success, 2 on usage errors, 1 on runtime errors.
fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) => 2,
        _ => 1,
    }
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    init_logging(&cli.global);
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    if cli.global.threads == 0 {
        return Err(Error::Usage("--threads must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.threads)
        .build()
        .map_err(|e| Error::Usage(format!("thread pool: {e}")))?;
    let seed = cli.global.seed;
    let outcome = pool.install(|| match &cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Filter(a) => commands::filter(a),
        Command::Split(a) => commands::split(a, seed),
        Command::TrainKge(a) => commands::train_kge(a, seed),
        Command::Eval(a) => commands::eval(a),
        Command::Cluster(a) => commands::cluster(a, seed),
        Command::CrTransform(a) => commands::cr_transform(a),
        Command::TrainAligner(a) => commands::train_aligner(a, seed),
        Command::ZeroShot(a) => commands::zero_shot(a, seed),
        Command::Rrs(a) => commands::rrs(a),
        Command::TrainKgvae(a) => commands::train_kgvae(a, seed),
        Command::ImageQuery(a) => commands::image_query(a),
        Command::Synth(a) => commands::synth(a, seed),
    })?;
    let mut inputs = Vec::new();
    if let Some(c) = &cli.global.config {
        inputs.extend(artifacts(c)?);
    }
    for p in &outcome.inputs {
        inputs.extend(artifacts(p)?);
    }
    let mut outputs = Vec::new();
    for p in &outcome.outputs {
        outputs.extend(artifacts(p)?);
    }
    let manifest = RunManifest {
        tool: "recipekg",
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name().to_string(),
        seed,
        threads: cli.global.threads,
        config: cli.command.config_json(),
        inputs,
        outputs,
        summary: outcome.summary,
    };
    let path = cli.global.manifest.clone().unwrap_or(outcome.manifest);
    manifest.write(&path)?;
    log::info!("manifest written to {}", path.display());
    Ok(())
}
