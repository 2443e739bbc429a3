use std::net::SocketAddr;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use facetrank_core::corpus::Namespace;
use facetrank_core::evaluation::Denominator;
use facetrank_core::graph_embed::{EmbedMode, PoolMode, Similarity};
use facetrank_core::neural::{Activation, Objective};

fn parse<T: FromStr<Err = facetrank_core::Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: facetrank_core::Error| e.to_string())
}

/// Comma-separated list, e.g. `100,100,100`.
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

fn parse_list<T: FromStr>(s: &str) -> Result<List<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<Vec<_>, _>>()
        .map(List)
}

fn parse_denominator(s: &str) -> Result<Denominator, String> {
    match s {
        "min" => Ok(Denominator::MinKN),
        "k" => Ok(Denominator::K),
        other => Err(format!("unknown denominator `{other}` (expected min or k)")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EmbedOrder {
    First,
    Second,
    Concat,
}

#[derive(Debug, Parser)]
#[command(name = "facetrank", version, about = "Faceted people-search ranking workflows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// key=value file of long flag names; command-line flags take precedence
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmbeddingArgs {
    /// Skill embedding table
    #[arg(long, value_name = "PATH")]
    pub skill_embeddings: Option<PathBuf>,
    /// Title embedding table
    #[arg(long, value_name = "PATH")]
    pub title_embeddings: Option<PathBuf>,
    /// Company embedding table
    #[arg(long, value_name = "PATH")]
    pub company_embeddings: Option<PathBuf>,
}

impl EmbeddingArgs {
    pub fn paths(&self) -> Vec<(Namespace, &PathBuf)> {
        [
            (Namespace::Skill, &self.skill_embeddings),
            (Namespace::Title, &self.title_embeddings),
            (Namespace::Company, &self.company_embeddings),
        ]
        .into_iter()
        .filter_map(|(ns, p)| p.as_ref().map(|p| (ns, p)))
        .collect()
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic clustered corpus with a time-ordered train/test split
    #[command(args_override_self = true)]
    Synth(SynthArgs),
    /// Build the weighted co-occurrence graph of one namespace
    #[command(args_override_self = true)]
    BuildGraph(BuildGraphArgs),
    /// Train unsupervised graph embeddings from an edge list
    #[command(args_override_self = true)]
    TrainEmbed(TrainEmbedArgs),
    /// Train the two-arm semantic matching model
    #[command(args_override_self = true)]
    TrainDssm(TrainDssmArgs),
    /// Train a ranking model on search sessions
    #[command(args_override_self = true)]
    TrainRanker(TrainRankerArgs),
    /// Replay sessions under a ranking model and report precision and AUC
    #[command(args_override_self = true)]
    Evaluate(EvaluateArgs),
    /// Serve two-pass search over HTTP
    #[command(args_override_self = true)]
    Serve(ServeArgs),
    /// Export entity embeddings from a trained semantic matching model
    #[command(args_override_self = true)]
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Output directory; receives profiles.jsonl, sessions.jsonl, train.jsonl and test.jsonl
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub members: Option<usize>,
    #[arg(long)]
    pub sessions: Option<usize>,
    #[arg(long)]
    pub impressions: Option<usize>,
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub label_noise: Option<f64>,
    #[arg(long)]
    pub p_match: Option<f64>,
    #[arg(long)]
    pub p_mismatch: Option<f64>,
    /// Share of sessions, by time, written to train.jsonl
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
}

#[derive(Debug, Args)]
pub struct BuildGraphArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub profiles: PathBuf,
    #[arg(long, default_value = "skill", value_parser = parse::<Namespace>)]
    pub namespace: Namespace,
    /// Drop edges seen in fewer profiles than this
    #[arg(long, default_value_t = 1)]
    pub min_count: u64,
    /// Edge list destination; standard output when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainEmbedArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub graph: PathBuf,
    /// Namespace of the ids in the edge list
    #[arg(long, default_value = "skill", value_parser = parse::<Namespace>)]
    pub namespace: Namespace,
    /// Embedding table destination; standard output when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "exact", value_parser = parse::<EmbedMode>)]
    pub mode: EmbedMode,
    #[arg(long, value_enum, default_value_t = EmbedOrder::Concat)]
    pub order: EmbedOrder,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub init_scale: Option<f64>,
    #[arg(long)]
    pub line_search: Option<bool>,
    #[arg(long)]
    pub step_growth: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainDssmArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub profiles: PathBuf,
    /// Training sessions
    #[arg(long)]
    pub sessions: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_parser = parse_list::<usize>)]
    pub hidden: Option<List<usize>>,
    #[arg(long)]
    pub output_dim: Option<usize>,
    #[arg(long, value_parser = parse::<Similarity>)]
    pub similarity: Option<Similarity>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainRankerArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub profiles: PathBuf,
    /// Training sessions; the latest `valid-fraction` of them drive early stopping
    #[arg(long)]
    pub sessions: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub embeddings: EmbeddingArgs,
    /// Feature names; defaults to the syntactic features plus emb_dot for every supplied table
    #[arg(long)]
    pub features: Option<String>,
    #[arg(long, default_value = "mean", value_parser = parse::<PoolMode>)]
    pub pooling: PoolMode,
    #[arg(long, value_parser = parse::<Objective>)]
    pub objective: Option<Objective>,
    #[arg(long, value_parser = parse_list::<usize>)]
    pub hidden: Option<List<usize>>,
    #[arg(long, value_parser = parse::<Activation>)]
    pub activation: Option<Activation>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Epochs without validation improvement before stopping; 0 disables
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub valid_fraction: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub profiles: PathBuf,
    #[arg(long)]
    pub sessions: PathBuf,
    #[command(flatten)]
    pub embeddings: EmbeddingArgs,
    /// Precision cutoffs
    #[arg(long, default_value = "1,5,10,25", value_parser = parse_list::<usize>)]
    pub k: List<usize>,
    /// Precision denominator: min (min(k, n)) or k
    #[arg(long, default_value = "min", value_parser = parse_denominator)]
    pub denominator: Denominator,
    /// Machine-readable `metric,k,value` report
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub profiles: PathBuf,
    #[command(flatten)]
    pub embeddings: EmbeddingArgs,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    #[arg(long, default_value_t = facetrank_service::DEFAULT_RETRIEVAL_BUDGET)]
    pub retrieval_budget: usize,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Trained semantic matching model
    #[arg(long)]
    pub dssm: PathBuf,
    /// Receives skill.emb, title.emb and company.emb
    #[arg(long)]
    pub out_dir: PathBuf,
}
