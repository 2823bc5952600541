mod commands;
mod embed;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};
use protospace_core::{Error, Mode, Scope};

/// Conceptual-space dimensions from prototype embeddings.
#[derive(Debug, Parser)]
#[command(name = "protospace", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Verbalize names and fetch their embeddings into a JSONL file.
    Embed(EmbedArgs),
    /// Train an alignment adapter.
    Train(TrainArgs),
    /// Pairwise accuracy and correlation of prototype scores.
    Eval(EvalArgs),
    /// Fit the orthogonal Procrustes adapter.
    Procrustes(ProcrustesArgs),
    /// Rank entities along a feature direction.
    Rank(RankArgs),
    /// Pick the option most similar to a query.
    Qa(QaArgs),
    /// Write a synthetic world to a directory.
    Synth(SynthArgs),
    /// Compare analytic adapter gradients with finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// One entry per line: `phrase` or `id<TAB>phrase`.
    pub texts: PathBuf,
    #[arg(long, env = "PROTOSPACE_EMBED_URL", hide_env_values = true)]
    pub endpoint: String,
    #[arg(long, env = "PROTOSPACE_EMBED_MODEL", default_value = "")]
    pub model: String,
    #[arg(long, env = "PROTOSPACE_EMBED_KEY", hide_env_values = true)]
    pub api_key: Option<String>,
    /// Category prefix, e.g. "food item".
    #[arg(long)]
    pub category: Option<String>,
    /// Wrap each phrase in the one-word description prompt.
    #[arg(long)]
    pub eol: bool,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 4)]
    pub concurrency: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    #[arg(long = "temp", default_value_t = 0.25)]
    pub temperature: f64,
    #[arg(long, default_value_t = 10.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.25)]
    pub lambda: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Classification items (JSON).
    #[arg(long)]
    pub class: Option<PathBuf>,
    /// Rank pairs (CSV). For the `*-perc` modes pass only perceptual pairs.
    #[arg(long)]
    pub rank: Option<PathBuf>,
    #[arg(long)]
    pub emb: PathBuf,
    #[arg(long, default_value = "class+rank-perc", value_parser = parse_mode)]
    pub mode: Mode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 20)]
    pub patience: usize,
    #[command(flatten)]
    pub loss: LossArgs,
    /// Use a seeded subsample of this many classification items.
    #[arg(long)]
    pub class_limit: Option<usize>,
    /// Accept items without exactly 7 examples and 4 negatives.
    #[arg(long)]
    pub relaxed: bool,
    #[arg(long, default_value = "prototypes-only", value_parser = parse_scope)]
    pub scope: Scope,
    /// Project the trained map onto the nearest orthogonal matrix.
    #[arg(long)]
    pub orthogonal: bool,
    /// Adapter JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss trace CSV; defaults to the adapter path with `.trace.csv`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub emb: PathBuf,
    /// Adapter JSON; the identity is used when absent.
    #[arg(long)]
    pub adapter: Option<PathBuf>,
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    /// Evaluation pairs (CSV); generated from the ratings when absent.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    pub min_gap: f64,
    #[arg(long, default_value_t = 340)]
    pub max_pairs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Mode label echoed in the report.
    #[arg(long, default_value = "pretrained", value_parser = parse_mode)]
    pub mode: Mode,
    /// Dataset name in the report; defaults to the input file stem.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Report JSON; printed to stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Scatter CSV of predicted score against rating.
    #[arg(long, requires = "ratings")]
    pub scatter: Option<PathBuf>,
    /// Dimension for the scatter; defaults to the first rated one.
    #[arg(long)]
    pub dimension: Option<String>,
}

#[derive(Debug, Args)]
pub struct ProcrustesArgs {
    /// Prototype embeddings (JSONL); row order follows this file.
    #[arg(long, requires = "targets", conflicts_with_all = ["class", "emb"])]
    pub prototypes: Option<PathBuf>,
    /// Target embeddings (JSONL) with the same ids.
    #[arg(long)]
    pub targets: Option<PathBuf>,
    /// Classification items: targets are example centroids.
    #[arg(long, requires = "emb")]
    pub class: Option<PathBuf>,
    #[arg(long)]
    pub emb: Option<PathBuf>,
    #[arg(long)]
    pub relaxed: bool,
    #[arg(long, default_value = "prototypes-only", value_parser = parse_scope)]
    pub scope: Scope,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("direction").required(true)))]
pub struct RankArgs {
    #[arg(long)]
    pub emb: PathBuf,
    #[arg(long)]
    pub adapter: Option<PathBuf>,
    /// Id of the stored prototype embedding.
    #[arg(long, group = "direction")]
    pub feature: Option<String>,
    /// Text of the stored prototype embedding.
    #[arg(long, group = "direction")]
    pub feature_text: Option<String>,
    /// Comma-separated ids of high seed entities.
    #[arg(long, group = "direction", requires = "seeds_low", value_delimiter = ',')]
    pub seeds_high: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub seeds_low: Vec<String>,
    /// Entity ids, one per line; defaults to every other stored id.
    #[arg(long)]
    pub entities: Option<PathBuf>,
    #[arg(long)]
    pub top: Option<usize>,
}

#[derive(Debug, Args)]
pub struct QaArgs {
    #[arg(long)]
    pub emb: PathBuf,
    #[arg(long)]
    pub query: String,
    /// Comma-separated option ids.
    #[arg(long, value_delimiter = ',', required = true)]
    pub options: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// World configuration (JSON); missing fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 340)]
    pub max_pairs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Embeddings; a default synthetic world is used when absent.
    #[arg(long, requires = "class")]
    pub emb: Option<PathBuf>,
    #[arg(long)]
    pub class: Option<PathBuf>,
    #[arg(long)]
    pub rank: Option<PathBuf>,
    #[arg(long)]
    pub relaxed: bool,
    #[arg(long, default_value = "class+rank-full", value_parser = parse_mode)]
    pub mode: Mode,
    #[arg(long, default_value = "prototypes-only", value_parser = parse_scope)]
    pub scope: Scope,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    #[command(flatten)]
    pub loss: LossArgs,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_scope(s: &str) -> Result<Scope, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// 2 config/input, 3 numerical, 4 empty data, 5 I/O and service.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numerical(_) | Error::DegenerateVector | Error::DegenerateInput(_) => 3,
        Error::EmptyPairSet(_) | Error::EmptyJoin(_) | Error::InsufficientData(_) => 4,
        Error::Io { .. } | Error::Service(_) | Error::Protocol(_) => 5,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Embed(a) => embed::run(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Procrustes(a) => commands::procrustes(&a),
        Command::Rank(a) => commands::rank(&a),
        Command::Qa(a) => commands::qa(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Gradcheck(a) => commands::gradcheck(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
