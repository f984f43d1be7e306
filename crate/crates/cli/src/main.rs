//! `gddsg`: synthetic data, training, evaluation, order studies and theory
//! reports from the command line. Results go to stdout as JSON; logs and
//! messages go to stderr.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gddsg::{CentroidSpace, GddsgConfig, GroupChoicePolicy, Vote};

#[derive(Parser)]
#[command(name = "gddsg", version, about = "Similarity-grouped analytic class-incremental learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic Gaussian-cluster task stream.
    Synth(SynthArgs),
    /// Train over a manifest, evaluating after every task.
    Train(TrainArgs),
    /// Evaluate a saved state on the held-out splits of a manifest.
    Eval(EvalArgs),
    /// Rerun a stream under shuffled class orders and report the spread.
    Orders(OrdersArgs),
    /// Evaluate the closed-form order-sensitivity expressions.
    Theory(TheoryArgs),
    /// Summarize a saved state and export its graph and meta-features.
    Inspect(InspectArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    pub classes: usize,
    #[arg(long, default_value_t = 10)]
    pub tasks: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Training samples per class.
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    /// Held-out samples per class.
    #[arg(long, default_value_t = 50)]
    pub test_per_class: usize,
    #[arg(long, default_value_t = 10.0)]
    pub center_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    pub within_std: f64,
    /// Engineered similar pairs, e.g. `0:1,4:9`.
    #[arg(long, value_delimiter = ',', value_parser = parse_pair)]
    pub similar_pairs: Vec<(u32, u32)>,
}

fn parse_pair(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected `a:b`, got `{s}`"))?;
    let parse = |v: &str| v.trim().parse::<u32>().map_err(|e| format!("bad class id `{v}`: {e}"));
    Ok((parse(a)?, parse(b)?))
}

#[derive(Clone, Copy, ValueEnum)]
pub enum PolicyArg {
    /// Join the eligible group with the largest mean centroid distance.
    Maxdist,
    /// Join the eligible group with the smallest mean centroid distance.
    Eq5,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum VoteArg {
    Weighted,
    Majority,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum SpaceArg {
    Projected,
    Raw,
}

#[derive(Args, Clone)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub proj_dim: usize,
    /// Comma-separated ridge strengths to choose from.
    #[arg(long, value_delimiter = ',')]
    pub lambda_pool: Option<Vec<f64>>,
    /// Stored samples per class.
    #[arg(long, default_value_t = 20)]
    pub reservoir: usize,
    #[arg(long, default_value_t = 11)]
    pub knn: usize,
    #[arg(long, value_enum, default_value = "maxdist")]
    pub policy: PolicyArg,
    #[arg(long, value_enum, default_value = "weighted")]
    pub vote: VoteArg,
    #[arg(long, value_enum, default_value = "projected")]
    pub centroid_space: SpaceArg,
    /// Put every class in one group.
    #[arg(long)]
    pub no_grouping: bool,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

impl ModelArgs {
    pub fn config(&self) -> GddsgConfig {
        let mut c = GddsgConfig {
            proj_dim: self.proj_dim,
            seed: self.seed,
            reservoir_cap: self.reservoir,
            k_neighbors: self.knn,
            policy: match self.policy {
                PolicyArg::Maxdist => GroupChoicePolicy::MaxMeanDistance,
                PolicyArg::Eq5 => GroupChoicePolicy::MinMeanDistance,
            },
            vote: match self.vote {
                VoteArg::Weighted => Vote::DistanceWeighted,
                VoteArg::Majority => Vote::Majority,
            },
            centroid_space: match self.centroid_space {
                SpaceArg::Projected => CentroidSpace::Projected,
                SpaceArg::Raw => CentroidSpace::Raw,
            },
            grouping_enabled: !self.no_grouping,
            threads: self.threads,
            ..GddsgConfig::default()
        };
        if let Some(pool) = &self.lambda_pool {
            c.lambda_pool = pool.clone();
        }
        c
    }
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory; defaults to the `--resume` directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue a run previously written to this directory.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    pub state: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Args)]
pub struct OrdersArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Number of class orders R.
    #[arg(long)]
    pub orders: usize,
    /// Directory for `orders.json` and `opd.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Use the same shuffle seed for every order.
    #[arg(long)]
    pub repeat_seed: bool,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args)]
pub struct TheoryArgs {
    /// JSON file `{w_stars, n, p, sigma}`; without it parameters are drawn at random.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub tasks: usize,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 20)]
    pub p: usize,
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Evaluate this many random orders instead of all of them.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 6)]
    pub max_exhaustive: usize,
    /// Also report the Brooks probability for this many classes.
    #[arg(long)]
    pub brooks_n: Option<usize>,
    #[arg(long, default_value_t = 0.9)]
    pub brooks_p: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub state: PathBuf,
    /// Write the SimGraph of all learned classes as JSON.
    #[arg(long)]
    pub graph_out: Option<PathBuf>,
    /// Write the group identifier's meta-feature dataset as CSV.
    #[arg(long)]
    pub meta_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GDDSG_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Orders(a) => commands::orders(a),
        Command::Theory(a) => commands::theory(a),
        Command::Inspect(a) => commands::inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
