use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "wvir", version, about = "Exact psi-class intersection numbers on weighted stable curves")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub config: Config,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Evaluate one correlator given as "(k;w)(k;w)..."
    Eval { spec: String },
    /// Tabulate every nonzero correlator within the bounds
    Table,
    /// Run a verification suite
    Check {
        #[arg(value_enum)]
        suite: Suite,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Virasoro,
    Commutators,
    Kdv,
    Identities,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Human,
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    PartitionSum,
    Recursion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CacheModeArg {
    Trust,
    Verify,
}

#[derive(Args, Debug, Clone)]
pub struct Config {
    /// Comma-separated weights; the additive closure is used
    #[arg(long, global = true, default_value = "1")]
    pub weights: String,

    /// Maximum number of insertions
    #[arg(long, global = true, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_n: u64,

    #[arg(long, global = true, default_value_t = 1)]
    pub max_genus: u32,

    /// Largest operator index (default 3 for virasoro, 2 otherwise)
    #[arg(long, global = true, value_parser = clap::value_parser!(i64).range(0..))]
    pub kmax: Option<i64>,

    /// Series degree (default 5 for virasoro and kdv, 4 for commutators)
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub degree: Option<u64>,

    /// Number of KdV flows to check
    #[arg(long, global = true, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    pub flows: u64,

    #[arg(long, global = true, value_enum, default_value = "partition-sum")]
    pub mode: EvalMode,

    /// Correlator cache file
    #[arg(long, global = true, env = "WVIR_CACHE")]
    pub cache: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value = "trust")]
    pub cache_mode: CacheModeArg,

    #[arg(long, global = true, value_enum, default_value = "human")]
    pub format: Format,

    /// Seed for the randomized identity trials
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Number of randomized identity trials
    #[arg(long, global = true, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
}
