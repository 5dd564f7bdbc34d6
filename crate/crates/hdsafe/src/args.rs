use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "hdsafe", version, about = "Register allocation and scheduling without transition leakage")]
pub struct Cli {
    /// Target preset name or path to a target description.
    #[arg(long, global = true, default_value = "thumb-like")]
    pub target: String,
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0x5eed)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compile a program to annotated assembly and a JSON report.
    Compile(CompileArgs),
    /// Print inferred types and security sets.
    Analyze(AnalyzeArgs),
    /// Compile, then run the code and report its leakage.
    Simulate(SimulateArgs),
    /// Cross-check the solver against exhaustive enumeration.
    Oracle(OracleArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Program in the textual IR.
    pub input: PathBuf,
    /// Copies available per value.
    #[arg(long, default_value_t = 1)]
    pub copies: usize,
}

#[derive(Args, Debug, Clone)]
pub struct SolveArgs {
    /// Add the security constraints (default).
    #[arg(long, conflicts_with = "insecure")]
    pub secure: bool,
    /// Leave the security constraints out.
    #[arg(long)]
    pub insecure: bool,
    /// Skip the implied constraints.
    #[arg(long)]
    pub no_implied: bool,
    /// Wall-clock limit for the search.
    #[arg(long)]
    pub budget_seconds: Option<f64>,
    /// Node limit for the search.
    #[arg(long, default_value_t = 5_000_000)]
    pub budget_nodes: u64,
}

#[derive(Args, Debug)]
pub struct CompileArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub solve: SolveArgs,
    /// Directory for the generated files.
    #[arg(long, short = 'o', default_value = ".")]
    pub out_dir: PathBuf,
    /// Also write the expanded model.
    #[arg(long)]
    pub dump_model: bool,
    /// Also write the solution as JSON.
    #[arg(long)]
    pub dump_solution: bool,
    /// Check leakage equivalence of the result before reporting success.
    #[arg(long)]
    pub verify: bool,
    /// Random secret pairs checked by --verify, on top of all-zero against all-one.
    #[arg(long, default_value_t = 3)]
    pub verify_pairs: usize,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub solve: SolveArgs,
    /// Solution written by `compile --dump-solution`, instead of solving.
    #[arg(long)]
    pub solution: Option<PathBuf>,
    /// Input values in program order, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_word)]
    pub inputs: Vec<u64>,
    /// Two secret assignments to compare, as `a,b/c,d`.
    #[arg(long)]
    pub secrets: Option<String>,
    /// Public input values for the comparison, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_word)]
    pub public: Vec<u64>,
    /// Monte Carlo samples when the random inputs are too wide to enumerate.
    #[arg(long, default_value_t = 20_000)]
    pub samples: u64,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Largest number of operations to enumerate.
    #[arg(long, default_value_t = hdsafe_core::oracle::DEFAULT_BOUND)]
    pub bound: usize,
    /// Also compare solution counts when the oracle finds at most this many.
    #[arg(long, default_value_t = 100_000)]
    pub count_limit: u64,
}

pub fn parse_word(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let r = match s.strip_prefix("0x") {
        Some(h) => u64::from_str_radix(h, 16),
        None => s.parse(),
    };
    r.map_err(|e| format!("`{s}`: {e}"))
}
