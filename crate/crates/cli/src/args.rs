use std::path::PathBuf;

use backchain_core::pipeline::AnswerMode;
use backchain_core::{SearchConfig, Selection};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "backchain", version, about = "Answer questions with backward-chained entailment proofs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Answer one question and show its proofs.
    Ask(AskArgs),
    /// Answer a dataset and report metrics.
    Eval(EvalArgs),
    /// Store a belief correction.
    Teach(TeachArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    /// mock:<kb.json> or remote:<url>
    #[arg(long, env = "ENTAIL_BACKEND")]
    pub backend: String,
    #[arg(long, env = "ENTAIL_MAX_DEPTH", default_value_t = 3)]
    pub max_depth: usize,
    #[arg(long, env = "ENTAIL_K_ROOT", default_value_t = 6)]
    pub k_root: usize,
    #[arg(long, env = "ENTAIL_K_INNER", default_value_t = 1)]
    pub k_inner: usize,
    #[arg(long, env = "ENTAIL_THRESHOLD", default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, env = "ENTAIL_TEMPERATURE", default_value_t = 2.0)]
    pub temperature: f64,
    #[arg(long, env = "ENTAIL_TOP_P", default_value_t = 0.95)]
    pub top_p: f64,
    #[arg(long, env = "ENTAIL_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Expand every surviving candidate instead of the best one-deep one.
    #[arg(long, env = "ENTAIL_EXHAUSTIVE")]
    pub exhaustive: bool,
    /// Let the root stay a leaf when no candidate passes the filter.
    #[arg(long, env = "ENTAIL_NO_FORCE_ROOT")]
    pub no_force_root: bool,
    #[arg(long, env = "ENTAIL_MODE", default_value = "entailer")]
    pub mode: AnswerMode,
    /// Candidate answers generated for open-ended questions.
    #[arg(long, env = "ENTAIL_N_CANDIDATES", default_value_t = 4)]
    pub n_candidates: usize,
}

impl SearchArgs {
    pub fn config(&self) -> SearchConfig {
        SearchConfig {
            max_depth: self.max_depth,
            k_root: self.k_root,
            k_inner: self.k_inner,
            filter_threshold: self.threshold,
            temperature: self.temperature,
            top_p: self.top_p,
            seed: self.seed,
            force_root_proof: !self.no_force_root,
            selection: if self.exhaustive { Selection::Exhaustive } else { Selection::OneDeep },
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct MemoryArgs {
    #[arg(long, env = "ENTAIL_MEMORY_PATH", default_value = "beliefs.jsonl")]
    pub memory_path: PathBuf,
}

#[derive(Debug, Args)]
pub struct AskArgs {
    #[arg(long)]
    pub question: String,
    /// Comma-separated answer options; omit for an open-ended question.
    #[arg(long, value_delimiter = ',')]
    pub options: Vec<String>,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Put relevant stored corrections in the context.
    #[arg(long, env = "ENTAIL_USE_MEMORY")]
    pub use_memory: bool,
    #[command(flatten)]
    pub memory: MemoryArgs,
    #[arg(long, env = "ENTAIL_FORMAT", value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Line-delimited question records.
    #[arg(long, env = "ENTAIL_DATASET")]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, env = "ENTAIL_FORMAT", value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("truth").required(true).args(["is_true", "is_false"])))]
pub struct TeachArgs {
    #[arg(long)]
    pub statement: String,
    #[arg(long = "true")]
    pub is_true: bool,
    #[arg(long = "false")]
    pub is_false: bool,
    #[arg(long)]
    pub note: Option<String>,
    #[command(flatten)]
    pub memory: MemoryArgs,
    #[arg(long, env = "ENTAIL_FORMAT", value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "ENTAIL_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, env = "ENTAIL_BIND", default_value = "127.0.0.1")]
    pub bind: String,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub memory: MemoryArgs,
    /// Append-only proof log; proofs stay in memory only when omitted.
    #[arg(long, env = "ENTAIL_PROOF_STORE")]
    pub proof_store: Option<PathBuf>,
    #[arg(long, env = "ENTAIL_REQUEST_TIMEOUT", default_value_t = 120)]
    pub request_timeout_secs: u64,
}
