//! Command line front end and HTTP service for the proof-search engine.

pub mod args;
pub mod server;
pub mod store;

use std::ffi::OsString;
use std::io::Write;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use backchain_core::backend::{Backend, BackendError, KnowledgeBase, MockBackend, RemoteBackend, RemoteConfig};
use backchain_core::memory::{BeliefOverride, MemoryError, MemoryStore};
use backchain_core::pipeline::{self, AnswerResult, Pipeline, PipelineError, QuestionRecord};
use backchain_core::Statement;
use clap::Parser;
use thiserror::Error;

use args::{AskArgs, Cli, Command, EvalArgs, Format, SearchArgs, ServeArgs, TeachArgs};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_BACKEND: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("backend: {0}")]
    Backend(String),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Store(#[from] store::StoreError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Backend(_) => EXIT_BACKEND,
            _ => EXIT_USAGE,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Dataset(_) | PipelineError::EmptyDataset | PipelineError::MissingGold(_) => {
                CliError::Usage(e.to_string())
            }
            PipelineError::Backend { source: BackendError::Declarativization { .. }, .. } => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Backend(other.to_string()),
        }
    }
}

/// Builds the backend named by `mock:<path>` or `remote:<url>`. Remote
/// clients block, so this must run outside any async runtime.
pub fn build_backend(target: &str) -> Result<Arc<dyn Backend>, CliError> {
    match target.split_once(':') {
        Some(("mock", path)) => {
            let kb = KnowledgeBase::load(path).map_err(|e| CliError::Backend(e.to_string()))?;
            Ok(Arc::new(MockBackend::new(kb)))
        }
        Some(("remote", url)) => {
            let backend = RemoteBackend::new(RemoteConfig::new(url)).map_err(|e| CliError::Backend(e.to_string()))?;
            Ok(Arc::new(backend))
        }
        _ => Err(CliError::Usage(format!("--backend {target:?}: expected mock:<path> or remote:<url>"))),
    }
}

fn build_pipeline(search: &SearchArgs) -> Result<Pipeline, CliError> {
    let cfg = search.config();
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(Pipeline::new(build_backend(&search.backend)?, cfg).with_n_candidates(search.n_candidates))
}

/// Runs the command line and returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let mut out = std::io::stdout().lock();
    match run(cli.command, &mut out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Ask(a) => ask(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Teach(a) => teach(a, out),
        Command::Serve(a) => serve(a),
    }
}

fn ask(a: AskArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let pipeline = build_pipeline(&a.search)?;
    let id = "cli".to_string();
    let q = if a.options.is_empty() {
        QuestionRecord::open(id, a.question, Some(a.search.n_candidates))
    } else {
        QuestionRecord::multiple_choice(id, a.question, a.options, None)
    };
    let result = if a.use_memory {
        let store = MemoryStore::open(&a.memory.memory_path)?;
        pipeline.answer_with_memory(&q, a.search.mode, &store)?
    } else {
        pipeline.answer(&q, a.search.mode, None)?
    };
    match a.format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&result).expect("result serializes"))?,
        Format::Text => write!(out, "{}", render_answer(&q.question, &result))?,
    }
    Ok(())
}

pub fn render_answer(question: &str, r: &AnswerResult) -> String {
    let mut s = format!("question: {question}\n");
    if let Some(ctx) = &r.context {
        s.push_str(&format!("context: {ctx}\n"));
    }
    s.push_str(&format!(
        "answer: [{}] {} ({} mode{})\n",
        r.chosen_index,
        r.chosen_option,
        r.mode,
        if r.faithful { ", faithful" } else { "" }
    ));
    for (i, o) in r.per_option.iter().enumerate() {
        let marker = if i == r.chosen_index { '*' } else { ' ' };
        s.push_str(&format!("{marker} [{i}] {:<24} score {:.3}  {}", o.option, o.score, o.hypothesis));
        if let Some(p) = o.proof.as_ref().filter(|p| p.forced) {
            s.push_str(&format!("  (forced, depth {})", p.depth()));
        }
        if let Some(e) = &o.error {
            s.push_str(&format!("  error: {e}"));
        }
        s.push('\n');
    }
    if let Some(proof) = &r.chosen().proof {
        s.push_str("proof:\n");
        s.push_str(&proof.render());
    }
    s
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let dataset = pipeline::load_jsonl(&a.dataset).map_err(|e| CliError::Usage(e.to_string()))?;
    let pipeline = build_pipeline(&a.search)?;
    let (metrics, _) = pipeline.evaluate(&dataset, a.search.mode)?;
    match a.format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&metrics).expect("metrics serialize"))?,
        Format::Text => write!(out, "{}", metrics.to_table())?,
    }
    Ok(())
}

fn teach(a: TeachArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let statement = Statement::new(&a.statement).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut store = MemoryStore::open(&a.memory.memory_path)?;
    let mut entry = BeliefOverride::new(statement, a.is_true);
    entry.note = a.note;
    let stored = store.upsert(entry)?;
    match a.format {
        Format::Json => writeln!(out, "{}", serde_json::to_string(&stored).expect("override serializes"))?,
        Format::Text => writeln!(
            out,
            "stored: {} is {} ({} override(s) in {})",
            stored.statement,
            if stored.asserted_true { "true" } else { "false" },
            store.len(),
            a.memory.memory_path.display()
        )?,
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    // built before the runtime: the remote client must not live inside it
    let backend = build_backend(&a.search.backend)?;
    let cfg = a.search.config();
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let memory = MemoryStore::open(&a.memory.memory_path)?;
    let proofs = match &a.proof_store {
        Some(path) => store::ProofStore::open(path)?,
        None => store::ProofStore::in_memory(),
    };
    let state = Arc::new(server::AppState {
        backend,
        default_cfg: cfg,
        default_mode: a.search.mode,
        n_candidates: a.search.n_candidates,
        memory: RwLock::new(memory),
        proofs,
        request_timeout: Duration::from_secs(a.request_timeout_secs),
    });
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((a.bind.as_str(), a.port)).await?;
        log::info!("listening on {}", listener.local_addr()?);
        axum::serve(listener, server::router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })?;
    Ok(())
}
