//! `genie`: ingest and check corpora, run one-shot queries, propose and accept
//! enrichment edges, replay session logs, and serve the HTTP API.
//!
//! Exit status is 0 on success, 1 on a data error and 2 on a config error.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use genie_core::config::{AppConfig, ConfigError};
use genie_core::corpus::CorpusPaths;
use genie_core::engine::{Engine, EngineError, EnrichmentProposal};
use genie_core::kg::{export_triples, load_triples, IngestMode, KgError, RelationRegistry};
use genie_core::llm::LlmError;
use genie_core::matcher::Recommendation;
use genie_core::session::{read_log, PreferenceProfile, Session, SessionError, SystemClock};

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Data(String),
}

/// A provider call that fails for want of a credential is a setup problem.
fn llm_error(e: LlmError) -> CliError {
    match e {
        LlmError::CredentialMissing(_) => CliError::Config(e.into()),
        other => CliError::Data(other.to_string()),
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(c) => CliError::Config(c),
            EngineError::Llm(l) => llm_error(l),
            EngineError::Session(s) => s.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<KgError> for CliError {
    fn from(e: KgError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SessionError> for CliError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Turn { source, .. } => (*source).into(),
            SessionError::Llm(l) => llm_error(l),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "genie", version, about = "Recipe knowledge-graph recommender")]
struct Cli {
    /// Output format.
    #[arg(long, value_enum, global = true, default_value = "human")]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct EngineArgs {
    /// Service config file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding triples.csv, attrs.csv and the optional resource files.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

impl EngineArgs {
    fn config(&self) -> Result<AppConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => AppConfig::load(p)?,
            None => AppConfig::default(),
        };
        if let Some(dir) = &self.corpus {
            cfg.corpus = Some(CorpusPaths::in_dir(dir));
        }
        Ok(cfg)
    }

    fn engine(&self) -> Result<Engine, CliError> {
        Ok(Engine::from_config(self.config()?)?)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a triples/attributes pair and report counts and rejected rows.
    Ingest {
        #[arg(long)]
        triples: PathBuf,
        #[arg(long)]
        attrs: PathBuf,
        /// Relation registry CSV; the built-in registry when omitted.
        #[arg(long)]
        relations: Option<PathBuf>,
        /// Fail on the first bad row instead of skipping it.
        #[arg(long)]
        strict: bool,
    },
    /// Run one message against a fresh (or replayed) session.
    Query {
        text: String,
        /// Session log to replay before the message.
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Write the recommended subgraph as Graphviz DOT.
        #[arg(long)]
        dot: Option<PathBuf>,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Propose relation edges from notes, or accept a reviewed proposal file.
    Enrich {
        #[arg(long, conflicts_with = "accept", required_unless_present = "accept")]
        notes: Option<PathBuf>,
        #[arg(long)]
        accept: Option<PathBuf>,
        /// Where to write proposals (with --notes) or the merged triples (with --accept).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Rebuild a session from its log and print the final state.
    Replay {
        #[arg(long)]
        session: PathBuf,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Run the HTTP API.
    Serve {
        /// Overrides the configured port.
        #[arg(long)]
        port: Option<u16>,
        #[command(flatten)]
        engine: EngineArgs,
    },
}

fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn print_recommendation(rec: Option<&Recommendation>) {
    let Some(rec) = rec else {
        println!("(no recommendation)");
        return;
    };
    for (i, r) in rec.results.iter().enumerate() {
        let name = rec
            .summary_payload
            .dishes
            .iter()
            .find(|d| d.id == r.recipe.as_str())
            .map(|d| d.name.as_str())
            .unwrap_or(r.recipe.as_str());
        println!("{:>2}. {name} [{}] score {:.3} {:?}", i + 1, r.recipe, r.score, r.status);
    }
}

fn ingest(
    format: Format,
    triples: &Path,
    attrs: &Path,
    relations: Option<&Path>,
    strict: bool,
) -> Result<(), CliError> {
    let registry = match relations {
        Some(p) => RelationRegistry::from_csv(File::open(p).map_err(io_err(p))?)?,
        None => RelationRegistry::default(),
    };
    let mode = if strict { IngestMode::Strict } else { IngestMode::Lenient };
    let t = File::open(triples).map_err(io_err(triples))?;
    let a = File::open(attrs).map_err(io_err(attrs))?;
    let (_, report) = load_triples(BufReader::new(t), BufReader::new(a), &registry, mode)?;
    match format {
        Format::Json => print_json(&report)?,
        Format::Human => {
            println!("nodes: {}", report.nodes);
            println!("edges: {}", report.edges);
            println!("duplicate triples: {}", report.duplicate_triples);
            println!("rejected rows: {}", report.rejected.len());
            for r in &report.rejected {
                println!("  {}:{}: {}", r.file, r.line, r.reason);
            }
            for w in &report.warnings {
                println!("warning: {w}");
            }
        }
    }
    Ok(())
}

fn replayed(engine: &Engine, log: &Path) -> Result<Session, CliError> {
    let entries = read_log(BufReader::new(File::open(log).map_err(io_err(log))?))?;
    Ok(Session::replay(engine.context(), "replay", &entries, Arc::new(SystemClock))?)
}

fn query(format: Format, text: &str, profile: Option<&Path>, dot: Option<&Path>, args: &EngineArgs) -> Result<(), CliError> {
    let engine = args.engine()?;
    let mut session = match profile {
        Some(p) => replayed(&engine, p)?,
        None => engine.new_session("query"),
    };
    let turn = session.route_turn(text)?;
    if let (Some(path), Some(rec)) = (dot, session.recommendation()) {
        std::fs::write(path, rec.subgraph.to_dot()).map_err(io_err(path))?;
    }
    match format {
        Format::Json => print_json(&turn)?,
        Format::Human => {
            if turn.recommendation.is_some() {
                print_recommendation(turn.recommendation.as_ref());
                println!();
            }
            println!("{}", turn.reply_text);
            for w in &turn.warnings {
                eprintln!("warning: {w}");
            }
        }
    }
    Ok(())
}

fn enrich(
    format: Format,
    notes: Option<&Path>,
    accept: Option<&Path>,
    out: Option<&Path>,
    args: &EngineArgs,
) -> Result<(), CliError> {
    let engine = args.engine()?;
    if let Some(path) = notes {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let proposals = engine.propose_enrichment(&text)?;
        let body = serde_json::to_string_pretty(&proposals).map_err(|e| CliError::Data(e.to_string()))?;
        match out {
            Some(o) => std::fs::write(o, body + "\n").map_err(io_err(o))?,
            None if format == Format::Json => println!("{body}"),
            None => {}
        }
        if format == Format::Human {
            for p in &proposals {
                match (&p.edge, &p.problem) {
                    (Some(e), _) => println!("pending  {} {} {}", e.subject, e.relation, e.object),
                    (None, Some(why)) => println!("skipped  {} {} {} ({why})", p.subject, p.relation, p.object),
                    (None, None) => {}
                }
            }
        }
        return Ok(());
    }
    let path = accept.expect("clap requires --notes or --accept");
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let proposals: Vec<EnrichmentProposal> = if text.trim().is_empty() {
        Vec::new()
    } else {
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
    };
    let before = engine.snapshot().version();
    let snap = engine.accept_enrichment(&proposals)?;
    if let Some(o) = out {
        export_triples(&snap, File::create(o).map_err(io_err(o))?)?;
    }
    let added = snap.triple_count() - engine.store().snapshot(before)?.triple_count();
    match format {
        Format::Json => print_json(&serde_json::json!({"version": snap.version(), "added_edges": added}))?,
        Format::Human => println!("snapshot version {} ({added} new edges)", snap.version()),
    }
    Ok(())
}

#[derive(Serialize)]
struct ReplayOut<'a> {
    profile: &'a PreferenceProfile,
    recommendation: Option<&'a Recommendation>,
    query_version: u64,
}

fn replay(format: Format, log: &Path, args: &EngineArgs) -> Result<(), CliError> {
    let engine = args.engine()?;
    let s = replayed(&engine, log)?;
    match format {
        Format::Json => print_json(&ReplayOut {
            profile: s.profile(),
            recommendation: s.recommendation(),
            query_version: s.query_version(),
        })?,
        Format::Human => {
            println!("actions: {}", s.query_version());
            println!("active constraints:");
            for c in s.profile().active_constraints.active() {
                println!("  {}", c.body.describe());
            }
            print_recommendation(s.recommendation());
        }
    }
    Ok(())
}

fn serve(port: Option<u16>, args: &EngineArgs) -> Result<(), CliError> {
    let mut cfg = args.config()?;
    if let Some(p) = port {
        cfg.port = p;
    }
    let addr = format!("{}:{}", cfg.bind_address, cfg.port);
    if let Some(dir) = &cfg.session_log_dir {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let engine = Arc::new(Engine::from_config(cfg)?);
    let state = Arc::new(genie_api::AppState::new(engine));
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Data(e.to_string()))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::Data(format!("cannot bind {addr}: {e}")))?;
        eprintln!("listening on {}", listener.local_addr().map_err(|e| CliError::Data(e.to_string()))?);
        genie_api::serve(listener, state)
            .await
            .map_err(|e| CliError::Data(e.to_string()))
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    let f = cli.format;
    match &cli.command {
        Command::Ingest {
            triples,
            attrs,
            relations,
            strict,
        } => ingest(f, triples, attrs, relations.as_deref(), *strict),
        Command::Query {
            text,
            profile,
            dot,
            engine,
        } => query(f, text, profile.as_deref(), dot.as_deref(), engine),
        Command::Enrich {
            notes,
            accept,
            out,
            engine,
        } => enrich(f, notes.as_deref(), accept.as_deref(), out.as_deref(), engine),
        Command::Replay { session, engine } => replay(f, session, engine),
        Command::Serve { port, engine } => serve(*port, engine),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let format = cli.format;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = match &e {
                CliError::Config(_) => 2,
                CliError::Data(_) => 1,
            };
            if format == Format::Json {
                let key = match &e {
                    CliError::Config(c) => c.key().map(String::from),
                    CliError::Data(_) => None,
                };
                let body = serde_json::json!({"error": e.to_string(), "key": key, "exit_code": code});
                let _ = writeln!(std::io::stderr(), "{body}");
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(code)
        }
    }
}
