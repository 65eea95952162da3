//! `capsight` command line and HTTP service.
//!
//! Verbs: `ingest`, `query`, `report`, `bench`, `sessions`, `serve`. Exit
//! status is 0 on success, 1 on a user error (bad input, unknown session)
//! and 2 on an internal error or an unavailable dependency; diagnostics go
//! to standard error on one line.

pub mod server;
pub mod service;
mod tracking;

use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use capsight::eval::{load_qa_set, run_benchmark, AgentResponder};
use capsight::pipeline::{open_session, Endpoints};
use capsight::retrieval::RetrievalMode;

pub use service::{parse_mode, Service, ServiceConfig, ServiceError};

#[derive(Debug, Parser)]
#[command(name = "capsight", version, about = "Packet-capture analysis and question answering")]
pub struct Cli {
    /// Session store root.
    #[arg(long, env = "CAPSIGHT_DATA_DIR", default_value = "capsight-data", global = true)]
    pub data_dir: PathBuf,
    /// Use fixture clients only and never open a non-loopback socket.
    #[arg(long, env = "CAPSIGHT_OFFLINE", global = true)]
    pub offline: bool,
    /// Fixture tree for intel, search and QA fixtures.
    #[arg(long, env = "CAPSIGHT_FIXTURES", global = true)]
    pub fixtures: Option<PathBuf>,
    /// Keep complete frames of truncated captures.
    #[arg(long, global = true)]
    pub lenient: bool,
    /// Sessions kept on disk.
    #[arg(long, default_value_t = 3, global = true)]
    pub retain: usize,
    #[arg(long, env = "CAPSIGHT_EMBEDDER_URL", global = true)]
    pub embedder_url: Option<String>,
    #[arg(long, env = "CAPSIGHT_CHAT_URL", global = true)]
    pub chat_url: Option<String>,
    #[arg(long, env = "CAPSIGHT_RERANKER_URL", global = true)]
    pub reranker_url: Option<String>,
    #[arg(long, env = "CAPSIGHT_SEARCH_URL", global = true)]
    pub search_url: Option<String>,
    #[arg(long, env = "CAPSIGHT_CLASSIFIER_URL", global = true)]
    pub classifier_url: Option<String>,
    /// Query Shodan, VirusTotal (VT_API_KEY) and AbuseIPDB (ABUSEIPDB_API_KEY).
    #[arg(long, global = true)]
    pub live_intel: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Dense,
    Hybrid,
}

impl From<ModeArg> for RetrievalMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Dense => RetrievalMode::DenseOnly,
            ModeArg::Hybrid => RetrievalMode::Hybrid,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analyze a capture, index it and print the session id.
    Ingest { pcap: PathBuf },
    /// Answer a question over a session (`latest` for the newest).
    Query {
        session: String,
        question: String,
        #[arg(long, value_enum, default_value_t = ModeArg::Hybrid)]
        mode: ModeArg,
        /// Also print the evidence bundle.
        #[arg(long)]
        evidence: bool,
    },
    /// Print a session's enriched interpretation report.
    Report { session: String },
    /// Run the dense versus hybrid benchmark over a JSONL QA set.
    Bench {
        qa: PathBuf,
        /// Session answering every question (default: latest).
        #[arg(long, default_value = "latest")]
        session: String,
        /// Also write table1.csv, table2.csv, rows.csv and bench.md here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Column label, usually the chat model name.
        #[arg(long, default_value = "capsight")]
        label: String,
    },
    /// List indexed sessions, oldest first.
    Sessions,
    /// Serve the HTTP API.
    Serve {
        #[arg(long, env = "CAPSIGHT_LISTEN", default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        /// Upload size cap in MB.
        #[arg(long, default_value_t = 256)]
        max_upload_mb: usize,
    },
}

impl Cli {
    pub fn service_config(&self) -> ServiceConfig {
        let mut cfg = ServiceConfig::offline(&self.data_dir);
        cfg.offline = self.offline;
        if let Some(f) = &self.fixtures {
            cfg.fixtures = f.clone();
        }
        cfg.lenient = self.lenient;
        cfg.retained = self.retain.max(1);
        cfg.endpoints = Endpoints {
            classifier: self.classifier_url.clone(),
            embedder: self.embedder_url.clone(),
            chat: self.chat_url.clone(),
            reranker: self.reranker_url.clone(),
            search: self.search_url.clone(),
            live_intel: self.live_intel,
        };
        cfg
    }
}

fn json_line<T: serde::Serialize>(v: &T) -> Result<String, ServiceError> {
    serde_json::to_string_pretty(v).map_err(|e| ServiceError::Internal(e.to_string()))
}

/// Runs one verb, writing results to `out`.
pub fn execute(cli: &Cli, out: &mut dyn std::io::Write) -> Result<(), ServiceError> {
    let svc = Service::open(cli.service_config())?;
    let io = |e: std::io::Error| ServiceError::Internal(e.to_string());
    match &cli.command {
        Command::Ingest { pcap } => {
            let o = svc.ingest(pcap)?;
            if o.reused {
                log::info!("inputs unchanged; reusing session {}", o.session_id);
            }
            for id in &o.evicted {
                log::info!("evicted session {id}");
            }
            writeln!(out, "{}", o.session_id).map_err(io)?;
        }
        Command::Query {
            session,
            question,
            mode,
            evidence,
        } => {
            let (rec, bundle) = svc.query(session, question, (*mode).into())?;
            let text = if *evidence {
                json_line(&serde_json::json!({"answer": rec, "evidence": bundle}))?
            } else {
                json_line(&rec)?
            };
            writeln!(out, "{text}").map_err(io)?;
        }
        Command::Report { session } => {
            write!(out, "{}", svc.report(session)?).map_err(io)?;
        }
        Command::Sessions => {
            writeln!(out, "{}", json_line(&svc.sessions()?)?).map_err(io)?;
        }
        Command::Bench {
            qa,
            session,
            out: dir,
            label,
        } => {
            let pairs = load_qa_set(qa)?;
            let id = svc.resolve(session)?;
            let retriever = open_session(svc.index(), Some(&id))?;
            let responder = AgentResponder::new().with_default(retriever, svc.clients(), &svc.config().agent);
            let scorer = capsight::corpus::HashingEmbedder::default();
            let report = run_benchmark(&pairs, &responder, &scorer, label, None)?;
            if let Some(dir) = dir {
                std::fs::create_dir_all(dir).map_err(io)?;
                for (name, body) in [
                    ("table1.csv", report.table1_csv()),
                    ("table2.csv", report.table2_csv()),
                    ("rows.csv", report.rows_csv()),
                    ("bench.md", report.to_markdown()),
                ] {
                    std::fs::write(dir.join(name), body).map_err(io)?;
                }
            }
            write!(out, "{}", report.to_markdown()).map_err(io)?;
        }
        Command::Serve { listen, max_upload_mb } => {
            let max = max_upload_mb.saturating_mul(1024 * 1024);
            server::run_blocking(*listen, Arc::new(svc), max).map_err(io)?;
        }
    }
    Ok(())
}

/// Parses arguments, runs the verb and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    match execute(&cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
