use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use capsight::agent::{Agent, AgentConfig, AnswerRecord, ChatClient, SearchClient, SourceClass};
use capsight::corpus::{CorpusIndex, EmbedError, Embedder, IngestOutcome, SessionIndexFile};
use capsight::pipeline::{ingest_capture, open_session, Clients, Endpoints};
use capsight::retrieval::{EvidenceBundle, RetrievalConfig, RetrievalError, RetrievalMode};
use capsight::transport::{HttpTransport, LoopbackOnly, UreqTransport};
use capsight::Error;

use crate::tracking::{self, Tracked};

/// Everything the CLI verbs and the HTTP service need.
#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub offline: bool,
    pub fixtures: PathBuf,
    pub endpoints: Endpoints,
    pub agent: AgentConfig,
    pub retained: usize,
    /// Keep the complete frames of truncated captures instead of failing.
    pub lenient: bool,
}

impl ServiceConfig {
    pub fn offline(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            offline: true,
            fixtures: capsight::pipeline::default_fixture_dir(),
            endpoints: Endpoints::default(),
            agent: AgentConfig::default(),
            retained: capsight::corpus::DEFAULT_RETAINED,
            lenient: false,
        }
    }
}

/// Failure classes shared by exit codes and HTTP statuses.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ServiceError {
    #[error("{0}")]
    BadInput(String),
    #[error("session not found: {0}")]
    NotFound(String),
    #[error("{client} unavailable: {message}")]
    Unavailable { client: String, message: String },
    #[error("{0}")]
    Internal(String),
}

impl ServiceError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ServiceError::BadInput(_) | ServiceError::NotFound(_) => 1,
            ServiceError::Unavailable { .. } | ServiceError::Internal(_) => 2,
        }
    }
}

impl From<Error> for ServiceError {
    fn from(e: Error) -> Self {
        let unavailable = |client: &str, m: String| ServiceError::Unavailable {
            client: client.into(),
            message: m,
        };
        match e {
            Error::UnknownSession(id) => ServiceError::NotFound(id),
            Error::NoSession => ServiceError::NotFound("no session has been ingested".into()),
            Error::Capture(c) => ServiceError::BadInput(c.to_string()),
            Error::Malformed { .. } | Error::InvalidArgument(_) | Error::Metric(_) => {
                ServiceError::BadInput(e.to_string())
            }
            Error::Io { ref source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                ServiceError::BadInput(e.to_string())
            }
            Error::Embed(EmbedError::EmbedderUnavailable(m))
            | Error::Retrieval(RetrievalError::Embed(EmbedError::EmbedderUnavailable(m))) => {
                unavailable("embedder", m)
            }
            Error::Embed(EmbedError::EmptyText) => ServiceError::BadInput("the capture produced no text to index".into()),
            other => ServiceError::Internal(other.to_string()),
        }
    }
}

pub struct Service {
    index: CorpusIndex,
    clients: Clients,
    cfg: ServiceConfig,
    agents: Mutex<HashMap<(String, RetrievalMode), Arc<Agent>>>,
    ingest_gate: Mutex<()>,
}

pub fn parse_mode(s: &str) -> Result<RetrievalMode, ServiceError> {
    match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
        "dense" | "denseonly" => Ok(RetrievalMode::DenseOnly),
        "hybrid" => Ok(RetrievalMode::Hybrid),
        _ => Err(ServiceError::BadInput(format!("unknown mode {s:?} (expected dense or hybrid)"))),
    }
}

impl Service {
    pub fn open(cfg: ServiceConfig) -> Result<Self, ServiceError> {
        Self::open_via(cfg, Arc::new(UreqTransport::default()))
    }

    /// [`Service::open`] over a caller-supplied transport. Offline services
    /// only ever see a loopback-restricted view of it.
    pub fn open_via(cfg: ServiceConfig, transport: Arc<dyn HttpTransport>) -> Result<Self, ServiceError> {
        let index = CorpusIndex::open(&cfg.data_dir)?.with_retained(cfg.retained);
        let transport: Arc<dyn HttpTransport> = if cfg.offline {
            Arc::new(LoopbackOnly::new(transport))
        } else {
            transport
        };
        let mut clients = Clients::offline(&cfg.fixtures).with_endpoints_via(&cfg.endpoints, transport, cfg.offline)?;
        if !cfg.offline {
            clients.chat = Arc::new(Tracked::<dyn ChatClient>::new("chat", clients.chat.clone()));
            clients.embedder = Arc::new(Tracked::<dyn Embedder>::new("embedder", clients.embedder.clone()));
            clients.search = clients
                .search
                .take()
                .map(|s| Arc::new(Tracked::<dyn SearchClient>::new("search", s)) as Arc<dyn SearchClient>);
        }
        Ok(Self {
            index,
            clients,
            cfg,
            agents: Mutex::new(HashMap::new()),
            ingest_gate: Mutex::new(()),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.cfg
    }

    pub fn clients(&self) -> &Clients {
        &self.clients
    }

    pub fn index(&self) -> &CorpusIndex {
        &self.index
    }

    /// Runs the whole pipeline on a capture and indexes it. Ingests through
    /// one service run one at a time; another process holding the store
    /// lock still fails fast.
    pub fn ingest(&self, pcap: &Path) -> Result<IngestOutcome, ServiceError> {
        let _gate = self.ingest_gate.lock().unwrap_or_else(|e| e.into_inner());
        tracking::reset();
        let out = ingest_capture(pcap, &self.index, &self.clients, self.cfg.lenient).map(|(_, o)| o);
        out.map_err(|e| match (ServiceError::from(e), tracking::take()) {
            (ServiceError::Internal(_), Some((client, message))) => ServiceError::Unavailable {
                client: client.into(),
                message,
            },
            (e, _) => e,
        })
    }

    pub fn sessions(&self) -> Result<SessionIndexFile, ServiceError> {
        Ok(self.index.read_index()?)
    }

    /// Resolves `latest` and checks the id against the index.
    pub fn resolve(&self, session: &str) -> Result<String, ServiceError> {
        let idx = self.index.read_index()?;
        let id = if session == "latest" {
            idx.latest.clone().ok_or_else(|| ServiceError::NotFound("latest".into()))?
        } else {
            session.to_string()
        };
        if idx.entries.iter().any(|e| e.session_id == id) {
            Ok(id)
        } else {
            Err(ServiceError::NotFound(session.to_string()))
        }
    }

    pub fn report(&self, session: &str) -> Result<String, ServiceError> {
        let id = self.resolve(session)?;
        Ok(self.index.artifacts(&id)?.report)
    }

    fn agent(&self, id: &str, mode: RetrievalMode) -> Result<Arc<Agent>, ServiceError> {
        let key = (id.to_string(), mode);
        if let Some(a) = self.agents.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(a.clone());
        }
        let retriever = open_session(&self.index, Some(id))?;
        let mut cfg = self.cfg.agent.clone();
        cfg.retrieval = match mode {
            RetrievalMode::DenseOnly => RetrievalConfig {
                top_k: cfg.retrieval.top_k,
                ..RetrievalConfig::dense_only()
            },
            RetrievalMode::Hybrid => RetrievalConfig {
                mode: RetrievalMode::Hybrid,
                ..cfg.retrieval
            },
        };
        let agent = Arc::new(self.clients.agent(retriever, cfg));
        let live: Vec<String> = self.index.read_index()?.entries.into_iter().map(|e| e.session_id).collect();
        let mut cache = self.agents.lock().unwrap_or_else(|e| e.into_inner());
        cache.retain(|(sid, _), _| live.contains(sid));
        cache.insert(key, agent.clone());
        Ok(agent)
    }

    /// Answers a question over one session. A dependent client failure
    /// that left the answer Insufficient is reported as unavailable.
    pub fn query(
        &self,
        session: &str,
        question: &str,
        mode: RetrievalMode,
    ) -> Result<(AnswerRecord, EvidenceBundle), ServiceError> {
        if question.trim().is_empty() {
            return Err(ServiceError::BadInput("question is empty".into()));
        }
        let id = self.resolve(session)?;
        let agent = self.agent(&id, mode)?;
        tracking::reset();
        let (rec, bundle) = agent.answer_with_evidence(question);
        if let (SourceClass::Insufficient, Some((client, message))) = (rec.source_class, tracking::take()) {
            return Err(ServiceError::Unavailable {
                client: client.into(),
                message,
            });
        }
        Ok((rec, bundle))
    }
}
