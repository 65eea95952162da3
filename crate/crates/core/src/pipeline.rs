//! End-to-end analysis: capture → packets, protocol logs, flows, features,
//! classification, report, enrichment → the four corpus artifacts.
//!
//! [`Clients`] bundles the pluggable back ends. [`Clients::offline`] wires
//! deterministic fixture implementations only, so nothing leaves the host.

use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::agent::{Agent, AgentConfig, ChatClient, FixtureChat, FixtureSearch, RemoteChat, RemoteSearch, SearchClient};
use crate::capture::{
    generate_protocol_logs, logs_to_jsonl, packets_to_jsonl, parse_bytes, parse_capture, parse_capture_lenient,
    PacketRecord, ProtocolLogs, RawCapture,
};
use crate::corpus::{Artifacts, CorpusIndex, Embedder, HashingEmbedder, IngestOutcome, RemoteEmbedder, SemanticConfig};
use crate::enrich::{EnrichedReport, IntelClient, IntelRecord};
use crate::features::{
    build_report, classify_rows, extract_features, predictions_csv, ClassifiedRow, Classifier, FallbackClassifier,
    ReferenceRules, RemoteModel,
};
use crate::flow::{assemble_flows, render_narratives, FlowAssembly, OuiTable};
use crate::retrieval::{RemoteCrossEncoder, Reranker, Retriever};
use crate::transport::{HttpTransport, UreqTransport};
use crate::Result;

/// Fixture tree shipped with the crate.
pub fn default_fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Pluggable back ends for one run.
#[derive(Clone)]
pub struct Clients {
    pub classifier: Arc<dyn Classifier>,
    pub intel: Option<Arc<IntelClient>>,
    pub embedder: Arc<dyn Embedder>,
    pub chat: Arc<dyn ChatClient>,
    pub search: Option<Arc<dyn SearchClient>>,
    pub reranker: Option<Arc<dyn Reranker>>,
    pub oui: Arc<OuiTable>,
    pub offline: bool,
}

/// Base URLs of remote services. `None` leaves the offline default in place.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Endpoints {
    pub classifier: Option<String>,
    pub embedder: Option<String>,
    pub chat: Option<String>,
    pub reranker: Option<String>,
    pub search: Option<String>,
    /// Query the public threat-intelligence providers.
    pub live_intel: bool,
}

impl Clients {
    /// Rule classifier, fixture intel, hashing embedder, fixture chat and
    /// search, lexical reranking.
    pub fn offline(fixtures: impl AsRef<Path>) -> Self {
        let fixtures = fixtures.as_ref();
        let search = FixtureSearch::load(fixtures.join("search").join("results.json"))
            .map(|s| Arc::new(s) as Arc<dyn SearchClient>)
            .ok();
        Self {
            classifier: Arc::new(ReferenceRules::default()),
            intel: Some(Arc::new(IntelClient::fixtures(fixtures.join("intel")))),
            embedder: Arc::new(HashingEmbedder::default()),
            chat: Arc::new(FixtureChat::default()),
            search,
            reranker: None,
            oui: Arc::new(OuiTable::builtin()),
            offline: true,
        }
    }

    /// Offline defaults with the configured endpoints swapped in. Offline
    /// mode keeps the fixture clients and ignores every endpoint.
    pub fn with_endpoints(self, endpoints: &Endpoints, offline: bool) -> Result<Self> {
        self.with_endpoints_via(endpoints, Arc::new(UreqTransport::default()), offline)
    }

    /// [`Clients::with_endpoints`] over a caller-supplied transport.
    pub fn with_endpoints_via(
        mut self,
        endpoints: &Endpoints,
        transport: Arc<dyn HttpTransport>,
        offline: bool,
    ) -> Result<Self> {
        if offline {
            if *endpoints != Endpoints::default() {
                log::warn!("offline mode: ignoring configured service endpoints");
            }
            self.offline = true;
            return Ok(self);
        }
        self.offline = false;
        if let Some(url) = &endpoints.classifier {
            self.classifier = Arc::new(FallbackClassifier {
                primary: RemoteModel::new(transport.clone(), url),
                fallback: ReferenceRules::default(),
            });
        }
        if let Some(url) = &endpoints.embedder {
            self.embedder = Arc::new(RemoteEmbedder::connect(url, transport.clone())?);
        }
        if let Some(url) = &endpoints.chat {
            self.chat = Arc::new(RemoteChat::new(url, transport.clone()));
        }
        if let Some(url) = &endpoints.reranker {
            self.reranker = Some(Arc::new(RemoteCrossEncoder::new(url, transport.clone())));
        }
        if let Some(url) = &endpoints.search {
            self.search = Some(Arc::new(RemoteSearch::new(url, transport.clone())));
        }
        if endpoints.live_intel {
            self.intel = Some(Arc::new(IntelClient::live(transport)));
        }
        Ok(self)
    }

    /// An agent over a loaded session.
    pub fn agent(&self, retriever: Arc<Retriever>, cfg: AgentConfig) -> Agent {
        let mut a = Agent::new(retriever, self.embedder.clone(), self.chat.clone()).with_config(cfg);
        if let Some(s) = &self.search {
            a = a.with_search(s.clone());
        }
        if let Some(r) = &self.reranker {
            a = a.with_reranker(r.clone());
        }
        a
    }
}

/// Everything derived from one capture.
pub struct Analysis {
    pub capture: RawCapture,
    pub packets: Vec<PacketRecord>,
    pub logs: ProtocolLogs,
    pub flows: FlowAssembly,
    pub classified: Vec<ClassifiedRow>,
    pub report: EnrichedReport,
    pub flow_intel: Vec<IntelRecord>,
    pub predictions_csv: String,
    pub artifacts: Artifacts,
}

fn analyze_records(capture: RawCapture, packets: Vec<PacketRecord>, clients: &Clients) -> Result<Analysis> {
    let logs = generate_protocol_logs(&packets);
    let mut flows = assemble_flows(&packets);
    flows.resolve_vendors(&clients.oui);
    let rows = extract_features(&packets, &flows);
    let classified = classify_rows(rows, clients.classifier.as_ref())?;
    let report = build_report(&classified, &packets, &flows);
    let (report, flow_intel) = match &clients.intel {
        Some(intel) => {
            let flow_intel: Vec<IntelRecord> = intel.annotate_flows(&mut flows).into_values().collect();
            (intel.enrich_report(report), flow_intel)
        }
        None => (crate::enrich::annotate_report(report, Default::default()), Vec::new()),
    };
    let artifacts = Artifacts {
        protocol_logs: logs_to_jsonl(&logs),
        report: report.render(),
        flow_summary: render_narratives(&flows),
        packets: packets_to_jsonl(&packets),
    };
    Ok(Analysis {
        predictions_csv: predictions_csv(&classified, &flows),
        capture,
        packets,
        logs,
        flows,
        classified,
        report,
        flow_intel,
        artifacts,
    })
}

/// Analyzes a capture file. Truncated captures are an error unless
/// `lenient` is set, in which case complete frames are kept.
pub fn analyze_path(path: impl AsRef<Path>, clients: &Clients, lenient: bool) -> Result<Analysis> {
    let (capture, packets) = if lenient {
        parse_capture_lenient(path)?
    } else {
        parse_capture(path)?
    };
    analyze_records(capture, packets, clients)
}

pub fn analyze_bytes(bytes: &[u8], clients: &Clients) -> Result<Analysis> {
    let (capture, packets) = parse_bytes(bytes)?;
    analyze_records(capture, packets, clients)
}

/// Analyzes and ingests in one go.
pub fn ingest_capture(
    path: impl AsRef<Path>,
    index: &CorpusIndex,
    clients: &Clients,
    lenient: bool,
) -> Result<(Analysis, IngestOutcome)> {
    let analysis = analyze_path(path, clients, lenient)?;
    let outcome = index.ingest(&analysis.artifacts, clients.embedder.as_ref(), SemanticConfig::default())?;
    Ok((analysis, outcome))
}

/// Public IPs seen in flows, for callers that want to list them.
pub fn flow_public_ips(analysis: &Analysis) -> Vec<IpAddr> {
    crate::enrich::public_ips_in_flows(&analysis.flows).into_iter().collect()
}

/// Loads a session and builds its retriever.
pub fn open_session(index: &CorpusIndex, session_id: Option<&str>) -> Result<Arc<Retriever>> {
    let store = match session_id {
        Some(id) => index.load(id)?,
        None => index.load_latest()?,
    };
    Ok(Arc::new(Retriever::new(Arc::new(store))))
}
