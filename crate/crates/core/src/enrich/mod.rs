//! Threat-intelligence enrichment of public IPs.
//!
//! Only globally routable addresses are ever looked up ([`is_public`]).
//! [`IntelClient`] queries VirusTotal, Shodan InternetDB and AbuseIPDB
//! (live, or from recorded fixtures), merges the answers into an
//! [`IntelRecord`] and isolates per-provider failures.
//!
//! ```no_run
//! use capsight::enrich::{IntelClient, annotate_report, find_public_ips};
//! # fn demo(report: capsight::features::InterpretationReport) {
//! let client = IntelClient::fixtures("fixtures/intel");
//! let enriched = client.enrich_report(report);
//! println!("{}", enriched.render());
//! # }
//! ```

mod cache;
mod providers;
mod public_ip;
mod ratelimit;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;
use std::net::IpAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::features::{ClassLabel, InterpretationReport, ReportSection};
use crate::flow::{FlowAssembly, ReputationSource, ReputationTag};
use crate::transport::HttpTransport;

pub use cache::{day_of, IntelCache};
pub use providers::{
    decode_response, FixtureProvider, IntelProvider, LiveProvider, Provider, ProviderData, ProviderError,
};
pub use public_ip::{find_public_ips, is_public, public_ips_in_flows};
pub use ratelimit::TokenBucket;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LookupMode {
    Live,
    Fixture,
}

/// Merged intelligence for one IP.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntelRecord {
    pub ip: IpAddr,
    pub vt_malicious_count: Option<u32>,
    pub shodan_ports: BTreeSet<(u16, String)>,
    pub shodan_tags: BTreeSet<String>,
    pub shodan_cves: BTreeSet<String>,
    pub abuse_confidence: Option<u8>,
    pub fetched_at: i64,
    /// `"Provider: reason"` for each provider that failed.
    pub provider_errors: Vec<String>,
}

impl IntelRecord {
    pub fn empty(ip: IpAddr, fetched_at: i64) -> Self {
        Self {
            ip,
            vt_malicious_count: None,
            shodan_ports: BTreeSet::new(),
            shodan_tags: BTreeSet::new(),
            shodan_cves: BTreeSet::new(),
            abuse_confidence: None,
            fetched_at,
            provider_errors: Vec::new(),
        }
    }

    pub fn merge(&mut self, data: ProviderData) {
        match data {
            ProviderData::VirusTotal { malicious } => self.vt_malicious_count = Some(malicious),
            ProviderData::Shodan { ports, tags, cves } => {
                self.shodan_ports.extend(ports);
                self.shodan_tags.extend(tags);
                self.shodan_cves.extend(cves);
            }
            ProviderData::AbuseIpdb { abuse_confidence } => self.abuse_confidence = Some(abuse_confidence.min(100)),
        }
    }

    pub fn reputation(&self) -> Option<ReputationTag> {
        self.abuse_confidence
            .map(|c| ReputationTag::from_confidence(ReputationSource::AbuseIpdb, c))
    }

    /// The "Threat intelligence" block inserted into a metadata section.
    pub fn render_block(&self) -> String {
        let mut t = String::new();
        let _ = writeln!(t, "Threat intelligence: {}", self.ip);
        if let Some(n) = self.vt_malicious_count {
            let _ = writeln!(t, "  VirusTotal: flagged malicious by {n} engines");
        }
        if !self.shodan_ports.is_empty() || !self.shodan_tags.is_empty() || !self.shodan_cves.is_empty() {
            let list = |v: Vec<String>| if v.is_empty() { "none".to_string() } else { v.join(", ") };
            let _ = writeln!(
                t,
                "  Shodan: open ports {}; tags {}; CVEs {}",
                list(self.shodan_ports.iter().map(|(p, tr)| format!("{p}/{tr}")).collect()),
                list(self.shodan_tags.iter().cloned().collect()),
                list(self.shodan_cves.iter().cloned().collect()),
            );
        }
        if let Some(tag) = self.reputation() {
            let _ = writeln!(t, "  AbuseIPDB: abuse confidence {} ({:?})", tag.abuse_confidence, tag.verdict);
        }
        for e in &self.provider_errors {
            let _ = writeln!(t, "  Unavailable: {e}");
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IntelError {
    #[error("{0} is not a public address; lookup refused")]
    NotPublic(IpAddr),
    #[error("no intel fixture for {0}")]
    NoFixtureForIp(IpAddr),
    #[error("all providers failed for {ip}: {}", errors.join("; "))]
    AllProvidersFailed { ip: IpAddr, errors: Vec<String> },
}

/// Provider set plus cache, rate limits and parallelism.
pub struct IntelClient {
    mode: LookupMode,
    providers: Vec<Arc<dyn IntelProvider>>,
    limiters: BTreeMap<Provider, Arc<TokenBucket>>,
    cache: Option<IntelCache>,
    parallelism: usize,
    clock: Arc<dyn Fn() -> i64 + Send + Sync>,
    calls: Mutex<Vec<(Provider, IpAddr)>>,
}

impl IntelClient {
    pub fn new(mode: LookupMode, providers: Vec<Arc<dyn IntelProvider>>) -> Self {
        let limiters = match mode {
            LookupMode::Live => providers
                .iter()
                .map(|p| (p.provider(), Arc::new(TokenBucket::per_minute(4))))
                .collect(),
            LookupMode::Fixture => BTreeMap::new(),
        };
        Self {
            mode,
            providers,
            limiters,
            cache: None,
            parallelism: 4,
            clock: Arc::new(|| chrono::Utc::now().timestamp()),
            calls: Mutex::new(Vec::new()),
        }
    }

    /// Fixture mode over `{root}/{provider}/{ip}.json`.
    pub fn fixtures(root: impl Into<PathBuf>) -> Self {
        Self::new(LookupMode::Fixture, FixtureProvider::all(root))
    }

    /// Live mode for all three providers, keys from the environment.
    /// Providers without a key are left out.
    pub fn live(transport: Arc<dyn HttpTransport>) -> Self {
        let mut providers: Vec<Arc<dyn IntelProvider>> = Vec::new();
        for p in Provider::ALL {
            let client = LiveProvider::from_env(p, transport.clone());
            let keyed = match p {
                Provider::Shodan => true,
                Provider::VirusTotal => std::env::var("VT_API_KEY").is_ok_and(|k| !k.is_empty()),
                Provider::AbuseIpdb => std::env::var("ABUSEIPDB_API_KEY").is_ok_and(|k| !k.is_empty()),
            };
            if keyed {
                providers.push(Arc::new(client));
            }
        }
        Self::new(LookupMode::Live, providers)
    }

    pub fn mode(&self) -> LookupMode {
        self.mode
    }

    pub fn with_cache(mut self, cache: IntelCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_parallelism(mut self, n: usize) -> Self {
        self.parallelism = n.max(1);
        self
    }

    pub fn with_rate_limit(mut self, provider: Provider, bucket: TokenBucket) -> Self {
        self.limiters.insert(provider, Arc::new(bucket));
        self
    }

    pub fn without_rate_limits(mut self) -> Self {
        self.limiters.clear();
        self
    }

    /// Fixed clock, in epoch seconds.
    pub fn with_clock(mut self, clock: impl Fn() -> i64 + Send + Sync + 'static) -> Self {
        self.clock = Arc::new(clock);
        self
    }

    /// Provider calls actually issued (cache hits excluded).
    pub fn calls(&self) -> Vec<(Provider, IpAddr)> {
        self.calls.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn fetch_one(&self, p: &dyn IntelProvider, ip: IpAddr, day: i64) -> Result<ProviderData, ProviderError> {
        let which = p.provider();
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(ip, which, day)) {
            return Ok(hit);
        }
        if let Some(b) = self.limiters.get(&which) {
            b.acquire();
        }
        self.calls.lock().unwrap_or_else(|e| e.into_inner()).push((which, ip));
        let data = p.fetch(ip)?;
        if let Some(c) = &self.cache {
            if let Err(e) = c.put(ip, which, day, &data) {
                log::warn!("intel cache write failed for {ip}: {e}");
            }
        }
        Ok(data)
    }

    /// Queries every provider for `ip` and merges the results.
    pub fn lookup(&self, ip: IpAddr) -> Result<IntelRecord, IntelError> {
        if !is_public(ip) {
            return Err(IntelError::NotPublic(ip));
        }
        let now = (self.clock)();
        let day = day_of(now);
        let mut rec = IntelRecord::empty(ip, now);
        let mut ok = 0;
        let mut missing = 0;
        for p in &self.providers {
            match self.fetch_one(p.as_ref(), ip, day) {
                Ok(d) => {
                    rec.merge(d);
                    ok += 1;
                }
                Err(ProviderError::NoFixture { .. }) => missing += 1,
                Err(e) => rec.provider_errors.push(format!("{}: {e}", p.provider())),
            }
        }
        if ok == 0 {
            return Err(match self.mode {
                LookupMode::Fixture if rec.provider_errors.is_empty() || missing > 0 => IntelError::NoFixtureForIp(ip),
                _ => IntelError::AllProvidersFailed {
                    ip,
                    errors: rec.provider_errors,
                },
            });
        }
        Ok(rec)
    }

    /// Looks up distinct IPs concurrently, at most `parallelism` at a time.
    pub fn lookup_many(&self, ips: &BTreeSet<IpAddr>) -> BTreeMap<IpAddr, Result<IntelRecord, IntelError>> {
        let list: Vec<IpAddr> = ips.iter().copied().collect();
        let mut out = BTreeMap::new();
        for batch in list.chunks(self.parallelism) {
            let results: Vec<_> = std::thread::scope(|s| {
                let handles: Vec<_> = batch.iter().map(|ip| s.spawn(move || (*ip, self.lookup(*ip)))).collect();
                handles.into_iter().map(|h| h.join().expect("lookup thread panicked")).collect()
            });
            out.extend(results);
        }
        out
    }

    /// Looks up every public IP in the report's metadata and annotates it.
    /// IPs without intel are left out of the report.
    pub fn enrich_report(&self, report: InterpretationReport) -> EnrichedReport {
        let by_label = find_public_ips(&report);
        let all: BTreeSet<IpAddr> = by_label.values().flatten().copied().collect();
        let records = self.lookup_many(&all);
        let mut intel: BTreeMap<ClassLabel, Vec<IntelRecord>> = BTreeMap::new();
        for (label, ips) in by_label {
            for ip in ips {
                match &records[&ip] {
                    Ok(r) => intel.entry(label).or_default().push(r.clone()),
                    Err(e) => log::info!("no intel for {ip}: {e}"),
                }
            }
        }
        annotate_report(report, intel)
    }

    /// Attaches AbuseIPDB reputation to flow endpoints that are public.
    pub fn annotate_flows(&self, flows: &mut FlowAssembly) -> BTreeMap<IpAddr, IntelRecord> {
        let records: BTreeMap<IpAddr, IntelRecord> = self
            .lookup_many(&public_ips_in_flows(flows))
            .into_iter()
            .filter_map(|(ip, r)| r.ok().map(|r| (ip, r)))
            .collect();
        flows.annotate_reputation(reputation_lookup(&records));
        records
    }
}

/// A reputation lookup for [`FlowAssembly::annotate_reputation`].
pub fn reputation_lookup(records: &BTreeMap<IpAddr, IntelRecord>) -> impl Fn(IpAddr) -> Option<ReputationTag> + '_ {
    move |ip| records.get(&ip).and_then(IntelRecord::reputation)
}

/// An interpretation report with intel blocks per attack label.
#[derive(Debug, Clone)]
pub struct EnrichedReport {
    pub report: InterpretationReport,
    pub intel: BTreeMap<ClassLabel, Vec<IntelRecord>>,
}

impl EnrichedReport {
    pub fn sections(&self) -> Vec<ReportSection> {
        self.report.sections_with(|label| {
            self.intel
                .get(&label)
                .map(|rs| rs.iter().map(IntelRecord::render_block).collect())
                .unwrap_or_default()
        })
    }

    pub fn render(&self) -> String {
        crate::features::render_sections(&self.sections())
    }
}

/// Pairs a report with intel. Records are ordered by IP; a report with no
/// intel renders byte-identically to the original.
pub fn annotate_report(report: InterpretationReport, intel: BTreeMap<ClassLabel, Vec<IntelRecord>>) -> EnrichedReport {
    let intel = intel
        .into_iter()
        .filter(|(label, v)| !v.is_empty() && report.per_attack.contains_key(label))
        .map(|(label, mut v)| {
            v.sort_by_key(|r| r.ip);
            v.dedup_by_key(|r| r.ip);
            (label, v)
        })
        .collect();
    EnrichedReport { report, intel }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{HttpResponse, RecordingTransport, StubTransport, TransportError};

    fn ip(s: &str) -> IpAddr {
        s.parse().unwrap()
    }

    #[test]
    fn privacy_guard_sends_nothing() {
        let t = Arc::new(RecordingTransport::new(StubTransport::unreachable()));
        let p: Arc<dyn IntelProvider> = Arc::new(LiveProvider::new(Provider::Shodan, t.clone()));
        let c = IntelClient::new(LookupMode::Live, vec![p]);
        assert_eq!(c.lookup(ip("192.168.1.5")), Err(IntelError::NotPublic(ip("192.168.1.5"))));
        assert!(t.requests().is_empty());
    }

    #[test]
    fn failure_isolation() {
        let t = Arc::new(StubTransport::new(|req| {
            if req.url.contains("internetdb") {
                Ok(HttpResponse {
                    status: 200,
                    body: br#"{"ports":[443],"tags":[],"vulns":[]}"#.to_vec(),
                })
            } else {
                Err(TransportError::Connect {
                    url: req.url.clone(),
                    message: "refused".into(),
                })
            }
        }));
        let providers: Vec<Arc<dyn IntelProvider>> = vec![
            Arc::new(
                LiveProvider::new(Provider::VirusTotal, t.clone())
                    .with_api_key("k")
                    .with_retry(crate::transport::RetryPolicy::no_backoff()),
            ),
            Arc::new(LiveProvider::new(Provider::Shodan, t.clone())),
        ];
        let c = IntelClient::new(LookupMode::Live, providers);
        let r = c.lookup(ip("8.8.8.8")).unwrap();
        assert!(r.shodan_ports.contains(&(443, "tcp".into())));
        assert_eq!(r.vt_malicious_count, None);
        assert_eq!(r.provider_errors.len(), 1);
        assert!(r.provider_errors[0].starts_with("VirusTotal:"));
    }

    #[test]
    fn cache_avoids_repeat_calls() {
        let dir = tempfile::tempdir().unwrap();
        let fixtures = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/intel");
        let c = IntelClient::fixtures(fixtures)
            .with_cache(IntelCache::new(dir.path()))
            .with_clock(|| 1_700_000_000);
        let a = c.lookup(ip("52.0.0.1")).unwrap();
        assert_eq!(c.calls().len(), 3);
        let b = c.lookup(ip("52.0.0.1")).unwrap();
        assert_eq!(a, b);
        assert_eq!(c.calls().len(), 3);
        assert_eq!(a.vt_malicious_count, Some(14));
        assert_eq!(c.lookup(ip("1.1.1.1")), Err(IntelError::NoFixtureForIp(ip("1.1.1.1"))));
    }
}
