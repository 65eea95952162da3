use std::collections::BTreeSet;
use std::fmt;
use std::net::IpAddr;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::transport::{HttpRequest, HttpTransport, RetryPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Provider {
    VirusTotal,
    Shodan,
    AbuseIpdb,
}

impl Provider {
    pub const ALL: [Provider; 3] = [Provider::VirusTotal, Provider::Shodan, Provider::AbuseIpdb];

    pub fn name(self) -> &'static str {
        match self {
            Provider::VirusTotal => "VirusTotal",
            Provider::Shodan => "Shodan",
            Provider::AbuseIpdb => "AbuseIPDB",
        }
    }

    /// Directory name under a fixture or cache root.
    pub fn slug(self) -> &'static str {
        match self {
            Provider::VirusTotal => "virustotal",
            Provider::Shodan => "shodan",
            Provider::AbuseIpdb => "abuseipdb",
        }
    }
}

impl fmt::Display for Provider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What one provider contributed to an intel record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "provider")]
pub enum ProviderData {
    VirusTotal {
        malicious: u32,
    },
    Shodan {
        ports: BTreeSet<(u16, String)>,
        tags: BTreeSet<String>,
        cves: BTreeSet<String>,
    },
    AbuseIpdb {
        abuse_confidence: u8,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("no fixture for {ip}")]
    NoFixture { ip: IpAddr },
    #[error("missing API key ({0})")]
    MissingKey(&'static str),
    #[error("{0}")]
    Request(String),
    #[error("unexpected response: {0}")]
    Decode(String),
}

/// One threat-intelligence source.
pub trait IntelProvider: Send + Sync {
    fn provider(&self) -> Provider;
    fn fetch(&self, ip: IpAddr) -> Result<ProviderData, ProviderError>;
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ShodanPort {
    Bare(u16),
    Full { port: u16, transport: String },
}

#[derive(Deserialize)]
struct ShodanBody {
    #[serde(default)]
    ports: Vec<ShodanPort>,
    #[serde(default)]
    tags: Vec<String>,
    #[serde(default)]
    vulns: Vec<String>,
}

#[derive(Deserialize)]
struct VtStats {
    #[serde(default)]
    malicious: u32,
}

#[derive(Deserialize)]
struct VtAttributes {
    last_analysis_stats: VtStats,
}

#[derive(Deserialize)]
struct VtData {
    attributes: VtAttributes,
}

#[derive(Deserialize)]
struct VtBody {
    data: VtData,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct AbuseData {
    abuse_confidence_score: u8,
}

#[derive(Deserialize)]
struct AbuseBody {
    data: AbuseData,
}

/// Decodes a provider's native JSON response.
///
/// Shodan InternetDB lists bare port numbers, which are taken as TCP;
/// `{"port": .., "transport": ..}` objects are accepted as well.
pub fn decode_response(provider: Provider, body: &[u8]) -> Result<ProviderData, ProviderError> {
    let err = |e: serde_json::Error| ProviderError::Decode(e.to_string());
    Ok(match provider {
        Provider::Shodan => {
            let b: ShodanBody = serde_json::from_slice(body).map_err(err)?;
            ProviderData::Shodan {
                ports: b
                    .ports
                    .into_iter()
                    .map(|p| match p {
                        ShodanPort::Bare(port) => (port, "tcp".to_string()),
                        ShodanPort::Full { port, transport } => (port, transport.to_lowercase()),
                    })
                    .collect(),
                tags: b.tags.into_iter().collect(),
                cves: b.vulns.into_iter().collect(),
            }
        }
        Provider::VirusTotal => {
            let b: VtBody = serde_json::from_slice(body).map_err(err)?;
            ProviderData::VirusTotal {
                malicious: b.data.attributes.last_analysis_stats.malicious,
            }
        }
        Provider::AbuseIpdb => {
            let b: AbuseBody = serde_json::from_slice(body).map_err(err)?;
            ProviderData::AbuseIpdb {
                abuse_confidence: b.data.abuse_confidence_score.min(100),
            }
        }
    })
}

/// Live HTTP client for one provider.
pub struct LiveProvider {
    provider: Provider,
    transport: Arc<dyn HttpTransport>,
    base_url: String,
    api_key: Option<String>,
    retry: RetryPolicy,
}

impl LiveProvider {
    pub fn new(provider: Provider, transport: Arc<dyn HttpTransport>) -> Self {
        let base_url = match provider {
            Provider::Shodan => "https://internetdb.shodan.io",
            Provider::VirusTotal => "https://www.virustotal.com",
            Provider::AbuseIpdb => "https://api.abuseipdb.com",
        };
        Self {
            provider,
            transport,
            base_url: base_url.into(),
            api_key: None,
            retry: RetryPolicy::default(),
        }
    }

    /// Reads `VT_API_KEY` / `ABUSEIPDB_API_KEY` for credentialed providers.
    pub fn from_env(provider: Provider, transport: Arc<dyn HttpTransport>) -> Self {
        let key = match provider {
            Provider::VirusTotal => std::env::var("VT_API_KEY").ok(),
            Provider::AbuseIpdb => std::env::var("ABUSEIPDB_API_KEY").ok(),
            Provider::Shodan => None,
        };
        Self {
            api_key: key.filter(|k| !k.is_empty()),
            ..Self::new(provider, transport)
        }
    }

    pub fn with_base_url(mut self, url: impl Into<String>) -> Self {
        self.base_url = url.into().trim_end_matches('/').to_string();
        self
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn request(&self, ip: IpAddr) -> Result<HttpRequest, ProviderError> {
        Ok(match self.provider {
            Provider::Shodan => HttpRequest::get(format!("{}/{ip}", self.base_url)),
            Provider::VirusTotal => {
                let key = self.api_key.as_ref().ok_or(ProviderError::MissingKey("VT_API_KEY"))?;
                HttpRequest::get(format!("{}/api/v3/ip_addresses/{ip}", self.base_url)).header("x-apikey", key)
            }
            Provider::AbuseIpdb => {
                let key = self
                    .api_key
                    .as_ref()
                    .ok_or(ProviderError::MissingKey("ABUSEIPDB_API_KEY"))?;
                HttpRequest::get(format!("{}/api/v2/check?ipAddress={ip}", self.base_url))
                    .header("Key", key)
                    .header("Accept", "application/json")
            }
        })
    }
}

impl IntelProvider for LiveProvider {
    fn provider(&self) -> Provider {
        self.provider
    }

    fn fetch(&self, ip: IpAddr) -> Result<ProviderData, ProviderError> {
        let req = self.request(ip)?;
        let resp = self
            .retry
            .send(self.transport.as_ref(), &req)
            .map_err(|e| ProviderError::Request(e.to_string()))?;
        decode_response(self.provider, &resp.body)
    }
}

/// Reads recorded responses from `{root}/{provider}/{ip}.json`. Never
/// touches the network.
pub struct FixtureProvider {
    provider: Provider,
    root: PathBuf,
}

impl FixtureProvider {
    pub fn new(provider: Provider, root: impl Into<PathBuf>) -> Self {
        Self {
            provider,
            root: root.into(),
        }
    }

    /// One fixture provider per source, all under `root`.
    pub fn all(root: impl Into<PathBuf>) -> Vec<Arc<dyn IntelProvider>> {
        let root = root.into();
        Provider::ALL
            .into_iter()
            .map(|p| Arc::new(FixtureProvider::new(p, root.clone())) as Arc<dyn IntelProvider>)
            .collect()
    }
}

impl IntelProvider for FixtureProvider {
    fn provider(&self) -> Provider {
        self.provider
    }

    fn fetch(&self, ip: IpAddr) -> Result<ProviderData, ProviderError> {
        let path = self.root.join(self.provider.slug()).join(format!("{ip}.json"));
        let body = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(ProviderError::NoFixture { ip }),
            Err(e) => return Err(ProviderError::Request(format!("{}: {e}", path.display()))),
        };
        decode_response(self.provider, &body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_native_shapes() {
        let shodan = decode_response(
            Provider::Shodan,
            br#"{"ip":"1.2.3.4","ports":[443,{"port":53,"transport":"UDP"}],"tags":["cloud"],"vulns":["CVE-2021-1"]}"#,
        )
        .unwrap();
        match shodan {
            ProviderData::Shodan { ports, tags, cves } => {
                assert!(ports.contains(&(443, "tcp".into())));
                assert!(ports.contains(&(53, "udp".into())));
                assert!(tags.contains("cloud"));
                assert!(cves.contains("CVE-2021-1"));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(
            decode_response(
                Provider::VirusTotal,
                br#"{"data":{"attributes":{"last_analysis_stats":{"malicious":14,"harmless":50}}}}"#
            )
            .unwrap(),
            ProviderData::VirusTotal { malicious: 14 }
        );
        assert_eq!(
            decode_response(Provider::AbuseIpdb, br#"{"data":{"abuseConfidenceScore":90}}"#).unwrap(),
            ProviderData::AbuseIpdb { abuse_confidence: 90 }
        );
        assert!(decode_response(Provider::AbuseIpdb, b"{}").is_err());
    }

    #[test]
    fn missing_key_sends_nothing() {
        let t = Arc::new(crate::transport::RecordingTransport::new(crate::transport::StubTransport::unreachable()));
        let p = LiveProvider::new(Provider::VirusTotal, t.clone());
        assert_eq!(
            p.fetch("8.8.8.8".parse().unwrap()),
            Err(ProviderError::MissingKey("VT_API_KEY"))
        );
        assert!(t.requests().is_empty());
    }
}
