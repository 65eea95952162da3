//! Canonical bidirectional session keys and their deterministic uids.

use std::cmp::Ordering;
use std::fmt;
use std::net::IpAddr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::record::{L4Proto, PacketRecord, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Endpoint {
    pub ip: IpAddr,
    pub port: u16,
}

impl Endpoint {
    pub fn new(ip: IpAddr, port: u16) -> Self {
        Self { ip, port }
    }

    fn ip_octets(&self) -> Vec<u8> {
        match self.ip {
            IpAddr::V4(v4) => v4.octets().to_vec(),
            IpAddr::V6(v6) => v6.octets().to_vec(),
        }
    }
}

/// Orders by raw IP bytes, then port.
impl Ord for Endpoint {
    fn cmp(&self, other: &Self) -> Ordering {
        self.ip_octets()
            .cmp(&other.ip_octets())
            .then(self.port.cmp(&other.port))
    }
}

impl PartialOrd for Endpoint {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.ip {
            IpAddr::V4(ip) => write!(f, "{ip}:{}", self.port),
            IpAddr::V6(ip) => write!(f, "[{ip}]:{}", self.port),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowTransport {
    Tcp,
    Udp,
}

impl fmt::Display for FlowTransport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlowTransport::Tcp => "TCP",
            FlowTransport::Udp => "UDP",
        })
    }
}

/// Canonical 5-tuple: `ep_a <= ep_b`, so both directions share one key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowKey {
    pub ep_a: Endpoint,
    pub ep_b: Endpoint,
    pub transport: FlowTransport,
}

impl FlowKey {
    pub fn new(x: Endpoint, y: Endpoint, transport: FlowTransport) -> Self {
        let (ep_a, ep_b) = if x <= y { (x, y) } else { (y, x) };
        Self { ep_a, ep_b, transport }
    }

    /// Key of a TCP or UDP packet; `None` for anything else.
    pub fn of_packet(p: &PacketRecord) -> Option<Self> {
        let transport = match p.transport {
            L4Proto::Tcp => FlowTransport::Tcp,
            L4Proto::Udp => FlowTransport::Udp,
            _ => return None,
        };
        let src = Endpoint::new(p.ip_src?, p.src_port?);
        let dst = Endpoint::new(p.ip_dst?, p.dst_port?);
        Some(Self::new(src, dst, transport))
    }

    /// Deterministic 12-character base-36 session uid.
    ///
    /// Hashes the canonical 5-tuple together with the session's first
    /// timestamp, so re-running on the same capture reproduces every uid.
    pub fn uid(&self, first_ts: Timestamp) -> String {
        let mut hasher = Sha256::new();
        hasher.update(format!(
            "{}|{}|{}|{}",
            self.transport, self.ep_a, self.ep_b, first_ts
        ));
        let digest = hasher.finalize();
        let mut n = u64::from_be_bytes(digest[..8].try_into().unwrap()) % 36u64.pow(12);
        let mut out = [b'0'; 12];
        for slot in out.iter_mut().rev() {
            let d = (n % 36) as u8;
            *slot = if d < 10 { b'0' + d } else { b'a' + d - 10 };
            n /= 36;
        }
        String::from_utf8(out.to_vec()).unwrap()
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} <-> {} ({})", self.ep_a, self.ep_b, self.transport)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ep(s: &str) -> Endpoint {
        let sa: std::net::SocketAddr = s.parse().unwrap();
        Endpoint::new(sa.ip(), sa.port())
    }

    #[test]
    fn key_is_direction_invariant() {
        let a = FlowKey::new(ep("10.0.0.2:49152"), ep("10.0.0.1:80"), FlowTransport::Tcp);
        let b = FlowKey::new(ep("10.0.0.1:80"), ep("10.0.0.2:49152"), FlowTransport::Tcp);
        assert_eq!(a, b);
        assert_eq!(a.ep_a, ep("10.0.0.1:80"));
    }

    #[test]
    fn ordering_is_by_ip_bytes_then_port() {
        assert!(ep("9.0.0.1:1") < ep("10.0.0.1:1"));
        assert!(ep("10.0.0.1:1") < ep("10.0.0.1:2"));
    }

    #[test]
    fn uid_is_stable_and_base36() {
        let k = FlowKey::new(ep("10.0.0.2:49152"), ep("10.0.0.1:80"), FlowTransport::Tcp);
        let ts = Timestamp::from_parts(1_700_000_000, 0);
        let uid = k.uid(ts);
        assert_eq!(uid.len(), 12);
        assert!(uid.chars().all(|c| c.is_ascii_digit() || c.is_ascii_lowercase()));
        assert_eq!(uid, k.uid(ts));
        assert_ne!(uid, k.uid(Timestamp::from_parts(1_700_000_001, 0)));
    }
}
