//! Bidirectional flow reconstruction and narrative rendering.

mod narrative;
mod oui;
mod signature;

use std::collections::HashMap;
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use crate::capture::{Endpoint, FlowKey, FlowTransport, MacAddr, PacketRecord, TcpFlags, Timestamp};

pub use narrative::{render_global_summary, render_narrative, render_narratives, split_blocks, FlowNarrative};
pub use oui::{resolve_vendor, resolve_vendor_str, OuiTable};
pub use signature::{decode_flag_sequence, ConnectionSignature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReputationSource {
    AbuseIpdb,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Verdict {
    Benign,
    Suspicious,
    Malicious,
}

/// Abuse-confidence tag for one endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReputationTag {
    pub source: ReputationSource,
    pub abuse_confidence: u8,
    pub verdict: Verdict,
}

impl ReputationTag {
    /// Benign below 25, Suspicious from 25 to 74, Malicious from 75.
    pub fn from_confidence(source: ReputationSource, abuse_confidence: u8) -> Self {
        let abuse_confidence = abuse_confidence.min(100);
        let verdict = match abuse_confidence {
            0..=24 => Verdict::Benign,
            25..=74 => Verdict::Suspicious,
            _ => Verdict::Malicious,
        };
        Self {
            source,
            abuse_confidence,
            verdict,
        }
    }
}

/// One reconstructed bidirectional conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub key: FlowKey,
    pub uid: String,
    /// Source of the first packet.
    pub initiator: Endpoint,
    pub pkt_count: u64,
    pub byte_count: u64,
    pub first_ts: Timestamp,
    pub last_ts: Timestamp,
    /// Flag set of every TCP packet in order; empty for UDP.
    pub flag_seq: Vec<TcpFlags>,
    /// Deduplicated application summaries in first-seen order.
    pub app_cues: Vec<String>,
    pub ttl_min: Option<u8>,
    pub ttl_max: Option<u8>,
    pub mac_a: Option<MacAddr>,
    pub mac_b: Option<MacAddr>,
    pub mac_vendor_a: Option<String>,
    pub mac_vendor_b: Option<String>,
    pub reputation_a: Option<ReputationTag>,
    pub reputation_b: Option<ReputationTag>,
    /// Frame numbers of the member packets.
    pub frames: Vec<u32>,
}

impl FlowRecord {
    pub fn duration(&self) -> f64 {
        self.first_ts.seconds_until(self.last_ts)
    }

    pub fn responder(&self) -> Endpoint {
        if self.initiator == self.key.ep_a {
            self.key.ep_b
        } else {
            self.key.ep_a
        }
    }

    fn initiator_is_a(&self) -> bool {
        self.initiator == self.key.ep_a
    }

    pub fn initiator_mac(&self) -> Option<MacAddr> {
        if self.initiator_is_a() {
            self.mac_a
        } else {
            self.mac_b
        }
    }

    pub fn responder_mac(&self) -> Option<MacAddr> {
        if self.initiator_is_a() {
            self.mac_b
        } else {
            self.mac_a
        }
    }

    pub fn initiator_vendor(&self) -> Option<&str> {
        if self.initiator_is_a() {
            self.mac_vendor_a.as_deref()
        } else {
            self.mac_vendor_b.as_deref()
        }
    }

    pub fn responder_vendor(&self) -> Option<&str> {
        if self.initiator_is_a() {
            self.mac_vendor_b.as_deref()
        } else {
            self.mac_vendor_a.as_deref()
        }
    }

    pub fn initiator_reputation(&self) -> Option<ReputationTag> {
        if self.initiator_is_a() {
            self.reputation_a
        } else {
            self.reputation_b
        }
    }

    pub fn responder_reputation(&self) -> Option<ReputationTag> {
        if self.initiator_is_a() {
            self.reputation_b
        } else {
            self.reputation_a
        }
    }

    pub fn signature(&self) -> ConnectionSignature {
        match self.key.transport {
            FlowTransport::Udp => ConnectionSignature::Udp,
            FlowTransport::Tcp => decode_flag_sequence(&self.flag_seq),
        }
    }

    /// Fills both vendor fields from the MACs seen on the flow.
    pub fn resolve_vendors(&mut self, table: &OuiTable) {
        self.mac_vendor_a = self.mac_a.map(|m| resolve_vendor(m, table));
        self.mac_vendor_b = self.mac_b.map(|m| resolve_vendor(m, table));
    }

    /// Sets reputation tags from an injected lookup.
    pub fn annotate_reputation(&mut self, lookup: impl Fn(IpAddr) -> Option<ReputationTag>) {
        self.reputation_a = lookup(self.key.ep_a.ip);
        self.reputation_b = lookup(self.key.ep_b.ip);
    }
}

/// Result of [`assemble_flows`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowAssembly {
    pub flows: Vec<FlowRecord>,
    /// Packets that belong to no TCP/UDP flow.
    pub skipped: u64,
}

impl FlowAssembly {
    pub fn resolve_vendors(&mut self, table: &OuiTable) {
        for f in &mut self.flows {
            f.resolve_vendors(table);
        }
    }

    pub fn annotate_reputation(&mut self, lookup: impl Fn(IpAddr) -> Option<ReputationTag>) {
        for f in &mut self.flows {
            f.annotate_reputation(&lookup);
        }
    }

    pub fn total_packets(&self) -> u64 {
        self.flows.iter().map(|f| f.pkt_count).sum::<u64>() + self.skipped
    }
}

/// Groups TCP/UDP packets into bidirectional flows ordered by first packet.
pub fn assemble_flows(packets: &[PacketRecord]) -> FlowAssembly {
    let mut flows: Vec<FlowRecord> = Vec::new();
    let mut index: HashMap<FlowKey, usize> = HashMap::new();
    let mut skipped = 0;
    for p in packets {
        let Some(key) = FlowKey::of_packet(p) else {
            skipped += 1;
            continue;
        };
        let slot = *index.entry(key).or_insert_with(|| {
            flows.push(FlowRecord {
                key,
                uid: key.uid(p.ts),
                initiator: Endpoint::new(p.ip_src.unwrap(), p.src_port.unwrap()),
                pkt_count: 0,
                byte_count: 0,
                first_ts: p.ts,
                last_ts: p.ts,
                flag_seq: Vec::new(),
                app_cues: Vec::new(),
                ttl_min: None,
                ttl_max: None,
                mac_a: None,
                mac_b: None,
                mac_vendor_a: None,
                mac_vendor_b: None,
                reputation_a: None,
                reputation_b: None,
                frames: Vec::new(),
            });
            flows.len() - 1
        });
        let f = &mut flows[slot];
        f.pkt_count += 1;
        f.byte_count += p.frame_len as u64;
        f.first_ts = f.first_ts.min(p.ts);
        f.last_ts = f.last_ts.max(p.ts);
        f.frames.push(p.frame_no);
        if key.transport == FlowTransport::Tcp {
            f.flag_seq.push(p.tcp_flags.unwrap_or_default());
        }
        if let Some(ttl) = p.ip_ttl {
            f.ttl_min = Some(f.ttl_min.map_or(ttl, |t| t.min(ttl)));
            f.ttl_max = Some(f.ttl_max.map_or(ttl, |t| t.max(ttl)));
        }
        let from_a = p.ip_src == Some(key.ep_a.ip) && p.src_port == Some(key.ep_a.port);
        let slot_mac = if from_a { &mut f.mac_a } else { &mut f.mac_b };
        if slot_mac.is_none() {
            *slot_mac = p.eth_src;
        }
        if let Some(app) = &p.app {
            let cue = app.summary();
            if !f.app_cues.contains(&cue) {
                f.app_cues.push(cue);
            }
        }
    }
    flows.sort_by_key(|f| f.first_ts);
    FlowAssembly { flows, skipped }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::{L4Proto, Timestamp};

    fn pkt(frame_no: u32, src: &str, dst: &str, proto: L4Proto) -> PacketRecord {
        let s: std::net::SocketAddr = src.parse().unwrap();
        let d: std::net::SocketAddr = dst.parse().unwrap();
        let mut p = PacketRecord::new(frame_no, Timestamp::from_micros(frame_no as i64 * 10), 60);
        p.ip_src = Some(s.ip());
        p.ip_dst = Some(d.ip());
        p.transport = proto;
        if proto.has_ports() {
            p.src_port = Some(s.port());
            p.dst_port = Some(d.port());
        }
        if proto == L4Proto::Tcp {
            p.tcp_flags = Some(TcpFlags::ACK);
        }
        p
    }

    #[test]
    fn empty_input() {
        assert_eq!(assemble_flows(&[]), FlowAssembly::default());
    }

    #[test]
    fn both_directions_join_one_flow_and_icmp_is_skipped() {
        let packets = vec![
            pkt(1, "10.0.0.2:5000", "10.0.0.1:80", L4Proto::Tcp),
            pkt(2, "10.0.0.1:80", "10.0.0.2:5000", L4Proto::Tcp),
            pkt(3, "10.0.0.2:0", "10.0.0.1:0", L4Proto::Icmp),
            pkt(4, "10.0.0.2:5000", "10.0.0.1:53", L4Proto::Udp),
        ];
        let a = assemble_flows(&packets);
        assert_eq!(a.flows.len(), 2);
        assert_eq!(a.skipped, 1);
        assert_eq!(a.flows[0].pkt_count, 2);
        assert_eq!(a.flows[0].initiator.port, 5000);
        assert_eq!(a.flows[0].responder().port, 80);
        assert_eq!(a.flows[0].frames, vec![1, 2]);
        assert_eq!(a.flows[1].signature(), ConnectionSignature::Udp);
        assert_eq!(a.total_packets(), 4);
    }

    #[test]
    fn reputation_thresholds() {
        let v = |c| ReputationTag::from_confidence(ReputationSource::AbuseIpdb, c).verdict;
        assert_eq!(v(0), Verdict::Benign);
        assert_eq!(v(24), Verdict::Benign);
        assert_eq!(v(25), Verdict::Suspicious);
        assert_eq!(v(74), Verdict::Suspicious);
        assert_eq!(v(75), Verdict::Malicious);
        assert_eq!(v(100), Verdict::Malicious);
    }
}
