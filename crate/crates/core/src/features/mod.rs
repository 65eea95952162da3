//! Feature extraction, `name:value` textualization, classification and the
//! interpretation report.
//!
//! The schema is fixed at 24 features:
//!
//! | row | features |
//! |---|---|
//! | packet (15) | `frame.len ip.proto ip.ttl tcp.srcport tcp.dstport udp.dstport tcp.flags.syn tcp.flags.ack tcp.flags.fin tcp.flags.rst dns.qry.type mqtt.msgtype modbus.func_code pair.pkts pair.dst_ports` |
//! | flow (9) | `flow.proto flow.dst_port flow.duration flow.pkts flow.bytes pkt_count syn_count ack_ratio distinct_dst_ports` |
//!
//! `pair.*` aggregate over all packets with the same (source IP, destination
//! IP). `pkt_count`, `syn_count`, `ack_ratio` and `distinct_dst_ports`
//! aggregate over all flows with the same (initiator IP, responder IP).
//! Hostnames, URIs, topics and addresses never appear as feature values.

mod classifier;
mod report;

use std::collections::{HashMap, HashSet};
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use crate::capture::{AppFields, FlowTransport, L4Proto, PacketRecord, TcpFlags};
use crate::flow::FlowAssembly;

pub use classifier::{
    ClassLabel, ClassifyError, Classifier, FallbackClassifier, ReferenceRules, RemoteModel, Rule, RuleCondition,
};
pub use report::{
    build_report, classify_rows, parse_sections, predictions_csv, render_sections, AttackMetadata, ClassifiedRow, InterpretationReport,
    ReportSection,
};

pub const PACKET_SCHEMA: [&str; 15] = [
    "frame.len",
    "ip.proto",
    "ip.ttl",
    "tcp.srcport",
    "tcp.dstport",
    "udp.dstport",
    "tcp.flags.syn",
    "tcp.flags.ack",
    "tcp.flags.fin",
    "tcp.flags.rst",
    "dns.qry.type",
    "mqtt.msgtype",
    "modbus.func_code",
    "pair.pkts",
    "pair.dst_ports",
];

pub const FLOW_SCHEMA: [&str; 9] = [
    "flow.proto",
    "flow.dst_port",
    "flow.duration",
    "flow.pkts",
    "flow.bytes",
    "pkt_count",
    "syn_count",
    "ack_ratio",
    "distinct_dst_ports",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RowKind {
    Packet,
    Flow,
}

/// Where a row came from, so report metadata can be traced back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RowSource {
    /// 1-based frame number.
    Packet(u32),
    /// Index into [`FlowAssembly::flows`].
    Flow(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub row_kind: RowKind,
    pub source: RowSource,
    pub values: Vec<(String, String)>,
}

impl FeatureRow {
    pub fn get(&self, name: &str) -> Option<&str> {
        self.values.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }
}

fn flag(flags: Option<TcpFlags>, f: TcpFlags) -> &'static str {
    if flags.is_some_and(|x| x.contains(f)) {
        "1"
    } else {
        "0"
    }
}

/// Renders a float with up to six decimals and no trailing zeros.
fn num(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "0".into(), |x| x.to_string())
}

/// One row per packet followed by one row per flow.
pub fn extract_features(packets: &[PacketRecord], flows: &FlowAssembly) -> Vec<FeatureRow> {
    let mut pair_pkts: HashMap<(IpAddr, IpAddr), u64> = HashMap::new();
    let mut pair_ports: HashMap<(IpAddr, IpAddr), HashSet<u16>> = HashMap::new();
    for p in packets {
        if let (Some(s), Some(d)) = (p.ip_src, p.ip_dst) {
            *pair_pkts.entry((s, d)).or_default() += 1;
            if let Some(port) = p.dst_port {
                pair_ports.entry((s, d)).or_default().insert(port);
            }
        }
    }
    let mut rows = Vec::with_capacity(packets.len() + flows.flows.len());
    for p in packets {
        let pair = p.ip_src.zip(p.ip_dst);
        let tcp = p.transport == L4Proto::Tcp;
        let udp = p.transport == L4Proto::Udp;
        let (dns_type, mqtt_type, modbus_func) = match &p.app {
            Some(AppFields::Dns { qtype, .. }) => (opt(*qtype), "0".into(), "0".into()),
            Some(AppFields::Mqtt { control_type, .. }) => ("0".into(), control_type.to_string(), "0".into()),
            Some(AppFields::Modbus { function, .. }) => ("0".into(), "0".into(), function.to_string()),
            _ => ("0".into(), "0".into(), "0".into()),
        };
        let proto = match p.transport {
            L4Proto::None => "0".to_string(),
            t => t.number().to_string(),
        };
        let values = vec![
            p.frame_len.to_string(),
            proto,
            opt(p.ip_ttl),
            if tcp { opt(p.src_port) } else { "0".into() },
            if tcp { opt(p.dst_port) } else { "0".into() },
            if udp { opt(p.dst_port) } else { "0".into() },
            flag(p.tcp_flags, TcpFlags::SYN).into(),
            flag(p.tcp_flags, TcpFlags::ACK).into(),
            flag(p.tcp_flags, TcpFlags::FIN).into(),
            flag(p.tcp_flags, TcpFlags::RST).into(),
            dns_type,
            mqtt_type,
            modbus_func,
            opt(pair.and_then(|k| pair_pkts.get(&k).copied())),
            opt(pair.and_then(|k| pair_ports.get(&k).map(HashSet::len))),
        ];
        rows.push(FeatureRow {
            row_kind: RowKind::Packet,
            source: RowSource::Packet(p.frame_no),
            values: PACKET_SCHEMA.iter().map(|n| n.to_string()).zip(values).collect(),
        });
    }

    #[derive(Default)]
    struct Agg {
        pkts: u64,
        syns: u64,
        acks: u64,
        ports: HashSet<u16>,
    }
    let mut aggs: HashMap<(IpAddr, IpAddr), Agg> = HashMap::new();
    for f in &flows.flows {
        let a = aggs.entry((f.initiator.ip, f.responder().ip)).or_default();
        a.pkts += f.pkt_count;
        a.syns += f
            .flag_seq
            .iter()
            .filter(|x| x.contains(TcpFlags::SYN) && !x.contains(TcpFlags::ACK))
            .count() as u64;
        a.acks += f.flag_seq.iter().filter(|x| x.contains(TcpFlags::ACK)).count() as u64;
        a.ports.insert(f.responder().port);
    }
    for (i, f) in flows.flows.iter().enumerate() {
        let a = &aggs[&(f.initiator.ip, f.responder().ip)];
        let ack_ratio = if a.pkts == 0 { 0.0 } else { a.acks as f64 / a.pkts as f64 };
        let values = vec![
            match f.key.transport {
                FlowTransport::Tcp => "tcp".to_string(),
                FlowTransport::Udp => "udp".to_string(),
            },
            f.responder().port.to_string(),
            num(f.duration()),
            f.pkt_count.to_string(),
            f.byte_count.to_string(),
            a.pkts.to_string(),
            a.syns.to_string(),
            num(ack_ratio),
            a.ports.len().to_string(),
        ];
        rows.push(FeatureRow {
            row_kind: RowKind::Flow,
            source: RowSource::Flow(i),
            values: FLOW_SCHEMA.iter().map(|n| n.to_string()).zip(values).collect(),
        });
    }
    rows
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            ':' => out.push_str("\\:"),
            ' ' => out.push_str("\\_"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('_') => out.push(' '),
                Some(other) => out.push(other),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

/// `name:value` pairs in row order, separated by single spaces.
///
/// Backslashes, colons and spaces inside names or values are escaped as
/// `\\`, `\:` and `\_`, so the mapping is injective.
pub fn textualize(row: &FeatureRow) -> String {
    textualize_pairs(&row.values)
}

pub fn textualize_pairs(pairs: &[(String, String)]) -> String {
    pairs
        .iter()
        .map(|(k, v)| format!("{}:{}", escape(k), escape(v)))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Inverse of [`textualize`]. Tokens without an unescaped colon are skipped.
pub fn parse_text(text: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for token in text.split(' ').filter(|t| !t.is_empty()) {
        let mut split = None;
        let mut escaped = false;
        for (i, c) in token.char_indices() {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == ':' {
                split = Some(i);
                break;
            }
        }
        if let Some(i) = split {
            out.push((unescape(&token[..i]), unescape(&token[i + 1..])));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(pairs: &[(&str, &str)]) -> FeatureRow {
        FeatureRow {
            row_kind: RowKind::Flow,
            source: RowSource::Flow(0),
            values: pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
        }
    }

    #[test]
    fn textualize_examples() {
        assert_eq!(textualize(&row(&[("tcp.dstport", "442")])), "tcp.dstport:442");
        assert_eq!(textualize(&row(&[])), "");
        assert_eq!(textualize(&row(&[("a", "1"), ("b", "x")])), "a:1 b:x");
    }

    #[test]
    fn escaping_round_trips() {
        let r = row(&[("a", "x y"), ("b", "c:d"), ("c", "back\\slash"), ("d", "")]);
        let text = textualize(&r);
        assert_eq!(text, "a:x\\_y b:c\\:d c:back\\\\slash d:");
        assert_eq!(parse_text(&text), r.values);
    }

    #[test]
    fn schema_has_24_unique_names() {
        let mut all: Vec<&str> = PACKET_SCHEMA.iter().chain(FLOW_SCHEMA.iter()).copied().collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 24);
    }

    #[test]
    fn number_formatting() {
        assert_eq!(num(0.0), "0");
        assert_eq!(num(0.5), "0.5");
        assert_eq!(num(0.002), "0.002");
        assert_eq!(num(3.0), "3");
    }
}
