use std::collections::BTreeMap;
use std::fmt::Write;
use std::net::IpAddr;

use super::{ConnectionSignature, FlowAssembly, FlowRecord, ReputationTag, Verdict};

const MAX_FLAG_LETTERS: usize = 12;

/// A rendered flow block, terminated by one blank line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowNarrative {
    pub uid: String,
    pub text: String,
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Benign => "Benign",
        Verdict::Suspicious => "Suspicious",
        Verdict::Malicious => "Malicious",
    }
}

fn reputation_part(side: &str, tag: Option<ReputationTag>) -> Option<String> {
    let tag = tag?;
    Some(format!(
        "{side} abuse-confidence {} ({})",
        tag.abuse_confidence,
        verdict_name(tag.verdict)
    ))
}

/// Renders one flow as a fixed-order text block.
pub fn render_narrative(flow: &FlowRecord, sig: ConnectionSignature) -> FlowNarrative {
    let init = flow.initiator;
    let resp = flow.responder();
    let mut t = String::new();
    let _ = writeln!(t, "Flow {}: {} <-> {} ({})", flow.uid, init, resp, flow.key.transport);
    let vendor = |v: Option<&str>| v.unwrap_or("Unknown").to_string();
    let mac = |m: Option<crate::capture::MacAddr>| m.map(|m| format!(" [{m}]")).unwrap_or_default();
    let _ = writeln!(
        t,
        "Vendors: src {}{}, dst {}{}",
        vendor(flow.initiator_vendor()),
        mac(flow.initiator_mac()),
        vendor(flow.responder_vendor()),
        mac(flow.responder_mac())
    );
    let _ = writeln!(
        t,
        "Transport: {}, src port {}, dst port {}",
        flow.key.transport, init.port, resp.port
    );
    let _ = writeln!(t, "Packets: {}, bytes: {}", flow.pkt_count, flow.byte_count);
    let _ = writeln!(
        t,
        "Time: {} to {}, duration {:.6} s",
        flow.first_ts,
        flow.last_ts,
        flow.duration()
    );
    match (flow.ttl_min, flow.ttl_max) {
        (Some(lo), Some(hi)) => {
            let _ = writeln!(t, "TTL: {lo}-{hi}");
        }
        _ => {
            let _ = writeln!(t, "TTL: n/a");
        }
    }
    let mut sig_line = format!("Signature: {} ({})", sig, sig.description());
    if !flow.flag_seq.is_empty() {
        let letters: Vec<String> = flow
            .flag_seq
            .iter()
            .take(MAX_FLAG_LETTERS)
            .map(|f| f.letters())
            .collect();
        let _ = write!(sig_line, "; flags {}", letters.join(" "));
        if flow.flag_seq.len() > MAX_FLAG_LETTERS {
            let _ = write!(sig_line, " ... (+{})", flow.flag_seq.len() - MAX_FLAG_LETTERS);
        }
    }
    let _ = writeln!(t, "{sig_line}");
    if flow.app_cues.is_empty() {
        let _ = writeln!(t, "Application: none recognized");
    } else {
        let _ = writeln!(t, "Application: {}", flow.app_cues.join("; "));
    }
    let parts: Vec<String> = [
        reputation_part("src", flow.initiator_reputation()),
        reputation_part("dst", flow.responder_reputation()),
    ]
    .into_iter()
    .flatten()
    .collect();
    if parts.is_empty() {
        let _ = writeln!(t, "Reputation: not assessed");
    } else {
        let _ = writeln!(t, "Reputation: {}", parts.join(", "));
    }
    t.push('\n');
    FlowNarrative {
        uid: flow.uid.clone(),
        text: t,
    }
}

fn counted<K: Ord + std::fmt::Display>(counts: &BTreeMap<K, u64>) -> String {
    if counts.is_empty() {
        return "none".into();
    }
    let mut items: Vec<(&K, &u64)> = counts.iter().collect();
    items.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    items
        .into_iter()
        .map(|(k, v)| format!("{k} {v}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Capture-wide summary block: traffic distribution across devices,
/// transports, applications and signatures.
pub fn render_global_summary(assembly: &FlowAssembly) -> String {
    let flows = &assembly.flows;
    let packets: u64 = flows.iter().map(|f| f.pkt_count).sum();
    let bytes: u64 = flows.iter().map(|f| f.byte_count).sum();
    let mut transports = BTreeMap::new();
    let mut apps = BTreeMap::new();
    let mut sigs = BTreeMap::new();
    let mut ports = BTreeMap::new();
    let mut devices: BTreeMap<IpAddr, (u64, u64, Option<String>)> = BTreeMap::new();
    for f in flows {
        *transports.entry(f.key.transport.to_string()).or_insert(0) += 1;
        *sigs.entry(f.signature().name()).or_insert(0) += 1;
        *ports.entry(format!("{}/{}", f.responder().port, f.key.transport.to_string().to_lowercase()))
            .or_insert(0) += 1;
        for cue in &f.app_cues {
            let proto = cue.split_whitespace().next().unwrap_or("").to_string();
            *apps.entry(proto).or_insert(0) += 1;
        }
        for (ep, vendor) in [
            (f.initiator, f.initiator_vendor()),
            (f.responder(), f.responder_vendor()),
        ] {
            let d = devices.entry(ep.ip).or_insert((0, 0, None));
            d.0 += 1;
            d.1 += f.pkt_count;
            if d.2.is_none() {
                d.2 = vendor.map(str::to_string);
            }
        }
    }
    let first = flows.iter().map(|f| f.first_ts).min();
    let last = flows.iter().map(|f| f.last_ts).max();
    let mut t = String::new();
    let _ = writeln!(
        t,
        "Global summary: {} flows, {} packets, {} bytes",
        flows.len(),
        packets,
        bytes
    );
    if let (Some(a), Some(b)) = (first, last) {
        let _ = writeln!(t, "Time span: {} to {} ({:.6} s)", a, b, a.seconds_until(b));
    }
    let _ = writeln!(t, "Transports: {}", counted(&transports));
    let _ = writeln!(t, "Applications: {}", counted(&apps));
    let _ = writeln!(t, "Signatures: {}", counted(&sigs));
    let mut port_items: Vec<_> = ports.into_iter().collect();
    port_items.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    port_items.truncate(10);
    let _ = writeln!(
        t,
        "Top services: {}",
        if port_items.is_empty() {
            "none".to_string()
        } else {
            port_items
                .iter()
                .map(|(p, n)| format!("{p} {n} flows"))
                .collect::<Vec<_>>()
                .join(", ")
        }
    );
    let mut dev_items: Vec<_> = devices.into_iter().collect();
    dev_items.sort_by(|a, b| b.1 .1.cmp(&a.1 .1).then_with(|| a.0.cmp(&b.0)));
    dev_items.truncate(10);
    let _ = writeln!(
        t,
        "Devices: {}",
        if dev_items.is_empty() {
            "none".to_string()
        } else {
            dev_items
                .iter()
                .map(|(ip, (nf, np, v))| {
                    format!("{ip} ({}) {nf} flows {np} packets", v.as_deref().unwrap_or("Unknown"))
                })
                .collect::<Vec<_>>()
                .join("; ")
        }
    );
    let _ = writeln!(t, "Non-flow packets: {}", assembly.skipped);
    t.push('\n');
    t
}

/// The flow-summary artifact: global block first, then one block per flow.
pub fn render_narratives(assembly: &FlowAssembly) -> String {
    let mut out = render_global_summary(assembly);
    for f in &assembly.flows {
        out.push_str(&render_narrative(f, f.signature()).text);
    }
    out
}

/// Splits a flow-summary artifact back into its blocks (without the
/// trailing blank line).
pub fn split_blocks(text: &str) -> Vec<String> {
    let normalized = text.replace("\r\n", "\n");
    normalized
        .split("\n\n")
        .map(|b| b.trim_matches('\n'))
        .filter(|b| !b.is_empty())
        .map(str::to_string)
        .collect()
}
