use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write;
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use super::{textualize, ClassLabel, Classifier, ClassifyError, FeatureRow, RowKind, RowSource};
use crate::capture::{AppFields, PacketRecord};
use crate::flow::FlowAssembly;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedRow {
    pub row: FeatureRow,
    pub label: ClassLabel,
    pub confidence: f64,
}

impl ClassifiedRow {
    pub fn row_id(&self, flows: &FlowAssembly) -> String {
        match self.row.source {
            RowSource::Packet(n) => format!("pkt-{n}"),
            RowSource::Flow(i) => flows
                .flows
                .get(i)
                .map_or_else(|| format!("flow-{i}"), |f| format!("flow-{}", f.uid)),
        }
    }
}

/// Classifies every row; stops at the first classifier error.
pub fn classify_rows(rows: Vec<FeatureRow>, clf: &dyn Classifier) -> Result<Vec<ClassifiedRow>, ClassifyError> {
    rows.into_iter()
        .map(|row| {
            let (label, confidence) = clf.classify(&textualize(&row))?;
            Ok(ClassifiedRow {
                row,
                label,
                confidence,
            })
        })
        .collect()
}

/// The structured-predictions CSV: `row_id,label,confidence`.
pub fn predictions_csv(rows: &[ClassifiedRow], flows: &FlowAssembly) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["row_id", "label", "confidence"]).expect("in-memory write");
    for r in rows {
        w.write_record([r.row_id(flows), r.label.to_string(), format!("{:.2}", r.confidence)])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// Protocol context aggregated from the rows of one attack label.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackMetadata {
    pub ip_pairs: BTreeSet<(IpAddr, IpAddr)>,
    pub mqtt_topics: BTreeSet<String>,
    pub dns_queries: BTreeSet<String>,
    pub modbus_unit_ids: BTreeSet<u8>,
    pub http_methods_paths: BTreeSet<String>,
}

impl AttackMetadata {
    pub fn ips(&self) -> BTreeSet<IpAddr> {
        self.ip_pairs.iter().flat_map(|(a, b)| [*a, *b]).collect()
    }

    fn render(&self, out: &mut String) {
        fn list<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
            let v: Vec<String> = items.into_iter().map(|x| x.to_string()).collect();
            if v.is_empty() {
                "none".into()
            } else {
                v.join(", ")
            }
        }
        let _ = writeln!(
            out,
            "IP pairs: {}",
            list(self.ip_pairs.iter().map(|(a, b)| format!("{a} -> {b}")))
        );
        let _ = writeln!(out, "MQTT topics: {}", list(&self.mqtt_topics));
        let _ = writeln!(out, "DNS queries: {}", list(&self.dns_queries));
        let _ = writeln!(out, "Modbus unit ids: {}", list(&self.modbus_unit_ids));
        let _ = writeln!(out, "HTTP requests: {}", list(&self.http_methods_paths));
    }
}

/// Narrative interpretation of a classified capture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpretationReport {
    pub global_summary: String,
    /// Section for benign traffic, present when any row is `Normal`.
    pub normal_section: Option<String>,
    /// Narrative and guidance text per present attack label.
    pub per_attack: BTreeMap<ClassLabel, (String, String)>,
    pub metadata: BTreeMap<ClassLabel, AttackMetadata>,
    pub counts: BTreeMap<ClassLabel, u64>,
}

/// One titled section of a rendered report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportSection {
    pub title: String,
    pub body: String,
}

fn description(label: ClassLabel) -> &'static str {
    match label {
        ClassLabel::Normal => "benign traffic with no attack pattern",
        ClassLabel::MITM => "man-in-the-middle activity such as ARP or DNS spoofing",
        ClassLabel::Fingerprinting => "OS or service fingerprinting probes",
        ClassLabel::Ransomware => "ransomware staging or encryption traffic",
        ClassLabel::Uploading => "suspicious bulk uploading of data",
        ClassLabel::SQL_Injection => "SQL injection attempts against web services",
        ClassLabel::DDoS_HTTP => "HTTP flood denial of service",
        ClassLabel::DDoS_TCP => "TCP SYN flood denial of service: many connection attempts with few acknowledgements",
        ClassLabel::Password => "password guessing or credential brute force",
        ClassLabel::Port_Scanning => "port scanning: probes across many destination ports",
        ClassLabel::Vul_Scanner => "automated vulnerability scanning",
        ClassLabel::Backdoor => "backdoor command-and-control communication",
        ClassLabel::XSS => "cross-site scripting attempts",
        ClassLabel::DDoS_UDP => "UDP flood denial of service",
        ClassLabel::DDoS_ICMP => "ICMP flood denial of service",
    }
}

fn guidance(label: ClassLabel) -> &'static str {
    match label {
        ClassLabel::Normal => "No action required; keep this traffic as the baseline for comparison.",
        ClassLabel::MITM => "Verify ARP and DNS bindings on the affected segment and enforce encrypted, authenticated protocols.",
        ClassLabel::Fingerprinting => "Restrict exposed services and rate-limit probes from the listed sources.",
        ClassLabel::Ransomware => "Isolate the affected hosts immediately and check backups before restoring.",
        ClassLabel::Uploading => "Review the destination of the uploads and block unapproved external transfers.",
        ClassLabel::SQL_Injection => "Patch the targeted web application and validate inputs with parameterized queries.",
        ClassLabel::DDoS_HTTP => "Enable HTTP rate limiting and filter the listed sources upstream.",
        ClassLabel::DDoS_TCP => "Enable SYN cookies or upstream filtering and block the listed sources at the perimeter.",
        ClassLabel::Password => "Lock out repeated failures, enforce strong credentials and disable default passwords.",
        ClassLabel::Port_Scanning => "Block the scanning sources and close services that do not need to be reachable.",
        ClassLabel::Vul_Scanner => "Patch the probed services and block the scanner sources.",
        ClassLabel::Backdoor => "Isolate the affected device, remove the implant and rotate its credentials.",
        ClassLabel::XSS => "Sanitize output in the targeted web interface and apply a content security policy.",
        ClassLabel::DDoS_UDP => "Rate-limit UDP at the perimeter and disable unused UDP services.",
        ClassLabel::DDoS_ICMP => "Rate-limit ICMP echo traffic and filter the listed sources.",
    }
}

fn row_pair(row: &FeatureRow, packets: &HashMap<u32, &PacketRecord>, flows: &FlowAssembly) -> Option<(IpAddr, IpAddr)> {
    match row.source {
        RowSource::Packet(n) => {
            let p = packets.get(&n)?;
            p.ip_src.zip(p.ip_dst)
        }
        RowSource::Flow(i) => {
            let f = flows.flows.get(i)?;
            Some((f.initiator.ip, f.responder().ip))
        }
    }
}

fn contributing<'a>(
    row: &FeatureRow,
    packets: &HashMap<u32, &'a PacketRecord>,
    flows: &FlowAssembly,
) -> Vec<&'a PacketRecord> {
    match row.source {
        RowSource::Packet(n) => packets.get(&n).copied().into_iter().collect(),
        RowSource::Flow(i) => flows
            .flows
            .get(i)
            .map(|f| f.frames.iter().filter_map(|n| packets.get(n).copied()).collect())
            .unwrap_or_default(),
    }
}

fn top(counts: &BTreeMap<IpAddr, u64>, n: usize) -> String {
    let mut v: Vec<_> = counts.iter().collect();
    v.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    let items: Vec<String> = v.into_iter().take(n).map(|(ip, c)| format!("{ip} ({c} rows)")).collect();
    if items.is_empty() {
        "none".into()
    } else {
        items.join(", ")
    }
}

/// Aggregates classified rows into the interpretation report.
///
/// Metadata is collected only from the packets that contributed to rows of
/// each label: the packet itself for packet rows, the member packets for
/// flow rows. IP pairs are the row's own (source, destination) or
/// (initiator, responder).
pub fn build_report(rows: &[ClassifiedRow], packets: &[PacketRecord], flows: &FlowAssembly) -> InterpretationReport {
    let by_frame: HashMap<u32, &PacketRecord> = packets.iter().map(|p| (p.frame_no, p)).collect();
    let mut counts: BTreeMap<ClassLabel, u64> = BTreeMap::new();
    let mut kinds: BTreeMap<ClassLabel, (u64, u64)> = BTreeMap::new();
    let mut metadata: BTreeMap<ClassLabel, AttackMetadata> = BTreeMap::new();
    let mut sources: BTreeMap<ClassLabel, BTreeMap<IpAddr, u64>> = BTreeMap::new();
    let mut targets: BTreeMap<ClassLabel, BTreeMap<IpAddr, u64>> = BTreeMap::new();
    let mut cues: BTreeMap<ClassLabel, BTreeSet<String>> = BTreeMap::new();

    for r in rows {
        *counts.entry(r.label).or_default() += 1;
        let k = kinds.entry(r.label).or_default();
        match r.row.row_kind {
            RowKind::Packet => k.0 += 1,
            RowKind::Flow => k.1 += 1,
        }
        let pair = row_pair(&r.row, &by_frame, flows);
        if let Some((s, d)) = pair {
            *sources.entry(r.label).or_default().entry(s).or_default() += 1;
            *targets.entry(r.label).or_default().entry(d).or_default() += 1;
        }
        if let Some(port) = r.row.get("flow.dst_port").or(r.row.get("tcp.dstport")) {
            if port != "0" {
                let proto = r.row.get("flow.proto").unwrap_or("tcp");
                cues.entry(r.label).or_default().insert(format!("{proto}/{port}"));
            }
        }
        if !r.label.is_attack() {
            continue;
        }
        let m = metadata.entry(r.label).or_default();
        if let Some(p) = pair {
            m.ip_pairs.insert(p);
        }
        for p in contributing(&r.row, &by_frame, flows) {
            match &p.app {
                Some(AppFields::Mqtt { topic: Some(t), .. }) => {
                    m.mqtt_topics.insert(t.clone());
                }
                Some(AppFields::Dns { qname: Some(q), .. }) => {
                    m.dns_queries.insert(q.clone());
                }
                Some(AppFields::Modbus { unit_id, .. }) => {
                    m.modbus_unit_ids.insert(*unit_id);
                }
                Some(AppFields::Http { method: Some(meth), path, .. }) => {
                    m.http_methods_paths
                        .insert(format!("{meth} {}", path.as_deref().unwrap_or("/")));
                }
                _ => {}
            }
        }
    }

    let total: u64 = counts.values().sum();
    let pct = |n: u64| if total == 0 { 0.0 } else { n as f64 * 100.0 / total as f64 };
    let packet_rows = rows.iter().filter(|r| r.row.row_kind == RowKind::Packet).count();
    let mut g = String::new();
    let _ = writeln!(
        g,
        "Total rows: {total} ({packet_rows} packet rows, {} flow rows)",
        rows.len() - packet_rows
    );
    let mut dist: Vec<_> = counts.iter().collect();
    dist.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    let _ = writeln!(
        g,
        "Class distribution: {}",
        if dist.is_empty() {
            "none".to_string()
        } else {
            dist.iter()
                .map(|(l, n)| format!("{l} {n} ({:.1}%)", pct(**n)))
                .collect::<Vec<_>>()
                .join(", ")
        }
    );
    let _ = writeln!(
        g,
        "Dominant class: {}",
        dist.first().map_or("none".to_string(), |(l, _)| l.to_string())
    );
    let dominant_threat = dist.iter().find(|(l, _)| l.is_attack());
    let _ = writeln!(
        g,
        "Dominant threat: {}",
        dominant_threat.map_or("none detected".to_string(), |(l, n)| format!("{l} ({n} rows)"))
    );

    let section = |label: ClassLabel| {
        let n = counts[&label];
        let (p, f) = kinds[&label];
        let empty = BTreeMap::new();
        let mut t = format!(
            "{n} rows ({p} packet rows, {f} flow rows, {:.1}% of all rows) were classified as {label}: {}.\n",
            pct(n),
            description(label)
        );
        let _ = writeln!(t, "Top sources: {}", top(sources.get(&label).unwrap_or(&empty), 5));
        let _ = writeln!(t, "Top targets: {}", top(targets.get(&label).unwrap_or(&empty), 5));
        let services: Vec<String> = cues.get(&label).into_iter().flatten().take(10).cloned().collect();
        let _ = writeln!(
            t,
            "Services involved: {}",
            if services.is_empty() { "none".into() } else { services.join(", ") }
        );
        t
    };

    let normal_section = counts.contains_key(&ClassLabel::Normal).then(|| {
        let mut t = section(ClassLabel::Normal);
        let _ = writeln!(t, "Guidance: {}", guidance(ClassLabel::Normal));
        t
    });
    let per_attack = counts
        .keys()
        .filter(|l| l.is_attack())
        .map(|&l| (l, (section(l), guidance(l).to_string())))
        .collect();

    InterpretationReport {
        global_summary: g,
        normal_section,
        per_attack,
        metadata,
        counts,
    }
}

impl InterpretationReport {
    pub fn attack_labels(&self) -> impl Iterator<Item = ClassLabel> + '_ {
        self.per_attack.keys().copied()
    }

    /// Sections in render order; `intel` supplies extra blocks appended to
    /// each metadata section.
    pub fn sections_with(&self, intel: impl Fn(ClassLabel) -> Vec<String>) -> Vec<ReportSection> {
        let mut out = vec![ReportSection {
            title: "Global Summary".into(),
            body: self.global_summary.clone(),
        }];
        if let Some(n) = &self.normal_section {
            out.push(ReportSection {
                title: "Normal".into(),
                body: n.clone(),
            });
        }
        for (label, (narrative, guide)) in &self.per_attack {
            out.push(ReportSection {
                title: label.to_string(),
                body: format!("{narrative}Guidance: {guide}\n"),
            });
            let mut body = String::new();
            self.metadata.get(label).cloned().unwrap_or_default().render(&mut body);
            for block in intel(*label) {
                body.push_str(&block);
                if !block.ends_with('\n') {
                    body.push('\n');
                }
            }
            out.push(ReportSection {
                title: format!("Metadata: {label}"),
                body,
            });
        }
        out
    }

    pub fn sections(&self) -> Vec<ReportSection> {
        self.sections_with(|_| Vec::new())
    }

    /// Report text: `== Title ==` headings, sections separated by blank lines.
    pub fn render(&self) -> String {
        render_sections(&self.sections())
    }
}

pub fn render_sections(sections: &[ReportSection]) -> String {
    let mut out = String::new();
    for (i, s) in sections.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "== {} ==", s.title);
        out.push_str(&s.body);
    }
    out
}

/// Splits report text back into sections at `== Title ==` headings.
pub fn parse_sections(text: &str) -> Vec<ReportSection> {
    let mut out: Vec<ReportSection> = Vec::new();
    for line in text.replace("\r\n", "\n").lines() {
        if let Some(title) = line.strip_prefix("== ").and_then(|l| l.strip_suffix(" ==")) {
            out.push(ReportSection {
                title: title.to_string(),
                body: String::new(),
            });
        } else if let Some(s) = out.last_mut() {
            s.body.push_str(line);
            s.body.push('\n');
        }
    }
    for s in &mut out {
        let trimmed = s.body.trim_end_matches('\n').len();
        s.body.truncate(trimmed);
        s.body.push('\n');
    }
    out
}
