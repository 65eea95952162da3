//! Zeek-style per-protocol logs.
//!
//! Output is a documented subset of Zeek's JSON layout: every event starts
//! with `_path`, `uid`, `ts`, `id.orig_h`, `id.orig_p`, `id.resp_h`,
//! `id.resp_p` and `proto`, followed by the per-kind fields. Uids come from
//! [`FlowKey::uid`] and are therefore reproducible, unlike Zeek's.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use super::record::{
    dns_rcode_name, dns_type_name, modbus_function_name, mqtt_type_name, AppFields, PacketRecord,
    TcpFlags, Timestamp,
};
use super::session::{Endpoint, FlowKey, FlowTransport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogKind {
    Conn,
    Dns,
    Http,
    Mqtt,
    Modbus,
    Tls,
}

impl LogKind {
    pub const ALL: [LogKind; 6] = [
        LogKind::Conn,
        LogKind::Dns,
        LogKind::Http,
        LogKind::Mqtt,
        LogKind::Modbus,
        LogKind::Tls,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LogKind::Conn => "conn",
            LogKind::Dns => "dns",
            LogKind::Http => "http",
            LogKind::Mqtt => "mqtt",
            LogKind::Modbus => "modbus",
            LogKind::Tls => "tls",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for LogKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A typed log field value.
#[derive(Debug, Clone, PartialEq)]
pub enum LogValue {
    Str(String),
    Int(i64),
    /// Seconds, rendered with six decimals.
    Secs(f64),
    Bool(bool),
    List(Vec<String>),
}

impl fmt::Display for LogValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogValue::Str(s) => f.write_str(s),
            LogValue::Int(n) => write!(f, "{n}"),
            LogValue::Secs(s) => write!(f, "{s:.6}"),
            LogValue::Bool(b) => write!(f, "{b}"),
            LogValue::List(items) => f.write_str(&items.join(",")),
        }
    }
}

impl Serialize for LogValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            LogValue::Str(s) => serializer.serialize_str(s),
            LogValue::Int(n) => serializer.serialize_i64(*n),
            LogValue::Secs(s) => super::record::serialize_secs(s, serializer),
            LogValue::Bool(b) => serializer.serialize_bool(*b),
            LogValue::List(items) => items.serialize(serializer),
        }
    }
}

impl LogValue {
    fn from_json(v: &serde_json::Value) -> Option<Self> {
        Some(match v {
            serde_json::Value::String(s) => LogValue::Str(s.clone()),
            serde_json::Value::Bool(b) => LogValue::Bool(*b),
            serde_json::Value::Number(n) => match n.as_i64() {
                Some(i) => LogValue::Int(i),
                None => LogValue::Secs(n.as_f64()?),
            },
            serde_json::Value::Array(items) => LogValue::List(
                items
                    .iter()
                    .map(|i| i.as_str().map(str::to_string).unwrap_or_else(|| i.to_string()))
                    .collect(),
            ),
            _ => return None,
        })
    }
}

/// One protocol log event.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolEvent {
    pub uid: String,
    pub ts: Timestamp,
    pub log_kind: LogKind,
    /// Ordered attributes following `uid` and `ts`, starting with the
    /// connection id fields.
    pub fields: Vec<(String, LogValue)>,
}

impl ProtocolEvent {
    pub fn get(&self, key: &str) -> Option<&LogValue> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }

    /// Parses a line written by [`ProtocolEvent::to_json_line`].
    pub fn from_json_line(line: &str) -> Option<Self> {
        let value: serde_json::Value = serde_json::from_str(line).ok()?;
        let obj = value.as_object()?;
        let log_kind = LogKind::parse(obj.get("_path")?.as_str()?)?;
        let uid = obj.get("uid")?.as_str()?.to_string();
        let ts = Timestamp::from_micros((obj.get("ts")?.as_f64()? * 1e6).round() as i64);
        let fields = obj
            .iter()
            .filter(|(k, _)| !matches!(k.as_str(), "_path" | "uid" | "ts"))
            .map(|(k, v)| Some((k.clone(), LogValue::from_json(v)?)))
            .collect::<Option<Vec<_>>>()?;
        Some(Self {
            uid,
            ts,
            log_kind,
            fields,
        })
    }

    /// The (orig, resp, transport) tuple named by the id fields.
    pub fn five_tuple(&self) -> Option<(Endpoint, Endpoint, FlowTransport)> {
        let ip = |k: &str| match self.get(k)? {
            LogValue::Str(s) => s.parse().ok(),
            _ => None,
        };
        let port = |k: &str| match self.get(k)? {
            LogValue::Int(p) => u16::try_from(*p).ok(),
            _ => None,
        };
        let proto = match self.get("proto")? {
            LogValue::Str(s) if s == "tcp" => FlowTransport::Tcp,
            LogValue::Str(s) if s == "udp" => FlowTransport::Udp,
            _ => return None,
        };
        Some((
            Endpoint::new(ip("id.orig_h")?, port("id.orig_p")?),
            Endpoint::new(ip("id.resp_h")?, port("id.resp_p")?),
            proto,
        ))
    }
}

impl Serialize for ProtocolEvent {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.fields.len() + 3))?;
        map.serialize_entry("_path", self.log_kind.as_str())?;
        map.serialize_entry("uid", &self.uid)?;
        map.serialize_entry("ts", &self.ts)?;
        for (k, v) in &self.fields {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

pub type ProtocolLogs = BTreeMap<LogKind, Vec<ProtocolEvent>>;

/// Packets of one session, in capture order.
struct Session<'a> {
    key: FlowKey,
    uid: String,
    orig: Endpoint,
    resp: Endpoint,
    packets: Vec<&'a PacketRecord>,
}

impl Session<'_> {
    fn is_from_orig(&self, p: &PacketRecord) -> bool {
        p.ip_src == Some(self.orig.ip) && p.src_port == Some(self.orig.port)
    }

    fn id_fields(&self) -> Vec<(String, LogValue)> {
        vec![
            ("id.orig_h".into(), LogValue::Str(self.orig.ip.to_string())),
            ("id.orig_p".into(), LogValue::Int(self.orig.port as i64)),
            ("id.resp_h".into(), LogValue::Str(self.resp.ip.to_string())),
            ("id.resp_p".into(), LogValue::Int(self.resp.port as i64)),
            (
                "proto".into(),
                LogValue::Str(match self.key.transport {
                    FlowTransport::Tcp => "tcp".into(),
                    FlowTransport::Udp => "udp".into(),
                }),
            ),
        ]
    }

    fn event(&self, kind: LogKind, ts: Timestamp, extra: Vec<(String, LogValue)>) -> ProtocolEvent {
        let mut fields = self.id_fields();
        fields.extend(extra);
        ProtocolEvent {
            uid: self.uid.clone(),
            ts,
            log_kind: kind,
            fields,
        }
    }
}

fn sessions(packets: &[PacketRecord]) -> Vec<Session<'_>> {
    let mut order: Vec<Session<'_>> = Vec::new();
    let mut index: HashMap<FlowKey, usize> = HashMap::new();
    for p in packets {
        let Some(key) = FlowKey::of_packet(p) else { continue };
        let slot = *index.entry(key).or_insert_with(|| {
            let orig = Endpoint::new(p.ip_src.unwrap(), p.src_port.unwrap());
            let resp = Endpoint::new(p.ip_dst.unwrap(), p.dst_port.unwrap());
            order.push(Session {
                key,
                uid: key.uid(p.ts),
                orig,
                resp,
                packets: Vec::new(),
            });
            order.len() - 1
        });
        order[slot].packets.push(p);
    }
    order
}

/// Builds conn, dns, http, mqtt, modbus and tls logs for one capture.
///
/// Every TCP/UDP session gets one conn event; application transactions get
/// one event each. Events of each kind are ordered by timestamp.
pub fn generate_protocol_logs(packets: &[PacketRecord]) -> ProtocolLogs {
    let mut logs: ProtocolLogs = LogKind::ALL.iter().map(|k| (*k, Vec::new())).collect();
    for session in sessions(packets) {
        logs.get_mut(&LogKind::Conn).unwrap().push(conn_event(&session));
        for (kind, event) in app_events(&session) {
            logs.get_mut(&kind).unwrap().push(event);
        }
    }
    for events in logs.values_mut() {
        events.sort_by(|a, b| a.ts.cmp(&b.ts).then_with(|| a.uid.cmp(&b.uid)));
    }
    logs
}

fn conn_event(s: &Session<'_>) -> ProtocolEvent {
    let first = s.packets[0].ts;
    let last = s.packets.last().unwrap().ts;
    let (mut orig_pkts, mut orig_bytes, mut resp_pkts, mut resp_bytes) = (0i64, 0i64, 0i64, 0i64);
    let mut history = String::new();
    let seen = |c: char, history: &mut String| {
        if !history.contains(c) {
            history.push(c);
        }
    };
    let (mut orig_syn, mut resp_synack, mut orig_fin, mut resp_fin, mut orig_rst, mut resp_rst) =
        (false, false, false, false, false, false);
    for p in &s.packets {
        let from_orig = s.is_from_orig(p);
        if from_orig {
            orig_pkts += 1;
            orig_bytes += p.frame_len as i64;
        } else {
            resp_pkts += 1;
            resp_bytes += p.frame_len as i64;
        }
        let case = |c: char| if from_orig { c.to_ascii_uppercase() } else { c };
        if let Some(f) = p.tcp_flags {
            let syn = f.contains(TcpFlags::SYN);
            let ack = f.contains(TcpFlags::ACK);
            if syn && !ack {
                seen(case('s'), &mut history);
                orig_syn |= from_orig;
            }
            if syn && ack {
                seen(case('h'), &mut history);
                resp_synack |= !from_orig;
            }
            if ack && !syn && !f.contains(TcpFlags::FIN) && !f.contains(TcpFlags::RST) && p.payload_len == 0 {
                seen(case('a'), &mut history);
            }
            if f.contains(TcpFlags::FIN) {
                seen(case('f'), &mut history);
                if from_orig {
                    orig_fin = true
                } else {
                    resp_fin = true
                }
            }
            if f.contains(TcpFlags::RST) {
                seen(case('r'), &mut history);
                if from_orig {
                    orig_rst = true
                } else {
                    resp_rst = true
                }
            }
        }
        if p.payload_len > 0 {
            seen(case('d'), &mut history);
        }
    }
    let state = match s.key.transport {
        FlowTransport::Udp => {
            if resp_pkts > 0 {
                "SF"
            } else {
                "S0"
            }
        }
        FlowTransport::Tcp => {
            let established = orig_syn && resp_synack;
            if !orig_syn && !resp_synack {
                "OTH"
            } else if orig_syn && resp_pkts == 0 {
                "S0"
            } else if orig_syn && !resp_synack && resp_rst {
                "REJ"
            } else if established && orig_rst {
                "RSTO"
            } else if established && resp_rst {
                "RSTR"
            } else if established && orig_fin && resp_fin {
                "SF"
            } else if established {
                "S1"
            } else {
                "OTH"
            }
        }
    };
    s.event(
        LogKind::Conn,
        first,
        vec![
            ("duration".into(), LogValue::Secs(first.seconds_until(last))),
            ("orig_pkts".into(), LogValue::Int(orig_pkts)),
            ("orig_ip_bytes".into(), LogValue::Int(orig_bytes)),
            ("resp_pkts".into(), LogValue::Int(resp_pkts)),
            ("resp_ip_bytes".into(), LogValue::Int(resp_bytes)),
            ("conn_state".into(), LogValue::Str(state.into())),
            ("history".into(), LogValue::Str(history)),
        ],
    )
}

fn app_events(s: &Session<'_>) -> Vec<(LogKind, ProtocolEvent)> {
    let mut out = Vec::new();
    // DNS: one event per transaction id, query and response merged.
    let mut dns: BTreeMap<u16, (Timestamp, Option<&PacketRecord>, Option<&PacketRecord>)> = BTreeMap::new();
    let mut http_pending: VecDeque<(Timestamp, &AppFields)> = VecDeque::new();
    let mut http_depth = 0i64;
    let mut modbus: BTreeMap<(u16, u8), (Timestamp, u8, bool)> = BTreeMap::new();
    let mut tls: Option<(Timestamp, Option<String>, Option<String>, bool)> = None;

    for p in &s.packets {
        let Some(app) = &p.app else { continue };
        match app {
            AppFields::Dns {
                trans_id,
                is_response,
                ..
            } => {
                let entry = dns.entry(*trans_id).or_insert((p.ts, None, None));
                if *is_response {
                    entry.2.get_or_insert(p);
                } else {
                    entry.1.get_or_insert(p);
                }
            }
            AppFields::Http { method: Some(_), .. } => http_pending.push_back((p.ts, app)),
            AppFields::Http { status: Some(code), .. } => {
                http_depth += 1;
                let (ts, req) = match http_pending.pop_front() {
                    Some((ts, req)) => (ts, Some(req)),
                    None => (p.ts, None),
                };
                out.push((LogKind::Http, http_event(s, ts, http_depth, req, Some(*code))));
            }
            AppFields::Http { .. } => {}
            AppFields::Mqtt { control_type, topic } => {
                let mut fields = vec![
                    ("cmd".into(), LogValue::Str(mqtt_type_name(*control_type).into())),
                    ("from_client".into(), LogValue::Bool(s.is_from_orig(p))),
                ];
                if let Some(t) = topic {
                    fields.push(("topic".into(), LogValue::Str(t.clone())));
                }
                out.push((LogKind::Mqtt, s.event(LogKind::Mqtt, p.ts, fields)));
            }
            AppFields::Modbus {
                trans_id,
                unit_id,
                function,
            } => {
                let entry = modbus.entry((*trans_id, *unit_id)).or_insert((p.ts, *function, false));
                if function & 0x80 != 0 {
                    entry.2 = true;
                }
            }
            AppFields::Tls {
                handshake,
                version,
                sni,
                ..
            } => {
                let entry = tls.get_or_insert((p.ts, None, None, false));
                match handshake {
                    1 => {
                        entry.2 = entry.2.take().or_else(|| sni.clone());
                        entry.1 = entry.1.take().or_else(|| version.clone());
                    }
                    2 => {
                        entry.1 = version.clone().or(entry.1.take());
                        entry.3 = true;
                    }
                    _ => {}
                }
            }
            AppFields::Other => {}
        }
    }
    for (ts, req) in http_pending {
        http_depth += 1;
        out.push((LogKind::Http, http_event(s, ts, http_depth, Some(req), None)));
    }
    for (trans_id, (ts, query, response)) in dns {
        let source = query.or(response).and_then(|p| p.app.as_ref());
        let Some(AppFields::Dns { qname, qtype, .. }) = source else { continue };
        let mut fields = vec![("trans_id".into(), LogValue::Int(trans_id as i64))];
        if let (Some(q), Some(r)) = (query, response) {
            fields.push(("rtt".into(), LogValue::Secs(q.ts.seconds_until(r.ts))));
        }
        if let Some(name) = qname {
            fields.push(("query".into(), LogValue::Str(name.clone())));
        }
        if let Some(t) = qtype {
            fields.push(("qtype".into(), LogValue::Int(*t as i64)));
            fields.push(("qtype_name".into(), LogValue::Str(dns_type_name(*t))));
        }
        if let Some(AppFields::Dns {
            rcode: Some(rc),
            answers,
            ..
        }) = response.and_then(|p| p.app.as_ref())
        {
            fields.push(("rcode".into(), LogValue::Int(*rc as i64)));
            fields.push(("rcode_name".into(), LogValue::Str(dns_rcode_name(*rc).into())));
            if !answers.is_empty() {
                fields.push(("answers".into(), LogValue::List(answers.clone())));
            }
        }
        out.push((LogKind::Dns, s.event(LogKind::Dns, ts, fields)));
    }
    for ((trans_id, unit_id), (ts, function, exception)) in modbus {
        let fields = vec![
            ("trans_id".into(), LogValue::Int(trans_id as i64)),
            ("unit_id".into(), LogValue::Int(unit_id as i64)),
            ("func".into(), LogValue::Str(modbus_function_name(function).into())),
            ("func_code".into(), LogValue::Int((function & 0x7f) as i64)),
            ("exception".into(), LogValue::Bool(exception)),
        ];
        out.push((LogKind::Modbus, s.event(LogKind::Modbus, ts, fields)));
    }
    if let Some((ts, version, sni, established)) = tls {
        let mut fields = Vec::new();
        if let Some(v) = version {
            fields.push(("version".into(), LogValue::Str(v)));
        }
        if let Some(n) = sni {
            fields.push(("server_name".into(), LogValue::Str(n)));
        }
        fields.push(("established".into(), LogValue::Bool(established)));
        out.push((LogKind::Tls, s.event(LogKind::Tls, ts, fields)));
    }
    out
}

fn http_event(
    s: &Session<'_>,
    ts: Timestamp,
    depth: i64,
    req: Option<&AppFields>,
    status: Option<u16>,
) -> ProtocolEvent {
    let mut fields = vec![("trans_depth".into(), LogValue::Int(depth))];
    if let Some(AppFields::Http { method, path, host, .. }) = req {
        if let Some(m) = method {
            fields.push(("method".into(), LogValue::Str(m.clone())));
        }
        if let Some(h) = host {
            fields.push(("host".into(), LogValue::Str(h.clone())));
        }
        if let Some(p) = path {
            fields.push(("uri".into(), LogValue::Str(p.clone())));
        }
    }
    if let Some(code) = status {
        fields.push(("status_code".into(), LogValue::Int(code as i64)));
    }
    s.event(LogKind::Http, ts, fields)
}

/// Writes all events as JSON Lines, grouped by kind in [`LogKind::ALL`] order.
pub fn logs_to_jsonl(logs: &ProtocolLogs) -> String {
    let mut out = String::new();
    for kind in LogKind::ALL {
        for event in logs.get(&kind).into_iter().flatten() {
            out.push_str(&event.to_json_line());
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::record::L4Proto;

    fn tcp(frame_no: u32, micros: i64, src: &str, dst: &str, flags: TcpFlags) -> PacketRecord {
        let s: std::net::SocketAddr = src.parse().unwrap();
        let d: std::net::SocketAddr = dst.parse().unwrap();
        let mut p = PacketRecord::new(frame_no, Timestamp::from_micros(micros), 60);
        p.ip_src = Some(s.ip());
        p.ip_dst = Some(d.ip());
        p.transport = L4Proto::Tcp;
        p.src_port = Some(s.port());
        p.dst_port = Some(d.port());
        p.tcp_flags = Some(flags);
        p
    }

    #[test]
    fn empty_input_yields_empty_logs() {
        let logs = generate_protocol_logs(&[]);
        assert!(logs.values().all(Vec::is_empty));
        assert_eq!(logs.len(), 6);
    }

    #[test]
    fn conn_state_and_history_for_rejected_connection() {
        let packets = vec![
            tcp(1, 0, "10.0.0.2:5000", "10.0.0.1:23", TcpFlags::SYN),
            tcp(2, 10, "10.0.0.1:23", "10.0.0.2:5000", TcpFlags::RST | TcpFlags::ACK),
        ];
        let logs = generate_protocol_logs(&packets);
        let conn = &logs[&LogKind::Conn][0];
        assert_eq!(conn.get("conn_state"), Some(&LogValue::Str("REJ".into())));
        assert_eq!(conn.get("history"), Some(&LogValue::Str("Sr".into())));
        assert_eq!(conn.get("id.orig_p"), Some(&LogValue::Int(5000)));
    }

    #[test]
    fn interleaved_sessions_get_distinct_uids() {
        let packets = vec![
            tcp(1, 0, "10.0.0.2:5000", "10.0.0.1:80", TcpFlags::SYN),
            tcp(2, 5, "10.0.0.3:5001", "10.0.0.1:80", TcpFlags::SYN),
            tcp(3, 10, "10.0.0.1:80", "10.0.0.2:5000", TcpFlags::SYN | TcpFlags::ACK),
        ];
        let logs = generate_protocol_logs(&packets);
        let conns = &logs[&LogKind::Conn];
        assert_eq!(conns.len(), 2);
        assert_ne!(conns[0].uid, conns[1].uid);
        assert_eq!(conns[0].get("orig_pkts"), Some(&LogValue::Int(1)));
        assert_eq!(conns[0].get("resp_pkts"), Some(&LogValue::Int(1)));
    }

    #[test]
    fn json_line_round_trip_keeps_order() {
        let packets = vec![tcp(1, 1_500_000, "10.0.0.2:5000", "10.0.0.1:80", TcpFlags::SYN)];
        let logs = generate_protocol_logs(&packets);
        let event = &logs[&LogKind::Conn][0];
        let line = event.to_json_line();
        assert!(line.starts_with(&format!(
            r#"{{"_path":"conn","uid":"{}","ts":1.500000,"id.orig_h":"10.0.0.2","id.orig_p":5000,"id.resp_h":"10.0.0.1","id.resp_p":80,"proto":"tcp","duration":0.000000"#,
            event.uid
        )));
        let back = ProtocolEvent::from_json_line(&line).unwrap();
        assert_eq!(back.uid, event.uid);
        assert_eq!(back.ts, event.ts);
        assert_eq!(back.to_json_line(), line);
    }
}
