use std::fmt;
use std::net::IpAddr;
use std::path::PathBuf;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Capture timestamp with microsecond resolution.
///
/// Rendered as epoch seconds with exactly six decimals, both in text and in
/// JSON (`1700000000.001000`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(i64);

impl Timestamp {
    pub fn from_micros(micros: i64) -> Self {
        Self(micros)
    }

    pub fn from_parts(secs: u32, micros: u32) -> Self {
        Self(secs as i64 * 1_000_000 + micros as i64)
    }

    pub fn micros(self) -> i64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    /// Seconds between `self` and a later timestamp, clamped at zero.
    pub fn seconds_until(self, later: Timestamp) -> f64 {
        (later.0 - self.0).max(0) as f64 / 1e6
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:06}", abs / 1_000_000, abs % 1_000_000)
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let raw = serde_json::value::RawValue::from_string(self.to_string())
            .map_err(serde::ser::Error::custom)?;
        raw.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let secs = f64::deserialize(deserializer)?;
        Ok(Timestamp((secs * 1e6).round() as i64))
    }
}

/// Renders seconds with six decimals as a raw JSON number.
pub(crate) fn serialize_secs<S: Serializer>(secs: &f64, serializer: S) -> Result<S::Ok, S::Error> {
    let raw = serde_json::value::RawValue::from_string(format!("{secs:.6}"))
        .map_err(serde::ser::Error::custom)?;
    raw.serialize(serializer)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MacAddr(pub [u8; 6]);

impl MacAddr {
    pub fn oui(&self) -> [u8; 3] {
        [self.0[0], self.0[1], self.0[2]]
    }

    pub fn is_group(&self) -> bool {
        self.0[0] & 0x01 != 0
    }

    pub fn is_locally_administered(&self) -> bool {
        self.0[0] & 0x02 != 0
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            o[0], o[1], o[2], o[3], o[4], o[5]
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed MAC address: {0:?}")]
pub struct MalformedMac(pub String);

impl FromStr for MacAddr {
    type Err = MalformedMac;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split([':', '-']).collect();
        if parts.len() != 6 {
            return Err(MalformedMac(s.to_string()));
        }
        let mut out = [0u8; 6];
        for (slot, part) in out.iter_mut().zip(&parts) {
            if part.len() != 2 {
                return Err(MalformedMac(s.to_string()));
            }
            *slot = u8::from_str_radix(part, 16).map_err(|_| MalformedMac(s.to_string()))?;
        }
        Ok(MacAddr(out))
    }
}

impl Serialize for MacAddr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MacAddr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// Transport-layer protocol of a packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum L4Proto {
    Tcp,
    Udp,
    Icmp,
    Other(u8),
    None,
}

impl L4Proto {
    pub fn from_ip_proto(proto: u8) -> Self {
        match proto {
            6 => L4Proto::Tcp,
            17 => L4Proto::Udp,
            1 | 58 => L4Proto::Icmp,
            p => L4Proto::Other(p),
        }
    }

    /// IANA protocol number, 0 when there is no network layer.
    pub fn number(self) -> u8 {
        match self {
            L4Proto::Tcp => 6,
            L4Proto::Udp => 17,
            L4Proto::Icmp => 1,
            L4Proto::Other(p) => p,
            L4Proto::None => 0,
        }
    }

    pub fn has_ports(self) -> bool {
        matches!(self, L4Proto::Tcp | L4Proto::Udp)
    }
}

impl fmt::Display for L4Proto {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            L4Proto::Tcp => f.write_str("tcp"),
            L4Proto::Udp => f.write_str("udp"),
            L4Proto::Icmp => f.write_str("icmp"),
            L4Proto::Other(p) => write!(f, "ip-proto-{p}"),
            L4Proto::None => f.write_str("none"),
        }
    }
}

impl Serialize for L4Proto {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for L4Proto {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(match s.as_str() {
            "tcp" => L4Proto::Tcp,
            "udp" => L4Proto::Udp,
            "icmp" => L4Proto::Icmp,
            "none" => L4Proto::None,
            other => match other.strip_prefix("ip-proto-").and_then(|n| n.parse().ok()) {
                Some(p) => L4Proto::Other(p),
                None => return Err(D::Error::custom(format!("unknown transport {other:?}"))),
            },
        })
    }
}

/// Set of TCP control flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct TcpFlags(u8);

impl TcpFlags {
    pub const FIN: TcpFlags = TcpFlags(0x01);
    pub const SYN: TcpFlags = TcpFlags(0x02);
    pub const RST: TcpFlags = TcpFlags(0x04);
    pub const PSH: TcpFlags = TcpFlags(0x08);
    pub const ACK: TcpFlags = TcpFlags(0x10);
    pub const URG: TcpFlags = TcpFlags(0x20);

    const NAMES: [(TcpFlags, &'static str, char); 6] = [
        (TcpFlags::FIN, "FIN", 'F'),
        (TcpFlags::SYN, "SYN", 'S'),
        (TcpFlags::RST, "RST", 'R'),
        (TcpFlags::PSH, "PSH", 'P'),
        (TcpFlags::ACK, "ACK", 'A'),
        (TcpFlags::URG, "URG", 'U'),
    ];

    /// Keeps the six classic flags of a raw TCP flag byte.
    pub fn from_bits(bits: u8) -> Self {
        TcpFlags(bits & 0x3f)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn empty() -> Self {
        TcpFlags(0)
    }

    pub fn contains(self, other: TcpFlags) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn names(self) -> Vec<&'static str> {
        Self::NAMES
            .iter()
            .filter(|(f, _, _)| self.contains(*f))
            .map(|(_, n, _)| *n)
            .collect()
    }

    /// Compact letter form in tcpdump order, e.g. `SA` for SYN+ACK.
    pub fn letters(self) -> String {
        const ORDER: [(TcpFlags, char); 6] = [
            (TcpFlags::SYN, 'S'),
            (TcpFlags::FIN, 'F'),
            (TcpFlags::RST, 'R'),
            (TcpFlags::PSH, 'P'),
            (TcpFlags::ACK, 'A'),
            (TcpFlags::URG, 'U'),
        ];
        let s: String = ORDER.iter().filter(|(f, _)| self.contains(*f)).map(|(_, c)| *c).collect();
        if s.is_empty() {
            ".".into()
        } else {
            s
        }
    }
}

impl std::ops::BitOr for TcpFlags {
    type Output = TcpFlags;
    fn bitor(self, rhs: TcpFlags) -> TcpFlags {
        TcpFlags(self.0 | rhs.0)
    }
}

impl fmt::Display for TcpFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.names().join(","))
    }
}

impl Serialize for TcpFlags {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.names().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TcpFlags {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let names = Vec::<String>::deserialize(deserializer)?;
        let mut flags = TcpFlags::empty();
        for name in names {
            let (flag, _, _) = TcpFlags::NAMES
                .iter()
                .find(|(_, n, _)| *n == name)
                .ok_or_else(|| D::Error::custom(format!("unknown TCP flag {name:?}")))?;
            flags = flags | *flag;
        }
        Ok(flags)
    }
}

/// Application-layer fields recognized in a packet.
///
/// Each variant carries exactly the fields of its protocol, so a DNS record
/// can never hold an HTTP path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "UPPERCASE")]
pub enum AppFields {
    Dns {
        trans_id: u16,
        is_response: bool,
        opcode: u8,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        qname: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        qtype: Option<u16>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        rcode: Option<u8>,
        #[serde(skip_serializing_if = "Vec::is_empty", default)]
        answers: Vec<String>,
    },
    Http {
        #[serde(skip_serializing_if = "Option::is_none", default)]
        method: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        path: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        host: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        status: Option<u16>,
    },
    Mqtt {
        control_type: u8,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        topic: Option<String>,
    },
    Modbus {
        trans_id: u16,
        unit_id: u8,
        function: u8,
    },
    Tls {
        handshake: u8,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        version: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        sni: Option<String>,
        /// Handshake random. Opaque; removed by cleaning.
        #[serde(skip)]
        random: Option<[u8; 32]>,
        /// Legacy session id. Opaque; removed by cleaning.
        #[serde(skip)]
        session_id: Option<Vec<u8>>,
    },
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AppKind {
    Dns,
    Http,
    Mqtt,
    Modbus,
    Tls,
    Other,
}

impl fmt::Display for AppKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AppKind::Dns => "DNS",
            AppKind::Http => "HTTP",
            AppKind::Mqtt => "MQTT",
            AppKind::Modbus => "Modbus",
            AppKind::Tls => "TLS",
            AppKind::Other => "Other",
        })
    }
}

impl AppFields {
    pub fn kind(&self) -> AppKind {
        match self {
            AppFields::Dns { .. } => AppKind::Dns,
            AppFields::Http { .. } => AppKind::Http,
            AppFields::Mqtt { .. } => AppKind::Mqtt,
            AppFields::Modbus { .. } => AppKind::Modbus,
            AppFields::Tls { .. } => AppKind::Tls,
            AppFields::Other => AppKind::Other,
        }
    }

    /// One-line human summary used in flow narratives.
    pub fn summary(&self) -> String {
        match self {
            AppFields::Dns {
                is_response: false,
                qname,
                qtype,
                ..
            } => format!(
                "DNS query {} type {}",
                qname.as_deref().unwrap_or("?"),
                qtype.map(dns_type_name).unwrap_or_else(|| "?".into())
            ),
            AppFields::Dns {
                qname,
                rcode,
                answers,
                ..
            } => {
                let mut s = format!(
                    "DNS response {} rcode {}",
                    qname.as_deref().unwrap_or("?"),
                    rcode.map(dns_rcode_name).unwrap_or("?")
                );
                if !answers.is_empty() {
                    s.push_str(&format!(" answers {}", answers.join(",")));
                }
                s
            }
            AppFields::Http {
                method: Some(m),
                path,
                host,
                ..
            } => {
                let mut s = format!("HTTP {m} {}", path.as_deref().unwrap_or("/"));
                if let Some(h) = host {
                    s.push_str(&format!(" host {h}"));
                }
                s
            }
            AppFields::Http { status, .. } => match status {
                Some(code) => format!("HTTP response {code}"),
                None => "HTTP message".into(),
            },
            AppFields::Mqtt { control_type, topic } => match topic {
                Some(t) => format!("MQTT {} topic {t}", mqtt_type_name(*control_type)),
                None => format!("MQTT {}", mqtt_type_name(*control_type)),
            },
            AppFields::Modbus {
                unit_id, function, ..
            } => format!(
                "Modbus {} (func {function}) unit {unit_id}",
                modbus_function_name(*function)
            ),
            AppFields::Tls {
                handshake,
                version,
                sni,
                ..
            } => {
                let mut s = format!("TLS {}", tls_handshake_name(*handshake));
                if let Some(v) = version {
                    s.push_str(&format!(" {v}"));
                }
                if let Some(n) = sni {
                    s.push_str(&format!(" SNI {n}"));
                }
                s
            }
            AppFields::Other => "unrecognized application data".into(),
        }
    }
}

pub fn dns_type_name(qtype: u16) -> String {
    match qtype {
        1 => "A".into(),
        2 => "NS".into(),
        5 => "CNAME".into(),
        6 => "SOA".into(),
        12 => "PTR".into(),
        15 => "MX".into(),
        16 => "TXT".into(),
        28 => "AAAA".into(),
        33 => "SRV".into(),
        255 => "ANY".into(),
        other => format!("TYPE{other}"),
    }
}

pub fn dns_rcode_name(rcode: u8) -> &'static str {
    match rcode {
        0 => "NOERROR",
        1 => "FORMERR",
        2 => "SERVFAIL",
        3 => "NXDOMAIN",
        4 => "NOTIMP",
        5 => "REFUSED",
        _ => "OTHER",
    }
}

pub fn mqtt_type_name(control_type: u8) -> &'static str {
    match control_type {
        1 => "CONNECT",
        2 => "CONNACK",
        3 => "PUBLISH",
        4 => "PUBACK",
        5 => "PUBREC",
        6 => "PUBREL",
        7 => "PUBCOMP",
        8 => "SUBSCRIBE",
        9 => "SUBACK",
        10 => "UNSUBSCRIBE",
        11 => "UNSUBACK",
        12 => "PINGREQ",
        13 => "PINGRESP",
        14 => "DISCONNECT",
        15 => "AUTH",
        _ => "RESERVED",
    }
}

pub fn modbus_function_name(function: u8) -> &'static str {
    match function & 0x7f {
        1 => "READ_COILS",
        2 => "READ_DISCRETE_INPUTS",
        3 => "READ_HOLDING_REGISTERS",
        4 => "READ_INPUT_REGISTERS",
        5 => "WRITE_SINGLE_COIL",
        6 => "WRITE_SINGLE_REGISTER",
        15 => "WRITE_MULTIPLE_COILS",
        16 => "WRITE_MULTIPLE_REGISTERS",
        23 => "READ_WRITE_MULTIPLE_REGISTERS",
        43 => "ENCAPSULATED_INTERFACE_TRANSPORT",
        _ => "UNKNOWN_FUNCTION",
    }
}

pub fn tls_handshake_name(handshake: u8) -> &'static str {
    match handshake {
        1 => "ClientHello",
        2 => "ServerHello",
        11 => "Certificate",
        16 => "ClientKeyExchange",
        _ => "Handshake",
    }
}

/// One cleaned, layered view of a captured frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub frame_no: u32,
    pub ts: Timestamp,
    pub frame_len: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eth_src: Option<MacAddr>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eth_dst: Option<MacAddr>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ip_src: Option<IpAddr>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ip_dst: Option<IpAddr>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ip_ttl: Option<u8>,
    pub transport: L4Proto,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub src_port: Option<u16>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dst_port: Option<u16>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tcp_flags: Option<TcpFlags>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tcp_seq: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tcp_ack: Option<u32>,
    /// Length of the transport payload. The bytes themselves are not kept.
    #[serde(default)]
    pub payload_len: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub app: Option<AppFields>,
    /// Raw transport payload; present only before cleaning.
    #[serde(skip)]
    pub payload: Option<Vec<u8>>,
}

impl PacketRecord {
    pub fn new(frame_no: u32, ts: Timestamp, frame_len: u32) -> Self {
        Self {
            frame_no,
            ts,
            frame_len,
            eth_src: None,
            eth_dst: None,
            ip_src: None,
            ip_dst: None,
            ip_ttl: None,
            transport: L4Proto::None,
            src_port: None,
            dst_port: None,
            tcp_flags: None,
            tcp_seq: None,
            tcp_ack: None,
            payload_len: 0,
            app: None,
            payload: None,
        }
    }

    /// One-line JSON view used for the packet-layer artifact.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("packet record serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkType {
    Ethernet,
    RawIp,
    Other(u32),
}

impl LinkType {
    pub fn from_code(code: u32) -> Self {
        match code {
            1 => LinkType::Ethernet,
            101 | 228 | 229 => LinkType::RawIp,
            other => LinkType::Other(other),
        }
    }
}

/// Identity and parse summary of a capture file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawCapture {
    pub path: PathBuf,
    pub byte_len: u64,
    pub content_hash: String,
    pub link_type: LinkType,
    pub nanosecond: bool,
    pub frame_count: usize,
    /// Frames whose layers could only be partially decoded.
    pub parse_warnings: usize,
    /// Set when the last record header promised more bytes than remained.
    pub truncated: bool,
}
