//! Synthetic frame and capture construction.
//!
//! Used by tests, benches and examples to produce well-formed Ethernet
//! frames and classic pcap files without external tools.

use std::net::{IpAddr, SocketAddr};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::capture::pcap::PcapWriter;
use crate::capture::{Endpoint, FlowKey, FlowTransport, MacAddr, TcpFlags, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Proto {
    Tcp,
    Udp,
    Icmp,
}

/// One frame to synthesize. Ports are ignored for ICMP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameSpec {
    pub src: SocketAddr,
    pub dst: SocketAddr,
    pub proto: Proto,
    pub flags: TcpFlags,
    pub payload: Vec<u8>,
    pub ttl: u8,
    pub src_mac: Option<MacAddr>,
    pub dst_mac: Option<MacAddr>,
}

fn addr(s: &str) -> SocketAddr {
    s.parse().unwrap_or_else(|_| panic!("bad socket address {s:?}"))
}

/// Locally administered MAC derived from an IP address.
pub fn mac_for(ip: IpAddr) -> MacAddr {
    let tail = match ip {
        IpAddr::V4(v4) => v4.octets(),
        IpAddr::V6(v6) => v6.octets()[12..].try_into().unwrap(),
    };
    MacAddr([0x02, 0x00, tail[0], tail[1], tail[2], tail[3]])
}

fn checksum(chunks: &[&[u8]]) -> u16 {
    let mut sum = 0u32;
    for chunk in chunks {
        for pair in chunk.chunks(2) {
            let word = if pair.len() == 2 {
                u16::from_be_bytes([pair[0], pair[1]])
            } else {
                u16::from_be_bytes([pair[0], 0])
            };
            sum += word as u32;
        }
    }
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

impl FrameSpec {
    pub fn tcp(src: &str, dst: &str, flags: TcpFlags) -> Self {
        Self {
            src: addr(src),
            dst: addr(dst),
            proto: Proto::Tcp,
            flags,
            payload: Vec::new(),
            ttl: 64,
            src_mac: None,
            dst_mac: None,
        }
    }

    pub fn udp(src: &str, dst: &str, payload: Vec<u8>) -> Self {
        Self {
            proto: Proto::Udp,
            flags: TcpFlags::empty(),
            payload,
            ..Self::tcp(src, dst, TcpFlags::empty())
        }
    }

    pub fn icmp_echo(src: IpAddr, dst: IpAddr) -> Self {
        Self {
            src: SocketAddr::new(src, 0),
            dst: SocketAddr::new(dst, 0),
            proto: Proto::Icmp,
            flags: TcpFlags::empty(),
            payload: vec![0; 8],
            ttl: 64,
            src_mac: None,
            dst_mac: None,
        }
    }

    pub fn with_payload(mut self, payload: impl Into<Vec<u8>>) -> Self {
        self.payload = payload.into();
        self
    }

    pub fn with_ttl(mut self, ttl: u8) -> Self {
        self.ttl = ttl;
        self
    }

    /// Same frame in the opposite direction.
    pub fn reversed(&self, flags: TcpFlags) -> Self {
        Self {
            src: self.dst,
            dst: self.src,
            flags,
            payload: Vec::new(),
            src_mac: self.dst_mac,
            dst_mac: self.src_mac,
            ..self.clone()
        }
    }

    fn l4(&self) -> Vec<u8> {
        match self.proto {
            Proto::Tcp => {
                let mut seg = Vec::with_capacity(20 + self.payload.len());
                seg.extend_from_slice(&self.src.port().to_be_bytes());
                seg.extend_from_slice(&self.dst.port().to_be_bytes());
                seg.extend_from_slice(&1u32.to_be_bytes());
                let ack = if self.flags.contains(TcpFlags::ACK) { 1u32 } else { 0 };
                seg.extend_from_slice(&ack.to_be_bytes());
                seg.push(5 << 4);
                seg.push(self.flags.bits());
                seg.extend_from_slice(&65535u16.to_be_bytes());
                seg.extend_from_slice(&[0, 0, 0, 0]);
                seg.extend_from_slice(&self.payload);
                seg
            }
            Proto::Udp => {
                let mut seg = Vec::with_capacity(8 + self.payload.len());
                seg.extend_from_slice(&self.src.port().to_be_bytes());
                seg.extend_from_slice(&self.dst.port().to_be_bytes());
                seg.extend_from_slice(&((8 + self.payload.len()) as u16).to_be_bytes());
                seg.extend_from_slice(&[0, 0]);
                seg.extend_from_slice(&self.payload);
                seg
            }
            Proto::Icmp => {
                let mut msg = vec![8, 0, 0, 0];
                msg.extend_from_slice(&self.payload);
                let c = checksum(&[&msg]);
                msg[2..4].copy_from_slice(&c.to_be_bytes());
                msg
            }
        }
    }

    fn ip_proto(&self) -> u8 {
        match (self.proto, self.src.ip()) {
            (Proto::Tcp, _) => 6,
            (Proto::Udp, _) => 17,
            (Proto::Icmp, IpAddr::V4(_)) => 1,
            (Proto::Icmp, IpAddr::V6(_)) => 58,
        }
    }

    /// IP packet (no link header).
    pub fn to_ip(&self) -> Vec<u8> {
        let l4 = self.l4();
        match (self.src.ip(), self.dst.ip()) {
            (IpAddr::V4(s), IpAddr::V4(d)) => {
                let mut h = vec![0x45, 0];
                h.extend_from_slice(&((20 + l4.len()) as u16).to_be_bytes());
                h.extend_from_slice(&[0, 1, 0x40, 0, self.ttl, self.ip_proto(), 0, 0]);
                h.extend_from_slice(&s.octets());
                h.extend_from_slice(&d.octets());
                let c = checksum(&[&h]);
                h[10..12].copy_from_slice(&c.to_be_bytes());
                h.extend_from_slice(&l4);
                h
            }
            (IpAddr::V6(s), IpAddr::V6(d)) => {
                let mut h = vec![0x60, 0, 0, 0];
                h.extend_from_slice(&(l4.len() as u16).to_be_bytes());
                h.push(self.ip_proto());
                h.push(self.ttl);
                h.extend_from_slice(&s.octets());
                h.extend_from_slice(&d.octets());
                h.extend_from_slice(&l4);
                h
            }
            _ => panic!("mixed address families in one frame"),
        }
    }

    pub fn to_ethernet(&self) -> Vec<u8> {
        let dst_mac = self.dst_mac.unwrap_or_else(|| mac_for(self.dst.ip()));
        let src_mac = self.src_mac.unwrap_or_else(|| mac_for(self.src.ip()));
        let mut frame = Vec::with_capacity(14 + 40 + 20 + self.payload.len());
        frame.extend_from_slice(&dst_mac.0);
        frame.extend_from_slice(&src_mac.0);
        let ethertype: u16 = if self.src.is_ipv4() { 0x0800 } else { 0x86dd };
        frame.extend_from_slice(&ethertype.to_be_bytes());
        frame.extend_from_slice(&self.to_ip());
        frame
    }
}

/// Accumulates frames into an Ethernet pcap.
pub struct CaptureBuilder {
    writer: PcapWriter,
    frames: usize,
}

impl Default for CaptureBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl CaptureBuilder {
    pub fn new() -> Self {
        Self {
            writer: PcapWriter::ethernet(),
            frames: 0,
        }
    }

    pub fn push(&mut self, ts: Timestamp, spec: &FrameSpec) -> &mut Self {
        self.writer.push(ts, &spec.to_ethernet());
        self.frames += 1;
        self
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn build(self) -> Vec<u8> {
        self.writer.into_bytes()
    }
}

/// Ground truth for one synthetic flow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthFlow {
    pub key: FlowKey,
    pub initiator: Endpoint,
    pub packets: usize,
    pub bytes: u64,
    pub flags: Vec<TcpFlags>,
}

/// A generated capture and the flows it was built from.
#[derive(Debug, Clone)]
pub struct SynthCapture {
    pub bytes: Vec<u8>,
    pub frames: usize,
    /// Frames that belong to no TCP/UDP flow (ICMP).
    pub non_flow_frames: usize,
    pub flows: Vec<SynthFlow>,
}

/// Random mixed traffic: interleaved TCP and UDP flows with random flag
/// sequences and payload sizes, plus a few ICMP frames.
///
/// Every flow has a distinct 5-tuple, so the returned [`SynthFlow`] list is
/// the exact grouping a correct flow assembler must recover.
pub fn random_capture(seed: u64, max_packets: usize) -> SynthCapture {
    let mut rng = StdRng::seed_from_u64(seed);
    let total = rng.gen_range(1..=max_packets.max(1));
    let mut specs: Vec<(usize, FrameSpec)> = Vec::with_capacity(total);
    let mut flows: Vec<SynthFlow> = Vec::new();
    let mut non_flow = 0;
    let mut remaining = total;
    let mut next_port = 1024u16;
    while remaining > 0 {
        if rng.gen_bool(0.05) {
            let a = IpAddr::from([10, 0, rng.gen(), rng.gen_range(1..255)]);
            let b = IpAddr::from([10, 1, rng.gen(), rng.gen_range(1..255)]);
            specs.push((usize::MAX, FrameSpec::icmp_echo(a, b)));
            non_flow += 1;
            remaining -= 1;
            continue;
        }
        let n = rng.gen_range(1..=remaining.min(40));
        remaining -= n;
        let a: SocketAddr = (IpAddr::from([10, 0, rng.gen_range(0..4), rng.gen_range(1..20)]), next_port).into();
        next_port = next_port.wrapping_add(1).max(1024);
        let b: SocketAddr = (
            IpAddr::from([192, 168, rng.gen_range(0..4), rng.gen_range(1..20)]),
            *[80u16, 443, 53, 1883, 502, 8080, 22].get(rng.gen_range(0..7)).unwrap(),
        )
            .into();
        let proto = if rng.gen_bool(0.7) { Proto::Tcp } else { Proto::Udp };
        let idx = flows.len();
        let mut flow = SynthFlow {
            key: FlowKey::new(
                Endpoint::new(a.ip(), a.port()),
                Endpoint::new(b.ip(), b.port()),
                if proto == Proto::Tcp { FlowTransport::Tcp } else { FlowTransport::Udp },
            ),
            initiator: Endpoint::new(a.ip(), a.port()),
            packets: n,
            bytes: 0,
            flags: Vec::new(),
        };
        for i in 0..n {
            let forward = i == 0 || rng.gen_bool(0.5);
            let (src, dst) = if forward { (a, b) } else { (b, a) };
            let flags = if proto == Proto::Tcp {
                TcpFlags::from_bits(rng.gen_range(0..64))
            } else {
                TcpFlags::empty()
            };
            // Application ports get opaque payloads; keep them off the
            // recognized magic bytes so parsing stays structural.
            let payload: Vec<u8> = (0..rng.gen_range(0..64)).map(|_| 0xee).collect();
            let spec = FrameSpec {
                src,
                dst,
                proto,
                flags,
                payload,
                ttl: rng.gen_range(32..=128),
                src_mac: None,
                dst_mac: None,
            };
            flow.bytes += spec.to_ethernet().len() as u64;
            if proto == Proto::Tcp {
                flow.flags.push(flags);
            }
            specs.push((idx, spec));
        }
        flows.push(flow);
    }
    // Interleave: stable shuffle that keeps each flow's internal order.
    let mut queues: Vec<std::collections::VecDeque<FrameSpec>> = vec![Default::default(); flows.len() + 1];
    for (idx, spec) in specs {
        let q = if idx == usize::MAX { flows.len() } else { idx };
        queues[q].push_back(spec);
    }
    let mut builder = CaptureBuilder::new();
    let mut ts = Timestamp::from_parts(1_700_000_000, 0).micros();
    let mut first_seen = vec![false; flows.len()];
    let mut order = Vec::new();
    loop {
        let live: Vec<usize> = (0..queues.len()).filter(|&q| !queues[q].is_empty()).collect();
        if live.is_empty() {
            break;
        }
        let q = live[rng.gen_range(0..live.len())];
        let spec = queues[q].pop_front().unwrap();
        if q < flows.len() && !first_seen[q] {
            first_seen[q] = true;
            order.push(q);
        }
        ts += rng.gen_range(0..2_000);
        builder.push(Timestamp::from_micros(ts), &spec);
    }
    let frames = builder.frames();
    let mut ordered: Vec<SynthFlow> = order.into_iter().map(|i| flows[i].clone()).collect();
    ordered.shrink_to_fit();
    SynthCapture {
        bytes: builder.build(),
        frames,
        non_flow_frames: non_flow,
        flows: ordered,
    }
}

/// SYN flood: `count` single-SYN flows from one source to one service.
pub fn syn_flood(builder: &mut CaptureBuilder, start: Timestamp, attacker: IpAddr, target: SocketAddr, count: u16) {
    for i in 0..count {
        let spec = FrameSpec {
            src: SocketAddr::new(attacker, 10_000 + i),
            dst: target,
            ..FrameSpec::tcp("0.0.0.0:0", "0.0.0.0:0", TcpFlags::SYN)
        }
        .with_ttl(48);
        builder.push(Timestamp::from_micros(start.micros() + i as i64 * 100), &spec);
    }
}

/// Port scan: one SYN to each of `ports`, each answered with RST+ACK.
pub fn port_scan(
    builder: &mut CaptureBuilder,
    start: Timestamp,
    scanner: SocketAddr,
    target: IpAddr,
    ports: std::ops::RangeInclusive<u16>,
) {
    for (i, port) in ports.enumerate() {
        let syn = FrameSpec {
            src: scanner,
            dst: SocketAddr::new(target, port),
            ..FrameSpec::tcp("0.0.0.0:0", "0.0.0.0:0", TcpFlags::SYN)
        };
        let t = start.micros() + i as i64 * 200;
        builder.push(Timestamp::from_micros(t), &syn);
        builder.push(Timestamp::from_micros(t + 50), &syn.reversed(TcpFlags::RST | TcpFlags::ACK));
    }
}
