//! Link, network and transport decoding of a single frame.

use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use super::app;
use super::record::{L4Proto, LinkType, MacAddr, PacketRecord, TcpFlags, Timestamp};

const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_IPV6: u16 = 0x86dd;
const ETHERTYPE_VLAN: u16 = 0x8100;
const ETHERTYPE_QINQ: u16 = 0x88a8;

/// Result of decoding one frame.
pub struct Dissected {
    pub record: PacketRecord,
    /// True when some layer was present but could not be fully decoded.
    pub warning: bool,
}

fn be16(b: &[u8]) -> u16 {
    u16::from_be_bytes([b[0], b[1]])
}

fn be32(b: &[u8]) -> u32 {
    u32::from_be_bytes([b[0], b[1], b[2], b[3]])
}

pub fn dissect(frame_no: u32, ts: Timestamp, orig_len: u32, data: &[u8], link: LinkType) -> Dissected {
    let mut record = PacketRecord::new(frame_no, ts, orig_len);
    let mut warning = false;
    match link {
        LinkType::Ethernet => {
            if data.len() < 14 {
                warning = true;
            } else {
                record.eth_dst = Some(MacAddr(data[0..6].try_into().unwrap()));
                record.eth_src = Some(MacAddr(data[6..12].try_into().unwrap()));
                let mut ethertype = be16(&data[12..]);
                let mut offset = 14;
                while matches!(ethertype, ETHERTYPE_VLAN | ETHERTYPE_QINQ) {
                    if data.len() < offset + 4 {
                        warning = true;
                        break;
                    }
                    ethertype = be16(&data[offset + 2..]);
                    offset += 4;
                }
                match ethertype {
                    ETHERTYPE_IPV4 | ETHERTYPE_IPV6 => {
                        warning |= !network(&mut record, &data[offset.min(data.len())..]);
                    }
                    _ => {}
                }
            }
        }
        LinkType::RawIp => warning |= !network(&mut record, data),
        LinkType::Other(_) => {}
    }
    Dissected { record, warning }
}

/// Decodes the IP layer and everything above it. Returns false on damage.
fn network(record: &mut PacketRecord, data: &[u8]) -> bool {
    match data.first().map(|b| b >> 4) {
        Some(4) => ipv4(record, data),
        Some(6) => ipv6(record, data),
        _ => false,
    }
}

fn ipv4(record: &mut PacketRecord, data: &[u8]) -> bool {
    if data.len() < 20 {
        return false;
    }
    let ihl = ((data[0] & 0x0f) as usize) * 4;
    if ihl < 20 || data.len() < ihl {
        return false;
    }
    let total_len = (be16(&data[2..]) as usize).clamp(ihl, data.len());
    let frag_offset = be16(&data[6..]) & 0x1fff;
    let proto = data[9];
    record.ip_ttl = Some(data[8]);
    record.ip_src = Some(IpAddr::V4(Ipv4Addr::new(data[12], data[13], data[14], data[15])));
    record.ip_dst = Some(IpAddr::V4(Ipv4Addr::new(data[16], data[17], data[18], data[19])));
    if frag_offset != 0 {
        // Non-first fragment: no transport header to read.
        record.transport = L4Proto::Other(proto);
        return true;
    }
    transport(record, proto, &data[ihl..total_len])
}

fn ipv6(record: &mut PacketRecord, data: &[u8]) -> bool {
    if data.len() < 40 {
        return false;
    }
    record.ip_ttl = Some(data[7]);
    let src: [u8; 16] = data[8..24].try_into().unwrap();
    let dst: [u8; 16] = data[24..40].try_into().unwrap();
    record.ip_src = Some(IpAddr::V6(Ipv6Addr::from(src)));
    record.ip_dst = Some(IpAddr::V6(Ipv6Addr::from(dst)));
    let payload_len = be16(&data[4..]) as usize;
    let end = (40 + payload_len).min(data.len());
    let mut next = data[6];
    let mut offset = 40;
    loop {
        match next {
            0 | 43 | 60 => {
                if end < offset + 8 {
                    return false;
                }
                let len = (data[offset + 1] as usize + 1) * 8;
                next = data[offset];
                offset += len;
                if offset > end {
                    return false;
                }
            }
            44 => {
                record.transport = L4Proto::Other(44);
                return true;
            }
            _ => break,
        }
    }
    transport(record, next, &data[offset..end])
}

fn transport(record: &mut PacketRecord, proto: u8, seg: &[u8]) -> bool {
    record.transport = L4Proto::from_ip_proto(proto);
    match record.transport {
        L4Proto::Tcp => {
            if seg.len() < 20 {
                record.transport = L4Proto::Other(proto);
                return false;
            }
            let data_offset = ((seg[12] >> 4) as usize) * 4;
            record.src_port = Some(be16(seg));
            record.dst_port = Some(be16(&seg[2..]));
            record.tcp_seq = Some(be32(&seg[4..]));
            record.tcp_ack = Some(be32(&seg[8..]));
            record.tcp_flags = Some(TcpFlags::from_bits(seg[13]));
            if data_offset < 20 || data_offset > seg.len() {
                return false;
            }
            let payload = &seg[data_offset..];
            record.payload_len = payload.len() as u32;
            if !payload.is_empty() {
                record.app = app::dissect_tcp(record.src_port.unwrap(), record.dst_port.unwrap(), payload);
                record.payload = Some(payload.to_vec());
            }
            true
        }
        L4Proto::Udp => {
            if seg.len() < 8 {
                record.transport = L4Proto::Other(proto);
                return false;
            }
            record.src_port = Some(be16(seg));
            record.dst_port = Some(be16(&seg[2..]));
            let payload = &seg[8..];
            record.payload_len = payload.len() as u32;
            if !payload.is_empty() {
                record.app = app::dissect_udp(record.src_port.unwrap(), record.dst_port.unwrap(), payload);
                record.payload = Some(payload.to_vec());
            }
            true
        }
        _ => true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{FrameSpec, Proto};

    #[test]
    fn short_ethernet_frame_degrades_with_warning() {
        let d = dissect(1, Timestamp::default(), 10, &[0u8; 10], LinkType::Ethernet);
        assert!(d.warning);
        assert_eq!(d.record.transport, L4Proto::None);
        assert!(d.record.eth_src.is_none());
    }

    #[test]
    fn truncated_tcp_header_keeps_ip_fields() {
        let frame = FrameSpec::tcp("10.0.0.2:1000", "10.0.0.1:80", TcpFlags::SYN).to_ethernet();
        let cut = &frame[..14 + 20 + 10];
        let d = dissect(1, Timestamp::default(), cut.len() as u32, cut, LinkType::Ethernet);
        assert!(d.warning);
        assert_eq!(d.record.transport, L4Proto::Other(6));
        assert!(d.record.ip_src.is_some());
        assert!(d.record.src_port.is_none());
    }

    #[test]
    fn ipv6_udp_is_decoded() {
        let spec = FrameSpec {
            src: "[fe80::1]:5353".parse().unwrap(),
            dst: "[ff02::fb]:5353".parse().unwrap(),
            proto: Proto::Udp,
            flags: TcpFlags::empty(),
            payload: vec![0; 4],
            ttl: 255,
            src_mac: None,
            dst_mac: None,
        };
        let frame = spec.to_ethernet();
        let d = dissect(1, Timestamp::default(), frame.len() as u32, &frame, LinkType::Ethernet);
        assert!(!d.warning);
        assert_eq!(d.record.transport, L4Proto::Udp);
        assert_eq!(d.record.src_port, Some(5353));
        assert_eq!(d.record.ip_ttl, Some(255));
    }

    #[test]
    fn vlan_tag_is_skipped() {
        let mut frame = FrameSpec::tcp("10.0.0.2:1000", "10.0.0.1:80", TcpFlags::SYN).to_ethernet();
        let tag = [0x81, 0x00, 0x00, 0x0a];
        frame.splice(12..12, tag);
        let d = dissect(1, Timestamp::default(), frame.len() as u32, &frame, LinkType::Ethernet);
        assert_eq!(d.record.transport, L4Proto::Tcp);
        assert_eq!(d.record.dst_port, Some(80));
    }

    #[test]
    fn raw_ip_link_type() {
        let frame = FrameSpec::tcp("10.0.0.2:1000", "10.0.0.1:80", TcpFlags::SYN).to_ethernet();
        let d = dissect(1, Timestamp::default(), 40, &frame[14..], LinkType::RawIp);
        assert_eq!(d.record.transport, L4Proto::Tcp);
        assert!(d.record.eth_src.is_none());
    }
}
