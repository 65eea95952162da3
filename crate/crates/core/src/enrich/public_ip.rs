use std::collections::{BTreeMap, BTreeSet};
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use crate::features::{ClassLabel, InterpretationReport};
use crate::flow::FlowAssembly;

fn v4_public(ip: Ipv4Addr) -> bool {
    let o = ip.octets();
    let in_net = |net: [u8; 4], bits: u32| {
        let mask = if bits == 0 { 0 } else { u32::MAX << (32 - bits) };
        (u32::from(ip) & mask) == (u32::from_be_bytes(net) & mask)
    };
    !(ip.is_private()
        || ip.is_loopback()
        || ip.is_link_local()
        || ip.is_multicast()
        || ip.is_broadcast()
        || ip.is_unspecified()
        || ip.is_documentation()
        || o[0] == 0
        || in_net([100, 64, 0, 0], 10)
        || in_net([192, 0, 0, 0], 24)
        || in_net([198, 18, 0, 0], 15)
        || in_net([240, 0, 0, 0], 4))
}

fn v6_public(ip: Ipv6Addr) -> bool {
    if let Some(v4) = ip.to_ipv4_mapped() {
        return v4_public(v4);
    }
    let s = ip.segments();
    !(ip.is_unspecified()
        || ip.is_loopback()
        || ip.is_multicast()
        || (s[0] & 0xffc0) == 0xfe80
        || (s[0] & 0xfe00) == 0xfc00
        || (s[0] == 0x2001 && s[1] == 0x0db8))
}

/// True for globally routable unicast addresses.
///
/// Excludes private (RFC 1918, unique-local), loopback, link-local,
/// multicast, broadcast, unspecified, `0.0.0.0/8`, CGNAT `100.64.0.0/10`,
/// IETF protocol assignments `192.0.0.0/24`, benchmarking `198.18.0.0/15`,
/// reserved `240.0.0.0/4` and all documentation ranges.
pub fn is_public(ip: IpAddr) -> bool {
    match ip {
        IpAddr::V4(v4) => v4_public(v4),
        IpAddr::V6(v6) => v6_public(v6),
    }
}

/// Public IPs mentioned in each attack label's metadata.
pub fn find_public_ips(report: &InterpretationReport) -> BTreeMap<ClassLabel, BTreeSet<IpAddr>> {
    report
        .metadata
        .iter()
        .filter_map(|(label, m)| {
            let ips: BTreeSet<IpAddr> = m.ips().into_iter().filter(|ip| is_public(*ip)).collect();
            (!ips.is_empty()).then_some((*label, ips))
        })
        .collect()
}

/// Public endpoint IPs across all flows.
pub fn public_ips_in_flows(flows: &FlowAssembly) -> BTreeSet<IpAddr> {
    flows
        .flows
        .iter()
        .flat_map(|f| [f.key.ep_a.ip, f.key.ep_b.ip])
        .filter(|ip| is_public(*ip))
        .collect()
}
