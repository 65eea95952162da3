use capsight::capture::{parse_capture, TcpFlags};
use capsight::flow::{
    assemble_flows, decode_flag_sequence, render_narrative, render_narratives, resolve_vendor_str, split_blocks,
    ConnectionSignature, OuiTable, ReputationSource, ReputationTag, Verdict,
};
use capsight::pipeline::default_fixture_dir;
use proptest::prelude::*;

fn flows_of(name: &str) -> capsight::flow::FlowAssembly {
    let (_, packets) = parse_capture(default_fixture_dir().join(name)).unwrap();
    assemble_flows(&packets)
}

#[test]
fn handshake_is_one_flow() {
    let fa = flows_of("handshake.pcap");
    assert_eq!(fa.flows.len(), 1);
    let f = &fa.flows[0];
    assert_eq!(f.pkt_count, 3);
    assert_eq!(f.flag_seq, [TcpFlags::SYN, TcpFlags::SYN | TcpFlags::ACK, TcpFlags::ACK]);
    assert_eq!(f.signature(), ConnectionSignature::CompleteHandshake);
    assert_eq!(fa.total_packets(), 3);
}

#[test]
fn dns_flow_carries_the_query() {
    let fa = flows_of("dns_query.pcap");
    assert_eq!(fa.flows.len(), 1);
    assert_eq!(fa.flows[0].pkt_count, 2);
    assert!(fa.flows[0].app_cues.iter().any(|c| c.contains("sensor.local")), "{:?}", fa.flows[0].app_cues);
    assert!(fa.flows[0].flag_seq.is_empty());
}

#[test]
fn narrative_layout() {
    let mut fa = flows_of("handshake.pcap");
    let f = &fa.flows[0];
    let n = render_narrative(f, f.signature());
    let first = n.text.lines().next().unwrap();
    assert_eq!(first, format!("Flow {}: 10.0.0.2:49152 <-> 10.0.0.1:80 (TCP)", f.uid));
    assert!(n.text.ends_with("\n\n"));
    assert!(n.text.contains("Reputation: not assessed"));

    let dst: std::net::IpAddr = "10.0.0.1".parse().unwrap();
    fa.annotate_reputation(|ip| (ip == dst).then(|| ReputationTag::from_confidence(ReputationSource::AbuseIpdb, 90)));
    let f = &fa.flows[0];
    let n = render_narrative(f, f.signature());
    assert!(n.text.contains("Reputation: dst abuse-confidence 90 (Malicious)\n"), "{}", n.text);
}

#[test]
fn narratives_split_back_into_blocks() {
    let fa = flows_of("iot_mixed.pcap");
    let text = render_narratives(&fa);
    let blocks = split_blocks(&text);
    let flow_blocks = blocks.iter().filter(|b| b.starts_with("Flow ")).count();
    assert_eq!(flow_blocks, fa.flows.len());
    for f in &fa.flows {
        assert!(text.contains(&format!("Flow {}:", f.uid)));
    }
}

#[test]
fn vendor_lookup() {
    let mut t = OuiTable::new();
    t.insert([0xb8, 0x27, 0xeb], "Raspberry Pi Foundation");
    assert_eq!(resolve_vendor_str("b8:27:eb:01:02:03", &t).unwrap(), "Raspberry Pi Foundation");
    assert_eq!(resolve_vendor_str("02:00:00:00:00:01", &t).unwrap(), "Locally Administered");
    assert_eq!(resolve_vendor_str("00:11:22:33:44:55", &OuiTable::new()).unwrap(), "Unknown");
    assert!(resolve_vendor_str("not-a-mac", &t).is_err());
    assert!(!OuiTable::builtin().is_empty());
}

#[test]
fn verdict_thresholds() {
    let v = |c| ReputationTag::from_confidence(ReputationSource::AbuseIpdb, c).verdict;
    assert_eq!([v(0), v(24), v(25), v(74), v(75), v(255)], [
        Verdict::Benign,
        Verdict::Benign,
        Verdict::Suspicious,
        Verdict::Suspicious,
        Verdict::Malicious,
        Verdict::Malicious
    ]);
}

fn flags() -> impl Strategy<Value = TcpFlags> {
    (0u8..64).prop_map(TcpFlags::from_bits)
}

proptest! {
    #[test]
    fn signature_is_total_and_stable(seq in prop::collection::vec(flags(), 0..=32)) {
        let a = decode_flag_sequence(&seq);
        prop_assert_eq!(a, decode_flag_sequence(&seq));
        prop_assert!(!a.name().is_empty());
    }
}
