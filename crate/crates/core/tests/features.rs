use capsight::capture::parse_capture;
use capsight::features::{
    build_report, classify_rows, extract_features, parse_sections, parse_text, predictions_csv, textualize,
    textualize_pairs, ClassLabel, Classifier, FeatureRow, ReferenceRules, RowKind, FLOW_SCHEMA, PACKET_SCHEMA,
};
use capsight::flow::assemble_flows;
use capsight::pipeline::default_fixture_dir;
use proptest::prelude::*;

fn rows_of(name: &str) -> (Vec<capsight::capture::PacketRecord>, capsight::flow::FlowAssembly, Vec<FeatureRow>) {
    let (_, packets) = parse_capture(default_fixture_dir().join(name)).unwrap();
    let flows = assemble_flows(&packets);
    let rows = extract_features(&packets, &flows);
    (packets, flows, rows)
}

#[test]
fn handshake_rows() {
    let (_, _, rows) = rows_of("handshake.pcap");
    let kinds: Vec<RowKind> = rows.iter().map(|r| r.row_kind).collect();
    assert_eq!(kinds, [RowKind::Packet, RowKind::Packet, RowKind::Packet, RowKind::Flow]);
    let names: Vec<&str> = rows[0].values.iter().map(|(k, _)| k.as_str()).collect();
    assert_eq!(names, PACKET_SCHEMA);
    let names: Vec<&str> = rows[3].values.iter().map(|(k, _)| k.as_str()).collect();
    assert_eq!(names, FLOW_SCHEMA);
    assert_eq!(rows[0].get("tcp.flags.syn"), Some("1"));
    assert_eq!(rows[0].get("tcp.flags.ack"), Some("0"));
    assert_eq!(rows[3].get("pkt_count"), Some("3"));
}

#[test]
fn textualize_examples() {
    let pairs = |v: &[(&str, &str)]| v.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect::<Vec<_>>();
    assert_eq!(textualize_pairs(&pairs(&[("ip.ttl", "64"), ("tcp.dstport", "80")])), "ip.ttl:64 tcp.dstport:80");
    assert_eq!(textualize_pairs(&[]), "");
    let odd = pairs(&[("a b", "c:d"), ("x\\", "")]);
    assert_eq!(parse_text(&textualize_pairs(&odd)), odd);
}

fn field() -> impl Strategy<Value = String> {
    "[a-z:\\\\ _.]{0,6}"
}

proptest! {
    #[test]
    fn textualize_round_trips(v in prop::collection::vec((field(), field()), 0..6)) {
        let t = textualize_pairs(&v);
        prop_assert_eq!(parse_text(&t), v);
    }

    #[test]
    fn textualize_is_injective(a in prop::collection::vec((field(), field()), 0..4),
                               b in prop::collection::vec((field(), field()), 0..4)) {
        if a != b {
            prop_assert_ne!(textualize_pairs(&a), textualize_pairs(&b));
        }
    }
}

#[test]
fn reference_rules() {
    let r = ReferenceRules::default();
    assert_eq!(r.classify("syn_count:150 ack_ratio:0.05 distinct_dst_ports:1").unwrap(), (ClassLabel::DDoS_TCP, 0.95));
    assert_eq!(r.matching_rule("distinct_dst_ports:300").unwrap().id, "F2");
    assert_eq!(r.matching_rule("flow.proto:udp pkt_count:500 distinct_dst_ports:2").unwrap().id, "F3");
    assert_eq!(r.matching_rule("ip.proto:1 pair.pkts:100").unwrap().id, "P1");
    assert!(r.matching_rule("syn_count:150 ack_ratio:0.5 distinct_dst_ports:1").is_none());
    assert_eq!(r.classify("ip.ttl:64").unwrap(), (ClassLabel::Normal, 0.60));
}

#[test]
fn mixed_capture_report() {
    let (packets, flows, rows) = rows_of("iot_mixed.pcap");
    let rows_again = rows.clone();
    let classified = classify_rows(rows, &ReferenceRules::default()).unwrap();
    let report = build_report(&classified, &packets, &flows);
    assert_eq!(report.counts[&ClassLabel::DDoS_TCP], 300);
    assert_eq!(report.counts[&ClassLabel::Port_Scanning], 240);
    assert_eq!(report.counts[&ClassLabel::Normal], 152);
    assert!(report.normal_section.is_some());
    assert!(report.metadata[&ClassLabel::DDoS_TCP].ips().contains(&"52.0.0.1".parse().unwrap()));

    let text = report.render();
    let titles: Vec<String> = parse_sections(&text).into_iter().map(|s| s.title).collect();
    assert_eq!(titles[0], "Global Summary");
    assert!(titles.contains(&"Metadata: Port_Scanning".to_string()));

    let classified2 = classify_rows(rows_again, &ReferenceRules::default()).unwrap();
    assert_eq!(build_report(&classified2, &packets, &flows).render(), text);
    let csv = predictions_csv(&classified, &flows);
    assert_eq!(csv.lines().count(), classified.len() + 1);
}

#[test]
fn every_row_text_parses_back() {
    let (_, _, rows) = rows_of("iot_mixed.pcap");
    for r in rows.iter().take(50) {
        assert_eq!(parse_text(&textualize(r)), r.values);
    }
}
