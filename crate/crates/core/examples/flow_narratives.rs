//! Rebuilds flows from a capture and prints the global summary and one
//! narrative block per flow, with vendors resolved from the built-in OUI
//! table.
//!
//! cargo run --example flow_narratives -- [path.pcap]

use capsight::capture::parse_capture_lenient;
use capsight::flow::{assemble_flows, render_global_summary, render_narrative, OuiTable};
use capsight::pipeline::default_fixture_dir;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| default_fixture_dir().join("iot_mixed.pcap").display().to_string());
    let (_, packets) = parse_capture_lenient(&path)?;
    let mut flows = assemble_flows(&packets);
    flows.resolve_vendors(&OuiTable::builtin());
    println!("{}", render_global_summary(&flows));
    for f in flows.flows.iter().take(10) {
        print!("{}", render_narrative(f, f.signature()).text);
    }
    if flows.flows.len() > 10 {
        println!("... {} more flows", flows.flows.len() - 10);
    }
    Ok(())
}
