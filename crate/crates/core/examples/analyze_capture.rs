//! Runs the full analysis over a capture and prints the enriched report.
//!
//! cargo run --example analyze_capture -- [path.pcap]

use capsight::pipeline::{analyze_path, default_fixture_dir, Clients};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| default_fixture_dir().join("iot_mixed.pcap").display().to_string());
    let clients = Clients::offline(default_fixture_dir());
    let a = analyze_path(&path, &clients, true)?;
    println!("{} packets, {} flows", a.packets.len(), a.flows.flows.len());
    println!("{}", a.report.render());
    println!("--- predictions ---\n{}", a.predictions_csv);
    println!("--- flow summary ---\n{}", a.artifacts.flow_summary);
    Ok(())
}
