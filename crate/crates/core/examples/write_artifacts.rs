//! Writes the four evidence artifacts of a capture to a directory.
//!
//! cargo run --example write_artifacts -- capture.pcap out_dir

use capsight::corpus::ArtifactPaths;
use capsight::pipeline::{analyze_path, default_fixture_dir, Clients};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let pcap = args
        .next()
        .unwrap_or_else(|| default_fixture_dir().join("iot_mixed.pcap").display().to_string());
    let out = args.next().unwrap_or_else(|| "artifacts".into());
    std::fs::create_dir_all(&out)?;
    let a = analyze_path(&pcap, &Clients::offline(default_fixture_dir()), true)?;
    let paths = ArtifactPaths::in_dir(&out);
    paths.write(&a.artifacts)?;
    std::fs::write(std::path::Path::new(&out).join("predictions.csv"), &a.predictions_csv)?;
    println!("wrote artifacts for {} packets to {out}", a.packets.len());
    Ok(())
}
