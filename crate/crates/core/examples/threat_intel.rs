//! Looks up threat intelligence for a few addresses from the bundled
//! fixtures. Pass `--live` to query the real providers instead (set
//! VT_API_KEY and ABUSEIPDB_API_KEY).
//!
//! cargo run --example threat_intel -- [--live] [ip ...]

use std::collections::BTreeSet;
use std::net::IpAddr;
use std::sync::Arc;

use capsight::enrich::IntelClient;
use capsight::pipeline::default_fixture_dir;
use capsight::transport::UreqTransport;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut live = false;
    let mut ips = BTreeSet::new();
    for a in std::env::args().skip(1) {
        if a == "--live" {
            live = true;
        } else {
            ips.insert(a.parse::<IpAddr>()?);
        }
    }
    if ips.is_empty() {
        ips = ["52.0.0.1", "45.33.32.156", "8.8.8.8", "10.0.0.1"]
            .iter()
            .map(|s| s.parse())
            .collect::<Result<_, _>>()?;
    }
    let client = if live {
        IntelClient::live(Arc::new(UreqTransport::default()))
    } else {
        IntelClient::fixtures(default_fixture_dir().join("intel"))
    };
    for (ip, res) in client.lookup_many(&ips) {
        match res {
            Ok(rec) => print!("{}", rec.render_block()),
            Err(e) => println!("{ip}: {e}"),
        }
    }
    Ok(())
}
