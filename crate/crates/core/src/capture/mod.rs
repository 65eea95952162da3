//! Capture ingest: pcap parsing, frame dissection, cleaning and protocol logs.
//!
//! ```no_run
//! let (capture, packets) = capsight::capture::parse_capture("trace.pcap")?;
//! let logs = capsight::capture::generate_protocol_logs(&packets);
//! println!("{} frames, {} conn events", capture.frame_count, logs[&capsight::capture::LogKind::Conn].len());
//! # Ok::<(), capsight::capture::CaptureError>(())
//! ```

mod app;
mod clean;
mod dissect;
mod logs;
pub mod pcap;
mod record;
mod session;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

pub use clean::clean_packet;
pub use dissect::{dissect, Dissected};
pub use logs::{generate_protocol_logs, logs_to_jsonl, LogKind, LogValue, ProtocolEvent, ProtocolLogs};
pub use record::{
    dns_rcode_name, dns_type_name, modbus_function_name, mqtt_type_name, tls_handshake_name, AppFields,
    AppKind, L4Proto, LinkType, MacAddr, MalformedMac, PacketRecord, RawCapture, TcpFlags, Timestamp,
};
pub use session::{Endpoint, FlowKey, FlowTransport};

#[derive(Debug, thiserror::Error)]
pub enum CaptureError {
    #[error("capture file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("not a classic pcap file (detected: {detected})")]
    NotAPcap { detected: String },
    #[error("capture is truncated after {frames} complete frames")]
    TruncatedCapture { frames: usize },
    #[error("reading capture: {0}")]
    Io(#[from] io::Error),
}

/// Lowercase hex SHA-256 of the capture bytes.
pub fn capture_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read(path: &Path) -> Result<Vec<u8>, CaptureError> {
    fs::read(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => CaptureError::FileNotFound(path.to_path_buf()),
        _ => CaptureError::Io(e),
    })
}

/// Parses a capture file into cleaned packet records, one per frame.
///
/// Frames whose layers cannot be fully decoded are kept with the layers
/// that did decode and counted in [`RawCapture::parse_warnings`]. A file
/// whose last record is cut short is rejected with
/// [`CaptureError::TruncatedCapture`]; see [`parse_capture_lenient`].
pub fn parse_capture(path: impl AsRef<Path>) -> Result<(RawCapture, Vec<PacketRecord>), CaptureError> {
    let (capture, packets) = parse_capture_lenient(path)?;
    if capture.truncated {
        return Err(CaptureError::TruncatedCapture {
            frames: capture.frame_count,
        });
    }
    Ok((capture, packets))
}

/// Like [`parse_capture`] but keeps the complete frames of a truncated file.
pub fn parse_capture_lenient(
    path: impl AsRef<Path>,
) -> Result<(RawCapture, Vec<PacketRecord>), CaptureError> {
    let path = path.as_ref();
    let bytes = read(path)?;
    let (mut capture, packets) = parse_bytes(&bytes)?;
    capture.path = path.to_path_buf();
    Ok((capture, packets))
}

/// Parses an in-memory capture. The returned [`RawCapture::path`] is empty.
pub fn parse_bytes(bytes: &[u8]) -> Result<(RawCapture, Vec<PacketRecord>), CaptureError> {
    let mut frames = pcap::FrameIter::new(bytes)?;
    let header = frames.header();
    let mut packets = Vec::new();
    let mut warnings = 0;
    for (i, frame) in frames.by_ref().enumerate() {
        let d = dissect(i as u32 + 1, frame.ts, frame.orig_len, frame.data, header.link_type);
        if d.warning {
            warnings += 1;
        }
        packets.push(clean_packet(d.record));
    }
    let capture = RawCapture {
        path: PathBuf::new(),
        byte_len: bytes.len() as u64,
        content_hash: capture_hash(bytes),
        link_type: header.link_type,
        nanosecond: header.nanosecond,
        frame_count: packets.len(),
        parse_warnings: warnings,
        truncated: frames.truncated(),
    };
    Ok((capture, packets))
}

/// Packet-layer artifact: one JSON object per frame.
pub fn packets_to_jsonl(packets: &[PacketRecord]) -> String {
    let mut out = String::new();
    for p in packets {
        out.push_str(&p.to_json_line());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_file_is_reported() {
        match parse_capture("/nonexistent/x.pcap") {
            Err(CaptureError::FileNotFound(p)) => assert!(p.ends_with("x.pcap")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncated_last_record() {
        let mut w = pcap::PcapWriter::ethernet();
        w.push(Timestamp::from_parts(1, 0), &[0u8; 60]);
        w.push(Timestamp::from_parts(2, 0), &[0u8; 60]);
        let mut bytes = w.into_bytes();
        bytes.truncate(bytes.len() - 10);
        let (cap, packets) = parse_bytes(&bytes).unwrap();
        assert!(cap.truncated);
        assert_eq!(packets.len(), 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pcap");
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            parse_capture(&path),
            Err(CaptureError::TruncatedCapture { frames: 1 })
        ));
        assert_eq!(parse_capture_lenient(&path).unwrap().1.len(), 1);
    }

    #[test]
    fn records_are_cleaned() {
        let frame = crate::synth::FrameSpec::udp("10.0.0.2:4000", "10.0.0.3:9999", vec![1, 2, 3]).to_ethernet();
        let mut w = pcap::PcapWriter::ethernet();
        w.push(Timestamp::from_parts(1, 0), &frame);
        let (_, packets) = parse_bytes(&w.into_bytes()).unwrap();
        assert_eq!(packets[0].payload, None);
        assert_eq!(packets[0].payload_len, 3);
    }
}
