use std::fmt;

use serde::{Deserialize, Serialize};

use crate::capture::TcpFlags;

/// Connection-state signature of one flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConnectionSignature {
    CompleteHandshake,
    HandshakeInProgress,
    MidstreamReset,
    PrematureTermination,
    RejectedOnConnect,
    GracefulClose,
    NoHandshakeObserved,
    Udp,
}

impl ConnectionSignature {
    pub const ALL: [ConnectionSignature; 8] = [
        ConnectionSignature::CompleteHandshake,
        ConnectionSignature::HandshakeInProgress,
        ConnectionSignature::MidstreamReset,
        ConnectionSignature::PrematureTermination,
        ConnectionSignature::RejectedOnConnect,
        ConnectionSignature::GracefulClose,
        ConnectionSignature::NoHandshakeObserved,
        ConnectionSignature::Udp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConnectionSignature::CompleteHandshake => "CompleteHandshake",
            ConnectionSignature::HandshakeInProgress => "HandshakeInProgress",
            ConnectionSignature::MidstreamReset => "MidstreamReset",
            ConnectionSignature::PrematureTermination => "PrematureTermination",
            ConnectionSignature::RejectedOnConnect => "RejectedOnConnect",
            ConnectionSignature::GracefulClose => "GracefulClose",
            ConnectionSignature::NoHandshakeObserved => "NoHandshakeObserved",
            ConnectionSignature::Udp => "Udp",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ConnectionSignature::CompleteHandshake => "three-way handshake completed, connection left open",
            ConnectionSignature::HandshakeInProgress => "SYN sent, handshake not completed",
            ConnectionSignature::MidstreamReset => "connection reset (RST) after the handshake completed",
            ConnectionSignature::PrematureTermination => "terminated (FIN or late RST) before the handshake completed",
            ConnectionSignature::RejectedOnConnect => "connection attempt rejected with a reset (RST)",
            ConnectionSignature::GracefulClose => "handshake completed and closed with FIN exchange",
            ConnectionSignature::NoHandshakeObserved => "no opening SYN observed in the capture",
            ConnectionSignature::Udp => "connectionless UDP exchange",
        }
    }
}

impl fmt::Display for ConnectionSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Decodes a TCP flag sequence into a connection signature.
///
/// Positions are relative to the first opening SYN (SYN without ACK).
/// The handshake completes at the first ACK (without SYN or RST) that
/// follows a SYN+ACK after the opening SYN. Rules, first match wins:
///
/// | condition | signature |
/// |---|---|
/// | no opening SYN | `NoHandshakeObserved` |
/// | first RST at most two packets after the SYN, before completion | `RejectedOnConnect` |
/// | first RST after completion | `MidstreamReset` |
/// | FIN or RST before completion | `PrematureTermination` |
/// | at least two FINs from the completing ACK on | `GracefulClose` |
/// | not completed | `HandshakeInProgress` |
/// | otherwise | `CompleteHandshake` |
///
/// Flags before the opening SYN are ignored.
pub fn decode_flag_sequence(flag_seq: &[TcpFlags]) -> ConnectionSignature {
    let opening = |f: &TcpFlags| f.contains(TcpFlags::SYN) && !f.contains(TcpFlags::ACK);
    let Some(syn) = flag_seq.iter().position(opening) else {
        return ConnectionSignature::NoHandshakeObserved;
    };
    let after = &flag_seq[syn..];
    let synack = after
        .iter()
        .skip(1)
        .position(|f| f.contains(TcpFlags::SYN) && f.contains(TcpFlags::ACK))
        .map(|i| i + 1);
    let complete = synack.and_then(|sa| {
        after[sa + 1..]
            .iter()
            .position(|f| f.contains(TcpFlags::ACK) && !f.contains(TcpFlags::SYN) && !f.contains(TcpFlags::RST))
            .map(|i| sa + 1 + i)
    });
    let rst = after.iter().position(|f| f.contains(TcpFlags::RST));
    let before_completion = |i: usize| complete.is_none_or(|c| i < c);

    if let Some(r) = rst {
        if before_completion(r) && r <= 2 {
            return ConnectionSignature::RejectedOnConnect;
        }
        if !before_completion(r) {
            return ConnectionSignature::MidstreamReset;
        }
        return ConnectionSignature::PrematureTermination;
    }
    let fin_before = after
        .iter()
        .enumerate()
        .any(|(i, f)| f.contains(TcpFlags::FIN) && before_completion(i));
    if fin_before {
        return ConnectionSignature::PrematureTermination;
    }
    match complete {
        None => ConnectionSignature::HandshakeInProgress,
        Some(c) => {
            let fins = after[c..].iter().filter(|f| f.contains(TcpFlags::FIN)).count();
            if fins >= 2 {
                ConnectionSignature::GracefulClose
            } else {
                ConnectionSignature::CompleteHandshake
            }
        }
    }
}
