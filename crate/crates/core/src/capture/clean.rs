use super::record::{AppFields, PacketRecord};

/// Strips opaque, high-entropy bytes from a record.
///
/// Removes the raw transport payload and the TLS random and session id.
/// Everything that carries protocol meaning (flags, sequence numbers,
/// payload length, application fields) is left untouched. Idempotent.
pub fn clean_packet(mut rec: PacketRecord) -> PacketRecord {
    rec.payload = None;
    if let Some(AppFields::Tls {
        random, session_id, ..
    }) = &mut rec.app
    {
        *random = None;
        *session_id = None;
    }
    rec
}
