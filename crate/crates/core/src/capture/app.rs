//! Application-layer recognition.
//!
//! Recognition is port based (53 DNS, 80/8080 HTTP, 1883 MQTT, 502 Modbus,
//! 443 TLS) and confirmed by a cheap structural check of the payload, so a
//! non-HTTP payload on port 80 yields no application fields.

use super::record::AppFields;

fn be16(b: &[u8]) -> u16 {
    u16::from_be_bytes([b[0], b[1]])
}

fn either(sport: u16, dport: u16, port: u16) -> bool {
    sport == port || dport == port
}

pub fn dissect_udp(sport: u16, dport: u16, payload: &[u8]) -> Option<AppFields> {
    if either(sport, dport, 53) {
        return dns(payload);
    }
    None
}

pub fn dissect_tcp(sport: u16, dport: u16, payload: &[u8]) -> Option<AppFields> {
    if either(sport, dport, 53) && payload.len() > 2 {
        return dns(&payload[2..]);
    }
    if either(sport, dport, 80) || either(sport, dport, 8080) {
        return http(payload);
    }
    if either(sport, dport, 1883) {
        return mqtt(payload);
    }
    if either(sport, dport, 502) {
        return modbus(payload);
    }
    if either(sport, dport, 443) {
        return tls(payload);
    }
    None
}

/// Reads a possibly compressed DNS name starting at `offset`.
/// Returns the name and the offset just past it in the original position.
fn dns_name(msg: &[u8], mut offset: usize) -> Option<(String, usize)> {
    let mut labels: Vec<String> = Vec::new();
    let mut end = None;
    let mut jumps = 0;
    loop {
        let len = *msg.get(offset)? as usize;
        if len == 0 {
            end.get_or_insert(offset + 1);
            break;
        }
        if len & 0xc0 == 0xc0 {
            let ptr = ((len & 0x3f) << 8) | *msg.get(offset + 1)? as usize;
            end.get_or_insert(offset + 2);
            jumps += 1;
            if jumps > 16 || ptr >= msg.len() {
                return None;
            }
            offset = ptr;
            continue;
        }
        let label = msg.get(offset + 1..offset + 1 + len)?;
        labels.push(String::from_utf8_lossy(label).to_lowercase());
        offset += 1 + len;
        if labels.len() > 127 {
            return None;
        }
    }
    Some((labels.join("."), end?))
}

fn dns(msg: &[u8]) -> Option<AppFields> {
    if msg.len() < 12 {
        return None;
    }
    let trans_id = be16(msg);
    let flags = be16(&msg[2..]);
    let qdcount = be16(&msg[4..]);
    let ancount = be16(&msg[6..]);
    if qdcount > 16 || ancount > 256 {
        return None;
    }
    let is_response = flags & 0x8000 != 0;
    let opcode = ((flags >> 11) & 0x0f) as u8;
    let rcode = (flags & 0x0f) as u8;
    let mut qname = None;
    let mut qtype = None;
    let mut offset = 12;
    for i in 0..qdcount {
        let (name, next) = dns_name(msg, offset)?;
        let qt = be16(msg.get(next..next + 2)?);
        if i == 0 {
            qname = Some(name);
            qtype = Some(qt);
        }
        offset = next + 4;
    }
    let mut answers = Vec::new();
    if is_response {
        for _ in 0..ancount {
            let Some((_, next)) = dns_name(msg, offset) else { break };
            let Some(header) = msg.get(next..next + 10) else { break };
            let rtype = be16(header);
            let rdlen = be16(&header[8..]) as usize;
            let Some(rdata) = msg.get(next + 10..next + 10 + rdlen) else { break };
            match (rtype, rdlen) {
                (1, 4) => answers.push(std::net::Ipv4Addr::new(rdata[0], rdata[1], rdata[2], rdata[3]).to_string()),
                (28, 16) => {
                    let arr: [u8; 16] = rdata.try_into().unwrap();
                    answers.push(std::net::Ipv6Addr::from(arr).to_string());
                }
                (5, _) | (12, _) => {
                    if let Some((name, _)) = dns_name(msg, next + 10) {
                        answers.push(name);
                    }
                }
                _ => {}
            }
            offset = next + 10 + rdlen;
        }
    }
    Some(AppFields::Dns {
        trans_id,
        is_response,
        opcode,
        qname,
        qtype,
        rcode: is_response.then_some(rcode),
        answers,
    })
}

const HTTP_METHODS: [&str; 9] = ["GET", "POST", "PUT", "DELETE", "HEAD", "OPTIONS", "PATCH", "CONNECT", "TRACE"];

fn http(payload: &[u8]) -> Option<AppFields> {
    let head_end = payload.windows(2).position(|w| w == b"\r\n").unwrap_or(payload.len().min(512));
    let line = std::str::from_utf8(&payload[..head_end]).ok()?;
    let mut parts = line.split(' ');
    let first = parts.next()?;
    if let Some(version) = first.strip_prefix("HTTP/") {
        if !version.starts_with('1') && !version.starts_with('2') {
            return None;
        }
        let status = parts.next()?.parse::<u16>().ok()?;
        return Some(AppFields::Http {
            method: None,
            path: None,
            host: None,
            status: Some(status),
        });
    }
    if !HTTP_METHODS.contains(&first) {
        return None;
    }
    let path = parts.next()?.to_string();
    if !parts.next()?.starts_with("HTTP/") {
        return None;
    }
    let host = std::str::from_utf8(payload).ok().and_then(|text| {
        text.split("\r\n")
            .skip(1)
            .take_while(|l| !l.is_empty())
            .find_map(|l| {
                let (name, value) = l.split_once(':')?;
                name.eq_ignore_ascii_case("host").then(|| value.trim().to_string())
            })
    });
    Some(AppFields::Http {
        method: Some(first.to_string()),
        path: Some(path),
        host,
        status: None,
    })
}

fn mqtt(payload: &[u8]) -> Option<AppFields> {
    let first = *payload.first()?;
    let control_type = first >> 4;
    if control_type == 0 {
        return None;
    }
    // Remaining length: up to four 7-bit groups.
    let mut remaining = 0usize;
    let mut offset = 1;
    for shift in 0..4 {
        let byte = *payload.get(offset)?;
        remaining |= ((byte & 0x7f) as usize) << (7 * shift);
        offset += 1;
        if byte & 0x80 == 0 {
            break;
        }
    }
    let body = payload.get(offset..offset + remaining).unwrap_or(&payload[offset.min(payload.len())..]);
    let topic = match control_type {
        3 if body.len() >= 2 => {
            let len = be16(body) as usize;
            body.get(2..2 + len).map(|t| String::from_utf8_lossy(t).into_owned())
        }
        8 | 10 if body.len() >= 4 => {
            let len = be16(&body[2..]) as usize;
            body.get(4..4 + len).map(|t| String::from_utf8_lossy(t).into_owned())
        }
        1 if body.len() < 10 || body.get(2..6) != Some(b"MQTT") && body.get(2..8) != Some(b"MQIsdp") => {
            return None;
        }
        _ => None,
    };
    Some(AppFields::Mqtt { control_type, topic })
}

fn modbus(payload: &[u8]) -> Option<AppFields> {
    if payload.len() < 8 || be16(&payload[2..]) != 0 {
        return None;
    }
    let length = be16(&payload[4..]) as usize;
    if !(2..=254).contains(&length) {
        return None;
    }
    Some(AppFields::Modbus {
        trans_id: be16(payload),
        unit_id: payload[6],
        function: payload[7],
    })
}

fn tls_version_name(v: u16) -> Option<String> {
    Some(
        match v {
            0x0300 => "SSLv3",
            0x0301 => "TLSv1.0",
            0x0302 => "TLSv1.1",
            0x0303 => "TLSv1.2",
            0x0304 => "TLSv1.3",
            _ => return None,
        }
        .to_string(),
    )
}

fn tls(payload: &[u8]) -> Option<AppFields> {
    if payload.len() < 9 || payload[0] != 0x16 || payload[1] != 0x03 {
        return None;
    }
    let hs = &payload[5..];
    let handshake = hs[0];
    if handshake != 1 && handshake != 2 {
        return Some(AppFields::Tls {
            handshake,
            version: None,
            sni: None,
            random: None,
            session_id: None,
        });
    }
    let body = hs.get(4..)?;
    let legacy_version = be16(body.get(0..2)?);
    let random: [u8; 32] = body.get(2..34)?.try_into().ok()?;
    let sid_len = *body.get(34)? as usize;
    let session_id = body.get(35..35 + sid_len)?.to_vec();
    let mut offset = 35 + sid_len;
    if handshake == 1 {
        let suites = be16(body.get(offset..offset + 2)?) as usize;
        offset += 2 + suites;
        let comp = *body.get(offset)? as usize;
        offset += 1 + comp;
    } else {
        offset += 3;
    }
    let mut sni = None;
    let mut version = tls_version_name(legacy_version);
    if let Some(ext_len_bytes) = body.get(offset..offset + 2) {
        let ext_end = (offset + 2 + be16(ext_len_bytes) as usize).min(body.len());
        let mut cursor = offset + 2;
        while cursor + 4 <= ext_end {
            let ext_type = be16(&body[cursor..]);
            let len = be16(&body[cursor + 2..]) as usize;
            let data = body.get(cursor + 4..cursor + 4 + len).unwrap_or(&[]);
            match ext_type {
                0 if data.len() >= 5 && data[2] == 0 => {
                    let name_len = be16(&data[3..]) as usize;
                    if let Some(name) = data.get(5..5 + name_len) {
                        sni = Some(String::from_utf8_lossy(name).to_lowercase());
                    }
                }
                43 => {
                    let versions: Vec<u16> = if handshake == 2 && data.len() == 2 {
                        vec![be16(data)]
                    } else {
                        data.get(1..).unwrap_or(&[]).chunks_exact(2).map(be16).collect()
                    };
                    if let Some(best) = versions.into_iter().filter_map(|v| tls_version_name(v).map(|n| (v, n))).max() {
                        version = Some(best.1);
                    }
                }
                _ => {}
            }
            cursor += 4 + len;
        }
    }
    Some(AppFields::Tls {
        handshake,
        version,
        sni,
        random: Some(random),
        session_id: Some(session_id),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_http_payload_on_port_80_is_not_http() {
        assert_eq!(dissect_tcp(40000, 80, b"\x00\x01binary"), None);
    }

    #[test]
    fn http_request_with_host() {
        let app = dissect_tcp(40000, 80, b"GET /status HTTP/1.1\r\nHost: cam.local\r\n\r\n").unwrap();
        assert_eq!(
            app,
            AppFields::Http {
                method: Some("GET".into()),
                path: Some("/status".into()),
                host: Some("cam.local".into()),
                status: None
            }
        );
    }

    #[test]
    fn http_response_status() {
        let app = dissect_tcp(80, 40000, b"HTTP/1.1 404 Not Found\r\n\r\n").unwrap();
        assert!(matches!(app, AppFields::Http { status: Some(404), .. }));
    }

    #[test]
    fn mqtt_publish_topic() {
        let mut p = vec![0x30, 0];
        p.extend_from_slice(&[0, 5]);
        p.extend_from_slice(b"a/b/c");
        p.extend_from_slice(b"42");
        p[1] = (p.len() - 2) as u8;
        let app = dissect_tcp(40000, 1883, &p).unwrap();
        assert_eq!(app, AppFields::Mqtt { control_type: 3, topic: Some("a/b/c".into()) });
    }

    #[test]
    fn modbus_requires_zero_protocol_id() {
        let ok = [0, 7, 0, 0, 0, 6, 1, 3, 0, 0, 0, 2];
        assert_eq!(
            dissect_tcp(40100, 502, &ok),
            Some(AppFields::Modbus { trans_id: 7, unit_id: 1, function: 3 })
        );
        let bad = [0, 7, 0, 9, 0, 6, 1, 3, 0, 0, 0, 2];
        assert_eq!(dissect_tcp(40100, 502, &bad), None);
    }

    #[test]
    fn dns_compression_loop_is_rejected() {
        let mut msg = vec![0x12, 0x34, 0x01, 0x00, 0, 1, 0, 0, 0, 0, 0, 0];
        msg.extend_from_slice(&[0xc0, 12, 0, 1, 0, 1]);
        assert_eq!(dns(&msg), None);
    }
}
