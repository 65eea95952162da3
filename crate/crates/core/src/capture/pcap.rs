//! Classic libpcap file reader (both byte orders, micro- and nanosecond).

use super::record::{LinkType, Timestamp};
use super::CaptureError;

pub const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;
/// Frames larger than this are treated as corruption rather than data.
const MAX_FRAME_LEN: u32 = 256 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PcapHeader {
    pub big_endian: bool,
    pub nanosecond: bool,
    pub version: (u16, u16),
    pub snaplen: u32,
    pub link_type: LinkType,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFrame<'a> {
    pub ts: Timestamp,
    pub orig_len: u32,
    pub data: &'a [u8],
}

/// Names the container format of a non-pcap file, for error messages.
pub fn detect_format(bytes: &[u8]) -> &'static str {
    match bytes {
        [0x0a, 0x0d, 0x0d, 0x0a, ..] => "pcapng",
        [0x1f, 0x8b, ..] => "gzip",
        [b'P', b'K', 3, 4, ..] => "zip",
        [] => "empty file",
        _ if bytes.len() < 4 => "truncated header",
        _ => "unknown",
    }
}

fn read_u32(bytes: &[u8], big_endian: bool) -> u32 {
    let arr = [bytes[0], bytes[1], bytes[2], bytes[3]];
    if big_endian {
        u32::from_be_bytes(arr)
    } else {
        u32::from_le_bytes(arr)
    }
}

fn read_u16(bytes: &[u8], big_endian: bool) -> u16 {
    let arr = [bytes[0], bytes[1]];
    if big_endian {
        u16::from_be_bytes(arr)
    } else {
        u16::from_le_bytes(arr)
    }
}

pub fn parse_header(bytes: &[u8]) -> Result<PcapHeader, CaptureError> {
    if bytes.len() < GLOBAL_HEADER_LEN {
        return Err(CaptureError::NotAPcap {
            detected: detect_format(bytes).to_string(),
        });
    }
    let magic = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    let (big_endian, nanosecond) = match magic {
        0xa1b2_c3d4 => (false, false),
        0xd4c3_b2a1 => (true, false),
        0xa1b2_3c4d => (false, true),
        0x4d3c_b2a1 => (true, true),
        _ => {
            return Err(CaptureError::NotAPcap {
                detected: detect_format(bytes).to_string(),
            })
        }
    };
    Ok(PcapHeader {
        big_endian,
        nanosecond,
        version: (read_u16(&bytes[4..], big_endian), read_u16(&bytes[6..], big_endian)),
        snaplen: read_u32(&bytes[16..], big_endian),
        link_type: LinkType::from_code(read_u32(&bytes[20..], big_endian) & 0x0fff_ffff),
    })
}

/// Iterates over the frames of an in-memory capture.
///
/// Stops at the first record whose header promises more bytes than remain;
/// [`FrameIter::truncated`] reports whether that happened.
pub struct FrameIter<'a> {
    bytes: &'a [u8],
    offset: usize,
    header: PcapHeader,
    truncated: bool,
}

impl<'a> FrameIter<'a> {
    pub fn new(bytes: &'a [u8]) -> Result<Self, CaptureError> {
        let header = parse_header(bytes)?;
        Ok(Self {
            bytes,
            offset: GLOBAL_HEADER_LEN,
            header,
            truncated: false,
        })
    }

    pub fn header(&self) -> PcapHeader {
        self.header
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }
}

impl<'a> Iterator for FrameIter<'a> {
    type Item = RawFrame<'a>;

    fn next(&mut self) -> Option<RawFrame<'a>> {
        let rest = &self.bytes[self.offset..];
        if rest.is_empty() {
            return None;
        }
        if rest.len() < RECORD_HEADER_LEN {
            self.truncated = true;
            return None;
        }
        let be = self.header.big_endian;
        let secs = read_u32(rest, be);
        let frac = read_u32(&rest[4..], be);
        let incl_len = read_u32(&rest[8..], be);
        let orig_len = read_u32(&rest[12..], be);
        let available = rest.len() - RECORD_HEADER_LEN;
        if incl_len > MAX_FRAME_LEN || incl_len as usize > available {
            self.truncated = true;
            return None;
        }
        let micros = if self.header.nanosecond { frac / 1000 } else { frac };
        let data = &rest[RECORD_HEADER_LEN..RECORD_HEADER_LEN + incl_len as usize];
        self.offset += RECORD_HEADER_LEN + incl_len as usize;
        Some(RawFrame {
            ts: Timestamp::from_parts(secs, micros.min(999_999)),
            orig_len: orig_len.max(incl_len),
            data,
        })
    }
}

/// Writes classic little-endian microsecond pcap files.
pub struct PcapWriter {
    buf: Vec<u8>,
}

impl PcapWriter {
    pub fn new(link_type: u32) -> Self {
        let mut buf = Vec::with_capacity(4096);
        buf.extend_from_slice(&0xa1b2_c3d4u32.to_le_bytes());
        buf.extend_from_slice(&2u16.to_le_bytes());
        buf.extend_from_slice(&4u16.to_le_bytes());
        buf.extend_from_slice(&0i32.to_le_bytes());
        buf.extend_from_slice(&0u32.to_le_bytes());
        buf.extend_from_slice(&65535u32.to_le_bytes());
        buf.extend_from_slice(&link_type.to_le_bytes());
        Self { buf }
    }

    pub fn ethernet() -> Self {
        Self::new(1)
    }

    pub fn push(&mut self, ts: Timestamp, frame: &[u8]) {
        let micros = ts.micros();
        self.buf
            .extend_from_slice(&((micros / 1_000_000) as u32).to_le_bytes());
        self.buf
            .extend_from_slice(&((micros % 1_000_000) as u32).to_le_bytes());
        self.buf.extend_from_slice(&(frame.len() as u32).to_le_bytes());
        self.buf.extend_from_slice(&(frame.len() as u32).to_le_bytes());
        self.buf.extend_from_slice(frame);
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(magic_le: [u8; 4], be: bool) -> Vec<u8> {
        let mut h = magic_le.to_vec();
        let push16 = |h: &mut Vec<u8>, v: u16| {
            h.extend_from_slice(&if be { v.to_be_bytes() } else { v.to_le_bytes() })
        };
        push16(&mut h, 2);
        push16(&mut h, 4);
        h.extend_from_slice(&[0; 8]);
        let push32 = |h: &mut Vec<u8>, v: u32| {
            h.extend_from_slice(&if be { v.to_be_bytes() } else { v.to_le_bytes() })
        };
        push32(&mut h, 65535);
        push32(&mut h, 1);
        h
    }

    #[test]
    fn accepts_all_four_magics() {
        let cases = [
            ([0xd4, 0xc3, 0xb2, 0xa1], false, false),
            ([0xa1, 0xb2, 0xc3, 0xd4], true, false),
            ([0x4d, 0x3c, 0xb2, 0xa1], false, true),
            ([0xa1, 0xb2, 0x3c, 0x4d], true, true),
        ];
        for (magic, be, nano) in cases {
            let h = parse_header(&header(magic, be)).unwrap();
            assert_eq!((h.big_endian, h.nanosecond), (be, nano));
            assert_eq!(h.link_type, LinkType::Ethernet);
            assert_eq!(h.version, (2, 4));
        }
    }

    #[test]
    fn names_pcapng() {
        let mut bytes = vec![0x0a, 0x0d, 0x0d, 0x0a];
        bytes.resize(32, 0);
        match parse_header(&bytes) {
            Err(CaptureError::NotAPcap { detected }) => assert_eq!(detected, "pcapng"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nanosecond_timestamps_truncate_to_micros() {
        let mut bytes = header([0x4d, 0x3c, 0xb2, 0xa1], false);
        bytes.extend_from_slice(&10u32.to_le_bytes());
        bytes.extend_from_slice(&123_456_789u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&[0, 0]);
        let frames: Vec<_> = FrameIter::new(&bytes).unwrap().collect();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].ts.to_string(), "10.123456");
    }

    #[test]
    fn big_endian_records_parse() {
        let mut bytes = header([0xa1, 0xb2, 0xc3, 0xd4], true);
        bytes.extend_from_slice(&7u32.to_be_bytes());
        bytes.extend_from_slice(&5u32.to_be_bytes());
        bytes.extend_from_slice(&3u32.to_be_bytes());
        bytes.extend_from_slice(&60u32.to_be_bytes());
        bytes.extend_from_slice(&[1, 2, 3]);
        let frames: Vec<_> = FrameIter::new(&bytes).unwrap().collect();
        assert_eq!(frames[0].ts.to_string(), "7.000005");
        assert_eq!(frames[0].orig_len, 60);
        assert_eq!(frames[0].data, &[1, 2, 3]);
    }

    #[test]
    fn truncated_record_stops_iteration() {
        let mut w = PcapWriter::ethernet();
        w.push(Timestamp::from_parts(1, 0), &[0u8; 20]);
        w.push(Timestamp::from_parts(2, 0), &[0u8; 20]);
        let mut bytes = w.into_bytes();
        bytes.truncate(bytes.len() - 5);
        let mut it = FrameIter::new(&bytes).unwrap();
        assert_eq!(it.by_ref().count(), 1);
        assert!(it.truncated());
    }
}
