use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use crate::capture::{MacAddr, MalformedMac};
use crate::{Error, Result};

const BUILTIN: &str = include_str!("../../data/oui.csv");

/// Vendor lookup keyed by the 24-bit OUI.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OuiTable {
    entries: HashMap<[u8; 3], String>,
}

#[derive(serde::Deserialize)]
struct Row {
    prefix: String,
    vendor: String,
}

fn parse_prefix(s: &str) -> Option<[u8; 3]> {
    let parts: Vec<&str> = s.trim().split([':', '-']).collect();
    if parts.len() != 3 {
        return None;
    }
    let mut out = [0u8; 3];
    for (slot, part) in out.iter_mut().zip(parts) {
        if part.len() != 2 {
            return None;
        }
        *slot = u8::from_str_radix(part, 16).ok()?;
    }
    Some(out)
}

impl OuiTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// The small table bundled with the crate (common IoT and lab vendors).
    pub fn builtin() -> Self {
        Self::from_reader(BUILTIN.as_bytes()).expect("bundled OUI table parses")
    }

    /// Reads `prefix,vendor` CSV with a header row.
    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut table = Self::new();
        for (i, row) in csv::Reader::from_reader(reader).deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| Error::malformed("OUI table", e))?;
            let prefix = parse_prefix(&row.prefix)
                .ok_or_else(|| Error::malformed("OUI table", format!("row {}: bad prefix {:?}", i + 1, row.prefix)))?;
            table.entries.insert(prefix, row.vendor);
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        Self::from_reader(file)
    }

    pub fn insert(&mut self, prefix: [u8; 3], vendor: impl Into<String>) {
        self.entries.insert(prefix, vendor.into());
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, prefix: [u8; 3]) -> Option<&str> {
        self.entries.get(&prefix).map(String::as_str)
    }
}

/// Vendor name for a MAC: table hit, else "Locally Administered" for
/// unicast addresses with the U/L bit set, else "Unknown".
pub fn resolve_vendor(mac: MacAddr, table: &OuiTable) -> String {
    if let Some(v) = table.get(mac.oui()) {
        return v.to_string();
    }
    if mac.is_locally_administered() && !mac.is_group() {
        "Locally Administered".into()
    } else {
        "Unknown".into()
    }
}

/// [`resolve_vendor`] for a textual MAC.
pub fn resolve_vendor_str(mac: &str, table: &OuiTable) -> Result<String, MalformedMac> {
    Ok(resolve_vendor(mac.parse()?, table))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_lookup_and_fallbacks() {
        let mut t = OuiTable::new();
        t.insert([0xb8, 0x27, 0xeb], "Raspberry Pi Foundation");
        assert_eq!(resolve_vendor_str("b8:27:eb:11:22:33", &t).unwrap(), "Raspberry Pi Foundation");
        assert_eq!(resolve_vendor_str("02:00:00:00:00:01", &t).unwrap(), "Locally Administered");
        assert_eq!(resolve_vendor_str("ff:ff:ff:aa:bb:cc", &OuiTable::new()).unwrap(), "Unknown");
        assert!(resolve_vendor_str("b8:27:eb:11:22", &t).is_err());
    }

    #[test]
    fn builtin_table_loads() {
        let t = OuiTable::builtin();
        assert!(t.len() >= 10);
        assert_eq!(t.get([0xb8, 0x27, 0xeb]), Some("Raspberry Pi Foundation"));
    }

    #[test]
    fn bad_prefix_is_reported() {
        let err = OuiTable::from_reader("prefix,vendor\nzz:00:00,X\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("bad prefix"));
    }
}
