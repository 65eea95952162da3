use std::collections::HashMap;
use std::fs;
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use super::providers::{Provider, ProviderData};

/// On-disk cache of provider responses keyed by (ip, provider, UTC day).
///
/// Layout: `{root}/{provider}/{day}/{ip}.json`, where `day` is days since
/// the Unix epoch. Writes for the same key are serialized.
#[derive(Debug)]
pub struct IntelCache {
    root: PathBuf,
    locks: Mutex<HashMap<PathBuf, Arc<Mutex<()>>>>,
}

pub fn day_of(epoch_secs: i64) -> i64 {
    epoch_secs.div_euclid(86_400)
}

impl IntelCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, ip: IpAddr, provider: Provider, day: i64) -> PathBuf {
        let name = ip.to_string().replace(':', "_");
        self.root
            .join(provider.slug())
            .join(day.to_string())
            .join(format!("{name}.json"))
    }

    fn lock_for(&self, path: &Path) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|e| e.into_inner());
        locks.entry(path.to_path_buf()).or_default().clone()
    }

    pub fn get(&self, ip: IpAddr, provider: Provider, day: i64) -> Option<ProviderData> {
        let bytes = fs::read(self.path(ip, provider, day)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    pub fn put(&self, ip: IpAddr, provider: Provider, day: i64, data: &ProviderData) -> std::io::Result<()> {
        let path = self.path(ip, provider, day);
        let lock = self.lock_for(&path);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension(format!("json.{}.tmp", std::process::id()));
        fs::write(&tmp, serde_json::to_vec(data).map_err(std::io::Error::other)?)?;
        fs::rename(&tmp, &path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyed_by_day() {
        let dir = tempfile::tempdir().unwrap();
        let c = IntelCache::new(dir.path());
        let ip: IpAddr = "2606:4700::1111".parse().unwrap();
        let d = ProviderData::VirusTotal { malicious: 3 };
        c.put(ip, Provider::VirusTotal, 19_000, &d).unwrap();
        assert_eq!(c.get(ip, Provider::VirusTotal, 19_000), Some(d));
        assert_eq!(c.get(ip, Provider::VirusTotal, 19_001), None);
        assert_eq!(c.get(ip, Provider::Shodan, 19_000), None);
        assert_eq!(day_of(86_399), 0);
        assert_eq!(day_of(86_400), 1);
    }
}
