use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::chunk::{chunk_flows, chunk_packets_semantic, chunk_protocol_log_text, chunk_report, Chunk, Modality, SemanticConfig};
use super::embed::{EmbedError, Embedder};
use crate::features::parse_sections;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
const ARTIFACTS_DIR: &str = "artifacts";
pub const DEFAULT_RETAINED: usize = 3;

const INDEX_FILE: &str = "index.json";
const LOCK_FILE: &str = ".lock";
const SESSIONS_DIR: &str = "sessions";

/// The four evidence artifacts of one capture, as text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Artifacts {
    /// Protocol-log JSONL.
    pub protocol_logs: String,
    /// Rendered (optionally enriched) interpretation report.
    pub report: String,
    /// Flow-summary narratives.
    pub flow_summary: String,
    /// Packet JSONL.
    pub packets: String,
}

/// Paths of the four artifacts on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtifactPaths {
    pub protocol_logs: PathBuf,
    pub report: PathBuf,
    pub flow_summary: PathBuf,
    pub packets: PathBuf,
}

impl ArtifactPaths {
    /// Conventional file names inside one directory.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let d = dir.as_ref();
        Self {
            protocol_logs: d.join("protocol_logs.jsonl"),
            report: d.join("report.txt"),
            flow_summary: d.join("flow_summary.txt"),
            packets: d.join("packets.jsonl"),
        }
    }

    pub fn read(&self) -> Result<Artifacts> {
        let rd = |p: &Path| fs::read_to_string(p).map_err(|e| Error::io(p.display().to_string(), e));
        Ok(Artifacts {
            protocol_logs: rd(&self.protocol_logs)?,
            report: rd(&self.report)?,
            flow_summary: rd(&self.flow_summary)?,
            packets: rd(&self.packets)?,
        })
    }

    pub fn write(&self, a: &Artifacts) -> Result<()> {
        for (p, body) in [
            (&self.protocol_logs, &a.protocol_logs),
            (&self.report, &a.report),
            (&self.flow_summary, &a.flow_summary),
            (&self.packets, &a.packets),
        ] {
            if let Some(dir) = p.parent() {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
            }
            fs::write(p, body).map_err(|e| Error::io(p.display().to_string(), e))?;
        }
        Ok(())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Artifacts {
    /// One digest per artifact, in a fixed order.
    pub fn input_hashes(&self) -> BTreeSet<String> {
        [
            format!("protocol_logs:{}", self.protocol_logs),
            format!("report:{}", self.report),
            format!("flow_summary:{}", self.flow_summary),
            format!("packets:{}", self.packets),
        ]
        .iter()
        .map(|s| sha256_hex(s.as_bytes()))
        .collect()
    }

    /// Digest over the sorted input hashes.
    pub fn capture_hash(&self) -> String {
        let joined: Vec<String> = self.input_hashes().into_iter().collect();
        sha256_hex(joined.join("\n").as_bytes())
    }

    /// Chunks all four modalities. Duplicate chunk ids are dropped.
    pub fn chunk(&self, embedder: &dyn Embedder, cfg: SemanticConfig) -> Result<Vec<Chunk>, EmbedError> {
        let (logs, _) = chunk_protocol_log_text(&self.protocol_logs);
        let report = chunk_report(&parse_sections(&self.report));
        let flows = chunk_flows(&self.flow_summary);
        let lines: Vec<&str> = self.packets.lines().collect();
        let packets = chunk_packets_semantic(&lines, embedder, cfg)?;
        let mut seen = HashSet::new();
        Ok(logs
            .into_iter()
            .chain(report)
            .chain(flows)
            .chain(packets)
            .filter(|c| seen.insert(c.chunk_id.clone()))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub session_id: String,
    pub created_at: i64,
    pub capture_hash: String,
    pub input_hashes: BTreeSet<String>,
    pub embedder: String,
    pub dims: usize,
    pub chunk_count: usize,
    pub modality_counts: BTreeMap<Modality, usize>,
}

/// A loaded session: chunks with their unit vectors.
#[derive(Debug, Clone)]
pub struct SessionStore {
    pub manifest: Manifest,
    pub chunks: Vec<Chunk>,
    vectors: Vec<f32>,
    pub directory: PathBuf,
}

impl SessionStore {
    pub fn session_id(&self) -> &str {
        &self.manifest.session_id
    }

    pub fn dims(&self) -> usize {
        self.manifest.dims
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        let d = self.manifest.dims;
        &self.vectors[i * d..(i + 1) * d]
    }

    /// Builds an in-memory store without touching disk.
    pub fn in_memory(chunks: Vec<Chunk>, embedder: &dyn Embedder) -> Result<Self, EmbedError> {
        let mut seen = HashSet::new();
        let chunks: Vec<Chunk> = chunks.into_iter().filter(|c| seen.insert(c.chunk_id.clone())).collect();
        let mut vectors = Vec::with_capacity(chunks.len() * embedder.dims());
        for c in &chunks {
            vectors.extend(embedder.embed(&c.text)?);
        }
        let mut modality_counts = BTreeMap::new();
        for c in &chunks {
            *modality_counts.entry(c.modality).or_insert(0) += 1;
        }
        Ok(Self {
            manifest: Manifest {
                schema_version: SCHEMA_VERSION,
                session_id: "memory".into(),
                created_at: 0,
                capture_hash: String::new(),
                input_hashes: BTreeSet::new(),
                embedder: embedder.id(),
                dims: embedder.dims(),
                chunk_count: chunks.len(),
                modality_counts,
            },
            chunks,
            vectors,
            directory: PathBuf::new(),
        })
    }

    fn write_to(&self, dir: &Path) -> Result<()> {
        let io = |p: &Path, e| Error::io(p.display().to_string(), e);
        let chunks_path = dir.join("chunks.jsonl");
        let mut f = std::io::BufWriter::new(File::create(&chunks_path).map_err(|e| io(&chunks_path, e))?);
        for c in &self.chunks {
            let line = serde_json::to_string(c).map_err(|e| Error::malformed("chunk", e))?;
            writeln!(f, "{line}").map_err(|e| io(&chunks_path, e))?;
        }
        f.flush().map_err(|e| io(&chunks_path, e))?;
        let vec_path = dir.join("vectors.bin");
        let bytes: Vec<u8> = self.vectors.iter().flat_map(|x| x.to_le_bytes()).collect();
        fs::write(&vec_path, bytes).map_err(|e| io(&vec_path, e))?;
        let man_path = dir.join("manifest.json");
        let man = serde_json::to_vec_pretty(&self.manifest).map_err(|e| Error::malformed("manifest", e))?;
        fs::write(&man_path, man).map_err(|e| io(&man_path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let io = |p: &Path, e| Error::io(p.display().to_string(), e);
        let man_path = dir.join("manifest.json");
        let manifest: Manifest = serde_json::from_slice(&fs::read(&man_path).map_err(|e| io(&man_path, e))?)
            .map_err(|e| Error::malformed("manifest.json", e))?;
        if manifest.schema_version != SCHEMA_VERSION {
            return Err(Error::malformed(
                "manifest.json",
                format!("unsupported schema_version {}", manifest.schema_version),
            ));
        }
        let chunks_path = dir.join("chunks.jsonl");
        let mut chunks = Vec::with_capacity(manifest.chunk_count);
        for line in BufReader::new(File::open(&chunks_path).map_err(|e| io(&chunks_path, e))?).lines() {
            let line = line.map_err(|e| io(&chunks_path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            chunks.push(serde_json::from_str(&line).map_err(|e| Error::malformed("chunks.jsonl", e))?);
        }
        let vec_path = dir.join("vectors.bin");
        let bytes = fs::read(&vec_path).map_err(|e| io(&vec_path, e))?;
        if bytes.len() != chunks.len() * manifest.dims * 4 || chunks.len() != manifest.chunk_count {
            return Err(Error::malformed("vectors.bin", "size does not match manifest"));
        }
        let vectors = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Ok(Self {
            manifest,
            chunks,
            vectors,
            directory: dir.to_path_buf(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEntry {
    pub capture_hash: String,
    pub session_id: String,
    pub created_at: i64,
}

/// `index.json`: retained sessions, least recently used first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionIndexFile {
    pub entries: Vec<SessionEntry>,
    pub latest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestOutcome {
    pub session_id: String,
    /// True when an identical session already existed.
    pub reused: bool,
    pub chunk_count: usize,
    pub evicted: Vec<String>,
}

/// Advisory exclusive lock on a file, released on drop.
struct WriteLock {
    #[allow(dead_code)]
    file: File,
}

impl WriteLock {
    fn acquire(path: &Path) -> Result<Self> {
        let file = fs::OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        #[cfg(unix)]
        {
            use std::os::unix::io::AsRawFd;
            // SAFETY: flock on a descriptor we own.
            let rc = unsafe { libc::flock(file.as_raw_fd(), libc::LOCK_EX | libc::LOCK_NB) };
            if rc != 0 {
                return Err(Error::Locked(path.display().to_string()));
            }
        }
        Ok(Self { file })
    }
}

/// Session-scoped corpus stores under one root directory.
///
/// ```text
/// root/
///   index.json
///   sessions/<session_id>/{chunks.jsonl, vectors.bin, manifest.json, artifacts/}
/// ```
#[derive(Debug, Clone)]
pub struct CorpusIndex {
    root: PathBuf,
    retained: usize,
    clock: fn() -> i64,
}

fn now_secs() -> i64 {
    chrono::Utc::now().timestamp()
}

impl CorpusIndex {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join(SESSIONS_DIR)).map_err(|e| Error::io(root.display().to_string(), e))?;
        Ok(Self {
            root,
            retained: DEFAULT_RETAINED,
            clock: now_secs,
        })
    }

    pub fn with_retained(mut self, n: usize) -> Self {
        self.retained = n.max(1);
        self
    }

    pub fn with_clock(mut self, clock: fn() -> i64) -> Self {
        self.clock = clock;
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// The four source artifacts a session was built from.
    pub fn artifacts(&self, session_id: &str) -> Result<Artifacts> {
        if !self.read_index()?.entries.iter().any(|e| e.session_id == session_id) {
            return Err(Error::UnknownSession(session_id.to_string()));
        }
        ArtifactPaths::in_dir(self.session_dir(session_id).join(ARTIFACTS_DIR)).read()
    }

    pub fn session_dir(&self, session_id: &str) -> PathBuf {
        self.root.join(SESSIONS_DIR).join(session_id)
    }

    pub fn read_index(&self) -> Result<SessionIndexFile> {
        let p = self.root.join(INDEX_FILE);
        match fs::read(&p) {
            Ok(b) => serde_json::from_slice(&b).map_err(|e| Error::malformed("index.json", e)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(SessionIndexFile::default()),
            Err(e) => Err(Error::io(p.display().to_string(), e)),
        }
    }

    fn write_index(&self, idx: &SessionIndexFile) -> Result<()> {
        let p = self.root.join(INDEX_FILE);
        let tmp = self.root.join(format!("{INDEX_FILE}.{}.tmp", std::process::id()));
        let body = serde_json::to_vec_pretty(idx).map_err(|e| Error::malformed("index.json", e))?;
        fs::write(&tmp, body).map_err(|e| Error::io(tmp.display().to_string(), e))?;
        fs::rename(&tmp, &p).map_err(|e| Error::io(p.display().to_string(), e))
    }

    pub fn sessions(&self) -> Result<Vec<SessionEntry>> {
        Ok(self.read_index()?.entries)
    }

    pub fn latest(&self) -> Result<Option<String>> {
        Ok(self.read_index()?.latest)
    }

    pub fn load(&self, session_id: &str) -> Result<SessionStore> {
        let idx = self.read_index()?;
        if !idx.entries.iter().any(|e| e.session_id == session_id) {
            return Err(Error::UnknownSession(session_id.to_string()));
        }
        SessionStore::load(self.session_dir(session_id))
    }

    pub fn load_latest(&self) -> Result<SessionStore> {
        let id = self.latest()?.ok_or(Error::NoSession)?;
        self.load(&id)
    }

    pub fn ingest_paths(&self, paths: &ArtifactPaths, embedder: &dyn Embedder, cfg: SemanticConfig) -> Result<IngestOutcome> {
        self.ingest(&paths.read()?, embedder, cfg)
    }

    /// Chunks, embeds and persists `artifacts` as a new session, or
    /// repoints `latest` at an existing session with identical inputs.
    ///
    /// On failure nothing is registered and no session directory remains.
    pub fn ingest(&self, artifacts: &Artifacts, embedder: &dyn Embedder, cfg: SemanticConfig) -> Result<IngestOutcome> {
        let _lock = WriteLock::acquire(&self.root.join(LOCK_FILE))?;
        let mut idx = self.read_index()?;
        let hashes = artifacts.input_hashes();
        let capture_hash = artifacts.capture_hash();

        if let Some(pos) = idx.entries.iter().position(|e| e.capture_hash == capture_hash) {
            let entry = idx.entries.remove(pos);
            let man = SessionStore::load(self.session_dir(&entry.session_id)).map(|s| s.manifest);
            if matches!(&man, Ok(m) if m.input_hashes == hashes) {
                let id = entry.session_id.clone();
                idx.entries.push(entry);
                idx.latest = Some(id.clone());
                self.write_index(&idx)?;
                return Ok(IngestOutcome {
                    session_id: id,
                    reused: true,
                    chunk_count: man.map(|m| m.chunk_count).unwrap_or(0),
                    evicted: Vec::new(),
                });
            }
            log::warn!("session {} is unreadable; re-ingesting", entry.session_id);
            let _ = fs::remove_dir_all(self.session_dir(&entry.session_id));
        }

        let created_at = (self.clock)();
        let stamp = chrono::DateTime::from_timestamp(created_at, 0)
            .unwrap_or_default()
            .format("%Y%m%dT%H%M%SZ");
        let session_id = format!("{stamp}-{}", &capture_hash[..8]);
        let final_dir = self.session_dir(&session_id);
        let tmp_dir = self.root.join(SESSIONS_DIR).join(format!(".tmp-{session_id}"));
        let _ = fs::remove_dir_all(&tmp_dir);

        let build = || -> Result<SessionStore> {
            let chunks = artifacts.chunk(embedder, cfg).map_err(Error::Embed)?;
            let mut store = SessionStore::in_memory(chunks, embedder).map_err(Error::Embed)?;
            store.manifest.session_id = session_id.clone();
            store.manifest.created_at = created_at;
            store.manifest.capture_hash = capture_hash.clone();
            store.manifest.input_hashes = hashes.clone();
            fs::create_dir_all(&tmp_dir).map_err(|e| Error::io(tmp_dir.display().to_string(), e))?;
            store.write_to(&tmp_dir)?;
            ArtifactPaths::in_dir(tmp_dir.join(ARTIFACTS_DIR)).write(artifacts)?;
            let _ = fs::remove_dir_all(&final_dir);
            fs::rename(&tmp_dir, &final_dir).map_err(|e| Error::io(final_dir.display().to_string(), e))?;
            store.directory = final_dir.clone();
            Ok(store)
        };
        let store = match build() {
            Ok(s) => s,
            Err(e) => {
                let _ = fs::remove_dir_all(&tmp_dir);
                return Err(e);
            }
        };

        idx.entries.retain(|e| e.session_id != session_id);
        idx.entries.push(SessionEntry {
            capture_hash,
            session_id: session_id.clone(),
            created_at,
        });
        let mut evicted = Vec::new();
        while idx.entries.len() > self.retained {
            evicted.push(idx.entries.remove(0).session_id);
        }
        idx.latest = Some(session_id.clone());
        if let Err(e) = self.write_index(&idx) {
            let _ = fs::remove_dir_all(&final_dir);
            return Err(e);
        }
        for id in &evicted {
            if let Err(e) = fs::remove_dir_all(self.session_dir(id)) {
                log::warn!("could not delete evicted session {id}: {e}");
            }
        }
        Ok(IngestOutcome {
            session_id,
            reused: false,
            chunk_count: store.len(),
            evicted,
        })
    }

    /// Session directories on disk (including any not in the index).
    pub fn session_dirs(&self) -> Result<Vec<String>> {
        let dir = self.root.join(SESSIONS_DIR);
        let mut out: Vec<String> = fs::read_dir(&dir)
            .map_err(|e| Error::io(dir.display().to_string(), e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        out.sort();
        Ok(out)
    }
}
