//! Directory-backed mock server.
//!
//! ```text
//! <root>/index.log     one JSON record per line: puts and deletes
//! <root>/links.log     one JSON record per line: link creations and resolves
//! <root>/blobs/<id>    payloads, stored verbatim
//! <root>/.lock         advisory lock for cross-process exclusion
//! ```
//!
//! Payloads are written to a temp file and renamed into place before the
//! index line is appended, so a crash leaves either the old state or the new
//! one. A torn trailing index line is discarded on open.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::rngs::OsRng;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const STORE_ENV: &str = "E2EE_STORE";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("not found")]
    NotFound,
    #[error("invalid blob id {0:?}")]
    InvalidId(String),
    #[error("corrupt store: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, StoreError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlobKind {
    File,
    Envelope,
    Shard,
    PeerList,
    Fhf,
}

/// 32 lowercase hex characters (128 random bits).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlobId(String);

fn random_hex_128() -> String {
    let mut b = [0u8; 16];
    OsRng.fill_bytes(&mut b);
    hex::encode(b)
}

fn is_hex_128(s: &str) -> bool {
    s.len() == 32 && s.bytes().all(|c| matches!(c, b'0'..=b'9' | b'a'..=b'f'))
}

impl BlobId {
    pub fn parse(s: &str) -> Result<Self> {
        if is_hex_128(s) {
            Ok(BlobId(s.to_owned()))
        } else {
            Err(StoreError::InvalidId(s.to_owned()))
        }
    }

    pub fn from_bytes(bytes: [u8; 16]) -> Self {
        BlobId(hex::encode(bytes))
    }

    pub fn to_bytes(&self) -> [u8; 16] {
        hex::decode(&self.0).unwrap().try_into().unwrap()
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for BlobId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobRecord {
    pub id: BlobId,
    pub kind: BlobKind,
    pub filename: String,
    pub created: u64,
    pub updated: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkToken {
    pub token: String,
    pub blob_id: BlobId,
    pub expiry: Option<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum IndexLine {
    Put(BlobRecord),
    Delete { id: BlobId },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum LinkLine {
    Link(LinkToken),
    Resolve { token: String, who: String, at: u64 },
}

#[derive(Default)]
struct State {
    records: BTreeMap<BlobId, BlobRecord>,
    links: HashMap<String, LinkToken>,
    index_pos: u64,
    links_pos: u64,
}

pub struct Store {
    root: PathBuf,
    state: Mutex<State>,
}

pub fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Reads complete lines appended since `pos`; returns them and the new position.
fn read_new_lines(path: &Path, pos: u64) -> io::Result<(Vec<String>, u64)> {
    let mut f = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok((Vec::new(), pos)),
        Err(e) => return Err(e),
    };
    f.seek(SeekFrom::Start(pos))?;
    let mut buf = String::new();
    f.read_to_string(&mut buf)?;
    let complete = buf.rfind('\n').map_or(0, |i| i + 1);
    let lines = buf[..complete].lines().filter(|l| !l.is_empty()).map(str::to_owned).collect();
    Ok((lines, pos + complete as u64))
}

/// Drops a trailing partial line left by an interrupted append.
fn truncate_torn_tail(path: &Path) -> io::Result<()> {
    let Ok(bytes) = fs::read(path) else { return Ok(()) };
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    if keep != bytes.len() {
        OpenOptions::new().write(true).open(path)?.set_len(keep as u64)?;
    }
    Ok(())
}

fn append_line<T: Serialize>(path: &Path, line: &T) -> io::Result<()> {
    let mut text = serde_json::to_string(line).map_err(io::Error::other)?;
    text.push('\n');
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(text.as_bytes())?;
    f.sync_data()
}

struct LockGuard(File);

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = self.0.unlock();
    }
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("blobs"))?;
        let store = Store { root, state: Mutex::new(State::default()) };
        {
            let _lock = store.lock(true)?;
            truncate_torn_tail(&store.index_path())?;
            truncate_torn_tail(&store.links_path())?;
            for entry in fs::read_dir(store.root.join("blobs"))? {
                let path = entry?.path();
                if path.extension().is_some_and(|e| e == "tmp") {
                    let _ = fs::remove_file(path);
                }
            }
            let mut state = store.state.lock().unwrap();
            store.refresh(&mut state)?;
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn index_path(&self) -> PathBuf {
        self.root.join("index.log")
    }

    fn links_path(&self) -> PathBuf {
        self.root.join("links.log")
    }

    fn blob_path(&self, id: &BlobId) -> PathBuf {
        self.root.join("blobs").join(id.as_str())
    }

    fn lock(&self, exclusive: bool) -> Result<LockGuard> {
        let f = OpenOptions::new().create(true).truncate(false).write(true).open(self.root.join(".lock"))?;
        if exclusive {
            f.lock()?;
        } else {
            f.lock_shared()?;
        }
        Ok(LockGuard(f))
    }

    /// Applies log lines written by other processes since the last refresh.
    fn refresh(&self, state: &mut State) -> Result<()> {
        let (lines, pos) = read_new_lines(&self.index_path(), state.index_pos)?;
        for line in lines {
            match serde_json::from_str(&line).map_err(|e| StoreError::Corrupt(e.to_string()))? {
                IndexLine::Put(rec) => {
                    state.records.insert(rec.id.clone(), rec);
                }
                IndexLine::Delete { id } => {
                    state.records.remove(&id);
                }
            }
        }
        state.index_pos = pos;
        let (lines, pos) = read_new_lines(&self.links_path(), state.links_pos)?;
        for line in lines {
            if let LinkLine::Link(link) = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt(e.to_string()))? {
                state.links.insert(link.token.clone(), link);
            }
        }
        state.links_pos = pos;
        Ok(())
    }

    fn with_state<T>(&self, exclusive: bool, f: impl FnOnce(&mut State) -> Result<T>) -> Result<T> {
        let mut state = self.state.lock().unwrap();
        let _lock = self.lock(exclusive)?;
        self.refresh(&mut state)?;
        f(&mut state)
    }

    fn write_temp(&self, id: &BlobId, bytes: &[u8]) -> io::Result<PathBuf> {
        let tmp = self.root.join("blobs").join(format!("{}.tmp", id.as_str()));
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        Ok(tmp)
    }

    fn commit(&self, state: &mut State, id: &BlobId, kind: BlobKind, bytes: &[u8]) -> Result<()> {
        let now = now_secs();
        let created = state.records.get(id).map_or(now, |r| r.created);
        let tmp = self.write_temp(id, bytes)?;
        fs::rename(&tmp, self.blob_path(id))?;
        let rec = BlobRecord {
            id: id.clone(),
            kind,
            filename: format!("blobs/{}", id.as_str()),
            created,
            updated: now,
        };
        append_line(&self.index_path(), &IndexLine::Put(rec.clone()))?;
        state.index_pos = fs::metadata(self.index_path())?.len();
        state.records.insert(id.clone(), rec);
        Ok(())
    }

    pub fn put(&self, kind: BlobKind, bytes: &[u8]) -> Result<BlobId> {
        self.with_state(true, |state| {
            let id = loop {
                let id = BlobId(random_hex_128());
                if !state.records.contains_key(&id) {
                    break id;
                }
            };
            self.commit(state, &id, kind, bytes)?;
            Ok(id)
        })
    }

    /// Atomically overwrites an existing blob, keeping its id and kind.
    pub fn replace(&self, id: &BlobId, bytes: &[u8]) -> Result<()> {
        self.with_state(true, |state| {
            let kind = state.records.get(id).ok_or(StoreError::NotFound)?.kind;
            self.commit(state, id, kind, bytes)
        })
    }

    pub fn get(&self, id: &BlobId) -> Result<Vec<u8>> {
        self.with_state(false, |state| {
            if !state.records.contains_key(id) {
                return Err(StoreError::NotFound);
            }
            Ok(fs::read(self.blob_path(id))?)
        })
    }

    pub fn record(&self, id: &BlobId) -> Result<BlobRecord> {
        self.with_state(false, |state| state.records.get(id).cloned().ok_or(StoreError::NotFound))
    }

    pub fn delete(&self, id: &BlobId) -> Result<()> {
        self.with_state(true, |state| {
            if state.records.remove(id).is_none() {
                return Err(StoreError::NotFound);
            }
            append_line(&self.index_path(), &IndexLine::Delete { id: id.clone() })?;
            state.index_pos = fs::metadata(self.index_path())?.len();
            fs::remove_file(self.blob_path(id))?;
            Ok(())
        })
    }

    pub fn list(&self, kind: BlobKind) -> Result<Vec<BlobId>> {
        self.with_state(false, |state| {
            Ok(state.records.values().filter(|r| r.kind == kind).map(|r| r.id.clone()).collect())
        })
    }

    pub fn create_link(&self, id: &BlobId, expiry: Option<u64>) -> Result<LinkToken> {
        self.with_state(true, |state| {
            if !state.records.contains_key(id) {
                return Err(StoreError::NotFound);
            }
            let token = loop {
                let t = random_hex_128();
                if !state.links.contains_key(&t) {
                    break t;
                }
            };
            let link = LinkToken { token: token.clone(), blob_id: id.clone(), expiry };
            append_line(&self.links_path(), &LinkLine::Link(link.clone()))?;
            state.links_pos = fs::metadata(self.links_path())?.len();
            state.links.insert(token, link.clone());
            Ok(link)
        })
    }

    /// Resolves anonymously. Unknown, expired and dangling tokens all yield
    /// the same `NotFound`.
    pub fn resolve_link_at(&self, token: &str, now: u64) -> Result<Vec<u8>> {
        self.with_state(true, |state| {
            let link = state.links.get(token).ok_or(StoreError::NotFound)?;
            if link.expiry.is_some_and(|e| now >= e) || !state.records.contains_key(&link.blob_id) {
                return Err(StoreError::NotFound);
            }
            let bytes = fs::read(self.blob_path(&link.blob_id)).map_err(|_| StoreError::NotFound)?;
            append_line(
                &self.links_path(),
                &LinkLine::Resolve { token: token.to_owned(), who: "anonymous".into(), at: now },
            )?;
            state.links_pos = fs::metadata(self.links_path())?.len();
            Ok(bytes)
        })
    }

    pub fn resolve_link(&self, token: &str) -> Result<Vec<u8>> {
        self.resolve_link_at(token, now_secs())
    }

    /// Every file under the store root with its raw bytes: what a party in
    /// full control of the server sees.
    pub fn admin_dump(&self) -> Result<Vec<(PathBuf, Vec<u8>)>> {
        self.with_state(false, |_| {
            let mut out = Vec::new();
            let mut stack = vec![self.root.clone()];
            while let Some(dir) = stack.pop() {
                for entry in fs::read_dir(&dir)? {
                    let entry = entry?;
                    let path = entry.path();
                    if entry.file_type()?.is_dir() {
                        stack.push(path);
                    } else {
                        out.push((path.clone(), fs::read(&path)?));
                    }
                }
            }
            out.sort();
            Ok(out)
        })
    }
}
