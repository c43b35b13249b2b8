//! Rollback detection for file headers.
//!
//! Each directory holds a `.fhf` file: the root of a hash tree over the
//! headers of its `.e2ef` files and the roots of its subdirectories, plus a
//! timestamp, MAC'd under a key derived from the master key. Recomputing the
//! tree bottom-up and comparing against the stamps catches a header swapped
//! for an older, validly-encrypted one in that directory and every ancestor.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::crypto::{mac_sign, mac_verify, MasterKey, PublicKey, SymmetricKey, MAC_LEN};
use crate::file_format::{Access, EncryptedFile, FILE_EXTENSION};

pub type Hash = [u8; 32];

pub const FHF_FILE_NAME: &str = ".fhf";
pub const FHF_MAGIC: &[u8; 4] = b"FHF1";
pub const FHF_LEN: usize = 4 + 32 + 8 + MAC_LEN;
/// Seconds between re-stamps unless the user picks another interval.
pub const DEFAULT_UPDATE_INTERVAL: u64 = 300;

const LEAF_FILE: u8 = 0x00;
const NODE: u8 = 0x01;
const LEAF_DIR: u8 = 0x02;

#[derive(Debug, Error)]
pub enum FreshnessError {
    #[error("clock regression: stamp at {now} is older than existing stamp at {previous}")]
    ClockRegression { previous: u64, now: u64 },
    #[error("duplicate entry name {0:?} in directory snapshot")]
    DuplicateName(String),
    #[error("malformed fhf-file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, FreshnessError>;

fn sha256(parts: &[&[u8]]) -> Hash {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

/// Hash of a file header (preamble and user blocks).
pub fn header_hash(header: &[u8]) -> Hash {
    sha256(&[header])
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Entry {
    File { name: Vec<u8>, header_hash: Hash },
    Dir { name: Vec<u8>, root: Hash },
}

impl Entry {
    fn name(&self) -> &[u8] {
        match self {
            Entry::File { name, .. } | Entry::Dir { name, .. } => name,
        }
    }

    fn leaf(&self) -> Hash {
        match self {
            Entry::File { name, header_hash } => sha256(&[&[LEAF_FILE], name, header_hash]),
            Entry::Dir { name, root } => sha256(&[&[LEAF_DIR], name, root]),
        }
    }
}

/// Sorted, name-unique view of one directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DirSnapshot {
    pub path: PathBuf,
    entries: Vec<Entry>,
}

impl DirSnapshot {
    pub fn new(
        path: impl Into<PathBuf>,
        files: impl IntoIterator<Item = (Vec<u8>, Hash)>,
        children: impl IntoIterator<Item = (Vec<u8>, Hash)>,
    ) -> Result<Self> {
        let mut entries: Vec<Entry> = files
            .into_iter()
            .map(|(name, header_hash)| Entry::File { name, header_hash })
            .chain(children.into_iter().map(|(name, root)| Entry::Dir { name, root }))
            .collect();
        entries.sort_by(|a, b| a.name().cmp(b.name()));
        if let Some(w) = entries.windows(2).find(|w| w[0].name() == w[1].name()) {
            return Err(FreshnessError::DuplicateName(String::from_utf8_lossy(w[0].name()).into_owned()));
        }
        Ok(DirSnapshot { path: path.into(), entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Merkle root over the snapshot's leaves in name order. An odd node at any
/// level is carried up unpaired; an empty directory hashes to `H(0x00)`.
pub fn compute_root(snapshot: &DirSnapshot) -> Hash {
    let mut level: Vec<Hash> = snapshot.entries.iter().map(Entry::leaf).collect();
    if level.is_empty() {
        return sha256(&[&[LEAF_FILE]]);
    }
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| match pair {
                [l, r] => sha256(&[&[NODE], l, r]),
                [single] => *single,
                _ => unreachable!(),
            })
            .collect();
    }
    level[0]
}

fn fhf_key(master_key: &MasterKey) -> SymmetricKey {
    master_key.derive("fhf", &[])
}

/// Timestamped, MAC'd directory root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FhfFile {
    pub root_hash: Hash,
    pub timestamp: u64,
    pub tag: [u8; MAC_LEN],
}

impl FhfFile {
    fn signed_bytes(root: &Hash, timestamp: u64) -> [u8; 40] {
        let mut msg = [0u8; 40];
        msg[..32].copy_from_slice(root);
        msg[32..].copy_from_slice(&timestamp.to_le_bytes());
        msg
    }

    pub fn verify_stamp(&self, master_key: &MasterKey) -> bool {
        mac_verify(&fhf_key(master_key), &Self::signed_bytes(&self.root_hash, self.timestamp), &self.tag)
    }

    /// `"FHF1" || root(32) || timestamp(u64 LE) || tag(32)`.
    pub fn to_bytes(&self) -> [u8; FHF_LEN] {
        let mut out = [0u8; FHF_LEN];
        out[..4].copy_from_slice(FHF_MAGIC);
        out[4..36].copy_from_slice(&self.root_hash);
        out[36..44].copy_from_slice(&self.timestamp.to_le_bytes());
        out[44..].copy_from_slice(&self.tag);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != FHF_LEN {
            return Err(FreshnessError::Malformed(format!("{} bytes, expected {FHF_LEN}", bytes.len())));
        }
        if &bytes[..4] != FHF_MAGIC {
            return Err(FreshnessError::Malformed("bad magic".into()));
        }
        Ok(FhfFile {
            root_hash: bytes[4..36].try_into().unwrap(),
            timestamp: u64::from_le_bytes(bytes[36..44].try_into().unwrap()),
            tag: bytes[44..].try_into().unwrap(),
        })
    }
}

/// Stamps `root` at `now`. `previous` is the last timestamp issued for this
/// directory, if any; time may not go backwards.
pub fn stamp(root: Hash, master_key: &MasterKey, now: u64, previous: Option<u64>) -> Result<FhfFile> {
    if let Some(previous) = previous {
        if now < previous {
            return Err(FreshnessError::ClockRegression { previous, now });
        }
    }
    let tag = mac_sign(&fhf_key(master_key), &FhfFile::signed_bytes(&root, now));
    Ok(FhfFile { root_hash: root, timestamp: now, tag })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ViolationKind {
    /// Recomputed root differs from the stamped one: rollback or tamper.
    RootMismatch,
    InvalidTag,
    Stale,
    MissingFhf,
    MalformedFhf,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Violation {
    pub path: PathBuf,
    pub kind: ViolationKind,
}

/// Maps a stored `.e2ef` file's bytes to the header bytes to hash. Callers
/// that can open the owner block return just the header.
pub trait HeaderExtractor {
    fn header<'a>(&self, path: &Path, file_bytes: &'a [u8]) -> std::borrow::Cow<'a, [u8]>;
}

impl<F> HeaderExtractor for F
where
    F: for<'a> Fn(&Path, &'a [u8]) -> std::borrow::Cow<'a, [u8]>,
{
    fn header<'a>(&self, path: &Path, file_bytes: &'a [u8]) -> std::borrow::Cow<'a, [u8]> {
        self(path, file_bytes)
    }
}

/// Hashes the whole file. Used when no key is available to find the header.
pub struct WholeFile;

impl HeaderExtractor for WholeFile {
    fn header<'a>(&self, _path: &Path, file_bytes: &'a [u8]) -> std::borrow::Cow<'a, [u8]> {
        std::borrow::Cow::Borrowed(file_bytes)
    }
}

/// Extracts headers of files owned by any of `owners`, falling back to the
/// whole file when no owner block opens.
pub struct OwnerHeaders<'k> {
    pub master_key: &'k MasterKey,
    pub owners: Vec<PublicKey>,
}

impl HeaderExtractor for OwnerHeaders<'_> {
    fn header<'a>(&self, _path: &Path, file_bytes: &'a [u8]) -> std::borrow::Cow<'a, [u8]> {
        let Ok(file) = EncryptedFile::parse(file_bytes) else {
            return std::borrow::Cow::Borrowed(file_bytes);
        };
        for owner_pk in &self.owners {
            let access = Access::Owner { master_key: self.master_key, owner_pk: *owner_pk };
            if let Ok(header) = file.header(&access) {
                return std::borrow::Cow::Owned(header.to_vec());
            }
        }
        std::borrow::Cow::Borrowed(file_bytes)
    }
}

/// Computed roots for every directory under (and including) `dir`, children
/// listed before parents.
pub fn compute_tree(dir: &Path, extractor: &dyn HeaderExtractor) -> Result<Vec<(PathBuf, Hash)>> {
    let mut out = Vec::new();
    compute_dir(dir, extractor, &mut out)?;
    Ok(out)
}

fn compute_dir(dir: &Path, extractor: &dyn HeaderExtractor, out: &mut Vec<(PathBuf, Hash)>) -> Result<Hash> {
    let mut files = Vec::new();
    let mut children = Vec::new();
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let ty = entry.file_type()?;
        let name = entry.file_name().as_encoded_bytes().to_vec();
        let path = entry.path();
        if ty.is_dir() {
            let root = compute_dir(&path, extractor, out)?;
            children.push((name, root));
        } else if ty.is_file() && path.extension().is_some_and(|e| e == FILE_EXTENSION) {
            let bytes = fs::read(&path)?;
            files.push((name, header_hash(&extractor.header(&path, &bytes))));
        }
    }
    let root = compute_root(&DirSnapshot::new(dir, files, children)?);
    out.push((dir.to_path_buf(), root));
    Ok(root)
}

fn read_fhf(dir: &Path) -> io::Result<Option<Vec<u8>>> {
    match fs::read(dir.join(FHF_FILE_NAME)) {
        Ok(b) => Ok(Some(b)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e),
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// Restamps every directory under `root_dir`. A directory whose root is
/// unchanged and whose stamp is younger than `interval` is left alone.
/// Returns the directories that were restamped.
pub fn update_tree(
    root_dir: &Path,
    master_key: &MasterKey,
    now: u64,
    interval: u64,
    extractor: &dyn HeaderExtractor,
) -> Result<Vec<PathBuf>> {
    let computed = compute_tree(root_dir, extractor)?;
    let mut plan = Vec::new();
    for (dir, root) in computed {
        let existing = read_fhf(&dir)?
            .and_then(|b| FhfFile::from_bytes(&b).ok())
            .filter(|f| f.verify_stamp(master_key));
        if let Some(prev) = &existing {
            if now < prev.timestamp {
                return Err(FreshnessError::ClockRegression { previous: prev.timestamp, now });
            }
            if prev.root_hash == root && now - prev.timestamp < interval {
                continue;
            }
        }
        plan.push((dir, stamp(root, master_key, now, existing.map(|f| f.timestamp))?));
    }
    let mut updated = Vec::with_capacity(plan.len());
    for (dir, fhf) in plan {
        write_atomic(&dir.join(FHF_FILE_NAME), &fhf.to_bytes())?;
        updated.push(dir);
    }
    Ok(updated)
}

/// Recomputes every directory root and checks it against the stored stamps.
pub fn verify_tree(
    root_dir: &Path,
    master_key: &MasterKey,
    max_age: u64,
    now: u64,
    extractor: &dyn HeaderExtractor,
) -> Result<Vec<Violation>> {
    let mut violations = Vec::new();
    for (dir, root) in compute_tree(root_dir, extractor)? {
        let mut flag = |kind| violations.push(Violation { path: dir.clone(), kind });
        let Some(bytes) = read_fhf(&dir)? else {
            flag(ViolationKind::MissingFhf);
            continue;
        };
        let Ok(fhf) = FhfFile::from_bytes(&bytes) else {
            flag(ViolationKind::MalformedFhf);
            continue;
        };
        if !fhf.verify_stamp(master_key) {
            flag(ViolationKind::InvalidTag);
            continue;
        }
        if fhf.root_hash != root {
            flag(ViolationKind::RootMismatch);
        }
        if now.saturating_sub(fhf.timestamp) > max_age {
            flag(ViolationKind::Stale);
        }
    }
    violations.sort();
    Ok(violations)
}
