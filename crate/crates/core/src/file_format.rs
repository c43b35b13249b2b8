//! Encrypted file container with per-user access blocks.
//!
//! ```text
//! "E2EF" | 0x01 | block_0 .. block_{N-1} | SealedBox(content) | HMAC(FSK, SealedBox)
//!   4       1       N x 128 bytes             len + 40                 32
//! ```
//!
//! Every block is an XChaCha20-Poly1305 box over an 88-byte record
//! `user_id(16) | FEK(32) | X_KEY(32) | content_offset(u64 LE)`. Block 0 is the
//! owner's and is keyed from the master key; the rest are keyed with the
//! pairwise ECDH key between owner and grantee. X_KEY is the FSK for writers
//! and fresh random bytes for readers, so the two are indistinguishable
//! without the key. Nothing in the file names the owner or any grantee; a
//! reader finds its block by trial decryption.

use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};
use subtle::ConstantTimeEq;
use thiserror::Error;

use crate::crypto::{
    aead_open, aead_seal, derive_shared_key, mac_sign, mac_verify, CryptoError, KeyPair, MasterKey,
    PublicKey, SealedBox, SymmetricKey, MAC_LEN, SEAL_OVERHEAD,
};

pub const MAGIC: &[u8; 4] = b"E2EF";
pub const VERSION: u8 = 1;
pub const PREAMBLE_LEN: usize = 5;
pub const BLOCK_PLAIN_LEN: usize = 88;
pub const BLOCK_LEN: usize = BLOCK_PLAIN_LEN + SEAL_OVERHEAD;
/// Preamble, one block, an empty content box and the signature.
pub const MIN_FILE_LEN: usize = PREAMBLE_LEN + BLOCK_LEN + SEAL_OVERHEAD + MAC_LEN;
pub const FILE_EXTENSION: &str = "e2ef";

const SHARE_PURPOSE: &str = "share";
const OWNER_BLOCK_LABEL: &str = "owner-block";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FileError {
    #[error("format error: {0}")]
    Format(String),
    #[error("not authorized: no header block opens with this key")]
    NotAuthorized,
    #[error("no write capability for this file")]
    NoWriteCapability,
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("encrypted content failed authentication")]
    Tampered,
    #[error("grantee already has access")]
    DuplicateGrantee,
    #[error("grantee not found in file header")]
    GranteeNotFound,
    #[error("header block {0} belongs to a key outside the supplied directory")]
    UnknownGrantee(usize),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

pub type Result<T> = std::result::Result<T, FileError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Permission {
    Read,
    ReadWrite,
}

/// FEK encrypts content; FSK signs it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FileKeys {
    pub fek: SymmetricKey,
    pub fsk: SymmetricKey,
}

impl FileKeys {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let fek = SymmetricKey::generate(rng);
        loop {
            let fsk = SymmetricKey::generate(rng);
            if fsk != fek {
                return FileKeys { fek, fsk };
            }
        }
    }
}

/// 16-byte fingerprint stored inside a block.
pub fn user_id(pk: &PublicKey) -> [u8; 16] {
    Sha256::digest(pk.as_bytes())[..16].try_into().unwrap()
}

#[derive(Clone, PartialEq, Eq)]
pub struct UserBlockPlain {
    pub user_id: [u8; 16],
    pub fek: SymmetricKey,
    pub x_key: [u8; 32],
    pub content_offset: u64,
}

impl UserBlockPlain {
    pub fn to_bytes(&self) -> [u8; BLOCK_PLAIN_LEN] {
        let mut out = [0u8; BLOCK_PLAIN_LEN];
        out[..16].copy_from_slice(&self.user_id);
        out[16..48].copy_from_slice(self.fek.as_bytes());
        out[48..80].copy_from_slice(&self.x_key);
        out[80..].copy_from_slice(&self.content_offset.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != BLOCK_PLAIN_LEN {
            return Err(FileError::Integrity(format!("user block is {} bytes", bytes.len())));
        }
        Ok(UserBlockPlain {
            user_id: bytes[..16].try_into().unwrap(),
            fek: SymmetricKey::from_slice(&bytes[16..48])?,
            x_key: bytes[48..80].try_into().unwrap(),
            content_offset: u64::from_le_bytes(bytes[80..].try_into().unwrap()),
        })
    }
}

impl std::fmt::Debug for UserBlockPlain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UserBlockPlain")
            .field("user_id", &hex::encode(self.user_id))
            .field("content_offset", &self.content_offset)
            .finish_non_exhaustive()
    }
}

/// Owner credentials needed to manage a file's header.
#[derive(Clone, Copy)]
pub struct OwnerKeys<'a> {
    pub keypair: &'a KeyPair,
    pub master_key: &'a MasterKey,
}

impl OwnerKeys<'_> {
    fn access(&self) -> Access<'_> {
        Access::Owner { master_key: self.master_key, owner_pk: self.keypair.public() }
    }
}

/// How a caller proves it may open a block.
#[derive(Clone, Copy)]
pub enum Access<'a> {
    /// The owner opens block 0 with a key derived from the master key.
    Owner { master_key: &'a MasterKey, owner_pk: PublicKey },
    /// A grantee scans blocks 1.. with the pairwise key shared with the owner.
    Grantee { keypair: &'a KeyPair, owner_pk: PublicKey },
}

fn owner_block_key(master_key: &MasterKey, owner_pk: &PublicKey) -> SymmetricKey {
    master_key.derive(OWNER_BLOCK_LABEL, owner_pk.as_bytes())
}

/// Serialized container. Only the preamble and minimum length are checked at
/// parse time; block boundaries are unknown until a reader opens its block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncryptedFile {
    bytes: Vec<u8>,
}

struct OpenedBlock {
    plain: UserBlockPlain,
    header_len: usize,
}

impl EncryptedFile {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(FileError::Format("bad magic".into()));
        }
        if bytes.len() < PREAMBLE_LEN || bytes[4] != VERSION {
            return Err(FileError::Format(format!("unsupported version {:?}", bytes.get(4))));
        }
        if bytes.len() < MIN_FILE_LEN {
            return Err(FileError::Format(format!(
                "truncated: {} bytes, need at least {MIN_FILE_LEN}",
                bytes.len()
            )));
        }
        Ok(EncryptedFile { bytes: bytes.to_vec() })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.bytes.clone()
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    fn preamble(&self) -> &[u8] {
        &self.bytes[..PREAMBLE_LEN]
    }

    /// Candidate block slots: every 128-byte window that still leaves room
    /// for an empty content box and signature.
    fn block_slots(&self) -> usize {
        (self.bytes.len() - PREAMBLE_LEN - SEAL_OVERHEAD - MAC_LEN) / BLOCK_LEN
    }

    fn block(&self, index: usize) -> &[u8] {
        let start = PREAMBLE_LEN + index * BLOCK_LEN;
        &self.bytes[start..start + BLOCK_LEN]
    }

    fn try_open_block(&self, index: usize, key: &SymmetricKey) -> Option<Vec<u8>> {
        let sealed = SealedBox::from_bytes(self.block(index)).ok()?;
        aead_open(key, &sealed, self.preamble()).ok()
    }

    fn validated(&self, index: usize, raw: Vec<u8>, expect_id: &PublicKey) -> Result<OpenedBlock> {
        let plain = UserBlockPlain::from_bytes(&raw)?;
        if !bool::from(plain.user_id.ct_eq(&user_id(expect_id))) {
            return Err(FileError::Integrity("user id in block does not match key".into()));
        }
        let header_len = usize::try_from(plain.content_offset)
            .map_err(|_| FileError::Integrity("content offset overflows".into()))?;
        let aligned = header_len >= PREAMBLE_LEN && (header_len - PREAMBLE_LEN).is_multiple_of(BLOCK_LEN);
        let covers_block = header_len >= PREAMBLE_LEN + (index + 1) * BLOCK_LEN;
        let fits = header_len + SEAL_OVERHEAD + MAC_LEN <= self.bytes.len();
        if !(aligned && covers_block && fits) {
            return Err(FileError::Integrity(format!(
                "content offset {header_len} inconsistent with a {}-byte file",
                self.bytes.len()
            )));
        }
        Ok(OpenedBlock { plain, header_len })
    }

    fn open_block(&self, access: &Access<'_>) -> Result<OpenedBlock> {
        match access {
            Access::Owner { master_key, owner_pk } => {
                let key = owner_block_key(master_key, owner_pk);
                let raw = self.try_open_block(0, &key).ok_or(FileError::NotAuthorized)?;
                self.validated(0, raw, owner_pk)
            }
            Access::Grantee { keypair, owner_pk } => {
                let key = derive_shared_key(keypair, owner_pk, SHARE_PURPOSE)?;
                for index in 1..self.block_slots() {
                    if let Some(raw) = self.try_open_block(index, &key) {
                        return self.validated(index, raw, &keypair.public());
                    }
                }
                Err(FileError::NotAuthorized)
            }
        }
    }

    fn content_and_signature(&self, header_len: usize) -> Result<(SealedBox, &[u8])> {
        let sig_start = self.bytes.len() - MAC_LEN;
        let sealed = SealedBox::from_bytes(&self.bytes[header_len..sig_start])
            .map_err(|e| FileError::Integrity(e.to_string()))?;
        Ok((sealed, &self.bytes[sig_start..]))
    }

    /// Preamble plus all user blocks. Requires a key to locate the boundary.
    pub fn header(&self, access: &Access<'_>) -> Result<&[u8]> {
        let opened = self.open_block(access)?;
        Ok(&self.bytes[..opened.header_len])
    }

    /// Number of user blocks as seen through `access`.
    pub fn block_count(&self, access: &Access<'_>) -> Result<usize> {
        Ok((self.open_block(access)?.header_len - PREAMBLE_LEN) / BLOCK_LEN)
    }
}

/// One block to seal when assembling a header.
enum BlockSpec {
    Owner,
    Grantee(PublicKey, Permission),
}

fn assemble<R: RngCore + CryptoRng>(
    owner: OwnerKeys<'_>,
    keys: &FileKeys,
    grantees: &[(PublicKey, Permission)],
    content: &SealedBox,
    signature: &[u8; MAC_LEN],
    rng: &mut R,
) -> Result<EncryptedFile> {
    let block_count = 1 + grantees.len();
    let header_len = PREAMBLE_LEN + BLOCK_LEN * block_count;
    let mut bytes = Vec::with_capacity(header_len + content.len() + MAC_LEN);
    bytes.extend_from_slice(MAGIC);
    bytes.push(VERSION);

    let specs = std::iter::once(BlockSpec::Owner)
        .chain(grantees.iter().map(|(pk, perm)| BlockSpec::Grantee(*pk, *perm)));
    for spec in specs {
        let (key, id, x_key) = match spec {
            BlockSpec::Owner => {
                let pk = owner.keypair.public();
                (owner_block_key(owner.master_key, &pk), user_id(&pk), *keys.fsk.as_bytes())
            }
            BlockSpec::Grantee(pk, perm) => {
                let x_key = match perm {
                    Permission::ReadWrite => *keys.fsk.as_bytes(),
                    Permission::Read => dummy_key(rng),
                };
                (derive_shared_key(owner.keypair, &pk, SHARE_PURPOSE)?, user_id(&pk), x_key)
            }
        };
        let plain = UserBlockPlain {
            user_id: id,
            fek: keys.fek.clone(),
            x_key,
            content_offset: header_len as u64,
        };
        let sealed = aead_seal(&key, &plain.to_bytes(), &bytes[..PREAMBLE_LEN], rng);
        sealed.write_to(&mut bytes);
    }
    debug_assert_eq!(bytes.len(), header_len);
    content.write_to(&mut bytes);
    bytes.extend_from_slice(signature);
    Ok(EncryptedFile { bytes })
}

fn dummy_key<R: RngCore + CryptoRng>(rng: &mut R) -> [u8; 32] {
    let mut k = [0u8; 32];
    while k == [0u8; 32] {
        rng.fill_bytes(&mut k);
    }
    k
}

fn seal_content<R: RngCore + CryptoRng>(keys: &FileKeys, content: &[u8], rng: &mut R) -> (SealedBox, [u8; MAC_LEN]) {
    let mut preamble = MAGIC.to_vec();
    preamble.push(VERSION);
    let sealed = aead_seal(&keys.fek, content, &preamble, rng);
    let signature = mac_sign(&keys.fsk, &sealed.to_bytes());
    (sealed, signature)
}

pub fn create_encrypted_file<R: RngCore + CryptoRng>(
    content: &[u8],
    owner: OwnerKeys<'_>,
    rng: &mut R,
) -> Result<EncryptedFile> {
    let keys = FileKeys::generate(rng);
    let (sealed, signature) = seal_content(&keys, content, rng);
    assemble(owner, &keys, &[], &sealed, &signature, rng)
}

/// Everything the owner can see in a header.
struct OwnerView {
    keys: FileKeys,
    grantees: Vec<(PublicKey, Permission)>,
    content: SealedBox,
    signature: [u8; MAC_LEN],
}

fn owner_view(file: &EncryptedFile, owner: OwnerKeys<'_>, directory: &[PublicKey]) -> Result<OwnerView> {
    let opened = file.open_block(&owner.access())?;
    let fsk = SymmetricKey::from_bytes(opened.plain.x_key);
    let keys = FileKeys { fek: opened.plain.fek.clone(), fsk };
    let (content, signature) = file.content_and_signature(opened.header_len)?;
    if !mac_verify(&keys.fsk, &content.to_bytes(), signature) {
        return Err(FileError::Integrity("owner signature check failed".into()));
    }
    let signature: [u8; MAC_LEN] = signature.try_into().unwrap();

    let candidates: Vec<(PublicKey, SymmetricKey)> = directory
        .iter()
        .filter(|pk| **pk != owner.keypair.public())
        .filter_map(|pk| derive_shared_key(owner.keypair, pk, SHARE_PURPOSE).ok().map(|k| (*pk, k)))
        .collect();

    let block_count = (opened.header_len - PREAMBLE_LEN) / BLOCK_LEN;
    let mut grantees = Vec::with_capacity(block_count - 1);
    for index in 1..block_count {
        let (pk, raw) = candidates
            .iter()
            .find_map(|(pk, key)| file.try_open_block(index, key).map(|raw| (*pk, raw)))
            .ok_or(FileError::UnknownGrantee(index))?;
        let block = file.validated(index, raw, &pk)?;
        if block.header_len != opened.header_len {
            return Err(FileError::Integrity(format!("block {index} disagrees on content offset")));
        }
        let perm = if bool::from(block.plain.x_key.ct_eq(keys.fsk.as_bytes())) {
            Permission::ReadWrite
        } else {
            Permission::Read
        };
        grantees.push((pk, perm));
    }
    Ok(OwnerView { keys, grantees, content, signature })
}

/// Adds a block for `grantee`. Every existing grantee must be in `directory`
/// since all blocks are resealed with the new content offset.
pub fn grant<R: RngCore + CryptoRng>(
    file: &EncryptedFile,
    owner: OwnerKeys<'_>,
    directory: &[PublicKey],
    grantee: &PublicKey,
    perm: Permission,
    rng: &mut R,
) -> Result<EncryptedFile> {
    let mut view = owner_view(file, owner, directory)?;
    if *grantee == owner.keypair.public() || view.grantees.iter().any(|(pk, _)| pk == grantee) {
        return Err(FileError::DuplicateGrantee);
    }
    view.grantees.push((*grantee, perm));
    assemble(owner, &view.keys, &view.grantees, &view.content, &view.signature, rng)
}

/// Current grantees and their permissions, as seen by the owner.
pub fn list_grantees(
    file: &EncryptedFile,
    owner: OwnerKeys<'_>,
    directory: &[PublicKey],
) -> Result<Vec<(PublicKey, Permission)>> {
    Ok(owner_view(file, owner, directory)?.grantees)
}

pub fn read(file: &EncryptedFile, access: &Access<'_>) -> Result<(Vec<u8>, Permission)> {
    let opened = file.open_block(access)?;
    let (content, signature) = file.content_and_signature(opened.header_len)?;
    let plaintext = aead_open(&opened.plain.fek, &content, file.preamble()).map_err(|_| FileError::Tampered)?;
    let x_key = SymmetricKey::from_bytes(opened.plain.x_key);
    let perm = if mac_verify(&x_key, &content.to_bytes(), signature) {
        Permission::ReadWrite
    } else {
        Permission::Read
    };
    if matches!(access, Access::Owner { .. }) && perm != Permission::ReadWrite {
        return Err(FileError::Integrity("file signature does not verify under the owner's FSK".into()));
    }
    Ok((plaintext, perm))
}

/// Replaces the content. Refuses unless the caller's X_KEY verifies the
/// current signature, i.e. it really is the FSK.
pub fn write<R: RngCore + CryptoRng>(
    file: &EncryptedFile,
    access: &Access<'_>,
    new_content: &[u8],
    rng: &mut R,
) -> Result<EncryptedFile> {
    let opened = file.open_block(access)?;
    let (content, signature) = file.content_and_signature(opened.header_len)?;
    let fsk = SymmetricKey::from_bytes(opened.plain.x_key);
    if !mac_verify(&fsk, &content.to_bytes(), signature) {
        return Err(FileError::NoWriteCapability);
    }
    let keys = FileKeys { fek: opened.plain.fek, fsk };
    let (sealed, signature) = seal_content(&keys, new_content, rng);
    let mut bytes = file.bytes[..opened.header_len].to_vec();
    sealed.write_to(&mut bytes);
    bytes.extend_from_slice(&signature);
    Ok(EncryptedFile { bytes })
}

/// Drops `revoked` and rotates FEK and FSK; remaining grantees keep their
/// permission under the new keys.
pub fn revoke<R: RngCore + CryptoRng>(
    file: &EncryptedFile,
    owner: OwnerKeys<'_>,
    directory: &[PublicKey],
    revoked: &PublicKey,
    rng: &mut R,
) -> Result<EncryptedFile> {
    let view = owner_view(file, owner, directory)?;
    let before = view.grantees.len();
    let remaining: Vec<_> = view.grantees.into_iter().filter(|(pk, _)| pk != revoked).collect();
    if remaining.len() == before {
        return Err(FileError::GranteeNotFound);
    }
    let mut preamble = MAGIC.to_vec();
    preamble.push(VERSION);
    let plaintext = aead_open(&view.keys.fek, &view.content, &preamble).map_err(|_| FileError::Tampered)?;
    let mut keys = FileKeys::generate(rng);
    while keys.fek == view.keys.fek || keys.fsk == view.keys.fsk {
        keys = FileKeys::generate(rng);
    }
    let (sealed, signature) = seal_content(&keys, &plaintext, rng);
    assemble(owner, &keys, &remaining, &sealed, &signature, rng)
}

/// Keys as recovered by `access`: FEK plus X_KEY. Exposed for audits.
pub fn recovered_keys(file: &EncryptedFile, access: &Access<'_>) -> Result<(SymmetricKey, [u8; 32])> {
    let opened = file.open_block(access)?;
    Ok((opened.plain.fek, opened.plain.x_key))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::generate_keypair;
    use rand::rngs::OsRng;

    struct Owner {
        kp: KeyPair,
        mk: MasterKey,
    }

    impl Owner {
        fn new() -> Self {
            Owner { kp: generate_keypair(&mut OsRng), mk: MasterKey::generate(&mut OsRng) }
        }
        fn keys(&self) -> OwnerKeys<'_> {
            OwnerKeys { keypair: &self.kp, master_key: &self.mk }
        }
        fn access(&self) -> Access<'_> {
            Access::Owner { master_key: &self.mk, owner_pk: self.kp.public() }
        }
    }

    fn as_grantee<'a>(kp: &'a KeyPair, owner: &Owner) -> Access<'a> {
        Access::Grantee { keypair: kp, owner_pk: owner.kp.public() }
    }

    #[test]
    fn empty_content() {
        let o = Owner::new();
        let f = create_encrypted_file(b"", o.keys(), &mut OsRng).unwrap();
        assert_eq!(f.len(), MIN_FILE_LEN);
        assert_eq!(read(&f, &o.access()).unwrap(), (vec![], Permission::ReadWrite));
    }

    #[test]
    fn layout_length() {
        let o = Owner::new();
        let f = create_encrypted_file(&[7u8; 1000], o.keys(), &mut OsRng).unwrap();
        assert_eq!(f.len(), 5 + 128 + 1000 + 40 + 32);
        assert_eq!(&f.as_bytes()[..5], b"E2EF\x01");
        assert_eq!(f.header(&o.access()).unwrap().len(), 133);
    }

    #[test]
    fn read_only_grantee_cannot_write() {
        let o = Owner::new();
        let r = generate_keypair(&mut OsRng);
        let f = create_encrypted_file(b"doc", o.keys(), &mut OsRng).unwrap();
        let f = grant(&f, o.keys(), &[], &r.public(), Permission::Read, &mut OsRng).unwrap();
        assert_eq!(read(&f, &as_grantee(&r, &o)).unwrap(), (b"doc".to_vec(), Permission::Read));
        assert_eq!(
            write(&f, &as_grantee(&r, &o), b"evil", &mut OsRng).unwrap_err(),
            FileError::NoWriteCapability
        );
    }

    #[test]
    fn duplicate_and_self_grant_rejected() {
        let o = Owner::new();
        let r = generate_keypair(&mut OsRng);
        let f = create_encrypted_file(b"doc", o.keys(), &mut OsRng).unwrap();
        let f = grant(&f, o.keys(), &[], &r.public(), Permission::Read, &mut OsRng).unwrap();
        let dir = [r.public()];
        assert_eq!(
            grant(&f, o.keys(), &dir, &r.public(), Permission::ReadWrite, &mut OsRng).unwrap_err(),
            FileError::DuplicateGrantee
        );
        assert_eq!(
            grant(&f, o.keys(), &dir, &o.kp.public(), Permission::Read, &mut OsRng).unwrap_err(),
            FileError::DuplicateGrantee
        );
    }

    #[test]
    fn grant_needs_existing_grantees_in_directory() {
        let o = Owner::new();
        let a = generate_keypair(&mut OsRng);
        let b = generate_keypair(&mut OsRng);
        let f = create_encrypted_file(b"doc", o.keys(), &mut OsRng).unwrap();
        let f = grant(&f, o.keys(), &[], &a.public(), Permission::Read, &mut OsRng).unwrap();
        assert_eq!(
            grant(&f, o.keys(), &[], &b.public(), Permission::Read, &mut OsRng).unwrap_err(),
            FileError::UnknownGrantee(1)
        );
    }

    #[test]
    fn non_owner_cannot_grant() {
        let o = Owner::new();
        let f = create_encrypted_file(b"doc", o.keys(), &mut OsRng).unwrap();
        let impostor = Owner::new();
        assert_eq!(
            grant(&f, impostor.keys(), &[], &generate_keypair(&mut OsRng).public(), Permission::Read, &mut OsRng)
                .unwrap_err(),
            FileError::NotAuthorized
        );
    }

    #[test]
    fn revoke_unknown_grantee() {
        let o = Owner::new();
        let f = create_encrypted_file(b"doc", o.keys(), &mut OsRng).unwrap();
        assert_eq!(
            revoke(&f, o.keys(), &[], &generate_keypair(&mut OsRng).public(), &mut OsRng).unwrap_err(),
            FileError::GranteeNotFound
        );
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(EncryptedFile::parse(b"NOPE\x01"), Err(FileError::Format(_))));
        let mut bytes = vec![0u8; MIN_FILE_LEN];
        bytes[..5].copy_from_slice(b"E2EF\x02");
        assert!(matches!(EncryptedFile::parse(&bytes), Err(FileError::Format(_))));
        bytes[4] = 1;
        assert!(EncryptedFile::parse(&bytes).is_ok());
        assert!(matches!(EncryptedFile::parse(&bytes[..MIN_FILE_LEN - 1]), Err(FileError::Format(_))));
    }

    #[test]
    fn content_tamper_detected() {
        let o = Owner::new();
        let f = create_encrypted_file(b"hello world", o.keys(), &mut OsRng).unwrap();
        let mut bytes = f.to_bytes();
        bytes[5 + 128 + 30] ^= 1;
        let f = EncryptedFile::parse(&bytes).unwrap();
        assert_eq!(read(&f, &o.access()).unwrap_err(), FileError::Tampered);
    }

    #[test]
    fn owner_signature_tamper_is_integrity_error() {
        let o = Owner::new();
        let f = create_encrypted_file(b"hello", o.keys(), &mut OsRng).unwrap();
        let mut bytes = f.to_bytes();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        let f = EncryptedFile::parse(&bytes).unwrap();
        assert!(matches!(read(&f, &o.access()), Err(FileError::Integrity(_))));
    }
}
