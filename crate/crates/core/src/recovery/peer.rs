//! Peer side of the protocol: holds other users' shards sealed under its own
//! master key in the shared store, and answers offers, requests and rebinds.

use std::collections::{BTreeMap, HashSet};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use rand::rngs::OsRng;
use serde::{Deserialize, Serialize};

use super::types::ShardEnvelope;
use super::wire::{Message, Role, SecureChannel, OPEN_SESSION, PROBE};
use super::{PeerInfo, RecoveryError, Result};
use crate::crypto::{aead_open, aead_seal, verify, KeyPair, MasterKey, PublicKey, SealedBox, Signature, SymmetricKey};
use crate::store::{BlobId, BlobKind, Store};

const SHARD_BLOB_MAGIC: &[u8; 4] = b"SHD1";
pub const ESCROW_MAGIC: &[u8; 4] = b"ESC1";

pub(crate) fn shard_request_message(owner_pk: &PublicKey, peer_pk: &PublicKey, nonce: &[u8; 16]) -> Vec<u8> {
    let mut m = b"e2ee-vault/v1/shard-request".to_vec();
    m.extend_from_slice(owner_pk.as_bytes());
    m.extend_from_slice(peer_pk.as_bytes());
    m.extend_from_slice(nonce);
    m
}

pub(crate) fn rebind_message(old_pk: &PublicKey, new_pk: &PublicKey) -> Vec<u8> {
    let mut m = b"e2ee-vault/v1/rebind".to_vec();
    m.extend_from_slice(old_pk.as_bytes());
    m.extend_from_slice(new_pk.as_bytes());
    m
}

/// Where a held shard lives in the store.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerRecord {
    pub blob_id: BlobId,
    pub index: u8,
}

pub struct PeerState {
    keypair: KeyPair,
    master_key: MasterKey,
    info: PeerInfo,
    /// Keyed by the owner's current public key.
    pub records: BTreeMap<PublicKey, PeerRecord>,
    seen_nonces: HashSet<[u8; 16]>,
}

fn refuse(reason: &str) -> Option<Message> {
    Some(Message::Refuse { reason: reason.to_owned() })
}

impl PeerState {
    pub fn new(keypair: KeyPair, master_key: MasterKey, name: &str, email: &str) -> Result<Self> {
        let info = PeerInfo::new(keypair.public(), name, email)?;
        Ok(PeerState { keypair, master_key, info, records: BTreeMap::new(), seen_nonces: HashSet::new() })
    }

    /// Rebuilds a peer from persisted parts.
    pub fn from_parts(
        keypair: KeyPair,
        master_key: MasterKey,
        info: PeerInfo,
        records: BTreeMap<PublicKey, PeerRecord>,
    ) -> Result<Self> {
        if info.pk != keypair.public() {
            return Err(RecoveryError::Malformed("peer info key does not match keypair".into()));
        }
        Ok(PeerState { keypair, master_key, info, records, seen_nonces: HashSet::new() })
    }

    pub fn master_key(&self) -> &MasterKey {
        &self.master_key
    }

    pub fn info(&self) -> &PeerInfo {
        &self.info
    }

    pub fn public(&self) -> PublicKey {
        self.keypair.public()
    }

    pub fn keypair(&self) -> &KeyPair {
        &self.keypair
    }

    fn shard_key(&self) -> SymmetricKey {
        self.master_key.derive("peer-shard", &[])
    }

    fn blob_aad(owner_pk: &PublicKey) -> Vec<u8> {
        let mut aad = SHARD_BLOB_MAGIC.to_vec();
        aad.extend_from_slice(owner_pk.as_bytes());
        aad
    }

    /// `"SHD1" || owner_pk || SealedBox(envelope)` under the peer's own key.
    fn seal_envelope(&self, owner_pk: &PublicKey, env: &ShardEnvelope) -> Vec<u8> {
        let aad = Self::blob_aad(owner_pk);
        let sealed = aead_seal(&self.shard_key(), &env.to_bytes(), &aad, &mut OsRng);
        let mut out = aad;
        sealed.write_to(&mut out);
        out
    }

    fn open_envelope(&self, owner_pk: &PublicKey, blob: &[u8]) -> Result<ShardEnvelope> {
        let aad = Self::blob_aad(owner_pk);
        if blob.len() < aad.len() || blob[..aad.len()] != aad[..] {
            return Err(RecoveryError::Malformed("shard blob header mismatch".into()));
        }
        let sealed = SealedBox::from_bytes(&blob[aad.len()..])?;
        ShardEnvelope::from_bytes(&aead_open(&self.shard_key(), &sealed, &aad)?)
    }

    /// The envelope held for `owner_pk`, fetched from the store and unsealed.
    pub fn held_envelope(&self, owner_pk: &PublicKey, store: &Store) -> Result<ShardEnvelope> {
        let rec = self.records.get(owner_pk).ok_or(RecoveryError::UnknownOwner)?;
        self.open_envelope(owner_pk, &store.get(&rec.blob_id)?)
    }

    /// Handles one message from the authenticated `remote`; returns the reply.
    pub fn handle(&mut self, remote: &PublicKey, msg: Message, store: &Store) -> Result<Option<Message>> {
        Ok(match msg {
            Message::Hello(info) if info.pk == *remote => Some(Message::Hello(self.info.clone())),
            Message::Hello(_) => refuse("hello key does not match session"),
            Message::ShardOffer(env) => {
                if env.owner_pk != *remote || !env.verify() {
                    return Ok(refuse("shard envelope not signed by session owner"));
                }
                let blob = self.seal_envelope(&env.owner_pk, &env);
                let blob_id = match self.records.get(&env.owner_pk) {
                    Some(rec) => {
                        store.replace(&rec.blob_id, &blob)?;
                        rec.blob_id.clone()
                    }
                    None => store.put(BlobKind::Shard, &blob)?,
                };
                self.records.insert(env.owner_pk, PeerRecord { blob_id, index: env.index() });
                Some(Message::ShardAck { index: env.index() })
            }
            Message::ShardRequest { owner_pk, nonce, sig } => {
                let msg = shard_request_message(&owner_pk, &self.public(), &nonce);
                if owner_pk != *remote || !verify(&owner_pk, &msg, &sig) {
                    return Ok(refuse("request not signed by session owner"));
                }
                if !self.seen_nonces.insert(nonce) {
                    return Ok(refuse("replayed request"));
                }
                if !self.records.contains_key(&owner_pk) {
                    return Ok(refuse("no shard held for this key"));
                }
                Some(Message::ShardResponse(self.held_envelope(&owner_pk, store)?))
            }
            Message::Rebind { old_pk, new_pk, endorsement } => {
                if (*remote != old_pk && *remote != new_pk)
                    || old_pk == new_pk
                    || !verify(&old_pk, &rebind_message(&old_pk, &new_pk), &endorsement)
                {
                    return Ok(refuse("invalid rebind endorsement"));
                }
                if self.records.contains_key(&new_pk) {
                    return Ok(refuse("new key already bound"));
                }
                let Some(rec) = self.records.get(&old_pk).cloned() else {
                    return Ok(refuse("no shard held for this key"));
                };
                let env = self.open_envelope(&old_pk, &store.get(&rec.blob_id)?)?;
                store.replace(&rec.blob_id, &self.seal_envelope(&new_pk, &env))?;
                self.records.remove(&old_pk);
                self.records.insert(new_pk, rec);
                Some(Message::RebindAck)
            }
            other => refuse(&format!("unexpected {}", other.name())),
        })
    }

    /// Printable out-of-band export of the shard held for `owner_pk`.
    pub fn escrow_export(&self, owner_pk: &PublicKey, store: &Store) -> Result<String> {
        let env = self.held_envelope(owner_pk, store)?;
        let mut raw = ESCROW_MAGIC.to_vec();
        raw.extend_from_slice(&env.to_bytes());
        Ok(BASE64.encode(raw))
    }
}

/// Parses an escrow export back to its envelope.
pub fn decode_escrow_blob(blob: &str) -> Result<ShardEnvelope> {
    let raw = BASE64
        .decode(blob.trim())
        .map_err(|e| RecoveryError::Malformed(format!("escrow blob: {e}")))?;
    match raw.strip_prefix(ESCROW_MAGIC) {
        Some(rest) => ShardEnvelope::from_bytes(rest),
        None => Err(RecoveryError::Malformed("escrow blob: bad magic".into())),
    }
}

/// Frame-level state machine for one inbound connection.
#[derive(Default)]
pub struct Responder {
    channel: Option<SecureChannel>,
    closed: bool,
}

impl Responder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Processes one frame, returning at most one frame to send back.
    pub fn on_frame(&mut self, state: &mut PeerState, store: &Store, frame: &[u8]) -> Result<Option<Vec<u8>>> {
        if self.closed {
            return Err(RecoveryError::Transport("connection closed".into()));
        }
        let Some(channel) = self.channel.as_mut() else {
            return match frame.split_first() {
                Some((&PROBE, [])) => {
                    self.closed = true;
                    Ok(Some(Message::Hello(state.info().clone()).to_bytes()))
                }
                Some((&OPEN_SESSION, pk)) if pk.len() == 32 => {
                    let remote = PublicKey(pk.try_into().unwrap());
                    self.channel = Some(SecureChannel::new(state.keypair(), remote, Role::Responder)?);
                    Ok(None)
                }
                _ => {
                    self.closed = true;
                    Err(RecoveryError::Transport("bad handshake".into()))
                }
            };
        };
        let msg = channel.open(frame)?;
        let remote = channel.remote();
        Ok(state.handle(&remote, msg, store)?.map(|reply| channel.seal(&reply)))
    }
}

/// Whether `endorsement` authorizes moving shards from `old_pk` to `new_pk`.
pub fn endorsement_valid(old_pk: &PublicKey, new_pk: &PublicKey, endorsement: &Signature) -> bool {
    verify(old_pk, &rebind_message(old_pk, new_pk), endorsement)
}
