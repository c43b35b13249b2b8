use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{CryptoRng, RngCore};

use super::peer::{decode_escrow_blob, rebind_message, shard_request_message};
use super::transport::{Session, Transport};
use super::types::{PeerList, SecretCommitment, ShardEnvelope};
use super::wire::Message;
use super::{PeerInfo, RecoveryError, Result};
use crate::crypto::{sign, KdfParams, KeyPair, MasterKey, PasswordEnvelope, PublicKey, Signature};
use crate::crypto::CryptoError;
use crate::sharing::{join, split, Shard, ThresholdParams};
use crate::store::{BlobId, BlobKind, Store, StoreError};

pub fn password_backup<R: RngCore + CryptoRng>(
    master: &MasterKey,
    password: &str,
    params: KdfParams,
    store: &Store,
    rng: &mut R,
) -> Result<BlobId> {
    let env = PasswordEnvelope::seal(master, password, params, rng)?;
    Ok(store.put(BlobKind::Envelope, &env.to_bytes())?)
}

pub fn password_restore(store: &Store, id: &BlobId, password: &str) -> Result<MasterKey> {
    let bytes = store.get(id).map_err(|e| match e {
        StoreError::NotFound => RecoveryError::MissingBlob,
        other => other.into(),
    })?;
    PasswordEnvelope::from_bytes(&bytes)?.open(password).map_err(|e| match e {
        CryptoError::AuthenticationFailed => RecoveryError::WrongPassword,
        other => other.into(),
    })
}

/// Exchanges HELLOs and returns the peer's self-description.
fn greet(session: &mut dyn Session, me: &PublicKey) -> Result<PeerInfo> {
    let hello = PeerInfo { pk: *me, name: "owner".into(), email: String::new() };
    session.send(&Message::Hello(hello))?;
    match session.recv()? {
        Message::Hello(info) => Ok(info),
        Message::Refuse { reason } => Err(RecoveryError::Refused(reason)),
        other => Err(RecoveryError::Transport(format!("expected HELLO, got {}", other.name()))),
    }
}

fn offer(transport: &mut dyn Transport, owner: &KeyPair, peer: &PublicKey, env: &ShardEnvelope) -> Result<()> {
    let mut session = transport.connect(owner, peer)?;
    let info = greet(session.as_mut(), &owner.public())?;
    if info.pk != *peer {
        return Err(RecoveryError::Transport("peer identity changed mid-session".into()));
    }
    session.send(&Message::ShardOffer(env.clone()))?;
    match session.recv()? {
        Message::ShardAck { index } if index == env.index() => Ok(()),
        Message::Refuse { reason } => Err(RecoveryError::Refused(reason)),
        other => Err(RecoveryError::Transport(format!("expected SHARD_ACK, got {}", other.name()))),
    }
}

/// Splits `secret` into `params.n()` shards and places each with a distinct
/// peer the owner confirmed. Candidates are tried in random order without
/// replacement; rejected, unreachable or silent peers are skipped. The signed
/// peer list is uploaded only once all `n` peers have acknowledged.
#[allow(clippy::too_many_arguments)]
pub fn distribute<R: RngCore + CryptoRng>(
    secret: &MasterKey,
    params: ThresholdParams,
    transport: &mut dyn Transport,
    confirm: &mut dyn FnMut(&PeerInfo) -> bool,
    owner: &KeyPair,
    store: &Store,
    rng: &mut R,
) -> Result<(PeerList, BlobId)> {
    let shards = split(secret.as_bytes(), params, rng)?;
    let commitment = SecretCommitment::new(secret.as_bytes(), rng);

    let mut candidates: Vec<PeerInfo> = transport.discover()?;
    candidates.retain(|c| c.pk != owner.public());
    candidates.sort_by_key(|c| c.pk);
    candidates.dedup_by_key(|c| c.pk);
    candidates.shuffle(rng);

    let mut records = Vec::with_capacity(params.n());
    let mut next = 1u8;
    for candidate in candidates {
        if records.len() == params.n() {
            break;
        }
        if !confirm(&candidate) {
            continue;
        }
        let env = ShardEnvelope::seal(shards[&next].clone(), owner, rng);
        if offer(transport, owner, &candidate.pk, &env).is_ok() {
            records.push((candidate.pk, next));
            next += 1;
        }
    }
    if records.len() < params.n() {
        return Err(RecoveryError::DistributionFailed { placed: records.len(), needed: params.n() });
    }
    let list = PeerList::signed(owner, params, commitment, Vec::new(), records, rng)?;
    let id = store.put(BlobKind::PeerList, &list.to_bytes())?;
    Ok((list, id))
}

fn request_shard<R: RngCore + CryptoRng>(
    transport: &mut dyn Transport,
    owner: &KeyPair,
    peer: &PublicKey,
    rng: &mut R,
) -> Result<ShardEnvelope> {
    let mut session = transport.connect(owner, peer)?;
    greet(session.as_mut(), &owner.public())?;
    let mut nonce = [0u8; 16];
    rng.fill_bytes(&mut nonce);
    let sig = sign(owner, &shard_request_message(&owner.public(), peer, &nonce), rng);
    session.send(&Message::ShardRequest { owner_pk: owner.public(), nonce, sig })?;
    match session.recv()? {
        Message::ShardResponse(env) => Ok(env),
        Message::Refuse { reason } => Err(RecoveryError::Refused(reason)),
        other => Err(RecoveryError::Transport(format!("expected SHARD_RESPONSE, got {}", other.name()))),
    }
}

/// Accepts an envelope if its signer is one this list trusts and it carries
/// the expected index and length.
fn admissible(list: &PeerList, env: &ShardEnvelope, expected_index: Option<u8>) -> bool {
    env.verify()
        && list.accepts_signer(&env.owner_pk)
        && expected_index.is_none_or(|i| env.index() == i)
        && env.shard.value().len() == 32
}

fn try_join(list: &PeerList, shards: &BTreeMap<u8, Shard>) -> Option<MasterKey> {
    if shards.len() < list.params.k() {
        return None;
    }
    let candidate = join(shards.values()).ok()?;
    list.commitment.matches(&candidate).then(|| MasterKey::from_slice(&candidate).ok()).flatten()
}

/// Visits peers in list order, keeps shards whose owner signature checks
/// out, and returns as soon as the collected shards reproduce the committed
/// secret.
pub fn recover<R: RngCore + CryptoRng>(
    list: &PeerList,
    transport: &mut dyn Transport,
    owner: &KeyPair,
    rng: &mut R,
) -> Result<MasterKey> {
    if list.owner_pk != owner.public() || !list.verify() {
        return Err(RecoveryError::InvalidPeerList);
    }
    let mut collected = BTreeMap::new();
    for (peer, index) in &list.records {
        let Ok(env) = request_shard(transport, owner, peer, rng) else { continue };
        if !admissible(list, &env, Some(*index)) {
            continue;
        }
        collected.insert(env.index(), env.shard.clone());
        if let Some(master) = try_join(list, &collected) {
            return Ok(master);
        }
    }
    Err(RecoveryError::RecoveryFailed { valid_shards: collected.len(), needed: list.params.k() })
}

/// Outcome of pushing a key rotation to the peers.
#[derive(Debug)]
pub struct RebindOutcome {
    pub peer_list: PeerList,
    pub rebound: Vec<PublicKey>,
    pub unreachable: Vec<PublicKey>,
}

pub fn rebind_endorsement<R: RngCore + CryptoRng>(old: &KeyPair, new_pk: &PublicKey, rng: &mut R) -> Signature {
    sign(old, &rebind_message(&old.public(), new_pk), rng)
}

/// Sends REBIND to every peer in `list` over sessions authenticated as
/// `session_key`. Returns which peers acknowledged and which did not.
pub fn push_rebind(
    list: &PeerList,
    session_key: &KeyPair,
    old_pk: &PublicKey,
    new_pk: &PublicKey,
    endorsement: &Signature,
    transport: &mut dyn Transport,
) -> (Vec<PublicKey>, Vec<PublicKey>) {
    let mut rebound = Vec::new();
    let mut failed = Vec::new();
    for (peer, _) in &list.records {
        let result = (|| -> Result<()> {
            let mut session = transport.connect(session_key, peer)?;
            greet(session.as_mut(), &session_key.public())?;
            session.send(&Message::Rebind { old_pk: *old_pk, new_pk: *new_pk, endorsement: *endorsement })?;
            match session.recv()? {
                Message::RebindAck => Ok(()),
                Message::Refuse { reason } => Err(RecoveryError::Refused(reason)),
                other => Err(RecoveryError::Transport(format!("expected REBIND_ACK, got {}", other.name()))),
            }
        })();
        match result {
            Ok(()) => rebound.push(*peer),
            Err(_) => failed.push(*peer),
        }
    }
    (rebound, failed)
}

/// Moves every reachable peer's shard record from `old` to `new` and signs a
/// fresh peer list with `new`. Fails without a new list if no peer accepted.
pub fn update_owner_pk<R: RngCore + CryptoRng>(
    list: &PeerList,
    old: &KeyPair,
    new: &KeyPair,
    transport: &mut dyn Transport,
    rng: &mut R,
) -> Result<RebindOutcome> {
    if list.owner_pk != old.public() || !list.verify() {
        return Err(RecoveryError::InvalidPeerList);
    }
    let endorsement = rebind_endorsement(old, &new.public(), rng);
    let (rebound, unreachable) = push_rebind(list, old, &old.public(), &new.public(), &endorsement, transport);
    if rebound.is_empty() {
        return Err(RecoveryError::RebindFailed);
    }
    let mut history = list.key_history.clone();
    history.push(old.public());
    let peer_list = PeerList::signed(new, list.params, list.commitment.clone(), history, list.records.clone(), rng)?;
    Ok(RebindOutcome { peer_list, rebound, unreachable })
}

/// Rebuilds the master secret from out-of-band escrow exports. Exports with
/// bad signatures, foreign owners or repeated indices are dropped.
pub fn escrow_join<S: AsRef<str>>(blobs: &[S], list: &PeerList) -> Result<MasterKey> {
    if !list.verify() {
        return Err(RecoveryError::InvalidPeerList);
    }
    let mut shards = BTreeMap::new();
    for blob in blobs {
        let Ok(env) = decode_escrow_blob(blob.as_ref()) else { continue };
        if admissible(list, &env, None) {
            shards.entry(env.index()).or_insert_with(|| env.shard.clone());
        }
    }
    try_join(list, &shards).ok_or(RecoveryError::EscrowJoinFailed { valid_shards: shards.len(), needed: list.params.k() })
}
