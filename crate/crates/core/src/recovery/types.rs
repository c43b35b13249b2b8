use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use subtle::ConstantTimeEq;

use super::{RecoveryError, Result};
use crate::crypto::{sign, verify, KeyPair, PublicKey, Signature, SIGNATURE_LEN};
use crate::sharing::{Shard, ThresholdParams};

const SHARD_SIG_CONTEXT: &[u8] = b"e2ee-vault/v1/shard-envelope";
const LIST_SIG_CONTEXT: &[u8] = b"e2ee-vault/v1/peer-list";
const PEER_LIST_MAGIC: &[u8; 4] = b"PLS1";

fn malformed(what: &str) -> RecoveryError {
    RecoveryError::Malformed(what.to_owned())
}

/// Byte cursor for the hand-rolled wire formats in this module.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Reader { buf }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(malformed("truncated message"));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    pub(crate) fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    pub(crate) fn bytes16(&mut self) -> Result<&'a [u8]> {
        let n = self.u16()? as usize;
        self.take(n)
    }

    pub(crate) fn string16(&mut self) -> Result<String> {
        String::from_utf8(self.bytes16()?.to_vec()).map_err(|_| malformed("invalid utf-8"))
    }

    pub(crate) fn pk(&mut self) -> Result<PublicKey> {
        Ok(PublicKey(self.array()?))
    }

    pub(crate) fn sig(&mut self) -> Result<Signature> {
        Ok(Signature(self.array()?))
    }

    pub(crate) fn finish(self) -> Result<()> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(malformed("trailing bytes"))
        }
    }
}

pub(crate) fn put16(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
    out.extend_from_slice(bytes);
}

/// What a peer shows the owner for physical confirmation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerInfo {
    pub pk: PublicKey,
    pub name: String,
    pub email: String,
}

impl PeerInfo {
    pub fn new(pk: PublicKey, name: impl Into<String>, email: impl Into<String>) -> Result<Self> {
        let info = PeerInfo { pk, name: name.into(), email: email.into() };
        if info.name.trim().is_empty() {
            return Err(malformed("peer display name is empty"));
        }
        Ok(info)
    }

    pub fn display(&self) -> String {
        if self.email.is_empty() {
            self.name.clone()
        } else {
            format!("{} <{}>", self.name, self.email)
        }
    }
}

/// One shard as handed to a peer, signed by the owner.
#[derive(Clone, PartialEq, Eq)]
pub struct ShardEnvelope {
    pub shard: Shard,
    pub owner_pk: PublicKey,
    pub owner_sig: Signature,
}

impl std::fmt::Debug for ShardEnvelope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ShardEnvelope")
            .field("index", &self.shard.index())
            .field("owner_pk", &self.owner_pk)
            .finish_non_exhaustive()
    }
}

impl ShardEnvelope {
    fn signed_message(shard: &Shard, owner_pk: &PublicKey) -> Vec<u8> {
        let mut msg = SHARD_SIG_CONTEXT.to_vec();
        msg.push(shard.index());
        msg.extend_from_slice(shard.value());
        msg.extend_from_slice(owner_pk.as_bytes());
        msg
    }

    pub fn seal<R: RngCore + CryptoRng>(shard: Shard, owner: &KeyPair, rng: &mut R) -> Self {
        let owner_pk = owner.public();
        let owner_sig = sign(owner, &Self::signed_message(&shard, &owner_pk), rng);
        ShardEnvelope { shard, owner_pk, owner_sig }
    }

    pub fn index(&self) -> u8 {
        self.shard.index()
    }

    pub fn verify(&self) -> bool {
        verify(&self.owner_pk, &Self::signed_message(&self.shard, &self.owner_pk), &self.owner_sig)
    }

    /// `index(1) || len(u16 LE) || shard || owner_pk(32) || sig(64)`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![self.shard.index()];
        put16(&mut out, self.shard.value());
        out.extend_from_slice(self.owner_pk.as_bytes());
        out.extend_from_slice(&self.owner_sig.0);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let env = Self::read(&mut r)?;
        r.finish()?;
        Ok(env)
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self> {
        let index = r.u8()?;
        let value = r.bytes16()?.to_vec();
        let shard = Shard::new(index, value).map_err(|e| malformed(&e.to_string()))?;
        Ok(ShardEnvelope { shard, owner_pk: r.pk()?, owner_sig: r.sig()? })
    }
}

/// Salted hash that lets a reconstructed secret be checked without storing it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SecretCommitment {
    pub salt: [u8; 16],
    pub digest: [u8; 32],
}

impl SecretCommitment {
    pub fn new<R: RngCore + CryptoRng>(secret: &[u8], rng: &mut R) -> Self {
        let mut salt = [0u8; 16];
        rng.fill_bytes(&mut salt);
        SecretCommitment { salt, digest: Self::hash(&salt, secret) }
    }

    fn hash(salt: &[u8; 16], secret: &[u8]) -> [u8; 32] {
        Sha256::new().chain_update(salt).chain_update(secret).finalize().into()
    }

    pub fn matches(&self, candidate: &[u8]) -> bool {
        Self::hash(&self.salt, candidate).ct_eq(&self.digest).into()
    }

    pub fn to_bytes(&self) -> [u8; 48] {
        let mut out = [0u8; 48];
        out[..16].copy_from_slice(&self.salt);
        out[16..].copy_from_slice(&self.digest);
        out
    }
}

/// Signed roster of who holds which shard, plus the commitment to check a
/// reconstruction against. `key_history` lists earlier owner keys whose shard
/// signatures remain acceptable after rotation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeerList {
    pub owner_pk: PublicKey,
    pub params: ThresholdParams,
    pub commitment: SecretCommitment,
    pub key_history: Vec<PublicKey>,
    pub records: Vec<(PublicKey, u8)>,
    pub list_sig: Signature,
}

impl PeerList {
    pub fn signed<R: RngCore + CryptoRng>(
        owner: &KeyPair,
        params: ThresholdParams,
        commitment: SecretCommitment,
        key_history: Vec<PublicKey>,
        records: Vec<(PublicKey, u8)>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut list = PeerList {
            owner_pk: owner.public(),
            params,
            commitment,
            key_history,
            records,
            list_sig: Signature([0u8; SIGNATURE_LEN]),
        };
        list.check_shape()?;
        list.list_sig = sign(owner, &list.body_bytes(), rng);
        Ok(list)
    }

    fn check_shape(&self) -> Result<()> {
        if self.records.len() != self.params.n() {
            return Err(malformed("peer list record count differs from n"));
        }
        let mut seen = std::collections::HashSet::new();
        if !self.records.iter().all(|(_, i)| *i != 0 && seen.insert(*i)) {
            return Err(malformed("peer list shard indices not distinct"));
        }
        Ok(())
    }

    pub fn verify(&self) -> bool {
        self.check_shape().is_ok() && verify(&self.owner_pk, &self.body_bytes(), &self.list_sig)
    }

    /// Owner keys whose shard signatures this list accepts.
    pub fn accepts_signer(&self, pk: &PublicKey) -> bool {
        *pk == self.owner_pk || self.key_history.contains(pk)
    }

    fn body_bytes(&self) -> Vec<u8> {
        let mut out = LIST_SIG_CONTEXT.to_vec();
        out.extend_from_slice(&self.unsigned_bytes());
        out
    }

    fn unsigned_bytes(&self) -> Vec<u8> {
        let mut out = PEER_LIST_MAGIC.to_vec();
        out.extend_from_slice(self.owner_pk.as_bytes());
        out.push(self.params.n() as u8);
        out.push(self.params.k() as u8);
        out.extend_from_slice(&self.commitment.to_bytes());
        out.push(self.key_history.len() as u8);
        for pk in &self.key_history {
            out.extend_from_slice(pk.as_bytes());
        }
        out.push(self.records.len() as u8);
        for (pk, index) in &self.records {
            out.extend_from_slice(pk.as_bytes());
            out.push(*index);
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.unsigned_bytes();
        out.extend_from_slice(&self.list_sig.0);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != PEER_LIST_MAGIC {
            return Err(malformed("bad peer list magic"));
        }
        let owner_pk = r.pk()?;
        let n = r.u8()? as usize;
        let k = r.u8()? as usize;
        let params = ThresholdParams::new(n, k).map_err(|e| malformed(&e.to_string()))?;
        let commitment = SecretCommitment { salt: r.array()?, digest: r.array()? };
        let key_history = (0..r.u8()?).map(|_| r.pk()).collect::<Result<_>>()?;
        let records = (0..r.u8()?).map(|_| Ok((r.pk()?, r.u8()?))).collect::<Result<_>>()?;
        let list_sig = r.sig()?;
        r.finish()?;
        let list = PeerList { owner_pk, params, commitment, key_history, records, list_sig };
        list.check_shape()?;
        Ok(list)
    }
}
