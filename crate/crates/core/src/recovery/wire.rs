//! Protocol messages and the sealed channel that carries them.
//!
//! A connection opens with one cleartext frame from the initiator:
//! `0x00` asks for the peer's HELLO in the clear (discovery), `0x01 || pk`
//! starts a session. Every later frame is a sealed box under
//! `derive_shared_key(initiator, responder, "transport")` whose associated
//! data is the direction byte and a per-direction sequence number, so
//! reordered, replayed or reflected frames fail to open.

use rand::rngs::OsRng;

use super::types::{put16, Reader, ShardEnvelope};
use super::{PeerInfo, RecoveryError, Result};
use crate::crypto::{aead_open, aead_seal, derive_shared_key, KeyPair, PublicKey, SealedBox, Signature, SymmetricKey};

pub const TRANSPORT_PURPOSE: &str = "transport";
pub const PROBE: u8 = 0x00;
pub const OPEN_SESSION: u8 = 0x01;
pub const MAX_FRAME: usize = 1 << 20;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    Hello(PeerInfo),
    ShardOffer(ShardEnvelope),
    ShardAck { index: u8 },
    ShardRequest { owner_pk: PublicKey, nonce: [u8; 16], sig: Signature },
    ShardResponse(ShardEnvelope),
    Rebind { old_pk: PublicKey, new_pk: PublicKey, endorsement: Signature },
    RebindAck,
    Refuse { reason: String },
}

const HELLO: u8 = 1;
const SHARD_OFFER: u8 = 2;
const SHARD_ACK: u8 = 3;
const SHARD_REQUEST: u8 = 4;
const SHARD_RESPONSE: u8 = 5;
const REBIND: u8 = 6;
const REBIND_ACK: u8 = 7;
const REFUSE: u8 = 8;

impl Message {
    pub fn name(&self) -> &'static str {
        match self {
            Message::Hello(_) => "HELLO",
            Message::ShardOffer(_) => "SHARD_OFFER",
            Message::ShardAck { .. } => "SHARD_ACK",
            Message::ShardRequest { .. } => "SHARD_REQUEST",
            Message::ShardResponse(_) => "SHARD_RESPONSE",
            Message::Rebind { .. } => "REBIND",
            Message::RebindAck => "REBIND_ACK",
            Message::Refuse { .. } => "REFUSE",
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Message::Hello(info) => {
                out.push(HELLO);
                out.extend_from_slice(info.pk.as_bytes());
                put16(&mut out, info.name.as_bytes());
                put16(&mut out, info.email.as_bytes());
            }
            Message::ShardOffer(env) => {
                out.push(SHARD_OFFER);
                out.extend_from_slice(&env.to_bytes());
            }
            Message::ShardAck { index } => out.extend_from_slice(&[SHARD_ACK, *index]),
            Message::ShardRequest { owner_pk, nonce, sig } => {
                out.push(SHARD_REQUEST);
                out.extend_from_slice(owner_pk.as_bytes());
                out.extend_from_slice(nonce);
                out.extend_from_slice(&sig.0);
            }
            Message::ShardResponse(env) => {
                out.push(SHARD_RESPONSE);
                out.extend_from_slice(&env.to_bytes());
            }
            Message::Rebind { old_pk, new_pk, endorsement } => {
                out.push(REBIND);
                out.extend_from_slice(old_pk.as_bytes());
                out.extend_from_slice(new_pk.as_bytes());
                out.extend_from_slice(&endorsement.0);
            }
            Message::RebindAck => out.push(REBIND_ACK),
            Message::Refuse { reason } => {
                out.push(REFUSE);
                put16(&mut out, reason.as_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let msg = match r.u8()? {
            HELLO => {
                let pk = r.pk()?;
                let name = r.string16()?;
                let email = r.string16()?;
                Message::Hello(PeerInfo::new(pk, name, email)?)
            }
            SHARD_OFFER => Message::ShardOffer(ShardEnvelope::read(&mut r)?),
            SHARD_ACK => Message::ShardAck { index: r.u8()? },
            SHARD_REQUEST => Message::ShardRequest { owner_pk: r.pk()?, nonce: r.array()?, sig: r.sig()? },
            SHARD_RESPONSE => Message::ShardResponse(ShardEnvelope::read(&mut r)?),
            REBIND => Message::Rebind { old_pk: r.pk()?, new_pk: r.pk()?, endorsement: r.sig()? },
            REBIND_ACK => Message::RebindAck,
            REFUSE => Message::Refuse { reason: r.string16()? },
            other => return Err(RecoveryError::Malformed(format!("unknown message tag {other}"))),
        };
        r.finish()?;
        Ok(msg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Initiator,
    Responder,
}

/// Seals and opens frames for one side of a session.
pub struct SecureChannel {
    key: SymmetricKey,
    role: Role,
    send_seq: u64,
    recv_seq: u64,
    remote: PublicKey,
}

impl SecureChannel {
    pub fn new(me: &KeyPair, remote: PublicKey, role: Role) -> Result<Self> {
        let key = derive_shared_key(me, &remote, TRANSPORT_PURPOSE)?;
        Ok(SecureChannel { key, role, send_seq: 0, recv_seq: 0, remote })
    }

    pub fn remote(&self) -> PublicKey {
        self.remote
    }

    fn aad(direction: Role, seq: u64) -> [u8; 9] {
        let mut aad = [0u8; 9];
        aad[0] = match direction {
            Role::Initiator => 0x49,
            Role::Responder => 0x52,
        };
        aad[1..].copy_from_slice(&seq.to_le_bytes());
        aad
    }

    pub fn seal(&mut self, msg: &Message) -> Vec<u8> {
        let aad = Self::aad(self.role, self.send_seq);
        self.send_seq += 1;
        aead_seal(&self.key, &msg.to_bytes(), &aad, &mut OsRng).to_bytes()
    }

    pub fn open(&mut self, frame: &[u8]) -> Result<Message> {
        let incoming = match self.role {
            Role::Initiator => Role::Responder,
            Role::Responder => Role::Initiator,
        };
        let aad = Self::aad(incoming, self.recv_seq);
        let sealed = SealedBox::from_bytes(frame)?;
        let plain = aead_open(&self.key, &sealed, &aad)
            .map_err(|_| RecoveryError::Transport("frame failed authentication".into()))?;
        self.recv_seq += 1;
        Message::from_bytes(&plain)
    }
}
