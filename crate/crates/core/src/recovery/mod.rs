//! Master-secret lifecycle: password backup, threshold social recovery over a
//! peer transport, owner-key rotation and escrow export/join.

mod peer;
mod protocol;
pub mod sim;
pub mod tcp;
mod transport;
mod types;
pub mod wire;

pub use peer::{decode_escrow_blob, endorsement_valid, PeerRecord, PeerState, Responder, ESCROW_MAGIC};
pub use protocol::{
    distribute, escrow_join, password_backup, password_restore, push_rebind, rebind_endorsement, recover,
    update_owner_pk, RebindOutcome,
};
pub use transport::{Session, Transport};
pub use types::{PeerInfo, PeerList, SecretCommitment, ShardEnvelope};

use thiserror::Error;

use crate::crypto::CryptoError;
use crate::sharing::SharingError;
use crate::store::StoreError;

#[derive(Debug, Error)]
pub enum RecoveryError {
    #[error("password backup not found on server")]
    MissingBlob,
    #[error("wrong password")]
    WrongPassword,
    #[error("distribution failed: placed {placed} of {needed} shards")]
    DistributionFailed { placed: usize, needed: usize },
    #[error("recovery failed: {valid_shards} valid shards, {needed} needed")]
    RecoveryFailed { valid_shards: usize, needed: usize },
    #[error("escrow join failed: {valid_shards} valid shards, {needed} needed")]
    EscrowJoinFailed { valid_shards: usize, needed: usize },
    #[error("no peer accepted the key rotation")]
    RebindFailed,
    #[error("peer list missing, foreign or badly signed")]
    InvalidPeerList,
    #[error("no shard held for that owner")]
    UnknownOwner,
    #[error("peer refused: {0}")]
    Refused(String),
    #[error("timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed: {0}")]
    Malformed(String),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Sharing(#[from] SharingError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub type Result<T> = std::result::Result<T, RecoveryError>;
