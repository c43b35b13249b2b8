//! Primitive layer: identity keys, pairwise key agreement, authenticated
//! encryption, MACs, password-based key derivation and owner signatures.
//!
//! Algorithm choices:
//!
//! | role              | algorithm                      | sizes                 |
//! |-------------------|--------------------------------|-----------------------|
//! | identity / ECDH   | X25519                         | 32-byte keys          |
//! | pairwise KDF      | HKDF-SHA256                    | 32-byte output        |
//! | AEAD              | XChaCha20-Poly1305             | 24-byte nonce, 16 tag |
//! | MAC               | HMAC-SHA256                    | 32-byte tag           |
//! | password KDF      | PBKDF2-HMAC-SHA256             | 16-byte salt          |
//! | owner signatures  | XEdDSA over the X25519 key     | 64-byte signature     |

mod aead;
mod kdf;
mod keys;
mod mac;
mod sign;

pub use aead::{aead_open, aead_seal, SealedBox, NONCE_LEN, SEAL_OVERHEAD, TAG_LEN};
pub use kdf::{
    kdf_password, pbkdf2_sha256, KdfParams, PasswordEnvelope, DEFAULT_ITERATIONS,
    MIN_ITERATIONS, PASSWORD_ENVELOPE_LEN, SALT_LEN,
};
pub use keys::{derive_shared_key, generate_keypair, KeyPair, MasterKey, PublicKey, SymmetricKey};
pub use mac::{mac_sign, mac_verify, MAC_LEN};
pub use sign::{sign, verify, Signature, SIGNATURE_LEN};

use thiserror::Error;

/// Domain-separation prefix for every derived key in the system.
pub const CONTEXT_PREFIX: &[u8] = b"e2ee-vault/v1/";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("peer public key yields a low-order shared secret")]
    InvalidPeerKey,
    #[error("authentication failed")]
    AuthenticationFailed,
    #[error("password must not be empty")]
    EmptyPassword,
    #[error("salt must be {expected} bytes, got {got}")]
    BadSaltLength { expected: usize, got: usize },
    #[error("kdf iteration count {got} is below the minimum {min}")]
    WeakKdfParams { got: u32, min: u32 },
    #[error("malformed {what}: {reason}")]
    Malformed { what: &'static str, reason: String },
}

pub type Result<T> = std::result::Result<T, CryptoError>;
