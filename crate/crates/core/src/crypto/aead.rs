use chacha20poly1305::aead::{AeadInPlace, KeyInit};
use chacha20poly1305::{Tag, XChaCha20Poly1305, XNonce};
use rand::{CryptoRng, RngCore};

use super::{CryptoError, Result, SymmetricKey};

pub const NONCE_LEN: usize = 24;
pub const TAG_LEN: usize = 16;
/// Bytes a sealed box adds on top of its plaintext.
pub const SEAL_OVERHEAD: usize = NONCE_LEN + TAG_LEN;

/// XChaCha20-Poly1305 ciphertext. Wire layout: `nonce || body || tag`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SealedBox {
    pub nonce: [u8; NONCE_LEN],
    pub body: Vec<u8>,
    pub tag: [u8; TAG_LEN],
}

impl SealedBox {
    pub fn len(&self) -> usize {
        self.body.len() + SEAL_OVERHEAD
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len());
        self.write_to(&mut out);
        out
    }

    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.body);
        out.extend_from_slice(&self.tag);
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < SEAL_OVERHEAD {
            return Err(CryptoError::Malformed {
                what: "sealed box",
                reason: format!("{} bytes is shorter than the {SEAL_OVERHEAD}-byte overhead", bytes.len()),
            });
        }
        let (nonce, rest) = bytes.split_at(NONCE_LEN);
        let (body, tag) = rest.split_at(rest.len() - TAG_LEN);
        Ok(SealedBox {
            nonce: nonce.try_into().unwrap(),
            body: body.to_vec(),
            tag: tag.try_into().unwrap(),
        })
    }
}

pub fn aead_seal<R: RngCore + CryptoRng>(
    key: &SymmetricKey,
    plaintext: &[u8],
    aad: &[u8],
    rng: &mut R,
) -> SealedBox {
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let cipher = XChaCha20Poly1305::new(key.as_bytes().into());
    let mut body = plaintext.to_vec();
    let tag = cipher
        .encrypt_in_place_detached(XNonce::from_slice(&nonce), aad, &mut body)
        .expect("plaintext within XChaCha20 length limit");
    SealedBox { nonce, body, tag: tag.into() }
}

pub fn aead_open(key: &SymmetricKey, sealed: &SealedBox, aad: &[u8]) -> Result<Vec<u8>> {
    let cipher = XChaCha20Poly1305::new(key.as_bytes().into());
    let mut body = sealed.body.clone();
    cipher
        .decrypt_in_place_detached(
            XNonce::from_slice(&sealed.nonce),
            aad,
            &mut body,
            Tag::from_slice(&sealed.tag),
        )
        .map_err(|_| CryptoError::AuthenticationFailed)?;
    Ok(body)
}
