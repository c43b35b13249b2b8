use std::fmt;

use curve25519_dalek::montgomery::MontgomeryPoint;
use hkdf::Hkdf;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use subtle::ConstantTimeEq;
use zeroize::{Zeroize, ZeroizeOnDrop};

use super::{CryptoError, Result, CONTEXT_PREFIX};

pub const KEY_LEN: usize = 32;

/// A Curve25519 public point (Montgomery u-coordinate).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PublicKey(#[serde(with = "hex_array")] pub [u8; 32]);

impl PublicKey {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s.trim()).map_err(|e| CryptoError::Malformed {
            what: "public key",
            reason: e.to_string(),
        })?;
        let arr: [u8; 32] = bytes.try_into().map_err(|_| CryptoError::Malformed {
            what: "public key",
            reason: "expected 32 bytes".into(),
        })?;
        Ok(PublicKey(arr))
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Long-term identity: a clamped X25519 scalar and its public point.
#[derive(Clone, Zeroize, ZeroizeOnDrop)]
pub struct KeyPair {
    secret: [u8; 32],
    #[zeroize(skip)]
    public: PublicKey,
}

fn clamp(mut scalar: [u8; 32]) -> [u8; 32] {
    scalar[0] &= 248;
    scalar[31] &= 127;
    scalar[31] |= 64;
    scalar
}

impl KeyPair {
    /// Builds a keypair from raw scalar bytes, clamping them first.
    pub fn from_secret_bytes(bytes: [u8; 32]) -> Self {
        let secret = clamp(bytes);
        let public = PublicKey(MontgomeryPoint::mul_base_clamped(secret).to_bytes());
        KeyPair { secret, public }
    }

    pub fn public(&self) -> PublicKey {
        self.public
    }

    /// The clamped secret scalar.
    pub fn secret_bytes(&self) -> &[u8; 32] {
        &self.secret
    }

    pub(crate) fn diffie_hellman(&self, their_public: &PublicKey) -> Result<[u8; 32]> {
        let shared = MontgomeryPoint(their_public.0).mul_clamped(self.secret).to_bytes();
        if bool::from(shared.ct_eq(&[0u8; 32])) {
            return Err(CryptoError::InvalidPeerKey);
        }
        Ok(shared)
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair").field("public", &self.public).finish_non_exhaustive()
    }
}

pub fn generate_keypair<R: RngCore + CryptoRng>(rng: &mut R) -> KeyPair {
    let mut bytes = [0u8; 32];
    rng.fill_bytes(&mut bytes);
    let kp = KeyPair::from_secret_bytes(bytes);
    bytes.zeroize();
    kp
}

macro_rules! secret_key_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Zeroize, ZeroizeOnDrop)]
        pub struct $name([u8; KEY_LEN]);

        impl $name {
            pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
                $name(bytes)
            }

            pub fn from_slice(bytes: &[u8]) -> Result<Self> {
                let arr: [u8; KEY_LEN] = bytes.try_into().map_err(|_| CryptoError::Malformed {
                    what: stringify!($name),
                    reason: format!("expected {} bytes, got {}", KEY_LEN, bytes.len()),
                })?;
                Ok($name(arr))
            }

            pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
                let mut bytes = [0u8; KEY_LEN];
                rng.fill_bytes(&mut bytes);
                $name(bytes)
            }

            pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
                &self.0
            }
        }

        impl PartialEq for $name {
            fn eq(&self, other: &Self) -> bool {
                self.0.ct_eq(&other.0).into()
            }
        }

        impl Eq for $name {}

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(concat!(stringify!($name), "(..)"))
            }
        }
    };
}

secret_key_type!(
    /// 32-byte symmetric key: pairwise keys, FEK/FSK, derived sub-keys.
    SymmetricKey
);

secret_key_type!(
    /// The user's master secret. Everything else the user owns hangs off it.
    MasterKey
);

impl MasterKey {
    /// Derives a purpose-bound sub-key; `extra` is appended to the label.
    pub fn derive(&self, label: &str, extra: &[u8]) -> SymmetricKey {
        let mut info = Vec::with_capacity(CONTEXT_PREFIX.len() + label.len() + extra.len());
        info.extend_from_slice(CONTEXT_PREFIX);
        info.extend_from_slice(label.as_bytes());
        info.extend_from_slice(extra);
        hkdf_expand(&self.0, &info)
    }
}

fn hkdf_expand(ikm: &[u8], info: &[u8]) -> SymmetricKey {
    let hk = Hkdf::<Sha256>::new(None, ikm);
    let mut okm = [0u8; KEY_LEN];
    hk.expand(info, &mut okm).expect("32 bytes is a valid HKDF-SHA256 length");
    SymmetricKey(okm)
}

/// Pairwise key between `me` and `their_public`, bound to `purpose`.
///
/// The HKDF info is the fixed prefix, the purpose label and both public keys
/// in ascending byte order, so either side derives the same key.
pub fn derive_shared_key(me: &KeyPair, their_public: &PublicKey, purpose: &str) -> Result<SymmetricKey> {
    let mut shared = me.diffie_hellman(their_public)?;
    let (lo, hi) = if me.public.0 <= their_public.0 {
        (me.public.0, their_public.0)
    } else {
        (their_public.0, me.public.0)
    };
    let mut info = Vec::with_capacity(CONTEXT_PREFIX.len() + purpose.len() + 64);
    info.extend_from_slice(CONTEXT_PREFIX);
    info.extend_from_slice(purpose.as_bytes());
    info.extend_from_slice(&lo);
    info.extend_from_slice(&hi);
    let key = hkdf_expand(&shared, &info);
    shared.zeroize();
    Ok(key)
}

mod hex_array {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        let v = hex::decode(s).map_err(serde::de::Error::custom)?;
        v.try_into().map_err(|_| serde::de::Error::custom("expected 32 bytes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::OsRng;

    const ALICE_SK: &str = "77076d0a7318a57d3c16c17251b26645df4c2f87ebc0992ab177fba51db92c2a";
    const ALICE_PK: &str = "8520f0098930a754748b7ddcb43ef75a0dbf3a0d26381af4eba4a98eaa9b4e6a";
    const BOB_SK: &str = "5dab087e624a8a4b79e17f8b83800ee66f3bb1292618b6fd1c2f8b27ff88e0eb";
    const BOB_PK: &str = "de9edb7d7b7dc1b4d35b61c2ece435373f8343c85b78674dadfc7e146f882b4f";
    const SHARED_K: &str = "4a5d9d5ba4ce2de1728e3bf480350f25e07e21c947d19e3376f09b3c1e161742";

    fn kp(hex_sk: &str) -> KeyPair {
        KeyPair::from_secret_bytes(hex::decode(hex_sk).unwrap().try_into().unwrap())
    }

    #[test]
    fn rfc7748_public_keys() {
        assert_eq!(kp(ALICE_SK).public().to_hex(), ALICE_PK);
        assert_eq!(kp(BOB_SK).public().to_hex(), BOB_PK);
    }

    #[test]
    fn rfc7748_shared_secret() {
        let a = kp(ALICE_SK);
        let b = kp(BOB_SK);
        assert_eq!(hex::encode(a.diffie_hellman(&b.public()).unwrap()), SHARED_K);
        assert_eq!(hex::encode(b.diffie_hellman(&a.public()).unwrap()), SHARED_K);
    }

    #[test]
    fn rfc7748_pair_through_kdf() {
        // HKDF-SHA256 over the published K, computed with an external HKDF.
        let key = derive_shared_key(&kp(ALICE_SK), &kp(BOB_SK).public(), "share").unwrap();
        assert_eq!(
            hex::encode(key.as_bytes()),
            "4f54a4adb8a62aa0e1b65ae7a7c85a6a9397e8fb7e8f2e3dce12c74d3ca34fa9"
        );
    }

    #[test]
    fn secret_is_clamped_and_deterministic() {
        let a = kp(ALICE_SK);
        let s = a.secret_bytes();
        assert_eq!(s[0] & 7, 0);
        assert_eq!(s[31] & 0x80, 0);
        assert_eq!(s[31] & 0x40, 0x40);
        assert_eq!(KeyPair::from_secret_bytes(*s).public(), a.public());
    }

    #[test]
    fn independent_keypairs_differ() {
        let a = generate_keypair(&mut OsRng);
        let b = generate_keypair(&mut OsRng);
        assert_ne!(a.secret_bytes(), b.secret_bytes());
    }

    #[test]
    fn shared_key_symmetric_and_separated() {
        let a = generate_keypair(&mut OsRng);
        let b = generate_keypair(&mut OsRng);
        let ab = derive_shared_key(&a, &b.public(), "share").unwrap();
        let ba = derive_shared_key(&b, &a.public(), "share").unwrap();
        assert_eq!(ab, ba);
        let t = derive_shared_key(&a, &b.public(), "transport").unwrap();
        assert_ne!(ab, t);
    }

    #[test]
    fn low_order_point_rejected() {
        let a = generate_keypair(&mut OsRng);
        let zero = PublicKey([0u8; 32]);
        assert_eq!(derive_shared_key(&a, &zero, "share").unwrap_err(), CryptoError::InvalidPeerKey);
        let mut one = [0u8; 32];
        one[0] = 1;
        assert_eq!(
            derive_shared_key(&a, &PublicKey(one), "share").unwrap_err(),
            CryptoError::InvalidPeerKey
        );
    }
}
