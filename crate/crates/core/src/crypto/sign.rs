//! XEdDSA: Ed25519-compatible signatures made with an X25519 identity key,
//! verified against the Montgomery public point.

use curve25519_dalek::constants::ED25519_BASEPOINT_TABLE;
use curve25519_dalek::edwards::{CompressedEdwardsY, EdwardsPoint};
use curve25519_dalek::montgomery::MontgomeryPoint;
use curve25519_dalek::scalar::Scalar;
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha512};
use zeroize::Zeroize;

use super::{KeyPair, PublicKey};

pub const SIGNATURE_LEN: usize = 64;

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub [u8; SIGNATURE_LEN]);

impl std::fmt::Debug for Signature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Signature({}..)", hex::encode(&self.0[..8]))
    }
}

fn hash_to_scalar(parts: &[&[u8]]) -> Scalar {
    let mut h = Sha512::new();
    for p in parts {
        h.update(p);
    }
    Scalar::from_bytes_mod_order_wide(&h.finalize().into())
}

pub fn sign<R: RngCore + CryptoRng>(keypair: &KeyPair, message: &[u8], rng: &mut R) -> Signature {
    let mut a = Scalar::from_bytes_mod_order(*keypair.secret_bytes());
    let mut big_a = EdwardsPoint::mul_base(&a).compress();
    // Force the Edwards sign bit to zero so the verifier can rebuild A from u.
    if big_a.as_bytes()[31] & 0x80 != 0 {
        a = -a;
        big_a = EdwardsPoint::mul_base(&a).compress();
    }

    let mut z = [0u8; 64];
    rng.fill_bytes(&mut z);
    let mut prefix = [0xffu8; 32];
    prefix[0] = 0xfe;
    let mut a_bytes = a.to_bytes();
    let r = hash_to_scalar(&[&prefix, &a_bytes, message, &z]);
    a_bytes.zeroize();
    z.zeroize();

    let big_r = (&r * ED25519_BASEPOINT_TABLE).compress();
    let h = hash_to_scalar(&[big_r.as_bytes(), big_a.as_bytes(), message]);
    let s = r + h * a;

    let mut out = [0u8; SIGNATURE_LEN];
    out[..32].copy_from_slice(big_r.as_bytes());
    out[32..].copy_from_slice(s.as_bytes());
    Signature(out)
}

pub fn verify(public: &PublicKey, message: &[u8], signature: &Signature) -> bool {
    let Some(big_a) = MontgomeryPoint(public.0).to_edwards(0) else {
        return false;
    };
    if big_a.is_small_order() {
        return false;
    }
    let r_bytes: [u8; 32] = signature.0[..32].try_into().unwrap();
    let s_bytes: [u8; 32] = signature.0[32..].try_into().unwrap();
    let Some(s) = Option::<Scalar>::from(Scalar::from_canonical_bytes(s_bytes)) else {
        return false;
    };
    let big_a_c = big_a.compress();
    let h = hash_to_scalar(&[&r_bytes, big_a_c.as_bytes(), message]);
    let check = EdwardsPoint::vartime_double_scalar_mul_basepoint(&(-h), &big_a, &s).compress();
    check == CompressedEdwardsY(r_bytes)
}
