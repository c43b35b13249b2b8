use hmac::{Hmac, Mac};
use sha2::Sha256;

use super::SymmetricKey;

pub const MAC_LEN: usize = 32;

type HmacSha256 = Hmac<Sha256>;

pub fn mac_sign(key: &SymmetricKey, message: &[u8]) -> [u8; MAC_LEN] {
    let mut mac = HmacSha256::new_from_slice(key.as_bytes()).expect("HMAC accepts any key length");
    mac.update(message);
    mac.finalize().into_bytes().into()
}

/// Constant-time tag check.
pub fn mac_verify(key: &SymmetricKey, message: &[u8], tag: &[u8]) -> bool {
    let mut mac = HmacSha256::new_from_slice(key.as_bytes()).expect("HMAC accepts any key length");
    mac.update(message);
    mac.verify_slice(tag).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::OsRng;

    #[test]
    fn sign_verify() {
        let k = SymmetricKey::generate(&mut OsRng);
        let tag = mac_sign(&k, b"message");
        assert!(mac_verify(&k, b"message", &tag));
        assert!(!mac_verify(&SymmetricKey::generate(&mut OsRng), b"message", &tag));
        assert!(!mac_verify(&k, b"message\0", &tag));
        assert!(!mac_verify(&k, b"message", &tag[..31]));
    }

    #[test]
    fn known_answer() {
        // Python hmac over the same inputs.
        let k = SymmetricKey::from_bytes([0x0b; 32]);
        assert_eq!(
            hex::encode(mac_sign(&k, b"Hi There")),
            "198a607eb44bfbc69903a0f1cf2bbdc5ba0aa3f3d9ae3c1c7a3b1696a0b68cf7"
        );
    }

    #[test]
    fn key_separation() {
        for _ in 0..1000 {
            let fek = SymmetricKey::generate(&mut OsRng);
            let fsk = SymmetricKey::generate(&mut OsRng);
            let tag = mac_sign(&fsk, b"content");
            assert!(!mac_verify(&fek, b"content", &tag));
        }
    }
}
