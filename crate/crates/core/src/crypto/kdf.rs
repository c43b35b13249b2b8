use rand::{CryptoRng, RngCore};
use sha2::Sha256;
use zeroize::Zeroize;

use super::{aead_open, aead_seal, CryptoError, MasterKey, Result, SealedBox, SymmetricKey, SEAL_OVERHEAD};

pub const SALT_LEN: usize = 16;
/// Floor on PBKDF2 iterations accepted by [`kdf_password`].
pub const MIN_ITERATIONS: u32 = 10_000;
pub const DEFAULT_ITERATIONS: u32 = 600_000;

const ENVELOPE_MAGIC: &[u8; 4] = b"PWE1";
const ENVELOPE_HEADER_LEN: usize = 4 + SALT_LEN + 8;
pub const PASSWORD_ENVELOPE_LEN: usize = ENVELOPE_HEADER_LEN + 32 + SEAL_OVERHEAD;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KdfParams {
    pub iterations: u32,
}

impl Default for KdfParams {
    fn default() -> Self {
        KdfParams { iterations: DEFAULT_ITERATIONS }
    }
}

impl KdfParams {
    pub fn to_bytes(self) -> [u8; 8] {
        let mut out = [0u8; 8];
        out[..4].copy_from_slice(&self.iterations.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: [u8; 8]) -> Self {
        KdfParams { iterations: u32::from_le_bytes(bytes[..4].try_into().unwrap()) }
    }
}

/// Unchecked PBKDF2-HMAC-SHA256 of arbitrary output length.
pub fn pbkdf2_sha256(password: &[u8], salt: &[u8], iterations: u32, out: &mut [u8]) {
    pbkdf2::pbkdf2_hmac::<Sha256>(password, salt, iterations, out);
}

pub fn kdf_password(password: &str, salt: &[u8], params: KdfParams) -> Result<SymmetricKey> {
    if password.is_empty() {
        return Err(CryptoError::EmptyPassword);
    }
    if salt.len() != SALT_LEN {
        return Err(CryptoError::BadSaltLength { expected: SALT_LEN, got: salt.len() });
    }
    if params.iterations < MIN_ITERATIONS {
        return Err(CryptoError::WeakKdfParams { got: params.iterations, min: MIN_ITERATIONS });
    }
    let mut out = [0u8; 32];
    pbkdf2_sha256(password.as_bytes(), salt, params.iterations, &mut out);
    let key = SymmetricKey::from_bytes(out);
    out.zeroize();
    Ok(key)
}

/// Master key sealed under a password-derived key.
///
/// Wire layout: `"PWE1" || salt(16) || iterations(u32 LE) || reserved(u32) || SealedBox`.
/// The 28-byte prefix is bound as associated data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PasswordEnvelope {
    pub salt: [u8; SALT_LEN],
    pub params: KdfParams,
    pub sealed: SealedBox,
}

impl PasswordEnvelope {
    pub fn seal<R: RngCore + CryptoRng>(
        master: &MasterKey,
        password: &str,
        params: KdfParams,
        rng: &mut R,
    ) -> Result<Self> {
        let mut salt = [0u8; SALT_LEN];
        rng.fill_bytes(&mut salt);
        let key = kdf_password(password, &salt, params)?;
        let aad = header(&salt, params);
        let sealed = aead_seal(&key, master.as_bytes(), &aad, rng);
        Ok(PasswordEnvelope { salt, params, sealed })
    }

    pub fn open(&self, password: &str) -> Result<MasterKey> {
        let key = kdf_password(password, &self.salt, self.params)?;
        let mut plain = aead_open(&key, &self.sealed, &header(&self.salt, self.params))?;
        let master = MasterKey::from_slice(&plain);
        plain.zeroize();
        master
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = header(&self.salt, self.params).to_vec();
        self.sealed.write_to(&mut out);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let malformed = |reason: &str| CryptoError::Malformed { what: "password envelope", reason: reason.into() };
        if bytes.len() != PASSWORD_ENVELOPE_LEN {
            return Err(malformed("wrong length"));
        }
        if &bytes[..4] != ENVELOPE_MAGIC {
            return Err(malformed("bad magic"));
        }
        if bytes[ENVELOPE_HEADER_LEN - 4..ENVELOPE_HEADER_LEN] != [0u8; 4] {
            return Err(malformed("reserved field must be zero"));
        }
        let salt = bytes[4..4 + SALT_LEN].try_into().unwrap();
        let params = KdfParams::from_bytes(bytes[4 + SALT_LEN..ENVELOPE_HEADER_LEN].try_into().unwrap());
        let sealed = SealedBox::from_bytes(&bytes[ENVELOPE_HEADER_LEN..])?;
        Ok(PasswordEnvelope { salt, params, sealed })
    }
}

fn header(salt: &[u8; SALT_LEN], params: KdfParams) -> [u8; ENVELOPE_HEADER_LEN] {
    let mut out = [0u8; ENVELOPE_HEADER_LEN];
    out[..4].copy_from_slice(ENVELOPE_MAGIC);
    out[4..4 + SALT_LEN].copy_from_slice(salt);
    out[4 + SALT_LEN..].copy_from_slice(&params.to_bytes());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::OsRng;

    const FAST: KdfParams = KdfParams { iterations: MIN_ITERATIONS };

    #[test]
    fn rfc7914_pbkdf2_vectors() {
        let mut out = [0u8; 64];
        pbkdf2_sha256(b"passwd", b"salt", 1, &mut out);
        assert_eq!(
            hex::encode(out),
            "55ac046e56e3089fec1691c22544b605f94185216dde0465e68b9d57c20dacbc\
             49ca9cccf179b645991664b39d77ef317c71b845b1e30bd509112041d3a19783"
        );
        pbkdf2_sha256(b"Password", b"NaCl", 80_000, &mut out);
        assert_eq!(
            hex::encode(out),
            "4ddcd8f60b98be21830cee5ef22701f9641a4418d04c0414aeff08876b34ab56\
             a1d425a1225833549adb841b51c9b3176a272bdebba1d078478f62b397f33c8d"
        );
    }

    #[test]
    fn deterministic_and_salted() {
        let a = kdf_password("hunter2", &[1u8; 16], FAST).unwrap();
        let b = kdf_password("hunter2", &[1u8; 16], FAST).unwrap();
        let c = kdf_password("hunter2", &[2u8; 16], FAST).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(kdf_password("", &[0u8; 16], FAST).unwrap_err(), CryptoError::EmptyPassword);
        assert!(matches!(
            kdf_password("pw", &[0u8; 15], FAST),
            Err(CryptoError::BadSaltLength { .. })
        ));
        assert!(matches!(
            kdf_password("pw", &[0u8; 16], KdfParams { iterations: 1 }),
            Err(CryptoError::WeakKdfParams { .. })
        ));
    }

    #[test]
    fn envelope_round_trip() {
        let master = MasterKey::generate(&mut OsRng);
        let env = PasswordEnvelope::seal(&master, "correct horse", FAST, &mut OsRng).unwrap();
        let wire = env.to_bytes();
        assert_eq!(wire.len(), PASSWORD_ENVELOPE_LEN);
        assert_eq!(&wire[..4], b"PWE1");
        let parsed = PasswordEnvelope::from_bytes(&wire).unwrap();
        assert_eq!(parsed, env);
        assert_eq!(parsed.open("correct horse").unwrap(), master);
        assert_eq!(parsed.open("wrong horse").unwrap_err(), CryptoError::AuthenticationFailed);
    }

    #[test]
    fn envelope_header_is_authenticated() {
        let master = MasterKey::generate(&mut OsRng);
        let mut wire = PasswordEnvelope::seal(&master, "pw", FAST, &mut OsRng).unwrap().to_bytes();
        let mut reserved = wire.clone();
        reserved[25] ^= 1;
        assert!(PasswordEnvelope::from_bytes(&reserved).is_err());
        // Iteration count is bound as associated data.
        wire[20] ^= 1;
        let env = PasswordEnvelope::from_bytes(&wire).unwrap();
        assert_eq!(env.open("pw").unwrap_err(), CryptoError::AuthenticationFailed);
    }
}
