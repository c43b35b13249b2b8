//! Shamir secret sharing over GF(256).
//!
//! Each secret byte gets its own random polynomial of degree `k - 1` whose
//! constant term is that byte; shard `i` holds every polynomial evaluated at
//! `x = i`. Any `k` shards interpolate the constant terms back.

pub mod gf256;

use std::collections::{BTreeMap, HashSet};

use rand::{CryptoRng, RngCore};
use thiserror::Error;
use zeroize::{Zeroize, ZeroizeOnDrop};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SharingError {
    #[error("invalid threshold parameters n={n}, k={k}: need 1 <= k <= n <= 255")]
    InvalidParams { n: usize, k: usize },
    #[error("secret must not be empty")]
    EmptySecret,
    #[error("no shards supplied")]
    NoShards,
    #[error("shard index 0 is reserved for the secret")]
    ZeroIndex,
    #[error("duplicate shard index {0}")]
    DuplicateIndex(u8),
    #[error("shard lengths differ")]
    MismatchedLengths,
    #[error("malformed shard encoding")]
    Malformed,
}

pub type Result<T> = std::result::Result<T, SharingError>;

/// Validated `(n, k)` with `1 <= k <= n <= 255`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ThresholdParams {
    n: u8,
    k: u8,
}

impl ThresholdParams {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if k < 1 || k > n || n > 255 {
            return Err(SharingError::InvalidParams { n, k });
        }
        Ok(ThresholdParams { n: n as u8, k: k as u8 })
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn k(&self) -> usize {
        self.k as usize
    }
}

#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct Shard {
    index: u8,
    value: Vec<u8>,
}

impl std::fmt::Debug for Shard {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Shard")
            .field("index", &self.index)
            .field("len", &self.value.len())
            .finish()
    }
}

impl Shard {
    pub fn new(index: u8, value: Vec<u8>) -> Result<Self> {
        if index == 0 {
            return Err(SharingError::ZeroIndex);
        }
        Ok(Shard { index, value })
    }

    pub fn index(&self) -> u8 {
        self.index
    }

    pub fn value(&self) -> &[u8] {
        &self.value
    }

    /// `index(1) || value`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(1 + self.value.len());
        out.push(self.index);
        out.extend_from_slice(&self.value);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        match bytes.split_first() {
            Some((&index, value)) if !value.is_empty() => Shard::new(index, value.to_vec()),
            _ => Err(SharingError::Malformed),
        }
    }
}

pub fn split<R: RngCore + CryptoRng>(
    secret: &[u8],
    params: ThresholdParams,
    rng: &mut R,
) -> Result<BTreeMap<u8, Shard>> {
    if secret.is_empty() {
        return Err(SharingError::EmptySecret);
    }
    let mut values = vec![Vec::with_capacity(secret.len()); params.n()];
    let mut coeffs = vec![0u8; params.k()];
    for &byte in secret {
        coeffs[0] = byte;
        rng.fill_bytes(&mut coeffs[1..]);
        for (i, value) in values.iter_mut().enumerate() {
            value.push(gf256::eval_poly(&coeffs, (i + 1) as u8));
        }
    }
    coeffs.zeroize();
    Ok(values
        .into_iter()
        .enumerate()
        .map(|(i, value)| {
            let index = (i + 1) as u8;
            (index, Shard { index, value })
        })
        .collect())
}

/// Interpolates at zero through whatever shards it is given. It cannot tell
/// whether enough were supplied; callers check the result out of band.
pub fn join<'a, I>(shards: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = &'a Shard>,
{
    let shards: Vec<&Shard> = shards.into_iter().collect();
    let first = shards.first().ok_or(SharingError::NoShards)?;
    let len = first.value.len();
    let mut seen = HashSet::with_capacity(shards.len());
    for s in &shards {
        if s.index == 0 {
            return Err(SharingError::ZeroIndex);
        }
        if !seen.insert(s.index) {
            return Err(SharingError::DuplicateIndex(s.index));
        }
        if s.value.len() != len {
            return Err(SharingError::MismatchedLengths);
        }
    }
    let xs: Vec<u8> = shards.iter().map(|s| s.index).collect();
    let weights = gf256::lagrange_at_zero(&xs);
    Ok((0..len)
        .map(|pos| {
            shards
                .iter()
                .zip(&weights)
                .fold(0u8, |acc, (s, &w)| gf256::add(acc, gf256::mul(s.value[pos], w)))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::OsRng;

    #[test]
    fn params_bounds() {
        assert!(ThresholdParams::new(1, 1).is_ok());
        assert!(ThresholdParams::new(255, 255).is_ok());
        assert_eq!(
            ThresholdParams::new(256, 2),
            Err(SharingError::InvalidParams { n: 256, k: 2 })
        );
        assert!(ThresholdParams::new(3, 0).is_err());
        assert!(ThresholdParams::new(3, 4).is_err());
        assert!(ThresholdParams::new(0, 0).is_err());
    }

    #[test]
    fn threshold_one_copies_secret() {
        let secret = b"plain secret";
        let shards = split(secret, ThresholdParams::new(7, 1).unwrap(), &mut OsRng).unwrap();
        assert_eq!(shards.len(), 7);
        for (i, s) in &shards {
            assert_eq!(*i, s.index());
            assert_eq!(s.value(), secret);
        }
        assert_eq!(join([&shards[&4]]).unwrap(), secret);
    }

    #[test]
    fn indices_are_one_through_n() {
        let shards = split(b"x", ThresholdParams::new(5, 2).unwrap(), &mut OsRng).unwrap();
        assert_eq!(shards.keys().copied().collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn join_errors() {
        assert_eq!(join(std::iter::empty()), Err(SharingError::NoShards));
        let a = Shard::new(1, vec![1, 2]).unwrap();
        let b = Shard::new(1, vec![3, 4]).unwrap();
        let c = Shard::new(2, vec![5]).unwrap();
        assert_eq!(join([&a, &b]), Err(SharingError::DuplicateIndex(1)));
        assert_eq!(join([&a, &c]), Err(SharingError::MismatchedLengths));
        assert_eq!(Shard::new(0, vec![1]), Err(SharingError::ZeroIndex));
    }

    #[test]
    fn empty_secret_rejected() {
        assert_eq!(
            split(b"", ThresholdParams::new(3, 2).unwrap(), &mut OsRng),
            Err(SharingError::EmptySecret)
        );
    }

    #[test]
    fn shard_encoding() {
        let s = Shard::new(9, vec![1, 2, 3]).unwrap();
        assert_eq!(s.to_bytes(), vec![9, 1, 2, 3]);
        assert_eq!(Shard::from_bytes(&s.to_bytes()).unwrap(), s);
        assert_eq!(Shard::from_bytes(&[0, 1]), Err(SharingError::ZeroIndex));
        assert_eq!(Shard::from_bytes(&[4]), Err(SharingError::Malformed));
    }
}
