//! Out-of-band share ticket: tells a grantee which blob to fetch and whose
//! key sealed their header block.

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use thiserror::Error;

use crate::crypto::PublicKey;
use crate::store::BlobId;

pub const TICKET_MAGIC: &[u8; 4] = b"TKT1";
pub const TICKET_LEN: usize = 4 + 16 + 32;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("malformed share ticket: {0}")]
pub struct TicketError(&'static str);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShareTicket {
    pub blob_id: BlobId,
    pub owner_pk: PublicKey,
}

impl ShareTicket {
    /// `"TKT1" || blob_id(16 raw bytes) || owner_pk(32)`.
    pub fn to_bytes(&self) -> [u8; TICKET_LEN] {
        let mut out = [0u8; TICKET_LEN];
        out[..4].copy_from_slice(TICKET_MAGIC);
        out[4..20].copy_from_slice(&self.blob_id.to_bytes());
        out[20..].copy_from_slice(self.owner_pk.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TicketError> {
        if bytes.len() != TICKET_LEN {
            return Err(TicketError("wrong length"));
        }
        if &bytes[..4] != TICKET_MAGIC {
            return Err(TicketError("bad magic"));
        }
        Ok(ShareTicket {
            blob_id: BlobId::from_bytes(bytes[4..20].try_into().unwrap()),
            owner_pk: PublicKey(bytes[20..].try_into().unwrap()),
        })
    }

    pub fn encode(&self) -> String {
        BASE64.encode(self.to_bytes())
    }

    pub fn decode(s: &str) -> Result<Self, TicketError> {
        let raw = BASE64.decode(s.trim()).map_err(|_| TicketError("not base64"))?;
        Self::from_bytes(&raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let t = ShareTicket { blob_id: BlobId::from_bytes([7; 16]), owner_pk: PublicKey([9; 32]) };
        let s = t.encode();
        assert_eq!(ShareTicket::decode(&s).unwrap(), t);
        assert_eq!(&t.to_bytes()[..4], b"TKT1");
    }

    #[test]
    fn rejects_garbage() {
        assert!(ShareTicket::decode("!!").is_err());
        assert!(ShareTicket::from_bytes(&[0; TICKET_LEN]).is_err());
        assert!(ShareTicket::from_bytes(&[0; 3]).is_err());
    }
}
