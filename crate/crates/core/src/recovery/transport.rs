use super::wire::Message;
use super::{PeerInfo, Result};
use crate::crypto::{KeyPair, PublicKey};

/// Ordered, authenticated, reliable message channel to one peer. Either
/// messages arrive in order or the session errors.
pub trait Session {
    fn send(&mut self, msg: &Message) -> Result<()>;
    fn recv(&mut self) -> Result<Message>;
}

/// Short-range peer medium: finds nearby peers and opens sessions to them.
pub trait Transport {
    fn discover(&mut self) -> Result<Vec<PeerInfo>>;
    fn connect<'a>(&'a mut self, me: &KeyPair, peer: &PublicKey) -> Result<Box<dyn Session + 'a>>;
}
