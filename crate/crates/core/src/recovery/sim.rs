//! In-process stand-in for the short-range radio: a bus of scripted peers.

use std::collections::VecDeque;
use std::thread;
use std::time::Duration;

use super::transport::{Session, Transport};
use super::wire::{Message, Role, SecureChannel};
use super::{PeerInfo, PeerState, RecoveryError, Result};
use crate::crypto::{KeyPair, PublicKey};
use crate::store::Store;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Behavior {
    Honest,
    /// Advertises but never answers; connections time out.
    Unresponsive,
    /// Answers shard requests with a damaged envelope.
    Corrupting,
    /// Swallows shard offers without storing or acknowledging them.
    NeverAcks,
}

pub struct SimPeer {
    pub state: PeerState,
    pub behavior: Behavior,
    /// Owners that delivered a SHARD_OFFER to this peer.
    pub offers_from: Vec<PublicKey>,
}

pub struct SimBus<'s> {
    peers: Vec<SimPeer>,
    store: &'s Store,
    latency: Duration,
}

impl<'s> SimBus<'s> {
    pub fn new(store: &'s Store) -> Self {
        SimBus { peers: Vec::new(), store, latency: Duration::ZERO }
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn add_peer(&mut self, state: PeerState, behavior: Behavior) {
        self.peers.push(SimPeer { state, behavior, offers_from: Vec::new() });
    }

    pub fn peers(&self) -> &[SimPeer] {
        &self.peers
    }

    pub fn peer(&self, pk: &PublicKey) -> Option<&SimPeer> {
        self.peers.iter().find(|p| p.state.public() == *pk)
    }

    pub fn peer_mut(&mut self, pk: &PublicKey) -> Option<&mut SimPeer> {
        self.peers.iter_mut().find(|p| p.state.public() == *pk)
    }

    pub fn set_behavior(&mut self, pk: &PublicKey, behavior: Behavior) {
        if let Some(p) = self.peer_mut(pk) {
            p.behavior = behavior;
        }
    }

    pub fn into_peers(self) -> Vec<SimPeer> {
        self.peers
    }
}

impl Transport for SimBus<'_> {
    fn discover(&mut self) -> Result<Vec<PeerInfo>> {
        Ok(self.peers.iter().map(|p| p.state.info().clone()).collect())
    }

    fn connect<'a>(&'a mut self, me: &KeyPair, peer: &PublicKey) -> Result<Box<dyn Session + 'a>> {
        let idx = self
            .peers
            .iter()
            .position(|p| p.state.public() == *peer)
            .ok_or_else(|| RecoveryError::Transport(format!("no peer {peer:?} in range")))?;
        if self.peers[idx].behavior == Behavior::Unresponsive {
            return Err(RecoveryError::Timeout);
        }
        let initiator = SecureChannel::new(me, *peer, Role::Initiator)?;
        let responder = SecureChannel::new(self.peers[idx].state.keypair(), me.public(), Role::Responder)?;
        Ok(Box::new(SimSession { bus: self, idx, initiator, responder, inbox: VecDeque::new() }))
    }
}

struct SimSession<'a, 's> {
    bus: &'a mut SimBus<'s>,
    idx: usize,
    initiator: SecureChannel,
    responder: SecureChannel,
    inbox: VecDeque<Vec<u8>>,
}

impl Session for SimSession<'_, '_> {
    fn send(&mut self, msg: &Message) -> Result<()> {
        if !self.bus.latency.is_zero() {
            thread::sleep(self.bus.latency);
        }
        let frame = self.initiator.seal(msg);
        let received = self.responder.open(&frame)?;
        let remote = self.responder.remote();
        let store = self.bus.store;
        let peer = &mut self.bus.peers[self.idx];
        if let Message::ShardOffer(env) = &received {
            peer.offers_from.push(env.owner_pk);
            if peer.behavior == Behavior::NeverAcks {
                return Ok(());
            }
        }
        let reply = match peer.state.handle(&remote, received, store)? {
            Some(Message::ShardResponse(env)) if peer.behavior == Behavior::Corrupting => {
                let mut bytes = env.to_bytes();
                bytes[3] ^= 0x5a;
                Some(Message::ShardResponse(super::ShardEnvelope::from_bytes(&bytes)?))
            }
            other => other,
        };
        if let Some(reply) = reply {
            self.inbox.push_back(self.responder.seal(&reply));
        }
        Ok(())
    }

    fn recv(&mut self) -> Result<Message> {
        let frame = self.inbox.pop_front().ok_or(RecoveryError::Timeout)?;
        self.initiator.open(&frame)
    }
}
