//! Loopback socket transport: each peer is a process listening on an
//! explicitly configured address. Frames are `len(u32 LE) || bytes`.

use std::collections::HashMap;
use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::peer::Responder;
use super::transport::{Session, Transport};
use super::wire::{Message, Role, SecureChannel, MAX_FRAME, OPEN_SESSION, PROBE};
use super::{PeerInfo, PeerState, RecoveryError, Result};
use crate::crypto::{KeyPair, PublicKey};
use crate::store::Store;

fn io_err(e: io::Error) -> RecoveryError {
    match e.kind() {
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => RecoveryError::Timeout,
        _ => RecoveryError::Transport(e.to_string()),
    }
}

pub fn write_frame(stream: &mut TcpStream, frame: &[u8]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(4 + frame.len());
    buf.extend_from_slice(&(frame.len() as u32).to_le_bytes());
    buf.extend_from_slice(frame);
    stream.write_all(&buf)
}

pub fn read_frame(stream: &mut TcpStream) -> io::Result<Vec<u8>> {
    let mut len = [0u8; 4];
    stream.read_exact(&mut len)?;
    let len = u32::from_le_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "frame too large"));
    }
    let mut frame = vec![0u8; len];
    stream.read_exact(&mut frame)?;
    Ok(frame)
}

pub struct TcpTransport {
    endpoints: Vec<SocketAddr>,
    timeout: Duration,
    known: HashMap<PublicKey, SocketAddr>,
}

impl TcpTransport {
    pub fn new(endpoints: Vec<SocketAddr>, timeout: Duration) -> Self {
        TcpTransport { endpoints, timeout, known: HashMap::new() }
    }

    fn dial(&self, addr: &SocketAddr) -> Result<TcpStream> {
        let stream = TcpStream::connect_timeout(addr, self.timeout).map_err(io_err)?;
        stream.set_read_timeout(Some(self.timeout)).map_err(io_err)?;
        stream.set_write_timeout(Some(self.timeout)).map_err(io_err)?;
        Ok(stream)
    }

    fn probe(&self, addr: &SocketAddr) -> Result<PeerInfo> {
        let mut stream = self.dial(addr)?;
        write_frame(&mut stream, &[PROBE]).map_err(io_err)?;
        match Message::from_bytes(&read_frame(&mut stream).map_err(io_err)?)? {
            Message::Hello(info) => Ok(info),
            other => Err(RecoveryError::Transport(format!("probe answered with {}", other.name()))),
        }
    }
}

impl Transport for TcpTransport {
    /// Probes every endpoint; unreachable ones are skipped.
    fn discover(&mut self) -> Result<Vec<PeerInfo>> {
        let mut found = Vec::new();
        for addr in self.endpoints.clone() {
            if let Ok(info) = self.probe(&addr) {
                self.known.insert(info.pk, addr);
                found.push(info);
            }
        }
        Ok(found)
    }

    fn connect<'a>(&'a mut self, me: &KeyPair, peer: &PublicKey) -> Result<Box<dyn Session + 'a>> {
        if !self.known.contains_key(peer) {
            self.discover()?;
        }
        let addr = *self
            .known
            .get(peer)
            .ok_or_else(|| RecoveryError::Transport(format!("peer {peer:?} not reachable")))?;
        let mut stream = self.dial(&addr)?;
        let mut hello = vec![OPEN_SESSION];
        hello.extend_from_slice(me.public().as_bytes());
        write_frame(&mut stream, &hello).map_err(io_err)?;
        let channel = SecureChannel::new(me, *peer, Role::Initiator)?;
        Ok(Box::new(TcpSession { stream, channel }))
    }
}

struct TcpSession {
    stream: TcpStream,
    channel: SecureChannel,
}

impl Session for TcpSession {
    fn send(&mut self, msg: &Message) -> Result<()> {
        let frame = self.channel.seal(msg);
        write_frame(&mut self.stream, &frame).map_err(io_err)
    }

    fn recv(&mut self) -> Result<Message> {
        let frame = read_frame(&mut self.stream).map_err(io_err)?;
        self.channel.open(&frame)
    }
}

type OnChange = dyn Fn(&PeerState) + Send + Sync;

/// Accept loop for one peer endpoint; each connection gets its own thread.
pub struct PeerServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl PeerServer {
    /// Serves `state` on `listener`. `on_change` runs (under the state lock)
    /// after every message that may have mutated the state.
    pub fn spawn(
        listener: TcpListener,
        state: Arc<Mutex<PeerState>>,
        store: Arc<Store>,
        on_change: Arc<OnChange>,
    ) -> io::Result<Self> {
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let stop_flag = Arc::clone(&stop);
        let accept = thread::spawn(move || {
            for conn in listener.incoming() {
                if stop_flag.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = conn else { continue };
                let state = Arc::clone(&state);
                let store = Arc::clone(&store);
                let on_change = Arc::clone(&on_change);
                thread::spawn(move || serve_connection(stream, &state, &store, &*on_change));
            }
        });
        Ok(PeerServer { addr, stop, accept: Some(accept) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the accept loop exits.
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

fn serve_connection(mut stream: TcpStream, state: &Mutex<PeerState>, store: &Store, on_change: &OnChange) {
    let _ = stream.set_read_timeout(Some(Duration::from_secs(30)));
    let mut responder = Responder::new();
    while !responder.is_closed() {
        let Ok(frame) = read_frame(&mut stream) else { break };
        let reply = {
            let mut st = state.lock().unwrap();
            let reply = responder.on_frame(&mut st, store, &frame);
            on_change(&st);
            reply
        };
        match reply {
            Ok(Some(out)) => {
                if write_frame(&mut stream, &out).is_err() {
                    break;
                }
            }
            Ok(None) => {}
            Err(_) => break,
        }
    }
    let _ = stream.shutdown(Shutdown::Both);
}
