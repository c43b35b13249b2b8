use std::collections::BTreeSet;
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use e2ee_core::crypto::{generate_keypair, KdfParams, KeyPair, MasterKey, PublicKey};
use e2ee_core::recovery::sim::{Behavior, SimBus};
use e2ee_core::recovery::tcp::{PeerServer, TcpTransport};
use e2ee_core::recovery::{
    distribute, escrow_join, password_backup, password_restore, push_rebind, rebind_endorsement, recover,
    update_owner_pk, PeerList, PeerState, RecoveryError, Transport,
};
use e2ee_core::sharing::ThresholdParams;
use e2ee_core::store::{BlobKind, Store};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn peer(i: usize, rng: &mut ChaCha20Rng) -> PeerState {
    PeerState::new(generate_keypair(rng), MasterKey::generate(rng), &format!("peer{i}"), &format!("p{i}@corp.example"))
        .unwrap()
}

fn bus<'s>(store: &'s Store, behaviors: &[Behavior], rng: &mut ChaCha20Rng) -> SimBus<'s> {
    let mut bus = SimBus::new(store);
    for (i, b) in behaviors.iter().enumerate() {
        bus.add_peer(peer(i, rng), *b);
    }
    bus
}

fn accept_all(_: &e2ee_core::recovery::PeerInfo) -> bool {
    true
}

#[test]
fn password_backup_restore_and_failures() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let mut r = rng(1);
    let master = MasterKey::generate(&mut r);
    let params = KdfParams { iterations: 10_000 };
    let id = password_backup(&master, "hunter2-but-longer", params, &store, &mut r).unwrap();
    assert_eq!(password_restore(&store, &id, "hunter2-but-longer").unwrap(), master);
    assert!(matches!(password_restore(&store, &id, "wrong"), Err(RecoveryError::WrongPassword)));
    store.delete(&id).unwrap();
    assert!(matches!(password_restore(&store, &id, "hunter2-but-longer"), Err(RecoveryError::MissingBlob)));
}

#[test]
fn five_honest_peers_three_two() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let mut r = rng(2);
    let owner = generate_keypair(&mut r);
    let master = MasterKey::generate(&mut r);
    let mut bus = bus(&store, &[Behavior::Honest; 5], &mut r);
    let params = ThresholdParams::new(3, 2).unwrap();
    let (list, list_id) = distribute(&master, params, &mut bus, &mut accept_all, &owner, &store, &mut r).unwrap();
    assert_eq!(list.records.len(), 3);
    assert!(list.verify());
    assert_eq!(store.list(BlobKind::Shard).unwrap().len(), 3);
    assert_eq!(PeerList::from_bytes(&store.get(&list_id).unwrap()).unwrap(), list);
    let indices: BTreeSet<u8> = list.records.iter().map(|(_, i)| *i).collect();
    assert_eq!(indices, BTreeSet::from([1, 2, 3]));
    assert_eq!(recover(&list, &mut bus, &owner, &mut r).unwrap(), master);
}

#[test]
fn rejecting_every_peer_leaves_store_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let mut r = rng(3);
    let owner = generate_keypair(&mut r);
    let master = MasterKey::generate(&mut r);
    let mut bus = bus(&store, &[Behavior::Honest; 5], &mut r);
    let before = store.admin_dump().unwrap();
    let mut shown = 0;
    let err = distribute(
        &master,
        ThresholdParams::new(3, 2).unwrap(),
        &mut bus,
        &mut |_| {
            shown += 1;
            false
        },
        &owner,
        &store,
        &mut r,
    )
    .unwrap_err();
    assert!(matches!(err, RecoveryError::DistributionFailed { placed: 0, needed: 3 }));
    assert_eq!(shown, 5, "each candidate proposed exactly once");
    assert_eq!(store.admin_dump().unwrap(), before);
    assert!(bus.peers().iter().all(|p| p.offers_from.is_empty()));
}

#[test]
fn silent_peer_is_replaced() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let mut r = rng(4);
    let owner = generate_keypair(&mut r);
    let master = MasterKey::generate(&mut r);
    let mut behaviors = [Behavior::Honest; 5];
    behaviors[1] = Behavior::NeverAcks;
    let mut bus = bus(&store, &behaviors, &mut r);
    let silent = bus.peers()[1].state.public();
    let (list, _) =
        distribute(&master, ThresholdParams::new(4, 2).unwrap(), &mut bus, &mut accept_all, &owner, &store, &mut r)
            .unwrap();
    assert_eq!(list.records.len(), 4);
    assert!(list.records.iter().all(|(pk, _)| *pk != silent));
    assert_eq!(recover(&list, &mut bus, &owner, &mut r).unwrap(), master);
}

fn distributed(seed: u64, n: usize, k: usize, peers: usize) -> (tempfile::TempDir, KeyPair, MasterKey, PeerList, Vec<PeerState>) {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let mut r = rng(seed);
    let owner = generate_keypair(&mut r);
    let master = MasterKey::generate(&mut r);
    let mut b = bus(&store, &vec![Behavior::Honest; peers], &mut r);
    let (list, _) =
        distribute(&master, ThresholdParams::new(n, k).unwrap(), &mut b, &mut accept_all, &owner, &store, &mut r)
            .unwrap();
    let states = b.into_peers().into_iter().map(|p| p.state).collect();
    (dir, owner, master, list, states)
}

fn rebuild<'s>(store: &'s Store, states: Vec<PeerState>, behavior: impl Fn(&PublicKey) -> Behavior) -> SimBus<'s> {
    let mut b = SimBus::new(store);
    for s in states {
        let beh = behavior(&s.public());
        b.add_peer(s, beh);
    }
    b
}

#[test]
fn two_unresponsive_of_five_still_recovers() {
    let (dir, owner, master, list, states) = distributed(5, 5, 3, 5);
    let store = Store::open(dir.path()).unwrap();
    let down: Vec<PublicKey> = list.records.iter().take(2).map(|(pk, _)| *pk).collect();
    let mut b = rebuild(&store, states, |pk| if down.contains(pk) { Behavior::Unresponsive } else { Behavior::Honest });
    assert_eq!(recover(&list, &mut b, &owner, &mut rng(50)).unwrap(), master);
}

#[test]
fn corrupted_shard_is_discarded() {
    let (dir, owner, master, list, states) = distributed(6, 4, 3, 4);
    let store = Store::open(dir.path()).unwrap();
    let bad = list.records[0].0;
    let mut b = rebuild(&store, states, |pk| if *pk == bad { Behavior::Corrupting } else { Behavior::Honest });
    assert_eq!(recover(&list, &mut b, &owner, &mut rng(60)).unwrap(), master);
}

#[test]
fn k_minus_one_honest_fails() {
    let (dir, owner, _, list, states) = distributed(7, 5, 3, 5);
    let store = Store::open(dir.path()).unwrap();
    let honest: Vec<PublicKey> = list.records.iter().take(2).map(|(pk, _)| *pk).collect();
    let mut b = rebuild(&store, states, |pk| if honest.contains(pk) { Behavior::Honest } else { Behavior::Unresponsive });
    match recover(&list, &mut b, &owner, &mut rng(70)) {
        Err(RecoveryError::RecoveryFailed { valid_shards: 2, needed: 3 }) => {}
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn stranger_cannot_pull_shards() {
    let (dir, _, _, list, states) = distributed(8, 3, 2, 3);
    let store = Store::open(dir.path()).unwrap();
    let mut b = rebuild(&store, states, |_| Behavior::Honest);
    let mut r = rng(80);
    let mallory = generate_keypair(&mut r);
    assert!(matches!(recover(&list, &mut b, &mallory, &mut r), Err(RecoveryError::InvalidPeerList)));
    // A forged list naming Mallory as owner gets nothing from the peers either.
    let forged = PeerList::signed(
        &mallory,
        list.params,
        list.commitment.clone(),
        Vec::new(),
        list.records.clone(),
        &mut r,
    )
    .unwrap();
    assert!(matches!(recover(&forged, &mut b, &mallory, &mut r), Err(RecoveryError::RecoveryFailed { valid_shards: 0, .. })));
}

#[test]
fn rotation_moves_every_shard() {
    let (dir, old, master, list, states) = distributed(9, 4, 2, 4);
    let store = Store::open(dir.path()).unwrap();
    let mut b = rebuild(&store, states, |_| Behavior::Honest);
    let mut r = rng(90);
    let new = generate_keypair(&mut r);
    let out = update_owner_pk(&list, &old, &new, &mut b, &mut r).unwrap();
    assert_eq!(out.rebound.len(), 4);
    assert!(out.unreachable.is_empty());
    assert_eq!(out.peer_list.owner_pk, new.public());
    assert_eq!(out.peer_list.key_history, vec![old.public()]);
    assert!(out.peer_list.verify());
    assert_eq!(recover(&out.peer_list, &mut b, &new, &mut r).unwrap(), master);

    // Old key: zero peers still answer.
    assert!(recover(&list, &mut b, &old, &mut r).is_err());
    for p in b.peers() {
        assert!(p.state.records.contains_key(&new.public()));
        assert!(!p.state.records.contains_key(&old.public()));
    }

    // A second rotation keeps the whole history acceptable.
    let newer = generate_keypair(&mut r);
    let out2 = update_owner_pk(&out.peer_list, &new, &newer, &mut b, &mut r).unwrap();
    assert_eq!(out2.peer_list.key_history, vec![old.public(), new.public()]);
    assert_eq!(recover(&out2.peer_list, &mut b, &newer, &mut r).unwrap(), master);
}

#[test]
fn rotation_reports_unreachable_peers() {
    let (dir, old, master, list, states) = distributed(10, 4, 2, 4);
    let store = Store::open(dir.path()).unwrap();
    let down = list.records[3].0;
    let mut b = rebuild(&store, states, |pk| if *pk == down { Behavior::Unresponsive } else { Behavior::Honest });
    let mut r = rng(100);
    let new = generate_keypair(&mut r);
    let out = update_owner_pk(&list, &old, &new, &mut b, &mut r).unwrap();
    assert_eq!(out.unreachable, vec![down]);
    assert_eq!(recover(&out.peer_list, &mut b, &new, &mut r).unwrap(), master);
}

#[test]
fn rotation_signed_by_third_key_is_refused() {
    let (dir, old, master, list, states) = distributed(11, 3, 2, 3);
    let store = Store::open(dir.path()).unwrap();
    let mut b = rebuild(&store, states, |_| Behavior::Honest);
    let mut r = rng(110);
    let third = generate_keypair(&mut r);
    let new = generate_keypair(&mut r);
    assert!(matches!(update_owner_pk(&list, &third, &new, &mut b, &mut r), Err(RecoveryError::InvalidPeerList)));
    // Pushing a rebind endorsed by the wrong key directly: every peer refuses.
    let bogus = rebind_endorsement(&third, &new.public(), &mut r);
    let (ok, refused) = push_rebind(&list, &new, &old.public(), &new.public(), &bogus, &mut b);
    assert!(ok.is_empty());
    assert_eq!(refused.len(), 3);
    for p in b.peers() {
        assert!(p.state.records.contains_key(&old.public()));
    }
    assert_eq!(recover(&list, &mut b, &old, &mut r).unwrap(), master);
}

#[test]
fn escrow_threshold_and_tamper() {
    let (dir, _, master, list, states) = distributed(12, 5, 3, 5);
    let store = Store::open(dir.path()).unwrap();
    let blobs: Vec<String> = states.iter().map(|s| s.escrow_export(&list.owner_pk, &store).unwrap()).collect();
    assert!(blobs.iter().all(|b| b.chars().all(|c| c.is_ascii_graphic())));
    assert_eq!(escrow_join(&blobs[..3], &list).unwrap(), master);
    assert!(matches!(escrow_join(&blobs[..2], &list), Err(RecoveryError::EscrowJoinFailed { valid_shards: 2, needed: 3 })));

    let mut tampered = blobs[..3].to_vec();
    let mut raw = base64_decode(&tampered[0]);
    raw[8] ^= 1;
    tampered[0] = base64_encode(&raw);
    assert!(matches!(escrow_join(&tampered, &list), Err(RecoveryError::EscrowJoinFailed { valid_shards: 2, .. })));
    tampered.push(blobs[4].clone());
    assert_eq!(escrow_join(&tampered, &list).unwrap(), master);
    // Duplicates do not count twice.
    let dup = vec![blobs[0].clone(), blobs[0].clone(), blobs[1].clone()];
    assert!(escrow_join(&dup, &list).is_err());
}

fn base64_decode(s: &str) -> Vec<u8> {
    use base64::Engine;
    base64::engine::general_purpose::STANDARD.decode(s).unwrap()
}

fn base64_encode(b: &[u8]) -> String {
    use base64::Engine;
    base64::engine::general_purpose::STANDARD.encode(b)
}

#[test]
fn only_confirmed_peers_receive_offers() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    for seed in 0..30u64 {
        let mut r = rng(1000 + seed);
        let owner = generate_keypair(&mut r);
        let master = MasterKey::generate(&mut r);
        let behaviors: Vec<Behavior> =
            (0..8).map(|i| if (seed + i) % 4 == 0 { Behavior::NeverAcks } else { Behavior::Honest }).collect();
        let mut b = bus(&store, &behaviors, &mut r);
        let mut accepted = BTreeSet::new();
        let mut flip = seed;
        let _ = distribute(
            &master,
            ThresholdParams::new(3, 2).unwrap(),
            &mut b,
            &mut |info| {
                flip = flip.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let yes = flip >> 63 == 1;
                if yes {
                    accepted.insert(info.pk);
                }
                yes
            },
            &owner,
            &store,
            &mut r,
        );
        for p in b.peers() {
            if !p.offers_from.is_empty() {
                assert!(accepted.contains(&p.state.public()), "offer sent to unconfirmed peer");
            }
        }
    }
}

#[test]
fn store_never_sees_raw_shards_or_secret() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let mut r = rng(13);
    let owner = generate_keypair(&mut r);
    let master = MasterKey::generate(&mut r);
    let mut b = bus(&store, &[Behavior::Honest; 4], &mut r);
    let (list, _) =
        distribute(&master, ThresholdParams::new(4, 2).unwrap(), &mut b, &mut accept_all, &owner, &store, &mut r)
            .unwrap();
    let new = generate_keypair(&mut r);
    update_owner_pk(&list, &owner, &new, &mut b, &mut r).unwrap();
    password_backup(&master, "correct horse battery", KdfParams { iterations: 10_000 }, &store, &mut r).unwrap();

    let mut needles: Vec<Vec<u8>> = vec![master.as_bytes().to_vec(), b"correct horse battery".to_vec()];
    for p in b.peers() {
        let env = p.state.held_envelope(&new.public(), &store).unwrap();
        needles.push(env.shard.value().to_vec());
        needles.push(p.state.master_key().as_bytes().to_vec());
    }
    let haystack: Vec<u8> = walk(dir.path()).into_iter().flat_map(|p| std::fs::read(p).unwrap()).collect();
    for n in &needles {
        assert!(!haystack.windows(n.len()).any(|w| w == &n[..]));
    }
}

fn walk(p: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(p).unwrap() {
        let path = e.unwrap().path();
        if path.is_dir() {
            out.extend(walk(&path));
        } else {
            out.push(path);
        }
    }
    out
}

#[test]
fn loopback_tcp_split_and_recover() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(Store::open(dir.path()).unwrap());
    let mut r = rng(14);
    let mut servers = Vec::new();
    let mut addrs = Vec::new();
    for i in 0..3 {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let state = Arc::new(Mutex::new(peer(i, &mut r)));
        let server = PeerServer::spawn(listener, state, Arc::clone(&store), Arc::new(|_: &PeerState| {})).unwrap();
        addrs.push(server.addr());
        servers.push(server);
    }
    let owner = generate_keypair(&mut r);
    let master = MasterKey::generate(&mut r);
    let mut t = TcpTransport::new(addrs, Duration::from_secs(5));
    assert_eq!(t.discover().unwrap().len(), 3);
    let (list, _) =
        distribute(&master, ThresholdParams::new(3, 2).unwrap(), &mut t, &mut accept_all, &owner, &store, &mut r)
            .unwrap();
    servers.pop().unwrap().shutdown();
    let mut t2 = TcpTransport::new(servers.iter().map(|s| s.addr()).collect(), Duration::from_secs(5));
    assert_eq!(recover(&list, &mut t2, &owner, &mut r).unwrap(), master);
    for s in servers {
        s.shutdown();
    }
}
