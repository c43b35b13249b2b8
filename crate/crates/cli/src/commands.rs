use std::fs;
use std::io::{self, Write};
use std::net::{SocketAddr, TcpListener, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use e2ee_core::crypto::{generate_keypair, KdfParams, KeyPair, MasterKey, PublicKey};
use e2ee_core::file_format::{self, Access, EncryptedFile, FileError, OwnerKeys, Permission};
use e2ee_core::freshness::{update_tree, verify_tree, OwnerHeaders};
use e2ee_core::recovery::sim::{Behavior, SimBus};
use e2ee_core::recovery::tcp::{PeerServer, TcpTransport};
use e2ee_core::recovery::{
    distribute, escrow_join, password_backup, password_restore, recover, update_owner_pk, PeerInfo, PeerList,
    PeerState, Transport,
};
use e2ee_core::sharing::ThresholdParams;
use e2ee_core::store::{now_secs, BlobId, BlobKind, Store};
use e2ee_core::ticket::ShareTicket;
use rand::rngs::OsRng;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Kind, Result};
use crate::profile::{passphrase, Contact, Input, Profile, PublicPart};
use crate::{Cli, Command, ContactCmd, EscrowCmd, FhfCmd, SecretCmd, TransportArgs, TransportKind};

const PEERS_ENV: &str = "E2EE_PEERS";

struct Ctx {
    profile_dir: PathBuf,
    store_flag: Option<PathBuf>,
    input: Input,
}

impl Ctx {
    fn load(&mut self) -> Result<Profile> {
        if !Profile::exists(&self.profile_dir) {
            return Err(CliError::new(
                Kind::NotFound,
                format!("no profile at {}; run `e2ee init`", self.profile_dir.display()),
            ));
        }
        let pass = passphrase(&mut self.input)?;
        Profile::load(&self.profile_dir, &pass)
    }

    /// Flag/env first, then whatever the profile recorded.
    fn store(&self, public: Option<&PublicPart>) -> Result<Store> {
        let root = self
            .store_flag
            .clone()
            .or_else(|| public.and_then(|p| p.store.clone()))
            .ok_or_else(|| CliError::usage("no store configured: pass --store or set E2EE_STORE"))?;
        Ok(Store::open(root)?)
    }
}

fn default_profile_dir() -> PathBuf {
    std::env::var_os("HOME").map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".")).join(".e2ee")
}

pub fn run(cli: Cli) -> Result<()> {
    let mut ctx = Ctx {
        profile_dir: cli.profile.unwrap_or_else(default_profile_dir),
        store_flag: cli.store,
        input: Input::new(),
    };
    match cli.command {
        Command::Init { name, email, kdf_iterations } => init(&mut ctx, name, email, kdf_iterations),
        Command::Keygen { force } => keygen(&mut ctx, force),
        Command::Whoami => {
            let p = ctx.load()?;
            println!("{}", p.identity()?.public());
            Ok(())
        }
        Command::Contact(ContactCmd::Add { name, pk }) => {
            let mut p = ctx.load()?;
            let pk = PublicKey::from_hex(&pk).map_err(|_| CliError::usage("public key must be 64 hex characters"))?;
            p.public.contacts.retain(|c| c.name != name);
            p.public.contacts.push(Contact { name, pk });
            p.save()
        }
        Command::Contact(ContactCmd::List) => {
            let p = ctx.load()?;
            for c in &p.public.contacts {
                println!("{}\t{}", c.name, c.pk);
            }
            Ok(())
        }
        Command::Encrypt { path, out } => encrypt(&mut ctx, &path, out.as_deref()),
        Command::Decrypt { target, out } => decrypt(&mut ctx, &target, out.as_deref()),
        Command::Share { blob_id, contact, write } => share(&mut ctx, &blob_id, &contact, write),
        Command::Write { target, path } => write_cmd(&mut ctx, &target, &path),
        Command::Revoke { blob_id, contact } => revoke(&mut ctx, &blob_id, &contact),
        Command::Link { blob_id, expires_in } => {
            let store = ctx.store(Profile::read_public(&ctx.profile_dir).as_ref())?;
            let token = store.create_link(&parse_id(&blob_id)?, expires_in.map(|s| now_secs() + s))?;
            println!("{}", token.token);
            Ok(())
        }
        Command::FetchLink { token, ticket, out } => fetch_link(&mut ctx, &token, ticket.as_deref(), out.as_deref()),
        Command::Secret(cmd) => secret(&mut ctx, cmd),
        Command::Escrow(cmd) => escrow(&mut ctx, cmd),
        Command::Fhf(cmd) => fhf(&mut ctx, cmd),
        Command::Peerd { listen } => peerd(&mut ctx, &listen),
    }
}

fn parse_id(s: &str) -> Result<BlobId> {
    BlobId::parse(s.trim()).map_err(|_| CliError::usage(format!("not a blob id: {s:?}")))
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes)?,
        None => io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn init(ctx: &mut Ctx, name: String, email: String, iterations: u32) -> Result<()> {
    if Profile::exists(&ctx.profile_dir) {
        return Err(CliError::general(format!("profile already exists at {}", ctx.profile_dir.display())));
    }
    let pass = passphrase(&mut ctx.input)?;
    let mut p = Profile::create(&ctx.profile_dir, &pass, KdfParams { iterations })?;
    let kp = generate_keypair(&mut OsRng);
    p.public.name = if name.is_empty() { format!("user-{}", &kp.public().to_hex()[..8]) } else { name };
    p.public.email = email;
    p.public.identity = Some(kp.public());
    p.public.store = ctx.store_flag.clone().map(|s| std::path::absolute(&s).unwrap_or(s));
    p.identity = Some(kp);
    p.master_key = Some(MasterKey::generate(&mut OsRng));
    p.save()?;
    println!("{}", p.identity()?.public());
    Ok(())
}

fn keygen(ctx: &mut Ctx, force: bool) -> Result<()> {
    let mut p = ctx.load()?;
    if p.public.peer_list_id.is_some() && !force {
        return Err(CliError::usage("shards are bound to the current key; use `secret rebind` or pass --force"));
    }
    let kp = generate_keypair(&mut OsRng);
    if let Some(old) = p.identity.replace(kp) {
        p.public.previous_identities.push(old.public());
        p.previous.push(old);
    }
    p.public.identity = Some(p.identity()?.public());
    p.save()?;
    println!("{}", p.identity()?.public());
    Ok(())
}

enum Target {
    Blob(BlobId),
    Ticket(ShareTicket),
}

fn parse_target(s: &str) -> Result<Target> {
    let s = s.trim();
    if let Ok(id) = BlobId::parse(s) {
        return Ok(Target::Blob(id));
    }
    ShareTicket::decode(s)
        .map(Target::Ticket)
        .map_err(|_| CliError::usage(format!("{s:?} is neither a blob id nor a share ticket")))
}

fn target_id(t: &Target) -> &BlobId {
    match t {
        Target::Blob(id) => id,
        Target::Ticket(t) => &t.blob_id,
    }
}

fn owned_by<'p>(p: &'p Profile, pk: &PublicKey) -> Option<&'p KeyPair> {
    p.all_identities().into_iter().find(|k| k.public() == *pk)
}

/// Tries every identity this profile has ever used; returns the first
/// access that opens a header block along with the result of `op`.
fn with_access<T>(
    p: &Profile,
    ticket: Option<&ShareTicket>,
    mut op: impl FnMut(&Access<'_>) -> std::result::Result<T, FileError>,
) -> Result<T> {
    let mut accesses = Vec::new();
    match ticket {
        Some(t) if owned_by(p, &t.owner_pk).is_none() => {
            for kp in p.all_identities() {
                accesses.push(Access::Grantee { keypair: kp, owner_pk: t.owner_pk });
            }
        }
        _ => {
            let master = p.master()?;
            for kp in p.all_identities() {
                accesses.push(Access::Owner { master_key: master, owner_pk: kp.public() });
            }
        }
    }
    for access in &accesses {
        match op(access) {
            Err(FileError::NotAuthorized) => continue,
            other => return Ok(other?),
        }
    }
    Err(FileError::NotAuthorized.into())
}

fn owner_of<'p>(p: &'p Profile, file: &EncryptedFile) -> Result<OwnerKeys<'p>> {
    let master = p.master()?;
    for kp in p.all_identities() {
        if file.header(&Access::Owner { master_key: master, owner_pk: kp.public() }).is_ok() {
            return Ok(OwnerKeys { keypair: kp, master_key: master });
        }
    }
    Err(CliError::new(Kind::Auth, "this profile does not own that file"))
}

fn fetch_file(store: &Store, id: &BlobId) -> Result<EncryptedFile> {
    Ok(EncryptedFile::parse(&store.get(id)?)?)
}

fn encrypt(ctx: &mut Ctx, path: &Path, out: Option<&Path>) -> Result<()> {
    let p = ctx.load()?;
    let store = ctx.store(Some(&p.public))?;
    let content = fs::read(path)?;
    let owner = OwnerKeys { keypair: p.identity()?, master_key: p.master()? };
    let file = file_format::create_encrypted_file(&content, owner, &mut OsRng)?;
    let id = store.put(BlobKind::File, file.as_bytes())?;
    if let Some(out) = out {
        fs::write(out, file.as_bytes())?;
    }
    println!("{id}");
    Ok(())
}

fn decrypt(ctx: &mut Ctx, target: &str, out: Option<&Path>) -> Result<()> {
    let target = parse_target(target)?;
    let p = ctx.load()?;
    let store = ctx.store(Some(&p.public))?;
    let file = fetch_file(&store, target_id(&target))?;
    let ticket = match &target {
        Target::Ticket(t) => Some(t),
        Target::Blob(_) => None,
    };
    let (content, _) = with_access(&p, ticket, |a| file_format::read(&file, a))?;
    emit(out, &content)
}

fn share(ctx: &mut Ctx, blob_id: &str, contact: &str, write: bool) -> Result<()> {
    let id = parse_id(blob_id)?;
    let p = ctx.load()?;
    let store = ctx.store(Some(&p.public))?;
    let grantee = p.contact(contact)?;
    let file = fetch_file(&store, &id)?;
    let owner = owner_of(&p, &file)?;
    let perm = if write { Permission::ReadWrite } else { Permission::Read };
    let updated = file_format::grant(&file, owner, &p.contact_keys(), &grantee, perm, &mut OsRng)?;
    store.replace(&id, updated.as_bytes())?;
    println!("{}", ShareTicket { blob_id: id, owner_pk: owner.keypair.public() }.encode());
    Ok(())
}

fn write_cmd(ctx: &mut Ctx, target: &str, path: &Path) -> Result<()> {
    let target = parse_target(target)?;
    let p = ctx.load()?;
    let store = ctx.store(Some(&p.public))?;
    let content = fs::read(path)?;
    let id = target_id(&target).clone();
    let file = fetch_file(&store, &id)?;
    let ticket = match &target {
        Target::Ticket(t) => Some(t),
        Target::Blob(_) => None,
    };
    let updated = with_access(&p, ticket, |a| file_format::write(&file, a, &content, &mut OsRng))?;
    store.replace(&id, updated.as_bytes())?;
    Ok(())
}

fn revoke(ctx: &mut Ctx, blob_id: &str, contact: &str) -> Result<()> {
    let id = parse_id(blob_id)?;
    let p = ctx.load()?;
    let store = ctx.store(Some(&p.public))?;
    let revoked = p.contact(contact)?;
    let file = fetch_file(&store, &id)?;
    let owner = owner_of(&p, &file)?;
    let updated = file_format::revoke(&file, owner, &p.contact_keys(), &revoked, &mut OsRng)?;
    store.replace(&id, updated.as_bytes())?;
    Ok(())
}

fn fetch_link(ctx: &mut Ctx, token: &str, ticket: Option<&str>, out: Option<&Path>) -> Result<()> {
    let store = ctx.store(Profile::read_public(&ctx.profile_dir).as_ref())?;
    let bytes = store.resolve_link(token.trim())?;
    let Some(ticket) = ticket else {
        return emit(out, &bytes);
    };
    let ticket = ShareTicket::decode(ticket).map_err(|e| CliError::usage(e.to_string()))?;
    let p = ctx.load()?;
    let file = EncryptedFile::parse(&bytes)?;
    let (content, _) = with_access(&p, Some(&ticket), |a| file_format::read(&file, a))?;
    emit(out, &content)
}

fn secret(ctx: &mut Ctx, cmd: SecretCmd) -> Result<()> {
    match cmd {
        SecretCmd::Backup { password, kdf_iterations } => {
            let mut p = ctx.load()?;
            let store = ctx.store(Some(&p.public))?;
            let params = KdfParams { iterations: kdf_iterations };
            let id = password_backup(p.master()?, &password, params, &store, &mut OsRng)?;
            if let Some(old) = p.public.envelope_id.replace(id.clone()) {
                let _ = store.delete(&old);
            }
            p.save()?;
            println!("{id}");
            Ok(())
        }
        SecretCmd::Restore { password, id } => {
            let mut p = ctx.load()?;
            let store = ctx.store(Some(&p.public))?;
            let id = match id {
                Some(s) => parse_id(&s)?,
                None => p
                    .public
                    .envelope_id
                    .clone()
                    .ok_or_else(|| CliError::new(Kind::NotFound, "no password backup recorded; pass --id"))?,
            };
            p.master_key = Some(password_restore(&store, &id, &password)?);
            p.public.master_lost = false;
            p.save()?;
            eprintln!("master key restored");
            Ok(())
        }
        SecretCmd::Split { n, k, transport, sim_peers, yes_all, insecure_test } => {
            if k > n {
                return Err(CliError::usage(format!("--k must be in [1, n] = [1, {n}], got {k}")));
            }
            let params = ThresholdParams::new(n as usize, k as usize)?;
            split(ctx, params, transport, sim_peers, yes_all && insecure_test)
        }
        SecretCmd::Recover { transport, peer_list } => recover_cmd(ctx, transport, peer_list),
        SecretCmd::Rebind { transport } => rebind(ctx, transport),
        SecretCmd::Forget => {
            let mut p = ctx.load()?;
            p.master_key = None;
            p.public.master_lost = true;
            p.save()?;
            eprintln!("local master key removed");
            Ok(())
        }
    }
}

fn endpoints(args: &TransportArgs, p: &Profile) -> Result<Vec<SocketAddr>> {
    let raw: Vec<String> = if !args.peers.is_empty() {
        args.peers.clone()
    } else if let Ok(env) = std::env::var(PEERS_ENV) {
        env.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
    } else {
        p.public.peer_endpoints.clone()
    };
    if raw.is_empty() {
        return Err(CliError::usage(format!("tcp transport needs --peer endpoints (or {PEERS_ENV})")));
    }
    let mut out = Vec::new();
    for s in raw {
        let addr = s
            .to_socket_addrs()
            .ok()
            .and_then(|mut a| a.next())
            .ok_or_else(|| CliError::usage(format!("bad peer endpoint {s:?}")))?;
        out.push(addr);
    }
    Ok(out)
}

/// Runs `f` over the selected transport. Simulated peers live in the
/// profile and are written back afterwards.
fn with_transport<T>(
    p: &mut Profile,
    store: &Store,
    args: &TransportArgs,
    sim_count: usize,
    f: impl FnOnce(&mut dyn Transport, &Profile) -> Result<T>,
) -> Result<T> {
    match args.transport {
        TransportKind::Tcp => {
            let eps = endpoints(args, p)?;
            let mut t = TcpTransport::new(eps.clone(), Duration::from_secs(args.timeout));
            let out = f(&mut t, p)?;
            p.public.peer_endpoints = eps.iter().map(|a| a.to_string()).collect();
            Ok(out)
        }
        TransportKind::Sim => {
            while p.sim_peers.len() < sim_count {
                let i = p.sim_peers.len() + 1;
                let state = PeerState::new(
                    generate_keypair(&mut OsRng),
                    MasterKey::generate(&mut OsRng),
                    &format!("Sim Peer {i}"),
                    &format!("sim-peer-{i}@peers.invalid"),
                )?;
                p.sim_peers.push(state);
            }
            let mut bus = SimBus::new(store);
            for s in std::mem::take(&mut p.sim_peers) {
                bus.add_peer(s, Behavior::Honest);
            }
            let out = f(&mut bus, p);
            p.sim_peers = bus.into_peers().into_iter().map(|sp| sp.state).collect();
            out
        }
    }
}

fn split(
    ctx: &mut Ctx,
    params: ThresholdParams,
    args: TransportArgs,
    sim_peers: Option<usize>,
    yes_all: bool,
) -> Result<()> {
    let mut p = ctx.load()?;
    let store = ctx.store(Some(&p.public))?;
    let sim_count = sim_peers.unwrap_or(params.n() + 2);
    let input = &mut ctx.input;
    let result = with_transport(&mut p, &store, &args, sim_count, |t, p| {
        let mut confirm = |info: &PeerInfo| -> bool {
            if yes_all {
                return true;
            }
            let q = format!("send shard to {} [{}]? [y/N] ", info.display(), &info.pk.to_hex()[..16]);
            matches!(input.prompt(&q), Ok(Some(a)) if matches!(a.trim().to_ascii_lowercase().as_str(), "y" | "yes"))
        };
        Ok(distribute(p.master()?, params, t, &mut confirm, p.identity()?, &store, &mut OsRng)?)
    });
    let (list, id) = match result {
        Ok(v) => v,
        Err(e) => {
            // Sim peers may have accepted shards; keep their state consistent.
            p.save()?;
            return Err(e);
        }
    };
    if let Some(old) = p.public.peer_list_id.replace(id.clone()) {
        let _ = store.delete(&old);
    }
    p.save()?;
    for (pk, index) in &list.records {
        eprintln!("shard {index} -> {pk}");
    }
    println!("{id}");
    Ok(())
}

fn load_peer_list(store: &Store, id: &BlobId) -> Result<PeerList> {
    PeerList::from_bytes(&store.get(id)?).map_err(|e| CliError::general(format!("peer list: {e}")))
}

fn peer_list_id(p: Option<&PublicPart>, flag: Option<String>) -> Result<BlobId> {
    match flag {
        Some(s) => parse_id(&s),
        None => p
            .and_then(|p| p.peer_list_id.clone())
            .ok_or_else(|| CliError::new(Kind::NotFound, "no peer list recorded; pass --peer-list")),
    }
}

fn recover_cmd(ctx: &mut Ctx, args: TransportArgs, flag: Option<String>) -> Result<()> {
    let mut p = ctx.load()?;
    let store = ctx.store(Some(&p.public))?;
    let list = load_peer_list(&store, &peer_list_id(Some(&p.public), flag)?)?;
    let sim_count = p.sim_peers.len();
    let master =
        with_transport(&mut p, &store, &args, sim_count, |t, p| Ok(recover(&list, t, p.identity()?, &mut OsRng)?))?;
    p.master_key = Some(master);
    p.public.master_lost = false;
    p.save()?;
    eprintln!("master key recovered");
    Ok(())
}

fn rebind(ctx: &mut Ctx, args: TransportArgs) -> Result<()> {
    let mut p = ctx.load()?;
    let store = ctx.store(Some(&p.public))?;
    let old_id = peer_list_id(Some(&p.public), None)?;
    let list = load_peer_list(&store, &old_id)?;
    let new = generate_keypair(&mut OsRng);
    let sim_count = p.sim_peers.len();
    let outcome =
        with_transport(&mut p, &store, &args, sim_count, |t, p| Ok(update_owner_pk(&list, p.identity()?, &new, t, &mut OsRng)?));
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            p.save()?;
            return Err(e);
        }
    };
    let new_id = store.put(BlobKind::PeerList, &outcome.peer_list.to_bytes())?;
    let old = p.identity.replace(new).expect("identity checked above");
    p.public.previous_identities.push(old.public());
    p.previous.push(old);
    p.public.identity = Some(p.identity()?.public());
    p.public.peer_list_id = Some(new_id.clone());
    p.save()?;
    let _ = store.delete(&old_id);
    for pk in &outcome.unreachable {
        eprintln!("unreachable: {pk}");
    }
    eprintln!("rebound {} of {} peers", outcome.rebound.len(), list.records.len());
    println!("{}", p.identity()?.public());
    Ok(())
}

fn fingerprint(master: &MasterKey) -> String {
    hex::encode(&Sha256::digest(master.as_bytes())[..8])
}

fn escrow(ctx: &mut Ctx, cmd: EscrowCmd) -> Result<()> {
    match cmd {
        EscrowCmd::Export { owner, sim_peer } => {
            let p = ctx.load()?;
            let store = ctx.store(Some(&p.public))?;
            let owner_pk = p.contact(&owner)?;
            let blob = match sim_peer {
                Some(i) => p
                    .sim_peers
                    .get(i)
                    .ok_or_else(|| CliError::new(Kind::NotFound, format!("no simulated peer {i}")))?
                    .escrow_export(&owner_pk, &store)?,
                None => p.peer_state()?.escrow_export(&owner_pk, &store)?,
            };
            println!("{blob}");
            Ok(())
        }
        EscrowCmd::Join { blobs, peer_list, reveal, install } => {
            let public = Profile::read_public(&ctx.profile_dir);
            let store = ctx.store(public.as_ref())?;
            let list = load_peer_list(&store, &peer_list_id(public.as_ref(), peer_list)?)?;
            let master = escrow_join(&blobs, &list)?;
            println!("joined secret matches commitment; fingerprint {}", fingerprint(&master));
            if reveal {
                println!("{}", hex::encode(master.as_bytes()));
            }
            if install {
                let mut p = ctx.load()?;
                p.master_key = Some(master);
                p.public.master_lost = false;
                p.save()?;
            }
            Ok(())
        }
    }
}

fn fhf(ctx: &mut Ctx, cmd: FhfCmd) -> Result<()> {
    let p = ctx.load()?;
    let extractor = OwnerHeaders {
        master_key: p.master()?,
        owners: p.all_identities().into_iter().map(|k| k.public()).collect(),
    };
    match cmd {
        FhfCmd::Update { dir, interval, now } => {
            let updated = update_tree(&dir, p.master()?, now.unwrap_or_else(now_secs), interval, &extractor)?;
            for d in &updated {
                println!("stamped {}", d.display());
            }
            Ok(())
        }
        FhfCmd::Verify { dir, max_age, now } => {
            let violations = verify_tree(&dir, p.master()?, max_age, now.unwrap_or_else(now_secs), &extractor)?;
            for v in &violations {
                println!("{:?}\t{}", v.kind, v.path.display());
            }
            if violations.is_empty() {
                Ok(())
            } else {
                Err(CliError::new(Kind::Violations, format!("{} freshness violation(s)", violations.len())))
            }
        }
    }
}

fn peerd(ctx: &mut Ctx, listen: &str) -> Result<()> {
    let p = ctx.load()?;
    let store = Arc::new(ctx.store(Some(&p.public))?);
    let state = Arc::new(Mutex::new(p.peer_state()?));
    let listener = TcpListener::bind(listen).map_err(|e| CliError::usage(format!("cannot listen on {listen}: {e}")))?;
    let profile = Mutex::new(p);
    let on_change = Arc::new(move |st: &PeerState| {
        let mut p = profile.lock().unwrap();
        let records: Vec<_> = st.records.iter().map(|(k, v)| (*k, v.clone())).collect();
        if records != p.public.peer_records {
            p.public.peer_records = records;
            if let Err(e) = p.save() {
                eprintln!("{e}");
            }
        }
    });
    let server = PeerServer::spawn(listener, state, store, on_change)?;
    println!("listening on {}", server.addr());
    io::stdout().flush()?;
    server.wait();
    Ok(())
}
