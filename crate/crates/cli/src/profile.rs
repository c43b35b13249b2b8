//! On-disk profile: a JSON file whose public half is readable and whose
//! secret half is an AEAD box under a passphrase-derived key.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use e2ee_core::crypto::{
    aead_open, aead_seal, kdf_password, KdfParams, KeyPair, MasterKey, PublicKey, SealedBox, SymmetricKey, SALT_LEN,
};
use e2ee_core::recovery::{PeerInfo, PeerRecord, PeerState};
use e2ee_core::store::BlobId;
use rand::rngs::OsRng;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use zeroize::Zeroizing;

use crate::error::{CliError, Kind, Result};

pub const PROFILE_ENV: &str = "E2EE_PROFILE";
pub const PASSPHRASE_ENV: &str = "E2EE_PASSPHRASE";
const PROFILE_FILE: &str = "profile.json";
const PROFILE_AAD: &[u8] = b"e2ee-vault/v1/profile";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Contact {
    pub name: String,
    pub pk: PublicKey,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct PublicPart {
    pub name: String,
    pub email: String,
    pub identity: Option<PublicKey>,
    #[serde(default)]
    pub previous_identities: Vec<PublicKey>,
    pub store: Option<PathBuf>,
    #[serde(default)]
    pub contacts: Vec<Contact>,
    /// Shards this profile holds for other owners (it acts as a peer).
    #[serde(default)]
    pub peer_records: Vec<(PublicKey, PeerRecord)>,
    pub envelope_id: Option<BlobId>,
    pub peer_list_id: Option<BlobId>,
    #[serde(default)]
    pub peer_endpoints: Vec<String>,
    #[serde(default)]
    pub master_lost: bool,
}

#[derive(Default, Serialize, Deserialize)]
struct SecretPart {
    identity: Option<String>,
    #[serde(default)]
    previous: Vec<String>,
    master_key: Option<String>,
    #[serde(default)]
    sim_peers: Vec<SimPeerSecret>,
}

#[derive(Serialize, Deserialize)]
struct SimPeerSecret {
    name: String,
    email: String,
    secret: String,
    master_key: String,
    records: Vec<(PublicKey, PeerRecord)>,
}

#[derive(Serialize, Deserialize)]
struct ProfileFile {
    version: u32,
    salt: String,
    iterations: u32,
    public: PublicPart,
    sealed: String,
}

pub struct Profile {
    pub dir: PathBuf,
    pub public: PublicPart,
    pub identity: Option<KeyPair>,
    pub previous: Vec<KeyPair>,
    pub master_key: Option<MasterKey>,
    pub sim_peers: Vec<PeerState>,
    salt: [u8; SALT_LEN],
    params: KdfParams,
    key: SymmetricKey,
}

/// Line source shared by passphrase and confirmation prompts so scripted
/// stdin is consumed in order.
pub struct Input {
    lines: io::Lines<io::StdinLock<'static>>,
}

impl Input {
    pub fn new() -> Self {
        Input { lines: io::stdin().lock().lines() }
    }

    pub fn prompt(&mut self, text: &str) -> Result<Option<String>> {
        eprint!("{text}");
        let _ = io::stderr().flush();
        let line = self.lines.next().transpose()?;
        // Scripted stdin is not echoed; end the prompt line ourselves.
        if !io::stdin().is_terminal() {
            eprintln!();
        }
        Ok(line.map(|l| l.trim_end_matches('\r').to_string()))
    }
}

pub fn passphrase(input: &mut Input) -> Result<Zeroizing<String>> {
    if let Ok(p) = std::env::var(PASSPHRASE_ENV) {
        return Ok(Zeroizing::new(p));
    }
    match input.prompt("profile passphrase: ")? {
        Some(p) if !p.is_empty() => Ok(Zeroizing::new(p)),
        _ => Err(CliError::usage(format!("no passphrase: set {PASSPHRASE_ENV} or pipe it on stdin"))),
    }
}

fn keypair_from_hex(s: &str) -> Result<KeyPair> {
    let bytes = Zeroizing::new(hex::decode(s).map_err(|_| corrupt("bad key encoding"))?);
    let arr: [u8; 32] = bytes.as_slice().try_into().map_err(|_| corrupt("bad key length"))?;
    Ok(KeyPair::from_secret_bytes(arr))
}

fn master_from_hex(s: &str) -> Result<MasterKey> {
    let bytes = Zeroizing::new(hex::decode(s).map_err(|_| corrupt("bad key encoding"))?);
    MasterKey::from_slice(&bytes).map_err(|_| corrupt("bad master key length"))
}

fn corrupt(what: &str) -> CliError {
    CliError::general(format!("profile corrupt: {what}"))
}

impl Profile {
    pub fn path(dir: &Path) -> PathBuf {
        dir.join(PROFILE_FILE)
    }

    pub fn exists(dir: &Path) -> bool {
        Self::path(dir).exists()
    }

    /// The unsealed half, readable without the passphrase.
    pub fn read_public(dir: &Path) -> Option<PublicPart> {
        let raw = fs::read(Self::path(dir)).ok()?;
        serde_json::from_slice::<ProfileFile>(&raw).ok().map(|f| f.public)
    }

    pub fn create(dir: &Path, passphrase: &str, params: KdfParams) -> Result<Self> {
        let mut salt = [0u8; SALT_LEN];
        OsRng.fill_bytes(&mut salt);
        let key = kdf_password(passphrase, &salt, params)?;
        Ok(Profile {
            dir: dir.to_path_buf(),
            public: PublicPart::default(),
            identity: None,
            previous: Vec::new(),
            master_key: None,
            sim_peers: Vec::new(),
            salt,
            params,
            key,
        })
    }

    pub fn load(dir: &Path, passphrase: &str) -> Result<Self> {
        let raw = fs::read(Self::path(dir)).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => {
                CliError::new(Kind::NotFound, format!("no profile at {}; run `e2ee init`", dir.display()))
            }
            _ => e.into(),
        })?;
        let file: ProfileFile = serde_json::from_slice(&raw).map_err(|e| corrupt(&e.to_string()))?;
        let salt: [u8; SALT_LEN] =
            hex::decode(&file.salt).ok().and_then(|s| s.try_into().ok()).ok_or_else(|| corrupt("salt"))?;
        let params = KdfParams { iterations: file.iterations };
        let key = kdf_password(passphrase, &salt, params)?;
        let sealed = SealedBox::from_bytes(&BASE64.decode(&file.sealed).map_err(|_| corrupt("sealed part"))?)?;
        let plain = Zeroizing::new(
            aead_open(&key, &sealed, &Self::aad(&salt, params))
                .map_err(|_| CliError::new(Kind::Auth, "wrong profile passphrase"))?,
        );
        let secrets: SecretPart = serde_json::from_slice(&plain).map_err(|e| corrupt(&e.to_string()))?;

        let identity = secrets.identity.as_deref().map(keypair_from_hex).transpose()?;
        let previous = secrets.previous.iter().map(|s| keypair_from_hex(s)).collect::<Result<_>>()?;
        let master_key = secrets.master_key.as_deref().map(master_from_hex).transpose()?;
        let mut sim_peers = Vec::new();
        for p in &secrets.sim_peers {
            let kp = keypair_from_hex(&p.secret)?;
            let info = PeerInfo::new(kp.public(), p.name.clone(), p.email.clone())?;
            let records: BTreeMap<_, _> = p.records.iter().cloned().collect();
            sim_peers.push(PeerState::from_parts(kp, master_from_hex(&p.master_key)?, info, records)?);
        }
        Ok(Profile { dir: dir.to_path_buf(), public: file.public, identity, previous, master_key, sim_peers, salt, params, key })
    }

    fn aad(salt: &[u8], params: KdfParams) -> Vec<u8> {
        let mut aad = PROFILE_AAD.to_vec();
        aad.extend_from_slice(salt);
        aad.extend_from_slice(&params.to_bytes());
        aad
    }

    pub fn save(&self) -> Result<()> {
        let secrets = SecretPart {
            identity: self.identity.as_ref().map(|k| hex::encode(k.secret_bytes())),
            previous: self.previous.iter().map(|k| hex::encode(k.secret_bytes())).collect(),
            master_key: self.master_key.as_ref().map(|m| hex::encode(m.as_bytes())),
            sim_peers: self
                .sim_peers
                .iter()
                .map(|p| SimPeerSecret {
                    name: p.info().name.clone(),
                    email: p.info().email.clone(),
                    secret: hex::encode(p.keypair().secret_bytes()),
                    master_key: hex::encode(p.master_key().as_bytes()),
                    records: p.records.iter().map(|(k, v)| (*k, v.clone())).collect(),
                })
                .collect(),
        };
        let plain = Zeroizing::new(serde_json::to_vec(&secrets).expect("serializable"));
        let sealed = aead_seal(&self.key, &plain, &Self::aad(&self.salt, self.params), &mut OsRng);
        let file = ProfileFile {
            version: 1,
            salt: hex::encode(self.salt),
            iterations: self.params.iterations,
            public: self.public.clone(),
            sealed: BASE64.encode(sealed.to_bytes()),
        };
        fs::create_dir_all(&self.dir)?;
        let path = Self::path(&self.dir);
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(&file).expect("serializable"))?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    pub fn identity(&self) -> Result<&KeyPair> {
        self.identity.as_ref().ok_or_else(|| CliError::general("profile has no identity key; run `e2ee keygen`"))
    }

    pub fn master(&self) -> Result<&MasterKey> {
        self.master_key.as_ref().ok_or_else(|| {
            CliError::new(Kind::Auth, "master key unavailable; run `e2ee secret restore` or `e2ee secret recover`")
        })
    }

    /// Current identity first, then retired ones.
    pub fn all_identities(&self) -> Vec<&KeyPair> {
        self.identity.iter().chain(self.previous.iter()).collect()
    }

    pub fn contact(&self, name_or_pk: &str) -> Result<PublicKey> {
        if let Some(c) = self.public.contacts.iter().find(|c| c.name == name_or_pk) {
            return Ok(c.pk);
        }
        PublicKey::from_hex(name_or_pk)
            .map_err(|_| CliError::new(Kind::NotFound, format!("unknown contact {name_or_pk:?}")))
    }

    pub fn contact_keys(&self) -> Vec<PublicKey> {
        self.public.contacts.iter().map(|c| c.pk).collect()
    }

    /// This profile acting as a recovery peer for other owners.
    pub fn peer_state(&self) -> Result<PeerState> {
        let kp = self.identity()?;
        let info = PeerInfo::new(kp.public(), self.public.name.clone(), self.public.email.clone())?;
        let records = self.public.peer_records.iter().cloned().collect();
        Ok(PeerState::from_parts(kp.clone(), self.master()?.clone(), info, records)?)
    }
}
