//! `e2ee`: command-line front end for the vault.
//!
//! Exit codes: 0 ok, 1 error, 2 usage, 3 authentication/authorization,
//! 4 not found, 5 freshness violations.

mod commands;
mod error;
mod profile;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{CliError, Kind};

#[derive(Parser)]
#[command(name = "e2ee", version, about = "End-to-end encrypted file vault")]
pub struct Cli {
    /// Profile directory.
    #[arg(long, global = true, env = profile::PROFILE_ENV)]
    profile: Option<PathBuf>,
    /// Store root directory (overrides the profile's setting).
    #[arg(long, global = true, env = e2ee_core::store::STORE_ENV)]
    store: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Create a profile with a fresh identity key and master key.
    Init {
        #[arg(long, default_value = "")]
        name: String,
        #[arg(long, default_value = "")]
        email: String,
        /// PBKDF2 iterations protecting the profile.
        #[arg(long, default_value_t = e2ee_core::crypto::DEFAULT_ITERATIONS)]
        kdf_iterations: u32,
    },
    /// Generate a new identity key, keeping the old one for existing files.
    Keygen {
        /// Replace an existing identity even if shards are bound to it.
        #[arg(long)]
        force: bool,
    },
    /// Print this profile's public key.
    Whoami,
    #[command(subcommand)]
    Contact(ContactCmd),
    /// Encrypt a local file into the store; prints the blob id.
    Encrypt {
        path: PathBuf,
        /// Also write the encrypted container here.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Decrypt a blob id (as owner) or a share ticket (as grantee).
    Decrypt {
        target: String,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Grant a contact access to a file; prints the share ticket.
    Share {
        blob_id: String,
        contact: String,
        #[arg(long)]
        write: bool,
    },
    /// Replace a file's content (owner or read-write grantee).
    Write { target: String, path: PathBuf },
    /// Remove a contact's access and rotate the file keys.
    Revoke { blob_id: String, contact: String },
    /// Create an anonymous link to a blob; prints the token.
    Link {
        blob_id: String,
        #[arg(long)]
        expires_in: Option<u64>,
    },
    /// Fetch a blob through an anonymous link.
    FetchLink {
        token: String,
        /// Decrypt with this share ticket instead of writing ciphertext.
        #[arg(long)]
        ticket: Option<String>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    #[command(subcommand)]
    Secret(SecretCmd),
    #[command(subcommand)]
    Escrow(EscrowCmd),
    #[command(subcommand)]
    Fhf(FhfCmd),
    /// Serve this profile as a recovery peer over TCP.
    Peerd {
        #[arg(long)]
        listen: String,
    },
}

#[derive(Subcommand)]
pub enum ContactCmd {
    Add { name: String, pk: String },
    List,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TransportKind {
    Sim,
    Tcp,
}

#[derive(Args)]
pub struct TransportArgs {
    #[arg(long, value_enum, default_value_t = TransportKind::Sim)]
    pub transport: TransportKind,
    /// Peer endpoint (host:port) for the tcp transport; repeatable.
    #[arg(long = "peer")]
    pub peers: Vec<String>,
    /// Per-connection timeout in seconds.
    #[arg(long, default_value_t = 5)]
    pub timeout: u64,
}

#[derive(Subcommand)]
pub enum SecretCmd {
    /// Store the master key on the server under a password.
    Backup {
        #[arg(long, env = "E2EE_BACKUP_PASSWORD", hide_env_values = true)]
        password: String,
        #[arg(long, default_value_t = e2ee_core::crypto::DEFAULT_ITERATIONS)]
        kdf_iterations: u32,
    },
    /// Restore the master key from the password backup.
    Restore {
        #[arg(long, env = "E2EE_BACKUP_PASSWORD", hide_env_values = true)]
        password: String,
        /// Envelope blob id (defaults to the one recorded at backup).
        #[arg(long)]
        id: Option<String>,
    },
    /// Split the master key across n confirmed peers, any k of which recover it.
    Split {
        #[arg(long, value_parser = clap::value_parser!(u16).range(1..=255))]
        n: u16,
        #[arg(long, value_parser = clap::value_parser!(u16).range(1..=255))]
        k: u16,
        #[command(flatten)]
        transport: TransportArgs,
        /// Number of simulated peers on the sim transport.
        #[arg(long)]
        sim_peers: Option<usize>,
        /// Skip peer confirmation. Test harnesses only.
        #[arg(long, requires = "insecure_test")]
        yes_all: bool,
        #[arg(long, hide = true)]
        insecure_test: bool,
    },
    /// Rebuild the master key from peers.
    Recover {
        #[command(flatten)]
        transport: TransportArgs,
        #[arg(long)]
        peer_list: Option<String>,
    },
    /// Rotate the identity key and rebind every peer's shard to it.
    Rebind {
        #[command(flatten)]
        transport: TransportArgs,
    },
    /// Drop the local copy of the master key.
    Forget,
}

#[derive(Subcommand)]
pub enum EscrowCmd {
    /// Print the shard this profile holds for an owner as a base64 blob.
    Export {
        #[arg(long)]
        owner: String,
        /// Export from a simulated peer (by position) instead of this profile.
        #[arg(long)]
        sim_peer: Option<usize>,
    },
    /// Rejoin exported shards and check them against the peer list commitment.
    Join {
        #[arg(required = true)]
        blobs: Vec<String>,
        #[arg(long)]
        peer_list: Option<String>,
        /// Print the joined secret as hex.
        #[arg(long)]
        reveal: bool,
        /// Install the joined secret as this profile's master key.
        #[arg(long)]
        install: bool,
    },
}

#[derive(Subcommand)]
pub enum FhfCmd {
    /// Restamp every directory whose root changed or whose stamp aged out.
    Update {
        #[arg(long, default_value = ".")]
        dir: PathBuf,
        #[arg(long, env = "E2EE_FHF_INTERVAL", default_value_t = e2ee_core::freshness::DEFAULT_UPDATE_INTERVAL)]
        interval: u64,
        #[arg(long, hide = true)]
        now: Option<u64>,
    },
    /// Check every directory against its stamp.
    Verify {
        #[arg(long, default_value = ".")]
        dir: PathBuf,
        #[arg(long, env = "E2EE_FHF_MAX_AGE", default_value_t = 2 * e2ee_core::freshness::DEFAULT_UPDATE_INTERVAL)]
        max_age: u64,
        #[arg(long, hide = true)]
        now: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion | K::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.render().to_string();
            let first = msg.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            eprintln!("{}", CliError::new(Kind::Usage, first.trim_start_matches("error: ")));
            return ExitCode::from(Kind::Usage as u8);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.kind as u8)
        }
    }
}
