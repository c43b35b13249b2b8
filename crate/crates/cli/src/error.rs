use std::fmt;

use e2ee_core::crypto::CryptoError;
use e2ee_core::file_format::FileError;
use e2ee_core::freshness::FreshnessError;
use e2ee_core::recovery::RecoveryError;
use e2ee_core::sharing::SharingError;
use e2ee_core::store::StoreError;

/// Stable process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    General = 1,
    Usage = 2,
    Auth = 3,
    NotFound = 4,
    Violations = 5,
}

impl Kind {
    fn label(self) -> &'static str {
        match self {
            Kind::General => "error",
            Kind::Usage => "usage",
            Kind::Auth => "auth",
            Kind::NotFound => "not-found",
            Kind::Violations => "violations",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        CliError { kind, message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(Kind::Usage, message)
    }

    pub fn general(message: impl Into<String>) -> Self {
        Self::new(Kind::General, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Single line, always: newlines in wrapped messages are flattened.
        write!(f, "error[{}]: {}", self.kind.label(), self.message.replace('\n', " "))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        let kind = if e.kind() == std::io::ErrorKind::NotFound { Kind::NotFound } else { Kind::General };
        CliError::new(kind, e.to_string())
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        let kind = match e {
            StoreError::NotFound => Kind::NotFound,
            StoreError::InvalidId(_) => Kind::Usage,
            _ => Kind::General,
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<CryptoError> for CliError {
    fn from(e: CryptoError) -> Self {
        let kind = match e {
            CryptoError::AuthenticationFailed => Kind::Auth,
            CryptoError::EmptyPassword | CryptoError::WeakKdfParams { .. } => Kind::Usage,
            _ => Kind::General,
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<FileError> for CliError {
    fn from(e: FileError) -> Self {
        let kind = match e {
            FileError::NotAuthorized | FileError::NoWriteCapability | FileError::Integrity(_) | FileError::Tampered => {
                Kind::Auth
            }
            FileError::GranteeNotFound => Kind::NotFound,
            FileError::Crypto(CryptoError::AuthenticationFailed) => Kind::Auth,
            _ => Kind::General,
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<FreshnessError> for CliError {
    fn from(e: FreshnessError) -> Self {
        CliError::general(e.to_string())
    }
}

impl From<SharingError> for CliError {
    fn from(e: SharingError) -> Self {
        let kind = if matches!(e, SharingError::InvalidParams { .. }) { Kind::Usage } else { Kind::General };
        CliError::new(kind, e.to_string())
    }
}

impl From<RecoveryError> for CliError {
    fn from(e: RecoveryError) -> Self {
        let kind = match &e {
            RecoveryError::WrongPassword | RecoveryError::InvalidPeerList => Kind::Auth,
            RecoveryError::MissingBlob | RecoveryError::UnknownOwner => Kind::NotFound,
            RecoveryError::Store(StoreError::NotFound) => Kind::NotFound,
            RecoveryError::Sharing(SharingError::InvalidParams { .. }) => Kind::Usage,
            _ => Kind::General,
        };
        CliError::new(kind, e.to_string())
    }
}
