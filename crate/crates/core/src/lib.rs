pub mod crypto;
pub mod file_format;
pub mod freshness;
pub mod recovery;
pub mod sharing;
pub mod store;
pub mod ticket;
