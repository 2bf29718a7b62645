//! DTLS handshake fingerprinting pipeline.
//!
//! The crate covers the full path from packet captures to countermeasure
//! evaluation: classic-pcap reading and flow grouping, a bit-exact DTLS
//! record/handshake codec, hello feature extraction with one-hot
//! encoding, a from-scratch random forest, stratified cross-validation
//! with an identifier search, mimicry transforms over Snowflake
//! handshakes, and a deterministic synthetic-capture generator.

pub mod capture;
pub mod dtls;
pub mod error;
pub mod eval;
pub mod features;
pub mod forest;
pub mod handshake;
pub mod ingest;
pub mod mimicry;
pub mod pcap;
pub mod rng;
pub mod synth;

pub use error::{CodecError, Error, Result};
pub use ingest::{App, Browser};
