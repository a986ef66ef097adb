//! Max-min fair resource allocation for IRS-aided uplink rate-splitting
//! multiple access with successive group decoding.

pub mod ao;
pub mod beamform;
pub mod channel;
pub mod config;
pub mod error;
pub mod grouping;
pub mod harness;
pub mod numerics;
pub mod phase;
pub mod power;
pub mod rates;
pub mod rng;

pub use error::{Error, Result};
