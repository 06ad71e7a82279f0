//! Permutation matrix modulation (PMM) over MIMO channels.
//!
//! Information is carried both by PSK symbols and by the order in which a
//! fixed set of distinct power levels is assigned to the transmit antennas.
//! The crate covers the full link: bit mapping, precoding, Rayleigh channels,
//! Gaussian-mixture achievable rates, power optimization, ML and ZF
//! detection, flop counts and a reproducible Monte Carlo harness.

pub mod channel;
pub mod cli;
pub mod codec;
pub mod detect;
pub mod error;
pub mod gmm;
pub mod harness;
pub mod linalg;
pub mod optpower;
pub mod rate;
pub mod types;

pub use error::{Error, Result};
pub use types::{ChannelRealization, Constellation, Permutation, PowerAllocation};
