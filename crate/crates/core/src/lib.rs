//! Uplink MIMO rate-splitting multiple access under finite-blocklength
//! constraints.
//!
//! The crate is split along the processing chain:
//!
//! - [`model`]: system configuration, Rayleigh channel draws and SIC decoding
//!   orders.
//! - [`scheme`]: the multiple-access strategies (RSMA, NOMA, SDMA) behind a
//!   common trait, looked up by name.
//! - [`fbl`]: per-stream SINR, normal-approximation rates, MMSE combiners.
//! - [`conic`]: a small conic program IR with an interior-point solver for
//!   nonnegative, second-order and exponential cones.
//! - [`sca`]: max-min fair precoder/combiner design by alternating
//!   successive convex approximation.
//! - [`phy`]: polar-coded QAM link-level simulation with MMSE-SIC reception.
//! - [`harness`]: seeded Monte-Carlo sweeps and result aggregation.

pub mod conic;
pub mod error;
pub mod fbl;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod phy;
pub mod sca;
pub mod scheme;

pub use error::{Error, Result};
pub use model::{
    ChannelRealization, DecodingOrder, NoiseNorm, SchemeKind, StreamAddress, SymbolPart,
    SymbolVectorId, SystemConfig,
};
