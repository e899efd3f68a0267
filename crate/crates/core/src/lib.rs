//! Key-rate pipeline for single-photon QKD links: time-tag sifting with
//! temporal filtering, B92 and BB84 finite-key bounds, asymptotic BB84
//! rates with pre-attenuation, rate-vs-loss optimization and a
//! single-node memory-assisted repeater model.

pub mod asymptotic;
pub mod b92;
pub mod bb84;
pub mod error;
pub mod mathkit;
pub mod model;
pub mod optimizer;
pub mod repeater;
pub mod timetag;

pub use error::{Error, Result};
pub use model::{ProtocolInstance, SecurityParams};
