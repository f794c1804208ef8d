//! Simulator for federated edge learning over an analog multiple-access
//! channel.
//!
//! Clients compute local gradients, modulate them onto a shared analog
//! channel, and the server receives the superposed (averaged) signal plus
//! symmetric alpha-stable interference. The crate models that aggregation
//! rule directly in baseband:
//!
//! ```text
//! g_k = (1/N) * sum_n h_{n,k} * grad f_n(w_k)  +  s * xi_k
//! ```
//!
//! where `h_{n,k}` are per-client fading gains, `xi_k` is i.i.d. SaS
//! interference per coordinate, and `s` is the receive-side noise scale
//! (the power-control actuator).
//!
//! Everything is deterministic given an experiment seed: fading, noise,
//! initialization, and sharding each draw from named substreams derived
//! from the seed, so individual components can be toggled without
//! perturbing the others.

pub mod analysis;
pub mod channel;
pub mod data;
pub mod error;
pub mod fl;
pub mod linalg;
pub mod power;
pub mod seed;
pub mod stable;
pub mod suites;
pub mod workloads;

pub use error::{Error, Result};
