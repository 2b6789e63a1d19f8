//! Localized data-driven consensus for leader-follower networks of identical
//! discrete-time linear agents `x(t+1) = A x(t) + B u(t)`.
//!
//! Every follower designs its own gain from locally sampled data. The crate
//! covers topology handling ([`netgraph`]), data collection ([`plant`]),
//! the three synthesis pipelines ([`synth`]) and closed-loop simulation and
//! certification ([`sim`]).

pub mod error;
pub mod fixtures;
pub mod linalg;
pub mod netgraph;
pub mod plant;
pub mod sim;
pub mod synth;

pub use error::{CoreError, Result};
