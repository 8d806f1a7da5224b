//! Optimal secondary access for a cognitive radio that shares spectrum with
//! an ARQ-based primary user, exploiting primary retransmissions through
//! forward and backward interference cancellation at the secondary receiver.
//!
//! * [`channel`]: outage probabilities and per-slot throughputs under
//!   Rayleigh fading.
//! * [`mdp`]: states, policies, transition rows and renewal-reward policy
//!   evaluation.
//! * [`optimizer`]: access efficiency, the greedy policy path and the optimal
//!   policy under an access-rate budget.
//! * [`degenerate`]: closed forms when the SU does not interfere with the PU.
//! * [`simulator`]: slot-level Monte-Carlo simulation.
//! * [`oracle`]: exhaustive enumeration for small state spaces.
//! * [`experiments`]: rate derivation, comparison schemes and sweeps.

pub mod channel;
pub mod degenerate;
pub mod error;
pub mod experiments;
pub mod mdp;
pub mod optimizer;
pub mod oracle;
pub mod simulator;

pub use channel::{link_stats, LinkStats, SystemParams};
pub use error::{Error, Result};
pub use mdp::{NetState, Policy, PolicyMetrics, StateSpace};
