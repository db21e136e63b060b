//! The inference half: evaluate the adaptive gate during the forward pass
//! and add scaled steering vectors at the per-head hook point.
//!
//! For every policy entry (c, l, h) the head activation `a` is shifted by
//!
//! ```text
//! alpha * (1 - sigmoid(<theta, a>) + beta) * v
//! ```
//!
//! before the head's output projection. Clusters apply additively and
//! simultaneously; there is no runtime cluster routing.

mod context;
mod score;

pub use context::{ClusterGateStats, SteerPositions, SteeringContext, SteeringStats};
pub use score::{next_token_distributions, sequence_log_prob, steered_forward, steering_delta};
