//! prunesim — simulation, planning, and evaluation toolkit for robotic
//! dormant-pruning reaching tasks in V-trellis orchards.
//!
//! The crate grows synthetic trellis trees from parametric L-system grammars,
//! assembles capsule collision scenes, simulates a 6-DOF arm with a cutter
//! end-effector under the pruning-reach reward, runs an oracle RRT-Connect
//! baseline, and reproduces the task-space failure analysis.

pub mod analysis;
pub mod env;
pub mod episodes;
pub mod grammar;
pub mod perception;
pub mod planner;
pub mod policy;
pub mod robot;
pub mod scene;
pub mod server;
pub mod treegen;

mod rng;

pub use rng::derive_seed;

/// Construct the crate-standard deterministic generator (exposed for
/// examples and external harnesses).
pub fn rng_from_seed_pub(seed: u64) -> rand_chacha::ChaCha8Rng {
    rng::rng_from_seed(seed)
}
