//! Solvers and tabular reinforcement learning for Markov decision processes
//! with stochastic action sets: at every visit to a state, the set of
//! executable actions is a fresh random subset of a fixed base action set.
//!
//! Optimal behavior in this setting is captured by *decision-list* policies:
//! per-state orderings of the base actions, executed by taking the first
//! available one. The crate provides
//!
//! - the validated instance model ([`model`]): a base MDP plus per-state
//!   availability distributions (independent per-action probabilities,
//!   explicit subset tables, or seeded black-box samplers);
//! - decision-list backup machinery ([`backup`]) that evaluates policies
//!   without enumerating subsets;
//! - exact solvers over the base state space ([`solve`]): value iteration,
//!   policy iteration, and an LP with constraint generation ([`lp`]) backed
//!   by a dense simplex ([`simplex`]);
//! - a brute-force embedded-state oracle ([`embedded`]) that validates the
//!   compressed solvers on small instances;
//! - a seeded simulator and Q-learning over realized action sets ([`rl`]);
//! - instance file I/O ([`io`]) and bundled experiments ([`experiments`]).
//!
//! With the `parallel` feature (default) the per-state loops of the backup
//! operators run on rayon; every state's slot is computed independently, so
//! parallel and sequential runs produce bitwise-identical results.

// Indexed loops over states/actions mirror the math and stay readable in
// tableau and kernel code.
#![allow(clippy::needless_range_loop)]

pub mod backup;
pub mod embedded;
pub mod experiments;
pub mod io;
pub mod lp;
pub mod model;
pub mod rl;
pub mod sample;
pub mod set;
pub mod simplex;
pub mod solve;

/// Minimum state count before backup loops use the rayon pool; below this
/// the spawn overhead dominates.
#[cfg(feature = "parallel")]
pub(crate) const PARALLEL_STATE_THRESHOLD: usize = 64;

pub use model::{
    AvailabilityModel, BaseMdp, DecisionListPolicy, Instance, ModelError, QFunction, SubsetProb,
    ValidationError, ValueFunction,
};
pub use set::ActionSet;
