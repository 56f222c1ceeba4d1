//! Joint content caching, user association and transmit-power allocation for
//! integrated satellite-terrestrial networks.
//!
//! The solver runs a generalized Benders decomposition: a convex power
//! subproblem is solved exactly per candidate assignment, and the binary
//! master problem (caching + association + epigraph variable) is handed to a
//! sampler, either an exact enumerator, a classical simulated annealer over a
//! QUBO encoding, or a remote annealing service speaking a small JSON
//! protocol. Multiple feasible samples per round yield multiple cuts.

pub mod baselines;
pub mod gbd;
pub mod model;
pub mod qubo;
pub mod rng;
pub mod sampler;
pub mod scenario;
pub mod subproblem;

#[cfg(test)]
pub(crate) mod testutil;

pub use baselines::{evaluate_baseline, BaselineKind, BaselineOutcome};
pub use gbd::{GbdError, GbdOptions, SamplerChoice, SolveStatus, SolveTrace};
pub use model::DecisionVars;
pub use scenario::{Scenario, ScenarioConfig};
