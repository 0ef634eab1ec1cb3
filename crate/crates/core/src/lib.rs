//! Planning for infinite-horizon discounted DEC-POMDPs with finite-state
//! controllers.
//!
//! Three planners share one M-step and differ only in how the E-step obtains
//! the frequency function `F` and the value function `V` of the current
//! policy:
//!
//! * [`Algorithm::Em`]: truncated forward-backward recursion,
//! * [`Algorithm::Bem`]: exact solve of the forward and backward Bellman
//!   equations,
//! * [`Algorithm::Mbem`]: contractive Bellman-operator iteration, warm-started
//!   from the previous outer iteration.
//!
//! Data-parallel inner loops (kernel construction, matrix-vector products,
//! Monte Carlo episodes) run on rayon when the `parallel` feature is enabled
//! and fall back to plain loops otherwise. Every parallel loop writes disjoint
//! output elements with a fixed per-element evaluation order, so results are
//! bit-identical across thread counts.

pub mod builtin;
pub mod cli;
mod error;
pub mod estep;
pub mod exec;
pub mod format;
pub mod generate;
pub mod kernel;
pub mod model;
pub mod mstep;
pub mod oracle;
pub mod solver;

pub use error::{Error, Result};
pub use estep::{
    apply_backward_operator, apply_forward_operator, bellman_solve, forward_backward, mbem_estep,
    tmax_bound, tmax_bound_with_cap, EstepResult, StateMemoryTable, TableRole, DEFAULT_TMAX_CAP,
};
pub use exec::Exec;
pub use kernel::{
    action_conditioned_kernel, build_joint_chain, build_joint_chain_with,
    observation_conditioned_kernel, scale_reward, ActionKernel, JointChain, ObservationKernel,
    ScaledReward,
};
pub use model::{
    init_policy, reward_bounds, validate_model, AgentController, DecPomdpModel, InitScheme,
    JointPolicy, JointSpace, Violation,
};
pub use solver::{expected_return, run, Algorithm, IterationTrace, SolveOutcome, SolverConfig};
