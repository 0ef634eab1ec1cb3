//! Outer EM loop shared by the three planners.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::estep::{bellman_solve, forward_backward, mbem_estep, tmax_bound_with_cap};
use crate::exec::Exec;
use crate::kernel::{build_joint_chain_with, JointChain};
use crate::model::{init_policy, validate_model, DecPomdpModel, InitScheme, JointPolicy};
use crate::mstep::m_step;

pub use crate::estep::{Algorithm, EstepResult, DEFAULT_TMAX_CAP};

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    /// Sup-norm error budget for the EM and MBEM E-steps.
    pub epsilon: f64,
    pub max_iters: usize,
    pub j_tol: f64,
    pub policy_tol: f64,
    /// Stop as soon as both tolerances are met; otherwise always run
    /// `max_iters` iterations.
    pub stop_on_convergence: bool,
    /// Per-agent |Z_i|. Empty means 2 for every agent; a single entry is
    /// broadcast to all agents.
    pub memory_sizes: Vec<usize>,
    pub seed: u64,
    pub init: InitScheme,
    /// MBEM gives up after this many multiples of T_max sweeps.
    pub l_cap_multiplier: usize,
    pub tmax_cap: usize,
    /// Record J from an exact solve instead of the E-step's own F.
    pub exact_j: bool,
    pub exec: Exec,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            algorithm: Algorithm::Mbem,
            epsilon: 0.1,
            max_iters: 100,
            j_tol: 1e-8,
            policy_tol: 1e-8,
            stop_on_convergence: true,
            memory_sizes: Vec::new(),
            seed: 0,
            init: InitScheme::Random,
            l_cap_multiplier: 4,
            tmax_cap: DEFAULT_TMAX_CAP,
            exact_j: false,
            exec: Exec::default(),
        }
    }
}

impl SolverConfig {
    pub fn memory_for(&self, model: &DecPomdpModel) -> Result<Vec<usize>> {
        let n = model.num_agents();
        match self.memory_sizes.len() {
            0 => Ok(vec![2; n]),
            1 => Ok(vec![self.memory_sizes[0]; n]),
            k if k == n => Ok(self.memory_sizes.clone()),
            k => Err(Error::InvalidArgument(format!(
                "{k} memory sizes given for {n} agents"
            ))),
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// One outer iteration k: J(θ_k), the inner count of its E-step and timings.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub iter: usize,
    pub expected_return: f64,
    pub inner_iters: usize,
    /// Wall-clock milliseconds since the run started, E- and M-steps only.
    pub elapsed_ms: f64,
    pub estep_ms: f64,
    pub mstep_ms: f64,
    pub algorithm: Algorithm,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    /// θ after the last M-step.
    pub policy: JointPolicy,
    pub trace: Vec<IterationTrace>,
    pub converged: bool,
}

/// J = Σ_{x,z} F(x,z) Σ_a π(a|z) r(x,a), in reward units.
pub fn expected_return(
    chain: &JointChain,
    model: &DecPomdpModel,
    policy: &JointPolicy,
    frequency: &[f64],
) -> f64 {
    let nz = chain.num_memory();
    let na = model.action_space().len();
    let pi = policy.joint_pi();
    frequency
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let (x, z) = (i / nz, i % nz);
            let r: f64 = (0..na)
                .map(|a| pi[z * na + a] * model.reward[x * na + a])
                .sum();
            f * r
        })
        .sum()
}

/// J = (r_max - r_min)⟨p₀, V⟩ + r_min/(1-γ), the likelihood form of the
/// return.
pub fn expected_return_from_value(chain: &JointChain, value: &[f64]) -> f64 {
    let (r_min, r_max) = chain.reward_range();
    let likelihood: f64 = chain.initial().iter().zip(value).map(|(p, v)| p * v).sum();
    let span = if chain.reward_degenerate() { 0.0 } else { r_max - r_min };
    span * likelihood + r_min / (1.0 - chain.gamma())
}

/// Runs the configured planner from a seeded initial policy.
pub fn run(model: &DecPomdpModel, config: &SolverConfig) -> Result<SolveOutcome> {
    let violations = validate_model(model);
    if !violations.is_empty() {
        return Err(Error::InvalidModel(violations));
    }
    config.check()?;
    let memory = config.memory_for(model)?;
    let policy = init_policy(model, &memory, config.seed, config.init)?;
    run_from(model, config, policy)
}

/// Runs the configured planner from a given initial policy.
pub fn run_from(
    model: &DecPomdpModel,
    config: &SolverConfig,
    initial: JointPolicy,
) -> Result<SolveOutcome> {
    config.check()?;
    initial.validate(Some(model))?;
    let needs_tmax = config.algorithm != Algorithm::Bem;
    let t_max = if needs_tmax {
        tmax_bound_with_cap(model.discount, config.epsilon, config.tmax_cap)?
    } else {
        0
    };
    let l_cap = config.l_cap_multiplier.max(1).saturating_mul(t_max.max(1));

    let mut policy = initial;
    let mut warm: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut trace = Vec::new();
    let mut prev_j: Option<f64> = None;
    let mut elapsed_ms = 0.0;
    let mut converged = false;

    for k in 0..config.max_iters {
        let t0 = Instant::now();
        let chain = build_joint_chain_with(model, &policy, config.exec)?;
        let estep = match config.algorithm {
            Algorithm::Em => forward_backward(&chain, t_max),
            Algorithm::Bem => bellman_solve(&chain)?,
            Algorithm::Mbem => {
                let (f0, v0) = warm
                    .take()
                    .unwrap_or_else(|| (chain.initial().to_vec(), chain.scaled_reward().to_vec()));
                mbem_estep(&chain, config.epsilon, &f0, &v0, l_cap)?
            }
        };
        let estep_ms = t0.elapsed().as_secs_f64() * 1e3;

        let j = if config.exact_j && config.algorithm != Algorithm::Bem {
            let exact = bellman_solve(&chain)?;
            expected_return(&chain, model, &policy, &exact.frequency)
        } else {
            expected_return(&chain, model, &policy, &estep.frequency)
        };
        if !j.is_finite() {
            return Err(Error::Numeric(format!("expected return is {j} at iteration {k}")));
        }

        let t1 = Instant::now();
        let next = m_step(model, &policy, &estep)?;
        let mstep_ms = t1.elapsed().as_secs_f64() * 1e3;
        elapsed_ms += estep_ms + mstep_ms;

        trace.push(IterationTrace {
            iter: k,
            expected_return: j,
            inner_iters: estep.inner_iters,
            elapsed_ms,
            estep_ms,
            mstep_ms,
            algorithm: config.algorithm,
        });

        let policy_change = next.max_abs_diff(&policy);
        converged = prev_j.is_some_and(|p| (j - p).abs() < config.j_tol)
            && policy_change < config.policy_tol;
        if config.algorithm == Algorithm::Mbem {
            warm = Some((estep.frequency.into_values(), estep.value.into_values()));
        }
        policy = next;
        prev_j = Some(j);
        if converged && config.stop_on_convergence {
            break;
        }
    }

    Ok(SolveOutcome {
        policy,
        trace,
        converged,
    })
}
