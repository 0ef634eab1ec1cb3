//! The Markov chain a policy induces on the joint space X×Z.
//!
//! Joint-state layout: `i = x * |Z| + z`, with `z` the row-major joint memory
//! index of [`JointPolicy::memory_space`]. Kernels are dense.

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::model::{reward_bounds, DecPomdpModel, JointPolicy};

/// Reward mapped affinely onto [0, 1], indexed `[x * |A| + a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledReward {
    pub values: Vec<f64>,
    pub r_min: f64,
    pub r_max: f64,
    /// `r_max == r_min`: every policy has the same return and `values` is
    /// all zero.
    pub degenerate: bool,
}

pub fn scale_reward(model: &DecPomdpModel) -> ScaledReward {
    let (r_min, r_max) = reward_bounds(model);
    let degenerate = !(r_max > r_min);
    let values = if degenerate {
        vec![0.0; model.reward.len()]
    } else {
        let span = r_max - r_min;
        model.reward.iter().map(|r| (r - r_min) / span).collect()
    };
    ScaledReward {
        values,
        r_min,
        r_max,
        degenerate,
    }
}

/// Induced chain: kernel P, initial distribution p₀(x,z) and scaled reward
/// r̄(x,z).
#[derive(Debug, Clone)]
pub struct JointChain {
    num_states: usize,
    num_memory: usize,
    /// P, row-major `[dest * n + src]`.
    forward: Vec<f64>,
    /// Pᵀ, row-major `[src * n + dest]`.
    backward: Vec<f64>,
    initial: Vec<f64>,
    scaled_reward: Vec<f64>,
    gamma: f64,
    r_min: f64,
    r_max: f64,
    exec: Exec,
}

impl JointChain {
    /// Builds a chain from raw parts. `kernel[dest * n + src]` must be
    /// column-stochastic. `r_min`/`r_max` default to 0/1 (identity scaling).
    pub fn from_parts(
        num_states: usize,
        num_memory: usize,
        kernel: Vec<f64>,
        initial: Vec<f64>,
        scaled_reward: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        let n = num_states * num_memory;
        for (what, found, expected) in [
            ("chain kernel", kernel.len(), n * n),
            ("chain initial distribution", initial.len(), n),
            ("chain reward", scaled_reward.len(), n),
        ] {
            if found != expected {
                return Err(Error::DimensionMismatch {
                    what,
                    expected,
                    found,
                });
            }
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidArgument(format!("discount {gamma} not in (0,1)")));
        }
        let backward = transpose(&kernel, n);
        let chain = JointChain {
            num_states,
            num_memory,
            forward: kernel,
            backward,
            initial,
            scaled_reward,
            gamma,
            r_min: 0.0,
            r_max: 1.0,
            exec: Exec::default(),
        };
        chain.check()?;
        Ok(chain)
    }

    fn check(&self) -> Result<()> {
        let n = self.dim();
        for src in 0..n {
            let row = &self.backward[src * n..(src + 1) * n];
            let s: f64 = row.iter().sum();
            if row.iter().any(|p| *p < 0.0) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::Numeric(format!(
                    "kernel column {src} is not a distribution (sum {s})"
                )));
            }
        }
        let s: f64 = self.initial.iter().sum();
        if self.initial.iter().any(|p| *p < 0.0) || (s - 1.0).abs() > 1e-9 {
            return Err(Error::Numeric(format!("initial distribution sums to {s}")));
        }
        if self.scaled_reward.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Numeric("scaled reward outside [0, 1]".into()));
        }
        Ok(())
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    /// |X|·|Z|.
    pub fn dim(&self) -> usize {
        self.num_states * self.num_memory
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_memory(&self) -> usize {
        self.num_memory
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn scaled_reward(&self) -> &[f64] {
        &self.scaled_reward
    }

    /// (r_min, r_max) of the unscaled reward.
    pub fn reward_range(&self) -> (f64, f64) {
        (self.r_min, self.r_max)
    }

    pub fn reward_degenerate(&self) -> bool {
        !(self.r_max > self.r_min)
    }

    /// P as a row-major `[dest * n + src]` matrix.
    pub fn kernel(&self) -> &[f64] {
        &self.forward
    }

    /// p(dest | src).
    #[inline]
    pub fn prob(&self, dest: usize, src: usize) -> f64 {
        self.forward[dest * self.dim() + src]
    }

    #[inline]
    pub fn index(&self, x: usize, z: usize) -> usize {
        x * self.num_memory + z
    }

    /// P f: pushes a measure one step forward in time.
    pub fn push_forward(&self, f: &[f64]) -> Vec<f64> {
        exec::mat_vec(self.exec, &self.forward, f)
    }

    /// Pᵀ v: pulls a function one step backward in time.
    pub fn pull_back(&self, v: &[f64]) -> Vec<f64> {
        exec::mat_vec(self.exec, &self.backward, v)
    }
}

fn transpose(m: &[f64], n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            t[j * n + i] = m[i * n + j];
        }
    }
    t
}

fn check_compatible(model: &DecPomdpModel, policy: &JointPolicy) -> Result<()> {
    if policy.agents.len() != model.num_agents() {
        return Err(Error::DimensionMismatch {
            what: "number of agents",
            expected: model.num_agents(),
            found: policy.agents.len(),
        });
    }
    for (i, c) in policy.agents.iter().enumerate() {
        if c.num_actions != model.actions[i].len() {
            return Err(Error::DimensionMismatch {
                what: "controller action count",
                expected: model.actions[i].len(),
                found: c.num_actions,
            });
        }
        if c.num_observations != model.observations[i].len() {
            return Err(Error::DimensionMismatch {
                what: "controller observation count",
                expected: model.observations[i].len(),
                found: c.num_observations,
            });
        }
    }
    Ok(())
}

pub fn build_joint_chain(model: &DecPomdpModel, policy: &JointPolicy) -> Result<JointChain> {
    build_joint_chain_with(model, policy, Exec::default())
}

/// p(x',z'|x,z) = Σ_{y',a} λ(z'|z,y') p(y'|x',a) p(x'|x,a) π(a|z), evaluated
/// one source column at a time.
pub fn build_joint_chain_with(
    model: &DecPomdpModel,
    policy: &JointPolicy,
    exec: Exec,
) -> Result<JointChain> {
    check_compatible(model, policy)?;
    let nx = model.num_states();
    let nz = policy.memory_space().len();
    let na = model.action_space().len();
    let ny = model.observation_space().len();
    let n = nx * nz;

    let pi = policy.joint_pi();
    let lambda = policy.joint_lambda();
    let nu = policy.joint_nu();
    let reward = scale_reward(model);

    let mut backward = vec![0.0; n * n];
    exec::fill_rows(exec, &mut backward, n, |src, row| {
        let (x, z) = (src / nz, src % nz);
        for a in 0..na {
            let p_a = pi[z * na + a];
            if p_a == 0.0 {
                continue;
            }
            let t_row = &model.transition[(x * na + a) * nx..(x * na + a + 1) * nx];
            for (x2, &t) in t_row.iter().enumerate() {
                if t == 0.0 {
                    continue;
                }
                let o_row = &model.observation[(x2 * na + a) * ny..(x2 * na + a + 1) * ny];
                for (y, &o) in o_row.iter().enumerate() {
                    let w = p_a * t * o;
                    if w == 0.0 {
                        continue;
                    }
                    let l_row = &lambda[(z * ny + y) * nz..(z * ny + y + 1) * nz];
                    let dest = &mut row[x2 * nz..(x2 + 1) * nz];
                    for (d, &l) in dest.iter_mut().zip(l_row) {
                        *d += w * l;
                    }
                }
            }
        }
    });

    let initial = (0..n)
        .map(|i| model.initial_state[i / nz] * nu[i % nz])
        .collect();
    let scaled_reward = exec::map_range(exec, n, |i| {
        let (x, z) = (i / nz, i % nz);
        let r: f64 = (0..na)
            .map(|a| pi[z * na + a] * reward.values[x * na + a])
            .sum();
        // rounding can push a convex combination of [0,1] values a hair out
        r.clamp(0.0, 1.0)
    });

    Ok(JointChain {
        num_states: nx,
        num_memory: nz,
        forward: transpose(&backward, n),
        backward,
        initial,
        scaled_reward,
        gamma: model.discount,
        r_min: reward.r_min,
        r_max: reward.r_max,
        exec,
    })
}

/// p(x',z'|x,z,a) = Σ_{y'} λ(z'|z,y') p(y'|x',a) p(x'|x,a), indexed
/// `[((src * |A| + a) * n) + dest]` with `src = x*|Z|+z`, `dest = x'*|Z|+z'`.
#[derive(Debug, Clone)]
pub struct ActionKernel {
    pub dim: usize,
    pub num_actions: usize,
    pub data: Vec<f64>,
}

impl ActionKernel {
    #[inline]
    pub fn get(&self, src: usize, a: usize, dest: usize) -> f64 {
        self.data[(src * self.num_actions + a) * self.dim + dest]
    }
}

pub fn action_conditioned_kernel(
    model: &DecPomdpModel,
    policy: &JointPolicy,
) -> Result<ActionKernel> {
    check_compatible(model, policy)?;
    let nx = model.num_states();
    let nz = policy.memory_space().len();
    let na = model.action_space().len();
    let ny = model.observation_space().len();
    let n = nx * nz;
    let lambda = policy.joint_lambda();

    let mut data = vec![0.0; n * na * n];
    exec::fill_rows(Exec::default(), &mut data, n, |row_idx, row| {
        let (src, a) = (row_idx / na, row_idx % na);
        let (x, z) = (src / nz, src % nz);
        for x2 in 0..nx {
            let t = model.transition[(x * na + a) * nx + x2];
            if t == 0.0 {
                continue;
            }
            for y in 0..ny {
                let w = t * model.observation[(x2 * na + a) * ny + y];
                let l_row = &lambda[(z * ny + y) * nz..(z * ny + y + 1) * nz];
                for (z2, &l) in l_row.iter().enumerate() {
                    row[x2 * nz + z2] += w * l;
                }
            }
        }
    });
    Ok(ActionKernel {
        dim: n,
        num_actions: na,
        data,
    })
}

/// p(x',y'|x,z) = Σ_a p(y'|x',a) p(x'|x,a) π(a|z), indexed
/// `[(src * |X| + x') * |Y| + y']`.
#[derive(Debug, Clone)]
pub struct ObservationKernel {
    pub dim: usize,
    pub num_states: usize,
    pub num_observations: usize,
    pub data: Vec<f64>,
}

impl ObservationKernel {
    #[inline]
    pub fn get(&self, src: usize, x_next: usize, y: usize) -> f64 {
        self.data[(src * self.num_states + x_next) * self.num_observations + y]
    }
}

pub fn observation_conditioned_kernel(
    model: &DecPomdpModel,
    policy: &JointPolicy,
) -> Result<ObservationKernel> {
    check_compatible(model, policy)?;
    let nx = model.num_states();
    let nz = policy.memory_space().len();
    let na = model.action_space().len();
    let ny = model.observation_space().len();
    let n = nx * nz;
    let pi = policy.joint_pi();

    let mut data = vec![0.0; n * nx * ny];
    exec::fill_rows(Exec::default(), &mut data, nx * ny, |src, row| {
        let (x, z) = (src / nz, src % nz);
        for a in 0..na {
            let p_a = pi[z * na + a];
            if p_a == 0.0 {
                continue;
            }
            for x2 in 0..nx {
                let w = p_a * model.transition[(x * na + a) * nx + x2];
                if w == 0.0 {
                    continue;
                }
                let o_row = &model.observation[(x2 * na + a) * ny..(x2 * na + a + 1) * ny];
                for (y, &o) in o_row.iter().enumerate() {
                    row[x2 * ny + y] += w * o;
                }
            }
        }
    });
    Ok(ObservationKernel {
        dim: n,
        num_states: nx,
        num_observations: ny,
        data,
    })
}
