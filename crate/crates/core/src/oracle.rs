//! Brute-force reference evaluators for tiny instances.
//!
//! Nothing here goes through the kernel or E-step code: index arithmetic,
//! loops and sampling are written out independently so that a bug in the
//! fast path cannot hide behind the same bug here.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::kernel::JointChain;
use crate::model::{DecPomdpModel, JointPolicy};

/// Largest chain dimension and horizon `enumerate_alpha_beta` accepts.
pub const MAX_PATH_DIM: usize = 4;
pub const MAX_PATH_STEPS: usize = 8;

/// Largest per-step work (states × memories × actions × states ×
/// observations × memories) `enumerate_return` accepts.
pub const MAX_STEP_WORK: usize = 1 << 24;

/// Row-major index of `digits` under `radices`.
fn flatten(digits: &[usize], radices: &[usize]) -> usize {
    digits.iter().zip(radices).fold(0, |acc, (d, r)| acc * r + d)
}

/// Advances an odometer; returns false after the last combination.
fn advance(digits: &mut [usize], radices: &[usize]) -> bool {
    for k in (0..digits.len()).rev() {
        digits[k] += 1;
        if digits[k] < radices[k] {
            return true;
        }
        digits[k] = 0;
    }
    false
}

/// α_t and β_t by summing over every joint trajectory (s₀, …, s_t)
/// explicitly:
///
/// α_t(s) = Σ_{paths ending in s} p₀(s₀) Π p(s_{k+1}|s_k)
/// β_t(s) = Σ_{paths starting in s} Π p(s_{k+1}|s_k) r̄(s_t)
pub fn enumerate_alpha_beta(chain: &JointChain, t: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = chain.dim();
    if n > MAX_PATH_DIM || t > MAX_PATH_STEPS {
        return Err(Error::Resource(format!(
            "path enumeration limited to dimension {MAX_PATH_DIM} and {MAX_PATH_STEPS} steps (got {n}, {t})"
        )));
    }
    let p0 = chain.initial();
    let rbar = chain.scaled_reward();
    let mut alpha = vec![0.0; n];
    let mut beta = vec![0.0; n];
    let radices = vec![n; t + 1];
    let mut path = vec![0usize; t + 1];
    loop {
        let mut weight = 1.0;
        for k in 0..t {
            weight *= chain.prob(path[k + 1], path[k]);
        }
        alpha[path[t]] += p0[path[0]] * weight;
        beta[path[0]] += weight * rbar[path[t]];
        if !advance(&mut path, &radices) {
            break;
        }
    }
    Ok((alpha, beta))
}

struct Tables<'a> {
    model: &'a DecPomdpModel,
    policy: &'a JointPolicy,
    actions: Vec<usize>,
    observations: Vec<usize>,
    memories: Vec<usize>,
    num_joint_actions: usize,
    num_joint_observations: usize,
}

impl<'a> Tables<'a> {
    fn new(model: &'a DecPomdpModel, policy: &'a JointPolicy) -> Result<Self> {
        if policy.agents.len() != model.num_agents() {
            return Err(Error::DimensionMismatch {
                what: "number of agents",
                expected: model.num_agents(),
                found: policy.agents.len(),
            });
        }
        let actions: Vec<usize> = model.actions.iter().map(Vec::len).collect();
        let observations: Vec<usize> = model.observations.iter().map(Vec::len).collect();
        let memories: Vec<usize> = policy.agents.iter().map(|c| c.memory_size).collect();
        Ok(Tables {
            model,
            policy,
            num_joint_actions: actions.iter().product(),
            num_joint_observations: observations.iter().product(),
            actions,
            observations,
            memories,
        })
    }

    fn transition(&self, x: usize, a: &[usize], x2: usize) -> f64 {
        let nx = self.model.num_states();
        let ja = flatten(a, &self.actions);
        self.model.transition[(x * self.num_joint_actions + ja) * nx + x2]
    }

    fn observe(&self, x2: usize, a: &[usize], y: &[usize]) -> f64 {
        let ja = flatten(a, &self.actions);
        let jy = flatten(y, &self.observations);
        self.model.observation[(x2 * self.num_joint_actions + ja) * self.num_joint_observations + jy]
    }

    fn reward(&self, x: usize, a: &[usize]) -> f64 {
        self.model.reward[x * self.num_joint_actions + flatten(a, &self.actions)]
    }

    fn act(&self, z: &[usize], a: &[usize]) -> f64 {
        let mut p = 1.0;
        for (i, c) in self.policy.agents.iter().enumerate() {
            p *= c.pi[z[i] * c.num_actions + a[i]];
        }
        p
    }

    fn remember(&self, z: &[usize], y: &[usize], z2: &[usize]) -> f64 {
        let mut p = 1.0;
        for (i, c) in self.policy.agents.iter().enumerate() {
            p *= c.lambda[(z[i] * c.num_observations + y[i]) * c.memory_size + z2[i]];
        }
        p
    }

    fn start_memory(&self, z: &[usize]) -> f64 {
        self.policy
            .agents
            .iter()
            .zip(z)
            .map(|(c, &zi)| c.nu[zi])
            .product()
    }
}

/// Exact Σ_{t=0}^{H} γᵗ E[r(x_t, a_t)] over the full generative process
/// (state, joint observation, joint memory, joint action), marginalizing one
/// time step at a time.
pub fn enumerate_return(model: &DecPomdpModel, policy: &JointPolicy, horizon: usize) -> Result<f64> {
    let tables = Tables::new(model, policy)?;
    let nx = model.num_states();
    let nzj: usize = tables.memories.iter().product();
    let work = nx * nzj * tables.num_joint_actions * nx * tables.num_joint_observations * nzj;
    if work > MAX_STEP_WORK {
        return Err(Error::Resource(format!(
            "exhaustive return needs {work} products per step (limit {MAX_STEP_WORK})"
        )));
    }
    let n_agents = model.num_agents();

    // dist[x * nzj + flatten(z)]
    let mut dist = vec![0.0; nx * nzj];
    for x in 0..nx {
        let mut z = vec![0; n_agents];
        loop {
            dist[x * nzj + flatten(&z, &tables.memories)] =
                model.initial_state[x] * tables.start_memory(&z);
            if !advance(&mut z, &tables.memories) {
                break;
            }
        }
    }

    let mut total = 0.0;
    let mut discount = 1.0;
    for t in 0..=horizon {
        let mut next = vec![0.0; nx * nzj];
        let mut step_reward = 0.0;
        for x in 0..nx {
            let mut z = vec![0; n_agents];
            loop {
                let mass = dist[x * nzj + flatten(&z, &tables.memories)];
                if mass != 0.0 {
                    let mut a = vec![0; n_agents];
                    loop {
                        let pa = mass * tables.act(&z, &a);
                        if pa != 0.0 {
                            step_reward += pa * tables.reward(x, &a);
                            if t < horizon {
                                spread(&tables, x, &z, &a, pa, &mut next);
                            }
                        }
                        if !advance(&mut a, &tables.actions) {
                            break;
                        }
                    }
                }
                if !advance(&mut z, &tables.memories) {
                    break;
                }
            }
        }
        total += discount * step_reward;
        discount *= model.discount;
        dist = next;
    }
    Ok(total)
}

fn spread(tables: &Tables<'_>, x: usize, z: &[usize], a: &[usize], mass: f64, next: &mut [f64]) {
    let nx = tables.model.num_states();
    let nzj: usize = tables.memories.iter().product();
    let n_agents = z.len();
    for x2 in 0..nx {
        let pt = mass * tables.transition(x, a, x2);
        if pt == 0.0 {
            continue;
        }
        let mut y = vec![0; n_agents];
        loop {
            let po = pt * tables.observe(x2, a, &y);
            if po != 0.0 {
                let mut z2 = vec![0; n_agents];
                loop {
                    next[x2 * nzj + flatten(&z2, &tables.memories)] += po * tables.remember(z, &y, &z2);
                    if !advance(&mut z2, &tables.memories) {
                        break;
                    }
                }
            }
            if !advance(&mut y, &tables.observations) {
                break;
            }
        }
    }
}

fn sample(rng: &mut ChaCha8Rng, probs: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, p) in probs.enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = k;
            if u < acc {
                return k;
            }
        }
    }
    last_positive
}

fn simulate(tables: &Tables<'_>, horizon: usize, rng: &mut ChaCha8Rng) -> f64 {
    let model = tables.model;
    let nx = model.num_states();
    let n_agents = model.num_agents();
    let mut x = sample(rng, model.initial_state.iter().copied());
    let mut z: Vec<usize> = tables
        .policy
        .agents
        .iter()
        .map(|c| sample(rng, c.nu.iter().copied()))
        .collect();
    let mut a = vec![0; n_agents];
    let mut ret = 0.0;
    let mut discount = 1.0;
    for t in 0..=horizon {
        for (i, c) in tables.policy.agents.iter().enumerate() {
            a[i] = sample(rng, (0..c.num_actions).map(|k| c.pi[z[i] * c.num_actions + k]));
        }
        ret += discount * tables.reward(x, &a);
        discount *= model.discount;
        if t == horizon {
            break;
        }
        let x2 = sample(rng, (0..nx).map(|k| tables.transition(x, &a, k)));
        let ja = flatten(&a, &tables.actions);
        let ny = tables.num_joint_observations;
        let row = &model.observation[(x2 * tables.num_joint_actions + ja) * ny..][..ny];
        let jy = sample(rng, row.iter().copied());
        // unflatten the joint observation, last agent fastest
        let mut rem = jy;
        let mut y = vec![0; n_agents];
        for i in (0..n_agents).rev() {
            y[i] = rem % tables.observations[i];
            rem /= tables.observations[i];
        }
        for (i, c) in tables.policy.agents.iter().enumerate() {
            let base = (z[i] * c.num_observations + y[i]) * c.memory_size;
            z[i] = sample(rng, c.lambda[base..base + c.memory_size].iter().copied());
        }
        x = x2;
    }
    ret
}

pub fn monte_carlo_return(
    model: &DecPomdpModel,
    policy: &JointPolicy,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    monte_carlo_return_with(model, policy, episodes, horizon, seed, Exec::default())
}

/// Simulated discounted return over `horizon + 1` steps. Episode `k` draws
/// from ChaCha8 stream `k` of `seed`, so the estimate does not depend on the
/// execution mode. Returns (mean, standard error); the standard error is NaN
/// for a single episode.
pub fn monte_carlo_return_with(
    model: &DecPomdpModel,
    policy: &JointPolicy,
    episodes: usize,
    horizon: usize,
    seed: u64,
    exec: Exec,
) -> Result<(f64, f64)> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("at least one episode is required".into()));
    }
    let tables = Tables::new(model, policy)?;
    let returns = exec::map_range(exec, episodes, |k| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        simulate(&tables, horizon, &mut rng)
    });
    let n = episodes as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let se = if episodes > 1 {
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        f64::NAN
    };
    Ok((mean, se))
}
