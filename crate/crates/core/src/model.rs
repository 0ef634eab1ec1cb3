//! Problem instances and finite-state-controller policies.

use std::fmt;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Absolute tolerance on every probability row sum.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Mixed-radix index over a product of per-agent factors, row-major: the last
/// agent varies fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointSpace {
    sizes: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl JointSpace {
    pub fn new(sizes: Vec<usize>) -> Self {
        let mut strides = vec![1; sizes.len()];
        for i in (0..sizes.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * sizes[i + 1];
        }
        let len = sizes.iter().product();
        JointSpace {
            sizes,
            strides,
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn stride(&self, factor: usize) -> usize {
        self.strides[factor]
    }

    pub fn encode(&self, parts: &[usize]) -> usize {
        debug_assert_eq!(parts.len(), self.sizes.len());
        parts.iter().zip(&self.strides).map(|(p, s)| p * s).sum()
    }

    pub fn decode(&self, index: usize) -> Vec<usize> {
        (0..self.sizes.len())
            .map(|i| self.component(index, i))
            .collect()
    }

    #[inline]
    pub fn component(&self, index: usize, factor: usize) -> usize {
        (index / self.strides[factor]) % self.sizes[factor]
    }

    /// Joint index with factor `factor` replaced by `value`.
    #[inline]
    pub fn with_component(&self, index: usize, factor: usize, value: usize) -> usize {
        let s = self.strides[factor];
        index - self.component(index, factor) * s + value * s
    }
}

/// A DEC-POMDP instance.
///
/// Tables are dense and flat:
/// * `transition[(x * |A| + a) * |X| + x']` = p(x'|x, a)
/// * `observation[(x' * |A| + a) * |Y| + y]` = p(y|x', a), where `a` is the
///   joint action taken before arriving in `x'`
/// * `reward[x * |A| + a]` = r(x, a)
///
/// with joint actions and joint observations indexed by [`JointSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct DecPomdpModel {
    pub states: Vec<String>,
    pub actions: Vec<Vec<String>>,
    pub observations: Vec<Vec<String>>,
    pub initial_state: Vec<f64>,
    pub transition: Vec<f64>,
    pub observation: Vec<f64>,
    pub reward: Vec<f64>,
    pub discount: f64,
}

impl DecPomdpModel {
    pub fn num_agents(&self) -> usize {
        self.actions.len()
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn action_space(&self) -> JointSpace {
        JointSpace::new(self.actions.iter().map(Vec::len).collect())
    }

    pub fn observation_space(&self) -> JointSpace {
        JointSpace::new(self.observations.iter().map(Vec::len).collect())
    }

    #[inline]
    pub fn transition_prob(&self, x: usize, a: usize, x_next: usize) -> f64 {
        let na = self.transition.len() / (self.num_states() * self.num_states());
        self.transition[(x * na + a) * self.num_states() + x_next]
    }

    pub fn labels_for_joint_action(&self, a: usize) -> String {
        let parts = self.action_space().decode(a);
        parts
            .iter()
            .enumerate()
            .map(|(i, &p)| self.actions[i][p].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn labels_for_joint_observation(&self, y: usize) -> String {
        let parts = self.observation_space().decode(y);
        parts
            .iter()
            .enumerate()
            .map(|(i, &p)| self.observations[i][p].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// One invariant violation, located by table coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

fn violation(location: impl Into<String>, message: impl Into<String>) -> Violation {
    Violation {
        location: location.into(),
        message: message.into(),
    }
}

fn check_distribution(row: &[f64], location: impl Fn() -> String, out: &mut Vec<Violation>) {
    if let Some(k) = row.iter().position(|p| !p.is_finite() || *p < 0.0) {
        out.push(violation(
            location(),
            format!("entry {k} is {} (must be finite and >= 0)", row[k]),
        ));
        return;
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        out.push(violation(location(), format!("row sums to {sum}, expected 1")));
    }
}

/// Lists every violated model invariant. An empty list means the model is
/// valid.
pub fn validate_model(model: &DecPomdpModel) -> Vec<Violation> {
    let mut out = Vec::new();
    let nx = model.num_states();
    if nx == 0 {
        out.push(violation("states", "state set is empty"));
    }
    if model.num_agents() == 0 {
        out.push(violation("agents", "at least one agent is required"));
    }
    if model.observations.len() != model.num_agents() {
        out.push(violation(
            "observations",
            format!(
                "{} observation sets for {} agents",
                model.observations.len(),
                model.num_agents()
            ),
        ));
    }
    for (i, a) in model.actions.iter().enumerate() {
        if a.is_empty() {
            out.push(violation(format!("actions of agent {i}"), "empty action set"));
        }
    }
    for (i, o) in model.observations.iter().enumerate() {
        if o.is_empty() {
            out.push(violation(
                format!("observations of agent {i}"),
                "empty observation set",
            ));
        }
    }
    if !(model.discount > 0.0 && model.discount < 1.0) {
        out.push(violation(
            "discount",
            format!("discount out of (0,1): {}", model.discount),
        ));
    }
    if !out.iter().all(|v| v.location == "discount") {
        return out;
    }

    let na = model.action_space().len();
    let ny = model.observation_space().len();
    let shapes = [
        ("initial_state", model.initial_state.len(), nx),
        ("transition", model.transition.len(), nx * na * nx),
        ("observation", model.observation.len(), nx * na * ny),
        ("reward", model.reward.len(), nx * na),
    ];
    let mut shape_ok = true;
    for (name, found, expected) in shapes {
        if found != expected {
            shape_ok = false;
            out.push(violation(
                name,
                format!("table has {found} entries, expected {expected}"),
            ));
        }
    }
    if !shape_ok {
        return out;
    }

    check_distribution(&model.initial_state, || "initial_state".to_string(), &mut out);
    for x in 0..nx {
        for a in 0..na {
            let base = (x * na + a) * nx;
            check_distribution(
                &model.transition[base..base + nx],
                || {
                    format!(
                        "transition row (state {}, joint action [{}])",
                        model.states[x],
                        model.labels_for_joint_action(a)
                    )
                },
                &mut out,
            );
        }
    }
    for x in 0..nx {
        for a in 0..na {
            let base = (x * na + a) * ny;
            check_distribution(
                &model.observation[base..base + ny],
                || {
                    format!(
                        "observation row (next state {}, joint action [{}])",
                        model.states[x],
                        model.labels_for_joint_action(a)
                    )
                },
                &mut out,
            );
        }
    }
    for (k, r) in model.reward.iter().enumerate() {
        if !r.is_finite() {
            out.push(violation(
                format!(
                    "reward (state {}, joint action [{}])",
                    model.states[k / na],
                    model.labels_for_joint_action(k % na)
                ),
                "reward is not finite",
            ));
        }
    }
    out
}

/// Exact minimum and maximum of the reward table.
pub fn reward_bounds(model: &DecPomdpModel) -> (f64, f64) {
    model
        .reward
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
            (lo.min(r), hi.max(r))
        })
}

/// Finite-state controller of one agent.
///
/// * `pi[z * |A| + a]` = π(a|z)
/// * `lambda[(z * |Y| + y) * |Z| + z']` = λ(z'|z, y)
/// * `nu[z]` = ν(z)
#[derive(Debug, Clone, PartialEq)]
pub struct AgentController {
    pub memory_size: usize,
    pub num_actions: usize,
    pub num_observations: usize,
    pub pi: Vec<f64>,
    pub lambda: Vec<f64>,
    pub nu: Vec<f64>,
}

impl AgentController {
    #[inline]
    pub fn pi(&self, z: usize, a: usize) -> f64 {
        self.pi[z * self.num_actions + a]
    }

    #[inline]
    pub fn lambda(&self, z: usize, y: usize, z_next: usize) -> f64 {
        self.lambda[(z * self.num_observations + y) * self.memory_size + z_next]
    }

    fn problems(&self, agent: usize) -> Vec<String> {
        let mut out = Vec::new();
        let (nz, na, ny) = (self.memory_size, self.num_actions, self.num_observations);
        if self.pi.len() != nz * na || self.lambda.len() != nz * ny * nz || self.nu.len() != nz {
            out.push(format!("agent {agent}: table sizes do not match |Z|={nz}, |A|={na}, |Y|={ny}"));
            return out;
        }
        let mut check = |row: &[f64], what: String| {
            let bad = row.iter().any(|p| !p.is_finite() || *p < 0.0);
            let sum: f64 = row.iter().sum();
            if bad || (sum - 1.0).abs() > STOCHASTIC_TOL {
                out.push(format!("agent {agent}: {what} is not a distribution (sum {sum})"));
            }
        };
        check(&self.nu, "nu".into());
        for z in 0..nz {
            check(&self.pi[z * na..(z + 1) * na], format!("pi row z={z}"));
            for y in 0..ny {
                let b = (z * ny + y) * nz;
                check(&self.lambda[b..b + nz], format!("lambda row z={z}, y={y}"));
            }
        }
        out
    }
}

/// Joint policy θ = (π, λ, ν), one controller per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPolicy {
    pub agents: Vec<AgentController>,
}

impl JointPolicy {
    pub fn memory_space(&self) -> JointSpace {
        JointSpace::new(self.agents.iter().map(|c| c.memory_size).collect())
    }

    pub fn memory_sizes(&self) -> Vec<usize> {
        self.agents.iter().map(|c| c.memory_size).collect()
    }

    /// Checks row stochasticity and, when a model is given, that the
    /// controller dimensions match its action and observation sets.
    pub fn validate(&self, model: Option<&DecPomdpModel>) -> Result<()> {
        let mut problems: Vec<String> = self
            .agents
            .iter()
            .enumerate()
            .flat_map(|(i, c)| c.problems(i))
            .collect();
        if let Some(m) = model {
            if m.num_agents() != self.agents.len() {
                problems.push(format!(
                    "policy has {} agents, model has {}",
                    self.agents.len(),
                    m.num_agents()
                ));
            } else {
                for (i, c) in self.agents.iter().enumerate() {
                    if c.num_actions != m.actions[i].len()
                        || c.num_observations != m.observations[i].len()
                    {
                        problems.push(format!(
                            "agent {i}: controller expects {} actions / {} observations, model has {} / {}",
                            c.num_actions,
                            c.num_observations,
                            m.actions[i].len(),
                            m.observations[i].len()
                        ));
                    }
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidPolicy(problems.join("; ")))
        }
    }

    /// Dense joint ν(z).
    pub fn joint_nu(&self) -> Vec<f64> {
        let zs = self.memory_space();
        (0..zs.len())
            .map(|jz| {
                self.agents
                    .iter()
                    .enumerate()
                    .map(|(i, c)| c.nu[zs.component(jz, i)])
                    .product()
            })
            .collect()
    }

    /// Dense joint π(a|z), indexed `[z * |A| + a]`.
    pub fn joint_pi(&self) -> Vec<f64> {
        let zs = self.memory_space();
        let as_ = JointSpace::new(self.agents.iter().map(|c| c.num_actions).collect());
        let mut out = Vec::with_capacity(zs.len() * as_.len());
        for jz in 0..zs.len() {
            for ja in 0..as_.len() {
                out.push(
                    self.agents
                        .iter()
                        .enumerate()
                        .map(|(i, c)| c.pi(zs.component(jz, i), as_.component(ja, i)))
                        .product(),
                );
            }
        }
        out
    }

    /// Dense joint λ(z'|z, y), indexed `[(z * |Y| + y) * |Z| + z']`.
    pub fn joint_lambda(&self) -> Vec<f64> {
        let zs = self.memory_space();
        let ys = JointSpace::new(self.agents.iter().map(|c| c.num_observations).collect());
        let mut out = Vec::with_capacity(zs.len() * ys.len() * zs.len());
        for jz in 0..zs.len() {
            for jy in 0..ys.len() {
                for jz2 in 0..zs.len() {
                    out.push(
                        self.agents
                            .iter()
                            .enumerate()
                            .map(|(i, c)| {
                                c.lambda(
                                    zs.component(jz, i),
                                    ys.component(jy, i),
                                    zs.component(jz2, i),
                                )
                            })
                            .product(),
                    );
                }
            }
        }
        out
    }

    /// Largest absolute difference over all per-agent entries.
    pub fn max_abs_diff(&self, other: &JointPolicy) -> f64 {
        self.agents
            .iter()
            .zip(&other.agents)
            .flat_map(|(a, b)| {
                let pairs = a.pi.iter().zip(&b.pi);
                let pairs = pairs.chain(a.lambda.iter().zip(&b.lambda));
                pairs.chain(a.nu.iter().zip(&b.nu))
            })
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitScheme {
    Uniform,
    #[default]
    Random,
}

impl std::str::FromStr for InitScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(InitScheme::Uniform),
            "random" => Ok(InitScheme::Random),
            other => Err(Error::InvalidArgument(format!("unknown init scheme '{other}'"))),
        }
    }
}

/// Initial policy θ₀. `Random` rows are independent Uniform(0,1) draws,
/// normalized, in the order ν, π rows, λ rows, agent by agent.
pub fn init_policy(
    model: &DecPomdpModel,
    memory_sizes: &[usize],
    seed: u64,
    scheme: InitScheme,
) -> Result<JointPolicy> {
    if memory_sizes.len() != model.num_agents() {
        return Err(Error::InvalidArgument(format!(
            "{} memory sizes given for {} agents",
            memory_sizes.len(),
            model.num_agents()
        )));
    }
    if let Some(i) = memory_sizes.iter().position(|&m| m == 0) {
        return Err(Error::InvalidArgument(format!(
            "memory size of agent {i} must be at least 1"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw_rows = |rows: usize, width: usize| -> Vec<f64> {
        let mut v = Vec::with_capacity(rows * width);
        for _ in 0..rows {
            match scheme {
                InitScheme::Uniform => v.extend(std::iter::repeat_n(1.0 / width as f64, width)),
                InitScheme::Random => {
                    let row: Vec<f64> = (0..width).map(|_| rng.sample::<f64, _>(Open01)).collect();
                    let s: f64 = row.iter().sum();
                    v.extend(row.into_iter().map(|p| p / s));
                }
            }
        }
        v
    };
    let agents = memory_sizes
        .iter()
        .enumerate()
        .map(|(i, &nz)| {
            let na = model.actions[i].len();
            let ny = model.observations[i].len();
            let nu = draw_rows(1, nz);
            let pi = draw_rows(nz, na);
            let lambda = draw_rows(nz * ny, nz);
            AgentController {
                memory_size: nz,
                num_actions: na,
                num_observations: ny,
                pi,
                lambda,
                nu,
            }
        })
        .collect();
    Ok(JointPolicy { agents })
}
