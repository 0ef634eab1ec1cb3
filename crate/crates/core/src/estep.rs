//! E-step engines: everything that turns a [`JointChain`] into the frequency
//! function F and the value function V.
//!
//! * F(x,z) = Σ_t γᵗ p_t(x,z) is the discounted occupancy of the chain.
//! * V(x,z) = Σ_t γᵗ E[r̄ at time t | start in (x,z)] is the scaled value.
//!
//! Both are fixed points of affine contractions, F = p₀ + γPF (1-norm) and
//! V = r̄ + γPᵀV (sup-norm), which the three engines exploit differently.

use std::fmt;
use std::ops::Deref;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::JointChain;

/// Hard cap on T_max unless the caller picks another.
pub const DEFAULT_TMAX_CAP: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// Forward-backward recursion truncated at T_max.
    Em,
    /// Direct solve of the forward and backward Bellman equations.
    Bem,
    /// Bellman-operator iteration with adaptive stopping and warm start.
    Mbem,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Em, Algorithm::Bem, Algorithm::Mbem];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Em => "em",
            Algorithm::Bem => "bem",
            Algorithm::Mbem => "mbem",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "em" => Ok(Algorithm::Em),
            "bem" => Ok(Algorithm::Bem),
            "mbem" => Ok(Algorithm::Mbem),
            other => Err(Error::InvalidArgument(format!("unknown algorithm '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableRole {
    Frequency,
    Value,
    Alpha,
    Beta,
    Iterate,
}

/// Dense real table over the joint index `x * |Z| + z`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMemoryTable {
    role: TableRole,
    values: Vec<f64>,
}

impl StateMemoryTable {
    pub fn new(role: TableRole, values: Vec<f64>) -> Self {
        StateMemoryTable { role, values }
    }

    pub fn zeros(role: TableRole, len: usize) -> Self {
        Self::new(role, vec![0.0; len])
    }

    pub fn role(&self) -> TableRole {
        self.role
    }

    pub fn with_role(mut self, role: TableRole) -> Self {
        self.role = role;
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn norm_l1(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    pub fn norm_sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn distance_l1(&self, other: &[f64]) -> f64 {
        l1_distance(&self.values, other)
    }

    pub fn distance_sup(&self, other: &[f64]) -> f64 {
        sup_distance(&self.values, other)
    }
}

impl Deref for StateMemoryTable {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.values
    }
}

pub(crate) fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub(crate) fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// F and V for one policy, plus the inner-iteration count that produced
/// them (T_max for EM, 1 for BEM, L for MBEM).
#[derive(Debug, Clone)]
pub struct EstepResult {
    pub frequency: StateMemoryTable,
    pub value: StateMemoryTable,
    pub inner_iters: usize,
    pub engine: Algorithm,
}

pub fn tmax_bound(gamma: f64, epsilon: f64) -> Result<usize> {
    tmax_bound_with_cap(gamma, epsilon, DEFAULT_TMAX_CAP)
}

/// Smallest T with γ^(T+1) / (1-γ) < ε, i.e. the smallest integer strictly
/// greater than log((1-γ)ε)/log γ - 1. The tail of the truncated series is
/// then below ε in sup norm.
pub fn tmax_bound_with_cap(gamma: f64, epsilon: f64, cap: usize) -> Result<usize> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!("discount {gamma} not in (0,1)")));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!("epsilon must be > 0, got {epsilon}")));
    }
    let target = (1.0 - gamma) * epsilon;
    let bound = target.ln() / gamma.ln() - 1.0;
    if bound >= cap as f64 {
        return Err(Error::Resource(format!(
            "T_max for gamma={gamma}, epsilon={epsilon} exceeds the cap of {cap}"
        )));
    }
    let tail_ok = |t: usize| gamma.powf(t as f64 + 1.0) < target;
    let mut t = if bound < 0.0 { 0 } else { bound.floor() as usize + 1 };
    // the logarithm ratio can land one off at exact boundaries
    while t > 0 && tail_ok(t - 1) {
        t -= 1;
    }
    while !tail_ok(t) {
        t += 1;
    }
    if t > cap {
        return Err(Error::Resource(format!(
            "T_max = {t} for gamma={gamma}, epsilon={epsilon} exceeds the cap of {cap}"
        )));
    }
    Ok(t)
}

/// Truncated forward-backward pass: F̂ = Σ_{t≤T} γᵗ αₜ, V̂ = Σ_{t≤T} γᵗ βₜ
/// with α₀ = p₀, β₀ = r̄, αₜ₊₁ = Pαₜ, βₜ₊₁ = Pᵀβₜ.
pub fn forward_backward(chain: &JointChain, t_max: usize) -> EstepResult {
    let gamma = chain.gamma();
    let mut alpha = chain.initial().to_vec();
    let mut beta = chain.scaled_reward().to_vec();
    let mut f = alpha.clone();
    let mut v = beta.clone();
    let mut weight = 1.0;
    for _ in 0..t_max {
        alpha = chain.push_forward(&alpha);
        beta = chain.pull_back(&beta);
        weight *= gamma;
        for (acc, a) in f.iter_mut().zip(&alpha) {
            *acc += weight * a;
        }
        for (acc, b) in v.iter_mut().zip(&beta) {
            *acc += weight * b;
        }
    }
    EstepResult {
        frequency: StateMemoryTable::new(TableRole::Frequency, f),
        value: StateMemoryTable::new(TableRole::Value, v),
        inner_iters: t_max,
        engine: Algorithm::Em,
    }
}

/// Residual ‖x - (b + γ M x)‖∞ for a row-major `M`.
fn fixed_point_residual(matrix: &[f64], gamma: f64, b: &[f64], x: &[f64]) -> f64 {
    let n = x.len();
    (0..n)
        .map(|i| {
            let mx: f64 = matrix[i * n..(i + 1) * n]
                .iter()
                .zip(x)
                .map(|(m, v)| m * v)
                .sum();
            (x[i] - b[i] - gamma * mx).abs()
        })
        .fold(0.0, f64::max)
}

/// Solves (I - γM) x = b by LU with partial pivoting and one step of
/// iterative refinement.
fn solve_shifted(matrix: &[f64], gamma: f64, b: &[f64], what: &str) -> Result<Vec<f64>> {
    let n = b.len();
    let a = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - gamma * matrix[i * n + j]
    });
    let rhs = DVector::from_column_slice(b);
    let lu = a.clone().lu();
    let mut x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Numeric(format!("{what}: I - γP is singular")))?;
    let r = &rhs - &a * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    let x: Vec<f64> = x.iter().copied().collect();
    let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let residual = fixed_point_residual(matrix, gamma, b, &x);
    if !(residual <= 1e-10 * scale) {
        return Err(Error::Numeric(format!(
            "{what}: fixed-point residual {residual:e} exceeds 1e-10 * {scale:e}"
        )));
    }
    Ok(x)
}

/// Exact F and V from the forward and backward Bellman equations:
/// (I - γP) F = p₀ and (I - γP)ᵀ V = r̄.
pub fn bellman_solve(chain: &JointChain) -> Result<EstepResult> {
    let gamma = chain.gamma();
    let kernel = chain.kernel();
    let n = chain.dim();
    let mut transposed = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            transposed[j * n + i] = kernel[i * n + j];
        }
    }
    let f = solve_shifted(kernel, gamma, chain.initial(), "forward Bellman equation")?;
    let v = solve_shifted(&transposed, gamma, chain.scaled_reward(), "backward Bellman equation")?;
    Ok(EstepResult {
        frequency: StateMemoryTable::new(TableRole::Frequency, f),
        value: StateMemoryTable::new(TableRole::Value, v),
        inner_iters: 1,
        engine: Algorithm::Bem,
    })
}

fn check_len(chain: &JointChain, len: usize) -> Result<()> {
    if len != chain.dim() {
        return Err(Error::DimensionMismatch {
            what: "state-memory table",
            expected: chain.dim(),
            found: len,
        });
    }
    Ok(())
}

fn forward_step(chain: &JointChain, f: &[f64]) -> Vec<f64> {
    let gamma = chain.gamma();
    let mut out = chain.push_forward(f);
    for (o, p) in out.iter_mut().zip(chain.initial()) {
        *o = p + gamma * *o;
    }
    out
}

fn backward_step(chain: &JointChain, v: &[f64]) -> Vec<f64> {
    let gamma = chain.gamma();
    let mut out = chain.pull_back(v);
    for (o, r) in out.iter_mut().zip(chain.scaled_reward()) {
        *o = r + gamma * *o;
    }
    out
}

/// Forward Bellman operator: A f = p₀ + γ P f.
pub fn apply_forward_operator(chain: &JointChain, f: &[f64]) -> Result<StateMemoryTable> {
    check_len(chain, f.len())?;
    Ok(StateMemoryTable::new(TableRole::Iterate, forward_step(chain, f)))
}

/// Backward Bellman operator: B v = r̄ + γ Pᵀ v.
pub fn apply_backward_operator(chain: &JointChain, v: &[f64]) -> Result<StateMemoryTable> {
    check_len(chain, v.len())?;
    Ok(StateMemoryTable::new(TableRole::Iterate, backward_step(chain, v)))
}

/// Iterates F_L = A F_{L-1}, V_L = B V_{L-1} until both the 1-norm forward
/// increment and the sup-norm backward increment drop below (1-γ)ε/γ. The
/// result is then within ε of the exact tables in sup norm.
///
/// Fails with [`Error::IterationCap`] (carrying the last iterate) if `l_cap`
/// sweeps are not enough.
pub fn mbem_estep(
    chain: &JointChain,
    epsilon: f64,
    f_init: &[f64],
    v_init: &[f64],
    l_cap: usize,
) -> Result<EstepResult> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be > 0, got {epsilon}")));
    }
    check_len(chain, f_init.len())?;
    check_len(chain, v_init.len())?;
    let gamma = chain.gamma();
    let threshold = (1.0 - gamma) * epsilon / gamma;

    let mut f = f_init.to_vec();
    let mut v = v_init.to_vec();
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < l_cap {
        let f_next = forward_step(chain, &f);
        let v_next = backward_step(chain, &v);
        sweeps += 1;
        let df = l1_distance(&f_next, &f);
        let dv = sup_distance(&v_next, &v);
        f = f_next;
        v = v_next;
        if df < threshold && dv < threshold {
            converged = true;
            break;
        }
    }
    let result = EstepResult {
        frequency: StateMemoryTable::new(TableRole::Frequency, f),
        value: StateMemoryTable::new(TableRole::Value, v),
        inner_iters: sweeps,
        engine: Algorithm::Mbem,
    };
    if converged {
        Ok(result)
    } else {
        Err(Error::IterationCap {
            cap: l_cap,
            partial: Box::new(result),
        })
    }
}
