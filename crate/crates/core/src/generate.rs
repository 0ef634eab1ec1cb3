//! Seeded random models for tests, benchmarks and experiments.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{DecPomdpModel, JointSpace};

/// Shape of a random model.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomShape {
    pub states: usize,
    pub actions: Vec<usize>,
    pub observations: Vec<usize>,
    pub discount: f64,
}

impl RandomShape {
    /// `agents` agents with `per_agent` actions and observations each.
    pub fn uniform(states: usize, agents: usize, per_agent: usize, discount: f64) -> Self {
        RandomShape {
            states,
            actions: vec![per_agent; agents],
            observations: vec![per_agent; agents],
            discount,
        }
    }
}

fn distribution(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Open01)).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|p| *p /= s);
    v
}

fn labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Random dense model: every distribution is a normalized vector of open
/// uniforms, rewards are uniform in [-1, 1).
pub fn random_model(shape: &RandomShape, seed: u64) -> DecPomdpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nx = shape.states;
    let na = JointSpace::new(shape.actions.clone()).len();
    let ny = JointSpace::new(shape.observations.clone()).len();
    let initial_state = distribution(&mut rng, nx);
    let transition = (0..nx * na).flat_map(|_| distribution(&mut rng, nx)).collect();
    let observation = (0..nx * na).flat_map(|_| distribution(&mut rng, ny)).collect();
    let reward = (0..nx * na).map(|_| rng.random_range(-1.0..1.0)).collect();
    DecPomdpModel {
        states: labels("s", nx),
        actions: shape.actions.iter().map(|&n| labels("a", n)).collect(),
        observations: shape.observations.iter().map(|&n| labels("o", n)).collect(),
        initial_state,
        transition,
        observation,
        reward,
        discount: shape.discount,
    }
}
