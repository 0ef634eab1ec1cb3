#![allow(dead_code)]

use decpomdp_em::generate::{random_model, RandomShape};
use decpomdp_em::{init_policy, DecPomdpModel, InitScheme, JointPolicy};

pub const GAMMAS: [f64; 3] = [0.8, 0.95, 0.99];

/// Seeded random instance: 2 agents with 2 actions, observations and
/// memory states each.
pub fn instance(k: u64, states: usize, gamma: f64) -> (DecPomdpModel, JointPolicy) {
    let model = random_model(&RandomShape::uniform(states, 2, 2, gamma), 1000 + k);
    let policy = init_policy(&model, &[2, 2], 2000 + k, InitScheme::Random).unwrap();
    (model, policy)
}

/// The fifty instances shared by the equivalence checks: |X| cycles through
/// 1..=4 and γ through 0.8, 0.95, 0.99.
pub fn instances() -> Vec<(DecPomdpModel, JointPolicy)> {
    (0..50u64)
        .map(|k| instance(k, 1 + (k as usize % 4), GAMMAS[k as usize % 3]))
        .collect()
}

pub fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
