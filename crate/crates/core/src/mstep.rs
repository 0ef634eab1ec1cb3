//! Closed-form M-step: the next controller parameters from (F, V) of the
//! current policy.
//!
//! All three updates read the same (F, V). Every unnormalized weight is a sum
//! of products of probabilities, F ≥ 0, V ≥ 0 and r̄ ≥ 0, hence nonnegative.
//! Rows whose total weight is below [`ZERO_ROW`] become uniform.

use crate::error::{Error, Result};
use crate::estep::EstepResult;
use crate::kernel::{observation_conditioned_kernel, scale_reward};
use crate::model::{AgentController, DecPomdpModel, JointPolicy, JointSpace};

pub const ZERO_ROW: f64 = 1e-300;

fn check_tables(model: &DecPomdpModel, policy: &JointPolicy, tables: &[&[f64]]) -> Result<()> {
    let n = model.num_states() * policy.memory_space().len();
    for t in tables {
        if t.len() != n {
            return Err(Error::DimensionMismatch {
                what: "state-memory table",
                expected: n,
                found: t.len(),
            });
        }
    }
    Ok(())
}

/// Normalizes each consecutive row of `width` entries in place.
fn normalize_rows(weights: &mut [f64], width: usize) {
    for row in weights.chunks_mut(width) {
        let s: f64 = row.iter().sum();
        if s < ZERO_ROW {
            row.fill(1.0 / width as f64);
        } else {
            row.iter_mut().for_each(|w| *w /= s);
        }
    }
}

/// Unnormalized π weights per agent, indexed `[z_i * |A_i| + a_i]`.
pub fn pi_weights(
    model: &DecPomdpModel,
    policy: &JointPolicy,
    f: &[f64],
    v: &[f64],
) -> Result<Vec<Vec<f64>>> {
    check_tables(model, policy, &[f, v])?;
    let nx = model.num_states();
    let zs = policy.memory_space();
    let nz = zs.len();
    let as_ = model.action_space();
    let na = as_.len();
    let ny = model.observation_space().len();
    let gamma = model.discount;
    let rbar = scale_reward(model).values;
    let pi = policy.joint_pi();
    let lambda = policy.joint_lambda();

    // lv[(z*|Y| + y)*|X| + x'] = Σ_z' λ(z'|z,y) V(x',z')
    let mut lv = vec![0.0; nz * ny * nx];
    for z in 0..nz {
        for y in 0..ny {
            let l_row = &lambda[(z * ny + y) * nz..(z * ny + y + 1) * nz];
            for x2 in 0..nx {
                lv[(z * ny + y) * nx + x2] = l_row
                    .iter()
                    .zip(&v[x2 * nz..(x2 + 1) * nz])
                    .map(|(l, v)| l * v)
                    .sum();
            }
        }
    }

    // joint[z*|A| + a] = π(a|z) Σ_x F(x,z) (r̄(x,a) + γ Σ_{x',z'} p(x',z'|x,z,a) V(x',z'))
    let mut joint = vec![0.0; nz * na];
    for x in 0..nx {
        for z in 0..nz {
            let fxz = f[x * nz + z];
            if fxz == 0.0 {
                continue;
            }
            for a in 0..na {
                let p_a = pi[z * na + a];
                if p_a == 0.0 {
                    continue;
                }
                let mut next = 0.0;
                for x2 in 0..nx {
                    let t = model.transition[(x * na + a) * nx + x2];
                    if t == 0.0 {
                        continue;
                    }
                    let o_row = &model.observation[(x2 * na + a) * ny..(x2 * na + a + 1) * ny];
                    let inner: f64 = o_row
                        .iter()
                        .enumerate()
                        .map(|(y, o)| o * lv[(z * ny + y) * nx + x2])
                        .sum();
                    next += t * inner;
                }
                joint[z * na + a] += p_a * fxz * (rbar[x * na + a] + gamma * next);
            }
        }
    }

    Ok(marginalize(&joint, &[&zs, &as_], policy.agents.len()))
}

/// Sums a joint table over the other agents' components. `spaces` lists the
/// joint axes of `joint` from slowest to fastest; the result for agent i is
/// laid out over the same axes restricted to agent i.
fn marginalize(joint: &[f64], spaces: &[&JointSpace], num_agents: usize) -> Vec<Vec<f64>> {
    let lens: Vec<usize> = spaces.iter().map(|s| s.len()).collect();
    (0..num_agents)
        .map(|i| {
            let local: Vec<usize> = spaces.iter().map(|s| s.sizes()[i]).collect();
            let mut out = vec![0.0; local.iter().product()];
            for (k, w) in joint.iter().enumerate() {
                // split k into per-axis joint indices, then project to agent i
                let mut rem = k;
                let mut idx = 0;
                let mut stride = 1;
                for axis in (0..spaces.len()).rev() {
                    let j = rem % lens[axis];
                    rem /= lens[axis];
                    idx += spaces[axis].component(j, i) * stride;
                    stride *= local[axis];
                }
                out[idx] += w;
            }
            out
        })
        .collect()
}

/// Unnormalized λ weights per agent, indexed `[(z_i * |Y_i| + y_i) * |Z_i| + z_i']`.
pub fn lambda_weights(
    model: &DecPomdpModel,
    policy: &JointPolicy,
    f: &[f64],
    v: &[f64],
) -> Result<Vec<Vec<f64>>> {
    check_tables(model, policy, &[f, v])?;
    let nx = model.num_states();
    let zs = policy.memory_space();
    let nz = zs.len();
    let ys = model.observation_space();
    let ny = ys.len();
    let lambda = policy.joint_lambda();
    let obs = observation_conditioned_kernel(model, policy)?;

    // fm[(z*|X| + x')*|Y| + y] = Σ_x F(x,z) p(x',y|x,z)
    let mut fm = vec![0.0; nz * nx * ny];
    for x in 0..nx {
        for z in 0..nz {
            let fxz = f[x * nz + z];
            if fxz == 0.0 {
                continue;
            }
            let src = x * nz + z;
            for x2 in 0..nx {
                for y in 0..ny {
                    fm[(z * nx + x2) * ny + y] += fxz * obs.get(src, x2, y);
                }
            }
        }
    }

    let mut joint = vec![0.0; nz * ny * nz];
    for z in 0..nz {
        for y in 0..ny {
            for z2 in 0..nz {
                let l = lambda[(z * ny + y) * nz + z2];
                if l == 0.0 {
                    continue;
                }
                let s: f64 = (0..nx)
                    .map(|x2| fm[(z * nx + x2) * ny + y] * v[x2 * nz + z2])
                    .sum();
                joint[(z * ny + y) * nz + z2] = l * s;
            }
        }
    }
    Ok(marginalize(&joint, &[&zs, &ys, &zs], policy.agents.len()))
}

/// Unnormalized ν weights per agent.
pub fn nu_weights(model: &DecPomdpModel, policy: &JointPolicy, v: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_tables(model, policy, &[v])?;
    let zs = policy.memory_space();
    let nz = zs.len();
    let nu = policy.joint_nu();
    let joint: Vec<f64> = (0..nz)
        .map(|z| {
            let s: f64 = model
                .initial_state
                .iter()
                .enumerate()
                .map(|(x, p)| p * v[x * nz + z])
                .sum();
            nu[z] * s
        })
        .collect();
    Ok(marginalize(&joint, &[&zs], policy.agents.len()))
}

pub fn update_pi(
    model: &DecPomdpModel,
    policy: &JointPolicy,
    f: &[f64],
    v: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let mut w = pi_weights(model, policy, f, v)?;
    for (table, c) in w.iter_mut().zip(&policy.agents) {
        normalize_rows(table, c.num_actions);
    }
    Ok(w)
}

pub fn update_lambda(
    model: &DecPomdpModel,
    policy: &JointPolicy,
    f: &[f64],
    v: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let mut w = lambda_weights(model, policy, f, v)?;
    for (table, c) in w.iter_mut().zip(&policy.agents) {
        normalize_rows(table, c.memory_size);
    }
    Ok(w)
}

pub fn update_nu(model: &DecPomdpModel, policy: &JointPolicy, v: &[f64]) -> Result<Vec<Vec<f64>>> {
    let mut w = nu_weights(model, policy, v)?;
    for (table, c) in w.iter_mut().zip(&policy.agents) {
        normalize_rows(table, c.memory_size);
    }
    Ok(w)
}

/// Simultaneous update of (π, λ, ν) from one E-step result.
pub fn m_step(model: &DecPomdpModel, policy: &JointPolicy, estep: &EstepResult) -> Result<JointPolicy> {
    let (f, v) = (estep.frequency.values(), estep.value.values());
    let pis = update_pi(model, policy, f, v)?;
    let lambdas = update_lambda(model, policy, f, v)?;
    let nus = update_nu(model, policy, v)?;
    let agents = policy
        .agents
        .iter()
        .zip(pis.into_iter().zip(lambdas).zip(nus))
        .map(|(c, ((pi, lambda), nu))| AgentController {
            memory_size: c.memory_size,
            num_actions: c.num_actions,
            num_observations: c.num_observations,
            pi,
            lambda,
            nu,
        })
        .collect();
    Ok(JointPolicy { agents })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estep::bellman_solve;
    use crate::kernel::build_joint_chain;
    use crate::model::{init_policy, InitScheme};

    fn coin_model(reward: Vec<f64>) -> DecPomdpModel {
        // two states, one agent with two actions and two observations
        DecPomdpModel {
            states: vec!["s0".into(), "s1".into()],
            actions: vec![vec!["stay".into(), "move".into()]],
            observations: vec![vec!["o0".into(), "o1".into()]],
            initial_state: vec![0.6, 0.4],
            transition: vec![
                0.9, 0.1, 0.2, 0.8, // x=0
                0.3, 0.7, 0.6, 0.4, // x=1
            ],
            observation: vec![
                0.8, 0.2, 0.7, 0.3, // x'=0
                0.1, 0.9, 0.4, 0.6, // x'=1
            ],
            reward,
            discount: 0.9,
        }
    }

    #[test]
    fn singleton_action_set_is_certain() {
        let mut m = coin_model(vec![0.0, 1.0]);
        m.actions = vec![vec!["only".into()]];
        m.transition = vec![0.9, 0.1, 0.3, 0.7];
        m.observation = vec![0.8, 0.2, 0.1, 0.9];
        let p = init_policy(&m, &[2], 3, InitScheme::Random).unwrap();
        let e = bellman_solve(&build_joint_chain(&m, &p).unwrap()).unwrap();
        let pi = update_pi(&m, &p, &e.frequency, &e.value).unwrap();
        assert_eq!(pi[0], vec![1.0, 1.0]);
    }

    #[test]
    fn degenerate_reward_falls_back_to_uniform() {
        let m = coin_model(vec![5.0; 4]);
        let p = init_policy(&m, &[2], 3, InitScheme::Random).unwrap();
        let e = bellman_solve(&build_joint_chain(&m, &p).unwrap()).unwrap();
        assert!(e.value.iter().all(|&v| v == 0.0));
        let next = m_step(&m, &p, &e).unwrap();
        assert!(next.agents[0].pi.iter().all(|&w| w == 0.5));
        assert!(next.agents[0].lambda.iter().all(|&w| w == 0.5));
        assert!(next.agents[0].nu.iter().all(|&w| w == 0.5));
    }

    #[test]
    fn single_memory_lambda_is_one() {
        let m = coin_model(vec![0.0, 1.0, 0.5, 0.2]);
        let p = init_policy(&m, &[1], 3, InitScheme::Random).unwrap();
        let e = bellman_solve(&build_joint_chain(&m, &p).unwrap()).unwrap();
        let l = update_lambda(&m, &p, &e.frequency, &e.value).unwrap();
        assert_eq!(l[0], vec![1.0, 1.0]);
        assert_eq!(update_nu(&m, &p, &e.value).unwrap()[0], vec![1.0]);
    }

    #[test]
    fn constant_value_preserves_nu() {
        let m = coin_model(vec![0.0, 1.0, 0.5, 0.2]);
        let p = init_policy(&m, &[3], 11, InitScheme::Random).unwrap();
        let v = vec![2.5; 6];
        let nu = update_nu(&m, &p, &v).unwrap();
        for (a, b) in nu[0].iter().zip(&p.agents[0].nu) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn updated_rows_are_stochastic() {
        let m = coin_model(vec![0.0, 1.0, 0.5, 0.2]);
        let p = init_policy(&m, &[3], 5, InitScheme::Random).unwrap();
        let e = bellman_solve(&build_joint_chain(&m, &p).unwrap()).unwrap();
        let next = m_step(&m, &p, &e).unwrap();
        for c in &next.agents {
            for row in c.pi.chunks(c.num_actions).chain(c.lambda.chunks(c.memory_size)) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            assert!((c.nu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        next.validate(Some(&m)).unwrap();
    }

    #[test]
    fn wrong_table_length_is_rejected() {
        let m = coin_model(vec![0.0, 1.0, 0.5, 0.2]);
        let p = init_policy(&m, &[2], 5, InitScheme::Random).unwrap();
        assert!(update_nu(&m, &p, &[1.0]).is_err());
    }
}
