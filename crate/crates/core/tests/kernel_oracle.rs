mod common;

use decpomdp_em::{
    action_conditioned_kernel, build_joint_chain, observation_conditioned_kernel, scale_reward,
    DecPomdpModel, JointPolicy,
};

/// P[(x',z'),(x,z)] by looping over every agent's own tables; only the
/// digit layout (last agent fastest) is shared with the library.
fn brute_force_kernel(m: &DecPomdpModel, p: &JointPolicy) -> Vec<f64> {
    let nx = m.num_states();
    let a_sizes: Vec<usize> = m.actions.iter().map(Vec::len).collect();
    let y_sizes: Vec<usize> = m.observations.iter().map(Vec::len).collect();
    let z_sizes: Vec<usize> = p.agents.iter().map(|c| c.memory_size).collect();
    let digits = |mut i: usize, sizes: &[usize]| {
        let mut d = vec![0; sizes.len()];
        for k in (0..sizes.len()).rev() {
            d[k] = i % sizes[k];
            i /= sizes[k];
        }
        d
    };
    let na: usize = a_sizes.iter().product();
    let ny: usize = y_sizes.iter().product();
    let nz: usize = z_sizes.iter().product();
    let n = nx * nz;
    let mut out = vec![0.0; n * n];
    for x in 0..nx {
        for z in 0..nz {
            let zd = digits(z, &z_sizes);
            for x2 in 0..nx {
                for z2 in 0..nz {
                    let z2d = digits(z2, &z_sizes);
                    let mut total = 0.0;
                    for a in 0..na {
                        let ad = digits(a, &a_sizes);
                        let mut pi = 1.0;
                        for (i, c) in p.agents.iter().enumerate() {
                            pi *= c.pi[zd[i] * c.num_actions + ad[i]];
                        }
                        let t = m.transition[(x * na + a) * nx + x2];
                        for y in 0..ny {
                            let yd = digits(y, &y_sizes);
                            let o = m.observation[(x2 * na + a) * ny + y];
                            let mut lam = 1.0;
                            for (i, c) in p.agents.iter().enumerate() {
                                lam *= c.lambda
                                    [(zd[i] * c.num_observations + yd[i]) * c.memory_size + z2d[i]];
                            }
                            total += lam * o * t * pi;
                        }
                    }
                    out[(x2 * nz + z2) * n + x * nz + z] = total;
                }
            }
        }
    }
    out
}

#[test]
fn kernel_matches_brute_force() {
    for k in 0..6 {
        let (m, p) = common::instance(k, 3, 0.9);
        let chain = build_joint_chain(&m, &p).unwrap();
        let oracle = brute_force_kernel(&m, &p);
        assert!(common::sup(chain.kernel(), &oracle) < 1e-12, "instance {k}");
    }
}

#[test]
fn kernel_is_column_stochastic() {
    for (m, p) in common::instances() {
        let chain = build_joint_chain(&m, &p).unwrap();
        let n = chain.dim();
        for src in 0..n {
            let s: f64 = (0..n).map(|d| chain.prob(d, src)).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
        assert!((chain.initial().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(chain.scaled_reward().iter().all(|r| (0.0..=1.0).contains(r)));
    }
}

#[test]
fn initial_and_reward_tables() {
    let (m, p) = common::instance(3, 3, 0.9);
    let chain = build_joint_chain(&m, &p).unwrap();
    let nu = p.joint_nu();
    let pi = p.joint_pi();
    let rbar = scale_reward(&m).values;
    let nz = nu.len();
    let na = m.action_space().len();
    for x in 0..3 {
        for z in 0..nz {
            let i = x * nz + z;
            assert!((chain.initial()[i] - m.initial_state[x] * nu[z]).abs() < 1e-15);
            let r: f64 = (0..na).map(|a| pi[z * na + a] * rbar[x * na + a]).sum();
            assert!((chain.scaled_reward()[i] - r).abs() < 1e-12);
        }
    }
}

#[test]
fn factorizations_reproduce_the_kernel() {
    for k in 0..6 {
        let (m, p) = common::instance(k, 3, 0.95);
        let chain = build_joint_chain(&m, &p).unwrap();
        let ak = action_conditioned_kernel(&m, &p).unwrap();
        let ok = observation_conditioned_kernel(&m, &p).unwrap();
        let pi = p.joint_pi();
        let lambda = p.joint_lambda();
        let nz = p.memory_space().len();
        let na = m.action_space().len();
        let ny = m.observation_space().len();
        let n = chain.dim();
        for src in 0..n {
            let z = src % nz;
            for dest in 0..n {
                let (x2, z2) = (dest / nz, dest % nz);
                let via_actions: f64 = (0..na).map(|a| pi[z * na + a] * ak.get(src, a, dest)).sum();
                let via_obs: f64 = (0..ny)
                    .map(|y| lambda[(z * ny + y) * nz + z2] * ok.get(src, x2, y))
                    .sum();
                assert!((via_actions - chain.prob(dest, src)).abs() < 1e-12);
                assert!((via_obs - chain.prob(dest, src)).abs() < 1e-12);
            }
            let marginal: f64 = (0..m.num_states())
                .flat_map(|x2| (0..ny).map(move |y| (x2, y)))
                .map(|(x2, y)| ok.get(src, x2, y))
                .sum();
            assert!((marginal - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn identity_memory_gives_block_diagonal_kernel() {
    let (m, mut p) = common::instance(1, 2, 0.9);
    for c in &mut p.agents {
        for z in 0..c.memory_size {
            for y in 0..c.num_observations {
                for z2 in 0..c.memory_size {
                    c.lambda[(z * c.num_observations + y) * c.memory_size + z2] =
                        if z == z2 { 1.0 } else { 0.0 };
                }
            }
        }
    }
    let ak = action_conditioned_kernel(&m, &p).unwrap();
    let nz = p.memory_space().len();
    let n = 2 * nz;
    for src in 0..n {
        for a in 0..m.action_space().len() {
            for dest in 0..n {
                if src % nz != dest % nz {
                    assert_eq!(ak.get(src, a, dest), 0.0);
                }
            }
        }
    }
}
