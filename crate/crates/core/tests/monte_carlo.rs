use decpomdp_em::oracle::{enumerate_return, monte_carlo_return};
use decpomdp_em::{bellman_solve, build_joint_chain, builtin, expected_return, init_policy, InitScheme};

#[test]
fn simulation_agrees_with_exact_return() {
    // γ lowered to 0.9 so a 300-step horizon leaves a tail below 1e-12
    let m = builtin::load_with_discount("toy2agent", Some(0.9)).unwrap();
    let p = init_policy(&m, &[2, 2], 5, InitScheme::Random).unwrap();
    let chain = build_joint_chain(&m, &p).unwrap();
    let exact = expected_return(&chain, &m, &p, bellman_solve(&chain).unwrap().frequency.values());
    let (mean, se) = monte_carlo_return(&m, &p, 100_000, 300, 11).unwrap();
    assert!((mean - exact).abs() <= 4.0 * se, "mean {mean} exact {exact} se {se}");
}

#[test]
fn marginalization_matches_short_path_sums() {
    // horizon 2 by explicit path enumeration on chain2 with |Z| = 1
    let m = builtin::chain2();
    let p = init_policy(&m, &[1], 0, InitScheme::Random).unwrap();
    let pi = &p.agents[0].pi;
    let (nx, na) = (2, 2);
    let mut total = 0.0;
    for x0 in 0..nx {
        for a0 in 0..na {
            let w0 = m.initial_state[x0] * pi[a0];
            total += w0 * m.reward[x0 * na + a0];
            for x1 in 0..nx {
                for a1 in 0..na {
                    let w1 = w0 * m.transition[(x0 * na + a0) * nx + x1] * pi[a1];
                    total += m.discount * w1 * m.reward[x1 * na + a1];
                    for x2 in 0..nx {
                        for a2 in 0..na {
                            let w2 = w1 * m.transition[(x1 * na + a1) * nx + x2] * pi[a2];
                            total += m.discount.powi(2) * w2 * m.reward[x2 * na + a2];
                        }
                    }
                }
            }
        }
    }
    assert!((enumerate_return(&m, &p, 2).unwrap() - total).abs() < 1e-12);
}
