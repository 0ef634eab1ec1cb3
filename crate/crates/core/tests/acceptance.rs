//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

mod common;

use std::time::Instant;

use decpomdp_em::oracle::{enumerate_alpha_beta, enumerate_return};
use decpomdp_em::solver::expected_return_from_value;
use decpomdp_em::{
    apply_backward_operator, apply_forward_operator, bellman_solve, build_joint_chain, builtin,
    expected_return, forward_backward, mbem_estep, reward_bounds, run, tmax_bound, Algorithm,
    SolverConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn engine_equivalence() -> Verdict {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (m, p) in common::instances() {
        let chain = build_joint_chain(&m, &p).unwrap();
        let eps = 1e-6;
        let t_max = tmax_bound(m.discount, eps).unwrap();
        let em = forward_backward(&chain, t_max);
        let bem = bellman_solve(&chain).unwrap();
        let mbem = mbem_estep(&chain, eps, chain.initial(), chain.scaled_reward(), 4 * t_max).unwrap();
        for (a, b) in [(&em, &bem), (&em, &mbem), (&bem, &mbem)] {
            worst = worst
                .max(common::sup(a.frequency.values(), b.frequency.values()))
                .max(common::sup(a.value.values(), b.value.values()));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 2e-6 && secs < 60.0,
        format!("max pairwise sup gap {worst:.3e} (tol 2e-6), {secs:.2}s (limit 60s)"),
    )
}

fn fixed_point_residuals() -> Verdict {
    let mut worst: f64 = 0.0;
    for (m, p) in common::instances() {
        let chain = build_joint_chain(&m, &p).unwrap();
        let e = bellman_solve(&chain).unwrap();
        let af = apply_forward_operator(&chain, e.frequency.values()).unwrap();
        let bv = apply_backward_operator(&chain, e.value.values()).unwrap();
        worst = worst
            .max(common::sup(&af, e.frequency.values()))
            .max(common::sup(&bv, e.value.values()));
    }
    verdict(worst <= 1e-10, format!("max residual {worst:.3e} (tol 1e-10)"))
}

fn contraction() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0;
    let mut pairs = 0;
    for (m, p) in common::instances() {
        let chain = build_joint_chain(&m, &p).unwrap();
        let n = chain.dim();
        let g = m.discount;
        for _ in 0..100 {
            let mut draw = || (0..n).map(|_| rng.random_range(-10.0..10.0)).collect::<Vec<f64>>();
            let (f, h) = (draw(), draw());
            let af = apply_forward_operator(&chain, &f).unwrap();
            let ah = apply_forward_operator(&chain, &h).unwrap();
            let bf = apply_backward_operator(&chain, &f).unwrap();
            let bh = apply_backward_operator(&chain, &h).unwrap();
            // relative slack for rounding in the products
            if common::l1(&af, &ah) > g * common::l1(&f, &h) * (1.0 + 1e-12) {
                violations += 1;
            }
            if common::sup(&bf, &bh) > g * common::sup(&f, &h) * (1.0 + 1e-12) {
                violations += 1;
            }
            pairs += 1;
        }
    }
    verdict(violations == 0, format!("{violations} violations over {pairs} pairs"))
}

fn truncation_bound() -> Verdict {
    let mut notes = Vec::new();
    let mut pass = true;
    for (gamma, expected) in [(0.9, 43), (0.99, 687)] {
        let t_max = tmax_bound(gamma, 0.1).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..50u64 {
            let (m, p) = common::instance(k, 1 + (k as usize % 4), gamma);
            let chain = build_joint_chain(&m, &p).unwrap();
            let fb = forward_backward(&chain, t_max);
            let exact = bellman_solve(&chain).unwrap();
            worst = worst
                .max(fb.frequency.distance_sup(exact.frequency.values()))
                .max(fb.value.distance_sup(exact.value.values()));
        }
        pass &= t_max == expected && worst < 0.1;
        notes.push(format!("γ={gamma}: T_max={t_max} (expect {expected}), max gap {worst:.4}"));
    }
    verdict(pass, notes.join("; "))
}

fn cold_start_bound() -> Verdict {
    let mut violations = 0;
    let mut max_ratio: f64 = 0.0;
    for (m, p) in common::instances() {
        let chain = build_joint_chain(&m, &p).unwrap();
        for eps in [0.1, 1e-6] {
            let t_max = tmax_bound(m.discount, eps).unwrap();
            let e = mbem_estep(&chain, eps, chain.initial(), chain.scaled_reward(), 4 * t_max).unwrap();
            if e.inner_iters > t_max {
                violations += 1;
            }
            max_ratio = max_ratio.max(e.inner_iters as f64 / t_max as f64);
        }
    }
    verdict(violations == 0, format!("{violations} violations, max L/T_max {max_ratio:.3}"))
}

fn monotonicity() -> Verdict {
    let model = builtin::toy2agent();
    let mut worst_drop: f64 = 0.0;
    for algorithm in Algorithm::ALL {
        for seed in 0..20 {
            let config = SolverConfig {
                algorithm,
                epsilon: 0.1,
                max_iters: 100,
                stop_on_convergence: false,
                seed,
                exact_j: true,
                ..SolverConfig::default()
            };
            let out = run(&model, &config).unwrap();
            for w in out.trace.windows(2) {
                worst_drop = worst_drop.max(w[0].expected_return - w[1].expected_return);
            }
        }
    }
    verdict(
        worst_drop <= 1e-9,
        format!("largest decrease of exact J {worst_drop:.3e} (tol 1e-9) at ε=0.1"),
    )
}

fn trace_agreement() -> Verdict {
    let mut worst: f64 = 0.0;
    for name in builtin::NAMES {
        let model = builtin::load(name).unwrap();
        let traces: Vec<Vec<f64>> = Algorithm::ALL
            .iter()
            .map(|&algorithm| {
                let config = SolverConfig {
                    algorithm,
                    epsilon: 1e-6,
                    max_iters: 50,
                    stop_on_convergence: false,
                    seed: 7,
                    exact_j: true,
                    ..SolverConfig::default()
                };
                run(&model, &config)
                    .unwrap()
                    .trace
                    .iter()
                    .map(|t| t.expected_return)
                    .collect()
            })
            .collect();
        for k in 0..50 {
            let js = [traces[0][k], traces[1][k], traces[2][k]];
            let lo = js.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = js.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            worst = worst.max((hi - lo) / (1.0 + js[1].abs()));
        }
    }
    verdict(
        worst <= 1e-5,
        format!("max |ΔJ|/(1+|J|) across engines {worst:.3e} (tol 1e-5)"),
    )
}

fn warm_start_efficiency() -> Verdict {
    let start = Instant::now();
    let model = builtin::toy2agent();
    let t_max = tmax_bound(0.99, 0.1).unwrap();
    let config = SolverConfig {
        algorithm: Algorithm::Mbem,
        epsilon: 0.1,
        max_iters: 100,
        stop_on_convergence: false,
        seed: 0,
        ..SolverConfig::default()
    };
    let out = run(&model, &config).unwrap();
    let mut later: Vec<usize> = out.trace[1..].iter().map(|t| t.inner_iters).collect();
    later.sort_unstable();
    let median = if later.len() % 2 == 1 {
        later[later.len() / 2] as f64
    } else {
        (later[later.len() / 2 - 1] + later[later.len() / 2]) as f64 / 2.0
    };
    let first = out.trace[0].inner_iters;
    let secs = start.elapsed().as_secs_f64();
    verdict(
        median <= t_max as f64 / 10.0 && first <= t_max && secs < 120.0,
        format!(
            "T_max={t_max}, L at k=0 {first}, median L for k≥1 {median} (limit {:.1}), {secs:.2}s",
            t_max as f64 / 10.0
        ),
    )
}

fn duality() -> Verdict {
    let (mut worst_dual, mut worst_j): (f64, f64) = (0.0, 0.0);
    for (m, p) in common::instances() {
        let chain = build_joint_chain(&m, &p).unwrap();
        let e = bellman_solve(&chain).unwrap();
        let lhs = common::dot(chain.initial(), e.value.values());
        let rhs = common::dot(e.frequency.values(), chain.scaled_reward());
        let scale = lhs.abs().max(rhs.abs());
        if scale > 0.0 {
            worst_dual = worst_dual.max((lhs - rhs).abs() / scale);
        }
        let j_f = expected_return(&chain, &m, &p, e.frequency.values());
        let j_v = expected_return_from_value(&chain, e.value.values());
        worst_j = worst_j.max((j_f - j_v).abs() / j_f.abs().max(j_v.abs()).max(1e-300));
    }
    verdict(
        worst_dual <= 1e-8 && worst_j <= 1e-6,
        format!("⟨p₀,V⟩ vs ⟨F,r̄⟩ rel {worst_dual:.3e} (tol 1e-8); J forms rel {worst_j:.3e} (tol 1e-6)"),
    )
}

fn oracle_agreement() -> Verdict {
    let mut pass = true;
    let mut worst_ratio: f64 = 0.0;
    for k in 0..10u64 {
        let (m, p) = common::instance(100 + k, 2, 0.8);
        let chain = build_joint_chain(&m, &p).unwrap();
        let exact = expected_return(&chain, &m, &p, bellman_solve(&chain).unwrap().frequency.values());
        let partial = enumerate_return(&m, &p, 20).unwrap();
        let (lo, hi) = reward_bounds(&m);
        let bound = 0.8f64.powi(21) * lo.abs().max(hi.abs()) / 0.2;
        let gap = (exact - partial).abs();
        pass &= gap <= bound;
        worst_ratio = worst_ratio.max(gap / bound);
    }
    let mut worst_ab: f64 = 0.0;
    for k in 0..5u64 {
        let (m, p) = common::instance(200 + k, 1, 0.9);
        let chain = build_joint_chain(&m, &p).unwrap();
        let mut alpha = chain.initial().to_vec();
        let mut beta = chain.scaled_reward().to_vec();
        for t in 0..=5 {
            let (a, b) = enumerate_alpha_beta(&chain, t).unwrap();
            worst_ab = worst_ab.max(common::sup(&a, &alpha)).max(common::sup(&b, &beta));
            alpha = chain.push_forward(&alpha);
            beta = chain.pull_back(&beta);
        }
    }
    pass &= worst_ab <= 1e-12;
    verdict(
        pass,
        format!("H=20 gap / tail bound max {worst_ratio:.3}; α/β enumeration gap {worst_ab:.3e} (tol 1e-12)"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("engine equivalence", engine_equivalence),
        ("fixed-point residuals", fixed_point_residuals),
        ("contraction", contraction),
        ("truncation bound", truncation_bound),
        ("cold-start bound", cold_start_bound),
        ("EM monotonicity", monotonicity),
        ("per-iteration trace agreement", trace_agreement),
        ("warm-start efficiency", warm_start_efficiency),
        ("duality identity", duality),
        ("oracle agreement", oracle_agreement),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        if !v.pass {
            failures += 1;
        }
        println!(
            "{} {:>2} {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            i + 1,
            v.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
