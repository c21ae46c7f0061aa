use meanq::environments::{value_iteration, EnvSpec, EnvironmentHandle};
use meanq::rng::substream;
use rand::Rng as _;

/// Upper tail critical value of chi-square with `df` degrees of freedom at
/// roughly p = 1e-4 (Wilson-Hilferty).
fn chi_square_critical(df: usize) -> f64 {
    let k = df as f64;
    let z = 3.719;
    k * (1.0 - 2.0 / (9.0 * k) + z * (2.0 / (9.0 * k)).sqrt()).powi(3)
}

/// Drives a uniform random policy for `steps` steps and checks every visited
/// `(s, a)` row against the tabular description.
fn check_consistency(spec: EnvSpec, steps: usize) {
    let mdp = spec.build().unwrap();
    let (n, m) = (mdp.n_states(), mdp.n_actions());
    let mut env = EnvironmentHandle::from_spec(&spec, 50, substream(9, "env", 0)).unwrap();
    let mut policy = substream(9, "policy", 0);
    let mut counts = vec![0usize; n * m * n];
    let mut reward_sums = vec![0.0f64; n * m];
    let sigma = match spec {
        EnvSpec::NoisyChain { sigma, .. } | EnvSpec::BiasedBandit { sigma, .. } => sigma,
        _ => 0.0,
    };
    let mut s = env.reset();
    for _ in 0..steps {
        let a = policy.random_range(0..m);
        let out = env.step(a).unwrap();
        if sigma == 0.0 {
            assert_eq!(out.reward, mdp.reward(s, a), "{spec}: reward at ({s}, {a})");
        }
        counts[(s * m + a) * n + out.next_state] += 1;
        reward_sums[s * m + a] += out.reward;
        s = if out.terminal || out.truncated { env.reset() } else { out.next_state };
    }
    let mut checked = 0;
    for s in 0..n {
        for a in 0..m {
            let row = &counts[(s * m + a) * n..(s * m + a + 1) * n];
            let total: usize = row.iter().sum();
            if total < 500 {
                continue;
            }
            checked += 1;
            let probs = mdp.transition_row(s, a);
            let mut chi = 0.0;
            let mut support = 0;
            for (&c, &p) in row.iter().zip(probs) {
                if p == 0.0 {
                    assert_eq!(c, 0, "{spec}: impossible transition from ({s}, {a})");
                    continue;
                }
                support += 1;
                let expected = p * total as f64;
                chi += (c as f64 - expected).powi(2) / expected;
            }
            if support > 1 {
                assert!(chi < chi_square_critical(support - 1), "{spec}: chi-square {chi} at ({s}, {a})");
            }
            let mean = reward_sums[s * m + a] / total as f64;
            let expected = mdp.reward(s, a);
            if sigma > 0.0 {
                assert!((mean - expected).abs() < 5.0 * sigma / (total as f64).sqrt(), "{spec}: reward at ({s}, {a})");
            }
        }
    }
    assert!(checked > 0);
}

#[test]
fn interactive_layer_matches_tabular_description() {
    check_consistency(EnvSpec::ChainWalk { n: 6, gamma: 0.9 }, 100_000);
    check_consistency(EnvSpec::NoisyChain { n: 5, sigma: 1.0, gamma: 0.9 }, 100_000);
    check_consistency(EnvSpec::CliffGrid { width: 4, height: 3, slip: 0.2, gamma: 0.9 }, 200_000);
    check_consistency(EnvSpec::BiasedBandit { actions: 3, mean: 0.5, sigma: 2.0, gamma: 0.9 }, 30_000);
}

#[test]
fn value_iteration_satisfies_bellman_equation() {
    for spec in [
        EnvSpec::ChainWalk { n: 7, gamma: 0.95 },
        EnvSpec::CliffGrid { width: 6, height: 4, slip: 0.1, gamma: 0.97 },
        EnvSpec::BiasedBandit { actions: 4, mean: -0.3, sigma: 1.0, gamma: 0.8 },
    ] {
        let mdp = spec.build().unwrap();
        let tolerance = 1e-10;
        let result = value_iteration(&mdp, tolerance).unwrap();
        assert!(result.residual < tolerance);
        let mut worst = 0.0f64;
        for s in 0..mdp.n_states() {
            let v = result.q_row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(v, result.v_star[s]);
            for a in 0..mdp.n_actions() {
                let next: f64 = mdp.transition_row(s, a).iter().zip(&result.v_star).map(|(p, v)| p * v).sum();
                worst = worst.max((mdp.reward(s, a) + mdp.gamma() * next - result.q(s, a)).abs());
            }
        }
        assert!(worst <= result.residual * (1.0 + 1e-9) + 1e-15, "{spec}: {worst} > {}", result.residual);
    }
}
