use meanq::diagnostics::jensen_gap;
use meanq::distributional::{cross_entropy_loss, expected_value, project, softmax, Support};
use meanq::exploration::{greedy_from_members, ucb_action, EpsilonSchedule};
use meanq::learner::compute_scalar_targets;
use meanq::replay::{MultiStepSample, PriorityParams, ReplayMemory, Transition};
use meanq::rng::substream;
use meanq::value_model::{ActionValueTable, Ensemble, Estimator, TargetEnsemble, TargetMode};
use proptest::prelude::*;

/// Values on a 1/8 grid so sums and shifts are exact.
fn dyadic() -> impl Strategy<Value = f64> {
    (-400i32..400).prop_map(|v| f64::from(v) / 8.0)
}

fn table_ensemble(values: &[Vec<f64>], n_states: usize, n_actions: usize) -> Ensemble<f64> {
    Ensemble::new(
        values
            .iter()
            .map(|v| Estimator::Table(ActionValueTable::from_values(n_states, n_actions, v.clone()).unwrap()))
            .collect(),
    )
    .unwrap()
}

fn ensemble_values(k: usize, n_states: usize, n_actions: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(dyadic(), n_states * n_actions), k)
}

fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n).prop_map(|mut p| {
        p[0] += 1e-3;
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= total);
        p
    })
}

fn transition(i: usize, terminal: bool, episode_id: u64) -> Transition<f64> {
    Transition { state: i % 7, action: i % 3, reward: i as f64, next_state: (i + 1) % 7, terminal, episode_id }
}

proptest! {
    #[test]
    fn ensemble_value_is_max_of_mean(values in ensemble_values(4, 3, 3)) {
        let e = table_ensemble(&values, 3, 3);
        for s in 0..3 {
            let mean = e.mean_values(s).unwrap();
            let max = mean.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(e.value(s).unwrap().to_bits(), max.to_bits());
        }
    }

    #[test]
    fn greedy_action_is_shift_invariant(values in ensemble_values(5, 2, 4), c in dyadic()) {
        let e = table_ensemble(&values, 2, 4);
        let shifted: Vec<Vec<f64>> = values.iter().map(|v| v.iter().map(|x| x + c).collect()).collect();
        let f = table_ensemble(&shifted, 2, 4);
        for s in 0..2 {
            prop_assert_eq!(e.greedy_action(s).unwrap(), f.greedy_action(s).unwrap());
        }
    }

    #[test]
    fn single_member_mean_is_prediction(values in ensemble_values(1, 3, 2)) {
        let e = table_ensemble(&values, 3, 2);
        for s in 0..3 {
            prop_assert_eq!(e.mean_values(s).unwrap(), e.member(0).predict(s).unwrap());
            prop_assert!(e.std_values(s).unwrap().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn target_sync_never_touches_live(values in ensemble_values(3, 2, 2), period in 1u64..5, steps in 1u64..20) {
        let live = table_ensemble(&values, 2, 2);
        let before = live.clone();
        let mut lagging = TargetEnsemble::new(TargetMode::Lagging { period }, &live).unwrap();
        let online = TargetEnsemble::new(TargetMode::Online, &live).unwrap();
        for step in 1..=steps {
            lagging.sync(&live, step);
        }
        prop_assert_eq!(&live, &before);
        for s in 0..2 {
            for k in 0..3 {
                let a = online.view(&live).member(k).predict(s).unwrap();
                let b = live.member(k).predict(s).unwrap();
                prop_assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
        }
    }

    #[test]
    fn sum_trees_stay_consistent(
        capacity in 1usize..40,
        ops in prop::collection::vec((any::<bool>(), 0usize..64, 0.0f64..5.0), 1..200),
    ) {
        let mut memory = ReplayMemory::<f64>::new(capacity, 2, PriorityParams::default()).unwrap();
        for (i, (push, slot, error)) in ops.into_iter().enumerate() {
            if push || memory.is_empty() {
                memory.push(transition(i, false, 0));
            } else {
                memory.update_priorities(i % 2, &[slot % memory.len()], &[error]).unwrap();
            }
            for k in 0..2 {
                let tree = memory.tree(k);
                prop_assert!(tree.is_consistent());
                for leaf in 0..memory.len() {
                    prop_assert!(tree.get(leaf) >= 1e-6f64.sqrt() * 0.999);
                }
            }
        }
    }

    #[test]
    fn single_step_assembly_round_trips(n in 1usize..30, pick in 0usize..30, terminal_every in 1usize..6) {
        let mut memory = ReplayMemory::<f64>::new(32, 1, PriorityParams::default()).unwrap();
        for i in 0..n {
            memory.push(transition(i, i % terminal_every == terminal_every - 1, (i / terminal_every) as u64));
        }
        let index = pick % n;
        let stored = memory.get(index).unwrap().clone();
        let sample = memory.multi_step_assemble(index, 1).unwrap();
        prop_assert_eq!(
            (sample.state, sample.action, sample.rewards.clone(), sample.bootstrap_state, sample.terminal),
            (stored.state, stored.action, vec![stored.reward], stored.next_state, stored.terminal)
        );
        prop_assert_eq!(sample.effective_steps, 1);
        prop_assert!(!sample.terminated_early);
    }

    #[test]
    fn ring_eviction_forgets_oldest(capacity in 1usize..20, extra in 0usize..40) {
        let mut memory = ReplayMemory::<f64>::new(capacity, 1, PriorityParams::default()).unwrap();
        for i in 0..capacity + extra {
            memory.push(transition(i, false, 0));
        }
        let kept: Vec<f64> = memory.iter_chronological().map(|t| t.reward).collect();
        let expected: Vec<f64> = (extra..capacity + extra).map(|i| i as f64).collect();
        prop_assert_eq!(kept, expected);
    }

    #[test]
    fn multi_step_respects_episodes(
        n in 2usize..40,
        capacity in 2usize..30,
        steps in 1usize..6,
        terminal_every in 1usize..8,
        pick in 0usize..40,
    ) {
        let mut memory = ReplayMemory::<f64>::new(capacity, 1, PriorityParams::default()).unwrap();
        for i in 0..n {
            memory.push(transition(i, i % terminal_every == terminal_every - 1, (i / terminal_every) as u64));
        }
        let index = pick % memory.len();
        let first = memory.get(index).unwrap().clone();
        let sample = memory.multi_step_assemble(index, steps).unwrap();
        prop_assert!(sample.effective_steps >= 1 && sample.effective_steps <= steps);
        prop_assert_eq!(sample.rewards.len(), sample.effective_steps);
        if sample.terminated_early {
            prop_assert!(sample.terminal && sample.effective_steps < steps);
        }
        for (m, &r) in sample.rewards.iter().enumerate() {
            let t = memory.get((index + m) % capacity).unwrap();
            prop_assert_eq!(t.reward, r);
            prop_assert_eq!(t.episode_id, first.episode_id);
        }
    }

    #[test]
    fn projection_is_linear_in_the_distribution(
        p in distribution(11),
        q in distribution(11),
        alpha in 0.0f64..1.0,
        reward in -3.0f64..3.0,
        gamma in 0.0f64..1.0,
        terminal in any::<bool>(),
    ) {
        let support = Support::<f64>::new(-5.0, 5.0, 11).unwrap();
        let mixed: Vec<f64> = p.iter().zip(&q).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
        let lhs = project(&mixed, reward, gamma, terminal, &support).unwrap();
        let pp = project(&p, reward, gamma, terminal, &support).unwrap();
        let pq = project(&q, reward, gamma, terminal, &support).unwrap();
        for j in 0..11 {
            let rhs = alpha * pp.probs()[j] + (1.0 - alpha) * pq.probs()[j];
            prop_assert!((lhs.probs()[j] - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn interior_projection_preserves_the_mean(p in distribution(21), reward in -1.0f64..1.0, gamma in 0.0f64..0.8) {
        let support = Support::<f64>::new(-10.0, 10.0, 21).unwrap();
        let projected = project(&p, reward, gamma, false, &support).unwrap();
        let want = reward + gamma * expected_value(&p, &support).unwrap();
        prop_assert!((expected_value(projected.probs(), &support).unwrap() - want).abs() < 1e-9);
        prop_assert!((projected.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_target(
        logits in prop::collection::vec(-8.0f64..8.0, 2..30),
        seed in any::<u64>(),
    ) {
        let n = logits.len();
        let mut target: Vec<f64> = (0..n).map(|j| ((seed >> (j % 64)) & 1) as f64 + 0.1).collect();
        let total: f64 = target.iter().sum();
        target.iter_mut().for_each(|c| *c /= total);
        let (_, grad) = cross_entropy_loss(&target, &logits).unwrap();
        let probs = softmax(&logits);
        for j in 0..n {
            prop_assert!((grad[j] - (probs[j] - target[j])).abs() < 1e-14);
        }
    }

    #[test]
    fn targets_depend_only_on_the_transitions(
        values in ensemble_values(3, 4, 2),
        rewards in prop::collection::vec(-2.0f64..2.0, 1..12),
        rotate in 0usize..12,
    ) {
        let e = table_ensemble(&values, 4, 2);
        let batch: Vec<MultiStepSample<f64>> = rewards
            .iter()
            .enumerate()
            .map(|(i, &r)| MultiStepSample {
                state: i % 4,
                action: i % 2,
                rewards: vec![r],
                bootstrap_state: (i * 3) % 4,
                terminal: i % 5 == 4,
                terminated_early: false,
                effective_steps: 1,
                index: i,
                is_weight: 1.0,
            })
            .collect();
        let mut reordered = batch.clone();
        let shift = rotate % batch.len();
        reordered.rotate_left(shift);
        for s in &mut reordered {
            s.index += 100;
            s.is_weight = 0.5;
        }
        let a = compute_scalar_targets(&batch, &e, 0.9).unwrap();
        let mut b = compute_scalar_targets(&reordered, &e, 0.9).unwrap();
        b.rotate_right(shift);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn epsilon_is_monotone_and_clamped(start in 0.0f64..1.0, frac in 0.0f64..1.0, horizon in 1u64..10_000, t in 0u64..20_000) {
        let schedule = EpsilonSchedule { start, end: start * frac, horizon };
        let (now, later) = (schedule.epsilon_at(t), schedule.epsilon_at(t + 1));
        prop_assert!(later <= now);
        prop_assert!(now <= schedule.start && now >= schedule.end);
    }

    #[test]
    fn ucb_is_shift_invariant(
        values in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 1..6),
        lambda in 0.0f64..3.0,
        c in -50.0f64..50.0,
    ) {
        let scores = |vals: &[Vec<f64>]| -> Vec<f64> {
            let k = vals.len() as f64;
            (0..4)
                .map(|a| {
                    let m = vals.iter().map(|v| v[a]).sum::<f64>() / k;
                    let var = vals.iter().map(|v| (v[a] - m).powi(2)).sum::<f64>() / k;
                    m + lambda * var.sqrt()
                })
                .collect()
        };
        let mut sorted = scores(&values);
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        prop_assume!(sorted[0] - sorted[1] > 1e-9);
        let shifted: Vec<Vec<f64>> = values.iter().map(|v| v.iter().map(|x| x + c).collect()).collect();
        prop_assert_eq!(ucb_action(&values, lambda).unwrap(), ucb_action(&shifted, lambda).unwrap());
    }

    #[test]
    fn identical_members_make_ucb_greedy(row in prop::collection::vec(dyadic(), 5), k in 1usize..6, lambda in 0.0f64..10.0) {
        let members = vec![row; k];
        prop_assert_eq!(ucb_action(&members, lambda).unwrap(), greedy_from_members(&members).unwrap());
    }

    #[test]
    fn jensen_gap_of_identical_runs_is_zero(row in prop::collection::vec(-10.0f64..10.0, 1..6), runs in 2usize..10) {
        prop_assert_eq!(jensen_gap(&vec![row; runs]).unwrap(), 0.0);
    }

    #[test]
    fn jensen_gap_ignores_a_common_offset(
        runs in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 2..20),
        c in -100.0f64..100.0,
    ) {
        let shifted: Vec<Vec<f64>> = runs.iter().map(|r| r.iter().map(|x| x + c).collect()).collect();
        prop_assert!((jensen_gap(&runs).unwrap() - jensen_gap(&shifted).unwrap()).abs() < 1e-9);
    }
}

#[test]
fn replay_streams_are_member_specific() {
    let mut memory = ReplayMemory::<f64>::new(64, 2, PriorityParams::default()).unwrap();
    for i in 0..64 {
        memory.push(transition(i, false, 0));
    }
    let a = memory.sample_indices(0, 16, &mut substream(1, "replay", 0)).unwrap();
    let b = memory.sample_indices(1, 16, &mut substream(1, "replay", 1)).unwrap();
    assert_ne!(a, b);
}
