use std::sync::Arc;

use navbot::agents::*;
use navbot::harness::load_map;
use navbot::mazeenv::{EnvConfig, NavEnv};
use navbot::numcore::{
    bias_name, weight_name, Activation, AuxInput, LayerKind, LayerSpec, Network, ParamStore, Tensor,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn latent_state(z: &[f32], aux: [f32; 4]) -> PlannerState {
    PlannerState {
        features: Features::Latent(Arc::from(z)),
        aux,
    }
}

fn random_state(rng: &mut impl Rng, dim: usize) -> PlannerState {
    let z: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    latent_state(&z, std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
}

/// Dense `1 + 4 -> outputs` Q network with zero weights and the given bias.
fn constant_q(bias: &[f32]) -> (Network, ParamStore) {
    let net = Network::new(
        vec![1],
        vec![LayerSpec::dense(5, bias.len(), Activation::Identity)],
        Some(AuxInput { dim: 4, layer: 0 }),
    )
    .unwrap();
    let mut p = ParamStore::new();
    p.insert(weight_name(0), Tensor::zeros(&[bias.len(), 5])).unwrap();
    p.insert(bias_name(0), Tensor::from_vec(bias.to_vec())).unwrap();
    (net, p)
}

fn dense_count(net: &Network) -> usize {
    net.layers()
        .iter()
        .filter(|l| matches!(l.kind, LayerKind::Dense { .. }))
        .count()
}

#[test]
fn e2e_heads_have_the_right_width_and_finite_outputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut env = NavEnv::new(load_map("maze1").unwrap(), EnvConfig::default()).unwrap();
    let s = env.reset().unwrap();
    let state = PlannerState {
        features: Features::Pixels(Arc::new(s.observation)),
        aux: scalar_features(&s.target, s.last_action, 5.0, 0.5, 1.0),
    };
    let (x, aux) = batch_states(&[&state]).unwrap();
    for (head, width) in [(Head::Discrete(5), 5), (Head::Continuous, 2), (Head::Value, 1)] {
        let net = build_e2e_network(head);
        let p = net.init_params(&mut rng);
        let out = net.predict(&p, &x, Some(&aux)).unwrap();
        assert_eq!(out.len(), width);
        assert!(out.data().iter().all(|v| v.is_finite()));
    }
}

#[test]
fn decoupled_policy_shape_and_size() {
    let net = build_decoupled_network(32, Head::Continuous);
    assert_eq!(dense_count(&net), 3);
    match net.layers()[0].kind {
        LayerKind::Dense { in_dim, .. } => assert_eq!(in_dim, 36),
        _ => unreachable!(),
    }
    let small = net.num_params();
    let big = build_e2e_network(Head::Continuous).num_params();
    let ratio = small as f64 / big as f64;
    // 42,626 vs 341,666 weights with the layer sizes used here
    assert_eq!((small, big), (42_626, 341_666));
    assert!(ratio < 0.15, "ratio {ratio}");
}

#[test]
fn epsilon_greedy_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(epsilon_greedy(&[1.0, 3.0, 2.0], 0.0, &mut rng).unwrap(), 1);
    assert_eq!(epsilon_greedy(&[2.0, 2.0], 0.0, &mut rng).unwrap(), 0);
    assert!(matches!(epsilon_greedy(&[], 0.0, &mut rng), Err(AgentError::EmptyQ)));
    let mut counts = [0usize; 5];
    let n = 100_000;
    for _ in 0..n {
        counts[epsilon_greedy(&[0.0, 9.0, 1.0, 2.0, 3.0], 1.0, &mut rng).unwrap()] += 1;
    }
    for c in counts {
        assert!((c as f64 / n as f64 - 0.2).abs() < 0.01, "{counts:?}");
    }
}

#[test]
fn epsilon_schedule_is_linear_then_flat() {
    let c = DqnConfig::default();
    assert_eq!(c.epsilon(0), 1.0);
    assert!((c.epsilon(25_000) - 0.525).abs() < 1e-12);
    assert_eq!(c.epsilon(50_000), 0.05);
    assert_eq!(c.epsilon(10_000_000), 0.05);
}

proptest! {
    #[test]
    fn greedy_choice_survives_positive_affine_maps(
        q in proptest::collection::vec(-10.0f32..10.0, 1..8),
        a in 0.1f32..5.0, b in -5.0f32..5.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let scaled: Vec<f32> = q.iter().map(|v| a * v + b).collect();
        // affine maps can merge near-ties in f32; only compare clear winners
        let best = argmax(&q).unwrap();
        prop_assume!(q.iter().enumerate().all(|(i, &v)| i == best || q[best] - v > 1e-3));
        prop_assert_eq!(
            epsilon_greedy(&q, 0.0, &mut rng).unwrap(),
            epsilon_greedy(&scaled, 0.0, &mut rng).unwrap()
        );
    }

    #[test]
    fn normalized_advantages_are_an_affine_image(adv in proptest::collection::vec(-50.0f32..50.0, 3..60)) {
        let lo = adv.iter().cloned().fold(f32::INFINITY, f32::min);
        let hi = adv.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        prop_assume!(hi - lo > 1e-2);
        let n = normalize_advantages(&adv);
        let (i, j) = (
            adv.iter().position(|&v| v == lo).unwrap(),
            adv.iter().position(|&v| v == hi).unwrap(),
        );
        let s = (n[j] - n[i]) as f64 / (hi - lo) as f64;
        let c = n[i] as f64 - s * lo as f64;
        prop_assert!(s > 0.0);
        for (a, b) in adv.iter().zip(&n) {
            prop_assert!((s * *a as f64 + c - *b as f64).abs() < 1e-4);
        }
    }

    #[test]
    fn huge_clip_range_is_the_plain_ratio_objective(r in 0.0..5.0f64, a in -5.0..5.0f64) {
        prop_assert_eq!(clipped_surrogate(r, a, 1e12), r * a);
    }
}

fn transition(reward: f32, terminal: bool) -> Experience {
    Experience {
        state: latent_state(&[0.5], [0.1, 0.2, 0.3, 0.4]),
        action: 1,
        reward,
        next_state: latent_state(&[-0.5], [0.4, 0.3, 0.2, 0.1]),
        terminal,
    }
}

#[test]
fn double_dqn_target_examples() {
    let (net, online) = constant_q(&[1.0, 2.0]);
    let (_, target) = constant_q(&[5.0, 3.0]);
    let t = transition(1.0, true);
    assert_eq!(dqn_targets(&net, &online, &target, &[&t], 0.99).unwrap(), vec![1.0]);
    let t = transition(1.0, false);
    let y = dqn_targets(&net, &online, &target, &[&t], 0.99).unwrap()[0];
    assert!((y - 3.97).abs() < 1e-6);
    // identical networks collapse to r + gamma * max Q
    let y = dqn_targets(&net, &target, &target, &[&t], 0.99).unwrap()[0];
    assert!((y - (1.0 + 0.99 * 5.0)).abs() < 1e-6);
}

fn dqn_cfg() -> DqnConfig {
    DqnConfig {
        lr: 1e-2,
        ..DqnConfig::default()
    }
}

#[test]
fn zero_td_error_leaves_parameters_alone() {
    let (net, q) = constant_q(&[0.0, 2.5]);
    let mut agent = DqnAgent::from_params(net, q.clone(), dqn_cfg());
    let t = transition(2.5, true);
    let u = agent.update(&[&t]).unwrap();
    assert_eq!(u.loss, 0.0);
    assert_eq!(agent.q, q);
}

#[test]
fn dqn_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let net = Network::new(
        vec![1],
        vec![LayerSpec::dense(5, 2, Activation::Identity)],
        Some(AuxInput { dim: 4, layer: 0 }),
    )
    .unwrap();
    let q = net.init_params(&mut rng);
    let mut agent = DqnAgent::from_params(net.clone(), q, dqn_cfg());
    agent.target = net.init_params(&mut rng);
    let t = Experience {
        state: random_state(&mut rng, 1),
        action: 0,
        reward: 0.7,
        next_state: random_state(&mut rng, 1),
        terminal: false,
    };
    let (_, grads) = agent.loss_and_gradients(&[&t]).unwrap();
    let y = dqn_targets(&net, &agent.q, &agent.target, &[&t], agent.cfg.gamma).unwrap()[0] as f64;
    let (x, aux) = batch_states(&[&t.state]).unwrap();
    let (x, aux) = (x.cast::<f64>(), aux.cast::<f64>());
    let loss = |p: &ParamStore<f64>| {
        let out = net.predict(p, &x, Some(&aux)).unwrap();
        (out.data()[0] - y).powi(2)
    };
    let mut probe: ParamStore<f64> = agent.q.cast();
    let h = 1e-5;
    for name in [weight_name(0), bias_name(0)] {
        for i in 0..probe.get(&name).unwrap().len() {
            let orig = probe.get(&name).unwrap().data()[i];
            probe.get_mut(&name).unwrap().data_mut()[i] = orig + h;
            let up = loss(&probe);
            probe.get_mut(&name).unwrap().data_mut()[i] = orig - h;
            let down = loss(&probe);
            probe.get_mut(&name).unwrap().data_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = grads.get(&name).unwrap().data()[i] as f64;
            assert!((an - fd).abs() / an.abs().max(fd.abs()).max(1e-4) < 1e-3, "{name}[{i}]: {an} vs {fd}");
        }
    }
}

#[test]
fn updates_clip_and_leave_the_target_alone() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = DqnConfig {
        clip_norm: 0.5,
        ..dqn_cfg()
    };
    let mut agent = DqnAgent::new(build_decoupled_network(8, Head::Discrete(5)), cfg, &mut rng).unwrap();
    let batch: Vec<Experience> = (0..16)
        .map(|i| Experience {
            state: random_state(&mut rng, 8),
            action: i % 5,
            reward: 50.0,
            next_state: random_state(&mut rng, 8),
            terminal: i % 3 == 0,
        })
        .collect();
    let refs: Vec<&Experience> = batch.iter().collect();
    let (_, mut g) = agent.loss_and_gradients(&refs).unwrap();
    navbot::numcore::clip_global_norm(&mut g, 0.5);
    assert!(g.global_norm() <= 0.5 + 1e-6);
    let before = agent.target.clone();
    for _ in 0..3 {
        agent.update(&refs).unwrap();
    }
    assert_eq!(agent.target, before);
    assert_ne!(agent.q, before);
}

#[test]
fn sync_copies_deeply() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut agent = DqnAgent::new(build_decoupled_network(4, Head::Discrete(5)), dqn_cfg(), &mut rng).unwrap();
    let t = Experience {
        state: random_state(&mut rng, 4),
        action: 2,
        reward: 1.0,
        next_state: random_state(&mut rng, 4),
        terminal: false,
    };
    agent.update(&[&t]).unwrap();
    agent.sync_target();
    let y = dqn_targets(&agent.net, &agent.q, &agent.target, &[&t], 0.99).unwrap()[0];
    let qn = agent.q_values(&t.next_state).unwrap();
    let best = qn.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    assert!((y - (1.0 + 0.99 * best)).abs() < 1e-5);
    let snapshot = agent.target.clone();
    agent.update(&[&t]).unwrap();
    assert_eq!(agent.target, snapshot);
    assert_eq!(agent.syncs, 1);
}

#[test]
fn replay_sampling_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut buf = ReplayBuffer::new(100);
    for i in 0..130 {
        let mut t = transition(i as f32, false);
        t.action = i;
        buf.push(t);
    }
    assert_eq!(buf.len(), 100);
    let n = 100_000;
    let mut counts = vec![0usize; 100];
    for i in buf.sample_indices(n, &mut rng) {
        counts[i] += 1;
    }
    for c in &counts {
        assert!((*c as f64 / n as f64 - 0.01).abs() < 0.002);
    }
    // the ring overwrote the oldest 30 entries
    let mut actions: Vec<usize> = (0..100).map(|i| buf.get(i).action).collect();
    actions.sort_unstable();
    assert_eq!(actions, (30..130).collect::<Vec<_>>());
}

fn ppo_agent(cfg: PpoConfig, latent: usize, seed: u64) -> PpoAgent {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PpoAgent::new(
        build_decoupled_network(latent, Head::Continuous),
        build_decoupled_network(latent, Head::Value),
        cfg,
        0.5,
        1.0,
        &mut rng,
    )
    .unwrap()
}

#[test]
fn deterministic_policy_returns_the_mean() {
    let cfg = PpoConfig {
        init_mean: [0.3, 0.0],
        ..PpoConfig::default()
    };
    let agent = ppo_agent(cfg, 4, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let s = latent_state(&[0.0; 4], [0.0; 4]);
    let out = agent.policy_sample(&s, &mut rng, true).unwrap();
    assert!((out.action.v - 0.3).abs() < 1e-6 && out.action.w.abs() < 1e-6);
    let mut tight = agent.clone();
    tight.set_log_std([-80.0, -80.0]);
    let st = tight.policy_sample(&s, &mut rng, false).unwrap();
    assert!((st.action.v - out.action.v).abs() < 1e-6 && (st.action.w - out.action.w).abs() < 1e-6);
}

#[test]
fn log_prob_matches_the_density_formula() {
    let agent = ppo_agent(PpoConfig::default(), 6, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let s = random_state(&mut rng, 6);
        let out = agent.policy_sample(&s, &mut rng, false).unwrap();
        let ls = agent.log_std();
        let mut density = 1.0f64;
        for d in 0..2 {
            let sd = (ls[d] as f64).exp();
            let z = (out.raw[d] as f64 - out.mean[d] as f64) / sd;
            density *= (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
        }
        assert!((out.log_prob - density.ln()).abs() < 1e-6);
    }
}

#[test]
fn gae_with_zero_lambda_is_the_td_error() {
    let r = [1.0, -0.5, 2.0, 0.3];
    let v = [0.2, 0.4, -0.1, 0.9];
    let nv = [0.4, -0.1, 0.9, 0.5];
    let term = [false, false, false, true];
    let done = [false, false, false, true];
    let (a, _) = compute_gae(&r, &v, &nv, &term, &done, 0.9, 0.0);
    for t in 0..4 {
        let boot = if term[t] { 0.0 } else { 0.9 * nv[t] };
        assert!((a[t] - (r[t] + boot - v[t])).abs() < 1e-6);
    }
    let (a, _) = compute_gae(&[1.0], &[0.0], &[0.0], &[true], &[true], 0.99, 0.95);
    assert_eq!(a, vec![1.0]);
}

#[test]
fn gae_with_unit_lambda_is_the_discounted_return() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 50;
    let gamma = 0.97;
    let rewards: Vec<f32> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let values: Vec<f32> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dones: Vec<bool> = (0..n).map(|t| t == n - 1 || rng.random_bool(0.1)).collect();
    // non-terminal ends are timeouts (or the rollout cut) and bootstrap
    let terminals: Vec<bool> = (0..n).map(|t| dones[t] && t != n - 1 && rng.random_bool(0.5)).collect();
    let boot: Vec<f32> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let next: Vec<f32> = (0..n)
        .map(|t| if dones[t] { boot[t] } else { values[t + 1] })
        .collect();
    let (adv, _) = compute_gae(&rewards, &values, &next, &terminals, &dones, gamma, 1.0);
    for t in 0..n {
        let mut ret = 0.0f64;
        let mut disc = 1.0f64;
        let mut k = t;
        loop {
            ret += disc * rewards[k] as f64;
            disc *= gamma;
            if dones[k] {
                if !terminals[k] {
                    ret += disc * boot[k] as f64;
                }
                break;
            }
            k += 1;
        }
        assert!((adv[t] as f64 - (ret - values[t] as f64)).abs() < 1e-5, "t={t}");
    }
}

fn rollout_for(agent: &PpoAgent, n: usize, latent: usize, rng: &mut ChaCha8Rng, reward: impl Fn(f32) -> f32) -> Rollout {
    let mut ro = Rollout::default();
    for _ in 0..n {
        let s = random_state(rng, latent);
        let out = agent.policy_sample(&s, rng, false).unwrap();
        let v = agent.value_of(&s).unwrap();
        ro.push(s, out.raw, out.log_prob as f32, reward(out.raw[0]), v, true, true, 0.0);
    }
    ro
}

#[test]
fn update_count_is_epochs_times_minibatches() {
    let cfg = PpoConfig {
        epochs: 3,
        minibatch: 4,
        ..PpoConfig::default()
    };
    let mut agent = ppo_agent(cfg, 4, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ro = rollout_for(&agent, 10, 4, &mut rng, |_| 1.0);
    assert_eq!(agent.update(&ro, &mut rng).unwrap().updates, 9);
}

#[test]
fn first_minibatch_is_the_vanilla_policy_gradient() {
    // at ratio 1 the clipped surrogate equals mean(A) and its log-std gradient
    // is -mean(A * ((a - mu)^2 / sigma^2 - 1))
    let agent = ppo_agent(PpoConfig::default(), 4, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ro = rollout_for(&agent, 32, 4, &mut rng, |v| v);
    let adv: Vec<f32> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ret = vec![0.0f32; 32];
    let idx: Vec<usize> = (0..32).collect();
    let (loss, pg, _, kl, clipped) = agent.minibatch_gradients(&ro, &idx, &adv, &ret).unwrap();
    let mean_adv = adv.iter().map(|&a| a as f64).sum::<f64>() / 32.0;
    assert!((loss.surrogate - mean_adv).abs() < 1e-5);
    assert!(kl.abs() < 1e-9 && clipped == 0.0);
    let ls = agent.log_std();
    for d in 0..2 {
        let s2 = (2.0 * ls[d] as f64).exp();
        let mut g = 0.0;
        for k in 0..32 {
            let mu = agent.mean(&ro.states[k]).unwrap();
            let diff = ro.actions[k][d] as f64 - mu[d] as f64;
            g -= adv[k] as f64 * (diff * diff / s2 - 1.0);
        }
        g /= 32.0;
        let an = pg.get("log_std").unwrap().data()[d] as f64;
        assert!((an - g).abs() < 1e-4 * g.abs().max(1.0), "dim {d}: {an} vs {g}");
    }
}

#[test]
fn bandit_update_moves_the_mean_toward_the_optimum() {
    let cfg = PpoConfig {
        init_mean: [0.0, 0.0],
        init_log_std: [(0.2f32).ln(), (0.2f32).ln()],
        lr: 3e-3,
        ..PpoConfig::default()
    };
    let mut agent = ppo_agent(cfg, 4, 4);
    let s = latent_state(&[0.0; 4], [0.0; 4]);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let before = agent.mean(&s).unwrap()[0];
    let mut ro = Rollout::default();
    for _ in 0..256 {
        let out = agent.policy_sample(&s, &mut rng, false).unwrap();
        let r = -(out.raw[0] - 0.3).powi(2);
        let v = agent.value_of(&s).unwrap();
        ro.push(s.clone(), out.raw, out.log_prob as f32, r, v, true, true, 0.0);
    }
    agent.update(&ro, &mut rng).unwrap();
    let after = agent.mean(&s).unwrap()[0];
    assert!((after - 0.3).abs() < (before - 0.3).abs(), "{before} -> {after}");
}

#[test]
fn seeded_updates_are_bitwise_reproducible() {
    let run = || {
        let mut agent = ppo_agent(PpoConfig::default(), 4, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ro = rollout_for(&agent, 100, 4, &mut rng, |v| v);
        agent.update(&ro, &mut rng).unwrap();
        agent.policy
    };
    let (a, b) = (run(), run());
    for ((_, x), (_, y)) in a.iter().zip(b.iter()) {
        assert!(x.data().iter().zip(y.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}

#[test]
fn mixed_feature_batches_are_rejected() {
    let mut env = NavEnv::new(load_map("corridor").unwrap(), EnvConfig::default()).unwrap();
    let s = env.reset().unwrap();
    let pix = PlannerState {
        features: Features::Pixels(Arc::new(s.observation)),
        aux: [0.0; 4],
    };
    let lat = latent_state(&[0.0; 4], [0.0; 4]);
    assert!(matches!(batch_states(&[&pix, &lat]), Err(AgentError::MixedFeatures)));
}
