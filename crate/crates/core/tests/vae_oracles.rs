use std::collections::BTreeSet;
use std::f64::consts::{E, PI};

use navbot::harness::load_map;
use navbot::mazeenv::{cast_columns, Camera, EnvConfig, NavEnv, OBS_LEN};
use navbot::numcore::{check_store_gradients, ParamStore, Tensor};
use navbot::vae::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

/// Composite Simpson integral of `p log(p/q)` with p = N(mu, var), q = N(0, 1).
fn kl_by_quadrature(mu: f64, var: f64) -> f64 {
    let sd = var.sqrt();
    let (a, b) = (mu - 14.0 * sd, mu + 14.0 * sd);
    let n = 40_000;
    let h = (b - a) / n as f64;
    let f = |x: f64| {
        let lp = -0.5 * ((x - mu) * (x - mu) / var) - 0.5 * (2.0 * PI * var).ln();
        let lq = -0.5 * x * x - 0.5 * (2.0 * PI).ln();
        lp.exp() * (lp - lq)
    };
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

fn kl1(mu: f64, var: f64) -> f64 {
    let m = Tensor::from_vec(vec![mu]);
    let lv = Tensor::from_vec(vec![var.ln()]);
    kl_loss(&m, &lv).unwrap()
}

#[test]
fn kl_matches_numerical_integration() {
    assert!(kl1(0.0, 1.0).abs() < 1e-12);
    assert!((kl1(1.0, 1.0) - 0.5).abs() < 1e-12);
    assert!((kl_by_quadrature(1.0, 1.0) - 0.5).abs() < 1e-6);
    assert!((kl1(0.0, E) - 0.5 * (E - 2.0)).abs() < 1e-12);
    assert!((kl_by_quadrature(0.0, E) - 0.5 * (E - 2.0)).abs() < 1e-6);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let mu = rng.random_range(-3.0..3.0);
        let var = rng.random_range(0.05f64..5.0);
        let q = kl_by_quadrature(mu, var);
        assert!((kl1(mu, var) - q).abs() < 1e-6, "mu {mu} var {var}: {} vs {q}", kl1(mu, var));
    }
}

proptest! {
    #[test]
    fn kl_is_nonnegative(mu in proptest::collection::vec(-5.0f32..5.0, 1..40), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lv: Vec<f32> = mu.iter().map(|_| rng.random_range(-4.0..4.0)).collect();
        let n = mu.len();
        let k = kl_loss(&Tensor::from_vec(mu), &Tensor::from_vec(lv)).unwrap();
        prop_assert!(k >= 0.0);
        let zero = kl_loss(&Tensor::from_vec(vec![0.0f32; n]), &Tensor::from_vec(vec![0.0f32; n])).unwrap();
        prop_assert!(zero.abs() < 1e-7);
    }

    #[test]
    fn total_is_recon_plus_weighted_kl(seed in 0u64..1000, w in 0.0..3.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = |n: usize, lo: f32, hi: f32| {
            Tensor::new(vec![2, n], (0..2 * n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
        };
        let (x, r, m, lv) = (t(12, 0.0, 1.0), t(12, 0.0, 1.0), t(4, -2.0, 2.0), t(4, -2.0, 2.0));
        let p = total_loss(&x, &r, &m, &lv, w).unwrap();
        prop_assert!((p.loss - (p.loss_r + w * p.loss_c)).abs() < 1e-7);
        let p0 = total_loss(&x, &r, &m, &lv, 0.0).unwrap();
        prop_assert_eq!(p0.loss, p0.loss_r);
    }
}

#[test]
fn recon_loss_examples_and_double_loop() {
    let ones = Tensor::filled(&[2, 3, 4, 5], 1.0f32);
    let zeros = Tensor::<f32>::zeros(&[2, 3, 4, 5]);
    assert_eq!(recon_loss(&ones, &ones).unwrap(), 0.0);
    assert_eq!(recon_loss(&zeros, &ones).unwrap(), 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (n, c, h, w) = (3, 3, 6, 8);
    let a: Vec<f32> = (0..n * c * h * w).map(|_| rng.random()).collect();
    let b: Vec<f32> = (0..n * c * h * w).map(|_| rng.random()).collect();
    let mut sum = 0.0f64;
    for i in 0..n {
        for j in 0..c * h * w {
            let d = a[i * c * h * w + j] as f64 - b[i * c * h * w + j] as f64;
            sum += d * d;
        }
    }
    let oracle = sum / (n * c * h * w) as f64;
    let ta = Tensor::new(vec![n, c, h, w], a).unwrap();
    let tb = Tensor::new(vec![n, c, h, w], b).unwrap();
    assert!((recon_loss(&ta, &tb).unwrap() - oracle).abs() < 1e-6);
    let perfect = total_loss(&ta, &ta, &Tensor::zeros(&[n, 4]), &Tensor::zeros(&[n, 4]), 1.0).unwrap();
    assert_eq!(perfect.loss, 0.0);
}

#[test]
fn reparameterization_limits_and_determinism() {
    let mu = Tensor::new(vec![1, 3], vec![0.3f32, -1.0, 2.0]).unwrap();
    let lv = Tensor::filled(&[1, 3], -80.0f32);
    let z = reparam_sample(&mu, &lv, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(z.data(), mu.data());
    let lv = Tensor::filled(&[1, 3], 0.4f32);
    let a = reparam_sample(&mu, &lv, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let b = reparam_sample(&mu, &lv, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn reparameterized_samples_follow_the_posterior() {
    let n = 100_000;
    let dims = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let z = reparam_sample(&Tensor::zeros(&[n, dims]), &Tensor::zeros(&[n, dims]), &mut rng).unwrap();
    for d in 0..dims {
        let xs: Vec<f64> = (0..n).map(|i| z.data()[i * dims + d] as f64).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.02 && (0.97..=1.03).contains(&var), "dim {d}: {mean} {var}");
    }
    // Kolmogorov-Smirnov against N(mu, sigma^2) for a non-trivial posterior
    let (m, lv) = (0.7f32, -0.6f32);
    let z = reparam_sample(&Tensor::filled(&[n, 1], m), &Tensor::filled(&[n, 1], lv), &mut rng).unwrap();
    let mut xs: Vec<f64> = z.data().iter().map(|&v| v as f64).collect();
    xs.sort_by(f64::total_cmp);
    let normal = Normal::new(m as f64, (0.5 * lv as f64).exp()).unwrap();
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = normal.cdf(x);
            (c - i as f64 / n as f64).abs().max((((i + 1) as f64) / n as f64 - c).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 0.02, "KS statistic {ks}");
}

#[test]
fn thumbnail_vae_gradients_match_finite_differences() {
    let model = VaeModel::thumbnail();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..3 {
        let params = model.init_params(&mut rng);
        let n = 2;
        let images = Tensor::new(
            vec![n, 3, 6, 8],
            (0..n * 144).map(|_| rng.random_range(0.0..1.0)).collect(),
        )
        .unwrap();
        let noise = standard_noise(&[n, model.latent], &mut rng);
        let kl_weight = 0.5;
        let (_, grads) = model.loss_and_grads(&params, &images, &noise, kl_weight).unwrap();
        let (x64, e64) = (images.cast::<f64>(), noise.cast::<f64>());
        let report = check_store_gradients(&params.merged(), &grads.merged(), 1e-4, 1e-3, |p: &ParamStore<f64>| {
            let (parts, pattern) = model.loss_with_noise(&VaeParams::split(p), &x64, &e64, kl_weight)?;
            Ok((parts.loss, pattern))
        })
        .unwrap();
        assert!(report.pass, "case {case}: {report:?}");
    }
}

#[test]
fn shapes_ranges_and_purity() {
    let model = VaeModel::standard();
    assert_eq!(OBS_LEN / model.latent, 288);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = model.init_params(&mut rng);
    let map = load_map("maze1").unwrap();
    let mut env = NavEnv::new(map, EnvConfig::default()).unwrap();
    let obs = env.reset().unwrap().observation;
    let x = observations_to_batch([&obs]);
    let (mu, lv) = model.encode(&params, &x).unwrap();
    assert_eq!((mu.len(), lv.len()), (32, 32));
    let (mu2, lv2) = model.encode(&params, &x).unwrap();
    assert_eq!((&mu, &lv), (&mu2, &lv2));
    assert_eq!(latent_for_planner(&model, &params, &obs).unwrap(), mu.data());
    let recon = model.decode(&params, &mu).unwrap();
    assert_eq!(recon.shape(), &[1, 3, 48, 64]);
    assert!(recon.data().iter().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(recon, model.decode(&params, &mu).unwrap());
}

fn maze_env(seed: u64) -> NavEnv {
    let cfg = EnvConfig {
        seed,
        ..EnvConfig::default()
    };
    NavEnv::new(load_map("maze1").unwrap(), cfg).unwrap()
}

#[test]
fn frame_collection_counts_and_determinism() {
    let one = collect_frames(&mut maze_env(0), 1, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(one.len(), 1);
    let run = || collect_frames(&mut maze_env(4), 300, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.len(), 300);
    assert!(a.frames().iter().zip(b.frames()).all(|(x, y)| x.as_bytes() == y.as_bytes()));
    let mut bytes = Vec::new();
    a.write_to(&mut bytes).unwrap();
    assert_eq!(bytes.len(), 12 + 300 * OBS_LEN);
    let back = FrameDataset::read_from(&bytes[..]).unwrap();
    assert_eq!(back.len(), 300);
    assert!(matches!(FrameDataset::read_from(&bytes[..bytes.len() - 1]), Err(DatasetError::Truncated)));
}

#[test]
fn collected_frames_cover_many_wall_colors() {
    // distinct (color, shading side) pairs seen across the dataset's views
    let data = collect_frames(&mut maze_env(1), 5000, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let map = load_map("maze1").unwrap();
    let cam = Camera::default();
    let mut seen = BTreeSet::new();
    for pose in data.poses() {
        for col in cast_columns(&map, *pose, &cam).unwrap() {
            seen.insert((col.hit.color_id, col.hit.side as u8));
        }
    }
    assert!(seen.len() >= 10, "only {} distinct wall shades: {seen:?}", seen.len());
}

fn toy_data(n: usize) -> FrameDataset {
    collect_frames(&mut maze_env(9), n, &mut ChaCha8Rng::seed_from_u64(9)).unwrap()
}

#[test]
fn one_epoch_runs_ceil_n_over_b_updates() {
    let data = toy_data(10);
    let cfg = VaeTrainConfig {
        epochs: 1,
        batch_size: 4,
        ..VaeTrainConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = train_vae(&VaeModel::standard(), None, &data, &cfg, &mut rng, |_, _| {}).unwrap();
    assert_eq!(out.history.len(), 3);
}

#[test]
fn training_is_deterministic_under_seed() {
    let data = toy_data(8);
    let cfg = VaeTrainConfig {
        epochs: 1,
        batch_size: 4,
        ..VaeTrainConfig::default()
    };
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        train_vae(&VaeModel::standard(), None, &data, &cfg, &mut rng, |_, _| {}).unwrap().params
    };
    let (a, b) = (run().merged(), run().merged());
    for ((na, ta), (nb, tb)) in a.iter().zip(b.iter()) {
        assert_eq!(na, nb);
        assert!(ta.data().iter().zip(tb.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn toy_training_reduces_loss() {
    let data = toy_data(64);
    let cfg = VaeTrainConfig {
        epochs: 50,
        batch_size: 16,
        lr: 1e-3,
        kl_weight: 0.01,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let out = train_vae(&VaeModel::standard(), None, &data, &cfg, &mut rng, |_, _| {}).unwrap();
    assert_eq!(out.history.len(), 200);
    let first: f64 = out.history[..4].iter().map(|p| p.loss).sum();
    let last: f64 = out.history[196..].iter().map(|p| p.loss).sum();
    assert!(last < first, "loss went from {first} to {last}");
}
