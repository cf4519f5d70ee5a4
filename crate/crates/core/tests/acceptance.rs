//! Acceptance report: one line per criterion.
//!
//! Criteria 1, 2, 7, 8 and 9 are computed here. Criteria 3, 4, 5, 6 and 10 need
//! hours of training and are read from the experiment outputs under `results/`
//! (see `scripts/experiments.sh`; override the location with `NAVBOT_RESULTS`).
//! Missing results are reported as SKIP. By default only the in-process criteria
//! decide the exit status; `NAVBOT_ACCEPTANCE=full` makes every criterion count.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use navbot::harness::benchmark::{median, BenchmarkReport};
use navbot::harness::{load_map, train, Algo, EvalReport, RunConfig};
use navbot::mazeenv::{cast_columns, compute_reward, render, Camera, MazeMap, Outcome, Pose, RewardConfig, PPM_HEADER, OBS_LEN};
use navbot::numcore::{
    check_store_gradients, grad_check, Activation, ConvGeometry, LayerSpec, LinearLoss, Network, ParamStore, Tensor,
};
use navbot::vae::{kl_loss, standard_noise, VaeModel, VaeParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

struct Line {
    id: u32,
    name: &'static str,
    heavy: bool,
    verdict: Verdict,
}

const ACTS: [Activation; 4] = [Activation::ReLU, Activation::Sigmoid, Activation::Tanh, Activation::Identity];

fn random_net(rng: &mut ChaCha8Rng, kind: usize, act: Activation) -> Network {
    loop {
        let c = rng.random_range(1..=3);
        let o = rng.random_range(1..=3);
        let s = rng.random_range(1..=2);
        let p = rng.random_range(0..=1);
        let net = match kind {
            0 => {
                let g = ConvGeometry::new(c, o, 1, s, p).with_kernel(rng.random_range(1..=3), rng.random_range(1..=3));
                Network::new(vec![c, rng.random_range(3..=6), rng.random_range(3..=6)], vec![LayerSpec::conv(g, act)], None)
            }
            1 => {
                let g = ConvGeometry::new(c, o, 1, s, p).with_kernel(rng.random_range(2..=4), rng.random_range(2..=4));
                Network::new(vec![c, rng.random_range(1..=3), rng.random_range(1..=3)], vec![LayerSpec::deconv(g, act)], None)
            }
            _ => {
                let i = rng.random_range(1..=8);
                Network::new(vec![i], vec![LayerSpec::dense(i, rng.random_range(1..=6), act)], None)
            }
        };
        if let Ok(net) = net {
            return net;
        }
    }
}

fn criterion_gradients() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for kind in 0..3 {
        for act in ACTS {
            for _ in 0..6 {
                let net = random_net(&mut rng, kind, act);
                let mut params = net.init_params(&mut rng);
                for (_, t) in params.iter_mut() {
                    t.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.2..0.2));
                }
                let mut shape = vec![2];
                shape.extend_from_slice(net.input_shape());
                let n: usize = shape.iter().product();
                let x = Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
                let loss = LinearLoss {
                    weights: (0..2 * net.output_len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
                };
                let r = grad_check(&net, &params, &x, None, &loss, 1e-3, 1e-3).unwrap();
                worst = worst.max(r.max_error());
                cases += 1;
            }
        }
    }
    let model = VaeModel::thumbnail();
    for _ in 0..2 {
        let params = model.init_params(&mut rng);
        let images = Tensor::new(vec![2, 3, 6, 8], (0..288).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let noise = standard_noise(&[2, model.latent], &mut rng);
        let (_, grads) = model.loss_and_grads(&params, &images, &noise, 0.5).unwrap();
        let (x64, e64) = (images.cast::<f64>(), noise.cast::<f64>());
        let r = check_store_gradients(&params.merged(), &grads.merged(), 1e-4, 1e-3, |p: &ParamStore<f64>| {
            let (parts, pattern) = model.loss_with_noise(&VaeParams::split(p), &x64, &e64, 0.5)?;
            Ok((parts.loss, pattern))
        })
        .unwrap();
        worst = worst.max(r.max_error());
        cases += 1;
    }
    let msg = format!("{cases} cases, worst relative error {worst:.2e} (tol 1e-3)");
    if worst <= 1e-3 && cases >= 20 {
        Verdict::Pass(msg)
    } else {
        Verdict::Fail(msg)
    }
}

fn kl_quadrature(mu: f64, var: f64) -> f64 {
    let sd = var.sqrt();
    let (a, b) = (mu - 14.0 * sd, mu + 14.0 * sd);
    let n = 40_000;
    let h = (b - a) / n as f64;
    let f = |x: f64| {
        let lp = -0.5 * (x - mu) * (x - mu) / var - 0.5 * (2.0 * PI * var).ln();
        let lq = -0.5 * x * x - 0.5 * (2.0 * PI).ln();
        lp.exp() * (lp - lq)
    };
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

fn criterion_kl() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut pairs: Vec<(f64, f64)> = vec![(0.0, 1.0), (1.0, 1.0)];
    while pairs.len() < 102 {
        pairs.push((rng.random_range(-3.0..3.0), rng.random_range(0.05..4.0)));
    }
    let mut worst = 0.0f64;
    for &(mu, var) in &pairs {
        let got = kl_loss(&Tensor::from_vec(vec![mu]), &Tensor::from_vec(vec![var.ln()])).unwrap();
        worst = worst.max((got - kl_quadrature(mu, var)).abs());
    }
    let msg = format!("{} pairs incl. KL = 0 and 0.5, worst abs error {worst:.2e} (tol 1e-6)", pairs.len());
    if worst <= 1e-6 {
        Verdict::Pass(msg)
    } else {
        Verdict::Fail(msg)
    }
}

fn criterion_reward() -> Verdict {
    let c = RewardConfig::default();
    let cases = [
        (2.0, 1.9, true, -10.0),
        (2.0, 1.9, false, 0.95),
        (0.4, 0.25, false, 10.0),
        (0.4, 0.25, true, -10.0),
    ];
    let bad: Vec<_> = cases
        .iter()
        .filter(|&&(p, n, hit, want)| (compute_reward(p, n, hit, &c) - want).abs() > 1e-12)
        .collect();
    if bad.is_empty() {
        Verdict::Pass(format!("{} branch examples", cases.len()))
    } else {
        Verdict::Fail(format!("mismatches: {bad:?}"))
    }
}

fn criterion_determinism() -> Verdict {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let mut cfg = RunConfig::default();
        cfg.algo = Algo::E2ePpo;
        cfg.map = "corridor".into();
        cfg.max_env_steps = 600;
        cfg.ppo.rollout_len = 256;
        cfg.out_dir = d.path().to_path_buf();
        if let Err(e) = train(&cfg) {
            return Verdict::Fail(e.to_string());
        }
    }
    let same = |f: &str| std::fs::read(dirs[0].path().join(f)).ok() == std::fs::read(dirs[1].path().join(f)).ok();
    if same("metrics.csv") && same("final.nvbt") {
        Verdict::Pass("metrics.csv and final.nvbt byte-identical over two seeded runs".into())
    } else {
        Verdict::Fail("outputs differ between identical runs".into())
    }
}

fn criterion_renderer() -> Verdict {
    let room = MazeMap::parse("cellsize = 1\nAAAAAAA\nB.....D\nBS...GD\nB.....D\nAAAAAAA\n").unwrap();
    let cam = Camera::default();
    let obs = render(&room, Pose::new(2.0, 2.5, 0.0), &cam).unwrap();
    let mirror = obs == obs.mirrored();
    let mut monotone = true;
    for i in 0..40 {
        let x = 4.9 - 0.09 * i as f64;
        let near = cast_columns(&room, Pose::new(x, 2.5, 0.0), &cam).unwrap();
        let far = cast_columns(&room, Pose::new(x - 0.09, 2.5, 0.0), &cam).unwrap();
        monotone &= near[32].slice_height > far[32].slice_height;
    }
    let maze1 = load_map("maze1").unwrap();
    let ppm = render(&maze1, Pose::new(3.2, 1.0, 2.4), &cam).unwrap().to_ppm();
    let golden = &ppm[..] == include_bytes!("golden/maze1.ppm");
    let header = ppm.starts_with(PPM_HEADER) && PPM_HEADER == b"P6\n64 48\n255\n" && ppm.len() == 13 + OBS_LEN;
    let msg = format!("mirror {mirror}, monotone {monotone}, golden {golden}, header {header}");
    if mirror && monotone && golden && header {
        Verdict::Pass(msg)
    } else {
        Verdict::Fail(msg)
    }
}

fn results_dir() -> PathBuf {
    std::env::var_os("NAVBOT_RESULTS")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../results"))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Verdict> {
    let bytes = std::fs::read(path).map_err(|_| Verdict::Skip(format!("no results at {}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| Verdict::Fail(format!("{}: {e}", path.display())))
}

fn criterion_vae(dir: &Path) -> Result<Verdict, Verdict> {
    let meta: serde_json::Value = read_json(&dir.join("vae-maze1/vae.json"))?;
    let x = &meta["extra"];
    let train = x["train_mse"].as_f64().unwrap_or(f64::NAN);
    let held = x["heldout_mse"].as_f64().unwrap_or(f64::NAN);
    let frames = x["frames"].as_u64().unwrap_or(0) + x["heldout"].as_u64().unwrap_or(0);
    let secs = x["train_seconds"].as_f64();
    let var = x["mean_latent_variance"].as_f64().unwrap_or(f64::NAN);
    let msg = format!(
        "{frames} frames, train mse {train:.5} (< 0.01), held-out {held:.5} (<= 2x), latent var {var:.3}, {}",
        secs.map_or("time not recorded".into(), |s| format!("{:.1} min", s / 60.0))
    );
    let ok = frames >= 20_000 && train < 0.01 && held <= 2.0 * train && secs.is_none_or(|s| s <= 1800.0);
    Ok(if ok { Verdict::Pass(msg) } else { Verdict::Fail(msg) })
}

fn criterion_corridor(dir: &Path) -> Result<Verdict, Verdict> {
    let r: BenchmarkReport = read_json(&dir.join("corridor/benchmark.json"))?;
    let mut parts = Vec::new();
    let mut ok = r.success_threshold >= 0.9 && r.budget <= 50_000;
    for algo in Algo::ALL {
        let steps: Vec<f64> = r
            .rows
            .iter()
            .filter(|row| row.algo == algo)
            .map(|row| row.steps_to_threshold.map_or(f64::INFINITY, |s| s as f64))
            .collect();
        let m = median(&steps);
        ok &= steps.len() >= 3 && m.is_some_and(|m| m <= 50_000.0);
        parts.push(format!("{algo} median {}", m.map_or("-".into(), |m| format!("{m:.0}"))));
    }
    let msg = format!("threshold {} budget {}: {}", r.success_threshold, r.budget, parts.join(", "));
    Ok(if ok { Verdict::Pass(msg) } else { Verdict::Fail(msg) })
}

fn final_rate(r: &BenchmarkReport, map: &str, algo: Algo) -> Option<f64> {
    let v: Vec<f64> = r
        .rows
        .iter()
        .filter(|row| row.map == map && row.algo == algo)
        .map(|row| row.final_success_rate)
        .collect();
    median(&v)
}

fn opt(x: Option<f64>, digits: usize) -> String {
    x.map_or("DNF".into(), |x| format!("{x:.digits$}"))
}

fn criterion_ordering(dir: &Path) -> Result<Verdict, Verdict> {
    // both planners run to the full budget without early stopping
    let r: BenchmarkReport = read_json(&dir.join("budget/benchmark.json"))?;
    let ppo = final_rate(&r, "maze1", Algo::E2ePpo);
    let dqn = final_rate(&r, "maze1", Algo::E2eDqn);
    let seeds = r.rows.iter().filter(|row| row.map == "maze1" && row.algo == Algo::E2ePpo).count();
    let msg = format!(
        "maze1 final success_rate_100 after {} steps: e2e-ppo {} vs e2e-dqn {}, seeds: {seeds}",
        r.budget,
        opt(ppo, 2),
        opt(dqn, 2)
    );
    Ok(match (ppo, dqn) {
        (Some(p), Some(d)) if p > d => Verdict::Pass(msg),
        _ => Verdict::Fail(msg),
    })
}

fn criterion_efficiency(dir: &Path) -> Result<Verdict, Verdict> {
    let r: BenchmarkReport = read_json(&dir.join("bench/benchmark.json"))?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (map, bound) in [("maze1", 0.5), ("maze2", 0.7)] {
        let Some(s) = r.summary(map) else {
            ok = false;
            parts.push(format!("{map}: missing"));
            continue;
        };
        // a baseline that never finished is charged the budget, which only lowers the bound
        let ratio = s.ratio.or(s.ratio_bound);
        ok &= ratio.is_some_and(|x| x <= bound);
        parts.push(format!(
            "{map}: vae-ppo {} / e2e-ppo {} = {} (<= {bound})",
            opt(s.proposed_median, 0),
            opt(s.baseline_median, 0),
            opt(ratio, 3)
        ));
    }
    let msg = parts.join("; ");
    Ok(if ok { Verdict::Pass(msg) } else { Verdict::Fail(msg) })
}

fn criterion_paths(dir: &Path) -> Result<Verdict, Verdict> {
    let r: EvalReport = read_json(&dir.join("eval-maze1/eval.json"))?;
    let map = load_map("maze1").unwrap();
    let start = map.start_cells()[0];
    let best = map.shortest_path_length(start).unwrap();
    let arrived: Vec<f64> = r
        .episodes
        .iter()
        .filter(|e| e.outcome == Outcome::Arrival)
        .map(|e| e.path_length)
        .collect();
    let Some(mean) = (!arrived.is_empty()).then(|| arrived.iter().sum::<f64>() / arrived.len() as f64) else {
        return Ok(Verdict::Fail("no successful evaluation episode".into()));
    };
    let msg = format!(
        "{} of {} arrivals, mean path {mean:.2} m vs grid shortest {best:.2} m (ratio {:.2}, <= 1.5)",
        arrived.len(),
        r.episodes.len(),
        mean / best
    );
    Ok(if mean <= 1.5 * best { Verdict::Pass(msg) } else { Verdict::Fail(msg) })
}

fn main() {
    let full = std::env::var("NAVBOT_ACCEPTANCE").is_ok_and(|v| v == "full");
    let dir = results_dir();
    let flat = |r: Result<Verdict, Verdict>| r.unwrap_or_else(|v| v);
    let lines = vec![
        Line { id: 1, name: "gradient correctness", heavy: false, verdict: criterion_gradients() },
        Line { id: 2, name: "KL oracle", heavy: false, verdict: criterion_kl() },
        Line { id: 3, name: "VAE training on maze1", heavy: true, verdict: flat(criterion_vae(&dir)) },
        Line { id: 4, name: "corridor sanity", heavy: true, verdict: flat(criterion_corridor(&dir)) },
        Line { id: 5, name: "benchmark ordering", heavy: true, verdict: flat(criterion_ordering(&dir)) },
        Line { id: 6, name: "sample efficiency", heavy: true, verdict: flat(criterion_efficiency(&dir)) },
        Line { id: 7, name: "reward branches", heavy: false, verdict: criterion_reward() },
        Line { id: 8, name: "determinism", heavy: false, verdict: criterion_determinism() },
        Line { id: 9, name: "renderer properties", heavy: false, verdict: criterion_renderer() },
        Line { id: 10, name: "trajectory quality", heavy: true, verdict: flat(criterion_paths(&dir)) },
    ];
    let mut failed = false;
    for l in &lines {
        let (tag, msg) = match &l.verdict {
            Verdict::Pass(m) => ("PASS", m),
            Verdict::Fail(m) => ("FAIL", m),
            Verdict::Skip(m) => ("SKIP", m),
        };
        let counts = !l.heavy || full;
        failed |= counts && !matches!(l.verdict, Verdict::Pass(_));
        let note = if l.heavy { " [recorded]" } else { "" };
        println!("{tag} criterion {:>2} {}{note}: {msg}", l.id, l.name);
    }
    if failed {
        std::process::exit(1);
    }
}
