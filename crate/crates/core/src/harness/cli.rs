use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::mazeenv::{render, Camera, NavEnv, Outcome, Pose};
use crate::vae::{
    collect_frames, latent_statistics, reconstruction_mse, train_vae, FrameDataset, VaeModel,
};

use super::benchmark::run_benchmark;
use super::checkpoint::{save_checkpoint, CheckpointMeta};
use super::config::{load_map, Algo, RunConfig};
use super::metrics::{outcome_name, MetricsSeries};
use super::plot::{learning_curves_svg, trajectory_svg, TrajectoryKind};
use super::train::{evaluate, train_with, EvalReport};
use super::HarnessError;

#[derive(Debug, Parser)]
#[command(name = "navbot", version, about = "Maze navigation from pixels: simulator, VAE and RL planners")]
struct Cli {
    /// Line-oriented `key = value` config file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Extra `key=value` override, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Drive the robot randomly and save observations to `<out>/frames.nvfd`.
    CollectFrames {
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Train the VAE on a frame dataset and save `<out>/vae.nvbt`.
    TrainVae {
        /// Defaults to `<out>/frames.nvfd`.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Frames held out from the end of the dataset for validation.
        #[arg(long, default_value_t = 1000)]
        holdout: usize,
    },
    /// Train one planner; writes metrics.csv, checkpoint.nvbt and final.nvbt.
    Train {
        #[arg(long)]
        algo: Option<String>,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Print progress every this many episodes (0 = silent).
        #[arg(long, default_value_t = 50)]
        log_every: usize,
    },
    /// Run a trained planner without learning; writes eval.json and trajectories.svg.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        /// Sample actions and keep execution noise on.
        #[arg(long)]
        stochastic: bool,
    },
    /// Train every (map, algo, seed) cell of the configured grid.
    Benchmark,
    /// Learning curves from metrics CSVs and/or trajectory overlays from eval JSONs.
    Plot {
        #[arg(long, num_args = 1..)]
        metrics: Vec<PathBuf>,
        #[arg(long, num_args = 1..)]
        eval: Vec<PathBuf>,
    },
    /// Write PPM frames for the configured `render_poses` (or the start pose).
    Render,
}

/// Parses `argv` (including the program name), runs the command and returns the
/// process exit code: 0 success, 1 usage error, 2 runtime failure.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            if e.kind() == clap::error::ErrorKind::InvalidSubcommand {
                let names: Vec<_> = <Cli as clap::CommandFactory>::command()
                    .get_subcommands()
                    .map(|c| c.get_name().to_string())
                    .collect();
                eprintln!("valid subcommands: {}", names.join(", "));
            }
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn build_config(cli: &Cli) -> Result<RunConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| HarnessError::Usage(format!("--set expects key=value, got {kv:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(s) = cli.seed {
        cfg.set("seed", &s.to_string())?;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let mut cfg = build_config(&cli)?;
    match cli.cmd {
        Cmd::CollectFrames { frames } => {
            let n = frames.unwrap_or(cfg.frames);
            let map = load_map(&cfg.map)?;
            let mut env = NavEnv::new(map, cfg.env.clone())?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(3);
            let data = collect_frames(&mut env, n, &mut rng)?;
            std::fs::create_dir_all(&cfg.out_dir)?;
            let path = cfg.out_dir.join("frames.nvfd");
            data.save(&path)?;
            println!("wrote {} frames to {}", data.len(), path.display());
        }
        Cmd::TrainVae { data, holdout } => train_vae_cmd(&cfg, data, holdout)?,
        Cmd::Train {
            algo,
            resume,
            log_every,
        } => {
            if let Some(a) = algo {
                cfg.set("algo", &a)?;
            }
            let report = train_with(&cfg, resume.as_deref(), |r, rate| {
                if log_every > 0 && (r.episode + 1) % log_every == 0 {
                    eprintln!(
                        "episode {:>6}  steps {:>8}  reward {:>8.2}  {:<9}  success_100 {:.2}",
                        r.episode + 1,
                        r.cumulative_steps,
                        r.total_reward,
                        outcome_name(r.outcome),
                        rate
                    );
                }
            })?;
            match report.steps_to_threshold {
                Some(s) => println!("{}: reached {:.0}% success after {s} env steps", cfg.algo, 100.0 * cfg.success_threshold),
                None => println!("{}: did not reach the threshold within {} env steps", cfg.algo, report.env_steps),
            }
            println!("metrics: {}", report.metrics_csv.display());
            println!("checkpoint: {}", report.final_checkpoint.display());
        }
        Cmd::Eval {
            checkpoint,
            episodes,
            stochastic,
        } => {
            let n = episodes.unwrap_or(cfg.eval_episodes);
            let report = evaluate(&checkpoint, &cfg, n, !stochastic)?;
            let map = load_map(&cfg.map)?;
            let start = map.start_cells()[0];
            let shortest = map.shortest_path_length(start);
            std::fs::create_dir_all(&cfg.out_dir)?;
            let mut json = serde_json::to_vec_pretty(&report)?;
            json.push(b'\n');
            std::fs::write(cfg.out_dir.join("eval.json"), json)?;
            let kind = kind_of(report.algo);
            let trajs: Vec<_> = report.episodes.iter().map(|e| (kind, &e.trajectory[..])).collect();
            std::fs::write(cfg.out_dir.join("trajectories.svg"), trajectory_svg(&map, &trajs))?;
            println!("{}: success rate {:.2} over {n} episodes", report.algo, report.success_rate);
            if let Some(best) = report
                .episodes
                .iter()
                .filter(|e| e.outcome == Outcome::Arrival)
                .map(|e| e.path_length)
                .min_by(f64::total_cmp)
            {
                match shortest {
                    Some(s) => println!("shortest successful path {best:.2} m (grid shortest path {s:.2} m, ratio {:.2})", best / s),
                    None => println!("shortest successful path {best:.2} m"),
                }
            }
        }
        Cmd::Benchmark => {
            let report = run_benchmark(&cfg, |row| {
                eprintln!(
                    "{} {} seed {}: {}",
                    row.map,
                    row.algo,
                    row.seed,
                    row.steps_to_threshold.map_or("DNF".to_string(), |s| format!("{s} steps"))
                );
            })?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            for m in &report.maps {
                println!(
                    "{}: median {} {:?}, median {} {:?}, ratio {:?} (bound {:?})",
                    m.map, report.proposed, m.proposed_median, report.baseline, m.baseline_median, m.ratio, m.ratio_bound
                );
            }
        }
        Cmd::Plot { metrics, eval } => {
            if metrics.is_empty() && eval.is_empty() {
                return Err(HarnessError::Usage("plot needs --metrics and/or --eval files".into()));
            }
            std::fs::create_dir_all(&cfg.out_dir)?;
            if !metrics.is_empty() {
                let loaded = metrics
                    .iter()
                    .map(|p| Ok((series_label(p), MetricsSeries::load_csv(p)?)))
                    .collect::<Result<Vec<_>, HarnessError>>()?;
                let refs: Vec<_> = loaded.iter().map(|(l, s)| (l.clone(), s)).collect();
                let path = cfg.out_dir.join("learning_curves.svg");
                std::fs::write(&path, learning_curves_svg(&refs))?;
                println!("wrote {}", path.display());
            }
            if !eval.is_empty() {
                let map = load_map(&cfg.map)?;
                let reports = eval
                    .iter()
                    .map(|p| Ok(serde_json::from_slice::<EvalReport>(&std::fs::read(p)?)?))
                    .collect::<Result<Vec<_>, HarnessError>>()?;
                let trajs: Vec<_> = reports
                    .iter()
                    .flat_map(|r| r.episodes.iter().map(move |e| (kind_of(r.algo), &e.trajectory[..])))
                    .collect();
                let path = cfg.out_dir.join("trajectories.svg");
                std::fs::write(&path, trajectory_svg(&map, &trajs))?;
                println!("wrote {}", path.display());
            }
        }
        Cmd::Render => {
            let map = load_map(&cfg.map)?;
            let mut poses = cfg.poses();
            if poses.is_empty() {
                let (x, y) = map.cell_center(map.start_cells()[0]);
                poses.push(Pose::new(x, y, 0.0));
            }
            std::fs::create_dir_all(&cfg.out_dir)?;
            let camera = Camera { fov: cfg.env.fov };
            for (i, pose) in poses.iter().enumerate() {
                let obs = render(&map, *pose, &camera)?;
                let path = cfg.out_dir.join(format!("frame_{i:03}.ppm"));
                std::fs::write(&path, obs.to_ppm())?;
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn kind_of(algo: Algo) -> TrajectoryKind {
    if algo == Algo::VaePpo {
        TrajectoryKind::Proposed
    } else {
        TrajectoryKind::Benchmark
    }
}

/// `a/b/e2e-ppo/seed0/metrics.csv` becomes `e2e-ppo/seed0`.
fn series_label(p: &Path) -> String {
    let parts: Vec<_> = p
        .parent()
        .into_iter()
        .flat_map(|d| d.components().rev().take(2))
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect();
    if parts.is_empty() {
        p.display().to_string()
    } else {
        parts.into_iter().rev().collect::<Vec<_>>().join("/")
    }
}

fn train_vae_cmd(cfg: &RunConfig, data: Option<PathBuf>, holdout: usize) -> Result<(), HarnessError> {
    let path = data.unwrap_or_else(|| cfg.out_dir.join("frames.nvfd"));
    let all = FrameDataset::load(&path)?;
    if holdout >= all.len() {
        return Err(HarnessError::Usage(format!(
            "holdout {holdout} leaves no training frames out of {}",
            all.len()
        )));
    }
    let (train, test) = all.split_tail(holdout);
    let model = VaeModel::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(4);
    let per_epoch = train.len().div_ceil(cfg.vae.batch_size.max(1));
    let started = std::time::Instant::now();
    let outcome = train_vae(&model, None, &train, &cfg.vae, &mut rng, |i, parts| {
        if (i + 1) % per_epoch == 0 {
            eprintln!(
                "epoch {:>3}  loss {:.5}  recon {:.5}  kl {:.4}",
                (i + 1) / per_epoch,
                parts.loss,
                parts.loss_r,
                parts.loss_c
            );
        }
    })?;
    let seconds = started.elapsed().as_secs_f64();
    let train_mse = reconstruction_mse(&model, &outcome.params, &train)?;
    let test_mse = if test.is_empty() {
        None
    } else {
        Some(reconstruction_mse(&model, &outcome.params, &test)?)
    };
    let (_, var) = latent_statistics(&model, &outcome.params, &train)?;
    let mean_var = var.iter().sum::<f64>() / var.len() as f64;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut w = csv::Writer::from_path(cfg.out_dir.join("vae_loss.csv"))?;
    w.write_record(["update", "loss_r", "loss_c", "loss"])?;
    for (i, p) in outcome.history.iter().enumerate() {
        w.write_record([i.to_string(), p.loss_r.to_string(), p.loss_c.to_string(), p.loss.to_string()])?;
    }
    w.flush()?;
    let meta = CheckpointMeta {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        env_steps: 0,
        episodes: 0,
        algo: "vae".into(),
        rngs: Vec::new(),
        extra: json!({
            "frames": train.len(),
            "heldout": test.len(),
            "train_mse": train_mse,
            "heldout_mse": test_mse,
            "mean_latent_variance": mean_var,
            "train_seconds": seconds,
            "vae": cfg.vae,
        }),
    };
    let out = cfg.out_dir.join("vae.nvbt");
    save_checkpoint(&outcome.params.merged(), &meta, &out)?;
    println!("train mse {train_mse:.5}, held-out mse {:?}, mean latent variance {mean_var:.3}", test_mse);
    println!("wrote {}", out.display());
    Ok(())
}
