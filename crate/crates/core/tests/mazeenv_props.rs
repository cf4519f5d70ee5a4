use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, SQRT_2};
use std::sync::Arc;

use navbot::harness::load_map;
use navbot::mazeenv::*;
use proptest::prelude::*;

fn room5() -> MazeMap {
    MazeMap::parse("#####\n#...#\n#.S.#\n#..G#\n#####\n").unwrap()
}

fn sym_room() -> MazeMap {
    MazeMap::parse("cellsize = 1\nAAAAAAA\nB.....D\nBS...GD\nB.....D\nAAAAAAA\n").unwrap()
}

fn euler(pose: Pose, a: AgentAction, dt: f64, n: usize) -> (f64, f64, f64) {
    let h = dt / n as f64;
    let (mut x, mut y, mut th) = (pose.x, pose.y, pose.heading);
    for _ in 0..n {
        // midpoint rule on the heading keeps the oracle second order
        let mid = th + 0.5 * a.w * h;
        x += a.v * mid.cos() * h;
        y += a.v * mid.sin() * h;
        th += a.w * h;
    }
    (x, y, th)
}

fn march(map: &MazeMap, o: (f64, f64), a: f64) -> f64 {
    let (dx, dy) = (a.cos(), a.sin());
    let step = 1e-4;
    let mut t = 0.0;
    loop {
        t += step;
        let (c, r) = map.cell_of(o.0 + dx * t, o.1 + dy * t);
        if map.cell(c, r).is_wall() {
            return t;
        }
    }
}

#[test]
fn parse_examples() {
    assert_eq!(MazeMap::parse("###\n#S#\n###\n").unwrap_err(), MapError::MissingGoal);
    let m = MazeMap::parse("#####\n#S..#\n#...#\n#..G#\n#####\n").unwrap();
    assert_eq!(m.free_cells().len(), 9);
}

#[test]
fn maze1_wall_count_matches_hand_count() {
    // 11 + 2 + 2 + 6 + 3 + 3 + 3 + 4 + 6 + 2 + 11, row by row
    let m = load_map("maze1").unwrap();
    assert_eq!((m.width(), m.height()), (11, 11));
    assert_eq!(m.wall_count(), 53);
}

#[test]
fn kinematics_examples() {
    let p = integrate(Pose::new(0.0, 0.0, 0.0), AgentAction::new(1.0, 0.0), 0.1);
    assert!((p.x - 0.1).abs() < 1e-12 && p.y.abs() < 1e-12);
    let p = integrate(Pose::new(0.0, 0.0, 0.0), AgentAction::new(0.0, 1.0), 0.5);
    assert!(p.x.abs() < 1e-12 && (p.heading - 0.5).abs() < 1e-12);
    let p = integrate(Pose::new(0.0, 0.0, 0.0), AgentAction::new(1.0, 1.0), FRAC_PI_2);
    assert!((p.x - 1.0).abs() < 1e-12 && (p.y - 1.0).abs() < 1e-12);
    assert!((p.heading - FRAC_PI_2).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn arc_matches_fine_euler(
        x in -5.0..5.0f64, y in -5.0..5.0f64, th in -PI..PI,
        v in 0.0..1.0f64, w in -2.0..2.0f64, dt in 0.01..0.5f64,
    ) {
        let p = integrate(Pose::new(x, y, th), AgentAction::new(v, w), dt);
        let (ex, ey, eth) = euler(Pose::new(x, y, th), AgentAction::new(v, w), dt, 10_000);
        prop_assert!((p.x - ex).abs() < 1e-4 && (p.y - ey).abs() < 1e-4);
        prop_assert!(wrap_angle(p.heading - eth).abs() < 1e-6);
    }

    #[test]
    fn wrap_stays_in_half_open_interval(a in -100.0..100.0f64) {
        let w = wrap_angle(a);
        prop_assert!(w > -PI && w <= PI);
        prop_assert!(((a - w) / (2.0 * PI)).round() * 2.0 * PI - (a - w) < 1e-9);
    }

    #[test]
    fn slice_height_decreases_with_distance(d1 in 1.05..3.0f64, gap in 0.05..1.5f64) {
        let map = sym_room();
        let cam = Camera::default();
        let near = cast_columns(&map, Pose::new(6.0 - d1, 2.5, 0.0), &cam).unwrap();
        let far = cast_columns(&map, Pose::new(6.0 - d1 - gap, 2.5, 0.0), &cam).unwrap();
        prop_assume!(6.0 - d1 - gap > 1.2);
        prop_assert!(near[32].slice_height > far[32].slice_height);
    }
}

#[test]
fn raycast_room_examples() {
    let m = room5();
    let h = cast_ray(&m, (2.5, 2.5), (1.0, 0.0)).unwrap();
    assert!((h.distance - 1.5).abs() < 1e-12);
    assert_eq!(h.side, Side::EW);
    let h = cast_ray(&m, (2.5, 2.5), (FRAC_PI_4.cos(), FRAC_PI_4.sin())).unwrap();
    assert!((h.distance - 1.5 * SQRT_2).abs() < 1e-9);
}

#[test]
fn raycast_matches_ray_marching() {
    use rand::{Rng, SeedableRng};
    let map = load_map("maze1").unwrap();
    let free = map.free_cells();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    for _ in 0..500 {
        let (c, r) = free[rng.random_range(0..free.len())];
        let o = (
            (c as f64 + rng.random_range(0.05..0.95)) * map.cell_size,
            (r as f64 + rng.random_range(0.05..0.95)) * map.cell_size,
        );
        let a = rng.random_range(-PI..PI);
        let hit = cast_ray(&map, o, (a.cos(), a.sin())).unwrap();
        let m = march(&map, o, a);
        assert!((hit.distance - m).abs() < 2e-4, "dda {} vs march {m}", hit.distance);
    }
}

#[test]
fn mirror_symmetric_view_is_bit_exact() {
    let map = sym_room();
    let obs = render(&map, Pose::new(2.0, 2.5, 0.0), &Camera::default()).unwrap();
    assert_eq!(obs, obs.mirrored());
    let obs = render(&map, Pose::new(5.0, 2.5, PI), &Camera::default()).unwrap();
    assert_eq!(obs, obs.mirrored());
}

#[test]
fn closer_wall_draws_taller_center_column() {
    let map = sym_room();
    let cam = Camera::default();
    let near = render(&map, Pose::new(4.0, 2.5, 0.0), &cam).unwrap();
    let far = render(&map, Pose::new(2.0, 2.5, 0.0), &cam).unwrap();
    assert!(wall_pixels_in_column(&near, 32) > wall_pixels_in_column(&far, 32));
}

#[test]
fn golden_frame_is_byte_identical() {
    let map = load_map("maze1").unwrap();
    let obs = render(&map, Pose::new(3.2, 1.0, 2.4), &Camera::default()).unwrap();
    let golden = include_bytes!("golden/maze1.ppm");
    assert_eq!(&obs.to_ppm()[..], &golden[..]);
}

#[test]
fn ppm_has_exact_header_and_length() {
    let map = load_map("maze1").unwrap();
    let ppm = render(&map, Pose::new(1.25, 4.75, 0.0), &Camera::default()).unwrap().to_ppm();
    assert_eq!(&ppm[..13], b"P6\n64 48\n255\n");
    assert_eq!(ppm.len(), 13 + 9216);
}

#[test]
fn render_is_pure() {
    let map = load_map("maze2").unwrap();
    let p = Pose::new(1.3, 1.7, 0.9);
    let a = render(&map, p, &Camera::default()).unwrap();
    let b = render(&map, p, &Camera::default()).unwrap();
    assert_eq!(a.as_bytes(), b.as_bytes());
}

#[test]
fn target_polar_examples() {
    let t = target_polar(Pose::new(0.0, 0.0, 0.0), (1.0, 1.0));
    assert!((t.distance - SQRT_2).abs() < 1e-12 && (t.angle - FRAC_PI_4).abs() < 1e-12);
    let t = target_polar(Pose::new(0.0, 0.0, FRAC_PI_2), (1.0, 1.0));
    assert!((t.angle + FRAC_PI_4).abs() < 1e-12);
    let t = target_polar(Pose::new(1.0, 1.0, 2.0), (1.0, 1.0));
    assert_eq!((t.distance, t.angle), (0.0, 0.0));
}

#[test]
fn reward_branches() {
    let c = RewardConfig::default();
    assert_eq!(compute_reward(2.0, 1.9, true, &c), -10.0);
    assert!((compute_reward(2.0, 1.9, false, &c) - 0.95).abs() < 1e-12);
    assert_eq!(compute_reward(0.4, 0.25, false, &c), 10.0);
    // collision outranks arrival
    assert_eq!(compute_reward(0.4, 0.25, true, &c), -10.0);
}

fn env(map: &str, cfg: EnvConfig) -> NavEnv {
    NavEnv::new(load_map(map).unwrap(), cfg).unwrap()
}

#[test]
fn fixed_start_resets_identically() {
    let mut e = env("maze1", EnvConfig::default());
    let a = e.reset().unwrap();
    let b = e.reset().unwrap();
    assert_eq!(a, b);
}

#[test]
fn random_starts_reproduce_under_seed() {
    let cfg = EnvConfig {
        random_start: true,
        seed: 11,
        ..EnvConfig::default()
    };
    let run = || {
        let mut e = env("maze2", cfg.clone());
        (0..20).map(|_| e.reset().unwrap().pose).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn thousand_random_spawns_are_collision_free() {
    let cfg = EnvConfig {
        random_start: true,
        ..EnvConfig::default()
    };
    let mut e = env("maze1", cfg.clone());
    for _ in 0..1000 {
        let p = e.reset_anywhere().unwrap().pose;
        assert!(!e.map().disc_hits_wall(p.x, p.y, cfg.robot_radius));
        let p = e.reset().unwrap().pose;
        assert!(!e.map().disc_hits_wall(p.x, p.y, cfg.robot_radius));
    }
}

#[test]
fn driving_into_a_wall_collides() {
    let cfg = EnvConfig {
        action_noise: 0.0,
        ..EnvConfig::default()
    };
    let mut e = env("corridor", cfg.clone());
    // wall face of the left column is at x = 0.5; a full-speed step covers 0.05 m
    let x = 0.5 + cfg.robot_radius + 0.04;
    e.reset_to(Pose::new(x, 1.25, PI)).unwrap();
    let s = e.step(AgentAction::new(cfg.v_max, 0.0)).unwrap();
    assert_eq!(s.outcome, Outcome::Collision);
    assert_eq!(s.reward, cfg.reward.r_collision);
    assert!(matches!(e.step(AgentAction::new(0.1, 0.0)), Err(EnvError::EpisodeOver)));
}

#[test]
fn arriving_near_goal() {
    let cfg = EnvConfig {
        action_noise: 0.0,
        ..EnvConfig::default()
    };
    let mut e = env("corridor", cfg.clone());
    let (gx, gy) = e.map().goal_point();
    e.reset_to(Pose::new(gx - 0.2, gy, 0.0)).unwrap();
    let s = e.step(AgentAction::new(0.0, 0.0)).unwrap();
    assert_eq!(s.outcome, Outcome::Arrival);
    assert_eq!(s.reward, cfg.reward.r_arrival);
}

#[test]
fn noiseless_runs_are_bit_identical() {
    let cfg = EnvConfig {
        action_noise: 0.0,
        ..EnvConfig::default()
    };
    let actions: Vec<_> = (0..40)
        .map(|i| AgentAction::new(0.3, if i % 7 < 3 { 0.5 } else { -0.4 }))
        .collect();
    let run = || {
        let mut e = env("maze1", cfg.clone());
        let mut out = vec![e.reset().unwrap()];
        for a in &actions {
            let s = e.step(*a).unwrap();
            let done = s.outcome.is_terminal();
            out.push(s);
            if done {
                break;
            }
        }
        out
    };
    assert_eq!(run(), run());
}

#[test]
fn stepping_before_reset_fails() {
    let mut e = env("maze1", EnvConfig::default());
    assert!(matches!(e.step(AgentAction::new(0.1, 0.0)), Err(EnvError::NotReset)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Random policies never leave the robot overlapping a wall, and episodes
    // never exceed the step limit.
    #[test]
    fn no_tunneling_and_bounded_episodes(seed in 0u64..1000, max_steps in 5usize..60) {
        use rand::{Rng, SeedableRng};
        let cfg = EnvConfig { max_episode_steps: max_steps, seed, ..EnvConfig::default() };
        prop_assert!(cfg.v_max * cfg.dt / cfg.substeps as f64 <= cfg.robot_radius);
        let map: Arc<MazeMap> = load_map("maze1").unwrap();
        let mut e = NavEnv::new(map.clone(), cfg.clone()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut s = e.reset_anywhere().unwrap();
        while !s.outcome.is_terminal() {
            s = e.step(AgentAction::new(rng.random_range(0.0..0.5), rng.random_range(-1.0..1.0))).unwrap();
            prop_assert!(!map.disc_hits_wall(s.pose.x, s.pose.y, cfg.robot_radius));
            prop_assert!(s.step_index <= max_steps);
        }
    }
}
