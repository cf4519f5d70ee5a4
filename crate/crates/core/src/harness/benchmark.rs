use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Algo, RunConfig};
use super::train::{train_with, TrainReport};
use super::HarnessError;

/// One (algo, map, seed) cell of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub map: String,
    pub algo: Algo,
    pub seed: u64,
    /// Env steps at the first full-window threshold crossing; `None` is a DNF.
    pub steps_to_threshold: Option<u64>,
    pub env_steps: u64,
    pub episodes: usize,
    /// Trailing success rate at the end of the run.
    pub final_success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSummary {
    pub map: String,
    pub proposed_median: Option<f64>,
    pub baseline_median: Option<f64>,
    /// `proposed_median / baseline_median`, finished runs only.
    pub ratio: Option<f64>,
    /// Ratio with baseline DNFs counted at the budget: an upper bound on the true ratio.
    pub ratio_bound: Option<f64>,
    pub dnf: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub proposed: Algo,
    pub baseline: Algo,
    pub budget: u64,
    pub success_threshold: f64,
    pub rows: Vec<BenchmarkRow>,
    pub maps: Vec<MapSummary>,
    pub warnings: Vec<String>,
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

impl BenchmarkReport {
    /// Summarizes a finished grid. DNF rows are excluded from the medians and
    /// reported in `warnings`.
    pub fn from_rows(
        rows: Vec<BenchmarkRow>,
        proposed: Algo,
        baseline: Algo,
        budget: u64,
        success_threshold: f64,
    ) -> Self {
        let mut maps: Vec<String> = Vec::new();
        for r in &rows {
            if !maps.contains(&r.map) {
                maps.push(r.map.clone());
            }
        }
        let mut warnings = Vec::new();
        for r in rows.iter().filter(|r| r.steps_to_threshold.is_none()) {
            warnings.push(format!(
                "{} on {} seed {} did not reach the threshold within {} steps (DNF)",
                r.algo, r.map, r.seed, budget
            ));
        }
        let summaries = maps
            .into_iter()
            .map(|map| {
                let m = map.as_str();
                let rows = &rows;
                let of = move |algo: Algo| rows.iter().filter(move |r| r.map == m && r.algo == algo);
                let done = move |algo: Algo| -> Vec<f64> {
                    of(algo).filter_map(|r| r.steps_to_threshold.map(|s| s as f64)).collect()
                };
                let proposed_median = median(&done(proposed));
                let baseline_median = median(&done(baseline));
                let baseline_capped: Vec<f64> = of(baseline)
                    .map(|r| r.steps_to_threshold.unwrap_or(budget) as f64)
                    .collect();
                let ratio = proposed_median.zip(baseline_median).map(|(p, b)| p / b);
                let ratio_bound = proposed_median.zip(median(&baseline_capped)).map(|(p, b)| p / b);
                let dnf = rows
                    .iter()
                    .filter(|r| r.map == map && r.steps_to_threshold.is_none())
                    .count();
                MapSummary {
                    map: map.clone(),
                    proposed_median,
                    baseline_median,
                    ratio,
                    ratio_bound,
                    dnf,
                }
            })
            .collect();
        Self {
            proposed,
            baseline,
            budget,
            success_threshold,
            rows,
            maps: summaries,
            warnings,
        }
    }

    pub fn summary(&self, map: &str) -> Option<&MapSummary> {
        self.maps.iter().find(|m| m.map == map)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "map",
            "algo",
            "seed",
            "steps_to_threshold",
            "env_steps",
            "episodes",
            "final_success_rate",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.map.clone(),
                r.algo.to_string(),
                r.seed.to_string(),
                r.steps_to_threshold.map_or("DNF".into(), |s| s.to_string()),
                r.env_steps.to_string(),
                r.episodes.to_string(),
                r.final_success_rate.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir)?;
        self.write_csv(&dir.join("benchmark.csv"))?;
        let mut json = serde_json::to_vec_pretty(self)?;
        json.push(b'\n');
        std::fs::write(dir.join("benchmark.json"), json)?;
        Ok(())
    }
}

pub fn row_from_report(cfg: &RunConfig, report: &TrainReport) -> BenchmarkRow {
    BenchmarkRow {
        map: cfg.map.clone(),
        algo: cfg.algo,
        seed: cfg.seed,
        steps_to_threshold: report.steps_to_threshold,
        env_steps: report.env_steps,
        episodes: report.series.len(),
        final_success_rate: report.series.success_rates().last().copied().unwrap_or(0.0),
    }
}

/// Config of one grid cell; output goes to `<out>/<map>/<algo>/seed<k>`.
pub fn cell_config(base: &RunConfig, algo: Algo, map: &str, seed: u64) -> Result<RunConfig, HarnessError> {
    let mut c = base.clone();
    c.algo = algo;
    c.map = map.to_string();
    c.seed = seed;
    c.env.seed = seed;
    c.out_dir = base
        .out_dir
        .join(map.replace(['/', '\\'], "_"))
        .join(algo.name())
        .join(format!("seed{seed}"));
    if algo == Algo::VaePpo {
        if let Some((_, p)) = base.bench_vae.iter().find(|(m, _)| m == map) {
            c.vae_checkpoint = Some(p.clone());
        }
        if c.vae_checkpoint.is_none() {
            return Err(HarnessError::MissingVae);
        }
    }
    Ok(c)
}

/// Trains every (map, algo, seed) cell of the configured grid in turn and compares
/// vae-ppo against e2e-ppo (or the first two configured algos).
pub fn run_benchmark(
    base: &RunConfig,
    mut on_cell: impl FnMut(&BenchmarkRow),
) -> Result<BenchmarkReport, HarnessError> {
    if base.bench_seeds.is_empty() {
        return Err(HarnessError::Usage("benchmark needs at least one seed".into()));
    }
    let mut rows = Vec::new();
    for map in &base.bench_maps {
        for &algo in &base.bench_algos {
            for &seed in &base.bench_seeds {
                let cfg = cell_config(base, algo, map, seed)?;
                let report = train_with(&cfg, None, |_, _| {})?;
                let row = row_from_report(&cfg, &report);
                on_cell(&row);
                rows.push(row);
            }
        }
    }
    let (proposed, baseline) = comparison_pair(&base.bench_algos);
    let report = BenchmarkReport::from_rows(rows, proposed, baseline, base.max_env_steps, base.success_threshold);
    report.save(&base.out_dir)?;
    Ok(report)
}

fn comparison_pair(algos: &[Algo]) -> (Algo, Algo) {
    if algos.contains(&Algo::VaePpo) && algos.contains(&Algo::E2ePpo) {
        (Algo::VaePpo, Algo::E2ePpo)
    } else {
        let a = algos.first().copied().unwrap_or(Algo::VaePpo);
        (a, algos.get(1).copied().unwrap_or(a))
    }
}
