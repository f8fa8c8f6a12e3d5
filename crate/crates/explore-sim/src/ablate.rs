//! Sweep driver: one base scenario crossed with seed, mode, and radio-range
//! lists, reported as per-run rows plus mean and spread per configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::Deserialize;
use thiserror::Error;

use explore_core::Real;

use crate::metrics::{mean_std, RunMetrics};
use crate::scenario::{build_world, Mode, ScenarioConfig, ScenarioError};
use crate::sim::Simulation;

#[derive(Debug, Error)]
pub enum AblateError {
    #[error("failed to read {0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("matrix parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("invalid matrix: {0}")]
    Invalid(String),
}

/// The sweep description: which scenario, and the axes to cross. Omitted
/// axes fall back to the scenario's own values.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Matrix {
    /// Base scenario path, resolved relative to the matrix file.
    pub scenario: PathBuf,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub modes: Option<Vec<Mode>>,
    #[serde(default)]
    pub r_comm: Option<Vec<Real>>,
}

impl Matrix {
    pub fn load(path: &Path) -> Result<Self, AblateError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| AblateError::Io(path.to_path_buf(), e))?;
        let mut m: Matrix = toml::from_str(&text)?;
        if m.seeds.is_empty() {
            return Err(AblateError::Invalid("seeds must not be empty".into()));
        }
        if m.modes.as_ref().is_some_and(|v| v.is_empty()) {
            return Err(AblateError::Invalid("modes, when given, must not be empty".into()));
        }
        if m.r_comm.as_ref().is_some_and(|v| v.is_empty()) {
            return Err(AblateError::Invalid("r_comm, when given, must not be empty".into()));
        }
        if m.scenario.is_relative() {
            let base = path.parent().unwrap_or_else(|| Path::new("."));
            m.scenario = base.join(&m.scenario);
        }
        Ok(m)
    }
}

/// Order-preserving parallel map over independent jobs using scoped
/// threads; runs sequentially when only one worker is available.
pub fn parallel_map<T, R, F>(jobs: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Send + Sync,
{
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(jobs.len().max(1));
    if workers <= 1 {
        return jobs.into_iter().map(f).collect();
    }
    let n = jobs.len();
    let queue: Mutex<Vec<(usize, T)>> = Mutex::new(jobs.into_iter().enumerate().rev().collect());
    let results: Mutex<Vec<Option<R>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let job = queue.lock().unwrap().pop();
                let Some((i, t)) = job else { break };
                let r = f(t);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    results.into_inner().unwrap().into_iter().map(|r| r.expect("worker finished")).collect()
}

/// One run's identity within a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub mode: Mode,
    pub r_comm: Real,
    pub seed: u64,
}

pub struct SweepResult {
    pub rows: Vec<(SweepPoint, RunMetrics)>,
    pub csv: String,
    pub summary: String,
}

/// Runs the cross product described by the matrix. Each run rebuilds the
/// world from the base scenario with the point's seed, mode, and radio
/// range, so generated maps vary with the seed exactly as single runs do.
pub fn run_matrix(matrix: &Matrix) -> Result<SweepResult, AblateError> {
    let base = ScenarioConfig::load(&matrix.scenario)?;
    let modes = matrix.modes.clone().unwrap_or_else(|| vec![base.mode]);
    let radii = matrix.r_comm.clone().unwrap_or_else(|| vec![base.agents.r_comm]);

    let mut points = Vec::new();
    for &mode in &modes {
        for &r_comm in &radii {
            for &seed in &matrix.seeds {
                points.push(SweepPoint { mode, r_comm, seed });
            }
        }
    }

    let rows: Vec<(SweepPoint, RunMetrics)> = parallel_map(points, |pt| {
        let mut cfg = base.clone();
        cfg.seed = pt.seed;
        cfg.mode = pt.mode;
        cfg.agents.r_comm = pt.r_comm;
        let world = build_world(cfg).expect("base scenario validated");
        let metrics = Simulation::new(world).run();
        (pt, metrics)
    });

    let mut csv = String::from(
        "scenario,mode,r_comm,seed,ticks,time_s,total_path_m,mean_velocity_mps,complete\n",
    );
    for (pt, m) in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{:.4},{:.4},{:.6},{}",
            m.scenario,
            pt.mode.as_str(),
            pt.r_comm,
            pt.seed,
            m.ticks,
            m.exploration_time_s,
            m.total_path_m,
            m.mean_velocity_mps,
            m.complete
        );
    }

    let mut summary = String::new();
    for &mode in &modes {
        for &r_comm in &radii {
            let group: Vec<&RunMetrics> = rows
                .iter()
                .filter(|(pt, _)| pt.mode == mode && pt.r_comm == r_comm)
                .map(|(_, m)| m)
                .collect();
            let times: Vec<Real> = group.iter().map(|m| m.exploration_time_s).collect();
            let paths: Vec<Real> = group.iter().map(|m| m.total_path_m).collect();
            let (tm, ts) = mean_std(&times);
            let (pm, ps) = mean_std(&paths);
            let incomplete = group.iter().filter(|m| !m.complete).count();
            let _ = write!(
                summary,
                "mode={:<8} r_comm={:<6} n={:<3} time {:8.1} ± {:6.1} s  path {:8.1} ± {:6.1} m",
                mode.as_str(),
                r_comm,
                group.len(),
                tm,
                ts,
                pm,
                ps
            );
            if incomplete > 0 {
                let _ = write!(summary, "  INCOMPLETE={incomplete}");
            }
            summary.push('\n');
        }
    }

    Ok(SweepResult { rows, csv, summary })
}

/// Runs a matrix file and writes `ablation.csv` and `summary.txt` to the
/// output directory. Returns the human-readable summary.
pub fn ablate_to_dir(matrix_path: &Path, out: &Path) -> Result<String, AblateError> {
    let matrix = Matrix::load(matrix_path)?;
    let result = run_matrix(&matrix)?;
    std::fs::create_dir_all(out).map_err(|e| AblateError::Io(out.to_path_buf(), e))?;
    let csv_path = out.join("ablation.csv");
    std::fs::write(&csv_path, &result.csv).map_err(|e| AblateError::Io(csv_path, e))?;
    let sum_path = out.join("summary.txt");
    std::fs::write(&sum_path, &result.summary).map_err(|e| AblateError::Io(sum_path, e))?;
    Ok(result.summary)
}
