//! Scenario files and the resolved world they describe.
//!
//! A scenario is a TOML document whose tables map one-to-one onto the
//! config structs below. Parsing is strict: unknown keys anywhere in the
//! file are an error, so typos fail loudly instead of silently running
//! with defaults.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use explore_core::voxel::io::parse_grid_text;
use explore_core::voxel::{CellState, VoxelMap};
use explore_core::{MotionLimits, Point3, Real};

use crate::generate::{self, Family};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("failed to read {0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("map file error: {0}")]
    Map(#[from] explore_core::voxel::VoxelError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Which coordination machinery a run uses. `Full` is the complete system;
/// the others disable one piece each for ablation comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Connectivity graph, contiguity-penalized allocation, dispatch.
    Full,
    /// Contiguity penalty forced to 1; everything else as in `Full`.
    NoCon,
    /// No region graph: tasks are per-grid unknown centroids and all
    /// traversal costs come from voxel search.
    NoGraph,
    /// Every agent independently chases its nearest frontier cluster; no
    /// allocation and no protocol traffic.
    Greedy,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::NoCon => "no-con",
            Mode::NoGraph => "no-graph",
            Mode::Greedy => "greedy",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Mode::Full),
            "no-con" => Ok(Mode::NoCon),
            "no-graph" => Ok(Mode::NoGraph),
            "greedy" => Ok(Mode::Greedy),
            other => Err(format!(
                "unknown mode {other:?} (expected full, no-con, no-graph, or greedy)"
            )),
        }
    }
}

/// Where the ground-truth map comes from: exactly one of `file` (a grid
/// text file, resolved relative to the scenario file) or `generator`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSource {
    pub file: Option<PathBuf>,
    pub generator: Option<Family>,
    /// World size in meters, required with `generator`.
    pub size: Option<[Real; 3]>,
    #[serde(default = "default_resolution")]
    pub resolution: Real,
}

fn default_resolution() -> Real {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentsConfig {
    pub count: usize,
    /// Spawn points; when omitted the agents start on free voxels near the
    /// map center. Must be free in the ground truth when given.
    pub starts: Option<Vec<[Real; 3]>>,
    /// Radio range in meters; `inf` is accepted.
    pub r_comm: Real,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitsConfig {
    pub v_max: Real,
    pub omega_max: Real,
    pub a_max: Real,
}

impl Default for LimitsConfig {
    fn default() -> Self {
        Self { v_max: 2.0, omega_max: 2.0, a_max: 2.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AllocConfig {
    pub sigma_q: Real,
    pub lambda_c: Real,
    pub grid_side: Real,
    pub dist_threshold: Real,
}

impl Default for AllocConfig {
    fn default() -> Self {
        Self { sigma_q: 1.1, lambda_c: 1.2, grid_side: 5.0, dist_threshold: 10.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub drop: f64,
    pub delay_min: u64,
    pub delay_max: u64,
    pub duplicate: f64,
    pub reorder: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { drop: 0.0, delay_min: 0, delay_max: 0, duplicate: 0.0, reorder: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensingConfig {
    /// Perception range in meters.
    pub range: Real,
}

impl Default for SensingConfig {
    fn default() -> Self {
        Self { range: 5.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub seed: u64,
    pub mode: Mode,
    #[serde(default = "default_tick_seconds")]
    pub tick_seconds: Real,
    /// Hard cap on simulated ticks; hitting it flags the run incomplete.
    #[serde(default = "default_tick_cap")]
    pub tick_cap: u64,
    pub map: MapSource,
    pub agents: AgentsConfig,
    #[serde(default)]
    pub limits: LimitsConfig,
    #[serde(default)]
    pub alloc: AllocConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub sensing: SensingConfig,
}

fn default_name() -> String {
    "scenario".into()
}

fn default_tick_seconds() -> Real {
    0.1
}

fn default_tick_cap() -> u64 {
    10_000
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load and validate; map file paths resolve relative to the scenario
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::Io(path.to_path_buf(), e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(file) = cfg.map.file.take() {
            let base = path.parent().unwrap_or_else(|| Path::new("."));
            cfg.map.file = Some(if file.is_absolute() { file } else { base.join(file) });
        }
        if cfg.name == default_name() {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                cfg.name = stem.to_string();
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |msg: String| Err(ScenarioError::Invalid(msg));
        match (&self.map.file, &self.map.generator) {
            (Some(_), Some(_)) => return bad("map has both file and generator".into()),
            (None, None) => return bad("map needs either file or generator".into()),
            (None, Some(_)) if self.map.size.is_none() => {
                return bad("generated map needs a size".into())
            }
            _ => {}
        }
        if let Some(size) = self.map.size {
            if size.iter().any(|&s| !(s > 0.0)) {
                return bad(format!("map size must be positive, got {size:?}"));
            }
        }
        let positives = [
            ("map.resolution", self.map.resolution),
            ("agents.r_comm", self.agents.r_comm),
            ("tick_seconds", self.tick_seconds),
            ("limits.v_max", self.limits.v_max),
            ("limits.omega_max", self.limits.omega_max),
            ("limits.a_max", self.limits.a_max),
            ("alloc.sigma_q", self.alloc.sigma_q),
            ("alloc.lambda_c", self.alloc.lambda_c),
            ("alloc.grid_side", self.alloc.grid_side),
            ("alloc.dist_threshold", self.alloc.dist_threshold),
            ("sensing.range", self.sensing.range),
        ];
        for (label, v) in positives {
            if !(v > 0.0) {
                return bad(format!("{label} must be positive, got {v}"));
            }
        }
        if self.agents.count == 0 {
            return bad("agents.count must be at least 1".into());
        }
        if let Some(starts) = &self.agents.starts {
            if starts.len() != self.agents.count {
                return bad(format!(
                    "agents.starts has {} entries for {} agents",
                    starts.len(),
                    self.agents.count
                ));
            }
        }
        for (label, p) in [("network.drop", self.network.drop), ("network.duplicate", self.network.duplicate)]
        {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{label} must be in [0, 1], got {p}"));
            }
        }
        if self.network.delay_min > self.network.delay_max {
            return bad(format!(
                "network.delay_min {} exceeds delay_max {}",
                self.network.delay_min, self.network.delay_max
            ));
        }
        if self.tick_cap == 0 {
            return bad("tick_cap must be at least 1".into());
        }
        Ok(())
    }

    pub fn motion_limits(&self) -> MotionLimits {
        MotionLimits {
            v_max: self.limits.v_max,
            omega_max: self.limits.omega_max,
            a_max: self.limits.a_max,
        }
    }
}

/// A scenario resolved against its map: ground truth plus validated spawn
/// points. This is the input the simulation proper runs on.
pub struct World {
    pub cfg: ScenarioConfig,
    pub truth: VoxelMap,
    pub starts: Vec<Point3>,
}

pub fn build_world(cfg: ScenarioConfig) -> Result<World, ScenarioError> {
    let truth = match (&cfg.map.file, cfg.map.generator) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ScenarioError::Io(path.clone(), e))?;
            parse_grid_text(&text, Point3::zero(), cfg.map.resolution)?
        }
        (None, Some(family)) => {
            let size = cfg.map.size.expect("validated: generator has size");
            generate::generate(family, size, cfg.map.resolution, cfg.seed)
        }
        _ => unreachable!("validated: exactly one map source"),
    };

    let starts = match &cfg.agents.starts {
        Some(list) => {
            let mut starts = Vec::with_capacity(list.len());
            for (i, &[x, y, z]) in list.iter().enumerate() {
                let p = Point3::new(x, y, z);
                let Some(c) = truth.voxel_at(p) else {
                    return Err(ScenarioError::Invalid(format!(
                        "agent {i} start {p:?} is outside the map"
                    )));
                };
                if truth.state(c) != CellState::Free {
                    return Err(ScenarioError::Invalid(format!(
                        "agent {i} start {p:?} is not free ground truth"
                    )));
                }
                starts.push(p);
            }
            starts
        }
        None => auto_starts(&truth, cfg.agents.count).ok_or_else(|| {
            ScenarioError::Invalid(format!(
                "map has fewer than {} free voxels for spawning",
                cfg.agents.count
            ))
        })?,
    };

    Ok(World { cfg, truth, starts })
}

/// Spawn points for maps without explicit starts: free voxel centers close
/// to the map center, deterministic and distinct.
fn auto_starts(truth: &VoxelMap, count: usize) -> Option<Vec<Point3>> {
    let [nx, ny, nz] = truth.dims();
    let center = Point3::new(
        truth.origin().x + nx as Real * truth.resolution() / 2.0,
        truth.origin().y + ny as Real * truth.resolution() / 2.0,
        truth.origin().z + nz as Real * truth.resolution() / 2.0,
    );
    let mut free: Vec<(Real, usize)> = (0..truth.len())
        .filter(|&idx| truth.state_idx(idx) == CellState::Free)
        .map(|idx| (truth.voxel_center(truth.coord(idx)).distance(center), idx))
        .collect();
    free.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    if free.len() < count {
        return None;
    }
    let picked: BTreeSet<usize> = free[..count].iter().map(|&(_, idx)| idx).collect();
    Some(
        picked
            .into_iter()
            .map(|idx| truth.voxel_center(truth.coord(idx)))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(mode: &str) -> String {
        format!(
            r#"
            seed = 7
            mode = "{mode}"
            [map]
            generator = "open-plan"
            size = [12.0, 12.0, 2.0]
            [agents]
            count = 2
            r_comm = 5.0
            "#
        )
    }

    #[test]
    fn minimal_scenario_parses_with_defaults() {
        let cfg = ScenarioConfig::from_toml_str(&minimal("full")).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.mode, Mode::Full);
        assert_eq!(cfg.tick_seconds, 0.1);
        assert_eq!(cfg.tick_cap, 10_000);
        assert_eq!(cfg.alloc.sigma_q, 1.1);
        assert_eq!(cfg.alloc.lambda_c, 1.2);
        assert_eq!(cfg.sensing.range, 5.0);
        assert!(!cfg.network.reorder);
    }

    #[test]
    fn all_modes_parse() {
        for (name, mode) in [
            ("full", Mode::Full),
            ("no-con", Mode::NoCon),
            ("no-graph", Mode::NoGraph),
            ("greedy", Mode::Greedy),
        ] {
            let cfg = ScenarioConfig::from_toml_str(&minimal(name)).unwrap();
            assert_eq!(cfg.mode, mode);
            assert_eq!(mode.as_str(), name);
            assert_eq!(name.parse::<Mode>().unwrap(), mode);
        }
        assert!("both".parse::<Mode>().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected_at_any_level() {
        let top = minimal("full") + "\nwhat = 1\n";
        assert!(ScenarioConfig::from_toml_str(&top).is_err());
        let nested = minimal("full").replace("count = 2", "count = 2\nwhta = 3");
        assert!(ScenarioConfig::from_toml_str(&nested).is_err());
        let section = minimal("full") + "\n[allocc]\nsigma_q = 1.0\n";
        assert!(ScenarioConfig::from_toml_str(&section).is_err());
    }

    #[test]
    fn numeric_validation_catches_nonpositive_values() {
        for bad in [
            minimal("full").replace("r_comm = 5.0", "r_comm = 0.0"),
            minimal("full").replace("r_comm = 5.0", "r_comm = -2.0"),
            minimal("full") + "\n[sensing]\nrange = 0.0\n",
            minimal("full") + "\n[limits]\nv_max = -1.0\n",
            minimal("full") + "\n[network]\ndrop = 1.5\n",
            minimal("full") + "\n[network]\ndelay_min = 4\ndelay_max = 1\n",
        ] {
            assert!(ScenarioConfig::from_toml_str(&bad).is_err(), "accepted: {bad}");
        }
    }

    #[test]
    fn infinite_r_comm_parses() {
        let text = minimal("full").replace("r_comm = 5.0", "r_comm = inf");
        let cfg = ScenarioConfig::from_toml_str(&text).unwrap();
        assert!(cfg.agents.r_comm.is_infinite());
    }

    #[test]
    fn map_source_must_be_exactly_one() {
        let none = minimal("full").replace("generator = \"open-plan\"", "");
        assert!(ScenarioConfig::from_toml_str(&none).is_err());
        let both = minimal("full").replace(
            "generator = \"open-plan\"",
            "generator = \"open-plan\"\nfile = \"x.txt\"",
        );
        assert!(ScenarioConfig::from_toml_str(&both).is_err());
    }

    #[test]
    fn starts_must_be_free_and_match_count() {
        let wrong_len = minimal("full").replace(
            "count = 2",
            "count = 2\nstarts = [[1.0, 1.0, 1.0]]",
        );
        assert!(ScenarioConfig::from_toml_str(&wrong_len).is_err());

        // A start inside a wall is rejected when the world is built.
        let cfg = ScenarioConfig::from_toml_str(&minimal("full").replace(
            "count = 2",
            "count = 2\nstarts = [[0.1, 0.1, 0.1], [6.0, 6.0, 1.0]]",
        ))
        .unwrap();
        assert!(matches!(build_world(cfg), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn auto_starts_are_free_distinct_and_deterministic() {
        let cfg = ScenarioConfig::from_toml_str(&minimal("full")).unwrap();
        let w1 = build_world(cfg.clone()).unwrap();
        let w2 = build_world(cfg).unwrap();
        assert_eq!(w1.starts, w2.starts);
        assert_eq!(w1.starts.len(), 2);
        assert_ne!(w1.starts[0], w1.starts[1]);
        for &p in &w1.starts {
            let c = w1.truth.voxel_at(p).unwrap();
            assert_eq!(w1.truth.state(c), CellState::Free);
        }
    }
}
