//! Run outcome accounting: the per-tick CSV stream and the end-of-run
//! summary that lands in `summary.json`.

use serde::Serialize;

use explore_core::Real;

use crate::scenario::Mode;

/// Everything a finished run reports. Serialized as the run summary.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetrics {
    pub scenario: String,
    pub mode: Mode,
    pub seed: u64,
    /// Simulated ticks until termination (or the cap).
    pub ticks: u64,
    pub tick_seconds: Real,
    /// Wall-clock of the explored world: ticks times the tick length.
    pub exploration_time_s: Real,
    /// False when the run hit the tick cap before finishing.
    pub complete: bool,
    /// Fraction of reachably sensable voxels known at the end.
    pub coverage_final: Real,
    pub per_agent_path_m: Vec<Real>,
    pub total_path_m: Real,
    /// Total path over agent count times exploration time.
    pub mean_velocity_mps: Real,
    /// Allocation rounds begun across all hosts.
    pub allocation_rounds: u64,
    pub rounds_finalized: u64,
    pub rounds_cancelled: u64,
    pub messages_sent: u64,
    pub messages_delivered: u64,
    pub bytes_sent: u64,
    /// Time spent inside the allocation solver, reported separately from
    /// simulated time.
    pub solver_wall_ms: f64,
    /// Effective coordination switches, for checking that ablation modes
    /// differ only where intended.
    pub config_line: String,
}

impl RunMetrics {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metrics serialize");
        s.push('\n');
        s
    }
}

/// Builds `metrics.csv` rows: one per tick with coverage and each agent's
/// position and speed.
#[derive(Debug)]
pub struct CsvLog {
    buf: String,
    agents: usize,
}

impl CsvLog {
    pub fn new(agents: usize) -> Self {
        let mut buf = String::from("tick,coverage");
        for i in 0..agents {
            buf.push_str(&format!(",a{i}_x,a{i}_y,a{i}_z,a{i}_speed"));
        }
        buf.push('\n');
        Self { buf, agents }
    }

    /// `rows` holds (x, y, z, speed) per agent, in agent-id order.
    pub fn row(&mut self, tick: u64, coverage: Real, rows: &[(Real, Real, Real, Real)]) {
        assert_eq!(rows.len(), self.agents);
        self.buf.push_str(&format!("{tick},{coverage:.6}"));
        for (x, y, z, s) in rows {
            self.buf.push_str(&format!(",{x:.4},{y:.4},{z:.4},{s:.4}"));
        }
        self.buf.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.buf
    }
}

/// Sample mean and (n-1) standard deviation; std is zero for fewer than
/// two samples.
pub fn mean_std(values: &[Real]) -> (Real, Real) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as Real;
    let mean = values.iter().sum::<Real>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<Real>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_and_rows_track_agent_count() {
        let mut log = CsvLog::new(2);
        log.row(1, 0.25, &[(0.5, 1.0, 0.5, 2.0), (3.0, 4.0, 0.5, 0.0)]);
        let text = log.as_str();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "tick,coverage,a0_x,a0_y,a0_z,a0_speed,a1_x,a1_y,a1_z,a1_speed"
        );
        assert_eq!(
            lines.next().unwrap(),
            "1,0.250000,0.5000,1.0000,0.5000,2.0000,3.0000,4.0000,0.5000,0.0000"
        );
        assert!(lines.next().is_none());
    }

    #[test]
    fn mean_std_matches_hand_computation() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert!((m - 5.0).abs() < 1e-12);
        // Sample variance of that classic set is 32/7.
        assert!((s - (32.0_f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_std(&[3.5]), (3.5, 0.0));
        assert_eq!(mean_std(&[]), (0.0, 0.0));
    }
}
