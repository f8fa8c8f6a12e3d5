//! Standalone allocation instances as plain text, so a single problem can
//! be solved and inspected outside a full run.
//!
//! Format, one key per line, `;` starts a comment:
//!
//! ```text
//! capacity 12.5
//! m-inf 1e9          ; optional, default 1e9
//! seed 3             ; optional solver seed, default 0
//! agent 0            ; repeated, one id per line
//! task 101 4.0       ; repeated: id then demand
//! matrix             ; last key; then (1+agents+tasks) rows of that many
//! 0 3.5 ...          ; travel costs, row-major, node 0 the depot
//! ```

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use explore_core::alloc::{solve, Allocation, AllocationProblem, CostMatrix, SolverConfig};
use explore_core::Real;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("reading instance: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

fn err(line: usize, msg: impl Into<String>) -> InstanceError {
    InstanceError::Parse { line, msg: msg.into() }
}

/// Parses an instance; returns the problem and the solver seed.
pub fn parse_instance(text: &str) -> Result<(AllocationProblem, u64), InstanceError> {
    let mut capacity: Option<Real> = None;
    let mut m_inf: Real = 1e9;
    let mut seed: u64 = 0;
    let mut agents: Vec<u16> = Vec::new();
    let mut tasks: Vec<u64> = Vec::new();
    let mut demands: Vec<Real> = Vec::new();
    let mut matrix_rows: Vec<Vec<Real>> = Vec::new();
    let mut in_matrix = false;
    let mut matrix_line = 0usize;

    for (idx, raw) in text.lines().enumerate() {
        let no = idx + 1;
        let line = match raw.find(';') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if in_matrix {
            let row: Result<Vec<Real>, _> = line.split_whitespace().map(str::parse).collect();
            let row = row.map_err(|e| err(no, format!("bad matrix value: {e}")))?;
            matrix_rows.push(row);
            continue;
        }
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap();
        let mut num = |what: &str| -> Result<Real, InstanceError> {
            parts
                .next()
                .ok_or_else(|| err(no, format!("{key} needs a {what}")))?
                .parse::<Real>()
                .map_err(|e| err(no, format!("bad {what} for {key}: {e}")))
        };
        match key {
            "capacity" => capacity = Some(num("value")?),
            "m-inf" => m_inf = num("value")?,
            "seed" => seed = num("value")? as u64,
            "agent" => {
                let id = num("id")? as u16;
                if agents.contains(&id) {
                    return Err(err(no, format!("duplicate agent id {id}")));
                }
                agents.push(id);
            }
            "task" => {
                let id = num("id")? as u64;
                let demand = num("demand")?;
                if tasks.contains(&id) {
                    return Err(err(no, format!("duplicate task id {id}")));
                }
                if demand < 0.0 {
                    return Err(err(no, "demand must be non-negative"));
                }
                tasks.push(id);
                demands.push(demand);
            }
            "matrix" => {
                in_matrix = true;
                matrix_line = no;
            }
            other => return Err(err(no, format!("unknown key `{other}`"))),
        }
        if !in_matrix {
            if let Some(extra) = parts.next() {
                return Err(err(no, format!("trailing value `{extra}`")));
            }
        }
    }

    let capacity = capacity.ok_or_else(|| err(0, "missing `capacity`"))?;
    if agents.is_empty() {
        return Err(err(0, "no agents"));
    }
    if !in_matrix {
        return Err(err(0, "missing `matrix`"));
    }
    let n = 1 + agents.len() + tasks.len();
    if matrix_rows.len() != n {
        return Err(err(
            matrix_line,
            format!("matrix needs {n} rows, found {}", matrix_rows.len()),
        ));
    }
    let mut cost = CostMatrix::filled(n, 0.0);
    for (i, row) in matrix_rows.iter().enumerate() {
        if row.len() != n {
            return Err(err(matrix_line, format!("matrix row {i} needs {n} values")));
        }
        for (j, &v) in row.iter().enumerate() {
            cost.set(i, j, v);
        }
    }
    Ok((AllocationProblem { agents, tasks, demands, capacity, cost, m_inf }, seed))
}

pub fn load_instance(path: &Path) -> Result<(AllocationProblem, u64), InstanceError> {
    parse_instance(&std::fs::read_to_string(path)?)
}

pub fn render_instance(p: &AllocationProblem, seed: u64) -> String {
    let mut s = String::from("; allocation instance\n");
    let _ = writeln!(s, "capacity {}", p.capacity);
    let _ = writeln!(s, "m-inf {}", p.m_inf);
    let _ = writeln!(s, "seed {seed}");
    for a in &p.agents {
        let _ = writeln!(s, "agent {a}");
    }
    for (t, d) in p.tasks.iter().zip(&p.demands) {
        let _ = writeln!(s, "task {t} {d}");
    }
    s.push_str("matrix\n");
    let n = 1 + p.agents.len() + p.tasks.len();
    for i in 0..n {
        let row: Vec<String> = (0..n).map(|j| format!("{}", p.cost.at(i, j))).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

/// Solves and formats the result the way `solve-instance` prints it.
pub fn solve_report(p: &AllocationProblem, seed: u64) -> (Allocation, String) {
    let alloc = solve(p, &SolverConfig { seed, ..SolverConfig::default() });
    let mut s = format!(
        "instance: {} agents, {} tasks, capacity {:.4}\n",
        p.agents.len(),
        p.tasks.len(),
        p.capacity
    );
    for (agent, seq) in &alloc.sequences {
        let load: Real = seq
            .iter()
            .map(|u| {
                let i = p.tasks.iter().position(|t| t == u).unwrap();
                p.demands[i]
            })
            .sum();
        let ids: Vec<String> = seq.iter().map(u64::to_string).collect();
        let _ = writeln!(
            s,
            "agent {agent}: [{}]  load {load:.4}{}",
            ids.join(", "),
            if load > p.capacity + 1e-9 { "  (over capacity)" } else { "" }
        );
    }
    let _ = writeln!(s, "cost {:.6}", alloc.cost);
    if alloc.flags.is_empty() {
        s.push_str("flags: none\n");
    } else {
        let _ = writeln!(s, "flags: {:?}", alloc.flags);
    }
    (alloc, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
; two agents, three tasks
capacity 7.0
seed 5
agent 0
agent 3
task 10 4.0
task 11 3.0
task 12 2.0
matrix
0 0 0 1 2 3
0 0 9 1 5 6
0 9 0 6 5 1
1 1 6 0 2 9
2 5 5 2 0 9
3 6 1 9 9 0
";

    #[test]
    fn parses_the_sample() {
        let (p, seed) = parse_instance(SAMPLE).unwrap();
        assert_eq!(seed, 5);
        assert_eq!(p.agents, vec![0, 3]);
        assert_eq!(p.tasks, vec![10, 11, 12]);
        assert_eq!(p.demands, vec![4.0, 3.0, 2.0]);
        assert_eq!(p.capacity, 7.0);
        assert_eq!(p.m_inf, 1e9);
        assert_eq!(p.cost.n, 6);
        assert_eq!(p.cost.at(1, 2), 9.0);
        assert_eq!(p.cost.at(5, 2), 1.0);
    }

    #[test]
    fn roundtrips_through_render() {
        let (p, seed) = parse_instance(SAMPLE).unwrap();
        let (p2, seed2) = parse_instance(&render_instance(&p, seed)).unwrap();
        assert_eq!(p, p2);
        assert_eq!(seed, seed2);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_matrix() {
        assert!(matches!(
            parse_instance("capacity 5\nagent 0\nweird 3\nmatrix\n0 0\n0 0\n"),
            Err(InstanceError::Parse { line: 3, .. })
        ));
        // matrix must be (1 + agents + tasks) squared
        let bad = "capacity 5\nagent 0\ntask 1 2.0\nmatrix\n0 0 0\n0 0 0\n";
        assert!(parse_instance(bad).is_err());
        let bad_row = "capacity 5\nagent 0\nmatrix\n0 0\n0 0 0\n";
        assert!(parse_instance(bad_row).is_err());
        assert!(parse_instance("agent 0\nmatrix\n0 0\n0 0\n").is_err()); // no capacity
    }

    #[test]
    fn solve_report_is_feasible_and_prints_sequences() {
        let (p, seed) = parse_instance(SAMPLE).unwrap();
        let (alloc, text) = solve_report(&p, seed);
        let placed: usize = alloc.sequences.values().map(Vec::len).sum();
        assert_eq!(placed, 3);
        assert!(alloc.flags.is_empty());
        assert!(text.contains("instance: 2 agents, 3 tasks"));
        assert!(text.contains("cost "));
        assert!(text.contains("flags: none"));
    }
}
