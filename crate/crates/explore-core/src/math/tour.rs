//! Velocity-consistency traversal-time model for polyline paths.
//!
//! Straight-line travel at max speed costs `l / v_m`. Each segment adds a
//! deceleration penalty that grows as the entry velocity projected on the
//! segment direction falls short of `v_m`, plus a reversal penalty when the
//! projection points backwards. This makes tour costs direction-dependent,
//! so visit orders that keep the agent moving consistently win.

use thiserror::Error;

use super::{Scalar, Vec3};

/// Kinematic limits of an agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionLimits<S> {
    /// max speed v_m (m/s)
    pub v_max: S,
    /// max yaw rate (rad/s)
    pub omega_max: S,
    /// max acceleration a_m (m/s^2)
    pub a_max: S,
}

impl<S: Scalar> MotionLimits<S> {
    pub fn new(v_max: S, omega_max: S, a_max: S) -> Self {
        Self { v_max, omega_max, a_max }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TourError {
    #[error("duplicate consecutive waypoints at index {0}: segment direction undefined")]
    DegenerateSegment(usize),
    #[error("path needs at least 2 waypoints, got {0}")]
    TooShort(usize),
}

/// Sum of segment lengths of a polyline.
pub fn path_length<S: Scalar>(path: &[Vec3<S>]) -> S {
    path.windows(2).fold(S::zero(), |acc, w| acc + w[0].distance(w[1]))
}

/// Traversal time of `path` with the velocity-consistency penalty.
///
/// `entry` is the agent's velocity entering the first segment; `None` seeds
/// the first segment with its own direction at `v_max`, which zeroes its
/// penalty. Later segments always take their incoming segment direction at
/// `v_max`. The Heaviside reversal term uses `H(0) = 0`, so a perpendicular
/// entry pays only the quadratic deceleration term.
pub fn tour_time<S: Scalar>(
    path: &[Vec3<S>],
    entry: Option<Vec3<S>>,
    limits: &MotionLimits<S>,
) -> Result<S, TourError> {
    if path.len() < 2 {
        return Err(TourError::TooShort(path.len()));
    }
    let v_m = limits.v_max;
    let a_m = limits.a_max;
    let two = S::two();

    let mut time = path_length(path) / v_m;
    let mut prev_dir: Option<Vec3<S>> = None;
    for k in 0..path.len() - 1 {
        let seg = path[k + 1] - path[k];
        let len = seg.norm();
        if len == S::zero() {
            return Err(TourError::DegenerateSegment(k));
        }
        let dir = seg / len;
        let v_hat = match (k, entry, prev_dir) {
            (0, Some(v), _) => v.dot(dir),
            (0, None, _) => v_m,
            (_, _, Some(d)) => d.dot(dir) * v_m,
            _ => unreachable!(),
        };
        time += (v_m - v_hat.abs()).powi(2) / (two * v_m * a_m);
        if -v_hat > S::zero() {
            time += two * v_hat.abs() / a_m;
        }
        prev_dir = Some(dir);
    }
    Ok(time)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn limits() -> MotionLimits<f64> {
        MotionLimits::new(2.0, 2.0, 2.0)
    }

    fn p(x: f64, y: f64) -> Vec3<f64> {
        Vec3::new(x, y, 0.0)
    }

    #[test]
    fn aligned_straight_path_is_pure_travel_time() {
        // length 10 at v_m = 2 with aligned entry -> exactly 5 s
        let path = [p(0.0, 0.0), p(4.0, 0.0), p(10.0, 0.0)];
        let t = tour_time(&path, Some(Vec3::new(2.0, 0.0, 0.0)), &limits()).unwrap();
        assert!((t - 5.0).abs() < 1e-9);
    }

    #[test]
    fn reversed_entry_pays_reversal_penalty() {
        // single segment, entry exactly reversed: penalty = 2|v|/a = 2 s
        let path = [p(0.0, 0.0), p(6.0, 0.0)];
        let t = tour_time(&path, Some(Vec3::new(-2.0, 0.0, 0.0)), &limits()).unwrap();
        assert!((t - (3.0 + 2.0)).abs() < 1e-9);
    }

    #[test]
    fn perpendicular_entry_pays_deceleration_only() {
        // v_hat = 0: penalty = v_m / (2 a_m) = 0.5 s, Heaviside stays off at 0
        let path = [p(0.0, 0.0), p(6.0, 0.0)];
        let t = tour_time(&path, Some(Vec3::new(0.0, 2.0, 0.0)), &limits()).unwrap();
        assert!((t - 3.5).abs() < 1e-9);
    }

    #[test]
    fn no_entry_velocity_zeroes_first_segment_penalty() {
        let path = [p(0.0, 0.0), p(6.0, 0.0)];
        let t = tour_time(&path, None, &limits()).unwrap();
        assert!((t - 3.0).abs() < 1e-9);
    }

    #[test]
    fn right_angle_turn_costs_extra() {
        let path = [p(0.0, 0.0), p(4.0, 0.0), p(4.0, 4.0)];
        let t = tour_time(&path, None, &limits()).unwrap();
        // second segment sees v_hat = 0 -> +0.5 s over 8 m / 2 m/s
        assert!((t - 4.5).abs() < 1e-9);
    }

    #[test]
    fn lower_bound_and_errors() {
        let path = [p(0.0, 0.0), p(1.0, 0.0), p(1.0, 0.0)];
        assert_eq!(tour_time(&path, None, &limits()), Err(TourError::DegenerateSegment(1)));
        assert_eq!(tour_time(&[p(0.0, 0.0)], None, &limits()), Err(TourError::TooShort(1)));
        // T >= l / v_m over a sweep of entry angles
        let path = [p(0.0, 0.0), p(3.0, 1.0)];
        for i in 0..64 {
            let a = i as f64 / 64.0 * std::f64::consts::TAU;
            let entry = Vec3::new(2.0 * a.cos(), 2.0 * a.sin(), 0.0);
            let t = tour_time(&path, Some(entry), &limits()).unwrap();
            assert!(t + 1e-12 >= path_length(&path) / 2.0);
        }
    }

    #[test]
    fn penalty_nonincreasing_in_projected_entry_speed() {
        let path = [p(0.0, 0.0), p(5.0, 0.0)];
        let mut prev = f64::INFINITY;
        for i in 0..=40 {
            let v = -2.0 + i as f64 * 0.1; // v_hat sweeps [-v_m, v_m]
            let t = tour_time(&path, Some(Vec3::new(v, 0.0, 0.0)), &limits()).unwrap();
            assert!(t <= prev + 1e-12, "not monotone at v_hat={v}");
            prev = t;
        }
    }
}
