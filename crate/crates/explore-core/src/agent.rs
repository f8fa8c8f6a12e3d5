//! Per-agent kinematic state.

use crate::{AgentId, MotionLimits, Point3, Real};

/// Pose and bookkeeping for one agent. Positions live in world coordinates;
/// motion is polyline following at the platform's cruise speed.
#[derive(Debug, Clone)]
pub struct AgentState {
    pub id: AgentId,
    pub position: Point3,
    /// Velocity over the last step; zero while holding.
    pub velocity: Point3,
    pub limits: MotionLimits,
    /// Waypoints still ahead of the agent, nearest first.
    pub route: Vec<Point3>,
    pub distance_traveled: Real,
    /// Ticks spent without an active route.
    pub idle_ticks: u64,
}

impl AgentState {
    pub fn new(id: AgentId, position: Point3, limits: MotionLimits) -> Self {
        Self {
            id,
            position,
            velocity: Point3::zero(),
            limits,
            route: Vec::new(),
            distance_traveled: 0.0,
            idle_ticks: 0,
        }
    }

    pub fn set_route(&mut self, waypoints: Vec<Point3>) {
        self.route = waypoints;
        // Drop a leading waypoint that is already underfoot.
        while self
            .route
            .first()
            .is_some_and(|w| w.distance(self.position) < 1e-9)
        {
            self.route.remove(0);
        }
    }

    pub fn has_route(&self) -> bool {
        !self.route.is_empty()
    }

    /// Advance along the route by at most `v_max * dt`, consuming waypoints
    /// as they are reached. Returns the distance actually moved.
    pub fn advance(&mut self, dt: Real) -> Real {
        let mut budget = self.limits.v_max * dt;
        let start = self.position;
        let mut moved = 0.0;
        while budget > 1e-12 {
            let Some(&target) = self.route.first() else { break };
            let to_target = target - self.position;
            let dist = to_target.norm();
            if dist <= budget {
                self.position = target;
                budget -= dist;
                moved += dist;
                self.route.remove(0);
            } else {
                self.position += to_target * (budget / dist);
                moved += budget;
                budget = 0.0;
            }
        }
        self.distance_traveled += moved;
        self.velocity = if moved > 0.0 {
            (self.position - start) * (1.0 / dt)
        } else {
            Point3::zero()
        };
        if self.has_route() || moved > 0.0 {
            self.idle_ticks = 0;
        } else {
            self.idle_ticks += 1;
        }
        moved
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn limits() -> MotionLimits {
        MotionLimits { v_max: 2.0, omega_max: 2.0, a_max: 2.0 }
    }

    #[test]
    fn advances_through_corners_in_one_step() {
        let mut a = AgentState::new(0, Point3::zero(), limits());
        a.set_route(vec![Point3::new(0.1, 0.0, 0.0), Point3::new(0.1, 0.1, 0.0)]);
        let moved = a.advance(0.1); // budget 0.2 covers both legs exactly
        assert!((moved - 0.2).abs() < 1e-12);
        assert_eq!(a.position, Point3::new(0.1, 0.1, 0.0));
        assert!(!a.has_route());
    }

    #[test]
    fn partial_leg_keeps_waypoint() {
        let mut a = AgentState::new(0, Point3::zero(), limits());
        a.set_route(vec![Point3::new(1.0, 0.0, 0.0)]);
        a.advance(0.1);
        assert!((a.position.x - 0.2).abs() < 1e-12);
        assert_eq!(a.route.len(), 1);
        assert!((a.velocity.x - 2.0).abs() < 1e-9);
    }

    #[test]
    fn idle_counter_tracks_empty_route() {
        let mut a = AgentState::new(0, Point3::zero(), limits());
        a.advance(0.1);
        a.advance(0.1);
        assert_eq!(a.idle_ticks, 2);
        a.set_route(vec![Point3::new(0.5, 0.0, 0.0)]);
        a.advance(0.1);
        assert_eq!(a.idle_ticks, 0);
    }

    #[test]
    fn distance_accumulates() {
        let mut a = AgentState::new(0, Point3::zero(), limits());
        a.set_route(vec![Point3::new(5.0, 0.0, 0.0)]);
        for _ in 0..25 {
            a.advance(0.1);
        }
        assert!((a.distance_traveled - 5.0).abs() < 1e-9);
        assert!(!a.has_route());
    }
}
