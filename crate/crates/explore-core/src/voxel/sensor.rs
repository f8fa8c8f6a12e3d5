//! Ideal range-limited sensor.
//!
//! Two ray models share the same traversal kernel:
//!
//! - [`SensorMode::VoxelVisibility`] casts one ray per candidate voxel
//!   center inside the range sphere and marks exactly the voxels whose
//!   center is unoccluded. This is the default: its sensed set equals
//!   per-voxel line-of-sight by definition, and coverage can always reach
//!   every reachable voxel.
//! - [`SensorMode::AngularSweep`] casts a fixed spherical fan of rays and
//!   marks everything each ray crosses until its first occupied hit.
//!
//! Both are sound: every reported state matches ground truth.

use super::raycast::traverse_segment;
use super::{CellState, Coord, MapDelta, VoxelError, VoxelMap};
use crate::{AgentId, Point3, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SensorMode {
    /// One ray per in-range voxel center; marks centers with clear sight.
    VoxelVisibility,
    /// Fixed fan over the full sphere at the given angular resolution.
    AngularSweep { az_step_deg: Real, el_step_deg: Real },
}

impl Default for SensorMode {
    fn default() -> Self {
        SensorMode::VoxelVisibility
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorConfig {
    /// perception range in meters
    pub range: Real,
    pub mode: SensorMode,
}

impl SensorConfig {
    pub fn new(range: Real) -> Self {
        Self { range, mode: SensorMode::VoxelVisibility }
    }

    pub fn sweep(range: Real) -> Self {
        Self { range, mode: SensorMode::AngularSweep { az_step_deg: 2.0, el_step_deg: 5.0 } }
    }
}

/// Sense the ground-truth `world` from `pos` and return the delta against
/// `known`, the sensing agent's current map. Voxels the agent already knows
/// are skipped; sensing is sound and knowledge monotone, so re-observing
/// them can never produce a change.
pub fn sense(
    world: &VoxelMap,
    known: &VoxelMap,
    pos: Point3,
    cfg: &SensorConfig,
    source: AgentId,
    tick: u64,
) -> Result<MapDelta, VoxelError> {
    let here = world.voxel_at(pos).ok_or(VoxelError::OutOfBounds(pos))?;
    if world.state(here) == CellState::Occupied {
        return Err(VoxelError::InsideObstacle(pos));
    }

    let mut delta = MapDelta::new(source, tick);
    match cfg.mode {
        SensorMode::VoxelVisibility => {
            sense_voxel_visibility(world, known, pos, cfg.range, &mut delta)
        }
        SensorMode::AngularSweep { az_step_deg, el_step_deg } => {
            sense_sweep(world, known, pos, cfg.range, az_step_deg, el_step_deg, &mut delta)
        }
    }
    Ok(delta)
}

fn sense_voxel_visibility(
    world: &VoxelMap,
    known: &VoxelMap,
    pos: Point3,
    range: Real,
    delta: &mut MapDelta,
) {
    let lo = world.voxel_at(clamp_to_map(world, pos - Point3::splat(range))).unwrap();
    let hi = world.voxel_at(clamp_to_map(world, pos + Point3::splat(range))).unwrap();
    let range2 = range * range;

    for z in lo.z..=hi.z {
        for y in lo.y..=hi.y {
            for x in lo.x..=hi.x {
                let c = Coord::new(x, y, z);
                if known.state(c) != CellState::Unknown {
                    continue;
                }
                let center = world.voxel_center(c);
                let d = center - pos;
                if d.dot(d) > range2 {
                    continue;
                }
                if center_visible(world, pos, c, center) {
                    delta.entries.push((world.index(c) as u32, world.state(c)));
                }
            }
        }
    }
}

/// Clear line of sight from `pos` to the center of voxel `target`.
fn center_visible(world: &VoxelMap, pos: Point3, target: Coord, center: Point3) -> bool {
    for v in traverse_segment(world, pos, center) {
        if v == target {
            return true;
        }
        if world.state(v) == CellState::Occupied {
            return false;
        }
    }
    false
}

fn sense_sweep(
    world: &VoxelMap,
    known: &VoxelMap,
    pos: Point3,
    range: Real,
    az_step_deg: Real,
    el_step_deg: Real,
    delta: &mut MapDelta,
) {
    let mut seen = vec![false; world.len()];
    for dir in sphere_directions(az_step_deg, el_step_deg) {
        let end = pos + dir * range;
        for v in traverse_segment(world, pos, end) {
            let idx = world.index(v);
            let state = world.state(v);
            if !seen[idx] {
                seen[idx] = true;
                if known.state_idx(idx) == CellState::Unknown {
                    delta.entries.push((idx as u32, state));
                }
            }
            if state == CellState::Occupied {
                break;
            }
        }
    }
    delta.entries.sort_unstable_by_key(|&(idx, _)| idx);
}

/// Unit directions covering the full sphere: elevation bands at the given
/// step with a full azimuth sweep each, single rays at the poles.
pub fn sphere_directions(az_step_deg: Real, el_step_deg: Real) -> Vec<Point3> {
    let mut dirs = Vec::new();
    let mut el = -90.0;
    while el <= 90.0 + 1e-9 {
        let elr = (el as Real).to_radians();
        if el <= -90.0 + 1e-9 || el >= 90.0 - 1e-9 {
            dirs.push(Point3::new(0.0, 0.0, elr.sin().signum()));
        } else {
            let mut az = 0.0;
            while az < 360.0 - 1e-9 {
                let azr = (az as Real).to_radians();
                dirs.push(Point3::new(
                    elr.cos() * azr.cos(),
                    elr.cos() * azr.sin(),
                    elr.sin(),
                ));
                az += az_step_deg;
            }
        }
        el += el_step_deg;
    }
    dirs
}

fn clamp_to_map(map: &VoxelMap, p: Point3) -> Point3 {
    let o = map.origin();
    let res = map.resolution();
    let d = map.dims();
    let half = res * 0.49;
    Point3::new(
        p.x.max(o.x + half).min(o.x + d[0] as Real * res - half),
        p.y.max(o.y + half).min(o.y + d[1] as Real * res - half),
        p.z.max(o.z + half).min(o.z + d[2] as Real * res - half),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free_room(dims: [usize; 3]) -> VoxelMap {
        let mut m = VoxelMap::new(Point3::zero(), 0.5, dims);
        for idx in 0..m.len() {
            m.set_state_raw(m.coord(idx), CellState::Free);
        }
        m
    }

    #[test]
    fn open_room_fully_sensed_in_one_pass() {
        let world = free_room([5, 5, 1]);
        let known = world.blank_like();
        let pos = world.voxel_center(Coord::new(2, 2, 0));
        let d = sense(&world, &known, pos, &SensorConfig::new(10.0), 0, 0).unwrap();
        assert_eq!(d.entries.len(), 25);
        assert!(d.entries.iter().all(|&(_, s)| s == CellState::Free));
    }

    #[test]
    fn wall_occludes_what_is_behind_it() {
        let mut world = free_room([5, 1, 1]);
        world.set_state_raw(Coord::new(2, 0, 0), CellState::Occupied);
        let known = world.blank_like();
        let pos = world.voxel_center(Coord::new(1, 0, 0));
        let d = sense(&world, &known, pos, &SensorConfig::new(10.0), 0, 0).unwrap();
        let states: Vec<(Coord, CellState)> =
            d.entries.iter().map(|&(i, s)| (world.coord(i as usize), s)).collect();
        assert!(states.contains(&(Coord::new(2, 0, 0), CellState::Occupied)));
        assert!(states.contains(&(Coord::new(0, 0, 0), CellState::Free)));
        assert!(!states.iter().any(|&(c, _)| c.x > 2), "behind the wall stays unknown");
    }

    #[test]
    fn sense_errors() {
        let mut world = free_room([3, 3, 1]);
        world.set_state_raw(Coord::new(1, 1, 0), CellState::Occupied);
        let known = world.blank_like();
        let cfg = SensorConfig::new(5.0);
        let out = sense(&world, &known, Point3::new(-1.0, 0.0, 0.0), &cfg, 0, 0);
        assert!(matches!(out, Err(VoxelError::OutOfBounds(_))));
        let inside = world.voxel_center(Coord::new(1, 1, 0));
        assert!(matches!(sense(&world, &known, inside, &cfg, 0, 0), Err(VoxelError::InsideObstacle(_))));
    }

    #[test]
    fn known_voxels_are_skipped() {
        let world = free_room([4, 4, 1]);
        let mut known = world.blank_like();
        let pos = world.voxel_center(Coord::new(1, 1, 0));
        let cfg = SensorConfig::new(10.0);
        let d1 = sense(&world, &known, pos, &cfg, 0, 0).unwrap();
        known.apply_delta(&d1).unwrap();
        let d2 = sense(&world, &known, pos, &cfg, 0, 1).unwrap();
        assert!(d2.is_empty());
    }

    #[test]
    fn sweep_mode_is_sound_and_covers_small_room() {
        let mut world = free_room([5, 5, 1]);
        world.set_state_raw(Coord::new(3, 3, 0), CellState::Occupied);
        let known = world.blank_like();
        let pos = world.voxel_center(Coord::new(2, 2, 0));
        let d = sense(&world, &known, pos, &SensorConfig::sweep(10.0), 0, 0).unwrap();
        for &(idx, s) in &d.entries {
            assert_eq!(s, world.state_idx(idx as usize));
        }
        // the small room is swept wall to wall
        assert!(d.entries.len() >= 20, "swept {} voxels", d.entries.len());
    }

    #[test]
    fn sphere_directions_are_unit_and_cover_poles() {
        let dirs = sphere_directions(2.0, 5.0);
        assert!(dirs.iter().all(|d| (d.norm() - 1.0).abs() < 1e-9));
        assert!(dirs.iter().any(|d| d.z > 0.999));
        assert!(dirs.iter().any(|d| d.z < -0.999));
        assert_eq!(dirs.len(), 180 * 35 + 2);
    }
}
