//! Segment-voxel traversal (amortized DDA walk).
//!
//! The walk enumerates exactly the voxels whose interior the segment crosses
//! with positive length, in order from `a` to `b`. Boundary grazes count for
//! nothing: when the segment passes exactly through a voxel edge or corner,
//! all tied axes advance together and the zero-measure side voxels are
//! skipped. That convention makes the walk reproducible by an exhaustive
//! slab-intersection check over all voxels.

use super::{CellState, Coord, VoxelMap};
use crate::{Point3, Real};

/// Positive-measure threshold on the segment parameter t in [0, 1].
const T_EPS: Real = 1e-12;

/// Voxels crossed by the segment `a -> b` with positive interior length, in
/// traversal order. `a` must be inside the map; the walk stops when it
/// leaves the bounds.
pub fn traverse_segment(map: &VoxelMap, a: Point3, b: Point3) -> Vec<Coord> {
    let mut out = Vec::new();
    let Some(mut cur) = map.voxel_at(a) else {
        return out;
    };
    let d = b - a;
    if d.norm() == 0.0 {
        out.push(cur);
        return out;
    }

    let res = map.resolution();
    let o = map.origin();
    let mut t_max = [Real::INFINITY; 3];
    let mut t_delta = [Real::INFINITY; 3];
    let mut step = [0i32; 3];
    for axis in 0..3 {
        let (di, ai, oi, ci) = match axis {
            0 => (d.x, a.x, o.x, cur.x),
            1 => (d.y, a.y, o.y, cur.y),
            _ => (d.z, a.z, o.z, cur.z),
        };
        if di > 0.0 {
            step[axis] = 1;
            let bound = oi + (ci + 1) as Real * res;
            t_max[axis] = (bound - ai) / di;
            t_delta[axis] = res / di;
        } else if di < 0.0 {
            step[axis] = -1;
            let bound = oi + ci as Real * res;
            t_max[axis] = (bound - ai) / di;
            t_delta[axis] = res / -di;
        }
    }

    let mut t_enter: Real = 0.0;
    loop {
        let t_exit = t_max[0].min(t_max[1]).min(t_max[2]);
        if t_exit.min(1.0) - t_enter > T_EPS {
            out.push(cur);
        }
        if t_exit >= 1.0 - T_EPS {
            return out;
        }
        // advance every axis tied at the exit time (diagonal corner crossing)
        for axis in 0..3 {
            if t_max[axis] <= t_exit + T_EPS {
                match axis {
                    0 => cur.x += step[0],
                    1 => cur.y += step[1],
                    _ => cur.z += step[2],
                }
                t_max[axis] += t_delta[axis];
            }
        }
        if !map.in_bounds(cur) {
            return out;
        }
        t_enter = t_exit;
    }
}

/// Line-of-sight from `a` to the voxel containing `b` against ground truth:
/// blocked if any traversed voxel strictly before the target is occupied.
/// The target voxel itself may be occupied (it is the first hit).
pub fn visible(world: &VoxelMap, a: Point3, b: Point3) -> bool {
    let Some(target) = world.voxel_at(b) else {
        return false;
    };
    for v in traverse_segment(world, a, b) {
        if v == target {
            return true;
        }
        if world.state(v) == CellState::Occupied {
            return false;
        }
    }
    false
}

/// True if every voxel crossed by the segment satisfies `passable`.
pub fn segment_passable(
    map: &VoxelMap,
    a: Point3,
    b: Point3,
    passable: impl Fn(CellState) -> bool,
) -> bool {
    if map.voxel_at(a).is_none() || map.voxel_at(b).is_none() {
        return false;
    }
    let voxels = traverse_segment(map, a, b);
    !voxels.is_empty() && voxels.iter().all(|&v| passable(map.state(v)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map() -> VoxelMap {
        let mut m = VoxelMap::new(Point3::zero(), 1.0, [8, 8, 1]);
        for idx in 0..m.len() {
            m.set_state_raw(m.coord(idx), CellState::Free);
        }
        m
    }

    #[test]
    fn axis_aligned_walk() {
        let m = map();
        let vs = traverse_segment(&m, Point3::new(0.5, 0.5, 0.5), Point3::new(3.5, 0.5, 0.5));
        let xs: Vec<i32> = vs.iter().map(|c| c.x).collect();
        assert_eq!(xs, vec![0, 1, 2, 3]);
    }

    #[test]
    fn exact_corner_crossing_skips_side_voxels() {
        let m = map();
        // center-to-center diagonal passes exactly through voxel corners
        let vs = traverse_segment(&m, Point3::new(0.5, 0.5, 0.5), Point3::new(3.5, 3.5, 0.5));
        assert_eq!(
            vs,
            vec![
                Coord::new(0, 0, 0),
                Coord::new(1, 1, 0),
                Coord::new(2, 2, 0),
                Coord::new(3, 3, 0)
            ]
        );
    }

    #[test]
    fn zero_length_segment_is_own_voxel() {
        let m = map();
        let p = Point3::new(2.5, 2.5, 0.5);
        assert_eq!(traverse_segment(&m, p, p), vec![Coord::new(2, 2, 0)]);
    }

    #[test]
    fn walk_stops_at_map_edge() {
        let m = map();
        let vs = traverse_segment(&m, Point3::new(6.5, 0.5, 0.5), Point3::new(20.0, 0.5, 0.5));
        let xs: Vec<i32> = vs.iter().map(|c| c.x).collect();
        assert_eq!(xs, vec![6, 7]);
    }

    #[test]
    fn wall_blocks_visibility() {
        let mut m = map();
        m.set_state_raw(Coord::new(2, 0, 0), CellState::Occupied);
        let eye = Point3::new(0.5, 0.5, 0.5);
        assert!(visible(&m, eye, Point3::new(1.5, 0.5, 0.5)));
        // the wall itself is visible as a first hit
        assert!(visible(&m, eye, Point3::new(2.5, 0.5, 0.5)));
        // nothing behind it is
        assert!(!visible(&m, eye, Point3::new(3.5, 0.5, 0.5)));
    }
}
