//! Grid search over the voxel map: A* on the 6-connected lattice, flood
//! fill, nearest-cell snapping, and line-of-sight path simplification.
//!
//! All step costs equal the map resolution, so path length is
//! `steps * resolution`. Ties in the open set break on linear index to keep
//! expansions deterministic.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::raycast::segment_passable;
use super::{CellState, Coord, VoxelMap, NEIGHBORS_6};
use crate::{Point3, Real};

/// Traversable for planning through explored space only.
pub fn free_only(s: CellState) -> bool {
    s == CellState::Free
}

/// Traversable for cost estimation: unknown counts as traversable.
pub fn non_occupied(s: CellState) -> bool {
    s != CellState::Occupied
}

/// A* result over voxel centers.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    pub coords: Vec<Coord>,
    /// steps * resolution
    pub length: Real,
}

struct OpenEntry {
    f: Real,
    g_steps: u32,
    idx: usize,
}

impl PartialEq for OpenEntry {
    fn eq(&self, other: &Self) -> bool {
        self.f == other.f && self.idx == other.idx
    }
}
impl Eq for OpenEntry {}
impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OpenEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on f, then on index for determinism
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

/// Shortest 6-connected path between voxels whose cells satisfy `allowed`.
/// Start and goal must satisfy it themselves.
pub fn astar_path(
    map: &VoxelMap,
    start: Coord,
    goal: Coord,
    allowed: impl Fn(Coord) -> bool,
) -> Option<GridPath> {
    if !map.in_bounds(start) || !map.in_bounds(goal) || !allowed(start) || !allowed(goal) {
        return None;
    }
    let res = map.resolution();
    if start == goal {
        return Some(GridPath { coords: vec![start], length: 0.0 });
    }

    let n = map.len();
    let mut g = vec![u32::MAX; n];
    let mut parent = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    let start_idx = map.index(start);
    let goal_idx = map.index(goal);
    g[start_idx] = 0;
    heap.push(OpenEntry {
        f: start.manhattan(goal) as Real * res,
        g_steps: 0,
        idx: start_idx,
    });

    while let Some(OpenEntry { g_steps, idx, .. }) = heap.pop() {
        if g_steps > g[idx] {
            continue;
        }
        if idx == goal_idx {
            let mut coords = Vec::with_capacity(g_steps as usize + 1);
            let mut cur = idx;
            while cur != usize::MAX {
                coords.push(map.coord(cur));
                cur = parent[cur];
            }
            coords.reverse();
            return Some(GridPath { coords, length: g_steps as Real * res });
        }
        let c = map.coord(idx);
        for &(dx, dy, dz) in &NEIGHBORS_6 {
            let nc = c.offset(dx, dy, dz);
            if !map.in_bounds(nc) || !allowed(nc) {
                continue;
            }
            let nidx = map.index(nc);
            let ng = g_steps + 1;
            if ng < g[nidx] {
                g[nidx] = ng;
                parent[nidx] = idx;
                heap.push(OpenEntry {
                    f: (ng + nc.manhattan(goal) as u32) as Real * res,
                    g_steps: ng,
                    idx: nidx,
                });
            }
        }
    }
    None
}

/// Multi-source flood fill over cells satisfying `allowed`; returns a
/// reached mask.
pub fn flood_fill(map: &VoxelMap, seeds: &[Coord], allowed: impl Fn(Coord) -> bool) -> Vec<bool> {
    let mut reached = vec![false; map.len()];
    let mut queue = std::collections::VecDeque::new();
    for &s in seeds {
        if map.in_bounds(s) && allowed(s) {
            let idx = map.index(s);
            if !reached[idx] {
                reached[idx] = true;
                queue.push_back(s);
            }
        }
    }
    while let Some(c) = queue.pop_front() {
        for &(dx, dy, dz) in &NEIGHBORS_6 {
            let nc = c.offset(dx, dy, dz);
            if map.in_bounds(nc) && allowed(nc) {
                let idx = map.index(nc);
                if !reached[idx] {
                    reached[idx] = true;
                    queue.push_back(nc);
                }
            }
        }
    }
    reached
}

/// Non-occupied voxels reachable from any free voxel, plus the occupied
/// shell adjacent to them: the space an ideal sensor can ever resolve.
pub fn sensable_mask(map: &VoxelMap, seeds: &[Coord]) -> Vec<bool> {
    let mut mask = flood_fill(map, seeds, |c| map.state(c) != CellState::Occupied);
    let shell: Vec<usize> = (0..map.len())
        .filter(|&idx| {
            !mask[idx]
                && map.state_idx(idx) == CellState::Occupied
                && NEIGHBORS_6.iter().any(|&(dx, dy, dz)| {
                    let n = map.coord(idx).offset(dx, dy, dz);
                    map.in_bounds(n) && mask[map.index(n)]
                })
        })
        .collect();
    for idx in shell {
        mask[idx] = true;
    }
    mask
}

/// Nearest voxel satisfying `allowed`, searched over expanding Chebyshev
/// shells; ties break on (distance to center, linear index) so the result
/// is deterministic.
pub fn nearest_allowed(
    map: &VoxelMap,
    from: Coord,
    max_radius: i32,
    allowed: impl Fn(Coord) -> bool,
) -> Option<Coord> {
    if map.in_bounds(from) && allowed(from) {
        return Some(from);
    }
    for r in 1..=max_radius {
        let mut best: Option<(i32, usize, Coord)> = None;
        for dz in -r..=r {
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                        continue;
                    }
                    let c = from.offset(dx, dy, dz);
                    if !map.in_bounds(c) || !allowed(c) {
                        continue;
                    }
                    let key = (from.manhattan(c), map.index(c), c);
                    if best.map_or(true, |b| (key.0, key.1) < (b.0, b.1)) {
                        best = Some(key);
                    }
                }
            }
        }
        if let Some((_, _, c)) = best {
            return Some(c);
        }
    }
    None
}

/// Greedy line-of-sight shortcutting of a voxel path into a waypoint
/// polyline through the given positions' voxel centers.
pub fn simplify_path(
    map: &VoxelMap,
    coords: &[Coord],
    passable: impl Fn(CellState) -> bool + Copy,
) -> Vec<Point3> {
    if coords.is_empty() {
        return Vec::new();
    }
    let centers: Vec<Point3> = coords.iter().map(|&c| map.voxel_center(c)).collect();
    let mut out = vec![centers[0]];
    let mut anchor = 0;
    while anchor + 1 < centers.len() {
        let mut next = anchor + 1;
        for probe in (anchor + 2..centers.len()).rev() {
            if segment_passable(map, centers[anchor], centers[probe], passable) {
                next = probe;
                break;
            }
        }
        out.push(centers[next]);
        anchor = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn room() -> VoxelMap {
        let mut m = VoxelMap::new(Point3::zero(), 0.5, [13, 5, 1]);
        for idx in 0..m.len() {
            m.set_state_raw(m.coord(idx), CellState::Free);
        }
        m
    }

    #[test]
    fn straight_corridor_length() {
        let m = room();
        // 12 steps of 0.5 m = 6 m
        let p = astar_path(&m, Coord::new(0, 2, 0), Coord::new(12, 2, 0), |c| {
            non_occupied(m.state(c))
        })
        .unwrap();
        assert_eq!(p.length, 6.0);
        assert_eq!(p.coords.len(), 13);
    }

    #[test]
    fn identity_path_is_zero() {
        let m = room();
        let p = astar_path(&m, Coord::new(3, 1, 0), Coord::new(3, 1, 0), |_| true).unwrap();
        assert_eq!(p.length, 0.0);
        assert_eq!(p.coords, vec![Coord::new(3, 1, 0)]);
    }

    #[test]
    fn wall_forces_detour_and_blocks_when_sealed() {
        let mut m = room();
        for y in 0..4 {
            m.set_state_raw(Coord::new(6, y, 0), CellState::Occupied);
        }
        let allowed = |c: Coord| m.state(c) != CellState::Occupied;
        let p = astar_path(&m, Coord::new(0, 0, 0), Coord::new(12, 0, 0), allowed).unwrap();
        assert!(p.length > 6.0);
        for y in 0..5 {
            m.set_state_raw(Coord::new(6, y, 0), CellState::Occupied);
        }
        let blocked = astar_path(&m, Coord::new(0, 0, 0), Coord::new(12, 0, 0), |c| {
            m.state(c) != CellState::Occupied
        });
        assert!(blocked.is_none());
    }

    #[test]
    fn flood_fill_respects_walls() {
        let mut m = room();
        for y in 0..5 {
            m.set_state_raw(Coord::new(6, y, 0), CellState::Occupied);
        }
        let reach = flood_fill(&m, &[Coord::new(0, 0, 0)], |c| m.state(c) != CellState::Occupied);
        assert!(reach[m.index(Coord::new(5, 4, 0))]);
        assert!(!reach[m.index(Coord::new(7, 0, 0))]);
    }

    #[test]
    fn nearest_allowed_snaps_out_of_walls() {
        let mut m = room();
        m.set_state_raw(Coord::new(4, 2, 0), CellState::Occupied);
        let c = nearest_allowed(&m, Coord::new(4, 2, 0), 5, |c| {
            m.state(c) != CellState::Occupied
        })
        .unwrap();
        assert_eq!(c.manhattan(Coord::new(4, 2, 0)), 1);
    }

    #[test]
    fn simplify_straightens_staircase() {
        let m = room();
        let p = astar_path(&m, Coord::new(0, 0, 0), Coord::new(4, 4, 0), |c| {
            m.state(c) != CellState::Occupied
        })
        .unwrap();
        let simple = simplify_path(&m, &p.coords, non_occupied);
        assert_eq!(simple.len(), 2);
        assert_eq!(simple[0], m.voxel_center(Coord::new(0, 0, 0)));
        assert_eq!(simple[1], m.voxel_center(Coord::new(4, 4, 0)));
    }
}
