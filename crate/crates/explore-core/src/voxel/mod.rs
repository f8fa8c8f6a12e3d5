//! Dense 3D occupancy world model shared by the whole stack.
//!
//! A [`VoxelMap`] stores one of three states per voxel plus a frontier flag
//! (free voxel with at least one 6-connected unknown neighbor). Ground-truth
//! maps carry no `Unknown` cells; per-agent maps start fully unknown and
//! only ever gain knowledge, which keeps deltas small and merges monotone.

use thiserror::Error;

use crate::{AgentId, Point3, Real};

pub mod io;
pub mod raycast;
pub mod search;
pub mod sensor;

pub use sensor::{sense, SensorConfig, SensorMode};

/// Per-voxel occupancy state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[repr(u8)]
pub enum CellState {
    #[default]
    Unknown = 0,
    Free = 1,
    Occupied = 2,
}

impl CellState {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::Unknown),
            1 => Some(Self::Free),
            2 => Some(Self::Occupied),
            _ => None,
        }
    }
}

/// Integer voxel coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coord {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl Coord {
    pub const fn new(x: i32, y: i32, z: i32) -> Self {
        Self { x, y, z }
    }

    pub fn offset(self, dx: i32, dy: i32, dz: i32) -> Self {
        Self::new(self.x + dx, self.y + dy, self.z + dz)
    }

    pub fn manhattan(self, o: Self) -> i32 {
        (self.x - o.x).abs() + (self.y - o.y).abs() + (self.z - o.z).abs()
    }
}

/// Face-adjacent neighbor offsets.
pub const NEIGHBORS_6: [(i32, i32, i32); 6] =
    [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)];

#[derive(Debug, Error, PartialEq)]
pub enum VoxelError {
    #[error("position {0:?} outside map bounds")]
    OutOfBounds(Point3),
    #[error("voxel index {0} outside map ({1} cells)")]
    IndexOutOfBounds(usize, usize),
    #[error("agent position {0:?} is inside an occupied voxel")]
    InsideObstacle(Point3),
    #[error("map file malformed: {0}")]
    BadMapFile(String),
}

/// Batch of voxel state changes relative to some map, stamped with the
/// sensing agent and tick. Entries never carry `Unknown`: knowledge only
/// moves away from it.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MapDelta {
    pub source: AgentId,
    pub tick: u64,
    pub entries: Vec<(u32, CellState)>,
}

impl MapDelta {
    pub fn new(source: AgentId, tick: u64) -> Self {
        Self { source, tick, entries: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Dense voxel occupancy grid with frontier flags.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelMap {
    origin: Point3,
    resolution: Real,
    dims: [usize; 3],
    cells: Vec<CellState>,
    frontier: Vec<bool>,
    unknown_count: usize,
}

impl VoxelMap {
    /// All-unknown map. `resolution` must be positive and every dim >= 1.
    pub fn new(origin: Point3, resolution: Real, dims: [usize; 3]) -> Self {
        assert!(resolution > 0.0, "resolution must be positive");
        assert!(dims.iter().all(|&d| d >= 1), "dims must be >= 1");
        let n = dims[0] * dims[1] * dims[2];
        Self {
            origin,
            resolution,
            dims,
            cells: vec![CellState::Unknown; n],
            frontier: vec![false; n],
            unknown_count: n,
        }
    }

    /// Fresh all-unknown map with the same geometry.
    pub fn blank_like(&self) -> Self {
        Self::new(self.origin, self.resolution, self.dims)
    }

    pub fn origin(&self) -> Point3 {
        self.origin
    }

    pub fn resolution(&self) -> Real {
        self.resolution
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn unknown_count(&self) -> usize {
        self.unknown_count
    }

    pub fn in_bounds(&self, c: Coord) -> bool {
        c.x >= 0
            && c.y >= 0
            && c.z >= 0
            && (c.x as usize) < self.dims[0]
            && (c.y as usize) < self.dims[1]
            && (c.z as usize) < self.dims[2]
    }

    pub fn index(&self, c: Coord) -> usize {
        debug_assert!(self.in_bounds(c));
        c.x as usize + self.dims[0] * (c.y as usize + self.dims[1] * c.z as usize)
    }

    pub fn coord(&self, idx: usize) -> Coord {
        let x = idx % self.dims[0];
        let y = (idx / self.dims[0]) % self.dims[1];
        let z = idx / (self.dims[0] * self.dims[1]);
        Coord::new(x as i32, y as i32, z as i32)
    }

    /// Voxel containing a world position, if inside the bounding box.
    pub fn voxel_at(&self, p: Point3) -> Option<Coord> {
        let rel = (p - self.origin) / self.resolution;
        if rel.x < 0.0 || rel.y < 0.0 || rel.z < 0.0 {
            return None;
        }
        let c = Coord::new(rel.x.floor() as i32, rel.y.floor() as i32, rel.z.floor() as i32);
        // positions exactly on the far boundary belong to the last voxel
        let clamp = |v: i32, d: usize, rel: Real| {
            if v as usize == d && rel == d as Real {
                v - 1
            } else {
                v
            }
        };
        let c = Coord::new(
            clamp(c.x, self.dims[0], rel.x),
            clamp(c.y, self.dims[1], rel.y),
            clamp(c.z, self.dims[2], rel.z),
        );
        self.in_bounds(c).then_some(c)
    }

    pub fn voxel_center(&self, c: Coord) -> Point3 {
        self.origin
            + Point3::new(
                (c.x as Real + 0.5) * self.resolution,
                (c.y as Real + 0.5) * self.resolution,
                (c.z as Real + 0.5) * self.resolution,
            )
    }

    pub fn state(&self, c: Coord) -> CellState {
        self.cells[self.index(c)]
    }

    pub fn state_idx(&self, idx: usize) -> CellState {
        self.cells[idx]
    }

    pub fn is_frontier(&self, c: Coord) -> bool {
        self.frontier[self.index(c)]
    }

    pub fn is_frontier_idx(&self, idx: usize) -> bool {
        self.frontier[idx]
    }

    /// Iterator over the linear indices of all current frontier voxels.
    pub fn frontier_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.frontier.iter().enumerate().filter_map(|(i, &f)| f.then_some(i))
    }

    pub fn frontier_count(&self) -> usize {
        self.frontier.iter().filter(|&&f| f).count()
    }

    /// Raw state write without frontier upkeep. Intended for building
    /// ground-truth maps; returns whether the cell changed.
    pub fn set_state_raw(&mut self, c: Coord, s: CellState) -> bool {
        let idx = self.index(c);
        if self.cells[idx] == s {
            return false;
        }
        if self.cells[idx] == CellState::Unknown {
            self.unknown_count -= 1;
        } else if s == CellState::Unknown {
            self.unknown_count += 1;
        }
        self.cells[idx] = s;
        true
    }

    /// Frontier definition at a single voxel: free with an in-bounds unknown
    /// 6-neighbor.
    fn frontier_def(&self, c: Coord) -> bool {
        if self.state(c) != CellState::Free {
            return false;
        }
        NEIGHBORS_6.iter().any(|&(dx, dy, dz)| {
            let n = c.offset(dx, dy, dz);
            self.in_bounds(n) && self.state(n) == CellState::Unknown
        })
    }

    /// Recompute every frontier flag from scratch.
    pub fn recompute_frontiers(&mut self) {
        for idx in 0..self.cells.len() {
            self.frontier[idx] = self.frontier_def(self.coord(idx));
        }
    }

    /// Re-evaluate frontier flags around the voxels named in `changed`,
    /// which must already be applied to the map. Returns the indices that
    /// are frontiers after the update, restricted to the touched area.
    ///
    /// A flag depends only on the voxel's own state and its 6-neighborhood,
    /// so refreshing changed voxels plus their neighbors reproduces a full
    /// rescan exactly.
    pub fn update_frontiers(&mut self, changed: &MapDelta) -> Vec<usize> {
        let mut now_frontier = Vec::new();
        let mut touched: Vec<usize> = Vec::with_capacity(changed.entries.len() * 7);
        for &(idx, _) in &changed.entries {
            let c = self.coord(idx as usize);
            touched.push(idx as usize);
            for &(dx, dy, dz) in &NEIGHBORS_6 {
                let n = c.offset(dx, dy, dz);
                if self.in_bounds(n) {
                    touched.push(self.index(n));
                }
            }
        }
        touched.sort_unstable();
        touched.dedup();
        for idx in touched {
            let f = self.frontier_def(self.coord(idx));
            self.frontier[idx] = f;
            if f {
                now_frontier.push(idx);
            }
        }
        now_frontier
    }

    /// Apply a locally-sensed delta (states trusted, occupied wins is moot
    /// because sensing is sound) and maintain frontier flags. Returns the
    /// subset of entries that actually changed the map.
    pub fn apply_delta(&mut self, delta: &MapDelta) -> Result<MapDelta, VoxelError> {
        self.merge_delta(delta)
    }

    /// Merge a remote delta: unknown cells adopt the remote state, a
    /// free-vs-occupied conflict resolves to occupied, occupied never
    /// downgrades. Returns the entries that changed this map (same source
    /// and tick stamp), so callers can chain merges and dirty-grid marking.
    pub fn merge_delta(&mut self, delta: &MapDelta) -> Result<MapDelta, VoxelError> {
        // validate first so a failed merge leaves the map untouched
        for &(idx, s) in &delta.entries {
            if idx as usize >= self.cells.len() {
                return Err(VoxelError::IndexOutOfBounds(idx as usize, self.cells.len()));
            }
            debug_assert!(s != CellState::Unknown, "deltas never carry Unknown");
        }
        let mut applied = MapDelta::new(delta.source, delta.tick);
        for &(idx, s) in &delta.entries {
            let cur = self.cells[idx as usize];
            let next = match (cur, s) {
                (CellState::Occupied, _) => CellState::Occupied,
                (CellState::Free, CellState::Occupied) => CellState::Occupied,
                (cur, CellState::Unknown) => cur,
                (_, s) => s,
            };
            if next != cur {
                if cur == CellState::Unknown {
                    self.unknown_count -= 1;
                }
                self.cells[idx as usize] = next;
                applied.entries.push((idx, next));
            }
        }
        self.update_frontiers(&applied);
        Ok(applied)
    }

    /// Full-map scan returning every voxel where the stored flag disagrees
    /// with the frontier definition. Used by tests and debug assertions.
    pub fn frontier_flag_mismatches(&self) -> Vec<usize> {
        (0..self.cells.len())
            .filter(|&idx| self.frontier[idx] != self.frontier_def(self.coord(idx)))
            .collect()
    }

    /// Difference of this map against a blank map: every known cell as a
    /// delta entry. Used to seed full-state exchanges.
    pub fn full_delta(&self, source: AgentId, tick: u64) -> MapDelta {
        let mut d = MapDelta::new(source, tick);
        for (idx, &s) in self.cells.iter().enumerate() {
            if s != CellState::Unknown {
                d.entries.push((idx as u32, s));
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_map() -> VoxelMap {
        VoxelMap::new(Point3::zero(), 0.5, [4, 3, 2])
    }

    #[test]
    fn index_roundtrip_and_bounds() {
        let m = small_map();
        assert_eq!(m.len(), 24);
        for idx in 0..m.len() {
            assert_eq!(m.index(m.coord(idx)), idx);
        }
        assert!(!m.in_bounds(Coord::new(4, 0, 0)));
        assert!(!m.in_bounds(Coord::new(0, -1, 0)));
        assert_eq!(m.voxel_at(Point3::new(0.6, 0.2, 0.9)), Some(Coord::new(1, 0, 1)));
        assert_eq!(m.voxel_at(Point3::new(-0.1, 0.0, 0.0)), None);
        // far boundary belongs to the last voxel
        assert_eq!(m.voxel_at(Point3::new(2.0, 1.5, 1.0)), Some(Coord::new(3, 2, 1)));
    }

    #[test]
    fn voxel_center_is_cell_midpoint() {
        let m = small_map();
        assert_eq!(m.voxel_center(Coord::new(0, 0, 0)), Point3::new(0.25, 0.25, 0.25));
        assert_eq!(m.voxel_center(Coord::new(3, 2, 1)), Point3::new(1.75, 1.25, 0.75));
    }

    #[test]
    fn fully_free_map_has_no_frontiers() {
        let mut m = small_map();
        for idx in 0..m.len() {
            m.set_state_raw(m.coord(idx), CellState::Free);
        }
        m.recompute_frontiers();
        assert_eq!(m.frontier_count(), 0);
        assert_eq!(m.unknown_count(), 0);
    }

    #[test]
    fn lone_free_voxel_is_a_frontier() {
        let mut m = small_map();
        m.set_state_raw(Coord::new(1, 1, 0), CellState::Free);
        m.recompute_frontiers();
        assert!(m.is_frontier(Coord::new(1, 1, 0)));
        assert_eq!(m.frontier_count(), 1);
    }

    #[test]
    fn merge_is_idempotent() {
        let mut m = small_map();
        let mut d = MapDelta::new(0, 1);
        d.entries.push((0, CellState::Free));
        d.entries.push((5, CellState::Occupied));
        let first = m.merge_delta(&d).unwrap();
        assert_eq!(first.entries.len(), 2);
        let again = m.merge_delta(&d).unwrap();
        assert!(again.is_empty());
    }

    #[test]
    fn conflict_resolves_to_occupied_in_both_orders() {
        let mut free_first = small_map();
        let mut occ_first = small_map();
        let mut df = MapDelta::new(0, 1);
        df.entries.push((7, CellState::Free));
        let mut docc = MapDelta::new(1, 1);
        docc.entries.push((7, CellState::Occupied));

        free_first.merge_delta(&df).unwrap();
        free_first.merge_delta(&docc).unwrap();
        occ_first.merge_delta(&docc).unwrap();
        occ_first.merge_delta(&df).unwrap();
        assert_eq!(free_first.state_idx(7), CellState::Occupied);
        assert_eq!(occ_first.state_idx(7), CellState::Occupied);
    }

    #[test]
    fn merge_rejects_out_of_bounds() {
        let mut m = small_map();
        let mut d = MapDelta::new(0, 0);
        d.entries.push((999, CellState::Free));
        assert!(matches!(m.merge_delta(&d), Err(VoxelError::IndexOutOfBounds(999, 24))));
    }

    #[test]
    fn incremental_frontiers_match_full_scan() {
        let mut m = small_map();
        let mut d = MapDelta::new(0, 0);
        d.entries.push((m.index(Coord::new(1, 1, 0)) as u32, CellState::Free));
        d.entries.push((m.index(Coord::new(2, 1, 0)) as u32, CellState::Occupied));
        m.merge_delta(&d).unwrap();
        assert!(m.frontier_flag_mismatches().is_empty());
    }
}
