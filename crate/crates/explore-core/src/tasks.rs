//! Work-unit ledger: exploration tasks derived from unknown regions.
//!
//! Every unknown region of the connectivity graph backs one task unit. As
//! sensing shrinks a region the unit keeps its identity; when a region
//! splits, the largest surviving piece keeps the id and the rest become new
//! units; when a region vanishes its unit completes. Units whose whole
//! unknown component is sealed off from free space can never be sensed and
//! are retired as invalid.
//!
//! Units travel between agents as fixed-layout binary records so that
//! ledgers negotiated over a lossy link stay byte-comparable.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::graph::{ConnectivityGraph, EdgeKind, RegionKey, RegionState};
use crate::math::convex_hull;
use crate::voxel::{CellState, VoxelMap, NEIGHBORS_6};
use crate::{AgentId, Point2, Point3, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum TaskStatus {
    Pending = 0,
    Assigned = 1,
    Completed = 2,
    Invalid = 3,
}

impl TaskStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, TaskStatus::Completed | TaskStatus::Invalid)
    }

    fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(TaskStatus::Pending),
            1 => Some(TaskStatus::Assigned),
            2 => Some(TaskStatus::Completed),
            3 => Some(TaskStatus::Invalid),
            _ => None,
        }
    }
}

/// Spatial footprint of a unit. A region that fills its entire grid is
/// described by the grid id alone; anything smaller carries the convex hull
/// of its member voxel centers in the horizontal plane.
#[derive(Debug, Clone, PartialEq)]
pub enum UnitDescriptor {
    WholeGrid(u32),
    Hull { footprint: Vec<Point2> },
}

/// Wire form of one task unit. Field order and widths are fixed; all
/// multi-byte values are little-endian.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRecord {
    pub id: u64,
    pub anchor: Point3,
    pub descriptor: UnitDescriptor,
    /// World-space vertical extent of the unit.
    pub z_range: (Real, Real),
    pub voxel_count: u32,
    pub owner: Option<AgentId>,
    pub status: TaskStatus,
}

#[derive(Debug, Error, PartialEq)]
pub enum RecordError {
    #[error("record truncated")]
    Truncated,
    #[error("unknown descriptor tag {0}")]
    BadTag(u8),
    #[error("unknown status byte {0}")]
    BadStatus(u8),
}

const OWNER_NONE: u16 = u16::MAX;
const TAG_WHOLE_GRID: u8 = 0;
const TAG_HULL: u8 = 1;

impl UnitRecord {
    /// Layout: id u64 | anchor 3xf64 | tag u8 | body | z_lo f64 | z_hi f64 |
    /// voxel_count u32 | owner u16 | status u8. Hull body: count u16 then
    /// count x (f64, f64); whole-grid body: grid u32.
    pub fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.id.to_le_bytes());
        for v in [self.anchor.x, self.anchor.y, self.anchor.z] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        match &self.descriptor {
            UnitDescriptor::WholeGrid(g) => {
                out.push(TAG_WHOLE_GRID);
                out.extend_from_slice(&g.to_le_bytes());
            }
            UnitDescriptor::Hull { footprint } => {
                out.push(TAG_HULL);
                out.extend_from_slice(&(footprint.len() as u16).to_le_bytes());
                for p in footprint {
                    out.extend_from_slice(&p.x.to_le_bytes());
                    out.extend_from_slice(&p.y.to_le_bytes());
                }
            }
        }
        out.extend_from_slice(&self.z_range.0.to_le_bytes());
        out.extend_from_slice(&self.z_range.1.to_le_bytes());
        out.extend_from_slice(&self.voxel_count.to_le_bytes());
        out.extend_from_slice(&self.owner.unwrap_or(OWNER_NONE).to_le_bytes());
        out.push(self.status as u8);
    }

    /// Decodes one record, returning it with the number of bytes consumed.
    pub fn decode(buf: &[u8]) -> Result<(Self, usize), RecordError> {
        let mut cur = Cursor { buf, pos: 0 };
        let id = u64::from_le_bytes(cur.take::<8>()?);
        let anchor = Point3::new(cur.f64()?, cur.f64()?, cur.f64()?);
        let tag = cur.u8()?;
        let descriptor = match tag {
            TAG_WHOLE_GRID => UnitDescriptor::WholeGrid(u32::from_le_bytes(cur.take::<4>()?)),
            TAG_HULL => {
                let n = u16::from_le_bytes(cur.take::<2>()?) as usize;
                let mut footprint = Vec::with_capacity(n);
                for _ in 0..n {
                    footprint.push(Point2::new(cur.f64()?, cur.f64()?));
                }
                UnitDescriptor::Hull { footprint }
            }
            other => return Err(RecordError::BadTag(other)),
        };
        let z_range = (cur.f64()?, cur.f64()?);
        let voxel_count = u32::from_le_bytes(cur.take::<4>()?);
        let owner_raw = u16::from_le_bytes(cur.take::<2>()?);
        let status_raw = cur.u8()?;
        let status = TaskStatus::from_u8(status_raw).ok_or(RecordError::BadStatus(status_raw))?;
        Ok((
            Self {
                id,
                anchor,
                descriptor,
                z_range,
                voxel_count,
                owner: (owner_raw != OWNER_NONE).then_some(owner_raw),
                status,
            },
            cur.pos,
        ))
    }

    /// Structural sanity of a record received from a peer, checked against
    /// the local map geometry.
    pub fn validate(&self, map: &VoxelMap, grid_count: usize) -> bool {
        if self.voxel_count == 0 && !self.status.is_terminal() {
            return false;
        }
        if map.voxel_at(self.anchor).is_none() {
            return false;
        }
        if self.z_range.0 > self.z_range.1 {
            return false;
        }
        match &self.descriptor {
            UnitDescriptor::WholeGrid(g) => (*g as usize) < grid_count,
            UnitDescriptor::Hull { footprint } => !footprint.is_empty(),
        }
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], RecordError> {
        let end = self.pos + N;
        let slice = self.buf.get(self.pos..end).ok_or(RecordError::Truncated)?;
        self.pos = end;
        Ok(slice.try_into().unwrap())
    }

    fn f64(&mut self) -> Result<Real, RecordError> {
        Ok(Real::from_le_bytes(self.take::<8>()?))
    }

    fn u8(&mut self) -> Result<u8, RecordError> {
        Ok(self.take::<1>()?[0])
    }
}

/// One unit plus the local bookkeeping that never goes on the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskUnit {
    pub record: UnitRecord,
    /// Backing unknown region; meaningless once the unit is terminal.
    pub region: RegionKey,
    /// Member voxel linear indices, ascending; empty once terminal.
    pub voxels: Vec<usize>,
    /// Ledger revision at which the record last changed.
    pub last_changed: u64,
}

/// What a refresh did, for reallocation triggering and metrics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LedgerDiff {
    pub created: Vec<u64>,
    pub completed: Vec<u64>,
    pub invalidated: Vec<u64>,
}

impl LedgerDiff {
    pub fn is_empty(&self) -> bool {
        self.created.is_empty() && self.completed.is_empty() && self.invalidated.is_empty()
    }
}

const NO_UNIT: u64 = u64::MAX;

#[derive(Debug, Clone)]
pub struct TaskLedger {
    units: BTreeMap<u64, TaskUnit>,
    next_id: u64,
    revision: u64,
    /// Per voxel: id of the non-terminal unit covering it, or `NO_UNIT`.
    unit_of_voxel: Vec<u64>,
}

impl TaskLedger {
    pub fn new(map_len: usize) -> Self {
        Self {
            units: BTreeMap::new(),
            next_id: 0,
            revision: 0,
            unit_of_voxel: vec![NO_UNIT; map_len],
        }
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn units(&self) -> impl Iterator<Item = &TaskUnit> {
        self.units.values()
    }

    pub fn unit(&self, id: u64) -> Option<&TaskUnit> {
        self.units.get(&id)
    }

    pub fn live_units(&self) -> impl Iterator<Item = &TaskUnit> {
        self.units.values().filter(|u| !u.record.status.is_terminal())
    }

    /// Re-derive units from the graph's current unknown regions and retire
    /// the unreachable ones. Bumps the revision once if anything changed.
    pub fn refresh(&mut self, map: &VoxelMap, graph: &ConnectivityGraph) -> LedgerDiff {
        let rev = self.revision + 1;
        let mut diff = LedgerDiff::default();
        let mut changed = false;

        // Collect current unknown regions with the unit each one grew from.
        // Knowledge only shrinks the unknown set, so a region's members all
        // carried the same previous unit (or none).
        struct Candidate {
            key: RegionKey,
            prev: u64,
            overlap: usize,
            min_member: usize,
        }
        let mut candidates = Vec::new();
        for g in 0..graph.partition().len() as u32 {
            for r in graph.regions_of(g, RegionState::Unknown) {
                let mut overlaps: HashMap<u64, usize> = HashMap::new();
                for &v in &r.voxels {
                    let u = self.unit_of_voxel[v];
                    if u != NO_UNIT {
                        *overlaps.entry(u).or_default() += 1;
                    }
                }
                let prev = overlaps
                    .iter()
                    .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                    .map(|(&id, &n)| (id, n));
                candidates.push(Candidate {
                    key: r.key,
                    prev: prev.map_or(NO_UNIT, |(id, _)| id),
                    overlap: prev.map_or(0, |(_, n)| n),
                    min_member: r.voxels[0],
                });
            }
        }

        // For each previous unit choose the inheriting region: max overlap,
        // ties to the region with the smallest member index.
        let mut winner: HashMap<u64, usize> = HashMap::new();
        for (i, c) in candidates.iter().enumerate() {
            if c.prev == NO_UNIT {
                continue;
            }
            let better = match winner.get(&c.prev) {
                None => true,
                Some(&j) => {
                    let w = &candidates[j];
                    (c.overlap, std::cmp::Reverse(c.min_member))
                        > (w.overlap, std::cmp::Reverse(w.min_member))
                }
            };
            if better {
                winner.insert(c.prev, i);
            }
        }

        let mut inherited: HashMap<u64, bool> = self
            .units
            .iter()
            .filter(|(_, u)| !u.record.status.is_terminal())
            .map(|(&id, _)| (id, false))
            .collect();

        for (i, c) in candidates.iter().enumerate() {
            let region = graph
                .region(c.key)
                .expect("candidate region comes from the graph");
            let keeps_id = c.prev != NO_UNIT && winner[&c.prev] == i;
            let id = if keeps_id {
                inherited.insert(c.prev, true);
                c.prev
            } else {
                let id = self.next_id;
                self.next_id += 1;
                diff.created.push(id);
                id
            };
            let record = UnitRecord {
                id,
                anchor: region.anchor,
                descriptor: descriptor_for(map, graph, region),
                z_range: z_range_of(map, &region.voxels),
                voxel_count: region.voxels.len() as u32,
                owner: if keeps_id { self.units[&id].record.owner } else { None },
                status: if keeps_id { self.units[&id].record.status } else { TaskStatus::Pending },
            };
            match self.units.get_mut(&id) {
                Some(unit) => {
                    if unit.record != record || unit.region != c.key {
                        unit.record = record;
                        unit.region = c.key;
                        unit.last_changed = rev;
                        changed = true;
                    }
                    unit.voxels = region.voxels.clone();
                }
                None => {
                    self.units.insert(
                        id,
                        TaskUnit {
                            record,
                            region: c.key,
                            voxels: region.voxels.clone(),
                            last_changed: rev,
                        },
                    );
                    changed = true;
                }
            }
        }

        // Units whose region vanished are done: all their voxels got sensed.
        for (id, was_inherited) in inherited {
            if !was_inherited {
                let unit = self.units.get_mut(&id).unwrap();
                unit.record.status = TaskStatus::Completed;
                unit.record.owner = None;
                unit.record.voxel_count = 0;
                unit.voxels.clear();
                unit.last_changed = rev;
                diff.completed.push(id);
                changed = true;
            }
        }

        changed |= self.retire_unreachable(map, graph, rev, &mut diff);

        self.rebuild_voxel_index();
        if changed {
            self.revision = rev;
        }
        diff.created.sort_unstable();
        diff.completed.sort_unstable();
        diff.invalidated.sort_unstable();
        diff
    }

    /// Marks units invalid when their whole unknown component (joined by
    /// unknown-unknown edges) has no voxel bordering free space: such
    /// regions are sealed off and can never be sensed.
    fn retire_unreachable(
        &mut self,
        map: &VoxelMap,
        graph: &ConnectivityGraph,
        rev: u64,
        diff: &mut LedgerDiff,
    ) -> bool {
        let keys: Vec<RegionKey> = graph
            .vertices()
            .filter(|k| k.state == RegionState::Unknown)
            .collect();
        if keys.is_empty() {
            return false;
        }
        let index: HashMap<RegionKey, usize> =
            keys.iter().enumerate().map(|(i, &k)| (k, i)).collect();
        let mut dsu = Dsu::new(keys.len());
        for e in graph.edges() {
            if e.kind == EdgeKind::Unknown {
                dsu.union(index[&e.a], index[&e.b]);
            }
        }
        let mut component_touches_free = vec![false; keys.len()];
        for (i, &k) in keys.iter().enumerate() {
            let region = graph.region(k).unwrap();
            let touches = region.voxels.iter().any(|&v| {
                let c = map.coord(v);
                NEIGHBORS_6.iter().any(|&(dx, dy, dz)| {
                    let n = c.offset(dx, dy, dz);
                    map.in_bounds(n) && map.state(n) == CellState::Free
                })
            });
            if touches {
                let root = dsu.find(i);
                component_touches_free[root] = true;
            }
        }
        let mut changed = false;
        for unit in self.units.values_mut() {
            if unit.record.status.is_terminal() {
                continue;
            }
            let Some(&i) = index.get(&unit.region) else { continue };
            if !component_touches_free[dsu.find(i)] {
                unit.record.status = TaskStatus::Invalid;
                unit.record.owner = None;
                unit.last_changed = rev;
                diff.invalidated.push(unit.record.id);
                changed = true;
            }
        }
        changed
    }

    fn rebuild_voxel_index(&mut self) {
        self.unit_of_voxel.fill(NO_UNIT);
        for (id, unit) in &self.units {
            // invalid units keep their labels so their sealed regions keep
            // inheriting into the same terminal unit instead of spawning
            // duplicates on every refresh
            if unit.record.status != TaskStatus::Completed {
                for &v in &unit.voxels {
                    self.unit_of_voxel[v] = *id;
                }
            }
        }
    }

    /// Assign or clear ownership; bumps the revision when anything changes.
    pub fn set_owner(&mut self, id: u64, owner: Option<AgentId>) -> bool {
        let Some(unit) = self.units.get_mut(&id) else {
            return false;
        };
        if unit.record.status.is_terminal() || unit.record.owner == owner {
            return false;
        }
        self.revision += 1;
        unit.record.owner = owner;
        unit.record.status = if owner.is_some() {
            TaskStatus::Assigned
        } else {
            TaskStatus::Pending
        };
        unit.last_changed = self.revision;
        true
    }

    /// Records that changed after the given revision, ascending by id.
    pub fn records_since(&self, rev: u64) -> Vec<UnitRecord> {
        self.units
            .values()
            .filter(|u| u.last_changed > rev)
            .map(|u| u.record.clone())
            .collect()
    }

    pub fn all_records(&self) -> Vec<UnitRecord> {
        self.units.values().map(|u| u.record.clone()).collect()
    }

    /// Adopt a peer's record wholesale (used by dispatch participants when
    /// syncing ledgers). Newer information wins; local voxel bookkeeping is
    /// left to the next refresh.
    pub fn adopt_record(&mut self, record: UnitRecord) {
        self.revision += 1;
        self.next_id = self.next_id.max(record.id + 1);
        let rev = self.revision;
        match self.units.get_mut(&record.id) {
            Some(unit) => {
                unit.record = record;
                unit.last_changed = rev;
            }
            None => {
                let region = RegionKey {
                    grid: 0,
                    state: RegionState::Unknown,
                    ordinal: u16::MAX,
                };
                self.units.insert(
                    record.id,
                    TaskUnit { record, region, voxels: Vec::new(), last_changed: rev },
                );
            }
        }
    }
}

fn descriptor_for(
    map: &VoxelMap,
    graph: &ConnectivityGraph,
    region: &crate::graph::Region,
) -> UnitDescriptor {
    let (lo, hi) = graph.partition().voxel_bounds(region.key.grid);
    let grid_volume =
        ((hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2])) as usize;
    if region.voxels.len() == grid_volume {
        return UnitDescriptor::WholeGrid(region.key.grid);
    }
    let centers: Vec<Point2> = region
        .voxels
        .iter()
        .map(|&v| map.voxel_center(map.coord(v)).xy())
        .collect();
    UnitDescriptor::Hull { footprint: convex_hull(&centers) }
}

fn z_range_of(map: &VoxelMap, voxels: &[usize]) -> (Real, Real) {
    let half = map.resolution() / 2.0;
    let mut lo = Real::INFINITY;
    let mut hi = Real::NEG_INFINITY;
    for &v in voxels {
        let z = map.voxel_center(map.coord(v)).z;
        lo = lo.min(z - half);
        hi = hi.max(z + half);
    }
    (lo, hi)
}

struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let root = self.find(self.parent[x]);
            self.parent[x] = root;
        }
        self.parent[x]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxel::search::flood_fill;
    use crate::voxel::Coord;

    fn setup(dims: [usize; 3]) -> (VoxelMap, ConnectivityGraph) {
        let map = VoxelMap::new(Point3::zero(), 0.5, dims);
        let graph = ConnectivityGraph::new(&map, 1.0);
        (map, graph)
    }

    #[test]
    fn whole_grid_units_then_hull_after_partial_sensing() {
        let (mut map, mut graph) = setup([4, 2, 2]);
        // one sensed voxel so the unknown space is not sealed
        map.set_state_raw(Coord::new(0, 0, 0), CellState::Free);
        graph.update(&map, &[map.index(Coord::new(0, 0, 0))]);
        let mut ledger = TaskLedger::new(map.len());
        let diff = ledger.refresh(&map, &graph);
        assert_eq!(diff.created.len(), 2); // two 1 m grids
        let unit0 = ledger.live_units().find(|u| u.region.grid == 0).unwrap();
        assert!(matches!(unit0.record.descriptor, UnitDescriptor::Hull { .. }));
        assert_eq!(unit0.record.voxel_count, 7);
        let unit1 = ledger.live_units().find(|u| u.region.grid == 1).unwrap();
        assert!(matches!(unit1.record.descriptor, UnitDescriptor::WholeGrid(1)));

        // sensing another voxel shrinks the unit but keeps its identity
        let id0 = unit0.record.id;
        map.set_state_raw(Coord::new(1, 0, 0), CellState::Free);
        graph.update(&map, &[map.index(Coord::new(1, 0, 0))]);
        let diff = ledger.refresh(&map, &graph);
        assert!(diff.created.is_empty() && diff.completed.is_empty());
        let unit0 = ledger.live_units().find(|u| u.region.grid == 0).unwrap();
        assert_eq!(unit0.record.id, id0);
        assert_eq!(unit0.record.voxel_count, 6);
    }

    #[test]
    fn split_keeps_id_on_largest_piece() {
        // one grid of 5x1x1 voxels; sensing the middle splits the unit
        let mut map = VoxelMap::new(Point3::zero(), 0.5, [5, 1, 1]);
        map.set_state_raw(Coord::new(4, 0, 0), CellState::Free);
        let mut graph = ConnectivityGraph::new(&map, 2.5);
        assert_eq!(graph.partition().len(), 1);
        let mut ledger = TaskLedger::new(map.len());
        ledger.refresh(&map, &graph);
        let original: Vec<u64> = ledger.live_units().map(|u| u.record.id).collect();
        assert_eq!(original, vec![0]);

        map.set_state_raw(Coord::new(1, 0, 0), CellState::Free);
        graph.update(&map, &[map.index(Coord::new(1, 0, 0))]);
        let diff = ledger.refresh(&map, &graph);
        assert_eq!(diff.created.len(), 1);
        // pieces: {0} and {2,3}; the bigger piece keeps id 0
        let keeper = ledger.unit(0).unwrap();
        assert_eq!(keeper.voxels, vec![2, 3]);
        assert_eq!(keeper.record.status, TaskStatus::Pending);
        let fresh = ledger.unit(diff.created[0]).unwrap();
        assert_eq!(fresh.voxels, vec![0]);
    }

    #[test]
    fn vanished_region_completes_unit_and_keeps_it_terminal() {
        let (mut map, mut graph) = setup([2, 2, 2]);
        map.set_state_raw(Coord::new(0, 0, 0), CellState::Free);
        graph.update(&map, &[0]);
        let mut ledger = TaskLedger::new(map.len());
        ledger.refresh(&map, &graph);
        assert_eq!(ledger.unit(0).unwrap().record.status, TaskStatus::Pending);
        let mut changed = Vec::new();
        for idx in 0..map.len() {
            if map.state_idx(idx) != CellState::Free {
                map.set_state_raw(map.coord(idx), CellState::Free);
                changed.push(idx);
            }
        }
        graph.update(&map, &changed);
        let diff = ledger.refresh(&map, &graph);
        assert_eq!(diff.completed, vec![0]);
        assert_eq!(ledger.unit(0).unwrap().record.status, TaskStatus::Completed);
        // and a further refresh leaves it untouched
        let diff = ledger.refresh(&map, &graph);
        assert!(diff.is_empty());
    }

    #[test]
    fn sealed_pocket_matches_flood_fill_oracle() {
        // corridor [0..3] free, wall at x=3, pocket x=4 unknown and sealed
        let mut map = VoxelMap::new(Point3::zero(), 0.5, [5, 1, 1]);
        for x in 0..3 {
            map.set_state_raw(Coord::new(x, 0, 0), CellState::Free);
        }
        map.set_state_raw(Coord::new(3, 0, 0), CellState::Occupied);
        let mut graph = ConnectivityGraph::new(&map, 1.0);
        graph.update(&map, &[]);
        let mut ledger = TaskLedger::new(map.len());
        let diff = ledger.refresh(&map, &graph);
        assert_eq!(diff.invalidated.len(), 1);

        // oracle: flood from free cells over non-occupied space
        let seeds: Vec<Coord> = (0..map.len())
            .filter(|&i| map.state_idx(i) == CellState::Free)
            .map(|i| map.coord(i))
            .collect();
        let reach = flood_fill(&map, &seeds, |c| map.state(c) != CellState::Occupied);
        for unit in ledger.units() {
            let reachable = unit.voxels.iter().any(|&v| reach[v]);
            match unit.record.status {
                TaskStatus::Invalid => assert!(!reachable || unit.voxels.is_empty()),
                _ => {}
            }
        }
        let invalid_unit = ledger
            .units()
            .find(|u| u.record.status == TaskStatus::Invalid)
            .unwrap();
        assert!(invalid_unit.voxels.iter().all(|&v| !reach[v]));
    }

    #[test]
    fn owner_assignment_bumps_revision_and_filters_records() {
        let (mut map, mut graph) = setup([2, 2, 2]);
        map.set_state_raw(Coord::new(0, 0, 0), CellState::Free);
        graph.update(&map, &[0]);
        let mut ledger = TaskLedger::new(map.len());
        ledger.refresh(&map, &graph);
        let rev = ledger.revision();
        assert!(ledger.set_owner(0, Some(3)));
        assert_eq!(ledger.unit(0).unwrap().record.status, TaskStatus::Assigned);
        let changed = ledger.records_since(rev);
        assert_eq!(changed.len(), 1);
        assert_eq!(changed[0].owner, Some(3));
        assert!(ledger.records_since(ledger.revision()).is_empty());
        // no-op assignment leaves the revision alone
        assert!(!ledger.set_owner(0, Some(3)));
    }

    #[test]
    fn record_roundtrip_both_descriptor_kinds() {
        let records = vec![
            UnitRecord {
                id: 42,
                anchor: Point3::new(1.25, -0.75, 2.0),
                descriptor: UnitDescriptor::WholeGrid(7),
                z_range: (0.0, 3.0),
                voxel_count: 1000,
                owner: None,
                status: TaskStatus::Pending,
            },
            UnitRecord {
                id: 43,
                anchor: Point3::new(0.5, 0.5, 0.5),
                descriptor: UnitDescriptor::Hull {
                    footprint: vec![
                        Point2::new(0.0, 0.0),
                        Point2::new(2.0, 0.0),
                        Point2::new(1.0, 1.5),
                    ],
                },
                z_range: (0.5, 1.0),
                voxel_count: 12,
                owner: Some(2),
                status: TaskStatus::Assigned,
            },
        ];
        let mut buf = Vec::new();
        for r in &records {
            r.encode(&mut buf);
        }
        let (first, used) = UnitRecord::decode(&buf).unwrap();
        let (second, used2) = UnitRecord::decode(&buf[used..]).unwrap();
        assert_eq!(first, records[0]);
        assert_eq!(second, records[1]);
        assert_eq!(used + used2, buf.len());

        assert_eq!(UnitRecord::decode(&buf[..10]), Err(RecordError::Truncated));
        let mut bad = buf.clone();
        bad[32] = 9; // descriptor tag
        assert_eq!(UnitRecord::decode(&bad), Err(RecordError::BadTag(9)));
    }

    #[test]
    fn adopt_record_overwrites_and_tracks_next_id() {
        let (map, _) = setup([2, 2, 2]);
        let mut ledger = TaskLedger::new(map.len());
        let record = UnitRecord {
            id: 9,
            anchor: Point3::new(0.5, 0.5, 0.5),
            descriptor: UnitDescriptor::WholeGrid(0),
            z_range: (0.0, 1.0),
            voxel_count: 8,
            owner: Some(1),
            status: TaskStatus::Assigned,
        };
        ledger.adopt_record(record.clone());
        assert_eq!(ledger.unit(9).unwrap().record, record);
        assert!(record.validate(&map, 1));
        let outside = UnitRecord { anchor: Point3::new(50.0, 0.0, 0.0), ..record };
        assert!(!outside.validate(&map, 1));
    }
}
