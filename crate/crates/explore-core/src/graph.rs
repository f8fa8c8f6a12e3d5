//! Coarse connectivity graph over the voxel map.
//!
//! The map is partitioned into cubic grids of a configurable side. Within
//! each grid, free voxels and unknown voxels are clustered separately into
//! face-connected regions; every region contributes one vertex, anchored at
//! the mean of its member voxel centers. Edges come in three kinds:
//!
//! * **free** and **unknown** edges join same-state regions of face-adjacent
//!   grids when a lattice path confined to matching-state voxels of the two
//!   grids connects them;
//! * **portal** edges join a free region and an unknown region of the *same*
//!   grid when a path over that grid's non-occupied voxels connects them.
//!
//! Edge length is the restricted lattice path length plus the two legs from
//! each anchor to its nearest member voxel center, so it never undercuts the
//! straight-line distance between the anchors.
//!
//! Updates are incremental per grid: re-clustering a grid rebuilds exactly
//! the edge buckets incident to it, and the result is identical to a full
//! rebuild on the same map.

use std::collections::{BTreeSet, HashMap, VecDeque};

use crate::voxel::search::astar_path;
use crate::voxel::{CellState, Coord, VoxelMap, NEIGHBORS_6};
use crate::{Point3, Real};

pub const DEFAULT_GRID_SIDE_M: Real = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegionState {
    Free,
    Unknown,
}

impl RegionState {
    pub fn cell(self) -> CellState {
        match self {
            RegionState::Free => CellState::Free,
            RegionState::Unknown => CellState::Unknown,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RegionState::Free => "free",
            RegionState::Unknown => "unknown",
        }
    }
}

/// Handle for a region vertex: owning grid, cell state, and component
/// ordinal in deterministic scan order. Stays valid until the owning grid
/// is re-clustered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RegionKey {
    pub grid: u32,
    pub state: RegionState,
    pub ordinal: u16,
}

/// One face-connected cluster of same-state voxels inside a single grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub key: RegionKey,
    /// Mean of member voxel centers.
    pub anchor: Point3,
    /// Member voxel whose center lies nearest the anchor; lattice searches
    /// start and end here.
    pub snap: Coord,
    /// Member voxel linear indices, ascending.
    pub voxels: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    Free,
    Unknown,
    Portal,
}

impl EdgeKind {
    pub fn name(self) -> &'static str {
        match self {
            EdgeKind::Free => "free",
            EdgeKind::Unknown => "unknown",
            EdgeKind::Portal => "portal",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub a: RegionKey,
    pub b: RegionKey,
    pub kind: EdgeKind,
    pub length: Real,
}

/// Partition of the voxel lattice into cubic grids; grids on the far
/// boundary are truncated to the map extent.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPartition {
    /// Voxels per grid side.
    pub side: usize,
    /// Number of grids along each axis.
    pub dims: [usize; 3],
    map_dims: [usize; 3],
}

impl GridPartition {
    pub fn new(map: &VoxelMap, grid_side_m: Real) -> Self {
        let side = ((grid_side_m / map.resolution()).round() as usize).max(1);
        let md = map.dims();
        Self {
            side,
            dims: [md[0].div_ceil(side), md[1].div_ceil(side), md[2].div_ceil(side)],
            map_dims: md,
        }
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn grid_of(&self, c: Coord) -> u32 {
        let gx = c.x as usize / self.side;
        let gy = c.y as usize / self.side;
        let gz = c.z as usize / self.side;
        (gx + self.dims[0] * (gy + self.dims[1] * gz)) as u32
    }

    pub fn grid_cell(&self, g: u32) -> [usize; 3] {
        let g = g as usize;
        [g % self.dims[0], (g / self.dims[0]) % self.dims[1], g / (self.dims[0] * self.dims[1])]
    }

    /// Inclusive lower and exclusive upper voxel coordinates of a grid.
    pub fn voxel_bounds(&self, g: u32) -> ([i32; 3], [i32; 3]) {
        let cell = self.grid_cell(g);
        let mut lo = [0i32; 3];
        let mut hi = [0i32; 3];
        for ax in 0..3 {
            let start = cell[ax] * self.side;
            lo[ax] = start as i32;
            hi[ax] = (start + self.side).min(self.map_dims[ax]) as i32;
        }
        (lo, hi)
    }

    pub fn face_neighbors(&self, g: u32) -> Vec<u32> {
        let cell = self.grid_cell(g);
        let mut out = Vec::with_capacity(6);
        for (ax, delta) in [(0, -1i32), (0, 1), (1, -1), (1, 1), (2, -1), (2, 1)] {
            let v = cell[ax] as i32 + delta;
            if v < 0 || v as usize >= self.dims[ax] {
                continue;
            }
            let mut n = cell;
            n[ax] = v as usize;
            out.push((n[0] + self.dims[0] * (n[1] + self.dims[1] * n[2])) as u32);
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct GridRegions {
    free: Vec<Region>,
    unknown: Vec<Region>,
}

impl GridRegions {
    fn of(&self, state: RegionState) -> &[Region] {
        match state {
            RegionState::Free => &self.free,
            RegionState::Unknown => &self.unknown,
        }
    }
}

const NO_REGION: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct ConnectivityGraph {
    part: GridPartition,
    grids: Vec<GridRegions>,
    /// Per voxel: ordinal of the containing free region within its grid.
    free_label: Vec<u32>,
    unknown_label: Vec<u32>,
    /// Edge buckets keyed by (min grid, max grid); (g, g) holds portals.
    edges: HashMap<(u32, u32), Vec<Edge>>,
    // Flattened view for shortest-path queries, rebuilt after each update.
    verts: Vec<RegionKey>,
    anchors: Vec<Point3>,
    vert_index: HashMap<RegionKey, usize>,
    adj: Vec<Vec<(usize, Real)>>,
}

impl ConnectivityGraph {
    pub fn new(map: &VoxelMap, grid_side_m: Real) -> Self {
        let part = GridPartition::new(map, grid_side_m);
        let mut graph = Self {
            grids: vec![GridRegions::default(); part.len()],
            part,
            free_label: vec![NO_REGION; map.len()],
            unknown_label: vec![NO_REGION; map.len()],
            edges: HashMap::new(),
            verts: Vec::new(),
            anchors: Vec::new(),
            vert_index: HashMap::new(),
            adj: Vec::new(),
        };
        let all: Vec<u32> = (0..graph.part.len() as u32).collect();
        graph.refresh(map, &all);
        graph
    }

    pub fn partition(&self) -> &GridPartition {
        &self.part
    }

    /// Re-cluster the grids containing any of the changed voxels and rebuild
    /// the edge buckets incident to them.
    pub fn update(&mut self, map: &VoxelMap, changed: &[usize]) {
        let dirty: BTreeSet<u32> =
            changed.iter().map(|&idx| self.part.grid_of(map.coord(idx))).collect();
        if dirty.is_empty() {
            return;
        }
        let dirty: Vec<u32> = dirty.into_iter().collect();
        self.refresh(map, &dirty);
    }

    fn refresh(&mut self, map: &VoxelMap, dirty: &[u32]) {
        for &g in dirty {
            self.cluster_grid(map, g);
        }
        let mut pairs = BTreeSet::new();
        for &g in dirty {
            pairs.insert((g, g));
            for n in self.part.face_neighbors(g) {
                pairs.insert((g.min(n), g.max(n)));
            }
        }
        for (a, b) in pairs {
            self.rebuild_bucket(map, a, b);
        }
        self.rebuild_flat();
    }

    fn cluster_grid(&mut self, map: &VoxelMap, g: u32) {
        let (lo, hi) = self.part.voxel_bounds(g);
        for z in lo[2]..hi[2] {
            for y in lo[1]..hi[1] {
                for x in lo[0]..hi[0] {
                    let idx = map.index(Coord::new(x, y, z));
                    self.free_label[idx] = NO_REGION;
                    self.unknown_label[idx] = NO_REGION;
                }
            }
        }
        for state in [RegionState::Free, RegionState::Unknown] {
            let label = match state {
                RegionState::Free => &mut self.free_label,
                RegionState::Unknown => &mut self.unknown_label,
            };
            let mut regions = Vec::new();
            for z in lo[2]..hi[2] {
                for y in lo[1]..hi[1] {
                    for x in lo[0]..hi[0] {
                        let seed = Coord::new(x, y, z);
                        let seed_idx = map.index(seed);
                        if map.state_idx(seed_idx) != state.cell() || label[seed_idx] != NO_REGION
                        {
                            continue;
                        }
                        let ordinal = regions.len() as u32;
                        let mut members = vec![seed_idx];
                        label[seed_idx] = ordinal;
                        let mut queue = VecDeque::from([seed]);
                        while let Some(c) = queue.pop_front() {
                            for &(dx, dy, dz) in &NEIGHBORS_6 {
                                let nc = c.offset(dx, dy, dz);
                                if !map.in_bounds(nc) || self.part.grid_of(nc) != g {
                                    continue;
                                }
                                let nidx = map.index(nc);
                                if map.state_idx(nidx) == state.cell()
                                    && label[nidx] == NO_REGION
                                {
                                    label[nidx] = ordinal;
                                    members.push(nidx);
                                    queue.push_back(nc);
                                }
                            }
                        }
                        members.sort_unstable();
                        let mut anchor = Point3::zero();
                        for &m in &members {
                            anchor += map.voxel_center(map.coord(m));
                        }
                        anchor = anchor / members.len() as Real;
                        let snap_idx = members
                            .iter()
                            .copied()
                            .min_by(|&a, &b| {
                                let da = map.voxel_center(map.coord(a)).distance(anchor);
                                let db = map.voxel_center(map.coord(b)).distance(anchor);
                                da.total_cmp(&db).then(a.cmp(&b))
                            })
                            .expect("region has at least one member");
                        regions.push(Region {
                            key: RegionKey { grid: g, state, ordinal: ordinal as u16 },
                            anchor,
                            snap: map.coord(snap_idx),
                            voxels: members,
                        });
                    }
                }
            }
            match state {
                RegionState::Free => self.grids[g as usize].free = regions,
                RegionState::Unknown => self.grids[g as usize].unknown = regions,
            }
        }
    }

    fn rebuild_bucket(&mut self, map: &VoxelMap, a: u32, b: u32) {
        let mut bucket = Vec::new();
        if a == b {
            let gr = &self.grids[a as usize];
            for f in &gr.free {
                for u in &gr.unknown {
                    let allowed = |c: Coord| {
                        self.part.grid_of(c) == a && map.state(c) != CellState::Occupied
                    };
                    if let Some(path) = astar_path(map, f.snap, u.snap, allowed) {
                        bucket.push(Edge {
                            a: f.key,
                            b: u.key,
                            kind: EdgeKind::Portal,
                            length: self.edge_length(map, f, u, path.length),
                        });
                    }
                }
            }
        } else {
            for state in [RegionState::Free, RegionState::Unknown] {
                let kind = match state {
                    RegionState::Free => EdgeKind::Free,
                    RegionState::Unknown => EdgeKind::Unknown,
                };
                for ra in self.grids[a as usize].of(state) {
                    for rb in self.grids[b as usize].of(state) {
                        let allowed = |c: Coord| {
                            let g = self.part.grid_of(c);
                            (g == a || g == b) && map.state(c) == state.cell()
                        };
                        if let Some(path) = astar_path(map, ra.snap, rb.snap, allowed) {
                            bucket.push(Edge {
                                a: ra.key,
                                b: rb.key,
                                kind,
                                length: self.edge_length(map, ra, rb, path.length),
                            });
                        }
                    }
                }
            }
        }
        if bucket.is_empty() {
            self.edges.remove(&(a, b));
        } else {
            self.edges.insert((a, b), bucket);
        }
    }

    fn edge_length(&self, map: &VoxelMap, ra: &Region, rb: &Region, path_len: Real) -> Real {
        ra.anchor.distance(map.voxel_center(ra.snap))
            + path_len
            + rb.anchor.distance(map.voxel_center(rb.snap))
    }

    fn rebuild_flat(&mut self) {
        self.verts.clear();
        self.anchors.clear();
        self.vert_index.clear();
        for gr in &self.grids {
            for r in gr.free.iter().chain(gr.unknown.iter()) {
                self.vert_index.insert(r.key, self.verts.len());
                self.verts.push(r.key);
                self.anchors.push(r.anchor);
            }
        }
        self.adj = vec![Vec::new(); self.verts.len()];
        let mut keys: Vec<(u32, u32)> = self.edges.keys().copied().collect();
        keys.sort_unstable();
        for key in keys {
            for e in &self.edges[&key] {
                let ia = self.vert_index[&e.a];
                let ib = self.vert_index[&e.b];
                self.adj[ia].push((ib, e.length));
                self.adj[ib].push((ia, e.length));
            }
        }
        for list in &mut self.adj {
            list.sort_unstable_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)));
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.verts.len()
    }

    pub fn vertices(&self) -> impl Iterator<Item = RegionKey> + '_ {
        self.verts.iter().copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values().flatten()
    }

    pub fn region(&self, key: RegionKey) -> Option<&Region> {
        self.grids
            .get(key.grid as usize)?
            .of(key.state)
            .get(key.ordinal as usize)
    }

    pub fn regions_of(&self, grid: u32, state: RegionState) -> &[Region] {
        self.grids[grid as usize].of(state)
    }

    pub fn anchor(&self, key: RegionKey) -> Option<Point3> {
        self.vert_index.get(&key).map(|&i| self.anchors[i])
    }

    /// Region containing a voxel, if the voxel is free or unknown.
    pub fn region_at(&self, map: &VoxelMap, c: Coord) -> Option<RegionKey> {
        let idx = map.index(c);
        let (state, label) = match map.state_idx(idx) {
            CellState::Free => (RegionState::Free, self.free_label[idx]),
            CellState::Unknown => (RegionState::Unknown, self.unknown_label[idx]),
            CellState::Occupied => return None,
        };
        (label != NO_REGION).then(|| RegionKey {
            grid: self.part.grid_of(c),
            state,
            ordinal: label as u16,
        })
    }

    /// Vertex for a world position: the containing region when the position
    /// sits in a free or unknown voxel, otherwise the vertex with the
    /// nearest anchor.
    pub fn nearest_vertex(&self, map: &VoxelMap, p: Point3) -> Option<RegionKey> {
        if let Some(c) = map.voxel_at(p) {
            if let Some(k) = self.region_at(map, c) {
                return Some(k);
            }
        }
        self.verts
            .iter()
            .enumerate()
            .min_by(|(_, &ka), (_, &kb)| {
                let da = self.anchors[self.vert_index[&ka]].distance(p);
                let db = self.anchors[self.vert_index[&kb]].distance(p);
                da.total_cmp(&db).then(ka.cmp(&kb))
            })
            .map(|(_, &k)| k)
    }

    /// Shortest path between two vertices; returns total length and the
    /// anchor polyline including both endpoints.
    pub fn graph_path(&self, from: RegionKey, to: RegionKey) -> Option<(Real, Vec<Point3>)> {
        let s = *self.vert_index.get(&from)?;
        let t = *self.vert_index.get(&to)?;
        let n = self.verts.len();
        let mut dist = vec![Real::INFINITY; n];
        let mut prev = vec![usize::MAX; n];
        let mut heap = std::collections::BinaryHeap::new();
        dist[s] = 0.0;
        heap.push(DijkstraEntry { d: 0.0, idx: s });
        while let Some(DijkstraEntry { d, idx }) = heap.pop() {
            if d > dist[idx] {
                continue;
            }
            if idx == t {
                break;
            }
            for &(next, len) in &self.adj[idx] {
                let nd = d + len;
                if nd < dist[next] {
                    dist[next] = nd;
                    prev[next] = idx;
                    heap.push(DijkstraEntry { d: nd, idx: next });
                }
            }
        }
        if dist[t].is_infinite() {
            return None;
        }
        let mut route = Vec::new();
        let mut cur = t;
        loop {
            route.push(self.anchors[cur]);
            if cur == s {
                break;
            }
            cur = prev[cur];
        }
        route.reverse();
        Some((dist[t], route))
    }

    pub fn graph_distance(&self, from: RegionKey, to: RegionKey) -> Option<Real> {
        self.graph_path(from, to).map(|(d, _)| d)
    }

    /// Single-source shortest distances to every reachable vertex.
    pub fn distances_from(&self, from: RegionKey) -> HashMap<RegionKey, Real> {
        let mut out = HashMap::new();
        let Some(&s) = self.vert_index.get(&from) else {
            return out;
        };
        let n = self.verts.len();
        let mut dist = vec![Real::INFINITY; n];
        let mut heap = std::collections::BinaryHeap::new();
        dist[s] = 0.0;
        heap.push(DijkstraEntry { d: 0.0, idx: s });
        while let Some(DijkstraEntry { d, idx }) = heap.pop() {
            if d > dist[idx] {
                continue;
            }
            for &(next, len) in &self.adj[idx] {
                let nd = d + len;
                if nd < dist[next] {
                    dist[next] = nd;
                    heap.push(DijkstraEntry { d: nd, idx: next });
                }
            }
        }
        for (i, d) in dist.into_iter().enumerate() {
            if d.is_finite() {
                out.insert(self.verts[i], d);
            }
        }
        out
    }

    /// Plain-text dump: one `vertex` line per region, one `edge` line per
    /// edge, both in deterministic order.
    pub fn render_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        for (i, key) in self.verts.iter().enumerate() {
            let a = self.anchors[i];
            let count = self.region(*key).map_or(0, |r| r.voxels.len());
            writeln!(
                out,
                "vertex {} {} {} {:.3} {:.3} {:.3} {}",
                key.grid,
                key.state.name(),
                key.ordinal,
                a.x,
                a.y,
                a.z,
                count
            )
            .unwrap();
        }
        let mut keys: Vec<(u32, u32)> = self.edges.keys().copied().collect();
        keys.sort_unstable();
        for key in keys {
            for e in &self.edges[&key] {
                writeln!(
                    out,
                    "edge {} {} {} {} {} {} {} {:.3}",
                    e.kind.name(),
                    e.a.grid,
                    e.a.state.name(),
                    e.a.ordinal,
                    e.b.grid,
                    e.b.state.name(),
                    e.b.ordinal,
                    e.length
                )
                .unwrap();
            }
        }
        out
    }

    /// Canonical (vertices, edges) listing for equivalence checks between
    /// incremental updates and full rebuilds.
    pub fn canonical(&self) -> (Vec<Region>, Vec<Edge>) {
        let mut verts: Vec<Region> = self
            .grids
            .iter()
            .flat_map(|g| g.free.iter().chain(g.unknown.iter()).cloned())
            .collect();
        verts.sort_by(|a, b| a.key.cmp(&b.key));
        let mut edges: Vec<Edge> = self.edges.values().flatten().cloned().collect();
        edges.sort_by(|x, y| (x.a, x.b, x.kind).cmp(&(y.a, y.b, y.kind)));
        (verts, edges)
    }
}

struct DijkstraEntry {
    d: Real,
    idx: usize,
}

impl PartialEq for DijkstraEntry {
    fn eq(&self, other: &Self) -> bool {
        self.d == other.d && self.idx == other.idx
    }
}
impl Eq for DijkstraEntry {}
impl PartialOrd for DijkstraEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for DijkstraEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other.d.total_cmp(&self.d).then_with(|| other.idx.cmp(&self.idx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// 4 m x 2 m x 1 m map at 0.5 m resolution -> 8 x 4 x 2 voxels,
    /// grid side 1 m -> 2 x 2 x 1 grids... with side 2 voxels -> 4 x 2 x 1.
    fn small_map() -> VoxelMap {
        VoxelMap::new(Point3::zero(), 0.5, [8, 4, 2])
    }

    fn fill(map: &mut VoxelMap, s: CellState) {
        for idx in 0..map.len() {
            map.set_state_raw(map.coord(idx), s);
        }
    }

    #[test]
    fn partition_truncates_boundary_grids() {
        let map = VoxelMap::new(Point3::zero(), 0.5, [13, 10, 6]);
        let part = GridPartition::new(&map, 5.0);
        assert_eq!(part.side, 10);
        assert_eq!(part.dims, [2, 1, 1]);
        let (lo, hi) = part.voxel_bounds(1);
        assert_eq!(lo, [10, 0, 0]);
        assert_eq!(hi, [13, 10, 6]);
        assert_eq!(part.face_neighbors(0), vec![1]);
    }

    #[test]
    fn empty_room_has_one_free_region_per_grid() {
        let mut map = small_map();
        fill(&mut map, CellState::Free);
        let g = ConnectivityGraph::new(&map, 1.0);
        assert_eq!(g.partition().dims, [4, 2, 1]);
        assert_eq!(g.vertex_count(), 8);
        for key in g.vertices() {
            assert_eq!(key.state, RegionState::Free);
            let r = g.region(key).unwrap();
            assert_eq!(r.voxels.len(), 8);
        }
        // every face-adjacent grid pair carries exactly one free edge
        let edge_count = g.edges().count();
        assert_eq!(edge_count, 10); // 4x2 grid lattice has 3*2 + 4 = 10 adjacencies
        assert!(g.edges().all(|e| e.kind == EdgeKind::Free));
    }

    #[test]
    fn anchors_sit_at_grid_centers_in_empty_room() {
        let mut map = small_map();
        fill(&mut map, CellState::Free);
        let g = ConnectivityGraph::new(&map, 1.0);
        let k = g
            .region_at(&map, Coord::new(0, 0, 0))
            .expect("voxel belongs to a region");
        let r = g.region(k).unwrap();
        assert_eq!(r.anchor, Point3::new(0.5, 0.5, 0.5));
        assert_eq!(r.voxels.len(), 8);
    }

    #[test]
    fn wall_splits_grid_and_blocks_edges() {
        // 2 x 1 x 1 grids of 2^3 voxels; wall bisects the right grid in x
        let mut map = VoxelMap::new(Point3::zero(), 0.5, [4, 2, 2]);
        fill(&mut map, CellState::Free);
        for y in 0..2 {
            for z in 0..2 {
                map.set_state_raw(Coord::new(2, y, z), CellState::Occupied);
            }
        }
        let g = ConnectivityGraph::new(&map, 1.0);
        assert_eq!(g.regions_of(0, RegionState::Free).len(), 1);
        assert_eq!(g.regions_of(1, RegionState::Free).len(), 1);
        // the two free regions are separated by the wall: no edge
        assert_eq!(g.edges().count(), 0);
    }

    #[test]
    fn portal_connects_free_to_unknown_within_grid() {
        let mut map = VoxelMap::new(Point3::zero(), 0.5, [2, 2, 2]);
        // half free, half unknown, no occupied in between
        for idx in 0..map.len() {
            let c = map.coord(idx);
            if c.x == 0 {
                map.set_state_raw(c, CellState::Free);
            }
        }
        let g = ConnectivityGraph::new(&map, 1.0);
        assert_eq!(g.vertex_count(), 2);
        let edges: Vec<&Edge> = g.edges().collect();
        assert_eq!(edges.len(), 1);
        assert_eq!(edges[0].kind, EdgeKind::Portal);
    }

    #[test]
    fn edge_length_never_undercuts_anchor_distance() {
        let mut map = VoxelMap::new(Point3::zero(), 0.5, [12, 12, 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for idx in 0..map.len() {
            let s = match rng.gen_range(0..10) {
                0..=5 => CellState::Free,
                6..=7 => CellState::Unknown,
                _ => CellState::Occupied,
            };
            map.set_state_raw(map.coord(idx), s);
        }
        let g = ConnectivityGraph::new(&map, 2.0);
        for e in g.edges() {
            let aa = g.region(e.a).unwrap().anchor;
            let ab = g.region(e.b).unwrap().anchor;
            assert!(
                e.length >= aa.distance(ab) - 1e-9,
                "edge {:?} length {} < anchor distance {}",
                e,
                e.length,
                aa.distance(ab)
            );
        }
    }

    #[test]
    fn incremental_update_matches_full_rebuild() {
        let mut map = VoxelMap::new(Point3::zero(), 0.5, [12, 8, 4]);
        fill(&mut map, CellState::Unknown);
        let mut g = ConnectivityGraph::new(&map, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for round in 0..12 {
            let mut changed = Vec::new();
            for _ in 0..40 {
                let idx = rng.gen_range(0..map.len());
                let s = if rng.gen_bool(0.75) { CellState::Free } else { CellState::Occupied };
                if map.state_idx(idx) != s {
                    map.set_state_raw(map.coord(idx), s);
                    changed.push(idx);
                }
            }
            g.update(&map, &changed);
            let fresh = ConnectivityGraph::new(&map, 2.0);
            assert_eq!(g.canonical(), fresh.canonical(), "divergence in round {round}");
        }
    }

    #[test]
    fn corridor_distance_accumulates_over_grids() {
        // straight 1-voxel-high corridor across 4 grids
        let mut map = VoxelMap::new(Point3::zero(), 0.5, [8, 2, 1]);
        fill(&mut map, CellState::Free);
        let g = ConnectivityGraph::new(&map, 1.0);
        let a = g.region_at(&map, Coord::new(0, 0, 0)).unwrap();
        let b = g.region_at(&map, Coord::new(7, 0, 0)).unwrap();
        let (d, route) = g.graph_path(a, b).unwrap();
        assert_eq!(route.len(), 4);
        // anchors at x = 0.5, 1.5, 2.5, 3.5; each hop = 1 m lattice path
        // plus two sqrt(2)/4 m anchor-to-snap legs
        let hop = 1.0 + 2.0 * (2.0_f64).sqrt() / 4.0;
        assert!((d - 3.0 * hop).abs() < 1e-9, "unexpected corridor distance {d}");
        let direct = g.graph_distance(a, a).unwrap();
        assert_eq!(direct, 0.0);
    }

    #[test]
    fn nearest_vertex_prefers_containing_region() {
        let mut map = small_map();
        fill(&mut map, CellState::Free);
        let g = ConnectivityGraph::new(&map, 1.0);
        let p = Point3::new(3.9, 1.9, 0.9);
        let k = g.nearest_vertex(&map, p).unwrap();
        assert_eq!(k, g.region_at(&map, map.voxel_at(p).unwrap()).unwrap());
        // out-of-map position falls back to nearest anchor
        let far = g.nearest_vertex(&map, Point3::new(100.0, 0.0, 0.0)).unwrap();
        assert_eq!(far.grid, 3);
    }

    #[test]
    fn render_text_is_stable_and_labelled() {
        let mut map = VoxelMap::new(Point3::zero(), 0.5, [2, 2, 2]);
        for idx in 0..map.len() {
            let c = map.coord(idx);
            if c.x == 0 {
                map.set_state_raw(c, CellState::Free);
            }
        }
        let g = ConnectivityGraph::new(&map, 1.0);
        let text = g.render_text();
        assert_eq!(text, g.render_text());
        assert!(text.contains("vertex 0 free 0"));
        assert!(text.contains("vertex 0 unknown 0"));
        assert!(text.contains("edge portal"));
    }
}
