//! Coverage-path planning for a single agent: group frontier voxels into
//! clusters, pick the viewpoint that sees the most of each cluster, order
//! assigned units into a tour, and order viewpoints inside a unit.
//!
//! Tours are costed with the velocity-consistency time model
//! ([`tour_time`]): orders that keep the agent moving in a consistent
//! direction beat orders that force turnarounds, which makes the tour
//! problem asymmetric. Small instances are solved exactly by permutation,
//! larger ones with nearest-neighbor construction plus or-opt moves.

use std::collections::HashSet;

use crate::graph::ConnectivityGraph;
use crate::math::tour::{path_length, tour_time};
use crate::voxel::raycast::visible;
use crate::voxel::search::{astar_path, nearest_allowed, non_occupied, simplify_path};
use crate::voxel::{CellState, Coord, VoxelMap};
use crate::{MotionLimits, Point3, Real};

/// Frontier clusters wider than this along their dominant axis get split.
pub const SPLIT_THRESHOLD_M: Real = 8.0;
/// Candidate viewpoints ring the cluster centroid at these radii.
pub const RING_RADII: [Real; 2] = [2.0, 4.0];
/// Candidates per ring.
pub const YAW_SAMPLES: usize = 12;
/// Below this separation, point-to-point routes use the voxel lattice
/// directly; beyond it they follow the connectivity graph.
pub const SHORT_RANGE_M: Real = 10.0;
/// Tours up to this size are solved by exhaustive permutation.
const EXHAUSTIVE_MAX: usize = 6;

const EPS: Real = 1e-9;

/// A polyline with its length and velocity-consistency traversal time.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEstimate {
    pub waypoints: Vec<Point3>,
    pub length: Real,
    pub time: Real,
}

impl PathEstimate {
    fn from_waypoints(pts: Vec<Point3>, entry: Option<Point3>, limits: &MotionLimits) -> Self {
        let length = path_length(&pts);
        let time = if pts.len() < 2 {
            0.0
        } else {
            tour_time(&pts, entry, limits).unwrap_or(Real::INFINITY)
        };
        Self { waypoints: pts, length, time }
    }
}

/// A connected patch of frontier voxels, already size-limited by recursive
/// principal-axis splitting.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontierCluster {
    pub voxels: Vec<Coord>,
    pub centroid: Point3,
    /// Dominant principal axis (unit), deterministic sign.
    pub axis: Point3,
    /// Extent of the member centers along `axis`.
    pub extent: Real,
}

/// A sensing pose: where to hover, which way to face, how many of the
/// cluster's frontier voxels are visible from there.
#[derive(Debug, Clone, PartialEq)]
pub struct Viewpoint {
    pub position: Point3,
    pub yaw: Real,
    pub covered: u32,
}

/// Visit order over task units, starting at the agent.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalTour {
    /// Unit ids: optimized order first, then unreachable units ascending.
    pub order: Vec<u64>,
    /// Units no route was found to; they close out `order`.
    pub unreachable: Vec<u64>,
    /// Concatenated route over the reachable prefix.
    pub path: PathEstimate,
}

/// Viewpoint order inside one unit, with fixed start and optional fixed end.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTour {
    /// Indices into the input viewpoint slice.
    pub order: Vec<usize>,
    pub path: PathEstimate,
}

/// Group the given frontier voxels (by linear map index) into
/// 26-connected components, then recursively split any component whose
/// extent along its first principal axis exceeds `split_threshold` meters
/// at the plane through the centroid.
pub fn cluster_frontiers(
    map: &VoxelMap,
    indices: &[usize],
    split_threshold: Real,
) -> Vec<FrontierCluster> {
    let mut sorted: Vec<usize> = indices.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let members: HashSet<Coord> = sorted.iter().map(|&i| map.coord(i)).collect();

    let mut seen: HashSet<Coord> = HashSet::new();
    let mut out = Vec::new();
    for &idx in &sorted {
        let start = map.coord(idx);
        if seen.contains(&start) {
            continue;
        }
        // 26-connected flood fill restricted to the member set.
        let mut comp = vec![start];
        seen.insert(start);
        let mut head = 0;
        while head < comp.len() {
            let c = comp[head];
            head += 1;
            for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        if dx == 0 && dy == 0 && dz == 0 {
                            continue;
                        }
                        let n = c.offset(dx, dy, dz);
                        if members.contains(&n) && seen.insert(n) {
                            comp.push(n);
                        }
                    }
                }
            }
        }
        split_cluster(map, comp, split_threshold, &mut out);
    }
    out
}

fn split_cluster(
    map: &VoxelMap,
    voxels: Vec<Coord>,
    threshold: Real,
    out: &mut Vec<FrontierCluster>,
) {
    let centers: Vec<Point3> = voxels.iter().map(|&c| map.voxel_center(c)).collect();
    let (centroid, axis, extent) = crate::math::pca::principal_axis(&centers);
    if extent <= threshold || voxels.len() < 2 {
        out.push(FrontierCluster { voxels, centroid, axis, extent });
        return;
    }
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for (&c, &p) in voxels.iter().zip(&centers) {
        if (p - centroid).dot(axis) < 0.0 {
            lo.push(c);
        } else {
            hi.push(c);
        }
    }
    if lo.is_empty() || hi.is_empty() {
        // Projections collapsed onto one side; cannot split further.
        out.push(FrontierCluster { voxels, centroid, axis, extent });
        return;
    }
    split_cluster(map, lo, threshold, out);
    split_cluster(map, hi, threshold, out);
}

/// Pick the sensing pose for a cluster: candidates on rings around the
/// centroid at the centroid's height, kept only if their voxel is free,
/// scored by how many cluster voxels are visible within `sensor_range`.
/// Ties go to the candidate closest to `agent`. When every ring candidate
/// is invalid — typical for frontiers deep inside corridors narrower than
/// the rings — the cluster's own free voxels stand in as candidates, so a
/// reachable frontier always yields a pose. `None` means nothing sees
/// anything — the cluster should be deferred, not dropped.
pub fn sample_viewpoints(
    map: &VoxelMap,
    cluster: &FrontierCluster,
    agent: Point3,
    sensor_range: Real,
) -> Option<Viewpoint> {
    let res = map.resolution();
    let half = res / 2.0;
    let z_lo = map.origin().z + half;
    let z_hi = map.origin().z + map.dims()[2] as Real * res - half;
    let z = cluster.centroid.z.clamp(z_lo, z_hi);

    let mut best: Option<(u32, Real, Viewpoint)> = None;
    let consider = |pos: Point3, agent: Point3, best: &mut Option<(u32, Real, Viewpoint)>| {
        let Some(c) = map.voxel_at(pos) else { return };
        if map.state(c) != CellState::Free {
            return;
        }
        let covered = cluster
            .voxels
            .iter()
            .filter(|&&v| {
                let center = map.voxel_center(v);
                pos.distance(center) <= sensor_range && visible(map, pos, center)
            })
            .count() as u32;
        if covered == 0 {
            return;
        }
        let dist = agent.distance(pos);
        let better = match best {
            None => true,
            Some((bc, bd, _)) => covered > *bc || (covered == *bc && dist + EPS < *bd),
        };
        if better {
            let yaw = Real::atan2(cluster.centroid.y - pos.y, cluster.centroid.x - pos.x);
            *best = Some((covered, dist, Viewpoint { position: pos, yaw, covered }));
        }
    };

    for &radius in RING_RADII.iter() {
        for k in 0..YAW_SAMPLES {
            let theta = std::f64::consts::TAU * k as Real / YAW_SAMPLES as Real;
            let pos = Point3::new(
                cluster.centroid.x + radius * theta.cos(),
                cluster.centroid.y + radius * theta.sin(),
                z,
            );
            consider(pos, agent, &mut best);
        }
    }
    if best.is_none() {
        // Frontier voxels are free by definition, so standing on one always
        // sees at least itself; only walled-off clusters stay deferred.
        for &v in &cluster.voxels {
            consider(map.voxel_center(v), agent, &mut best);
        }
    }
    best.map(|(_, _, vp)| vp)
}

fn push_point(path: &mut Vec<Point3>, p: Point3) {
    if path.last().map_or(true, |&q| q.distance(p) > EPS) {
        path.push(p);
    }
}

/// Point-to-point route polyline: short hops go over the voxel lattice
/// (line-of-sight simplified), longer ones follow the connectivity graph
/// through region anchors. Endpoints are the exact input points.
pub fn route_path(
    map: &VoxelMap,
    graph: &ConnectivityGraph,
    from: Point3,
    to: Point3,
    short_range: Real,
) -> Option<Vec<Point3>> {
    // Both endpoints must sit in (or within a few voxels of) traversable
    // space; a point buried deep in occupied volume has no route at all.
    let snap = |p: Point3| {
        let c = map.voxel_at(p)?;
        nearest_allowed(map, c, 4, |c| non_occupied(map.state(c)))
    };
    let a = snap(from)?;
    let b = snap(to)?;
    if from.distance(to) < short_range {
        if let Some(p) = lattice_route(map, from, to, a, b) {
            return Some(p);
        }
    }
    graph_route(map, graph, from, to, a, b)
}

fn lattice_route(
    map: &VoxelMap,
    from: Point3,
    to: Point3,
    a: Coord,
    b: Coord,
) -> Option<Vec<Point3>> {
    let grid = astar_path(map, a, b, |c| non_occupied(map.state(c)))?;
    let mut pts = vec![from];
    for p in simplify_path(map, &grid.coords, non_occupied) {
        push_point(&mut pts, p);
    }
    push_point(&mut pts, to);
    Some(pts)
}

fn graph_route(
    map: &VoxelMap,
    graph: &ConnectivityGraph,
    from: Point3,
    to: Point3,
    a: Coord,
    b: Coord,
) -> Option<Vec<Point3>> {
    let va = graph.nearest_vertex(map, map.voxel_center(a))?;
    let vb = graph.nearest_vertex(map, map.voxel_center(b))?;
    let (_, poly) = graph.graph_path(va, vb)?;
    let mut pts = vec![from];
    for p in poly {
        push_point(&mut pts, p);
    }
    push_point(&mut pts, to);
    Some(pts)
}

/// Shared machinery for both tour problems: a fixed start, optional fixed
/// end, and precomputed point-to-point polylines between all stops.
struct Chain<'a> {
    start: Point3,
    entry: Option<Point3>,
    end: Option<Point3>,
    limits: &'a MotionLimits,
    start_paths: Vec<Vec<Point3>>,
    pair_paths: Vec<Vec<Vec<Point3>>>,
    end_paths: Vec<Vec<Point3>>,
}

impl<'a> Chain<'a> {
    fn build(
        map: &VoxelMap,
        graph: &ConnectivityGraph,
        start: Point3,
        velocity: Point3,
        end: Option<Point3>,
        stops: &[Point3],
        limits: &'a MotionLimits,
    ) -> Self {
        let route = |a: Point3, b: Point3| {
            route_path(map, graph, a, b, SHORT_RANGE_M).unwrap_or_else(|| vec![a, b])
        };
        let n = stops.len();
        let start_paths: Vec<_> = stops.iter().map(|&s| route(start, s)).collect();
        let mut pair_paths = vec![vec![Vec::new(); n]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    pair_paths[i][j] = route(stops[i], stops[j]);
                }
            }
        }
        let end_paths = match end {
            Some(e) => stops.iter().map(|&s| route(s, e)).collect(),
            None => Vec::new(),
        };
        let entry = if velocity.norm() > EPS { Some(velocity) } else { None };
        Self { start, entry, end, limits, start_paths, pair_paths, end_paths }
    }

    fn concat(&self, order: &[usize], with_end: bool) -> Vec<Point3> {
        let mut pts = vec![self.start];
        let mut prev: Option<usize> = None;
        for &i in order {
            let leg = match prev {
                None => &self.start_paths[i],
                Some(p) => &self.pair_paths[p][i],
            };
            for &p in leg {
                push_point(&mut pts, p);
            }
            prev = Some(i);
        }
        if with_end {
            if let Some(e) = self.end {
                match prev {
                    Some(p) => {
                        for &q in &self.end_paths[p] {
                            push_point(&mut pts, q);
                        }
                    }
                    None => push_point(&mut pts, e),
                }
            }
        }
        pts
    }

    fn cost(&self, order: &[usize], with_end: bool) -> Real {
        let pts = self.concat(order, with_end);
        if pts.len() < 2 {
            0.0
        } else {
            tour_time(&pts, self.entry, self.limits).unwrap_or(Real::INFINITY)
        }
    }

    fn solve(&self) -> Vec<usize> {
        let n = self.start_paths.len();
        if n == 0 {
            return Vec::new();
        }
        if n <= EXHAUSTIVE_MAX {
            let mut best_order: Vec<usize> = (0..n).collect();
            let mut best = self.cost(&best_order, true);
            let mut perm: Vec<usize> = (0..n).collect();
            permute(&mut perm, 0, &mut |order| {
                let c = self.cost(order, true);
                if c + EPS < best {
                    best = c;
                    best_order = order.to_vec();
                }
            });
            return best_order;
        }
        // Nearest-neighbor by incremental tour time, then or-opt moves.
        let mut order: Vec<usize> = Vec::with_capacity(n);
        let mut remaining: Vec<usize> = (0..n).collect();
        while !remaining.is_empty() {
            let mut pick = 0;
            let mut pick_cost = Real::INFINITY;
            for (slot, &r) in remaining.iter().enumerate() {
                let mut trial = order.clone();
                trial.push(r);
                let c = self.cost(&trial, false);
                if c + EPS < pick_cost {
                    pick_cost = c;
                    pick = slot;
                }
            }
            order.push(remaining.remove(pick));
        }
        let mut best = self.cost(&order, true);
        for _pass in 0..50 {
            let mut improved = false;
            'moves: for seg in 1..=3usize.min(order.len()) {
                for i in 0..=order.len() - seg {
                    for j in 0..=order.len() - seg {
                        if j == i {
                            continue;
                        }
                        let mut trial = order.clone();
                        let chunk: Vec<usize> = trial.drain(i..i + seg).collect();
                        let at = if j > i { j } else { j };
                        let at = at.min(trial.len());
                        for (k, &c) in chunk.iter().enumerate() {
                            trial.insert(at + k, c);
                        }
                        let c = self.cost(&trial, true);
                        if c + EPS < best {
                            best = c;
                            order = trial;
                            improved = true;
                            break 'moves;
                        }
                    }
                }
            }
            if !improved {
                break;
            }
        }
        order
    }
}

fn permute(items: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// Order the agent's assigned units into an open tour starting at the
/// agent, minimizing velocity-consistency travel time over
/// connectivity-aware routes. Units with no route are appended last,
/// ascending, and reported in `unreachable`.
pub fn plan_global_tour(
    map: &VoxelMap,
    graph: &ConnectivityGraph,
    agent: Point3,
    velocity: Point3,
    targets: &[(u64, Point3)],
    limits: &MotionLimits,
) -> GlobalTour {
    let mut reach: Vec<(u64, Point3)> = Vec::new();
    let mut unreachable: Vec<u64> = Vec::new();
    for &(id, p) in targets {
        if route_path(map, graph, agent, p, SHORT_RANGE_M).is_some() {
            reach.push((id, p));
        } else {
            unreachable.push(id);
        }
    }
    unreachable.sort_unstable();
    let stops: Vec<Point3> = reach.iter().map(|&(_, p)| p).collect();
    let chain = Chain::build(map, graph, agent, velocity, None, &stops, limits);
    let idx_order = chain.solve();
    let pts = chain.concat(&idx_order, true);
    let path = PathEstimate::from_waypoints(pts, chain.entry, limits);
    let mut order: Vec<u64> = idx_order.iter().map(|&i| reach[i].0).collect();
    order.extend(unreachable.iter().copied());
    GlobalTour { order, unreachable, path }
}

/// Order the viewpoints of one unit, starting at the agent and optionally
/// ending at the entry point of the next unit on the global tour.
/// Exhaustive-optimal up to 6 viewpoints.
pub fn plan_local_tour(
    map: &VoxelMap,
    graph: &ConnectivityGraph,
    start: Point3,
    velocity: Point3,
    end: Option<Point3>,
    viewpoints: &[Viewpoint],
    limits: &MotionLimits,
) -> LocalTour {
    let stops: Vec<Point3> = viewpoints.iter().map(|v| v.position).collect();
    let chain = Chain::build(map, graph, start, velocity, end, &stops, limits);
    let order = chain.solve();
    let pts = chain.concat(&order, true);
    let path = PathEstimate::from_waypoints(pts, chain.entry, limits);
    LocalTour { order, path }
}
