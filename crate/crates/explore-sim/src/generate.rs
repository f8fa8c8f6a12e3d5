//! Seeded ground-truth map generators.
//!
//! Three families of desk-scale indoor scenes, all fully known (free or
//! occupied, never unknown), with full-height obstacles over an open floor:
//!
//! - `cubicle`: rooms along the perimeter with doorways into a central hall
//! - `open-plan`: one hall with scattered box obstacles
//! - `maze`: recursive wall subdivision with gaps
//!
//! Every generated map keeps a small clearing at the center so spawn
//! points stay valid across seeds, and is post-processed so that all free
//! space is one face-connected component: a run can therefore always reach
//! coverage 1.0 and the explorable volume never hides sealed free pockets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use explore_core::voxel::search::flood_fill;
use explore_core::voxel::{CellState, Coord, VoxelMap};
use explore_core::{Point3, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Cubicle,
    OpenPlan,
    Maze,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Cubicle => "cubicle",
            Family::OpenPlan => "open-plan",
            Family::Maze => "maze",
        }
    }
}

/// Radius of the always-free clearing at the map center, in meters.
const SPAWN_CLEAR_M: Real = 2.5;

pub fn generate(family: Family, size: [Real; 3], resolution: Real, seed: u64) -> VoxelMap {
    let dims = [
        (size[0] / resolution).round().max(3.0) as usize,
        (size[1] / resolution).round().max(3.0) as usize,
        (size[2] / resolution).round().max(1.0) as usize,
    ];
    let mut map = VoxelMap::new(Point3::zero(), resolution, dims);
    for idx in 0..map.len() {
        map.set_state_raw(map.coord(idx), CellState::Free);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perimeter_walls(&mut map);
    match family {
        Family::Cubicle => cubicle(&mut map, &mut rng),
        Family::OpenPlan => open_plan(&mut map, &mut rng),
        Family::Maze => maze(&mut map, &mut rng),
    }
    clear_spawn_area(&mut map);
    repair_connectivity(&mut map);
    map.recompute_frontiers();
    map
}

fn perimeter_walls(map: &mut VoxelMap) {
    let [nx, ny, nz] = map.dims();
    for z in 0..nz as i32 {
        for x in 0..nx as i32 {
            map.set_state_raw(Coord::new(x, 0, z), CellState::Occupied);
            map.set_state_raw(Coord::new(x, ny as i32 - 1, z), CellState::Occupied);
        }
        for y in 0..ny as i32 {
            map.set_state_raw(Coord::new(0, y, z), CellState::Occupied);
            map.set_state_raw(Coord::new(nx as i32 - 1, y, z), CellState::Occupied);
        }
    }
}

/// A full-height occupied box over `[lo, hi]` inclusive in x/y.
fn fill_column(map: &mut VoxelMap, lo: [i32; 2], hi: [i32; 2]) {
    let nz = map.dims()[2] as i32;
    for z in 0..nz {
        for y in lo[1]..=hi[1] {
            for x in lo[0]..=hi[0] {
                let c = Coord::new(x, y, z);
                if map.in_bounds(c) {
                    map.set_state_raw(c, CellState::Occupied);
                }
            }
        }
    }
}

fn carve_column(map: &mut VoxelMap, lo: [i32; 2], hi: [i32; 2]) {
    let nz = map.dims()[2] as i32;
    for z in 0..nz {
        for y in lo[1]..=hi[1] {
            for x in lo[0]..=hi[0] {
                let c = Coord::new(x, y, z);
                if map.in_bounds(c) {
                    map.set_state_raw(c, CellState::Free);
                }
            }
        }
    }
}

fn center_xy(map: &VoxelMap) -> (Real, Real) {
    let [nx, ny, _] = map.dims();
    let res = map.resolution();
    (
        map.origin().x + nx as Real * res / 2.0,
        map.origin().y + ny as Real * res / 2.0,
    )
}

/// Perimeter rooms with doorways onto a central hall, plus a few columns.
fn cubicle(map: &mut VoxelMap, rng: &mut ChaCha8Rng) {
    let [nx, ny, _] = map.dims();
    let (nx, ny) = (nx as i32, ny as i32);
    let res = map.resolution();
    let vox = |meters: Real| (meters / res).round() as i32;
    let depth = vox(5.0).min((nx.min(ny) - 6) / 3).max(3);
    let door = vox(1.5).max(2);

    // Ring wall separating the perimeter band from the hall.
    let (ix0, ix1) = (depth, nx - 1 - depth);
    let (iy0, iy1) = (depth, ny - 1 - depth);
    fill_column(map, [ix0, iy0], [ix1, iy0]);
    fill_column(map, [ix0, iy1], [ix1, iy1]);
    fill_column(map, [ix0, iy0], [ix0, iy1]);
    fill_column(map, [ix1, iy0], [ix1, iy1]);

    // Split each band into rooms and cut one doorway per room through the
    // ring wall. South and north bands span the full width; west and east
    // bands cover what remains so corners belong to one room each.
    let room_span = vox(6.0).max(door + 3);
    let mut split_band = |horizontal: bool, fixed: i32, from: i32, to: i32, rng: &mut ChaCha8Rng| {
        let mut at = from;
        loop {
            let span = (to - at).min(room_span + rng.gen_range(0..=vox(2.0)));
            let end = if to - (at + span) < room_span / 2 { to } else { at + span };
            // doorway through the ring wall, inset from the room's corners
            let lo = at + 1;
            let hi = (end - 1 - door).max(lo);
            let d = rng.gen_range(lo..=hi);
            if horizontal {
                carve_column(map, [d, fixed], [d + door - 1, fixed]);
            } else {
                carve_column(map, [fixed, d], [fixed, d + door - 1]);
            }
            if end >= to {
                break;
            }
            // partition wall between this room and the next
            if horizontal {
                let wall_y = if fixed == iy0 { (1, iy0) } else { (iy1, ny - 2) };
                fill_column(map, [end, wall_y.0], [end, wall_y.1]);
            } else {
                let wall_x = if fixed == ix0 { (1, ix0) } else { (ix1, nx - 2) };
                fill_column(map, [wall_x.0, end], [wall_x.1, end]);
            }
            at = end;
        }
    };
    split_band(true, iy0, 1, nx - 2, rng);
    split_band(true, iy1, 1, nx - 2, rng);
    split_band(false, ix0, iy0 + 1, iy1 - 1, rng);
    split_band(false, ix1, iy0 + 1, iy1 - 1, rng);

    // A few structural columns in the hall, away from the spawn clearing.
    let (cx, cy) = center_xy(map);
    let keep_out = SPAWN_CLEAR_M + 1.0;
    for _ in 0..3 {
        let x = rng.gen_range(ix0 + 2..ix1 - 2);
        let y = rng.gen_range(iy0 + 2..iy1 - 2);
        let p = map.voxel_center(Coord::new(x, y, 0));
        if ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt() < keep_out {
            continue;
        }
        fill_column(map, [x, y], [x + 1, y + 1]);
    }
}

/// Scattered full-height boxes in one open hall.
fn open_plan(map: &mut VoxelMap, rng: &mut ChaCha8Rng) {
    let [nx, ny, _] = map.dims();
    let (nx, ny) = (nx as i32, ny as i32);
    let res = map.resolution();
    let vox = |meters: Real| (meters / res).round().max(1.0) as i32;
    let area_m2 = nx as Real * ny as Real * res * res;
    let count = (area_m2 / 60.0).round().max(3.0) as usize;
    let (cx, cy) = center_xy(map);
    let keep_out = SPAWN_CLEAR_M + 0.5;

    let mut placed = 0;
    let mut attempts = 0;
    while placed < count && attempts < count * 20 {
        attempts += 1;
        let w = rng.gen_range(vox(1.0)..=vox(4.0));
        let h = rng.gen_range(vox(1.0)..=vox(4.0));
        let x = rng.gen_range(2..(nx - 2 - w).max(3));
        let y = rng.gen_range(2..(ny - 2 - h).max(3));
        let p0 = map.voxel_center(Coord::new(x, y, 0));
        let p1 = map.voxel_center(Coord::new(x + w - 1, y + h - 1, 0));
        let close = |px: Real, py: Real| {
            ((px - cx).powi(2) + (py - cy).powi(2)).sqrt() < keep_out
        };
        if close(p0.x, p0.y)
            || close(p1.x, p1.y)
            || close(p0.x, p1.y)
            || close(p1.x, p0.y)
            || close((p0.x + p1.x) / 2.0, (p0.y + p1.y) / 2.0)
        {
            continue;
        }
        fill_column(map, [x, y], [x + w - 1, y + h - 1]);
        placed += 1;
    }
}

/// Recursive wall subdivision with doorway gaps.
fn maze(map: &mut VoxelMap, rng: &mut ChaCha8Rng) {
    let [nx, ny, _] = map.dims();
    let res = map.resolution();
    let vox = |meters: Real| (meters / res).round().max(1.0) as i32;
    let min_span = vox(5.0);
    let gap = vox(1.5).max(2);
    divide(map, rng, 1, 1, nx as i32 - 2, ny as i32 - 2, min_span, gap);
}

fn divide(
    map: &mut VoxelMap,
    rng: &mut ChaCha8Rng,
    x0: i32,
    y0: i32,
    x1: i32,
    y1: i32,
    min_span: i32,
    gap: i32,
) {
    let w = x1 - x0 + 1;
    let h = y1 - y0 + 1;
    if w < 2 * min_span && h < 2 * min_span {
        return;
    }
    let vertical = if w >= 2 * min_span && h >= 2 * min_span {
        rng.gen_bool(0.5)
    } else {
        w >= 2 * min_span
    };
    if vertical {
        let wx = rng.gen_range(x0 + min_span - 1..=x1 - min_span + 1);
        fill_column(map, [wx, y0], [wx, y1]);
        let gy = rng.gen_range(y0..=(y1 - gap + 1).max(y0));
        carve_column(map, [wx, gy], [wx, (gy + gap - 1).min(y1)]);
        divide(map, rng, x0, y0, wx - 1, y1, min_span, gap);
        divide(map, rng, wx + 1, y0, x1, y1, min_span, gap);
    } else {
        let wy = rng.gen_range(y0 + min_span - 1..=y1 - min_span + 1);
        fill_column(map, [x0, wy], [x1, wy]);
        let gx = rng.gen_range(x0..=(x1 - gap + 1).max(x0));
        carve_column(map, [gx, wy], [(gx + gap - 1).min(x1), wy]);
        divide(map, rng, x0, y0, x1, wy - 1, min_span, gap);
        divide(map, rng, x0, wy + 1, x1, y1, min_span, gap);
    }
}

/// Free voxels within [`SPAWN_CLEAR_M`] of the map center (interior only),
/// so auto-placed spawn points are valid for every seed.
fn clear_spawn_area(map: &mut VoxelMap) {
    let (cx, cy) = center_xy(map);
    let [nx, ny, _] = map.dims();
    for y in 1..ny as i32 - 1 {
        for x in 1..nx as i32 - 1 {
            let p = map.voxel_center(Coord::new(x, y, 0));
            if ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt() <= SPAWN_CLEAR_M {
                carve_column(map, [x, y], [x, y]);
            }
        }
    }
}

/// Make free space one face-connected component: while any free voxel is
/// unreachable from the center clearing, open a doorway through the nearest
/// separating wall and retry. Deterministic; terminates because every pass
/// strictly grows the reachable set.
fn repair_connectivity(map: &mut VoxelMap) {
    let (cx, cy) = center_xy(map);
    let cz = map.origin().z + map.dims()[2] as Real * map.resolution() / 2.0;
    let seed = map
        .voxel_at(Point3::new(cx, cy, cz))
        .expect("map center is inside the map");
    loop {
        let reached = flood_fill(map, &[seed], |c| map.state(c) == CellState::Free);
        let unreached: Vec<usize> = (0..map.len())
            .filter(|&i| map.state_idx(i) == CellState::Free && !reached[i])
            .collect();
        if unreached.is_empty() {
            return;
        }
        // The wall voxel (not on the perimeter) separating reached from
        // unreached free space with the smallest index gets carved, two
        // voxels wide to avoid a pinhole doorway.
        let [nx, ny, _] = map.dims();
        let interior = |c: Coord| {
            c.x > 0 && c.y > 0 && (c.x as usize) < nx - 1 && (c.y as usize) < ny - 1
        };
        let mut breach: Option<usize> = None;
        'scan: for idx in 0..map.len() {
            if map.state_idx(idx) != CellState::Occupied || !interior(map.coord(idx)) {
                continue;
            }
            let c = map.coord(idx);
            let mut touches_reached = false;
            let mut touches_unreached = false;
            for (dx, dy) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                let n = c.offset(dx, dy, 0);
                if !map.in_bounds(n) || map.state(n) != CellState::Free {
                    continue;
                }
                let ni = map.index(n);
                if reached[ni] {
                    touches_reached = true;
                } else {
                    touches_unreached = true;
                }
            }
            if touches_reached && touches_unreached {
                breach = Some(idx);
                break 'scan;
            }
        }
        match breach {
            Some(idx) => {
                let c = map.coord(idx);
                carve_column(map, [c.x, c.y], [c.x + 1, c.y]);
                carve_column(map, [c.x, c.y], [c.x, c.y + 1]);
            }
            None => {
                // No single wall voxel separates the components (thick
                // walls): solidify the unreachable remainder instead.
                for idx in unreached {
                    let c = map.coord(idx);
                    map.set_state_raw(c, CellState::Occupied);
                }
                return;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FAMILIES: [Family; 3] = [Family::Cubicle, Family::OpenPlan, Family::Maze];

    #[test]
    fn generated_maps_are_deterministic_per_seed() {
        for family in FAMILIES {
            let a = generate(family, [20.0, 20.0, 2.0], 0.5, 9);
            let b = generate(family, [20.0, 20.0, 2.0], 0.5, 9);
            assert_eq!(a, b, "{family:?} not deterministic");
            let c = generate(family, [20.0, 20.0, 2.0], 0.5, 10);
            assert_ne!(a, c, "{family:?} ignores the seed");
        }
    }

    #[test]
    fn free_space_is_one_component_with_free_center() {
        for family in FAMILIES {
            for seed in 0..6 {
                let map = generate(family, [24.0, 24.0, 2.0], 0.5, seed);
                let (cx, cy) = center_xy(&map);
                let center = map
                    .voxel_at(Point3::new(cx, cy, map.resolution()))
                    .unwrap();
                assert_eq!(
                    map.state(center),
                    CellState::Free,
                    "{family:?} seed {seed}: center blocked"
                );
                let reached = flood_fill(&map, &[center], |c| map.state(c) == CellState::Free);
                let free_total =
                    (0..map.len()).filter(|&i| map.state_idx(i) == CellState::Free).count();
                let free_reached = reached.iter().filter(|&&r| r).count();
                assert_eq!(
                    free_reached, free_total,
                    "{family:?} seed {seed}: {} of {} free voxels reachable",
                    free_reached, free_total
                );
            }
        }
    }

    #[test]
    fn maps_have_walls_and_rooms() {
        for family in FAMILIES {
            let map = generate(family, [24.0, 24.0, 2.0], 0.5, 1);
            let occupied =
                (0..map.len()).filter(|&i| map.state_idx(i) == CellState::Occupied).count();
            let interior_occupied = occupied as i64
                - 2 * (map.dims()[0] as i64 + map.dims()[1] as i64 - 2) * map.dims()[2] as i64;
            assert!(
                interior_occupied > 0,
                "{family:?} has no structure beyond the perimeter"
            );
            assert!(
                occupied * 2 < map.len(),
                "{family:?} is mostly wall: {occupied}/{}",
                map.len()
            );
        }
    }

    #[test]
    fn ground_truth_has_no_unknown_cells() {
        for family in FAMILIES {
            let map = generate(family, [16.0, 16.0, 1.5], 0.5, 3);
            assert_eq!(map.unknown_count(), 0);
        }
    }
}
