//! Plain-text ground-truth map format.
//!
//! One z-slice per block, blocks separated by blank lines. Within a block,
//! line `y` holds the row of characters for that y index and character `x`
//! the voxel at that x index: `#` occupied, `.` free. Ground-truth maps
//! have no unknown cells. Lines starting with `;` are comments.

use super::{CellState, Coord, VoxelError, VoxelMap};
use crate::{Point3, Real};

pub fn parse_grid_text(
    text: &str,
    origin: Point3,
    resolution: Real,
) -> Result<VoxelMap, VoxelError> {
    let mut slices: Vec<Vec<&str>> = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines() {
        let trimmed = line.trim_end();
        if trimmed.starts_with(';') {
            continue;
        }
        if trimmed.is_empty() {
            if !current.is_empty() {
                slices.push(std::mem::take(&mut current));
            }
        } else {
            current.push(trimmed);
        }
    }
    if !current.is_empty() {
        slices.push(current);
    }
    if slices.is_empty() {
        return Err(VoxelError::BadMapFile("no grid rows".into()));
    }

    let ny = slices[0].len();
    let nx = slices[0][0].chars().count();
    for (zi, slice) in slices.iter().enumerate() {
        if slice.len() != ny {
            return Err(VoxelError::BadMapFile(format!(
                "slice {zi} has {} rows, expected {ny}",
                slice.len()
            )));
        }
        for (yi, row) in slice.iter().enumerate() {
            if row.chars().count() != nx {
                return Err(VoxelError::BadMapFile(format!(
                    "slice {zi} row {yi} has {} cols, expected {nx}",
                    row.chars().count()
                )));
            }
        }
    }

    let mut map = VoxelMap::new(origin, resolution, [nx, ny, slices.len()]);
    for (zi, slice) in slices.iter().enumerate() {
        for (yi, row) in slice.iter().enumerate() {
            for (xi, ch) in row.chars().enumerate() {
                let state = match ch {
                    '#' => CellState::Occupied,
                    '.' => CellState::Free,
                    other => {
                        return Err(VoxelError::BadMapFile(format!(
                            "bad character {other:?} at x={xi} y={yi} z={zi}"
                        )))
                    }
                };
                map.set_state_raw(Coord::new(xi as i32, yi as i32, zi as i32), state);
            }
        }
    }
    map.recompute_frontiers();
    Ok(map)
}

/// Render a map in the same text format. Unknown cells print as `?`, which
/// `parse_grid_text` rejects; use only for fully-known maps or debugging.
pub fn render_grid_text(map: &VoxelMap) -> String {
    let [nx, ny, nz] = map.dims();
    let mut out = String::with_capacity((nx + 1) * ny * nz + nz);
    for z in 0..nz {
        if z > 0 {
            out.push('\n');
        }
        for y in 0..ny {
            for x in 0..nx {
                out.push(match map.state(Coord::new(x as i32, y as i32, z as i32)) {
                    CellState::Occupied => '#',
                    CellState::Free => '.',
                    CellState::Unknown => '?',
                });
            }
            out.push('\n');
        }
    }
    out
}
