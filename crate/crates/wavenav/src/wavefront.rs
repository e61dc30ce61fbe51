//! Wavefront propagation over the configuration-space grid.
//!
//! Each reachable cell receives the cost of the shortest grid path from the
//! source under the chosen metric: Manhattan expands only the four adjacent
//! cells with unit increments, Chamfer also expands diagonals with separate
//! orthogonal/diagonal increments.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{CSpaceGrid, Cell, GridSpec};

/// Sentinel for blocked or disconnected cells, greater than any reachable cost.
pub const UNREACHED: u32 = u32::MAX;

/// Grid distance metric used during propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Metric {
    /// 4-neighborhood, unit increments.
    Manhattan,
    /// 8-neighborhood with separate orthogonal and diagonal increments.
    Chamfer { orthogonal: u32, diagonal: u32 },
}

impl Metric {
    pub fn chamfer_unit() -> Self {
        Metric::Chamfer {
            orthogonal: 1,
            diagonal: 1,
        }
    }

    /// Neighbor offsets with their edge weights.
    pub fn moves(&self) -> Vec<(i64, i64, u32)> {
        match *self {
            Metric::Manhattan => vec![(1, 0, 1), (-1, 0, 1), (0, 1, 1), (0, -1, 1)],
            Metric::Chamfer {
                orthogonal: o,
                diagonal: d,
            } => vec![
                (1, 0, o),
                (-1, 0, o),
                (0, 1, o),
                (0, -1, o),
                (1, 1, d),
                (1, -1, d),
                (-1, 1, d),
                (-1, -1, d),
            ],
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WavefrontError {
    #[error("source cell {0:?} is blocked")]
    SourceBlocked(Cell),
    #[error("source cell {0:?} is outside the grid")]
    SourceOutOfBounds(Cell),
}

/// Per-cell propagation cost from a source cell.
#[derive(Debug, Clone)]
pub struct WavefrontField {
    pub spec: GridSpec,
    pub source: Cell,
    pub metric: Metric,
    value: Vec<u32>,
    blocked: Vec<bool>,
}

impl WavefrontField {
    pub fn value(&self, c: Cell) -> u32 {
        self.value[self.spec.index(c)]
    }

    /// Whether the cell was blocked in the grid the field was computed on.
    pub fn is_blocked(&self, c: Cell) -> bool {
        self.blocked[self.spec.index(c)]
    }

    pub fn is_reached(&self, c: Cell) -> bool {
        self.value[self.spec.index(c)] != UNREACHED
    }

    /// Scales reached values into 0..=255 for a PGM debug render.
    pub fn export_pgm(&self) -> Vec<u8> {
        let max = self
            .value
            .iter()
            .filter(|&&v| v != UNREACHED)
            .max()
            .copied()
            .unwrap_or(0)
            .max(1);
        let spec = self.spec;
        let mut pixels = vec![0u8; spec.cell_count()];
        for c in spec.cells() {
            let img_i = (spec.height_cells - 1 - c.y) * spec.width_cells + c.x;
            let v = self.value[spec.index(c)];
            pixels[img_i] = if v == UNREACHED {
                0
            } else {
                255 - (v as u64 * 200 / max as u64) as u8
            };
        }
        crate::pgm::write_pgm(
            spec.width_cells,
            spec.height_cells,
            &pixels,
            "wavefront field: blocked=0, cost scaled 255 (source) down to 55",
        )
    }
}

/// Propagates wavefronts from `source` across all unblocked cells.
pub fn propagate(
    cspace: &CSpaceGrid,
    source: Cell,
    metric: Metric,
) -> Result<WavefrontField, WavefrontError> {
    let spec = cspace.spec;
    if !spec.contains(source) {
        return Err(WavefrontError::SourceOutOfBounds(source));
    }
    if cspace.is_blocked(source) {
        return Err(WavefrontError::SourceBlocked(source));
    }
    let mut value = vec![UNREACHED; spec.cell_count()];
    let moves = metric.moves();
    let (w, h) = (spec.width_cells as i64, spec.height_cells as i64);
    // Dijkstra; with unit weights this degenerates to plain wavefront rings.
    let mut heap = BinaryHeap::new();
    value[spec.index(source)] = 0;
    heap.push(Reverse((0u32, source.x, source.y)));
    while let Some(Reverse((cost, x, y))) = heap.pop() {
        let idx = y * spec.width_cells + x;
        if cost > value[idx] {
            continue;
        }
        for &(dx, dy, wgt) in &moves {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx < 0 || ny < 0 || nx >= w || ny >= h {
                continue;
            }
            let nc = Cell::new(nx as usize, ny as usize);
            if cspace.is_blocked(nc) {
                continue;
            }
            let ncost = cost + wgt;
            let nidx = spec.index(nc);
            if ncost < value[nidx] {
                value[nidx] = ncost;
                heap.push(Reverse((ncost, nc.x, nc.y)));
            }
        }
    }
    let blocked = spec.cells().map(|c| cspace.is_blocked(c)).collect();
    Ok(WavefrontField {
        spec,
        source,
        metric,
        value,
        blocked,
    })
}
