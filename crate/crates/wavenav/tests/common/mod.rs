//! Shared helpers for the integration suites: map builders and an
//! independent shortest-path oracle.

#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fs;
use std::path::{Path, PathBuf};

use wavenav::grid::{CSpaceGrid, Cell, GridSpec, OccupancyGrid};
use wavenav::pgm;
use wavenav::wavefront::{Metric, UNREACHED};

/// Builds PGM map bytes from a wall predicate in grid coordinates
/// (x east, y north; y grows away from image row 0).
pub fn map_bytes(width: usize, height: usize, wall: impl Fn(usize, usize) -> bool) -> Vec<u8> {
    let mut pixels = vec![255u8; width * height];
    for y in 0..height {
        for x in 0..width {
            if wall(x, y) {
                pixels[(height - 1 - y) * width + x] = 0;
            }
        }
    }
    pgm::write_pgm(width, height, &pixels, "")
}

pub fn load_map(bytes: &[u8], resolution: f64) -> OccupancyGrid {
    OccupancyGrid::load_map(bytes, resolution, 7.0).expect("valid map")
}

pub fn write_map(dir: &Path, name: &str, bytes: &[u8]) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, bytes).expect("write map");
    path
}

/// Plain binary-heap Dijkstra over the same move set, written independently
/// of the propagation code.
pub fn dijkstra_oracle(cspace: &CSpaceGrid, source: Cell, metric: Metric) -> Vec<u32> {
    let spec = cspace.spec;
    let (w, h) = (spec.width_cells as i64, spec.height_cells as i64);
    let mut dist = vec![UNREACHED; spec.cell_count()];
    let idx = |x: i64, y: i64| (y * w + x) as usize;
    let moves = metric.moves();
    let mut heap = BinaryHeap::new();
    dist[idx(source.x as i64, source.y as i64)] = 0;
    heap.push(Reverse((0u32, source.x as i64, source.y as i64)));
    while let Some(Reverse((d, x, y))) = heap.pop() {
        if d > dist[idx(x, y)] {
            continue;
        }
        for &(dx, dy, cost) in &moves {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= w || ny >= h {
                continue;
            }
            if cspace.is_blocked(Cell::new(nx as usize, ny as usize)) {
                continue;
            }
            let nd = d + cost;
            if nd < dist[idx(nx, ny)] {
                dist[idx(nx, ny)] = nd;
                heap.push(Reverse((nd, nx, ny)));
            }
        }
    }
    dist
}

/// Random blocked grid with the source kept free.
pub fn random_cspace(
    width: usize,
    height: usize,
    blockage: f64,
    source: Cell,
    rng: &mut impl rand::Rng,
) -> CSpaceGrid {
    let spec = GridSpec::new(width, height, 0.1);
    let blocked: Vec<bool> = spec
        .cells()
        .map(|c| c != source && rng.random::<f64>() < blockage)
        .collect();
    CSpaceGrid::from_blocked(spec, blocked)
}
