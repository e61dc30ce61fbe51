//! Simulated 180-degree scanning range finder: grid ray casting against the
//! ground-truth world plus disc intersection for dynamic entities.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::grid::OccupancyGrid;
use crate::sim::{DynamicEntity, Pose};

use std::f64::consts::{FRAC_PI_2, PI};

/// One laser reading. `bearing` is relative to the robot heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Beam {
    pub bearing: f64,
    pub range: f64,
    pub hit: bool,
}

/// A full scan: beams uniformly spaced over [-pi/2, +pi/2].
#[derive(Debug, Clone, PartialEq)]
pub struct LaserScan {
    pub beams: Vec<Beam>,
    pub max_range: f64,
}

/// The true environment the laser sees: a static grid (independent of the
/// map the robot was provided) plus dynamic disc entities.
#[derive(Debug, Clone)]
pub struct GroundTruthWorld {
    pub grid: OccupancyGrid,
    pub entities: Vec<DynamicEntity>,
}

#[derive(Debug, Error)]
pub enum LaserError {
    #[error("pose ({0}, {1}) is outside the world bounds")]
    PoseOutOfBounds(f64, f64),
}

/// Distance along a ray from `(ox, oy)` in direction `angle` to the first
/// wall cell, walking every cell the ray crosses (Amanatides-Woo traversal).
/// Returns `None` when the ray leaves the grid or exceeds `max_range`.
fn cast_ray_grid(
    grid: &OccupancyGrid,
    ox: f64,
    oy: f64,
    angle: f64,
    max_range: f64,
) -> Option<f64> {
    let spec = grid.spec;
    let res = spec.resolution;
    let (dx, dy) = (angle.cos(), angle.sin());
    // grid-frame coordinates in cell units
    let gx = (ox - spec.origin.0) / res;
    let gy = (oy - spec.origin.1) / res;
    let mut cx = gx.floor() as i64;
    let mut cy = gy.floor() as i64;
    let (w, h) = (spec.width_cells as i64, spec.height_cells as i64);

    let step_x: i64 = if dx >= 0.0 { 1 } else { -1 };
    let step_y: i64 = if dy >= 0.0 { 1 } else { -1 };
    // distance in meters along the ray to the next cell boundary per axis
    let mut t_max_x = if dx != 0.0 {
        let next = if dx > 0.0 { cx as f64 + 1.0 } else { cx as f64 };
        (next - gx) * res / dx
    } else {
        f64::INFINITY
    };
    let mut t_max_y = if dy != 0.0 {
        let next = if dy > 0.0 { cy as f64 + 1.0 } else { cy as f64 };
        (next - gy) * res / dy
    } else {
        f64::INFINITY
    };
    let t_delta_x = if dx != 0.0 { res / dx.abs() } else { f64::INFINITY };
    let t_delta_y = if dy != 0.0 { res / dy.abs() } else { f64::INFINITY };

    // The starting cell is not reported; a robot standing inside a wall cell
    // is a scenario error caught elsewhere.
    loop {
        let t;
        if t_max_x < t_max_y {
            t = t_max_x;
            t_max_x += t_delta_x;
            cx += step_x;
        } else {
            t = t_max_y;
            t_max_y += t_delta_y;
            cy += step_y;
        }
        if t > max_range {
            return None;
        }
        if cx < 0 || cy < 0 || cx >= w || cy >= h {
            return None;
        }
        if grid.is_wall(crate::grid::Cell::new(cx as usize, cy as usize)) {
            return Some(t);
        }
    }
}

/// Smallest positive distance along the ray to the surface of `entity`.
fn cast_ray_disc(ox: f64, oy: f64, angle: f64, entity: &DynamicEntity) -> Option<f64> {
    let (dx, dy) = (angle.cos(), angle.sin());
    let (fx, fy) = (ox - entity.pose.x, oy - entity.pose.y);
    // |f + t d|^2 = r^2 with |d| = 1
    let b = fx * dx + fy * dy;
    let c = fx * fx + fy * fy - entity.radius * entity.radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    if t > 0.0 {
        Some(t)
    } else {
        None
    }
}

/// Simulates one scan from `pose`. Beams report the nearest of wall and
/// entity intersections; optional Gaussian range noise is drawn from `rng`.
pub fn simulate_scan(
    world: &GroundTruthWorld,
    pose: &Pose,
    n_beams: usize,
    max_range: f64,
    noise_sd: f64,
    rng: &mut ChaCha8Rng,
) -> Result<LaserScan, LaserError> {
    assert!(n_beams >= 2);
    if world.grid.spec.world_to_cell(pose.x, pose.y).is_err() {
        return Err(LaserError::PoseOutOfBounds(pose.x, pose.y));
    }
    let noise = if noise_sd > 0.0 {
        Some(Normal::new(0.0, noise_sd).expect("valid std dev"))
    } else {
        None
    };
    let mut beams = Vec::with_capacity(n_beams);
    for i in 0..n_beams {
        let bearing = -FRAC_PI_2 + i as f64 * PI / (n_beams - 1) as f64;
        let angle = pose.theta + bearing;
        let mut t_hit = cast_ray_grid(&world.grid, pose.x, pose.y, angle, max_range);
        for e in &world.entities {
            if let Some(te) = cast_ray_disc(pose.x, pose.y, angle, e) {
                if te <= max_range && t_hit.map_or(true, |t| te < t) {
                    t_hit = Some(te);
                }
            }
        }
        let beam = match t_hit {
            Some(t) => {
                let range = match noise {
                    Some(n) => (t + n.sample(rng)).clamp(1e-6, max_range),
                    None => t,
                };
                Beam {
                    bearing,
                    range,
                    hit: true,
                }
            }
            None => {
                // keep the rng stream in lockstep regardless of hits
                if let Some(n) = noise {
                    let _ = n.sample(rng);
                }
                Beam {
                    bearing,
                    range: max_range,
                    hit: false,
                }
            }
        };
        beams.push(beam);
    }
    Ok(LaserScan { beams, max_range })
}
