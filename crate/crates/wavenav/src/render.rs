//! Raster renders of runs and plans (PPM/PGM, header-only formats).

use crate::grid::{CSpaceGrid, Cell, OccupancyGrid};
use crate::pgm;
use crate::plan::MotionPlan;
use crate::sim::{DynamicEntity, Pose};

const WHITE: [u8; 3] = [255, 255, 255];
const BLACK: [u8; 3] = [0, 0, 0];
const BLUE: [u8; 3] = [40, 90, 230];
const GREEN: [u8; 3] = [40, 170, 60];
const ORANGE: [u8; 3] = [240, 150, 30];
const MAGENTA: [u8; 3] = [220, 40, 200];

struct Canvas {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Canvas {
    fn new(width: usize, height: usize) -> Self {
        Canvas {
            width,
            height,
            pixels: vec![255; width * height * 3],
        }
    }

    fn put(&mut self, c: Cell, color: [u8; 3]) {
        // image row 0 = top = highest y
        let row = self.height - 1 - c.y;
        let i = (row * self.width + c.x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&color);
    }

    fn put_world(&mut self, grid: &OccupancyGrid, x: f64, y: f64, color: [u8; 3]) {
        if let Ok(c) = grid.spec.world_to_cell(x, y) {
            self.put(c, color);
        }
    }

    fn disc(&mut self, grid: &OccupancyGrid, x: f64, y: f64, radius: f64, color: [u8; 3]) {
        let spec = grid.spec;
        let r = (radius / spec.resolution).ceil() as i64;
        if let Ok(center) = spec.world_to_cell(x, y) {
            for dy in -r..=r {
                for dx in -r..=r {
                    let (cx, cy) = (center.x as i64 + dx, center.y as i64 + dy);
                    if cx < 0
                        || cy < 0
                        || cx >= spec.width_cells as i64
                        || cy >= spec.height_cells as i64
                    {
                        continue;
                    }
                    let c = Cell::new(cx as usize, cy as usize);
                    let (wx, wy) = spec.cell_to_world(c);
                    if ((wx - x).powi(2) + (wy - y).powi(2)).sqrt() <= radius {
                        self.put(c, color);
                    }
                }
            }
        }
    }
}

/// Renders one simulation frame: truth walls black, mapped confidence in
/// red shades, planned path blue, trail green, entities orange, goal magenta.
pub fn render_frame(
    truth: &OccupancyGrid,
    belief: &OccupancyGrid,
    plan: Option<&MotionPlan>,
    trail: &[(f64, f64)],
    entities: &[DynamicEntity],
    robot: &Pose,
    robot_radius: f64,
    goal: (f64, f64),
) -> Vec<u8> {
    let spec = truth.spec;
    let mut canvas = Canvas::new(spec.width_cells, spec.height_cells);
    for c in spec.cells() {
        if truth.is_wall(c) {
            canvas.put(c, BLACK);
        } else {
            let conf = belief.confidence(c);
            if conf > 0.0 {
                let frac = (conf / belief.occupancy_threshold).min(1.0);
                let fade = 255 - (frac * 200.0) as u8;
                canvas.put(c, [255, fade, fade]);
            } else {
                canvas.put(c, WHITE);
            }
        }
    }
    if let Some(plan) = plan {
        for &c in &plan.cells {
            canvas.put(c, BLUE);
        }
    }
    for &(x, y) in trail {
        canvas.put_world(truth, x, y, GREEN);
    }
    for e in entities {
        canvas.disc(truth, e.pose.x, e.pose.y, e.radius, ORANGE);
    }
    canvas.disc(truth, robot.x, robot.y, robot_radius, [20, 110, 30]);
    canvas.put_world(truth, goal.0, goal.1, MAGENTA);
    pgm::write_ppm(spec.width_cells, spec.height_cells, &canvas.pixels)
}

/// Renders a planned path over the map: walls black, inflated cells gray,
/// path cells dark.
pub fn render_plan_pgm(map: &OccupancyGrid, cspace: &CSpaceGrid, plan: &MotionPlan) -> Vec<u8> {
    let spec = map.spec;
    let mut pixels = vec![255u8; spec.cell_count()];
    for c in spec.cells() {
        let img_i = (spec.height_cells - 1 - c.y) * spec.width_cells + c.x;
        pixels[img_i] = if map.is_occupied(c) {
            0
        } else if cspace.is_blocked(c) {
            190
        } else {
            255
        };
    }
    for &c in &plan.cells {
        let img_i = (spec.height_cells - 1 - c.y) * spec.width_cells + c.x;
        pixels[img_i] = 90;
    }
    pgm::write_pgm(
        spec.width_cells,
        spec.height_cells,
        &pixels,
        "plan: wall=0, path=90, inflated=190, free=255",
    )
}
