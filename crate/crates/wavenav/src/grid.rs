//! Occupancy grid with immutable walls, evidence-counted objects, ageing and
//! configuration-space inflation.
//!
//! Walls come from the map file and never change. Objects accumulate a
//! per-cell confidence count from laser detections; a cell counts as
//! object-occupied once its confidence reaches the occupancy threshold.
//! Ageing subtracts a fixed amount per control cycle so stale detections fade.

use thiserror::Error;

use crate::laser::LaserScan;
use crate::pgm::{self, PgmError};
use crate::sim::Pose;

/// Confidence saturates at this multiple of the occupancy threshold so
/// long-observed objects still fade in bounded time.
pub const CONFIDENCE_CAP_FACTOR: f64 = 4.0;

/// Grid cell index. `x` grows east, `y` grows north.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub fn new(x: usize, y: usize) -> Self {
        Cell { x, y }
    }
}

/// Geometry shared by all grids of one world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub width_cells: usize,
    pub height_cells: usize,
    /// Meters per cell.
    pub resolution: f64,
    /// World coordinates (m) of the corner of cell (0,0).
    pub origin: (f64, f64),
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error(transparent)]
    Pgm(#[from] PgmError),
    #[error("resolution must be positive, got {0}")]
    BadResolution(f64),
    #[error("occupancy threshold must be positive, got {0}")]
    BadThreshold(f64),
    #[error("point ({0}, {1}) is outside the grid")]
    OutOfBounds(f64, f64),
}

impl GridSpec {
    pub fn new(width_cells: usize, height_cells: usize, resolution: f64) -> Self {
        GridSpec {
            width_cells,
            height_cells,
            resolution,
            origin: (0.0, 0.0),
        }
    }

    pub fn cell_count(&self) -> usize {
        self.width_cells * self.height_cells
    }

    /// World extent (m) covered by the grid.
    pub fn extent(&self) -> (f64, f64) {
        (
            self.width_cells as f64 * self.resolution,
            self.height_cells as f64 * self.resolution,
        )
    }

    pub fn index(&self, c: Cell) -> usize {
        debug_assert!(c.x < self.width_cells && c.y < self.height_cells);
        c.y * self.width_cells + c.x
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.x < self.width_cells && c.y < self.height_cells
    }

    /// Maps a world point to its cell, or `OutOfBounds` if off the map.
    pub fn world_to_cell(&self, x: f64, y: f64) -> Result<Cell, GridError> {
        let cx = (x - self.origin.0) / self.resolution;
        let cy = (y - self.origin.1) / self.resolution;
        if cx < 0.0 || cy < 0.0 {
            return Err(GridError::OutOfBounds(x, y));
        }
        let (cx, cy) = (cx.floor() as usize, cy.floor() as usize);
        if cx >= self.width_cells || cy >= self.height_cells {
            return Err(GridError::OutOfBounds(x, y));
        }
        Ok(Cell::new(cx, cy))
    }

    /// World coordinates of the center of `c`.
    pub fn cell_to_world(&self, c: Cell) -> (f64, f64) {
        (
            self.origin.0 + (c.x as f64 + 0.5) * self.resolution,
            self.origin.1 + (c.y as f64 + 0.5) * self.resolution,
        )
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height_cells)
            .flat_map(move |y| (0..self.width_cells).map(move |x| Cell::new(x, y)))
    }
}

/// Occupancy grid: immutable walls plus per-cell object confidence.
#[derive(Debug, Clone)]
pub struct OccupancyGrid {
    pub spec: GridSpec,
    wall: Vec<bool>,
    confidence: Vec<f64>,
    pub occupancy_threshold: f64,
}

impl OccupancyGrid {
    /// Builds an all-free grid with no walls.
    pub fn empty(spec: GridSpec, occupancy_threshold: f64) -> Result<Self, GridError> {
        if spec.resolution <= 0.0 {
            return Err(GridError::BadResolution(spec.resolution));
        }
        if occupancy_threshold <= 0.0 {
            return Err(GridError::BadThreshold(occupancy_threshold));
        }
        Ok(OccupancyGrid {
            spec,
            wall: vec![false; spec.cell_count()],
            confidence: vec![0.0; spec.cell_count()],
            occupancy_threshold,
        })
    }

    /// Loads a PGM map. Pixel values below 128 (scaled to maxval 255) become
    /// walls. Image row 0 is the top of the map, i.e. the highest `y` row.
    pub fn load_map(bytes: &[u8], resolution: f64, threshold: f64) -> Result<Self, GridError> {
        let img = pgm::parse_pgm(bytes)?;
        let spec = GridSpec::new(img.width, img.height, resolution);
        let mut grid = Self::empty(spec, threshold)?;
        for y in 0..img.height {
            let row = img.height - 1 - y; // image rows are top-down
            for x in 0..img.width {
                let v = img.pixels[row * img.width + x] as u32 * 255 / img.maxval as u32;
                if v < 128 {
                    grid.wall[y * img.width + x] = true;
                }
            }
        }
        Ok(grid)
    }

    pub fn is_wall(&self, c: Cell) -> bool {
        self.wall[self.spec.index(c)]
    }

    pub fn confidence(&self, c: Cell) -> f64 {
        self.confidence[self.spec.index(c)]
    }

    /// True when the accumulated confidence reaches the occupancy threshold.
    pub fn is_object_occupied(&self, c: Cell) -> bool {
        self.confidence[self.spec.index(c)] >= self.occupancy_threshold
    }

    /// Wall or confirmed object.
    pub fn is_occupied(&self, c: Cell) -> bool {
        let i = self.spec.index(c);
        self.wall[i] || self.confidence[i] >= self.occupancy_threshold
    }

    fn confidence_cap(&self) -> f64 {
        CONFIDENCE_CAP_FACTOR * self.occupancy_threshold
    }

    /// Increments confidence at each laser hit endpoint within `map_range`.
    /// Wall cells and off-map endpoints are skipped.
    pub fn mark_detections(&mut self, pose: &Pose, scan: &LaserScan, map_range: f64) {
        let cap = self.confidence_cap();
        for beam in &scan.beams {
            if !beam.hit || beam.range > map_range {
                continue;
            }
            let angle = pose.theta + beam.bearing;
            let hx = pose.x + beam.range * angle.cos();
            let hy = pose.y + beam.range * angle.sin();
            if let Ok(c) = self.spec.world_to_cell(hx, hy) {
                let i = self.spec.index(c);
                if !self.wall[i] {
                    self.confidence[i] = (self.confidence[i] + 1.0).min(cap);
                }
            }
        }
    }

    /// Subtracts `aging_factor` from every non-wall cell, clamping at zero.
    pub fn age_objects(&mut self, aging_factor: f64) {
        for (i, conf) in self.confidence.iter_mut().enumerate() {
            if !self.wall[i] {
                *conf = (*conf - aging_factor).max(0.0);
            }
        }
    }

    /// Inflates walls and confirmed objects by `inflation_radius` meters,
    /// measured center-to-center (Euclidean).
    pub fn inflate(&self, inflation_radius: f64) -> CSpaceGrid {
        let spec = self.spec;
        let mut blocked = vec![false; spec.cell_count()];
        // Disc of cell offsets within the radius, stamped over every source.
        let r_cells = inflation_radius / spec.resolution;
        let r_int = r_cells.floor() as i64;
        let r2 = r_cells * r_cells;
        let mut offsets = Vec::new();
        for dy in -r_int..=r_int {
            for dx in -r_int..=r_int {
                if (dx * dx + dy * dy) as f64 <= r2 {
                    offsets.push((dx, dy));
                }
            }
        }
        let (w, h) = (spec.width_cells as i64, spec.height_cells as i64);
        for c in spec.cells() {
            if !self.is_occupied(c) {
                continue;
            }
            for &(dx, dy) in &offsets {
                let (nx, ny) = (c.x as i64 + dx, c.y as i64 + dy);
                if nx >= 0 && ny >= 0 && nx < w && ny < h {
                    blocked[(ny * w + nx) as usize] = true;
                }
            }
        }
        CSpaceGrid { spec, blocked }
    }

    /// Exports the confidence map as a binary PGM: walls black, free cells
    /// scaled from white (confidence 0) down to the threshold mapping noted
    /// in the header comment.
    pub fn export_confidence_pgm(&self) -> Vec<u8> {
        let spec = self.spec;
        let mut pixels = vec![0u8; spec.cell_count()];
        for c in spec.cells() {
            let i = spec.index(c);
            // image row 0 = top = highest y
            let img_i = (spec.height_cells - 1 - c.y) * spec.width_cells + c.x;
            pixels[img_i] = if self.wall[i] {
                0
            } else {
                let frac = (self.confidence[i] / self.occupancy_threshold).min(1.0);
                255 - (frac * 127.0).round() as u8
            };
        }
        pgm::write_pgm(
            spec.width_cells,
            spec.height_cells,
            &pixels,
            &format!(
                "confidence map: wall=0, free=255, confidence scales linearly to 128 at threshold {}",
                self.occupancy_threshold
            ),
        )
    }
}

/// Configuration-space grid: walls and objects inflated by the robot radius
/// plus safety distance, so the robot can be planned for as a point.
#[derive(Debug, Clone)]
pub struct CSpaceGrid {
    pub spec: GridSpec,
    blocked: Vec<bool>,
}

impl CSpaceGrid {
    pub fn from_blocked(spec: GridSpec, blocked: Vec<bool>) -> Self {
        assert_eq!(blocked.len(), spec.cell_count());
        CSpaceGrid { spec, blocked }
    }

    pub fn is_blocked(&self, c: Cell) -> bool {
        self.blocked[self.spec.index(c)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laser::{Beam, LaserScan};

    fn scan_with_hit(bearing: f64, range: f64) -> LaserScan {
        LaserScan {
            beams: vec![Beam {
                bearing,
                range,
                hit: true,
            }],
            max_range: 8.0,
        }
    }

    #[test]
    fn load_all_white_map() {
        let bytes = pgm::write_pgm(100, 100, &vec![255u8; 100 * 100], "");
        let grid = OccupancyGrid::load_map(&bytes, 0.1, 7.0).unwrap();
        assert_eq!(grid.spec.extent(), (10.0, 10.0));
        assert!(grid.spec.cells().all(|c| !grid.is_wall(c)));
        assert!(grid.spec.cells().all(|c| grid.confidence(c) == 0.0));
    }

    #[test]
    fn zero_pixel_is_wall() {
        let mut pixels = vec![255u8; 9];
        pixels[4] = 0; // image center
        let bytes = pgm::write_pgm(3, 3, &pixels, "");
        let grid = OccupancyGrid::load_map(&bytes, 0.1, 7.0).unwrap();
        assert!(grid.is_wall(Cell::new(1, 1)));
        assert_eq!(grid.spec.cells().filter(|&c| grid.is_wall(c)).count(), 1);
    }

    #[test]
    fn map_extent_500() {
        let bytes = pgm::write_pgm(500, 500, &vec![255u8; 500 * 500], "");
        let grid = OccupancyGrid::load_map(&bytes, 0.02, 7.0).unwrap();
        assert_eq!(grid.spec.extent(), (10.0, 10.0));
    }

    #[test]
    fn world_to_cell_basic() {
        let spec = GridSpec::new(100, 100, 0.1);
        assert_eq!(spec.world_to_cell(0.05, 0.05).unwrap(), Cell::new(0, 0));
        let (ex, ey) = spec.extent();
        assert!(spec.world_to_cell(ex + 1e-9, ey + 1e-9).is_err());
        assert!(spec.world_to_cell(-0.01, 0.5).is_err());
    }

    #[test]
    fn cell_world_round_trip() {
        let spec = GridSpec::new(37, 21, 0.05);
        for c in [Cell::new(0, 0), Cell::new(36, 20), Cell::new(12, 7)] {
            let (x, y) = spec.cell_to_world(c);
            assert_eq!(spec.world_to_cell(x, y).unwrap(), c);
        }
    }

    #[test]
    fn mark_increments_confidence() {
        let spec = GridSpec::new(50, 50, 0.1);
        let mut grid = OccupancyGrid::empty(spec, 7.0).unwrap();
        let pose = Pose::new(1.0, 1.0, 0.0);
        grid.mark_detections(&pose, &scan_with_hit(0.0, 1.0), 8.0);
        let c = spec.world_to_cell(2.0, 1.0).unwrap();
        assert_eq!(grid.confidence(c), 1.0);
    }

    #[test]
    fn threshold_crossing_after_seven_hits() {
        let spec = GridSpec::new(50, 50, 0.1);
        let mut grid = OccupancyGrid::empty(spec, 7.0).unwrap();
        let pose = Pose::new(1.0, 1.0, 0.0);
        let scan = scan_with_hit(0.0, 1.0);
        let c = spec.world_to_cell(2.0, 1.0).unwrap();
        for _ in 0..6 {
            grid.mark_detections(&pose, &scan, 8.0);
            assert!(!grid.is_object_occupied(c));
        }
        grid.mark_detections(&pose, &scan, 8.0);
        assert!(grid.is_object_occupied(c));
    }

    #[test]
    fn beam_beyond_map_range_ignored() {
        let spec = GridSpec::new(50, 50, 0.1);
        let mut grid = OccupancyGrid::empty(spec, 7.0).unwrap();
        let pose = Pose::new(1.0, 1.0, 0.0);
        grid.mark_detections(&pose, &scan_with_hit(0.0, 3.0), 2.0);
        assert!(spec.cells().all(|c| grid.confidence(c) == 0.0));
    }

    #[test]
    fn ageing_subtracts_and_clamps() {
        let spec = GridSpec::new(10, 10, 0.1);
        let mut grid = OccupancyGrid::empty(spec, 7.0).unwrap();
        let pose = Pose::new(0.55, 0.55, 0.0);
        let scan = scan_with_hit(0.0, 0.3);
        for _ in 0..7 {
            grid.mark_detections(&pose, &scan, 8.0);
        }
        let c = spec.world_to_cell(0.85, 0.55).unwrap();
        assert_eq!(grid.confidence(c), 7.0);
        grid.age_objects(0.14);
        assert!((grid.confidence(c) - 6.86).abs() < 1e-12);

        // clamp at zero
        let mut grid2 = OccupancyGrid::empty(spec, 7.0).unwrap();
        grid2.mark_detections(&pose, &scan, 8.0);
        for _ in 0..12 {
            grid2.age_objects(0.1);
        }
        assert_eq!(grid2.confidence(c), 0.0);
    }

    #[test]
    fn walls_are_not_aged() {
        let mut pixels = vec![255u8; 25];
        pixels[12] = 0;
        let bytes = pgm::write_pgm(5, 5, &pixels, "");
        let mut grid = OccupancyGrid::load_map(&bytes, 0.1, 7.0).unwrap();
        grid.age_objects(1.0);
        assert!(grid.is_wall(Cell::new(2, 2)));
        assert!(grid.is_occupied(Cell::new(2, 2)));
    }

    #[test]
    fn inflate_radius_zero_is_identity() {
        let mut pixels = vec![255u8; 64];
        pixels[9] = 0;
        pixels[30] = 0;
        let bytes = pgm::write_pgm(8, 8, &pixels, "");
        let grid = OccupancyGrid::load_map(&bytes, 0.1, 7.0).unwrap();
        let cspace = grid.inflate(0.0);
        for c in grid.spec.cells() {
            assert_eq!(cspace.is_blocked(c), grid.is_occupied(c));
        }
    }

    #[test]
    fn inflate_single_cell_disc() {
        let spec = GridSpec::new(11, 11, 0.1);
        let mut grid = OccupancyGrid::empty(spec, 1.0).unwrap();
        let pose = Pose::new(0.05, 0.05, 0.0);
        // put a confirmed object at the center cell (5,5)
        let scan = scan_with_hit(std::f64::consts::FRAC_PI_4, 0.5 * std::f64::consts::SQRT_2);
        grid.mark_detections(&pose, &scan, 8.0);
        assert!(grid.is_object_occupied(Cell::new(5, 5)));
        let cspace = grid.inflate(0.2);
        for c in spec.cells() {
            let dx = c.x as f64 - 5.0;
            let dy = c.y as f64 - 5.0;
            let expect = (dx * dx + dy * dy).sqrt() <= 2.0;
            assert_eq!(cspace.is_blocked(c), expect, "cell {c:?}");
        }
    }

    #[test]
    fn narrow_gap_closed_by_inflation() {
        // vertical wall with a 3-cell gap; inflation radius 2 cells closes it
        let mut pixels = vec![255u8; 256];
        for y in 0..16 {
            if !(6..9).contains(&y) {
                pixels[y * 16 + 8] = 0;
            }
        }
        let bytes = pgm::write_pgm(16, 16, &pixels, "");
        let grid = OccupancyGrid::load_map(&bytes, 0.1, 7.0).unwrap();
        let cspace = grid.inflate(0.2);
        // gap narrower than 2*radius: no unblocked crossing in the wall column
        assert!((0..16).all(|y| cspace.is_blocked(Cell::new(8, y))));
    }
}
