//! Path extraction from a wavefront field, compression into heading/distance
//! steps, and smoothing of short steps into a waypointed motion plan.

use thiserror::Error;

use crate::grid::{CSpaceGrid, Cell, GridSpec};
use crate::wavefront::{self, Metric, WavefrontError, WavefrontField};

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// One of the eight lattice directions, multiples of 45 degrees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Heading {
    North,
    NorthEast,
    East,
    SouthEast,
    South,
    SouthWest,
    West,
    NorthWest,
}

impl Heading {
    pub fn from_delta(dx: i64, dy: i64) -> Option<Heading> {
        match (dx, dy) {
            (0, 1) => Some(Heading::North),
            (1, 1) => Some(Heading::NorthEast),
            (1, 0) => Some(Heading::East),
            (1, -1) => Some(Heading::SouthEast),
            (0, -1) => Some(Heading::South),
            (-1, -1) => Some(Heading::SouthWest),
            (-1, 0) => Some(Heading::West),
            (-1, 1) => Some(Heading::NorthWest),
            _ => None,
        }
    }

    pub fn delta(&self) -> (i64, i64) {
        match self {
            Heading::North => (0, 1),
            Heading::NorthEast => (1, 1),
            Heading::East => (1, 0),
            Heading::SouthEast => (1, -1),
            Heading::South => (0, -1),
            Heading::SouthWest => (-1, -1),
            Heading::West => (-1, 0),
            Heading::NorthWest => (-1, 1),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        let (dx, dy) = self.delta();
        dx != 0 && dy != 0
    }

    /// World angle in radians: East = 0, counter-clockwise positive.
    pub fn angle(&self) -> f64 {
        let (dx, dy) = self.delta();
        (dy as f64).atan2(dx as f64)
    }
}

/// A maximal straight run of the cell path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionStep {
    pub heading: Heading,
    /// Meters.
    pub length: f64,
    pub end_cell: Cell,
}

/// A straight segment of the smoothed plan. After short-step absorption the
/// angle is no longer restricted to the 45-degree lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanStep {
    /// World angle in radians, East = 0, counter-clockwise positive.
    pub angle: f64,
    /// Meters.
    pub length: f64,
    pub end_cell: Cell,
}

/// Smoothed, waypointed plan from start to goal.
#[derive(Debug, Clone)]
pub struct MotionPlan {
    /// Raw cell path, start first.
    pub cells: Vec<Cell>,
    pub steps: Vec<PlanStep>,
    /// End cell of each step; these condition the avoidance rule tables.
    pub waypoints: Vec<Cell>,
}

impl MotionPlan {
    pub fn length(&self) -> f64 {
        self.steps.iter().map(|s| s.length).sum()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("no path from start to goal")]
    NoPath,
    #[error("start cell {0:?} is blocked")]
    StartBlocked(Cell),
    #[error("goal cell {0:?} is blocked")]
    GoalBlocked(Cell),
    #[error("cell {0:?} is outside the grid")]
    OutOfBounds(Cell),
    #[error("cells {0:?} and {1:?} are not 8-neighbors")]
    NonAdjacentCells(Cell, Cell),
}

impl From<WavefrontError> for PlanError {
    fn from(e: WavefrontError) -> Self {
        match e {
            WavefrontError::SourceBlocked(c) => PlanError::GoalBlocked(c),
            WavefrontError::SourceOutOfBounds(c) => PlanError::OutOfBounds(c),
        }
    }
}

/// Neighbor preference for descent tie-breaking: clockwise starting at North.
const CLOCKWISE: [Heading; 8] = [
    Heading::North,
    Heading::NorthEast,
    Heading::East,
    Heading::SouthEast,
    Heading::South,
    Heading::SouthWest,
    Heading::West,
    Heading::NorthWest,
];

/// Traces the steepest descent of the field from `start` to its source.
///
/// Each move goes to a neighbor whose value plus the edge weight equals the
/// current value, so accumulated edge weights along the path equal
/// `value(start)`. Ties are broken by (in order) smaller neighbor value,
/// smaller Euclidean distance to the source, continuing the previous move's
/// heading, and finally clockwise order from North.
pub fn extract_path(field: &WavefrontField, start: Cell) -> Result<Vec<Cell>, PlanError> {
    let spec = field.spec;
    if !spec.contains(start) {
        return Err(PlanError::OutOfBounds(start));
    }
    if field.is_blocked(start) {
        return Err(PlanError::StartBlocked(start));
    }
    if !field.is_reached(start) {
        return Err(PlanError::NoPath);
    }
    let weight_of = |h: Heading| -> u32 {
        match field.metric {
            Metric::Manhattan => 1,
            Metric::Chamfer {
                orthogonal,
                diagonal,
            } => {
                if h.is_diagonal() {
                    diagonal
                } else {
                    orthogonal
                }
            }
        }
    };
    let src = field.source;
    let mut path = vec![start];
    let mut current = start;
    let mut prev_heading: Option<Heading> = None;
    while current != src {
        let cur_val = field.value(current);
        let mut best: Option<(Cell, Heading, u32, i64)> = None;
        for &h in &CLOCKWISE {
            if field.metric == Metric::Manhattan && h.is_diagonal() {
                continue;
            }
            let (dx, dy) = h.delta();
            let (nx, ny) = (current.x as i64 + dx, current.y as i64 + dy);
            if nx < 0 || ny < 0 || nx >= spec.width_cells as i64 || ny >= spec.height_cells as i64 {
                continue;
            }
            let n = Cell::new(nx as usize, ny as usize);
            if !field.is_reached(n) {
                continue;
            }
            let nval = field.value(n);
            // exact-descent predecessors only
            if nval.checked_add(weight_of(h)) != Some(cur_val) {
                continue;
            }
            let ddx = nx - src.x as i64;
            let ddy = ny - src.y as i64;
            let d2 = ddx * ddx + ddy * ddy;
            let better = match best {
                None => true,
                Some((_, bh, bval, bd2)) => {
                    (nval, d2, prev_heading != Some(h)) < (bval, bd2, prev_heading != Some(bh))
                }
            };
            if better {
                best = Some((n, h, nval, d2));
            }
        }
        let (next, h, _, _) = best.expect("reached non-source cell must have a descent neighbor");
        path.push(next);
        prev_heading = Some(h);
        current = next;
    }
    Ok(path)
}

/// Groups consecutive cells heading in the same direction into steps.
pub fn compress(cells: &[Cell], resolution: f64) -> Result<Vec<MotionStep>, PlanError> {
    let mut steps: Vec<MotionStep> = Vec::new();
    for pair in cells.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let heading = Heading::from_delta(b.x as i64 - a.x as i64, b.y as i64 - a.y as i64)
            .ok_or(PlanError::NonAdjacentCells(a, b))?;
        let move_len = if heading.is_diagonal() {
            resolution * SQRT2
        } else {
            resolution
        };
        match steps.last_mut() {
            Some(step) if step.heading == heading => {
                step.length += move_len;
                step.end_cell = b;
            }
            _ => steps.push(MotionStep {
                heading,
                length: move_len,
                end_cell: b,
            }),
        }
    }
    Ok(steps)
}

/// Drops steps shorter than `min_step_length` and re-aims the surviving
/// waypoints so the final endpoint is unchanged. The result is expressed as
/// straight segments between surviving step endpoints.
pub fn smooth(
    start: Cell,
    steps: &[MotionStep],
    min_step_length: f64,
    spec: &GridSpec,
) -> Vec<PlanStep> {
    if steps.is_empty() {
        return Vec::new();
    }
    let last = steps.len() - 1;
    let kept: Vec<Cell> = steps
        .iter()
        .enumerate()
        .filter(|&(i, s)| s.length >= min_step_length || i == last)
        .map(|(_, s)| s.end_cell)
        .collect();
    let mut out = Vec::with_capacity(kept.len());
    let mut prev = start;
    for &end in &kept {
        if end == prev {
            continue;
        }
        let (px, py) = spec.cell_to_world(prev);
        let (ex, ey) = spec.cell_to_world(end);
        let (dx, dy) = (ex - px, ey - py);
        out.push(PlanStep {
            angle: dy.atan2(dx),
            length: (dx * dx + dy * dy).sqrt(),
            end_cell: end,
        });
        prev = end;
    }
    out
}

/// Full planning pipeline: propagate from the goal, descend from the start
/// (so the path comes out in travel order), compress, smooth, attach
/// waypoints.
pub fn make_plan(
    cspace: &CSpaceGrid,
    start: Cell,
    goal: Cell,
    metric: Metric,
    min_step_length: f64,
) -> Result<MotionPlan, PlanError> {
    let spec = cspace.spec;
    if !spec.contains(start) {
        return Err(PlanError::OutOfBounds(start));
    }
    if cspace.is_blocked(start) {
        return Err(PlanError::StartBlocked(start));
    }
    let field = wavefront::propagate(cspace, goal, metric)?;
    let cells = extract_path(&field, start)?;
    let compressed = compress(&cells, spec.resolution)?;
    let steps = smooth(start, &compressed, min_step_length, &spec);
    let waypoints = steps.iter().map(|s| s.end_cell).collect();
    Ok(MotionPlan {
        cells,
        steps,
        waypoints,
    })
}
