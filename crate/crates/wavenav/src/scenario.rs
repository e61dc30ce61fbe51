//! Scenario files, the deterministic simulation loop and its artifacts.
//!
//! One 64-bit seed fully determines a run: the laser noise stream and every
//! entity's walk use independent ChaCha8 streams derived from it, and all
//! outputs are written with fixed formatting so identical inputs give
//! byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fuzzy::{FiveSets, ThreeSets};
use crate::grid::{GridError, OccupancyGrid};
use crate::laser::{self, GroundTruthWorld, LaserError};
use crate::nav::{NavConfig, NavController, NavError, NavEvent, StopReason};
use crate::plan::{MotionPlan, PlanError};
use crate::render;
use crate::sim::{self, DynamicEntity, Pose, VelocityCommand};
use crate::wavefront::{self, Metric, WavefrontField};

/// ChaCha8 stream ids derived from the scenario seed.
const STREAM_LASER: u64 = 0;
const STREAM_ENTITY_BASE: u64 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseDef {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub theta: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointDef {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntityDef {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub theta: f64,
    pub radius: f64,
    pub speed: f64,
}

/// Subset of [`NavConfig`] a scenario may override.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigPatch {
    pub resolution: Option<f64>,
    pub robot_radius: Option<f64>,
    pub safety_distance: Option<f64>,
    pub avoidance_range: Option<f64>,
    pub occupancy_threshold: Option<f64>,
    pub aging_factor: Option<f64>,
    pub v_max: Option<f64>,
    pub omega_max: Option<f64>,
    pub epsilon_settle: Option<f64>,
    pub min_step_length: Option<f64>,
    pub goal_tolerance: Option<f64>,
    pub timeout: Option<f64>,
    pub metric: Option<Metric>,
    pub k_omega: Option<f64>,
    pub dt: Option<f64>,
    pub map_range: Option<f64>,
    pub laser_max_range: Option<f64>,
    pub n_beams: Option<usize>,
    pub laser_noise_sd: Option<f64>,
    pub coa_samples: Option<usize>,
    pub angle_sets: Option<FiveSets>,
    pub distance_sets: Option<ThreeSets>,
    pub speed_sets: Option<ThreeSets>,
    pub turn_sets: Option<FiveSets>,
}

impl ConfigPatch {
    pub fn apply(&self, mut cfg: NavConfig) -> NavConfig {
        macro_rules! patch {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field.clone() { cfg.$field = v.into(); })*
            };
        }
        patch!(
            resolution,
            robot_radius,
            safety_distance,
            avoidance_range,
            occupancy_threshold,
            aging_factor,
            v_max,
            omega_max,
            epsilon_settle,
            min_step_length,
            goal_tolerance,
            metric,
            k_omega,
            dt,
            map_range,
            laser_max_range,
            n_beams,
            laser_noise_sd,
            coa_samples
        );
        if self.timeout.is_some() {
            cfg.timeout = self.timeout;
        }
        if self.resolution.is_some() && self.goal_tolerance.is_none() {
            cfg.goal_tolerance = 1.5 * cfg.resolution;
        }
        cfg.angle_sets = self.angle_sets.clone().or(cfg.angle_sets);
        cfg.distance_sets = self.distance_sets.clone().or(cfg.distance_sets);
        cfg.speed_sets = self.speed_sets.clone().or(cfg.speed_sets);
        cfg.turn_sets = self.turn_sets.clone().or(cfg.turn_sets);
        cfg
    }
}

/// A parsed scenario. Map paths are resolved relative to `base_dir`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub ground_truth_map: String,
    /// Map handed to the controller; the literal "empty" means an all-free
    /// grid of the ground truth's dimensions.
    pub provided_map: String,
    pub start: PoseDef,
    pub goal: PointDef,
    #[serde(default)]
    pub entities: Vec<EntityDef>,
    #[serde(default)]
    pub config: ConfigPatch,
    pub seed: u64,
    /// Hard cap on simulated time, independent of the controller timeout (s).
    #[serde(default)]
    pub max_sim_time: Option<f64>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("map mismatch: ground truth is {truth_w}x{truth_h}, provided map is {prov_w}x{prov_h}")]
    MapMismatch {
        truth_w: usize,
        truth_h: usize,
        prov_w: usize,
        prov_h: usize,
    },
    #[error("reading {0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Nav(#[from] NavError),
    #[error(transparent)]
    Laser(#[from] LaserError),
    #[error("planning failed: {0}")]
    Plan(#[from] PlanError),
    #[error("entity {index} spawns inside a wall at ({x}, {y})")]
    EntityInWall { index: usize, x: f64, y: f64 },
}

/// Parses a scenario document, rejecting unknown keys with their path.
pub fn parse_scenario(text: &str, base_dir: &Path) -> Result<Scenario, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut scenario: Scenario =
        serde_path_to_error::deserialize(de).map_err(|e| ScenarioError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
    scenario.base_dir = base_dir.to_path_buf();
    Ok(scenario)
}

impl Scenario {
    pub fn nav_config(&self) -> NavConfig {
        self.config.apply(NavConfig::default())
    }

    fn read_map(&self, name: &str, cfg: &NavConfig) -> Result<OccupancyGrid, ScenarioError> {
        let path = self.base_dir.join(name);
        let bytes = fs::read(&path).map_err(|e| ScenarioError::Io(path, e))?;
        Ok(OccupancyGrid::load_map(
            &bytes,
            cfg.resolution,
            cfg.occupancy_threshold,
        )?)
    }

    /// Loads the ground truth and the provided (belief) map.
    pub fn load_maps(&self) -> Result<(OccupancyGrid, OccupancyGrid), ScenarioError> {
        let cfg = self.nav_config();
        let truth = self.read_map(&self.ground_truth_map, &cfg)?;
        let provided = if self.provided_map == "empty" {
            OccupancyGrid::empty(truth.spec, cfg.occupancy_threshold)?
        } else {
            self.read_map(&self.provided_map, &cfg)?
        };
        if truth.spec.width_cells != provided.spec.width_cells
            || truth.spec.height_cells != provided.spec.height_cells
        {
            return Err(ScenarioError::MapMismatch {
                truth_w: truth.spec.width_cells,
                truth_h: truth.spec.height_cells,
                prov_w: provided.spec.width_cells,
                prov_h: provided.spec.height_cells,
            });
        }
        Ok((truth, provided))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub reached: bool,
    /// None when the run hit `max_sim_time` before the controller stopped.
    pub stop_reason: Option<StopReason>,
    pub sim_time: f64,
    pub path_length: f64,
    pub replan_count: usize,
    pub min_clearance: f64,
    pub collision_count: usize,
    pub events: Vec<NavEvent>,
}

/// On-disk artifacts produced by [`run`].
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub trajectory_csv: PathBuf,
    pub events_jsonl: PathBuf,
    pub summary_json: PathBuf,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the scenario seed when set.
    pub seed_override: Option<u64>,
    /// Emit a PPM frame every this many ticks.
    pub render_every: Option<usize>,
}

/// Distance from the robot center to the nearest true obstacle: wall cell
/// centers and entity disc surfaces. Searches walls within a 2 m box.
fn clearance(truth: &OccupancyGrid, entities: &[DynamicEntity], pose: &Pose) -> f64 {
    const SEARCH: f64 = 2.0;
    let spec = truth.spec;
    let mut best = SEARCH;
    if let Ok(center) = spec.world_to_cell(pose.x, pose.y) {
        let r = (SEARCH / spec.resolution).ceil() as i64;
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
                let c = crate::grid::Cell::new(cx as usize, cy as usize);
                if truth.is_wall(c) {
                    let (wx, wy) = spec.cell_to_world(c);
                    best = best.min(pose.distance_to(wx, wy));
                }
            }
        }
    }
    for e in entities {
        best = best.min(pose.distance_to(e.pose.x, e.pose.y) - e.radius);
    }
    best
}

/// Runs a scenario to completion, writing trajectory CSV, event log, summary
/// JSON and optional PPM frames into `out_dir`.
pub fn run(
    scenario: &Scenario,
    out_dir: &Path,
    opts: &RunOptions,
) -> Result<(RunSummary, RunArtifacts), ScenarioError> {
    let cfg = scenario.nav_config();
    let (truth, provided) = scenario.load_maps()?;
    let seed = opts.seed_override.unwrap_or(scenario.seed);

    let mut entities = Vec::with_capacity(scenario.entities.len());
    for (i, e) in scenario.entities.iter().enumerate() {
        if !sim::disc_clear(&truth, e.x, e.y, e.radius) {
            return Err(ScenarioError::EntityInWall {
                index: i,
                x: e.x,
                y: e.y,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(STREAM_ENTITY_BASE + i as u64);
        entities.push(DynamicEntity::new(
            Pose::new(e.x, e.y, e.theta),
            e.radius,
            e.speed,
            rng,
        ));
    }
    let mut world = GroundTruthWorld {
        grid: truth,
        entities,
    };
    let mut laser_rng = ChaCha8Rng::seed_from_u64(seed);
    laser_rng.set_stream(STREAM_LASER);

    let mut pose = Pose::new(scenario.start.x, scenario.start.y, scenario.start.theta);
    let goal = (scenario.goal.x, scenario.goal.y);
    let mut ctrl = NavController::initialise(provided, &pose, goal, cfg.clone())?;

    let max_sim_time = scenario.max_sim_time.unwrap_or(600.0);
    let mut csv = String::from("t,x,y,theta,v,omega,state\n");
    let mut trail: Vec<(f64, f64)> = Vec::new();
    let mut path_length = 0.0;
    let mut min_clearance = f64::INFINITY;
    let mut collision_count = 0usize;

    fs::create_dir_all(out_dir).map_err(|e| ScenarioError::Io(out_dir.to_path_buf(), e))?;

    let mut tick = 0usize;
    loop {
        let t = tick as f64 * cfg.dt;
        if ctrl.state().is_stop() || t >= max_sim_time {
            break;
        }
        sim::step_entities(&world.grid, &mut world.entities, cfg.dt, Some((pose.x, pose.y, cfg.robot_radius)));
        let scan = match laser::simulate_scan(
            &world,
            &pose,
            cfg.n_beams,
            cfg.laser_max_range,
            cfg.laser_noise_sd,
            &mut laser_rng,
        ) {
            Ok(s) => s,
            // The controller handles the off-map stop on its next tick; feed
            // it an all-miss scan.
            Err(LaserError::PoseOutOfBounds(..)) => crate::laser::LaserScan {
                beams: vec![
                    crate::laser::Beam {
                        bearing: 0.0,
                        range: cfg.laser_max_range,
                        hit: false,
                    };
                    cfg.n_beams
                ],
                max_range: cfg.laser_max_range,
            },
        };
        let cmd = ctrl.tick(&pose, &scan, cfg.dt)?;
        let _ = write!(
            csv,
            "{:.3},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
            t,
            pose.x,
            pose.y,
            pose.theta,
            cmd.v,
            cmd.omega,
            ctrl.state().name()
        );
        if cmd != VelocityCommand::STOP {
            pose = sim::integrate(&pose, &cmd, cfg.dt);
            path_length += cmd.v.abs() * cfg.dt;
        }
        trail.push((pose.x, pose.y));
        let cl = clearance(&world.grid, &world.entities, &pose);
        min_clearance = min_clearance.min(cl);
        if cl < cfg.robot_radius {
            collision_count += 1;
        }
        if let Some(every) = opts.render_every {
            if every > 0 && tick % every == 0 {
                let frame = render::render_frame(
                    &world.grid,
                    ctrl.grid(),
                    ctrl.current_plan(),
                    &trail,
                    &world.entities,
                    &pose,
                    cfg.robot_radius,
                    goal,
                );
                let name = out_dir.join(format!("frame_{tick:06}.ppm"));
                fs::write(&name, frame).map_err(|e| ScenarioError::Io(name.clone(), e))?;
            }
        }
        tick += 1;
    }

    let stop_reason = match ctrl.state() {
        crate::nav::NavState::Stop(r) => Some(r),
        _ => None,
    };
    let summary = RunSummary {
        reached: stop_reason == Some(StopReason::ReachedGoal),
        stop_reason,
        sim_time: tick as f64 * cfg.dt,
        path_length,
        replan_count: ctrl.replan_count(),
        min_clearance,
        collision_count,
        events: ctrl.events().to_vec(),
    };

    let trajectory_csv = out_dir.join("trajectory.csv");
    fs::write(&trajectory_csv, &csv).map_err(|e| ScenarioError::Io(trajectory_csv.clone(), e))?;
    let events_jsonl = out_dir.join("events.jsonl");
    let mut log = String::new();
    for ev in &summary.events {
        let _ = writeln!(log, "{}", serde_json::to_string(ev).expect("event serializes"));
    }
    fs::write(&events_jsonl, &log).map_err(|e| ScenarioError::Io(events_jsonl.clone(), e))?;
    let summary_json = out_dir.join("summary.json");
    let body = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&summary_json, &body).map_err(|e| ScenarioError::Io(summary_json.clone(), e))?;

    Ok((
        summary,
        RunArtifacts {
            trajectory_csv,
            events_jsonl,
            summary_json,
        },
    ))
}

/// One-shot planning artifacts for the `plan` subcommand.
#[derive(Debug)]
pub struct PlanOnce {
    pub plan: MotionPlan,
    pub field: WavefrontField,
    pub cspace: crate::grid::CSpaceGrid,
    /// Wall-clock time of propagate + extract (s).
    pub planning_seconds: f64,
}

/// Inflates, propagates from the goal, extracts and smooths a path once,
/// timing the propagate + extract core.
pub fn plan_once(
    map: &OccupancyGrid,
    start: crate::grid::Cell,
    goal: crate::grid::Cell,
    cfg: &NavConfig,
) -> Result<PlanOnce, PlanError> {
    let cspace = map.inflate(cfg.inflation_radius());
    if cspace.is_blocked(start) {
        return Err(PlanError::StartBlocked(start));
    }
    let t0 = std::time::Instant::now();
    let field = wavefront::propagate(&cspace, goal, cfg.metric)?;
    let cells = crate::plan::extract_path(&field, start)?;
    let planning_seconds = t0.elapsed().as_secs_f64();
    let steps = crate::plan::compress(&cells, map.spec.resolution)?;
    let smoothed = crate::plan::smooth(start, &steps, cfg.min_step_length, &map.spec);
    let waypoints = smoothed.iter().map(|s| s.end_cell).collect();
    Ok(PlanOnce {
        plan: MotionPlan {
            cells,
            steps: smoothed,
            waypoints,
        },
        field,
        cspace,
        planning_seconds,
    })
}
