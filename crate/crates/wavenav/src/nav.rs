//! The navigation state machine tying mapping, planning, path following and
//! obstacle avoidance into one control loop.
//!
//! Per tick the grid is updated (mark detections, age objects) regardless of
//! state. Map preparation and planning are instantaneous states the loop
//! passes through within a single tick; motion commands come out of
//! FollowPath and AvoidObstacles.

use serde::Serialize;
use thiserror::Error;

use crate::fuzzy::{
    steering_settled, FuzzyController, FuzzyError, FuzzyParams,
};
use crate::grid::{Cell, OccupancyGrid};
use crate::laser::LaserScan;
use crate::plan::{self, MotionPlan, PlanError};
use crate::sim::{follow_step, FollowParams, Pose, VelocityCommand};
use crate::wavefront::Metric;

/// All tunable parameters, with the simulation-profile defaults.
#[derive(Debug, Clone)]
pub struct NavConfig {
    /// Meters per cell.
    pub resolution: f64,
    /// Half the assumed 55 cm round footprint.
    pub robot_radius: f64,
    pub safety_distance: f64,
    /// The "2R" window for obstacle avoidance (m).
    pub avoidance_range: f64,
    /// Detection count at which a cell becomes object-occupied.
    pub occupancy_threshold: f64,
    /// Confidence subtracted per control cycle.
    pub aging_factor: f64,
    pub v_max: f64,
    pub omega_max: f64,
    /// Turn-rate magnitude below which steering counts as settled (rad/s).
    pub epsilon_settle: f64,
    /// Steps shorter than this are smoothed away (m).
    pub min_step_length: f64,
    /// Arrival tolerance for waypoints and the goal (m).
    pub goal_tolerance: f64,
    /// None derives 10x the straight-line travel time at v_max.
    pub timeout: Option<f64>,
    pub metric: Metric,
    /// Heading-error gain of the arc follower (1/s).
    pub k_omega: f64,
    /// Control period (s).
    pub dt: f64,
    /// Detections beyond this range are not mapped (m).
    pub map_range: f64,
    pub laser_max_range: f64,
    pub n_beams: usize,
    pub laser_noise_sd: f64,
    pub coa_samples: usize,
    /// Membership overrides; None uses the built-in breakpoints.
    pub angle_sets: Option<crate::fuzzy::FiveSets>,
    pub distance_sets: Option<crate::fuzzy::ThreeSets>,
    pub speed_sets: Option<crate::fuzzy::ThreeSets>,
    pub turn_sets: Option<crate::fuzzy::FiveSets>,
}

impl Default for NavConfig {
    fn default() -> Self {
        NavConfig {
            resolution: 0.1,
            robot_radius: 0.275,
            safety_distance: 0.07,
            avoidance_range: 1.1,
            occupancy_threshold: 7.0,
            aging_factor: 0.14,
            v_max: 0.3,
            omega_max: 1.0,
            epsilon_settle: 0.1,
            min_step_length: 0.3,
            goal_tolerance: 0.15,
            timeout: None,
            metric: Metric::chamfer_unit(),
            k_omega: 1.5,
            dt: 0.1,
            map_range: 8.0,
            laser_max_range: 8.0,
            n_beams: 181,
            laser_noise_sd: 0.0,
            coa_samples: 201,
            angle_sets: None,
            distance_sets: None,
            speed_sets: None,
            turn_sets: None,
        }
    }
}

impl NavConfig {
    pub fn inflation_radius(&self) -> f64 {
        self.robot_radius + self.safety_distance
    }

    pub fn build_fuzzy(&self) -> Result<FuzzyController, FuzzyError> {
        let params = FuzzyParams {
            avoidance_range: self.avoidance_range,
            v_max: self.v_max,
            omega_max: self.omega_max,
            coa_samples: self.coa_samples,
        };
        FuzzyController::with_sets(
            params,
            crate::fuzzy::RuleBase::default(),
            self.angle_sets
                .clone()
                .unwrap_or_else(crate::fuzzy::default_angle_sets),
            self.distance_sets
                .clone()
                .unwrap_or_else(crate::fuzzy::default_distance_sets),
            self.speed_sets
                .clone()
                .unwrap_or_else(|| crate::fuzzy::default_speed_sets(self.v_max)),
            self.turn_sets
                .clone()
                .unwrap_or_else(|| crate::fuzzy::default_turn_sets(self.omega_max)),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StopReason {
    ReachedGoal,
    NoPath,
    StartOrGoalOccupied,
    Timeout,
    OffMap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NavState {
    Initialise,
    PrepareMap,
    PlanPath,
    FollowPath,
    AvoidObstacles,
    Stop(StopReason),
}

impl NavState {
    pub fn name(&self) -> &'static str {
        match self {
            NavState::Initialise => "Initialise",
            NavState::PrepareMap => "PrepareMap",
            NavState::PlanPath => "PlanPath",
            NavState::FollowPath => "FollowPath",
            NavState::AvoidObstacles => "AvoidObstacles",
            NavState::Stop(_) => "Stop",
        }
    }

    pub fn is_stop(&self) -> bool {
        matches!(self, NavState::Stop(_))
    }
}

/// State-diagram edges. Any state may also enter Stop (timeout, off-map,
/// goal reached, planning failure).
pub fn is_legal_transition(from: NavState, to: NavState) -> bool {
    use NavState::*;
    if to.is_stop() && !from.is_stop() {
        return true;
    }
    matches!(
        (from, to),
        (Initialise, PrepareMap)
            | (PrepareMap, PlanPath)
            | (PlanPath, FollowPath)
            | (FollowPath, AvoidObstacles)
            | (FollowPath, PrepareMap)
            | (AvoidObstacles, PrepareMap)
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ReplanCause {
    SteeringSettled,
    WaypointsExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum NavEventKind {
    StateChanged {
        from: &'static str,
        to: &'static str,
    },
    PathPlanned {
        steps: usize,
        length_m: f64,
    },
    Replanned {
        cause: ReplanCause,
    },
    ObstacleEngaged,
    GoalReached,
    Stopped {
        reason: StopReason,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NavEvent {
    pub t: f64,
    #[serde(flatten)]
    pub kind: NavEventKind,
}

#[derive(Debug, Error)]
pub enum NavError {
    #[error("start pose ({0}, {1}) is outside the map")]
    StartOutOfBounds(f64, f64),
    #[error("goal ({0}, {1}) is outside the map")]
    GoalOutOfBounds(f64, f64),
    #[error("tick called on a stopped controller")]
    TickAfterStop,
    #[error(transparent)]
    Fuzzy(#[from] FuzzyError),
}

pub struct NavController {
    cfg: NavConfig,
    grid: OccupancyGrid,
    goal: (f64, f64),
    state: NavState,
    cspace: Option<crate::grid::CSpaceGrid>,
    plan: Option<MotionPlan>,
    waypoint_idx: usize,
    fuzzy: FuzzyController,
    follow: FollowParams,
    elapsed: f64,
    timeout: f64,
    events: Vec<NavEvent>,
    replan_count: usize,
    /// Side committed to for the current avoidance episode, so the turn
    /// direction does not chatter while the waypoint is nearly dead ahead.
    avoid_side: Option<crate::fuzzy::Side>,
    /// Consecutive settled avoidance ticks; the exit is debounced so one
    /// near-zero sample does not end the maneuver.
    settle_streak: usize,
}

/// Settled avoidance ticks required before replanning.
const SETTLE_DEBOUNCE: usize = 3;

impl NavController {
    /// Builds a controller in PrepareMap, owning the provided map.
    pub fn initialise(
        map: OccupancyGrid,
        start: &Pose,
        goal: (f64, f64),
        cfg: NavConfig,
    ) -> Result<Self, NavError> {
        if map.spec.world_to_cell(start.x, start.y).is_err() {
            return Err(NavError::StartOutOfBounds(start.x, start.y));
        }
        if map.spec.world_to_cell(goal.0, goal.1).is_err() {
            return Err(NavError::GoalOutOfBounds(goal.0, goal.1));
        }
        let fuzzy = cfg.build_fuzzy()?;
        let follow = FollowParams {
            k_omega: cfg.k_omega,
            v_max: cfg.v_max,
            omega_max: cfg.omega_max,
        };
        let timeout = cfg
            .timeout
            .unwrap_or_else(|| (10.0 * start.distance_to(goal.0, goal.1) / cfg.v_max).max(10.0));
        let mut ctrl = NavController {
            cfg,
            grid: map,
            goal,
            state: NavState::Initialise,
            cspace: None,
            plan: None,
            waypoint_idx: 0,
            fuzzy,
            follow,
            elapsed: 0.0,
            timeout,
            events: Vec::new(),
            replan_count: 0,
            avoid_side: None,
            settle_streak: 0,
        };
        ctrl.transition(NavState::PrepareMap);
        Ok(ctrl)
    }

    pub fn state(&self) -> NavState {
        self.state
    }

    pub fn events(&self) -> &[NavEvent] {
        &self.events
    }

    pub fn replan_count(&self) -> usize {
        self.replan_count
    }

    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    pub fn current_plan(&self) -> Option<&MotionPlan> {
        self.plan.as_ref()
    }

    pub fn elapsed(&self) -> f64 {
        self.elapsed
    }

    fn push_event(&mut self, kind: NavEventKind) {
        self.events.push(NavEvent {
            t: self.elapsed,
            kind,
        });
    }

    fn transition(&mut self, to: NavState) {
        debug_assert!(
            is_legal_transition(self.state, to),
            "illegal transition {:?} -> {:?}",
            self.state,
            to
        );
        self.push_event(NavEventKind::StateChanged {
            from: self.state.name(),
            to: to.name(),
        });
        self.state = to;
    }

    fn stop(&mut self, reason: StopReason) -> VelocityCommand {
        if reason == StopReason::ReachedGoal {
            self.push_event(NavEventKind::GoalReached);
        }
        self.push_event(NavEventKind::Stopped { reason });
        self.transition(NavState::Stop(reason));
        VelocityCommand::STOP
    }

    fn goal_reached(&self, pose: &Pose) -> bool {
        pose.distance_to(self.goal.0, self.goal.1) <= self.cfg.goal_tolerance
    }

    /// One control cycle. The grid is marked and aged every tick; state
    /// handlers then produce the motion command.
    pub fn tick(
        &mut self,
        pose: &Pose,
        scan: &LaserScan,
        dt: f64,
    ) -> Result<VelocityCommand, NavError> {
        if self.state.is_stop() {
            return Err(NavError::TickAfterStop);
        }
        self.elapsed += dt;

        if self.grid.spec.world_to_cell(pose.x, pose.y).is_err() {
            return Ok(self.stop(StopReason::OffMap));
        }
        self.grid.mark_detections(pose, scan, self.cfg.map_range);
        self.grid.age_objects(self.cfg.aging_factor);
        if self.elapsed > self.timeout {
            return Ok(self.stop(StopReason::Timeout));
        }

        // Instantaneous states chain within the tick until a command exists.
        for _ in 0..8 {
            match self.state {
                NavState::PrepareMap => {
                    self.cspace = Some(self.grid.inflate(self.cfg.inflation_radius()));
                    self.transition(NavState::PlanPath);
                }
                NavState::PlanPath => {
                    let start_cell = match self.grid.spec.world_to_cell(pose.x, pose.y) {
                        Ok(c) => c,
                        Err(_) => return Ok(self.stop(StopReason::OffMap)),
                    };
                    let goal_cell = self
                        .grid
                        .spec
                        .world_to_cell(self.goal.0, self.goal.1)
                        .expect("goal bounds checked at initialise");
                    // Fail-stop only when a cell is truly occupied; being
                    // inside the inflation margin (common right after an
                    // avoidance maneuver) just shifts the planning start to
                    // the nearest free cell.
                    if self.grid.is_occupied(start_cell) {
                        return Ok(self.stop(StopReason::StartOrGoalOccupied));
                    }
                    let planned = {
                        let cspace = self.cspace.as_ref().expect("cspace set by PrepareMap");
                        if cspace.is_blocked(goal_cell) {
                            return Ok(self.stop(StopReason::StartOrGoalOccupied));
                        }
                        let plan_start = if cspace.is_blocked(start_cell) {
                            nearest_free_cell(cspace, start_cell, 3.0 * self.cfg.inflation_radius())
                        } else {
                            Some(start_cell)
                        };
                        match plan_start {
                            Some(s) => plan::make_plan(
                                cspace,
                                s,
                                goal_cell,
                                self.cfg.metric,
                                self.cfg.min_step_length,
                            ),
                            None => return Ok(self.stop(StopReason::StartOrGoalOccupied)),
                        }
                    };
                    match planned {
                        Ok(p) => {
                            self.push_event(NavEventKind::PathPlanned {
                                steps: p.steps.len(),
                                length_m: p.length(),
                            });
                            self.plan = Some(p);
                            self.waypoint_idx = 0;
                            self.transition(NavState::FollowPath);
                        }
                        Err(PlanError::NoPath) => return Ok(self.stop(StopReason::NoPath)),
                        Err(_) => return Ok(self.stop(StopReason::StartOrGoalOccupied)),
                    }
                }
                NavState::FollowPath => {
                    if self.goal_reached(pose) {
                        return Ok(self.stop(StopReason::ReachedGoal));
                    }
                    // A newly mapped obstacle on the planned route invalidates
                    // the remaining waypoints and forces a replan.
                    if let Some(plan) = &self.plan {
                        if plan.cells.iter().any(|&c| self.grid.is_occupied(c)) {
                            self.plan = None;
                        }
                    }
                    let waypoint = match self.current_waypoint(pose) {
                        Some(w) => w,
                        None => {
                            self.replan_count += 1;
                            self.push_event(NavEventKind::Replanned {
                                cause: ReplanCause::WaypointsExhausted,
                            });
                            self.transition(NavState::PrepareMap);
                            continue;
                        }
                    };
                    let side = crate::fuzzy::waypoint_side(pose, waypoint);
                    let cmd = self.fuzzy.infer_for_side(scan, side)?;
                    if cmd.engaged && !steering_settled(&cmd, self.cfg.epsilon_settle) {
                        self.push_event(NavEventKind::ObstacleEngaged);
                        self.avoid_side = Some(side);
                        self.settle_streak = 0;
                        self.transition(NavState::AvoidObstacles);
                        return Ok(VelocityCommand {
                            v: cmd.speed,
                            omega: cmd.turn_rate,
                        });
                    }
                    return Ok(follow_step(pose, waypoint, &self.follow));
                }
                NavState::AvoidObstacles => {
                    if self.goal_reached(pose) {
                        return Ok(self.stop(StopReason::ReachedGoal));
                    }
                    let waypoint = self
                        .current_waypoint(pose)
                        .unwrap_or(self.goal);
                    let side = *self
                        .avoid_side
                        .get_or_insert_with(|| crate::fuzzy::waypoint_side(pose, waypoint));
                    let cmd = self.fuzzy.infer_for_side(scan, side)?;
                    if steering_settled(&cmd, self.cfg.epsilon_settle) {
                        self.settle_streak += 1;
                    } else {
                        self.settle_streak = 0;
                    }
                    if self.settle_streak >= SETTLE_DEBOUNCE || !cmd.engaged {
                        self.avoid_side = None;
                        self.settle_streak = 0;
                        self.replan_count += 1;
                        self.push_event(NavEventKind::Replanned {
                            cause: ReplanCause::SteeringSettled,
                        });
                        self.transition(NavState::PrepareMap);
                        continue;
                    }
                    return Ok(VelocityCommand {
                        v: cmd.speed,
                        omega: cmd.turn_rate,
                    });
                }
                NavState::Initialise | NavState::Stop(_) => unreachable!(),
            }
        }
        // Over-long transition chain; hold position for this tick.
        Ok(VelocityCommand::STOP)
    }

    /// World position of the current waypoint, advancing past waypoints the
    /// robot is already within tolerance of. None when exhausted.
    fn current_waypoint(&mut self, pose: &Pose) -> Option<(f64, f64)> {
        let plan = self.plan.as_ref()?;
        while self.waypoint_idx < plan.waypoints.len() {
            let (wx, wy) = self.grid.spec.cell_to_world(plan.waypoints[self.waypoint_idx]);
            if pose.distance_to(wx, wy) > self.cfg.goal_tolerance {
                return Some((wx, wy));
            }
            self.waypoint_idx += 1;
        }
        None
    }

    /// Cell of the goal, for rendering.
    pub fn goal_cell(&self) -> Cell {
        self.grid
            .spec
            .world_to_cell(self.goal.0, self.goal.1)
            .expect("goal bounds checked at initialise")
    }
}

/// Closest unblocked cell within `max_dist` meters of `from`, ties broken
/// by lower y then lower x for determinism.
fn nearest_free_cell(
    cspace: &crate::grid::CSpaceGrid,
    from: Cell,
    max_dist: f64,
) -> Option<Cell> {
    let spec = cspace.spec;
    let r = (max_dist / spec.resolution).ceil() as i64;
    let mut best: Option<(i64, usize, usize)> = None;
    for dy in -r..=r {
        for dx in -r..=r {
            let d2 = dx * dx + dy * dy;
            if d2 > r * r || d2 == 0 {
                continue;
            }
            let (cx, cy) = (from.x as i64 + dx, from.y as i64 + dy);
            if cx < 0 || cy < 0 || cx >= spec.width_cells as i64 || cy >= spec.height_cells as i64 {
                continue;
            }
            let c = Cell::new(cx as usize, cy as usize);
            if cspace.is_blocked(c) {
                continue;
            }
            let key = (d2, c.y, c.x);
            if best.map_or(true, |b| key < b) {
                best = Some(key);
            }
        }
    }
    best.map(|(_, y, x)| Cell::new(x, y))
}
