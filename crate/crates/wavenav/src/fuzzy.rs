//! Possibility-theory obstacle avoidance: fuzzification of laser readings,
//! waypoint-conditioned rule tables, max-min inference and centre-of-area
//! defuzzification.
//!
//! The angle-ZE column of the turn-rate table is ambiguous on purpose; it is
//! resolved each tick toward the side the next waypoint is on, so the planned
//! path biases the avoidance direction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::laser::LaserScan;
use crate::sim::Pose;

use std::f64::consts::FRAC_PI_2;

/// Linguistic term shared by all variables. Distance and speed only use the
/// ZE/PS/PM subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Term {
    NM,
    NS,
    ZE,
    PS,
    PM,
}

/// Piecewise-linear membership function, zero outside the first/last
/// breakpoint unless the matching shoulder flag keeps it flat there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipFunction {
    /// (x, grade) breakpoints with strictly increasing x and grades in [0,1].
    pub points: Vec<(f64, f64)>,
    #[serde(default)]
    pub left_shoulder: bool,
    #[serde(default)]
    pub right_shoulder: bool,
}

impl MembershipFunction {
    pub fn triangle(a: f64, b: f64, c: f64) -> Self {
        let mut points = Vec::new();
        let mut left_shoulder = false;
        let mut right_shoulder = false;
        if a < b {
            points.push((a, 0.0));
        } else {
            left_shoulder = true;
        }
        points.push((b, 1.0));
        if c > b {
            points.push((c, 0.0));
        } else {
            right_shoulder = true;
        }
        MembershipFunction {
            points,
            left_shoulder,
            right_shoulder,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let pts = &self.points;
        if pts.is_empty() {
            return 0.0;
        }
        if x <= pts[0].0 {
            return if self.left_shoulder || x == pts[0].0 {
                pts[0].1
            } else {
                0.0
            };
        }
        if x >= pts[pts.len() - 1].0 {
            return if self.right_shoulder || x == pts[pts.len() - 1].0 {
                pts[pts.len() - 1].1
            } else {
                0.0
            };
        }
        for w in pts.windows(2) {
            let ((x0, g0), (x1, g1)) = (w[0], w[1]);
            if x <= x1 {
                // Interpolate from the lower-grade endpoint so mirrored
                // functions evaluate bit-identically at negated inputs.
                return if g0 <= g1 {
                    g0 + (x - x0) * (g1 - g0) / (x1 - x0)
                } else {
                    g1 + (x1 - x) * (g0 - g1) / (x1 - x0)
                };
            }
        }
        0.0
    }

    /// A possibility distribution is normal: its peak grade is one.
    pub fn is_normal(&self) -> bool {
        self.points
            .iter()
            .fold(0.0f64, |m, &(_, g)| m.max(g))
            == 1.0
    }

    fn is_valid(&self) -> bool {
        !self.points.is_empty()
            && self.points.windows(2).all(|w| w[0].0 < w[1].0)
            && self.points.iter().all(|&(_, g)| (0.0..=1.0).contains(&g))
    }
}

/// Membership functions for a five-term variable (angle, turn-rate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiveSets {
    pub nm: MembershipFunction,
    pub ns: MembershipFunction,
    pub ze: MembershipFunction,
    pub ps: MembershipFunction,
    pub pm: MembershipFunction,
}

impl FiveSets {
    pub fn get(&self, t: Term) -> &MembershipFunction {
        match t {
            Term::NM => &self.nm,
            Term::NS => &self.ns,
            Term::ZE => &self.ze,
            Term::PS => &self.ps,
            Term::PM => &self.pm,
        }
    }

    fn all(&self) -> [&MembershipFunction; 5] {
        [&self.nm, &self.ns, &self.ze, &self.ps, &self.pm]
    }
}

/// Membership functions for a three-term variable (distance, speed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreeSets {
    pub ze: MembershipFunction,
    pub ps: MembershipFunction,
    pub pm: MembershipFunction,
}

impl ThreeSets {
    pub fn get(&self, t: Term) -> &MembershipFunction {
        match t {
            Term::ZE => &self.ze,
            Term::PS => &self.ps,
            Term::PM => &self.pm,
            _ => panic!("three-term variable has no {t:?} term"),
        }
    }

    fn all(&self) -> [&MembershipFunction; 3] {
        [&self.ze, &self.ps, &self.pm]
    }
}

/// Normalized obstacle angle over [-1, 1]; negative angles are on the right.
pub fn default_angle_sets() -> FiveSets {
    FiveSets {
        nm: MembershipFunction::triangle(-1.0, -1.0, -0.5),
        ns: MembershipFunction::triangle(-1.0, -0.5, 0.0),
        ze: MembershipFunction::triangle(-0.5, 0.0, 0.5),
        ps: MembershipFunction::triangle(0.0, 0.5, 1.0),
        pm: MembershipFunction::triangle(0.5, 1.0, 1.0),
    }
}

/// Normalized obstacle distance over [0, 1].
pub fn default_distance_sets() -> ThreeSets {
    ThreeSets {
        ze: MembershipFunction::triangle(0.0, 0.0, 0.5),
        ps: MembershipFunction::triangle(0.0, 0.5, 1.0),
        pm: MembershipFunction::triangle(0.5, 1.0, 1.0),
    }
}

/// Speed output over [0, v_max].
pub fn default_speed_sets(v_max: f64) -> ThreeSets {
    let v = v_max;
    ThreeSets {
        ze: MembershipFunction::triangle(0.0, 0.0, v / 2.0),
        ps: MembershipFunction::triangle(0.0, v / 2.0, v),
        pm: MembershipFunction::triangle(v / 2.0, v, v),
    }
}

/// Turn-rate output over [-omega_max, omega_max]: five evenly spaced
/// triangles, shoulders at the edges.
pub fn default_turn_sets(omega_max: f64) -> FiveSets {
    let w = omega_max;
    FiveSets {
        nm: MembershipFunction::triangle(-w, -w, -w / 2.0),
        ns: MembershipFunction::triangle(-w, -w / 2.0, 0.0),
        ze: MembershipFunction::triangle(-w / 2.0, 0.0, w / 2.0),
        ps: MembershipFunction::triangle(0.0, w / 2.0, w),
        pm: MembershipFunction::triangle(w / 2.0, w, w),
    }
}

/// Which side of the robot's heading the next waypoint lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Sign of the cross product of the heading vector with the vector to the
/// waypoint; collinear ties resolve Left.
pub fn waypoint_side(pose: &Pose, waypoint: (f64, f64)) -> Side {
    let (dx, dy) = (waypoint.0 - pose.x, waypoint.1 - pose.y);
    let cross = pose.theta.cos() * dy - pose.theta.sin() * dx;
    if cross >= 0.0 {
        Side::Left
    } else {
        Side::Right
    }
}

/// A turn-rate rule cell: fixed, or resolved per tick toward the waypoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TurnRule {
    Fixed(Term),
    /// `left` fires when the waypoint is on the left, `right` otherwise.
    Ambiguous { left: Term, right: Term },
}

/// The speed and turn-rate rule tables. Rows are distance terms (ZE, PS, PM),
/// columns are angle terms (NM, NS, ZE, PS, PM).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleBase {
    pub speed: [[Term; 5]; 3],
    pub turn: [[TurnRule; 5]; 3],
}

impl Default for RuleBase {
    fn default() -> Self {
        use Term::*;
        use TurnRule::{Ambiguous, Fixed};
        RuleBase {
            speed: [
                [PS, ZE, ZE, ZE, PS],
                [PS, ZE, ZE, ZE, PS],
                [PM, PS, ZE, PS, PM],
            ],
            turn: [
                [
                    Fixed(PS),
                    Fixed(PM),
                    Ambiguous { left: PM, right: NM },
                    Fixed(NM),
                    Fixed(NS),
                ],
                [
                    Fixed(ZE),
                    Fixed(PS),
                    Ambiguous { left: PM, right: NM },
                    Fixed(NS),
                    Fixed(ZE),
                ],
                [
                    Fixed(ZE),
                    Fixed(PS),
                    Ambiguous { left: PS, right: NS },
                    Fixed(NS),
                    Fixed(ZE),
                ],
            ],
        }
    }
}

impl RuleBase {
    /// Resolves the ambiguous angle-ZE cells toward the waypoint side.
    pub fn resolve_turn_table(&self, side: Side) -> [[Term; 5]; 3] {
        let mut out = [[Term::ZE; 5]; 3];
        for (d, row) in self.turn.iter().enumerate() {
            for (a, rule) in row.iter().enumerate() {
                out[d][a] = match *rule {
                    TurnRule::Fixed(t) => t,
                    TurnRule::Ambiguous { left, right } => match side {
                        Side::Left => left,
                        Side::Right => right,
                    },
                };
            }
        }
        out
    }
}

/// Crisp avoidance output. `engaged` is false when no beam fell inside the
/// avoidance range, in which case the command is cruise speed straight ahead.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AvoidanceCommand {
    pub speed: f64,
    pub turn_rate: f64,
    pub engaged: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FuzzyError {
    #[error("laser scan contains no beams")]
    EmptyScan,
    #[error("membership function for {0} is invalid or not normal")]
    BadMembership(&'static str),
}

/// Tunable parameters of the avoidance controller.
#[derive(Debug, Clone)]
pub struct FuzzyParams {
    /// Maximum beam range considered, the "2R" window (m).
    pub avoidance_range: f64,
    pub v_max: f64,
    pub omega_max: f64,
    /// Sample count for centre-of-area integration.
    pub coa_samples: usize,
}

/// The avoidance controller: rule base plus all membership functions.
#[derive(Debug, Clone)]
pub struct FuzzyController {
    pub params: FuzzyParams,
    pub rulebase: RuleBase,
    pub angle_sets: FiveSets,
    pub distance_sets: ThreeSets,
    pub speed_sets: ThreeSets,
    pub turn_sets: FiveSets,
}

impl FuzzyController {
    pub fn new(params: FuzzyParams) -> Result<Self, FuzzyError> {
        Self::with_sets(
            params.clone(),
            RuleBase::default(),
            default_angle_sets(),
            default_distance_sets(),
            default_speed_sets(params.v_max),
            default_turn_sets(params.omega_max),
        )
    }

    pub fn with_sets(
        params: FuzzyParams,
        rulebase: RuleBase,
        angle_sets: FiveSets,
        distance_sets: ThreeSets,
        speed_sets: ThreeSets,
        turn_sets: FiveSets,
    ) -> Result<Self, FuzzyError> {
        for mf in angle_sets.all() {
            if !mf.is_valid() || !mf.is_normal() {
                return Err(FuzzyError::BadMembership("angle"));
            }
        }
        for mf in distance_sets.all() {
            if !mf.is_valid() || !mf.is_normal() {
                return Err(FuzzyError::BadMembership("distance"));
            }
        }
        for mf in speed_sets.all() {
            if !mf.is_valid() || !mf.is_normal() {
                return Err(FuzzyError::BadMembership("speed"));
            }
        }
        for mf in turn_sets.all() {
            if !mf.is_valid() || !mf.is_normal() {
                return Err(FuzzyError::BadMembership("turn-rate"));
            }
        }
        Ok(FuzzyController {
            params,
            rulebase,
            angle_sets,
            distance_sets,
            speed_sets,
            turn_sets,
        })
    }

    /// Grades of every angle term at normalized angle `x`.
    pub fn fuzzify_angle(&self, x: f64) -> [f64; 5] {
        let x = x.clamp(-1.0, 1.0);
        let mut out = [0.0; 5];
        for (i, mf) in self.angle_sets.all().iter().enumerate() {
            out[i] = mf.eval(x);
        }
        out
    }

    /// Grades of every distance term at normalized distance `x`.
    pub fn fuzzify_distance(&self, x: f64) -> [f64; 3] {
        let x = x.clamp(0.0, 1.0);
        let mut out = [0.0; 3];
        for (i, mf) in self.distance_sets.all().iter().enumerate() {
            out[i] = mf.eval(x);
        }
        out
    }

    /// Runs max-min inference over every beam within the avoidance range and
    /// defuzzifies speed and turn-rate by centre-of-area.
    pub fn infer(
        &self,
        scan: &LaserScan,
        pose: &Pose,
        waypoint: (f64, f64),
    ) -> Result<AvoidanceCommand, FuzzyError> {
        self.infer_for_side(scan, waypoint_side(pose, waypoint))
    }

    /// Like [`infer`](Self::infer) but with the avoidance side fixed by the
    /// caller. Latching the side while avoiding prevents chattering when the
    /// waypoint sits almost dead ahead and the cross product flips sign.
    pub fn infer_for_side(
        &self,
        scan: &LaserScan,
        side: Side,
    ) -> Result<AvoidanceCommand, FuzzyError> {
        if scan.beams.is_empty() {
            return Err(FuzzyError::EmptyScan);
        }
        let turn_table = self.rulebase.resolve_turn_table(side);
        let speed_table = &self.rulebase.speed;

        // Clip strength per output term, maximized over all rules and beams.
        let mut speed_strength = [0.0f64; 3];
        let mut turn_strength = [0.0f64; 5];
        let mut engaged = false;
        for beam in &scan.beams {
            if !beam.hit || beam.range > self.params.avoidance_range {
                continue;
            }
            engaged = true;
            let mu_a = self.fuzzify_angle(beam.bearing / FRAC_PI_2);
            let mu_d = self.fuzzify_distance(beam.range / self.params.avoidance_range);
            for d in 0..3 {
                for a in 0..5 {
                    let strength = mu_a[a].min(mu_d[d]);
                    if strength <= 0.0 {
                        continue;
                    }
                    let si = three_index(speed_table[d][a]);
                    speed_strength[si] = speed_strength[si].max(strength);
                    let ti = five_index(turn_table[d][a]);
                    turn_strength[ti] = turn_strength[ti].max(strength);
                }
            }
        }
        if !engaged {
            return Ok(AvoidanceCommand {
                speed: self.params.v_max,
                turn_rate: 0.0,
                engaged: false,
            });
        }
        let speed_sets = self.speed_sets.all();
        let speed = coa(
            |x| {
                (0..3).fold(0.0f64, |m, i| {
                    m.max(speed_strength[i].min(speed_sets[i].eval(x)))
                })
            },
            0.0,
            self.params.v_max,
            self.params.coa_samples,
            self.params.v_max,
        );
        let turn_sets = [
            &self.turn_sets.nm,
            &self.turn_sets.ns,
            &self.turn_sets.ze,
            &self.turn_sets.ps,
            &self.turn_sets.pm,
        ];
        let turn_rate = coa(
            |x| {
                (0..5).fold(0.0f64, |m, i| {
                    m.max(turn_strength[i].min(turn_sets[i].eval(x)))
                })
            },
            -self.params.omega_max,
            self.params.omega_max,
            self.params.coa_samples,
            0.0,
        );
        Ok(AvoidanceCommand {
            speed: speed.clamp(0.0, self.params.v_max),
            turn_rate: turn_rate.clamp(-self.params.omega_max, self.params.omega_max),
            engaged: true,
        })
    }
}

fn three_index(t: Term) -> usize {
    match t {
        Term::ZE => 0,
        Term::PS => 1,
        Term::PM => 2,
        _ => panic!("speed table uses only ZE/PS/PM"),
    }
}

fn five_index(t: Term) -> usize {
    match t {
        Term::NM => 0,
        Term::NS => 1,
        Term::ZE => 2,
        Term::PS => 3,
        Term::PM => 4,
    }
}

/// Centre-of-area defuzzification by trapezoidal integration over `n`
/// uniformly spaced samples. Returns `fallback` when the set has zero area.
pub fn coa(mu: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize, fallback: f64) -> f64 {
    assert!(n >= 2 && hi > lo);
    let dx = (hi - lo) / (n - 1) as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut prev_x = lo;
    let mut prev_g = mu(lo);
    for i in 1..n {
        let x = lo + i as f64 * dx;
        let g = mu(x);
        num += (prev_x * prev_g + x * g) * 0.5 * dx;
        den += (prev_g + g) * 0.5 * dx;
        prev_x = x;
        prev_g = g;
    }
    if den <= 1e-12 {
        fallback
    } else {
        num / den
    }
}

/// True when avoidance is inactive or the computed turn-rate is close enough
/// to zero that the obstacles are considered avoided.
pub fn steering_settled(cmd: &AvoidanceCommand, epsilon: f64) -> bool {
    !cmd.engaged || cmd.turn_rate.abs() < epsilon
}
