//! Differential-drive kinematics, arc-turn path following and scripted
//! dynamic entities.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::grid::OccupancyGrid;

use std::f64::consts::PI;

/// Robot pose; `theta` is kept normalized to (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        ((self.x - x).powi(2) + (self.y - y).powi(2)).sqrt()
    }
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t - 2.0 * PI
    } else {
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityCommand {
    /// Forward speed (m/s).
    pub v: f64,
    /// Turn rate (rad/s), positive counter-clockwise.
    pub omega: f64,
}

impl VelocityCommand {
    pub const STOP: VelocityCommand = VelocityCommand { v: 0.0, omega: 0.0 };
}

/// Exact unicycle update: a straight move when omega is zero, otherwise a
/// circular arc of radius v/omega with heading change omega*dt.
pub fn integrate(pose: &Pose, cmd: &VelocityCommand, dt: f64) -> Pose {
    debug_assert!(dt > 0.0);
    let (v, w) = (cmd.v, cmd.omega);
    if w.abs() < 1e-12 {
        Pose::new(
            pose.x + v * dt * pose.theta.cos(),
            pose.y + v * dt * pose.theta.sin(),
            pose.theta,
        )
    } else {
        let r = v / w;
        let t1 = pose.theta + w * dt;
        Pose::new(
            pose.x + r * (t1.sin() - pose.theta.sin()),
            pose.y + r * (pose.theta.cos() - t1.cos()),
            t1,
        )
    }
}

/// Parameters of the arc-turn follower.
#[derive(Debug, Clone, Copy)]
pub struct FollowParams {
    pub k_omega: f64,
    pub v_max: f64,
    pub omega_max: f64,
}

/// Steers toward a waypoint along an arc: turn rate proportional to the
/// heading error, forward speed scaled by its cosine. A larger error yields
/// a smaller arc radius, down to turning in place at 90 degrees and beyond.
pub fn follow_step(pose: &Pose, waypoint: (f64, f64), p: &FollowParams) -> VelocityCommand {
    let desired = (waypoint.1 - pose.y).atan2(waypoint.0 - pose.x);
    let err = normalize_angle(desired - pose.theta);
    let omega = (p.k_omega * err).clamp(-p.omega_max, p.omega_max);
    let v = p.v_max * err.cos().max(0.0);
    VelocityCommand { v, omega }
}

/// A disc-shaped walker that moves in straight random legs, re-sampling its
/// heading on wall proximity or leg expiry.
#[derive(Debug, Clone)]
pub struct DynamicEntity {
    pub pose: Pose,
    pub radius: f64,
    pub speed: f64,
    leg_time_left: f64,
    rng: ChaCha8Rng,
}

impl DynamicEntity {
    pub fn new(pose: Pose, radius: f64, speed: f64, rng: ChaCha8Rng) -> Self {
        debug_assert!(radius > 0.0);
        DynamicEntity {
            pose,
            radius,
            speed,
            leg_time_left: 0.0,
            rng,
        }
    }
}

/// True when a disc of `radius` centered at (x, y) overlaps no wall cell
/// (center-to-center check) and stays on the map.
pub fn disc_clear(grid: &OccupancyGrid, x: f64, y: f64, radius: f64) -> bool {
    let spec = grid.spec;
    if grid.spec.world_to_cell(x, y).is_err() {
        return false;
    }
    let r_cells = (radius / spec.resolution).ceil() as i64 + 1;
    let center = spec.world_to_cell(x, y).unwrap();
    for dy in -r_cells..=r_cells {
        for dx in -r_cells..=r_cells {
            let (cx, cy) = (center.x as i64 + dx, center.y as i64 + dy);
            if cx < 0 || cy < 0 || cx >= spec.width_cells as i64 || cy >= spec.height_cells as i64 {
                continue;
            }
            let c = crate::grid::Cell::new(cx as usize, cy as usize);
            if !grid.is_wall(c) {
                continue;
            }
            let (wx, wy) = spec.cell_to_world(c);
            if ((wx - x).powi(2) + (wy - y).powi(2)).sqrt() < radius {
                return false;
            }
        }
    }
    true
}

/// Advances every entity by `dt`: straight motion along the current leg,
/// heading re-sampled when the short-range probe ahead hits a wall or
/// another disc, or the leg expires. Entities never penetrate walls.
///
/// `avoid` is an extra disc obstacle, normally the robot: the walkers in
/// the modeled experiments were themselves robots running avoidance, so
/// they steer clear rather than walk through.
pub fn step_entities(
    grid: &OccupancyGrid,
    entities: &mut [DynamicEntity],
    dt: f64,
    avoid: Option<(f64, f64, f64)>,
) {
    debug_assert!(dt > 0.0);
    let others: Vec<(f64, f64, f64)> = entities
        .iter()
        .map(|e| (e.pose.x, e.pose.y, e.radius))
        .collect();
    for (i, e) in entities.iter_mut().enumerate() {
        e.leg_time_left -= dt;
        let probe_dist = e.radius + e.speed.max(0.3);
        let discs_clear = |px: f64, py: f64, e: &DynamicEntity| {
            let hit = |&(ox, oy, orad): &(f64, f64, f64)| {
                ((px - ox).powi(2) + (py - oy).powi(2)).sqrt() < e.radius + orad + 0.05
            };
            if avoid.as_ref().map_or(false, hit) {
                return false;
            }
            !others
                .iter()
                .enumerate()
                .any(|(j, o)| j != i && hit(o))
        };
        let probe_clear = |theta: f64, e: &DynamicEntity| {
            let px = e.pose.x + probe_dist * theta.cos();
            let py = e.pose.y + probe_dist * theta.sin();
            disc_clear(grid, px, py, e.radius) && discs_clear(px, py, e)
        };
        if e.leg_time_left <= 0.0 || !probe_clear(e.pose.theta, e) {
            for _ in 0..16 {
                let theta = e.rng.random_range(-PI..PI);
                if probe_clear(theta, e) {
                    e.pose = Pose::new(e.pose.x, e.pose.y, theta);
                    break;
                }
            }
            e.leg_time_left = e.rng.random_range(1.0..4.0);
        }
        let nx = e.pose.x + e.speed * dt * e.pose.theta.cos();
        let ny = e.pose.y + e.speed * dt * e.pose.theta.sin();
        if disc_clear(grid, nx, ny, e.radius) && discs_clear(nx, ny, e) {
            e.pose = Pose::new(nx, ny, e.pose.theta);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use rand::SeedableRng;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn straight_move() {
        let p = integrate(
            &Pose::new(1.0, 2.0, 0.0),
            &VelocityCommand { v: 0.2, omega: 0.0 },
            1.0,
        );
        assert!((p.x - 1.2).abs() < 1e-12);
        assert!((p.y - 2.0).abs() < 1e-12);
    }

    #[test]
    fn full_circle_returns_to_start() {
        let start = Pose::new(0.5, -0.3, 0.7);
        let cmd = VelocityCommand { v: 0.25, omega: 0.6 };
        let total = 2.0 * PI / cmd.omega;
        let mut p = start;
        for _ in 0..100 {
            p = integrate(&p, &cmd, total / 100.0);
        }
        assert!((p.x - start.x).abs() < 1e-9);
        assert!((p.y - start.y).abs() < 1e-9);
        assert!(normalize_angle(p.theta - start.theta).abs() < 1e-9);
    }

    #[test]
    fn half_steps_compose_exactly() {
        let start = Pose::new(0.1, 0.2, -1.1);
        let cmd = VelocityCommand { v: 0.3, omega: -0.8 };
        let whole = integrate(&start, &cmd, 0.2);
        let halves = integrate(&integrate(&start, &cmd, 0.1), &cmd, 0.1);
        assert!((whole.x - halves.x).abs() < 1e-12);
        assert!((whole.y - halves.y).abs() < 1e-12);
        assert!(normalize_angle(whole.theta - halves.theta).abs() < 1e-12);
    }

    #[test]
    fn theta_stays_normalized() {
        let mut p = Pose::new(0.0, 0.0, 3.0);
        for _ in 0..200 {
            p = integrate(&p, &VelocityCommand { v: 0.1, omega: 0.9 }, 0.1);
            assert!(p.theta > -PI && p.theta <= PI);
        }
    }

    #[test]
    fn follow_dead_ahead() {
        let p = FollowParams {
            k_omega: 1.5,
            v_max: 0.3,
            omega_max: 1.0,
        };
        let cmd = follow_step(&Pose::new(0.0, 0.0, 0.0), (2.0, 0.0), &p);
        assert_eq!(cmd.omega, 0.0);
        assert!((cmd.v - 0.3).abs() < 1e-12);
    }

    #[test]
    fn follow_perpendicular_turns_in_place() {
        let p = FollowParams {
            k_omega: 1.5,
            v_max: 0.3,
            omega_max: 1.0,
        };
        let cmd = follow_step(&Pose::new(0.0, 0.0, 0.0), (0.0, 2.0), &p);
        assert!(cmd.v.abs() < 1e-12);
        assert_eq!(cmd.omega, 1.0); // clamped, 1.5 * pi/2 > omega_max
        let _ = FRAC_PI_2;
    }

    #[test]
    fn follow_never_exceeds_bounds() {
        let p = FollowParams {
            k_omega: 1.5,
            v_max: 0.3,
            omega_max: 1.0,
        };
        for i in 0..64 {
            let theta = -PI + i as f64 * 2.0 * PI / 64.0;
            let cmd = follow_step(&Pose::new(0.0, 0.0, theta), (1.0, 1.0), &p);
            assert!(cmd.v >= 0.0 && cmd.v <= p.v_max + 1e-12);
            assert!(cmd.omega.abs() <= p.omega_max + 1e-12);
        }
    }

    #[test]
    fn arc_radius_shrinks_with_error() {
        let p = FollowParams {
            k_omega: 1.5,
            v_max: 0.3,
            omega_max: 10.0, // avoid the clamp to observe the raw law
        };
        let mut last_radius = f64::INFINITY;
        for deg in [10.0f64, 30.0, 50.0, 70.0, 85.0] {
            let err = deg.to_radians();
            let cmd = follow_step(&Pose::new(0.0, 0.0, 0.0), (err.cos(), err.sin()), &p);
            let radius = cmd.v / cmd.omega;
            assert!(radius < last_radius, "radius not shrinking at {deg} deg");
            last_radius = radius;
        }
    }

    #[test]
    fn entities_move_straight_in_open_space() {
        let grid = OccupancyGrid::empty(GridSpec::new(100, 100, 0.1), 7.0).unwrap();
        let rng = ChaCha8Rng::seed_from_u64(1);
        let mut entities = vec![DynamicEntity::new(Pose::new(5.0, 5.0, 0.0), 0.2, 0.2, rng)];
        step_entities(&grid, &mut entities, 0.1, None);
        let theta = entities[0].pose.theta;
        let before = entities[0].pose;
        step_entities(&grid, &mut entities, 0.1, None);
        // within a leg the heading holds and motion is straight
        assert_eq!(entities[0].pose.theta, theta);
        assert!(entities[0].pose.distance_to(before.x, before.y) > 0.0);
    }

    #[test]
    fn entities_are_deterministic() {
        let grid = OccupancyGrid::empty(GridSpec::new(60, 60, 0.1), 7.0).unwrap();
        let run = || {
            let rng = ChaCha8Rng::seed_from_u64(42);
            let mut entities =
                vec![DynamicEntity::new(Pose::new(3.0, 3.0, 0.0), 0.2, 0.3, rng)];
            for _ in 0..300 {
                step_entities(&grid, &mut entities, 0.1, None);
            }
            entities[0].pose
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn entities_never_penetrate_walls() {
        // box of walls around a small arena
        let mut pixels = vec![255u8; 40 * 40];
        for i in 0..40 {
            pixels[i] = 0;
            pixels[39 * 40 + i] = 0;
            pixels[i * 40] = 0;
            pixels[i * 40 + 39] = 0;
        }
        let bytes = crate::pgm::write_pgm(40, 40, &pixels, "");
        let grid = OccupancyGrid::load_map(&bytes, 0.1, 7.0).unwrap();
        let rng = ChaCha8Rng::seed_from_u64(7);
        let mut entities = vec![DynamicEntity::new(Pose::new(2.0, 2.0, 0.3), 0.15, 0.4, rng)];
        for _ in 0..2000 {
            step_entities(&grid, &mut entities, 0.1, None);
            let e = &entities[0];
            assert!(disc_clear(&grid, e.pose.x, e.pose.y, e.radius));
        }
    }
}
