//! Command-line harness: one-shot planning, deterministic scenario runs and
//! rule-table inspection.
//!
//! Exit codes: 0 goal reached (or subcommand succeeded), 2 goal not reached
//! (no path, timeout, off map), 3 input error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wavenav::grid::OccupancyGrid;
use wavenav::nav::NavConfig;
use wavenav::render;
use wavenav::scenario::{self, RunOptions};

#[derive(Parser)]
#[command(
    name = "wavenav",
    about = "Wavefront path planning with fuzzy obstacle avoidance on occupancy grids",
    long_about = None,
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Suppress per-run progress output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Plan a path once on a map and report steps, length and timing.
    Plan(PlanArgs),
    /// Run a scenario simulation to completion.
    Run(RunArgs),
    /// Print the resolved fuzzy rule tables and membership breakpoints.
    DumpRules,
}

#[derive(Args)]
struct PlanArgs {
    /// PGM map file (P2 or P5); pixels < 128 are walls.
    #[arg(long)]
    map: PathBuf,
    /// Map resolution in meters per cell.
    #[arg(long, default_value_t = 0.1)]
    resolution: f64,
    /// Start position "x,y" in meters.
    #[arg(long, value_parser = parse_point)]
    start: (f64, f64),
    /// Goal position "x,y" in meters.
    #[arg(long, value_parser = parse_point)]
    goal: (f64, f64),
    /// Safety distance added to the robot radius for inflation (m).
    #[arg(long, default_value_t = 0.07)]
    safety_distance: f64,
    /// Directory for field/path renders.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Directory for trajectory, events, summary and frames.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Override the scenario seed (also WAVENAV_SEED).
    #[arg(long)]
    seed: Option<u64>,
    /// Write a PPM frame every N ticks.
    #[arg(long)]
    render_every: Option<usize>,
}

fn parse_point(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected \"x,y\", got {s:?}"));
    }
    let x = parts[0].trim().parse().map_err(|e| format!("x: {e}"))?;
    let y = parts[1].trim().parse().map_err(|e| format!("y: {e}"))?;
    Ok((x, y))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Plan(args) => cmd_plan(args, cli.quiet),
        Command::Run(args) => cmd_run(args, cli.quiet),
        Command::DumpRules => cmd_dump_rules(),
    }
}

const EXIT_NOT_REACHED: u8 = 2;
const EXIT_INPUT_ERROR: u8 = 3;

fn cmd_plan(args: &PlanArgs, quiet: bool) -> ExitCode {
    let bytes = match fs::read(&args.map) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: reading {}: {e}", args.map.display());
            return ExitCode::from(EXIT_INPUT_ERROR);
        }
    };
    let mut cfg = NavConfig::default();
    cfg.resolution = args.resolution;
    cfg.safety_distance = args.safety_distance;
    let map = match OccupancyGrid::load_map(&bytes, cfg.resolution, cfg.occupancy_threshold) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INPUT_ERROR);
        }
    };
    let start = match map.spec.world_to_cell(args.start.0, args.start.1) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: start: {e}");
            return ExitCode::from(EXIT_INPUT_ERROR);
        }
    };
    let goal = match map.spec.world_to_cell(args.goal.0, args.goal.1) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: goal: {e}");
            return ExitCode::from(EXIT_INPUT_ERROR);
        }
    };
    match scenario::plan_once(&map, start, goal, &cfg) {
        Ok(result) => {
            if !quiet {
                for (i, step) in result.plan.steps.iter().enumerate() {
                    println!(
                        "step {:2}: angle {:7.2} deg, length {:6.3} m, waypoint cell ({}, {})",
                        i + 1,
                        step.angle.to_degrees(),
                        step.length,
                        step.end_cell.x,
                        step.end_cell.y
                    );
                }
                println!("path length: {:.3} m", result.plan.length());
                println!(
                    "planning time (propagate + extract): {:.3} ms",
                    result.planning_seconds * 1e3
                );
            }
            if let Err(e) = fs::create_dir_all(&args.out_dir) {
                eprintln!("error: creating {}: {e}", args.out_dir.display());
                return ExitCode::from(EXIT_INPUT_ERROR);
            }
            let field_path = args.out_dir.join("field.pgm");
            let path_path = args.out_dir.join("path.pgm");
            let ok = fs::write(&field_path, result.field.export_pgm()).is_ok()
                && fs::write(
                    &path_path,
                    render::render_plan_pgm(&map, &result.cspace, &result.plan),
                )
                .is_ok();
            if !ok {
                eprintln!("error: writing renders to {}", args.out_dir.display());
                return ExitCode::from(EXIT_INPUT_ERROR);
            }
            if !quiet {
                println!(
                    "wrote {} and {}",
                    field_path.display(),
                    path_path.display()
                );
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("planning failed: {e}");
            ExitCode::from(EXIT_NOT_REACHED)
        }
    }
}

fn cmd_run(args: &RunArgs, quiet: bool) -> ExitCode {
    let text = match fs::read_to_string(&args.scenario) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: reading {}: {e}", args.scenario.display());
            return ExitCode::from(EXIT_INPUT_ERROR);
        }
    };
    let base_dir = args
        .scenario
        .parent()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    let scenario = match scenario::parse_scenario(&text, &base_dir) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INPUT_ERROR);
        }
    };
    let env_seed = std::env::var("WAVENAV_SEED")
        .ok()
        .and_then(|v| v.parse::<u64>().ok());
    let opts = RunOptions {
        seed_override: args.seed.or(env_seed),
        render_every: args.render_every,
    };
    match scenario::run(&scenario, &args.out_dir, &opts) {
        Ok((summary, artifacts)) => {
            if !quiet {
                println!(
                    "reached: {}  stop: {:?}  sim time: {:.1} s  path: {:.2} m  replans: {}  \
                     min clearance: {:.3} m  collisions: {}",
                    summary.reached,
                    summary.stop_reason,
                    summary.sim_time,
                    summary.path_length,
                    summary.replan_count,
                    summary.min_clearance,
                    summary.collision_count
                );
                println!("summary: {}", artifacts.summary_json.display());
            }
            if summary.reached {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_NOT_REACHED)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INPUT_ERROR)
        }
    }
}

fn cmd_dump_rules() -> ExitCode {
    use wavenav::fuzzy::{RuleBase, Side, Term, TurnRule};
    let cfg = NavConfig::default();
    let rb = RuleBase::default();
    let name = |t: Term| match t {
        Term::NM => "NM",
        Term::NS => "NS",
        Term::ZE => "ZE",
        Term::PS => "PS",
        Term::PM => "PM",
    };
    let dist_names = ["ZE", "PS", "PM"];
    let angle_header = "          NM    NS    ZE    PS    PM";

    println!("speed rules (distance x angle):");
    println!("{angle_header}");
    for (d, row) in rb.speed.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|&t| format!("{:>4}", name(t))).collect();
        println!("  {:>2}  {}", dist_names[d], cells.join("  "));
    }

    println!("\nturn-rate rules (ambiguous angle-ZE cells shown as left|right):");
    println!("{angle_header}");
    for (d, row) in rb.turn.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .map(|r| match r {
                TurnRule::Fixed(t) => format!("{:>5}", name(*t)),
                TurnRule::Ambiguous { left, right } => {
                    format!("{}|{}", name(*left), name(*right))
                }
            })
            .collect();
        println!("  {:>2}  {}", dist_names[d], cells.join("  "));
    }
    for side in [Side::Left, Side::Right] {
        println!("\nresolved for waypoint {side:?}:");
        for (d, row) in rb.resolve_turn_table(side).iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|&t| format!("{:>4}", name(t))).collect();
            println!("  {:>2}  {}", dist_names[d], cells.join("  "));
        }
    }

    let fuzzy = cfg.build_fuzzy().expect("default sets are valid");
    println!("\nmembership breakpoints:");
    for (label, mf) in [
        ("angle NM", &fuzzy.angle_sets.nm),
        ("angle NS", &fuzzy.angle_sets.ns),
        ("angle ZE", &fuzzy.angle_sets.ze),
        ("angle PS", &fuzzy.angle_sets.ps),
        ("angle PM", &fuzzy.angle_sets.pm),
        ("distance ZE", &fuzzy.distance_sets.ze),
        ("distance PS", &fuzzy.distance_sets.ps),
        ("distance PM", &fuzzy.distance_sets.pm),
        ("speed ZE", &fuzzy.speed_sets.ze),
        ("speed PS", &fuzzy.speed_sets.ps),
        ("speed PM", &fuzzy.speed_sets.pm),
        ("turn NM", &fuzzy.turn_sets.nm),
        ("turn NS", &fuzzy.turn_sets.ns),
        ("turn ZE", &fuzzy.turn_sets.ze),
        ("turn PS", &fuzzy.turn_sets.ps),
        ("turn PM", &fuzzy.turn_sets.pm),
    ] {
        let pts: Vec<String> = mf
            .points
            .iter()
            .map(|&(x, g)| format!("({x:.3}, {g:.1})"))
            .collect();
        let mut flags = String::new();
        if mf.left_shoulder {
            flags.push_str(" left-shoulder");
        }
        if mf.right_shoulder {
            flags.push_str(" right-shoulder");
        }
        println!("  {label:12} {}{}", pts.join(" "), flags);
    }
    ExitCode::SUCCESS
}
