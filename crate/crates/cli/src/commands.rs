//! The batch subcommands. Each returns the JSON document for stdout and
//! whether the solve met its success criteria.

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::Args;
use kinoptik::tasks::bench::{batched_ik_benchmark, mobile_benchmark, trajectory_benchmark, IkStats};
use kinoptik::tasks::{plan_trajectory, solve_ik_beam, solve_ik_mobile, trajectory_scene, IkRequest, IkResult, TrajRequest, TrajResult};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::input::{load_weights, load_world, parse_pose, read, workers, ProblemFile, RobotArgs, TaskKind};

/// Trajectory endpoints count as reached under the IK success tolerances.
const POS_TOL: f64 = 0.005;
const ROT_TOL: f64 = 0.05;

#[derive(Args, Debug)]
pub struct SolveIkArgs {
    #[command(flatten)]
    pub robot: RobotArgs,
    /// Target pose as JSON: {"wxyz":[w,x,y,z],"pos":[x,y,z]}.
    #[arg(long, conflicts_with = "target_file")]
    pub target: Option<String>,
    /// File holding the target pose JSON.
    #[arg(long)]
    pub target_file: Option<PathBuf>,
    /// Cost weights JSON file; missing fields keep their defaults.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Obstacles JSON file.
    #[arg(long)]
    pub world: Option<PathBuf>,
    /// Optimize a planar base pose along with the joints.
    #[arg(long)]
    pub mobile: bool,
    #[arg(long)]
    pub rng_seed: Option<u64>,
    /// Number of IK-Beam start seeds.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// JSON problem file; flags override its fields.
    #[arg(long)]
    pub problem: Option<PathBuf>,
}

#[derive(Serialize)]
struct IkOutput<'a> {
    link: &'a str,
    #[serde(flatten)]
    result: &'a IkResult,
    cost_history: &'a [f64],
}

pub fn solve_ik(args: SolveIkArgs) -> Result<(Value, bool)> {
    let problem = ProblemFile::load(args.problem.as_deref())?;
    problem.expect_task(&[TaskKind::Ik, TaskKind::IkMobile])?;
    let (model, link) = args.robot.or(problem.robot()).load()?;
    let target = match (&args.target, &args.target_file, problem.target) {
        (Some(t), _, _) => parse_pose(t, "target")?,
        (None, Some(path), _) => parse_pose(&read(path, "target file")?, "target")?,
        (None, None, Some(t)) => t,
        (None, None, None) => bail!("no target pose: pass --target or --target-file"),
    };
    let mut req = IkRequest::new(Arc::clone(&model), link, target);
    if let Some(w) = problem.weights {
        req.weights = w;
    }
    if let Some(path) = &args.weights {
        req.weights = load_weights(path)?;
    }
    if let Some(w) = problem.world {
        req.world = w;
    }
    if let Some(path) = &args.world {
        req.world = load_world(path)?;
    }
    req.rng_seed = args.rng_seed.or(problem.options.rng_seed).unwrap_or(0);
    if let Some(s) = args.seeds.or(problem.options.seeds) {
        req.seeds = s;
        req.keep = req.keep.min(s);
    }
    req.workers = workers(args.workers)?;
    let mobile = args.mobile || problem.task == Some(TaskKind::IkMobile);
    let result = if mobile { solve_ik_mobile(&req)? } else { solve_ik_beam(&req)? };
    let out = IkOutput { link: model.link_name(link), result: &result, cost_history: &result.report.cost_history };
    Ok((serde_json::to_value(out)?, result.success))
}

#[derive(Args, Debug)]
pub struct PlanTrajArgs {
    #[command(flatten)]
    pub robot: RobotArgs,
    /// Start pose JSON.
    #[arg(long)]
    pub start: Option<String>,
    /// Goal pose JSON.
    #[arg(long)]
    pub goal: Option<String>,
    /// Generated obstacle scene with this seed instead of explicit poses and world.
    #[arg(long, conflicts_with_all = ["start", "goal", "world"])]
    pub scene: Option<u64>,
    /// Obstacles JSON file.
    #[arg(long)]
    pub world: Option<PathBuf>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub timesteps: Option<usize>,
    /// Seconds between timesteps.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Seed of the endpoint IK.
    #[arg(long)]
    pub rng_seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub problem: Option<PathBuf>,
}

#[derive(Serialize)]
struct TrajOutput<'a> {
    link: &'a str,
    timesteps: usize,
    dt: f64,
    success: bool,
    #[serde(flatten)]
    result: &'a TrajResult,
    cost_history: &'a [f64],
}

pub fn plan_traj(args: PlanTrajArgs) -> Result<(Value, bool)> {
    let problem = ProblemFile::load(args.problem.as_deref())?;
    problem.expect_task(&[TaskKind::Traj])?;
    let (model, link) = args.robot.or(problem.robot()).load()?;
    let (start, goal, mut world) = match args.scene {
        Some(seed) => {
            let s = trajectory_scene(&model, link, seed)?;
            (s.start_pose, s.goal_pose, s.world)
        }
        None => {
            let pose = |flag: &Option<String>, file: Option<_>, what: &str| match (flag, file) {
                (Some(t), _) => parse_pose(t, what),
                (None, Some(p)) => Ok(p),
                (None, None) => bail!("no {what} pose: pass --{what}"),
            };
            (
                pose(&args.start, problem.start, "start")?,
                pose(&args.goal, problem.goal, "goal")?,
                problem.world.unwrap_or_default(),
            )
        }
    };
    if let Some(path) = &args.world {
        world = load_world(path)?;
    }
    let mut req = TrajRequest::new(Arc::clone(&model), link, start, goal);
    req.world = world;
    if let Some(w) = problem.weights {
        req.weights = w;
    }
    if let Some(path) = &args.weights {
        req.weights = load_weights(path)?;
    }
    if let Some(t) = args.timesteps.or(problem.options.timesteps) {
        req.timesteps = t;
    }
    if let Some(dt) = args.dt.or(problem.options.dt) {
        req.dt = dt;
    }
    req.ik_seed = args.rng_seed.or(problem.options.rng_seed).unwrap_or(0);
    req.workers = workers(args.workers)?;
    let result = plan_trajectory(&req)?;
    let success = result.collision_free
        && result.start_error.0 < POS_TOL
        && result.goal_error.0 < POS_TOL
        && result.start_error.1 < ROT_TOL
        && result.goal_error.1 < ROT_TOL;
    let out = TrajOutput {
        link: model.link_name(link),
        timesteps: req.timesteps,
        dt: req.dt,
        success,
        result: &result,
        cost_history: &result.report.cost_history,
    };
    Ok((serde_json::to_value(out)?, success))
}

/// A benchmark description. Paths are relative to the spec file.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub task: TaskKind,
    pub num_targets: usize,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_batch_sizes")]
    pub batch_sizes: Vec<usize>,
    pub urdf: Option<PathBuf>,
    pub sidecar: Option<PathBuf>,
    pub robot: Option<String>,
    pub link: Option<String>,
    /// Radius of the planar base offsets for `ik_mobile`, in meters.
    #[serde(default = "default_radius")]
    pub radius: f64,
}

fn default_batch_sizes() -> Vec<usize> {
    vec![1]
}

fn default_radius() -> f64 {
    2.0
}

impl BenchmarkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_targets == 0 {
            bail!("num_targets must be at least 1");
        }
        if self.batch_sizes.is_empty() || self.batch_sizes.contains(&0) {
            bail!("batch_sizes must be a non-empty list of positive sizes");
        }
        if !(self.radius.is_finite() && self.radius >= 0.0) {
            bail!("radius must be non-negative");
        }
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct BenchmarkArgs {
    /// Benchmark spec JSON file.
    pub spec: PathBuf,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Print the text table on stdout instead of the JSON.
    #[arg(long)]
    pub text: bool,
}

fn stats_json(s: &IkStats) -> Value {
    json!({
        "count": s.count,
        "successes": s.successes,
        "success_rate": s.success_rate,
        "pos_error": { "mean": s.mean_pos_error, "std": s.std_pos_error, "p98": s.p98_pos_error, "max": s.max_pos_error },
        "rot_error": { "mean": s.mean_rot_error, "std": s.std_rot_error, "p98": s.p98_rot_error },
    })
}

/// Runs the benchmark. The JSON document is the machine output; the table is derived from it.
pub fn benchmark(args: &BenchmarkArgs) -> Result<(Value, String)> {
    let spec: BenchmarkSpec = serde_json::from_str(&read(&args.spec, "benchmark spec")?)
        .with_context(|| format!("invalid benchmark spec {}", args.spec.display()))?;
    spec.validate()?;
    let dir = args.spec.parent().map(PathBuf::from).unwrap_or_default();
    let robot = RobotArgs {
        urdf: spec.urdf.as_ref().map(|u| dir.join(u)),
        sidecar: spec.sidecar.as_ref().map(|s| dir.join(s)),
        robot: spec.robot.clone(),
        link: spec.link.clone(),
    };
    let (model, link) = robot.load()?;
    let workers = workers(args.workers)?;
    let (n, seed) = (spec.num_targets, spec.rng_seed);
    let (rows, timing) = match spec.task {
        TaskKind::Ik => {
            let rows = batched_ik_benchmark(&model, link, n, seed, &spec.batch_sizes, workers)?;
            let timing: Vec<Value> = rows
                .iter()
                .map(|r| json!({ "batch_size": r.batch_size, "seconds_per_batch": r.seconds_per_batch }))
                .collect();
            let rows: Vec<Value> = rows
                .iter()
                .map(|r| {
                    let mut v = stats_json(&r.stats);
                    v["batch_size"] = json!(r.batch_size);
                    v
                })
                .collect();
            (rows, json!(timing))
        }
        TaskKind::IkMobile => {
            let b = mobile_benchmark(&model, link, n, seed, spec.radius, workers)?;
            let row = |name: &str, s: &IkStats| {
                let mut v = stats_json(s);
                v["base"] = json!(name);
                v
            };
            (vec![row("static", &b.static_base), row("optimized", &b.optimized)], json!({ "seconds": b.seconds }))
        }
        TaskKind::Traj => {
            let b = trajectory_benchmark(&model, link, n, seed, workers)?;
            let rows = b
                .scenes
                .iter()
                .map(|s| {
                    let mut v = serde_json::to_value(s)?;
                    v["feasible"] = json!(s.feasible(POS_TOL, ROT_TOL));
                    Ok(v)
                })
                .collect::<Result<Vec<_>>>()?;
            (rows, json!({ "seconds": b.seconds }))
        }
    };
    let doc = json!({
        "task": spec.task,
        "robot": spec.robot.clone().or_else(|| spec.urdf.as_ref().map(|u| u.display().to_string())),
        "link": model.link_name(link),
        "num_targets": n,
        "rng_seed": seed,
        "rows": rows,
        "timing_informational": timing,
    });
    let table = render_table(spec.task, &doc);
    Ok((doc, table))
}

fn pct(v: &Value) -> String {
    format!("{:.1}", 100.0 * v.as_f64().unwrap_or(f64::NAN))
}

fn mm(v: &Value) -> String {
    format!("{:.3}", 1e3 * v.as_f64().unwrap_or(f64::NAN))
}

fn num(v: &Value, digits: usize) -> String {
    v.as_f64().map_or_else(|| "-".into(), |x| format!("{x:.digits$}"))
}

/// Right-aligned columns; the first column is left-aligned.
fn align(header: &[&str], body: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<String>| {
        cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(k, (c, w))| if k == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = vec![line(header.iter().map(|h| h.to_string()).collect())];
    out.push(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    out.extend(body.iter().map(|r| line(r.clone())));
    out.join("\n") + "\n"
}

fn render_table(task: TaskKind, doc: &Value) -> String {
    let rows = doc["rows"].as_array().map(Vec::as_slice).unwrap_or_default();
    let timing = &doc["timing_informational"];
    match task {
        TaskKind::Ik => {
            let body: Vec<Vec<String>> = rows
                .iter()
                .zip(timing.as_array().map(Vec::as_slice).unwrap_or_default())
                .map(|(r, t)| {
                    vec![
                        r["batch_size"].to_string(),
                        pct(&r["success_rate"]),
                        mm(&r["pos_error"]["p98"]),
                        num(&r["rot_error"]["p98"], 4),
                        num(&t["seconds_per_batch"], 3),
                    ]
                })
                .collect();
            align(&["batch", "success %", "p98 pos [mm]", "p98 rot [rad]", "s/batch (informational)"], &body)
        }
        TaskKind::IkMobile => {
            let pm = |e: &Value, scale: f64, d: usize| {
                let (m, s) = (e["mean"].as_f64().unwrap_or(f64::NAN), e["std"].as_f64().unwrap_or(f64::NAN));
                format!("{:.d$} ± {:.d$}", scale * m, scale * s)
            };
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r["base"].as_str().unwrap_or("").to_string(),
                        pct(&r["success_rate"]),
                        pm(&r["pos_error"], 1e3, 2),
                        pm(&r["rot_error"], 1.0, 4),
                    ]
                })
                .collect();
            let mut t = align(&["base", "success %", "pos error [mm]", "rot error [rad]"], &body);
            t += &format!("total seconds (informational): {}\n", num(&timing["seconds"], 2));
            t
        }
        TaskKind::Traj => {
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r["seed"].to_string(),
                        if r["feasible"] == json!(true) { "yes".into() } else { "no".into() },
                        num(&r["min_world_distance"], 4),
                        num(&r["min_swept_distance"], 4),
                        r["iterations"].to_string(),
                    ]
                })
                .collect();
            let mut t = align(&["scene", "feasible", "min dist [m]", "min swept [m]", "iterations"], &body);
            t += &format!("total seconds (informational): {}\n", num(&timing["seconds"], 2));
            t
        }
    }
}
