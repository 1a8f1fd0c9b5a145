use std::cmp::Ordering;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SolveSummary, TaskError};
use crate::collision::WorldModel;
use crate::costs::{
    limit_cost, manipulability_cost, pose_cost, rest_cost, self_collision_cost, world_collision_cost, BaseVar,
    CollisionSettings, CostWeights,
};
use crate::liegroups::{Transform2, Transform3};
use crate::robot::RobotModel;
use crate::solver::{
    solve_batch_with, CostTerm, Problem, SolveOptions, SolveReport, VarId, VarValue, VariableSet,
};

#[derive(Clone, Debug)]
pub struct IkRequest {
    pub model: Arc<RobotModel>,
    pub target_link: usize,
    pub target_pose: Transform3,
    pub weights: CostWeights,
    pub seeds: usize,
    pub total_steps: usize,
    pub prune_after: usize,
    pub keep: usize,
    pub success_pos_tol: f64,
    pub success_rot_tol: f64,
    pub rng_seed: u64,
    /// Obstacles penalized with the `world_collision` weight.
    pub world: WorldModel,
    pub self_collision: CollisionSettings,
    pub world_collision: CollisionSettings,
    /// Weight on `log(base)` for mobile solves; 0 leaves the base free.
    pub base_regularization: f64,
    /// Mobile solves keep the base at identity without a base variable.
    pub pin_base: bool,
    pub workers: usize,
}

impl IkRequest {
    pub fn new(model: Arc<RobotModel>, target_link: usize, target_pose: Transform3) -> Self {
        IkRequest {
            model,
            target_link,
            target_pose,
            weights: CostWeights::default(),
            seeds: 64,
            total_steps: 16,
            prune_after: 6,
            keep: 4,
            success_pos_tol: 0.005,
            success_rot_tol: 0.05,
            rng_seed: 0,
            world: WorldModel::default(),
            self_collision: CollisionSettings::self_default(),
            world_collision: CollisionSettings::world_default(),
            base_regularization: 0.0,
            pin_base: false,
            workers: 1,
        }
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        let bad = |m: String| Err(TaskError::InvalidRequest(m));
        if self.target_link >= self.model.links.len() {
            return bad(format!("unknown target link index {}", self.target_link));
        }
        if self.seeds == 0 || self.keep == 0 || self.keep > self.seeds {
            return bad(format!("need 1 ≤ keep ≤ seeds, got keep {} and seeds {}", self.keep, self.seeds));
        }
        if self.prune_after >= self.total_steps {
            return bad(format!(
                "prune_after ({}) must be below total_steps ({})",
                self.prune_after, self.total_steps
            ));
        }
        if !(self.success_pos_tol > 0.0 && self.success_rot_tol > 0.0) {
            return bad("success tolerances must be positive".into());
        }
        if !(self.base_regularization.is_finite() && self.base_regularization >= 0.0) {
            return bad("base_regularization must be non-negative".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        self.weights.validate().map_err(TaskError::InvalidRequest)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IkResult {
    pub q: Vec<f64>,
    pub base: Option<Transform2>,
    pub pos_error: f64,
    pub rot_error: f64,
    pub success: bool,
    pub report: SolveSummary,
    /// Final cost of each stage-2 seed, in stage-1 rank order.
    pub survivor_costs: Vec<f64>,
}

/// Uniform within position limits; unbounded joints in `[−π, π]`.
pub fn sample_config(model: &RobotModel, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_iterator(
        model.actuated_count(),
        model.position_limits().into_iter().map(|lim| match lim {
            Some(l) if l.upper > l.lower => rng.random_range(l.lower..=l.upper),
            Some(l) => l.lower,
            None => rng.random_range(-PI..=PI),
        }),
    )
}

/// `(‖p‖, angle)` of `target⁻¹ ∘ achieved`.
pub fn pose_errors(target: &Transform3, achieved: &Transform3) -> (f64, f64) {
    let rel = target.inverse().compose(achieved);
    (rel.translation.norm(), rel.rotation.angle())
}

fn seed_rng(rng_seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rng.set_stream(index as u64);
    rng
}

/// IK problem from explicit initial values. `base` adds a planar base variable.
pub(crate) fn build_ik_problem(
    req: &IkRequest,
    q0: DVector<f64>,
    base: Option<Transform2>,
) -> Result<(Problem, VarId, Option<VarId>), TaskError> {
    let model = &req.model;
    let w = &req.weights;
    let mut vars = VariableSet::new();
    let q = vars.add("q", VarValue::Euclidean(q0))?;
    let base_id = match base {
        Some(b) => Some(vars.add("base", VarValue::Transform2(b))?),
        None => None,
    };
    let mut costs = vec![pose_cost(
        model,
        &vars,
        q,
        req.target_link,
        &req.target_pose,
        base_id.map(BaseVar::Planar),
        w.pose_position,
        w.pose_orientation,
    )?];
    if w.limit > 0.0 {
        costs.push(limit_cost(model, &vars, q)?.weighted(w.limit));
    }
    if w.rest > 0.0 {
        costs.push(rest_cost(&vars, q, model.rest_pose())?.weighted(w.rest));
    }
    if w.manipulability > 0.0 {
        costs.push(manipulability_cost(model, &vars, q, req.target_link)?.weighted(w.manipulability));
    }
    if w.self_collision > 0.0 && !model.self_collision_pairs.is_empty() {
        costs.push(self_collision_cost(model, &vars, q, req.self_collision)?.weighted(w.self_collision));
    }
    if w.world_collision > 0.0 && !req.world.obstacles.is_empty() {
        costs.push(
            world_collision_cost(model, &vars, q, &req.world, req.world_collision)?.weighted(w.world_collision),
        );
    }
    if let Some(b) = base_id.filter(|_| req.base_regularization > 0.0) {
        costs.push(
            CostTerm::from_fn("base_regularization", vec![b], 3, |v| {
                DVector::from_column_slice(v[0].as_transform2().unwrap().log().as_slice())
            })
            .weighted(req.base_regularization),
        );
    }
    let mut problem = Problem::new(vars);
    for c in costs {
        problem.add_cost(c)?;
    }
    Ok((problem, q, base_id))
}

pub(crate) fn achieved_link_pose(model: &RobotModel, q: &[f64], link: usize) -> Transform3 {
    model.forward_kinematics_unchecked(q)[link]
}

fn achieved_pose(req: &IkRequest, q: &[f64], base: Option<&Transform2>) -> Transform3 {
    let link = achieved_link_pose(&req.model, q, req.target_link);
    match base {
        Some(b) => b.to_transform3().compose(&link),
        None => link,
    }
}

fn rank(reports: &[Result<SolveReport, crate::solver::SolveError>]) -> Vec<usize> {
    let cost = |k: usize| reports[k].as_ref().map_or(f64::INFINITY, |r| r.final_cost);
    let mut order: Vec<usize> = (0..reports.len()).collect();
    order.sort_by(|&a, &b| cost(a).partial_cmp(&cost(b)).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    order
}

fn beam(req: &IkRequest, mobile: bool) -> Result<IkResult, TaskError> {
    req.validate()?;
    let base0 = (mobile && !req.pin_base).then(Transform2::identity);
    let mut stage1 = Vec::with_capacity(req.seeds);
    for i in 0..req.seeds {
        let q0 = sample_config(&req.model, &mut seed_rng(req.rng_seed, i));
        let (problem, _, _) = build_ik_problem(req, q0, base0)?;
        let options = SolveOptions { max_iterations: req.prune_after, ..SolveOptions::default() };
        stage1.push((problem, options));
    }
    let first = solve_batch_with(&stage1, req.workers)?;
    let order = rank(&first);
    if first[order[0]].is_err() {
        return Err(first.into_iter().nth(order[0]).unwrap().unwrap_err().into());
    }

    let survivors: Vec<usize> = order
        .into_iter()
        .take(req.keep)
        .filter(|&k| first[k].is_ok())
        .collect();
    let stage2: Vec<(Problem, SolveOptions)> = survivors
        .iter()
        .map(|&k| {
            let r = first[k].as_ref().unwrap();
            let mut problem = stage1[k].0.clone();
            problem.variables = r.final_values.clone();
            // Damping carries over from stage 1.
            let options = SolveOptions {
                max_iterations: req.total_steps - req.prune_after,
                initial_damping: r.final_damping,
                ..SolveOptions::default()
            };
            (problem, options)
        })
        .collect();
    let second = solve_batch_with(&stage2, req.workers)?;
    let best = rank(&second)[0];
    let (k, r2) = (survivors[best], second[best].as_ref().map_err(|e| TaskError::Solve(e.clone()))?);
    let r1 = first[k].as_ref().unwrap();

    let values = &r2.final_values;
    let q = values.get(VarId(0)).as_vector().unwrap().as_slice().to_vec();
    let solved_base = base0.map(|_| *values.get(VarId(1)).as_transform2().unwrap());
    let (pos_error, rot_error) = pose_errors(&req.target_pose, &achieved_pose(req, &q, solved_base.as_ref()));
    let base = mobile.then(|| solved_base.unwrap_or_else(Transform2::identity));
    let survivor_costs = second.iter().map(|r| r.as_ref().map_or(f64::INFINITY, |r| r.final_cost)).collect();
    let mut history = r1.cost_history.clone();
    history.extend_from_slice(&r2.cost_history[1..]);
    Ok(IkResult {
        q,
        base,
        pos_error,
        rot_error,
        success: pos_error < req.success_pos_tol && rot_error < req.success_rot_tol,
        report: SolveSummary {
            initial_cost: r1.initial_cost,
            final_cost: r2.final_cost,
            iterations: r1.iterations_run + r2.iterations_run,
            termination: r2.termination,
            cost_history: history,
        },
        survivor_costs,
    })
}

/// Multi-start IK: all seeds for `prune_after` steps, then the best `keep`
/// for the remaining steps.
pub fn solve_ik_beam(req: &IkRequest) -> Result<IkResult, TaskError> {
    beam(req, false)
}

/// [`solve_ik_beam`] with a planar base pose optimized alongside the joints.
pub fn solve_ik_mobile(req: &IkRequest) -> Result<IkResult, TaskError> {
    beam(req, true)
}
