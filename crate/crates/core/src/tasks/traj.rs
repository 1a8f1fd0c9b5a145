use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::ik::{achieved_link_pose, solve_ik_beam, IkRequest, IkResult};
use super::{pose_errors, SolveSummary, TaskError};
use crate::collision::WorldModel;
use crate::costs::{
    acceleration_cost, jerk_cost, limit_cost, min_self_distance, min_swept_world_distance, min_world_distance,
    rest_cost, self_collision_cost, smoothness_cost, swept_world_collision_cost, velocity_limit_cost,
    world_collision_cost, CollisionSettings, CostWeights,
};
use crate::liegroups::Transform3;
use crate::robot::RobotModel;
use crate::solver::{solve, Problem, SolveOptions, VarId, VarValue, VariableSet};

#[derive(Clone, Debug)]
pub struct TrajRequest {
    pub model: Arc<RobotModel>,
    pub link: usize,
    pub start_pose: Transform3,
    pub goal_pose: Transform3,
    pub timesteps: usize,
    pub dt: f64,
    pub world: WorldModel,
    pub weights: CostWeights,
    pub self_collision: CollisionSettings,
    pub world_collision: CollisionSettings,
    /// Stiffness of the residual pinning the endpoints to their IK solutions.
    pub anchor_weight: f64,
    pub options: SolveOptions,
    pub ik_seed: u64,
    pub workers: usize,
}

impl TrajRequest {
    pub fn new(model: Arc<RobotModel>, link: usize, start_pose: Transform3, goal_pose: Transform3) -> Self {
        TrajRequest {
            model,
            link,
            start_pose,
            goal_pose,
            timesteps: 32,
            dt: 0.1,
            world: WorldModel::default(),
            weights: CostWeights::default(),
            self_collision: CollisionSettings::self_default(),
            world_collision: CollisionSettings::world_default(),
            anchor_weight: 1e3,
            options: SolveOptions::default(),
            ik_seed: 0,
            workers: 1,
        }
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        let bad = |m: String| Err(TaskError::InvalidRequest(m));
        if self.link >= self.model.links.len() {
            return bad(format!("unknown link index {}", self.link));
        }
        if self.timesteps < 5 {
            return bad(format!("need at least 5 timesteps, got {}", self.timesteps));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.anchor_weight.is_finite() && self.anchor_weight > 0.0) {
            return bad("anchor_weight must be positive".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        self.options.validate()?;
        self.weights.validate().map_err(TaskError::InvalidRequest)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajResult {
    /// One configuration per timestep.
    pub trajectory: Vec<Vec<f64>>,
    pub report: SolveSummary,
    /// Minimum exact robot-obstacle distance over the timesteps; `None` for an empty world.
    pub min_world_distance: Option<f64>,
    /// Minimum over the swept capsules between consecutive timesteps.
    pub min_swept_distance: Option<f64>,
    pub min_self_distance: Option<f64>,
    /// `(position, rotation)` error of the first and last timestep.
    pub start_error: (f64, f64),
    pub goal_error: (f64, f64),
    pub collision_free: bool,
}

/// IK for a trajectory endpoint. Obstacles are excluded here and checked afterwards,
/// so the scene generator and the planner obtain identical endpoints.
pub(crate) fn endpoint_ik(
    model: &Arc<RobotModel>,
    link: usize,
    pose: &Transform3,
    weights: &CostWeights,
    ik_seed: u64,
    workers: usize,
) -> Result<IkResult, TaskError> {
    let mut req = IkRequest::new(Arc::clone(model), link, *pose);
    req.weights = weights.clone();
    req.rng_seed = ik_seed;
    req.workers = workers;
    solve_ik_beam(&req)
}

fn lerp(a: &[f64], b: &[f64], s: f64) -> DVector<f64> {
    DVector::from_iterator(a.len(), a.iter().zip(b).map(|(x, y)| x + s * (y - x)))
}

/// Plans between two end-effector poses: IK at both ends, linear joint
/// interpolation, then one LM solve over all timesteps.
pub fn plan_trajectory(req: &TrajRequest) -> Result<TrajResult, TaskError> {
    req.validate()?;
    let model = &req.model;
    let mut ends = Vec::with_capacity(2);
    for (label, pose) in [("start", &req.start_pose), ("goal", &req.goal_pose)] {
        let ik = endpoint_ik(model, req.link, pose, &req.weights, req.ik_seed, req.workers)?;
        if !ik.success {
            return Err(TaskError::Planning(format!(
                "{label} pose unreachable (position error {:.3e} m, rotation error {:.3e} rad)",
                ik.pos_error, ik.rot_error
            )));
        }
        if let Some(d) = min_world_distance(model, &ik.q, &req.world).filter(|d| *d < 0.0) {
            return Err(TaskError::Planning(format!("{label} configuration penetrates an obstacle by {:.3e} m", -d)));
        }
        ends.push(ik.q);
    }
    optimize_trajectory(req, &ends[0], &ends[1])
}

/// The optimization stage of [`plan_trajectory`] with explicit endpoint configurations.
pub fn optimize_trajectory(req: &TrajRequest, qa: &[f64], qb: &[f64]) -> Result<TrajResult, TaskError> {
    req.validate()?;
    let model = &req.model;
    let n = model.actuated_count();
    if qa.len() != n || qb.len() != n {
        return Err(TaskError::InvalidRequest(format!("endpoint configurations must have {n} entries")));
    }
    let t_count = req.timesteps;
    let mut vars = VariableSet::new();
    let ids: Vec<VarId> = (0..t_count)
        .map(|t| vars.add(format!("q{t}"), VarValue::Euclidean(lerp(qa, qb, t as f64 / (t_count - 1) as f64))))
        .collect::<Result<_, _>>()?;

    let w = &req.weights;
    let has_world = !req.world.obstacles.is_empty();
    let has_self = !model.self_collision_pairs.is_empty();
    let mut costs = vec![
        rest_cost(&vars, ids[0], &DVector::from_column_slice(qa))?.weighted(req.anchor_weight),
        rest_cost(&vars, ids[t_count - 1], &DVector::from_column_slice(qb))?.weighted(req.anchor_weight),
    ];
    for &q in &ids {
        if w.limit > 0.0 {
            costs.push(limit_cost(model, &vars, q)?.weighted(w.limit));
        }
        if w.self_collision > 0.0 && has_self {
            costs.push(self_collision_cost(model, &vars, q, req.self_collision)?.weighted(w.self_collision));
        }
        if w.world_collision > 0.0 && has_world {
            costs.push(
                world_collision_cost(model, &vars, q, &req.world, req.world_collision)?.weighted(w.world_collision),
            );
        }
    }
    for pair in ids.windows(2) {
        costs.push(smoothness_cost(&vars, pair[0], pair[1])?.weighted(w.smoothness));
        if w.velocity > 0.0 {
            costs.push(velocity_limit_cost(model, &vars, pair[0], pair[1], req.dt)?.weighted(w.velocity));
        }
        if w.world_collision > 0.0 && has_world {
            costs.push(
                swept_world_collision_cost(model, &vars, pair[0], pair[1], &req.world, req.world_collision)?
                    .weighted(w.world_collision),
            );
        }
    }
    for window in ids.windows(5) {
        let window = [window[0], window[1], window[2], window[3], window[4]];
        if w.acceleration > 0.0 {
            costs.push(acceleration_cost(&vars, window, req.dt)?.weighted(w.acceleration));
        }
        if w.jerk > 0.0 {
            costs.push(jerk_cost(&vars, window, req.dt)?.weighted(w.jerk));
        }
    }
    let mut problem = Problem::new(vars);
    for c in costs {
        problem.add_cost(c)?;
    }

    let report = solve(&problem, &req.options)?;
    let trajectory: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| report.final_values.get(id).as_vector().unwrap().as_slice().to_vec())
        .collect();
    let fold = |it: &mut dyn Iterator<Item = Option<f64>>| it.flatten().reduce(f64::min);
    let min_world = fold(&mut trajectory.iter().map(|q| min_world_distance(model, q, &req.world)));
    let min_swept =
        fold(&mut trajectory.windows(2).map(|p| min_swept_world_distance(model, &p[0], &p[1], &req.world)));
    let min_self = fold(&mut trajectory.iter().map(|q| min_self_distance(model, q)));
    let error_at = |q: &[f64], target: &Transform3| pose_errors(target, &achieved_link_pose(model, q, req.link));
    Ok(TrajResult {
        start_error: error_at(&trajectory[0], &req.start_pose),
        goal_error: error_at(&trajectory[t_count - 1], &req.goal_pose),
        collision_free: min_world.is_none_or(|d| d >= 0.0) && min_swept.is_none_or(|d| d >= 0.0),
        min_world_distance: min_world,
        min_swept_distance: min_swept,
        min_self_distance: min_self,
        report: SolveSummary::from(&report),
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets::{ur5, UR5_EE};
    use crate::collision::{Primitive, Sphere};
    use crate::tasks::trajectory_scene;

    fn ur5_request(qa: &[f64], qb: &[f64]) -> TrajRequest {
        let model = Arc::new(ur5());
        let link = model.link_id(UR5_EE).unwrap();
        let fk = |q: &[f64]| model.forward_kinematics(q).unwrap()[link];
        let (a, b) = (fk(qa), fk(qb));
        TrajRequest::new(Arc::clone(&model), link, a, b)
    }

    #[test]
    fn empty_world_keeps_linear_interpolation() {
        let req = ur5_request(&[0.3, -1.2, 1.4, -1.6, -1.5, 0.2], &[1.1, -1.0, 1.1, -1.4, -1.4, 0.6]);
        let res = plan_trajectory(&req).unwrap();
        let (qa, qb) = (&res.trajectory[0], &res.trajectory[req.timesteps - 1]);
        for (t, q) in res.trajectory.iter().enumerate() {
            let lin = lerp(qa, qb, t as f64 / (req.timesteps - 1) as f64);
            let gap = (DVector::from_column_slice(q) - lin).amax();
            assert!(gap < 1e-3, "t={t} gap={gap}");
        }
        assert!(res.min_world_distance.is_none() && res.collision_free);
        assert!(res.start_error.0 < 1e-3 && res.goal_error.0 < 1e-3);
    }

    #[test]
    fn routes_around_obstacle_on_interpolation() {
        let model = Arc::new(ur5());
        let link = model.link_id(UR5_EE).unwrap();
        let scene = trajectory_scene(&model, link, 3).unwrap();
        let mut req = TrajRequest::new(Arc::clone(&model), link, scene.start_pose, scene.goal_pose);
        req.world = scene.world.clone();
        // The straight interpolation collides.
        let mid = lerp(&scene.q_start, &scene.q_goal, 0.5);
        assert!(min_world_distance(&model, mid.as_slice(), &req.world).unwrap() < 0.0);
        let res = plan_trajectory(&req).unwrap();
        assert!(res.collision_free, "{:?} {:?}", res.min_world_distance, res.min_swept_distance);
        // Endpoints come from the same deterministic IK as the scene.
        let gap = (DVector::from_column_slice(&res.trajectory[0]) - DVector::from_column_slice(&scene.q_start)).amax();
        assert!(gap < 1e-3, "{gap}");
    }

    #[test]
    fn five_step_linear_motion_has_zero_stencils() {
        let req = TrajRequest { timesteps: 5, ..ur5_request(&[0.0; 6], &[0.1; 6]) };
        let (qa, qb) = ([0.1, -1.0, 1.0, -1.5, -1.5, 0.0], [0.5, -0.8, 1.2, -1.3, -1.4, 0.4]);
        let res = optimize_trajectory(&req, &qa, &qb).unwrap();
        let q = |t: usize| DVector::from_column_slice(&res.trajectory[t]);
        let accel = (-q(0) + q(1) * 16.0 - q(2) * 30.0 + q(3) * 16.0 - q(4)) / (12.0 * req.dt * req.dt);
        let jerk = (-q(0) + q(1) * 2.0 - q(3) * 2.0 + q(4)) / (2.0 * req.dt.powi(3));
        assert!(accel.amax() < 1e-6 && jerk.amax() < 1e-6, "{accel} {jerk}");
    }

    #[test]
    fn blocked_endpoint_is_a_planning_error() {
        let qa = [0.3, -1.2, 1.4, -1.6, -1.5, 0.2];
        let mut req = ur5_request(&qa, &[1.1, -1.0, 1.1, -1.4, -1.4, 0.6]);
        let center = req.start_pose.translation;
        req.world = WorldModel::new(vec![Primitive::Sphere(Sphere::new(center, 0.2))]);
        assert!(matches!(plan_trajectory(&req), Err(TaskError::Planning(_))));
    }

    #[test]
    fn request_validation() {
        let mut req = ur5_request(&[0.0; 6], &[0.1; 6]);
        req.timesteps = 4;
        assert!(matches!(plan_trajectory(&req), Err(TaskError::InvalidRequest(_))));
        let mut req = ur5_request(&[0.0; 6], &[0.1; 6]);
        req.dt = 0.0;
        assert!(matches!(plan_trajectory(&req), Err(TaskError::InvalidRequest(_))));
    }
}
