//! Interactive steering session and its JSON wire protocol (`"v": 1`).
//!
//! Edits mutate the session immediately; solving is a separate step so a
//! server can apply a burst of edits and solve once for the latest state.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DVector, Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::collision::WorldModel;
use crate::costs::CostWeights;
use crate::liegroups::{Transform2, Transform3};
use crate::robot::RobotModel;
use crate::solver::{solve, SolveOptions};
use crate::tasks::{build_ik_problem, solve_ik_beam, solve_ik_mobile, IkRequest, TaskError};

pub const PROTOCOL_VERSION: u64 = 1;

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    SetWeight { name: String, value: f64 },
    SetTarget { pose: Transform3 },
    /// Places obstacle `index` at `pose` relative to its initial placement.
    MoveObstacle { index: usize, pose: Transform3 },
    Reset {},
    /// Full multi-seed solve instead of the warm-started one.
    Reseed {},
}

/// Parses a client message. `"v"` may be omitted; when present it must be 1.
pub fn parse_client_message(text: &str) -> Result<ClientMessage, String> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| format!("malformed JSON: {e}"))?;
    let Some(obj) = value.as_object_mut() else {
        return Err("message must be a JSON object".into());
    };
    match obj.remove("v") {
        None => {}
        Some(v) if v.as_u64() == Some(PROTOCOL_VERSION) => {}
        Some(v) => return Err(format!("unsupported protocol version {v}")),
    }
    serde_json::from_value(value).map_err(|e| format!("invalid message: {e}"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub final_cost: f64,
    pub ms: f64,
}

/// Translational manipulability ellipsoid from the eigendecomposition of `JJᵀ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub center: [f64; 3],
    /// Square roots of the eigenvalues, descending.
    pub radii: [f64; 3],
    /// Unit axis per radius, world frame.
    pub axes: [[f64; 3]; 3],
}

impl Ellipsoid {
    /// From a world-frame 3×n translational Jacobian.
    pub fn from_jacobian(center: [f64; 3], jp: &nalgebra::Matrix3xX<f64>) -> Ellipsoid {
        let gram: Matrix3<f64> = jp * jp.transpose();
        let eig = SymmetricEigen::new(gram);
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let radii = order.map(|k| eig.eigenvalues[k].max(0.0).sqrt());
        let axes = order.map(|k| {
            let c = eig.eigenvectors.column(k);
            [c[0], c[1], c[2]]
        });
        Ellipsoid { center, radii, axes }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewerState {
    /// Count of edits applied so far; increases monotonically.
    pub seq: u64,
    pub q: Vec<f64>,
    pub base: Option<Transform2>,
    pub link_poses: BTreeMap<String, Transform3>,
    pub weights: CostWeights,
    pub target_pose: Transform3,
    pub obstacles: WorldModel,
    pub cost_breakdown: BTreeMap<String, f64>,
    pub solve_stats: SolveStats,
    pub manipulability: Ellipsoid,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    State(Box<ViewerState>),
    Error { detail: String },
}

impl ServerMessage {
    /// JSON text with the protocol version attached.
    pub fn encode(&self) -> String {
        let mut v = serde_json::to_value(self).expect("server messages serialize");
        v.as_object_mut().expect("tagged enum is an object").insert("v".into(), PROTOCOL_VERSION.into());
        v.to_string()
    }
}

#[derive(Clone, Debug)]
struct Scene {
    weights: CostWeights,
    target: Transform3,
}

#[derive(Clone, Debug)]
pub struct Session {
    model: Arc<RobotModel>,
    link: usize,
    mobile: bool,
    initial: Scene,
    initial_world: WorldModel,
    weights: CostWeights,
    target: Transform3,
    world: WorldModel,
    q: DVector<f64>,
    base: Transform2,
    seq: u64,
    reseed_pending: bool,
    stats: SolveStats,
    /// Iteration cap of the warm-started solve.
    pub warm_iterations: usize,
    pub rng_seed: u64,
}

impl Session {
    pub fn new(
        model: Arc<RobotModel>,
        link: usize,
        target: Transform3,
        world: WorldModel,
        mobile: bool,
    ) -> Result<Session, TaskError> {
        if link >= model.links.len() {
            return Err(TaskError::InvalidRequest(format!("unknown link index {link}")));
        }
        let q = model.rest_pose().clone();
        let weights = CostWeights::default();
        Ok(Session {
            initial: Scene { weights: weights.clone(), target },
            initial_world: world.clone(),
            model,
            link,
            mobile,
            weights,
            target,
            world,
            q,
            base: Transform2::identity(),
            seq: 0,
            reseed_pending: false,
            stats: SolveStats { iterations: 0, final_cost: f64::NAN, ms: 0.0 },
            warm_iterations: 20,
            rng_seed: 0,
        })
    }

    pub fn weights(&self) -> &CostWeights {
        &self.weights
    }

    /// Applies one edit without solving. Rejected edits leave the session unchanged.
    pub fn apply(&mut self, msg: &ClientMessage) -> Result<(), String> {
        match msg {
            ClientMessage::SetWeight { name, value } => self.weights.set(name, *value)?,
            ClientMessage::SetTarget { pose } => self.target = *pose,
            ClientMessage::MoveObstacle { index, pose } => {
                let Some(original) = self.initial_world.obstacles.get(*index) else {
                    return Err(format!(
                        "obstacle index {index} out of range ({} obstacles)",
                        self.world.obstacles.len()
                    ));
                };
                self.world.obstacles[*index] = original.transformed(pose);
            }
            ClientMessage::Reset {} => {
                self.weights = self.initial.weights.clone();
                self.target = self.initial.target;
                self.world = self.initial_world.clone();
                self.q = self.model.rest_pose().clone();
                self.base = Transform2::identity();
            }
            ClientMessage::Reseed {} => self.reseed_pending = true,
        }
        self.seq += 1;
        Ok(())
    }

    fn request(&self) -> IkRequest {
        let mut req = IkRequest::new(Arc::clone(&self.model), self.link, self.target);
        req.weights = self.weights.clone();
        req.world = self.world.clone();
        req.rng_seed = self.rng_seed;
        req
    }

    /// Warm-started single-seed LM from the current configuration, or a full
    /// multi-seed solve when a reseed is pending.
    pub fn solve(&mut self) -> Result<(), TaskError> {
        let start = Instant::now();
        let req = self.request();
        if std::mem::take(&mut self.reseed_pending) {
            let res = if self.mobile { solve_ik_mobile(&req)? } else { solve_ik_beam(&req)? };
            self.q = DVector::from_vec(res.q);
            self.base = res.base.unwrap_or_else(Transform2::identity);
            self.stats = SolveStats {
                iterations: res.report.iterations,
                final_cost: res.report.final_cost,
                ms: 1e3 * start.elapsed().as_secs_f64(),
            };
            return Ok(());
        }
        let (problem, q, base) = build_ik_problem(&req, self.q.clone(), self.mobile.then_some(self.base))?;
        let options = SolveOptions { max_iterations: self.warm_iterations, ..SolveOptions::default() };
        let report = solve(&problem, &options)?;
        self.q = report.final_values.get(q).as_vector().unwrap().clone();
        if let Some(b) = base {
            self.base = *report.final_values.get(b).as_transform2().unwrap();
        }
        self.stats = SolveStats {
            iterations: report.iterations_run,
            final_cost: report.final_cost,
            ms: 1e3 * start.elapsed().as_secs_f64(),
        };
        Ok(())
    }

    pub fn state(&self) -> Result<ViewerState, TaskError> {
        let req = self.request();
        let (problem, _, _) = build_ik_problem(&req, self.q.clone(), self.mobile.then_some(self.base))?;
        let mut cost_breakdown = BTreeMap::new();
        for (name, c) in problem.cost_breakdown(&problem.variables)? {
            *cost_breakdown.entry(name).or_insert(0.0) += c;
        }
        let world_base = if self.mobile { self.base.to_transform3() } else { Transform3::identity() };
        let poses = self.model.forward_kinematics(self.q.as_slice()).map_err(|e| TaskError::InvalidRequest(e.to_string()))?;
        let link_poses = poses
            .iter()
            .enumerate()
            .map(|(k, p)| (self.model.link_name(k).to_string(), world_base.compose(p)))
            .collect();
        let ee = world_base.compose(&poses[self.link]);
        let jac = self.model.link_jacobian(self.q.as_slice(), self.link).map_err(|e| TaskError::InvalidRequest(e.to_string()))?;
        // Body-frame linear rows rotated into the world.
        let jp = ee.rotation.matrix() * jac.fixed_rows::<3>(0);
        let t = ee.translation;
        Ok(ViewerState {
            seq: self.seq,
            q: self.q.as_slice().to_vec(),
            base: self.mobile.then_some(self.base),
            link_poses,
            weights: self.weights.clone(),
            target_pose: self.target,
            obstacles: self.world.clone(),
            cost_breakdown,
            solve_stats: self.stats.clone(),
            manipulability: Ellipsoid::from_jacobian([t.x, t.y, t.z], &jp),
        })
    }
}
