//! Deterministic problem generators for tests and benchmarks.

use std::sync::Arc;

use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ik::sample_config;
use super::traj::endpoint_ik;
use super::TaskError;
use crate::collision::{Primitive, Sphere, WorldModel};
use crate::costs::{link_spheres_world, min_self_distance, min_world_distance, CostWeights};
use crate::liegroups::Transform3;
use crate::robot::RobotModel;

/// Minimum self distance accepted for generated configurations.
const SELF_CLEARANCE: f64 = 0.0;

fn self_clear(model: &RobotModel, q: &[f64], margin: f64) -> bool {
    min_self_distance(model, q).is_none_or(|d| d >= margin)
}

/// `n` poses of `link` reached by uniformly sampled, self-collision-free configurations.
pub fn reachable_targets(model: &RobotModel, link: usize, n: usize, seed: u64) -> Vec<(DVector<f64>, Transform3)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let q = sample_config(model, &mut rng);
        if self_clear(model, q.as_slice(), SELF_CLEARANCE) {
            let pose = model.forward_kinematics_unchecked(q.as_slice())[link];
            out.push((q, pose));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MobileTarget {
    /// Configuration that reaches `target` from a base displaced by `offset`.
    pub q: Vec<f64>,
    /// Planar base displacement, uniform in a disk.
    pub offset: [f64; 2],
    pub target: Transform3,
}

/// Reachable targets translated by a planar offset drawn uniformly from a disk of `radius`.
pub fn mobile_targets(model: &RobotModel, link: usize, n: usize, seed: u64, radius: f64) -> Vec<MobileTarget> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d6f_6269_6c65);
    reachable_targets(model, link, n, seed)
        .into_iter()
        .map(|(q, pose)| {
            let r = radius * rng.random::<f64>().sqrt();
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let offset = [r * theta.cos(), r * theta.sin()];
            let shift = Transform3::from_translation(Vector3::new(offset[0], offset[1], 0.0));
            MobileTarget { q: q.as_slice().to_vec(), offset, target: shift.compose(&pose) }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryScene {
    pub start_pose: Transform3,
    pub goal_pose: Transform3,
    /// Endpoint IK solutions the planner reproduces with its default settings.
    pub q_start: Vec<f64>,
    pub q_goal: Vec<f64>,
    /// One sphere straddling the joint-space midpoint of the straight interpolation.
    pub world: WorldModel,
}

const OBSTACLE_RADIUS: f64 = 0.08;
/// Endpoint clearance beyond the default world activation buffer.
const ENDPOINT_CLEARANCE: f64 = 0.08;
const MAX_ATTEMPTS: usize = 500;

/// A start/goal pair whose straight joint interpolation passes through an
/// obstacle while both endpoints stay clear of it.
pub fn trajectory_scene(model: &Arc<RobotModel>, link: usize, seed: u64) -> Result<TrajectoryScene, TaskError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = CostWeights::default();
    let limits = model.position_limits();
    for _ in 0..MAX_ATTEMPTS {
        let qa = sample_config(model, &mut rng);
        let mut qb = qa.clone();
        for (k, v) in qb.iter_mut().enumerate() {
            *v += rng.random_range(-1.2..=1.2);
            if let Some(l) = limits[k] {
                *v = v.clamp(l.lower, l.upper);
            }
        }
        if !(self_clear(model, qa.as_slice(), 0.02) && self_clear(model, qb.as_slice(), 0.02)) {
            continue;
        }
        let fk = |q: &[f64]| model.forward_kinematics_unchecked(q)[link];
        let (start_pose, goal_pose) = (fk(qa.as_slice()), fk(qb.as_slice()));
        let a = endpoint_ik(model, link, &start_pose, &weights, 0, 1)?;
        let b = endpoint_ik(model, link, &goal_pose, &weights, 0, 1)?;
        if !(a.success && b.success) {
            continue;
        }
        let mid: Vec<f64> = a.q.iter().zip(&b.q).map(|(x, y)| 0.5 * (x + y)).collect();
        let spheres = link_spheres_world(model, &model.forward_kinematics_unchecked(&mid));
        // Most distal sphere-carrying link.
        let Some(center) = spheres.iter().rev().find_map(|s| s.last()).map(|s| s.center) else {
            return Err(TaskError::InvalidRequest("model has no collision spheres".into()));
        };
        let world = WorldModel::new(vec![Primitive::Sphere(Sphere::new(center, OBSTACLE_RADIUS))]);
        let clear = |q: &[f64]| min_world_distance(model, q, &world).is_some_and(|d| d >= ENDPOINT_CLEARANCE);
        if clear(&a.q) && clear(&b.q) {
            return Ok(TrajectoryScene {
                start_pose,
                goal_pose,
                q_start: a.q,
                q_goal: b.q,
                world,
            });
        }
    }
    Err(TaskError::Planning(format!("no scene found in {MAX_ATTEMPTS} attempts")))
}
