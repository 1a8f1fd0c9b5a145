//! Residual library for kinematic problems.
//!
//! Builders return unit-weight [`CostTerm`]s unless they take explicit
//! weights; scale them with [`CostTerm::weighted`].

mod collision;
mod joint;
mod kinematic;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::robot::RobotModel;
use crate::solver::{SolveError, VarId, VarKind, VariableSet};

pub use collision::{
    link_spheres_world, min_self_distance, min_swept_world_distance, min_world_distance, self_collision_cost,
    swept_world_collision_cost, world_collision_cost, Aggregation, CollisionSettings, SMOOTH_MIN_BETA,
};
pub use joint::{
    acceleration_cost, jerk_cost, limit_cost, rest_cost, smoothness_cost, velocity_cost,
    velocity_limit_cost,
};
pub use kinematic::{manipulability_cost, pose_cost, BaseVar, MANIPULABILITY_EPSILON};

/// One weight per cost family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostWeights {
    pub pose_position: f64,
    pub pose_orientation: f64,
    pub limit: f64,
    pub velocity: f64,
    pub rest: f64,
    pub smoothness: f64,
    pub acceleration: f64,
    pub jerk: f64,
    pub manipulability: f64,
    pub self_collision: f64,
    pub world_collision: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            pose_position: 10.0,
            pose_orientation: 2.0,
            limit: 10.0,
            velocity: 10.0,
            rest: 0.001,
            smoothness: 1.0,
            acceleration: 0.01,
            jerk: 0.0002,
            manipulability: 0.0,
            self_collision: 1.0,
            world_collision: 10.0,
        }
    }
}

impl CostWeights {
    pub const NAMES: [&'static str; 11] = [
        "pose_position",
        "pose_orientation",
        "limit",
        "velocity",
        "rest",
        "smoothness",
        "acceleration",
        "jerk",
        "manipulability",
        "self_collision",
        "world_collision",
    ];

    fn slot(&mut self, name: &str) -> Option<&mut f64> {
        Some(match name {
            "pose_position" => &mut self.pose_position,
            "pose_orientation" => &mut self.pose_orientation,
            "limit" => &mut self.limit,
            "velocity" => &mut self.velocity,
            "rest" => &mut self.rest,
            "smoothness" => &mut self.smoothness,
            "acceleration" => &mut self.acceleration,
            "jerk" => &mut self.jerk,
            "manipulability" => &mut self.manipulability,
            "self_collision" => &mut self.self_collision,
            "world_collision" => &mut self.world_collision,
            _ => return None,
        })
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.clone().slot(name).map(|w| *w)
    }

    /// Sets a weight by family name; rejects unknown names and negative or non-finite values.
    pub fn set(&mut self, name: &str, value: f64) -> Result<(), String> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(format!("weight `{name}` must be finite and non-negative, got {value}"));
        }
        let slot = self.slot(name).ok_or_else(|| format!("unknown weight `{name}`"))?;
        *slot = value;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), String> {
        for name in Self::NAMES {
            let w = self.get(name).unwrap_or_default();
            if !(w.is_finite() && w >= 0.0) {
                return Err(format!("weight `{name}` must be finite and non-negative, got {w}"));
            }
        }
        Ok(())
    }
}

/// Checks that `id` is a Euclidean variable with one entry per actuated coordinate.
pub(crate) fn check_config_var(model: &RobotModel, vars: &VariableSet, id: VarId) -> Result<(), SolveError> {
    check_vector_var(vars, id, model.actuated_count())
}

pub(crate) fn check_vector_var(vars: &VariableSet, id: VarId, n: usize) -> Result<(), SolveError> {
    if id.index() >= vars.len() {
        return Err(SolveError::InvalidProblem(format!("unknown variable {}", id.index())));
    }
    let kind = vars.get(id).kind();
    if kind != VarKind::Euclidean(n) {
        return Err(SolveError::InvalidProblem(format!(
            "variable `{}` is {kind:?}, expected Euclidean({n})",
            vars.name(id)
        )));
    }
    Ok(())
}

pub(crate) fn config(v: &crate::solver::VarValue) -> &[f64] {
    v.as_vector().expect("configuration variable is Euclidean").as_slice()
}

pub(crate) fn check_link(model: &RobotModel, link: usize) -> Result<(), SolveError> {
    if link >= model.links.len() {
        return Err(SolveError::InvalidProblem(format!("unknown link index {link}")));
    }
    Ok(())
}

pub(crate) type SharedModel = Arc<RobotModel>;

#[cfg(test)]
pub(crate) fn dvec(x: &[f64]) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_column_slice(x)
}
