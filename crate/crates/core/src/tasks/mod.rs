//! Task drivers: multi-seed IK, mobile-base IK and trajectory optimization.

pub mod bench;
mod ik;
mod scenes;
mod traj;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::solver::{SolveError, SolveReport, Termination};

pub(crate) use ik::build_ik_problem;
pub use ik::{pose_errors, sample_config, solve_ik_beam, solve_ik_mobile, IkRequest, IkResult};
pub use scenes::{mobile_targets, reachable_targets, trajectory_scene, MobileTarget, TrajectoryScene};
pub use traj::{optimize_trajectory, plan_trajectory, TrajRequest, TrajResult};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("planning failed: {0}")]
    Planning(String),
}

/// Serializable digest of a [`SolveReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub cost_history: Vec<f64>,
}

impl From<&SolveReport> for SolveSummary {
    fn from(r: &SolveReport) -> Self {
        SolveSummary {
            initial_cost: r.initial_cost,
            final_cost: r.final_cost,
            iterations: r.iterations_run,
            termination: r.termination,
            cost_history: r.cost_history.clone(),
        }
    }
}
