//! Nonlinear least squares over manifold-valued variables.

mod batch;
mod linear;
mod lm;
mod problem;
mod variables;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use batch::{parallel_map, solve_batch, solve_batch_with};
pub use linear::{dense_step, sparse_step, NormalEquations, DENSE_LIMIT, MIN_SCALING};
pub use lm::solve;
pub use problem::{numeric_jacobian, numeric_jacobian_five_point, CostTerm, FnResidual, JacobianBlock, Linearization, Problem, Residual, NUMERIC_STEP};
pub use variables::{VarId, VarKind, VarValue, VariableSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("cost `{cost}` broke its contract: {detail}")]
    Contract { cost: String, detail: String },
    #[error("cost `{cost}` failed to evaluate: {detail}")]
    CostEvaluation { cost: String, detail: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolver {
    /// Dense below [`DENSE_LIMIT`] tangent dimensions, sparse above.
    #[default]
    Auto,
    DenseCholesky,
    SparseCholesky,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub damping_increase: f64,
    pub damping_decrease: f64,
    pub min_damping: f64,
    /// Linear-solve failures beyond this damping end the solve.
    pub max_damping: f64,
    /// On `‖Jᵀr‖∞`.
    pub gradient_tolerance: f64,
    /// On `‖δ‖∞`.
    pub step_tolerance: f64,
    pub max_rejections: usize,
    pub linear_solver: LinearSolver,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iterations: 100,
            initial_damping: 1e-4,
            damping_increase: 10.0,
            damping_decrease: 1.0 / 3.0,
            min_damping: 1e-12,
            max_damping: 1e10,
            gradient_tolerance: 1e-8,
            step_tolerance: 1e-10,
            max_rejections: 20,
            linear_solver: LinearSolver::Auto,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<(), SolveError> {
        let positive = [
            self.initial_damping,
            self.min_damping,
            self.max_damping,
            self.gradient_tolerance,
            self.step_tolerance,
        ];
        if positive.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(SolveError::InvalidProblem("solver tolerances and damping must be positive".into()));
        }
        if !(self.damping_increase > 1.0 && self.damping_increase.is_finite()) {
            return Err(SolveError::InvalidProblem("damping_increase must exceed 1".into()));
        }
        if !(self.damping_decrease > 0.0 && self.damping_decrease < 1.0) {
            return Err(SolveError::InvalidProblem("damping_decrease must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MaxIterations,
    GradientConverged,
    StepConverged,
    /// The damped normal equations could not be factored even past the maximum damping.
    NumericalFailure,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub final_values: VariableSet,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations_run: usize,
    pub termination: Termination,
    /// Initial cost followed by the cost after each iteration.
    pub cost_history: Vec<f64>,
    /// Damping at exit; lets a caller resume where this solve stopped.
    pub final_damping: f64,
}
