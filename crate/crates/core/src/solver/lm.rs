use nalgebra::DVector;

use super::linear::{dense_step, sparse_step, NormalEquations, DENSE_LIMIT};
use super::problem::Problem;
use super::{LinearSolver, SolveError, SolveOptions, SolveReport, Termination};

fn linear_step(ne: &NormalEquations, lambda: f64, solver: LinearSolver) -> Option<DVector<f64>> {
    let sparse = match solver {
        LinearSolver::Auto => ne.dim >= DENSE_LIMIT,
        LinearSolver::DenseCholesky => false,
        LinearSolver::SparseCholesky => true,
    };
    if sparse { sparse_step(ne, lambda) } else { dense_step(ne, lambda) }
}

/// Levenberg-Marquardt from the problem's current variable values.
///
/// A trial point whose residual is non-finite counts as a rejected step. A
/// non-finite residual or Jacobian at the start or at an accepted point is an
/// error. When every allowed retry in an iteration is rejected the solve stops
/// with [`Termination::StepConverged`]: no decreasing step exists at the
/// current resolution.
pub fn solve(problem: &Problem, options: &SolveOptions) -> Result<SolveReport, SolveError> {
    options.validate()?;
    if problem.costs().is_empty() || problem.residual_dim() == 0 {
        return Err(SolveError::InvalidProblem("problem has no residuals".into()));
    }
    let mut values = problem.variables.clone();
    let mut lin = problem.assemble(&values)?;
    let initial_cost = lin.cost();
    let mut cost = initial_cost;
    let mut history = vec![cost];
    let mut lambda = options.initial_damping;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    'outer: while iterations < options.max_iterations {
        let ne = NormalEquations::new(&lin);
        if ne.gradient.amax() <= options.gradient_tolerance {
            termination = Termination::GradientConverged;
            break;
        }
        iterations += 1;
        let mut rejections = 0;
        loop {
            let Some(step) = linear_step(&ne, lambda, options.linear_solver) else {
                if lambda > options.max_damping {
                    termination = Termination::NumericalFailure;
                    history.push(cost);
                    break 'outer;
                }
                lambda *= options.damping_increase;
                continue;
            };
            if step.amax() <= options.step_tolerance {
                termination = Termination::StepConverged;
                history.push(cost);
                break 'outer;
            }
            let trial = values.retract(&step)?;
            let trial_cost = match problem.cost(&trial) {
                Ok(c) => c,
                Err(SolveError::CostEvaluation { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            if trial_cost < cost {
                lin = problem.assemble(&trial)?;
                values = trial;
                cost = trial_cost;
                lambda = (lambda * options.damping_decrease).max(options.min_damping);
                history.push(cost);
                break;
            }
            rejections += 1;
            lambda *= options.damping_increase;
            if rejections >= options.max_rejections {
                termination = Termination::StepConverged;
                history.push(cost);
                break 'outer;
            }
        }
    }

    Ok(SolveReport {
        final_values: values,
        initial_cost,
        final_cost: cost,
        iterations_run: iterations,
        termination,
        cost_history: history,
        final_damping: lambda,
    })
}
