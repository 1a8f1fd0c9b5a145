use rayon::prelude::*;

use super::lm::solve;
use super::problem::Problem;
use super::{SolveError, SolveOptions, SolveReport};

/// Maps `f` over `items` on a pool of `workers` threads, preserving order.
///
/// `workers == 1` runs on the calling thread.
pub fn parallel_map<T, R, F>(items: &[T], workers: usize, f: F) -> Result<Vec<R>, SolveError>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if workers == 0 {
        return Err(SolveError::InvalidProblem("workers must be at least 1".into()));
    }
    if workers == 1 {
        return Ok(items.iter().map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SolveError::InvalidProblem(format!("thread pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(f).collect()))
}

/// Solves independent problems in parallel. Each entry holds that problem's
/// own outcome, so one failure does not affect the others.
pub fn solve_batch(
    problems: &[Problem],
    options: &SolveOptions,
    workers: usize,
) -> Result<Vec<Result<SolveReport, SolveError>>, SolveError> {
    parallel_map(problems, workers, |p| solve(p, options))
}

/// [`solve_batch`] with per-problem options.
pub fn solve_batch_with(
    jobs: &[(Problem, SolveOptions)],
    workers: usize,
) -> Result<Vec<Result<SolveReport, SolveError>>, SolveError> {
    parallel_map(jobs, workers, |(p, o)| solve(p, o))
}
