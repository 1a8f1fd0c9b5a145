//! Batch runners behind the benchmark command and the acceptance suite.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::scenes::{mobile_targets, reachable_targets, trajectory_scene};
use super::traj::{plan_trajectory, TrajRequest};
use super::{solve_ik_beam, solve_ik_mobile, IkRequest, IkResult, TaskError};
use crate::robot::RobotModel;
use crate::solver::parallel_map;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IkStats {
    pub count: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_pos_error: f64,
    pub mean_rot_error: f64,
    pub std_pos_error: f64,
    pub std_rot_error: f64,
    pub p98_pos_error: f64,
    pub p98_rot_error: f64,
    pub max_pos_error: f64,
}

impl IkStats {
    pub fn from_results(results: &[IkResult]) -> IkStats {
        let n = results.len();
        let sorted = |f: fn(&IkResult) -> f64| {
            let mut v: Vec<f64> = results.iter().map(f).collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let (pos, rot) = (sorted(|r| r.pos_error), sorted(|r| r.rot_error));
        let successes = results.iter().filter(|r| r.success).count();
        let (mean_pos, std_pos) = mean_std(&pos);
        let (mean_rot, std_rot) = mean_std(&rot);
        IkStats {
            count: n,
            successes,
            success_rate: successes as f64 / n.max(1) as f64,
            mean_pos_error: mean_pos,
            mean_rot_error: mean_rot,
            std_pos_error: std_pos,
            std_rot_error: std_rot,
            p98_pos_error: percentile(&pos, 0.98),
            p98_rot_error: percentile(&rot, 0.98),
            max_pos_error: pos.last().copied().unwrap_or(0.0),
        }
    }
}

/// Mean and population standard deviation; zeros when empty.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (mean, (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt())
}

/// Nearest-rank percentile of sorted data.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn check_workers(workers: usize) -> Result<(), TaskError> {
    if workers == 0 {
        return Err(TaskError::InvalidRequest("workers must be at least 1".into()));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IkBenchmark {
    pub stats: IkStats,
    pub seconds: f64,
}

/// IK-Beam with default settings on `n` reachable targets. Targets run in
/// parallel over `workers`; each solve is single-threaded.
pub fn ik_beam_benchmark(
    model: &Arc<RobotModel>,
    link: usize,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<IkBenchmark, TaskError> {
    check_workers(workers)?;
    let start = Instant::now();
    let targets = reachable_targets(model, link, n, seed);
    let results = parallel_map(&targets, workers, |(_, pose)| solve_ik_beam(&IkRequest::new(Arc::clone(model), link, *pose)))?
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(IkBenchmark { stats: IkStats::from_results(&results), seconds: start.elapsed().as_secs_f64() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub batch_size: usize,
    pub stats: IkStats,
    /// Informational only: mean wall-clock time per batch.
    pub seconds_per_batch: f64,
}

/// The same `n` targets solved in consecutive batches of each size. Results do
/// not depend on the batch size; only the timing does.
pub fn batched_ik_benchmark(
    model: &Arc<RobotModel>,
    link: usize,
    n: usize,
    seed: u64,
    batch_sizes: &[usize],
    workers: usize,
) -> Result<Vec<BatchRow>, TaskError> {
    check_workers(workers)?;
    if batch_sizes.is_empty() || batch_sizes.contains(&0) {
        return Err(TaskError::InvalidRequest("batch sizes must be non-empty and positive".into()));
    }
    let targets = reachable_targets(model, link, n, seed);
    let mut rows = Vec::with_capacity(batch_sizes.len());
    for &size in batch_sizes {
        let mut results = Vec::with_capacity(n);
        let mut batches = 0;
        let start = Instant::now();
        for chunk in targets.chunks(size) {
            let solved = parallel_map(chunk, workers, |(_, pose)| {
                solve_ik_beam(&IkRequest::new(Arc::clone(model), link, *pose))
            })?;
            for r in solved {
                results.push(r?);
            }
            batches += 1;
        }
        rows.push(BatchRow {
            batch_size: size,
            stats: IkStats::from_results(&results),
            seconds_per_batch: start.elapsed().as_secs_f64() / batches.max(1) as f64,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MobileBenchmark {
    pub optimized: IkStats,
    pub static_base: IkStats,
    pub seconds: f64,
}

/// Targets displaced by planar offsets within `radius`, solved with an
/// optimized base and with the base fixed at the origin.
pub fn mobile_benchmark(
    model: &Arc<RobotModel>,
    link: usize,
    n: usize,
    seed: u64,
    radius: f64,
    workers: usize,
) -> Result<MobileBenchmark, TaskError> {
    check_workers(workers)?;
    let start = Instant::now();
    let targets = mobile_targets(model, link, n, seed, radius);
    let pairs = parallel_map(&targets, workers, |t| {
        let req = IkRequest::new(Arc::clone(model), link, t.target);
        Ok::<_, TaskError>((solve_ik_mobile(&req)?, solve_ik_beam(&req)?))
    })?
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let (optimized, fixed): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    Ok(MobileBenchmark {
        optimized: IkStats::from_results(&optimized),
        static_base: IkStats::from_results(&fixed),
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneOutcome {
    pub seed: u64,
    pub min_world_distance: f64,
    pub min_swept_distance: f64,
    pub start_error: (f64, f64),
    pub goal_error: (f64, f64),
    /// Every accepted LM iteration lowered the cost.
    pub monotone: bool,
    pub iterations: usize,
    /// Set when scene generation or planning failed.
    pub error: Option<String>,
}

impl SceneOutcome {
    pub fn feasible(&self, pos_tol: f64, rot_tol: f64) -> bool {
        self.error.is_none()
            && self.min_world_distance >= 0.0
            && self.min_swept_distance >= 0.0
            && self.start_error.0 < pos_tol
            && self.goal_error.0 < pos_tol
            && self.start_error.1 < rot_tol
            && self.goal_error.1 < rot_tol
            && self.monotone
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryBenchmark {
    pub scenes: Vec<SceneOutcome>,
    pub seconds: f64,
}

/// Plans through `n` generated obstacle scenes with seeds `seed..seed + n`.
pub fn trajectory_benchmark(
    model: &Arc<RobotModel>,
    link: usize,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<TrajectoryBenchmark, TaskError> {
    check_workers(workers)?;
    let start = Instant::now();
    let seeds: Vec<u64> = (seed..seed + n as u64).collect();
    let scenes = parallel_map(&seeds, workers, |&s| {
        let failed = |e: TaskError| SceneOutcome {
            seed: s,
            min_world_distance: f64::NAN,
            min_swept_distance: f64::NAN,
            start_error: (f64::NAN, f64::NAN),
            goal_error: (f64::NAN, f64::NAN),
            monotone: false,
            iterations: 0,
            error: Some(e.to_string()),
        };
        let scene = match trajectory_scene(model, link, s) {
            Ok(scene) => scene,
            Err(e) => return failed(e),
        };
        let mut req = TrajRequest::new(Arc::clone(model), link, scene.start_pose, scene.goal_pose);
        req.world = scene.world;
        match plan_trajectory(&req) {
            Ok(r) => SceneOutcome {
                seed: s,
                min_world_distance: r.min_world_distance.unwrap_or(f64::INFINITY),
                min_swept_distance: r.min_swept_distance.unwrap_or(f64::INFINITY),
                start_error: r.start_error,
                goal_error: r.goal_error,
                monotone: r.report.cost_history.windows(2).all(|w| w[1] <= w[0]),
                iterations: r.report.iterations,
                error: None,
            },
            Err(e) => failed(e),
        }
    })?;
    Ok(TrajectoryBenchmark { scenes, seconds: start.elapsed().as_secs_f64() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_percentile() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&xs, 0.98), 98.0);
        assert_eq!(percentile(&xs, 1.0), 100.0);
        assert_eq!(percentile(&xs, 0.0), 1.0);
        assert_eq!(percentile(&[], 0.5), 0.0);
    }

    #[test]
    fn mean_and_std() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 1.0));
        assert_eq!(mean_std(&[]), (0.0, 0.0));
    }

    #[test]
    fn batch_size_does_not_change_results() {
        let m = Arc::new(crate::assets::panda());
        let link = m.link_id(crate::assets::PANDA_EE).unwrap();
        let rows = batched_ik_benchmark(&m, link, 6, 3, &[1, 4], 2).unwrap();
        assert_eq!(rows[0].stats, rows[1].stats);
        assert!(batched_ik_benchmark(&m, link, 6, 3, &[0], 2).is_err());
    }
}
