use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3xX, RowDVector};
use serde::{Deserialize, Serialize};

use super::{check_config_var, config, SharedModel};
use crate::collision::{
    activation_derivative_unchecked, activation_unchecked, separation, Capsule, Primitive, Sphere, WorldModel,
};
use crate::liegroups::{hat, Transform3};
use crate::robot::RobotModel;
use crate::solver::{CostTerm, Residual, SolveError, VarId, VarValue, VariableSet};

/// Sharpness of the smooth minimum over sphere pairs, in 1/m.
pub const SMOOTH_MIN_BETA: f64 = 100.0;

/// How per-sphere distances combine into one distance per link pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Aggregation {
    /// `−(1/β) log Σ exp(−β d)`; never above the hard minimum.
    SmoothMin { beta: f64 },
    HardMin,
}

impl Default for Aggregation {
    fn default() -> Self {
        Aggregation::SmoothMin { beta: SMOOTH_MIN_BETA }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionSettings {
    /// Activation buffer in meters.
    pub eta: f64,
    #[serde(default)]
    pub aggregation: Aggregation,
}

impl CollisionSettings {
    pub fn self_default() -> Self {
        CollisionSettings { eta: 0.01, aggregation: Aggregation::default() }
    }

    pub fn world_default() -> Self {
        CollisionSettings { eta: 0.05, aggregation: Aggregation::default() }
    }

    fn validate(&self) -> Result<(), SolveError> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(SolveError::InvalidProblem(format!("eta must be positive, got {}", self.eta)));
        }
        if let Aggregation::SmoothMin { beta } = self.aggregation {
            if !(beta.is_finite() && beta > 0.0) {
                return Err(SolveError::InvalidProblem(format!("smooth-min beta must be positive, got {beta}")));
            }
        }
        Ok(())
    }
}

/// Aggregated distance and `∂D/∂d_i`.
fn aggregate(ds: &[f64], aggregation: Aggregation) -> (f64, Vec<f64>) {
    let (arg, lo) = ds
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, d)| if d < best.1 { (i, d) } else { best });
    match aggregation {
        Aggregation::HardMin => {
            let mut w = vec![0.0; ds.len()];
            w[arg] = 1.0;
            (lo, w)
        }
        Aggregation::SmoothMin { beta } => {
            // Shifted by the minimum so the exponentials stay in (0, 1].
            let e: Vec<f64> = ds.iter().map(|d| (-beta * (d - lo)).exp()).collect();
            let sum: f64 = e.iter().sum();
            (lo - sum.ln() / beta, e.iter().map(|x| x / sum).collect())
        }
    }
}

/// World-frame collision spheres of every link at `poses`.
pub fn link_spheres_world(model: &RobotModel, poses: &[Transform3]) -> Vec<Vec<Sphere>> {
    model
        .collision_spheres
        .iter()
        .zip(poses)
        .map(|(spheres, pose)| spheres.iter().map(|s| Sphere::new(pose.apply(&s.center), s.radius)).collect())
        .collect()
}

/// Per-link cache of `∂p/∂q` for link-attached points.
struct PointJacobians<'a> {
    model: &'a RobotModel,
    poses: &'a [Transform3],
    body: Vec<Option<nalgebra::Matrix6xX<f64>>>,
}

impl<'a> PointJacobians<'a> {
    fn new(model: &'a RobotModel, poses: &'a [Transform3]) -> Self {
        PointJacobians { model, poses, body: vec![None; poses.len()] }
    }

    /// `∂(T_link c)/∂q` for a point `c` in link coordinates.
    fn point(&mut self, link: usize, c: &nalgebra::Vector3<f64>) -> Matrix3xX<f64> {
        let (model, poses) = (self.model, self.poses);
        let body = self.body[link].get_or_insert_with(|| model.link_jacobian_from_poses(poses, link));
        // R (v + ω × c) = R (v − [c]× ω).
        let v = body.fixed_rows::<3>(0);
        let w = body.fixed_rows::<3>(3);
        poses[link].rotation.matrix() * (v - hat(c) * w)
    }
}

/// Distance rows for self-collision pairs.
struct SelfCollisionResidual {
    model: SharedModel,
    pairs: Vec<(usize, usize)>,
    settings: CollisionSettings,
}

impl Residual for SelfCollisionResidual {
    fn dim(&self) -> usize {
        self.pairs.len()
    }

    fn evaluate(&self, vars: &[&VarValue]) -> DVector<f64> {
        self.rows(vars, false).0
    }

    fn jacobian(&self, vars: &[&VarValue]) -> Option<Vec<DMatrix<f64>>> {
        self.rows(vars, true).1
    }

    fn linearize(&self, vars: &[&VarValue]) -> (DVector<f64>, Option<Vec<DMatrix<f64>>>) {
        self.rows(vars, true)
    }
}

impl SelfCollisionResidual {
    fn rows(&self, vars: &[&VarValue], with_jacobian: bool) -> (DVector<f64>, Option<Vec<DMatrix<f64>>>) {
        let model = &*self.model;
        let n = model.actuated_count();
        let poses = model.forward_kinematics_unchecked(config(vars[0]));
        let world = link_spheres_world(model, &poses);
        let mut cache = PointJacobians::new(model, &poses);
        let mut r = DVector::zeros(self.pairs.len());
        let mut jac = with_jacobian.then(|| DMatrix::zeros(self.pairs.len(), n));
        for (row, &(a, b)) in self.pairs.iter().enumerate() {
            let mut ds = Vec::new();
            let mut witnesses = Vec::new();
            for (i, si) in world[a].iter().enumerate() {
                for (j, sj) in world[b].iter().enumerate() {
                    let s = separation(&Primitive::Sphere(*si), &Primitive::Sphere(*sj)).expect("sphere pair");
                    ds.push(s.distance);
                    witnesses.push((i, j, s.normal));
                }
            }
            if ds.is_empty() {
                continue;
            }
            let (d, weights) = aggregate(&ds, self.settings.aggregation);
            r[row] = activation_unchecked(d, self.settings.eta);
            if let Some(jac) = jac.as_mut() {
                let slope = activation_derivative_unchecked(d, self.settings.eta);
                if slope == 0.0 {
                    continue;
                }
                let mut grad = RowDVector::zeros(n);
                for (w, (i, j, normal)) in weights.iter().zip(&witnesses) {
                    if *w == 0.0 {
                        continue;
                    }
                    let pa = cache.point(a, &model.collision_spheres[a][*i].center);
                    let pb = cache.point(b, &model.collision_spheres[b][*j].center);
                    grad += (normal.transpose() * (pa - pb)) * *w;
                }
                jac.row_mut(row).copy_from(&(grad * slope));
            }
        }
        (r, jac.map(|j| vec![j]))
    }
}

/// One row per entry of `model.self_collision_pairs`.
pub fn self_collision_cost(
    model: &SharedModel,
    vars: &VariableSet,
    q: VarId,
    settings: CollisionSettings,
) -> Result<CostTerm, SolveError> {
    check_config_var(model, vars, q)?;
    settings.validate()?;
    Ok(CostTerm::new(
        "self_collision",
        vec![q],
        Arc::new(SelfCollisionResidual {
            model: Arc::clone(model),
            pairs: model.self_collision_pairs.clone(),
            settings,
        }),
    ))
}

fn sphere_links(model: &RobotModel) -> Vec<usize> {
    (0..model.links.len()).filter(|&l| !model.collision_spheres[l].is_empty()).collect()
}

fn check_world(world: &WorldModel) -> Result<(), SolveError> {
    for (k, o) in world.obstacles.iter().enumerate() {
        o.validate().map_err(|e| SolveError::InvalidProblem(format!("obstacle {k}: {e}")))?;
    }
    Ok(())
}

/// Rows over (sphere-carrying link, obstacle), link-major.
struct WorldCollisionResidual {
    model: SharedModel,
    links: Vec<usize>,
    obstacles: Vec<Primitive>,
    settings: CollisionSettings,
}

impl WorldCollisionResidual {
    fn rows(&self, vars: &[&VarValue], with_jacobian: bool) -> (DVector<f64>, Option<Vec<DMatrix<f64>>>) {
        let model = &*self.model;
        let n = model.actuated_count();
        let poses = model.forward_kinematics_unchecked(config(vars[0]));
        let world = link_spheres_world(model, &poses);
        let mut cache = PointJacobians::new(model, &poses);
        let rows = self.dim();
        let mut r = DVector::zeros(rows);
        let mut jac = with_jacobian.then(|| DMatrix::zeros(rows, n));
        for (li, &link) in self.links.iter().enumerate() {
            for (oi, obstacle) in self.obstacles.iter().enumerate() {
                let row = li * self.obstacles.len() + oi;
                let seps: Vec<_> = world[link]
                    .iter()
                    .map(|s| separation(&Primitive::Sphere(*s), obstacle).expect("sphere versus obstacle"))
                    .collect();
                let ds: Vec<f64> = seps.iter().map(|s| s.distance).collect();
                let (d, weights) = aggregate(&ds, self.settings.aggregation);
                r[row] = activation_unchecked(d, self.settings.eta);
                if let Some(jac) = jac.as_mut() {
                    let slope = activation_derivative_unchecked(d, self.settings.eta);
                    if slope == 0.0 {
                        continue;
                    }
                    let mut grad = RowDVector::zeros(n);
                    for (k, (w, s)) in weights.iter().zip(&seps).enumerate() {
                        if *w != 0.0 {
                            let p = cache.point(link, &model.collision_spheres[link][k].center);
                            grad += (s.normal.transpose() * p) * *w;
                        }
                    }
                    jac.row_mut(row).copy_from(&(grad * slope));
                }
            }
        }
        (r, jac.map(|j| vec![j]))
    }
}

impl Residual for WorldCollisionResidual {
    fn dim(&self) -> usize {
        self.links.len() * self.obstacles.len()
    }

    fn evaluate(&self, vars: &[&VarValue]) -> DVector<f64> {
        self.rows(vars, false).0
    }

    fn jacobian(&self, vars: &[&VarValue]) -> Option<Vec<DMatrix<f64>>> {
        self.rows(vars, true).1
    }

    fn linearize(&self, vars: &[&VarValue]) -> (DVector<f64>, Option<Vec<DMatrix<f64>>>) {
        self.rows(vars, true)
    }
}

/// One row per (sphere-carrying link, obstacle) pair.
pub fn world_collision_cost(
    model: &SharedModel,
    vars: &VariableSet,
    q: VarId,
    world: &WorldModel,
    settings: CollisionSettings,
) -> Result<CostTerm, SolveError> {
    check_config_var(model, vars, q)?;
    settings.validate()?;
    check_world(world)?;
    Ok(CostTerm::new(
        "world_collision",
        vec![q],
        Arc::new(WorldCollisionResidual {
            model: Arc::clone(model),
            links: sphere_links(model),
            obstacles: world.obstacles.clone(),
            settings,
        }),
    ))
}

/// Rows over (link, obstacle) for capsules swept between two configurations.
struct SweptCollisionResidual {
    model: SharedModel,
    links: Vec<usize>,
    obstacles: Vec<Primitive>,
    settings: CollisionSettings,
}

impl SweptCollisionResidual {
    fn rows(&self, vars: &[&VarValue], with_jacobian: bool) -> (DVector<f64>, Option<Vec<DMatrix<f64>>>) {
        let model = &*self.model;
        let n = model.actuated_count();
        let poses0 = model.forward_kinematics_unchecked(config(vars[0]));
        let poses1 = model.forward_kinematics_unchecked(config(vars[1]));
        let (w0, w1) = (link_spheres_world(model, &poses0), link_spheres_world(model, &poses1));
        let mut cache0 = PointJacobians::new(model, &poses0);
        let mut cache1 = PointJacobians::new(model, &poses1);
        let rows = self.dim();
        let mut r = DVector::zeros(rows);
        let mut jacs = with_jacobian.then(|| (DMatrix::zeros(rows, n), DMatrix::zeros(rows, n)));
        for (li, &link) in self.links.iter().enumerate() {
            let capsules: Vec<Capsule> = w0[link]
                .iter()
                .zip(&w1[link])
                .map(|(a, b)| Capsule::new(a.center, b.center, a.radius))
                .collect();
            for (oi, obstacle) in self.obstacles.iter().enumerate() {
                let row = li * self.obstacles.len() + oi;
                let seps: Vec<_> = capsules
                    .iter()
                    .map(|c| separation(&Primitive::Capsule(*c), obstacle).expect("capsule versus obstacle"))
                    .collect();
                let ds: Vec<f64> = seps.iter().map(|s| s.distance).collect();
                let (d, weights) = aggregate(&ds, self.settings.aggregation);
                r[row] = activation_unchecked(d, self.settings.eta);
                if let Some((j0, j1)) = jacs.as_mut() {
                    let slope = activation_derivative_unchecked(d, self.settings.eta);
                    if slope == 0.0 {
                        continue;
                    }
                    let mut g0 = RowDVector::zeros(n);
                    let mut g1 = RowDVector::zeros(n);
                    for (k, (w, s)) in weights.iter().zip(&seps).enumerate() {
                        if *w == 0.0 {
                            continue;
                        }
                        // The witness point is (1 − s)·a + s·b on the capsule core.
                        let c = &model.collision_spheres[link][k].center;
                        let nt = s.normal.transpose();
                        g0 += (nt * cache0.point(link, c)) * (*w * (1.0 - s.param));
                        g1 += (nt * cache1.point(link, c)) * (*w * s.param);
                    }
                    j0.row_mut(row).copy_from(&(g0 * slope));
                    j1.row_mut(row).copy_from(&(g1 * slope));
                }
            }
        }
        (r, jacs.map(|(a, b)| vec![a, b]))
    }
}

impl Residual for SweptCollisionResidual {
    fn dim(&self) -> usize {
        self.links.len() * self.obstacles.len()
    }

    fn evaluate(&self, vars: &[&VarValue]) -> DVector<f64> {
        self.rows(vars, false).0
    }

    fn jacobian(&self, vars: &[&VarValue]) -> Option<Vec<DMatrix<f64>>> {
        self.rows(vars, true).1
    }

    fn linearize(&self, vars: &[&VarValue]) -> (DVector<f64>, Option<Vec<DMatrix<f64>>>) {
        self.rows(vars, true)
    }
}

/// World collision of the capsules each link sphere sweeps from `q_prev` to `q_t`.
pub fn swept_world_collision_cost(
    model: &SharedModel,
    vars: &VariableSet,
    q_prev: VarId,
    q_t: VarId,
    world: &WorldModel,
    settings: CollisionSettings,
) -> Result<CostTerm, SolveError> {
    check_config_var(model, vars, q_prev)?;
    check_config_var(model, vars, q_t)?;
    settings.validate()?;
    check_world(world)?;
    Ok(CostTerm::new(
        "swept_world_collision",
        vec![q_prev, q_t],
        Arc::new(SweptCollisionResidual {
            model: Arc::clone(model),
            links: sphere_links(model),
            obstacles: world.obstacles.clone(),
            settings,
        }),
    ))
}

/// Smallest exact signed distance between any robot sphere and any obstacle.
/// `None` when either side is empty.
pub fn min_world_distance(model: &RobotModel, q: &[f64], world: &WorldModel) -> Option<f64> {
    let poses = model.forward_kinematics_unchecked(q);
    link_spheres_world(model, &poses)
        .iter()
        .flatten()
        .flat_map(|s| {
            world
                .obstacles
                .iter()
                .filter_map(move |o| separation(&Primitive::Sphere(*s), o).ok().map(|x| x.distance))
        })
        .reduce(f64::min)
}

/// Smallest exact signed distance over the model's self-collision pairs.
pub fn min_self_distance(model: &RobotModel, q: &[f64]) -> Option<f64> {
    let world = link_spheres_world(model, &model.forward_kinematics_unchecked(q));
    model
        .self_collision_pairs
        .iter()
        .flat_map(|&(a, b)| {
            let (wa, wb) = (&world[a], &world[b]);
            wa.iter().flat_map(move |sa| {
                wb.iter().map(move |sb| {
                    separation(&Primitive::Sphere(*sa), &Primitive::Sphere(*sb))
                        .expect("sphere pair")
                        .distance
                })
            })
        })
        .reduce(f64::min)
}

/// Smallest exact signed distance between any swept sphere capsule and any obstacle.
pub fn min_swept_world_distance(model: &RobotModel, q0: &[f64], q1: &[f64], world: &WorldModel) -> Option<f64> {
    let s0 = link_spheres_world(model, &model.forward_kinematics_unchecked(q0));
    let s1 = link_spheres_world(model, &model.forward_kinematics_unchecked(q1));
    s0.iter()
        .flatten()
        .zip(s1.iter().flatten())
        .flat_map(|(a, b)| {
            let c = Capsule::new(a.center, b.center, a.radius);
            world
                .obstacles
                .iter()
                .filter_map(move |o| separation(&Primitive::Capsule(c), o).ok().map(|x| x.distance))
        })
        .reduce(f64::min)
}
