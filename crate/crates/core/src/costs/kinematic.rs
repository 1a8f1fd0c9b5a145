use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3xX};

use super::{check_config_var, check_link, config, SharedModel};
use crate::liegroups::{se3_right_jacobian_inverse, Transform3};
use crate::solver::{CostTerm, Residual, SolveError, VarId, VarKind, VarValue, VariableSet};

/// Added to the manipulability measure before inversion.
pub const MANIPULABILITY_EPSILON: f64 = 1e-6;

/// Optional base pose prepended to the kinematic chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaseVar {
    /// Planar base on `z = 0`.
    Planar(VarId),
    Spatial(VarId),
}

impl BaseVar {
    fn id(&self) -> VarId {
        match self {
            BaseVar::Planar(id) | BaseVar::Spatial(id) => *id,
        }
    }
}

struct PoseResidual {
    model: SharedModel,
    link: usize,
    target_inverse: Transform3,
    base: Option<BaseVar>,
}

impl PoseResidual {
    fn base_pose(&self, vars: &[&VarValue]) -> Option<Transform3> {
        self.base.map(|b| match b {
            BaseVar::Planar(_) => vars[1].as_transform2().unwrap().to_transform3(),
            BaseVar::Spatial(_) => *vars[1].as_transform3().unwrap(),
        })
    }
}

impl Residual for PoseResidual {
    fn dim(&self) -> usize {
        6
    }

    fn evaluate(&self, vars: &[&VarValue]) -> DVector<f64> {
        self.linearize(vars).0
    }

    fn jacobian(&self, vars: &[&VarValue]) -> Option<Vec<DMatrix<f64>>> {
        self.linearize(vars).1
    }

    fn linearize(&self, vars: &[&VarValue]) -> (DVector<f64>, Option<Vec<DMatrix<f64>>>) {
        let poses = self.model.forward_kinematics_unchecked(config(vars[0]));
        let link_pose = poses[self.link];
        let current = match self.base_pose(vars) {
            Some(b) => b.compose(&link_pose),
            None => link_pose,
        };
        let xi = self.target_inverse.compose(&current).log();
        let jr_inv = se3_right_jacobian_inverse(&xi);
        let body = self.model.link_jacobian_from_poses(&poses, self.link);
        let mut blocks = vec![DMatrix::from_iterator(6, body.ncols(), (jr_inv * body).iter().copied())];
        if let Some(base) = self.base {
            // B ∘ exp(δ) ∘ F = B ∘ F ∘ exp(Ad(F⁻¹) δ).
            let full = jr_inv * link_pose.inverse().adjoint();
            blocks.push(match base {
                BaseVar::Spatial(_) => DMatrix::from_iterator(6, 6, full.iter().copied()),
                // Planar tangent (vx, vy, ω) lifts to the twist (vx, vy, 0, 0, 0, ω).
                BaseVar::Planar(_) => {
                    let mut m = DMatrix::zeros(6, 3);
                    m.column_mut(0).copy_from(&full.column(0));
                    m.column_mut(1).copy_from(&full.column(1));
                    m.column_mut(2).copy_from(&full.column(5));
                    m
                }
            });
        }
        (DVector::from_column_slice(xi.0.as_slice()), Some(blocks))
    }
}

/// `log(target⁻¹ ∘ current)` for `link`, optionally behind a base pose.
///
/// Rows 0–2 carry `position_weight`, rows 3–5 `orientation_weight`.
pub fn pose_cost(
    model: &SharedModel,
    vars: &VariableSet,
    q: VarId,
    link: usize,
    target: &Transform3,
    base: Option<BaseVar>,
    position_weight: f64,
    orientation_weight: f64,
) -> Result<CostTerm, SolveError> {
    check_config_var(model, vars, q)?;
    check_link(model, link)?;
    let mut ids = vec![q];
    if let Some(b) = base {
        let expected = match b {
            BaseVar::Planar(_) => VarKind::Transform2,
            BaseVar::Spatial(_) => VarKind::Transform3,
        };
        if b.id().index() >= vars.len() || vars.get(b.id()).kind() != expected {
            return Err(SolveError::InvalidProblem(format!("base variable must be {expected:?}")));
        }
        ids.push(b.id());
    }
    let residual = PoseResidual {
        model: Arc::clone(model),
        link,
        target_inverse: target.inverse(),
        base,
    };
    let weights = DVector::from_fn(6, |i, _| if i < 3 { position_weight } else { orientation_weight });
    Ok(CostTerm::new("pose", ids, Arc::new(residual)).with_weights(weights))
}

struct ManipulabilityResidual {
    model: SharedModel,
    link: usize,
}

/// `sqrt(det G)` and its gradient, `G` the smaller Gram matrix of `j`.
fn measure_and_gradient(j: &Matrix3xX<f64>, derivs: &[Matrix3xX<f64>]) -> (f64, DVector<f64>) {
    let n = j.ncols();
    let mut grad = DVector::zeros(n);
    if n >= 3 {
        let g: Matrix3<f64> = j * j.transpose();
        let det = g.determinant();
        if det <= 0.0 {
            return (0.0, grad);
        }
        let m = det.sqrt();
        // d sqrt(det G) = sqrt(det G) · tr(G⁻¹ dJ Jᵀ).
        let Some(g_inv) = g.try_inverse() else {
            return (m, grad);
        };
        for (k, dj) in derivs.iter().enumerate() {
            grad[k] = m * (g_inv * dj * j.transpose()).trace();
        }
        (m, grad)
    } else {
        let g: DMatrix<f64> = DMatrix::from_iterator(n, n, (j.transpose() * j).iter().copied());
        let det = g.determinant();
        if det <= 0.0 {
            return (0.0, grad);
        }
        let m = det.sqrt();
        let Some(g_inv) = g.try_inverse() else {
            return (m, grad);
        };
        for (k, dj) in derivs.iter().enumerate() {
            let jt_dj = DMatrix::from_iterator(n, n, (j.transpose() * dj).iter().copied());
            grad[k] = m * (&g_inv * jt_dj).trace();
        }
        (m, grad)
    }
}

impl Residual for ManipulabilityResidual {
    fn dim(&self) -> usize {
        1
    }

    fn evaluate(&self, vars: &[&VarValue]) -> DVector<f64> {
        self.linearize(vars).0
    }

    fn jacobian(&self, vars: &[&VarValue]) -> Option<Vec<DMatrix<f64>>> {
        self.linearize(vars).1
    }

    fn linearize(&self, vars: &[&VarValue]) -> (DVector<f64>, Option<Vec<DMatrix<f64>>>) {
        let poses = self.model.forward_kinematics_unchecked(config(vars[0]));
        let (j, derivs) = self.model.position_jacobian_with_derivatives_from_poses(&poses, self.link);
        let (m, grad) = measure_and_gradient(&j, &derivs);
        let denom = m + MANIPULABILITY_EPSILON;
        let row = grad.transpose() * (-1.0 / (denom * denom));
        (DVector::from_element(1, 1.0 / denom), Some(vec![DMatrix::from_iterator(1, row.len(), row.iter().copied())]))
    }
}

/// `1 / (sqrt(det(J Jᵀ)) + ε)` on the translational Jacobian of `link`.
pub fn manipulability_cost(
    model: &SharedModel,
    vars: &VariableSet,
    q: VarId,
    link: usize,
) -> Result<CostTerm, SolveError> {
    check_config_var(model, vars, q)?;
    check_link(model, link)?;
    Ok(CostTerm::new(
        "manipulability",
        vec![q],
        Arc::new(ManipulabilityResidual { model: Arc::clone(model), link }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets::{panda, planar_2r, PANDA_EE, PLANAR_2R_EE};
    use crate::costs::dvec;
    use crate::costs::testing::{jacobian_gap, random_config, rng};
    use crate::liegroups::{Rotation3, Transform2};
    use nalgebra::{Vector2, Vector3};
    use rand::Rng;
    use std::f64::consts::FRAC_PI_2;

    fn q_set(q: DVector<f64>) -> (VariableSet, VarId) {
        let mut vs = VariableSet::new();
        let id = vs.add("q", VarValue::Euclidean(q)).unwrap();
        (vs, id)
    }

    #[test]
    fn pose_residual_values() {
        let m = Arc::new(planar_2r());
        let ee = m.link_id(PLANAR_2R_EE).unwrap();
        let (vs, q) = q_set(dvec(&[0.3, -0.2]));
        let fk = m.forward_kinematics(&[0.3, -0.2]).unwrap()[ee];
        let c = pose_cost(&m, &vs, q, ee, &fk, None, 1.0, 1.0).unwrap();
        assert!(c.evaluate(&vs).unwrap().amax() < 1e-12);
        let shifted = Transform3::new(fk.rotation, fk.translation + Vector3::new(0.001, 0.0, 0.0));
        let c = pose_cost(&m, &vs, q, ee, &shifted, None, 1.0, 1.0).unwrap();
        let r = c.evaluate(&vs).unwrap();
        // The error is expressed in the target frame; rotate back to compare.
        let world = shifted.rotation.rotate(&Vector3::new(r[0], r[1], r[2]));
        assert!((world - Vector3::new(-0.001, 0.0, 0.0)).norm() < 1e-12);
        assert!(r.rows(3, 3).amax() < 1e-12);
    }

    #[test]
    fn pose_jacobian_full_rank_at_identity() {
        let mut vs = VariableSet::new();
        let m = Arc::new(panda());
        let q = vs.add("q", VarValue::Euclidean(m.rest_pose().clone())).unwrap();
        let b = vs.add("base", VarValue::Transform3(Transform3::identity())).unwrap();
        let link = m.link_id(PANDA_EE).unwrap();
        let fk = m.forward_kinematics(m.rest_pose().as_slice()).unwrap()[link];
        let c = pose_cost(&m, &vs, q, link, &fk, Some(BaseVar::Spatial(b)), 1.0, 1.0).unwrap();
        let (r, j) = c.linearize(&vs).unwrap();
        assert!(r.amax() < 1e-12);
        assert_eq!(j[1].clone().svd(false, false).rank(1e-9), 6);
    }

    #[test]
    fn pose_analytic_matches_numeric() {
        let mut r = rng(5);
        for (model, ee) in [(planar_2r(), PLANAR_2R_EE), (panda(), PANDA_EE)] {
            let m = Arc::new(model);
            let link = m.link_id(ee).unwrap();
            for k in 0..100 {
                let mut vs = VariableSet::new();
                let q = vs.add("q", VarValue::Euclidean(random_config(&m, &mut r, 0.0))).unwrap();
                let planar = vs
                    .add("b2", VarValue::Transform2(Transform2::new(r.random_range(-3.0..3.0), Vector2::new(r.random_range(-1.0..1.0), 0.4))))
                    .unwrap();
                let spatial = vs
                    .add(
                        "b3",
                        VarValue::Transform3(Transform3::new(
                            Rotation3::from_rpy(r.random_range(-1.0..1.0), 0.3, r.random_range(-3.0..3.0)),
                            Vector3::new(0.1, -0.2, 0.3),
                        )),
                    )
                    .unwrap();
                let target = Transform3::new(
                    Rotation3::from_rpy(r.random_range(-2.0..2.0), r.random_range(-1.0..1.0), r.random_range(-2.0..2.0)),
                    Vector3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(0.0..1.0)),
                );
                let base = match k % 3 {
                    0 => None,
                    1 => Some(BaseVar::Planar(planar)),
                    _ => Some(BaseVar::Spatial(spatial)),
                };
                let c = pose_cost(&m, &vs, q, link, &target, base, 1.0, 1.0).unwrap();
                let gap = jacobian_gap(&c, &vs);
                assert!(gap < 1e-5, "{gap}");
            }
        }
    }

    #[test]
    fn manipulability_on_planar_2r() {
        let m = Arc::new(planar_2r());
        let ee = m.link_id(PLANAR_2R_EE).unwrap();
        let (vs, q) = q_set(dvec(&[0.0, 0.0]));
        let c = manipulability_cost(&m, &vs, q, ee).unwrap();
        assert!((c.evaluate(&vs).unwrap()[0] - 1e6).abs() < 1e-3);
        let (vs, _) = q_set(dvec(&[0.0, FRAC_PI_2]));
        let r = c.evaluate(&vs).unwrap()[0];
        assert!((r - 1.0 / (1.0 + 1e-6)).abs() < 1e-12, "{r}");
    }

    #[test]
    fn manipulability_analytic_matches_numeric() {
        let mut r = rng(9);
        for (model, ee) in [(planar_2r(), PLANAR_2R_EE), (panda(), PANDA_EE)] {
            let m = Arc::new(model);
            let link = m.link_id(ee).unwrap();
            for _ in 0..100 {
                let (vs, q) = q_set(random_config(&m, &mut r, 0.0));
                let c = manipulability_cost(&m, &vs, q, link).unwrap();
                let value = c.evaluate(&vs).unwrap()[0];
                assert!(value > 0.0 && value.is_finite());
                let gap = jacobian_gap(&c, &vs);
                assert!(gap < 1e-5, "{gap} at value {value}");
            }
        }
    }

    #[test]
    fn builder_validation() {
        let m = Arc::new(planar_2r());
        let (vs, q) = q_set(dvec(&[0.0, 0.0, 0.0]));
        assert!(pose_cost(&m, &vs, q, 0, &Transform3::identity(), None, 1.0, 1.0).is_err());
        let (vs, q) = q_set(dvec(&[0.0, 0.0]));
        assert!(pose_cost(&m, &vs, q, 99, &Transform3::identity(), None, 1.0, 1.0).is_err());
        assert!(pose_cost(&m, &vs, q, 1, &Transform3::identity(), Some(BaseVar::Planar(q)), 1.0, 1.0).is_err());
    }
}
