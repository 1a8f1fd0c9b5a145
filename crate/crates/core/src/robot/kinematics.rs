use nalgebra::{DMatrix, Matrix3xX, Matrix6xX, Vector3};

use super::{JointCoordinate, JointKind, ModelError, RobotModel};
use crate::liegroups::{Rotation3, Transform3};

/// A moving joint on the path from the root to some link.
#[derive(Clone, Copy, Debug)]
pub struct PathJoint {
    pub joint: usize,
    /// Actuated coordinate driving this joint.
    pub coordinate: usize,
    /// `∂θ_joint / ∂q_coordinate` (1 unless mimic).
    pub multiplier: f64,
    pub prismatic: bool,
}

impl RobotModel {
    fn joint_motion(&self, joint: usize, theta: f64) -> Transform3 {
        let j = &self.joints[joint];
        match j.kind {
            JointKind::Fixed => Transform3::identity(),
            JointKind::Revolute | JointKind::Continuous => {
                Transform3::from_rotation(Rotation3::from_axis_angle(&j.axis, theta))
            }
            JointKind::Prismatic => Transform3::from_translation(j.axis * theta),
        }
    }

    /// Pose of every link in the root frame, indexed like `links`.
    pub fn forward_kinematics(&self, q: &[f64]) -> Result<Vec<Transform3>, ModelError> {
        self.check_config(q)?;
        Ok(self.forward_kinematics_unchecked(q))
    }

    pub(crate) fn forward_kinematics_unchecked(&self, q: &[f64]) -> Vec<Transform3> {
        let mut poses = vec![Transform3::identity(); self.links.len()];
        for (j, joint) in self.joints.iter().enumerate() {
            let theta = self.joint_value(j, q);
            poses[joint.child_link] = poses[joint.parent_link]
                .compose(&joint.origin)
                .compose(&self.joint_motion(j, theta));
        }
        poses
    }

    /// Moving joints from the root down to `link`, root first.
    pub fn path_joints(&self, link: usize) -> Vec<PathJoint> {
        let mut path = Vec::new();
        let mut current = link;
        while let Some(j) = self.links[current].parent_joint {
            let joint = &self.joints[j];
            let entry = match self.coordinate(j) {
                JointCoordinate::Fixed => None,
                JointCoordinate::Actuated(k) => Some((k, 1.0)),
                JointCoordinate::Mimic {
                    index, multiplier, ..
                } => Some((index, multiplier)),
            };
            if let Some((coordinate, multiplier)) = entry {
                path.push(PathJoint {
                    joint: j,
                    coordinate,
                    multiplier,
                    prismatic: joint.kind == JointKind::Prismatic,
                });
            }
            current = joint.parent_link;
        }
        path.reverse();
        path
    }

    fn check_link(&self, link: usize) -> Result<(), ModelError> {
        if link >= self.links.len() {
            return Err(ModelError::Argument(format!(
                "link index {link} out of range ({} links)",
                self.links.len()
            )));
        }
        Ok(())
    }

    /// Body-frame Jacobian of `link`: column `k` is the twist `(v, ω)` with
    /// `FK(q + h·e_k)_link ≈ FK(q)_link ∘ exp(h · column_k)`.
    pub fn link_jacobian(&self, q: &[f64], link: usize) -> Result<Matrix6xX<f64>, ModelError> {
        self.check_config(q)?;
        self.check_link(link)?;
        let poses = self.forward_kinematics_unchecked(q);
        Ok(self.link_jacobian_from_poses(&poses, link))
    }

    pub(crate) fn link_jacobian_from_poses(&self, poses: &[Transform3], link: usize) -> Matrix6xX<f64> {
        let mut jac = Matrix6xX::zeros(self.actuated_count());
        let link_pose = poses[link];
        for pj in self.path_joints(link) {
            let joint = &self.joints[pj.joint];
            // Link pose relative to the moving joint frame (= child link frame).
            let rel = poses[joint.child_link].inverse().compose(&link_pose);
            let rt = rel.rotation.inverse();
            let (v, w) = if pj.prismatic {
                (rt.rotate(&joint.axis), Vector3::zeros())
            } else {
                (
                    rt.rotate(&joint.axis.cross(&rel.translation)),
                    rt.rotate(&joint.axis),
                )
            };
            let mut col = jac.column_mut(pj.coordinate);
            col.fixed_rows_mut::<3>(0).axpy(pj.multiplier, &v, 1.0);
            col.fixed_rows_mut::<3>(3).axpy(pj.multiplier, &w, 1.0);
        }
        jac
    }

    /// Translational Jacobian of the link origin in root-aligned axes,
    /// together with its derivative along each actuated coordinate.
    ///
    /// `derivatives[k]` is `∂J/∂q_k`.
    pub fn position_jacobian_with_derivatives(
        &self,
        q: &[f64],
        link: usize,
    ) -> Result<(Matrix3xX<f64>, Vec<Matrix3xX<f64>>), ModelError> {
        self.check_config(q)?;
        self.check_link(link)?;
        let poses = self.forward_kinematics_unchecked(q);
        Ok(self.position_jacobian_with_derivatives_from_poses(&poses, link))
    }

    pub(crate) fn position_jacobian_with_derivatives_from_poses(
        &self,
        poses: &[Transform3],
        link: usize,
    ) -> (Matrix3xX<f64>, Vec<Matrix3xX<f64>>) {
        let n = self.actuated_count();
        let path = self.path_joints(link);
        let p_link = poses[link].translation;
        let axes: Vec<Vector3<f64>> = path
            .iter()
            .map(|pj| {
                let joint = &self.joints[pj.joint];
                poses[joint.child_link].rotation.rotate(&joint.axis)
            })
            .collect();
        let origins: Vec<Vector3<f64>> = path
            .iter()
            .map(|pj| poses[self.joints[pj.joint].child_link].translation)
            .collect();

        // Contribution of path joint i to its column: a_i × (p − o_i) or a_i.
        let column_of = |i: usize| -> Vector3<f64> {
            if path[i].prismatic {
                axes[i]
            } else {
                axes[i].cross(&(p_link - origins[i]))
            }
        };
        // Velocity of a point x rigidly attached distal to joint m, per unit θ_m.
        let point_rate = |m: usize, x: &Vector3<f64>| -> Vector3<f64> {
            if path[m].prismatic {
                axes[m]
            } else {
                axes[m].cross(&(x - origins[m]))
            }
        };

        let mut jac = Matrix3xX::zeros(n);
        for (i, pj) in path.iter().enumerate() {
            let mut col = jac.column_mut(pj.coordinate);
            col.axpy(pj.multiplier, &column_of(i), 1.0);
        }

        let mut derivs = vec![Matrix3xX::zeros(n); n];
        for (m, pm) in path.iter().enumerate() {
            let dp_link = point_rate(m, &p_link);
            let d_out = &mut derivs[pm.coordinate];
            for (i, pi) in path.iter().enumerate() {
                // Joint m moves the axis and origin of joint i only when m is
                // proximal to i; it always moves the link origin.
                let proximal = m < i;
                let (da, d_o) = if proximal && !pm.prismatic {
                    (axes[m].cross(&axes[i]), point_rate(m, &origins[i]))
                } else if proximal {
                    (Vector3::zeros(), axes[m])
                } else {
                    (Vector3::zeros(), Vector3::zeros())
                };
                let dcol = if pi.prismatic {
                    da
                } else {
                    da.cross(&(p_link - origins[i])) + axes[i].cross(&(dp_link - d_o))
                };
                let mut col = d_out.column_mut(pi.coordinate);
                col.axpy(pm.multiplier * pi.multiplier, &dcol, 1.0);
            }
        }
        (jac, derivs)
    }

    /// Densely sampled configuration helper: `q` clamped into position limits.
    pub fn clamp_to_limits(&self, q: &mut [f64]) {
        for (k, lim) in self.position_limits().into_iter().enumerate() {
            if let Some(l) = lim {
                q[k] = q[k].clamp(l.lower, l.upper);
            }
        }
    }
}

/// Yoshikawa measure `sqrt(det(J Jᵀ))` of an `r × n` block, using the
/// smaller Gram matrix so that `n < r` stays meaningful.
pub fn manipulability_measure(j: &DMatrix<f64>) -> f64 {
    let gram = if j.nrows() <= j.ncols() {
        j * j.transpose()
    } else {
        j.transpose() * j
    };
    gram.determinant().max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liegroups::se3_log;
    use crate::assets::{planar_2r, tests::mimic_chain_urdf};
    use approx::assert_relative_eq;
    use nalgebra::Vector6;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn planar_2r_fk() {
        let m = planar_2r();
        let ee = m.link_id("ee").unwrap();
        let poses = m.forward_kinematics(&[0.0, 0.0]).unwrap();
        assert_relative_eq!(poses[ee].translation, Vector3::new(2.0, 0.0, 0.0));
        assert_eq!(poses[0], Transform3::identity());
        let poses = m.forward_kinematics(&[FRAC_PI_2, FRAC_PI_2]).unwrap();
        assert_relative_eq!(poses[ee].translation, Vector3::new(-1.0, 1.0, 0.0), epsilon = 1e-15);
        assert!(m.forward_kinematics(&[0.0]).is_err());
    }

    #[test]
    fn rest_config_child_equals_origin() {
        let m = planar_2r();
        let poses = m.forward_kinematics(&[0.0, 0.0]).unwrap();
        let j = &m.joints[1];
        assert_eq!(poses[j.child_link], poses[j.parent_link].compose(&j.origin));
    }

    #[test]
    fn textbook_single_joint_column() {
        let m = planar_2r();
        // link1 frame sits at the first joint; link2 frame is 1 m along x.
        let link2 = m.link_id("link2").unwrap();
        let jac = m.link_jacobian(&[0.0, 0.0], link2).unwrap();
        assert_relative_eq!(
            jac.column(0).into_owned(),
            Vector6::new(0.0, 1.0, 0.0, 0.0, 0.0, 1.0),
            epsilon = 1e-15
        );
        assert_eq!(jac.column(1).into_owned(), Vector6::new(0.0, 0.0, 0.0, 0.0, 0.0, 1.0));
        // The root link only has fixed/no joints above it.
        let base = m.link_jacobian(&[0.3, 0.2], 0).unwrap();
        assert_eq!(base, Matrix6xX::zeros(2));
        assert!(m.link_jacobian(&[0.0, 0.0], 99).is_err());
    }

    #[test]
    fn fixed_only_chain_has_zero_jacobian() {
        let doc = r#"<robot name="f"><link name="a"/><link name="b"/><link name="c"/>
            <joint name="f1" type="fixed"><parent link="a"/><child link="b"/><origin xyz="1 0 0"/></joint>
            <joint name="r" type="revolute"><parent link="a"/><child link="c"/><limit lower="-1" upper="1"/></joint>
            </robot>"#;
        let m = RobotModel::from_urdf(doc).unwrap();
        let b = m.link_id("b").unwrap();
        assert_eq!(m.link_jacobian(&[0.7], b).unwrap(), Matrix6xX::zeros(1));
    }

    #[test]
    fn mimic_value_in_fk() {
        let m = RobotModel::from_urdf(&mimic_chain_urdf()).unwrap();
        assert_eq!(m.actuated_count(), 1);
        let b = m.joint_id("b").unwrap();
        assert_relative_eq!(m.joint_value(b, &[0.3]), 0.7, epsilon = 1e-15);
        let poses = m.forward_kinematics(&[0.3]).unwrap();
        let lb = m.joints[b].child_link;
        let la = m.joints[b].parent_link;
        let motion = m.joints[b].origin.inverse().compose(&poses[la].inverse().compose(&poses[lb]));
        assert_relative_eq!(motion.rotation.angle(), 0.7, epsilon = 1e-12);
    }

    #[test]
    fn manipulability_of_2r() {
        let m = planar_2r();
        let ee = m.link_id("ee").unwrap();
        let (jp, _) = m.position_jacobian_with_derivatives(&[0.0, FRAC_PI_2], ee).unwrap();
        let jp = DMatrix::from_column_slice(3, 2, jp.as_slice());
        assert_relative_eq!(manipulability_measure(&jp), 1.0, epsilon = 1e-12);
        let (jp, _) = m.position_jacobian_with_derivatives(&[0.0, 0.0], ee).unwrap();
        let jp = DMatrix::from_column_slice(3, 2, jp.as_slice());
        assert!(manipulability_measure(&jp) < 1e-12);
    }

    #[test]
    fn velocity_composition_is_second_order() {
        let m = planar_2r();
        let ee = m.link_id("ee").unwrap();
        let q = [0.4, -1.1];
        let dq = nalgebra::DVector::from_vec(vec![0.7, 0.3]);
        let jac = m.link_jacobian(&q, ee).unwrap();
        let t0 = m.forward_kinematics(&q).unwrap()[ee];
        let mut errs = Vec::new();
        for eps in [1e-2, 1e-3] {
            let q1: Vec<f64> = q.iter().zip(dq.iter()).map(|(a, b)| a + eps * b).collect();
            let t1 = m.forward_kinematics(&q1).unwrap()[ee];
            let r = se3_log(&t1.inverse().compose(&t0)).0 + (&jac * &dq) * eps;
            errs.push(r.norm());
        }
        // error drops ~100x for a 10x smaller step
        assert!(errs[1] < errs[0] / 50.0, "{errs:?}");
    }
}
