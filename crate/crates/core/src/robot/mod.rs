//! Kinematic trees parsed from URDF.
//!
//! Actuated coordinates `q` are ordered by the topological joint order,
//! restricted to joints that are neither fixed nor mimic.

mod kinematics;
mod sidecar;
mod urdf;

use std::collections::HashMap;

use nalgebra::{DVector, Vector3};
use thiserror::Error;

use crate::liegroups::Transform3;

pub use kinematics::{manipulability_measure, PathJoint};
pub use sidecar::{SidecarConfig, SphereSpec};
pub use urdf::parse_urdf;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("malformed URDF: {0}")]
    Xml(String),
    #[error("kinematic structure error at joint `{joint}`: {detail}")]
    Structure { joint: String, detail: String },
    #[error("unsupported joint type `{kind}` on joint `{joint}`")]
    Unsupported { joint: String, kind: String },
    #[error("invalid robot description: {0}")]
    Validation(String),
    #[error("{0}")]
    Argument(String),
    #[error("sidecar config: {0}")]
    Sidecar(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JointKind {
    Fixed,
    Revolute,
    Continuous,
    Prismatic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Limits {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mimic {
    /// Index into `RobotModel::joints`.
    pub source: usize,
    pub multiplier: f64,
    pub offset: f64,
}

#[derive(Clone, Debug)]
pub struct Joint {
    pub name: String,
    pub kind: JointKind,
    pub parent_link: usize,
    pub child_link: usize,
    /// Joint frame expressed in the parent link frame.
    pub origin: Transform3,
    pub axis: Vector3<f64>,
    pub limits: Option<Limits>,
    pub velocity_limit: Option<f64>,
    pub mimic: Option<Mimic>,
}

/// How a joint's displacement depends on `q`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum JointCoordinate {
    Fixed,
    Actuated(usize),
    Mimic {
        index: usize,
        multiplier: f64,
        offset: f64,
    },
}

#[derive(Clone, Debug)]
pub struct Link {
    pub name: String,
    pub parent_joint: Option<usize>,
}

/// Collision sphere in its link's frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkSphere {
    pub center: Vector3<f64>,
    pub radius: f64,
}

#[derive(Clone, Debug)]
pub struct RobotModel {
    pub name: String,
    /// Topologically ordered; index 0 is the root.
    pub links: Vec<Link>,
    /// Topologically ordered.
    pub joints: Vec<Joint>,
    coordinates: Vec<JointCoordinate>,
    actuated: Vec<usize>,
    pub collision_spheres: Vec<Vec<LinkSphere>>,
    pub self_collision_pairs: Vec<(usize, usize)>,
    rest_pose: DVector<f64>,
    link_index: HashMap<String, usize>,
}

impl RobotModel {
    pub fn from_urdf(document: &str) -> Result<Self, ModelError> {
        parse_urdf(document)
    }

    /// Parses a URDF and applies a sidecar JSON config.
    pub fn from_urdf_with_sidecar(document: &str, sidecar_json: &str) -> Result<Self, ModelError> {
        let mut model = parse_urdf(document)?;
        let config = SidecarConfig::from_json(sidecar_json)?;
        model.apply_sidecar(&config)?;
        Ok(model)
    }

    pub(crate) fn assemble(
        name: String,
        links: Vec<Link>,
        joints: Vec<Joint>,
        collision_spheres: Vec<Vec<LinkSphere>>,
    ) -> Self {
        let mut actuated = Vec::new();
        let mut actuated_of_joint = vec![None; joints.len()];
        for (j, joint) in joints.iter().enumerate() {
            if joint.kind != JointKind::Fixed && joint.mimic.is_none() {
                actuated_of_joint[j] = Some(actuated.len());
                actuated.push(j);
            }
        }
        let coordinates = joints
            .iter()
            .enumerate()
            .map(|(j, joint)| match (joint.kind, joint.mimic) {
                (JointKind::Fixed, _) => JointCoordinate::Fixed,
                (_, Some(m)) => JointCoordinate::Mimic {
                    index: actuated_of_joint[m.source].expect("validated mimic source"),
                    multiplier: m.multiplier,
                    offset: m.offset,
                },
                (_, None) => JointCoordinate::Actuated(actuated_of_joint[j].unwrap()),
            })
            .collect();
        let link_index = links
            .iter()
            .enumerate()
            .map(|(i, l)| (l.name.clone(), i))
            .collect();
        let rest_pose = DVector::from_iterator(
            actuated.len(),
            actuated.iter().map(|&j| match joints[j].limits {
                Some(l) if !(l.lower..=l.upper).contains(&0.0) => 0.5 * (l.lower + l.upper),
                _ => 0.0,
            }),
        );
        let mut model = RobotModel {
            name,
            links,
            joints,
            coordinates,
            actuated,
            collision_spheres,
            self_collision_pairs: Vec::new(),
            rest_pose,
            link_index,
        };
        model.self_collision_pairs = model.default_self_collision_pairs(&[]);
        model
    }

    pub fn actuated_count(&self) -> usize {
        self.actuated.len()
    }

    /// Joint indices of the actuated coordinates, in `q` order.
    pub fn actuated_joints(&self) -> &[usize] {
        &self.actuated
    }

    pub fn actuated_joint(&self, k: usize) -> &Joint {
        &self.joints[self.actuated[k]]
    }

    pub fn coordinate(&self, joint: usize) -> JointCoordinate {
        self.coordinates[joint]
    }

    pub fn link_id(&self, name: &str) -> Result<usize, ModelError> {
        self.link_index
            .get(name)
            .copied()
            .ok_or_else(|| ModelError::Argument(format!("unknown link `{name}`")))
    }

    pub fn link_name(&self, link: usize) -> &str {
        &self.links[link].name
    }

    pub fn joint_id(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn rest_pose(&self) -> &DVector<f64> {
        &self.rest_pose
    }

    pub fn set_rest_pose(&mut self, q: DVector<f64>) -> Result<(), ModelError> {
        self.check_config(q.as_slice())?;
        self.rest_pose = q;
        Ok(())
    }

    /// `(lower, upper)` per actuated coordinate; `None` for continuous joints.
    pub fn position_limits(&self) -> Vec<Option<Limits>> {
        self.actuated
            .iter()
            .map(|&j| self.joints[j].limits)
            .collect()
    }

    pub fn velocity_limits(&self) -> Vec<Option<f64>> {
        self.actuated
            .iter()
            .map(|&j| self.joints[j].velocity_limit)
            .collect()
    }

    pub(crate) fn check_config(&self, q: &[f64]) -> Result<(), ModelError> {
        if q.len() != self.actuated_count() {
            return Err(ModelError::Argument(format!(
                "joint configuration has {} values, robot `{}` has {} actuated joints",
                q.len(),
                self.name,
                self.actuated_count()
            )));
        }
        Ok(())
    }

    /// Displacement of `joint` at configuration `q` (0 for fixed joints).
    pub fn joint_value(&self, joint: usize, q: &[f64]) -> f64 {
        match self.coordinates[joint] {
            JointCoordinate::Fixed => 0.0,
            JointCoordinate::Actuated(k) => q[k],
            JointCoordinate::Mimic {
                index,
                multiplier,
                offset,
            } => multiplier * q[index] + offset,
        }
    }

    /// Links with a direct parent/child relationship.
    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        let parent_of = |l: usize| self.links[l].parent_joint.map(|j| self.joints[j].parent_link);
        parent_of(a) == Some(b) || parent_of(b) == Some(a)
    }

    /// All pairs of sphere-carrying links minus adjacent and ignored pairs.
    pub fn default_self_collision_pairs(&self, ignore: &[(usize, usize)]) -> Vec<(usize, usize)> {
        let with_spheres: Vec<usize> = (0..self.links.len())
            .filter(|&l| !self.collision_spheres[l].is_empty())
            .collect();
        let mut pairs = Vec::new();
        for (i, &a) in with_spheres.iter().enumerate() {
            for &b in &with_spheres[i + 1..] {
                let ignored = ignore.iter().any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a));
                if !self.adjacent(a, b) && !ignored {
                    pairs.push((a, b));
                }
            }
        }
        pairs
    }

    pub fn apply_sidecar(&mut self, config: &SidecarConfig) -> Result<(), ModelError> {
        for (link, spheres) in &config.collision_spheres {
            let id = self
                .link_id(link)
                .map_err(|_| ModelError::Sidecar(format!("unknown link `{link}` in collision_spheres")))?;
            let mut parsed = Vec::with_capacity(spheres.len());
            for s in spheres {
                if !(s.radius > 0.0) {
                    return Err(ModelError::Sidecar(format!(
                        "sphere on link `{link}` has non-positive radius {}",
                        s.radius
                    )));
                }
                parsed.push(LinkSphere {
                    center: Vector3::from(s.center),
                    radius: s.radius,
                });
            }
            self.collision_spheres[id] = parsed;
        }
        let mut ignore = Vec::new();
        for [a, b] in &config.self_collision_ignore {
            let ia = self
                .link_id(a)
                .map_err(|_| ModelError::Sidecar(format!("unknown link `{a}` in self_collision_ignore")))?;
            let ib = self
                .link_id(b)
                .map_err(|_| ModelError::Sidecar(format!("unknown link `{b}` in self_collision_ignore")))?;
            ignore.push((ia, ib));
        }
        self.self_collision_pairs = self.default_self_collision_pairs(&ignore);
        if let Some(rest) = &config.rest_pose {
            self.set_rest_pose(DVector::from_column_slice(rest))
                .map_err(|e| ModelError::Sidecar(e.to_string()))?;
        }
        Ok(())
    }
}
