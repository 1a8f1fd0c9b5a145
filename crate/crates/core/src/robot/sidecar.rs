use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SphereSpec {
    pub center: [f64; 3],
    pub radius: f64,
}

/// Per-robot collision and rest-pose settings kept next to the URDF.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SidecarConfig {
    #[serde(default)]
    pub collision_spheres: BTreeMap<String, Vec<SphereSpec>>,
    #[serde(default)]
    pub self_collision_ignore: Vec<[String; 2]>,
    #[serde(default)]
    pub rest_pose: Option<Vec<f64>>,
}

impl SidecarConfig {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Sidecar(e.to_string()))
    }
}
