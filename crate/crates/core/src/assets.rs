//! Robot descriptions bundled with the crate.

use crate::robot::RobotModel;

pub const PLANAR_2R_URDF: &str = include_str!("../robots/planar_2r.urdf");
pub const PANDA_URDF: &str = include_str!("../robots/panda.urdf");
pub const PANDA_SIDECAR: &str = include_str!("../robots/panda.json");
pub const UR5_URDF: &str = include_str!("../robots/ur5.urdf");
pub const UR5_SIDECAR: &str = include_str!("../robots/ur5.json");

/// End-effector link names used by the task drivers and benchmarks.
pub const PANDA_EE: &str = "panda_hand";
pub const UR5_EE: &str = "ee_link";
pub const PLANAR_2R_EE: &str = "ee";

/// Two unit links rotating about z.
pub fn planar_2r() -> RobotModel {
    RobotModel::from_urdf(PLANAR_2R_URDF).expect("bundled planar_2r.urdf parses")
}

pub fn panda() -> RobotModel {
    RobotModel::from_urdf_with_sidecar(PANDA_URDF, PANDA_SIDECAR).expect("bundled panda parses")
}

pub fn ur5() -> RobotModel {
    RobotModel::from_urdf_with_sidecar(UR5_URDF, UR5_SIDECAR).expect("bundled ur5 parses")
}

/// Looks up a bundled robot by name: `planar_2r`, `panda` or `ur5`.
pub fn builtin(name: &str) -> Option<(RobotModel, &'static str)> {
    match name {
        "planar_2r" => Some((planar_2r(), PLANAR_2R_EE)),
        "panda" => Some((panda(), PANDA_EE)),
        "ur5" => Some((ur5(), UR5_EE)),
        _ => None,
    }
}
