//! Robot, pose, weight and problem-file loading shared by the subcommands.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use kinoptik::assets;
use kinoptik::collision::WorldModel;
use kinoptik::costs::CostWeights;
use kinoptik::liegroups::Transform3;
use kinoptik::robot::RobotModel;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum TaskKind {
    Ik,
    IkMobile,
    Traj,
}

/// Where the robot comes from. Explicit flags win over a problem file.
#[derive(Args, Clone, Debug, Default)]
pub struct RobotArgs {
    /// URDF file.
    #[arg(long)]
    pub urdf: Option<PathBuf>,
    /// JSON sidecar with collision spheres, rest pose and limit overrides.
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
    /// Bundled robot instead of a URDF: planar_2r, panda or ur5.
    #[arg(long, conflicts_with = "urdf")]
    pub robot: Option<String>,
    /// Target link name. Defaults to the end effector of a bundled robot.
    #[arg(long)]
    pub link: Option<String>,
}

impl RobotArgs {
    /// Fills unset fields from `other`.
    pub fn or(self, other: RobotArgs) -> RobotArgs {
        let explicit_source = self.urdf.is_some() || self.robot.is_some();
        RobotArgs {
            urdf: if explicit_source { self.urdf } else { other.urdf },
            sidecar: self.sidecar.or(if explicit_source { None } else { other.sidecar }),
            robot: if explicit_source { self.robot } else { other.robot },
            link: self.link.or(other.link),
        }
    }

    pub fn load(&self) -> Result<(Arc<RobotModel>, usize)> {
        let (model, default_link) = match (&self.urdf, &self.robot) {
            (Some(path), _) => {
                let urdf = read(path, "URDF")?;
                let model = match &self.sidecar {
                    Some(s) => RobotModel::from_urdf_with_sidecar(&urdf, &read(s, "sidecar")?),
                    None => RobotModel::from_urdf(&urdf),
                }
                .with_context(|| format!("cannot load robot from {}", path.display()))?;
                (model, None)
            }
            (None, Some(name)) => {
                if self.sidecar.is_some() {
                    bail!("--sidecar needs --urdf");
                }
                let (model, ee) =
                    assets::builtin(name).with_context(|| format!("unknown bundled robot `{name}`"))?;
                (model, Some(ee))
            }
            (None, None) => bail!("no robot given: pass --urdf or --robot"),
        };
        let Some(link) = self.link.as_deref().or(default_link) else {
            bail!("--link is required with --urdf");
        };
        let id = model.link_id(link)?;
        Ok((Arc::new(model), id))
    }
}

pub fn read(path: &Path, what: &str) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {what} {}", path.display()))
}

pub fn parse_pose(text: &str, what: &str) -> Result<Transform3> {
    serde_json::from_str(text).with_context(|| format!("invalid {what} pose"))
}

pub fn load_weights(path: &Path) -> Result<CostWeights> {
    let w: CostWeights =
        serde_json::from_str(&read(path, "weights")?).with_context(|| format!("invalid weights in {}", path.display()))?;
    w.validate().map_err(anyhow::Error::msg)?;
    Ok(w)
}

pub fn load_world(path: &Path) -> Result<WorldModel> {
    WorldModel::from_json(&read(path, "world")?)
        .map_err(anyhow::Error::msg)
        .with_context(|| format!("invalid world in {}", path.display()))
}

/// Flag, then `KINOPTIK_WORKERS`, then the available parallelism.
pub fn workers(flag: Option<usize>) -> Result<usize> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var("KINOPTIK_WORKERS") {
            Ok(v) => v.trim().parse().with_context(|| format!("KINOPTIK_WORKERS is not a count: `{v}`"))?,
            Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
        },
    };
    if n == 0 {
        bail!("worker count must be at least 1");
    }
    Ok(n)
}

/// A JSON problem description. Paths are relative to the file.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub task: Option<TaskKind>,
    pub urdf: Option<PathBuf>,
    pub sidecar: Option<PathBuf>,
    pub robot: Option<String>,
    pub link: Option<String>,
    pub target: Option<Transform3>,
    pub start: Option<Transform3>,
    pub goal: Option<Transform3>,
    pub weights: Option<CostWeights>,
    pub world: Option<WorldModel>,
    #[serde(default)]
    pub options: ProblemOptions,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemOptions {
    pub rng_seed: Option<u64>,
    pub seeds: Option<usize>,
    pub timesteps: Option<usize>,
    pub dt: Option<f64>,
}

impl ProblemFile {
    pub fn load(path: Option<&Path>) -> Result<ProblemFile> {
        let Some(path) = path else {
            return Ok(ProblemFile::default());
        };
        let mut p: ProblemFile = serde_json::from_str(&read(path, "problem file")?)
            .with_context(|| format!("invalid problem file {}", path.display()))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        p.urdf = p.urdf.map(|u| dir.join(u));
        p.sidecar = p.sidecar.map(|s| dir.join(s));
        Ok(p)
    }

    pub fn robot(&self) -> RobotArgs {
        RobotArgs {
            urdf: self.urdf.clone(),
            sidecar: self.sidecar.clone(),
            robot: self.robot.clone(),
            link: self.link.clone(),
        }
    }

    pub fn expect_task(&self, allowed: &[TaskKind]) -> Result<()> {
        match self.task {
            Some(t) if !allowed.contains(&t) => bail!("problem file task {t:?} does not fit this command"),
            _ => Ok(()),
        }
    }
}
