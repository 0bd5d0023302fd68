//! The robot body: five revolute joints, their limits, a small kinematic tree
//! for visualization, and the named-expression face display.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Isometry3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointId {
    BaseYaw,
    HeadPitch,
    HeadYaw,
    LeftArm,
    RightArm,
}

impl JointId {
    pub const ALL: [JointId; 5] = [
        JointId::BaseYaw,
        JointId::HeadPitch,
        JointId::HeadYaw,
        JointId::LeftArm,
        JointId::RightArm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            JointId::BaseYaw => "base_yaw",
            JointId::HeadPitch => "head_pitch",
            JointId::HeadYaw => "head_yaw",
            JointId::LeftArm => "left_arm",
            JointId::RightArm => "right_arm",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for JointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for JointId {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        JointId::ALL
            .into_iter()
            .find(|j| j.as_str() == s)
            .ok_or_else(|| ModelError::UnknownJoint(s.to_owned()))
    }
}

/// Partial or complete joint position (or velocity) assignment, radians.
pub type JointMap = BTreeMap<JointId, f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("joint {0} missing")]
    MissingJoint(JointId),
    #[error("unknown joint {0:?}")]
    UnknownJoint(String),
    #[error("invalid limits for {joint}: {reason}")]
    InvalidLimits { joint: JointId, reason: String },
    #[error("kinematic tree: {0}")]
    InvalidTree(String),
    #[error("invalid display: {0}")]
    InvalidDisplay(String),
    #[error("description parse error: {0}")]
    Parse(String),
    #[error("io error reading {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub min: f64,
    pub max: f64,
    pub v_max: f64,
}

impl JointLimits {
    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.min, self.max)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Origin {
    pub xyz: [f64; 3],
    /// Roll, pitch, yaw (radians), applied as fixed-axis X then Y then Z.
    pub rpy: [f64; 3],
}

impl Origin {
    pub fn isometry(&self) -> Isometry3<f64> {
        let [x, y, z] = self.xyz;
        let [r, p, yw] = self.rpy;
        Isometry3::from_parts(
            Translation3::new(x, y, z),
            UnitQuaternion::from_euler_angles(r, p, yw),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub limits: JointLimits,
    /// Link this joint hangs from.
    pub parent: String,
    /// Link this joint moves.
    pub child: String,
    pub origin: Origin,
    pub axis: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Display {
    pub width: u32,
    pub height: u32,
    pub expressions: Vec<String>,
    pub default_expression: String,
}

/// The robot description document shared by the simulator, expression engine
/// and twin UI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotDescription {
    pub name: String,
    pub base_link: String,
    pub joints: BTreeMap<JointId, JointSpec>,
    pub display: Display,
}

const DEFAULT_DESCRIPTION: &str = include_str!("../assets/robot.json");

impl RobotDescription {
    /// The bundled description of M.
    pub fn builtin() -> Self {
        Self::from_json(DEFAULT_DESCRIPTION).expect("bundled robot description is valid")
    }

    pub fn builtin_json() -> &'static str {
        DEFAULT_DESCRIPTION
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let desc: RobotDescription =
            serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        desc.validate()?;
        Ok(desc)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for j in JointId::ALL {
            let spec = self.joints.get(&j).ok_or(ModelError::MissingJoint(j))?;
            let l = spec.limits;
            if !(l.min.is_finite() && l.max.is_finite() && l.min < l.max) {
                return Err(ModelError::InvalidLimits {
                    joint: j,
                    reason: format!("min {} must be < max {}", l.min, l.max),
                });
            }
            if !(l.v_max.is_finite() && l.v_max > 0.0) {
                return Err(ModelError::InvalidLimits {
                    joint: j,
                    reason: format!("v_max {} must be > 0", l.v_max),
                });
            }
            let n = Vector3::from(spec.axis).norm();
            if !(n.is_finite() && n > 1e-9) {
                return Err(ModelError::InvalidTree(format!("{j}: zero axis")));
            }
        }
        let mut children = BTreeSet::new();
        for (j, spec) in &self.joints {
            if spec.child == self.base_link || !children.insert(spec.child.clone()) {
                return Err(ModelError::InvalidTree(format!(
                    "{j}: link {} has more than one parent joint",
                    spec.child
                )));
            }
        }
        // Every chain must reach the base link.
        for j in JointId::ALL {
            let mut link = self.joints[&j].parent.clone();
            let mut hops = 0;
            while link != self.base_link {
                let parent = self
                    .joints
                    .values()
                    .find(|s| s.child == link)
                    .ok_or_else(|| {
                        ModelError::InvalidTree(format!("{j}: link {link} is not attached"))
                    })?;
                link = parent.parent.clone();
                hops += 1;
                if hops > JointId::ALL.len() {
                    return Err(ModelError::InvalidTree(format!("{j}: cycle")));
                }
            }
        }
        if self.display.width == 0 || self.display.height == 0 {
            return Err(ModelError::InvalidDisplay("zero size".into()));
        }
        if !self
            .display
            .expressions
            .contains(&self.display.default_expression)
        {
            return Err(ModelError::InvalidDisplay(format!(
                "default expression {} not in the expression set",
                self.display.default_expression
            )));
        }
        Ok(())
    }

    pub fn limits(&self, j: JointId) -> JointLimits {
        self.joints[&j].limits
    }

    pub fn has_expression(&self, name: &str) -> bool {
        self.display.expressions.iter().any(|e| e == name)
    }

    /// All joints at zero, clamped into limits.
    pub fn rest_pose(&self) -> JointMap {
        JointId::ALL
            .into_iter()
            .map(|j| (j, self.limits(j).clamp(0.0)))
            .collect()
    }

    /// Joints ordered so that every joint comes after the joint that owns its
    /// parent link.
    pub fn chain_order(&self) -> Vec<JointId> {
        let mut order = Vec::new();
        let mut placed: BTreeSet<String> = BTreeSet::from([self.base_link.clone()]);
        while order.len() < JointId::ALL.len() {
            for j in JointId::ALL {
                let spec = &self.joints[&j];
                if !order.contains(&j) && placed.contains(&spec.parent) {
                    order.push(j);
                    placed.insert(spec.child.clone());
                }
            }
        }
        order
    }

    /// Joints between the base and `link`, base first.
    pub fn ancestors(&self, link: &str) -> Vec<JointId> {
        let mut out = Vec::new();
        let mut cur = link.to_owned();
        while let Some((j, spec)) = self.joints.iter().find(|(_, s)| s.child == cur) {
            out.push(*j);
            cur = spec.parent.clone();
        }
        out.reverse();
        out
    }

    /// Upper bound `L` such that for any two configurations within the
    /// infinity-norm distance `e`, every link pose differs by at most `L * e`
    /// in (translation distance + rotation angle).
    pub fn lipschitz_bound(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for j in JointId::ALL {
            let link = &self.joints[&j].child;
            let chain = self.ancestors(link);
            let mut bound = 0.0;
            for (i, _) in chain.iter().enumerate() {
                // Distance from this joint's axis to the link is at most the sum
                // of the offsets further down the chain.
                let reach: f64 = chain[i + 1..]
                    .iter()
                    .map(|k| Vector3::from(self.joints[k].origin.xyz).norm())
                    .sum();
                bound += 1.0 + reach;
            }
            worst = worst.max(bound);
        }
        worst
    }
}

/// Clamps every joint into its limits. Idempotent.
pub fn clamp(desc: &RobotDescription, q: &JointMap) -> Result<JointMap, ModelError> {
    JointId::ALL
        .into_iter()
        .map(|j| {
            let x = *q.get(&j).ok_or(ModelError::MissingJoint(j))?;
            Ok((j, desc.limits(j).clamp(x)))
        })
        .collect()
}

/// World pose of every link. The base link sits at the origin.
pub fn forward_pose(
    desc: &RobotDescription,
    q: &JointMap,
) -> Result<BTreeMap<String, Isometry3<f64>>, ModelError> {
    for j in JointId::ALL {
        if !q.contains_key(&j) {
            return Err(ModelError::MissingJoint(j));
        }
    }
    let mut frames = BTreeMap::from([(desc.base_link.clone(), Isometry3::identity())]);
    for j in desc.chain_order() {
        let spec = &desc.joints[&j];
        let parent = frames[&spec.parent];
        frames.insert(spec.child.clone(), parent * joint_transform(spec, q[&j]));
    }
    Ok(frames)
}

/// Parent-to-child transform of one joint at angle `angle`.
pub fn joint_transform(spec: &JointSpec, angle: f64) -> Isometry3<f64> {
    let axis = Unit::new_normalize(Vector3::from(spec.axis));
    spec.origin.isometry() * UnitQuaternion::from_axis_angle(&axis, angle)
}

/// Translation distance plus rotation angle between two poses.
pub fn pose_distance(a: &Isometry3<f64>, b: &Isometry3<f64>) -> f64 {
    (a.translation.vector - b.translation.vector).norm() + a.rotation.angle_to(&b.rotation)
}
