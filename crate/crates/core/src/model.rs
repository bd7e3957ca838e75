//! Shared domain types: joint vectors, arm and base poses, velocity commands,
//! and the small amount of angle/quaternion arithmetic everything else needs.
//!
//! Internal units are SI throughout (radians, meters, seconds). Degrees only
//! show up when parsing prompts or rendering output.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Errors raised when constructing or validating model values.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("quaternion norm {norm} is not normalizable (must be within 0.01 of 1)")]
    NotNormalizable { norm: f64 },
    #[error("missing joint `{0}`")]
    MissingJoint(String),
    #[error("unknown joint `{0}`")]
    UnknownJoint(String),
    #[error("non-finite value for `{0}`")]
    NonFinite(String),
    #[error("joint `{joint}` limits are empty: min {min} >= max {max}")]
    InvalidLimits { joint: String, min: f64, max: f64 },
    #[error("duration must be >= 0, got {0}")]
    NegativeDuration(f64),
}

/// Quaternions further than this from unit norm are rejected outright.
pub const QUATERNION_ACCEPT_TOLERANCE: f64 = 0.01;
/// Norm tolerance guaranteed after normalization.
pub const QUATERNION_UNIT_TOLERANCE: f64 = 1e-6;

/// Wraps an angle into `(-π, π]`. `-π` maps to `+π`.
///
/// Angles already inside the interval are returned untouched, so the
/// function is exactly idempotent.
pub fn wrap_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let r = theta.rem_euclid(TAU);
    let wrapped = if r > PI { r - TAU } else { r };
    if wrapped <= -PI {
        PI
    } else {
        wrapped
    }
}

pub fn deg_to_rad(degrees: f64) -> f64 {
    degrees.to_radians()
}

pub fn rad_to_deg(radians: f64) -> f64 {
    radians.to_degrees()
}

/// The seven arm joints, base to wrist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Joint {
    J0,
    J1,
    J2,
    J3,
    J4,
    J5,
    J6,
}

impl Joint {
    pub const ALL: [Joint; 7] = [
        Joint::J0,
        Joint::J1,
        Joint::J2,
        Joint::J3,
        Joint::J4,
        Joint::J5,
        Joint::J6,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Joint::J0 => "right_j0",
            Joint::J1 => "right_j1",
            Joint::J2 => "right_j2",
            Joint::J3 => "right_j3",
            Joint::J4 => "right_j4",
            Joint::J5 => "right_j5",
            Joint::J6 => "right_j6",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Looks a joint up by its full name (`right_j3`).
    pub fn from_name(name: &str) -> Option<Joint> {
        Joint::ALL.iter().copied().find(|j| j.name() == name)
    }
}

impl fmt::Display for Joint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Angles for all seven joints, in radians.
///
/// Serialized as a JSON object keyed by joint name. Deserialization rejects
/// missing joints, unknown joints and non-finite angles.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JointVector([f64; 7]);

impl JointVector {
    pub const ZERO: JointVector = JointVector([0.0; 7]);

    pub fn new(angles: [f64; 7]) -> Result<Self, ModelError> {
        for joint in Joint::ALL {
            if !angles[joint.index()].is_finite() {
                return Err(ModelError::NonFinite(joint.name().to_string()));
            }
        }
        Ok(JointVector(angles))
    }

    /// Builds a vector from `(name, angle)` pairs; every joint must appear exactly once.
    pub fn from_named<'a, I>(pairs: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let mut slots: [Option<f64>; 7] = [None; 7];
        for (name, angle) in pairs {
            let joint =
                Joint::from_name(name).ok_or_else(|| ModelError::UnknownJoint(name.to_string()))?;
            slots[joint.index()] = Some(angle);
        }
        let mut angles = [0.0; 7];
        for joint in Joint::ALL {
            angles[joint.index()] = slots[joint.index()]
                .ok_or_else(|| ModelError::MissingJoint(joint.name().into()))?;
        }
        JointVector::new(angles)
    }

    pub fn get(&self, joint: Joint) -> f64 {
        self.0[joint.index()]
    }

    pub fn with(mut self, joint: Joint, angle: f64) -> Self {
        self.0[joint.index()] = angle;
        self
    }

    pub fn as_array(&self) -> &[f64; 7] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = (Joint, f64)> + '_ {
        Joint::ALL.iter().map(move |j| (*j, self.0[j.index()]))
    }
}

impl Serialize for JointVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(7))?;
        for (joint, angle) in self.iter() {
            map.serialize_entry(joint.name(), &angle)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for JointVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = BTreeMap::<String, f64>::deserialize(deserializer)?;
        JointVector::from_named(raw.iter().map(|(k, v)| (k.as_str(), *v))).map_err(D::Error::custom)
    }
}

/// Per-joint `(min, max)` position limits in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLimits([(f64, f64); 7]);

/// Default symmetric limit applied to every joint.
pub const DEFAULT_JOINT_LIMIT: f64 = 3.0503;

impl Default for JointLimits {
    fn default() -> Self {
        JointLimits::symmetric(DEFAULT_JOINT_LIMIT).expect("positive default limit")
    }
}

impl JointLimits {
    pub fn new(limits: [(f64, f64); 7]) -> Result<Self, ModelError> {
        for joint in Joint::ALL {
            let (min, max) = limits[joint.index()];
            if !(min.is_finite() && max.is_finite()) {
                return Err(ModelError::NonFinite(joint.name().into()));
            }
            if min >= max {
                return Err(ModelError::InvalidLimits {
                    joint: joint.name().into(),
                    min,
                    max,
                });
            }
        }
        Ok(JointLimits(limits))
    }

    pub fn symmetric(bound: f64) -> Result<Self, ModelError> {
        JointLimits::new([(-bound, bound); 7])
    }

    pub fn get(&self, joint: Joint) -> (f64, f64) {
        self.0[joint.index()]
    }

    pub fn contains(&self, joints: &JointVector) -> bool {
        joints.iter().all(|(j, a)| {
            let (min, max) = self.get(j);
            a >= min && a <= max
        })
    }
}

impl Serialize for JointLimits {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(7))?;
        for joint in Joint::ALL {
            let (min, max) = self.get(joint);
            map.serialize_entry(joint.name(), &[min, max])?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for JointLimits {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = BTreeMap::<String, [f64; 2]>::deserialize(deserializer)?;
        let mut slots: [Option<(f64, f64)>; 7] = [None; 7];
        for (name, [min, max]) in raw {
            let joint = Joint::from_name(&name)
                .ok_or_else(|| D::Error::custom(ModelError::UnknownJoint(name.clone())))?;
            slots[joint.index()] = Some((min, max));
        }
        let mut limits = [(0.0, 0.0); 7];
        for joint in Joint::ALL {
            limits[joint.index()] = slots[joint.index()]
                .ok_or_else(|| D::Error::custom(ModelError::MissingJoint(joint.name().into())))?;
        }
        JointLimits::new(limits).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        x: 0.0,
        y: 0.0,
        z: 0.0,
        w: 1.0,
    };

    pub fn new(x: f64, y: f64, z: f64, w: f64) -> Self {
        Quaternion { x, y, z, w }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z + self.w * self.w).sqrt()
    }

    pub fn dot(&self, other: &Quaternion) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z + self.w * other.w
    }

    /// Rotation angle between two unit quaternions, in `[0, π]`.
    pub fn angle_to(&self, other: &Quaternion) -> f64 {
        2.0 * self.dot(other).abs().min(1.0).acos()
    }
}

/// Rescales a near-unit quaternion to unit norm.
///
/// Inputs whose norm is off by 0.01 or more are treated as invalid actions
/// rather than silently repaired.
pub fn normalize_quaternion(q: Quaternion) -> Result<Quaternion, ModelError> {
    let norm = q.norm();
    if !norm.is_finite() || norm <= 0.0 || (norm - 1.0).abs() >= QUATERNION_ACCEPT_TOLERANCE {
        return Err(ModelError::NotNormalizable { norm });
    }
    Ok(Quaternion::new(
        q.x / norm,
        q.y / norm,
        q.z / norm,
        q.w / norm,
    ))
}

/// End-effector pose: position in meters and a unit orientation quaternion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArmPose {
    pub position_x: f64,
    pub position_y: f64,
    pub position_z: f64,
    pub orientation: Quaternion,
}

impl ArmPose {
    /// Builds a pose, normalizing the orientation.
    pub fn new(position: [f64; 3], orientation: Quaternion) -> Result<Self, ModelError> {
        for (name, v) in ["position_x", "position_y", "position_z"]
            .iter()
            .zip(position)
        {
            if !v.is_finite() {
                return Err(ModelError::NonFinite((*name).into()));
            }
        }
        Ok(ArmPose {
            position_x: position[0],
            position_y: position[1],
            position_z: position[2],
            orientation: normalize_quaternion(orientation)?,
        })
    }

    pub fn position(&self) -> [f64; 3] {
        [self.position_x, self.position_y, self.position_z]
    }

    pub fn distance_to(&self, other: &ArmPose) -> f64 {
        let [a, b, c] = self.position();
        let [x, y, z] = other.position();
        ((a - x).powi(2) + (b - y).powi(2) + (c - z).powi(2)).sqrt()
    }
}

impl<'de> Deserialize<'de> for ArmPose {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            position_x: f64,
            position_y: f64,
            position_z: f64,
            orientation: Quaternion,
        }
        let raw = Raw::deserialize(deserializer)?;
        ArmPose::new(
            [raw.position_x, raw.position_y, raw.position_z],
            raw.orientation,
        )
        .map_err(D::Error::custom)
    }
}

/// Planar pose of the mobile base. `theta` is always wrapped into `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BasePose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Default for BasePose2D {
    fn default() -> Self {
        BasePose2D::ORIGIN
    }
}

impl BasePose2D {
    pub const ORIGIN: BasePose2D = BasePose2D {
        x: 0.0,
        y: 0.0,
        theta: 0.0,
    };

    pub fn new(x: f64, y: f64, theta: f64) -> Result<Self, ModelError> {
        for (name, v) in [("x", x), ("y", y), ("theta", theta)] {
            if !v.is_finite() {
                return Err(ModelError::NonFinite(name.into()));
            }
        }
        Ok(BasePose2D {
            x,
            y,
            theta: wrap_angle(theta),
        })
    }

    pub fn theta_deg(&self) -> f64 {
        rad_to_deg(self.theta)
    }
}

impl<'de> Deserialize<'de> for BasePose2D {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            x: f64,
            y: f64,
            theta: f64,
        }
        let raw = Raw::deserialize(deserializer)?;
        BasePose2D::new(raw.x, raw.y, raw.theta).map_err(D::Error::custom)
    }
}

/// Forward speed (m/s), yaw rate (rad/s) and how long to hold them (s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VelocityCommand {
    pub v_x: f64,
    pub omega: f64,
    pub duration: f64,
}

impl VelocityCommand {
    pub fn new(v_x: f64, omega: f64, duration: f64) -> Result<Self, ModelError> {
        for (name, v) in [("v_x", v_x), ("omega", omega), ("duration", duration)] {
            if !v.is_finite() {
                return Err(ModelError::NonFinite(name.into()));
            }
        }
        if duration < 0.0 {
            return Err(ModelError::NegativeDuration(duration));
        }
        Ok(VelocityCommand {
            v_x,
            omega,
            duration,
        })
    }
}

impl<'de> Deserialize<'de> for VelocityCommand {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            v_x: f64,
            omega: f64,
            duration: f64,
        }
        let raw = Raw::deserialize(deserializer)?;
        VelocityCommand::new(raw.v_x, raw.omega, raw.duration).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    #[test]
    fn quaternion_examples() {
        assert_eq!(
            normalize_quaternion(Quaternion::IDENTITY).unwrap(),
            Quaternion::IDENTITY
        );
        let q = normalize_quaternion(Quaternion::new(0.0, 0.0, 0.0, 1.005)).unwrap();
        assert_eq!(q, Quaternion::IDENTITY);
        assert!(matches!(
            normalize_quaternion(Quaternion::new(0.0, 0.0, 0.0, 1.2)),
            Err(ModelError::NotNormalizable { .. })
        ));
        assert!(normalize_quaternion(Quaternion::new(0.0, 0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_angle(0.0), 0.0);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert_eq!(wrap_angle(-PI), PI);
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-3.0 * PI) - PI).abs() < 1e-12);
    }

    #[test]
    fn degree_examples() {
        assert!((deg_to_rad(90.0) - 1.5708).abs() <= 5e-5);
        assert_eq!(deg_to_rad(0.0), 0.0);
        assert!((deg_to_rad(180.0) - PI).abs() < 1e-15);
    }

    #[test]
    fn joint_vector_json_shape() {
        let v = JointVector::ZERO.with(Joint::J0, 1.5);
        let value = serde_json::to_value(v).unwrap();
        assert_eq!(value["right_j0"], json!(1.5));
        assert_eq!(value.as_object().unwrap().len(), 7);
        let back: JointVector = serde_json::from_value(value).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn joint_vector_rejects_missing_and_extra() {
        let missing =
            json!({"right_j0":0,"right_j1":0,"right_j2":0,"right_j3":0,"right_j4":0,"right_j5":0});
        assert!(serde_json::from_value::<JointVector>(missing).is_err());
        let extra = json!({"right_j0":0,"right_j1":0,"right_j2":0,"right_j3":0,"right_j4":0,"right_j5":0,"right_j6":0,"right_j7":0});
        assert!(serde_json::from_value::<JointVector>(extra).is_err());
        assert!(matches!(
            JointVector::from_named([("right_j0", 0.0)]),
            Err(ModelError::MissingJoint(_))
        ));
        assert!(JointVector::new([f64::NAN; 7]).is_err());
    }

    #[test]
    fn limits_validate() {
        assert!(JointLimits::symmetric(0.0).is_err());
        let limits = JointLimits::default();
        assert_eq!(limits.get(Joint::J3), (-3.0503, 3.0503));
        let json = serde_json::to_value(limits).unwrap();
        let back: JointLimits = serde_json::from_value(json).unwrap();
        assert_eq!(back, limits);
    }

    #[test]
    fn base_pose_wraps_and_velocity_checks() {
        let p = BasePose2D::new(0.0, 0.0, -PI).unwrap();
        assert_eq!(p.theta, PI);
        assert!(VelocityCommand::new(0.1, 0.0, -1.0).is_err());
        assert!(VelocityCommand::new(f64::INFINITY, 0.0, 1.0).is_err());
    }

    #[test]
    fn arm_pose_json_normalizes() {
        let pose: ArmPose = serde_json::from_value(json!({
            "position_x": 0.46, "position_y": 0.15, "position_z": 0.5,
            "orientation": {"x": 0.0, "y": 0.0, "z": 0.0, "w": 1.004}
        }))
        .unwrap();
        assert_eq!(pose.orientation, Quaternion::IDENTITY);
    }

    proptest! {
        #[test]
        fn wrap_is_idempotent_and_in_range(x in -100.0f64..100.0) {
            let w = wrap_angle(x);
            prop_assert!(w > -PI && w <= PI);
            prop_assert_eq!(wrap_angle(w), w);
            let k = ((x - w) / TAU).round();
            prop_assert!((x - w - k * TAU).abs() < 1e-9);
        }

        #[test]
        fn degree_round_trip(x in -1.0e6f64..1.0e6) {
            let back = rad_to_deg(deg_to_rad(x));
            prop_assert!((back - x).abs() <= 1e-12 * x.abs().max(1.0));
        }

        #[test]
        fn normalized_quaternions_are_unit(
            x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0, w in -1.0f64..1.0,
            scale in 0.9901f64..1.0099,
        ) {
            let q = Quaternion::new(x, y, z, w);
            let n = q.norm();
            prop_assume!(n > 1e-3);
            let near = Quaternion::new(x / n * scale, y / n * scale, z / n * scale, w / n * scale);
            let out = normalize_quaternion(near).unwrap();
            prop_assert!((out.norm() - 1.0).abs() <= QUATERNION_UNIT_TOLERANCE);
        }
    }
}
