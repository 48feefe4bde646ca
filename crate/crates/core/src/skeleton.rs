//! 21-joint hand skeleton: topology, validation, rigid transforms and the
//! per-frame feature grid fed to the recognizer.
//!
//! Joint layout: 0 is the wrist (also the palm centre); each finger owns four
//! consecutive indices from its base to its tip, thumb first.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const JOINT_COUNT: usize = 21;
pub const BONE_COUNT: usize = 20;
pub const FINGER_COUNT: usize = 5;
pub const FEATURE_CHANNELS: usize = 6;

const JOINT_NAMES: [&str; JOINT_COUNT] = [
    "WRIST",
    "THUMB_CMC",
    "THUMB_MCP",
    "THUMB_IP",
    "THUMB_TIP",
    "INDEX_MCP",
    "INDEX_PIP",
    "INDEX_DIP",
    "INDEX_TIP",
    "MIDDLE_MCP",
    "MIDDLE_PIP",
    "MIDDLE_DIP",
    "MIDDLE_TIP",
    "RING_MCP",
    "RING_PIP",
    "RING_DIP",
    "RING_TIP",
    "PINKY_MCP",
    "PINKY_PIP",
    "PINKY_DIP",
    "PINKY_TIP",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JointId(u8);

impl JointId {
    pub const WRIST: JointId = JointId(0);
    pub const THUMB_CMC: JointId = JointId(1);
    pub const THUMB_TIP: JointId = JointId(4);
    pub const INDEX_MCP: JointId = JointId(5);
    pub const INDEX_PIP: JointId = JointId(6);
    pub const INDEX_TIP: JointId = JointId(8);
    pub const MIDDLE_MCP: JointId = JointId(9);
    pub const MIDDLE_TIP: JointId = JointId(12);
    pub const RING_TIP: JointId = JointId(16);
    pub const PINKY_TIP: JointId = JointId(20);

    pub fn new(index: usize) -> Option<Self> {
        (index < JOINT_COUNT).then_some(JointId(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        JOINT_NAMES[self.index()]
    }

    pub fn from_name(name: &str) -> Option<Self> {
        JOINT_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| JointId(i as u8))
    }

    pub fn all() -> impl Iterator<Item = JointId> {
        (0..JOINT_COUNT as u8).map(JointId)
    }

    /// Joint `station` (0 = base, 3 = tip) of finger `finger` (0 = thumb).
    pub fn finger_joint(finger: usize, station: usize) -> JointId {
        assert!(finger < FINGER_COUNT && station < 4);
        JointId((1 + 4 * finger + station) as u8)
    }
}

impl fmt::Display for JointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bone {
    pub parent: JointId,
    pub child: JointId,
    /// Wrist-to-finger-base edge.
    pub palm_bone: bool,
}

impl fmt::Display for Bone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.parent.index(), self.child.index())
    }
}

const fn build_topology() -> [Bone; BONE_COUNT] {
    let mut bones = [Bone {
        parent: JointId(0),
        child: JointId(1),
        palm_bone: true,
    }; BONE_COUNT];
    let mut f = 0;
    while f < FINGER_COUNT {
        bones[f] = Bone {
            parent: JointId(0),
            child: JointId((1 + 4 * f) as u8),
            palm_bone: true,
        };
        f += 1;
    }
    let mut k = FINGER_COUNT;
    let mut child = 1;
    while child < JOINT_COUNT {
        if (child - 1) % 4 != 0 {
            bones[k] = Bone {
                parent: JointId((child - 1) as u8),
                child: JointId(child as u8),
                palm_bone: false,
            };
            k += 1;
        }
        child += 1;
    }
    bones
}

static TOPOLOGY: [Bone; BONE_COUNT] = build_topology();

/// The fixed 20-edge tree: five palm bones, then the 15 finger bones, each group
/// in ascending child index.
pub fn bone_topology() -> &'static [Bone; BONE_COUNT] {
    &TOPOLOGY
}

pub type Vec3 = [f64; 3];

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandSkeleton {
    pub joints: [Vec3; JOINT_COUNT],
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonFinite { joint: JointId },
    ZeroLengthBone { bone: Bone },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonFinite { joint } => {
                write!(f, "joint {} ({}) has a non-finite coordinate", joint.index(), joint)
            }
            Violation::ZeroLengthBone { bone } => write!(f, "bone {bone} has zero length"),
        }
    }
}

impl HandSkeleton {
    pub fn new(joints: [Vec3; JOINT_COUNT]) -> Self {
        Self { joints }
    }

    pub fn from_slice(joints: &[Vec3]) -> Result<Self> {
        let joints: [Vec3; JOINT_COUNT] = joints.try_into().map_err(|_| {
            Error::domain(
                "skeleton",
                format!("expected {JOINT_COUNT} joints, got {}", joints.len()),
            )
        })?;
        Ok(Self { joints })
    }

    pub fn joint(&self, id: JointId) -> Vec3 {
        self.joints[id.index()]
    }

    pub fn wrist(&self) -> Vec3 {
        self.joints[0]
    }

    /// Empty vector means the skeleton is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut violations: Vec<Violation> = JointId::all()
            .filter(|j| self.joint(*j).iter().any(|c| !c.is_finite()))
            .map(|joint| Violation::NonFinite { joint })
            .collect();
        for bone in bone_topology() {
            let len = norm(sub(self.joint(bone.child), self.joint(bone.parent)));
            // NaN lengths are already reported through NonFinite.
            if len == 0.0 {
                violations.push(Violation::ZeroLengthBone { bone: *bone });
            }
        }
        violations
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let violations = self.validate();
        if violations.is_empty() {
            return Ok(());
        }
        let detail = violations
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("; ");
        Err(Error::domain("skeleton", detail))
    }

    pub fn bone_lengths(&self) -> Result<[f64; BONE_COUNT]> {
        self.ensure_valid()?;
        Ok(self.bone_lengths_unchecked())
    }

    fn bone_lengths_unchecked(&self) -> [f64; BONE_COUNT] {
        let mut out = [0.0; BONE_COUNT];
        for (o, bone) in out.iter_mut().zip(bone_topology()) {
            *o = norm(sub(self.joint(bone.child), self.joint(bone.parent)));
        }
        out
    }

    pub fn mean_palm_length(&self) -> f64 {
        let lengths = self.bone_lengths_unchecked();
        lengths[..FINGER_COUNT].iter().sum::<f64>() / FINGER_COUNT as f64
    }

    pub fn apply_transform(&self, xf: &RigidTransform) -> Result<Self> {
        self.ensure_valid()?;
        xf.ensure_valid()?;
        let mut joints = self.joints;
        for p in joints.iter_mut() {
            *p = xf.apply_point(*p);
        }
        Ok(Self { joints })
    }

    /// Interior angle at every interior joint of each finger chain
    /// (wrist, base, ..., tip), thumb first, proximal to distal.
    pub fn flexion_angles(&self) -> Result<[f64; 3 * FINGER_COUNT]> {
        self.ensure_valid()?;
        let mut out = [0.0; 3 * FINGER_COUNT];
        for finger in 0..FINGER_COUNT {
            let chain = [
                JointId::WRIST,
                JointId::finger_joint(finger, 0),
                JointId::finger_joint(finger, 1),
                JointId::finger_joint(finger, 2),
                JointId::finger_joint(finger, 3),
            ];
            for k in 1..4 {
                let at = self.joint(chain[k]);
                let u = sub(self.joint(chain[k - 1]), at);
                let v = sub(self.joint(chain[k + 1]), at);
                let (nu, nv) = (norm(u), norm(v));
                if nu == 0.0 || nv == 0.0 {
                    return Err(Error::domain(
                        "skeleton",
                        format!("degenerate bones at {}", chain[k]),
                    ));
                }
                // atan2 stays well conditioned near a straight finger, where acos does not.
                out[3 * finger + k - 1] = norm(cross(u, v)).atan2(dot(u, v));
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GestureFrame {
    pub t_ms: u64,
    pub skeleton: HandSkeleton,
    pub gaze: Option<[f64; 2]>,
}

impl GestureFrame {
    pub fn ensure_valid(&self) -> Result<()> {
        self.skeleton.ensure_valid()?;
        if let Some(g) = self.gaze {
            if !g.iter().all(|c| c.is_finite()) {
                return Err(Error::domain("gaze", "non-finite gaze coordinate"));
            }
        }
        Ok(())
    }
}

pub type Mat3 = [[f64; 3]; 3];

const IDENTITY3: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn matmul3(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn matvec3(m: &Mat3, p: Vec3) -> Vec3 {
    [dot(m[0], p), dot(m[1], p), dot(m[2], p)]
}

/// Similarity transform `p -> scale * rotation * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
    pub scale: f64,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: IDENTITY3,
            translation: [0.0; 3],
            scale: 1.0,
        }
    }

    pub fn new(rotation: Mat3, translation: Vec3, scale: f64) -> Result<Self> {
        let xf = Self {
            rotation,
            translation,
            scale,
        };
        xf.ensure_valid()?;
        Ok(xf)
    }

    pub fn translation(t: Vec3) -> Self {
        Self {
            translation: t,
            ..Self::identity()
        }
    }

    /// Rodrigues rotation about `axis` (need not be unit length).
    pub fn rotation_about(axis: Vec3, angle: f64) -> Self {
        let n = norm(axis);
        let [x, y, z] = if n > 0.0 {
            [axis[0] / n, axis[1] / n, axis[2] / n]
        } else {
            [0.0, 0.0, 1.0]
        };
        let (s, c) = angle.sin_cos();
        let k: Mat3 = [[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]];
        let k2 = matmul3(&k, &k);
        let mut r = IDENTITY3;
        for i in 0..3 {
            for j in 0..3 {
                r[i][j] += s * k[i][j] + (1.0 - c) * k2[i][j];
            }
        }
        Self {
            rotation: r,
            ..Self::identity()
        }
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let r = &self.rotation;
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::domain("transform", format!("scale {} not positive", self.scale)));
        }
        if r.iter().flatten().chain(&self.translation).any(|v| !v.is_finite()) {
            return Err(Error::domain("transform", "non-finite entry"));
        }
        for i in 0..3 {
            for j in 0..3 {
                let g = dot(r[i], r[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                if (g - want).abs() > 1e-9 {
                    return Err(Error::domain("transform", "rotation is not orthonormal"));
                }
            }
        }
        let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
        if (det - 1.0).abs() > 1e-9 {
            return Err(Error::domain("transform", format!("rotation determinant {det}")));
        }
        Ok(())
    }

    pub fn apply_point(&self, p: Vec3) -> Vec3 {
        let r = matvec3(&self.rotation, p);
        [
            self.scale * r[0] + self.translation[0],
            self.scale * r[1] + self.translation[1],
            self.scale * r[2] + self.translation[2],
        ]
    }

    /// The transform restricted to the x-y plane, applied to a planar point.
    pub fn apply_planar(&self, g: [f64; 2]) -> [f64; 2] {
        let p = self.apply_point([g[0], g[1], 0.0]);
        [p[0], p[1]]
    }

    /// `self` applied after `first`.
    pub fn after(&self, first: &RigidTransform) -> RigidTransform {
        let t = matvec3(&self.rotation, first.translation);
        RigidTransform {
            rotation: matmul3(&self.rotation, &first.rotation),
            translation: [
                self.scale * t[0] + self.translation[0],
                self.scale * t[1] + self.translation[1],
                self.scale * t[2] + self.translation[2],
            ],
            scale: self.scale * first.scale,
        }
    }
}

/// Feature grid of shape (6, 21): channels 0-2 hold wrist-relative positions
/// divided by the mean palm-bone length, channels 3-5 the backward-difference
/// velocity in scene units per second (zero without a previous frame).
pub fn frame_features(prev: Option<&GestureFrame>, cur: &GestureFrame) -> Result<Tensor> {
    cur.skeleton.ensure_valid()?;
    if let Some(p) = prev {
        if p.t_ms >= cur.t_ms {
            return Err(Error::domain(
                "timestamps",
                format!("previous t={} is not before current t={}", p.t_ms, cur.t_ms),
            ));
        }
    }
    let mut data = vec![0.0; FEATURE_CHANNELS * JOINT_COUNT];
    let wrist = cur.skeleton.wrist();
    let palm = cur.skeleton.mean_palm_length();
    for (j, p) in cur.skeleton.joints.iter().enumerate() {
        for axis in 0..3 {
            data[axis * JOINT_COUNT + j] = (p[axis] - wrist[axis]) / palm;
        }
    }
    if let Some(prev) = prev {
        let dt = (cur.t_ms - prev.t_ms) as f64 / 1000.0;
        for (j, (p, q)) in cur.skeleton.joints.iter().zip(&prev.skeleton.joints).enumerate() {
            for axis in 0..3 {
                data[(3 + axis) * JOINT_COUNT + j] = (p[axis] - q[axis]) / dt;
            }
        }
    }
    Tensor::from_vec(vec![FEATURE_CHANNELS, JOINT_COUNT], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::rest_pose;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    /// Each child sits exactly one unit from its parent along a per-bone axis.
    fn unit_skeleton() -> HandSkeleton {
        let mut joints = [[0.0; 3]; JOINT_COUNT];
        for bone in bone_topology() {
            let p = joints[bone.parent.index()];
            let c = bone.child.index();
            let dir = match c % 3 {
                0 => [1.0, 0.0, 0.0],
                1 => [0.0, 1.0, 0.0],
                _ => [0.0, 0.0, 1.0],
            };
            joints[c] = [p[0] + dir[0], p[1] + dir[1], p[2] + dir[2]];
        }
        HandSkeleton::new(joints)
    }

    fn frame(t_ms: u64, skeleton: HandSkeleton) -> GestureFrame {
        GestureFrame {
            t_ms,
            skeleton,
            gaze: None,
        }
    }

    #[test]
    fn topology_shape() {
        let bones = bone_topology();
        assert_eq!(bones.len(), 20);
        assert_eq!(bones[0].parent, JointId::WRIST);
        assert_eq!(bones[0].child, JointId::THUMB_CMC);
        assert!(bones[0].palm_bone);
        assert_eq!(bones.iter().filter(|b| b.palm_bone).count(), 5);
        for b in bones {
            assert_eq!(b.palm_bone, b.parent == JointId::WRIST);
        }
        let expected: Vec<(usize, usize)> = vec![
            (0, 1), (1, 2), (2, 3), (3, 4), (0, 5), (5, 6), (6, 7), (7, 8), (0, 9), (9, 10),
            (10, 11), (11, 12), (0, 13), (13, 14), (14, 15), (15, 16), (0, 17), (17, 18),
            (18, 19), (19, 20),
        ];
        let mut got: Vec<(usize, usize)> =
            bones.iter().map(|b| (b.parent.index(), b.child.index())).collect();
        got.sort_unstable();
        let mut want = expected;
        want.sort_unstable();
        assert_eq!(got, want);
    }

    #[test]
    fn topology_is_tree_rooted_at_wrist() {
        let mut seen = [0usize; JOINT_COUNT];
        for b in bone_topology() {
            seen[b.child.index()] += 1;
            assert!(b.parent.index() < b.child.index());
        }
        assert_eq!(seen[0], 0);
        assert!(seen[1..].iter().all(|&n| n == 1));
    }

    #[test]
    fn joint_names_bijective() {
        for j in JointId::all() {
            assert_eq!(JointId::from_name(j.name()), Some(j));
        }
        assert_eq!(JointId::new(21), None);
        assert_eq!(JointId::INDEX_PIP.name(), "INDEX_PIP");
    }

    #[test]
    fn validate_cases() {
        assert!(rest_pose().is_valid());

        let mut s = rest_pose();
        s.joints[1] = s.joints[0];
        assert_eq!(
            s.validate(),
            vec![Violation::ZeroLengthBone { bone: bone_topology()[0] }]
        );

        let mut s = rest_pose();
        s.joints[7][2] = f64::NAN;
        let v = s.validate();
        assert_eq!(v, vec![Violation::NonFinite { joint: JointId::new(7).unwrap() }]);
        assert!(s.bone_lengths().is_err());
    }

    #[test]
    fn from_slice_rejects_wrong_count() {
        assert!(HandSkeleton::from_slice(&[[0.0; 3]; 20]).is_err());
        assert!(HandSkeleton::from_slice(&[[0.0; 3]; 21]).is_ok());
    }

    #[test]
    fn unit_bone_lengths() {
        let lengths = unit_skeleton().bone_lengths().unwrap();
        assert!(lengths.iter().all(|&l| l == 1.0));
    }

    #[test]
    fn scaled_rest_pose_doubles_lengths() {
        let rest = rest_pose();
        let base = rest.bone_lengths().unwrap();
        let doubled = rest
            .apply_transform(&RigidTransform { scale: 2.0, ..RigidTransform::identity() })
            .unwrap()
            .bone_lengths()
            .unwrap();
        for (a, b) in base.iter().zip(&doubled) {
            assert!((b - 2.0 * a).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_transform_is_noop() {
        let rest = rest_pose();
        assert_eq!(rest.apply_transform(&RigidTransform::identity()).unwrap(), rest);
    }

    #[test]
    fn invalid_transform_rejected() {
        let bad = RigidTransform { scale: -1.0, ..RigidTransform::identity() };
        assert!(rest_pose().apply_transform(&bad).is_err());
        let mut skew = RigidTransform::identity();
        skew.rotation[0][1] = 0.1;
        assert!(skew.ensure_valid().is_err());
        let mut reflect = RigidTransform::identity();
        reflect.rotation[2][2] = -1.0;
        assert!(reflect.ensure_valid().is_err());
    }

    #[test]
    fn straight_chain_is_pi() {
        let mut joints = [[0.0; 3]; JOINT_COUNT];
        for f in 0..FINGER_COUNT {
            let dir = [f as f64 - 2.0, 3.0, 0.5 * f as f64];
            for s in 0..4 {
                let k = (s + 1) as f64;
                joints[JointId::finger_joint(f, s).index()] = [dir[0] * k, dir[1] * k, dir[2] * k];
            }
        }
        let angles = HandSkeleton::new(joints).flexion_angles().unwrap();
        for a in angles {
            assert!((a - PI).abs() < 1e-7, "{a}");
        }
    }

    #[test]
    fn right_angle_at_index_pip() {
        let mut s = rest_pose();
        // Bend the index distal segments by 90 degrees about the PIP joint into -z.
        let pip = s.joint(JointId::INDEX_PIP);
        let dist = |j: usize| norm(sub(s.joints[j], pip));
        let (l7, l8) = (dist(7), dist(8));
        s.joints[7] = [pip[0], pip[1], pip[2] - l7];
        s.joints[8] = [pip[0], pip[1], pip[2] - l8];
        let angles = s.flexion_angles().unwrap();
        // Index is finger 1; PIP is its second entry.
        assert!((angles[4] - FRAC_PI_2).abs() < 1e-12, "{}", angles[4]);
    }

    /// Half-angle oracle on unit vectors: 2 atan2(|u - v|, |u + v|).
    fn oracle_angle(s: &HandSkeleton, a: usize, b: usize, c: usize) -> f64 {
        let unit = |p: usize| {
            let d: Vec<f64> = (0..3).map(|i| s.joints[p][i] - s.joints[b][i]).collect();
            let n = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            d.into_iter().map(|x| x / n).collect::<Vec<f64>>()
        };
        let (u, v) = (unit(a), unit(c));
        let len = |w: Vec<f64>| w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff = len(u.iter().zip(&v).map(|(x, y)| x - y).collect());
        let sum = len(u.iter().zip(&v).map(|(x, y)| x + y).collect());
        2.0 * diff.atan2(sum)
    }

    #[test]
    fn flexion_matches_oracle_on_generated_poses() {
        use crate::synth::{generate_sequence, GenConfig, GestureClass};
        let cfg = GenConfig { noise_std: 0.0, ..GenConfig::default() };
        for class in GestureClass::ALL {
            let seq = generate_sequence(class, &cfg, 5).unwrap();
            let s = &seq.frames.last().unwrap().skeleton;
            let got = s.flexion_angles().unwrap();
            for f in 0..5 {
                let chain = [0, 1 + 4 * f, 2 + 4 * f, 3 + 4 * f, 4 + 4 * f];
                for k in 1..4 {
                    let want = oracle_angle(s, chain[k - 1], chain[k], chain[k + 1]);
                    assert!((got[3 * f + k - 1] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn degenerate_flexion_is_error() {
        let mut s = rest_pose();
        s.joints[6] = s.joints[5];
        assert!(s.flexion_angles().is_err());
    }

    #[test]
    fn first_frame_velocity_zero_and_wrist_origin() {
        let f = frame(0, rest_pose());
        let feats = frame_features(None, &f).unwrap();
        assert_eq!(feats.shape(), &[6, 21]);
        let d = feats.data();
        assert!(d[3 * 21..].iter().all(|&v| v == 0.0));
        for c in 0..3 {
            assert_eq!(d[c * 21], 0.0);
        }
    }

    #[test]
    fn velocity_channels_use_dt_seconds() {
        let a = frame(0, rest_pose());
        let moved = rest_pose()
            .apply_transform(&RigidTransform::translation([0.1, 0.0, 0.0]))
            .unwrap();
        let b = frame(50, moved);
        let feats = frame_features(Some(&a), &b).unwrap();
        let d = feats.data();
        for j in 0..21 {
            assert!((d[3 * 21 + j] - 2.0).abs() < 1e-12);
            assert!(d[4 * 21 + j].abs() < 1e-12);
        }
    }

    #[test]
    fn non_increasing_timestamps_rejected() {
        let a = frame(10, rest_pose());
        let b = frame(10, rest_pose());
        assert!(frame_features(Some(&a), &b).is_err());
    }

    fn arb_transform() -> impl Strategy<Value = RigidTransform> {
        (
            prop::array::uniform3(-1.0f64..1.0),
            -3.0f64..3.0,
            prop::array::uniform3(-5.0f64..5.0),
            0.3f64..3.0,
        )
            .prop_map(|(axis, angle, t, s)| {
                let mut xf = RigidTransform::rotation_about(axis, angle);
                xf.translation = t;
                xf.scale = s;
                xf
            })
    }

    proptest! {
        #[test]
        fn isometry_preserves_lengths_and_angles(xf in arb_transform()) {
            let xf = RigidTransform { scale: 1.0, ..xf };
            let rest = rest_pose();
            let moved = rest.apply_transform(&xf).unwrap();
            for (a, b) in rest.bone_lengths().unwrap().iter().zip(&moved.bone_lengths().unwrap()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            for (a, b) in rest.flexion_angles().unwrap().iter().zip(&moved.flexion_angles().unwrap()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn flexion_invariant_under_similarity(xf in arb_transform(), seed in 0u64..1000) {
            use crate::synth::{generate_sequence, GenConfig, GestureClass};
            let seq = generate_sequence(GestureClass::Pinch, &GenConfig::default(), seed).unwrap();
            let s = seq.frames.last().unwrap().skeleton;
            let moved = s.apply_transform(&xf).unwrap();
            for (a, b) in s.flexion_angles().unwrap().iter().zip(&moved.flexion_angles().unwrap()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn transforms_compose(a in arb_transform(), b in arb_transform()) {
            let rest = rest_pose();
            let two_step = rest.apply_transform(&a).unwrap().apply_transform(&b).unwrap();
            let once = rest.apply_transform(&b.after(&a)).unwrap();
            for (p, q) in two_step.joints.iter().zip(&once.joints) {
                for i in 0..3 {
                    prop_assert!((p[i] - q[i]).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn translation_leaves_position_channels_unchanged(t in prop::array::uniform3(-10.0f64..10.0)) {
            let rest = rest_pose();
            let moved = rest.apply_transform(&RigidTransform::translation(t)).unwrap();
            let a = frame_features(None, &frame(0, rest)).unwrap();
            let b = frame_features(None, &frame(0, moved)).unwrap();
            for (x, y) in a.data()[..63].iter().zip(&b.data()[..63]) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
