//! Deterministic synthetic gesture corpus.
//!
//! Poses come from a small forward-kinematic hand model: each finger is a
//! chain fanned out in the x-y plane from the wrist, and flexion bends the
//! phalanges toward -z (the palm side). Every random draw comes from a
//! SplitMix64 stream seeded per sequence, so corpora are reproducible across
//! implementations.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};
use crate::skeleton::{GestureFrame, HandSkeleton, JointId, RigidTransform, FINGER_COUNT, JOINT_COUNT};

pub const GENERATOR_VERSION: &str = "gesturekit-synth/1";
pub const CLASS_COUNT: usize = 8;
pub const GAZE_NOISE_STD: f64 = 0.05;

/// Abduction of each finger from the middle-finger axis (+y), degrees.
const ABDUCTION_DEG: [f64; FINGER_COUNT] = [-45.0, -12.0, 0.0, 12.0, 26.0];
/// Wrist to finger-base lengths: thumb, index, middle, ring, pinky.
pub const PALM_LENGTHS: [f64; FINGER_COUNT] = [0.5, 0.95, 1.0, 0.95, 0.85];
const THUMB_PHALANGES: [f64; 3] = [0.45, 0.35, 0.30];
/// Non-thumb phalanges for a finger of palm length 1.0; scaled by palm length.
const FINGER_PHALANGES: [f64; 3] = [0.45, 0.28, 0.22];
/// Bend (radians) at each chain joint when a finger is fully curled.
const THUMB_MAX_BEND: [f64; 3] = [0.6, 0.9, 0.9];
const FINGER_MAX_BEND: [f64; 3] = [1.6, 1.8, 1.4];
/// In-plane swing of the thumb toward the index finger at full adduction.
const THUMB_MAX_ADDUCTION: f64 = 0.6;

const SWIPE_DISTANCE: f64 = 2.0;
const WAVE_AMPLITUDE: f64 = 0.8;
const WAVE_PERIODS: f64 = 2.0;
/// Static gestures reach their target pose over this fraction of the sequence.
const INTERP_FRACTION: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GestureClass {
    OpenPalm,
    Fist,
    Pinch,
    Point,
    SwipeLeft,
    SwipeRight,
    Wave,
    ThumbsUp,
}

impl GestureClass {
    pub const ALL: [GestureClass; CLASS_COUNT] = [
        GestureClass::OpenPalm,
        GestureClass::Fist,
        GestureClass::Pinch,
        GestureClass::Point,
        GestureClass::SwipeLeft,
        GestureClass::SwipeRight,
        GestureClass::Wave,
        GestureClass::ThumbsUp,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            GestureClass::OpenPalm => "open_palm",
            GestureClass::Fist => "fist",
            GestureClass::Pinch => "pinch",
            GestureClass::Point => "point",
            GestureClass::SwipeLeft => "swipe_left",
            GestureClass::SwipeRight => "swipe_right",
            GestureClass::Wave => "wave",
            GestureClass::ThumbsUp => "thumbs_up",
        }
    }

    pub fn names() -> Vec<&'static str> {
        Self::ALL.iter().map(|c| c.name()).collect()
    }

    pub fn is_dynamic(self) -> bool {
        matches!(self, GestureClass::SwipeLeft | GestureClass::SwipeRight | GestureClass::Wave)
    }

    /// Joint the synthetic gaze tracks: the most-flexed or pointing fingertip for
    /// static classes, the wrist for trajectories.
    pub fn focal_joint(self) -> JointId {
        match self {
            GestureClass::OpenPalm | GestureClass::Fist => JointId::MIDDLE_TIP,
            GestureClass::Pinch | GestureClass::Point => JointId::INDEX_TIP,
            GestureClass::ThumbsUp => JointId::THUMB_TIP,
            GestureClass::SwipeLeft | GestureClass::SwipeRight | GestureClass::Wave => JointId::WRIST,
        }
    }

    fn target_pose(self) -> HandPose {
        let curls = |c: [f64; 5], add: f64| HandPose {
            curls: c,
            thumb_adduction: add,
        };
        match self {
            GestureClass::OpenPalm => HandPose::OPEN,
            GestureClass::Fist => curls([1.0; 5], 0.5),
            GestureClass::Pinch => curls([0.6, 0.5, 0.0, 0.0, 0.0], 1.2),
            GestureClass::Point => curls([1.0, 0.0, 1.0, 1.0, 1.0], 0.5),
            GestureClass::ThumbsUp => curls([0.0, 1.0, 1.0, 1.0, 1.0], 0.0),
            GestureClass::SwipeLeft | GestureClass::SwipeRight | GestureClass::Wave => HandPose::HALF_OPEN,
        }
    }
}

impl fmt::Display for GestureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GestureClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::domain("gesture class", format!("unknown name {s:?}")))
    }
}

/// Per-finger curl in [0, 1] (thumb first) and thumb adduction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandPose {
    pub curls: [f64; FINGER_COUNT],
    pub thumb_adduction: f64,
}

impl HandPose {
    pub const OPEN: HandPose = HandPose {
        curls: [0.0; FINGER_COUNT],
        thumb_adduction: 0.0,
    };
    pub const HALF_OPEN: HandPose = HandPose {
        curls: [0.5; FINGER_COUNT],
        thumb_adduction: 0.5,
    };

    pub fn lerp(&self, other: &HandPose, alpha: f64) -> HandPose {
        let mix = |a: f64, b: f64| a + (b - a) * alpha;
        HandPose {
            curls: std::array::from_fn(|f| mix(self.curls[f], other.curls[f])),
            thumb_adduction: mix(self.thumb_adduction, other.thumb_adduction),
        }
    }

    /// Forward kinematics with the wrist at `wrist`.
    pub fn skeleton(&self, wrist: [f64; 3]) -> HandSkeleton {
        let mut joints = [wrist; JOINT_COUNT];
        for f in 0..FINGER_COUNT {
            let theta = ABDUCTION_DEG[f].to_radians();
            let dir = [theta.sin(), theta.cos()];
            let base = [
                wrist[0] + PALM_LENGTHS[f] * dir[0],
                wrist[1] + PALM_LENGTHS[f] * dir[1],
                wrist[2],
            ];
            joints[JointId::finger_joint(f, 0).index()] = base;
            let (lengths, max_bend, swing) = if f == 0 {
                (THUMB_PHALANGES, THUMB_MAX_BEND, self.thumb_adduction * THUMB_MAX_ADDUCTION)
            } else {
                (FINGER_PHALANGES.map(|l| l * PALM_LENGTHS[f]), FINGER_MAX_BEND, 0.0)
            };
            let plane = [(theta + swing).sin(), (theta + swing).cos()];
            let mut phi = 0.0;
            let mut p = base;
            for k in 0..3 {
                phi += self.curls[f] * max_bend[k];
                let (s, c) = phi.sin_cos();
                p = [
                    p[0] + lengths[k] * c * plane[0],
                    p[1] + lengths[k] * c * plane[1],
                    p[2] - lengths[k] * s,
                ];
                joints[JointId::finger_joint(f, k + 1).index()] = p;
            }
        }
        HandSkeleton::new(joints)
    }
}

/// Canonical open hand, wrist at the origin, fingers straight in the x-y plane.
pub fn rest_pose() -> HandSkeleton {
    HandPose::OPEN.skeleton([0.0; 3])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub frames_per_sequence: usize,
    pub frame_interval_ms: u64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            frames_per_sequence: 30,
            frame_interval_ms: 33,
            noise_std: 0.02,
            seed: 42,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames_per_sequence < 2 {
            return Err(Error::domain("generator config", "frames_per_sequence must be >= 2"));
        }
        if self.frame_interval_ms == 0 {
            return Err(Error::domain("generator config", "frame_interval_ms must be positive"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::domain("generator config", "noise_std must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub generator_version: String,
    pub seed: u64,
    pub augmented: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GestureSequence {
    pub label: GestureClass,
    pub frames: Vec<GestureFrame>,
    pub provenance: Provenance,
}

impl GestureSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Every frame valid and timestamps strictly increasing.
    pub fn ensure_valid(&self) -> Result<()> {
        for (k, f) in self.frames.iter().enumerate() {
            f.ensure_valid()?;
            if k > 0 && self.frames[k - 1].t_ms >= f.t_ms {
                return Err(Error::domain("sequence", format!("timestamps not increasing at frame {k}")));
            }
        }
        Ok(())
    }

    pub fn without_gaze(&self) -> GestureSequence {
        let mut s = self.clone();
        for f in s.frames.iter_mut() {
            f.gaze = None;
        }
        s
    }
}

fn add_noise(skeleton: &mut HandSkeleton, std: f64, rng: &mut SplitMix64) {
    for p in skeleton.joints.iter_mut() {
        for c in p.iter_mut() {
            *c += rng.gaussian(std);
        }
    }
}

/// One labelled sequence. Draw order: for each frame, for each joint, x/y/z
/// Gaussian noise.
pub fn generate_sequence(class: GestureClass, config: &GenConfig, seed: u64) -> Result<GestureSequence> {
    config.validate()?;
    let n = config.frames_per_sequence;
    let last = (n - 1) as f64;
    let interp_frames = (INTERP_FRACTION * last).ceil().max(1.0);
    let target = class.target_pose();
    let mut rng = SplitMix64::new(seed);
    let mut frames = Vec::with_capacity(n);
    for k in 0..n {
        let phase = k as f64 / last;
        let (pose, wrist_x) = match class {
            GestureClass::SwipeLeft => (target, -SWIPE_DISTANCE * phase),
            GestureClass::SwipeRight => (target, SWIPE_DISTANCE * phase),
            GestureClass::Wave => (target, WAVE_AMPLITUDE * (TAU * WAVE_PERIODS * phase).sin()),
            _ => {
                let alpha = (k as f64 / interp_frames).min(1.0);
                (HandPose::OPEN.lerp(&target, alpha), 0.0)
            }
        };
        let mut skeleton = pose.skeleton([wrist_x, 0.0, 0.0]);
        add_noise(&mut skeleton, config.noise_std, &mut rng);
        frames.push(GestureFrame {
            t_ms: k as u64 * config.frame_interval_ms,
            skeleton,
            gaze: None,
        });
    }
    let seq = GestureSequence {
        label: class,
        frames,
        provenance: Provenance {
            generator_version: GENERATOR_VERSION.to_string(),
            seed,
            augmented: false,
        },
    };
    seq.ensure_valid()?;
    Ok(seq)
}

/// Gaze per frame: x-y projection of the class focal joint plus N(0, std^2)
/// noise, x then y per frame.
pub fn synth_gaze_with_std(seq: &GestureSequence, seed: u64, std: f64) -> GestureSequence {
    let mut out = seq.clone();
    let focal = seq.label.focal_joint();
    let mut rng = SplitMix64::new(seed);
    for f in out.frames.iter_mut() {
        let p = f.skeleton.joint(focal);
        let gx = p[0] + rng.gaussian(std);
        let gy = p[1] + rng.gaussian(std);
        f.gaze = Some([gx, gy]);
    }
    out
}

pub fn synth_gaze(seq: &GestureSequence, seed: u64) -> GestureSequence {
    synth_gaze_with_std(seq, seed, GAZE_NOISE_STD)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSpec {
    pub rotation_max_rad: f64,
    pub translation_max: f64,
    pub scale_range: (f64, f64),
    pub jitter_std: f64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            rotation_max_rad: 0.35,
            translation_max: 0.5,
            scale_range: (0.85, 1.15),
            jitter_std: 0.01,
        }
    }
}

impl AugmentSpec {
    pub fn identity() -> Self {
        Self {
            rotation_max_rad: 0.0,
            translation_max: 0.0,
            scale_range: (1.0, 1.0),
            jitter_std: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        let (lo, hi) = self.scale_range;
        if !nonneg(self.rotation_max_rad) || !nonneg(self.translation_max) || !nonneg(self.jitter_std) {
            return Err(Error::domain("augment spec", "magnitudes must be finite and >= 0"));
        }
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::domain("augment spec", format!("scale range ({lo}, {hi}) needs 0 < lo <= hi")));
        }
        Ok(())
    }

    /// Draw order: axis z, axis azimuth, angle, translation x/y/z, scale.
    pub fn draw_transform(&self, rng: &mut SplitMix64) -> RigidTransform {
        let z = rng.uniform(-1.0, 1.0);
        let azimuth = rng.uniform(0.0, TAU);
        let r = (1.0 - z * z).max(0.0).sqrt();
        let axis = [r * azimuth.cos(), r * azimuth.sin(), z];
        let angle = rng.uniform(-self.rotation_max_rad, self.rotation_max_rad);
        let mut xf = RigidTransform::rotation_about(axis, angle);
        let t = self.translation_max;
        xf.translation = [rng.uniform(-t, t), rng.uniform(-t, t), rng.uniform(-t, t)];
        xf.scale = rng.uniform(self.scale_range.0, self.scale_range.1);
        xf
    }
}

/// Applies a transform to every frame (and its gaze point), without jitter.
pub fn transform_sequence(seq: &GestureSequence, xf: &RigidTransform) -> Result<GestureSequence> {
    let mut out = seq.clone();
    for f in out.frames.iter_mut() {
        f.skeleton = f.skeleton.apply_transform(xf)?;
        f.gaze = f.gaze.map(|g| xf.apply_planar(g));
    }
    Ok(out)
}

/// One similarity transform per sequence (so trajectories keep their shape),
/// then per-joint jitter drawn frame by frame, joint by joint, x/y/z.
pub fn augment(seq: &GestureSequence, spec: &AugmentSpec, seed: u64) -> Result<GestureSequence> {
    spec.validate()?;
    seq.ensure_valid()?;
    let mut rng = SplitMix64::new(seed);
    let xf = spec.draw_transform(&mut rng);
    let mut out = transform_sequence(seq, &xf)?;
    for f in out.frames.iter_mut() {
        add_noise(&mut f.skeleton, spec.jitter_std, &mut rng);
    }
    out.provenance.augmented = true;
    out.ensure_valid()?;
    Ok(out)
}

/// Seed of sequence `index` of class `class` under master seed `master`.
pub fn sequence_seed(master: u64, class: GestureClass, index: usize) -> u64 {
    derive_seed(master, &[class.id() as u64, index as u64])
}

const GAZE_STREAM_TAG: u64 = 0x6761_7a65;

/// `per_class` sequences of every class, class-major order, gaze filled.
pub fn generate_dataset(per_class: usize, config: &GenConfig) -> Result<Vec<GestureSequence>> {
    if per_class == 0 {
        return Err(Error::domain("per_class", "must be >= 1"));
    }
    config.validate()?;
    let mut out = Vec::with_capacity(per_class * CLASS_COUNT);
    for class in GestureClass::ALL {
        for i in 0..per_class {
            let seed = sequence_seed(config.seed, class, i);
            let seq = generate_sequence(class, config, seed)?;
            out.push(synth_gaze(&seq, derive_seed(seed, &[GAZE_STREAM_TAG])));
        }
    }
    Ok(out)
}
