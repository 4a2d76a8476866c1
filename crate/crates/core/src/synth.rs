//! Seeded synthetic keypoint streams.
//!
//! Bodies are BODY_25 templates in body units (neck to mid-hip = 1, y up,
//! z towards the camera), animated per scenario and projected
//! orthographically into a 480x360 image with the feet on a floor line.
//! Depth follows the body z offset around a per-video camera distance.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    body25 as b, ClassLabel, Dataset, Keypoint, PoseFrame, Skeleton, TransportMode, VideoSequence,
    DEFAULT_FRAME_PERIOD_MS, IMAGE_HEIGHT, IMAGE_WIDTH, NUM_KEYPOINTS,
};

pub const MIN_DURATION_FRAMES: usize = 10;
/// Peak sideways head tilt of a slump, degrees.
pub const SLUMP_TILT_DEG: f64 = 12.0;
/// Peak head drop of a slump, body units.
pub const SLUMP_DROP: f64 = 0.06;
/// Frames over which a slump reaches its full amplitude.
pub const SLUMP_RAMP_FRAMES: usize = 15;
pub const STAND_UP_FRAMES: usize = 8;
/// Walking gait cycle length in frames.
const GAIT_PERIOD: f64 = 10.0;
/// Meters per body unit, for depth.
const METERS_PER_UNIT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Walk,
    FallDuringWalk,
    SitWheelchair,
    SlumpUnconscious,
    StandUpPause,
    Bystanders,
}

impl ScenarioKind {
    pub fn mode(self) -> TransportMode {
        match self {
            ScenarioKind::Walk | ScenarioKind::FallDuringWalk | ScenarioKind::Bystanders => TransportMode::Walking,
            _ => TransportMode::Wheelchair,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Walk => "walk",
            ScenarioKind::FallDuringWalk => "fall_during_walk",
            ScenarioKind::SitWheelchair => "sit_wheelchair",
            ScenarioKind::SlumpUnconscious => "slump_unconscious",
            ScenarioKind::StandUpPause => "stand_up_pause",
            ScenarioKind::Bystanders => "bystanders",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub duration_frames: usize,
    /// Standard deviation of Gaussian pixel noise.
    pub noise_px: f64,
    /// Per-keypoint probability of being reported missing.
    pub dropout_rate: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.duration_frames < MIN_DURATION_FRAMES {
            return Err(SynthError::InvalidSpec("duration must be at least 10 frames"));
        }
        if !(self.dropout_rate >= 0.0 && self.dropout_rate < 1.0) {
            return Err(SynthError::InvalidSpec("dropout_rate must lie in [0, 1)"));
        }
        if !(self.noise_px >= 0.0 && self.noise_px.is_finite()) {
            return Err(SynthError::InvalidSpec("noise_px must be finite and non-negative"));
        }
        Ok(())
    }
}

type Pose = [[f64; 3]; NUM_KEYPOINTS];

fn standing() -> Pose {
    let mut p = [[0.0; 3]; NUM_KEYPOINTS];
    p[b::NOSE] = [0.0, 1.30, 0.10];
    p[b::NECK] = [0.0, 1.0, 0.0];
    p[b::R_SHOULDER] = [-0.35, 0.95, 0.0];
    p[b::L_SHOULDER] = [0.35, 0.95, 0.0];
    p[b::R_ELBOW] = [-0.42, 0.50, 0.0];
    p[b::L_ELBOW] = [0.42, 0.50, 0.0];
    p[b::R_WRIST] = [-0.45, 0.05, 0.05];
    p[b::L_WRIST] = [0.45, 0.05, 0.05];
    p[b::MID_HIP] = [0.0, 0.0, 0.0];
    p[b::R_HIP] = [-0.2, 0.0, 0.0];
    p[b::L_HIP] = [0.2, 0.0, 0.0];
    p[b::R_KNEE] = [-0.2, -0.85, 0.02];
    p[b::L_KNEE] = [0.2, -0.85, 0.02];
    p[b::R_ANKLE] = [-0.2, -1.7, 0.0];
    p[b::L_ANKLE] = [0.2, -1.7, 0.0];
    p[b::R_EYE] = [-0.07, 1.37, 0.10];
    p[b::L_EYE] = [0.07, 1.37, 0.10];
    p[b::R_EAR] = [-0.15, 1.33, 0.0];
    p[b::L_EAR] = [0.15, 1.33, 0.0];
    p[b::L_BIG_TOE] = [0.25, -1.78, 0.15];
    p[b::L_SMALL_TOE] = [0.32, -1.77, 0.12];
    p[b::L_HEEL] = [0.2, -1.76, -0.05];
    p[b::R_BIG_TOE] = [-0.25, -1.78, 0.15];
    p[b::R_SMALL_TOE] = [-0.32, -1.77, 0.12];
    p[b::R_HEEL] = [-0.2, -1.76, -0.05];
    p
}

fn seated() -> Pose {
    let mut p = standing();
    p[b::R_ELBOW] = [-0.45, 0.45, -0.05];
    p[b::L_ELBOW] = [0.45, 0.45, -0.05];
    p[b::R_WRIST] = [-0.48, 0.05, 0.30];
    p[b::L_WRIST] = [0.48, 0.05, 0.30];
    p[b::R_KNEE] = [-0.2, -0.10, 0.80];
    p[b::L_KNEE] = [0.2, -0.10, 0.80];
    p[b::R_ANKLE] = [-0.2, -0.95, 0.85];
    p[b::L_ANKLE] = [0.2, -0.95, 0.85];
    p[b::L_BIG_TOE] = [0.25, -1.03, 1.0];
    p[b::L_SMALL_TOE] = [0.32, -1.02, 0.97];
    p[b::L_HEEL] = [0.2, -1.01, 0.80];
    p[b::R_BIG_TOE] = [-0.25, -1.03, 1.0];
    p[b::R_SMALL_TOE] = [-0.32, -1.02, 0.97];
    p[b::R_HEEL] = [-0.2, -1.01, 0.80];
    p
}

fn lerp(a: &Pose, c: &Pose, w: f64) -> Pose {
    let mut out = *a;
    for (o, (x, y)) in out.iter_mut().zip(a.iter().zip(c.iter())) {
        for d in 0..3 {
            o[d] = x[d] + w * (y[d] - x[d]);
        }
    }
    out
}

fn gait(pose: &mut Pose, phase: f64) {
    let s = libm::sin(phase);
    for (kp, sign) in [(b::L_KNEE, 1.0), (b::R_KNEE, -1.0)] {
        pose[kp][2] += 0.15 * sign * s;
    }
    for (kps, sign) in [
        ([b::L_ANKLE, b::L_BIG_TOE, b::L_SMALL_TOE, b::L_HEEL], 1.0),
        ([b::R_ANKLE, b::R_BIG_TOE, b::R_SMALL_TOE, b::R_HEEL], -1.0),
    ] {
        for kp in kps {
            pose[kp][2] += 0.3 * sign * s;
            pose[kp][1] += 0.05 * (sign * s).max(0.0);
        }
    }
    for (kp, sign) in [(b::L_WRIST, -1.0), (b::R_WRIST, 1.0), (b::L_ELBOW, -0.5), (b::R_ELBOW, 0.5)] {
        pose[kp][2] += 0.15 * sign * s;
    }
    let bob = 0.02 * libm::cos(2.0 * phase);
    for p in pose.iter_mut() {
        p[1] += bob;
    }
}

/// Rotates the head keypoints about the neck in the image plane and drops them.
fn tilt_head(pose: &mut Pose, angle_rad: f64, drop: f64) {
    let neck = pose[b::NECK];
    let (sin, cos) = (libm::sin(angle_rad), libm::cos(angle_rad));
    for kp in [b::NOSE, b::R_EYE, b::L_EYE, b::R_EAR, b::L_EAR] {
        let (dx, dy) = (pose[kp][0] - neck[0], pose[kp][1] - neck[1]);
        pose[kp][0] = neck[0] + dx * cos + dy * sin;
        pose[kp][1] = neck[1] - dx * sin + dy * cos - drop;
        pose[kp][2] += drop;
    }
    pose[b::NECK][1] -= 0.3 * drop;
}

/// Image placement of one body.
#[derive(Debug, Clone, Copy)]
struct Placement {
    anchor_x: f64,
    floor_y: f64,
    px_per_unit: f64,
    distance_m: f64,
    /// In-plane rotation about the feet, radians; positive tips to the right.
    roll: f64,
}

fn project(pose: &Pose, at: &Placement) -> [[f64; 3]; NUM_KEYPOINTS] {
    let ax = (pose[b::L_ANKLE][0] + pose[b::R_ANKLE][0]) / 2.0;
    let ay = (pose[b::L_ANKLE][1] + pose[b::R_ANKLE][1]) / 2.0;
    let (sin, cos) = (libm::sin(at.roll), libm::cos(at.roll));
    let mut out = [[0.0; 3]; NUM_KEYPOINTS];
    for (o, p) in out.iter_mut().zip(pose.iter()) {
        let (dx, dy) = (p[0] - ax, p[1] - ay);
        let rx = dx * cos + dy * sin;
        let ry = -dx * sin + dy * cos;
        *o = [
            at.anchor_x + at.px_per_unit * rx,
            at.floor_y - at.px_per_unit * ry,
            at.distance_m - METERS_PER_UNIT * p[2],
        ];
    }
    out
}

struct Sensor {
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
    depth_noise: Normal<f64>,
    dropout: f64,
}

impl Sensor {
    fn observe(&mut self, projected: &[[f64; 3]; NUM_KEYPOINTS], person_index: u32) -> Option<Skeleton> {
        let mut kps = [Keypoint::MISSING; NUM_KEYPOINTS];
        for (k, p) in kps.iter_mut().zip(projected.iter()) {
            let dropped = self.rng.random::<f64>() < self.dropout;
            let confidence = self.rng.random_range(0.55..0.95);
            let (nx, ny) = match &self.noise {
                Some(n) => (n.sample(&mut self.rng), n.sample(&mut self.rng)),
                None => (0.0, 0.0),
            };
            let depth = p[2] + self.depth_noise.sample(&mut self.rng);
            let (x, y) = (p[0] + nx, p[1] + ny);
            let inside = x >= 0.0 && y >= 0.0 && x < IMAGE_WIDTH && y < IMAGE_HEIGHT;
            if !dropped && inside {
                *k = Keypoint::new(x, y, confidence, Some(depth.max(0.3)));
            }
        }
        let s = Skeleton::new(kps, person_index);
        (s.visible_count() > 0).then_some(s)
    }
}

/// Generates one labeled video for `spec`. Deterministic per seed.
pub fn generate_sequence(spec: &ScenarioSpec) -> Result<VideoSequence, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.duration_frames;
    let mut sensor = Sensor {
        rng: ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5EED_0F_5E45_0A5D),
        noise: (spec.noise_px > 0.0).then(|| Normal::new(0.0, spec.noise_px).expect("valid std")),
        depth_noise: Normal::new(0.0, 0.02).expect("valid std"),
        dropout: spec.dropout_rate,
    };

    let px_per_unit = rng.random_range(45.0..65.0);
    let distance_m = 137.5 / px_per_unit;
    let base = Placement {
        anchor_x: IMAGE_WIDTH / 2.0 + rng.random_range(-15.0..15.0),
        floor_y: rng.random_range(290.0..310.0),
        px_per_unit,
        distance_m,
        roll: 0.0,
    };
    let lean = rng.random_range(-3.0..3.0f64).to_radians();
    let phase0 = rng.random_range(0.0..2.0 * PI);
    let head_phase = rng.random_range(0.0..2.0 * PI);
    let onset = rng.random_range(n / 4..=n / 2);
    let fall_frames = rng.random_range(5..=10usize);
    let fall_dir = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let drift = rng.random_range(0.0..2.0 * PI);

    let bystanders: Vec<(Placement, f64)> = if spec.kind == ScenarioKind::Bystanders {
        let count = rng.random_range(1..=4usize);
        (0..count)
            .map(|i| {
                let side = if i % 2 == 0 { 1.0 } else { -1.0 };
                let scale = rng.random_range(35.0..55.0);
                let at = Placement {
                    anchor_x: base.anchor_x + side * rng.random_range(170.0..220.0),
                    floor_y: rng.random_range(250.0..300.0),
                    px_per_unit: scale,
                    distance_m: 137.5 / scale,
                    roll: 0.0,
                };
                (at, rng.random_range(0.0..2.0 * PI))
            })
            .collect()
    } else {
        Vec::new()
    };

    let mut frames = Vec::with_capacity(n);
    for t in 0..n {
        let tf = t as f64;
        let mut at = base;
        at.anchor_x += 8.0 * libm::sin(tf / 17.0 + drift);
        let phase = phase0 + 2.0 * PI * tf / GAIT_PERIOD;
        let since_onset = t.checked_sub(onset);

        let (pose, label) = match spec.kind {
            ScenarioKind::Walk | ScenarioKind::Bystanders => {
                let mut p = standing();
                gait(&mut p, phase);
                at.roll = lean + 0.015 * libm::sin(phase);
                (p, ClassLabel::Normal)
            }
            ScenarioKind::FallDuringWalk => {
                let mut p = standing();
                match since_onset {
                    None => {
                        gait(&mut p, phase);
                        at.roll = lean + 0.015 * libm::sin(phase);
                        (p, ClassLabel::Normal)
                    }
                    Some(j) => {
                        let progress = ((j + 1) as f64 / fall_frames as f64).min(1.0);
                        let settle = if progress >= 1.0 { 0.05 * libm::sin(tf / 5.0) } else { 0.0 };
                        at.roll = lean + fall_dir * (progress * PI / 2.0 + settle);
                        (p, ClassLabel::Emergency)
                    }
                }
            }
            ScenarioKind::SitWheelchair | ScenarioKind::SlumpUnconscious => {
                let mut p = seated();
                let idle = 4.0f64.to_radians() * libm::sin(2.0 * PI * tf / 37.0 + head_phase);
                let slumped = spec.kind == ScenarioKind::SlumpUnconscious && since_onset.is_some();
                let ramp = match since_onset {
                    Some(j) if slumped => ((j + 1) as f64 / SLUMP_RAMP_FRAMES as f64).min(1.0),
                    _ => 0.0,
                };
                tilt_head(&mut p, idle + fall_dir * ramp * SLUMP_TILT_DEG.to_radians(), ramp * SLUMP_DROP);
                for kp in [b::R_SHOULDER, b::L_SHOULDER] {
                    p[kp][1] -= ramp * 0.03;
                }
                (p, if slumped { ClassLabel::Emergency } else { ClassLabel::Normal })
            }
            ScenarioKind::StandUpPause => {
                let w = match since_onset {
                    Some(j) => ((j + 1) as f64 / STAND_UP_FRAMES as f64).min(1.0),
                    None => 0.0,
                };
                let p = lerp(&seated(), &standing(), w);
                (p, if since_onset.is_some() { ClassLabel::Pause } else { ClassLabel::Normal })
            }
        };

        let patient_px = project(&pose, &at);
        let mut skeletons = Vec::with_capacity(1 + bystanders.len());
        skeletons.extend(sensor.observe(&patient_px, 0));
        for (i, (place, phase_b)) in bystanders.iter().enumerate() {
            let mut p = standing();
            gait(&mut p, phase_b + 2.0 * PI * tf / GAIT_PERIOD);
            let mut place = *place;
            place.anchor_x += 6.0 * libm::sin(tf / 11.0 + phase_b);
            skeletons.extend(sensor.observe(&project(&p, &place), i as u32 + 1));
        }
        skeletons.shuffle(&mut sensor.rng);

        let marker_px = (spec.kind == ScenarioKind::Bystanders).then(|| {
            let (n, h) = (patient_px[b::NECK], patient_px[b::MID_HIP]);
            ((n[0] + h[0]) / 2.0, (n[1] + h[1]) / 2.0)
        });

        frames.push(PoseFrame {
            timestamp_ms: t as i64 * DEFAULT_FRAME_PERIOD_MS as i64,
            skeletons,
            marker_px,
            label,
        });
    }

    Ok(VideoSequence {
        video_id: format!("{}-{}", spec.kind.as_str(), spec.seed),
        frames,
        mode: spec.kind.mode(),
        frame_period_ms: DEFAULT_FRAME_PERIOD_MS,
        camera: String::from("synthetic"),
        location: String::from("lab"),
    })
}

/// How many videos of one kind to generate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioCount {
    pub kind: ScenarioKind,
    pub count: usize,
}

/// A whole synthetic dataset: shared noise settings, per-kind counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthPlan {
    pub mode: TransportMode,
    pub duration_frames: usize,
    pub noise_px: f64,
    pub dropout_rate: f64,
    pub seed: u64,
    pub scenarios: Vec<ScenarioCount>,
}

impl SynthPlan {
    /// Per-video specs; video seeds are derived from the plan seed.
    pub fn specs(&self) -> Vec<ScenarioSpec> {
        let mut out = Vec::new();
        let mut index = 0u64;
        for group in &self.scenarios {
            for _ in 0..group.count {
                out.push(ScenarioSpec {
                    kind: group.kind,
                    duration_frames: self.duration_frames,
                    noise_px: self.noise_px,
                    dropout_rate: self.dropout_rate,
                    seed: self.seed.wrapping_mul(1_000_003).wrapping_add(index),
                });
                index += 1;
            }
        }
        out
    }
}

pub fn generate_dataset(plan: &SynthPlan) -> Result<Dataset, SynthError> {
    let sequences = plan
        .specs()
        .iter()
        .filter(|s| plan.mode.accepts(s.kind.mode()))
        .map(generate_sequence)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset { sequences, mode: plan.mode })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: ScenarioKind) -> ScenarioSpec {
        ScenarioSpec { kind, duration_frames: 60, noise_px: 0.0, dropout_rate: 0.0, seed: 17 }
    }

    #[test]
    fn clean_walk_is_upright_and_normal() {
        let v = generate_sequence(&spec(ScenarioKind::Walk)).unwrap();
        assert_eq!(v.len(), 60);
        assert!(v.is_time_ordered());
        for f in &v.frames {
            assert_eq!(f.label, ClassLabel::Normal);
            let s = &f.skeletons[0];
            assert!(s.keypoints[b::NECK].y_px < s.keypoints[b::MID_HIP].y_px);
        }
    }

    #[test]
    fn fall_has_a_single_transition() {
        let v = generate_sequence(&spec(ScenarioKind::FallDuringWalk)).unwrap();
        let transitions = v.frames.windows(2).filter(|w| w[0].label != w[1].label).count();
        assert_eq!(transitions, 1);
        assert_eq!(v.frames[0].label, ClassLabel::Normal);
        assert_eq!(v.frames.last().unwrap().label, ClassLabel::Emergency);
    }

    #[test]
    fn same_seed_same_video() {
        let s = ScenarioSpec { noise_px: 2.0, dropout_rate: 0.1, ..spec(ScenarioKind::Bystanders) };
        assert_eq!(generate_sequence(&s).unwrap(), generate_sequence(&s).unwrap());
        let other = ScenarioSpec { seed: 18, ..s };
        assert_ne!(generate_sequence(&s).unwrap(), generate_sequence(&other).unwrap());
    }

    #[test]
    fn invalid_specs() {
        assert!(generate_sequence(&ScenarioSpec { duration_frames: 9, ..spec(ScenarioKind::Walk) }).is_err());
        assert!(generate_sequence(&ScenarioSpec { dropout_rate: 1.0, ..spec(ScenarioKind::Walk) }).is_err());
        assert!(generate_sequence(&ScenarioSpec { noise_px: f64::NAN, ..spec(ScenarioKind::Walk) }).is_err());
    }

    #[test]
    fn wheelchair_scenarios_label_as_expected() {
        let slump = generate_sequence(&spec(ScenarioKind::SlumpUnconscious)).unwrap();
        assert_eq!(slump.mode, TransportMode::Wheelchair);
        assert!(slump.labels().any(|l| l == ClassLabel::Emergency));
        let stand = generate_sequence(&spec(ScenarioKind::StandUpPause)).unwrap();
        assert!(stand.labels().any(|l| l == ClassLabel::Pause));
        assert!(stand.labels().all(|l| l != ClassLabel::Emergency));
        let sit = generate_sequence(&spec(ScenarioKind::SitWheelchair)).unwrap();
        assert!(sit.labels().all(|l| l == ClassLabel::Normal));
    }

    #[test]
    fn bystanders_carry_a_marker_and_distractors() {
        let v = generate_sequence(&spec(ScenarioKind::Bystanders)).unwrap();
        assert!(v.frames.iter().all(|f| f.marker_px.is_some()));
        assert!(v.frames.iter().any(|f| f.skeletons.len() > 1));
        assert!(v.frames.iter().all(|f| f.skeletons.len() <= 5));
    }
}
