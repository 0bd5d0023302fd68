use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ExpressionError;
use crate::model::{JointId, JointMap, RobotDescription};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Easing {
    #[default]
    Linear,
    /// `3u^2 - 2u^3`
    Smoothstep,
    /// Keep the previous keyframe's value until this keyframe's time.
    Hold,
}

impl Easing {
    /// Maps normalized segment progress `u` in `[0, 1]` to blend weight.
    pub fn apply(self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self {
            Easing::Linear => u,
            Easing::Smoothstep => u * u * (3.0 - 2.0 * u),
            Easing::Hold => {
                if u >= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointKeyframe {
    pub t: f64,
    pub targets: JointMap,
    #[serde(default)]
    pub easing: Easing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceKeyframe {
    pub t: f64,
    pub expression: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HapticKeyframe {
    pub t: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub easing: Easing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackKind {
    Joint,
    Face,
    Haptic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Track {
    Joint { keyframes: Vec<JointKeyframe> },
    Face { keyframes: Vec<FaceKeyframe> },
    Haptic { keyframes: Vec<HapticKeyframe> },
}

impl Track {
    pub fn kind(&self) -> TrackKind {
        match self {
            Track::Joint { .. } => TrackKind::Joint,
            Track::Face { .. } => TrackKind::Face,
            Track::Haptic { .. } => TrackKind::Haptic,
        }
    }

    fn times(&self) -> Vec<f64> {
        match self {
            Track::Joint { keyframes } => keyframes.iter().map(|k| k.t).collect(),
            Track::Face { keyframes } => keyframes.iter().map(|k| k.t).collect(),
            Track::Haptic { keyframes } => keyframes.iter().map(|k| k.t).collect(),
        }
    }
}

/// Serialized form of a timeline, as found in library and story files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimelineSpec {
    pub id: String,
    #[serde(default)]
    pub priority: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    pub tracks: Vec<Track>,
}

/// An output channel a timeline can drive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Channel {
    Joint(JointId),
    Haptic,
    Face,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Point {
    t: f64,
    v: f64,
    easing: Easing,
}

fn interpolate(points: &[Point], t: f64) -> f64 {
    let first = points[0];
    if t <= first.t {
        return first.v;
    }
    let last = points[points.len() - 1];
    if t >= last.t {
        return last.v;
    }
    // First keyframe strictly after t; the segment is [idx-1, idx].
    let idx = points.partition_point(|p| p.t <= t);
    let a = points[idx - 1];
    let b = points[idx];
    let u = (t - a.t) / (b.t - a.t);
    a.v + (b.v - a.v) * b.easing.apply(u)
}

/// What a timeline (or a blend of timelines) outputs at one instant.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub joints: JointMap,
    pub face: Option<String>,
    pub haptic: Option<f64>,
}

/// A validated, immutable expressive behavior.
#[derive(Clone, Debug, PartialEq)]
pub struct Timeline {
    spec: TimelineSpec,
    duration: f64,
    joints: BTreeMap<JointId, Vec<Point>>,
    haptic: Vec<Point>,
    face: Vec<(f64, String)>,
}

impl Serialize for Timeline {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.spec.serialize(s)
    }
}

impl Timeline {
    /// Validates `spec` against the robot's limits and expression set.
    /// Out-of-range targets are rejected, never clamped.
    pub fn new(spec: TimelineSpec, desc: &RobotDescription) -> Result<Self, ExpressionError> {
        Self::build(spec, Some(desc))
    }

    pub fn from_json(text: &str, desc: &RobotDescription) -> Result<Self, ExpressionError> {
        let spec: TimelineSpec =
            serde_json::from_str(text).map_err(|e| ExpressionError::Parse(e.to_string()))?;
        Self::new(spec, desc)
    }

    /// Joint and face tracks require a description; haptic-only timelines do not.
    pub(crate) fn build(
        spec: TimelineSpec,
        desc: Option<&RobotDescription>,
    ) -> Result<Self, ExpressionError> {
        let mut seen = Vec::new();
        let mut max_t: f64 = 0.0;
        for track in &spec.tracks {
            let kind = track.kind();
            if seen.contains(&kind) {
                return Err(ExpressionError::DuplicateTrack(kind));
            }
            seen.push(kind);
            let times = track.times();
            for (i, t) in times.iter().enumerate() {
                if !t.is_finite() || *t < 0.0 {
                    return Err(ExpressionError::InvalidTime { track: kind, index: i, t: *t });
                }
                if i > 0 && *t <= times[i - 1] {
                    return Err(ExpressionError::NonMonotonic { track: kind, index: i });
                }
                max_t = max_t.max(*t);
            }
        }
        let duration = match spec.duration {
            Some(d) if !d.is_finite() || d < max_t => {
                return Err(ExpressionError::DurationTooShort { duration: d, last_keyframe: max_t })
            }
            Some(d) => d,
            None => max_t,
        };

        let mut joints: BTreeMap<JointId, Vec<Point>> = BTreeMap::new();
        let mut haptic = Vec::new();
        let mut face = Vec::new();
        for track in &spec.tracks {
            match track {
                Track::Joint { keyframes } => {
                    let desc = desc.ok_or(ExpressionError::NeedsDescription)?;
                    for kf in keyframes {
                        for (j, v) in &kf.targets {
                            let l = desc.limits(*j);
                            if !v.is_finite() || !l.contains(*v) {
                                return Err(ExpressionError::TargetOutOfLimits {
                                    joint: *j,
                                    value: *v,
                                    min: l.min,
                                    max: l.max,
                                });
                            }
                            joints.entry(*j).or_default().push(Point {
                                t: kf.t,
                                v: *v,
                                easing: kf.easing,
                            });
                        }
                    }
                }
                Track::Face { keyframes } => {
                    let desc = desc.ok_or(ExpressionError::NeedsDescription)?;
                    for kf in keyframes {
                        if !desc.has_expression(&kf.expression) {
                            return Err(ExpressionError::UnknownExpression(kf.expression.clone()));
                        }
                        face.push((kf.t, kf.expression.clone()));
                    }
                }
                Track::Haptic { keyframes } => {
                    for kf in keyframes {
                        if !(0.0..=1.0).contains(&kf.amplitude) {
                            return Err(ExpressionError::AmplitudeOutOfRange(kf.amplitude));
                        }
                        haptic.push(Point {
                            t: kf.t,
                            v: kf.amplitude,
                            easing: kf.easing,
                        });
                    }
                }
            }
        }
        Ok(Self {
            spec,
            duration,
            joints,
            haptic,
            face,
        })
    }

    pub fn id(&self) -> &str {
        &self.spec.id
    }

    pub fn priority(&self) -> i32 {
        self.spec.priority
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn spec(&self) -> &TimelineSpec {
        &self.spec
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty() && self.haptic.is_empty() && self.face.is_empty()
    }

    pub fn touches(&self, ch: Channel) -> bool {
        match ch {
            Channel::Joint(j) => self.joints.contains_key(&j),
            Channel::Haptic => !self.haptic.is_empty(),
            Channel::Face => !self.face.is_empty(),
        }
    }

    pub fn channels(&self) -> Vec<Channel> {
        let mut out: Vec<Channel> = self.joints.keys().map(|j| Channel::Joint(*j)).collect();
        if !self.haptic.is_empty() {
            out.push(Channel::Haptic);
        }
        if !self.face.is_empty() {
            out.push(Channel::Face);
        }
        out
    }

    /// Numeric channel value at local time `t`; `None` for untouched channels
    /// and for the face channel.
    pub fn sample_numeric(&self, ch: Channel, t: f64) -> Option<f64> {
        match ch {
            Channel::Joint(j) => self.joints.get(&j).map(|p| interpolate(p, t)),
            Channel::Haptic => (!self.haptic.is_empty()).then(|| interpolate(&self.haptic, t)),
            Channel::Face => None,
        }
    }

    /// Expression in effect at `t`: switches discretely at keyframe times.
    pub fn sample_face(&self, t: f64) -> Option<&str> {
        let first = self.face.first()?;
        if t <= first.0 {
            return Some(&first.1);
        }
        let idx = self.face.partition_point(|(kt, _)| *kt <= t);
        Some(&self.face[idx - 1].1)
    }

    /// Samples every channel the timeline drives at local time `t` (seconds).
    pub fn sample(&self, t: f64) -> Result<Frame, ExpressionError> {
        if self.is_empty() {
            return Err(ExpressionError::EmptyTimeline(self.spec.id.clone()));
        }
        let t = t.max(0.0);
        Ok(Frame {
            joints: self
                .joints
                .iter()
                .map(|(j, p)| (*j, interpolate(p, t)))
                .collect(),
            face: self.sample_face(t).map(str::to_owned),
            haptic: self.sample_numeric(Channel::Haptic, t),
        })
    }
}

/// Haptic timeline that ramps 0 -> 1 over `inhale` and 1 -> 0 over `exhale`,
/// `cycles` times.
pub fn breathing_pattern(inhale: f64, exhale: f64, cycles: u32) -> Result<Timeline, ExpressionError> {
    if !(inhale.is_finite() && inhale > 0.0 && exhale.is_finite() && exhale > 0.0) || cycles == 0 {
        return Err(ExpressionError::InvalidDuration(format!(
            "inhale {inhale}, exhale {exhale}, cycles {cycles}"
        )));
    }
    let period = inhale + exhale;
    let mut keyframes = vec![HapticKeyframe {
        t: 0.0,
        amplitude: 0.0,
        easing: Easing::Linear,
    }];
    for c in 0..cycles {
        let base = c as f64 * period;
        keyframes.push(HapticKeyframe {
            t: base + inhale,
            amplitude: 1.0,
            easing: Easing::Linear,
        });
        keyframes.push(HapticKeyframe {
            t: base + period,
            amplitude: 0.0,
            easing: Easing::Linear,
        });
    }
    Timeline::build(
        TimelineSpec {
            id: format!("breathing_{inhale}_{exhale}_x{cycles}"),
            priority: 0,
            duration: Some(cycles as f64 * period),
            tracks: vec![Track::Haptic { keyframes }],
        },
        None,
    )
}
