use std::sync::Arc;

use super::active::{ActiveSet, EntryEvent, EntryId};
use super::timeline::{Frame, Timeline};
use crate::model::{JointId, JointMap, RobotDescription};

/// Default crossfade when one behavior interrupts another, seconds.
pub const DEFAULT_RAMP: f64 = 0.25;

/// Drives an [`ActiveSet`] at the tick rate and turns its blend into
/// commanded joint positions: clamped to limits and slew-limited to each
/// joint's `v_max`, so consecutive outputs never differ by more than
/// `v_max * dt`.
#[derive(Debug, Clone)]
pub struct ExpressionEngine {
    desc: Arc<RobotDescription>,
    active: ActiveSet,
    output: Frame,
    last_t: f64,
}

impl ExpressionEngine {
    pub fn new(desc: Arc<RobotDescription>, t0: f64) -> Self {
        let rest = desc.rest_pose();
        let face = desc.display.default_expression.clone();
        Self {
            active: ActiveSet::new(rest.clone(), &face),
            output: Frame {
                joints: rest,
                face: Some(face),
                haptic: Some(0.0),
            },
            desc,
            last_t: t0,
        }
    }

    pub fn description(&self) -> &RobotDescription {
        &self.desc
    }

    pub fn active(&self) -> &ActiveSet {
        &self.active
    }

    pub fn output(&self) -> &Frame {
        &self.output
    }

    pub fn now(&self) -> f64 {
        self.last_t
    }

    pub fn play(&mut self, timeline: Arc<Timeline>, ramp: f64) -> EntryId {
        let t = self.last_t;
        self.play_at(timeline, t, ramp)
    }

    /// Starts `timeline` at `t`, or at the last tick if `t` is earlier.
    pub fn play_at(&mut self, timeline: Arc<Timeline>, t: f64, ramp: f64) -> EntryId {
        self.active.preempt(timeline, t.max(self.last_t), ramp.max(0.0))
    }

    pub fn stop(&mut self, id: EntryId) -> bool {
        let t = self.last_t;
        self.active.remove(id, t)
    }

    /// Manual target for a joint no timeline is driving. Clamped.
    pub fn set_target(&mut self, joint: JointId, value: f64) -> f64 {
        let v = self.desc.limits(joint).clamp(value);
        self.active.set_held(joint, v);
        v
    }

    pub fn take_events(&mut self) -> Vec<EntryEvent> {
        self.active.take_events()
    }

    /// Advances to `t` (seconds, non-decreasing) and returns the commanded frame.
    pub fn tick(&mut self, t: f64) -> &Frame {
        let dt = (t - self.last_t).max(0.0);
        self.last_t = self.last_t.max(t);
        let raw = self.active.commit(t);
        let mut joints = JointMap::new();
        for j in JointId::ALL {
            let l = self.desc.limits(j);
            let target = l.clamp(raw.joints[&j]);
            let prev = self.output.joints[&j];
            let step = l.v_max * dt;
            let next = if (target - prev).abs() <= step {
                target
            } else {
                prev + step.copysign(target - prev)
            };
            joints.insert(j, l.clamp(next));
        }
        self.output = Frame {
            joints,
            face: raw.face,
            haptic: raw.haptic.map(|h| h.clamp(0.0, 1.0)),
        };
        &self.output
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expression::timeline::{Easing, JointKeyframe, TimelineSpec, Track};

    #[test]
    fn output_is_slew_limited_even_for_fast_keyframes() {
        let desc = Arc::new(RobotDescription::builtin());
        let fast = Timeline::new(
            TimelineSpec {
                id: "snap".into(),
                priority: 0,
                duration: None,
                tracks: vec![Track::Joint {
                    keyframes: vec![
                        JointKeyframe { t: 0.0, targets: [(JointId::HeadYaw, 1.0)].into(), easing: Easing::Hold },
                        JointKeyframe { t: 0.1, targets: [(JointId::HeadYaw, -1.0)].into(), easing: Easing::Hold },
                    ],
                }],
            },
            &desc,
        )
        .unwrap();
        let mut eng = ExpressionEngine::new(desc.clone(), 0.0);
        eng.play(Arc::new(fast), 0.0);
        let dt = 0.02;
        let v = desc.limits(JointId::HeadYaw).v_max;
        let mut prev = eng.output().joints[&JointId::HeadYaw];
        for i in 1..200 {
            let cur = eng.tick(i as f64 * dt).joints[&JointId::HeadYaw];
            assert!((cur - prev).abs() <= v * dt + 1e-9);
            prev = cur;
        }
        assert!((prev + 1.0).abs() < 1e-9, "eventually reaches the final target");
    }

    #[test]
    fn manual_target_is_clamped() {
        let desc = Arc::new(RobotDescription::builtin());
        let mut eng = ExpressionEngine::new(desc.clone(), 0.0);
        let max = desc.limits(JointId::HeadYaw).max;
        assert_eq!(eng.set_target(JointId::HeadYaw, 5.0), max);
        for i in 1..=100 {
            eng.tick(i as f64 * 0.02);
        }
        assert_eq!(eng.output().joints[&JointId::HeadYaw], max);
    }
}
