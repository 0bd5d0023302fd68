use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};

use m_bench::{joint_bus, joint_payload};
use m_core::clock::Nanos;
use m_core::expression::{Channel, ExpressionEngine, Library};
use m_core::logkit::LogRecord;
use m_core::model::{JointId, RobotDescription};
use m_core::perception::{presence_update, PresenceConfig, PresenceState};
use m_core::sim::{servo_step, ServoSim};

fn bus_publish(c: &mut Criterion) {
    let desc = RobotDescription::builtin();
    let (_bus, publ, sub) = joint_bus();
    let payload = joint_payload(&desc, 0.3);
    c.bench_function("bus_publish_joint_states", |b| {
        b.iter(|| {
            publ.publish(black_box(payload.clone())).unwrap();
            // Keep the queue from filling so every publish takes the same path.
            sub.drain();
        })
    });
}

fn expression(c: &mut Criterion) {
    let desc = Arc::new(RobotDescription::builtin());
    let lib = Library::builtin(&desc);
    let wave = lib.get("wave").expect("builtin gesture");
    c.bench_function("timeline_sample", |b| {
        let mut t = 0.0;
        b.iter(|| {
            t = (t + 0.013) % 2.0;
            black_box(wave.sample_numeric(Channel::Joint(JointId::RightArm), black_box(t)))
        })
    });
    c.bench_function("engine_tick_50hz", |b| {
        let mut eng = ExpressionEngine::new(desc.clone(), 0.0);
        let mut t = 0.0;
        let mut n = 0u64;
        b.iter(|| {
            if n % 100 == 0 {
                eng.play_at(wave.clone(), t, 0.2);
            }
            n += 1;
            t += 0.02;
            black_box(eng.tick(t).joints.len())
        })
    });
}

fn servo(c: &mut Criterion) {
    c.bench_function("servo_step", |b| {
        let mut s = ServoSim { current: 0.0, target: 1.0, v_max: 1.57 };
        b.iter(|| {
            s = servo_step(s, black_box(0.02)).0;
            if s.at_target() {
                s.target = -s.target;
            }
        })
    });
}

fn presence(c: &mut Criterion) {
    let cfg = PresenceConfig::default();
    c.bench_function("presence_update", |b| {
        let mut s = PresenceState::default();
        let mut k = 0u64;
        b.iter(|| {
            k += 1;
            let e = if k % 64 < 32 { 0.9 } else { 0.1 };
            s = presence_update(&cfg, s, black_box(e), Nanos::from_millis(100 * k)).0;
        })
    });
}

fn record_line(c: &mut Criterion) {
    let desc = RobotDescription::builtin();
    let payload = joint_payload(&desc, 0.7);
    c.bench_function("log_record_line", |b| {
        let mut seq = 0;
        b.iter(|| {
            seq += 1;
            let r = LogRecord::new("bench", "/m/joint_states", seq, Nanos(seq * 20_000_000), 0, &payload);
            black_box(r.to_line())
        })
    });
}

criterion_group!(hot_paths, bus_publish, expression, servo, presence, record_line);
criterion_main!(hot_paths);
