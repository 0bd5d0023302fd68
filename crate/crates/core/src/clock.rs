//! Monotonic and wall-clock time sources.
//!
//! Everything on the bus is stamped from a [`Clock`]. The real clock reads the
//! host; the virtual clock only moves when the harness steps it, which makes
//! whole-stack runs deterministic.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

/// Nanoseconds on a monotonic timeline (since runtime start, or since the
/// virtual clock's origin).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Nanos(pub u64);

impl Nanos {
    pub const ZERO: Nanos = Nanos(0);
    pub const PER_SEC: u64 = 1_000_000_000;

    /// Rounds to the nearest nanosecond; negative inputs saturate to zero.
    pub fn from_secs_f64(secs: f64) -> Nanos {
        if secs <= 0.0 {
            Nanos(0)
        } else {
            Nanos((secs * Self::PER_SEC as f64).round() as u64)
        }
    }

    pub fn from_millis(ms: u64) -> Nanos {
        Nanos(ms * 1_000_000)
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / Self::PER_SEC as f64
    }

    pub fn saturating_sub(self, other: Nanos) -> Nanos {
        Nanos(self.0.saturating_sub(other.0))
    }

    pub fn as_duration(self) -> Duration {
        Duration::from_nanos(self.0)
    }

    /// Period of a rate given in hertz.
    pub fn period_of_hz(hz: f64) -> Nanos {
        Nanos((Self::PER_SEC as f64 / hz).round() as u64)
    }
}

impl Add for Nanos {
    type Output = Nanos;
    fn add(self, rhs: Nanos) -> Nanos {
        Nanos(self.0 + rhs.0)
    }
}

impl AddAssign for Nanos {
    fn add_assign(&mut self, rhs: Nanos) {
        self.0 += rhs.0;
    }
}

impl Sub for Nanos {
    type Output = Nanos;
    fn sub(self, rhs: Nanos) -> Nanos {
        Nanos(self.0 - rhs.0)
    }
}

impl fmt::Display for Nanos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}s", self.as_secs_f64())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    Real,
    Virtual,
}

/// A monotonic time source paired with a wall clock.
pub trait Clock: Send + Sync + fmt::Debug {
    fn now(&self) -> Nanos;
    /// UTC nanoseconds since the Unix epoch.
    fn wall_ns(&self) -> u64;
    fn mode(&self) -> ClockMode;
    /// Block (real) or jump (virtual) until `t`. Never moves time backwards.
    fn wait_until(&self, t: Nanos);
}

pub type SharedClock = Arc<dyn Clock>;

#[derive(Debug)]
pub struct RealClock {
    origin: Instant,
    wall_origin_ns: u64,
}

impl RealClock {
    pub fn new() -> Self {
        let wall_origin_ns = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0);
        Self {
            origin: Instant::now(),
            wall_origin_ns,
        }
    }

    pub fn shared() -> SharedClock {
        Arc::new(Self::new())
    }
}

impl Default for RealClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for RealClock {
    fn now(&self) -> Nanos {
        Nanos(self.origin.elapsed().as_nanos() as u64)
    }

    fn wall_ns(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(self.wall_origin_ns)
    }

    fn mode(&self) -> ClockMode {
        ClockMode::Real
    }

    fn wait_until(&self, t: Nanos) {
        let now = self.now();
        if t > now {
            std::thread::sleep((t - now).as_duration());
        }
    }
}

/// Test-controlled clock. Wall time is a fixed epoch plus virtual monotonic
/// time, so logs written under virtual time are reproducible.
#[derive(Debug, Clone)]
pub struct VirtualClock {
    now: Arc<AtomicU64>,
    wall_epoch_ns: u64,
}

/// 2025-01-01T00:00:00Z
pub const DEFAULT_VIRTUAL_WALL_EPOCH_NS: u64 = 1_735_689_600 * Nanos::PER_SEC;

impl VirtualClock {
    pub fn new() -> Self {
        Self::with_wall_epoch(DEFAULT_VIRTUAL_WALL_EPOCH_NS)
    }

    pub fn with_wall_epoch(wall_epoch_ns: u64) -> Self {
        Self {
            now: Arc::new(AtomicU64::new(0)),
            wall_epoch_ns,
        }
    }

    pub fn advance(&self, by: Nanos) {
        self.now.fetch_add(by.0, Ordering::AcqRel);
    }

    /// Moves time forward to `t`; earlier targets are ignored.
    pub fn set(&self, t: Nanos) {
        self.now.fetch_max(t.0, Ordering::AcqRel);
    }
}

impl Default for VirtualClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Nanos {
        Nanos(self.now.load(Ordering::Acquire))
    }

    fn wall_ns(&self) -> u64 {
        self.wall_epoch_ns + self.now().0
    }

    fn mode(&self) -> ClockMode {
        ClockMode::Virtual
    }

    fn wait_until(&self, t: Nanos) {
        self.set(t);
    }
}
