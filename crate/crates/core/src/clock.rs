use chrono::{DateTime, Duration, TimeZone, Utc};
use parking_lot::Mutex;

/// Source of wall-clock time. Sessions stamp prompts and measure iteration
/// time through this so that deterministic runs can use a [`ManualClock`].
pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// A clock that advances by a fixed step on every read.
#[derive(Debug)]
pub struct ManualClock {
    current: Mutex<DateTime<Utc>>,
    step: Duration,
}

impl ManualClock {
    pub fn new(start: DateTime<Utc>, step: Duration) -> Self {
        Self {
            current: Mutex::new(start),
            step,
        }
    }

    /// Starts at the Unix epoch and ticks one millisecond per read.
    pub fn epoch() -> Self {
        Self::new(Utc.timestamp_opt(0, 0).unwrap(), Duration::milliseconds(1))
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        let mut cur = self.current.lock();
        let t = *cur;
        *cur = t + self.step;
        t
    }
}

pub(crate) fn seconds_between(a: DateTime<Utc>, b: DateTime<Utc>) -> f64 {
    let d = b - a;
    d.num_microseconds().map(|us| us as f64 / 1e6).unwrap_or(0.0).max(0.0)
}
