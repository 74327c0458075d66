//! Time sources. Sessions take a clock so tests and batch runs can be
//! deterministic.

use std::fmt::Debug;
use std::sync::atomic::{AtomicI64, Ordering};

use chrono::{DateTime, Duration, Utc};

pub trait Clock: Send + Sync + Debug {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Starts at a fixed instant and advances by a fixed step on every read.
#[derive(Debug)]
pub struct SteppingClock {
    start: DateTime<Utc>,
    step_ms: i64,
    ticks: AtomicI64,
}

impl SteppingClock {
    pub fn new(start: DateTime<Utc>, step: Duration) -> Self {
        SteppingClock { start, step_ms: step.num_milliseconds(), ticks: AtomicI64::new(0) }
    }

    /// 2024-01-01T00:00:00Z, one second per read.
    pub fn epoch() -> Self {
        Self::new(DateTime::<Utc>::from_timestamp(1_704_067_200, 0).expect("valid timestamp"), Duration::seconds(1))
    }
}

impl Clock for SteppingClock {
    fn now(&self) -> DateTime<Utc> {
        let n = self.ticks.fetch_add(1, Ordering::SeqCst);
        self.start + Duration::milliseconds(self.step_ms * n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stepping_clock_is_monotone() {
        let c = SteppingClock::epoch();
        let a = c.now();
        let b = c.now();
        assert_eq!(b - a, Duration::seconds(1));
        assert_eq!(a.to_rfc3339(), "2024-01-01T00:00:00+00:00");
    }
}
