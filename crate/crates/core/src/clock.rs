use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use chrono::{DateTime, SecondsFormat, Utc};

/// Time source for latencies and record timestamps. Deterministic runs use
/// [`FixedClock`] so repeated runs produce identical bytes.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;

    fn now_rfc3339(&self) -> String {
        let dt = DateTime::<Utc>::from_timestamp_millis(self.now_ms() as i64).unwrap_or_default();
        dt.to_rfc3339_opts(SecondsFormat::Millis, true)
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Clock frozen at a settable instant.
#[derive(Debug, Default)]
pub struct FixedClock(AtomicU64);

impl FixedClock {
    pub fn new(ms: u64) -> Self {
        Self(AtomicU64::new(ms))
    }

    pub fn set(&self, ms: u64) {
        self.0.store(ms, Ordering::SeqCst);
    }
}

impl Clock for FixedClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_clock_formats_epoch() {
        let c = FixedClock::new(0);
        assert_eq!(c.now_rfc3339(), "1970-01-01T00:00:00.000Z");
        c.set(1_500);
        assert_eq!(c.now_ms(), 1_500);
    }
}
