//! Monotonic and virtual clocks.
//!
//! Every timer, kernel and model component reads time through a
//! [`ClockSource`]. The native backend uses the OS monotonic clock; the
//! simulator uses a [`VirtualClock`] that only moves when a component
//! advances it, so simulated runs are deterministic and take no wall time.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

/// Wall-clock-free monotonic clock. Instants are durations since the
/// clock's creation.
#[derive(Debug, Clone)]
pub struct MonotonicClock {
    origin: Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
        }
    }

    pub fn now(&self) -> Duration {
        self.origin.elapsed()
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

/// Simulation clock with nanosecond resolution. Cloning yields a handle to
/// the same underlying time. Advancing is the job of whichever component
/// is simulating work; the simulator loop itself is single-threaded.
#[derive(Debug, Clone)]
pub struct VirtualClock {
    now_ns: Arc<AtomicU64>,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self {
            now_ns: Arc::new(AtomicU64::new(0)),
        }
    }

    pub fn now(&self) -> Duration {
        Duration::from_nanos(self.now_ns.load(Ordering::Relaxed))
    }

    pub fn now_ns(&self) -> u64 {
        self.now_ns.load(Ordering::Relaxed)
    }

    /// Advances the clock; simulated work calls this instead of taking time.
    pub fn advance(&self, d: Duration) {
        let ns = u64::try_from(d.as_nanos()).unwrap_or(u64::MAX);
        self.now_ns.fetch_add(ns, Ordering::Relaxed);
    }

    /// Jumps straight to `deadline` if it lies in the future.
    pub fn advance_to(&self, deadline: Duration) {
        let ns = u64::try_from(deadline.as_nanos()).unwrap_or(u64::MAX);
        self.now_ns.fetch_max(ns, Ordering::Relaxed);
    }
}

impl Default for VirtualClock {
    fn default() -> Self {
        Self::new()
    }
}

/// The clock a component reads. Virtual clocks are only valid inside the
/// single-threaded simulator loop; monotonic clocks may be created per
/// thread.
#[derive(Debug, Clone)]
pub enum ClockSource {
    Monotonic(MonotonicClock),
    Virtual(VirtualClock),
}

impl ClockSource {
    pub fn monotonic() -> Self {
        ClockSource::Monotonic(MonotonicClock::new())
    }

    pub fn now(&self) -> Duration {
        match self {
            ClockSource::Monotonic(c) => c.now(),
            ClockSource::Virtual(c) => c.now(),
        }
    }

    pub fn is_virtual(&self) -> bool {
        matches!(self, ClockSource::Virtual(_))
    }

    /// Coarse sleep: OS sleep for the native clock, an exact jump for the
    /// virtual one. Precision spinning is the timer's job.
    pub fn coarse_sleep_until(&self, deadline: Duration) {
        match self {
            ClockSource::Monotonic(c) => {
                let now = c.now();
                if deadline > now {
                    std::thread::sleep(deadline - now);
                }
            }
            ClockSource::Virtual(c) => c.advance_to(deadline),
        }
    }
}
