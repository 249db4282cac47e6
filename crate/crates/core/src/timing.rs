//! High-precision sleep and fixed-duration contention driving.
//!
//! Epoch alignment on both protocol sides comes entirely from timing: the
//! sleep path coarse-sleeps through the OS and spins out the remainder,
//! and the contention path keeps a kernel busy until a deadline by sizing
//! copy chunks from the live bandwidth estimate, coarse chunks first, fine
//! chunks near the deadline.

use std::time::Duration;

use crate::clock::ClockSource;
use crate::error::{Error, Result};
use crate::kernel::{ContentionKernel, CopySample};

/// Outcome of one timed operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimerStats {
    pub requested: Duration,
    pub achieved: Duration,
    /// achieved - requested, in nanoseconds. Never negative for sleeps.
    pub error_ns: i64,
    /// Copy chunks issued (1 for sleeps).
    pub samples: usize,
}

impl TimerStats {
    fn new(requested: Duration, achieved: Duration, samples: usize) -> Self {
        let error_ns = achieved.as_nanos() as i64 - requested.as_nanos() as i64;
        Self {
            requested,
            achieved,
            error_ns,
            samples,
        }
    }
}

/// Chunking plan for one contention window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContendForPlan {
    pub total_duration: Duration,
    /// Starting bandwidth estimate (bytes/s).
    pub calibration_bandwidth: f64,
    /// Data expected to fill the window: calibration_bandwidth x duration.
    pub total_data_estimate: f64,
    pub coarse_chunk: f64,
    pub fine_chunk: f64,
    /// Remaining time at which chunking switches coarse -> fine.
    pub refine_threshold: Duration,
}

impl ContendForPlan {
    pub fn new(total_duration: Duration, calibration_bandwidth: f64, refine_fraction: f64) -> Self {
        let d_star = calibration_bandwidth * total_duration.as_secs_f64();
        Self {
            total_duration,
            calibration_bandwidth,
            total_data_estimate: d_star,
            coarse_chunk: d_star * COARSE_FRACTION,
            fine_chunk: d_star * FINE_FRACTION,
            refine_threshold: total_duration.mul_f64(refine_fraction),
        }
    }
}

const COARSE_FRACTION: f64 = 1.0 / 100.0;
const FINE_FRACTION: f64 = 1.0 / 1000.0;

/// Aggregate error statistics over repeated trials, in the four-column
/// layout (mean / min / max / stddev) used by the calibrate command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub mean_ns: f64,
    pub min_ns: i64,
    pub max_ns: i64,
    pub stddev_ns: f64,
    pub samples: usize,
}

impl ErrorStats {
    pub fn from_errors_ns(errors: &[i64]) -> Self {
        if errors.is_empty() {
            return Self {
                mean_ns: 0.0,
                min_ns: 0,
                max_ns: 0,
                stddev_ns: 0.0,
                samples: 0,
            };
        }
        let n = errors.len() as f64;
        let mean = errors.iter().map(|&e| e as f64).sum::<f64>() / n;
        let var = errors
            .iter()
            .map(|&e| {
                let d = e as f64 - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        Self {
            mean_ns: mean,
            min_ns: *errors.iter().min().unwrap(),
            max_ns: *errors.iter().max().unwrap(),
            stddev_ns: var.sqrt(),
            samples: errors.len(),
        }
    }
}

/// Calibration outcome: the solo bandwidth a kernel sustains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub bandwidth: f64,
    pub samples: usize,
    pub elapsed: Duration,
}

/// Owns a clock and schedules sleeps and contention windows against it.
/// One timer per actor; timers share nothing.
#[derive(Debug, Clone)]
pub struct Timer {
    clock: ClockSource,
    spin_threshold: Duration,
    refine_fraction: f64,
}

impl Timer {
    pub fn new(clock: ClockSource) -> Self {
        Self {
            clock,
            spin_threshold: Duration::from_micros(500),
            refine_fraction: 0.05,
        }
    }

    /// How early to abandon the OS sleep and start spinning.
    pub fn with_spin_threshold(mut self, t: Duration) -> Self {
        self.spin_threshold = t;
        self
    }

    /// Fraction of the window at which chunking switches to fine chunks.
    pub fn with_refine_fraction(mut self, f: f64) -> Self {
        self.refine_fraction = f;
        self
    }

    pub fn clock(&self) -> &ClockSource {
        &self.clock
    }

    pub fn now(&self) -> Duration {
        self.clock.now()
    }

    /// Sleeps until `deadline`, never returning early. Coarse OS sleep up
    /// to the spin threshold, then a spin-wait; on a virtual clock this is
    /// an exact jump.
    pub fn precise_sleep_until(&self, deadline: Duration) -> TimerStats {
        let start = self.clock.now();
        let requested = deadline.saturating_sub(start);
        match &self.clock {
            ClockSource::Virtual(c) => c.advance_to(deadline),
            ClockSource::Monotonic(_) => {
                let coarse_target = deadline.saturating_sub(self.spin_threshold);
                if coarse_target > start {
                    self.clock.coarse_sleep_until(coarse_target);
                }
                while self.clock.now() < deadline {
                    std::hint::spin_loop();
                }
            }
        }
        TimerStats::new(requested, self.clock.now() - start, 1)
    }

    /// Sleeps for `duration` (0 returns immediately).
    pub fn precise_sleep(&self, duration: Duration) -> TimerStats {
        let deadline = self.clock.now() + duration;
        let mut stats = self.precise_sleep_until(deadline);
        stats.requested = duration;
        stats.error_ns = stats.achieved.as_nanos() as i64 - duration.as_nanos() as i64;
        stats
    }

    /// Keeps `kernel` busy until `deadline` and returns the average
    /// achieved bandwidth plus every chunk issued.
    pub fn contend_until_samples(
        &self,
        deadline: Duration,
        kernel: &mut dyn ContentionKernel,
    ) -> Result<(f64, TimerStats, Vec<CopySample>)> {
        let start = self.clock.now();
        let requested = deadline.saturating_sub(start);
        if requested.is_zero() {
            return Err(Error::DomainError {
                what: "contention window",
                value: 0.0,
            });
        }
        let granularity = kernel.min_copy_bytes().max(1);
        let mut beta = match kernel.calibration() {
            Some(b) if b > 0.0 => b,
            _ => {
                // no calibration yet: seed the estimate with one small copy
                // (counted inside the window, like any other chunk)
                let s = kernel.copy(granularity)?;
                s.bandwidth
            }
        };
        if beta <= 0.0 {
            return Err(Error::CalibrationFailure(
                "kernel bandwidth estimate is not positive".into(),
            ));
        }
        let refine_at = deadline.saturating_sub(requested.mul_f64(self.refine_fraction));
        let mut chunks = Vec::new();
        let mut bytes = 0u64;
        loop {
            let now = self.clock.now();
            if now >= deadline {
                break;
            }
            let remaining = (deadline - now).as_secs_f64();
            let fraction = if now >= refine_at {
                FINE_FRACTION
            } else {
                COARSE_FRACTION
            };
            let d_star = beta * remaining;
            let nominal = d_star * fraction;
            let chunk = if nominal >= granularity as f64 {
                nominal as u64
            } else if d_star > granularity as f64 {
                granularity
            } else {
                // final fill: one copy sized to land on the deadline
                (d_star.round() as u64).max(1)
            };
            let s = kernel.copy(chunk)?;
            beta = s.bandwidth;
            bytes += s.bytes_moved;
            chunks.push(s);
        }
        let achieved = self.clock.now() - start;
        let bandwidth = bytes as f64 / achieved.as_secs_f64();
        let stats = TimerStats::new(requested, achieved, chunks.len());
        Ok((bandwidth, stats, chunks))
    }

    pub fn contend_until(
        &self,
        deadline: Duration,
        kernel: &mut dyn ContentionKernel,
    ) -> Result<(f64, TimerStats)> {
        let (bw, stats, _) = self.contend_until_samples(deadline, kernel)?;
        Ok((bw, stats))
    }

    /// Drives the kernel for `duration` starting now.
    pub fn contend_for(
        &self,
        duration: Duration,
        kernel: &mut dyn ContentionKernel,
    ) -> Result<(f64, TimerStats)> {
        self.contend_until(self.clock.now() + duration, kernel)
    }

    /// The plan the scheduler would derive for a window of `duration`.
    pub fn plan_for(&self, duration: Duration, kernel: &dyn ContentionKernel) -> Result<ContendForPlan> {
        let beta = kernel
            .calibration()
            .ok_or_else(|| Error::CalibrationFailure("kernel not calibrated".into()))?;
        Ok(ContendForPlan::new(duration, beta, self.refine_fraction))
    }
}

/// Measures the solo bandwidth of a kernel by sweeping whole buffers for
/// `warmup_duration`, and stores the result on the kernel. Elapsed time is
/// summed from the samples, so the same code calibrates both backends.
pub fn calibrate(kernel: &mut dyn ContentionKernel, warmup_duration: Duration) -> Result<Calibration> {
    if warmup_duration.is_zero() {
        return Err(Error::DomainError {
            what: "warmup_duration",
            value: 0.0,
        });
    }
    let chunk = (kernel.config().buffer_size as u64).max(1);
    let mut bytes = 0u64;
    let mut elapsed = Duration::ZERO;
    let mut samples = 0usize;
    while elapsed < warmup_duration {
        let s = kernel.copy(chunk)?;
        bytes += s.bytes_moved;
        elapsed += s.duration;
        samples += 1;
    }
    let bandwidth = bytes as f64 / elapsed.as_secs_f64();
    if !bandwidth.is_finite() || bandwidth <= 0.0 {
        return Err(Error::CalibrationFailure(format!(
            "measured bandwidth {bandwidth} is not usable"
        )));
    }
    kernel.set_calibration(bandwidth);
    Ok(Calibration {
        bandwidth,
        samples,
        elapsed,
    })
}
