//! Memory-contention kernels.
//!
//! A kernel is the one primitive both protocol sides rely on: copy some
//! bytes through memory and report the achieved bandwidth. The native
//! backend streams data through real buffers, bypassing the cache
//! hierarchy where the platform allows; the simulated backend books
//! virtual time against a [`MemorySystemModel`].

use std::alloc::{alloc, dealloc, Layout};
use std::cell::RefCell;
use std::rc::Rc;
use std::sync::mpsc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crate::chanmodel::{ActorId, MemorySystemModel};
use crate::clock::MonotonicClock;
use crate::error::{Error, Result};

/// Smallest chunk the adaptive scheduler will ask a kernel to move, apart
/// from a final fill-in before a deadline.
pub const DEFAULT_MIN_COPY_BYTES: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TouchPattern {
    SequentialCopy,
}

/// Kernel construction parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    pub buffer_size: usize,
    pub cache_bypass: bool,
    pub alignment: usize,
    pub touch_pattern: TouchPattern,
    /// Worker fan-out; >1 raises demand by copying in parallel.
    pub threads: usize,
    /// Reference peak DRAM bandwidth (bytes/s) for utilization reporting
    /// and inflated-reading detection.
    pub peak_bandwidth: Option<f64>,
}

impl KernelConfig {
    pub fn new(buffer_size: usize) -> Self {
        Self {
            buffer_size,
            cache_bypass: true,
            alignment: 64,
            touch_pattern: TouchPattern::SequentialCopy,
            threads: 1,
            peak_bandwidth: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.buffer_size == 0 {
            return Err(Error::InvalidParameter("buffer_size must be > 0".into()));
        }
        if !self.alignment.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "alignment must be a power of two, got {}",
                self.alignment
            )));
        }
        if self.threads == 0 {
            return Err(Error::InvalidParameter("threads must be >= 1".into()));
        }
        Ok(())
    }
}

/// One measured copy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CopySample {
    pub bytes_moved: u64,
    pub duration: Duration,
    /// bytes_moved / duration, recomputed from the stored fields.
    pub bandwidth: f64,
    pub timestamp: Duration,
}

impl CopySample {
    fn new(bytes_moved: u64, duration: Duration, timestamp: Duration) -> Self {
        let duration = duration.max(Duration::from_nanos(1));
        Self {
            bytes_moved,
            duration,
            bandwidth: bytes_moved as f64 / duration.as_secs_f64(),
            timestamp,
        }
    }
}

/// Copy a buffer, report achieved bandwidth.
pub trait ContentionKernel {
    /// Moves `bytes` through memory (re-sweeping the buffer as needed) and
    /// reports the achieved bandwidth.
    fn copy(&mut self, bytes: u64) -> Result<CopySample>;

    fn config(&self) -> &KernelConfig;

    /// Smallest efficient chunk size.
    fn min_copy_bytes(&self) -> u64 {
        DEFAULT_MIN_COPY_BYTES
    }

    /// Last calibrated solo bandwidth, if any.
    fn calibration(&self) -> Option<f64>;

    fn set_calibration(&mut self, bandwidth: f64);

    /// Peak bandwidth reference for utilization math.
    fn peak_bandwidth(&self) -> Option<f64> {
        self.config().peak_bandwidth
    }

    /// Human-readable copy strategy tag.
    fn strategy(&self) -> &'static str;
}

/// Fraction of a kernel's peak bandwidth it achieves when driven for
/// `probe_duration`, clamped to [0,1]. Elapsed time is accounted from the
/// samples themselves, so this works identically on both backends.
pub fn mc_utilization(kernel: &mut dyn ContentionKernel, probe_duration: Duration) -> Result<f64> {
    let peak = kernel.peak_bandwidth().ok_or_else(|| {
        Error::CalibrationFailure("no peak bandwidth reference configured".into())
    })?;
    if probe_duration.is_zero() {
        return Err(Error::DomainError {
            what: "probe_duration",
            value: 0.0,
        });
    }
    let chunk = kernel.config().buffer_size as u64;
    let mut bytes = 0u64;
    let mut elapsed = Duration::ZERO;
    while elapsed < probe_duration {
        let s = kernel.copy(chunk)?;
        bytes += s.bytes_moved;
        elapsed += s.duration;
    }
    let achieved = bytes as f64 / elapsed.as_secs_f64();
    Ok((achieved / peak).clamp(0.0, 1.0))
}

// ---------------------------------------------------------------------------
// Native backend
// ---------------------------------------------------------------------------

/// Cache-bypassing block copy. On x86_64 stores go through non-temporal
/// (streaming) instructions; on aarch64 through ldnp/stnp pairs, which hint
/// the core not to keep the lines. Elsewhere a plain copy is used and
/// callers are expected to size buffers well past the last-level cache.
#[inline]
unsafe fn copy_block_bypass(dst: *mut u8, src: *const u8, len: usize) {
    #[cfg(target_arch = "x86_64")]
    unsafe {
        use core::arch::x86_64::*;
        let blocks = len / 64;
        let mut s = src as *const __m128i;
        let mut d = dst as *mut __m128i;
        for _ in 0..blocks {
            let a = _mm_loadu_si128(s);
            let b = _mm_loadu_si128(s.add(1));
            let c = _mm_loadu_si128(s.add(2));
            let e = _mm_loadu_si128(s.add(3));
            _mm_stream_si128(d, a);
            _mm_stream_si128(d.add(1), b);
            _mm_stream_si128(d.add(2), c);
            _mm_stream_si128(d.add(3), e);
            s = s.add(4);
            d = d.add(4);
        }
        _mm_sfence();
        let done = blocks * 64;
        if done < len {
            std::ptr::copy_nonoverlapping(src.add(done), dst.add(done), len - done);
        }
    }
    #[cfg(target_arch = "aarch64")]
    unsafe {
        let blocks = len / 64;
        let mut s = src;
        let mut d = dst;
        for _ in 0..blocks {
            core::arch::asm!(
                "ldnp {t0}, {t1}, [{s}, #0]",
                "ldnp {t2}, {t3}, [{s}, #16]",
                "stnp {t0}, {t1}, [{d}, #0]",
                "stnp {t2}, {t3}, [{d}, #16]",
                "ldnp {t0}, {t1}, [{s}, #32]",
                "ldnp {t2}, {t3}, [{s}, #48]",
                "stnp {t0}, {t1}, [{d}, #32]",
                "stnp {t2}, {t3}, [{d}, #48]",
                s = in(reg) s,
                d = in(reg) d,
                t0 = out(reg) _,
                t1 = out(reg) _,
                t2 = out(reg) _,
                t3 = out(reg) _,
                options(nostack),
            );
            s = s.add(64);
            d = d.add(64);
        }
        let done = blocks * 64;
        if done < len {
            std::ptr::copy_nonoverlapping(src.add(done), dst.add(done), len - done);
        }
    }
    #[cfg(not(any(target_arch = "x86_64", target_arch = "aarch64")))]
    unsafe {
        std::ptr::copy_nonoverlapping(src, dst, len);
    }
}

const fn bypass_strategy() -> &'static str {
    #[cfg(target_arch = "x86_64")]
    {
        "non-temporal-x86_64"
    }
    #[cfg(target_arch = "aarch64")]
    {
        "non-temporal-aarch64"
    }
    #[cfg(not(any(target_arch = "x86_64", target_arch = "aarch64")))]
    {
        "streaming-sweep"
    }
}

struct AlignedBuf {
    ptr: *mut u8,
    layout: Layout,
}

impl AlignedBuf {
    fn new(size: usize, alignment: usize) -> Result<Self> {
        let layout = Layout::from_size_align(size, alignment)
            .map_err(|e| Error::InvalidParameter(format!("bad buffer layout: {e}")))?;
        let ptr = unsafe { alloc(layout) };
        if ptr.is_null() {
            return Err(Error::AllocationFailure { bytes: size });
        }
        // touch every page up front so faults never land inside a timed copy
        let buf = Self { ptr, layout };
        unsafe {
            for i in 0..size {
                *buf.ptr.add(i) = (i & 0xFF) as u8;
            }
        }
        Ok(buf)
    }

    fn len(&self) -> usize {
        self.layout.size()
    }
}

impl Drop for AlignedBuf {
    fn drop(&mut self) {
        unsafe { dealloc(self.ptr, self.layout) };
    }
}

// The buffer is only ever touched by the thread that owns it.
unsafe impl Send for AlignedBuf {}

/// Sweeps `bytes` through a src/dst buffer pair starting at a rolling,
/// cache-line-aligned offset, so consecutive chunked calls keep streaming
/// rather than re-hitting a hot prefix.
struct CopyEngine {
    src: AlignedBuf,
    dst: AlignedBuf,
    offset: usize,
    bypass: bool,
}

impl CopyEngine {
    fn new(buffer_size: usize, alignment: usize, bypass: bool) -> Result<Self> {
        // keep the sweep length cache-line aligned for the streaming path
        let size = buffer_size.next_multiple_of(64).max(64);
        Ok(Self {
            src: AlignedBuf::new(size, alignment.max(64))?,
            dst: AlignedBuf::new(size, alignment.max(64))?,
            offset: 0,
            bypass,
        })
    }

    fn run(&mut self, bytes: u64) {
        let len = self.src.len();
        let mut remaining = bytes as usize;
        while remaining > 0 {
            let n = remaining.min(len - self.offset);
            unsafe {
                let s = self.src.ptr.add(self.offset);
                let d = self.dst.ptr.add(self.offset);
                if self.bypass {
                    copy_block_bypass(d, s, n);
                } else {
                    std::ptr::copy_nonoverlapping(s, d, n);
                }
            }
            remaining -= n;
            self.offset = (self.offset + n).next_multiple_of(64) % len;
        }
    }
}

enum WorkerPool {
    Inline(CopyEngine),
    Threads(Vec<Worker>),
}

struct Worker {
    task: mpsc::Sender<u64>,
    done: mpsc::Receiver<std::result::Result<(), String>>,
    handle: Option<JoinHandle<()>>,
}

impl Worker {
    fn spawn(buffer_size: usize, alignment: usize, bypass: bool) -> Result<Self> {
        let (task_tx, task_rx) = mpsc::channel::<u64>();
        let (done_tx, done_rx) = mpsc::channel();
        let handle = std::thread::Builder::new()
            .name("mc3-copy".into())
            .spawn(move || {
                let mut engine = match CopyEngine::new(buffer_size, alignment, bypass) {
                    Ok(e) => e,
                    Err(e) => {
                        let _ = done_tx.send(Err(e.to_string()));
                        return;
                    }
                };
                let _ = done_tx.send(Ok(()));
                while let Ok(bytes) = task_rx.recv() {
                    engine.run(bytes);
                    if done_tx.send(Ok(())).is_err() {
                        break;
                    }
                }
            })
            .map_err(|e| Error::BackendUnavailable(format!("worker spawn failed: {e}")))?;
        let worker = Self {
            task: task_tx,
            done: done_rx,
            handle: Some(handle),
        };
        // first message reports allocation outcome
        match worker.done.recv() {
            Ok(Ok(())) => Ok(worker),
            Ok(Err(msg)) => Err(Error::KernelFailure(msg)),
            Err(_) => Err(Error::BackendUnavailable("worker died during startup".into())),
        }
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        let (dead_tx, _) = mpsc::channel();
        self.task = dead_tx; // closes the task channel, worker loop exits
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// Streaming-copy kernel over real memory.
pub struct NativeKernel {
    cfg: KernelConfig,
    pool: WorkerPool,
    clock: MonotonicClock,
    calibration: Option<f64>,
    inflated_readings: u64,
}

impl NativeKernel {
    pub fn new(cfg: KernelConfig) -> Result<Self> {
        cfg.validate()?;
        let per_worker = cfg.buffer_size / cfg.threads;
        let pool = if cfg.threads == 1 {
            WorkerPool::Inline(CopyEngine::new(cfg.buffer_size, cfg.alignment, cfg.cache_bypass)?)
        } else {
            let mut workers = Vec::with_capacity(cfg.threads);
            for _ in 0..cfg.threads {
                workers.push(Worker::spawn(per_worker.max(4096), cfg.alignment, cfg.cache_bypass)?);
            }
            WorkerPool::Threads(workers)
        };
        Ok(Self {
            cfg,
            pool,
            clock: MonotonicClock::new(),
            calibration: None,
            inflated_readings: 0,
        })
    }

    /// Count of samples that exceeded 2x the configured peak bandwidth,
    /// which on a bypassing kernel indicates cache-inflated readings.
    pub fn inflated_readings(&self) -> u64 {
        self.inflated_readings
    }
}

impl ContentionKernel for NativeKernel {
    fn copy(&mut self, bytes: u64) -> Result<CopySample> {
        if bytes == 0 {
            return Err(Error::DomainError {
                what: "bytes_requested",
                value: 0.0,
            });
        }
        let started = self.clock.now();
        let t0 = Instant::now();
        match &mut self.pool {
            WorkerPool::Inline(engine) => engine.run(bytes),
            WorkerPool::Threads(workers) => {
                let n = workers.len() as u64;
                let share = bytes / n;
                let first = bytes - share * (n - 1);
                for (i, w) in workers.iter().enumerate() {
                    let b = if i == 0 { first } else { share };
                    w.task
                        .send(b.max(1))
                        .map_err(|_| Error::KernelFailure("copy worker gone".into()))?;
                }
                for w in workers.iter() {
                    match w.done.recv() {
                        Ok(Ok(())) => {}
                        Ok(Err(msg)) => return Err(Error::KernelFailure(msg)),
                        Err(_) => return Err(Error::KernelFailure("copy worker gone".into())),
                    }
                }
            }
        }
        let sample = CopySample::new(bytes, t0.elapsed(), started);
        if self.cfg.cache_bypass {
            if let Some(peak) = self.cfg.peak_bandwidth {
                if sample.bandwidth > 2.0 * peak {
                    self.inflated_readings += 1;
                }
            }
        }
        Ok(sample)
    }

    fn config(&self) -> &KernelConfig {
        &self.cfg
    }

    fn calibration(&self) -> Option<f64> {
        self.calibration
    }

    fn set_calibration(&mut self, bandwidth: f64) {
        self.calibration = Some(bandwidth);
    }

    fn strategy(&self) -> &'static str {
        if self.cfg.cache_bypass {
            bypass_strategy()
        } else {
            "plain-copy"
        }
    }
}

// ---------------------------------------------------------------------------
// Simulated backend
// ---------------------------------------------------------------------------

/// Kernel that books copies against a shared [`MemorySystemModel`] and
/// advances its virtual clock. Only valid inside the single-threaded
/// simulator loop.
pub struct SimKernel {
    model: Rc<RefCell<MemorySystemModel>>,
    actor: ActorId,
    cfg: KernelConfig,
    calibration: Option<f64>,
    min_copy: u64,
}

impl SimKernel {
    pub fn new(model: Rc<RefCell<MemorySystemModel>>, actor: ActorId, cfg: KernelConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            model,
            actor,
            cfg,
            calibration: None,
            min_copy: DEFAULT_MIN_COPY_BYTES,
        })
    }

    pub fn with_min_copy_bytes(mut self, bytes: u64) -> Self {
        self.min_copy = bytes.max(1);
        self
    }

    pub fn model(&self) -> Rc<RefCell<MemorySystemModel>> {
        Rc::clone(&self.model)
    }

    pub fn actor(&self) -> ActorId {
        self.actor
    }
}

impl ContentionKernel for SimKernel {
    fn copy(&mut self, bytes: u64) -> Result<CopySample> {
        if bytes == 0 {
            return Err(Error::DomainError {
                what: "bytes_requested",
                value: 0.0,
            });
        }
        let mut model = self.model.borrow_mut();
        let bw = model.sample_bandwidth(self.actor)?;
        if bw <= 0.0 {
            return Err(Error::KernelFailure(format!(
                "model reports no bandwidth for actor #{}",
                self.actor.0
            )));
        }
        let timestamp = model.now();
        let duration = Duration::from_secs_f64(bytes as f64 / bw).max(Duration::from_nanos(1));
        model.advance(duration);
        Ok(CopySample::new(bytes, duration, timestamp))
    }

    fn config(&self) -> &KernelConfig {
        &self.cfg
    }

    fn min_copy_bytes(&self) -> u64 {
        self.min_copy
    }

    fn calibration(&self) -> Option<f64> {
        self.calibration
    }

    fn set_calibration(&mut self, bandwidth: f64) {
        self.calibration = Some(bandwidth);
    }

    fn peak_bandwidth(&self) -> Option<f64> {
        self.cfg
            .peak_bandwidth
            .or_else(|| Some(self.model.borrow().total_bandwidth))
    }

    fn strategy(&self) -> &'static str {
        "simulated"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chanmodel::{ActorProfile, ActorRole};

    fn sim_pair(total: f64, demand: f64) -> (Rc<RefCell<MemorySystemModel>>, SimKernel) {
        let mut m = MemorySystemModel::default_calibration();
        m.total_bandwidth = total;
        let actor = m.register_actor(ActorProfile::new("probe", demand, ActorRole::Background));
        let model = Rc::new(RefCell::new(m));
        let kern = SimKernel::new(Rc::clone(&model), actor, KernelConfig::new(1 << 20)).unwrap();
        (model, kern)
    }

    #[test]
    fn sim_copy_arithmetic_is_forced_by_the_model() {
        // 8 MB at 8 GB/s is exactly 1 ms
        let (_m, mut k) = sim_pair(8.0e9, 8.0e9);
        let s = k.copy(8_000_000).unwrap();
        assert_eq!(s.duration, Duration::from_millis(1));
        assert_eq!(s.bandwidth, 8.0e9);
        assert_eq!(s.bytes_moved, 8_000_000);
    }

    #[test]
    fn copy_sample_invariant_holds() {
        let (_m, mut k) = sim_pair(10.0e9, 3.0e9);
        for req in [1u64, 512, 4096, 1 << 20, 10 << 20] {
            let s = k.copy(req).unwrap();
            let recomputed = s.bytes_moved as f64 / s.duration.as_secs_f64();
            assert_eq!(s.bandwidth, recomputed);
            assert!(s.duration > Duration::ZERO);
        }
    }

    #[test]
    fn request_larger_than_buffer_resweeps() {
        let cfg = KernelConfig::new(64 * 1024);
        let mut k = NativeKernel::new(cfg).unwrap();
        let s = k.copy(2 * 64 * 1024).unwrap();
        assert_eq!(s.bytes_moved, 2 * 64 * 1024);
    }

    #[test]
    fn sim_sequences_are_deterministic() {
        let run = || {
            let (_m, mut k) = sim_pair(10.0e9, 4.0e9);
            (0..50).map(|_| k.copy(100_000).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn sim_copy_advances_virtual_clock() {
        let (model, mut k) = sim_pair(10.0e9, 5.0e9);
        assert_eq!(model.borrow().now(), Duration::ZERO);
        k.copy(5_000_000).unwrap(); // 1 ms at 5 GB/s
        assert_eq!(model.borrow().now(), Duration::from_millis(1));
    }

    #[test]
    fn native_bandwidth_is_plausible() {
        let mut k = NativeKernel::new(KernelConfig::new(16 << 20)).unwrap();
        let s = k.copy(16 << 20).unwrap();
        assert!(
            s.bandwidth > 0.5e9 && s.bandwidth < 500.0e9,
            "implausible DRAM bandwidth {} B/s",
            s.bandwidth
        );
    }

    #[test]
    fn native_bypass_readings_stay_below_twice_peak() {
        // measure once with a large buffer, then use that as the reference
        let mut probe = NativeKernel::new(KernelConfig::new(64 << 20)).unwrap();
        let reference = probe.copy(64 << 20).unwrap().bandwidth;

        let mut cfg = KernelConfig::new(64 << 20);
        cfg.peak_bandwidth = Some(reference * 1.5);
        let mut k = NativeKernel::new(cfg).unwrap();
        for _ in 0..5 {
            let s = k.copy(16 << 20).unwrap();
            assert!(
                s.bandwidth <= 2.0 * reference * 1.5,
                "cache-inflated reading: {} vs peak {}",
                s.bandwidth,
                reference
            );
        }
        assert_eq!(k.inflated_readings(), 0);
    }

    #[test]
    fn zero_byte_copy_is_rejected() {
        let (_m, mut k) = sim_pair(10.0e9, 5.0e9);
        assert!(k.copy(0).is_err());
    }

    #[test]
    fn mc_utilization_of_sole_actor_is_demand_over_total() {
        let (_m, mut k) = sim_pair(10.0e9, 2.0e9);
        let u = mc_utilization(&mut k, Duration::from_millis(5)).unwrap();
        assert!((u - 0.2).abs() < 1e-9, "got {u}");
    }

    #[test]
    fn mc_utilization_zero_demand() {
        let mut m = MemorySystemModel::default_calibration();
        let idle = m.register_actor(ActorProfile::new("idle", 0.0, ActorRole::Background));
        let model = Rc::new(RefCell::new(m));
        let mut k = SimKernel::new(model, idle, KernelConfig::new(1 << 20)).unwrap();
        // zero demand never moves data; the copy itself fails
        assert!(k.copy(1).is_err());
    }

    #[test]
    fn mc_utilization_at_two_mib_calibration_point() {
        let mut m = MemorySystemModel::default_calibration();
        let demand = m.demand_for_buffer(2 * 1024 * 1024);
        let tx = m.register_actor(ActorProfile::new("tx", demand, ActorRole::Transmitter));
        let model = Rc::new(RefCell::new(m));
        let mut k = SimKernel::new(model, tx, KernelConfig::new(2 << 20)).unwrap();
        let u = mc_utilization(&mut k, Duration::from_millis(5)).unwrap();
        assert!((u - 0.20).abs() < 5e-3, "got {u}");
    }

    #[test]
    fn multithreaded_kernel_copies() {
        let mut cfg = KernelConfig::new(4 << 20);
        cfg.threads = 2;
        let mut k = NativeKernel::new(cfg).unwrap();
        let s = k.copy(8 << 20).unwrap();
        assert_eq!(s.bytes_moved, 8 << 20);
        assert!(s.bandwidth > 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(KernelConfig::new(0).validate().is_err());
        let mut c = KernelConfig::new(1024);
        c.alignment = 48;
        assert!(c.validate().is_err());
        let mut c = KernelConfig::new(1024);
        c.threads = 0;
        assert!(c.validate().is_err());
    }
}
