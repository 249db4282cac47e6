//! Transmitter and receiver engines.
//!
//! The transmitter walks the bitstream and, per bit, either drives its
//! contention kernel for one bit interval (bit 1) or sleeps through it
//! (bit 0). The receiver runs fixed copy epochs back to back, normalizes
//! each epoch's bandwidth against the running global average, and decodes
//! with a three-zone hysteresis threshold. Bit intervals are anchored to
//! absolute deadlines derived from the shared start epoch, so timing error
//! does not accumulate across bits.
//!
//! The only pre-agreement between the two sides is the shared
//! [`ChannelConfig`]; at run time they interact exclusively through memory
//! contention.

use std::cell::RefCell;
use std::rc::Rc;
use std::time::Duration;

use crate::bitstream::Bitstream;
use crate::chanmodel::{ActorId, ActorRole, Activity, MemorySystemModel};
use crate::clock::ClockSource;
use crate::error::{Error, Result};
use crate::kernel::{ContentionKernel, KernelConfig, NativeKernel, SimKernel};
use crate::timing::{calibrate, Timer, TimerStats};

/// How the decoder's hysteresis state is updated after a decided symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HysteresisMode {
    /// State remembers the symbol just emitted; dead-zone samples repeat
    /// the last decision.
    #[default]
    Standard,
    /// State remembers the complement of the emitted symbol; dead-zone
    /// samples repeat the opposite of the last decision.
    Inverted,
}

impl HysteresisMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Self::Standard),
            "inverted" => Ok(Self::Inverted),
            other => Err(Error::InvalidParameter(format!(
                "unknown hysteresis mode `{other}` (expected standard|inverted)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Standard => "standard",
            Self::Inverted => "inverted",
        }
    }
}

/// How the decode threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaPolicy {
    /// Explicit threshold in bytes/s of normalized bandwidth.
    Fixed(f64),
    /// factor x standard deviation of the baseline epochs' raw bandwidth.
    BaselineStd { factor: f64 },
    /// factor x scaled median absolute deviation of the baseline epochs,
    /// robust against outliers in the quiet phase.
    BaselineMad { factor: f64 },
}

impl Default for GammaPolicy {
    fn default() -> Self {
        GammaPolicy::BaselineStd { factor: 2.0 }
    }
}

/// Shared protocol parameters. Both endpoints must load identical values;
/// this file-conveyed agreement is the channel's only coordination.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    /// Receiver copy epoch length T.
    pub epoch_interval: Duration,
    /// Receiver epochs per transmitted bit (R); the bit interval is R x T.
    pub epochs_per_bit: u32,
    pub tx_buffer_size: usize,
    pub rx_buffer_size: usize,
    pub gamma_policy: GammaPolicy,
    pub hysteresis_mode: HysteresisMode,
    /// Agreed start instant on the session clock.
    pub start_epoch: Duration,
    /// How much earlier the receiver starts to collect its quiet baseline.
    pub rx_early_start: Duration,
    pub seed: u64,
}

impl ChannelConfig {
    pub fn new(epoch_interval: Duration, epochs_per_bit: u32) -> Self {
        Self {
            epoch_interval,
            epochs_per_bit,
            tx_buffer_size: 2 << 20,
            rx_buffer_size: 1 << 20,
            gamma_policy: GammaPolicy::default(),
            hysteresis_mode: HysteresisMode::default(),
            start_epoch: Duration::ZERO,
            rx_early_start: Duration::from_secs(1),
            seed: 0,
        }
    }

    pub fn bit_interval(&self) -> Duration {
        self.epoch_interval * self.epochs_per_bit
    }

    /// Baseline epochs implied by the early start (rounded to whole epochs).
    pub fn baseline_epochs(&self) -> usize {
        let t = self.epoch_interval.as_nanos();
        if t == 0 {
            return 0;
        }
        ((self.rx_early_start.as_nanos() + t / 2) / t) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.epoch_interval.is_zero() {
            return Err(Error::InvalidParameter("epoch_interval must be positive".into()));
        }
        if self.epochs_per_bit == 0 {
            return Err(Error::InvalidParameter("epochs_per_bit must be >= 1".into()));
        }
        if let GammaPolicy::Fixed(g) = self.gamma_policy {
            if g < 0.0 {
                return Err(Error::InvalidParameter("gamma must be >= 0".into()));
            }
        }
        if self.tx_buffer_size == 0 || self.rx_buffer_size == 0 {
            return Err(Error::InvalidParameter("buffer sizes must be > 0".into()));
        }
        Ok(())
    }
}

/// One receiver copy epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochSample {
    pub index: usize,
    /// Measured bandwidth over the epoch (bytes/s).
    pub raw_bandwidth: f64,
    /// Global running average after this sample.
    pub running_average: f64,
    /// raw - running average.
    pub normalized: f64,
    /// Epoch start, microseconds on the session clock.
    pub timestamp_us: u64,
    /// True for quiet epochs collected before the transmitter starts.
    pub baseline: bool,
}

/// Hysteresis decoder state: the remembered symbol emitted for dead-zone
/// samples. Starts at 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecoderState {
    pub bit: bool,
    pub mode: HysteresisMode,
}

impl DecoderState {
    pub fn new(mode: HysteresisMode) -> Self {
        Self { bit: false, mode }
    }

    /// Classifies one normalized sample: above +gamma decodes 0 (high
    /// bandwidth, transmitter quiet), below -gamma decodes 1, anything
    /// between repeats the remembered state.
    pub fn classify(&mut self, normalized: f64, gamma: f64) -> bool {
        if normalized > gamma {
            self.bit = match self.mode {
                HysteresisMode::Standard => false,
                HysteresisMode::Inverted => true,
            };
            false
        } else if normalized < -gamma {
            self.bit = match self.mode {
                HysteresisMode::Standard => true,
                HysteresisMode::Inverted => false,
            };
            true
        } else {
            self.bit
        }
    }
}

/// Per-bit transmitter bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TxEntry {
    pub bit: bool,
    /// When the bit's window actually began on the transmitter clock.
    pub start: Duration,
    pub stats: TimerStats,
    /// Achieved contention bandwidth; None for sleep (bit 0) windows.
    pub bandwidth: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct TransmitLog {
    pub entries: Vec<TxEntry>,
}

impl TransmitLog {
    /// Windows (ns, half-open) during which contention was generated.
    pub fn contention_windows(&self) -> Vec<(u64, u64)> {
        self.entries
            .iter()
            .filter(|e| e.bit)
            .map(|e| {
                let a = e.start.as_nanos() as u64;
                (a, a + e.stats.achieved.as_nanos() as u64)
            })
            .collect()
    }
}

/// Runs the transmitter: waits for the start epoch, then contends or
/// sleeps through one bit interval per bit, against absolute deadlines.
pub fn transmit(
    bits: &Bitstream,
    cfg: &ChannelConfig,
    kernel: &mut dyn ContentionKernel,
    timer: &Timer,
) -> Result<TransmitLog> {
    cfg.validate()?;
    let start = cfg.start_epoch;
    let now = timer.now();
    if now > start {
        return Err(Error::MissedStartEpoch { start, now });
    }
    timer.precise_sleep_until(start);
    let interval = cfg.bit_interval();
    let mut log = TransmitLog::default();
    for (i, bit) in bits.iter().enumerate() {
        let deadline = start + interval * (i as u32 + 1);
        let begun = timer.now();
        let (stats, bandwidth) = if bit {
            let (bw, stats) = timer.contend_until(deadline, kernel)?;
            (stats, Some(bw))
        } else {
            (timer.precise_sleep_until(deadline), None)
        };
        log.entries.push(TxEntry {
            bit,
            start: begun,
            stats,
            bandwidth,
        });
    }
    Ok(log)
}

/// Runs the receiver: starts `rx_early_start` before the agreed epoch,
/// then performs exactly `n_epochs` copy epochs of length T, maintaining
/// the exact running-average normalization.
pub fn receive(
    n_epochs: usize,
    cfg: &ChannelConfig,
    kernel: &mut dyn ContentionKernel,
    timer: &Timer,
) -> Result<Vec<EpochSample>> {
    cfg.validate()?;
    let rx_start = cfg.start_epoch.saturating_sub(cfg.rx_early_start);
    let now = timer.now();
    if now > rx_start {
        return Err(Error::MissedStartEpoch { start: rx_start, now });
    }
    timer.precise_sleep_until(rx_start);
    let n_baseline = cfg.baseline_epochs();
    let t = cfg.epoch_interval;
    let mut samples = Vec::with_capacity(n_epochs);
    let mut average = 0.0f64;
    for i in 0..n_epochs {
        let deadline = rx_start + t * (i as u32 + 1);
        let begun = timer.now();
        let (raw, _stats) = timer.contend_until(deadline, kernel)?;
        // the exact incremental global average update
        average = (average * i as f64 + raw) / (i + 1) as f64;
        samples.push(EpochSample {
            index: i,
            raw_bandwidth: raw,
            running_average: average,
            normalized: raw - average,
            timestamp_us: begun.as_micros() as u64,
            baseline: i < n_baseline,
        });
    }
    Ok(samples)
}

/// Resolves the decode threshold from a policy and the observed baseline.
pub fn resolve_gamma(policy: GammaPolicy, samples: &[EpochSample]) -> Result<f64> {
    match policy {
        GammaPolicy::Fixed(g) => Ok(g),
        GammaPolicy::BaselineStd { factor } => {
            let base: Vec<f64> = samples
                .iter()
                .filter(|s| s.baseline)
                .map(|s| s.raw_bandwidth)
                .collect();
            if base.len() < 2 {
                return Err(Error::CalibrationFailure(
                    "baseline-derived gamma needs at least 2 baseline epochs".into(),
                ));
            }
            let n = base.len() as f64;
            let mean = base.iter().sum::<f64>() / n;
            let var = base.iter().map(|b| (b - mean) * (b - mean)).sum::<f64>() / n;
            Ok(factor * var.sqrt())
        }
        GammaPolicy::BaselineMad { factor } => {
            let mut base: Vec<f64> = samples
                .iter()
                .filter(|s| s.baseline)
                .map(|s| s.raw_bandwidth)
                .collect();
            if base.len() < 2 {
                return Err(Error::CalibrationFailure(
                    "baseline-derived gamma needs at least 2 baseline epochs".into(),
                ));
            }
            base.sort_by(|a, b| a.total_cmp(b));
            let median = base[base.len() / 2];
            let mut devs: Vec<f64> = base.iter().map(|b| (b - median).abs()).collect();
            devs.sort_by(|a, b| a.total_cmp(b));
            let mad = devs[devs.len() / 2];
            // 1.4826 scales MAD to the Gaussian standard deviation
            Ok(factor * 1.4826 * mad)
        }
    }
}

/// Decodes a trace of epoch samples into bits. Baseline samples are
/// skipped; each group of `epochs_per_bit` epoch-symbols collapses by
/// majority vote, ties resolving to the hysteresis state. Pure function:
/// identical inputs give identical bits.
pub fn decode_trace(
    samples: &[EpochSample],
    gamma: f64,
    mode: HysteresisMode,
    epochs_per_bit: u32,
) -> Result<Bitstream> {
    if samples.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if epochs_per_bit == 0 {
        return Err(Error::InvalidParameter("epochs_per_bit must be >= 1".into()));
    }
    let data: Vec<&EpochSample> = samples.iter().filter(|s| !s.baseline).collect();
    let mut state = DecoderState::new(mode);
    let mut bits = Bitstream::new();
    for group in data.chunks(epochs_per_bit as usize) {
        let ones = group
            .iter()
            .filter(|s| state.classify(s.normalized, gamma))
            .count();
        let bit = match (2 * ones).cmp(&group.len()) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => state.bit,
        };
        bits.push(bit);
    }
    Ok(bits)
}

/// Everything a finished session produced.
#[derive(Debug, Clone)]
pub struct SessionResult {
    pub sent: Bitstream,
    pub received: Bitstream,
    pub samples: Vec<EpochSample>,
    pub tx_log: TransmitLog,
    /// Threshold actually used for decoding.
    pub gamma: f64,
    /// Start epoch the session settled on (session-clock instant).
    pub start_epoch: Duration,
    /// Time spent in the data phase (excludes baseline).
    pub data_elapsed: Duration,
    /// True when the session ran on virtual time.
    pub virtual_time: bool,
}

/// Virtual time reserved for kernel calibration before anything starts.
const SIM_CAL_BUDGET: Duration = Duration::from_millis(2);
const SIM_START_MARGIN: Duration = Duration::from_millis(1);

fn find_actor(model: &MemorySystemModel, role: ActorRole) -> Result<ActorId> {
    model
        .actors()
        .iter()
        .position(|a| a.role == role)
        .map(ActorId)
        .ok_or_else(|| Error::UnknownActor(format!("no actor with role {role:?}")))
}

fn shift(instant: Duration, skew_ns: i64) -> Duration {
    if skew_ns >= 0 {
        instant + Duration::from_nanos(skew_ns as u64)
    } else {
        instant.saturating_sub(Duration::from_nanos(skew_ns.unsigned_abs()))
    }
}

/// Runs a complete simulated session.
///
/// The model template must register one transmitter-role and one
/// receiver-role actor (plus any background load). Both engines run for
/// real on virtual clocks: first the transmitter alone, recording the
/// contention windows it actually produced; then the receiver against a
/// replica whose transmitter activity replays those windows. Both engines
/// chase absolute deadlines, so the replay matches a lockstep run up to
/// the scheduler's sub-fine-chunk timing error. `skew_ns` shifts the
/// transmitter's notion of the start epoch to model imperfect clock
/// agreement.
pub fn run_session_sim(
    bits: &Bitstream,
    cfg: &ChannelConfig,
    model_template: &MemorySystemModel,
    skew_ns: i64,
) -> Result<SessionResult> {
    cfg.validate()?;
    let tx_id = find_actor(model_template, ActorRole::Transmitter)?;
    let rx_id = find_actor(model_template, ActorRole::Receiver)?;

    let n_baseline = cfg.baseline_epochs();
    let baseline_span = cfg.epoch_interval * n_baseline as u32;
    let computed_start = SIM_CAL_BUDGET + SIM_START_MARGIN + baseline_span;
    let start_epoch = cfg.start_epoch.max(computed_start);
    // keep the skewed transmitter start inside the session
    if shift(start_epoch, skew_ns) <= SIM_CAL_BUDGET {
        return Err(Error::InvalidParameter(format!(
            "skew {skew_ns} ns pushes the transmitter start before calibration ends"
        )));
    }

    let shared = ChannelConfig {
        start_epoch,
        rx_early_start: baseline_span,
        ..cfg.clone()
    };

    // --- transmitter pass -------------------------------------------------
    let tx_log = {
        let mut model = model_template.fresh_replica();
        // the receiver copies almost continuously; keep its demand in the
        // mix so the transmitter's logged bandwidth is realistic
        model.actor_mut(rx_id)?.activity = Activity::Constant(true);
        model.actor_mut(tx_id)?.activity = Activity::Constant(false);
        let clock = model.clock().clone();
        let model = Rc::new(RefCell::new(model));
        let mut kernel = SimKernel::new(
            Rc::clone(&model),
            tx_id,
            KernelConfig::new(cfg.tx_buffer_size),
        )?;
        calibrate(&mut kernel, SIM_CAL_BUDGET / 2)?;
        let timer = Timer::new(ClockSource::Virtual(clock));
        let tx_cfg = ChannelConfig {
            start_epoch: shift(start_epoch, skew_ns),
            ..shared.clone()
        };
        transmit(bits, &tx_cfg, &mut kernel, &timer)?
    };

    // --- receiver pass ----------------------------------------------------
    let windows = tx_log.contention_windows();
    let (samples, data_elapsed) = {
        let mut model = model_template.fresh_replica();
        model.actor_mut(tx_id)?.activity = Activity::Windows(windows);
        model.actor_mut(rx_id)?.activity = Activity::Constant(true);
        let clock = model.clock().clone();
        let model = Rc::new(RefCell::new(model));
        let mut kernel = SimKernel::new(
            Rc::clone(&model),
            rx_id,
            KernelConfig::new(cfg.rx_buffer_size),
        )?;
        calibrate(&mut kernel, SIM_CAL_BUDGET / 2)?;
        let timer = Timer::new(ClockSource::Virtual(clock));
        let n_epochs = n_baseline + bits.len() * cfg.epochs_per_bit as usize;
        let samples = receive(n_epochs, &shared, &mut kernel, &timer)?;
        let end = timer.now();
        (samples, end.saturating_sub(start_epoch))
    };

    let gamma = if samples.is_empty() {
        match shared.gamma_policy {
            GammaPolicy::Fixed(g) => g,
            _ => 0.0,
        }
    } else {
        resolve_gamma(shared.gamma_policy, &samples)?
    };
    let received = if samples.iter().all(|s| s.baseline) {
        Bitstream::new()
    } else {
        decode_trace(&samples, gamma, shared.hysteresis_mode, shared.epochs_per_bit)?
    };

    Ok(SessionResult {
        sent: bits.clone(),
        received,
        samples,
        tx_log,
        gamma,
        start_epoch,
        data_elapsed,
        virtual_time: true,
    })
}

/// Runs a native session: transmitter and receiver on their own threads
/// and kernels, sharing nothing but the start epoch, contending through
/// actual DRAM. (Fully separate processes are available through the
/// command-line `transmit`/`receive` pair.)
pub fn run_session_native(bits: &Bitstream, cfg: &ChannelConfig, lead: Duration) -> Result<SessionResult> {
    cfg.validate()?;
    let n_baseline = cfg.baseline_epochs();
    let baseline_span = cfg.epoch_interval * n_baseline as u32;
    let n_epochs = n_baseline + bits.len() * cfg.epochs_per_bit as usize;
    let start_epoch = lead + baseline_span;

    let result = std::thread::scope(|scope| -> Result<(TransmitLog, Vec<EpochSample>, Duration)> {
        let tx_cfg = cfg.clone();
        let rx_cfg = cfg.clone();
        let tx_bits = bits.clone();

        let tx_handle = scope.spawn(move || -> Result<TransmitLog> {
            let mut kernel = NativeKernel::new(KernelConfig::new(tx_cfg.tx_buffer_size))?;
            calibrate(&mut kernel, Duration::from_millis(100))?;
            let timer = Timer::new(ClockSource::monotonic());
            // both threads are spawned together, so a shared lead on their
            // own clocks stands in for the wall-clock agreement
            let cfg = ChannelConfig {
                start_epoch,
                ..tx_cfg
            };
            transmit(&tx_bits, &cfg, &mut kernel, &timer)
        });
        let rx_handle = scope.spawn(move || -> Result<(Vec<EpochSample>, Duration)> {
            let mut kernel = NativeKernel::new(KernelConfig::new(rx_cfg.rx_buffer_size))?;
            calibrate(&mut kernel, Duration::from_millis(100))?;
            let timer = Timer::new(ClockSource::monotonic());
            let cfg = ChannelConfig {
                start_epoch,
                rx_early_start: baseline_span,
                ..rx_cfg
            };
            let samples = receive(n_epochs, &cfg, &mut kernel, &timer)?;
            let end = timer.now();
            Ok((samples, end.saturating_sub(cfg.start_epoch)))
        });

        let tx_log = tx_handle
            .join()
            .map_err(|_| Error::KernelFailure("transmitter thread panicked".into()))??;
        let (samples, data_elapsed) = rx_handle
            .join()
            .map_err(|_| Error::KernelFailure("receiver thread panicked".into()))??;
        Ok((tx_log, samples, data_elapsed))
    });
    let (tx_log, samples, data_elapsed) = result?;

    let gamma = if samples.is_empty() {
        0.0
    } else {
        resolve_gamma(cfg.gamma_policy, &samples)?
    };
    let received = if samples.iter().all(|s| s.baseline) {
        Bitstream::new()
    } else {
        decode_trace(&samples, gamma, cfg.hysteresis_mode, cfg.epochs_per_bit)?
    };

    Ok(SessionResult {
        sent: bits.clone(),
        received,
        samples,
        tx_log,
        gamma,
        start_epoch,
        data_elapsed,
        virtual_time: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitstream::{generate_pattern, PatternKind};
    use crate::chanmodel::ActorProfile;

    fn sample(normalized: f64) -> EpochSample {
        EpochSample {
            index: 0,
            raw_bandwidth: 0.0,
            running_average: 0.0,
            normalized,
            timestamp_us: 0,
            baseline: false,
        }
    }

    fn trace(values: &[f64]) -> Vec<EpochSample> {
        values.iter().map(|&v| sample(v)).collect()
    }

    #[test]
    fn decode_direct_threshold_reading() {
        let bits = decode_trace(&trace(&[5.0, -5.0, 5.0]), 1.0, HysteresisMode::Standard, 1).unwrap();
        assert_eq!(bits.to_string(), "010");
    }

    #[test]
    fn decode_dead_zone_repeats_last_decision() {
        let bits = decode_trace(&trace(&[5.0, 0.0, 0.0]), 1.0, HysteresisMode::Standard, 1).unwrap();
        assert_eq!(bits.to_string(), "000");
        // inverted mode repeats the opposite of the last decision
        let bits = decode_trace(&trace(&[5.0, 0.0, 0.0]), 1.0, HysteresisMode::Inverted, 1).unwrap();
        assert_eq!(bits.to_string(), "011");
    }

    #[test]
    fn decode_all_dead_zone_holds_initial_state() {
        let bits = decode_trace(&trace(&[0.0, 0.0, 0.0, 0.0]), 0.5, HysteresisMode::Standard, 1).unwrap();
        assert_eq!(bits.to_string(), "0000");
        let bits = decode_trace(&trace(&[0.0, 0.0]), 0.5, HysteresisMode::Inverted, 1).unwrap();
        assert_eq!(bits.to_string(), "00");
    }

    #[test]
    fn decode_majority_vote_over_groups() {
        // R=3: groups [-5,-5,+5] -> 1, [+5,+5,-5] -> 0
        let bits = decode_trace(
            &trace(&[-5.0, -5.0, 5.0, 5.0, 5.0, -5.0]),
            1.0,
            HysteresisMode::Standard,
            3,
        )
        .unwrap();
        assert_eq!(bits.to_string(), "10");
    }

    #[test]
    fn decode_tie_resolves_to_state() {
        // R=2 group [+5, -5]: one symbol each; state after the group is 1
        let bits = decode_trace(&trace(&[5.0, -5.0]), 1.0, HysteresisMode::Standard, 2).unwrap();
        assert_eq!(bits.to_string(), "1");
    }

    #[test]
    fn decode_skips_baseline_samples() {
        let mut t = trace(&[-9.0, 5.0, -5.0]);
        t[0].baseline = true;
        let bits = decode_trace(&t, 1.0, HysteresisMode::Standard, 1).unwrap();
        assert_eq!(bits.to_string(), "01");
    }

    #[test]
    fn decode_empty_trace_is_an_error() {
        assert!(matches!(
            decode_trace(&[], 1.0, HysteresisMode::Standard, 1),
            Err(Error::EmptyTrace)
        ));
    }

    #[test]
    fn gamma_zero_reduces_to_sign_threshold() {
        let values = [0.5, -0.25, 3.0, -4.0, 0.125];
        let bits = decode_trace(&trace(&values), 0.0, HysteresisMode::Standard, 1).unwrap();
        let expected: String = values.iter().map(|v| if *v < 0.0 { '1' } else { '0' }).collect();
        assert_eq!(bits.to_string(), expected);
    }

    #[test]
    fn empty_message_yields_baseline_only_trace() {
        let mut m = MemorySystemModel::default_calibration();
        m.total_bandwidth = 10.0e9;
        m.register_actor(ActorProfile::cpu_receiver(4.0e9));
        m.register_actor(ActorProfile::new("tx", 5.0e9, ActorRole::Transmitter));
        let cfg = ChannelConfig {
            rx_early_start: Duration::from_millis(1),
            gamma_policy: GammaPolicy::Fixed(1.0e8),
            ..ChannelConfig::new(Duration::from_micros(500), 1)
        };
        let result = run_session_sim(&generate_pattern(PatternKind::AllZero, 0), &cfg, &m, 0).unwrap();
        assert!(result.received.is_empty());
        assert_eq!(result.samples.len(), 2);
        assert!(result.samples.iter().all(|s| s.baseline));
    }

    #[test]
    fn silent_transmitter_normalizes_to_zero() {
        let mut m = MemorySystemModel::default_calibration();
        m.total_bandwidth = 10.0e9;
        m.register_actor(ActorProfile::cpu_receiver(4.0e9));
        m.register_actor(ActorProfile::new("tx", 10.0e9, ActorRole::Transmitter));
        let cfg = ChannelConfig {
            rx_early_start: Duration::from_millis(1),
            gamma_policy: GammaPolicy::Fixed(1.0e8),
            ..ChannelConfig::new(Duration::from_micros(500), 1)
        };
        // all-zero bits keep the transmitter idle throughout
        let result = run_session_sim(&generate_pattern(PatternKind::AllZero, 10), &cfg, &m, 0).unwrap();
        assert_eq!(result.samples.len(), 2 + 10);
        for s in &result.samples {
            assert!(
                s.normalized.abs() <= 4.0e9 * 1e-3,
                "epoch {} normalized {} too far from 0",
                s.index,
                s.normalized
            );
        }
        assert_eq!(result.received.to_string(), "0000000000");
    }

    #[test]
    fn contending_transmitter_depresses_normalized_bandwidth() {
        let mut m = MemorySystemModel::default_calibration();
        m.total_bandwidth = 100.0e9;
        m.register_actor(ActorProfile::cpu_receiver(10.0e9));
        // 20% utilization -> 10% slowdown at the calibration anchor
        m.register_actor(ActorProfile::new("tx", 20.0e9, ActorRole::Transmitter));
        let cfg = ChannelConfig {
            rx_early_start: Duration::from_millis(1),
            gamma_policy: GammaPolicy::Fixed(0.2e9),
            ..ChannelConfig::new(Duration::from_micros(500), 1)
        };
        let bits: Bitstream = "0101".parse().unwrap();
        let result = run_session_sim(&bits, &cfg, &m, 0).unwrap();
        let data: Vec<_> = result.samples.iter().filter(|s| !s.baseline).collect();
        assert!(data[1].normalized < 0.0 && data[3].normalized < 0.0);
        assert_eq!(result.received, bits);
    }

    #[test]
    fn transmit_misses_past_start_epoch() {
        let mut m = MemorySystemModel::default_calibration();
        let tx = m.register_actor(ActorProfile::new("tx", 10.0e9, ActorRole::Transmitter));
        let clock = m.clock().clone();
        clock.advance(Duration::from_secs(1));
        let model = Rc::new(RefCell::new(m));
        let mut kernel = SimKernel::new(model, tx, KernelConfig::new(1 << 20)).unwrap();
        let timer = Timer::new(ClockSource::Virtual(clock));
        let cfg = ChannelConfig {
            start_epoch: Duration::from_millis(1),
            ..ChannelConfig::new(Duration::from_millis(1), 1)
        };
        let bits: Bitstream = "1".parse().unwrap();
        assert!(matches!(
            transmit(&bits, &cfg, &mut kernel, &timer),
            Err(Error::MissedStartEpoch { .. })
        ));
    }

    #[test]
    fn transmitter_timeline_follows_bit_intervals() {
        let mut m = MemorySystemModel::default_calibration();
        m.total_bandwidth = 10.0e9;
        m.register_actor(ActorProfile::cpu_receiver(4.0e9));
        m.register_actor(ActorProfile::new("tx", 5.0e9, ActorRole::Transmitter));
        let cfg = ChannelConfig {
            rx_early_start: Duration::from_millis(1),
            gamma_policy: GammaPolicy::Fixed(1.0e8),
            ..ChannelConfig::new(Duration::from_millis(10), 1)
        };
        let bits: Bitstream = "101".parse().unwrap();
        let result = run_session_sim(&bits, &cfg, &m, 0).unwrap();
        let log = &result.tx_log;
        assert_eq!(log.entries.len(), 3);
        assert!(log.entries[0].bit && !log.entries[1].bit && log.entries[2].bit);
        for e in &log.entries {
            // each window within one fine chunk of the 10 ms interval
            assert!(
                e.stats.error_ns.unsigned_abs() <= 10_000_000 / 1000 + 1,
                "entry error {} ns",
                e.stats.error_ns
            );
        }
        assert_eq!(log.contention_windows().len(), 2);
        assert_eq!(result.received, bits);
    }

    #[test]
    fn one_bit_with_r3_contends_one_triple_interval() {
        let mut m = MemorySystemModel::default_calibration();
        m.total_bandwidth = 10.0e9;
        m.register_actor(ActorProfile::cpu_receiver(4.0e9));
        m.register_actor(ActorProfile::new("tx", 5.0e9, ActorRole::Transmitter));
        let cfg = ChannelConfig {
            rx_early_start: Duration::from_millis(1),
            gamma_policy: GammaPolicy::Fixed(1.0e8),
            ..ChannelConfig::new(Duration::from_millis(5), 3)
        };
        let bits: Bitstream = "1".parse().unwrap();
        let result = run_session_sim(&bits, &cfg, &m, 0).unwrap();
        assert_eq!(result.tx_log.entries.len(), 1);
        let e = &result.tx_log.entries[0];
        assert_eq!(e.stats.requested, Duration::from_millis(15));
        assert_eq!(result.received.to_string(), "1");
    }

    #[test]
    fn gamma_from_baseline_std() {
        let mut samples = trace(&[0.0; 4]);
        for (i, s) in samples.iter_mut().enumerate() {
            s.baseline = true;
            s.raw_bandwidth = [10.0, 12.0, 8.0, 10.0][i];
        }
        let g = resolve_gamma(GammaPolicy::BaselineStd { factor: 2.0 }, &samples).unwrap();
        let std = (2.0f64).sqrt(); // population stddev of the four values
        assert!((g - 2.0 * std).abs() < 1e-12);
        let fixed = resolve_gamma(GammaPolicy::Fixed(3.5), &samples).unwrap();
        assert_eq!(fixed, 3.5);
    }

    #[test]
    fn decoder_state_assignment_differs_by_mode() {
        let mut std_state = DecoderState::new(HysteresisMode::Standard);
        std_state.classify(10.0, 1.0); // emits 0
        assert!(!std_state.bit);
        let mut inv_state = DecoderState::new(HysteresisMode::Inverted);
        inv_state.classify(10.0, 1.0); // emits 0, remembers 1
        assert!(inv_state.bit);
    }
}
