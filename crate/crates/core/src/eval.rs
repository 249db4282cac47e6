//! Experiment harness: scenarios, reports, sweeps and trace files.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::Duration;

use crate::bitstream::{bit_error_rate, encode_text, generate_pattern, Bitstream, PatternKind};
use crate::chanmodel::{ActorProfile, ActorRole, MemorySystemModel, NoiseModel};
use crate::error::{Error, Result};
use crate::txrx::{
    run_session_native, run_session_sim, ChannelConfig, EpochSample, GammaPolicy, SessionResult,
};

pub const TRACE_SCHEMA: &str = "mc3-trace v1";
pub const RESULTS_SCHEMA: &str = "mc3-results v1";
pub const XY_SCHEMA: &str = "mc3-xy v1";

// ---------------------------------------------------------------------------
// Capacity model
// ---------------------------------------------------------------------------

/// Analytical channel capacity: the reciprocal of (time to transmit one
/// symbol x receiver slowdown). Bigger buffers take longer to copy and
/// slow the receiver more, so capacity falls on both counts.
pub fn channel_capacity(time_tx: f64, slowdown_rec: f64) -> Result<f64> {
    if !(time_tx > 0.0) {
        return Err(Error::DomainError {
            what: "time_tx",
            value: time_tx,
        });
    }
    if !(slowdown_rec > 0.0) {
        return Err(Error::DomainError {
            what: "slowdown_rec",
            value: slowdown_rec,
        });
    }
    Ok(1.0 / (time_tx * slowdown_rec))
}

/// Analytical capacity across transmitter buffer sizes under a model's
/// calibration: copy time grows linearly with the buffer, slowdown follows
/// the buffer-to-utilization table.
pub fn analytical_capacity_sweep(
    model: &MemorySystemModel,
    buffer_sizes: &[u64],
    tx_copy_bandwidth: f64,
) -> Result<Vec<(u64, f64)>> {
    if !(tx_copy_bandwidth > 0.0) {
        return Err(Error::DomainError {
            what: "tx_copy_bandwidth",
            value: tx_copy_bandwidth,
        });
    }
    buffer_sizes
        .iter()
        .map(|&b| {
            let time_tx = b as f64 / tx_copy_bandwidth;
            let slowdown = model.slowdown_at(model.utilization_for_buffer(b));
            channel_capacity(time_tx, slowdown).map(|c| (b, c))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

/// Which backend a scenario runs on.
#[derive(Debug, Clone)]
pub enum Backend {
    Sim(MemorySystemModel),
    Native { lead: Duration },
}

/// A fully specified experiment setup.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub cfg: ChannelConfig,
    pub backend: Backend,
    /// Transmitter clock offset relative to the agreed start (ns).
    pub skew_ns: i64,
    pub seed: u64,
}

/// Calibrated operating points trading capacity against accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatingPoint {
    /// Small transmitter buffer, shallow contention: fastest, noisiest.
    HighCapacity,
    /// Mid-size buffer: ~55% of peak capacity at high accuracy.
    Mid,
    /// Deep contention and 3 epochs per bit: ~20% of peak capacity,
    /// near-perfect accuracy.
    Reliability,
}

impl OperatingPoint {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "high" => Ok(Self::HighCapacity),
            "mid" => Ok(Self::Mid),
            "reliability" => Ok(Self::Reliability),
            other => Err(Error::InvalidParameter(format!(
                "unknown operating point `{other}` (expected high|mid|reliability)"
            ))),
        }
    }
}

fn receiver_scaled_gamma(demand: f64, fraction: f64) -> GammaPolicy {
    GammaPolicy::Fixed(fraction * demand)
}

/// Noiseless deterministic scenario on the default-calibrated part.
/// The channel decodes perfectly here; it anchors identity tests.
pub fn noiseless(seed: u64) -> Scenario {
    let mut model = MemorySystemModel::default_calibration();
    let rx_demand = 20.0e9;
    model.register_actor(ActorProfile::cpu_receiver(rx_demand));
    // ~43% utilization, 30% receiver slowdown under the default curve
    model.register_actor(ActorProfile::new(
        "transmitter",
        44.2e9,
        ActorRole::Transmitter,
    ));
    let t = Duration::from_micros(250);
    let cfg = ChannelConfig {
        tx_buffer_size: 10 << 20,
        rx_buffer_size: 1 << 20,
        gamma_policy: receiver_scaled_gamma(rx_demand, 0.02),
        rx_early_start: t * 4,
        start_epoch: t * 40,
        seed,
        ..ChannelConfig::new(t, 1)
    };
    Scenario {
        name: "noiseless".into(),
        cfg,
        backend: Backend::Sim(model),
        skew_ns: 0,
        seed,
    }
}

/// Noiseless scenario tuned for desynchronization studies: the threshold
/// is raised into the partial-overlap band, so epochs that straddle a bit
/// boundary fall into the dead zone instead of resolving by sign.
pub fn noiseless_skew(seed: u64) -> Scenario {
    let mut s = noiseless(seed);
    s.name = "noiseless-skew".into();
    s.cfg.gamma_policy = receiver_scaled_gamma(20.0e9, 0.06);
    s
}

/// Calibrated noisy scenario shaped like a 204.8 GB/s part with a
/// GPU-class receiver, at one of three operating points.
pub fn orin_agx_like(point: OperatingPoint, seed: u64) -> Scenario {
    let total = 204.8e9;
    let rx_demand = 40.0e9; // GPU-class receiver
    let (name, t, r, utilization, sigma) = match point {
        OperatingPoint::HighCapacity => {
            ("orin-agx-like:high", Duration::from_micros(156), 1, 0.23, 0.035)
        }
        OperatingPoint::Mid => ("orin-agx-like:mid", Duration::from_micros(286), 1, 0.30, 0.0075),
        OperatingPoint::Reliability => {
            ("orin-agx-like:reliability", Duration::from_micros(256), 3, 0.35, 0.0075)
        }
    };
    let mut model = MemorySystemModel::default_calibration();
    model.total_bandwidth = total;
    model.noise = NoiseModel {
        gaussian_sigma: sigma,
        outlier_probability: 0.005,
        outlier_magnitude: 0.5,
        seed,
        interval: t,
    };
    model.register_actor(ActorProfile::gpu_receiver(rx_demand / 4.0));
    model.register_actor(ActorProfile::new(
        "transmitter",
        utilization * total,
        ActorRole::Transmitter,
    ));
    // buffer sizes roughly consistent with the utilization, per the
    // default buffer-to-utilization table
    let tx_buffer = match point {
        OperatingPoint::HighCapacity => 5 << 20,
        OperatingPoint::Mid => 9 << 20,
        OperatingPoint::Reliability => 13 << 20,
    };
    let cfg = ChannelConfig {
        tx_buffer_size: tx_buffer,
        rx_buffer_size: 1 << 20,
        gamma_policy: receiver_scaled_gamma(rx_demand, 0.02),
        rx_early_start: t * 2,
        start_epoch: t * 40,
        seed,
        ..ChannelConfig::new(t, r)
    };
    Scenario {
        name: name.into(),
        cfg,
        backend: Backend::Sim(model),
        skew_ns: 0,
        seed,
    }
}

/// Looks a scenario up by name: `noiseless`, `noiseless-skew`, or
/// `orin-agx-like[:high|:mid|:reliability]`.
pub fn scenario_by_name(name: &str, seed: u64) -> Result<Scenario> {
    match name {
        "noiseless" => Ok(noiseless(seed)),
        "noiseless-skew" => Ok(noiseless_skew(seed)),
        "orin-agx-like" => Ok(orin_agx_like(OperatingPoint::Mid, seed)),
        other => {
            if let Some(point) = other.strip_prefix("orin-agx-like:") {
                Ok(orin_agx_like(OperatingPoint::parse(point)?, seed))
            } else {
                Err(Error::InvalidParameter(format!(
                    "unknown scenario `{other}` (expected noiseless|noiseless-skew|orin-agx-like[:point])"
                )))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Session scorecard.
#[derive(Debug, Clone)]
pub struct TransmissionReport {
    pub scenario: String,
    pub bits_sent: usize,
    pub bits_correct: usize,
    pub ber: f64,
    /// Defined as 1 - ber, so the pair always sums to exactly 1.
    pub accuracy: f64,
    /// Measured bits per second of data-phase time.
    pub channel_capacity_bps: f64,
    /// Mean receiver slowdown during transmitted 1s relative to quiet
    /// epochs; 0 when either population is empty.
    pub mean_slowdown: f64,
    pub elapsed: Duration,
    pub virtual_time: bool,
    pub gamma: f64,
    pub config: ChannelConfig,
}

impl TransmissionReport {
    pub fn from_session(scenario: &str, cfg: &ChannelConfig, session: &SessionResult) -> Result<Self> {
        let ber = bit_error_rate(&session.sent, &session.received)?;
        let accuracy = 1.0 - ber;
        let bits_sent = session.sent.len();
        let errors = (ber * bits_sent as f64).round() as usize;
        let elapsed_s = session.data_elapsed.as_secs_f64();
        let channel_capacity_bps = if bits_sent == 0 || elapsed_s <= 0.0 {
            0.0
        } else {
            bits_sent as f64 / elapsed_s
        };
        Ok(Self {
            scenario: scenario.into(),
            bits_sent,
            bits_correct: bits_sent - errors,
            ber,
            accuracy,
            channel_capacity_bps,
            mean_slowdown: mean_slowdown(session, cfg),
            elapsed: session.data_elapsed,
            virtual_time: session.virtual_time,
            gamma: session.gamma,
            config: ChannelConfig {
                start_epoch: session.start_epoch,
                ..cfg.clone()
            },
        })
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{}: {} bits, accuracy {:.4}, ber {:.2e}, capacity {:.1} bit/s ({}), slowdown {:.3}, gamma {:.3e}",
            self.scenario,
            self.bits_sent,
            self.accuracy,
            self.ber,
            self.channel_capacity_bps,
            if self.virtual_time { "virtual" } else { "wall" },
            self.mean_slowdown,
            self.gamma,
        )
    }
}

/// Mean receiver slowdown while the transmitter held a 1, against the
/// mean of quiet (baseline and 0-bit) epochs.
fn mean_slowdown(session: &SessionResult, cfg: &ChannelConfig) -> f64 {
    let r = cfg.epochs_per_bit.max(1) as usize;
    let mut quiet = Vec::new();
    let mut contended = Vec::new();
    let mut data_idx = 0usize;
    for s in &session.samples {
        if s.baseline {
            quiet.push(s.raw_bandwidth);
            continue;
        }
        match session.sent.get(data_idx / r) {
            Some(true) => contended.push(s.raw_bandwidth),
            Some(false) => quiet.push(s.raw_bandwidth),
            None => {}
        }
        data_idx += 1;
    }
    if quiet.is_empty() || contended.is_empty() {
        return 0.0;
    }
    let qm = quiet.iter().sum::<f64>() / quiet.len() as f64;
    let cm = contended.iter().sum::<f64>() / contended.len() as f64;
    if qm <= 0.0 {
        0.0
    } else {
        1.0 - cm / qm
    }
}

/// Runs one experiment: realizes the session on the scenario's backend
/// and scores it.
pub fn run_experiment(scenario: &Scenario, bits: &Bitstream) -> Result<TransmissionReport> {
    let session = run_scenario_session(scenario, bits)?;
    TransmissionReport::from_session(&scenario.name, &scenario.cfg, &session)
}

/// Runs the session underlying an experiment and returns it unscored.
pub fn run_scenario_session(scenario: &Scenario, bits: &Bitstream) -> Result<SessionResult> {
    match &scenario.backend {
        Backend::Sim(model) => run_session_sim(bits, &scenario.cfg, model, scenario.skew_ns),
        Backend::Native { lead } => run_session_native(bits, &scenario.cfg, *lead),
    }
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    TxBufferSize,
    RxBufferSize,
    EpochsPerBit,
    NoiseSigma,
    /// Transmitter clock skew, in fractions of the epoch interval.
    Skew,
}

impl SweepParameter {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tx_buffer_size" => Ok(Self::TxBufferSize),
            "rx_buffer_size" => Ok(Self::RxBufferSize),
            "epochs_per_bit" => Ok(Self::EpochsPerBit),
            "noise_sigma" => Ok(Self::NoiseSigma),
            "skew" => Ok(Self::Skew),
            other => Err(Error::InvalidParameter(format!(
                "unknown sweep parameter `{other}`"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::TxBufferSize => "tx_buffer_size",
            Self::RxBufferSize => "rx_buffer_size",
            Self::EpochsPerBit => "epochs_per_bit",
            Self::NoiseSigma => "noise_sigma",
            Self::Skew => "skew",
        }
    }
}

/// One swept parameter over a base scenario.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub repetitions: usize,
    pub base: Scenario,
    /// Balanced-random payload length per run.
    pub bits_per_run: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidParameter("sweep needs at least one value".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidParameter("repetitions must be >= 1".into()));
        }
        Ok(())
    }
}

/// One completed (or failed) sweep point.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub parameter: SweepParameter,
    pub value: f64,
    pub repetition: usize,
    pub seed: u64,
    pub outcome: std::result::Result<TransmissionReport, String>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Applies one sweep value to a replica of the base scenario.
fn apply_parameter(scenario: &mut Scenario, parameter: SweepParameter, value: f64) -> Result<()> {
    match parameter {
        SweepParameter::TxBufferSize => {
            let bytes = value as usize;
            scenario.cfg.tx_buffer_size = bytes;
            if let Backend::Sim(model) = &mut scenario.backend {
                let demand = model.demand_for_buffer(bytes as u64);
                set_role_demand(model, ActorRole::Transmitter, demand)?;
            }
        }
        SweepParameter::RxBufferSize => {
            let bytes = value as usize;
            scenario.cfg.rx_buffer_size = bytes;
            if let Backend::Sim(model) = &mut scenario.backend {
                let demand = model.demand_for_buffer(bytes as u64);
                set_role_demand(model, ActorRole::Receiver, demand)?;
            }
        }
        SweepParameter::EpochsPerBit => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "epochs_per_bit sweep value must be a positive integer, got {value}"
                )));
            }
            scenario.cfg.epochs_per_bit = value as u32;
        }
        SweepParameter::NoiseSigma => {
            if let Backend::Sim(model) = &mut scenario.backend {
                model.noise.gaussian_sigma = value.max(0.0);
                if model.noise.interval.is_zero() {
                    model.noise.interval = scenario.cfg.epoch_interval;
                }
            }
        }
        SweepParameter::Skew => {
            scenario.skew_ns = (value * scenario.cfg.epoch_interval.as_nanos() as f64) as i64;
        }
    }
    Ok(())
}

fn set_role_demand(model: &mut MemorySystemModel, role: ActorRole, demand: f64) -> Result<()> {
    for i in 0..model.actors().len() {
        let id = crate::chanmodel::ActorId(i);
        if model.actor(id)?.role == role {
            model.actor_mut(id)?.demand_bandwidth = demand;
        }
    }
    Ok(())
}

/// Runs every (value, repetition) point. Results are keyed by point, so
/// assembly does not depend on completion order; per-point failures are
/// recorded without aborting the sweep.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepPoint>> {
    spec.validate()?;
    let mut points = Vec::with_capacity(spec.values.len() * spec.repetitions);
    for (vi, &value) in spec.values.iter().enumerate() {
        for rep in 0..spec.repetitions {
            let seed = splitmix64(spec.base.seed ^ ((vi as u64) << 32) ^ rep as u64);
            let mut scenario = spec.base.clone();
            scenario.seed = seed;
            scenario.cfg.seed = seed;
            if let Backend::Sim(model) = &mut scenario.backend {
                model.noise.seed = seed;
            }
            let outcome = apply_parameter(&mut scenario, spec.parameter, value)
                .and_then(|()| {
                    let bits =
                        generate_pattern(PatternKind::BalancedRandom { seed }, spec.bits_per_run);
                    run_experiment(&scenario, &bits)
                })
                .map_err(|e| e.to_string());
            points.push(SweepPoint {
                parameter: spec.parameter,
                value,
                repetition: rep,
                seed,
                outcome,
            });
        }
    }
    Ok(points)
}

// ---------------------------------------------------------------------------
// Hello-World transmission
// ---------------------------------------------------------------------------

/// Outcome of a text transmission, including the rolling-average
/// bandwidth trace (time in ms, bandwidth in bytes/s).
#[derive(Debug, Clone)]
pub struct HelloWorldOutcome {
    pub report: TransmissionReport,
    pub rolling: Vec<(f64, f64)>,
    pub sent_text: Vec<u8>,
    pub decoded_text: Vec<u8>,
}

/// Builds a text payload of `message_bits` (rounded down to whole bytes),
/// transmits it through the scenario and reports accuracy plus the
/// receiver's rolling-average bandwidth over time.
pub fn hello_world(message_bits: usize, scenario: &Scenario) -> Result<HelloWorldOutcome> {
    let n_bytes = message_bits / 8;
    let sent_text: Vec<u8> = b"Hello, World! "
        .iter()
        .copied()
        .cycle()
        .take(n_bytes)
        .collect();
    let bits = encode_text(&sent_text);
    let session = run_scenario_session(scenario, &bits)?;
    let report = TransmissionReport::from_session(&scenario.name, &scenario.cfg, &session)?;
    let decoded_text = crate::bitstream::decode_text(&session.received)?;
    Ok(HelloWorldOutcome {
        report,
        rolling: rolling_average_trace(&session.samples, 16),
        sent_text,
        decoded_text,
    })
}

/// Rolling mean of raw bandwidth over the trailing `window` epochs,
/// plotted against time in milliseconds from the first sample.
pub fn rolling_average_trace(samples: &[EpochSample], window: usize) -> Vec<(f64, f64)> {
    if samples.is_empty() || window == 0 {
        return Vec::new();
    }
    let t0 = samples[0].timestamp_us;
    let mut out = Vec::with_capacity(samples.len());
    let mut sum = 0.0;
    for (i, s) in samples.iter().enumerate() {
        sum += s.raw_bandwidth;
        if i >= window {
            sum -= samples[i - window].raw_bandwidth;
        }
        let n = (i + 1).min(window);
        out.push(((s.timestamp_us - t0) as f64 / 1000.0, sum / n as f64));
    }
    out
}

// ---------------------------------------------------------------------------
// Trace and table files
// ---------------------------------------------------------------------------

/// Writes a trace: versioned header, then one epoch per line.
pub fn export_trace(samples: &[EpochSample], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{TRACE_SCHEMA}")?;
    writeln!(out, "# index timestamp_us raw_bw_bytes_per_s running_avg normalized baseline")?;
    for s in samples {
        writeln!(
            out,
            "{} {} {} {} {} {}",
            s.index,
            s.timestamp_us,
            s.raw_bandwidth,
            s.running_average,
            s.normalized,
            u8::from(s.baseline),
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a trace written by [`export_trace`]; fields round-trip exactly.
pub fn import_trace(path: &Path) -> Result<Vec<EpochSample>> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::SchemaVersion {
            found: "<empty file>".into(),
            expected: TRACE_SCHEMA.into(),
        })?;
    if header.trim() != TRACE_SCHEMA {
        return Err(Error::SchemaVersion {
            found: header,
            expected: TRACE_SCHEMA.into(),
        });
    }
    let mut samples = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::Config {
                line: lineno + 2,
                msg: format!("expected 6 fields, got {}", fields.len()),
            });
        }
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::Config {
                line: lineno + 2,
                msg: format!("bad {what} `{s}`: {e}"),
            })
        };
        let index: usize = fields[0].parse().map_err(|e| Error::Config {
            line: lineno + 2,
            msg: format!("bad index `{}`: {e}", fields[0]),
        })?;
        let timestamp_us: u64 = fields[1].parse().map_err(|e| Error::Config {
            line: lineno + 2,
            msg: format!("bad timestamp `{}`: {e}", fields[1]),
        })?;
        let baseline = match fields[5] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Config {
                    line: lineno + 2,
                    msg: format!("baseline flag must be 0 or 1, got `{other}`"),
                })
            }
        };
        samples.push(EpochSample {
            index,
            timestamp_us,
            raw_bandwidth: parse_f(fields[2], "raw bandwidth")?,
            running_average: parse_f(fields[3], "running average")?,
            normalized: parse_f(fields[4], "normalized bandwidth")?,
            baseline,
        });
    }
    Ok(samples)
}

/// Writes the sweep results table: one row per point, failures included.
pub fn write_results_table(points: &[SweepPoint], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{RESULTS_SCHEMA}")?;
    writeln!(
        out,
        "# parameter value rep seed bits accuracy ber capacity_bps mean_slowdown elapsed_s timebase gamma status"
    )?;
    for p in points {
        match &p.outcome {
            Ok(r) => writeln!(
                out,
                "{} {} {} {} {} {} {} {} {} {} {} {} ok",
                p.parameter.as_str(),
                p.value,
                p.repetition,
                p.seed,
                r.bits_sent,
                r.accuracy,
                r.ber,
                r.channel_capacity_bps,
                r.mean_slowdown,
                r.elapsed.as_secs_f64(),
                if r.virtual_time { "virtual" } else { "wall" },
                r.gamma,
            )?,
            Err(msg) => writeln!(
                out,
                "{} {} {} {} 0 0 0 0 0 0 - 0 failed:{}",
                p.parameter.as_str(),
                p.value,
                p.repetition,
                p.seed,
                msg.replace(char::is_whitespace, "_"),
            )?,
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes a plot-ready x/y series.
pub fn write_xy_series(path: &Path, comment: &str, series: &[(f64, f64)]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{XY_SCHEMA}")?;
    writeln!(out, "# {comment}")?;
    for (x, y) in series {
        writeln!(out, "{x} {y}")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn capacity_formula_cases() {
        // doubling symbol time halves capacity
        let a = channel_capacity(1.0e-3, 0.10).unwrap();
        let b = channel_capacity(2.0e-3, 0.10).unwrap();
        assert_eq!(a, 10_000.0);
        assert_eq!(b, a / 2.0);
        assert!(channel_capacity(0.0, 0.1).is_err());
        assert!(channel_capacity(1.0, 0.0).is_err());
        assert!(channel_capacity(-1.0, 0.1).is_err());
    }

    #[test]
    fn analytical_capacity_decreases_with_buffer() {
        let model = MemorySystemModel::default_calibration();
        let buffers: Vec<u64> = (1..=64).map(|i| i * 2 * 1024 * 1024).collect();
        let sweep = analytical_capacity_sweep(&model, &buffers, 10.0e9).unwrap();
        for w in sweep.windows(2) {
            assert!(
                w[1].1 <= w[0].1,
                "capacity rose from {:?} to {:?}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn noiseless_experiment_is_exact() {
        let scenario = noiseless(7);
        let bits = generate_pattern(PatternKind::BalancedRandom { seed: 7 }, 64);
        let report = run_experiment(&scenario, &bits).unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.ber, 0.0);
        assert_eq!(report.accuracy + report.ber, 1.0);
        assert!(report.virtual_time);
        // measured capacity ~ 1 bit per bit interval
        let nominal = 1.0 / scenario.cfg.bit_interval().as_secs_f64();
        assert!((report.channel_capacity_bps - nominal).abs() / nominal < 0.01);
        assert!(report.mean_slowdown > 0.25 && report.mean_slowdown < 0.35);
    }

    #[test]
    fn empty_message_report() {
        let scenario = noiseless(3);
        let report = run_experiment(&scenario, &Bitstream::new()).unwrap();
        assert_eq!(report.bits_sent, 0);
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.channel_capacity_bps, 0.0);
    }

    #[test]
    fn sweep_runs_all_points_and_keys_them() {
        let mut spec = SweepSpec {
            parameter: SweepParameter::EpochsPerBit,
            values: vec![1.0, 2.0],
            repetitions: 2,
            base: noiseless(11),
            bits_per_run: 16,
        };
        spec.base.cfg.rx_early_start = spec.base.cfg.epoch_interval * 2;
        let points = run_sweep(&spec).unwrap();
        assert_eq!(points.len(), 4);
        for p in &points {
            let r = p.outcome.as_ref().expect("point failed");
            assert_eq!(r.accuracy, 1.0);
        }
        // capacity halves when R doubles
        let c1 = points[0].outcome.as_ref().unwrap().channel_capacity_bps;
        let c2 = points[2].outcome.as_ref().unwrap().channel_capacity_bps;
        assert!((c1 / c2 - 2.0).abs() < 0.05, "c1={c1} c2={c2}");
    }

    #[test]
    fn sweep_rejects_bad_specs() {
        let spec = SweepSpec {
            parameter: SweepParameter::EpochsPerBit,
            values: vec![],
            repetitions: 1,
            base: noiseless(1),
            bits_per_run: 8,
        };
        assert!(run_sweep(&spec).is_err());
    }

    #[test]
    fn trace_roundtrip_is_lossless() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.trace");
        let scenario = noiseless(5);
        let bits = generate_pattern(PatternKind::Alternating, 32);
        let session = run_scenario_session(&scenario, &bits).unwrap();
        export_trace(&session.samples, &path).unwrap();
        let back = import_trace(&path).unwrap();
        assert_eq!(session.samples, back);
    }

    #[test]
    fn trace_rejects_wrong_schema() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.trace");
        std::fs::write(&path, "mc3-trace v9\n0 0 1 1 0 0\n").unwrap();
        assert!(matches!(
            import_trace(&path),
            Err(Error::SchemaVersion { .. })
        ));
    }

    #[test]
    fn hand_written_trace_decodes_as_computed() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("hand.trace");
        std::fs::write(
            &path,
            "mc3-trace v1\n\
             0 0 10 10 5 0\n\
             1 100 10 10 -5 0\n\
             2 200 10 10 5 0\n",
        )
        .unwrap();
        let samples = import_trace(&path).unwrap();
        let bits =
            crate::txrx::decode_trace(&samples, 1.0, crate::txrx::HysteresisMode::Standard, 1)
                .unwrap();
        assert_eq!(bits.to_string(), "010");
    }

    #[test]
    fn results_table_and_xy_files_have_headers() {
        let dir = tempdir().unwrap();
        let rpath = dir.path().join("results.txt");
        let xpath = dir.path().join("xy.txt");
        let mut spec = SweepSpec {
            parameter: SweepParameter::EpochsPerBit,
            values: vec![1.0],
            repetitions: 1,
            base: noiseless(2),
            bits_per_run: 8,
        };
        spec.base.cfg.rx_early_start = spec.base.cfg.epoch_interval * 2;
        let points = run_sweep(&spec).unwrap();
        write_results_table(&points, &rpath).unwrap();
        let text = std::fs::read_to_string(&rpath).unwrap();
        assert!(text.starts_with(RESULTS_SCHEMA));
        assert!(text.contains(" ok"));
        write_xy_series(&xpath, "x y", &[(1.0, 2.0)]).unwrap();
        let text = std::fs::read_to_string(&xpath).unwrap();
        assert!(text.starts_with(XY_SCHEMA));
        assert!(text.contains("1 2"));
    }

    #[test]
    fn hello_world_noiseless_is_perfect() {
        let scenario = noiseless(9);
        let outcome = hello_world(32 * 8, &scenario).unwrap();
        assert_eq!(outcome.report.accuracy, 1.0);
        assert_eq!(outcome.decoded_text, outcome.sent_text);
        assert!(!outcome.rolling.is_empty());
    }

    #[test]
    fn hello_world_empty_message() {
        let scenario = noiseless(9);
        let outcome = hello_world(0, &scenario).unwrap();
        assert_eq!(outcome.report.accuracy, 1.0);
        assert!(outcome.decoded_text.is_empty());
    }

    #[test]
    fn scenario_lookup() {
        assert!(scenario_by_name("noiseless", 1).is_ok());
        assert!(scenario_by_name("noiseless-skew", 1).is_ok());
        assert!(scenario_by_name("orin-agx-like:high", 1).is_ok());
        assert!(scenario_by_name("orin-agx-like:reliability", 1).is_ok());
        assert!(scenario_by_name("warp-drive", 1).is_err());
    }
}
