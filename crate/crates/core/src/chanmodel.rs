//! Shared-DRAM contention model.
//!
//! The simulator reduces a memory system to the parts the channel can
//! observe: a total bandwidth budget, a curve mapping transmitter
//! memory-controller utilization to receiver slowdown, and a noise model
//! with Gaussian jitter plus occasional outliers. Actors declare the
//! bandwidth they would achieve alone; the model hands back what they
//! actually get under contention.
//!
//! The model is driven single-threaded on a [`VirtualClock`]; parallel
//! experiments run independent model instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::time::Duration;

use crate::clock::VirtualClock;
use crate::error::{Error, Result};

/// Monotone piecewise-linear map. Inputs below the first or above the last
/// anchor clamp to the boundary values.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    points: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("curve needs at least one point".into()));
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidParameter(format!(
                    "curve x values must be strictly increasing ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        Ok(Self { points })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let pts = &self.points;
        if x <= pts[0].0 {
            return pts[0].1;
        }
        if x >= pts[pts.len() - 1].0 {
            return pts[pts.len() - 1].1;
        }
        for w in pts.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if x <= x1 {
                let t = (x - x0) / (x1 - x0);
                return y0 + t * (y1 - y0);
            }
        }
        unreachable!("x within range but no segment matched")
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn is_monotone_non_decreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].1 >= w[0].1)
    }
}

/// Multiplicative bandwidth noise, drawn once per `interval` of virtual
/// time per actor. A draw is Gaussian around 1; with probability
/// `outlier_probability` the epoch additionally loses `outlier_magnitude`
/// of its bandwidth (the long-tail events seen in measured distributions).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub gaussian_sigma: f64,
    pub outlier_probability: f64,
    pub outlier_magnitude: f64,
    pub seed: u64,
    pub interval: Duration,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            gaussian_sigma: 0.0,
            outlier_probability: 0.0,
            outlier_magnitude: 0.0,
            seed: 0,
            interval: Duration::from_micros(100),
        }
    }

    pub fn is_noiseless(&self) -> bool {
        self.gaussian_sigma == 0.0 && self.outlier_probability == 0.0
    }

    fn validate(&self) -> Result<()> {
        if self.gaussian_sigma < 0.0 || self.outlier_magnitude < 0.0 {
            return Err(Error::InvalidParameter("noise fractions must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.outlier_probability) {
            return Err(Error::InvalidParameter("outlier_probability must be in [0,1]".into()));
        }
        if !self.is_noiseless() && self.interval.is_zero() {
            return Err(Error::InvalidParameter("noise interval must be positive".into()));
        }
        Ok(())
    }

    /// Deterministic multiplier for one (actor, interval) cell.
    fn multiplier(&self, actor: usize, interval_index: u64) -> f64 {
        if self.is_noiseless() {
            return 1.0;
        }
        let tag = splitmix64(self.seed ^ splitmix64(actor as u64 + 0x5151));
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(tag ^ interval_index));
        let z: f64 = rng.sample(StandardNormal);
        let mut m = 1.0 + self.gaussian_sigma * z;
        if rng.random::<f64>() < self.outlier_probability {
            m *= 1.0 - self.outlier_magnitude;
        }
        m.max(0.01)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActorRole {
    Transmitter,
    Receiver,
    Background,
}

/// When an actor puts demand on the memory system.
#[derive(Debug, Clone, PartialEq)]
pub enum Activity {
    Constant(bool),
    /// Active inside half-open windows of virtual time (ns).
    Windows(Vec<(u64, u64)>),
    /// Background load toggling on/off: on for `duty` of each period.
    SquareWave { period: Duration, duty: f64 },
}

impl Activity {
    fn active_at(&self, now_ns: u64) -> bool {
        match self {
            Activity::Constant(b) => *b,
            Activity::Windows(ws) => ws.iter().any(|&(a, b)| now_ns >= a && now_ns < b),
            Activity::SquareWave { period, duty } => {
                let p = period.as_nanos().max(1) as u64;
                let phase = (now_ns % p) as f64 / p as f64;
                phase < *duty
            }
        }
    }
}

/// One memory client: the bandwidth it would achieve alone, and when it
/// is active.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorProfile {
    pub name: String,
    pub demand_bandwidth: f64,
    pub activity: Activity,
    pub role: ActorRole,
}

impl ActorProfile {
    pub fn new(name: &str, demand_bandwidth: f64, role: ActorRole) -> Self {
        Self {
            name: name.into(),
            demand_bandwidth,
            activity: Activity::Constant(true),
            role,
        }
    }

    /// CPU-class receiver profile.
    pub fn cpu_receiver(demand_bandwidth: f64) -> Self {
        Self::new("receiver-cpu", demand_bandwidth, ActorRole::Receiver)
    }

    /// GPU-class receiver profile: massively parallel copy engines reach
    /// roughly 4x the bandwidth of a CPU receiver on the same part.
    pub fn gpu_receiver(cpu_demand: f64) -> Self {
        Self::new("receiver-gpu", cpu_demand * 4.0, ActorRole::Receiver)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActorId(pub usize);

/// A per-actor bandwidth reading produced by [`MemorySystemModel::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct ActorReading {
    pub name: String,
    pub bandwidth: f64,
    pub timestamp: Duration,
}

/// The simulated shared memory system.
#[derive(Debug, Clone)]
pub struct MemorySystemModel {
    pub total_bandwidth: f64,
    pub slowdown_curve: PiecewiseLinear,
    /// Transmitter buffer size (bytes) -> memory-controller utilization.
    pub buffer_utilization: PiecewiseLinear,
    pub noise: NoiseModel,
    actors: Vec<ActorProfile>,
    clock: VirtualClock,
    /// Last (interval index, multiplier) per actor; queries walk forward in
    /// time so one cached cell per actor suffices.
    noise_cache: Vec<(u64, f64)>,
}

impl MemorySystemModel {
    pub fn new(
        total_bandwidth: f64,
        slowdown_curve: PiecewiseLinear,
        buffer_utilization: PiecewiseLinear,
        noise: NoiseModel,
    ) -> Result<Self> {
        if total_bandwidth <= 0.0 {
            return Err(Error::DomainError {
                what: "total_bandwidth",
                value: total_bandwidth,
            });
        }
        if !slowdown_curve.is_monotone_non_decreasing() {
            return Err(Error::InvalidParameter(
                "slowdown curve must be monotone non-decreasing".into(),
            ));
        }
        if slowdown_curve.points().iter().any(|&(_, s)| !(0.0..1.0).contains(&s)) {
            return Err(Error::InvalidParameter("slowdown values must lie in [0,1)".into()));
        }
        noise.validate()?;
        Ok(Self {
            total_bandwidth,
            slowdown_curve,
            buffer_utilization,
            noise,
            actors: Vec::new(),
            clock: VirtualClock::new(),
            noise_cache: Vec::new(),
        })
    }

    /// Model calibrated to the measured anchor points: no receiver slowdown
    /// below 10% transmitter utilization, 10% slowdown at 20% utilization,
    /// rising monotonically into the large-buffer regime. Total bandwidth
    /// defaults to a 102 GB/s part.
    pub fn default_calibration() -> Self {
        const MIB: f64 = 1024.0 * 1024.0;
        let slowdown = PiecewiseLinear::new(vec![
            (0.00, 0.00),
            (0.10, 0.00),
            (0.20, 0.10),
            (0.35, 0.25),
            (0.60, 0.40),
            (1.00, 0.55),
        ])
        .expect("static curve");
        let buf_util = PiecewiseLinear::new(vec![
            (0.5 * MIB, 0.01),
            (0.6 * MIB, 0.02),
            (0.8 * MIB, 0.10),
            (1.0 * MIB, 0.13),
            (2.0 * MIB, 0.20),
            (4.0 * MIB, 0.28),
            (8.0 * MIB, 0.40),
            (16.0 * MIB, 0.55),
            (32.0 * MIB, 0.70),
            (64.0 * MIB, 0.82),
            (128.0 * MIB, 0.90),
        ])
        .expect("static curve");
        Self::new(102.0e9, slowdown, buf_util, NoiseModel::none()).expect("static model")
    }

    pub fn clock(&self) -> &VirtualClock {
        &self.clock
    }

    pub fn now(&self) -> Duration {
        self.clock.now()
    }

    /// Replica with the same calibration but fresh time, actors and noise
    /// phase. Used to run independent passes or sweep points.
    pub fn fresh_replica(&self) -> Self {
        let mut m = self.clone();
        m.clock = VirtualClock::new();
        for c in &mut m.noise_cache {
            *c = (u64::MAX, 1.0);
        }
        m
    }

    pub fn register_actor(&mut self, profile: ActorProfile) -> ActorId {
        self.actors.push(profile);
        self.noise_cache.push((u64::MAX, 1.0));
        ActorId(self.actors.len() - 1)
    }

    pub fn actor_id(&self, name: &str) -> Result<ActorId> {
        self.actors
            .iter()
            .position(|a| a.name == name)
            .map(ActorId)
            .ok_or_else(|| Error::UnknownActor(name.into()))
    }

    pub fn actor(&self, id: ActorId) -> Result<&ActorProfile> {
        self.actors
            .get(id.0)
            .ok_or_else(|| Error::UnknownActor(format!("#{}", id.0)))
    }

    pub fn actor_mut(&mut self, id: ActorId) -> Result<&mut ActorProfile> {
        self.actors
            .get_mut(id.0)
            .ok_or_else(|| Error::UnknownActor(format!("#{}", id.0)))
    }

    pub fn actors(&self) -> &[ActorProfile] {
        &self.actors
    }

    pub fn slowdown_at(&self, tx_utilization: f64) -> f64 {
        self.slowdown_curve.eval(tx_utilization)
    }

    pub fn utilization_for_buffer(&self, buffer_bytes: u64) -> f64 {
        self.buffer_utilization.eval(buffer_bytes as f64)
    }

    pub fn demand_for_buffer(&self, buffer_bytes: u64) -> f64 {
        self.utilization_for_buffer(buffer_bytes) * self.total_bandwidth
    }

    /// Combined utilization of all transmitters active at `now_ns`.
    fn tx_utilization_at(&self, now_ns: u64) -> f64 {
        let demand: f64 = self
            .actors
            .iter()
            .filter(|a| a.role == ActorRole::Transmitter && a.activity.active_at(now_ns))
            .map(|a| a.demand_bandwidth)
            .sum();
        (demand / self.total_bandwidth).min(1.0)
    }

    /// Contention-resolved bandwidth for `id` at the current virtual time,
    /// before noise. The queried actor is treated as active (a copy in
    /// flight is activity by definition); receivers lose the slowdown
    /// fraction set by transmitter utilization, then everything scales
    /// proportionally if demands exceed the total budget.
    pub fn achieved_bandwidth(&self, id: ActorId) -> Result<f64> {
        let queried = self.actor(id)?;
        let now_ns = self.clock.now_ns();
        let u_tx = self.tx_utilization_at(now_ns);
        let slow = self.slowdown_curve.eval(u_tx);

        let base = |a: &ActorProfile| -> f64 {
            match a.role {
                ActorRole::Receiver => a.demand_bandwidth * (1.0 - slow),
                _ => a.demand_bandwidth,
            }
        };

        let mut sum = 0.0;
        for (i, a) in self.actors.iter().enumerate() {
            if i == id.0 || a.activity.active_at(now_ns) {
                sum += base(a);
            }
        }
        let scale = if sum > self.total_bandwidth {
            self.total_bandwidth / sum
        } else {
            1.0
        };
        Ok(base(queried) * scale)
    }

    /// Achieved bandwidth with the per-interval noise multiplier applied.
    /// This is what simulated kernels observe.
    pub fn sample_bandwidth(&mut self, id: ActorId) -> Result<f64> {
        let base = self.achieved_bandwidth(id)?;
        if self.noise.is_noiseless() {
            return Ok(base);
        }
        let k = self.clock.now_ns() / self.noise.interval.as_nanos().max(1) as u64;
        let cached = self.noise_cache[id.0];
        let m = if cached.0 == k {
            cached.1
        } else {
            let m = self.noise.multiplier(id.0, k);
            self.noise_cache[id.0] = (k, m);
            m
        };
        Ok(base * m)
    }

    pub fn advance(&mut self, dt: Duration) {
        self.clock.advance(dt);
    }

    /// Event-loop driver: reads every active actor's noisy bandwidth, then
    /// advances the virtual clock by `dt`.
    pub fn step(&mut self, dt: Duration) -> Result<Vec<ActorReading>> {
        let now = self.clock.now();
        let now_ns = self.clock.now_ns();
        let ids: Vec<ActorId> = (0..self.actors.len())
            .map(ActorId)
            .filter(|id| self.actors[id.0].activity.active_at(now_ns))
            .collect();
        let mut readings = Vec::with_capacity(ids.len());
        for id in ids {
            let bw = self.sample_bandwidth(id)?;
            readings.push(ActorReading {
                name: self.actors[id.0].name.clone(),
                bandwidth: bw,
                timestamp: now,
            });
        }
        self.clock.advance(dt);
        Ok(readings)
    }
}
