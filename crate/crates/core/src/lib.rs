//! Covert channel toolkit for shared-DRAM memory contention.
//!
//! Two cooperating processes that may not talk to each other can still
//! communicate through the memory system they share: the transmitter
//! modulates DRAM contention on-off per bit, and the receiver watches its
//! own copy bandwidth and decodes the dips. This crate provides the whole
//! stack at desk scale:
//!
//! - [`bitstream`]: payload framing and bit-error scoring
//! - [`timing`]: precise sleep and deadline-driven contention windows
//! - [`kernel`]: streaming-copy contention kernels, native and simulated
//! - [`chanmodel`]: a calibrated shared-DRAM contention simulator
//! - [`txrx`]: the transmitter/receiver engines and hysteresis decoder
//! - [`eval`]: experiments, sweeps, traces and reports
//! - [`config`]: the shared plain-text config both endpoints load

pub mod bitstream;
pub mod chanmodel;
pub mod clock;
pub mod config;
pub mod error;
pub mod eval;
pub mod kernel;
pub mod timing;
pub mod txrx;

pub use bitstream::{bit_error_rate, decode_text, encode_text, generate_pattern, Bitstream, PatternKind, PatternSpec};
pub use chanmodel::{ActorProfile, ActorRole, MemorySystemModel, NoiseModel, PiecewiseLinear};
pub use clock::{ClockSource, MonotonicClock, VirtualClock};
pub use error::{Error, Result};
pub use eval::{channel_capacity, SweepSpec, TransmissionReport};
pub use kernel::{ContentionKernel, CopySample, KernelConfig, NativeKernel, SimKernel};
pub use timing::{calibrate, Calibration, ContendForPlan, ErrorStats, Timer, TimerStats};
pub use txrx::{ChannelConfig, DecoderState, EpochSample, GammaPolicy, HysteresisMode, SessionResult};
