//! Plain-text configuration files.
//!
//! The channel config is the pre-agreement artifact: transmitter and
//! receiver load the identical file and derive their schedules from it,
//! with no other coordination. Sweep specs reuse the same key-value
//! syntax. All formats carry a versioned header line and stay diffable.
//!
//! Config schema (`mc3-config v1`), keys and defaults:
//!
//! ```text
//! mc3-config v1
//! epoch_interval_us   = 250        # receiver copy epoch T
//! epochs_per_bit      = 1          # R; bit interval is R x T
//! tx_buffer_bytes     = 2097152
//! rx_buffer_bytes     = 1048576
//! gamma               = baseline_std:2.0   # or fixed:<bytes_per_s> | baseline_mad:<factor>
//! hysteresis_mode     = standard   # or inverted
//! start_epoch_us      = 0          # native: unix us; simulate: virtual us
//! rx_early_start_us   = 1000000
//! seed                = 0
//! # simulation model (omit the whole block for native runs)
//! model.total_bandwidth        = 102e9
//! model.noise.sigma            = 0
//! model.noise.outlier_probability = 0
//! model.noise.outlier_magnitude   = 0
//! model.noise.interval_us      = 100
//! model.noise.seed             = 0
//! model.slowdown_curve         = 0:0, 0.10:0, 0.20:0.10, ...
//! model.buffer_utilization     = 524288:0.01, 2097152:0.20, ...
//! actor = <name> <transmitter|receiver|background> <demand_bytes_per_s>
//! ```

use std::path::Path;
use std::time::Duration;

use crate::chanmodel::{ActorProfile, ActorRole, MemorySystemModel, PiecewiseLinear};
use crate::error::{Error, Result};
use crate::eval::{scenario_by_name, Scenario, SweepParameter, SweepSpec};
use crate::txrx::{ChannelConfig, GammaPolicy, HysteresisMode};

pub const CONFIG_SCHEMA: &str = "mc3-config v1";
pub const SWEEP_SCHEMA: &str = "mc3-sweep v1";

/// A loaded config: the shared protocol parameters, plus the simulated
/// memory system when one is described.
#[derive(Debug, Clone)]
pub struct FileConfig {
    pub channel: ChannelConfig,
    pub model: Option<MemorySystemModel>,
}

impl Default for FileConfig {
    fn default() -> Self {
        Self {
            channel: ChannelConfig::new(Duration::from_micros(250), 1),
            model: None,
        }
    }
}

fn bad(line: usize, msg: impl Into<String>) -> Error {
    Error::Config {
        line,
        msg: msg.into(),
    }
}

fn parse_u64(v: &str, line: usize, what: &str) -> Result<u64> {
    // integers may be written in float notation (e.g. 102e9)
    if let Ok(n) = v.parse::<u64>() {
        return Ok(n);
    }
    let f: f64 = v
        .parse()
        .map_err(|e| bad(line, format!("bad {what} `{v}`: {e}")))?;
    if f < 0.0 || f.fract() != 0.0 {
        return Err(bad(line, format!("{what} must be a non-negative integer, got `{v}`")));
    }
    Ok(f as u64)
}

fn parse_f64(v: &str, line: usize, what: &str) -> Result<f64> {
    v.parse()
        .map_err(|e| bad(line, format!("bad {what} `{v}`: {e}")))
}

fn parse_points(v: &str, line: usize, what: &str) -> Result<PiecewiseLinear> {
    let mut pts = Vec::new();
    for part in v.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (x, y) = part
            .split_once(':')
            .ok_or_else(|| bad(line, format!("{what} points must be x:y, got `{part}`")))?;
        pts.push((
            parse_f64(x.trim(), line, what)?,
            parse_f64(y.trim(), line, what)?,
        ));
    }
    PiecewiseLinear::new(pts).map_err(|e| bad(line, format!("{what}: {e}")))
}

fn parse_gamma(v: &str, line: usize) -> Result<GammaPolicy> {
    let (kind, arg) = v
        .split_once(':')
        .ok_or_else(|| bad(line, format!("gamma must be kind:value, got `{v}`")))?;
    let x = parse_f64(arg.trim(), line, "gamma value")?;
    match kind.trim() {
        "fixed" => Ok(GammaPolicy::Fixed(x)),
        "baseline_std" => Ok(GammaPolicy::BaselineStd { factor: x }),
        "baseline_mad" => Ok(GammaPolicy::BaselineMad { factor: x }),
        other => Err(bad(
            line,
            format!("unknown gamma policy `{other}` (expected fixed|baseline_std|baseline_mad)"),
        )),
    }
}

fn render_gamma(g: GammaPolicy) -> String {
    match g {
        GammaPolicy::Fixed(x) => format!("fixed:{x}"),
        GammaPolicy::BaselineStd { factor } => format!("baseline_std:{factor}"),
        GammaPolicy::BaselineMad { factor } => format!("baseline_mad:{factor}"),
    }
}

/// Applies one `key = value` pair to a config under construction. The
/// same routine backs both file parsing and command-line overrides.
pub fn apply_key(cfg: &mut FileConfig, key: &str, value: &str, line: usize) -> Result<()> {
    let ensure_model = |cfg: &mut FileConfig| {
        if cfg.model.is_none() {
            cfg.model = Some(MemorySystemModel::default_calibration());
        }
    };
    match key {
        "epoch_interval_us" => {
            cfg.channel.epoch_interval =
                Duration::from_micros(parse_u64(value, line, "epoch_interval_us")?);
        }
        "epochs_per_bit" => {
            cfg.channel.epochs_per_bit = parse_u64(value, line, "epochs_per_bit")? as u32;
        }
        "tx_buffer_bytes" => {
            cfg.channel.tx_buffer_size = parse_u64(value, line, "tx_buffer_bytes")? as usize;
        }
        "rx_buffer_bytes" => {
            cfg.channel.rx_buffer_size = parse_u64(value, line, "rx_buffer_bytes")? as usize;
        }
        "gamma" => cfg.channel.gamma_policy = parse_gamma(value, line)?,
        "hysteresis_mode" => {
            cfg.channel.hysteresis_mode = HysteresisMode::parse(value)
                .map_err(|e| bad(line, e.to_string()))?;
        }
        "start_epoch_us" => {
            cfg.channel.start_epoch =
                Duration::from_micros(parse_u64(value, line, "start_epoch_us")?);
        }
        "rx_early_start_us" => {
            cfg.channel.rx_early_start =
                Duration::from_micros(parse_u64(value, line, "rx_early_start_us")?);
        }
        "seed" => cfg.channel.seed = parse_u64(value, line, "seed")?,
        "model.total_bandwidth" => {
            ensure_model(cfg);
            cfg.model.as_mut().unwrap().total_bandwidth =
                parse_f64(value, line, "total_bandwidth")?;
        }
        "model.noise.sigma" => {
            ensure_model(cfg);
            cfg.model.as_mut().unwrap().noise.gaussian_sigma =
                parse_f64(value, line, "noise sigma")?;
        }
        "model.noise.outlier_probability" => {
            ensure_model(cfg);
            cfg.model.as_mut().unwrap().noise.outlier_probability =
                parse_f64(value, line, "outlier probability")?;
        }
        "model.noise.outlier_magnitude" => {
            ensure_model(cfg);
            cfg.model.as_mut().unwrap().noise.outlier_magnitude =
                parse_f64(value, line, "outlier magnitude")?;
        }
        "model.noise.interval_us" => {
            ensure_model(cfg);
            cfg.model.as_mut().unwrap().noise.interval =
                Duration::from_micros(parse_u64(value, line, "noise interval")?);
        }
        "model.noise.seed" => {
            ensure_model(cfg);
            cfg.model.as_mut().unwrap().noise.seed = parse_u64(value, line, "noise seed")?;
        }
        "model.slowdown_curve" => {
            ensure_model(cfg);
            cfg.model.as_mut().unwrap().slowdown_curve =
                parse_points(value, line, "slowdown curve")?;
        }
        "model.buffer_utilization" => {
            ensure_model(cfg);
            cfg.model.as_mut().unwrap().buffer_utilization =
                parse_points(value, line, "buffer utilization")?;
        }
        "actor" => {
            ensure_model(cfg);
            let parts: Vec<&str> = value.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(bad(line, "actor needs `<name> <role> <demand>`"));
            }
            let role = match parts[1] {
                "transmitter" => ActorRole::Transmitter,
                "receiver" => ActorRole::Receiver,
                "background" => ActorRole::Background,
                other => return Err(bad(line, format!("unknown actor role `{other}`"))),
            };
            let demand = parse_f64(parts[2], line, "actor demand")?;
            cfg.model
                .as_mut()
                .unwrap()
                .register_actor(ActorProfile::new(parts[0], demand, role));
        }
        other => return Err(bad(line, format!("unknown key `{other}`"))),
    }
    Ok(())
}

/// Parses a config document (see module docs for the schema).
pub fn parse_config(text: &str) -> Result<FileConfig> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::SchemaVersion {
            found: "<empty file>".into(),
            expected: CONFIG_SCHEMA.into(),
        })?;
    if header.trim() != CONFIG_SCHEMA {
        return Err(Error::SchemaVersion {
            found: header.into(),
            expected: CONFIG_SCHEMA.into(),
        });
    }
    let mut cfg = FileConfig::default();
    for (i, raw) in lines {
        let line = i + 1;
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let (key, value) = text
            .split_once('=')
            .ok_or_else(|| bad(line, format!("expected key = value, got `{text}`")))?;
        apply_key(&mut cfg, key.trim(), value.trim(), line)?;
    }
    cfg.channel.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<FileConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// Renders a config document that [`parse_config`] reads back.
pub fn render_config(cfg: &FileConfig) -> String {
    let ch = &cfg.channel;
    let mut out = String::new();
    out.push_str(CONFIG_SCHEMA);
    out.push('\n');
    out.push_str(&format!(
        "epoch_interval_us = {}\n\
         epochs_per_bit = {}\n\
         tx_buffer_bytes = {}\n\
         rx_buffer_bytes = {}\n\
         gamma = {}\n\
         hysteresis_mode = {}\n\
         start_epoch_us = {}\n\
         rx_early_start_us = {}\n\
         seed = {}\n",
        ch.epoch_interval.as_micros(),
        ch.epochs_per_bit,
        ch.tx_buffer_size,
        ch.rx_buffer_size,
        render_gamma(ch.gamma_policy),
        ch.hysteresis_mode.as_str(),
        ch.start_epoch.as_micros(),
        ch.rx_early_start.as_micros(),
        ch.seed,
    ));
    if let Some(model) = &cfg.model {
        out.push_str(&format!(
            "model.total_bandwidth = {}\n\
             model.noise.sigma = {}\n\
             model.noise.outlier_probability = {}\n\
             model.noise.outlier_magnitude = {}\n\
             model.noise.interval_us = {}\n\
             model.noise.seed = {}\n",
            model.total_bandwidth,
            model.noise.gaussian_sigma,
            model.noise.outlier_probability,
            model.noise.outlier_magnitude,
            model.noise.interval.as_micros(),
            model.noise.seed,
        ));
        let curve = |p: &PiecewiseLinear| -> String {
            p.points()
                .iter()
                .map(|(x, y)| format!("{x}:{y}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        out.push_str(&format!(
            "model.slowdown_curve = {}\n\
             model.buffer_utilization = {}\n",
            curve(&model.slowdown_curve),
            curve(&model.buffer_utilization),
        ));
        for a in model.actors() {
            let role = match a.role {
                ActorRole::Transmitter => "transmitter",
                ActorRole::Receiver => "receiver",
                ActorRole::Background => "background",
            };
            out.push_str(&format!("actor = {} {} {}\n", a.name, role, a.demand_bandwidth));
        }
    }
    out
}

pub fn write_config(cfg: &FileConfig, path: &Path) -> Result<()> {
    std::fs::write(path, render_config(cfg))?;
    Ok(())
}

/// Parses a sweep spec document:
///
/// ```text
/// mc3-sweep v1
/// scenario = orin-agx-like:mid
/// parameter = epochs_per_bit
/// values = 1, 2, 3, 5, 10
/// repetitions = 3
/// bits_per_run = 1024
/// seed = 7
/// ```
pub fn parse_sweep_spec(text: &str) -> Result<SweepSpec> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::SchemaVersion {
            found: "<empty file>".into(),
            expected: SWEEP_SCHEMA.into(),
        })?;
    if header.trim() != SWEEP_SCHEMA {
        return Err(Error::SchemaVersion {
            found: header.into(),
            expected: SWEEP_SCHEMA.into(),
        });
    }
    let mut scenario: Option<Scenario> = None;
    let mut parameter: Option<SweepParameter> = None;
    let mut values: Vec<f64> = Vec::new();
    let mut repetitions = 1usize;
    let mut bits_per_run = 256usize;
    let mut seed = 0u64;
    let mut scenario_name: Option<String> = None;
    for (i, raw) in lines {
        let line = i + 1;
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let (key, value) = text
            .split_once('=')
            .ok_or_else(|| bad(line, format!("expected key = value, got `{text}`")))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "scenario" => scenario_name = Some(value.to_string()),
            "parameter" => parameter = Some(SweepParameter::parse(value).map_err(|e| bad(line, e.to_string()))?),
            "values" => {
                values = value
                    .split(',')
                    .map(|v| parse_f64(v.trim(), line, "sweep value"))
                    .collect::<Result<Vec<_>>>()?;
            }
            "repetitions" => repetitions = parse_u64(value, line, "repetitions")? as usize,
            "bits_per_run" => bits_per_run = parse_u64(value, line, "bits_per_run")? as usize,
            "seed" => seed = parse_u64(value, line, "seed")?,
            other => return Err(bad(line, format!("unknown sweep key `{other}`"))),
        }
    }
    let name = scenario_name.ok_or_else(|| Error::InvalidParameter("sweep needs a scenario".into()))?;
    let mut base = scenario.take().unwrap_or(scenario_by_name(&name, seed)?);
    base.seed = seed;
    let spec = SweepSpec {
        parameter: parameter
            .ok_or_else(|| Error::InvalidParameter("sweep needs a parameter".into()))?,
        values,
        repetitions,
        base,
        bits_per_run,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn load_sweep_spec(path: &Path) -> Result<SweepSpec> {
    parse_sweep_spec(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_channel_only() {
        let mut cfg = FileConfig::default();
        cfg.channel.epochs_per_bit = 3;
        cfg.channel.gamma_policy = GammaPolicy::Fixed(8.0e8);
        cfg.channel.seed = 42;
        let text = render_config(&cfg);
        let back = parse_config(&text).unwrap();
        assert_eq!(back.channel, cfg.channel);
        assert!(back.model.is_none());
    }

    #[test]
    fn roundtrip_with_model() {
        let mut cfg = FileConfig::default();
        let mut model = MemorySystemModel::default_calibration();
        model.total_bandwidth = 204.8e9;
        model.noise.gaussian_sigma = 0.0075;
        model.noise.interval = Duration::from_micros(286);
        model.register_actor(ActorProfile::new("rx", 40.0e9, ActorRole::Receiver));
        model.register_actor(ActorProfile::new("tx", 61.44e9, ActorRole::Transmitter));
        cfg.model = Some(model);
        let text = render_config(&cfg);
        let back = parse_config(&text).unwrap();
        let m = back.model.unwrap();
        assert_eq!(m.total_bandwidth, 204.8e9);
        assert_eq!(m.noise.gaussian_sigma, 0.0075);
        assert_eq!(m.actors().len(), 2);
        assert_eq!(m.actors()[1].role, ActorRole::Transmitter);
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(matches!(
            parse_config("mc3-config v2\n"),
            Err(Error::SchemaVersion { .. })
        ));
    }

    #[test]
    fn rejects_unknown_key_with_line_number() {
        let err = parse_config("mc3-config v1\n\nflux_capacitor = 88\n").unwrap_err();
        match err {
            Error::Config { line, .. } => assert_eq!(line, 3),
            other => panic!("expected Config error, got {other:?}"),
        }
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = parse_config(
            "mc3-config v1\n\
             # the agreed schedule\n\
             epoch_interval_us = 500   # half a millisecond\n\
             \n\
             epochs_per_bit = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.channel.epoch_interval, Duration::from_micros(500));
        assert_eq!(cfg.channel.epochs_per_bit, 2);
    }

    #[test]
    fn override_applies_after_load() {
        let mut cfg = parse_config("mc3-config v1\nepoch_interval_us = 250\n").unwrap();
        apply_key(&mut cfg, "epochs_per_bit", "5", 0).unwrap();
        assert_eq!(cfg.channel.epochs_per_bit, 5);
        assert!(apply_key(&mut cfg, "nope", "1", 0).is_err());
    }

    #[test]
    fn sweep_spec_parses() {
        let spec = parse_sweep_spec(
            "mc3-sweep v1\n\
             scenario = noiseless\n\
             parameter = epochs_per_bit\n\
             values = 1, 2, 3\n\
             repetitions = 2\n\
             bits_per_run = 64\n\
             seed = 9\n",
        )
        .unwrap();
        assert_eq!(spec.values, vec![1.0, 2.0, 3.0]);
        assert_eq!(spec.repetitions, 2);
        assert_eq!(spec.base.name, "noiseless");
    }

    #[test]
    fn sweep_spec_requires_fields() {
        assert!(parse_sweep_spec("mc3-sweep v1\nscenario = noiseless\n").is_err());
        assert!(parse_sweep_spec("mc3-sweep v9\n").is_err());
    }
}
