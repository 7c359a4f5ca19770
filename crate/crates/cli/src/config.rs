//! JSON run configuration: a preset plus optional overrides.
//!
//! Frequencies and rates may be given in rad/s (`*_rad`) or in Hz (`*_hz`,
//! multiplied by 2π). Giving both for one quantity is an error, as is any
//! key not listed here.

use std::f64::consts::PI;
use std::path::Path;

use clocksync::experiments::{Protocol, SweepOptions, TransientSetup};
use clocksync::{CouplingPattern, PhysicalParams};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<String>,
    #[serde(default)]
    pub params: ParamOverrides,
    pub ness: Option<NessConfig>,
    pub sweep: Option<SweepConfig>,
    pub trajectory: Option<TrajectoryConfig>,
    pub transient: Option<TransientConfig>,
    pub modes: Option<ModesConfig>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamOverrides {
    pub omega1_rad: Option<f64>,
    pub omega1_hz: Option<f64>,
    pub omega2_rad: Option<f64>,
    pub omega2_hz: Option<f64>,
    pub gamma1_rad: Option<f64>,
    pub gamma1_hz: Option<f64>,
    pub gamma2_rad: Option<f64>,
    pub gamma2_hz: Option<f64>,
    pub kappa_rad: Option<f64>,
    pub kappa_hz: Option<f64>,
    pub detuning_rad: Option<f64>,
    pub detuning_hz: Option<f64>,
    pub g1_rad: Option<f64>,
    pub g1_hz: Option<f64>,
    pub g2_rad: Option<f64>,
    pub g2_hz: Option<f64>,
    /// Sets `|G1| = |G2| = g_over_kappa·κ` with `coupling_pattern` signs.
    pub g_over_kappa: Option<f64>,
    pub coupling_pattern: Option<CouplingPattern>,
    pub nth1: Option<f64>,
    pub nth2: Option<f64>,
    pub na_in: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NessConfig {
    pub g_over_kappa: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub grid: Option<Vec<f64>>,
    pub grid_max: Option<f64>,
    pub grid_points: Option<usize>,
    pub protocol: Option<Protocol>,
    pub duration: Option<f64>,
    pub dt: Option<f64>,
    pub burn_in_lifetimes: Option<f64>,
    pub readout_window: Option<f64>,
    pub amplitude_floor: Option<f64>,
    pub batches: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub g_over_kappa: Option<f64>,
    pub duration: Option<f64>,
    pub dt: Option<f64>,
    pub segment: Option<usize>,
    pub dump_every: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransientConfig {
    pub g_over_kappa: Option<f64>,
    pub n_traj: Option<usize>,
    pub duration: Option<f64>,
    pub dt: Option<f64>,
    pub record_every: Option<usize>,
    pub chunk: Option<usize>,
    pub smoothing_fraction: Option<f64>,
    pub plateau_fraction: Option<f64>,
    pub plateau_tolerance: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModesConfig {
    pub grid: Option<Vec<f64>>,
    pub grid_max: Option<f64>,
    pub grid_points: Option<usize>,
}

/// Reads a config from a file path, or parses the argument itself when it
/// starts with `{`.
pub fn load(source: &str) -> Result<ConfigFile, CliError> {
    let text = if source.trim_start().starts_with('{') {
        source.to_string()
    } else {
        std::fs::read_to_string(Path::new(source))
            .map_err(|e| CliError::Config(format!("cannot read config `{source}`: {e}")))?
    };
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
}

pub fn preset(name: &str) -> Result<PhysicalParams, CliError> {
    match name {
        "paper" => Ok(PhysicalParams::paper()),
        other => Err(CliError::Config(format!(
            "unknown preset `{other}` (available: paper)"
        ))),
    }
}

fn pick(name: &str, rad: Option<f64>, hz: Option<f64>) -> Result<Option<f64>, CliError> {
    match (rad, hz) {
        (Some(_), Some(_)) => Err(CliError::Config(format!(
            "give either `{name}_rad` or `{name}_hz`, not both"
        ))),
        (Some(r), None) => Ok(Some(r)),
        (None, Some(h)) => Ok(Some(2.0 * PI * h)),
        (None, None) => Ok(None),
    }
}

/// Applies overrides to a preset and validates the result.
pub fn resolve_params(base: PhysicalParams, o: &ParamOverrides) -> Result<PhysicalParams, CliError> {
    let mut p = base;
    if let Some(v) = pick("omega1", o.omega1_rad, o.omega1_hz)? {
        p.omega1 = v;
    }
    if let Some(v) = pick("omega2", o.omega2_rad, o.omega2_hz)? {
        p.omega2 = v;
    }
    if let Some(v) = pick("gamma1", o.gamma1_rad, o.gamma1_hz)? {
        p.gamma1 = v;
    }
    if let Some(v) = pick("gamma2", o.gamma2_rad, o.gamma2_hz)? {
        p.gamma2 = v;
    }
    if let Some(v) = pick("kappa", o.kappa_rad, o.kappa_hz)? {
        p.kappa = v;
    }
    if let Some(v) = pick("detuning", o.detuning_rad, o.detuning_hz)? {
        p.detuning = v;
    }
    let g1 = pick("g1", o.g1_rad, o.g1_hz)?;
    let g2 = pick("g2", o.g2_rad, o.g2_hz)?;
    if o.g_over_kappa.is_some() && (g1.is_some() || g2.is_some()) {
        return Err(CliError::Config(
            "`g_over_kappa` cannot be combined with explicit `g1`/`g2`".into(),
        ));
    }
    if let Some(v) = g1 {
        p.g1 = v;
    }
    if let Some(v) = g2 {
        p.g2 = v;
    }
    if let Some(pattern) = o.coupling_pattern {
        p = p.with_coupling_pattern(o.g_over_kappa.unwrap_or(p.g_over_kappa()), pattern);
    } else if let Some(g) = o.g_over_kappa {
        p = p.with_coupling(g);
    }
    if let Some(v) = o.nth1 {
        p.nth1 = v;
    }
    if let Some(v) = o.nth2 {
        p.nth2 = v;
    }
    if let Some(v) = o.na_in {
        p.na_in = v;
    }
    p.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(p)
}

/// Every value a run actually used, written next to its outputs.
#[derive(Clone, Debug, Serialize)]
pub struct ResolvedConfig {
    pub command: String,
    pub preset: String,
    pub seed: u64,
    pub out: String,
    pub params: ResolvedParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_over_kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepOptions>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transient: Option<TransientSetup>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<ResolvedTrajectory>,
}

/// Physical parameters in rad/s, as used internally.
#[derive(Clone, Debug, Serialize)]
pub struct ResolvedParams {
    pub omega1_rad: f64,
    pub omega2_rad: f64,
    pub gamma1_rad: f64,
    pub gamma2_rad: f64,
    pub kappa_rad: f64,
    pub detuning_rad: f64,
    pub g1_rad: f64,
    pub g2_rad: f64,
    pub nth1: f64,
    pub nth2: f64,
    pub na_in: f64,
}

impl From<&PhysicalParams> for ResolvedParams {
    fn from(p: &PhysicalParams) -> Self {
        Self {
            omega1_rad: p.omega1,
            omega2_rad: p.omega2,
            gamma1_rad: p.gamma1,
            gamma2_rad: p.gamma2,
            kappa_rad: p.kappa,
            detuning_rad: p.detuning,
            g1_rad: p.g1,
            g2_rad: p.g2,
            nth1: p.nth1,
            nth2: p.nth2,
            na_in: p.na_in,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ResolvedTrajectory {
    pub duration: f64,
    pub dt: f64,
    pub segment: usize,
    pub dump_every: usize,
}

/// Sweep options with config values applied over the defaults.
pub fn sweep_options(cfg: Option<&SweepConfig>, seed: u64) -> SweepOptions {
    let mut o = SweepOptions {
        master_seed: seed,
        ..SweepOptions::default()
    };
    if let Some(c) = cfg {
        if let Some(v) = c.protocol {
            o.protocol = v;
        }
        if let Some(v) = c.duration {
            o.duration = v;
        }
        if let Some(v) = c.dt {
            o.dt = v;
        }
        if let Some(v) = c.burn_in_lifetimes {
            o.burn_in_lifetimes = v;
        }
        if let Some(v) = c.readout_window {
            o.readout_window = v;
        }
        if let Some(v) = c.amplitude_floor {
            o.amplitude_floor = v;
        }
        if let Some(v) = c.batches {
            o.batches = v;
        }
    }
    o
}

pub fn transient_setup(cfg: Option<&TransientConfig>) -> TransientSetup {
    let mut s = TransientSetup::default();
    if let Some(c) = cfg {
        if let Some(v) = c.n_traj {
            s.n_traj = v;
        }
        if let Some(v) = c.duration {
            s.duration = v;
        }
        if let Some(v) = c.dt {
            s.dt = v;
        }
        if let Some(v) = c.record_every {
            s.record_every = v;
        }
        if let Some(v) = c.chunk {
            s.chunk = v;
        }
        if let Some(v) = c.smoothing_fraction {
            s.smoothing_fraction = v;
        }
        if let Some(v) = c.plateau_fraction {
            s.plateau_fraction = v;
        }
        if let Some(v) = c.plateau_tolerance {
            s.plateau_tolerance = v;
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hz_and_rad_forms() {
        let cfg = load(r#"{"params": {"kappa_hz": 1e6, "gamma1_rad": 10.0}}"#).unwrap();
        let p = resolve_params(PhysicalParams::paper(), &cfg.params).unwrap();
        assert!((p.kappa - 2.0 * PI * 1e6).abs() < 1e-6);
        assert_eq!(p.gamma1, 10.0);
    }

    #[test]
    fn both_units_rejected() {
        let cfg = load(r#"{"params": {"kappa_hz": 1e6, "kappa_rad": 1e6}}"#).unwrap();
        assert!(resolve_params(PhysicalParams::paper(), &cfg.params).is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(load(r#"{"params": {"kapa_hz": 1e6}}"#).is_err());
        assert!(load(r#"{"colour": 1}"#).is_err());
        assert!(load(r#"{"sweep": {"grid_size": 3}}"#).is_err());
    }

    #[test]
    fn invalid_physics_is_a_config_error() {
        let cfg = load(r#"{"params": {"gamma2_hz": -1}}"#).unwrap();
        assert!(matches!(
            resolve_params(PhysicalParams::paper(), &cfg.params),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn coupling_pattern_override() {
        let cfg = load(r#"{"params": {"g_over_kappa": 0.02, "coupling_pattern": "same"}}"#).unwrap();
        let p = resolve_params(PhysicalParams::paper(), &cfg.params).unwrap();
        assert!(p.g1 > 0.0 && p.g2 > 0.0);
        assert!((p.g_over_kappa() - 0.02).abs() < 1e-15);
    }

    #[test]
    fn unknown_preset() {
        assert!(preset("lab").is_err());
    }
}
