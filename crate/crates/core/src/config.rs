//! JSON run configuration: either a physical circuit or a `(ns, zeta)` pair,
//! plus optional schedule overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{bias_for_ns, derive_scales, CircuitParams, DerivedScales, Device, RampShape};

/// Reference bias used when none is given.
pub const DEFAULT_J0: f64 = 0.988;

/// How the device is specified.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ParameterSource {
    Physical { params: CircuitParams },
    LevelCount { ns: f64, zeta: f64 },
}

/// Partial schedule; missing fields come from the gate design.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleOverrides {
    pub eps_a: Option<f64>,
    pub eps_b: Option<f64>,
    pub tau_r: Option<f64>,
    pub tau_i: Option<f64>,
    pub ramp_shape: Option<RampShape>,
}

impl ScheduleOverrides {
    /// Fields of `other` win where set.
    pub fn merged(self, other: Self) -> Self {
        Self {
            eps_a: other.eps_a.or(self.eps_a),
            eps_b: other.eps_b.or(self.eps_b),
            tau_r: other.tau_r.or(self.tau_r),
            tau_i: other.tau_i.or(self.tau_i),
            ramp_shape: other.ramp_shape.or(self.ramp_shape),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    c_j_farads: Option<f64>,
    c_c_farads: Option<f64>,
    i_c_amperes: Option<f64>,
    ns: Option<f64>,
    zeta: Option<f64>,
    j0: Option<f64>,
    #[serde(default)]
    schedule: ScheduleOverrides,
}

/// A validated configuration file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub source: ParameterSource,
    /// Reference bias; for a physical source with `target_ns` set it is solved for instead.
    pub j0: Option<f64>,
    /// Level count to reach by retuning `j0` on a physical device.
    pub target_ns: Option<f64>,
    pub schedule: ScheduleOverrides,
}

impl RunConfig {
    pub fn level_count(ns: f64, zeta: f64) -> Self {
        Self {
            source: ParameterSource::LevelCount { ns, zeta },
            j0: None,
            target_ns: None,
            schedule: ScheduleOverrides::default(),
        }
    }

    pub fn physical(params: CircuitParams) -> Self {
        Self {
            source: ParameterSource::Physical { params },
            j0: None,
            target_ns: None,
            schedule: ScheduleOverrides::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| Error::InvalidParameter {
            name: "config",
            reason: e.to_string(),
        })?;
        let physical = [raw.c_j_farads, raw.c_c_farads, raw.i_c_amperes];
        let any_physical = physical.iter().any(Option::is_some);
        let source = match (physical, raw.zeta) {
            ([Some(c_j), Some(c_c), Some(i_c)], None) => ParameterSource::Physical {
                params: CircuitParams::new(c_j, c_c, i_c)?,
            },
            ([None, None, None], Some(zeta)) => ParameterSource::LevelCount {
                ns: raw.ns.ok_or_else(|| missing("ns"))?,
                zeta,
            },
            _ if any_physical && raw.zeta.is_some() => {
                return Err(Error::InvalidParameter {
                    name: "config",
                    reason: "give either c_j_farads/c_c_farads/i_c_amperes or ns/zeta, not both".into(),
                })
            }
            _ if any_physical => return Err(missing("c_j_farads, c_c_farads and i_c_amperes")),
            _ => return Err(missing("c_j_farads/c_c_farads/i_c_amperes or ns/zeta")),
        };
        let target_ns = match source {
            ParameterSource::Physical { .. } => raw.ns,
            ParameterSource::LevelCount { .. } => None,
        };
        Ok(Self {
            source,
            j0: raw.j0,
            target_ns,
            schedule: raw.schedule,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn device(&self) -> Result<Device> {
        match self.source {
            ParameterSource::Physical { params } => Device::from_circuit(&params),
            ParameterSource::LevelCount { ns, zeta } => Device::from_level_count(ns, zeta, self.j0.unwrap_or(DEFAULT_J0)),
        }
    }

    /// Reference bias actually used.
    pub fn resolved_j0(&self) -> Result<f64> {
        match (self.source, self.target_ns) {
            (ParameterSource::Physical { .. }, Some(ns)) => bias_for_ns(ns, &self.device()?),
            _ => Ok(self.j0.unwrap_or(DEFAULT_J0)),
        }
    }

    pub fn scales(&self) -> Result<DerivedScales> {
        match self.source {
            ParameterSource::Physical { params } => derive_scales(&params, self.resolved_j0()?),
            ParameterSource::LevelCount { ns, zeta } => DerivedScales::dimensionless(ns, zeta, self.resolved_j0()?),
        }
    }
}

fn missing(what: &str) -> Error {
    Error::InvalidParameter {
        name: "config",
        reason: format!("missing {what}"),
    }
}
