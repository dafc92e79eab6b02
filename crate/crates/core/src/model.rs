//! Circuit parameters, the dimensionless unit system, bias detuning,
//! junction potentials, the kinetic symbol and bias-current pulse schedules.
//!
//! Internally energies are measured in units of the reference plasma energy
//! (hbar * omega_0 at the reference bias `J0`), times in `1 / omega_0` and
//! phases in radians. `omega_0` does not follow the detuning.

use serde::{Deserialize, Serialize};

use crate::error::{positive, Error, Result};
use crate::optimize::brent_root;

pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const HBAR: f64 = 1.054_571_817e-34;

/// Prefactor of the metastable level count, `2^{3/4} / 3`.
const NS_PREFACTOR: f64 = 0.560_597_522_863_725_9;

/// Physical parameters of two identical junctions and their coupling capacitor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    /// Farads.
    pub junction_capacitance: f64,
    /// Farads.
    pub coupling_capacitance: f64,
    /// Amperes.
    pub critical_current: f64,
}

impl CircuitParams {
    pub fn new(junction_capacitance: f64, coupling_capacitance: f64, critical_current: f64) -> Result<Self> {
        let p = Self {
            junction_capacitance,
            coupling_capacitance,
            critical_current,
        };
        p.validate()?;
        Ok(p)
    }

    /// 6 pF junctions, 60.6 fF coupler, 21 uA critical current.
    pub fn reference() -> Self {
        Self {
            junction_capacitance: 6e-12,
            coupling_capacitance: 60.6e-15,
            critical_current: 21e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive("junction_capacitance", self.junction_capacitance)?;
        positive("coupling_capacitance", self.coupling_capacitance)?;
        positive("critical_current", self.critical_current)?;
        if self.coupling_capacitance >= self.junction_capacitance {
            return Err(Error::InvalidParameter {
                name: "coupling_capacitance",
                reason: "must be smaller than the junction capacitance".into(),
            });
        }
        Ok(())
    }

    /// `E_C = e^2 / 2 C_J` in joules.
    pub fn charging_energy(&self) -> f64 {
        ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (2.0 * self.junction_capacitance)
    }

    /// `E_J = hbar I_c / 2e` in joules.
    pub fn josephson_energy(&self) -> f64 {
        HBAR * self.critical_current / (2.0 * ELEMENTARY_CHARGE)
    }

    pub fn zeta(&self) -> f64 {
        self.coupling_capacitance / (self.coupling_capacitance + self.junction_capacitance)
    }
}

/// A junction pair with everything fixed except the reference bias `J0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub ej_over_ec: f64,
    pub zeta: f64,
    /// `E_C` in joules when the device came from physical parameters.
    pub charging_energy: Option<f64>,
}

impl Device {
    pub fn from_circuit(params: &CircuitParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            ej_over_ec: params.josephson_energy() / params.charging_energy(),
            zeta: params.zeta(),
            charging_energy: Some(params.charging_energy()),
        })
    }

    /// The device whose level count at bias `j0` equals `ns`.
    pub fn from_level_count(ns: f64, zeta: f64, j0: f64) -> Result<Self> {
        positive("ns", ns)?;
        check_zeta(zeta)?;
        check_unit_interval("j0", j0)?;
        let sqrt_ratio = ns / (NS_PREFACTOR * (1.0 - j0).powf(1.25));
        Ok(Self {
            ej_over_ec: sqrt_ratio * sqrt_ratio,
            zeta,
            charging_energy: None,
        })
    }

    /// Metastable level count at reference bias `j0`.
    pub fn level_count(&self, j0: f64) -> f64 {
        NS_PREFACTOR * self.ej_over_ec.sqrt() * (1.0 - j0).powf(1.25)
    }

    pub fn scales(&self, j0: f64) -> Result<DerivedScales> {
        check_unit_interval("j0", j0)?;
        positive("ej_over_ec", self.ej_over_ec)?;
        check_zeta(self.zeta)?;
        let tilt = (1.0 - j0 * j0).powf(0.25);
        let root = (8.0 * self.ej_over_ec).sqrt();
        // hbar w0 = sqrt(8 E_C E_J) (1 - J0^2)^{1/4} = E_C sqrt(8 r) tilt
        let charging = 1.0 / (root * tilt);
        let josephson = self.ej_over_ec * charging;
        Ok(DerivedScales {
            zeta: self.zeta,
            j0,
            ej_over_ec: self.ej_over_ec,
            ns: self.level_count(j0),
            charging,
            josephson,
            plasma_energy: self.charging_energy.map(|ec| ec / charging),
        })
    }
}

/// Dimensionless numbers that drive the simulation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedScales {
    pub zeta: f64,
    pub j0: f64,
    pub ej_over_ec: f64,
    /// Effective number of metastable single-junction levels.
    pub ns: f64,
    /// `E_C / hbar w0`.
    pub charging: f64,
    /// `E_J / hbar w0`.
    pub josephson: f64,
    /// `hbar w0` in joules; absent for purely dimensionless setups.
    pub plasma_energy: Option<f64>,
}

impl DerivedScales {
    /// Scales fixed by `(N_s, zeta)` at reference bias `j0`.
    pub fn dimensionless(ns: f64, zeta: f64, j0: f64) -> Result<Self> {
        Device::from_level_count(ns, zeta, j0)?.scales(j0)
    }

    pub fn device(&self) -> Device {
        Device {
            ej_over_ec: self.ej_over_ec,
            zeta: self.zeta,
            charging_energy: self.charging_energy(),
        }
    }

    /// Same device parameters with a different coupling.
    pub fn with_zeta(&self, zeta: f64) -> Result<Self> {
        check_zeta(zeta)?;
        Ok(Self { zeta, ..*self })
    }

    /// Attach a physical energy unit from a plasma frequency in hertz.
    pub fn with_plasma_frequency(&self, hz: f64) -> Result<Self> {
        positive("plasma_frequency", hz)?;
        Ok(Self {
            plasma_energy: Some(HBAR * 2.0 * std::f64::consts::PI * hz),
            ..*self
        })
    }

    pub fn charging_energy(&self) -> Option<f64> {
        self.plasma_energy.map(|e| e * self.charging)
    }

    pub fn josephson_energy(&self) -> Option<f64> {
        self.plasma_energy.map(|e| e * self.josephson)
    }

    /// `omega_0` in rad/s.
    pub fn plasma_angular_frequency(&self) -> Option<f64> {
        self.plasma_energy.map(|e| e / HBAR)
    }

    /// `omega_0 / 2 pi` in hertz.
    pub fn plasma_frequency(&self) -> Option<f64> {
        self.plasma_angular_frequency()
            .map(|w| w / (2.0 * std::f64::consts::PI))
    }

    /// Coefficient of `k1^2 + k2^2 + 2 zeta k1 k2` in the kinetic energy.
    pub fn kinetic_coefficient(&self) -> f64 {
        4.0 * self.charging / (1.0 + self.zeta)
    }

    /// `omega_p(J) / omega_0`.
    pub fn plasma_ratio(&self, j: f64) -> f64 {
        ((1.0 - j * j) / (1.0 - self.j0 * self.j0)).powf(0.25)
    }
}

/// Scales for a physical circuit biased at `j0`.
pub fn derive_scales(params: &CircuitParams, j0: f64) -> Result<DerivedScales> {
    Device::from_circuit(params)?.scales(j0)
}

/// Reference bias at which `device` has `target_ns` metastable levels.
pub fn bias_for_ns(target_ns: f64, device: &Device) -> Result<f64> {
    positive("target_ns", target_ns)?;
    positive("ej_over_ec", device.ej_over_ec)?;
    let ceiling = device.level_count(0.0);
    if target_ns >= ceiling {
        return Err(Error::Unachievable { target: target_ns });
    }
    // N_s falls monotonically in j0, so solve in x = 1 - j0 on a log scale.
    let f = |x: f64| (device.level_count(1.0 - x) / target_ns).ln();
    let x = brent_root(f, 1e-15, 1.0, 1e-17, 200)
        .map_err(|_| Error::Unachievable { target: target_ns })?;
    Ok(1.0 - x)
}

fn check_zeta(zeta: f64) -> Result<()> {
    if zeta.is_finite() && (0.0..1.0).contains(&zeta) {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "zeta",
            reason: format!("must lie in [0, 1), got {zeta}"),
        })
    }
}

fn check_unit_interval(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must lie in (0, 1), got {v}"),
        })
    }
}

/// Normalized bias currents of the two junctions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasPair {
    pub j1: f64,
    pub j2: f64,
}

impl BiasPair {
    pub fn swapped(self) -> Self {
        Self {
            j1: self.j2,
            j2: self.j1,
        }
    }
}

/// Split the reference bias symmetrically:
/// `sqrt(1 - J1) = sqrt(1 - J0)(1 + eps)`, `sqrt(1 - J2) = sqrt(1 - J0)(1 - eps)`.
pub fn detune(j0: f64, eps: f64) -> Result<BiasPair> {
    check_unit_interval("j0", j0)?;
    if !eps.is_finite() {
        return Err(Error::InvalidParameter {
            name: "eps",
            reason: "must be finite".into(),
        });
    }
    let s = (1.0 - j0).sqrt();
    let j1 = 1.0 - (s * (1.0 + eps)).powi(2);
    let j2 = 1.0 - (s * (1.0 - eps)).powi(2);
    let inside = |j: f64| j > 0.0 && j < 1.0 && eps.abs() < 1.0;
    if inside(j1) && inside(j2) {
        Ok(BiasPair { j1, j2 })
    } else {
        Err(Error::OutOfRegime { j1, j2 })
    }
}

/// Inverse of [`detune`] for the first junction.
pub fn detuning_of(j0: f64, j1: f64) -> f64 {
    ((1.0 - j1) / (1.0 - j0)).sqrt() - 1.0
}

/// Tilted-washboard energy `-E_J (cos g + J g)` in units of `hbar w0`.
pub fn washboard(gamma: f64, j: f64, josephson: f64) -> f64 {
    -josephson * (gamma.cos() + j * gamma)
}

/// Full two-junction potential (no minimum subtracted).
pub fn potential_full(gamma1: f64, gamma2: f64, bias: BiasPair, scales: &DerivedScales) -> f64 {
    washboard(gamma1, bias.j1, scales.josephson) + washboard(gamma2, bias.j2, scales.josephson)
}

/// Cubic expansion of each washboard about its metastable minimum, summed.
pub fn potential_cubic(gamma1: f64, gamma2: f64, bias: BiasPair, scales: &DerivedScales) -> f64 {
    let w1 = JunctionWell::new(PotentialKind::Cubic, bias.j1, scales);
    let w2 = JunctionWell::new(PotentialKind::Cubic, bias.j2, scales);
    w1.value(gamma1) + w2.value(gamma2)
}

/// Which single-junction potential the solvers use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    /// Exact tilted washboard.
    Full,
    /// Third-order expansion about the metastable minimum.
    #[default]
    Cubic,
    /// Second-order expansion; used for exactly solvable checks.
    Harmonic,
}

/// One junction's potential at a fixed bias.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JunctionWell {
    pub kind: PotentialKind,
    pub bias: f64,
    josephson: f64,
    /// Metastable minimum `arcsin J`.
    pub minimum: f64,
    /// `E_J cos g_m`.
    pub curvature: f64,
    /// `E_J sin g_m`.
    pub skew: f64,
    /// Washboard value at the minimum.
    pub floor: f64,
}

impl JunctionWell {
    pub fn new(kind: PotentialKind, bias: f64, scales: &DerivedScales) -> Self {
        let minimum = bias.asin();
        let ej = scales.josephson;
        Self {
            kind,
            bias,
            josephson: ej,
            minimum,
            curvature: ej * minimum.cos(),
            skew: ej * bias,
            floor: washboard(minimum, bias, ej),
        }
    }

    /// Absolute energy in `hbar w0`.
    pub fn value(&self, gamma: f64) -> f64 {
        match self.kind {
            PotentialKind::Full => washboard(gamma, self.bias, self.josephson),
            _ => self.floor + self.relative(gamma),
        }
    }

    /// Energy above the metastable minimum.
    #[inline]
    pub fn relative(&self, gamma: f64) -> f64 {
        let d = gamma - self.minimum;
        match self.kind {
            PotentialKind::Full => washboard(gamma, self.bias, self.josephson) - self.floor,
            PotentialKind::Cubic => d * d * (0.5 * self.curvature - self.skew * d / 6.0),
            PotentialKind::Harmonic => 0.5 * self.curvature * d * d,
        }
    }

    /// Distance from the minimum to the cubic barrier top, `2 cot g_m`.
    pub fn barrier_offset(&self) -> f64 {
        match self.kind {
            PotentialKind::Full => std::f64::consts::PI - 2.0 * self.minimum,
            _ => 2.0 * self.curvature / self.skew,
        }
    }

    pub fn barrier_position(&self) -> f64 {
        self.minimum + self.barrier_offset()
    }

    /// Barrier height above the minimum; unbounded for the harmonic well.
    pub fn barrier_height(&self) -> f64 {
        match self.kind {
            PotentialKind::Full => self.relative(self.barrier_position()),
            PotentialKind::Harmonic => f64::INFINITY,
            _ => self.curvature * self.barrier_offset().powi(2) / 6.0,
        }
    }

    /// Small-oscillation frequency (units of `w0`) for kinetic coefficient `c`.
    pub fn harmonic_frequency(&self, kinetic: f64) -> f64 {
        (2.0 * kinetic * self.curvature).sqrt()
    }

    /// Standard deviation of the harmonic ground-state density.
    pub fn ground_width(&self, kinetic: f64) -> f64 {
        (kinetic / self.harmonic_frequency(kinetic)).sqrt()
    }
}

/// Kinetic energy `4 E_C (1 + zeta)^-1 (k1^2 + k2^2 + 2 zeta k1 k2)` in `hbar w0`.
pub fn kinetic_spectrum(k1: f64, k2: f64, scales: &DerivedScales) -> f64 {
    scales.kinetic_coefficient() * (k1 * k1 + k2 * k2 + 2.0 * scales.zeta * k1 * k2)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampShape {
    Linear,
    #[default]
    RaisedCosine,
}

impl RampShape {
    /// Ramp progress for `s` in `[0, 1]`.
    pub fn profile(self, s: f64) -> f64 {
        match self {
            RampShape::Linear => s,
            RampShape::RaisedCosine => 0.5 * (1.0 - (std::f64::consts::PI * s).cos()),
        }
    }
}

/// Trapezoidal detuning pulse: hold at `eps_a`, ramp to `eps_b`, interact,
/// ramp back, hold. Times in `1 / w0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub eps_a: f64,
    pub eps_b: f64,
    pub ramp_time: f64,
    pub interaction_time: f64,
    #[serde(default)]
    pub lead_hold: f64,
    #[serde(default)]
    pub tail_hold: f64,
    #[serde(default)]
    pub ramp_shape: RampShape,
}

impl PulseSchedule {
    pub fn new(eps_a: f64, eps_b: f64, ramp_time: f64, interaction_time: f64) -> Result<Self> {
        let s = Self {
            eps_a,
            eps_b,
            ramp_time,
            interaction_time,
            lead_hold: 0.0,
            tail_hold: 0.0,
            ramp_shape: RampShape::default(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_shape(self, ramp_shape: RampShape) -> Self {
        Self { ramp_shape, ..self }
    }

    /// Holds the detuning at `eps` for `duration`.
    pub fn constant(eps: f64, duration: f64) -> Result<Self> {
        Self::new(eps, eps, 0.0, duration)
    }

    /// A zero ramp time is accepted and means an instantaneous jump.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eps_a", self.eps_a), ("eps_b", self.eps_b)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "must be finite".into(),
                });
            }
        }
        for (name, v) in [
            ("ramp_time", self.ramp_time),
            ("interaction_time", self.interaction_time),
            ("lead_hold", self.lead_hold),
            ("tail_hold", self.tail_hold),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite and non-negative, got {v}"),
                });
            }
        }
        Ok(())
    }

    pub fn total_duration(&self) -> f64 {
        self.lead_hold + 2.0 * self.ramp_time + self.interaction_time + self.tail_hold
    }

    /// Gate duration from the start of the first ramp to the end of the second.
    pub fn gate_duration(&self) -> f64 {
        2.0 * self.ramp_time + self.interaction_time
    }

    /// Detuning at time `t`.
    pub fn epsilon_at(&self, t: f64) -> Result<f64> {
        let total = self.total_duration();
        let slack = 1e-12 * total.max(1.0);
        if !(t >= -slack && t <= total + slack) {
            return Err(Error::Domain { t, total });
        }
        let span = self.eps_b - self.eps_a;
        let up = self.lead_hold;
        let top = up + self.ramp_time;
        let down = top + self.interaction_time;
        let bottom = down + self.ramp_time;
        let eps = if t < up {
            self.eps_a
        } else if t < top {
            self.eps_a + span * self.ramp_shape.profile((t - up) / self.ramp_time)
        } else if t <= down {
            self.eps_b
        } else if t < bottom {
            self.eps_b - span * self.ramp_shape.profile((t - down) / self.ramp_time)
        } else {
            self.eps_a
        };
        Ok(eps)
    }

    /// Schedule traversed backwards in time.
    pub fn reversed(&self) -> Self {
        Self {
            lead_hold: self.tail_hold,
            tail_hold: self.lead_hold,
            ..*self
        }
    }

    /// Smallest and largest detuning visited.
    pub fn eps_range(&self) -> (f64, f64) {
        (self.eps_a.min(self.eps_b), self.eps_a.max(self.eps_b))
    }
}
