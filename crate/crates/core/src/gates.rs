//! Gate design, extraction from dynamics, canonical form and scoring.
//!
//! Basis order is `(|00>, |01>, |10>, |11>)`, realized by the static
//! eigenstates `(|0), |2), |1), |4))` at the idle detuning. Qubit 1 is
//! junction 1, so `|10>` is the junction-1 excitation.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use nalgebra::{Matrix2, Matrix4, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{propagate, PropagationConfig, Trajectory};
use crate::grid::{build_grid, Grid2D, Wavefunction2D};
use crate::model::{DerivedScales, PulseSchedule};
use crate::optimize::try_brent_root;
use crate::spectrum::{find_avoided_crossing, solve_2d, Crossing, SolverOptions, SpectrumSlice};

pub type GateMatrix = Matrix4<Complex64>;

/// Idle detuning where the qubits are uncoupled.
pub const IDLE_EPS: f64 = -0.1;
/// Default ramp duration, `20 pi / w0`.
pub const DEFAULT_RAMP: f64 = 20.0 * PI;
/// Largest per-entry rms distance from the template accepted by [`canonicalize`].
pub const TEMPLATE_THRESHOLD: f64 = 0.1;
/// Eigenstates realizing the computational basis, in basis order.
pub const BASIS_LEVELS: [usize; 4] = [0, 2, 1, 4];
/// Product labels expected for [`BASIS_LEVELS`].
pub const BASIS_LABELS: [(usize, usize); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    ControlledPhase,
    Swaplike,
}

/// Numerical setting shared by design and extraction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Setup {
    pub scales: DerivedScales,
    pub grid: Grid2D,
    pub solver: SolverOptions,
}

impl Setup {
    /// Grid covering the detunings `[IDLE_EPS, 0]` at `resolution` points.
    pub fn new(scales: DerivedScales, resolution: usize) -> Result<Self> {
        Ok(Self {
            scales,
            grid: build_grid(&scales, (IDLE_EPS, 0.0), resolution)?,
            solver: SolverOptions::default(),
        })
    }

    pub fn with_grid(self, grid: Grid2D) -> Self {
        Self { grid, ..self }
    }

    pub fn slice(&self, eps: f64, count: usize) -> Result<SpectrumSlice> {
        solve_2d(eps, &self.scales, &self.grid, count, &self.solver)
    }
}

/// A designed schedule with the spectral data that fixed it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateDesign {
    pub kind: GateKind,
    pub schedule: PulseSchedule,
    /// Energy splitting setting the plateau length.
    pub gap: f64,
    pub crossing: Option<Crossing>,
}

/// Controlled-phase design: plateau at the 4-5 crossing for one full
/// oscillation, `tau_I = 2 pi / (E5 - E4)`.
pub fn design_u1(setup: &Setup) -> Result<GateDesign> {
    let crossing = find_avoided_crossing((4, 5), (-0.08, -0.01), &setup.scales, &setup.grid, &setup.solver)?;
    let schedule = PulseSchedule::new(IDLE_EPS, crossing.eps_star, DEFAULT_RAMP, TAU / crossing.gap)?;
    Ok(GateDesign {
        kind: GateKind::ControlledPhase,
        schedule,
        gap: crossing.gap,
        crossing: Some(crossing),
    })
}

/// Swaplike design: plateau at the symmetric point, `tau_I = 2 pi k / (E5 - E3)`.
pub fn design_u2(setup: &Setup, k: u32) -> Result<GateDesign> {
    if k == 0 {
        return Err(Error::InvalidParameter {
            name: "k",
            reason: "must be at least 1".into(),
        });
    }
    let slice = setup.slice(0.0, 6)?;
    let gap = slice.gap(3, 5);
    let schedule = PulseSchedule::new(IDLE_EPS, 0.0, DEFAULT_RAMP, TAU * k as f64 / gap)?;
    Ok(GateDesign {
        kind: GateKind::Swaplike,
        schedule,
        gap,
        crossing: None,
    })
}

/// Swap angle `theta_1 = (E2 - E1) tau_I / 2` of the [`design_u2`] plateau.
pub fn swap_angle(setup: &Setup, k: u32) -> Result<f64> {
    let slice = setup.slice(0.0, 6)?;
    let tau = TAU * k as f64 / slice.gap(3, 5);
    Ok(0.5 * slice.gap(1, 2) * tau)
}

/// Level count at which the `k`-period swaplike plateau gives a full swap.
pub fn tune_swap_ns(zeta: f64, k: u32, j0: f64, bracket: (f64, f64), resolution: usize) -> Result<f64> {
    let theta = |ns: f64| -> Result<f64> {
        let setup = Setup::new(DerivedScales::dimensionless(ns, zeta, j0)?, resolution)?;
        Ok(swap_angle(&setup, k)? - 0.5 * PI)
    };
    try_brent_root(theta, bracket.0, bracket.1, 1e-7, 100)
}

/// Basis eigenstates at the idle detuning of `schedule`, in basis order.
pub fn basis_states(setup: &Setup, eps: f64) -> Result<[Wavefunction2D; 4]> {
    let slice = setup.slice(eps, 5)?;
    for (&level, &label) in BASIS_LEVELS.iter().zip(&BASIS_LABELS) {
        if slice.labels[level] != label {
            return Err(Error::LabelMismatch {
                eps,
                level,
                found: slice.labels[level],
                expected: label,
            });
        }
    }
    Ok(BASIS_LEVELS.map(|n| slice.states[n].clone()))
}

/// Gate matrix and the four runs behind it.
#[derive(Clone, Debug)]
pub struct Extraction {
    pub matrix: GateMatrix,
    /// Run `n` starts in basis state `n`; probes are the four basis states.
    pub trajectories: Vec<Trajectory>,
}

/// `M_mn = <m| U |n>` over the eigenstate basis at the schedule's idle detuning.
pub fn extract_gate(schedule: &PulseSchedule, setup: &Setup, cfg: &PropagationConfig) -> Result<Extraction> {
    let basis = basis_states(setup, schedule.eps_a)?;
    extract_with_basis(schedule, setup, cfg, &basis)
}

/// [`extract_gate`] against an explicit basis.
pub fn extract_with_basis(
    schedule: &PulseSchedule,
    setup: &Setup,
    cfg: &PropagationConfig,
    basis: &[Wavefunction2D; 4],
) -> Result<Extraction> {
    let runs: Vec<(Trajectory, Wavefunction2D)> = basis
        .par_iter()
        .map(|psi| propagate(psi, schedule, &setup.scales, cfg, basis))
        .collect::<Result<_>>()?;
    let mut matrix = GateMatrix::zeros();
    for (n, (traj, _)) in runs.iter().enumerate() {
        for m in 0..4 {
            matrix[(m, n)] = *traj.amplitudes[m].last().ok_or(Error::ZeroState)?;
        }
    }
    Ok(Extraction {
        matrix,
        trajectories: runs.into_iter().map(|(t, _)| t).collect(),
    })
}

/// Phases removed by `e^{i a1} Rz(a2) (x) Rz(a3)`, `Rz(a) = e^{-i a sigma_z / 2}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alphas {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl Alphas {
    pub const ZERO: Self = Self { a1: 0.0, a2: 0.0, a3: 0.0 };

    /// Diagonal of `e^{i a1} Rz(a2) (x) Rz(a3)` in basis order.
    pub fn diagonal(&self) -> [Complex64; 4] {
        let (s, d) = (0.5 * (self.a2 + self.a3), 0.5 * (self.a2 - self.a3));
        [-s, -d, d, s].map(|x| Complex64::from_polar(1.0, self.a1 + x))
    }

    /// Left-multiply `m` by the phase gate.
    pub fn apply(&self, m: &GateMatrix) -> GateMatrix {
        let d = self.diagonal();
        let mut out = *m;
        for r in 0..4 {
            for c in 0..4 {
                out[(r, c)] *= d[r];
            }
        }
        out
    }
}

/// Phase-reduced gate and its template parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CanonicalGate {
    pub kind: GateKind,
    pub phi: Option<f64>,
    pub theta1: Option<f64>,
    pub theta2: Option<f64>,
    pub alphas: Alphas,
    pub residual: f64,
    #[serde(skip)]
    pub matrix: GateMatrix,
}

impl CanonicalGate {
    /// Frobenius residual spread over the 16 entries.
    pub fn rms_residual(&self) -> f64 {
        self.residual / 4.0
    }

    pub fn target(&self) -> GateMatrix {
        match self.kind {
            GateKind::ControlledPhase => target_u1(self.phi.unwrap_or(0.0)),
            GateKind::Swaplike => target_u2(self.theta1.unwrap_or(0.0), self.theta2.unwrap_or(0.0)),
        }
    }
}

/// `diag(1, 1, 1, e^{-i phi})`.
pub fn target_u1(phi: f64) -> GateMatrix {
    let mut m = GateMatrix::identity();
    m[(3, 3)] = Complex64::from_polar(1.0, -phi);
    m
}

/// Partial swap of `|01>, |10>` by `theta1` with phase `e^{-i theta2}` on `|11>`.
pub fn target_u2(theta1: f64, theta2: f64) -> GateMatrix {
    let mut m = GateMatrix::zeros();
    let (s, c) = theta1.sin_cos();
    m[(0, 0)] = Complex64::new(1.0, 0.0);
    m[(1, 1)] = Complex64::new(c, 0.0);
    m[(2, 2)] = Complex64::new(c, 0.0);
    m[(1, 2)] = Complex64::new(0.0, -s);
    m[(2, 1)] = Complex64::new(0.0, -s);
    m[(3, 3)] = Complex64::from_polar(1.0, -theta2);
    m
}

fn wrap(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

/// Remove single-qubit `z` phases so `m` takes the template form of `kind`.
///
/// Fails when the result is further than [`TEMPLATE_THRESHOLD`] from the
/// template; [`canonical_form`] skips that check.
pub fn canonicalize(m: &GateMatrix, kind: GateKind) -> Result<CanonicalGate> {
    let out = canonical_form(m, kind);
    if out.rms_residual() > TEMPLATE_THRESHOLD {
        return Err(Error::TemplateMismatch {
            residual: out.rms_residual(),
            threshold: TEMPLATE_THRESHOLD,
        });
    }
    Ok(out)
}

/// Phase-reduced form of `m` and its distance from the template.
pub fn canonical_form(m: &GateMatrix, kind: GateKind) -> CanonicalGate {
    let p: [f64; 4] = [0, 1, 2, 3].map(|i| m[(i, i)].arg());
    let alphas = match kind {
        GateKind::ControlledPhase => {
            let a2 = wrap(p[0] - p[2]);
            let a3 = wrap(p[0] - p[1]);
            Alphas {
                a1: wrap(-p[0] + 0.5 * (a2 + a3)),
                a2,
                a3,
            }
        }
        GateKind::Swaplike => {
            let u = 0.5 * (m[(1, 1)] + m[(2, 2)]);
            let v = Complex64::i() * 0.5 * (m[(1, 2)] + m[(2, 1)]);
            let cross = (u.conj() * v).re;
            let q = Matrix2::new(u.norm_sqr(), cross, cross, v.norm_sqr());
            let eig = SymmetricEigen::new(q);
            let top = if eig.eigenvalues[0] >= eig.eigenvalues[1] { 0 } else { 1 };
            let mut dir = eig.eigenvectors.column(top).into_owned();
            if dir[1] < 0.0 || (dir[1] == 0.0 && dir[0] < 0.0) {
                dir = -dir;
            }
            let w = u * dir[0] + v * dir[1];
            let a1 = if w.norm() > 0.0 { wrap(-w.arg()) } else { 0.0 };
            let beta = wrap(a1 + p[0]);
            Alphas { a1, a2: beta, a3: beta }
        }
    };
    let matrix = alphas.apply(m);
    let mut out = CanonicalGate {
        kind,
        phi: None,
        theta1: None,
        theta2: None,
        alphas,
        residual: 0.0,
        matrix,
    };
    let last = (-matrix[(3, 3)].arg()).rem_euclid(TAU);
    match kind {
        GateKind::ControlledPhase => out.phi = Some(last),
        GateKind::Swaplike => {
            let u = 0.5 * (matrix[(1, 1)] + matrix[(2, 2)]);
            let v = Complex64::i() * 0.5 * (matrix[(1, 2)] + matrix[(2, 1)]);
            out.theta1 = Some(v.re.atan2(u.re));
            out.theta2 = Some(last);
        }
    }
    out.residual = (matrix - out.target()).norm();
    out
}

/// Average gate fidelity of the (possibly non-unitary) `m` against `target`.
pub fn fidelity(m: &GateMatrix, target: &GateMatrix) -> f64 {
    let tr_mm = (m.adjoint() * m).trace().re;
    let tr_wm = (target.adjoint() * m).trace().norm_sqr();
    (tr_mm + tr_wm) / 20.0
}

/// Mean probability lost from the computational subspace.
pub fn leakage(m: &GateMatrix) -> f64 {
    1.0 - (m.adjoint() * m).trace().re / 4.0
}

/// Plateau-only phases from static energies `e = [E0, E1, E2]` at the plateau.
pub fn alpha_check(e: [f64; 3], tau: f64, kind: GateKind) -> Alphas {
    let a1 = 0.5 * (e[1] + e[2]) * tau;
    match kind {
        GateKind::ControlledPhase => Alphas {
            a1,
            a2: (e[1] - e[0]) * tau,
            a3: (e[2] - e[0]) * tau,
        },
        GateKind::Swaplike => {
            let b = 0.5 * (e[1] + e[2] - 2.0 * e[0]) * tau;
            Alphas { a1, a2: b, a3: b }
        }
    }
}

/// Distance between two angles on the circle.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    wrap(a - b).abs()
}

/// Scored gate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub kind: GateKind,
    pub fidelity: f64,
    pub leakage: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta2: Option<f64>,
    pub alphas: Alphas,
    pub residual: f64,
    pub schedule: PulseSchedule,
    pub scales: DerivedScales,
}

/// Canonicalize and score `m` against its own template.
pub fn score(m: &GateMatrix, kind: GateKind, schedule: &PulseSchedule, scales: &DerivedScales) -> Result<GateReport> {
    canonicalize(m, kind)?;
    Ok(report(m, kind, schedule, scales))
}

/// [`score`] without the template-distance check.
pub fn report(m: &GateMatrix, kind: GateKind, schedule: &PulseSchedule, scales: &DerivedScales) -> GateReport {
    let c = canonical_form(m, kind);
    GateReport {
        kind,
        fidelity: fidelity(&c.matrix, &c.target()),
        leakage: leakage(m),
        phi: c.phi,
        theta1: c.theta1,
        theta2: c.theta2,
        alphas: c.alphas,
        residual: c.residual,
        schedule: *schedule,
        scales: *scales,
    }
}

/// Four rows of `re, im` pairs.
pub fn write_matrix_csv<W: Write>(mut w: W, m: &GateMatrix) -> Result<()> {
    for r in 0..4 {
        let row: Vec<String> = (0..4)
            .flat_map(|c| [m[(r, c)].re, m[(r, c)].im])
            .map(|x| format!("{x:.12e}"))
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
