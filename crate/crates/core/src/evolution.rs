//! Split-operator propagation under a detuning pulse.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{raw_inner, Axis, Fft2, Grid2D, Wavefunction2D};
use crate::model::{detune, DerivedScales, JunctionWell, PotentialKind, PulseSchedule};
use crate::optimize::golden_section;
use crate::spectrum::kinetic_symbol;

/// Minimum absorbing layer thickness in grid points.
pub const MIN_ABSORBER_POINTS: usize = 8;
/// Largest norm gain per step tolerated without an absorber.
pub const GROWTH_LIMIT: f64 = 1e-9;

/// Multiplicative absorbing layer on the downhill end of each axis.
///
/// Each step multiplies by `cos(pi xi / 2)^(strength dt)`, `xi` running from
/// 0 at the inner edge of the layer to 1 at the grid end, so the damping per
/// unit time does not depend on the step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Absorber {
    pub width_fraction: f64,
    pub strength: f64,
}

impl Default for Absorber {
    fn default() -> Self {
        Self {
            width_fraction: 0.12,
            strength: 12.5,
        }
    }
}

impl Absorber {
    pub fn off() -> Self {
        Self {
            width_fraction: 0.0,
            strength: 0.0,
        }
    }

    pub fn is_off(&self) -> bool {
        self.strength == 0.0 || self.width_fraction == 0.0
    }

    /// Per-step mask along one axis.
    pub fn mask(&self, axis: &Axis, dt: f64) -> Vec<f64> {
        if self.is_off() {
            return vec![1.0; axis.n];
        }
        let span = axis.max - axis.min;
        let start = axis.max - self.width_fraction * span;
        let power = self.strength * dt;
        axis.points()
            .into_iter()
            .map(|g| {
                if g <= start {
                    1.0
                } else {
                    let xi = (g - start) / (axis.max - start);
                    (0.5 * std::f64::consts::PI * xi).cos().max(0.0).powf(power)
                }
            })
            .collect()
    }

    /// Coordinate where the layer begins.
    pub fn start(&self, axis: &Axis) -> f64 {
        axis.max - self.width_fraction * (axis.max - axis.min)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagationConfig {
    /// Requested step (`1/w0`); the run uses the largest step not above it
    /// that divides the schedule evenly.
    pub dt: f64,
    /// Steps between recorded probe amplitudes.
    pub record_stride: usize,
    /// Steps between stored wavefunctions, if any.
    pub snapshot_stride: Option<usize>,
    pub absorber: Absorber,
    pub kind: PotentialKind,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            record_stride: 10,
            snapshot_stride: None,
            absorber: Absorber::default(),
            kind: PotentialKind::Cubic,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self, grid: &Grid2D) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("must be positive and finite, got {}", self.dt),
            });
        }
        if self.record_stride == 0 || self.snapshot_stride == Some(0) {
            return Err(Error::Configuration("strides must be at least one step".into()));
        }
        let a = self.absorber;
        if !a.is_off() {
            if !(a.width_fraction > 0.0 && a.width_fraction < 0.5 && a.strength > 0.0) {
                return Err(Error::Configuration(format!("bad absorber {a:?}")));
            }
            let points = (a.width_fraction * grid.axis1.n.min(grid.axis2.n) as f64).floor() as usize;
            if points < MIN_ABSORBER_POINTS {
                return Err(Error::Configuration(format!(
                    "absorber spans {points} points, need at least {MIN_ABSORBER_POINTS}"
                )));
            }
        }
        Ok(())
    }

    pub fn with_dt(self, dt: f64) -> Self {
        Self { dt, ..self }
    }

    pub fn without_absorber(self) -> Self {
        Self {
            absorber: Absorber::off(),
            ..self
        }
    }
}

/// Recorded observables of one run.
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `<probe_i|psi(t)>` for each probe, sampled at `times`.
    pub amplitudes: Vec<Vec<Complex64>>,
    pub norms: Vec<f64>,
    pub snapshots: Vec<(f64, Wavefunction2D)>,
    /// Step actually used.
    pub dt: f64,
    pub steps: usize,
}

impl Trajectory {
    /// `|<probe|psi(t)>|^2` for tracked probe `i`.
    pub fn survival(&self, i: usize) -> Vec<f64> {
        self.amplitudes[i].iter().map(|z| z.norm_sqr()).collect()
    }

    /// Samples with `t` in `[t0, t1]`.
    pub fn window(&self, i: usize, t0: f64, t1: f64) -> (Vec<f64>, Vec<f64>) {
        let p = self.survival(i);
        self.times
            .iter()
            .zip(p)
            .filter(|(t, _)| **t >= t0 - 1e-12 && **t <= t1 + 1e-12)
            .map(|(t, v)| (*t, v))
            .unzip()
    }
}

/// `|<reference|psi(t)>|^2` over the stored snapshots.
pub fn survival(traj: &Trajectory, reference: &Wavefunction2D) -> Result<Vec<f64>> {
    traj.snapshots
        .iter()
        .map(|(_, psi)| {
            if psi.grid != reference.grid {
                return Err(Error::GridMismatch);
            }
            Ok((raw_inner(&reference.data, &psi.data) * psi.grid.cell()).norm_sqr())
        })
        .collect()
}

/// Split-operator stepper bound to one grid, potential model and step.
pub struct Propagator {
    grid: Grid2D,
    scales: DerivedScales,
    kind: PotentialKind,
    dt: f64,
    kinetic: Vec<Complex64>,
    mask1: Vec<f64>,
    mask2: Vec<f64>,
    fft: Fft2,
    points1: Vec<f64>,
    points2: Vec<f64>,
}

impl Propagator {
    pub fn new(scales: &DerivedScales, grid: &Grid2D, dt: f64, absorber: Absorber, kind: PotentialKind) -> Self {
        let kinetic = kinetic_symbol(scales, grid)
            .into_iter()
            .map(|s| {
                let n = grid.len() as f64;
                Complex64::from_polar(1.0 / n, -s * n * dt)
            })
            .collect();
        Self {
            grid: *grid,
            scales: *scales,
            kind,
            dt,
            kinetic,
            mask1: absorber.mask(&grid.axis1, dt),
            mask2: absorber.mask(&grid.axis2, dt),
            fft: Fft2::new(grid),
            points1: grid.axis1.points(),
            points2: grid.axis2.points(),
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Half-step potential phases along each axis at detuning `eps`.
    fn half_phases(&self, eps: f64) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
        let bias = detune(self.scales.j0, eps)?;
        let w1 = JunctionWell::new(self.kind, bias.j1, &self.scales);
        let w2 = JunctionWell::new(self.kind, bias.j2, &self.scales);
        let h = 0.5 * self.dt;
        let p1 = self.points1.iter().map(|&g| Complex64::from_polar(1.0, -w1.relative(g) * h)).collect();
        let p2 = self.points2.iter().map(|&g| Complex64::from_polar(1.0, -w2.relative(g) * h)).collect();
        Ok((p1, p2))
    }

    fn apply_diagonal(&self, data: &mut [Complex64], d1: &[Complex64], d2: &[Complex64]) {
        let n2 = self.grid.axis2.n;
        for (row, a) in data.chunks_exact_mut(n2).zip(d1) {
            for (z, b) in row.iter_mut().zip(d2) {
                *z *= a * b;
            }
        }
    }

    fn kinetic_step(&mut self, data: &mut Vec<Complex64>) {
        self.fft.forward(data);
        for (z, k) in data.iter_mut().zip(&self.kinetic) {
            *z *= k;
        }
        self.fft.inverse(data);
    }

    /// Evolve `psi` over `schedule`, recording overlaps with `probes`.
    pub fn run(
        &mut self,
        psi: &mut Wavefunction2D,
        schedule: &PulseSchedule,
        probes: &[Wavefunction2D],
        record_stride: usize,
        snapshot_stride: Option<usize>,
    ) -> Result<Trajectory> {
        if psi.grid != self.grid || probes.iter().any(|p| p.grid != self.grid) {
            return Err(Error::GridMismatch);
        }
        let total = schedule.total_duration();
        let steps = (total / self.dt - 1e-9).ceil().max(0.0) as usize;
        if steps > 0 && ((total / steps as f64) - self.dt).abs() > 1e-12 * self.dt.max(1.0) {
            return Err(Error::Configuration(format!(
                "step {} does not divide the schedule length {total}",
                self.dt
            )));
        }
        let absorbing = self.mask1.iter().chain(&self.mask2).any(|&m| m != 1.0);
        let mask1: Vec<Complex64> = self.mask1.iter().map(|&m| m.into()).collect();
        let mask2: Vec<Complex64> = self.mask2.iter().map(|&m| m.into()).collect();
        let cell = self.grid.cell();
        let mut traj = Trajectory {
            amplitudes: vec![Vec::new(); probes.len()],
            dt: self.dt,
            steps,
            ..Default::default()
        };
        let record = |traj: &mut Trajectory, psi: &Wavefunction2D, t: f64| {
            traj.times.push(t);
            for (a, p) in traj.amplitudes.iter_mut().zip(probes) {
                a.push(raw_inner(&p.data, &psi.data) * cell);
            }
            traj.norms.push(psi.norm());
        };
        record(&mut traj, psi, 0.0);
        if snapshot_stride.is_some() {
            traj.snapshots.push((0.0, psi.clone()));
        }
        if steps == 0 {
            return Ok(traj);
        }
        let dt = self.dt;
        let mid = |s: usize| (s as f64 + 0.5) * dt;
        let mut current = self.half_phases(schedule.epsilon_at(mid(0))?)?;
        let (mut d1, mut d2) = current.clone();
        let mut last_norm = traj.norms[0];
        let mut last_step = 0usize;
        for s in 0..steps {
            self.apply_diagonal(&mut psi.data, &d1, &d2);
            self.kinetic_step(&mut psi.data);
            let done = s + 1;
            let recording = done == steps || done % record_stride == 0;
            let snapshot = snapshot_stride.is_some_and(|k| done % k == 0);
            let e1: Vec<Complex64> = current.0.iter().zip(&mask1).map(|(a, m)| a * m).collect();
            let e2: Vec<Complex64> = current.1.iter().zip(&mask2).map(|(a, m)| a * m).collect();
            if !(recording || snapshot) {
                let next = self.half_phases(schedule.epsilon_at(mid(done))?)?;
                d1 = e1.iter().zip(&next.0).map(|(a, b)| a * b).collect();
                d2 = e2.iter().zip(&next.1).map(|(a, b)| a * b).collect();
                current = next;
                continue;
            }
            self.apply_diagonal(&mut psi.data, &e1, &e2);
            let t = if done == steps { total } else { done as f64 * dt };
            if recording {
                record(&mut traj, psi, t);
                let norm = traj.norms[traj.norms.len() - 1];
                if !norm.is_finite() {
                    return Err(Error::Instability { growth: f64::INFINITY });
                }
                if !absorbing {
                    let growth = (norm - last_norm) / (done - last_step) as f64;
                    if growth > GROWTH_LIMIT {
                        return Err(Error::Instability { growth });
                    }
                }
                last_norm = norm;
                last_step = done;
            }
            if snapshot {
                traj.snapshots.push((t, psi.clone()));
            }
            if done < steps {
                current = self.half_phases(schedule.epsilon_at(mid(done))?)?;
                (d1, d2) = current.clone();
            }
        }
        Ok(traj)
    }
}

/// Largest step not above `dt` that divides `total` into whole steps.
pub fn fitted_step(total: f64, dt: f64) -> f64 {
    if total <= 0.0 {
        return dt;
    }
    total / (total / dt).ceil()
}

/// Propagate `psi0` through `schedule`; returns the record and final state.
pub fn propagate(
    psi0: &Wavefunction2D,
    schedule: &PulseSchedule,
    scales: &DerivedScales,
    cfg: &PropagationConfig,
    probes: &[Wavefunction2D],
) -> Result<(Trajectory, Wavefunction2D)> {
    schedule.validate()?;
    cfg.validate(&psi0.grid)?;
    let n = psi0.norm();
    if n == 0.0 {
        return Err(Error::ZeroState);
    }
    if (n - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidParameter {
            name: "psi0",
            reason: format!("not normalized (norm {n})"),
        });
    }
    let dt = fitted_step(schedule.total_duration(), cfg.dt);
    let mut prop = Propagator::new(scales, &psi0.grid, dt, cfg.absorber, cfg.kind);
    let mut psi = psi0.clone();
    let traj = prop.run(&mut psi, schedule, probes, cfg.record_stride, cfg.snapshot_stride)?;
    Ok((traj, psi))
}

/// `P(t) = a + b cos^2(Omega t + phase)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationFit {
    pub a: f64,
    pub b: f64,
    pub omega: f64,
    pub phase: f64,
    /// Root-mean-square residual.
    pub rms: f64,
}

impl OscillationFit {
    pub fn eval(&self, t: f64) -> f64 {
        self.a + self.b * (self.omega * t + self.phase).cos().powi(2)
    }

    /// Period of `P(t)`, `pi / Omega`.
    pub fn period(&self) -> f64 {
        std::f64::consts::PI / self.omega
    }
}

/// Least squares `c0 + c1 cos(w t) + c2 sin(w t)` at fixed `w`; returns the
/// coefficients and the residual sum of squares.
fn linear_fit(t: &[f64], y: &[f64], w: f64) -> Option<(Vector3<f64>, f64)> {
    let mut ata = Matrix3::zeros();
    let mut aty = Vector3::zeros();
    for (&ti, &yi) in t.iter().zip(y) {
        let row = Vector3::new(1.0, (w * ti).cos(), (w * ti).sin());
        ata += row * row.transpose();
        aty += row * yi;
    }
    let c = ata.cholesky()?.solve(&aty);
    let rss = t
        .iter()
        .zip(y)
        .map(|(&ti, &yi)| {
            let r = yi - c[0] - c[1] * (w * ti).cos() - c[2] * (w * ti).sin();
            r * r
        })
        .sum();
    Some((c, rss))
}

/// Fit `a + b cos^2(Omega t + phase)` to samples covering at least a period.
pub fn fit_oscillation(times: &[f64], values: &[f64]) -> Result<OscillationFit> {
    let n = times.len();
    if n != values.len() || n < 8 {
        return Err(Error::Configuration("need at least 8 paired samples".into()));
    }
    let span = times[n - 1] - times[0];
    let spacing = span / (n - 1) as f64;
    if !(span > 0.0) {
        return Err(Error::Configuration("samples must span a positive time".into()));
    }
    let t0 = times[0];
    let t: Vec<f64> = times.iter().map(|x| x - t0).collect();
    let rss = |w: f64| linear_fit(&t, values, w).map_or(f64::INFINITY, |(_, r)| r);

    let two_pi = 2.0 * std::f64::consts::PI;
    let w_lo = two_pi / span;
    let w_hi = std::f64::consts::PI / spacing;
    let dw = 0.25 * std::f64::consts::PI / span;
    let count = (((w_hi - w_lo) / dw).ceil() as usize).clamp(2, 200_000);
    let step = (w_hi - w_lo) / count as f64;
    let mut best = (w_lo, f64::INFINITY);
    for i in 0..=count {
        let w = w_lo + i as f64 * step;
        let r = rss(w);
        if r < best.1 {
            best = (w, r);
        }
    }
    let lo = (best.0 - step).max(0.5 * w_lo);
    let hi = best.0 + step;
    let mut w = golden_section(|w| Ok(rss(w)), lo, hi, 1e-10 * best.0)?.x;
    let (mut c, _) = linear_fit(&t, values, w).ok_or(Error::NonOscillatory { amplitude: 0.0 })?;

    // Gauss-Newton on (c0, c1, c2, w).
    for _ in 0..20 {
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for (&ti, &yi) in t.iter().zip(values) {
            let (s, co) = (w * ti).sin_cos();
            let model = c[0] + c[1] * co + c[2] * s;
            let row = Vector4::new(1.0, co, s, ti * (c[2] * co - c[1] * s));
            jtj += row * row.transpose();
            jtr += row * (yi - model);
        }
        let Some(delta) = jtj.cholesky().map(|ch| ch.solve(&jtr)) else {
            break;
        };
        c += Vector3::new(delta[0], delta[1], delta[2]);
        w += delta[3];
        if delta[3].abs() < 1e-15 * w && delta.fixed_rows::<3>(0).norm() < 1e-15 {
            break;
        }
    }
    let rms = (t
        .iter()
        .zip(values)
        .map(|(&ti, &yi)| (yi - c[0] - c[1] * (w * ti).cos() - c[2] * (w * ti).sin()).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    let half = (c[1] * c[1] + c[2] * c[2]).sqrt();
    let b = 2.0 * half;
    if b < 1e-9 || half < 3.0 * rms {
        return Err(Error::NonOscillatory { amplitude: b });
    }
    // c1 cos(wt) + c2 sin(wt) = half cos(wt - atan2(c2, c1)), and
    // cos^2(x) = (1 + cos 2x) / 2 with 2x = w t + 2 phase.
    let mut phase = -0.5 * c[2].atan2(c[1]) - 0.5 * w * t0;
    phase = phase.rem_euclid(std::f64::consts::PI);
    Ok(OscillationFit {
        a: c[0] - half,
        b,
        omega: 0.5 * w,
        phase,
        rms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, inner};
    use crate::spectrum::{solve_1d, solve_2d, SolverOptions};

    fn setup() -> (DerivedScales, Grid2D) {
        let s = DerivedScales::dimensionless(4.0, 0.01, 0.988).unwrap();
        let g = build_grid(&s, (-0.1, 0.0), 128).unwrap();
        (s, g)
    }

    fn gaussian(grid: Grid2D, c: (f64, f64), w: f64, k: (f64, f64)) -> Wavefunction2D {
        Wavefunction2D::from_fn(grid, |x, y| {
            let r = ((x - c.0).powi(2) + (y - c.1).powi(2)) / (4.0 * w * w);
            Complex64::from_polar((-r).exp(), k.0 * x + k.1 * y)
        })
        .normalized()
        .unwrap()
    }

    #[test]
    fn absorber_mask_profile() {
        let axis = Axis::new(128, 0.0, 1.0).unwrap();
        let a = Absorber::default();
        let m = a.mask(&axis, 0.01);
        assert!(m[..100].iter().all(|&v| v == 1.0));
        assert!(m.windows(2).all(|w| w[1] <= w[0]));
        assert!(m[127] < 1.0 && m[127] > 0.0);
        let coarse = a.mask(&axis, 0.02);
        for (f, c) in m.iter().zip(&coarse) {
            assert!((f * f - c).abs() < 1e-12);
        }
        assert!(Absorber::off().mask(&axis, 0.01).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn config_validation() {
        let (_, g) = setup();
        assert!(PropagationConfig::default().validate(&g).is_ok());
        assert!(PropagationConfig::default().with_dt(f64::NAN).validate(&g).is_err());
        let mut thin = PropagationConfig::default();
        thin.absorber.width_fraction = 0.05;
        assert!(thin.validate(&g).is_err());
    }

    #[test]
    fn norm_conserved_without_absorber() {
        let (s, g) = setup();
        let psi = gaussian(g, (s.j0.asin() + 0.01, (s.j0.asin())), 0.03, (5.0, -3.0));
        let sched = PulseSchedule::new(-0.1, -0.036, 1.0, 8.0).unwrap();
        let cfg = PropagationConfig::default().without_absorber();
        let (traj, out) = propagate(&psi, &sched, &s, &cfg, &[]).unwrap();
        assert_eq!(traj.steps, 1000);
        assert!((out.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn time_reversal() {
        let (s, g) = setup();
        let psi = gaussian(g, (s.j0.asin() - 0.01, s.j0.asin() + 0.005), 0.02, (8.0, 2.0));
        let sched = PulseSchedule::new(-0.1, -0.05, 2.0, 3.0).unwrap();
        let cfg = PropagationConfig::default().without_absorber();
        let (_, fwd) = propagate(&psi, &sched, &s, &cfg, &[]).unwrap();
        let (_, back) = propagate(&fwd.conj(), &sched.reversed(), &s, &cfg, &[]).unwrap();
        let o = inner(&psi, &back.conj()).unwrap();
        assert!((o - Complex64::new(1.0, 0.0)).norm() < 1e-6, "{o}");
    }

    #[test]
    fn harmonic_centroid_period() {
        let s = DerivedScales::dimensionless(4.0, 0.0, 0.988).unwrap();
        let g = build_grid(&s, (-0.1, 0.0), 128).unwrap();
        let j = detune(s.j0, -0.05).unwrap();
        let m = (j.j1.asin(), j.j2.asin());
        let w = JunctionWell::new(PotentialKind::Harmonic, j.j1, &s).ground_width(s.kinetic_coefficient());
        let psi = gaussian(g, (m.0 + 2.0 * w, m.1), w, (0.0, 0.0));
        let wp = s.plasma_ratio(j.j1);
        let period = 2.0 * std::f64::consts::PI / wp;
        let sched = PulseSchedule::constant(-0.05, 3.0 * period).unwrap();
        let cfg = PropagationConfig {
            kind: PotentialKind::Harmonic,
            snapshot_stride: Some(1),
            ..PropagationConfig::default().without_absorber()
        };
        let (traj, _) = propagate(&psi, &sched, &s, &cfg, &[]).unwrap();
        let x: Vec<f64> = traj.snapshots.iter().map(|(_, p)| p.centroid().0 - m.0).collect();
        let times: Vec<f64> = traj.snapshots.iter().map(|(t, _)| *t).collect();
        // zero crossings of x(t) occur every half period
        let mut crossings = Vec::new();
        for i in 1..x.len() {
            if x[i - 1] > 0.0 && x[i] <= 0.0 || x[i - 1] < 0.0 && x[i] >= 0.0 {
                let f = x[i - 1] / (x[i - 1] - x[i]);
                crossings.push(times[i - 1] + f * (times[i] - times[i - 1]));
            }
        }
        assert!(crossings.len() >= 5);
        let measured = 2.0 * (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64;
        assert!((measured / period - 1.0).abs() < 1e-3, "{measured} vs {period}");
    }

    #[test]
    fn stationary_eigenstate() {
        let (s, g) = setup();
        let slice = solve_2d(-0.1, &s, &g, 1, &SolverOptions::default()).unwrap();
        let psi = slice.states[0].clone();
        let sched = PulseSchedule::constant(-0.1, 100.0).unwrap();
        let cfg = PropagationConfig::default().without_absorber();
        let (traj, _) = propagate(&psi, &sched, &s, &cfg, std::slice::from_ref(&psi)).unwrap();
        for p in traj.survival(0) {
            assert!((p.sqrt() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn absorber_swallows_outgoing_packet() {
        let s = DerivedScales::dimensionless(4.0, 0.0, 0.988).unwrap();
        let g = build_grid(&s, (-0.1, 0.0), 128).unwrap();
        let j = detune(s.j0, -0.05).unwrap();
        let w1 = JunctionWell::new(PotentialKind::Cubic, j.j1, &s);
        let bound = solve_1d(j.j1, &s, &g.axis1, 4, PotentialKind::Cubic).unwrap();
        let lv = solve_1d(j.j2, &s, &g.axis2, 1, PotentialKind::Cubic).unwrap();
        let width = 0.03;
        let k0 = (6.0 * w1.barrier_height() / s.kinetic_coefficient()).sqrt();
        let mut f: Vec<Complex64> = g
            .axis1
            .points()
            .iter()
            .map(|&x| {
                let d = x - w1.minimum;
                Complex64::from_polar((-d * d / (4.0 * width * width)).exp(), k0 * x)
            })
            .collect();
        let dx = g.axis1.spacing();
        let scale = 1.0 / (f.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx).sqrt();
        f.iter_mut().for_each(|z| *z *= scale);
        // probability held by the metastable levels stays in the well
        let trapped: f64 = bound
            .states
            .iter()
            .map(|phi| {
                phi.iter()
                    .zip(&f)
                    .map(|(p, z)| z * *p)
                    .sum::<Complex64>()
                    .norm_sqr()
                    * dx
                    * dx
            })
            .sum();
        let h: Vec<Complex64> = lv.states[0].iter().map(|&v| v.into()).collect();
        let psi = Wavefunction2D::product(g, &f, &h).normalized().unwrap();
        let sched = PulseSchedule::constant(-0.05, 30.0).unwrap();
        let (_, out) = propagate(&psi, &sched, &s, &PropagationConfig::default(), &[]).unwrap();
        let left = out.probability_below(w1.barrier_position(), f64::INFINITY);
        assert!(out.norm_sqr() < 1e-3);
        assert!((left - trapped).abs() < 1e-4, "left {left:e}, trapped {trapped:e}");
    }

    #[test]
    fn zero_length_schedule_is_identity() {
        let (s, g) = setup();
        let psi = gaussian(g, (1.2, 1.2), 0.03, (0.0, 0.0));
        let sched = PulseSchedule::new(-0.1, -0.036, 0.0, 0.0).unwrap();
        let (traj, out) = propagate(&psi, &sched, &s, &PropagationConfig::default(), &[psi.clone()]).unwrap();
        assert_eq!(traj.steps, 0);
        assert_eq!(out, psi);
        assert!((traj.survival(0)[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn survival_against_snapshots() {
        let (s, g) = setup();
        let psi = gaussian(g, (1.2, 1.2), 0.03, (0.0, 0.0));
        let other = gaussian(g, (1.2, 1.2), 0.03, (0.0, 0.0));
        let cfg = PropagationConfig {
            snapshot_stride: Some(5),
            ..Default::default()
        };
        let sched = PulseSchedule::constant(-0.05, 0.1).unwrap();
        let (traj, _) = propagate(&psi, &sched, &s, &cfg, &[]).unwrap();
        assert_eq!(traj.snapshots.len(), 3);
        assert!((survival(&traj, &other).unwrap()[0] - 1.0).abs() < 1e-12);
        let coarse = Wavefunction2D::zeros(g.resampled(64).unwrap());
        assert!(matches!(survival(&traj, &coarse), Err(Error::GridMismatch)));
    }

    #[test]
    fn fit_recovers_synthetic_series() {
        let truth = OscillationFit {
            a: 0.03,
            b: 0.95,
            omega: 0.0073,
            phase: 0.4,
            rms: 0.0,
        };
        let t: Vec<f64> = (0..2000).map(|i| 100.0 + i as f64 * 0.5).collect();
        let y: Vec<f64> = t.iter().map(|&x| truth.eval(x)).collect();
        let fit = fit_oscillation(&t, &y).unwrap();
        assert!((fit.a - truth.a).abs() < 1e-8);
        assert!((fit.b - truth.b).abs() < 1e-8);
        assert!((fit.omega - truth.omega).abs() < 1e-8 * truth.omega);
        for &x in t.iter().step_by(97) {
            assert!((fit.eval(x) - truth.eval(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn fit_rejects_flat_series() {
        let t: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let y = vec![0.7; 100];
        assert!(matches!(fit_oscillation(&t, &y), Err(Error::NonOscillatory { .. })));
    }
}
