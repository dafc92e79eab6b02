//! Uniform periodic grids over `(gamma1, gamma2)`, wavefunctions on them,
//! Fourier transforms and the Schmidt decomposition.

use std::io::{Read, Write};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{detune, DerivedScales, JunctionWell, PotentialKind};

/// Smallest supported points per axis.
pub const MIN_POINTS: usize = 64;
/// Ground-state widths kept on the uphill side of each well.
pub const UPHILL_MARGIN_WIDTHS: f64 = 10.0;
/// Run-out past the barrier top, as a fraction of the minimum-to-barrier distance.
pub const DOWNHILL_RUNOUT: f64 = 0.35;

/// `n` points spanning `[min, max)` with periodic wrap.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub n: usize,
    pub min: f64,
    pub max: f64,
}

impl Axis {
    pub fn new(n: usize, min: f64, max: f64) -> Result<Self> {
        if n < MIN_POINTS || !n.is_power_of_two() {
            return Err(Error::Configuration(format!(
                "axis needs a power of two >= {MIN_POINTS} points, got {n}"
            )));
        }
        if !(min.is_finite() && max.is_finite() && max > min) {
            return Err(Error::Configuration(format!("bad axis range [{min}, {max}]")));
        }
        Ok(Self { n, min, max })
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / self.n as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.min + i as f64 * self.spacing()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    /// Angular wavenumbers in FFT order; the Nyquist entry is negative.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let dk = 2.0 * std::f64::consts::PI / (self.max - self.min);
        (0..self.n)
            .map(|m| {
                let signed = if m < self.n / 2 { m as i64 } else { m as i64 - self.n as i64 };
                signed as f64 * dk
            })
            .collect()
    }

    /// Wavenumbers for odd-order derivatives: Nyquist mode set to zero so the
    /// first-derivative operator stays real.
    pub fn derivative_wavenumbers(&self) -> Vec<f64> {
        let mut k = self.wavenumbers();
        k[self.n / 2] = 0.0;
        k
    }

    fn with_points(&self, n: usize) -> Result<Self> {
        Axis::new(n, self.min, self.max)
    }
}

/// Two-junction configuration grid; axis 1 is `gamma1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub axis1: Axis,
    pub axis2: Axis,
}

impl Grid2D {
    pub fn new(axis1: Axis, axis2: Axis) -> Self {
        Self { axis1, axis2 }
    }

    pub fn len(&self) -> usize {
        self.axis1.n * self.axis2.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Area element `dgamma1 dgamma2`.
    pub fn cell(&self) -> f64 {
        self.axis1.spacing() * self.axis2.spacing()
    }

    /// Same ranges at a different resolution.
    pub fn resampled(&self, n: usize) -> Result<Self> {
        Ok(Self {
            axis1: self.axis1.with_points(n)?,
            axis2: self.axis2.with_points(n)?,
        })
    }

    pub fn transposed(&self) -> Self {
        Self {
            axis1: self.axis2,
            axis2: self.axis1,
        }
    }
}

/// Axis range covering every well visited for detunings in `eps_range`.
fn axis_extent(
    scales: &DerivedScales,
    eps_range: (f64, f64),
    sign: f64,
) -> Result<(f64, f64)> {
    let kinetic = scales.kinetic_coefficient();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for eps in [eps_range.0, eps_range.1] {
        let bias = detune(scales.j0, eps)?;
        let j = if sign > 0.0 { bias.j1 } else { bias.j2 };
        let well = JunctionWell::new(PotentialKind::Cubic, j, scales);
        let width = well.ground_width(kinetic);
        let reach = well.barrier_offset();
        if reach < 3.0 * width {
            return Err(Error::Configuration(format!(
                "well at J = {j:.6} is too shallow to hold a level (barrier {reach:.3e}, width {width:.3e})"
            )));
        }
        lo = lo.min(well.minimum - UPHILL_MARGIN_WIDTHS * width);
        hi = hi.max(well.minimum + (1.0 + DOWNHILL_RUNOUT) * reach);
    }
    Ok((lo, hi))
}

/// Grid covering both wells for every detuning in `eps_range`: per axis from
/// the minimum less ten ground-state widths to the cubic barrier top plus
/// 35% of the well width.
pub fn build_grid(scales: &DerivedScales, eps_range: (f64, f64), resolution: usize) -> Result<Grid2D> {
    let (a, b) = eps_range;
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(Error::Configuration(format!("bad detuning range [{a}, {b}]")));
    }
    let (lo1, hi1) = axis_extent(scales, eps_range, 1.0)?;
    let (lo2, hi2) = axis_extent(scales, eps_range, -1.0)?;
    Ok(Grid2D {
        axis1: Axis::new(resolution, lo1, hi1)?,
        axis2: Axis::new(resolution, lo2, hi2)?,
    })
}

/// Complex amplitudes on a [`Grid2D`], row-major with `gamma1` as the row.
#[derive(Clone, Debug, PartialEq)]
pub struct Wavefunction2D {
    pub grid: Grid2D,
    pub data: Vec<Complex64>,
}

impl Wavefunction2D {
    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            data: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_fn<F: Fn(f64, f64) -> Complex64>(grid: Grid2D, f: F) -> Self {
        let g1 = grid.axis1.points();
        let g2 = grid.axis2.points();
        let mut data = Vec::with_capacity(grid.len());
        for &x in &g1 {
            for &y in &g2 {
                data.push(f(x, y));
            }
        }
        Self { grid, data }
    }

    /// Outer product `f(gamma1) g(gamma2)`.
    pub fn product(grid: Grid2D, f: &[Complex64], g: &[Complex64]) -> Self {
        assert_eq!(f.len(), grid.axis1.n);
        assert_eq!(g.len(), grid.axis2.n);
        let data = f.iter().flat_map(|&a| g.iter().map(move |&b| a * b)).collect();
        Self { grid, data }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.grid.axis2.n + j]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroState);
        }
        self.scale(Complex64::new(1.0 / n, 0.0));
        Ok(())
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    pub fn scale(&mut self, a: Complex64) {
        for z in &mut self.data {
            *z *= a;
        }
    }

    pub fn conj(&self) -> Self {
        Self {
            grid: self.grid,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Swap the roles of the two junctions.
    pub fn transposed(&self) -> Self {
        let (n1, n2) = (self.grid.axis1.n, self.grid.axis2.n);
        let mut data = vec![Complex64::new(0.0, 0.0); n1 * n2];
        for i in 0..n1 {
            for j in 0..n2 {
                data[j * n1 + i] = self.data[i * n2 + j];
            }
        }
        Self {
            grid: self.grid.transposed(),
            data,
        }
    }

    /// Rotate the global phase so the largest-modulus amplitude is real positive.
    pub fn fix_phase(&mut self) {
        if let Some(big) = self
            .data
            .iter()
            .copied()
            .max_by(|a, b| a.norm_sqr().total_cmp(&b.norm_sqr()))
        {
            if big.norm() > 0.0 {
                self.scale(big.conj() / big.norm());
            }
        }
    }

    /// Probability on the region `gamma1 < b1` and `gamma2 < b2`.
    pub fn probability_below(&self, b1: f64, b2: f64) -> f64 {
        let n2 = self.grid.axis2.n;
        let rows = self.grid.axis1.points();
        let cols = self.grid.axis2.points();
        let mut acc = 0.0;
        for (i, &x) in rows.iter().enumerate() {
            if x >= b1 {
                continue;
            }
            for (j, &y) in cols.iter().enumerate() {
                if y < b2 {
                    acc += self.data[i * n2 + j].norm_sqr();
                }
            }
        }
        acc * self.grid.cell()
    }

    /// Mean position along each axis.
    pub fn centroid(&self) -> (f64, f64) {
        let n2 = self.grid.axis2.n;
        let rows = self.grid.axis1.points();
        let cols = self.grid.axis2.points();
        let (mut m1, mut m2, mut w) = (0.0, 0.0, 0.0);
        for (i, &x) in rows.iter().enumerate() {
            for (j, &y) in cols.iter().enumerate() {
                let p = self.data[i * n2 + j].norm_sqr();
                m1 += p * x;
                m2 += p * y;
                w += p;
            }
        }
        (m1 / w, m2 / w)
    }
}

/// `<a|b>` with the uniform grid measure.
pub fn inner(a: &Wavefunction2D, b: &Wavefunction2D) -> Result<Complex64> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    Ok(raw_inner(&a.data, &b.data) * a.grid.cell())
}

#[inline]
pub(crate) fn raw_inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re + x.im * y.im;
        im += x.re * y.im - x.im * y.re;
    }
    Complex64::new(re, im)
}

/// Schmidt spectrum and entanglement entropy of a two-junction state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntanglementReport {
    /// Nonincreasing; squares sum to the squared norm of the state.
    pub schmidt_coefficients: Vec<f64>,
    /// Entropy in ebits of the normalized Schmidt spectrum.
    pub entropy: f64,
}

pub fn entanglement(psi: &Wavefunction2D) -> Result<EntanglementReport> {
    let (n1, n2) = (psi.grid.axis1.n, psi.grid.axis2.n);
    let m = DMatrix::from_row_slice(n1, n2, &psi.data);
    let scale = psi.grid.cell().sqrt();
    let mut coeffs: Vec<f64> = m.singular_values().iter().map(|s| s * scale).collect();
    coeffs.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = coeffs.iter().map(|c| c * c).sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::ZeroState);
    }
    let entropy = coeffs
        .iter()
        .map(|c| c * c / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum::<f64>()
        .max(0.0);
    Ok(EntanglementReport {
        schmidt_coefficients: coeffs,
        entropy,
    })
}

/// Planned forward/inverse 2D FFTs with scratch buffers.
///
/// The momentum-space layout is transposed: index `k2 * n1 + k1`.
pub struct Fft2 {
    n1: usize,
    n2: usize,
    f1: Arc<dyn Fft<f64>>,
    f2: Arc<dyn Fft<f64>>,
    i1: Arc<dyn Fft<f64>>,
    i2: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    buf: Vec<Complex64>,
}

impl Fft2 {
    pub fn new(grid: &Grid2D) -> Self {
        let (n1, n2) = (grid.axis1.n, grid.axis2.n);
        let mut planner = FftPlanner::new();
        let f1 = planner.plan_fft_forward(n1);
        let f2 = planner.plan_fft_forward(n2);
        let i1 = planner.plan_fft_inverse(n1);
        let i2 = planner.plan_fft_inverse(n2);
        let scratch_len = [&f1, &f2, &i1, &i2]
            .iter()
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Self {
            n1,
            n2,
            f1,
            f2,
            i1,
            i2,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            buf: vec![Complex64::new(0.0, 0.0); n1 * n2],
        }
    }

    /// Unnormalized forward transform; `data` comes back in transposed layout.
    pub fn forward(&mut self, data: &mut Vec<Complex64>) {
        self.f2.process_with_scratch(data, &mut self.scratch);
        transpose(data, &mut self.buf, self.n1, self.n2);
        self.f1.process_with_scratch(&mut self.buf, &mut self.scratch);
        std::mem::swap(data, &mut self.buf);
    }

    /// Unnormalized inverse of [`Fft2::forward`].
    pub fn inverse(&mut self, data: &mut Vec<Complex64>) {
        self.i1.process_with_scratch(data, &mut self.scratch);
        transpose(data, &mut self.buf, self.n2, self.n1);
        self.i2.process_with_scratch(&mut self.buf, &mut self.scratch);
        std::mem::swap(data, &mut self.buf);
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const TILE: usize = 16;
    for r0 in (0..rows).step_by(TILE) {
        for c0 in (0..cols).step_by(TILE) {
            for r in r0..(r0 + TILE).min(rows) {
                for c in c0..(c0 + TILE).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Momentum-space amplitudes, row-major over `(k1, k2)` in FFT order,
/// normalized so the transform is unitary.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentumField {
    pub grid: Grid2D,
    pub data: Vec<Complex64>,
}

impl MomentumField {
    pub fn at(&self, m1: usize, m2: usize) -> Complex64 {
        self.data[m1 * self.grid.axis2.n + m2]
    }
}

pub fn to_momentum(psi: &Wavefunction2D) -> MomentumField {
    let mut fft = Fft2::new(&psi.grid);
    let mut data = psi.data.clone();
    fft.forward(&mut data);
    let (n1, n2) = (psi.grid.axis1.n, psi.grid.axis2.n);
    let mut out = vec![Complex64::new(0.0, 0.0); n1 * n2];
    transpose(&data, &mut out, n2, n1);
    let s = 1.0 / ((n1 * n2) as f64).sqrt();
    out.iter_mut().for_each(|z| *z *= s);
    MomentumField { grid: psi.grid, data: out }
}

pub fn from_momentum(field: &MomentumField) -> Wavefunction2D {
    let mut fft = Fft2::new(&field.grid);
    let (n1, n2) = (field.grid.axis1.n, field.grid.axis2.n);
    let mut data = vec![Complex64::new(0.0, 0.0); n1 * n2];
    transpose(&field.data, &mut data, n1, n2);
    fft.inverse(&mut data);
    let s = 1.0 / ((n1 * n2) as f64).sqrt();
    data.iter_mut().for_each(|z| *z *= s);
    Wavefunction2D { grid: field.grid, data }
}

/// Header line of a binary wavefunction snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub n1: usize,
    pub n2: usize,
    pub ranges: [[f64; 2]; 2],
    pub time: f64,
}

/// Write a JSON header line followed by row-major little-endian
/// `(f32 re, f32 im)` pairs.
pub fn write_snapshot<W: Write>(mut w: W, psi: &Wavefunction2D, time: f64) -> Result<()> {
    let g = psi.grid;
    let header = SnapshotHeader {
        n1: g.axis1.n,
        n2: g.axis2.n,
        ranges: [[g.axis1.min, g.axis1.max], [g.axis2.min, g.axis2.max]],
        time,
    };
    let line = serde_json::to_string(&header).map_err(|e| Error::Io(e.to_string()))?;
    w.write_all(line.as_bytes())?;
    w.write_all(b"\n")?;
    let mut bytes = Vec::with_capacity(psi.data.len() * 8);
    for z in &psi.data {
        bytes.extend_from_slice(&(z.re as f32).to_le_bytes());
        bytes.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<(SnapshotHeader, Wavefunction2D)> {
    let mut raw = Vec::new();
    r.read_to_end(&mut raw)?;
    let nl = raw
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Io("snapshot header missing".into()))?;
    let header: SnapshotHeader =
        serde_json::from_slice(&raw[..nl]).map_err(|e| Error::Io(e.to_string()))?;
    let body = &raw[nl + 1..];
    if body.len() != header.n1 * header.n2 * 8 {
        return Err(Error::Io(format!(
            "snapshot body has {} bytes, expected {}",
            body.len(),
            header.n1 * header.n2 * 8
        )));
    }
    let grid = Grid2D {
        axis1: Axis::new(header.n1, header.ranges[0][0], header.ranges[0][1])?,
        axis2: Axis::new(header.n2, header.ranges[1][0], header.ranges[1][1])?,
    };
    let data = body
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex64::new(re as f64, im as f64)
        })
        .collect();
    Ok((header, Wavefunction2D { grid, data }))
}
