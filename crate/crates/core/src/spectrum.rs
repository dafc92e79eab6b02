//! Static eigenproblem of the coupled junctions.
//!
//! The grid Hamiltonian uses the Fourier (spectral) kinetic operator, the
//! same one the split-operator propagator exponentiates, so static
//! eigenstates are stationary under the dynamics. The 2D problem is solved in
//! the basis of products of single-junction grid eigenstates: the uncoupled
//! part is diagonal there and the `zeta p1 p2` term factorizes into
//! projected derivative matrices. Returned eigenpairs are checked against
//! the full-grid Hamiltonian through [`GridHamiltonian::residual`].

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{entanglement, inner, Axis, Fft2, Grid2D, Wavefunction2D};
use crate::model::{detune, BiasPair, DerivedScales, JunctionWell, PotentialKind};
use crate::optimize::golden_section;

/// Relative amplitude allowed on the uphill box edge.
pub const EDGE_TOLERANCE: f64 = 1e-6;
/// Minimum in-well probability for a state to count as metastable.
pub const IN_WELL_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub kind: PotentialKind,
    /// Single-junction eigenstates per axis in the product basis.
    pub basis_per_axis: usize,
    /// Product states with uncoupled energy more than this above the lowest
    /// one are dropped (units `hbar w0`).
    pub pair_cutoff: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            kind: PotentialKind::Cubic,
            basis_per_axis: 20,
            pair_cutoff: 16.0,
        }
    }
}

/// Eigenpairs of one junction on one grid axis.
#[derive(Clone, Debug)]
pub struct AxisSpectrum {
    pub axis: Axis,
    pub well: JunctionWell,
    /// All retained eigenvalues, ascending, minimum-subtracted.
    pub energies: Vec<f64>,
    /// Columns are eigenvectors normalized with the axis measure.
    pub states: DMatrix<f64>,
    /// Whether each eigenvector sits mostly inside the barrier.
    pub in_well: Vec<bool>,
    /// `<j| d/dgamma |l>` between retained eigenvectors.
    pub derivative: DMatrix<f64>,
}

impl AxisSpectrum {
    /// Indices (into `energies`) of the metastable levels in order.
    pub fn well_levels(&self) -> Vec<usize> {
        (0..self.energies.len()).filter(|&i| self.in_well[i]).collect()
    }

    pub fn state(&self, i: usize) -> Vec<f64> {
        self.states.column(i).iter().copied().collect()
    }
}

fn circulant(n: usize, f: impl Fn(usize) -> f64) -> DMatrix<f64> {
    let row: Vec<f64> = (0..n).map(f).collect();
    DMatrix::from_fn(n, n, |a, b| row[(a + n - b) % n])
}

/// Fourier kinetic operator `c k^2` as a dense real matrix.
fn kinetic_matrix(axis: &Axis, coefficient: f64) -> DMatrix<f64> {
    let n = axis.n;
    let k = axis.wavenumbers();
    let two_pi = 2.0 * std::f64::consts::PI;
    circulant(n, |d| {
        coefficient / n as f64
            * k.iter()
                .enumerate()
                .map(|(m, km)| km * km * (two_pi * (m * d) as f64 / n as f64).cos())
                .sum::<f64>()
    })
}

/// Fourier first derivative with the Nyquist mode dropped.
fn derivative_matrix(axis: &Axis) -> DMatrix<f64> {
    let n = axis.n;
    let k = axis.derivative_wavenumbers();
    let two_pi = 2.0 * std::f64::consts::PI;
    circulant(n, |d| {
        -2.0 / n as f64
            * (1..n / 2)
                .map(|m| k[m] * (two_pi * (m * d) as f64 / n as f64).sin())
                .sum::<f64>()
    })
}

/// Diagonalize one junction (bias `j`) on `axis`, keeping `keep` eigenpairs.
pub fn axis_spectrum(
    j: f64,
    scales: &DerivedScales,
    axis: &Axis,
    keep: usize,
    kind: PotentialKind,
) -> Result<AxisSpectrum> {
    let well = JunctionWell::new(kind, j, scales);
    let kinetic = scales.kinetic_coefficient();
    let x = axis.points();
    let mut h = kinetic_matrix(axis, kinetic);
    for (i, &g) in x.iter().enumerate() {
        h[(i, i)] += well.relative(g);
    }
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..axis.n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let keep = keep.min(axis.n);
    let dx = axis.spacing();
    let scale = 1.0 / dx.sqrt();
    let barrier = well.barrier_position();
    let mut states = DMatrix::zeros(axis.n, keep);
    let mut energies = Vec::with_capacity(keep);
    let mut in_well = Vec::with_capacity(keep);
    for (c, &idx) in order.iter().take(keep).enumerate() {
        energies.push(eig.eigenvalues[idx]);
        let mut col: Vec<f64> = eig.eigenvectors.column(idx).iter().map(|v| v * scale).collect();
        let big = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if big < 0.0 {
            col.iter_mut().for_each(|v| *v = -*v);
        }
        let inside: f64 = x
            .iter()
            .zip(&col)
            .filter(|(g, _)| **g < barrier)
            .map(|(_, v)| v * v * dx)
            .sum();
        in_well.push(inside > IN_WELL_THRESHOLD && energies[c] < well.barrier_height());
        for (r, v) in col.into_iter().enumerate() {
            states[(r, c)] = v;
        }
    }
    let d = derivative_matrix(axis);
    let derivative = states.transpose() * (&d * &states) * dx;
    Ok(AxisSpectrum {
        axis: *axis,
        well,
        energies,
        states,
        in_well,
        derivative,
    })
}

/// Metastable levels of one junction.
#[derive(Clone, Debug)]
pub struct JunctionLevels {
    pub energies: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

/// Lowest `count` metastable levels of a junction at bias `j`.
pub fn solve_1d(
    j: f64,
    scales: &DerivedScales,
    axis: &Axis,
    count: usize,
    kind: PotentialKind,
) -> Result<JunctionLevels> {
    let spec = axis_spectrum(j, scales, axis, axis.n, kind)?;
    let idx = spec.well_levels();
    if idx.len() < count {
        return Err(Error::TooManyLevels {
            requested: count,
            available: idx.len(),
        });
    }
    Ok(JunctionLevels {
        energies: idx.iter().take(count).map(|&i| spec.energies[i]).collect(),
        states: idx.iter().take(count).map(|&i| spec.state(i)).collect(),
    })
}

/// Product states `|jk; eps> = |j; eps> (x) |k; -eps>` on a grid.
#[derive(Clone, Debug)]
pub struct ProductBasis {
    pub eps: f64,
    pub grid: Grid2D,
    pub axis1: AxisSpectrum,
    pub axis2: AxisSpectrum,
}

impl ProductBasis {
    pub fn new(eps: f64, scales: &DerivedScales, grid: &Grid2D, opts: &SolverOptions) -> Result<Self> {
        let bias = detune(scales.j0, eps)?;
        let axis1 = axis_spectrum(bias.j1, scales, &grid.axis1, opts.basis_per_axis, opts.kind)?;
        let axis2 = axis_spectrum(bias.j2, scales, &grid.axis2, opts.basis_per_axis, opts.kind)?;
        Ok(Self {
            eps,
            grid: *grid,
            axis1,
            axis2,
        })
    }

    /// Basis index pair of metastable product state `|jk>`.
    pub fn index_of(&self, j: usize, k: usize) -> Option<(usize, usize)> {
        let a = *self.axis1.well_levels().get(j)?;
        let b = *self.axis2.well_levels().get(k)?;
        Some((a, b))
    }

    /// `|jk>` on the grid.
    pub fn state(&self, j: usize, k: usize) -> Option<Wavefunction2D> {
        let (a, b) = self.index_of(j, k)?;
        let f: Vec<Complex64> = self.axis1.states.column(a).iter().map(|&v| v.into()).collect();
        let g: Vec<Complex64> = self.axis2.states.column(b).iter().map(|&v| v.into()).collect();
        Some(Wavefunction2D::product(self.grid, &f, &g))
    }

    /// Uncoupled energy of `|jk>`.
    pub fn energy(&self, j: usize, k: usize) -> Option<f64> {
        let (a, b) = self.index_of(j, k)?;
        Some(self.axis1.energies[a] + self.axis2.energies[b])
    }
}

/// Eigenpairs of the coupled system at one detuning.
#[derive(Clone, Debug)]
pub struct SpectrumSlice {
    pub eps: f64,
    /// Ascending, measured from the potential minimum.
    pub energies: Vec<f64>,
    pub states: Vec<Wavefunction2D>,
    /// Dominant metastable product state `(j, k)` of each level.
    pub labels: Vec<(usize, usize)>,
    /// Expansion coefficients over the product basis (rows: axis 1 index).
    pub coefficients: Vec<DMatrix<f64>>,
    pub basis: ProductBasis,
}

impl SpectrumSlice {
    /// `<jk|n)` for metastable product state `|jk>`.
    pub fn product_overlap(&self, n: usize, j: usize, k: usize) -> Option<f64> {
        let (a, b) = self.basis.index_of(j, k)?;
        Some(self.coefficients[n][(a, b)])
    }

    pub fn gap(&self, a: usize, b: usize) -> f64 {
        self.energies[b] - self.energies[a]
    }

    pub fn entropy(&self, n: usize) -> Result<f64> {
        Ok(entanglement(&self.states[n])?.entropy)
    }

    pub fn grid(&self) -> &Grid2D {
        &self.basis.grid
    }
}

/// Full-grid residual the refined eigenpairs must reach.
pub const RESIDUAL_TOLERANCE: f64 = 1e-6;
const DAVIDSON_TARGET: f64 = 1e-7;
const DAVIDSON_ITERATIONS: usize = 60;
const DAVIDSON_SUBSPACE: usize = 64;

/// Lowest `count` metastable eigenpairs of the coupled Hamiltonian at `eps`.
pub fn solve_2d(
    eps: f64,
    scales: &DerivedScales,
    grid: &Grid2D,
    count: usize,
    opts: &SolverOptions,
) -> Result<SpectrumSlice> {
    let basis = ProductBasis::new(eps, scales, grid, opts)?;
    let (e1, e2) = (&basis.axis1.energies, &basis.axis2.energies);
    let floor = e1[0] + e2[0];
    let pairs: Vec<(usize, usize)> = (0..e1.len())
        .flat_map(|a| (0..e2.len()).map(move |b| (a, b)))
        .filter(|&(a, b)| e1[a] + e2[b] <= floor + opts.pair_cutoff)
        .collect();
    let p = pairs.len();
    let coupling = -2.0 * scales.zeta * scales.kinetic_coefficient();
    let (d1, d2) = (&basis.axis1.derivative, &basis.axis2.derivative);
    let h = DMatrix::from_fn(p, p, |r, c| {
        let (a, b) = pairs[r];
        let (a2, b2) = pairs[c];
        let diag = if r == c { e1[a] + e2[b] } else { 0.0 };
        diag + coupling * d1[(a, a2)] * d2[(b, b2)]
    });
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let wells1 = basis.axis1.well_levels();
    let wells2 = basis.axis2.well_levels();
    let phi1 = &basis.axis1.states;
    let phi2 = &basis.axis2.states;
    let (m1, m2) = (e1.len(), e2.len());

    let mut guesses = Vec::new();
    let mut ritz = Vec::new();
    for &idx in &order {
        if guesses.len() == count {
            break;
        }
        let v = eig.eigenvectors.column(idx);
        let mut c = DMatrix::zeros(m1, m2);
        for (r, &(a, b)) in pairs.iter().enumerate() {
            c[(a, b)] = v[r];
        }
        let bound: f64 = wells1
            .iter()
            .flat_map(|&a| wells2.iter().map(move |&b| (a, b)))
            .map(|(a, b)| c[(a, b)] * c[(a, b)])
            .sum();
        if bound <= IN_WELL_THRESHOLD {
            continue;
        }
        let field = phi1 * &c * phi2.transpose();
        let mut x = Vec::with_capacity(grid.len());
        for i in 0..grid.axis1.n {
            for j in 0..grid.axis2.n {
                x.push(field[(i, j)]);
            }
        }
        guesses.push(x);
        ritz.push(eig.eigenvalues[idx]);
    }
    if guesses.len() < count {
        return Err(Error::TooManyLevels {
            requested: count,
            available: guesses.len(),
        });
    }

    let bias = detune(scales.j0, eps)?;
    let mut hamiltonian = GridHamiltonian::new(scales, grid, bias, opts.kind);
    let (energies, vectors) = davidson(&mut hamiltonian, guesses)?;

    let cell = grid.cell();
    let mut states = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    let mut coefficients = Vec::with_capacity(count);
    for (level, mut x) in vectors.into_iter().enumerate() {
        let norm = (x.iter().map(|v| v * v).sum::<f64>() * cell).sqrt();
        let big = x.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        let scale = big.signum() / norm;
        x.iter_mut().for_each(|v| *v *= scale);
        let field = DMatrix::from_row_slice(grid.axis1.n, grid.axis2.n, &x);
        let c = phi1.transpose() * field * phi2 * cell;
        let psi = Wavefunction2D {
            grid: *grid,
            data: x.into_iter().map(|v| Complex64::new(v, 0.0)).collect(),
        };
        check_edges(&psi, level)?;
        let mut best = (0usize, 0usize);
        let mut best_w = -1.0;
        for (j, &a) in wells1.iter().enumerate() {
            for (k, &b) in wells2.iter().enumerate() {
                let w = c[(a, b)] * c[(a, b)];
                if w > best_w + 1e-15 {
                    best_w = w;
                    best = (j, k);
                }
            }
        }
        states.push(psi);
        labels.push(best);
        coefficients.push(c);
    }
    Ok(SpectrumSlice {
        eps,
        energies,
        states,
        labels,
        coefficients,
        basis,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
}

/// Orthonormalize `v` against `basis` (two passes); `None` if nothing is left.
fn orthogonalize(basis: &[Vec<f64>], mut v: Vec<f64>) -> Option<Vec<f64>> {
    let start = dot(&v, &v).sqrt();
    for _ in 0..2 {
        for b in basis {
            let c = dot(b, &v);
            axpy(-c, b, &mut v);
        }
    }
    let n = dot(&v, &v).sqrt();
    if n <= 1e-10 * start || n == 0.0 {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= n);
    Some(v)
}

/// Block Davidson polish of approximate eigenvectors on the full grid.
///
/// Each guess is followed by the Ritz vector of largest overlap, so spurious
/// run-out states entering the subspace are never selected.
fn davidson(h: &mut GridHamiltonian, guesses: Vec<Vec<f64>>) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = guesses[0].len();
    let k = guesses.len();
    let mut targets: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut image: Vec<Vec<f64>> = Vec::new();
    let mut gram: Vec<Vec<f64>> = Vec::new();
    let push = |basis: &mut Vec<Vec<f64>>,
                image: &mut Vec<Vec<f64>>,
                gram: &mut Vec<Vec<f64>>,
                h: &mut GridHamiltonian,
                v: Vec<f64>| {
        if let Some(q) = orthogonalize(basis, v) {
            let mut hq = vec![0.0; n];
            h.apply_real(&q, &mut hq);
            let row: Vec<f64> = basis
                .iter()
                .zip(image.iter())
                .map(|(b, hb)| 0.5 * (dot(b, &hq) + dot(&q, hb)))
                .chain(std::iter::once(dot(&q, &hq)))
                .collect();
            gram.push(row);
            basis.push(q);
            image.push(hq);
        }
    };
    for g in guesses {
        let s = dot(&g, &g).sqrt();
        targets.push(g.iter().map(|v| v / s).collect());
        push(&mut basis, &mut image, &mut gram, h, g);
    }
    let mut worst = (0, f64::INFINITY);
    let mut best = None;
    for _ in 0..DAVIDSON_ITERATIONS {
        let m = basis.len();
        let s = DMatrix::from_fn(m, m, |i, j| if j <= i { gram[i][j] } else { gram[j][i] });
        let eig = SymmetricEigen::new(s);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let proj = DMatrix::from_fn(k, m, |i, j| dot(&targets[i], &basis[j]));
        let overlaps = &proj * &eig.eigenvectors;
        let mut taken = vec![false; m];
        let mut picks = Vec::with_capacity(k);
        for i in 0..k {
            let j = (0..m)
                .filter(|&j| !taken[j])
                .max_by(|&a, &b| overlaps[(i, a)].abs().total_cmp(&overlaps[(i, b)].abs()))
                .ok_or(Error::ZeroState)?;
            taken[j] = true;
            picks.push(j);
        }
        picks.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let mut values = Vec::with_capacity(k);
        let mut vectors = Vec::with_capacity(k);
        let mut residuals = Vec::with_capacity(k);
        worst = (0, 0.0);
        for (level, &j) in picks.iter().enumerate() {
            let y = eig.eigenvectors.column(j);
            let theta = eig.eigenvalues[j];
            let mut x = vec![0.0; n];
            let mut r = vec![0.0; n];
            for b in 0..m {
                axpy(y[b], &basis[b], &mut x);
                axpy(y[b], &image[b], &mut r);
            }
            axpy(-theta, &x, &mut r);
            let res = (dot(&r, &r) / dot(&x, &x)).sqrt();
            if res > worst.1 {
                worst = (level, res);
            }
            values.push(theta);
            vectors.push(x);
            residuals.push((res, r));
        }
        if worst.1 < DAVIDSON_TARGET {
            return Ok((values, vectors));
        }
        if basis.len() + k > DAVIDSON_SUBSPACE {
            basis.clear();
            image.clear();
            gram.clear();
            for x in &vectors {
                push(&mut basis, &mut image, &mut gram, h, x.clone());
            }
        }
        for (res, r) in residuals {
            if res >= DAVIDSON_TARGET {
                let mut t = vec![0.0; n];
                h.precondition(&r, &mut t);
                push(&mut basis, &mut image, &mut gram, h, t);
            }
        }
        let stalled = basis.len() == m;
        if worst.1 < RESIDUAL_TOLERANCE {
            best = Some((values, vectors.clone()));
        }
        targets = vectors;
        if stalled {
            break;
        }
    }
    if let Some(found) = best {
        return Ok(found);
    }
    Err(Error::Unconverged {
        level: worst.0,
        residual: worst.1,
    })
}

/// Amplitude on the uphill walls (first row and column) relative to the peak.
///
/// The grid is periodic, so the uphill wall also carries the image of the
/// downhill run-out tail; only amplitude above that image counts.
fn check_edges(psi: &Wavefunction2D, level: usize) -> Result<()> {
    let (n1, n2) = (psi.grid.axis1.n, psi.grid.axis2.n);
    let peak = psi.data.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let (mut uphill, mut downhill) = (0.0f64, 0.0f64);
    for j in 0..n2 {
        uphill = uphill.max(psi.at(0, j).norm());
        downhill = downhill.max(psi.at(n1 - 1, j).norm());
    }
    for i in 0..n1 {
        uphill = uphill.max(psi.at(i, 0).norm());
        downhill = downhill.max(psi.at(i, n2 - 1).norm());
    }
    let rel = uphill / peak;
    if rel > EDGE_TOLERANCE && uphill > downhill {
        Err(Error::Coverage {
            level,
            amplitude: rel,
        })
    } else {
        Ok(())
    }
}

/// The coupled Hamiltonian applied on the full grid through FFTs.
pub struct GridHamiltonian {
    grid: Grid2D,
    potential: Vec<f64>,
    /// Kinetic symbol in the transposed momentum layout, including `1/N`.
    symbol: Vec<f64>,
    fft: Fft2,
    buffer: Vec<Complex64>,
}

impl GridHamiltonian {
    pub fn new(scales: &DerivedScales, grid: &Grid2D, bias: BiasPair, kind: PotentialKind) -> Self {
        let w1 = JunctionWell::new(kind, bias.j1, scales);
        let w2 = JunctionWell::new(kind, bias.j2, scales);
        let v1: Vec<f64> = grid.axis1.points().iter().map(|&g| w1.relative(g)).collect();
        let v2: Vec<f64> = grid.axis2.points().iter().map(|&g| w2.relative(g)).collect();
        let potential = v1.iter().flat_map(|a| v2.iter().map(move |b| a + b)).collect();
        Self {
            grid: *grid,
            potential,
            symbol: kinetic_symbol(scales, grid),
            fft: Fft2::new(grid),
            buffer: vec![Complex64::default(); grid.len()],
        }
    }

    /// `H x` for a real grid vector.
    fn apply_real(&mut self, x: &[f64], out: &mut [f64]) {
        for (z, v) in self.buffer.iter_mut().zip(x) {
            *z = Complex64::new(*v, 0.0);
        }
        self.fft.forward(&mut self.buffer);
        for (z, s) in self.buffer.iter_mut().zip(&self.symbol) {
            *z *= *s;
        }
        self.fft.inverse(&mut self.buffer);
        for (((o, z), v), p) in out.iter_mut().zip(&self.buffer).zip(&self.potential).zip(x) {
            *o = z.re + v * p;
        }
    }

    /// `(T + 1)^-1 r`, damping the high-wavenumber part of a residual.
    fn precondition(&mut self, r: &[f64], out: &mut [f64]) {
        for (z, v) in self.buffer.iter_mut().zip(r) {
            *z = Complex64::new(*v, 0.0);
        }
        self.fft.forward(&mut self.buffer);
        let norm = 1.0 / self.grid.len() as f64;
        for (z, s) in self.buffer.iter_mut().zip(&self.symbol) {
            *z *= norm / (s / norm + 1.0);
        }
        self.fft.inverse(&mut self.buffer);
        for (o, z) in out.iter_mut().zip(&self.buffer) {
            *o = z.re;
        }
    }

    pub fn apply(&mut self, psi: &Wavefunction2D) -> Result<Wavefunction2D> {
        if psi.grid != self.grid {
            return Err(Error::GridMismatch);
        }
        let mut k = psi.data.clone();
        self.fft.forward(&mut k);
        for (z, s) in k.iter_mut().zip(&self.symbol) {
            *z *= *s;
        }
        self.fft.inverse(&mut k);
        for ((z, v), p) in k.iter_mut().zip(&self.potential).zip(&psi.data) {
            *z += *v * p;
        }
        Ok(Wavefunction2D { grid: self.grid, data: k })
    }

    /// `||H psi - E psi|| / ||psi||`.
    pub fn residual(&mut self, psi: &Wavefunction2D, energy: f64) -> Result<f64> {
        let h = self.apply(psi)?;
        let r: f64 = h
            .data
            .iter()
            .zip(&psi.data)
            .map(|(a, b)| (a - b * energy).norm_sqr())
            .sum();
        let n: f64 = psi.data.iter().map(|z| z.norm_sqr()).sum();
        Ok((r / n).sqrt())
    }

    /// `<psi|H|psi> / <psi|psi>`.
    pub fn expectation(&mut self, psi: &Wavefunction2D) -> Result<f64> {
        let h = self.apply(psi)?;
        Ok(inner(psi, &h)?.re / psi.norm_sqr())
    }
}

/// Kinetic energy on the momentum grid (transposed layout `k2 * n1 + k1`),
/// scaled by `1 / (n1 n2)` to pair with unnormalized FFTs.
pub(crate) fn kinetic_symbol(scales: &DerivedScales, grid: &Grid2D) -> Vec<f64> {
    let c = scales.kinetic_coefficient();
    let z = scales.zeta;
    let k1 = grid.axis1.wavenumbers();
    let k2 = grid.axis2.wavenumbers();
    let q1 = grid.axis1.derivative_wavenumbers();
    let q2 = grid.axis2.derivative_wavenumbers();
    let norm = 1.0 / grid.len() as f64;
    let mut out = Vec::with_capacity(grid.len());
    for b in 0..grid.axis2.n {
        for a in 0..grid.axis1.n {
            out.push(norm * c * (k1[a] * k1[a] + k2[b] * k2[b] + 2.0 * z * q1[a] * q2[b]));
        }
    }
    out
}

/// Energies and states along a detuning sweep, labeled adiabatically.
#[derive(Clone, Debug)]
pub struct LevelTrack {
    pub slices: Vec<SpectrumSlice>,
}

impl LevelTrack {
    pub fn eps_values(&self) -> Vec<f64> {
        self.slices.iter().map(|s| s.eps).collect()
    }

    pub fn energies(&self, level: usize) -> Vec<f64> {
        self.slices.iter().map(|s| s.energies[level]).collect()
    }

    pub fn levels(&self) -> usize {
        self.slices.first().map_or(0, |s| s.energies.len())
    }

    /// Index of the sampled minimum of `E_b - E_a`.
    pub fn min_gap(&self, a: usize, b: usize) -> Option<(f64, f64)> {
        self.slices
            .iter()
            .map(|s| (s.eps, s.gap(a, b)))
            .min_by(|x, y| x.1.total_cmp(&y.1))
    }
}

/// Smallest step the sweep refines to before declaring a continuity failure.
pub const MIN_SWEEP_STEP: f64 = 1e-5;

/// Solve every detuning in `eps_list` (sorted) and stitch the slices into
/// tracks, bisecting any step where a level's best successor is not the
/// same adiabatic index with overlap above one half.
pub fn sweep(
    eps_list: &[f64],
    scales: &DerivedScales,
    grid: &Grid2D,
    count: usize,
    opts: &SolverOptions,
) -> Result<LevelTrack> {
    if eps_list.is_empty() {
        return Err(Error::Configuration("empty detuning list".into()));
    }
    if eps_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Configuration("detuning list must be strictly increasing".into()));
    }
    let solve = |e: &f64| solve_2d(*e, scales, grid, count, opts);
    let mut slices: Vec<SpectrumSlice> = eps_list.par_iter().map(solve).collect::<Result<_>>()?;
    let mut i = 0;
    while i + 1 < slices.len() {
        match continuity(&slices[i], &slices[i + 1])? {
            None => i += 1,
            Some((level, overlap)) => {
                let (lo, hi) = (slices[i].eps, slices[i + 1].eps);
                if hi - lo < MIN_SWEEP_STEP {
                    return Err(Error::Continuity {
                        eps_lo: lo,
                        eps_hi: hi,
                        level,
                        overlap,
                    });
                }
                let mid = solve_2d(0.5 * (lo + hi), scales, grid, count, opts)?;
                slices.insert(i + 1, mid);
            }
        }
    }
    Ok(LevelTrack { slices })
}

/// First level whose best match in `b` is another index or overlaps weakly.
fn continuity(a: &SpectrumSlice, b: &SpectrumSlice) -> Result<Option<(usize, f64)>> {
    let n = a.states.len();
    for i in 0..n {
        let mut best = (0, 0.0f64);
        for j in 0..n {
            let o = inner(&a.states[i], &b.states[j])?.norm();
            if o > best.1 {
                best = (j, o);
            }
        }
        if best.0 != i || best.1 <= 0.5 {
            return Ok(Some((i, best.1)));
        }
    }
    Ok(None)
}

/// Evenly spaced detunings from `start` to `stop` inclusive; empty when
/// `stop < start` or `step` is not positive.
pub fn eps_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0 && step.is_finite() && start.is_finite() && stop.is_finite()) {
        return Vec::new();
    }
    let n = ((stop - start) / step).round() as i64;
    if n < 0 {
        return Vec::new();
    }
    // Snap to 1e-12 so points that should be exact (notably 0) are.
    (0..=n)
        .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12 + 0.0)
        .collect()
}

/// Location and size of an avoided crossing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub eps_star: f64,
    pub gap: f64,
    pub levels: (usize, usize),
}

/// Golden-section search for the minimum of `E_b - E_a` on `interval`.
pub fn find_avoided_crossing(
    levels: (usize, usize),
    interval: (f64, f64),
    scales: &DerivedScales,
    grid: &Grid2D,
    opts: &SolverOptions,
) -> Result<Crossing> {
    let (a, b) = levels;
    let count = a.max(b) + 1;
    let xtol = 5e-5;
    let gap = |e: f64| -> Result<f64> { Ok(solve_2d(e, scales, grid, count, opts)?.gap(a, b)) };
    let m = golden_section(gap, interval.0, interval.1, xtol)?;
    let (lo, hi) = (interval.0.min(interval.1), interval.0.max(interval.1));
    if m.x - lo < 2.0 * xtol || hi - m.x < 2.0 * xtol {
        return Err(Error::NoInteriorMinimum { lo, hi });
    }
    Ok(Crossing {
        eps_star: m.x,
        gap: m.value,
        levels,
    })
}

/// Three-state mixing at the symmetric point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingAngle {
    /// `arcsin |<11|3)|`.
    pub theta: f64,
    /// `arccos |<11|5)|`, which agrees with `theta` when the triplet closes.
    pub theta_upper: f64,
    /// `|<11|4)|`, zero for the antisymmetric state.
    pub antisymmetric_overlap: f64,
}

pub fn mixing_angle(slice: &SpectrumSlice) -> Result<MixingAngle> {
    if slice.energies.len() < 6 {
        return Err(Error::TooManyLevels {
            requested: 6,
            available: slice.energies.len(),
        });
    }
    let triplet = [(2, 0), (1, 1), (0, 2)];
    for n in 3..6 {
        if !triplet.contains(&slice.labels[n]) {
            return Err(Error::LabelMismatch {
                eps: slice.eps,
                level: n,
                found: slice.labels[n],
                expected: (1, 1),
            });
        }
    }
    let o = |n| slice.product_overlap(n, 1, 1).map(f64::abs).unwrap_or(0.0);
    Ok(MixingAngle {
        theta: o(3).min(1.0).asin(),
        theta_upper: o(5).min(1.0).acos(),
        antisymmetric_overlap: o(4),
    })
}

/// Weight of level `n` inside the span of `{|02>, |11>, |20>}`.
pub fn triplet_weight(slice: &SpectrumSlice, n: usize) -> f64 {
    [(0, 2), (1, 1), (2, 0)]
        .iter()
        .filter_map(|&(j, k)| slice.product_overlap(n, j, k))
        .map(|c| c * c)
        .sum()
}

/// Detunings `-5/(36 N_s)` and `+5/(36 N_s)` of the off-symmetry degeneracies.
pub fn perturbative_eps(ns: f64) -> (f64, f64) {
    let e = 5.0 / (36.0 * ns);
    (-e, e)
}

/// Relative tunneling scale `exp(-36 N_s / 5)`.
pub fn tunneling_scale(ns: f64) -> f64 {
    (-36.0 * ns / 5.0).exp()
}
