//! Collective spin matrices, the non-Hermitian effective Hamiltonian, its
//! complex spectrum and the density of states.
//!
//! Everything lives in the maximal-spin sector `j = N/2` (dimension `N + 1`)
//! with the `J_z` eigenbasis ordered `m = -j, ..., +j`. Spectra are reported
//! per spin, as `E/N`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::linalg::{self, CMatrix};
use crate::{Error, ModelParams, Result};

/// Default guard on `N` for dense construction.
pub const DEFAULT_MAX_SPINS: usize = 5000;

/// Angular-momentum matrices of the symmetric sector.
///
/// Stored by their nonzero structure (diagonal `m` values and ladder
/// elements); the dense forms are produced on request.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinMatrices {
    n_spins: usize,
    /// `m` for each basis index, ascending.
    m: Vec<f64>,
    /// `<m+1|J+|m>` for `m = -j .. j-1`.
    ladder: Vec<f64>,
}

impl SpinMatrices {
    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn dimension(&self) -> usize {
        self.n_spins + 1
    }

    /// Total spin `j = N/2`.
    pub fn j(&self) -> f64 {
        self.n_spins as f64 / 2.0
    }

    pub fn m_values(&self) -> &[f64] {
        &self.m
    }

    /// `<m+1|J+|m> = sqrt(j(j+1) - m(m+1))` at basis index `i` (so `m = m_values()[i]`).
    pub fn ladder_element(&self, i: usize) -> f64 {
        self.ladder[i]
    }

    pub fn jz(&self) -> CMatrix {
        let diag: Vec<Complex64> = self.m.iter().map(|&m| Complex64::new(m, 0.0)).collect();
        CMatrix::from_diagonal(&diag)
    }

    pub fn jplus(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.dimension());
        for (i, &c) in self.ladder.iter().enumerate() {
            out[(i + 1, i)] = Complex64::new(c, 0.0);
        }
        out
    }

    pub fn jminus(&self) -> CMatrix {
        self.jplus().adjoint()
    }

    pub fn jx(&self) -> CMatrix {
        self.jplus().add(&self.jminus()).scale(Complex64::new(0.5, 0.0))
    }

    pub fn jy(&self) -> CMatrix {
        // (J+ - J-) / 2i
        self.jplus().sub(&self.jminus()).scale(Complex64::new(0.0, -0.5))
    }
}

/// Spin matrices for `n_spins` spin-1/2 particles, capped at [`DEFAULT_MAX_SPINS`].
pub fn build_spin_matrices(n_spins: usize) -> Result<SpinMatrices> {
    build_spin_matrices_capped(n_spins, DEFAULT_MAX_SPINS)
}

pub fn build_spin_matrices_capped(n_spins: usize, cap: usize) -> Result<SpinMatrices> {
    if n_spins == 0 {
        return Err(Error::InvalidParameter {
            name: "n_spins",
            reason: "must be at least 1",
        });
    }
    if n_spins > cap {
        return Err(Error::DimensionTooLarge {
            requested: n_spins,
            cap,
        });
    }
    let j = n_spins as f64 / 2.0;
    let m: Vec<f64> = (0..=n_spins).map(|i| i as f64 - j).collect();
    let ladder = m[..n_spins]
        .iter()
        .map(|&m| (j * (j + 1.0) - m * (m + 1.0)).max(0.0).sqrt())
        .collect();
    Ok(SpinMatrices { n_spins, m, ladder })
}

/// `H_eff = -h Jz - (gamma/N) Jx^2 - (gamma_y/N) Jy^2 - i (kappa/2N) J- J+`.
///
/// The feedback parameters play no role here. Built from the closed-form
/// matrix elements: `Jx^2`, `Jy^2` couple `m` to `m +- 2` and `J- J+` is
/// diagonal.
pub fn build_h_eff(params: &ModelParams) -> Result<CMatrix> {
    params.validate()?;
    let spins = build_spin_matrices(params.n_spins)?;
    Ok(h_eff_from(&spins, params))
}

pub fn h_eff_from(spins: &SpinMatrices, params: &ModelParams) -> CMatrix {
    let n = spins.n_spins as f64;
    let j = spins.j();
    let jj = j * (j + 1.0);
    let dim = spins.dimension();
    let mut h = CMatrix::zeros(dim);
    for (i, &m) in spins.m.iter().enumerate() {
        let quad_diag = 0.5 * (jj - m * m);
        let re = -params.h * m - (params.gamma + params.gamma_y) / n * quad_diag;
        let im = -params.kappa / (2.0 * n) * (jj - m * m - m);
        h[(i, i)] = Complex64::new(re, im);
        if i + 2 < dim {
            let q = spins.ladder[i] * spins.ladder[i + 1];
            let v = Complex64::new(-(params.gamma - params.gamma_y) * q / (4.0 * n), 0.0);
            h[(i + 2, i)] = v;
            h[(i, i + 2)] = v;
        }
    }
    h
}

/// Eigenvalues of the effective Hamiltonian, scaled per spin.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    /// `E_k / N`, sorted by real part then imaginary part.
    pub eigenvalues: Vec<Complex64>,
    pub n_spins: usize,
    /// Parameters the matrix was built from, when known.
    pub params: Option<ModelParams>,
}

impl ComplexSpectrum {
    /// Builds `H_eff` for `params` and diagonalizes it.
    pub fn compute(params: &ModelParams) -> Result<Self> {
        let h = build_h_eff(params)?;
        let mut s = complex_spectrum(&h)?;
        s.params = Some(*params);
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn re_range(&self) -> (f64, f64) {
        self.eigenvalues
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), z| {
                (lo.min(z.re), hi.max(z.re))
            })
    }

    pub fn max_abs_im(&self) -> f64 {
        self.eigenvalues.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    /// `sum_k E_k / N`.
    pub fn sum(&self) -> Complex64 {
        self.eigenvalues.iter().sum()
    }

    /// Mean spacing of the real parts.
    pub fn mean_level_spacing(&self) -> f64 {
        let (lo, hi) = self.re_range();
        if self.len() < 2 {
            return 0.0;
        }
        (hi - lo) / (self.len() - 1) as f64
    }
}

/// Full spectrum of a square matrix of dimension `N + 1`, reported as `E/N`.
pub fn complex_spectrum(h_eff: &CMatrix) -> Result<ComplexSpectrum> {
    let dim = h_eff.dim();
    if dim < 2 {
        return Err(Error::BadMatrix);
    }
    let n = (dim - 1) as f64;
    let mut eigenvalues: Vec<Complex64> = linalg::eigenvalues(h_eff)?.into_iter().map(|z| z / n).collect();
    if eigenvalues.len() != dim {
        return Err(Error::EigenNoConvergence {
            converged: eigenvalues.len(),
            dimension: dim,
        });
    }
    eigenvalues.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(ComplexSpectrum {
        eigenvalues,
        n_spins: dim - 1,
        params: None,
    })
}

/// Uniform bins `[k w, (k+1) w)` for `k = first .. first + count`.
///
/// Anchoring edges at integer multiples of the width keeps `E/N = -0.5` on
/// a bin edge for the usual widths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinGrid {
    pub width: f64,
    pub first: i64,
    pub count: usize,
}

impl BinGrid {
    /// Smallest anchored grid covering `[lo, hi]`.
    pub fn covering(lo: f64, hi: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() {
            return Err(Error::InvalidParameter {
                name: "bin_width",
                reason: "must be positive",
            });
        }
        if !(lo <= hi) {
            return Err(Error::Precondition("empty energy range"));
        }
        let first = (lo / width).floor() as i64;
        let last = (hi / width).floor() as i64;
        Ok(Self {
            width,
            first,
            count: (last - first + 1) as usize,
        })
    }

    pub fn edges(&self, k: usize) -> (f64, f64) {
        let a = (self.first + k as i64) as f64 * self.width;
        (a, a + self.width)
    }

    pub fn center(&self, k: usize) -> f64 {
        (self.first as f64 + k as f64 + 0.5) * self.width
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.count).map(|k| self.center(k)).collect()
    }

    pub fn index_of(&self, e: f64) -> Option<usize> {
        let k = (e / self.width).floor() as i64 - self.first;
        (k >= 0 && (k as usize) < self.count).then_some(k as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DosMethod {
    Counting,
    Resolvent,
}

impl DosMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Counting => "counting",
            Self::Resolvent => "resolvent",
        }
    }
}

/// Density of states in states per unit `E/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct DosHistogram {
    pub method: DosMethod,
    pub bin_centers: Vec<f64>,
    pub density: Vec<f64>,
    /// Set for binned results.
    pub bin_width: Option<f64>,
    /// Broadening; set for resolvent results.
    pub eta: Option<f64>,
}

impl DosHistogram {
    /// `sum density * width`; the state count for a counting histogram.
    pub fn total(&self) -> Option<f64> {
        self.bin_width.map(|w| self.density.iter().sum::<f64>() * w)
    }

    /// Center of the largest bin.
    pub fn peak(&self) -> Option<(f64, f64)> {
        self.bin_centers
            .iter()
            .zip(&self.density)
            .fold(None, |best: Option<(f64, f64)>, (&e, &d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((e, d)),
            })
    }
}

/// `(max Re - min Re) / (N / 5)`: about five states per bin.
pub fn default_bin_width(spectrum: &ComplexSpectrum) -> f64 {
    let (lo, hi) = spectrum.re_range();
    let bins = (spectrum.n_spins as f64 / 5.0).max(1.0);
    (hi - lo) / bins
}

/// Ten mean level spacings of the real spectrum.
pub fn default_eta(spectrum: &ComplexSpectrum) -> f64 {
    10.0 * spectrum.mean_level_spacing()
}

/// Histogram of the real parts of the spectrum.
pub fn dos_counting(spectrum: &ComplexSpectrum, bin_width: f64) -> Result<DosHistogram> {
    if spectrum.is_empty() {
        return Err(Error::Precondition("empty spectrum"));
    }
    let (lo, hi) = spectrum.re_range();
    let grid = BinGrid::covering(lo, hi, bin_width)?;
    let mut counts = vec![0usize; grid.count];
    for z in &spectrum.eigenvalues {
        // re_range guarantees coverage
        let k = grid.index_of(z.re).unwrap_or(grid.count - 1);
        counts[k] += 1;
    }
    Ok(DosHistogram {
        method: DosMethod::Counting,
        bin_centers: grid.centers(),
        density: counts.iter().map(|&c| c as f64 / bin_width).collect(),
        bin_width: Some(bin_width),
        eta: None,
    })
}

fn check_poles(spectrum: &ComplexSpectrum, eta: f64) -> Result<()> {
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(Error::InvalidParameter {
            name: "eta",
            reason: "must be non-negative",
        });
    }
    if spectrum.eigenvalues.iter().any(|z| !(eta - z.im > 0.0)) {
        return Err(Error::ResolventNeedsBroadening);
    }
    Ok(())
}

/// `nu(E) = -(1/pi) Im Tr (E + i eta - H_eff)^-1`, summed over the eigenvalues.
pub fn dos_resolvent(spectrum: &ComplexSpectrum, energy_grid: &[f64], eta: f64) -> Result<DosHistogram> {
    check_poles(spectrum, eta)?;
    let mut density = Vec::with_capacity(energy_grid.len());
    for &e in energy_grid {
        let z = Complex64::new(e, eta);
        let mut acc = 0.0;
        for ek in &spectrum.eigenvalues {
            let d = z - ek;
            let nsq = d.norm_sqr();
            if nsq == 0.0 {
                return Err(Error::SingularResolvent { energy: e });
            }
            // Im(1/d) = -Im(d)/|d|^2
            acc += d.im / nsq;
        }
        density.push(acc / PI);
    }
    Ok(DosHistogram {
        method: DosMethod::Resolvent,
        bin_centers: energy_grid.to_vec(),
        density,
        bin_width: None,
        eta: Some(eta),
    })
}

/// Resolvent density averaged exactly over the same bins [`dos_counting`]
/// would use: each pole contributes the Lorentzian mass
/// `(atan((b - E_k)/G_k) - atan((a - E_k)/G_k)) / pi`, `G_k = eta - Im E_k`.
pub fn dos_resolvent_binned(spectrum: &ComplexSpectrum, bin_width: f64, eta: f64) -> Result<DosHistogram> {
    check_poles(spectrum, eta)?;
    let (lo, hi) = spectrum.re_range();
    let grid = BinGrid::covering(lo, hi, bin_width)?;
    let mut density = Vec::with_capacity(grid.count);
    for k in 0..grid.count {
        let (a, b) = grid.edges(k);
        let mass: f64 = spectrum
            .eigenvalues
            .iter()
            .map(|z| {
                let g = eta - z.im;
                ((b - z.re) / g).atan() - ((a - z.re) / g).atan()
            })
            .sum();
        density.push(mass / (PI * bin_width));
    }
    Ok(DosHistogram {
        method: DosMethod::Resolvent,
        bin_centers: grid.centers(),
        density,
        bin_width: Some(bin_width),
        eta: Some(eta),
    })
}

/// Least-squares fit `density ~ a + b ln|E - center|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogFit {
    pub a: f64,
    pub b: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Fits the bins whose distance from `center` lies in `[min_offset, max_offset]`.
pub fn fit_log_divergence(dos: &DosHistogram, center: f64, min_offset: f64, max_offset: f64) -> Option<LogFit> {
    let pts: Vec<(f64, f64)> = dos
        .bin_centers
        .iter()
        .zip(&dos.density)
        .filter_map(|(&e, &d)| {
            let x = (e - center).abs();
            (x >= min_offset && x <= max_offset).then(|| (x.ln(), d))
        })
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - a - b * p.0).powi(2)).sum();
    Some(LogFit {
        a,
        b,
        r_squared: if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 },
        points: pts.len(),
    })
}
