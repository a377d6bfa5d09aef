//! Dense complex matrices and a general (non-Hermitian) eigenvalue solver.
//!
//! [`eigenvalues`] first splits the matrix into its irreducible diagonal
//! blocks (a symmetric permutation of the index set, which is exact), reduces
//! each block to upper Hessenberg form with Householder reflections unless it
//! already is, and runs the implicit single-shift complex QR iteration with
//! Wilkinson shifts. Only eigenvalues are computed, so every transformation is
//! confined to the active window of the iteration.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use num_complex::Complex64;
use num_traits::Zero;
#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result};

/// Square, row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    n: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![Complex64::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        Self {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        Self {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    /// Plain O(n^3) product. Meant for small matrices.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                let orow = &other.data[k * n..(k + 1) * n];
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entry of the anti-Hermitian part `(A - A^H)/2`.
    pub fn max_anti_hermitian(&self) -> f64 {
        let n = self.n;
        let mut m: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                m = m.max(((self[(i, j)] - self[(j, i)].conj()) * 0.5).norm());
            }
        }
        m
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.n + j]
    }
}

/// All eigenvalues of a general complex matrix, in no particular order.
pub fn eigenvalues(a: &CMatrix) -> Result<Vec<Complex64>> {
    let n = a.dim();
    if n == 0 {
        return Err(Error::BadMatrix);
    }
    if a.data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Precondition("matrix has non-finite entries"));
    }
    let mut out = Vec::with_capacity(n);
    for block in irreducible_blocks(a) {
        let m = block.len();
        let mut h = CMatrix::from_fn(m, |i, j| a[(block[i], block[j])]);
        if let Some((diag, off)) = symmetric_tridiagonal(&h) {
            if let Some(values) = tridiagonal_ql(diag, off) {
                out.extend(values);
                continue;
            }
        }
        if !is_upper_hessenberg(&h) {
            reduce_to_hessenberg(&mut h);
        }
        hessenberg_qr(&mut h, &mut out).map_err(|converged| Error::EigenNoConvergence {
            converged: out.len() + converged,
            dimension: n,
        })?;
    }
    Ok(out)
}

/// Diagonal and off-diagonal of a complex symmetric (`A = A^T`, not
/// Hermitian) tridiagonal matrix, or `None` for any other structure.
fn symmetric_tridiagonal(h: &CMatrix) -> Option<(Vec<Complex64>, Vec<Complex64>)> {
    let n = h.dim();
    for i in 0..n {
        let row = h.row(i);
        for (j, z) in row.iter().enumerate() {
            if (i > j + 1 || j > i + 1) && !z.is_zero() {
                return None;
            }
        }
        if i + 1 < n && row[i + 1] != h[(i + 1, i)] {
            return None;
        }
    }
    let diag = (0..n).map(|i| h[(i, i)]).collect();
    let off = (0..n.saturating_sub(1)).map(|i| h[(i, i + 1)]).collect();
    Some((diag, off))
}

/// Implicit QL with complex orthogonal rotations (`c^2 + s^2 = 1`) for a
/// complex symmetric tridiagonal matrix. `O(n^2)`; returns `None` on
/// breakdown or non-convergence so the caller can fall back to QR.
fn tridiagonal_ql(mut d: Vec<Complex64>, off: Vec<Complex64>) -> Option<Vec<Complex64>> {
    let n = d.len();
    let mut e = off;
    e.push(Complex64::zero());
    let one = Complex64::new(1.0, 0.0);
    let pythag = |a: Complex64, b: Complex64| (a * a + b * b).sqrt();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].norm() + d[m + 1].norm();
                if e[m].norm() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_SWEEPS_PER_EIGENVALUE {
                return None;
            }
            let mut g = (d[l + 1] - d[l]) / (e[l] * 2.0);
            let r = pythag(g, one);
            let denom = if (g + r).norm() >= (g - r).norm() { g + r } else { g - r };
            g = d[m] - d[l] + e[l] / denom;
            let (mut s, mut c, mut p) = (one, one, Complex64::zero());
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                let r = pythag(f, g);
                e[i + 1] = r;
                if r.norm() <= f64::MIN_POSITIVE {
                    // isotropic or underflowing rotation
                    return None;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                let r = (d[i] - g) * s + c * b * 2.0;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = Complex64::zero();
        }
    }
    d.iter().all(|z| z.re.is_finite() && z.im.is_finite()).then_some(d)
}

/// Eigenvalues of `[[a, b], [c, d]]`, larger-modulus root first.
pub fn eigenvalues_2x2(
    a: Complex64,
    b: Complex64,
    c: Complex64,
    d: Complex64,
) -> (Complex64, Complex64) {
    let mean = (a + d) * 0.5;
    let half_diff = (a - d) * 0.5;
    let root = (half_diff * half_diff + b * c).sqrt();
    // pick the sign that avoids cancellation, recover the other from the determinant
    let big = if (mean + root).norm() >= (mean - root).norm() {
        mean + root
    } else {
        mean - root
    };
    let det = a * d - b * c;
    let small = if big.is_zero() { Complex64::zero() } else { det / big };
    (big, small)
}

/// Connected components of the symmetric sparsity graph, each sorted ascending.
fn irreducible_blocks(a: &CMatrix) -> Vec<Vec<usize>> {
    let n = a.dim();
    // union-find over the nonzero pattern
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for (j, z) in a.row(i).iter().enumerate() {
            if j != i && !z.is_zero() {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut label = vec![usize::MAX; n];
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        if label[r] == usize::MAX {
            label[r] = blocks.len();
            blocks.push(Vec::new());
        }
        blocks[label[r]].push(i);
    }
    blocks
}

fn is_upper_hessenberg(h: &CMatrix) -> bool {
    let n = h.dim();
    (2..n).all(|i| h.row(i)[..i - 1].iter().all(|z| z.is_zero()))
}

/// Householder reduction to upper Hessenberg form (similarity transform).
fn reduce_to_hessenberg(h: &mut CMatrix) {
    let n = h.dim();
    if n < 3 {
        return;
    }
    let mut v = vec![Complex64::zero(); n];
    for k in 0..n - 2 {
        let tail: f64 = (k + 2..n).map(|i| h[(i, k)].norm_sqr()).sum();
        if tail == 0.0 {
            continue;
        }
        let x0 = h[(k + 1, k)];
        let norm = (tail + x0.norm_sqr()).sqrt();
        let phase = if x0.is_zero() {
            Complex64::new(1.0, 0.0)
        } else {
            x0 / x0.norm()
        };
        // v = x + phase*|x| e1, reflector P = I - 2 v v^H / (v^H v)
        v[k + 1] = x0 + phase * norm;
        for i in k + 2..n {
            v[i] = h[(i, k)];
        }
        let vnorm_sq: f64 = (k + 1..n).map(|i| v[i].norm_sqr()).sum();
        let beta = 2.0 / vnorm_sq;

        // left: rows k+1.., columns k..
        for j in k..n {
            let mut s = Complex64::zero();
            for i in k + 1..n {
                s += v[i].conj() * h[(i, j)];
            }
            s *= beta;
            for i in k + 1..n {
                let vi = v[i];
                h[(i, j)] -= vi * s;
            }
        }
        // right: all rows, columns k+1..
        for i in 0..n {
            let row = &mut h.data[i * n..(i + 1) * n];
            let mut s = Complex64::zero();
            for j in k + 1..n {
                s += row[j] * v[j];
            }
            s *= beta;
            for j in k + 1..n {
                row[j] -= s * v[j].conj();
            }
        }
        for i in k + 2..n {
            h[(i, k)] = Complex64::zero();
        }
    }
}

#[inline]
fn abs1(z: Complex64) -> f64 {
    z.re.abs() + z.im.abs()
}

/// Unitary rotation `[[c, s], [-conj(s), c]]` with real `c` mapping `(x, y)` to `(r, 0)`.
#[inline]
fn givens(x: Complex64, y: Complex64) -> (f64, Complex64) {
    let ax = x.norm();
    let ay = y.norm();
    if ay == 0.0 {
        return (1.0, Complex64::zero());
    }
    if ax == 0.0 {
        return (0.0, y.conj() / ay);
    }
    let r = ax.hypot(ay);
    (ax / r, (x / ax) * y.conj() / r)
}

const MAX_SWEEPS_PER_EIGENVALUE: usize = 60;

/// Implicit single-shift QR on an upper Hessenberg matrix. Appends the
/// eigenvalues to `out`; on failure returns how many were found.
fn hessenberg_qr(h: &mut CMatrix, out: &mut Vec<Complex64>) -> core::result::Result<(), usize> {
    let n = h.dim();
    let start = out.len();
    let eps = f64::EPSILON;
    let norm_scale = h.max_abs().max(f64::MIN_POSITIVE);
    let mut hi = n as isize - 1;
    let mut sweeps = 0usize;

    while hi >= 0 {
        let hu = hi as usize;
        // locate the start of the unreduced block ending at `hi`
        let mut lo = hu;
        while lo > 0 {
            let sub = h[(lo, lo - 1)];
            let mut s = abs1(h[(lo - 1, lo - 1)]) + abs1(h[(lo, lo)]);
            if s == 0.0 {
                s = norm_scale;
            }
            if abs1(sub) <= eps * s {
                h[(lo, lo - 1)] = Complex64::zero();
                break;
            }
            lo -= 1;
        }

        if lo == hu {
            out.push(h[(hu, hu)]);
            hi -= 1;
            sweeps = 0;
            continue;
        }
        if lo + 1 == hu {
            let (a, b) = eigenvalues_2x2(h[(lo, lo)], h[(lo, hu)], h[(hu, lo)], h[(hu, hu)]);
            out.push(a);
            out.push(b);
            hi -= 2;
            sweeps = 0;
            continue;
        }

        sweeps += 1;
        if sweeps > MAX_SWEEPS_PER_EIGENVALUE {
            return Err(out.len() - start);
        }

        let shift = if sweeps % 10 == 0 {
            // exceptional shift to break cycles
            h[(hu, hu)] + Complex64::new(0.75 * abs1(h[(hu, hu - 1)]), 0.0)
        } else {
            let a = h[(hu - 1, hu - 1)];
            let b = h[(hu - 1, hu)];
            let c = h[(hu, hu - 1)];
            let d = h[(hu, hu)];
            let (e1, e2) = eigenvalues_2x2(a, b, c, d);
            if (e1 - d).norm() <= (e2 - d).norm() {
                e1
            } else {
                e2
            }
        };

        // bulge chase over the active window [lo, hu]
        for k in lo..hu {
            let (x, y) = if k == lo {
                (h[(lo, lo)] - shift, h[(lo + 1, lo)])
            } else {
                (h[(k, k - 1)], h[(k + 1, k - 1)])
            };
            let (c, s) = givens(x, y);
            let sc = s.conj();

            let col0 = if k > lo { k - 1 } else { lo };
            let (upper, lower) = h.data.split_at_mut((k + 1) * n);
            let row_k = &mut upper[k * n + col0..k * n + hu + 1];
            let row_k1 = &mut lower[col0..hu + 1];
            for (a, b) in row_k.iter_mut().zip(row_k1.iter_mut()) {
                let (va, vb) = (*a, *b);
                *a = va * c + s * vb;
                *b = vb * c - sc * va;
            }

            let row_end = (k + 2).min(hu);
            for i in lo..=row_end {
                let a = h[(i, k)];
                let b = h[(i, k + 1)];
                h[(i, k)] = a * c + b * sc;
                h[(i, k + 1)] = b * c - a * s;
            }
            if k > lo {
                h[(k + 1, k - 1)] = Complex64::zero();
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));
        v
    }

    #[test]
    fn diagonal_and_triangular() {
        let d = [c(3.0, 1.0), c(-1.0, 0.0), c(0.5, -2.0)];
        let ev = sorted(eigenvalues(&CMatrix::from_diagonal(&d)).unwrap());
        assert_eq!(ev, sorted(d.to_vec()));

        let t = CMatrix::from_fn(4, |i, j| {
            if j >= i {
                c((i + 2 * j) as f64, (i as f64) - 1.0)
            } else {
                Complex64::zero()
            }
        });
        let ev = sorted(eigenvalues(&t).unwrap());
        let want = sorted((0..4).map(|i| t[(i, i)]).collect());
        for (a, b) in ev.iter().zip(&want) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn rotation_generator_has_imaginary_pair() {
        // [[0, -1], [1, 0]] embedded in a 3x3 with coupling so it is not split
        let m = CMatrix::from_fn(3, |i, j| match (i, j) {
            (0, 1) => c(-1.0, 0.0),
            (1, 0) => c(1.0, 0.0),
            (2, 2) => c(2.0, 0.0),
            (0, 2) => c(0.3, 0.0),
            _ => Complex64::zero(),
        });
        let ev = sorted(eigenvalues(&m).unwrap());
        assert!((ev[0] - c(0.0, -1.0)).norm() < 1e-12);
        assert!((ev[1] - c(0.0, 1.0)).norm() < 1e-12);
        assert!((ev[2] - c(2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn companion_matrix_roots() {
        // (z - 1)(z - 2i)(z + 3)(z - 0.5 + 0.5i), companion form, full Hessenberg
        let roots = [c(1.0, 0.0), c(0.0, 2.0), c(-3.0, 0.0), c(0.5, -0.5)];
        let mut coeffs = vec![c(1.0, 0.0)];
        for r in roots {
            let mut next = vec![Complex64::zero(); coeffs.len() + 1];
            for (k, a) in coeffs.iter().enumerate() {
                next[k] += a;
                next[k + 1] -= a * r;
            }
            coeffs = next;
        }
        let n = roots.len();
        let m = CMatrix::from_fn(n, |i, j| {
            if i == 0 {
                -coeffs[j + 1]
            } else if i == j + 1 {
                c(1.0, 0.0)
            } else {
                Complex64::zero()
            }
        });
        let ev = sorted(eigenvalues(&m).unwrap());
        let want = sorted(roots.to_vec());
        for (a, b) in ev.iter().zip(&want) {
            assert!((a - b).norm() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn hessenberg_reduction_preserves_trace_and_shape() {
        let m = CMatrix::from_fn(6, |i, j| c(((i * 7 + j * 3) % 5) as f64 - 2.0, ((i + 2 * j) % 3) as f64));
        let mut h = m.clone();
        reduce_to_hessenberg(&mut h);
        assert!(is_upper_hessenberg(&h));
        assert!((h.trace() - m.trace()).norm() < 1e-12);
    }

    #[test]
    fn splitting_finds_parity_blocks() {
        // couplings only between indices of equal parity
        let m = CMatrix::from_fn(7, |i, j| {
            if i == j {
                c(i as f64, 0.0)
            } else if i.abs_diff(j) == 2 {
                c(0.5, 0.0)
            } else {
                Complex64::zero()
            }
        });
        let blocks = irreducible_blocks(&m);
        assert_eq!(blocks, vec![vec![0, 2, 4, 6], vec![1, 3, 5]]);
    }

    #[test]
    fn real_symmetric_input_gives_real_eigenvalues() {
        let m = CMatrix::from_fn(40, |i, j| {
            if i == j {
                c((i as f64).sin() * 3.0, 0.0)
            } else if i.abs_diff(j) == 1 {
                c(1.0 + 0.01 * (i + j) as f64, 0.0)
            } else {
                Complex64::zero()
            }
        });
        let ev = eigenvalues(&m).unwrap();
        assert_eq!(ev.len(), 40);
        assert!(ev.iter().all(|z| z.im == 0.0));
        let sum: Complex64 = ev.iter().sum();
        assert!((sum - m.trace()).norm() < 1e-11);
    }

    #[test]
    fn tridiagonal_ql_matches_hessenberg_qr() {
        for scale in [0.01, 0.3, 2.0] {
            let m = CMatrix::from_fn(60, |i, j| {
                if i == j {
                    c((i as f64 * 0.37).cos() * 2.0, -scale * (1.0 + (i as f64 * 0.11).sin()))
                } else if i.abs_diff(j) == 1 {
                    let k = i.min(j) as f64;
                    c(0.8 + 0.1 * (k * 0.5).sin(), 0.05 * scale * k.cos())
                } else {
                    Complex64::zero()
                }
            });
            let (d, e) = symmetric_tridiagonal(&m).unwrap();
            let fast = sorted(tridiagonal_ql(d, e).unwrap());
            let mut h = m.clone();
            let mut slow = Vec::new();
            hessenberg_qr(&mut h, &mut slow).unwrap();
            let slow = sorted(slow);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).norm() < 1e-11, "{scale}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn structure_detection() {
        let mut m = CMatrix::from_fn(4, |i, j| if i.abs_diff(j) <= 1 { c(1.0, i as f64) } else { Complex64::zero() });
        assert!(symmetric_tridiagonal(&m).is_none());
        m = CMatrix::from_fn(4, |i, j| if i.abs_diff(j) <= 1 { c(1.0, (i + j) as f64) } else { Complex64::zero() });
        assert!(symmetric_tridiagonal(&m).is_some());
        m[(0, 3)] = c(0.1, 0.0);
        m[(3, 0)] = c(0.1, 0.0);
        assert!(symmetric_tridiagonal(&m).is_none());
    }

    #[test]
    fn rejects_empty_and_nonfinite() {
        assert_eq!(eigenvalues(&CMatrix::zeros(0)), Err(Error::BadMatrix));
        let mut m = CMatrix::identity(3);
        m[(1, 2)] = c(f64::NAN, 0.0);
        assert!(eigenvalues(&m).is_err());
    }

    #[test]
    fn two_by_two_closed_form() {
        let (a, b) = eigenvalues_2x2(c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0));
        // (5 +- sqrt(33))/2
        let s = 33f64.sqrt();
        assert!((a - c((5.0 + s) / 2.0, 0.0)).norm() < 1e-14);
        assert!((b - c((5.0 - s) / 2.0, 0.0)).norm() < 1e-14);
    }
}
