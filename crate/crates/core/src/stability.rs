//! Fixed points, delayed linear stability and the closed-form stability
//! boundaries in the `(tau, lambda)` plane.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::error::BrokenBranchAbsence;
use crate::linalg::eigenvalues_2x2;
use crate::{Error, ModelParams, Result, SpinState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// The north pole.
    Normal,
    /// Symmetry-broken state with `jx > 0`.
    BrokenPlus,
    /// Its Z2 partner, `jx < 0`.
    BrokenMinus,
}

impl Branch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Normal => "normal",
            Self::BrokenPlus => "broken_plus",
            Self::BrokenMinus => "broken_minus",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    pub branch: Branch,
    pub state: SpinState,
}

/// All fixed points, plus the reason the broken pair is missing when it is.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoints {
    pub points: Vec<FixedPoint>,
    pub broken_absent: Option<BrokenBranchAbsence>,
}

impl FixedPoints {
    pub fn get(&self, branch: Branch) -> Option<FixedPoint> {
        self.points.iter().copied().find(|p| p.branch == branch)
    }
}

/// `gamma_c = h + kappa^2 / (4h)`.
pub fn critical_coupling(params: &ModelParams) -> f64 {
    params.h + params.kappa * params.kappa / (4.0 * params.h)
}

/// Broken-phase state with `jx > 0`, written in terms of
/// `S = sqrt(gamma^2 - kappa^2)` so that `kappa -> 0` is regular.
fn broken_state(params: &ModelParams) -> core::result::Result<SpinState, BrokenBranchAbsence> {
    let (h, g, k) = (params.h, params.gamma, params.kappa);
    if g < k {
        return Err(BrokenBranchAbsence::CouplingBelowDecay);
    }
    let gs = g + (g * g - k * k).sqrt();
    let jx2 = (gs - 4.0 * h * h / gs) / (8.0 * g);
    if !(jx2 >= 0.0) || gs < 2.0 * h {
        return Err(BrokenBranchAbsence::BelowCritical);
    }
    let jx = jx2.sqrt();
    Ok(SpinState::new_unchecked(jx, k / gs * jx, h / gs))
}

/// The normal state and, above the critical coupling, the broken pair.
pub fn fixed_points(params: &ModelParams) -> Result<FixedPoints> {
    params.validate()?;
    let mut points = alloc::vec![FixedPoint {
        branch: Branch::Normal,
        state: SpinState::NORTH_POLE,
    }];
    let broken_absent = match broken_state(params) {
        Ok(s) => {
            points.push(FixedPoint {
                branch: Branch::BrokenPlus,
                state: s,
            });
            points.push(FixedPoint {
                branch: Branch::BrokenMinus,
                state: s.flipped(),
            });
            None
        }
        Err(reason) => Some(reason),
    };
    Ok(FixedPoints { points, broken_absent })
}

/// The `jx > 0` broken state, or why it does not exist.
pub fn broken_fixed_point(params: &ModelParams) -> Result<FixedPoint> {
    params.validate()?;
    broken_state(params)
        .map(|state| FixedPoint {
            branch: Branch::BrokenPlus,
            state,
        })
        .map_err(Error::NoBrokenBranch)
}

/// Default start "close to the fixed point": the `jx > 0` broken state (the
/// north pole below criticality) displaced by `1e-3` along `+jx` and put
/// back on the sphere.
pub fn perturbed_fixed_point(params: &ModelParams) -> Result<SpinState> {
    let base = match broken_fixed_point(params) {
        Ok(fp) => fp.state,
        Err(Error::NoBrokenBranch(_)) => SpinState::NORTH_POLE,
        Err(e) => return Err(e),
    };
    SpinState::projected(base.jx + 1e-3, base.jy, base.jz)
}

/// Jacobian of the instantaneous flow (`lambda = 0`), all three variables.
pub fn jacobian(state: &SpinState, params: &ModelParams) -> [[f64; 3]; 3] {
    let SpinState { jx: x, jy: y, jz: z } = *state;
    let (h, g, k) = (params.h, params.gamma, params.kappa);
    [
        [-k * z, h, -k * x],
        [-h + 2.0 * g * z, -k * z, 2.0 * g * x - k * y],
        [-2.0 * g * y + 2.0 * k * x, -2.0 * g * x + 2.0 * k * y, 0.0],
    ]
}

/// Largest real part of the linearized flow at the north pole, restricted
/// to the tangent plane (the `x`, `y` block of [`jacobian`]).
pub fn normal_branch_growth_rate(params: &ModelParams) -> f64 {
    let j = jacobian(&SpinState::NORTH_POLE, params);
    let c = |v: f64| Complex64::new(v, 0.0);
    let (a, b) = eigenvalues_2x2(c(j[0][0]), c(j[0][1]), c(j[1][0]), c(j[1][1]));
    a.re.max(b.re)
}

/// Bisects `gamma` in `[lo, hi]` for the normal state's stability flip.
pub fn pitchfork_coupling(params: &ModelParams, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let unstable = |g: f64| normal_branch_growth_rate(&params.with_gamma(g)) > 0.0;
    if unstable(lo) || !unstable(hi) {
        return Err(Error::Precondition("bracket does not contain the stability flip"));
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if unstable(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `d/dt (dx, dy) = B (dx, dy)(t) + A (dx, dy)(t - tau)` with `jz` eliminated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearizedSystem {
    pub matrix_b: [[f64; 2]; 2],
    /// First row is always zero.
    pub matrix_a: [[f64; 2]; 2],
    pub tau: f64,
}

/// Linearization about a broken-branch state.
pub fn linearize(fp: &FixedPoint, params: &ModelParams) -> Result<LinearizedSystem> {
    if fp.branch == Branch::Normal {
        return Err(Error::NormalBranchLinearization);
    }
    let SpinState { jx: x, jy: y, jz: z } = fp.state;
    if z == 0.0 {
        return Err(Error::Precondition("fixed point with jz = 0"));
    }
    let (h, g, k, l) = (params.h, params.gamma, params.kappa, params.lambda);
    let matrix_a = [[0.0, 0.0], [-4.0 * l * z * x * x, -4.0 * l * z * x * y]];
    let matrix_b = [
        [k * x * x / z - k * z, h + k * x * y / z],
        [
            4.0 * l * z * x * x - 2.0 * g * x * x / z + k * y * x / z - h + 2.0 * g * z,
            k * y * y / z + 4.0 * l * x * z * y - 2.0 * g * x * y / z - k * z,
        ],
    ];
    Ok(LinearizedSystem {
        matrix_b,
        matrix_a,
        tau: params.tau,
    })
}

/// Linearization about the `jx > 0` broken state.
pub fn linearize_broken(params: &ModelParams) -> Result<LinearizedSystem> {
    linearize(&broken_fixed_point(params)?, params)
}

/// `det(L - B - A exp(-L tau))` and its derivative in `L`.
pub fn char_residual_with_derivative(l: Complex64, sys: &LinearizedSystem) -> (Complex64, Complex64) {
    let [[b11, b12], [b21, b22]] = sys.matrix_b;
    let [_, [a21, a22]] = sys.matrix_a;
    let tau = sys.tau;
    let e = (-l * tau).exp();
    let p = l - b11;
    let q = l - b22 - a22 * e;
    let r = b21 + a21 * e;
    let d = p * q - b12 * r;
    let dd = q + p * (1.0 + a22 * tau * e) + b12 * a21 * tau * e;
    (d, dd)
}

/// `det(L - B - A exp(-L tau))`.
pub fn char_residual(l: Complex64, sys: &LinearizedSystem) -> Complex64 {
    char_residual_with_derivative(l, sys).0
}

/// Rectangular grid of Newton seeds in the upper half plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedGrid {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub n_re: usize,
    pub n_im: usize,
}

impl Default for SeedGrid {
    fn default() -> Self {
        Self {
            re_min: -5.0,
            re_max: 2.0,
            im_min: 0.0,
            im_max: 20.0,
            n_re: 40,
            n_im: 40,
        }
    }
}

impl SeedGrid {
    pub fn seeds(&self) -> Vec<Complex64> {
        let lin = |lo: f64, hi: f64, n: usize, i: usize| {
            if n < 2 {
                lo
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        };
        let mut out = Vec::with_capacity(self.n_re * self.n_im);
        for i in 0..self.n_re {
            for j in 0..self.n_im {
                out.push(Complex64::new(
                    lin(self.re_min, self.re_max, self.n_re, i),
                    lin(self.im_min, self.im_max, self.n_im, j),
                ));
            }
        }
        out
    }
}

const NEWTON_MAX_ITER: usize = 60;
/// Distinct roots closer than this are merged.
pub const ROOT_DEDUP: f64 = 1e-6;

/// Outcome of a characteristic-root search.
#[derive(Debug, Clone, PartialEq)]
pub struct RootSearch {
    /// Root with the largest real part.
    pub rightmost: Complex64,
    /// `Re(rightmost) < 0`.
    pub stable: bool,
    /// All distinct converged roots with `Im >= 0`.
    pub roots: Vec<Complex64>,
}

fn newton(mut l: Complex64, sys: &LinearizedSystem) -> Option<Complex64> {
    // guards keep exp(-L tau) finite and discard runaway iterates
    let escaped = |l: Complex64| l.re < -30.0 || l.norm() > 1e3 || -l.re * sys.tau > 600.0 || !l.re.is_finite();
    for _ in 0..NEWTON_MAX_ITER {
        if escaped(l) {
            return None;
        }
        let (d, dd) = char_residual_with_derivative(l, sys);
        if dd.norm() == 0.0 {
            return None;
        }
        let step = d / dd;
        l -= step;
        if step.norm() <= 1e-14 * (1.0 + l.norm()) {
            break;
        }
    }
    if escaped(l) {
        return None;
    }
    let d = char_residual(l, sys);
    (d.norm() <= 1e-10 * (1.0 + l.norm_sqr())).then_some(l)
}

/// Newton from each seed; roots folded into `Im >= 0` and deduplicated.
pub fn rightmost_root_from_seeds(sys: &LinearizedSystem, seeds: &[Complex64]) -> Result<RootSearch> {
    let mut roots: Vec<Complex64> = Vec::new();
    for &seed in seeds {
        if let Some(l) = newton(seed, sys) {
            let l = Complex64::new(l.re, l.im.abs());
            if roots.iter().all(|r| (r - l).norm() > ROOT_DEDUP) {
                roots.push(l);
            }
        }
    }
    let rightmost = roots
        .iter()
        .copied()
        .max_by(|a, b| a.re.total_cmp(&b.re))
        .ok_or(Error::NoRootConverged { seeds: seeds.len() })?;
    roots.sort_by(|a, b| b.re.total_cmp(&a.re));
    Ok(RootSearch {
        rightmost,
        stable: rightmost.re < 0.0,
        roots,
    })
}

/// Rightmost root from the default 40 x 40 seed grid.
pub fn rightmost_root(sys: &LinearizedSystem) -> Result<RootSearch> {
    rightmost_root_from_seeds(sys, &SeedGrid::default().seeds())
}

/// `Re` of the rightmost characteristic root at the parameters' `(tau, lambda)`.
pub fn stability_margin(params: &ModelParams, seeds: &[Complex64]) -> Result<f64> {
    let sys = linearize_broken(params)?;
    Ok(rightmost_root_from_seeds(&sys, seeds)?.rightmost.re)
}

/// Smallest `tau` in `[tau_lo, tau_hi]` where the broken state is unstable,
/// located by stepping `scan_step` and then bisecting to `tol`.
/// `None` when it stays stable over the whole range.
pub fn first_instability_delay(
    params: &ModelParams,
    tau_lo: f64,
    tau_hi: f64,
    scan_step: f64,
    tol: f64,
) -> Result<Option<f64>> {
    if !(scan_step > 0.0) || !(tol > 0.0) || !(tau_hi >= tau_lo) || tau_lo < 0.0 {
        return Err(Error::Precondition("invalid delay scan range"));
    }
    let seeds = SeedGrid::default().seeds();
    let unstable = |tau: f64| -> Result<bool> { Ok(stability_margin(&params.with_tau(tau), &seeds)? >= 0.0) };
    if unstable(tau_lo)? {
        return Ok(Some(tau_lo));
    }
    let mut prev = tau_lo;
    let mut k = 1usize;
    loop {
        let tau = (tau_lo + k as f64 * scan_step).min(tau_hi);
        if unstable(tau)? {
            let (mut lo, mut hi) = (prev, tau);
            while hi - lo > tol {
                let mid = 0.5 * (lo + hi);
                if unstable(mid)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(Some(0.5 * (lo + hi)));
        }
        if tau >= tau_hi {
            return Ok(None);
        }
        prev = tau;
        k += 1;
    }
}

/// Boundary coefficients for `L = i s`.
///
/// With `c = cos(s tau)`, `n = sin(s tau)`:
/// `Im D = g[0] + g[1] c + g[2] n` and `Re D = g[3] + g[4] c + g[5] n`.
pub fn boundary_coefficients(fp: &SpinState, params: &ModelParams, s: f64) -> [f64; 6] {
    let SpinState { jx: x, jy: y, jz: z } = *fp;
    let (h, g, k, l) = (params.h, params.gamma, params.kappa, params.lambda);
    let g0 = -k * x * x * s / z + 2.0 * g * x * y * s / z - 4.0 * x * y * z * l * s - k * y * y * s / z + 2.0 * k * z * s;
    let g1 = 4.0 * x * y * z * l * s;
    let g2 = -4.0 * h * x * x * z * l - 4.0 * k * x * y * z * z * l;
    let g3 = h * h - s * s + 2.0 * g * h * x * x / z - 2.0 * g * h * z - k * k * x * x - k * k * y * y + k * k * z * z
        - 4.0 * h * x * x * z * l
        - 4.0 * k * x * y * z * z * l;
    let g4 = 4.0 * h * x * x * z * l + 4.0 * k * x * y * z * z * l;
    let g5 = 4.0 * x * y * z * l * s;
    [g0, g1, g2, g3, g4, g5]
}

/// Coefficients `(F0, F1)` of `s^4 + F1 s^2 + F0 = 0`.
pub fn crossing_quartic(fp: &SpinState, params: &ModelParams) -> (f64, f64) {
    let SpinState { jx: x, jy: y, jz: z } = *fp;
    let (h, g, k, l) = (params.h, params.gamma, params.kappa, params.lambda);
    let (x2, y2, z2) = (x * x, y * y, z * z);
    let f0 = (h * h * z + 2.0 * g * h * (x2 - z2) + k * k * z * (-x2 - y2 + z2))
        * (h * h * z + 2.0 * h * (x2 * (g - 4.0 * z2 * l) - g * z2) + k * z * (-k * x2 - 8.0 * x * y * z2 * l + k * (z2 - y2)))
        / z2;
    let f1 = (-2.0 * h * h * z2 + 4.0 * h * (x2 * (2.0 * z2 * z * l - g * z) + g * z2 * z) + k * k * x2 * x2
        - 4.0 * k * x2 * x * y * (g - 2.0 * z2 * l)
        + 2.0 * x2 * (y2 * (k * k + 2.0 * g * (g - 4.0 * z2 * l)) - k * k * z2)
        - 4.0 * k * x * y * (y2 * (g - 2.0 * z2 * l) + 2.0 * z2 * z2 * l - 2.0 * g * z2)
        + k * k * (y2 * y2 - 2.0 * y2 * z2 + 2.0 * z2 * z2))
        / z2;
    (f0, f1)
}

/// Real roots `s` of the crossing quartic (both signs).
pub fn crossing_frequencies(f0: f64, f1: f64) -> Vec<f64> {
    let disc = f1 * f1 - 4.0 * f0;
    let mut out = Vec::new();
    if disc < 0.0 {
        return out;
    }
    let r = disc.sqrt();
    for s2 in [0.5 * (-f1 + r), 0.5 * (-f1 - r)] {
        if s2 > 0.0 {
            let s = s2.sqrt();
            out.push(s);
            out.push(-s);
        }
    }
    out
}

/// Both residuals must be below this.
pub const BOUNDARY_RESIDUAL_TOL: f64 = 1e-8;

/// A point where a characteristic root crosses the imaginary axis at `L = i s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityBoundaryPoint {
    pub tau: f64,
    pub lambda: f64,
    /// Crossing frequency, reported as `|s|`.
    pub s: f64,
    /// Branch index of the delay formula.
    pub z: u32,
    /// `g0 + g1 cos + g2 sin` at the point.
    pub residual_imag: f64,
    /// `g3 + g4 cos + g5 sin` at the point.
    pub residual_real: f64,
}

/// Candidate delays for one crossing frequency, before filtering.
///
/// `sin(s tau)` and `cos(s tau)` come from the first condition with each
/// sign choice taken independently; the angle is recovered with `atan2` so
/// the quadrant survives, then `tau = (theta + 2 pi z) / s`.
fn delay_candidates(g: &[f64; 6], s: f64, z_max: u32) -> Vec<(f64, u32)> {
    let [g0, g1, g2, ..] = *g;
    let r2 = g1 * g1 + g2 * g2;
    let disc = r2 - g0 * g0;
    let mut out = Vec::new();
    if r2 == 0.0 || g2 == 0.0 || disc < 0.0 || s == 0.0 {
        return out;
    }
    let root_sin = (g2 * g2 * disc).sqrt();
    let root_cos = (g2 * g2 * disc).sqrt();
    for sign_s in [1.0, -1.0] {
        let sin = (sign_s * g1 * root_sin / r2 + g0 * g1 * g1 / r2 - g0) / g2;
        for sign_c in [1.0, -1.0] {
            let cos = (sign_c * root_cos - g0 * g1) / r2;
            let theta = sin.atan2(cos);
            for z in 0..=z_max {
                let tau = (theta + 2.0 * PI * z as f64) / s;
                if tau >= 0.0 && tau.is_finite() {
                    out.push((tau, z));
                }
            }
        }
    }
    out
}

/// Boundary points of the `jx > 0` broken state for one `lambda`, sorted by `tau`.
pub fn boundary_points(params: &ModelParams, z_max: u32) -> Result<Vec<StabilityBoundaryPoint>> {
    let fp = broken_fixed_point(params)?.state;
    let (f0, f1) = crossing_quartic(&fp, params);
    let mut out: Vec<StabilityBoundaryPoint> = Vec::new();
    for s in crossing_frequencies(f0, f1) {
        if s.abs() < 1e-12 {
            continue;
        }
        let g = boundary_coefficients(&fp, params, s);
        for (tau, z) in delay_candidates(&g, s, z_max) {
            let (sn, cs) = (s * tau).sin_cos();
            let residual_imag = g[0] + g[1] * cs + g[2] * sn;
            let residual_real = g[3] + g[4] * cs + g[5] * sn;
            if residual_imag.abs() >= BOUNDARY_RESIDUAL_TOL || residual_real.abs() >= BOUNDARY_RESIDUAL_TOL {
                continue;
            }
            let dup = out
                .iter()
                .any(|p| (p.tau - tau).abs() <= 1e-9 * (1.0 + tau) && (p.s - s.abs()).abs() <= 1e-9 * (1.0 + p.s));
            if !dup {
                out.push(StabilityBoundaryPoint {
                    tau,
                    lambda: params.lambda,
                    s: s.abs(),
                    z,
                    residual_imag,
                    residual_real,
                });
            }
        }
    }
    out.sort_by(|a, b| a.tau.total_cmp(&b.tau));
    Ok(out)
}

/// [`boundary_points`] over a grid of feedback gains; `params.lambda` and
/// `params.tau` are ignored.
pub fn boundary_curves(params: &ModelParams, lambda_grid: &[f64], z_max: u32) -> Result<Vec<StabilityBoundaryPoint>> {
    let mut out = Vec::new();
    for &lambda in lambda_grid {
        out.extend(boundary_points(&params.with_lambda(lambda).with_tau(0.0), z_max)?);
    }
    Ok(out)
}

/// Linear system at a boundary point.
pub fn system_at(params: &ModelParams, point: &StabilityBoundaryPoint) -> Result<LinearizedSystem> {
    linearize_broken(&params.with_lambda(point.lambda).with_tau(point.tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::mean_field_rhs;

    fn params() -> ModelParams {
        ModelParams::default()
    }

    #[test]
    fn critical_coupling_values() {
        let p = params();
        assert_eq!(critical_coupling(&p.with_kappa(0.0)), 1.0);
        assert_eq!(critical_coupling(&p.with_kappa(2.0)), 2.0);
        assert!((critical_coupling(&p) - 1.000625).abs() < 1e-15);
    }

    #[test]
    fn closed_system_fixed_point() {
        let fp = broken_fixed_point(&params().with_kappa(0.0)).unwrap().state;
        assert!((fp.jz - 1.0 / 3.0).abs() < 1e-15);
        assert!((fp.jx * fp.jx - (1.5f64 * 1.5 - 1.0) / (4.0 * 1.5 * 1.5)).abs() < 1e-15);
        assert_eq!(fp.jy, 0.0);
    }

    #[test]
    fn fixed_points_are_stationary() {
        for kappa in [0.0, 0.05, 0.5, 1.2] {
            let p = params().with_kappa(kappa).with_gamma(1.5);
            let fps = fixed_points(&p).unwrap();
            assert_eq!(fps.points.len(), 3);
            for fp in &fps.points {
                let d = mean_field_rhs(&fp.state, p.gamma, &p);
                assert!(d.iter().all(|v| v.abs() < 1e-15), "{kappa} {fp:?} {d:?}");
                assert!(fp.state.sphere_deviation().abs() < 1e-15);
            }
        }
    }

    #[test]
    fn absence_reasons() {
        let fps = fixed_points(&params().with_gamma(0.9)).unwrap();
        assert_eq!(fps.points.len(), 1);
        assert_eq!(fps.broken_absent, Some(BrokenBranchAbsence::BelowCritical));
        let fps = fixed_points(&params().with_gamma(1.0).with_kappa(1.5)).unwrap();
        assert_eq!(fps.broken_absent, Some(BrokenBranchAbsence::CouplingBelowDecay));
        assert!(matches!(
            broken_fixed_point(&params().with_gamma(0.5)),
            Err(Error::NoBrokenBranch(_))
        ));
    }

    #[test]
    fn linearize_rejects_the_normal_state() {
        let fp = FixedPoint {
            branch: Branch::Normal,
            state: SpinState::NORTH_POLE,
        };
        assert_eq!(linearize(&fp, &params()), Err(Error::NormalBranchLinearization));
    }

    #[test]
    fn delay_matrix_structure() {
        let sys = linearize_broken(&params()).unwrap();
        assert_eq!(sys.matrix_a[0], [0.0, 0.0]);
        let sys0 = linearize_broken(&params().with_lambda(0.0)).unwrap();
        assert_eq!(sys0.matrix_a, [[0.0; 2]; 2]);
    }

    #[test]
    fn delay_free_residual_is_the_characteristic_polynomial() {
        let mut sys = linearize_broken(&params()).unwrap();
        sys.matrix_a = [[0.0; 2]; 2];
        sys.tau = 0.0;
        let [[a, b], [c, d]] = sys.matrix_b;
        let l = Complex64::new(0.3, -1.2);
        let poly = l * l - l * (a + d) + (a * d - b * c);
        assert!((char_residual(l, &sys) - poly).norm() < 1e-14);
    }

    #[test]
    fn residual_derivative_matches_finite_difference() {
        let sys = linearize_broken(&params().with_tau(0.7)).unwrap();
        let l = Complex64::new(-0.2, 1.3);
        let eps = 1e-6;
        let fd = (char_residual(l + eps, &sys) - char_residual(l - eps, &sys)) / (2.0 * eps);
        let (_, dd) = char_residual_with_derivative(l, &sys);
        assert!((fd - dd).norm() < 1e-8);
    }

    #[test]
    fn pitchfork_without_decay() {
        let g = pitchfork_coupling(&params().with_kappa(0.0), 0.5, 2.0, 1e-10).unwrap();
        assert!((g - 1.0).abs() < 1e-9);
        assert!(pitchfork_coupling(&params(), 1.5, 2.0, 1e-10).is_err());
    }

    #[test]
    fn seed_grid_shape() {
        let seeds = SeedGrid::default().seeds();
        assert_eq!(seeds.len(), 1600);
        assert_eq!(seeds[0], Complex64::new(-5.0, 0.0));
        assert_eq!(seeds[1599], Complex64::new(2.0, 20.0));
    }

    #[test]
    fn perturbed_start() {
        let s = perturbed_fixed_point(&params()).unwrap();
        let fp = broken_fixed_point(&params()).unwrap().state;
        assert!(s.sphere_deviation().abs() < 1e-15);
        let d = s.distance(&fp);
        assert!(d > 1e-4 && d <= 1e-3, "{d}");
        let n = perturbed_fixed_point(&params().with_gamma(0.5)).unwrap();
        assert!(n.jx > 0.0 && n.jz > 0.49);
    }
}
