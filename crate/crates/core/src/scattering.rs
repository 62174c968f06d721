//! Zero-energy scattering: the scattering length `a` from the integral
//! equation `μ + v𝒢⁰(uμ) = v` (Nyström) and from the radial ODE, plus the
//! Birman–Schwinger resonance check.
//!
//! `a = (1/4π)∫ u μ`, `φ₀ = 1 − 𝒢⁰(uμ)`.

use crate::greens::{nystrom_matrix, nystrom_row_at, Desingularization};
use crate::linalg::{smallest_singular_value, LinalgError, Lu, Matrix};
use crate::potentials::{PotentialModel, PotentialSpec};
use crate::quadrature::{Grid3D, QuadratureError};
use crate::real::{Point3, Real};
use thiserror::Error;

/// Default `bs_margin` below which a potential is treated as resonant.
pub const RESONANCE_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScatteringError {
    #[error("zero-energy resonance or bound state detected (margin {margin:e} ≤ threshold {threshold:e})")]
    ResonanceDetected { margin: f64, threshold: f64 },
    #[error("Nyström system could not be solved: {0}")]
    NonConvergence(#[from] LinalgError),
    #[error("ODE step size underflow at r = {r}")]
    StepSizeUnderflow { r: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("amplitude search failed: {0}")]
    Tuning(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScatteringMethod {
    Nystrom,
    RadialOde,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NystromOptions<T> {
    pub n_radial: usize,
    pub n_angular: usize,
    pub rule: Desingularization,
    pub resonance_threshold: T,
}

impl<T: Real> Default for NystromOptions<T> {
    fn default() -> Self {
        Self {
            n_radial: 16,
            n_angular: 26,
            rule: Desingularization::SingularitySubtraction,
            resonance_threshold: T::lit(RESONANCE_THRESHOLD),
        }
    }
}

impl<T: Real> NystromOptions<T> {
    pub fn grid_for(&self, pot: &PotentialModel<T>) -> Result<Grid3D<T>, QuadratureError> {
        Grid3D::new(pot.support_radius(), self.n_radial, self.n_angular)
    }
}

#[derive(Debug, Clone)]
pub struct ScatteringSolution<T> {
    pub grid: Grid3D<T>,
    pub mu: Vec<T>,
    pub u: Vec<T>,
    pub v: Vec<T>,
    pub a: T,
    pub bs_margin: T,
    /// `‖μ + v T⁰(uμ) − v‖₂` on the grid.
    pub residual: T,
    pub method: ScatteringMethod,
}

impl<T: Real> ScatteringSolution<T> {
    /// `φ₀(x) = 1 − ∫𝒢⁰(x−z)u μ(z) dz` by Nyström interpolation.
    ///
    /// Inside the support the subtracted value `uμ(x) = V(x)φ₀(x)` is itself
    /// unknown, which gives a scalar linear equation for `φ₀(x)`.
    pub fn phi0(&self, pot: &PotentialModel<T>, x: &Point3<T>) -> T {
        let (row, s) = nystrom_row_at(&self.grid, T::zero(), x);
        let mut direct = T::zero();
        let mut row_sum = T::zero();
        for (m, &k) in row.iter().enumerate() {
            direct += k * self.u[m] * self.mu[m];
            row_sum += k;
        }
        let vx = pot.potential(x);
        (T::one() - direct) / (T::one() - vx * (row_sum - s))
    }

    pub fn is_resonant(&self, threshold: T) -> bool {
        self.bs_margin <= threshold
    }
}

fn nodal_uv<T: Real>(pot: &PotentialModel<T>, grid: &Grid3D<T>) -> (Vec<T>, Vec<T>) {
    (
        grid.nodes.iter().map(|x| pot.u(x)).collect(),
        grid.nodes.iter().map(|x| pot.v(x)).collect(),
    )
}

/// `I + diag(v) T diag(u)`.
fn birman_schwinger<T: Real>(t0: &Matrix<T>, u: &[T], v: &[T]) -> Matrix<T> {
    let m = u.len();
    Matrix::from_fn(m, m, |i, j| {
        let d = if i == j { T::one() } else { T::zero() };
        d + v[i] * t0[(i, j)] * u[j]
    })
}

/// `σ_min` of `W^{1/2}(I + vT⁰u)W^{−1/2}`, the grid version of `I + v𝒢⁰u` on `L²`.
fn margin_of<T: Real>(a: &Matrix<T>, grid: &Grid3D<T>) -> Result<T, LinalgError> {
    let m = a.rows();
    let sw: Vec<T> = grid.weights.iter().map(|w| w.sqrt()).collect();
    let b = Matrix::from_fn(m, m, |i, j| sw[i] * a[(i, j)] / sw[j]);
    match Lu::factor(b) {
        Ok(lu) => Ok(smallest_singular_value(&lu, T::lit(1e-10), 500)),
        Err(LinalgError::Singular { .. }) => Ok(T::zero()),
        Err(e) => Err(e),
    }
}

/// Smallest singular value of the discretized `I + v𝒢⁰u`.
pub fn resonance_check<T: Real>(
    pot: &PotentialModel<T>,
    grid: &Grid3D<T>,
    rule: Desingularization,
) -> Result<T, ScatteringError> {
    if pot.is_zero() {
        return Ok(T::one());
    }
    let (u, v) = nodal_uv(pot, grid);
    let t0 = nystrom_matrix(grid, T::zero(), rule);
    Ok(margin_of(&birman_schwinger(&t0, &u, &v), grid)?)
}

/// Solves the `μ` equation on `grid` and returns `a`.
pub fn solve_mu_nystrom<T: Real>(
    pot: &PotentialModel<T>,
    grid: &Grid3D<T>,
    opts: &NystromOptions<T>,
) -> Result<ScatteringSolution<T>, ScatteringError> {
    let (u, v) = nodal_uv(pot, grid);
    let m = grid.len();
    if pot.is_zero() {
        return Ok(ScatteringSolution {
            grid: grid.clone(),
            mu: vec![T::zero(); m],
            u,
            v,
            a: T::zero(),
            bs_margin: T::one(),
            residual: T::zero(),
            method: ScatteringMethod::Nystrom,
        });
    }
    let t0 = nystrom_matrix(grid, T::zero(), opts.rule);
    let a_mat = birman_schwinger(&t0, &u, &v);
    let bs_margin = margin_of(&a_mat, grid)?;
    if bs_margin <= opts.resonance_threshold {
        return Err(ScatteringError::ResonanceDetected {
            margin: bs_margin.to_f64_lossy(),
            threshold: opts.resonance_threshold.to_f64_lossy(),
        });
    }
    let lu = Lu::factor(a_mat.clone())?;
    let mu = lu.solve(&v);
    let am = a_mat.matvec(&mu);
    let residual = am
        .iter()
        .zip(&v)
        .map(|(x, y)| (*x - *y) * (*x - *y))
        .sum::<T>()
        .sqrt();
    let a = (0..m).map(|k| grid.weights[k] * u[k] * mu[k]).sum::<T>() / T::four_pi();
    Ok(ScatteringSolution {
        grid: grid.clone(),
        mu,
        u,
        v,
        a,
        bs_margin,
        residual,
        method: ScatteringMethod::Nystrom,
    })
}

/// Result of the radial shooting method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeScattering<T> {
    pub a: T,
    pub resonance: bool,
    /// `|w′(R)|·R/|w(R)|`; small values signal a resonance.
    pub resonance_ratio: T,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions<T> {
    pub rtol: T,
    pub atol: T,
    pub resonance_tol: T,
}

impl<T: Real> Default for OdeOptions<T> {
    fn default() -> Self {
        Self {
            rtol: T::lit(1e-12),
            atol: T::lit(1e-14),
            resonance_tol: T::lit(RESONANCE_THRESHOLD),
        }
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates `w″ = V(r) w`, `w(0) = 0`, `w′(0) = 1` to the support radius
/// and returns `a = R − w(R)/w′(R)`.
pub fn scattering_length_radial_ode<T: Real>(
    pot: &PotentialModel<T>,
    opts: &OdeOptions<T>,
) -> Result<OdeScattering<T>, ScatteringError> {
    let big_r = pot.support_radius();
    let mut breaks = vec![T::zero()];
    breaks.extend(pot.kinks());
    breaks.push(big_r);
    let mut y = [T::zero(), T::one()];
    let mut steps = 0usize;
    let rhs = |r: T, y: &[T; 2]| [y[1], pot.profile(r) * y[0]];
    // |w| grows like e^{κr}; renormalizing keeps the ratio w/w′ exact.
    let renorm = T::lit(1e100);
    for seg in breaks.windows(2) {
        let (mut r, end) = (seg[0], seg[1]);
        // Sample just inside the segment so jumps at `end` are not seen.
        let vmax = (0..=16)
            .map(|i| {
                let t = T::lit(i as f64 / 16.0);
                pot.profile(r + (end - r) * t * T::lit(0.999_999)).abs()
            })
            .fold(T::zero(), |a, b| a.max(b));
        let mut h = (end - r) / T::lit(16.0);
        if vmax > T::zero() {
            h = h.min(T::lit(0.1) / vmax.sqrt());
        }
        while r < end {
            if r + h > end {
                h = end - r;
            }
            let mut k = [[T::zero(); 2]; 7];
            for s in 0..7 {
                let mut ys = y;
                for (j, kj) in k.iter().enumerate().take(s) {
                    let aij = T::lit(A[s][j]);
                    ys[0] += h * aij * kj[0];
                    ys[1] += h * aij * kj[1];
                }
                // Evaluate at the open interval side of a jump.
                let rs = (r + T::lit(C[s]) * h).min(end - (end - r) * T::epsilon());
                k[s] = rhs(rs.max(r), &ys);
            }
            let mut y5 = y;
            let mut err = [T::zero(); 2];
            for s in 0..7 {
                y5[0] += h * T::lit(B5[s]) * k[s][0];
                y5[1] += h * T::lit(B5[s]) * k[s][1];
                let d = T::lit(B5[s] - B4[s]);
                err[0] += h * d * k[s][0];
                err[1] += h * d * k[s][1];
            }
            let scale0 = opts.atol + opts.rtol * y[0].abs().max(y5[0].abs());
            let scale1 = opts.atol + opts.rtol * y[1].abs().max(y5[1].abs());
            let e = ((err[0] / scale0).powi(2) + (err[1] / scale1).powi(2)).sqrt()
                / T::lit(2.0).sqrt();
            if e <= T::one() || h <= T::epsilon() * T::lit(16.0) * end.max(T::one()) {
                if e > T::one() {
                    return Err(ScatteringError::StepSizeUnderflow { r: r.to_f64_lossy() });
                }
                r += h;
                y = y5;
                steps += 1;
                let big = y[0].abs().max(y[1].abs());
                if big > renorm {
                    y[0] /= big;
                    y[1] /= big;
                }
            }
            let fac = if e == T::zero() {
                T::lit(5.0)
            } else {
                (T::lit(0.9) * e.powf(T::lit(-0.2))).min(T::lit(5.0)).max(T::lit(0.2))
            };
            h *= fac;
        }
    }
    let (w, wp) = (y[0], y[1]);
    let ratio = wp.abs() * big_r / w.abs();
    let resonance = wp.abs() < opts.resonance_tol * w.abs() / big_r;
    let a = if wp == T::zero() {
        T::infinity()
    } else {
        big_r - w / wp
    };
    Ok(OdeScattering {
        a,
        resonance,
        resonance_ratio: ratio,
        steps,
    })
}

/// Closed-form scattering length of a square well of amplitude `v0`
/// (positive = repulsive) and radius `r`.
pub fn square_well_scattering_length(v0: f64, r: f64) -> f64 {
    if v0 == 0.0 {
        0.0
    } else if v0 > 0.0 {
        let k = v0.sqrt() * r;
        r * (1.0 - k.tanh() / k)
    } else {
        let k = (-v0).sqrt() * r;
        r * (1.0 - k.tan() / k)
    }
}

/// Finds the amplitude in `[lo, hi]` whose ODE scattering length is `target`
/// by bisection; `a` must be monotone on the bracket.
pub fn tune_amplitude<T: Real>(
    template: &PotentialSpec<T>,
    target: T,
    mut lo: T,
    mut hi: T,
    tol: T,
) -> Result<PotentialSpec<T>, ScatteringError> {
    let opts = OdeOptions::default();
    let eval = |amp: T| -> Result<T, ScatteringError> {
        let mut s = template.clone();
        s.amplitude = amp;
        let pot = PotentialModel::new(s).map_err(|e| ScatteringError::Tuning(e.to_string()))?;
        Ok(scattering_length_radial_ode(&pot, &opts)?.a - target)
    };
    let (mut flo, fhi) = (eval(lo)?, eval(hi)?);
    if flo * fhi > T::zero() {
        return Err(ScatteringError::Tuning(format!(
            "target {target} not bracketed by amplitudes [{lo}, {hi}]"
        )));
    }
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        let fm = eval(mid)?;
        if (fm <= T::zero()) == (flo <= T::zero()) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if (hi - lo).abs() <= tol * mid.abs().max(T::one()) {
            break;
        }
    }
    let mut s = template.clone();
    s.amplitude = (lo + hi) / T::lit(2.0);
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::make_potential;
    use std::f64::consts::FRAC_PI_2;

    fn sw(v0: f64, r: f64) -> PotentialModel<f64> {
        make_potential(PotentialSpec::square_well(v0, r)).unwrap()
    }

    #[test]
    fn zero_potential() {
        let p = sw(0.0, 1.0);
        let o = scattering_length_radial_ode(&p, &OdeOptions::default()).unwrap();
        assert_eq!(o.a, 0.0);
        let g = Grid3D::new(1.0, 6, 14).unwrap();
        let s = solve_mu_nystrom(&p, &g, &NystromOptions::default()).unwrap();
        assert_eq!(s.a, 0.0);
        assert!(s.mu.iter().all(|&m| m == 0.0));
        assert_eq!(resonance_check(&p, &g, Desingularization::default()).unwrap(), 1.0);
    }

    #[test]
    fn ode_matches_closed_forms() {
        let o = scattering_length_radial_ode(&sw(-1.0, 1.0), &OdeOptions::default()).unwrap();
        assert!((o.a - (1.0 - 1.0f64.tan())).abs() < 1e-6);
        assert!((o.a + 0.557_408).abs() < 1e-6);
        let o = scattering_length_radial_ode(&sw(4.0, 1.0), &OdeOptions::default()).unwrap();
        assert!((o.a - 0.517_986_2).abs() < 1e-6);
        assert!((o.a - square_well_scattering_length(4.0, 1.0)).abs() < 1e-10);
    }

    #[test]
    fn hard_core_limit_is_monotone() {
        let mut prev = 0.0;
        for v0 in [1e2, 1e4, 1e6] {
            let o = scattering_length_radial_ode(&sw(v0, 1.0), &OdeOptions::default()).unwrap();
            assert!((o.a - square_well_scattering_length(v0, 1.0)).abs() < 1e-6, "{v0}");
            assert!(o.a > prev && o.a < 1.0);
            prev = o.a;
        }
    }

    #[test]
    fn nystrom_agrees_with_ode() {
        for v0 in [4.0, -1.0, 0.5] {
            let p = sw(v0, 1.0);
            let opts = NystromOptions::default();
            let g = opts.grid_for(&p).unwrap();
            let s = solve_mu_nystrom(&p, &g, &opts).unwrap();
            let o = scattering_length_radial_ode(&p, &OdeOptions::default()).unwrap();
            assert!((s.a - o.a).abs() < 1e-3, "{v0}: {} vs {}", s.a, o.a);
            assert!(s.residual < 1e-10);
        }
    }

    #[test]
    fn resonance_is_detected() {
        let p = sw(-(FRAC_PI_2 * FRAC_PI_2), 1.0);
        let o = scattering_length_radial_ode(&p, &OdeOptions::default()).unwrap();
        assert!(o.resonance);
        let opts = NystromOptions::default();
        let g = opts.grid_for(&p).unwrap();
        assert!(matches!(
            solve_mu_nystrom(&p, &g, &opts),
            Err(ScatteringError::ResonanceDetected { .. })
        ));
        let m = resonance_check(&p, &g, opts.rule).unwrap();
        assert!(m < 1e-2);
    }

    #[test]
    fn weak_well_margin_near_one() {
        let p = sw(0.1, 1.0);
        let g = Grid3D::new(1.0, 16, 26).unwrap();
        let m = resonance_check(&p, &g, Desingularization::default()).unwrap();
        assert!((m - 1.0).abs() < 1e-2, "{m}");
    }

    #[test]
    fn phi0_is_one_far_away_and_matches_exterior_solution() {
        let p = sw(4.0, 1.0);
        let opts = NystromOptions::default();
        let g = opts.grid_for(&p).unwrap();
        let s = solve_mu_nystrom(&p, &g, &opts).unwrap();
        // Outside the support φ₀ = 1 − a/|x|.
        for (r, tol) in [(1.5, 1e-3), (3.0, 1e-6), (10.0, 1e-7)] {
            let x = [0.0, r, 0.0];
            assert!((s.phi0(&p, &x) - (1.0 - s.a / r)).abs() < tol);
        }
        // Inside, φ₀ = sinh(κr)/(κr cosh κ) for the repulsive well.
        let r: f64 = 0.4;
        let exact = (2.0 * r).sinh() / (2.0 * r * 2.0f64.cosh());
        assert!((s.phi0(&p, &[r, 0.0, 0.0]) - exact).abs() < 1e-3);
    }

    #[test]
    fn tuning_recovers_target() {
        let spec = tune_amplitude(&PotentialSpec::square_well(1.0, 0.5), 0.2, 0.1, 1e4, 1e-12).unwrap();
        assert!((square_well_scattering_length(spec.amplitude, 0.5) - 0.2).abs() < 1e-9);
    }
}
