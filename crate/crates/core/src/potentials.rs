//! Radial obstacle potentials and their `u`/`v` factorization.
//!
//! `V = u·v` with `u = |V|^{1/2}` and `v = sgn(V)·|V|^{1/2}`. A positive
//! amplitude is repulsive.

use crate::quadrature::{integrate_adaptive, Grid3D};
use crate::real::{norm3, Point3, Real};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("amplitude must be finite (got {0})")]
    NonFiniteAmplitude(f64),
    #[error("support radius must be positive and finite (got {0})")]
    BadSupportRadius(f64),
    #[error("gaussian width must be positive and finite (got {0})")]
    BadWidth(f64),
    #[error("tabulated profile is empty")]
    EmptyTable,
    #[error("tabulated profile must have strictly increasing, nonnegative radii and finite values (row {0})")]
    BadTable(usize),
    #[error("scale factor must be positive (got {0})")]
    BadScale(f64),
}

/// Radial profile family.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialShape<T> {
    /// `amplitude` on `|x| ≤ support_radius`.
    SquareWell,
    /// `amplitude·exp(−|x|²/width²)` truncated at `support_radius`.
    Gaussian { width: T },
    /// Piecewise-linear interpolation of `(r, V)` samples, multiplied by
    /// `amplitude`; constant extension down to `r = 0`.
    Tabulated { r: Vec<T>, v: Vec<T> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec<T> {
    pub shape: PotentialShape<T>,
    pub amplitude: T,
    pub support_radius: T,
}

impl<T: Real> PotentialSpec<T> {
    pub fn square_well(amplitude: T, radius: T) -> Self {
        Self {
            shape: PotentialShape::SquareWell,
            amplitude,
            support_radius: radius,
        }
    }

    /// Gaussian truncated at six widths.
    pub fn gaussian(amplitude: T, width: T) -> Self {
        Self {
            shape: PotentialShape::Gaussian { width },
            amplitude,
            support_radius: T::lit(6.0) * width,
        }
    }
}

/// Integrability diagnostics `‖V‖₁`, `‖(1+|x|⁴)V‖₁`, `‖V‖₃`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialDiagnostics<T> {
    pub l1: T,
    pub l1_weighted: T,
    pub l3: T,
    /// `L¹` mass of the untruncated profile outside the support (Gaussian only).
    pub truncation_error: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialModel<T> {
    spec: PotentialSpec<T>,
    /// `V_s(x) = s²·V(s x)`; `s = 1` for the unscaled potential.
    scale: T,
}

pub fn make_potential<T: Real>(spec: PotentialSpec<T>) -> Result<PotentialModel<T>, PotentialError> {
    PotentialModel::new(spec)
}

impl<T: Real> PotentialModel<T> {
    pub fn new(spec: PotentialSpec<T>) -> Result<Self, PotentialError> {
        if !spec.amplitude.is_finite() {
            return Err(PotentialError::NonFiniteAmplitude(spec.amplitude.to_f64_lossy()));
        }
        if !(spec.support_radius > T::zero() && spec.support_radius.is_finite()) {
            return Err(PotentialError::BadSupportRadius(spec.support_radius.to_f64_lossy()));
        }
        match &spec.shape {
            PotentialShape::SquareWell => {}
            PotentialShape::Gaussian { width } => {
                if !(*width > T::zero() && width.is_finite()) {
                    return Err(PotentialError::BadWidth(width.to_f64_lossy()));
                }
            }
            PotentialShape::Tabulated { r, v } => {
                if r.is_empty() || r.len() != v.len() {
                    return Err(PotentialError::EmptyTable);
                }
                for i in 0..r.len() {
                    let ok = r[i] >= T::zero()
                        && r[i].is_finite()
                        && v[i].is_finite()
                        && (i == 0 || r[i] > r[i - 1]);
                    if !ok {
                        return Err(PotentialError::BadTable(i));
                    }
                }
            }
        }
        Ok(Self {
            spec,
            scale: T::one(),
        })
    }

    pub fn spec(&self) -> &PotentialSpec<T> {
        &self.spec
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    /// `N²V(N·)`: support shrinks by `N`, scattering length becomes `a/N`.
    pub fn rescaled(&self, n: T) -> Result<Self, PotentialError> {
        if !(n > T::zero() && n.is_finite()) {
            return Err(PotentialError::BadScale(n.to_f64_lossy()));
        }
        Ok(Self {
            spec: self.spec.clone(),
            scale: self.scale * n,
        })
    }

    pub fn support_radius(&self) -> T {
        self.spec.support_radius / self.scale
    }

    pub fn amplitude(&self) -> T {
        self.spec.amplitude
    }

    pub fn is_zero(&self) -> bool {
        self.spec.amplitude == T::zero()
    }

    fn unscaled_profile(&self, r: T) -> T {
        if r > self.spec.support_radius {
            return T::zero();
        }
        let a = self.spec.amplitude;
        match &self.spec.shape {
            PotentialShape::SquareWell => a,
            PotentialShape::Gaussian { width } => {
                let t = r / *width;
                a * (-t * t).exp()
            }
            PotentialShape::Tabulated { r: rs, v } => a * interpolate(rs, v, r),
        }
    }

    /// Radial profile `r ↦ V(r)`.
    pub fn profile(&self, r: T) -> T {
        let s = self.scale;
        s * s * self.unscaled_profile(s * r)
    }

    pub fn potential(&self, x: &Point3<T>) -> T {
        self.profile(norm3(x))
    }

    pub fn u(&self, x: &Point3<T>) -> T {
        self.potential(x).abs().sqrt()
    }

    pub fn v(&self, x: &Point3<T>) -> T {
        let p = self.potential(x);
        if p == T::zero() {
            T::zero()
        } else {
            p.signum() * p.abs().sqrt()
        }
    }

    /// Radii in `(0, support)` where the profile is not smooth.
    pub fn kinks(&self) -> Vec<T> {
        match &self.spec.shape {
            PotentialShape::Tabulated { r, .. } => r
                .iter()
                .filter(|&&x| x > T::zero() && x < self.spec.support_radius)
                .map(|&x| x / self.scale)
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Diagnostics by adaptive radial quadrature.
    pub fn diagnostics(&self) -> PotentialDiagnostics<T> {
        let mut breaks = vec![T::zero()];
        breaks.extend(self.kinks());
        breaks.push(self.support_radius());
        let radial = |g: &dyn Fn(T) -> T| -> T {
            breaks
                .windows(2)
                .map(|w| {
                    integrate_adaptive(
                        |r: T| T::four_pi() * r * r * g(r),
                        w[0],
                        w[1],
                        T::epsilon() * T::lit(1e3),
                        T::lit(1e-13).max(T::epsilon() * T::lit(1e2)),
                        400,
                    )
                    .0
                })
                .sum()
        };
        let l1 = radial(&|r| self.profile(r).abs());
        let l1_weighted = radial(&|r| (T::one() + r.powi(4)) * self.profile(r).abs());
        let l3 = radial(&|r| self.profile(r).abs().powi(3)).cbrt();
        PotentialDiagnostics {
            l1,
            l1_weighted,
            l3,
            truncation_error: self.truncation_error(),
        }
    }

    /// Diagnostics with a given ball grid (used for convergence checks).
    pub fn diagnostics_on_grid(&self, grid: &Grid3D<T>) -> PotentialDiagnostics<T> {
        let l1 = grid.integrate(|x| self.potential(x).abs());
        let l1_weighted = grid.integrate(|x| {
            let r = norm3(x);
            (T::one() + r.powi(4)) * self.potential(x).abs()
        });
        let l3 = grid.integrate(|x| self.potential(x).abs().powi(3)).cbrt();
        PotentialDiagnostics {
            l1,
            l1_weighted,
            l3,
            truncation_error: self.truncation_error(),
        }
    }

    /// `∫_{|x| > R} |V|` of the untruncated profile.
    pub fn truncation_error(&self) -> T {
        match &self.spec.shape {
            PotentialShape::Gaussian { width } => {
                // ∫_t^∞ x² e^{−x²} dx = (t/2)e^{−t²} + (√π/4) erfc(t)
                let t = (self.spec.support_radius / *width).to_f64_lossy();
                let tail = 0.5 * t * (-t * t).exp()
                    + 0.25 * std::f64::consts::PI.sqrt() * statrs::function::erf::erfc(t);
                // Rescaling V_s = s²V(s·) multiplies the L¹ mass by 1/s.
                T::four_pi() * self.spec.amplitude.abs() * width.powi(3) * T::lit(tail)
                    / self.scale
            }
            _ => T::zero(),
        }
    }
}

fn interpolate<T: Real>(r: &[T], v: &[T], x: T) -> T {
    if x <= r[0] {
        return v[0];
    }
    let last = r.len() - 1;
    if x >= r[last] {
        return v[last];
    }
    let k = r.partition_point(|&ri| ri <= x);
    let (r0, r1) = (r[k - 1], r[k]);
    let t = (x - r0) / (r1 - r0);
    v[k - 1] + t * (v[k] - v[k - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn square_well_factorization() {
        let p = make_potential(PotentialSpec::square_well(-1.0, 1.0)).unwrap();
        let x = [0.5, 0.0, 0.0];
        assert_eq!(p.potential(&x), -1.0);
        assert_eq!(p.u(&x), 1.0);
        assert_eq!(p.v(&x), -1.0);
        assert_eq!(p.potential(&[1.5, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn zero_amplitude_is_zero_everywhere() {
        for spec in [
            PotentialSpec::square_well(0.0, 1.0),
            PotentialSpec::gaussian(0.0, 1.0),
        ] {
            let p = make_potential(spec).unwrap();
            for x in [[0.0, 0.0, 0.0], [0.3, -0.2, 0.1]] {
                assert_eq!(p.potential(&x), 0.0);
                assert_eq!(p.u(&x), 0.0);
                assert_eq!(p.v(&x), 0.0);
            }
        }
    }

    #[test]
    fn gaussian_profile_and_l1() {
        let p = make_potential(PotentialSpec::gaussian(2.0, 1.0)).unwrap();
        assert!((p.potential(&[1.0, 0.0, 0.0]) - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
        let d = p.diagnostics();
        // Truncation at six widths leaves a mass defect of about 1e−14.
        assert!((d.l1 + d.truncation_error - 2.0 * PI.powf(1.5)).abs() < 1e-10);
        assert!((d.l1 - 2.0 * PI.powf(1.5)).abs() < 1e-9);
        assert!(d.truncation_error > 0.0 && d.truncation_error < 1e-12);
    }

    #[test]
    fn grid_diagnostics_converge_under_refinement() {
        let p = make_potential(PotentialSpec::<f64>::gaussian(-1.5, 0.7)).unwrap();
        let g = Grid3D::new(p.support_radius(), 24, 6).unwrap();
        let d1 = p.diagnostics_on_grid(&g);
        let d2 = p.diagnostics_on_grid(&g.refined());
        for (a, b) in [(d1.l1, d2.l1), (d1.l1_weighted, d2.l1_weighted), (d1.l3, d2.l3)] {
            assert!(((a - b) / b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn rescaling_preserves_l1_over_n() {
        let p = make_potential(PotentialSpec::<f64>::square_well(3.0, 0.5)).unwrap();
        let q = p.rescaled(4.0).unwrap();
        assert!((q.support_radius() - 0.125).abs() < 1e-15);
        assert_eq!(q.profile(0.1), 48.0);
        assert!((q.diagnostics().l1 - p.diagnostics().l1 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn tabulated_interpolates() {
        let spec = PotentialSpec {
            shape: PotentialShape::Tabulated {
                r: vec![0.0, 0.5, 1.0],
                v: vec![2.0, 1.0, 0.0],
            },
            amplitude: 1.0f64,
            support_radius: 1.0,
        };
        let p = make_potential(spec).unwrap();
        assert!((p.profile(0.25) - 1.5).abs() < 1e-15);
        assert_eq!(p.kinks(), vec![0.5]);
    }

    #[test]
    fn invalid_specs() {
        assert!(make_potential(PotentialSpec::square_well(f64::NAN, 1.0)).is_err());
        assert!(make_potential(PotentialSpec::square_well(1.0, -1.0)).is_err());
        let empty = PotentialSpec {
            shape: PotentialShape::Tabulated { r: vec![], v: vec![] },
            amplitude: 1.0,
            support_radius: 1.0,
        };
        assert_eq!(make_potential(empty).unwrap_err(), PotentialError::EmptyTable);
    }

    proptest! {
        #[test]
        fn u_times_v_is_v(amp in -50.0f64..50.0, width in 0.1f64..2.0,
                          x in -3.0f64..3.0, y in -3.0f64..3.0, z in -3.0f64..3.0) {
            for spec in [PotentialSpec::square_well(amp, 2.0 * width), PotentialSpec::gaussian(amp, width)] {
                let p = make_potential(spec).unwrap();
                let pt = [x, y, z];
                let vv = p.potential(&pt);
                prop_assert!((p.u(&pt) * p.v(&pt) - vv).abs() <= 1e-12 * (1.0 + vv.abs()));
                prop_assert!((p.u(&pt).powi(2) - vv.abs()).abs() <= 1e-12 * (1.0 + vv.abs()));
            }
        }
    }
}
