//! Manufactured sources: a Gaussian bump `h` and `f = (−Δ+λ)h`, so that
//! `(−Δ+λ)⁻¹f = h` holds exactly.

use crate::real::{sub3, Point3, Real};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SourceError {
    #[error("source width must be positive and finite (got {0})")]
    BadWidth(f64),
    #[error("source amplitude and center must be finite")]
    NonFinite,
    #[error("lambda must be positive (got {0})")]
    BadLambda(f64),
}

/// `h(x) = g₀ exp(−|x−c|²/s²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSpec<T> {
    pub amplitude: T,
    pub center: Point3<T>,
    pub width: T,
    pub lambda: T,
}

impl<T: Real> SourceSpec<T> {
    pub fn new(amplitude: T, center: Point3<T>, width: T, lambda: T) -> Result<Self, SourceError> {
        if !(width > T::zero() && width.is_finite()) {
            return Err(SourceError::BadWidth(width.to_f64_lossy()));
        }
        if !amplitude.is_finite() || center.iter().any(|c| !c.is_finite()) {
            return Err(SourceError::NonFinite);
        }
        if !(lambda > T::zero() && lambda.is_finite()) {
            return Err(SourceError::BadLambda(lambda.to_f64_lossy()));
        }
        Ok(Self {
            amplitude,
            center,
            width,
            lambda,
        })
    }

    #[inline]
    fn r2(&self, x: &Point3<T>) -> T {
        let d = sub3(x, &self.center);
        d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
    }

    /// `h = (−Δ+λ)⁻¹ f`.
    #[inline]
    pub fn h(&self, x: &Point3<T>) -> T {
        self.amplitude * (-self.r2(x) / (self.width * self.width)).exp()
    }

    /// `f = (λ + 6/s² − 4|x−c|²/s⁴) h`.
    pub fn f(&self, x: &Point3<T>) -> T {
        let s2 = self.width * self.width;
        let r2 = self.r2(x);
        (self.lambda + T::lit(6.0) / s2 - T::lit(4.0) * r2 / (s2 * s2)) * self.h(x)
    }

    /// `∫ f_self · h_other`, which equals `(f_self, (−Δ+λ)⁻¹ f_other)`.
    ///
    /// Closed form from the Gaussian product rule.
    pub fn f_dot_h(&self, other: &Self) -> T {
        let alpha = T::one() / (self.width * self.width);
        let beta = T::one() / (other.width * other.width);
        let gamma = alpha + beta;
        let ab = sub3(&self.center, &other.center);
        let d2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
        let m = [0, 1, 2].map(|k| (alpha * self.center[k] + beta * other.center[k]) / gamma);
        let mc = sub3(&m, &self.center);
        let mc2 = mc[0] * mc[0] + mc[1] * mc[1] + mc[2] * mc[2];
        let pref = self.amplitude
            * other.amplitude
            * (-(alpha * beta / gamma) * d2).exp()
            * (T::PI() / gamma).powf(T::lit(1.5));
        // ∫ |x−c|² e^{−γ|x−m|²} = (π/γ)^{3/2} (|m−c|² + 3/(2γ))
        let second = mc2 + T::lit(1.5) / gamma;
        pref * (self.lambda + T::lit(6.0) * alpha - T::lit(4.0) * alpha * alpha * second)
    }

    /// `‖h‖₂²`.
    pub fn h_norm2(&self) -> T {
        self.amplitude * self.amplitude * (T::PI() * self.width * self.width / T::lit(2.0)).powf(T::lit(1.5))
    }

    /// `‖f‖₂²` by the same product rule.
    pub fn f_norm2(&self) -> T {
        // f = (A − B r²) h, A = λ + 6/s², B = 4/s⁴, h² = g₀² e^{−2r²/s²}
        let s2 = self.width * self.width;
        let a = self.lambda + T::lit(6.0) / s2;
        let b = T::lit(4.0) / (s2 * s2);
        let g = T::lit(2.0) / s2;
        let base = (T::PI() / g).powf(T::lit(1.5));
        let m2 = T::lit(1.5) / g;
        let m4 = T::lit(15.0) / (T::lit(4.0) * g * g);
        self.amplitude * self.amplitude * base * (a * a - T::lit(2.0) * a * b * m2 + b * b * m4)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::Grid3D;

    #[test]
    fn f_is_minus_laplacian_plus_lambda_of_h() {
        let s = SourceSpec::new(1.3f64, [0.1, -0.2, 0.3], 0.7, 25.0).unwrap();
        let x = [0.4, 0.1, -0.2];
        let eps = 1e-4;
        let mut lap = 0.0;
        for k in 0..3 {
            let mut p = x;
            let mut m = x;
            p[k] += eps;
            m[k] -= eps;
            lap += (s.h(&p) - 2.0 * s.h(&x) + s.h(&m)) / (eps * eps);
        }
        let f_fd = -lap + 25.0 * s.h(&x);
        assert!((f_fd - s.f(&x)).abs() < 1e-5 * s.f(&x).abs().max(1.0));
    }

    #[test]
    fn closed_form_inner_products() {
        let a = SourceSpec::new(1.0, [0.2, 0.0, 0.0], 0.5, 9.0).unwrap();
        let b = SourceSpec::new(-0.7, [0.0, 0.3, -0.1], 0.8, 9.0).unwrap();
        let g = Grid3D::<f64>::new(6.0, 80, 450).unwrap();
        let num = g.integrate(|x| a.f(x) * b.h(x));
        assert!((num - a.f_dot_h(&b)).abs() < 1e-8, "{num} vs {}", a.f_dot_h(&b));
        // Resolvent symmetry of the closed form.
        assert!((a.f_dot_h(&b) - b.f_dot_h(&a)).abs() < 1e-12);
        let nh = g.integrate(|x| a.h(x) * a.h(x));
        assert!((nh - a.h_norm2()).abs() < 1e-10);
        let nf = g.integrate(|x| a.f(x) * a.f(x));
        assert!((nf - a.f_norm2()).abs() < 1e-8 * nf);
    }

    #[test]
    fn validation() {
        assert!(SourceSpec::new(1.0, [0.0; 3], 0.0, 1.0).is_err());
        assert!(SourceSpec::new(1.0, [0.0; 3], 1.0, 0.0).is_err());
        assert!(SourceSpec::new(f64::NAN, [0.0; 3], 1.0, 1.0).is_err());
    }
}
