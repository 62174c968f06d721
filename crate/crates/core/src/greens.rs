//! Yukawa kernels, Nyström discretizations of `(−Δ+λ)⁻¹`, the obstacle
//! interaction matrix and the resolvent-squared kernel.
//!
//! Notation: `𝒢^λ(x) = e^{−√λ|x|}/(4π|x|)` and `κ = √λ`.

use crate::linalg::{symmetric_spectral_radius, Matrix};
use crate::quadrature::{integrate_adaptive, Grid3D};
use crate::real::{dist3, norm3, Point3, Real};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GreensError {
    #[error("Yukawa kernel evaluated at the origin")]
    Singular,
    #[error("lambda must be nonnegative and finite (got {0})")]
    BadLambda(f64),
    #[error("the resolvent-squared kernel needs lambda > 0")]
    ZeroLambda,
    #[error("points {0} and {1} coincide")]
    DuplicatePoints(usize, usize),
}

fn check_lambda<T: Real>(lambda: T) -> Result<(), GreensError> {
    if lambda >= T::zero() && lambda.is_finite() {
        Ok(())
    } else {
        Err(GreensError::BadLambda(lambda.to_f64_lossy()))
    }
}

/// `𝒢^λ(x)`.
pub fn yukawa<T: Real>(x: &Point3<T>, lambda: T) -> Result<T, GreensError> {
    check_lambda(lambda)?;
    let r = norm3(x);
    if r == T::zero() {
        return Err(GreensError::Singular);
    }
    Ok(yukawa_radial(r, lambda.sqrt()))
}

/// `e^{−κr}/(4πr)` without checks.
#[inline]
pub fn yukawa_radial<T: Real>(r: T, kappa: T) -> T {
    (-kappa * r).exp() / (T::four_pi() * r)
}

/// `K2(r, λ) = ∫ 𝒢^λ(x−z)𝒢^λ(x−z′) dx = e^{−√λ r}/(8π√λ)`, `r = |z−z′|`.
pub fn resolvent_squared_kernel<T: Real>(r: T, lambda: T) -> Result<T, GreensError> {
    check_lambda(lambda)?;
    if lambda == T::zero() {
        return Err(GreensError::ZeroLambda);
    }
    Ok(k2_radial(r, lambda.sqrt()))
}

#[inline]
pub fn k2_radial<T: Real>(r: T, kappa: T) -> T {
    (-kappa * r).exp() / (T::lit(8.0) * T::PI() * kappa)
}

/// `∫_{|z|≤R} 𝒢^κ(x−z) dz` for `|x| = r ≤ R`, with `κ = √λ ≥ 0`.
///
/// Closed form `[1 − (1+κR)e^{−κR} sinh(κr)/(κr)]/κ²`, switched to series for
/// small `κR` so that `κ → 0` gives `R²/2 − r²/6` without cancellation.
pub fn ball_yukawa_integral<T: Real>(r: T, radius: T, kappa: T) -> T {
    let t = kappa * radius;
    let y = kappa * r;
    if t < T::one() {
        // P(t)/κ² = R² Σ_{n≥2} (−1)^n (n−1) t^{n−2}/n!
        let mut p_over = T::zero();
        let mut term = T::lit(0.5); // 1/n! · t^{n−2} at n = 2
        for n in 2..30 {
            let sign = if n % 2 == 0 { T::one() } else { -T::one() };
            p_over += sign * T::lit((n - 1) as f64) * term;
            term = term * t / T::lit((n + 1) as f64);
        }
        // (sinhc(y) − 1)/κ² = r² Σ_{k≥1} y^{2k−2}/(2k+1)!
        let mut s_over = T::zero();
        let mut term = T::lit(1.0 / 6.0);
        for k in 1..20 {
            s_over += term;
            term = term * y * y / T::lit(((2 * k + 2) * (2 * k + 3)) as f64);
        }
        let p = t * t * p_over;
        radius * radius * p_over - (T::one() - p) * r * r * s_over
    } else {
        // (1+t)e^{−t} sinh(y)/y written without overflow.
        let g = if y < T::lit(1e-4) {
            (T::one() + t) * (-t).exp() * (T::one() + y * y / T::lit(6.0))
        } else {
            (T::one() + t) * ((y - t).exp() - (-y - t).exp()) / (T::lit(2.0) * y)
        };
        (T::one() - g) / (kappa * kappa)
    }
}

/// `∫_{|z|≤ρ} 𝒢^κ(z) dz = (1 − (1+κρ)e^{−κρ})/κ²`.
pub fn centered_ball_yukawa_integral<T: Real>(rho: T, kappa: T) -> T {
    ball_yukawa_integral(T::zero(), rho, kappa)
}

/// How the diagonal of the weakly singular kernel is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Desingularization {
    /// Singularity subtraction: `Σ_{m≠k} w_m 𝒢(x_k−x_m)(g_m − g_k) + g_k S_k`
    /// with `S_k` the exact ball integral of the kernel. Refinement-convergent
    /// at the rate of the smooth quadrature.
    #[default]
    SingularitySubtraction,
    /// Self weight `∫_{|z|≤ρ_k} 𝒢(z) dz` with `(4π/3)ρ_k³ = w_k`. First order.
    EqualVolumeBall,
}

/// Dense Nyström matrix `T` with `(T g)_k ≈ ∫_{ball} 𝒢^κ(x_k − z) g(z) dz`.
///
/// `W T` is symmetric for `W = diag(w)` under both rules.
pub fn nystrom_matrix<T: Real>(grid: &Grid3D<T>, kappa: T, rule: Desingularization) -> Matrix<T> {
    let m = grid.len();
    let rows: Vec<Vec<T>> = (0..m)
        .into_par_iter()
        .map(|k| {
            let xk = grid.nodes[k];
            let mut row = vec![T::zero(); m];
            let mut off = T::zero();
            for j in 0..m {
                if j != k {
                    let e = grid.weights[j] * yukawa_radial(dist3(&xk, &grid.nodes[j]), kappa);
                    row[j] = e;
                    off += e;
                }
            }
            row[k] = match rule {
                Desingularization::SingularitySubtraction => {
                    ball_yukawa_integral(norm3(&xk), grid.radius, kappa) - off
                }
                Desingularization::EqualVolumeBall => {
                    let rho = (T::lit(3.0) * grid.weights[k] / T::four_pi()).cbrt();
                    centered_ball_yukawa_integral(rho, kappa)
                }
            };
            row
        })
        .collect();
    Matrix::from_row_major(m, m, rows.into_iter().flatten().collect())
}

/// Off-grid row of the Nyström operator at an arbitrary `x`: the weights
/// `w_m 𝒢^κ(x − z_m)` (zero where `x` hits a node) and the ball integral
/// `S^κ(x)` (zero outside the ball) used for singularity subtraction.
pub fn nystrom_row_at<T: Real>(
    grid: &Grid3D<T>,
    kappa: T,
    x: &Point3<T>,
) -> (Vec<T>, T) {
    let row: Vec<T> = grid
        .nodes
        .iter()
        .zip(&grid.weights)
        .map(|(z, &w)| {
            let r = dist3(x, z);
            if r == T::zero() {
                T::zero()
            } else {
                w * yukawa_radial(r, kappa)
            }
        })
        .collect();
    let rx = norm3(x);
    let s = if rx <= grid.radius {
        ball_yukawa_integral(rx, grid.radius, kappa)
    } else {
        T::zero()
    };
    (row, s)
}

/// How `‖G^λ‖` is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormEstimate {
    /// Power iteration to relative tolerance 1e−8.
    #[default]
    Spectral,
    /// Frobenius upper bound.
    Frobenius,
}

/// Point count above which the spectral estimate falls back to Frobenius.
pub const SPECTRAL_NORM_MAX_N: usize = 8192;

/// `G^λ_ij = 𝒢^λ(y_i − y_j)` off the diagonal, zero on it.
#[derive(Debug, Clone)]
pub struct InteractionMatrix<T> {
    pub entries: Matrix<T>,
    pub lambda: T,
    /// `(1/N)‖G^λ‖`; `None` until [`InteractionMatrix::with_norm`] is called.
    pub opnorm_over_n: Option<T>,
    pub norm_estimate: Option<NormEstimate>,
}

impl<T: Real> InteractionMatrix<T> {
    pub fn assemble(points: &[Point3<T>], lambda: T) -> Result<Self, GreensError> {
        check_lambda(lambda)?;
        let n = points.len();
        let kappa = lambda.sqrt();
        let upper: Vec<Result<Vec<T>, GreensError>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (i + 1..n)
                    .map(|j| {
                        let r = dist3(&points[i], &points[j]);
                        if r == T::zero() {
                            Err(GreensError::DuplicatePoints(i, j))
                        } else {
                            Ok(yukawa_radial(r, kappa))
                        }
                    })
                    .collect()
            })
            .collect();
        let mut entries = Matrix::zeros(n, n);
        for (i, row) in upper.into_iter().enumerate() {
            for (off, g) in row?.into_iter().enumerate() {
                let j = i + 1 + off;
                entries[(i, j)] = g;
                entries[(j, i)] = g;
            }
        }
        Ok(Self {
            entries,
            lambda,
            opnorm_over_n: None,
            norm_estimate: None,
        })
    }

    pub fn n(&self) -> usize {
        self.entries.rows()
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let n = self.n();
        (0..n)
            .into_par_iter()
            .map(|i| crate::linalg::dot(self.entries.row(i), x))
            .collect()
    }

    pub fn spectral_norm(&self) -> T {
        let n = self.n();
        if n < 2 {
            return T::zero();
        }
        symmetric_spectral_radius(|v: &[T]| self.matvec(v), n, T::lit(1e-8), 10_000, 0x5eed)
    }

    pub fn frobenius_norm(&self) -> T {
        self.entries.frobenius_norm()
    }

    /// Fills `opnorm_over_n`.
    pub fn with_norm(mut self, estimate: NormEstimate) -> Self {
        let n = self.n();
        let est = if n > SPECTRAL_NORM_MAX_N {
            NormEstimate::Frobenius
        } else {
            estimate
        };
        let norm = match est {
            NormEstimate::Spectral => self.spectral_norm(),
            NormEstimate::Frobenius => self.frobenius_norm(),
        };
        self.opnorm_over_n = Some(if n == 0 {
            T::zero()
        } else {
            norm / T::from_usize_lossy(n)
        });
        self.norm_estimate = Some(est);
        self
    }
}

/// Interaction matrix with `(1/N)‖G^λ‖` from power iteration.
pub fn interaction_matrix<T: Real>(
    points: &[Point3<T>],
    lambda: T,
) -> Result<InteractionMatrix<T>, GreensError> {
    Ok(InteractionMatrix::assemble(points, lambda)?.with_norm(NormEstimate::Spectral))
}

/// Smallest `λ` in an increasing grid with `(1/N)‖G^λ‖ < 1`.
pub fn lambda0_search<T: Real>(
    points: &[Point3<T>],
    lambda_grid: &[T],
) -> Result<Option<T>, GreensError> {
    for &lambda in lambda_grid {
        let g = interaction_matrix(points, lambda)?;
        if g.opnorm_over_n.unwrap_or_else(T::zero) < T::one() {
            return Ok(Some(lambda));
        }
    }
    Ok(None)
}

/// Independent volumetric evaluation of `∫ 𝒢^λ(x−z)𝒢^λ(x−z′) dx`.
///
/// Places `z` at the origin and `z′` on the polar axis at distance `d`. The
/// azimuth integrates to 2π by symmetry; the remaining `(r, cos θ)` integral
/// is nested adaptive Gauss–Kronrod, split at `r = d` where the inner
/// integrand is singular, and cut at a radius whose analytic tail bound is
/// below the tolerance.
pub fn resolvent_squared_quadrature(d: f64, lambda: f64, rel_tol: f64) -> f64 {
    let kappa = lambda.sqrt();
    let four_pi = 4.0 * std::f64::consts::PI;
    let inner = |r: f64| -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        let f = |c: f64| {
            let rho2 = (r * r + d * d - 2.0 * r * d * c).max(0.0);
            let rho = rho2.sqrt();
            if rho == 0.0 {
                0.0
            } else {
                (-kappa * rho).exp() / (four_pi * rho)
            }
        };
        let (v, _) = integrate_adaptive(f, -1.0, 1.0, 1e-300, rel_tol * 1e-3, 2000);
        let radial = (-kappa * r).exp() / (four_pi * r);
        2.0 * std::f64::consts::PI * r * r * radial * v
    };
    // Beyond r_max > d the integrand is below e^{−κ(2r−d)}/(16π² r(r−d)) · 4πr²·…;
    // choosing κ(2 r_max − d) ≥ 40 makes the tail negligible against 1e−12.
    let r_max = d + (40.0 + d * kappa) / kappa;
    let tol = |a: f64, b: f64| integrate_adaptive(inner, a, b, 1e-300, rel_tol * 1e-2, 2000).0;
    let mut total = 0.0;
    if d > 0.0 {
        total += tol(0.0, d);
        total += tol(d, 2.0 * d);
        total += tol(2.0 * d, r_max.max(3.0 * d));
    } else {
        total += tol(0.0, r_max);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn yukawa_values() {
        assert!((yukawa(&[1.0, 0.0, 0.0], 0.0).unwrap() - 1.0 / (4.0 * PI)).abs() < 1e-15);
        assert!((yukawa(&[0.0f64, 1.0, 0.0], 1.0).unwrap() - (-1.0f64).exp() / (4.0 * PI)).abs() < 1e-17);
        assert!(
            (yukawa(&[0.0, 0.0, 2.0], 4.0).unwrap() - (-4.0f64).exp() / (8.0 * PI)).abs() < 1e-16
        );
        assert_eq!(yukawa(&[0.0; 3], 1.0), Err(GreensError::Singular));
    }

    #[test]
    fn k2_values() {
        assert!((resolvent_squared_kernel(0.0f64, 1.0).unwrap() - 0.039_788_7).abs() < 1e-7);
        assert!(
            (resolvent_squared_kernel(1.0, 1.0).unwrap() - (-1.0f64).exp() / (8.0 * PI)).abs()
                < 1e-16
        );
        assert_eq!(resolvent_squared_kernel(1.0, 0.0), Err(GreensError::ZeroLambda));
    }

    #[test]
    fn k2_matches_volumetric_quadrature() {
        let q = resolvent_squared_quadrature(1.0, 4.0, 1e-8);
        let exact = resolvent_squared_kernel(1.0, 4.0).unwrap();
        assert!(((q - exact) / exact).abs() < 1e-6, "{q} vs {exact}");
        let q0 = resolvent_squared_quadrature(0.0, 2.0, 1e-8);
        let e0 = resolvent_squared_kernel(0.0, 2.0).unwrap();
        assert!(((q0 - e0) / e0).abs() < 1e-6);
    }

    #[test]
    fn ball_integral_matches_quadrature_oracle() {
        // Oracle: integrate the kernel around x in a large product grid with
        // the singular point as origin of the radial coordinate.
        for (r, big_r, kappa) in [(0.0, 1.0, 2.0), (0.3, 1.0, 0.0), (0.7, 1.3, 5.0), (0.5, 1.0, 1e-3), (0.2, 0.5, 0.99 / 0.5)] {
            let x = [r, 0.0, 0.0];
            // Along each direction θ from x the ball boundary is at distance
            // s(θ) = −x·n + sqrt((x·n)² − |x|² + R²); ∫ 𝒢 = ∫_{S²} ∫_0^s e^{−κt}/(4π) t dt dΩ.
            let rule = crate::quadrature::AngularRule::GaussProduct { n: 40 };
            let (dirs, w) = rule.nodes_weights::<f64>();
            let mut total = 0.0;
            for (nvec, wd) in dirs.iter().zip(&w) {
                let xn = x[0] * nvec[0];
                let s = -xn + (xn * xn - r * r + big_r * big_r).sqrt();
                let radial = if kappa == 0.0 {
                    s * s / 2.0
                } else {
                    (1.0 - (1.0 + kappa * s) * (-kappa * s).exp()) / (kappa * kappa)
                };
                total += wd * radial / (4.0 * PI);
            }
            let closed = ball_yukawa_integral(r, big_r, kappa);
            assert!((total - closed).abs() < 1e-10 * closed.abs().max(1.0), "{r} {big_r} {kappa}: {total} vs {closed}");
        }
    }

    #[test]
    fn ball_integral_is_continuous_across_branch() {
        let a: f64 = ball_yukawa_integral(0.4, 1.0, 1.0 - 1e-12);
        let b = ball_yukawa_integral(0.4, 1.0, 1.0 + 1e-12);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn nystrom_matrix_is_weighted_symmetric_and_accurate() {
        let g = Grid3D::<f64>::new(1.0, 12, 38).unwrap();
        for rule in [Desingularization::SingularitySubtraction, Desingularization::EqualVolumeBall] {
            let t = nystrom_matrix(&g, 2.0, rule);
            let wt = Matrix::from_fn(g.len(), g.len(), |i, j| g.weights[i] * t[(i, j)]);
            assert!(wt.is_symmetric(1e-14));
        }
        // Constant density: exact on the subtraction rule.
        let t = nystrom_matrix(&g, 2.0, Desingularization::SingularitySubtraction);
        let ones = vec![1.0; g.len()];
        let tv: Vec<f64> = t.matvec(&ones);
        for (k, x) in g.nodes.iter().enumerate() {
            assert!((tv[k] - ball_yukawa_integral(norm3(x), 1.0, 2.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn interaction_matrix_examples() {
        let one = interaction_matrix(&[[0.3, 0.1, 0.0]], 1.0).unwrap();
        assert_eq!(one.entries.rows(), 1);
        assert_eq!(one.opnorm_over_n, Some(0.0));
        let two = interaction_matrix(&[[0.0; 3], [1.0, 0.0, 0.0]], 1.0).unwrap();
        let g12 = (-1.0f64).exp() / (4.0 * PI);
        assert!((two.entries[(0, 1)] - g12).abs() < 1e-16);
        assert!((two.opnorm_over_n.unwrap() - (-1.0f64).exp() / (8.0 * PI)).abs() < 1e-12);
        assert!(matches!(
            InteractionMatrix::assemble(&[[0.0; 3], [0.0; 3]], 1.0),
            Err(GreensError::DuplicatePoints(0, 1))
        ));
    }

    #[test]
    fn interaction_matrix_scaling() {
        let pts: Vec<Point3<f64>> = (0..12)
            .map(|i| {
                let t = i as f64;
                [(1.3 * t).sin(), (0.7 * t).cos(), 0.1 * t]
            })
            .collect();
        let s = 2.5;
        let scaled: Vec<_> = pts.iter().map(|p| p.map(|c| c * s)).collect();
        let a = InteractionMatrix::assemble(&scaled, 3.0).unwrap();
        let b = InteractionMatrix::assemble(&pts, s * s * 3.0).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                assert!((a.entries[(i, j)] - b.entries[(i, j)] / s).abs() < 1e-15);
            }
        }
        let m = a.with_norm(NormEstimate::Spectral);
        let f = m.frobenius_norm() / 12.0;
        assert!(m.opnorm_over_n.unwrap() <= f * (1.0 + 1e-12));
    }

    #[test]
    fn lambda0_examples() {
        let grid = [0.5, 1.0, 4.0];
        assert_eq!(lambda0_search(&[[0.0; 3]], &grid).unwrap(), Some(0.5));
        assert_eq!(
            lambda0_search(&[[0.0; 3], [1.0, 0.0, 0.0]], &grid).unwrap(),
            Some(0.5)
        );
    }
}
