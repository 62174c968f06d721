//! Point-charge system and AGHH point interactions.
//!
//! The charges solve `(N/4πa) q_i + Σ_{j≠i} G^λ_ij q_j = −h(y_i)` with
//! `h = 𝒢^λ f`. It is solved in the scaled form `Γ^λ q = −(4πa/N) h(y)`,
//! `Γ^λ = I + (4πa/N) G^λ`, which is a small perturbation of the identity
//! once `λ` is large enough.

use crate::field::GreenField;
use crate::greens::{GreensError, InteractionMatrix, NormEstimate};
use crate::linalg::{gmres, norm2, GmresOptions, LinalgError, Lu, Matrix};
use crate::real::{Point3, Real};
use crate::source::SourceSpec;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PointChargeError {
    #[error(transparent)]
    Kernel(#[from] GreensError),
    #[error("point-charge system is numerically singular ({source}); 4π|a|‖G‖/N = {contraction:?}")]
    SingularSystem {
        source: LinalgError,
        contraction: Option<f64>,
    },
    #[error("Ξ is singular at this lambda ({0}); shift lambda")]
    SingularXi(LinalgError),
    #[error("lambda {found} does not match the source lambda {expected}")]
    LambdaMismatch { expected: f64, found: f64 },
    #[error("configuration is empty")]
    Empty,
}

/// Which linear solver runs the `N×N` system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChargeSolver {
    /// Dense LU up to `dense_max`, GMRES above.
    #[default]
    Auto,
    Dense,
    Iterative,
}

#[derive(Debug, Clone, Copy)]
pub struct PointChargeOptions<T> {
    pub solver: ChargeSolver,
    pub dense_max: usize,
    /// Relative residual target for the iterative path.
    pub tol: T,
    /// Also estimate `4π|a|‖G^λ‖/N` (one power iteration).
    pub norm_diagnostic: bool,
}

impl<T: Real> Default for PointChargeOptions<T> {
    fn default() -> Self {
        Self {
            solver: ChargeSolver::Auto,
            dense_max: 256,
            tol: T::lit(1e-12),
            norm_diagnostic: false,
        }
    }
}

impl<T> PointChargeOptions<T> {
    fn dense(&self, n: usize) -> bool {
        match self.solver {
            ChargeSolver::Auto => n <= self.dense_max,
            ChargeSolver::Dense => true,
            ChargeSolver::Iterative => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChargeVector<T> {
    pub values: Vec<T>,
    pub lambda: T,
    pub a: T,
    /// `‖A q − b‖/‖b‖` of the system actually solved.
    pub residual: T,
    /// Set when `a = 0` and the exact limit `q ≡ 0` was returned.
    pub zero_interaction: bool,
    pub iterations: usize,
    /// `4π|a|‖G^λ‖/N` when requested.
    pub contraction: Option<T>,
}

impl<T: Real> ChargeVector<T> {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn sum(&self) -> T {
        crate::real::compensated_sum(self.values.iter().copied())
    }
}

/// `(𝒢^λ f)(y_i) = h(y_i)` for every obstacle.
pub fn source_at_points<T: Real>(points: &[Point3<T>], src: &SourceSpec<T>) -> Vec<T> {
    points.iter().map(|y| src.h(y)).collect()
}

/// `d I + s G` as a dense matrix.
fn shifted<T: Real>(g: &InteractionMatrix<T>, diag: T, s: T) -> Matrix<T> {
    let n = g.n();
    Matrix::from_fn(n, n, |i, j| {
        if i == j {
            diag
        } else {
            s * g.entries[(i, j)]
        }
    })
}

/// Solves `(d I + s G) x = b` by the configured route.
fn solve_shifted<T: Real>(
    g: &InteractionMatrix<T>,
    diag: T,
    s: T,
    b: &[T],
    opts: &PointChargeOptions<T>,
) -> Result<(Vec<T>, T, usize), LinalgError> {
    let n = g.n();
    let apply = |x: &[T]| -> Vec<T> {
        let gx = g.matvec(x);
        x.iter().zip(gx).map(|(&xi, gi)| diag * xi + s * gi).collect()
    };
    let (x, iterations) = if opts.dense(n) {
        let lu = Lu::factor(shifted(g, diag, s))?;
        (lu.solve(b), 0)
    } else {
        let sol = gmres(
            apply,
            |r: &[T]| r.iter().map(|&v| v / diag).collect(),
            b,
            None,
            GmresOptions {
                tol: opts.tol,
                ..GmresOptions::default()
            },
        )?;
        (sol.x, sol.iterations)
    };
    let ax = apply(&x);
    let r: Vec<T> = ax.iter().zip(b).map(|(&p, &q)| p - q).collect();
    let bn = norm2(b);
    let res = if bn == T::zero() { norm2(&r) } else { norm2(&r) / bn };
    Ok((x, res, iterations))
}

fn check_lambda<T: Real>(lambda: T, src: &SourceSpec<T>) -> Result<(), PointChargeError> {
    if lambda != src.lambda {
        return Err(PointChargeError::LambdaMismatch {
            expected: src.lambda.to_f64_lossy(),
            found: lambda.to_f64_lossy(),
        });
    }
    Ok(())
}

/// Solves for `q` given a pre-assembled interaction matrix.
pub fn solve_point_charges_with<T: Real>(
    g: &InteractionMatrix<T>,
    points: &[Point3<T>],
    a: T,
    src: &SourceSpec<T>,
    opts: &PointChargeOptions<T>,
) -> Result<ChargeVector<T>, PointChargeError> {
    check_lambda(g.lambda, src)?;
    let n = points.len();
    if n == 0 {
        return Err(PointChargeError::Empty);
    }
    let lambda = g.lambda;
    if a == T::zero() {
        return Ok(ChargeVector {
            values: vec![T::zero(); n],
            lambda,
            a,
            residual: T::zero(),
            zero_interaction: true,
            iterations: 0,
            contraction: Some(T::zero()),
        });
    }
    let s = T::four_pi() * a / T::from_usize_lossy(n);
    let b: Vec<T> = source_at_points(points, src).into_iter().map(|h| -s * h).collect();
    let contraction = if opts.norm_diagnostic {
        let gn = g.clone().with_norm(NormEstimate::Spectral);
        gn.opnorm_over_n.map(|x| x * T::four_pi() * a.abs())
    } else {
        g.opnorm_over_n.map(|x| x * T::four_pi() * a.abs())
    };
    let (values, residual, iterations) =
        solve_shifted(g, T::one(), s, &b, opts).map_err(|e| PointChargeError::SingularSystem {
            source: e,
            contraction: contraction.map(|c| c.to_f64_lossy()),
        })?;
    Ok(ChargeVector {
        values,
        lambda,
        a,
        residual,
        zero_interaction: false,
        iterations,
        contraction,
    })
}

/// `q` for configuration `points`, scattering length `a` and source `src`.
pub fn solve_point_charges<T: Real>(
    points: &[Point3<T>],
    a: T,
    lambda: T,
    src: &SourceSpec<T>,
    opts: &PointChargeOptions<T>,
) -> Result<ChargeVector<T>, PointChargeError> {
    check_lambda(lambda, src)?;
    let g = InteractionMatrix::assemble(points, lambda)?;
    solve_point_charges_with(&g, points, a, src, opts)
}

/// Unscaled form `(N/4πa) q + G q = −h(y)` solved by Householder QR; the
/// independent factorization used to cross-check [`solve_point_charges`].
pub fn solve_point_charges_raw_qr<T: Real>(
    points: &[Point3<T>],
    a: T,
    lambda: T,
    src: &SourceSpec<T>,
) -> Result<Vec<T>, PointChargeError> {
    let g = InteractionMatrix::assemble(points, lambda)?;
    let n = points.len();
    let d = T::from_usize_lossy(n) / (T::four_pi() * a);
    let m = shifted(&g, d, T::one());
    let qr = crate::linalg::Qr::factor(m).map_err(|e| PointChargeError::SingularSystem {
        source: e,
        contraction: None,
    })?;
    let b: Vec<T> = source_at_points(points, src).into_iter().map(|h| -h).collect();
    Ok(qr.solve(&b))
}

/// `ψ̂_N = h + Σ_i q_i 𝒢^λ(· − y_i)`.
pub fn assemble_point_field<T: Real>(
    q: &ChargeVector<T>,
    points: &[Point3<T>],
    src: &SourceSpec<T>,
) -> Result<GreenField<T>, PointChargeError> {
    check_lambda(q.lambda, src)?;
    Ok(GreenField::from_source(src).with_atoms(points, &q.values))
}

/// `‖(Γ^λ)⁻¹‖₁` from an explicit inverse; dense, for diagnostics at small `N`.
pub fn gamma_inverse_norm1<T: Real>(points: &[Point3<T>], a: T, lambda: T) -> Result<T, PointChargeError> {
    let g = InteractionMatrix::assemble(points, lambda)?;
    let n = points.len();
    let s = T::four_pi() * a / T::from_usize_lossy(n);
    let lu = Lu::factor(shifted(&g, T::one(), s)).map_err(|e| PointChargeError::SingularSystem {
        source: e,
        contraction: None,
    })?;
    let mut best = T::zero();
    for j in 0..n {
        let mut e = vec![T::zero(); n];
        e[j] = T::one();
        let col = lu.solve(&e);
        let c: T = col.iter().map(|v| v.abs()).sum();
        best = best.max(c);
    }
    Ok(best)
}

/// Right-hand side of `|Σ q_i| ≤ (4π|a|/N) Σ|h(y_i)| · ‖(Γ^λ)⁻¹‖₁`.
///
/// With the induced 1-norm the inequality is `|1ᵀq| ≤ ‖q‖₁ ≤ ‖Γ⁻¹‖₁‖b‖₁`.
pub fn charge_sum_bound<T: Real>(
    points: &[Point3<T>],
    a: T,
    src: &SourceSpec<T>,
) -> Result<T, PointChargeError> {
    let n = T::from_usize_lossy(points.len());
    let hsum: T = points.iter().map(|y| src.h(y).abs()).sum();
    Ok(T::four_pi() * a.abs() / n * hsum * gamma_inverse_norm1(points, a, src.lambda)?)
}

/// AGHH resolvent with `N` centres of strength `Nα`: solves
/// `Ξ q̃ = h(y)`, `Ξ = (Nα + √λ/4π) I − G^λ`, and returns `φ_N`.
pub fn aghh_resolvent<T: Real>(
    points: &[Point3<T>],
    alpha: T,
    lambda: T,
    src: &SourceSpec<T>,
    opts: &PointChargeOptions<T>,
) -> Result<(ChargeVector<T>, GreenField<T>), PointChargeError> {
    check_lambda(lambda, src)?;
    let n = points.len();
    if n == 0 {
        return Err(PointChargeError::Empty);
    }
    let g = InteractionMatrix::assemble(points, lambda)?;
    let diag = T::from_usize_lossy(n) * alpha + lambda.sqrt() / T::four_pi();
    let b = source_at_points(points, src);
    let (values, residual, iterations) =
        solve_shifted(&g, diag, -T::one(), &b, opts).map_err(PointChargeError::SingularXi)?;
    let q = ChargeVector {
        values,
        lambda,
        // Scattering length of one centre of strength Nα.
        a: -T::one() / (T::four_pi() * alpha),
        residual,
        zero_interaction: false,
        iterations,
        contraction: None,
    };
    let field = GreenField::from_source(src).with_atoms(points, &q.values);
    Ok((q, field))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::l2_distance;
    use crate::randomfield::{sample_configuration, DensitySpec};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn src() -> SourceSpec<f64> {
        SourceSpec::new(1.0, [0.1, 0.0, -0.1], 0.6, 25.0).unwrap()
    }

    fn config(n: usize, seed: u64) -> Vec<[f64; 3]> {
        let w = DensitySpec::uniform_ball(1.0).unwrap();
        sample_configuration(&w, n, seed).unwrap().points
    }

    #[test]
    fn single_obstacle_closed_form() {
        let s = src();
        let y = [[0.3, 0.2, 0.1]];
        let q = solve_point_charges(&y, 0.5, 25.0, &s, &Default::default()).unwrap();
        assert!((q.values[0] + 4.0 * PI * 0.5 * s.h(&y[0])).abs() < 1e-15);
        let (qt, _) = aghh_resolvent(&y, 2.0, 25.0, &s, &Default::default()).unwrap();
        assert!((qt.values[0] - s.h(&y[0]) / (2.0 + 5.0 / (4.0 * PI))).abs() < 1e-15);
    }

    #[test]
    fn zero_scattering_length_is_exact_limit() {
        let q = solve_point_charges(&config(8, 1), 0.0, 25.0, &src(), &Default::default()).unwrap();
        assert!(q.zero_interaction);
        assert!(q.values.iter().all(|&v| v == 0.0));
        let field = assemble_point_field(&q, &config(8, 1), &src()).unwrap();
        let x = [0.2, 0.4, 0.1];
        assert_eq!(field.evaluate(&x), src().h(&x));
    }

    #[test]
    fn small_a_is_linear() {
        let pts = config(16, 3);
        let n1 = norm2(&solve_point_charges(&pts, 1e-4, 25.0, &src(), &Default::default()).unwrap().values);
        let n2 = norm2(&solve_point_charges(&pts, 2e-4, 25.0, &src(), &Default::default()).unwrap().values);
        assert!((n2 / n1 - 2.0).abs() < 1e-3);
    }

    #[test]
    fn symmetric_pair_has_equal_charges() {
        let s = src();
        let c = s.center;
        let pts = [[c[0] + 0.3, c[1], c[2]], [c[0] - 0.3, c[1], c[2]]];
        let q = solve_point_charges(&pts, 0.5, 25.0, &s, &Default::default()).unwrap();
        assert!((q.values[0] - q.values[1]).abs() <= 1e-15 * q.values[0].abs());
    }

    #[test]
    fn lu_gmres_and_qr_agree() {
        let pts = config(64, 7);
        let s = src();
        let dense = solve_point_charges(&pts, 0.518, 25.0, &s, &Default::default()).unwrap();
        let it = solve_point_charges(
            &pts,
            0.518,
            25.0,
            &s,
            &PointChargeOptions {
                solver: ChargeSolver::Iterative,
                ..Default::default()
            },
        )
        .unwrap();
        let raw = solve_point_charges_raw_qr(&pts, 0.518, 25.0, &s).unwrap();
        let scale = norm2(&dense.values);
        for i in 0..64 {
            assert!((dense.values[i] - raw[i]).abs() < 1e-10 * scale);
            assert!((dense.values[i] - it.values[i]).abs() < 1e-10 * scale);
        }
        assert!(dense.residual < 1e-14 && it.residual < 1e-11);
    }

    #[test]
    fn charge_sum_bound_holds() {
        for (seed, a) in [(1, 0.518), (2, -0.557), (3, 2.0)] {
            let pts = config(32, seed);
            let q = solve_point_charges(&pts, a, 25.0, &src(), &Default::default()).unwrap();
            let bound = charge_sum_bound(&pts, a, &src()).unwrap();
            assert!(q.sum().abs() <= bound * (1.0 + 1e-12), "{} > {bound}", q.sum());
        }
    }

    #[test]
    fn strong_aghh_coupling_recovers_free_resolvent() {
        let pts = config(16, 5);
        let norm = |alpha: f64| {
            let (q, _) = aghh_resolvent(&pts, alpha, 25.0, &src(), &Default::default()).unwrap();
            norm2(&q.values)
        };
        assert!(norm(1e3) < 1.1e-2 * norm(10.0));
        assert!(norm(1e6) < 1.1e-3 * norm(1e3));
    }

    #[test]
    fn aghh_and_point_charge_fields_approach() {
        // With α = −1/(4πa) the two systems differ by √λ/4π on the diagonal.
        let a = 0.518;
        let alpha = -1.0 / (4.0 * PI * a);
        let s = src();
        let mut rel = Vec::new();
        for n in [64usize, 256, 1024] {
            let pts = config(n, 11);
            let q = solve_point_charges(&pts, a, 25.0, &s, &Default::default()).unwrap();
            let psi = assemble_point_field(&q, &pts, &s).unwrap();
            let (_, phi) = aghh_resolvent(&pts, alpha, 25.0, &s, &Default::default()).unwrap();
            let d = l2_distance(&phi, &psi).unwrap().value;
            let kernel_part = l2_distance(&psi, &GreenField::from_source(&s)).unwrap().value;
            rel.push(d / kernel_part);
        }
        assert!(rel[1] < rel[0] / 2.0 && rel[2] < rel[1] / 2.0, "{rel:?}");
        assert!(rel[2] * 1024.0 < 10.0 * 5.0, "{rel:?}");
    }

    #[test]
    fn reproducible_bits() {
        let pts = config(300, 9);
        let a = solve_point_charges(&pts, 0.518, 25.0, &src(), &Default::default()).unwrap();
        let b = solve_point_charges(&pts, 0.518, 25.0, &src(), &Default::default()).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn lambda_mismatch_is_rejected() {
        let e = solve_point_charges(&config(4, 1), 0.5, 16.0, &src(), &Default::default());
        assert!(matches!(e, Err(PointChargeError::LambdaMismatch { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn gamma_and_raw_forms_agree(seed in 0u64..1000, n in 2usize..40, a in -1.0f64..1.0) {
            prop_assume!(a.abs() > 1e-3);
            let pts = config(n, seed);
            let s = src();
            let q = solve_point_charges(&pts, a, 25.0, &s, &Default::default()).unwrap();
            let raw = solve_point_charges_raw_qr(&pts, a, 25.0, &s).unwrap();
            let scale = norm2(&q.values).max(1e-300);
            for i in 0..n {
                prop_assert!((q.values[i] - raw[i]).abs() <= 1e-10 * scale);
            }
        }
    }
}
