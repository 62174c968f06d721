//! Effective-medium limit: the charge `q = −4πa ψ` of
//! `ψ = (−Δ + 4πaW + λ)⁻¹ f`, from the continuous charge equation
//!
//! ```text
//! (1/4πa) q(x) + ∫ 𝒢^λ(x − z) W(z) q(z) dz = −h(x)
//! ```
//!
//! discretized by Nyström on a grid over `supp W`.

use crate::field::{CloudNode, GreenField};
use crate::greens::{nystrom_matrix, nystrom_row_at, Desingularization};
use crate::linalg::{norm2, symmetric_spectral_radius, LinalgError, Lu, Matrix};
use crate::quadrature::Grid3D;
use crate::randomfield::DensitySpec;
use crate::real::{Point3, Real};
use crate::source::SourceSpec;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EffectiveError {
    #[error("Born iteration cannot converge: contraction estimate {0} ≥ 1 (increase lambda)")]
    BornDiverged(f64),
    #[error("Born iteration stalled at residual {0:e}")]
    BornStalled(f64),
    #[error("effective charge system is singular: {0}")]
    SingularSystem(LinalgError),
    #[error("lambda must be positive (got {0})")]
    BadLambda(f64),
    #[error("right-hand side has {found} entries for a grid of {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("grid radius {grid} does not cover the support of W ({support})")]
    GridTooSmall { grid: f64, support: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EffectiveSolver {
    /// Fixed point `q ← −4πa(h + T(Wq))`.
    Born,
    /// Dense LU of `I + 4πa T diag(W)`.
    #[default]
    Direct,
}

#[derive(Debug, Clone, Copy)]
pub struct EffectiveOptions<T> {
    pub solver: EffectiveSolver,
    pub tol: T,
    pub max_iter: usize,
    pub rule: Desingularization,
}

impl<T: Real> Default for EffectiveOptions<T> {
    fn default() -> Self {
        Self {
            solver: EffectiveSolver::Direct,
            tol: T::lit(1e-13),
            max_iter: 500,
            rule: Desingularization::SingularitySubtraction,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EffectiveCharge<T> {
    pub grid: Grid3D<T>,
    /// `W(z_m)` at the grid nodes.
    pub w_values: Vec<T>,
    pub q_values: Vec<T>,
    /// Nodal right-hand side `h(z_m)`.
    pub h_values: Vec<T>,
    pub a: T,
    pub lambda: T,
    pub solver: EffectiveSolver,
    /// `‖(1/4πa)q + T(Wq) + h‖₂ / ‖h‖₂`, scaled by `4π|a|`.
    pub residual: T,
    /// `4π|a|·ρ(T diag W)`; always computed for Born, on request otherwise.
    pub contraction: Option<T>,
    /// Born increments `‖q^{(k+1)} − q^{(k)}‖_W`, empty for the direct solver.
    pub increments: Vec<T>,
}

/// `4π|a|·ρ(T diag W)`. `W^{1/2}Ω^{1/2}(T W)Ω^{−1/2}W^{−1/2}` is symmetric
/// because `ΩT` is, so power iteration on the symmetrized operator applies.
pub fn born_contraction<T: Real>(t: &Matrix<T>, grid: &Grid3D<T>, w: &[T], a: T) -> T {
    let m = grid.len();
    let s: Vec<T> = (0..m).map(|k| (grid.weights[k] * w[k]).sqrt()).collect();
    let apply = |x: &[T]| -> Vec<T> {
        let y: Vec<T> = (0..m)
            .map(|k| if s[k] == T::zero() { T::zero() } else { x[k] * s[k] / grid.weights[k] })
            .collect();
        let ty = t.matvec(&y);
        (0..m).map(|k| s[k] * ty[k]).collect()
    };
    T::four_pi() * a.abs() * symmetric_spectral_radius(apply, m, T::lit(1e-10), 5000, 0xb0b)
}

fn weighted_norm<T: Real>(x: &[T], grid: &Grid3D<T>, w: &[T]) -> T {
    x.iter()
        .zip(&grid.weights)
        .zip(w)
        .map(|((&v, &g), &d)| g * d * v * v)
        .sum::<T>()
        .sqrt()
}

/// Solves the charge equation for an arbitrary nodal right-hand side `h`.
pub fn solve_effective_charge_rhs<T: Real>(
    density: &DensitySpec<T>,
    grid: &Grid3D<T>,
    a: T,
    lambda: T,
    h: Vec<T>,
    opts: &EffectiveOptions<T>,
) -> Result<EffectiveCharge<T>, EffectiveError> {
    if !(lambda > T::zero() && lambda.is_finite()) {
        return Err(EffectiveError::BadLambda(lambda.to_f64_lossy()));
    }
    let m = grid.len();
    if h.len() != m {
        return Err(EffectiveError::Dimension {
            expected: m,
            found: h.len(),
        });
    }
    let support = density.support_radius();
    if grid.radius < support * (T::one() - T::lit(1e-12)) {
        return Err(EffectiveError::GridTooSmall {
            grid: grid.radius.to_f64_lossy(),
            support: support.to_f64_lossy(),
        });
    }
    let w: Vec<T> = grid.nodes.iter().map(|x| density.density(x)).collect();
    let base = EffectiveCharge {
        grid: grid.clone(),
        w_values: w.clone(),
        q_values: vec![T::zero(); m],
        h_values: h.clone(),
        a,
        lambda,
        solver: opts.solver,
        residual: T::zero(),
        contraction: None,
        increments: Vec::new(),
    };
    if a == T::zero() || w.iter().all(|&x| x == T::zero()) {
        return Ok(base);
    }
    let t = nystrom_matrix(grid, lambda.sqrt(), opts.rule);
    let c = T::four_pi() * a;
    let apply_tw = |q: &[T]| -> Vec<T> {
        let g: Vec<T> = q.iter().zip(&w).map(|(&x, &d)| x * d).collect();
        t.matvec(&g)
    };
    let mut out = base;
    match opts.solver {
        EffectiveSolver::Direct => {
            let mat = Matrix::from_fn(m, m, |i, j| {
                let d = if i == j { T::one() } else { T::zero() };
                d + c * t[(i, j)] * w[j]
            });
            let lu = Lu::factor(mat).map_err(EffectiveError::SingularSystem)?;
            let rhs: Vec<T> = h.iter().map(|&x| -c * x).collect();
            out.q_values = lu.solve(&rhs);
        }
        EffectiveSolver::Born => {
            let contraction = born_contraction(&t, grid, &w, a);
            out.contraction = Some(contraction);
            if contraction >= T::one() {
                return Err(EffectiveError::BornDiverged(contraction.to_f64_lossy()));
            }
            let mut q: Vec<T> = h.iter().map(|&x| -c * x).collect();
            let qn = weighted_norm(&q, grid, &w).max(T::min_positive_value());
            for _ in 0..opts.max_iter {
                let tw = apply_tw(&q);
                let next: Vec<T> = h.iter().zip(&tw).map(|(&x, &y)| -c * (x + y)).collect();
                let d: Vec<T> = next.iter().zip(&q).map(|(&x, &y)| x - y).collect();
                let inc = weighted_norm(&d, grid, &w);
                out.increments.push(inc);
                q = next;
                if inc <= opts.tol * qn {
                    break;
                }
            }
            let last = *out.increments.last().unwrap_or(&T::zero());
            if last > opts.tol * qn {
                return Err(EffectiveError::BornStalled((last / qn).to_f64_lossy()));
            }
            out.q_values = q;
        }
    }
    let tw = apply_tw(&out.q_values);
    let r: Vec<T> = (0..m).map(|k| out.q_values[k] + c * (tw[k] + h[k])).collect();
    let hn = norm2(&h) * c.abs();
    out.residual = if hn == T::zero() { norm2(&r) } else { norm2(&r) / hn };
    Ok(out)
}

/// Effective charge for the manufactured source `src`.
pub fn solve_effective_charge<T: Real>(
    density: &DensitySpec<T>,
    grid: &Grid3D<T>,
    a: T,
    lambda: T,
    src: &SourceSpec<T>,
    opts: &EffectiveOptions<T>,
) -> Result<EffectiveCharge<T>, EffectiveError> {
    let h: Vec<T> = grid.nodes.iter().map(|x| src.h(x)).collect();
    solve_effective_charge_rhs(density, grid, a, lambda, h, opts)
}

impl<T: Real> EffectiveCharge<T> {
    /// Nyström interpolation of `q` at any `x`, given `h(x)`.
    ///
    /// Inside the ball the subtracted term carries the unknown `W(x)q(x)`,
    /// which is solved for in closed form.
    pub fn q_at_with(&self, x: &Point3<T>, hx: T, wx: T) -> T {
        if self.a == T::zero() {
            return T::zero();
        }
        let (row, s) = nystrom_row_at(&self.grid, self.lambda.sqrt(), x);
        let mut direct = T::zero();
        let mut row_sum = T::zero();
        for (m, &k) in row.iter().enumerate() {
            direct += k * self.w_values[m] * self.q_values[m];
            row_sum += k;
        }
        let c = T::four_pi() * self.a;
        let sub = if s == T::zero() { T::zero() } else { row_sum - s };
        -c * (hx + direct) / (T::one() - c * wx * sub)
    }

    pub fn q_at(&self, x: &Point3<T>, src: &SourceSpec<T>, density: &DensitySpec<T>) -> T {
        self.q_at_with(x, src.h(x), density.density(x))
    }

    /// `ψ = −q/4πa` at the grid nodes (`h` when `a = 0`).
    pub fn psi_values(&self) -> Vec<T> {
        if self.a == T::zero() {
            return self.h_values.clone();
        }
        let c = T::four_pi() * self.a;
        self.q_values.iter().map(|&q| -q / c).collect()
    }

    /// `Σ_m w_m |W q|(z_m)`.
    pub fn total_abs_charge(&self) -> T {
        (0..self.grid.len())
            .map(|m| self.grid.weights[m] * (self.w_values[m] * self.q_values[m]).abs())
            .sum()
    }
}

/// `ψ = h + 𝒢^λ(Wq)` with cloud nodes at the solve grid.
pub fn effective_field<T: Real>(q: &EffectiveCharge<T>, src: &SourceSpec<T>) -> GreenField<T> {
    let nodes: Vec<CloudNode<T>> = (0..q.grid.len())
        .map(|m| CloudNode {
            point: q.grid.nodes[m],
            weight: q.grid.weights[m],
            value: q.w_values[m] * q.q_values[m],
        })
        .collect();
    GreenField::from_source(src).with_cloud(nodes)
}

/// `ψ` with its cloud on a finer grid, `q` interpolated by Nyström.
///
/// Norms of `ψ` against point fields are limited by the cloud's own
/// quadrature error, so a fine cloud is cheap accuracy: interpolation costs
/// one row per node, far below a fine-grid solve.
pub fn effective_field_on<T: Real>(
    q: &EffectiveCharge<T>,
    src: &SourceSpec<T>,
    density: &DensitySpec<T>,
    fine: &Grid3D<T>,
) -> GreenField<T> {
    let nodes: Vec<CloudNode<T>> = (0..fine.len())
        .into_par_iter()
        .map(|m| {
            let x = &fine.nodes[m];
            let wx = density.density(x);
            CloudNode {
                point: *x,
                weight: fine.weights[m],
                value: wx * q.q_at_with(x, src.h(x), wx),
            }
        })
        .collect();
    GreenField::from_source(src).with_cloud(nodes)
}

/// `∫_{|z|≤R} 𝒢^κ(x−z) f(|z|) dz` for radial `f`, by 1D adaptive quadrature
/// of shell averages `e^{−κ r_>} sinh(κ r_<)/(4π κ r_< r_>)`.
pub fn radial_yukawa_potential(r: f64, radius: f64, kappa: f64, f: impl Fn(f64) -> f64) -> f64 {
    use crate::quadrature::integrate_adaptive;
    let shell = |s: f64| -> f64 {
        let (lo, hi) = if s < r { (s, r) } else { (r, s) };
        let avg = if lo == 0.0 {
            (-kappa * hi).exp() / (4.0 * std::f64::consts::PI * hi)
        } else {
            (-kappa * hi).exp() * (kappa * lo).sinh() / (4.0 * std::f64::consts::PI * kappa * lo * hi)
        };
        4.0 * std::f64::consts::PI * s * s * f(s) * avg
    };
    let split = r.min(radius);
    let (a, _) = integrate_adaptive(shell, 0.0, split, 1e-15, 1e-13, 2000);
    let (b, _) = integrate_adaptive(shell, split, radius, 1e-15, 1e-13, 2000);
    a + b
}
