//! Full microscopic problem at small `N`: the coupled rescaled densities,
//! monopole charges `Q_i` and the remainder `R_i`.
//!
//! With `ρ̂_i(x) = N⁻¹ρ_i(y_i + x/N)` on the reference grid of `V`, the
//! system reads
//!
//! ```text
//! (I + u𝒢^{λ/N²}v) ρ̂_i + (1/N) Σ_{j≠i} u 𝒢^λ(y_i − y_j + (x−x′)/N) v ρ̂_j = −u h(y_i + x/N)
//! ```
//!
//! Jacobians: `v_i(y_i + x/N) = N v(x)`, `ρ_i = N ρ̂_i`, `dz = N⁻³dx`, so
//! `Q_i = (v_i, ρ_i) = N⁻¹ Σ_k w_k v_k ρ̂_ik`.
//!
//! Pairing the `ρ̂_i` equation with the zero-energy `μ` (same grid, same
//! Nyström rule) gives the exact discrete identity
//! `(N/4πa) Q_i + Σ_{j≠i} G_ij Q_j = −h(y_i) + R_i`,
//! `R_i = −(N/4πa)(A_i + B_i + D_i)`, with
//!
//! ```text
//! A_i = (ρ_i, v_i(𝒢^λ − 𝒢⁰)u_i μ_i)
//! B_i = Σ_{j≠i} ∫ u_iμ_i(x) ∫ (𝒢^λ(x−z) − G_ij) v_jρ_j(z)
//! D_i = ∫ u_iμ_i(x) (h(x) − h(y_i))
//! ```

use crate::field::{CloudNode, GreenField};
use crate::greens::{nystrom_matrix, yukawa_radial, Desingularization, GreensError, InteractionMatrix};
use crate::linalg::{gmres, norm2, GmresOptions, LinalgError, Lu, Matrix};
use crate::pointcharge::{solve_point_charges_with, ChargeVector, PointChargeError, PointChargeOptions};
use crate::potentials::PotentialModel;
use crate::quadrature::Grid3D;
use crate::real::{add3, dist3, scale3, CompensatedSum, Point3, Real};
use crate::scattering::{solve_mu_nystrom, NystromOptions, ScatteringError, ScatteringSolution};
use crate::source::SourceSpec;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MicroscopicError {
    #[error("N·M = {unknowns} exceeds the configured cap {cap}")]
    CapExceeded { unknowns: usize, cap: usize },
    #[error(transparent)]
    Scattering(#[from] ScatteringError),
    #[error("block system could not be solved: {0}")]
    SingularBlockSystem(LinalgError),
    #[error(transparent)]
    Kernel(#[from] GreensError),
    #[error(transparent)]
    PointCharge(#[from] PointChargeError),
    #[error("lambda {found} does not match the source lambda {expected}")]
    LambdaMismatch { expected: f64, found: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct MicroscopicOptions<T> {
    pub rule: Desingularization,
    pub resonance_threshold: T,
    /// Relative residual target for the block GMRES.
    pub tol: T,
    /// Maximum `N·M`.
    pub cap: usize,
    /// Off-diagonal blocks are stored when they fit in this many bytes,
    /// otherwise applied matrix-free.
    pub storage_budget: usize,
}

impl<T: Real> Default for MicroscopicOptions<T> {
    fn default() -> Self {
        Self {
            rule: Desingularization::SingularitySubtraction,
            resonance_threshold: T::lit(crate::scattering::RESONANCE_THRESHOLD),
            tol: T::lit(1e-12),
            cap: 16_000,
            storage_budget: 512 << 20,
        }
    }
}

/// A-priori norms of the density solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityDiagnostics<T> {
    /// `‖μ‖₂` on the reference grid.
    pub mu_norm: T,
    /// `Σ_i ‖ρ̂_i‖² / (N‖f‖²)`.
    pub rho_ratio: T,
}

#[derive(Debug, Clone)]
pub struct DensitySolution<T> {
    pub points: Vec<Point3<T>>,
    pub lambda: T,
    /// Zero-energy solution on the reference grid; `scattering.a` is the
    /// discrete scattering length consistent with the block system.
    pub scattering: ScatteringSolution<T>,
    /// Block-major `ρ̂_i(x_k)`, length `N·M`.
    pub rho_hat: Vec<T>,
    pub charges: Vec<T>,
    /// Per-block `‖r_i‖/‖b_i‖`.
    pub block_residuals: Vec<T>,
    pub iterations: usize,
    pub diagnostics: DensityDiagnostics<T>,
    rule: Desingularization,
}

impl<T: Real> DensitySolution<T> {
    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn m(&self) -> usize {
        self.scattering.grid.len()
    }

    pub fn a(&self) -> T {
        self.scattering.a
    }

    pub fn grid(&self) -> &Grid3D<T> {
        &self.scattering.grid
    }

    pub fn block(&self, i: usize) -> &[T] {
        let m = self.m();
        &self.rho_hat[i * m..(i + 1) * m]
    }

    /// Physical node `y_i + x_k/N`.
    fn node(&self, i: usize, k: usize) -> Point3<T> {
        let n = T::from_usize_lossy(self.n());
        add3(&self.points[i], &scale3(&self.grid().nodes[k], T::one() / n))
    }

    pub fn max_block_residual(&self) -> T {
        self.block_residuals.iter().fold(T::zero(), |a, &b| a.max(b))
    }
}

/// All `N·M` physical nodes, block-major.
fn physical_nodes<T: Real>(points: &[Point3<T>], grid: &Grid3D<T>) -> Vec<Point3<T>> {
    let inv = T::one() / T::from_usize_lossy(points.len());
    points
        .iter()
        .flat_map(|y| grid.nodes.iter().map(move |x| add3(y, &scale3(x, inv))))
        .collect()
}

/// `o_ik = Σ_{j≠i} Σ_m 𝒢^λ(z_ik − z_jm) g_jm`, optionally with the
/// monopole-subtracted companion `Σ_{j≠i} Σ_m (𝒢^λ(z_ik − z_jm) − G_ij) g_jm`.
struct Coupling<T> {
    n: usize,
    m: usize,
    kappa: T,
    nodes: Vec<Point3<T>>,
    stored: Option<Matrix<T>>,
}

impl<T: Real> Coupling<T> {
    fn new(points: &[Point3<T>], grid: &Grid3D<T>, kappa: T, budget: usize) -> Self {
        let n = points.len();
        let m = grid.len();
        let nodes = physical_nodes(points, grid);
        let nm = n * m;
        let bytes = nm * nm * std::mem::size_of::<T>();
        let stored = (n > 1 && bytes <= budget).then(|| {
            let rows: Vec<Vec<T>> = (0..nm)
                .into_par_iter()
                .map(|r| {
                    let i = r / m;
                    (0..nm)
                        .map(|c| {
                            if c / m == i {
                                T::zero()
                            } else {
                                yukawa_radial(dist3(&nodes[r], &nodes[c]), kappa)
                            }
                        })
                        .collect()
                })
                .collect();
            Matrix::from_row_major(nm, nm, rows.into_iter().flatten().collect())
        });
        Self {
            n,
            m,
            kappa,
            nodes,
            stored,
        }
    }

    fn apply(&self, g: &[T]) -> Vec<T> {
        if self.n < 2 {
            return vec![T::zero(); g.len()];
        }
        if let Some(k) = &self.stored {
            return k.matvec(g);
        }
        let (n, m) = (self.n, self.m);
        (0..n * m)
            .into_par_iter()
            .map(|r| {
                let i = r / m;
                let z = self.nodes[r];
                let mut acc = T::zero();
                for j in (0..n).filter(|&j| j != i) {
                    for c in j * m..(j + 1) * m {
                        acc += yukawa_radial(dist3(&z, &self.nodes[c]), self.kappa) * g[c];
                    }
                }
                acc
            })
            .collect()
    }

    /// Monopole-subtracted sums, accumulated termwise to avoid cancellation.
    fn apply_subtracted(&self, g: &[T], points: &[Point3<T>]) -> Vec<T> {
        let (n, m) = (self.n, self.m);
        (0..n * m)
            .into_par_iter()
            .map(|r| {
                let i = r / m;
                let z = self.nodes[r];
                let mut acc = CompensatedSum::new();
                for j in (0..n).filter(|&j| j != i) {
                    let gij = yukawa_radial(dist3(&points[i], &points[j]), self.kappa);
                    for c in j * m..(j + 1) * m {
                        let kv = match &self.stored {
                            Some(k) => k[(r, c)],
                            None => yukawa_radial(dist3(&z, &self.nodes[c]), self.kappa),
                        };
                        acc.add((kv - gij) * g[c]);
                    }
                }
                acc.value()
            })
            .collect()
    }
}

/// `I + diag(u) T diag(v)`.
fn density_block<T: Real>(t: &Matrix<T>, u: &[T], v: &[T]) -> Matrix<T> {
    let m = u.len();
    Matrix::from_fn(m, m, |i, j| {
        let d = if i == j { T::one() } else { T::zero() };
        d + u[i] * t[(i, j)] * v[j]
    })
}

fn check_lambda<T: Real>(lambda: T, src: &SourceSpec<T>) -> Result<(), MicroscopicError> {
    if lambda != src.lambda {
        return Err(MicroscopicError::LambdaMismatch {
            expected: src.lambda.to_f64_lossy(),
            found: lambda.to_f64_lossy(),
        });
    }
    Ok(())
}

/// Solves the coupled rescaled density system on `grid` (the reference grid
/// over `supp V`).
pub fn solve_densities<T: Real>(
    points: &[Point3<T>],
    pot: &PotentialModel<T>,
    grid: &Grid3D<T>,
    lambda: T,
    src: &SourceSpec<T>,
    opts: &MicroscopicOptions<T>,
) -> Result<DensitySolution<T>, MicroscopicError> {
    check_lambda(lambda, src)?;
    let n = points.len();
    let m = grid.len();
    if n * m > opts.cap {
        return Err(MicroscopicError::CapExceeded {
            unknowns: n * m,
            cap: opts.cap,
        });
    }
    let scattering = solve_mu_nystrom(
        pot,
        grid,
        &NystromOptions {
            n_radial: grid.scheme.n_radial,
            n_angular: grid.scheme.angular.points(),
            rule: opts.rule,
            resonance_threshold: opts.resonance_threshold,
        },
    )?;
    let mu_norm = grid
        .weights
        .iter()
        .zip(&scattering.mu)
        .map(|(&w, &x)| w * x * x)
        .sum::<T>()
        .sqrt();
    let (u, v) = (&scattering.u, &scattering.v);
    if pot.is_zero() {
        return Ok(DensitySolution {
            points: points.to_vec(),
            lambda,
            rho_hat: vec![T::zero(); n * m],
            charges: vec![T::zero(); n],
            block_residuals: vec![T::zero(); n],
            iterations: 0,
            diagnostics: DensityDiagnostics {
                mu_norm,
                rho_ratio: T::zero(),
            },
            scattering,
            rule: opts.rule,
        });
    }
    let nf = T::from_usize_lossy(n);
    let kappa = lambda.sqrt();
    let t = nystrom_matrix(grid, kappa / nf, opts.rule);
    let block = density_block(&t, u, v);
    let lu = Lu::factor(block.clone()).map_err(MicroscopicError::SingularBlockSystem)?;
    let coupling = Coupling::new(points, grid, kappa, opts.storage_budget);
    let wv: Vec<T> = grid.weights.iter().zip(v).map(|(&w, &v)| w * v).collect();

    let b: Vec<T> = coupling
        .nodes
        .iter()
        .enumerate()
        .map(|(r, z)| -u[r % m] * src.h(z))
        .collect();

    let apply = |x: &[T]| -> Vec<T> {
        let g: Vec<T> = x.iter().enumerate().map(|(r, &xr)| wv[r % m] * xr).collect();
        let o = coupling.apply(&g);
        let mut y = Vec::with_capacity(n * m);
        for i in 0..n {
            y.extend(block.matvec(&x[i * m..(i + 1) * m]));
        }
        for (r, yr) in y.iter_mut().enumerate() {
            *yr += u[r % m] * o[r] / nf;
        }
        y
    };
    let precondition = |r: &[T]| -> Vec<T> { r.chunks(m).flat_map(|c| lu.solve(c)).collect() };
    let sol = if n == 1 {
        crate::linalg::IterativeSolution {
            x: lu.solve(&b),
            iterations: 0,
            relative_residual: T::zero(),
        }
    } else {
        gmres(
            apply,
            precondition,
            &b,
            None,
            GmresOptions {
                tol: opts.tol,
                ..GmresOptions::default()
            },
        )
        .map_err(MicroscopicError::SingularBlockSystem)?
    };
    let rho_hat = sol.x;
    let ax = apply(&rho_hat);
    let block_residuals = (0..n)
        .map(|i| {
            let s = i * m..(i + 1) * m;
            let r: Vec<T> = ax[s.clone()].iter().zip(&b[s.clone()]).map(|(&p, &q)| p - q).collect();
            let bn = norm2(&b[s]);
            if bn == T::zero() {
                norm2(&r)
            } else {
                norm2(&r) / bn
            }
        })
        .collect();
    let charges = (0..n)
        .map(|i| {
            let blk = &rho_hat[i * m..(i + 1) * m];
            crate::real::compensated_sum(blk.iter().zip(&wv).map(|(&r, &w)| w * r)) / nf
        })
        .collect();
    let rho_sq: T = rho_hat
        .iter()
        .enumerate()
        .map(|(r, &x)| grid.weights[r % m] * x * x)
        .sum();
    Ok(DensitySolution {
        points: points.to_vec(),
        lambda,
        rho_hat,
        charges,
        block_residuals,
        iterations: sol.iterations,
        diagnostics: DensityDiagnostics {
            mu_norm,
            rho_ratio: rho_sq / (nf * src.f_norm2()),
        },
        scattering,
        rule: opts.rule,
    })
}

/// `ψ̃_N = h + Σ_i Q_i 𝒢^λ(· − y_i)`.
pub fn monopole_field<T: Real>(sol: &DensitySolution<T>, src: &SourceSpec<T>) -> GreenField<T> {
    GreenField::from_source(src).with_atoms(&sol.points, &sol.charges)
}

/// `ψ_N = h + Σ_i 𝒢^λ v_i ρ_i` with one cloud node per physical grid node.
///
/// Node `y_i + x_k/N` carries weight `w_k/N³` and value `v_iρ_i = N² v_k ρ̂_ik`,
/// so each obstacle's cloud sums to `Q_i`.
pub fn microscopic_field<T: Real>(sol: &DensitySolution<T>, src: &SourceSpec<T>) -> GreenField<T> {
    let n = sol.n();
    let m = sol.m();
    let nf = T::from_usize_lossy(n);
    let n3 = nf * nf * nf;
    let grid = sol.grid();
    let nodes = (0..n).flat_map(|i| {
        (0..m).map(move |k| CloudNode {
            point: sol.node(i, k),
            weight: grid.weights[k] / n3,
            value: nf * nf * sol.scattering.v[k] * sol.rho_hat[i * m + k],
        })
    });
    GreenField::from_source(src).with_cloud(nodes.collect::<Vec<_>>())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemainderTerms<T> {
    pub a: Vec<T>,
    pub b: Vec<T>,
    pub d: Vec<T>,
    /// `R_i = −(N/4πa)(A_i + B_i + D_i)`.
    pub r: Vec<T>,
    /// `A_i` with `e^{−λ|x−z|}` in place of `e^{−√λ|x−z|}`.
    pub a_verbatim: Vec<T>,
    /// `R_i` built from `a_verbatim`.
    pub r_verbatim: Vec<T>,
}

impl<T: Real> RemainderTerms<T> {
    pub fn r_norm(&self) -> T {
        norm2(&self.r)
    }
}

/// `A_i`, `B_i`, `D_i` from a solved density system.
pub fn remainder_terms<T: Real>(
    sol: &DensitySolution<T>,
    src: &SourceSpec<T>,
) -> Result<RemainderTerms<T>, MicroscopicError> {
    check_lambda(sol.lambda, src)?;
    let n = sol.n();
    let m = sol.m();
    let nf = T::from_usize_lossy(n);
    let grid = sol.grid();
    let sc = &sol.scattering;
    if sc.a == T::zero() {
        let z = vec![T::zero(); n];
        return Ok(RemainderTerms {
            a: z.clone(),
            b: z.clone(),
            d: z.clone(),
            r: z.clone(),
            a_verbatim: z.clone(),
            r_verbatim: z,
        });
    }
    let umu: Vec<T> = sc.u.iter().zip(&sc.mu).map(|(&u, &mu)| u * mu).collect();
    let wumu: Vec<T> = grid.weights.iter().zip(&umu).map(|(&w, &x)| w * x).collect();
    let wv: Vec<T> = grid.weights.iter().zip(&sc.v).map(|(&w, &v)| w * v).collect();
    let kappa = sol.lambda.sqrt();
    let t0 = nystrom_matrix(grid, T::zero(), sol.rule);
    let diff = |k: T| -> Vec<T> {
        let tk = nystrom_matrix(grid, k, sol.rule);
        let a = tk.matvec(&umu);
        let b = t0.matvec(&umu);
        a.into_iter().zip(b).map(|(x, y)| x - y).collect()
    };
    let da = diff(kappa / nf);
    let da_verbatim = diff(sol.lambda / nf);
    let pair = |blk: &[T], f: &[T]| -> T {
        crate::real::compensated_sum((0..m).map(|k| wv[k] * blk[k] * f[k]))
    };
    let a: Vec<T> = (0..n).map(|i| pair(sol.block(i), &da) / nf).collect();
    let a_verbatim: Vec<T> = (0..n).map(|i| pair(sol.block(i), &da_verbatim) / nf).collect();

    let coupling = Coupling::new(&sol.points, grid, kappa, 0);
    let g: Vec<T> = sol.rho_hat.iter().enumerate().map(|(r, &x)| wv[r % m] * x).collect();
    let sub = if n > 1 {
        coupling.apply_subtracted(&g, &sol.points)
    } else {
        vec![T::zero(); n * m]
    };
    let b: Vec<T> = (0..n)
        .map(|i| crate::real::compensated_sum((0..m).map(|k| wumu[k] * sub[i * m + k])) / (nf * nf))
        .collect();
    let d: Vec<T> = (0..n)
        .map(|i| {
            let hy = src.h(&sol.points[i]);
            crate::real::compensated_sum((0..m).map(|k| wumu[k] * (src.h(&sol.node(i, k)) - hy))) / nf
        })
        .collect();
    let scale = -nf / (T::four_pi() * sc.a);
    let r = (0..n).map(|i| scale * (a[i] + b[i] + d[i])).collect();
    let r_verbatim = (0..n).map(|i| scale * (a_verbatim[i] + b[i] + d[i])).collect();
    Ok(RemainderTerms {
        a,
        b,
        d,
        r,
        a_verbatim,
        r_verbatim,
    })
}

/// Point charges and the charge-comparison identity on one solved instance.
#[derive(Debug, Clone)]
pub struct ChargeComparison<T> {
    /// `q` solved with the discrete scattering length of the density system.
    pub q: ChargeVector<T>,
    pub remainder: RemainderTerms<T>,
    /// `‖Q − q‖₂`.
    pub q_difference: T,
    /// `‖Γ^λ(Q − q) − (4πa/N)R‖₂ / ‖Q‖₂`.
    pub identity_residual: T,
}

pub fn charge_comparison<T: Real>(
    sol: &DensitySolution<T>,
    src: &SourceSpec<T>,
) -> Result<ChargeComparison<T>, MicroscopicError> {
    let n = sol.n();
    let nf = T::from_usize_lossy(n);
    let a = sol.a();
    let g = InteractionMatrix::assemble(&sol.points, sol.lambda)?;
    let q = solve_point_charges_with(&g, &sol.points, a, src, &PointChargeOptions::default())?;
    let remainder = remainder_terms(sol, src)?;
    let diff: Vec<T> = sol.charges.iter().zip(&q.values).map(|(&x, &y)| x - y).collect();
    let s = T::four_pi() * a / nf;
    let gd = g.matvec(&diff);
    let res: Vec<T> = (0..n)
        .map(|i| diff[i] + s * gd[i] - s * remainder.r[i])
        .collect();
    let qn = norm2(&sol.charges);
    Ok(ChargeComparison {
        q,
        q_difference: norm2(&diff),
        identity_residual: if qn == T::zero() { norm2(&res) } else { norm2(&res) / qn },
        remainder,
    })
}

/// Independent oracle: assembles the unscaled `N·M × N·M` system on the
/// physical nodes (weights `w/N³`, `u_N = N u`, `v_N = N v`, full `𝒢^λ`) and
/// solves it densely. Returns `Q_i = Σ w̃ v_N ρ`.
pub fn monolithic_charges<T: Real>(
    points: &[Point3<T>],
    pot: &PotentialModel<T>,
    grid: &Grid3D<T>,
    lambda: T,
    src: &SourceSpec<T>,
    rule: Desingularization,
) -> Result<Vec<T>, MicroscopicError> {
    let n = points.len();
    let nf = T::from_usize_lossy(n);
    let small = Grid3D::with_scheme(grid.radius / nf, grid.scheme).map_err(ScatteringError::from)?;
    let nodes = physical_nodes(points, grid);
    let m = grid.len();
    let kappa = lambda.sqrt();
    let w: Vec<T> = small.weights.clone();
    let u_n: Vec<T> = grid.nodes.iter().map(|x| nf * pot.u(x)).collect();
    let v_n: Vec<T> = grid.nodes.iter().map(|x| nf * pot.v(x)).collect();
    let t = nystrom_matrix(&small, kappa, rule);
    let nm = n * m;
    let mat = Matrix::from_fn(nm, nm, |r, c| {
        let (i, k) = (r / m, r % m);
        let (j, l) = (c / m, c % m);
        let kern = if i == j {
            t[(k, l)]
        } else {
            w[l] * yukawa_radial(dist3(&nodes[r], &nodes[c]), kappa)
        };
        let d = if r == c { T::one() } else { T::zero() };
        d + u_n[k] * kern * v_n[l]
    });
    let b: Vec<T> = (0..nm).map(|r| -u_n[r % m] * src.h(&nodes[r])).collect();
    let lu = Lu::factor(mat).map_err(MicroscopicError::SingularBlockSystem)?;
    let rho = lu.solve(&b);
    Ok((0..n)
        .map(|i| crate::real::compensated_sum((0..m).map(|k| w[k] * v_n[k] * rho[i * m + k])))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::l2_distance;
    use crate::potentials::PotentialSpec;
    use crate::randomfield::{sample_configuration, DensitySpec};

    fn src() -> SourceSpec<f64> {
        SourceSpec::new(1.0, [0.1, 0.0, -0.1], 0.6, 25.0).unwrap()
    }

    fn pot(v0: f64) -> PotentialModel<f64> {
        PotentialModel::new(PotentialSpec::square_well(v0, 1.0)).unwrap()
    }

    fn grid() -> Grid3D<f64> {
        Grid3D::new(1.0, 8, 14).unwrap()
    }

    fn config(n: usize, seed: u64) -> Vec<[f64; 3]> {
        sample_configuration(&DensitySpec::uniform_ball(1.0).unwrap(), n, seed)
            .unwrap()
            .points
    }

    #[test]
    fn zero_potential_gives_zero_everything() {
        let pts = config(3, 1);
        let s = src();
        let sol = solve_densities(&pts, &pot(0.0), &grid(), 25.0, &s, &Default::default()).unwrap();
        assert!(sol.rho_hat.iter().all(|&x| x == 0.0));
        assert!(sol.charges.iter().all(|&x| x == 0.0));
        let rem = remainder_terms(&sol, &s).unwrap();
        assert!(rem.a.iter().chain(&rem.b).chain(&rem.d).all(|&x| x == 0.0));
        let x = [0.4, 0.1, 0.0];
        assert_eq!(microscopic_field(&sol, &s).evaluate(&x), s.h(&x));
        assert_eq!(monopole_field(&sol, &s).evaluate(&x), s.h(&x));
    }

    #[test]
    fn single_obstacle_has_no_b_term() {
        let s = src();
        let sol = solve_densities(&[[0.2, 0.1, 0.0]], &pot(-4.0), &grid(), 25.0, &s, &Default::default()).unwrap();
        let rem = remainder_terms(&sol, &s).unwrap();
        assert_eq!(rem.b, vec![0.0]);
    }

    #[test]
    fn weak_potential_matches_first_born() {
        let s = src();
        let y = [0.2, 0.1, 0.0];
        let g = grid();
        let err = |eps: f64| {
            let p = pot(eps);
            let sol = solve_densities(&[y], &p, &g, 25.0, &s, &Default::default()).unwrap();
            let born = -g.integrate(|x| p.potential(x) * s.h(&add3(&y, x)));
            (sol.charges[0] - born).abs()
        };
        let (e1, e2) = (err(1e-2), err(5e-3));
        assert!((e1 / e2 - 4.0).abs() < 0.05, "{e1} {e2}");
    }

    #[test]
    fn block_solve_matches_monolithic_assembly() {
        let s = src();
        for (n, seed) in [(2, 3), (2, 4), (4, 5)] {
            let pts = config(n, seed);
            let p = pot(-4.0);
            let sol = solve_densities(&pts, &p, &grid(), 25.0, &s, &Default::default()).unwrap();
            let mono = monolithic_charges(&pts, &p, &grid(), 25.0, &s, Desingularization::default()).unwrap();
            for i in 0..n {
                assert!((sol.charges[i] - mono[i]).abs() < 1e-9 * mono[i].abs(), "{i}: {} {}", sol.charges[i], mono[i]);
            }
        }
    }

    #[test]
    fn stored_and_matrix_free_agree() {
        let s = src();
        let pts = config(5, 8);
        let p = pot(4.0);
        let a = solve_densities(&pts, &p, &grid(), 25.0, &s, &Default::default()).unwrap();
        let b = solve_densities(
            &pts,
            &p,
            &grid(),
            25.0,
            &s,
            &MicroscopicOptions {
                storage_budget: 0,
                ..Default::default()
            },
        )
        .unwrap();
        for i in 0..5 {
            assert!((a.charges[i] - b.charges[i]).abs() < 1e-12 * a.charges[i].abs());
        }
    }

    #[test]
    fn charge_identity_holds_to_solver_tolerance() {
        let s = src();
        for (n, v0) in [(4, 4.0), (6, -1.0)] {
            let sol = solve_densities(&config(n, 2), &pot(v0), &grid(), 25.0, &s, &Default::default()).unwrap();
            let cmp = charge_comparison(&sol, &s).unwrap();
            assert!(cmp.identity_residual < 1e-10, "{}", cmp.identity_residual);
            assert!(sol.max_block_residual() < 1e-9);
        }
    }

    #[test]
    fn cloud_charge_equals_monopole() {
        let s = src();
        let sol = solve_densities(&config(3, 6), &pot(4.0), &grid(), 25.0, &s, &Default::default()).unwrap();
        let cloud = microscopic_field(&sol, &s).cloud;
        let m = sol.m();
        for i in 0..3 {
            let total: f64 = cloud[i * m..(i + 1) * m].iter().map(|c| c.weight * c.value).sum();
            assert!((total - sol.charges[i]).abs() < 1e-10 * sol.charges[i].abs());
        }
    }

    #[test]
    fn monopole_approximation_tightens_with_support() {
        // Same scattering length at two support radii; the smaller support
        // must give a smaller dipole-and-higher remainder.
        let s = src();
        // Clouds well inside the Yukawa range 1/√λ.
        let pts = [[0.3, 0.0, 0.0], [-0.3, 0.1, 0.0]];
        let target = 0.05;
        let mut gaps = Vec::new();
        for r in [0.2, 0.1] {
            let tmpl = PotentialSpec::square_well(1.0, r);
            let spec = crate::scattering::tune_amplitude(&tmpl, target, 1e-3, 40.0 / (r * r), 1e-12).unwrap();
            let p = PotentialModel::new(spec).unwrap();
            let g = Grid3D::new(r, 8, 14).unwrap();
            let sol = solve_densities(&pts, &p, &g, 25.0, &s, &Default::default()).unwrap();
            let psi = microscopic_field(&sol, &s);
            let tilde = monopole_field(&sol, &s);
            let gap = l2_distance(&psi, &tilde).unwrap().value;
            let scale = l2_distance(&psi, &GreenField::from_source(&s)).unwrap().value;
            assert!(gap <= scale);
            gaps.push(gap);
        }
        assert!(gaps[1] < gaps[0], "{gaps:?}");
    }

    #[test]
    fn cap_is_enforced() {
        let e = solve_densities(
            &config(4, 1),
            &pot(4.0),
            &grid(),
            25.0,
            &src(),
            &MicroscopicOptions {
                cap: 10,
                ..Default::default()
            },
        );
        assert!(matches!(e, Err(MicroscopicError::CapExceeded { .. })));
    }
}
