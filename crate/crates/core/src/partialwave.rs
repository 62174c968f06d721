//! Partial-wave solver for the effective charge equation
//!
//! ```text
//! (1/4πa) q(x) + ∫ 𝒢^λ(x − z) W(z) q(z) dz = −h(x)
//! ```
//!
//! when `W` is radial. Expanding `h` and `q` in Legendre polynomials about a
//! fixed axis, `q(x) = Σ_ℓ q_ℓ(|x|) P_ℓ(â·x̂)`, decouples the equation into
//! one radial equation per order with kernel `κ i_ℓ(κr_<) k_ℓ(κr_>)`. Each
//! is solved by Nyström on composite Gauss–Legendre panels with the kernel
//! kink at `r = s` removed by singularity subtraction. The same expansion of
//! `K2` gives `‖𝒢(Wq)‖₂` and its pairings with point fields without any
//! three-dimensional quadrature.

use crate::effective::EffectiveError;
use crate::field::{k2_quadratic, FieldDistance};
use crate::linalg::{LinalgError, Lu, Matrix};
use crate::quadrature::gauss_legendre;
use crate::randomfield::{DensityFamily, DensitySpec};
use crate::real::{norm3, Point3, Real};
use crate::source::SourceSpec;
use crate::special::{k2_partial_waves, legendre, scaled_i, yukawa_partial_waves};
use rayon::prelude::*;
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, Copy)]
pub struct PartialWaveOptions<T> {
    /// Equal-width panels on `[0, R]` (table radii are added as breakpoints).
    pub panels: usize,
    /// Gauss–Legendre order per panel.
    pub order: usize,
    /// Channels whose source is below `tail_tol` relative to `ℓ = 0` are
    /// dropped.
    pub tail_tol: T,
    pub max_order: usize,
}

impl<T: Real> Default for PartialWaveOptions<T> {
    fn default() -> Self {
        Self {
            panels: 16,
            order: 16,
            tail_tol: T::lit(1e-15),
            max_order: 200,
        }
    }
}

/// Composite Gauss–Legendre mesh on `[0, R]` with `s²` folded into weights.
#[derive(Debug, Clone)]
pub struct RadialMesh<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
    /// `(lo, hi)` of each panel; panel `p` owns nodes `p·order..(p+1)·order`.
    pub panels: Vec<(T, T)>,
    pub order: usize,
    bary: Vec<T>,
}

impl<T: Real> RadialMesh<T> {
    pub fn new(radius: T, breaks: &[T], panels: usize, order: usize) -> Self {
        let mut cuts: Vec<T> = (0..=panels.max(1))
            .map(|i| radius * T::from_usize_lossy(i) / T::from_usize_lossy(panels.max(1)))
            .collect();
        for &b in breaks {
            if b > T::zero() && b < radius {
                cuts.push(b);
            }
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let tiny = radius * T::lit(1e-9);
        cuts.dedup_by(|a, b| (*a - *b).abs() < tiny);
        let order = order.max(2);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut pans = Vec::new();
        for w in cuts.windows(2) {
            pans.push((w[0], w[1]));
            for (x, wx) in gauss_legendre(order, w[0], w[1]) {
                nodes.push(x);
                weights.push(wx * x * x);
            }
        }
        // Barycentric weights of the reference panel carry over to every
        // panel up to a common factor, which cancels.
        let reference: Vec<T> = gauss_legendre::<T>(order, -T::one(), T::one()).iter().map(|p| p.0).collect();
        let bary = (0..order)
            .map(|j| {
                let mut p = T::one();
                for k in 0..order {
                    if k != j {
                        p *= reference[j] - reference[k];
                    }
                }
                T::one() / p
            })
            .collect();
        Self {
            nodes,
            weights,
            panels: pans,
            order,
            bary,
        }
    }

    pub fn radius(&self) -> T {
        self.panels.last().map(|p| p.1).unwrap_or_else(T::zero)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Panel-local barycentric interpolation of nodal `values` at `r ≤ R`.
    pub fn interpolate(&self, values: &[T], r: T) -> Option<T> {
        if r < T::zero() || r > self.radius() {
            return None;
        }
        let p = self
            .panels
            .iter()
            .position(|&(_, hi)| r <= hi)
            .unwrap_or(self.panels.len() - 1);
        let base = p * self.order;
        let mut num = T::zero();
        let mut den = T::zero();
        for j in 0..self.order {
            let d = r - self.nodes[base + j];
            if d == T::zero() {
                return Some(values[base + j]);
            }
            let c = self.bary[j] / d;
            num += c * values[base + j];
            den += c;
        }
        Some(num / den)
    }

    /// `∫_0^R s² k_ℓ(r, s) ds` for `ℓ = 0..=lmax`, with the integration split
    /// at `s = r` where the kernel has its kink.
    fn kernel_moments(&self, lmax: usize, r: T, kernel: &impl Fn(usize, T, T) -> Vec<T>, kappa: T) -> Vec<T> {
        let radius = self.radius();
        let mut out = vec![T::zero(); lmax + 1];
        let mut piece = |lo: T, hi: T| {
            if hi <= lo {
                return;
            }
            let pieces = ((hi - lo) * kappa).to_f64_lossy().ceil().max(1.0) as usize + 1;
            let h = (hi - lo) / T::from_usize_lossy(pieces);
            for i in 0..pieces {
                let a = lo + h * T::from_usize_lossy(i);
                for (s, w) in gauss_legendre(20, a, a + h) {
                    let k = kernel(lmax, r, s);
                    for l in 0..=lmax {
                        out[l] += w * s * s * k[l];
                    }
                }
            }
        };
        let split = r.min(radius).max(T::zero());
        piece(T::zero(), split);
        piece(split, radius);
        out
    }
}

/// Legendre channels `h_ℓ(r)` of a right-hand side about `axis`.
#[derive(Clone)]
pub struct ChannelSource<T> {
    pub axis: Point3<T>,
    pub lmax: usize,
    eval: Arc<dyn Fn(T, usize) -> Vec<T> + Send + Sync>,
}

impl<T> fmt::Debug for ChannelSource<T>
where
    T: fmt::Debug,
{
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChannelSource")
            .field("axis", &self.axis)
            .field("lmax", &self.lmax)
            .finish()
    }
}

impl<T: Real> ChannelSource<T> {
    /// Gaussian bump `g₀ e^{−|x−c|²/s²}`: with `t = 2r|c|/s²`,
    /// `h_ℓ(r) = g₀ (2ℓ+1) e^{−(r−|c|)²/s²} ĩ_ℓ(t)`.
    pub fn gaussian(src: &SourceSpec<T>, radius: T, tail_tol: T, max_order: usize) -> Self {
        let c = norm3(&src.center);
        let axis = if c > T::zero() {
            src.center.map(|x| x / c)
        } else {
            [T::zero(), T::zero(), T::one()]
        };
        let (g0, s2) = (src.amplitude, src.width * src.width);
        let eval = move |r: T, lmax: usize| -> Vec<T> {
            let t = T::lit(2.0) * r * c / s2;
            let env = g0 * (-(r - c) * (r - c) / s2).exp();
            scaled_i(lmax, t)
                .into_iter()
                .enumerate()
                .map(|(l, i)| env * T::lit((2 * l + 1) as f64) * i)
                .collect()
        };
        // Channel magnitudes decrease monotonically in ℓ at every r, so the
        // tail test only needs a scan over radii.
        let lmax = if c == T::zero() {
            0
        } else {
            let probe: Vec<T> = (0..=64).map(|i| radius * T::from_usize_lossy(i) / T::lit(64.0)).collect();
            let scale = probe.iter().map(|&r| eval(r, 0)[0].abs()).fold(T::zero(), T::max);
            let rows: Vec<Vec<T>> = probe.iter().map(|&r| eval(r, max_order)).collect();
            (1..=max_order)
                .find(|&l| rows.iter().all(|row| row[l].abs() <= tail_tol * scale))
                .map(|l| l - 1)
                .unwrap_or(max_order)
        };
        Self {
            axis,
            lmax,
            eval: Arc::new(eval),
        }
    }

    /// Purely radial right-hand side (a single `ℓ = 0` channel).
    pub fn radial(h: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        Self {
            axis: [T::zero(), T::zero(), T::one()],
            lmax: 0,
            eval: Arc::new(move |r, _| vec![h(r)]),
        }
    }

    pub fn channels(&self, r: T) -> Vec<T> {
        (self.eval)(r, self.lmax)
    }

    /// Reassembled `h(x)`.
    pub fn value(&self, x: &Point3<T>) -> T {
        let r = norm3(x);
        let ch = self.channels(r);
        let p = legendre(self.lmax, cos_to(&self.axis, x, r));
        ch.iter().zip(&p).map(|(&c, &p)| c * p).sum()
    }
}

fn cos_to<T: Real>(axis: &Point3<T>, x: &Point3<T>, r: T) -> T {
    if r == T::zero() {
        return T::one();
    }
    let c = (axis[0] * x[0] + axis[1] * x[1] + axis[2] * x[2]) / r;
    c.max(-T::one()).min(T::one())
}

/// Effective charge in partial waves.
#[derive(Debug, Clone)]
pub struct PartialWaveCharge<T> {
    pub a: T,
    pub lambda: T,
    pub source: ChannelSource<T>,
    pub mesh: RadialMesh<T>,
    /// `W` at the mesh nodes.
    pub w_values: Vec<T>,
    /// `q_ℓ` at the mesh nodes, one vector per order.
    pub channels: Vec<Vec<T>>,
    /// Largest relative residual over channels.
    pub residual: T,
}

fn density_breaks<T: Real>(density: &DensitySpec<T>) -> Vec<T> {
    match &density.family {
        DensityFamily::Tabulated { r, .. } => r.clone(),
        _ => Vec::new(),
    }
}

/// Solves the charge equation channel by channel.
pub fn solve_partial_waves<T: Real>(
    density: &DensitySpec<T>,
    a: T,
    lambda: T,
    source: ChannelSource<T>,
    opts: &PartialWaveOptions<T>,
) -> Result<PartialWaveCharge<T>, EffectiveError> {
    if !(lambda > T::zero() && lambda.is_finite()) {
        return Err(EffectiveError::BadLambda(lambda.to_f64_lossy()));
    }
    let radius = density.support_radius();
    let mesh = RadialMesh::new(radius, &density_breaks(density), opts.panels, opts.order);
    let kappa = lambda.sqrt();
    let n = mesh.len();
    let lmax = source.lmax;
    let w_values: Vec<T> = mesh.nodes.iter().map(|&r| density.radial(r)).collect();
    let h: Vec<Vec<T>> = mesh.nodes.iter().map(|&r| source.channels(r)).collect();
    let mut out = PartialWaveCharge {
        a,
        lambda,
        source,
        mesh,
        w_values,
        channels: vec![vec![T::zero(); n]; lmax + 1],
        residual: T::zero(),
    };
    if a == T::zero() {
        return Ok(out);
    }
    let mats = subtracted_kernels(&out.mesh, lmax, kappa, |l, r, s| yukawa_partial_waves(l, r, s, kappa));
    let c = T::four_pi() * a;
    let solved: Result<Vec<(Vec<T>, T)>, LinalgError> = (0..=lmax)
        .into_par_iter()
        .map(|l| {
            let k = &mats[l];
            let w = &out.w_values;
            let sys = Matrix::from_fn(n, n, |i, j| {
                let d = if i == j { T::one() } else { T::zero() };
                d + c * k[(i, j)] * w[j]
            });
            let lu = Lu::factor(sys.clone())?;
            let rhs: Vec<T> = (0..n).map(|i| -c * h[i][l]).collect();
            let q = lu.solve(&rhs);
            let aq = sys.matvec(&q);
            let num = aq.iter().zip(&rhs).map(|(x, y)| (*x - *y) * (*x - *y)).sum::<T>().sqrt();
            let den = rhs.iter().map(|x| *x * *x).sum::<T>().sqrt();
            Ok((q, if den == T::zero() { num } else { num / den }))
        })
        .collect();
    let solved = solved.map_err(EffectiveError::SingularSystem)?;
    for (l, (q, r)) in solved.into_iter().enumerate() {
        out.channels[l] = q;
        out.residual = out.residual.max(r);
    }
    Ok(out)
}

/// Per-order Nyström matrices `K[i][j] = w_j k_ℓ(r_i, s_j)` with the row
/// defect moved onto the diagonal so that each row integrates constants
/// exactly.
fn subtracted_kernels<T: Real>(
    mesh: &RadialMesh<T>,
    lmax: usize,
    kappa: T,
    kernel: impl Fn(usize, T, T) -> Vec<T> + Sync,
) -> Vec<Matrix<T>> {
    let n = mesh.len();
    let rows: Vec<Vec<Vec<T>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let exact = mesh.kernel_moments(lmax, mesh.nodes[i], &kernel, kappa);
            let mut row = vec![vec![T::zero(); n]; lmax + 1];
            let mut off = vec![T::zero(); lmax + 1];
            for j in 0..n {
                if j == i {
                    continue;
                }
                let k = kernel(lmax, mesh.nodes[i], mesh.nodes[j]);
                for l in 0..=lmax {
                    let v = mesh.weights[j] * k[l];
                    row[l][j] = v;
                    off[l] += v;
                }
            }
            for l in 0..=lmax {
                row[l][i] = exact[l] - off[l];
            }
            row
        })
        .collect();
    (0..=lmax)
        .map(|l| Matrix::from_fn(n, n, |i, j| rows[i][l][j]))
        .collect()
}

impl<T: Real> PartialWaveCharge<T> {
    pub fn lmax(&self) -> usize {
        self.source.lmax
    }

    fn kappa(&self) -> T {
        self.lambda.sqrt()
    }

    /// `φ_ℓ = W q_ℓ` at the mesh nodes.
    fn phi(&self, l: usize) -> Vec<T> {
        self.channels[l].iter().zip(&self.w_values).map(|(&q, &w)| q * w).collect()
    }

    /// `q_ℓ(r)` for every order.
    pub fn channel_values(&self, r: T) -> Vec<T> {
        let lmax = self.lmax();
        if self.a == T::zero() {
            return vec![T::zero(); lmax + 1];
        }
        if r <= self.mesh.radius() {
            return (0..=lmax)
                .map(|l| self.mesh.interpolate(&self.channels[l], r).unwrap())
                .collect();
        }
        // Outside the support W vanishes and the kernel is smooth.
        let c = T::four_pi() * self.a;
        let h = self.source.channels(r);
        let mut acc = h;
        for j in 0..self.mesh.len() {
            let k = yukawa_partial_waves(lmax, r, self.mesh.nodes[j], self.kappa());
            for l in 0..=lmax {
                acc[l] += self.mesh.weights[j] * k[l] * self.w_values[j] * self.channels[l][j];
            }
        }
        acc.into_iter().map(|v| -c * v).collect()
    }

    pub fn q_at(&self, x: &Point3<T>) -> T {
        let r = norm3(x);
        let p = legendre(self.lmax(), cos_to(&self.source.axis, x, r));
        self.channel_values(r).iter().zip(&p).map(|(&q, &p)| q * p).sum()
    }

    /// `ψ(x) = −q(x)/4πa`, or `h(x)` when `a = 0`.
    pub fn psi_at(&self, x: &Point3<T>) -> T {
        if self.a == T::zero() {
            return self.source.value(x);
        }
        -self.q_at(x) / (T::four_pi() * self.a)
    }

    /// `∫ p(x) W(x) q(x) dx` for another channel expansion `p` (about its own
    /// axis), by the Legendre addition theorem.
    pub fn pair_with(&self, other: &ChannelSource<T>) -> T {
        let lmax = self.lmax().min(other.lmax);
        let cos = cos_to(&self.source.axis, &other.axis, T::one());
        let p = legendre(lmax, cos);
        let mut total = T::zero();
        for j in 0..self.mesh.len() {
            let h = other.channels(self.mesh.nodes[j]);
            let mut s = T::zero();
            for l in 0..=lmax {
                s += T::four_pi() / T::lit((2 * l + 1) as f64) * p[l] * h[l] * self.channels[l][j];
            }
            total += self.mesh.weights[j] * self.w_values[j] * s;
        }
        total
    }

    /// `(g, ψ)` for a probe source `g` of the same `λ`: `(g, h) + ∫ h_g W q`
    /// when the right-hand side is the source `src`.
    pub fn probe_inner(&self, probe: &SourceSpec<T>, src: &SourceSpec<T>) -> T {
        let pc = ChannelSource::gaussian(probe, self.mesh.radius(), T::lit(1e-16), 200);
        probe.f_dot_h(src) + self.pair_with(&pc)
    }

    /// `K2` potential `χ = 𝒢²(Wq)` and `‖𝒢(Wq)‖₂²`.
    pub fn gram(&self) -> ChargeGram<T> {
        let lmax = self.lmax();
        let kappa = self.kappa();
        let mats = subtracted_kernels(&self.mesh, lmax, kappa, |l, r, s| k2_partial_waves(l, r, s, kappa));
        let chi: Vec<Vec<T>> = (0..=lmax).map(|l| mats[l].matvec(&self.phi(l))).collect();
        let mut norm2 = T::zero();
        for l in 0..=lmax {
            let phi = self.phi(l);
            let s: T = (0..self.mesh.len()).map(|j| self.mesh.weights[j] * phi[j] * chi[l][j]).sum();
            norm2 += T::four_pi() / T::lit((2 * l + 1) as f64) * s;
        }
        ChargeGram {
            charge: self.clone(),
            chi,
            norm2,
        }
    }
}

/// Cached `K2` data of `C = 𝒢^λ(Wq)` for repeated distances to point fields.
#[derive(Debug, Clone)]
pub struct ChargeGram<T> {
    charge: PartialWaveCharge<T>,
    chi: Vec<Vec<T>>,
    /// `‖C‖₂²`.
    pub norm2: T,
}

impl<T: Real> ChargeGram<T> {
    /// `χ(y) = ∫ K2(y − z) W(z) q(z) dz`.
    pub fn chi_at(&self, y: &Point3<T>) -> T {
        let q = &self.charge;
        let lmax = q.lmax();
        let r = norm3(y);
        let p = legendre(lmax, cos_to(&q.source.axis, y, r));
        let vals: Vec<T> = if r <= q.mesh.radius() {
            (0..=lmax).map(|l| q.mesh.interpolate(&self.chi[l], r).unwrap()).collect()
        } else {
            let mut acc = vec![T::zero(); lmax + 1];
            for j in 0..q.mesh.len() {
                let k = k2_partial_waves(lmax, r, q.mesh.nodes[j], q.kappa());
                for l in 0..=lmax {
                    acc[l] += q.mesh.weights[j] * k[l] * q.w_values[j] * q.channels[l][j];
                }
            }
            acc
        };
        vals.iter().zip(&p).map(|(&v, &p)| v * p).sum()
    }

    /// `‖Σ_i c_i 𝒢(· − y_i) − 𝒢(Wq)‖₂`, reported in the same parts as
    /// [`crate::field::l2_distance`]; `atom_cloud` holds the doubled cross
    /// term `−2 Σ_i c_i χ(y_i)`.
    pub fn distance_to_atoms(&self, points: &[Point3<T>], charges: &[T]) -> FieldDistance<T> {
        let kappa = self.charge.kappa();
        let atoms: Vec<(Point3<T>, T)> = points.iter().copied().zip(charges.iter().copied()).collect();
        let aa = k2_quadratic(&atoms, kappa);
        let cross: T = points
            .par_iter()
            .zip(charges.par_iter())
            .map(|(y, &c)| c * self.chi_at(y))
            .collect::<Vec<T>>()
            .into_iter()
            .sum();
        let ac = -T::lit(2.0) * cross;
        let total = aa + ac + self.norm2;
        FieldDistance {
            value: total.max(T::zero()).sqrt(),
            atom_atom: aa,
            atom_cloud: ac,
            cloud_cloud: self.norm2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effective::radial_yukawa_potential;
    use std::f64::consts::PI;

    fn ball() -> DensitySpec<f64> {
        DensitySpec::uniform_ball(1.0).unwrap()
    }

    fn src() -> SourceSpec<f64> {
        SourceSpec::new(1.0, [0.1, 0.0, -0.1], 0.6, 25.0).unwrap()
    }

    #[test]
    fn gaussian_channels_reassemble_the_source() {
        let s = SourceSpec::new(0.7, [0.5, -0.3, 0.4], 0.4, 25.0).unwrap();
        let ch = ChannelSource::gaussian(&s, 1.0, 1e-15, 200);
        assert!(ch.lmax > 5 && ch.lmax < 80, "{}", ch.lmax);
        for x in [[0.2f64, 0.1, -0.3], [0.5, -0.3, 0.4], [0.0, 0.0, 0.0], [-0.9, 0.1, 0.2]] {
            assert!((ch.value(&x) - s.h(&x)).abs() < 1e-13, "{x:?}");
        }
    }

    #[test]
    fn interpolation_is_spectral_on_panels() {
        let mesh = RadialMesh::new(1.0f64, &[], 4, 12);
        let vals: Vec<f64> = mesh.nodes.iter().map(|r| (3.0 * r).sin()).collect();
        for &r in &[0.0, 0.013, 0.5, 0.77, 1.0] {
            assert!((mesh.interpolate(&vals, r).unwrap() - (3.0 * r).sin()).abs() < 1e-12);
        }
        let vol: f64 = mesh.weights.iter().sum();
        assert!((vol - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn manufactured_radial_solution() {
        // ψ* = e^{−r²}, h* = ψ* + 4πa 𝒢(Wψ*) by independent shell quadrature.
        let (a, lambda) = (0.518f64, 25.0f64);
        let wc = 3.0 / (4.0 * PI);
        let h = move |r: f64| {
            (-r * r).exp() + 4.0 * PI * a * radial_yukawa_potential(r, 1.0, 5.0, |s| wc * (-s * s).exp())
        };
        let q = solve_partial_waves(&ball(), a, lambda, ChannelSource::radial(h), &Default::default()).unwrap();
        assert!(q.residual < 1e-13);
        for &r in &[0.0, 0.05, 0.31, 0.5, 0.93, 1.0] {
            let x = [r * 0.6, -r * 0.8, 0.0];
            assert!((q.psi_at(&x) - (-r * r).exp()).abs() < 1e-8, "r = {r}");
        }
    }

    #[test]
    fn gram_matches_shell_oracle_for_radial_charge() {
        // Radial φ: ‖𝒢φ‖² = ∫ φ 𝒢²φ with shell averages of K2 done by 1D
        // adaptive quadrature.
        let (a, lambda) = (0.3f64, 9.0f64);
        let q = solve_partial_waves(
            &ball(),
            a,
            lambda,
            ChannelSource::radial(|r: f64| (-2.0 * r * r).exp()),
            &Default::default(),
        )
        .unwrap();
        let g = q.gram();
        let kappa = 3.0;
        let wc = 3.0 / (4.0 * PI);
        let qr = |s: f64| q.channel_values(s)[0];
        // Shell average of K2 = e^{−κd}/(8πκ): [e^{−κ|r−s|}(1+κ|r−s|) − e^{−κ(r+s)}(1+κ(r+s))]/(16πκ³ r s)
        let shell = |r: f64, s: f64| {
            let (d, p) = ((r - s).abs(), r + s);
            ((-kappa * d).exp() * (1.0 + kappa * d) - (-kappa * p).exp() * (1.0 + kappa * p))
                / (16.0 * PI * kappa.powi(3) * r * s)
        };
        let chi = |r: f64| {
            let f = |s: f64| 4.0 * PI * s * s * shell(r, s) * wc * qr(s);
            crate::quadrature::integrate_adaptive(f, 1e-12, r, 1e-16, 1e-12, 400).0
                + crate::quadrature::integrate_adaptive(f, r, 1.0, 1e-16, 1e-12, 400).0
        };
        for &r in &[0.2, 0.7] {
            assert!((g.chi_at(&[r, 0.0, 0.0]) - chi(r)).abs() < 1e-10 * chi(r).abs(), "r = {r}");
        }
        let oracle = crate::quadrature::integrate_adaptive(
            |r: f64| 4.0 * PI * r * r * wc * qr(r) * chi(r),
            1e-12,
            1.0,
            1e-16,
            1e-10,
            200,
        )
        .0;
        assert!((g.norm2 - oracle).abs() < 1e-9 * oracle, "{} {oracle}", g.norm2);
    }

    #[test]
    fn probe_symmetry() {
        let f = src();
        let g = SourceSpec::new(-0.5, [0.0, 0.3, 0.2], 0.4, 25.0).unwrap();
        let opts = PartialWaveOptions::default();
        let qf = solve_partial_waves(&ball(), 0.518, 25.0, ChannelSource::gaussian(&f, 1.0, 1e-15, 200), &opts).unwrap();
        let qg = solve_partial_waves(&ball(), 0.518, 25.0, ChannelSource::gaussian(&g, 1.0, 1e-15, 200), &opts).unwrap();
        let gf = qf.probe_inner(&g, &f);
        let fg = qg.probe_inner(&f, &g);
        assert!((gf - fg).abs() < 1e-12 * gf.abs(), "{gf} {fg}");
    }

    #[test]
    fn refinement_is_stable() {
        let f = src();
        let coarse = PartialWaveOptions {
            panels: 8,
            order: 12,
            ..Default::default()
        };
        let q1 = solve_partial_waves(&ball(), 0.518, 25.0, ChannelSource::gaussian(&f, 1.0, 1e-15, 200), &coarse).unwrap();
        let q2 =
            solve_partial_waves(&ball(), 0.518, 25.0, ChannelSource::gaussian(&f, 1.0, 1e-15, 200), &Default::default())
                .unwrap();
        for x in [[0.1, 0.2, 0.3], [-0.5, 0.5, 0.1], [0.0, 0.0, 0.95]] {
            assert!((q1.q_at(&x) - q2.q_at(&x)).abs() < 1e-7, "{x:?}");
        }
        let (g1, g2) = (q1.gram(), q2.gram());
        assert!((g1.norm2 - g2.norm2).abs() < 1e-7 * g2.norm2);
    }

    #[test]
    fn distance_to_itself_as_fine_cloud_is_small() {
        // Point charges on a fine product grid are a quadrature of 𝒢(Wq).
        let f = src();
        let q = solve_partial_waves(&ball(), 0.518, 25.0, ChannelSource::gaussian(&f, 1.0, 1e-15, 200), &Default::default())
            .unwrap();
        let g = q.gram();
        let grid = crate::quadrature::Grid3D::new(1.0, 24, 338).unwrap();
        let charges: Vec<f64> = (0..grid.len())
            .map(|m| grid.weights[m] * ball().density(&grid.nodes[m]) * q.q_at(&grid.nodes[m]))
            .collect();
        let d = g.distance_to_atoms(&grid.nodes, &charges);
        assert!(d.value < 0.05 * g.norm2.sqrt(), "{} vs {}", d.value, g.norm2.sqrt());
    }
}
