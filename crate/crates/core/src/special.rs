//! Modified spherical Bessel functions and Legendre polynomials for the
//! partial-wave form of the Yukawa kernel:
//!
//! ```text
//! e^{−κ|x−y|}/(4π|x−y|) = κ Σ_ℓ i_ℓ(κr_<) k_ℓ(κr_>) (2ℓ+1)/(4π) P_ℓ(x̂·ŷ)
//! ```
//!
//! with `i_0(z) = sinh z / z` and `k_0(z) = e^{−z}/z`. Both are returned
//! exponentially scaled, `ĩ_ℓ = e^{−z} i_ℓ` and `k̃_ℓ = e^{z} k_ℓ`, so that
//! products `i_ℓ(κr_<) k_ℓ(κr_>) = ĩ k̃ e^{−κ(r_> − r_<)}` never overflow.

use crate::real::Real;

/// `ĩ_ℓ(z)` for `ℓ = 0..=lmax`, `z ≥ 0`.
pub fn scaled_i<T: Real>(lmax: usize, z: T) -> Vec<T> {
    let mut out = vec![T::zero(); lmax + 1];
    if z == T::zero() {
        out[0] = T::one();
        return out;
    }
    if z <= T::lit(2.0) {
        // i_ℓ(z) = z^ℓ/(2ℓ+1)!! Σ_k (z²/2)^k / (k! (2ℓ+3)(2ℓ+5)…(2ℓ+2k+1))
        let e = (-z).exp();
        let half = z * z / T::lit(2.0);
        let mut lead = T::one();
        for (l, o) in out.iter_mut().enumerate() {
            if l > 0 {
                lead = lead * z / T::lit((2 * l + 1) as f64);
            }
            let mut term = T::one();
            let mut sum = T::one();
            for k in 1..200 {
                term = term * half / T::lit((k * (2 * l + 2 * k + 1)) as f64);
                sum += term;
                if term < T::epsilon() * sum {
                    break;
                }
            }
            *o = lead * sum * e;
        }
        return out;
    }
    // Miller's downward recurrence f_{ℓ−1} = f_{ℓ+1} + (2ℓ+1)/z f_ℓ,
    // normalized by ĩ_0 = (1 − e^{−2z})/(2z).
    let zf = z.to_f64_lossy();
    let start = lmax + 20 + (2.0 * zf).ceil() as usize;
    let mut f_next = T::zero();
    let mut f = T::lit(1e-300_f64.max(T::min_positive_value().to_f64_lossy() * 1e10));
    let big = T::lit(1e200_f64.min(T::max_value().to_f64_lossy() * 1e-10));
    for l in (1..=start).rev() {
        let f_prev = f_next + T::lit((2 * l + 1) as f64) / z * f;
        f_next = f;
        f = f_prev;
        if l - 1 <= lmax {
            out[l - 1] = f;
        }
        if f.abs() > big {
            let s = T::one() / big;
            f *= s;
            f_next *= s;
            for o in out.iter_mut() {
                *o *= s;
            }
        }
    }
    let i0 = (T::one() - (-T::lit(2.0) * z).exp()) / (T::lit(2.0) * z);
    let norm = i0 / out[0];
    for o in out.iter_mut() {
        *o *= norm;
    }
    out
}

/// `k̃_ℓ(z)` for `ℓ = 0..=lmax`, `z > 0`, by the stable upward recurrence.
pub fn scaled_k<T: Real>(lmax: usize, z: T) -> Vec<T> {
    let mut out = Vec::with_capacity(lmax + 1);
    out.push(T::one() / z);
    if lmax >= 1 {
        out.push((T::one() + z) / (z * z));
    }
    for l in 1..lmax {
        let next = out[l - 1] + T::lit((2 * l + 1) as f64) / z * out[l];
        out.push(next);
    }
    out
}

/// `P_ℓ(t)` for `ℓ = 0..=lmax`.
pub fn legendre<T: Real>(lmax: usize, t: T) -> Vec<T> {
    let mut p = Vec::with_capacity(lmax + 1);
    p.push(T::one());
    if lmax >= 1 {
        p.push(t);
    }
    for l in 1..lmax {
        let lf = T::lit(l as f64);
        let next = ((T::lit(2.0) * lf + T::one()) * t * p[l] - lf * p[l - 1]) / (lf + T::one());
        p.push(next);
    }
    p
}

/// Ratios `i_ℓ/i_{ℓ−1}` for `ℓ = 1..=lmax` (index 0 unused), from the
/// downward continued fraction. Well scaled for every `z ≥ 0`.
fn i_ratios<T: Real>(lmax: usize, z: T) -> Vec<T> {
    let mut rho = vec![T::zero(); lmax + 1];
    if z == T::zero() {
        return rho;
    }
    let start = lmax + 30 + (2.0 * z.to_f64_lossy()).ceil() as usize;
    let mut next = T::zero();
    for l in (1..=start).rev() {
        let r = T::one() / (T::lit((2 * l + 1) as f64) / z + next);
        if l <= lmax {
            rho[l] = r;
        }
        next = r;
    }
    rho
}

/// Ratios `k_ℓ/k_{ℓ−1}` for `ℓ = 0..=lmax`, with `k_{−1} := k_0`.
fn k_ratios<T: Real>(lmax: usize, z: T) -> Vec<T> {
    let mut rho = Vec::with_capacity(lmax + 1);
    rho.push(T::one());
    if lmax >= 1 {
        rho.push((T::one() + z) / z);
    }
    for l in 1..lmax {
        let next = T::one() / rho[l] + T::lit((2 * l + 1) as f64) / z;
        rho.push(next);
    }
    rho
}

/// `κ i_ℓ(κr_<) k_ℓ(κr_>)` for `ℓ = 0..=lmax`, built from ratios so that
/// high orders underflow gracefully instead of producing `inf · 0`.
fn wave_products<T: Real>(lmax: usize, lo: T, hi: T, kappa: T) -> (Vec<T>, Vec<T>, Vec<T>) {
    let zi = kappa * lo;
    let zk = kappa * hi;
    let ri = i_ratios(lmax + 1, zi);
    let rk = k_ratios(lmax, zk);
    let i0 = if zi == T::zero() {
        T::one()
    } else {
        (T::one() - (-T::lit(2.0) * zi).exp()) / (T::lit(2.0) * zi)
    };
    let mut p = Vec::with_capacity(lmax + 1);
    p.push(kappa * i0 / zk * (-(zk - zi)).exp());
    for l in 1..=lmax {
        let prev = p[l - 1];
        p.push(prev * ri[l] * rk[l]);
    }
    (p, ri, rk)
}

/// Partial-wave Yukawa kernels `κ i_ℓ(κr_<) k_ℓ(κr_>)` for `ℓ = 0..=lmax`.
pub fn yukawa_partial_waves<T: Real>(lmax: usize, r: T, s: T, kappa: T) -> Vec<T> {
    let (lo, hi) = if r < s { (r, s) } else { (s, r) };
    wave_products(lmax, lo, hi, kappa).0
}

/// Partial waves of `K2 = e^{−κ|x−y|}/(8πκ) = −∂_λ 𝒢^λ`:
/// `−(1/2κ) ∂_κ[κ i_ℓ(κr_<) k_ℓ(κr_>)]`.
pub fn k2_partial_waves<T: Real>(lmax: usize, r: T, s: T, kappa: T) -> Vec<T> {
    let (lo, hi) = if r < s { (r, s) } else { (s, r) };
    let zi = kappa * lo;
    let zk = kappa * hi;
    let (p, ri, rk) = wave_products(lmax, lo, hi, kappa);
    // With i′_ℓ = i_{ℓ+1} + (ℓ/z) i_ℓ and k′_ℓ = −k_{ℓ−1} − ((ℓ+1)/z) k_ℓ the
    // κ-derivative collapses to i_ℓ k_ℓ (z_< i_{ℓ+1}/i_ℓ − z_> k_{ℓ−1}/k_ℓ).
    let two_k2 = T::lit(2.0) * kappa * kappa;
    (0..=lmax)
        .map(|l| p[l] * (zk / rk[l] - zi * ri[l + 1]) / two_k2)
        .collect()
}
