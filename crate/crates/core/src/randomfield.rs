//! Obstacle densities `W`, i.i.d. configurations and the pairwise regularity
//! statistics: minimum distance, the inverse-distance pair sums, and the
//! empirical probability of the minimum-distance condition.

use crate::linalg::splitmix64;
use crate::quadrature::integrate_adaptive;
use crate::real::{dist3, norm3, CompensatedSum, Point3, Real};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DensityError {
    #[error("density parameter must be positive and finite ({0})")]
    BadParameter(&'static str),
    #[error("tabulated density is empty or malformed (row {0})")]
    BadTable(usize),
    #[error("tabulated density has zero or negative mass")]
    Unnormalizable,
    #[error("Lp exponent must exceed 3 (got {0})")]
    BadExponent(f64),
    #[error("need N ≥ 1")]
    EmptyConfiguration,
    #[error("need at least 30 trials (got {0})")]
    TooFewTrials(usize),
    #[error("ν must lie in (0, ν*(p)) = (0, {max}) (got {nu})")]
    BadNu { nu: f64, max: f64 },
    #[error("ξ must lie in (0, 1] (got {0})")]
    BadXi(f64),
}

/// Family of the radial density `W`.
#[derive(Debug, Clone, PartialEq)]
pub enum DensityFamily<T> {
    /// Uniform on `|x| ≤ radius`.
    UniformBall { radius: T },
    /// Isotropic normal with standard deviation `sigma`, truncated at
    /// `truncation·sigma` and renormalized.
    Gaussian { sigma: T, truncation: T },
    /// Piecewise-linear radial profile through `(r, w)` samples, normalized
    /// to unit mass; zero beyond the last radius.
    Tabulated { r: Vec<T>, w: Vec<T> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensitySpec<T> {
    pub family: DensityFamily<T>,
    /// Exponent `p > 3` with `W ∈ L^p`; `None` means `p = ∞`.
    pub p: Option<T>,
    // Cached normalization of the raw profile.
    norm: T,
}

impl<T: Real> DensitySpec<T> {
    pub fn uniform_ball(radius: T) -> Result<Self, DensityError> {
        Self::new(DensityFamily::UniformBall { radius }, None)
    }

    pub fn gaussian(sigma: T) -> Result<Self, DensityError> {
        Self::new(
            DensityFamily::Gaussian {
                sigma,
                truncation: T::lit(6.0),
            },
            None,
        )
    }

    pub fn new(family: DensityFamily<T>, p: Option<T>) -> Result<Self, DensityError> {
        let pos = |x: T| x > T::zero() && x.is_finite();
        if let Some(p) = p {
            if !(p > T::lit(3.0)) {
                return Err(DensityError::BadExponent(p.to_f64_lossy()));
            }
        }
        let norm = match &family {
            DensityFamily::UniformBall { radius } => {
                if !pos(*radius) {
                    return Err(DensityError::BadParameter("radius"));
                }
                T::four_pi() / T::lit(3.0) * radius.powi(3)
            }
            DensityFamily::Gaussian { sigma, truncation } => {
                if !pos(*sigma) {
                    return Err(DensityError::BadParameter("sigma"));
                }
                if !pos(*truncation) {
                    return Err(DensityError::BadParameter("truncation"));
                }
                T::one() - T::lit(gaussian_tail_mass(truncation.to_f64_lossy()))
            }
            DensityFamily::Tabulated { r, w } => {
                if r.len() < 2 || r.len() != w.len() {
                    return Err(DensityError::BadTable(0));
                }
                for i in 0..r.len() {
                    let ok = r[i] >= T::zero()
                        && r[i].is_finite()
                        && w[i] >= T::zero()
                        && w[i].is_finite()
                        && (i == 0 || r[i] > r[i - 1]);
                    if !ok {
                        return Err(DensityError::BadTable(i));
                    }
                }
                let mass = tabulated_cdf(r, w, r[r.len() - 1]);
                if !(mass > T::zero()) {
                    return Err(DensityError::Unnormalizable);
                }
                mass
            }
        };
        Ok(Self { family, p, norm })
    }

    /// Radius outside which `W = 0`.
    pub fn support_radius(&self) -> T {
        match &self.family {
            DensityFamily::UniformBall { radius } => *radius,
            DensityFamily::Gaussian { sigma, truncation } => *sigma * *truncation,
            DensityFamily::Tabulated { r, .. } => r[r.len() - 1],
        }
    }

    /// Probability mass of the untruncated Gaussian beyond the cutoff.
    pub fn mass_defect(&self) -> T {
        match &self.family {
            DensityFamily::Gaussian { truncation, .. } => {
                T::lit(gaussian_tail_mass(truncation.to_f64_lossy()))
            }
            _ => T::zero(),
        }
    }

    pub fn radial(&self, r: T) -> T {
        if r > self.support_radius() {
            return T::zero();
        }
        match &self.family {
            DensityFamily::UniformBall { .. } => T::one() / self.norm,
            DensityFamily::Gaussian { sigma, .. } => {
                let s2 = *sigma * *sigma;
                (-(r * r) / (T::lit(2.0) * s2)).exp()
                    / ((T::lit(2.0) * T::PI() * s2).powf(T::lit(1.5)) * self.norm)
            }
            DensityFamily::Tabulated { r: rs, w } => interpolate(rs, w, r) / self.norm,
        }
    }

    pub fn density(&self, x: &Point3<T>) -> T {
        self.radial(norm3(x))
    }

    /// `∫ W` by adaptive radial quadrature.
    pub fn total_mass(&self) -> T {
        self.radial_integral(|r| self.radial(r))
    }

    /// `‖W‖_p`, or `sup W` for `p = ∞`.
    pub fn lp_norm(&self) -> T {
        match self.p {
            None => {
                let mut breaks = self.breaks();
                breaks.push(T::zero());
                breaks
                    .iter()
                    .map(|&r| self.radial(r))
                    .fold(T::zero(), |a, b| a.max(b))
            }
            Some(p) => self.radial_integral(|r| self.radial(r).powf(p)).powf(T::one() / p),
        }
    }

    /// `ν*(p) = (p − 3)/(3(p − 1))`, `1/3` for `p = ∞`.
    pub fn nu_star(&self) -> T {
        nu_star(self.p)
    }

    fn breaks(&self) -> Vec<T> {
        let mut b = vec![T::zero()];
        if let DensityFamily::Tabulated { r, .. } = &self.family {
            b.extend(r.iter().copied().filter(|&x| x > T::zero()));
        } else {
            b.push(self.support_radius());
        }
        b
    }

    fn radial_integral(&self, f: impl Fn(T) -> T) -> T {
        self.breaks()
            .windows(2)
            .map(|w| {
                integrate_adaptive(
                    |r: T| T::four_pi() * r * r * f(r),
                    w[0],
                    w[1],
                    T::epsilon() * T::lit(10.0),
                    T::lit(1e-13).max(T::epsilon() * T::lit(1e2)),
                    400,
                )
                .0
            })
            .sum()
    }

    /// Draws one point.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point3<T> {
        match &self.family {
            DensityFamily::UniformBall { radius } => {
                let r = radius.to_f64_lossy() * rng.random::<f64>().cbrt();
                scale_dir(random_direction(rng), r)
            }
            DensityFamily::Gaussian { sigma, truncation } => {
                let s = sigma.to_f64_lossy();
                let cut = truncation.to_f64_lossy();
                loop {
                    let g: [f64; 3] = [
                        rng.sample(StandardNormal),
                        rng.sample(StandardNormal),
                        rng.sample(StandardNormal),
                    ];
                    if (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt() <= cut {
                        return g.map(|c| T::lit(c * s));
                    }
                }
            }
            DensityFamily::Tabulated { r, w } => {
                let target = T::lit(rng.random::<f64>()) * self.norm;
                let radius = invert_tabulated_cdf(r, w, target);
                scale_dir(random_direction(rng), radius.to_f64_lossy())
            }
        }
    }
}

/// `P(|g| > t)` for a standard normal vector in ℝ³.
fn gaussian_tail_mass(t: f64) -> f64 {
    statrs::function::erf::erfc(t / std::f64::consts::SQRT_2)
        + (2.0 / std::f64::consts::PI).sqrt() * t * (-t * t / 2.0).exp()
}

pub fn nu_star<T: Real>(p: Option<T>) -> T {
    match p {
        None => T::one() / T::lit(3.0),
        Some(p) => (p - T::lit(3.0)) / (T::lit(3.0) * (p - T::one())),
    }
}

fn random_direction<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    let z = 2.0 * rng.random::<f64>() - 1.0;
    let phi = 2.0 * std::f64::consts::PI * rng.random::<f64>();
    let s = (1.0 - z * z).max(0.0).sqrt();
    [s * phi.cos(), s * phi.sin(), z]
}

fn scale_dir<T: Real>(d: [f64; 3], r: f64) -> Point3<T> {
    d.map(|c| T::lit(c * r))
}

fn interpolate<T: Real>(r: &[T], w: &[T], x: T) -> T {
    if x <= r[0] {
        return w[0];
    }
    let last = r.len() - 1;
    if x >= r[last] {
        return w[last];
    }
    let k = r.partition_point(|&ri| ri <= x);
    let t = (x - r[k - 1]) / (r[k] - r[k - 1]);
    w[k - 1] + t * (w[k] - w[k - 1])
}

/// `∫_{r₀}^{x} 4π s² w(s) ds` for piecewise-linear `w`, with `w = w[0]` on `[0, r₀]`.
fn tabulated_cdf<T: Real>(r: &[T], w: &[T], x: T) -> T {
    let four_pi = T::four_pi();
    let third = T::one() / T::lit(3.0);
    let mut mass = four_pi * w[0] * r[0].min(x).powi(3) * third;
    for k in 1..r.len() {
        if x <= r[k - 1] {
            break;
        }
        let (a, b) = (r[k - 1], r[k].min(x));
        let slope = (w[k] - w[k - 1]) / (r[k] - r[k - 1]);
        let c0 = w[k - 1] - slope * r[k - 1];
        // ∫ s²(c0 + slope·s) ds
        let prim = |s: T| c0 * s.powi(3) * third + slope * s.powi(4) / T::lit(4.0);
        mass += four_pi * (prim(b) - prim(a));
    }
    mass
}

fn invert_tabulated_cdf<T: Real>(r: &[T], w: &[T], target: T) -> T {
    let (mut lo, mut hi) = (T::zero(), r[r.len() - 1]);
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        if tabulated_cdf(r, w, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= T::epsilon() * hi {
            break;
        }
    }
    (lo + hi) / T::lit(2.0)
}

/// Per-trial seed: the trial index is mixed into the master seed by one
/// SplitMix64 step, `seed_t = splitmix64(master ⊕ splitmix64(t))`.
pub fn derive_seed(master: u64, trial: u64) -> u64 {
    splitmix64(master ^ splitmix64(trial))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleConfig<T> {
    pub points: Vec<Point3<T>>,
    pub seed: u64,
    pub density: DensitySpec<T>,
}

impl<T: Real> ObstacleConfig<T> {
    pub fn n(&self) -> usize {
        self.points.len()
    }
}

/// `N` i.i.d. draws from `W`, reproducible from `(seed, N, W)`.
pub fn sample_configuration<T: Real>(
    density: &DensitySpec<T>,
    n: usize,
    seed: u64,
) -> Result<ObstacleConfig<T>, DensityError> {
    if n == 0 {
        return Err(DensityError::EmptyConfiguration);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n).map(|_| density.sample(&mut rng)).collect();
    Ok(ObstacleConfig {
        points,
        seed,
        density: density.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityReport<T> {
    pub n: usize,
    /// `+∞` for a single point, 0 for duplicates.
    pub min_pair_distance: T,
    pub nu: T,
    pub xi: T,
    /// Minimum-distance condition `min d ≥ C N^{−(1−ν)}`, when `C` is given.
    pub y1_ok: Option<bool>,
    /// `(1/N²) Σ_{i≠j} |y_i − y_j|^{−(3−ξ)}`.
    pub y2_sum: T,
    /// `N^{−(3−ν²)} Σ_{i≠j} |y_i − y_j|^{−4}`.
    pub y3_sum: T,
    /// `y2_sum` evaluated at `ξ = ν`, the quantity that bounds `y3_sum`.
    pub y2_sum_at_nu: T,
}

/// Exact `O(N²)` pairwise statistics with compensated sums.
pub fn regularity_report<T: Real>(
    points: &[Point3<T>],
    nu: T,
    xi: T,
    c: Option<T>,
) -> Result<RegularityReport<T>, DensityError> {
    if !(xi > T::zero() && xi <= T::one()) {
        return Err(DensityError::BadXi(xi.to_f64_lossy()));
    }
    if !(nu > T::zero() && nu < T::one()) {
        return Err(DensityError::BadNu {
            nu: nu.to_f64_lossy(),
            max: 1.0,
        });
    }
    let n = points.len();
    if n == 0 {
        return Err(DensityError::EmptyConfiguration);
    }
    let e2 = T::lit(3.0) - xi;
    let e2nu = T::lit(3.0) - nu;
    // Each unordered pair contributes twice to the i ≠ j sums.
    let rows: Vec<(T, T, T, T)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut min = T::infinity();
            let (mut s2, mut s2nu, mut s4) =
                (CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new());
            for j in i + 1..n {
                let d = dist3(&points[i], &points[j]);
                min = min.min(d);
                s2.add(d.powf(-e2));
                s2nu.add(d.powf(-e2nu));
                s4.add(d.powi(-4));
            }
            (min, s2.value(), s2nu.value(), s4.value())
        })
        .collect();
    let mut min = T::infinity();
    let (mut s2, mut s2nu, mut s4) = (CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new());
    for (m, a, b, d) in rows {
        min = min.min(m);
        s2.add(a);
        s2nu.add(b);
        s4.add(d);
    }
    let nf = T::from_usize_lossy(n);
    let two = T::lit(2.0);
    let y1_ok = c.map(|c| min > T::zero() && min >= c * nf.powf(-(T::one() - nu)));
    Ok(RegularityReport {
        n,
        min_pair_distance: min,
        nu,
        xi,
        y1_ok,
        y2_sum: two * s2.value() / (nf * nf),
        y3_sum: two * s4.value() * nf.powf(-(T::lit(3.0) - nu * nu)),
        y2_sum_at_nu: two * s2nu.value() / (nf * nf),
    })
}

/// Minimum pair distance only; cheaper than the full report.
pub fn min_pair_distance<T: Real>(points: &[Point3<T>]) -> T {
    let n = points.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut m2 = T::infinity();
            for j in i + 1..n {
                let d = [0, 1, 2].map(|a| points[i][a] - points[j][a]);
                m2 = m2.min(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
            }
            m2
        })
        .collect::<Vec<T>>()
        .into_iter()
        .fold(T::infinity(), |a, b| a.min(b))
        .sqrt()
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityProbability {
    pub n: usize,
    pub trials: usize,
    pub successes: usize,
    pub probability: f64,
    /// 95% Wilson interval.
    pub ci: (f64, f64),
}

/// Fraction of `trials` configurations with `min d ≥ C N^{−(1−ν)}`.
pub fn regularity_probability<T: Real>(
    density: &DensitySpec<T>,
    n: usize,
    nu: T,
    c: T,
    trials: usize,
    seed: u64,
) -> Result<RegularityProbability, DensityError> {
    if trials < 30 {
        return Err(DensityError::TooFewTrials(trials));
    }
    if n == 0 {
        return Err(DensityError::EmptyConfiguration);
    }
    let threshold = c * T::from_usize_lossy(n).powf(-(T::one() - nu));
    let ok: Vec<bool> = (0..trials)
        .map(|t| {
            if c <= T::zero() {
                return Ok(true);
            }
            let cfg = sample_configuration(density, n, derive_seed(seed, t as u64))?;
            Ok(min_pair_distance(&cfg.points) >= threshold)
        })
        .collect::<Result<_, DensityError>>()?;
    let successes = ok.iter().filter(|&&b| b).count();
    Ok(RegularityProbability {
        n,
        trials,
        successes,
        probability: successes as f64 / trials as f64,
        ci: wilson_interval(successes, trials, 1.959_963_984_540_054),
    })
}

/// `C` as the given quantile of `min d · N^{1−ν}` over a pilot run.
pub fn calibrate_c<T: Real>(
    density: &DensitySpec<T>,
    n: usize,
    nu: T,
    pilot_trials: usize,
    quantile: f64,
    seed: u64,
) -> Result<T, DensityError> {
    if pilot_trials == 0 || n < 2 {
        return Err(DensityError::EmptyConfiguration);
    }
    let scale = T::from_usize_lossy(n).powf(T::one() - nu);
    let mut v: Vec<f64> = (0..pilot_trials)
        .map(|t| {
            let cfg = sample_configuration(density, n, derive_seed(seed, t as u64))?;
            Ok((min_pair_distance(&cfg.points) * scale).to_f64_lossy())
        })
        .collect::<Result<_, DensityError>>()?;
    v.sort_by(f64::total_cmp);
    Ok(T::lit(quantile_sorted(&v, quantile)))
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_point_has_infinite_min_distance() {
        let d = DensitySpec::<f64>::uniform_ball(1.0).unwrap();
        let c = sample_configuration(&d, 1, 3).unwrap();
        let r = regularity_report(&c.points, 0.1, 1.0, Some(1.0)).unwrap();
        assert_eq!(r.min_pair_distance, f64::INFINITY);
        assert_eq!(r.y2_sum, 0.0);
    }

    #[test]
    fn uniform_ball_mean_radius() {
        let d = DensitySpec::<f64>::uniform_ball(1.0).unwrap();
        let c = sample_configuration(&d, 10_000, 11).unwrap();
        let radii: Vec<f64> = c.points.iter().map(norm3).collect();
        let mean = radii.iter().sum::<f64>() / 1e4;
        // Var|y| = 3/5 − 9/16 for the unit ball.
        let se = ((3.0 / 5.0 - 9.0 / 16.0) / 1e4f64).sqrt();
        assert!((mean - 0.75).abs() < 3.0 * se);
        assert!(radii.iter().all(|&r| r <= 1.0));
    }

    #[test]
    fn sampling_is_deterministic() {
        let d = DensitySpec::<f64>::gaussian(0.5).unwrap();
        let a = sample_configuration(&d, 100, 42).unwrap();
        let b = sample_configuration(&d, 100, 42).unwrap();
        assert_eq!(a.points, b.points);
        assert_ne!(a.points, sample_configuration(&d, 100, 43).unwrap().points);
    }

    #[test]
    fn pair_sum_arithmetic() {
        let r = regularity_report(&[[0.0f64; 3], [1.0, 0.0, 0.0]], 0.1, 1.0, None).unwrap();
        assert!((r.y2_sum - 0.5).abs() < 1e-15);
        let r = regularity_report(&[[0.0f64; 3], [0.5, 0.0, 0.0]], 0.1, 1.0, None).unwrap();
        assert!((r.y2_sum - 2.0).abs() < 1e-14);
    }

    #[test]
    fn duplicates_fail_y1() {
        let r = regularity_report(&[[0.2f64; 3], [0.2; 3]], 0.1, 0.5, Some(0.1)).unwrap();
        assert_eq!(r.min_pair_distance, 0.0);
        assert_eq!(r.y1_ok, Some(false));
    }

    #[test]
    fn probability_edge_cases() {
        let d = DensitySpec::<f64>::uniform_ball(1.0).unwrap();
        let p = regularity_probability(&d, 50, 0.05, 0.0, 40, 1).unwrap();
        assert_eq!(p.probability, 1.0);
        // Threshold C/N = 2 is the diameter.
        let p = regularity_probability(&d, 2, 1e-12, 4.0, 200, 1).unwrap();
        assert_eq!(p.probability, 0.0);
        assert!(regularity_probability(&d, 2, 0.1, 1.0, 10, 1).is_err());
    }

    #[test]
    fn densities_are_normalized() {
        let tab = DensitySpec::new(
            DensityFamily::Tabulated {
                r: vec![0.0, 0.5, 1.0, 1.5],
                w: vec![2.0, 1.5, 0.5, 0.0],
            },
            Some(6.0),
        )
        .unwrap();
        for d in [
            DensitySpec::<f64>::uniform_ball(1.3).unwrap(),
            DensitySpec::gaussian(0.4).unwrap(),
            tab.clone(),
        ] {
            assert!((d.total_mass() - 1.0).abs() < 1e-8, "{:?}", d.family);
        }
        // Inverse-CDF sampling reproduces the tabulated mean radius.
        let mean_exact = {
            let f = |r: f64| 4.0 * std::f64::consts::PI * r * r * r * tab.radial(r);
            integrate_adaptive(f, 0.0, 1.5, 1e-14, 1e-12, 400).0
        };
        let c = sample_configuration(&tab, 20_000, 5).unwrap();
        let m = c.points.iter().map(norm3).sum::<f64>() / 2e4;
        assert!((m - mean_exact).abs() < 0.01, "{m} vs {mean_exact}");
        assert!(DensitySpec::new(
            DensityFamily::Tabulated { r: vec![0.0, 1.0], w: vec![0.0, 0.0] },
            None
        )
        .is_err());
    }

    #[test]
    fn nu_star_values() {
        assert!((nu_star::<f64>(None) - 1.0 / 3.0).abs() < 1e-15);
        assert!((nu_star(Some(5.0f64)) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn wilson_is_inside_unit_interval() {
        let (lo, hi) = wilson_interval(0, 100, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
        let (lo, hi) = wilson_interval(50, 100, 1.96);
        assert!(lo < 0.5 && hi > 0.5);
    }

    fn arb_points() -> impl Strategy<Value = Vec<[f64; 3]>> {
        prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 2..40)
    }

    proptest! {
        #[test]
        fn permutation_invariance(pts in arb_points(), seed in 0u64..1000) {
            let mut shuffled = pts.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..shuffled.len()).rev() {
                let j = rand::Rng::random_range(&mut rng, 0..=i);
                shuffled.swap(i, j);
            }
            let a = regularity_report(&pts, 0.2, 0.5, Some(0.01)).unwrap();
            let b = regularity_report(&shuffled, 0.2, 0.5, Some(0.01)).unwrap();
            prop_assert_eq!(a.min_pair_distance, b.min_pair_distance);
            prop_assert!((a.y2_sum - b.y2_sum).abs() <= 1e-12 * a.y2_sum);
            prop_assert!((a.y3_sum - b.y3_sum).abs() <= 1e-12 * a.y3_sum);
        }

        #[test]
        fn scaling_covariance(pts in arb_points(), s in 0.1f64..10.0) {
            let scaled: Vec<_> = pts.iter().map(|p| p.map(|c| c * s)).collect();
            let a = regularity_report(&pts, 0.2, 0.5, None).unwrap();
            let b = regularity_report(&scaled, 0.2, 0.5, None).unwrap();
            prop_assert!((b.min_pair_distance - s * a.min_pair_distance).abs() <= 1e-12 * b.min_pair_distance);
            prop_assert!((b.y2_sum - s.powf(-2.5) * a.y2_sum).abs() <= 1e-10 * b.y2_sum);
        }

        #[test]
        fn y3_bounded_by_y2(seed in 0u64..500, n in 2usize..200, nu in 0.01f64..0.3) {
            let d = DensitySpec::<f64>::uniform_ball(1.0).unwrap();
            let c = sample_configuration(&d, n, seed).unwrap();
            let r = regularity_report(&c.points, nu, 0.5, None).unwrap();
            // Σd⁻⁴ ≤ (min d)^{−(1+ν)} Σ d^{−(3−ν)}, rewritten in the normalized sums.
            let nf = n as f64;
            let m = r.min_pair_distance * nf.powf(1.0 - nu);
            let bound = m.powf(-(1.0 + nu)) * nf.powf((1.0 + nu) * (1.0 - nu)) * nf.powf(nu * nu - 1.0) * r.y2_sum_at_nu;
            prop_assert!(r.y3_sum <= bound * (1.0 + 1e-10));
        }
    }
}
