//! Convergence-rate fits and fluctuation statistics over Monte Carlo sweeps
//! of random obstacle configurations.
//!
//! Trials run in parallel and are collected in index order; every reduction
//! afterwards is sequential, so results do not depend on the thread count.

pub use crate::field::{l2_distance, FieldDistance};

use crate::effective::EffectiveError;
use crate::field::{atom_norm_bound, FieldError};
use crate::microscopic::{
    charge_comparison, microscopic_field, monopole_field, solve_densities, MicroscopicError, MicroscopicOptions,
};
use crate::partialwave::{solve_partial_waves, ChannelSource, ChargeGram, PartialWaveCharge, PartialWaveOptions};
use crate::pointcharge::{assemble_point_field, solve_point_charges, PointChargeError, PointChargeOptions};
use crate::potentials::PotentialModel;
use crate::quadrature::Grid3D;
use crate::randomfield::{derive_seed, min_pair_distance, sample_configuration, DensityError, DensitySpec};
use crate::real::{compensated_sum, Real};
use crate::scattering::{solve_mu_nystrom, NystromOptions};
use crate::source::SourceSpec;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("a rate fit needs at least 3 distinct N with positive finite errors (got {0})")]
    TooFewPoints(usize),
    #[error("comparison {0} needs a microscopic setup")]
    MissingMicroscopic(&'static str),
    #[error("a sweep needs at least one N, one trial and one comparison")]
    EmptyPlan,
    #[error("covariance inputs disagree: {0}")]
    Mismatch(&'static str),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Effective(#[from] EffectiveError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Microscopic(#[from] MicroscopicError),
}

/// Least-squares slope of `log e` against `log N` through per-`N` medians.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub n_values: Vec<usize>,
    pub medians: Vec<f64>,
    /// `(min, lower quartile, upper quartile, max, count)` per `N`.
    pub spread: Vec<(f64, f64, f64, f64, usize)>,
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    crate::randomfield::quantile_sorted(sorted, q)
}

/// Fits `e ≈ C N^β` to `(N, e)` samples. Non-finite or non-positive errors
/// are dropped before the medians are taken.
pub fn fit_rate(samples: &[(usize, f64)]) -> Result<RateFit, AnalysisError> {
    let mut ns: Vec<usize> = samples.iter().map(|s| s.0).collect();
    ns.sort_unstable();
    ns.dedup();
    let mut n_values = Vec::new();
    let mut medians = Vec::new();
    let mut spread = Vec::new();
    for n in ns {
        let mut v: Vec<f64> = samples
            .iter()
            .filter(|s| s.0 == n && s.1.is_finite() && s.1 > 0.0)
            .map(|s| s.1)
            .collect();
        if v.is_empty() {
            continue;
        }
        v.sort_by(f64::total_cmp);
        n_values.push(n);
        medians.push(quantile(&v, 0.5));
        spread.push((v[0], quantile(&v, 0.25), quantile(&v, 0.75), v[v.len() - 1], v.len()));
    }
    let k = n_values.len();
    if k < 3 {
        return Err(AnalysisError::TooFewPoints(k));
    }
    let x: Vec<f64> = n_values.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = medians.iter().map(|e| e.ln()).collect();
    let kf = k as f64;
    let mx = x.iter().sum::<f64>() / kf;
    let my = y.iter().sum::<f64>() / kf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_se = (rss / (kf - 2.0) / sxx).sqrt();
    Ok(RateFit {
        n_values,
        medians,
        spread,
        slope,
        slope_se,
        intercept,
    })
}

/// Field or charge pair compared in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Comparison {
    /// `‖ψ̂_N − ψ‖₂`.
    HatVsLimit,
    /// `‖ψ_N − ψ̃_N‖₂`.
    MicroVsMonopole,
    /// `‖ψ̃_N − ψ̂_N‖₂`.
    MonopoleVsHat,
    /// `‖Q − q‖₂`.
    ChargeGap,
    /// `{(1/N) Σ (N q_i − q(y_i))²}^{1/2}`.
    PointwiseCharge,
}

impl Comparison {
    pub const ALL: [Comparison; 5] = [
        Comparison::HatVsLimit,
        Comparison::MicroVsMonopole,
        Comparison::MonopoleVsHat,
        Comparison::ChargeGap,
        Comparison::PointwiseCharge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Comparison::HatVsLimit => "hat_vs_limit",
            Comparison::MicroVsMonopole => "micro_vs_monopole",
            Comparison::MonopoleVsHat => "monopole_vs_hat",
            Comparison::ChargeGap => "charge_gap",
            Comparison::PointwiseCharge => "pointwise_charge",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }

    pub fn needs_microscopic(self) -> bool {
        matches!(
            self,
            Comparison::MicroVsMonopole | Comparison::MonopoleVsHat | Comparison::ChargeGap
        )
    }

    fn needs_limit(self) -> bool {
        matches!(self, Comparison::HatVsLimit | Comparison::PointwiseCharge)
    }
}

/// Potential and reference grid for sweeps that solve the density system.
#[derive(Debug, Clone)]
pub struct MicroscopicSetup<T> {
    pub potential: PotentialModel<T>,
    pub grid: Grid3D<T>,
    pub options: MicroscopicOptions<T>,
}

#[derive(Debug, Clone)]
pub struct SweepPlan<T> {
    pub comparisons: Vec<Comparison>,
    pub n_values: Vec<usize>,
    pub trials: usize,
    pub master_seed: u64,
    pub density: DensitySpec<T>,
    /// Scattering length of the limit problem and of the point charges when
    /// no microscopic setup is given; otherwise the discrete `a` of the
    /// setup's grid is used throughout.
    pub a: T,
    pub lambda: T,
    pub source: SourceSpec<T>,
    pub point_charge: PointChargeOptions<T>,
    pub partial_wave: PartialWaveOptions<T>,
    pub microscopic: Option<MicroscopicSetup<T>>,
    /// `(ν, C)` for flagging configurations with `min d < C N^{−(1−ν)}`.
    pub y1: Option<(T, T)>,
}

/// Seed of trial `t` at size `n`.
pub fn trial_seed(master: u64, n: usize, t: usize) -> u64 {
    derive_seed(derive_seed(master, n as u64), t as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    /// One entry per plan comparison; `NaN` when the trial failed.
    pub values: Vec<f64>,
    pub y1_ok: Option<bool>,
    /// `‖Γ(Q − q) − (4πa/N)R‖/‖Q‖` on microscopic trials.
    pub identity_residual: Option<f64>,
    /// `‖R‖₂` on microscopic trials.
    pub remainder_norm: Option<f64>,
    /// `√(K2(0)·N)·‖Q − q‖`, the bound on `‖ψ̃_N − ψ̂_N‖`.
    pub hat_tilde_bound: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub comparisons: Vec<Comparison>,
    pub records: Vec<TrialRecord>,
    /// One fit per comparison, or the reason it could not be made.
    pub fits: Vec<Result<RateFit, AnalysisError>>,
    /// The same fits restricted to configurations satisfying (Y1).
    pub regular_fits: Option<Vec<Result<RateFit, AnalysisError>>>,
    pub failures: usize,
    /// Scattering length used for point charges and the limit.
    pub a: f64,
}

struct Limit<T> {
    charge: PartialWaveCharge<T>,
    gram: ChargeGram<T>,
}

/// Runs every `(N, trial)` of the plan.
pub fn convergence_study<T: Real>(plan: &SweepPlan<T>) -> Result<StudyResult, AnalysisError> {
    if plan.n_values.is_empty() || plan.trials == 0 || plan.comparisons.is_empty() {
        return Err(AnalysisError::EmptyPlan);
    }
    let micro = plan.comparisons.iter().any(|c| c.needs_microscopic());
    if micro && plan.microscopic.is_none() {
        let c = plan.comparisons.iter().find(|c| c.needs_microscopic()).unwrap();
        return Err(AnalysisError::MissingMicroscopic(c.name()));
    }
    let a = match (&plan.microscopic, micro) {
        (Some(s), true) => {
            let opts = NystromOptions {
                rule: s.options.rule,
                resonance_threshold: s.options.resonance_threshold,
                ..Default::default()
            };
            solve_mu_nystrom(&s.potential, &s.grid, &opts)
                .map_err(|e| AnalysisError::Microscopic(e.into()))?
                .a
        }
        _ => plan.a,
    };
    let limit = if plan.comparisons.iter().any(|c| c.needs_limit()) {
        let src = ChannelSource::gaussian(
            &plan.source,
            plan.density.support_radius(),
            plan.partial_wave.tail_tol,
            plan.partial_wave.max_order,
        );
        let charge = solve_partial_waves(&plan.density, a, plan.lambda, src, &plan.partial_wave)?;
        let gram = charge.gram();
        Some(Limit { charge, gram })
    } else {
        None
    };
    let jobs: Vec<(usize, usize)> = plan
        .n_values
        .iter()
        .flat_map(|&n| (0..plan.trials).map(move |t| (n, t)))
        .collect();
    let records: Vec<TrialRecord> = jobs
        .par_iter()
        .map(|&(n, t)| run_trial(plan, a, limit.as_ref(), n, t))
        .collect();
    let failures = records.iter().filter(|r| r.failure.is_some()).count();
    let fit_for = |filter: &dyn Fn(&TrialRecord) -> bool| -> Vec<Result<RateFit, AnalysisError>> {
        (0..plan.comparisons.len())
            .map(|c| {
                let samples: Vec<(usize, f64)> = records
                    .iter()
                    .filter(|r| r.failure.is_none() && filter(r))
                    .map(|r| (r.n, r.values[c]))
                    .collect();
                fit_rate(&samples)
            })
            .collect()
    };
    let fits = fit_for(&|_| true);
    let regular_fits = plan.y1.map(|_| fit_for(&|r| r.y1_ok == Some(true)));
    Ok(StudyResult {
        comparisons: plan.comparisons.clone(),
        records,
        fits,
        regular_fits,
        failures,
        a: a.to_f64_lossy(),
    })
}

fn run_trial<T: Real>(plan: &SweepPlan<T>, a: T, limit: Option<&Limit<T>>, n: usize, t: usize) -> TrialRecord {
    let seed = trial_seed(plan.master_seed, n, t);
    let mut rec = TrialRecord {
        n,
        trial: t,
        seed,
        values: vec![f64::NAN; plan.comparisons.len()],
        y1_ok: None,
        identity_residual: None,
        remainder_norm: None,
        hat_tilde_bound: None,
        failure: None,
    };
    if let Err(e) = fill_trial(plan, a, limit, &mut rec) {
        rec.values.iter_mut().for_each(|v| *v = f64::NAN);
        rec.failure = Some(e.to_string());
    }
    rec
}

fn fill_trial<T: Real>(
    plan: &SweepPlan<T>,
    a: T,
    limit: Option<&Limit<T>>,
    rec: &mut TrialRecord,
) -> Result<(), AnalysisError> {
    let n = rec.n;
    let cfg = sample_configuration(&plan.density, n, rec.seed)?;
    let points = &cfg.points;
    if let Some((nu, c)) = plan.y1 {
        let threshold = c * T::from_usize_lossy(n).powf(-(T::one() - nu));
        rec.y1_ok = Some(min_pair_distance(points) >= threshold);
    }
    let micro = plan.comparisons.iter().any(|c| c.needs_microscopic());
    let (q, fields) = if micro {
        let setup = plan.microscopic.as_ref().expect("checked by the caller");
        let sol = solve_densities(points, &setup.potential, &setup.grid, plan.lambda, &plan.source, &setup.options)?;
        let cmp = charge_comparison(&sol, &plan.source)?;
        rec.identity_residual = Some(cmp.identity_residual.to_f64_lossy());
        rec.remainder_norm = Some(cmp.remainder.r_norm().to_f64_lossy());
        let diff: Vec<T> = sol.charges.iter().zip(&cmp.q.values).map(|(&x, &y)| x - y).collect();
        rec.hat_tilde_bound = Some(atom_norm_bound(&diff, plan.lambda).to_f64_lossy());
        (cmp.q.clone(), Some((sol, cmp)))
    } else {
        let q = solve_point_charges(points, a, plan.lambda, &plan.source, &plan.point_charge)
            .map_err(|e| AnalysisError::Microscopic(MicroscopicError::from(e)))?;
        (q, None)
    };
    for (slot, &c) in plan.comparisons.iter().enumerate() {
        let v = match c {
            Comparison::HatVsLimit => {
                let l = limit.expect("limit solved for limit comparisons");
                l.gram.distance_to_atoms(points, &q.values).value
            }
            Comparison::PointwiseCharge => {
                let l = limit.expect("limit solved for limit comparisons");
                let nf = T::from_usize_lossy(n);
                let ss = compensated_sum(points.iter().zip(&q.values).map(|(y, &qi)| {
                    let e = nf * qi - l.charge.q_at(y);
                    e * e
                }));
                (ss / nf).sqrt()
            }
            Comparison::ChargeGap => fields.as_ref().unwrap().1.q_difference,
            Comparison::MicroVsMonopole => {
                let (sol, _) = fields.as_ref().unwrap();
                l2_distance(&microscopic_field(sol, &plan.source), &monopole_field(sol, &plan.source))?.value
            }
            Comparison::MonopoleVsHat => {
                let (sol, _) = fields.as_ref().unwrap();
                let hat = assemble_point_field(&q, points, &plan.source)
                    .map_err(|e: PointChargeError| AnalysisError::Microscopic(e.into()))?;
                l2_distance(&monopole_field(sol, &plan.source), &hat)?.value
            }
        };
        rec.values[slot] = v.to_f64_lossy();
    }
    Ok(())
}

/// Prefactor of the second covariance term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceVariant {
    /// `(4πa)²‖ψ_g ψ_f‖²_W − 4πa (ψ_g, ψ_f)²_W`.
    Verbatim,
    /// `(4πa)² [‖ψ_g ψ_f‖²_W − (ψ_g, ψ_f)²_W]`.
    Symmetric,
}

impl CovarianceVariant {
    pub fn name(self) -> &'static str {
        match self {
            CovarianceVariant::Verbatim => "verbatim",
            CovarianceVariant::Symmetric => "symmetric",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "verbatim" => Some(Self::Verbatim),
            "symmetric" => Some(Self::Symmetric),
            _ => None,
        }
    }
}

/// Both covariance variants from effective solves for `f` and `g`, with
/// the `W`-weighted integrals done on `grid` (which must cover `supp W`).
pub fn theoretical_covariance<T: Real>(
    psi_f: &PartialWaveCharge<T>,
    psi_g: &PartialWaveCharge<T>,
    density: &DensitySpec<T>,
    grid: &Grid3D<T>,
) -> Result<(f64, f64), AnalysisError> {
    if psi_f.a != psi_g.a {
        return Err(AnalysisError::Mismatch("scattering lengths differ"));
    }
    if psi_f.lambda != psi_g.lambda {
        return Err(AnalysisError::Mismatch("lambda differs"));
    }
    if grid.radius < density.support_radius() * (T::one() - T::lit(1e-12)) {
        return Err(AnalysisError::Mismatch("grid does not cover the support of W"));
    }
    let a = psi_f.a;
    if a == T::zero() {
        return Ok((0.0, 0.0));
    }
    let terms: Vec<(T, T)> = (0..grid.len())
        .into_par_iter()
        .map(|m| {
            let x = &grid.nodes[m];
            let w = grid.weights[m] * density.density(x);
            let p = psi_f.psi_at(x) * psi_g.psi_at(x);
            (w * p * p, w * p)
        })
        .collect();
    let sq = compensated_sum(terms.iter().map(|t| t.0));
    let ip = compensated_sum(terms.iter().map(|t| t.1));
    let c = T::four_pi() * a;
    let verbatim = c * c * sq - c * ip * ip;
    let symmetric = c * c * (sq - ip * ip);
    Ok((verbatim.to_f64_lossy(), symmetric.to_f64_lossy()))
}

#[derive(Debug, Clone)]
pub struct FluctuationPlan<T> {
    pub n: usize,
    pub trials: usize,
    pub master_seed: u64,
    pub density: DensitySpec<T>,
    pub a: T,
    pub lambda: T,
    pub source: SourceSpec<T>,
    pub probe: SourceSpec<T>,
    pub point_charge: PointChargeOptions<T>,
    pub partial_wave: PartialWaveOptions<T>,
    /// `(n_radial, n_angular)` of the covariance quadrature over `supp W`.
    pub covariance_grid: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSummary {
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// Standard error of the mean.
    pub std_error: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Large-sample standard errors `√(6/n)` and `√(24/n)`.
    pub skewness_se: f64,
    pub kurtosis_se: f64,
    /// Two-sided 99% interval for the variance from the asymptotic law
    /// `Var(s²) ≈ (μ₄ − σ⁴)/n`, which does not assume normality.
    pub variance_ci99: (f64, f64),
}

pub fn moment_summary(x: &[f64]) -> MomentSummary {
    let n = x.len() as f64;
    let mean = compensated_sum(x.iter().copied()) / n;
    let m = |p: i32| compensated_sum(x.iter().map(|v| (v - mean).powi(p))) / n;
    let (m2, m3, m4) = (m(2), m(3), m(4));
    let variance = if x.len() > 1 { m2 * n / (n - 1.0) } else { 0.0 };
    let z99 = 2.575_829_303_548_901;
    let half = z99 * ((m4 - m2 * m2).max(0.0) / n).sqrt();
    MomentSummary {
        mean,
        variance,
        std_error: (variance / n).sqrt(),
        skewness: if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 },
        excess_kurtosis: if m2 > 0.0 { m4 / (m2 * m2) - 3.0 } else { 0.0 },
        skewness_se: (6.0 / n).sqrt(),
        kurtosis_se: (24.0 / n).sqrt(),
        variance_ci99: (variance - half, variance + half),
    }
}

/// Anderson–Darling normality test with mean and variance estimated from
/// the data (Stephens' modified statistic `A²(1 + 0.75/n + 2.25/n²)`).
#[derive(Debug, Clone, PartialEq)]
pub struct AndersonDarling {
    pub statistic: f64,
    /// `(significance, critical value)`.
    pub critical: Vec<(f64, f64)>,
    /// Smallest listed significance level at which normality is rejected.
    pub rejected_at: Option<f64>,
}

pub const AD_CRITICAL: [(f64, f64); 5] = [(0.15, 0.576), (0.10, 0.656), (0.05, 0.787), (0.025, 0.918), (0.01, 1.092)];

pub fn anderson_darling(x: &[f64]) -> AndersonDarling {
    let n = x.len();
    let s = moment_summary(x);
    let sd = s.variance.sqrt();
    let mut z: Vec<f64> = x.iter().map(|v| (v - s.mean) / sd).collect();
    z.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    let nf = n as f64;
    let sum = compensated_sum((0..n).map(|i| {
        let lo = normal.cdf(z[i]).max(f64::MIN_POSITIVE).ln();
        let hi = normal.sf(z[n - 1 - i]).max(f64::MIN_POSITIVE).ln();
        (2.0 * i as f64 + 1.0) * (lo + hi)
    }));
    let a2 = -nf - sum / nf;
    let statistic = a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    let rejected_at = AD_CRITICAL.iter().rev().find(|c| statistic > c.1).map(|c| c.0);
    AndersonDarling {
        statistic,
        critical: AD_CRITICAL.to_vec(),
        rejected_at,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceCheck {
    pub verbatim: f64,
    pub symmetric: f64,
    pub verbatim_inside: bool,
    pub symmetric_inside: bool,
}

#[derive(Debug, Clone)]
pub struct FluctuationSample {
    pub n: usize,
    pub eta: Vec<f64>,
    pub seeds: Vec<u64>,
    pub summary: MomentSummary,
    pub anderson_darling: AndersonDarling,
    /// `|mean| / std_error`.
    pub mean_z: f64,
    pub covariance: CovarianceCheck,
    pub failures: usize,
}

/// `η = √N (Σ_i q_i h_g(y_i) − ∫ h_g W q)` per trial, where `∫ h_g W q` is
/// the pairing of the partial-wave limit charge with the probe's channels.
pub fn fluctuation_sample<T: Real>(plan: &FluctuationPlan<T>) -> Result<FluctuationSample, AnalysisError> {
    if plan.trials == 0 || plan.n == 0 {
        return Err(AnalysisError::EmptyPlan);
    }
    let radius = plan.density.support_radius();
    let pw = &plan.partial_wave;
    let chan = |s: &SourceSpec<T>| ChannelSource::gaussian(s, radius, pw.tail_tol, pw.max_order);
    let qf = solve_partial_waves(&plan.density, plan.a, plan.lambda, chan(&plan.source), pw)?;
    let qg = solve_partial_waves(&plan.density, plan.a, plan.lambda, chan(&plan.probe), pw)?;
    let limit_term = qf.pair_with(&chan(&plan.probe));
    let grid = Grid3D::new(radius, plan.covariance_grid.0, plan.covariance_grid.1)
        .map_err(|_| AnalysisError::Mismatch("unsupported covariance grid"))?;
    let (verbatim, symmetric) = theoretical_covariance(&qf, &qg, &plan.density, &grid)?;
    let sqrt_n = T::from_usize_lossy(plan.n).sqrt();
    let draws: Vec<(u64, Result<f64, AnalysisError>)> = (0..plan.trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(plan.master_seed, plan.n, t);
            let eta = (|| {
                let cfg = sample_configuration(&plan.density, plan.n, seed)?;
                if plan.a == T::zero() {
                    return Ok(0.0);
                }
                let q = solve_point_charges(&cfg.points, plan.a, plan.lambda, &plan.source, &plan.point_charge)
                    .map_err(|e| AnalysisError::Microscopic(MicroscopicError::from(e)))?;
                let s = compensated_sum(cfg.points.iter().zip(&q.values).map(|(y, &qi)| qi * plan.probe.h(y)));
                Ok((sqrt_n * (s - limit_term)).to_f64_lossy())
            })();
            (seed, eta)
        })
        .collect();
    let failures = draws.iter().filter(|d| d.1.is_err()).count();
    let (seeds, eta): (Vec<u64>, Vec<f64>) = draws.into_iter().filter_map(|(s, e)| e.ok().map(|v| (s, v))).unzip();
    if eta.is_empty() {
        return Err(AnalysisError::EmptyPlan);
    }
    let summary = moment_summary(&eta);
    let inside = |v: f64| v >= summary.variance_ci99.0 && v <= summary.variance_ci99.1;
    let mean_z = if summary.std_error > 0.0 {
        summary.mean.abs() / summary.std_error
    } else {
        0.0
    };
    Ok(FluctuationSample {
        n: plan.n,
        anderson_darling: if summary.variance > 0.0 {
            anderson_darling(&eta)
        } else {
            AndersonDarling {
                statistic: 0.0,
                critical: AD_CRITICAL.to_vec(),
                rejected_at: None,
            }
        },
        eta,
        seeds,
        summary,
        mean_z,
        covariance: CovarianceCheck {
            verbatim,
            symmetric,
            verbatim_inside: inside(verbatim),
            symmetric_inside: inside(symmetric),
        },
        failures,
    })
}
