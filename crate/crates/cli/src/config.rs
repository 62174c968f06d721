//! Experiment configuration: TOML in, validated core types out.
//!
//! Every field has a default, so an empty file is a valid configuration.
//! Unknown keys are rejected at every level.

use crate::error::CliError;
use lorentz_core::analysis::{Comparison, CovarianceVariant};
use lorentz_core::effective::{EffectiveOptions, EffectiveSolver};
use lorentz_core::partialwave::PartialWaveOptions;
use lorentz_core::pointcharge::{ChargeSolver, PointChargeOptions};
use lorentz_core::potentials::{PotentialModel, PotentialShape, PotentialSpec};
use lorentz_core::quadrature::Grid3D;
use lorentz_core::randomfield::{DensityFamily, DensitySpec};
use lorentz_core::scattering::NystromOptions;
use lorentz_core::source::SourceSpec;
use lorentz_core::microscopic::MicroscopicOptions;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "defaults::lambda")]
    pub lambda: f64,
    #[serde(default = "defaults::n_values")]
    pub n_values: Vec<usize>,
    #[serde(default = "defaults::trials")]
    pub trials: usize,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    /// Scattering length for point-charge, AGHH and effective solves.
    /// Computed from the potential by the radial ODE when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub potential: PotentialConfig,
    #[serde(default)]
    pub density: DensityConfig,
    #[serde(default)]
    pub source: SourceConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<SourceConfig>,
    #[serde(default)]
    pub methods: MethodConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub regularity: RegularityConfig,
}

mod defaults {
    pub fn lambda() -> f64 {
        25.0
    }
    pub fn n_values() -> Vec<usize> {
        vec![64, 256, 1024]
    }
    pub fn trials() -> usize {
        10
    }
    pub fn seed() -> u64 {
        1
    }
    pub fn truncation() -> f64 {
        6.0
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialConfig {
    SquareWell {
        amplitude: f64,
        radius: f64,
    },
    Gaussian {
        amplitude: f64,
        width: f64,
        /// Truncation radius; six widths when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        support_radius: Option<f64>,
    },
    Tabulated {
        amplitude: f64,
        support_radius: f64,
        r: Vec<f64>,
        v: Vec<f64>,
    },
}

impl Default for PotentialConfig {
    fn default() -> Self {
        PotentialConfig::SquareWell {
            amplitude: 4.0,
            radius: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityConfig {
    UniformBall {
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        p: Option<f64>,
    },
    Gaussian {
        sigma: f64,
        #[serde(default = "defaults::truncation")]
        truncation: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        p: Option<f64>,
    },
    Tabulated {
        r: Vec<f64>,
        w: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        p: Option<f64>,
    },
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig::UniformBall { radius: 1.0, p: None }
    }
}

/// Manufactured source `h(x) = amplitude·exp(−|x − center|²/width²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub amplitude: f64,
    pub center: [f64; 3],
    pub width: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            center: [0.1, 0.0, -0.1],
            width: 0.6,
        }
    }
}

impl SourceConfig {
    pub fn default_probe() -> Self {
        Self {
            amplitude: -0.5,
            center: [0.0, 0.3, 0.2],
            width: 0.4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Pointcharge,
    Aghh,
    Microscopic,
    Effective,
}

impl SolveMethod {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pointcharge" => Some(Self::Pointcharge),
            "aghh" => Some(Self::Aghh),
            "microscopic" => Some(Self::Microscopic),
            "effective" => Some(Self::Effective),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    #[serde(default = "MethodConfig::default_solve")]
    pub solve: SolveMethod,
    /// Comparison names for `converge`: `hat_vs_limit`, `micro_vs_monopole`,
    /// `monopole_vs_hat`, `charge_gap`, `pointwise_charge`.
    #[serde(default = "MethodConfig::default_comparisons")]
    pub comparisons: Vec<String>,
    /// `verbatim` or `symmetric`; both are always computed, this one is
    /// headlined in the fluctuation summary.
    #[serde(default = "MethodConfig::default_variant")]
    pub covariance_variant: String,
    /// `direct` or `born`.
    #[serde(default = "MethodConfig::default_effective")]
    pub effective_solver: String,
    /// `auto`, `dense` or `iterative`.
    #[serde(default = "MethodConfig::default_charge_solver")]
    pub point_charge_solver: String,
}

impl MethodConfig {
    fn default_solve() -> SolveMethod {
        SolveMethod::Pointcharge
    }
    fn default_comparisons() -> Vec<String> {
        vec!["hat_vs_limit".into(), "pointwise_charge".into()]
    }
    fn default_variant() -> String {
        "verbatim".into()
    }
    fn default_effective() -> String {
        "direct".into()
    }
    fn default_charge_solver() -> String {
        "auto".into()
    }
}

impl Default for MethodConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty table is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsConfig {
    /// Reference grid of the potential (scattering and microscopic solves).
    pub nystrom_radial: usize,
    pub nystrom_angular: usize,
    pub resonance_threshold: f64,
    pub point_charge_dense_max: usize,
    pub point_charge_tol: f64,
    pub microscopic_tol: f64,
    pub microscopic_cap: usize,
    pub partial_wave_panels: usize,
    pub partial_wave_order: usize,
    /// Grid of the nodal effective solve (`solve --method effective`).
    pub effective_radial: usize,
    pub effective_angular: usize,
    pub effective_tol: f64,
    /// Quadrature over `supp W` for the covariance integrals.
    pub covariance_radial: usize,
    pub covariance_angular: usize,
    /// Point-interaction strength for `aghh`; `−1/(4πa)` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aghh_alpha: Option<f64>,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self {
            nystrom_radial: 16,
            nystrom_angular: 26,
            resonance_threshold: lorentz_core::scattering::RESONANCE_THRESHOLD,
            point_charge_dense_max: 256,
            point_charge_tol: 1e-12,
            microscopic_tol: 1e-12,
            microscopic_cap: 16_000,
            partial_wave_panels: 16,
            partial_wave_order: 16,
            effective_radial: 16,
            effective_angular: 50,
            effective_tol: 1e-13,
            covariance_radial: 24,
            covariance_angular: 128,
            aghh_alpha: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegularityConfig {
    /// Exponent of the minimum-distance condition; `ν*/2` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    pub xi: f64,
    /// Constant of the minimum-distance condition; calibrated when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    pub pilot_trials: usize,
    pub quantile: f64,
    /// Flag configurations violating the condition in `converge`.
    pub flag: bool,
}

impl Default for RegularityConfig {
    fn default() -> Self {
        Self {
            nu: None,
            xi: 0.5,
            c: None,
            pilot_trials: 100,
            quantile: 0.01,
            flag: true,
        }
    }
}

pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::validation(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::validation(msg()))
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check(self.lambda > 0.0 && self.lambda.is_finite(), || {
            format!("lambda must be positive (got {})", self.lambda)
        })?;
        check(!self.n_values.is_empty() && self.n_values.iter().all(|&n| n >= 1), || {
            "n_values must be a non-empty list of positive integers".into()
        })?;
        check(self.trials >= 1, || "trials must be at least 1".into())?;
        if let Some(a) = self.a {
            check(a.is_finite(), || "a must be finite".into())?;
        }
        self.potential_spec()?;
        self.density_spec()?;
        self.source_spec()?;
        self.probe_spec()?;
        self.comparisons()?;
        self.variant()?;
        self.effective_options()?;
        self.point_charge_options()?;
        self.reference_grid()?;
        self.covariance_grid()?;
        let n = &self.numerics;
        check(n.partial_wave_panels >= 1 && n.partial_wave_order >= 2, || {
            "partial-wave mesh needs at least one panel of order ≥ 2".into()
        })?;
        let r = &self.regularity;
        check(r.xi > 0.0 && r.xi <= 1.0, || format!("xi must lie in (0, 1] (got {})", r.xi))?;
        if let Some(nu) = r.nu {
            check(nu > 0.0 && nu < 1.0, || format!("nu must lie in (0, 1) (got {nu})"))?;
        }
        check(r.quantile > 0.0 && r.quantile < 1.0, || "quantile must lie in (0, 1)".into())?;
        check(r.pilot_trials >= 1, || "pilot_trials must be at least 1".into())?;
        Ok(())
    }

    pub fn potential_spec(&self) -> Result<PotentialSpec<f64>, CliError> {
        let spec = match &self.potential {
            PotentialConfig::SquareWell { amplitude, radius } => PotentialSpec::square_well(*amplitude, *radius),
            PotentialConfig::Gaussian {
                amplitude,
                width,
                support_radius,
            } => {
                let mut s = PotentialSpec::gaussian(*amplitude, *width);
                if let Some(r) = support_radius {
                    s.support_radius = *r;
                }
                s
            }
            PotentialConfig::Tabulated {
                amplitude,
                support_radius,
                r,
                v,
            } => PotentialSpec {
                shape: PotentialShape::Tabulated { r: r.clone(), v: v.clone() },
                amplitude: *amplitude,
                support_radius: *support_radius,
            },
        };
        PotentialModel::new(spec.clone()).map_err(|e| CliError::validation(format!("potential: {e}")))?;
        Ok(spec)
    }

    pub fn potential_model(&self) -> Result<PotentialModel<f64>, CliError> {
        PotentialModel::new(self.potential_spec()?).map_err(|e| CliError::validation(format!("potential: {e}")))
    }

    pub fn density_spec(&self) -> Result<DensitySpec<f64>, CliError> {
        let (family, p) = match &self.density {
            DensityConfig::UniformBall { radius, p } => (DensityFamily::UniformBall { radius: *radius }, *p),
            DensityConfig::Gaussian { sigma, truncation, p } => (
                DensityFamily::Gaussian {
                    sigma: *sigma,
                    truncation: *truncation,
                },
                *p,
            ),
            DensityConfig::Tabulated { r, w, p } => (DensityFamily::Tabulated { r: r.clone(), w: w.clone() }, *p),
        };
        DensitySpec::new(family, p).map_err(|e| CliError::validation(format!("density: {e}")))
    }

    fn make_source(&self, s: &SourceConfig, what: &str) -> Result<SourceSpec<f64>, CliError> {
        SourceSpec::new(s.amplitude, s.center, s.width, self.lambda).map_err(|e| CliError::validation(format!("{what}: {e}")))
    }

    pub fn source_spec(&self) -> Result<SourceSpec<f64>, CliError> {
        self.make_source(&self.source, "source")
    }

    pub fn probe_config(&self) -> SourceConfig {
        self.probe.clone().unwrap_or_else(SourceConfig::default_probe)
    }

    pub fn probe_spec(&self) -> Result<SourceSpec<f64>, CliError> {
        self.make_source(&self.probe_config(), "probe")
    }

    pub fn comparisons(&self) -> Result<Vec<Comparison>, CliError> {
        check(!self.methods.comparisons.is_empty(), || "methods.comparisons is empty".into())?;
        self.methods
            .comparisons
            .iter()
            .map(|s| Comparison::parse(s).ok_or_else(|| CliError::validation(format!("unknown comparison `{s}`"))))
            .collect()
    }

    pub fn variant(&self) -> Result<CovarianceVariant, CliError> {
        let s = &self.methods.covariance_variant;
        CovarianceVariant::parse(s).ok_or_else(|| CliError::validation(format!("unknown covariance variant `{s}`")))
    }

    pub fn effective_options(&self) -> Result<EffectiveOptions<f64>, CliError> {
        let solver = match self.methods.effective_solver.as_str() {
            "direct" => EffectiveSolver::Direct,
            "born" => EffectiveSolver::Born,
            s => return Err(CliError::validation(format!("unknown effective solver `{s}`"))),
        };
        Ok(EffectiveOptions {
            solver,
            tol: self.numerics.effective_tol,
            ..Default::default()
        })
    }

    pub fn point_charge_options(&self) -> Result<PointChargeOptions<f64>, CliError> {
        let solver = match self.methods.point_charge_solver.as_str() {
            "auto" => ChargeSolver::Auto,
            "dense" => ChargeSolver::Dense,
            "iterative" => ChargeSolver::Iterative,
            s => return Err(CliError::validation(format!("unknown point-charge solver `{s}`"))),
        };
        check(self.numerics.point_charge_tol > 0.0, || "point_charge_tol must be positive".into())?;
        Ok(PointChargeOptions {
            solver,
            dense_max: self.numerics.point_charge_dense_max,
            tol: self.numerics.point_charge_tol,
            norm_diagnostic: false,
        })
    }

    pub fn nystrom_options(&self) -> NystromOptions<f64> {
        NystromOptions {
            n_radial: self.numerics.nystrom_radial,
            n_angular: self.numerics.nystrom_angular,
            resonance_threshold: self.numerics.resonance_threshold,
            ..Default::default()
        }
    }

    pub fn microscopic_options(&self) -> MicroscopicOptions<f64> {
        MicroscopicOptions {
            resonance_threshold: self.numerics.resonance_threshold,
            tol: self.numerics.microscopic_tol,
            cap: self.numerics.microscopic_cap,
            ..Default::default()
        }
    }

    pub fn partial_wave_options(&self) -> PartialWaveOptions<f64> {
        PartialWaveOptions {
            panels: self.numerics.partial_wave_panels,
            order: self.numerics.partial_wave_order,
            ..Default::default()
        }
    }

    /// Reference grid of the potential.
    pub fn reference_grid(&self) -> Result<Grid3D<f64>, CliError> {
        let pot = self.potential_model()?;
        self.nystrom_options()
            .grid_for(&pot)
            .map_err(|e| CliError::validation(format!("numerics: {e}")))
    }

    pub fn effective_grid(&self) -> Result<Grid3D<f64>, CliError> {
        let w = self.density_spec()?;
        Grid3D::new(w.support_radius(), self.numerics.effective_radial, self.numerics.effective_angular)
            .map_err(|e| CliError::validation(format!("numerics: {e}")))
    }

    pub fn covariance_grid(&self) -> Result<(usize, usize), CliError> {
        let n = &self.numerics;
        Grid3D::new(1.0, n.covariance_radial, n.covariance_angular)
            .map_err(|e| CliError::validation(format!("numerics: {e}")))?;
        Ok((n.covariance_radial, n.covariance_angular))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}
