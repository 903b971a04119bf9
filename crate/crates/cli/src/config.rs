//! Experiment configuration: a TOML tree that round-trips losslessly and is
//! validated field by field before anything is solved.

use std::path::{Path, PathBuf};

use robinlab::curve::{AnnularDomain, StarCurve, TWO_PI};
use robinlab::error::{Error, Result};
use robinlab::metric::MetricTensor;
use robinlab::spectral::FourierSeries;
use serde::{Deserialize, Serialize};

/// Boundary data specification: a bare number or a Fourier list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Constant(f64),
    Fourier {
        #[serde(default)]
        a0: f64,
        #[serde(default)]
        cos: Vec<f64>,
        #[serde(default)]
        sin: Vec<f64>,
    },
}

impl FieldSpec {
    pub fn series(&self) -> FourierSeries {
        match self {
            FieldSpec::Constant(c) => FourierSeries::constant(*c),
            FieldSpec::Fourier { a0, cos, sin } => {
                let mut s = FourierSeries::constant(*a0);
                s.cos = cos.clone();
                s.sin = sin.clone();
                s
            }
        }
    }

    pub fn eval(&self, theta: f64) -> f64 {
        match self {
            FieldSpec::Constant(c) => *c,
            _ => self.series().eval(theta),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            FieldSpec::Constant(c) => *c == 0.0,
            FieldSpec::Fourier { a0, cos, sin } => {
                *a0 == 0.0 && cos.iter().all(|c| *c == 0.0) && sin.iter().all(|s| *s == 0.0)
            }
        }
    }

    fn extremes(&self) -> (f64, f64) {
        match self {
            FieldSpec::Constant(c) => (*c, *c),
            _ => {
                let s = self.series();
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for j in 0..1024 {
                    let v = s.eval(TWO_PI * j as f64 / 1024.0);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                (lo, hi)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeometryConfig {
    Circles {
        r0: f64,
        r1: f64,
    },
    Star {
        inner_base: f64,
        #[serde(default)]
        inner_cos: Vec<f64>,
        #[serde(default)]
        inner_sin: Vec<f64>,
        outer_base: f64,
        #[serde(default)]
        outer_cos: Vec<f64>,
        #[serde(default)]
        outer_sin: Vec<f64>,
    },
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig::Circles { r0: 1.0, r1: 2.0 }
    }
}

impl GeometryConfig {
    pub fn domain(&self) -> Result<AnnularDomain> {
        match self {
            GeometryConfig::Circles { r0, r1 } => AnnularDomain::circles(*r0, *r1)
                .map_err(|e| Error::InvalidArgument(format!("geometry: {e}"))),
            GeometryConfig::Star {
                inner_base,
                inner_cos,
                inner_sin,
                outer_base,
                outer_cos,
                outer_sin,
            } => {
                let inner = StarCurve::harmonics(*inner_base, inner_cos.clone(), inner_sin.clone())
                    .map_err(|e| Error::InvalidArgument(format!("geometry.inner: {e}")))?;
                let outer = StarCurve::harmonics(*outer_base, outer_cos.clone(), outer_sin.clone())
                    .map_err(|e| Error::InvalidArgument(format!("geometry.outer: {e}")))?;
                let margin = 0.05 * (outer_base - inner_base).abs().max(1e-6);
                AnnularDomain::new(inner, outer, margin)
                    .map_err(|e| Error::InvalidArgument(format!("geometry: {e}")))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricConfig {
    Identity,
    Constant { g: [[f64; 2]; 2] },
    SineConformal { amplitude: f64 },
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig::Identity
    }
}

impl MetricConfig {
    pub fn metric(&self) -> Result<MetricTensor> {
        match self {
            MetricConfig::Identity => Ok(MetricTensor::Identity),
            MetricConfig::Constant { g } => MetricTensor::constant(*g)
                .map_err(|e| Error::InvalidArgument(format!("metric.g: {e}"))),
            MetricConfig::SineConformal { amplitude } => MetricTensor::sine_conformal(*amplitude)
                .map_err(|e| Error::InvalidArgument(format!("metric.amplitude: {e}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    /// Constant volume source term.
    pub source: f64,
    pub q_s: FieldSpec,
    pub q_gamma: FieldSpec,
    pub flux_s: FieldSpec,
    pub flux_gamma: FieldSpec,
    pub kappa: f64,
    pub absorption: f64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            source: 0.0,
            q_s: FieldSpec::Constant(1.0),
            q_gamma: FieldSpec::Constant(1.0),
            flux_s: FieldSpec::Constant(0.0),
            flux_gamma: FieldSpec::Constant(1.0),
            kappa: 1.0,
            absorption: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscretizationConfig {
    pub n_radial: usize,
    pub n_angular: usize,
    /// Number of meshes solved by `forward`; level k doubles both counts k
    /// times.
    pub refinement_levels: usize,
    pub tol: f64,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        DiscretizationConfig {
            n_radial: 16,
            n_angular: 96,
            refinement_levels: 1,
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentParams {
    /// Eigenvalue cutoff for flux inversion and the Lipschitz check.
    pub lambda: f64,
    /// Mode orders for the singular value sweep.
    pub orders: Vec<usize>,
    /// Mode orders of the cos(N theta) family for the log-modulus fit.
    pub family_orders: Vec<usize>,
    pub eta: f64,
    /// Allow eta outside (0, 1/4); the fit is then flagged as diagnostic.
    pub eta_diagnostic: bool,
    pub noise_eps: f64,
    pub seed: u64,
    pub max_iterations: usize,
    /// Tikhonov weight for flux inversion.
    pub alpha: f64,
    /// Random draws for the Lipschitz check.
    pub samples: usize,
    /// Forward-map backend: "fem" or "spectral".
    pub backend: String,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        ExperimentParams {
            lambda: 4.0,
            orders: (0..=10).collect(),
            family_orders: (2..=12).collect(),
            eta: 0.125,
            eta_diagnostic: false,
            noise_eps: 0.0,
            seed: 7,
            max_iterations: 20,
            alpha: 0.0,
            samples: 40,
            backend: "fem".into(),
        }
    }
}

/// Where inversion data comes from: a measured file or a synthetic truth
/// solved on a deliberately different mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InversionConfig {
    pub data_file: Option<PathBuf>,
    /// True Robin coefficient for synthetic corrosion data.
    pub truth_q: Option<FieldSpec>,
    /// True inner flux for synthetic flux-inversion data.
    pub truth_flux: Option<FieldSpec>,
    pub synth_n_radial: usize,
    pub synth_n_angular: usize,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig {
            data_file: None,
            truth_q: None,
            truth_flux: None,
            synth_n_radial: 32,
            synth_n_angular: 192,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub geometry: GeometryConfig,
    pub metric: MetricConfig,
    pub problem: ProblemConfig,
    pub discretization: DiscretizationConfig,
    pub experiment: ExperimentParams,
    pub inversion: InversionConfig,
    pub output: OutputConfig,
}

/// The default configuration with every field spelled out. `defaults`
/// prints this; parsing it back yields `ExperimentConfig::default()`.
pub const DEFAULT_TOML: &str = r#"# robinlab experiment configuration

[geometry]
# "circles" takes r0 < r1; "star" takes inner/outer harmonic lists
# (base radius plus cos/sin coefficients of the radius function).
kind = "circles"
r0 = 1.0
r1 = 2.0

[metric]
# "identity", "constant" (with g = [[..,..],[..,..]]), or
# "sine_conformal" (with amplitude in (-1, 1)).
kind = "identity"

[problem]
# Constant volume source f.
source = 0.0
# Boundary fields are a bare constant or a Fourier list like
# { a0 = 0.5, cos = [0.0, 0.3], sin = [] } meaning 0.5 + 0.3 cos(2 theta).
q_s = 1.0
q_gamma = 1.0
flux_s = 0.0
flux_gamma = 1.0
# Upper bound of the coefficient class; q must stay within [0, kappa].
kappa = 1.0
# Constant absorption; a coercivity fallback when q vanishes.
absorption = 0.0

[discretization]
n_radial = 16
n_angular = 96
# Meshes solved by `forward`; each level doubles both counts.
refinement_levels = 1
# Linear solver tolerance, within [1e-14, 1e-6].
tol = 1e-12

[experiment]
# Eigenvalue cutoff defining the band W_lambda.
lambda = 4.0
# Mode orders for the singular value sweep.
orders = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10]
# cos(N theta) family for the log-modulus fit.
family_orders = [2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12]
# Modulus exponent, inside (0, 1/4) unless eta_diagnostic = true.
eta = 0.125
eta_diagnostic = false
# Relative noise level on synthetic Cauchy data.
noise_eps = 0.0
seed = 7
max_iterations = 20
# Tikhonov weight for flux inversion.
alpha = 0.0
# Random draws for the Lipschitz check.
samples = 40
# Forward-map backend: "fem" or "spectral" (spectral needs circles and
# constant coefficients).
backend = "fem"

[inversion]
# Either point data_file at a Cauchy CSV, or describe the synthetic truth.
# truth_q = { a0 = 0.5, cos = [0.0, 0.3] }
# truth_flux = 1.0
# Synthesis mesh; must differ from [discretization] to avoid the inverse
# crime.
synth_n_radial = 32
synth_n_angular = 192

[output]
dir = "out"
"#;

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Field-precise validation of every physical precondition, run before
    /// any computation.
    pub fn validate(&self) -> Result<()> {
        self.geometry.domain()?;
        self.metric.metric()?;

        let p = &self.problem;
        let (q_s_min, q_s_max) = p.q_s.extremes();
        if q_s_min < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "problem.q_s: must be nonnegative (min value {q_s_min:.6})"
            )));
        }
        let (q_g_min, q_g_max) = p.q_gamma.extremes();
        if q_g_min < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "problem.q_gamma: must be nonnegative (min value {q_g_min:.6})"
            )));
        }
        if !(p.kappa > 0.0) || !p.kappa.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "problem.kappa: must be positive, got {}",
                p.kappa
            )));
        }
        let sup_q = q_s_max.max(q_g_max);
        if sup_q > p.kappa * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "problem.kappa: coefficient exceeds the cap ({sup_q:.6} > {})",
                p.kappa
            )));
        }
        if p.absorption < 0.0 || !p.absorption.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "problem.absorption: must be nonnegative, got {}",
                p.absorption
            )));
        }
        if !p.source.is_finite() {
            return Err(Error::InvalidArgument("problem.source: must be finite".into()));
        }

        let d = &self.discretization;
        if d.n_radial < 2 {
            return Err(Error::InvalidArgument(format!(
                "discretization.n_radial: must be at least 2, got {}",
                d.n_radial
            )));
        }
        if d.n_angular < 8 {
            return Err(Error::InvalidArgument(format!(
                "discretization.n_angular: must be at least 8, got {}",
                d.n_angular
            )));
        }
        if d.refinement_levels < 1 {
            return Err(Error::InvalidArgument(
                "discretization.refinement_levels: must be at least 1".into(),
            ));
        }
        if !(d.tol >= 1e-14 && d.tol <= 1e-6) {
            return Err(Error::InvalidArgument(format!(
                "discretization.tol: must lie in [1e-14, 1e-6], got {:e}",
                d.tol
            )));
        }

        let e = &self.experiment;
        if !(e.lambda > 0.0) || !e.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "experiment.lambda: must be positive, got {}",
                e.lambda
            )));
        }
        if e.orders.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "experiment.orders: must be strictly increasing".into(),
            ));
        }
        if e.family_orders.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "experiment.family_orders: must be strictly increasing".into(),
            ));
        }
        if e.eta_diagnostic {
            if !(e.eta > 0.0 && e.eta < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "experiment.eta: diagnostic mode needs eta in (0, 1), got {}",
                    e.eta
                )));
            }
        } else if !(e.eta > 0.0 && e.eta < 0.25) {
            return Err(Error::InvalidArgument(format!(
                "experiment.eta: must lie in (0, 1/4), got {}",
                e.eta
            )));
        }
        if e.noise_eps < 0.0 || !e.noise_eps.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "experiment.noise_eps: must be nonnegative, got {}",
                e.noise_eps
            )));
        }
        if e.max_iterations == 0 {
            return Err(Error::InvalidArgument(
                "experiment.max_iterations: must be at least 1".into(),
            ));
        }
        if e.alpha < 0.0 || !e.alpha.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "experiment.alpha: must be nonnegative, got {}",
                e.alpha
            )));
        }
        if e.samples == 0 {
            return Err(Error::InvalidArgument("experiment.samples: must be at least 1".into()));
        }
        match e.backend.as_str() {
            "fem" | "spectral" => {}
            other => {
                return Err(Error::InvalidArgument(format!(
                    "experiment.backend: must be \"fem\" or \"spectral\", got \"{other}\""
                )))
            }
        }

        let inv = &self.inversion;
        if inv.data_file.is_some() && (inv.truth_q.is_some() || inv.truth_flux.is_some()) {
            return Err(Error::InvalidArgument(
                "inversion: give either data_file or a synthetic truth, not both".into(),
            ));
        }
        if inv.synth_n_radial < 2 || inv.synth_n_angular < 8 {
            return Err(Error::InvalidArgument(
                "inversion: synthesis mesh must have n_radial >= 2 and n_angular >= 8".into(),
            ));
        }
        let synthetic = inv.data_file.is_none() && (inv.truth_q.is_some() || inv.truth_flux.is_some());
        if synthetic
            && inv.synth_n_radial == d.n_radial
            && inv.synth_n_angular == d.n_angular
        {
            return Err(Error::InvalidArgument(
                "inversion: synthesis mesh equals the inversion mesh, which makes the \
                 reconstruction an inverse crime; choose a different synth_n_radial or \
                 synth_n_angular"
                    .into(),
            ));
        }
        if let Some(tq) = &inv.truth_q {
            let (lo, hi) = tq.extremes();
            if lo < 0.0 || hi > p.kappa * (1.0 + 1e-12) {
                return Err(Error::InvalidArgument(format!(
                    "inversion.truth_q: must stay within [0, kappa]; range [{lo:.6}, {hi:.6}]"
                )));
            }
        }
        Ok(())
    }
}
