//! JSON experiment configs: a versioned envelope, one schema per
//! subcommand, and schema errors reported with JSON-pointer paths.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use deloc_core::asymptotics::ObservableSpec;
use deloc_core::graph::InteractionGraph;
use deloc_core::potentials::{
    tridiagonal_example, GaussianPotential, LambdaSpec, LatticePerturbedPotential, Potential,
    ProductPotential, RotatedMixturePotential,
};

/// The only config schema this binary reads.
pub const SCHEMA_VERSION: u64 = 1;

/// Experiment kinds accepted in the `experiment` field, in subcommand order.
pub const KNOWN_KINDS: [&str; 6] = [
    "bias_scan",
    "negative_example",
    "theory_bounds",
    "coupling_estimate",
    "run_chain",
    "asymptotic_check",
];

/// CLI failure split by exit code: config errors exit 2, runtime errors 1.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

/// One validated experiment config, tagged by the `experiment` field.
#[derive(Debug, Clone)]
pub enum ExperimentConfig {
    BiasScan(BiasScanConfig),
    NegativeExample(NegativeExampleConfig),
    TheoryBounds(TheoryBoundsConfig),
    CouplingEstimate(CouplingEstimateConfig),
    RunChain(RunChainConfig),
    AsymptoticCheck(AsymptoticCheckConfig),
}

impl ExperimentConfig {
    /// The `experiment` tag this config was parsed from.
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentConfig::BiasScan(_) => "bias_scan",
            ExperimentConfig::NegativeExample(_) => "negative_example",
            ExperimentConfig::TheoryBounds(_) => "theory_bounds",
            ExperimentConfig::CouplingEstimate(_) => "coupling_estimate",
            ExperimentConfig::RunChain(_) => "run_chain",
            ExperimentConfig::AsymptoticCheck(_) => "asymptotic_check",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ExperimentConfig::BiasScan(c) => c.seed,
            ExperimentConfig::NegativeExample(c) => c.seed,
            ExperimentConfig::TheoryBounds(c) => c.seed,
            ExperimentConfig::CouplingEstimate(c) => c.seed,
            ExperimentConfig::RunChain(c) => c.seed,
            ExperimentConfig::AsymptoticCheck(c) => c.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            ExperimentConfig::BiasScan(c) => c.seed = seed,
            ExperimentConfig::NegativeExample(c) => c.seed = seed,
            ExperimentConfig::TheoryBounds(c) => c.seed = seed,
            ExperimentConfig::CouplingEstimate(c) => c.seed = seed,
            ExperimentConfig::RunChain(c) => c.seed = seed,
            ExperimentConfig::AsymptoticCheck(c) => c.seed = seed,
        }
    }

    pub fn out_dir(&self) -> Option<&str> {
        let o = match self {
            ExperimentConfig::BiasScan(c) => &c.out_dir,
            ExperimentConfig::NegativeExample(c) => &c.out_dir,
            ExperimentConfig::TheoryBounds(c) => &c.out_dir,
            ExperimentConfig::CouplingEstimate(c) => &c.out_dir,
            ExperimentConfig::RunChain(c) => &c.out_dir,
            ExperimentConfig::AsymptoticCheck(c) => &c.out_dir,
        };
        o.as_deref()
    }

    /// Config echo for `summary.json`: the envelope fields restored around
    /// the variant body.
    pub fn echo(&self) -> Value {
        let body = match self {
            ExperimentConfig::BiasScan(c) => serde_json::to_value(c),
            ExperimentConfig::NegativeExample(c) => serde_json::to_value(c),
            ExperimentConfig::TheoryBounds(c) => serde_json::to_value(c),
            ExperimentConfig::CouplingEstimate(c) => serde_json::to_value(c),
            ExperimentConfig::RunChain(c) => serde_json::to_value(c),
            ExperimentConfig::AsymptoticCheck(c) => serde_json::to_value(c),
        };
        let mut body = body.expect("config types serialize");
        let obj = body.as_object_mut().expect("config body is an object");
        obj.insert("schema_version".into(), SCHEMA_VERSION.into());
        obj.insert("experiment".into(), self.kind().into());
        body
    }
}

pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
    let mut value: Value = serde_json::from_str(text)
        .map_err(|e| CliError::Config(format!("invalid JSON: {e}")))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| CliError::Config("at /: config must be a JSON object".into()))?;
    match obj.get("schema_version").and_then(Value::as_u64) {
        Some(SCHEMA_VERSION) => {}
        Some(v) => {
            return Err(CliError::Config(format!(
                "at /schema_version: unsupported version {v} (this binary reads {SCHEMA_VERSION})"
            )))
        }
        None => {
            return Err(CliError::Config(format!(
                "at /schema_version: missing or non-integer (expected {SCHEMA_VERSION})"
            )))
        }
    }
    obj.remove("schema_version");
    let kind = match obj.get("experiment").and_then(Value::as_str) {
        Some(k) => k.to_string(),
        None => {
            return Err(CliError::Config(
                "at /experiment: missing or non-string experiment kind".into(),
            ))
        }
    };
    obj.remove("experiment");
    match kind.as_str() {
        "bias_scan" => Ok(ExperimentConfig::BiasScan(from_value(value)?)),
        "negative_example" => Ok(ExperimentConfig::NegativeExample(from_value(value)?)),
        "theory_bounds" => Ok(ExperimentConfig::TheoryBounds(from_value(value)?)),
        "coupling_estimate" => Ok(ExperimentConfig::CouplingEstimate(from_value(value)?)),
        "run_chain" => Ok(ExperimentConfig::RunChain(from_value(value)?)),
        "asymptotic_check" => Ok(ExperimentConfig::AsymptoticCheck(from_value(value)?)),
        other => Err(CliError::Config(format!(
            "at /experiment: unknown experiment kind {other:?} (expected one of {KNOWN_KINDS:?})"
        ))),
    }
}

/// Deserializes with the field path of the first violation rendered as a
/// JSON pointer.
fn from_value<T: DeserializeOwned>(value: Value) -> Result<T, CliError> {
    let result: Result<T, _> = serde_path_to_error::deserialize(value);
    result.map_err(|e| {
        let path = e.path().to_string();
        let pointer = if path == "." {
            String::new()
        } else {
            format!("/{}", path.replace('.', "/"))
        };
        CliError::Config(format!("at {pointer:?}: {}", e.inner()))
    })
}

fn default_one() -> f64 {
    1.0
}

/// Target-family selector shared by several configs. The `d` field is the
/// dimension; sweep experiments replace it per point via
/// [`PotentialSpec::with_dim`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// Isotropic Gaussian with precision `curvature * I`.
    GaussianIdentity {
        d: usize,
        #[serde(default = "default_one")]
        curvature: f64,
    },
    /// Centered Gaussian with the given diagonal precision (`d` = length).
    GaussianDiagonal { diag: Vec<f64> },
    /// Massive free field on a path: precision `lam * I + Laplacian`.
    GaussianFreeField { d: usize, lam: f64 },
    /// Path-coupled sites, each with an optional quartic self-term of
    /// curvature amplitude `quartic` (zero selects the pure Gaussian site).
    LatticeQuartic {
        d: usize,
        alpha: f64,
        #[serde(default)]
        quartic: f64,
    },
    /// Independent standard Gaussian coordinates.
    ProductGaussian { d: usize },
    /// `n_mix` leading two-component mixture coordinates, standard Gaussian
    /// elsewhere.
    PerturbedGaussian {
        d: usize,
        n_mix: usize,
        p: f64,
        mu1: f64,
        mu2: f64,
    },
    /// I.i.d. two-component mixtures conjugated by the dense Householder
    /// rotation (the concentrated-bias counterexample).
    RotatedMixture {
        d: usize,
        p: f64,
        mu1: f64,
        mu2: f64,
    },
}

/// A built target, keeping the concrete type available for exact routes.
pub enum BuiltPotential {
    Gaussian(GaussianPotential),
    Lattice(LatticePerturbedPotential),
    Product(ProductPotential),
    Rotated(RotatedMixturePotential),
}

impl BuiltPotential {
    pub fn as_dyn(&self) -> &dyn Potential {
        match self {
            BuiltPotential::Gaussian(p) => p,
            BuiltPotential::Lattice(p) => p,
            BuiltPotential::Product(p) => p,
            BuiltPotential::Rotated(p) => p,
        }
    }

    pub fn as_gaussian(&self) -> Option<&GaussianPotential> {
        match self {
            BuiltPotential::Gaussian(p) => Some(p),
            _ => None,
        }
    }
}

impl PotentialSpec {
    pub fn dim(&self) -> usize {
        match self {
            PotentialSpec::GaussianIdentity { d, .. }
            | PotentialSpec::GaussianFreeField { d, .. }
            | PotentialSpec::LatticeQuartic { d, .. }
            | PotentialSpec::ProductGaussian { d }
            | PotentialSpec::PerturbedGaussian { d, .. }
            | PotentialSpec::RotatedMixture { d, .. } => *d,
            PotentialSpec::GaussianDiagonal { diag } => diag.len(),
        }
    }

    /// The same family at dimension `d`; families without a free dimension
    /// reject the sweep.
    pub fn with_dim(&self, d: usize) -> Result<PotentialSpec, CliError> {
        let mut out = self.clone();
        match &mut out {
            PotentialSpec::GaussianIdentity { d: slot, .. }
            | PotentialSpec::GaussianFreeField { d: slot, .. }
            | PotentialSpec::LatticeQuartic { d: slot, .. }
            | PotentialSpec::ProductGaussian { d: slot }
            | PotentialSpec::PerturbedGaussian { d: slot, .. }
            | PotentialSpec::RotatedMixture { d: slot, .. } => *slot = d,
            PotentialSpec::GaussianDiagonal { .. } => {
                return Err(CliError::Config(
                    "at /potential/family: gaussian_diagonal fixes the dimension and cannot be swept"
                        .into(),
                ))
            }
        }
        Ok(out)
    }

    pub fn build(&self) -> Result<BuiltPotential, CliError> {
        let cfg_err = |e: &dyn fmt::Display| CliError::Config(format!("at /potential: {e}"));
        match self {
            PotentialSpec::GaussianIdentity { d, curvature } => {
                GaussianPotential::scaled_identity(*d, *curvature)
                    .map(BuiltPotential::Gaussian)
                    .map_err(|e| cfg_err(&e))
            }
            PotentialSpec::GaussianDiagonal { diag } => {
                GaussianPotential::diagonal(vec![0.0; diag.len()], diag.clone())
                    .map(BuiltPotential::Gaussian)
                    .map_err(|e| cfg_err(&e))
            }
            PotentialSpec::GaussianFreeField { d, lam } => GaussianPotential::free_field(*d, *lam)
                .map(BuiltPotential::Gaussian)
                .map_err(|e| cfg_err(&e)),
            PotentialSpec::LatticeQuartic { d, alpha, quartic } => {
                let spec = if *quartic == 0.0 {
                    LambdaSpec::Constant { alpha: *alpha }
                } else {
                    LambdaSpec::QuarticVar {
                        alpha: *alpha,
                        c: *quartic,
                    }
                };
                tridiagonal_example(*d, spec)
                    .map(BuiltPotential::Lattice)
                    .map_err(|e| cfg_err(&e))
            }
            PotentialSpec::ProductGaussian { d } => {
                if *d == 0 {
                    return Err(CliError::Config("at /potential/d: d must be >= 1".into()));
                }
                Ok(BuiltPotential::Product(ProductPotential::standard_gaussian(
                    *d,
                )))
            }
            PotentialSpec::PerturbedGaussian {
                d,
                n_mix,
                p,
                mu1,
                mu2,
            } => ProductPotential::perturbed_gaussian(*d, *n_mix, *p, *mu1, *mu2)
                .map(BuiltPotential::Product)
                .map_err(|e| cfg_err(&e)),
            PotentialSpec::RotatedMixture { d, p, mu1, mu2 } => {
                RotatedMixturePotential::new(*d, *p, *mu1, *mu2)
                    .map(BuiltPotential::Rotated)
                    .map_err(|e| cfg_err(&e))
            }
        }
    }

    /// Short label for summaries, e.g. `gaussian_free_field(d=64)`.
    pub fn label(&self) -> String {
        let name = match self {
            PotentialSpec::GaussianIdentity { .. } => "gaussian_identity",
            PotentialSpec::GaussianDiagonal { .. } => "gaussian_diagonal",
            PotentialSpec::GaussianFreeField { .. } => "gaussian_free_field",
            PotentialSpec::LatticeQuartic { .. } => "lattice_quartic",
            PotentialSpec::ProductGaussian { .. } => "product_gaussian",
            PotentialSpec::PerturbedGaussian { .. } => "perturbed_gaussian",
            PotentialSpec::RotatedMixture { .. } => "rotated_mixture",
        };
        format!("{name}(d={})", self.dim())
    }
}

/// Interaction-graph selector for the bound evaluators.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    Path { d: usize },
    Complete { d: usize },
    Lattice2d { nx: usize, ny: usize },
    Edges { d: usize, edges: Vec<(usize, usize)> },
}

impl GraphSpec {
    pub fn build(&self) -> Result<InteractionGraph, CliError> {
        match self {
            GraphSpec::Path { d } => Ok(InteractionGraph::path(*d)),
            GraphSpec::Complete { d } => Ok(InteractionGraph::complete(*d)),
            GraphSpec::Lattice2d { nx, ny } => Ok(InteractionGraph::lattice_2d(*nx, *ny)),
            GraphSpec::Edges { d, edges } => InteractionGraph::from_edges(*d, edges)
                .map_err(|e| CliError::Config(format!("at /graph/edges: {e}"))),
        }
    }
}

/// Reference sampler selector for expectations under the target.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSpec {
    /// Exact sampling: the Gaussian eigenbasis route or the product-measure
    /// route, depending on the target family.
    Exact,
    /// Metropolis-adjusted chain at step `h`.
    Mala { h: f64 },
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        ReferenceSpec::Exact
    }
}

/// Coupling reference selector.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CouplingReferenceSpec {
    /// Exact stationary transition in the precision eigenbasis (Gaussian
    /// targets only).
    ExactGaussian,
    /// Unadjusted chain at step `h / substeps` on the shared noise path.
    FineUla { substeps: usize },
}

/// Start-point selector for the propagator trials.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PointModeSpec {
    Stationary,
    Random { spread: f64 },
}

/// `run-chain`: one (possibly multi-chain) sampler run with moment
/// summaries per coordinate.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunChainConfig {
    pub potential: PotentialSpec,
    /// `ula` (unadjusted) or `mala` (Metropolis-adjusted).
    #[serde(default)]
    pub algorithm: Algorithm,
    pub h: f64,
    pub n_steps: usize,
    /// Defaults to the contraction-based burn-in, floored at 10^4.
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default = "default_chains")]
    pub n_chains: usize,
    /// Accumulate the full empirical covariance (small dimensions only).
    #[serde(default)]
    pub track_covariance: bool,
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Ula,
    Mala,
}

impl Default for Algorithm {
    fn default() -> Self {
        Algorithm::Ula
    }
}

fn default_chains() -> usize {
    1
}

/// `coupling-estimate`: synchronous-coupling gap moments for one
/// configuration, plus the exact-sampler distance bracket on Gaussians.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingEstimateConfig {
    pub potential: PotentialSpec,
    pub h: f64,
    pub n_steps: usize,
    #[serde(default)]
    pub burn_in: Option<usize>,
    pub reference: CouplingReferenceSpec,
    #[serde(default = "default_one_usize")]
    pub gap_stride: usize,
    /// Exact-sampler draws per side for the marginal lower bound; zero
    /// skips the bracket (non-Gaussian targets always skip it).
    #[serde(default)]
    pub n_lower_samples: usize,
    /// Monte Carlo draws for the matrix-root coupling upper bound.
    #[serde(default = "default_upper_mc")]
    pub n_upper_mc: usize,
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<String>,
}

fn default_one_usize() -> usize {
    1
}

fn default_upper_mc() -> usize {
    100_000
}

/// `theory-bounds`: multi-step bias bound with envelope branches, the
/// feasibility curve over `N`, and an optional propagator check.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryBoundsConfig {
    pub graph: GraphSpec,
    pub alpha: f64,
    pub beta: f64,
    pub h: f64,
    /// Evaluate the bound at this fixed step count; when absent the bound
    /// is optimized over all step counts up to the search cap.
    #[serde(default)]
    pub n_steps: Option<usize>,
    /// Known value of `E|grad V|_inf^2`; the certified bound is used when
    /// absent.
    #[serde(default)]
    pub grad_inf_sq: Option<f64>,
    #[serde(default)]
    pub propagator: Option<PropagatorSpec>,
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<String>,
}

/// Optional propagator-bound check attached to `theory-bounds`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagatorSpec {
    pub potential: PotentialSpec,
    pub n_steps: usize,
    pub n_trials: usize,
    pub mode: PointModeSpec,
}

/// `bias-scan`: the delocalization scan over dimensions and step sizes,
/// with coupling brackets and theory bounds per point.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasScanConfig {
    /// Family template; its `d` is replaced by each entry of `d_list`.
    pub potential: PotentialSpec,
    pub d_list: Vec<usize>,
    pub h_list: Vec<f64>,
    /// Retained coupling steps per point.
    pub n_steps: usize,
    /// Defaults to `ceil(20 / (alpha h))`: the coupled pair starts at gap
    /// zero, so only the gap itself needs to relax.
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default = "default_one_usize")]
    pub gap_stride: usize,
    /// Monte Carlo draws for the Gaussian coupling upper bound.
    #[serde(default = "default_upper_mc")]
    pub n_upper_mc: usize,
    /// Non-Gaussian families: reference-sampler draws per point for the
    /// sampled lower bracket.
    #[serde(default = "default_lower_samples")]
    pub n_lower_samples: usize,
    /// Non-Gaussian families: thinning stride for reference and chain
    /// samples.
    #[serde(default = "default_thin")]
    pub thin: usize,
    /// Non-Gaussian families: fine-chain substeps for the coupling
    /// reference.
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<String>,
}

fn default_lower_samples() -> usize {
    50_000
}

fn default_thin() -> usize {
    5
}

fn default_substeps() -> usize {
    50
}

/// `negative-example`: rotated-mixture concentration; first-coordinate
/// bias against `sqrt(d) * delta` with `delta` from a one-dimensional run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NegativeExampleConfig {
    pub p: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub h: f64,
    pub d_list: Vec<usize>,
    /// Retained steps for the one-dimensional delta run.
    pub n_steps_delta: usize,
    /// Retained steps per rotated run; `n_steps_per_d` overrides per entry.
    pub n_steps: usize,
    #[serde(default)]
    pub n_steps_per_d: Option<Vec<usize>>,
    #[serde(default)]
    pub burn_in: Option<usize>,
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<String>,
}

/// `asymptotic-check`: first-order slope formulas, the empirical
/// step-size regression, catalog pair agreement, and the perturbation-size
/// scaling, each section optional.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsymptoticCheckConfig {
    #[serde(default)]
    pub slopes: Option<SlopesSpec>,
    /// Step-size regression for the same potential and observable as
    /// `slopes` (which must then be present).
    #[serde(default)]
    pub empirical: Option<EmpiricalSpec>,
    #[serde(default)]
    pub catalog: Option<Vec<CatalogPairSpec>>,
    #[serde(default)]
    pub sqrt_k: Option<SqrtKSpec>,
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<String>,
}

/// Both integral-form slope estimators on one (potential, observable) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlopesSpec {
    pub potential: PotentialSpec,
    pub observable: ObservableSpec,
    pub n_mc: usize,
    #[serde(default)]
    pub reference: ReferenceSpec,
}

/// Bias-vs-step regression settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmpiricalSpec {
    pub h_grid: Vec<f64>,
    pub n_retained: usize,
    #[serde(default = "default_chains")]
    pub n_chains: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    /// Reference draws for the target-side expectation.
    pub n_ref: usize,
    #[serde(default)]
    pub burn_in: Option<usize>,
}

/// One catalog (potential, observable) pair for the two-formula agreement
/// table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogPairSpec {
    pub potential: PotentialSpec,
    pub observable: ObservableSpec,
    pub n_mc: usize,
    #[serde(default)]
    pub reference: ReferenceSpec,
}

/// Perturbation-size scaling: slope of the coordinate-sum bias versus the
/// number of summed coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SqrtKSpec {
    pub d_list: Vec<usize>,
    pub k_grid: Vec<usize>,
    pub h: f64,
    pub n_mc: usize,
    /// Mixture-block parameters of the perturbed product target.
    pub n_mix: usize,
    pub p: f64,
    pub mu1: f64,
    pub mu2: f64,
}
