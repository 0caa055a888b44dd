//! Run configuration: a JSON document with nested blocks; unknown keys are rejected.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use blowuplab::ansatz::Background;
use blowuplab::bubble_tree::{BubbleSpec, CenterPath, ConfigurationSequence};
use blowuplab::estimate_verifier::VerifierOptions;
use blowuplab::euclidean_bubble::Profile;
use blowuplab::fixed_point::FixedPointConfig;
use blowuplab::linear_solver::{SolverOptions, DEFAULT_MIN_RESOLVED_SPACINGS};
use blowuplab::manifold::{DiscreteManifold, Field, GreenOptions, Torus};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifold: ManifoldBlock,
    pub bubbles: Vec<BubbleBlock>,
    #[serde(default)]
    pub background: BackgroundBlock,
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub structure_floor: f64,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub reduction: ReductionBlock,
    #[serde(default)]
    pub verify: VerifyBlock,
    /// Right-hand side for `solve-linear`.
    #[serde(default)]
    pub rhs: Option<String>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldBlock {
    pub n: usize,
    #[serde(rename = "N")]
    pub points: usize,
    #[serde(rename = "L")]
    pub period: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BubbleBlock {
    pub center: CenterBlock,
    pub scale_constant: f64,
    pub rate: f64,
    #[serde(default)]
    pub profile: ProfileName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CenterBlock {
    Fixed(Vec<f64>),
    Drift { origin: Vec<f64>, velocity: Vec<f64> },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileName {
    #[default]
    Standard,
    Negative,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSource {
    Zero,
    Constant(f64),
    /// JSON array of grid values in row-major order, relative to the config file.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundBlock {
    #[serde(default = "zero_source")]
    pub u0: FieldSource,
    #[serde(default = "unit_source")]
    pub h: FieldSource,
    /// `h_α = h + a/α`.
    #[serde(default)]
    pub h_alpha_amplitude: f64,
}

fn zero_source() -> FieldSource {
    FieldSource::Zero
}

fn unit_source() -> FieldSource {
    FieldSource::Constant(1.0)
}

impl Default for BackgroundBlock {
    fn default() -> Self {
        Self { u0: zero_source(), h: unit_source(), h_alpha_amplitude: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverBlock {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub min_resolved_spacings: f64,
}

impl Default for SolverBlock {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self { tolerance: d.tolerance, max_iterations: d.max_iterations, min_resolved_spacings: DEFAULT_MIN_RESOLVED_SPACINGS }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReductionBlock {
    pub max_picard: usize,
    pub star_tolerance: f64,
    pub solver_tolerance: f64,
    pub contraction_limit: f64,
    pub tau: Option<f64>,
    pub nu: Option<f64>,
    pub s_budget: Option<f64>,
}

impl Default for ReductionBlock {
    fn default() -> Self {
        let d = FixedPointConfig::default();
        Self {
            max_picard: d.max_picard,
            star_tolerance: d.star_tolerance,
            solver_tolerance: d.solver.tolerance,
            contraction_limit: d.contraction_limit,
            tau: d.tau,
            nu: d.nu,
            s_budget: d.s_budget,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyBlock {
    /// Estimate ids; empty means all.
    pub estimates: Vec<String>,
    pub core_cells: f64,
    pub random_samples: usize,
    pub ceiling: f64,
    pub tau: Option<f64>,
    pub decbulle_delta: Option<f64>,
}

impl Default for VerifyBlock {
    fn default() -> Self {
        let d = VerifierOptions::default();
        Self {
            estimates: Vec::new(),
            core_cells: d.core_cells,
            random_samples: d.random_samples,
            ceiling: d.ceiling,
            tau: d.tau,
            decbulle_delta: d.decbulle_delta,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tolerance: self.solver.tolerance,
            max_iterations: self.solver.max_iterations,
            seed: self.seed,
            min_resolved_spacings: self.solver.min_resolved_spacings,
        }
    }

    pub fn fixed_point_config(&self) -> FixedPointConfig {
        let r = &self.reduction;
        FixedPointConfig {
            tau: r.tau,
            nu: r.nu,
            s_budget: r.s_budget,
            max_picard: r.max_picard,
            star_tolerance: r.star_tolerance,
            contraction_limit: r.contraction_limit,
            solver: SolverOptions { tolerance: r.solver_tolerance, ..self.solver_options() },
        }
    }

    pub fn verifier_options(&self) -> VerifierOptions {
        let v = &self.verify;
        VerifierOptions {
            core_cells: v.core_cells,
            random_samples: v.random_samples,
            seed: self.seed.unwrap_or(VerifierOptions::default().seed),
            ceiling: v.ceiling,
            tau: v.tau,
            decbulle_delta: v.decbulle_delta,
        }
    }
}

/// Everything built once from a configuration.
pub struct Setup {
    pub manifold: DiscreteManifold,
    pub sequence: ConfigurationSequence,
    pub background: Background,
    pub h_alpha_amplitude: f64,
}

impl Setup {
    pub fn h_alpha(&self, alpha: f64) -> Field {
        let a = self.h_alpha_amplitude / alpha;
        self.background.h.map(|v| v + a)
    }
}

fn read_field(m: &DiscreteManifold, src: &FieldSource, base: &Path) -> Result<Option<Field>, CliError> {
    match src {
        FieldSource::Zero => Ok(None),
        FieldSource::Constant(c) => Ok(Some(m.constant(*c))),
        FieldSource::File(p) => {
            let path = base.join(p);
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let values: Vec<f64> = serde_json::from_str(&text).map_err(|e| CliError::Parse {
                path: path.clone(),
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
            Ok(Some(m.field(values)?))
        }
    }
}

pub fn build_setup(cfg: &RunConfig, base: &Path) -> Result<Setup, CliError> {
    let mb = cfg.manifold;
    let m = DiscreteManifold::new(mb.n, mb.points, mb.period)?;
    let torus = Torus::new(mb.n, mb.period)?;
    let u0 = read_field(&m, &cfg.background.u0, base)?;
    let h = read_field(&m, &cfg.background.h, base)?.unwrap_or_else(|| m.zeros());
    let background_nonzero = u0.as_ref().is_some_and(|u| u.max_abs() > 0.0);
    let background = Background::new(&m, u0, h, GreenOptions::default())?;
    let standard = Arc::new(Profile::standard_bubble(mb.n)?);
    let negative = Arc::new(standard.negated());
    let zero = Arc::new(Profile::zero(mb.n)?);
    let bubbles = cfg
        .bubbles
        .iter()
        .map(|b| BubbleSpec {
            center: match &b.center {
                CenterBlock::Fixed(x) => CenterPath::Fixed(x.clone()),
                CenterBlock::Drift { origin, velocity } => {
                    CenterPath::Drift { origin: origin.clone(), velocity: velocity.clone() }
                }
            },
            scale_constant: b.scale_constant,
            rate: b.rate,
            profile: match b.profile {
                ProfileName::Standard => standard.clone(),
                ProfileName::Negative => negative.clone(),
                ProfileName::Zero => zero.clone(),
            },
        })
        .collect();
    let sequence = ConfigurationSequence::new(
        torus,
        bubbles,
        background_nonzero,
        background.green.has_kernel(),
        cfg.alphas.clone(),
        cfg.structure_floor,
    )?;
    Ok(Setup { manifold: m, sequence, background, h_alpha_amplitude: cfg.background.h_alpha_amplitude })
}
