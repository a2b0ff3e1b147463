//! JSON-facing configuration types and their conversion into library types.
//!
//! Every command reads a config file first and lets command-line flags
//! override selected fields, so an experiment is reproducible from the file
//! alone. Exponents accept either a number or the string "inf".

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use subriemann::expr::Expr;
use subriemann::frames::CommutatorTable;
use subriemann::functional::StructureParams;
use subriemann::grid::{BoxRegion, GridFunction, Lattice};
use subriemann::harnack::SweepConfig;
use subriemann::io;
use subriemann::pde::{BoundarySpec, FluxSpec, ParabolicProblem, SchemeConfig, SchemeMode, SourceSpec};

/// A possibly-infinite exponent: a JSON number or the string "inf".
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Exponent(pub f64);

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(v) => Ok(Exponent(v)),
            Raw::Text(s) if s == "inf" => Ok(Exponent(f64::INFINITY)),
            Raw::Text(s) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {s:?}"))),
        }
    }
}

fn default_inf() -> Exponent {
    Exponent(f64::INFINITY)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructureConfig {
    #[serde(default = "one")]
    pub a: f64,
    #[serde(default = "one")]
    pub abar: f64,
    #[serde(default)]
    pub norm_b: f64,
    #[serde(default)]
    pub norm_c: f64,
    #[serde(default)]
    pub norm_e: f64,
    #[serde(default)]
    pub norm_f: f64,
    #[serde(default)]
    pub norm_h: f64,
    #[serde(default = "default_inf")]
    pub p: Exponent,
    #[serde(default = "default_inf")]
    pub q: Exponent,
    #[serde(default)]
    pub norm_d: f64,
    #[serde(default)]
    pub norm_g: f64,
    #[serde(default = "default_inf")]
    pub alpha: Exponent,
    #[serde(default = "default_inf")]
    pub beta: Exponent,
    #[serde(default = "four")]
    pub n_hom: f64,
}

fn one() -> f64 {
    1.0
}
fn four() -> f64 {
    4.0
}

impl Default for StructureConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

impl StructureConfig {
    pub fn to_params(&self) -> StructureParams {
        StructureParams {
            a: self.a,
            abar: self.abar,
            norm_b: self.norm_b,
            norm_c: self.norm_c,
            norm_e: self.norm_e,
            norm_f: self.norm_f,
            norm_h: self.norm_h,
            p: self.p.0,
            q: self.q.0,
            norm_d: self.norm_d,
            norm_g: self.norm_g,
            alpha: self.alpha.0,
            beta: self.beta.0,
            n_hom: self.n_hom,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FluxConfig {
    Identity,
    Scalar { a: String },
    Matrix { m: Vec<Vec<String>> },
    Sine { amplitude: f64 },
}

impl Default for FluxConfig {
    fn default() -> Self {
        FluxConfig::Identity
    }
}

impl FluxConfig {
    pub fn to_spec(&self, dim: usize) -> Result<FluxSpec> {
        Ok(match self {
            FluxConfig::Identity => FluxSpec::Identity,
            FluxConfig::Scalar { a } => FluxSpec::Scalar(Expr::parse(a, dim)?),
            FluxConfig::Matrix { m } => {
                let rows: Result<Vec<Vec<Expr>>> = m
                    .iter()
                    .map(|row| row.iter().map(|s| Ok(Expr::parse(s, dim)?)).collect())
                    .collect();
                FluxSpec::Matrix(rows?)
            }
            FluxConfig::Sine { amplitude } => FluxSpec::SinePerturbation { amplitude: *amplitude },
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SourceConfig {
    Zero,
    Linear { c: String, d: String, g: String },
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig::Zero
    }
}

impl SourceConfig {
    pub fn to_spec(&self, dim: usize) -> Result<SourceSpec> {
        Ok(match self {
            SourceConfig::Zero => SourceSpec::Zero,
            SourceConfig::Linear { c, d, g } => SourceSpec::Linear {
                c: Expr::parse(c, dim)?,
                d: Expr::parse(d, dim)?,
                g: Expr::parse(g, dim)?,
            },
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveConfig {
    pub frame: PathBuf,
    #[serde(default)]
    pub epsilon: f64,
    pub box_lower: Vec<f64>,
    pub box_upper: Vec<f64>,
    pub dims: Vec<usize>,
    pub t_final: f64,
    /// None picks the automatic step
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default = "default_scheme")]
    pub scheme: String,
    #[serde(default = "default_cfl_safety")]
    pub cfl_safety: f64,
    #[serde(default = "default_tol")]
    pub linear_solver_tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub output_every: usize,
    #[serde(default)]
    pub flux: FluxConfig,
    #[serde(default)]
    pub source: SourceConfig,
    pub initial: String,
    /// an expression, or the string "periodic"
    pub boundary: String,
    #[serde(default)]
    pub structure: StructureConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_scheme() -> String {
    "explicit".into()
}
fn default_cfl_safety() -> f64 {
    0.9
}
fn default_tol() -> f64 {
    1e-10
}
fn default_max_iters() -> usize {
    20_000
}

pub struct BuiltProblem {
    pub problem: ParabolicProblem,
    pub scheme: SchemeConfig,
}

impl SolveConfig {
    pub fn build(&self, base_dir: &Path) -> Result<BuiltProblem> {
        let table = load_frame_rel(base_dir, &self.frame)?;
        let family = subriemann::frames::rescale(&table, self.epsilon)?;
        let dim = family.dim();
        let bbox = BoxRegion::new(self.box_lower.clone(), self.box_upper.clone())?;
        let lattice = Lattice::new(bbox, self.dims.clone())?;
        let initial_expr = Expr::parse(&self.initial, dim)?;
        let initial = GridFunction::from_fn(lattice.clone(), |x| initial_expr.eval(x, 0.0));
        let boundary = if self.boundary == "periodic" {
            BoundarySpec::Periodic
        } else {
            BoundarySpec::Dirichlet(Expr::parse(&self.boundary, dim)?)
        };
        let mode = match self.scheme.as_str() {
            "explicit" => SchemeMode::Explicit,
            "implicit" => SchemeMode::Implicit,
            other => bail!("unknown scheme {other:?} (expected explicit or implicit)"),
        };
        let problem = ParabolicProblem {
            family,
            lattice,
            t_final: self.t_final,
            initial,
            boundary,
            flux: self.flux.to_spec(dim)?,
            source: self.source.to_spec(dim)?,
            structure: self.structure.to_params(),
        };
        let scheme = SchemeConfig {
            mode,
            tau: self.tau,
            cfl_safety: self.cfl_safety,
            linear_solver_tol: self.linear_solver_tol,
            max_iters: self.max_iters,
            output_every: self.output_every,
        };
        Ok(BuiltProblem { problem, scheme })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepFileConfig {
    pub frame: PathBuf,
    #[serde(flatten)]
    pub sweep: SweepConfig,
}

pub fn load_frame_rel(base_dir: &Path, frame: &Path) -> Result<CommutatorTable> {
    let path = if frame.is_relative() { base_dir.join(frame) } else { frame.to_path_buf() };
    io::load_frame(&path).with_context(|| format!("loading frame {}", path.display()))
}

/// Read a JSON config file into any config type.
pub fn read_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: T = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(value)
}
