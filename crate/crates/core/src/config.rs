//! Declarative run configuration (TOML).
//!
//! ```toml
//! protocol = "dqsv"
//! n = 5
//! k = 1
//! lambda = "1/3"
//! seed = 42
//!
//! [source]
//! model = "rho2"
//! phi = 3.141592653589793
//!
//! [stopping]
//! mode = "until_accepted"
//! target = 1000
//! max_rounds = 1000000
//! ```
//!
//! `model` is one of `honest`, `rho1`, `rho2` or `custom`. Custom sources
//! list their branches:
//!
//! ```toml
//! [source]
//! model = "custom"
//!
//! [[source.branches]]
//! weight = 0.5
//! fill = "singlet"
//! overrides = [{ position = 0, state = "werner(0.9)" }]
//!
//! [[source.branches]]
//! weight = 0.5
//! fill = "mixed"
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::certbank::Protocol;
use crate::error::{QsvError, Result};
use crate::linalg::PureState;
use crate::sim::StoppingRule;
use crate::sources::{
    honest_iid, rho1, rho2, NoiseSpec, ProductSequence, ProductSequenceMixture, StateSpec,
};
use crate::strategy::{build_singlet_strategy, HomogeneousStrategy};

/// Distance from 1/3 within which the three-setting singlet strategy is used.
pub const SINGLET_LAMBDA_TOL: f64 = 1e-9;

/// `λ` written as a number or as a fraction such as `"1/3"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LambdaRepr", into = "f64")]
pub struct Lambda(pub f64);

#[derive(Deserialize)]
#[serde(untagged)]
enum LambdaRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<LambdaRepr> for Lambda {
    type Error = QsvError;
    fn try_from(r: LambdaRepr) -> Result<Self> {
        match r {
            LambdaRepr::Number(x) => Ok(Lambda(x)),
            LambdaRepr::Text(s) => s.parse(),
        }
    }
}

impl From<Lambda> for f64 {
    fn from(l: Lambda) -> f64 {
        l.0
    }
}

impl FromStr for Lambda {
    type Err = QsvError;
    fn from_str(s: &str) -> Result<Self> {
        let bad = |e: &dyn std::fmt::Display| QsvError::param(format!("bad lambda `{s}`: {e}"));
        let s = s.trim();
        if let Some((a, b)) = s.split_once('/') {
            let a: u64 = a.trim().parse().map_err(|e| bad(&e))?;
            let b: u64 = b.trim().parse().map_err(|e| bad(&e))?;
            if b == 0 {
                return Err(bad(&"zero denominator"));
            }
            return Ok(Lambda(a as f64 / b as f64));
        }
        s.parse::<f64>().map(Lambda).map_err(|e| bad(&e))
    }
}

impl Default for Lambda {
    fn default() -> Self {
        Lambda(1.0 / 3.0)
    }
}

/// The three-setting singlet strategy when `λ` is 1/3, otherwise the
/// two-test strategy with the requested `λ`.
pub fn strategy_for_lambda(lambda: f64) -> Result<HomogeneousStrategy> {
    if (lambda - 1.0 / 3.0).abs() < SINGLET_LAMBDA_TOL {
        Ok(build_singlet_strategy())
    } else {
        HomogeneousStrategy::with_lambda(PureState::singlet(), lambda)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceModel {
    Honest,
    Rho1,
    Rho2,
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Override {
    pub position: usize,
    pub state: StateSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchConfig {
    pub weight: f64,
    pub fill: StateSpec,
    #[serde(default)]
    pub overrides: Vec<Override>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub model: SourceModel,
    /// Per-copy preparation fidelity (honest, rho1, rho2).
    #[serde(default = "one")]
    pub fidelity: f64,
    /// Phase of the odd copy (rho2).
    #[serde(default)]
    pub phi: Option<f64>,
    #[serde(default)]
    pub branches: Vec<BranchConfig>,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

impl FromStr for OutputFormat {
    type Err = QsvError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            _ => Err(QsvError::param(format!(
                "unknown format `{s}` (json or csv)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
    /// Also write one CSV row per round.
    #[serde(default = "yes")]
    pub per_round: bool,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn yes() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            format: OutputFormat::Json,
            per_round: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub protocol: Protocol,
    pub n: u64,
    pub k: u64,
    /// Extra fixed `δ` at which to report certificates.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub lambda: Lambda,
    pub source: SourceConfig,
    pub stopping: StoppingRule,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
}

/// A validated configuration with its source and strategy built.
#[derive(Clone, Debug)]
pub struct RunPlan {
    pub config: RunConfig,
    pub mixture: ProductSequenceMixture,
    pub strategy: HomogeneousStrategy,
}

/// Location reported for syntax and type errors, which carry their own
/// line and column.
const PARSE_FIELD: &str = "toml";

fn field(name: &str) -> impl Fn(QsvError) -> QsvError + '_ {
    move |e| match e {
        QsvError::Config { .. } => e,
        other => QsvError::config(name, other.to_string()),
    }
}

impl RunConfig {
    /// Parses TOML. Syntax and type errors carry line and column.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| QsvError::config(PARSE_FIELD, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            QsvError::Config { field, message } if field == PARSE_FIELD => QsvError::Config {
                field: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| QsvError::config(PARSE_FIELD, e.to_string()))
    }

    /// Checks every field and builds the source and strategy.
    pub fn plan(&self) -> Result<RunPlan> {
        if self.n == 0 {
            return Err(QsvError::config("n", "must be at least 1"));
        }
        if self.k >= self.n {
            return Err(QsvError::config(
                "k",
                format!("must be below n = {}, got {}", self.n, self.k),
            ));
        }
        let lambda = self.lambda.0;
        let lambda_ok = match self.protocol {
            Protocol::Sqsv => (0.0..1.0).contains(&lambda),
            Protocol::Dqsv => lambda > 0.0 && lambda < 1.0,
        };
        if !lambda_ok {
            return Err(QsvError::config(
                "lambda",
                format!("out of range for {}: {lambda}", self.protocol),
            ));
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d <= 1.0) {
                return Err(QsvError::config(
                    "delta",
                    format!("must lie in (0, 1], got {d}"),
                ));
            }
        }
        self.stopping.validate().map_err(field("stopping"))?;
        let strategy = strategy_for_lambda(lambda).map_err(field("lambda"))?;
        let mixture = self.build_source()?;
        Ok(RunPlan {
            config: self.clone(),
            mixture,
            strategy,
        })
    }

    fn build_source(&self) -> Result<ProductSequenceMixture> {
        let src = &self.source;
        let n = usize::try_from(self.n).map_err(|_| QsvError::config("n", "too large"))?;
        let noise = NoiseSpec::new(src.fidelity).map_err(field("source.fidelity"))?;
        if src.model != SourceModel::Custom && !src.branches.is_empty() {
            return Err(QsvError::config(
                "source.branches",
                "only allowed with model = \"custom\"",
            ));
        }
        if src.model != SourceModel::Rho2 && src.phi.is_some() {
            return Err(QsvError::config(
                "source.phi",
                "only allowed with model = \"rho2\"",
            ));
        }
        match src.model {
            SourceModel::Honest => honest_iid(n + 1, noise).map_err(field("source")),
            SourceModel::Rho1 => rho1(n, noise).map_err(field("source")),
            SourceModel::Rho2 => {
                let phi = src
                    .phi
                    .ok_or_else(|| QsvError::config("source.phi", "required for rho2"))?;
                rho2(n, phi, noise).map_err(field("source"))
            }
            SourceModel::Custom => {
                if src.branches.is_empty() {
                    return Err(QsvError::config(
                        "source.branches",
                        "custom source needs branches",
                    ));
                }
                let branches = src
                    .branches
                    .iter()
                    .enumerate()
                    .map(|(i, b)| {
                        let name = format!("source.branches[{i}]");
                        let fill = b.fill.to_density().map_err(field(&name))?;
                        let overrides = b
                            .overrides
                            .iter()
                            .map(|o| Ok((o.position, o.state.to_density()?)))
                            .collect::<Result<Vec<_>>>()
                            .map_err(field(&name))?;
                        let seq = ProductSequence::with_overrides(
                            n + 1,
                            fill,
                            &overrides,
                            format!("branch{i}"),
                        )
                        .map_err(field(&name))?;
                        Ok((b.weight, seq))
                    })
                    .collect::<Result<Vec<_>>>()?;
                ProductSequenceMixture::new(branches).map_err(field("source.branches"))
            }
        }
    }
}
