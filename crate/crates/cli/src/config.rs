use std::path::{Path, PathBuf};

use presence_core::frag::Event;
use presence_core::{DislocationModel, OffspringModel, TestFunction};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operation: Option<String>,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// Model catalog. Offspring models drive `brw`, dislocation measures drive `frag`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    #[serde(rename = "gaussian-2")]
    Gaussian2,
    #[serde(rename = "binary-pm1")]
    BinaryPm1,
    GeometricOrigin { q: f64 },
    PoissonNormal { lambda: f64 },
    IidNormal { m: u32, mean: f64, sd: f64 },
    UniformBinary,
    Dyadic,
    BetaSplit { a: f64, b: f64 },
}

pub enum Model {
    Offspring(OffspringModel),
    Dislocation(DislocationModel),
}

impl ModelSpec {
    pub fn build(&self) -> Result<Model> {
        let ctx = |e| LabError::config("model", e);
        Ok(match *self {
            ModelSpec::Gaussian2 => Model::Offspring(OffspringModel::gaussian2()),
            ModelSpec::BinaryPm1 => Model::Offspring(OffspringModel::binary_pm1()),
            ModelSpec::GeometricOrigin { q } => Model::Offspring(OffspringModel::geometric_origin(q).map_err(ctx)?),
            ModelSpec::PoissonNormal { lambda } => Model::Offspring(OffspringModel::poisson_normal(lambda).map_err(ctx)?),
            ModelSpec::IidNormal { m, mean, sd } => Model::Offspring(OffspringModel::iid_normal(m, mean, sd).map_err(ctx)?),
            ModelSpec::UniformBinary => Model::Dislocation(DislocationModel::uniform_binary()),
            ModelSpec::Dyadic => Model::Dislocation(DislocationModel::dyadic()),
            ModelSpec::BetaSplit { a, b } => Model::Dislocation(DislocationModel::beta_split(a, b).map_err(ctx)?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Span {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Span {
    pub fn points(&self, field: &str) -> Result<Vec<f64>> {
        if self.count == 0 {
            return Err(LabError::config(field, "empty grid (count = 0)"));
        }
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi) {
            return Err(LabError::config(field, format!("need finite lo <= hi, got [{}, {}]", self.lo, self.hi)));
        }
        if self.count == 1 {
            return Ok(vec![self.lo]);
        }
        let step = (self.hi - self.lo) / (self.count - 1) as f64;
        Ok((0..self.count).map(|k| self.lo + k as f64 * step).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FunctionSpec {
    Indicator { alpha: f64, beta: f64 },
    Cell { at: f64, delta: f64 },
    Step { origin: f64, delta: f64, values: Vec<f64> },
}

impl FunctionSpec {
    pub fn build(&self) -> Result<TestFunction> {
        let f = match self {
            FunctionSpec::Indicator { alpha, beta } => TestFunction::Indicator { alpha: *alpha, beta: *beta },
            FunctionSpec::Cell { at, delta } => TestFunction::cell(*at, *delta),
            FunctionSpec::Step { origin, delta, values } => TestFunction::Step {
                origin: *origin,
                delta: *delta,
                values: values.clone(),
            },
        };
        f.validate().map_err(|e| LabError::config("params.f", e))?;
        Ok(f)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_grid: Option<Span>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_grid: Option<Span>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<FunctionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_runs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meshes: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<Event>,
}

pub fn require<T: Copy>(v: Option<T>, field: &str) -> Result<T> {
    v.ok_or_else(|| LabError::config(format!("params.{field}"), "required by this operation"))
}

pub fn finite(v: f64, field: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(LabError::config(format!("params.{field}"), format!("not finite: {v}")))
    }
}

pub fn positive(v: f64, field: &str) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(LabError::config(format!("params.{field}"), format!("must be positive, got {v}")))
    }
}

impl Params {
    /// Test function: `f` if given, else `1_[alpha, beta]` with defaults `[0, 1]`.
    pub fn test_function(&self) -> Result<TestFunction> {
        match &self.f {
            Some(spec) => spec.build(),
            None => FunctionSpec::Indicator {
                alpha: self.alpha.unwrap_or(0.0),
                beta: self.beta.unwrap_or(1.0),
            }
            .build(),
        }
    }

    pub fn window(&self) -> Result<(f64, f64)> {
        let (a, b) = (finite(self.alpha.unwrap_or(0.0), "alpha")?, finite(self.beta.unwrap_or(1.0), "beta")?);
        if a >= b {
            return Err(LabError::config("params.alpha", format!("empty window [{a}, {b}]")));
        }
        Ok((a, b))
    }

    pub fn runs(&self, default: usize) -> Result<usize> {
        match self.n_runs {
            Some(0) => Err(LabError::config("params.n_runs", "must be at least 1")),
            Some(n) => Ok(n),
            None => Ok(default),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::config("--config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| LabError::config("config", e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::parse(r#"{"model":{"name":"gaussian-2"},"bogus":1}"#).is_err());
        assert!(ExperimentConfig::parse(r#"{"model":{"name":"gaussian-2"},"params":{"thetta":1}}"#).is_err());
        assert!(ExperimentConfig::parse(r#"{"model":{"name":"beta-split","a":1,"b":2,"c":3}}"#).is_err());
        assert!(ExperimentConfig::parse(r#"{"model":{"name":"dyadic"}}"#).is_ok());
    }

    #[test]
    fn empty_span_rejected() {
        let s = Span { lo: -3.0, hi: 3.0, count: 0 };
        assert!(matches!(s.points("params.theta_grid"), Err(LabError::Config { .. })));
        let s = Span { lo: -3.0, hi: 3.0, count: 7 };
        assert_eq!(s.points("x").unwrap(), vec![-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn config_round_trip() {
        let text = r#"{"model":{"name":"geometric-origin","q":0.3333333333333333},"operation":"u_grid",
            "params":{"n":20,"f":{"kind":"cell","at":0,"delta":1},"targets":[0]},"seed":7}"#;
        let c = ExperimentConfig::parse(text).unwrap();
        let again = ExperimentConfig::parse(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, again);
    }
}
