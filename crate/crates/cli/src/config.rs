//! Run configuration shared by `estimate` flags and `run --config` files.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use lpgrad::bench::{rosenbrock, synthetic_ms, ExperimentSpec, TestProblem, Trigonometric};
use lpgrad::{
    build_scheme, exp_corr_metric, identity_metric, recommend_p, recommended_sigma, BandwidthRule,
    ConstraintMode, DirectionLaw, EstimatorConfig, Norm, Normalization, PointScheme, RadialKind,
    SigmaRule, TensorMetric,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::expr::Expr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FunctionKind {
    Rosenbrock,
    Synthetic,
    Trigonometric,
    CustomExpr,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum LawArg {
    #[default]
    Sphere,
    Ball,
    IidUniform,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum RadialArg {
    #[default]
    Uniform,
    Dirac,
}

impl From<RadialArg> for RadialKind {
    fn from(r: RadialArg) -> Self {
        match r {
            RadialArg::Uniform => RadialKind::UniformXi,
            RadialArg::Dirac => RadialKind::DiracSigma,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationArg {
    #[default]
    Population,
    Sample,
}

impl From<NormalizationArg> for Normalization {
    fn from(n: NormalizationArg) -> Self {
        match n {
            NormalizationArg::Population => Normalization::Population,
            NormalizationArg::Sample => Normalization::Sample,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    LowOrder,
    OddOrder,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// `<number>`, `auto-c3` or `auto-d2`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SigmaRepr", into = "SigmaRepr")]
pub enum SigmaSpec {
    Value(f64),
    AutoC3,
    #[default]
    AutoD2,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SigmaRepr {
    Number(f64),
    Name(String),
}

impl TryFrom<SigmaRepr> for SigmaSpec {
    type Error = String;
    fn try_from(r: SigmaRepr) -> Result<Self, String> {
        match r {
            SigmaRepr::Number(v) => SigmaSpec::from_str(&v.to_string()),
            SigmaRepr::Name(s) => s.parse(),
        }
    }
}

impl From<SigmaSpec> for SigmaRepr {
    fn from(s: SigmaSpec) -> Self {
        match s {
            SigmaSpec::Value(v) => SigmaRepr::Number(v),
            other => SigmaRepr::Name(other.to_string()),
        }
    }
}

impl FromStr for SigmaSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto-c3" => Ok(SigmaSpec::AutoC3),
            "auto-d2" => Ok(SigmaSpec::AutoD2),
            _ => match s.parse::<f64>() {
                Ok(v) if v.is_finite() && v > 0.0 => Ok(SigmaSpec::Value(v)),
                _ => Err(format!("sigma must be a positive number, auto-c3 or auto-d2, got '{s}'")),
            },
        }
    }
}

impl fmt::Display for SigmaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigmaSpec::Value(v) => write!(f, "{v}"),
            SigmaSpec::AutoC3 => f.write_str("auto-c3"),
            SigmaSpec::AutoD2 => f.write_str("auto-d2"),
        }
    }
}

/// `identity`, `exp-corr:<rho>` or `file:<path>`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MetricSpec {
    #[default]
    Identity,
    ExpCorr(f64),
    File(PathBuf),
}

impl TryFrom<String> for MetricSpec {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<MetricSpec> for String {
    fn from(m: MetricSpec) -> Self {
        m.to_string()
    }
}

impl FromStr for MetricSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "identity" {
            Ok(MetricSpec::Identity)
        } else if let Some(rho) = s.strip_prefix("exp-corr:") {
            rho.parse()
                .map(MetricSpec::ExpCorr)
                .map_err(|_| format!("bad correlation in '{s}'"))
        } else if let Some(path) = s.strip_prefix("file:") {
            Ok(MetricSpec::File(PathBuf::from(path)))
        } else {
            Err(format!("metric must be identity, exp-corr:<rho> or file:<path>, got '{s}'"))
        }
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricSpec::Identity => f.write_str("identity"),
            MetricSpec::ExpCorr(rho) => write!(f, "exp-corr:{rho}"),
            MetricSpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl MetricSpec {
    pub fn build(&self, d: usize) -> Result<TensorMetric, CliError> {
        let m = match self {
            MetricSpec::Identity => identity_metric(d)?,
            MetricSpec::ExpCorr(rho) => exp_corr_metric(d, *rho)?,
            MetricSpec::File(path) => TensorMetric::from_matrix(&read_matrix(path)?)?
                .with_tag(format!("file:{}", path.display())),
        };
        if m.dim() != d {
            return Err(CliError::Usage(format!("metric has dimension {}, expected {d}", m.dim())));
        }
        Ok(m)
    }
}

/// Dense square matrix from a JSON array of rows or a CSV file with an
/// optional header line.
pub fn read_matrix(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read metric file {}: {e}", path.display())))?;
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("bad JSON matrix in {}: {e}", path.display())));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Usage(format!("bad CSV matrix: {e}")))?;
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(CliError::Usage(format!("bad number on line {}: {e}", i + 1))),
        }
    }
    Ok(rows)
}

fn default_m1() -> f64 {
    2.0
}
fn default_m2() -> f64 {
    1.0
}
fn default_l() -> usize {
    1
}
fn default_h() -> f64 {
    1e-4
}
fn default_reps() -> usize {
    1
}

/// Everything needed to reproduce a run. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub function: FunctionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
    #[serde(default = "default_m1")]
    pub m1: f64,
    #[serde(default = "default_m2")]
    pub m2: f64,
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Defaults to the dimension-based rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(rename = "L", default = "default_l")]
    pub l: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModeArg>,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth_rule: Option<BandwidthRule>,
    #[serde(default)]
    pub sigma: SigmaSpec,
    #[serde(default)]
    pub law: LawArg,
    #[serde(default)]
    pub radial: RadialArg,
    #[serde(default)]
    pub decorrelate: bool,
    #[serde(default)]
    pub normalization: NormalizationArg,
    #[serde(default)]
    pub metric: MetricSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub fdm_baseline: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
    /// Write 0 in the wall_ms column so reruns are byte-identical.
    #[serde(default)]
    pub no_timing: bool,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("bad run config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn problem(&self) -> Result<Arc<dyn TestProblem>, CliError> {
        let d = self.d;
        Ok(match self.function {
            FunctionKind::Rosenbrock => Arc::new(rosenbrock(d)?),
            FunctionKind::Synthetic => Arc::new(synthetic_ms(d, self.m1, self.m2)?),
            FunctionKind::Trigonometric => Arc::new(Trigonometric::new(d)?),
            FunctionKind::CustomExpr => {
                let src = self
                    .expr
                    .as_deref()
                    .ok_or_else(|| CliError::Usage("custom-expr needs --expr".into()))?;
                Arc::new(Expr::parse(src, d).map_err(|e| CliError::Usage(e.to_string()))?)
            }
        })
    }

    pub fn p_value(&self) -> f64 {
        self.p.unwrap_or_else(|| recommend_p(self.d) as f64)
    }

    fn scheme(&self) -> Result<PointScheme, CliError> {
        let l = self.l;
        if l == 0 {
            return Err(CliError::Usage("L must be at least 1".into()));
        }
        let betas = match &self.betas {
            Some(b) if b.len() != l => {
                return Err(CliError::Usage(format!("{} betas given for L = {l}", b.len())))
            }
            Some(b) => b.clone(),
            // 1, −1, 2, −2, …
            None => (0..l).map(|i| (i / 2 + 1) as f64 * if i % 2 == 0 { 1.0 } else { -1.0 }).collect(),
        };
        let mode = match (self.mode, l) {
            (Some(ModeArg::OddOrder), _) => ConstraintMode::OddOrder,
            (Some(ModeArg::LowOrder), _) => ConstraintMode::LowOrder,
            (None, 1) => ConstraintMode::Singleton,
            (None, _) => ConstraintMode::LowOrder,
        };
        build_scheme(&betas, mode).map_err(|e| CliError::Usage(e.to_string()))
    }

    fn sigma_value(&self, metric: &TensorMetric) -> Result<f64, CliError> {
        Ok(match self.sigma {
            SigmaSpec::Value(v) => v,
            SigmaSpec::AutoD2 => (self.d as f64).powi(-2),
            SigmaSpec::AutoC3 => {
                if self.law == LawArg::IidUniform {
                    return Err(CliError::Usage("auto-c3 needs a sphere or ball law".into()));
                }
                recommended_sigma(metric, self.p_value(), SigmaRule::Corollary3(Norm::L2))?
            }
        })
    }

    /// Checks flag combinations that would only fail later.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.d == 0 {
            return Err(CliError::Usage("d must be at least 1".into()));
        }
        if self.n == 0 {
            return Err(CliError::Usage("N must be at least 1".into()));
        }
        if self.reps == 0 {
            return Err(CliError::Usage("reps must be at least 1".into()));
        }
        if self.decorrelate {
            let need = self.d + usize::from(self.l == 1);
            if self.n < need {
                return Err(CliError::Usage(format!(
                    "--decorrelate needs N >= {need} for d = {} and L = {}, got N = {}",
                    self.d, self.l, self.n
                )));
            }
        }
        if self.function == FunctionKind::CustomExpr && self.expr.is_none() {
            return Err(CliError::Usage("custom-expr needs --expr".into()));
        }
        if self.function != FunctionKind::CustomExpr && self.expr.is_some() {
            return Err(CliError::Usage("--expr only applies to custom-expr".into()));
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != self.d {
                return Err(CliError::Usage(format!("x0 has {} entries, expected {}", x0.len(), self.d)));
            }
        }
        Ok(())
    }

    pub fn experiment(&self) -> Result<ExperimentSpec, CliError> {
        self.validate()?;
        let problem = self.problem()?;
        let metric = self.metric.build(self.d)?;
        let sigma = self.sigma_value(&metric)?;
        let p = self.p_value();
        let law = match self.law {
            LawArg::Sphere => DirectionLaw::PSphere { p },
            LawArg::Ball => DirectionLaw::PBall { p },
            LawArg::IidUniform => DirectionLaw::iid_uniform_for_sigma(sigma),
        };
        let cfg = EstimatorConfig {
            scheme: self.scheme()?,
            law,
            radial: self.radial.into(),
            sigma,
            n: self.n,
            h: self.h,
            decorrelate: self.decorrelate,
            normalization: self.normalization.into(),
            seed: self.seed,
            bandwidth_rule: self.bandwidth_rule,
            parallel: false,
        };
        let mut spec = ExperimentSpec::new(problem, metric, cfg, self.reps);
        spec.x0 = self.x0.clone();
        spec.fdm_baseline = self.fdm_baseline;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> RunConfig {
        RunConfig::from_json(r#"{"function": "rosenbrock", "d": 10, "N": 20}"#).unwrap()
    }

    #[test]
    fn defaults_fill_in() {
        let c = minimal();
        assert_eq!((c.l, c.h, c.reps, c.seed), (1, 1e-4, 1, 0));
        assert_eq!(c.sigma, SigmaSpec::AutoD2);
        assert_eq!(c.metric, MetricSpec::Identity);
        assert_eq!(c.p_value(), 3.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_json(r#"{"function": "rosenbrock", "d": 10, "N": 20, "colour": 1}"#);
        assert!(matches!(err, Err(CliError::Usage(_))));
    }

    #[test]
    fn json_round_trip() {
        let mut c = minimal();
        c.sigma = SigmaSpec::Value(0.25);
        c.metric = MetricSpec::ExpCorr(0.5);
        c.betas = Some(vec![1.0]);
        c.bandwidth_rule = Some(BandwidthRule::default());
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn sigma_and_metric_parsing() {
        assert_eq!("auto-c3".parse::<SigmaSpec>().unwrap(), SigmaSpec::AutoC3);
        assert_eq!("1e-4".parse::<SigmaSpec>().unwrap(), SigmaSpec::Value(1e-4));
        assert!("-1".parse::<SigmaSpec>().is_err());
        assert_eq!("exp-corr:0.5".parse::<MetricSpec>().unwrap(), MetricSpec::ExpCorr(0.5));
        assert!("banana".parse::<MetricSpec>().is_err());
    }

    #[test]
    fn decorrelation_needs_enough_rows() {
        let mut c = minimal();
        c.decorrelate = true;
        c.n = 10;
        assert!(matches!(c.validate(), Err(CliError::Usage(_))));
        c.n = 11;
        assert!(c.validate().is_ok());
        c.l = 2;
        c.n = 10;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn default_betas_alternate() {
        let mut c = minimal();
        c.l = 4;
        assert_eq!(c.scheme().unwrap().betas(), &[1.0, -1.0, 2.0, -2.0]);
    }

    #[test]
    fn matrix_files() {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("g.csv");
        std::fs::write(&csv_path, "a,b\n4,0\n0,1\n").unwrap();
        assert_eq!(read_matrix(&csv_path).unwrap(), vec![vec![4.0, 0.0], vec![0.0, 1.0]]);
        let json_path = dir.path().join("g.json");
        std::fs::write(&json_path, "[[1.25, 1.0], [1.0, 1.25]]").unwrap();
        let m = MetricSpec::File(json_path).build(2).unwrap();
        assert!(m.tag().starts_with("file:"));
        assert!(MetricSpec::File(csv_path).build(3).is_err());
    }
}
