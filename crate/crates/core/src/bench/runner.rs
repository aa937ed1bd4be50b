use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::functions::TestProblem;
use crate::error::{Error, Result};
use crate::estimator::{estimate_gradient, EstimatorConfig, Objective};
use crate::metric::TensorMetric;
use crate::rng::derive_seed;

/// Coordinate-wise central differences, exactly 2d evaluations.
pub fn central_fdm(f: &Objective<'_>, x: &[f64], h: f64) -> Result<Vec<f64>> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Domain(format!("h must be positive, got {h}")));
    }
    if x.len() != f.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: x.len() });
    }
    let mut point = x.to_vec();
    let eval = |point: &[f64]| {
        let v = f.eval(point);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation { point: point.to_vec(), value: v })
        }
    };
    let mut g = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        point[k] = x[k] + h;
        let up = eval(&point)?;
        point[k] = x[k] - h;
        let down = eval(&point)?;
        point[k] = x[k];
        g.push((up - down) / (2.0 * h));
    }
    Ok(g)
}

/// ‖G⁻¹(g − ĝ)‖₂ / ‖G⁻¹g‖₂.
pub fn err(metric: &TensorMetric, grad_true: &[f64], grad_est: &[f64]) -> Result<f64> {
    if grad_est.len() != grad_true.len() {
        return Err(Error::DimensionMismatch { expected: grad_true.len(), got: grad_est.len() });
    }
    let diff: Vec<f64> = grad_true.iter().zip(grad_est).map(|(a, b)| a - b).collect();
    let den = l2(&metric.apply_inverse(grad_true)?);
    if !(den > 0.0) {
        return Err(Error::DegenerateReference);
    }
    Ok(l2(&metric.apply_inverse(&diff)?) / den)
}

/// `err` for an estimate already mapped through G⁻¹, as `estimate_gradient`
/// returns it.
fn err_dependent(metric: &TensorMetric, grad_true: &[f64], grad_dep: &[f64]) -> Result<f64> {
    if grad_dep.len() != grad_true.len() {
        return Err(Error::DimensionMismatch { expected: grad_true.len(), got: grad_dep.len() });
    }
    let want = metric.apply_inverse(grad_true)?;
    let den = l2(&want);
    if !(den > 0.0) {
        return Err(Error::DegenerateReference);
    }
    let diff: Vec<f64> = want.iter().zip(grad_dep).map(|(a, b)| a - b).collect();
    Ok(l2(&diff) / den)
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One batch of repeated trials of the estimator on a test problem.
#[derive(Clone)]
pub struct ExperimentSpec {
    pub problem: Arc<dyn TestProblem>,
    /// Evaluation point; the origin when `None`.
    pub x0: Option<Vec<f64>>,
    pub metric: TensorMetric,
    /// `cfg.seed` is the base seed; rep r uses `derive_seed(cfg.seed, r)`.
    pub cfg: EstimatorConfig,
    pub reps: usize,
    /// Also run central differences with step `cfg.h`.
    pub fdm_baseline: bool,
}

impl std::fmt::Debug for ExperimentSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExperimentSpec")
            .field("problem", &self.problem.name())
            .field("d", &self.problem.dim())
            .field("metric", &self.metric.tag())
            .field("cfg", &self.cfg)
            .field("reps", &self.reps)
            .field("fdm_baseline", &self.fdm_baseline)
            .finish()
    }
}

impl ExperimentSpec {
    pub fn new(problem: Arc<dyn TestProblem>, metric: TensorMetric, cfg: EstimatorConfig, reps: usize) -> Self {
        ExperimentSpec { problem, x0: None, metric, cfg, reps, fdm_baseline: false }
    }

    pub fn point(&self) -> Vec<f64> {
        self.x0.clone().unwrap_or_else(|| vec![0.0; self.problem.dim()])
    }

    fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidConfig("reps must be at least 1".into()));
        }
        let d = self.problem.dim();
        if self.metric.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: self.metric.dim() });
        }
        if let Some(x) = &self.x0 {
            if x.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: x.len() });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub function: String,
    pub d: usize,
    /// NaN for laws without an exponent and for the baseline.
    pub p: f64,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub h: f64,
    pub sigma: f64,
    pub law: String,
    pub radial: String,
    pub decorrelated: bool,
    pub metric: String,
    pub rep: usize,
    pub seed: u64,
    /// NaN when the trial failed.
    pub err: f64,
    pub n_evals: u64,
    pub wall_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mean_err: f64,
    pub sd_err: f64,
    pub mean_n_evals: f64,
    pub ok: usize,
    pub failed: usize,
}

impl RunSummary {
    /// Statistics over the estimator rows that succeeded.
    pub fn from_rows(rows: &[ResultRow]) -> Self {
        let good: Vec<&ResultRow> =
            rows.iter().filter(|r| r.error.is_none() && r.law != FDM_LAW).collect();
        let failed = rows.iter().filter(|r| r.error.is_some()).count();
        let k = good.len() as f64;
        let mean_err = good.iter().map(|r| r.err).sum::<f64>() / k;
        let sd_err = if good.len() > 1 {
            (good.iter().map(|r| (r.err - mean_err).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        let mean_n_evals = good.iter().map(|r| r.n_evals as f64).sum::<f64>() / k;
        RunSummary { mean_err, sd_err, mean_n_evals, ok: good.len(), failed }
    }
}

pub(crate) const FDM_LAW: &str = "central-fdm";

/// Runs `spec.reps` independent trials (in parallel) and returns rows in rep
/// order. Trial errors are recorded on the row instead of aborting.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<(Vec<ResultRow>, RunSummary)> {
    spec.validate()?;
    let x = spec.point();
    let truth = spec.problem.gradient(&x);
    let h = spec.cfg.effective_h()?;

    let mut rows: Vec<ResultRow> = (0..spec.reps)
        .into_par_iter()
        .map(|rep| {
            let seed = derive_seed(spec.cfg.seed, rep as u64);
            let mut cfg = spec.cfg.clone();
            cfg.seed = seed;
            cfg.parallel = false;
            let problem = &spec.problem;
            let f = Objective::new(problem.dim(), |y: &[f64]| problem.value(y));
            let start = Instant::now();
            let outcome = estimate_gradient(&f, &x, &cfg, &spec.metric)
                .and_then(|est| err_dependent(&spec.metric, &truth, &est.grad).map(|e| (e, est.n_evals)));
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            let mut row = base_row(spec, h, rep, seed, wall_ms);
            match outcome {
                Ok((e, n_evals)) => {
                    row.err = e;
                    row.n_evals = n_evals;
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            row
        })
        .collect();

    let summary = RunSummary::from_rows(&rows);

    if spec.fdm_baseline {
        let f = Objective::new(spec.problem.dim(), |y: &[f64]| spec.problem.value(y));
        let start = Instant::now();
        let outcome = central_fdm(&f, &x, h).and_then(|g| err(&spec.metric, &truth, &g));
        let mut row = base_row(spec, h, 0, 0, start.elapsed().as_secs_f64() * 1e3);
        row.p = f64::NAN;
        row.l = 2;
        row.n = spec.problem.dim();
        row.sigma = f64::NAN;
        row.law = FDM_LAW.into();
        row.radial = "none".into();
        row.decorrelated = false;
        match outcome {
            Ok(e) => {
                row.err = e;
                row.n_evals = f.eval_count();
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        rows.push(row);
    }

    Ok((rows, summary))
}

fn base_row(spec: &ExperimentSpec, h: f64, rep: usize, seed: u64, wall_ms: f64) -> ResultRow {
    let cfg = &spec.cfg;
    ResultRow {
        function: spec.problem.name(),
        d: spec.problem.dim(),
        p: cfg.law.p().unwrap_or(f64::NAN),
        l: cfg.scheme.l(),
        n: cfg.n,
        h,
        sigma: cfg.sigma,
        law: cfg.law.label().into(),
        radial: cfg.radial.label().into(),
        decorrelated: cfg.decorrelate,
        metric: spec.metric.tag().into(),
        rep,
        seed,
        err: f64::NAN,
        n_evals: 0,
        wall_ms,
        error: None,
    }
}
