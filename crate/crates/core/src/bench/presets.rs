//! Table presets for the Rosenbrock and synthetic benchmarks.
//!
//! Every cell uses h = 10⁻⁴, σ = d⁻², the uniform radius on the p-sphere and
//! a decorrelated batch. Columns are labelled by the total evaluation count
//! LN, so an L = 2 cell at LN = 2d runs N = d trials. One-point cells center
//! the batch before orthogonalizing and both cell types rescale columns with
//! the N − 1 denominator (see [`Normalization::Sample`]).

use std::sync::Arc;

use super::functions::{rosenbrock, synthetic_ms, TestProblem};
use super::runner::ExperimentSpec;
use crate::error::{Error, Result};
use crate::estimator::EstimatorConfig;
use crate::metric::{exp_corr_metric, identity_metric, TensorMetric};
use crate::sampler::{DirectionLaw, Normalization, RadialKind};
use crate::scheme::PointScheme;

pub const PRESET_NAMES: [&str; 6] = ["t2", "t2dep", "t3", "t4", "t5", "t6"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PresetCell {
    pub l: usize,
    /// Total evaluations L·N.
    pub total_evals: usize,
    /// Published single-run error for this cell.
    pub reported_err: f64,
}

impl PresetCell {
    pub fn n(&self) -> usize {
        self.total_evals / self.l
    }
}

#[derive(Clone)]
pub struct TablePreset {
    pub name: &'static str,
    pub problem: Arc<dyn TestProblem>,
    pub metric: TensorMetric,
    pub p: f64,
    pub cells: Vec<PresetCell>,
    /// Whether the table lists a central-difference baseline.
    pub fdm_baseline: bool,
}

impl std::fmt::Debug for TablePreset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TablePreset")
            .field("name", &self.name)
            .field("problem", &self.problem.name())
            .field("d", &self.problem.dim())
            .field("p", &self.p)
            .field("cells", &self.cells)
            .finish()
    }
}

fn cells(spec: &[(usize, usize, f64)]) -> Vec<PresetCell> {
    spec.iter().map(|&(l, total_evals, reported_err)| PresetCell { l, total_evals, reported_err }).collect()
}

pub fn table_preset(name: &str) -> Result<TablePreset> {
    let rosen = |d| -> Result<Arc<dyn TestProblem>> { Ok(Arc::new(rosenbrock(d)?)) };
    let preset = match name {
        "t2" => TablePreset {
            name: "t2",
            problem: rosen(10)?,
            metric: identity_metric(10)?,
            p: 3.0,
            cells: cells(&[(1, 11, 0.091), (1, 15, 0.067), (1, 20, 0.05), (2, 20, 0.091)]),
            fdm_baseline: true,
        },
        "t2dep" => TablePreset {
            name: "t2dep",
            problem: rosen(10)?,
            metric: exp_corr_metric(10, 0.5)?,
            p: 3.0,
            cells: cells(&[(1, 11, 0.089), (1, 15, 0.066), (1, 20, 0.05), (2, 20, 0.091)]),
            fdm_baseline: false,
        },
        "t3" => TablePreset {
            name: "t3",
            problem: rosen(100)?,
            metric: identity_metric(100)?,
            p: 5.0,
            cells: cells(&[(1, 101, 0.0099), (1, 150, 0.0066), (1, 200, 0.005), (2, 200, 0.0099)]),
            fdm_baseline: true,
        },
        "t4" => TablePreset {
            name: "t4",
            problem: rosen(1000)?,
            metric: identity_metric(1000)?,
            p: 7.0,
            cells: cells(&[(1, 1001, 0.0015), (1, 2000, 0.0005), (2, 2000, 0.0015)]),
            fdm_baseline: true,
        },
        "t5" => TablePreset {
            name: "t5",
            problem: Arc::new(synthetic_ms(200, 2.0, 1.0)?),
            metric: identity_metric(200)?,
            p: 6.0,
            cells: cells(&[(1, 201, 0.0049), (1, 400, 0.0025), (2, 400, 0.0049)]),
            fdm_baseline: true,
        },
        "t6" => TablePreset {
            name: "t6",
            problem: Arc::new(synthetic_ms(200, 200.0, 1e-3)?),
            metric: identity_metric(200)?,
            p: 6.0,
            cells: cells(&[(1, 201, 0.0093), (1, 400, 0.0027), (2, 400, 0.0095)]),
            fdm_baseline: true,
        },
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown preset '{other}' (expected one of {})",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(preset)
}

impl TablePreset {
    pub fn config(&self, cell: &PresetCell, seed: u64) -> EstimatorConfig {
        let d = self.problem.dim() as f64;
        EstimatorConfig {
            scheme: if cell.l == 1 { PointScheme::singleton() } else { PointScheme::central() },
            law: DirectionLaw::PSphere { p: self.p },
            radial: RadialKind::UniformXi,
            sigma: d.powi(-2),
            n: cell.n(),
            h: 1e-4,
            decorrelate: true,
            normalization: Normalization::Sample,
            seed,
            bandwidth_rule: None,
            parallel: false,
        }
    }

    /// One experiment per cell. The baseline, when listed, is attached to the
    /// last cell. Cell i uses base seed `derive_seed(seed, i)`.
    pub fn experiments(&self, reps: usize, seed: u64) -> Vec<ExperimentSpec> {
        let last = self.cells.len() - 1;
        self.cells
            .iter()
            .enumerate()
            .map(|(i, cell)| {
                let cfg = self.config(cell, crate::rng::derive_seed(seed, i as u64));
                let mut spec = ExperimentSpec::new(self.problem.clone(), self.metric.clone(), cfg, reps);
                spec.fdm_baseline = self.fdm_baseline && i == last;
                spec
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::runner::run_experiment;

    #[test]
    fn all_presets_build() {
        for name in PRESET_NAMES {
            let p = table_preset(name).unwrap();
            assert_eq!(p.name, name);
            assert!(p.cells.iter().all(|c| c.n() >= p.problem.dim()));
        }
        assert!(table_preset("t9").is_err());
    }

    #[test]
    fn t3_layout() {
        let p = table_preset("t3").unwrap();
        let ns: Vec<(usize, usize)> = p.cells.iter().map(|c| (c.l, c.n())).collect();
        assert_eq!(ns, vec![(1, 101), (1, 150), (1, 200), (2, 100)]);
        assert_eq!(p.p, 5.0);
    }

    #[test]
    fn t2_first_cell_is_close_to_reported() {
        let p = table_preset("t2").unwrap();
        let spec = &p.experiments(50, 1)[0];
        let (_, summary) = run_experiment(spec).unwrap();
        let reported = p.cells[0].reported_err;
        assert!(summary.mean_err >= reported / 2.0 && summary.mean_err <= 2.0 * reported);
    }
}
