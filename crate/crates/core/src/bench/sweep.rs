use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::runner::ExperimentSpec;
use crate::error::{Error, Result};
use crate::estimator::{estimate_gradient, Objective};
use crate::rng::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsePoint {
    pub n: usize,
    /// Mean over reps of ‖ĝ − G⁻¹∇f‖₂².
    pub mse: f64,
    /// Standard error of that mean.
    pub se: f64,
    pub reps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MseSweep {
    pub points: Vec<MsePoint>,
    /// `None` when fewer than two points have a positive MSE.
    pub fit: Option<LogLogFit>,
}

impl MseSweep {
    pub fn slope(&self) -> Result<f64> {
        self.fit
            .map(|f| f.slope)
            .ok_or_else(|| Error::Fit("fewer than two points with positive MSE".into()))
    }
}

/// Ordinary least squares of ln MSE on ln N over the points with MSE > 0.
pub fn fit_loglog(points: &[MsePoint]) -> Result<LogLogFit> {
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.mse > 0.0 && p.mse.is_finite())
        .map(|p| ((p.n as f64).ln(), p.mse.ln()))
        .collect();
    if xy.len() < 2 {
        return Err(Error::Fit(format!("need two valid points, have {}", xy.len())));
    }
    let k = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / k;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all sample sizes are equal".into()));
    }
    let slope = sxy / sxx;
    Ok(LogLogFit { slope, intercept: my - slope * mx })
}

/// Empirical MSE at each N, with `spec.cfg.n` replaced. Rep r at the i-th N
/// uses `derive_seed(derive_seed(seed, i), r)`, so two sweeps with the same
/// seed are paired. `spec.reps` is ignored in favor of `reps`.
pub fn mse_sweep(spec: &ExperimentSpec, n_values: &[usize], reps: usize) -> Result<MseSweep> {
    let mut distinct = n_values.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::Fit("need at least two distinct sample sizes".into()));
    }
    if reps == 0 {
        return Err(Error::InvalidConfig("reps must be at least 1".into()));
    }
    let d = spec.problem.dim();
    let x = spec.point();
    let truth = spec.metric.apply_inverse(&spec.problem.gradient(&x))?;

    let mut points = Vec::with_capacity(n_values.len());
    for (i, &n) in n_values.iter().enumerate() {
        let level_seed = derive_seed(spec.cfg.seed, i as u64);
        let errors: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let mut cfg = spec.cfg.clone();
                cfg.n = n;
                cfg.seed = derive_seed(level_seed, rep as u64);
                cfg.parallel = false;
                let f = Objective::new(d, |y: &[f64]| spec.problem.value(y));
                let est = estimate_gradient(&f, &x, &cfg, &spec.metric)?;
                Ok(est.grad.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum())
            })
            .collect::<Result<_>>()?;
        let k = errors.len() as f64;
        let mse = errors.iter().sum::<f64>() / k;
        let var = if reps > 1 {
            errors.iter().map(|e| (e - mse).powi(2)).sum::<f64>() / (k - 1.0)
        } else {
            0.0
        };
        points.push(MsePoint { n, mse, se: (var / k).sqrt(), reps });
    }
    let fit = fit_loglog(&points).ok();
    Ok(MseSweep { points, fit })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::bench::functions::{TestProblem, Trigonometric};
    use crate::estimator::{recommend_p, EstimatorConfig};
    use crate::metric::identity_metric;
    use crate::sampler::{DirectionLaw, Normalization, RadialKind};
    use crate::scheme::PointScheme;

    fn sweep_spec(problem: Arc<dyn TestProblem>, p: f64, seed: u64) -> ExperimentSpec {
        let d = problem.dim();
        let cfg = EstimatorConfig {
            scheme: PointScheme::central(),
            law: DirectionLaw::PSphere { p },
            radial: RadialKind::UniformXi,
            sigma: (d as f64).powi(-2),
            n: 1,
            h: 1e-4,
            decorrelate: false,
            normalization: Normalization::Population,
            seed,
            bandwidth_rule: None,
            parallel: false,
        };
        ExperimentSpec::new(problem, identity_metric(d).unwrap(), cfg, 1)
    }

    #[test]
    fn exact_power_law_fit() {
        let points: Vec<MsePoint> = [10usize, 20, 40, 80]
            .iter()
            .map(|&n| MsePoint { n, mse: 3.0 / n as f64, se: 0.0, reps: 1 })
            .collect();
        let fit = fit_loglog(&points).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(fit_loglog(&points[..1]).is_err());
    }

    struct Constant(usize);

    impl TestProblem for Constant {
        fn name(&self) -> String {
            "constant".into()
        }
        fn dim(&self) -> usize {
            self.0
        }
        fn value(&self, _: &[f64]) -> f64 {
            2.5
        }
        fn gradient(&self, x: &[f64]) -> Vec<f64> {
            vec![0.0; x.len()]
        }
    }

    #[test]
    fn constant_function_has_zero_mse() {
        let sweep = mse_sweep(&sweep_spec(Arc::new(Constant(4)), 3.0, 1), &[8, 16, 32], 5).unwrap();
        assert!(sweep.points.iter().all(|p| p.mse == 0.0));
        assert!(matches!(sweep.slope(), Err(Error::Fit(_))));
    }

    #[test]
    fn rejects_single_sample_size() {
        let spec = sweep_spec(Arc::new(Constant(4)), 3.0, 1);
        assert!(matches!(mse_sweep(&spec, &[8, 8], 5), Err(Error::Fit(_))));
    }

    #[test]
    fn slope_is_near_minus_one() {
        let d = 20;
        let p = recommend_p(d) as f64;
        let spec = sweep_spec(Arc::new(Trigonometric::new(d).unwrap()), p, 7);
        let ns: Vec<usize> = (5..=10).map(|k| 1usize << k).collect();
        let sweep = mse_sweep(&spec, &ns, 100).unwrap();
        let slope = sweep.slope().unwrap();
        assert!((-1.25..=-0.75).contains(&slope), "slope {slope}");
    }
}
