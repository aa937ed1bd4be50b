//! The randomized gradient estimator and its parameter rules.
//!
//! For an L-point stencil with L ≥ 2 the estimate is
//!
//! ```text
//! G⁻¹ · 1/(N h σ²) · Σᵢ Σ_ℓ C_ℓ f(x + β_ℓ h Vᵢ) Vᵢ
//! ```
//!
//! and for L = 1 the batch mean of `f(x + h Vᵢ)` is subtracted from every
//! value before the sum. The mean reuses the same N evaluations.
//!
//! The bound calculators (`k1`, `k2`, [`surrogate_bias_bound`]) give the
//! distance between the smoothed surrogate and the true gradient for
//! functions with second-order Hölder constant `M₂`.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{Norm, TensorMetric};
use crate::sampler::{
    decorrelate_with, dirac_radius, draw_batch, moment_r0, Decorrelation, DirectionLaw,
    Normalization, RadialKind, RadialLaw, Regime, Shell,
};
use crate::scheme::{validate_bandwidth, ConstraintMode, PointScheme};
use crate::special::lgamma;

/// A black-box objective with an evaluation counter.
pub struct Objective<'a> {
    dim: usize,
    f: Box<dyn Fn(&[f64]) -> f64 + Send + Sync + 'a>,
    count: AtomicU64,
}

impl<'a> Objective<'a> {
    pub fn new(dim: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'a) -> Self {
        Objective { dim, f: Box::new(f), count: AtomicU64::new(0) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.count.fetch_add(1, Ordering::Relaxed);
        (self.f)(x)
    }

    pub fn eval_count(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }
}

impl std::fmt::Debug for Objective<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Objective").field("dim", &self.dim).field("evals", &self.eval_count()).finish()
    }
}

/// h = scale · N^{−γ/2} with γ ∈ (1, 2).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandwidthRule {
    pub gamma: f64,
    pub scale: f64,
}

impl Default for BandwidthRule {
    fn default() -> Self {
        BandwidthRule { gamma: 1.5, scale: 1.0 }
    }
}

impl BandwidthRule {
    pub fn bandwidth(&self, n: usize) -> Result<f64> {
        if !(self.gamma > 1.0 && self.gamma < 2.0) {
            return Err(Error::InvalidConfig(format!("gamma must lie in (1, 2), got {}", self.gamma)));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::InvalidConfig(format!("scale must be positive, got {}", self.scale)));
        }
        Ok(self.scale * (n as f64).powf(-self.gamma / 2.0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub scheme: PointScheme,
    pub law: DirectionLaw,
    pub radial: RadialKind,
    pub sigma: f64,
    pub n: usize,
    pub h: f64,
    pub decorrelate: bool,
    /// Column scaling used when `decorrelate` is set.
    pub normalization: Normalization,
    pub seed: u64,
    /// When set, overrides `h`.
    pub bandwidth_rule: Option<BandwidthRule>,
    /// Evaluate the objective from several threads.
    pub parallel: bool,
}

impl EstimatorConfig {
    /// h = 10⁻⁴, σ = d⁻², p from [`recommend_p`], the centered one-point
    /// stencil, N = d + 1 and a decorrelated batch.
    pub fn defaults_for(d: usize) -> Self {
        let df = d.max(1) as f64;
        EstimatorConfig {
            scheme: PointScheme::singleton(),
            law: DirectionLaw::PSphere { p: recommend_p(d.max(1)) as f64 },
            radial: RadialKind::UniformXi,
            sigma: df.powi(-2),
            n: d + 1,
            h: 1e-4,
            decorrelate: true,
            normalization: Normalization::Population,
            seed: 0,
            bandwidth_rule: None,
            parallel: true,
        }
    }

    /// The bandwidth actually used.
    pub fn effective_h(&self) -> Result<f64> {
        match &self.bandwidth_rule {
            Some(rule) => rule.bandwidth(self.n),
            None => Ok(self.h),
        }
    }

    fn validate(&self, d: usize) -> Result<f64> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("N must be at least 1".into()));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::InvalidConfig(format!("sigma must be positive, got {}", self.sigma)));
        }
        let h = self.effective_h()?;
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidConfig(format!("h must be positive, got {h}")));
        }
        if d == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        self.law.validate()?;
        if self.scheme.l() >= 2
            && self.scheme.mode() == ConstraintMode::LowOrder
            && self.scheme.coeffs().iter().sum::<f64>().abs() > 1e-10
        {
            return Err(Error::InvalidScheme("low-order weights must sum to zero".into()));
        }
        Ok(h)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub grad: Vec<f64>,
    pub n_evals: u64,
    /// The configuration as run, with `h` resolved.
    pub config: EstimatorConfig,
    pub metric: String,
    pub warnings: Vec<String>,
}

/// Estimates `G⁻¹∇f(x)` from L·N evaluations.
pub fn estimate_gradient(
    f: &Objective<'_>,
    x: &[f64],
    cfg: &EstimatorConfig,
    metric: &TensorMetric,
) -> Result<GradientEstimate> {
    let d = x.len();
    if f.dim() != d {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: d });
    }
    if metric.dim() != d {
        return Err(Error::DimensionMismatch { expected: metric.dim(), got: d });
    }
    let h = cfg.validate(d)?;
    let (n, sigma) = (cfg.n, cfg.sigma);
    let mut warnings = Vec::new();

    if !validate_bandwidth(&cfg.scheme, h, sigma) {
        warnings.push(format!(
            "beta_max*h*sigma = {:.3e} exceeds 1/2",
            cfg.scheme.beta_max() * h * sigma
        ));
    }
    if let Some(w) = cfg.scheme.conditioning_warning() {
        warnings.push(w.to_string());
    }
    if let DirectionLaw::IidUniform { half_width } = cfg.law {
        let implied = half_width / 3f64.sqrt();
        if !cfg.decorrelate && ((implied - sigma) / sigma).abs() > 1e-12 {
            warnings.push(format!(
                "iid-uniform half width implies sigma = {implied:.6e}, normalizing with {sigma:.6e}"
            ));
        }
    }

    let one_point = cfg.scheme.l() == 1;
    let mut batch = draw_batch(cfg.law, RadialLaw { kind: cfg.radial, sigma }, n, d, cfg.seed)?;
    if cfg.decorrelate {
        let opts = Decorrelation { center: one_point, normalization: cfg.normalization };
        batch = decorrelate_with(&batch, sigma, opts)?;
    }

    let betas = cfg.scheme.betas();
    let coeffs = cfg.scheme.coeffs();
    let eval_row = |point: &mut Vec<f64>, row: &[f64]| -> Result<f64> {
        let mut acc = 0.0;
        for (&b, &c) in betas.iter().zip(coeffs) {
            for ((p, xi), v) in point.iter_mut().zip(x).zip(row) {
                *p = xi + b * h * v;
            }
            let value = f.eval(point);
            if !value.is_finite() {
                return Err(Error::Evaluation { point: point.clone(), value });
            }
            acc += c * value;
        }
        Ok(acc)
    };

    let mut weights: Vec<f64> = if cfg.parallel {
        batch
            .values()
            .par_chunks(d)
            .map_init(|| vec![0.0; d], |point, row| eval_row(point, row))
            .collect::<Result<_>>()?
    } else {
        let mut point = vec![0.0; d];
        batch.rows().map(|row| eval_row(&mut point, row)).collect::<Result<_>>()?
    };

    if one_point {
        let mean = weights.iter().sum::<f64>() / n as f64;
        weights.iter_mut().for_each(|w| *w -= mean);
    }

    let mut raw = vec![0.0; d];
    for (w, row) in weights.iter().zip(batch.rows()) {
        for (r, v) in raw.iter_mut().zip(row) {
            *r += w * v;
        }
    }
    let scale = 1.0 / (n as f64 * h * sigma * sigma);
    raw.iter_mut().for_each(|r| *r *= scale);
    let grad = metric.apply_inverse(&raw)?;

    let mut config = cfg.clone();
    config.h = h;
    Ok(GradientEstimate {
        grad,
        n_evals: (cfg.scheme.l() * n) as u64,
        config,
        metric: metric.tag().to_string(),
        warnings,
    })
}

// ---------------------------------------------------------------------------
// Bound constants
// ---------------------------------------------------------------------------

fn check_dp(d: usize, p: f64) -> Result<()> {
    if d == 0 {
        return Err(Error::Domain("dimension must be at least 1".into()));
    }
    if !(p.is_finite() && p >= 1.0) {
        return Err(Error::UnsupportedParameter(format!("p must be finite and >= 1, got {p}")));
    }
    Ok(())
}

/// ln[Γ(4/p)Γ(1/p) + (d−1)Γ(3/p)Γ(2/p)].
fn ln_bracket(d: usize, p: f64) -> f64 {
    let a = lgamma(4.0 / p) + lgamma(1.0 / p);
    if d == 1 {
        return a;
    }
    let b = ((d - 1) as f64).ln() + lgamma(3.0 / p) + lgamma(2.0 / p);
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// K₁ = E[|U₁|³ + (d−1)U₁²|U₂|] for U on the unit p-sphere.
pub fn k1(d: usize, p: f64) -> Result<f64> {
    check_dp(d, p)?;
    let df = d as f64;
    Ok((lgamma(df / p) + ln_bracket(d, p) - 2.0 * lgamma(1.0 / p) - lgamma((df + 3.0) / p)).exp())
}

/// K₂ = K₁ · E[R₀³]/σ³, the dimension-free bias constant.
pub fn k2(d: usize, p: f64) -> Result<f64> {
    check_dp(d, p)?;
    let df = d as f64;
    let ln = ln_bracket(d, p) + 1.5 * lgamma((df + 2.0) / p)
        - 0.5 * lgamma(df / p)
        - 0.5 * lgamma(1.0 / p)
        - lgamma((df + 3.0) / p)
        - 1.5 * lgamma(3.0 / p);
    Ok(0.75 * 3f64.sqrt() * ln.exp())
}

/// Regime approximation of K₂. Diagnostic only.
pub fn k2_approx(d: usize, p: f64, regime: Regime) -> Result<f64> {
    check_dp(d, p)?;
    let df = d as f64;
    Ok(match regime {
        Regime::SmallP => {
            let ln = ln_bracket(d, p) - 0.5 * lgamma(1.0 / p) - 1.5 * lgamma(3.0 / p);
            0.75 * 3f64.sqrt() * ln.exp()
        }
        Regime::LargeP => {
            9.0 * (df + 3.0) * (2.0 * df + 1.0) * df.sqrt() / (16.0 * (df + 2.0).powf(1.5))
        }
    })
}

/// Upper bound on ‖surrogate − G⁻¹∇f‖ in the chosen norm:
/// `M₂ h E[R³]/σ² · ‖|G⁻¹|𝟙‖ · K₁`, for sphere directions.
///
/// `E[R³]` is the exact third moment of the radial law: ξ³/4 for the
/// uniform radius and the cube of the constant radius otherwise.
pub fn surrogate_bias_bound(
    metric: &TensorMetric,
    p: f64,
    m2: f64,
    h: f64,
    sigma: f64,
    norm: Norm,
    radial: RadialKind,
) -> Result<f64> {
    let d = metric.dim();
    for (name, v) in [("m2", m2), ("h", h), ("sigma", sigma)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    let r3 = match radial {
        RadialKind::UniformXi => moment_r0(3, d, p, sigma)?,
        RadialKind::DiracSigma => dirac_radius(d, p, sigma, Shell::Sphere)?.powi(3),
    };
    Ok(m2 * h * r3 / (sigma * sigma) * metric.abs_ginv_ones(norm) * k1(d, p)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaRule {
    /// σ = 1/(‖|G⁻¹|𝟙‖·K₂); the bias bound becomes M₂h.
    Corollary3(Norm),
    /// σ = d^{3/2}.
    DPow32,
    /// σ = d⁻².
    DPowNeg2,
}

pub fn recommended_sigma(metric: &TensorMetric, p: f64, rule: SigmaRule) -> Result<f64> {
    let d = metric.dim() as f64;
    Ok(match rule {
        SigmaRule::Corollary3(norm) => 1.0 / (metric.abs_ginv_ones(norm) * k2(metric.dim(), p)?),
        SigmaRule::DPow32 => d.powf(1.5),
        SigmaRule::DPowNeg2 => d.powi(-2),
    })
}

/// ⌊max(2, ln d)⌋ + 1.
pub fn recommend_p(d: usize) -> u32 {
    let ln_d = (d.max(1) as f64).ln();
    (ln_d.max(2.0).floor() as u32 + 1).max(2)
}
