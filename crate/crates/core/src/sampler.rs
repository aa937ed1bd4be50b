//! Direction and radius laws for the random perturbations `V = R·U`.
//!
//! `U` is drawn either from the cone measure on the unit p-sphere (the law of
//! `G/‖G‖_p` for iid p-generalized Gaussian `G`) or uniformly on the unit
//! p-ball. The radius `R` is calibrated so that every coordinate satisfies
//! `E[V_k²] = σ²`, which is what the estimator's normalization assumes.
//!
//! Batches are filled row by row from per-row ChaCha streams, so the output
//! depends only on the seed and never on the number of worker threads.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::row_stream;
use crate::special::{lgamma, ln_gamma_ratio};

/// Above this exponent the p-generalized Gaussian is replaced by U(−1, 1)
/// coordinates before normalization.
pub const LARGE_P_THRESHOLD: f64 = 2000.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DirectionLaw {
    /// Cone measure on the unit p-sphere.
    PSphere { p: f64 },
    /// Uniform on the unit p-ball.
    PBall { p: f64 },
    /// Coordinates iid uniform on `[-half_width, half_width]`; ignores the radial law.
    IidUniform { half_width: f64 },
}

impl DirectionLaw {
    /// Comparison law whose coordinates have variance `sigma²`.
    pub fn iid_uniform_for_sigma(sigma: f64) -> Self {
        DirectionLaw::IidUniform { half_width: 3f64.sqrt() * sigma }
    }

    pub fn p(&self) -> Option<f64> {
        match *self {
            DirectionLaw::PSphere { p } | DirectionLaw::PBall { p } => Some(p),
            DirectionLaw::IidUniform { .. } => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            DirectionLaw::PSphere { .. } => "sphere",
            DirectionLaw::PBall { .. } => "ball",
            DirectionLaw::IidUniform { .. } => "iid-uniform",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DirectionLaw::PSphere { p } | DirectionLaw::PBall { p } => check_p(p),
            DirectionLaw::IidUniform { half_width } => {
                if half_width.is_finite() && half_width > 0.0 {
                    Ok(())
                } else {
                    Err(Error::Domain(format!("half_width must be positive, got {half_width}")))
                }
            }
        }
    }

    fn shell(&self) -> Option<Shell> {
        match self {
            DirectionLaw::PSphere { .. } => Some(Shell::Sphere),
            DirectionLaw::PBall { .. } => Some(Shell::Ball),
            DirectionLaw::IidUniform { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadialKind {
    /// `R ~ U(0, ξ)`.
    UniformXi,
    /// `R` constant.
    DiracSigma,
}

impl RadialKind {
    pub fn label(&self) -> &'static str {
        match self {
            RadialKind::UniformXi => "uniform",
            RadialKind::DiracSigma => "dirac",
        }
    }
}

/// Radius law, calibrated so that `E[V_k²] = sigma²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialLaw {
    pub kind: RadialKind,
    pub sigma: f64,
}

impl RadialLaw {
    pub fn uniform_xi(sigma: f64) -> Self {
        RadialLaw { kind: RadialKind::UniformXi, sigma }
    }

    pub fn dirac(sigma: f64) -> Self {
        RadialLaw { kind: RadialKind::DiracSigma, sigma }
    }
}

/// Whether `U` lives on the sphere or fills the ball.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shell {
    Sphere,
    Ball,
}

fn check_p(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(Error::UnsupportedParameter(format!("p must be finite and >= 1, got {p}")))
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        Err(Error::Domain("dimension must be at least 1".into()))
    } else {
        Ok(())
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("sigma must be positive, got {sigma}")))
    }
}

// ---------------------------------------------------------------------------
// Single draws
// ---------------------------------------------------------------------------

/// One p-generalized Gaussian coordinate, density ∝ exp(−|x|^p / p).
///
/// |X| = (p·Y)^{1/p} with Y ~ Gamma(1/p). Y is drawn as Gamma(1 + 1/p)·W^p,
/// W ~ U(0,1), and the W factor is pulled out of the root so large p never
/// underflows.
#[inline]
fn pgauss_coordinate<R: Rng + ?Sized>(p: f64, shifted_gamma: &Gamma<f64>, rng: &mut R) -> f64 {
    let g = shifted_gamma.sample(rng);
    let w: f64 = rng.random();
    let magnitude = (p * g).powf(1.0 / p) * w;
    if rng.random::<bool>() {
        magnitude
    } else {
        -magnitude
    }
}

fn shifted_gamma(p: f64) -> Gamma<f64> {
    Gamma::new(1.0 + 1.0 / p, 1.0).expect("shape 1 + 1/p is positive")
}

/// `d` iid p-generalized Gaussian coordinates.
pub fn sample_pgauss<R: Rng + ?Sized>(d: usize, p: f64, rng: &mut R) -> Result<Vec<f64>> {
    check_p(p)?;
    check_dim(d)?;
    let gamma = shifted_gamma(p);
    Ok((0..d).map(|_| pgauss_coordinate(p, &gamma, rng)).collect())
}

/// ℓ_p norm, scaled by the max coordinate so that large p neither overflows
/// nor underflows.
pub fn lp_norm(x: &[f64], p: f64) -> f64 {
    let m = x.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    let s: f64 = x.iter().map(|v| (v.abs() / m).powf(p)).sum();
    m * s.powf(1.0 / p)
}

/// Reusable state for drawing points on the unit p-sphere.
struct SphereSampler {
    p: f64,
    gamma: Option<Gamma<f64>>,
}

impl SphereSampler {
    fn new(p: f64) -> Self {
        let gamma = (p <= LARGE_P_THRESHOLD).then(|| shifted_gamma(p));
        SphereSampler { p, gamma }
    }

    fn fill<R: Rng + ?Sized>(&self, out: &mut [f64], rng: &mut R) {
        loop {
            match &self.gamma {
                Some(g) => out.iter_mut().for_each(|v| *v = pgauss_coordinate(self.p, g, rng)),
                None => out.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0)),
            }
            let norm = lp_norm(out, self.p);
            if norm > 0.0 && norm.is_finite() {
                out.iter_mut().for_each(|v| *v /= norm);
                return;
            }
        }
    }
}

/// A point with ‖u‖_p = 1 drawn from the cone measure.
pub fn sample_unit_sphere<R: Rng + ?Sized>(d: usize, p: f64, rng: &mut R) -> Result<Vec<f64>> {
    check_p(p)?;
    check_dim(d)?;
    let mut u = vec![0.0; d];
    SphereSampler::new(p).fill(&mut u, rng);
    Ok(u)
}

/// A point uniform on the unit p-ball: a cone-measure direction scaled by
/// W^{1/d}, since the radius of a uniform ball point has `radius^d ~ U(0,1)`.
pub fn sample_unit_ball<R: Rng + ?Sized>(d: usize, p: f64, rng: &mut R) -> Result<Vec<f64>> {
    let mut u = sample_unit_sphere(d, p, rng)?;
    let w: f64 = rng.random();
    let scale = w.powf(1.0 / d as f64);
    u.iter_mut().for_each(|v| *v *= scale);
    Ok(u)
}

// ---------------------------------------------------------------------------
// Closed-form moments
// ---------------------------------------------------------------------------

/// E[|X|^q] for a p-generalized Gaussian: p^{q/p} Γ((q+1)/p) / Γ(1/p).
pub fn pgauss_abs_moment(q: f64, p: f64) -> f64 {
    ((q / p) * p.ln() + lgamma((q + 1.0) / p) - lgamma(1.0 / p)).exp()
}

/// E[|U₁|^q] for U on the unit p-sphere:
/// Γ((q+1)/p) Γ(d/p) / (Γ(1/p) Γ((d+q)/p)).
pub fn sphere_abs_moment(q: f64, d: usize, p: f64) -> f64 {
    let d = d as f64;
    ln_gamma_ratio(&[(q + 1.0) / p, d / p], &[1.0 / p, (d + q) / p]).exp()
}

/// E[U₁² |U₂|] for U on the unit p-sphere (d ≥ 2):
/// Γ(3/p) Γ(2/p) Γ(d/p) / (Γ(1/p)² Γ((d+3)/p)).
pub fn sphere_u1sq_abs_u2(d: usize, p: f64) -> f64 {
    let d = d as f64;
    ln_gamma_ratio(&[3.0 / p, 2.0 / p, d / p], &[1.0 / p, 1.0 / p, (d + 3.0) / p]).exp()
}

/// ln of Γ(1/p) Γ((d+2)/p) / (Γ(3/p) Γ(d/p)), i.e. ln(E[R²]/σ²) = −ln E[U₁²].
fn ln_radial_ratio(d: usize, p: f64) -> f64 {
    let d = d as f64;
    ln_gamma_ratio(&[1.0 / p, (d + 2.0) / p], &[3.0 / p, d / p])
}

/// E[R²] required for `E[V_k²] = σ²` with a sphere direction.
pub fn radial_second_moment(d: usize, p: f64, sigma: f64) -> f64 {
    sigma * sigma * ln_radial_ratio(d, p).exp()
}

/// Upper end ξ of the uniform radius law.
///
/// Sphere: ξ = √(3 E[R²]). Ball directions have E[Ũ₁²] = E[U₁²]·d/(d+2), so
/// the ball variant is stretched by √((d+2)/d) to keep `E[V_k²] = σ²`.
pub fn radial_xi(d: usize, p: f64, sigma: f64, shell: Shell) -> Result<f64> {
    check_dim(d)?;
    check_p(p)?;
    check_sigma(sigma)?;
    Ok(xi_unchecked(d, p, sigma, shell))
}

fn xi_unchecked(d: usize, p: f64, sigma: f64, shell: Shell) -> f64 {
    let ln_xi = 0.5 * (3f64.ln() + 2.0 * sigma.ln() + ln_radial_ratio(d, p));
    let xi = ln_xi.exp();
    match shell {
        Shell::Sphere => xi,
        Shell::Ball => xi * ((d as f64 + 2.0) / d as f64).sqrt(),
    }
}

/// Constant radius giving `E[V_k²] = σ²`: the root of the calibrated E[R²].
pub fn dirac_radius(d: usize, p: f64, sigma: f64, shell: Shell) -> Result<f64> {
    Ok(radial_xi(d, p, sigma, shell)? / 3f64.sqrt())
}

/// E[R₀^q] = ξ^q / (q+1) for R₀ ~ U(0, ξ) with the sphere calibration.
pub fn moment_r0(q: i32, d: usize, p: f64, sigma: f64) -> Result<f64> {
    if q < 0 {
        return Err(Error::Domain(format!("moment order must be >= 0, got {q}")));
    }
    let xi = radial_xi(d, p, sigma, Shell::Sphere)?;
    let q = q as f64;
    Ok((q * xi.ln() - (q + 1.0).ln()).exp())
}

/// Asymptotic regimes for the radial moments and bound constants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    /// 1 ≤ p ≪ d.
    SmallP,
    /// 1 ≤ d ≪ p.
    LargeP,
}

/// Regime approximation of E[R₀^q]. Diagnostic only; estimators use
/// [`moment_r0`].
pub fn moment_r0_approx(q: i32, d: usize, p: f64, sigma: f64, regime: Regime) -> Result<f64> {
    if q < 0 {
        return Err(Error::Domain(format!("moment order must be >= 0, got {q}")));
    }
    check_dim(d)?;
    check_p(p)?;
    check_sigma(sigma)?;
    let (q, df) = (q as f64, d as f64);
    let value = match regime {
        Regime::SmallP => {
            let ln_gamma_term = 0.5 * q * (lgamma(1.0 / p) - lgamma(3.0 / p));
            (0.5 * q * 3f64.ln() + q * sigma.ln() + (q / p) * (df.ln() - p.ln()) + ln_gamma_term
                - (q + 1.0).ln())
            .exp()
        }
        Regime::LargeP => {
            3f64.powf(q) * sigma.powf(q) / (q + 1.0) * (df / (df + 2.0)).powf(q / 2.0)
        }
    };
    Ok(value)
}

// ---------------------------------------------------------------------------
// Batches
// ---------------------------------------------------------------------------

/// N iid draws of V stored row-major (row i is Vᵢ).
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    values: Vec<f64>,
    n: usize,
    dim: usize,
    law: DirectionLaw,
    radial: RadialLaw,
    decorrelated: bool,
    seed: u64,
}

impl SampleBatch {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.dim)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn law(&self) -> DirectionLaw {
        self.law
    }

    pub fn radial(&self) -> RadialLaw {
        self.radial
    }

    pub fn is_decorrelated(&self) -> bool {
        self.decorrelated
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// (1/N) Σᵢ VᵢVᵢᵀ, row-major d×d.
    pub fn second_moment_matrix(&self) -> Vec<f64> {
        let d = self.dim;
        let mut m = vec![0.0; d * d];
        for row in self.rows() {
            for a in 0..d {
                let ra = row[a];
                for b in 0..d {
                    m[a * d + b] += ra * row[b];
                }
            }
        }
        let inv_n = 1.0 / self.n as f64;
        m.iter_mut().for_each(|v| *v *= inv_n);
        m
    }
}

enum RowFiller {
    Shell { sphere: SphereSampler, ball: bool, radius: RadiusDraw },
    Iid { half_width: f64 },
}

#[derive(Clone, Copy)]
enum RadiusDraw {
    Uniform(f64),
    Fixed(f64),
}

impl RowFiller {
    fn new(law: DirectionLaw, radial: RadialLaw, d: usize) -> Self {
        match (law, law.shell()) {
            (DirectionLaw::IidUniform { half_width }, _) => RowFiller::Iid { half_width },
            (_, Some(shell)) => {
                let p = law.p().expect("shell laws carry p");
                let xi = xi_unchecked(d, p, radial.sigma, shell);
                let radius = match radial.kind {
                    RadialKind::UniformXi => RadiusDraw::Uniform(xi),
                    RadialKind::DiracSigma => RadiusDraw::Fixed(xi / 3f64.sqrt()),
                };
                RowFiller::Shell { sphere: SphereSampler::new(p), ball: shell == Shell::Ball, radius }
            }
            (_, None) => unreachable!("non-iid laws have a shell"),
        }
    }

    fn fill<R: Rng + ?Sized>(&self, row: &mut [f64], rng: &mut R) {
        match self {
            RowFiller::Iid { half_width } => {
                let a = *half_width;
                row.iter_mut().for_each(|v| *v = rng.random_range(-a..a));
            }
            RowFiller::Shell { sphere, ball, radius } => {
                sphere.fill(row, rng);
                let mut scale = match *radius {
                    RadiusDraw::Uniform(xi) => xi * rng.random::<f64>(),
                    RadiusDraw::Fixed(r) => r,
                };
                if *ball {
                    let w: f64 = rng.random();
                    scale *= w.powf(1.0 / row.len() as f64);
                }
                row.iter_mut().for_each(|v| *v *= scale);
            }
        }
    }
}

/// Draws N iid rows of V. Row i uses its own stream derived from
/// `(seed, i)`, so the batch is identical for any thread count.
pub fn draw_batch(
    law: DirectionLaw,
    radial: RadialLaw,
    n: usize,
    d: usize,
    seed: u64,
) -> Result<SampleBatch> {
    if n == 0 {
        return Err(Error::Domain("sample size must be at least 1".into()));
    }
    check_dim(d)?;
    law.validate()?;
    check_sigma(radial.sigma)?;

    let filler = RowFiller::new(law, radial, d);
    let mut values = vec![0.0; n * d];
    values.par_chunks_mut(d).enumerate().for_each(|(i, row)| {
        let mut rng = row_stream(seed, i as u64);
        filler.fill(row, &mut rng);
    });

    Ok(SampleBatch { values, n, dim: d, law, radial, decorrelated: false, seed })
}

// ---------------------------------------------------------------------------
// Decorrelation
// ---------------------------------------------------------------------------

/// Denominator used when rescaling orthogonalized columns.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// (1/N) Σᵢ v²ᵢⱼ = σ².
    #[default]
    Population,
    /// (1/(N−1)) Σᵢ v²ᵢⱼ = σ², the unbiased sample-variance convention.
    Sample,
}

impl Normalization {
    fn denominator(self, n: usize) -> f64 {
        match self {
            Normalization::Population => n as f64,
            Normalization::Sample => n as f64 - 1.0,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Normalization::Population => "population",
            Normalization::Sample => "sample",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decorrelation {
    /// Orthogonalize against the constant vector first, making every column
    /// mean zero. Needs N ≥ d + 1.
    pub center: bool,
    pub normalization: Normalization,
}

/// Modified Gram-Schmidt on the columns, each rescaled so that
/// (1/N) VᵀV = σ² I.
pub fn decorrelate(batch: &SampleBatch, sigma: f64) -> Result<SampleBatch> {
    decorrelate_with(batch, sigma, Decorrelation::default())
}

pub fn decorrelate_with(batch: &SampleBatch, sigma: f64, opts: Decorrelation) -> Result<SampleBatch> {
    check_sigma(sigma)?;
    let (n, d) = (batch.n, batch.dim);
    let needed = d + usize::from(opts.center);
    if n < needed {
        return Err(Error::NotApplicable(format!(
            "need N >= {needed} rows to orthogonalize {d} columns{}, got N = {n}",
            if opts.center { " after centering" } else { "" }
        )));
    }
    if opts.normalization == Normalization::Sample && n < 2 {
        return Err(Error::NotApplicable("sample normalization needs N >= 2".into()));
    }

    let mut cols = transpose(&batch.values, n, d);
    orthonormalize_columns(&mut cols, n, d, opts.center)?;

    let scale = sigma * opts.normalization.denominator(n).sqrt();
    let mut values = vec![0.0; n * d];
    for (j, col) in cols.chunks_exact(n).enumerate() {
        for (i, v) in col.iter().enumerate() {
            values[i * d + j] = v * scale;
        }
    }

    Ok(SampleBatch { values, decorrelated: true, ..batch.clone() })
}

fn transpose(values: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut cols = vec![0.0; n * d];
    for (i, row) in values.chunks_exact(d).enumerate() {
        for (j, v) in row.iter().enumerate() {
            cols[j * n + i] = *v;
        }
    }
    cols
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn remove_mean(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// In-place MGS over column-major `cols` (d columns of length n). A column
/// that loses more than half its norm to the projections gets a second pass.
fn orthonormalize_columns(cols: &mut [f64], n: usize, d: usize, center: bool) -> Result<()> {
    const DEGENERATE_RATIO: f64 = 1e-10;
    for j in 0..d {
        let (done, rest) = cols.split_at_mut(j * n);
        let v = &mut rest[..n];
        let original = dot(v, v).sqrt();
        let mut before = original;
        let mut after = 0.0;
        for _pass in 0..2 {
            if center {
                remove_mean(v);
            }
            for q in done.chunks_exact(n) {
                let r = dot(q, v);
                axpy(-r, q, v);
            }
            after = dot(v, v).sqrt();
            if after >= 0.5 * before {
                break;
            }
            before = after;
        }
        if !(after > DEGENERATE_RATIO * original) {
            return Err(Error::DegenerateSample(format!(
                "column {j} is (numerically) in the span of the previous columns"
            )));
        }
        v.iter_mut().for_each(|x| *x /= after);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::row_stream;

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        row_stream(seed, 0)
    }

    /// Mean and standard error of the mean.
    fn mean_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (var / n).sqrt())
    }

    fn assert_z(label: &str, samples: &[f64], want: f64, max_z: f64) {
        let (m, se) = mean_se(samples);
        let z = (m - want) / se;
        assert!(z.abs() <= max_z, "{label}: mean {m}, want {want}, se {se:e}, z {z}");
    }

    #[test]
    fn pgauss_p2_is_standard_normal() {
        let mut r = rng(1);
        let xs: Vec<f64> = (0..200_000).map(|_| sample_pgauss(1, 2.0, &mut r).unwrap()[0]).collect();
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        assert_z("E[X²]", &sq, 1.0, 4.0);
        assert_z("E[X]", &xs, 0.0, 4.0);
    }

    #[test]
    fn pgauss_p3_second_moment() {
        // 3^{2/3} Γ(1) / Γ(1/3), mpmath.
        let want = 0.776_458_211_378_420_4;
        assert!((pgauss_abs_moment(2.0, 3.0) - want).abs() < 1e-13);
        let mut r = rng(2);
        let sq: Vec<f64> = (0..1_000_000)
            .map(|_| sample_pgauss(1, 3.0, &mut r).unwrap()[0].powi(2))
            .collect();
        assert_z("E[|X|²], p=3", &sq, want, 3.0);
    }

    #[test]
    fn pgauss_p1_first_abs_moment_is_one() {
        assert!((pgauss_abs_moment(1.0, 1.0) - 1.0).abs() < 1e-14);
        let mut r = rng(3);
        let xs = sample_pgauss(400_000, 1.0, &mut r).unwrap();
        let abs: Vec<f64> = xs.iter().map(|x| x.abs()).collect();
        assert_z("E|X|, p=1", &abs, 1.0, 4.0);
    }

    #[test]
    fn pgauss_rejects_small_p() {
        let mut r = rng(0);
        assert!(matches!(sample_pgauss(3, 0.5, &mut r), Err(Error::UnsupportedParameter(_))));
    }

    #[test]
    fn sphere_has_unit_norm() {
        let mut r = rng(4);
        for &p in &[1.0, 1.5, 2.0, 3.0, 7.0, 500.0, 5000.0] {
            for _ in 0..200 {
                let u = sample_unit_sphere(17, p, &mut r).unwrap();
                assert!((lp_norm(&u, p) - 1.0).abs() < 1e-12, "p={p}");
            }
        }
    }

    #[test]
    fn one_dimensional_sphere_is_a_sign() {
        let mut r = rng(5);
        let draws: Vec<f64> = (0..20_000).map(|_| sample_unit_sphere(1, 3.0, &mut r).unwrap()[0]).collect();
        assert!(draws.iter().all(|&u| u == 1.0 || u == -1.0));
        let plus = draws.iter().filter(|&&u| u > 0.0).count() as f64 / draws.len() as f64;
        // Binomial sd at n=20000 is 0.0035.
        assert!((plus - 0.5).abs() < 0.015, "fraction of +1 is {plus}");
    }

    #[test]
    fn sphere_moments_d10_p3() {
        let (d, p) = (10, 3.0);
        // Γ(4/3)Γ(10/3)/(Γ(1/3)Γ(13/3)) collapses to 1/10.
        assert!((sphere_abs_moment(3.0, d, p) - 0.1).abs() < 1e-14);
        let cross_want = 0.056_604_668_036_315_97;
        assert!((sphere_u1sq_abs_u2(d, p) - cross_want).abs() < 1e-14);

        let mut r = rng(6);
        let mut cubes = Vec::with_capacity(300_000);
        let mut cross = Vec::with_capacity(300_000);
        for _ in 0..300_000 {
            let u = sample_unit_sphere(d, p, &mut r).unwrap();
            cubes.push(u[0].abs().powi(3));
            cross.push(u[0] * u[0] * u[1].abs());
        }
        assert_z("E|U1|^3", &cubes, 0.1, 3.0);
        assert_z("E[U1²|U2|]", &cross, cross_want, 3.0);
    }

    #[test]
    fn ball_points_stay_inside() {
        let mut r = rng(7);
        for &p in &[1.0, 2.0, 4.5] {
            for _ in 0..500 {
                let u = sample_unit_ball(6, p, &mut r).unwrap();
                assert!(lp_norm(&u, p) <= 1.0 + 1e-15);
            }
        }
    }

    #[test]
    fn ball_norm_moment_d5_p2() {
        // E[‖Ũ‖₂^p] = E[W^{p/d}] = d/(d+p) = 5/7.
        let mut r = rng(8);
        let xs: Vec<f64> = (0..200_000)
            .map(|_| lp_norm(&sample_unit_ball(5, 2.0, &mut r).unwrap(), 2.0).powi(2))
            .collect();
        assert_z("E‖Ũ‖²", &xs, 5.0 / 7.0, 3.0);

        // Independent route: rejection sampling from the cube.
        let mut r = rng(9);
        let mut rejection = Vec::new();
        while rejection.len() < 200_000 {
            let x: Vec<f64> = (0..5).map(|_| r.random_range(-1.0..1.0)).collect();
            let n2: f64 = x.iter().map(|v| v * v).sum();
            if n2 < 1.0 {
                rejection.push(n2);
            }
        }
        let (a, sa) = mean_se(&xs);
        let (b, sb) = mean_se(&rejection);
        assert!((a - b).abs() <= 4.0 * (sa * sa + sb * sb).sqrt());
    }

    #[test]
    fn one_dimensional_ball_is_an_interval() {
        let mut r = rng(10);
        let xs: Vec<f64> = (0..200_000).map(|_| sample_unit_ball(1, 1.0, &mut r).unwrap()[0]).collect();
        assert!(xs.iter().all(|x| x.abs() < 1.0));
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        assert_z("E[Ũ²]", &sq, 1.0 / 3.0, 4.0);
    }

    #[test]
    fn xi_collapses_in_one_dimension() {
        let xi = radial_xi(1, 2.0, 1.0, Shell::Sphere).unwrap();
        assert!((xi - 3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn xi_calibration_identity_d100_p5() {
        let xi = radial_xi(100, 5.0, 1.0, Shell::Sphere).unwrap();
        // mpmath: ξ = 5.5199173268186307796
        assert!((xi - 5.519_917_326_818_630_8).abs() < 1e-12);
        let e_u1_sq = sphere_abs_moment(2.0, 100, 5.0);
        assert!((xi * xi / 3.0 * e_u1_sq - 1.0).abs() < 1e-10);
    }

    #[test]
    fn ball_xi_stretch() {
        let s = radial_xi(5, 2.0, 1.0, Shell::Sphere).unwrap();
        let b = radial_xi(5, 2.0, 1.0, Shell::Ball).unwrap();
        assert!((b / s - (7.0f64 / 5.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn moment_r0_values() {
        assert_eq!(moment_r0(0, 10, 3.0, 0.7).unwrap(), 1.0);
        let second = moment_r0(2, 10, 3.0, 0.7).unwrap();
        assert!((second - radial_second_moment(10, 3.0, 0.7)).abs() < 1e-12 * second);
        assert!(matches!(moment_r0(-1, 10, 3.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn moment_r0_large_p_regime() {
        let exact = moment_r0(3, 5, 5000.0, 1.0).unwrap();
        let approx = moment_r0_approx(3, 5, 5000.0, 1.0, Regime::LargeP).unwrap();
        // mpmath: 4.0748540846297 vs 4.0748508710125.
        assert!((exact - 4.074_854_084_629_708).abs() < 1e-9);
        assert!(((exact - approx) / approx).abs() < 0.05);
    }

    #[test]
    fn moment_r0_small_p_regime_tracks_exact() {
        let exact = moment_r0(3, 100_000, 2.0, 1.0).unwrap();
        let approx = moment_r0_approx(3, 100_000, 2.0, 1.0, Regime::SmallP).unwrap();
        assert!(((exact - approx) / exact).abs() < 1e-3);
    }

    #[test]
    fn iid_uniform_second_moment() {
        let batch = draw_batch(
            DirectionLaw::IidUniform { half_width: 1.0 },
            RadialLaw::uniform_xi(1.0),
            1_000_000,
            1,
            11,
        )
        .unwrap();
        let sq: Vec<f64> = batch.values().iter().map(|v| v * v).collect();
        assert_z("E[V1²] iid", &sq, 1.0 / 3.0, 4.0);
    }

    #[test]
    fn calibration_for_all_law_combinations() {
        let d = 10;
        for law in [DirectionLaw::PSphere { p: 3.0 }, DirectionLaw::PBall { p: 3.0 }] {
            for radial in [RadialLaw::uniform_xi(1.0), RadialLaw::dirac(1.0)] {
                let batch = draw_batch(law, radial, 200_000, d, 12).unwrap();
                // Average over coordinates per row keeps the rows iid.
                let per_row: Vec<f64> =
                    batch.rows().map(|r| r.iter().map(|v| v * v).sum::<f64>() / d as f64).collect();
                assert_z(&format!("{law:?} {radial:?}"), &per_row, 1.0, 4.0);
            }
        }
    }

    #[test]
    fn odd_moments_vanish() {
        let batch =
            draw_batch(DirectionLaw::PSphere { p: 3.0 }, RadialLaw::uniform_xi(1.0), 400_000, 4, 13)
                .unwrap();
        let v1: Vec<f64> = batch.rows().map(|r| r[0]).collect();
        let v12: Vec<f64> = batch.rows().map(|r| r[0] * r[1]).collect();
        let v1c: Vec<f64> = batch.rows().map(|r| r[0].powi(3)).collect();
        assert_z("E[V1]", &v1, 0.0, 4.0);
        assert_z("E[V1 V2]", &v12, 0.0, 4.0);
        assert_z("E[V1³]", &v1c, 0.0, 4.0);
    }

    #[test]
    fn batches_are_deterministic() {
        let law = DirectionLaw::PBall { p: 2.5 };
        let a = draw_batch(law, RadialLaw::uniform_xi(0.3), 50, 7, 99).unwrap();
        let b = draw_batch(law, RadialLaw::uniform_xi(0.3), 50, 7, 99).unwrap();
        assert_eq!(a, b);
        let c = draw_batch(law, RadialLaw::uniform_xi(0.3), 50, 7, 100).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn batch_independent_of_thread_count() {
        let law = DirectionLaw::PSphere { p: 4.0 };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| draw_batch(law, RadialLaw::uniform_xi(1.0), 300, 9, 5).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    fn max_identity_deviation(batch: &SampleBatch, sigma: f64) -> f64 {
        let d = batch.dim();
        let m = batch.second_moment_matrix();
        let mut worst = 0.0f64;
        for a in 0..d {
            for b in 0..d {
                let want = if a == b { sigma * sigma } else { 0.0 };
                worst = worst.max((m[a * d + b] - want).abs());
            }
        }
        worst
    }

    #[test]
    fn decorrelated_second_moment_is_exact() {
        let sigma = 0.8;
        let batch =
            draw_batch(DirectionLaw::PSphere { p: 3.0 }, RadialLaw::uniform_xi(sigma), 40, 12, 3)
                .unwrap();
        let out = decorrelate(&batch, sigma).unwrap();
        assert!(out.is_decorrelated());
        assert!(max_identity_deviation(&out, sigma) < 1e-10);
    }

    #[test]
    fn centered_sample_normalization() {
        let sigma = 0.5;
        let batch =
            draw_batch(DirectionLaw::PBall { p: 2.0 }, RadialLaw::uniform_xi(sigma), 11, 10, 4).unwrap();
        let opts = Decorrelation { center: true, normalization: Normalization::Sample };
        let out = decorrelate_with(&batch, sigma, opts).unwrap();
        let (n, d) = (out.n(), out.dim());
        for j in 0..d {
            let mean: f64 = out.rows().map(|r| r[j]).sum::<f64>() / n as f64;
            assert!(mean.abs() < 1e-12);
        }
        let m = out.second_moment_matrix();
        let diag = sigma * sigma * (n as f64 - 1.0) / n as f64;
        for a in 0..d {
            for b in 0..d {
                let want = if a == b { diag } else { 0.0 };
                assert!((m[a * d + b] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn decorrelate_is_idempotent_on_orthogonal_input() {
        let sigma = 1.3;
        let batch =
            draw_batch(DirectionLaw::PSphere { p: 2.0 }, RadialLaw::uniform_xi(sigma), 30, 5, 8).unwrap();
        let once = decorrelate(&batch, sigma).unwrap();
        let twice = decorrelate(&once, sigma).unwrap();
        for (a, b) in once.values().iter().zip(twice.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn decorrelate_needs_enough_rows() {
        let batch =
            draw_batch(DirectionLaw::PSphere { p: 2.0 }, RadialLaw::uniform_xi(1.0), 9, 10, 1).unwrap();
        assert!(matches!(decorrelate(&batch, 1.0), Err(Error::NotApplicable(_))));
        let batch =
            draw_batch(DirectionLaw::PSphere { p: 2.0 }, RadialLaw::uniform_xi(1.0), 10, 10, 1).unwrap();
        assert!(decorrelate(&batch, 1.0).is_ok());
        let centered = Decorrelation { center: true, ..Default::default() };
        assert!(matches!(
            decorrelate_with(&batch, 1.0, centered),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn decorrelate_rejects_rank_deficient_batch() {
        let mut batch =
            draw_batch(DirectionLaw::PSphere { p: 2.0 }, RadialLaw::uniform_xi(1.0), 20, 3, 2).unwrap();
        for i in 0..20 {
            batch.values[i * 3 + 2] = 2.0 * batch.values[i * 3];
        }
        assert!(matches!(decorrelate(&batch, 1.0), Err(Error::DegenerateSample(_))));
    }
}
