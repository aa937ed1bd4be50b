//! L-point evaluation stencils.
//!
//! A stencil is a set of multipliers β₁…β_L and weights C₁…C_L with
//! Σ_ℓ C_ℓ β_ℓ^r = δ_{1,r} over the exponent range of its [`ConstraintMode`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Condition numbers above this attach a warning to the scheme.
pub const CONDITION_WARNING: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintMode {
    /// r = 0, 1, …, L−1.
    LowOrder,
    /// r = 1, 3, …, 2L−1.
    OddOrder,
    /// L = 1 with β = C = 1; used with the centered estimator.
    Singleton,
}

impl ConstraintMode {
    fn exponents(self, l: usize) -> Vec<i32> {
        match self {
            ConstraintMode::LowOrder => (0..l as i32).collect(),
            ConstraintMode::OddOrder => (0..l as i32).map(|k| 2 * k + 1).collect(),
            ConstraintMode::Singleton => vec![1],
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ConstraintMode::LowOrder => "low-order",
            ConstraintMode::OddOrder => "odd-order",
            ConstraintMode::Singleton => "singleton",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointScheme {
    betas: Vec<f64>,
    coeffs: Vec<f64>,
    mode: ConstraintMode,
    theta: u32,
    warning: Option<String>,
}

impl PointScheme {
    /// The two-point antithetic stencil β = (1, −1), C = (1/2, −1/2).
    pub fn central() -> Self {
        build_scheme(&[1.0, -1.0], ConstraintMode::LowOrder).expect("well-posed")
    }

    pub fn singleton() -> Self {
        build_scheme(&[1.0], ConstraintMode::Singleton).expect("well-posed")
    }

    pub fn l(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn mode(&self) -> ConstraintMode {
        self.mode
    }

    /// Nominal order: the surrogate error is O(h^{2θ}). Metadata only.
    pub fn theta(&self) -> u32 {
        self.theta
    }

    pub fn conditioning_warning(&self) -> Option<&str> {
        self.warning.as_deref()
    }

    pub fn beta_max(&self) -> f64 {
        self.betas.iter().fold(0.0f64, |m, b| m.max(b.abs()))
    }

    /// max_r |Σ_ℓ C_ℓ β_ℓ^r − δ_{1,r}| over the mode's exponents.
    pub fn residual(&self) -> f64 {
        self.mode
            .exponents(self.l())
            .into_iter()
            .map(|r| {
                let lhs: f64 = self.coeffs.iter().zip(&self.betas).map(|(c, b)| c * b.powi(r)).sum();
                (lhs - if r == 1 { 1.0 } else { 0.0 }).abs()
            })
            .fold(0.0, f64::max)
    }
}

impl Default for PointScheme {
    fn default() -> Self {
        PointScheme::central()
    }
}

/// Solves the constraint system for the weights.
pub fn build_scheme(betas: &[f64], mode: ConstraintMode) -> Result<PointScheme> {
    let l = betas.len();
    if l == 0 {
        return Err(Error::InvalidScheme("at least one beta is required".into()));
    }
    if let Some(b) = betas.iter().find(|b| !b.is_finite()) {
        return Err(Error::InvalidScheme(format!("beta {b} is not finite")));
    }
    for i in 0..l {
        for j in 0..i {
            if betas[i] == betas[j] {
                return Err(Error::SingularSystem(format!("beta {} is repeated", betas[i])));
            }
        }
    }
    match mode {
        ConstraintMode::Singleton if betas != [1.0] => {
            return Err(Error::InvalidScheme("singleton mode requires betas = [1]".into()));
        }
        ConstraintMode::LowOrder if l < 2 => {
            // r = 0 alone forces C = 0.
            return Err(Error::InvalidScheme("low-order mode needs at least two betas".into()));
        }
        ConstraintMode::OddOrder if betas.contains(&0.0) => {
            return Err(Error::SingularSystem("odd-order mode forbids beta = 0".into()));
        }
        _ => {}
    }

    let exps = mode.exponents(l);
    // Row k is the r_k constraint: Σ_ℓ C_ℓ β_ℓ^{r_k}.
    let a: Vec<f64> = exps.iter().flat_map(|&r| betas.iter().map(move |b| b.powi(r))).collect();
    let rhs: Vec<f64> = exps.iter().map(|&r| if r == 1 { 1.0 } else { 0.0 }).collect();

    let coeffs = solve_refined(&a, &rhs, l)?;
    let cond = condition_l1(&a, l)?;
    let warning = (cond > CONDITION_WARNING)
        .then(|| format!("constraint system is ill-conditioned (condition estimate {cond:.3e})"));

    let theta = match mode {
        ConstraintMode::Singleton => 1,
        ConstraintMode::OddOrder => l as u32,
        ConstraintMode::LowOrder => (l / 2).max(1) as u32,
    };

    Ok(PointScheme { betas: betas.to_vec(), coeffs, mode, theta, warning })
}

/// True iff max_ℓ|β_ℓ|·h·σ ≤ 1/2.
pub fn validate_bandwidth(scheme: &PointScheme, h: f64, sigma: f64) -> bool {
    scheme.beta_max() * h * sigma <= 0.5
}

/// LU with partial pivoting, row-major `n×n`. Returns the factored matrix and
/// the pivot order.
fn lu(a: &[f64], n: usize) -> Result<(Vec<f64>, Vec<usize>)> {
    let mut m = a.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (pivot_row, pivot) = (k..n)
            .map(|i| (i, m[i * n + k].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pivot > 0.0 && pivot.is_finite()) {
            return Err(Error::SingularSystem("constraint matrix is singular".into()));
        }
        if pivot_row != k {
            for j in 0..n {
                m.swap(k * n + j, pivot_row * n + j);
            }
            perm.swap(k, pivot_row);
        }
        for i in k + 1..n {
            let factor = m[i * n + k] / m[k * n + k];
            m[i * n + k] = factor;
            for j in k + 1..n {
                m[i * n + j] -= factor * m[k * n + j];
            }
        }
    }
    Ok((m, perm))
}

fn lu_solve(lu: &[f64], perm: &[usize], b: &[f64], n: usize) -> Vec<f64> {
    let mut y: Vec<f64> = perm.iter().map(|&p| b[p]).collect();
    for i in 0..n {
        for j in 0..i {
            y[i] -= lu[i * n + j] * y[j];
        }
    }
    for i in (0..n).rev() {
        for j in i + 1..n {
            y[i] -= lu[i * n + j] * y[j];
        }
        y[i] /= lu[i * n + i];
    }
    y
}

/// Direct solve plus one step of iterative refinement.
fn solve_refined(a: &[f64], b: &[f64], n: usize) -> Result<Vec<f64>> {
    let (f, perm) = lu(a, n)?;
    let mut x = lu_solve(&f, &perm, b, n);
    let resid: Vec<f64> = (0..n)
        .map(|i| b[i] - (0..n).map(|j| a[i * n + j] * x[j]).sum::<f64>())
        .collect();
    let dx = lu_solve(&f, &perm, &resid, n);
    x.iter_mut().zip(dx).for_each(|(xi, d)| *xi += d);
    Ok(x)
}

/// κ₁(A) = ‖A‖₁‖A⁻¹‖₁ via the explicit inverse; L is small.
fn condition_l1(a: &[f64], n: usize) -> Result<f64> {
    let (f, perm) = lu(a, n)?;
    let col_norm = |m: &dyn Fn(usize, usize) -> f64| {
        (0..n).map(|j| (0..n).map(|i| m(i, j).abs()).sum::<f64>()).fold(0.0, f64::max)
    };
    let inv_cols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let e: Vec<f64> = (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect();
            lu_solve(&f, &perm, &e, n)
        })
        .collect();
    let norm_a = col_norm(&|i, j| a[i * n + j]);
    let norm_inv = col_norm(&|i, j| inv_cols[j][i]);
    Ok(norm_a * norm_inv)
}
