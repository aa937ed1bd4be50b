//! Tensor metric of non-independent inputs.
//!
//! The dependent gradient is `G⁻¹ ∇f`, where `G` is symmetric positive
//! semidefinite and `G⁻¹` is its Moore-Penrose inverse. Independent inputs
//! use the identity marker, which skips all matrix work.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Norm {
    L1,
    L2,
}

#[derive(Clone, Debug, PartialEq)]
enum Repr {
    Identity,
    Dense { g: DMatrix<f64>, ginv: DMatrix<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorMetric {
    dim: usize,
    repr: Repr,
    tag: String,
    abs_ginv_ones_l1: f64,
    abs_ginv_ones_l2: f64,
    spectral_norm_ginv: f64,
}

pub fn identity_metric(d: usize) -> Result<TensorMetric> {
    if d == 0 {
        return Err(Error::Domain("dimension must be at least 1".into()));
    }
    let df = d as f64;
    Ok(TensorMetric {
        dim: d,
        repr: Repr::Identity,
        tag: "identity".into(),
        abs_ginv_ones_l1: df,
        abs_ginv_ones_l2: df.sqrt(),
        spectral_norm_ginv: 1.0,
    })
}

/// Exponential correlation 𝓡_{ij} = ρ^{|i−j|} and G = 𝓡·𝓡.
pub fn exp_corr_metric(d: usize, rho: f64) -> Result<TensorMetric> {
    if d == 0 {
        return Err(Error::Domain("dimension must be at least 1".into()));
    }
    if !(rho.is_finite() && rho.abs() < 1.0) {
        return Err(Error::Domain(format!("correlation must lie in (-1, 1), got {rho}")));
    }
    let r = DMatrix::from_fn(d, d, |i, j| rho.powi(i.abs_diff(j) as i32));
    let g = &r * &r;
    let mut m = TensorMetric::from_nalgebra(g)?;
    m.tag = format!("exp-corr:{rho}");
    Ok(m)
}

impl TensorMetric {
    /// Builds a metric from a dense row-major `d×d` matrix.
    pub fn from_matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if d == 0 {
            return Err(Error::Domain("metric matrix is empty".into()));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
        }
        Self::from_nalgebra(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    fn from_nalgebra(g: DMatrix<f64>) -> Result<Self> {
        let d = g.nrows();
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("metric matrix has non-finite entries".into()));
        }
        for i in 0..d {
            for j in 0..i {
                if (g[(i, j)] - g[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(Error::Domain(format!(
                        "metric matrix is not symmetric at ({i}, {j}): {} vs {}",
                        g[(i, j)],
                        g[(j, i)]
                    )));
                }
            }
        }
        let sym = (&g + g.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let lambda_max = eig.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
        let tau = d as f64 * f64::EPSILON * lambda_max;
        let inv_vals = eig.eigenvalues.map(|l| if l.abs() > tau { 1.0 / l } else { 0.0 });
        let q = &eig.eigenvectors;
        let ginv = q * DMatrix::from_diagonal(&inv_vals) * q.transpose();
        let spectral = inv_vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));

        let row_sums: Vec<f64> = (0..d).map(|i| ginv.row(i).iter().map(|v| v.abs()).sum()).collect();
        let l1 = row_sums.iter().sum();
        let l2 = row_sums.iter().map(|v| v * v).sum::<f64>().sqrt();

        Ok(TensorMetric {
            dim: d,
            repr: Repr::Dense { g, ginv },
            tag: "matrix".into(),
            abs_ginv_ones_l1: l1,
            abs_ginv_ones_l2: l2,
            spectral_norm_ginv: spectral,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.repr, Repr::Identity)
    }

    /// Short label for reports: `identity`, `exp-corr:<rho>` or `matrix`.
    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }

    /// ‖|G⁻¹|𝟙‖₁.
    pub fn abs_ginv_ones_l1(&self) -> f64 {
        self.abs_ginv_ones_l1
    }

    /// ‖|G⁻¹|𝟙‖₂.
    pub fn abs_ginv_ones_l2(&self) -> f64 {
        self.abs_ginv_ones_l2
    }

    pub fn abs_ginv_ones(&self, norm: Norm) -> f64 {
        match norm {
            Norm::L1 => self.abs_ginv_ones_l1,
            Norm::L2 => self.abs_ginv_ones_l2,
        }
    }

    /// Largest singular value of G⁻¹.
    pub fn spectral_norm_ginv(&self) -> f64 {
        self.spectral_norm_ginv
    }

    /// G as a row-major matrix.
    pub fn g(&self) -> Vec<Vec<f64>> {
        match &self.repr {
            Repr::Identity => identity_rows(self.dim),
            Repr::Dense { g, .. } => to_rows(g),
        }
    }

    /// G⁻¹ as a row-major matrix.
    pub fn ginv(&self) -> Vec<Vec<f64>> {
        match &self.repr {
            Repr::Identity => identity_rows(self.dim),
            Repr::Dense { ginv, .. } => to_rows(ginv),
        }
    }

    pub fn apply_inverse(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.apply(v, |repr| match repr {
            Repr::Dense { ginv, .. } => Some(ginv),
            Repr::Identity => None,
        })
    }

    pub fn apply_metric(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.apply(v, |repr| match repr {
            Repr::Dense { g, .. } => Some(g),
            Repr::Identity => None,
        })
    }

    fn apply(&self, v: &[f64], pick: impl Fn(&Repr) -> Option<&DMatrix<f64>>) -> Result<Vec<f64>> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: v.len() });
        }
        Ok(match pick(&self.repr) {
            None => v.to_vec(),
            Some(m) => (m * DVector::from_column_slice(v)).as_slice().to_vec(),
        })
    }
}

fn identity_rows(d: usize) -> Vec<Vec<f64>> {
    (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn max_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = a.len();
        (0..n)
            .map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect())
            .collect()
    }

    #[test]
    fn identity_norms() {
        let m = identity_metric(10).unwrap();
        assert!((m.abs_ginv_ones_l2() - 10f64.sqrt()).abs() < 1e-15);
        assert_eq!(m.abs_ginv_ones_l1(), 10.0);
        assert_eq!(m.spectral_norm_ginv(), 1.0);
        let one = identity_metric(1).unwrap();
        assert_eq!((one.abs_ginv_ones_l1(), one.abs_ginv_ones_l2(), one.spectral_norm_ginv()), (1.0, 1.0, 1.0));
        assert_eq!(m.apply_inverse(&[3.0; 10]).unwrap(), vec![3.0; 10]);
    }

    #[test]
    fn dense_identity_matches_marker() {
        let m = TensorMetric::from_matrix(&identity_rows(4)).unwrap();
        let id = identity_metric(4).unwrap();
        assert!(max_diff(&m.ginv(), &id.ginv()) < 1e-15);
        assert!((m.abs_ginv_ones_l2() - id.abs_ginv_ones_l2()).abs() < 1e-14);
        assert!((m.abs_ginv_ones_l1() - id.abs_ginv_ones_l1()).abs() < 1e-14);
        assert!((m.spectral_norm_ginv() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal_inverse() {
        let m = TensorMetric::from_matrix(&[vec![4.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(max_diff(&m.ginv(), &[vec![0.25, 0.0], vec![0.0, 1.0]]) < 1e-15);
        assert!((m.abs_ginv_ones_l2() - (1.0f64 / 16.0 + 1.0).sqrt()).abs() < 1e-15);
        let out = m.apply_inverse(&[4.0, 3.0]).unwrap();
        assert!((out[0] - 1.0).abs() < 1e-15 && (out[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn singular_pseudo_inverse() {
        let m = TensorMetric::from_matrix(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(max_diff(&m.ginv(), &[vec![1.0, 0.0], vec![0.0, 0.0]]) < 1e-15);
        let g = m.g();
        assert!(max_diff(&matmul(&matmul(&g, &m.ginv()), &g), &g) < 1e-8);
    }

    #[test]
    fn rejects_asymmetric_and_ragged() {
        assert!(matches!(
            TensorMetric::from_matrix(&[vec![1.0, 0.5], vec![0.0, 1.0]]),
            Err(Error::Domain(_))
        ));
        assert!(TensorMetric::from_matrix(&[vec![1.0, 0.0], vec![0.0]]).is_err());
    }

    #[test]
    fn exp_corr_small_cases() {
        let one = exp_corr_metric(1, 0.5).unwrap();
        assert!(max_diff(&one.g(), &[vec![1.0]]) < 1e-15);
        let two = exp_corr_metric(2, 0.5).unwrap();
        assert!(max_diff(&two.g(), &[vec![1.25, 1.0], vec![1.0, 1.25]]) < 1e-15);
        let v = two.apply_metric(&[1.0, 1.0]).unwrap();
        let back = two.apply_inverse(&v).unwrap();
        assert!((back[0] - 1.0).abs() < 1e-8 && (back[1] - 1.0).abs() < 1e-8);
        assert!(exp_corr_metric(3, 1.0).is_err());
        assert!(exp_corr_metric(3, -1.2).is_err());
    }

    #[test]
    fn exp_corr_d10_inverse() {
        let m = exp_corr_metric(10, 0.5).unwrap();
        let prod = matmul(&m.g(), &m.ginv());
        assert!(max_diff(&prod, &identity_rows(10)) < 1e-8);
        assert!(m.abs_ginv_ones_l2() <= 10f64.sqrt() * m.spectral_norm_ginv() * (1.0 + 1e-12));
    }

    #[test]
    fn exp_corr_zero_is_identity() {
        let m = exp_corr_metric(6, 0.0).unwrap();
        let id = identity_metric(6).unwrap();
        assert!(max_diff(&m.ginv(), &id.ginv()) < 1e-14);
        assert!((m.abs_ginv_ones_l2() - id.abs_ginv_ones_l2()).abs() < 1e-13);
    }

    #[test]
    fn dimension_mismatch() {
        let m = identity_metric(3).unwrap();
        assert_eq!(m.apply_inverse(&[1.0]), Err(Error::DimensionMismatch { expected: 3, got: 1 }));
    }

    proptest! {
        #[test]
        fn inverse_round_trip(
            d in 2usize..8,
            rho in -0.8f64..0.8,
            v in prop::collection::vec(-5.0f64..5.0, 8),
        ) {
            let m = exp_corr_metric(d, rho).unwrap();
            let v = &v[..d];
            let back = m.apply_inverse(&m.apply_metric(v).unwrap()).unwrap();
            for (a, b) in back.iter().zip(v) {
                prop_assert!((a - b).abs() < 1e-8);
            }
        }

        #[test]
        fn stored_norms_match_brute_force(d in 1usize..7, rho in -0.9f64..0.9) {
            let m = exp_corr_metric(d, rho).unwrap();
            let sums: Vec<f64> = m.ginv().iter().map(|r| r.iter().map(|v| v.abs()).sum()).collect();
            let l1: f64 = sums.iter().sum();
            let l2 = sums.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((l1 - m.abs_ginv_ones_l1()).abs() <= 1e-12 * l1.max(1.0));
            prop_assert!((l2 - m.abs_ginv_ones_l2()).abs() <= 1e-12 * l2.max(1.0));
            prop_assert!(l2 <= (d as f64).sqrt() * m.spectral_norm_ginv() * (1.0 + 1e-12));
            let g = m.g();
            prop_assert!(max_diff(&matmul(&matmul(&g, &m.ginv()), &g), &g) < 1e-8);
        }
    }
}
