use crate::error::{Error, Result};

/// A smooth objective with a known gradient.
pub trait TestProblem: Send + Sync {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

/// r(x) = Σ_{k<d} (1 − x_k)² + 100 (x_{k+1} − x_k²)².
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rosenbrock {
    d: usize,
}

pub fn rosenbrock(d: usize) -> Result<Rosenbrock> {
    if d < 2 {
        return Err(Error::Domain(format!("Rosenbrock needs d >= 2, got {d}")));
    }
    Ok(Rosenbrock { d })
}

pub fn rosenbrock_grad(x: &[f64]) -> Vec<f64> {
    let d = x.len();
    let mut g = vec![0.0; d];
    for k in 0..d.saturating_sub(1) {
        let t = x[k + 1] - x[k] * x[k];
        g[k] += -2.0 * (1.0 - x[k]) - 400.0 * x[k] * t;
        g[k + 1] += 200.0 * t;
    }
    g
}

impl TestProblem for Rosenbrock {
    fn name(&self) -> String {
        "rosenbrock".into()
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn value(&self, x: &[f64]) -> f64 {
        x.windows(2)
            .map(|w| {
                let t = w[1] - w[0] * w[0];
                (1.0 - w[0]).powi(2) + 100.0 * t * t
            })
            .sum()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        rosenbrock_grad(x)
    }
}

/// Σ_k [M₂ sin(x_{2k−1}) + cos(x_{2k})] + (M₁ − M₂)/(2d) · (Σ x)².
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Synthetic {
    d: usize,
    m1: f64,
    m2: f64,
}

pub fn synthetic_ms(d: usize, m1: f64, m2: f64) -> Result<Synthetic> {
    if d == 0 || d % 2 != 0 {
        return Err(Error::Domain(format!("synthetic function needs a positive even d, got {d}")));
    }
    Ok(Synthetic { d, m1, m2 })
}

pub fn synthetic_ms_grad(x: &[f64], m1: f64, m2: f64) -> Vec<f64> {
    let d = x.len() as f64;
    let quad = (m1 - m2) / d * x.iter().sum::<f64>();
    x.iter()
        .enumerate()
        .map(|(k, &v)| quad + if k % 2 == 0 { m2 * v.cos() } else { -v.sin() })
        .collect()
}

impl Synthetic {
    pub fn m1(&self) -> f64 {
        self.m1
    }

    pub fn m2(&self) -> f64 {
        self.m2
    }
}

impl TestProblem for Synthetic {
    fn name(&self) -> String {
        "synthetic".into()
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn value(&self, x: &[f64]) -> f64 {
        let periodic: f64 = x.chunks_exact(2).map(|c| self.m2 * c[0].sin() + c[1].cos()).sum();
        let s: f64 = x.iter().sum();
        periodic + (self.m1 - self.m2) / (2.0 * self.d as f64) * s * s
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        synthetic_ms_grad(x, self.m1, self.m2)
    }
}

/// d^{−1/2} Σ_k (sin x_k + cos x_k); the gradient at 0 has unit ℓ₂ norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Trigonometric {
    d: usize,
}

impl Trigonometric {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        Ok(Trigonometric { d })
    }
}

impl TestProblem for Trigonometric {
    fn name(&self) -> String {
        "trigonometric".into()
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| v.sin() + v.cos()).sum::<f64>() / (self.d as f64).sqrt()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let s = 1.0 / (self.d as f64).sqrt();
        x.iter().map(|v| s * (v.cos() - v.sin())).collect()
    }
}
