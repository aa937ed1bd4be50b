use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::row_stream;
use crate::sampler::{moment_r0, radial_xi, sample_unit_sphere, sphere_abs_moment, sphere_u1sq_abs_u2, Shell};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEntry {
    pub name: String,
    pub analytic: f64,
    pub empirical: f64,
    pub se: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub d: usize,
    pub p: f64,
    pub draws: usize,
    pub seed: u64,
    pub entries: Vec<MomentEntry>,
}

impl MomentReport {
    pub fn max_abs_z(&self) -> f64 {
        self.entries.iter().map(|e| e.z.abs()).fold(0.0, f64::max)
    }
}

/// Running mean and sum of squared deviations, mergeable.
#[derive(Clone, Copy, Default)]
struct Stat {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Stat {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let delta = x - self.mean;
        self.mean += delta / self.n;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(self, other: Stat) -> Stat {
        if self.n == 0.0 {
            return other;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        Stat {
            n,
            mean: self.mean + delta * other.n / n,
            m2: self.m2 + other.m2 + delta * delta * self.n * other.n / n,
        }
    }

    fn se(&self) -> f64 {
        if self.n < 2.0 {
            return 0.0;
        }
        (self.m2 / (self.n - 1.0) / self.n).sqrt()
    }
}

const CHUNK: usize = 8192;
// |U₁|^q for q = 1..4, U₁²|U₂|, V₁², R₀^q for q = 1..4.
const STATS: usize = 10;

/// Compares Monte Carlo estimates of the direction and radius moments with
/// their closed forms, at σ = 1 and the uniform radius.
pub fn moments_check(d: usize, p: f64, draws: usize, seed: u64) -> Result<MomentReport> {
    if draws < 2 {
        return Err(Error::Domain("need at least two draws".into()));
    }
    let xi = radial_xi(d, p, 1.0, Shell::Sphere)?;
    let chunks = draws.div_ceil(CHUNK);

    let partial: Vec<[Stat; STATS]> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut s = [Stat::default(); STATS];
            for i in c * CHUNK..((c + 1) * CHUNK).min(draws) {
                let mut rng = row_stream(seed, i as u64);
                let u = sample_unit_sphere(d, p, &mut rng).expect("validated above");
                let r = xi * rng.random::<f64>();
                let a = u[0].abs();
                for q in 0..4 {
                    s[q].push(a.powi(q as i32 + 1));
                    s[6 + q].push(r.powi(q as i32 + 1));
                }
                if d >= 2 {
                    s[4].push(u[0] * u[0] * u[1].abs());
                }
                s[5].push((r * u[0]).powi(2));
            }
            s
        })
        .collect();

    let mut total = [Stat::default(); STATS];
    for chunk in partial {
        for (t, s) in total.iter_mut().zip(chunk) {
            *t = t.merge(s);
        }
    }

    let mut entries = Vec::new();
    let mut add = |name: String, analytic: f64, stat: &Stat| {
        let se = stat.se();
        let diff = stat.mean - analytic;
        let z = if se > 0.0 {
            diff / se
        } else if diff.abs() <= 1e-12 * analytic.abs().max(1.0) {
            0.0
        } else {
            f64::INFINITY
        };
        entries.push(MomentEntry { name, analytic, empirical: stat.mean, se, z });
    };
    for q in 1..=4 {
        add(format!("E|U1|^{q}"), sphere_abs_moment(q as f64, d, p), &total[q - 1]);
    }
    if d >= 2 {
        add("E[U1^2 |U2|]".into(), sphere_u1sq_abs_u2(d, p), &total[4]);
    }
    add("E[V1^2]".into(), 1.0, &total[5]);
    for q in 1..=4 {
        add(format!("E[R0^{q}]"), moment_r0(q as i32, d, p, 1.0)?, &total[5 + q]);
    }

    Ok(MomentReport { d, p, draws, seed, entries })
}
