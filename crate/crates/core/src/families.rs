//! Seeded random test instances for every built-in function family.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::ppa::{BoxIndicator, MaxAffine, Metric, PpaError, ProxFunction, Quadratic, ScaledL1};
use crate::schedule::StepSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    L1,
    Quad,
    Box,
    MaxAffine,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::L1, Family::Quad, Family::Box, Family::MaxAffine];

    pub fn name(self) -> &'static str {
        match self {
            Family::L1 => "l1",
            Family::Quad => "quad",
            Family::Box => "box",
            Family::MaxAffine => "maxaffine",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown function family `{s}` (expected l1, quad, box or maxaffine)"))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct InstanceOptions {
    pub max_n: usize,
    pub max_dim: usize,
    /// Probability of drawing a non-identity metric.
    pub metric_probability: f64,
}

impl Default for InstanceOptions {
    fn default() -> Self {
        Self {
            max_n: 50,
            max_dim: 4,
            metric_probability: 0.5,
        }
    }
}

#[derive(Debug)]
pub struct RandomInstance {
    pub family: Family,
    pub function: Box<dyn ProxFunction>,
    pub schedule: StepSchedule,
    pub x0: Vec<f64>,
    pub metric: Metric,
    pub radius: f64,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn vector<R: Rng + ?Sized>(rng: &mut R, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| uniform(rng, -scale, scale)).collect()
}

/// `A Aᵀ + c I` with entries of `A` uniform in `[−1, 1]` and `c ∈ [0.1, 1]`.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Matrix {
    let a = Matrix::from_fn(dim, dim, |_, _| uniform(rng, -1.0, 1.0));
    let c = uniform(rng, 0.1, 1.0);
    a.matmul(&a.transpose()).add(&Matrix::identity(dim).scale(c)).symmetrized()
}

pub fn random_metric<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Metric {
    Metric::new(random_spd(rng, dim)).expect("A Aᵀ + cI is positive definite")
}

fn random_function<R: Rng + ?Sized>(family: Family, rng: &mut R, dim: usize) -> Result<Box<dyn ProxFunction>, PpaError> {
    Ok(match family {
        Family::L1 => Box::new(ScaledL1::new(uniform(rng, 0.05, 2.0), dim)?),
        Family::Quad => {
            let q = random_spd(rng, dim);
            Box::new(Quadratic::new(q, vector(rng, dim, 1.0))?)
        }
        Family::Box => {
            let lower: Vec<f64> = vector(rng, dim, 2.0);
            let upper = lower.iter().map(|l| l + uniform(rng, 0.0, 2.0)).collect();
            Box::new(BoxIndicator::new(lower, upper)?)
        }
        Family::MaxAffine => {
            // slopes with 0 in their convex hull, all pieces active at x*
            let k = rng.random_range(2..=dim + 2);
            let x_star = vector(rng, dim, 1.0);
            let mut slopes: Vec<Vec<f64>> = (0..k - 1).map(|_| vector(rng, dim, 2.0)).collect();
            let w: Vec<f64> = (0..k).map(|_| uniform(rng, 0.2, 1.0)).collect();
            let last = (0..dim)
                .map(|j| -slopes.iter().zip(&w).map(|(a, wk)| wk * a[j]).sum::<f64>() / w[k - 1])
                .collect();
            slopes.push(last);
            let offsets = slopes
                .iter()
                .map(|a| -a.iter().zip(&x_star).map(|(p, q)| p * q).sum::<f64>())
                .collect();
            Box::new(MaxAffine::new(slopes, offsets)?.with_minimizer(x_star)?)
        }
    })
}

/// A random function of `family` with a known minimizer, a schedule of
/// length `1..=max_n`, and `x_0` with `R ∈ [1, 1.5] · ‖x_0 − x*‖_B`.
pub fn random_instance<R: Rng + ?Sized>(family: Family, rng: &mut R, opts: &InstanceOptions) -> Result<RandomInstance, PpaError> {
    let dim = rng.random_range(1..=opts.max_dim.max(1));
    let n = rng.random_range(1..=opts.max_n.max(1));
    let schedule = StepSchedule::random(n, rng)?;
    let metric = if rng.random::<f64>() < opts.metric_probability {
        random_metric(rng, dim)
    } else {
        Metric::identity(dim)
    };
    let function = random_function(family, rng, dim)?;
    let x_star = function.minimizer().expect("families carry a minimizer");
    let x0: Vec<f64> = x_star.iter().map(|v| v + uniform(rng, -3.0, 3.0)).collect();
    let d: Vec<f64> = x0.iter().zip(&x_star).map(|(a, b)| a - b).collect();
    let radius = metric.norm(&d).max(1e-3) * uniform(rng, 1.0, 1.5);
    Ok(RandomInstance {
        family,
        function,
        schedule,
        x0,
        metric,
        radius,
    })
}
