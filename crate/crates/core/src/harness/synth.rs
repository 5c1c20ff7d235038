use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};

/// A link given as a plain function of the `d` index coordinates.
#[derive(Clone, Copy)]
pub struct CustomLink(pub fn(&[f64]) -> f64);

impl fmt::Debug for CustomLink {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomLink(..)")
    }
}

impl PartialEq for CustomLink {
    fn eq(&self, other: &Self) -> bool {
        std::ptr::fn_addr_eq(self.0, other.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    /// `x₂ / (1 + (x₁ − 1)²)`
    A,
    /// `max(0, x₁ − 0.1) + (x₂ + 1)/2`
    B,
    /// `x₂ exp(sin(x₁) x₂ + x₂)`
    C,
    /// `x₂ exp(sin(x₁) x₂ + x₃)`
    D,
    /// Sum of three one-dimensional piecewise linear functions.
    #[serde(alias = "e")]
    Pwlin,
    /// `(sin x₁ + cos(x₂ − ¼)) / (1 + x₁²)`
    F,
    /// `x₁`
    Linear,
    #[serde(skip)]
    Custom(CustomLink),
}

impl Link {
    pub const BUILTIN: [Link; 7] = [Link::A, Link::B, Link::C, Link::D, Link::Pwlin, Link::F, Link::Linear];

    pub fn id(&self) -> &'static str {
        match self {
            Link::A => "a",
            Link::B => "b",
            Link::C => "c",
            Link::D => "d",
            Link::Pwlin => "pwlin",
            Link::F => "f",
            Link::Linear => "linear",
            Link::Custom(_) => "custom",
        }
    }

    /// Number of index coordinates the link reads; `None` for custom links.
    pub fn intrinsic_dim(&self) -> Option<usize> {
        match self {
            Link::A | Link::B | Link::C | Link::F => Some(2),
            Link::D | Link::Pwlin => Some(3),
            Link::Linear => Some(1),
            Link::Custom(_) => None,
        }
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        match self {
            Link::A => u[1] / (1.0 + (u[0] - 1.0).powi(2)),
            Link::B => (u[0] - 0.1).max(0.0) + (u[1] + 1.0) / 2.0,
            Link::C => u[1] * (u[0].sin() * u[1] + u[1]).exp(),
            Link::D => u[1] * (u[0].sin() * u[1] + u[2]).exp(),
            Link::Pwlin => {
                let g1 = if u[0] < 0.0 { 0.1 * u[0] } else { 2.0 * (u[0] - 0.5) } + 0.05;
                let g2 = if u[1] < 0.0 { 2.0 * u[1] } else { 0.1 * (u[1] - 0.5) };
                let g3 = if u[2] < 0.0 { 5.0 * u[2] } else { 0.1 * (u[2] - 0.2) } + 1.0;
                g1 + g2 + g3
            }
            Link::F => (u[0].sin() + (u[1] - 0.25).cos()) / (1.0 + u[0] * u[0]),
            Link::Linear => u[0],
            Link::Custom(f) => (f.0)(u),
        }
    }
}

impl FromStr for Link {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "e" {
            return Ok(Link::Pwlin);
        }
        Link::BUILTIN
            .into_iter()
            .find(|l| l.id() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown link id `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub link: Link,
    /// Intrinsic dimension `d`.
    pub d: usize,
    /// Ambient dimension `D`.
    #[serde(rename = "D")]
    pub ambient_dim: usize,
    #[serde(rename = "N")]
    pub n: usize,
    /// Noise standard deviation as a fraction of the sample std of `g(AᵀX)`.
    pub noise_ratio: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(link: Link, ambient_dim: usize, n: usize, noise_ratio: f64, seed: u64) -> Result<Self> {
        let d = link
            .intrinsic_dim()
            .ok_or_else(|| Error::InvalidInput("custom links need an explicit d".into()))?;
        let spec = SyntheticSpec {
            link,
            d,
            ambient_dim,
            n,
            noise_ratio,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d > self.ambient_dim {
            return invalid(format!("need 1 ≤ d ≤ D, got d = {}, D = {}", self.d, self.ambient_dim));
        }
        if let Some(req) = self.link.intrinsic_dim() {
            if req != self.d {
                return invalid(format!("link `{}` has d = {req}, spec says {}", self.link.id(), self.d));
            }
        }
        if self.n == 0 {
            return invalid("N must be ≥ 1");
        }
        if !(self.noise_ratio >= 0.0 && self.noise_ratio.is_finite()) {
            return invalid(format!("noise_ratio must be finite and ≥ 0, got {}", self.noise_ratio));
        }
        Ok(())
    }

    /// `[e₁|…|e_d]`.
    pub fn true_basis(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.ambient_dim, self.d, |i, j| if i == j { 1.0 } else { 0.0 })
    }
}

/// `rows` independent points uniform on the unit ball in `R^dim`.
pub fn sample_unit_ball<R: Rng>(rng: &mut R, rows: usize, dim: usize) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(rows, dim);
    for i in 0..rows {
        let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let radius = rng.random::<f64>().powf(1.0 / dim as f64);
        let scale = if norm > 0.0 { radius / norm } else { 0.0 };
        for (j, v) in g.into_iter().enumerate() {
            x[(i, j)] = v * scale;
        }
    }
    x
}

/// Draws `(X, Y)` from the multi-index model and returns the true basis.
pub fn synth_dataset(spec: &SyntheticSpec) -> Result<(Dataset, DMatrix<f64>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let x = sample_unit_ball(&mut rng, spec.n, spec.ambient_dim);
    let clean: Vec<f64> = (0..spec.n)
        .map(|i| {
            let u: Vec<f64> = (0..spec.d).map(|j| x[(i, j)]).collect();
            spec.link.eval(&u)
        })
        .collect();
    if clean.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvariantViolation(format!("link `{}` produced a non-finite value", spec.link.id())));
    }
    let mean = clean.iter().sum::<f64>() / spec.n as f64;
    let std = (clean.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / spec.n as f64).sqrt();
    let sigma = spec.noise_ratio * std;
    let y = DVector::from_iterator(
        spec.n,
        clean.into_iter().map(|g| {
            let z: f64 = rng.sample(StandardNormal);
            g + sigma * z
        }),
    );
    Ok((Dataset::new(x, y)?, spec.true_basis()))
}
