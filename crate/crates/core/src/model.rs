//! Data generation for single-index and additive multi-index models, and the
//! truncation of a sample to the ball `{|x| <= s_X}`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wavelet::Basis;

/// Link function of one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkSpec {
    /// Sieve coefficients on the configured wavelet basis.
    Sieve(Vec<f64>),
    /// One of `sin`, `cubic` (`t^3 / 3`), `logistic`.
    Named(String),
}

impl LinkSpec {
    pub fn named(name: &str) -> Self {
        Self::Named(name.to_owned())
    }

    fn validate(&self, basis: Option<&Basis>) -> Result<()> {
        match self {
            LinkSpec::Named(name) => named_link(name).map(|_| ()),
            LinkSpec::Sieve(eta) => match basis {
                Some(b) if b.m() == eta.len() => Ok(()),
                Some(b) => Err(Error::Config(format!(
                    "sieve link has {} coefficients but the basis has {}",
                    eta.len(),
                    b.m()
                ))),
                None => Err(Error::Config("sieve link requires a basis".into())),
            },
        }
    }

    pub fn eval(&self, basis: Option<&Basis>, t: f64) -> f64 {
        match self {
            LinkSpec::Named(name) => named_link(name).map(|f| f(t)).unwrap_or(f64::NAN),
            LinkSpec::Sieve(eta) => {
                let basis = basis.expect("validated sieve link");
                eta.iter()
                    .enumerate()
                    .filter(|(_, c)| **c != 0.0)
                    .map(|(k, c)| c * basis.eval(k + 1, t))
                    .sum()
            }
        }
    }
}

fn named_link(name: &str) -> Result<fn(f64) -> f64> {
    match name {
        "sin" => Ok(f64::sin),
        "cubic" => Ok(|t| t * t * t / 3.0),
        "logistic" => Ok(|t| 1.0 / (1.0 + (-t).exp())),
        other => Err(Error::Config(format!("unknown link '{other}'"))),
    }
}

/// One additive component `f(x^T theta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub theta: Vec<f64>,
    pub link: LinkSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    Gaussian,
    Uniform,
    ScaledRademacher,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Design {
    /// Uniform on the ball of the given radius.
    UniformBall { radius: f64 },
    /// Standard normal conditioned on the ball of the given radius.
    TruncatedGaussian { radius: f64 },
}

impl Design {
    /// Uniform ball of radius `s_X + c_B` with `c_B = 0.2 s_X`.
    pub fn default_for(s_x: f64) -> Self {
        Design::UniformBall { radius: 1.2 * s_x }
    }

    fn radius(&self) -> f64 {
        match *self {
            Design::UniformBall { radius } | Design::TruncatedGaussian { radius } => radius,
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R, p: usize, out: &mut [f64]) {
        match *self {
            Design::UniformBall { radius } => {
                let mut norm2 = 0.0;
                for v in out.iter_mut() {
                    *v = rng.sample(StandardNormal);
                    norm2 += *v * *v;
                }
                let r = radius * rng.gen::<f64>().powf(1.0 / p as f64) / norm2.sqrt();
                out.iter_mut().for_each(|v| *v *= r);
            }
            Design::TruncatedGaussian { radius } => loop {
                let mut norm2 = 0.0;
                for v in out.iter_mut() {
                    *v = rng.sample(StandardNormal);
                    norm2 += *v * *v;
                }
                if norm2 <= radius * radius {
                    break;
                }
            },
        }
    }
}

/// Optional misspecification added to the regression function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum BiasTerm {
    #[default]
    None,
    /// `c * x_1 * x_2`.
    QuadraticCross { c: f64 },
}

impl BiasTerm {
    fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            BiasTerm::None => 0.0,
            BiasTerm::QuadraticCross { c } => c * x[0] * x.get(1).copied().unwrap_or(0.0),
        }
    }
}

/// Data-generating model `Y = sum_l f_l(X^T theta_l) + bias(X) + eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub p: usize,
    pub components: Vec<Component>,
    pub noise_sigma: f64,
    pub noise_kind: NoiseKind,
    pub design: Design,
    #[serde(default)]
    pub bias: BiasTerm,
}

impl ModelSpec {
    /// Single-index model with Gaussian noise on the default ball design.
    pub fn single_index(theta: Vec<f64>, link: LinkSpec, sigma: f64, s_x: f64) -> Self {
        Self {
            p: theta.len(),
            components: vec![Component { theta, link }],
            noise_sigma: sigma,
            noise_kind: NoiseKind::Gaussian,
            design: Design::default_for(s_x),
            bias: BiasTerm::None,
        }
    }

    pub fn validate(&self, basis: Option<&Basis>) -> Result<()> {
        if self.p < 2 {
            return Err(Error::Config(format!("p must be at least 2, got {}", self.p)));
        }
        if self.components.is_empty() {
            return Err(Error::Config("model needs at least one component".into()));
        }
        for c in &self.components {
            if c.theta.len() != self.p {
                return Err(Error::Config(format!(
                    "direction has length {} but p = {}",
                    c.theta.len(),
                    self.p
                )));
            }
            let norm = c.theta.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 || c.theta[0] <= 0.0 {
                return Err(Error::Config(
                    "directions must be unit vectors with positive first coordinate".into(),
                ));
            }
            c.link.validate(basis)?;
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config("noise_sigma must be a non-negative number".into()));
        }
        if !(self.design.radius() > 0.0) {
            return Err(Error::Config("design radius must be positive".into()));
        }
        Ok(())
    }

    /// Noise-free regression function at `x`.
    pub fn regression(&self, basis: Option<&Basis>, x: &[f64]) -> f64 {
        self.components
            .iter()
            .map(|c| {
                let t: f64 = c.theta.iter().zip(x).map(|(a, b)| a * b).sum();
                c.link.eval(basis, t)
            })
            .sum::<f64>()
            + self.bias.eval(x)
    }

    pub fn thetas(&self) -> Vec<DVector<f64>> {
        self.components.iter().map(|c| DVector::from_vec(c.theta.clone())).collect()
    }
}

/// A sample with the index set kept by truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub s_x: f64,
    pub kept: Vec<usize>,
    pub seed: u64,
}

impl Dataset {
    /// Dataset with every row kept.
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, seed: u64) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Data(format!(
                "design has {} rows but response has {}",
                x.nrows(),
                y.len()
            )));
        }
        Ok(Self {
            s_x: f64::INFINITY,
            kept: (0..x.nrows()).collect(),
            x,
            y,
            seed,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_kept(&self) -> usize {
        self.kept.len()
    }

    /// Row `i` of the design as a vector.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    /// Same design and index set with a different response.
    pub fn with_response(&self, y: DVector<f64>) -> Self {
        Self {
            x: self.x.clone(),
            y,
            s_x: self.s_x,
            kept: self.kept.clone(),
            seed: self.seed,
        }
    }
}

/// Mixes `(seed, n, replication)` into an independent stream seed.
pub fn stream_seed(seed: u64, n: u64, replication: u64) -> u64 {
    let mut z = seed;
    for word in [n, replication] {
        z = splitmix(z ^ splitmix(word));
    }
    z
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws `n` observations; a pure function of `(spec, n, seed)`.
pub fn simulate(spec: &ModelSpec, basis: Option<&Basis>, n: usize, seed: u64) -> Result<Dataset> {
    spec.validate(basis)?;
    if n == 0 {
        return Err(Error::Config("sample size must be positive".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let p = spec.p;
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    let mut row = vec![0.0; p];
    for i in 0..n {
        spec.design.sample(&mut rng, p, &mut row);
        for (j, v) in row.iter().enumerate() {
            x[(i, j)] = *v;
        }
        y[i] = spec.regression(basis, &row) + draw_noise(&mut rng, spec.noise_kind, spec.noise_sigma);
    }
    Ok(Dataset {
        x,
        y,
        s_x: spec.design.radius(),
        kept: (0..n).collect(),
        seed,
    })
}

fn draw_noise<R: Rng>(rng: &mut R, kind: NoiseKind, sigma: f64) -> f64 {
    let unit = match kind {
        NoiseKind::Gaussian => StandardNormal.sample(rng),
        NoiseKind::Uniform => rng.gen_range(-3f64.sqrt()..3f64.sqrt()),
        NoiseKind::ScaledRademacher => {
            if rng.gen::<bool>() {
                1.0
            } else {
                -1.0
            }
        }
    };
    sigma * unit
}

/// Keeps exactly the rows with `|X_i| <= s_X`.
pub fn truncate(data: &Dataset, s_x: f64) -> Result<Dataset> {
    if !(s_x > 0.0) {
        return Err(Error::Config(format!("truncation radius must be positive, got {s_x}")));
    }
    let kept: Vec<usize> = (0..data.n()).filter(|&i| data.x.row(i).norm() <= s_x).collect();
    if kept.is_empty() {
        return Err(Error::DegenerateData(format!("no observation has norm at most {s_x}")));
    }
    Ok(Dataset {
        x: data.x.clone(),
        y: data.y.clone(),
        s_x,
        kept,
        seed: data.seed,
    })
}
