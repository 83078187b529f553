use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

/// Heteroscedastic 1-D regression problem:
/// `y = x + 0.3·sin(2πx) + ε`, `ε ~ N(0, (a + b·x)²)`, `x ~ U[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub m_train: usize,
    pub m_val: usize,
    pub m_test: usize,
    pub noise_floor: f64,
    pub noise_slope: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            m_train: 32,
            m_val: 50,
            m_test: 500,
            noise_floor: 0.05,
            noise_slope: 0.10,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn check(&self) -> Result<()> {
        if self.m_train == 0 || self.m_val == 0 || self.m_test == 0 {
            return Err(Error::InvalidArgument("split sizes must be positive".into()));
        }
        if !(self.noise_floor > 0.0) || !(self.noise_slope >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise parameters must satisfy a > 0, b >= 0 (got a = {}, b = {})",
                self.noise_floor, self.noise_slope
            )));
        }
        Ok(())
    }

    pub fn noise_sd(&self, x: f64) -> f64 {
        self.noise_floor + self.noise_slope * x
    }
}

pub fn conditional_mean(x: f64) -> f64 {
    x + 0.3 * (2.0 * std::f64::consts::PI * x).sin()
}

/// Labeled 1-D data with the true noise level of every point.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub noise_sd: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Variance of the targets about their mean.
    pub fn target_variance(&self) -> f64 {
        let n = self.y.len() as f64;
        let mean = self.y.iter().sum::<f64>() / n;
        self.y.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

fn draw(spec: &SyntheticSpec, m: usize, rng: &mut ChaCha8Rng) -> Dataset {
    let mut data = Dataset {
        x: Vec::with_capacity(m),
        y: Vec::with_capacity(m),
        noise_sd: Vec::with_capacity(m),
    };
    for _ in 0..m {
        let x: f64 = rng.random();
        let sd = spec.noise_sd(x);
        let z: f64 = StandardNormal.sample(rng);
        data.x.push(x);
        data.y.push(conditional_mean(x) + sd * z);
        data.noise_sd.push(sd);
    }
    data
}

/// Draws train, validation and test splits; fully determined by the spec.
pub fn generate(spec: &SyntheticSpec) -> Result<Splits> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let train = draw(spec, spec.m_train, &mut rng);
    let val = draw(spec, spec.m_val, &mut rng);
    let test = draw(spec, spec.m_test, &mut rng);
    Ok(Splits { train, val, test })
}
