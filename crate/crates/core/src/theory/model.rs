use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::Tensor;

/// Images of the form `X = S + E + N`: a sparse component, a smooth
/// environmental pattern of fixed Frobenius norm, and white Gaussian noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataModelSpec {
    /// Extents, outermost first (`[d]`, `[H, W]` or `[H, W, C]`).
    pub dims: Vec<usize>,
    /// Number of nonzeros in `S`.
    pub support: usize,
    /// Magnitude range of the nonzeros of `S`; signs are random.
    pub amplitude: (f64, f64),
    /// Target `‖E‖_F`. Zero disables the component.
    pub env_norm: f64,
    /// Cycles of the environmental pattern across each of the first two axes.
    pub env_frequency: f64,
    pub sigma: f64,
}

impl Default for DataModelSpec {
    fn default() -> Self {
        Self {
            dims: vec![16, 16],
            support: 8,
            amplitude: (1.0, 2.0),
            env_norm: 4.0,
            env_frequency: 1.0,
            sigma: 0.1,
        }
    }
}

impl DataModelSpec {
    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        let op = "data_model";
        if self.dims.is_empty() || self.dims.len() > 3 || self.dims.contains(&0) {
            return Err(Error::invalid(op, format!("bad extents {:?}", self.dims)));
        }
        if self.support > self.numel() {
            return Err(Error::invalid(op, format!("support {} exceeds size {}", self.support, self.numel())));
        }
        let (lo, hi) = self.amplitude;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::invalid(op, format!("bad amplitude range {:?}", self.amplitude)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(op, format!("sigma {} must be non-negative", self.sigma)));
        }
        if !(self.env_norm >= 0.0 && self.env_norm.is_finite()) {
            return Err(Error::invalid(op, format!("env_norm {} must be non-negative", self.env_norm)));
        }
        Ok(())
    }
}

/// One draw from the model, with components kept for diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub sparse: Tensor,
    pub env: Tensor,
    pub noise: Tensor,
    pub x: Tensor,
}

fn env_pattern(spec: &DataModelSpec, rng: &mut seed::Rng) -> Tensor {
    let n = spec.numel();
    if spec.env_norm == 0.0 {
        return Tensor::zeros(&spec.dims);
    }
    let (h, w) = match spec.dims.len() {
        1 => (1, spec.dims[0]),
        _ => (spec.dims[0], spec.dims[1]),
    };
    let inner = n / (h * w);
    let tau = std::f64::consts::TAU;
    let (p1, p2): (f64, f64) = (rng.random::<f64>() * tau, rng.random::<f64>() * tau);
    let f = spec.env_frequency;
    // A constant offset keeps the pattern away from zero norm for any phase.
    let u: Vec<f64> = (0..h).map(|i| 1.0 + (tau * f * i as f64 / h as f64 + p1).cos()).collect();
    let v: Vec<f64> = (0..w).map(|j| 1.0 + (tau * f * j as f64 / w as f64 + p2).cos()).collect();
    let mut e = Tensor::from_fn(&spec.dims, |idx| {
        let cell = idx / inner;
        u[cell / w] * v[cell % w]
    });
    let scale = spec.env_norm / e.norm();
    e.data_mut().iter_mut().for_each(|x| *x *= scale);
    e
}

pub fn synth_sample(spec: &DataModelSpec, seed: u64) -> Result<Sample> {
    spec.validate()?;
    let n = spec.numel();
    let mut rng = seed::rng(seed);

    let mut sparse = Tensor::zeros(&spec.dims);
    let support = rand::seq::index::sample(&mut rng, n, spec.support);
    let (lo, hi) = spec.amplitude;
    for i in support.iter() {
        let mag = lo + (hi - lo) * rng.random::<f64>();
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        sparse.data_mut()[i] = sign * mag;
    }

    let env = env_pattern(spec, &mut rng);

    let mut noise = Tensor::zeros(&spec.dims);
    if spec.sigma > 0.0 {
        for v in noise.data_mut() {
            *v = spec.sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }

    let mut x = sparse.clone();
    x.add_assign_scaled(&env, 1.0);
    x.add_assign_scaled(&noise, 1.0);
    Ok(Sample {
        sparse,
        env,
        noise,
        x,
    })
}
