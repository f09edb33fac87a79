use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::derive_seed;
use crate::params::{ParamError, ProtocolParams};
use crate::vector::FeatureVector;

/// Per-dimension perturbation applied to the template to simulate a capture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NoiseKind {
    /// Uniform integer noise in `[-max_dev_i, max_dev_i]`.
    BoundedUniform(Vec<u32>),
    /// Gaussian noise with standard deviation `sigma_i`, rounded to the nearest integer.
    Gaussian(Vec<f64>),
    /// A fixed offset added to every sample.
    Adversarial(Vec<i64>),
}

impl NoiseKind {
    pub fn uniform(dim: usize, max_dev: u32) -> Self {
        Self::BoundedUniform(vec![max_dev; dim])
    }

    pub fn gaussian(dim: usize, sigma: f64) -> Self {
        Self::Gaussian(vec![sigma; dim])
    }

    pub fn none(dim: usize) -> Self {
        Self::BoundedUniform(vec![0; dim])
    }

    pub fn validate(&self, params: &ProtocolParams) -> Result<(), ParamError> {
        let len = match self {
            Self::BoundedUniform(v) => v.len(),
            Self::Gaussian(v) => v.len(),
            Self::Adversarial(v) => v.len(),
        };
        if len != params.dim() {
            return Err(ParamError::DimensionMismatch {
                expected: params.dim(),
                got: len,
            });
        }
        if let Self::Gaussian(sigmas) = self {
            if let Some(s) = sigmas.iter().find(|s| !s.is_finite() || **s < 0.0) {
                return Err(ParamError::Invalid(format!("invalid sigma {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub seed: u64,
}

/// A synthetic biometric sensor with its own deterministic noise stream.
#[derive(Debug, Clone)]
pub struct Sensor {
    kind: NoiseKind,
    rng: ChaCha20Rng,
}

impl Sensor {
    pub fn new(model: &NoiseModel) -> Self {
        Self {
            kind: model.kind.clone(),
            rng: ChaCha20Rng::from_seed(derive_seed(model.seed, "sensor", 0)),
        }
    }

    /// Draws `count` noisy captures of `template`.
    pub fn sample(
        &mut self,
        template: &FeatureVector,
        count: usize,
        params: &ProtocolParams,
    ) -> Result<Vec<FeatureVector>, ParamError> {
        template.check(params)?;
        self.kind.validate(params)?;
        let max = usize::from(params.max_queries_per_round());
        if count == 0 || count > max {
            return Err(ParamError::OutOfRange {
                what: "sample count",
                min: 1,
                max,
                got: count,
            });
        }
        (0..count)
            .map(|_| {
                let noisy: Vec<i64> = template
                    .components()
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| i64::from(c) + self.perturbation(i))
                    .collect();
                FeatureVector::from_signed(&noisy, params)
            })
            .collect()
    }

    fn perturbation(&mut self, i: usize) -> i64 {
        match &self.kind {
            NoiseKind::BoundedUniform(max) => {
                let m = i64::from(max[i]);
                self.rng.random_range(-m..=m)
            }
            NoiseKind::Gaussian(sigma) => {
                let normal = Normal::new(0.0, sigma[i]).expect("sigma validated");
                normal.sample(&mut self.rng).round() as i64
            }
            NoiseKind::Adversarial(offset) => offset[i],
        }
    }
}

/// One-shot sampling with a fresh sensor seeded from `model`.
pub fn sensor_sample(
    template: &FeatureVector,
    model: &NoiseModel,
    count: usize,
    params: &ProtocolParams,
) -> Result<Vec<FeatureVector>, ParamError> {
    Sensor::new(model).sample(template, count, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> ProtocolParams {
        ProtocolParams::uniform(3, 8, 4).unwrap()
    }

    fn template() -> FeatureVector {
        FeatureVector::new(vec![10, 128, 254], &p()).unwrap()
    }

    #[test]
    fn zero_noise_reproduces_template() {
        let model = NoiseModel { kind: NoiseKind::none(3), seed: 9 };
        let samples = sensor_sample(&template(), &model, 4, &p()).unwrap();
        assert!(samples.iter().all(|s| *s == template()));
    }

    #[test]
    fn adversarial_offset_applied_exactly() {
        let model = NoiseModel { kind: NoiseKind::Adversarial(vec![4, -4, 3]), seed: 1 };
        let samples = sensor_sample(&template(), &model, 2, &p()).unwrap();
        for s in samples {
            assert_eq!(s.components(), &[14, 124, 1]);
        }
    }

    #[test]
    fn bounded_uniform_stays_in_bounds() {
        let model = NoiseModel { kind: NoiseKind::uniform(3, 3), seed: 5 };
        let mut sensor = Sensor::new(&model);
        let t = template();
        for _ in 0..200 {
            for s in sensor.sample(&t, 4, &p()).unwrap() {
                let d = s.wrapping_sub(&t).unwrap().centered();
                assert!(d.iter().all(|x| x.abs() <= 3), "{d:?}");
            }
        }
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let model = NoiseModel { kind: NoiseKind::gaussian(3, 2.0), seed: 77 };
        let a = sensor_sample(&template(), &model, 4, &p()).unwrap();
        let b = sensor_sample(&template(), &model, 4, &p()).unwrap();
        assert_eq!(a, b);
        let other = NoiseModel { seed: 78, ..model };
        assert_ne!(a, sensor_sample(&template(), &other, 4, &p()).unwrap());
    }

    #[test]
    fn count_out_of_range() {
        let model = NoiseModel { kind: NoiseKind::none(3), seed: 0 };
        assert!(sensor_sample(&template(), &model, 5, &p()).is_err());
        assert!(sensor_sample(&template(), &model, 0, &p()).is_err());
    }

    #[test]
    fn rejects_bad_models() {
        let p = p();
        assert!(NoiseKind::uniform(2, 1).validate(&p).is_err());
        assert!(NoiseKind::Gaussian(vec![1.0, f64::NAN, 1.0]).validate(&p).is_err());
        assert!(NoiseKind::Gaussian(vec![1.0, -1.0, 1.0]).validate(&p).is_err());
    }
}
