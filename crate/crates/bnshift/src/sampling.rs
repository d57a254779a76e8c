//! Seeded draws from the [`DistributionSpec`] families.

use crate::rng::{stream_rng, StreamRng};
use bnshift_core::stats::{DistributionSpec, Label, Sample};
use rand::distr::{Bernoulli, Distribution};
use rand::Rng;
use rand_distr::{Gamma, LogNormal, Normal};

/// Ready-to-draw form of a [`DistributionSpec`].
#[derive(Debug, Clone, Copy)]
pub enum Sampler {
    Gaussian(Normal<f64>),
    /// Gamma draw plus a constant offset.
    ShiftedGamma(Gamma<f64>, f64),
    LognormalCentered(LogNormal<f64>, f64),
    TwoPoint {
        low: f64,
        high: f64,
        coin: Bernoulli,
    },
}

fn bad(spec: &DistributionSpec, err: impl std::fmt::Display) -> bnshift_core::Error {
    bnshift_core::Error::InvalidInput(format!("{}: {err}", spec.family_name()))
}

impl Sampler {
    pub fn new(spec: &DistributionSpec) -> bnshift_core::Result<Self> {
        spec.validate()?;
        Ok(match *spec {
            DistributionSpec::Gaussian { mean, var } => {
                Sampler::Gaussian(Normal::new(mean, var.sqrt()).map_err(|e| bad(spec, e))?)
            }
            DistributionSpec::ShiftedGamma { shape, scale, loc } => Sampler::ShiftedGamma(
                Gamma::new(shape, scale).map_err(|e| bad(spec, e))?,
                loc - shape * scale,
            ),
            DistributionSpec::LognormalCentered { log_scale, loc } => Sampler::LognormalCentered(
                LogNormal::new(0.0, log_scale).map_err(|e| bad(spec, e))?,
                loc - (0.5 * log_scale * log_scale).exp(),
            ),
            DistributionSpec::TwoPoint { low, high, p_high } => Sampler::TwoPoint {
                low,
                high,
                coin: Bernoulli::new(p_high).map_err(|e| bad(spec, e))?,
            },
        })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Gaussian(d) => d.sample(rng),
            Sampler::ShiftedGamma(d, offset) => d.sample(rng) + offset,
            Sampler::LognormalCentered(d, offset) => d.sample(rng) + offset,
            Sampler::TwoPoint { low, high, coin } => {
                if coin.sample(rng) {
                    *high
                } else {
                    *low
                }
            }
        }
    }

    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>, count: usize) {
        out.clear();
        out.extend((0..count).map(|_| self.draw(rng)));
    }

    /// Mean of `count` fresh draws, summed left to right.
    pub fn draw_mean<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> f64 {
        let mut acc = 0.0;
        for _ in 0..count {
            acc += self.draw(rng);
        }
        acc / count as f64
    }
}

/// `n` i.i.d. draws from `spec`, a pure function of `(spec, n, seed)`.
pub fn generate(spec: &DistributionSpec, n: usize, seed: u64) -> crate::Result<Sample> {
    generate_labeled(spec, n, seed, Label::Train)
}

pub fn generate_labeled(
    spec: &DistributionSpec,
    n: usize,
    seed: u64,
    label: Label,
) -> crate::Result<Sample> {
    if n == 0 {
        return Err(bnshift_core::Error::InvalidInput("generate needs n >= 1".into()).into());
    }
    let sampler = Sampler::new(spec)?;
    let mut rng: StreamRng = stream_rng(seed, 0);
    let mut values = Vec::with_capacity(n);
    sampler.fill(&mut rng, &mut values, n);
    Ok(Sample::new(values, label)?)
}
