//! Symmetric alpha-stable sampling by the Chambers-Mallows-Stuck transform.
//!
//! Draws come from a ChaCha8 stream seeded with `seed_from_u64`, so a
//! `(alpha, gamma, n, seed)` tuple always yields the same sequence.

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::entropy::StableModel;
use crate::error::Result;

/// Seeded generator of `S_alpha(0, gamma, 0)` variates.
pub struct StableSampler {
    model: StableModel,
    rng: ChaCha8Rng,
}

impl StableSampler {
    pub fn new(model: StableModel, seed: u64) -> Self {
        Self {
            model,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn sample(&mut self) -> f64 {
        let alpha = self.model.alpha();
        // V uniform on the open interval (-pi/2, pi/2)
        let v = loop {
            let u: f64 = self.rng.random();
            if u > 0.0 {
                break (u - 0.5) * 2.0 * FRAC_PI_2;
            }
        };
        let w: f64 = Exp1.sample(&mut self.rng);
        let x = if alpha == 1.0 {
            v.tan()
        } else {
            (alpha * v).sin() / v.cos().powf(1.0 / alpha)
                * ((v - alpha * v).cos() / w).powf((1.0 - alpha) / alpha)
        };
        self.model.gamma() * x
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for x in out {
            *x = self.sample();
        }
    }
}

/// `n` seeded draws from the symmetric alpha-stable law with scale `gamma`.
/// At `alpha = 2` this is Gaussian with standard deviation `gamma * sqrt(2)`.
pub fn sample_stable(alpha: f64, gamma: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    let model = StableModel::new(alpha, gamma)?;
    let mut sampler = StableSampler::new(model, seed);
    let mut out = vec![0.0; n];
    sampler.fill(&mut out);
    Ok(out)
}
