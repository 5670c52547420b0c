//! Single-site (single-block) distributions and reproducible coupling draws.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensitySpec {
    Uniform { lo: f64, hi: f64 },
    /// Gaussian with the given mean and width, restricted to `[lo, hi]` and
    /// renormalized.
    TruncatedGaussian { mean: f64, sigma: f64, lo: f64, hi: f64 },
}

impl Default for DensitySpec {
    fn default() -> Self {
        DensitySpec::Uniform { lo: 0.0, hi: 1.0 }
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / core::f64::consts::SQRT_2))
}

impl DensitySpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.support();
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidDensity(alloc::format!(
                "support [{lo}, {hi}] must be a finite interval with lo < hi"
            )));
        }
        if let DensitySpec::TruncatedGaussian { mean, sigma, .. } = *self {
            if !(sigma.is_finite() && sigma > 0.0 && mean.is_finite()) {
                return Err(Error::InvalidDensity(alloc::format!(
                    "gaussian needs finite mean and sigma > 0, got ({mean}, {sigma})"
                )));
            }
            if self.gaussian_mass() <= 1e-300 {
                return Err(Error::InvalidDensity("gaussian has no mass on its support".into()));
            }
        }
        Ok(())
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            DensitySpec::Uniform { lo, hi } => (lo, hi),
            DensitySpec::TruncatedGaussian { lo, hi, .. } => (lo, hi),
        }
    }

    fn gaussian_mass(&self) -> f64 {
        match *self {
            DensitySpec::TruncatedGaussian { mean, sigma, lo, hi } => {
                std_normal_cdf((hi - mean) / sigma) - std_normal_cdf((lo - mean) / sigma)
            }
            DensitySpec::Uniform { .. } => 1.0,
        }
    }

    /// Density value at `x`.
    pub fn pdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x < lo || x > hi {
            return 0.0;
        }
        match *self {
            DensitySpec::Uniform { lo, hi } => 1.0 / (hi - lo),
            DensitySpec::TruncatedGaussian { mean, sigma, .. } => {
                let u = (x - mean) / sigma;
                libm::exp(-0.5 * u * u)
                    / (sigma * libm::sqrt(2.0 * core::f64::consts::PI) * self.gaussian_mass())
            }
        }
    }

    /// `‖ρ‖_∞`.
    pub fn sup_norm(&self) -> f64 {
        match *self {
            DensitySpec::Uniform { lo, hi } => 1.0 / (hi - lo),
            DensitySpec::TruncatedGaussian { mean, lo, hi, .. } => self.pdf(mean.clamp(lo, hi)),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DensitySpec::Uniform { lo, hi } => lo + (hi - lo) * rng.gen::<f64>(),
            DensitySpec::TruncatedGaussian { mean, sigma, lo, hi } => {
                // rejection from the uniform envelope on [lo, hi]
                let peak = mean.clamp(lo, hi);
                let log_peak = -0.5 * ((peak - mean) / sigma) * ((peak - mean) / sigma);
                loop {
                    let x = lo + (hi - lo) * rng.gen::<f64>();
                    let u = (x - mean) / sigma;
                    let accept = libm::exp(-0.5 * u * u - log_peak);
                    if rng.gen::<f64>() < accept {
                        return x;
                    }
                }
            }
        }
    }
}

pub fn density_sup_norm(density: &DensitySpec) -> f64 {
    density.sup_norm()
}

/// SplitMix64 finalizer; used to derive independent master seeds for
/// separate sampling pipelines of one experiment.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for one trial: ChaCha8 keyed by the master seed, with the trial
/// index selecting the stream.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Couplings `ω_y` for one trial, indexed by block ordinal.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderSample {
    pub values: Vec<f64>,
    pub seed: u64,
    pub trial: u64,
}

impl DisorderSample {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// All blocks share the same value, for free-operator and shift tests.
    pub fn constant(n_blocks: usize, value: f64) -> Self {
        DisorderSample {
            values: alloc::vec![value; n_blocks],
            seed: 0,
            trial: 0,
        }
    }
}

/// One i.i.d. draw per head, in head order. The values depend only on
/// `(seed, trial)` and the head ordinal.
pub fn sample_disorder(
    density: &DensitySpec,
    n_heads: usize,
    seed: u64,
    trial: u64,
) -> Result<DisorderSample> {
    density.validate()?;
    if n_heads == 0 {
        return Err(Error::NoHeads);
    }
    let mut rng = trial_rng(seed, trial);
    let values = (0..n_heads).map(|_| density.sample(&mut rng)).collect();
    Ok(DisorderSample {
        values,
        seed,
        trial,
    })
}
