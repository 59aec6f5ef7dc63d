//! Seeded synthetic data for tests, examples and the CLI.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::dynamics::Transient;
use crate::error::{Error, Result};
use crate::spectrum::SpectrumScan;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed for the `k`-th stream under a base seed; distinct `(seed, k)` pairs
/// do not collide the way `seed + k` would.
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    // splitmix64 finalizer over a mixed pair
    let mut z = seed ^ k.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn poisson(mean: f64, rng: &mut ChaCha8Rng) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    Poisson::new(mean).map(|d| d.sample(rng)).unwrap_or(mean)
}

/// Poisson counts of `amplitude * exp(-t/tau) + background`.
pub fn poisson_decay(times_us: &[f64], tau_us: f64, amplitude: f64, background: f64, seed: u64) -> Result<Transient> {
    if !(tau_us > 0.0) {
        return Err(Error::param("tau", format!("must be positive, got {tau_us}")));
    }
    let mut r = rng(seed);
    let t0 = times_us.first().copied().unwrap_or(0.0);
    let counts =
        times_us.iter().map(|&t| poisson(amplitude * (-(t - t0) / tau_us).exp() + background, &mut r)).collect();
    let mut out = Transient::new(times_us.to_vec(), counts)?;
    out.background = background;
    Ok(out)
}

/// Poisson resampling of arbitrary expected counts.
pub fn poisson_counts(expected: &[f64], seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    expected.iter().map(|&m| poisson(m, &mut r)).collect()
}

/// Adds Gaussian noise with standard deviation `rel * max|signal|` and
/// records that sigma on every point.
pub fn add_relative_noise(scan: &SpectrumScan, rel: f64, seed: u64) -> Result<SpectrumScan> {
    if !(rel >= 0.0) {
        return Err(Error::param("noise", format!("must be non-negative, got {rel}")));
    }
    let peak = scan.signal.iter().fold(0f64, |m, v| m.max(v.abs()));
    let sd = rel * peak;
    let mut out = scan.clone();
    if sd > 0.0 {
        let mut r = rng(seed);
        let n = Normal::new(0.0, sd).map_err(|e| Error::Data(e.to_string()))?;
        for v in out.signal.iter_mut() {
            *v += n.sample(&mut r);
        }
        out.sigma = Some(vec![sd; scan.len()]);
    }
    out.validate()?;
    Ok(out)
}

/// Standard normal draws.
pub fn normal_samples(n: usize, sd: f64, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    match Normal::new(0.0, sd) {
        Ok(d) => (0..n).map(|_| d.sample(&mut r)).collect(),
        Err(_) => vec![0.0; n],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::linspace;

    #[test]
    fn derived_seeds_do_not_overlap() {
        let mut seen = std::collections::HashSet::new();
        for seed in 0..50 {
            for k in 0..50 {
                assert!(seen.insert(derive_seed(seed, k)));
            }
        }
    }

    #[test]
    fn same_seed_same_data() {
        let t = linspace(0.0, 5.0, 30);
        let a = poisson_decay(&t, 1.0, 100.0, 5.0, 9).unwrap();
        let b = poisson_decay(&t, 1.0, 100.0, 5.0, 9).unwrap();
        let c = poisson_decay(&t, 1.0, 100.0, 5.0, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn relative_noise_level() {
        let x = linspace(-1.0, 1.0, 5000);
        let s = SpectrumScan::new(x.clone(), vec![2.0; 5000]).unwrap();
        let n = add_relative_noise(&s, 0.02, 1).unwrap();
        let var = n.signal.iter().map(|v| (v - 2.0).powi(2)).sum::<f64>() / 5000.0;
        assert!((var.sqrt() / 0.04 - 1.0).abs() < 0.05);
        assert_eq!(n.sigma_at(0), 0.04);
    }
}
