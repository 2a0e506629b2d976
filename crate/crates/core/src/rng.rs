//! Seeding helpers.
//!
//! All randomness flows through [`ChaCha8Rng`] streams whose seeds are derived
//! by mixing a parent seed with integer keys, so that any sub-stream can be
//! regenerated without replaying the others.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and an ordered list of keys.
pub fn derive_seed(parent: u64, keys: &[u64]) -> u64 {
    keys.iter().fold(mix64(parent), |acc, &k| mix64(acc ^ mix64(k)))
}

pub fn rng_from(parent: u64, keys: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(parent, keys))
}

/// Sample from CN(0, variance).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Uniform phase on the unit circle.
pub fn unit_phase<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let phi: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    Complex64::from_polar(1.0, phi)
}
