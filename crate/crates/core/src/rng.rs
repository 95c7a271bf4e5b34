//! Seeded random streams.
//!
//! Every consumer of randomness owns an [`RngStream`] identified by a master
//! seed and a text label. The stream key is
//! `SHA-256("fjsync-stream/v1" || seed as 8 little-endian bytes || label)`,
//! used as the 32-byte seed of a ChaCha20 generator. Distinct labels give
//! unrelated streams, so adding a new consumer never shifts the draws seen by
//! existing ones.
//!
//! Uniforms on the open interval (0, 1) are built from the top 53 bits of a
//! 64-bit output as `(m + 0.5) / 2^53`; exponentials use inversion,
//! `-ln(u) / rate`.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::error::ParamError;

const STREAM_DOMAIN: &[u8] = b"fjsync-stream/v1";
const SEED_DOMAIN: &[u8] = b"fjsync-seed/v1";

/// Conventional stream labels used by the simulator.
pub mod labels {
    pub const ARRIVALS: &str = "arrivals";
    pub const SERVICE_A: &str = "service-a";
    pub const SERVICE_B: &str = "service-b";
}

pub struct RngStream {
    seed: u64,
    label: String,
    rng: ChaCha20Rng,
}

impl std::fmt::Debug for RngStream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RngStream")
            .field("seed", &self.seed)
            .field("label", &self.label)
            .finish_non_exhaustive()
    }
}

impl RngStream {
    pub fn new(seed: u64, label: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(STREAM_DOMAIN);
        hasher.update(seed.to_le_bytes());
        hasher.update(label.as_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        RngStream {
            seed,
            label: label.to_owned(),
            rng: ChaCha20Rng::from_seed(key),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw strictly inside (0, 1).
    pub fn uniform_open(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * SCALE
    }

    /// Unit-rate exponential draw; divide by a rate to rescale.
    pub fn standard_exponential(&mut self) -> f64 {
        -self.uniform_open().ln()
    }

    /// Fisher-Yates shuffle driven by this stream.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = (self.next_u64() % (i as u64 + 1)) as usize;
            items.swap(i, j);
        }
    }
}

/// Derives a child seed from a master seed and a key, e.g. a sweep cell id.
pub fn derive_seed(seed: u64, key: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(SEED_DOMAIN);
    hasher.update(seed.to_le_bytes());
    hasher.update(key.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn check_rate(rate: f64) -> Result<(), ParamError> {
    if rate.is_finite() && rate > 0.0 {
        Ok(())
    } else {
        Err(ParamError::NonPositiveRate { name: "rate", value: rate })
    }
}

pub fn sample_exponential(rate: f64, s: &mut RngStream) -> Result<f64, ParamError> {
    check_rate(rate)?;
    Ok(s.standard_exponential() / rate)
}

/// Arrival epochs of a Poisson process started at time zero.
pub fn generate_arrival_times(lambda: f64, count: usize, s: &mut RngStream) -> Result<Vec<f64>, ParamError> {
    check_rate(lambda)?;
    if count == 0 {
        return Err(ParamError::ZeroCount("arrival count"));
    }
    let mut t = 0.0;
    Ok((0..count)
        .map(|_| {
            t += s.standard_exponential() / lambda;
            t
        })
        .collect())
}
