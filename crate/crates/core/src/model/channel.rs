use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::SystemConfig;
use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};

/// Identifier of the channel generator. Bump when the draw sequence changes.
pub const GENERATOR_VERSION: &str = "chacha20-boxmuller-v1";

/// Circularly-symmetric complex Gaussian samples from a ChaCha20 stream.
///
/// Each sample consumes two uniforms `u1, u2` and applies the Box–Muller
/// transform `r = sqrt(-ln(1 - u1))`, `θ = 2π u2`, giving `r·e^{iθ}` with
/// `E|z|² = 1`.
pub struct GaussianSource {
    rng: ChaCha20Rng,
}

impl GaussianSource {
    pub fn new(seed: u64) -> Self {
        GaussianSource {
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn complex(&mut self) -> C64 {
        let u1: f64 = self.rng.gen();
        let u2: f64 = self.rng.gen();
        let r = (-(1.0 - u1).ln()).sqrt();
        C64::from_polar(r, std::f64::consts::TAU * u2)
    }

    /// Sample with the given per-entry variance.
    pub fn complex_scaled(&mut self, variance: f64) -> C64 {
        self.complex() * variance.sqrt()
    }
}

/// One draw of the user channels `H_k`, each `Nr × Nt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub seed: u64,
    #[serde(default = "default_generator")]
    pub generator: String,
    #[serde(with = "crate::linalg::matrices")]
    pub channels: Vec<CMat>,
}

fn default_generator() -> String {
    GENERATOR_VERSION.to_string()
}

impl ChannelRealization {
    pub fn from_matrices(channels: Vec<CMat>) -> Self {
        ChannelRealization {
            seed: 0,
            generator: "given".to_string(),
            channels,
        }
    }

    pub fn users(&self) -> usize {
        self.channels.len()
    }

    pub fn user(&self, k: usize) -> &CMat {
        &self.channels[k]
    }

    /// Frobenius norm of each user's channel.
    pub fn gains(&self) -> Vec<f64> {
        self.channels.iter().map(|h| h.norm()).collect()
    }

    pub fn check(&self, config: &SystemConfig) -> Result<()> {
        if self.channels.len() != config.users {
            return Err(Error::Dimension(format!(
                "{} channel matrices for {} users",
                self.channels.len(),
                config.users
            )));
        }
        for (k, h) in self.channels.iter().enumerate() {
            if h.shape() != (config.rx_antennas, config.tx_antennas) {
                return Err(Error::Dimension(format!(
                    "channel {k} has shape {:?}, expected ({}, {})",
                    h.shape(),
                    config.rx_antennas,
                    config.tx_antennas
                )));
            }
            if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Domain(format!("channel {k} has non-finite entries")));
            }
        }
        Ok(())
    }

    /// FNV-1a digest over the raw entry bits, used to check that paired
    /// experiments consumed the same draw.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: [u8; 8]| {
            for b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for m in &self.channels {
            for z in m.iter() {
                feed(z.re.to_bits().to_le_bytes());
                feed(z.im.to_bits().to_le_bytes());
            }
        }
        h
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Draws every channel entry i.i.d. `CN(0, 1)`, user by user in row-major
/// order.
pub fn generate_rayleigh_channels(config: &SystemConfig, seed: u64) -> ChannelRealization {
    let mut src = GaussianSource::new(seed);
    let channels = (0..config.users)
        .map(|_| {
            // from_fn walks column-major; fill row-major explicitly so the
            // layout matches the JSON rows.
            let mut h = CMat::zeros(config.rx_antennas, config.tx_antennas);
            for r in 0..config.rx_antennas {
                for c in 0..config.tx_antennas {
                    h[(r, c)] = src.complex();
                }
            }
            h
        })
        .collect();
    ChannelRealization {
        seed,
        generator: GENERATOR_VERSION.to_string(),
        channels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_channels() {
        let c = SystemConfig::new(2, 2, 2, 1.0);
        let a = generate_rayleigh_channels(&c, 7);
        let b = generate_rayleigh_channels(&c, 7);
        assert_eq!(a, b);
        assert_eq!(a.fingerprint(), b.fingerprint());
        let other = generate_rayleigh_channels(&c, 8);
        assert_ne!(a.fingerprint(), other.fingerprint());
    }

    #[test]
    fn shapes_follow_config() {
        let c = SystemConfig::new(3, 2, 4, 1.0);
        let ch = generate_rayleigh_channels(&c, 1);
        assert_eq!(ch.users(), 3);
        assert!(ch.channels.iter().all(|h| h.shape() == (4, 2)));
        assert!(ch.check(&c).is_ok());
        assert!(ch.check(&SystemConfig::new(3, 2, 2, 1.0)).is_err());
    }

    #[test]
    fn unit_variance_siso() {
        let c = SystemConfig::new(1, 1, 1, 1.0);
        let n = 1_000_000u64;
        let mean: f64 = (0..n)
            .map(|s| generate_rayleigh_channels(&c, s).channels[0][(0, 0)].norm_sqr())
            .sum::<f64>()
            / n as f64;
        assert!((0.99..=1.01).contains(&mean), "mean |h|^2 = {mean}");
    }

    #[test]
    fn json_round_trip() {
        let c = SystemConfig::new(2, 2, 3, 1.0);
        let ch = generate_rayleigh_channels(&c, 11);
        let back = ChannelRealization::from_json(&ch.to_json().unwrap()).unwrap();
        assert_eq!(ch, back);
        let v: serde_json::Value = serde_json::from_str(&ch.to_json().unwrap()).unwrap();
        // rows of [re, im] pairs
        assert_eq!(v["channels"][0].as_array().unwrap().len(), 3);
        assert_eq!(v["channels"][0][0].as_array().unwrap().len(), 2);
        assert_eq!(v["channels"][0][0][0].as_array().unwrap().len(), 2);
    }
}
