//! System configuration, channel realizations and SIC decoding orders.

mod channel;
mod order;

pub use channel::{generate_rayleigh_channels, ChannelRealization, GaussianSource};
pub use order::{
    compute_decoding_order, enumerate_decoding_orders, DecodingOrder, StreamAddress, SymbolPart,
    SymbolVectorId, MAX_ENUMERATED_VECTORS,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multiple-access scheme selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Rsma,
    Noma,
    Sdma,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Rsma => "rsma",
            SchemeKind::Noma => "noma",
            SchemeKind::Sdma => "sdma",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "rsma" => Ok(SchemeKind::Rsma),
            "noma" => Ok(SchemeKind::Noma),
            "sdma" => Ok(SchemeKind::Sdma),
            _ => Err(Error::UnknownScheme(name.to_string())),
        }
    }
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// How the combiner norm enters the noise term of the SINR denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseNorm {
    /// `‖g‖² σ²`, the noise power after combining.
    #[default]
    Squared,
    /// `‖g‖ σ²`.
    Euclidean,
}

fn default_noise_var() -> f64 {
    1.0
}

fn default_epsilon() -> f64 {
    1e-5
}

/// Dimensions, power budget and finite-blocklength parameters of one uplink
/// system. User indices are zero-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub users: usize,
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    /// Per-user transmit power budget (linear). With unit noise variance this
    /// is the transmit SNR.
    pub power: f64,
    #[serde(default = "default_noise_var")]
    pub noise_var: f64,
    pub blocklength: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub scheme: SchemeKind,
    #[serde(default)]
    pub split_set: Vec<usize>,
    #[serde(default)]
    pub noise_norm: NoiseNorm,
}

impl SystemConfig {
    pub fn new(users: usize, tx_antennas: usize, rx_antennas: usize, power: f64) -> Self {
        SystemConfig {
            users,
            tx_antennas,
            rx_antennas,
            power,
            noise_var: 1.0,
            blocklength: 500.0,
            epsilon: default_epsilon(),
            scheme: SchemeKind::Noma,
            split_set: Vec::new(),
            noise_norm: NoiseNorm::Squared,
        }
    }

    pub fn with_scheme(mut self, scheme: SchemeKind, split_set: Vec<usize>) -> Self {
        self.scheme = scheme;
        self.split_set = split_set;
        self
    }

    pub fn with_blocklength(mut self, n: f64) -> Self {
        self.blocklength = n;
        self
    }

    pub fn with_epsilon(mut self, eps: f64) -> Self {
        self.epsilon = eps;
        self
    }

    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.power = 10f64.powf(snr_db / 10.0) * self.noise_var;
        self
    }

    /// Streams per user, `min(Nt, Nr)`.
    pub fn streams(&self) -> usize {
        self.tx_antennas.min(self.rx_antennas)
    }

    /// Number of symbol vectors, `2|J| + |U|`.
    pub fn symbol_vectors(&self) -> usize {
        self.users + self.split_set.len()
    }

    pub fn is_split(&self, user: usize) -> bool {
        self.split_set.contains(&user)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.users == 0 {
            return bad("at least one user is required");
        }
        if self.tx_antennas == 0 || self.rx_antennas == 0 {
            return bad("antenna counts must be positive");
        }
        if !(self.power > 0.0 && self.power.is_finite()) {
            return bad("transmit power must be positive");
        }
        if !(self.noise_var > 0.0 && self.noise_var.is_finite()) {
            return bad("noise variance must be positive");
        }
        if !(self.blocklength >= 1.0 && self.blocklength.is_finite()) {
            return bad("blocklength must be at least 1");
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("epsilon must lie in (0, 1)");
        }
        let mut seen = vec![false; self.users];
        for &j in &self.split_set {
            if j >= self.users {
                return Err(Error::Config(format!("split user {j} out of range")));
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(Error::Config(format!("split user {j} listed twice")));
            }
        }
        crate::scheme::lookup(self.scheme).validate(self)
    }
}
