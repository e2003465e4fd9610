//! SINR and finite-blocklength rate evaluation.
//!
//! The per-stream rate is the normal approximation
//! `log2(1+γ) − (B/√N)·sqrt(1 − (1+γ)^-2)` with `B = Q⁻¹(ε)·log2(e)`,
//! clamped at zero.

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::linalg::{dot, CMat, C64};
use crate::model::{ChannelRealization, DecodingOrder, NoiseNorm, StreamAddress, SystemConfig};
use crate::scheme::{lookup, AccessScheme};

/// Diagonal loading applied when a receive covariance is not positive
/// definite.
pub const COVARIANCE_REGULARIZATION: f64 = 1e-12;

/// Gaussian tail probability `Q(x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Inverse of the Gaussian tail probability.
pub fn q_inverse(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("Q^-1 needs 0 < eps < 1, got {eps}")));
    }
    if eps == 0.5 {
        return Ok(0.0);
    }
    let mut x = std::f64::consts::SQRT_2 * erfc_inv(2.0 * eps);
    // Newton polish on Q(x) - eps; Q'(x) = -φ(x).
    for _ in 0..3 {
        let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if pdf == 0.0 {
            break;
        }
        let step = (q_function(x) - eps) / pdf;
        x += step;
        if step.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    Ok(x)
}

/// `B = Q⁻¹(ε)·log2(e)`.
pub fn fbl_penalty_coefficient(eps: f64) -> Result<f64> {
    Ok(q_inverse(eps)? * std::f64::consts::LOG2_E)
}

/// Channel dispersion `1 − (1+γ)^-2`.
pub fn dispersion(gamma: f64) -> f64 {
    1.0 - (1.0 + gamma).powi(-2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FblParams {
    pub blocklength: f64,
    pub epsilon: f64,
    /// Cached `Q⁻¹(ε)·log2(e)`.
    pub penalty: f64,
}

impl FblParams {
    pub fn new(blocklength: f64, epsilon: f64) -> Result<Self> {
        if !(blocklength >= 1.0 && blocklength.is_finite()) {
            return Err(Error::Domain(format!("blocklength {blocklength} < 1")));
        }
        Ok(FblParams {
            blocklength,
            epsilon,
            penalty: fbl_penalty_coefficient(epsilon)?,
        })
    }

    pub fn from_config(config: &SystemConfig) -> Result<Self> {
        Self::new(config.blocklength, config.epsilon)
    }

    /// `B / √N`, the weight on `sqrt(V)`.
    pub fn dispersion_weight(&self) -> f64 {
        self.penalty / self.blocklength.sqrt()
    }

    /// Unclamped per-stream rate.
    pub fn raw_stream_rate(&self, gamma: f64) -> f64 {
        (1.0 + gamma).log2() - self.dispersion_weight() * dispersion(gamma).sqrt()
    }

    pub fn stream_rate(&self, gamma: f64) -> f64 {
        self.raw_stream_rate(gamma).max(0.0)
    }
}

/// Rate of one symbol vector: sum of its clamped per-stream rates.
pub fn symbol_vector_rate(gammas: &[f64], fbl: &FblParams) -> f64 {
    gammas.iter().map(|&g| fbl.stream_rate(g.max(0.0))).sum()
}

/// Precoders indexed by decoding-order position; each matrix is `Nt × L`
/// with one column per stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecoderSet {
    #[serde(with = "crate::linalg::matrices")]
    pub matrices: Vec<CMat>,
}

impl PrecoderSet {
    pub fn zeros(config: &SystemConfig) -> Self {
        PrecoderSet {
            matrices: vec![
                CMat::zeros(config.tx_antennas, config.streams());
                config.symbol_vectors()
            ],
        }
    }

    pub fn column(&self, position: usize, stream: usize) -> Vec<C64> {
        self.matrices[position]
            .column(stream)
            .iter()
            .copied()
            .collect()
    }

    /// `tr(P Pᴴ)` summed over the given positions.
    pub fn power(&self, positions: &[usize]) -> f64 {
        positions
            .iter()
            .map(|&m| self.matrices[m].norm_squared())
            .sum()
    }

    /// Largest per-user power excess over `budget`, relative to the budget.
    pub fn max_power_violation(&self, order: &DecodingOrder, users: usize, budget: f64) -> f64 {
        (0..users)
            .map(|k| (self.power(&order.positions_of(k)) - budget) / budget)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Combiners indexed by decoding-order position; each matrix is `L × Nr`
/// with one row per stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinerSet {
    #[serde(with = "crate::linalg::matrices")]
    pub matrices: Vec<CMat>,
}

impl CombinerSet {
    pub fn zeros(config: &SystemConfig) -> Self {
        CombinerSet {
            matrices: vec![
                CMat::zeros(config.streams(), config.rx_antennas);
                config.symbol_vectors()
            ],
        }
    }

    pub fn row(&self, position: usize, stream: usize) -> Vec<C64> {
        self.matrices[position]
            .row(stream)
            .iter()
            .copied()
            .collect()
    }

    /// Scales every nonzero row to unit Euclidean norm.
    pub fn normalized_rows(&self) -> Self {
        let mut out = self.clone();
        for m in out.matrices.iter_mut() {
            for r in 0..m.nrows() {
                let n = m.row(r).norm();
                if n > 0.0 {
                    let mut row = m.row_mut(r);
                    row /= C64::new(n, 0.0);
                }
            }
        }
        out
    }
}

/// Noise term of the SINR denominator for combiner row `g`.
pub fn combiner_noise(g: &[C64], noise_var: f64, norm: NoiseNorm) -> f64 {
    let sq: f64 = g.iter().map(|z| z.norm_sqr()).sum();
    match norm {
        NoiseNorm::Squared => sq * noise_var,
        NoiseNorm::Euclidean => sq.sqrt() * noise_var,
    }
}

/// `g · H` for a combiner row and a channel matrix.
pub fn combine_channel(g: &[C64], h: &CMat) -> Vec<C64> {
    (0..h.ncols())
        .map(|c| (0..h.nrows()).map(|r| g[r] * h[(r, c)]).sum())
        .collect()
}

/// Signal, interference and noise of one stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinrTerms {
    pub signal: f64,
    pub intra: f64,
    pub inter: f64,
    pub noise: f64,
}

impl SinrTerms {
    pub fn sinr(&self) -> f64 {
        let den = self.intra + self.inter + self.noise;
        if self.signal == 0.0 {
            0.0
        } else {
            self.signal / den
        }
    }
}

pub(crate) fn sinr_terms(
    channels: &ChannelRealization,
    p: &PrecoderSet,
    g: &CombinerSet,
    order: &DecodingOrder,
    addr: StreamAddress,
    scheme: &dyn AccessScheme,
    config: &SystemConfig,
) -> SinrTerms {
    let (m, a) = (addr.position, addr.stream);
    let row = g.row(m, a);
    let own = combine_channel(&row, channels.user(order.user_at(m)));
    let streams = p.matrices[m].ncols();
    let mut signal = 0.0;
    let mut intra = 0.0;
    for i in 0..streams {
        let v = dot(&own, &p.column(m, i)).norm_sqr();
        if i == a {
            signal = v;
        } else {
            intra += v;
        }
    }
    let mut inter = 0.0;
    for j in scheme.interferers(order, m) {
        let eff = combine_channel(&row, channels.user(order.user_at(j)));
        for i in 0..p.matrices[j].ncols() {
            inter += dot(&eff, &p.column(j, i)).norm_sqr();
        }
    }
    SinrTerms {
        signal,
        intra,
        inter,
        noise: combiner_noise(&row, config.noise_var, config.noise_norm),
    }
}

/// SINR of one stream. Interference from other symbol vectors follows the
/// configured scheme: later-decoded vectors under SIC, all other vectors
/// without it.
pub fn stream_sinr(
    channels: &ChannelRealization,
    p: &PrecoderSet,
    g: &CombinerSet,
    order: &DecodingOrder,
    addr: StreamAddress,
    config: &SystemConfig,
) -> f64 {
    sinr_terms(channels, p, g, order, addr, lookup(config.scheme), config).sinr()
}

/// SINR of every stream, `M × L`.
pub fn sinr_grid(
    channels: &ChannelRealization,
    p: &PrecoderSet,
    g: &CombinerSet,
    order: &DecodingOrder,
    config: &SystemConfig,
) -> Vec<Vec<f64>> {
    let scheme = lookup(config.scheme);
    (0..order.len())
        .map(|m| {
            (0..config.streams())
                .map(|a| {
                    sinr_terms(
                        channels,
                        p,
                        g,
                        order,
                        StreamAddress::new(m, a),
                        scheme,
                        config,
                    )
                    .sinr()
                })
                .collect()
        })
        .collect()
}

/// Rates of every symbol vector and user, plus the max-min objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub per_symbol_vector: Vec<f64>,
    pub per_user: Vec<f64>,
    pub mmf: f64,
    pub per_stream_sinr: Vec<Vec<f64>>,
}

impl RateReport {
    pub fn from_sinrs(
        sinrs: Vec<Vec<f64>>,
        order: &DecodingOrder,
        users: usize,
        fbl: &FblParams,
    ) -> Self {
        let per_symbol_vector: Vec<f64> =
            sinrs.iter().map(|g| symbol_vector_rate(g, fbl)).collect();
        let per_user: Vec<f64> = (0..users)
            .map(|k| {
                order
                    .positions_of(k)
                    .iter()
                    .map(|&m| per_symbol_vector[m])
                    .sum()
            })
            .collect();
        let mmf = per_user.iter().copied().fold(f64::INFINITY, f64::min);
        RateReport {
            per_symbol_vector,
            per_user,
            mmf,
            per_stream_sinr: sinrs,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// CSV header for `users` per-user columns.
    pub fn csv_header(users: usize) -> Vec<String> {
        let mut h: Vec<String> = ["seed", "scheme", "N", "snr_db", "mmf"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        h.extend((0..users).map(|k| format!("rate_user{k}")));
        h
    }

    pub fn csv_record(&self, seed: u64, config: &SystemConfig, snr_db: f64) -> Vec<String> {
        let mut r = vec![
            seed.to_string(),
            config.scheme.to_string(),
            format!("{}", config.blocklength),
            format!("{snr_db}"),
            format!("{:.12e}", self.mmf),
        ];
        r.extend(self.per_user.iter().map(|v| format!("{v:.12e}")));
        r
    }
}

pub fn user_rates(
    channels: &ChannelRealization,
    p: &PrecoderSet,
    g: &CombinerSet,
    order: &DecodingOrder,
    config: &SystemConfig,
    fbl: &FblParams,
) -> RateReport {
    RateReport::from_sinrs(
        sinr_grid(channels, p, g, order, config),
        order,
        config.users,
        fbl,
    )
}

/// Received covariance of the given positions' signals, `Σ H P Pᴴ Hᴴ`.
pub fn signal_covariance(
    channels: &ChannelRealization,
    p: &PrecoderSet,
    order: &DecodingOrder,
    positions: impl IntoIterator<Item = usize>,
    nr: usize,
) -> CMat {
    let mut r = CMat::zeros(nr, nr);
    for j in positions {
        let hp = channels.user(order.user_at(j)) * &p.matrices[j];
        r += &hp * hp.adjoint();
    }
    r
}

/// Solves `R⁻¹ b` for Hermitian `R`, loading the diagonal if `R` is not
/// positive definite. The flag reports whether loading was needed.
pub(crate) fn hermitian_solve(r: &CMat, b: &CMat) -> (CMat, bool) {
    if let Some(ch) = Cholesky::new(r.clone()) {
        return (ch.solve(b), false);
    }
    let n = r.nrows();
    let scale = (r.trace().re / n as f64).abs().max(1.0);
    let mut loaded = r.clone();
    let mut eps = COVARIANCE_REGULARIZATION * scale;
    loop {
        for i in 0..n {
            loaded[(i, i)] = r[(i, i)] + C64::new(eps, 0.0);
        }
        if let Some(ch) = Cholesky::new(loaded.clone()) {
            return (ch.solve(b), true);
        }
        eps *= 10.0;
    }
}

/// MMSE combiners for the current precoders.
///
/// For the stream `a` of the vector at position `m`:
/// `g = (H_m p_a)ᴴ R_m⁻¹`, where `R_m` is the received covariance of all
/// streams of vector `m`, every interfering vector of the scheme, and the
/// noise. The returned flag is set when any covariance needed diagonal
/// loading.
pub fn mmse_combiner_update_flagged(
    channels: &ChannelRealization,
    p: &PrecoderSet,
    order: &DecodingOrder,
    config: &SystemConfig,
) -> (CombinerSet, bool) {
    let scheme = lookup(config.scheme);
    let nr = config.rx_antennas;
    let mut any_loaded = false;
    let matrices = (0..order.len())
        .map(|m| {
            let mut positions = scheme.interferers(order, m);
            positions.push(m);
            let mut r = signal_covariance(channels, p, order, positions, nr);
            for i in 0..nr {
                r[(i, i)] += C64::new(config.noise_var, 0.0);
            }
            let hp = channels.user(order.user_at(m)) * &p.matrices[m];
            // R is Hermitian, so (hpᴴ R⁻¹) = (R⁻¹ hp)ᴴ.
            let (sol, loaded) = hermitian_solve(&r, &hp);
            any_loaded |= loaded;
            sol.adjoint()
        })
        .collect();
    (CombinerSet { matrices }, any_loaded)
}

pub fn mmse_combiner_update(
    channels: &ChannelRealization,
    p: &PrecoderSet,
    order: &DecodingOrder,
    config: &SystemConfig,
) -> CombinerSet {
    mmse_combiner_update_flagged(channels, p, order, config).0
}
