//! Brute-force references for small instances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbl::FblParams;
use crate::model::{
    enumerate_decoding_orders, ChannelRealization, DecodingOrder, NoiseNorm, SystemConfig,
};
use crate::sca::{solve_mmf_with_order, AoOutcome, AoSettings};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridOptimum {
    /// Transmit amplitudes `p_1, p_2`.
    pub amplitudes: [f64; 2],
    pub combiner: f64,
    pub mmf: f64,
}

/// Exhaustive search for two single-antenna users with real gains `h`,
/// decoded by descending gain with one real combiner shared by both stages.
///
/// Amplitudes range over `points` levels in `[0, √Pt]`, the combiner over
/// `points` levels in `(0, 1]`. The combiner cancels out of every SINR under
/// the squared noise norm; under the euclidean norm larger combiners always
/// help, so the unit bound is what makes the search finite.
pub fn siso_noma_grid(
    h: [f64; 2],
    config: &SystemConfig,
    fbl: &FblParams,
    points: usize,
) -> Result<GridOptimum> {
    config.validate()?;
    if config.users != 2 || config.tx_antennas != 1 || config.rx_antennas != 1 {
        return Err(Error::Config(
            "the grid oracle needs two single-antenna users".into(),
        ));
    }
    if points < 2 {
        return Err(Error::Config(
            "the grid needs at least two points per axis".into(),
        ));
    }
    // first-decoded user sees the second as interference
    let (first, second) = if h[1].abs() > h[0].abs() {
        (1, 0)
    } else {
        (0, 1)
    };
    let amp = |i: usize| config.power.sqrt() * i as f64 / (points - 1) as f64;
    let mut best = GridOptimum {
        amplitudes: [0.0; 2],
        combiner: 1.0,
        mmf: f64::NEG_INFINITY,
    };
    for gi in 1..=points {
        let g = gi as f64 / points as f64;
        let noise = match config.noise_norm {
            NoiseNorm::Squared => g * g * config.noise_var,
            NoiseNorm::Euclidean => g * config.noise_var,
        };
        for i in 0..points {
            for j in 0..points {
                let mut p = [0.0; 2];
                p[first] = amp(i);
                p[second] = amp(j);
                let rx = |k: usize| (g * h[k] * p[k]).powi(2);
                let mut rate = [0.0; 2];
                rate[first] = fbl.stream_rate(rx(first) / (rx(second) + noise));
                rate[second] = fbl.stream_rate(rx(second) / noise);
                let mmf = rate[0].min(rate[1]);
                if mmf > best.mmf {
                    best = GridOptimum {
                        amplitudes: p,
                        combiner: g,
                        mmf,
                    };
                }
            }
        }
    }
    Ok(best)
}

/// Runs the alternating optimization under every decoding order of the
/// configuration and returns the best order with its outcome.
pub fn best_decoding_order(
    channels: &ChannelRealization,
    config: &SystemConfig,
    fbl: &FblParams,
    settings: &AoSettings,
) -> Result<(DecodingOrder, AoOutcome)> {
    let mut best: Option<(DecodingOrder, AoOutcome)> = None;
    for order in enumerate_decoding_orders(config)? {
        let out = solve_mmf_with_order(channels, &order, config, fbl, settings)?;
        if best.as_ref().is_none_or(|(_, b)| out.mmf() > b.mmf()) {
            best = Some((order, out));
        }
    }
    best.ok_or_else(|| Error::Config("no decoding order to search".into()))
}
