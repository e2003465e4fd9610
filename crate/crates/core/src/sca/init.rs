//! Feasible starting points for the alternating optimization.

use super::tangent::{sqrt_dispersion, DORMANT_SINR};
use super::DesignState;
use crate::fbl::{mmse_combiner_update, sinr_grid, CombinerSet, FblParams, PrecoderSet};
use crate::linalg::{CMat, C64};
use crate::model::{
    ChannelRealization, DecodingOrder, NoiseNorm, SymbolPart, SymbolVectorId, SystemConfig,
};

/// Top-`L` right singular vectors of `h` as columns.
fn dominant_directions(h: &CMat, l: usize) -> CMat {
    let svd = h.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let nt = h.ncols();
    let mut out = CMat::zeros(nt, l);
    for (col, &k) in idx.iter().take(l).enumerate() {
        for i in 0..nt {
            out[(i, col)] = v_t[(k, i)].conj();
        }
    }
    out
}

/// Surrogate MMF at a tangent-tight point: per-user sums of the unclamped
/// stream rates, skipping dormant streams.
pub fn surrogate_objective(
    rho: &[Vec<f64>],
    order: &DecodingOrder,
    users: usize,
    fbl: &FblParams,
) -> f64 {
    let w = fbl.dispersion_weight();
    (0..users)
        .map(|k| {
            order
                .positions_of(k)
                .iter()
                .flat_map(|&m| rho[m].iter())
                .filter(|&&r| r > DORMANT_SINR)
                .map(|&r| (1.0 + r).log2() - w * sqrt_dispersion(r))
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

pub(crate) fn mmse_combiners(
    channels: &ChannelRealization,
    p: &PrecoderSet,
    order: &DecodingOrder,
    config: &SystemConfig,
) -> CombinerSet {
    let g = mmse_combiner_update(channels, p, order, config);
    match config.noise_norm {
        NoiseNorm::Squared => g,
        NoiseNorm::Euclidean => g.normalized_rows(),
    }
}

/// Completes a state from `(P, G)`: slacks from the true SINRs, `t` from the
/// tangent-tight surrogate.
pub fn state_from_beams(
    channels: &ChannelRealization,
    p: PrecoderSet,
    g: CombinerSet,
    order: &DecodingOrder,
    config: &SystemConfig,
    fbl: &FblParams,
) -> DesignState {
    let rho: Vec<Vec<f64>> = sinr_grid(channels, &p, &g, order, config)
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|v| if v > DORMANT_SINR { v } else { 0.0 })
                .collect()
        })
        .collect();
    let t = surrogate_objective(&rho, order, config.users, fbl);
    DesignState {
        p,
        g,
        rho,
        t,
        iteration: 0,
    }
}

/// Dominant-eigenmode precoders at full power (split between the parts of a
/// splitting user), MMSE combiners, and slacks at the true SINRs.
pub fn initialize_state(
    channels: &ChannelRealization,
    order: &DecodingOrder,
    config: &SystemConfig,
    fbl: &FblParams,
) -> DesignState {
    let l = config.streams();
    let mut p = PrecoderSet::zeros(config);
    for (m, id) in order.entries.iter().enumerate() {
        let share = if id.part == SymbolPart::Whole {
            config.power
        } else {
            config.power / 2.0
        };
        let dirs = dominant_directions(channels.user(id.user), l);
        p.matrices[m] = dirs * C64::new((share / l as f64).sqrt(), 0.0);
    }
    let g = mmse_combiners(channels, &p, order, config);
    state_from_beams(channels, p, g, order, config, fbl)
}

/// Maps a NOMA design onto an RSMA order: first parts and whole vectors take
/// the NOMA beams of their user, second parts start silent.
/// Start from a design for a smaller split set (NOMA being the empty one):
/// matching symbol vectors keep their beams, a newly split user's first part
/// takes its whole-message beam and new second parts start silent.
pub fn warm_start_from(
    channels: &ChannelRealization,
    source: &DesignState,
    source_order: &DecodingOrder,
    order: &DecodingOrder,
    config: &SystemConfig,
    fbl: &FblParams,
) -> DesignState {
    let mut p = PrecoderSet::zeros(config);
    let mut g = CombinerSet::zeros(config);
    for (m, id) in order.entries.iter().enumerate() {
        let src = source_order.position_of(*id).or_else(|| match id.part {
            SymbolPart::FirstSplit => source_order.position_of(SymbolVectorId {
                part: SymbolPart::Whole,
                ..*id
            }),
            _ => None,
        });
        if let Some(src) = src {
            p.matrices[m] = source.p.matrices[src].clone();
            g.matrices[m] = source.g.matrices[src].clone();
        }
    }
    state_from_beams(channels, p, g, order, config, fbl)
}
