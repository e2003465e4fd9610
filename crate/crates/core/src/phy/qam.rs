//! Square Gray-mapped QAM and max-log LLRs.
//!
//! A symbol's label is its bits read MSB first. The first half of the label
//! selects the in-phase level, the second half the quadrature level, each
//! through a binary reflected Gray code. Level `k` of an axis with `q` levels
//! sits at amplitude `q − 1 − 2k`, so the all-zero label is the upper right
//! corner. The constellation is scaled to unit average energy.

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::phy::polar::LLR_CLIP;

/// SINR above which the LLR prefactor saturates.
const GAMMA_CAP: f64 = 1e12;

pub fn bits_per_symbol(order: usize) -> Result<usize> {
    match order {
        4 => Ok(2),
        16 => Ok(4),
        64 => Ok(6),
        256 => Ok(8),
        _ => Err(Error::Config(format!("unsupported QAM order {order}"))),
    }
}

fn gray_to_level(mut g: usize) -> usize {
    let mut k = 0;
    while g != 0 {
        k ^= g;
        g >>= 1;
    }
    k
}

/// Constellation indexed by label.
pub fn qam_gray_table(order: usize) -> Result<Vec<C64>> {
    let m = bits_per_symbol(order)?;
    let half = m / 2;
    let q = 1usize << half;
    let scale = (2.0 * (order as f64 - 1.0) / 3.0).sqrt();
    let amp = |g: usize| (q as f64 - 1.0 - 2.0 * gray_to_level(g) as f64) / scale;
    Ok((0..order)
        .map(|label| C64::new(amp(label >> half), amp(label & (q - 1))))
        .collect())
}

pub fn qam_map(bits: &[u8], order: usize) -> Result<Vec<C64>> {
    let m = bits_per_symbol(order)?;
    if bits.len() % m != 0 {
        return Err(Error::Dimension(format!(
            "{} bits is not a multiple of {m}",
            bits.len()
        )));
    }
    let table = qam_gray_table(order)?;
    Ok(bits
        .chunks(m)
        .map(|c| {
            table[c
                .iter()
                .fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize)]
        })
        .collect())
}

/// Max-log LLRs of combiner outputs `z = g·ỹ` with post-combining SINR
/// `gamma`: `γ·[min_{a: bit=1} |z/φ − a|² − min_{a: bit=0} |z/φ − a|²]`,
/// `φ = γ/(1+γ)`. Positive means bit 0; clipped to ±50.
pub fn compute_llrs(combined: &[C64], gamma: f64, order: usize) -> Result<Vec<f64>> {
    if gamma.is_nan() || gamma < 0.0 {
        return Err(Error::Domain(format!(
            "SINR must be nonnegative, got {gamma}"
        )));
    }
    let m = bits_per_symbol(order)?;
    if gamma == 0.0 {
        return Ok(vec![0.0; combined.len() * m]);
    }
    let table = qam_gray_table(order)?;
    let gamma = gamma.min(GAMMA_CAP);
    let phi = gamma / (1.0 + gamma);
    let mut out = Vec::with_capacity(combined.len() * m);
    let mut d = vec![0.0; order];
    for &z in combined {
        let x = z / phi;
        for (di, a) in d.iter_mut().zip(&table) {
            *di = (x - a).norm_sqr();
        }
        for bit in (0..m).rev() {
            let (mut d0, mut d1) = (f64::INFINITY, f64::INFINITY);
            for (label, &di) in d.iter().enumerate() {
                if (label >> bit) & 1 == 0 {
                    d0 = d0.min(di);
                } else {
                    d1 = d1.min(di);
                }
            }
            out.push((gamma * (d1 - d0)).clamp(-LLR_CLIP, LLR_CLIP));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qpsk_zero_label_is_upper_right() {
        let s = qam_map(&[0, 0], 4).unwrap()[0];
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s - C64::new(r, r)).norm() < 1e-15);
    }

    #[test]
    fn rejects_bad_orders_and_lengths() {
        assert!(qam_gray_table(8).is_err());
        assert!(qam_map(&[0, 1, 1], 4).is_err());
    }
}
