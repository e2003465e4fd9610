//! Frame construction, the uplink channel and MMSE-SIC reception.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbl::{hermitian_solve, sinr_grid, CombinerSet, FblParams, PrecoderSet};
use crate::linalg::{CMat, C64};
use crate::model::{ChannelRealization, DecodingOrder, GaussianSource, SystemConfig};
use crate::phy::interleave::{deinterleave, interleave};
use crate::phy::mcs::{select_mcs, McsTable, StreamMcs};
use crate::phy::polar::{polar_decode_scl, polar_encode, PolarCodeConfig, LLR_CLIP};
use crate::phy::qam::{bits_per_symbol, compute_llrs, qam_map};
use crate::scheme::lookup;

/// Channel uses per frame and stream.
pub const SYMBOLS_PER_FRAME: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSettings {
    pub symbols: usize,
    pub list_size: usize,
    #[serde(default)]
    pub crc_length: usize,
    #[serde(default)]
    pub table: McsTable,
}

impl Default for LinkSettings {
    fn default() -> Self {
        LinkSettings {
            symbols: SYMBOLS_PER_FRAME,
            list_size: 8,
            crc_length: 0,
            table: McsTable::default(),
        }
    }
}

/// Code and modulation of one stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamPlan {
    pub mcs: StreamMcs,
    pub code: PolarCodeConfig,
    pub interleaver_seed: u64,
}

impl StreamPlan {
    pub fn new(
        mcs: StreamMcs,
        position: usize,
        stream: usize,
        settings: &LinkSettings,
    ) -> Result<Self> {
        let coded = settings.symbols * bits_per_symbol(mcs.entry.order)?;
        let k = mcs.info_bits + settings.crc_length;
        if k > coded {
            return Err(Error::Config(format!(
                "{k} bits do not fit in {coded} coded bits"
            )));
        }
        // frozen set designed at the BPSK SNR whose Gaussian-input capacity
        // equals the code rate
        let r = (k as f64 / coded as f64).max(1e-3);
        let design_snr_db = 10.0 * ((4f64.powf(r) - 1.0) / 2.0).log10();
        let code = PolarCodeConfig::shortened(coded, k, design_snr_db)?
            .with_list_size(settings.list_size)
            .with_crc(settings.crc_length);
        code.validate()?;
        Ok(StreamPlan {
            mcs,
            code,
            interleaver_seed: 0x9e37_79b9_7f4a_7c15 ^ ((position as u64) << 32 | stream as u64),
        })
    }

    /// Coded, shortened, interleaved bits and their symbols for a payload.
    pub fn modulate(&self, payload: &[u8]) -> Result<(Vec<u8>, Vec<C64>)> {
        let mut x = polar_encode(payload, &self.code)?;
        x.truncate(self.code.transmitted_length());
        let coded = interleave(&x, self.interleaver_seed);
        let symbols = qam_map(&coded, self.mcs.entry.order)?;
        Ok((coded, symbols))
    }
}

/// Per-stream plans indexed by decoding position then stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkPlan {
    pub streams: Vec<Vec<StreamPlan>>,
    pub symbols: usize,
}

impl LinkPlan {
    /// Chooses each stream's MCS from its rate in bits per channel use.
    pub fn from_rates(rates: &[Vec<f64>], settings: &LinkSettings) -> Result<Self> {
        let streams = rates
            .iter()
            .enumerate()
            .map(|(m, row)| {
                row.iter()
                    .enumerate()
                    .map(|(a, &r)| {
                        StreamPlan::new(
                            select_mcs(r, &settings.table, settings.symbols)?,
                            m,
                            a,
                            settings,
                        )
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LinkPlan {
            streams,
            symbols: settings.symbols,
        })
    }

    /// Message bits per user when every stream is decoded.
    pub fn user_bits(&self, order: &DecodingOrder, users: usize) -> Vec<usize> {
        let mut out = vec![0; users];
        for (m, row) in self.streams.iter().enumerate() {
            out[order.user_at(m)] += row.iter().map(|s| s.mcs.info_bits).sum::<usize>();
        }
        out
    }

    /// Per-user spectral efficiency implied by the plan.
    pub fn user_spectral_efficiency(&self, order: &DecodingOrder, users: usize) -> Vec<f64> {
        self.user_bits(order, users)
            .into_iter()
            .map(|b| b as f64 / self.symbols as f64)
            .collect()
    }
}

/// Finite-blocklength rate of every stream of a design.
pub fn design_stream_rates(
    channels: &ChannelRealization,
    p: &PrecoderSet,
    g: &CombinerSet,
    order: &DecodingOrder,
    config: &SystemConfig,
) -> Result<Vec<Vec<f64>>> {
    let fbl = FblParams::from_config(config)?;
    Ok(sinr_grid(channels, p, g, order, config)
        .into_iter()
        .map(|row| row.into_iter().map(|s| fbl.stream_rate(s)).collect())
        .collect())
}

/// Transmitted content of one frame, indexed by decoding position then stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub info: Vec<Vec<Vec<u8>>>,
    pub coded: Vec<Vec<Vec<u8>>>,
    pub symbols: Vec<Vec<Vec<C64>>>,
    pub mcs: Vec<Vec<StreamMcs>>,
}

impl Frame {
    pub fn random(plan: &LinkPlan, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut frame = Frame {
            info: Vec::new(),
            coded: Vec::new(),
            symbols: Vec::new(),
            mcs: Vec::new(),
        };
        for row in &plan.streams {
            let (mut info, mut coded, mut symbols, mut mcs) = (vec![], vec![], vec![], vec![]);
            for s in row {
                let w: Vec<u8> = (0..s.code.payload_length())
                    .map(|_| rng.gen::<bool>() as u8)
                    .collect();
                let (c, x) = s.modulate(&w)?;
                info.push(w);
                coded.push(c);
                symbols.push(x);
                mcs.push(s.mcs);
            }
            frame.info.push(info);
            frame.coded.push(coded);
            frame.symbols.push(symbols);
            frame.mcs.push(mcs);
        }
        Ok(frame)
    }

    /// Message bits of every stream of each user.
    pub fn user_bits(&self, order: &DecodingOrder, users: usize) -> Vec<usize> {
        let mut out = vec![0; users];
        for (m, row) in self.info.iter().enumerate() {
            out[order.user_at(m)] += row.iter().map(Vec::len).sum::<usize>();
        }
        out
    }
}

fn check_design(
    channels: &ChannelRealization,
    p: &PrecoderSet,
    order: &DecodingOrder,
    config: &SystemConfig,
    streams: usize,
) -> Result<()> {
    channels.check(config)?;
    order.check(config)?;
    if p.matrices.len() != order.len() || streams != order.len() {
        return Err(Error::Dimension(format!(
            "{} precoders and {streams} planned vectors for {} positions",
            p.matrices.len(),
            order.len()
        )));
    }
    for (m, pm) in p.matrices.iter().enumerate() {
        if pm.nrows() != config.tx_antennas || pm.ncols() != config.streams() {
            return Err(Error::Dimension(format!(
                "precoder {m} is {}x{}",
                pm.nrows(),
                pm.ncols()
            )));
        }
    }
    Ok(())
}

/// `Σ_m H_{user(m)} P_m S_m + n`, one column per channel use.
pub fn transmit(
    frame: &Frame,
    channels: &ChannelRealization,
    p: &PrecoderSet,
    order: &DecodingOrder,
    config: &SystemConfig,
    noise_var: f64,
    noise_seed: u64,
) -> Result<CMat> {
    check_design(channels, p, order, config, frame.symbols.len())?;
    let s = frame.symbols[0].first().map_or(0, Vec::len);
    let mut y = CMat::zeros(config.rx_antennas, s);
    for (m, row) in frame.symbols.iter().enumerate() {
        if row.len() != config.streams() || row.iter().any(|x| x.len() != s) {
            return Err(Error::Dimension(format!("vector {m} has ragged streams")));
        }
        let sm = CMat::from_fn(row.len(), s, |a, t| row[a][t]);
        y += channels.user(order.user_at(m)) * &p.matrices[m] * sm;
    }
    if noise_var > 0.0 {
        let mut src = GaussianSource::new(noise_seed);
        for v in y.iter_mut() {
            *v += src.complex_scaled(noise_var);
        }
    }
    Ok(y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    /// Decode success per decoding position and stream.
    pub success: Vec<Vec<bool>>,
    /// Recovered message bits per user, `D_k`.
    pub recovered_bits: Vec<usize>,
    pub channel_uses: usize,
    /// Zero-based decoding position of the first failed stream in a SIC
    /// chain; later streams are not attempted.
    pub sic_abort_position: Option<usize>,
}

/// MMSE-SIC reception of one frame.
///
/// Symbol vectors are processed in decoding order, their streams in index
/// order. Each stream is combined against the covariance of everything not
/// yet cancelled, demapped, deinterleaved and list-decoded. With SIC a
/// decoded stream is re-modulated and subtracted; a failed stream stops the
/// chain. Without SIC every stream sees all others.
///
/// Success is judged against `truth` unless the plan carries a CRC, in
/// which case the CRC decides.
#[allow(clippy::too_many_arguments)]
pub fn mmse_sic_receive(
    y: &CMat,
    truth: &Frame,
    plan: &LinkPlan,
    channels: &ChannelRealization,
    p: &PrecoderSet,
    order: &DecodingOrder,
    config: &SystemConfig,
    noise_var: f64,
) -> Result<FrameResult> {
    check_design(channels, p, order, config, plan.streams.len())?;
    let nr = config.rx_antennas;
    let s = plan.symbols;
    if y.nrows() != nr || y.ncols() != s {
        return Err(Error::Dimension(format!(
            "received block is {}x{}, expected {nr}x{s}",
            y.nrows(),
            y.ncols()
        )));
    }
    if truth.info.len() != plan.streams.len() {
        return Err(Error::Dimension("frame and plan disagree".into()));
    }
    let sic = lookup(config.scheme).successive_cancellation();
    let l = config.streams();
    let hp: Vec<CMat> = (0..order.len())
        .map(|m| channels.user(order.user_at(m)) * &p.matrices[m])
        .collect();
    let mut residual = y.clone();
    let mut result = FrameResult {
        success: vec![vec![false; l]; order.len()],
        recovered_bits: vec![0; config.users],
        channel_uses: s,
        sic_abort_position: None,
    };
    for m in 0..order.len() {
        for a in 0..l {
            // covariance of every stream still present in the residual
            let mut r = CMat::identity(nr, nr) * C64::new(noise_var, 0.0);
            for (j, h) in hp.iter().enumerate() {
                let first = match (sic, j.cmp(&m)) {
                    (false, _) => 0,
                    (true, std::cmp::Ordering::Less) => continue,
                    (true, std::cmp::Ordering::Equal) => a,
                    (true, std::cmp::Ordering::Greater) => 0,
                };
                for i in first..l {
                    let c = h.column(i);
                    r += c * c.adjoint();
                }
            }
            let target = hp[m].column(a).clone_owned();
            let (w, _) = hermitian_solve(&r, &CMat::from_column_slice(nr, 1, target.as_slice()));
            let phi = (target.adjoint() * &w)[(0, 0)].re;
            let gamma = if phi <= 0.0 {
                0.0
            } else if phi >= 1.0 {
                f64::INFINITY
            } else {
                phi / (1.0 - phi)
            };
            let z: Vec<C64> = (w.adjoint() * &residual).iter().copied().collect();
            let sp = &plan.streams[m][a];
            let llrs = compute_llrs(&z, gamma.min(1e12), sp.mcs.entry.order)?;
            let mut llrs = deinterleave(&llrs, sp.interleaver_seed);
            llrs.resize(sp.code.code_length, LLR_CLIP);
            let out = polar_decode_scl(&llrs, &sp.code)?;
            let ok = if sp.code.crc_length > 0 {
                out.success
            } else {
                out.bits == truth.info[m][a]
            };
            if ok {
                result.success[m][a] = true;
                result.recovered_bits[order.user_at(m)] += out.bits.len();
                if sic {
                    let (_, sym) = sp.modulate(&out.bits)?;
                    let row = CMat::from_row_slice(1, s, &sym);
                    residual -= CMat::from_column_slice(nr, 1, target.as_slice()) * row;
                }
            } else if sic {
                result.sic_abort_position = Some(m);
                return Ok(result);
            }
        }
    }
    Ok(result)
}

/// `Σ_l min_k D_k / Σ_l S` over frames.
pub fn max_min_throughput(results: &[FrameResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Config("no frames to average".into()));
    }
    let bits: usize = results
        .iter()
        .map(|r| r.recovered_bits.iter().copied().min().unwrap_or(0))
        .sum();
    let uses: usize = results.iter().map(|r| r.channel_uses).sum();
    if uses == 0 {
        return Err(Error::Config("frames used no channel".into()));
    }
    Ok(bits as f64 / uses as f64)
}

/// Runs `frames` independent frames of one design. Frame `f` draws its
/// message bits from `seed + 2f` and its noise from `seed + 2f + 1`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_frames(
    plan: &LinkPlan,
    channels: &ChannelRealization,
    p: &PrecoderSet,
    order: &DecodingOrder,
    config: &SystemConfig,
    noise_var: f64,
    frames: usize,
    seed: u64,
) -> Result<Vec<FrameResult>> {
    (0..frames as u64)
        .map(|f| {
            let base = seed.wrapping_add(2 * f);
            let frame = Frame::random(plan, base)?;
            let y = transmit(
                &frame,
                channels,
                p,
                order,
                config,
                noise_var,
                base.wrapping_add(1),
            )?;
            mmse_sic_receive(&y, &frame, plan, channels, p, order, config, noise_var)
        })
        .collect()
}
