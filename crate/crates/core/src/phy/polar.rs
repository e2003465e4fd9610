//! Polar codes: Bhattacharyya construction, encoder and SCL decoder.
//!
//! The transform is `x = u · F^{⊗n}` with `F = [[1,0],[1,1]]` and no bit
//! reversal. Decoding uses min-sum node updates; LLRs are positive for bit 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Magnitude that stands in for an infinitely reliable LLR.
pub const LLR_CLIP: f64 = 50.0;

const DEFAULT_LIST_SIZE: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolarCodeConfig {
    pub code_length: usize,
    /// Bits carried in the non-frozen slots, CRC included.
    pub info_length: usize,
    /// Sorted frozen indices.
    pub frozen: Vec<usize>,
    pub list_size: usize,
    #[serde(default)]
    pub crc_length: usize,
    /// Tail codeword bits that are never transmitted. They are known zeros
    /// because the matching tail of `u` is frozen.
    #[serde(default)]
    pub shortened: usize,
}

impl PolarCodeConfig {
    pub fn new(code_length: usize, info_length: usize, design_snr_db: f64) -> Result<Self> {
        let frozen = construct_frozen_set(code_length, info_length, design_snr_db)?;
        Ok(PolarCodeConfig {
            code_length,
            info_length,
            frozen,
            list_size: DEFAULT_LIST_SIZE,
            crc_length: 0,
            shortened: 0,
        })
    }

    /// A code whose length is `transmitted` rounded up to a power of two,
    /// shortened back to `transmitted` by freezing the tail.
    pub fn shortened(transmitted: usize, info_length: usize, design_snr_db: f64) -> Result<Self> {
        if transmitted == 0 || info_length > transmitted {
            return Err(Error::Config(format!(
                "cannot carry {info_length} bits in {transmitted} coded bits"
            )));
        }
        let n = transmitted.next_power_of_two();
        let tail = n - transmitted;
        let z = bhattacharyya(n, design_snr_db);
        let mut idx: Vec<usize> = (0..transmitted).collect();
        sort_worst_first(&mut idx, &z);
        let mut frozen: Vec<usize> = idx[..transmitted - info_length].to_vec();
        frozen.extend(transmitted..n);
        frozen.sort_unstable();
        let cfg = PolarCodeConfig {
            code_length: n,
            info_length,
            frozen,
            list_size: DEFAULT_LIST_SIZE,
            crc_length: 0,
            shortened: tail,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_list_size(mut self, list_size: usize) -> Self {
        self.list_size = list_size;
        self
    }

    pub fn with_crc(mut self, crc_length: usize) -> Self {
        self.crc_length = crc_length;
        self
    }

    /// Message bits per codeword, `K_i` minus the CRC.
    pub fn payload_length(&self) -> usize {
        self.info_length - self.crc_length
    }

    pub fn transmitted_length(&self) -> usize {
        self.code_length - self.shortened
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.code_length;
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::Config(format!(
                "code length {n} is not a power of two"
            )));
        }
        if self.info_length > n || self.frozen.len() != n - self.info_length {
            return Err(Error::Config(format!(
                "{} frozen slots for N={n}, K={}",
                self.frozen.len(),
                self.info_length
            )));
        }
        if self.frozen.windows(2).any(|w| w[0] >= w[1])
            || self.frozen.last().is_some_and(|&i| i >= n)
        {
            return Err(Error::Config(
                "frozen set must be sorted, unique and in range".into(),
            ));
        }
        if self.list_size == 0 {
            return Err(Error::Config("list size must be positive".into()));
        }
        if self.crc_length > self.info_length || !matches!(self.crc_length, 0 | 8 | 16 | 24) {
            return Err(Error::Config(format!(
                "unsupported CRC length {}",
                self.crc_length
            )));
        }
        if self.shortened >= n || self.frozen.len() < self.shortened {
            return Err(Error::Config("shortening exceeds the frozen set".into()));
        }
        let tail = &self.frozen[self.frozen.len() - self.shortened..];
        if tail.first().is_some_and(|&i| i != n - self.shortened) {
            return Err(Error::Config("shortened tail must be frozen".into()));
        }
        Ok(())
    }

    fn info_mask(&self) -> Vec<bool> {
        let mut mask = vec![true; self.code_length];
        for &i in &self.frozen {
            mask[i] = false;
        }
        mask
    }
}

/// Bhattacharyya parameters of the synthesized channels of a BPSK AWGN
/// channel at `design_snr_db` (Es/N0). With the natural-order transform the
/// index MSB is the first polarization step applied to the raw channel.
fn bhattacharyya(n: usize, design_snr_db: f64) -> Vec<f64> {
    let mut z = vec![(-(10f64.powf(design_snr_db / 10.0))).exp()];
    while z.len() < n {
        z = z.iter().flat_map(|&t| [2.0 * t - t * t, t * t]).collect();
    }
    z
}

fn sort_worst_first(idx: &mut [usize], z: &[f64]) {
    idx.sort_by(|&a, &b| z[b].total_cmp(&z[a]).then(a.cmp(&b)));
}

/// The `N − K` least reliable indices, sorted. Ties go to the lower index.
pub fn construct_frozen_set(
    code_length: usize,
    info_length: usize,
    design_snr_db: f64,
) -> Result<Vec<usize>> {
    if code_length == 0 || !code_length.is_power_of_two() {
        return Err(Error::Config(format!(
            "code length {code_length} is not a power of two"
        )));
    }
    if info_length > code_length {
        return Err(Error::Config(format!(
            "K={info_length} exceeds N={code_length}"
        )));
    }
    let z = bhattacharyya(code_length, design_snr_db);
    let mut idx: Vec<usize> = (0..code_length).collect();
    sort_worst_first(&mut idx, &z);
    let mut frozen = idx[..code_length - info_length].to_vec();
    frozen.sort_unstable();
    Ok(frozen)
}

/// In-place `u · F^{⊗n}`.
pub fn polar_transform(u: &mut [u8]) {
    let n = u.len();
    let mut h = 1;
    while h < n {
        for block in (0..n).step_by(2 * h) {
            for i in block..block + h {
                u[i] ^= u[i + h];
            }
        }
        h *= 2;
    }
}

fn crc_poly(len: usize) -> u32 {
    match len {
        8 => 0x07,
        16 => 0x1021,
        _ => 0x86_4CFB,
    }
}

/// Bit-serial CRC of a bit vector, MSB first, zero initial state.
pub fn crc_bits(bits: &[u8], len: usize) -> Vec<u8> {
    if len == 0 {
        return Vec::new();
    }
    let poly = crc_poly(len);
    let top = 1u32 << (len - 1);
    let mask = if len == 32 {
        u32::MAX
    } else {
        (1u32 << len) - 1
    };
    let mut reg = 0u32;
    for &b in bits {
        let fb = ((reg & top) != 0) ^ (b != 0);
        reg = (reg << 1) & mask;
        if fb {
            reg ^= poly;
        }
    }
    (0..len).rev().map(|i| ((reg >> i) & 1) as u8).collect()
}

/// Full-length codeword for a payload of `payload_length()` bits.
pub fn polar_encode(bits: &[u8], cfg: &PolarCodeConfig) -> Result<Vec<u8>> {
    cfg.validate()?;
    if bits.len() != cfg.payload_length() {
        return Err(Error::Dimension(format!(
            "expected {} message bits, got {}",
            cfg.payload_length(),
            bits.len()
        )));
    }
    let mut info = bits.to_vec();
    info.extend(crc_bits(bits, cfg.crc_length));
    let mut u = vec![0u8; cfg.code_length];
    let mut it = info.into_iter();
    for (slot, free) in u.iter_mut().zip(cfg.info_mask()) {
        if free {
            *slot = it.next().unwrap_or(0) & 1;
        }
    }
    polar_transform(&mut u);
    Ok(u)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeOutput {
    /// Decoded message bits (CRC stripped).
    pub bits: Vec<u8>,
    /// CRC check when enabled; otherwise whether the re-encoded codeword
    /// agrees with the hard decisions on every transmitted position.
    pub success: bool,
}

#[inline]
fn f_minsum(a: f64, b: f64) -> f64 {
    let m = a.abs().min(b.abs());
    if (a < 0.0) != (b < 0.0) {
        -m
    } else {
        m
    }
}

#[inline]
fn g_update(a: f64, b: f64, u: u8) -> f64 {
    if u == 0 {
        b + a
    } else {
        b - a
    }
}

struct Scl<'a> {
    info: &'a [bool],
    list: usize,
    /// Per leaf: for each surviving path, its parent path index and bit.
    trail: Vec<Vec<(u32, u8)>>,
    pm: Vec<f64>,
}

impl Scl<'_> {
    /// Decodes the subtree at `offset`, given one LLR vector per live path.
    /// Returns, per surviving path, the index of its input path and the
    /// subtree's re-encoded bits.
    fn node(&mut self, offset: usize, alphas: Vec<Vec<f64>>) -> (Vec<usize>, Vec<Vec<u8>>) {
        let n = alphas[0].len();
        if n == 1 {
            return self.leaf(offset, &alphas);
        }
        let h = n / 2;
        let left: Vec<Vec<f64>> = alphas
            .iter()
            .map(|a| (0..h).map(|i| f_minsum(a[i], a[i + h])).collect())
            .collect();
        let (par_l, beta_l) = self.node(offset, left);
        let right: Vec<Vec<f64>> = par_l
            .iter()
            .zip(&beta_l)
            .map(|(&p, bl)| {
                let a = &alphas[p];
                (0..h).map(|i| g_update(a[i], a[i + h], bl[i])).collect()
            })
            .collect();
        let (par_r, beta_r) = self.node(offset + h, right);
        let parents = par_r.iter().map(|&q| par_l[q]).collect();
        let betas = par_r
            .iter()
            .zip(beta_r)
            .map(|(&q, br)| {
                let bl = &beta_l[q];
                let mut out = Vec::with_capacity(n);
                out.extend(bl.iter().zip(&br).map(|(x, y)| x ^ y));
                out.extend(br);
                out
            })
            .collect();
        (parents, betas)
    }

    fn leaf(&mut self, index: usize, alphas: &[Vec<f64>]) -> (Vec<usize>, Vec<Vec<u8>>) {
        let penalty = |l: f64, u: u8| if (l < 0.0) != (u == 1) { l.abs() } else { 0.0 };
        let mut cand: Vec<(f64, usize, u8)> = Vec::with_capacity(2 * alphas.len());
        for (p, a) in alphas.iter().enumerate() {
            let l = a[0];
            cand.push((self.pm[p] + penalty(l, 0), p, 0));
            if self.info[index] {
                cand.push((self.pm[p] + penalty(l, 1), p, 1));
            }
        }
        if cand.len() > self.list {
            // stable: ties keep creation order, so bit 0 wins
            cand.sort_by(|a, b| a.0.total_cmp(&b.0));
            cand.truncate(self.list);
        }
        self.pm = cand.iter().map(|c| c.0).collect();
        self.trail[index] = cand.iter().map(|c| (c.1 as u32, c.2)).collect();
        (
            cand.iter().map(|c| c.1).collect(),
            cand.iter().map(|c| vec![c.2]).collect(),
        )
    }

    fn backtrack(&self, mut path: usize) -> Vec<u8> {
        let n = self.trail.len();
        let mut u = vec![0u8; n];
        for i in (0..n).rev() {
            let (parent, bit) = self.trail[i][path];
            u[i] = bit;
            path = parent as usize;
        }
        u
    }
}

/// Successive-cancellation list decoding of `code_length` LLRs.
pub fn polar_decode_scl(llrs: &[f64], cfg: &PolarCodeConfig) -> Result<DecodeOutput> {
    cfg.validate()?;
    let n = cfg.code_length;
    if llrs.len() != n {
        return Err(Error::Dimension(format!(
            "expected {n} LLRs, got {}",
            llrs.len()
        )));
    }
    let info = cfg.info_mask();
    let mut dec = Scl {
        info: &info,
        list: cfg.list_size,
        trail: vec![Vec::new(); n],
        pm: vec![0.0],
    };
    let (_, codewords) = dec.node(0, vec![llrs.to_vec()]);
    let mut ranked: Vec<usize> = (0..codewords.len()).collect();
    ranked.sort_by(|&a, &b| dec.pm[a].total_cmp(&dec.pm[b]).then(a.cmp(&b)));
    let extract = |path: usize| -> Vec<u8> {
        dec.backtrack(path)
            .into_iter()
            .zip(&info)
            .filter_map(|(b, &free)| free.then_some(b))
            .collect()
    };
    let payload = cfg.payload_length();
    if cfg.crc_length > 0 {
        for &path in &ranked {
            let bits = extract(path);
            if crc_bits(&bits[..payload], cfg.crc_length) == bits[payload..] {
                return Ok(DecodeOutput {
                    bits: bits[..payload].to_vec(),
                    success: true,
                });
            }
        }
        let mut bits = extract(ranked[0]);
        bits.truncate(payload);
        return Ok(DecodeOutput {
            bits,
            success: false,
        });
    }
    let best = ranked[0];
    let consistent = codewords[best]
        .iter()
        .zip(llrs)
        .take(cfg.transmitted_length())
        .all(|(&c, &l)| l == 0.0 || (l < 0.0) == (c == 1));
    Ok(DecodeOutput {
        bits: extract(best),
        success: consistent,
    })
}
