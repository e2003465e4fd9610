//! Modulation and coding selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::qam::bits_per_symbol;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McsEntry {
    /// QAM order.
    pub order: usize,
    pub code_rate: f64,
    /// Smallest stream rate (bits per channel use) that selects this entry.
    pub threshold: f64,
}

impl McsEntry {
    /// Entry whose threshold equals its spectral efficiency.
    pub fn new(order: usize, code_rate: f64) -> Self {
        let se = code_rate * (order as f64).log2();
        McsEntry {
            order,
            code_rate,
            threshold: se,
        }
    }

    pub fn spectral_efficiency(&self) -> f64 {
        self.code_rate * (self.order as f64).log2()
    }

    /// Information bits of a frame of `symbols` channel uses.
    pub fn info_bits(&self, symbols: usize) -> usize {
        (symbols as f64 * (self.order as f64).log2() * self.code_rate + 1e-9).floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsTable {
    pub entries: Vec<McsEntry>,
    /// Rates are multiplied by this before comparing with thresholds.
    #[serde(default = "unit")]
    pub margin: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for McsTable {
    fn default() -> Self {
        McsTable {
            entries: vec![
                McsEntry::new(4, 0.25),
                McsEntry::new(4, 0.5),
                McsEntry::new(4, 0.75),
                McsEntry::new(16, 0.5),
                McsEntry::new(16, 0.75),
                McsEntry::new(64, 0.5),
                McsEntry::new(64, 0.75),
                McsEntry::new(256, 0.75),
            ],
            margin: 1.0,
        }
    }
}

impl McsTable {
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Config("empty MCS table".into()));
        }
        for e in &self.entries {
            bits_per_symbol(e.order)?;
            if !(e.code_rate > 0.0 && e.code_rate <= 1.0) {
                return Err(Error::Config(format!(
                    "code rate {} outside (0, 1]",
                    e.code_rate
                )));
            }
        }
        let ok = self.entries.windows(2).all(|w| {
            w[0].threshold <= w[1].threshold
                && w[0].spectral_efficiency() <= w[1].spectral_efficiency()
        });
        if !ok {
            return Err(Error::Config(
                "MCS entries must be sorted by threshold".into(),
            ));
        }
        if !(self.margin > 0.0) {
            return Err(Error::Config("MCS margin must be positive".into()));
        }
        Ok(())
    }
}

/// An MCS entry together with the number of message bits it carries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamMcs {
    pub entry: McsEntry,
    pub info_bits: usize,
}

/// Highest entry whose threshold is at most `rate·margin`; among entries
/// with equal thresholds the first (lowest order) wins. Below the lowest
/// threshold the lowest entry is used with its payload cut to
/// `floor(rate·margin·symbols)` bits, so the stream never carries more than
/// its rate.
pub fn select_mcs(rate: f64, table: &McsTable, symbols: usize) -> Result<StreamMcs> {
    table.validate()?;
    if rate.is_nan() || rate < 0.0 {
        return Err(Error::Domain(format!(
            "stream rate must be nonnegative, got {rate}"
        )));
    }
    let r = rate * table.margin;
    let best = table.entries.iter().filter(|e| e.threshold <= r).fold(
        None::<&McsEntry>,
        |acc, e| match acc {
            Some(b) if b.threshold >= e.threshold => Some(b),
            _ => Some(e),
        },
    );
    match best.copied() {
        Some(entry) => Ok(StreamMcs {
            entry,
            info_bits: entry
                .info_bits(symbols)
                .min((r * symbols as f64 + 1e-9).floor() as usize),
        }),
        None => {
            let entry = table.entries[0];
            let info_bits = ((r * symbols as f64).floor() as usize).min(entry.info_bits(symbols));
            Ok(StreamMcs { entry, info_bits })
        }
    }
}
