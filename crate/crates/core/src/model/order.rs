use serde::{Deserialize, Serialize};

use super::{ChannelRealization, SystemConfig};
use crate::error::{Error, Result};

/// Upper bound on symbol vectors for exhaustive order enumeration (6! = 720).
pub const MAX_ENUMERATED_VECTORS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolPart {
    FirstSplit,
    Whole,
    SecondSplit,
}

/// One symbol vector: a user's whole message, or one half of a split one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SymbolVectorId {
    pub user: usize,
    pub part: SymbolPart,
}

impl SymbolVectorId {
    pub fn new(user: usize, part: SymbolPart) -> Self {
        SymbolVectorId { user, part }
    }
}

/// Stream `stream` of the symbol vector at `position` in the decoding order.
/// Both indices are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamAddress {
    pub position: usize,
    pub stream: usize,
}

impl StreamAddress {
    pub fn new(position: usize, stream: usize) -> Self {
        StreamAddress { position, stream }
    }
}

/// SIC processing order of all symbol vectors.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DecodingOrder {
    pub entries: Vec<SymbolVectorId>,
}

impl DecodingOrder {
    pub fn new(entries: Vec<SymbolVectorId>) -> Self {
        DecodingOrder { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn user_at(&self, position: usize) -> usize {
        self.entries[position].user
    }

    /// Positions of all symbol vectors belonging to `user`, in decoding order.
    pub fn positions_of(&self, user: usize) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.user == user)
            .map(|(m, _)| m)
            .collect()
    }

    pub fn position_of(&self, id: SymbolVectorId) -> Option<usize> {
        self.entries.iter().position(|e| *e == id)
    }

    /// The multiset of symbol vectors a configuration requires, in user order.
    pub fn required_vectors(config: &SystemConfig) -> Vec<SymbolVectorId> {
        let mut v = Vec::with_capacity(config.symbol_vectors());
        for k in 0..config.users {
            if config.is_split(k) {
                v.push(SymbolVectorId::new(k, SymbolPart::FirstSplit));
                v.push(SymbolVectorId::new(k, SymbolPart::SecondSplit));
            } else {
                v.push(SymbolVectorId::new(k, SymbolPart::Whole));
            }
        }
        v
    }

    /// Checks that the order is a permutation of the configuration's symbol
    /// vectors.
    pub fn check(&self, config: &SystemConfig) -> Result<()> {
        let mut want = Self::required_vectors(config);
        let mut got = self.entries.clone();
        want.sort();
        got.sort();
        if want != got {
            return Err(Error::Config(
                "decoding order is not a permutation of the symbol vectors".into(),
            ));
        }
        Ok(())
    }

    /// True when all first-split parts precede all whole vectors, which
    /// precede all second-split parts.
    pub fn is_block_structured(&self) -> bool {
        let rank = |p: SymbolPart| match p {
            SymbolPart::FirstSplit => 0,
            SymbolPart::Whole => 1,
            SymbolPart::SecondSplit => 2,
        };
        self.entries
            .windows(2)
            .all(|w| rank(w[0].part) <= rank(w[1].part))
    }
}

fn sorted_by_gain(users: impl Iterator<Item = usize>, gains: &[f64]) -> Vec<usize> {
    let mut v: Vec<usize> = users.collect();
    // descending gain, ties to the lower index
    v.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));
    v
}

/// Low-complexity order: first parts of splitting users by descending
/// channel gain, then non-splitting users by descending gain, then second
/// parts in the same order as the first parts.
pub fn compute_decoding_order(
    channels: &ChannelRealization,
    config: &SystemConfig,
) -> DecodingOrder {
    let gains = channels.gains();
    let split = sorted_by_gain((0..config.users).filter(|&k| config.is_split(k)), &gains);
    let whole = sorted_by_gain((0..config.users).filter(|&k| !config.is_split(k)), &gains);
    let mut entries = Vec::with_capacity(config.symbol_vectors());
    entries.extend(
        split
            .iter()
            .map(|&k| SymbolVectorId::new(k, SymbolPart::FirstSplit)),
    );
    entries.extend(
        whole
            .iter()
            .map(|&k| SymbolVectorId::new(k, SymbolPart::Whole)),
    );
    entries.extend(
        split
            .iter()
            .map(|&k| SymbolVectorId::new(k, SymbolPart::SecondSplit)),
    );
    DecodingOrder { entries }
}

/// Every permutation of the configuration's symbol vectors, in lexicographic
/// order of the user-ordered vector list. The block structure is not
/// enforced.
pub fn enumerate_decoding_orders(config: &SystemConfig) -> Result<Vec<DecodingOrder>> {
    let base = DecodingOrder::required_vectors(config);
    if base.len() > MAX_ENUMERATED_VECTORS {
        return Err(Error::Config(format!(
            "{} symbol vectors exceed the enumeration limit of {}",
            base.len(),
            MAX_ENUMERATED_VECTORS
        )));
    }
    let mut idx: Vec<usize> = (0..base.len()).collect();
    let mut out = Vec::new();
    loop {
        out.push(DecodingOrder::new(idx.iter().map(|&i| base[i]).collect()));
        if !next_permutation(&mut idx) {
            break;
        }
    }
    Ok(out)
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let Some(i) = (0..v.len() - 1).rev().find(|&i| v[i] < v[i + 1]) else {
        return false;
    };
    let j = (i + 1..v.len()).rev().find(|&j| v[j] > v[i]).unwrap();
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}
