//! Multiple-access strategies.
//!
//! A scheme decides which configurations are legal, how the receiver orders
//! symbol vectors, and which symbol vectors interfere with a given one. The
//! rate engine, the optimizer and the link-level receiver only talk to the
//! [`AccessScheme`] trait; concrete schemes are looked up by name in a
//! [`SchemeRegistry`].

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{
    compute_decoding_order, ChannelRealization, DecodingOrder, SchemeKind, SystemConfig,
};

pub trait AccessScheme: Send + Sync {
    fn kind(&self) -> SchemeKind;

    fn name(&self) -> &'static str {
        self.kind().name()
    }

    fn validate(&self, config: &SystemConfig) -> Result<()>;

    /// Whether the receiver subtracts decoded symbol vectors.
    fn successive_cancellation(&self) -> bool;

    /// Positions whose signals interfere with the symbol vector at
    /// `position`, excluding the vector itself.
    fn interferers(&self, order: &DecodingOrder, position: usize) -> Vec<usize>;

    fn decoding_order(
        &self,
        channels: &ChannelRealization,
        config: &SystemConfig,
    ) -> DecodingOrder {
        compute_decoding_order(channels, config)
    }
}

fn later_positions(order: &DecodingOrder, position: usize) -> Vec<usize> {
    (position + 1..order.len()).collect()
}

/// Users split messages in two; SIC over `2|J| + |U|` symbol vectors.
#[derive(Debug, Default)]
pub struct Rsma;

impl AccessScheme for Rsma {
    fn kind(&self) -> SchemeKind {
        SchemeKind::Rsma
    }

    fn validate(&self, _config: &SystemConfig) -> Result<()> {
        Ok(())
    }

    fn successive_cancellation(&self) -> bool {
        true
    }

    fn interferers(&self, order: &DecodingOrder, position: usize) -> Vec<usize> {
        later_positions(order, position)
    }
}

/// No splitting; users decoded one after another by descending gain.
#[derive(Debug, Default)]
pub struct Noma;

impl AccessScheme for Noma {
    fn kind(&self) -> SchemeKind {
        SchemeKind::Noma
    }

    fn validate(&self, config: &SystemConfig) -> Result<()> {
        if !config.split_set.is_empty() {
            return Err(Error::Config("NOMA does not split messages".into()));
        }
        Ok(())
    }

    fn successive_cancellation(&self) -> bool {
        true
    }

    fn interferers(&self, order: &DecodingOrder, position: usize) -> Vec<usize> {
        later_positions(order, position)
    }
}

/// No splitting and no cancellation: every other user is interference.
#[derive(Debug, Default)]
pub struct Sdma;

impl AccessScheme for Sdma {
    fn kind(&self) -> SchemeKind {
        SchemeKind::Sdma
    }

    fn validate(&self, config: &SystemConfig) -> Result<()> {
        if !config.split_set.is_empty() {
            return Err(Error::Config("SDMA does not split messages".into()));
        }
        Ok(())
    }

    fn successive_cancellation(&self) -> bool {
        false
    }

    fn interferers(&self, order: &DecodingOrder, position: usize) -> Vec<usize> {
        (0..order.len()).filter(|&j| j != position).collect()
    }
}

static RSMA: Rsma = Rsma;
static NOMA: Noma = Noma;
static SDMA: Sdma = Sdma;

/// The built-in strategy for a scheme selector.
pub fn lookup(kind: SchemeKind) -> &'static dyn AccessScheme {
    match kind {
        SchemeKind::Rsma => &RSMA,
        SchemeKind::Noma => &NOMA,
        SchemeKind::Sdma => &SDMA,
    }
}

/// Name-keyed collection of access schemes.
#[derive(Clone)]
pub struct SchemeRegistry {
    schemes: BTreeMap<String, Arc<dyn AccessScheme>>,
}

impl SchemeRegistry {
    pub fn empty() -> Self {
        SchemeRegistry {
            schemes: BTreeMap::new(),
        }
    }

    /// Registry holding `rsma`, `noma` and `sdma`.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(Rsma));
        r.register(Arc::new(Noma));
        r.register(Arc::new(Sdma));
        r
    }

    pub fn register(&mut self, scheme: Arc<dyn AccessScheme>) {
        self.schemes.insert(scheme.name().to_string(), scheme);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn AccessScheme>> {
        self.schemes
            .get(&name.to_ascii_lowercase())
            .cloned()
            .ok_or_else(|| Error::UnknownScheme(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.schemes.keys().map(String::as_str).collect()
    }
}

impl Default for SchemeRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SymbolPart, SymbolVectorId};

    fn order3() -> DecodingOrder {
        DecodingOrder::new(
            (0..3)
                .map(|k| SymbolVectorId::new(k, SymbolPart::Whole))
                .collect(),
        )
    }

    #[test]
    fn registry_lookup_by_name() {
        let r = SchemeRegistry::builtin();
        assert_eq!(r.names(), vec!["noma", "rsma", "sdma"]);
        assert_eq!(r.get("RSMA").unwrap().kind(), SchemeKind::Rsma);
        assert!(matches!(r.get("oma"), Err(Error::UnknownScheme(_))));
    }

    #[test]
    fn interference_sets() {
        let o = order3();
        assert_eq!(lookup(SchemeKind::Noma).interferers(&o, 0), vec![1, 2]);
        assert_eq!(
            lookup(SchemeKind::Noma).interferers(&o, 2),
            Vec::<usize>::new()
        );
        assert_eq!(lookup(SchemeKind::Sdma).interferers(&o, 1), vec![0, 2]);
        assert!(!lookup(SchemeKind::Sdma).successive_cancellation());
    }
}
