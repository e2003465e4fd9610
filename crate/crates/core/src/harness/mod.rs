//! Seeded Monte-Carlo sweeps, result aggregation and brute-force oracles.

pub mod oracle;
pub mod stats;
pub mod sweep;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{ChannelRealization, DecodingOrder, SystemConfig};
use crate::sca::DesignState;

pub use stats::{aggregate, relative_gain, summaries_to_csv, GroupKey, Metric, Summary};
pub use sweep::{
    read_jsonl, row_config, rows_to_csv, rows_to_jsonl, run_row, run_sweep, run_sweep_resumable,
    strongest_users, workers_from_env, ExperimentSpec, LlsSpec, OutputFormat, OutputSpec,
    ResultRow, RowKey, SweepAxes, CSV_SCHEMA_VERSION, WORKERS_ENV,
};

/// A design with everything needed to rerun it on the link level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedDesign {
    pub config: SystemConfig,
    pub channels: ChannelRealization,
    pub order: DecodingOrder,
    pub state: DesignState,
    pub mmf: f64,
}

impl SavedDesign {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let d: SavedDesign = serde_json::from_str(s)?;
        d.config.validate()?;
        d.channels.check(&d.config)?;
        d.order.check(&d.config)?;
        Ok(d)
    }
}
