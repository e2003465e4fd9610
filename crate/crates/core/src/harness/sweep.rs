//! Experiment specs, per-row jobs and row files.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbl::FblParams;
use crate::model::{generate_rayleigh_channels, ChannelRealization, SchemeKind, SystemConfig};
use crate::phy::{
    design_stream_rates, max_min_throughput, simulate_frames, LinkPlan, LinkSettings,
};
use crate::sca::{solve_mmf, AoOutcome, AoSettings, InitStrategy};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "RSMA_WORKERS";

/// Bumped whenever the CSV columns change.
pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxes {
    pub snr_db: Vec<f64>,
    pub blocklength: Vec<f64>,
    pub scheme: Vec<SchemeKind>,
    /// Number of splitting users for RSMA rows; ignored by other schemes.
    #[serde(default = "one_split")]
    pub split_count: Vec<usize>,
}

fn one_split() -> Vec<usize> {
    vec![1]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub path: PathBuf,
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlsSpec {
    pub frames: usize,
    #[serde(default)]
    pub settings: LinkSettings,
}

/// A Monte-Carlo sweep. Realization `r` draws its channel from seed
/// `base_seed + r`; every scheme, SNR and blocklength of that realization
/// sees the same channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub base: SystemConfig,
    pub axes: SweepAxes,
    pub realizations: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub output: Option<OutputSpec>,
    #[serde(default)]
    pub ao: Option<AoSettings>,
    /// Initialization for split RSMA rows. Defaults to multistart.
    #[serde(default)]
    pub rsma_init: Option<InitStrategy>,
    #[serde(default)]
    pub lls: Option<LlsSpec>,
}

impl ExperimentSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.axes;
        if a.snr_db.is_empty()
            || a.blocklength.is_empty()
            || a.scheme.is_empty()
            || a.split_count.is_empty()
        {
            return Err(Error::Config(
                "every sweep axis needs at least one value".into(),
            ));
        }
        if self.realizations == 0 {
            return Err(Error::Config("at least one realization is required".into()));
        }
        if a.snr_db
            .iter()
            .chain(&a.blocklength)
            .any(|x| !x.is_finite())
        {
            return Err(Error::Config("axis values must be finite".into()));
        }
        if a.scheme.contains(&SchemeKind::Rsma)
            && a.split_count.iter().any(|&c| c > self.base.users)
        {
            return Err(Error::Config(format!(
                "split count exceeds {} users",
                self.base.users
            )));
        }
        if let Some(ao) = &self.ao {
            ao.validate()?;
        }
        if let Some(lls) = &self.lls {
            lls.settings.table.validate()?;
            if lls.frames == 0 {
                return Err(Error::Config("LLS needs at least one frame".into()));
            }
        }
        let mut probe = self.base.clone().with_scheme(SchemeKind::Noma, vec![]);
        probe.blocklength = a.blocklength[0];
        probe.validate()
    }

    /// All row jobs in canonical order. Schemes without splitting get a
    /// single row per point with split count 0.
    pub fn jobs(&self) -> Vec<RowKey> {
        let a = &self.axes;
        let mut out = Vec::new();
        for &scheme in &a.scheme {
            let splits: Vec<usize> = if scheme == SchemeKind::Rsma {
                a.split_count.clone()
            } else {
                vec![0]
            };
            for &snr_db in &a.snr_db {
                for &blocklength in &a.blocklength {
                    for &split_count in &splits {
                        for realization in 0..self.realizations {
                            out.push(RowKey {
                                scheme,
                                snr_db,
                                blocklength,
                                split_count,
                                realization,
                            });
                        }
                    }
                }
            }
        }
        out.sort_by(RowKey::cmp);
        out.dedup();
        out
    }

    pub fn seed(&self, realization: usize) -> u64 {
        self.base_seed.wrapping_add(realization as u64)
    }
}

/// Identity of one row; rows are unique and sorted by it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowKey {
    pub scheme: SchemeKind,
    pub snr_db: f64,
    pub blocklength: f64,
    pub split_count: usize,
    pub realization: usize,
}

impl RowKey {
    fn cmp(a: &RowKey, b: &RowKey) -> std::cmp::Ordering {
        (a.scheme.name())
            .cmp(b.scheme.name())
            .then(a.snr_db.total_cmp(&b.snr_db))
            .then(a.blocklength.total_cmp(&b.blocklength))
            .then(a.split_count.cmp(&b.split_count))
            .then(a.realization.cmp(&b.realization))
    }

    fn id(&self) -> (String, u64, u64, usize, usize) {
        (
            self.scheme.name().to_string(),
            self.snr_db.to_bits(),
            self.blocklength.to_bits(),
            self.split_count,
            self.realization,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    #[serde(flatten)]
    pub key: RowKey,
    pub seed: u64,
    pub channel_hash: u64,
    pub split_set: Vec<usize>,
    pub mmf: Option<f64>,
    pub throughput: Option<f64>,
    pub iterations: usize,
    pub status: Option<String>,
    pub error: Option<String>,
    pub wall_time_s: f64,
}

impl ResultRow {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// The `count` strongest users by Frobenius gain; ties go to the lower index.
pub fn strongest_users(channels: &ChannelRealization, count: usize) -> Vec<usize> {
    let g = channels.gains();
    let mut idx: Vec<usize> = (0..g.len()).collect();
    idx.sort_by(|&a, &b| g[b].total_cmp(&g[a]).then(a.cmp(&b)));
    idx.truncate(count);
    idx.sort_unstable();
    idx
}

/// Configuration of one row on a given channel.
pub fn row_config(
    spec: &ExperimentSpec,
    key: &RowKey,
    channels: &ChannelRealization,
) -> SystemConfig {
    let split = if key.scheme == SchemeKind::Rsma {
        strongest_users(channels, key.split_count)
    } else {
        vec![]
    };
    let mut config = spec
        .base
        .clone()
        .with_snr_db(key.snr_db)
        .with_scheme(key.scheme, split);
    config.blocklength = key.blocklength;
    config
}

/// Optimizes one row's design.
pub fn design_row(
    spec: &ExperimentSpec,
    key: &RowKey,
) -> Result<(SystemConfig, ChannelRealization, AoOutcome)> {
    let channels = generate_rayleigh_channels(&spec.base, spec.seed(key.realization));
    let config = row_config(spec, key, &channels);
    let fbl = FblParams::from_config(&config)?;
    let mut settings = spec.ao.clone().unwrap_or_default();
    if !config.split_set.is_empty() {
        settings.init = spec.rsma_init.clone().unwrap_or(InitStrategy::Multistart);
    }
    let outcome = solve_mmf(&channels, &config, &fbl, &settings)?;
    Ok((config, channels, outcome))
}

/// Link-level throughput of a design, frames seeded from the realization.
pub fn design_throughput(
    lls: &LlsSpec,
    config: &SystemConfig,
    channels: &ChannelRealization,
    outcome: &AoOutcome,
    seed: u64,
) -> Result<f64> {
    let s = &outcome.state;
    let rates = design_stream_rates(channels, &s.p, &s.g, &outcome.order, config)?;
    let plan = LinkPlan::from_rates(&rates, &lls.settings)?;
    let frames = simulate_frames(
        &plan,
        channels,
        &s.p,
        &outcome.order,
        config,
        config.noise_var,
        lls.frames,
        seed.wrapping_mul(0x2545_f491_4f6c_dd1d),
    )?;
    max_min_throughput(&frames)
}

/// Runs one row; errors land in the row.
pub fn run_row(spec: &ExperimentSpec, key: &RowKey) -> ResultRow {
    let start = Instant::now();
    let seed = spec.seed(key.realization);
    let channels = generate_rayleigh_channels(&spec.base, seed);
    let mut row = ResultRow {
        key: *key,
        seed,
        channel_hash: channels.fingerprint(),
        split_set: vec![],
        mmf: None,
        throughput: None,
        iterations: 0,
        status: None,
        error: None,
        wall_time_s: 0.0,
    };
    let result = design_row(spec, key).and_then(|(config, channels, outcome)| {
        row.split_set = config.split_set.clone();
        row.mmf = Some(outcome.mmf());
        row.iterations = outcome.iterations();
        row.status = Some(
            serde_json::to_value(outcome.status)?
                .as_str()
                .unwrap_or_default()
                .to_string(),
        );
        if let Some(lls) = &spec.lls {
            row.throughput = Some(design_throughput(lls, &config, &channels, &outcome, seed)?);
        }
        Ok(())
    });
    if let Err(e) = result {
        row.error = Some(e.to_string());
    }
    row.wall_time_s = start.elapsed().as_secs_f64();
    row
}

/// Worker count from the environment, if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV)
        .ok()?
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers.or_else(workers_from_env) {
        b = b.num_threads(n);
    }
    b.build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

/// Runs every row of the spec on a bounded pool and returns them in
/// canonical order.
pub fn run_sweep(spec: &ExperimentSpec, workers: Option<usize>) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let jobs = spec.jobs();
    let rows = pool(workers)?.install(|| jobs.par_iter().map(|k| run_row(spec, k)).collect());
    Ok(rows)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            rows.push(serde_json::from_str(&line)?);
        }
    }
    Ok(rows)
}

/// Like [`run_sweep`], appending each finished row to the JSON-lines file
/// at `path` and skipping rows already present there. Returns every row of
/// the spec, old and new, in canonical order.
pub fn run_sweep_resumable(
    spec: &ExperimentSpec,
    path: &Path,
    workers: Option<usize>,
) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let mut done = if path.exists() {
        read_jsonl(path)?
    } else {
        Vec::new()
    };
    let wanted: HashSet<_> = spec.jobs().iter().map(RowKey::id).collect();
    done.retain(|r| wanted.contains(&r.key.id()));
    let have: HashSet<_> = done.iter().map(|r| r.key.id()).collect();
    let todo: Vec<RowKey> = spec
        .jobs()
        .into_iter()
        .filter(|k| !have.contains(&k.id()))
        .collect();
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let sink = Mutex::new(file);
    let fresh: Vec<Result<ResultRow>> = pool(workers)?.install(|| {
        todo.par_iter()
            .map(|k| {
                let row = run_row(spec, k);
                let line = serde_json::to_string(&row)?;
                let mut f = sink
                    .lock()
                    .map_err(|_| Error::Config("row writer poisoned".into()))?;
                writeln!(f, "{line}")?;
                f.flush()?;
                Ok(row)
            })
            .collect()
    });
    for r in fresh {
        done.push(r?);
    }
    done.sort_by(|a, b| RowKey::cmp(&a.key, &b.key));
    Ok(done)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Rows as CSV. Wall time is left out so identical specs give identical
/// bytes.
pub fn rows_to_csv(rows: &[ResultRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "schema",
        "scheme",
        "snr_db",
        "blocklength",
        "split_count",
        "realization",
        "seed",
        "channel_hash",
        "split_set",
        "mmf",
        "throughput",
        "iterations",
        "status",
        "error",
    ])?;
    for r in rows {
        let split = r
            .split_set
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([
            CSV_SCHEMA_VERSION.to_string(),
            r.key.scheme.name().to_string(),
            r.key.snr_db.to_string(),
            r.key.blocklength.to_string(),
            r.key.split_count.to_string(),
            r.key.realization.to_string(),
            r.seed.to_string(),
            format!("{:016x}", r.channel_hash),
            split,
            fmt_opt(r.mmf),
            fmt_opt(r.throughput),
            r.iterations.to_string(),
            r.status.clone().unwrap_or_default(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
}

pub fn rows_to_jsonl(rows: &[ResultRow]) -> Result<String> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}
