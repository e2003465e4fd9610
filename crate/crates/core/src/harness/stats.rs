//! Aggregation of sweep rows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::sweep::ResultRow;

/// `(value − baseline) / baseline · 100`.
pub fn relative_gain(value: f64, baseline: f64) -> Result<f64> {
    if !(baseline > 0.0) || !value.is_finite() {
        return Err(Error::Domain(format!(
            "relative gain over baseline {baseline} is undefined"
        )));
    }
    Ok((value - baseline) / baseline * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    Scheme,
    SnrDb,
    Blocklength,
    SplitCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mmf,
    Throughput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Group values, in `group_by` order.
    pub key: Vec<String>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
    /// Rows of the group without a value (errors or metric not computed).
    pub excluded: usize,
}

fn key_of(row: &ResultRow, by: &[GroupKey]) -> Vec<String> {
    by.iter()
        .map(|k| match k {
            GroupKey::Scheme => row.key.scheme.name().to_string(),
            GroupKey::SnrDb => row.key.snr_db.to_string(),
            GroupKey::Blocklength => row.key.blocklength.to_string(),
            GroupKey::SplitCount => row.key.split_count.to_string(),
        })
        .collect()
}

/// Mean and spread of `metric` per group, groups in order of first
/// appearance. Groups with no usable row are omitted.
pub fn aggregate(
    rows: &[ResultRow],
    group_by: &[GroupKey],
    metric: Metric,
) -> Result<Vec<Summary>> {
    if rows.is_empty() {
        return Err(Error::Config("nothing to aggregate".into()));
    }
    let mut groups: Vec<(Vec<String>, Vec<f64>, usize)> = Vec::new();
    for r in rows {
        let key = key_of(r, group_by);
        let idx = match groups.iter().position(|g| g.0 == key) {
            Some(i) => i,
            None => {
                groups.push((key, Vec::new(), 0));
                groups.len() - 1
            }
        };
        let value = match metric {
            Metric::Mmf => r.mmf,
            Metric::Throughput => r.throughput,
        };
        match value.filter(|v| v.is_finite() && r.error.is_none()) {
            Some(v) => groups[idx].1.push(v),
            None => groups[idx].2 += 1,
        }
    }
    Ok(groups
        .into_iter()
        .filter(|g| !g.1.is_empty())
        .map(|(key, values, excluded)| {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            Summary {
                key,
                mean,
                std: var.sqrt(),
                count: values.len(),
                excluded,
            }
        })
        .collect())
}

pub fn summaries_to_csv(group_by: &[GroupKey], summaries: &[Summary]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = group_by
        .iter()
        .map(|k| serde_json::to_value(k).map(|v| v.as_str().unwrap_or_default().to_string()))
        .collect::<std::result::Result<_, _>>()?;
    header.extend(["mean", "std", "count", "excluded"].map(String::from));
    w.write_record(&header)?;
    for s in summaries {
        let mut rec = s.key.clone();
        rec.extend([
            s.mean.to_string(),
            s.std.to_string(),
            s.count.to_string(),
            s.excluded.to_string(),
        ]);
        w.write_record(&rec)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
}
