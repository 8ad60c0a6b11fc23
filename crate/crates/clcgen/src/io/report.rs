//! The evaluation report: one CSV row per (video, method, metric, offset).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::manifest::write_bytes;

/// Video id used for rows aggregated over all videos.
pub const AGGREGATE_ID: &str = "ALL";

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Value {
    Number(f64),
    /// A metric nobody could compute because no scorer is registered.
    Unsupported,
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(x) if x.is_infinite() && *x > 0.0 => f.write_str("inf"),
            Value::Number(x) => write!(f, "{x}"),
            Value::Unsupported => f.write_str("unsupported"),
        }
    }
}

impl std::str::FromStr for Value {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inf" => Ok(Value::Number(f64::INFINITY)),
            "unsupported" => Ok(Value::Unsupported),
            _ => s
                .parse()
                .map(Value::Number)
                .map_err(|_| Error::Parse(format!("bad report value {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub video_id: String,
    pub method: String,
    pub metric: String,
    pub delta: Option<usize>,
    pub value: Value,
    pub detection_fraction: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    video_id: String,
    method: String,
    metric: String,
    delta: Option<usize>,
    value: String,
    detection_fraction: Option<f64>,
}

/// Appends one aggregate row per (method, metric, delta): the mean over
/// videos, or the unsupported marker if any video lacks a value.
pub fn with_aggregates(rows: Vec<ReportRow>) -> Vec<ReportRow> {
    let mut groups: BTreeMap<(String, String, Option<usize>), Vec<&ReportRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.video_id != AGGREGATE_ID) {
        groups
            .entry((r.method.clone(), r.metric.clone(), r.delta))
            .or_default()
            .push(r);
    }
    let mut agg = Vec::new();
    for ((method, metric, delta), rs) in groups {
        let nums: Option<Vec<f64>> = rs
            .iter()
            .map(|r| match r.value {
                Value::Number(x) => Some(x),
                Value::Unsupported => None,
            })
            .collect();
        let value = match nums {
            Some(xs) => Value::Number(xs.iter().sum::<f64>() / xs.len() as f64),
            None => Value::Unsupported,
        };
        let fracs: Option<Vec<f64>> = rs.iter().map(|r| r.detection_fraction).collect();
        agg.push(ReportRow {
            video_id: AGGREGATE_ID.into(),
            method,
            metric,
            delta,
            value,
            detection_fraction: fracs.map(|f| f.iter().sum::<f64>() / f.len() as f64),
        });
    }
    let mut out = rows;
    out.extend(agg);
    out
}

pub fn to_csv(rows: &[ReportRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(CsvRow {
            video_id: r.video_id.clone(),
            method: r.method.clone(),
            metric: r.metric.clone(),
            delta: r.delta,
            value: r.value.to_string(),
            detection_fraction: r.detection_fraction,
        })
        .map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Parse(e.to_string()))
}

pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    write_bytes(path, &to_csv(rows)?)
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Parse(e.to_string()))?;
    r.deserialize::<CsvRow>()
        .map(|row| {
            let row = row.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
            Ok(ReportRow {
                video_id: row.video_id,
                method: row.method,
                metric: row.metric,
                delta: row.delta,
                value: row.value.parse()?,
                detection_fraction: row.detection_fraction,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(video: &str, metric: &str, delta: Option<usize>, value: Value) -> ReportRow {
        ReportRow {
            video_id: video.into(),
            method: "clc".into(),
            metric: metric.into(),
            delta,
            value,
            detection_fraction: None,
        }
    }

    #[test]
    fn csv_layout_and_round_trip() {
        let rows = with_aggregates(vec![
            row("v0", "tje", Some(1), Value::Number(2.0)),
            row("v1", "tje", Some(1), Value::Number(4.0)),
            row("v0", "psnr", None, Value::Number(f64::INFINITY)),
            row("v0", "fvd", None, Value::Unsupported),
        ]);
        let text = String::from_utf8(to_csv(&rows).unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "video_id,method,metric,delta,value,detection_fraction");
        assert!(text.contains("v0,clc,psnr,,inf,\n"));
        assert!(text.contains("ALL,clc,tje,1,3,\n"));
        assert!(text.contains("ALL,clc,fvd,,unsupported,\n"));

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_report(&p, &rows).unwrap();
        assert_eq!(read_report(&p).unwrap(), rows);
    }
}
