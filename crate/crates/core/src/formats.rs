//! On-disk formats.
//!
//! - Dataset: CSV with header `id,label,f0,...,f{d-1}`; an empty label means
//!   unlabeled. Lines starting with `#` are comments; the writer appends one
//!   `# run: {...}` line holding the producing command's configuration.
//! - Clustering: `{ "clusters": [ { "id": 0, "members": [..] } ], ... }`.
//! - Distance matrix: `{ "cluster_ids": [..], "ba": [[..], ..], "config": {..} }`.
//! - Merge trace: `{ "steps": [ { "step", "a", "b", "distance", "majority_a",
//!   "majority_b", "correct", "cm" } ], "config": {..} }`.
//!
//! All JSON documents may carry a `config` member; readers ignore unknown members.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::clusterops::{Cluster, Clustering, MergeStep, MergeTrace};
use crate::dataset::{Dataset, Label};
use crate::estimator::{DistanceMatrix, EpochRecord, MatrixUnit};
use crate::numcore::Matrix;
use crate::{Error, Result};

/// Prefix of the comment line carrying the run configuration in dataset files.
pub const RUN_COMMENT: &str = "# run: ";

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn json_error(e: serde_json::Error, what: &str) -> Error {
    Error::Parse {
        line: e.line(),
        field: what.to_owned(),
        message: e.to_string(),
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable document");
    s.push('\n');
    s
}

pub fn from_json<T: DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| json_error(e, what))
}

/// Serializes a dataset, optionally followed by a run-configuration comment.
pub fn dataset_to_csv<C: Serialize>(dataset: &Dataset, config: Option<&C>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_owned(), "label".to_owned()];
    header.extend((0..dataset.dim()).map(|j| format!("f{j}")));
    w.write_record(&header).expect("in-memory write");
    for (row, &id) in dataset.ids().iter().enumerate() {
        let mut rec = vec![
            id.to_string(),
            dataset.labels()[row].map(|l| l.to_string()).unwrap_or_default(),
        ];
        rec.extend(dataset.features().row(row).iter().map(|v| format!("{v:?}")));
        w.write_record(&rec).expect("in-memory write");
    }
    let mut text = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8");
    if let Some(c) = config {
        text.push_str(RUN_COMMENT);
        text.push_str(&serde_json::to_string(c).expect("serializable config"));
        text.push('\n');
    }
    text
}

/// Parses a dataset CSV. Errors report the 1-based line and the column name.
pub fn dataset_from_csv(text: &str) -> Result<Dataset> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = r
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            field: "header".into(),
            message: e.to_string(),
        })?
        .clone();
    if header.len() < 2 || &header[0] != "id" || &header[1] != "label" {
        return Err(Error::Parse {
            line: 1,
            field: "header".into(),
            message: "expected `id,label,f0,...`".into(),
        });
    }
    for (j, name) in header.iter().skip(2).enumerate() {
        if name != format!("f{j}") {
            return Err(Error::Parse {
                line: 1,
                field: name.to_owned(),
                message: format!("expected column f{j}"),
            });
        }
    }
    let dim = header.len() - 2;
    let (mut ids, mut labels, mut values) = (Vec::new(), Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            field: "record".into(),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |field: &str, message: String| Error::Parse {
            line,
            field: field.to_owned(),
            message,
        };
        ids.push(rec[0].parse::<usize>().map_err(|e| bad("id", e.to_string()))?);
        labels.push(if rec[1].is_empty() {
            None
        } else {
            Some(rec[1].parse::<Label>().map_err(|e| bad("label", e.to_string()))?)
        });
        for j in 0..dim {
            let v: f64 = rec[j + 2]
                .parse()
                .map_err(|e: std::num::ParseFloatError| bad(&header[j + 2], e.to_string()))?;
            if !v.is_finite() {
                return Err(bad(&header[j + 2], format!("non-finite value {v}")));
            }
            values.push(v);
        }
    }
    let n = ids.len();
    Dataset::new(ids, Matrix::new(n, dim, values)?, labels)
}

/// The JSON run configuration embedded in a dataset CSV, if any.
pub fn embedded_csv_config(text: &str) -> Option<&str> {
    text.lines().find_map(|l| l.strip_prefix(RUN_COMMENT))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    dataset_from_csv(&read_text(path)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusteringReport {
    pub k: usize,
    pub observations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub purity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unique_majorities: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusteringFile<C = serde_json::Value> {
    pub clusters: Vec<Cluster>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ClusteringReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<C>,
}

pub fn clustering_from_json(text: &str) -> Result<Clustering> {
    let file: ClusteringFile = from_json(text, "clusters")?;
    Clustering::new(file.clusters)
}

pub fn read_clustering(path: &Path) -> Result<Clustering> {
    clustering_from_json(&read_text(path)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistanceFile<C = serde_json::Value> {
    pub cluster_ids: Vec<usize>,
    pub ba: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<C>,
}

impl<C> DistanceFile<C> {
    pub fn new(matrix: &DistanceMatrix, config: Option<C>) -> Self {
        Self {
            cluster_ids: matrix.cluster_ids().to_vec(),
            ba: matrix.values().clone().into_rows(),
            config,
        }
    }
}

pub fn distances_from_json(text: &str) -> Result<DistanceMatrix> {
    let file: DistanceFile = from_json(text, "ba")?;
    DistanceMatrix::new(
        file.cluster_ids,
        Matrix::from_rows(&file.ba)?,
        MatrixUnit::BalancedAccuracy,
    )
}

pub fn read_distances(path: &Path) -> Result<DistanceMatrix> {
    distances_from_json(&read_text(path)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistoryFile<C = serde_json::Value> {
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<C>,
}

/// A merge step with the running count of correct merges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    #[serde(flatten)]
    pub step: MergeStep,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cm: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceFile<C = serde_json::Value> {
    pub backend: String,
    pub steps: Vec<TraceEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<C>,
}

impl<C> TraceFile<C> {
    pub fn new(backend: &str, trace: &MergeTrace, config: Option<C>) -> Self {
        let mut cm = Some(0usize);
        let steps = trace
            .steps
            .iter()
            .map(|s| {
                cm = cm.zip(s.correct).map(|(c, ok)| c + usize::from(ok));
                TraceEntry {
                    step: s.clone(),
                    cm,
                }
            })
            .collect();
        Self {
            backend: backend.to_owned(),
            steps,
            config,
        }
    }
}

pub fn trace_from_json(text: &str) -> Result<MergeTrace> {
    let file: TraceFile = from_json(text, "steps")?;
    Ok(MergeTrace {
        steps: file.steps.into_iter().map(|e| e.step).collect(),
    })
}

/// The `config` member of a JSON output file.
pub fn embedded_json_config(text: &str) -> Result<Option<serde_json::Value>> {
    let v: serde_json::Value = from_json(text, "document")?;
    Ok(v.get("config").cloned())
}
