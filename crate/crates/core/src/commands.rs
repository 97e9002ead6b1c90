//! The `tvdmerge` command pipeline.
//!
//! Every command is described by a [`RunConfig`] that is embedded in the files
//! it writes, so any output can be regenerated with [`replay`].

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::clusterops::{
    artificial_overcluster, greedy_overcluster, hierarchical_merge, inject_noise, DistanceBackend,
    EuclideanBackend, TvdBackend,
};
use crate::dataset::Dataset;
use crate::estimator::{estimate, TrainConfig};
use crate::formats::{self, ClusteringFile, ClusteringReport, DistanceFile, HistoryFile, TraceFile};
use crate::metrics::{self, MetricsReport};
use crate::numcore::AdamConfig;
use crate::oracle::{tvd_gaussian_1d, GaussianSpec};
use crate::{synth, Clustering, Error, Result};

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    /// Number of categories (mixture components).
    #[arg(long, default_value_t = 5)]
    pub categories: usize,
    /// Observations per category.
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    /// Feature dimension.
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    /// Distance between category means, in units of the (unit) standard deviation.
    #[arg(long, default_value_t = 4.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverclusterMode {
    /// Cut every labeled category into clusters of exactly `s`.
    Artificial,
    /// Greedy dense clusters of `s` nearest neighbors.
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct OverclusterArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = OverclusterMode::Artificial)]
    pub mode: OverclusterMode,
    /// Cluster size.
    #[arg(long)]
    pub s: usize,
    /// Number of clusters (greedy mode only).
    #[arg(long)]
    pub k: Option<usize>,
    /// Fraction of observations moved to clusters of another category.
    #[arg(long, default_value_t = 0.0)]
    pub pi: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Training flags shared by `estimate` and `merge`.
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 512)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Fraction of each cluster held out for validation.
    #[arg(long = "val-frac", default_value_t = 0.3)]
    pub val_frac: f64,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![128usize, 64])]
    pub hidden: Vec<usize>,
}

impl Default for TrainArgs {
    fn default() -> Self {
        let c = TrainConfig::default();
        Self {
            seed: c.seed,
            epochs: c.epochs,
            batch: c.batch_size,
            lr: c.adam.lr,
            val_frac: c.val_fraction,
            patience: c.patience,
            hidden: c.hidden,
        }
    }
}

impl TrainArgs {
    pub fn to_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            adam: AdamConfig {
                lr: self.lr,
                ..AdamConfig::default()
            },
            val_fraction: self.val_frac,
            patience: self.patience,
            seed: self.seed,
            hidden: self.hidden.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EstimateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub clusters: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainArgs,
    /// Distance-matrix output.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch history output; defaults to `<out>` with extension `history.json`.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

impl EstimateArgs {
    pub fn history_path(&self) -> PathBuf {
        self.history
            .clone()
            .unwrap_or_else(|| self.out.with_extension("history.json"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Holdout balanced accuracies of the pairwise network.
    Tvd,
    /// Average Euclidean distance between feature vectors.
    Euclidean,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct MergeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub clusters: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainArgs,
    #[arg(long)]
    pub steps: usize,
    #[arg(long, value_enum, default_value_t = Backend::Tvd)]
    pub backend: Backend,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub distances: PathBuf,
    #[arg(long)]
    pub clusters: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Configuration of one command invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum RunConfig {
    Synth(SynthArgs),
    Overcluster(OverclusterArgs),
    Estimate(EstimateArgs),
    Merge(MergeArgs),
    Eval(EvalArgs),
}

impl RunConfig {
    /// Checks numeric parameters before any work starts.
    pub fn validate(&self) -> Result<()> {
        let usage = |m: String| Err(Error::Usage(m));
        match self {
            RunConfig::Synth(a) => {
                if a.categories == 0 || a.count == 0 || a.dim == 0 {
                    return usage("--categories, --count and --dim must be positive".into());
                }
                if !(a.separation.is_finite() && a.separation >= 0.0) {
                    return usage(format!("--separation {} must be non-negative", a.separation));
                }
            }
            RunConfig::Overcluster(a) => {
                if a.s == 0 {
                    return usage("--s must be positive".into());
                }
                if !(0.0..1.0).contains(&a.pi) {
                    return usage(format!("--pi {} is not in [0, 1)", a.pi));
                }
                match (a.mode, a.k) {
                    (OverclusterMode::Greedy, None) => return usage("--k is required in greedy mode".into()),
                    (OverclusterMode::Greedy, Some(0)) => return usage("--k must be positive".into()),
                    (OverclusterMode::Greedy, Some(_)) if a.s < 2 => {
                        return usage("--s must be at least 2 in greedy mode".into())
                    }
                    _ => {}
                }
            }
            RunConfig::Estimate(a) => a.train.to_config().validate()?,
            RunConfig::Merge(a) => {
                if a.backend == Backend::Tvd {
                    a.train.to_config().validate()?;
                }
            }
            RunConfig::Eval(_) => {}
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            RunConfig::Synth(_) => "synth",
            RunConfig::Overcluster(_) => "overcluster",
            RunConfig::Estimate(_) => "estimate",
            RunConfig::Merge(_) => "merge",
            RunConfig::Eval(_) => "eval",
        }
    }
}

/// Runs a command and returns the text to print on stdout.
pub fn run(config: &RunConfig) -> Result<String> {
    config.validate()?;
    match config {
        RunConfig::Synth(a) => cmd_synth(a, config),
        RunConfig::Overcluster(a) => cmd_overcluster(a, config),
        RunConfig::Estimate(a) => cmd_estimate(a, config),
        RunConfig::Merge(a) => cmd_merge(a, config),
        RunConfig::Eval(a) => cmd_eval(a, config),
    }
}

/// Reads the configuration embedded in an output file.
pub fn embedded_config(path: &Path) -> Result<RunConfig> {
    let text = formats::read_text(path)?;
    let missing = || Error::Consistency(format!("{} carries no run configuration", path.display()));
    if let Some(line) = formats::embedded_csv_config(&text) {
        return formats::from_json(line, "config");
    }
    let value = formats::embedded_json_config(&text)?.ok_or_else(missing)?;
    serde_json::from_value(value).map_err(|e| Error::Parse {
        line: 0,
        field: "config".into(),
        message: e.to_string(),
    })
}

/// Re-runs the command that produced `path`.
pub fn replay(path: &Path) -> Result<String> {
    run(&embedded_config(path)?)
}

fn labeled_report(clustering: &Clustering, dataset: &Dataset) -> Result<ClusteringReport> {
    let all_labeled = clustering
        .clusters()
        .iter()
        .all(|c| c.members.iter().all(|&m| matches!(dataset.label_of(m), Ok(Some(_)))));
    let (purity, unique) = if all_labeled {
        (
            Some(metrics::purity(clustering, dataset)?),
            Some(metrics::unique_majorities(clustering, dataset)?),
        )
    } else {
        (None, None)
    };
    Ok(ClusteringReport {
        k: clustering.k(),
        observations: clustering.len(),
        purity,
        unique_majorities: unique,
    })
}

pub fn cmd_synth(a: &SynthArgs, config: &RunConfig) -> Result<String> {
    let components = synth::isotropic_components(a.categories, a.count, a.dim, a.separation)?;
    let dataset = synth::sample(&components, a.seed)?;
    formats::write_text(&a.out, &formats::dataset_to_csv(&dataset, Some(config)))?;

    let mut out = json!({
        "observations": dataset.len(),
        "categories": a.categories,
        "dim": a.dim,
        "out": a.out,
    });
    if a.dim == 1 {
        let mut tvds = Vec::new();
        for i in 0..components.len() {
            for j in i + 1..components.len() {
                let spec = |c: usize| GaussianSpec::univariate(components[c].spec.mean[0], components[c].spec.variance[0]);
                let tvd = tvd_gaussian_1d(&spec(i)?, &spec(j)?, 20_000)?;
                tvds.push(json!({ "a": components[i].label, "b": components[j].label, "tvd": tvd }));
            }
        }
        out["tvd"] = json!(tvds);
    }
    Ok(formats::to_json(&out))
}

pub fn cmd_overcluster(a: &OverclusterArgs, config: &RunConfig) -> Result<String> {
    let dataset = formats::read_dataset(&a.data)?;
    let base = match a.mode {
        OverclusterMode::Artificial => artificial_overcluster(&dataset, a.s, a.seed)?,
        OverclusterMode::Greedy => greedy_overcluster(&dataset, a.s, a.k.expect("validated"))?,
    };
    let clustering = if a.pi > 0.0 {
        inject_noise(&base, &dataset, a.pi, a.seed)?
    } else {
        base
    };
    let report = labeled_report(&clustering, &dataset)?;
    let file = ClusteringFile {
        clusters: clustering.clusters().to_vec(),
        report: Some(report.clone()),
        config: Some(config),
    };
    formats::write_text(&a.out, &formats::to_json(&file))?;
    Ok(formats::to_json(&report))
}

fn load_pair(data: &Path, clusters: &Path) -> Result<(Dataset, Clustering)> {
    let dataset = formats::read_dataset(data)?;
    let clustering = formats::read_clustering(clusters)?;
    clustering.check_against(&dataset)?;
    Ok((dataset, clustering))
}

pub fn cmd_estimate(a: &EstimateArgs, config: &RunConfig) -> Result<String> {
    let (dataset, clustering) = load_pair(&a.data, &a.clusters)?;
    let result = estimate(&dataset, &clustering, &a.train.to_config())?;
    formats::write_text(&a.out, &formats::to_json(&DistanceFile::new(&result.matrix, Some(config))))?;
    let history = HistoryFile {
        best_epoch: result.best_epoch,
        history: result.history.clone(),
        config: Some(config),
    };
    formats::write_text(&a.history_path(), &formats::to_json(&history))?;
    Ok(formats::to_json(&json!({
        "k": result.matrix.k(),
        "best_epoch": result.best_epoch,
        "epochs_run": result.history.len(),
        "average_accuracy": metrics::average_accuracy(&result.matrix)?,
        "out": a.out,
        "history": a.history_path(),
    })))
}

pub fn cmd_merge(a: &MergeArgs, config: &RunConfig) -> Result<String> {
    let (dataset, clustering) = load_pair(&a.data, &a.clusters)?;
    let mut backend: Box<dyn DistanceBackend> = match a.backend {
        Backend::Tvd => Box::new(TvdBackend {
            config: a.train.to_config(),
        }),
        Backend::Euclidean => Box::new(EuclideanBackend),
    };
    let (trace, merged) = hierarchical_merge(&dataset, &clustering, backend.as_mut(), a.steps)?;
    let name = match a.backend {
        Backend::Tvd => "tvd",
        Backend::Euclidean => "euclidean",
    };
    let file = TraceFile::new(name, &trace, Some(config));
    formats::write_text(&a.out, &formats::to_json(&file))?;
    Ok(formats::to_json(&json!({
        "backend": name,
        "merges": trace.len(),
        "remaining_clusters": merged.k(),
        "cm": file.steps.last().and_then(|e| e.cm),
        "out": a.out,
    })))
}

pub fn cmd_eval(a: &EvalArgs, config: &RunConfig) -> Result<String> {
    let matrix = formats::read_distances(&a.distances)?;
    let (dataset, clustering) = load_pair(&a.data, &a.clusters)?;
    let mut ids = matrix.cluster_ids().to_vec();
    let mut expected = clustering.cluster_ids();
    ids.sort_unstable();
    expected.sort_unstable();
    if ids != expected {
        return Err(Error::Consistency(
            "distance matrix and clustering refer to different cluster ids".into(),
        ));
    }
    let labeled = labeled_report(&clustering, &dataset)?;
    let quality = if labeled.purity.is_some() {
        match metrics::quality(&matrix, &clustering, &dataset) {
            Ok(q) => Some(q),
            Err(Error::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    let report = MetricsReport {
        quality,
        average_accuracy: metrics::average_accuracy(&matrix)?,
        purity: labeled.purity,
        unique_majorities: labeled.unique_majorities,
    };
    if let Some(out) = &a.out {
        formats::write_text(out, &formats::to_json(&json!({ "metrics": report, "config": config })))?;
    }
    Ok(formats::to_json(&report))
}
