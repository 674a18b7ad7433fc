//! Prediction from a graph, error metrics and the Monte Carlo harness that
//! produces learning curves.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::ls_learn_graph;
use crate::error::{Error, Result};
use crate::graph::{Dataset, NodeSplit, WeightedGraph};
use crate::io::{self, SplitFile};
use crate::solver::{spice_learn_graph, SolverConfig};
use crate::truth::{generate_synthetic_with, make_community_graph, partial_correlation_graph, CommunitySpec, NoiseSpec};

/// `x̂⋆ = W⋆,₀ x₀` for a single snapshot of the observed nodes.
pub fn predict(w: &WeightedGraph, x0: &DVector<f64>, split: &NodeSplit) -> Result<DVector<f64>> {
    let rows = DMatrix::from_row_slice(1, x0.len(), x0.as_slice());
    Ok(predict_batch(w, &rows, split)?.row(0).transpose())
}

/// Row-wise [`predict`]: `x0` holds one snapshot of the observed nodes per
/// row; the result holds one row of target predictions per snapshot.
pub fn predict_batch(w: &WeightedGraph, x0: &DMatrix<f64>, split: &NodeSplit) -> Result<DMatrix<f64>> {
    if split.min_nodes() > w.num_nodes() {
        return Err(Error::DimensionMismatch {
            expected: w.num_nodes(),
            found: split.min_nodes(),
            context: "split references nodes beyond the graph",
        });
    }
    if x0.ncols() != split.observed().len() {
        return Err(Error::DimensionMismatch {
            expected: split.observed().len(),
            found: x0.ncols(),
            context: "observed values per snapshot",
        });
    }
    let block = w.weights().select_rows(split.targets()).select_columns(split.observed());
    Ok(x0 * block.transpose())
}

/// Normalized prediction error, linear and in decibels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Npe {
    pub linear: f64,
    /// `10·log10(linear)`; `-inf` for perfect predictions.
    pub db: f64,
}

pub fn to_db(linear: f64) -> f64 {
    if linear > 0.0 {
        10.0 * linear.log10()
    } else {
        f64::NEG_INFINITY
    }
}

/// Ratio of summed squared prediction errors to summed squared targets.
pub fn npe(predictions: &DMatrix<f64>, truths: &DMatrix<f64>) -> Result<Npe> {
    if predictions.shape() != truths.shape() {
        return Err(Error::DimensionMismatch {
            expected: truths.len(),
            found: predictions.len(),
            context: "prediction and truth shapes differ",
        });
    }
    let energy = truths.norm_squared();
    if !(energy > 0.0) {
        return Err(Error::ZeroTargetEnergy);
    }
    let linear = (predictions - truths).norm_squared() / energy;
    Ok(Npe { linear, db: to_db(linear) })
}

/// `‖W − Ŵ‖²_F`.
pub fn frobenius_error(true_w: &WeightedGraph, est_w: &WeightedGraph) -> Result<f64> {
    if true_w.num_nodes() != est_w.num_nodes() {
        return Err(Error::DimensionMismatch {
            expected: true_w.num_nodes(),
            found: est_w.num_nodes(),
            context: "graph sizes differ",
        });
    }
    Ok((true_w.weights() - est_w.weights()).norm_squared())
}

/// `‖W − Ŵ‖²_F / ‖W‖²_F`.
pub fn nmse_graph(true_w: &WeightedGraph, est_w: &WeightedGraph) -> Result<f64> {
    let raw = frobenius_error(true_w, est_w)?;
    let norm = true_w.weights().norm_squared();
    if norm == 0.0 {
        return Err(Error::ZeroTrueGraph);
    }
    Ok(raw / norm)
}

/// Which sample mean is removed from the test partition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CenterMode {
    /// Training means for both partitions.
    #[default]
    Train,
    /// Each partition uses its own means.
    Each,
}

fn validate_fractions((train, test): (f64, f64)) -> Result<()> {
    let ok = |f: f64| f > 0.0 && f < 1.0;
    if !(ok(train) && ok(test) && (train + test - 1.0).abs() < 1e-9) {
        return Err(Error::InvalidConfig(format!(
            "split fractions ({train}, {test}) must lie in (0, 1) and sum to 1"
        )));
    }
    Ok(())
}

fn center_rows(x: DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut x = x;
    for mut row in x.row_iter_mut() {
        row -= mean.transpose();
    }
    x
}

fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    x.row_mean().transpose()
}

/// Random train/test partition of the rows, centered by the training means
/// (or per partition with [`CenterMode::Each`]). Training rows keep the
/// shuffled order so that prefixes are random subsets.
pub fn center_split_with<R: Rng + ?Sized>(
    data: &Dataset,
    fractions: (f64, f64),
    mode: CenterMode,
    rng: &mut R,
) -> Result<(Dataset, Dataset)> {
    validate_fractions(fractions)?;
    let n = data.num_samples();
    let n_train = (fractions.0 * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::EmptyPartition);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let train = data.samples().select_rows(&order[..n_train]);
    let test = data.samples().select_rows(&order[n_train..]);
    let train_mean = column_means(&train);
    let test_mean = match mode {
        CenterMode::Train => train_mean.clone(),
        CenterMode::Each => column_means(&test),
    };
    // previously removed offsets are carried into the recorded center
    let base = data.center();
    Ok((
        Dataset::with_center(center_rows(train, &train_mean), base + &train_mean)?,
        Dataset::with_center(center_rows(test, &test_mean), base + &test_mean)?,
    ))
}

pub fn center_split(data: &Dataset, fractions: (f64, f64), mode: CenterMode, seed: u64) -> Result<(Dataset, Dataset)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    center_split_with(data, fractions, mode, &mut rng)
}

/// A method entry in an experiment configuration.
///
/// JSON forms: `"spice"`, `"ls"`, `"true"` (the partial-correlation graph
/// of a synthetic model), `{"reference": "graph.csv"}` and
/// `{"true_graph": "graph.csv"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodConfig {
    Spice,
    Ls,
    #[serde(rename = "true")]
    Truth,
    Reference(PathBuf),
    TrueGraph(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Explicit innovation standard deviations.
    #[serde(default)]
    pub sigmas: Option<Vec<f64>>,
    /// Seed for variances drawn uniformly from (0, 1] when `sigmas` is absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Synthetic {
        graph: CommunitySpec,
        #[serde(default)]
        noise: Option<NoiseConfig>,
        /// Snapshots drawn per repetition before splitting.
        total_samples: usize,
    },
    File(PathBuf),
}

/// Serialized experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub methods: Vec<MethodConfig>,
    pub n_grid: Vec<usize>,
    pub repetitions: usize,
    #[serde(default = "default_fractions")]
    pub fractions: (f64, f64),
    pub split: SplitFile,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub center_mode: CenterMode,
    #[serde(default)]
    pub solver: Option<SolverConfig>,
    pub data: DataConfig,
}

fn default_fractions() -> (f64, f64) {
    (0.5, 0.5)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("at least one method is required".into()));
        }
        if self.n_grid.is_empty() || self.n_grid[0] == 0 || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("n_grid must be positive and strictly increasing".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidConfig("repetitions must be at least 1".into()));
        }
        validate_fractions(self.fractions)?;
        if let Some(s) = &self.solver {
            s.validate()?;
        }
        Ok(())
    }

    /// Loads referenced files (relative to `base_dir`) and builds the
    /// synthetic model.
    pub fn resolve(&self, base_dir: &Path) -> Result<Experiment> {
        self.validate()?;
        let path = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base_dir.join(p) };
        let source = match &self.data {
            DataConfig::Synthetic { graph, noise, total_samples } => {
                let w = make_community_graph(graph)?;
                let p = w.num_nodes();
                let noise = match noise {
                    Some(NoiseConfig { sigmas: Some(s), .. }) => NoiseSpec::new(DVector::from_vec(s.clone()))?,
                    other => {
                        let seed = other.as_ref().and_then(|n| n.seed).unwrap_or(graph.seed.wrapping_add(1));
                        NoiseSpec::random_variances(p, &mut ChaCha8Rng::seed_from_u64(seed))
                    }
                };
                DataSource::Synthetic(SyntheticModel::new(w, noise, *total_samples)?)
            }
            DataConfig::File(p) => DataSource::Observed(io::read_dataset(path(p))?),
        };
        let p = source.num_nodes();
        let split = self.split.clone().into_split(p)?;
        let mut truth = match &source {
            DataSource::Synthetic(m) => Some(m.partial_correlation.clone()),
            DataSource::Observed(_) => None,
        };
        let mut learners = Vec::with_capacity(self.methods.len());
        for m in &self.methods {
            let learner = match m {
                MethodConfig::Spice => Learner::Spice,
                MethodConfig::Ls => Learner::Ls,
                MethodConfig::Truth => match &source {
                    DataSource::Synthetic(model) => Learner::Fixed {
                        label: "true".into(),
                        graph: model.partial_correlation.clone(),
                    },
                    DataSource::Observed(_) => {
                        return Err(Error::InvalidConfig(
                            "method `true` needs a synthetic data source; use {\"true_graph\": path}".into(),
                        ))
                    }
                },
                MethodConfig::Reference(p) => Learner::Fixed {
                    label: "reference".into(),
                    graph: io::read_graph(path(p))?,
                },
                MethodConfig::TrueGraph(p) => {
                    let g = io::read_graph(path(p))?;
                    truth = Some(g.clone());
                    Learner::Fixed { label: "true".into(), graph: g }
                }
            };
            if let Learner::Fixed { graph, .. } = &learner {
                if graph.num_nodes() != p {
                    return Err(Error::DimensionMismatch {
                        expected: p,
                        found: graph.num_nodes(),
                        context: "method graph size",
                    });
                }
            }
            learners.push(learner);
        }
        Ok(Experiment {
            learners,
            n_grid: self.n_grid.clone(),
            repetitions: self.repetitions,
            fractions: self.fractions,
            split,
            seed: self.seed,
            center_mode: self.center_mode,
            solver: self.solver.unwrap_or_default(),
            source,
            truth,
        })
    }
}

/// A synthetic model `x = (I − W)⁻¹ε` together with its implied
/// partial-correlation graph.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticModel {
    pub generating: WeightedGraph,
    pub noise: NoiseSpec,
    pub partial_correlation: WeightedGraph,
    pub total_samples: usize,
}

impl SyntheticModel {
    pub fn new(generating: WeightedGraph, noise: NoiseSpec, total_samples: usize) -> Result<Self> {
        let partial_correlation = partial_correlation_graph(&generating, &noise)?;
        Ok(Self { generating, noise, partial_correlation, total_samples })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticModel),
    Observed(Dataset),
}

impl DataSource {
    pub fn num_nodes(&self) -> usize {
        match self {
            DataSource::Synthetic(m) => m.generating.num_nodes(),
            DataSource::Observed(d) => d.num_nodes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Learner {
    Spice,
    Ls,
    /// A graph that does not depend on the training data.
    Fixed { label: String, graph: WeightedGraph },
}

impl Learner {
    pub fn label(&self) -> &str {
        match self {
            Learner::Spice => "spice",
            Learner::Ls => "ls",
            Learner::Fixed { label, .. } => label,
        }
    }

    fn learn(&self, train: &Dataset, solver: &SolverConfig) -> Result<WeightedGraph> {
        match self {
            Learner::Spice => spice_learn_graph(train, solver),
            Learner::Ls => ls_learn_graph(train),
            Learner::Fixed { graph, .. } => Ok(graph.clone()),
        }
    }
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub learners: Vec<Learner>,
    pub n_grid: Vec<usize>,
    pub repetitions: usize,
    pub fractions: (f64, f64),
    pub split: NodeSplit,
    pub seed: u64,
    pub center_mode: CenterMode,
    pub solver: SolverConfig,
    pub source: DataSource,
    /// Graph that NMSE is measured against, when known.
    pub truth: Option<WeightedGraph>,
}

/// Metrics of one method at one training size in one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionRecord {
    pub repetition: usize,
    pub method: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub npe: f64,
    pub nmse: Option<f64>,
    pub nmse_raw: Option<f64>,
    pub nnz: usize,
    pub wall_ms: f64,
}

/// Averages over repetitions for one method and training size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub npe: f64,
    pub npe_db: f64,
    pub npe_se: f64,
    pub nmse: Option<f64>,
    pub nmse_se: Option<f64>,
    pub nmse_raw: Option<f64>,
    pub nnz: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: serde_json::Value,
    pub rows: Vec<ReportRow>,
    pub repetitions: Vec<RepetitionRecord>,
}

impl EvalReport {
    pub fn row(&self, method: &str, n: usize) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method && r.n == n)
    }

    pub fn method_rows<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a ReportRow> + 'a {
        self.rows.iter().filter(move |r| r.method == method)
    }

    /// Per-repetition records of one method at one training size, in
    /// repetition order.
    pub fn records(&self, method: &str, n: usize) -> Vec<&RepetitionRecord> {
        self.repetitions
            .iter()
            .filter(|r| r.method == method && r.n == n)
            .collect()
    }

    pub const CSV_HEADER: &'static str = "method,N,npe,npe_db,npe_se,nmse,nmse_raw,nnz,wall_ms";

    /// Plot-ready CSV; `-inf` marks perfect predictions and unavailable
    /// NMSE values are left empty.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let db = if r.npe_db == f64::NEG_INFINITY { "-inf".to_string() } else { format!("{}", r.npe_db) };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.method,
                r.n,
                r.npe,
                db,
                r.npe_se,
                opt(r.nmse),
                opt(r.nmse_raw),
                r.nnz,
                r.wall_ms
            ));
        }
        out
    }
}

/// Mean and standard error of the mean.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Generator for one repetition: stream `repetition` of the master seed.
pub fn repetition_rng(seed: u64, repetition: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(repetition as u64);
    rng
}

fn run_repetition(exp: &Experiment, rep: usize) -> Result<Vec<RepetitionRecord>> {
    let mut rng = repetition_rng(exp.seed, rep);
    let (train, test) = match &exp.source {
        DataSource::Synthetic(model) => {
            let data = generate_synthetic_with(&model.generating, &model.noise, model.total_samples, &mut rng)?;
            center_split_with(&data, exp.fractions, exp.center_mode, &mut rng)?
        }
        DataSource::Observed(data) => center_split_with(data, exp.fractions, exp.center_mode, &mut rng)?,
    };
    let n_max = *exp.n_grid.last().expect("validated grid");
    if n_max > train.num_samples() {
        return Err(Error::InvalidConfig(format!(
            "N = {n_max} exceeds the {} training snapshots available",
            train.num_samples()
        )));
    }
    let x0 = test.samples().select_columns(exp.split.observed());
    let targets = test.samples().select_columns(exp.split.targets());
    let mut records = Vec::with_capacity(exp.learners.len() * exp.n_grid.len());
    for learner in &exp.learners {
        for &n in &exp.n_grid {
            let subset = train.head(n);
            let start = Instant::now();
            let graph = learner.learn(&subset, &exp.solver)?;
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            let pred = predict_batch(&graph, &x0, &exp.split)?;
            let score = npe(&pred, &targets)?;
            let (nmse, nmse_raw) = match &exp.truth {
                Some(t) => (nmse_graph(t, &graph).ok(), Some(frobenius_error(t, &graph)?)),
                None => (None, None),
            };
            records.push(RepetitionRecord {
                repetition: rep,
                method: learner.label().to_owned(),
                n,
                npe: score.linear,
                nmse,
                nmse_raw,
                nnz: graph.nnz(),
                wall_ms,
            });
        }
    }
    Ok(records)
}

/// Runs every repetition (in parallel) and averages the metrics per
/// method and training size. Apart from `wall_ms`, the report depends only
/// on the experiment, not on scheduling.
pub fn run_experiment(exp: &Experiment, config_echo: serde_json::Value) -> Result<EvalReport> {
    let per_rep: Vec<Vec<RepetitionRecord>> = (0..exp.repetitions)
        .into_par_iter()
        .map(|rep| run_repetition(exp, rep))
        .collect::<Result<_>>()?;
    let repetitions: Vec<RepetitionRecord> = per_rep.into_iter().flatten().collect();
    let mut rows = Vec::new();
    for learner in &exp.learners {
        for &n in &exp.n_grid {
            let recs: Vec<&RepetitionRecord> = repetitions
                .iter()
                .filter(|r| r.method == learner.label() && r.n == n)
                .collect();
            let npes: Vec<f64> = recs.iter().map(|r| r.npe).collect();
            let (npe, npe_se) = mean_se(&npes);
            let nmse_vals: Option<Vec<f64>> = recs.iter().map(|r| r.nmse).collect();
            let nmse_stats = nmse_vals.map(|v| mean_se(&v));
            let raw_vals: Option<Vec<f64>> = recs.iter().map(|r| r.nmse_raw).collect();
            let nnz = recs.iter().map(|r| r.nnz as f64).sum::<f64>() / recs.len() as f64;
            let wall_ms = recs.iter().map(|r| r.wall_ms).sum::<f64>() / recs.len() as f64;
            rows.push(ReportRow {
                method: learner.label().to_owned(),
                n,
                npe,
                npe_db: to_db(npe),
                npe_se,
                nmse: nmse_stats.map(|s| s.0),
                nmse_se: nmse_stats.map(|s| s.1),
                nmse_raw: raw_vals.map(|v| mean_se(&v).0),
                nnz,
                wall_ms,
            });
        }
    }
    Ok(EvalReport { config: config_echo, rows, repetitions })
}
