//! End-to-end pipelines: data, training, extraction and evaluation wired
//! together, plus the multi-run sweeps and the group analysis built on them.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    chronological_split, fit_standardizer, make_lagged_dataset, read_series_csv, AdjacencyMatrix,
    LaggedDataset, MultivariateSeries, SplitSpec, StandardizationStats,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    connections_vs_threshold, difference_mask, evaluate, group_mean_connectivity, mean_std,
    threshold_grid, threshold_matrix, EdgeDifference, MetricReport, ThresholdCurve, GROUP_THRESHOLD,
};
use crate::extract::{gc_matrix, seed_list, GcScoreMatrix, DEFAULT_PASSES};
use crate::generators::{load_csv_dataset, GeneratorSpec};
use crate::mlp::{train, validation_mse, Activation, MlpRegressor, Regime, TrainConfig, TrainHistory};
use crate::Scalar;

pub const DEFAULT_LAGS: usize = 5;
pub const GROUP_LAGS: usize = 10;
pub const ALPHA_GRID: [f64; 4] = [0.05, 0.1, 0.2, 0.3];
pub const SPARSITY_GRID: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];
pub const DEFAULT_REPLICATES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DatasetSpec {
    Synthetic {
        generator: GeneratorSpec,
    },
    Csv {
        path: PathBuf,
        #[serde(default)]
        adjacency: Option<PathBuf>,
    },
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Synthetic { generator } => generator.validate(),
            Self::Csv { .. } => Ok(()),
        }
    }

    pub fn load<T: Scalar>(&self) -> Result<(MultivariateSeries<T>, Option<AdjacencyMatrix>)> {
        match self {
            Self::Synthetic { generator } => generator.generate().map(|(s, a)| (s, Some(a))),
            Self::Csv { path, adjacency } => {
                let (s, a) = load_csv_dataset(path, adjacency.as_deref())?;
                Ok((s.cast(), a))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            activation: Activation::Relu,
        }
    }
}

/// Everything about a run except where the data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default = "default_lags")]
    pub lags: usize,
    #[serde(default)]
    pub split: SplitSpec,
    /// z-score every channel with statistics of the training segment.
    #[serde(default = "yes")]
    pub standardize: bool,
    #[serde(default)]
    pub model: ModelConfig,
    /// `train.seed` is ignored; training draws its seed from `seed`.
    #[serde(default)]
    pub train: TrainConfig,
    /// Monte-Carlo passes per residual distribution.
    #[serde(default = "default_passes")]
    pub passes: usize,
    pub seed: u64,
    /// Which of the two metric reports is the headline one.
    #[serde(default = "yes")]
    pub include_diagonal: bool,
    /// When set, the dropout rate is picked from this grid by validation MSE.
    #[serde(default)]
    pub alpha_grid: Option<Vec<f64>>,
}

fn default_lags() -> usize {
    DEFAULT_LAGS
}

fn default_passes() -> usize {
    DEFAULT_PASSES
}

fn yes() -> bool {
    true
}

impl PipelineConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            lags: DEFAULT_LAGS,
            split: SplitSpec::default(),
            standardize: true,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            passes: DEFAULT_PASSES,
            seed,
            include_diagonal: true,
            alpha_grid: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lags == 0 {
            return Err(Error::Config("lag order must be positive".into()));
        }
        if self.passes < 2 {
            return Err(Error::Config(format!("need at least 2 passes, got {}", self.passes)));
        }
        if self.model.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden layers must have at least one unit".into()));
        }
        if let Some(grid) = &self.alpha_grid {
            if grid.is_empty() || grid.iter().any(|a| !(0.0..1.0).contains(a)) {
                return Err(Error::Config("alpha grid must be nonempty with values in [0, 1)".into()));
            }
        }
        self.split.validate()?;
        self.train.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetSpec, seed: u64) -> Self {
        Self {
            dataset,
            pipeline: PipelineConfig::new(seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.pipeline.validate()
    }

    /// Replicate `r`: both the master seed and a synthetic dataset's seed
    /// are offset by `r`.
    pub fn replicate(&self, r: u64) -> Self {
        let mut out = self.clone();
        out.pipeline.seed = self.pipeline.seed.wrapping_add(r);
        if let DatasetSpec::Synthetic { generator } = &mut out.dataset {
            *generator = generator.with_seed(generator.seed().wrapping_add(r));
        }
        out
    }
}

/// Independent stream for one purpose, derived from the master seed.
fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Default)]
struct Stopwatch(Vec<StageTiming>);

impl Stopwatch {
    fn time<R>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<R>) -> Result<R> {
        let start = Instant::now();
        let out = f().map_err(|e| e.in_stage(stage));
        self.0.push(StageTiming {
            stage: stage.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

/// AUROC/AUPRC with and without self-loops. A report is absent when its
/// entries hold a single class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub off_diagonal: Option<MetricReport>,
    pub with_diagonal: Option<MetricReport>,
    pub include_diagonal: bool,
}

impl Metrics {
    pub fn compute<T: Scalar>(
        scores: &GcScoreMatrix<T>,
        truth: &AdjacencyMatrix,
        include_diagonal: bool,
    ) -> Result<Self> {
        let report = |diag| match evaluate(scores, truth, diag) {
            Ok(r) => Ok(Some(r)),
            Err(Error::SingleClass { .. }) => Ok(None),
            Err(e) => Err(e),
        };
        Ok(Self {
            off_diagonal: report(false)?,
            with_diagonal: report(true)?,
            include_diagonal,
        })
    }

    pub fn primary(&self) -> Option<&MetricReport> {
        if self.include_diagonal {
            self.with_diagonal.as_ref()
        } else {
            self.off_diagonal.as_ref()
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome<T> {
    pub model: MlpRegressor<T>,
    pub history: TrainHistory,
    pub scores: GcScoreMatrix<T>,
    pub alpha: f64,
    /// `(alpha, validation MSE)` per candidate when tuning was requested.
    pub alpha_search: Vec<(f64, f64)>,
    pub seeds: Vec<u64>,
    pub standardization: Option<StandardizationStats>,
    pub test_len: usize,
    pub timings: Vec<StageTiming>,
}

struct Prepared<T> {
    train: LaggedDataset<T>,
    val: LaggedDataset<T>,
    test: LaggedDataset<T>,
    stats: Option<StandardizationStats>,
}

fn prepare<T: Scalar>(series: &MultivariateSeries<T>, cfg: &PipelineConfig) -> Result<Prepared<T>> {
    let (train, val, test) = chronological_split(series, &cfg.split)?;
    let (train, val, test, stats) = if cfg.standardize {
        let stats = fit_standardizer(&train)?;
        (stats.apply(&train)?, stats.apply(&val)?, stats.apply(&test)?, Some(stats))
    } else {
        (train, val, test, None)
    };
    Ok(Prepared {
        train: make_lagged_dataset(&train, cfg.lags)?,
        val: make_lagged_dataset(&val, cfg.lags)?,
        test: make_lagged_dataset(&test, cfg.lags)?,
        stats,
    })
}

/// Splits, standardizes, trains and extracts the score matrix on the test
/// segment. A pure function of `(series, cfg)`.
pub fn fit_and_extract<T: Scalar>(series: &MultivariateSeries<T>, cfg: &PipelineConfig) -> Result<FitOutcome<T>> {
    cfg.validate()?;
    let mut clock = Stopwatch::default();
    let data = clock.time("prepare", || prepare(series, cfg))?;
    let p = series.channels();

    let (model, history, alpha, alpha_search) = clock.time("train", || {
        let mut sizes = vec![cfg.lags * p];
        sizes.extend(&cfg.model.hidden);
        sizes.push(p);
        let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1));
        let init = MlpRegressor::new(&sizes, cfg.model.activation, cfg.train.alpha, &mut init_rng)?;
        let mut tc = cfg.train.clone();
        tc.seed = derive_seed(cfg.seed, 2);
        match &cfg.alpha_grid {
            None => {
                let (m, h) = train(&init, &data.train, &data.val, &tc)?;
                Ok((m, h, tc.alpha, Vec::new()))
            }
            Some(grid) => {
                let mut best: Option<(MlpRegressor<T>, TrainHistory, f64, f64)> = None;
                let mut search = Vec::new();
                for &alpha in grid {
                    tc.alpha = alpha;
                    let (m, h) = train(&init, &data.train, &data.val, &tc)?;
                    let v = validation_mse(&m, &data.val)?;
                    search.push((alpha, v));
                    if best.as_ref().is_none_or(|b| v < b.3) {
                        best = Some((m, h, alpha, v));
                    }
                }
                let (m, h, alpha, _) = best.expect("grid is nonempty");
                Ok((m, h, alpha, search))
            }
        }
    })?;

    let seeds = seed_list(derive_seed(cfg.seed, 3), cfg.passes);
    let scores = clock.time("extract", || gc_matrix(&model, &data.test, &seeds, series.channel_names()))?;
    Ok(FitOutcome {
        model,
        history,
        scores,
        alpha,
        alpha_search,
        seeds,
        standardization: data.stats,
        test_len: data.test.len(),
        timings: clock.0,
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentResult<T> {
    pub outcome: FitOutcome<T>,
    pub truth: Option<AdjacencyMatrix>,
    pub metrics: Option<Metrics>,
    pub timings: Vec<StageTiming>,
}

pub fn run_experiment<T: Scalar>(config: &ExperimentConfig) -> Result<ExperimentResult<T>> {
    config.validate().map_err(|e| e.in_stage("config"))?;
    let mut clock = Stopwatch::default();
    let (series, truth) = clock.time("load", || config.dataset.load::<T>())?;
    let outcome = fit_and_extract(&series, &config.pipeline)?;
    clock.0.extend(outcome.timings.iter().cloned());
    let metrics = clock.time("evaluate", || {
        truth
            .as_ref()
            .map(|t| Metrics::compute(&outcome.scores, t, config.pipeline.include_diagonal))
            .transpose()
    })?;
    Ok(ExperimentResult {
        outcome,
        truth,
        metrics,
        timings: clock.0,
    })
}

/// Mean and sample standard deviation of a metric over replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub auroc_mean: f64,
    pub auroc_std: f64,
    pub auprc_mean: f64,
    pub auprc_std: f64,
    /// Replicates that produced a metric report.
    pub runs: usize,
    /// Replicates skipped because the evaluated truth held a single class.
    pub skipped: usize,
}

fn summarize(reports: &[Option<MetricReport>]) -> Summary {
    let ok: Vec<&MetricReport> = reports.iter().flatten().collect();
    let (auroc_mean, auroc_std) = mean_std(&ok.iter().map(|r| r.auroc).collect::<Vec<_>>());
    let (auprc_mean, auprc_std) = mean_std(&ok.iter().map(|r| r.auprc).collect::<Vec<_>>());
    Summary {
        auroc_mean,
        auroc_std,
        auprc_mean,
        auprc_std,
        runs: ok.len(),
        skipped: reports.len() - ok.len(),
    }
}

fn replicate_reports<T: Scalar>(config: &ExperimentConfig, replicates: usize) -> Result<Vec<Option<MetricReport>>> {
    (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let res = run_experiment::<T>(&config.replicate(r))?;
            let metrics = res
                .metrics
                .ok_or_else(|| Error::Config("sweeps need a dataset with ground truth".into()))?;
            Ok(metrics.primary().cloned())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeRow {
    pub regime: Regime,
    #[serde(flatten)]
    pub summary: Summary,
}

/// One row per training regime, each over `replicates` datasets/seeds.
pub fn regime_sweep<T: Scalar>(
    config: &ExperimentConfig,
    regimes: &[Regime],
    replicates: usize,
) -> Result<Vec<RegimeRow>> {
    if replicates == 0 {
        return Err(Error::Config("need at least one replicate".into()));
    }
    regimes
        .iter()
        .map(|&regime| {
            let mut cfg = config.clone();
            cfg.pipeline.train.regime = regime;
            Ok(RegimeRow {
                regime,
                summary: summarize(&replicate_reports::<T>(&cfg, replicates)?),
            })
        })
        .collect()
}

pub fn regime_table_markdown(rows: &[RegimeRow]) -> String {
    let mut out = String::from("| Regime | AUROC | AUPRC | runs |\n|---|---|---|---|\n");
    for row in rows {
        let s = &row.summary;
        out.push_str(&format!(
            "| {} | {:.2} ± {:.2} | {:.2} ± {:.2} | {} |\n",
            row.regime, s.auroc_mean, s.auroc_std, s.auprc_mean, s.auprc_std, s.runs
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityRow {
    pub sparsity: f64,
    #[serde(flatten)]
    pub summary: Summary,
}

/// Repeats a VAR experiment at each sparsity level.
pub fn sparsity_sweep<T: Scalar>(config: &ExperimentConfig, grid: &[f64], replicates: usize) -> Result<Vec<SparsityRow>> {
    if replicates == 0 {
        return Err(Error::Config("need at least one replicate".into()));
    }
    let DatasetSpec::Synthetic {
        generator: GeneratorSpec::Var(base),
    } = &config.dataset
    else {
        return Err(Error::Config("sparsity sweeps need the VAR preset".into()));
    };
    grid.iter()
        .map(|&sparsity| {
            let mut spec = base.clone();
            spec.sparsity = sparsity;
            let mut cfg = config.clone();
            cfg.dataset = DatasetSpec::Synthetic {
                generator: GeneratorSpec::Var(spec),
            };
            Ok(SparsityRow {
                sparsity,
                summary: summarize(&replicate_reports::<T>(&cfg, replicates)?),
            })
        })
        .collect()
}

pub fn sparsity_csv(rows: &[SparsityRow]) -> String {
    let mut out = String::from("sparsity,auroc_mean,auroc_std,auprc_mean,auprc_std,runs,skipped\n");
    for r in rows {
        let s = &r.summary;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.sparsity, s.auroc_mean, s.auroc_std, s.auprc_mean, s.auprc_std, s.runs, s.skipped
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct Subject<T> {
    pub name: String,
    pub series: MultivariateSeries<T>,
}

#[derive(Debug, Clone)]
pub struct Group<T> {
    pub name: String,
    pub subjects: Vec<Subject<T>>,
}

/// Reads `dir/<group>/<subject>.csv`, groups and subjects in name order.
pub fn load_group_dir(dir: &Path) -> Result<Vec<Group<f64>>> {
    let mut groups = Vec::new();
    for group_dir in sorted_entries(dir)? {
        if !group_dir.is_dir() {
            continue;
        }
        let mut subjects = Vec::new();
        for file in sorted_entries(&group_dir)? {
            if file.extension().is_some_and(|e| e == "csv") {
                subjects.push(Subject {
                    name: stem(&file),
                    series: read_series_csv(&file)?,
                });
            }
        }
        if subjects.is_empty() {
            return Err(Error::Config(format!("group {} has no subject CSV files", group_dir.display())));
        }
        groups.push(Group {
            name: stem(&group_dir),
            subjects,
        });
    }
    if groups.is_empty() {
        return Err(Error::Config(format!("no group directories under {}", dir.display())));
    }
    Ok(groups)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?;
    out.sort();
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupConfig {
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_curve_grid")]
    pub curve_thresholds: Vec<f64>,
}

fn default_threshold() -> f64 {
    GROUP_THRESHOLD
}

fn default_curve_grid() -> Vec<f64> {
    threshold_grid(0.5, 0.95, 0.05)
}

impl GroupConfig {
    pub fn new(seed: u64) -> Self {
        let mut pipeline = PipelineConfig::new(seed);
        pipeline.lags = GROUP_LAGS;
        Self {
            pipeline,
            threshold: GROUP_THRESHOLD,
            curve_thresholds: default_curve_grid(),
        }
    }
}

pub struct GroupResult<T> {
    pub name: String,
    pub subjects: Vec<(String, GcScoreMatrix<T>)>,
    pub mean: GcScoreMatrix<T>,
    pub binary: AdjacencyMatrix,
    pub curve: ThresholdCurve,
}

pub struct GroupAnalysis<T> {
    pub groups: Vec<GroupResult<T>>,
    /// `(a, b, mask)` for every pair of groups `a < b`.
    pub differences: Vec<(usize, usize, ndarray::Array2<EdgeDifference>)>,
}

/// Fits one model per subject (all with the same seed), averages each
/// group's score matrices, thresholds the mean and compares groups.
pub fn group_analysis<T: Scalar>(groups: &[Group<T>], cfg: &GroupConfig) -> Result<GroupAnalysis<T>> {
    let first = groups
        .first()
        .and_then(|g| g.subjects.first())
        .ok_or_else(|| Error::Config("group analysis needs at least one subject".into()))?;
    let names = first.series.channel_names();
    for g in groups {
        if g.subjects.is_empty() {
            return Err(Error::Config(format!("group {} has no subjects", g.name)));
        }
        for s in &g.subjects {
            if s.series.channel_names() != names {
                return Err(Error::Shape(format!(
                    "subject {}/{} has channels {:?}, expected {:?}",
                    g.name,
                    s.name,
                    s.series.channel_names(),
                    names
                )));
            }
        }
    }
    let results = groups
        .iter()
        .map(|g| {
            let subjects = g
                .subjects
                .par_iter()
                .map(|s| Ok((s.name.clone(), fit_and_extract(&s.series, &cfg.pipeline)?.scores)))
                .collect::<Result<Vec<_>>>()?;
            let matrices: Vec<GcScoreMatrix<T>> = subjects.iter().map(|(_, m)| m.clone()).collect();
            let mean = group_mean_connectivity(&matrices)?;
            let binary = threshold_matrix(&mean, cfg.threshold)?;
            let curve = connections_vs_threshold(&mean, &cfg.curve_thresholds, cfg.pipeline.include_diagonal)?;
            Ok(GroupResult {
                name: g.name.clone(),
                subjects,
                mean,
                binary,
                curve,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut differences = Vec::new();
    for a in 0..results.len() {
        for b in a + 1..results.len() {
            differences.push((a, b, difference_mask(&results[a].binary, &results[b].binary)?));
        }
    }
    Ok(GroupAnalysis {
        groups: results,
        differences,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{TriadSpec, TriadStructure, VarSpec};

    fn quick(mut cfg: PipelineConfig) -> PipelineConfig {
        cfg.model.hidden = vec![16];
        cfg.train.epochs = 5;
        cfg.passes = 10;
        cfg
    }

    fn triad_config(seed: u64) -> ExperimentConfig {
        let spec = TriadSpec::new(TriadStructure::Chain, 300, seed);
        let mut cfg = ExperimentConfig::new(
            DatasetSpec::Synthetic {
                generator: GeneratorSpec::Triad(spec),
            },
            seed,
        );
        cfg.pipeline = quick(cfg.pipeline);
        cfg
    }

    #[test]
    fn config_json_round_trip_and_defaults() {
        let cfg = triad_config(3);
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);

        let minimal = r#"{"dataset": {"source": "csv", "path": "x.csv"}, "seed": 9}"#;
        let cfg: ExperimentConfig = serde_json::from_str(minimal).unwrap();
        assert_eq!(cfg.pipeline, PipelineConfig::new(9));
        let no_seed = r#"{"dataset": {"source": "csv", "path": "x.csv"}}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(no_seed).is_err());
    }

    #[test]
    fn run_is_deterministic() {
        let cfg = triad_config(1);
        let a = run_experiment::<f64>(&cfg).unwrap();
        let b = run_experiment::<f64>(&cfg).unwrap();
        assert_eq!(a.outcome.scores, b.outcome.scores);
        assert_eq!(a.metrics, b.metrics);
        assert!(a.metrics.unwrap().off_diagonal.is_some());
        let stages: Vec<_> = a.timings.iter().map(|t| t.stage.as_str()).collect();
        assert_eq!(stages, ["load", "prepare", "train", "extract", "evaluate"]);
    }

    #[test]
    fn replicates_change_data_and_seed() {
        let cfg = triad_config(4);
        let r = cfg.replicate(2);
        assert_eq!(r.pipeline.seed, 6);
        match r.dataset {
            DatasetSpec::Synthetic { generator } => assert_eq!(generator.seed(), 6),
            _ => unreachable!(),
        }
    }

    #[test]
    fn stage_named_in_errors() {
        let mut cfg = triad_config(0);
        cfg.pipeline.lags = 500;
        let err = run_experiment::<f64>(&cfg).unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().starts_with("prepare:"), "{err}");
    }

    #[test]
    fn alpha_tuning_picks_lowest_validation_error() {
        let mut cfg = triad_config(2);
        cfg.pipeline.alpha_grid = Some(ALPHA_GRID.to_vec());
        let res = run_experiment::<f64>(&cfg).unwrap();
        let search = &res.outcome.alpha_search;
        assert_eq!(search.len(), 4);
        let best = search.iter().cloned().fold((0.0, f64::INFINITY), |b, x| if x.1 < b.1 { x } else { b });
        assert_eq!(res.outcome.alpha, best.0);
        assert_eq!(res.outcome.model.dropout_rate(), best.0);
    }

    #[test]
    fn sparsity_sweep_single_level() {
        let spec = VarSpec::new(4, 2, 300, 0.2, 0);
        let mut cfg = ExperimentConfig::new(
            DatasetSpec::Synthetic {
                generator: GeneratorSpec::Var(spec),
            },
            0,
        );
        cfg.pipeline = quick(cfg.pipeline);
        cfg.pipeline.include_diagonal = false;
        let rows = sparsity_sweep::<f64>(&cfg, &[0.2], 1).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].summary.runs + rows[0].summary.skipped, 1);
        assert_eq!(sparsity_csv(&rows).lines().count(), 2);
        // every off-diagonal pair connected: nothing negative left to rank
        let rows = sparsity_sweep::<f64>(&cfg, &[1.0], 1).unwrap();
        assert_eq!(rows[0].summary.skipped, 1);
        assert!(sparsity_sweep::<f64>(&triad_config(0), &[0.2], 1).is_err());
    }

    fn subject(seed: u64, name: &str) -> Subject<f64> {
        let (series, _) = GeneratorSpec::Triad(TriadSpec::new(TriadStructure::Fork, 300, seed))
            .generate()
            .unwrap();
        Subject {
            name: name.into(),
            series,
        }
    }

    fn group_cfg() -> GroupConfig {
        let mut cfg = GroupConfig::new(0);
        cfg.pipeline = quick(cfg.pipeline);
        cfg
    }

    #[test]
    fn identical_groups_have_no_differences() {
        let groups = vec![
            Group { name: "a".into(), subjects: vec![subject(1, "s1"), subject(2, "s2")] },
            Group { name: "b".into(), subjects: vec![subject(1, "s1"), subject(2, "s2")] },
        ];
        let res = group_analysis(&groups, &group_cfg()).unwrap();
        assert_eq!(res.groups[0].mean, res.groups[1].mean);
        assert_eq!(res.differences.len(), 1);
        assert!(res.differences[0].2.iter().all(|d| *d == EdgeDifference::Same));
        assert_eq!(res.groups[0].curve.thresholds.len(), 10);
    }

    #[test]
    fn single_subject_group_mean_is_subject() {
        let groups = vec![Group { name: "a".into(), subjects: vec![subject(5, "s")] }];
        let res = group_analysis(&groups, &group_cfg()).unwrap();
        assert_eq!(res.groups[0].mean, res.groups[0].subjects[0].1);
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let mut odd = subject(1, "odd");
        odd.series = MultivariateSeries::new(odd.series.values().clone(), vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let groups = vec![Group { name: "g".into(), subjects: vec![subject(1, "s"), odd] }];
        assert!(matches!(group_analysis(&groups, &group_cfg()), Err(Error::Shape(_))));
    }
}
