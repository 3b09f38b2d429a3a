use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mcgc::experiment::{DatasetSpec, ExperimentConfig, PipelineConfig};
use mcgc::generators::{GeneratorSpec, LorenzSpec, TriadSpec, TriadStructure, VarSpec};
use mcgc::mlp::{Activation, Regime};
use mcgc::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "mcgc", version, about = "Granger-causality discovery with Monte-Carlo dropout")]
pub struct Cli {
    /// Directory that relative output paths are resolved against.
    #[arg(long, env = "MCGC_OUTPUT_ROOT", global = true, default_value = ".")]
    pub output_root: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate a synthetic dataset with known ground truth.
    Generate(GenerateArgs),
    /// Train, extract the score matrix and evaluate it.
    Run(RunArgs),
    /// Repeat a VAR experiment across sparsity levels.
    SweepSparsity(SweepArgs),
    /// Per-subject score matrices averaged by group, thresholded and compared.
    GroupAnalysis(GroupArgs),
    /// Draw a score matrix or threshold curve as SVG.
    Render(RenderArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Triad,
    Var,
    Lorenz96,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Args, Debug, Default, Clone)]
pub struct GeneratorArgs {
    #[arg(long)]
    pub preset: Option<Preset>,
    /// Triad structure: chain, fork or collider.
    #[arg(long)]
    pub structure: Option<TriadStructure>,
    /// Linear triad influence instead of tanh|u| + sin|u|.
    #[arg(long)]
    pub linear: bool,
    /// Series length.
    #[arg(long = "T", alias = "length")]
    pub length: Option<usize>,
    /// Noise standard deviation.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Channel count (VAR, Lorenz-96).
    #[arg(long = "p", alias = "channels")]
    pub channels: Option<usize>,
    /// VAR lag order.
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub sparsity: Option<f64>,
    #[arg(long)]
    pub coupling: Option<f64>,
    /// Lorenz-96 forcing.
    #[arg(long = "F", alias = "forcing")]
    pub forcing: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub sample_every: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub perturbation: Option<f64>,
    /// Dataset seed; defaults to --seed.
    #[arg(long)]
    pub data_seed: Option<u64>,
}

impl GeneratorArgs {
    fn any_set(&self) -> bool {
        self.structure.is_some()
            || self.linear
            || self.length.is_some()
            || self.sigma.is_some()
            || self.channels.is_some()
            || self.order.is_some()
            || self.sparsity.is_some()
            || self.coupling.is_some()
            || self.forcing.is_some()
            || self.dt.is_some()
            || self.sample_every.is_some()
            || self.burn_in.is_some()
            || self.perturbation.is_some()
            || self.data_seed.is_some()
    }

    /// A fresh spec for `--preset`, with any generator flags applied.
    pub fn build(&self, preset: Preset, seed: u64) -> Result<GeneratorSpec> {
        let seed = self.data_seed.unwrap_or(seed);
        let mut spec = match preset {
            Preset::Triad => GeneratorSpec::Triad(TriadSpec::new(TriadStructure::Chain, 1000, seed)),
            Preset::Var => GeneratorSpec::Var(VarSpec::new(10, 2, 1000, 0.2, seed)),
            Preset::Lorenz96 => GeneratorSpec::Lorenz96(LorenzSpec::new(10, 20.0, 1000, seed)),
        };
        self.apply(&mut spec)?;
        Ok(spec)
    }

    /// Overrides fields of `spec`; flags that do not belong to its preset
    /// are rejected.
    pub fn apply(&self, spec: &mut GeneratorSpec) -> Result<()> {
        let foreign = |flag: &str, preset: &str| Err(Error::Config(format!("--{flag} does not apply to the {preset} preset")));
        match spec {
            GeneratorSpec::Triad(s) => {
                for (set, flag) in [
                    (self.channels.is_some(), "p"),
                    (self.order.is_some(), "order"),
                    (self.sparsity.is_some(), "sparsity"),
                    (self.coupling.is_some(), "coupling"),
                    (self.forcing.is_some(), "F"),
                    (self.dt.is_some(), "dt"),
                    (self.sample_every.is_some(), "sample-every"),
                    (self.burn_in.is_some(), "burn-in"),
                    (self.perturbation.is_some(), "perturbation"),
                ] {
                    if set {
                        return foreign(flag, "triad");
                    }
                }
                set(&mut s.structure, self.structure);
                if self.linear {
                    s.nonlinear = false;
                }
                set(&mut s.length, self.length);
                set(&mut s.sigma_e, self.sigma);
                set(&mut s.seed, self.data_seed);
            }
            GeneratorSpec::Var(s) => {
                for (set, flag) in [
                    (self.structure.is_some(), "structure"),
                    (self.linear, "linear"),
                    (self.forcing.is_some(), "F"),
                    (self.dt.is_some(), "dt"),
                    (self.sample_every.is_some(), "sample-every"),
                    (self.burn_in.is_some(), "burn-in"),
                    (self.perturbation.is_some(), "perturbation"),
                ] {
                    if set {
                        return foreign(flag, "var");
                    }
                }
                set(&mut s.channels, self.channels);
                set(&mut s.lags, self.order);
                set(&mut s.length, self.length);
                set(&mut s.sigma_e, self.sigma);
                set(&mut s.sparsity, self.sparsity);
                set(&mut s.coupling, self.coupling);
                set(&mut s.seed, self.data_seed);
            }
            GeneratorSpec::Lorenz96(s) => {
                for (set, flag) in [
                    (self.structure.is_some(), "structure"),
                    (self.linear, "linear"),
                    (self.order.is_some(), "order"),
                    (self.sparsity.is_some(), "sparsity"),
                    (self.coupling.is_some(), "coupling"),
                    (self.sigma.is_some(), "sigma"),
                ] {
                    if set {
                        return foreign(flag, "lorenz96");
                    }
                }
                set(&mut s.p, self.channels);
                set(&mut s.forcing, self.forcing);
                set(&mut s.length, self.length);
                set(&mut s.dt, self.dt);
                set(&mut s.sample_every, self.sample_every);
                set(&mut s.burn_in, self.burn_in);
                set(&mut s.perturbation, self.perturbation);
                set(&mut s.seed, self.data_seed);
            }
        }
        spec.validate()
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Args, Debug, Default, Clone)]
pub struct PipelineArgs {
    /// Experiment config JSON; flags given alongside it win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Lag order K of the predictor.
    #[arg(long)]
    pub lags: Option<usize>,
    /// Training regime: NoILD, DPILD or ILD.
    #[arg(long)]
    pub regime: Option<Regime>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Hidden-layer dropout rate.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Pick alpha from 0.05, 0.1, 0.2, 0.3 by validation error.
    #[arg(long)]
    pub tune_alpha: bool,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub activation: Option<Activation>,
    /// Monte-Carlo passes per residual distribution.
    #[arg(long, short = 'q')]
    pub passes: Option<usize>,
    /// Headline metrics leave out self-loops.
    #[arg(long)]
    pub no_diagonal: bool,
    #[arg(long)]
    pub no_standardize: bool,
    #[arg(long, value_enum, default_value_t)]
    pub precision: Precision,
}

impl PipelineArgs {
    pub fn apply(&self, p: &mut PipelineConfig) -> Result<()> {
        set(&mut p.seed, self.seed);
        set(&mut p.lags, self.lags);
        set(&mut p.train.regime, self.regime);
        set(&mut p.train.epochs, self.epochs);
        set(&mut p.train.batch_size, self.batch_size);
        set(&mut p.train.learning_rate, self.learning_rate);
        set(&mut p.train.early_stop_patience, self.patience);
        set(&mut p.train.alpha, self.alpha);
        set(&mut p.model.hidden, self.hidden.clone());
        set(&mut p.model.activation, self.activation);
        set(&mut p.passes, self.passes);
        if self.tune_alpha {
            p.alpha_grid = Some(mcgc::experiment::ALPHA_GRID.to_vec());
        }
        if self.no_diagonal {
            p.include_diagonal = false;
        }
        if self.no_standardize {
            p.standardize = false;
        }
        p.validate()
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

#[derive(Args, Debug)]
pub struct DataArgs {
    #[command(flatten)]
    pub generator: GeneratorArgs,
    /// Observed series CSV instead of a synthetic preset.
    #[arg(long, conflicts_with = "preset")]
    pub csv: Option<PathBuf>,
    /// Ground-truth adjacency CSV for --csv data.
    #[arg(long, requires = "csv")]
    pub adjacency: Option<PathBuf>,
}

/// Config file first, then `--preset`/`--csv`, then individual flags.
pub fn resolve_experiment(data: &DataArgs, pipe: &PipelineArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &pipe.config {
        Some(path) => read_json::<ExperimentConfig>(path)?,
        None => {
            let seed = pipe
                .seed
                .ok_or_else(|| Error::Config("--seed is required without --config".into()))?;
            let dataset = dataset_from_flags(data, seed)?
                .ok_or_else(|| Error::Config("one of --config, --preset or --csv is required".into()))?;
            ExperimentConfig::new(dataset, seed)
        }
    };
    if pipe.config.is_some() {
        if let Some(d) = dataset_from_flags(data, pipe.seed.unwrap_or(cfg.pipeline.seed))? {
            cfg.dataset = d;
        } else if data.generator.any_set() {
            match &mut cfg.dataset {
                DatasetSpec::Synthetic { generator } => data.generator.apply(generator)?,
                DatasetSpec::Csv { .. } => {
                    return Err(Error::Config("generator flags given for a CSV dataset".into()));
                }
            }
        }
    }
    pipe.apply(&mut cfg.pipeline)?;
    cfg.validate()?;
    Ok(cfg)
}

fn dataset_from_flags(data: &DataArgs, seed: u64) -> Result<Option<DatasetSpec>> {
    if let Some(preset) = data.generator.preset {
        return Ok(Some(DatasetSpec::Synthetic {
            generator: data.generator.build(preset, seed)?,
        }));
    }
    if let Some(path) = &data.csv {
        if data.generator.any_set() {
            return Err(Error::Config("generator flags cannot be combined with --csv".into()));
        }
        return Ok(Some(DatasetSpec::Csv {
            path: path.clone(),
            adjacency: data.adjacency.clone(),
        }));
    }
    Ok(None)
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub generator: GeneratorArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Compare NoILD, DPILD and ILD over replicated datasets.
    #[arg(long)]
    pub sweep_regimes: bool,
    /// Replicates per regime when sweeping.
    #[arg(long, default_value_t = mcgc::experiment::DEFAULT_REPLICATES)]
    pub replicates: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Sparsity levels, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = mcgc::experiment::DEFAULT_REPLICATES)]
    pub replicates: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GroupArgs {
    /// Directory laid out as <group>/<subject>.csv.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Threshold curve grid, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub curve: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// Score matrix CSV to draw as a heatmap.
    #[arg(long, required_unless_present = "curve", conflicts_with = "curve")]
    pub scores: Option<PathBuf>,
    /// Second score matrix; cells whose thresholded edges differ are outlined.
    #[arg(long, requires = "scores")]
    pub compare: Option<PathBuf>,
    #[arg(long, default_value_t = mcgc::evaluation::GROUP_THRESHOLD)]
    pub threshold: f64,
    /// Threshold curve CSV (threshold,count) to draw as a line chart.
    #[arg(long)]
    pub curve: Option<PathBuf>,
    #[arg(long)]
    pub title: Option<String>,
    /// Output SVG file.
    #[arg(long)]
    pub out: PathBuf,
}
