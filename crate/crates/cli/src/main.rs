mod args;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{CommandFactory, Parser};

use args::{Cli, Command, GenerateArgs, GroupArgs, Precision, RenderArgs, RunArgs, SweepArgs};
use mcgc::data::AdjacencyMatrix;
use mcgc::evaluation::{difference_mask, threshold_matrix, EdgeDifference, ThresholdCurve};
use mcgc::experiment::{
    group_analysis, load_group_dir, regime_sweep, regime_table_markdown, run_experiment, sparsity_csv,
    sparsity_sweep, ExperimentConfig, Group, GroupConfig, Subject, SPARSITY_GRID,
};
use mcgc::extract::GcScoreMatrix;
use mcgc::generators::write_dataset;
use mcgc::mlp::Regime;
use mcgc::svg::{render_heatmap, render_line_chart, LineSeries};
use mcgc::Scalar;
use output::{seeds_digest, RunDir};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let root = cli.output_root.clone();
    let result = match cli.command {
        Command::Generate(a) => generate(&root, a),
        Command::Run(a) => run(&root, a),
        Command::SweepSparsity(a) => sweep(&root, a),
        Command::GroupAnalysis(a) => group(&root, a),
        Command::Render(a) => render(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let config = e
        .chain()
        .find_map(|c| c.downcast_ref::<mcgc::Error>())
        .is_some_and(|m| m.is_config());
    if config {
        2
    } else {
        3
    }
}

fn out_dir(root: &Path, out: Option<PathBuf>, default: String) -> PathBuf {
    root.join(out.unwrap_or_else(|| PathBuf::from(default)))
}

fn generate(root: &Path, a: GenerateArgs) -> Result<()> {
    let Some(preset) = a.generator.preset else {
        Cli::command()
            .error(clap::error::ErrorKind::MissingRequiredArgument, "generate needs --preset <PRESET>")
            .exit();
    };
    let spec = a.generator.build(preset, a.seed)?;
    let (series, adjacency) = spec.generate::<f64>()?;
    let name = format!("{}-{}", serde_json::to_value(&spec)?["preset"].as_str().unwrap_or("data"), spec.seed());
    let dir = out_dir(root, a.out, name);
    write_dataset(&dir, &spec, &series, &adjacency)?;
    println!("{}", dir.display());
    Ok(())
}

fn run(root: &Path, a: RunArgs) -> Result<()> {
    let cfg = args::resolve_experiment(&a.data, &a.pipeline)?;
    if a.sweep_regimes {
        let dir = out_dir(root, a.out, format!("regimes-{}", cfg.pipeline.seed));
        return match a.pipeline.precision {
            Precision::F32 => run_regimes::<f32>(dir, &cfg, a.replicates),
            Precision::F64 => run_regimes::<f64>(dir, &cfg, a.replicates),
        };
    }
    let dir = out_dir(root, a.out, format!("run-{}", cfg.pipeline.seed));
    match a.pipeline.precision {
        Precision::F32 => run_single::<f32>(dir, &cfg, "f32"),
        Precision::F64 => run_single::<f64>(dir, &cfg, "f64"),
    }
}

fn scores_f64<T: Scalar>(m: &GcScoreMatrix<T>) -> ndarray::Array2<f64> {
    m.scores.mapv(|v| v.as_f64())
}

fn run_single<T: Scalar>(dir: PathBuf, cfg: &ExperimentConfig, precision: &str) -> Result<()> {
    let mut out = RunDir::create(dir)?;
    out.write_json("config.json", cfg)?;
    let res = run_experiment::<T>(cfg)?;
    let o = &res.outcome;
    out.write("model.json", o.model.to_json()? + "\n")?;
    out.write("scores.csv", o.scores.to_csv_string())?;
    let rows: Vec<Vec<f64>> = scores_f64(&o.scores).rows().into_iter().map(|r| r.to_vec()).collect();
    out.write_json(
        "scores.json",
        &serde_json::json!({
            "channel_names": o.scores.channel_names,
            "scores": rows,
            "passes": o.seeds.len(),
            "seeds_digest": seeds_digest(&o.seeds),
            "alpha": o.alpha,
            "regime": cfg.pipeline.train.regime,
            "precision": precision,
            "alpha_search": o.alpha_search,
            "standardization": o.standardization,
        }),
    )?;
    let mut history = String::from("epoch,train_loss,val_mse\n");
    for e in &o.history.epochs {
        history.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.val_mse));
    }
    out.write("history.csv", history)?;
    if let Some(truth) = &res.truth {
        out.write("truth.csv", truth.to_csv_string())?;
    }
    if let Some(m) = &res.metrics {
        let primary = m.primary();
        out.write_json(
            "metrics.json",
            &serde_json::json!({
                "auroc": primary.map(|r| r.auroc),
                "auprc": primary.map(|r| r.auprc),
                "include_diagonal": m.include_diagonal,
                "off_diagonal": m.off_diagonal,
                "with_diagonal": m.with_diagonal,
            }),
        )?;
        match primary {
            Some(r) => println!("AUROC {:.4}  AUPRC {:.4}", r.auroc, r.auprc),
            None => println!("metrics undefined: ground truth has a single class"),
        }
    }
    let title = format!("scores, {} (rows: effect, columns: cause)", cfg.pipeline.train.regime);
    out.write("heatmap.svg", render_heatmap(&scores_f64(&o.scores), &o.scores.channel_names, &title, None)?)?;
    let dir = out.finish("run", cfg, &res.timings)?;
    println!("{}", dir.display());
    Ok(())
}

fn run_regimes<T: Scalar>(dir: PathBuf, cfg: &ExperimentConfig, replicates: usize) -> Result<()> {
    let mut out = RunDir::create(dir)?;
    out.write_json("config.json", cfg)?;
    let rows = regime_sweep::<T>(cfg, &Regime::ALL, replicates)?;
    let table = regime_table_markdown(&rows);
    let mut csv = String::from("regime,auroc_mean,auroc_std,auprc_mean,auprc_std,runs,skipped\n");
    for r in &rows {
        let s = &r.summary;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.regime, s.auroc_mean, s.auroc_std, s.auprc_mean, s.auprc_std, s.runs, s.skipped
        ));
    }
    out.write("regimes.csv", csv)?;
    out.write("regimes.md", &table)?;
    out.write_json("regimes.json", &rows)?;
    print!("{table}");
    let dir = out.finish("run --sweep-regimes", cfg, &[])?;
    println!("{}", dir.display());
    Ok(())
}

fn sweep(root: &Path, a: SweepArgs) -> Result<()> {
    let cfg = args::resolve_experiment(&a.data, &a.pipeline)?;
    let grid = a.grid.clone().unwrap_or_else(|| SPARSITY_GRID.to_vec());
    let dir = out_dir(root, a.out, format!("sweep-sparsity-{}", cfg.pipeline.seed));
    let mut out = RunDir::create(dir)?;
    out.write_json("config.json", &serde_json::json!({ "experiment": cfg, "grid": grid, "replicates": a.replicates }))?;
    let rows = match a.pipeline.precision {
        Precision::F32 => sparsity_sweep::<f32>(&cfg, &grid, a.replicates)?,
        Precision::F64 => sparsity_sweep::<f64>(&cfg, &grid, a.replicates)?,
    };
    let csv = sparsity_csv(&rows);
    out.write("sparsity.csv", &csv)?;
    let ok: Vec<_> = rows.iter().filter(|r| r.summary.runs > 0).collect();
    if !ok.is_empty() {
        let series = [
            LineSeries {
                name: "AUROC".into(),
                points: ok.iter().map(|r| (r.sparsity, r.summary.auroc_mean)).collect(),
            },
            LineSeries {
                name: "AUPRC".into(),
                points: ok.iter().map(|r| (r.sparsity, r.summary.auprc_mean)).collect(),
            },
        ];
        out.write("sparsity.svg", render_line_chart(&series, "metrics vs sparsity", "sparsity", "mean score")?)?;
    }
    print!("{csv}");
    let dir = out.finish("sweep-sparsity", &cfg, &[])?;
    println!("{}", dir.display());
    Ok(())
}

fn group(root: &Path, a: GroupArgs) -> Result<()> {
    let mut cfg = match &a.pipeline.config {
        Some(path) => args::read_json::<GroupConfig>(path)?,
        None => {
            let seed = a
                .pipeline
                .seed
                .ok_or_else(|| mcgc::Error::Config("--seed is required without --config".into()))?;
            GroupConfig::new(seed)
        }
    };
    a.pipeline.apply(&mut cfg.pipeline)?;
    if let Some(t) = a.threshold {
        cfg.threshold = t;
    }
    if let Some(c) = &a.curve {
        cfg.curve_thresholds = c.clone();
    }
    let groups = load_group_dir(&a.data).context("loading subjects")?;
    let dir = out_dir(root, a.out, format!("group-{}", cfg.pipeline.seed));
    match a.pipeline.precision {
        Precision::F32 => group_typed::<f32>(dir, &cfg, groups),
        Precision::F64 => group_typed::<f64>(dir, &cfg, groups),
    }
}

fn diff_code(d: EdgeDifference) -> i8 {
    match d {
        EdgeDifference::Same => 0,
        EdgeDifference::OnlyInA => 1,
        EdgeDifference::OnlyInB => -1,
    }
}

fn group_typed<T: Scalar>(dir: PathBuf, cfg: &GroupConfig, groups: Vec<Group<f64>>) -> Result<()> {
    let groups: Vec<Group<T>> = groups
        .into_iter()
        .map(|g| Group {
            name: g.name,
            subjects: g
                .subjects
                .into_iter()
                .map(|s| Subject {
                    name: s.name,
                    series: s.series.cast(),
                })
                .collect(),
        })
        .collect();
    let mut out = RunDir::create(dir)?;
    out.write_json("config.json", cfg)?;
    let res = group_analysis(&groups, cfg)?;
    let mut curves = Vec::new();
    for g in &res.groups {
        for (name, m) in &g.subjects {
            out.write(&format!("{}/subjects/{name}.csv", g.name), m.to_csv_string())?;
        }
        out.write(&format!("{}/mean.csv", g.name), g.mean.to_csv_string())?;
        out.write(&format!("{}/binary.csv", g.name), g.binary.to_csv_string())?;
        out.write(&format!("{}/curve.csv", g.name), g.curve.to_csv_string())?;
        let title = format!("group {} mean scores", g.name);
        out.write(
            &format!("{}/mean.svg", g.name),
            render_heatmap(&scores_f64(&g.mean), &g.mean.channel_names, &title, None)?,
        )?;
        curves.push(LineSeries {
            name: g.name.clone(),
            points: g
                .curve
                .thresholds
                .iter()
                .zip(&g.curve.counts)
                .map(|(&t, &c)| (t, c as f64))
                .collect(),
        });
    }
    out.write(
        "curves.svg",
        render_line_chart(&curves, "connections vs threshold", "threshold", "connections")?,
    )?;
    for (a, b, mask) in &res.differences {
        let (ga, gb) = (&res.groups[*a], &res.groups[*b]);
        let stem = format!("diff-{}-vs-{}", ga.name, gb.name);
        let mut csv = String::new();
        for row in mask.rows() {
            let cells: Vec<String> = row.iter().map(|&d| diff_code(d).to_string()).collect();
            csv.push_str(&cells.join(","));
            csv.push('\n');
        }
        out.write(&format!("{stem}.csv"), csv)?;
        let binary = ga.binary.entries().mapv(f64::from);
        let title = format!("{} > {} (outlined: differs from {})", ga.name, cfg.threshold, gb.name);
        out.write(
            &format!("{stem}.svg"),
            render_heatmap(&binary, &ga.mean.channel_names, &title, Some(mask))?,
        )?;
        let n = mask.iter().filter(|d| **d != EdgeDifference::Same).count();
        println!("{} vs {}: {n} differing edges", ga.name, gb.name);
    }
    let dir = out.finish("group-analysis", cfg, &[])?;
    println!("{}", dir.display());
    Ok(())
}

fn read_scores(path: &Path) -> Result<GcScoreMatrix<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(GcScoreMatrix::from_csv_str(&text).with_context(|| path.display().to_string())?)
}

fn read_curve(path: &Path) -> Result<ThresholdCurve> {
    let mut reader = csv::ReaderBuilder::new().from_path(path)?;
    let mut curve = ThresholdCurve {
        thresholds: Vec::new(),
        counts: Vec::new(),
    };
    for (line, rec) in reader.deserialize::<(f64, usize)>().enumerate() {
        let (t, c) = rec.map_err(|e| mcgc::Error::Parse {
            path: path.display().to_string(),
            line: line + 2,
            msg: e.to_string(),
        })?;
        curve.thresholds.push(t);
        curve.counts.push(c);
    }
    Ok(curve)
}

fn render(a: RenderArgs) -> Result<()> {
    let svg = if let Some(curve) = &a.curve {
        let c = read_curve(curve)?;
        let series = [LineSeries {
            name: "connections".into(),
            points: c.thresholds.iter().zip(&c.counts).map(|(&t, &n)| (t, n as f64)).collect(),
        }];
        let title = a.title.clone().unwrap_or_else(|| "connections vs threshold".into());
        render_line_chart(&series, &title, "threshold", "connections")?
    } else {
        let path = a.scores.as_ref().expect("clap enforces --scores");
        let m = read_scores(path)?;
        let overlay = match &a.compare {
            Some(other) => {
                let b = read_scores(other)?;
                let (ta, tb): (AdjacencyMatrix, AdjacencyMatrix) =
                    (threshold_matrix(&m, a.threshold)?, threshold_matrix(&b, a.threshold)?);
                Some(difference_mask(&ta, &tb)?)
            }
            None => None,
        };
        let title = a.title.clone().unwrap_or_else(|| path.display().to_string());
        render_heatmap(&m.scores, &m.channel_names, &title, overlay.as_ref())?
    };
    if let Some(parent) = a.out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    mcgc::svg::write_svg(&a.out, &svg)?;
    println!("{}", a.out.display());
    Ok(())
}
