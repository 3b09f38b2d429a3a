use mcgc::evaluation::EdgeDifference;
use mcgc::experiment::{
    fit_and_extract, group_analysis, load_group_dir, run_experiment, DatasetSpec, ExperimentConfig, GroupConfig,
    PipelineConfig,
};
use mcgc::generators::{write_dataset, GeneratorSpec, TriadSpec, TriadStructure, VarSpec};

fn triad(structure: TriadStructure, seed: u64) -> GeneratorSpec {
    GeneratorSpec::Triad(TriadSpec::new(structure, 1000, seed))
}

#[test]
fn chain_edges_outrank_absent_edges() {
    let spec = triad(TriadStructure::Chain, 0);
    let (series, truth) = spec.generate::<f64>().unwrap();
    let out = fit_and_extract(&series, &PipelineConfig::new(0)).unwrap();
    // rows are effects: X <- Z and Y <- X
    let (x, y, z) = (0, 1, 2);
    let present = [out.scores.score(z, x), out.scores.score(x, y)];
    for cause in 0..3 {
        for effect in 0..3 {
            if cause != effect && !truth.has_edge(cause, effect) {
                let s = out.scores.score(cause, effect);
                assert!(present.iter().all(|&p| p > s), "absent {cause}->{effect} scored {s}, edges {present:?}");
            }
        }
    }
}

#[test]
fn single_precision_pipeline_runs() {
    let mut cfg = ExperimentConfig::new(DatasetSpec::Synthetic { generator: triad(TriadStructure::Fork, 1) }, 1);
    cfg.pipeline.passes = 20;
    let res = run_experiment::<f32>(&cfg).unwrap();
    let m = res.metrics.unwrap();
    assert!(m.off_diagonal.unwrap().auroc > 0.5);
    assert!(res.outcome.scores.scores.iter().all(|s| (0.0..=1.0).contains(s)));
}

#[test]
fn csv_dataset_matches_synthetic_run() {
    let dir = tempfile::tempdir().unwrap();
    let spec = GeneratorSpec::Var(VarSpec::new(4, 2, 400, 0.3, 5));
    let (series, truth) = spec.generate::<f64>().unwrap();
    write_dataset(dir.path(), &spec, &series, &truth).unwrap();

    let mut synthetic = ExperimentConfig::new(DatasetSpec::Synthetic { generator: spec }, 3);
    synthetic.pipeline.train.epochs = 20;
    synthetic.pipeline.passes = 20;
    let mut from_csv = synthetic.clone();
    from_csv.dataset = DatasetSpec::Csv {
        path: dir.path().join("series.csv"),
        adjacency: Some(dir.path().join("adjacency.csv")),
    };
    let a = run_experiment::<f64>(&synthetic).unwrap();
    let b = run_experiment::<f64>(&from_csv).unwrap();
    assert_eq!(a.outcome.scores.scores, b.outcome.scores.scores);
    assert_eq!(a.metrics, b.metrics);
}

#[test]
fn small_sample_run_completes() {
    let spec = GeneratorSpec::Var(VarSpec::new(15, 2, 200, 0.2, 0));
    let mut cfg = ExperimentConfig::new(DatasetSpec::Synthetic { generator: spec }, 0);
    cfg.pipeline.passes = 30;
    let res = run_experiment::<f64>(&cfg).unwrap();
    assert_eq!(res.outcome.scores.size(), 15);
    assert!(res.metrics.unwrap().off_diagonal.is_some());
}

#[test]
fn group_directory_analysis() {
    let dir = tempfile::tempdir().unwrap();
    for group in ["control", "patient"] {
        for (k, seed) in [11u64, 12].iter().enumerate() {
            let (series, _) = triad(TriadStructure::Collider, *seed).generate::<f64>().unwrap();
            let path = dir.path().join(group).join(format!("s{k}.csv"));
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            mcgc::data::write_series_csv(&series.slice(0, 400).unwrap(), &path).unwrap();
        }
    }
    let groups = load_group_dir(dir.path()).unwrap();
    assert_eq!(groups.len(), 2);
    assert_eq!(groups[1].subjects[0].name, "s0");
    let mut cfg = GroupConfig::new(0);
    cfg.pipeline.train.epochs = 30;
    cfg.pipeline.passes = 20;
    let res = group_analysis(&groups, &cfg).unwrap();
    assert!(res.differences[0].2.iter().all(|d| *d == EdgeDifference::Same));
    let curve = &res.groups[0].curve;
    assert!(curve.counts.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn empty_group_directory_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(load_group_dir(dir.path()).unwrap_err().is_config());
    std::fs::create_dir(dir.path().join("g")).unwrap();
    assert!(load_group_dir(dir.path()).unwrap_err().is_config());
}
