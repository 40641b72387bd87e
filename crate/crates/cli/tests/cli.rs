use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bliss_cli::artifacts::{self, EstimateFile, Manifest};
use bliss_cli::commands::evaluate_files;
use bliss_cli::ingest::ingest_dataset;
use bliss_cli::{CliError, IngestError};
use bliss_core::estimate::heatmap_from_draws;
use bliss_core::simulate::{generate, Shape, SimConfig};
use bliss_core::{default_hyperparameters, run_gibbs, GibbsConfig, IntervalSet, Span, TimeGrid};
use proptest::prelude::*;

fn bliss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bliss")).args(args).output().unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn ingestion_errors_carry_locations() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let curves = write(d, "c.csv", "0,0.5,1,1.5\n1,2,3,4\n5,6,7,8\n9,10,11,12\n");
    let y3 = write(d, "y3.csv", "1\n2\n3\n");
    let ds = ingest_dataset(&curves, &y3).unwrap();
    assert_eq!((ds.n(), ds.p()), (3, 4));

    let y2 = write(d, "y2.csv", "1\n2\n");
    match ingest_dataset(&curves, &y2) {
        Err(CliError::Ingest(IngestError::DimensionMismatch { curves: 3, outcomes: 2 })) => {}
        other => panic!("unexpected {other:?}"),
    }

    let bad_grid = write(d, "g.csv", "0.0,0.2,0.1\n1,2,3\n2,3,4\n");
    let out = bliss(&["fit", "--curves", &path(d, "g.csv"), "--y", &path(d, "y2.csv"), "--K", "1", "--out", &path(d, "o")]);
    assert_eq!(out.status.code(), Some(3));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("column 3"), "{msg}");
    drop(bad_grid);

    write(d, "n.csv", "0,1,2\n1,2,3\n1,oops,3\n");
    let out = bliss(&["fit", "--curves", &path(d, "n.csv"), "--y", &path(d, "y2.csv"), "--K", "1", "--out", &path(d, "o")]);
    assert_eq!(out.status.code(), Some(3));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("row 3, column 2"), "{msg}");
}

#[test]
fn exit_codes_separate_error_kinds() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let sim = bliss(&["simulate", "--shape", "step", "--r", "5", "--zeta", "1", "--n", "20", "--p", "15", "--out", &path(d, "data")]);
    assert!(sim.status.success());
    let fit = |k: &str| {
        bliss(&[
            "fit", "--curves", &path(d, "data/curves.csv"), "--y", &path(d, "data/y.csv"), "--K", k, "--iters", "50",
            "--sann-iters", "100", "--out", &path(d, "fit"),
        ])
    };
    assert_eq!(fit("0").status.code(), Some(2));
    assert!(fit("1").status.success());
    assert_eq!(bliss(&["simulate", "--shape", "bogus", "--r", "5", "--zeta", "1", "--out", &path(d, "x")]).status.code(), Some(2));
    let tiny = bliss(&["simulate", "--dataset", "1", "--p", "10", "--marginal-sd", "1e-200", "--out", &path(d, "x")]);
    assert_eq!(tiny.status.code(), Some(4));
}

#[test]
fn gamma_list_gives_nested_supports_and_evaluations() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert!(bliss(&["simulate", "--dataset", "1", "--n", "40", "--p", "25", "--seed", "2", "--out", &path(d, "data")]).status.success());
    let out = bliss(&[
        "fit", "--curves", &path(d, "data/curves.csv"), "--y", &path(d, "data/y.csv"), "--K", "3", "--iters", "800",
        "--gamma", "0.3", "0.5", "0.7", "--sann-iters", "2000", "--out", &path(d, "fit"),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let support = |g: &str| match artifacts::read_estimate(&d.join(format!("fit/support_gamma_{g}.csv"))).unwrap() {
        EstimateFile::Support(s) => s,
        other => panic!("unexpected {other:?}"),
    };
    let (s3, s5, s7) = (support("0.3"), support("0.5"), support("0.7"));
    assert!(s5.difference_measure(&s3) < 1e-12);
    assert!(s7.difference_measure(&s5) < 1e-12);

    let truth = d.join("data/truth.json");
    let e = evaluate_files(&d.join("fit/support_gamma_0.5.csv"), &truth).unwrap();
    assert!(e.l2_error.is_none() && e.support_error >= 0.0);
    let e = evaluate_files(&d.join("fit/beta_l2.csv"), &truth).unwrap();
    assert!(e.l2_error.unwrap() > 0.0);
    let e = evaluate_files(&d.join("fit/stepwise_pieces.csv"), &truth).unwrap();
    let curve = evaluate_files(&d.join("fit/stepwise.csv"), &truth).unwrap();
    assert!((e.l2_error.unwrap() - curve.l2_error.unwrap()).abs() < 1e-12);

    let printed = bliss(&["evaluate", "--estimate", &path(d, "fit/beta_l2.csv"), "--truth", &path(d, "data/truth.json")]);
    let v: serde_json::Value = serde_json::from_slice(&printed.stdout).unwrap();
    assert!(v["l2_error"].as_f64().is_some());

    let m = artifacts::read_manifest(&d.join("fit/manifest.json")).unwrap();
    assert_eq!(m.gammas, vec![0.3, 0.5, 0.7]);
    assert!(m.args.iter().any(|a| a == "--gamma"));
    // chain, alpha, three supports, beta_l2, stepwise curve and pieces, heat map
    assert_eq!(m.artifacts.len(), 9);
}

#[test]
fn small_dataset_shape_fits() {
    // 45 grid points and 13 observations
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = SimConfig::new(Shape::Smooth, 3.0, 1.0, 13, 45, 4);
    let (ds, _) = generate(&cfg).unwrap();
    artifacts::write_curve_table(&d.join("c.csv"), ds.grid(), ds.curves()).unwrap();
    artifacts::write_outcomes(&d.join("y.csv"), ds.outcomes()).unwrap();
    let back = ingest_dataset(&d.join("c.csv"), &d.join("y.csv")).unwrap();
    assert_eq!(back, ds);
    let out = bliss(&["fit", "--curves", &path(d, "c.csv"), "--y", &path(d, "y.csv"), "--K", "2", "--iters", "400", "--sann-iters", "1000", "--out", &path(d, "fit")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn empty_bench_writes_header_only_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(d, "b.toml", "# nothing to run\n");
    let out = bliss(&["bench", "--config", &path(d, "b.toml"), "--out", &path(d, "o")]);
    assert!(out.status.success());
    for t in ["table1.csv", "table2.csv", "table3.csv"] {
        let text = std::fs::read_to_string(d.join("o").join(t)).unwrap();
        assert_eq!(text.lines().count(), 1, "{t}");
    }
    write(d, "bad.toml", "datasets = [30]\n");
    assert_eq!(bliss(&["bench", "--config", &path(d, "bad.toml"), "--out", &path(d, "o")]).status.code(), Some(2));
}

#[test]
fn json_artifacts_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let (ds, truth) = generate(&SimConfig::new(Shape::Spiky, 1.0, 0.2, 20, 12, 3)).unwrap();
    let hp = default_hyperparameters(&ds, 2).unwrap();
    let chain = run_gibbs(&ds, &hp, &GibbsConfig::new(60, 10, 2, 1).unwrap()).unwrap();
    artifacts::write_chain(&d.join("chain.json"), ds.grid(), &chain).unwrap();
    let back = artifacts::read_chain(&d.join("chain.json")).unwrap();
    assert_eq!(back.chain, chain);
    assert_eq!(&back.grid, ds.grid());

    artifacts::write_truth(&d.join("truth.json"), &truth).unwrap();
    assert_eq!(artifacts::read_truth(&d.join("truth.json")).unwrap(), truth);

    let draws: Vec<Vec<f64>> = (0..7).map(|s| (0..12).map(|j| ((s * 12 + j) as f64).sin()).collect()).collect();
    let map = heatmap_from_draws(&draws, ds.grid(), 16, None).unwrap();
    artifacts::write_heatmap(&d.join("h.json"), &map).unwrap();
    assert_eq!(artifacts::read_heatmap(&d.join("h.json")).unwrap(), map);

    let mut m = Manifest::new("fit", vec!["bliss".into()], 9);
    m.hyperparameters = Some(hp);
    m.timings.insert("gibbs".into(), 0.125);
    artifacts::write_manifest(&d.join("m.json"), &m).unwrap();
    assert_eq!(artifacts::read_manifest(&d.join("m.json")).unwrap(), m);

    // a chain file is not a manifest
    assert!(matches!(artifacts::read_manifest(&d.join("chain.json")), Err(CliError::Data(_))));
    // no temporary files remain
    assert!(std::fs::read_dir(d).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().starts_with('.')));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn curve_tables_round_trip(
        steps in prop::collection::vec(1e-6f64..10.0, 1..12),
        start in -100.0f64..100.0,
        rows in 0usize..5,
        seed in any::<u64>(),
    ) {
        let mut t = vec![start];
        for s in &steps {
            t.push(t.last().unwrap() + s);
        }
        prop_assume!(t.windows(2).all(|w| w[1] > w[0]));
        let grid = TimeGrid::new(t.clone()).unwrap();
        let values: Vec<Vec<f64>> = (0..rows)
            .map(|r| (0..t.len()).map(|j| f64::from_bits(seed.wrapping_mul(r as u64 + 1) ^ j as u64) % 1e6).map(|v| if v.is_finite() { v } else { 0.0 }).collect())
            .collect();
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("t.csv");
        artifacts::write_curve_table(&p, &grid, &values).unwrap();
        let (g, back) = artifacts::read_curve_table(&p).unwrap();
        prop_assert_eq!(g.points(), grid.points());
        prop_assert_eq!(back, values);
    }

    #[test]
    fn support_files_round_trip(spans in prop::collection::vec((0.0f64..1.0, 1e-6f64..0.3), 0..6)) {
        let set = IntervalSet::from_spans(spans.into_iter().map(|(a, l)| Span::new(a, a + l)));
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("s.csv");
        artifacts::write_support(&p, &set).unwrap();
        prop_assert_eq!(artifacts::read_estimate(&p).unwrap(), EstimateFile::Support(set));
    }
}
