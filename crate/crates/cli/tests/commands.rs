mod common;

use std::io::BufReader;

use aggnet::inference::read_draws;
use aggnet::simulate::{aggregate, NetworkRealization};
use aggnet::NetworkKind;
use common::*;

const EXIT_USAGE: i32 = 2;
const EXIT_CONFIG: i32 = 3;
const EXIT_IO: i32 = 4;
const EXIT_VALIDATION: i32 = 5;

#[test]
fn simulate_writes_consistent_files() {
    let fx = Fixture::new(0.5, "");
    let out = fx.simulate("sim");
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let sim = fx.path("sim");
    for f in ["edges.txt", "labels.txt", "aggregate.csv", "sizes.csv", "truth.toml"] {
        assert!(sim.join(f).exists(), "{f} missing");
    }
    let (header, rows) = csv_rows(&sim.join("aggregate.csv"));
    assert_eq!(header, ["group", "0", "1", "2", "3"]);
    assert_eq!(rows.len(), 4);
    let (_, sizes) = csv_rows(&sim.join("sizes.csv"));
    assert_eq!(sizes.iter().map(|r| r[1] as usize).collect::<Vec<_>>(), [12, 20, 15, 25]);
    let labels = read(&sim.join("labels.txt"));
    assert_eq!(labels.lines().filter(|l| !l.starts_with('#')).count(), 72);

    // node-level files aggregate to the aggregate file
    let net = NetworkRealization::read(
        BufReader::new(std::fs::File::open(sim.join("edges.txt")).unwrap()),
        BufReader::new(std::fs::File::open(sim.join("labels.txt")).unwrap()),
        NetworkKind::DIRECTED,
    )
    .unwrap();
    let y = aggregate(&net).unwrap();
    for (a, row) in rows.iter().enumerate() {
        for b in 0..4 {
            assert_eq!(y.get(a, b) as f64, row[b + 1]);
        }
    }
    let truth = read(&sim.join("truth.toml"));
    assert!(truth.contains("theta = 0.5") && truth.contains("seed = 11"), "{truth}");
}

#[test]
fn zero_propensity_gives_empty_aggregate() {
    let fx = Fixture::new(0.0, "");
    assert_eq!(code(&fx.simulate("sim")), 0);
    let (_, rows) = csv_rows(&fx.path("sim").join("aggregate.csv"));
    assert!(rows.iter().all(|r| r[1..].iter().all(|&c| c == 0.0)));
    assert_eq!(read(&fx.path("sim").join("edges.txt")).lines().count(), 1);
}

#[test]
fn simulate_is_deterministic_and_seed_overrides() {
    let fx = Fixture::new(0.5, "");
    fx.simulate("a");
    fx.simulate("b");
    assert_eq!(snapshot(&fx.path("a")), snapshot(&fx.path("b")));
    let out = run(&["simulate", "--config", p(&fx.config), "--out", p(&fx.path("c")), "--seed", "12"]);
    assert_eq!(code(&out), 0);
    assert_ne!(read(&fx.path("a").join("edges.txt")), read(&fx.path("c").join("edges.txt")));
    assert!(read(&fx.path("c").join("truth.toml")).contains("seed = 12"));
}

#[test]
fn fit_writes_schema_and_is_reproducible() {
    let fx = Fixture::new(0.5, QUICK_SAMPLER);
    fx.simulate("sim");
    let truth = fx.path("sim").join("truth.toml");
    let out = fx.fit("sim", "fit", &["--truth", p(&truth)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let fit = fx.path("fit");
    for f in [
        "chain_0.csv",
        "chain_1.csv",
        "selection.csv",
        "aligned.csv",
        "summary.csv",
        "map.csv",
        "fit_meta.toml",
        "truth.toml",
    ] {
        assert!(fit.join(f).exists(), "{f} missing");
    }
    let summary = read(&fit.join("summary.csv"));
    let names: Vec<&str> = summary.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names.iter().filter(|n| n.starts_with("mu_")).count(), 4 * 2);
    assert_eq!(names.iter().filter(|n| n.starts_with("sigma_")).count(), 4);
    assert!(names.contains(&"tau") && names.contains(&"theta"));
    let (_, rows) = csv_rows(&fit.join("summary.csv"));
    for r in &rows {
        assert!(r[3] <= r[2] && r[2] <= r[4], "median outside interval: {r:?}");
    }
    let (header, map) = csv_rows(&fit.join("map.csv"));
    assert_eq!(header, ["group", "x_0", "x_1", "radius"]);
    assert_eq!(map.len(), 4);

    let selection = read(&fit.join("selection.csv"));
    assert_eq!(selection.lines().filter(|l| l.ends_with(",true")).count(), 1);
    let meta = read(&fit.join("fit_meta.toml"));
    assert!(meta.contains("selected_chain") && meta.contains("gap"), "{meta}");

    // draw files round-trip byte for byte
    for f in ["aligned.csv", "chain_0.csv"] {
        let bytes = std::fs::read(fit.join(f)).unwrap();
        let table = read_draws(&bytes[..]).unwrap();
        assert_eq!(table.len(), 150);
        let mut again = Vec::new();
        table.write(&mut again).unwrap();
        assert_eq!(again, bytes);
    }

    let again = fx.fit("sim", "fit2", &["--truth", p(&truth)]);
    assert_eq!(code(&again), 0);
    assert_eq!(snapshot(&fit), snapshot(&fx.path("fit2")));
    let other = fx.fit("sim", "fit3", &["--seed", "6", "--chains", "3"]);
    assert_eq!(code(&other), 0);
    assert!(fx.path("fit3").join("chain_2.csv").exists());
    assert_ne!(read(&fit.join("summary.csv")), read(&fx.path("fit3").join("summary.csv")));
}

#[test]
fn fit_reports_inconsistent_inputs() {
    let fx = Fixture::new(0.5, QUICK_SAMPLER);
    fx.simulate("sim");
    let sim = fx.path("sim");
    write(&sim.join("sizes.csv"), "group,n\n0,12\n1,20\n2,15\n");
    let out = fx.fit("sim", "fit", &[]);
    assert_eq!(code(&out), EXIT_VALIDATION);
    assert!(stderr(&out).contains("4 groups") && stderr(&out).contains("lists 3"), "{}", stderr(&out));
    assert!(!fx.path("fit").exists());

    // more edges than possible
    write(&sim.join("sizes.csv"), "group,n\n0,1\n1,1\n2,1\n3,1\n");
    let out = fx.fit("sim", "fit", &[]);
    assert_eq!(code(&out), EXIT_VALIDATION, "{}", stderr(&out));

    // truth sizes that disagree with the data
    write(&sim.join("sizes.csv"), "group,n\n0,12\n1,20\n2,15\n3,26\n");
    let out = fx.fit("sim", "fit", &["--truth", p(&sim.join("truth.toml"))]);
    assert_eq!(code(&out), EXIT_VALIDATION);
    assert!(stderr(&out).contains("truth sizes"), "{}", stderr(&out));
}

#[test]
fn undirected_asymmetry_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    write(&cfg, "[model]\ndirected = false\n[sampler]\nchains = 1\nwarmup = 10\nsamples = 100\n");
    write(&dir.path().join("agg.csv"), "group,0,1\n0,1,2\n1,3,1\n");
    write(&dir.path().join("sizes.csv"), "group,n\n0,5\n1,5\n");
    let out = run(&[
        "fit",
        "--config",
        p(&cfg),
        "--out",
        p(&dir.path().join("fit")),
        "--aggregate",
        p(&dir.path().join("agg.csv")),
        "--sizes",
        p(&dir.path().join("sizes.csv")),
    ]);
    assert_eq!(code(&out), EXIT_VALIDATION);
    assert!(stderr(&out).contains("Y[0,1] = 2 but Y[1,0] = 3"), "{}", stderr(&out));
}

#[test]
fn config_and_io_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let missing = dir.path().join("missing.toml");
    assert_eq!(code(&run(&["simulate", "--config", p(&missing), "--out", p(&out_dir)])), EXIT_IO);

    let bad = dir.path().join("bad.toml");
    write(&bad, "[model]\nq = 0\n");
    assert_eq!(code(&run(&["simulate", "--config", p(&bad), "--out", p(&out_dir)])), EXIT_CONFIG);
    write(&bad, "[model]\nq = 2\n");
    let out = run(&["simulate", "--config", p(&bad), "--out", p(&out_dir)]);
    assert_eq!(code(&out), EXIT_CONFIG);
    assert!(stderr(&out).contains("[truth]"));
    write(&bad, "[data]\naggregate = \"nowhere.csv\"\nsizes = \"nowhere.csv\"\n");
    assert_eq!(code(&run(&["fit", "--config", p(&bad), "--out", p(&out_dir)])), EXIT_CONFIG);
    write(&bad, "[model]\nq = 2\n");
    let out = run(&["fit", "--config", p(&bad), "--out", p(&out_dir)]);
    assert_eq!(code(&out), EXIT_CONFIG, "{}", stderr(&out));

    let fx = Fixture::new(0.5, "");
    assert_eq!(code(&fx.simulate("sim")), 0);
    write(&fx.path("sim").join("aggregate.csv"), "group,0,1,2,3\n0,1,x,3,4\n");
    assert_eq!(code(&fx.fit("sim", "fit", &[])), EXIT_IO);

    // an output path below a regular file cannot be created
    let blocker = dir.path().join("file");
    write(&blocker, "");
    let out = fx.simulate("sim2");
    assert_eq!(code(&out), 0);
    let out = run(&["simulate", "--config", p(&fx.config), "--out", p(&blocker.join("sub"))]);
    assert_eq!(code(&out), EXIT_IO);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(code(&run(&[])), EXIT_USAGE);
    assert_eq!(code(&run(&["frobnicate"])), EXIT_USAGE);
    assert_eq!(code(&run(&["simulate"])), EXIT_USAGE);
    assert_eq!(code(&run(&["fit", "--config", "x", "--chains", "0"])), EXIT_USAGE);
    assert_eq!(code(&run(&["validate", "--out", "x", "--seed", "9223372036854775808"])), EXIT_USAGE);
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
}

#[test]
fn validate_passes_and_detects_injected_fault() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good");
    let out = run(&["validate", "--out", p(&good)]);
    let report = read(&good.join("validation_report.txt"));
    assert_eq!(code(&out), 0, "{report}");
    assert!(report.contains("PASS total variation"), "{report}");
    assert!(report.contains("all checks passed"));
    assert!(!report.contains("FAIL"));

    let bad = dir.path().join("bad");
    let out = run(&["validate", "--out", p(&bad), "--inject-fault", "table-coefficient"]);
    assert_eq!(code(&out), EXIT_VALIDATION);
    let report = read(&bad.join("validation_report.txt"));
    assert!(report.contains("FAIL table[directed n_a=4 n_b=None]"), "{report}");
    assert!(stderr(&out).contains("table"));
}

#[test]
fn export_plots_tables() {
    let fx = Fixture::new(0.5, QUICK_SAMPLER);
    fx.simulate("sim");
    let truth = fx.path("sim").join("truth.toml");
    assert_eq!(code(&fx.fit("sim", "fit", &["--truth", p(&truth)])), 0);
    assert_eq!(code(&fx.fit("sim", "fit_no_truth", &[])), 0);

    let plots = fx.path("plots");
    let out = run(&["export-plots", "--fit-dir", p(&fx.path("fit")), "--out", p(&plots), "--bins", "12"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let (header, centres) = csv_rows(&plots.join("centres.csv"));
    assert_eq!(centres.len(), 150);
    assert_eq!(header.len(), 1 + 4 * 2);

    let (_, hist) = csv_rows(&plots.join("theta_hist.csv"));
    assert_eq!(hist.len(), 12);
    assert_eq!(hist.iter().map(|r| r[2]).sum::<f64>(), 150.0);
    let area: f64 = hist.iter().map(|r| r[3] * (r[1] - r[0])).sum();
    assert!((area - 1.0).abs() < 1e-9);

    let (header, sigma) = csv_rows(&plots.join("sigma.csv"));
    assert_eq!(header.last().unwrap(), "truth");
    assert_eq!(sigma.iter().map(|r| r[5]).collect::<Vec<_>>(), [0.3, 0.5, 0.2, 0.4]);

    let meta = read(&fx.path("fit").join("fit_meta.toml"));
    let d: f64 = meta
        .lines()
        .find_map(|l| l.strip_prefix("edge_density = "))
        .unwrap()
        .parse()
        .unwrap();
    let (_, contour) = csv_rows(&plots.join("contour.csv"));
    assert!(!contour.is_empty());
    for r in &contour {
        let e = r[0] / (1.0 + 2.0 * r[1] * r[1]);
        assert!((e - d).abs() < 1e-9, "{r:?} vs {d}");
    }
    let (_, tt) = csv_rows(&plots.join("theta_tau.csv"));
    assert_eq!(tt.len(), 150);
    for r in &tt {
        assert!((r[3] - r[1] / (1.0 + 2.0 * r[2] * r[2])).abs() < 1e-12);
    }
    let (_, circles) = csv_rows(&plots.join("circles.csv"));
    assert_eq!(circles.len(), 4);
    assert!(circles.iter().all(|r| r[3] > 0.0));

    let bare = fx.path("plots_bare");
    let out = run(&["export-plots", "--fit-dir", p(&fx.path("fit_no_truth")), "--out", p(&bare)]);
    assert_eq!(code(&out), 0);
    let (header, _) = csv_rows(&bare.join("sigma.csv"));
    assert_eq!(header, ["group", "mean", "median", "lower", "upper"]);

    // idempotent
    let again = fx.path("plots_again");
    run(&["export-plots", "--fit-dir", p(&fx.path("fit")), "--out", p(&again), "--bins", "12"]);
    assert_eq!(snapshot(&plots), snapshot(&again));
}

#[test]
fn export_plots_needs_a_fit() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["export-plots", "--fit-dir", p(dir.path()), "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&out), EXIT_IO);
    assert!(stderr(&out).contains("fit_meta.toml"));
}
