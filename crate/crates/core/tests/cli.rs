use std::fs;
use std::path::Path;

use sbm_twosample::cli::{run, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use sbm_twosample::ingest::{format_similarity_csv, read_edge_list, read_labels, SimilarityMatrix};
use serde_json::Value;
use tempfile::tempdir;

fn sbm2s(args: &[&str]) -> i32 {
    run(std::iter::once("sbm2s").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_writes_graph_and_labels() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("g.edges");
    let code = sbm2s(&[
        "generate",
        "--n",
        "600",
        "--k",
        "3",
        "--r",
        "0.1",
        "--boost",
        "2",
        "--pi",
        "uniform",
        "--seed",
        "7",
        "--out",
        p(&out),
    ]);
    assert_eq!(code, EXIT_OK);
    let g = read_edge_list(&out).unwrap();
    assert_eq!(g.n(), 600);
    assert!(
        (g.density() - 0.5 / 3.0).abs() < 0.01,
        "density {}",
        g.density()
    );
    assert_eq!(read_labels(dir.path().join("g.labels")).unwrap().k(), 3);
}

#[test]
fn usage_and_data_errors_have_distinct_codes() {
    let dir = tempdir().unwrap();
    assert_eq!(
        sbm2s(&["generate", "--n", "60", "--k", "3", "--r", "0.1"]),
        EXIT_USAGE
    );
    assert_eq!(sbm2s(&["no-such-command"]), EXIT_USAGE);
    let out = dir.path().join("g.edges");
    assert_eq!(
        sbm2s(&[
            "generate",
            "--n",
            "60",
            "--k",
            "3",
            "--r",
            "0.4",
            "--boost",
            "2",
            "--out",
            p(&out)
        ]),
        EXIT_DATA
    );
    assert_eq!(sbm2s(&["generate", "--help"]), EXIT_OK);
}

#[test]
fn test_command_reports_and_mismatched_sizes_fail() {
    let dir = tempdir().unwrap();
    let (x, y, z) = (
        dir.path().join("x.edges"),
        dir.path().join("y.edges"),
        dir.path().join("z.edges"),
    );
    for (path, seed, blocks) in [
        (&x, "1", "100,100"),
        (&y, "2", "100,100"),
        (&z, "3", "90,90"),
    ] {
        assert_eq!(
            sbm2s(&[
                "generate",
                "--blocks",
                blocks,
                "--k",
                "2",
                "--r",
                "0.1",
                "--seed",
                seed,
                "--out",
                p(path)
            ]),
            EXIT_OK
        );
    }
    let report = dir.path().join("t.json");
    let gx = dir.path().join("x.labels");
    let gy = dir.path().join("y.labels");
    let code = sbm2s(&[
        "test",
        "--x",
        p(&x),
        "--y",
        p(&y),
        "--gx",
        p(&gx),
        "--gy",
        p(&gy),
        "--bootstrap",
        "20",
        "--report",
        p(&report),
    ]);
    assert_eq!(code, EXIT_OK);
    let json: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["test"]["outcome"], "tested");
    assert!(json["bootstrap"]["t_boot"].is_f64());
    assert_eq!(
        sbm2s(&[
            "test",
            "--x",
            p(&x),
            "--y",
            p(&z),
            "--k",
            "2",
            "--report",
            p(&report)
        ]),
        EXIT_DATA
    );
    assert_eq!(
        sbm2s(&["test", "--x", p(&x), "--y", p(&y), "--report", p(&report)]),
        EXIT_USAGE
    );
}

#[test]
fn reports_are_reproducible() {
    let dir = tempdir().unwrap();
    let x = dir.path().join("x.edges");
    sbm2s(&[
        "generate",
        "--blocks",
        "60,60",
        "--k",
        "2",
        "--r",
        "0.1",
        "--seed",
        "4",
        "--out",
        p(&x),
    ]);
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for out in [&a, &b] {
        assert_eq!(
            sbm2s(&[
                "select-k",
                "--in",
                p(&x),
                "--kmax",
                "3",
                "--seed",
                "9",
                "--report",
                p(out)
            ]),
            EXIT_OK
        );
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let config = dir.path().join("c.toml");
    fs::write(&config, "scenario = \"size\"\nn = [60]\nk = [2]\nr = [0.1]\nreplications = 4\nbootstrap_replicates = 5\nuse_true_labels = true\n").unwrap();
    let (o1, o2) = (dir.path().join("o1"), dir.path().join("o2"));
    for out in [&o1, &o2] {
        assert_eq!(
            sbm2s(&[
                "simulate",
                "--config",
                p(&config),
                "--out",
                p(out),
                "--seed",
                "3"
            ]),
            EXIT_OK
        );
    }
    for file in ["report.json", "report.csv"] {
        assert_eq!(
            fs::read(o1.join(file)).unwrap(),
            fs::read(o2.join(file)).unwrap()
        );
    }
    let csv = fs::read_to_string(o1.join("report.csv")).unwrap();
    assert!(csv.starts_with("scenario,K,r,n,statistic,rejection_rate,se,replications,alpha,seed\n"));
}

#[test]
fn preprocess_correlations() {
    let dir = tempdir().unwrap();
    let n = 6;
    // nodes 0..3 correlate at 0.5 (s' = 0.75), everything else at 0 (s' = 0.5)
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        1.0
                    } else if i < 3 && j < 3 {
                        0.5
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let csv = format_similarity_csv(&SimilarityMatrix::from_rows(&rows).unwrap());
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    fs::write(&a, &csv).unwrap();
    fs::write(&b, &csv).unwrap();
    let (xa, xb, kept) = (
        dir.path().join("xa.edges"),
        dir.path().join("xb.edges"),
        dir.path().join("kept.txt"),
    );
    let code = sbm2s(&[
        "preprocess",
        "--mode",
        "corr",
        "--tau",
        "0.72",
        "--min-total-degree",
        "4",
        "--in",
        p(&a),
        p(&b),
        "--out",
        p(&xa),
        p(&xb),
        "--kept",
        p(&kept),
    ]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(fs::read_to_string(&kept).unwrap(), "1\n2\n3\n");
    assert_eq!(read_edge_list(&xa).unwrap().edge_count(), 3);
    assert_eq!(
        sbm2s(&[
            "preprocess",
            "--mode",
            "corr",
            "--min-total-degree",
            "99",
            "--in",
            p(&a),
            p(&b),
            "--out",
            p(&xa),
            p(&xb)
        ]),
        EXIT_DATA
    );
}
