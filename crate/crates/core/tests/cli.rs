//! End-to-end tests of the command-line pipeline: simulate, screen,
//! knockoff-filter, cluster, evaluate, plus the exit-code contract.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn mmscreen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmscreen"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Small high-signal dataset used across tests.
fn simulate_small(dir: &Path, seed: u64) {
    let out = mmscreen(&[
        "simulate",
        "--layout",
        "square",
        "--n",
        "225",
        "--k",
        "5",
        "--p",
        "120",
        "--s",
        "20",
        "--signal",
        "high",
        "--fold-high",
        "4",
        "--seed",
        &seed.to_string(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "simulate failed: {}", String::from_utf8_lossy(&out.stderr));
    for f in ["matrix.tsv", "coords.tsv", "domains.tsv", "truth_genes.txt", "manifest.txt"] {
        assert!(dir.join(f).exists(), "missing {f}");
    }
}

#[test]
fn simulate_screen_evaluate_round_trip() {
    let tmp = tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    simulate_small(&data, 7);

    let out = mmscreen(&[
        "knockoff",
        "--matrix",
        data.join("matrix.tsv").to_str().unwrap(),
        "--coords",
        data.join("coords.tsv").to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
        "--q0",
        "0.05",
        "--seed",
        "7",
        "--cluster-k",
        "5",
    ]);
    assert_eq!(code(&out), 0, "knockoff failed: {}", String::from_utf8_lossy(&out.stderr));
    assert!(run.join("genes.tsv").exists());
    assert!(run.join("summary.txt").exists());
    assert!(run.join("labels.tsv").exists());

    // screening metrics against the generator's truth
    let out = mmscreen(&[
        "evaluate",
        "--report",
        run.join("genes.tsv").to_str().unwrap(),
        "--truth-genes",
        data.join("truth_genes.txt").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let metric = |name: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{name}=")))
            .unwrap_or_else(|| panic!("{name} missing in {text}"))
            .parse()
            .unwrap()
    };
    assert!(metric("power") >= 0.8, "power too low: {text}");
    assert!(metric("fdr") <= 0.2, "fdr too high: {text}");
    assert!(metric("auprc") >= 0.9, "auprc too low: {text}");

    // clustering accuracy against the generator's domains
    let out = mmscreen(&[
        "evaluate",
        "--pred",
        run.join("labels.tsv").to_str().unwrap(),
        "--truth",
        data.join("domains.tsv").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let ari: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("ari="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(ari > 0.7, "ari too low: {text}");
}

#[test]
fn rerun_reproduces_outputs_bit_identically() {
    let tmp = tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate_small(&data, 11);

    let run_once = |out_dir: &Path, threads: &str| {
        let out = mmscreen(&[
            "knockoff",
            "--matrix",
            data.join("matrix.tsv").to_str().unwrap(),
            "--coords",
            data.join("coords.tsv").to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--seed",
            "3",
            "--cluster-k",
            "5",
            "--threads",
            threads,
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    };
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    run_once(&a, "1");
    run_once(&b, "1");
    run_once(&c, "4");

    for f in ["genes.tsv", "labels.tsv"] {
        let fa = fs::read(a.join(f)).unwrap();
        let fb = fs::read(b.join(f)).unwrap();
        let fc = fs::read(c.join(f)).unwrap();
        assert_eq!(fa, fb, "{f} differs between identical runs");
        assert_eq!(fa, fc, "{f} differs across thread counts");
    }
    // summary identical except the timing line and the echoed thread count
    let strip = |p: &Path| -> String {
        fs::read_to_string(p.join("summary.txt"))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("wall_time_s=") && !l.starts_with("threads="))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(strip(&a), strip(&c));
}

#[test]
fn screen_without_knockoff_reports_statistics_only() {
    let tmp = tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate_small(&data, 13);

    let run = tmp.path().join("run");
    let out = mmscreen(&[
        "screen",
        "--matrix",
        data.join("matrix.tsv").to_str().unwrap(),
        "--coords",
        data.join("coords.tsv").to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(run.join("genes.tsv")).unwrap();
    assert_eq!(report.lines().next().unwrap(), "gene_id\tmm_stat");
    let summary = fs::read_to_string(run.join("summary.txt")).unwrap();
    assert!(!summary.contains("threshold="), "no threshold without knockoff");

    // the explicit flag on the knockoff command behaves the same
    let run2 = tmp.path().join("run2");
    let out = mmscreen(&[
        "knockoff",
        "--no-knockoff",
        "--matrix",
        data.join("matrix.tsv").to_str().unwrap(),
        "--coords",
        data.join("coords.tsv").to_str().unwrap(),
        "--out",
        run2.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let report2 = fs::read_to_string(run2.join("genes.tsv")).unwrap();
    assert_eq!(report, report2);
}

#[test]
fn sparse_matrix_pipeline_matches_dense() {
    let tmp = tempdir().unwrap();
    let dense_dir = tmp.path().join("dense");
    let sparse_dir = tmp.path().join("sparse");
    simulate_small(&dense_dir, 17);
    let out = mmscreen(&[
        "simulate",
        "--layout",
        "square",
        "--n",
        "225",
        "--k",
        "5",
        "--p",
        "120",
        "--s",
        "20",
        "--signal",
        "high",
        "--fold-high",
        "4",
        "--seed",
        "17",
        "--sparse",
        "--out",
        sparse_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);

    let screen = |matrix: &Path, format: &str, out_dir: &Path| {
        let coords = matrix.parent().unwrap().join("coords.tsv");
        let out = mmscreen(&[
            "screen",
            "--matrix",
            matrix.to_str().unwrap(),
            "--format",
            format,
            "--coords",
            coords.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--seed",
            "5",
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        fs::read(out_dir.join("genes.tsv")).unwrap()
    };
    let a = screen(&dense_dir.join("matrix.tsv"), "dense", &tmp.path().join("ra"));
    let b = screen(
        &sparse_dir.join("matrix.sparse.tsv"),
        "sparse",
        &tmp.path().join("rb"),
    );
    assert_eq!(a, b, "dense and sparse encodings must screen identically");
}

#[test]
fn cluster_subcommand_runs_on_gene_list() {
    let tmp = tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate_small(&data, 19);
    let out_dir = tmp.path().join("cl");
    let out = mmscreen(&[
        "cluster",
        "--matrix",
        data.join("matrix.tsv").to_str().unwrap(),
        "--genes",
        data.join("truth_genes.txt").to_str().unwrap(),
        "--k",
        "5",
        "--seed",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let (ids, labels) = mmscreen_lib_labels(&out_dir.join("labels.tsv"));
    assert_eq!(ids.len(), 225);
    assert!(labels.iter().all(|&l| l < 5));
}

fn mmscreen_lib_labels(path: &Path) -> (Vec<String>, Vec<usize>) {
    let text = fs::read_to_string(path).unwrap();
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for line in text.lines().skip(1) {
        let mut parts = line.split('\t');
        ids.push(parts.next().unwrap().to_string());
        labels.push(parts.next().unwrap().parse().unwrap());
    }
    (ids, labels)
}

#[test]
fn evaluate_identical_labels_prints_unit_ari() {
    let tmp = tempdir().unwrap();
    let labels = tmp.path().join("labels.tsv");
    fs::write(&labels, "spot_id\tcluster\ns0\t0\ns1\t1\ns2\t0\ns3\t2\n").unwrap();
    let out = mmscreen(&[
        "evaluate",
        "--pred",
        labels.to_str().unwrap(),
        "--truth",
        labels.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("ari=1"), "{text}");
    assert!(text.contains("hamming=0"), "{text}");
}

#[test]
fn bench_emits_table() {
    let out = mmscreen(&[
        "bench",
        "--scenario",
        "layout1-high",
        "--reps",
        "2",
        "--q0",
        "0.05",
        "--n",
        "100",
        "--k",
        "2",
        "--p",
        "40",
        "--s",
        "8",
        "--seed",
        "2",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("metric\tmean_x100\tsd_x100"), "{text}");
    assert!(text.lines().any(|l| l.starts_with("power\t")), "{text}");
    assert!(text.lines().any(|l| l.starts_with("fdr\t")), "{text}");
}

#[test]
fn exit_codes_follow_the_contract() {
    let tmp = tempdir().unwrap();

    // unknown flag -> usage error, exit 2
    let out = mmscreen(&["screen", "--definitely-not-a-flag"]);
    assert_eq!(code(&out), 2);

    // unknown subcommand -> exit 2
    let out = mmscreen(&["frobnicate"]);
    assert_eq!(code(&out), 2);

    // missing auxiliary space -> configuration error, exit 2
    let matrix = tmp.path().join("m.tsv");
    fs::write(&matrix, "spot_id\tg0\ns0\t1\ns1\t2\n").unwrap();
    let out = mmscreen(&[
        "screen",
        "--matrix",
        matrix.to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));

    // malformed matrix -> data error, exit 3
    let bad = tmp.path().join("bad.tsv");
    fs::write(&bad, "spot_id\tg0\ns0\tnot_a_number\n").unwrap();
    let coords = tmp.path().join("c.tsv");
    fs::write(&coords, "0\t0\n1\t0\n").unwrap();
    let out = mmscreen(&[
        "screen",
        "--matrix",
        bad.to_str().unwrap(),
        "--coords",
        coords.to_str().unwrap(),
        "--out",
        tmp.path().join("o2").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));

    // negative expression value -> data error, exit 3
    let neg = tmp.path().join("neg.tsv");
    fs::write(&neg, "spot_id\tg0\ns0\t1\ns1\t-2\n").unwrap();
    let out = mmscreen(&[
        "screen",
        "--matrix",
        neg.to_str().unwrap(),
        "--coords",
        coords.to_str().unwrap(),
        "--out",
        tmp.path().join("o3").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 1") && err.contains("column 0"), "{err}");

    // missing file -> data error, exit 3
    let out = mmscreen(&[
        "screen",
        "--matrix",
        tmp.path().join("absent.tsv").to_str().unwrap(),
        "--coords",
        coords.to_str().unwrap(),
        "--out",
        tmp.path().join("o4").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn config_file_reproduces_flag_run() {
    let tmp = tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate_small(&data, 23);

    let conf = tmp.path().join("run.conf");
    fs::write(
        &conf,
        format!(
            "matrix={}\ncoords={}\nq0=0.1\nseed=9\nk_components=2\n",
            data.join("matrix.tsv").display(),
            data.join("coords.tsv").display()
        ),
    )
    .unwrap();

    let via_config = tmp.path().join("via_config");
    let out = mmscreen(&[
        "knockoff",
        "--config",
        conf.to_str().unwrap(),
        "--out",
        via_config.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let via_flags = tmp.path().join("via_flags");
    let out = mmscreen(&[
        "knockoff",
        "--matrix",
        data.join("matrix.tsv").to_str().unwrap(),
        "--coords",
        data.join("coords.tsv").to_str().unwrap(),
        "--q0",
        "0.1",
        "--seed",
        "9",
        "--out",
        via_flags.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);

    assert_eq!(
        fs::read(via_config.join("genes.tsv")).unwrap(),
        fs::read(via_flags.join("genes.tsv")).unwrap()
    );
}
