use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use midm::store;

fn midm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_midm"))
        .args(args)
        .env_remove("MIDM_THREADS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_owned()
}

fn synth(dir: &Path, prefix: &str, dim: usize, rho: f64, n: usize, seed: u64) -> (String, String) {
    let (x, y) = (p(dir, &format!("{prefix}_x.emb")), p(dir, &format!("{prefix}_y.emb")));
    let o = midm(&[
        "synth", "--dim", &dim.to_string(), "--rho", &rho.to_string(), "--n", &n.to_string(),
        "--seed", &seed.to_string(), "--out-x", &x, "--out-y", &y,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    (x, y)
}

fn aggregate(report: &str, key: &str) -> f64 {
    let block = report.split("# aggregate\n").nth(1).unwrap();
    block
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}\t")))
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn independent_pairs_score_near_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = synth(dir.path(), "ind", 1, 0.0, 100_000, 7);
    let model = p(dir.path(), "m.mid");
    let o = midm(&["fit", "--x", &x, "--y", &y, "--out", &model]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = p(dir.path(), "r.tsv");
    let o = midm(&["mid", "--model", &model, "--x", &x, "--y", &y, "--report", &report]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(aggregate(&text, "mid").abs() <= 0.02);
    assert_eq!(aggregate(&text, "n"), 100_000.0);
    assert!(text.starts_with("# pmi\nindex\tpmi\n0\t"));
    assert!(Path::new(&format!("{report}.manifest.toml")).exists());
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = midm(&["fit", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage:"));
    let o = midm(&[]);
    assert_eq!(o.status.code(), Some(1));
    let o = midm(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("shuffle-curve"));
}

#[test]
fn mismatched_counts_name_both() {
    let dir = tempfile::tempdir().unwrap();
    let (x, _) = synth(dir.path(), "a", 2, 0.5, 30, 1);
    let (_, y) = synth(dir.path(), "b", 2, 0.5, 20, 1);
    let o = midm(&["fit", "--x", &x, "--y", &y, "--out", &p(dir.path(), "m.mid")]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("30") && err.contains("20"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn data_and_numeric_errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = p(dir.path(), "bad.emb");
    std::fs::write(&bad, b"NOPE").unwrap();
    let o = midm(&["fit", "--x", &bad, "--y", &bad, "--out", &p(dir.path(), "m.mid")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not an EMB1 file"));

    let tied = p(dir.path(), "tied.tsv");
    std::fs::write(&tied, "a\t1\t2\nb\t1\t3\nc\t1\t4\n").unwrap();
    let o = midm(&["corr", "--judgments", &tied, "--tau", "b"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    let o = midm(&["fit", "--x", &bad, "--y", &bad, "--out", "m", "--eps", "-1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn outputs_are_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = synth(dir.path(), "d", 3, 0.7, 5000, 3);
    let model = p(dir.path(), "m.mid");
    assert!(midm(&["fit", "--x", &x, "--y", &y, "--out", &model]).status.success());
    let run = |threads: &str| {
        let o = midm(&["--threads", threads, "mid", "--model", &model, "--x", &x, "--y", &y]);
        assert!(o.status.success());
        o.stdout
    };
    let one = run("1");
    assert_eq!(one, run("4"));
    assert_eq!(one, run("1"));

    let curve = |threads: &str| {
        midm(&[
            "--threads", threads, "shuffle-curve", "--model", &model, "--x", &x, "--y", &y,
            "--seed", "5", "--repeats", "3",
        ])
        .stdout
    };
    assert_eq!(curve("1"), curve("3"));

    let env_run = Command::new(env!("CARGO_BIN_EXE_midm"))
        .args(["mid", "--model", &model, "--x", &x, "--y", &y])
        .env("MIDM_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(env_run.stdout, one);
    let bad_env = Command::new(env!("CARGO_BIN_EXE_midm"))
        .args(["mid", "--model", &model, "--x", &x, "--y", &y])
        .env("MIDM_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(bad_env.status.code(), Some(1));
}

#[test]
fn pmi_modes_agree_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = synth(dir.path(), "p", 2, 0.6, 1000, 4);
    let model = p(dir.path(), "m.mid");
    assert!(midm(&["fit", "--x", &x, "--y", &y, "--out", &model]).status.success());
    let report = stdout(&midm(&["mid", "--model", &model, "--x", &x, "--y", &y]));
    let row3: f64 = report.lines().nth(2 + 3).unwrap().split('\t').nth(1).unwrap().parse().unwrap();
    let o = midm(&["pmi", "--model", &model, "--x", &x, "--y", &y, "--row", "3"]);
    assert_eq!(stdout(&o).trim().parse::<f64>().unwrap(), row3);

    let xs = store::read_embeddings(&x).unwrap();
    let ys = store::read_embeddings(&y).unwrap();
    let join = |v: &[f64]| v.iter().map(|f| format!("{f:e}")).collect::<Vec<_>>().join(",");
    let o = midm(&[
        "pmi", "--model", &model, "--x-vec", &join(xs.data().row(3)), "--y-vec", &join(ys.data().row(3)),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim().parse::<f64>().unwrap(), row3);

    let o = midm(&["pmi", "--model", &model, "--x-vec", "1,2,3", "--y-vec", "1,2"]);
    assert_eq!(o.status.code(), Some(2));
    let o = midm(&["pmi", "--model", &model]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn fit_from_manifest_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "ref", 2, 0.5, 400, 8);
    let manifest = dir.path().join("run.toml");
    std::fs::write(
        &manifest,
        "schema_version = 1\nepsilon = 0.001\n\n[reference]\nx = \"ref_x.emb\"\ny = \"ref_y.emb\"\n",
    )
    .unwrap();
    let model = p(dir.path(), "m.mid");
    let m = manifest.to_str().unwrap();
    let o = midm(&["fit", "--manifest", m, "--out", &model]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(store::load_model(&model).unwrap().epsilon(), 1e-3);

    let o = midm(&["fit", "--manifest", m, "--set", "epsilon=0.002", "--out", &model]);
    assert!(o.status.success());
    assert_eq!(store::load_model(&model).unwrap().epsilon(), 2e-3);

    let o = midm(&["fit", "--manifest", m, "--set", "epsilon=0.002", "--eps", "0", "--out", &model]);
    assert!(o.status.success());
    assert_eq!(store::load_model(&model).unwrap().epsilon(), 0.0);

    let o = midm(&["fit", "--manifest", m, "--set", "colour=blue", "--out", &model]);
    assert_eq!(o.status.code(), Some(1));
}

fn write_lines(dir: &Path, name: &str, values: &[f64]) -> String {
    let path = p(dir, name);
    let text: String = values.iter().map(|v| format!("{v}\n")).collect();
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn accuracy_and_correlation_commands() {
    let dir = tempfile::tempdir().unwrap();
    let gt = write_lines(dir.path(), "gt.txt", &[3.0, 2.0, 1.0, 5.0]);
    let foil = write_lines(dir.path(), "foil.txt", &[1.0, 2.0, 4.0, 0.0]);
    let out = stdout(&midm(&["foil-acc", "--gt", &gt, "--foil", &foil]));
    assert!(out.starts_with("foil_accuracy\t0.625\n"), "{out}");
    let o = midm(&["foil-acc", "--gt", &gt, "--foil", &foil, "--tie", "random"]);
    assert_eq!(o.status.code(), Some(1));
    let o = midm(&["foil-acc", "--gt", &gt, "--foil", &foil, "--tie", "random", "--seed", "1"]);
    assert!(o.status.success());

    let fake = write_lines(dir.path(), "fake.txt", &[2.0, 3.0, 0.5, 1.0]);
    let out = stdout(&midm(&["reason-acc", "--real", &gt, "--fake", &fake, "--foiled", &foil]));
    assert!(out.starts_with("reasoning_accuracy\t0.5\n"), "{out}");

    let judg = p(dir.path(), "j.tsv");
    std::fs::write(&judg, "id\tscore\tjudgment\n0\t0.1\t1\n1\t0.4\t2\n2\t0.3\t3\n3\t0.9\t4\n").unwrap();
    let out = stdout(&midm(&["corr", "--judgments", &judg, "--tau", "b"]));
    // pairs: 5 concordant, 1 discordant
    assert!(out.starts_with(&format!("tau_b\t{}\n", 4.0 / 6.0)), "{out}");
    let scores = write_lines(dir.path(), "s.txt", &[4.0, 3.0, 2.0, 1.0]);
    let out = stdout(&midm(&["corr", "--judgments", &judg, "--scores", &scores]));
    assert!(out.starts_with("tau_b\t-1\n"), "{out}");
}

#[test]
fn baselines_run_on_files() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = synth(dir.path(), "b", 4, 0.8, 200, 2);
    let (_, refs) = synth(dir.path(), "r", 4, 0.8, 400, 3);
    let model = p(dir.path(), "m.mid");
    assert!(midm(&["fit", "--x", &x, "--y", &y, "--out", &model]).status.success());
    for metric in ["clip-s", "infonce"] {
        let o = midm(&["baseline", "--metric", metric, "--x", &x, "--y", &y]);
        assert!(o.status.success(), "{metric}: {}", stderr(&o));
        assert_eq!(aggregate(&stdout(&o), "n"), 200.0);
    }
    let o = midm(&["baseline", "--metric", "refclip-s", "--x", &x, "--y", &y, "--refs", &refs, "--refs-per-item", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = midm(&["baseline", "--metric", "refclip-s", "--x", &x, "--y", &y, "--refs", &refs]);
    assert_eq!(o.status.code(), Some(2));
    let o = midm(&[
        "baseline", "--metric", "refmid", "--x", &x, "--y", &y, "--refs", &refs, "--refs-per-item", "2",
        "--model", &model,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let o = midm(&["baseline", "--metric", "rprec", "--x", &x, "--y", &y]);
    assert_eq!(o.status.code(), Some(1));
    let rprec = |seed: &str| stdout(&midm(&["baseline", "--metric", "rprec", "--x", &x, "--y", &y, "--seed", seed]));
    let acc = aggregate(&rprec("4"), "mean");
    assert!(acc > 0.05 && acc <= 1.0, "{acc}");
    assert_eq!(rprec("4"), rprec("4"));

    let o = midm(&["baseline", "--metric", "fid", "--x", &x, "--y", &x]);
    assert_eq!(stdout(&o), "fid\t0\n");
}

#[test]
fn curve_commands_write_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = synth(dir.path(), "c", 2, 0.8, 2000, 6);
    let model = p(dir.path(), "m.mid");
    assert!(midm(&["fit", "--x", &x, "--y", &y, "--out", &model]).status.success());
    let curve = p(dir.path(), "curve.tsv");
    let o = midm(&["shuffle-curve", "--model", &model, "--x", &x, "--y", &y, "--seed", "1", "--out", &curve]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&curve).unwrap();
    assert_eq!(text.lines().next(), Some("x\tvalue\tstderr"));
    assert_eq!(text.lines().count(), 6);
    let side = std::fs::read_to_string(format!("{curve}.manifest.toml")).unwrap();
    let m = midm::Manifest::parse(&side).unwrap();
    assert_eq!(m.seed, Some(1));
    assert_eq!(m.epsilon, 5e-4);
    assert!(m.input_digests.contains_key("model"));

    let o = midm(&["shuffle-curve", "--model", &model, "--x", &x, "--y", &y]);
    assert_eq!(o.status.code(), Some(1), "seed is required");

    // judged items: rows of a second synthetic set, judgment = row parity
    let (ix, iy) = synth(dir.path(), "items", 2, 0.5, 40, 9);
    let judg = p(dir.path(), "j.tsv");
    let rows: String = (0..40).map(|i| format!("{i}\t0\t{}\n", i % 2 + 1)).collect();
    std::fs::write(&judg, rows).unwrap();
    let out = p(dir.path(), "pars.tsv");
    let o = midm(&[
        "parsimony", "--ref-x", &x, "--ref-y", &y, "--x", &ix, "--y", &iy, "--judgments", &judg,
        "--fractions", "0.5,1", "--repeats", "2", "--seed", "3", "--out", &out,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 3);
    assert!(PathBuf::from(format!("{out}.manifest.toml")).exists());
}
