use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn taskcp(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_taskcp"));
    cmd.args(args);
    for (k, _) in std::env::vars() {
        if k.starts_with("TASKCP_") {
            cmd.env_remove(k);
        }
    }
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn ok(cmd: &mut Command) -> String {
    let out = run(cmd);
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(cmd: &mut Command) -> i32 {
    run(cmd).status.code().expect("exit code")
}

fn generate_small(dir: &Path) {
    ok(taskcp(&[
        "generate",
        "--n",
        "200",
        "--samples-p",
        "8",
        "--seed",
        "3",
        "--out",
    ])
    .arg(dir));
}

/// Header comment lines and the parsed body of a TSV table.
fn read_tsv(path: &Path) -> (Vec<String>, Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut lines = text.lines();
    let mut comments = Vec::new();
    let header = loop {
        let l = lines.next().expect("header line");
        match l.strip_prefix("# ") {
            Some(c) => comments.push(c.to_string()),
            None => break l.split('\t').map(String::from).collect(),
        }
    };
    let rows = lines
        .map(|l| l.split('\t').map(String::from).collect())
        .collect();
    (comments, header, rows)
}

fn column<'a>(header: &[String], rows: &'a [Vec<String>], name: &str) -> Vec<&'a str> {
    let i = header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("column {name}"));
    rows.iter().map(|r| r[i].as_str()).collect()
}

#[test]
fn generate_writes_one_file_per_round() {
    let tmp = TempDir::new().unwrap();
    generate_small(tmp.path());
    assert!(tmp.path().join("problem.json").is_file());
    for k in 1..=4 {
        let text = fs::read_to_string(tmp.path().join(format!("round_{k}.jsonl"))).unwrap();
        let records = text
            .lines()
            .filter(|l| !l.starts_with('#') && !l.is_empty())
            .count();
        assert_eq!(records, 200, "round {k}");
        assert!(text.contains("# n = 200 [flag]"));
    }
    assert!(!tmp.path().join("round_5.jsonl").exists());
}

#[test]
fn generate_is_byte_reproducible() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    generate_small(a.path());
    ok(taskcp(&[
        "--workers",
        "3",
        "generate",
        "--n",
        "200",
        "--samples-p",
        "8",
        "--seed",
        "3",
        "--out",
    ])
    .arg(b.path()));
    for name in ["problem.json", "round_1.jsonl", "round_4.jsonl"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn invalid_settings_exit_with_config_status() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(
        code(taskcp(&["generate", "--n", "0", "--out"]).arg(tmp.path())),
        2
    );
    assert_eq!(code(&mut taskcp(&["generate", "--bogus"])), 2);
    generate_small(tmp.path());
    let out = tmp.path().join("mr");
    for tau in ["0", "-1", "nan"] {
        let status = code(
            taskcp(&["multiround", "--tau", tau, "--data"])
                .arg(tmp.path())
                .arg("--out")
                .arg(&out),
        );
        assert_eq!(status, 2, "tau {tau}");
    }
    let status = code(
        taskcp(&["montecarlo", "--alpha", "1.5", "--data"])
            .arg(tmp.path())
            .arg("--out")
            .arg(&out),
    );
    assert_eq!(status, 2);
}

#[test]
fn missing_dataset_exits_with_io_status() {
    let tmp = TempDir::new().unwrap();
    let status = code(
        taskcp(&["montecarlo", "--data"])
            .arg(tmp.path().join("absent"))
            .arg("--out")
            .arg(tmp.path().join("out")),
    );
    assert_eq!(status, 3);
}

#[test]
fn montecarlo_outputs_summary_histograms_and_sweep() {
    let tmp = TempDir::new().unwrap();
    generate_small(tmp.path());
    let out = tmp.path().join("mc");
    ok(taskcp(&[
        "montecarlo",
        "--trials",
        "50",
        "--alpha",
        "0.05",
        "--p-sweep",
        "2,8",
        "--data",
    ])
    .arg(tmp.path())
    .arg("--out")
    .arg(&out));

    let (comments, header, rows) = read_tsv(&out.join("summary.tsv"));
    assert!(comments.contains(&"target_coverage = 0.95 [default]".to_string()));
    assert!(comments.contains(&"alpha = 0.05 [flag]".to_string()));
    assert!(comments.contains(&"data.samples_p = 8 [dataset]".to_string()));
    assert_eq!(rows.len(), 3 * 4);
    assert!(column(&header, &rows, "target_coverage")
        .iter()
        .all(|&c| c == "0.95"));

    for m in ["ar", "lwr", "cqr"] {
        for k in 1..=4 {
            let (_, h, r) = read_tsv(&out.join(format!("trials_{m}_round{k}.tsv")));
            assert_eq!(r.len(), 50);
            assert!(h.contains(&"empirical_coverage".to_string()));
            assert!(out.join(format!("hist_{m}_round{k}.tsv")).is_file());
        }
    }

    let (_, header, rows) = read_tsv(&out.join("psweep.tsv"));
    assert_eq!(rows.len(), 3 * 2);
    assert_eq!(column(&header, &rows, "samples_p")[..2], ["2", "8"]);
}

#[test]
fn ar_stops_every_sample_at_the_same_round() {
    let tmp = TempDir::new().unwrap();
    generate_small(tmp.path());
    let out = tmp.path().join("mr");
    ok(taskcp(&["multiround", "--method", "ar", "--data"])
        .arg(tmp.path())
        .arg("--out")
        .arg(&out));
    let (_, header, rows) = read_tsv(&out.join("outcomes_ar.tsv"));
    let lengths = column(&header, &rows, "length");
    assert!(lengths.iter().all(|&l| l == lengths[0]), "AR lengths vary");
    let finals = column(&header, &rows, "final_round");
    assert!(
        finals.iter().all(|&k| k == finals[0]),
        "AR stopping rounds vary"
    );
    assert!(!out.join("outcomes_lwr.tsv").exists());
}

#[test]
fn multiround_large_tau_stops_every_sample_at_round_one() {
    let tmp = TempDir::new().unwrap();
    generate_small(tmp.path());
    let out = tmp.path().join("mr");
    ok(taskcp(&["multiround", "--tau", "10", "--data"])
        .arg(tmp.path())
        .arg("--out")
        .arg(&out));
    let (_, header, rows) = read_tsv(&out.join("multiround_summary.tsv"));
    assert_eq!(rows.len(), 3);
    assert!(column(&header, &rows, "average_acceleration")
        .iter()
        .all(|&a| a == "8"));
    assert!(column(&header, &rows, "exhausted_fraction")
        .iter()
        .all(|&a| a == "0"));
    let (_, header, rows) = read_tsv(&out.join("outcomes_lwr.tsv"));
    assert!(column(&header, &rows, "final_round")
        .iter()
        .all(|&k| k == "1"));
}

#[test]
fn multiround_tiny_tau_exhausts_every_sample() {
    let tmp = TempDir::new().unwrap();
    generate_small(tmp.path());
    let out = tmp.path().join("mr");
    ok(
        taskcp(&["multiround", "--tau", "1e-9", "--method", "cqr", "--data"])
            .arg(tmp.path())
            .arg("--out")
            .arg(&out),
    );
    let (_, header, rows) = read_tsv(&out.join("multiround_summary.tsv"));
    assert_eq!(column(&header, &rows, "exhausted_fraction"), ["1"]);
    assert_eq!(column(&header, &rows, "average_acceleration"), ["1"]);
}

#[test]
fn flag_beats_env_beats_file() {
    let tmp = TempDir::new().unwrap();
    generate_small(tmp.path());
    let cfg = tmp.path().join("cfg.toml");
    fs::write(
        &cfg,
        "trials = 7\nalpha = 0.2\ncal_fraction = 0.6\nmethod = [\"ar\"]\n",
    )
    .unwrap();
    let out = tmp.path().join("mc");
    ok(taskcp(&["montecarlo", "--alpha", "0.3", "--config"])
        .arg(&cfg)
        .arg("--data")
        .arg(tmp.path())
        .arg("--out")
        .arg(&out)
        .env("TASKCP_ALPHA", "0.25")
        .env("TASKCP_CAL_FRACTION", "0.5"));
    let (comments, _, rows) = read_tsv(&out.join("summary.tsv"));
    for line in [
        "alpha = 0.3 [flag]",
        "cal_fraction = 0.5 [env]",
        "trials = 7 [file]",
        "method = ar [file]",
        "seed = 0 [default]",
    ] {
        assert!(
            comments.contains(&line.to_string()),
            "missing {line:?} in {comments:?}"
        );
    }
    assert_eq!(rows.len(), 4);
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("cfg.toml");
    fs::write(&cfg, "alpah = 0.2\n").unwrap();
    let status = code(
        taskcp(&["generate", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(tmp.path()),
    );
    assert_eq!(status, 2);
}

#[test]
fn json_output_carries_the_same_rows() {
    let tmp = TempDir::new().unwrap();
    generate_small(tmp.path());
    let tsv = tmp.path().join("tsv");
    let json = tmp.path().join("json");
    for (dir, fmt) in [(&tsv, "tsv"), (&json, "json")] {
        ok(
            taskcp(&["montecarlo", "--trials", "20", "--format", fmt, "--data"])
                .arg(tmp.path())
                .arg("--out")
                .arg(dir),
        );
    }
    let (_, header, rows) = read_tsv(&tsv.join("summary.tsv"));
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(json.join("summary.json")).unwrap()).unwrap();
    assert_eq!(doc["columns"].as_array().unwrap().len(), header.len());
    assert_eq!(doc["rows"].as_array().unwrap().len(), rows.len());
    assert_eq!(doc["config"]["trials"]["source"], "flag");
}

#[test]
fn help_lists_subcommands() {
    let text = ok(&mut taskcp(&["--help"]));
    for sub in ["generate", "montecarlo", "multiround", "validate"] {
        assert!(text.contains(sub), "{sub}");
    }
}
