use std::path::Path;
use std::process::Command;

use netum::bench::{parse_csv, parse_json};
use netum::{emit_report, run_bench, BenchConfig, GridCell, ReportFormat, ResultFile};

fn num(args: &[&str]) -> i32 {
    let out = Command::new(env!("CARGO_BIN_EXE_num"))
        .args(args)
        .output()
        .unwrap();
    out.status.code().unwrap()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn without_time(path: &str) -> serde_json::Value {
    let mut v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("wall_time_ms");
    v
}

#[test]
fn gen_solve_oracle_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let inst = p(dir.path(), "inst.json");
    let gen = [
        "gen",
        "--n",
        "4",
        "--m",
        "2",
        "--p",
        "0.5",
        "--b-min",
        "0.5",
        "--b-max",
        "1.5",
        "--utility",
        "log",
        "--seed",
        "3",
    ];
    assert_eq!(num(&[&gen[..], &["--out", &inst]].concat()), 0);
    let again = p(dir.path(), "again.json");
    assert_eq!(num(&[&gen[..], &["--out", &again]].concat()), 0);
    assert_eq!(
        std::fs::read(&inst).unwrap(),
        std::fs::read(&again).unwrap()
    );

    let orc = p(dir.path(), "oracle.json");
    assert_eq!(num(&["oracle", "--problem", &inst, "--out", &orc]), 0);
    let exact: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&orc).unwrap()).unwrap();
    let best = exact["value"].as_f64().unwrap();

    let em = p(dir.path(), "em.json");
    assert_eq!(
        num(&[
            "solve",
            "--algo",
            "em",
            "--problem",
            &inst,
            "--eps",
            "1e-4",
            "--out",
            &em
        ]),
        0
    );
    let r: ResultFile = serde_json::from_str(&std::fs::read_to_string(&em).unwrap()).unwrap();
    assert!((r.utility.unwrap() - best).abs() < 1e-4);
    assert!(r.lambda.is_some() && r.certificate_support.unwrap() > 0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let inst = p(dir.path(), "inst.json");
    assert_eq!(
        num(&[
            "gen", "--n", "3", "--m", "2", "--b-min", "0.5", "--b-max", "1.5", "--seed", "1",
            "--out", &inst
        ]),
        0
    );
    let out = p(dir.path(), "r.json");
    assert_eq!(
        num(&[
            "solve",
            "--algo",
            "md2",
            "--problem",
            &inst,
            "--eps",
            "0.01",
            "--max-iters",
            "10",
            "--out",
            &out
        ]),
        3
    );
    assert_eq!(
        num(&[
            "solve",
            "--algo",
            "md2",
            "--problem",
            &p(dir.path(), "missing.json"),
            "--eps",
            "0.01",
            "--out",
            &out
        ]),
        2
    );
    assert_eq!(
        num(&[
            "solve",
            "--algo",
            "md2",
            "--problem",
            &inst,
            "--eps",
            "-1",
            "--out",
            &out
        ]),
        2
    );
    assert_eq!(
        num(&[
            "solve",
            "--algo",
            "md1",
            "--problem",
            &inst,
            "--eps",
            "0.01",
            "--mode",
            "standard",
            "--out",
            &out
        ]),
        2
    );
    assert_eq!(
        num(&[
            "solve",
            "--algo",
            "nope",
            "--problem",
            &inst,
            "--eps",
            "0.01",
            "--out",
            &out
        ]),
        2
    );
    let big = p(dir.path(), "big.json");
    assert_eq!(
        num(&["gen", "--n", "8", "--m", "3", "--seed", "1", "--out", &big]),
        0
    );
    assert_eq!(num(&["oracle", "--problem", &big, "--out", &out]), 4);
}

#[test]
fn solve_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let inst = p(dir.path(), "inst.json");
    assert_eq!(
        num(&[
            "gen", "--n", "5", "--m", "3", "--b-min", "0.5", "--b-max", "1.5", "--seed", "8",
            "--out", &inst
        ]),
        0
    );
    for (algo, eps) in [("md1", "0.02"), ("md2", "0.01"), ("em", "1e-3")] {
        let (a, b) = (p(dir.path(), "a.json"), p(dir.path(), "b.json"));
        for out in [&a, &b] {
            assert_eq!(
                num(&[
                    "solve",
                    "--algo",
                    algo,
                    "--problem",
                    &inst,
                    "--eps",
                    eps,
                    "--out",
                    out
                ]),
                0
            );
        }
        assert_eq!(without_time(&a), without_time(&b), "{algo}");
    }
}

#[test]
fn bench_reports_round_trip() {
    let mut cfg = BenchConfig::new(vec![
        GridCell {
            n: 6,
            m: 4,
            eps: 0.01,
        },
        GridCell {
            n: 6,
            m: 8,
            eps: 0.01,
        },
    ]);
    cfg.b_min = 0.5;
    cfg.b_max = 1.5;
    cfg.repetitions = 2;
    let records = run_bench(&cfg, 2).unwrap();
    assert_eq!(records.len(), 8);
    assert!(records.iter().all(|r| r.error.is_none()));
    assert_eq!(
        parse_csv(&emit_report(&records, ReportFormat::Csv).unwrap()).unwrap(),
        records
    );
    assert_eq!(
        parse_json(&emit_report(&records, ReportFormat::Json).unwrap()).unwrap(),
        records
    );
    let table = emit_report(&records, ReportFormat::Markdown).unwrap();
    assert!(table.contains("| A2 | Iter |") && table.contains("| EM | Iter |"));

    let dir = tempfile::tempdir().unwrap();
    let conf = p(dir.path(), "cfg.json");
    std::fs::write(&conf, serde_json::to_string(&cfg).unwrap()).unwrap();
    let out = p(dir.path(), "t.csv");
    assert_eq!(
        num(&["bench", "--config", &conf, "--format", "csv", "--out", &out]),
        0
    );
    let from_cli = parse_csv(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(from_cli.len(), 8);
    for (a, b) in from_cli.iter().zip(&records) {
        assert_eq!(
            (a.n, a.m, a.seed, a.algorithm, a.iterations),
            (b.n, b.m, b.seed, b.algorithm, b.iterations)
        );
    }
}
