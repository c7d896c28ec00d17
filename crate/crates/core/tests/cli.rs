mod common;

use common::config;
use std::collections::HashSet;
use std::path::Path;
use std::process::{Command, Output};
use vadlab::cli::plan::{ExperimentPlan, SweepAxes, ViewAxis};
use vadlab::net::Pipeline;
use vadlab::views::{ppm, Image};

fn vadlab(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_vadlab"));
    cmd.args(args)
        .env_remove("VADLAB_DATA_DIR")
        .env("RUST_LOG", "warn");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_json(path: &Path, text: &str) -> String {
    std::fs::write(path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn files_under(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_string_lossy().into_owned());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn train_writes_reproducible_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = write_json(
        &tmp.path().join("c.json"),
        &config(Pipeline::SslMv, "rot=0,180").to_json(),
    );
    let mut bodies = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let o = vadlab(
            &[
                "train",
                "--config",
                &cfg_path,
                "--out",
                out.to_str().unwrap(),
            ],
            &[],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(
            files_under(&out),
            vec![
                "checkpoint.json",
                "checkpoint.vadl",
                "config.json",
                "metrics.csv",
                "run.json"
            ]
        );
        bodies.push((
            std::fs::read(out.join("metrics.csv")).unwrap(),
            std::fs::read(out.join("checkpoint.vadl")).unwrap(),
        ));
    }
    assert_eq!(bodies[0], bodies[1]);
    let csv = String::from_utf8(bodies[0].0.clone()).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    assert_eq!(&bodies[0].1[..4], b"VADL");
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(Pipeline::Supervised, "identity");
    cfg.arch = Some(common::tiny_arch(1, 10));
    cfg.data = vadlab::train::DataSpec::Cifar10 {
        dir: Some(tmp.path().join("nowhere")),
        train_per_class: None,
        test_per_class: None,
        subset_seed: 0,
    };
    let missing = write_json(&tmp.path().join("m.json"), &cfg.to_json());
    let o = vadlab(
        &[
            "train",
            "--config",
            &missing,
            "--out",
            tmp.path().join("o").to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cifar10"));

    cfg.data = vadlab::train::DataSpec::Cifar10 {
        dir: None,
        train_per_class: None,
        test_per_class: None,
        subset_seed: 0,
    };
    let no_dir = write_json(&tmp.path().join("n.json"), &cfg.to_json());
    let o = vadlab(
        &[
            "train",
            "--config",
            &no_dir,
            "--out",
            tmp.path().join("o").to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("VADLAB_DATA_DIR"));

    let bad = write_json(
        &tmp.path().join("b.json"),
        r#"{"run_id": "x", "epochs": 0}"#,
    );
    assert_eq!(code(&vadlab(&["train", "--config", &bad], &[])), 1);
    assert_eq!(
        code(&vadlab(&["train", "--config", "/no/such/file.json"], &[])),
        1
    );
    assert_eq!(code(&vadlab(&["bogus"], &[])), 1);

    let mut diverge = config(Pipeline::Supervised, "identity");
    diverge.lr = 1e30;
    diverge.momentum = 0.0;
    let d = write_json(&tmp.path().join("d.json"), &diverge.to_json());
    let o = vadlab(
        &[
            "train",
            "--config",
            &d,
            "--out",
            tmp.path().join("d").to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&o), 3);
}

#[test]
fn data_dir_flag_and_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let d = vadlab::data::generate_synthetic(1, 20, 10, 32, 32, 0.9);
    let bytes = vadlab::data::cifar::encode_cifar10(&d.samples).unwrap();
    for f in vadlab::data::cifar::CIFAR10_TRAIN_FILES {
        std::fs::write(tmp.path().join(f), &bytes).unwrap();
    }
    std::fs::write(tmp.path().join("test_batch.bin"), &bytes).unwrap();
    let mut cfg = config(Pipeline::Supervised, "identity");
    cfg.epochs = 1;
    cfg.arch = Some(common::tiny_arch(1, 10));
    cfg.data = vadlab::train::DataSpec::Cifar10 {
        dir: None,
        train_per_class: Some(1),
        test_per_class: Some(1),
        subset_seed: 0,
    };
    let path = write_json(&tmp.path().join("c.json"), &cfg.to_json());
    let dir = tmp.path().to_str().unwrap();
    let out = tmp.path().join("o");
    let o = vadlab(
        &[
            "train",
            "--config",
            &path,
            "--data-dir",
            dir,
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(meta["dataset"]["train_count"], 10);
    let o = vadlab(
        &["train", "--config", &path, "--out", out.to_str().unwrap()],
        &[("VADLAB_DATA_DIR", dir)],
    );
    assert_eq!(code(&o), 0);
}

fn sweep_plan(out: &Path) -> ExperimentPlan {
    let mut base = config(Pipeline::SslMt, "rot=0,90,180,270");
    base.run_id = "ksweep".into();
    base.epochs = 1;
    ExperimentPlan {
        output_dir: out.to_path_buf(),
        runs: vec![],
        base: Some(base),
        sweep: SweepAxes {
            shared_blocks: vec![1, 2],
            seeds: vec![7],
            ..Default::default()
        },
    }
}

#[test]
fn sweep_over_split_points() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let plan = sweep_plan(&out);
    let path = write_json(&tmp.path().join("plan.json"), &plan.to_json());
    let o = vadlab(&["sweep", "--plan", &path], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(out.join("sweep.csv")).unwrap();
    let headers = r.headers().unwrap().clone();
    assert_eq!(&headers[0], "run_id");
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    let ids: HashSet<&str> = rows.iter().map(|r| &r[0]).collect();
    assert_eq!(ids, HashSet::from(["ksweep-k1-s7", "ksweep-k2-s7"]));
    let keys: HashSet<(String, String, String)> = rows
        .iter()
        .map(|r| (r[0].into(), r[6].into(), r[7].into()))
        .collect();
    assert_eq!(keys.len(), rows.len());
    let finals = std::fs::read_to_string(out.join("final.csv")).unwrap();
    assert_eq!(finals.lines().count(), 3);
    for f in files_under(tmp.path()) {
        assert!(
            f == "plan.json" || f.starts_with("sweep/"),
            "{f} written outside the plan directory"
        );
    }
}

#[test]
fn permutation_subsets_expand_to_table_view_counts() {
    let mut base = config(Pipeline::SslMv, "identity");
    base.run_id = "perm".into();
    let views = [
        "perm=RGB",
        "perm=RGB,GBR,BRG",
        "perm=RGB,GRB,BGR",
        "perm=RGB,RBG,GRB,GBR,BRG,BGR",
    ];
    let plan = ExperimentPlan {
        output_dir: "unused".into(),
        runs: vec![],
        base: Some(base),
        sweep: SweepAxes {
            views: views.iter().map(|v| ViewAxis(v.parse().unwrap())).collect(),
            ..Default::default()
        },
    };
    let runs = plan.expand().unwrap();
    assert_eq!(
        runs.iter().map(|r| r.coords.view_count).collect::<Vec<_>>(),
        vec![1, 3, 3, 6]
    );
    let back = ExperimentPlan::from_json(&plan.to_json()).unwrap();
    assert_eq!(back, plan);
    assert_eq!(back.expand().unwrap(), runs);
}

#[test]
fn duplicate_run_ids_rejected() {
    let c = config(Pipeline::Supervised, "identity");
    let plan = ExperimentPlan {
        output_dir: "x".into(),
        runs: vec![c.clone(), c],
        base: None,
        sweep: SweepAxes::default(),
    };
    assert!(plan.expand().is_err());
}

#[test]
fn empty_plan_gives_header_only_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("empty");
    let path = write_json(
        &tmp.path().join("p.json"),
        &format!(r#"{{"output_dir": {:?}}}"#, out.to_str().unwrap()),
    );
    let o = vadlab(&["sweep", "--plan", &path], &[]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(text, "run_id,pipeline,shared_blocks,views,view_count,seed,epoch,split,loss,acc_single,acc_agg,lr,wall_ms\n");
}

#[test]
fn report_marks_absent_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let runs = tmp.path().join("runs");
    let seeds = [1u64, 2, 3];
    let pipelines = [Pipeline::Supervised, Pipeline::SslMt, Pipeline::SslMv];
    for (p, seed) in pipelines.iter().zip(seeds) {
        let mut c = config(*p, "rot=0,180");
        c.run_id = format!("{p}-{seed}");
        c.seed = seed;
        c.epochs = 1;
        vadlab::cli::train_into(&c, None, &runs.join(&c.run_id)).unwrap();
    }
    let o = vadlab(&["report", "--runs", runs.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for p in pipelines {
        assert!(text.contains(&format!("{p}-")));
    }
    let csv = std::fs::read_to_string(runs.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);

    std::fs::remove_file(runs.join("ssl_mt-2/metrics.csv")).unwrap();
    let o = vadlab(&["report", "--runs", tmp.path().to_str().unwrap()], &[]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8(o.stdout).unwrap().contains("absent"));
    let csv = std::fs::read_to_string(tmp.path().join("report.csv")).unwrap();
    assert!(csv
        .lines()
        .any(|l| l.starts_with("ssl_mt-2,") && l.contains(",absent,")));
}

/// Asymmetric card: every pixel distinct.
fn test_card(h: usize, w: usize) -> Image {
    let n = 3 * h * w;
    Image::from_bytes(
        3,
        h,
        w,
        &(0..n).map(|i| (i * 7 % 251) as u8).collect::<Vec<_>>(),
    )
    .unwrap()
}

#[test]
fn preview_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let card = test_card(4, 6);
    let input = tmp.path().join("card.ppm");
    std::fs::write(&input, ppm::encode(&card).unwrap()).unwrap();
    let inp = input.to_str().unwrap();

    let out = tmp.path().join("id");
    assert_eq!(
        code(&vadlab(
            &[
                "preview",
                "--spec",
                "identity",
                "--in",
                inp,
                "--out",
                out.to_str().unwrap()
            ],
            &[]
        )),
        0
    );
    let files = files_under(&out);
    assert_eq!(files.len(), 1);
    assert_eq!(
        std::fs::read(out.join(&files[0])).unwrap(),
        std::fs::read(&input).unwrap()
    );

    let out = tmp.path().join("perm");
    let o = vadlab(
        &[
            "preview",
            "--spec",
            "perm=RGB,RBG,GRB,GBR,BRG,BGR",
            "--in",
            inp,
            "--out",
            out.to_str().unwrap(),
            "--grid",
        ],
        &[],
    );
    assert_eq!(code(&o), 0);
    let files = files_under(&out);
    assert_eq!(files.iter().filter(|f| f.starts_with("view_")).count(), 6);
    assert!(files.contains(&"grid.ppm".to_string()));

    let out = tmp.path().join("rot");
    assert_eq!(
        code(&vadlab(
            &[
                "preview",
                "--spec",
                "rot=0,90",
                "--in",
                inp,
                "--out",
                out.to_str().unwrap()
            ],
            &[]
        )),
        0
    );
    let rotated = ppm::decode(&std::fs::read(out.join("view_1_rot90.ppm")).unwrap()).unwrap();
    assert_eq!(rotated.dims(), (3, 6, 4));
    for c in 0..3 {
        for r in 0..6 {
            for k in 0..4 {
                assert_eq!(rotated.get(c, r, k), card.get(c, k, 6 - 1 - r));
            }
        }
    }

    assert_eq!(
        code(&vadlab(
            &["preview", "--spec", "rot=90", "--in", inp, "--out", "x"],
            &[]
        )),
        1
    );
    assert_eq!(
        code(&vadlab(
            &[
                "preview",
                "--spec",
                "identity",
                "--in",
                "/no/such.ppm",
                "--out",
                "x"
            ],
            &[]
        )),
        2
    );
}

#[test]
fn selftest_passes_and_catches_injected_gradient() {
    let o = vadlab(&["selftest"], &[]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for suite in ["gradcheck", "group-law", "reduction-law", "parser-fixtures"] {
        assert!(
            text.lines()
                .any(|l| l.starts_with(suite) && l.trim_end().ends_with("ok")),
            "{text}"
        );
    }
    let o = vadlab(&["selftest"], &[("VADLAB_SELFTEST_GRAD_OFFSET", "0.01")]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8(o.stdout).unwrap().contains("FAILED"));
}
