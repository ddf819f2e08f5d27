use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use callscale::features::extract;
use callscale::model::{predict_batch, TrainedModel};
use callscale::replica::parse_plan;
use callscale::trace::{ingest_csv, Provenance, Schema};

fn callscale(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_callscale"))
        .args(args)
        .output()
        .expect("spawn callscale")
}

fn ok(args: &[&str]) -> Output {
    let out = callscale(args);
    assert!(
        out.status.success(),
        "callscale {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, rows: &str) -> PathBuf {
    let path = dir.join("trace.csv");
    ok(&["synth", "--rows", rows, "--seed", "4", "--output", s(&path)]);
    path
}

#[test]
fn predict_matches_in_process_predictions_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let trace = synth(dir.path(), "800");
    let preds = dir.path().join("pred.csv");
    for kind in ["lr", "mlp", "gbr"] {
        let model_path = dir.path().join(format!("{kind}.json"));
        ok(&["train", "--input", s(&trace), "--kind", kind, "--model-out", s(&model_path)]);
        ok(&["predict", "--model", s(&model_path), "--input", s(&trace), "--output", s(&preds)]);

        let model = TrainedModel::from_json(&fs::read_to_string(&model_path).unwrap()).unwrap();
        let ds = ingest_csv(
            fs::File::open(&trace).unwrap(),
            &Schema::default(),
            Provenance::Synthetic,
        )
        .unwrap()
        .dataset;
        let want = predict_batch(&model, extract(&ds).unwrap().x()).unwrap();
        let got: Vec<f64> = csv::Reader::from_path(&preds)
            .unwrap()
            .records()
            .map(|r| r.unwrap()[1].parse().unwrap())
            .collect();
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            assert_eq!(g.to_bits(), w.to_bits(), "{kind}");
        }
    }
}

#[test]
fn exit_codes_by_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let trace = synth(dir.path(), "100");
    let code = |args: &[&str]| callscale(args).status.code().unwrap();

    assert_eq!(code(&["bogus"]), 1);
    assert_eq!(code(&["train", "--input", s(&trace), "--model-out", s(&trace), "--kind", "lr"]), 1);
    assert_eq!(code(&["train", "--input", s(&trace), "--model-out", "m.json", "--kind", "svm"]), 1);

    let missing = dir.path().join("missing.csv");
    let model = dir.path().join("m.json");
    assert_eq!(code(&["train", "--input", s(&missing), "--kind", "lr", "--model-out", s(&model)]), 2);

    let broken = dir.path().join("broken.csv");
    fs::write(&broken, "timestamp,msname,msinstanceid,mcr\n1,a,b,2\n").unwrap();
    assert_eq!(code(&["train", "--input", s(&broken), "--kind", "lr", "--model-out", s(&model)]), 2);

    let bad_model = dir.path().join("bad.json");
    fs::write(&bad_model, r#"{"format_version": 7}"#).unwrap();
    let out = dir.path().join("out.csv");
    assert_eq!(code(&["predict", "--model", s(&bad_model), "--input", s(&trace), "--output", s(&out)]), 3);

    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let trace = synth(dir.path(), "400");
    let model = dir.path().join("m.json");
    let cfg = dir.path().join("run.conf");
    fs::write(
        &cfg,
        format!(
            "# gbr run\nkind = gbr\ninput = {}\nmodel-out = {}\nn_estimators = 4\nseed = 8\n",
            trace.display(),
            model.display()
        ),
    )
    .unwrap();
    ok(&["--config", s(&cfg), "train"]);
    let m = TrainedModel::from_json(&fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(m.meta().loss_curve.len(), 4);
    assert_eq!(m.meta().seed, 8);

    ok(&["--config", s(&cfg), "train", "--n-estimators", "6", "--kind", "gbr"]);
    let m = TrainedModel::from_json(&fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(m.meta().loss_curve.len(), 6);
}

#[test]
fn ingest_skips_bad_rows_and_filters_ranges() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.csv");
    fs::write(
        &raw,
        "ts,service,pod,rt,rate\n\
         0,a,a1,5.0,10\n\
         30,a,a1,oops,10\n\
         60,b,b1,-1,3\n\
         90,b,b1,9000,3\n\
         120,c,c1,12.5,0.01\n\
         150,c,c1,40,7\n",
    )
    .unwrap();
    let clean = dir.path().join("clean.csv");
    let feats = dir.path().join("features.csv");
    let out = ok(&[
        "ingest", "--input", s(&raw), "--output", s(&clean), "--features-out", s(&feats),
        "--timestamp-column", "ts", "--microservice-column", "service", "--container-column", "pod",
        "--mt-column", "rt", "--mcr-column", "rate",
    ]);
    let log = String::from_utf8_lossy(&out.stderr);
    assert!(log.contains("skipped 2"), "{log}");
    let text = fs::read_to_string(&clean).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "timestamp,msname,msinstanceid,mt,mcr");
    assert_eq!(lines.len(), 3);
    assert_eq!(fs::read_to_string(&feats).unwrap().lines().nth(1), Some("0.005,10"));
}

#[test]
fn plan_from_observed_rates_and_model_error() {
    let dir = tempfile::tempdir().unwrap();
    let workload = dir.path().join("workload.csv");
    fs::write(
        &workload,
        "producer,microservice,resource,mt_s,mcr\nu,m1,r1,0.7,2\nu,m2,r2,1.5,2\nu,m3,r3,2.0,3\n",
    )
    .unwrap();
    let plan = dir.path().join("plan.json");
    let plan_csv = dir.path().join("plan.csv");
    ok(&["plan", "--input", s(&workload), "--plan-out", s(&plan), "--csv-out", s(&plan_csv)]);
    let parsed = parse_plan(fs::File::open(&plan).unwrap()).unwrap();
    assert_eq!(parsed.replicas(), vec![2, 3, 6]);
    assert_eq!(
        fs::read_to_string(&plan_csv).unwrap().lines().nth(1),
        Some("m1,r1,0.7,2.0,2")
    );

    let trace = synth(dir.path(), "300");
    let model = dir.path().join("lr.json");
    ok(&["train", "--input", s(&trace), "--kind", "lr", "--model-out", s(&model)]);
    let err = dir.path().join("err.csv");
    ok(&[
        "plan", "--input", s(&workload), "--model", s(&model), "--plan-out", s(&plan),
        "--error-out", s(&err),
    ]);
    let text = fs::read_to_string(&err).unwrap();
    assert!(text.starts_with("model,replica_mape_percent,n_excluded\nLR,"));

    let no_rates = dir.path().join("no_rates.csv");
    fs::write(&no_rates, "producer,microservice,resource,mt_s\nu,m1,r1,0.7\n").unwrap();
    let out = callscale(&["plan", "--input", s(&no_rates), "--plan-out", s(&plan)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_tune_and_plot_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let trace = synth(dir.path(), "1500");
    let p = |n: &str| dir.path().join(n);
    ok(&[
        "eval", "--input", s(&trace), "--seeds", "1,2", "--report-out", s(&p("report.csv")),
        "--table-out", s(&p("table.txt")), "--replica-out", s(&p("replica.csv")),
    ]);
    let report = fs::read_to_string(p("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 6 + 3);
    assert!(fs::read_to_string(p("table.txt")).unwrap().contains("| GBR"));
    assert_eq!(fs::read_to_string(p("replica.csv")).unwrap().lines().count(), 7);

    ok(&[
        "tune", "--input", s(&trace), "--kind", "mlp", "--grid", "hidden_neurons=2,4",
        "--result-out", s(&p("tune.csv")), "--curve-out", s(&p("curve.csv")),
    ]);
    assert_eq!(fs::read_to_string(p("tune.csv")).unwrap().lines().count(), 3);
    assert_eq!(fs::read_to_string(p("curve.csv")).unwrap().lines().count(), 3);

    ok(&["plot", "--kind", "curve", "--input", s(&p("curve.csv")), "--output", s(&p("curve.svg"))]);
    let svg = fs::read_to_string(p("curve.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);

    let model = p("gbr.json");
    ok(&["train", "--input", s(&trace), "--kind", "gbr", "--model-out", s(&model)]);
    ok(&["predict", "--model", s(&model), "--input", s(&trace), "--output", s(&p("pred.csv"))]);
    ok(&[
        "plot", "--input", s(&trace), "--overlay", s(&p("pred.csv")), "--output",
        s(&p("scatter.svg")),
    ]);
    let svg = fs::read_to_string(p("scatter.svg")).unwrap();
    assert_eq!(svg.matches("<circle").count(), 1500);
    assert_eq!(svg.matches("<polyline").count(), 1);
}

#[test]
fn stdout_output_with_dash() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["synth", "--rows", "5", "--output", "-"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 6);
    drop(dir);
}
