use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn spec(name: &str) -> PathBuf {
    repo().join("specs").join(name)
}

fn ouq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ouq"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "{e}: stdout {:?} stderr {:?}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).unwrap()
}

fn schema(name: &str) -> jsonschema::JSONSchema {
    let text = std::fs::read_to_string(repo().join("docs").join(name)).unwrap();
    jsonschema::JSONSchema::compile(&serde_json::from_str(&text).unwrap()).unwrap()
}

fn assert_valid(schema: &jsonschema::JSONSchema, doc: &Value) {
    if let Err(errors) = schema.validate(doc) {
        let msgs: Vec<String> = errors
            .map(|e| format!("{} at {}", e, e.instance_path))
            .collect();
        panic!("schema violations: {msgs:?}");
    }
}

#[test]
fn oci_single_evaluations() {
    let out = ouq(&["oci", "-a", "5.5", "-D", "8.86,7.20,4.17"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert!((v["optimal"].as_f64().unwrap() - 0.437).abs() <= 1e-3);
    assert!((v["classic"].as_f64().unwrap() - 0.664).abs() <= 1e-3);
    assert_eq!(v["manifest"]["subcommand"], "oci");

    let v = stdout_json(&ouq(&["oci", "-a", "0", "-D", "1,1"]));
    assert_eq!(v["optimal"].as_f64(), Some(1.0));

    let shifted = stdout_json(&ouq(&[
        "oci",
        "-a",
        "7.5",
        "-b",
        "2",
        "-D",
        "8.86,7.20,4.17",
    ]));
    assert_eq!(shifted["optimal"], v_optimal(5.5));
}

fn v_optimal(a: f64) -> Value {
    stdout_json(&ouq(&["oci", "-a", &a.to_string(), "-D", "8.86,7.20,4.17"]))["optimal"].clone()
}

#[test]
fn oci_sweep_is_monotone_csv() {
    let out = ouq(&["oci", "-D", "3,1", "--sweep", "101"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("a,classic,optimal"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 101);
    assert_eq!(rows[0][0], 0.0);
    assert!((rows[100][0] - 4.0).abs() < 1e-12);
    assert!(rows.windows(2).all(|w| w[1][2] <= w[0][2]));
    assert!(rows.iter().all(|r| r[2] <= r[1] + 1e-12));

    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let out = ouq(&[
        "oci",
        "-D",
        "3,1",
        "--sweep",
        "5",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success() && out.stdout.is_empty());
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 6);
}

#[test]
fn usage_errors_exit_2_with_json() {
    for args in [
        vec!["oci", "-D", "1,-1", "-a", "0.5"],
        vec!["oci", "-D", "1,1"],
        vec!["oci", "-D", "1,1", "--frobnicate"],
    ] {
        let out = ouq(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err = stderr_json(&out);
        assert!(err["error"]["message"].is_string(), "{err}");
    }
}

#[test]
fn malformed_json_reports_byte_offset() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let text = "{\n  \"domain\": {\"axes\": [}\n}";
    std::fs::write(&bad, text).unwrap();
    let out = ouq(&["solve", bad.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = &stderr_json(&out)["error"];
    assert_eq!(err["kind"], "parse");
    assert_eq!(
        err["byte_offset"].as_u64(),
        Some(text.find('}').unwrap() as u64)
    );

    let wrong = dir.path().join("wrong.json");
    let mut doc: Value =
        serde_json::from_str(&std::fs::read_to_string(spec("a_h.json")).unwrap()).unwrap();
    doc["constraints"][0]["lo"] = Value::from("low");
    std::fs::write(&wrong, doc.to_string()).unwrap();
    let out = ouq(&["solve", wrong.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["pointer"], "/constraints/0/lo");
}

#[test]
fn pinned_problem_has_equal_bounds_and_valid_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let out = ouq(&[
        "solve",
        "--upper",
        "--lower",
        spec("pinned.json").to_str().unwrap(),
        "--seed",
        "3",
        "--out",
        out_dir,
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = stdout_json(&out);
    assert_eq!(v["upper"]["value"], v["lower"]["value"]);

    let result_schema = schema("result.schema.json");
    for name in ["upper", "lower"] {
        let doc: Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join(format!("{name}.json"))).unwrap(),
        )
        .unwrap();
        assert_valid(&result_schema, &doc);
        assert_eq!(doc["manifest"]["seeds"][0], 3);
        let trace = std::fs::read_to_string(doc["trace_file"].as_str().unwrap()).unwrap();
        assert!(trace.starts_with("generation,best_value,residual,evals,seconds\n"));
    }
}

#[test]
fn spec_files_match_problem_schema() {
    let problem = schema("problem.schema.json");
    let functional = schema("functional.schema.json");
    for entry in std::fs::read_dir(repo().join("specs")).unwrap() {
        let path = entry.unwrap().path();
        let doc: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        match &doc {
            Value::Array(items) => items.iter().for_each(|f| assert_valid(&functional, f)),
            Value::Object(m) if m.contains_key("domain") => assert_valid(&problem, &doc),
            _ => assert_valid(&functional, &doc),
        }
    }
}

#[test]
fn a_h_upper_bound() {
    let dir = tempfile::tempdir().unwrap();
    let out = ouq(&[
        "solve",
        "--upper",
        spec("a_h.json").to_str().unwrap(),
        "--seed",
        "7",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = stdout_json(&out);
    assert!(
        (v["value"].as_f64().unwrap() - 0.379).abs() <= 5e-3,
        "{}",
        v["value"]
    );
    assert_eq!(v["seed"], 7);
    assert_valid(&schema("result.schema.json"), &v);
}

#[test]
fn oscillation_class_spec_uses_hypercube() {
    let dir = tempfile::tempdir().unwrap();
    let v = stdout_json(&ouq(&[
        "solve",
        spec("a_mcd.json").to_str().unwrap(),
        "--seed",
        "0",
        "--out",
        dir.path().to_str().unwrap(),
    ]));
    assert_eq!(v["route"], "hypercube");
    assert!((v["value"].as_f64().unwrap() - 0.437).abs() <= 1e-3);
}

#[test]
fn recorded_seed_reproduces_result() {
    let dir = tempfile::tempdir().unwrap();
    let first_dir = dir.path().join("first");
    let first = stdout_json(&ouq(&[
        "solve",
        spec("markov.json").to_str().unwrap(),
        "--out",
        first_dir.to_str().unwrap(),
    ]));
    let seed = first["manifest"]["seeds"][0].as_u64().unwrap();
    assert_eq!(first["seed"].as_u64(), Some(seed));
    let again = stdout_json(&ouq(&[
        "solve",
        spec("markov.json").to_str().unwrap(),
        "--seed",
        &seed.to_string(),
        "--out",
        dir.path().join("second").to_str().unwrap(),
    ]));
    assert_eq!(first["value"], again["value"]);
    assert_eq!(first["extremal_measure"], again["extremal_measure"]);
    let trace = |d: &Path| -> Vec<String> {
        std::fs::read_to_string(d.join("upper_trace.csv"))
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    assert_eq!(trace(&first_dir), trace(&dir.path().join("second")));
}

#[test]
fn certify_verdicts_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let out = ouq(&[
        "certify",
        spec("a_h.json").to_str().unwrap(),
        "--epsilon",
        "0.5",
        "--seed",
        "1",
        "--out",
        out_dir,
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["verdict"]["decision"], "certify");
    assert!(dir.path().join("certify.json").exists());

    // U = 0.375, L = 0: undecidable at 0.1.
    let out = ouq(&[
        "certify",
        spec("markov.json").to_str().unwrap(),
        "--epsilon",
        "0.1",
        "--seed",
        "1",
        "--out",
        out_dir,
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout_json(&out)["verdict"]["decision"], "cannot_decide");

    let out = ouq(&[
        "certify",
        spec("pinned.json").to_str().unwrap(),
        "--seed",
        "1",
        "--out",
        out_dir,
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oscillation_of_thickness() {
    let out = ouq(&[
        "osc",
        spec("surrogate.json").to_str().unwrap(),
        "--axis",
        "0",
    ]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert!((v["diameters"][0].as_f64().unwrap() - 8.86).abs() <= 0.02);

    let out = ouq(&["osc", spec("a_mcd.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn intervals_and_experiments_on_markov() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let functional = dir.path().join("phi.json");
    std::fs::write(
        &functional,
        r#"{"name": "P[x >= 0.8]", "kind": "event_probability", "axis": 0, "cmp": "ge", "value": 0.8, "outcomes": [0.0, 0.2, 0.375]}"#,
    )
    .unwrap();
    let v = stdout_json(&ouq(&[
        "intervals",
        spec("markov.json").to_str().unwrap(),
        "--functional",
        functional.to_str().unwrap(),
        "--epsilon",
        "0.2",
        "--seed",
        "2",
        "--out",
        out_dir,
    ]));
    let unsafe_lo = v["unsafe"]["lo"].as_f64().unwrap();
    assert!(
        unsafe_lo >= 0.2 && v["safe"]["lo"].as_f64().unwrap() <= 1e-6,
        "{v}"
    );

    let candidates = dir.path().join("candidates.json");
    std::fs::write(
        &candidates,
        format!("[{}]", std::fs::read_to_string(&functional).unwrap()),
    )
    .unwrap();
    let v = stdout_json(&ouq(&[
        "experiments",
        spec("markov.json").to_str().unwrap(),
        "--candidates",
        candidates.to_str().unwrap(),
        "--seed",
        "2",
        "--out",
        out_dir,
    ]));
    assert_eq!(v["ranking"][0]["name"], "P[x >= 0.8]");
    assert!(v["ranking"][0]["score"].as_f64().unwrap() < 1e-3);
    assert!(dir.path().join("experiments.json").exists());
}
