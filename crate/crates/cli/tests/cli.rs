use serde_json::Value;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_rigidlab");

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/schemas")
}

fn rigidlab(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("RIGIDLAB_BUDGET");
    if let Some(t) = threads {
        cmd.env("RAYON_NUM_THREADS", t);
    }
    cmd.output().expect("binary runs")
}

fn stdout_ok(args: &[&str]) -> String {
    let out = rigidlab(args, None);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn load_schema(name: &str) -> Value {
    let text = fs::read_to_string(schema_dir().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    serde_json::from_str(&text).unwrap()
}

fn type_matches(ty: &str, v: &Value) -> bool {
    match ty {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "integer" => v.is_i64() || v.is_u64(),
        "number" => v.is_number(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        other => panic!("schema type {other} not handled"),
    }
}

/// Checks the subset of JSON Schema used under docs/schemas.
fn validate(schema: &Value, v: &Value, path: &str, errors: &mut Vec<String>) {
    if let Some(r) = schema.get("$ref").and_then(Value::as_str) {
        validate(&load_schema(r), v, path, errors);
        return;
    }
    if let Some(ty) = schema.get("type") {
        let ok = match ty {
            Value::String(t) => type_matches(t, v),
            Value::Array(ts) => ts.iter().any(|t| type_matches(t.as_str().unwrap(), v)),
            _ => true,
        };
        if !ok {
            errors.push(format!("{path}: expected {ty}, got {v}"));
            return;
        }
    }
    if let Some(allowed) = schema.get("enum").and_then(Value::as_array) {
        if !allowed.contains(v) {
            errors.push(format!("{path}: {v} not in enum"));
        }
    }
    if let Some(obj) = v.as_object() {
        for key in schema.get("required").and_then(Value::as_array).into_iter().flatten() {
            let key = key.as_str().unwrap();
            if !obj.contains_key(key) {
                errors.push(format!("{path}: missing {key}"));
            }
        }
        if let Some(props) = schema.get("properties").and_then(Value::as_object) {
            for (key, sub) in props {
                if let Some(child) = obj.get(key) {
                    validate(sub, child, &format!("{path}.{key}"), errors);
                }
            }
        }
    }
    if let (Some(items), Some(arr)) = (schema.get("items"), v.as_array()) {
        for (i, child) in arr.iter().enumerate() {
            validate(items, child, &format!("{path}[{i}]"), errors);
        }
    }
}

fn check_report(text: &str) -> Value {
    let report: Value = serde_json::from_str(text).expect("report is JSON");
    let again = serde_json::to_string_pretty(&report).unwrap() + "\n";
    assert_eq!(again, text, "report does not round-trip byte for byte");
    let envelope = load_schema("report.schema.json");
    let mut errors = Vec::new();
    validate(&envelope, &report, "$", &mut errors);
    let command = report["command"].as_str().unwrap();
    let payload_schema = envelope["payload_schemas"][command].as_str().unwrap();
    validate(&load_schema(payload_schema), &report["payload"], "$.payload", &mut errors);
    assert!(errors.is_empty(), "{command}: {errors:#?}");
    assert_eq!(report["config"]["command"], command);
    report
}

const RUNS: &[&[&str]] = &[
    &["hadamard", "--n", "3"],
    &["valiant", "--n", "6", "--eps", "0.2", "--field", "F3", "--seed", "1"],
    &["valiant", "--n", "6", "--full-window"],
    &["high-error", "--n", "6", "--rank-target", "2", "--trials", "3", "--seed", "5"],
    &["sym-and", "--n", "6", "--rank-target", "2", "--function", "majority"],
    &["sym-and", "--n", "5", "--rank-target", "2"],
    &["prob-rank", "--sampler", "eq", "--n", "3", "--exhaustive"],
    &["prob-rank", "--sampler", "leq", "--n", "2", "--trials", "40", "--seed", "3"],
    &[
        "prob-rank",
        "--sampler",
        "ltf",
        "--x-weights",
        "1,-2",
        "--y-weights",
        "2,1",
        "--threshold",
        "0",
        "--trials",
        "20",
    ],
    &["prob-rank", "--sampler", "ltf-ltf", "--trials", "10", "--eps", "1/5"],
    &["equivalence", "--n", "3", "--corrupt", "3", "--seed", "2"],
    &["equivalence", "--n", "3", "--trials", "30"],
    &["rsr", "--n", "2", "--trials", "25", "--seed", "4"],
    &["protocol", "--sampler", "eq", "--n", "3", "--x", "2", "--y", "2", "--trials", "4"],
    &["oracle", "--n", "1", "--rank-target", "1"],
    &["oracle", "--n", "1", "--edits", "1", "--cross-validate"],
];

#[test]
fn every_command_emits_a_schema_valid_report() {
    for args in RUNS {
        let report = check_report(&stdout_ok(args));
        assert_eq!(report["command"], args[0], "{args:?}");
        assert_eq!(report["artifact"], "rigidlab");
        assert!(report.get("wall_time_ms").is_none());
    }
}

#[test]
fn reports_are_identical_across_thread_counts() {
    for args in RUNS {
        let one = rigidlab(args, Some("1"));
        let four = rigidlab(args, Some("4"));
        assert!(one.status.success() && four.status.success(), "{args:?}");
        assert_eq!(one.stdout, four.stdout, "{args:?} depends on the thread count");
        let csv: Vec<&str> = [args.to_vec(), vec!["--format", "csv"]].concat();
        assert_eq!(rigidlab(&csv, Some("1")).stdout, rigidlab(&csv, Some("4")).stdout, "{args:?} csv");
    }
}

#[test]
fn seeded_valiant_run_matches_golden_file() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/valiant_n6.json");
    let text = stdout_ok(&["valiant", "--n", "6", "--eps", "0.2", "--field", "F3", "--seed", "1"]);
    assert_eq!(text, fs::read_to_string(golden).unwrap());
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn monte_carlo_csv_has_one_row_per_trial() {
    let cases: &[(&[&str], usize)] = &[
        (&["prob-rank", "--sampler", "eq", "--n", "2", "--trials", "17"], 17),
        (&["equivalence", "--n", "2", "--trials", "9"], 9),
        (&["rsr", "--n", "2", "--trials", "11"], 11),
        (&["protocol", "--sampler", "eq", "--n", "2", "--x", "1", "--y", "3", "--trials", "6"], 6),
        (&["high-error", "--n", "4", "--rank-target", "2", "--trials", "3"], 3),
    ];
    for (args, trials) in cases {
        let text = stdout_ok(&[args.to_vec(), vec!["--format", "csv"]].concat());
        let rows = csv_rows(&text);
        assert_eq!(rows.len(), trials + 1, "{args:?}");
        assert_eq!(rows[0][0], "trial");
        let width = rows[0].len();
        for (i, row) in rows[1..].iter().enumerate() {
            assert_eq!(row.len(), width, "{args:?}");
            assert_eq!(row[0], i.to_string());
        }
    }
}

#[test]
fn exhaustive_csv_lists_every_entry() {
    let rows = csv_rows(&stdout_ok(&["prob-rank", "--sampler", "eq", "--n", "2", "--exhaustive", "--format", "csv"]));
    assert_eq!(rows[0], ["row", "col", "error"]);
    assert_eq!(rows.len(), 1 + 16);
    for row in &rows[1..] {
        let expected = if row[0] == row[1] { "0" } else { "1/4" };
        assert_eq!(row[2], expected, "{row:?}");
    }
}

#[test]
fn exit_codes_follow_the_error_class() {
    let code = |args: &[&str], budget: Option<&str>| {
        let mut cmd = Command::new(BIN);
        cmd.args(args).env_remove("RIGIDLAB_BUDGET");
        if let Some(b) = budget {
            cmd.env("RIGIDLAB_BUDGET", b);
        }
        cmd.output().unwrap().status.code()
    };
    assert_eq!(code(&["valiant", "--n", "6", "--eps", "0.2"], None), Some(0));
    assert_eq!(code(&["valiant", "--n", "6", "--eps", "0.7"], None), Some(2));
    assert_eq!(code(&["valiant", "--eps", "0.2"], None), Some(2));
    assert_eq!(code(&["no-such-command"], None), Some(2));
    assert_eq!(code(&["valiant", "--n", "6", "--eps", "0.2"], Some("not-a-number")), Some(2));
    assert_eq!(code(&["hadamard", "--n", "6"], Some("100")), Some(3));
    assert_eq!(code(&["oracle", "--n", "3", "--rank-target", "1"], None), Some(3));
    assert_eq!(code(&["hadamard", "--n", "2", "--out", "/nonexistent-dir/x/report.json"], None), Some(1));
    assert_eq!(code(&["--help"], None), Some(0));
}

#[test]
fn out_flag_writes_the_same_bytes_as_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    fs::write(&path, "stale").unwrap();
    let args = ["equivalence", "--n", "3", "--corrupt", "2"];
    let out = rigidlab(&[&args[..], &["--out", path.to_str().unwrap()]].concat(), None);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    assert_eq!(fs::read_to_string(&path).unwrap(), stdout_ok(&args));
    let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(leftovers.len(), 1, "temporary files left behind");
}

#[test]
fn protocol_trace_file_has_one_line_per_trial() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.jsonl");
    let args = [
        "protocol",
        "--sampler",
        "eq",
        "--n",
        "3",
        "--x",
        "5",
        "--y",
        "5",
        "--trials",
        "7",
        "--seed",
        "9",
        "--trace",
        trace.to_str().unwrap(),
    ];
    let report = check_report(&stdout_ok(&args));
    let lines: Vec<Value> =
        fs::read_to_string(&trace).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 7);
    assert_eq!(Value::Array(lines.clone()), report["payload"]["traces"]);
    for line in &lines {
        assert_eq!(line["bits"], 3);
        assert_eq!(line["x"], 5);
    }
}

#[test]
fn timing_adds_wall_time_only_on_request() {
    let report: Value = serde_json::from_str(&stdout_ok(&["hadamard", "--n", "2", "--timing"])).unwrap();
    assert!(report["wall_time_ms"].is_number());
}

#[test]
fn schema_check_rejects_broken_reports() {
    let mut report: Value = serde_json::from_str(&stdout_ok(&["equivalence", "--n", "2"])).unwrap();
    let schema = load_schema("error-report.schema.json");
    let mut errors = Vec::new();
    validate(&schema, &report["payload"], "$", &mut errors);
    assert!(errors.is_empty());
    report["payload"].as_object_mut().unwrap().remove("max_error");
    report["payload"]["claimed_rank"] = Value::from("four");
    report["payload"]["mode"] = Value::from("guess");
    validate(&schema, &report["payload"], "$", &mut errors);
    assert_eq!(errors.len(), 3, "{errors:?}");
}
