use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn qds(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qds"))
        .args(args)
        .env_remove("QDS_TOLERANCE_PROFILE")
        .output()
        .expect("qds runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn zoo_file(dir: &TempDir, file: &str, args: &[&str]) -> PathBuf {
    let mut full = vec!["zoo"];
    full.extend_from_slice(args);
    let out = qds(&full);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let path = dir.path().join(file);
    std::fs::write(&path, &out.stdout).unwrap();
    path
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

#[test]
fn verify_exit_codes() {
    let dir = TempDir::new().unwrap();
    let cyc = zoo_file(&dir, "cyc.json", &["cyclic", "--n", "3"]);
    let out = qds(&["verify", p(&cyc)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["verification"]["cp"], true);

    let tr = zoo_file(&dir, "t.json", &["transpose", "--dim", "2"]);
    let out = qds(&["verify", p(&tr)]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["verification"]["cp"], false);

    let text = std::fs::read_to_string(&cyc).unwrap();
    let cut = dir.path().join("cut.json");
    std::fs::write(&cut, &text[..text.len() / 2]).unwrap();
    let out = qds(&["verify", p(&cut)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line") && err.contains("column"), "{err}");

    let out = qds(&["verify", p(&dir.path().join("missing.json"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn analyze_examples() {
    let dir = TempDir::new().unwrap();
    let rep = zoo_file(&dir, "rep.json", &["replica", "--m", "2", "--p", "0.5"]);
    let r = json(&qds(&["analyze", p(&rep)]));
    assert_eq!(r["summary"]["x_blocks"][0]["multiplicity"], 2);
    assert_eq!(r["summary"]["stationary_parameter_count"], 4);

    let sud = zoo_file(&dir, "sud.json", &["sudden", "--dim", "2"]);
    let r = json(&qds(&["analyze", p(&sud)]));
    assert_eq!(r["summary"]["decaying_dim"], 1);
    assert_eq!(r["summary"]["u_block_dims"], serde_json::json!([1]));

    let cas = zoo_file(&dir, "cas.json", &["cascade", "--n", "5", "--m", "3"]);
    let r = json(&qds(&["analyze", p(&cas), "--oracle"]));
    assert_eq!(r["peripheral_eigenvalues"].as_array().unwrap().len(), 3);
    let roots: BTreeSet<String> = r["modes"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|m| m["kind"] == "intra_enclosure_oscillation")
        .map(|m| m["root_of_unity"].to_string())
        .collect();
    assert_eq!(roots, BTreeSet::from(["[1,3]".to_string(), "[2,3]".to_string()]));
    assert_eq!(r["oracle"]["agrees"], true);

    let out = qds(&["analyze", p(&cas), "--format", "text"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("block diagram"));

    let tr = zoo_file(&dir, "t.json", &["transpose", "--dim", "2"]);
    let out = qds(&["analyze", p(&tr)]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["error"], "verification");
}

#[test]
fn analyze_flags_and_multiple_files() {
    let dir = TempDir::new().unwrap();
    let a = zoo_file(&dir, "a.json", &["dephasing", "--p", "0.3"]);
    let b = zoo_file(&dir, "b.json", &["cyclic", "--n", "4"]);
    let out = qds(&["analyze", p(&a), p(&b), "--tol-rank", "1e-9", "--tol-eig", "1e-9", "--seed", "9"]);
    assert_eq!(out.status.code(), Some(0));
    let docs: Vec<Value> = serde_json::Deserializer::from_slice(&out.stdout)
        .into_iter::<Value>()
        .map(|v| v.unwrap())
        .collect();
    assert_eq!(docs.len(), 2);
    assert_eq!(docs[0]["tolerances"]["rank"], 1e-9);
    assert_eq!(docs[1]["seed"], 9);
    assert_eq!(docs[1]["dim"], 4);
}

#[test]
fn analyze_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let f = zoo_file(&dir, "r.json", &["random", "--dim", "4", "--kraus", "3", "--seed", "2"]);
    let strip = |o: Output| {
        let mut v = json(&o);
        v.as_object_mut().unwrap().remove("timings");
        serde_json::to_string(&v).unwrap()
    };
    assert_eq!(strip(qds(&["analyze", p(&f)])), strip(qds(&["analyze", p(&f)])));
}

#[test]
fn evolve_examples() {
    let dir = TempDir::new().unwrap();
    let deph = zoo_file(&dir, "d.json", &["dephasing", "--p", "0.5"]);
    let plus = dir.path().join("plus.json");
    std::fs::write(&plus, r#"{"dim": 2, "matrix": [[0.5,0],[0.5,0],[0.5,0],[0.5,0]]}"#).unwrap();
    let out = qds(&["evolve", p(&deph), "--state", p(&plus), "--steps", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let t = json(&out);
    let last: Vec<[f64; 2]> = serde_json::from_value(t["steps"][1]["state"]["data"].clone()).unwrap();
    let expected = [[0.5, 0.0], [0.0, 0.0], [0.0, 0.0], [0.5, 0.0]];
    for (z, e) in last.iter().zip(expected) {
        assert!((z[0] - e[0]).abs() + (z[1] - e[1]).abs() < 1e-14, "{last:?}");
    }

    let cyc = zoo_file(&dir, "c.json", &["cyclic", "--n", "3"]);
    let one = dir.path().join("one.json");
    std::fs::write(
        &one,
        r#"{"dim": 3, "matrix": [[0,0],[0,0],[0,0],[0,0],[1,0],[0,0],[0,0],[0,0],[0,0]]}"#,
    )
    .unwrap();
    let t = json(&qds(&["evolve", p(&cyc), "--state", p(&one), "--steps", "3"]));
    assert_eq!(t["steps"][3]["state"], t["steps"][0]["state"]);
    let t = json(&qds(&["evolve", p(&cyc), "--state", p(&one), "--steps", "0"]));
    assert_eq!(t["steps"].as_array().unwrap().len(), 1);

    let out = qds(&["evolve", p(&deph), "--state", p(&one), "--steps", "1"]);
    assert_eq!(out.status.code(), Some(2));

    let gen = zoo_file(&dir, "g.json", &["damped-qubit", "--gamma", "0.5", "--omega", "1"]);
    let out = qds(&["evolve", p(&gen), "--state", p(&plus), "--steps", "2"]);
    assert_eq!(out.status.code(), Some(2));
    let out = qds(&["evolve", p(&gen), "--state", p(&plus), "--steps", "2", "--dt", "0.1"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn zoo_is_stable() {
    let a = qds(&["zoo", "random", "--dim", "4", "--kraus", "6", "--seed", "7"]);
    let b = qds(&["zoo", "random", "--dim", "4", "--kraus", "6", "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let c = json(&qds(&["zoo", "cyclic", "--n", "4"]));
    assert_eq!(c["matrices"].as_array().unwrap().len(), 4);
    let out = qds(&["zoo", "nonexistent"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cascade"));
}

#[test]
fn oracle_command() {
    let dir = TempDir::new().unwrap();
    let f = zoo_file(&dir, "dsd.json", &["direct-sum-dephasing", "--p1", "0.3", "--p2", "0.7"]);
    let out = qds(&["oracle", p(&f), "--samples", "60"]);
    assert_eq!(out.status.code(), Some(0));
    let d = json(&out);
    assert_eq!(d["blocks_found"], 4);
    assert_eq!(d["agrees"], true);
}

/// Shape of a JSON document: object keys, value types, and the set of
/// element shapes of each array.
fn skeleton(v: &Value) -> Value {
    match v {
        Value::Null => "null".into(),
        Value::Bool(_) => "bool".into(),
        Value::Number(_) => "number".into(),
        Value::String(_) => "string".into(),
        Value::Array(xs) => {
            let shapes: BTreeSet<String> = xs.iter().map(|x| skeleton(x).to_string()).collect();
            Value::Array(
                shapes
                    .into_iter()
                    .map(|s| serde_json::from_str(&s).unwrap())
                    .collect(),
            )
        }
        Value::Object(m) => Value::Object(m.iter().map(|(k, x)| (k.clone(), skeleton(x))).collect()),
    }
}

const GOLDEN: &[(&str, &[&str])] = &[
    ("cyclic", &["cyclic", "--n", "3"]),
    ("cascade", &["cascade", "--n", "5", "--m", "3"]),
    ("sudden", &["sudden", "--dim", "2"]),
    ("amplitude-damping", &["amplitude-damping", "--gamma", "0.3"]),
    ("dephasing", &["dephasing", "--p", "0.3"]),
    ("depolarizing", &["depolarizing", "--p", "0.5"]),
    ("replica", &["replica", "--m", "2", "--p", "0.5"]),
    ("direct-sum-dephasing", &["direct-sum-dephasing", "--p1", "0.3", "--p2", "0.7"]),
    ("hamiltonian-qubit", &["hamiltonian-qubit", "--omega", "1"]),
    ("damped-qubit", &["damped-qubit", "--gamma", "0.5", "--omega", "1"]),
    ("random", &["random", "--dim", "3", "--kraus", "2", "--seed", "1"]),
    ("random-lindblad", &["random-lindblad", "--dim", "3", "--jumps", "2", "--seed", "1"]),
];

/// Set `QDS_UPDATE_GOLDEN=1` to rewrite the files after a deliberate
/// schema change.
#[test]
fn report_schema_matches_golden_files() {
    let dir = TempDir::new().unwrap();
    let golden_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let update = std::env::var_os("QDS_UPDATE_GOLDEN").is_some();
    for (name, args) in GOLDEN {
        let f = zoo_file(&dir, &format!("{name}.json"), args);
        let out = qds(&["analyze", p(&f)]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        let shape = serde_json::to_string_pretty(&skeleton(&json(&out))).unwrap() + "\n";
        let path = golden_dir.join(format!("{name}.schema.json"));
        if update {
            std::fs::create_dir_all(&golden_dir).unwrap();
            std::fs::write(&path, &shape).unwrap();
        } else {
            let expected = std::fs::read_to_string(&path)
                .unwrap_or_else(|_| panic!("missing golden file {}", path.display()));
            assert_eq!(shape, expected, "report schema changed for {name}");
        }
    }
}
