use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hdsafe_core::fixtures::{by_name, Fixture, FIXTURES, XOR_SRC};
use serde_json::Value;
use tempfile::TempDir;

const SCHEMA: &str = include_str!("../schemas/report.schema.json");

fn hdsafe(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hdsafe")).current_dir(dir).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

/// Writes the fixture program and, for inline targets, its description.
fn setup(fx: &Fixture) -> (TempDir, String) {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join(format!("{}.ir", fx.name)), fx.source).unwrap();
    let target = if fx.target.contains('\n') {
        fs::write(dir.path().join("target.cfg"), fx.target).unwrap();
        "target.cfg".to_string()
    } else {
        fx.target.to_string()
    };
    (dir, target)
}

fn xor_dir() -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("xor.ir"), XOR_SRC).unwrap();
    dir
}

fn validate(report: &Value) -> Result<(), String> {
    let schema: Value = serde_json::from_str(SCHEMA).unwrap();
    let compiled = jsonschema::JSONSchema::compile(&schema).expect("schema compiles");
    let result = compiled.validate(report);
    result.map_err(|errs| errs.map(|e| format!("{e} at {}", e.instance_path)).collect::<Vec<_>>().join("; "))
}

fn read_report(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(format!("{name}.report.json"))).unwrap()).unwrap()
}

#[test]
fn secure_xor_compiles_and_verifies() {
    let dir = xor_dir();
    let o = hdsafe(dir.path(), &["compile", "xor.ir", "--secure", "--verify"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let asm = fs::read_to_string(dir.path().join("xor.s")).unwrap();
    // The first xor must not overwrite the mask's register R1.
    assert!(!asm.contains("xor     R1, R2"), "{asm}");
    let r = read_report(dir.path(), "xor");
    assert_eq!(validate(&r), Ok(()));
    assert_eq!(r["mode"], "secure");
    assert_eq!(r["solver"]["status"], "optimal");
    let verdicts = r["verdicts"].as_array().unwrap();
    assert_eq!(verdicts.len(), 4);
    assert!(verdicts.iter().all(|v| v["verdict"] == "equivalent"));
}

#[test]
fn insecure_xor_is_reported_leaky() {
    let dir = xor_dir();
    let o = hdsafe(dir.path(), &["compile", "xor.ir", "--insecure", "--verify", "--json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(&o);
    assert_eq!(validate(&r), Ok(()));
    assert_eq!(r["mode"], "insecure");
    let asm = fs::read_to_string(dir.path().join("xor.s")).unwrap();
    assert!(asm.contains("xor     R1, R2"), "{asm}");
    let first = &r["verdicts"][0];
    assert_eq!(first["verdict"], "leaky");
    assert_eq!(first["delta_mean"], "4");
    assert_eq!(first["positions"][0]["kind"], "register");
}

#[test]
fn secure_and_insecure_xor_cost_the_same() {
    for target in ["thumb-like", "mips-like"] {
        let dir = xor_dir();
        let mut cost = Vec::new();
        for mode in ["--secure", "--insecure"] {
            let o = hdsafe(dir.path(), &["--target", target, "--json", "compile", "xor.ir", mode]);
            assert_eq!(code(&o), 0, "{}", stderr(&o));
            cost.push(json(&o)["objective"].as_i64().unwrap());
        }
        assert_eq!(cost[0], cost[1], "{target}");
    }
}

#[test]
fn every_feasible_fixture_compiles_securely() {
    for fx in FIXTURES.iter().filter(|f| f.feasible) {
        let (dir, target) = setup(fx);
        let copies = fx.copies.to_string();
        let ir = format!("{}.ir", fx.name);
        let o = hdsafe(dir.path(), &["--target", &target, "compile", &ir, "--copies", &copies, "--verify", "--dump-model"]);
        assert_eq!(code(&o), 0, "{}: {}", fx.name, stderr(&o));
        let name = fx.program().name;
        let r = read_report(dir.path(), &name);
        assert_eq!(validate(&r), Ok(()), "{}", fx.name);
        assert!(r["verdicts"].as_array().unwrap().iter().all(|v| v["verdict"] == "equivalent"), "{}", fx.name);
        assert!(dir.path().join(format!("{name}.model.txt")).exists());
    }
}

#[test]
fn unmasked_secret_exits_3_naming_spairs() {
    let fx = by_name("unmasked-and").unwrap();
    let (dir, target) = setup(fx);
    let o = hdsafe(dir.path(), &["--target", &target, "compile", "unmasked-and.ir", "--copies", "0"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("Spairs"), "{}", stderr(&o));
    assert!(!dir.path().join("unmasked_and.s").exists());
}

#[test]
fn input_errors_exit_2() {
    let dir = xor_dir();
    assert_eq!(code(&hdsafe(dir.path(), &["compile", "missing.ir"])), 2);
    let o = hdsafe(dir.path(), &["--target", "no/such/target.cfg", "compile", "xor.ir"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no/such/target.cfg"));
    fs::write(dir.path().join("bad.ir"), "func f width 4\nin t0:secret\nt1 = frob t0\nout t1\n").unwrap();
    let o = hdsafe(dir.path(), &["compile", "bad.ir"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("3:"), "{}", stderr(&o));
    assert_eq!(code(&hdsafe(dir.path(), &["compile"])), 2);
}

#[test]
fn exhausted_budget_exits_4() {
    let dir = xor_dir();
    let o = hdsafe(dir.path(), &["--json", "compile", "xor.ir", "--budget-nodes", "1"]);
    assert_eq!(code(&o), 4);
    let err: Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(err["exit"], 4);
}

#[test]
fn analyze_reports_types_and_sets() {
    let dir = xor_dir();
    let o = hdsafe(dir.path(), &["analyze", "xor.ir"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let a = json(&o);
    let class = |t: &str| a["temps"][t]["class"].as_str().unwrap().to_string();
    for t in ["t0", "t3"] {
        assert_eq!(class(t), "public");
    }
    for t in ["t2", "t5"] {
        assert_eq!(class(t), "secret");
    }
    for t in ["t1", "t4", "t6", "t7", "t8", "t9", "t10"] {
        assert_eq!(class(t), "random");
    }
    assert_eq!(a["sets"]["rpairs"].as_array().unwrap().len(), 14);
    assert_eq!(a["temps"]["t6"]["expr"], "t1 ^ t2");

    fs::write(dir.path().join("pub.ir"), "func p width 4\nin t0:public t1:public\nt2 = xor t0, t1\nout t2\n").unwrap();
    let a = json(&hdsafe(dir.path(), &["analyze", "pub.ir"]));
    for set in ["rpairs", "mmpairs"] {
        assert!(a["sets"][set].as_array().unwrap().is_empty());
    }
    for set in ["spairs", "entry", "mspairs"] {
        assert!(a["sets"][set].as_object().unwrap().is_empty());
    }
}

#[test]
fn oracle_agrees_on_a_small_kernel() {
    let fx = by_name("goubin").unwrap();
    let (dir, target) = setup(fx);
    let o = hdsafe(dir.path(), &["--target", &target, "oracle", "goubin.ir", "--copies", "0"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(&o);
    assert!(r["discrepancies"].as_array().unwrap().is_empty());
    assert!(r["secure"]["solutions"].as_u64().unwrap() > 0);
    assert_eq!(r["secure"]["optimum"], r["insecure"]["optimum"]);
    let o = hdsafe(dir.path(), &["--target", &target, "oracle", "goubin.ir", "--copies", "2"]);
    assert_eq!(code(&o), 2, "bound exceeded");
}

#[test]
fn simulate_replays_a_dumped_solution() {
    let dir = xor_dir();
    let o = hdsafe(dir.path(), &["compile", "xor.ir", "--insecure", "--dump-solution"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = hdsafe(
        dir.path(),
        &["simulate", "xor.ir", "--insecure", "--solution", "xor.solution.json", "--inputs", "3,5,0xa", "--secrets", "0/15", "--public", "6"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = json(&o);
    assert_eq!(s["outputs"], s["expected"]);
    assert_eq!(s["expected"][0], 3 ^ 5 ^ 0xa);
    assert_eq!(s["verdict"]["verdict"], "leaky");
    assert_eq!(s["trace"].as_array().unwrap().len(), 2);

    let o = hdsafe(dir.path(), &["simulate", "xor.ir", "--inputs", "1,2"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn schema_rejects_malformed_reports() {
    let dir = xor_dir();
    assert_eq!(code(&hdsafe(dir.path(), &["compile", "xor.ir"])), 0);
    let mut r = read_report(dir.path(), "xor");
    assert_eq!(validate(&r), Ok(()));
    r["mode"] = Value::from("fast");
    assert!(validate(&r).is_err());
    let mut r = read_report(dir.path(), "xor");
    r.as_object_mut().unwrap().remove("sets");
    assert!(validate(&r).is_err());
}
