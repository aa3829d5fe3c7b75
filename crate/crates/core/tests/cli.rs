use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn grushin(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grushin"))
        .args(args)
        .arg("--output-dir")
        .arg(out)
        .env_remove("GRUSHIN_THREADS")
        .output()
        .unwrap()
}

fn write_cfg(dir: &Path, body: &str) -> String {
    let p = dir.join("run.cfg");
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

const SMALL: &str = "gamma=1\na=0.3\nb=0.8\nT=0.3\nnx=401\nnt=100\nn_max=64\n";

fn schema_for(file: &str) -> Option<serde_json::Value> {
    let stem = file.strip_suffix(".json")?;
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{stem}.schema.json"));
    Some(serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap())
}

/// Validates every JSON file against its schema and checks CSV headers.
fn check_outputs(dir: &Path) -> usize {
    let mut seen = 0;
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        let name = p.file_name().unwrap().to_str().unwrap().to_string();
        let text = fs::read_to_string(&p).unwrap();
        if name.ends_with(".json") {
            let schema = schema_for(&name).unwrap_or_else(|| panic!("no schema for {name}"));
            let v: serde_json::Value = serde_json::from_str(&text).unwrap();
            let validator = jsonschema::validator_for(&schema).unwrap();
            let errs: Vec<String> = validator.iter_errors(&v).map(|e| e.to_string()).collect();
            assert!(errs.is_empty(), "{name}: {errs:?}");
            seen += 1;
        } else if name.ends_with(".csv") {
            let header = text.lines().next().unwrap();
            assert!(header.split(',').all(|c| c.chars().next().is_some_and(|ch| ch.is_ascii_alphabetic())), "{name}: {header}");
            seen += 1;
        }
    }
    seen
}

#[test]
fn eigen_prints_lambda_and_writes_csv() {
    let d = tempfile::tempdir().unwrap();
    let o = grushin(&["eigen", "--gamma", "1", "--n", "64"], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = String::from_utf8(o.stdout).unwrap();
    assert!(s.contains("lambda = 2.01"), "{s}");
    let csv = fs::read_to_string(d.path().join("eigen_n64.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2002);
    check_outputs(d.path());
}

#[test]
fn trichotomy_table() {
    let d = tempfile::tempdir().unwrap();
    let demo = Path::new(env!("CARGO_MANIFEST_DIR")).join("demo.cfg");
    let o = grushin(&["trichotomy", "--config", demo.to_str().unwrap()], d.path());
    assert_eq!(o.status.code(), Some(0));
    let s = String::from_utf8(o.stdout).unwrap();
    for g in ["0.5", "1", "2"] {
        assert!(s.lines().any(|l| l.split_whitespace().next() == Some(g)), "{s}");
    }
    assert!(s.contains("only bracketed"));
    check_outputs(d.path());
}

#[test]
fn usage_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    let o = grushin(&["eigen", "--config", "/nonexistent/x.cfg"], d.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot read config"));

    let bad = write_cfg(d.path(), "gamma=1\na=0.8\nb=0.3\nT=1\nnx=201\nnt=20\nn_max=4\n");
    let o = grushin(&["eigen", "--config", &bad], d.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("require a < b"));

    let cfg = write_cfg(d.path(), "gamma=0.5\na=0.3\nb=0.8\nT=1\nnx=101\nnt=20\nn_max=4\n");
    let o = grushin(&["eigen", "--n", "256", "--config", &cfg], d.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("need nx >="));

    let o = grushin(&["crossover", "--config", &cfg], d.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn every_command_emits_valid_outputs() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_cfg(d.path(), SMALL);
    for cmd in [
        &["scaling"][..],
        &["bounds"],
        &["observability"],
        &["crossover"],
        &["control", "--gamma", "0.5", "--modes", "4"],
        &["carleman", "--n", "8"],
    ] {
        let out = d.path().join(cmd[0]);
        let mut args = cmd.to_vec();
        args.extend(["--config", &cfg]);
        let o = grushin(&args, &out);
        assert!(matches!(o.status.code(), Some(0 | 2)), "{cmd:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(check_outputs(&out) >= 2, "{cmd:?}");
    }
}

#[test]
fn threads_from_environment() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_cfg(d.path(), SMALL);
    let o = Command::new(env!("CARGO_BIN_EXE_grushin"))
        .args(["eigen", "--n", "4", "--config", &cfg, "--output-dir"])
        .arg(d.path())
        .env("GRUSHIN_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["threads"], 3);
    assert_eq!(m["command"], "eigen");
}

#[test]
fn seeded_control_is_reproducible() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_cfg(d.path(), SMALL);
    let run = |seed: &str, sub: &str| {
        let out = d.path().join(sub);
        let o = grushin(&["control", "--gamma", "0.5", "--modes", "2", "--seed", seed, "--config", &cfg], &out);
        assert_eq!(o.status.code(), Some(0));
        fs::read(out.join("control.csv")).unwrap()
    };
    assert_eq!(run("7", "a"), run("7", "b"));
    assert_ne!(run("7", "a"), run("8", "c"));
}
