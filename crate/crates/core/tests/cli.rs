use std::path::Path;

use contract_forge::cli::run;

fn argv(out: &Path, rest: &[&str]) -> Vec<String> {
    let mut v = vec!["contract-forge".to_string()];
    v.extend(rest.iter().map(|s| s.to_string()));
    v.push("--out".into());
    v.push(out.display().to_string());
    v
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn contract_robust_and_partial() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("robust");
    assert_eq!(run(argv(&out, &["contract", "--scenario", "cournot", "--target", "0.5"])), 0);
    for f in ["menu.csv", "schedule.csv", "dual_transfer.csv", "report.json", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let rep = json(&out.join("report.json"));
    assert_eq!(rep["certification"]["verdict"], "unique");
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["tool"], "contract-forge");
    assert!(manifest["outputs"].as_array().unwrap().len() >= 5);

    let out = dir.path().join("partial");
    assert_eq!(run(argv(&out, &["contract", "--scenario", "cournot", "--target", "0.5", "--mode", "partial"])), 0);
    let rep = json(&out.join("report.json"));
    assert_eq!(rep["certification"]["verdict"], "multiple");
}

#[test]
fn figure_and_optimize() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig");
    assert_eq!(run(argv(&out, &["figure", "--panel", "c"])), 0);
    let csv = std::fs::read_to_string(out.join("panel_c.csv")).unwrap();
    assert!(csv.starts_with("a,h_r,h_rbar,member"));
    assert!(out.join("panel_c.gp").exists());

    let out = dir.path().join("opt");
    assert_eq!(run(argv(&out, &["optimize", "--scenario", "boycott", "--grid", "201"])), 0);
    let rep = json(&out.join("optimize.json"));
    assert_eq!(rep["robustness_free"], true);
    assert!(out.join("scan.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_path_buf();
    assert_eq!(run(argv(&out, &["contract", "--scenario", "nowhere", "--target", "0.5"])), 2);
    assert_eq!(run(argv(&out, &["figure", "--panel", "z"])), 2);
    assert_eq!(run(argv(&out, &["contract", "--scenario", "cournot", "--target", "0.4", "--target2", "0.6"])), 3);
    assert_eq!(
        run(argv(&out, &["contract", "--scenario", "networked", "--target", "0.5", "--mode", "full-access"])),
        3
    );
}
