use std::path::Path;
use std::process::{Command, Output};

fn recipekg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recipekg")).args(args).output().unwrap()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn help_and_usage_exit_codes() {
    assert_eq!(recipekg(&["--help"]).status.code(), Some(0));
    assert_eq!(recipekg(&["split", "--help"]).status.code(), Some(0));
    assert_eq!(recipekg(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(recipekg(&["split"]).status.code(), Some(2));
    assert_eq!(recipekg(&["split", "--graph", "x", "--out", "y", "--protocol", "bogus"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = recipekg(&["split", "--graph", &p(dir.path(), "missing.tsv"), "--out", &p(dir.path(), "s")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.tsv"));

    std::fs::write(dir.path().join("bad.tsv"), "PSN:1\tpsn:likes:rcp\n").unwrap();
    let out = recipekg(&["split", "--graph", &p(dir.path(), "bad.tsv"), "--out", &p(dir.path(), "s")]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_values_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(recipekg(&["synth", "--benchmark", "interest", "--out", &p(d, "int")]).status.success());
    std::fs::write(d.join("c.conf"), "# clustering\nk = 5\nmax-iter = 50\nseed = 3\n").unwrap();
    let emb = p(d, "int/recipe_text.emb");

    let out = recipekg(&["cluster", "--embeddings", &emb, "--config", &p(d, "c.conf"), "--out", &p(d, "a.tsv")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("a.tsv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["k"], 5);
    assert_eq!(manifest["config"]["max_iter"], 50);
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["threads"], 1);
    let outputs = manifest["outputs"].as_array().unwrap();
    assert_eq!(outputs[0]["sha256"].as_str().unwrap().len(), 64);

    // flags on the command line win over the file
    let out = recipekg(&["cluster", "--embeddings", &emb, "--config", &p(d, "c.conf"), "--k", "3", "--out", &p(d, "b.tsv")]);
    assert!(out.status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("b.tsv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["k"], 3);

    std::fs::write(d.join("bad.conf"), "nonsense = 1\n").unwrap();
    let out = recipekg(&["cluster", "--embeddings", &emb, "--config", &p(d, "bad.conf"), "--out", &p(d, "c.tsv")]);
    assert_eq!(out.status.code(), Some(2));
    let out = recipekg(&["cluster", "--embeddings", &emb, "--config", &p(d, "none.conf"), "--out", &p(d, "c.tsv")]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn metrics_written_as_json_and_flat_text() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for args in [
        vec!["synth", "--benchmark", "blocks", "--out", &p(d, "b")],
        vec!["split", "--graph", &p(d, "b/graph.tsv"), "--out", &p(d, "s")],
        vec!["train-kge", "--split", &p(d, "s"), "--epochs", "3", "--out", &p(d, "m.kge")],
        vec!["eval", "--split", &p(d, "s"), "--model", &p(d, "m.kge"), "--out", &p(d, "e.json")],
    ] {
        let out = recipekg(&args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("e.json")).unwrap()).unwrap();
    let flat = std::fs::read_to_string(d.join("e.txt")).unwrap();
    let hit = json["metrics"]["hit_at_k"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&hit));
    assert!(flat.lines().any(|l| l == format!("metrics.hit_at_k={hit}")), "{flat}");
}

#[test]
fn thread_count_does_not_change_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for args in [
        vec!["synth", "--benchmark", "blocks", "--out", &p(d, "b")],
        vec!["split", "--graph", &p(d, "b/graph.tsv"), "--out", &p(d, "s")],
        vec!["train-kge", "--split", &p(d, "s"), "--epochs", "3", "--out", &p(d, "m.kge")],
    ] {
        assert!(recipekg(&args).status.success());
    }
    let eval = |threads: &str, out: &str| {
        let o = recipekg(&["eval", "--split", &p(d, "s"), "--model", &p(d, "m.kge"), "--threads", threads, "--out", &p(d, out)]);
        assert!(o.status.success());
        std::fs::read(d.join(out)).unwrap()
    };
    assert_eq!(eval("1", "one.json"), eval("4", "four.json"));
}
