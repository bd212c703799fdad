use std::path::Path;
use std::process::{Command, Output};

use openmetrics_cli::{run, EXIT_INVALID, EXIT_IO, EXIT_OK};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_openmetrics"))
        .args(args)
        .env_remove("OPENMETRICS_WORDNET")
        .output()
        .unwrap()
}

fn argv(args: &[&str]) -> Vec<String> {
    std::iter::once("openmetrics").chain(args.iter().copied()).map(String::from).collect()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const INSTANCE: &str = r#"{
  "task": "instance",
  "categories": [{"id": 1, "name": "couch"}, {"id": 2, "name": "sofa"}],
  "images": [{"id": 7, "width": 2, "height": 2}],
  "annotations": [
    {"image_id": 7, "category_id": 1, "segmentation": {"size": [2, 2], "counts": [0, 4]}},
    {"image_id": 7, "category_id": 2, "score": 0.9, "segmentation": {"size": [2, 2], "counts": "04"}}
  ]
}"#;

#[test]
fn unknown_flag_prints_usage_and_fails() {
    let out = bin(&["eval-semantic", "--bogus"]);
    assert_eq!(out.status.code(), Some(EXIT_INVALID));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert!(out.stdout.is_empty());
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(run(argv(&["--help"])), EXIT_OK);
    assert_eq!(run(argv(&["eval-panoptic", "--help"])), EXIT_OK);
    assert_eq!(run(argv(&["--version"])), EXIT_OK);
}

#[test]
fn missing_input_is_io_error() {
    assert_eq!(run(argv(&["sim-stats", "--sim", "/nonexistent/S.json"])), EXIT_IO);
    assert_eq!(run(argv(&["eval-semantic", "--manifest", "/nonexistent/m.json"])), EXIT_IO);
}

#[test]
fn validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(dir.path(), "m.json", INSTANCE);
    // open mode without a matrix
    assert_eq!(run(argv(&["eval-instance", "--manifest", &m, "--mode", "open"])), EXIT_INVALID);
    // wrong task for the command
    assert_eq!(run(argv(&["eval-semantic", "--manifest", &m])), EXIT_INVALID);
    // malformed manifest
    let bad = write(dir.path(), "bad.json", r#"{"task": "instance", "categories": [], "images": [{"id": 1}]}"#);
    let out = bin(&["eval-instance", "--manifest", &bad]);
    assert_eq!(out.status.code(), Some(EXIT_INVALID));
    assert!(String::from_utf8_lossy(&out.stderr).contains("images[0]"));
    // matrix lacking a category
    let s = write(
        dir.path(),
        "S.json",
        &openmetrics::SimilarityMatrix::identity(vec![openmetrics::LabelSpec::named(1, "couch")])
            .unwrap()
            .to_json(),
    );
    assert_eq!(run(argv(&["eval-instance", "--manifest", &m, "--sim", &s, "--mode", "open"])), EXIT_INVALID);
}

#[test]
fn open_instance_credits_similar_label() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(dir.path(), "m.json", INSTANCE);
    let labels = vec![openmetrics::LabelSpec::named(1, "couch"), openmetrics::LabelSpec::named(2, "sofa")];
    let sim = openmetrics::SimilarityMatrix::new(labels, openmetrics::Method::Path, vec![1.0, 0.8, 0.8, 1.0]).unwrap();
    let s = write(dir.path(), "S.json", &sim.to_json());
    let report = dir.path().join("r.json");
    let r = report.to_string_lossy().into_owned();

    assert_eq!(run(argv(&["eval-instance", "--manifest", &m, "--sim", &s, "--mode", "open", "--out", &r])), EXIT_OK);
    let open: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(open["mode"], "open");
    assert_eq!(open["similarity"]["digest"], sim.digest());
    assert_eq!(open["provenance"]["inputs"]["similarity"], sim.digest());
    // one gt, matched with weight 0.8: precision 1 up to recall 0.8
    let ap50 = open["summary"]["AP50"].as_f64().unwrap();
    assert!((ap50 - 81.0 / 101.0).abs() < 1e-5, "{ap50}");

    assert_eq!(run(argv(&["eval-instance", "--manifest", &m, "--mode", "vanilla", "--out", &r])), EXIT_OK);
    let vanilla: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(vanilla["summary"]["AP50"], 0.0);
    assert!(vanilla["similarity"].is_null());
}

#[test]
fn build_sim_from_wnid_list() {
    let dir = tempfile::tempdir().unwrap();
    let labels = write(dir.path(), "wnids.txt", "n02084071\nn02121620\n");
    let out_path = dir.path().join("S.json");
    let wn = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/wordnet-3.0");
    let out = bin(&[
        "build-sim",
        "--labels",
        &labels,
        "--wordnet",
        wn.to_str().unwrap(),
        "--method",
        "path",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&out.stderr));
    // dog and cat are 4 edges apart: S = [[1, .2], [.2, 1]]
    assert_eq!(String::from_utf8_lossy(&out.stdout), "mean 0.60000 std 0.40000\n");
    let s = openmetrics::SimilarityMatrix::from_json(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(s.get(0, 1), 0.2);

    // WordNet methods need a dictionary
    assert_eq!(
        run(argv(&["build-sim", "--labels", &labels, "--method", "wup", "--out", out_path.to_str().unwrap()])),
        EXIT_INVALID
    );
}
