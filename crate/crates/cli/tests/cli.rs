use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pnet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pnet"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("spawn pnet")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let o = pnet(dir, args);
    assert!(
        o.status.success(),
        "pnet {args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    pnet(dir, args).status.code().unwrap()
}

fn manifest(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(format!("{name}.manifest.json"))).unwrap())
        .unwrap()
}

fn set(key: &str, value: impl AsRef<Path>) -> String {
    format!("{key}={}", value.as_ref().display())
}

/// toygen → train → fit (linear, filter) → rho → report on the linear toy set.
fn toy_pipeline(dir: &Path) {
    let data = dir.join("data.pnd");
    let model = dir.join("model.pnm");
    ok(
        dir,
        &["toygen", "--seed", "4", "--set", "toy.n_samples=20000"],
    );
    ok(
        dir,
        &[
            "train",
            "--set",
            &set("data", &data),
            "--set",
            "arch=dense:1",
            "--set",
            "train.epochs=4",
        ],
    );
    for e in ["linear", "filter"] {
        ok(
            dir,
            &[
                "fit",
                "--estimator",
                e,
                "--set",
                &set("data", &data),
                "--set",
                &set("model", &model),
            ],
        );
    }
    let patterns = format!(
        "patterns={},{}",
        dir.join("patterns-linear.pnp").display(),
        dir.join("patterns-filter.pnp").display()
    );
    ok(
        dir,
        &[
            "rho",
            "--set",
            &set("data", &data),
            "--set",
            &set("model", &model),
            "--set",
            &patterns,
        ],
    );
    ok(dir, &["report"]);
}

#[test]
fn toy_pipeline_reports_high_rho_for_the_linear_estimator() {
    let dir = tempfile::tempdir().unwrap();
    toy_pipeline(dir.path());
    let report = manifest(dir.path(), "report");
    let linear = report["summary"]["rho.linear"][0].as_f64().unwrap();
    let filter = report["summary"]["rho.filter"][0].as_f64().unwrap();
    assert!(linear > 0.9, "rho(S_a) = {linear}");
    assert!(filter < linear);
    assert!(fs::read_to_string(dir.path().join("report.md"))
        .unwrap()
        .contains("| linear |"));
}

#[test]
fn repeated_runs_are_bit_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    toy_pipeline(a.path());
    toy_pipeline(b.path());
    for f in [
        "data.pnd",
        "model.pnm",
        "patterns-linear.pnp",
        "patterns-filter.pnp",
        "rho.csv",
        "rho_layers.csv",
        "report.md",
    ] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn manifest_lists_every_output_with_a_checksum() {
    let dir = tempfile::tempdir().unwrap();
    toy_pipeline(dir.path());
    let m = manifest(dir.path(), "rho");
    let outputs = m["outputs"].as_array().unwrap();
    let names: Vec<&str> = outputs
        .iter()
        .map(|o| o["path"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["rho.csv", "rho_layers.csv"]);
    for o in outputs {
        assert_eq!(o["sha256"].as_str().unwrap().len(), 64);
    }
    let distinct: std::collections::BTreeSet<&str> = m["inputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["sha256"].as_str().unwrap())
        .collect();
    assert_eq!(distinct.len(), 4, "model, two pattern files and data");
}

#[test]
fn overlapping_rho_splits_warn_but_succeed() {
    let dir = tempfile::tempdir().unwrap();
    toy_pipeline(dir.path());
    let w = manifest(dir.path(), "rho")["warnings"]
        .as_array()
        .unwrap()
        .clone();
    assert!(w
        .iter()
        .any(|w| w.as_str().unwrap().contains("split hygiene")));

    // disjoint probe and evaluation ranges, both outside the fitting half
    let d = dir.path();
    ok(
        d,
        &[
            "rho",
            "--split",
            "10000..15000",
            "--set",
            "rho.eval_split=15000..20000",
            "--set",
            &set("data", d.join("data.pnd")),
            "--set",
            &set("model", d.join("model.pnm")),
            "--set",
            &set("patterns", d.join("patterns-linear.pnp")),
        ],
    );
    assert!(manifest(d, "rho")["warnings"]
        .as_array()
        .unwrap()
        .is_empty());
}

#[test]
fn explain_emits_all_seven_methods() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "toygen",
            "--set",
            "toy.kind=images",
            "--set",
            "toy.n_samples=300",
            "--set",
            "images.size=12",
        ],
    );
    let data = set("data", d.join("data.pnd"));
    let model = set("model", d.join("model.pnm"));
    ok(
        d,
        &[
            "train",
            "--set",
            &data,
            "--set",
            "arch=conv:2:3,relu,pool:2,dense:10",
            "--set",
            "train.epochs=1",
        ],
    );
    ok(d, &["fit", "--set", &data, "--set", &model]);
    let patterns = set("patterns", d.join("patterns-two_component.pnp"));
    ok(
        d,
        &[
            "explain", "--set", &data, "--set", &model, "--set", &patterns, "--target", "2",
        ],
    );
    let m = manifest(d, "explain");
    let mut methods: Vec<&str> = m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|o| o["path"].as_str().unwrap().ends_with(".png"))
        .map(|o| o["method"].as_str().unwrap())
        .collect();
    methods.sort();
    assert_eq!(
        methods,
        [
            "deconvnet",
            "dtd_w2",
            "guided_backprop",
            "lrp_z",
            "pattern_attribution",
            "pattern_net",
            "saliency"
        ]
    );
    let side: Value =
        serde_json::from_str(&fs::read_to_string(d.join("explain/0-lrp_z.json")).unwrap()).unwrap();
    assert_eq!(side["target"], 2);
    assert_eq!(side["normalization"], "attribution");

    // without patterns the pattern methods are skipped with a warning
    ok(d, &["explain", "--set", &data, "--set", &model]);
    let m = manifest(d, "explain");
    assert_eq!(m["outputs"].as_array().unwrap().len(), 5 * 3);
    assert_eq!(m["warnings"].as_array().unwrap().len(), 1);

    // an explicit pattern method without patterns is a config error
    assert_eq!(
        code(
            d,
            &[
                "explain",
                "--set",
                &data,
                "--set",
                &model,
                "--method",
                "pattern_net"
            ]
        ),
        1
    );
}

#[test]
fn config_file_with_include_drives_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("base.cfg"), "toy.n_samples = 50 # small\nseed = 9\n").unwrap();
    fs::write(d.join("run.cfg"), "include base.cfg\ntoy.noise_std = 0.5\n").unwrap();
    ok(
        d,
        &["toygen", "--config", d.join("run.cfg").to_str().unwrap()],
    );
    let m = manifest(d, "toygen");
    assert_eq!(m["config"]["seed"], "9");
    assert_eq!(m["summary"]["samples"], 50);
}

#[test]
fn exit_codes_follow_the_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // 1: config (unknown key, bad value, missing artifact)
    assert_eq!(code(d, &["toygen", "--set", "toy.bogus=1"]), 1);
    assert_eq!(
        code(
            d,
            &["toygen", "--set", "toy.a_s=1,1", "--set", "toy.a_d=2,2"]
        ),
        1
    );
    assert_eq!(code(d, &["fit", "--set", "model=/does/not/exist"]), 1);
    assert_eq!(code(d, &["report"]), 1);
    // 2: data
    assert_eq!(code(d, &["toygen", "--set", "toy.n_samples=0"]), 2);
    fs::write(d.join("junk.pnd"), b"not a container").unwrap();
    assert_eq!(
        code(
            d,
            &[
                "train",
                "--set",
                &set("data", d.join("junk.pnd")),
                "--set",
                "arch=dense:1"
            ]
        ),
        2
    );

    ok(d, &["toygen", "--set", "toy.n_samples=200"]);
    let data = set("data", d.join("data.pnd"));
    ok(
        d,
        &[
            "train",
            "--set",
            &data,
            "--set",
            "arch=dense:1",
            "--set",
            "train.epochs=1",
        ],
    );
    let model = set("model", d.join("model.pnm"));
    ok(d, &["fit", "--set", &data, "--set", &model]);
    let patterns = set("patterns", d.join("patterns-two_component.pnp"));

    // 3: dimension (a 3-input model against 2-D data)
    let other = tempfile::tempdir().unwrap();
    let o = other.path();
    ok(
        o,
        &[
            "toygen",
            "--set",
            "toy.n_samples=200",
            "--set",
            "toy.a_s=1,0,0",
            "--set",
            "toy.a_d=0,1,1",
        ],
    );
    ok(
        o,
        &[
            "train",
            "--set",
            &set("data", o.join("data.pnd")),
            "--set",
            "arch=dense:1",
            "--set",
            "train.epochs=1",
        ],
    );
    assert_eq!(
        code(
            o,
            &[
                "fit",
                "--set",
                &data,
                "--set",
                &set("model", o.join("model.pnm"))
            ]
        ),
        3
    );

    // 4: binding (patterns of another model)
    let third = tempfile::tempdir().unwrap();
    ok(
        third.path(),
        &[
            "train",
            "--set",
            &data,
            "--set",
            "arch=dense:1",
            "--set",
            "train.epochs=2",
        ],
    );
    let stale = set("model", third.path().join("model.pnm"));
    assert_eq!(
        code(
            d,
            &["explain", "--set", &data, "--set", &stale, "--set", &patterns]
        ),
        4
    );

    // 5: numerical (training diverges)
    assert_eq!(
        code(
            d,
            &[
                "train",
                "--set",
                &data,
                "--set",
                "arch=dense:1",
                "--set",
                "train.optimizer=sgd",
                "--set",
                "train.lr=1e30"
            ]
        ),
        5
    );
}

#[test]
fn ingest_csv_and_idx() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("t.csv"), "a,b,label\n1,2,0\n3,4,1\n5,6,0\n").unwrap();
    ok(
        d,
        &[
            "ingest",
            "--set",
            "ingest.format=csv",
            "--set",
            &set("ingest.path", d.join("t.csv")),
        ],
    );
    let m = manifest(d, "ingest");
    assert_eq!(m["summary"]["samples"], 3);
    assert_eq!(m["summary"]["input_shape"], serde_json::json!([2]));

    let mut images = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
    images.extend([0, 255, 10, 20, 30, 40, 50, 60]);
    let mut labels = vec![0, 0, 8, 1, 0, 0, 0, 2];
    labels.extend([3, 1]);
    fs::write(d.join("img.idx"), &images).unwrap();
    fs::write(d.join("lab.idx"), &labels).unwrap();
    let args = [
        "ingest".to_string(),
        "--set".into(),
        "ingest.format=idx".into(),
        "--set".into(),
        set("ingest.path", d.join("img.idx")),
        "--set".into(),
        set("ingest.labels", d.join("lab.idx")),
    ];
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(d, &args);
    let m = manifest(d, "ingest");
    assert_eq!(m["summary"]["input_shape"], serde_json::json!([1, 2, 2]));

    images[3] = 9;
    fs::write(d.join("img.idx"), &images).unwrap();
    assert_eq!(code(d, &args), 2);
}
