use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cfeval::data::{EvaluationBundle, PredictionSet, TensorSet};
use cfeval::io::{self, TensorFormat};

fn cfeval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfeval"))
        .args(args)
        .output()
        .expect("run cfeval")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["synth", "--seed", "7", "--n", "200", "--out", s(out)];
    args.extend_from_slice(extra);
    cfeval(&args)
}

fn evaluate_to(bundles: &Path, out: &Path) {
    let mut args = vec![
        "evaluate".to_string(),
        "--format".into(),
        "json".into(),
        "--out".into(),
        s(out).into(),
    ];
    for m in ["tiny", "mid", "prototype"] {
        args.extend(["--bundle".to_string(), s(&bundles.join(m)).into()]);
    }
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_eq!(cfeval(&refs).status.code(), Some(0));
}

fn report_files(dir: &Path) -> Vec<String> {
    ["tiny", "mid", "prototype"]
        .iter()
        .map(|m| s(&dir.join(format!("{m}.json"))).to_string())
        .collect()
}

fn audit(a: &[String], b: &[String]) -> Output {
    let mut args = vec!["audit", "--reports-a"];
    args.extend(a.iter().map(String::as_str));
    args.push("--reports-b");
    args.extend(b.iter().map(String::as_str));
    cfeval(&args)
}

fn dir_bytes(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn evaluate_json_is_parseable() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(
        synth(tmp.path(), &["--methods", "tiny"]).status.code(),
        Some(0)
    );
    let out = cfeval(&[
        "evaluate",
        "--format",
        "json",
        "--bundle",
        s(&tmp.path().join("tiny")),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["method_name"], "tiny");
}

#[test]
fn combined_table_shows_expected_best_methods() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(synth(&tmp.path().join("b"), &[]).status.code(), Some(0));
    evaluate_to(&tmp.path().join("b"), &tmp.path().join("r"));
    let ranking: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("r/ranking.json")).unwrap()).unwrap();
    let best = |m: &str| {
        ranking["metrics"]
            .as_array()
            .unwrap()
            .iter()
            .find(|r| r["metric"] == m)
            .unwrap()["best_method"]
            .as_str()
            .unwrap()
            .to_string()
    };
    assert_eq!(best("EN"), "tiny");
    assert_eq!(best("Oracle"), "prototype");
}

#[test]
fn im1_without_reconstructions_names_missing_role() {
    let tmp = tempfile::tempdir().unwrap();
    let x = TensorSet::new("x", vec![2, 2], vec![0.0, 0.1, 0.2, 0.3]).unwrap();
    let c = TensorSet::new("c", vec![2, 2], vec![0.5, 0.1, 0.2, 0.9]).unwrap();
    let p = PredictionSet::from_rows(&[vec![0.9, 0.1], vec![0.8, 0.2]]).unwrap();
    let q = PredictionSet::from_rows(&[vec![0.1, 0.9], vec![0.2, 0.8]]).unwrap();
    io::save_bundle(
        &EvaluationBundle::new("bare", (0.0, 1.0), x, c, p, q),
        tmp.path(),
    )
    .unwrap();
    let out = cfeval(&["evaluate", "--metrics", "im1", "--bundle", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("reconstruction"));
}

#[test]
fn missing_bundle_dir_exits_2() {
    assert_eq!(
        cfeval(&["evaluate", "--bundle", "/nonexistent/bundle"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn unknown_flag_exits_3_with_usage_on_stderr() {
    let out = cfeval(&["evaluate", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn audit_across_ranges_and_with_swapped_names() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    assert_eq!(
        synth(&t.join("centred"), &["--range", "-0.5,0.5"])
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        synth(&t.join("unit"), &["--range", "0,1"]).status.code(),
        Some(0)
    );
    evaluate_to(&t.join("centred"), &t.join("ra"));
    evaluate_to(&t.join("unit"), &t.join("rb"));
    let (a, b) = (report_files(&t.join("ra")), report_files(&t.join("rb")));

    let same = audit(&a, &a);
    assert_eq!(same.status.code(), Some(0));
    assert!(!String::from_utf8_lossy(&same.stdout).contains("**NO**"));

    assert_eq!(audit(&a, &b).status.code(), Some(0));

    let swapped_dir = t.join("swapped");
    std::fs::create_dir_all(&swapped_dir).unwrap();
    let mut swapped = Vec::new();
    for (path, to) in b.iter().zip(["prototype", "mid", "tiny"]) {
        let mut v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        v["method_name"] = to.into();
        let out = swapped_dir.join(format!("{to}.json"));
        std::fs::write(&out, serde_json::to_string(&v).unwrap()).unwrap();
        swapped.push(s(&out).to_string());
    }
    let out = audit(&a, &swapped);
    assert_eq!(out.status.code(), Some(1));
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(
        table
            .lines()
            .any(|l| l.contains("IM2") && l.contains("**NO**")),
        "{table}"
    );
}

#[test]
fn audit_method_set_mismatch_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(synth(&tmp.path().join("b"), &[]).status.code(), Some(0));
    evaluate_to(&tmp.path().join("b"), &tmp.path().join("r"));
    let a = report_files(&tmp.path().join("r"));
    assert_eq!(audit(&a, &a[..2]).status.code(), Some(1));
}

#[test]
fn synth_output_loads_clean_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (one, two) = (tmp.path().join("one"), tmp.path().join("two"));
    assert_eq!(synth(&one, &[]).status.code(), Some(0));
    assert_eq!(synth(&two, &[]).status.code(), Some(0));
    for m in ["tiny", "mid", "prototype"] {
        let loaded = io::load_bundle_with_warnings(&one.join(m)).unwrap();
        assert!(loaded.warnings.is_empty());
    }
    assert!(one.join("provenance.json").exists());
    assert_eq!(dir_bytes(&one), dir_bytes(&two));
}

#[test]
fn synth_rejects_markers_at_or_above_dim() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(
        synth(tmp.path(), &["--dim", "8", "--markers", "8"])
            .status
            .code(),
        Some(1)
    );
}

fn blobs(path: &Path) {
    let values: Vec<f64> = (0..100 * 28 * 28)
        .map(|i| ((i % 97) as f64) / 96.0)
        .collect();
    io::write_tensor(
        &TensorSet::new("blobs", vec![100, 28, 28], values).unwrap(),
        path,
        TensorFormat::Npy,
    )
    .unwrap();
}

#[test]
fn fakemnist_paints_labels_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("blobs.npy");
    blobs(&input);
    let run = |out: &Path| {
        cfeval(&[
            "fakemnist",
            "--images",
            s(&input),
            "--height",
            "28",
            "--width",
            "28",
            "--classes",
            "10",
            "--seed",
            "3",
            "--out",
            s(out),
        ])
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run(&a).status.code(), Some(0));
    assert_eq!(run(&b).status.code(), Some(0));
    assert_eq!(
        std::fs::read(a.join("labels.csv")).unwrap(),
        std::fs::read(b.join("labels.csv")).unwrap()
    );

    let images = io::read_tensor(&a.join("images.npy")).unwrap();
    let labels = io::read_labels(&a.join("labels.csv")).unwrap();
    for (i, &label) in labels.iter().enumerate() {
        let img = images.sample(i);
        let hot: Vec<usize> = (0..10).filter(|&j| img[j] == 1.0).collect();
        assert!((0..10).all(|j| img[j] == 0.0 || img[j] == 1.0));
        assert_eq!(hot, vec![label], "sample {i}");
    }
}

#[test]
fn fakemnist_too_narrow_and_unreadable() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("blobs.npy");
    blobs(&input);
    let out = s(tmp.path());
    let narrow = cfeval(&[
        "fakemnist",
        "--images",
        s(&input),
        "--height",
        "28",
        "--width",
        "28",
        "--classes",
        "30",
        "--out",
        out,
    ]);
    assert_eq!(narrow.status.code(), Some(1));
    let missing = cfeval(&[
        "fakemnist",
        "--images",
        "/nonexistent.npy",
        "--height",
        "28",
        "--width",
        "28",
        "--out",
        out,
    ]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn report_extremes_and_empty_input() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(
        synth(&tmp.path().join("b"), &["--methods", "tiny"])
            .status
            .code(),
        Some(0)
    );
    let r = tmp.path().join("r");
    let out = cfeval(&[
        "evaluate",
        "--format",
        "json",
        "--out",
        s(&r),
        "--bundle",
        s(&tmp.path().join("b/tiny")),
    ]);
    assert_eq!(out.status.code(), Some(0));

    let out = cfeval(&[
        "report",
        "--per-sample-extremes",
        "3",
        "--in",
        s(&r.join("tiny.json")),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains(" (") && text.contains("| tiny |"));
    let en_rows = text
        .lines()
        .filter(|l| l.starts_with("| tiny | EN |"))
        .count();
    assert_eq!(en_rows, 6, "{text}");

    assert_eq!(cfeval(&["report", "--in"]).status.code(), Some(3));
    assert_eq!(
        cfeval(&["report", "--in", "/nonexistent.json"])
            .status
            .code(),
        Some(2)
    );
}
