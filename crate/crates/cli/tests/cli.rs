use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn curbramp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curbramp")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = curbramp(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn files_with_ext(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    v.sort();
    v
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Three-ramp synthetic corpus written to `<tmp>/corpus`.
fn corpus(tmp: &Path) -> Vec<PathBuf> {
    let dir = tmp.join("corpus");
    ok(&["synth", "-n", "3", "--seed", "5", "--out", s(&dir)]);
    files_with_ext(&dir, "lpc")
}

#[test]
fn synth_writes_cloud_and_truth_per_ramp() {
    let tmp = tempfile::tempdir().unwrap();
    let lpcs = corpus(tmp.path());
    assert_eq!(lpcs.len(), 3);
    assert_eq!(files_with_ext(&tmp.path().join("corpus"), "json").len(), 3);

    let single = tmp.path().join("single");
    ok(&["synth", "--noise-free", "--out", s(&single)]);
    assert!(single.join("ramp.lpc").is_file());
    assert!(single.join("ramp.truth.json").is_file());
}

#[test]
fn process_and_compare_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let lpcs = corpus(tmp.path());
    let out = tmp.path().join("out");
    let mut args = vec!["process", "--out", s(&out), "--seed", "1"];
    args.extend(lpcs.iter().map(|p| s(p)));
    let stdout = ok(&args);
    assert!(stdout.contains("3 ramps"), "{stdout}");

    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["counts"]["inputs"], 3);
    assert_eq!(files_with_ext(&out.join("ramps"), "json").len(), 3);

    // Feeding the automated values back as manual ones must agree everywhere.
    let csv = fs::read_to_string(out.join("measurements.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let keep: Vec<usize> = (0..header.len()).filter(|&i| !matches!(header[i], "status" | "verdict")).collect();
    let mut manual = String::new();
    let mut processed = 0;
    for line in std::iter::once(header.join(",")).chain(lines.map(str::to_string)) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells[1] == "processed" {
            processed += 1;
        } else if cells[1] != "status" {
            continue;
        }
        manual += &keep.iter().map(|&i| cells[i]).collect::<Vec<_>>().join(",");
        manual.push('\n');
    }
    let manual_path = tmp.path().join("manual.csv");
    fs::write(&manual_path, manual).unwrap();
    assert!(processed > 0, "no ramp passed QC:\n{csv}");
    let report = tmp.path().join("compare.json");
    let stdout = ok(&["compare", "--auto", s(&out), "--manual", s(&manual_path), "--out", s(&report)]);
    assert!(stdout.contains("agreement: 100.0%"), "{stdout}");
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(json["margins"], serde_json::json!([5, 10]));

    let other = tmp.path().join("other.csv");
    fs::write(&other, "id,A1\nnobody,5.0\n").unwrap();
    let res = curbramp(&["compare", "--auto", s(&out), "--manual", s(&other)]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn reports_do_not_depend_on_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let lpcs = corpus(tmp.path());
    let run = |workers: &str| {
        let out = tmp.path().join(format!("out{workers}"));
        let mut args = vec!["qc-report", "--out", s(&out), "--workers", workers];
        args.extend(lpcs.iter().map(|p| s(p)));
        ok(&args);
        out
    };
    let (a, b) = (run("1"), run("3"));
    for name in ["qc_summary.csv", "measurements.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let strip = |dir: &Path| {
        let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
        v["generated_at"] = serde_json::Value::Null;
        v
    };
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn raster_writes_patch_images_with_metadata() {
    let tmp = tempfile::tempdir().unwrap();
    let single = tmp.path().join("single");
    ok(&["synth", "--out", s(&single)]);
    let out = tmp.path().join("raster");
    ok(&["raster", s(&single.join("ramp.lpc")), "--patch-ft", "60", "--canvas", "256", "--out", s(&out)]);
    let pgms = files_with_ext(&out, "pgm");
    let metas = files_with_ext(&out, "json");
    assert!(!pgms.is_empty());
    assert_eq!(pgms.len(), metas.len());
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(&metas[0]).unwrap()).unwrap();
    assert_eq!(meta["kappa_max"], 50);
    assert!(meta["nonzero"].as_u64().unwrap() >= meta["raw_nonzero"].as_u64().unwrap());
    assert!(fs::read(&pgms[0]).unwrap().starts_with(b"P5"));
}

#[test]
fn usage_and_config_errors_exit_with_two() {
    assert_eq!(curbramp(&["process"]).status.code(), Some(2));
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"workers": 0}"#).unwrap();
    let lpc = tmp.path().join("x.lpc");
    fs::write(&lpc, "0 0 0 0 1\n").unwrap();
    assert_eq!(curbramp(&["process", "--config", s(&cfg), s(&lpc)]).status.code(), Some(2));
}

#[test]
fn missing_input_file_is_reported_per_ramp() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let stdout = ok(&["qc-report", "--out", s(&out), s(&tmp.path().join("absent.lpc"))]);
    assert!(stdout.contains("1 errored"), "{stdout}");
}
