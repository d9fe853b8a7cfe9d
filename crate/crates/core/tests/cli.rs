use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn obblabel(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_obblabel"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

fn fixtures(dir: &Path) {
    let o = obblabel(&["gen-fixtures", "--out", "fx", "--instances", "16", "--seed", "5"], dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn full_pipeline_through_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fixtures(dir);

    let inputs = ["--points", "fx/points.csv", "--proposals", "fx/proposals"];
    let convert = |out: &str, workers: &str| {
        let mut args = vec!["convert"];
        args.extend(inputs);
        args.extend(["--out", out, "--workers", workers]);
        code(&obblabel(&args, dir))
    };
    assert_eq!(convert("pseudo1", "1"), 0);
    assert_eq!(convert("pseudo4", "4"), 0);
    assert_eq!(read_dir_bytes(&dir.join("pseudo1")), read_dir_bytes(&dir.join("pseudo4")));

    let mut args = vec!["select"];
    args.extend(inputs);
    args.extend(["--out", "sel.json", "--with-supervision"]);
    assert_eq!(code(&obblabel(&args, dir)), 0);
    let sel: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("sel.json")).unwrap()).unwrap();
    assert_eq!(sel.as_array().unwrap().len(), 16);
    assert!(sel[0]["supervision"]["negative_points"].as_array().unwrap().len() == 8);

    let o = obblabel(&["evaluate", "--pseudo", "pseudo1", "--gt", "fx/gt", "--out", "report.json"], dir);
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.lines().last().unwrap().starts_with("mean"));
    assert!(dir.join("report.txt").exists());

    let mut args = vec!["oracle"];
    args.extend(inputs);
    args.extend(["--gt", "fx/gt", "--out", "oracle.json"]);
    let o = obblabel(&args, dir);
    assert_eq!(code(&o), 0);
    let cmp: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("oracle.json")).unwrap()).unwrap();
    let miou = |k: &str| cmp[k]["mean_miou"].as_f64().unwrap();
    assert!(miou("oracle") >= miou("fused"));
}

#[test]
fn config_file_and_flags_layer() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fixtures(dir);
    fs::write(dir.join("cfg.toml"), "strategy = \"sam-top\"\nalpha = 0.5\n").unwrap();
    let base = ["convert", "--points", "fx/points.csv", "--proposals", "fx/proposals", "--config", "cfg.toml"];

    let mut args = base.to_vec();
    args.extend(["--out", "a"]);
    assert_eq!(code(&obblabel(&args, dir)), 0);
    let mut args = base.to_vec();
    args.extend(["--out", "b", "--strategy", "fused"]);
    assert_eq!(code(&obblabel(&args, dir)), 0);
    assert_ne!(read_dir_bytes(&dir.join("a")), read_dir_bytes(&dir.join("b")));

    fs::write(dir.join("bad.toml"), "gamma = 1\n").unwrap();
    let o = obblabel(&["convert", "--points", "fx/points.csv", "--proposals", "fx/proposals", "--config", "bad.toml", "--out", "c"], dir);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("gamma"));
}

#[test]
fn validation_failures_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fixtures(dir);
    let cases: [&[&str]; 6] = [
        &["convert", "--points", "missing.csv", "--proposals", "fx/proposals", "--out", "x"],
        &["convert", "--points", "fx/points.csv", "--proposals", "fx/proposals", "--out", "x", "--alpha", "-1"],
        &["convert", "--points", "fx/points.csv", "--proposals", "fx/proposals", "--out", "x", "--strategy", "oracle-iou"],
        &["oracle", "--points", "fx/points.csv", "--proposals", "fx/proposals", "--out", "x.json"],
        &["analyze-symmetry", "--w", "1", "--h", "1", "--alpha", "2"],
        &["convert", "--bogus"],
    ];
    for args in cases {
        let o = obblabel(args, dir);
        assert_eq!(code(&o), 1, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }

    fs::write(dir.join("fx/proposals/fx0000.json"), "{\"image_id\": \"fx0000\"}").unwrap();
    let o = obblabel(&["convert", "--points", "fx/points.csv", "--proposals", "fx/proposals", "--out", "x"], dir);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("width"));
}

#[test]
fn analyze_symmetry_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let o = obblabel(&["analyze-symmetry", "--w", "1", "--h", "1", "--alpha", "0.41421356237309503"], dir);
    assert_eq!(code(&o), 0);
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r["margin"].as_f64().unwrap().abs() < 1e-9);

    // An axis-aligned 30x10 bar.
    let mask = obblabel::mask::BinaryMask::from_fn(40, 20, |c, r| (5..35).contains(&c) && (5..15).contains(&r)).unwrap();
    let rle = obblabel::io::RleRecord::from_mask(&mask);
    fs::write(dir.join("m.json"), serde_json::to_string(&rle).unwrap()).unwrap();
    let o = obblabel(&["analyze-symmetry", "--mask", "m.json"], dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["pixels"], 300);
    assert!(r["axis_angle_deg"].as_f64().unwrap().abs() < 1e-9);
    assert!(r["angle_gap_deg"].as_f64().unwrap() < 1e-9);
}
