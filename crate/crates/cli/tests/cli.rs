use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn zonecat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zonecat"))
        .args(args)
        .env_remove("ZONECAT_DATA_DIR")
        .output()
        .expect("spawn zonecat")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn plan_one_camera_one_day() {
    let o = zonecat(&["plan", "--cameras", "1", "--days", "1"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let day = out.lines().find(|l| l.starts_with("1,day,")).unwrap();
    assert!(day.contains(",3.37e8,"), "{day}");
}

#[test]
fn plan_array_decade() {
    let o = zonecat(&["plan", "--cameras", "36"]);
    let out = stdout(&o);
    assert!(out.lines().any(|l| l.starts_with("36,year,260,3.16e12,")), "{out}");
    assert!(out.lines().any(|l| l.starts_with("36,10 years,2600,3.16e13,")), "{out}");
}

#[test]
fn exit_codes_separate_usage_config_and_runtime_errors() {
    assert_eq!(zonecat(&[]).status.code(), Some(2));
    assert_eq!(zonecat(&["frobnicate"]).status.code(), Some(2));
    // Config: no data directory.
    assert_eq!(zonecat(&["merge", "--partition", "0", "--night", "0"]).status.code(), Some(2));
    assert_eq!(zonecat(&["--k", "0", "plan"]).status.code(), Some(2));
    // Runtime: input file does not exist.
    let dir = tempfile::tempdir().unwrap();
    let o = zonecat(&[
        "crossmatch",
        "--template",
        dir.path().join("none.csv").to_str().unwrap(),
        "--frame",
        dir.path().join("none.csv").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(zonecat(&["--version"]).status.success());
}

#[test]
fn config_file_is_honoured_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("z.conf");
    fs::write(&conf, "colour = red\n").unwrap();
    let o = zonecat(&["--config", conf.to_str().unwrap(), "plan"]);
    assert_eq!(o.status.code(), Some(2));
    fs::write(&conf, format!("data_dir = {}\n", dir.path().join("data").display())).unwrap();
    let o = zonecat(&["--config", conf.to_str().unwrap(), "run-night", "--frames", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("data/p00").is_dir());
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let name = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                if !name.contains("timing") && !name.ends_with("summary.csv") {
                    out.push((name, fs::read(&p).unwrap()));
                }
            }
        }
    }
    out.sort();
    out
}

#[test]
fn run_night_twice_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = zonecat(&[
            "--data-dir",
            d.path().to_str().unwrap(),
            "--seed",
            "7",
            "run-night",
            "--partitions",
            "2",
            "--frames",
            "30",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert!(ta.iter().any(|(n, _)| n.contains("matches-p01")));
    assert!(ta.iter().any(|(n, _)| n.contains("alerts-p00")));
    assert_eq!(ta, tb);
}

#[test]
fn generate_ingest_merge_query_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let gen = dir.path().join("gen");
    let d = data.to_str().unwrap();
    let g = gen.to_str().unwrap();
    assert!(zonecat(&["--data-dir", d, "generate", "--camera", "4", "--frames", "5", "--out", g])
        .status
        .success());
    let frames = gen.join("frames-p04.csv");
    let o = zonecat(&["--data-dir", d, "ingest", "--partition", "4", "--night", "0", "--input", frames.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("4,0,5,8780,"), "{}", stdout(&o));
    let before = stdout(&zonecat(&["--data-dir", d, "query", "--from", "0"]));
    assert!(zonecat(&["--data-dir", d, "merge", "--partition", "4", "--night", "0"]).status.success());
    let after = stdout(&zonecat(&["--data-dir", d, "query", "--from", "0"]));
    assert_eq!(before.lines().count(), 8781);
    assert_eq!(before, after);
    // Ingesting the same night again is rejected once it is merged.
    let o = zonecat(&["--data-dir", d, "ingest", "--partition", "4", "--night", "0", "--input", frames.to_str().unwrap()]);
    assert!(!o.status.success());

    let line = after.lines().nth(1).unwrap();
    let star: String = line.split(',').rev().nth(1).unwrap().to_string();
    let curve = stdout(&zonecat(&["--data-dir", d, "query", "--star", &star]));
    assert_eq!(curve.lines().next().unwrap(), "epoch,calmag,mag_error,flux,flux_err");
    assert_eq!(curve.lines().count(), 6);
}

#[test]
fn binary_frames_ingest_like_csv() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    let g = gen.to_str().unwrap();
    assert!(zonecat(&["generate", "--camera", "2", "--frames", "3", "--format", "bin", "--out", g])
        .status
        .success());
    let data = dir.path().join("data");
    let o = zonecat(&[
        "--data-dir",
        data.to_str().unwrap(),
        "ingest",
        "--partition",
        "2",
        "--night",
        "0",
        "--input",
        g,
        "--format",
        "bin",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("2,0,3,5268,"), "{}", stdout(&o));
}
