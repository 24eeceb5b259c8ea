use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lrfuse(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lrfuse"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn tiny_config(dir: &Path) -> String {
    let cfg = lrfuse::harness::PipelineConfig::tiny();
    let path = dir.join("tiny.json");
    fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn generate_run_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cfg = tiny_config(out);
    let o = lrfuse(&["generate", "--config", &cfg, "--seed", "4"], out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["lidar.blrf", "radar.blrf", "scene.json", "config.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let lidar = out.join("lidar.blrf");
    let radar = out.join("radar.blrf");
    let o = lrfuse(
        &[
            "run",
            "--config",
            &cfg,
            "--lidar",
            lidar.to_str().unwrap(),
            "--radar",
            radar.to_str().unwrap(),
        ],
        out,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stats: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["radar"]["m_r"][0], 32);
    assert_eq!(stats["l2r"]["enhanced"][0], 96);
    assert_eq!(stats["r2l"]["encoded"][0], 512);
    assert_eq!(stats["radar"]["pillars"], stats["l2r"]["pseudo_features"]);

    let dets = out.join("detections.jsonl");
    let gt = out.join("scene.json");
    let o = lrfuse(
        &[
            "eval",
            "--detections",
            dets.to_str().unwrap(),
            "--gt",
            gt.to_str().unwrap(),
        ],
        out,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let eval: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("eval.json")).unwrap()).unwrap();
    assert_eq!(eval["thresholds"].as_array().unwrap().len(), 4);
}

#[test]
fn run_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        assert_eq!(
            code(&lrfuse(&["run", "--config", &cfg, "--seed", "9"], out)),
            0
        );
    }
    for f in ["detections.jsonl", "stats.json"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn dump_map_writes_blrm() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cfg = tiny_config(out);
    let o = lrfuse(&["dump-map", "--config", &cfg, "--map", "enhanced"], out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let bytes = fs::read(out.join("enhanced.blrm")).unwrap();
    assert_eq!(&bytes[..4], b"BLRM");
    let c = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let h = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let w = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    assert_eq!((c, h, w), (96, 8, 8));
    assert_eq!(bytes.len(), 16 + 4 * 96 * 8 * 8);
    let map = lrfuse::harness::read_map(out.join("enhanced.blrm")).unwrap();
    assert_eq!(map.shape(), [96, 8, 8]);
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_eq!(code(&lrfuse(&["run", "--radar-variant", "c"], out)), 1);
    assert_eq!(code(&lrfuse(&["run", "--scale", "huge"], out)), 1);
    assert_eq!(code(&lrfuse(&["check", "--fault", "nope"], out)), 1);
    assert_eq!(code(&lrfuse(&["frobnicate"], out)), 1);
    let cfg = tiny_config(out);
    assert_eq!(
        code(&lrfuse(
            &["dump-map", "--config", &cfg, "--map", "nope"],
            out
        )),
        1
    );

    let mut bad = lrfuse::harness::PipelineConfig::tiny();
    bad.radar_cell = [1.0, 0.5];
    let path = out.join("bad.json");
    fs::write(&path, serde_json::to_string(&bad).unwrap()).unwrap();
    let o = lrfuse(&["run", "--config", path.to_str().unwrap()], out);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("radar_cell"));
}

#[test]
fn io_and_format_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_eq!(
        code(&lrfuse(&["run", "--config", "/no/such/file.json"], out)),
        3
    );
    let junk = out.join("junk.blrf");
    fs::write(&junk, b"NOPE").unwrap();
    let j = junk.to_str().unwrap();
    assert_eq!(code(&lrfuse(&["run", "--lidar", j, "--radar", j], out)), 3);
    let empty = out.join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let e = empty.to_str().unwrap();
    assert_eq!(
        code(&lrfuse(&["eval", "--detections", e, "--gt", e], out)),
        3
    );
}

#[test]
fn check_passes_and_fault_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = lrfuse(&["check", "--seeds", "2"], out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let o = lrfuse(
        &["check", "--seeds", "2", "--fault", "ball-radius-as-r"],
        out,
    );
    assert_eq!(code(&o), 2);
    let stdout = String::from_utf8_lossy(&o.stdout);
    let failing: Vec<&str> = stdout.lines().filter(|l| l.starts_with("FAIL")).collect();
    assert_eq!(failing.len(), 1, "{stdout}");
    assert!(failing[0].contains("l2r.non_overlap"));
}
