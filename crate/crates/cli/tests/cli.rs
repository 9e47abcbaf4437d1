use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use grainkit::frame::{read_y4m, write_y4m};
use grainkit::sei::{decode_sei, encode_sei, read_sidecar, write_sidecar, FgcParams, Interval, IntervalModel, SidecarRecord};
use grainkit::{Frame, VideoFormat};
use serde_json::Value;
use tempfile::TempDir;

fn grainkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grainkit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn format() -> VideoFormat {
    VideoFormat::new(256, 128, 8).unwrap()
}

/// Flat clean video with a slow brightness drift.
fn clean_video(dir: &TempDir, frames: usize) -> PathBuf {
    let path = dir.path().join("clean.y4m");
    let frames: Vec<Frame> = (0..frames)
        .map(|i| Frame::filled(format(), [100 + (i % 2) as u16, 128, 128]))
        .collect();
    write_y4m(format(), &frames, std::fs::File::create(&path).unwrap()).unwrap();
    path
}

fn grain_params(sf: i32) -> FgcParams {
    FgcParams {
        log2_scale_factor: 3,
        components: [
            Some(IntervalModel::new(3, vec![Interval::new(0, 255, sf, (8, 8))])),
            None,
            None,
        ],
        ..FgcParams::default()
    }
}

fn sidecar(dir: &TempDir, name: &str, frames: u32, params: &FgcParams) -> PathBuf {
    let path = dir.path().join(name);
    let payload = encode_sei(params).unwrap();
    let records: Vec<SidecarRecord> = (0..frames)
        .map(|i| SidecarRecord {
            frame_index: i,
            payload: payload.clone(),
        })
        .collect();
    write_sidecar(&records, std::fs::File::create(&path).unwrap()).unwrap();
    path
}

fn records(path: &Path) -> Vec<SidecarRecord> {
    read_sidecar(std::fs::File::open(path).unwrap()).unwrap()
}

#[test]
fn help_lists_subcommands() {
    let o = grainkit(&["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for sub in ["analyze", "synthesize", "inspect-sei", "roundtrip", "metrics", "bench"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
    let o = grainkit(&["synthesize", "--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("master_seed = 0") && text.contains("--deblock"));
}

#[test]
fn unknown_flag_is_usage_error() {
    assert_eq!(code(&grainkit(&["analyze", "--frobnicate", "x"])), 2);
    assert_eq!(code(&grainkit(&[])), 2);
}

#[test]
fn missing_input_names_path() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nowhere.y4m");
    let out = dir.path().join("o.fgs");
    let o = grainkit(&["analyze", p(&missing), "-o", p(&out)]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("nowhere.y4m"), "{}", stderr(&o));
}

#[test]
fn raw_input_needs_geometry() {
    let dir = TempDir::new().unwrap();
    let raw = dir.path().join("in.yuv");
    std::fs::write(&raw, vec![0u8; 256 * 128 * 3 / 2]).unwrap();
    let out = dir.path().join("o.fgs");
    let o = grainkit(&["analyze", p(&raw), "-o", p(&out)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let o = grainkit(&["analyze", p(&raw), "--width", "256", "--height", "128", "-o", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(records(&out).len(), 1);
}

#[test]
fn bad_config_is_validation_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[analysis]\nmax_intervals = 40\n").unwrap();
    let input = clean_video(&dir, 3);
    let out = dir.path().join("o.fgs");
    let o = grainkit(&["analyze", p(&input), "-o", p(&out), "-c", p(&cfg)]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    std::fs::write(&cfg, "[analysis]\nmax_interval = 4\n").unwrap();
    let o = grainkit(&["analyze", p(&input), "-o", p(&out), "-c", p(&cfg)]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    let o = grainkit(&["analyze", p(&input), "-o", p(&out), "--denoiser", "wiener"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn clean_video_gives_grainless_sidecar() {
    let dir = TempDir::new().unwrap();
    let input = clean_video(&dir, 6);
    let out = dir.path().join("o.fgs");
    let diag = dir.path().join("d.json");
    let o = grainkit(&["analyze", p(&input), "-o", p(&out), "--diagnostics", p(&diag)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let recs = records(&out);
    assert_eq!(recs.len(), 6);
    for r in &recs {
        let params = decode_sei(&r.payload).unwrap();
        assert!(params
            .components
            .iter()
            .flatten()
            .all(|m| m.intervals.iter().all(|i| i.scaling_factor == 0)));
    }
    let d: Value = serde_json::from_slice(&std::fs::read(&diag).unwrap()).unwrap();
    assert_eq!(d.as_array().unwrap().len(), 1);
    assert!(d[0]["components"][0]["mask_coverage"].is_number());
}

#[test]
fn synthesize_analyze_metrics_pipeline() {
    let dir = TempDir::new().unwrap();
    let input = clean_video(&dir, 6);
    let fgs = sidecar(&dir, "g.fgs", 6, &grain_params(40));
    let a = dir.path().join("a.y4m");
    let b = dir.path().join("b.y4m");
    let report = dir.path().join("r.json");
    for out in [&a, &b] {
        let o = grainkit(&["synthesize", p(&input), "-s", p(&fgs), "-o", p(out), "--seed", "1", "--report", p(&report)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    assert_ne!(bytes, std::fs::read(&input).unwrap());
    let r: Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(r.as_array().unwrap().len(), 6);
    assert!(r[0]["seed_digest"].is_string());

    // analysis of the grained video finds luma grain
    let found = dir.path().join("found.fgs");
    let o = grainkit(&["analyze", p(&a), "-o", p(&found), "--stride", "4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let first = decode_sei(&records(&found)[0].payload).unwrap();
    assert!(!first.components[0].as_ref().expect("luma grain").intervals.is_empty());

    let o = grainkit(&["metrics", p(&input), p(&a)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(m["psnr"][0].is_number());
    assert_eq!(m["psnr"][1], "inf");
    assert!(m["grain_sigma"][0].as_f64().unwrap() > 0.0);
    let o = grainkit(&["metrics", p(&input), p(&a), "--format", "csv"]);
    let csv = String::from_utf8(o.stdout).unwrap();
    assert_eq!(csv.lines().count(), 8);
}

#[test]
fn empty_sidecar_passes_through() {
    let dir = TempDir::new().unwrap();
    let input = clean_video(&dir, 3);
    let empty = dir.path().join("e.fgs");
    std::fs::write(&empty, b"").unwrap();
    let out = dir.path().join("o.y4m");
    let o = grainkit(&["synthesize", p(&input), "-s", p(&empty), "-o", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&input).unwrap());
    // raw in, raw out
    let raw = dir.path().join("in.yuv");
    let (_, frames) = read_y4m(std::io::BufReader::new(std::fs::File::open(&input).unwrap())).unwrap();
    let frames: Vec<Frame> = frames.map(Result::unwrap).collect();
    grainkit::frame::write_raw(format(), &frames, std::fs::File::create(&raw).unwrap()).unwrap();
    let raw_out = dir.path().join("o.yuv");
    let o = grainkit(&[
        "synthesize", p(&raw), "--width", "256", "--height", "128", "-s", p(&empty), "-o", p(&raw_out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read(&raw_out).unwrap(), std::fs::read(&raw).unwrap());
}

#[test]
fn inspect_sei_text_and_json() {
    let dir = TempDir::new().unwrap();
    let fgs = sidecar(&dir, "g.fgs", 2, &grain_params(40));
    let o = grainkit(&["inspect-sei", p(&fgs)]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("record frame 1") && text.contains("sf=40"), "{text}");
    let o = grainkit(&["inspect-sei", p(&fgs), "--json"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v[1]["frame_index"], 1);
    assert_eq!(v[0]["params"]["log2_scale_factor"], 3);

    let broken = dir.path().join("b.fgs");
    let recs = vec![SidecarRecord {
        frame_index: 0,
        payload: vec![0xff, 0x00],
    }];
    write_sidecar(&recs, std::fs::File::create(&broken).unwrap()).unwrap();
    assert_eq!(code(&grainkit(&["inspect-sei", p(&broken)])), 4);
    let truncated = dir.path().join("t.fgs");
    std::fs::write(&truncated, [1u8, 0, 0]).unwrap();
    assert_eq!(code(&grainkit(&["inspect-sei", p(&truncated)])), 4);
}

#[test]
fn roundtrip_report() {
    let dir = TempDir::new().unwrap();
    let input = clean_video(&dir, 5);
    let o = grainkit(&["roundtrip", p(&input), "--sf", "40"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    for key in ["frames", "injected", "recovered", "scaling_factor_relative_error", "within_tolerance"] {
        assert!(r.get(key).is_some(), "{key} missing");
    }
    assert_eq!(r["within_tolerance"], true, "{r}");
    let sf = r["recovered"]["scaling_factor"].as_f64().unwrap();
    assert!((30.0..=50.0).contains(&sf), "{sf}");

    let o = grainkit(&["roundtrip", p(&input), "--sf", "0"]);
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["recovered"]["present"], false);
    assert_eq!(r["within_tolerance"], true);

    assert_eq!(code(&grainkit(&["roundtrip", p(&input), "--h-cutoff", "15"])), 2);
}

#[test]
fn bench_report() {
    let dir = TempDir::new().unwrap();
    let input = clean_video(&dir, 3);
    let out = dir.path().join("b.json");
    let o = grainkit(&["bench", p(&input), "--threads-list", "1,2", "--repeats", "1", "-o", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("overhead"));
    let r: Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(r["rows"].as_array().unwrap().len(), 2);
    assert!(r["machine"]["arch"].is_string());
    assert!(r["rows"][0]["synthesis_ms_per_frame"].as_f64().unwrap() > 0.0);
}
