use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use bcg_core::codec::{SamplePacket, Sca10hFrame};
use bcg_core::synth::GroundTruth;
use bcg_ingest::read_session_file;

fn bcg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bcg")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = bcg(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn csv_rows(text: &str) -> Vec<csv::StringRecord> {
    csv::Reader::from_reader(text.as_bytes()).records().map(|r| r.unwrap()).collect()
}

/// Synthetic empty/occupied recordings and the calibration derived from them.
fn calibrated(dir: &Path) -> PathBuf {
    let empty = dir.join("empty.bcg");
    let occupied = dir.join("occupied.bcg");
    let cal = dir.join("cal.json");
    ok(&["synth", "-o", p(&empty), "--duration-s", "60", "--vacant", "--seed", "101"]);
    ok(&["synth", "-o", p(&occupied), "--duration-s", "120", "--seed", "102"]);
    ok(&["calibrate", "--empty", p(&empty), "--occupied", p(&occupied), "--sensor-id", "bed", "-o", p(&cal)]);
    cal
}

#[test]
fn help_version_and_usage_errors() {
    assert_eq!(code(&bcg(&["--help"])), 0);
    assert_eq!(code(&bcg(&["--version"])), 0);
    assert_eq!(code(&bcg(&["analyze", "--help"])), 0);
    assert_eq!(code(&bcg(&[])), 1);
    assert_eq!(code(&bcg(&["analyze"])), 1);
    assert_eq!(code(&bcg(&["frobnicate"])), 1);
    assert_eq!(code(&bcg(&["synth", "-o", "never-written.bcg", "--occupied", "5:1"])), 1);
}

#[test]
fn analyze_recovers_heart_rate_and_gates_on_occupancy() {
    let dir = tempfile::tempdir().unwrap();
    let cal = calibrated(dir.path());
    let rec = dir.path().join("hr70.bcg");
    ok(&["synth", "-o", p(&rec), "--duration-s", "120", "--hr", "70", "--seed", "7", "--occupied", "10:1000"]);
    let events = dir.path().join("events.jsonl");
    let out = ok(&["analyze", p(&rec), "--calibration", p(&cal), "--events", p(&events)]);
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    // Only occupied seconds; the person arrives at 10 s plus debounce.
    assert!((105..=109).contains(&rows.len()), "{}", rows.len());
    assert!(rows.iter().all(|r| &r[2] == "true"));
    for r in rows.iter().filter(|r| r[0].parse::<u32>().unwrap() >= 75) {
        let hr: f64 = r[3].parse().unwrap();
        assert!((hr - 70.0).abs() <= 2.0, "seq {}: {hr}", &r[0]);
    }
    let ev = std::fs::read_to_string(&events).unwrap();
    assert_eq!(ev.lines().count(), 1);
    assert!(ev.contains("\"occupied\":true"));

    let all = ok(&["analyze", p(&rec), "--calibration", p(&cal), "--all-seconds", "--format", "jsonl"]);
    assert_eq!(String::from_utf8(all.stdout).unwrap().lines().count(), 120);
}

#[test]
fn analyze_csv_matches_its_own_format_contract() {
    let dir = tempfile::tempdir().unwrap();
    let cal = calibrated(dir.path());
    let rec = dir.path().join("rec.csv");
    ok(&["synth", "-o", p(&rec), "--duration-s", "90", "--hr", "60", "--seed", "8"]);
    // No reference frames in CSV, so a calibration is mandatory.
    let out = bcg(&["analyze", p(&rec)]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    let out = ok(&["analyze", p(&rec), "--calibration", p(&cal), "--sensor-id", "bed"]);
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    let last: f64 = rows.last().unwrap()[3].parse().unwrap();
    assert!((last - 60.0).abs() <= 2.0, "{last}");
    assert_eq!(code(&bcg(&["analyze", p(&rec), "--calibration", p(&cal), "--sensor-id", "chair"])), 3);
}

#[test]
fn all_zero_packets_give_no_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cal = calibrated(dir.path());
    let zero = SamplePacket::new(Sca10hFrame::default(), [[0; 2]; 100], [[0; 3]; 100]).unwrap().encode();
    let path = dir.path().join("zero.bcg");
    std::fs::write(&path, zero.repeat(30)).unwrap();
    for extra in [&[][..], &["--calibration", p(&cal)][..]] {
        let mut args = vec!["analyze", p(&path)];
        args.extend_from_slice(extra);
        let out = ok(&args);
        assert_eq!(csv_rows(&String::from_utf8(out.stdout).unwrap()).len(), 0, "{extra:?}");
    }
}

#[test]
fn truncated_dump_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cut.bcg");
    ok(&["synth", "-o", p(&path), "--duration-s", "3"]);
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
    let out = bcg(&["analyze", p(&path)]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("partial packet of 1039 bytes"), "{err}");
    assert_eq!(code(&bcg(&["analyze", p(&dir.path().join("missing.bcg"))])), 2);
}

#[test]
fn calibration_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.bcg");
    let occupied = dir.path().join("occupied.bcg");
    ok(&["synth", "-o", p(&empty), "--duration-s", "60", "--vacant", "--seed", "1"]);
    ok(&["synth", "-o", p(&occupied), "--duration-s", "60", "--seed", "2"]);

    let same = bcg(&["calibrate", "--empty", p(&empty), "--occupied", p(&empty), "--sensor-id", "bed"]);
    assert_eq!(code(&same), 3);
    assert!(String::from_utf8_lossy(&same.stderr).contains("cannot tell them apart"));

    let flat = dir.path().join("flat.csv");
    let mut text = String::from("t_ms,sensor,axis,mg\n");
    for i in 0..3000 {
        text.push_str(&format!("{},LIS3DHH,X,1.5\n", i * 10));
    }
    std::fs::write(&flat, text).unwrap();
    let out = bcg(&[
        "calibrate",
        "--empty",
        p(&empty),
        "--occupied",
        p(&occupied),
        "--calib",
        p(&flat),
        "--sensor-id",
        "bed",
    ]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("local maxima"));

    // Appending builds a multi-sensor file.
    let cal = dir.path().join("cal.json");
    for id in ["a", "b"] {
        let args = [
            "calibrate",
            "--empty",
            p(&empty),
            "--occupied",
            p(&occupied),
            "--sensor-id",
            id,
            "-o",
            p(&cal),
            "--append",
        ];
        ok(&args);
    }
    let text = std::fs::read_to_string(&cal).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.contains("\"sensor_id\":\"b\""));
}

#[test]
fn scalogram_export() {
    let dir = tempfile::tempdir().unwrap();
    let zero = dir.path().join("zero.csv");
    let mut text = String::from("t_ms,sensor,axis,mg\n");
    for i in 0..500 {
        text.push_str(&format!("{},LIS3DHH,X,0\n", i * 10));
    }
    std::fs::write(&zero, text).unwrap();
    let out = ok(&["scalogram", p(&zero), "--nfreqs", "5"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    assert!(lines[0].starts_with("freq_hz,0,0.01,"));
    for l in &lines[1..] {
        assert_eq!(l.split(',').count(), 501);
        assert!(l.split(',').skip(1).all(|v| v.parse::<f64>().unwrap() == 0.0));
    }

    let rec = dir.path().join("rec.bcg");
    ok(&["synth", "-o", p(&rec), "--duration-s", "5"]);
    let sg = dir.path().join("sg.csv");
    ok(&["scalogram", p(&rec), "--freqs", "3.5", "--channel", "SCA61T.Y", "-o", p(&sg)]);
    assert_eq!(std::fs::read_to_string(&sg).unwrap().lines().count(), 2);
    assert_eq!(code(&bcg(&["scalogram", p(&rec), "--freqs", "3.5,1"])), 1);
}

#[test]
fn config_file_sits_between_defaults_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bcg.toml");
    std::fs::write(&cfg, "[synth]\nheart_rate_bpm = 55\nhr_jitter_pct = 0\n").unwrap();
    let beats = |extra: &[&str]| {
        let truth = dir.path().join("truth.json");
        let out = dir.path().join("x.bcg");
        let mut args = vec!["--config", p(&cfg), "synth", "-o", p(&out), "--truth", p(&truth), "--duration-s", "60"];
        args.extend_from_slice(extra);
        ok(&args);
        let t: GroundTruth = serde_json::from_slice(&std::fs::read(&truth).unwrap()).unwrap();
        t.beat_times_s.len()
    };
    assert!(beats(&[]).abs_diff(55) <= 1);
    assert!(beats(&["--hr", "80"]).abs_diff(80) <= 1);

    std::fs::write(&cfg, "[synth]\nheart_rate = 55\n").unwrap();
    assert_eq!(code(&bcg(&["--config", p(&cfg), "synth", "-o", p(&dir.path().join("y.bcg"))])), 1);
}

struct Serve(Child, String);

impl Serve {
    fn start(storage: &Path, extra: &[&str]) -> Serve {
        let mut child = Command::new(env!("CARGO_BIN_EXE_bcg"))
            .args(["serve", "--bind", "127.0.0.1:0", "--storage", p(storage)])
            .args(extra)
            .stdout(Stdio::piped())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let addr = line.trim().strip_prefix("listening on ").unwrap().to_string();
        Serve(child, addr)
    }
}

impl Drop for Serve {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn session_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn emulate_into_serve() {
    let dir = tempfile::tempdir().unwrap();
    let storage = dir.path().join("sessions");
    let srv = Serve::start(&storage, &[]);
    ok(&["emulate", "--target", &srv.1, "--fast", "--duration-s", "60", "--sensor-id", "bed-a"]);
    ok(&["emulate", "--target", &srv.1, "--fast", "--duration-s", "5", "--sensor-id", "bed-b", "--hr", "90"]);
    let files = session_files(&storage);
    assert_eq!(files.len(), 2);
    assert!(files[0].file_name().unwrap().to_str().unwrap().starts_with("bed-a-"));
    let a = read_session_file(&files[0]).unwrap();
    assert_eq!(a.len(), 60);
    assert!(a.iter().all(|r| r.second.uncalibrated && r.sensor_id == "bed-a"));
    let b = read_session_file(&files[1]).unwrap();
    assert_eq!(b.len(), 5);
    assert!(b.iter().all(|r| r.second.sca10h_heart_bpm == Some(90)));
}

#[test]
fn emulate_without_server_is_a_network_error() {
    // Grab a free port and release it so nothing listens there.
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let target = format!("127.0.0.1:{port}");
    let out = bcg(&["emulate", "--target", &target, "--fast", "--duration-s", "2"]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(code(&bcg(&["emulate", "--target", &target, "--sensor-id", "a/b"])), 1);
}

#[test]
fn serve_rejects_bad_setup() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("file");
    std::fs::write(&file, "x").unwrap();
    assert_eq!(code(&bcg(&["serve", "--bind", "127.0.0.1:0", "--storage", p(&file)])), 2);
    let bad_cal = dir.path().join("cal.json");
    std::fs::write(&bad_cal, "{\"sensor_id\": 3}").unwrap();
    let storage = dir.path().join("s");
    let args = ["serve", "--bind", "127.0.0.1:0", "--storage", p(&storage), "--calibration", p(&bad_cal)];
    assert_eq!(code(&bcg(&args)), 3);
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    assert_eq!(code(&bcg(&["serve", "--bind", &addr, "--storage", p(&storage)])), 4);
}
