use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use netstate::canonical::canonical_bytes;
use netstate::pcap::write_session_pcaps;
use netstate_core::packet::{Direction, PacketRecord, TcpFlags, Timestamp};

fn netstate(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netstate")).current_dir(dir).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn one_packet() -> PacketRecord {
    PacketRecord {
        timestamp: Timestamp::from_parts(1_700_000_000, 250),
        direction: Direction::ClientToServer,
        source_ip: "10.0.0.2".parse().unwrap(),
        source_port: 50000,
        destination_ip: "52.1.2.3".parse().unwrap(),
        destination_port: 443,
        session_number: 1,
        flags: TcpFlags::SYN,
        payload_size: 0,
    }
}

#[test]
fn ingest_single_packet_capture() {
    let dir = tempfile::tempdir().unwrap();
    let (_, bytes) = write_session_pcaps(&[one_packet()]).remove(0);
    fs::write(dir.path().join("s1.pcap"), bytes).unwrap();
    let o = netstate(dir.path(), &["ingest", "s1.pcap", "--client", "10.0.0.0/24", "--out", "o"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("o/packets.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2, "{text}");
    assert!(lines[1].contains("C_to_S") && lines[1].contains("SYN"), "{text}");
    assert!(dir.path().join("o/packets.csv.meta.json").exists());
    assert_eq!(fs::read(dir.path().join("o/packets.csv")).unwrap(), canonical_bytes(&[one_packet()]));
}

#[test]
fn validation_failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(&netstate(p, &["no-such-command"])), 1);
    assert_eq!(code(&netstate(p, &["--help"])), 0);
    assert_eq!(code(&netstate(p, &["exp1"])), 1, "no --config");
    assert_eq!(code(&netstate(p, &["exp1", "--config", "missing.json"])), 1);
    assert_eq!(code(&netstate(p, &["ingest", "missing.pcap", "--client", "10.0.0.2"])), 1);
    fs::write(p.join("bad.csv"), "not,a,canonical,file\n1,2\n").unwrap();
    assert_eq!(code(&netstate(p, &["features", "bad.csv", "--window-length", "3"])), 1);
    fs::write(p.join("ok.csv"), canonical_bytes(&[one_packet()])).unwrap();
    assert_eq!(code(&netstate(p, &["features", "ok.csv", "--window-length", "1"])), 1);
}

#[test]
fn similarity_needs_two_devices() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("d1.csv"), canonical_bytes(&[one_packet()])).unwrap();
    let cfg = r#"{"devices": [{"id": "d1", "inputs": ["d1.csv"]}], "window_lengths": [3], "ks": [2]}"#;
    fs::write(p.join("cfg.json"), cfg).unwrap();
    let o = netstate(p, &["exp1", "--config", "cfg.json"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert!(stderr(&o).contains("at least 2 devices"), "{}", stderr(&o));
}

#[test]
fn synth_then_classification_grid() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let o = netstate(p, &["synth", "--sessions", "2", "--packets-per-session", "900", "--seed", "4", "--out", "cohort"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["d1.csv", "d12.csv", "cohort.json", "exp1.json", "exp2.json"] {
        assert!(p.join("cohort").join(f).exists(), "{f}");
    }
    let o = netstate(p, &["exp2", "--config", "cohort/exp2.json", "--out", "res"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(p.join("res/exp2_classification.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let auc = header.iter().position(|h| *h == "auc").expect("auc column");
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let v: f64 = row[auc].parse().unwrap();
    assert!((0.0..=1.0).contains(&v));
    assert!(p.join("res/exp2/wl3_k4/roc.csv").exists());
    let o = netstate(p, &["report", "--config", "cohort/exp2.json", "--out", "res"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn stage_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let o = netstate(p, &["synth", "--profiles", "one-game", "--sessions", "1", "--packets-per-session", "600", "--out", "c"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let steps: [&[&str]; 4] = [
        &["features", "c/d1.csv", "--window-length", "3", "--out", "w"],
        &["states", "c/d1.csv", "--window-length", "3", "--k", "2", "--out", "s"],
        &["logs", "c/d2.csv", "--model", "s/state_model.json", "--device", "d2", "--out", "l"],
        &["discover", "l/state1.jsonl", "l/state2.jsonl", "--out", "n"],
    ];
    for args in steps {
        let o = netstate(p, args);
        assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
    }
    let windows = fs::read_to_string(p.join("w/windows.csv")).unwrap();
    assert_eq!(windows.lines().count(), 1 + 600 / 3);
    let o = netstate(p, &["check", "--log", "l/state1.jsonl", "--net", "n/state1.pnml", "--out", "k"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let conf = fs::read_to_string(p.join("k/conformance.csv")).unwrap();
    assert!(conf.starts_with("variant_id,frequency,cost,fitness,moves"));
    assert!(conf.lines().count() > 1);
}
