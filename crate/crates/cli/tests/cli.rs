use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn covroute(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covroute")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SMALL: &str = r#"{
  "topology": {"kind": "grid", "nx": 3, "ny": 3, "spacing_m": 50, "willie_position_m": [75, 25, 0]},
  "constraints": {"p_max_dbm": 50, "m_bits": 64, "dep_reqd": 0.3},
  "mode": "latency_min",
  "calibration": {"snr_grid_db": [-20, -10, 0], "obs_grid_bits": [16, 64], "trials": 40},
  "sweep": {"param": "dep_reqd", "values": [0.05, 0.5, 0.97], "detectors": ["cycle", "energy"]},
  "output_dir": "out",
  "seed": 3
}"#;

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn calibration_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("calibration_"))
        .collect();
    names.sort();
    names
}

#[test]
fn gen_topology_writes_record_and_gains() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let res = covroute(&["gen-topology", "--preset", "grid-covert", "--out", out]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let record = read_json(tmp.path().join("topology.json"));
    assert_eq!(record["nodes"].as_array().unwrap().len(), 36);
    assert_eq!(record["alice"], 0);
    assert_eq!(record["bob"], 35);
    let gains = fs::read_to_string(tmp.path().join("gains.csv")).unwrap();
    assert!(gains.lines().count() > 36);
}

#[test]
fn covert_route_without_calibration_reports_theta_only() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let res = covroute(&["route", "--preset", "grid-covert", "--out", out]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let route = read_json(tmp.path().join("route.json"));
    let summary = &route["summary"];
    let hops = summary["hop_count"].as_u64().unwrap() as usize;
    assert!(hops >= 1);
    assert_eq!(route["hops"].as_array().unwrap().len(), hops);
    assert!(summary["e2e_dep"].is_null());
    // every covert-max hop runs at the same spreading gain, so latency is hops * M / D
    let latency = summary["e2e_latency_s"].as_f64().unwrap();
    assert!((latency - hops as f64 * 1e8 / 2.5e6).abs() < 1e-6 * latency);
    assert!(tmp.path().join("topology.json").exists());
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("end-to-end latency"));
}

#[test]
fn latency_route_needs_calibration() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let res = covroute(&["route", "--preset", "grid-latency", "--out", out]);
    assert_eq!(code(&res), 4);
    assert!(stderr(&res).contains("run `calibrate` first"));
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let res = covroute(&["route", "--config", tmp.path().join("absent.json").to_str().unwrap()]);
    assert_eq!(code(&res), 2);

    let bad = write_config(
        tmp.path(),
        "bad.json",
        r#"{"topology": {"kind": "grid", "nx": 2, "ny": 1, "spacing_m": 10, "willie_position_m": [0, 0, 0]}, "omega": 1}"#,
    );
    let res = covroute(&["route", "--config", &bad]);
    assert_eq!(code(&res), 2);

    let res = covroute(&["route", "--preset", "nowhere"]);
    assert_eq!(code(&res), 2);
    let res = covroute(&["route"]);
    assert_eq!(code(&res), 2);
}

#[test]
fn disconnected_topology_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "far.json",
        r#"{"topology": {"kind": "grid", "nx": 2, "ny": 1, "spacing_m": 100, "willie_position_m": [50, 50, 0],
            "max_link_distance_m": 10}}"#,
    );
    let res = covroute(&["route", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&res), 3, "{}", stderr(&res));
    assert!(stderr(&res).contains("disconnected"));
}

#[test]
fn two_node_route_is_one_hop() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "pair.json",
        r#"{"topology": {"kind": "grid", "nx": 2, "ny": 1, "spacing_m": 10, "willie_position_m": [100, 0, 0],
            "path_loss": {"exponent": 2}}}"#,
    );
    let res = covroute(&["route", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let route = read_json(tmp.path().join("route.json"));
    assert_eq!(route["summary"]["hop_count"], 1);
    assert_eq!(route["summary"]["e2e_latency_s"], route["hops"][0]["latency_s"]);
}

#[test]
fn allocate_writes_verified_allocation() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let res = covroute(&["allocate", "--preset", "grid-covert", "--out", out, "--tx", "0", "--rx", "1"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let alloc = read_json(tmp.path().join("allocation.json"));
    assert_eq!(alloc["verification"]["passed"], true);
    assert!((alloc["allocation"]["spreading_gain"].as_f64().unwrap() - 4.0).abs() < 1e-9);
    assert!((alloc["allocation"]["snr_rx"].as_f64().unwrap() - 10.0).abs() < 1e-8);
}

#[test]
fn calibrate_route_and_sweep_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.json", SMALL);
    let out = tmp.path().join("out");

    let res = covroute(&["calibrate", "--config", &cfg]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let files = calibration_files(&out);
    assert_eq!(files.len(), 2, "{files:?}");
    let cycle = read_json(out.join(&files[0]));
    let energy = read_json(out.join(&files[1]));
    assert_eq!(cycle["detector"], "cycle");
    assert_ne!(cycle["fingerprint_hash"], energy["fingerprint_hash"]);
    assert_eq!(cycle["raw"].as_array().unwrap().len() * cycle["raw"][0].as_array().unwrap().len(), 6);
    assert!(String::from_utf8_lossy(&res.stdout).contains("max CI halfwidth"));

    // rerun: identical apart from the timestamp
    let first = fs::read_to_string(out.join(&files[0])).unwrap();
    let res = covroute(&["calibrate", "--config", &cfg, "--detector", "cycle"]);
    assert_eq!(code(&res), 0);
    let mut a: Value = serde_json::from_str(&first).unwrap();
    let mut b = read_json(out.join(&files[0]));
    a["created_unix_s"] = Value::Null;
    b["created_unix_s"] = Value::Null;
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());

    let res = covroute(&["route", "--config", &cfg]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let route = read_json(out.join("route.json"));
    assert!((route["summary"]["e2e_dep"].as_f64().unwrap() - 0.3).abs() < 1e-6);

    let res = covroute(&["sweep", "--config", &cfg]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "swept_param,swept_value,detector,e2e_latency_s,e2e_dep,dep_extrapolated,hop_count,bottleneck_theta_db,status"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    for det in rows.chunks(3) {
        assert_eq!(det.iter().map(|r| r[1]).collect::<Vec<_>>(), ["0.05", "0.5", "0.97"]);
        let ok: Vec<f64> = det.iter().filter(|r| r[8] == "ok").map(|r| r[3].parse().unwrap()).collect();
        assert!(ok.len() >= 2);
        assert!(ok.windows(2).all(|w| w[0] <= w[1]), "{ok:?}");
        // a 40-trial table cannot certify 0.97
        assert_eq!(det[2][8], "infeasible");
        assert_eq!(det[2][3], "");
    }
    let json = read_json(out.join("sweep.json"));
    assert_eq!(json.as_array().unwrap().len(), 6);
    assert!(json[0]["max_eta"].as_f64().unwrap() >= 1.0);
}

#[test]
fn sweep_without_grid_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let res = covroute(&["sweep", "--preset", "grid-latency", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("sweep grid required"));
}

#[test]
fn seed_flag_changes_calibration() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.json", SMALL);
    let dirs = ["a", "b"].map(|d| tmp.path().join(d));
    for (dir, seed) in dirs.iter().zip(["1", "2"]) {
        let res = covroute(&["calibrate", "--config", &cfg, "--detector", "energy", "--out", dir.to_str().unwrap(), "--seed", seed]);
        assert_eq!(code(&res), 0, "{}", stderr(&res));
    }
    let name = &calibration_files(&dirs[0])[0];
    assert_eq!(&calibration_files(&dirs[1])[0], name);
    let a = read_json(dirs[0].join(name));
    let b = read_json(dirs[1].join(name));
    assert_eq!(a["seed"], 1);
    assert_ne!(a["raw"], b["raw"]);
}
