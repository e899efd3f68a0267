use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qkdlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qkdlab"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("run qkdlab")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn generate_writes_triggers_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = qkdlab(
        dir.path(),
        &[
            "generate",
            "--duration",
            "0.001",
            "--seed",
            "1",
            "--out",
            "t.qtt1",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let bytes = fs::read(dir.path().join("t.qtt1")).unwrap();
    assert_eq!(&bytes[..4], b"QTT1");
    let count = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    assert!(count >= 40_000, "{count}");
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("t.qtt1.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "generate");
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["outputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn same_manifest_same_hash() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        [
            "generate",
            "--duration",
            "0.002",
            "--seed",
            "9",
            "--format",
            "csv",
            "--out",
            out,
        ]
    };
    assert_eq!(code(&qkdlab(dir.path(), &args("a.csv"))), 0);
    assert_eq!(code(&qkdlab(dir.path(), &args("b.csv"))), 0);
    let hash = |f: &str| {
        let m: serde_json::Value =
            serde_json::from_slice(&fs::read(dir.path().join(f)).unwrap()).unwrap();
        m["outputs"][0]["sha256"].as_str().unwrap().to_string()
    };
    assert_eq!(hash("a.csv.manifest.json"), hash("b.csv.manifest.json"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&qkdlab(dir.path(), &["generate", "--duration", "0"])),
        2
    );
    assert_eq!(
        code(&qkdlab(
            dir.path(),
            &["curve", "bb84-asymptotic", "--param", "no_such_key=1"]
        )),
        2
    );
    assert_eq!(
        code(&qkdlab(
            dir.path(),
            &["curve", "bb84-asymptotic", "--preset", "nope"]
        )),
        2
    );
    assert_eq!(code(&qkdlab(dir.path(), &["curve", "warp-drive"])), 2);
    assert_eq!(
        code(&qkdlab(
            dir.path(),
            &["curve", "repeater", "--t2", "3 fortnights"]
        )),
        2
    );
}

#[test]
fn malformed_tag_file_exits_three_with_offset() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = b"QTT1\0\0\0\0".to_vec();
    bytes.extend(25_000u64.to_le_bytes());
    bytes.extend(3u64.to_le_bytes());
    bytes.extend([2u8]);
    bytes.extend(0u64.to_le_bytes());
    bytes.extend([7u8]);
    bytes.extend(10u64.to_le_bytes());
    fs::write(dir.path().join("bad.qtt1"), bytes).unwrap();
    let o = qkdlab(dir.path(), &["sift", "bad.qtt1"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("byte 33"), "{}", stderr(&o));
}

#[test]
fn empty_stream_sifts_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("channel,timestamp_ps\n");
    for k in 0..10u64 {
        text.push_str(&format!("2,{}\n", k * 25_000));
    }
    fs::write(dir.path().join("empty.csv"), text).unwrap();
    let o = qkdlab(
        dir.path(),
        &["sift", "empty.csv", "--t0", "0.5", "--dt", "10"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"));
    let out = String::from_utf8(o.stdout).unwrap();
    assert_eq!(out.lines().nth(1).unwrap(), "0.5,10,0,0,0,10,0,0,0");
}

#[test]
fn single_point_infeasible_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&qkdlab(
            dir.path(),
            &["curve", "bb84-finite", "--loss", "35"]
        )),
        4
    );
    assert_eq!(
        code(&qkdlab(
            dir.path(),
            &["curve", "bb84-finite", "--loss", "5"]
        )),
        0
    );
    // An all-zero curve is not an error.
    assert_eq!(
        code(&qkdlab(
            dir.path(),
            &["curve", "bb84-finite", "--loss-range", "34:35:1"]
        )),
        0
    );
}

#[test]
fn compare_reports_crossover() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(
        code(&qkdlab(
            p,
            &[
                "curve",
                "bb84-asymptotic",
                "--preset",
                "qd",
                "--loss-range",
                "0:50:1",
                "--out",
                "qd.csv"
            ]
        )),
        0
    );
    assert_eq!(
        code(&qkdlab(
            p,
            &[
                "curve",
                "repeater",
                "--t2",
                "10ms",
                "--loss-range",
                "0:50:1",
                "--out",
                "rep.csv"
            ]
        )),
        0
    );
    let o = qkdlab(p, &["compare", "qd.csv", "rep.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let x = report["crossover_db"].as_f64().expect("finite crossover");
    assert!(x > 0.0 && x < 50.0);

    let same: serde_json::Value =
        serde_json::from_slice(&qkdlab(p, &["compare", "qd.csv", "qd.csv"]).stdout).unwrap();
    assert!(same["crossover_db"].is_null());

    assert_eq!(
        code(&qkdlab(
            p,
            &[
                "curve",
                "bb84-asymptotic",
                "--loss-range",
                "60:70:1",
                "--out",
                "far.csv"
            ]
        )),
        0
    );
    assert_eq!(code(&qkdlab(p, &["compare", "qd.csv", "far.csv"])), 3);
}

#[test]
fn repeater_curve_positive_beyond_thirty_db() {
    let dir = tempfile::tempdir().unwrap();
    let o = qkdlab(
        dir.path(),
        &[
            "curve",
            "repeater",
            "--t2",
            "10ms",
            "--loss-range",
            "30:40:5",
        ],
    );
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 8);
        assert_eq!(cols[6], "true", "{line}");
        assert!(!cols[7].is_empty());
    }
}

#[test]
fn sweep_writes_map_triplet() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(
        code(&qkdlab(
            p,
            &[
                "generate",
                "--duration",
                "0.01",
                "--apparatus",
                "free-space-link",
                "--out",
                "s.qtt1"
            ]
        )),
        0
    );
    let o = qkdlab(
        p,
        &[
            "sift",
            "s.qtt1",
            "--sweep",
            "--t0-grid",
            "0:1:0.5",
            "--dt-grid",
            "3:5:1",
            "--out",
            "sw.csv",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("best window"));
    assert_eq!(
        fs::read_to_string(p.join("sw.csv"))
            .unwrap()
            .lines()
            .count(),
        1 + 3 * 3
    );
    for m in ["sikr", "qber", "skr"] {
        let map = fs::read_to_string(p.join(format!("sw_{m}.csv"))).unwrap();
        assert_eq!(map.lines().next().unwrap(), "t0_ns,3,4,5");
        assert_eq!(map.lines().count(), 4);
    }
}

#[test]
fn g2_and_lifetime_commands() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let gen = [
        "generate",
        "--duration",
        "0.01",
        "--mode",
        "hbt",
        "--photons",
        "pairs",
        "--param",
        "mu_tran=0.5",
        "--param",
        "eta_tran=1",
        "--param",
        "eta_rec=1",
        "--out",
        "h.qtt1",
    ];
    assert_eq!(code(&qkdlab(p, &gen)), 0);
    let o = qkdlab(p, &["g2", "h.qtt1", "--format", "json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let g: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((g["g2_zero"].as_f64().unwrap() - 0.24).abs() < 0.1);

    let o = qkdlab(p, &["lifetime", "h.qtt1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let tau: f64 = text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!((tau - 4.58).abs() < 0.3, "{tau}");
}

#[test]
fn help_documents_columns() {
    let dir = tempfile::tempdir().unwrap();
    let o = qkdlab(dir.path(), &["curve", "--help"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("loss_db, distance_km, rate_per_pulse, rate_bps, p_x_opt"));
}
