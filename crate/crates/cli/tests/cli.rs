use std::path::Path;
use std::process::{Command, Output};

fn transducer(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_transducer"))
        .args(args)
        .current_dir(dir)
        .env_remove("TRANSDUCER_CACHE_DIR")
        .output()
        .expect("binary runs")
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header
        .iter()
        .position(|h| *h == name)
        .unwrap_or_else(|| panic!("no column {name} in {header:?}"));
    lines
        .map(|l| l.split(',').nth(k).unwrap().to_string())
        .collect()
}

const SMALL_FIELD: &str = r#"{"scenario":{"omega":0.2,"omega_out":3.0,"abs_a_sq":0.5},
 "finite":{"n":3},
 "fieldmap":{"grids":[{"name":"xy","grid":{"plane":"xy","offset":0.0,
   "u":{"lo":-4.25,"hi":4.25,"n":18},"v":{"lo":-4.25,"hi":4.25,"n":18}}}]}}"#;

#[test]
fn fig5c_critical_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = transducer(
        &["criticality", "--preset", "fig5c", "--output", "o"],
        tmp.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = read(&tmp.path().join("o/critical.csv"));
    let omega: Vec<f64> = column(&csv, "omega[2pi/d]")
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    let m = column(&csv, "m");
    let n = column(&csv, "n");
    assert_eq!(omega.len(), 2, "{csv}");
    for w in &omega {
        assert!((w - 0.3094).abs() < 1e-4, "{w}");
    }
    let mut g: Vec<(String, String)> = m.into_iter().zip(n).collect();
    g.sort();
    assert_eq!(g, vec![("3".into(), "-1".into()), ("3".into(), "1".into())]);
}

#[test]
fn zero_real_part_sweep_is_flat_half() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("c.json"),
        r#"{"series":[{"label":"dw0","delta_omega":0.0},{"label":"dw1.5","delta_omega":1.5}],
            "sweep":{"parameter":"omega","start":0.05,"stop":0.95,"points":19}}"#,
    )
    .unwrap();
    let out = transducer(
        &[
            "efficiency-sweep",
            "--config",
            "c.json",
            "--zero-real-part",
            "--output",
            "o",
        ],
        tmp.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = read(&tmp.path().join("o/sweep.csv"));
    let eff = column(&csv, "efficiency_b[1]");
    assert_eq!(eff.len(), 38);
    for e in eff {
        let e: f64 = e.parse().unwrap();
        assert!((e - 0.5).abs() < 1e-3, "{e}");
    }
}

#[test]
fn empty_grid_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("c.json"),
        r#"{"sweep":{"parameter":"omega","values":[]}}"#,
    )
    .unwrap();
    let out = transducer(
        &["efficiency-sweep", "--config", "c.json", "--output", "o"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn invalid_inputs_exit_with_usage_code() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("a.json"),
        r#"{"scenario":{"abs_a_sq":1.5}}"#,
    )
    .unwrap();
    let out = transducer(
        &["criticality", "--config", "a.json", "--output", "o"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("|A|^2 = 1.5"));

    std::fs::write(
        tmp.path().join("k.json"),
        r#"{"scenario":{"omega":0.3,"thetta_deg":10}}"#,
    )
    .unwrap();
    let out = transducer(
        &["criticality", "--config", "k.json", "--output", "o"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario.thetta_deg"));

    let out = transducer(
        &["criticality", "--preset", "fig99", "--output", "o"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));

    let out = transducer(&["criticality", "--threads", "0"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn missing_config_file_is_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = transducer(&["criticality", "--config", "nope.json"], tmp.path());
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn manifest_rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("c.json"),
        r#"{"scenario":{"theta_deg":20.0,"phi_deg":10.0,"polarization":"p","delta_omega":2.0},
            "sweep":{"parameter":"omega","start":0.1,"stop":0.6,"points":11,
                     "filters":[{"name":"lower","norm_below":2.0},{"name":"g10","orders":[[1,0]]}]}}"#,
    )
    .unwrap();
    let a = transducer(
        &[
            "efficiency-sweep",
            "--config",
            "c.json",
            "--output",
            "a",
            "--seed",
            "7",
        ],
        tmp.path(),
    );
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = transducer(
        &[
            "efficiency-sweep",
            "--config",
            "a/manifest.json",
            "--output",
            "b",
        ],
        tmp.path(),
    );
    assert!(b.status.success(), "{}", String::from_utf8_lossy(&b.stderr));
    let x = std::fs::read(tmp.path().join("a/sweep.csv")).unwrap();
    let y = std::fs::read(tmp.path().join("b/sweep.csv")).unwrap();
    assert_eq!(x, y);

    let m: serde_json::Value =
        serde_json::from_str(&read(&tmp.path().join("a/manifest.json"))).unwrap();
    assert_eq!(m["seed"], 7);
    assert_eq!(m["command"], "efficiency-sweep");
    assert_eq!(m["config"]["scenario"]["eta"], 1e-9);
    assert_eq!(m["outputs"][0]["path"], "sweep.csv");
    assert_eq!(m["outputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn csv_format_is_fixed() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("c.json"),
        r#"{"sweep":{"parameter":"mixing_squared","values":[0.1,0.5,0.9]}}"#,
    )
    .unwrap();
    let out = transducer(
        &["efficiency-sweep", "--config", "c.json", "--output", "o"],
        tmp.path(),
    );
    assert!(out.status.success());
    let text = read(&tmp.path().join("o/sweep.csv"));
    assert!(!text.contains('\r'));
    assert!(text.ends_with('\n'));
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "series,abs_a_sq[1],abs_a[1],efficiency_b[1],survival_a[1],error"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "base");
    for v in &row[1..5] {
        let (mant, exp) = v.split_once('e').unwrap();
        let digits = mant.trim_start_matches('-').replace('.', "");
        assert_eq!(digits.len(), 17, "{v}");
        exp.parse::<i32>().unwrap();
    }
    assert_eq!(row[1], "1.0000000000000001e-1");
}

#[test]
fn field_map_binary_matches_csv() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.json"), SMALL_FIELD).unwrap();
    let out = transducer(
        &["fieldmap", "--config", "c.json", "--output", "o"],
        tmp.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let dir = tmp.path().join("o");
    let side: serde_json::Value = serde_json::from_str(&read(&dir.join("field_xy.json"))).unwrap();
    assert_eq!(side["dims"], serde_json::json!([18, 18]));
    assert_eq!(side["values_per_point"], 12);
    let bytes = std::fs::read(dir.join("field_xy.bin")).unwrap();
    assert_eq!(bytes.len(), 18 * 18 * 12 * 8);
    let csv = read(&dir.join("field_xy.csv"));
    let mut lines = csv.lines();
    assert!(
        lines
            .next()
            .unwrap()
            .starts_with("x[d],y[d],z[d],re_ea_x[E0]")
    );
    for (k, line) in lines.enumerate() {
        let vals: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(vals.len(), 15);
        assert_eq!(vals[0], -4.25 + 0.5 * (k % 18) as f64);
        assert_eq!(vals[1], -4.25 + 0.5 * (k / 18) as f64);
        for j in 0..12 {
            let o = (k * 12 + j) * 8;
            let b = f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
            assert_eq!(b.to_bits(), vals[3 + j].to_bits());
        }
    }
    let solve = read(&dir.join("solve.csv"));
    let res: f64 = column(&solve, "residual[1]")[0].parse().unwrap();
    assert!(res < 1e-10);
}

#[test]
fn grid_on_emitter_is_rejected_before_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = SMALL_FIELD.replace(
        r#""lo":-4.25,"hi":4.25,"n":18},"v""#,
        r#""lo":-4.0,"hi":4.0,"n":9},"v""#,
    );
    let cfg = cfg.replace(
        r#""v":{"lo":-4.25,"hi":4.25,"n":18}"#,
        r#""v":{"lo":-4.0,"hi":4.0,"n":9}"#,
    );
    std::fs::write(tmp.path().join("c.json"), cfg).unwrap();
    let out = transducer(
        &["fieldmap", "--config", "c.json", "--output", "o"],
        tmp.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn rwa_flag_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let out = transducer(
        &["modeweights", "--rwa", "--eta", "1e-8", "--output", "o"],
        tmp.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let m: serde_json::Value =
        serde_json::from_str(&read(&tmp.path().join("o/manifest.json"))).unwrap();
    assert_eq!(m["config"]["scenario"]["rwa"], true);
    assert_eq!(m["config"]["scenario"]["eta"], 1e-8);
    let summary = read(&tmp.path().join("o/modeweights.csv"));
    let eff: f64 = column(&summary, "efficiency_b[1]")[0].parse().unwrap();
    let sum: f64 = column(&summary, "mode_sum[1]")[0].parse().unwrap();
    assert!((eff - sum).abs() < 1e-9);
}

#[test]
fn preset_manifest_flags_assumptions() {
    let tmp = tempfile::tempdir().unwrap();
    let out = transducer(
        &["criticality", "--preset", "fig4a", "--output", "o"],
        tmp.path(),
    );
    assert!(out.status.success());
    let m: serde_json::Value =
        serde_json::from_str(&read(&tmp.path().join("o/manifest.json"))).unwrap();
    assert_eq!(m["preset"], "fig4a");
    let keys: Vec<&str> = m["assumed"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a["key"].as_str().unwrap())
        .collect();
    assert!(keys.contains(&"scenario.eta"));
    let csv = read(&tmp.path().join("o/critical.csv"));
    let omega: Vec<f64> = column(&csv, "omega[2pi/d]")
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    assert_eq!(omega.len(), 4);
    assert!(omega.iter().all(|w| (w - 0.5).abs() < 1e-9));
}

#[test]
fn presets_are_listed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = transducer(&["presets"], tmp.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for name in ["fig2", "fig5c", "fig7b", "fig10"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name}");
    }
}
