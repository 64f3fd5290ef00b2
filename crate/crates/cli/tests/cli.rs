use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_quench-winding"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin()
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("spawn quench-winding")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL: [&str; 2] = ["--grid-n", "1024"];

#[test]
fn model_reports_winding_and_band_range() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), &["model", "--model", "qwz:m=5,t_s=2,t_so=1,n=1", SMALL[0], SMALL[1]]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let j = json(&d.path().join("model.json"));
    assert_eq!(j["winding"], 0);
    assert!((j["omega_min"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    assert!((j["omega_max"].as_f64().unwrap() - 18.0).abs() < 1e-9);
    let csv = fs::read_to_string(d.path().join("model.csv")).unwrap();
    assert!(csv.starts_with("k,E_plus,E_minus,angle\n"));
    assert_eq!(csv.lines().count(), 1025);
}

#[test]
fn ssh_model_is_nontrivial_for_weak_intracell_hopping() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), &["model", "--model", "ssh:t1=0,t2=1,n=1", SMALL[0], SMALL[1]]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(json(&d.path().join("model.json"))["analytic_winding"], 1);
}

#[test]
fn gap_closing_model_is_rejected_with_code_1() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), &["model", "--model", "qwz:m=4,t_s=2,t_so=1,n=1"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("phase boundary"), "{}", stderr(&o));
}

#[test]
fn quench_three_to_zero() {
    let d = TempDir::new().unwrap();
    let o = run(
        d.path(),
        &["quench", "--initial", "qwz:m=1,t_s=2,t_so=1,n=3", "--final", "qwz:m=5,t_s=2,t_so=1,n=1", "--svg"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let j = json(&d.path().join("report.json"));
    assert_eq!(j["report"]["exact_count"], 3);
    assert_eq!(j["report"]["peak_count"], 3);
    assert_eq!(j["report"]["inferred_initial_candidates"], serde_json::json!([3]));
    assert!(j["closed_form_max_diff"].as_f64().unwrap() < 1e-10);
    assert!(d.path().join("overlap.svg").exists());
    let csv = fs::read_to_string(d.path().join("overlap.csv")).unwrap();
    assert!(csv.starts_with("k,c_plus_sq,c_minus_sq,delta_angle\n"));
}

#[test]
fn cross_plane_quench_needs_opt_in() {
    let d = TempDir::new().unwrap();
    let args = ["quench", "--initial", "ssh:t1=0.5,t2=1,n=1", "--final", "qwz:m=5,t_s=2,t_so=1,n=1"];
    let o = run(d.path(), &args);
    assert_eq!(code(&o), 1, "{}", stderr(&o));

    let mut opted = args.to_vec();
    opted.push("--allow-cross-plane");
    let o = run(d.path(), &opted);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let j = json(&d.path().join("report.json"));
    assert!(j["plane"].is_null());
    assert!(j["report"]["exact_count"].is_null());
}

#[test]
fn emission_recovers_the_initial_winding() {
    let d = TempDir::new().unwrap();
    let o = run(
        d.path(),
        &["emission", "--initial", "qwz:m=1,t_s=2,t_so=1,n=3", "--final", "qwz:m=5,t_s=2,t_so=1,n=1", "--bins", "256"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let j = json(&d.path().join("emission.json"));
    assert_eq!(j["transitions"], 3);
    assert_eq!(j["k_domain_count"], 3);
    assert!(j["conservation_error"].as_f64().unwrap() < 1e-6);
    for f in ["emission_k.csv", "emission_omega.csv"] {
        assert!(d.path().join(f).exists(), "{f}");
    }
}

#[test]
fn emission_into_non_monotone_band_is_a_numerical_failure() {
    let d = TempDir::new().unwrap();
    let o = run(
        d.path(),
        &["emission", "--initial", "qwz:m=1,t_s=2,t_so=1,n=3", "--final", "qwz:m=5,t_s=2,t_so=1,n=2"],
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn sweep_default_grid_agrees_everywhere() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), &["sweep", SMALL[0], SMALL[1]]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(d.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 301);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")));
}

#[test]
fn sweep_with_empty_axis_is_a_config_error() {
    let d = TempDir::new().unwrap();
    let cfg = d.path().join("empty.json");
    fs::write(&cfg, r#"{"command": "sweep", "sweep": {"m": [], "n": [0], "t_so": [1]}}"#).unwrap();
    let o = run(d.path(), &["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn sweep_low_spin_orbit_overcounts_without_flag_mode() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), &["sweep", "--t-so", "0.1", SMALL[0], SMALL[1]]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let o = run(d.path(), &["sweep", "--t-so", "0.1", "--flag-false-cps", SMALL[0], SMALL[1]]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(d.path().join("sweep.csv")).unwrap();
    assert!(csv.lines().next().unwrap().ends_with(",false_cps"));
}

#[test]
fn coldatom_lattice_pipeline() {
    let d = TempDir::new().unwrap();
    let o = run(
        d.path(),
        &[
            "coldatom",
            "--initial",
            "coldatom:delta=2,t_s=2,t_so=0.5,n=3",
            "--final",
            "coldatom:delta=10,t_s=2,t_so=0.5,n=1",
            "--seed",
            "7",
            SMALL[0],
            SMALL[1],
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let j = json(&d.path().join("report.json"));
    assert_eq!(j["report"]["inferred_initial_candidates"], serde_json::json!([3]));
    assert_eq!(j["seed"], 7);

    // Feed the sampled densities back in; the report must not change.
    let back = TempDir::new().unwrap();
    let dens = d.path().join("densities.csv");
    let o = run(
        back.path(),
        &["coldatom", "--final", "coldatom:delta=10,t_s=2,t_so=0.5,n=1", "--densities", dens.to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let k = json(&back.path().join("report.json"));
    assert_eq!(k["report"]["peak_count"], j["report"]["peak_count"]);
    assert_eq!(k["report"]["inferred_initial_candidates"], j["report"]["inferred_initial_candidates"]);
}

#[test]
fn coldatom_polarized_start() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), &["coldatom", "--final", "coldatom:delta=2,t_s=2,t_so=0.5,n=1", "--polarized", SMALL[0], SMALL[1]]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let j = json(&d.path().join("report.json"));
    assert_eq!(j["report"]["peak_count"], 1);

    let o = run(
        d.path(),
        &["coldatom", "--final", "coldatom:delta=2", "--initial", "coldatom:delta=10", "--polarized"],
    );
    assert_eq!(code(&o), 1);
}

#[test]
fn seeded_runs_are_byte_identical() {
    let args = [
        "coldatom",
        "--initial",
        "coldatom:delta=2,t_s=2,t_so=1,n=2",
        "--final",
        "coldatom:delta=10,t_s=2,t_so=1,n=1",
        "--seed",
        "42",
        "--shots",
        "200",
        "--grid-n",
        "512",
    ];
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    assert_eq!(code(&run(a.path(), &args)), 0);
    assert_eq!(code(&run(b.path(), &args)), 0);
    for f in ["densities.csv", "estimate.csv", "report.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }

    let sweep = ["sweep", "--grid-n", "256"];
    assert_eq!(code(&run(a.path(), &sweep)), 0);
    assert_eq!(code(&run(b.path(), &sweep)), 0);
    assert_eq!(fs::read(a.path().join("sweep.csv")).unwrap(), fs::read(b.path().join("sweep.csv")).unwrap());
}

#[test]
fn config_file_with_flag_override() {
    let d = TempDir::new().unwrap();
    let cfg = d.path().join("q.json");
    fs::write(
        &cfg,
        r#"{"command": "quench", "initial": "qwz:m=1,n=2", "final": "qwz:m=5,n=1", "grid_n": 512}"#,
    )
    .unwrap();
    let o = run(d.path(), &["quench", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let j = json(&d.path().join("report.json"));
    assert_eq!((j["grid_n"].as_u64(), j["expected_count"].as_i64()), (Some(512), Some(2)));

    let o = run(d.path(), &["quench", "--config", cfg.to_str().unwrap(), "--initial", "qwz:m=1,n=4", "--grid-n", "2048"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let j = json(&d.path().join("report.json"));
    assert_eq!((j["grid_n"].as_u64(), j["expected_count"].as_i64()), (Some(2048), Some(4)));
}

#[test]
fn config_for_another_command_or_unknown_key_is_rejected() {
    let d = TempDir::new().unwrap();
    let cfg = d.path().join("m.json");
    fs::write(&cfg, r#"{"command": "model", "model": "qwz:m=5"}"#).unwrap();
    assert_eq!(code(&run(d.path(), &["quench", "--config", cfg.to_str().unwrap()])), 1);
    fs::write(&cfg, r#"{"command": "model", "modle": "qwz:m=5"}"#).unwrap();
    assert_eq!(code(&run(d.path(), &["model", "--config", cfg.to_str().unwrap()])), 1);
}

#[test]
fn bad_grid_sizes_and_thresholds_are_rejected() {
    let d = TempDir::new().unwrap();
    let base = ["quench", "--initial", "qwz:m=1,n=1", "--final", "qwz:m=5,n=1"];
    let with = |extra: &[&str]| {
        let mut a = base.to_vec();
        a.extend_from_slice(extra);
        code(&run(d.path(), &a))
    };
    assert_eq!(with(&["--grid-n", "8"]), 1);
    assert_eq!(with(&["--eps-hi", "0.7"]), 1);
    assert_eq!(with(&["--eps-lo", "-0.1"]), 1);
    assert_eq!(with(&["--no-such-flag"]), 1);
}

#[test]
fn unwritable_output_is_an_io_error() {
    let d = TempDir::new().unwrap();
    let blocker = d.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = run(&blocker.join("sub"), &["model", "--model", "qwz:m=5"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in fs::read_dir(root).unwrap() {
        let p = e.unwrap().path();
        if p.extension().and_then(|s| s.to_str()) != Some("json") {
            continue;
        }
        let v = json(&p);
        let cmd = v["command"].as_str().expect("command key");
        assert!(["model", "quench", "emission", "coldatom", "sweep"].contains(&cmd), "{}", p.display());
        n += 1;
    }
    assert!(n >= 10);
}
