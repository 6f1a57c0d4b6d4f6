use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use microtrap::config::parse_scenario;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_microtrap"));
    c.env_remove("MICROTRAP_OUT");
    c
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn trap_reports_depth() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["trap"], &scenario("single_trap.toml"), dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = read_json(&dir.path().join("trap.json"));
    let depth = doc["result"]["depth_over_kB_mK"].as_f64().unwrap();
    assert!((depth + 1.9).abs() < 0.19, "{depth}");
    assert_eq!(doc["result"]["trapped"], true);
}

#[test]
fn fit_two_constant_points_is_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("flat.csv");
    fs::write(&csv, "time_s,count\n0.0,100\n0.1,100\n").unwrap();
    let o = bin().arg("fit").arg("--input").arg(&csv).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("degenerate fit"));
}

#[test]
fn fit_recovers_lifetime_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("decay.csv");
    let mut text = String::from("time_s,count\n");
    for k in 0..10 {
        let t = 0.05 * k as f64;
        text.push_str(&format!("{t},{}\n", 1000.0 * (-t / 0.166f64).exp()));
    }
    fs::write(&csv, text).unwrap();
    let o = bin().arg("fit").arg("--input").arg(&csv).arg("--out").arg(dir.path()).output().unwrap();
    assert!(o.status.success());
    let doc = read_json(&dir.path().join("fit.json"));
    let tau = doc["result"]["lifetime_s"].as_f64().unwrap();
    assert!((tau / 0.166 - 1.0).abs() < 1e-6);
    assert!(dir.path().join("fit_curve.csv").exists());
}

#[test]
fn missing_input_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["fit", "--input"])
        .arg(dir.path().join("nope.csv"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
    let o = run(&["trap"], &dir.path().join("nope.toml"), dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[beam]\npower_mW = 50.0\nwaist_um = 15.0\ndetuning_nm = 2.0\nwaist_mm = 1.0\n").unwrap();
    let o = run(&["trap"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("waist_mm"));

    let o = run(&["trap", "--set", "beam.power_mW=lots"], &scenario("single_trap.toml"), dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("beam.power_mW"));

    let o = run(&["array"], &scenario("single_trap.toml"), dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lens_array"));
}

#[test]
fn domain_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    // a 0.1 pm offset is well inside the 100-linewidth validity gate
    let o = run(&["trap", "--set", "beam.detuning_nm=0.0001"], &scenario("single_trap.toml"), dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["trap", "--set", "beam.power_mW=-1"], &scenario("single_trap.toml"), dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mc_reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = scenario("single_trap.toml");
    let args = ["mc", "--set", "montecarlo.atom_count=2000", "--set", "montecarlo.include_recoil_heating=true"];
    assert!(run(&args, &cfg, a.path()).status.success());
    assert!(run(&args, &cfg, b.path()).status.success());
    for f in ["mc_survival.csv", "mc_energy.csv", "mc.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let c = tempfile::tempdir().unwrap();
    let mut with_seed = args.to_vec();
    with_seed.extend(["--seed", "99"]);
    assert!(run(&with_seed, &cfg, c.path()).status.success());
    assert_ne!(
        fs::read(a.path().join("mc_survival.csv")).unwrap(),
        fs::read(c.path().join("mc_survival.csv")).unwrap()
    );
    let doc = read_json(&c.path().join("mc.json"));
    assert_eq!(doc["result"]["seed"], 99);
    assert!(doc["result"]["prng"].as_str().unwrap().contains("ChaCha8"));
}

#[test]
fn override_equals_file_edit() {
    let dir = tempfile::tempdir().unwrap();
    let original = fs::read_to_string(scenario("single_trap.toml")).unwrap();
    let edited = original.replace("power_mW = 50.0", "power_mW = 20.0");
    assert_ne!(original, edited);
    let edited_path = dir.path().join("edited.toml");
    fs::write(&edited_path, edited).unwrap();

    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&["trap"], &edited_path, &a).status.success());
    assert!(run(&["trap", "--set", "beam.power_mW=20"], &scenario("single_trap.toml"), &b).status.success());
    let ja = read_json(&a.join("trap.json"));
    let jb = read_json(&b.join("trap.json"));
    assert_eq!(ja["result"], jb["result"]);
    assert_eq!(ja["scenario"], jb["scenario"]);
}

#[test]
fn echoed_scenario_reparses() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("microlens_register.toml");
    assert!(run(&["address"], &cfg, dir.path()).status.success());
    let doc = read_json(&dir.path().join("address.json"));
    let echoed = doc["scenario"].as_str().unwrap();
    let original = parse_scenario(&fs::read_to_string(&cfg).unwrap(), &[]).unwrap();
    assert_eq!(parse_scenario(echoed, &[]).unwrap(), original);
}

#[test]
fn register_workflow_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("microlens_register.toml");
    for cmd in ["array", "move", "address", "readout"] {
        let o = run(&[cmd], &cfg, dir.path());
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(dir.path().join(format!("{cmd}.json")).exists());
    }
    let power = fs::read_to_string(dir.path().join("array_power_map.csv")).unwrap();
    assert!(power.starts_with("site_row,site_col,x_m,y_m,power_W"));
    assert_eq!(power.lines().count(), 1 + 16);

    let mv = read_json(&dir.path().join("move.json"));
    assert_eq!(mv["result"]["window"]["status"], "window");

    let reg: serde_json::Value = read_json(&dir.path().join("register.json"));
    let flipped: Vec<_> = reg
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["w"].as_f64().unwrap() > 0.999)
        .collect();
    assert_eq!(flipped.len(), 1);
    assert_eq!(flipped[0]["site"]["row"], 1);

    let readout = fs::read_to_string(dir.path().join("readout.csv")).unwrap();
    assert!(readout.starts_with("lattice,row,col,bright_probability,collection_efficiency,expected_photons"));
}

#[test]
fn vcsel_array_marks_disabled_site() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["array"], &scenario("vcsel_array.toml"), dir.path());
    assert!(o.status.success());
    let doc = read_json(&dir.path().join("array.json"));
    assert_eq!(doc["result"]["trapped_count"], 8);
    assert_eq!(doc["result"]["source"], "vcsel-array");
}

#[test]
fn formats_limit_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["array", "--set", "output.formats=[\"csv\"]"], &scenario("vcsel_array.toml"), dir.path());
    assert!(o.status.success());
    assert!(dir.path().join("array_sites.csv").exists());
    assert!(!dir.path().join("array.json").exists());
}

#[test]
fn out_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .arg("trap")
        .arg("--config")
        .arg(scenario("single_trap.toml"))
        .env("MICROTRAP_OUT", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("trap.json").exists());
}
