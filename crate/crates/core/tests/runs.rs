use std::fs;
use std::path::{Path, PathBuf};

use netzero_core::report::{emit_figure_data, read_report, run_scenario, run_sweep, RunBundle, SweepSpec};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let path = scenarios().join("netzero2060_nodac.toml");
    let a = run_scenario(&path, &tmp.path().join("a")).unwrap();
    let b = run_scenario(&path, &tmp.path().join("b")).unwrap();
    assert_eq!(a.config_hash, b.config_hash);
    for file in a.files.iter().map(String::as_str).chain(["run_meta.toml"]) {
        let left = fs::read(tmp.path().join("a").join(file)).unwrap();
        let right = fs::read(tmp.path().join("b").join(file)).unwrap();
        assert!(left == right, "{file} differs between reruns");
    }
}

#[test]
fn sweep_variants_change_only_declared_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("spec");
    fs::create_dir_all(&dir).unwrap();
    let sensitivity = scenarios().join("sensitivity");
    let base = sensitivity.join("central.toml").display().to_string();
    fs::write(
        dir.join("stray.toml"),
        format!("base = {base:?}\nname = \"stray\"\n\n[dac]\nwater = 5.0\n"),
    )
    .unwrap();
    fs::write(
        dir.join("sweep.toml"),
        format!(
            "base = {base:?}\n\n[[variants]]\nname = \"high_heat\"\nscenario = {:?}\n\n[[variants]]\nname = \"stray\"\nscenario = \"stray.toml\"\n",
            sensitivity.join("high_heat.toml").display().to_string()
        ),
    )
    .unwrap();
    let spec = SweepSpec::load(&dir.join("sweep.toml")).unwrap();
    let out = tmp.path().join("out");
    let outcome = run_sweep(&spec, &out, 2).unwrap();

    assert_eq!(outcome.rows.len(), 1);
    assert!(outcome.rows[0].percent_change < 0.0);
    let meta = read_report(&out.join("variants/high_heat")).unwrap();
    assert_eq!(meta.changed_keys, vec!["dac.gas_2050".to_string()]);

    // A change made outside the override list is refused, not silently swept.
    assert_eq!(outcome.failures.len(), 1);
    assert_eq!(outcome.failures[0].0, "stray");
    assert!(outcome.failures[0].1.contains("dac.water"), "{}", outcome.failures[0].1);
    let tornado = fs::read_to_string(out.join("tornado.csv")).unwrap();
    assert!(tornado.lines().any(|l| l.starts_with("stray,") && l.contains("failed")));
}

#[test]
fn figure_tables_keep_main_scenarios_on_one_emissions_path() {
    let tmp = tempfile::tempdir().unwrap();
    let mut bundles = Vec::new();
    for name in ["netzero2060_lowdac", "netzero2060_nodac"] {
        let dir = tmp.path().join(name);
        run_scenario(&scenarios().join(format!("{name}.toml")), &dir).unwrap();
        bundles.push(RunBundle::load(&dir).unwrap());
    }
    let figs = tmp.path().join("fig");
    let written = emit_figure_data(&bundles, &figs).unwrap();
    assert_eq!(written.len(), 5);

    let mut reader = csv::Reader::from_path(figs.join("climate_paths.csv")).unwrap();
    let header = reader.headers().unwrap().clone();
    let low = header.iter().position(|h| h == "netzero2060_lowdac_net_co2").unwrap();
    let no = header.iter().position(|h| h == "netzero2060_nodac_net_co2").unwrap();
    for row in reader.records() {
        let row = row.unwrap();
        let (a, b): (f64, f64) = (row[low].parse().unwrap(), row[no].parse().unwrap());
        // Two regions, each within its own cap tolerance.
        assert!((a - b).abs() <= 4e-4, "{a} vs {b}");
    }

    let split = fs::read_to_string(figs.join("primary_energy_split.csv")).unwrap();
    for line in split.lines().filter(|l| l.starts_with("netzero2060_nodac,") && l.contains(",dac_heat,")) {
        assert!(line.ends_with(",0"), "{line}");
    }
}

#[test]
fn duplicate_runs_are_refused_by_figures() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    run_scenario(&scenarios().join("no_policy.toml"), &dir).unwrap();
    let bundle = RunBundle::load(&dir).unwrap();
    assert!(emit_figure_data(&[bundle.clone(), bundle], &tmp.path().join("fig")).is_err());
}
