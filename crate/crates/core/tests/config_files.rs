use std::fs;
use std::path::{Path, PathBuf};

use netzero_core::config::{parse_scenario, parse_scenario_str, parse_scenario_with, Override};
use netzero_core::Error;
use toml::{Table, Value};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

/// The shared calibration with CSV references made absolute, ready to edit and write elsewhere.
fn common_table() -> Table {
    let dir = scenarios();
    let mut table: Table = fs::read_to_string(dir.join("common.toml")).unwrap().parse().unwrap();
    let abs = |rel: &Value| Value::String(dir.join(rel.as_str().unwrap()).display().to_string());
    let techs = abs(&table["technologies_csv"]);
    table.insert("technologies_csv".into(), techs);
    for region in table["regions"].as_array_mut().unwrap() {
        let region = region.as_table_mut().unwrap();
        for (section, key) in [("land", "uses_csv"), ("storage", "tiers_csv")] {
            let t = region[section].as_table_mut().unwrap();
            let v = abs(&t[key]);
            t.insert(key.into(), v);
        }
    }
    table
}

fn write(dir: &Path, table: &Table) -> PathBuf {
    let path = dir.join("scenario.toml");
    fs::write(&path, toml::to_string(table).unwrap()).unwrap();
    path
}

#[test]
fn missing_regions_is_a_schema_error_naming_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let mut table = common_table();
    table.remove("regions");
    let err = parse_scenario(&write(tmp.path(), &table)).unwrap_err();
    assert!(matches!(err, Error::Schema { .. }), "{err}");
    assert!(err.to_string().contains("regions"), "{err}");
}

#[test]
fn unknown_key_reports_its_line() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    let base = scenarios().join("netzero2060_lowdac.toml");
    fs::write(&path, format!("base = {:?}\nname = \"bad\"\n\n[dac]\ngas_2051 = 5.0\n", base.display().to_string())).unwrap();
    let err = parse_scenario(&path).unwrap_err();
    let text = err.to_string();
    assert!(text.contains("gas_2051"), "{text}");
    assert!(text.contains("bad.toml:5"), "{text}");
}

#[test]
fn explicit_cap_that_never_reaches_zero_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mut table = common_table();
    table["policy"].as_table_mut().unwrap().insert("kind".into(), "nt2nz".into());
    let cap: Value = toml::from_str::<Table>("c = [[2025, 9.0], [2060, 0.4], [2100, 0.4]]").unwrap()["c"].clone();
    table["regions"].as_array_mut().unwrap()[0]
        .as_table_mut()
        .unwrap()
        .insert("cap".into(), cap);
    let err = parse_scenario(&write(tmp.path(), &table)).unwrap_err();
    assert!(matches!(err, Error::Invariant { .. }), "{err}");
    assert!(err.to_string().contains("china"), "{err}");
}

#[test]
fn serialized_config_parses_back_identically() {
    let config = parse_scenario(&scenarios().join("netzero2060_highdac.toml")).unwrap();
    let again = parse_scenario_str(&config.to_toml().unwrap()).unwrap();
    assert_eq!(config, again);
    assert_eq!(config.hash().unwrap(), again.hash().unwrap());
}

#[test]
fn base_include_and_overrides_compose() {
    let config = parse_scenario(&scenarios().join("sensitivity/high_heat.toml")).unwrap();
    assert_eq!(config.dac.gas_2050, 8.1);
    assert_eq!(config.dac.elec_2050, 1.3);
    assert_eq!(config.overrides.len(), 1);

    let extra = [Override::new("regions.china.land.protection_fraction", 0.5)];
    let tweaked = parse_scenario_with(&scenarios().join("netzero2060_lowdac.toml"), &extra).unwrap();
    assert_eq!(tweaked.region("china").unwrap().land.protection_fraction, 0.5);
    assert_eq!(tweaked.region("row").unwrap().land.protection_fraction, 0.9);
}

#[test]
fn override_to_a_missing_element_fails() {
    let extra = [Override::new("regions.mars.gdp", 1.0)];
    let err = parse_scenario_with(&scenarios().join("netzero2060_lowdac.toml"), &extra).unwrap_err();
    assert!(err.to_string().contains("mars"), "{err}");
}
