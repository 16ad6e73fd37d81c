//! Scenario runs written to disk, the one-at-a-time sensitivity sweep and plot-ready figure tables.
//!
//! Every table is plain CSV with a header row. Floats are written with Rust's shortest
//! round-trip formatting so reruns of the same configuration are byte-identical.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::climate::{emulate, ClimateRow};
use crate::config::{parse_scenario, path_covers, Override, ScenarioConfig};
use crate::error::{Error, Result};
use crate::land::LAND_USES;
use crate::solver::{cap_anchors, run_path, RunOutput};
use crate::techno::csv_error;

/// Year at which deployment, price and removal summaries are read.
pub const SUMMARY_YEAR: i32 = 2060;

pub const LEDGER_CSV: &str = "ledger.csv";
pub const CLIMATE_CSV: &str = "climate.csv";
pub const ENERGY_CSV: &str = "energy.csv";
pub const PRIMARY_ENERGY_CSV: &str = "primary_energy.csv";
pub const TECHNOLOGY_CSV: &str = "technology.csv";
pub const SECTOR_EMISSIONS_CSV: &str = "sector_emissions.csv";
pub const WATER_CSV: &str = "water.csv";
pub const LAND_CSV: &str = "land.csv";
pub const META_FILE: &str = "run_meta.toml";

/// A solved scenario together with its climate response.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub config: ScenarioConfig,
    pub output: RunOutput,
    pub climate: Vec<ClimateRow>,
}

impl ScenarioRun {
    pub fn summary(&self) -> Summary {
        let region = self.config.focus_region.clone();
        let row = self
            .output
            .snapshot(&region, SUMMARY_YEAR)
            .map(|s| s.ledger.clone());
        Summary {
            focus_region: region,
            dac_2060: row.as_ref().map_or(0.0, |r| r.dac),
            carbon_price_2060: row.as_ref().map_or(0.0, |r| r.carbon_price),
            negative_emissions_2060: row.as_ref().map_or(0.0, |r| r.negative_emissions()),
            anomaly_2100: self.climate.last().map_or(0.0, |c| c.anomaly),
        }
    }
}

/// Headline numbers of one run, read for the focus region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub focus_region: String,
    /// GtCO2/yr.
    pub dac_2060: f64,
    /// $/tCO2.
    pub carbon_price_2060: f64,
    /// BECCS, DAC and afforestation, GtCO2/yr.
    pub negative_emissions_2060: f64,
    /// K above preindustrial in the final grid year.
    pub anomaly_2100: f64,
}

/// Metadata sidecar written next to every run's tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub config_hash: String,
    pub overrides: Vec<Override>,
    /// Dotted keys that differ from the sweep base, empty for standalone runs.
    #[serde(default)]
    pub changed_keys: Vec<String>,
    pub files: Vec<String>,
    pub summary: Summary,
}

/// Solves every period and feeds the global emissions to the climate emulator.
pub fn simulate(config: &ScenarioConfig) -> Result<ScenarioRun> {
    let output = run_path(config)?;
    let years: Vec<i32> = config.grid.years().collect();
    let mut co2 = vec![0.0; years.len()];
    let mut ch4 = vec![0.0; years.len()];
    for snaps in output.periods.values() {
        for (k, s) in snaps.iter().enumerate() {
            co2[k] += s.ledger.net_co2;
            ch4[k] += s.ledger.ch4_mt;
        }
    }
    let climate = emulate(&config.climate, &years, &co2, &ch4).map_err(|e| e.in_scenario(&config.name))?;
    Ok(ScenarioRun {
        config: config.clone(),
        output,
        climate,
    })
}

/// Parses, solves and writes one scenario.
pub fn run_scenario(config_path: &Path, out_dir: &Path) -> Result<RunReport> {
    let config = parse_scenario(config_path)?;
    let run = simulate(&config)?;
    write_run(&run, out_dir, Vec::new())
}

fn num(v: f64) -> String {
    // Negative zero would make otherwise identical files differ.
    if v == 0.0 {
        "0".into()
    } else {
        v.to_string()
    }
}

struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Table {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(&self.header).map_err(|e| csv_error(path, e))?;
        for row in &self.rows {
            w.write_record(row).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn s<T: Display>(v: T) -> String {
    v.to_string()
}

fn ledger_table(run: &ScenarioRun) -> Table {
    let mut t = Table::new(&[
        "scenario",
        "region",
        "year",
        "carbon_price",
        "cap",
        "gross_co2",
        "luc_co2",
        "beccs",
        "dac",
        "afforestation",
        "net_co2",
        "ch4_mt",
        "fossil_captured",
        "stored",
        "cumulative_storage",
    ]);
    for r in run.output.ledger() {
        t.push(vec![
            run.config.name.clone(),
            r.region.clone(),
            s(r.year),
            num(r.carbon_price),
            r.cap.map(num).unwrap_or_default(),
            num(r.gross_co2),
            num(r.luc_co2),
            num(r.beccs),
            num(r.dac),
            num(r.afforestation),
            num(r.net_co2),
            num(r.ch4_mt),
            num(r.fossil_captured),
            num(r.stored),
            num(r.cumulative_storage),
        ]);
    }
    t
}

fn climate_table(run: &ScenarioRun) -> Table {
    let mut t = Table::new(&[
        "scenario",
        "year",
        "co2_emissions",
        "ch4_emissions",
        "co2_ppm",
        "ch4_burden",
        "forcing",
        "anomaly",
    ]);
    for c in &run.climate {
        t.push(vec![
            run.config.name.clone(),
            s(c.year),
            num(c.co2_emissions),
            num(c.ch4_emissions),
            num(c.co2_ppm),
            num(c.ch4_burden),
            num(c.forcing),
            num(c.anomaly),
        ]);
    }
    t
}

fn energy_tables(run: &ScenarioRun) -> [Table; 4] {
    let name = &run.config.name;
    let mut fuels = Table::new(&["scenario", "region", "year", "fuel", "price", "consumption_ej"]);
    let mut primary = Table::new(&["scenario", "region", "year", "category", "ej", "dac_heat_ej"]);
    let mut techs = Table::new(&[
        "scenario",
        "region",
        "year",
        "sector",
        "technology",
        "activity_ej",
        "new_activity_ej",
        "new_share",
    ]);
    let mut sectors = Table::new(&[
        "scenario",
        "region",
        "year",
        "sector",
        "output_ej",
        "gross_co2",
        "removal",
        "captured",
    ]);
    let heat_category = if run.config.dac.heat_capture_fraction > 0.0 {
        "gas_ccs"
    } else {
        "gas"
    };
    for model in &run.output.models {
        let e = &model.energy;
        for snap in &run.output.periods[&model.name] {
            let head = || vec![name.clone(), model.name.clone(), s(snap.year)];
            for (f, fuel) in e.fuels.iter().enumerate() {
                let mut use_ej = snap.dispatch.fuel_use[f];
                if fuel == "gas" {
                    use_ej += snap.dac.gas;
                }
                let mut row = head();
                row.extend([fuel.clone(), num(snap.prices[f]), num(use_ej)]);
                fuels.push(row);
            }
            for (category, ej) in model.primary_energy(&run.config, snap) {
                let heat = if category == heat_category { snap.dac.gas } else { 0.0 };
                let mut row = head();
                row.extend([category, num(ej), num(heat)]);
                primary.push(row);
            }
            for (si, (sector, outcome)) in e.sectors.iter().zip(&snap.dispatch.sectors).enumerate() {
                for (k, &ti) in sector.techs.iter().enumerate() {
                    let mut row = head();
                    row.extend([
                        sector.name.clone(),
                        e.techs[ti].name.clone(),
                        num(outcome.activity[k]),
                        num(outcome.new_activity[k]),
                        num(snap.pricing[si].shares[k]),
                    ]);
                    techs.push(row);
                }
                let mut row = head();
                row.extend([
                    sector.name.clone(),
                    num(outcome.demand),
                    num(outcome.gross_co2),
                    num(outcome.removal),
                    num(outcome.captured),
                ]);
                sectors.push(row);
            }
            let mut row = head();
            row.extend([
                "dac".into(),
                num(snap.dac.removal),
                num(snap.dac.heat_co2 - snap.dac.heat_captured),
                num(snap.dac.removal),
                num(snap.dac.heat_captured + snap.dac.removal),
            ]);
            sectors.push(row);
        }
    }
    [fuels, primary, techs, sectors]
}

fn water_table(run: &ScenarioRun) -> Table {
    let mut t = Table::new(&[
        "scenario",
        "region",
        "year",
        "food_irrigation",
        "bioenergy_irrigation",
        "municipal",
        "industrial_power",
        "dac",
        "total",
    ]);
    for (region, snaps) in &run.output.periods {
        for snap in snaps {
            let w = &snap.water;
            t.push(vec![
                run.config.name.clone(),
                region.clone(),
                s(snap.year),
                num(w.food_irrigation),
                num(w.bioenergy_irrigation),
                num(w.municipal),
                num(w.industrial_power),
                num(w.dac),
                num(w.total()),
            ]);
        }
    }
    t
}

fn land_table(run: &ScenarioRun) -> Table {
    let mut t = Table::new(&[
        "scenario",
        "region",
        "year",
        "use",
        "area_km2",
        "rent",
        "biomass_price",
        "bio_supply_ej",
    ]);
    for (region, snaps) in &run.output.periods {
        for snap in snaps {
            for (i, name) in LAND_USES.iter().enumerate() {
                t.push(vec![
                    run.config.name.clone(),
                    region.clone(),
                    s(snap.year),
                    s(name),
                    num(snap.land.areas[i]),
                    num(snap.land.rents[i]),
                    num(snap.biomass_price),
                    num(snap.land.bio_supply),
                ]);
            }
        }
    }
    t
}

/// Writes every table and the metadata sidecar into `out_dir`.
pub fn write_run(run: &ScenarioRun, out_dir: &Path, changed_keys: Vec<String>) -> Result<RunReport> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let [fuels, primary, techs, sectors] = energy_tables(run);
    let tables = [
        (LEDGER_CSV, ledger_table(run)),
        (CLIMATE_CSV, climate_table(run)),
        (ENERGY_CSV, fuels),
        (PRIMARY_ENERGY_CSV, primary),
        (TECHNOLOGY_CSV, techs),
        (SECTOR_EMISSIONS_CSV, sectors),
        (WATER_CSV, water_table(run)),
        (LAND_CSV, land_table(run)),
    ];
    let mut files = Vec::new();
    for (file, table) in &tables {
        table.write(&out_dir.join(file))?;
        files.push(file.to_string());
    }
    let report = RunReport {
        scenario: run.config.name.clone(),
        config_hash: run.config.hash()?,
        overrides: run.config.overrides.clone(),
        changed_keys,
        files,
        summary: run.summary(),
    };
    let meta = out_dir.join(META_FILE);
    let text = toml::to_string(&report).map_err(|e| Error::InvalidInput(e.to_string()))?;
    fs::write(&meta, text).map_err(|e| Error::io(&meta, e))?;
    Ok(report)
}

/// Reads a run's metadata sidecar.
pub fn read_report(run_dir: &Path) -> Result<RunReport> {
    let path = run_dir.join(META_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    toml::from_str(&text).map_err(|e| Error::Schema {
        file: path,
        key: String::new(),
        line: None,
        message: e.message().to_string(),
    })
}

// ---------------------------------------------------------------------------------------------
// Sensitivity sweep

/// Quantity compared across sweep variants.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    #[default]
    #[serde(rename = "dac_2060")]
    Dac2060,
    #[serde(rename = "carbon_price_2060")]
    CarbonPrice2060,
    #[serde(rename = "negative_emissions_2060")]
    NegativeEmissions2060,
    #[serde(rename = "anomaly_2100")]
    Anomaly2100,
}

impl Metric {
    pub fn read(self, summary: &Summary) -> f64 {
        match self {
            Metric::Dac2060 => summary.dac_2060,
            Metric::CarbonPrice2060 => summary.carbon_price_2060,
            Metric::NegativeEmissions2060 => summary.negative_emissions_2060,
            Metric::Anomaly2100 => summary.anomaly_2100,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Dac2060 => "dac_2060",
            Metric::CarbonPrice2060 => "carbon_price_2060",
            Metric::NegativeEmissions2060 => "negative_emissions_2060",
            Metric::Anomaly2100 => "anomaly_2100",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantSpec {
    pub name: String,
    /// Scenario file expressing the variant as overrides on the base.
    pub scenario: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: PathBuf,
    #[serde(default)]
    pub metric: Metric,
    pub variants: Vec<VariantSpec>,
}

impl SweepSpec {
    /// Loads a sweep file, resolving scenario paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec: SweepSpec = toml::from_str(&text).map_err(|e| Error::Schema {
            file: path.to_path_buf(),
            key: String::new(),
            line: e
                .span()
                .map(|sp| text[..sp.start.min(text.len())].matches('\n').count() + 1),
            message: e.message().to_string(),
        })?;
        let dir = path.parent().unwrap_or(Path::new("."));
        spec.base = dir.join(&spec.base);
        for v in &mut spec.variants {
            v.scenario = dir.join(&v.scenario);
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for v in &self.variants {
            if !seen.insert(v.name.as_str()) {
                return Err(Error::invariant("sweep variant names unique", v.name.clone()));
            }
        }
        Ok(())
    }
}

/// One line of the tornado table.
#[derive(Debug, Clone, PartialEq)]
pub struct TornadoRow {
    pub variant: String,
    pub value: f64,
    pub percent_change: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub metric: Metric,
    pub base: RunReport,
    pub base_value: f64,
    /// Sorted by decreasing magnitude of change.
    pub rows: Vec<TornadoRow>,
    /// Variants that failed, with the error message.
    pub failures: Vec<(String, String)>,
}

/// Percent change of `value` relative to `base`.
pub fn percent_change(value: f64, base: f64) -> f64 {
    (value - base) / base * 100.0
}

/// Fixes each region's cap anchor so every variant faces the base scenario's caps.
pub fn pin_anchors(config: &mut ScenarioConfig, anchors: &BTreeMap<String, f64>) {
    for region in &mut config.regions {
        if let Some(a) = anchors.get(&region.name) {
            if region.cap.is_none() {
                region.cap_anchor = Some(*a);
            }
        }
    }
}

/// Keys changed relative to `base` that no declared override accounts for.
fn undeclared_changes(base: &ScenarioConfig, variant: &ScenarioConfig, changed: &[String]) -> Vec<String> {
    let declared: Vec<&str> = variant
        .overrides
        .iter()
        .skip(base.overrides.len())
        .map(|o| o.path.as_str())
        .collect();
    changed
        .iter()
        .filter(|k| !declared.iter().any(|d| path_covers(d, k)))
        .cloned()
        .collect()
}

fn run_variant(
    spec: &VariantSpec,
    base: &ScenarioConfig,
    anchors: &BTreeMap<String, f64>,
    out_dir: &Path,
) -> Result<RunReport> {
    let mut config = parse_scenario(&spec.scenario)?;
    pin_anchors(&mut config, anchors);
    let changed = base.diff(&config)?;
    let stray = undeclared_changes(base, &config, &changed);
    if !stray.is_empty() {
        return Err(Error::invariant(
            "sweep variants differ from the base only in declared overrides",
            format!("`{}` also changes {}", spec.name, stray.join(", ")),
        ));
    }
    let run = simulate(&config)?;
    write_run(&run, &out_dir.join("variants").join(&spec.name), changed)
}

/// Runs the base and every variant, each in its own directory, and writes `tornado.csv`.
///
/// Variants run concurrently on `workers` threads and share nothing but the immutable base
/// configuration. A failing variant is recorded and skipped.
pub fn run_sweep(spec: &SweepSpec, out_dir: &Path, workers: usize) -> Result<SweepOutcome> {
    let mut base = parse_scenario(&spec.base)?;
    let anchors = cap_anchors(&base).map_err(|e| e.in_scenario(&base.name))?;
    pin_anchors(&mut base, &anchors);
    let base_run = simulate(&base)?;
    let base_report = write_run(&base_run, &out_dir.join("base"), Vec::new())?;
    let base_value = spec.metric.read(&base_report.summary);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let results: Vec<(String, Result<RunReport>)> = pool.install(|| {
        spec.variants
            .par_iter()
            .map(|v| (v.name.clone(), run_variant(v, &base, &anchors, out_dir)))
            .collect()
    });

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (name, result) in results {
        match result {
            Ok(report) => {
                let value = spec.metric.read(&report.summary);
                rows.push(TornadoRow {
                    variant: name,
                    value,
                    percent_change: percent_change(value, base_value),
                });
            }
            Err(e) => failures.push((name, e.to_string())),
        }
    }
    rows.sort_by(|a, b| {
        b.percent_change
            .abs()
            .total_cmp(&a.percent_change.abs())
            .then_with(|| a.variant.cmp(&b.variant))
    });

    let mut table = Table::new(&["variant", "metric", "base_value", "value", "percent_change", "status"]);
    for r in &rows {
        table.push(vec![
            r.variant.clone(),
            spec.metric.name().into(),
            num(base_value),
            num(r.value),
            num(r.percent_change),
            "ok".into(),
        ]);
    }
    for (name, message) in &failures {
        table.push(vec![
            name.clone(),
            spec.metric.name().into(),
            num(base_value),
            String::new(),
            String::new(),
            format!("failed: {message}"),
        ]);
    }
    table.write(&out_dir.join("tornado.csv"))?;
    Ok(SweepOutcome {
        metric: spec.metric,
        base: base_report,
        base_value,
        rows,
        failures,
    })
}

// ---------------------------------------------------------------------------------------------
// Figure tables

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    reader
        .deserialize()
        .map(|r| r.map_err(|e| csv_error(path, e)))
        .collect()
}

#[derive(Debug, Clone, Deserialize)]
struct LedgerRecord {
    region: String,
    year: i32,
    net_co2: f64,
    beccs: f64,
    dac: f64,
    afforestation: f64,
    luc_co2: f64,
}

#[derive(Debug, Clone, Deserialize)]
struct ClimateRecord {
    year: i32,
    co2_ppm: f64,
    anomaly: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct PrimaryRecord {
    pub region: String,
    pub year: i32,
    pub category: String,
    pub ej: f64,
    pub dac_heat_ej: f64,
}

#[derive(Debug, Clone, Deserialize)]
struct SectorRecord {
    region: String,
    year: i32,
    sector: String,
    gross_co2: f64,
}

#[derive(Debug, Clone, Deserialize)]
struct WaterRecord {
    region: String,
    year: i32,
    food_irrigation: f64,
    bioenergy_irrigation: f64,
    municipal: f64,
    industrial_power: f64,
    dac: f64,
}

#[derive(Debug, Clone, Deserialize)]
struct LandRecord {
    region: String,
    year: i32,
    #[serde(rename = "use")]
    land_use: String,
    area_km2: f64,
}

/// A run directory read back from disk.
#[derive(Debug, Clone)]
pub struct RunBundle {
    pub report: RunReport,
    ledger: Vec<LedgerRecord>,
    climate: Vec<ClimateRecord>,
    pub primary: Vec<PrimaryRecord>,
    sectors: Vec<SectorRecord>,
    water: Vec<WaterRecord>,
    land: Vec<LandRecord>,
}

impl RunBundle {
    pub fn load(dir: &Path) -> Result<Self> {
        Ok(RunBundle {
            report: read_report(dir)?,
            ledger: read_csv(&dir.join(LEDGER_CSV))?,
            climate: read_csv(&dir.join(CLIMATE_CSV))?,
            primary: read_csv(&dir.join(PRIMARY_ENERGY_CSV))?,
            sectors: read_csv(&dir.join(SECTOR_EMISSIONS_CSV))?,
            water: read_csv(&dir.join(WATER_CSV))?,
            land: read_csv(&dir.join(LAND_CSV))?,
        })
    }

    pub fn scenario(&self) -> &str {
        &self.report.scenario
    }
}

/// Primary energy with DAC process heat moved out of gas CCS into its own category.
pub fn split_dac_heat(records: &[PrimaryRecord]) -> Vec<(String, i32, String, f64)> {
    let mut out = Vec::new();
    let mut heat: BTreeMap<(String, i32), f64> = BTreeMap::new();
    for r in records {
        out.push((r.region.clone(), r.year, r.category.clone(), r.ej - r.dac_heat_ej));
        *heat.entry((r.region.clone(), r.year)).or_insert(0.0) += r.dac_heat_ej;
    }
    for ((region, year), h) in heat {
        out.push((region, year, "dac_heat".into(), h));
    }
    out.sort_by(|a, b| (&a.0, a.1, &a.2).cmp(&(&b.0, b.1, &b.2)));
    out
}

/// Writes the plot-ready tables (climate paths, emissions portfolio, primary energy with DAC
/// heat split out, water use and land change) for the given runs.
pub fn emit_figure_data(runs: &[RunBundle], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if runs.is_empty() {
        return Err(Error::InvalidInput("no runs given for figure data".into()));
    }
    let mut names = BTreeSet::new();
    for r in runs {
        if !names.insert(r.scenario()) {
            return Err(Error::InvalidInput(format!("scenario `{}` given twice", r.scenario())));
        }
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();

    // Global net CO2, concentration and temperature, one column group per scenario.
    let mut header: Vec<String> = vec!["year".into()];
    for r in runs {
        for col in ["net_co2", "co2_ppm", "anomaly"] {
            header.push(format!("{}_{col}", r.scenario()));
        }
    }
    let years: Vec<i32> = runs[0].climate.iter().map(|c| c.year).collect();
    let path = out_dir.join("climate_paths.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
    w.write_record(&header).map_err(|e| csv_error(&path, e))?;
    for &year in &years {
        let mut row = vec![year.to_string()];
        for r in runs {
            let c = r.climate.iter().find(|c| c.year == year).ok_or_else(|| {
                Error::InvalidInput(format!("scenario `{}` has no climate row for {year}", r.scenario()))
            })?;
            let net: f64 = r.ledger.iter().filter(|l| l.year == year).map(|l| l.net_co2).sum();
            row.extend([num(net), num(c.co2_ppm), num(c.anomaly)]);
        }
        w.write_record(&row).map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    written.push(path);

    // Sector gross emissions and the removal portfolio (removals negative).
    let mut portfolio = Table::new(&["scenario", "region", "year", "component", "gtco2"]);
    for r in runs {
        for s in &r.sectors {
            portfolio.push(vec![r.scenario().into(), s.region.clone(), s.year.to_string(), s.sector.clone(), num(s.gross_co2)]);
        }
        for l in &r.ledger {
            for (component, v) in [
                ("luc", l.luc_co2),
                ("beccs_removal", -l.beccs),
                ("dac_removal", -l.dac),
                ("afforestation", -l.afforestation),
            ] {
                portfolio.push(vec![r.scenario().into(), l.region.clone(), l.year.to_string(), component.into(), num(v)]);
            }
        }
    }
    written.push(write_table(&portfolio, out_dir, "emissions_portfolio.csv")?);

    let mut split = Table::new(&["scenario", "region", "year", "category", "ej"]);
    for r in runs {
        for (region, year, category, ej) in split_dac_heat(&r.primary) {
            split.push(vec![r.scenario().into(), region, year.to_string(), category, num(ej)]);
        }
    }
    written.push(write_table(&split, out_dir, "primary_energy_split.csv")?);

    let mut water = Table::new(&["scenario", "region", "year", "use", "km3"]);
    for r in runs {
        for w in &r.water {
            for (name, v) in [
                ("food_irrigation", w.food_irrigation),
                ("bioenergy_irrigation", w.bioenergy_irrigation),
                ("municipal", w.municipal),
                ("industrial_power", w.industrial_power),
                ("dac", w.dac),
            ] {
                water.push(vec![r.scenario().into(), w.region.clone(), w.year.to_string(), name.into(), num(v)]);
            }
        }
    }
    written.push(write_table(&water, out_dir, "water_use.csv")?);

    // Land area change against each region's first year.
    let mut land_change = Table::new(&["scenario", "region", "year", "use", "change_km2"]);
    for r in runs {
        let first: BTreeMap<(&str, &str), f64> = r
            .land
            .iter()
            .filter(|l| l.year == years[0])
            .map(|l| ((l.region.as_str(), l.land_use.as_str()), l.area_km2))
            .collect();
        for l in &r.land {
            let base = first.get(&(l.region.as_str(), l.land_use.as_str())).copied().unwrap_or(l.area_km2);
            land_change.push(vec![
                r.scenario().into(),
                l.region.clone(),
                l.year.to_string(),
                l.land_use.clone(),
                num(l.area_km2 - base),
            ]);
        }
    }
    written.push(write_table(&land_change, out_dir, "land_change.csv")?);
    Ok(written)
}

fn write_table(table: &Table, dir: &Path, file: &str) -> Result<PathBuf> {
    let path = dir.join(file);
    table.write(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(category: &str, ej: f64, heat: f64) -> PrimaryRecord {
        PrimaryRecord {
            region: "china".into(),
            year: 2060,
            category: category.into(),
            ej,
            dac_heat_ej: heat,
        }
    }

    #[test]
    fn dac_heat_leaves_gas_ccs() {
        let out = split_dac_heat(&[record("coal", 30.0, 0.0), record("gas_ccs", 20.0, 8.48)]);
        let get = |c: &str| out.iter().find(|r| r.2 == c).map(|r| r.3).unwrap();
        assert_eq!(get("gas_ccs"), 20.0 - 8.48);
        assert!((get("gas_ccs") - 11.52).abs() < 1e-12);
        assert_eq!(get("dac_heat"), 8.48);
        let total: f64 = out.iter().map(|r| r.3).sum();
        assert!((total - 50.0).abs() < 1e-9);
    }

    #[test]
    fn no_dac_means_zero_heat_row() {
        let out = split_dac_heat(&[record("gas_ccs", 5.0, 0.0)]);
        assert_eq!(out.iter().find(|r| r.2 == "dac_heat").unwrap().3, 0.0);
    }

    #[test]
    fn percent_change_sign() {
        assert_eq!(percent_change(1.8, 1.0), 80.0);
        assert!((percent_change(0.6, 1.0) + 40.0).abs() < 1e-12);
    }

    #[test]
    fn negative_zero_prints_plainly() {
        assert_eq!(num(-0.0), "0");
        assert_eq!(num(0.1), "0.1");
    }
}
