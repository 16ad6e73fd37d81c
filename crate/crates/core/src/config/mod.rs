//! Scenario configuration: schema, file loading, overrides and validation.
//!
//! A scenario file may name a `base` file whose tables it extends; CSV tables referenced by
//! `technologies_csv`, `land.uses_csv` and `storage.tiers_csv` are read relative to the file
//! that mentions them and inlined. The `overrides` list is applied last, and the materialized
//! configuration is immutable from then on.

mod grid;
mod overrides;
mod policy;
mod series;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

pub use grid::TimeGrid;
pub use overrides::{apply_override, path_covers, value_diff, Override};
pub use policy::{luc_price_fraction, nt2nz_cap, CapPath, PolicyConfig, PolicyKind, PolicyLinkage};
pub use series::Series;

use crate::climate::ClimateParams;
use crate::energy::{ChoiceParams, SectorConfig};
use crate::error::{Error, Result};
use crate::land::{LandConfig, LandUse};
use crate::techno::{load_technologies_csv, DacParams, StorageSupplyCurve, Technology};

/// Fuel whose price clears against land and residue supply inside each period.
pub const BIOMASS: &str = "biomass";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiomassConfig {
    /// Agricultural and forestry residues available at any price, EJ/yr.
    pub residue_supply: Series,
    /// Price used when calibrating base-year technology shares, $/GJ.
    pub base_price: f64,
    pub price_floor: f64,
    pub price_ceiling: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaterConfig {
    /// Municipal consumption, m3 per person per year.
    pub municipal_m3_per_capita: Series,
}

/// One model region with its socioeconomic drivers, resources and energy-service sectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub name: String,
    /// Fixed base-year emissions for the cap, GtCO2/yr. When absent the anchor comes from the
    /// unpriced run of the same configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap_anchor: Option<f64>,
    /// Explicit cap points `[year, GtCO2/yr]`, replacing the linear construction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<Vec<(i32, f64)>>,
    /// Millions of people.
    pub population: Series,
    /// Billions of 2015 USD.
    pub gdp: Series,
    /// Land-use emissions not represented by the land model, GtCO2/yr.
    #[serde(default)]
    pub luc_exogenous: Series,
    /// Exogenous fuel prices, $/GJ.
    pub fuel_prices: BTreeMap<String, Series>,
    pub biomass: BiomassConfig,
    pub water: WaterConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storage: Option<StorageSupplyCurve>,
    pub land: LandConfig,
    pub sectors: Vec<SectorConfig>,
}

/// Complete, validated description of one model run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Region whose results drive summary metrics and the sweep response.
    #[serde(default = "default_focus")]
    pub focus_region: String,
    pub grid: TimeGrid,
    pub policy: PolicyConfig,
    pub dac: DacParams,
    #[serde(default)]
    pub choice: ChoiceParams,
    pub climate: ClimateParams,
    pub technologies: Vec<Technology>,
    pub regions: Vec<RegionConfig>,
    #[serde(default)]
    pub overrides: Vec<Override>,
}

fn default_focus() -> String {
    "china".to_string()
}

impl ScenarioConfig {
    pub fn region(&self, name: &str) -> Option<&RegionConfig> {
        self.regions.iter().find(|r| r.name == name)
    }

    pub fn technology(&self, name: &str) -> Option<&Technology> {
        self.technologies.iter().find(|t| t.name == name)
    }

    /// Canonical text form; parsing it back yields an identical configuration.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidInput(format!("cannot serialize config: {e}")))
    }

    pub fn to_value(&self) -> Result<Value> {
        Value::try_from(self).map_err(|e| Error::InvalidInput(format!("cannot serialize config: {e}")))
    }

    /// SHA-256 of the canonical text form, hex encoded.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }

    /// Dotted paths whose values differ from `other`, ignoring the override list itself.
    pub fn diff(&self, other: &ScenarioConfig) -> Result<Vec<String>> {
        let strip = |v: Value| match v {
            Value::Table(mut t) => {
                t.remove("overrides");
                t.remove("name");
                Value::Table(t)
            }
            other => other,
        };
        Ok(value_diff(&strip(self.to_value()?), &strip(other.to_value()?)))
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.policy.luc_linkage.validate()?;
        if self.policy.is_capped() && self.policy.base_year >= self.policy.net_zero_year {
            return Err(Error::invariant(
                "policy.base_year < policy.net_zero_year",
                format!("{} >= {}", self.policy.base_year, self.policy.net_zero_year),
            ));
        }
        if !(self.policy.price_ceiling > 0.0 && self.policy.price_ceiling.is_finite()) {
            return Err(Error::invariant(
                "policy.price_ceiling is positive and finite",
                self.policy.price_ceiling.to_string(),
            ));
        }
        self.dac.validate()?;
        self.choice.validate()?;
        self.climate.validate()?;
        let mut names = BTreeSet::new();
        for tech in &self.technologies {
            tech.validate()?;
            if !names.insert(tech.name.as_str()) {
                return Err(Error::invariant("technology names are unique", tech.name.clone()));
            }
        }
        if self.regions.is_empty() {
            return Err(Error::invariant("at least one region", "`regions` is empty"));
        }
        let mut region_names = BTreeSet::new();
        for region in &self.regions {
            if !region_names.insert(region.name.as_str()) {
                return Err(Error::invariant("region names are unique", region.name.clone()));
            }
            self.validate_region(region)?;
        }
        if self.region(&self.focus_region).is_none() {
            return Err(Error::invariant(
                "focus_region names a configured region",
                self.focus_region.clone(),
            ));
        }
        Ok(())
    }

    fn validate_region(&self, region: &RegionConfig) -> Result<()> {
        let ctx = |what: &str| format!("region `{}`: {what}", region.name);
        let mut series: Vec<(String, &Series)> = vec![
            ("population".into(), &region.population),
            ("gdp".into(), &region.gdp),
            ("biomass.residue_supply".into(), &region.biomass.residue_supply),
            ("water.municipal_m3_per_capita".into(), &region.water.municipal_m3_per_capita),
            ("land.food_demand".into(), &region.land.food_demand),
        ];
        for (fuel, s) in &region.fuel_prices {
            series.push((format!("fuel_prices.{fuel}"), s));
        }
        for (label, s) in &series {
            if !s.covers(&self.grid) {
                return Err(Error::invariant(
                    "socioeconomic and price series cover the full grid",
                    ctx(label),
                ));
            }
            if !s.is_strictly_increasing() {
                return Err(Error::invariant("series years strictly increasing", ctx(label)));
            }
            if s.values().any(|v| !v.is_finite() || v < 0.0) {
                return Err(Error::invariant("series values finite and non-negative", ctx(label)));
            }
        }
        if region.population.values().chain(region.gdp.values()).any(|v| v <= 0.0) {
            return Err(Error::invariant("population and GDP > 0", ctx("population/gdp")));
        }
        let b = &region.biomass;
        if !(b.price_floor > 0.0 && b.price_floor < b.price_ceiling && b.base_price > 0.0) {
            return Err(Error::invariant(
                "0 < biomass.price_floor < biomass.price_ceiling",
                ctx(&format!("{} .. {}", b.price_floor, b.price_ceiling)),
            ));
        }
        region.land.validate().map_err(|e| match e {
            Error::Invariant { invariant, detail } => Error::Invariant {
                invariant,
                detail: ctx(&detail),
            },
            other => other,
        })?;
        if self.policy.is_capped() {
            match &region.storage {
                Some(curve) => curve.validate()?,
                None => {
                    return Err(Error::invariant(
                        "every region with a cap has a storage curve",
                        ctx("no [storage] table"),
                    ))
                }
            }
        } else if let Some(curve) = &region.storage {
            curve.validate()?;
        }
        if let Some(points) = &region.cap {
            let cap = CapPath::from_points(points.iter().copied());
            if self.policy.kind == PolicyKind::Nt2nz {
                cap.validate_nt2nz(self.policy.net_zero_year).map_err(|e| match e {
                    Error::Invariant { invariant, detail } => Error::Invariant {
                        invariant,
                        detail: ctx(&detail),
                    },
                    other => other,
                })?;
            }
        }
        if let Some(anchor) = region.cap_anchor {
            if !(anchor >= 0.0 && anchor.is_finite()) {
                return Err(Error::invariant("cap_anchor >= 0", ctx(&anchor.to_string())));
            }
        }
        self.validate_sectors(region)
    }

    fn validate_sectors(&self, region: &RegionConfig) -> Result<()> {
        let ctx = |what: String| format!("region `{}`: {what}", region.name);
        let mut available: BTreeSet<String> = region.fuel_prices.keys().cloned().collect();
        available.insert(BIOMASS.to_string());
        let produced: BTreeSet<&str> = region
            .sectors
            .iter()
            .filter_map(|s| s.output.as_deref())
            .collect();
        let mut sector_names = BTreeSet::new();
        for sector in &region.sectors {
            if !sector_names.insert(sector.name.as_str()) {
                return Err(Error::invariant("sector names are unique", ctx(sector.name.clone())));
            }
            sector.validate().map_err(|e| match e {
                Error::Invariant { invariant, detail } => Error::Invariant {
                    invariant,
                    detail: ctx(detail),
                },
                other => other,
            })?;
            let members: Vec<&Technology> = self
                .technologies
                .iter()
                .filter(|t| t.sector == sector.name)
                .collect();
            if members.is_empty() {
                return Err(Error::invariant(
                    "every sector has at least one technology",
                    ctx(sector.name.clone()),
                ));
            }
            for tech_name in sector.base_shares.keys().chain(sector.new_tech_weights.keys()) {
                match self.technology(tech_name) {
                    Some(t) if t.sector == sector.name => {}
                    Some(t) => {
                        return Err(Error::invariant(
                            "every technology referenced by a sector exists",
                            ctx(format!(
                                "`{tech_name}` serves `{}`, not `{}`",
                                t.sector, sector.name
                            )),
                        ))
                    }
                    None => {
                        return Err(Error::invariant(
                            "every technology referenced by a sector exists",
                            ctx(format!("sector `{}` names unknown `{tech_name}`", sector.name)),
                        ))
                    }
                }
            }
            if sector.output.is_some() {
                // Supply sectors may draw only on fuels priced before them.
                for tech in &members {
                    for input in &tech.inputs {
                        if !available.contains(&input.fuel) {
                            return Err(Error::invariant(
                                "supply sectors draw only on fuels priced before them",
                                ctx(format!("`{}` uses `{}`", tech.name, input.fuel)),
                            ));
                        }
                    }
                }
                available.insert(sector.output.clone().unwrap_or_default());
            }
        }
        for sector in region.sectors.iter().filter(|s| s.output.is_none()) {
            for tech in self.technologies.iter().filter(|t| t.sector == sector.name) {
                for input in &tech.inputs {
                    if !available.contains(&input.fuel) && !produced.contains(input.fuel.as_str()) {
                        return Err(Error::invariant(
                            "every fuel input has a price",
                            ctx(format!("`{}` uses unpriced `{}`", tech.name, input.fuel)),
                        ));
                    }
                }
            }
        }
        if let Some(tech) = self
            .technologies
            .iter()
            .find(|t| !sector_names.contains(t.sector.as_str()))
        {
            return Err(Error::invariant(
                "every technology serves a configured sector",
                ctx(format!("`{}` serves `{}`", tech.name, tech.sector)),
            ));
        }
        Ok(())
    }
}

/// Loads, merges, overrides and validates a scenario file.
pub fn parse_scenario(path: &Path) -> Result<ScenarioConfig> {
    parse_scenario_with(path, &[])
}

/// As [`parse_scenario`], applying `extra` after the file's own overrides and recording them.
pub fn parse_scenario_with(path: &Path, extra: &[Override]) -> Result<ScenarioConfig> {
    let mut sources = Vec::new();
    let mut table = load_table(path, &mut sources, 0)?;
    if !extra.is_empty() {
        let list = table
            .entry("overrides")
            .or_insert_with(|| Value::Array(Vec::new()));
        if let Value::Array(items) = list {
            for ov in extra {
                items.push(Value::try_from(ov).map_err(|e| Error::InvalidInput(e.to_string()))?);
            }
        }
    }
    let declared: Vec<Override> = match table.get("overrides") {
        Some(v) => from_value(v.clone(), path, &sources, "overrides.")?,
        None => Vec::new(),
    };
    for ov in &declared {
        apply_override(&mut table, ov).map_err(|e| match e {
            Error::Schema { key, message, .. } => Error::Schema {
                file: path.to_path_buf(),
                line: find_line(&sources, &key),
                key,
                message,
            },
            other => other,
        })?;
    }
    let config: ScenarioConfig = from_value(Value::Table(table), path, &sources, "")?;
    config.validate()?;
    Ok(config)
}

/// Parses configuration text with no `base` include or CSV references.
pub fn parse_scenario_str(text: &str) -> Result<ScenarioConfig> {
    let origin = PathBuf::from("<string>");
    let mut table: Table = toml::from_str(text).map_err(|e| syntax_error(&origin, text, e))?;
    let sources = vec![(origin.clone(), text.to_string())];
    let declared: Vec<Override> = match table.get("overrides") {
        Some(v) => from_value(v.clone(), &origin, &sources, "overrides.")?,
        None => Vec::new(),
    };
    for ov in &declared {
        apply_override(&mut table, ov)?;
    }
    let config: ScenarioConfig = from_value(Value::Table(table), &origin, &sources, "")?;
    config.validate()?;
    Ok(config)
}

const MAX_INCLUDE_DEPTH: usize = 8;

fn load_table(path: &Path, sources: &mut Vec<(PathBuf, String)>, depth: usize) -> Result<Table> {
    if depth > MAX_INCLUDE_DEPTH {
        return Err(Error::InvalidInput(format!(
            "`base` includes nested deeper than {MAX_INCLUDE_DEPTH} at {}",
            path.display()
        )));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut table: Table = toml::from_str(&text).map_err(|e| syntax_error(path, &text, e))?;
    sources.push((path.to_path_buf(), text));
    let dir = path.parent().unwrap_or(Path::new("."));
    inline_csv(&mut table, dir, path)?;
    match table.remove("base") {
        Some(Value::String(base)) => {
            let mut merged = load_table(&dir.join(base), sources, depth + 1)?;
            merge(&mut merged, table);
            Ok(merged)
        }
        Some(_) => Err(Error::Schema {
            file: path.to_path_buf(),
            key: "base".into(),
            line: find_line(sources, "base"),
            message: "expected a file path string".into(),
        }),
        None => Ok(table),
    }
}

/// Deep merge: tables merge key by key, `overrides` lists concatenate, anything else replaces.
fn merge(base: &mut Table, top: Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (Some(Value::Array(b)), Value::Array(t)) if key == "overrides" => b.extend(t),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn to_toml_value<T: Serialize>(value: &T) -> Result<Value> {
    Value::try_from(value).map_err(|e| Error::InvalidInput(e.to_string()))
}

fn take_path(table: &mut Table, key: &str, file: &Path) -> Result<Option<PathBuf>> {
    match table.remove(key) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(PathBuf::from(s))),
        Some(_) => Err(Error::Schema {
            file: file.to_path_buf(),
            key: key.to_string(),
            line: None,
            message: "expected a CSV file path string".into(),
        }),
    }
}

fn inline_csv(table: &mut Table, dir: &Path, file: &Path) -> Result<()> {
    if let Some(rel) = take_path(table, "technologies_csv", file)? {
        let techs = load_technologies_csv(&dir.join(rel))?;
        table.insert("technologies".into(), to_toml_value(&techs)?);
    }
    if let Some(Value::Array(regions)) = table.get_mut("regions") {
        for region in regions.iter_mut() {
            let Value::Table(region) = region else { continue };
            if let Some(Value::Table(land)) = region.get_mut("land") {
                if let Some(rel) = take_path(land, "uses_csv", file)? {
                    let uses = LandUse::load_csv(&dir.join(rel))?;
                    land.insert("uses".into(), to_toml_value(&uses)?);
                }
            }
            if let Some(Value::Table(storage)) = region.get_mut("storage") {
                if let Some(rel) = take_path(storage, "tiers_csv", file)? {
                    let tiers = StorageSupplyCurve::load_csv(&dir.join(rel))?;
                    storage.insert("tiers".into(), to_toml_value(&tiers)?);
                }
            }
        }
    }
    Ok(())
}

fn syntax_error(path: &Path, text: &str, e: toml::de::Error) -> Error {
    let line = e
        .span()
        .map(|span| text[..span.start.min(text.len())].matches('\n').count() + 1);
    Error::Schema {
        file: path.to_path_buf(),
        key: String::new(),
        line,
        message: e.message().to_string(),
    }
}

/// Line of the first assignment or table header naming the last segment of `key`.
fn find_line(sources: &[(PathBuf, String)], key: &str) -> Option<usize> {
    let leaf = key
        .rsplit('.')
        .find(|s| !s.is_empty() && s.parse::<usize>().is_err() && *s != "?")?;
    let leaf = leaf.split('[').next().unwrap_or(leaf);
    sources.iter().rev().find_map(|(_, text)| {
        text.lines().position(|line| {
            let l = line.trim_start();
            let header = l.trim_start_matches('[').trim_end_matches(']');
            l.split('=').next().map(str::trim) == Some(leaf) || header.ends_with(leaf) && l.starts_with('[')
        })
        .map(|i| i + 1)
    })
}

fn from_value<T: serde::de::DeserializeOwned>(
    value: Value,
    file: &Path,
    sources: &[(PathBuf, String)],
    prefix: &str,
) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|err| {
        let mut key = format!("{prefix}{}", err.path());
        let message = err.inner().to_string();
        // A missing field is reported at its parent; name the field itself.
        if let Some(field) = message
            .strip_prefix("missing field `")
            .and_then(|rest| rest.split('`').next())
        {
            key = if key.is_empty() || key == "." {
                field.to_string()
            } else {
                format!("{key}.{field}")
            };
        }
        let key = key.trim_start_matches('.').to_string();
        Error::Schema {
            file: file.to_path_buf(),
            line: find_line(sources, &key),
            key,
            message,
        }
    })
}
