//! Rent-based land allocation, afforestation sinks, bioenergy supply and the water ledger.
//!
//! Land in each region is one logit nest over food crops, bioenergy crops, forest, grassland and
//! other land. A fixed fraction of the base-year grassland and other land is protected and never
//! enters the competition. Food cropland rent adjusts until the allocated area meets food demand.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Series;
use crate::error::{Error, Result};
use crate::techno::csv_error;

pub const FOOD: &str = "food_crops";
pub const BIOENERGY: &str = "bioenergy";
pub const FOREST: &str = "forest";
pub const GRASSLAND: &str = "grassland";
pub const OTHER: &str = "other";

/// Land uses in reporting order.
pub const LAND_USES: [&str; 5] = [FOOD, BIOENERGY, FOREST, GRASSLAND, OTHER];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandUse {
    pub name: String,
    /// km².
    pub base_area: f64,
    /// $/km²/yr.
    pub base_rent: f64,
    /// Carbon uptake of standing forest, tCO2/km²/yr.
    #[serde(default)]
    pub uptake: f64,
    /// Bioenergy yield, GJ/km²/yr.
    #[serde(default, rename = "yield")]
    pub yield_gj: f64,
    /// Irrigation water, m3/km²/yr.
    #[serde(default)]
    pub irrigation: f64,
}

impl LandUse {
    pub fn load_csv(path: &Path) -> Result<Vec<LandUse>> {
        #[derive(Deserialize)]
        struct Row {
            #[serde(rename = "use")]
            name: String,
            base_area_km2: f64,
            base_rent: f64,
            uptake: f64,
            #[serde(rename = "yield")]
            yield_gj: f64,
            irrigation_m3_per_km2: f64,
        }
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        reader
            .deserialize::<Row>()
            .map(|row| {
                let r = row.map_err(|e| csv_error(path, e))?;
                Ok(LandUse {
                    name: r.name,
                    base_area: r.base_area_km2,
                    base_rent: r.base_rent,
                    uptake: r.uptake,
                    yield_gj: r.yield_gj,
                    irrigation: r.irrigation_m3_per_km2,
                })
            })
            .collect()
    }
}

fn default_protection() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandConfig {
    /// km².
    pub total_area: f64,
    /// Share of base grassland and other land withheld from competition.
    #[serde(default = "default_protection")]
    pub protection_fraction: f64,
    pub logit_exponent: f64,
    /// Food cropland demanded at base rent, as a multiple of the base food area.
    pub food_demand: Series,
    /// Elasticity of food cropland demand with respect to its rent (positive number).
    pub food_rent_elasticity: f64,
    /// Carbon released when forest is cleared, tCO2/km².
    pub forest_carbon_stock: f64,
    /// Non-land cost of growing bioenergy crops, $/GJ.
    pub bio_nonland_cost: f64,
    pub uses: Vec<LandUse>,
}

impl LandConfig {
    pub fn validate(&self) -> Result<()> {
        for name in LAND_USES {
            if self.uses.iter().filter(|u| u.name == name).count() != 1 {
                return Err(Error::invariant(
                    "land uses are food_crops, bioenergy, forest, grassland and other, once each",
                    format!("`{name}`"),
                ));
            }
        }
        if let Some(u) = self.uses.iter().find(|u| !LAND_USES.contains(&u.name.as_str())) {
            return Err(Error::invariant(
                "land uses are food_crops, bioenergy, forest, grassland and other, once each",
                format!("unexpected `{}`", u.name),
            ));
        }
        let sum: f64 = self.uses.iter().map(|u| u.base_area).sum();
        if (sum - self.total_area).abs() > 1e-6 * self.total_area.max(1.0) {
            return Err(Error::invariant(
                "land base areas sum to total",
                format!("{sum} vs {}", self.total_area),
            ));
        }
        if !(0.0..=1.0).contains(&self.protection_fraction) {
            return Err(Error::invariant(
                "protection fraction in [0, 1]",
                self.protection_fraction.to_string(),
            ));
        }
        if !(self.logit_exponent > 0.0) || self.food_rent_elasticity < 0.0 {
            return Err(Error::invariant(
                "land logit exponent > 0 and food rent elasticity >= 0",
                format!("{} / {}", self.logit_exponent, self.food_rent_elasticity),
            ));
        }
        if let Some(u) = self
            .uses
            .iter()
            .find(|u| u.base_area <= 0.0 || u.base_rent <= 0.0 || u.uptake < 0.0 || u.yield_gj < 0.0 || u.irrigation < 0.0)
        {
            return Err(Error::invariant(
                "land base areas and rents > 0, coefficients >= 0",
                format!("`{}`", u.name),
            ));
        }
        Ok(())
    }

    pub fn use_named(&self, name: &str) -> Option<&LandUse> {
        self.uses.iter().find(|u| u.name == name)
    }
}

/// Splits `available` land by rent logit: `area_i ∝ a_i r_i^g`. Uses with non-positive rent
/// receive nothing.
pub fn land_allocate(rents: &[f64], weights: &[f64], gamma: f64, available: f64) -> Result<Vec<f64>> {
    if rents.len() != weights.len() || !(available > 0.0) || !(gamma > 0.0) {
        return Err(Error::InvalidInput(format!(
            "land allocation needs matching rents/weights, positive area and exponent (area {available}, exponent {gamma})"
        )));
    }
    let logs: Vec<f64> = rents
        .iter()
        .zip(weights)
        .map(|(&r, &w)| {
            if r > 0.0 && w > 0.0 {
                w.ln() + gamma * r.ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::InvalidInput("all land rents are non-positive".into()));
    }
    let terms: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = terms.iter().sum();
    Ok(terms.iter().map(|t| available * t / total).collect())
}

/// Forest rent including the carbon subsidy on its uptake, $/km²/yr.
pub fn forest_rent(carbon_price: f64, luc_fraction: f64, uptake: f64, base_rent: f64) -> f64 {
    base_rent + carbon_price * luc_fraction * uptake
}

/// Removal by forest planted since the base year, GtCO2/yr. Forest loss gives no removal; its
/// emissions are booked as land-use change by the caller.
pub fn afforestation_sink(forest_area_delta: f64, uptake: f64) -> f64 {
    forest_area_delta.max(0.0) * uptake * 1e-9
}

/// Consumptive water use by category, km³/yr.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct WaterLedger {
    pub food_irrigation: f64,
    pub bioenergy_irrigation: f64,
    pub municipal: f64,
    pub industrial_power: f64,
    pub dac: f64,
}

impl WaterLedger {
    pub fn total(&self) -> f64 {
        self.food_irrigation + self.bioenergy_irrigation + self.municipal + self.industrial_power + self.dac
    }
}

/// Activity levels that consume water.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WaterActivities {
    /// km².
    pub food_area: f64,
    pub bioenergy_area: f64,
    /// Millions of people.
    pub population: f64,
    /// Water already weighted by technology coefficients, i.e. Σ EJ × m3/GJ.
    pub energy_water: f64,
    /// DAC removal, GtCO2/yr.
    pub dac_removal: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaterCoefficients {
    /// m3/km²/yr.
    pub food_irrigation: f64,
    pub bioenergy_irrigation: f64,
    /// m3/person/yr.
    pub municipal_per_capita: f64,
    /// m3/tCO2.
    pub dac: f64,
}

pub fn water_account(act: &WaterActivities, coef: &WaterCoefficients) -> Result<WaterLedger> {
    let values = [
        act.food_area,
        act.bioenergy_area,
        act.population,
        act.energy_water,
        act.dac_removal,
    ];
    if values.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidInput(format!("negative water activity in {values:?}")));
    }
    Ok(WaterLedger {
        food_irrigation: act.food_area * coef.food_irrigation * 1e-9,
        bioenergy_irrigation: act.bioenergy_area * coef.bioenergy_irrigation * 1e-9,
        municipal: act.population * 1e6 * coef.municipal_per_capita * 1e-9,
        // EJ × m3/GJ = 1e9 m3 = 1 km³.
        industrial_power: act.energy_water,
        // Gt × m3/t = 1e9 m3 = 1 km³.
        dac: act.dac_removal * coef.dac,
    })
}

/// Land allocation in one period.
#[derive(Debug, Clone, PartialEq)]
pub struct LandOutcome {
    /// km² by use in [`LAND_USES`] order, protected land included.
    pub areas: [f64; 5],
    pub rents: [f64; 5],
    /// Food cropland rent relative to its base value.
    pub crop_price_index: f64,
    /// Residues plus dedicated crops, EJ/yr.
    pub bio_supply: f64,
}

/// Calibrated land nest of one region.
#[derive(Debug, Clone)]
pub struct LandModel {
    pub config: LandConfig,
    uses: [LandUse; 5],
    weights: Vec<f64>,
    protected: [f64; 5],
    available: f64,
}

const RENT_FLOOR: f64 = 1.0;

impl LandModel {
    /// Weights reproduce the unprotected base-year areas at base rents.
    pub fn build(config: &LandConfig) -> Result<Self> {
        config.validate()?;
        let uses = LAND_USES.map(|n| config.use_named(n).cloned().unwrap_or_else(|| unreachable!()));
        let mut protected = [0.0; 5];
        for i in [3, 4] {
            protected[i] = config.protection_fraction * uses[i].base_area;
        }
        let unprotected: Vec<f64> = (0..5).map(|i| uses[i].base_area - protected[i]).collect();
        let available: f64 = unprotected.iter().sum();
        let raw: Vec<f64> = (0..5)
            .map(|i| unprotected[i] / uses[i].base_rent.powf(config.logit_exponent))
            .collect();
        let total: f64 = raw.iter().sum();
        Ok(LandModel {
            config: config.clone(),
            uses,
            weights: raw.iter().map(|w| w / total).collect(),
            protected,
            available,
        })
    }

    pub fn available(&self) -> f64 {
        self.available
    }

    pub fn use_params(&self, i: usize) -> &LandUse {
        &self.uses[i]
    }

    pub fn base_area(&self, i: usize) -> f64 {
        self.uses[i].base_area
    }

    /// Allocates land given the carbon price seen by land, the biomass price and residue supply.
    pub fn allocate(
        &self,
        year: i32,
        carbon_price: f64,
        luc_fraction: f64,
        biomass_price: f64,
        residues: f64,
    ) -> Result<LandOutcome> {
        let cfg = &self.config;
        let gamma = cfg.logit_exponent;
        let bio = &self.uses[1];
        let mut rents = [
            self.uses[0].base_rent,
            ((biomass_price - cfg.bio_nonland_cost) * bio.yield_gj).max(RENT_FLOOR),
            forest_rent(carbon_price, luc_fraction, self.uses[2].uptake, self.uses[2].base_rent),
            self.uses[3].base_rent,
            self.uses[4].base_rent,
        ];
        let r0 = self.uses[0].base_rent;
        let demand = self.uses[0].base_area * cfg.food_demand.at(year);
        let eta = cfg.food_rent_elasticity;
        // Food area from the logit rises with its rent while demand falls; bisect on ln r.
        let others: f64 = (1..5)
            .map(|i| self.weights[i] * rents[i].powf(gamma))
            .sum();
        let excess = |ln_r: f64| {
            let x = self.weights[0] * (gamma * ln_r).exp();
            self.available * x / (x + others) - demand * ((ln_r - r0.ln()) * -eta).exp()
        };
        let (mut lo, mut hi) = (r0.ln() - 30.0, r0.ln() + 30.0);
        if excess(hi) < 0.0 {
            return Err(Error::InvalidInput(format!(
                "food cropland demand {demand:.0} km² cannot be met from {:.0} km² in {year}",
                self.available
            )));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if excess(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo < 1e-13 {
                break;
            }
        }
        rents[0] = (0.5 * (lo + hi)).exp();
        let alloc = land_allocate(&rents, &self.weights, gamma, self.available)?;
        let mut areas = [0.0; 5];
        for i in 0..5 {
            areas[i] = alloc[i] + self.protected[i];
        }
        Ok(LandOutcome {
            areas,
            rents,
            crop_price_index: rents[0] / r0,
            bio_supply: residues + alloc[1] * bio.yield_gj * 1e-9,
        })
    }
}
