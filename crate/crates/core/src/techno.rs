//! Technology cost and resource coefficients, DAC parameter trajectories and geologic
//! storage supply curves.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Energy carrier consumed by a technology, GJ per unit of output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuelInput {
    pub fuel: String,
    pub gj_per_unit: f64,
}

/// One technology competing to serve a sector.
///
/// Outputs are measured in GJ of delivered service; costs are 2015 USD per GJ output.
/// A negative `emission_factor` marks a removal technology (BECCS): the factor is then the
/// net removal per unit and `capture_fraction` is the share of it routed to geologic storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Technology {
    pub name: String,
    pub sector: String,
    pub nonenergy_cost: f64,
    /// tCO2 per GJ output, before capture.
    pub emission_factor: f64,
    pub capture_fraction: f64,
    /// m3 of water consumed per GJ output.
    pub water_m3: f64,
    pub lifetime: f64,
    pub available_from: i32,
    pub inputs: Vec<FuelInput>,
}

impl Technology {
    pub fn validate(&self) -> Result<()> {
        let fail = |inv: &'static str, detail: String| Err(Error::invariant(inv, detail));
        if !(0.0..=1.0).contains(&self.capture_fraction) {
            return fail(
                "technology capture fraction in [0, 1]",
                format!("{}: {}", self.name, self.capture_fraction),
            );
        }
        if self.lifetime <= 0.0 {
            return fail(
                "technology lifetime > 0",
                format!("{}: {}", self.name, self.lifetime),
            );
        }
        if let Some(input) = self.inputs.iter().find(|i| i.gj_per_unit < 0.0) {
            return fail(
                "technology fuel inputs >= 0",
                format!("{}: {} = {}", self.name, input.fuel, input.gj_per_unit),
            );
        }
        Ok(())
    }

    pub fn is_removal(&self) -> bool {
        self.emission_factor < 0.0
    }

    /// CO2 released to the atmosphere per unit output (zero for removal technologies).
    pub fn net_emission_factor(&self) -> f64 {
        if self.is_removal() {
            0.0
        } else {
            self.emission_factor * (1.0 - self.capture_fraction)
        }
    }

    /// CO2 removed from the atmosphere per unit output (zero for emitting technologies).
    pub fn removal_factor(&self) -> f64 {
        if self.is_removal() {
            -self.emission_factor
        } else {
            0.0
        }
    }

    /// CO2 sent to geologic storage per unit output.
    pub fn captured_factor(&self) -> f64 {
        self.emission_factor.abs() * self.capture_fraction
    }

    /// Carbon-price term per unit output: positive for emitters, a credit for removals.
    pub fn carbon_factor(&self) -> f64 {
        if self.is_removal() {
            self.emission_factor
        } else {
            self.net_emission_factor()
        }
    }

    pub fn uses_ccs(&self) -> bool {
        self.capture_fraction > 0.0
    }

    pub fn input(&self, fuel: &str) -> f64 {
        self.inputs
            .iter()
            .filter(|i| i.fuel == fuel)
            .map(|i| i.gj_per_unit)
            .sum()
    }
}

/// Levelized cost of one technology, $/GJ output.
///
/// Sum of fuel costs, non-energy cost, carbon price on the net emission factor (a credit for
/// removal technologies) and storage cost on captured CO2.
pub fn tech_levelized_cost(
    tech: &Technology,
    fuel_prices: &BTreeMap<String, f64>,
    carbon_price: f64,
    storage_cost: f64,
) -> Result<f64> {
    let mut cost = tech.nonenergy_cost;
    for input in &tech.inputs {
        let price = fuel_prices
            .get(&input.fuel)
            .ok_or_else(|| Error::MissingFuelPrice(input.fuel.clone()))?;
        cost += input.gj_per_unit * price;
    }
    cost += tech.carbon_factor() * carbon_price;
    cost += tech.captured_factor() * storage_cost;
    Ok(cost)
}

/// Direct air capture coefficients at their 2020 and 2050 anchor years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DacParams {
    #[serde(default = "default_true")]
    pub enabled: bool,
    /// Natural gas process heat, GJ/tCO2.
    pub gas_2020: f64,
    pub gas_2050: f64,
    /// Electricity, GJ/tCO2.
    pub elec_2020: f64,
    pub elec_2050: f64,
    /// Capital plus non-energy O&M, 2015 $/tCO2.
    pub nonenergy_2020: f64,
    pub nonenergy_2050: f64,
    /// Evaporative water loss, m3/tCO2.
    pub water: f64,
    /// Plant lifetime, years.
    #[serde(default = "default_dac_lifetime")]
    pub lifetime: f64,
    /// Share of the process-heat combustion CO2 that is captured and stored.
    #[serde(default = "default_one")]
    pub heat_capture_fraction: f64,
    /// tCO2 per GJ of natural gas burned for process heat.
    #[serde(default = "default_gas_ef")]
    pub heat_emission_factor: f64,
    /// New removal capacity built per $/tCO2 of carbon price above the levelized cost, Gt/yr.
    #[serde(default = "default_supply_slope")]
    pub supply_slope: f64,
    #[serde(default = "default_dac_available")]
    pub available_from: i32,
}

fn default_true() -> bool {
    true
}
fn default_one() -> f64 {
    1.0
}
fn default_dac_lifetime() -> f64 {
    40.0
}
fn default_gas_ef() -> f64 {
    0.0561
}
fn default_supply_slope() -> f64 {
    0.02
}
fn default_dac_available() -> i32 {
    2025
}

/// Coefficients for one year of DAC operation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DacCoefficients {
    pub gas: f64,
    pub elec: f64,
    pub nonenergy: f64,
}

impl DacParams {
    pub fn low_cost() -> Self {
        DacParams {
            enabled: true,
            gas_2020: 8.1,
            gas_2050: 5.3,
            elec_2020: 1.8,
            elec_2050: 1.3,
            nonenergy_2020: 300.0,
            nonenergy_2050: 180.0,
            water: 4.7,
            lifetime: 40.0,
            heat_capture_fraction: 1.0,
            heat_emission_factor: default_gas_ef(),
            supply_slope: default_supply_slope(),
            available_from: default_dac_available(),
        }
    }

    pub fn high_cost() -> Self {
        DacParams {
            gas_2050: 8.1,
            elec_2050: 1.8,
            nonenergy_2050: 300.0,
            ..Self::low_cost()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let coeffs = [
            ("gas_2020", self.gas_2020),
            ("gas_2050", self.gas_2050),
            ("elec_2020", self.elec_2020),
            ("elec_2050", self.elec_2050),
            ("nonenergy_2020", self.nonenergy_2020),
            ("nonenergy_2050", self.nonenergy_2050),
            ("water", self.water),
            ("lifetime", self.lifetime),
        ];
        if let Some((name, v)) = coeffs.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invariant(
                "DAC coefficients > 0",
                format!("dac.{name} = {v}"),
            ));
        }
        if !(0.0..=1.0).contains(&self.heat_capture_fraction) {
            return Err(Error::invariant(
                "DAC heat capture fraction in [0, 1]",
                self.heat_capture_fraction.to_string(),
            ));
        }
        if self.supply_slope < 0.0 {
            return Err(Error::invariant(
                "DAC supply slope >= 0",
                self.supply_slope.to_string(),
            ));
        }
        Ok(())
    }
}

const DAC_ANCHOR_START: i32 = 2020;
const DAC_ANCHOR_END: i32 = 2050;

/// DAC energy and non-energy coefficients in `year`: linear between the 2020 and 2050
/// anchors, constant afterwards.
pub fn dac_params_at(dac: &DacParams, year: i32) -> Result<DacCoefficients> {
    if year < DAC_ANCHOR_START {
        return Err(Error::InvalidInput(format!(
            "DAC parameters are defined from {DAC_ANCHOR_START}, requested {year}"
        )));
    }
    let t = f64::from(year.min(DAC_ANCHOR_END) - DAC_ANCHOR_START)
        / f64::from(DAC_ANCHOR_END - DAC_ANCHOR_START);
    let lerp = |a: f64, b: f64| if t >= 1.0 { b } else { a + t * (b - a) };
    Ok(DacCoefficients {
        gas: lerp(dac.gas_2020, dac.gas_2050),
        elec: lerp(dac.elec_2020, dac.elec_2050),
        nonenergy: lerp(dac.nonenergy_2020, dac.nonenergy_2050),
    })
}

/// All-in cost of removing one tonne of CO2 with DAC, $/tCO2.
pub fn dac_levelized_cost(
    dac: &DacParams,
    year: i32,
    gas_price: f64,
    elec_price: f64,
    storage_cost: f64,
) -> Result<f64> {
    if gas_price < 0.0 || elec_price < 0.0 || storage_cost < 0.0 {
        return Err(Error::InvalidInput(format!(
            "DAC prices must be non-negative (gas {gas_price}, elec {elec_price}, storage {storage_cost})"
        )));
    }
    let c = dac_params_at(dac, year)?;
    Ok(c.nonenergy + c.gas * gas_price + c.elec * elec_price + storage_cost)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageTier {
    /// Cumulative capacity at the top of this tier, GtCO2.
    pub capacity: f64,
    /// Marginal injection cost within the tier, $/tCO2.
    pub cost: f64,
}

/// Graded geologic storage: cheaper reservoirs are filled first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageSupplyCurve {
    #[serde(default = "default_one")]
    pub cost_scale: f64,
    #[serde(default = "default_one")]
    pub capacity_scale: f64,
    /// Cumulative CO2 already injected before the first model period, GtCO2.
    #[serde(default)]
    pub injected: f64,
    pub tiers: Vec<StorageTier>,
}

impl StorageSupplyCurve {
    pub fn new(tiers: Vec<StorageTier>) -> Result<Self> {
        let curve = StorageSupplyCurve {
            cost_scale: 1.0,
            capacity_scale: 1.0,
            injected: 0.0,
            tiers,
        };
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tiers.is_empty() {
            return Err(Error::invariant(
                "storage curve has at least one tier",
                "no tiers",
            ));
        }
        if self.cost_scale <= 0.0 || self.capacity_scale <= 0.0 {
            return Err(Error::invariant(
                "storage scale factors > 0",
                format!("cost {} capacity {}", self.cost_scale, self.capacity_scale),
            ));
        }
        for w in self.tiers.windows(2) {
            if w[1].cost <= w[0].cost {
                return Err(Error::invariant(
                    "storage tier costs strictly increasing",
                    format!("{} then {}", w[0].cost, w[1].cost),
                ));
            }
            if w[1].capacity <= w[0].capacity {
                return Err(Error::invariant(
                    "storage tier capacities strictly increasing",
                    format!("{} then {}", w[0].capacity, w[1].capacity),
                ));
            }
        }
        if self.tiers[0].capacity <= 0.0 || self.tiers[0].cost < 0.0 {
            return Err(Error::invariant(
                "storage tiers have positive capacity and non-negative cost",
                format!("{:?}", self.tiers[0]),
            ));
        }
        if self.injected > self.total_capacity() {
            return Err(Error::invariant(
                "cumulative injection <= storage capacity",
                format!("{} > {}", self.injected, self.total_capacity()),
            ));
        }
        Ok(())
    }

    pub fn total_capacity(&self) -> f64 {
        self.tiers.last().map_or(0.0, |t| t.capacity) * self.capacity_scale
    }

    pub fn load_csv(path: &Path) -> Result<Vec<StorageTier>> {
        #[derive(Deserialize)]
        struct Row {
            capacity_gt: f64,
            cost_usd_per_t: f64,
        }
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        reader
            .deserialize::<Row>()
            .map(|row| {
                let row = row.map_err(|e| csv_error(path, e))?;
                Ok(StorageTier {
                    capacity: row.capacity_gt,
                    cost: row.cost_usd_per_t,
                })
            })
            .collect()
    }
}

/// Marginal storage cost once `cumulative` GtCO2 has been injected. A step function over the
/// tiers, left-continuous at tier boundaries.
pub fn storage_marginal_cost(curve: &StorageSupplyCurve, cumulative: f64) -> Result<f64> {
    if cumulative < 0.0 || cumulative.is_nan() {
        return Err(Error::InvalidInput(format!(
            "cumulative storage must be non-negative, got {cumulative}"
        )));
    }
    curve
        .tiers
        .iter()
        .find(|tier| cumulative <= tier.capacity * curve.capacity_scale)
        .map(|tier| tier.cost * curve.cost_scale)
        .ok_or(Error::StorageExhausted {
            cumulative,
            capacity: curve.total_capacity(),
        })
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Reads the technology table. Rows sharing a name describe additional fuel inputs of the same
/// technology and must agree on every other column.
pub fn load_technologies_csv(path: &Path) -> Result<Vec<Technology>> {
    #[derive(Deserialize)]
    #[allow(non_snake_case)]
    struct Row {
        name: String,
        sector: String,
        fuel: String,
        GJ_per_unit: f64,
        nonenergy_usd: f64,
        emission_factor: f64,
        capture_fraction: f64,
        water_m3: f64,
        lifetime_yr: f64,
        available_from: i32,
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut techs: Vec<Technology> = Vec::new();
    for (line, row) in reader.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let input = FuelInput {
            fuel: row.fuel,
            gj_per_unit: row.GJ_per_unit,
        };
        if let Some(existing) = techs.iter_mut().find(|t| t.name == row.name) {
            let same = existing.sector == row.sector
                && existing.nonenergy_cost == row.nonenergy_usd
                && existing.emission_factor == row.emission_factor
                && existing.capture_fraction == row.capture_fraction
                && existing.water_m3 == row.water_m3
                && existing.lifetime == row.lifetime_yr
                && existing.available_from == row.available_from;
            if !same {
                return Err(Error::Csv {
                    path: path.to_path_buf(),
                    message: format!(
                        "row {}: technology `{}` repeated with different attributes",
                        line + 2,
                        row.name
                    ),
                });
            }
            existing.inputs.push(input);
        } else {
            techs.push(Technology {
                name: row.name,
                sector: row.sector,
                nonenergy_cost: row.nonenergy_usd,
                emission_factor: row.emission_factor,
                capture_fraction: row.capture_fraction,
                water_m3: row.water_m3,
                lifetime: row.lifetime_yr,
                available_from: row.available_from,
                inputs: vec![input],
            });
        }
    }
    Ok(techs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_tier() -> StorageSupplyCurve {
        StorageSupplyCurve::new(vec![
            StorageTier {
                capacity: 100.0,
                cost: 10.0,
            },
            StorageTier {
                capacity: 300.0,
                cost: 40.0,
            },
        ])
        .unwrap()
    }

    /// Independent lookup: scan tiers from the top down and keep the lowest tier whose
    /// capacity still covers the cumulative amount.
    fn brute_force_cost(tiers: &[(f64, f64)], cumulative: f64) -> Option<f64> {
        let mut best = None;
        for &(cap, cost) in tiers.iter().rev() {
            if cumulative <= cap {
                best = Some(cost);
            }
        }
        best
    }

    #[test]
    fn dac_interpolation_examples() {
        let low = DacParams::low_cost();
        assert_eq!(dac_params_at(&low, 2020).unwrap().gas, 8.1);
        assert!((dac_params_at(&low, 2035).unwrap().gas - 6.7).abs() < 1e-12);
        assert_eq!(dac_params_at(&low, 2050).unwrap().gas, 5.3);
        assert_eq!(dac_params_at(&low, 2070).unwrap().gas, 5.3);
        assert_eq!(dac_params_at(&low, 2070).unwrap().nonenergy, 180.0);
        assert!(dac_params_at(&low, 2019).is_err());
    }

    #[test]
    fn high_cost_dac_is_constant() {
        let high = DacParams::high_cost();
        for year in (2020..=2100).step_by(5) {
            let c = dac_params_at(&high, year).unwrap();
            assert_eq!((c.gas, c.elec, c.nonenergy), (8.1, 1.8, 300.0));
        }
    }

    #[test]
    fn dac_cost_examples() {
        // 180 + 5.3*3 + 1.3*15 + 10
        let low = dac_levelized_cost(&DacParams::low_cost(), 2050, 3.0, 15.0, 10.0).unwrap();
        assert!((low - 225.4).abs() < 1e-9);
        // 300 + 8.1*3 + 1.8*15 + 10
        let high = dac_levelized_cost(&DacParams::high_cost(), 2050, 3.0, 15.0, 10.0).unwrap();
        assert!((high - 361.3).abs() < 1e-9);
        let bare = dac_levelized_cost(&DacParams::low_cost(), 2050, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(bare, 180.0);
        assert!(dac_levelized_cost(&DacParams::low_cost(), 2050, -1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn storage_examples() {
        let curve = two_tier();
        assert_eq!(storage_marginal_cost(&curve, 0.0).unwrap(), 10.0);
        assert_eq!(storage_marginal_cost(&curve, 100.0).unwrap(), 10.0);
        let tiers = [(100.0, 10.0), (300.0, 40.0)];
        assert_eq!(
            storage_marginal_cost(&curve, 150.0).unwrap(),
            brute_force_cost(&tiers, 150.0).unwrap()
        );
        assert_eq!(storage_marginal_cost(&curve, 150.0).unwrap(), 40.0);
        assert!(matches!(
            storage_marginal_cost(&curve, 301.0),
            Err(Error::StorageExhausted { .. })
        ));
    }

    #[test]
    fn storage_rejects_unsorted_tiers() {
        let bad = StorageSupplyCurve::new(vec![
            StorageTier {
                capacity: 100.0,
                cost: 40.0,
            },
            StorageTier {
                capacity: 300.0,
                cost: 10.0,
            },
        ]);
        assert!(bad.is_err());
    }

    fn tech(ef: f64, capture: f64, nonenergy: f64) -> Technology {
        Technology {
            name: "t".into(),
            sector: "s".into(),
            nonenergy_cost: nonenergy,
            emission_factor: ef,
            capture_fraction: capture,
            water_m3: 0.0,
            lifetime: 20.0,
            available_from: 1900,
            inputs: vec![],
        }
    }

    #[test]
    fn tech_cost_examples() {
        let prices = BTreeMap::new();
        assert_eq!(
            tech_levelized_cost(&tech(0.0, 0.0, 50.0), &prices, 0.0, 0.0).unwrap(),
            50.0
        );
        let emitter = tech(0.8, 0.0, 50.0);
        assert!((tech_levelized_cost(&emitter, &prices, 100.0, 0.0).unwrap() - 130.0).abs() < 1e-12);
        let beccs = tech(-1.0, 1.0, 50.0);
        assert!((tech_levelized_cost(&beccs, &prices, 100.0, 10.0).unwrap() - (50.0 - 90.0)).abs() < 1e-12);
    }

    #[test]
    fn tech_cost_requires_fuel_prices() {
        let mut t = tech(0.1, 0.0, 1.0);
        t.inputs.push(FuelInput {
            fuel: "coal".into(),
            gj_per_unit: 2.0,
        });
        let err = tech_levelized_cost(&t, &BTreeMap::new(), 0.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::MissingFuelPrice(f) if f == "coal"));
        let prices = BTreeMap::from([("coal".to_string(), 3.0)]);
        assert_eq!(tech_levelized_cost(&t, &prices, 0.0, 0.0).unwrap(), 7.0);
    }

    proptest! {
        #[test]
        fn dac_cost_strictly_increasing_in_prices(year in 2020i32..2100, g in 0.0f64..50.0, e in 0.0f64..80.0,
                                                   s in 0.0f64..200.0, d in 0.01f64..10.0) {
            let low = DacParams::low_cost();
            let base = dac_levelized_cost(&low, year, g, e, s).unwrap();
            prop_assert!(dac_levelized_cost(&low, year, g + d, e, s).unwrap() > base);
            prop_assert!(dac_levelized_cost(&low, year, g, e + d, s).unwrap() > base);
            prop_assert!(dac_levelized_cost(&low, year, g, e, s + d).unwrap() > base);
        }

        #[test]
        fn dac_params_piecewise_linear(year in 2020i32..2049) {
            let low = DacParams::low_cost();
            let a = dac_params_at(&low, year).unwrap().gas;
            let b = dac_params_at(&low, year + 1).unwrap().gas;
            prop_assert!(((a - b) - 2.8 / 30.0).abs() < 1e-12);
        }

        #[test]
        fn storage_cost_is_monotone(a in 0.0f64..300.0, b in 0.0f64..300.0, scale in 0.5f64..4.0) {
            let mut curve = two_tier();
            curve.capacity_scale = scale;
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            if let (Ok(x), Ok(y)) = (storage_marginal_cost(&curve, lo), storage_marginal_cost(&curve, hi)) {
                prop_assert!(y >= x);
            }
            let tiers: Vec<(f64, f64)> = curve.tiers.iter().map(|t| (t.capacity * scale, t.cost)).collect();
            prop_assert_eq!(storage_marginal_cost(&curve, lo).ok(), brute_force_cost(&tiers, lo));
        }
    }
}
