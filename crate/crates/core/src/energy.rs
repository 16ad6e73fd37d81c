//! Service demand, logit technology competition and vintage stock turnover.
//!
//! Each sector is one logit nest. Only new capacity competes; surviving vintages keep operating
//! with the technology they were built with until retirement. Supply sectors (electricity,
//! hydrogen) price their output at the share-weighted cost of new capacity and serve the demand
//! derived from the sectors downstream of them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::techno::Technology;

/// Logit settings shared by every nest unless a sector overrides them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChoiceParams {
    #[serde(default = "default_gamma")]
    pub logit_exponent: f64,
    /// Costs are clamped up to this value before entering the logit, $/GJ.
    #[serde(default = "default_cost_floor")]
    pub cost_floor: f64,
}

fn default_gamma() -> f64 {
    3.0
}
fn default_cost_floor() -> f64 {
    1.0
}

impl Default for ChoiceParams {
    fn default() -> Self {
        ChoiceParams {
            logit_exponent: default_gamma(),
            cost_floor: default_cost_floor(),
        }
    }
}

impl ChoiceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.logit_exponent > 0.0 && self.logit_exponent.is_finite()) {
            return Err(Error::invariant(
                "logit exponent positive and finite",
                self.logit_exponent.to_string(),
            ));
        }
        if !(self.cost_floor > 0.0) {
            return Err(Error::invariant("choice.cost_floor > 0", self.cost_floor.to_string()));
        }
        Ok(())
    }
}

/// One energy-service sector as written in the scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectorConfig {
    pub name: String,
    /// Fuel produced by a supply sector; end-use sectors leave this unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    /// Base-year service demand, EJ/yr (end-use sectors only).
    #[serde(default)]
    pub base_demand: f64,
    #[serde(default)]
    pub income_elasticity: f64,
    #[serde(default)]
    pub price_elasticity: f64,
    /// Autonomous demand reduction, fraction per year.
    #[serde(default)]
    pub efficiency_improvement: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logit_exponent: Option<f64>,
    /// Base-year output shares by technology; they sum to 1.
    pub base_shares: BTreeMap<String, f64>,
    /// Notional base-year shares for technologies without base output, used only to set
    /// their logit weights.
    #[serde(default)]
    pub new_tech_weights: BTreeMap<String, f64>,
}

impl SectorConfig {
    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.base_shares.values().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::invariant(
                "sector base shares sum to 1",
                format!("`{}` sums to {total}", self.name),
            ));
        }
        if self
            .base_shares
            .values()
            .chain(self.new_tech_weights.values())
            .any(|s| *s < 0.0 || !s.is_finite())
        {
            return Err(Error::invariant(
                "share weights >= 0",
                format!("sector `{}`", self.name),
            ));
        }
        if self.output.is_none() && !(self.base_demand >= 0.0 && self.base_demand.is_finite()) {
            return Err(Error::invariant(
                "demand >= 0",
                format!("`{}` base demand {}", self.name, self.base_demand),
            ));
        }
        if !(0.0..1.0).contains(&self.efficiency_improvement) {
            return Err(Error::invariant(
                "efficiency improvement in [0, 1)",
                format!("`{}`", self.name),
            ));
        }
        if let Some(g) = self.logit_exponent {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::invariant(
                    "logit exponent positive and finite",
                    format!("`{}`: {g}", self.name),
                ));
            }
        }
        Ok(())
    }
}

/// Logit shares `s_i = a_i c_i^-g / sum_j a_j c_j^-g`.
///
/// Options with zero weight get a zero share whatever their cost.
pub fn logit_shares(costs: &[f64], weights: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if costs.len() != weights.len() {
        return Err(Error::InvalidInput(format!(
            "{} costs for {} weights",
            costs.len(),
            weights.len()
        )));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidInput(format!("logit exponent {gamma}")));
    }
    let mut logs = Vec::with_capacity(costs.len());
    for (&c, &w) in costs.iter().zip(weights) {
        if w < 0.0 || !w.is_finite() {
            return Err(Error::InvalidInput(format!("share weight {w}")));
        }
        if w == 0.0 {
            logs.push(f64::NEG_INFINITY);
            continue;
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-positive cost {c} for an option with weight {w}"
            )));
        }
        logs.push(w.ln() - gamma * c.ln());
    }
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::InvalidInput("no option has a positive weight".into()));
    }
    let terms: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = terms.iter().sum();
    Ok(terms.into_iter().map(|t| t / total).collect())
}

/// Weights that make [`logit_shares`] reproduce `shares` at `costs`, normalized to sum 1.
pub fn calibrate_weights(costs: &[f64], shares: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let raw: Vec<f64> = costs
        .iter()
        .zip(shares)
        .map(|(&c, &s)| {
            if s > 0.0 && !(c > 0.0) {
                Err(Error::InvalidInput(format!(
                    "cannot calibrate a positive share against cost {c}"
                )))
            } else {
                Ok(s * c.max(0.0).powf(gamma))
            }
        })
        .collect::<Result<_>>()?;
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidInput("calibration shares are all zero".into()));
    }
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Demand parameters of one end-use sector.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorDemand {
    pub sector: String,
    /// Service demand in the calibration year, EJ/yr.
    pub base_demand: f64,
    pub income_elasticity: f64,
    pub price_elasticity: f64,
}

/// Population, income and service price at one point in time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemandDrivers {
    pub population: f64,
    pub gdp_per_capita: f64,
    pub price: f64,
}

/// Base demand scaled by population, per-capita income and service price relative to the
/// calibration year.
pub fn service_demand(sector: &SectorDemand, base: &DemandDrivers, now: &DemandDrivers) -> Result<f64> {
    let all = [
        base.population,
        base.gdp_per_capita,
        base.price,
        now.population,
        now.gdp_per_capita,
        now.price,
    ];
    if all.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidInput(format!(
            "demand drivers for `{}` must be positive: {all:?}",
            sector.sector
        )));
    }
    Ok(sector.base_demand
        * (now.population / base.population)
        * (now.gdp_per_capita / base.gdp_per_capita).powf(sector.income_elasticity)
        * (now.price / base.price).powf(sector.price_elasticity))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vintage {
    pub build_year: i32,
    /// Output capacity, EJ/yr (GtCO2/yr for DAC).
    pub capacity: f64,
}

/// Capacity of one technology by build year.
#[derive(Debug, Clone, PartialEq)]
pub struct VintageStock {
    pub lifetime: f64,
    pub vintages: Vec<Vintage>,
}

impl VintageStock {
    pub fn new(lifetime: f64) -> Self {
        VintageStock {
            lifetime,
            vintages: Vec::new(),
        }
    }

    /// Spreads `output` evenly over past vintages so that one slice retires every `step`
    /// years after `base_year`.
    pub fn seeded(lifetime: f64, output: f64, base_year: i32, step: i32) -> Self {
        let mut stock = VintageStock::new(lifetime);
        if output > 0.0 {
            let n = (lifetime / f64::from(step)).ceil().max(1.0) as i32;
            for k in (0..n).rev() {
                stock.add(base_year - step * k, output / f64::from(n));
            }
        }
        stock
    }

    pub fn add(&mut self, build_year: i32, capacity: f64) {
        if capacity > 0.0 {
            self.vintages.push(Vintage {
                build_year,
                capacity,
            });
        }
    }

    pub fn total(&self) -> f64 {
        self.vintages.iter().map(|v| v.capacity).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.vintages.is_empty()
    }
}

/// Drops vintages whose age in `year` has reached their lifetime; keeps the rest unchanged.
pub fn retire_and_roll(stock: &VintageStock, year: i32) -> VintageStock {
    VintageStock {
        lifetime: stock.lifetime,
        vintages: stock
            .vintages
            .iter()
            .filter(|v| f64::from(year - v.build_year) < stock.lifetime)
            .copied()
            .collect(),
    }
}

/// A technology with its fuel inputs resolved to fuel indices.
#[derive(Debug, Clone)]
pub struct TechModel {
    pub name: String,
    pub sector: usize,
    pub inputs: Vec<(usize, f64)>,
    pub nonenergy_cost: f64,
    pub carbon_factor: f64,
    pub net_emission_factor: f64,
    pub removal_factor: f64,
    pub captured_factor: f64,
    pub water_m3: f64,
    pub lifetime: f64,
    pub available_from: i32,
    pub uses_ccs: bool,
}

impl TechModel {
    /// Levelized cost of new capacity at the given prices, $/GJ output.
    pub fn cost(&self, prices: &[f64], carbon_price: f64, storage_cost: f64) -> f64 {
        self.nonenergy_cost
            + self.inputs.iter().map(|&(f, gj)| gj * prices[f]).sum::<f64>()
            + self.carbon_factor * carbon_price
            + self.captured_factor * storage_cost
    }
}

#[derive(Debug, Clone)]
pub struct SectorModel {
    pub name: String,
    /// Fuel index produced by a supply sector.
    pub output: Option<usize>,
    pub techs: Vec<usize>,
    pub weights: Vec<f64>,
    pub gamma: f64,
    pub demand: Option<SectorDemand>,
    pub efficiency_improvement: f64,
    /// Share-weighted new-capacity cost in the calibration year.
    pub base_price: f64,
    pub base_output: f64,
}

/// New-capacity costs, shares and composite price of one sector.
#[derive(Debug, Clone, PartialEq)]
pub struct Pricing {
    pub costs: Vec<f64>,
    pub shares: Vec<f64>,
    pub composite: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectorOutcome {
    pub demand: f64,
    /// Output by technology (sector-local order), EJ/yr.
    pub activity: Vec<f64>,
    pub new_activity: Vec<f64>,
    pub gross_co2: f64,
    pub removal: f64,
    pub captured: f64,
    pub water_m3: f64,
}

/// Activity of every sector in one period plus total fuel consumption.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodDispatch {
    pub sectors: Vec<SectorOutcome>,
    /// Fuel consumed by all sectors, EJ/yr by fuel index.
    pub fuel_use: Vec<f64>,
}

impl PeriodDispatch {
    pub fn gross_co2(&self) -> f64 {
        self.sectors.iter().map(|s| s.gross_co2).sum()
    }

    pub fn removal(&self) -> f64 {
        self.sectors.iter().map(|s| s.removal).sum()
    }

    pub fn captured(&self) -> f64 {
        self.sectors.iter().map(|s| s.captured).sum()
    }
}

/// Splits `demand` between surviving capacity and new capacity allocated by `shares`.
///
/// Survivors run first; when they exceed demand they are all turned down in proportion.
pub fn allocate(demand: f64, survivors: &[f64], shares: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let existing: f64 = survivors.iter().sum();
    if existing >= demand {
        let scale = if existing > 0.0 { demand / existing } else { 0.0 };
        let activity = survivors.iter().map(|s| s * scale).collect();
        (activity, vec![0.0; survivors.len()])
    } else {
        let gap = demand - existing;
        let new: Vec<f64> = shares.iter().map(|s| s * gap).collect();
        let activity = survivors.iter().zip(&new).map(|(s, n)| s + n).collect();
        (activity, new)
    }
}

/// Compiled technology and sector structure of one region.
#[derive(Debug, Clone)]
pub struct EnergySystem {
    pub fuels: Vec<String>,
    pub techs: Vec<TechModel>,
    pub sectors: Vec<SectorModel>,
    pub cost_floor: f64,
}

impl EnergySystem {
    /// Resolves fuels, compiles technologies and calibrates logit weights so that new capacity
    /// in the base year reproduces the configured shares.
    ///
    /// `base_prices` holds a price for every exogenous fuel and biomass; produced fuels are
    /// priced here in sector order.
    pub fn build(
        sectors: &[SectorConfig],
        technologies: &[Technology],
        choice: &ChoiceParams,
        base_prices: &BTreeMap<String, f64>,
    ) -> Result<Self> {
        let mut fuels: Vec<String> = base_prices.keys().cloned().collect();
        for s in sectors {
            if let Some(out) = &s.output {
                if !fuels.contains(out) {
                    fuels.push(out.clone());
                }
            }
        }
        let fuel_index = |name: &str| -> Result<usize> {
            fuels
                .iter()
                .position(|f| f == name)
                .ok_or_else(|| Error::MissingFuelPrice(name.to_string()))
        };
        let mut techs = Vec::new();
        let mut models = Vec::new();
        for (si, s) in sectors.iter().enumerate() {
            let mut members = Vec::new();
            for t in technologies.iter().filter(|t| t.sector == s.name) {
                let inputs = t
                    .inputs
                    .iter()
                    .map(|i| Ok((fuel_index(&i.fuel)?, i.gj_per_unit)))
                    .collect::<Result<Vec<_>>>()?;
                members.push(techs.len());
                techs.push(TechModel {
                    name: t.name.clone(),
                    sector: si,
                    inputs,
                    nonenergy_cost: t.nonenergy_cost,
                    carbon_factor: t.carbon_factor(),
                    net_emission_factor: t.net_emission_factor(),
                    removal_factor: t.removal_factor(),
                    captured_factor: t.captured_factor(),
                    water_m3: t.water_m3,
                    lifetime: t.lifetime,
                    available_from: t.available_from,
                    uses_ccs: t.uses_ccs(),
                });
            }
            let demand = s.output.is_none().then(|| SectorDemand {
                sector: s.name.clone(),
                base_demand: s.base_demand,
                income_elasticity: s.income_elasticity,
                price_elasticity: s.price_elasticity,
            });
            models.push(SectorModel {
                name: s.name.clone(),
                output: s.output.as_deref().map(fuel_index).transpose()?,
                techs: members,
                weights: Vec::new(),
                gamma: s.logit_exponent.unwrap_or(choice.logit_exponent),
                demand,
                efficiency_improvement: s.efficiency_improvement,
                base_price: 0.0,
                base_output: s.base_demand,
            });
        }
        let mut system = EnergySystem {
            fuels,
            techs,
            sectors: models,
            cost_floor: choice.cost_floor,
        };
        let mut prices = vec![0.0; system.fuels.len()];
        for (name, p) in base_prices {
            prices[system.fuel(name).ok_or_else(|| Error::MissingFuelPrice(name.clone()))?] = *p;
        }
        // Supply sectors first so that end uses see calibrated electricity and hydrogen prices.
        let order: Vec<usize> = system
            .supply_order()
            .into_iter()
            .chain(system.end_uses())
            .collect();
        for si in order {
            let cfg = &sectors[si];
            let model = &system.sectors[si];
            let costs: Vec<f64> = model
                .techs
                .iter()
                .map(|&ti| system.techs[ti].cost(&prices, 0.0, 0.0).max(system.cost_floor))
                .collect();
            let pseudo: Vec<f64> = model
                .techs
                .iter()
                .map(|&ti| {
                    let name = &system.techs[ti].name;
                    cfg.base_shares
                        .get(name)
                        .or_else(|| cfg.new_tech_weights.get(name))
                        .copied()
                        .unwrap_or(0.0)
                })
                .collect();
            let weights = calibrate_weights(&costs, &pseudo, model.gamma).map_err(|e| {
                Error::InvalidInput(format!("calibrating sector `{}`: {e}", cfg.name))
            })?;
            let base_shares: Vec<f64> = model
                .techs
                .iter()
                .map(|&ti| cfg.base_shares.get(&system.techs[ti].name).copied().unwrap_or(0.0))
                .collect();
            let composite: f64 = base_shares.iter().zip(&costs).map(|(s, c)| s * c).sum();
            let model = &mut system.sectors[si];
            model.weights = weights;
            model.base_price = composite;
            if let Some(out) = model.output {
                prices[out] = composite;
            }
        }
        Ok(system)
    }

    pub fn fuel(&self, name: &str) -> Option<usize> {
        self.fuels.iter().position(|f| f == name)
    }

    pub fn sector(&self, name: &str) -> Option<usize> {
        self.sectors.iter().position(|s| s.name == name)
    }

    /// Supply sectors in configuration order (upstream first).
    pub fn supply_order(&self) -> Vec<usize> {
        (0..self.sectors.len())
            .filter(|&i| self.sectors[i].output.is_some())
            .collect()
    }

    pub fn end_uses(&self) -> Vec<usize> {
        (0..self.sectors.len())
            .filter(|&i| self.sectors[i].output.is_none())
            .collect()
    }

    /// New-capacity costs and logit shares of one sector. Technologies not yet available get
    /// zero weight.
    pub fn price_sector(
        &self,
        si: usize,
        year: i32,
        prices: &[f64],
        carbon_price: f64,
        storage_cost: f64,
    ) -> Result<Pricing> {
        let sector = &self.sectors[si];
        let costs: Vec<f64> = sector
            .techs
            .iter()
            .map(|&ti| self.techs[ti].cost(prices, carbon_price, storage_cost).max(self.cost_floor))
            .collect();
        let weights: Vec<f64> = sector
            .techs
            .iter()
            .zip(&sector.weights)
            .map(|(&ti, &w)| if self.techs[ti].available_from <= year { w } else { 0.0 })
            .collect();
        let shares = logit_shares(&costs, &weights, sector.gamma).map_err(|_| {
            Error::NoFeasibleTechnology {
                sector: sector.name.clone(),
                year,
            }
        })?;
        let composite = shares.iter().zip(&costs).map(|(s, c)| s * c).sum();
        Ok(Pricing {
            costs,
            shares,
            composite,
        })
    }

    /// Prices every sector, writing produced fuel prices into `prices` in supply order.
    pub fn price_all(
        &self,
        year: i32,
        prices: &mut [f64],
        carbon_price: f64,
        storage_cost: f64,
    ) -> Result<Vec<Pricing>> {
        let mut out: Vec<Option<Pricing>> = vec![None; self.sectors.len()];
        for si in self.supply_order() {
            let p = self.price_sector(si, year, prices, carbon_price, storage_cost)?;
            if let Some(f) = self.sectors[si].output {
                prices[f] = p.composite;
            }
            out[si] = Some(p);
        }
        for si in self.end_uses() {
            out[si] = Some(self.price_sector(si, year, prices, carbon_price, storage_cost)?);
        }
        Ok(out.into_iter().map(|p| p.unwrap_or_else(|| unreachable!())).collect())
    }

    /// Runs every sector for one period.
    ///
    /// `demands` gives end-use service demand by sector index (ignored for supply sectors);
    /// `survivors` gives surviving capacity per technology; `extra_demand` adds consumption of
    /// produced fuels from outside the sectors (DAC electricity).
    pub fn dispatch_period(
        &self,
        pricing: &[Pricing],
        demands: &[f64],
        survivors: &[f64],
        extra_demand: &[f64],
    ) -> Result<PeriodDispatch> {
        let mut fuel_use = vec![0.0; self.fuels.len()];
        let mut outcomes: Vec<Option<SectorOutcome>> = vec![None; self.sectors.len()];
        let order: Vec<usize> = self
            .end_uses()
            .into_iter()
            .chain(self.supply_order().into_iter().rev())
            .collect();
        for si in order {
            let sector = &self.sectors[si];
            let demand = match sector.output {
                Some(f) => fuel_use[f] + extra_demand[f],
                None => demands[si],
            };
            if !(demand >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "negative demand {demand} in sector `{}`",
                    sector.name
                )));
            }
            let surv: Vec<f64> = sector.techs.iter().map(|&ti| survivors[ti]).collect();
            let (activity, new_activity) = allocate(demand, &surv, &pricing[si].shares);
            let mut outcome = SectorOutcome {
                demand,
                activity: Vec::with_capacity(activity.len()),
                new_activity,
                gross_co2: 0.0,
                removal: 0.0,
                captured: 0.0,
                water_m3: 0.0,
            };
            for (&ti, &a) in sector.techs.iter().zip(&activity) {
                let tech = &self.techs[ti];
                for &(f, gj) in &tech.inputs {
                    fuel_use[f] += a * gj;
                }
                outcome.gross_co2 += a * tech.net_emission_factor;
                outcome.removal += a * tech.removal_factor;
                outcome.captured += a * tech.captured_factor;
                outcome.water_m3 += a * tech.water_m3;
            }
            outcome.activity = activity;
            outcomes[si] = Some(outcome);
        }
        Ok(PeriodDispatch {
            sectors: outcomes.into_iter().map(|o| o.unwrap_or_else(|| unreachable!())).collect(),
            fuel_use,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::techno::{tech_levelized_cost, FuelInput};
    use proptest::prelude::*;

    /// Direct evaluation of the share formula without the log-space shift.
    fn naive_shares(costs: &[f64], weights: &[f64], gamma: f64) -> Vec<f64> {
        let terms: Vec<f64> = costs
            .iter()
            .zip(weights)
            .map(|(c, w)| w * c.powf(-gamma))
            .collect();
        let total: f64 = terms.iter().sum();
        terms.iter().map(|t| t / total).collect()
    }

    #[test]
    fn logit_examples() {
        assert_eq!(logit_shares(&[10.0, 10.0], &[1.0, 1.0], 3.0).unwrap(), vec![0.5, 0.5]);
        assert_eq!(logit_shares(&[42.0], &[0.3], 3.0).unwrap(), vec![1.0]);
        let s = logit_shares(&[100.0, 200.0], &[1.0, 1.0], 3.0).unwrap();
        let oracle = naive_shares(&[100.0, 200.0], &[1.0, 1.0], 3.0);
        assert!((s[0] - 8.0 / 9.0).abs() < 1e-12 && (s[1] - 1.0 / 9.0).abs() < 1e-12);
        assert!((s[0] - oracle[0]).abs() < 1e-12);
    }

    #[test]
    fn logit_rejects_bad_costs() {
        assert!(logit_shares(&[0.0, 1.0], &[1.0, 1.0], 3.0).is_err());
        assert!(logit_shares(&[1.0, 1.0], &[0.0, 0.0], 3.0).is_err());
        // A non-positive cost is harmless when its option carries no weight.
        assert_eq!(logit_shares(&[-5.0, 2.0], &[0.0, 1.0], 3.0).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn calibrated_weights_reproduce_shares() {
        let costs = [12.0, 30.0, 18.0];
        let shares = [0.7, 0.1, 0.2];
        let w = calibrate_weights(&costs, &shares, 3.0).unwrap();
        let back = logit_shares(&costs, &w, 3.0).unwrap();
        for (a, b) in back.iter().zip(shares) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn demand_examples() {
        let sector = SectorDemand {
            sector: "freight".into(),
            base_demand: 10.0,
            income_elasticity: 0.0,
            price_elasticity: -0.3,
        };
        let base = DemandDrivers {
            population: 1.0,
            gdp_per_capita: 1.0,
            price: 1.0,
        };
        assert_eq!(service_demand(&sector, &base, &base).unwrap(), 10.0);
        let pricier = DemandDrivers { price: 2.0, ..base };
        let d = service_demand(&sector, &base, &pricier).unwrap();
        assert!((d - 10.0 * 2f64.powf(-0.3)).abs() < 1e-12);
        assert!((d / 10.0 - 0.8123).abs() < 1e-4);
        let rich = SectorDemand {
            income_elasticity: 1.0,
            price_elasticity: 0.0,
            ..sector
        };
        let richer = DemandDrivers {
            gdp_per_capita: 1.5,
            ..base
        };
        assert!((service_demand(&rich, &base, &richer).unwrap() - 15.0).abs() < 1e-12);
    }

    #[test]
    fn retirement_examples() {
        let mut stock = VintageStock::new(40.0);
        stock.add(2030, 1.0);
        assert!(retire_and_roll(&stock, 2070).is_empty());
        assert_eq!(retire_and_roll(&stock, 2065), stock);
        assert!(retire_and_roll(&VintageStock::new(40.0), 2050).is_empty());
    }

    #[test]
    fn seeded_stock_retires_one_slice_per_step() {
        let stock = VintageStock::seeded(20.0, 8.0, 2015, 5);
        assert_eq!(stock.vintages.len(), 4);
        assert!((stock.total() - 8.0).abs() < 1e-12);
        assert!((retire_and_roll(&stock, 2020).total() - 6.0).abs() < 1e-12);
        assert!(retire_and_roll(&stock, 2035).is_empty());
    }

    fn tech(name: &str, sector: &str, fuel: &str, gj: f64, nonenergy: f64, ef: f64) -> Technology {
        Technology {
            name: name.into(),
            sector: sector.into(),
            nonenergy_cost: nonenergy,
            emission_factor: ef,
            capture_fraction: 0.0,
            water_m3: 0.0,
            lifetime: 20.0,
            available_from: 1900,
            inputs: vec![FuelInput {
                fuel: fuel.into(),
                gj_per_unit: gj,
            }],
        }
    }

    fn toy_system() -> (EnergySystem, Vec<Technology>) {
        let techs = vec![
            tech("coal_boiler", "heat", "coal", 1.0, 2.0, 0.1),
            tech("gas_boiler", "heat", "gas", 1.0, 2.0, 0.05),
        ];
        let sector = SectorConfig {
            name: "heat".into(),
            output: None,
            base_demand: 10.0,
            income_elasticity: 0.0,
            price_elasticity: 0.0,
            efficiency_improvement: 0.0,
            logit_exponent: None,
            base_shares: BTreeMap::from([("coal_boiler".into(), 0.5), ("gas_boiler".into(), 0.5)]),
            new_tech_weights: BTreeMap::new(),
        };
        let prices = BTreeMap::from([("coal".to_string(), 3.0), ("gas".to_string(), 8.0)]);
        let system = EnergySystem::build(&[sector], &techs, &ChoiceParams::default(), &prices).unwrap();
        (system, techs)
    }

    #[test]
    fn compiled_cost_matches_levelized_cost() {
        let (system, techs) = toy_system();
        let prices = BTreeMap::from([("coal".to_string(), 3.0), ("gas".to_string(), 8.0)]);
        let vec_prices: Vec<f64> = system.fuels.iter().map(|f| prices[f]).collect();
        for (model, tech) in system.techs.iter().zip(&techs) {
            let a = model.cost(&vec_prices, 75.0, 12.0);
            let b = tech_levelized_cost(tech, &prices, 75.0, 12.0).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dispatch_null_and_split_cases() {
        let (system, _) = toy_system();
        let mut prices = vec![3.0, 8.0];
        let pricing = system.price_all(2020, &mut prices, 50.0, 0.0).unwrap();
        let zero = system.dispatch_period(&pricing, &[0.0], &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(zero.fuel_use, vec![0.0, 0.0]);
        assert_eq!(zero.gross_co2(), 0.0);
        let out = system.dispatch_period(&pricing, &[10.0], &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        // Composition oracle: shares from the formula at the priced costs, times demand.
        let costs = [2.0 + 3.0 + 0.1 * 50.0, 2.0 + 8.0 + 0.05 * 50.0];
        let shares = naive_shares(&costs, &system.sectors[0].weights, 3.0);
        for (a, s) in out.sectors[0].activity.iter().zip(&shares) {
            assert!((a - 10.0 * s).abs() < 1e-12);
        }
        let emissions = 10.0 * (shares[0] * 0.1 + shares[1] * 0.05);
        assert!((out.gross_co2() - emissions).abs() < 1e-12);
    }

    #[test]
    fn survivors_run_before_new_capacity() {
        let (act, new) = allocate(10.0, &[4.0, 2.0], &[0.25, 0.75]);
        assert_eq!(new, vec![1.0, 3.0]);
        assert_eq!(act, vec![5.0, 5.0]);
        let (act, new) = allocate(3.0, &[4.0, 2.0], &[0.25, 0.75]);
        assert_eq!(new, vec![0.0, 0.0]);
        assert_eq!(act, vec![2.0, 1.0]);
    }

    proptest! {
        #[test]
        fn shares_sum_to_one(costs in proptest::collection::vec(0.01f64..1e4, 1..8), gamma in 0.1f64..8.0,
                             seed in proptest::collection::vec(0.0f64..5.0, 8)) {
            let mut weights: Vec<f64> = seed[..costs.len()].to_vec();
            weights[0] += 0.1;
            let s = logit_shares(&costs, &weights, gamma).unwrap();
            prop_assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(s.iter().all(|x| (0.0..=1.0).contains(x)));
        }

        #[test]
        fn shares_invariant_under_common_cost_scaling(costs in proptest::collection::vec(0.1f64..1e3, 1..6),
                                                       k in 0.01f64..100.0, gamma in 0.5f64..6.0) {
            let weights = vec![1.0; costs.len()];
            let scaled: Vec<f64> = costs.iter().map(|c| c * k).collect();
            let a = logit_shares(&costs, &weights, gamma).unwrap();
            let b = logit_shares(&scaled, &weights, gamma).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn dispatch_conserves_fuel(d in 0.0f64..100.0, s0 in 0.0f64..50.0, s1 in 0.0f64..50.0, p in 0.0f64..500.0) {
            let (system, _) = toy_system();
            let mut prices = vec![3.0, 8.0];
            let pricing = system.price_all(2020, &mut prices, p, 0.0).unwrap();
            let out = system.dispatch_period(&pricing, &[d], &[s0, s1], &[0.0, 0.0]).unwrap();
            let served: f64 = out.sectors[0].activity.iter().sum();
            prop_assert!((served - d).abs() < 1e-9 * d.max(1.0));
            prop_assert!((out.fuel_use.iter().sum::<f64>() - served).abs() < 1e-9);
            prop_assert!(out.gross_co2() >= 0.0);
        }
    }
}
