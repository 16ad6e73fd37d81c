//! Per-period carbon-price equilibrium and the recursive-dynamic run.
//!
//! For a trial carbon price each region prices its supply sectors, sizes DAC, dispatches every
//! sector and clears the biomass market against land. The carbon price is then bisected until
//! net emissions meet the cap, and the chosen period is committed to the vintage stocks before
//! moving on.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::climate::fugitive_methane;
use crate::config::{luc_price_fraction, nt2nz_cap, CapPath, PolicyKind, RegionConfig, ScenarioConfig, BIOMASS};
use crate::energy::{
    retire_and_roll, service_demand, DemandDrivers, EnergySystem, PeriodDispatch, Pricing, VintageStock,
};
use crate::error::{Error, Result};
use crate::land::{afforestation_sink, water_account, LandModel, LandOutcome, WaterActivities, WaterCoefficients, WaterLedger};
use crate::techno::{dac_levelized_cost, dac_params_at, storage_marginal_cost};

pub const GAS: &str = "gas";
pub const ELECTRICITY: &str = "electricity";

const FOREST_INDEX: usize = 2;

/// One row of the emissions ledger, GtCO2/yr unless noted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerRow {
    pub region: String,
    pub year: i32,
    /// $/tCO2.
    pub carbon_price: f64,
    pub cap: Option<f64>,
    pub gross_co2: f64,
    pub luc_co2: f64,
    pub beccs: f64,
    pub dac: f64,
    pub afforestation: f64,
    pub net_co2: f64,
    /// Mt CH4/yr from the natural gas supply chain.
    pub ch4_mt: f64,
    /// Fossil and DAC process-heat CO2 sent to storage.
    pub fossil_captured: f64,
    /// All CO2 injected this year.
    pub stored: f64,
    /// GtCO2 injected up to the end of this period.
    pub cumulative_storage: f64,
}

impl LedgerRow {
    pub fn negative_emissions(&self) -> f64 {
        self.beccs + self.dac + self.afforestation
    }
}

/// Net of the ledger components.
pub fn ledger_net(gross: f64, luc: f64, beccs: f64, dac: f64, afforestation: f64) -> f64 {
    gross + luc - beccs - dac - afforestation
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DacOutcome {
    /// GtCO2/yr removed.
    pub removal: f64,
    pub new_capacity: f64,
    /// EJ/yr of process-heat gas.
    pub gas: f64,
    pub electricity: f64,
    /// Process-heat combustion CO2, GtCO2/yr.
    pub heat_co2: f64,
    pub heat_captured: f64,
    /// $/tCO2 for a plant built this period.
    pub levelized_cost: f64,
    /// Gas price including the cost of handling its combustion CO2, $/GJ.
    pub heat_price: f64,
}

/// Equilibrium (or candidate) state of one region in one period.
#[derive(Debug, Clone)]
pub struct PeriodSnapshot {
    pub year: i32,
    pub carbon_price: f64,
    pub biomass_price: f64,
    pub storage_cost: f64,
    pub luc_fraction: f64,
    /// $/GJ by fuel index of the region's energy system.
    pub prices: Vec<f64>,
    /// End-use service demand by sector index.
    pub demands: Vec<f64>,
    pub pricing: Vec<Pricing>,
    pub dispatch: PeriodDispatch,
    pub dac: DacOutcome,
    pub land: LandOutcome,
    pub water: WaterLedger,
    pub ledger: LedgerRow,
    /// Bisection steps taken to find the carbon price.
    pub iterations: usize,
}

/// Carried between periods.
#[derive(Debug, Clone)]
pub struct RegionState {
    /// Vintages by technology index.
    pub stocks: Vec<VintageStock>,
    /// DAC capacity, GtCO2/yr.
    pub dac: VintageStock,
    pub cumulative_storage: f64,
    pub forest_base: Option<f64>,
    pub forest_prev: Option<f64>,
}

/// Prices, sector pricing, end-use demands, dispatch, DAC and land for one candidate price pair.
type Evaluation = (Vec<f64>, Vec<Pricing>, Vec<f64>, PeriodDispatch, DacOutcome, LandOutcome);

/// Compiled model of one region.
#[derive(Debug, Clone)]
pub struct RegionModel {
    pub name: String,
    pub config: RegionConfig,
    pub energy: EnergySystem,
    pub land: LandModel,
    biomass: usize,
    gas: Option<usize>,
    electricity: Option<usize>,
    exogenous: Vec<(usize, String)>,
    base_year: i32,
    step: i32,
    base_population: f64,
    base_gdp_per_capita: f64,
}

impl RegionModel {
    pub fn build(scenario: &ScenarioConfig, region: &RegionConfig) -> Result<Self> {
        let base_year = scenario.grid.start_year;
        let mut base_prices: BTreeMap<String, f64> = region
            .fuel_prices
            .iter()
            .map(|(f, s)| (f.clone(), s.at(base_year)))
            .collect();
        base_prices.insert(BIOMASS.to_string(), region.biomass.base_price);
        let energy = EnergySystem::build(&region.sectors, &scenario.technologies, &scenario.choice, &base_prices)
            .map_err(|e| Error::InvalidInput(format!("region `{}`: {e}", region.name)))?;
        let land = LandModel::build(&region.land)?;
        let biomass = energy.fuel(BIOMASS).unwrap_or_else(|| unreachable!());
        let gas = energy.fuel(GAS);
        let electricity = energy.fuel(ELECTRICITY);
        if scenario.dac.enabled && (gas.is_none() || electricity.is_none()) {
            return Err(Error::InvalidInput(format!(
                "region `{}`: DAC needs `{GAS}` and `{ELECTRICITY}` prices",
                region.name
            )));
        }
        let exogenous = region
            .fuel_prices
            .keys()
            .map(|f| (energy.fuel(f).unwrap_or_else(|| unreachable!()), f.clone()))
            .collect();
        let pop = region.population.at(base_year);
        Ok(RegionModel {
            name: region.name.clone(),
            config: region.clone(),
            energy,
            land,
            biomass,
            gas,
            electricity,
            exogenous,
            base_year,
            step: scenario.grid.step,
            base_population: pop,
            base_gdp_per_capita: region.gdp.at(base_year) / pop,
        })
    }

    /// Base-year capacity spread over past vintages, sized from the configured shares.
    pub fn initial_state(&self) -> RegionState {
        let e = &self.energy;
        let mut output = vec![0.0; e.techs.len()];
        let mut fuel_use = vec![0.0; e.fuels.len()];
        let order: Vec<usize> = e.end_uses().into_iter().chain(e.supply_order().into_iter().rev()).collect();
        for si in order {
            let sector = &e.sectors[si];
            let cfg = &self.config.sectors[si];
            let total = match sector.output {
                Some(f) => fuel_use[f],
                None => cfg.base_demand,
            };
            for &ti in &sector.techs {
                let share = cfg.base_shares.get(&e.techs[ti].name).copied().unwrap_or(0.0);
                output[ti] = total * share;
                for &(f, gj) in &e.techs[ti].inputs {
                    fuel_use[f] += output[ti] * gj;
                }
            }
        }
        RegionState {
            stocks: e
                .techs
                .iter()
                .zip(&output)
                .map(|(t, &o)| VintageStock::seeded(t.lifetime, o, self.base_year, self.step))
                .collect(),
            dac: VintageStock::new(0.0),
            cumulative_storage: self.config.storage.as_ref().map_or(0.0, |s| s.injected),
            forest_base: None,
            forest_prev: None,
        }
    }

    fn storage_cost(&self, state: &RegionState) -> Result<f64> {
        match &self.config.storage {
            Some(curve) => storage_marginal_cost(curve, state.cumulative_storage),
            None => Ok(0.0),
        }
    }

    /// Runs every sector, DAC and land at the given carbon and biomass prices.
    #[allow(clippy::too_many_arguments)]
    fn evaluate_at(
        &self,
        scenario: &ScenarioConfig,
        year: i32,
        carbon_price: f64,
        biomass_price: f64,
        storage_cost: f64,
        luc_fraction: f64,
        survivors: &[f64],
        dac_stock: &VintageStock,
    ) -> Result<Evaluation> {
        let e = &self.energy;
        let mut prices = vec![0.0; e.fuels.len()];
        for (f, name) in &self.exogenous {
            prices[*f] = self.config.fuel_prices[name].at(year);
        }
        prices[self.biomass] = biomass_price;
        let pricing = e.price_all(year, &mut prices, carbon_price, storage_cost)?;
        let population = self.config.population.at(year);
        let gdp_per_capita = self.config.gdp.at(year) / population;
        let mut demands = vec![0.0; e.sectors.len()];
        for si in e.end_uses() {
            let sector = &e.sectors[si];
            let demand = sector.demand.as_ref().unwrap_or_else(|| unreachable!());
            let base = DemandDrivers {
                population: self.base_population,
                gdp_per_capita: self.base_gdp_per_capita,
                price: sector.base_price,
            };
            let now = DemandDrivers {
                population,
                gdp_per_capita,
                price: pricing[si].composite,
            };
            let efficiency = (1.0 - sector.efficiency_improvement).powi(year - self.base_year);
            demands[si] = if demand.base_demand > 0.0 {
                service_demand(demand, &base, &now)? * efficiency
            } else {
                0.0
            };
        }
        let dac = self.size_dac(scenario, year, carbon_price, &prices, storage_cost, dac_stock)?;
        let mut extra = vec![0.0; e.fuels.len()];
        if let Some(el) = self.electricity {
            extra[el] = dac.electricity;
        }
        let dispatch = e.dispatch_period(&pricing, &demands, survivors, &extra)?;
        let land = self.land.allocate(
            year,
            carbon_price,
            luc_fraction,
            biomass_price,
            self.config.biomass.residue_supply.at(year),
        )?;
        Ok((prices, pricing, demands, dispatch, dac, land))
    }

    /// DAC removal from surviving plants plus new capacity proportional to the margin of the
    /// carbon price over the levelized cost of a new plant.
    fn size_dac(
        &self,
        scenario: &ScenarioConfig,
        year: i32,
        carbon_price: f64,
        prices: &[f64],
        storage_cost: f64,
        stock: &VintageStock,
    ) -> Result<DacOutcome> {
        let dac = &scenario.dac;
        let (Some(gas), Some(el)) = (self.gas, self.electricity) else {
            return Ok(DacOutcome::default());
        };
        let capture = dac.heat_capture_fraction;
        let heat_price = prices[gas]
            + dac.heat_emission_factor * (capture * storage_cost + (1.0 - capture) * carbon_price);
        let mut out = DacOutcome {
            heat_price,
            ..DacOutcome::default()
        };
        if dac.enabled && year >= dac.available_from {
            out.levelized_cost = dac_levelized_cost(dac, year, heat_price, prices[el].max(0.0), storage_cost)?;
            out.new_capacity = dac.supply_slope * (carbon_price - out.levelized_cost).max(0.0);
        }
        for v in &stock.vintages {
            let c = dac_params_at(dac, v.build_year)?;
            out.removal += v.capacity;
            out.gas += v.capacity * c.gas;
            out.electricity += v.capacity * c.elec;
        }
        if out.new_capacity > 0.0 {
            let c = dac_params_at(dac, year)?;
            out.removal += out.new_capacity;
            out.gas += out.new_capacity * c.gas;
            out.electricity += out.new_capacity * c.elec;
        }
        out.heat_co2 = out.gas * dac.heat_emission_factor;
        out.heat_captured = out.heat_co2 * capture;
        Ok(out)
    }

    /// Full period snapshot at a trial carbon price, with the biomass market cleared.
    pub fn net_emissions_at_price(
        &self,
        scenario: &ScenarioConfig,
        state: &RegionState,
        year: i32,
        carbon_price: f64,
    ) -> Result<PeriodSnapshot> {
        if !(carbon_price >= 0.0 && carbon_price.is_finite()) {
            return Err(Error::InvalidInput(format!("carbon price {carbon_price}")));
        }
        let storage_cost = self.storage_cost(state)?;
        let luc_fraction = luc_price_fraction(&scenario.policy.luc_linkage, year);
        let survivors: Vec<f64> = state
            .stocks
            .iter()
            .map(|s| retire_and_roll(s, year).total())
            .collect();
        let dac_stock = VintageStock {
            lifetime: scenario.dac.lifetime,
            vintages: state.dac.vintages.clone(),
        };
        let dac_stock = retire_and_roll(&dac_stock, year);
        let eval = |pb: f64| {
            self.evaluate_at(
                scenario,
                year,
                carbon_price,
                pb,
                storage_cost,
                luc_fraction,
                &survivors,
                &dac_stock,
            )
        };
        let excess = |r: &Evaluation| {
            r.3.fuel_use[self.biomass] - r.5.bio_supply
        };
        let bio = &self.config.biomass;
        let (mut lo, mut hi) = (bio.price_floor, bio.price_ceiling);
        let mut result = eval(lo)?;
        let mut price = lo;
        if excess(&result) > 0.0 {
            let top = eval(hi)?;
            if excess(&top) > 0.0 {
                return Err(Error::InvalidInput(format!(
                    "region `{}` {year}: biomass demand exceeds supply at the price ceiling ${hi}/GJ",
                    self.name
                )));
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let r = eval(mid)?;
                if excess(&r) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-12 * hi {
                    break;
                }
            }
            price = hi;
            result = eval(price)?;
        }
        let (prices, pricing, demands, dispatch, dac, land) = result;
        Ok(self.assemble(scenario, state, year, carbon_price, price, storage_cost, luc_fraction, prices, pricing, demands, dispatch, dac, land))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        &self,
        scenario: &ScenarioConfig,
        state: &RegionState,
        year: i32,
        carbon_price: f64,
        biomass_price: f64,
        storage_cost: f64,
        luc_fraction: f64,
        prices: Vec<f64>,
        pricing: Vec<Pricing>,
        demands: Vec<f64>,
        dispatch: PeriodDispatch,
        dac: DacOutcome,
        land: LandOutcome,
    ) -> PeriodSnapshot {
        let e = &self.energy;
        let mut beccs_stored = 0.0;
        let mut fossil_captured = dac.heat_captured;
        for (sector, outcome) in e.sectors.iter().zip(&dispatch.sectors) {
            for (&ti, &a) in sector.techs.iter().zip(&outcome.activity) {
                let t = &e.techs[ti];
                if t.removal_factor > 0.0 {
                    beccs_stored += a * t.captured_factor;
                } else {
                    fossil_captured += a * t.captured_factor;
                }
            }
        }
        let gross = dispatch.gross_co2() + (dac.heat_co2 - dac.heat_captured);
        let beccs = dispatch.removal();
        let forest = land.areas[FOREST_INDEX];
        let forest_base = state.forest_base.unwrap_or(forest);
        let forest_prev = state.forest_prev.unwrap_or(forest);
        let uptake = self.land.use_params(FOREST_INDEX).uptake;
        let afforestation = afforestation_sink(forest - forest_base, uptake);
        let cleared = (forest_prev.min(forest_base) - forest).max(0.0);
        let luc = self.config.luc_exogenous.at(year)
            + cleared * self.land.config.forest_carbon_stock * 1e-9 / f64::from(self.step);
        let net = ledger_net(gross, luc, beccs, dac.removal, afforestation);
        let gas_use = self.gas.map_or(0.0, |g| dispatch.fuel_use[g]) + dac.gas;
        let stored = fossil_captured + beccs_stored + dac.removal;
        let population = self.config.population.at(year);
        let water = water_account(
            &WaterActivities {
                food_area: land.areas[0],
                bioenergy_area: land.areas[1],
                population,
                energy_water: dispatch.sectors.iter().map(|s| s.water_m3).sum(),
                dac_removal: dac.removal,
            },
            &WaterCoefficients {
                food_irrigation: self.land.use_params(0).irrigation,
                bioenergy_irrigation: self.land.use_params(1).irrigation,
                municipal_per_capita: self.config.water.municipal_m3_per_capita.at(year),
                dac: scenario.dac.water,
            },
        )
        .unwrap_or_default();
        let ledger = LedgerRow {
            region: self.name.clone(),
            year,
            carbon_price,
            cap: None,
            gross_co2: gross,
            luc_co2: luc,
            beccs,
            dac: dac.removal,
            afforestation,
            net_co2: net,
            ch4_mt: fugitive_methane(gas_use, &scenario.climate),
            fossil_captured,
            stored,
            cumulative_storage: state.cumulative_storage + f64::from(self.step) * stored,
        };
        PeriodSnapshot {
            year,
            carbon_price,
            biomass_price,
            storage_cost,
            luc_fraction,
            prices,
            demands,
            pricing,
            dispatch,
            dac,
            land,
            water,
            ledger,
            iterations: 0,
        }
    }

    /// Next period's state after committing `snap`.
    pub fn commit(&self, scenario: &ScenarioConfig, state: &RegionState, snap: &PeriodSnapshot) -> RegionState {
        let year = snap.year;
        let mut stocks: Vec<VintageStock> = state.stocks.iter().map(|s| retire_and_roll(s, year)).collect();
        for (sector, outcome) in self.energy.sectors.iter().zip(&snap.dispatch.sectors) {
            for (&ti, &n) in sector.techs.iter().zip(&outcome.new_activity) {
                stocks[ti].add(year, n);
            }
        }
        let mut dac = retire_and_roll(
            &VintageStock {
                lifetime: scenario.dac.lifetime,
                vintages: state.dac.vintages.clone(),
            },
            year,
        );
        dac.add(year, snap.dac.new_capacity);
        let forest = snap.land.areas[FOREST_INDEX];
        RegionState {
            stocks,
            dac,
            cumulative_storage: snap.ledger.cumulative_storage,
            forest_base: Some(state.forest_base.unwrap_or(forest)),
            forest_prev: Some(forest),
        }
    }

    /// Primary energy by category (fuel, `_ccs` when the consuming technology captures CO2),
    /// EJ/yr. DAC process heat is counted under gas CCS.
    pub fn primary_energy(&self, scenario: &ScenarioConfig, snap: &PeriodSnapshot) -> BTreeMap<String, f64> {
        let e = &self.energy;
        let produced: Vec<usize> = e.sectors.iter().filter_map(|s| s.output).collect();
        let mut out = BTreeMap::new();
        for (sector, outcome) in e.sectors.iter().zip(&snap.dispatch.sectors) {
            for (&ti, &a) in sector.techs.iter().zip(&outcome.activity) {
                let t = &e.techs[ti];
                for &(f, gj) in &t.inputs {
                    if produced.contains(&f) {
                        continue;
                    }
                    let key = if t.uses_ccs {
                        format!("{}_ccs", e.fuels[f])
                    } else {
                        e.fuels[f].clone()
                    };
                    *out.entry(key).or_insert(0.0) += a * gj;
                }
            }
        }
        if snap.dac.gas > 0.0 || scenario.dac.enabled {
            let key = if scenario.dac.heat_capture_fraction > 0.0 {
                format!("{GAS}_ccs")
            } else {
                GAS.to_string()
            };
            *out.entry(key).or_insert(0.0) += snap.dac.gas;
        }
        out
    }
}

/// Result of a carbon-price search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceSolution {
    pub price: f64,
    pub net: f64,
    pub iterations: usize,
    /// The cap does not bind: unpriced emissions are already below it.
    pub slack: bool,
}

/// Tolerance on meeting a cap, GtCO2/yr.
pub fn cap_tolerance(cap: f64) -> f64 {
    (1e-6 * cap.abs()).max(1e-4)
}

/// Bisects the carbon price on `[0, ceiling]` until `|net(P) - cap|` is within tolerance.
pub fn solve_carbon_price<F>(mut net_at: F, cap: f64, ceiling: f64, region: &str, year: i32) -> Result<PriceSolution>
where
    F: FnMut(f64) -> Result<f64>,
{
    let tol = cap_tolerance(cap);
    let net_zero = net_at(0.0)?;
    if net_zero <= cap + tol {
        return Ok(PriceSolution {
            price: 0.0,
            net: net_zero,
            iterations: 0,
            slack: true,
        });
    }
    let net_top = net_at(ceiling)?;
    if net_top > cap + tol {
        return Err(Error::Infeasible {
            region: region.to_string(),
            year,
            cap,
            ceiling,
            net_at_ceiling: net_top,
        });
    }
    if (net_top - cap).abs() <= tol {
        return Ok(PriceSolution {
            price: ceiling,
            net: net_top,
            iterations: 0,
            slack: false,
        });
    }
    let (mut lo, mut hi) = (0.0, ceiling);
    for iteration in 1..=200 {
        let mid = 0.5 * (lo + hi);
        let net = net_at(mid)?;
        if (net - cap).abs() <= tol {
            return Ok(PriceSolution {
                price: mid,
                net,
                iterations: iteration,
                slack: false,
            });
        }
        if net > cap {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Err(Error::NoConvergence {
        region: region.to_string(),
        year,
        cap,
        net_at_zero: net_zero,
        net_at_ceiling: net_top,
    })
}

/// Everything produced by one recursive-dynamic run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub models: Vec<RegionModel>,
    pub caps: BTreeMap<String, CapPath>,
    /// Snapshots by region, one per grid year.
    pub periods: BTreeMap<String, Vec<PeriodSnapshot>>,
}

impl RunOutput {
    /// Ledger rows in (region, year) order.
    pub fn ledger(&self) -> Vec<LedgerRow> {
        self.periods
            .values()
            .flat_map(|snaps| snaps.iter().map(|s| s.ledger.clone()))
            .collect()
    }

    pub fn model(&self, region: &str) -> Option<&RegionModel> {
        self.models.iter().find(|m| m.name == region)
    }

    pub fn snapshot(&self, region: &str, year: i32) -> Option<&PeriodSnapshot> {
        self.periods.get(region)?.iter().find(|s| s.year == year)
    }
}

/// Solves one region-period: slack periods and uncapped runs take a zero price.
fn solve_region_period(
    scenario: &ScenarioConfig,
    model: &RegionModel,
    state: &RegionState,
    year: i32,
    cap: Option<f64>,
) -> Result<PeriodSnapshot> {
    let Some(cap) = cap else {
        return model.net_emissions_at_price(scenario, state, year, 0.0);
    };
    let mut last: Option<PeriodSnapshot> = None;
    let solution = solve_carbon_price(
        |p| {
            let snap = model.net_emissions_at_price(scenario, state, year, p)?;
            let net = snap.ledger.net_co2;
            last = Some(snap);
            Ok(net)
        },
        cap,
        scenario.policy.price_ceiling,
        &model.name,
        year,
    )?;
    let mut snap = match last {
        Some(s) if s.carbon_price == solution.price => s,
        _ => model.net_emissions_at_price(scenario, state, year, solution.price)?,
    };
    snap.ledger.cap = Some(cap);
    snap.iterations = solution.iterations;
    Ok(snap)
}

/// Runs every region over the grid with the given caps (empty for an unpriced run), stopping
/// after `last_year`.
fn run_with_caps(scenario: &ScenarioConfig, caps: BTreeMap<String, CapPath>, last_year: i32) -> Result<RunOutput> {
    let models = scenario
        .regions
        .iter()
        .map(|r| RegionModel::build(scenario, r))
        .collect::<Result<Vec<_>>>()?;
    let mut states: Vec<RegionState> = models.iter().map(RegionModel::initial_state).collect();
    let mut periods: BTreeMap<String, Vec<PeriodSnapshot>> = BTreeMap::new();
    for year in scenario.grid.years().filter(|&y| y <= last_year) {
        for (model, state) in models.iter().zip(states.iter_mut()) {
            let cap = caps.get(&model.name).and_then(|c| c.get(year));
            let snap = solve_region_period(scenario, model, state, year, cap)?;
            *state = model.commit(scenario, state, &snap);
            periods.entry(model.name.clone()).or_default().push(snap);
        }
    }
    Ok(RunOutput { models, caps, periods })
}

/// Unpriced net emissions of every region in `year`, interpolated between grid years.
pub fn unpriced_emissions(scenario: &ScenarioConfig, year: i32) -> Result<BTreeMap<String, f64>> {
    let grid = &scenario.grid;
    let upper = grid
        .years()
        .find(|&y| y >= year)
        .ok_or_else(|| Error::InvalidInput(format!("{year} lies beyond the grid")))?;
    let lower = grid.years().filter(|&y| y <= year).last().unwrap_or(upper);
    let run = run_with_caps(scenario, BTreeMap::new(), upper)?;
    let mut out = BTreeMap::new();
    for (region, snaps) in &run.periods {
        let at = |y: i32| {
            snaps
                .iter()
                .find(|s| s.year == y)
                .map(|s| s.ledger.net_co2)
                .unwrap_or_else(|| unreachable!())
        };
        let value = if upper == lower {
            at(upper)
        } else {
            let t = f64::from(year - lower) / f64::from(upper - lower);
            at(lower) + t * (at(upper) - at(lower))
        };
        out.insert(region.clone(), value);
    }
    Ok(out)
}

/// Base-year anchor of every region whose cap is not given as explicit points: the configured
/// `cap_anchor`, else the unpriced emissions of the same configuration in the policy base year.
pub fn cap_anchors(scenario: &ScenarioConfig) -> Result<BTreeMap<String, f64>> {
    let policy = &scenario.policy;
    if policy.kind == PolicyKind::None {
        return Ok(BTreeMap::new());
    }
    let needs_run = scenario
        .regions
        .iter()
        .any(|r| r.cap.is_none() && r.cap_anchor.is_none());
    let unpriced = if needs_run {
        unpriced_emissions(scenario, policy.base_year)?
    } else {
        BTreeMap::new()
    };
    Ok(scenario
        .regions
        .iter()
        .filter(|r| r.cap.is_none())
        .map(|r| {
            let anchor = r.cap_anchor.unwrap_or_else(|| unpriced[&r.name].max(0.0));
            (r.name.clone(), anchor)
        })
        .collect())
}

/// Cap path for every region: explicit points or a linear decline from its anchor.
pub fn resolve_caps(scenario: &ScenarioConfig) -> Result<BTreeMap<String, CapPath>> {
    let policy = &scenario.policy;
    let anchors = cap_anchors(scenario)?;
    let mut caps = BTreeMap::new();
    if policy.kind == PolicyKind::None {
        return Ok(caps);
    }
    for region in &scenario.regions {
        let path = match &region.cap {
            Some(points) => CapPath::from_points(points.iter().copied()),
            None => nt2nz_cap(anchors[&region.name], policy.base_year, policy.net_zero_year, &scenario.grid)?,
        };
        path.validate_nt2nz(policy.net_zero_year)?;
        caps.insert(region.name.clone(), path);
    }
    Ok(caps)
}

/// Solves every period of every region in order.
pub fn run_path(scenario: &ScenarioConfig) -> Result<RunOutput> {
    let caps = resolve_caps(scenario).map_err(|e| e.in_scenario(&scenario.name))?;
    run_with_caps(scenario, caps, scenario.grid.end_year).map_err(|e| e.in_scenario(&scenario.name))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linear_system_inverts_analytically() {
        let sol = solve_carbon_price(|p| Ok(10.0 - 0.02 * p), 4.0, 5000.0, "toy", 2060).unwrap();
        // 10 - 0.02 P = 4  =>  P = 300.
        assert!((sol.price - 300.0).abs() <= cap_tolerance(4.0) / 0.02);
        assert!((sol.net - 4.0).abs() <= cap_tolerance(4.0));
        assert!(sol.iterations <= 60);
    }

    #[test]
    fn slack_cap_costs_nothing() {
        let sol = solve_carbon_price(|p| Ok(10.0 - 0.02 * p), 10.0, 5000.0, "toy", 2030).unwrap();
        assert_eq!(sol.price, 0.0);
        assert!(sol.slack);
    }

    #[test]
    fn infeasible_cap_names_the_year() {
        let err = solve_carbon_price(|p| Ok(10.0 - 0.001 * p), 0.0, 5000.0, "china", 2060).unwrap_err();
        assert!(matches!(err, Error::Infeasible { year: 2060, .. }));
        assert!(err.is_infeasibility());
        assert!(err.to_string().contains("2060"));
    }

    #[test]
    fn ledger_identity_example() {
        assert_eq!(ledger_net(5.0, 0.5, 1.0, 1.5, 0.5), 2.5);
    }

    proptest! {
        #[test]
        fn bisection_hits_any_linear_target(e0 in 1.0f64..40.0, k in 0.001f64..0.5, frac in 0.0f64..0.95) {
            let cap = e0 * frac;
            let ceiling = 5000.0;
            prop_assume!(e0 - k * ceiling < cap);
            let sol = solve_carbon_price(|p| Ok(e0 - k * p), cap, ceiling, "toy", 2050).unwrap();
            prop_assert!((sol.net - cap).abs() <= cap_tolerance(cap));
            prop_assert!(sol.iterations <= 60);
        }
    }
}
