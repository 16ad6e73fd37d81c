//! Reduced-form climate: impulse-response carbon pools, a methane burden, logarithmic CO2
//! forcing and a two-box energy balance.
//!
//! All state updates are exact solutions for inputs held constant over the step, so results
//! do not depend on how a period is subdivided beyond the input interpolation.

use serde::{Deserialize, Serialize};

use crate::config::Series;
use crate::error::{Error, Result};

/// tCO2 per tC.
pub const CO2_PER_C: f64 = 44.0 / 12.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClimateParams {
    /// Airborne fractions; the first pool never decays.
    pub pool_fractions: [f64; 4],
    /// e-folding times of the three decaying pools, years (`inf` disables decay).
    pub pool_timescales: [f64; 3],
    /// Anthropogenic carbon in each pool at the start of the run, GtC.
    #[serde(default)]
    pub initial_pools: [f64; 4],
    #[serde(default = "default_c0")]
    pub preindustrial_ppm: f64,
    #[serde(default = "default_gtc_per_ppm")]
    pub gtc_per_ppm: f64,
    /// Forcing from doubled CO2, W/m².
    pub f2x: f64,
    /// Climate feedback parameter, W/m²/K.
    pub feedback: f64,
    /// Heat capacities, W yr/m²/K.
    pub heat_capacity_fast: f64,
    pub heat_capacity_slow: f64,
    /// Heat exchange between the boxes, W/m²/K.
    pub exchange: f64,
    #[serde(default)]
    pub initial_temperature_fast: f64,
    #[serde(default)]
    pub initial_temperature_slow: f64,
    pub ch4_lifetime: f64,
    /// Forcing per Mt of methane burden, W/m²/Mt.
    pub ch4_efficiency: f64,
    #[serde(default)]
    pub initial_ch4_burden: f64,
    /// Fraction of natural gas throughput leaked as methane.
    #[serde(default = "default_leakage")]
    pub leakage_rate: f64,
    /// MJ per kg of natural gas.
    #[serde(default = "default_density")]
    pub gas_energy_density: f64,
    /// Forcing from everything not modelled explicitly, W/m².
    #[serde(default)]
    pub exogenous_forcing: Series,
    /// Scenario-specific addition to the exogenous forcing, W/m².
    #[serde(default)]
    pub non_co2_offset: Series,
}

fn default_c0() -> f64 {
    278.0
}
fn default_gtc_per_ppm() -> f64 {
    2.124
}
fn default_leakage() -> f64 {
    0.015
}
fn default_density() -> f64 {
    50.0
}

impl ClimateParams {
    /// Four-pool response with the Joos et al. (2013) multi-model fit and a two-box energy
    /// balance near the CMIP multi-model mean.
    pub fn standard() -> Self {
        ClimateParams {
            pool_fractions: [0.2173, 0.2240, 0.2824, 0.2763],
            pool_timescales: [394.4, 36.54, 4.304],
            initial_pools: [0.0; 4],
            preindustrial_ppm: default_c0(),
            gtc_per_ppm: default_gtc_per_ppm(),
            f2x: 3.7,
            feedback: 1.2,
            heat_capacity_fast: 8.0,
            heat_capacity_slow: 100.0,
            exchange: 0.7,
            initial_temperature_fast: 0.0,
            initial_temperature_slow: 0.0,
            ch4_lifetime: 11.8,
            ch4_efficiency: 3.6e-4,
            initial_ch4_burden: 0.0,
            leakage_rate: default_leakage(),
            gas_energy_density: default_density(),
            exogenous_forcing: Series::default(),
            non_co2_offset: Series::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.pool_fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-12 || self.pool_fractions.iter().any(|a| *a < 0.0) {
            return Err(Error::invariant(
                "carbon pool fractions are non-negative and sum to 1",
                format!("{:?} sums to {sum}", self.pool_fractions),
            ));
        }
        if self.pool_timescales.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::invariant(
                "carbon pool timescales > 0",
                format!("{:?}", self.pool_timescales),
            ));
        }
        if !(0.0..=0.1).contains(&self.leakage_rate) {
            return Err(Error::invariant(
                "leakage rate in [0, 0.1]",
                self.leakage_rate.to_string(),
            ));
        }
        let positive = [
            ("preindustrial_ppm", self.preindustrial_ppm),
            ("gtc_per_ppm", self.gtc_per_ppm),
            ("feedback", self.feedback),
            ("heat_capacity_fast", self.heat_capacity_fast),
            ("heat_capacity_slow", self.heat_capacity_slow),
            ("ch4_lifetime", self.ch4_lifetime),
            ("gas_energy_density", self.gas_energy_density),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invariant(
                "climate constants positive and finite",
                format!("climate.{name} = {v}"),
            ));
        }
        if self.exchange < 0.0 || self.ch4_efficiency < 0.0 || self.initial_ch4_burden < 0.0 {
            return Err(Error::invariant(
                "climate exchange, methane efficiency and burden >= 0",
                format!("{} / {} / {}", self.exchange, self.ch4_efficiency, self.initial_ch4_burden),
            ));
        }
        if self.initial_pools.iter().any(|p| *p < 0.0) {
            return Err(Error::invariant(
                "carbon pool burdens >= 0",
                format!("{:?}", self.initial_pools),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClimateState {
    /// Anthropogenic carbon by pool, GtC.
    pub pools: [f64; 4],
    /// Mt CH4 above the starting background.
    pub ch4_burden: f64,
    pub t_fast: f64,
    pub t_slow: f64,
}

impl ClimateState {
    pub fn initial(params: &ClimateParams) -> Self {
        ClimateState {
            pools: params.initial_pools,
            ch4_burden: params.initial_ch4_burden,
            t_fast: params.initial_temperature_fast,
            t_slow: params.initial_temperature_slow,
        }
    }

    pub fn concentration(&self, params: &ClimateParams) -> f64 {
        params.preindustrial_ppm + self.pools.iter().sum::<f64>() / params.gtc_per_ppm
    }

    /// Surface temperature anomaly, K.
    pub fn anomaly(&self) -> f64 {
        self.t_fast
    }
}

/// Exact update of a first-order reservoir with constant inflow.
fn relax(stock: f64, inflow: f64, tau: f64, dt: f64) -> f64 {
    if tau.is_infinite() {
        stock + inflow * dt
    } else {
        let decay = (-dt / tau).exp();
        stock * decay + inflow * tau * (1.0 - decay)
    }
}

/// Advances the carbon pools by `dt` years of constant emissions (GtCO2/yr).
pub fn step_carbon(state: &ClimateState, params: &ClimateParams, co2_emissions: f64, dt: f64) -> ClimateState {
    let e = co2_emissions / CO2_PER_C;
    let mut next = *state;
    next.pools[0] = state.pools[0] + params.pool_fractions[0] * e * dt;
    for i in 1..4 {
        next.pools[i] = relax(
            state.pools[i],
            params.pool_fractions[i] * e,
            params.pool_timescales[i - 1],
            dt,
        );
    }
    next
}

/// Methane leaked for a given natural gas throughput, Mt CH4/yr.
pub fn fugitive_methane(gas_use_ej: f64, params: &ClimateParams) -> f64 {
    // EJ → MJ is 1e12; kg → Mt is 1e-9.
    let gas_mt = gas_use_ej * 1e12 / params.gas_energy_density * 1e-9;
    params.leakage_rate * gas_mt
}

pub fn step_methane(state: &ClimateState, params: &ClimateParams, ch4_emissions: f64, dt: f64) -> ClimateState {
    ClimateState {
        ch4_burden: relax(state.ch4_burden, ch4_emissions, params.ch4_lifetime, dt),
        ..*state
    }
}

/// Total radiative forcing, W/m².
pub fn radiative_forcing(co2_ppm: f64, ch4_burden: f64, exogenous: f64, params: &ClimateParams) -> f64 {
    params.f2x * (co2_ppm / params.preindustrial_ppm).ln() / std::f64::consts::LN_2
        + params.ch4_efficiency * ch4_burden
        + exogenous
}

/// Advances the two-box energy balance by `dt` years under constant forcing.
pub fn step_temperature(state: &ClimateState, params: &ClimateParams, forcing: f64, dt: f64) -> ClimateState {
    let (lam, k) = (params.feedback, params.exchange);
    let (cf, cs) = (params.heat_capacity_fast, params.heat_capacity_slow);
    let a = [[-(lam + k) / cf, k / cf], [k / cs, -k / cs]];
    let eq = forcing / lam;
    let dev = [state.t_fast - eq, state.t_slow - eq];
    let m = expm2(a, dt);
    ClimateState {
        t_fast: eq + m[0][0] * dev[0] + m[0][1] * dev[1],
        t_slow: eq + m[1][0] * dev[0] + m[1][1] * dev[1],
        ..*state
    }
}

/// exp(A t) for a 2×2 matrix with real eigenvalues.
fn expm2(a: [[f64; 2]; 2], t: f64) -> [[f64; 2]; 2] {
    let tr = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
    let (m1, m2) = (0.5 * (tr + disc), 0.5 * (tr - disc));
    if disc < 1e-12 * tr.abs().max(1.0) {
        // Repeated eigenvalue: exp(mt) (I + (A - mI) t).
        let e = (m1 * t).exp();
        return [
            [e * (1.0 + (a[0][0] - m1) * t), e * a[0][1] * t],
            [e * a[1][0] * t, e * (1.0 + (a[1][1] - m1) * t)],
        ];
    }
    let (e1, e2) = ((m1 * t).exp(), (m2 * t).exp());
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let id = if i == j { 1.0 } else { 0.0 };
            out[i][j] = (e1 * (a[i][j] - m2 * id) - e2 * (a[i][j] - m1 * id)) / (m1 - m2);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClimateRow {
    pub year: i32,
    pub co2_emissions: f64,
    pub ch4_emissions: f64,
    pub co2_ppm: f64,
    pub ch4_burden: f64,
    pub forcing: f64,
    pub anomaly: f64,
}

/// Runs the emulator over grid years with annual sub-steps, interpolating emissions linearly
/// between grid points. `co2` is GtCO2/yr and `ch4` Mt CH4/yr at each year in `years`.
pub fn emulate(params: &ClimateParams, years: &[i32], co2: &[f64], ch4: &[f64]) -> Result<Vec<ClimateRow>> {
    if years.len() != co2.len() || years.len() != ch4.len() || years.is_empty() {
        return Err(Error::InvalidInput(format!(
            "climate inputs need one value per year ({} years, {} CO2, {} CH4)",
            years.len(),
            co2.len(),
            ch4.len()
        )));
    }
    let exo = |y: f64| {
        let lo = y.floor() as i32;
        let t = y - f64::from(lo);
        let at = |yy: i32| params.exogenous_forcing.at(yy) + params.non_co2_offset.at(yy);
        at(lo) * (1.0 - t) + at(lo + 1) * t
    };
    let forcing_of = |s: &ClimateState, y: f64| {
        radiative_forcing(s.concentration(params), s.ch4_burden, exo(y), params)
    };
    let mut state = ClimateState::initial(params);
    let row = |s: &ClimateState, k: usize| ClimateRow {
        year: years[k],
        co2_emissions: co2[k],
        ch4_emissions: ch4[k],
        co2_ppm: s.concentration(params),
        ch4_burden: s.ch4_burden,
        forcing: forcing_of(s, f64::from(years[k])),
        anomaly: s.anomaly(),
    };
    let mut rows = vec![row(&state, 0)];
    for k in 1..years.len() {
        let (y0, y1) = (years[k - 1], years[k]);
        let span = f64::from(y1 - y0);
        for j in 0..(y1 - y0) {
            let mid = (f64::from(j) + 0.5) / span;
            let e_co2 = co2[k - 1] + mid * (co2[k] - co2[k - 1]);
            let e_ch4 = ch4[k - 1] + mid * (ch4[k] - ch4[k - 1]);
            let start = f64::from(y0 + j);
            let f_start = forcing_of(&state, start);
            let mut next = step_carbon(&state, params, e_co2, 1.0);
            next = step_methane(&next, params, e_ch4, 1.0);
            let f_end = forcing_of(&next, start + 1.0);
            state = step_temperature(&next, params, 0.5 * (f_start + f_end), 1.0);
        }
        rows.push(row(&state, k));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn zero_state() -> ClimateState {
        ClimateState {
            pools: [0.0; 4],
            ch4_burden: 0.0,
            t_fast: 0.0,
            t_slow: 0.0,
        }
    }

    #[test]
    fn empty_pools_stay_empty() {
        let p = ClimateParams::standard();
        assert_eq!(step_carbon(&zero_state(), &p, 0.0, 5.0).pools, [0.0; 4]);
    }

    #[test]
    fn pulse_decays_like_closed_form() {
        let p = ClimateParams::standard();
        let mut state = zero_state();
        for (i, a) in p.pool_fractions.iter().enumerate() {
            state.pools[i] = a * 100.0;
        }
        let mut t = 0;
        for target in [5, 50, 100] {
            while t < target {
                state = step_carbon(&state, &p, 0.0, 1.0);
                t += 1;
            }
            assert!((state.pools[0] - p.pool_fractions[0] * 100.0).abs() < 1e-9);
            for i in 1..4 {
                let expected = p.pool_fractions[i] * 100.0 * (-f64::from(t) / p.pool_timescales[i - 1]).exp();
                let rel = (state.pools[i] - expected).abs() / expected;
                assert!(rel < 1e-6, "pool {i} at t={t}: {} vs {expected}", state.pools[i]);
            }
        }
    }

    #[test]
    fn permanent_pool_grows_linearly() {
        let p = ClimateParams {
            pool_fractions: [1.0, 0.0, 0.0, 0.0],
            ..ClimateParams::standard()
        };
        let mut s = zero_state();
        let mut ppm = vec![s.concentration(&p)];
        for _ in 0..4 {
            s = step_carbon(&s, &p, 11.0, 5.0);
            ppm.push(s.concentration(&p));
        }
        let d: Vec<f64> = ppm.windows(2).map(|w| w[1] - w[0]).collect();
        for x in &d {
            assert!((x - d[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn methane_examples() {
        let p = ClimateParams::standard();
        assert_eq!(fugitive_methane(0.0, &p), 0.0);
        let ch4 = fugitive_methane(8.48, &p);
        assert!((ch4 - 2.544).abs() < 1e-9);
        let doubled = ClimateParams {
            leakage_rate: 0.03,
            ..p.clone()
        };
        assert!((fugitive_methane(8.48, &doubled) - 2.0 * ch4).abs() < 1e-12);
    }

    #[test]
    fn forcing_examples() {
        let p = ClimateParams::standard();
        assert_eq!(radiative_forcing(278.0, 0.0, 0.0, &p), 0.0);
        assert!((radiative_forcing(556.0, 0.0, 0.0, &p) - 3.7).abs() < 1e-12);
        let f = radiative_forcing(417.0, 0.0, 0.0, &p);
        assert!((f - 3.7 * 1.5f64.ln() / 2f64.ln()).abs() < 1e-12);
        assert!((f - 2.164).abs() < 1e-3);
    }

    #[test]
    fn temperature_fixed_point_and_equilibrium() {
        let p = ClimateParams::standard();
        assert_eq!(step_temperature(&zero_state(), &p, 0.0, 5.0), zero_state());
        let mut s = zero_state();
        for _ in 0..400 {
            s = step_temperature(&s, &p, 4.0, 5.0);
        }
        let eq = 4.0 / p.feedback;
        assert!((s.t_fast - eq).abs() / eq < 0.01);
    }

    #[test]
    fn fast_box_leads_slow_box() {
        let p = ClimateParams::standard();
        let mut s = zero_state();
        for _ in 0..50 {
            s = step_temperature(&s, &p, 3.0, 5.0);
            assert!(s.t_fast > s.t_slow);
        }
    }

    #[test]
    fn matrix_exponential_matches_series() {
        let a = [[-0.2375, 0.0875], [0.007, -0.007]];
        let m = expm2(a, 2.0);
        // Truncated Taylor series as an independent oracle.
        let mut term = [[1.0, 0.0], [0.0, 1.0]];
        let mut sum = term;
        for n in 1..40 {
            let mut next = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    next[i][j] = (0..2).map(|k| term[i][k] * a[k][j] * 2.0).sum::<f64>() / f64::from(n);
                }
            }
            term = next;
            for i in 0..2 {
                for j in 0..2 {
                    sum[i][j] += term[i][j];
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                assert!((m[i][j] - sum[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn methane_changes_temperature_not_concentration() {
        let p = ClimateParams::standard();
        let years: Vec<i32> = (2015..=2100).step_by(5).collect();
        let co2: Vec<f64> = years.iter().map(|y| 40.0 - f64::from(y - 2015) * 0.4).collect();
        let low = vec![1.0; years.len()];
        let high = vec![5.0; years.len()];
        let a = emulate(&p, &years, &co2, &low).unwrap();
        let b = emulate(&p, &years, &co2, &high).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.co2_ppm, y.co2_ppm);
        }
        assert!(b.last().unwrap().anomaly > a.last().unwrap().anomaly);
    }

    proptest! {
        #[test]
        fn no_decay_conserves_carbon(e in proptest::collection::vec(-20.0f64..60.0, 1..30), dt in 0.5f64..5.0) {
            let p = ClimateParams {
                pool_timescales: [f64::INFINITY; 3],
                ..ClimateParams::standard()
            };
            let mut s = zero_state();
            let mut total = 0.0;
            for x in &e {
                s = step_carbon(&s, &p, *x, dt);
                total += x / CO2_PER_C * dt;
            }
            prop_assert!((s.pools.iter().sum::<f64>() - total).abs() < 1e-9 * total.abs().max(1.0));
        }

        #[test]
        fn monotone_forcing_gives_monotone_warming(steps in proptest::collection::vec(0.0f64..0.5, 1..40)) {
            let p = ClimateParams::standard();
            let mut s = zero_state();
            let mut f = 0.0;
            let mut prev = 0.0;
            for d in steps {
                f += d;
                s = step_temperature(&s, &p, f, 5.0);
                prop_assert!(s.t_fast >= prev - 1e-12);
                prev = s.t_fast;
            }
        }
    }
}
