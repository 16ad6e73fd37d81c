//! Emissions caps and the land-use carbon price linkage.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::TimeGrid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// No carbon price in any period.
    None,
    /// Linearly declining net CO2 cap reaching zero at `net_zero_year`.
    Nt2nz,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    #[serde(default = "default_base_year")]
    pub base_year: i32,
    #[serde(default = "default_net_zero_year")]
    pub net_zero_year: i32,
    /// Upper end of the carbon price search, $/tCO2.
    #[serde(default = "default_price_ceiling")]
    pub price_ceiling: f64,
    #[serde(default)]
    pub luc_linkage: PolicyLinkage,
}

fn default_base_year() -> i32 {
    2021
}
fn default_net_zero_year() -> i32 {
    2060
}
fn default_price_ceiling() -> f64 {
    5000.0
}

impl PolicyConfig {
    pub fn none() -> Self {
        PolicyConfig {
            kind: PolicyKind::None,
            base_year: default_base_year(),
            net_zero_year: default_net_zero_year(),
            price_ceiling: default_price_ceiling(),
            luc_linkage: PolicyLinkage::default(),
        }
    }

    pub fn is_capped(&self) -> bool {
        self.kind != PolicyKind::None
    }
}

/// Share of the fossil carbon price applied to land-use carbon fluxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyLinkage {
    pub start_year: i32,
    pub start_fraction: f64,
    pub full_fraction_year: i32,
}

impl Default for PolicyLinkage {
    fn default() -> Self {
        PolicyLinkage {
            start_year: 2025,
            start_fraction: 0.0,
            full_fraction_year: 2100,
        }
    }
}

impl PolicyLinkage {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.start_fraction) {
            return Err(Error::invariant(
                "luc_linkage.start_fraction in [0, 1]",
                self.start_fraction.to_string(),
            ));
        }
        if self.full_fraction_year <= self.start_year {
            return Err(Error::invariant(
                "luc_linkage.start_year < luc_linkage.full_fraction_year",
                format!("{} >= {}", self.start_year, self.full_fraction_year),
            ));
        }
        Ok(())
    }
}

/// Fraction of the fossil carbon price seen by land-use change in `year`.
///
/// Linear from `start_fraction` at `start_year` to 1 at `full_fraction_year`, clamped outside.
pub fn luc_price_fraction(linkage: &PolicyLinkage, year: i32) -> f64 {
    if year <= linkage.start_year {
        return linkage.start_fraction;
    }
    if year >= linkage.full_fraction_year {
        return 1.0;
    }
    let t = f64::from(year - linkage.start_year)
        / f64::from(linkage.full_fraction_year - linkage.start_year);
    linkage.start_fraction + t * (1.0 - linkage.start_fraction)
}

/// Net CO2 ceiling per model year, GtCO2/yr.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CapPath {
    ceilings: BTreeMap<i32, f64>,
}

impl CapPath {
    pub fn from_points(points: impl IntoIterator<Item = (i32, f64)>) -> Self {
        CapPath {
            ceilings: points.into_iter().collect(),
        }
    }

    pub fn get(&self, year: i32) -> Option<f64> {
        self.ceilings.get(&year).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, f64)> + '_ {
        self.ceilings.iter().map(|(&y, &v)| (y, v))
    }

    pub fn first_year(&self) -> Option<i32> {
        self.ceilings.keys().next().copied()
    }

    /// Checks the shape required of a near-term-to-net-zero path: non-increasing,
    /// exactly zero at `net_zero_year` and zero afterwards.
    pub fn validate_nt2nz(&self, net_zero_year: i32) -> Result<()> {
        let values: Vec<(i32, f64)> = self.iter().collect();
        if let Some(w) = values.windows(2).find(|w| w[1].1 > w[0].1) {
            return Err(Error::invariant(
                "NT2NZ cap is non-increasing",
                format!("cap rises from {} in {} to {} in {}", w[0].1, w[0].0, w[1].1, w[1].0),
            ));
        }
        match self.get(net_zero_year) {
            Some(0.0) => {}
            Some(v) => {
                return Err(Error::invariant(
                    "NT2NZ cap reaches exactly 0 at the net-zero year",
                    format!("cap in {net_zero_year} is {v}"),
                ))
            }
            None => {
                return Err(Error::invariant(
                    "NT2NZ cap reaches exactly 0 at the net-zero year",
                    format!("cap has no entry for {net_zero_year}"),
                ))
            }
        }
        if let Some((y, v)) = values.iter().find(|(y, v)| *y > net_zero_year && *v != 0.0) {
            return Err(Error::invariant(
                "NT2NZ cap stays 0 after the net-zero year",
                format!("cap in {y} is {v}"),
            ));
        }
        if values.iter().any(|(_, v)| *v < 0.0 || !v.is_finite()) {
            return Err(Error::invariant(
                "NT2NZ cap is finite and non-negative",
                "negative or non-finite ceiling",
            ));
        }
        Ok(())
    }
}

/// Linear near-term-to-net-zero cap from `base_emissions` in `base_year` to zero in
/// `net_zero_year`, evaluated on every grid year at or after `base_year`.
pub fn nt2nz_cap(
    base_emissions: f64,
    base_year: i32,
    net_zero_year: i32,
    grid: &TimeGrid,
) -> Result<CapPath> {
    if base_year >= net_zero_year {
        return Err(Error::InvalidInput(format!(
            "cap base year {base_year} must precede the net-zero year {net_zero_year}"
        )));
    }
    if base_emissions < 0.0 || !base_emissions.is_finite() {
        return Err(Error::InvalidInput(format!(
            "cap base emissions must be finite and non-negative, got {base_emissions}"
        )));
    }
    let span = f64::from(net_zero_year - base_year);
    let points = grid.years().filter(|&y| y >= base_year).map(|y| {
        let value = if y >= net_zero_year {
            0.0
        } else {
            base_emissions * f64::from(net_zero_year - y) / span
        };
        (y, value)
    });
    Ok(CapPath::from_points(points))
}
