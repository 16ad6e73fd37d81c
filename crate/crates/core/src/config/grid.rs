use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Model periods: every `step` years from `start_year` through `end_year` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub start_year: i32,
    pub end_year: i32,
    #[serde(default = "default_step")]
    pub step: i32,
}

fn default_step() -> i32 {
    5
}

impl TimeGrid {
    pub fn new(start_year: i32, end_year: i32, step: i32) -> Result<Self> {
        let grid = TimeGrid {
            start_year,
            end_year,
            step,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.start_year >= self.end_year {
            return Err(Error::invariant(
                "grid.start_year < grid.end_year",
                format!("{} >= {}", self.start_year, self.end_year),
            ));
        }
        if self.step <= 0 || (self.end_year - self.start_year) % self.step != 0 {
            return Err(Error::invariant(
                "grid.step divides the horizon",
                format!(
                    "step {} does not divide {}..{}",
                    self.step, self.start_year, self.end_year
                ),
            ));
        }
        Ok(())
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        (self.start_year..=self.end_year).step_by(self.step as usize)
    }

    pub fn len(&self) -> usize {
        ((self.end_year - self.start_year) / self.step + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, year: i32) -> bool {
        year >= self.start_year && year <= self.end_year && (year - self.start_year) % self.step == 0
    }

    pub fn index_of(&self, year: i32) -> Option<usize> {
        self.contains(year)
            .then(|| ((year - self.start_year) / self.step) as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_eighteen_periods() {
        let grid = TimeGrid::new(2015, 2100, 5).unwrap();
        assert_eq!(grid.len(), 18);
        assert_eq!(grid.years().last(), Some(2100));
        assert_eq!(grid.index_of(2060), Some(9));
        assert_eq!(grid.index_of(2061), None);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(TimeGrid::new(2100, 2015, 5).is_err());
        assert!(TimeGrid::new(2015, 2101, 5).is_err());
        assert!(TimeGrid::new(2015, 2100, 0).is_err());
    }
}
