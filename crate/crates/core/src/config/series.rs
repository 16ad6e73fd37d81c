use serde::{Deserialize, Serialize};

use super::TimeGrid;

/// A piecewise-linear time series given as `[year, value]` points.
///
/// A single point is a constant. Outside the first and last points the series is held flat.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Series(pub Vec<(i32, f64)>);

impl Series {
    pub fn constant(value: f64) -> Self {
        Series(vec![(2015, value)])
    }

    pub fn at(&self, year: i32) -> f64 {
        let points = &self.0;
        match points.len() {
            0 => 0.0,
            1 => points[0].1,
            _ => {
                if year <= points[0].0 {
                    return points[0].1;
                }
                for pair in points.windows(2) {
                    let (y0, v0) = pair[0];
                    let (y1, v1) = pair[1];
                    if year <= y1 {
                        let t = f64::from(year - y0) / f64::from(y1 - y0);
                        return v0 + t * (v1 - v0);
                    }
                }
                points[points.len() - 1].1
            }
        }
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.0.windows(2).all(|w| w[0].0 < w[1].0)
    }

    /// True when the series is defined over the whole grid (constants always are).
    pub fn covers(&self, grid: &TimeGrid) -> bool {
        match self.0.as_slice() {
            [] => false,
            [_] => true,
            [first, .., last] => first.0 <= grid.start_year && last.0 >= grid.end_year,
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().map(|p| p.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_and_holds_ends() {
        let s = Series(vec![(2020, 1.0), (2050, 4.0)]);
        assert_eq!(s.at(2000), 1.0);
        assert_eq!(s.at(2035), 2.5);
        assert_eq!(s.at(2100), 4.0);
        assert_eq!(Series::constant(3.0).at(2077), 3.0);
    }
}
