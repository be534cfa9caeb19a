//! Discrete axes for observation, valuation and action spaces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An ascending set of points spanning `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    /// Equidistant grid with `count` points including both bounds.
    pub fn uniform(lower: f64, upper: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::InvalidGrid(format!("count must be >= 2, got {count}")));
        }
        if !(lower.is_finite() && upper.is_finite()) || lower >= upper {
            return Err(Error::InvalidGrid(format!(
                "bounds must satisfy lower < upper, got [{lower}, {upper}]"
            )));
        }
        let step = (upper - lower) / (count - 1) as f64;
        let mut points: Vec<f64> = (0..count).map(|k| lower + step * k as f64).collect();
        // pin the endpoint against accumulated rounding
        points[count - 1] = upper;
        Ok(Self { points })
    }

    /// Grid from explicit points; they must be strictly increasing.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid("need at least two points".into()));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidGrid("points must be strictly increasing".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn lower(&self) -> f64 {
        self.points[0]
    }

    pub fn upper(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    pub fn value(&self, index: usize) -> f64 {
        self.points[index]
    }

    /// Largest half-gap between neighbours, i.e. the worst-case distance
    /// from a point of the interval to its representative.
    pub fn coarseness(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| 0.5 * (w[1] - w[0]))
            .fold(0.0, f64::max)
    }

    /// Closest grid point to `x`. Values outside the interval are clamped,
    /// exact midpoints resolve to the lower index.
    pub fn nearest(&self, x: f64) -> (usize, f64) {
        let idx = self.nearest_index(x);
        (idx, self.points[idx])
    }

    pub fn nearest_index(&self, x: f64) -> usize {
        let n = self.points.len();
        if !(x > self.points[0]) {
            return 0;
        }
        if x >= self.points[n - 1] {
            return n - 1;
        }
        // first index with point >= x
        let hi = self.points.partition_point(|&p| p < x);
        let lo = hi - 1;
        if x - self.points[lo] <= self.points[hi] - x {
            lo
        } else {
            hi
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_three_points() {
        let g = Grid::uniform(0.0, 1.0, 3).unwrap();
        assert_eq!(g.points(), &[0.0, 0.5, 1.0]);
        assert_eq!(g.coarseness(), 0.25);
    }

    #[test]
    fn uniform_spacing() {
        let g = Grid::uniform(0.0, 1.0, 20).unwrap();
        assert_eq!(g.len(), 20);
        assert!((g.value(1) - 1.0 / 19.0).abs() < 1e-15);
        let g = Grid::uniform(1.0, 2.5, 64).unwrap();
        assert!((g.value(1) - g.value(0) - 1.5 / 63.0).abs() < 1e-15);
        assert_eq!(g.upper(), 2.5);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Grid::uniform(0.0, 1.0, 1).is_err());
        assert!(Grid::uniform(1.0, 0.0, 5).is_err());
        assert!(Grid::uniform(1.0, 1.0, 5).is_err());
        assert!(Grid::from_points(vec![0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn nearest_ties_and_clamps() {
        let g = Grid::uniform(0.0, 1.0, 3).unwrap();
        assert_eq!(g.nearest(0.24), (0, 0.0));
        assert_eq!(g.nearest(0.25), (0, 0.0));
        assert_eq!(g.nearest(0.26), (1, 0.5));
        assert_eq!(g.nearest(1.3), (2, 1.0));
        assert_eq!(g.nearest(-4.0), (0, 0.0));
        assert_eq!(g.nearest(0.75), (1, 0.5));
    }

    #[test]
    fn nearest_is_idempotent() {
        let g = Grid::uniform(-0.3, 2.1, 37).unwrap();
        for i in 0..1000 {
            let x = -0.5 + 3.0 * i as f64 / 999.0;
            let (k, v) = g.nearest(x);
            assert_eq!(g.nearest(v), (k, v));
        }
    }
}
