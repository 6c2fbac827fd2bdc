//! Uniform state and time grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `J` equal cells on `[x_min, x_max]`, represented by their centres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub cells: usize,
}

impl StateGrid {
    pub fn new(x_min: f64, x_max: f64, cells: usize) -> Result<Self> {
        if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::invalid("box", format!("need x_min < x_max, got [{x_min}, {x_max}]")));
        }
        if cells < 3 {
            return Err(Error::invalid("states", "state grid needs at least 3 cells"));
        }
        Ok(StateGrid { x_min, x_max, cells })
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.cells as f64
    }

    pub fn center(&self, j: usize) -> f64 {
        self.x_min + (j as f64 + 0.5) * self.dx()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.cells).map(|j| self.center(j)).collect()
    }

    /// Cell edges `e_0 = x_min < ... < e_J = x_max`.
    pub fn edges(&self) -> Vec<f64> {
        let dx = self.dx();
        let mut e: Vec<f64> = (0..=self.cells).map(|j| self.x_min + j as f64 * dx).collect();
        e[self.cells] = self.x_max;
        e
    }

    /// Cell containing `x`, clamped to the box.
    pub fn cell_of(&self, x: f64) -> usize {
        let k = ((x - self.x_min) / self.dx()).floor();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.cells - 1)
        }
    }
}

/// `K` equal steps on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::invalid("T", format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::invalid("steps", "need at least one time step"));
        }
        Ok(TimeGrid { horizon, steps })
    }

    /// Grid whose step is the largest `T/K` not exceeding `dt`.
    pub fn with_step(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid("dt", format!("time step must be positive, got {dt}")));
        }
        let steps = ((horizon / dt) - 1e-9).ceil().max(1.0) as usize;
        TimeGrid::new(horizon, steps)
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }

    /// Left node of the step containing `t`.
    pub fn node_at_or_before(&self, t: f64) -> usize {
        let k = (t / self.dt() + 1e-9).floor();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.steps)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_grid_geometry() {
        let g = StateGrid::new(-4.0, 6.0, 200).unwrap();
        assert!((g.dx() - 0.05).abs() < 1e-15);
        assert!((g.center(0) + 3.975).abs() < 1e-12);
        assert_eq!(g.cell_of(-10.0), 0);
        assert_eq!(g.cell_of(6.0), 199);
        assert_eq!(g.cell_of(0.01), 80);
        assert_eq!(g.edges().len(), 201);
        assert!(StateGrid::new(1.0, 1.0, 10).is_err());
    }

    #[test]
    fn time_grid_rounding() {
        let t = TimeGrid::with_step(1.0, 0.005).unwrap();
        assert_eq!(t.steps, 200);
        assert_eq!(t.time(200), 1.0);
        assert_eq!(t.node_at_or_before(0.0125), 2);
        assert_eq!(TimeGrid::with_step(1.0, 0.3).unwrap().steps, 4);
        assert!(TimeGrid::with_step(1.0, 0.0).is_err());
    }
}
