//! Initial laws of label and state.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::grid::StateGrid;
use crate::kernel::{block_index, LabelGrid};

fn default_truncation() -> f64 {
    6.0
}

/// A law on the state line. Sampling always consumes exactly one uniform
/// draw so random streams stay aligned across laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StateLaw {
    Point { x: f64 },
    Uniform { lo: f64, hi: f64 },
    /// Normal truncated symmetrically at `truncate` standard deviations.
    Normal {
        mean: f64,
        sd: f64,
        #[serde(default = "default_truncation")]
        truncate: f64,
    },
    /// Weighted atoms `(x, w)`; weights are normalized on use.
    Particles { atoms: Vec<(f64, f64)> },
}

impl StateLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            StateLaw::Point { x } => x.is_finite(),
            StateLaw::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            StateLaw::Normal { mean, sd, truncate } => {
                mean.is_finite() && *sd >= 0.0 && sd.is_finite() && *truncate > 0.0
            }
            StateLaw::Particles { atoms } => {
                atoms.iter().all(|(x, w)| x.is_finite() && *w >= 0.0 && w.is_finite())
                    && atoms.iter().map(|a| a.1).sum::<f64>() > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("law", format!("malformed state law {self:?}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            StateLaw::Point { x } => *x,
            StateLaw::Uniform { lo, hi } => 0.5 * (lo + hi),
            StateLaw::Normal { mean, .. } => *mean,
            StateLaw::Particles { atoms } => {
                let w: f64 = atoms.iter().map(|a| a.1).sum();
                atoms.iter().map(|a| a.0 * a.1).sum::<f64>() / w
            }
        }
    }

    /// Inverse-CDF (or histogram) sample from a single uniform draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let v: f64 = rng.random();
        self.quantile(v)
    }

    /// Generalized inverse CDF at `v` in `[0, 1)`.
    pub fn quantile(&self, v: f64) -> f64 {
        match self {
            StateLaw::Point { x } => *x,
            StateLaw::Uniform { lo, hi } => lo + v * (hi - lo),
            StateLaw::Normal { mean, sd, truncate } => {
                if *sd == 0.0 {
                    return *mean;
                }
                let std = Normal::standard();
                let lo = std.cdf(-truncate);
                let hi = std.cdf(*truncate);
                let p = (lo + v * (hi - lo)).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
                mean + sd * std.inverse_cdf(p).clamp(-truncate, *truncate)
            }
            StateLaw::Particles { atoms } => {
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                let target = v * total;
                let mut acc = 0.0;
                for a in atoms {
                    acc += a.1;
                    if target < acc {
                        return a.0;
                    }
                }
                atoms.iter().rev().find(|a| a.1 > 0.0).map(|a| a.0).unwrap_or(0.0)
            }
        }
    }

    /// `P(X < x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            StateLaw::Point { x: p } => {
                if x > *p { 1.0 } else { 0.0 }
            }
            StateLaw::Uniform { lo, hi } => {
                if hi == lo {
                    if x > *lo { 1.0 } else { 0.0 }
                } else {
                    ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
                }
            }
            StateLaw::Normal { mean, sd, truncate } => {
                if *sd == 0.0 {
                    return if x > *mean { 1.0 } else { 0.0 };
                }
                let z = ((x - mean) / sd).clamp(-truncate, *truncate);
                let std = Normal::standard();
                let lo = std.cdf(-truncate);
                let hi = std.cdf(*truncate);
                ((std.cdf(z) - lo) / (hi - lo)).clamp(0.0, 1.0)
            }
            StateLaw::Particles { atoms } => {
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                atoms.iter().filter(|a| a.0 < x).map(|a| a.1).sum::<f64>() / total
            }
        }
    }

    /// Probability of each state cell `[e_j, e_{j+1})`; mass outside the box
    /// is assigned to the outermost cells.
    pub fn histogram(&self, grid: &StateGrid) -> Vec<f64> {
        let edges = grid.edges();
        let mut cum: Vec<f64> = edges.iter().map(|&e| self.cdf(e)).collect();
        cum[0] = 0.0;
        *cum.last_mut().unwrap() = 1.0;
        cum.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect()
    }
}

/// Deterministic initial state as a function of the label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LabelMap {
    /// `h(u) = intercept + slope * u`.
    Affine { intercept: f64, slope: f64 },
    /// Piecewise constant on equal label bins.
    Table { values: Vec<f64> },
}

impl LabelMap {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            LabelMap::Affine { intercept, slope } => intercept + slope * u,
            LabelMap::Table { values } => values[block_index(u, values.len())],
        }
    }
}

/// Joint law of `(U, X_0)` with `U` uniform on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InitialLaw {
    /// `X_0` independent of `U`.
    Product { law: StateLaw },
    /// `X_0 = h(U)`.
    Map { map: LabelMap },
    /// One state law per equal label bin.
    PerCell { cells: Vec<StateLaw> },
}

impl InitialLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            InitialLaw::Product { law } => law.validate(),
            InitialLaw::Map { map } => match map {
                LabelMap::Affine { intercept, slope } if intercept.is_finite() && slope.is_finite() => Ok(()),
                LabelMap::Table { values } if !values.is_empty() && values.iter().all(|v| v.is_finite()) => Ok(()),
                _ => Err(Error::invalid("initial", "label map must be finite and nonempty")),
            },
            InitialLaw::PerCell { cells } => {
                if cells.is_empty() {
                    return Err(Error::invalid("initial", "per-cell law needs at least one cell"));
                }
                cells.iter().try_for_each(StateLaw::validate)
            }
        }
    }

    /// `E[X_0 | U = u]`.
    pub fn mean_given(&self, u: f64) -> f64 {
        match self {
            InitialLaw::Product { law } => law.mean(),
            InitialLaw::Map { map } => map.eval(u),
            InitialLaw::PerCell { cells } => cells[block_index(u, cells.len())].mean(),
        }
    }

    /// `psi(u_l) = E[X_0 | U = u_l]` at the label-grid midpoints.
    pub fn psi(&self, grid: &LabelGrid) -> Vec<f64> {
        grid.midpoints().into_iter().map(|u| self.mean_given(u)).collect()
    }

    /// Draws `X_0` given `U = u` from one uniform draw.
    pub fn sample<R: Rng + ?Sized>(&self, u: f64, rng: &mut R) -> f64 {
        match self {
            InitialLaw::Product { law } => law.sample(rng),
            InitialLaw::Map { map } => {
                let _: f64 = rng.random();
                map.eval(u)
            }
            InitialLaw::PerCell { cells } => cells[block_index(u, cells.len())].sample(rng),
        }
    }

    /// Law of `X_0` given `U` in `[lo, hi)`, as probabilities of the state
    /// cells.
    pub fn cell_histogram(&self, lo: f64, hi: f64, grid: &StateGrid) -> Vec<f64> {
        match self {
            InitialLaw::Product { law } => law.histogram(grid),
            InitialLaw::Map { map: LabelMap::Affine { intercept, slope } } => {
                let (a, b) = (intercept + slope * lo, intercept + slope * hi);
                StateLaw::Uniform { lo: a.min(b), hi: a.max(b) }.histogram(grid)
            }
            InitialLaw::Map { map: LabelMap::Table { values } } => {
                let atoms = overlaps(values.len(), lo, hi).map(|(k, w)| (values[k], w)).collect();
                StateLaw::Particles { atoms }.histogram(grid)
            }
            InitialLaw::PerCell { cells } => {
                let mut out = vec![0.0; grid.cells];
                for (k, w) in overlaps(cells.len(), lo, hi) {
                    for (o, h) in out.iter_mut().zip(cells[k].histogram(grid)) {
                        *o += w * h;
                    }
                }
                out
            }
        }
    }
}

/// Bins of an equal `bins`-partition meeting `[lo, hi)` with the overlap
/// fractions (summing to one).
fn overlaps(bins: usize, lo: f64, hi: f64) -> impl Iterator<Item = (usize, f64)> {
    let width = hi - lo;
    (0..bins).filter_map(move |k| {
        let (a, b) = (k as f64 / bins as f64, (k + 1) as f64 / bins as f64);
        let ov = (b.min(hi) - a.max(lo)).max(0.0);
        (ov > 0.0).then(|| (k, ov / width))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_quantiles_and_mean() {
        let law = StateLaw::Normal { mean: 1.0, sd: 0.5, truncate: 6.0 };
        assert!((law.quantile(0.5) - 1.0).abs() < 1e-12);
        assert!((law.cdf(1.0) - 0.5).abs() < 1e-12);
        let q = law.quantile(0.8413447460685429);
        assert!((q - 1.5).abs() < 1e-6);
        let mut rng = crate::seeds::rng(1);
        let xs: Vec<f64> = (0..20000).map(|_| law.sample(&mut rng)).collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((m - 1.0).abs() < 3.0 * 0.5 / (20000f64).sqrt());
    }

    #[test]
    fn histograms_sum_to_one() {
        let g = StateGrid::new(-1.0, 1.0, 20).unwrap();
        for law in [
            StateLaw::Point { x: 0.05 },
            StateLaw::Point { x: 5.0 },
            StateLaw::Uniform { lo: -0.3, hi: 0.2 },
            StateLaw::Normal { mean: 0.0, sd: 0.7, truncate: 6.0 },
            StateLaw::Particles { atoms: vec![(0.0, 1.0), (-3.0, 2.0)] },
        ] {
            let h = law.histogram(&g);
            assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-14, "{law:?}");
            assert!(h.iter().all(|&p| p >= 0.0));
        }
        let h = StateLaw::Point { x: 0.05 }.histogram(&g);
        assert_eq!(h[10], 1.0);
        let h = StateLaw::Point { x: 5.0 }.histogram(&g);
        assert_eq!(h[19], 1.0);
        let h = StateLaw::Uniform { lo: 0.0, hi: 0.2 }.histogram(&g);
        assert!((h[10] - 0.5).abs() < 1e-12 && (h[11] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn psi_by_variant() {
        let grid = LabelGrid::new(4).unwrap();
        let map = InitialLaw::Map { map: LabelMap::Affine { intercept: 0.0, slope: 1.0 } };
        assert_eq!(map.psi(&grid), vec![0.125, 0.375, 0.625, 0.875]);
        let prod = InitialLaw::Product { law: StateLaw::Uniform { lo: 1.0, hi: 3.0 } };
        assert_eq!(prod.psi(&grid), vec![2.0; 4]);
        let cells = InitialLaw::PerCell {
            cells: vec![
                StateLaw::Particles { atoms: vec![(1.0, 1.0), (3.0, 3.0)] },
                StateLaw::Point { x: -1.0 },
            ],
        };
        assert_eq!(cells.psi(&grid), vec![2.5, 2.5, -1.0, -1.0]);
    }

    #[test]
    fn affine_cell_histogram_is_uniform_image() {
        let sg = StateGrid::new(0.0, 1.0, 8).unwrap();
        let law = InitialLaw::Map { map: LabelMap::Affine { intercept: 0.0, slope: 1.0 } };
        let h = law.cell_histogram(0.25, 0.5, &sg);
        assert_eq!(h, vec![0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0]);
    }
}
