//! Closed-form equilibrium of the linear-quadratic flocking game.
//!
//! Dynamics `dX = a dt + sigma dB`, running reward `-a^2/2`, terminal reward
//! `-(c/2)(X_T - mean(W mu_T(u)))^2`. The value function is quadratic in `x`
//! with gain `phi(t) = c / (c(T - t) + 1)`, and the equilibrium target solves
//! a Katz-type resolvent equation
//!
//! `M = (cT + 1)^{-1} K (I - a K)^{-1} psi`,  `a = cT / (cT + 1)`,
//!
//! discretized here by midpoint collocation on a label grid.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kernel::{Kernel, LabelGrid, Matrix};
use crate::law::{InitialLaw, LabelMap, StateLaw};
use crate::seeds;
use crate::stats::{Estimate, Moments};

/// Paths per parallel work unit; reductions run over units in index order.
pub const PATH_CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqParams {
    pub c: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub sigma: f64,
    pub kernel: Kernel,
    pub initial: InitialLaw,
}

impl LqParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::invalid("c", format!("must be positive, got {}", self.c)));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::invalid("T", format!("must be positive, got {}", self.horizon)));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid("sigma", format!("must be nonnegative, got {}", self.sigma)));
        }
        self.initial.validate()
    }

    pub fn phi(&self, t: f64) -> f64 {
        phi(self.c, self.horizon, t)
    }
}

/// Feedback gain `c / (c(T - t) + 1)`.
pub fn phi(c: f64, horizon: f64, t: f64) -> f64 {
    c / (c * (horizon - t) + 1.0)
}

/// Constant term of the value function, `(sigma^2/2) log(c(T - t) + 1)`.
pub fn psi_val(c: f64, horizon: f64, sigma: f64, t: f64) -> f64 {
    0.5 * sigma * sigma * (c * (horizon - t) + 1.0).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqSolution {
    pub params: LqParams,
    pub labels: LabelGrid,
    /// Equilibrium target `M(u_l)`.
    pub target: Vec<f64>,
    /// `psi(u_l) = E[X_0 | U = u_l]`.
    pub psi: Vec<f64>,
    pub katz_parameter: f64,
    /// `||W||_{L^2}` on the label grid.
    pub l2_grid_norm: f64,
    /// `1 + (cT)^{-1}`.
    pub bound: f64,
    pub margin: f64,
}

impl LqSolution {
    pub fn phi(&self, t: f64) -> f64 {
        self.params.phi(t)
    }

    pub fn psi_val(&self, t: f64) -> f64 {
        psi_val(self.params.c, self.params.horizon, self.params.sigma, t)
    }

    /// `M(u)` by nearest-cell lookup.
    pub fn target_at(&self, u: f64) -> f64 {
        self.target[self.labels.cell_of(u)]
    }

    /// Equilibrium feedback `phi(t) (M(u) - x)`.
    pub fn control(&self, t: f64, u: f64, x: f64) -> f64 {
        self.phi(t) * (self.target_at(u) - x)
    }

    /// Value function `-(phi(t)/2)(x - M(u))^2 - psi_val(t)`.
    pub fn value(&self, t: f64, u: f64, x: f64) -> f64 {
        let d = x - self.target_at(u);
        -0.5 * self.phi(t) * d * d - self.psi_val(t)
    }

    /// Mean and variance of `X_T` given `U = u` and `X_0 = x0` under the
    /// equilibrium feedback.
    pub fn terminal_given(&self, u: f64, x0: f64) -> (f64, f64) {
        let k = self.params.c * self.params.horizon + 1.0;
        let m = self.target_at(u);
        let var = self.params.sigma * self.params.sigma * self.params.horizon / k;
        (m + (x0 - m) / k, var)
    }
}

/// Solves for the equilibrium target on an `L`-cell label grid.
///
/// Fails with [`Error::Solvability`] when the grid `L^2` norm of `W` reaches
/// `1 + (cT)^{-1}` and `psi` is not identically zero; with `psi = 0` the zero
/// target is returned.
pub fn solve_lq(params: &LqParams, labels: usize) -> Result<LqSolution> {
    params.validate()?;
    let grid = LabelGrid::new(labels)?;
    let k = params.kernel.grid_operator(&grid);
    let psi = params.initial.psi(&grid);
    let ct = params.c * params.horizon;
    let a = ct / (ct + 1.0);
    let bound = 1.0 + 1.0 / ct;
    let norm = k.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
    let psi_zero = psi.iter().all(|&p| p == 0.0);
    let solution = |target: Vec<f64>| LqSolution {
        params: params.clone(),
        labels: grid,
        target,
        psi: psi.clone(),
        katz_parameter: a,
        l2_grid_norm: norm,
        bound,
        margin: bound - norm,
    };
    if norm >= bound * (1.0 - 1e-12) {
        if psi_zero {
            return Ok(solution(vec![0.0; labels]));
        }
        return Err(Error::Solvability { norm, bound, resolution: labels });
    }
    let y = resolvent_solve(&k, a, &psi)?;
    let mut target = vec![0.0; labels];
    k.mul_vec(&y, &mut target);
    for m in &mut target {
        *m /= ct + 1.0;
    }
    Ok(solution(target))
}

/// Solves `(I - alpha K) y = rhs`.
fn resolvent_solve(k: &Matrix, alpha: f64, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = k.n();
    let sys = DMatrix::identity(n, n) - k.to_nalgebra() * alpha;
    let lu = sys.lu();
    lu.solve(&DVector::from_column_slice(rhs))
        .map(|v| v.as_slice().to_vec())
        .ok_or(Error::Singular)
}

/// Katz centrality `[(I - alpha K)^{-1} - I] 1` on the label grid.
pub fn katz_centrality(w: &Kernel, alpha: f64, labels: usize) -> Result<Vec<f64>> {
    let grid = LabelGrid::new(labels)?;
    let k = w.grid_operator(&grid);
    let radius = k
        .to_nalgebra()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
        * alpha.abs();
    if radius >= 1.0 {
        return Err(Error::SpectralRadius { radius });
    }
    let y = resolvent_solve(&k, alpha, &vec![1.0; labels])?;
    Ok(y.into_iter().map(|v| v - 1.0).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub u: f64,
    pub target: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McKeanVlasovReport {
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub rows: Vec<ResidualRow>,
}

/// Monte-Carlo check that the simulated equilibrium population reproduces
/// the target: estimates `E[W(u_l, U) X_T]` for every label cell.
pub fn verify_mckean_vlasov(sol: &LqSolution, paths: usize, dt: f64, seed: u64) -> Result<McKeanVlasovReport> {
    if paths == 0 {
        return Err(Error::invalid("paths", "need at least one path"));
    }
    let p = &sol.params;
    let tg = TimeGrid::with_step(p.horizon, dt)?;
    let mids = sol.labels.midpoints();
    let phis: Vec<f64> = (0..tg.steps).map(|k| sol.phi(tg.time(k))).collect();
    let h = tg.dt();
    let noise = p.sigma * h.sqrt();
    let chunks = paths.div_ceil(PATH_CHUNK);
    let partial: Vec<Vec<Moments>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![Moments::default(); mids.len()];
            for path in c * PATH_CHUNK..((c + 1) * PATH_CHUNK).min(paths) {
                let mut rng = seeds::stream_rng(seed, path as u64);
                let u: f64 = rng.random();
                let mut x = p.initial.sample(u, &mut rng);
                let m = sol.target_at(u);
                for &ph in &phis {
                    let z: f64 = rng.sample(StandardNormal);
                    x += ph * (m - x) * h + noise * z;
                }
                for (a, &ul) in acc.iter_mut().zip(&mids) {
                    a.push(p.kernel.eval(ul, u) * x);
                }
            }
            acc
        })
        .collect();
    let mut total = vec![Moments::default(); mids.len()];
    for part in &partial {
        for (t, a) in total.iter_mut().zip(part) {
            t.merge(a);
        }
    }
    let rows = total
        .iter()
        .zip(&mids)
        .zip(&sol.target)
        .map(|((mom, &u), &target)| {
            let Estimate { mean, stderr } = mom.estimate();
            ResidualRow { u, target, estimate: mean, stderr, residual: mean - target }
        })
        .collect();
    Ok(McKeanVlasovReport { paths, dt: h, seed, rows })
}

/// Conditional law of `X_T` given `U = u` in equilibrium, when it is
/// Gaussian: returns `(mean, variance)`.
pub fn terminal_gaussian(sol: &LqSolution, u: f64) -> Result<(f64, f64)> {
    let k = sol.params.c * sol.params.horizon + 1.0;
    let (x0_mean, x0_var) = match &sol.params.initial {
        InitialLaw::Map { map } => (map.eval(u), 0.0),
        InitialLaw::Product { law: StateLaw::Point { x } } => (*x, 0.0),
        InitialLaw::Product { law: StateLaw::Normal { mean, sd, .. } } => (*mean, sd * sd),
        InitialLaw::PerCell { cells } => match &cells[crate::kernel::block_index(u, cells.len())] {
            StateLaw::Point { x } => (*x, 0.0),
            StateLaw::Normal { mean, sd, .. } => (*mean, sd * sd),
            other => return Err(Error::Unsupported(format!("terminal law is not Gaussian for {other:?}"))),
        },
        other => return Err(Error::Unsupported(format!("terminal law is not Gaussian for {other:?}"))),
    };
    let (m, v) = sol.terminal_given(u, x0_mean);
    Ok((m, v + x0_var / (k * k)))
}

/// Deterministic initial map used by the benchmarks, `h(u) = u`.
pub fn identity_map() -> InitialLaw {
    InitialLaw::Map { map: LabelMap::Affine { intercept: 0.0, slope: 1.0 } }
}
