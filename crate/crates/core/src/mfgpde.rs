//! Forward-backward finite-difference solver for general graphon games.
//!
//! Each label cell carries its own HJB and Fokker-Planck equation on a
//! truncated state box; cells interact only through the neighbourhood
//! measures `W mu_t(u)`. Time stepping is implicit in the diffusion and
//! explicit in the Hamiltonian, with upwind differences chosen by the sign
//! of the drift. The forward step is the exact discrete adjoint of the
//! backward step for a frozen control, so mass is conserved to rounding.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{StateGrid, TimeGrid};
use crate::kernel::{Kernel, LabelGrid, Matrix, PsdReport};
use crate::law::InitialLaw;
use crate::measure::{grid_bl, GridMeasure, LabelStateMeasure, MeasureFlow};
use crate::model::{GameModel, ModelSpec};

/// Largest tolerated change of per-label mass in one time step.
pub const MASS_DRIFT_LIMIT: f64 = 1e-6;

/// Uniform action grid on `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionSet {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl ActionSet {
    pub fn validate(&self) -> Result<()> {
        if !(self.max > self.min) || self.count < 2 {
            return Err(Error::invalid("actions", "need min < max and at least 2 grid points"));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let step = (self.max - self.min) / (self.count - 1) as f64;
        let mut v: Vec<f64> = (0..self.count).map(|i| self.min + i as f64 * step).collect();
        v[self.count - 1] = self.max;
        v
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.min + self.max)
    }
}

/// Discretized graphon game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeProblem {
    pub model: ModelSpec,
    pub kernel: Kernel,
    pub initial: InitialLaw,
    pub actions: ActionSet,
    pub states: StateGrid,
    pub time_steps: usize,
    pub labels: usize,
}

impl PdeProblem {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.initial.validate()?;
        self.actions.validate()?;
        StateGrid::new(self.states.x_min, self.states.x_max, self.states.cells)?;
        if !(self.model.sigma() > 0.0) {
            return Err(Error::invalid("sigma", "the PDE solver needs sigma > 0"));
        }
        LabelGrid::new(self.labels)?;
        TimeGrid::new(self.model.horizon(), self.time_steps)?;
        Ok(())
    }

    pub fn time_grid(&self) -> TimeGrid {
        TimeGrid { horizon: self.model.horizon(), steps: self.time_steps }
    }

    pub fn label_grid(&self) -> LabelGrid {
        LabelGrid::new(self.labels).expect("validated")
    }

    /// Initial masses per label cell, each summing to `1/L`.
    pub fn initial_masses(&self) -> Vec<Vec<f64>> {
        let grid = self.label_grid();
        (0..self.labels)
            .map(|l| {
                let (lo, hi) = grid.cell_bounds(l);
                self.initial
                    .cell_histogram(lo, hi, &self.states)
                    .into_iter()
                    .map(|p| p * grid.weight())
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardOptions {
    pub damping: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions { damping: 0.5, max_iter: 200, tol: 1e-6 }
    }
}

/// Cell masses `p[k][l][j]` over time nodes, label cells and state cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFlow {
    pub nodes: usize,
    pub labels: usize,
    pub states: usize,
    pub mass: Vec<f64>,
}

impl GridFlow {
    fn zeros(nodes: usize, labels: usize, states: usize) -> Self {
        GridFlow { nodes, labels, states, mass: vec![0.0; nodes * labels * states] }
    }

    fn offset(&self, k: usize, l: usize) -> usize {
        (k * self.labels + l) * self.states
    }

    pub fn cell(&self, k: usize, l: usize) -> &[f64] {
        let o = self.offset(k, l);
        &self.mass[o..o + self.states]
    }

    /// Second marginal at node `k`: masses summed over label cells.
    pub fn state_marginal(&self, k: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.states];
        for l in 0..self.labels {
            for (o, p) in out.iter_mut().zip(self.cell(k, l)) {
                *o += p;
            }
        }
        out
    }

    /// Label-cell trajectories into flow layout.
    fn from_cells(cells: Vec<Vec<f64>>, nodes: usize, states: usize) -> Self {
        let labels = cells.len();
        let mut f = GridFlow::zeros(nodes, labels, states);
        for (l, traj) in cells.into_iter().enumerate() {
            for k in 0..nodes {
                let o = f.offset(k, l);
                f.mass[o..o + states].copy_from_slice(&traj[k * states..(k + 1) * states]);
            }
        }
        f
    }

    /// `max_k sum_l ||p[k][l] - q[k][l]||_BL` on the state grid.
    pub fn bl_gap(&self, other: &GridFlow, points: &[f64]) -> f64 {
        (0..self.nodes)
            .into_par_iter()
            .map(|k| (0..self.labels).map(|l| grid_bl(points, self.cell(k, l), other.cell(k, l))).sum::<f64>())
            .reduce(|| 0.0, f64::max)
    }

    /// Largest mass, over time nodes, in the outer `max(1, J/50)` cells at
    /// either end of the box.
    pub fn boundary_mass(&self) -> f64 {
        let w = (self.states / 50).max(1);
        (0..self.nodes)
            .map(|k| {
                let m = self.state_marginal(k);
                m[..w].iter().sum::<f64>() + m[self.states - w..].iter().sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    fn blend(&mut self, other: &GridFlow, theta: f64) {
        for (a, b) in self.mass.iter_mut().zip(&other.mass) {
            *a = (1.0 - theta) * *a + theta * b;
        }
    }
}

impl GridFlow {
    /// Densities `p / dx` at node `k` for label cell `l`.
    pub fn density(&self, k: usize, l: usize, dx: f64) -> Vec<f64> {
        self.cell(k, l).iter().map(|p| p / dx).collect()
    }

    /// Label-state measures with atoms at (label midpoint, state centre).
    pub fn to_measure_flow(&self, time: &TimeGrid, states: &StateGrid) -> Result<MeasureFlow> {
        let grid = LabelGrid::new(self.labels)?;
        let xs = states.centers();
        let nodes = (0..self.nodes)
            .map(|k| {
                let atoms = (0..self.labels).flat_map(|l| {
                    let u = grid.midpoint(l);
                    self.cell(k, l)
                        .iter()
                        .zip(&xs)
                        .filter(|(p, _)| **p > 0.0)
                        .map(move |(&p, &x)| (u, x, p))
                        .collect::<Vec<_>>()
                });
                LabelStateMeasure::from_atoms(atoms)
            })
            .collect::<Result<Vec<_>>>()?;
        MeasureFlow::new(time.times(), nodes)
    }
}

/// Feedback control `a(t, x)` of one label, piecewise constant in both
/// arguments: the left time node and the state cell containing `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlTable {
    pub time: TimeGrid,
    pub states: StateGrid,
    /// `a[k][j]`.
    pub values: Vec<f64>,
}

impl ControlTable {
    pub fn new(time: TimeGrid, states: StateGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != (time.steps + 1) * states.cells {
            return Err(Error::invalid("control", "table size does not match the grids"));
        }
        Ok(ControlTable { time, states, values })
    }

    #[inline]
    pub fn lookup(&self, t: f64, x: f64) -> f64 {
        let k = self.time.node_at_or_before(t);
        self.values[k * self.states.cells + self.states.cell_of(x)]
    }
}

/// Values or controls `z[k][l][j]` over time nodes, label cells and states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub nodes: usize,
    pub labels: usize,
    pub states: usize,
    pub data: Vec<f64>,
}

impl GridField {
    pub fn at(&self, k: usize, l: usize, j: usize) -> f64 {
        self.data[(k * self.labels + l) * self.states + j]
    }

    pub fn slice(&self, k: usize, l: usize) -> &[f64] {
        let o = (k * self.labels + l) * self.states;
        &self.data[o..o + self.states]
    }

    fn from_cells(cells: &[Vec<f64>], nodes: usize, states: usize) -> Self {
        let labels = cells.len();
        let mut data = vec![0.0; nodes * labels * states];
        for (l, traj) in cells.iter().enumerate() {
            for k in 0..nodes {
                let o = (k * labels + l) * states;
                data[o..o + states].copy_from_slice(&traj[k * states..(k + 1) * states]);
            }
        }
        GridField { nodes, labels, states, data }
    }

    fn cell_trajectory(&self, l: usize) -> Vec<f64> {
        (0..self.nodes).flat_map(|k| self.slice(k, l).iter().copied()).collect()
    }
}

/// Single-label time stepping shared by the HJB and Fokker-Planck solvers.
#[derive(Debug, Clone)]
pub struct Scheme {
    model: ModelSpec,
    states: StateGrid,
    time: TimeGrid,
    xs: Vec<f64>,
    actions: Vec<f64>,
    substeps: usize,
    // Thomas factors of I - dt_sub (sigma^2/2) D2 with reflecting ends
    sub_diag: f64,
    diag: Vec<f64>,
    c_prime: Vec<f64>,
}

impl Scheme {
    pub fn new(model: &ModelSpec, states: StateGrid, time: TimeGrid, actions: ActionSet) -> Result<Self> {
        actions.validate()?;
        let xs = states.centers();
        let acts = actions.values();
        let dx = states.dx();
        let mut bmax: f64 = 0.0;
        for k in 0..=time.steps {
            let t = time.time(k);
            for &x in &xs {
                for &a in &acts {
                    bmax = bmax.max(model.drift(t, x, a).abs());
                }
            }
        }
        let courant = time.dt() * bmax / dx;
        let substeps = (courant - 1e-12).ceil().max(1.0) as usize;
        let dts = time.dt() / substeps as f64;
        let r = dts * 0.5 * model.sigma() * model.sigma() / (dx * dx);
        let j = xs.len();
        let diag: Vec<f64> = (0..j).map(|i| if i == 0 || i == j - 1 { 1.0 + r } else { 1.0 + 2.0 * r }).collect();
        let mut c_prime = vec![0.0; j];
        let mut denom = diag[0];
        c_prime[0] = -r / denom;
        for i in 1..j {
            denom = diag[i] + r * c_prime[i - 1];
            c_prime[i] = -r / denom;
        }
        Ok(Scheme { model: model.clone(), states, time, xs, actions: acts, substeps, sub_diag: -r, diag, c_prime })
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn points(&self) -> &[f64] {
        &self.xs
    }

    pub fn states(&self) -> StateGrid {
        self.states
    }

    pub fn time(&self) -> TimeGrid {
        self.time
    }

    pub fn actions(&self) -> &[f64] {
        &self.actions
    }

    fn sub_dt(&self) -> f64 {
        self.time.dt() / self.substeps as f64
    }

    /// Solves the symmetric tridiagonal diffusion system in place.
    fn diffuse(&self, v: &mut [f64]) {
        let j = v.len();
        let a = self.sub_diag;
        let mut d_prime = vec![0.0; j];
        let mut denom = self.diag[0];
        d_prime[0] = v[0] / denom;
        for i in 1..j {
            denom = self.diag[i] - a * self.c_prime[i - 1];
            d_prime[i] = (v[i] - a * d_prime[i - 1]) / denom;
        }
        v[j - 1] = d_prime[j - 1];
        for i in (0..j - 1).rev() {
            v[i] = d_prime[i] - self.c_prime[i] * v[i + 1];
        }
    }

    /// Upwind `b D v` at state `j` (zero difference across the box edge).
    #[inline]
    fn transport(&self, v: &[f64], j: usize, b: f64, inv_dx: f64) -> f64 {
        if b >= 0.0 {
            if j + 1 < v.len() { b * (v[j + 1] - v[j]) * inv_dx } else { 0.0 }
        } else if j > 0 {
            b * (v[j] - v[j - 1]) * inv_dx
        } else {
            0.0
        }
    }

    /// Hamiltonian and maximizing action at every state for time `t`.
    /// Ties go to the smallest action.
    fn hamiltonian(&self, t: f64, v: &[f64], m: &GridMeasure, h: &mut [f64], arg: &mut [f64]) {
        let inv_dx = 1.0 / self.states.dx();
        for (j, &x) in self.xs.iter().enumerate() {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = self.actions[0];
            for &a in &self.actions {
                let b = self.model.drift(t, x, a);
                let val = self.transport(v, j, b, inv_dx) + self.model.running_reward(t, x, m, a);
                if val > best {
                    best = val;
                    best_a = a;
                }
            }
            h[j] = best;
            arg[j] = best_a;
        }
    }

    /// Backward HJB sweep for one label against neighbourhood weights
    /// `measure(k)` on the state grid. Returns value and control,
    /// each laid out as `[k][j]`.
    pub fn hjb(&self, measure: &dyn Fn(usize) -> Vec<f64>) -> (Vec<f64>, Vec<f64>) {
        let (kk, jj) = (self.time.steps, self.xs.len());
        let mut value = vec![0.0; (kk + 1) * jj];
        let mut control = vec![0.0; (kk + 1) * jj];
        let mut h = vec![0.0; jj];
        let mut arg = vec![0.0; jj];

        let m_t = measure(kk);
        let gm = GridMeasure::new(&self.xs, m_t);
        let mut v: Vec<f64> = self.xs.iter().map(|&x| self.model.terminal_reward(x, &gm)).collect();
        self.hamiltonian(self.time.horizon, &v, &gm, &mut h, &mut arg);
        value[kk * jj..].copy_from_slice(&v);
        control[kk * jj..].copy_from_slice(&arg);

        let dts = self.sub_dt();
        for k in (0..kk).rev() {
            let gm = GridMeasure::new(&self.xs, measure(k));
            for s in (0..self.substeps).rev() {
                let t = self.time.time(k) + s as f64 * dts;
                self.diffuse(&mut v);
                self.hamiltonian(t, &v, &gm, &mut h, &mut arg);
                for (vj, hj) in v.iter_mut().zip(&h) {
                    *vj += dts * hj;
                }
            }
            value[k * jj..(k + 1) * jj].copy_from_slice(&v);
            control[k * jj..(k + 1) * jj].copy_from_slice(&arg);
        }
        (value, control)
    }

    /// Value of a fixed feedback `control[k][j]` against `measure(k)`,
    /// computed with the same scheme as [`Scheme::hjb`].
    pub fn evaluate(&self, measure: &dyn Fn(usize) -> Vec<f64>, control: &[f64]) -> Vec<f64> {
        let (kk, jj) = (self.time.steps, self.xs.len());
        let inv_dx = 1.0 / self.states.dx();
        let mut value = vec![0.0; (kk + 1) * jj];
        let gm = GridMeasure::new(&self.xs, measure(kk));
        let mut v: Vec<f64> = self.xs.iter().map(|&x| self.model.terminal_reward(x, &gm)).collect();
        value[kk * jj..].copy_from_slice(&v);
        let dts = self.sub_dt();
        let mut h = vec![0.0; jj];
        for k in (0..kk).rev() {
            let gm = GridMeasure::new(&self.xs, measure(k));
            let acts = &control[k * jj..(k + 1) * jj];
            for s in (0..self.substeps).rev() {
                let t = self.time.time(k) + s as f64 * dts;
                self.diffuse(&mut v);
                for (j, &x) in self.xs.iter().enumerate() {
                    let b = self.model.drift(t, x, acts[j]);
                    h[j] = self.transport(&v, j, b, inv_dx) + self.model.running_reward(t, x, &gm, acts[j]);
                }
                for (vj, hj) in v.iter_mut().zip(&h) {
                    *vj += dts * hj;
                }
            }
            value[k * jj..(k + 1) * jj].copy_from_slice(&v);
        }
        value
    }

    /// Forward Fokker-Planck sweep for one label from masses `p0` under
    /// `control[k][j]`, held at the left node over each step. Returns
    /// masses laid out as `[k][j]`.
    pub fn fp(&self, p0: &[f64], control: &[f64], label: usize) -> Result<Vec<f64>> {
        let (kk, jj) = (self.time.steps, self.xs.len());
        let ratio = self.sub_dt() / self.states.dx();
        let mut out = vec![0.0; (kk + 1) * jj];
        let mut p = p0.to_vec();
        out[..jj].copy_from_slice(&p);
        let mut b = vec![0.0; jj];
        let mut q = vec![0.0; jj];
        for k in 0..kk {
            let before: f64 = p.iter().sum();
            let acts = &control[k * jj..(k + 1) * jj];
            for s in 0..self.substeps {
                let t = self.time.time(k) + s as f64 * self.sub_dt();
                for (j, &x) in self.xs.iter().enumerate() {
                    b[j] = self.model.drift(t, x, acts[j]);
                }
                q.copy_from_slice(&p);
                for j in 0..jj - 1 {
                    // flux across the face between j and j+1
                    let flux = b[j].max(0.0) * p[j] + b[j + 1].min(0.0) * p[j + 1];
                    q[j] -= ratio * flux;
                    q[j + 1] += ratio * flux;
                }
                self.diffuse(&mut q);
                std::mem::swap(&mut p, &mut q);
            }
            let after: f64 = p.iter().sum();
            let drift = (after - before).abs();
            if drift > MASS_DRIFT_LIMIT {
                return Err(Error::MassDrift { step: k, label, drift });
            }
            out[(k + 1) * jj..(k + 2) * jj].copy_from_slice(&p);
        }
        Ok(out)
    }
}

/// Solution of the discretized fixed-point problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumField {
    pub problem: PdeProblem,
    /// `v[k][l][j]`.
    pub value: GridField,
    /// `alpha*[k][l][j]`.
    pub control: GridField,
    /// Flow the value and control were computed against.
    pub flow: GridFlow,
    /// Flow generated by `control` from the initial law.
    pub induced: GridFlow,
    pub iterations: usize,
    /// Damped successive-flow gaps, one per iteration.
    pub gaps: Vec<f64>,
    pub converged: bool,
    pub substeps: usize,
    pub boundary_mass: f64,
    /// Discretized monotonicity diagnostic; when it fails, other fixed
    /// points may exist and only the iterate reached is reported.
    pub psd: PsdReport,
}

/// Solver state shared across Picard iterations.
pub struct PdeSolver {
    problem: PdeProblem,
    scheme: Scheme,
    wmat: Matrix,
    p0: Vec<Vec<f64>>,
}

impl PdeSolver {
    pub fn new(problem: &PdeProblem) -> Result<Self> {
        problem.validate()?;
        let scheme = Scheme::new(&problem.model, problem.states, problem.time_grid(), problem.actions)?;
        let wmat = problem.kernel.discretize(&problem.label_grid());
        let p0 = problem.initial_masses();
        Ok(PdeSolver { problem: problem.clone(), scheme, wmat, p0 })
    }

    pub fn scheme(&self) -> &Scheme {
        &self.scheme
    }

    pub fn problem(&self) -> &PdeProblem {
        &self.problem
    }

    /// Neighbourhood weights `W mu_{t_k}(u_l)` on the state grid.
    pub fn neighborhood(&self, flow: &GridFlow, k: usize, l: usize) -> Vec<f64> {
        let mut out = vec![0.0; flow.states];
        for (lp, &w) in self.wmat.row(l).iter().enumerate() {
            if w != 0.0 {
                for (o, p) in out.iter_mut().zip(flow.cell(k, lp)) {
                    *o += w * p;
                }
            }
        }
        out
    }

    /// Backward sweep for every label cell against `flow`.
    pub fn hjb_backward(&self, flow: &GridFlow) -> (GridField, GridField) {
        let nodes = self.problem.time_steps + 1;
        let j = self.problem.states.cells;
        let per: Vec<(Vec<f64>, Vec<f64>)> = (0..self.problem.labels)
            .into_par_iter()
            .map(|l| self.scheme.hjb(&|k| self.neighborhood(flow, k, l)))
            .collect();
        let (values, controls): (Vec<_>, Vec<_>) = per.into_iter().unzip();
        (GridField::from_cells(&values, nodes, j), GridField::from_cells(&controls, nodes, j))
    }

    /// Forward sweep for every label cell under `control`.
    pub fn fp_forward(&self, control: &GridField) -> Result<GridFlow> {
        let nodes = self.problem.time_steps + 1;
        let j = self.problem.states.cells;
        let cells: Vec<Vec<f64>> = (0..self.problem.labels)
            .into_par_iter()
            .map(|l| self.scheme.fp(&self.p0[l], &control.cell_trajectory(l), l))
            .collect::<Result<_>>()?;
        Ok(GridFlow::from_cells(cells, nodes, j))
    }

    /// Flow under the constant midpoint action.
    pub fn midpoint_flow(&self) -> Result<GridFlow> {
        let nodes = self.problem.time_steps + 1;
        let j = self.problem.states.cells;
        let a = self.problem.actions.midpoint();
        let control = GridField { nodes, labels: self.problem.labels, states: j, data: vec![a; nodes * self.problem.labels * j] };
        self.fp_forward(&control)
    }

    /// Value of `control` against a frozen `flow`, label by label.
    pub fn evaluate(&self, flow: &GridFlow, control: &GridField) -> GridField {
        let nodes = self.problem.time_steps + 1;
        let j = self.problem.states.cells;
        let values: Vec<Vec<f64>> = (0..self.problem.labels)
            .into_par_iter()
            .map(|l| self.scheme.evaluate(&|k| self.neighborhood(flow, k, l), &control.cell_trajectory(l)))
            .collect();
        GridField::from_cells(&values, nodes, j)
    }

    /// Damped Picard iteration on the measure flow.
    pub fn solve(&self, opts: &PicardOptions) -> Result<EquilibriumField> {
        if !(opts.tol > 0.0) {
            return Err(Error::invalid("tol", "must be positive"));
        }
        if !(opts.damping > 0.0 && opts.damping <= 1.0) {
            return Err(Error::invalid("damping", "must lie in (0, 1]"));
        }
        if opts.max_iter == 0 {
            return Err(Error::invalid("max_iter", "need at least one iteration"));
        }
        let psd = self.problem.kernel.psd_check(&self.problem.label_grid(), 1e-9);
        let points = self.scheme.points().to_vec();
        let mut mu = self.midpoint_flow()?;
        let mut gaps = Vec::new();
        let mut best: Option<(f64, GridField, GridField, GridFlow, GridFlow)> = None;
        for it in 1..=opts.max_iter {
            let (value, control) = self.hjb_backward(&mu);
            let nu = self.fp_forward(&control)?;
            let gap = opts.damping * nu.bl_gap(&mu, &points);
            gaps.push(gap);
            let decoupled = !self.problem.model.uses_measure();
            if decoupled || gap <= opts.tol {
                let flow = if decoupled { nu.clone() } else { mu };
                return Ok(self.field(value, control, flow, nu, it, gaps, true, psd));
            }
            let mut next = mu.clone();
            next.blend(&nu, opts.damping);
            if best.as_ref().is_none_or(|b| gap < b.0) {
                best = Some((gap, value, control, mu, nu));
            }
            mu = next;
        }
        let (_, value, control, flow, induced) = best.expect("at least one iteration");
        Ok(self.field(value, control, flow, induced, opts.max_iter, gaps, false, psd))
    }

    #[allow(clippy::too_many_arguments)]
    fn field(
        &self,
        value: GridField,
        control: GridField,
        flow: GridFlow,
        induced: GridFlow,
        iterations: usize,
        gaps: Vec<f64>,
        converged: bool,
        psd: PsdReport,
    ) -> EquilibriumField {
        let boundary_mass = flow.boundary_mass().max(induced.boundary_mass());
        EquilibriumField {
            problem: self.problem.clone(),
            value,
            control,
            flow,
            induced,
            iterations,
            gaps,
            converged,
            substeps: self.scheme.substeps,
            boundary_mass,
            psd,
        }
    }
}

impl EquilibriumField {
    /// Control of label cell `l` as a lookup table.
    pub fn control_table(&self, l: usize) -> ControlTable {
        ControlTable {
            time: self.problem.time_grid(),
            states: self.problem.states,
            values: self.control.cell_trajectory(l),
        }
    }

    /// Terminal-condition residual `max |v[K] - g(x, W mu_T(u))|`.
    pub fn terminal_residual(&self) -> Result<f64> {
        let solver = PdeSolver::new(&self.problem)?;
        let xs = self.problem.states.centers();
        let k = self.problem.time_steps;
        let mut worst: f64 = 0.0;
        for l in 0..self.problem.labels {
            let gm = GridMeasure::new(&xs, solver.neighborhood(&self.flow, k, l));
            for (j, &x) in xs.iter().enumerate() {
                worst = worst.max((self.value.at(k, l, j) - self.problem.model.terminal_reward(x, &gm)).abs());
            }
        }
        Ok(worst)
    }
}

/// Runs the fixed-point solver on a problem.
pub fn solve_fixed_point(problem: &PdeProblem, opts: &PicardOptions) -> Result<EquilibriumField> {
    PdeSolver::new(problem)?.solve(opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductReport {
    pub bins: usize,
    /// Largest BL distance between normalized terminal state laws of two
    /// label bins.
    pub spread: f64,
    pub constant_degree: bool,
}

/// Spread of terminal conditional state laws across equal label bins.
pub fn product_structure_check(field: &EquilibriumField, bins: usize) -> Result<ProductReport> {
    if bins == 0 {
        return Err(Error::invalid("bins", "need at least one bin"));
    }
    let flow = &field.flow;
    let grid = field.problem.label_grid();
    let k = flow.nodes - 1;
    let mut laws = vec![vec![0.0; flow.states]; bins];
    for l in 0..flow.labels {
        let b = crate::kernel::block_index(grid.midpoint(l), bins);
        for (o, p) in laws[b].iter_mut().zip(flow.cell(k, l)) {
            *o += p;
        }
    }
    let laws: Vec<Vec<f64>> = laws
        .into_iter()
        .filter_map(|v| {
            let m: f64 = v.iter().sum();
            (m > 0.0).then(|| v.into_iter().map(|p| p / m).collect())
        })
        .collect();
    let points = field.problem.states.centers();
    let mut spread: f64 = 0.0;
    for a in 0..laws.len() {
        for b in a + 1..laws.len() {
            spread = spread.max(grid_bl(&points, &laws[a], &laws[b]));
        }
    }
    Ok(ProductReport { bins, spread, constant_degree: field.problem.kernel.is_constant_degree(1e-9) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::StateLaw;

    fn problem(model: ModelSpec, kernel: Kernel, initial: InitialLaw, j: usize, k: usize, l: usize) -> PdeProblem {
        PdeProblem {
            model,
            kernel,
            initial,
            actions: ActionSet { min: -2.0, max: 2.0, count: 41 },
            states: StateGrid::new(-3.0, 3.0, j).unwrap(),
            time_steps: k,
            labels: l,
        }
    }

    #[test]
    fn thomas_solver_inverts_the_diffusion_matrix() {
        let model = ModelSpec::DecoupledTest { c: 1.0, z0: 0.0, horizon: 1.0, sigma: 0.8 };
        let s = Scheme::new(&model, StateGrid::new(0.0, 1.0, 7).unwrap(), TimeGrid::new(1.0, 3).unwrap(), ActionSet { min: -1.0, max: 1.0, count: 3 }).unwrap();
        let rhs = vec![1.0, -2.0, 0.5, 3.0, 0.0, 1.0, 2.0];
        let mut v = rhs.clone();
        s.diffuse(&mut v);
        let r = -s.sub_diag;
        for i in 0..7 {
            let mut lhs = s.diag[i] * v[i];
            if i > 0 {
                lhs -= r * v[i - 1];
            }
            if i < 6 {
                lhs -= r * v[i + 1];
            }
            assert!((lhs - rhs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn substeps_when_courant_exceeds_one() {
        let model = ModelSpec::DecoupledTest { c: 1.0, z0: 0.0, horizon: 1.0, sigma: 0.5 };
        let s = Scheme::new(&model, StateGrid::new(0.0, 1.0, 100).unwrap(), TimeGrid::new(1.0, 10).unwrap(), ActionSet { min: -1.0, max: 1.0, count: 3 }).unwrap();
        // dt max|b| / dx = 0.1 / 0.01 = 10
        assert_eq!(s.substeps(), 10);
    }

    #[test]
    fn mass_is_conserved_per_label() {
        let model = ModelSpec::LqTruncated { c: 1.0, horizon: 1.0, sigma: 0.4 };
        let p = problem(model, Kernel::constant(1.0).unwrap(), InitialLaw::Product { law: StateLaw::Normal { mean: 0.5, sd: 0.3, truncate: 6.0 } }, 60, 40, 3);
        let solver = PdeSolver::new(&p).unwrap();
        let flow = solver.midpoint_flow().unwrap();
        for k in 0..flow.nodes {
            for l in 0..3 {
                let m: f64 = flow.cell(k, l).iter().sum();
                assert!((m - 1.0 / 3.0).abs() < 1e-12);
                assert!(flow.cell(k, l).iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn negligible_rewards_give_zero_value_and_control() {
        let model = ModelSpec::CrowdAversion { kappa: 0.0, h: 0.1, c: 1e-300, z: 0.0, horizon: 1.0, sigma: 0.3 };
        let p = problem(model, Kernel::constant(1.0).unwrap(), InitialLaw::Product { law: StateLaw::Point { x: 0.0 } }, 30, 10, 2);
        let solver = PdeSolver::new(&p).unwrap();
        let flow = solver.midpoint_flow().unwrap();
        let (v, a) = solver.hjb_backward(&flow);
        assert!(v.data.iter().all(|x| x.abs() < 1e-290));
        assert!(a.data.iter().all(|&x| x == 0.0));
    }
}
