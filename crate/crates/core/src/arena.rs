//! Monte-Carlo simulation of the finite-player game.
//!
//! Drift and diffusion carry no measure coupling, so a player's path depends
//! only on its own rule, initial draw and Brownian increments. Deviations are
//! therefore simulated alongside the incumbent profile on the same noise,
//! with the deviator scored against neighbourhoods built from the incumbent
//! co-player states.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{StateGrid, TimeGrid};
use crate::law::InitialLaw;
use crate::lqflock::{phi, LqSolution};
use crate::measure::{Neighborhood, ParticleMeasure};
use crate::mfgpde::{ControlTable, EquilibriumField};
use crate::model::{GameModel, ModelSpec};
use crate::netgen::{InteractionMatrix, LabelAssignment};
use crate::seeds;
use crate::stats::{Estimate, Moments};

/// Paths per parallel work unit.
pub const PATH_CHUNK: usize = 64;

/// Decentralized Markov feedback `a(t, x)` of a single player.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Constant(f64),
    /// `phi(t) (target - x)` with the gain of the tracking problem.
    Tracking { c: f64, horizon: f64, target: f64 },
    Table(Arc<ControlTable>),
}

impl Policy {
    #[inline]
    pub fn action(&self, t: f64, x: f64) -> f64 {
        match self {
            Policy::Constant(a) => *a,
            Policy::Tracking { c, horizon, target } => phi(*c, *horizon, t) * (target - x),
            Policy::Table(table) => table.lookup(t, x),
        }
    }
}

/// One rule per player.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyProfile {
    rules: Vec<Policy>,
}

impl StrategyProfile {
    pub fn new(rules: Vec<Policy>) -> Result<Self> {
        if rules.is_empty() {
            return Err(Error::invalid("profile", "need at least one player"));
        }
        Ok(StrategyProfile { rules })
    }

    /// Player `i` tracks `M(u_i)` with the closed-form gain.
    pub fn from_lq(sol: &LqSolution, labels: &LabelAssignment) -> Self {
        let p = &sol.params;
        let rules = labels
            .labels()
            .iter()
            .map(|&u| Policy::Tracking { c: p.c, horizon: p.horizon, target: sol.target_at(u) })
            .collect();
        StrategyProfile { rules }
    }

    /// Player `i` reads the equilibrium control of the label cell of `u_i`.
    pub fn from_field(field: &EquilibriumField, labels: &LabelAssignment) -> Self {
        let grid = field.problem.label_grid();
        let tables: Vec<Arc<ControlTable>> = (0..grid.len()).map(|l| Arc::new(field.control_table(l))).collect();
        let rules = labels.labels().iter().map(|&u| Policy::Table(tables[grid.cell_of(u)].clone())).collect();
        StrategyProfile { rules }
    }

    pub fn uniform(n: usize, rule: Policy) -> Self {
        StrategyProfile { rules: vec![rule; n] }
    }

    /// Same profile with player `i` switched to `rule`.
    pub fn with_deviation(&self, i: usize, rule: Policy) -> Result<Self> {
        if i >= self.rules.len() {
            return Err(Error::invalid("player", format!("index {i} out of range")));
        }
        let mut rules = self.rules.clone();
        rules[i] = rule;
        Ok(StrategyProfile { rules })
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rule(&self, i: usize) -> &Policy {
        &self.rules[i]
    }
}

/// Replacement rule for one player, scored on the incumbent's noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Deviation {
    pub player: usize,
    pub rule: Policy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub keep_paths: bool,
    /// Per-player state histograms at every time node on this grid.
    pub histograms: Option<StateGrid>,
    /// Times at which the states of path 0 are recorded.
    pub snapshot_times: Vec<f64>,
}

impl SimOptions {
    pub fn new(paths: usize, dt: f64, seed: u64) -> Self {
        SimOptions { paths, dt, seed, keep_paths: false, histograms: None, snapshot_times: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationResult {
    pub player: usize,
    pub objective: Estimate,
    /// Paired difference `J(deviation) - J(incumbent)`.
    pub gain: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub node: usize,
    pub states: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub n: usize,
    pub paths: usize,
    pub time: TimeGrid,
    pub seed: u64,
    pub objectives: Vec<Estimate>,
    pub deviations: Vec<DeviationResult>,
    /// `E[X^i_T]` per player.
    pub terminal_means: Vec<Estimate>,
    /// `X[path][k][i]` when requested.
    pub states: Option<Vec<f64>>,
    /// `H[i][k][j]`: probability of state cell `j` at node `k` for player
    /// `i`, when requested.
    pub histograms: Option<Vec<f64>>,
    pub snapshots: Vec<Snapshot>,
}

impl SimulationResult {
    pub fn objective(&self, i: usize) -> Estimate {
        self.objectives[i]
    }

    pub fn state(&self, path: usize, k: usize, i: usize) -> Option<f64> {
        self.states.as_ref().map(|s| s[(path * (self.time.steps + 1) + k) * self.n + i])
    }

    pub fn histogram(&self, i: usize, k: usize, cells: usize) -> Option<&[f64]> {
        self.histograms.as_ref().map(|h| {
            let o = (i * (self.time.steps + 1) + k) * cells;
            &h[o..o + cells]
        })
    }
}

/// LQ model of the closed-form solution, with the raw neighbourhood mean
/// as terminal target.
pub fn lq_model(sol: &LqSolution) -> ModelSpec {
    let p = &sol.params;
    ModelSpec::LqTruncated { c: p.c, horizon: p.horizon, sigma: p.sigma }
}

struct Partial {
    objectives: Vec<Moments>,
    dev_objectives: Vec<Moments>,
    dev_gains: Vec<Moments>,
    terminal: Vec<Moments>,
    states: Vec<f64>,
    histograms: Vec<f64>,
    snapshots: Vec<Snapshot>,
}

/// Simulates `profile` and, on the same noise, each deviation.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    xi: &InteractionMatrix,
    labels: &LabelAssignment,
    profile: &StrategyProfile,
    deviations: &[Deviation],
    model: &dyn GameModel,
    initial: &InitialLaw,
    opts: &SimOptions,
) -> Result<SimulationResult> {
    let n = xi.n();
    if labels.len() != n || profile.len() != n {
        return Err(Error::invalid("players", format!("matrix has {n} rows, {} labels, {} rules", labels.len(), profile.len())));
    }
    if opts.paths == 0 {
        return Err(Error::invalid("paths", "need at least one path"));
    }
    if let Some(d) = deviations.iter().find(|d| d.player >= n) {
        return Err(Error::invalid("deviation", format!("player {} out of range", d.player)));
    }
    initial.validate()?;
    let time = TimeGrid::with_step(model.horizon(), opts.dt)?;
    let snap_nodes: Vec<usize> = opts.snapshot_times.iter().map(|&t| time.node_at_or_before(t)).collect();
    let chunks = opts.paths.div_ceil(PATH_CHUNK);
    let partials: Vec<Partial> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let range = c * PATH_CHUNK..((c + 1) * PATH_CHUNK).min(opts.paths);
            run_chunk(xi, labels, profile, deviations, model, initial, opts, &time, &snap_nodes, range)
        })
        .collect();

    let nodes = time.steps + 1;
    let mut objectives = vec![Moments::default(); n];
    let mut dev_obj = vec![Moments::default(); deviations.len()];
    let mut dev_gain = vec![Moments::default(); deviations.len()];
    let mut terminal = vec![Moments::default(); n];
    let mut states = opts.keep_paths.then(|| Vec::with_capacity(opts.paths * nodes * n));
    let mut histograms = opts.histograms.map(|g| vec![0.0; n * nodes * g.cells]);
    let mut snapshots = Vec::new();
    for part in partials {
        merge_all(&mut objectives, &part.objectives);
        merge_all(&mut dev_obj, &part.dev_objectives);
        merge_all(&mut dev_gain, &part.dev_gains);
        merge_all(&mut terminal, &part.terminal);
        if let Some(s) = states.as_mut() {
            s.extend_from_slice(&part.states);
        }
        if let Some(h) = histograms.as_mut() {
            for (a, b) in h.iter_mut().zip(&part.histograms) {
                *a += b;
            }
        }
        if snapshots.is_empty() {
            snapshots = part.snapshots;
        }
    }
    if let Some(h) = histograms.as_mut() {
        let inv = 1.0 / opts.paths as f64;
        h.iter_mut().for_each(|v| *v *= inv);
    }
    Ok(SimulationResult {
        n,
        paths: opts.paths,
        time,
        seed: opts.seed,
        objectives: objectives.iter().map(Moments::estimate).collect(),
        deviations: deviations
            .iter()
            .zip(dev_obj.iter().zip(&dev_gain))
            .map(|(d, (o, g))| DeviationResult { player: d.player, objective: o.estimate(), gain: g.estimate() })
            .collect(),
        terminal_means: terminal.iter().map(Moments::estimate).collect(),
        states,
        histograms,
        snapshots,
    })
}

fn merge_all(into: &mut [Moments], from: &[Moments]) {
    for (a, b) in into.iter_mut().zip(from) {
        a.merge(b);
    }
}

#[allow(clippy::too_many_arguments)]
fn run_chunk(
    xi: &InteractionMatrix,
    labels: &LabelAssignment,
    profile: &StrategyProfile,
    deviations: &[Deviation],
    model: &dyn GameModel,
    initial: &InitialLaw,
    opts: &SimOptions,
    time: &TimeGrid,
    snap_nodes: &[usize],
    range: std::ops::Range<usize>,
) -> Partial {
    let n = xi.n();
    let nd = deviations.len();
    let nodes = time.steps + 1;
    let h = time.dt();
    let sd = model.sigma() * h.sqrt();
    let running_m = model.running_uses_measure();
    let terminal_m = model.uses_measure();
    let empty = ParticleMeasure::zero();
    let us = labels.labels();

    let mut part = Partial {
        objectives: vec![Moments::default(); n],
        dev_objectives: vec![Moments::default(); nd],
        dev_gains: vec![Moments::default(); nd],
        terminal: vec![Moments::default(); n],
        states: Vec::new(),
        histograms: opts.histograms.map(|g| vec![0.0; n * nodes * g.cells]).unwrap_or_default(),
        snapshots: Vec::new(),
    };

    let mut x = vec![0.0; n];
    let mut x_next = vec![0.0; n];
    let mut a = vec![0.0; n];
    let mut acc = vec![0.0; n];
    let mut xd = vec![0.0; nd];
    let mut ad = vec![0.0; nd];
    let mut accd = vec![0.0; nd];
    let mut z = vec![0.0; n];

    for path in range {
        let mut rngs: Vec<_> = (0..n).map(|i| seeds::stream_rng(opts.seed, (path * n + i) as u64)).collect();
        for i in 0..n {
            x[i] = initial.sample(us[i], &mut rngs[i]);
        }
        for (d, dev) in deviations.iter().enumerate() {
            xd[d] = x[dev.player];
        }
        acc.iter_mut().for_each(|v| *v = 0.0);
        accd.iter_mut().for_each(|v| *v = 0.0);

        for k in 0..time.steps {
            let t = time.time(k);
            record(&mut part, opts, path, k, time, &x, snap_nodes);
            for i in 0..n {
                a[i] = profile.rules[i].action(t, x[i]);
            }
            for (d, dev) in deviations.iter().enumerate() {
                ad[d] = dev.rule.action(t, xd[d]);
            }
            // left endpoint of the trapezoid
            running(model, xi, &x, &x, &a, t, running_m, &empty, &mut acc, 0.5 * h, None);
            running(model, xi, &x, &xd, &ad, t, running_m, &empty, &mut accd, 0.5 * h, Some(deviations));
            for i in 0..n {
                z[i] = rngs[i].sample(StandardNormal);
                x_next[i] = x[i] + model.drift(t, x[i], a[i]) * h + sd * z[i];
            }
            for (d, dev) in deviations.iter().enumerate() {
                xd[d] = xd[d] + model.drift(t, xd[d], ad[d]) * h + sd * z[dev.player];
            }
            std::mem::swap(&mut x, &mut x_next);
            let t1 = time.time(k + 1);
            running(model, xi, &x, &x, &a, t1, running_m, &empty, &mut acc, 0.5 * h, None);
            running(model, xi, &x, &xd, &ad, t1, running_m, &empty, &mut accd, 0.5 * h, Some(deviations));
        }
        record(&mut part, opts, path, time.steps, time, &x, snap_nodes);

        for i in 0..n {
            let g = if terminal_m {
                model.terminal_reward(x[i], &Neighborhood { row: xi.row(i), states: &x })
            } else {
                model.terminal_reward(x[i], &empty)
            };
            acc[i] += g;
            part.objectives[i].push(acc[i]);
            part.terminal[i].push(x[i]);
        }
        for (d, dev) in deviations.iter().enumerate() {
            let i = dev.player;
            let g = if terminal_m {
                model.terminal_reward(xd[d], &Neighborhood { row: xi.row(i), states: &x })
            } else {
                model.terminal_reward(xd[d], &empty)
            };
            accd[d] += g;
            part.dev_objectives[d].push(accd[d]);
            part.dev_gains[d].push(accd[d] - acc[i]);
        }
    }
    part
}

/// Adds `weight * f(t, x_i, M^{n,i}, a_i)` for each evaluated player. With
/// `deviations`, entry `d` is scored for player `deviations[d].player`
/// against the incumbent states `base`.
#[allow(clippy::too_many_arguments)]
#[inline]
fn running(
    model: &dyn GameModel,
    xi: &InteractionMatrix,
    base: &[f64],
    own: &[f64],
    acts: &[f64],
    t: f64,
    with_measure: bool,
    empty: &ParticleMeasure,
    acc: &mut [f64],
    weight: f64,
    deviations: Option<&[Deviation]>,
) {
    for (slot, total) in acc.iter_mut().enumerate() {
        let i = deviations.map_or(slot, |d| d[slot].player);
        let f = if with_measure {
            model.running_reward(t, own[slot], &Neighborhood { row: xi.row(i), states: base }, acts[slot])
        } else {
            model.running_reward(t, own[slot], empty, acts[slot])
        };
        *total += weight * f;
    }
}

fn record(part: &mut Partial, opts: &SimOptions, path: usize, k: usize, time: &TimeGrid, x: &[f64], snap_nodes: &[usize]) {
    if opts.keep_paths {
        part.states.extend_from_slice(x);
    }
    if let Some(grid) = opts.histograms {
        let nodes = time.steps + 1;
        for (i, &xv) in x.iter().enumerate() {
            part.histograms[(i * nodes + k) * grid.cells + grid.cell_of(xv)] += 1.0;
        }
    }
    if path == 0 {
        for &node in snap_nodes.iter().filter(|&&s| s == k) {
            part.snapshots.push(Snapshot { time: time.time(node), node, states: x.to_vec() });
        }
    }
}
