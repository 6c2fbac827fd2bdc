//! Equilibrium-gap estimates for finite populations playing a graphon
//! equilibrium, and empirical neighbourhood-measure convergence.
//!
//! Deviations are searched among decentralized Markov feedbacks against the
//! Monte-Carlo averaged neighbourhood flow, so every gap reported here is a
//! lower-bound estimate of the gap over all full-state feedbacks.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::arena::{self, Deviation, Policy, SimOptions, StrategyProfile};
use crate::error::{Error, Result};
use crate::grid::{StateGrid, TimeGrid};
use crate::kernel::{Kernel, Matrix};
use crate::law::InitialLaw;
use crate::lqflock::{solve_lq, terminal_gaussian, LqParams, LqSolution};
use crate::measure::bl_norm_sorted;
use crate::mfgpde::{
    solve_fixed_point, ActionSet, ControlTable, EquilibriumField, GridFlow, PdeProblem, PicardOptions, Scheme,
};
use crate::model::{GameModel, ModelSpec};
use crate::netgen::{erdos_renyi, sample_from_graphon, InteractionMatrix, LabelAssignment};
use crate::seeds;
use crate::stats::{Estimate, Moments};

/// Printed with every report.
pub const CAVEAT: &str = "eps_hat searches decentralized Markov deviations against the averaged neighbourhood flow; \
it estimates the equilibrium gap from below and the distance to the full-state supremum is not quantified";

/// Best-response construction for the deviating player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimator {
    /// Tracking feedback against the averaged terminal target (LQ model).
    LqClosedForm,
    /// Single-label HJB against the averaged neighbourhood flow.
    HjbBestResponse { states: StateGrid, actions: ActionSet },
}

impl Estimator {
    pub fn tag(&self) -> &'static str {
        match self {
            Estimator::LqClosedForm => "lq_closed_form",
            Estimator::HjbBestResponse { .. } => "hjb_best_response",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapOptions {
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlayerGap {
    pub trial: usize,
    pub player: usize,
    pub label: f64,
    pub eps_hat: f64,
    pub stderr: f64,
}

/// Gap estimates for a subset of players of one game instance.
///
/// A pilot run on an independent seed estimates the averaged neighbourhood
/// flow; the main run scores incumbent and deviations on common noise.
#[allow(clippy::too_many_arguments)]
pub fn estimate_gaps(
    xi: &InteractionMatrix,
    labels: &LabelAssignment,
    incumbent: &StrategyProfile,
    model: &ModelSpec,
    initial: &InitialLaw,
    estimator: &Estimator,
    players: &[usize],
    opts: &GapOptions,
) -> Result<Vec<(usize, Estimate)>> {
    let n = xi.n();
    let pilot_seed = seeds::derive(opts.seed, "pilot");
    let main_seed = seeds::derive(opts.seed, "main");
    let time = TimeGrid::with_step(model.horizon(), opts.dt)?;
    let deviations: Vec<Deviation> = match estimator {
        Estimator::LqClosedForm => {
            let c = match model {
                ModelSpec::LqTruncated { c, .. } => *c,
                _ => return Err(Error::Unsupported("lq_closed_form needs the lq_truncated model".into())),
            };
            let pilot = arena::simulate(xi, labels, incumbent, &[], model, initial, &SimOptions::new(opts.paths, opts.dt, pilot_seed))?;
            let means: Vec<f64> = pilot.terminal_means.iter().map(|e| e.mean).collect();
            players
                .iter()
                .map(|&i| {
                    let target = xi.row(i).iter().zip(&means).map(|(w, m)| w * m).sum::<f64>() / n as f64;
                    Deviation { player: i, rule: Policy::Tracking { c, horizon: model.horizon(), target } }
                })
                .collect()
        }
        Estimator::HjbBestResponse { states, actions } => {
            let mut so = SimOptions::new(opts.paths, opts.dt, pilot_seed);
            so.histograms = Some(*states);
            let pilot = arena::simulate(xi, labels, incumbent, &[], model, initial, &so)?;
            let hist = pilot.histograms.as_ref().expect("requested");
            let scheme = Scheme::new(model, *states, time, *actions)?;
            let cells = states.cells;
            let nodes = time.steps + 1;
            players
                .par_iter()
                .map(|&i| {
                    let row = xi.row(i);
                    let flow: Vec<Vec<f64>> = (0..nodes)
                        .map(|k| {
                            let mut m = vec![0.0; cells];
                            for (j, &w) in row.iter().enumerate() {
                                if w != 0.0 {
                                    let h = &hist[(j * nodes + k) * cells..(j * nodes + k + 1) * cells];
                                    for (o, p) in m.iter_mut().zip(h) {
                                        *o += w * p;
                                    }
                                }
                            }
                            m.iter_mut().for_each(|v| *v /= n as f64);
                            m
                        })
                        .collect();
                    let (_, control) = scheme.hjb(&|k| flow[k].clone());
                    let table = ControlTable::new(time, *states, control)?;
                    Ok(Deviation { player: i, rule: Policy::Table(std::sync::Arc::new(table)) })
                })
                .collect::<Result<_>>()?
        }
    };
    let main = arena::simulate(xi, labels, incumbent, &deviations, model, initial, &SimOptions::new(opts.paths, opts.dt, main_seed))?;
    Ok(main.deviations.iter().map(|d| (d.player, d.gain)).collect())
}

/// Gap estimate for player `i`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_gap(
    xi: &InteractionMatrix,
    labels: &LabelAssignment,
    incumbent: &StrategyProfile,
    model: &ModelSpec,
    initial: &InitialLaw,
    estimator: &Estimator,
    i: usize,
    opts: &GapOptions,
) -> Result<Estimate> {
    Ok(estimate_gaps(xi, labels, incumbent, model, initial, estimator, &[i], opts)?[0].1)
}

/// Random interaction matrices for a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    ErdosRenyi { p: f64, normalize: bool },
    /// Labels drawn iid and sorted; the labels are those of the sample.
    Sampled { weighted: bool },
    /// `xi_ij = W(u_i, u_j)` off the diagonal at the assigned labels.
    KernelAtLabels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelChoice {
    RandomPerCell,
    Midpoint,
    Sampled,
}

/// Theorem-appropriate summary over players.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    Mean,
    Max,
}

/// Discretization of the incumbent equilibrium for non-LQ models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeSettings {
    pub states: StateGrid,
    pub actions: ActionSet,
    pub time_steps: usize,
    pub labels: usize,
    pub picard: PicardOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub model: ModelSpec,
    pub kernel: Kernel,
    pub initial: InitialLaw,
    pub generator: Generator,
    pub labels: LabelChoice,
    pub aggregate: Aggregate,
    pub ns: Vec<usize>,
    pub trials: usize,
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub estimator: Estimator,
    /// Label cells of the closed-form solve.
    #[serde(default = "default_lq_cells")]
    pub lq_cells: usize,
    #[serde(default)]
    pub pde: Option<PdeSettings>,
    #[serde(default)]
    pub thresholds: Vec<f64>,
}

fn default_lq_cells() -> usize {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFraction {
    pub eps: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashGapReport {
    pub n: usize,
    pub label_scheme: LabelChoice,
    pub estimator: String,
    pub aggregate: Aggregate,
    pub players: Vec<PlayerGap>,
    /// Mean over trials of the per-trial player mean, with the stderr of
    /// that average across trials.
    pub mean: Estimate,
    /// Mean over trials of the per-trial player maximum.
    pub max: Estimate,
    pub overall_mean: f64,
    pub overall_max: f64,
    pub fractions: Vec<ThresholdFraction>,
    pub deviation_class: String,
    pub caveat: String,
}

impl NashGapReport {
    /// Value of the configured aggregate.
    pub fn headline(&self) -> Estimate {
        match self.aggregate {
            Aggregate::Mean => self.mean,
            Aggregate::Max => self.max,
        }
    }

    /// Fraction of player entries with `eps_hat > eps`.
    pub fn fraction_above(&self, eps: f64) -> f64 {
        if self.players.is_empty() {
            return 0.0;
        }
        self.players.iter().filter(|p| p.eps_hat > eps).count() as f64 / self.players.len() as f64
    }
}

enum Incumbent {
    Lq(LqSolution),
    Field(Box<EquilibriumField>),
}

impl Incumbent {
    fn profile(&self, labels: &LabelAssignment) -> StrategyProfile {
        match self {
            Incumbent::Lq(sol) => StrategyProfile::from_lq(sol, labels),
            Incumbent::Field(f) => StrategyProfile::from_field(f, labels),
        }
    }
}

fn incumbent(cfg: &SweepConfig) -> Result<Incumbent> {
    match (&cfg.model, &cfg.pde) {
        (ModelSpec::LqTruncated { c, horizon, sigma }, None) => {
            let params = LqParams { c: *c, horizon: *horizon, sigma: *sigma, kernel: cfg.kernel.clone(), initial: cfg.initial.clone() };
            Ok(Incumbent::Lq(solve_lq(&params, cfg.lq_cells)?))
        }
        (_, Some(pde)) => {
            let problem = PdeProblem {
                model: cfg.model.clone(),
                kernel: cfg.kernel.clone(),
                initial: cfg.initial.clone(),
                actions: pde.actions,
                states: pde.states,
                time_steps: pde.time_steps,
                labels: pde.labels,
            };
            Ok(Incumbent::Field(Box::new(solve_fixed_point(&problem, &pde.picard)?)))
        }
        (_, None) => Err(Error::invalid("pde", "models other than lq_truncated need PDE settings")),
    }
}

/// One game instance of size `n` for trial `seed`.
pub fn instance(cfg: &SweepConfig, n: usize, seed: u64) -> Result<(InteractionMatrix, LabelAssignment)> {
    generate(&cfg.generator, cfg.labels, &cfg.kernel, n, seed)
}

/// Interaction matrix and labels of size `n`; graph and labels draw from
/// separate streams derived from `seed`.
pub fn generate(
    generator: &Generator,
    labels: LabelChoice,
    kernel: &Kernel,
    n: usize,
    seed: u64,
) -> Result<(InteractionMatrix, LabelAssignment)> {
    let label_seed = seeds::derive(seed, "labels");
    let graph_seed = seeds::derive(seed, "graph");
    let assign = |n| match labels {
        LabelChoice::RandomPerCell => Ok(LabelAssignment::random_per_cell(n, label_seed)),
        LabelChoice::Midpoint => Ok(LabelAssignment::midpoint(n)),
        LabelChoice::Sampled => Err(Error::invalid("labels", "sampled labels need the sampled generator")),
    };
    match generator {
        Generator::ErdosRenyi { p, normalize } => Ok((erdos_renyi(n, *p, *normalize, graph_seed)?, assign(n)?)),
        Generator::Sampled { weighted } => {
            if labels != LabelChoice::Sampled {
                return Err(Error::invalid("labels", "the sampled generator fixes the labels; use the sampled scheme"));
            }
            sample_from_graphon(kernel, n, *weighted, graph_seed)
        }
        Generator::KernelAtLabels => {
            let labels = assign(n)?;
            let u = labels.labels();
            let m = Matrix::from_fn(n, |i, j| if i == j { 0.0 } else { kernel.eval(u[i], u[j]) });
            Ok((InteractionMatrix::explicit(m)?, labels))
        }
    }
}

/// Gap reports over the configured population sizes.
pub fn gap_sweep(cfg: &SweepConfig) -> Result<Vec<NashGapReport>> {
    if cfg.ns.is_empty() || cfg.ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("ns", "population sizes must be nonempty and increasing"));
    }
    if cfg.trials == 0 {
        return Err(Error::invalid("trials", "need at least one trial"));
    }
    let inc = incumbent(cfg)?;
    let mut reports = Vec::with_capacity(cfg.ns.len());
    for &n in &cfg.ns {
        let mut players = Vec::new();
        let mut trial_mean = Moments::default();
        let mut trial_max = Moments::default();
        for t in 0..cfg.trials {
            let seed = seeds::derive_indexed(seeds::derive_indexed(cfg.seed, "n", n as u64), "trial", t as u64);
            let (xi, labels) = instance(cfg, n, seed)?;
            let profile = inc.profile(&labels);
            let all: Vec<usize> = (0..n).collect();
            let opts = GapOptions { paths: cfg.paths, dt: cfg.dt, seed: seeds::derive(seed, "gaps") };
            let gaps = estimate_gaps(&xi, &labels, &profile, &cfg.model, &cfg.initial, &cfg.estimator, &all, &opts)?;
            let mut sum = 0.0;
            let mut max = f64::NEG_INFINITY;
            for (i, e) in gaps {
                sum += e.mean;
                max = max.max(e.mean);
                players.push(PlayerGap { trial: t, player: i, label: labels.labels()[i], eps_hat: e.mean, stderr: e.stderr });
            }
            trial_mean.push(sum / n as f64);
            trial_max.push(max);
        }
        let overall_mean = players.iter().map(|p| p.eps_hat).sum::<f64>() / players.len() as f64;
        let overall_max = players.iter().map(|p| p.eps_hat).fold(f64::NEG_INFINITY, f64::max);
        let mut report = NashGapReport {
            n,
            label_scheme: cfg.labels,
            estimator: cfg.estimator.tag().into(),
            aggregate: cfg.aggregate,
            players,
            mean: finite_stderr(trial_mean.estimate()),
            max: finite_stderr(trial_max.estimate()),
            overall_mean,
            overall_max,
            fractions: Vec::new(),
            deviation_class: "decentralized Markov feedback".into(),
            caveat: CAVEAT.into(),
        };
        let mut eps = cfg.thresholds.clone();
        eps.sort_by(f64::total_cmp);
        report.fractions = eps.into_iter().map(|e| ThresholdFraction { eps: e, fraction: report.fraction_above(e) }).collect();
        reports.push(report);
    }
    Ok(reports)
}

fn finite_stderr(e: Estimate) -> Estimate {
    Estimate { mean: e.mean, stderr: if e.stderr.is_finite() { e.stderr } else { 0.0 } }
}

/// Conditional state law given the label, for empirical-measure checks.
pub trait ConditionalLaw: Sync {
    fn sample(&self, u: f64, rng: &mut dyn rand::RngCore) -> f64;
    fn quantile(&self, u: f64, p: f64) -> f64;
}

/// Gaussian terminal law of the closed-form LQ equilibrium.
pub struct LqTerminalLaw {
    sol: LqSolution,
}

impl LqTerminalLaw {
    pub fn new(sol: LqSolution) -> Result<Self> {
        terminal_gaussian(&sol, 0.5)?;
        Ok(LqTerminalLaw { sol })
    }

    fn moments(&self, u: f64) -> (f64, f64) {
        let (m, v) = terminal_gaussian(&self.sol, u).expect("checked at construction");
        (m, v.sqrt())
    }
}

impl ConditionalLaw for LqTerminalLaw {
    fn sample(&self, u: f64, rng: &mut dyn rand::RngCore) -> f64 {
        let (m, s) = self.moments(u);
        let z: f64 = rng.sample(StandardNormal);
        m + s * z
    }

    fn quantile(&self, u: f64, p: f64) -> f64 {
        let (m, s) = self.moments(u);
        if s == 0.0 {
            return m;
        }
        Normal::new(m, s).expect("positive sd").inverse_cdf(p)
    }
}

/// Terminal cell laws of a PDE equilibrium, sampled uniformly within state
/// cells.
pub struct CellLaws {
    states: StateGrid,
    /// Normalized cumulative masses per label cell.
    cdf: Vec<Vec<f64>>,
}

impl CellLaws {
    pub fn from_field(field: &EquilibriumField) -> Self {
        Self::from_flow(&field.flow, field.problem.states)
    }

    /// Laws at the last node of `flow`.
    pub fn from_flow(flow: &GridFlow, states: StateGrid) -> Self {
        let k = flow.nodes - 1;
        let cdf = (0..flow.labels)
            .map(|l| {
                let cell = flow.cell(k, l);
                let total: f64 = cell.iter().sum();
                let mut acc = 0.0;
                cell.iter()
                    .map(|p| {
                        acc += p / total;
                        acc
                    })
                    .collect()
            })
            .collect();
        CellLaws { states, cdf }
    }
}

impl ConditionalLaw for CellLaws {
    fn sample(&self, u: f64, rng: &mut dyn rand::RngCore) -> f64 {
        let p: f64 = rng.random();
        self.quantile(u, p)
    }

    fn quantile(&self, u: f64, p: f64) -> f64 {
        let l = crate::kernel::block_index(u, self.cdf.len());
        let cdf = &self.cdf[l];
        let j = cdf.partition_point(|&c| c < p).min(cdf.len() - 1);
        let lo = if j == 0 { 0.0 } else { cdf[j - 1] };
        let frac = if cdf[j] > lo { ((p - lo) / (cdf[j] - lo)).clamp(0.0, 1.0) } else { 0.5 };
        self.states.x_min + (j as f64 + frac) * self.states.dx()
    }
}

/// Quadrature resolution of the reference measures `W mu(u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub labels: usize,
    pub quantiles: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature { labels: 128, quantiles: 128 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpRow {
    pub n: usize,
    pub trials: usize,
    /// Trial average of `(1/n) sum_i ||M^{n,i} - W mu(u_i)||_BL`.
    pub distance: Estimate,
}

/// Distances between neighbourhood measures of independent states at
/// midpoint labels and the limiting neighbourhood measures.
pub fn empirical_measure_convergence(
    kernel: &Kernel,
    law: &dyn ConditionalLaw,
    ns: &[usize],
    trials: usize,
    seed: u64,
    quad: Quadrature,
) -> Result<Vec<EmpRow>> {
    if trials == 0 || quad.labels == 0 || quad.quantiles == 0 {
        return Err(Error::invalid("trials", "need at least one trial and quadrature point"));
    }
    // reference atoms, sorted by state
    let vs: Vec<f64> = (0..quad.labels).map(|a| (a as f64 + 0.5) / quad.labels as f64).collect();
    let mut reference: Vec<(f64, usize)> = vs
        .iter()
        .enumerate()
        .flat_map(|(a, &v)| (0..quad.quantiles).map(move |r| (law.quantile(v, (r as f64 + 0.5) / quad.quantiles as f64), a)))
        .collect();
    reference.sort_by(|x, y| x.0.total_cmp(&y.0));
    let unit = 1.0 / (quad.labels * quad.quantiles) as f64;

    ns.iter()
        .map(|&n| {
            if n == 0 {
                return Err(Error::invalid("n", "population must be positive"));
            }
            let us: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
            let xi = Matrix::from_fn(n, |i, j| if i == j { 0.0 } else { kernel.eval(us[i], us[j]) });
            let wv: Vec<Vec<f64>> = us.iter().map(|&u| vs.iter().map(|&v| kernel.eval(u, v)).collect()).collect();
            let mut acc = Moments::default();
            for t in 0..trials {
                let trial_seed = seeds::derive_indexed(seeds::derive_indexed(seed, "emp", n as u64), "trial", t as u64);
                let states: Vec<f64> = (0..n)
                    .map(|j| {
                        let mut rng = seeds::stream_rng(trial_seed, j as u64);
                        law.sample(us[j], &mut rng)
                    })
                    .collect();
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| states[a].total_cmp(&states[b]));
                let total: f64 = (0..n)
                    .into_par_iter()
                    .map(|i| merged_bl(&reference, &wv[i], unit, &order, &states, xi.row(i), 1.0 / n as f64))
                    .collect::<Vec<_>>()
                    .iter()
                    .sum();
                acc.push(total / n as f64);
            }
            Ok(EmpRow { n, trials, distance: finite_stderr(acc.estimate()) })
        })
        .collect()
}

/// BL norm of `sum_j w_j delta_{x_j} - sum_r W(u, v_r) unit delta_{y_r}`
/// from two state-sorted atom lists.
fn merged_bl(
    reference: &[(f64, usize)],
    wv: &[f64],
    unit: f64,
    order: &[usize],
    states: &[f64],
    row: &[f64],
    inv_n: f64,
) -> f64 {
    let mut xs = Vec::with_capacity(reference.len() + order.len());
    let mut ds = Vec::with_capacity(reference.len() + order.len());
    let (mut a, mut b) = (0, 0);
    while a < reference.len() || b < order.len() {
        let take_ref = b >= order.len() || (a < reference.len() && reference[a].0 <= states[order[b]]);
        let (x, d) = if take_ref {
            let (y, v) = reference[a];
            a += 1;
            (y, -wv[v] * unit)
        } else {
            let j = order[b];
            b += 1;
            (states[j], row[j] * inv_n)
        };
        if d == 0.0 {
            continue;
        }
        match xs.last() {
            Some(&last) if last == x => *ds.last_mut().unwrap() += d,
            _ => {
                xs.push(x);
                ds.push(d);
            }
        }
    }
    bl_norm_sorted(&xs, &ds)
}
