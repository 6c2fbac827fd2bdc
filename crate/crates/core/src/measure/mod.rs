//! Finitely supported measures on the state line and on label x state.

mod bl;

pub use bl::{bl_norm_signed, bl_norm_sorted};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Matrix;

/// Read-only view of a finite nonnegative measure on the state line.
///
/// Reward functions receive measures through this trait so that particle
/// lists, grid densities and lazily weighted neighbourhoods share one
/// interface.
pub trait StateMeasure: Sync {
    fn for_each_atom(&self, f: &mut dyn FnMut(f64, f64));

    fn mass(&self) -> f64 {
        let mut s = 0.0;
        self.for_each_atom(&mut |_, w| s += w);
        s
    }

    /// Raw first moment `sum w_j x_j` (not divided by the mass).
    fn raw_mean(&self) -> f64 {
        let mut s = 0.0;
        self.for_each_atom(&mut |x, w| s += w * x);
        s
    }

    /// Mass of the closed interval `[lo, hi]`.
    fn mass_within(&self, lo: f64, hi: f64) -> f64 {
        let mut s = 0.0;
        self.for_each_atom(&mut |x, w| {
            if x >= lo && x <= hi {
                s += w
            }
        });
        s
    }

    fn to_particles(&self) -> ParticleMeasure {
        let mut atoms = Vec::new();
        self.for_each_atom(&mut |x, w| {
            if w > 0.0 {
                atoms.push(Atom { x, w })
            }
        });
        ParticleMeasure { atoms }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: f64,
    pub w: f64,
}

/// `sum_j w_j delta_{x_j}` with `w_j > 0`; total mass need not be one.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParticleMeasure {
    atoms: Vec<Atom>,
}

impl ParticleMeasure {
    pub fn zero() -> Self {
        ParticleMeasure::default()
    }

    pub fn dirac(x: f64) -> Self {
        ParticleMeasure { atoms: vec![Atom { x, w: 1.0 }] }
    }

    /// Builds a measure from `(x, w)` pairs; zero masses are dropped.
    pub fn from_atoms(atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut out = Vec::new();
        for (k, (x, w)) in atoms.into_iter().enumerate() {
            if !(w >= 0.0) || !w.is_finite() || !x.is_finite() {
                return Err(Error::invalid("atom", format!("atom {k} has x = {x}, mass = {w}")));
            }
            if w > 0.0 {
                out.push(Atom { x, w });
            }
        }
        Ok(ParticleMeasure { atoms: out })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.raw_mean()
    }

    /// Atoms sorted by position with exact duplicates merged.
    pub fn merged(&self) -> ParticleMeasure {
        let mut atoms = self.atoms.clone();
        atoms.sort_by(|a, b| a.x.total_cmp(&b.x));
        let mut out: Vec<Atom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            match out.last_mut() {
                Some(last) if last.x == a.x => last.w += a.w,
                _ => out.push(a),
            }
        }
        ParticleMeasure { atoms: out }
    }

    pub fn scaled(&self, factor: f64) -> ParticleMeasure {
        ParticleMeasure::from_atoms(self.atoms.iter().map(|a| (a.x, a.w * factor)))
            .expect("nonnegative scaling of a valid measure")
    }

    pub fn plus(&self, other: &ParticleMeasure) -> ParticleMeasure {
        let mut atoms = self.atoms.clone();
        atoms.extend_from_slice(&other.atoms);
        ParticleMeasure { atoms }
    }
}

impl StateMeasure for ParticleMeasure {
    fn for_each_atom(&self, f: &mut dyn FnMut(f64, f64)) {
        for a in &self.atoms {
            f(a.x, a.w);
        }
    }
}

/// Exact bounded-Lipschitz distance between two measures on the line.
pub fn bl_distance(m1: &dyn StateMeasure, m2: &dyn StateMeasure) -> f64 {
    let mut atoms = Vec::new();
    m1.for_each_atom(&mut |x, w| atoms.push((x, w)));
    m2.for_each_atom(&mut |x, w| atoms.push((x, -w)));
    bl_norm_signed(atoms)
}

/// `M^{n,i} = (1/n) sum_j xi_ij delta_{x_j}`, weighted by row `i` of `xi`.
pub fn neighborhood_measure(xi: &Matrix, states: &[f64], i: usize) -> Result<ParticleMeasure> {
    let n = xi.n();
    if states.len() != n || i >= n {
        return Err(Error::invalid(
            "player",
            format!("need {n} states and index < {n}, got {} states and i = {i}", states.len()),
        ));
    }
    let inv = 1.0 / n as f64;
    ParticleMeasure::from_atoms(xi.row(i).iter().zip(states).map(|(&w, &x)| (x, w * inv)))
}

/// Lazy neighbourhood measure: row `i` of `xi` paired with a shared state
/// vector, evaluated on demand without allocation.
#[derive(Clone, Copy)]
pub struct Neighborhood<'a> {
    pub row: &'a [f64],
    pub states: &'a [f64],
}

impl StateMeasure for Neighborhood<'_> {
    fn for_each_atom(&self, f: &mut dyn FnMut(f64, f64)) {
        let inv = 1.0 / self.row.len() as f64;
        for (&w, &x) in self.row.iter().zip(self.states) {
            if w != 0.0 {
                f(x, w * inv);
            }
        }
    }
}

/// Weights on a fixed increasing grid of state points.
#[derive(Debug, Clone)]
pub struct GridMeasure<'a> {
    points: &'a [f64],
    weights: Vec<f64>,
    prefix: Vec<f64>,
}

impl<'a> GridMeasure<'a> {
    pub fn new(points: &'a [f64], weights: Vec<f64>) -> Self {
        debug_assert_eq!(points.len(), weights.len());
        let mut prefix = Vec::with_capacity(weights.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for &w in &weights {
            acc += w;
            prefix.push(acc);
        }
        GridMeasure { points, weights, prefix }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn points(&self) -> &[f64] {
        self.points
    }
}

impl StateMeasure for GridMeasure<'_> {
    fn for_each_atom(&self, f: &mut dyn FnMut(f64, f64)) {
        for (&x, &w) in self.points.iter().zip(&self.weights) {
            if w != 0.0 {
                f(x, w);
            }
        }
    }

    fn mass(&self) -> f64 {
        *self.prefix.last().unwrap()
    }

    fn mass_within(&self, lo: f64, hi: f64) -> f64 {
        let a = self.points.partition_point(|&x| x < lo);
        let b = self.points.partition_point(|&x| x <= hi);
        if b <= a {
            0.0
        } else {
            self.prefix[b] - self.prefix[a]
        }
    }
}

/// BL distance between two weight vectors on the same increasing grid.
pub fn grid_bl(points: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    bl_norm_sorted(points, &d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelAtom {
    pub u: f64,
    pub x: f64,
    pub w: f64,
}

/// `sum_j w_j delta_{(u_j, x_j)}` on `[0,1] x R`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelStateMeasure {
    atoms: Vec<LabelAtom>,
    normalized: bool,
}

impl LabelStateMeasure {
    pub fn from_atoms(atoms: impl IntoIterator<Item = (f64, f64, f64)>) -> Result<Self> {
        let mut out = Vec::new();
        let mut total = 0.0;
        for (k, (u, x, w)) in atoms.into_iter().enumerate() {
            if !(0.0..=1.0).contains(&u) || !x.is_finite() || !(w >= 0.0) || !w.is_finite() {
                return Err(Error::invalid(
                    "atom",
                    format!("atom {k} has u = {u}, x = {x}, mass = {w}"),
                ));
            }
            if w > 0.0 {
                total += w;
                out.push(LabelAtom { u, x, w });
            }
        }
        let normalized = (total - 1.0).abs() <= 1e-12 * out.len().max(1) as f64;
        Ok(LabelStateMeasure { atoms: out, normalized })
    }

    /// `(1/n) sum_i delta_{(u_i, x_i)}`.
    pub fn empirical(labels: &[f64], states: &[f64]) -> Result<Self> {
        if labels.len() != states.len() || labels.is_empty() {
            return Err(Error::invalid("states", "labels and states must be nonempty and equal length"));
        }
        let w = 1.0 / labels.len() as f64;
        Self::from_atoms(labels.iter().zip(states).map(|(&u, &x)| (u, x, w)))
    }

    pub fn atoms(&self) -> &[LabelAtom] {
        &self.atoms
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.w).sum()
    }

    pub fn second_marginal(&self) -> ParticleMeasure {
        ParticleMeasure::from_atoms(self.atoms.iter().map(|a| (a.x, a.w)))
            .expect("atoms already validated")
    }

    /// Mass-weighted mean state in each bin of the partition `edges`
    /// (`0 = e_0 < ... < e_B = 1`, last bin closed). Empty bins are `None`.
    pub fn conditional_mean_by_bin(&self, edges: &[f64]) -> Result<Vec<Option<f64>>> {
        validate_edges(edges)?;
        let bins = edges.len() - 1;
        let mut mass = vec![0.0; bins];
        let mut moment = vec![0.0; bins];
        for a in &self.atoms {
            let b = bin_of(edges, a.u);
            mass[b] += a.w;
            moment[b] += a.w * a.x;
        }
        Ok(mass.iter().zip(&moment).map(|(&m, &s)| if m > 0.0 { Some(s / m) } else { None }).collect())
    }
}

/// Equal-width bin edges on `[0, 1]`.
pub fn uniform_edges(bins: usize) -> Vec<f64> {
    (0..=bins).map(|k| k as f64 / bins as f64).collect()
}

fn validate_edges(edges: &[f64]) -> Result<()> {
    let ok = edges.len() >= 2
        && edges[0] == 0.0
        && *edges.last().unwrap() == 1.0
        && edges.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(Error::invalid("bins", "edges must increase strictly from 0 to 1"))
    }
}

fn bin_of(edges: &[f64], u: f64) -> usize {
    let bins = edges.len() - 1;
    edges.partition_point(|&e| e <= u).saturating_sub(1).min(bins - 1)
}

/// One label-state measure per node of a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureFlow {
    times: Vec<f64>,
    nodes: Vec<LabelStateMeasure>,
}

impl MeasureFlow {
    pub fn new(times: Vec<f64>, nodes: Vec<LabelStateMeasure>) -> Result<Self> {
        if times.is_empty() || times.len() != nodes.len() {
            return Err(Error::invalid("flow", "need one measure per time node"));
        }
        if !times.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid("flow", "time grid must increase strictly"));
        }
        if nodes.iter().any(|m| m.normalized != nodes[0].normalized) {
            return Err(Error::invalid("flow", "mixed normalization across nodes"));
        }
        Ok(MeasureFlow { times, nodes })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn nodes(&self) -> &[LabelStateMeasure] {
        &self.nodes
    }

    /// Measure at the node nearest `t`; the flag is set when `t` is not a
    /// grid node.
    pub fn marginal_at(&self, t: f64) -> (&LabelStateMeasure, bool) {
        let scale = self.times.last().unwrap().abs().max(1.0);
        let (k, dist) = self
            .times
            .iter()
            .enumerate()
            .map(|(k, &s)| (k, (s - t).abs()))
            .fold((0, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc });
        (&self.nodes[k], dist > 1e-12 * scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn means() {
        assert_eq!(ParticleMeasure::dirac(3.0).mean(), 3.0);
        assert_eq!(ParticleMeasure::zero().mean(), 0.0);
        let m = ParticleMeasure::from_atoms([(1.0, 0.5), (3.0, 0.5)]).unwrap();
        assert_eq!(m.mean(), 2.0);
    }

    #[test]
    fn rejects_negative_mass() {
        assert!(ParticleMeasure::from_atoms([(0.0, -1.0)]).is_err());
        assert!(ParticleMeasure::from_atoms([(0.0, f64::NAN)]).is_err());
        assert_eq!(ParticleMeasure::from_atoms([(0.0, 0.0)]).unwrap().len(), 0);
    }

    #[test]
    fn neighborhoods() {
        let xi = Matrix::from_rows(vec![vec![0.0, 2.0], vec![2.0, 0.0]]).unwrap();
        let m = neighborhood_measure(&xi, &[5.0, 7.0], 0).unwrap();
        assert_eq!(m.atoms(), &[Atom { x: 7.0, w: 1.0 }]);
        let zero = neighborhood_measure(&Matrix::zeros(3), &[1.0, 2.0, 3.0], 1).unwrap();
        assert!(zero.is_empty());
        assert!(neighborhood_measure(&xi, &[1.0], 0).is_err());

        let lazy = Neighborhood { row: xi.row(0), states: &[5.0, 7.0] };
        assert_eq!(lazy.to_particles(), m);
        assert_eq!(lazy.mass_within(6.0, 8.0), 1.0);
    }

    #[test]
    fn grid_measure_windows() {
        let pts = [0.0, 1.0, 2.0, 3.0];
        let g = GridMeasure::new(&pts, vec![0.1, 0.2, 0.3, 0.4]);
        assert!((g.mass_within(0.5, 2.0) - 0.5).abs() < 1e-15);
        assert!((g.mass_within(-5.0, 5.0) - 1.0).abs() < 1e-15);
        assert_eq!(g.mass_within(1.2, 1.8), 0.0);
        assert!((g.raw_mean() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn bin_means() {
        let pts: Vec<(f64, f64, f64)> = (0..10).map(|i| ((i as f64 + 0.5) / 10.0, 4.0, 0.1)).collect();
        let m = LabelStateMeasure::from_atoms(pts).unwrap();
        assert!(m.is_normalized());
        for v in m.conditional_mean_by_bin(&uniform_edges(4)).unwrap() {
            assert!((v.unwrap() - 4.0).abs() < 1e-14);
        }
        let two = LabelStateMeasure::from_atoms([(0.2, 1.0, 0.5), (0.8, 3.0, 0.5)]).unwrap();
        assert_eq!(two.conditional_mean_by_bin(&uniform_edges(2)).unwrap(), vec![Some(1.0), Some(3.0)]);
        let gaps = two.conditional_mean_by_bin(&uniform_edges(4)).unwrap();
        assert_eq!(gaps, vec![Some(1.0), None, None, Some(3.0)]);
        assert!(two.conditional_mean_by_bin(&[0.0, 0.7]).is_err());
    }

    #[test]
    fn marginals() {
        let labels = [0.1, 0.5, 0.9];
        let states = [1.0, 2.0, 3.0];
        let m = LabelStateMeasure::empirical(&labels, &states).unwrap();
        let sm = m.second_marginal();
        assert_eq!(sm.len(), 3);
        for (a, &x) in sm.atoms().iter().zip(&states) {
            assert_eq!(a.x, x);
            assert!((a.w - 1.0 / 3.0).abs() < 1e-16);
        }
        let flow = MeasureFlow::new(vec![0.0, 0.5, 1.0], vec![m.clone(), m.clone(), m]).unwrap();
        assert!(!flow.marginal_at(0.5).1);
        assert!(flow.marginal_at(0.6).1);
        assert!(MeasureFlow::new(vec![0.0, 0.0], flow.nodes()[..2].to_vec()).is_err());
    }

    #[test]
    fn bl_identity_and_diracs() {
        let m = ParticleMeasure::from_atoms([(0.0, 0.3), (1.5, 0.7)]).unwrap();
        assert_eq!(bl_distance(&m, &m), 0.0);
        let a = ParticleMeasure::dirac(0.0);
        let b = ParticleMeasure::dirac(0.8);
        assert!((bl_distance(&a, &b) - 0.8).abs() < 1e-15);
        assert!((bl_distance(&a, &ParticleMeasure::zero()) - 1.0).abs() < 1e-15);
    }
}
