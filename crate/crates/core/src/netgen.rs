//! Interaction matrices from random-graph constructions, label assignments,
//! and diagnostics of convergence to a target kernel.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{cut_norm, CutMode, Kernel, LabelGrid, Matrix, NormReport};
use crate::seeds;

/// Largest common refinement grid used for matrix-versus-kernel distances.
pub const MAX_REFINEMENT: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    ErdosRenyi { p: f64, normalized: bool, seed: u64 },
    SampledSimple { kernel: String, seed: u64 },
    SampledWeighted { kernel: String, seed: u64 },
    Laplacian,
    Explicit,
}

/// Nonnegative `n x n` matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionMatrix {
    matrix: Matrix,
    provenance: Provenance,
}

impl InteractionMatrix {
    pub fn explicit(matrix: Matrix) -> Result<Self> {
        matrix.check_nonnegative()?;
        for i in 0..matrix.n() {
            if matrix.get(i, i) != 0.0 {
                return Err(Error::invalid(
                    "matrix",
                    format!("diagonal entry ({i}, {i}) is {}, must be 0", matrix.get(i, i)),
                ));
            }
        }
        Ok(InteractionMatrix { matrix, provenance: Provenance::Explicit })
    }

    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.matrix.row(i)
    }

    /// The step kernel `W_xi`.
    pub fn step_kernel(&self) -> Kernel {
        Kernel::step(self.matrix.clone()).expect("interaction matrices are nonnegative")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum LabelScheme {
    /// `u_i` uniform on `I^n_i`, independently.
    RandomUniformPerCell { seed: u64 },
    /// `u_i = (i - 1/2)/n`.
    Midpoint,
    /// Sorted iid uniform labels from a sampling construction.
    IidUniformSorted { seed: u64 },
    /// Labels supplied from a file.
    Given,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAssignment {
    labels: Vec<f64>,
    scheme: LabelScheme,
}

impl LabelAssignment {
    pub fn midpoint(n: usize) -> Self {
        let labels = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        LabelAssignment { labels, scheme: LabelScheme::Midpoint }
    }

    pub fn random_per_cell(n: usize, seed: u64) -> Self {
        let mut rng = seeds::rng(seed);
        let labels = (0..n).map(|i| (i as f64 + rng.random::<f64>()) / n as f64).collect();
        LabelAssignment { labels, scheme: LabelScheme::RandomUniformPerCell { seed } }
    }

    pub fn given(labels: Vec<f64>) -> Result<Self> {
        if let Some((i, u)) = labels.iter().enumerate().find(|(_, u)| !(0.0..=1.0).contains(*u)) {
            return Err(Error::invalid("labels", format!("label {i} = {u} outside [0, 1]")));
        }
        Ok(LabelAssignment { labels, scheme: LabelScheme::Given })
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn scheme(&self) -> LabelScheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Whether every `u_i` lies in the closed cell `[(i-1)/n, i/n]`.
    pub fn is_per_cell(&self) -> bool {
        let n = self.labels.len() as f64;
        self.labels
            .iter()
            .enumerate()
            .all(|(i, &u)| u >= i as f64 / n && u <= (i + 1) as f64 / n)
    }
}

/// Symmetric `G(n, p)` adjacency; entries divided by `p` when `normalize`.
pub fn erdos_renyi(n: usize, p: f64, normalize: bool, seed: u64) -> Result<InteractionMatrix> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid("p", format!("edge probability must lie in (0, 1], got {p}")));
    }
    let value = if normalize { 1.0 / p } else { 1.0 };
    let mut rng = seeds::rng(seed);
    let mut m = Matrix::zeros(n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                m.set(i, j, value);
                m.set(j, i, value);
            }
        }
    }
    Ok(InteractionMatrix { matrix: m, provenance: Provenance::ErdosRenyi { p, normalized: normalize, seed } })
}

/// Samples sorted uniform labels and either Bernoulli edges with
/// probability `W(U_i, U_j)` (simple) or the values themselves (weighted).
pub fn sample_from_graphon(
    w: &Kernel,
    n: usize,
    weighted: bool,
    seed: u64,
) -> Result<(InteractionMatrix, LabelAssignment)> {
    if !weighted && w.sup() > 1.0 {
        return Err(Error::invalid(
            "kernel",
            format!("simple sampling needs W <= 1, kernel sup is {}", w.sup()),
        ));
    }
    let mut rng = seeds::rng(seed);
    let mut labels: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    labels.sort_by(f64::total_cmp);
    let mut m = Matrix::zeros(n);
    for i in 0..n {
        let range: Box<dyn Iterator<Item = usize>> =
            if weighted { Box::new(0..n) } else { Box::new(i + 1..n) };
        for j in range {
            if i == j {
                continue;
            }
            let v = w.eval(labels[i], labels[j]);
            if weighted {
                m.set(i, j, v);
            } else if rng.random::<f64>() < v {
                m.set(i, j, 1.0);
                m.set(j, i, 1.0);
            }
        }
    }
    let provenance = if weighted {
        Provenance::SampledWeighted { kernel: w.name(), seed }
    } else {
        Provenance::SampledSimple { kernel: w.name(), seed }
    };
    Ok((
        InteractionMatrix { matrix: m, provenance },
        LabelAssignment { labels, scheme: LabelScheme::IidUniformSorted { seed } },
    ))
}

/// Random-walk Laplacian `xi_ij = (n / d_i) 1{i ~ j}` of a simple graph.
pub fn laplacian_matrix(adjacency: &Matrix) -> Result<InteractionMatrix> {
    let n = adjacency.n();
    for i in 0..n {
        for j in 0..n {
            let a = adjacency.get(i, j);
            if a != 0.0 && a != 1.0 {
                return Err(Error::invalid("adjacency", format!("entry ({i}, {j}) = {a} is not 0/1")));
            }
            if a != adjacency.get(j, i) || (i == j && a != 0.0) {
                return Err(Error::invalid("adjacency", format!("not a simple undirected graph at ({i}, {j})")));
            }
        }
    }
    let mut m = Matrix::zeros(n);
    for i in 0..n {
        let d: f64 = adjacency.row(i).iter().sum();
        if d == 0.0 {
            return Err(Error::IsolatedVertex { index: i });
        }
        for j in 0..n {
            if adjacency.get(i, j) == 1.0 {
                m.set(i, j, n as f64 / d);
            }
        }
    }
    Ok(InteractionMatrix { matrix: m, provenance: Provenance::Laplacian })
}

/// `(1/n^3) sum_ij xi_ij^2`.
pub fn condition_a(xi: &InteractionMatrix) -> f64 {
    let n = xi.n() as f64;
    xi.matrix.as_slice().iter().map(|v| v * v).sum::<f64>() / (n * n * n)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Difference `W_xi - W` tabulated on the common refinement grid of the
/// matrix blocks and the kernel's own cells (its blocks when step-like,
/// else `resolution` midpoint cells, defaulting to `n`).
pub fn difference_on_refinement(xi: &InteractionMatrix, w: &Kernel, resolution: Option<usize>) -> Result<Matrix> {
    let n = xi.n();
    let (cells, blocks) = match w.blocks() {
        Some(b) => (b.n(), Some(b)),
        None => (resolution.unwrap_or(n), None),
    };
    if cells == 0 || n == 0 {
        return Err(Error::invalid("resolution", "grids must be nonempty"));
    }
    let size = n / gcd(n, cells) * cells;
    if size > MAX_REFINEMENT {
        return Err(Error::invalid(
            "resolution",
            format!("common refinement of {n} and {cells} cells has {size} > {MAX_REFINEMENT} cells; pick a resolution dividing or divisible by n"),
        ));
    }
    let grid = LabelGrid::new(cells)?;
    let kvals = match blocks {
        Some(b) => b,
        None => w.discretize(&grid),
    };
    let (rx, rk) = (size / n, size / cells);
    Ok(Matrix::from_fn(size, |a, b| xi.get(a / rx, b / rx) - kvals.get(a / rk, b / rk)))
}

/// Heuristic cut norm of `W_xi - W` (a lower bound, with certificate sets
/// in refinement-grid indices).
pub fn cut_distance_to(
    xi: &InteractionMatrix,
    w: &Kernel,
    resolution: Option<usize>,
    restarts: usize,
    seed: u64,
) -> Result<NormReport> {
    let d = difference_on_refinement(xi, w, resolution)?;
    let mut r = cut_norm(&d, CutMode::Heuristic { restarts, seed })?;
    r.name = "cut_distance".into();
    Ok(r)
}

/// `||W_xi - W||_{L^1}` on the common refinement grid.
pub fn l1_distance_to(xi: &InteractionMatrix, w: &Kernel, resolution: Option<usize>) -> Result<f64> {
    let d = difference_on_refinement(xi, w, resolution)?;
    let n = d.n() as f64;
    Ok(d.as_slice().iter().map(|v| v.abs()).sum::<f64>() / (n * n))
}

/// Names of the fixed test-function dictionary used by
/// [`strong_operator_residuals`].
pub fn dictionary_names() -> Vec<String> {
    let mut names = Vec::new();
    for level in 1..=3u32 {
        let parts = 1usize << level;
        for k in 0..parts {
            names.push(format!("1[{k}/{parts},{}/{parts})", k + 1));
        }
    }
    names.push("u".into());
    names.push("u^2".into());
    names
}

fn dictionary_eval(index: usize, u: f64) -> f64 {
    let mut idx = index;
    for level in 1..=3u32 {
        let parts = 1usize << level;
        if idx < parts {
            let lo = idx as f64 / parts as f64;
            let hi = (idx + 1) as f64 / parts as f64;
            return if u >= lo && u < hi { 1.0 } else { 0.0 };
        }
        idx -= parts;
    }
    match idx {
        0 => u,
        _ => u * u,
    }
}

/// `||(W_xi - W) phi||_{L^1}` for each dictionary function `phi`: dyadic
/// interval indicators (halves, quarters, eighths), `u` and `u^2`.
pub fn strong_operator_residuals(
    xi: &InteractionMatrix,
    w: &Kernel,
    resolution: Option<usize>,
) -> Result<Vec<(String, f64)>> {
    let d = difference_on_refinement(xi, w, resolution)?;
    let size = d.n();
    let mids: Vec<f64> = (0..size).map(|a| (a as f64 + 0.5) / size as f64).collect();
    let names = dictionary_names();
    let mut out = Vec::with_capacity(names.len());
    let mut y = vec![0.0; size];
    for (k, name) in names.into_iter().enumerate() {
        let phi: Vec<f64> = mids.iter().map(|&u| dictionary_eval(k, u) / size as f64).collect();
        d.mul_vec(&phi, &mut y);
        out.push((name, y.iter().map(|v| v.abs()).sum::<f64>() / size as f64));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn adj(n: usize, edges: &[(usize, usize)]) -> Matrix {
        let mut m = Matrix::zeros(n);
        for &(i, j) in edges {
            m.set(i, j, 1.0);
            m.set(j, i, 1.0);
        }
        m
    }

    #[test]
    fn er_complete_and_normalized() {
        let g = erdos_renyi(4, 1.0, false, 1).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(g.get(i, j), if i == j { 0.0 } else { 1.0 });
            }
        }
        let h = erdos_renyi(30, 0.5, true, 2).unwrap();
        assert!(h.matrix().as_slice().iter().all(|&v| v == 0.0 || v == 2.0));
        assert_eq!(h, erdos_renyi(30, 0.5, true, 2).unwrap());
        assert!(erdos_renyi(4, 0.0, false, 1).is_err());
        assert!(erdos_renyi(4, 1.5, false, 1).is_err());
    }

    #[test]
    fn laplacians() {
        let k3 = laplacian_matrix(&adj(3, &[(0, 1), (1, 2), (0, 2)])).unwrap();
        assert!((k3.get(0, 1) - 1.5).abs() < 1e-15);
        let c4 = laplacian_matrix(&adj(4, &[(0, 1), (1, 2), (2, 3), (3, 0)])).unwrap();
        assert_eq!(c4.get(0, 1), 2.0);
        assert_eq!(c4.get(0, 2), 0.0);
        let err = laplacian_matrix(&adj(3, &[(0, 1)])).unwrap_err();
        assert!(matches!(err, Error::IsolatedVertex { index: 2 }));
    }

    #[test]
    fn condition_a_values() {
        assert_eq!(condition_a(&InteractionMatrix::explicit(Matrix::zeros(5)).unwrap()), 0.0);
        let g = erdos_renyi(40, 1.0, false, 0).unwrap();
        assert!(condition_a(&g) <= 1.0 / 40.0);
    }

    #[test]
    fn sampling_weighted_is_reproducible() {
        let w = Kernel::two_block(1.6, 0.4, 0.2, 1.0).unwrap();
        let (xi, labels) = sample_from_graphon(&w, 6, true, 17).unwrap();
        let (xi2, labels2) = sample_from_graphon(&w, 6, true, 17).unwrap();
        assert_eq!(xi, xi2);
        assert_eq!(labels, labels2);
        let u = labels.labels();
        assert!(u.windows(2).all(|p| p[0] <= p[1]));
        for i in 0..6 {
            for j in 0..6 {
                let want = if i == j { 0.0 } else { w.eval(u[i], u[j]) };
                assert_eq!(xi.get(i, j), want);
            }
        }
        assert!(sample_from_graphon(&w, 6, false, 1).is_err());
    }

    #[test]
    fn self_distance_is_zero() {
        let m = Matrix::from_rows(vec![vec![0.0, 0.5, 1.0], vec![0.2, 0.0, 0.3], vec![1.0, 0.7, 0.0]]).unwrap();
        let xi = InteractionMatrix::explicit(m).unwrap();
        let r = cut_distance_to(&xi, &xi.step_kernel(), None, 8, 3).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(l1_distance_to(&xi, &xi.step_kernel(), None).unwrap(), 0.0);
        assert!(strong_operator_residuals(&xi, &xi.step_kernel(), None).unwrap().iter().all(|(_, v)| *v == 0.0));
    }

    #[test]
    fn dictionary_has_sixteen_functions() {
        assert_eq!(dictionary_names().len(), 16);
        assert_eq!(dictionary_eval(0, 0.2), 1.0);
        assert_eq!(dictionary_eval(1, 0.2), 0.0);
        assert_eq!(dictionary_eval(15, 0.5), 0.25);
    }

    #[test]
    fn explicit_requires_zero_diagonal() {
        let m = Matrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(InteractionMatrix::explicit(m).is_err());
    }
}
