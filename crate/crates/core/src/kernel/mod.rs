//! Kernels on the unit square and the operators they induce.
//!
//! A [`Kernel`] is a nonnegative function on `[0,1]^2`: either a step kernel
//! backed by an `n x n` matrix (constant on the blocks
//! `I_i x I_j`, `I_i = [(i-1)/n, i/n)`, last interval closed) or one of a few
//! analytic rules. Step-like kernels are integrated exactly by block sums;
//! analytic ones by the composite midpoint rule.

mod cut;
mod matrix;

pub use cut::{cut_norm, opnorm_inf_to_1, CutMode, NormCertificate, NormReport};
pub use matrix::Matrix;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{LabelStateMeasure, ParticleMeasure};

/// Midpoint-rule resolution used for analytic kernels unless overridden.
pub const DEFAULT_QUADRATURE_NODES: usize = 1024;

/// Uniform partition of the label space into `L` cells with midpoint
/// representatives `u_l = (l - 1/2) / L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelGrid {
    cells: usize,
}

impl LabelGrid {
    pub fn new(cells: usize) -> Result<Self> {
        if cells == 0 {
            return Err(Error::invalid("L", "label grid needs at least one cell"));
        }
        Ok(LabelGrid { cells })
    }

    pub fn len(&self) -> usize {
        self.cells
    }

    pub fn is_empty(&self) -> bool {
        self.cells == 0
    }

    /// Weight of each cell, `1/L`.
    pub fn weight(&self) -> f64 {
        1.0 / self.cells as f64
    }

    /// Midpoint of cell `l` (0-based).
    pub fn midpoint(&self, l: usize) -> f64 {
        (l as f64 + 0.5) / self.cells as f64
    }

    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.cells).map(|l| self.midpoint(l)).collect()
    }

    /// Cell containing `u`; the last cell is closed on the right.
    pub fn cell_of(&self, u: f64) -> usize {
        block_index(u, self.cells)
    }

    pub fn cell_bounds(&self, l: usize) -> (f64, f64) {
        let w = self.weight();
        (l as f64 * w, (l + 1) as f64 * w)
    }
}

/// 0-based index of the interval `I^n_i` containing `u`.
#[inline]
pub fn block_index(u: f64, n: usize) -> usize {
    if u <= 0.0 {
        return 0;
    }
    ((u * n as f64).floor() as usize).min(n - 1)
}

/// Serialized description of a kernel; see [`Kernel`] for the validated form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelKind {
    /// Step kernel of an `n x n` matrix.
    Step { matrix: Matrix },
    /// `W(u,v) = p`.
    Constant { p: f64 },
    /// Step kernel of a 2x2 block matrix on the halves of `[0,1]`.
    TwoBlock { w11: f64, w12: f64, w21: f64, w22: f64 },
    /// `W(u,v) = min(u,v)`.
    Min,
    /// Values at the midpoints of an `m x m` grid, bilinearly interpolated
    /// and held constant beyond the outermost midpoints.
    Tabulated { values: Matrix },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelKind", into = "KernelKind")]
pub struct Kernel {
    kind: KernelKind,
}

impl TryFrom<KernelKind> for Kernel {
    type Error = Error;

    fn try_from(kind: KernelKind) -> Result<Self> {
        match &kind {
            KernelKind::Step { matrix } | KernelKind::Tabulated { values: matrix } => {
                if matrix.n() == 0 {
                    return Err(Error::invalid("matrix", "empty matrix"));
                }
                matrix.check_nonnegative()?;
            }
            KernelKind::Constant { p } => {
                if !(*p >= 0.0) || !p.is_finite() {
                    return Err(Error::NegativeEntry { row: 0, col: 0, value: *p });
                }
            }
            KernelKind::TwoBlock { w11, w12, w21, w22 } => {
                Matrix::from_rows(vec![vec![*w11, *w12], vec![*w21, *w22]])?.check_nonnegative()?;
            }
            KernelKind::Min => {}
        }
        Ok(Kernel { kind })
    }
}

impl From<Kernel> for KernelKind {
    fn from(k: Kernel) -> Self {
        k.kind
    }
}

/// Outcome of the discretized positive-semidefiniteness diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdReport {
    pub is_psd: bool,
    pub min_eigenvalue: f64,
    pub resolution: usize,
}

impl Kernel {
    /// Step kernel `W_xi` of a nonnegative square matrix.
    pub fn step(matrix: Matrix) -> Result<Self> {
        Kernel::try_from(KernelKind::Step { matrix })
    }

    pub fn constant(p: f64) -> Result<Self> {
        Kernel::try_from(KernelKind::Constant { p })
    }

    pub fn two_block(w11: f64, w12: f64, w21: f64, w22: f64) -> Result<Self> {
        Kernel::try_from(KernelKind::TwoBlock { w11, w12, w21, w22 })
    }

    pub fn min_kernel() -> Self {
        Kernel { kind: KernelKind::Min }
    }

    pub fn tabulated(values: Matrix) -> Result<Self> {
        Kernel::try_from(KernelKind::Tabulated { values })
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    /// Short human-readable name.
    pub fn name(&self) -> String {
        match &self.kind {
            KernelKind::Step { matrix } => format!("step[{}]", matrix.n()),
            KernelKind::Constant { p } => format!("constant({p})"),
            KernelKind::TwoBlock { w11, w12, w21, w22 } => {
                format!("two_block({w11},{w12},{w21},{w22})")
            }
            KernelKind::Min => "min".to_string(),
            KernelKind::Tabulated { values } => format!("tabulated[{}]", values.n()),
        }
    }

    pub fn eval(&self, u: f64, v: f64) -> f64 {
        match &self.kind {
            KernelKind::Step { matrix } => {
                let n = matrix.n();
                matrix.get(block_index(u, n), block_index(v, n))
            }
            KernelKind::Constant { p } => *p,
            KernelKind::TwoBlock { w11, w12, w21, w22 } => {
                match (block_index(u, 2), block_index(v, 2)) {
                    (0, 0) => *w11,
                    (0, _) => *w12,
                    (_, 0) => *w21,
                    _ => *w22,
                }
            }
            KernelKind::Min => u.min(v),
            KernelKind::Tabulated { values } => bilinear(values, u, v),
        }
    }

    /// Block matrix when the kernel is piecewise constant on a uniform grid.
    pub fn blocks(&self) -> Option<Matrix> {
        match &self.kind {
            KernelKind::Step { matrix } => Some(matrix.clone()),
            KernelKind::Constant { p } => Some(Matrix::from_fn(1, |_, _| *p)),
            KernelKind::TwoBlock { w11, w12, w21, w22 } => {
                let m = [[*w11, *w12], [*w21, *w22]];
                Some(Matrix::from_fn(2, |i, j| m[i][j]))
            }
            KernelKind::Min | KernelKind::Tabulated { .. } => None,
        }
    }

    /// Supremum of `W` over the square.
    pub fn sup(&self) -> f64 {
        match &self.kind {
            KernelKind::Min => 1.0,
            KernelKind::Tabulated { values } => values.max_entry(),
            _ => self.blocks().map(|b| b.max_entry()).unwrap_or(f64::INFINITY),
        }
    }

    /// Out-degree `int_0^1 W(u,v) dv`: exact block sums for step-like kernels,
    /// midpoint quadrature with [`DEFAULT_QUADRATURE_NODES`] otherwise.
    pub fn degree(&self, u: f64) -> f64 {
        match self.blocks() {
            Some(b) => {
                let n = b.n();
                b.row(block_index(u, n)).iter().sum::<f64>() / n as f64
            }
            None => self.degree_by_quadrature(u, DEFAULT_QUADRATURE_NODES),
        }
    }

    /// Composite midpoint rule for the out-degree, regardless of kernel type.
    pub fn degree_by_quadrature(&self, u: f64, nodes: usize) -> f64 {
        let h = 1.0 / nodes as f64;
        (0..nodes).map(|k| self.eval(u, (k as f64 + 0.5) * h)).sum::<f64>() * h
    }

    /// Whether `|degree(u) - 1| <= tol` on every cell of the label grid (the
    /// block rows for step-like kernels).
    pub fn is_constant_degree(&self, tol: f64) -> bool {
        let (cells, probe): (usize, Box<dyn Fn(usize) -> f64>) = match self.blocks() {
            Some(b) => {
                let n = b.n();
                (n, Box::new(move |i| b.row(i).iter().sum::<f64>() / n as f64))
            }
            None => {
                let grid = LabelGrid { cells: DEFAULT_QUADRATURE_NODES };
                (grid.len(), Box::new(move |l| self.degree(grid.midpoint(l))))
            }
        };
        (0..cells).all(|i| (probe(i) - 1.0).abs() <= tol)
    }

    pub fn l1_norm(&self) -> f64 {
        self.l1_norm_with(DEFAULT_QUADRATURE_NODES)
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_with(DEFAULT_QUADRATURE_NODES)
    }

    /// `L^1` norm; `nodes` is the per-axis quadrature resolution, ignored for
    /// step-like kernels.
    pub fn l1_norm_with(&self, nodes: usize) -> f64 {
        self.power_integral(nodes, |w| w.abs())
    }

    pub fn l2_norm_with(&self, nodes: usize) -> f64 {
        self.power_integral(nodes, |w| w * w).sqrt()
    }

    fn power_integral(&self, nodes: usize, f: impl Fn(f64) -> f64) -> f64 {
        match self.blocks() {
            Some(b) => {
                let n = b.n() as f64;
                b.as_slice().iter().map(|&w| f(w)).sum::<f64>() / (n * n)
            }
            None => {
                let h = 1.0 / nodes as f64;
                let mut total = 0.0;
                for i in 0..nodes {
                    let u = (i as f64 + 0.5) * h;
                    for j in 0..nodes {
                        total += f(self.eval(u, (j as f64 + 0.5) * h));
                    }
                }
                total * h * h
            }
        }
    }

    /// Midpoint values `W(u_l, u_k)` on an `L x L` grid. Exact block values
    /// for step kernels when `L` is a multiple of the block count.
    pub fn discretize(&self, grid: &LabelGrid) -> Matrix {
        let mids = grid.midpoints();
        Matrix::from_fn(grid.len(), |l, k| self.eval(mids[l], mids[k]))
    }

    /// Nystrom matrix `K_lk = W(u_l, u_k) / L`.
    pub fn grid_operator(&self, grid: &LabelGrid) -> Matrix {
        let w = grid.weight();
        let mids = grid.midpoints();
        Matrix::from_fn(grid.len(), |l, k| self.eval(mids[l], mids[k]) * w)
    }

    /// `(W phi)(u_l) = sum_k W(u_l,u_k) phi(u_k) / L`.
    pub fn apply_to_function(&self, grid: &LabelGrid, phi: &[f64]) -> Result<Vec<f64>> {
        if phi.len() != grid.len() {
            return Err(Error::invalid(
                "phi",
                format!("expected {} grid values, got {}", grid.len(), phi.len()),
            ));
        }
        let k = self.grid_operator(grid);
        let mut out = vec![0.0; grid.len()];
        k.mul_vec(phi, &mut out);
        Ok(out)
    }

    /// The measure `sum_j w_j W(u, v_j) delta_{x_j}` for a finitely supported
    /// label-state measure `m = sum_j w_j delta_{(v_j, x_j)}`.
    pub fn apply_to_measure(&self, m: &LabelStateMeasure, u: f64) -> ParticleMeasure {
        ParticleMeasure::from_atoms(
            m.atoms().iter().map(|a| (a.x, a.w * self.eval(u, a.u))),
        )
        .expect("kernel values and measure masses are nonnegative")
    }

    /// Smallest eigenvalue of the symmetric part of the Nystrom matrix.
    /// A discretized diagnostic for positive semidefiniteness, not a proof.
    pub fn psd_check(&self, grid: &LabelGrid, tol: f64) -> PsdReport {
        let k = self.grid_operator(grid).to_nalgebra();
        let sym = (&k + k.transpose()) * 0.5;
        let eig = nalgebra::SymmetricEigen::new(sym);
        let min_eigenvalue = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        PsdReport { is_psd: min_eigenvalue > -tol, min_eigenvalue, resolution: grid.len() }
    }
}

fn bilinear(values: &Matrix, u: f64, v: f64) -> f64 {
    let m = values.n();
    let locate = |s: f64| -> (usize, usize, f64) {
        let pos = (s * m as f64 - 0.5).clamp(0.0, (m - 1) as f64);
        let lo = (pos.floor() as usize).min(m - 1);
        let hi = (lo + 1).min(m - 1);
        (lo, hi, pos - lo as f64)
    };
    let (i0, i1, a) = locate(u);
    let (j0, j1, b) = locate(v);
    let top = values.get(i0, j0) * (1.0 - b) + values.get(i0, j1) * b;
    let bottom = values.get(i1, j0) * (1.0 - b) + values.get(i1, j1) * b;
    top * (1.0 - a) + bottom * a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn step_kernel_block_lookup() {
        let w = Kernel::step(m(&[&[0.0, 2.0], &[2.0, 0.0]])).unwrap();
        assert_eq!(w.eval(0.1, 0.7), 2.0);
        assert_eq!(w.eval(0.1, 0.3), 0.0);
        // last interval is closed
        assert_eq!(w.eval(1.0, 0.0), 2.0);
        assert_eq!(w.eval(0.5, 0.5), 0.0);
    }

    #[test]
    fn zero_and_constant_block_matrices() {
        let zero = Kernel::step(Matrix::zeros(3)).unwrap();
        let p = 0.37;
        let flat = Kernel::step(m(&[&[p, p], &[p, p]])).unwrap();
        let c = Kernel::constant(p).unwrap();
        for i in 0..50 {
            for j in 0..50 {
                let (u, v) = (i as f64 / 49.0, j as f64 / 49.0);
                assert_eq!(zero.eval(u, v), 0.0);
                assert_eq!(flat.eval(u, v), c.eval(u, v));
            }
        }
    }

    #[test]
    fn negative_entries_rejected() {
        let err = Kernel::step(m(&[&[0.0, -1.0], &[1.0, 0.0]])).unwrap_err();
        assert!(matches!(err, Error::NegativeEntry { row: 0, col: 1, .. }));
        assert!(Kernel::constant(-0.1).is_err());
        assert!(Kernel::two_block(1.0, -0.5, 0.0, 0.0).is_err());
    }

    #[test]
    fn degrees() {
        let one = Kernel::constant(1.0).unwrap();
        assert_eq!(one.degree(0.3), 1.0);
        let min = Kernel::min_kernel();
        for &u in &[0.0, 0.1, 0.37, 0.5, 0.9, 1.0] {
            assert!((min.degree(u) - (u - u * u / 2.0)).abs() < 1e-6, "u={u}");
        }
        assert!((min.degree(1.0) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn constant_degree_examples() {
        assert!(Kernel::constant(1.0).unwrap().is_constant_degree(1e-12));
        let skew = Kernel::two_block(1.6, 0.4, 0.2, 1.0).unwrap();
        assert!(!skew.is_constant_degree(1e-6));
        assert!((skew.degree(0.2) - 1.0).abs() < 1e-15);
        assert!((skew.degree(0.8) - 0.6).abs() < 1e-15);
        assert!(Kernel::two_block(1.5, 0.5, 0.5, 1.5).unwrap().is_constant_degree(1e-12));
        assert!(!Kernel::min_kernel().is_constant_degree(1e-3));
    }

    #[test]
    fn quadrature_matches_block_sums_on_step_kernels() {
        let w = Kernel::step(m(&[&[0.0, 1.0, 3.0], &[2.0, 0.0, 0.5], &[1.0, 1.0, 0.0]])).unwrap();
        for &u in &[0.05, 0.4, 0.9, 1.0] {
            let exact = w.degree(u);
            let quad = w.degree_by_quadrature(u, 3 * 128);
            assert!((exact - quad).abs() < 1e-12);
        }
    }

    #[test]
    fn norms() {
        let p = 0.3;
        let c = Kernel::constant(p).unwrap();
        assert!((c.l1_norm() - p).abs() < 1e-15);
        assert!((c.l2_norm() - p).abs() < 1e-15);
        let swap = Kernel::step(m(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        assert!((swap.l1_norm() - 0.5).abs() < 1e-15);
        let tb = Kernel::two_block(1.6, 0.4, 0.2, 1.0).unwrap();
        assert!((tb.l2_norm() - 0.94f64.sqrt()).abs() < 1e-12);
        // min kernel: int min(u,v) = 1/3, int min^2 = 1/6
        let mn = Kernel::min_kernel();
        assert!((mn.l1_norm_with(512) - 1.0 / 3.0).abs() < 1e-5);
        assert!((mn.l2_norm_with(512) - (1.0f64 / 6.0).sqrt()).abs() < 1e-5);
    }

    #[test]
    fn operator_on_functions() {
        let grid = LabelGrid::new(8).unwrap();
        let one = Kernel::constant(1.0).unwrap();
        let phi = vec![2.5; 8];
        for v in one.apply_to_function(&grid, &phi).unwrap() {
            assert!((v - 2.5).abs() < 1e-14);
        }
        let zero = Kernel::constant(0.0).unwrap();
        assert!(zero.apply_to_function(&grid, &phi).unwrap().iter().all(|&v| v == 0.0));

        let (a, b) = (1.3, 0.4);
        let tb = Kernel::two_block(a, b, b, a).unwrap();
        let ind: Vec<f64> = (0..8).map(|l| if l < 4 { 1.0 } else { 0.0 }).collect();
        let out = tb.apply_to_function(&grid, &ind).unwrap();
        for (l, v) in out.iter().enumerate() {
            let want = if l < 4 { a / 2.0 } else { b / 2.0 };
            assert!((v - want).abs() < 1e-14);
        }
        assert!(tb.apply_to_function(&grid, &[1.0]).is_err());
    }

    #[test]
    fn psd_examples() {
        let c = Kernel::constant(0.7).unwrap().psd_check(&LabelGrid::new(16).unwrap(), 1e-9);
        assert!(c.is_psd);
        let swap = Kernel::two_block(0.0, 1.0, 1.0, 0.0).unwrap();
        let r = swap.psd_check(&LabelGrid::new(2).unwrap(), 1e-9);
        assert!(!r.is_psd);
        assert!((r.min_eigenvalue + 0.5).abs() < 1e-12);
        let mn = Kernel::min_kernel().psd_check(&LabelGrid::new(64).unwrap(), 1e-9);
        assert!(mn.is_psd, "min eigenvalue {}", mn.min_eigenvalue);
    }

    #[test]
    fn tabulated_interpolates_between_midpoints() {
        let t = Kernel::tabulated(m(&[&[1.0, 0.0], &[0.0, 1.0]])).unwrap();
        assert_eq!(t.eval(0.1, 0.1), 1.0);
        assert!((t.eval(0.5, 0.25) - 0.5).abs() < 1e-15);
        assert!((t.eval(0.5, 0.5) - 0.5).abs() < 1e-15);
        assert_eq!(t.eval(0.9, 0.95), 1.0);
    }

    #[test]
    fn serde_validates() {
        let k: Kernel = serde_json::from_str(r#"{"type":"two_block","w11":1.6,"w12":0.4,"w21":0.2,"w22":1.0}"#).unwrap();
        assert_eq!(k.eval(0.7, 0.1), 0.2);
        let bad = serde_json::from_str::<Kernel>(r#"{"type":"step","matrix":[[0,-1],[1,0]]}"#);
        assert!(bad.is_err());
        let back: Kernel = serde_json::from_str(&serde_json::to_string(&k).unwrap()).unwrap();
        assert_eq!(back, k);
    }
}
