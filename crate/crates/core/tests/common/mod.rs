//! Brute-force and LP oracles shared by the integration tests.

#![allow(dead_code)]

use graphon::kernel::Matrix;
use minilp::{ComparisonOp, OptimizationDirection, Problem};

/// Dense LP with every pairwise Lipschitz constraint.
pub fn bl_dense_lp(atoms: &[(f64, f64)]) -> f64 {
    let mut p = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = atoms.iter().map(|&(_, d)| p.add_var(d, (-1.0, 1.0))).collect();
    for i in 0..atoms.len() {
        for j in 0..atoms.len() {
            if i != j {
                let gap = (atoms[i].0 - atoms[j].0).abs();
                p.add_constraint([(vars[i], 1.0), (vars[j], -1.0)], ComparisonOp::Le, gap);
            }
        }
    }
    p.solve().expect("bounded feasible LP").objective()
}

/// `max_{S, T} |sum_{S x T} xi| / n^2` over all pairs of index sets.
pub fn cut_two_sided(xi: &Matrix) -> f64 {
    let n = xi.n();
    let mut best: f64 = 0.0;
    for s in 0u32..(1 << n) {
        for t in 0u32..(1 << n) {
            let mut sum = 0.0;
            for i in 0..n {
                if s >> i & 1 == 1 {
                    for j in 0..n {
                        if t >> j & 1 == 1 {
                            sum += xi.get(i, j);
                        }
                    }
                }
            }
            best = best.max(sum.abs());
        }
    }
    best / (n * n) as f64
}

/// `max_{s, t in {-1, 1}^n} s^T xi t / n^2` over all sign pairs.
pub fn inf_to_one_two_sided(xi: &Matrix) -> f64 {
    let n = xi.n();
    let sign = |m: u32, i: usize| if m >> i & 1 == 1 { 1.0 } else { -1.0 };
    let mut best = f64::NEG_INFINITY;
    for s in 0u32..(1 << n) {
        for t in 0u32..(1 << n) {
            let mut sum = 0.0;
            for i in 0..n {
                for j in 0..n {
                    sum += sign(s, i) * xi.get(i, j) * sign(t, j);
                }
            }
            best = best.max(sum);
        }
    }
    best / (n * n) as f64
}

/// `sum_{k < terms} a^k K^{k+1} psi`.
pub fn neumann(k: &Matrix, a: f64, psi: &[f64], terms: usize) -> Vec<f64> {
    let n = psi.len();
    let mut term = vec![0.0; n];
    k.mul_vec(psi, &mut term);
    let mut out = term.clone();
    let mut next = vec![0.0; n];
    let mut scale = 1.0;
    for _ in 1..terms {
        k.mul_vec(&term, &mut next);
        std::mem::swap(&mut term, &mut next);
        scale *= a;
        for (o, t) in out.iter_mut().zip(&term) {
            *o += scale * t;
        }
    }
    out
}
