//! Exact bounded-Lipschitz norm of a signed measure on the real line.
//!
//! `||m||_BL = sup { sum_k d_k phi_k : |phi_k| <= 1, |phi_{k+1} - phi_k| <= x_{k+1} - x_k }`
//! over the sorted support `x_1 < ... < x_K` with net masses `d_k`.
//! Adjacent constraints imply all pairwise ones in one dimension.
//!
//! The program is solved by a left-to-right dynamic program on the value
//! function `F_k(phi)`, the best partial sum given `phi_k = phi`. Each `F_k`
//! is concave and piecewise linear on `[-1, 1]`, so it is stored as
//!
//! `F(phi) = C + d phi - sum_{b in L} c_b (b - phi)^+ - sum_{b in R} c_b (phi - b)^+`
//!
//! with every point of `L` at or left of every point of `R`. With `d = 0` the
//! maximum is `C`, attained between the two sets. The Lipschitz window step
//! moves `L` left and `R` right by the gap; adding a mass adds to `d`, and
//! `d` is folded back into `C` by transferring breakpoints across the
//! plateau. Domain bounds are breakpoints of infinite weight. Every point is
//! moved at most once per insertion, so the whole pass is `O(K)` amortized.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
struct Knot {
    at: f64,
    weight: f64,
}

const WALL: f64 = f64::INFINITY;

struct ConcavePwl {
    constant: f64,
    slope: f64,
    // stored positions are relative to the lazy offsets
    left: VecDeque<Knot>,
    left_offset: f64,
    right: VecDeque<Knot>,
    right_offset: f64,
}

impl ConcavePwl {
    fn flat_on_unit_interval() -> Self {
        ConcavePwl {
            constant: 0.0,
            slope: 0.0,
            left: VecDeque::from([Knot { at: -1.0, weight: WALL }]),
            left_offset: 0.0,
            right: VecDeque::from([Knot { at: 1.0, weight: WALL }]),
            right_offset: 0.0,
        }
    }

    /// `F(phi) <- sup_{|psi - phi| <= gap} F(psi)`, then restrict to `[-1, 1]`.
    fn widen(&mut self, gap: f64) {
        self.left_offset -= gap;
        self.right_offset += gap;
        while let Some(k) = self.left.front() {
            if k.at + self.left_offset < -1.0 {
                self.left.pop_front();
            } else {
                break;
            }
        }
        self.left.push_front(Knot { at: -1.0 - self.left_offset, weight: WALL });
        while let Some(k) = self.right.back() {
            if k.at + self.right_offset > 1.0 {
                self.right.pop_back();
            } else {
                break;
            }
        }
        self.right.push_back(Knot { at: 1.0 - self.right_offset, weight: WALL });
    }

    /// `F(phi) <- F(phi) + mass * phi`, renormalized to zero pending slope.
    fn add_linear(&mut self, mass: f64) {
        self.slope += mass;
        while self.slope > 0.0 {
            let k = self.right.pop_front().expect("right wall is never removed");
            let r = k.at + self.right_offset;
            if k.weight <= self.slope {
                self.constant += k.weight * r;
                self.slope -= k.weight;
                self.left.push_back(Knot { at: r - self.left_offset, weight: k.weight });
            } else {
                self.constant += self.slope * r;
                self.left.push_back(Knot { at: r - self.left_offset, weight: self.slope });
                self.right.push_front(Knot { at: k.at, weight: k.weight - self.slope });
                self.slope = 0.0;
            }
        }
        while self.slope < 0.0 {
            let k = self.left.pop_back().expect("left wall is never removed");
            let l = k.at + self.left_offset;
            let need = -self.slope;
            if k.weight <= need {
                self.constant -= k.weight * l;
                self.slope += k.weight;
                self.right.push_front(Knot { at: l - self.right_offset, weight: k.weight });
            } else {
                self.constant -= need * l;
                self.right.push_front(Knot { at: l - self.right_offset, weight: need });
                self.left.push_back(Knot { at: k.at, weight: k.weight - need });
                self.slope = 0.0;
            }
        }
    }
}

/// BL norm of `sum_k d_k delta_{x_k}` given strictly increasing `x`.
pub fn bl_norm_sorted(x: &[f64], d: &[f64]) -> f64 {
    assert_eq!(x.len(), d.len());
    let mut f = ConcavePwl::flat_on_unit_interval();
    for k in 0..x.len() {
        if k > 0 {
            f.widen(x[k] - x[k - 1]);
        }
        if d[k] != 0.0 {
            f.add_linear(d[k]);
        }
    }
    f.constant.max(0.0)
}

/// BL norm of a signed measure given as unsorted `(x, mass)` pairs. Atoms
/// at identical positions are merged.
pub fn bl_norm_signed(mut atoms: Vec<(f64, f64)>) -> f64 {
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut x = Vec::with_capacity(atoms.len());
    let mut d: Vec<f64> = Vec::with_capacity(atoms.len());
    for (xi, w) in atoms {
        if x.last() == Some(&xi) {
            *d.last_mut().unwrap() += w;
        } else {
            x.push(xi);
            d.push(w);
        }
    }
    bl_norm_sorted(&x, &d)
}
