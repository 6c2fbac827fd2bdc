//! Cut norm and the infinity-to-one operator norm of step kernels.
//!
//! For a step kernel both suprema are attained on block-aligned sets (resp.
//! block-constant sign functions), so they reduce to finite problems over
//! index vectors. Exact mode enumerates one side in Gray-code order and
//! maximizes the other side in closed form; heuristic mode runs alternating
//! maximization from seeded random starts and reports a lower bound.

use rayon::prelude::*;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};
use crate::seeds;

/// Largest block count accepted by exact mode (cost `2^n * n`).
pub const EXACT_MAX_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CutMode {
    Exact,
    /// Alternating maximization; the result is a lower bound.
    Heuristic { restarts: usize, seed: u64 },
}

impl CutMode {
    fn label(&self) -> &'static str {
        match self {
            CutMode::Exact => "exact",
            CutMode::Heuristic { .. } => "heuristic_lower_bound",
        }
    }
}

/// Maximizer witnessing a reported norm value. Indices are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormCertificate {
    /// Row and column index sets `S1`, `S2` of the cut.
    Sets { rows: Vec<usize>, cols: Vec<usize> },
    /// Sign vectors `s` (rows) and `t` (columns).
    Signs { s: Vec<i8>, t: Vec<i8> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub name: String,
    pub value: f64,
    pub mode: String,
    pub certificate: NormCertificate,
}

/// Cut norm `||W_xi||_box` of the step kernel of a square matrix (entries of
/// any sign).
pub fn cut_norm(xi: &Matrix, mode: CutMode) -> Result<NormReport> {
    let n = xi.n();
    if n == 0 {
        return Err(Error::invalid("matrix", "empty matrix"));
    }
    let (value, rows, cols) = match mode {
        CutMode::Exact => {
            check_exact(n)?;
            cut_exact(xi)
        }
        CutMode::Heuristic { restarts, seed } => cut_heuristic(xi, restarts, seed)?,
    };
    Ok(NormReport {
        name: "cut_norm".into(),
        value,
        mode: mode.label().into(),
        certificate: NormCertificate::Sets { rows, cols },
    })
}

/// `||W_xi||_{inf -> 1} = max_{s,t in {-1,1}^n} s^T xi t / n^2`.
pub fn opnorm_inf_to_1(xi: &Matrix, mode: CutMode) -> Result<NormReport> {
    let n = xi.n();
    if n == 0 {
        return Err(Error::invalid("matrix", "empty matrix"));
    }
    let (value, s, t) = match mode {
        CutMode::Exact => {
            check_exact(n)?;
            opnorm_exact(xi)
        }
        CutMode::Heuristic { restarts, seed } => opnorm_heuristic(xi, restarts, seed)?,
    };
    Ok(NormReport {
        name: "opnorm_inf_to_1".into(),
        value,
        mode: mode.label().into(),
        certificate: NormCertificate::Signs { s, t },
    })
}

fn check_exact(n: usize) -> Result<()> {
    if n > EXACT_MAX_N {
        return Err(Error::TooLarge { n, max: EXACT_MAX_N });
    }
    Ok(())
}

fn norm_factor(n: usize) -> f64 {
    1.0 / (n * n) as f64
}

fn indicator_of(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
}

/// `sum_{i in S, j in T} xi_ij` computed from scratch.
fn cut_sum(xi: &Matrix, rows: &[bool], cols: &[bool]) -> f64 {
    let mut total = 0.0;
    for (i, _) in rows.iter().enumerate().filter(|(_, &r)| r) {
        let row = xi.row(i);
        total += cols.iter().zip(row).filter(|(&c, _)| c).map(|(_, &v)| v).sum::<f64>();
    }
    total
}

/// Best row set for fixed column image `y = xi t`; returns the mask and the
/// signed sum for the requested branch.
fn best_rows(y: &[f64], positive: bool) -> Vec<bool> {
    y.iter().map(|&v| if positive { v > 0.0 } else { v < 0.0 }).collect()
}

fn cut_exact(xi: &Matrix) -> (f64, Vec<usize>, Vec<usize>) {
    let n = xi.n();
    let cols_major = xi.transpose();
    let mut y = vec![0.0; n];
    let mut t = vec![false; n];
    let mut best = (0.0, 0u64, true);
    for k in 1u64..(1u64 << n) {
        // Gray code: bit flipped between k-1 and k
        let j = k.trailing_zeros() as usize;
        let sign = if t[j] { -1.0 } else { 1.0 };
        t[j] = !t[j];
        for (yi, &c) in y.iter_mut().zip(cols_major.row(j)) {
            *yi += sign * c;
        }
        let (mut pos, mut neg) = (0.0, 0.0);
        for &v in &y {
            if v > 0.0 {
                pos += v;
            } else {
                neg -= v;
            }
        }
        let gray = k ^ (k >> 1);
        if pos > best.0 {
            best = (pos, gray, true);
        }
        if neg > best.0 {
            best = (neg, gray, false);
        }
    }
    // recompute the winner exactly to shed Gray-code rounding
    let (_, gray, positive) = best;
    let cols: Vec<bool> = (0..n).map(|j| gray >> j & 1 == 1).collect();
    let mut y = vec![0.0; n];
    let colf: Vec<f64> = cols.iter().map(|&b| b as u8 as f64).collect();
    xi.mul_vec(&colf, &mut y);
    let rows = best_rows(&y, positive);
    let value = cut_sum(xi, &rows, &cols).abs() * norm_factor(n);
    (value, indicator_of(&rows), indicator_of(&cols))
}

struct LocalMax {
    value: f64,
    rows: Vec<bool>,
    cols: Vec<bool>,
}

/// Alternating maximization of `sign * sum_{S x T} xi` from a start column set.
fn cut_ascend(xi: &Matrix, xit: &Matrix, start: Vec<bool>, positive: bool) -> LocalMax {
    let n = xi.n();
    let sgn = if positive { 1.0 } else { -1.0 };
    let mut cols = start;
    let mut rows;
    let mut y = vec![0.0; n];
    let mut best = f64::NEG_INFINITY;
    let as_f = |m: &[bool]| m.iter().map(|&b| b as u8 as f64).collect::<Vec<_>>();
    loop {
        xi.mul_vec(&as_f(&cols), &mut y);
        rows = best_rows(&y, positive);
        xit.mul_vec(&as_f(&rows), &mut y);
        let next_cols = best_rows(&y, positive);
        let value = sgn * cut_sum(xi, &rows, &next_cols);
        if value <= best * (1.0 + 1e-15) + 1e-300 && best.is_finite() {
            break;
        }
        best = value;
        cols = next_cols;
    }
    LocalMax { value: best.max(0.0), rows, cols }
}

fn cut_heuristic(xi: &Matrix, restarts: usize, seed: u64) -> Result<(f64, Vec<usize>, Vec<usize>)> {
    if restarts == 0 {
        return Err(Error::invalid("restarts", "heuristic mode needs at least one restart"));
    }
    let n = xi.n();
    let xit = xi.transpose();
    let best = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let start: Vec<bool> = if r == 0 {
                vec![true; n]
            } else {
                let mut rng = seeds::stream_rng(seed, r as u64);
                (0..n).map(|_| rng.random::<bool>()).collect()
            };
            let a = cut_ascend(xi, &xit, start.clone(), true);
            let b = cut_ascend(xi, &xit, start, false);
            if b.value > a.value { b } else { a }
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(None::<LocalMax>, |acc, m| match acc {
            Some(a) if a.value >= m.value => Some(a),
            _ => Some(m),
        })
        .expect("at least one restart");
    Ok((best.value * norm_factor(n), indicator_of(&best.rows), indicator_of(&best.cols)))
}

fn signs(y: &[f64]) -> Vec<i8> {
    y.iter().map(|&v| if v < 0.0 { -1 } else { 1 }).collect()
}

fn bilinear_signs(xi: &Matrix, s: &[i8], t: &[i8]) -> f64 {
    let mut total = 0.0;
    for (i, &si) in s.iter().enumerate() {
        let row: f64 = xi.row(i).iter().zip(t).map(|(&v, &tj)| v * tj as f64).sum();
        total += si as f64 * row;
    }
    total
}

fn opnorm_exact(xi: &Matrix) -> (f64, Vec<i8>, Vec<i8>) {
    let n = xi.n();
    let cols_major = xi.transpose();
    // t and -t give the same value, so fix t_0 = +1 and enumerate the rest
    let mut t = vec![1i8; n];
    let mut y = vec![0.0; n];
    let ones = vec![1.0; n];
    xi.mul_vec(&ones, &mut y);
    let score = |y: &[f64]| y.iter().map(|v| v.abs()).sum::<f64>();
    let mut best = (score(&y), 0u64);
    let free = n - 1;
    for k in 1u64..(1u64 << free) {
        let j = k.trailing_zeros() as usize + 1;
        let delta = -2.0 * t[j] as f64;
        t[j] = -t[j];
        for (yi, &c) in y.iter_mut().zip(cols_major.row(j)) {
            *yi += delta * c;
        }
        let v = score(&y);
        if v > best.0 {
            best = (v, k ^ (k >> 1));
        }
    }
    let gray = best.1;
    let t: Vec<i8> = (0..n).map(|j| if j > 0 && gray >> (j - 1) & 1 == 1 { -1 } else { 1 }).collect();
    let tf: Vec<f64> = t.iter().map(|&v| v as f64).collect();
    xi.mul_vec(&tf, &mut y);
    let s = signs(&y);
    let value = bilinear_signs(xi, &s, &t) * norm_factor(n);
    (value, s, t)
}

fn opnorm_heuristic(xi: &Matrix, restarts: usize, seed: u64) -> Result<(f64, Vec<i8>, Vec<i8>)> {
    if restarts == 0 {
        return Err(Error::invalid("restarts", "heuristic mode needs at least one restart"));
    }
    let n = xi.n();
    let xit = xi.transpose();
    let runs: Vec<(f64, Vec<i8>, Vec<i8>)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut t: Vec<i8> = if r == 0 {
                vec![1; n]
            } else {
                let mut rng = seeds::stream_rng(seed, r as u64);
                (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()
            };
            let mut y = vec![0.0; n];
            let mut best = f64::NEG_INFINITY;
            let mut s;
            loop {
                let tf: Vec<f64> = t.iter().map(|&v| v as f64).collect();
                xi.mul_vec(&tf, &mut y);
                s = signs(&y);
                let sf: Vec<f64> = s.iter().map(|&v| v as f64).collect();
                xit.mul_vec(&sf, &mut y);
                let next_t = signs(&y);
                let value = bilinear_signs(xi, &s, &next_t);
                if best.is_finite() && value <= best * (1.0 + 1e-15) {
                    break;
                }
                best = value;
                t = next_t;
            }
            (best, s, t)
        })
        .collect();
    let (value, s, t) = runs
        .into_iter()
        .fold(None::<(f64, Vec<i8>, Vec<i8>)>, |acc, m| match acc {
            Some(a) if a.0 >= m.0 => Some(a),
            _ => Some(m),
        })
        .expect("at least one restart");
    Ok((value * norm_factor(n), s, t))
}
