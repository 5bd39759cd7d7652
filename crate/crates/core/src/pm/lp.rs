//! A small dense linear-programming solver: two-phase primal simplex with
//! Bland's rule (anti-cycling), for the low-dimensional cell geometry of
//! partial-monitoring games. Problems here have at most a few dozen
//! variables, so a textbook tableau implementation is the right tool.

use crate::error::{Error, Result};

/// Pivot tolerance: coefficients smaller than this are treated as zero.
const TOL: f64 = 1e-9;

const MAX_PIVOTS: usize = 20_000;

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum LpStatus {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
}

/// Maximize `c . x` subject to `A x = b`, `x >= 0`.
///
/// `a` is row-major with one `Vec` per constraint. Rows with negative right
/// sides are flipped internally.
pub fn solve_lp(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Result<LpStatus> {
    let m = a.len();
    if b.len() != m {
        return Err(Error::Domain(format!(
            "solve_lp: {m} constraint rows but {} right sides",
            b.len()
        )));
    }
    let n = c.len();
    for (i, row) in a.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Domain(format!(
                "solve_lp: row {i} has {} coefficients, objective has {n}",
                row.len()
            )));
        }
    }
    for (&v, name) in b
        .iter()
        .chain(c.iter())
        .chain(a.iter().flatten())
        .zip(std::iter::repeat("coefficient"))
    {
        if !v.is_finite() {
            return Err(Error::Domain(format!("solve_lp: non-finite {name} {v}")));
        }
    }
    if m == 0 {
        // No constraints: optimum is 0 at the origin unless some c_j > 0.
        if c.iter().any(|&cj| cj > TOL) {
            return Ok(LpStatus::Unbounded);
        }
        return Ok(LpStatus::Optimal(LpSolution {
            value: 0.0,
            x: vec![0.0; n],
        }));
    }

    // Tableau: columns 0..n are the real variables, n..n+m the artificials,
    // last column the right side. Basis starts as the artificials.
    let mut t: Vec<Vec<f64>> = Vec::with_capacity(m);
    for i in 0..m {
        let flip = if b[i] < 0.0 { -1.0 } else { 1.0 };
        let mut row = vec![0.0; n + m + 1];
        for j in 0..n {
            row[j] = flip * a[i][j];
        }
        row[n + i] = 1.0;
        row[n + m] = flip * b[i];
        t.push(row);
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    // Phase 1: maximize -sum(artificials).
    let mut phase1_obj = vec![0.0; n + m];
    for j in n..n + m {
        phase1_obj[j] = -1.0;
    }
    run_simplex(&mut t, &mut basis, &phase1_obj, n + m)?;
    let infeas: f64 = basis
        .iter()
        .zip(t.iter())
        .filter(|(&bj, _)| bj >= n)
        .map(|(_, row)| row[n + m])
        .sum();
    if infeas > 1e-7 {
        return Ok(LpStatus::Infeasible);
    }
    // Drive remaining (zero-valued) artificials out of the basis, dropping
    // rows that turn out to be redundant.
    let mut i = 0;
    while i < basis.len() {
        if basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| t[i][j].abs() > TOL) {
                pivot(&mut t, &mut basis, i, j, n + m);
            } else {
                t.remove(i);
                basis.remove(i);
                continue;
            }
        }
        i += 1;
    }

    // Phase 2 objective: the real costs, artificials barred from entering.
    let mut phase2_obj = vec![f64::NEG_INFINITY; n + m];
    phase2_obj[..n].copy_from_slice(c);
    if !run_simplex(&mut t, &mut basis, &phase2_obj, n + m)? {
        return Ok(LpStatus::Unbounded);
    }

    let mut x = vec![0.0; n];
    for (i, &bj) in basis.iter().enumerate() {
        if bj < n {
            x[bj] = t[i][n + m];
        }
    }
    let value: f64 = c.iter().zip(&x).map(|(cj, xj)| cj * xj).sum();
    Ok(LpStatus::Optimal(LpSolution { value, x }))
}

/// Run simplex pivots to optimality for the given objective (entries of
/// `NEG_INFINITY` bar a column from entering). Returns `false` when the
/// objective is unbounded above.
fn run_simplex(
    t: &mut Vec<Vec<f64>>,
    basis: &mut [usize],
    obj: &[f64],
    width: usize,
) -> Result<bool> {
    for _ in 0..MAX_PIVOTS {
        // Reduced cost of column j: c_j - sum_i c_basis(i) * t[i][j].
        let reduced = |j: usize| -> f64 {
            if obj[j] == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            let mut r = obj[j];
            for (row, &bi) in t.iter().zip(basis.iter()) {
                let cb = obj[bi];
                if cb != 0.0 && cb != f64::NEG_INFINITY {
                    r -= cb * row[j];
                }
            }
            r
        };
        // Bland: smallest improving column index.
        let entering = (0..width).find(|&j| !basis.contains(&j) && reduced(j) > TOL);
        let Some(j) = entering else {
            return Ok(true);
        };
        // Ratio test; ties broken by smallest basis label (Bland).
        let mut leave: Option<(usize, f64)> = None;
        for (i, row) in t.iter().enumerate() {
            if row[j] > TOL {
                let ratio = row[width] / row[j];
                match leave {
                    None => leave = Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - TOL
                            || (ratio < lr + TOL && basis[i] < basis[li])
                        {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let Some((i, _)) = leave else {
            return Ok(false);
        };
        pivot(t, basis, i, j, width);
    }
    Err(Error::NoConvergence {
        context: "simplex pivot limit".into(),
        residual: f64::NAN,
        iterations: MAX_PIVOTS,
    })
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], i: usize, j: usize, width: usize) {
    let piv = t[i][j];
    for v in t[i].iter_mut() {
        *v /= piv;
    }
    for r in 0..t.len() {
        if r != i {
            let factor = t[r][j];
            if factor != 0.0 {
                for col in 0..=width {
                    t[r][col] -= factor * t[i][col];
                }
            }
        }
    }
    basis[i] = j;
}
