//! FTRL solver over the probability simplex.
//!
//! Solves `argmin_q <L, q> + beta * sum_i q_i log q_i + c * sum_i log(1/q_i)`
//! for `beta > 0`, `c >= 0`. The reported multiplier `mu` and residual refer
//! to the stationarity system
//!
//! ```text
//!   L_i + beta log q_i - c / q_i + mu = 0,    sum_i q_i = 1,
//! ```
//!
//! whose left-hand side absolute maximum over coordinates is the KKT
//! residual. For `c = 0` the solution is the closed-form softmax. For `c > 0`
//! each coordinate map `q -> beta log q - c/q` is strictly increasing, so the
//! solver inverts it per coordinate (Newton in `x = log q`, globally
//! convergent because the map is concave and increasing in `x`) inside a
//! safeguarded Newton iteration on `mu` (the simplex sum is strictly
//! decreasing in `mu`).

use crate::error::{Error, Result};
use crate::simplex::{bregman, log_barrier, neg_entropy, BregmanKind, ProbVector};
use serde::{Deserialize, Serialize};

/// Regularizer weights: `beta` on negative entropy, `barrier_weight` on the
/// log barrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizerSpec {
    pub beta: f64,
    pub barrier_weight: f64,
}

impl RegularizerSpec {
    pub fn new(beta: f64, barrier_weight: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::Domain(format!(
                "regularizer requires beta > 0, got {beta}"
            )));
        }
        if !(barrier_weight >= 0.0) || !barrier_weight.is_finite() {
            return Err(Error::Domain(format!(
                "regularizer requires barrier_weight >= 0, got {barrier_weight}"
            )));
        }
        Ok(RegularizerSpec {
            beta,
            barrier_weight,
        })
    }

    /// Full regularizer value `beta * sum q log q + c * sum log(1/q)`.
    pub fn value(&self, q: &ProbVector) -> f64 {
        let mut v = self.beta * neg_entropy(q);
        if self.barrier_weight > 0.0 {
            v += self.barrier_weight * log_barrier(q);
        }
        v
    }
}

/// Solver output: the minimizer, its multiplier, and the measured residual.
#[derive(Debug, Clone)]
pub struct FtrlSolution {
    pub q: ProbVector,
    pub mu: f64,
    pub kkt_residual: f64,
    /// Outer iterations spent on the multiplier search (0 for the softmax
    /// closed form).
    pub iterations: usize,
}

pub const DEFAULT_TOL: f64 = 1e-10;

// log(1e-300): coordinates are floored here during the inner inversion so
// that exp(-x) stays finite.
const LOG_FLOOR: f64 = -690.77552789821371;

/// Solve the FTRL problem from scratch. `tol` bounds the returned KKT
/// residual (use [`DEFAULT_TOL`] unless the loss scale demands otherwise).
pub fn solve_ftrl(cum_loss: &[f64], reg: &RegularizerSpec, tol: f64) -> Result<FtrlSolution> {
    solve_ftrl_warm(cum_loss, reg, tol, None)
}

/// Same as [`solve_ftrl`] but optionally seeded with a previous solution of a
/// nearby instance. Warm starts change iteration counts, never semantics.
pub fn solve_ftrl_warm(
    cum_loss: &[f64],
    reg: &RegularizerSpec,
    tol: f64,
    warm: Option<&FtrlSolution>,
) -> Result<FtrlSolution> {
    let k = cum_loss.len();
    if k < 2 {
        return Err(Error::Domain(format!(
            "solve_ftrl requires k >= 2 coordinates, got {k}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("solve_ftrl requires tol > 0, got {tol}")));
    }
    for (i, &l) in cum_loss.iter().enumerate() {
        if !l.is_finite() {
            return Err(Error::Domain(format!(
                "solve_ftrl: loss coordinate {i} is not finite: {l}"
            )));
        }
    }
    if reg.barrier_weight == 0.0 {
        return Ok(solve_softmax(cum_loss, reg.beta));
    }
    solve_hybrid(cum_loss, reg, tol, warm)
}

/// Objective value `<L, q> + beta * sum q log q + c * sum log(1/q)`.
/// Infinite on the simplex boundary when the barrier weight is positive.
pub fn ftrl_objective(cum_loss: &[f64], reg: &RegularizerSpec, q: &ProbVector) -> Result<f64> {
    if cum_loss.len() != q.len() {
        return Err(Error::Domain(format!(
            "ftrl_objective: dimension mismatch {} vs {}",
            cum_loss.len(),
            q.len()
        )));
    }
    let lin: f64 = cum_loss.iter().zip(q.values()).map(|(l, v)| l * v).sum();
    Ok(lin + reg.value(q))
}

/// Per-round penalty and stability terms of the standard FTRL regret
/// decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyStability {
    /// `Phi_t(q_{t+1}) - Phi_{t+1}(q_{t+1})`.
    pub penalty: f64,
    /// `<q_t - q_{t+1}, yhat_t> - D_{Phi_t}(q_{t+1}, q_t)`.
    pub stability: f64,
}

/// Evaluate both decomposition terms for one round: the regularizers of the
/// current and next round, the two consecutive FTRL outputs, and the loss
/// estimate fed between them.
pub fn penalty_stability_split(
    y_hat: &[f64],
    q_t: &ProbVector,
    q_next: &ProbVector,
    reg_t: &RegularizerSpec,
    reg_next: &RegularizerSpec,
) -> Result<PenaltyStability> {
    if y_hat.len() != q_t.len() || q_t.len() != q_next.len() {
        return Err(Error::Domain("penalty_stability_split: dimension mismatch".into()));
    }
    let penalty = reg_t.value(q_next) - reg_next.value(q_next);
    let dot: f64 = y_hat
        .iter()
        .zip(q_t.values().iter().zip(q_next.values()))
        .map(|(y, (a, b))| y * (a - b))
        .sum();
    let div = bregman(
        BregmanKind::Hybrid {
            beta: reg_t.beta,
            barrier_weight: reg_t.barrier_weight,
        },
        q_next,
        q_t,
    )?;
    Ok(PenaltyStability {
        penalty,
        stability: dot - div,
    })
}

fn solve_softmax(cum_loss: &[f64], beta: f64) -> FtrlSolution {
    let m = cum_loss.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = cum_loss.iter().map(|&l| (-(l - m) / beta).exp()).collect();
    let z: f64 = w.iter().sum();
    for v in &mut w {
        *v /= z;
    }
    let mu = -m + beta * z.ln();
    let residual = w
        .iter()
        .zip(cum_loss)
        .map(|(&q, &l)| (l + beta * q.max(1e-300).ln() + mu).abs())
        .fold(0.0, f64::max);
    FtrlSolution {
        q: ProbVector::from_normalized(w),
        mu,
        kkt_residual: residual,
        iterations: 0,
    }
}

/// Invert `beta * x - c * exp(-x) = y` in `x = log q` by Newton steps
/// safeguarded with a bracket (`f` is increasing, so any sign evaluation
/// tightens it). Plain Newton is unsafe here: one step from the right of the
/// root can overshoot arbitrarily far left, where the recovery crawls back
/// one unit per iteration. `xlo0` must satisfy `f(xlo0) <= 0`; the right end
/// `max(0, (y + c) / beta)` has `f >= 0` since `exp(-x) <= 1` there.
fn invert_coordinate(y: f64, beta: f64, c: f64, x0: f64, xlo0: f64, ftol: f64) -> Result<f64> {
    let mut xlo = xlo0.max(LOG_FLOOR);
    let mut xhi = ((y + c) / beta).max(0.0).min(700.0);
    let mut x = x0.clamp(xlo, xhi);
    for _ in 0..200 {
        let e = (-x).exp();
        let f = beta * x - c * e - y;
        // `f` cannot be evaluated below the rounding noise of its three
        // terms, so never demand more than that.
        let noise = 4.0 * f64::EPSILON * ((beta * x).abs() + c * e + y.abs());
        if f.abs() <= ftol.max(noise) {
            return Ok(x);
        }
        if f < 0.0 {
            xlo = x;
        } else {
            xhi = x;
        }
        let mut next = x - f / (beta + c * e);
        if !(next > xlo && next < xhi) {
            next = 0.5 * (xlo + xhi);
        }
        if next == x {
            // The bracket has collapsed to adjacent floats; `f` is as small
            // as this precision allows.
            return Ok(x);
        }
        x = next;
    }
    let e = (-x).exp();
    Err(Error::NoConvergence {
        context: "ftrl coordinate inversion".into(),
        residual: (beta * x - c * e - y).abs(),
        iterations: 200,
    })
}

fn solve_hybrid(
    cum_loss: &[f64],
    reg: &RegularizerSpec,
    tol: f64,
    warm: Option<&FtrlSolution>,
) -> Result<FtrlSolution> {
    let k = cum_loss.len();
    let (beta, c) = (reg.beta, reg.barrier_weight);
    let min_l = cum_loss.iter().cloned().fold(f64::INFINITY, f64::min);

    // Lower bracket: at mu = -min L the coordinate achieving the minimum has
    // y = 0, whose root exceeds q = 1, so the simplex sum exceeds one.
    let lo0 = -min_l;

    // Per-coordinate log-probabilities, reused as warm starts across outer
    // iterations.
    let mut x: Vec<f64> = match warm {
        Some(w) if w.q.len() == k => w
            .q
            .values()
            .iter()
            .map(|&q| q.max(1e-300).ln())
            .collect(),
        _ => vec![(1.0 / k as f64).ln(); k],
    };

    // A coordinate solved to |f| <= ftol carries a probability error of
    // about ftol * q / beta, so the summed error on `s` is ftol / beta.
    // Scale ftol with min(1, beta) to keep that error below stol even for
    // rates below one.
    let mut ftol = 0.0625 * tol * beta.min(1.0);
    // Outer target on |sum q - 1|; refined adaptively until the measured
    // residual on the renormalized vector meets `tol`.
    let mut stol = 0.25 * tol / beta.max(1.0);

    let mut mu = match warm {
        Some(w) if w.mu.is_finite() && w.mu > lo0 => w.mu,
        _ => lo0 + beta.max(1.0) + c,
    };
    let mut lo = lo0;
    let mut hi = f64::INFINITY;

    let mut outer = 0usize;
    let eval = |mu: f64, x: &mut Vec<f64>, ftol: f64| -> Result<(f64, f64)> {
        // Returns (sum q - 1, d(sum)/d(mu)).
        let mut s = 0.0;
        let mut ds = 0.0;
        for i in 0..k {
            let y = -(cum_loss[i] + mu);
            // The barrier keeps the root above this: at q = c / (|L_i| +
            // |mu| + beta + c) the gradient is still negative.
            let lb = (c / (cum_loss[i].abs() + mu.abs() + beta + c)).max(1e-300).ln();
            let start = if x[i].is_finite() { x[i].max(lb) } else { lb };
            let xi = invert_coordinate(y, beta, c, start, lb, ftol)?;
            x[i] = xi;
            let q = xi.exp();
            s += q;
            ds += -q * q / (beta * q + c);
        }
        Ok((s - 1.0, ds))
    };

    loop {
        let (s, ds) = eval(mu, &mut x, ftol)?;
        outer += 1;
        if s > 0.0 {
            lo = lo.max(mu);
        } else {
            hi = hi.min(mu);
        }
        if s.abs() <= stol {
            // Candidate: renormalize and measure the true residual.
            let mut q: Vec<f64> = x.iter().map(|&v| v.exp()).collect();
            let total: f64 = q.iter().sum();
            for v in &mut q {
                *v /= total;
            }
            let residual = q
                .iter()
                .zip(cum_loss)
                .map(|(&qi, &l)| (l + beta * qi.max(1e-300).ln() - c / qi + mu).abs())
                .fold(0.0, f64::max);
            if residual <= tol {
                return Ok(FtrlSolution {
                    q: ProbVector::from_normalized(q),
                    mu,
                    kkt_residual: residual,
                    iterations: outer,
                });
            }
            if outer >= 200 {
                eprintln!(
                    "DBG candidate-exit: beta={beta} c={c} tol={tol} ftol={ftol} stol={stol} s={s} residual={residual} mu={mu} qmin={:?} cum_max={:?}",
                    x.iter().cloned().fold(f64::INFINITY, f64::min).exp(),
                    cum_loss.iter().fold(0.0_f64, |m, &v| m.max(v.abs()))
                );
                return Err(Error::NoConvergence {
                    context: "ftrl multiplier search".into(),
                    residual,
                    iterations: outer,
                });
            }
            // Tighten both tolerances and keep iterating.
            ftol *= 0.125;
            stol *= 0.125;
            continue;
        }
        if outer >= 200 {
            return Err(Error::NoConvergence {
                context: "ftrl multiplier search".into(),
                residual: s.abs(),
                iterations: outer,
            });
        }
        // Newton step on mu with bisection safeguard.
        let mut next = if ds < 0.0 { mu - s / ds } else { f64::NAN };
        if !next.is_finite() || next <= lo || next >= hi {
            next = if hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                // No upper bracket yet: double the distance from lo.
                let step = (mu - lo).max(beta.max(1.0) + c);
                mu + 2.0 * step
            };
        }
        mu = next;
    }
}
