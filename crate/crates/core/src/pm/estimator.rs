//! Choosing the sampling distribution and loss estimator each round by
//! minimizing a convex exploration-by-optimization objective.
//!
//! Given the learner's current belief `q` over Pareto actions and the pace
//! `eta` of its FTRL update, the round's contribution to the regret bound
//! is controlled by `max_x f_x(p, G)`, where for each outcome `x` the
//! function `f_x` adds (i) the exploration overhead of sampling from `p`
//! instead of `q`, (ii) the worst-case estimation bias of `G`, and (iii)
//! the FTRL stability cost of the importance-weighted estimate:
//!
//! ```text
//! f_x(p, G) = [ (p - q).loss[.,x] + bias_q(G; x) ] / eta
//!           + (1/eta^2) sum_a p_a * Psi_q(eta * G[a][feedback[a][x]] / p_a)
//! ```
//!
//! with `Psi_q(v) = sum_i q_i xi(v_i)` and `bias_q(G; x) = <q, loss_Pi[x] -
//! est(x)> + max_i (est(x)_i - loss_Pi[x]_i)`, `est(x) = sum_{a: p_a > 0}
//! G[a][feedback[a][x]]`. The map is jointly convex in `(p, G)` (linear +
//! max of linear + perspective of a convex function), so a projected
//! subgradient method on a log-sum-exp smoothing converges; analytic
//! candidate points guarantee the class ceiling `vbar` even when the
//! numeric polish stalls.

use super::analysis::{AnalyzedGame, EstimatorG, GameClass};
use crate::error::{Error, Result};
use crate::simplex::xi;

/// Argument clamp inside the smoothed objective: keeps `exp(-v)` finite and
/// gradients sane while the optimizer passes through bad regions.
const XI_CLAMP: f64 = -500.0;

/// Argument clamp for the reported (raw) objective: `exp(700)` is still
/// representable, so such points evaluate to an astronomically large — but
/// finite and comparable — value.
const RAW_CLAMP: f64 = -700.0;

/// Hard floor applied to every coordinate of `p` inside the optimizer so
/// that gradients with respect to `G` stay defined on all actions.
const P_FLOOR: f64 = 1e-9;

const STAGES: usize = 3;
const ITERS_PER_STAGE: usize = 60;
const MAX_BACKTRACKS: usize = 40;
const STAGE_SHRINK: f64 = 0.125;

/// Result of one round's estimation-to-optimization solve.
#[derive(Debug, Clone)]
pub struct EboSolution {
    /// Sampling distribution over all `k` actions. Coordinates may be zero
    /// only on actions whose estimator rows are identically zero.
    pub p: Vec<f64>,
    /// Loss-difference estimator over Pareto actions.
    pub g: EstimatorG,
    /// `max(0, raw_value)` — the stability-condition proxy fed to the rate.
    pub value: f64,
    /// The min-max objective at `(p, g)`; can be slightly negative.
    pub raw_value: f64,
    /// Whether the numeric polish reached its improvement tolerance.
    pub converged: bool,
    /// Name of the candidate that seeded (or directly won) the solve.
    pub start: &'static str,
}

/// Embed a distribution over Pareto actions into all-action coordinates.
pub fn embed(ag: &AnalyzedGame, q: &[f64]) -> Vec<f64> {
    let mut qe = vec![0.0; ag.game.k()];
    for (i, &a) in ag.pareto.iter().enumerate() {
        qe[a] = q[i];
    }
    qe
}

/// The exact (unsmoothed) objective `max_x f_x(p, g)`. Returns `+inf` for
/// points outside the domain (an action with `p_a = 0` but a nonzero
/// estimator row in use).
pub fn ebo_objective(ag: &AnalyzedGame, q: &[f64], eta: f64, p: &[f64], g: &EstimatorG) -> f64 {
    let game = &ag.game;
    let n = ag.pareto.len();
    let qe = embed(ag, q);
    let mut worst = f64::NEG_INFINITY;
    let mut est = vec![0.0; n];
    for x in 0..game.d() {
        let mut expl = 0.0;
        est.iter_mut().for_each(|e| *e = 0.0);
        for a in 0..game.k() {
            expl += (p[a] - qe[a]) * game.loss_at(a, x);
            let row = g.values(a, game.feedback_at(a, x));
            if p[a] > 0.0 {
                for (e, &v) in est.iter_mut().zip(row) {
                    *e += v;
                }
            } else if row.iter().zip(q).any(|(&gv, &qi)| qi > 0.0 && gv != 0.0) {
                // A zero-probability action cannot carry estimator mass.
                return f64::INFINITY;
            }
        }
        let mut bias_avg = 0.0;
        let mut bias_max = f64::NEG_INFINITY;
        for i in 0..n {
            let l = game.loss_at(ag.pareto[i], x);
            bias_avg += q[i] * (l - est[i]);
            bias_max = bias_max.max(est[i] - l);
        }
        let mut stab = 0.0;
        for a in 0..game.k() {
            if p[a] <= 0.0 {
                continue;
            }
            let row = g.values(a, game.feedback_at(a, x));
            let mut psi = 0.0;
            for (i, &gv) in row.iter().enumerate() {
                psi += q[i] * xi((eta * gv / p[a]).max(RAW_CLAMP));
            }
            stab += p[a] * psi;
        }
        let f = (expl + bias_avg + bias_max) / eta + stab / (eta * eta);
        if !f.is_finite() {
            return f64::INFINITY;
        }
        worst = worst.max(f);
    }
    worst
}

/// Log-sum-exp smoothing of `max_x f~_x` where `f~_x` replaces the inner
/// bias max by its own log-sum-exp. Requires strictly positive `p`.
fn smoothed(ag: &AnalyzedGame, qe: &[f64], q: &[f64], eta: f64, tau: f64, p: &[f64], g: &EstimatorG) -> f64 {
    let game = &ag.game;
    let n = ag.pareto.len();
    let mut fs = Vec::with_capacity(game.d());
    let mut est = vec![0.0; n];
    for x in 0..game.d() {
        let mut expl = 0.0;
        est.iter_mut().for_each(|e| *e = 0.0);
        for a in 0..game.k() {
            expl += (p[a] - qe[a]) * game.loss_at(a, x);
            let row = g.values(a, game.feedback_at(a, x));
            for (e, &v) in est.iter_mut().zip(row) {
                *e += v;
            }
        }
        let mut bias_avg = 0.0;
        let mut inner_max = f64::NEG_INFINITY;
        for i in 0..n {
            let l = game.loss_at(ag.pareto[i], x);
            bias_avg += q[i] * (l - est[i]);
            inner_max = inner_max.max(est[i] - l);
        }
        let mut inner_sum = 0.0;
        for i in 0..n {
            let l = game.loss_at(ag.pareto[i], x);
            inner_sum += ((est[i] - l - inner_max) / tau).exp();
        }
        let bias_lse = inner_max + tau * inner_sum.ln();
        let mut stab = 0.0;
        for a in 0..game.k() {
            let row = g.values(a, game.feedback_at(a, x));
            let mut psi = 0.0;
            for (i, &gv) in row.iter().enumerate() {
                psi += q[i] * xi((eta * gv / p[a]).max(XI_CLAMP));
            }
            stab += p[a] * psi;
        }
        let f = (expl + bias_avg + bias_lse) / eta + stab / (eta * eta);
        if !f.is_finite() {
            return f64::INFINITY;
        }
        fs.push(f);
    }
    let m = fs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = fs.iter().map(|&f| ((f - m) / tau).exp()).sum();
    m + tau * s.ln()
}

/// Value and gradient of [`smoothed`] in one pass.
fn smoothed_grad(
    ag: &AnalyzedGame,
    qe: &[f64],
    q: &[f64],
    eta: f64,
    tau: f64,
    p: &[f64],
    g: &EstimatorG,
) -> (f64, Vec<f64>, EstimatorG) {
    let game = &ag.game;
    let k = game.k();
    let n = ag.pareto.len();
    let d = game.d();

    // First pass: per-outcome smoothed values and inner softmax weights.
    let mut fs = vec![0.0; d];
    let mut inner_soft = vec![vec![0.0; n]; d];
    let mut est_all = vec![vec![0.0; n]; d];
    for x in 0..d {
        let est = &mut est_all[x];
        let mut expl = 0.0;
        for a in 0..k {
            expl += (p[a] - qe[a]) * game.loss_at(a, x);
            let row = g.values(a, game.feedback_at(a, x));
            for (e, &v) in est.iter_mut().zip(row) {
                *e += v;
            }
        }
        let mut bias_avg = 0.0;
        let mut inner_max = f64::NEG_INFINITY;
        for i in 0..n {
            let l = game.loss_at(ag.pareto[i], x);
            bias_avg += q[i] * (l - est[i]);
            inner_max = inner_max.max(est[i] - l);
        }
        let mut inner_sum = 0.0;
        for i in 0..n {
            let l = game.loss_at(ag.pareto[i], x);
            let w = ((est[i] - l - inner_max) / tau).exp();
            inner_soft[x][i] = w;
            inner_sum += w;
        }
        for w in &mut inner_soft[x] {
            *w /= inner_sum;
        }
        let bias_lse = inner_max + tau * inner_sum.ln();
        let mut stab = 0.0;
        for a in 0..k {
            let row = g.values(a, game.feedback_at(a, x));
            let mut psi = 0.0;
            for (i, &gv) in row.iter().enumerate() {
                psi += q[i] * xi((eta * gv / p[a]).max(XI_CLAMP));
            }
            stab += p[a] * psi;
        }
        fs[x] = (expl + bias_avg + bias_lse) / eta + stab / (eta * eta);
    }
    let m = fs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut outer_sum = 0.0;
    let mut alpha = vec![0.0; d];
    for x in 0..d {
        let w = ((fs[x] - m) / tau).exp();
        alpha[x] = w;
        outer_sum += w;
    }
    for w in &mut alpha {
        *w /= outer_sum;
    }
    let value = m + tau * outer_sum.ln();

    // Second pass: accumulate gradients weighted by the outer softmax.
    let mut gp = vec![0.0; k];
    let mut gg = EstimatorG::zeros(game, n);
    for x in 0..d {
        let ax = alpha[x];
        if ax == 0.0 {
            continue;
        }
        for a in 0..k {
            let sigma = game.feedback_at(a, x);
            let row = g.values(a, sigma);
            let mut dp = game.loss_at(a, x) / eta;
            let grow = gg.values_mut(a, sigma);
            for (i, &gv) in row.iter().enumerate() {
                let v = eta * gv / p[a];
                if v >= XI_CLAMP {
                    // d/dp[a] of p_a xi(eta gv / p_a) = xi(v) - v xi'(v).
                    dp += q[i] * (xi(v) - v * (1.0 - (-v).exp())) / (eta * eta);
                    grow[i] += ax * (inner_soft[x][i] - q[i] * (-v).exp()) / eta;
                } else {
                    dp += q[i] * xi(XI_CLAMP) / (eta * eta);
                    grow[i] += ax * (inner_soft[x][i] - q[i]) / eta;
                }
            }
            gp[a] += ax * dp;
        }
    }
    (value, gp, gg)
}

/// Euclidean projection onto `{ p : p >= lb, sum p = 1 }`.
pub(crate) fn project_capped(y: &[f64], lb: &[f64]) -> Vec<f64> {
    let mass = 1.0 - lb.iter().sum::<f64>();
    debug_assert!(mass > 0.0, "floor vector leaves no mass to distribute");
    let z: Vec<f64> = y.iter().zip(lb).map(|(&a, &b)| a - b).collect();
    let mut sorted = z.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("floors and iterates stay finite"));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &v) in sorted.iter().enumerate() {
        cum += v;
        let t = (cum - mass) / (j as f64 + 1.0);
        if t < v {
            theta = t;
        } else {
            break;
        }
    }
    y.iter()
        .zip(lb)
        .map(|(&a, &b)| b + (a - b - theta).max(0.0))
        .collect()
}

/// Mix `rho` of the uniform distribution over Pareto actions into `qe`.
fn mix_on_pareto(ag: &AnalyzedGame, qe: &[f64], rho: f64) -> Vec<f64> {
    let u = rho / ag.pareto.len() as f64;
    let mut p: Vec<f64> = qe.iter().map(|&v| v * (1.0 - rho)).collect();
    for &a in &ag.pareto {
        p[a] += u;
    }
    p
}

/// Full-information exact estimator: every action's feedback identifies the
/// outcome, so `G[a][sigma] = qe_a * loss_Pi[x(a, sigma)]` is unbiased with
/// value at most `1/2`.
fn exact_full_info(ag: &AnalyzedGame, qe: &[f64]) -> EstimatorG {
    let game = &ag.game;
    let n = ag.pareto.len();
    let mut g = EstimatorG::zeros(game, n);
    for a in 0..game.k() {
        for x in 0..game.d() {
            let row = g.values_mut(a, game.feedback_at(a, x));
            for (i, &b) in ag.pareto.iter().enumerate() {
                row[i] = qe[a] * game.loss_at(b, x);
            }
        }
    }
    g
}

/// Bandit exact estimator: each Pareto action estimates its own loss from
/// its own feedback, giving value at most `k/2`.
fn exact_bandit(ag: &AnalyzedGame) -> EstimatorG {
    let game = &ag.game;
    let n = ag.pareto.len();
    let mut g = EstimatorG::zeros(game, n);
    for (i, &a) in ag.pareto.iter().enumerate() {
        for x in 0..game.d() {
            g.values_mut(a, game.feedback_at(a, x))[i] = game.loss_at(a, x);
        }
    }
    g
}

/// Solve one round. `warm` carries the previous round's solution, which is
/// projected onto the current feasible floors and entered as a candidate.
pub fn ebo_solve(
    ag: &AnalyzedGame,
    q: &[f64],
    eta: f64,
    warm: Option<&EboSolution>,
) -> Result<EboSolution> {
    let game = &ag.game;
    let k = game.k();
    let n = ag.pareto.len();
    if q.len() != n {
        return Err(Error::Domain(format!(
            "belief has {} coordinates, expected one per Pareto action ({n})",
            q.len()
        )));
    }
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::Domain(format!("eta must be positive, got {eta}")));
    }
    if q.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
        return Err(Error::Domain(
            "belief must be strictly positive on Pareto actions".into(),
        ));
    }
    let qe = embed(ag, q);

    // Optimizer floors: strictly positive everywhere so every estimator
    // coordinate has a defined gradient, and at least q_a / (2k) on Pareto
    // actions so importance weights stay comparable to the belief.
    let lb: Vec<f64> = (0..k).map(|a| (qe[a] / (2.0 * k as f64)).max(P_FLOOR)).collect();

    // Analytic candidates. Their `p` is a hair away from `qe` (support on
    // Pareto actions only), which keeps their certified values intact.
    let p_belief = mix_on_pareto(ag, &qe, 1e-12);
    let mut cands: Vec<(&'static str, Vec<f64>, EstimatorG)> = vec![(
        "zero",
        p_belief.clone(),
        EstimatorG::zeros(game, n),
    )];
    match ag.class {
        GameClass::FullInformation => {
            cands.push(("full-info-exact", p_belief.clone(), exact_full_info(ag, &qe)));
        }
        GameClass::Bandit => {
            cands.push(("bandit-exact", p_belief.clone(), exact_bandit(ag)));
        }
        GameClass::LocallyObservable => {}
    }
    {
        let wmax = ag.g0.max_abs();
        let rho = (2.0 * eta * ag.m as f64 * (k as f64) * (k as f64) * (1.0 + wmax)).min(0.5);
        cands.push(("baseline-tree", mix_on_pareto(ag, &qe, rho), ag.g0.clone()));

        // Rebasing the tree on the heaviest belief coordinate leaves that
        // coordinate's estimator column identically zero while shifting
        // every estimate by the same amount, which moves the two bias
        // terms by opposite amounts, so the bias still cancels exactly.
        // Stability then charges only the residual belief mass, letting
        // the value fall far below the class ceiling once the belief
        // concentrates — provided the light actions' rows stay
        // nonnegative, because `xi` is linear for positive arguments and
        // exponential for negative ones. Per-column constants that sum to
        // zero across actions leave every estimate unchanged, so after the
        // rebase each column's negative entries are lifted off the other
        // Pareto actions and deposited on the leader, whose sampling
        // probability is large. A short grid over the exploration mass
        // covers rows that still need support; the evaluation below keeps
        // the cheapest candidate.
        let leader = q
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("belief entries are finite"))
            .map(|(i, _)| i)
            .expect("belief is nonempty");
        let leader_action = ag.pareto[leader];
        let mut g_ld = ag.g0.clone();
        for a in 0..k {
            for sigma in 0..game.symbols_in_row(a) {
                let row = g_ld.values_mut(a, sigma);
                let base = row[leader];
                for v in row.iter_mut() {
                    *v -= base;
                }
            }
        }
        for i in 0..n {
            let mut onto_leader = 0.0;
            for &a in &ag.pareto {
                if a == leader_action {
                    continue;
                }
                let mut lift = 0.0_f64;
                for sigma in 0..game.symbols_in_row(a) {
                    lift = lift.max(-g_ld.values(a, sigma)[i]);
                }
                if lift > 0.0 {
                    for sigma in 0..game.symbols_in_row(a) {
                        g_ld.values_mut(a, sigma)[i] += lift;
                    }
                    onto_leader -= lift;
                }
            }
            if onto_leader != 0.0 {
                for sigma in 0..game.symbols_in_row(leader_action) {
                    g_ld.values_mut(leader_action, sigma)[i] += onto_leader;
                }
            }
        }
        let residual = (1.0 - q[leader]).max(0.0);
        let rho0 = ((residual * eta).sqrt() * (1.0 + wmax) * n as f64)
            .clamp(P_FLOOR * k as f64, 0.5);
        for (name, rho) in [
            ("leader-diff", 1e-12),
            ("leader-diff-mid", rho0),
            ("leader-diff-hi", (rho0 * 10.0).min(0.5)),
        ] {
            cands.push((name, mix_on_pareto(ag, &qe, rho), g_ld.clone()));
        }
    }
    if let Some(w) = warm {
        cands.push(("warm", project_capped(&w.p, &lb), w.g.clone()));
    }

    let mut best_idx = 0;
    let mut best_val = f64::INFINITY;
    for (i, (_, p, g)) in cands.iter().enumerate() {
        let v = ebo_objective(ag, q, eta, p, g);
        if v < best_val {
            best_val = v;
            best_idx = i;
        }
    }
    if !best_val.is_finite() {
        return Err(Error::Domain(
            "every starting candidate evaluated to an infinite objective".into(),
        ));
    }

    // Numeric polish from the best candidate, projected onto the floors.
    let start_name = cands[best_idx].0;
    let mut p = project_capped(&cands[best_idx].1, &lb);
    let mut g = cands[best_idx].2.clone();
    let spread = {
        // Scale the smoothing to the objective's spread at the start.
        let raw = ebo_objective(ag, q, eta, &p, &g);
        raw.abs().max(1.0) * 1e-2
    };
    let mut tau = spread.max(1e-6);
    let mut step = 1.0;
    let mut converged = false;
    for _stage in 0..STAGES {
        let mut stalled = 0;
        for _iter in 0..ITERS_PER_STAGE {
            let (value, gp, gg) = smoothed_grad(ag, &qe, q, eta, tau, &p, &g);
            let mut accepted = false;
            let mut t = step;
            for _bt in 0..MAX_BACKTRACKS {
                let p_try: Vec<f64> = p.iter().zip(&gp).map(|(&a, &d)| a - t * d).collect();
                let p_try = project_capped(&p_try, &lb);
                let mut g_try = g.clone();
                for a in 0..k {
                    for sigma in 0..game.symbols_in_row(a) {
                        let src = gg.values(a, sigma);
                        let dst = g_try.values_mut(a, sigma);
                        for (gd, &gs) in dst.iter_mut().zip(src) {
                            *gd -= t * gs;
                        }
                    }
                }
                let v_try = smoothed(ag, &qe, q, eta, tau, &p_try, &g_try);
                if v_try < value - 1e-14 * value.abs().max(1.0) {
                    p = p_try;
                    g = g_try;
                    let improved = value - v_try;
                    step = (t * 1.5).min(1e6);
                    accepted = true;
                    if improved <= 1e-9 * v_try.abs().max(1.0) {
                        stalled += 1;
                    } else {
                        stalled = 0;
                    }
                    break;
                }
                t *= 0.5;
            }
            if !accepted || stalled >= 3 {
                converged = true;
                break;
            }
        }
        tau *= STAGE_SHRINK;
    }

    let polished = ebo_objective(ag, q, eta, &p, &g);
    let (raw_value, win_p, win_g, start) = if polished <= best_val {
        (polished, p, g, start_name)
    } else {
        let (name, cp, cg) = cands.swap_remove(best_idx);
        (best_val, cp, cg, name)
    };
    Ok(EboSolution {
        p: win_p,
        g: win_g,
        value: raw_value.max(0.0),
        raw_value,
        converged,
        start,
    })
}
