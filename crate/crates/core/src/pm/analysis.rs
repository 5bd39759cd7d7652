//! Structural analysis of a partial-monitoring game: cell decomposition,
//! neighbor detection, observability witnesses, and the telescoping
//! baseline estimator used by the round optimizer.
//!
//! The optimality cell of action `a` is the set of outcome distributions
//! under which `a` has minimal expected loss. Actions split into three
//! kinds: *Pareto-optimal* (cell of full dimension `d - 1`), *dominated*
//! (empty cell, kept only as potential information actions), and
//! *degenerate* (nonempty lower-dimensional cell) — the latter are rejected
//! since the neighbor calculus below does not apply to them. Two
//! Pareto-optimal actions are *neighbors* when their cells share a face of
//! dimension `d - 2`.
//!
//! A neighbor pair is *locally observable* when the difference of its loss
//! rows can be written as a combination of feedback indicators on the two
//! actions themselves; the combination is the pair's *witness*. Chaining
//! witnesses along a spanning tree of the neighbor graph yields a global
//! estimator `G0` with `sum_a G0(a, feedback[a][x]) = loss[b][x] -
//! loss[root][x]` for every Pareto `b` and outcome `x` — the shift by the
//! root's loss is invisible to regret.

use super::game::Game;
use super::lp::{solve_lp, LpStatus};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Tolerance on LP-certified facts (emptiness, implicit equalities).
const GEOM_TOL: f64 = 1e-9;

/// Maximum allowed residual when solving for a pair's witness.
const WITNESS_TOL: f64 = 1e-8;

/// Maximum allowed residual of the telescoped global estimator.
const G0_TOL: f64 = 1e-7;

/// Feedback structure class, in decreasing order of informativeness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GameClass {
    /// Every action's feedback reveals the outcome.
    FullInformation,
    /// Every action's feedback reveals that action's own loss.
    Bandit,
    /// Neither, but every neighbor pair is locally observable.
    LocallyObservable,
}

impl std::fmt::Display for GameClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            GameClass::FullInformation => "full-information",
            GameClass::Bandit => "bandit",
            GameClass::LocallyObservable => "locally-observable",
        };
        f.write_str(s)
    }
}

/// Per-pair observability witness `w`: for every outcome `x`,
/// `w_first[feedback[a][x]] + w_second[feedback[b][x]] = loss[a][x] - loss[b][x]`.
#[derive(Debug, Clone)]
pub struct Witness {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub residual: f64,
}

/// A loss-difference estimator: `g[a][sigma][i]` is the contribution of
/// observing symbol `sigma` on action `a` to the estimate for the `i`-th
/// Pareto action. Estimates returned by [`EstimatorG::accumulate`] live in
/// the Pareto index space.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorG {
    g: Vec<Vec<Vec<f64>>>,
}

impl EstimatorG {
    pub fn zeros(game: &Game, pareto_count: usize) -> EstimatorG {
        let g = (0..game.k())
            .map(|a| vec![vec![0.0; pareto_count]; game.symbols_in_row(a)])
            .collect();
        EstimatorG { g }
    }

    pub fn values(&self, a: usize, sigma: usize) -> &[f64] {
        &self.g[a][sigma]
    }

    pub fn values_mut(&mut self, a: usize, sigma: usize) -> &mut [f64] {
        &mut self.g[a][sigma]
    }

    /// `sum_a g[a][feedback[a][x]]`, the noiseless expectation of the
    /// estimate under outcome `x` when every action has positive
    /// probability.
    pub fn accumulate(&self, game: &Game, x: usize) -> Vec<f64> {
        let width = self.g[0].first().map_or(0, Vec::len);
        let mut acc = vec![0.0; width];
        for a in 0..game.k() {
            let row = &self.g[a][game.feedback_at(a, x)];
            for (t, v) in acc.iter_mut().zip(row) {
                *t += v;
            }
        }
        acc
    }

    /// Largest absolute entry (used to scale exploration).
    pub fn max_abs(&self) -> f64 {
        self.g
            .iter()
            .flatten()
            .flatten()
            .fold(0.0_f64, |m, &v| m.max(v.abs()))
    }
}

/// The game together with everything the runner needs per round.
#[derive(Debug, Clone)]
pub struct AnalyzedGame {
    pub game: Game,
    /// Pareto-optimal actions, ascending.
    pub pareto: Vec<usize>,
    /// Actions with empty cells, ascending.
    pub dominated: Vec<usize>,
    /// Neighbor pairs `(a, b)` with `a < b`, both Pareto, lexicographic.
    pub neighbors: Vec<(usize, usize)>,
    /// Witness per entry of `neighbors`.
    pub witnesses: Vec<Witness>,
    /// Root action of the spanning tree behind `g0`.
    pub root: usize,
    /// Telescoped baseline estimator of `loss[b] - loss[root]` over Pareto.
    pub g0: EstimatorG,
    pub class: GameClass,
    /// Largest per-row alphabet size.
    pub m: usize,
}

impl AnalyzedGame {
    /// Per-round value ceiling for this class: `1/2` for full information,
    /// `k/2` for bandit feedback, `3 m^2 k^3` for the general locally
    /// observable case.
    pub fn vbar(&self) -> f64 {
        let k = self.game.k() as f64;
        let m = self.m as f64;
        match self.class {
            GameClass::FullInformation => 0.5,
            GameClass::Bandit => 0.5 * k,
            GameClass::LocallyObservable => 3.0 * m * m * k * k * k,
        }
    }

    /// Coefficient `B` in the initial rate `beta_1 = B sqrt(log(1+T)/log k)`;
    /// satisfies `2 B^2 >= vbar`, which makes the stability condition hold
    /// from the first round.
    pub fn beta1_coeff(&self) -> f64 {
        let k = self.game.k() as f64;
        let m = self.m as f64;
        match self.class {
            GameClass::FullInformation => 0.5,
            GameClass::Bandit => 0.5 * k,
            GameClass::LocallyObservable => 2.0 * m * k * k,
        }
    }

    /// Position of action `a` in the Pareto list, if it is Pareto.
    pub fn pareto_index(&self, a: usize) -> Option<usize> {
        self.pareto.iter().position(|&p| p == a)
    }

    pub fn witness_for(&self, a: usize, b: usize) -> Option<&Witness> {
        let key = (a.min(b), a.max(b));
        self.neighbors
            .iter()
            .position(|&p| p == key)
            .map(|i| &self.witnesses[i])
    }
}

/// The cell geometry oracle: all facts are certified by small LPs over the
/// outcome simplex.
struct CellOracle<'a> {
    loss: &'a [Vec<f64>],
    d: usize,
    k: usize,
}

impl<'a> CellOracle<'a> {
    /// Constraint rows `(loss[b] - loss[a]) . x >= 0` for `b != a`.
    fn cell_rows(&self, a: usize) -> Vec<Vec<f64>> {
        (0..self.k)
            .filter(|&b| b != a)
            .map(|b| {
                (0..self.d)
                    .map(|x| self.loss[b][x] - self.loss[a][x])
                    .collect()
            })
            .collect()
    }

    /// Maximize `obj . x` over `{x in simplex, ineq rows >= 0, eq rows = 0}`.
    /// Returns `None` when the region is empty.
    fn maximize(
        &self,
        ineq: &[Vec<f64>],
        eq: &[Vec<f64>],
        obj: &[f64],
    ) -> Result<Option<f64>> {
        // Standard form variables: x (d) then one slack per inequality.
        let n = self.d + ineq.len();
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(1 + ineq.len() + eq.len());
        let mut rhs: Vec<f64> = Vec::with_capacity(1 + ineq.len() + eq.len());
        let mut simplex_row = vec![0.0; n];
        simplex_row[..self.d].fill(1.0);
        rows.push(simplex_row);
        rhs.push(1.0);
        for (i, g) in ineq.iter().enumerate() {
            let mut row = vec![0.0; n];
            row[..self.d].copy_from_slice(g);
            row[self.d + i] = -1.0;
            rows.push(row);
            rhs.push(0.0);
        }
        for e in eq {
            let mut row = vec![0.0; n];
            row[..self.d].copy_from_slice(e);
            rows.push(row);
            rhs.push(0.0);
        }
        let mut c = vec![0.0; n];
        c[..self.d].copy_from_slice(obj);
        match solve_lp(&rows, &rhs, &c)? {
            LpStatus::Optimal(sol) => Ok(Some(sol.value)),
            LpStatus::Infeasible => Ok(None),
            LpStatus::Unbounded => Err(Error::Domain(
                "cell LP unbounded over the simplex (should be impossible)".into(),
            )),
        }
    }

    /// Dimension of the region, or `None` if empty: `d - rank` of the
    /// normals of all implicitly-equality constraints plus the simplex sum.
    fn dimension(&self, ineq: &[Vec<f64>], eq: &[Vec<f64>]) -> Result<Option<i64>> {
        // Feasibility first.
        if self
            .maximize(ineq, eq, &vec![0.0; self.d])?
            .is_none()
        {
            return Ok(None);
        }
        let mut normals: Vec<Vec<f64>> = vec![vec![1.0; self.d]];
        normals.extend(eq.iter().cloned());
        for g in ineq {
            let hi = self
                .maximize(ineq, eq, g)?
                .expect("feasible region lost between LPs");
            if hi <= GEOM_TOL {
                normals.push(g.clone());
            }
        }
        for j in 0..self.d {
            let mut obj = vec![0.0; self.d];
            obj[j] = 1.0;
            let hi = self
                .maximize(ineq, eq, &obj)?
                .expect("feasible region lost between LPs");
            if hi <= GEOM_TOL {
                normals.push(obj);
            }
        }
        Ok(Some(self.d as i64 - matrix_rank(&normals, self.d) as i64))
    }
}

fn matrix_rank(rows: &[Vec<f64>], width: usize) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let m = DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]);
    let svd = m.svd(false, false);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    svd.singular_values
        .iter()
        .filter(|&&s| s > 1e-9 * smax.max(1.0))
        .count()
}

/// Solve one neighbor pair's witness by least squares over the two rows'
/// symbol indicators.
fn solve_witness(game: &Game, a: usize, b: usize) -> Result<Witness> {
    let d = game.d();
    let na = game.symbols_in_row(a);
    let nb = game.symbols_in_row(b);
    let mut mat = DMatrix::zeros(d, na + nb);
    let mut rhs = DVector::zeros(d);
    for x in 0..d {
        mat[(x, game.feedback_at(a, x))] = 1.0;
        mat[(x, na + game.feedback_at(b, x))] += 1.0;
        rhs[x] = game.loss_at(a, x) - game.loss_at(b, x);
    }
    let svd = mat.clone().svd(true, true);
    let w = svd
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::Domain(format!("witness least squares failed: {e}")))?;
    let residual = (&mat * &w - &rhs)
        .iter()
        .fold(0.0_f64, |m, &v| m.max(v.abs()));
    if residual > WITNESS_TOL {
        return Err(Error::NotLocallyObservable {
            first: a,
            second: b,
            residual,
        });
    }
    Ok(Witness {
        first: w.as_slice()[..na].to_vec(),
        second: w.as_slice()[na..].to_vec(),
        residual,
    })
}

/// Run the full structural analysis. Fails on degenerate actions, games
/// whose Pareto set is smaller than two, pairs that are not locally
/// observable, and a disconnected neighbor graph.
pub fn analyze(game: Game) -> Result<AnalyzedGame> {
    let k = game.k();
    let d = game.d();
    let oracle = CellOracle {
        loss: game.loss(),
        d,
        k,
    };

    let mut pareto = Vec::new();
    let mut dominated = Vec::new();
    for a in 0..k {
        let rows = oracle.cell_rows(a);
        match oracle.dimension(&rows, &[])? {
            None => dominated.push(a),
            Some(dim) if dim == d as i64 - 1 => pareto.push(a),
            Some(dim) => {
                return Err(Error::DegenerateGame {
                    action: a,
                    dim,
                    expected: d as i64 - 1,
                })
            }
        }
    }
    if pareto.len() < 2 {
        return Err(Error::InvalidGame(format!(
            "need at least 2 Pareto-optimal actions, found {}",
            pareto.len()
        )));
    }

    let mut neighbors = Vec::new();
    for (i, &a) in pareto.iter().enumerate() {
        for &b in &pareto[i + 1..] {
            let mut rows = oracle.cell_rows(a);
            // Intersect with b's cell: on `loss[a] x = loss[b] x` the
            // remaining constraints of b coincide with a's.
            let eq: Vec<Vec<f64>> = vec![(0..d)
                .map(|x| game.loss_at(b, x) - game.loss_at(a, x))
                .collect()];
            rows.retain(|r| {
                // Drop the row duplicated by the equality.
                r.iter()
                    .zip(&eq[0])
                    .any(|(u, v)| (u - v).abs() > 0.0)
            });
            if oracle.dimension(&rows, &eq)? == Some(d as i64 - 2) {
                neighbors.push((a, b));
            }
        }
    }

    let mut witnesses = Vec::with_capacity(neighbors.len());
    for &(a, b) in &neighbors {
        witnesses.push(solve_witness(&game, a, b)?);
    }

    // Spanning tree of the neighbor graph by BFS from the smallest Pareto
    // action; lexicographic everywhere for determinism.
    let root = pareto[0];
    let mut parent: Vec<Option<usize>> = vec![None; k];
    let mut seen: Vec<bool> = vec![false; k];
    seen[root] = true;
    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        for &(a, b) in &neighbors {
            let v = if a == u {
                b
            } else if b == u {
                a
            } else {
                continue;
            };
            if !seen[v] {
                seen[v] = true;
                parent[v] = Some(u);
                queue.push_back(v);
            }
        }
    }
    if let Some(&unreached) = pareto.iter().find(|&&a| !seen[a]) {
        return Err(Error::InvalidGame(format!(
            "neighbor graph is disconnected: action {unreached} unreachable from {root}"
        )));
    }

    // Telescope witnesses along root paths into the baseline estimator.
    let mut g0 = EstimatorG::zeros(&game, pareto.len());
    for (i, &target) in pareto.iter().enumerate() {
        let mut v = target;
        while let Some(u) = parent[v] {
            // Edge (u, v): add an estimator of loss[v] - loss[u].
            let key = (u.min(v), u.max(v));
            let idx = neighbors
                .iter()
                .position(|&p| p == key)
                .expect("tree edge must be a neighbor pair");
            let w = &witnesses[idx];
            // The witness estimates loss[first] - loss[second].
            let sign = if key.0 == v { 1.0 } else { -1.0 };
            for (sigma, &val) in w.first.iter().enumerate() {
                g0.values_mut(key.0, sigma)[i] += sign * val;
            }
            for (sigma, &val) in w.second.iter().enumerate() {
                g0.values_mut(key.1, sigma)[i] += sign * val;
            }
            v = u;
        }
    }
    // Audit the telescoping identity.
    for x in 0..d {
        let acc = g0.accumulate(&game, x);
        for (i, &b) in pareto.iter().enumerate() {
            let want = game.loss_at(b, x) - game.loss_at(root, x);
            if (acc[i] - want).abs() > G0_TOL {
                return Err(Error::InvalidGame(format!(
                    "baseline estimator residual {} for action {b}, outcome {x}",
                    (acc[i] - want).abs()
                )));
            }
        }
    }

    let class = classify(&game);
    let m = game.max_symbols();
    Ok(AnalyzedGame {
        game,
        pareto,
        dominated,
        neighbors,
        witnesses,
        root,
        g0,
        class,
        m,
    })
}

fn classify(game: &Game) -> GameClass {
    let full = (0..game.k()).all(|a| game.symbols_in_row(a) == game.d());
    if full {
        return GameClass::FullInformation;
    }
    let bandit = (0..game.k()).all(|a| {
        (0..game.d()).all(|x1| {
            (0..game.d()).all(|x2| {
                game.feedback_at(a, x1) != game.feedback_at(a, x2)
                    || game.loss_at(a, x1) == game.loss_at(a, x2)
            })
        })
    });
    if bandit {
        return GameClass::Bandit;
    }
    GameClass::LocallyObservable
}
