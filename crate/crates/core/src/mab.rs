//! Sparsity-adaptive multi-armed bandit agents.
//!
//! Three FTRL agents share one chassis — importance-weighted loss
//! estimates, a stability-penalty-adaptive learning rate ([`crate::spa`]),
//! and per-round self-checks of every fact their regret analyses rely on:
//!
//! * [`AlgoKind::SparseExp3`]: negative-entropy regularizer with uniform
//!   exploration mixing, losses in `[0, 1]`. The rate follows the explicit
//!   recursion with the raw importance weight `omega = loss^2 / p[arm]` as
//!   the stability proxy.
//! * [`AlgoKind::SparseLogBarrier`]: negative entropy plus a log-barrier,
//!   signed losses in `[-1, 1]`, no mixing. The proxy is the truncated
//!   weight `nu = omega * min(1, p beta / 2)`, which is bounded by
//!   `beta / 2` regardless of how small `p[arm]` gets.
//! * [`AlgoKind::SparseBobw`]: negative entropy plus a heavier barrier and
//!   `k/T` mixing. Each round the rate solves an implicit fixed-point
//!   equation by bisection (the next rate depends on the next entropy,
//!   which depends on the next rate); this variant adapts simultaneously
//!   to adversarial and stochastic regimes.
//!
//! Every step returns a [`StepDiagnostics`] recording the stability
//! condition, the per-round stability-lemma inequality, the truncation and
//! mixing sandwiches, and (for the implicit variant) the multiplicative
//! rate-growth and entropy-drift facts. A violation of any of these means
//! the corresponding regret certificate does not apply to the realized run,
//! so the harness counts them and refuses to certify tampered traces.

use crate::env::{EnvSpec, Environment, RegretTrace, TraceRow, TraceTotals};
use crate::error::{Error, Result};
use crate::ftrl::{
    penalty_stability_split, solve_ftrl_warm, FtrlSolution, RegularizerSpec, DEFAULT_TOL,
};
use crate::seeding::{rng_for, split_seed};
use crate::simplex::{mix_uniform, shannon_entropy, EstimatedLoss, LossRange, ProbVector};
use crate::spa::{implicit_update_bisection, SpaConfig, SpaState};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Absolute slack for checks compared in probability space (per-coordinate
/// bounds on FTRL outputs). Covers the KKT tolerance of the two solves being
/// compared.
const Q_CHECK_SLACK: f64 = 1e-8;

/// Absolute slack for checks compared in regret/entropy units.
const VALUE_CHECK_SLACK: f64 = 1e-8;

/// Relative tolerance for the implicit-update bisection residual.
const BISECT_TOL_REL: f64 = 1e-9;

/// Which of the three agents to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgoKind {
    SparseExp3,
    SparseLogBarrier,
    SparseBobw,
}

impl std::fmt::Display for AlgoKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AlgoKind::SparseExp3 => "sparse-exp3",
            AlgoKind::SparseLogBarrier => "sparse-log-barrier",
            AlgoKind::SparseBobw => "sparse-bobw",
        };
        f.write_str(s)
    }
}

/// How much per-round checking to do. `Full` adds the coordinate-wise
/// FTRL-output comparisons, which cost one extra solve per round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckLevel {
    Cheap,
    Full,
}

/// Static agent configuration. `seed` is the master seed; per-episode
/// streams are derived from it (see [`crate::seeding`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub algo: AlgoKind,
    pub k: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    /// Replaces the algorithm's default `c1` when set.
    #[serde(default)]
    pub c1_override: Option<f64>,
    pub seed: u64,
}

/// The evolving state shared by all three agents.
#[derive(Debug, Clone)]
pub struct AgentState {
    /// Cumulative importance-weighted loss estimates `L_t`.
    pub cum_est_loss: Vec<f64>,
    /// The adaptive learning rate's state (with per-round history enabled).
    pub spa: SpaState,
    /// FTRL output `q_t`.
    pub q: ProbVector,
    /// Sampling distribution `p_t` (equal to `q_t` when the algorithm does
    /// not mix in uniform exploration).
    pub p: ProbVector,
    /// Index of the upcoming round, 1-based.
    pub t: usize,
}

/// Everything measured during one step. Checks that do not apply to the
/// configured algorithm (or were gated off this round) are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub t: usize,
    pub arm: usize,
    pub loss: f64,
    /// Rate in force during the round.
    pub beta: f64,
    pub beta_next: f64,
    pub eta: f64,
    /// Raw importance weight `loss^2 / p[arm]`.
    pub omega: f64,
    /// Truncated proxy, for the two barrier-regularized agents.
    pub nu: Option<f64>,
    /// Stability proxy fed to the rate update.
    pub z: f64,
    pub zbar: f64,
    pub h_next: f64,
    /// Measured `Phi_t(q_{t+1}) - Phi_{t+1}(q_{t+1})`.
    pub penalty: f64,
    /// Measured `<q_t - q_{t+1}, yhat> - D_{Phi_t}(q_{t+1}, q_t)`.
    pub stability: f64,
    /// The analysis' bound on `stability` for this round.
    pub stability_bound: f64,
    /// Stability condition: (S2) for the explicit-rate agents, (S1) for the
    /// implicit one.
    pub s_ok: bool,
    /// `stability <= stability_bound` (within slack).
    pub stab_lemma_ok: bool,
    /// `q_t <= 2 p_t` coordinate-wise.
    pub sandwich_ok: bool,
    /// `nu <= beta_t / 2 * max(1, loss^2)`.
    pub nu_cap_ok: Option<bool>,
    /// Coordinate-wise: raising the rate can only shrink probabilities,
    /// `q_{t+1,i} <= qalt_i^{beta_t/beta_{t+1}}` where `qalt` freezes the
    /// rate at `beta_t`.
    pub f1_ok: Option<bool>,
    /// Coordinate-wise drift bound against the previous output,
    /// `q_{t+1,i} <= 3 q_{t,i}^{beta_t/beta_{t+1}}` (implicit variant,
    /// rounds with a nonnegative observed loss).
    pub f2_ok: Option<bool>,
    /// Multiplicative growth `1 - beta_t/beta_{t+1} <= 1/10`.
    pub f3_ok: Option<bool>,
    /// Entropy drift `h_{t+1} <= 3 h_t + (20k/9)(beta_{t+1}/beta_t - 1)
    /// log(T/k) h_{t+1}`.
    pub f4_ok: Option<bool>,
    pub bisect_residual: Option<f64>,
    pub bisect_iterations: Option<usize>,
    pub ftrl_residual: f64,
    pub ftrl_iterations: usize,
}

impl StepDiagnostics {
    /// Number of failed checks this round.
    pub fn violations(&self) -> usize {
        let mut n = 0;
        if !self.s_ok {
            n += 1;
        }
        if !self.stab_lemma_ok {
            n += 1;
        }
        if !self.sandwich_ok {
            n += 1;
        }
        for flag in [self.nu_cap_ok, self.f1_ok, self.f2_ok, self.f3_ok, self.f4_ok] {
            if flag == Some(false) {
                n += 1;
            }
        }
        n
    }
}

/// Snapshot of one implicit rate update, kept when captures are enabled so
/// tests can re-derive the fixed-point equation and audit the root offline.
#[derive(Debug, Clone)]
pub struct RoundCapture {
    pub t: usize,
    pub beta: f64,
    pub beta_next: f64,
    pub nu: f64,
    /// `sum_{s<t} z_s h_{s+1}` at the time of the update.
    pub sum_zh_before: f64,
    /// Cumulative estimates including this round's.
    pub cum_next: Vec<f64>,
}

/// Importance-weighted estimate of a full loss vector from one observed
/// entry: `loss / p[arm]` on the played arm, zero elsewhere.
pub fn iw_estimate(loss: f64, arm: usize, p: &ProbVector) -> Result<EstimatedLoss> {
    if arm >= p.len() {
        return Err(Error::Domain(format!(
            "iw_estimate: arm {arm} out of range for k = {}",
            p.len()
        )));
    }
    let pa = p[arm];
    if !(pa > 0.0) {
        return Err(Error::InvalidProbability(format!(
            "iw_estimate: p[{arm}] = {pa} must be positive"
        )));
    }
    Ok(EstimatedLoss {
        arm,
        scaled: loss / pa,
        k: p.len(),
    })
}

/// Raw stability weight `omega = loss^2 / p_arm`. Caller guarantees
/// `p_arm > 0`.
pub fn omega(loss: f64, p_arm: f64) -> f64 {
    loss * loss / p_arm
}

/// Truncated stability weight `nu = omega * min(1, p_arm beta / 2)`.
///
/// The capped branch is computed as `loss^2 * beta / 2` so that the cap
/// `nu <= max(1, loss^2) * beta / 2` holds in floating point and not just in
/// exact arithmetic.
pub fn nu(loss: f64, p_arm: f64, beta: f64) -> f64 {
    if 0.5 * p_arm * beta >= 1.0 {
        omega(loss, p_arm)
    } else {
        0.5 * loss * loss * beta
    }
}

/// Default `c1` for the implicit variant's proof-oriented tuning, which
/// inflates the logarithmic factor from `T` to `T^2`. Exposed so configs can
/// reproduce that exact constant via `c1_override`.
pub fn bobw_proof_variant_c1(k: usize, horizon: usize) -> f64 {
    let beta1 = 15.0 * k as f64;
    let tf = horizon as f64;
    (2.0 * (1.0 + tf * tf / beta1).ln()).sqrt()
}

/// One bandit agent: FTRL over the simplex with an adaptive rate.
#[derive(Debug, Clone)]
pub struct Agent {
    cfg: AgentConfig,
    state: AgentState,
    spa_cfg: SpaConfig,
    checks: CheckLevel,
    /// Uniform-mixing weight (0 for the log-barrier agent).
    gamma: f64,
    /// Weight of the log-barrier term in the regularizer (0, 2 or 4).
    barrier: f64,
    /// Penalty ceiling `h_1`.
    h1: f64,
    /// Penalty `h_t` of the current round.
    h_cur: f64,
    /// Constant `zbar` for the explicit-rate agents (`k / gamma` resp. the
    /// current `nu`); unused by the implicit variant.
    zbar_const: f64,
    range: LossRange,
    /// (S1) margin epsilon, or the (S2) coefficient `a`, per algorithm.
    s_param: f64,
    rng: ChaCha8Rng,
    warm: Option<FtrlSolution>,
    captures: Option<Vec<RoundCapture>>,
}

impl Agent {
    /// Build the agent for episode 0. Equivalent to
    /// [`Agent::for_episode`] with `episode = 0`.
    pub fn new(cfg: &AgentConfig, checks: CheckLevel) -> Result<Agent> {
        Agent::for_episode(cfg, 0, checks)
    }

    /// Build the agent with its sampling stream derived from
    /// `(cfg.seed, episode, "agent")`.
    pub fn for_episode(cfg: &AgentConfig, episode: u64, checks: CheckLevel) -> Result<Agent> {
        if cfg.k < 2 {
            return Err(Error::config("k", format!("need k >= 2, got {}", cfg.k)));
        }
        if cfg.horizon == 0 {
            return Err(Error::config("T", "horizon must be positive"));
        }
        if let Some(c1) = cfg.c1_override {
            if !(c1 > 0.0) || !c1.is_finite() {
                return Err(Error::config(
                    "c1_override",
                    format!("must be positive and finite, got {c1}"),
                ));
            }
        }
        let kf = cfg.k as f64;
        let tf = cfg.horizon as f64;
        let lnk = kf.ln();

        let q = ProbVector::uniform(cfg.k)?;
        let (gamma, barrier, range, lambda, zbar_const);
        let (c1, c2, beta1, h1, s_param);
        match cfg.algo {
            AlgoKind::SparseExp3 => {
                let min_t = (8.0 * kf * lnk).sqrt();
                if tf < min_t {
                    return Err(Error::config(
                        "T",
                        format!(
                            "sparse-exp3 requires T >= sqrt(8 k log k) = {min_t:.3}, got {tf}"
                        ),
                    ));
                }
                gamma = (kf * lnk).cbrt() / tf.powf(2.0 / 3.0);
                if gamma > 0.5 {
                    return Err(Error::config(
                        "T",
                        format!("exploration rate {gamma} exceeds 1/2"),
                    ));
                }
                barrier = 0.0;
                range = LossRange::UnitInterval;
                lambda = 1.0;
                zbar_const = kf / gamma;
                c1 = cfg.c1_override.unwrap_or(std::f64::consts::FRAC_1_SQRT_2);
                c2 = 0.0;
                h1 = lnk;
                beta1 = 2.0 * c1 * zbar_const.sqrt() / h1.sqrt();
                s_param = 2.0; // (S2) coefficient a
            }
            AlgoKind::SparseLogBarrier => {
                gamma = 0.0;
                barrier = 2.0;
                range = LossRange::Symmetric;
                lambda = 1.0;
                zbar_const = 0.0; // per-round: zbar = nu
                c1 = cfg.c1_override.unwrap_or(std::f64::consts::SQRT_2);
                c2 = 0.0;
                h1 = lnk;
                beta1 = c1 * c1 / (8.0 * h1);
                s_param = 0.5; // (S2) coefficient a
            }
            AlgoKind::SparseBobw => {
                if cfg.horizon < 2 * cfg.k {
                    return Err(Error::config(
                        "T",
                        format!(
                            "sparse-bobw requires T >= 2k = {}, got {}",
                            2 * cfg.k,
                            cfg.horizon
                        ),
                    ));
                }
                gamma = kf / tf;
                barrier = 4.0;
                range = LossRange::Symmetric;
                lambda = 2.0;
                zbar_const = 0.0;
                beta1 = 15.0 * kf;
                c1 = cfg
                    .c1_override
                    .unwrap_or_else(|| (2.0 * (1.0 + tf / beta1).ln()).sqrt());
                c2 = 81.0 * c1 * c1;
                let p1 = mix_uniform(&q, gamma)?;
                h1 = shannon_entropy(&p1) / (1.0 - gamma);
                s_param = beta1; // (S1) margin epsilon
            }
        }
        let spa_cfg = SpaConfig::new(c1, c2, beta1, lambda)?;
        let p = mix_uniform(&q, gamma)?;
        let state = AgentState {
            cum_est_loss: vec![0.0; cfg.k],
            spa: SpaState::new(&spa_cfg, true),
            q,
            p,
            t: 1,
        };
        Ok(Agent {
            cfg: cfg.clone(),
            state,
            spa_cfg,
            checks,
            gamma,
            barrier,
            h1,
            h_cur: h1,
            zbar_const,
            range,
            s_param,
            rng: rng_for(cfg.seed, episode, "agent"),
            warm: None,
            captures: None,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn state(&self) -> &AgentState {
        &self.state
    }

    pub fn spa_config(&self) -> &SpaConfig {
        &self.spa_cfg
    }

    pub fn spa(&self) -> &SpaState {
        &self.state.spa
    }

    /// Current rate `beta_t`.
    pub fn beta(&self) -> f64 {
        self.state.spa.beta
    }

    /// Current learning rate `eta_t = 1 / beta_t`.
    pub fn eta(&self) -> f64 {
        self.state.spa.eta()
    }

    /// Index of the upcoming round (1-based).
    pub fn t(&self) -> usize {
        self.state.t
    }

    /// Sampling distribution for the upcoming round.
    pub fn probabilities(&self) -> &ProbVector {
        &self.state.p
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn barrier_weight(&self) -> f64 {
        self.barrier
    }

    pub fn h1(&self) -> f64 {
        self.h1
    }

    /// The loss range this agent accepts.
    pub fn loss_range(&self) -> LossRange {
        self.range
    }

    /// Start recording implicit-update snapshots (implicit variant only;
    /// a no-op for the explicit-rate agents).
    pub fn enable_captures(&mut self) {
        self.captures = Some(Vec::new());
    }

    pub fn captures(&self) -> Option<&[RoundCapture]> {
        self.captures.as_deref()
    }

    /// Draw an arm from the current sampling distribution (inverse CDF over
    /// one uniform variate, so runs are reproducible from the seed alone).
    pub fn sample_arm(&mut self) -> usize {
        let u: f64 = self.rng.gen();
        let mut acc = 0.0;
        for (i, &pi) in self.state.p.values().iter().enumerate() {
            acc += pi;
            if u < acc {
                return i;
            }
        }
        self.state.p.len() - 1
    }

    /// KKT tolerance for the round's FTRL solves, scaled to the current
    /// loss magnitudes.
    fn ftrl_tol(&self, cum: &[f64], beta: f64) -> f64 {
        let scale = cum
            .iter()
            .fold(0.0_f64, |m, &v| m.max(v.abs()))
            .max(beta)
            .max(1.0);
        DEFAULT_TOL.max(2e-14 * scale)
    }

    /// Consume one observed loss, update the rate and the FTRL state, and
    /// return the round's diagnostics.
    pub fn step(&mut self, arm: usize, loss: f64) -> Result<StepDiagnostics> {
        if self.state.t > self.cfg.horizon {
            return Err(Error::Domain(format!(
                "episode horizon {} exhausted",
                self.cfg.horizon
            )));
        }
        if arm >= self.cfg.k {
            return Err(Error::Domain(format!(
                "arm {arm} out of range for k = {}",
                self.cfg.k
            )));
        }
        if !self.range.contains(loss) {
            let (lo, hi) = self.range.bounds();
            return Err(Error::InvalidLoss(format!(
                "loss {loss} outside [{lo}, {hi}]"
            )));
        }
        let t = self.state.t;
        let beta_t = self.state.spa.beta;
        let eta = 1.0 / beta_t;
        let p_arm = self.state.p[arm];
        if !(p_arm > 0.0) {
            return Err(Error::InvalidProbability(format!(
                "p[{arm}] = {p_arm} is not positive"
            )));
        }
        let yhat = iw_estimate(loss, arm, &self.state.p)?;
        let om = omega(loss, p_arm);
        let q_t = self.state.q.clone();
        let sandwich_ok = q_t
            .values()
            .iter()
            .zip(self.state.p.values())
            .all(|(&qi, &pi)| 2.0 * pi >= qi);

        let mut cum_next = self.state.cum_est_loss.clone();
        cum_next[arm] += yhat.scaled;
        let sum_zh_before = self.state.spa.sum_zh;

        // --- rate update (algorithm-specific) -------------------------------
        let gamma = self.gamma;
        let barrier = self.barrier;
        let h1 = self.h1;
        let tol = self.ftrl_tol(&cum_next, beta_t);

        let mut nu_val = None;
        let mut bisect_residual = None;
        let mut bisect_iterations = None;
        let (z, zbar, s_ok, beta_next, h_next, sol_next): (
            f64,
            f64,
            bool,
            f64,
            f64,
            Option<FtrlSolution>,
        );
        match self.cfg.algo {
            AlgoKind::SparseExp3 => {
                z = om;
                zbar = self.zbar_const;
                s_ok = self.state.spa.check_s2(&self.spa_cfg, z, h1, self.s_param);
                beta_next = self
                    .state
                    .spa
                    .update(&self.spa_cfg, z, zbar, h1, h1)?;
                h_next = h1;
                sol_next = if loss == 0.0 {
                    None
                } else {
                    let reg = RegularizerSpec::new(beta_next, barrier)?;
                    Some(solve_ftrl_warm(&cum_next, &reg, tol, self.warm.as_ref())?)
                };
            }
            AlgoKind::SparseLogBarrier => {
                let nv = nu(loss, p_arm, beta_t);
                nu_val = Some(nv);
                z = nv;
                zbar = nv;
                s_ok = self.state.spa.check_s2(&self.spa_cfg, z, h1, self.s_param);
                beta_next = self
                    .state
                    .spa
                    .update(&self.spa_cfg, z, zbar, h1, h1)?;
                h_next = h1;
                sol_next = if loss == 0.0 {
                    None
                } else {
                    let reg = RegularizerSpec::new(beta_next, barrier)?;
                    Some(solve_ftrl_warm(&cum_next, &reg, tol, self.warm.as_ref())?)
                };
            }
            AlgoKind::SparseBobw => {
                let nv = nu(loss, p_arm, beta_t);
                nu_val = Some(nv);
                z = nv;
                let outcome = {
                    let mut warm_local = self.warm.clone();
                    let out = implicit_update_bisection(
                        &self.state.spa,
                        &self.spa_cfg,
                        nv,
                        self.cfg.horizon as f64,
                        BISECT_TOL_REL,
                        |alpha| {
                            let reg = RegularizerSpec::new(alpha, barrier)?;
                            let sol =
                                solve_ftrl_warm(&cum_next, &reg, tol, warm_local.as_ref())?;
                            let p_alpha = mix_uniform(&sol.q, gamma)?;
                            let h = (shannon_entropy(&p_alpha) / (1.0 - gamma)).min(h1);
                            warm_local = Some(sol);
                            Ok(h)
                        },
                    )?;
                    self.warm = warm_local;
                    out
                };
                beta_next = outcome.beta_next;
                bisect_residual = Some(outcome.residual);
                bisect_iterations = Some(outcome.iterations);
                if loss == 0.0 {
                    h_next = self.h_cur;
                    sol_next = None;
                } else {
                    let reg = RegularizerSpec::new(beta_next, barrier)?;
                    let sol = solve_ftrl_warm(&cum_next, &reg, tol, self.warm.as_ref())?;
                    let p_root = mix_uniform(&sol.q, gamma)?;
                    h_next = (shannon_entropy(&p_root) / (1.0 - gamma)).min(h1);
                    sol_next = Some(sol);
                }
                zbar = z * h_next / h1;
                s_ok = self
                    .state
                    .spa
                    .check_s1(&self.spa_cfg, z, zbar, h1, self.s_param);
                if let Some(caps) = self.captures.as_mut() {
                    caps.push(RoundCapture {
                        t,
                        beta: beta_t,
                        beta_next,
                        nu: nv,
                        sum_zh_before,
                        cum_next: cum_next.clone(),
                    });
                }
                self.state
                    .spa
                    .update_given(&self.spa_cfg, z, zbar, h_next, h1, beta_next)?;
            }
        }

        // --- next iterate ----------------------------------------------------
        let (q_next, p_next, ftrl_residual, ftrl_iterations) = match &sol_next {
            Some(sol) => {
                let p = mix_uniform(&sol.q, gamma)?;
                (sol.q.clone(), p, sol.kkt_residual, sol.iterations)
            }
            // Zero loss: the cumulative estimates and (for all three
            // variants) the rate are unchanged, so the minimizer is too.
            None => (q_t.clone(), self.state.p.clone(), 0.0, 0),
        };

        // --- per-round checks -------------------------------------------------
        let reg_t = RegularizerSpec::new(beta_t, barrier)?;
        let reg_next = RegularizerSpec::new(beta_next, barrier)?;
        let split = penalty_stability_split(&yhat.to_dense(), &q_t, &q_next, &reg_t, &reg_next)?;
        let stability_bound = match self.cfg.algo {
            AlgoKind::SparseExp3 => eta * om,
            AlgoKind::SparseLogBarrier => eta * z,
            AlgoKind::SparseBobw => 2.0 * eta * z,
        };
        let stab_lemma_ok = split.stability <= stability_bound + VALUE_CHECK_SLACK;

        let nu_cap_ok = nu_val.map(|nv| {
            let cap = 0.5 * beta_t * loss.mul_add(loss, 0.0).max(1.0);
            nv <= cap * (1.0 + 4.0 * f64::EPSILON)
        });

        let exponent = beta_t / beta_next;
        let f1_ok = match (self.checks, loss == 0.0) {
            (CheckLevel::Full, true) => Some(true),
            (CheckLevel::Full, false) => {
                let alt = solve_ftrl_warm(&cum_next, &reg_t, tol, sol_next.as_ref())?;
                Some(
                    q_next
                        .values()
                        .iter()
                        .zip(alt.q.values())
                        .all(|(&qn, &qa)| qn <= qa.powf(exponent) + Q_CHECK_SLACK),
                )
            }
            (CheckLevel::Cheap, _) => None,
        };
        let f2_ok = match self.cfg.algo {
            AlgoKind::SparseBobw if self.checks == CheckLevel::Full && loss >= 0.0 => Some(
                q_next
                    .values()
                    .iter()
                    .zip(q_t.values())
                    .all(|(&qn, &qp)| qn <= 3.0 * qp.powf(exponent) + Q_CHECK_SLACK),
            ),
            _ => None,
        };
        let (f3_ok, f4_ok) = if self.cfg.algo == AlgoKind::SparseBobw {
            let growth = 1.0 - beta_t / beta_next;
            let drift_rhs = 3.0 * self.h_cur
                + (20.0 * self.cfg.k as f64 / 9.0)
                    * (beta_next / beta_t - 1.0)
                    * (self.cfg.horizon as f64 / self.cfg.k as f64).ln()
                    * h_next;
            (
                Some(growth <= 0.1 + 1e-12),
                Some(h_next <= drift_rhs + VALUE_CHECK_SLACK),
            )
        } else {
            (None, None)
        };

        // --- commit ------------------------------------------------------------
        if let Some(sol) = sol_next {
            self.warm = Some(sol);
        }
        self.state.cum_est_loss = cum_next;
        self.state.q = q_next;
        self.state.p = p_next;
        self.h_cur = h_next;
        self.state.t += 1;

        Ok(StepDiagnostics {
            t,
            arm,
            loss,
            beta: beta_t,
            beta_next,
            eta,
            omega: om,
            nu: nu_val,
            z,
            zbar,
            h_next,
            penalty: split.penalty,
            stability: split.stability,
            stability_bound,
            s_ok,
            stab_lemma_ok,
            sandwich_ok,
            nu_cap_ok,
            f1_ok,
            f2_ok,
            f3_ok,
            f4_ok,
            bisect_residual,
            bisect_iterations,
            ftrl_residual,
            ftrl_iterations,
        })
    }
}

/// Free-function alias for [`Agent::step`].
pub fn agent_step(agent: &mut Agent, arm: usize, loss: f64) -> Result<StepDiagnostics> {
    agent.step(arm, loss)
}

/// Result of one full episode: the trace plus the finished agent (whose
/// rate history backs certificate evaluation).
#[derive(Debug)]
pub struct EpisodeResult {
    pub trace: RegretTrace,
    pub agent: Agent,
}

/// Run one agent against one environment for the full horizon.
///
/// The environment stream is derived from `(cfg.seed, episode, "env")` and
/// the agent's sampling stream from `(cfg.seed, episode, "agent")`, so the
/// pair `(cfg, episode)` fully determines the realized trace. The cumulative
/// regret column is pseudo-regret (mean gaps) for stochastic environments
/// and realized regret against the best fixed arm for adversarial ones.
pub fn run_episode(
    cfg: &AgentConfig,
    env_spec: &EnvSpec,
    episode: u64,
    checks: CheckLevel,
) -> Result<EpisodeResult> {
    env_spec.validate()?;
    if env_spec.k() != cfg.k {
        return Err(Error::config(
            "k",
            format!(
                "agent has k = {} but environment has k = {}",
                cfg.k,
                env_spec.k()
            ),
        ));
    }
    let mut agent = Agent::for_episode(cfg, episode, checks)?;
    let env_range = env_spec.range();
    let (alo, ahi) = agent.loss_range().bounds();
    let (elo, ehi) = env_range.bounds();
    if elo < alo || ehi > ahi {
        return Err(Error::config(
            "env",
            format!(
                "environment emits losses in [{elo}, {ehi}] but {} accepts [{alo}, {ahi}]",
                cfg.algo
            ),
        ));
    }
    let mut env = Environment::new(
        env_spec.clone(),
        cfg.horizon,
        split_seed(cfg.seed, episode, "env"),
    )?;

    let means = env_spec.means().map(|m| m.to_vec());
    let best_mean = means
        .as_ref()
        .map(|m| m.iter().cloned().fold(f64::INFINITY, f64::min));

    let mut arms: Vec<usize> = Vec::with_capacity(cfg.horizon);
    let mut rows: Vec<TraceRow> = Vec::with_capacity(cfg.horizon);
    let mut cum_arm = vec![0.0_f64; cfg.k];
    let mut chosen_cum = 0.0;
    let mut gap_cum = 0.0;
    let mut l2 = 0.0;
    let mut sum_eta_z = 0.0;
    let mut sum_incr_h = 0.0;
    let mut violations = 0usize;

    for t in 1..=cfg.horizon {
        let lv = env.generate_round(&arms)?;
        let arm = agent.sample_arm();
        let obs = lv.values()[arm];
        let d = agent.step(arm, obs)?;
        arms.push(arm);
        l2 += lv.squared_norm();
        let regret_cum = match (&means, best_mean) {
            (Some(m), Some(best)) => {
                gap_cum += m[arm] - best;
                gap_cum
            }
            _ => {
                chosen_cum += obs;
                for (c, l) in cum_arm.iter_mut().zip(lv.values()) {
                    *c += l;
                }
                chosen_cum - cum_arm.iter().cloned().fold(f64::INFINITY, f64::min)
            }
        };
        violations += d.violations();
        // Same float expression the rate history logs (z / beta, not
        // eta * z), so offline reconstruction from the trace is bit-exact.
        sum_eta_z += d.z / d.beta;
        sum_incr_h += (d.beta_next - d.beta) * d.h_next;
        rows.push(TraceRow {
            t,
            arm,
            loss_observed: obs,
            regret_cum,
            beta: d.beta,
            h: d.h_next,
            z: d.z,
            s1_ok: d.s_ok,
            stab_lemma_ok: d.stab_lemma_ok,
            f4_ok: d.f4_ok.unwrap_or(true),
        });
    }

    let totals = TraceTotals {
        regret_final: rows.last().map(|r| r.regret_cum).unwrap_or(0.0),
        l2_realized: l2,
        beta_final: agent.beta(),
        sum_eta_z,
        sum_incr_h,
        violations,
        corruption_spent: env.corruption_spent(),
    };
    Ok(EpisodeResult {
        trace: RegretTrace { rows, totals },
        agent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{AdversarialPattern, NoiseModel};
    use crate::ftrl::solve_ftrl;
    use crate::simplex::LossRange;

    fn exp3_cfg(k: usize, horizon: usize, seed: u64) -> AgentConfig {
        AgentConfig {
            algo: AlgoKind::SparseExp3,
            k,
            horizon,
            c1_override: None,
            seed,
        }
    }

    fn rotating_env(k: usize, s: usize, range: LossRange) -> EnvSpec {
        EnvSpec::AdversarialSparse {
            k,
            s,
            range,
            pattern: AdversarialPattern::Rotating,
            pattern_seed: 11,
        }
    }

    #[test]
    fn exp3_constants_match_their_formulas() {
        let cfg = exp3_cfg(10, 100_000, 1);
        let agent = Agent::new(&cfg, CheckLevel::Cheap).unwrap();
        let kf = 10.0_f64;
        let tf = 100_000.0_f64;
        let lnk = kf.ln();
        let gamma = (kf * lnk).cbrt() / tf.powf(2.0 / 3.0);
        assert!((agent.gamma() - gamma).abs() < 1e-15);
        let c1 = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(agent.spa_config().c1, c1);
        assert_eq!(agent.spa_config().c2, 0.0);
        let beta1 = 2.0 * c1 * (kf / gamma).sqrt() / lnk.sqrt();
        assert!((agent.spa_config().beta1 - beta1).abs() < 1e-12 * beta1);
        assert!((agent.eta() - 1.0 / beta1).abs() < 1e-18);
        assert_eq!(agent.h1(), lnk);
    }

    #[test]
    fn log_barrier_and_implicit_constants() {
        let lb = Agent::new(
            &AgentConfig {
                algo: AlgoKind::SparseLogBarrier,
                k: 4,
                horizon: 500,
                c1_override: None,
                seed: 2,
            },
            CheckLevel::Cheap,
        )
        .unwrap();
        let c1 = std::f64::consts::SQRT_2;
        assert_eq!(lb.spa_config().c1, c1);
        let expect = c1 * c1 / (8.0 * 4.0_f64.ln());
        assert!((lb.spa_config().beta1 - expect).abs() < 1e-15);
        assert_eq!(lb.barrier_weight(), 2.0);
        assert_eq!(lb.gamma(), 0.0);

        let bw = Agent::new(
            &AgentConfig {
                algo: AlgoKind::SparseBobw,
                k: 4,
                horizon: 500,
                c1_override: None,
                seed: 2,
            },
            CheckLevel::Cheap,
        )
        .unwrap();
        assert_eq!(bw.spa_config().beta1, 60.0);
        let c1 = (2.0 * (1.0 + 500.0 / 60.0_f64).ln()).sqrt();
        assert!((bw.spa_config().c1 - c1).abs() < 1e-15);
        assert!((bw.spa_config().c2 - 81.0 * c1 * c1).abs() < 1e-12);
        assert_eq!(bw.barrier_weight(), 4.0);
        assert!((bw.gamma() - 4.0 / 500.0).abs() < 1e-18);
        // h1 = H(uniform) / (1 - gamma) >= log k.
        assert!(bw.h1() >= 4.0_f64.ln());
        let proof_c1 = bobw_proof_variant_c1(4, 500);
        assert!((proof_c1 - (2.0 * (1.0 + 500.0_f64 * 500.0 / 60.0).ln()).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        // Horizon too short for the exploration rate.
        assert!(Agent::new(&exp3_cfg(10, 5, 1), CheckLevel::Cheap).is_err());
        // Implicit variant needs T >= 2k.
        assert!(Agent::new(
            &AgentConfig {
                algo: AlgoKind::SparseBobw,
                k: 8,
                horizon: 15,
                c1_override: None,
                seed: 1,
            },
            CheckLevel::Cheap,
        )
        .is_err());
        // Bad c1 override.
        assert!(Agent::new(
            &AgentConfig {
                algo: AlgoKind::SparseLogBarrier,
                k: 4,
                horizon: 100,
                c1_override: Some(-1.0),
                seed: 1,
            },
            CheckLevel::Cheap,
        )
        .is_err());
        // k too small.
        assert!(Agent::new(
            &AgentConfig {
                algo: AlgoKind::SparseLogBarrier,
                k: 1,
                horizon: 100,
                c1_override: None,
                seed: 1,
            },
            CheckLevel::Cheap,
        )
        .is_err());
    }

    #[test]
    fn agent_config_serde_uses_capital_t() {
        let cfg = exp3_cfg(5, 1000, 9);
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("\"T\":1000"), "{json}");
        assert!(json.contains("sparse-exp3"), "{json}");
        let back: AgentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn estimator_is_unbiased_monte_carlo() {
        let p = ProbVector::new(vec![0.5, 0.3, 0.2]).unwrap();
        let losses = [0.9, 0.1, 0.4];
        let n = 1_000_000usize;
        let mut rng = rng_for(123, 0, "test-unbiased");
        let mut sum = [0.0_f64; 3];
        let mut sumsq = [0.0_f64; 3];
        for _ in 0..n {
            let u: f64 = rng.gen();
            let arm = if u < 0.5 {
                0
            } else if u < 0.8 {
                1
            } else {
                2
            };
            let est = iw_estimate(losses[arm], arm, &p).unwrap();
            for i in 0..3 {
                let v = est.component(i);
                sum[i] += v;
                sumsq[i] += v * v;
            }
        }
        for i in 0..3 {
            let mean = sum[i] / n as f64;
            let var = (sumsq[i] / n as f64 - mean * mean).max(0.0);
            let se = (var / n as f64).sqrt();
            assert!(
                (mean - losses[i]).abs() <= 3.0 * se + 1e-9,
                "coordinate {i}: mean {mean} vs true {} (se {se})",
                losses[i]
            );
        }
    }

    #[test]
    fn omega_and_nu_formulas_agree() {
        let mut rng = rng_for(5, 0, "test-nu");
        for _ in 0..2000 {
            let loss: f64 = rng.gen_range(-1.0..=1.0);
            let p: f64 = rng.gen_range(1e-6..=1.0);
            let beta: f64 = rng.gen_range(1e-3..=1e4);
            let om = omega(loss, p);
            let reference = om * (0.5 * p * beta).min(1.0);
            let got = nu(loss, p, beta);
            assert!(
                (got - reference).abs() <= 1e-12 * reference.abs().max(1e-300),
                "nu mismatch: got {got}, reference {reference}"
            );
            // The float-safe cap.
            assert!(got <= 0.5 * beta * loss.mul_add(loss, 0.0).max(1.0) * (1.0 + 4.0 * f64::EPSILON));
        }
        // Branch boundaries.
        assert_eq!(nu(1.0, 1.0, 2.0), 1.0); // p*beta/2 = 1 exactly: uncapped
        assert_eq!(nu(1.0, 0.1, 2.0), 1.0); // capped: 0.5 * 1 * 2
        assert_eq!(nu(0.0, 0.5, 10.0), 0.0);
    }

    #[test]
    fn run_episode_is_deterministic() {
        let cfg = exp3_cfg(5, 300, 77);
        let env = rotating_env(5, 2, LossRange::UnitInterval);
        let a = run_episode(&cfg, &env, 3, CheckLevel::Full).unwrap();
        let b = run_episode(&cfg, &env, 3, CheckLevel::Full).unwrap();
        assert_eq!(a.trace, b.trace);
        let c = run_episode(&cfg, &env, 4, CheckLevel::Full).unwrap();
        assert_ne!(
            a.trace.rows, c.trace.rows,
            "different episodes should differ"
        );
    }

    #[test]
    fn omega_sums_are_unbiased_for_realized_l2() {
        // Oblivious adversarial sequence: identical across episodes, so
        // E[sum_t omega_t] = sum_t ||loss_t||^2 exactly, episode by episode.
        let cfg = exp3_cfg(5, 400, 2024);
        let env = EnvSpec::AdversarialSparse {
            k: 5,
            s: 2,
            range: LossRange::UnitInterval,
            pattern: AdversarialPattern::Random,
            pattern_seed: 31,
        };
        let episodes = 50;
        let mut sums = Vec::with_capacity(episodes);
        let mut l2 = None;
        for ep in 0..episodes {
            let res = run_episode(&cfg, &env, ep as u64, CheckLevel::Cheap).unwrap();
            let omega_sum: f64 = res
                .agent
                .spa()
                .history
                .as_ref()
                .unwrap()
                .iter()
                .map(|r| r.z)
                .sum();
            sums.push(omega_sum);
            match l2 {
                None => l2 = Some(res.trace.totals.l2_realized),
                Some(prev) => assert_eq!(prev, res.trace.totals.l2_realized),
            }
        }
        let l2 = l2.unwrap();
        let mean: f64 = sums.iter().sum::<f64>() / episodes as f64;
        let var: f64 =
            sums.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (episodes - 1) as f64;
        let se = (var / episodes as f64).sqrt();
        assert!(
            (mean - l2).abs() <= 3.0 * se,
            "mean of omega sums {mean} vs realized L2 {l2} (se {se})"
        );
    }

    #[test]
    fn standard_runs_have_zero_violations() {
        let cases: Vec<(AgentConfig, EnvSpec)> = vec![
            (
                exp3_cfg(5, 400, 10),
                rotating_env(5, 2, LossRange::UnitInterval),
            ),
            (
                AgentConfig {
                    algo: AlgoKind::SparseLogBarrier,
                    k: 4,
                    horizon: 300,
                    c1_override: None,
                    seed: 11,
                },
                EnvSpec::StochasticSparse {
                    means: vec![0.1, 0.5, 0.5, 0.9],
                    noise: NoiseModel::Bernoulli,
                },
            ),
            (
                AgentConfig {
                    algo: AlgoKind::SparseLogBarrier,
                    k: 4,
                    horizon: 300,
                    c1_override: None,
                    seed: 12,
                },
                rotating_env(4, 2, LossRange::Symmetric),
            ),
            (
                AgentConfig {
                    algo: AlgoKind::SparseBobw,
                    k: 4,
                    horizon: 150,
                    c1_override: None,
                    seed: 13,
                },
                rotating_env(4, 2, LossRange::Symmetric),
            ),
            (
                AgentConfig {
                    algo: AlgoKind::SparseBobw,
                    k: 4,
                    horizon: 150,
                    c1_override: None,
                    seed: 14,
                },
                EnvSpec::StochasticSparse {
                    means: vec![0.05, 0.6, 0.6, 0.6],
                    noise: NoiseModel::Bernoulli,
                },
            ),
        ];
        for (cfg, env) in cases {
            let res = run_episode(&cfg, &env, 0, CheckLevel::Full).unwrap();
            assert_eq!(
                res.trace.totals.violations, 0,
                "violations for {} on {:?}",
                cfg.algo, env
            );
            assert!(res.trace.totals.beta_final >= res.agent.spa_config().beta1);
        }
    }

    #[test]
    fn zero_loss_rounds_leave_the_state_unchanged() {
        for algo in [
            AlgoKind::SparseExp3,
            AlgoKind::SparseLogBarrier,
            AlgoKind::SparseBobw,
        ] {
            let cfg = AgentConfig {
                algo,
                k: 4,
                horizon: 100,
                c1_override: None,
                seed: 5,
            };
            let mut agent = Agent::new(&cfg, CheckLevel::Full).unwrap();
            let before_q = agent.state().q.clone();
            let before_beta = agent.beta();
            let d = agent.step(2, 0.0).unwrap();
            assert_eq!(d.z, 0.0);
            assert_eq!(d.beta_next, before_beta);
            assert_eq!(agent.state().q.values(), before_q.values());
            assert_eq!(d.violations(), 0);
            assert_eq!(agent.t(), 2);
        }
    }

    /// An all-zero loss stream must leave the rate at `beta_1` and end with
    /// exactly zero regret for every algorithm.
    #[test]
    fn all_zero_environment_gives_zero_regret_and_constant_rate() {
        let env = EnvSpec::AdversarialSparse {
            k: 4,
            s: 0,
            range: LossRange::UnitInterval,
            pattern: AdversarialPattern::Rotating,
            pattern_seed: 1,
        };
        for algo in [
            AlgoKind::SparseExp3,
            AlgoKind::SparseLogBarrier,
            AlgoKind::SparseBobw,
        ] {
            let cfg = AgentConfig {
                algo,
                k: 4,
                horizon: 60,
                c1_override: None,
                seed: 2,
            };
            let res = run_episode(&cfg, &env, 0, CheckLevel::Full).unwrap();
            assert_eq!(res.trace.totals.regret_final, 0.0, "{algo}");
            assert_eq!(res.trace.totals.l2_realized, 0.0, "{algo}");
            assert_eq!(res.trace.totals.beta_final, res.agent.spa_config().beta1, "{algo}");
            assert_eq!(res.trace.totals.violations, 0, "{algo}");
        }
    }

    #[test]
    fn horizon_exhaustion_is_an_error() {
        let cfg = AgentConfig {
            algo: AlgoKind::SparseLogBarrier,
            k: 3,
            horizon: 2,
            c1_override: None,
            seed: 1,
        };
        let mut agent = Agent::new(&cfg, CheckLevel::Cheap).unwrap();
        agent.step(0, 0.5).unwrap();
        agent.step(1, -0.5).unwrap();
        let err = agent.step(2, 0.5).unwrap_err();
        assert!(err.to_string().contains("horizon"), "{err}");
    }

    #[test]
    fn range_mismatch_is_rejected() {
        // sparse-exp3 accepts only [0, 1] losses.
        let cfg = exp3_cfg(5, 300, 1);
        let env = rotating_env(5, 2, LossRange::Symmetric);
        let err = run_episode(&cfg, &env, 0, CheckLevel::Cheap).unwrap_err();
        assert!(err.to_string().contains("accepts"), "{err}");
        let mut agent = Agent::new(&cfg, CheckLevel::Cheap).unwrap();
        assert!(agent.step(0, -0.5).is_err());
        assert!(agent.step(9, 0.5).is_err(), "arm out of range");
    }

    #[test]
    fn sample_arm_matches_the_distribution() {
        let cfg = AgentConfig {
            algo: AlgoKind::SparseLogBarrier,
            k: 4,
            horizon: 100,
            c1_override: None,
            seed: 99,
        };
        let mut agent = Agent::new(&cfg, CheckLevel::Cheap).unwrap();
        // Initial distribution is uniform.
        let n = 40_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[agent.sample_arm()] += 1;
        }
        let expect = n as f64 * 0.25;
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - expect).abs() <= 4.0 * sigma,
                "arm {i}: count {c} vs expected {expect}"
            );
        }
    }

    #[test]
    fn implicit_roots_satisfy_their_equation() {
        let cfg = AgentConfig {
            algo: AlgoKind::SparseBobw,
            k: 3,
            horizon: 100,
            c1_override: None,
            seed: 21,
        };
        let mut agent = Agent::new(&cfg, CheckLevel::Full).unwrap();
        agent.enable_captures();
        let pattern = [1.0, -1.0, 0.5, 0.25, -0.75];
        for t in 0..40 {
            let arm = t % 3;
            let diag = agent.step(arm, pattern[t % pattern.len()]).unwrap();
            assert_eq!(diag.violations(), 0, "round {t}");
        }
        let gamma = agent.gamma();
        let h1 = agent.h1();
        let barrier = agent.barrier_weight();
        let spa_cfg = *agent.spa_config();
        let caps = agent.captures().unwrap();
        assert_eq!(caps.len(), 40);
        for cap in caps {
            if cap.nu == 0.0 {
                assert_eq!(cap.beta_next, cap.beta);
                continue;
            }
            // Recompute F at the accepted root with an independent solve.
            let reg = RegularizerSpec::new(cap.beta_next, barrier).unwrap();
            let sol = solve_ftrl(&cap.cum_next, &reg, 1e-12).unwrap();
            let p = mix_uniform(&sol.q, gamma).unwrap();
            let h = (shannon_entropy(&p) / (1.0 - gamma)).min(h1);
            let f = cap.beta_next
                - cap.beta
                - spa_cfg.c1 * cap.nu
                    / (spa_cfg.c2 + cap.nu * h + cap.sum_zh_before).sqrt();
            let tol = 2.0 * BISECT_TOL_REL * cap.beta.max(1.0) + 1e-12;
            assert!(
                f.abs() <= tol,
                "round {}: recomputed residual {} exceeds {tol}",
                cap.t,
                f.abs()
            );
            // Increment never exceeds nu / 9.
            assert!(cap.beta_next - cap.beta <= cap.nu / 9.0 * (1.0 + 1e-9) + 1e-9);
        }
    }

    #[test]
    fn applicability_flags_follow_the_gates() {
        let cfg = AgentConfig {
            algo: AlgoKind::SparseBobw,
            k: 3,
            horizon: 50,
            c1_override: None,
            seed: 31,
        };
        let mut agent = Agent::new(&cfg, CheckLevel::Full).unwrap();
        let d_pos = agent.step(0, 0.8).unwrap();
        assert_eq!(d_pos.f1_ok, Some(true));
        assert_eq!(d_pos.f2_ok, Some(true));
        assert_eq!(d_pos.f3_ok, Some(true));
        assert_eq!(d_pos.f4_ok, Some(true));
        assert!(d_pos.bisect_residual.is_some());
        let d_neg = agent.step(1, -0.8).unwrap();
        assert_eq!(d_neg.f2_ok, None, "drift bound needs nonnegative loss");
        assert_eq!(d_neg.f1_ok, Some(true));

        let mut cheap = Agent::new(&cfg, CheckLevel::Cheap).unwrap();
        let d = cheap.step(0, 0.5).unwrap();
        assert_eq!(d.f1_ok, None);
        assert_eq!(d.f2_ok, None);
        // Cheap mode still evaluates the value-space checks.
        assert!(d.stab_lemma_ok);

        let mut lb = Agent::new(
            &AgentConfig {
                algo: AlgoKind::SparseLogBarrier,
                k: 3,
                horizon: 50,
                c1_override: None,
                seed: 32,
            },
            CheckLevel::Full,
        )
        .unwrap();
        let d = lb.step(0, 0.5).unwrap();
        assert_eq!(d.f2_ok, None);
        assert_eq!(d.f3_ok, None);
        assert_eq!(d.f4_ok, None);
        assert!(d.nu_cap_ok.unwrap());
        assert_eq!(d.bisect_residual, None);
    }

    #[test]
    fn stochastic_pseudo_regret_column_uses_mean_gaps() {
        let cfg = AgentConfig {
            algo: AlgoKind::SparseLogBarrier,
            k: 3,
            horizon: 50,
            c1_override: None,
            seed: 41,
        };
        let env = EnvSpec::StochasticSparse {
            means: vec![0.2, 0.7, 0.7],
            noise: NoiseModel::Bernoulli,
        };
        let res = run_episode(&cfg, &env, 0, CheckLevel::Cheap).unwrap();
        // Every row's regret increment is 0 or 0.5, so the total is a
        // multiple of 0.5.
        let r = res.trace.totals.regret_final;
        assert!((r * 2.0 - (r * 2.0).round()).abs() < 1e-9, "{r}");
        assert!(r >= 0.0);
    }
}
