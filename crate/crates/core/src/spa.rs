//! Stability-penalty-adaptive (SPA) learning rates.
//!
//! The inverse learning rate evolves as
//!
//! ```text
//!   beta_{t+1} = beta_t + c1 * z_t / sqrt(c2 + zbar_t * h_1 + sum_{s<t} z_s * h_{s+1})
//! ```
//!
//! where `z_t` is the round's stability proxy, `h_{t+1}` its penalty proxy,
//! and `zbar_t` a round-measurable upper bound with `zbar_t * h_1 >= z_t *
//! h_{t+1}`. The admissibility conditions of the defining sequence, two
//! sufficient stability conditions (S1)/(S2), the resulting closed-form
//! regret certificates, and the bisection used when `h_{t+1}` itself depends
//! on `beta_{t+1}` all live here.
//!
//! Numerical note: precondition inequalities are enforced with `1e-12`
//! relative slack. The quantities compared are equal in exact arithmetic for
//! the intended instantiations (e.g. `zbar_t * h_1` vs `z_t * h_{t+1}`), and
//! bit-exact comparisons would reject valid rounds on rounding noise.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

const REL_SLACK: f64 = 1e-12;

/// Static parameters of a SPA learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaConfig {
    pub c1: f64,
    pub c2: f64,
    pub beta1: f64,
    /// Weight of the stability term in the certified quantity
    /// `sum_t (beta_{t+1} - beta_t) h_{t+1} + lambda * sum_t eta_t z_t`.
    pub lambda: f64,
}

impl SpaConfig {
    pub fn new(c1: f64, c2: f64, beta1: f64, lambda: f64) -> Result<Self> {
        if !(c1 > 0.0) || !c1.is_finite() {
            return Err(Error::Domain(format!("SpaConfig requires c1 > 0, got {c1}")));
        }
        if !(c2 >= 0.0) || !c2.is_finite() {
            return Err(Error::Domain(format!("SpaConfig requires c2 >= 0, got {c2}")));
        }
        if !(beta1 > 0.0) || !beta1.is_finite() {
            return Err(Error::Domain(format!(
                "SpaConfig requires beta1 > 0, got {beta1}"
            )));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Domain(format!(
                "SpaConfig requires lambda > 0, got {lambda}"
            )));
        }
        Ok(SpaConfig {
            c1,
            c2,
            beta1,
            lambda,
        })
    }
}

/// One logged round of the rate's evolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaRound {
    pub z: f64,
    pub zbar: f64,
    pub h_next: f64,
    /// `beta_t`, the rate in force during the round.
    pub beta: f64,
    /// Stability contribution `eta_t * z_t = z_t / beta_t`.
    pub eta_z: f64,
    /// Penalty contribution `(beta_{t+1} - beta_t) * h_{t+1}`.
    pub incr_h: f64,
}

/// Evolving state of a SPA learning rate. `t` is the index of the upcoming
/// round (1-based); `beta` is `beta_t`; the sums run over rounds `s < t`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpaState {
    pub t: usize,
    pub beta: f64,
    /// `sum_{s<t} z_s * h_{s+1}`.
    pub sum_zh: f64,
    /// `sum_{s<t} z_s`.
    pub sum_z: f64,
    /// Per-round log, needed for `reghat_sp` and certificate evaluation.
    /// Off by default in library use; the benchmark harness switches it on.
    pub history: Option<Vec<SpaRound>>,
}

impl SpaState {
    pub fn new(cfg: &SpaConfig, with_history: bool) -> Self {
        SpaState {
            t: 1,
            beta: cfg.beta1,
            sum_zh: 0.0,
            sum_z: 0.0,
            history: if with_history { Some(Vec::new()) } else { None },
        }
    }

    /// Current learning rate `eta_t = 1 / beta_t`.
    pub fn eta(&self) -> f64 {
        1.0 / self.beta
    }

    fn validate_round(&self, z: f64, zbar: f64, h_next: f64, h1: f64) -> Result<()> {
        let bad = |detail: String| Error::SequenceCondition {
            round: self.t,
            detail,
        };
        for (name, v) in [("z", z), ("zbar", zbar), ("h_next", h_next), ("h1", h1)] {
            if !v.is_finite() {
                return Err(bad(format!("{name} is not finite: {v}")));
            }
        }
        if z < 0.0 || zbar < 0.0 || h_next < 0.0 {
            return Err(bad(format!(
                "negative input: z = {z}, zbar = {zbar}, h_next = {h_next}"
            )));
        }
        if !(h1 > 0.0) {
            return Err(bad(format!("h1 must be positive, got {h1}")));
        }
        if h_next > h1 * (1.0 + REL_SLACK) {
            return Err(bad(format!("h1 >= h_next violated: h1 = {h1}, h_next = {h_next}")));
        }
        if zbar * h1 < z * h_next * (1.0 - REL_SLACK) {
            return Err(bad(format!(
                "zbar * h1 >= z * h_next violated: {} < {}",
                zbar * h1,
                z * h_next
            )));
        }
        Ok(())
    }

    /// Advance one round with an explicit `(z_t, zbar_t, h_{t+1})` triple,
    /// returning `beta_{t+1}`. Preconditions are checked before any state
    /// changes; `z = 0` leaves `beta` and both sums unchanged.
    pub fn update(&mut self, cfg: &SpaConfig, z: f64, zbar: f64, h_next: f64, h1: f64) -> Result<f64> {
        self.validate_round(z, zbar, h_next, h1)?;
        let beta_next = if z == 0.0 {
            self.beta
        } else {
            let radicand = cfg.c2 + zbar * h1 + self.sum_zh;
            if !(radicand > 0.0) {
                return Err(Error::SequenceCondition {
                    round: self.t,
                    detail: format!(
                        "radicand c2 + zbar * h1 + sum_zh must be positive, got {radicand}"
                    ),
                });
            }
            self.beta + cfg.c1 * z / radicand.sqrt()
        };
        self.commit(z, zbar, h_next, beta_next);
        Ok(beta_next)
    }

    /// Advance one round with an externally computed `beta_{t+1}` (used by
    /// the bisection-based implicit update, where `h_{t+1}` depends on the
    /// root). Same precondition checks as [`SpaState::update`].
    pub fn update_given(
        &mut self,
        _cfg: &SpaConfig,
        z: f64,
        zbar: f64,
        h_next: f64,
        h1: f64,
        beta_next: f64,
    ) -> Result<()> {
        self.validate_round(z, zbar, h_next, h1)?;
        if !beta_next.is_finite() || beta_next < self.beta {
            return Err(Error::SequenceCondition {
                round: self.t,
                detail: format!(
                    "beta_next must be finite and >= beta_t, got {beta_next} vs {}",
                    self.beta
                ),
            });
        }
        self.commit(z, zbar, h_next, beta_next);
        Ok(())
    }

    fn commit(&mut self, z: f64, zbar: f64, h_next: f64, beta_next: f64) {
        if let Some(h) = self.history.as_mut() {
            h.push(SpaRound {
                z,
                zbar,
                h_next,
                beta: self.beta,
                eta_z: z / self.beta,
                incr_h: (beta_next - self.beta) * h_next,
            });
        }
        self.sum_zh += z * h_next;
        self.sum_z += z;
        self.beta = beta_next;
        self.t += 1;
    }

    /// Stability condition (S1), evaluated before the round-`t` update:
    /// `(sqrt(c2 + zbar_t h_1) / c1) * (beta_1 + beta_t) >= epsilon + z_t`.
    /// The comparison carries a relative slack of [`REL_SLACK`] so that
    /// configurations designed to meet the condition with equality do not
    /// fail by a rounding error.
    pub fn check_s1(&self, cfg: &SpaConfig, z: f64, zbar: f64, h1: f64, epsilon: f64) -> bool {
        let lhs = ((cfg.c2 + zbar * h1).sqrt() / cfg.c1) * (cfg.beta1 + self.beta);
        let rhs = epsilon + z;
        lhs >= rhs * (1.0 - REL_SLACK)
    }

    /// Stability condition (S2), evaluated before the round-`t` update with
    /// the inclusive sum: `beta_t >= (a c1 / sqrt(h1)) * sqrt(sum_{s<=t} z_s)`.
    /// Same relative slack as [`SpaState::check_s1`]; the explicit-rate
    /// configurations meet this with exact equality on their first round.
    pub fn check_s2(&self, cfg: &SpaConfig, z: f64, h1: f64, a: f64) -> bool {
        let rhs = (a * cfg.c1 / h1.sqrt()) * (self.sum_z + z).sqrt();
        self.beta >= rhs * (1.0 - REL_SLACK)
    }

    /// The certified quantity
    /// `sum_t (beta_{t+1} - beta_t) h_{t+1} + lambda * sum_t z_t / beta_t`.
    /// Requires history.
    pub fn reghat_sp(&self, cfg: &SpaConfig) -> Result<f64> {
        let hist = self
            .history
            .as_ref()
            .ok_or(Error::HistoryDisabled("reghat_sp"))?;
        let penalty: f64 = hist.iter().map(|r| r.incr_h).sum();
        let stability: f64 = hist.iter().map(|r| r.eta_z).sum();
        Ok(penalty + cfg.lambda * stability)
    }

    /// Closed-form bound on [`SpaState::reghat_sp`] under condition (S1) with
    /// margin `epsilon`:
    /// `2 (c1 + (lambda/c1) log(1 + sum_z / epsilon)) *
    ///  sqrt(c2 + zbar_T h_1 + sum_{t<=T} z_t h_{t+1})`.
    /// Requires at least one logged round (for `zbar_T`).
    pub fn bound_certificate_i(&self, cfg: &SpaConfig, h1: f64, epsilon: f64) -> Result<f64> {
        let hist = self
            .history
            .as_ref()
            .ok_or(Error::HistoryDisabled("bound_certificate_i"))?;
        let last = hist.last().ok_or_else(|| {
            Error::Domain("bound_certificate_i requires at least one round".into())
        })?;
        if !(epsilon > 0.0) {
            return Err(Error::Domain(format!(
                "bound_certificate_i requires epsilon > 0, got {epsilon}"
            )));
        }
        let amplification = cfg.c1 + (cfg.lambda / cfg.c1) * (1.0 + self.sum_z / epsilon).ln();
        Ok(2.0 * amplification * (cfg.c2 + last.zbar * h1 + self.sum_zh).sqrt())
    }

    /// Closed-form bound on [`SpaState::reghat_sp`] under condition (S2) with
    /// parameter `a`, valid for `c2 = 0` and constant penalties `h == h1`:
    /// `2 (c1 + lambda / (a c1)) * sqrt(h1 * sum_z)`.
    pub fn bound_certificate_ii(&self, cfg: &SpaConfig, h1: f64, a: f64) -> Result<f64> {
        if cfg.c2 != 0.0 {
            return Err(Error::Domain(format!(
                "bound_certificate_ii requires c2 = 0, got {}",
                cfg.c2
            )));
        }
        if !(a > 0.0) {
            return Err(Error::Domain(format!(
                "bound_certificate_ii requires a > 0, got {a}"
            )));
        }
        Ok(2.0 * (cfg.c1 + cfg.lambda / (a * cfg.c1)) * (h1 * self.sum_z).sqrt())
    }
}

/// Free-function form of [`SpaState::update`].
pub fn spa_update(
    state: &mut SpaState,
    cfg: &SpaConfig,
    z: f64,
    zbar: f64,
    h_next: f64,
    h1: f64,
) -> Result<f64> {
    state.update(cfg, z, zbar, h_next, h1)
}

/// Free-function form of [`SpaState::reghat_sp`].
pub fn reghat_sp(state: &SpaState, cfg: &SpaConfig) -> Result<f64> {
    state.reghat_sp(cfg)
}

/// Validate a whole `(z_t, zbar_t, h_{t+1})` sequence against the three
/// admissibility conditions: `h_1 >= h_t` for all `t`, the inclusive partial
/// sums `zbar_t h_1 + sum_{s<=t} z_s h_{s+1}` non-decreasing, and
/// `zbar_t h_1 >= z_t h_{t+1}` per round.
pub fn check_sequence_conditions(h1: f64, rounds: &[(f64, f64, f64)]) -> Result<()> {
    if !(h1 > 0.0) {
        return Err(Error::Domain(format!("h1 must be positive, got {h1}")));
    }
    let mut running = 0.0;
    let mut prev_lhs = f64::NEG_INFINITY;
    for (idx, &(z, zbar, h_next)) in rounds.iter().enumerate() {
        let round = idx + 1;
        let bad = |detail: String| Error::SequenceCondition { round, detail };
        if z < 0.0 || zbar < 0.0 || h_next < 0.0 {
            return Err(bad("negative entry".into()));
        }
        if h_next > h1 * (1.0 + REL_SLACK) {
            return Err(bad(format!("h1 >= h_t violated: {h_next} > {h1}")));
        }
        if zbar * h1 < z * h_next * (1.0 - REL_SLACK) {
            return Err(bad(format!(
                "zbar * h1 >= z * h_next violated: {} < {}",
                zbar * h1,
                z * h_next
            )));
        }
        running += z * h_next;
        let lhs = zbar * h1 + running;
        if lhs < prev_lhs * (1.0 - REL_SLACK) - REL_SLACK {
            return Err(bad(format!(
                "inclusive partial sums decreased: {lhs} < {prev_lhs}"
            )));
        }
        prev_lhs = lhs;
    }
    Ok(())
}

/// Result of the implicit-rate bisection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionOutcome {
    pub beta_next: f64,
    /// `|F(beta_next)|` at the accepted root.
    pub residual: f64,
    pub iterations: usize,
}

/// Solve `F(alpha) = alpha - beta_t - c1 nu / sqrt(c2 + nu h(alpha) + sum_zh)`
/// for its root on `[beta_t, beta_t + horizon]` by sign bisection, where
/// `h(alpha)` is the next round's penalty if the rate were `alpha` (supplied
/// as a callback; it performs an FTRL solve).
///
/// Requires `c2 = 81 c1^2`, which makes the increment at most `nu / 9` and
/// `F` positive at the right endpoint whenever `nu <= 9 * horizon`.
/// Terminates when `|F| <= tol_rel * max(1, beta_t)`; `nu = 0` returns
/// `beta_t` with zero iterations. A bracket without a sign change is reported
/// with both endpoint values.
pub fn implicit_update_bisection(
    state: &SpaState,
    cfg: &SpaConfig,
    nu: f64,
    horizon: f64,
    tol_rel: f64,
    mut eval_h: impl FnMut(f64) -> Result<f64>,
) -> Result<BisectionOutcome> {
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(Error::Domain(format!("bisection requires nu >= 0, got {nu}")));
    }
    if !(horizon > 0.0) {
        return Err(Error::Domain(format!(
            "bisection requires horizon > 0, got {horizon}"
        )));
    }
    if !(tol_rel > 0.0) {
        return Err(Error::Domain(format!(
            "bisection requires tol_rel > 0, got {tol_rel}"
        )));
    }
    let expected_c2 = 81.0 * cfg.c1 * cfg.c1;
    if (cfg.c2 - expected_c2).abs() > 1e-9 * expected_c2 {
        return Err(Error::Domain(format!(
            "implicit update requires c2 = 81 c1^2 = {expected_c2}, got {}",
            cfg.c2
        )));
    }
    let beta = state.beta;
    if nu == 0.0 {
        return Ok(BisectionOutcome {
            beta_next: beta,
            residual: 0.0,
            iterations: 0,
        });
    }
    let tol_abs = tol_rel * beta.max(1.0);
    let mut f_at = |alpha: f64| -> Result<f64> {
        let h = eval_h(alpha)?;
        if !(h >= 0.0) || !h.is_finite() {
            return Err(Error::Domain(format!(
                "penalty callback returned invalid h = {h} at alpha = {alpha}"
            )));
        }
        Ok(alpha - beta - cfg.c1 * nu / (cfg.c2 + nu * h + state.sum_zh).sqrt())
    };

    let mut lo = beta;
    let mut hi = beta + horizon;
    let f_lo = f_at(lo)?;
    if f_lo.abs() <= tol_abs {
        return Ok(BisectionOutcome {
            beta_next: lo,
            residual: f_lo.abs(),
            iterations: 0,
        });
    }
    let f_hi = f_at(hi)?;
    if f_lo > 0.0 || f_hi < 0.0 {
        return Err(Error::BisectionBracket {
            lo,
            hi,
            f_lo,
            f_hi,
        });
    }
    for iter in 1..=200 {
        let mid = 0.5 * (lo + hi);
        let f_mid = f_at(mid)?;
        if f_mid.abs() <= tol_abs {
            // The increment never exceeds nu / 9 because the radicand is at
            // least 81 c1^2.
            if mid - beta > nu / 9.0 * (1.0 + 1e-9) + tol_abs {
                return Err(Error::Domain(format!(
                    "implicit update increment {} exceeded nu / 9 = {}",
                    mid - beta,
                    nu / 9.0
                )));
            }
            return Ok(BisectionOutcome {
                beta_next: mid,
                residual: f_mid.abs(),
                iterations: iter,
            });
        }
        if f_mid < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence {
        context: "implicit rate bisection".into(),
        residual: (hi - lo).abs(),
        iterations: 200,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(c1: f64, c2: f64, beta1: f64, lambda: f64) -> SpaConfig {
        SpaConfig::new(c1, c2, beta1, lambda).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SpaConfig::new(0.0, 0.0, 1.0, 1.0).is_err());
        assert!(SpaConfig::new(1.0, -1.0, 1.0, 1.0).is_err());
        assert!(SpaConfig::new(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(SpaConfig::new(1.0, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn update_arithmetic() {
        let c = cfg(2.0, 3.0, 1.5, 1.0);
        let mut s = SpaState::new(&c, true);
        assert_eq!(s.t, 1);
        assert_eq!(s.eta(), 1.0 / 1.5);
        // First round: radicand = 3 + 2*1 = 5.
        let b2 = s.update(&c, 1.0, 2.0, 0.5, 1.0).unwrap();
        assert!((b2 - (1.5 + 2.0 / 5.0f64.sqrt())).abs() < 1e-15);
        assert_eq!(s.t, 2);
        assert!((s.sum_zh - 0.5).abs() < 1e-15);
        assert!((s.sum_z - 1.0).abs() < 1e-15);
        // Zero-z round: nothing moves but the clock and the log.
        let b3 = s.update(&c, 0.0, 0.0, 0.9, 1.0).unwrap();
        assert_eq!(b3, b2);
        assert_eq!(s.t, 3);
        assert_eq!(s.history.as_ref().unwrap().len(), 2);
        let hist = s.history.as_ref().unwrap();
        assert_eq!(hist[1].eta_z, 0.0);
        assert_eq!(hist[1].incr_h, 0.0);
    }

    #[test]
    fn update_rejects_bad_rounds_before_mutation() {
        let c = cfg(1.0, 0.0, 1.0, 1.0);
        let mut s = SpaState::new(&c, false);
        s.update(&c, 1.0, 2.0, 1.0, 1.0).unwrap();
        let snapshot = (s.t, s.beta, s.sum_zh, s.sum_z);
        // h_next above h1.
        let e = s.update(&c, 1.0, 2.0, 1.5, 1.0).unwrap_err();
        assert!(e.to_string().contains("h1 >= h_next"), "{e}");
        // zbar too small.
        let e = s.update(&c, 1.0, 0.4, 0.9, 1.0).unwrap_err();
        assert!(e.to_string().contains("zbar * h1 >= z * h_next"), "{e}");
        // Negative z.
        assert!(s.update(&c, -0.1, 1.0, 0.5, 1.0).is_err());
        // Zero radicand with positive z (c2 = 0, zbar = 0 is only consistent
        // with z * h_next = 0, so force h_next = 0).
        let mut fresh = SpaState::new(&c, false);
        let e = fresh.update(&c, 1.0, 0.0, 0.0, 1.0).unwrap_err();
        assert!(e.to_string().contains("radicand"), "{e}");
        assert_eq!(snapshot, (s.t, s.beta, s.sum_zh, s.sum_z));
    }

    #[test]
    fn sequence_condition_checker() {
        // Admissible: constant zbar dominating z, constant h.
        let rounds: Vec<(f64, f64, f64)> = (0..50).map(|i| (0.5 + (i % 3) as f64 * 0.1, 1.0, 1.0)).collect();
        check_sequence_conditions(1.0, &rounds).unwrap();
        // Violation of the inclusive-sum monotonicity: zbar collapses faster
        // than the sum grows.
        let rounds = vec![(0.1, 10.0, 1.0), (0.1, 0.2, 1.0)];
        let e = check_sequence_conditions(1.0, &rounds).unwrap_err();
        assert!(e.to_string().contains("partial sums"), "{e}");
        match e {
            Error::SequenceCondition { round, .. } => assert_eq!(round, 2),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn reghat_and_certificates_need_history() {
        let c = cfg(1.0, 1.0, 1.0, 1.0);
        let mut s = SpaState::new(&c, false);
        s.update(&c, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(matches!(s.reghat_sp(&c), Err(Error::HistoryDisabled(_))));
        assert!(matches!(
            s.bound_certificate_i(&c, 1.0, 1.0),
            Err(Error::HistoryDisabled(_))
        ));
    }

    #[test]
    fn certificate_i_holds_on_admissible_sequences() {
        // Constructive check on a handful of random admissible sequences;
        // the thousand-sequence audit is in the acceptance suite.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let t_max = rng.gen_range(10..200);
            let h1: f64 = rng.gen_range(0.5..3.0);
            let zs: Vec<f64> = (0..t_max).map(|_| rng.gen_range(0.0..4.0)).collect();
            let zmax = zs.iter().cloned().fold(0.0, f64::max);
            let c1: f64 = rng.gen_range(0.5..2.0);
            // c2 = c1^2 makes sqrt(c2)/c1 = 1, and beta1 >= max z makes (S1)
            // hold with epsilon = beta1.
            let c = cfg(c1, c1 * c1, zmax.max(1.0), 1.0);
            let mut s = SpaState::new(&c, true);
            let zbar = zmax.max(1.0);
            for &z in &zs {
                let h_next = rng.gen_range(0.0..h1);
                assert!(s.check_s1(&c, z, zbar, h1, c.beta1));
                s.update(&c, z, zbar, h_next, h1).unwrap();
            }
            let reghat = s.reghat_sp(&c).unwrap();
            let cert = s.bound_certificate_i(&c, h1, c.beta1).unwrap();
            assert!(
                reghat <= cert + 1e-9,
                "certificate I violated: {reghat} > {cert}"
            );
        }
    }

    #[test]
    fn certificate_ii_holds_with_constant_penalty() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let t_max = rng.gen_range(10..200);
            let h1: f64 = rng.gen_range(0.5..3.0);
            let zs: Vec<f64> = (0..t_max).map(|_| rng.gen_range(0.0..4.0)).collect();
            let total: f64 = zs.iter().sum();
            let c1: f64 = rng.gen_range(0.5..2.0);
            let a = 0.5;
            // beta1 large enough that (S2) holds at every prefix.
            let beta1 = (a * c1 / h1.sqrt()) * total.sqrt() + 0.1;
            let c = cfg(c1, 0.0, beta1, 1.0);
            let mut s = SpaState::new(&c, true);
            for &z in &zs {
                assert!(s.check_s2(&c, z, h1, a));
                let zbar = z.max(1e-12);
                s.update(&c, z, zbar, h1, h1).unwrap();
            }
            let reghat = s.reghat_sp(&c).unwrap();
            let cert = s.bound_certificate_ii(&c, h1, a).unwrap();
            assert!(
                reghat <= cert + 1e-9,
                "certificate II violated: {reghat} > {cert}"
            );
        }
    }

    #[test]
    fn certificate_ii_requires_zero_c2() {
        let c = cfg(1.0, 1.0, 1.0, 1.0);
        let s = SpaState::new(&c, true);
        assert!(s.bound_certificate_ii(&c, 1.0, 0.5).is_err());
    }

    #[test]
    fn worst_case_penalty_reduces_to_standard_rate() {
        // With h = h1 constant, beta stays within a small factor of the
        // standard stability-only closed form.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let t_max = 10_000;
        let h1 = (8.0f64).ln();
        let c1 = 1.0;
        let zbar = 1.0_f64;
        let beta1 = c1 * zbar.sqrt() / h1.sqrt();
        let c = cfg(c1, 0.0, beta1, 1.0);
        let mut s = SpaState::new(&c, false);
        let mut sum_z = 0.0;
        for _ in 0..t_max {
            let z: f64 = rng.gen_range(0.0..1.0);
            s.update(&c, z, zbar, h1, h1).unwrap();
            sum_z += z;
        }
        let standard = (c1 / h1.sqrt()) * (zbar + sum_z).sqrt();
        let ratio = s.beta / standard;
        assert!(
            (1.0..=3.0).contains(&ratio),
            "worst-case-penalty ratio {ratio} outside [1, 3]"
        );
    }

    #[test]
    fn bisection_finds_root_of_flat_penalty() {
        // With h constant the implicit update has the explicit solution
        // beta + c1 nu / sqrt(c2 + nu h + sum_zh).
        let c1 = 1.3;
        let c = cfg(c1, 81.0 * c1 * c1, 2.0, 2.0);
        let mut s = SpaState::new(&c, false);
        s.update(&c, 0.4, 0.4, 1.0, 1.0).unwrap();
        let h = 0.8;
        let nu = 0.9;
        let out =
            implicit_update_bisection(&s, &c, nu, 100.0, 1e-12, |_| Ok(h)).unwrap();
        let explicit = s.beta + c1 * nu / (c.c2 + nu * h + s.sum_zh).sqrt();
        assert!((out.beta_next - explicit).abs() <= 1e-9);
        assert!(out.residual <= 1e-12 * s.beta.max(1.0));
        assert!(out.beta_next - s.beta <= nu / 9.0 + 1e-12);
    }

    #[test]
    fn bisection_zero_nu_short_circuits() {
        let c1 = 1.0;
        let c = cfg(c1, 81.0, 2.0, 2.0);
        let s = SpaState::new(&c, false);
        let mut evals = 0;
        let out = implicit_update_bisection(&s, &c, 0.0, 10.0, 1e-9, |_| {
            evals += 1;
            Ok(1.0)
        })
        .unwrap();
        assert_eq!(out.beta_next, s.beta);
        assert_eq!(out.iterations, 0);
        assert_eq!(evals, 0);
    }

    #[test]
    fn bisection_reports_missing_sign_change() {
        // A pathological callback that makes F negative on the whole bracket:
        // h(alpha) shrinks so fast that the increment always exceeds the
        // offset. Easiest construction: tiny horizon.
        let c1 = 1.0;
        let c = cfg(c1, 81.0, 100.0, 2.0);
        let s = SpaState::new(&c, false);
        let err = implicit_update_bisection(&s, &c, 9.0, 1e-6, 1e-12, |_| Ok(0.0)).unwrap_err();
        match err {
            Error::BisectionBracket { f_lo, f_hi, .. } => {
                assert!(f_lo < 0.0 && f_hi < 0.0);
            }
            other => panic!("expected bracket error, got {other}"),
        }
    }

    #[test]
    fn bisection_requires_matching_c2() {
        let c = cfg(1.0, 5.0, 1.0, 1.0);
        let s = SpaState::new(&c, false);
        assert!(implicit_update_bisection(&s, &c, 1.0, 10.0, 1e-9, |_| Ok(1.0)).is_err());
    }
}
