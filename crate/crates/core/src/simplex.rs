//! Probability vectors, loss vectors, and the handful of scalar facts the
//! regret analysis leans on: Shannon entropy, the functions xi and zeta, the
//! per-coordinate stability suprema they solve, Bregman divergences of the
//! negative-entropy / log-barrier / hybrid regularizers, and uniform mixing.
//!
//! Conventions: everything is `f64`, `0 * log 0 = 0`, and the negative-entropy
//! regularizer is `sum_i q_i log q_i` (no linear `-q_i` term), so that on the
//! simplex it equals minus the Shannon entropy.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Element of the probability simplex, `k >= 2`, entries nonnegative.
///
/// Construction renormalizes when the raw sum is within `1e-9` of one and
/// rejects otherwise; after construction the sum is within `1e-12` of one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub const SUM_ACCEPT_TOL: f64 = 1e-9;
    pub const SUM_POST_TOL: f64 = 1e-12;

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidProbability(format!(
                "need at least 2 coordinates, got {}",
                values.len()
            )));
        }
        let mut sum = 0.0;
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidProbability(format!(
                    "coordinate {i} is not finite: {v}"
                )));
            }
            if v < 0.0 {
                return Err(Error::InvalidProbability(format!(
                    "coordinate {i} is negative: {v}"
                )));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > Self::SUM_ACCEPT_TOL {
            return Err(Error::InvalidProbability(format!(
                "coordinates sum to {sum}, outside 1 +/- {}",
                Self::SUM_ACCEPT_TOL
            )));
        }
        let mut values = values;
        if sum != 1.0 {
            for v in &mut values {
                *v /= sum;
            }
        }
        debug_assert!((values.iter().sum::<f64>() - 1.0).abs() <= Self::SUM_POST_TOL);
        Ok(ProbVector(values))
    }

    /// Uniform distribution on `k` arms.
    pub fn uniform(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidProbability(format!(
                "need at least 2 coordinates, got {k}"
            )));
        }
        Ok(ProbVector(vec![1.0 / k as f64; k]))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Internal constructor for vectors already known to sum to one to
    /// machine precision (e.g. solver output after renormalization).
    pub(crate) fn from_normalized(values: Vec<f64>) -> Self {
        debug_assert!(values.len() >= 2);
        debug_assert!((values.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        ProbVector(values)
    }
}

impl std::ops::Index<usize> for ProbVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Admissible range for a loss vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossRange {
    /// Losses in `[0, 1]`.
    UnitInterval,
    /// Losses in `[-1, 1]`.
    Symmetric,
}

impl LossRange {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            LossRange::UnitInterval => (0.0, 1.0),
            LossRange::Symmetric => (-1.0, 1.0),
        }
    }

    pub fn contains(self, x: f64) -> bool {
        let (lo, hi) = self.bounds();
        x >= lo && x <= hi
    }
}

/// A full loss vector for one round, validated against its declared range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossVector {
    values: Vec<f64>,
    range: LossRange,
}

impl LossVector {
    pub fn new(values: Vec<f64>, range: LossRange) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidLoss(format!(
                "need at least 2 coordinates, got {}",
                values.len()
            )));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || !range.contains(v) {
                return Err(Error::InvalidLoss(format!(
                    "coordinate {i} = {v} outside {:?}",
                    range
                )));
            }
        }
        Ok(LossVector { values, range })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn range(&self) -> LossRange {
        self.range
    }

    /// Squared Euclidean norm of the round's losses.
    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Number of nonzero coordinates.
    pub fn support_size(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }
}

impl std::ops::Index<usize> for LossVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// Importance-weighted loss estimate: zero everywhere except the played arm,
/// where it carries `observed / p[arm]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatedLoss {
    pub arm: usize,
    /// The single nonzero component `observed / p[arm]`.
    pub scaled: f64,
    pub k: usize,
}

impl EstimatedLoss {
    pub fn component(&self, i: usize) -> f64 {
        if i == self.arm {
            self.scaled
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.k];
        v[self.arm] = self.scaled;
        v
    }

    /// Inner product with an arbitrary vector.
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.scaled * x[self.arm]
    }
}

/// Shannon entropy `H(p) = -sum_i p_i log p_i`, with `0 log 0 = 0`.
pub fn shannon_entropy(p: &ProbVector) -> f64 {
    -p.values()
        .iter()
        .map(|&q| if q > 0.0 { q * q.ln() } else { 0.0 })
        .sum::<f64>()
}

/// Negative-entropy regularizer value `sum_i q_i log q_i` (equals `-H(q)`).
pub fn neg_entropy(q: &ProbVector) -> f64 {
    -shannon_entropy(q)
}

/// Log-barrier regularizer value `sum_i log(1 / q_i)`; infinite on the
/// boundary of the simplex.
pub fn log_barrier(q: &ProbVector) -> f64 {
    q.values()
        .iter()
        .map(|&v| if v > 0.0 { -v.ln() } else { f64::INFINITY })
        .sum()
}

/// `xi(x) = exp(-x) + x - 1`. Nonnegative everywhere; `xi(x) <= x^2 / 2` for
/// `x >= 0` and `xi(x) <= x^2` for `x >= -1`.
pub fn xi(x: f64) -> f64 {
    // expm1 keeps precision for small |x|: xi(x) = expm1(-x) + x.
    f64::exp_m1(-x) + x
}

/// `zeta(x) = x - log(1 + x)` for `x > -1`. Nonnegative; `zeta(x) <= x^2` on
/// `[-1/2, 1/2]`.
pub fn zeta(x: f64) -> Result<f64> {
    if !(x > -1.0) {
        return Err(Error::Domain(format!("zeta requires x > -1, got {x}")));
    }
    Ok(x - f64::ln_1p(x))
}

/// Which per-coordinate regularizer component a stability supremum refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityKind {
    /// `phi(u) = u log u - u`.
    ShannonComponent,
    /// `phi(u) = log(1 / u)`.
    LogBarrierComponent,
}

/// Closed form of the per-coordinate stability supremum
/// `sup_{y > 0} { a (x - y) - D_phi(y, x) }` at anchor `x in (0, 1]`:
/// `x * xi(a)` for the Shannon component and `zeta(a x)` for the log-barrier
/// component (the latter requires `a >= -1/x`, otherwise the supremum is
/// infinite).
pub fn stability_sup(kind: StabilityKind, a: f64, x: f64) -> Result<f64> {
    if !(x > 0.0 && x <= 1.0) {
        return Err(Error::Domain(format!(
            "stability_sup requires x in (0, 1], got {x}"
        )));
    }
    if !a.is_finite() {
        return Err(Error::Domain(format!("stability_sup requires finite a, got {a}")));
    }
    match kind {
        StabilityKind::ShannonComponent => Ok(x * xi(a)),
        StabilityKind::LogBarrierComponent => {
            if a * x <= -1.0 {
                return Err(Error::Domain(format!(
                    "log-barrier stability requires a >= -1/x (a = {a}, x = {x})"
                )));
            }
            zeta(a * x)
        }
    }
}

/// Which Bregman divergence to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BregmanKind {
    /// Generated by `sum_i q_i log q_i`.
    NegShannon,
    /// Generated by `sum_i log(1 / q_i)`.
    LogBarrier,
    /// Generated by `beta * neg-entropy + barrier_weight * log-barrier`.
    Hybrid { beta: f64, barrier_weight: f64 },
}

/// Bregman divergence `D(p, q)` of the chosen regularizer. Requires `q > 0`
/// coordinatewise; `p` may touch the boundary only for the negative-entropy
/// divergence (where the limit is finite).
pub fn bregman(kind: BregmanKind, p: &ProbVector, q: &ProbVector) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Domain(format!(
            "bregman: dimension mismatch {} vs {}",
            p.len(),
            q.len()
        )));
    }
    if q.values().iter().any(|&v| v <= 0.0) {
        return Err(Error::Domain(
            "bregman: second argument must be strictly positive".into(),
        ));
    }
    match kind {
        BregmanKind::NegShannon => {
            // Termwise p log(p/q) - p + q; the linear parts cancel on the
            // simplex but keeping them makes the value exact for renormalized
            // inputs.
            let mut d = 0.0;
            for i in 0..p.len() {
                let (pi, qi) = (p[i], q[i]);
                let t = if pi > 0.0 { pi * (pi / qi).ln() } else { 0.0 };
                d += t - pi + qi;
            }
            Ok(d.max(0.0))
        }
        BregmanKind::LogBarrier => {
            if p.values().iter().any(|&v| v <= 0.0) {
                return Err(Error::Domain(
                    "log-barrier bregman: first argument must be strictly positive".into(),
                ));
            }
            let mut d = 0.0;
            for i in 0..p.len() {
                let r = p[i] / q[i];
                d += -r.ln() + r - 1.0;
            }
            Ok(d.max(0.0))
        }
        BregmanKind::Hybrid {
            beta,
            barrier_weight,
        } => {
            if !(beta > 0.0) || !(barrier_weight >= 0.0) {
                return Err(Error::Domain(format!(
                    "hybrid bregman requires beta > 0 and barrier_weight >= 0, got {beta}, {barrier_weight}"
                )));
            }
            let ns = bregman(BregmanKind::NegShannon, p, q)?;
            let lb = if barrier_weight > 0.0 {
                bregman(BregmanKind::LogBarrier, p, q)?
            } else {
                0.0
            };
            Ok(beta * ns + barrier_weight * lb)
        }
    }
}

/// Mix with the uniform distribution: `(1 - gamma) q + (gamma / k) 1`,
/// `gamma in [0, 1/2]` so that `2 p >= q` coordinatewise.
pub fn mix_uniform(q: &ProbVector, gamma: f64) -> Result<ProbVector> {
    if !(0.0..=0.5).contains(&gamma) {
        return Err(Error::Domain(format!(
            "mix_uniform requires gamma in [0, 1/2], got {gamma}"
        )));
    }
    let k = q.len() as f64;
    let mixed = q
        .values()
        .iter()
        .map(|&v| (1.0 - gamma) * v + gamma / k)
        .collect();
    Ok(ProbVector::from_normalized(mixed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn prob_vector_validation() {
        assert!(ProbVector::new(vec![1.0]).is_err());
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbVector::new(vec![f64::NAN, 1.0]).is_err());
        // Within 1e-9 of one: renormalized.
        let p = ProbVector::new(vec![0.5 + 4e-10, 0.5]).unwrap();
        assert!((p.values().iter().sum::<f64>() - 1.0).abs() <= ProbVector::SUM_POST_TOL);
        // Outside 1e-9: rejected.
        assert!(ProbVector::new(vec![0.5 + 2e-9, 0.5]).is_err());
        assert_eq!(ProbVector::uniform(4).unwrap().values(), &[0.25; 4]);
    }

    #[test]
    fn entropy_values() {
        let u = ProbVector::uniform(7).unwrap();
        assert!((shannon_entropy(&u) - (7.0f64).ln()).abs() < 1e-14);
        // Frozen reference: H(0.25, 0.75) evaluated by hand from the
        // definition -0.25 ln 0.25 - 0.75 ln 0.75.
        let h = shannon_entropy(&pv(&[0.25, 0.75]));
        assert!((h - 0.5623351446188083).abs() < 1e-15);
        // Boundary: 0 log 0 = 0.
        let h = shannon_entropy(&pv(&[1.0, 0.0]));
        assert_eq!(h, 0.0);
        assert_eq!(neg_entropy(&u), -shannon_entropy(&u));
    }

    #[test]
    fn xi_zeta_values() {
        assert_eq!(xi(0.0), 0.0);
        assert!((xi(1.0) - 0.36787944117144233).abs() < 1e-16);
        // Small-argument accuracy via expm1: xi(x) ~ x^2/2.
        let x = 1e-9;
        assert!((xi(x) - x * x / 2.0).abs() < 1e-25);
        assert_eq!(zeta(0.0).unwrap(), 0.0);
        assert!((zeta(1.0).unwrap() - (1.0 - 2.0f64.ln())).abs() < 1e-16);
        assert!(zeta(-1.0).is_err());
        assert!(zeta(-1.5).is_err());
    }

    #[test]
    fn xi_zeta_quadratic_envelopes() {
        // xi(x) <= x^2/2 for x >= 0; xi(x) <= x^2 for x >= -1;
        // zeta(x) <= x^2 on [-1/2, 1/2].
        for i in 0..=4000 {
            let x = -1.0 + i as f64 * 1e-3;
            assert!(xi(x) >= -1e-18, "xi({x}) negative");
            if x >= 0.0 {
                assert!(xi(x) <= x * x / 2.0 + 1e-15);
            }
            assert!(xi(x) <= x * x + 1e-15);
            if (-0.5..=0.5).contains(&x) {
                let z = zeta(x).unwrap();
                assert!(z >= -1e-18);
                assert!(z <= x * x + 1e-15);
            }
        }
    }

    #[test]
    fn stability_sup_closed_forms() {
        // Shannon component at a = 1, x = 0.5: 0.5 * xi(1).
        let v = stability_sup(StabilityKind::ShannonComponent, 1.0, 0.5).unwrap();
        assert!((v - 0.5 * 0.36787944117144233).abs() < 1e-16);
        // Log-barrier component: zeta(a x).
        let v = stability_sup(StabilityKind::LogBarrierComponent, 3.0, 0.5).unwrap();
        assert!((v - zeta(1.5).unwrap()).abs() < 1e-16);
        // Domain: a < -1/x rejected.
        assert!(stability_sup(StabilityKind::LogBarrierComponent, -2.1, 0.5).is_err());
        assert!(stability_sup(StabilityKind::ShannonComponent, 1.0, 0.0).is_err());
        assert!(stability_sup(StabilityKind::ShannonComponent, 1.0, 1.5).is_err());
    }

    /// Coarse grid check that the closed forms really are the suprema of
    /// their defining objectives (the fine 1e3-point audit lives in the
    /// acceptance suite).
    #[test]
    fn stability_sup_matches_grid() {
        let cases = [(0.7, 0.3), (1.5, 0.9), (-0.8, 0.6), (2.5, 0.2)];
        for &(a, x) in &cases {
            let shannon = stability_sup(StabilityKind::ShannonComponent, a, x).unwrap();
            let barrier = stability_sup(StabilityKind::LogBarrierComponent, a, x).unwrap();
            let mut best_s = f64::NEG_INFINITY;
            let mut best_b = f64::NEG_INFINITY;
            // y sweeps (0, x e^{|a|+2}] on a log grid.
            let y_max = x * (a.abs() + 2.0).exp();
            for j in 1..=200_000 {
                let y = y_max * j as f64 / 200_000.0;
                let d_s = y * (y / x).ln() - y + x;
                best_s = best_s.max(a * (x - y) - d_s);
                let d_b = -(y / x).ln() + y / x - 1.0;
                best_b = best_b.max(a * (x - y) - d_b);
            }
            assert!(best_s <= shannon + 1e-12, "grid exceeded closed form");
            assert!(shannon - best_s <= 1e-4, "closed form {shannon} vs grid {best_s}");
            assert!(best_b <= barrier + 1e-12);
            assert!(barrier - best_b <= 1e-4, "closed form {barrier} vs grid {best_b}");
        }
    }

    #[test]
    fn bregman_values() {
        // KL((1,0) || (1/2,1/2)) = log 2.
        let d = bregman(BregmanKind::NegShannon, &pv(&[1.0, 0.0]), &pv(&[0.5, 0.5])).unwrap();
        assert!((d - 2.0f64.ln()).abs() < 1e-15);
        // Log-barrier divergence, hand-evaluated.
        let d = bregman(BregmanKind::LogBarrier, &pv(&[0.6, 0.4]), &pv(&[0.5, 0.5])).unwrap();
        assert!((d - 0.04082199452025516).abs() < 1e-12);
        // Hybrid is the weighted sum of its parts.
        let p = pv(&[0.3, 0.7]);
        let q = pv(&[0.55, 0.45]);
        let h = bregman(
            BregmanKind::Hybrid {
                beta: 2.5,
                barrier_weight: 4.0,
            },
            &p,
            &q,
        )
        .unwrap();
        let ns = bregman(BregmanKind::NegShannon, &p, &q).unwrap();
        let lb = bregman(BregmanKind::LogBarrier, &p, &q).unwrap();
        assert!((h - (2.5 * ns + 4.0 * lb)).abs() < 1e-14);
        // Identical arguments: zero.
        assert_eq!(bregman(BregmanKind::NegShannon, &q, &q).unwrap(), 0.0);
        // q on the boundary rejected.
        assert!(bregman(BregmanKind::NegShannon, &q, &pv(&[1.0, 0.0])).is_err());
        assert!(bregman(BregmanKind::LogBarrier, &pv(&[1.0, 0.0]), &q).is_err());
    }

    #[test]
    fn mix_uniform_values() {
        let p = mix_uniform(&pv(&[1.0, 0.0]), 0.5).unwrap();
        assert_eq!(p.values(), &[0.75, 0.25]);
        let q = pv(&[0.2, 0.3, 0.5]);
        let p = mix_uniform(&q, 0.0).unwrap();
        assert_eq!(p.values(), q.values());
        assert!(mix_uniform(&q, 0.6).is_err());
        assert!(mix_uniform(&q, -0.1).is_err());
        // 2p >= q coordinatewise for any admissible gamma.
        for g in [0.0, 0.1, 0.25, 0.5] {
            let p = mix_uniform(&q, g).unwrap();
            for i in 0..q.len() {
                assert!(2.0 * p[i] >= q[i]);
            }
        }
    }

    #[test]
    fn estimated_loss_ops() {
        let e = EstimatedLoss {
            arm: 2,
            scaled: 5.0,
            k: 4,
        };
        assert_eq!(e.to_dense(), vec![0.0, 0.0, 5.0, 0.0]);
        assert_eq!(e.component(2), 5.0);
        assert_eq!(e.component(0), 0.0);
        assert_eq!(e.dot(&[1.0, 1.0, 0.5, 1.0]), 2.5);
    }

    #[test]
    fn loss_vector_validation() {
        assert!(LossVector::new(vec![0.5, 1.2], LossRange::UnitInterval).is_err());
        assert!(LossVector::new(vec![0.5, -0.2], LossRange::UnitInterval).is_err());
        let l = LossVector::new(vec![0.5, -0.2], LossRange::Symmetric).unwrap();
        assert!((l.squared_norm() - 0.29).abs() < 1e-15);
        assert_eq!(l.support_size(), 2);
        assert_eq!(
            LossVector::new(vec![0.0, 0.7], LossRange::UnitInterval)
                .unwrap()
                .support_size(),
            1
        );
    }
}
