//! Loss-sequence generators: sparse adversaries (oblivious and
//! history-dependent), sparse stochastic arms, and corrupted-stochastic
//! regimes with a hard corruption budget, plus regret accounting helpers.
//!
//! Determinism contract: an adversarial sequence is a function of
//! `pattern_seed` (and, for the history-dependent pattern, of the pulled
//! arms); stochastic draws are a function of the instance seed. Identical
//! inputs reproduce identical sequences bit for bit.

use crate::error::{Error, Result};
use crate::simplex::{LossRange, LossVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Which arms carry loss in an adversarial round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdversarialPattern {
    /// One support of size `s`, drawn once from the pattern seed.
    Fixed,
    /// Contiguous window of size `s` sliding one arm per round.
    Rotating,
    /// Fresh uniformly random support of size `s` each round.
    Random,
    /// The most-pulled arm so far always carries the maximal loss; the rest
    /// of the support is random. History-dependent.
    FollowMostPulled,
}

/// Observation noise of a stochastic arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseModel {
    /// Loss is 1 with probability `mean`, else 0.
    Bernoulli,
    /// Loss is uniform on `[mean - halfwidth, mean + halfwidth]`.
    UniformAround { halfwidth: f64 },
}

/// How a corruption budget is spent over the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    /// Corrupt consecutive rounds from the start until the budget runs out.
    FrontLoaded,
    /// Corrupt evenly spaced rounds across the horizon.
    Spread,
}

/// Declarative environment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvSpec {
    AdversarialSparse {
        k: usize,
        /// Maximal per-round support size.
        s: usize,
        range: LossRange,
        pattern: AdversarialPattern,
        pattern_seed: u64,
    },
    StochasticSparse {
        means: Vec<f64>,
        noise: NoiseModel,
    },
    CorruptedStochastic {
        means: Vec<f64>,
        noise: NoiseModel,
        /// Total corruption budget: sum over rounds of the sup-norm
        /// difference from the underlying stochastic draw.
        budget: f64,
        schedule: ScheduleKind,
    },
}

impl EnvSpec {
    pub fn k(&self) -> usize {
        match self {
            EnvSpec::AdversarialSparse { k, .. } => *k,
            EnvSpec::StochasticSparse { means, .. }
            | EnvSpec::CorruptedStochastic { means, .. } => means.len(),
        }
    }

    pub fn range(&self) -> LossRange {
        match self {
            EnvSpec::AdversarialSparse { range, .. } => *range,
            _ => LossRange::UnitInterval,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EnvSpec::AdversarialSparse { k, s, .. } => {
                if *k < 2 {
                    return Err(Error::config("env.k", format!("need k >= 2, got {k}")));
                }
                // s = 0 is legal and yields the all-zero loss sequence.
                if *s > *k {
                    return Err(Error::config(
                        "env.s",
                        format!("need s <= k, got s = {s}, k = {k}"),
                    ));
                }
                Ok(())
            }
            EnvSpec::StochasticSparse { means, noise }
            | EnvSpec::CorruptedStochastic { means, noise, .. } => {
                if means.len() < 2 {
                    return Err(Error::config(
                        "env.means",
                        format!("need k >= 2 arms, got {}", means.len()),
                    ));
                }
                for (i, &m) in means.iter().enumerate() {
                    if !m.is_finite() || !(0.0..=1.0).contains(&m) {
                        return Err(Error::config(
                            "env.means",
                            format!("mean {i} = {m} outside [0, 1]"),
                        ));
                    }
                }
                let best = means.iter().cloned().fold(f64::INFINITY, f64::min);
                let n_best = means.iter().filter(|&&m| m == best).count();
                if n_best != 1 {
                    return Err(Error::config(
                        "env.means",
                        "need a unique optimal arm (positive minimal gap)".to_string(),
                    ));
                }
                if let NoiseModel::UniformAround { halfwidth } = noise {
                    if !(*halfwidth >= 0.0) {
                        return Err(Error::config(
                            "env.noise",
                            format!("halfwidth must be >= 0, got {halfwidth}"),
                        ));
                    }
                    for (i, &m) in means.iter().enumerate() {
                        if m - halfwidth < 0.0 || m + halfwidth > 1.0 {
                            return Err(Error::config(
                                "env.noise",
                                format!("mean {i} +/- halfwidth leaves [0, 1]"),
                            ));
                        }
                    }
                }
                if let EnvSpec::CorruptedStochastic { budget, .. } = self {
                    if !(*budget >= 0.0) || !budget.is_finite() {
                        return Err(Error::config(
                            "env.budget",
                            format!("budget must be >= 0, got {budget}"),
                        ));
                    }
                }
                Ok(())
            }
        }
    }

    /// True arm means, when the environment has them.
    pub fn means(&self) -> Option<&[f64]> {
        match self {
            EnvSpec::AdversarialSparse { .. } => None,
            EnvSpec::StochasticSparse { means, .. }
            | EnvSpec::CorruptedStochastic { means, .. } => Some(means),
        }
    }
}

/// Instantiated loss generator for one episode.
pub struct Environment {
    spec: EnvSpec,
    horizon: usize,
    rng: ChaCha8Rng,
    round: usize,
    pull_counts: Vec<u64>,
    history_seen: usize,
    fixed_support: Vec<usize>,
    budget_left: f64,
    spent_budget: f64,
    corrupt_period: usize,
}

impl Environment {
    /// `seed` drives stochastic draws; adversarial sequences are driven by
    /// the spec's own `pattern_seed` so that every episode of an experiment
    /// faces the same oblivious sequence.
    pub fn new(spec: EnvSpec, horizon: usize, seed: [u8; 32]) -> Result<Self> {
        spec.validate()?;
        if horizon == 0 {
            return Err(Error::config("env.horizon", "horizon must be positive"));
        }
        let k = spec.k();
        let (rng, fixed_support) = match &spec {
            EnvSpec::AdversarialSparse {
                pattern_seed,
                s,
                pattern,
                ..
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*pattern_seed);
                let support = if matches!(pattern, AdversarialPattern::Fixed) {
                    sample_support(&mut rng, k, *s)
                } else {
                    Vec::new()
                };
                (rng, support)
            }
            _ => (ChaCha8Rng::from_seed(seed), Vec::new()),
        };
        let (budget_left, corrupt_period) = match &spec {
            EnvSpec::CorruptedStochastic {
                budget, schedule, ..
            } => {
                let period = match schedule {
                    ScheduleKind::FrontLoaded => 1,
                    // ~budget corruptions spaced evenly over the horizon.
                    ScheduleKind::Spread => {
                        (horizon as f64 / budget.max(1.0)).floor().max(1.0) as usize
                    }
                };
                (*budget, period)
            }
            _ => (0.0, 1),
        };
        Ok(Environment {
            spec,
            horizon,
            rng,
            round: 0,
            pull_counts: vec![0; k],
            history_seen: 0,
            fixed_support,
            budget_left,
            spent_budget: 0.0,
            corrupt_period,
        })
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn k(&self) -> usize {
        self.spec.k()
    }

    /// Total corruption spent so far (zero for uncorrupted environments).
    pub fn corruption_spent(&self) -> f64 {
        self.spent_budget
    }

    /// Produce the loss vector of round `t = history.len() + 1`. `history`
    /// holds the arms pulled in rounds `s < t`; oblivious environments
    /// ignore it.
    pub fn generate_round(&mut self, history: &[usize]) -> Result<LossVector> {
        if self.round >= self.horizon {
            return Err(Error::Domain(format!(
                "environment exhausted: horizon {} reached",
                self.horizon
            )));
        }
        if history.len() != self.round {
            return Err(Error::Domain(format!(
                "history length {} does not match round index {}",
                history.len(),
                self.round
            )));
        }
        // Fold new pulls into the counts (only the tail since the last call).
        for &a in &history[self.history_seen..] {
            if a >= self.k() {
                return Err(Error::Domain(format!("history contains invalid arm {a}")));
            }
            self.pull_counts[a] += 1;
        }
        self.history_seen = history.len();
        self.round += 1;
        let t = self.round;
        let k = self.k();

        let values = match &self.spec {
            EnvSpec::AdversarialSparse {
                s, range, pattern, ..
            } => {
                let (lo, hi) = range.bounds();
                let mut v = vec![0.0; k];
                match pattern {
                    AdversarialPattern::Fixed => {
                        for &a in &self.fixed_support {
                            v[a] = self.rng.gen_range(lo..=hi);
                        }
                    }
                    AdversarialPattern::Rotating => {
                        for j in 0..*s {
                            v[(t - 1 + j) % k] = self.rng.gen_range(lo..=hi);
                        }
                    }
                    AdversarialPattern::Random => {
                        for a in sample_support(&mut self.rng, k, *s) {
                            v[a] = self.rng.gen_range(lo..=hi);
                        }
                    }
                    AdversarialPattern::FollowMostPulled if *s == 0 => {}
                    AdversarialPattern::FollowMostPulled => {
                        // Target: most-pulled arm, lowest index on ties.
                        let target = (0..k)
                            .max_by(|&a, &b| {
                                self.pull_counts[a]
                                    .cmp(&self.pull_counts[b])
                                    .then(b.cmp(&a))
                            })
                            .unwrap();
                        v[target] = hi;
                        let mut placed = 1;
                        while placed < *s {
                            let a = self.rng.gen_range(0..k);
                            if a != target && v[a] == 0.0 {
                                v[a] = self.rng.gen_range(lo..=hi);
                                placed += 1;
                            }
                        }
                    }
                }
                v
            }
            EnvSpec::StochasticSparse { means, noise } => draw_stochastic(&mut self.rng, means, *noise),
            EnvSpec::CorruptedStochastic {
                means,
                noise,
                ..
            } => {
                let mut v = draw_stochastic(&mut self.rng, means, *noise);
                if (t - 1) % self.corrupt_period == 0 && self.budget_left > 0.0 {
                    // Raise the optimal arm to maximal loss and zero the worst
                    // arm; the sup-norm cost is the larger of the two moves.
                    let best = argmin(means);
                    let worst = argmax(means);
                    let mut corrupted = v.clone();
                    corrupted[best] = 1.0;
                    corrupted[worst] = 0.0;
                    let cost = (1.0 - v[best]).abs().max(v[worst].abs());
                    if cost <= self.budget_left {
                        self.budget_left -= cost;
                        self.spent_budget += cost;
                        v = corrupted;
                    }
                }
                v
            }
        };
        LossVector::new(values, self.spec.range())
    }
}

fn draw_stochastic(rng: &mut ChaCha8Rng, means: &[f64], noise: NoiseModel) -> Vec<f64> {
    means
        .iter()
        .map(|&m| match noise {
            NoiseModel::Bernoulli => {
                if rng.gen::<f64>() < m {
                    1.0
                } else {
                    0.0
                }
            }
            NoiseModel::UniformAround { halfwidth } => {
                if halfwidth == 0.0 {
                    m
                } else {
                    rng.gen_range(m - halfwidth..=m + halfwidth)
                }
            }
        })
        .collect()
}

fn sample_support(rng: &mut ChaCha8Rng, k: usize, s: usize) -> Vec<usize> {
    // Partial Fisher-Yates: first s entries of a random permutation.
    let mut idx: Vec<usize> = (0..k).collect();
    for i in 0..s {
        let j = rng.gen_range(i..k);
        idx.swap(i, j);
    }
    idx.truncate(s);
    idx
}

fn argmin(v: &[f64]) -> usize {
    (0..v.len()).min_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap()
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap()
}

/// One row of a per-round trace. `beta` is the rate in force during the
/// round, `h` the next round's penalty proxy, `z` the stability proxy.
/// `s1_ok` records the algorithm's stability condition: (S1) for the
/// best-of-both-worlds agent and its partial-monitoring analogue, (S2) for
/// the two explicit-rate agents. Checks that do not apply to an algorithm
/// are recorded as `true`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub arm: usize,
    pub loss_observed: f64,
    pub regret_cum: f64,
    pub beta: f64,
    pub h: f64,
    pub z: f64,
    pub s1_ok: bool,
    pub stab_lemma_ok: bool,
    pub f4_ok: bool,
}

/// Episode-level aggregates stored in the trace sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceTotals {
    pub regret_final: f64,
    /// Realized sum of squared loss norms.
    pub l2_realized: f64,
    /// `beta_{T+1}`, needed to reconstruct the final rate increment offline.
    pub beta_final: f64,
    /// `sum_t z_t / beta_t`.
    pub sum_eta_z: f64,
    /// `sum_t (beta_{t+1} - beta_t) * h_{t+1}`.
    pub sum_incr_h: f64,
    /// Count of failed per-round checks of any kind.
    pub violations: usize,
    pub corruption_spent: f64,
}

/// Full per-episode record: rows plus aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub rows: Vec<TraceRow>,
    pub totals: TraceTotals,
}

/// Sum of squared loss norms over an episode.
pub fn l2_of(losses: &[LossVector]) -> f64 {
    losses.iter().map(|l| l.squared_norm()).sum()
}

/// Pseudo-regret of a pulled-arm record against an environment description:
/// realized best-fixed-arm regret for adversarial specs, true mean gaps for
/// stochastic and corrupted specs.
pub fn pseudo_regret(spec: &EnvSpec, losses: &[LossVector], arms: &[usize]) -> Result<f64> {
    if losses.len() != arms.len() {
        return Err(Error::Domain(format!(
            "pseudo_regret: {} losses but {} arms",
            losses.len(),
            arms.len()
        )));
    }
    match spec {
        EnvSpec::AdversarialSparse { k, .. } => {
            let mut per_arm = vec![0.0; *k];
            let mut chosen = 0.0;
            for (l, &a) in losses.iter().zip(arms) {
                for i in 0..*k {
                    per_arm[i] += l[i];
                }
                chosen += l[a];
            }
            let best = per_arm.iter().cloned().fold(f64::INFINITY, f64::min);
            Ok(chosen - best)
        }
        EnvSpec::StochasticSparse { means, .. }
        | EnvSpec::CorruptedStochastic { means, .. } => {
            let best = means.iter().cloned().fold(f64::INFINITY, f64::min);
            Ok(arms.iter().map(|&a| means[a] - best).sum())
        }
    }
}
