//! Summary reports: the aggregate a `run` or `certify` invocation produces.
//!
//! Everything in a report except the wall-clock fields is a deterministic
//! function of the config (or the trace files), so serial and parallel
//! executions agree once `wall_ms` is ignored.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bench::certificates::CertificateOutcome;

/// Aggregates for one horizon of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonReport {
    pub horizon: usize,
    pub episodes: usize,
    pub mean_regret: f64,
    /// Standard error of the per-episode final regrets (0 for one episode).
    pub stderr_regret: f64,
    /// Mean realized sum of squared loss norms.
    pub mean_l2: f64,
    /// Monitoring runs only: mean of `sum_t V'_t` over episodes.
    pub mean_sum_value: Option<f64>,
    pub certificates: Vec<CertificateOutcome>,
    pub pass: bool,
    pub wall_ms: u64,
}

/// The whole run: one entry per grid horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub name: String,
    /// `"mab"` or `"partial-monitoring"`.
    pub kind: String,
    pub config_hash: String,
    pub trace_format_version: u32,
    pub horizons: Vec<HorizonReport>,
    pub overall_pass: bool,
}

impl SummaryReport {
    /// Copy with every wall-clock field zeroed; the determinism invariant
    /// (serial == parallel) is stated over this projection.
    pub fn without_timing(&self) -> SummaryReport {
        let mut out = self.clone();
        for h in &mut out.horizons {
            h.wall_ms = 0;
        }
        out
    }

    /// Human-readable rendering: one pass/fail line per certificate family.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let short_hash = &self.config_hash[..self.config_hash.len().min(12)];
        let _ = writeln!(out, "experiment {} ({}, config {short_hash})", self.name, self.kind);
        for h in &self.horizons {
            let _ = writeln!(
                out,
                "  T = {} ({} episodes): mean regret {:.4} +/- {:.4}, mean L2 {:.4}{} [{} ms]",
                h.horizon,
                h.episodes,
                h.mean_regret,
                h.stderr_regret,
                h.mean_l2,
                match h.mean_sum_value {
                    Some(v) => format!(", mean sum V' {v:.4}"),
                    None => String::new(),
                },
                h.wall_ms
            );
            for c in &h.certificates {
                let _ = writeln!(
                    out,
                    "    [{}] {:<20} value {:.6e} vs bound {:.6e} -- {}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.family,
                    c.value,
                    c.bound,
                    c.detail
                );
            }
        }
        let _ = writeln!(
            out,
            "overall: {}",
            if self.overall_pass { "PASS" } else { "FAIL" }
        );
        out
    }

    pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
        let n = values.len();
        assert!(n > 0);
        let mean = values.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return (mean, 0.0);
        }
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
        (mean, (var / n as f64).sqrt())
    }
}
