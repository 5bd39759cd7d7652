//! Trace files.
//!
//! Every episode produces two artifacts next to each other:
//!
//! * `<stem>.csv` — one row per round under the fixed header
//!   [`TRACE_HEADER`], written with Rust's shortest round-tripping float
//!   formatting so `parse(render(rows)) == rows` bit for bit;
//! * `<stem>.json` — a [`TraceSidecar`] holding the format version, the
//!   experiment provenance (name, config hash, seeds), the constants of the
//!   run ([`RunDescriptor`]), and the episode totals.
//!
//! The sidecar carries everything needed to re-derive the certificates from
//! the CSV columns alone, which is what `certify` does.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{EnvSpec, TraceRow, TraceTotals};
use crate::error::{Error, Result};
use crate::mab::AlgoKind;
use crate::pm::PmEnvSpec;

/// Bumped whenever the CSV column set or sidecar schema changes.
pub const TRACE_FORMAT_VERSION: u32 = 1;

/// The exact first line of every trace CSV.
pub const TRACE_HEADER: &str = "t,A_t,loss_observed,regret_cum,beta,h,z,s1_ok,stab_lemma_ok,f4_ok";

/// Render rows to CSV text (header + one line per round).
pub fn render_trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::with_capacity(32 + rows.len() * 48);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.arm,
            r.loss_observed,
            r.regret_cum,
            r.beta,
            r.h,
            r.z,
            r.s1_ok,
            r.stab_lemma_ok,
            r.f4_ok
        );
    }
    out
}

fn field<'a>(parts: &mut impl Iterator<Item = &'a str>, line: usize, name: &str) -> Result<&'a str> {
    parts
        .next()
        .ok_or_else(|| Error::Trace(format!("line {line}: missing column '{name}'")))
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize, name: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.parse()
        .map_err(|e| Error::Trace(format!("line {line}: bad {name} '{s}': {e}")))
}

/// Parse CSV text produced by [`render_trace_csv`]. The header must match
/// [`TRACE_HEADER`] exactly; anything else is treated as a format mismatch.
pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == TRACE_HEADER => {}
        Some((_, h)) => {
            return Err(Error::Trace(format!(
                "trace header mismatch: expected '{TRACE_HEADER}', found '{h}'"
            )))
        }
        None => return Err(Error::Trace("empty trace file".into())),
    }
    let mut rows = Vec::new();
    for (idx, raw) in lines {
        if raw.is_empty() {
            continue;
        }
        let line = idx + 1;
        let mut parts = raw.split(',');
        let row = TraceRow {
            t: parse_num(field(&mut parts, line, "t")?, line, "t")?,
            arm: parse_num(field(&mut parts, line, "A_t")?, line, "A_t")?,
            loss_observed: parse_num(
                field(&mut parts, line, "loss_observed")?,
                line,
                "loss_observed",
            )?,
            regret_cum: parse_num(field(&mut parts, line, "regret_cum")?, line, "regret_cum")?,
            beta: parse_num(field(&mut parts, line, "beta")?, line, "beta")?,
            h: parse_num(field(&mut parts, line, "h")?, line, "h")?,
            z: parse_num(field(&mut parts, line, "z")?, line, "z")?,
            s1_ok: parse_num(field(&mut parts, line, "s1_ok")?, line, "s1_ok")?,
            stab_lemma_ok: parse_num(
                field(&mut parts, line, "stab_lemma_ok")?,
                line,
                "stab_lemma_ok",
            )?,
            f4_ok: parse_num(field(&mut parts, line, "f4_ok")?, line, "f4_ok")?,
        };
        if let Some(extra) = parts.next() {
            return Err(Error::Trace(format!(
                "line {line}: unexpected extra column '{extra}'"
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> Result<()> {
    fs::write(path, render_trace_csv(rows))?;
    Ok(())
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Trace(format!("{}: {e}", path.display())))?;
    parse_trace_csv(&text)
}

/// The constants a certifier needs to rebuild every certificate from the
/// CSV columns: the rate-update parameters, the penalty scale, and (for
/// monitoring games) the structural quantities of the analyzed game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RunDescriptor {
    Mab {
        algo: AlgoKind,
        k: usize,
        c1: f64,
        c2: f64,
        beta1: f64,
        lambda: f64,
        h1: f64,
        /// Uniform-exploration weight (0 when the algorithm mixes nothing in).
        gamma: f64,
        env: EnvSpec,
    },
    PartialMonitoring {
        /// Fixture name or game-file path, for humans; the structure fields
        /// below are what certification actually uses.
        game: String,
        actions: usize,
        outcomes: usize,
        pareto_actions: usize,
        class: String,
        /// Largest in-use estimator magnitude scale `m` (1 for the exact
        /// classes).
        neighborhood_scale: usize,
        /// Class coefficient `B` entering the rate floor.
        b_coeff: f64,
        /// Per-round estimation-cost ceiling for the class.
        vbar: f64,
        c1: f64,
        c2: f64,
        beta1: f64,
        lambda: f64,
        h1: f64,
        env: PmEnvSpec,
    },
}

impl RunDescriptor {
    pub fn c1(&self) -> f64 {
        match self {
            RunDescriptor::Mab { c1, .. } | RunDescriptor::PartialMonitoring { c1, .. } => *c1,
        }
    }

    pub fn c2(&self) -> f64 {
        match self {
            RunDescriptor::Mab { c2, .. } | RunDescriptor::PartialMonitoring { c2, .. } => *c2,
        }
    }

    pub fn lambda(&self) -> f64 {
        match self {
            RunDescriptor::Mab { lambda, .. }
            | RunDescriptor::PartialMonitoring { lambda, .. } => *lambda,
        }
    }

    pub fn h1(&self) -> f64 {
        match self {
            RunDescriptor::Mab { h1, .. } | RunDescriptor::PartialMonitoring { h1, .. } => *h1,
        }
    }

    pub fn beta1(&self) -> f64 {
        match self {
            RunDescriptor::Mab { beta1, .. }
            | RunDescriptor::PartialMonitoring { beta1, .. } => *beta1,
        }
    }

    /// Number of base actions (arms, or monitoring actions).
    pub fn actions(&self) -> usize {
        match self {
            RunDescriptor::Mab { k, .. } => *k,
            RunDescriptor::PartialMonitoring { actions, .. } => *actions,
        }
    }

    /// `zbar_T * h_1`, reconstructed from the last trace row. The rule is
    /// algorithm-specific because each agent feeds the rate update a
    /// different per-round ceiling.
    pub fn zbar_h1_term(&self, last: &TraceRow) -> f64 {
        match self {
            RunDescriptor::Mab { algo, k, gamma, h1, .. } => match algo {
                // Constant ceiling k/gamma.
                AlgoKind::SparseExp3 => (*k as f64 / *gamma) * *h1,
                // The ceiling is the round's own stability value.
                AlgoKind::SparseLogBarrier => last.z * *h1,
                // zbar_t = z_t h_{t+1} / h_1, so the product collapses.
                AlgoKind::SparseBobw => last.z * last.h,
            },
            RunDescriptor::PartialMonitoring { vbar, h1, .. } => vbar.max(last.z) * *h1,
        }
    }
}

/// JSON sidecar written next to every trace CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSidecar {
    pub trace_format_version: u32,
    pub experiment: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub episode: u64,
    pub horizon: usize,
    pub run: RunDescriptor,
    pub totals: TraceTotals,
}

impl TraceSidecar {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Trace(format!("sidecar serialization: {e}")))?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<TraceSidecar> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Trace(format!("{}: {e}", path.display())))?;
        let sidecar: TraceSidecar = serde_json::from_str(&text)
            .map_err(|e| Error::Trace(format!("{}: {e}", path.display())))?;
        if sidecar.trace_format_version != TRACE_FORMAT_VERSION {
            return Err(Error::Trace(format!(
                "{}: trace format version mismatch: file has {}, this build reads {}",
                path.display(),
                sidecar.trace_format_version,
                TRACE_FORMAT_VERSION
            )));
        }
        Ok(sidecar)
    }
}

/// File-name stem shared by an episode's CSV and sidecar.
pub fn episode_stem(name: &str, horizon: usize, episode: u64) -> String {
    format!("{name}-T{horizon}-ep{episode:04}")
}
