//! Finite partial-monitoring games and their on-disk format.
//!
//! A game is a pair of `k x d` matrices over `k` actions and `d` outcomes:
//! a loss matrix with entries in `[0, 1]`, and a feedback matrix of symbols.
//! When the learner plays action `a` and the environment picks outcome `x`,
//! the learner pays `loss[a][x]` but observes only `feedback[a][x]`.
//!
//! The text format is line-based; `#` starts a comment. Example:
//!
//! ```text
//! # matching pennies with full feedback
//! actions 2
//! outcomes 2
//! loss
//! 0 1
//! 1 0
//! feedback
//! heads tails
//! heads tails
//! ```
//!
//! Symbols are arbitrary whitespace-free tokens and are scoped per row:
//! the same token on two different actions carries no relation.

use crate::error::{Error, Result};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct Game {
    k: usize,
    d: usize,
    loss: Vec<Vec<f64>>,
    /// Per-row local symbol ids: `feedback[a][x] < symbols_in_row(a)`.
    feedback: Vec<Vec<usize>>,
    row_symbols: Vec<Vec<String>>,
}

impl Game {
    /// Build and validate a game from a loss matrix and per-entry feedback
    /// tokens. Two actions with identical loss rows are rejected: they are
    /// the same action for regret purposes and break cell geometry.
    pub fn new(loss: Vec<Vec<f64>>, feedback_tokens: Vec<Vec<String>>) -> Result<Game> {
        let k = loss.len();
        if k < 2 {
            return Err(Error::InvalidGame(format!(
                "need at least 2 actions, got {k}"
            )));
        }
        let d = loss[0].len();
        if d < 2 {
            return Err(Error::InvalidGame(format!(
                "need at least 2 outcomes, got {d}"
            )));
        }
        for (a, row) in loss.iter().enumerate() {
            if row.len() != d {
                return Err(Error::InvalidGame(format!(
                    "loss row {a} has {} entries, expected {d}",
                    row.len()
                )));
            }
            for (x, &v) in row.iter().enumerate() {
                if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidGame(format!(
                        "loss[{a}][{x}] = {v} outside [0, 1]"
                    )));
                }
            }
        }
        if feedback_tokens.len() != k {
            return Err(Error::InvalidGame(format!(
                "feedback has {} rows, expected {k}",
                feedback_tokens.len()
            )));
        }
        for (a, row) in feedback_tokens.iter().enumerate() {
            if row.len() != d {
                return Err(Error::InvalidGame(format!(
                    "feedback row {a} has {} entries, expected {d}",
                    row.len()
                )));
            }
        }
        for a in 0..k {
            for b in (a + 1)..k {
                if loss[a] == loss[b] {
                    return Err(Error::DuplicateActions {
                        first: a,
                        second: b,
                    });
                }
            }
        }
        // Map tokens to per-row local ids in order of first appearance.
        let mut feedback = Vec::with_capacity(k);
        let mut row_symbols = Vec::with_capacity(k);
        for row in &feedback_tokens {
            let mut syms: Vec<String> = Vec::new();
            let mut ids = Vec::with_capacity(d);
            for tok in row {
                if tok.is_empty() {
                    return Err(Error::InvalidGame("empty feedback symbol".into()));
                }
                let id = match syms.iter().position(|s| s == tok) {
                    Some(i) => i,
                    None => {
                        syms.push(tok.clone());
                        syms.len() - 1
                    }
                };
                ids.push(id);
            }
            feedback.push(ids);
            row_symbols.push(syms);
        }
        Ok(Game {
            k,
            d,
            loss,
            feedback,
            row_symbols,
        })
    }

    /// Parse the line-based text format described in the module docs.
    pub fn parse(text: &str) -> Result<Game> {
        let mut lines = text
            .lines()
            .map(|l| match l.find('#') {
                Some(i) => &l[..i],
                None => l,
            })
            .map(str::trim)
            .filter(|l| !l.is_empty());
        let mut expect_kv = |key: &str| -> Result<usize> {
            let line = lines
                .next()
                .ok_or_else(|| Error::InvalidGame(format!("missing '{key} <count>' line")))?;
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some(k2), Some(v), None) if k2 == key => v.parse::<usize>().map_err(|e| {
                    Error::InvalidGame(format!("bad count in '{line}': {e}"))
                }),
                _ => Err(Error::InvalidGame(format!(
                    "expected '{key} <count>', found '{line}'"
                ))),
            }
        };
        let k = expect_kv("actions")?;
        let d = expect_kv("outcomes")?;
        let expect_header = |line: Option<&str>, want: &str| -> Result<()> {
            match line {
                Some(l) if l == want => Ok(()),
                other => Err(Error::InvalidGame(format!(
                    "expected '{want}' section, found {other:?}"
                ))),
            }
        };
        expect_header(lines.next(), "loss")?;
        let mut loss = Vec::with_capacity(k);
        for a in 0..k {
            let line = lines
                .next()
                .ok_or_else(|| Error::InvalidGame(format!("missing loss row {a}")))?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|e| Error::InvalidGame(format!("bad loss '{t}': {e}")))
                })
                .collect::<Result<_>>()?;
            if row.len() != d {
                return Err(Error::InvalidGame(format!(
                    "loss row {a} has {} entries, expected {d}",
                    row.len()
                )));
            }
            loss.push(row);
        }
        expect_header(lines.next(), "feedback")?;
        let mut feedback = Vec::with_capacity(k);
        for a in 0..k {
            let line = lines
                .next()
                .ok_or_else(|| Error::InvalidGame(format!("missing feedback row {a}")))?;
            let row: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
            if row.len() != d {
                return Err(Error::InvalidGame(format!(
                    "feedback row {a} has {} entries, expected {d}",
                    row.len()
                )));
            }
            feedback.push(row);
        }
        if let Some(extra) = lines.next() {
            return Err(Error::InvalidGame(format!(
                "unexpected trailing content: '{extra}'"
            )));
        }
        Game::new(loss, feedback)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Game> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Game::parse(&text)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn loss(&self) -> &[Vec<f64>] {
        &self.loss
    }

    pub fn loss_at(&self, a: usize, x: usize) -> f64 {
        self.loss[a][x]
    }

    /// Local symbol id observed when playing `a` under outcome `x`.
    pub fn feedback_at(&self, a: usize, x: usize) -> usize {
        self.feedback[a][x]
    }

    pub fn symbols_in_row(&self, a: usize) -> usize {
        self.row_symbols[a].len()
    }

    pub fn symbol_name(&self, a: usize, id: usize) -> &str {
        &self.row_symbols[a][id]
    }

    /// Largest per-row alphabet size (the `m` in the value bounds).
    pub fn max_symbols(&self) -> usize {
        self.row_symbols.iter().map(Vec::len).max().unwrap_or(0)
    }
}
