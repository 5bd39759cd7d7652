//! Experiment execution and trace-directory certification.
//!
//! `run_experiment` walks the horizon grid, runs every episode (the episode
//! is the unit of parallelism; results are joined in episode order, so the
//! report does not depend on the degree of parallelism), writes one trace
//! CSV + sidecar per episode, and evaluates the enabled certificate
//! families on the in-memory results.
//!
//! `certify_dir` re-derives the same report from the files alone: it
//! re-parses every CSV, rebuilds the budget sums from the columns, and
//! re-evaluates every family. Running `certify` on the output of a clean
//! `run` passes exactly when the run passed; edited traces (say, a
//! lowered rate entry) fail with a message naming the episode and round.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::bench::certificates::{evaluate_families, evidence_from_rows, EpisodeEvidence};
use crate::bench::config::{ExperimentConfig, PreparedExperiment, PreparedKind};
use crate::bench::report::{HorizonReport, SummaryReport};
use crate::bench::trace::{
    episode_stem, read_trace_csv, write_trace_csv, RunDescriptor, TraceSidecar,
    TRACE_FORMAT_VERSION,
};
use crate::error::{Error, Result};
use crate::mab::{run_episode, Agent, AgentConfig, CheckLevel};
use crate::pm::{run_pm_episode, AnalyzedGame, PmAgent, PmEnvSpec};

/// Knobs the CLI exposes on top of the config file.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Where traces and the summary land.
    pub out_dir: PathBuf,
    /// Worker threads; 0 keeps rayon's default, 1 forces serial execution.
    pub parallel: usize,
    /// Replaces the config's episode set with `0..n`.
    pub episodes_override: Option<u64>,
}

fn mab_descriptor(
    section: &crate::bench::config::MabSection,
    checks: CheckLevel,
    horizon: usize,
    master_seed: u64,
) -> Result<(AgentConfig, RunDescriptor)> {
    let agent_cfg = AgentConfig {
        algo: section.algo,
        k: section.k,
        horizon,
        c1_override: ExperimentConfig::c1_override_for(section, horizon),
        seed: master_seed,
    };
    // A probe agent surfaces the derived constants; they are episode-free.
    let probe = Agent::new(&agent_cfg, checks)?;
    let sc = probe.spa_config();
    let descriptor = RunDescriptor::Mab {
        algo: section.algo,
        k: section.k,
        c1: sc.c1,
        c2: sc.c2,
        beta1: sc.beta1,
        lambda: sc.lambda,
        h1: probe.h1(),
        gamma: probe.gamma(),
        env: section.env.clone(),
    };
    Ok((agent_cfg, descriptor))
}

fn pm_descriptor(
    analyzed: &AnalyzedGame,
    env: &PmEnvSpec,
    label: &str,
    horizon: usize,
    master_seed: u64,
) -> Result<RunDescriptor> {
    let probe = PmAgent::new(analyzed, horizon, master_seed, 0)?;
    let sc = probe.spa_config();
    Ok(RunDescriptor::PartialMonitoring {
        game: label.to_string(),
        actions: analyzed.game.k(),
        outcomes: analyzed.game.d(),
        pareto_actions: analyzed.pareto.len(),
        class: analyzed.class.to_string(),
        neighborhood_scale: analyzed.m,
        b_coeff: analyzed.beta1_coeff(),
        vbar: analyzed.vbar(),
        c1: sc.c1,
        c2: sc.c2,
        beta1: sc.beta1,
        lambda: sc.lambda,
        h1: probe.h1(),
        env: env.clone(),
    })
}

/// Run the closure over every episode with the requested parallelism; the
/// result vector is always in episode-list order.
fn execute<F>(episodes: &[u64], parallel: usize, run_one: F) -> Result<Vec<EpisodeEvidence>>
where
    F: Fn(u64) -> Result<EpisodeEvidence> + Sync,
{
    match parallel {
        1 => episodes.iter().map(|&e| run_one(e)).collect(),
        0 => episodes.par_iter().map(|&e| run_one(e)).collect(),
        n => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Domain(format!("worker pool: {e}")))?
            .install(|| episodes.par_iter().map(|&e| run_one(e)).collect()),
    }
}

fn aggregate(
    run: &RunDescriptor,
    horizon: usize,
    evidence: &[EpisodeEvidence],
    toggles: Option<&[String]>,
    wall: Duration,
) -> HorizonReport {
    let n = evidence.len() as f64;
    let regrets: Vec<f64> = evidence.iter().map(|e| e.totals.regret_final).collect();
    let (mean_regret, stderr_regret) = SummaryReport::mean_and_stderr(&regrets);
    let mean_l2 = evidence.iter().map(|e| e.totals.l2_realized).sum::<f64>() / n;
    let mean_sum_value = match run {
        RunDescriptor::PartialMonitoring { .. } => {
            Some(evidence.iter().map(|e| e.sum_z).sum::<f64>() / n)
        }
        RunDescriptor::Mab { .. } => None,
    };
    let certificates = evaluate_families(run, horizon, evidence, toggles);
    let pass = certificates.iter().all(|c| c.pass);
    HorizonReport {
        horizon,
        episodes: evidence.len(),
        mean_regret,
        stderr_regret,
        mean_l2,
        mean_sum_value,
        certificates,
        pass,
        wall_ms: wall.as_millis() as u64,
    }
}

fn write_summary(out_dir: &Path, report: &SummaryReport) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Trace(format!("summary serialization: {e}")))?;
    text.push('\n');
    fs::write(out_dir.join(format!("{}-summary.json", report.name)), text)?;
    Ok(())
}

/// Execute a validated config end to end. Traces and the summary report
/// are written under `opts.out_dir`; relative `game-file` paths resolve
/// against `base`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    base: &Path,
    opts: &RunOptions,
) -> Result<SummaryReport> {
    let PreparedExperiment { mut episodes, kind } = cfg.prepare(base)?;
    if let Some(n) = opts.episodes_override {
        if n == 0 {
            return Err(Error::config("episodes", "need at least one episode"));
        }
        episodes = (0..n).collect();
    }
    fs::create_dir_all(&opts.out_dir)?;
    let hash = cfg.config_hash();
    let toggles = cfg.certificates.as_deref();

    let mut horizons = Vec::with_capacity(cfg.t_grid.len());
    for &t in &cfg.t_grid {
        let start = Instant::now();
        let (agent_cfg, descriptor) = match &kind {
            PreparedKind::Mab { section, checks } => {
                let (agent_cfg, d) = mab_descriptor(section, *checks, t, cfg.master_seed)?;
                (Some(agent_cfg), d)
            }
            PreparedKind::PartialMonitoring {
                analyzed,
                env,
                label,
            } => (None, pm_descriptor(analyzed, env, label, t, cfg.master_seed)?),
        };

        let run_one = |ep: u64| -> Result<EpisodeEvidence> {
            let trace = match &kind {
                PreparedKind::Mab { section, checks } => {
                    let agent_cfg = agent_cfg.as_ref().expect("set for bandit runs");
                    run_episode(agent_cfg, &section.env, ep, *checks)?.trace
                }
                PreparedKind::PartialMonitoring { analyzed, env, .. } => {
                    run_pm_episode(analyzed, env, t, cfg.master_seed, ep)?.trace
                }
            };
            let stem = episode_stem(&cfg.name, t, ep);
            write_trace_csv(&opts.out_dir.join(format!("{stem}.csv")), &trace.rows)?;
            TraceSidecar {
                trace_format_version: TRACE_FORMAT_VERSION,
                experiment: cfg.name.clone(),
                config_hash: hash.clone(),
                master_seed: cfg.master_seed,
                episode: ep,
                horizon: t,
                run: descriptor.clone(),
                totals: trace.totals.clone(),
            }
            .write(&opts.out_dir.join(format!("{stem}.json")))?;
            evidence_from_rows(&descriptor, ep, &trace.rows, &trace.totals)
        };

        let evidence = execute(&episodes, opts.parallel, run_one)?;
        horizons.push(aggregate(&descriptor, t, &evidence, toggles, start.elapsed()));
    }

    let report = SummaryReport {
        name: cfg.name.clone(),
        kind: match &kind {
            PreparedKind::Mab { .. } => "mab".into(),
            PreparedKind::PartialMonitoring { .. } => "partial-monitoring".into(),
        },
        config_hash: hash,
        trace_format_version: TRACE_FORMAT_VERSION,
        overall_pass: horizons.iter().all(|h| h.pass),
        horizons,
    };
    write_summary(&opts.out_dir, &report)?;
    Ok(report)
}

/// Re-derive a summary report from a directory of trace files. Every
/// certificate family is recomputed from the CSV columns; nothing is
/// trusted from the sidecars beyond the run constants and the totals the
/// columns are checked against.
pub fn certify_dir(dir: &Path) -> Result<SummaryReport> {
    let mut csvs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::Trace(format!("{}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    csvs.sort();
    if csvs.is_empty() {
        return Err(Error::Trace(format!(
            "no trace files (*.csv) found in '{}'",
            dir.display()
        )));
    }

    let mut provenance: BTreeSet<(String, String)> = BTreeSet::new();
    let mut by_horizon: BTreeMap<usize, Vec<(TraceSidecar, Vec<crate::env::TraceRow>)>> =
        BTreeMap::new();
    for csv in &csvs {
        let sidecar_path = csv.with_extension("json");
        if !sidecar_path.exists() {
            return Err(Error::Trace(format!(
                "missing sidecar '{}'",
                sidecar_path.display()
            )));
        }
        let sidecar = TraceSidecar::read(&sidecar_path)?;
        let rows = read_trace_csv(csv)?;
        provenance.insert((sidecar.experiment.clone(), sidecar.config_hash.clone()));
        by_horizon.entry(sidecar.horizon).or_default().push((sidecar, rows));
    }
    if provenance.len() > 1 {
        let names: Vec<String> = provenance
            .iter()
            .map(|(n, h)| format!("{n} ({})", &h[..h.len().min(12)]))
            .collect();
        return Err(Error::Trace(format!(
            "trace directory mixes experiments: {}",
            names.join(", ")
        )));
    }
    let (name, hash) = provenance.into_iter().next().expect("nonempty");

    let mut kind = String::new();
    let mut horizons = Vec::with_capacity(by_horizon.len());
    for (t, mut group) in by_horizon {
        let start = Instant::now();
        group.sort_by_key(|(sc, _)| sc.episode);
        let run = group[0].0.run.clone();
        kind = match &run {
            RunDescriptor::Mab { .. } => "mab".into(),
            RunDescriptor::PartialMonitoring { .. } => "partial-monitoring".into(),
        };
        let mut seen = BTreeSet::new();
        let mut evidence = Vec::with_capacity(group.len());
        for (sidecar, rows) in &group {
            if sidecar.run != run {
                return Err(Error::Trace(format!(
                    "episode {} at T = {t} was produced by different run constants",
                    sidecar.episode
                )));
            }
            if !seen.insert(sidecar.episode) {
                return Err(Error::Trace(format!(
                    "episode {} at T = {t} appears more than once",
                    sidecar.episode
                )));
            }
            evidence.push(evidence_from_rows(&run, sidecar.episode, rows, &sidecar.totals)?);
        }
        horizons.push(aggregate(&run, t, &evidence, None, start.elapsed()));
    }

    Ok(SummaryReport {
        name,
        kind,
        config_hash: hash,
        trace_format_version: TRACE_FORMAT_VERSION,
        overall_pass: horizons.iter().all(|h| h.pass),
        horizons,
    })
}
