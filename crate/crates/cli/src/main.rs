// SPDX-License-Identifier: MIT OR Apache-2.0

//! `trace`: run, ablate, and evaluate the trajectory correction engine.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use trace_core::archive::{read_jsonl, read_trajectory_archive, write_jsonl};
use trace_core::config::{AblationVariant, HyperParameters};
use trace_core::engine::{run_batch, EngineConfig, Regime, Verdict};
use trace_core::evaluation::{
    aggregate_grid, bootstrap_ci, grid_csv, score_cells, sign_test, structured, summarize_cells,
    trajectory_svg, usage_report, write_report, CellResult,
};
use trace_core::fixture::{load_master_fixture, master_fixture, FixtureCell};
use trace_core::invariant::{branch_for, resolve_invariant};
use trace_core::model::ModelWeightStats;
use trace_core::operators::decisive_layer;
use trace_core::scorer::ScorerDepths;
use trace_core::TraceError;

#[derive(Debug, Parser)]
#[command(name = "trace", version, about = "Cross-layer trajectory correction for multiple-choice scoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute the weights-only invariant of a model.
    Invariant(InvariantArgs),
    /// Route every archive item and write one verdict per line.
    Run(RunArgs),
    /// Score a verdict stream under MC1/MC2.
    Eval(EvalArgs),
    /// Run with an ablation variant.
    Ablate(AblateArgs),
    /// Summarize a model-by-benchmark grid.
    Stats(StatsArgs),
    /// Bootstrap intervals for the mean grid deltas.
    Bootstrap(BootstrapArgs),
    /// Draw one item's per-depth candidate probabilities as SVG.
    Plot(PlotArgs),
    /// Check an archive (and optionally model statistics) without running.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// Hyperparameter file; the published defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> anyhow::Result<HyperParameters> {
        Ok(match &self.config {
            Some(p) => HyperParameters::load(p)?,
            None => HyperParameters::default(),
        })
    }
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct ModelSource {
    /// Model weight statistics (JSON).
    #[arg(long)]
    model_stats: Option<PathBuf>,
    /// Invariant value supplied directly.
    #[arg(long)]
    i_m: Option<f64>,
}

#[derive(Debug, Args)]
struct InvariantArgs {
    #[arg(long)]
    model_stats: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    archive: PathBuf,
    #[command(flatten)]
    model: ModelSource,
    #[command(flatten)]
    config: ConfigArg,
    /// Verdict stream (JSON lines).
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; output does not depend on this.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[arg(long)]
    variant: AblationVariant,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    archive: PathBuf,
    #[arg(long)]
    verdicts: PathBuf,
    #[arg(long, default_value = "model")]
    model_id: String,
    #[command(flatten)]
    config: ConfigArg,
    /// Per-cell CSV report.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Structured summary; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Grid CSV in the fixture schema; the shipped grid when omitted.
    #[arg(long)]
    fixture: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BootstrapArgs {
    #[arg(long)]
    fixture: Option<PathBuf>,
    #[arg(long, default_value_t = trace_core::evaluation::stats::DEFAULT_RESAMPLES)]
    resamples: usize,
    #[arg(long, default_value_t = trace_core::evaluation::stats::DEFAULT_LEVEL)]
    level: f64,
    #[arg(long, default_value_t = trace_core::evaluation::stats::DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlotArgs {
    #[arg(long)]
    archive: PathBuf,
    #[arg(long)]
    item: String,
    /// Depth to mark; the decisive layer when omitted.
    #[arg(long)]
    marker: Option<usize>,
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    archive: Option<PathBuf>,
    #[arg(long)]
    model_stats: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArg,
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> anyhow::Result<()> {
    let text = structured(value)?;
    match out {
        Some(p) => write_report(&text, p)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn engine_config(model: &ModelSource, hp: HyperParameters) -> anyhow::Result<(EngineConfig, Option<String>)> {
    match (&model.model_stats, model.i_m) {
        (Some(path), None) => {
            let stats = ModelWeightStats::load(path)?;
            let report = resolve_invariant(&stats, &hp)?;
            Ok((EngineConfig::new(hp, report.i_m), Some(stats.model_id)))
        }
        (None, Some(i_m)) => {
            if !i_m.is_finite() || i_m <= 0.0 {
                return Err(TraceError::Config(format!("--i-m must be positive and finite, got {i_m}")).into());
            }
            Ok((EngineConfig::new(hp, i_m), None))
        }
        _ => unreachable!("clap enforces exactly one model source"),
    }
}

fn run(args: &RunArgs, variant: Option<AblationVariant>) -> anyhow::Result<()> {
    let mut hp = args.config.load()?;
    if let Some(v) = variant {
        hp = hp.with_variant(v);
    }
    let (cfg, model_id) = engine_config(&args.model, hp)?;
    let items = read_trajectory_archive(&args.archive)?;
    let verdicts = run_batch(&items, &cfg, args.jobs.max(1))?;
    write_jsonl(&verdicts, &args.out)?;

    let mut regimes: BTreeMap<Regime, usize> = BTreeMap::new();
    for v in &verdicts {
        *regimes.entry(v.regime).or_default() += 1;
    }
    emit(
        &json!({
            "model_id": model_id,
            "items": verdicts.len(),
            "i_m": cfg.i_m,
            "branch": branch_for(cfg.i_m, cfg.hp.tau_i),
            "variant": cfg.variant,
            "regimes": regimes,
            "out": args.out,
        }),
        None,
    )
}

fn eval(args: &EvalArgs) -> anyhow::Result<()> {
    let hp = args.config.load()?;
    let items = read_trajectory_archive(&args.archive)?;
    let verdicts: Vec<Verdict> = read_jsonl(&args.verdicts)?;
    let cells = score_cells(&args.model_id, &items, &verdicts)?;
    let summary = summarize_cells(&cells)?;
    let benches: Vec<&str> = items.iter().map(|i| i.trajectory.benchmark_id.as_str()).collect();
    let usage = usage_report(&benches, &verdicts, hp.tau_dim)?;
    if let Some(path) = &args.csv {
        write_report(&grid_csv(&cells)?, path)?;
    }
    emit(&json!({ "cells": cells, "summary": summary, "usage": usage }), args.out.as_deref())
}

fn fixture_cells(path: Option<&Path>) -> anyhow::Result<Vec<FixtureCell>> {
    Ok(match path {
        Some(p) => load_master_fixture(p)?,
        None => master_fixture(),
    })
}

fn deltas(cells: &[FixtureCell]) -> (Vec<f64>, Vec<f64>) {
    cells.iter().map(|c| (c.mc1_delta, c.mc2_delta)).unzip()
}

fn stats(args: &StatsArgs) -> anyhow::Result<()> {
    let fixture = fixture_cells(args.fixture.as_deref())?;
    let cells: Vec<CellResult> = fixture.iter().map(CellResult::from).collect();
    let summary = aggregate_grid(&cells)?;
    let (d1, d2) = deltas(&fixture);
    if let Some(path) = &args.csv {
        write_report(&grid_csv(&cells)?, path)?;
    }
    emit(
        &json!({
            "summary": summary,
            "sign_test": { "mc1": sign_test(&d1)?, "mc2": sign_test(&d2)? },
        }),
        args.out.as_deref(),
    )
}

fn bootstrap(args: &BootstrapArgs) -> anyhow::Result<()> {
    let fixture = fixture_cells(args.fixture.as_deref())?;
    let (d1, d2) = deltas(&fixture);
    let mc1 = bootstrap_ci(&d1, args.resamples, args.level, args.seed)?;
    let mc2 = bootstrap_ci(&d2, args.resamples, args.level, args.seed)?;
    emit(
        &json!({
            "resamples": args.resamples,
            "level": args.level,
            "seed": args.seed,
            "mc1": mc1,
            "mc2": mc2,
        }),
        args.out.as_deref(),
    )
}

fn plot(args: &PlotArgs) -> anyhow::Result<()> {
    let hp = args.config.load()?;
    let items = read_trajectory_archive(&args.archive)?;
    let item = items
        .iter()
        .find(|i| i.item_id() == args.item)
        .ok_or_else(|| anyhow!("item `{}` not found in {}", args.item, args.archive.display()))?;
    let marker = match args.marker {
        Some(m) => m,
        None => decisive_layer(&item.trajectory, hp.eps_h)?.layer,
    };
    write_report(&trajectory_svg(&item.trajectory, marker)?, &args.out)?;
    Ok(())
}

fn validate(args: &ValidateArgs) -> anyhow::Result<()> {
    if args.archive.is_none() && args.model_stats.is_none() {
        return Err(TraceError::Config("validate needs --archive and/or --model-stats".into()).into());
    }
    let hp = args.config.load()?;
    let mut report = serde_json::Map::new();
    if let Some(path) = &args.archive {
        let items = read_trajectory_archive(path)?;
        let mut with_logits = 0;
        for item in &items {
            if !item.has_logits() {
                continue;
            }
            with_logits += 1;
            let required = ScorerDepths::new(&hp.scorer, item.trajectory.depth)?.required();
            for rec in &item.logits {
                if let Some(d) = required.iter().find(|&&d| rec.at_depth(d).is_none()) {
                    bail!(TraceError::Validation {
                        item_id: item.item_id().to_owned(),
                        field: "position_depth_logits".into(),
                        message: format!(
                            "candidate {}, position {}: scorer depth {d} missing",
                            rec.candidate_index, rec.position
                        ),
                    });
                }
            }
        }
        report.insert("items".into(), json!(items.len()));
        report.insert("items_with_logits".into(), json!(with_logits));
    }
    if let Some(path) = &args.model_stats {
        let stats = ModelWeightStats::load(path)?;
        report.insert("invariant".into(), serde_json::to_value(resolve_invariant(&stats, &hp)?)?);
    }
    report.insert("valid".into(), json!(true));
    emit(&report, None)
}

fn invariant(args: &InvariantArgs) -> anyhow::Result<()> {
    let hp = args.config.load()?;
    let stats = ModelWeightStats::load(&args.model_stats)
        .with_context(|| format!("reading {}", args.model_stats.display()))?;
    let report = resolve_invariant(&stats, &hp)?;
    emit(&json!({ "model_id": stats.model_id, "invariant": report }), args.out.as_deref())
}

fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Invariant(a) => invariant(a),
        Command::Run(a) => run(a, None),
        Command::Ablate(a) => run(&a.run, Some(a.variant)),
        Command::Eval(a) => eval(a),
        Command::Stats(a) => stats(a),
        Command::Bootstrap(a) => bootstrap(a),
        Command::Plot(a) => plot(a),
        Command::Validate(a) => validate(a),
    }
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_USAGE: u8 = 2;

fn report_error(kind: &str, message: &str, item_id: Option<&str>) {
    let mut body = json!({ "kind": kind, "message": message });
    if let Some(id) = item_id {
        body["item_id"] = json!(id);
    }
    eprintln!("{}", json!({ "error": body }));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            report_error("usage", e.render().to_string().trim(), None);
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let message = format!("{err:#}");
            match err.downcast_ref::<TraceError>() {
                Some(e @ TraceError::Config(_)) => {
                    report_error(e.kind(), &message, None);
                    ExitCode::from(EXIT_USAGE)
                }
                Some(e) => {
                    report_error(e.kind(), &message, e.item_id());
                    ExitCode::from(EXIT_VALIDATION)
                }
                None => {
                    report_error("error", &message, None);
                    ExitCode::from(EXIT_VALIDATION)
                }
            }
        }
    }
}
