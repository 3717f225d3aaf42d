//! Command-line batch runner for the retrieval, answering, procedure
//! extraction and evaluation pipelines.

pub mod batch;
pub mod services;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use medqa::bioasq::{load_gold, load_questions, parse_submission, load_submission};
use medqa::config::RunConfig;
use medqa::medproc::parse_mentions_tsv;
use medqa::metrics::{
    evaluate, evaluate_medproc, render_metric_table, render_variance_table, variance_report,
    DEFAULT_GMAP_EPSILON,
};
use serde_json::json;

use crate::batch::{BatchOutput, EL_FILE, SUBMISSION_FILE};
use crate::services::Services;

#[derive(Debug, Parser)]
#[command(name = "medqa", version, about = "Biomedical QA and procedure extraction batch runner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Questions JSON, or a directory of `.txt` reports for run-medprocner.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub output: PathBuf,
    /// Configuration override, `dotted.key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Pipeline {
    PhaseA,
    PhaseB,
    Medprocner,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Retrieve and rank documents for every question.
    RunPhaseA(RunArgs),
    /// Produce exact and ideal answers for every question.
    RunPhaseB(RunArgs),
    /// Extract, link and index procedures in clinical reports.
    RunMedprocner(RunArgs),
    /// Score a submission (or an EL/NER TSV) against gold.
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Read the GMAP floor from this configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, value_enum, default_value = "phase-a")]
        pipeline: Pipeline,
    },
    /// Run a pipeline several times without the response cache and report
    /// metric spread across runs.
    Repeat {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        pipeline: Pipeline,
        #[arg(long, value_parser = clap::value_parser!(u32).range(2..))]
        times: u32,
        #[arg(long)]
        gold: PathBuf,
    },
}

/// What a successful command reports back to the caller.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Outcome {
    /// Items that failed without aborting the batch.
    pub warnings: usize,
}

fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    RunConfig::load(path, overrides).with_context(|| format!("invalid configuration {}", path.display()))
}

pub fn run_pipeline(pipeline: Pipeline, services: &Services, input: &Path) -> Result<BatchOutput> {
    match pipeline {
        Pipeline::PhaseA => batch::run_phase_a(services, &load_questions(input)?),
        Pipeline::PhaseB => batch::run_phase_b(services, &load_questions(input)?),
        Pipeline::Medprocner => batch::run_medprocner(services, &batch::load_documents(input)?),
    }
}

fn run_once(pipeline: Pipeline, args: &RunArgs) -> Result<Outcome> {
    let config = load_config(&args.config, &args.overrides)?;
    let services = Services::new(config, pipeline == Pipeline::PhaseA, true)?;
    let output = run_pipeline(pipeline, &services, &args.input)?;
    output.write_to(&args.output)?;
    Ok(Outcome {
        warnings: output.failures.len(),
    })
}

/// Scores one batch output against gold.
fn score(
    pipeline: Pipeline,
    output: &BatchOutput,
    gold: &Path,
    epsilon: f64,
) -> Result<BTreeMap<String, f64>> {
    match pipeline {
        Pipeline::PhaseA | Pipeline::PhaseB => {
            let submission = parse_submission(output.file(SUBMISSION_FILE))?;
            Ok(evaluate(&submission, &load_gold(gold)?, epsilon)?.metrics())
        }
        Pipeline::Medprocner => {
            let gold_text = std::fs::read_to_string(gold)
                .with_context(|| format!("cannot read {}", gold.display()))?;
            let pred = parse_mentions_tsv(output.file(EL_FILE))?;
            Ok(evaluate_medproc(&parse_mentions_tsv(&gold_text)?, &pred).metrics())
        }
    }
}

fn write_report(dir: &Path, stem: &str, json_value: &serde_json::Value, table: &str) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    std::fs::write(
        dir.join(format!("{stem}.json")),
        format!("{}\n", serde_json::to_string_pretty(json_value)?),
    )?;
    std::fs::write(dir.join(format!("{stem}.txt")), table)?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::RunPhaseA(args) => run_once(Pipeline::PhaseA, &args),
        Command::RunPhaseB(args) => run_once(Pipeline::PhaseB, &args),
        Command::RunMedprocner(args) => run_once(Pipeline::Medprocner, &args),
        Command::Evaluate {
            input,
            gold,
            output,
            config,
            overrides,
            pipeline,
        } => {
            let epsilon = match &config {
                Some(path) => load_config(path, &overrides)?.gmap_epsilon,
                None => DEFAULT_GMAP_EPSILON,
            };
            let report = match pipeline {
                Pipeline::PhaseA | Pipeline::PhaseB => {
                    let report = evaluate(&load_submission(&input)?, &load_gold(&gold)?, epsilon)?;
                    json!({"metrics": report.metrics(), "details": report})
                }
                Pipeline::Medprocner => {
                    let read = |p: &Path| {
                        std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))
                    };
                    let eval = evaluate_medproc(
                        &parse_mentions_tsv(&read(&gold)?)?,
                        &parse_mentions_tsv(&read(&input)?)?,
                    );
                    json!({"metrics": eval.metrics(), "details": eval})
                }
            };
            let metrics: BTreeMap<String, f64> = serde_json::from_value(report["metrics"].clone())?;
            let table = render_metric_table(&metrics);
            write_report(&output, "report", &report, &table)?;
            print!("{table}");
            Ok(Outcome::default())
        }
        Command::Repeat {
            run,
            pipeline,
            times,
            gold,
        } => {
            let config = load_config(&run.config, &run.overrides)?;
            let epsilon = config.gmap_epsilon;
            let services = Services::new(config, pipeline == Pipeline::PhaseA, false)?;
            let mut runs = Vec::new();
            let mut warnings = 0;
            for k in 1..=times {
                let output = run_pipeline(pipeline, &services, &run.input)?;
                output.write_to(&run.output.join(format!("run-{k}")))?;
                warnings += output.failures.len();
                runs.push(score(pipeline, &output, &gold, epsilon)?);
            }
            let stats = variance_report(&runs)?;
            let table = render_variance_table(&stats);
            write_report(&run.output, "variance", &json!({"runs": runs, "stats": stats}), &table)?;
            print!("{table}");
            Ok(Outcome { warnings })
        }
    }
}
