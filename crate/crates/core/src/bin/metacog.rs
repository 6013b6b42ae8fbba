use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use metacog_eval::analysis::{CalibrationMode, ErrorAnnotation};
use metacog_eval::backend::BackendConfig;
use metacog_eval::catalog::{builtin_catalog, MetricId};
use metacog_eval::run::{
    self, ReportMode, ReportOptions, RunConfig, RunManifest, RunOptions, RunOutcome,
};
use metacog_eval::scoring::ParseFailureMode;
use metacog_eval::StrategyId;

#[derive(Parser)]
#[command(
    name = "metacog",
    version,
    about = "Evaluate prompting strategies on NLU tasks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect the built-in task catalog.
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
    /// Execute a run described by a config file.
    Run(RunArgs),
    /// Finish an interrupted or failed run.
    Resume {
        #[arg(long = "out", value_name = "DIR")]
        out: PathBuf,
    },
    /// Recompute a finished run's scores from its predictions.
    Score {
        run_dir: PathBuf,
        #[arg(long, value_parser = parse_failure_mode)]
        parse_failure_mode: Option<ParseFailureMode>,
        #[arg(long)]
        json: bool,
    },
    /// Build a report over finished runs.
    Report(ReportArgs),
    /// Attach error annotations to a finished run.
    Annotate {
        run_dir: PathBuf,
        /// JSONL file of annotations.
        #[arg(long)]
        file: PathBuf,
    },
}

#[derive(Subcommand)]
enum CatalogAction {
    List {
        #[arg(long)]
        json: bool,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    #[arg(long)]
    task: Option<String>,
    #[arg(long, value_parser = strategy)]
    strategy: Option<StrategyId>,
    /// Backend config file replacing the run config's backend table.
    #[arg(long, value_name = "FILE")]
    backend: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eval_n: Option<usize>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Resume if the output directory already holds this run.
    #[arg(long)]
    resume: bool,
    /// Stop after this many instances, leaving the run resumable.
    #[arg(long, hide = true)]
    stop_after: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Select {
    Best,
}

#[derive(clap::Args)]
struct ReportArgs {
    #[arg(long, value_parser = report_mode)]
    mode: ReportMode,
    #[arg(required = true)]
    run_dirs: Vec<PathBuf>,
    /// Pick one run per model × task × strategy when several exist.
    #[arg(long, value_enum, requires = "metric")]
    select: Option<Select>,
    #[arg(long, value_parser = metric)]
    metric: Option<MetricId>,
    #[arg(long, default_value_t = metacog_eval::analysis::DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long, value_parser = calibration_mode, default_value = "pooled")]
    calibration_mode: CalibrationMode,
    /// Write report files here instead of printing the main table.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn strategy(s: &str) -> Result<StrategyId, String> {
    s.parse()
}

fn report_mode(s: &str) -> Result<ReportMode, String> {
    s.parse()
}

fn calibration_mode(s: &str) -> Result<CalibrationMode, String> {
    s.parse()
}

fn parse_failure_mode(s: &str) -> Result<ParseFailureMode, String> {
    s.parse()
}

fn metric(s: &str) -> Result<MetricId, String> {
    serde_json::from_value(s.into()).map_err(|_| format!("unknown metric `{s}`"))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Catalog {
            action: CatalogAction::List { json },
        } => catalog_list(json),
        Command::Run(args) => run_cmd(args),
        Command::Resume { out } => {
            summarize(&run::resume(&out)?);
            Ok(())
        }
        Command::Score {
            run_dir,
            parse_failure_mode,
            json,
        } => {
            let report = run::rescore(&run_dir, parse_failure_mode)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.to_tsv());
            }
            Ok(())
        }
        Command::Report(args) => report_cmd(args),
        Command::Annotate { run_dir, file } => {
            let text = std::fs::read_to_string(&file)
                .with_context(|| format!("reading {}", file.display()))?;
            let annotations = text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(n, l)| {
                    serde_json::from_str::<ErrorAnnotation>(l)
                        .with_context(|| format!("{} line {}", file.display(), n + 1))
                })
                .collect::<Result<Vec<_>>>()?;
            let added = run::annotate(&run_dir, &annotations)?;
            println!("{added} new annotation(s) stored");
            Ok(())
        }
    }
}

fn catalog_list(json: bool) -> Result<()> {
    let catalog = builtin_catalog();
    if json {
        println!("{}", serde_json::to_string_pretty(&catalog)?);
        return Ok(());
    }
    println!("task\tbenchmark\tkind\tclasses\tmetrics\tdomain");
    for t in &catalog {
        let classes = match &t.label_space.none_label {
            Some(_) => format!("{} + 1", t.label_space.labels.len() - 1),
            None => t.label_space.labels.len().to_string(),
        };
        let metrics: Vec<&str> = t.metrics.iter().map(|m| m.as_str()).collect();
        println!(
            "{}\t{}\t{}\t{classes}\t{}\t{}",
            t.task_id,
            serde_json::to_value(t.benchmark)?
                .as_str()
                .unwrap_or_default(),
            serde_json::to_value(t.task_kind)?
                .as_str()
                .unwrap_or_default(),
            metrics.join(","),
            t.domain
        );
    }
    Ok(())
}

fn run_cmd(args: RunArgs) -> Result<()> {
    let mut config = RunConfig::from_file(&args.config)?;
    if let Some(task) = args.task {
        config.task_id = task;
    }
    if let Some(s) = args.strategy {
        config.strategy = s;
    }
    if let Some(path) = &args.backend {
        config.backend = BackendConfig::from_file(path)?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(n) = args.eval_n {
        config.eval_n = n;
    }
    if let Some(out) = args.out {
        config.output_dir = Some(std::path::absolute(out)?);
    }
    let Some(out) = config.output_dir.clone() else {
        bail!("no output directory: pass --out or set output_dir in the config");
    };
    let opts = RunOptions {
        stop_after: args.stop_after,
        ..Default::default()
    };
    let outcome = if has_manifest(&out) {
        if !args.resume {
            bail!(
                "{} already holds a run; pass --resume to continue it",
                out.display()
            );
        }
        let recorded = RunManifest::load(&out)?;
        if recorded.digests.config != config.digest() {
            bail!("{} holds a run with a different config", out.display());
        }
        run::resume_with(&out, &opts)?
    } else {
        run::run_eval_with(&config, &opts)?
    };
    summarize(&outcome);
    Ok(())
}

fn has_manifest(dir: &Path) -> bool {
    dir.join("manifest.json").is_file()
}

fn summarize(outcome: &RunOutcome) {
    let m = &outcome.manifest;
    println!(
        "{}: {:?}, {}/{} instances, {} executed now, {} backend call(s)",
        m.run_id,
        m.status,
        m.completed(),
        m.progress.len(),
        outcome.executed,
        outcome.backend_calls
    );
    if let Some(scores) = &outcome.scores {
        print!("{}", scores.to_tsv());
    }
}

fn report_cmd(args: ReportArgs) -> Result<()> {
    let opts = ReportOptions {
        mode: args.mode,
        select_best: match args.select {
            Some(Select::Best) => args.metric,
            None => None,
        },
        threshold: args.threshold,
        calibration_mode: args.calibration_mode,
    };
    let output = run::report(&args.run_dirs, &opts)?;
    match args.out {
        Some(dir) => {
            for path in output.write_to(&dir)? {
                println!("{}", path.display());
            }
        }
        None => print!("{}", output.main()),
    }
    Ok(())
}
