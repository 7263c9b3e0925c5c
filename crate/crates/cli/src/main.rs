//! `failcast` — failure prediction for simulated cloud KPI streams.
//!
//! The binary wires the library end to end: simulate scenarios into
//! traces, train the detector/novelty stack on clean weeks, replay a
//! trace under one configuration, sweep the whole configuration grid,
//! and print reports. `campaign` runs all of that in one shot into a
//! self-contained directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use failcast_core::campaign::{run_campaign, CampaignSpec};
use failcast_core::eval::{parse_report_csv, ConfigReport, SweepConfig};
use failcast_core::global::Strategy;
use failcast_core::model::{load_system, save_system};
use failcast_core::pipeline::{predict_run, prediction_log_csv, sweep, train_system};
use failcast_core::scenario::ScenarioConfig;
use failcast_core::simulate::run_scenario;
use failcast_core::trace::Trace;
use failcast_core::{Params, System};

#[derive(Parser)]
#[command(
    name = "failcast",
    version,
    about = "Predict cloud service failures from per-resource KPI streams"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario file into a KPI trace
    Simulate {
        /// Scenario description (TOML)
        #[arg(long)]
        scenario: PathBuf,
        /// Directory receiving `<name>.csv` and `<name>.truth.csv`
        #[arg(long)]
        out: PathBuf,
    },
    /// Train detectors and novelty models from failure-free traces
    Train {
        /// Directory of training traces
        #[arg(long)]
        traces: PathBuf,
        /// Directory receiving the trained system
        #[arg(long)]
        models: PathBuf,
    },
    /// Replay one trace through a trained system under one configuration
    Predict {
        /// Path to the trace CSV (its `.truth.csv` sibling must exist)
        #[arg(long)]
        trace: PathBuf,
        /// Directory holding a trained system
        #[arg(long)]
        models: PathBuf,
        /// Likelihood threshold; must be one of the trained grid values
        #[arg(long)]
        epsilon: f64,
        /// Consecutive outlier ticks before a resource turns positive
        #[arg(long)]
        n: u32,
        /// Fusion strategy: `single_resource` or `vote_based`
        #[arg(long)]
        strategy: String,
        /// Streak length for `single_resource` (1-6)
        #[arg(long)]
        x: Option<u32>,
        /// Majority-streak length for `vote_based` (1-3)
        #[arg(long)]
        y: Option<u32>,
        /// Where to write the prediction-event log CSV
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every grid configuration over a directory of evaluation traces
    Sweep {
        /// Directory of evaluation traces (faulty and clean)
        #[arg(long)]
        traces: PathBuf,
        /// Directory holding a trained system
        #[arg(long)]
        models: PathBuf,
        /// Report CSV path; per-fault and per-epsilon companions are
        /// written next to it
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a report CSV produced by `sweep` or `campaign`
    Report {
        /// Report CSV to read
        #[arg(long = "in")]
        input: PathBuf,
        /// Also print the pooled per-fault-type table
        #[arg(long)]
        per_fault: bool,
    },
    /// Simulate, train, and sweep a complete campaign in one directory
    Campaign {
        /// Campaign directory (scenarios, traces, models, reports)
        #[arg(long)]
        out: PathBuf,
        /// Base seed for every generated scenario
        #[arg(long, default_value_t = CampaignSpec::default().seed)]
        seed: u64,
        /// Number of fault-free evaluation runs
        #[arg(long, default_value_t = CampaignSpec::default().clean_runs)]
        clean_runs: usize,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate { scenario, out } => cmd_simulate(&scenario, &out),
        Command::Train { traces, models } => cmd_train(&traces, &models),
        Command::Predict {
            trace,
            models,
            epsilon,
            n,
            strategy,
            x,
            y,
            out,
        } => cmd_predict(&trace, &models, epsilon, n, &strategy, x, y, &out),
        Command::Sweep { traces, models, out } => cmd_sweep(&traces, &models, &out),
        Command::Report { input, per_fault } => cmd_report(&input, per_fault),
        Command::Campaign {
            out,
            seed,
            clean_runs,
        } => cmd_campaign(&out, seed, clean_runs),
    }
}

fn cmd_simulate(scenario: &Path, out: &Path) -> Result<()> {
    let cfg = ScenarioConfig::load(scenario)
        .with_context(|| format!("reading scenario {}", scenario.display()))?;
    let trace = run_scenario(&cfg)?;
    trace.save(out)?;
    println!(
        "simulated '{}': {} ticks x {} resources -> {}",
        trace.name,
        trace.ticks(),
        trace.resources,
        out.join(format!("{}.csv", trace.name)).display()
    );
    for a in &trace.activations {
        println!("  fault activation at tick {} ({})", a.tick, a.fault_type);
    }
    match &trace.failure {
        Some(f) => println!("  failure at tick {} ({})", f.tick, f.kind.name()),
        None => println!("  no failure event"),
    }
    Ok(())
}

fn load_traces(dir: &Path) -> Result<Vec<Trace>> {
    let names = Trace::list(dir)
        .with_context(|| format!("listing traces in {}", dir.display()))?;
    if names.is_empty() {
        bail!("no traces found in {}", dir.display());
    }
    names
        .iter()
        .map(|n| Trace::load(dir, n).with_context(|| format!("loading trace '{n}'")))
        .collect()
}

fn cmd_train(traces_dir: &Path, models: &Path) -> Result<()> {
    let traces = load_traces(traces_dir)?;
    if let Some(bad) = traces.iter().find(|t| t.is_faulty()) {
        bail!(
            "trace '{}' contains fault activity; training needs failure-free traces",
            bad.name
        );
    }
    let tick_minutes = traces[0].tick_minutes;
    if traces.iter().any(|t| t.tick_minutes != tick_minutes) {
        bail!("training traces disagree on tick length");
    }
    let params = Params::for_tick_minutes(tick_minutes)?;
    let system = train_system(&params, &traces)?;
    save_system(&system, models)?;
    println!(
        "trained on {} trace(s), {} ticks; {} novelty training vectors; models in {}",
        traces.len(),
        system.trained_ticks,
        system.svm_training_vectors,
        models.display()
    );
    Ok(())
}

/// Loads `<stem>.csv` + `<stem>.truth.csv` given the path to the CSV.
fn load_trace_file(path: &Path) -> Result<Trace> {
    let name = path
        .file_name()
        .and_then(|s| s.to_str())
        .with_context(|| format!("{}: not a trace file name", path.display()))?;
    let name = name.strip_suffix(".csv").unwrap_or(name);
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    Ok(Trace::load(dir, name)?)
}

fn build_strategy(strategy: &str, x: Option<u32>, y: Option<u32>) -> Result<Strategy> {
    match strategy {
        "single_resource" => {
            if y.is_some() {
                bail!("--y belongs to the vote_based strategy; single_resource takes --x");
            }
            let x = x.context("single_resource needs --x (consecutive-tick streak, 1-6)")?;
            Ok(Strategy::SingleResource { x })
        }
        "vote_based" => {
            if x.is_some() {
                bail!("--x belongs to the single_resource strategy; vote_based takes --y");
            }
            let y = y.context("vote_based needs --y (consecutive majority ticks, 1-3)")?;
            Ok(Strategy::VoteBased { y })
        }
        other => bail!("unknown strategy '{other}' (expected single_resource or vote_based)"),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_predict(
    trace_path: &Path,
    models: &Path,
    epsilon: f64,
    n: u32,
    strategy: &str,
    x: Option<u32>,
    y: Option<u32>,
    out: &Path,
) -> Result<()> {
    let system: System = load_system(models)
        .with_context(|| format!("loading models from {}", models.display()))?;
    let trace = load_trace_file(trace_path)?;
    let config = SweepConfig {
        epsilon,
        n,
        strategy: build_strategy(strategy, x, y)?,
    };
    let events = predict_run(&system, &trace, &config)?;

    std::fs::write(out, prediction_log_csv(&trace, &events))
        .with_context(|| format!("writing {}", out.display()))?;

    println!(
        "'{}' under {} eps={} n={}: {} prediction event(s) over {} ticks",
        trace.name,
        config.strategy,
        epsilon,
        n,
        events.len(),
        trace.ticks()
    );
    for e in &events {
        println!(
            "  tick {:>5}  {}  trigger {}",
            e.tick,
            trace.timestamp(e.tick).format("%Y-%m-%d %H:%M"),
            e.trigger
        );
    }
    match &trace.failure {
        Some(f) => {
            println!("  actual failure at tick {} ({})", f.tick, f.kind.name());
            match events.iter().map(|e| e.tick).find(|&t| t < f.tick) {
                Some(first) => println!(
                    "  earliest warning {} minute(s) ahead",
                    (f.tick - first) * trace.tick_minutes as u64
                ),
                None => println!("  no warning before the failure"),
            }
        }
        None => println!("  trace has no failure event"),
    }
    println!("event log written to {}", out.display());
    Ok(())
}

/// Companion path: `report.csv` -> `report_<suffix>.csv`.
fn companion(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("report");
    out.with_file_name(format!("{stem}_{suffix}.csv"))
}

fn cmd_sweep(traces_dir: &Path, models: &Path, out: &Path) -> Result<()> {
    let system: System = load_system(models)
        .with_context(|| format!("loading models from {}", models.display()))?;
    let traces = load_traces(traces_dir)?;
    let output = sweep(&system, &traces)?;

    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(out, failcast_core::eval::report_csv(&output.reports))?;
    let per_fault = companion(out, "per_fault");
    std::fs::write(&per_fault, failcast_core::eval::per_fault_csv(&output.per_fault))?;
    let by_epsilon = companion(out, "by_epsilon");
    std::fs::write(&by_epsilon, failcast_core::eval::by_epsilon_csv(&output.reports))?;

    println!(
        "swept {} configurations over {} run(s)",
        output.reports.len(),
        traces.len()
    );
    print_best(output.best());
    println!("report:     {}", out.display());
    println!("per fault:  {}", per_fault.display());
    println!("by epsilon: {}", by_epsilon.display());
    Ok(())
}

fn print_best(best: &ConfigReport) {
    println!(
        "best: {} eps={} n={} -> precision {:.3}, recall {:.3}, F {:.3}{}",
        best.config.strategy,
        best.config.epsilon,
        best.config.n,
        best.precision,
        best.recall,
        best.f_measure,
        match best.median_lead_min {
            Some(m) => format!(", median lead {m:.1} min"),
            None => String::new(),
        }
    );
}

fn cmd_report(input: &Path, per_fault: bool) -> Result<()> {
    let text = std::fs::read_to_string(input)
        .with_context(|| format!("reading {}", input.display()))?;
    let reports = parse_report_csv(&text)?;
    if reports.is_empty() {
        bail!("{} holds no report rows", input.display());
    }

    println!(
        "{:<22} {:>4} {:>2} {:>4} {:>4} {:>4} {:>10} {:>7} {:>7} {:>9}",
        "configuration", "eps", "n", "tp", "fp", "fn", "precision", "recall", "F", "lead(min)"
    );
    for r in &reports {
        println!(
            "{:<22} {:>4} {:>2} {:>4} {:>4} {:>4} {:>10.3} {:>7.3} {:>7.3} {:>9}",
            r.config.strategy.to_string(),
            r.config.epsilon,
            r.config.n,
            r.tp,
            r.fp,
            r.fn_,
            r.precision,
            r.recall,
            r.f_measure,
            match r.median_lead_min {
                Some(m) => format!("{m:.1}"),
                None => "-".into(),
            }
        );
    }
    let best = reports
        .iter()
        .reduce(|b, r| {
            if r.f_measure > b.f_measure
                || (r.f_measure == b.f_measure && r.precision > b.precision)
            {
                r
            } else {
                b
            }
        })
        .expect("non-empty");
    print_best(best);

    if per_fault {
        let path = companion(input, "per_fault");
        let table = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        println!("\nper fault type ({}):", path.display());
        print!("{table}");
    }
    Ok(())
}

fn cmd_campaign(out: &Path, seed: u64, clean_runs: usize) -> Result<()> {
    let spec = CampaignSpec {
        seed,
        clean_runs,
        ..CampaignSpec::default()
    };
    let params = Params::for_tick_minutes(spec.tick_minutes)?;
    let started = std::time::Instant::now();
    let result = run_campaign(out, &spec, &params)?;

    println!(
        "campaign done in {:.1}s (seed {seed}, {} clean runs)",
        started.elapsed().as_secs_f64(),
        clean_runs
    );
    if result.clean_failures > 0 {
        println!(
            "WARNING: {} fault-free run(s) reached failure",
            result.clean_failures
        );
    }
    print_best(result.sweep.best());
    for row in &result.sweep.per_fault {
        println!(
            "  {:<20} recall {:.3} over {} run-pairings{}",
            row.fault_type.to_string(),
            row.recall,
            row.total,
            match row.median_lead_min {
                Some(m) => format!(", median lead {m:.1} min"),
                None => String::new(),
            }
        );
    }
    println!("models:     {}", result.models_dir.display());
    println!("report:     {}", result.report_path.display());
    println!("per fault:  {}", result.per_fault_path.display());
    println!("by epsilon: {}", result.by_epsilon_path.display());
    Ok(())
}
