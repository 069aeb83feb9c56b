use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use phd_search::harness::config::{config_schema, Algorithm, ExperimentSpec};
use phd_search::harness::metrics::{aggregate, mean_ci, Metrics, RunRecord};
use phd_search::harness::output::{read_report, write_records, write_report};
use phd_search::harness::run_experiment;
use phd_search::{Error, Result};

#[derive(Parser)]
#[command(
    name = "phd-search",
    version,
    about = "Multi-target search experiments with an SMC-PHD filter"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write per-step and per-run CSV files.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated seeds, replacing the config's list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// proposed | lawnmower | refinement-only
        #[arg(long)]
        algorithm: Option<String>,
    },
    /// Re-run an experiment for each value of one parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Dotted path (`planner.tau`) or a unique key (`T_r`).
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long, default_value = "sweep-out")]
        out: PathBuf,
    },
    /// Aggregate a run directory into aggregate.csv and detections.svg.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Print the JSON schema of experiment config files.
    Schema,
}

fn load(config: &Path, seeds: Option<Vec<u64>>, algorithm: Option<String>) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::load(config)?;
    if let Some(s) = seeds {
        spec.seeds = s;
    }
    if let Some(a) = algorithm {
        spec.algorithm = a.parse::<Algorithm>()?;
    }
    spec.validate()?;
    Ok(spec)
}

fn fmt_ci(label: &str, c: &phd_search::harness::MeanCi) -> String {
    if c.n == 0 {
        format!("{label}: n/a")
    } else if c.half_width.is_finite() {
        format!("{label}: {:.3} ± {:.3} (n={})", c.mean, c.half_width, c.n)
    } else {
        format!("{label}: {:.3} (n={})", c.mean, c.n)
    }
}

fn summarise(spec: &ExperimentSpec, records: &[RunRecord], m: &Metrics) {
    eprintln!(
        "{} [{}]: {} runs, {}/{} found every target",
        if spec.name.is_empty() { "experiment" } else { &spec.name },
        spec.algorithm.name(),
        m.runs,
        m.finished,
        m.runs
    );
    eprintln!("  {}", fmt_ci("steps to all found", &m.steps_to_all_found));
    eprintln!("  {}", fmt_ci("RMSE (m)", &m.rmse));
    if let Some(last) = m.detections.last() {
        eprintln!("  {}", fmt_ci("found at final step", last));
    }
    let resets: usize = records.iter().map(|r| r.resets).sum();
    if resets > 0 {
        eprintln!("  vehicle attitude resets after singular states: {resets}");
    }
}

fn run(config: &Path, out: &Path, seeds: Option<Vec<u64>>, algorithm: Option<String>) -> Result<()> {
    let spec = load(config, seeds, algorithm)?;
    let t0 = Instant::now();
    let records = run_experiment(&spec)?;
    write_records(out, &records)?;
    std::fs::write(out.join("config.json"), serde_json::to_string_pretty(&spec)? + "\n")?;
    summarise(&spec, &records, &aggregate(&records));
    eprintln!(
        "  wall time {:.1} s; output in {}",
        t0.elapsed().as_secs_f64(),
        out.display()
    );
    Ok(())
}

fn sweep(config: &Path, param: &str, values: &[String], out: &Path) -> Result<()> {
    if values.is_empty() {
        return Err(Error::config("--values must list at least one value"));
    }
    let base = ExperimentSpec::load(config)?;
    // Validate every variant before running any.
    let specs: Vec<ExperimentSpec> = values
        .iter()
        .map(|v| base.with_override(param, v))
        .collect::<Result<_>>()?;
    std::fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join("sweep.csv"))?;
    w.write_record([
        "value",
        "runs",
        "finished",
        "rmse_mean",
        "rmse_ci",
        "steps_mean",
        "steps_ci",
        "final_found_mean",
        "final_found_ci",
    ])?;
    for (v, spec) in values.iter().zip(&specs) {
        let records = run_experiment(spec)?;
        let dir = out.join(format!("{}={}", param.replace('/', "_"), v.replace('/', "_")));
        write_records(&dir, &records)?;
        let m = aggregate(&records);
        summarise(spec, &records, &m);
        let last = m.detections.last().copied().unwrap_or_else(|| mean_ci(&[]));
        let f = |x: f64| if x.is_finite() { x.to_string() } else { String::new() };
        w.write_record([
            v.clone(),
            m.runs.to_string(),
            m.finished.to_string(),
            f(m.rmse.mean),
            f(m.rmse.half_width),
            f(m.steps_to_all_found.mean),
            f(m.steps_to_all_found.half_width),
            f(last.mean),
            f(last.half_width),
        ])?;
    }
    w.flush()?;
    eprintln!(
        "sweep over {param}: {} values, output in {}",
        values.len(),
        out.display()
    );
    Ok(())
}

fn report(input: &Path) -> Result<()> {
    let r = read_report(input)?;
    write_report(input, &r)?;
    println!("{}", fmt_ci("steps to all found", &r.steps_to_all_found));
    println!("{}", fmt_ci("RMSE (m)", &r.rmse));
    if let Some(last) = r.detections.last() {
        println!("{}", fmt_ci("found at final step", last));
    }
    println!(
        "wrote {} and {}",
        input.join("aggregate.csv").display(),
        input.join("detections.svg").display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run {
            config,
            out,
            seeds,
            algorithm,
        } => run(&config, &out, seeds, algorithm),
        Command::Sweep {
            config,
            param,
            values,
            out,
        } => sweep(&config, &param, &values, &out),
        Command::Report { input } => report(&input),
        Command::Schema => serde_json::to_string_pretty(&config_schema())
            .map(|s| println!("{s}"))
            .map_err(Error::from),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
