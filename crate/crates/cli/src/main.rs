//! `epistate` command-line front end.
//!
//! Exit status: 0 on success, 1 on a data or model error, 2 on a usage error.

mod commands;
mod inputs;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "epistate", version, about = "Multi-state SIRD filtering, estimation and counterfactuals")]
struct Cli {
    /// Worker threads for batch jobs (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

/// Input files. Unset paths default to the standard file names under
/// `--data-dir`.
#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    #[arg(long, env = "EPISTATE_DATA_DIR", default_value = ".")]
    pub data_dir: PathBuf,

    /// `date,state,cumulative_deaths` [default: deaths.csv]
    #[arg(long)]
    pub deaths: Option<PathBuf>,

    /// `origin,destination,daily_fraction` [default: travel.csv]
    #[arg(long)]
    pub travel: Option<PathBuf>,

    /// `origin,destination,daily_fraction` [default: commute.csv]
    #[arg(long)]
    pub commute: Option<PathBuf>,

    /// `state,policy,start_date,end_date` [default: policies.csv]
    #[arg(long)]
    pub policies: Option<PathBuf>,

    /// `state,population`; the built-in 2019 U.S. roster when absent
    /// [default: populations.csv if present]
    #[arg(long)]
    pub populations: Option<PathBuf>,

    /// `key = value` parameter overrides [default: params.txt if present]
    #[arg(long)]
    pub params: Option<PathBuf>,

    /// Use reported deaths without weekly seasonal adjustment.
    #[arg(long)]
    pub raw: bool,
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, short, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check that every input loads and is consistent.
    Validate {
        #[command(flatten)]
        inputs: InputArgs,
    },
    /// Estimate beta_bar, sigma and rho by quasi-maximum likelihood.
    Fit {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        out: OutArgs,
        /// Objective evaluation budget.
        #[arg(long, default_value_t = 500)]
        max_evals: usize,
    },
    /// Filtered state means and standard deviations.
    Filter {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Smoothed D, S, I and beta paths.
    Smooth {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Effective reproduction numbers from the smoothed states.
    Rt {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Simulate an epidemic with the micro-level model.
    Simulate {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        out: OutArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// First simulated date is the day after `start`.
        #[arg(long, default_value = "2020-02-20")]
        start: NaiveDate,
        #[arg(long, default_value_t = 120)]
        days: usize,
        /// Initial infections per state.
        #[arg(long, default_value_t = 100.0)]
        i0: f64,
    },
    /// Excess deaths under alternative policy calendars.
    Counterfactual {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        out: OutArgs,
        /// Scenario names to run [default: every scenario in the file].
        #[arg(long = "scenario")]
        scenarios: Vec<String>,
        /// `name | kind | policies | scope | overrides` lines [default: built-in set].
        #[arg(long)]
        scenario_file: Option<PathBuf>,
        /// Last date of the comparison [default: last observed date].
        #[arg(long)]
        horizon: Option<NaiveDate>,
        /// Run each scenario once per state, scoped to that state.
        #[arg(long)]
        state_by_state: bool,
        /// Also sweep nationwide mask start dates over FROM..TO (daily).
        #[arg(long, value_name = "FROM..TO", value_parser = parse_date_range)]
        mask_sweep: Option<(NaiveDate, NaiveDate)>,
    },
    /// Re-fit and re-run scenarios with one parameter overridden per row.
    Sweep {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        out: OutArgs,
        /// `name=value`; one row each.
        #[arg(long = "set", value_parser = parse_override)]
        overrides: Vec<(String, f64)>,
        #[arg(long = "scenario", default_values_t = ["strict_all".to_string(), "loose_all".to_string()])]
        scenarios: Vec<String>,
        #[arg(long)]
        scenario_file: Option<PathBuf>,
        #[arg(long)]
        horizon: Option<NaiveDate>,
        #[arg(long, default_value_t = 500)]
        max_evals: usize,
    },
    /// Download death counts and write them in the deaths CSV schema.
    Fetch {
        #[arg(long, default_value = commands::DEFAULT_FETCH_URL)]
        url: String,
        /// [default: <data-dir>/deaths.csv]
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, env = "EPISTATE_DATA_DIR", default_value = ".")]
        data_dir: PathBuf,
    },
}

fn parse_override(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let v: f64 = v.trim().parse().map_err(|_| format!("`{}` is not a number", v.trim()))?;
    Ok((k.trim().to_string(), v))
}

fn parse_date_range(s: &str) -> Result<(NaiveDate, NaiveDate), String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected FROM..TO, got `{s}`"))?;
    let d = |x: &str| NaiveDate::parse_from_str(x.trim(), "%Y-%m-%d").map_err(|e| format!("`{x}`: {e}"));
    let (a, b) = (d(a)?, d(b)?);
    if b < a {
        return Err(format!("range `{s}` ends before it starts"));
    }
    Ok((a, b))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(t) = cli.threads {
        epistate::exec::set_thread_limit(t);
    }
    let result = match cli.command {
        Command::Validate { inputs } => commands::validate(&inputs),
        Command::Fit { inputs, out, max_evals } => commands::fit(&inputs, &out, max_evals),
        Command::Filter { inputs, out } => commands::filter(&inputs, &out),
        Command::Smooth { inputs, out } => commands::smooth(&inputs, &out),
        Command::Rt { inputs, out } => commands::rt(&inputs, &out),
        Command::Simulate {
            inputs,
            out,
            seed,
            start,
            days,
            i0,
        } => commands::simulate(&inputs, &out, seed, start, days, i0),
        Command::Counterfactual {
            inputs,
            out,
            scenarios,
            scenario_file,
            horizon,
            state_by_state,
            mask_sweep,
        } => commands::counterfactual(
            &inputs,
            &out,
            &commands::ScenarioArgs {
                names: scenarios,
                file: scenario_file,
                horizon,
            },
            state_by_state,
            mask_sweep,
        ),
        Command::Sweep {
            inputs,
            out,
            overrides,
            scenarios,
            scenario_file,
            horizon,
            max_evals,
        } => commands::sweep(
            &inputs,
            &out,
            &overrides,
            &commands::ScenarioArgs {
                names: scenarios,
                file: scenario_file,
                horizon,
            },
            max_evals,
        ),
        Command::Fetch { url, output, data_dir } => {
            commands::fetch(&url, &output.unwrap_or_else(|| data_dir.join("deaths.csv")))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
