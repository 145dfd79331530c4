use chrono::NaiveDate;

use super::{fit, Bounds, FitOptions, FitResult, Problem};
use crate::counterfactual::{build_scenario, run_counterfactual, Baseline, ScenarioSpec};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::ModelParams;

/// National excess of one scenario under one sweep row.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualSummary {
    pub scenario: String,
    pub national_excess: std::result::Result<f64, String>,
}

/// Outcome of re-fitting and re-running scenarios with one parameter
/// overridden. Failures are kept in the row.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    pub fit: std::result::Result<FitResult, String>,
    pub counterfactuals: Vec<CounterfactualSummary>,
}

const FREE: [&str; 3] = ["beta_bar", "sigma", "rho"];

fn overridden(base: &ModelParams, name: &str, value: f64) -> Result<ModelParams> {
    if FREE.contains(&name) {
        return Err(Error::Config(format!("`{name}` is estimated and cannot be swept")));
    }
    let mut p = *base;
    p.set(name, value)?;
    if let Some(v) = p.violations().first() {
        return Err(Error::Config(v.clone()));
    }
    Ok(p)
}

/// For each `(parameter, value)` override: fits `(beta_bar, sigma, rho)`
/// with that value fixed, then runs every scenario at the fitted point.
/// Rows run through `exec`; each fit and scenario inside a row runs
/// sequentially.
#[allow(clippy::too_many_arguments)]
pub fn sensitivity_sweep(
    problem: &Problem,
    base: &ModelParams,
    bounds: &Bounds,
    opts: &FitOptions,
    scenarios: &[ScenarioSpec],
    horizon: Option<NaiveDate>,
    overrides: &[(String, f64)],
    exec: Exec,
) -> Vec<SweepRow> {
    let inner = FitOptions {
        exec: Exec::Sequential,
        ..*opts
    };
    exec.map(overrides, |(name, value)| {
        let fitted = overridden(base, name, *value).and_then(|p| fit(problem, &p, bounds, &inner).map(|f| (f.params(&p), f)));
        let (params, fit) = match fitted {
            Ok((p, f)) => (Some(p), Ok(f)),
            Err(e) => (None, Err(e.to_string())),
        };
        let counterfactuals = scenarios
            .iter()
            .map(|spec| CounterfactualSummary {
                scenario: spec.name.clone(),
                national_excess: match &params {
                    Some(p) => scenario_excess(problem, p, spec, horizon).map_err(|e| e.to_string()),
                    None => Err("fit failed".to_string()),
                },
            })
            .collect();
        SweepRow {
            parameter: name.clone(),
            value: *value,
            fit,
            counterfactuals,
        }
    })
}

fn scenario_excess(problem: &Problem, params: &ModelParams, spec: &ScenarioSpec, horizon: Option<NaiveDate>) -> Result<f64> {
    let init = problem.init_belief(params)?;
    let last = *problem.observations.dates.last().expect("init_belief checked the series");
    let scenario = build_scenario(spec, problem.calendar, problem.country, horizon.unwrap_or(last))?;
    let base = Baseline {
        country: problem.country,
        params,
        calendar: problem.calendar,
        mobility: problem.mobility,
        observations: problem.observations,
        init: &init,
    };
    Ok(run_counterfactual(&base, &scenario, horizon)?.national_excess())
}
