//! Counterfactual policy calendars and the paired baseline/fictitious
//! state-space.
//!
//! The augmented state pairs the observed-world state `X` with a fictitious
//! twin `X*` living under another calendar. Each follows its own conditional
//! mean and Jacobian; their one-day shocks are paired through matched square
//! roots of the two conditional covariances with correlation
//! [`SHOCK_CORRELATION`]. Only the baseline deaths are measured, so
//! smoothing the pair conditions the fictitious path on the same history.
//!
//! The twin is carried as the difference `E = X* - X` rather than as `X*`
//! itself. This is an exact linear change of variables, so the filter and
//! smoother give the same answer in exact arithmetic, but the stacked form
//! loses the excess to cancellation once the joint covariance is nearly
//! singular (tens of states over hundreds of days).

mod scenario;

use std::fmt;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};

use crate::dynamics::{self, JacobianDifference, NoiseSources, TransitionJacobian};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::filter::{
    bf_smooth_rows, run_filter, EpidemicModel, GaussianBelief, LinearMap, ObservationSeries, Retain,
    StateSpace, Transition,
};
use crate::mobility::MobilitySpec;
use crate::model::{Block, Country, ModelParams};
use crate::policy::PolicyCalendar;

pub use scenario::{build_scenario, mask_scenario, Scenario, ScenarioKind, ScenarioSpec, Scope, StrictDates};

/// One minus [`SHOCK_CORRELATION`], kept separately because the difference
/// is what enters the noise.
///
/// Zero: the twin only receives the shock differences implied by its own
/// state and calendar. Any independent share is invisible to the data and
/// grows with the unstable modes of the linearized epidemic; on the 51-state
/// synthetic panel 1e-12 already moves the identity excess by about 1% of
/// national deaths after 293 days. In difference coordinates the resulting
/// rank-deficient covariance needs no inversion.
pub const SHOCK_DECORRELATION: f64 = 0.0;

/// Correlation between matched standardized shocks of the two blocks.
pub const SHOCK_CORRELATION: f64 = 1.0 - SHOCK_DECORRELATION;

/// Jacobian in `(X, E)` coordinates: `[[J, 0], [J* - J, J*]]`.
#[derive(Debug)]
struct TwinJacobian {
    base: TransitionJacobian,
    twin: TransitionJacobian,
    diff: JacobianDifference,
}

impl LinearMap for TwinJacobian {
    fn dim(&self) -> usize {
        2 * self.base.dim()
    }

    fn apply(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let k = self.base.dim();
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        self.base.apply_add(m.rows(0, k), out.rows_mut(0, k));
        self.diff.apply_add(m.rows(0, k), out.rows_mut(k, k));
        self.twin.apply_add(m.rows(k, k), out.rows_mut(k, k));
        out
    }

    fn apply_transpose(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let k = self.base.dim();
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        self.base.apply_transpose_add(m.rows(0, k), out.rows_mut(0, k));
        self.diff.apply_transpose_add(m.rows(k, k), out.rows_mut(0, k));
        self.twin.apply_transpose_add(m.rows(k, k), out.rows_mut(k, k));
        out
    }
}

/// Baseline epidemic and its fictitious difference in one `10N` system,
/// laid out as `[X, X* - X]`.
#[derive(Debug, Clone)]
pub struct TwinModel {
    baseline: EpidemicModel,
    fictitious: EpidemicModel,
    decorrelation: f64,
}

impl TwinModel {
    pub fn new(
        country: &Country,
        params: &ModelParams,
        observed: &PolicyCalendar,
        fictitious: &PolicyCalendar,
        mobility: &MobilitySpec,
        dates: &[NaiveDate],
    ) -> Result<Self> {
        Ok(TwinModel {
            baseline: EpidemicModel::new(country, params, observed, mobility, dates)?,
            fictitious: EpidemicModel::new(country, params, fictitious, mobility, dates)?,
            decorrelation: SHOCK_DECORRELATION,
        })
    }

    /// Overrides [`SHOCK_CORRELATION`]; `corr` must lie in `(0, 1]`.
    pub fn with_correlation(self, corr: f64) -> Result<Self> {
        if !(corr > 0.0 && corr <= 1.0) {
            return Err(Error::Config(format!("shock correlation {corr} outside (0, 1]")));
        }
        self.with_decorrelation(1.0 - corr)
    }

    /// Sets `1 - corr` directly, without rounding through the correlation.
    pub fn with_decorrelation(mut self, decorrelation: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&decorrelation) {
            return Err(Error::Config(format!("shock decorrelation {decorrelation} outside [0, 1)")));
        }
        self.decorrelation = decorrelation;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.baseline.n()
    }

    /// Both worlds start from `init`, so the difference starts at exactly zero.
    pub fn initial_belief(init: &GaussianBelief) -> GaussianBelief {
        let d = init.dim();
        let mut mean = DVector::zeros(2 * d);
        mean.rows_mut(0, d).copy_from(&init.mean);
        let mut cov = DMatrix::zeros(2 * d, 2 * d);
        cov.view_mut((0, 0), (d, d)).copy_from(&init.cov);
        GaussianBelief {
            date: init.date,
            mean,
            cov,
        }
    }

    /// Indices of the baseline deaths and of the death difference `D* - D`.
    pub fn death_rows(&self) -> (Vec<usize>, Vec<usize>) {
        let n = self.n();
        let d: Vec<usize> = Block::D.range(n).collect();
        let diff = d.iter().map(|k| k + 5 * n).collect();
        (d, diff)
    }
}

impl StateSpace for TwinModel {
    fn dim(&self) -> usize {
        10 * self.n()
    }

    fn steps(&self) -> usize {
        self.baseline.steps()
    }

    fn transition(&self, step: usize, date: NaiveDate, mean: &DVector<f64>) -> Result<Transition> {
        let d = 5 * self.n();
        let x = mean.rows(0, d).into_owned();
        let xs = &x + mean.rows(d, d);
        let ctx = self.baseline.context(step);
        let ctx_s = self.fictitious.context(step);
        let next_x = dynamics::conditional_mean(&x, &ctx);
        let next_xs = dynamics::conditional_mean(&xs, &ctx_s);
        let mut next = DVector::zeros(2 * d);
        next.rows_mut(d, d).copy_from(&(&next_xs - &next_x));
        next.rows_mut(0, d).copy_from(&next_x);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical(date, "non-finite predicted mean"));
        }
        let src = NoiseSources::new(&x, &ctx);
        let src_s = NoiseSources::new(&xs, &ctx_s);
        let (cross, var) = src.difference_covariances(&src_s, self.decorrelation);
        let mut noise = DMatrix::zeros(2 * d, 2 * d);
        noise.view_mut((0, 0), (d, d)).copy_from(&src.covariance());
        noise.view_mut((d, d), (d, d)).copy_from(&var);
        noise.view_mut((d, 0), (d, d)).copy_from(&cross.transpose());
        noise.view_mut((0, d), (d, d)).copy_from(&cross);
        let base = dynamics::jacobian(&x, &ctx);
        let twin = dynamics::jacobian(&xs, &ctx_s);
        let diff = twin.minus(&base);
        Ok(Transition {
            mean: next,
            jacobian: Box::new(TwinJacobian { base, twin, diff }),
            noise,
        })
    }

    fn observed(&self) -> &[usize] {
        self.baseline.observed()
    }

    fn meas_var(&self) -> f64 {
        self.baseline.meas_var()
    }
}

/// Fixed inputs shared by every scenario of a run.
#[derive(Debug, Clone, Copy)]
pub struct Baseline<'a> {
    pub country: &'a Country,
    pub params: &'a ModelParams,
    pub calendar: &'a PolicyCalendar,
    pub mobility: &'a MobilitySpec,
    pub observations: &'a ObservationSeries,
    pub init: &'a GaussianBelief,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualResult {
    pub scenario: String,
    pub scope: Scope,
    pub codes: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// Smoothed baseline deaths per date.
    pub baseline: Vec<DVector<f64>>,
    /// Smoothed fictitious deaths per date.
    pub fictitious: Vec<DVector<f64>>,
    pub horizon: NaiveDate,
    /// Smoothed `D*(horizon) - D(horizon)` per state, taken directly from the
    /// difference block.
    pub excess: DVector<f64>,
    /// Largest matrix inverted by the filter and smoother.
    pub max_inverted: usize,
}

impl CounterfactualResult {
    pub fn national_excess(&self) -> f64 {
        self.excess.sum()
    }

    pub fn baseline_at_horizon(&self) -> &DVector<f64> {
        self.baseline.last().expect("results cover at least one date")
    }

    pub fn fictitious_at_horizon(&self) -> &DVector<f64> {
        self.fictitious.last().expect("results cover at least one date")
    }
}

/// Smooths the baseline/fictitious pair over observations up to `horizon`
/// (the last observed date when `None`).
pub fn run_counterfactual(base: &Baseline, scenario: &Scenario, horizon: Option<NaiveDate>) -> Result<CounterfactualResult> {
    let obs = base.observations;
    let last = *obs
        .dates
        .last()
        .ok_or_else(|| Error::Data("empty observation series".into()))?;
    let horizon = horizon.unwrap_or(last);
    if horizon < obs.dates[0] || horizon > last {
        return Err(Error::Config(format!(
            "horizon {horizon} outside the observed range {}..{last}",
            obs.dates[0]
        )));
    }
    let errors = scenario.calendar.violations(base.country);
    if let Some(e) = errors.first() {
        return Err(Error::Config(format!("scenario `{}`: {e}", scenario.name)));
    }
    let keep = obs.dates.iter().take_while(|d| **d <= horizon).count();
    let window = ObservationSeries::new(obs.dates[..keep].to_vec(), obs.values[..keep].to_vec())?;
    let model = TwinModel::new(
        base.country,
        base.params,
        base.calendar,
        &scenario.calendar,
        base.mobility,
        &window.dates,
    )?;
    let (d, d_diff) = model.death_rows();
    let rows: Vec<usize> = d.iter().chain(&d_diff).copied().collect();
    let out = run_filter(&model, &window, &TwinModel::initial_belief(base.init), Retain::Rows(rows))?;
    let smoothed = bf_smooth_rows(&out)?;
    let n = model.n();
    let baseline: Vec<DVector<f64>> = smoothed.means.iter().map(|m| m.rows(0, n).into_owned()).collect();
    let fictitious: Vec<DVector<f64>> = smoothed
        .means
        .iter()
        .map(|m| m.rows(0, n) + m.rows(n, n))
        .collect();
    let excess = smoothed.means.last().expect("non-empty window").rows(n, n).into_owned();
    Ok(CounterfactualResult {
        scenario: scenario.name.clone(),
        scope: scenario.scope.clone(),
        codes: base.country.codes().to_vec(),
        dates: smoothed.dates,
        baseline,
        fictitious,
        horizon,
        excess,
        max_inverted: smoothed.max_inverted,
    })
}

/// Runs independent scenarios through `exec`; results keep input order.
pub fn run_batch(
    base: &Baseline,
    scenarios: &[Scenario],
    horizon: Option<NaiveDate>,
    exec: Exec,
) -> Vec<Result<CounterfactualResult>> {
    exec.map(scenarios, |s| run_counterfactual(base, s, horizon))
}

/// National excess for mask mandates starting on each of `starts` in every
/// state and lasting to the horizon, other policies as observed.
pub fn mask_date_sweep(
    base: &Baseline,
    starts: &[NaiveDate],
    horizon: Option<NaiveDate>,
    exec: Exec,
) -> Vec<(NaiveDate, Result<f64>)> {
    let last = base.observations.dates.last().copied();
    let end = horizon.or(last);
    let runs = exec.map(starts, |start| {
        let end = end.ok_or_else(|| Error::Data("empty observation series".into()))?;
        let scenario = mask_scenario(*start, end, base.calendar, base.country)?;
        run_counterfactual(base, &scenario, horizon).map(|r| r.national_excess())
    });
    starts.iter().copied().zip(runs).collect()
}

/// Every day from `first` to `last` inclusive.
pub fn daily_dates(first: NaiveDate, last: NaiveDate) -> Vec<NaiveDate> {
    first.iter_days().take_while(|d| *d <= last).collect()
}

/// One line of an excess-death table.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcessRow {
    pub scenario: String,
    /// State code, or [`NATIONAL`] for the total.
    pub state: String,
    pub baseline: f64,
    pub fictitious: f64,
    pub excess: f64,
    /// `excess / baseline`; absent when baseline deaths are zero.
    pub relative: Option<f64>,
}

pub const NATIONAL: &str = "ALL";

impl fmt::Display for ExcessRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {:.1} -> {:.1} ({:+.1}",
            self.scenario, self.state, self.baseline, self.fictitious, self.excess
        )?;
        match self.relative {
            Some(r) => write!(f, ", {:+.4})", r),
            None => f.write_str(")"),
        }
    }
}

/// Per-state and national rows for each result, in input order.
pub fn excess_report(results: &[CounterfactualResult]) -> Result<Vec<ExcessRow>> {
    if let Some(first) = results.first() {
        if let Some(r) = results.iter().find(|r| r.horizon != first.horizon) {
            return Err(Error::Config(format!(
                "results have different horizons ({} vs {})",
                first.horizon, r.horizon
            )));
        }
    }
    let row = |scenario: &str, state: &str, b: f64, e: f64| ExcessRow {
        scenario: scenario.to_string(),
        state: state.to_string(),
        baseline: b,
        fictitious: b + e,
        excess: e,
        relative: (b != 0.0).then(|| e / b),
    };
    let mut out = Vec::new();
    for r in results {
        let b = r.baseline_at_horizon();
        for (k, code) in r.codes.iter().enumerate() {
            out.push(row(&r.scenario, code, b[k], r.excess[k]));
        }
        out.push(row(&r.scenario, NATIONAL, b.sum(), r.excess.sum()));
    }
    Ok(out)
}
