//! Seasonal adjustment of death panels, the quasi-likelihood objective over
//! `(beta_bar, sigma, rho)`, bounded Nelder-Mead fitting and sensitivity
//! sweeps.

mod nelder_mead;
mod seasonal;
mod sweep;

use chrono::{Duration, NaiveDate};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::filter::{filter_panel, initial_belief, GaussianBelief, ObservationSeries, Retain};
use crate::mobility::MobilitySpec;
use crate::model::{Country, ModelParams};
use crate::policy::PolicyCalendar;

pub use nelder_mead::{minimize, NelderMeadOptions, NelderMeadResult};
pub use seasonal::{seasonal_adjust, seasonal_adjust_with, Decomposition, SeasonalDecomposer, WeeklyMeans};
pub use sweep::{sensitivity_sweep, CounterfactualSummary, SweepRow};

/// Objective value reported when the filter fails at a parameter point.
/// The distance of the point outside its bounds is added on top.
pub const PENALTY: f64 = 1e12;

/// Cumulative deaths per date (rows) and state (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct DeathPanel {
    pub dates: Vec<NaiveDate>,
    pub codes: Vec<String>,
    pub raw: DMatrix<f64>,
    /// Seasonally adjusted counterpart of `raw`, once computed.
    pub adjusted: Option<DMatrix<f64>>,
}

impl DeathPanel {
    /// Dates must be consecutive days; each state's counts nondecreasing.
    pub fn new(dates: Vec<NaiveDate>, codes: Vec<String>, raw: DMatrix<f64>) -> Result<Self> {
        if raw.shape() != (dates.len(), codes.len()) {
            return Err(Error::Data(format!(
                "panel is {}x{}, expected {} dates x {} states",
                raw.nrows(),
                raw.ncols(),
                dates.len(),
                codes.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[1] != w[0] + Duration::days(1)) {
            return Err(Error::Data(format!("panel dates not consecutive at {}", w[1])));
        }
        for (j, code) in codes.iter().enumerate() {
            if let Some(k) = (1..dates.len()).find(|k| raw[(*k, j)] < raw[(k - 1, j)]) {
                return Err(Error::Data(format!(
                    "{code}: cumulative deaths decrease on {}",
                    dates[k]
                )));
            }
            if let Some(k) = (0..dates.len()).find(|k| !raw[(*k, j)].is_finite() || raw[(*k, j)] < 0.0) {
                return Err(Error::Data(format!("{code}: invalid count on {}", dates[k])));
            }
        }
        Ok(DeathPanel {
            dates,
            codes,
            raw,
            adjusted: None,
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn n(&self) -> usize {
        self.codes.len()
    }

    /// Adjusted counts if available, raw otherwise.
    pub fn values(&self) -> &DMatrix<f64> {
        self.adjusted.as_ref().unwrap_or(&self.raw)
    }

    pub fn observations(&self) -> ObservationSeries {
        let rows: Vec<DVector<f64>> = self.values().row_iter().map(|r| r.transpose()).collect();
        ObservationSeries::complete(self.dates.clone(), &rows).expect("panel dates are increasing")
    }

    /// Reorders columns to follow `country`; every country state must be
    /// present.
    pub fn aligned_to(&self, country: &Country) -> Result<DeathPanel> {
        let idx = country
            .codes()
            .iter()
            .map(|c| {
                self.codes
                    .iter()
                    .position(|x| x == c)
                    .ok_or_else(|| Error::Data(format!("no death series for state {c}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let pick = |m: &DMatrix<f64>| m.select_columns(&idx);
        Ok(DeathPanel {
            dates: self.dates.clone(),
            codes: country.codes().to_vec(),
            raw: pick(&self.raw),
            adjusted: self.adjusted.as_ref().map(pick),
        })
    }

    pub fn national_final(&self) -> f64 {
        let v = self.values();
        v.row(v.nrows() - 1).sum()
    }
}

/// Fixed inputs of a likelihood evaluation.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub country: &'a Country,
    pub calendar: &'a PolicyCalendar,
    pub mobility: &'a MobilitySpec,
    pub observations: &'a ObservationSeries,
}

impl Problem<'_> {
    /// Prior dated the day before the first observation.
    pub fn init_belief(&self, params: &ModelParams) -> Result<GaussianBelief> {
        let first = self
            .observations
            .dates
            .first()
            .ok_or_else(|| Error::Data("empty observation series".into()))?;
        Ok(initial_belief(self.country, params, *first - Duration::days(1)))
    }

    /// Total quasi log-likelihood at `params`.
    pub fn loglik(&self, params: &ModelParams) -> Result<f64> {
        let init = self.init_belief(params)?;
        let out = filter_panel(
            self.country,
            params,
            self.calendar,
            self.mobility,
            self.observations,
            &init,
            Retain::Moments,
        )?;
        Ok(out.loglik)
    }
}

/// Search box for the free parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub beta_bar: (f64, f64),
    pub sigma: (f64, f64),
    pub rho: (f64, f64),
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            beta_bar: (0.01, 1.0),
            sigma: (0.001, 0.5),
            rho: (0.0, 0.99),
        }
    }
}

impl Bounds {
    fn check(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64), positive: bool| lo < hi && lo.is_finite() && hi.is_finite() && (!positive || lo > 0.0);
        if !ok(self.beta_bar, true) || !ok(self.sigma, true) || !ok(self.rho, false) || self.rho.0 < 0.0 || self.rho.1 >= 1.0 {
            return Err(Error::Config(format!("invalid search bounds {self:?}")));
        }
        Ok(())
    }

    /// How far `(beta_bar, sigma, rho)` lies outside the box (zero inside).
    pub fn distance(&self, x: [f64; 3]) -> f64 {
        [self.beta_bar, self.sigma, self.rho]
            .iter()
            .zip(x)
            .map(|((lo, hi), v)| (lo - v).max(0.0) + (v - hi).max(0.0))
            .sum()
    }

    /// Position of each coordinate inside its interval, in `[0, 1]` (log
    /// scale for `beta_bar` and `sigma`).
    fn fractions(&self, x: [f64; 3]) -> [f64; 3] {
        let log_frac = |(lo, hi): (f64, f64), v: f64| (v.ln() - lo.ln()) / (hi.ln() - lo.ln());
        [
            log_frac(self.beta_bar, x[0]),
            log_frac(self.sigma, x[1]),
            (x[2] - self.rho.0) / (self.rho.1 - self.rho.0),
        ]
    }

    fn at_fractions(&self, f: [f64; 3]) -> [f64; 3] {
        let log_at = |(lo, hi): (f64, f64), t: f64| (lo.ln() + t * (hi.ln() - lo.ln())).exp();
        [
            log_at(self.beta_bar, f[0]),
            log_at(self.sigma, f[1]),
            self.rho.0 + f[2] * (self.rho.1 - self.rho.0),
        ]
    }

    /// Unconstrained coordinates: logit of each fraction.
    pub fn to_unconstrained(&self, x: [f64; 3]) -> [f64; 3] {
        let eps = 1e-9;
        self.fractions(x).map(|t| {
            let t = t.clamp(eps, 1.0 - eps);
            (t / (1.0 - t)).ln()
        })
    }

    pub fn from_unconstrained(&self, u: [f64; 3]) -> [f64; 3] {
        self.at_fractions(u.map(|v| 1.0 / (1.0 + (-v).exp())))
    }
}

fn with_free(base: &ModelParams, x: [f64; 3]) -> ModelParams {
    ModelParams {
        beta_bar: x[0],
        sigma: x[1],
        rho: x[2],
        ..*base
    }
}

/// `-(quasi log-likelihood)` at `(beta_bar, sigma, rho)` with every other
/// parameter taken from `base`. A failed filter run, a non-finite value or a
/// point outside `bounds` maps to [`PENALTY`] plus the distance outside the
/// box.
pub fn neg_quasi_loglik(problem: &Problem, base: &ModelParams, free: [f64; 3], bounds: &Bounds) -> f64 {
    let dist = bounds.distance(free);
    if dist > 0.0 || free.iter().any(|v| !v.is_finite()) {
        return PENALTY + if dist.is_finite() { dist } else { 1.0 };
    }
    match problem.loglik(&with_free(base, free)) {
        Ok(ll) if ll.is_finite() => -ll,
        Ok(_) => PENALTY,
        Err(e) => {
            log::debug!("objective failed at {free:?}: {e}");
            PENALTY
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub beta_bar: f64,
    pub sigma: f64,
    pub rho: f64,
    /// Echo of the fixed mean-reversion speed.
    pub kappa: f64,
    pub loglik: f64,
    pub start_loglik: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Names of the parameters that ended within 0.1% of a bound.
    pub at_bound: Vec<&'static str>,
}

impl FitResult {
    pub fn params(&self, base: &ModelParams) -> ModelParams {
        with_free(base, [self.beta_bar, self.sigma, self.rho])
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FitOptions {
    pub nelder_mead: NelderMeadOptions,
    pub exec: Exec,
}

/// Maximizes the quasi log-likelihood over `(beta_bar, sigma, rho)` inside
/// `bounds`, starting from `init`. `kappa` and all other parameters stay at
/// their `init` values. The start point is clamped into the box first.
pub fn fit(problem: &Problem, init: &ModelParams, bounds: &Bounds, opts: &FitOptions) -> Result<FitResult> {
    bounds.check()?;
    let start = {
        let clamp = |(lo, hi): (f64, f64), v: f64| v.clamp(lo, hi);
        [
            clamp(bounds.beta_bar, init.beta_bar),
            clamp(bounds.sigma, init.sigma),
            clamp(bounds.rho, init.rho),
        ]
    };
    let f0 = neg_quasi_loglik(problem, init, start, bounds);
    if f0 >= PENALTY {
        let e = problem.loglik(&with_free(init, start)).err();
        return Err(e.unwrap_or_else(|| Error::Config("objective is not finite at the start point".into())));
    }
    let objective = |u: &[f64]| {
        let x = bounds.from_unconstrained([u[0], u[1], u[2]]);
        neg_quasi_loglik(problem, init, x, bounds)
    };
    let u0 = bounds.to_unconstrained(start);
    let nm = minimize(objective, &u0, &opts.nelder_mead, opts.exec);
    let improved = nm.f < f0;
    let (x, f) = if improved {
        (bounds.from_unconstrained([nm.x[0], nm.x[1], nm.x[2]]), nm.f)
    } else {
        (start, f0)
    };
    let fr = bounds.fractions(x);
    let at_bound = ["beta_bar", "sigma", "rho"]
        .into_iter()
        .zip(fr)
        .filter(|(_, t)| *t < 1e-3 || *t > 1.0 - 1e-3)
        .map(|(name, _)| name)
        .collect();
    Ok(FitResult {
        beta_bar: x[0],
        sigma: x[1],
        rho: x[2],
        kappa: init.kappa,
        loglik: -f,
        start_loglik: -f0,
        evaluations: nm.evals + 1,
        iterations: nm.iterations,
        converged: nm.converged,
        at_bound,
    })
}
