//! Extended Kalman filter over daily death observations, with
//! Rauch-Tung-Striebel and Bryson-Frazier fixed-interval smoothers.
//!
//! The filter and smoothers work against the [`StateSpace`] trait: a
//! transition that returns a conditional mean, a Jacobian (as a [`LinearMap`])
//! and a process-noise covariance, plus the list of state indices that are
//! observed. [`EpidemicModel`] is the stacked `[D, S, I, R, beta0]` system;
//! the counterfactual module supplies a paired one, and [`LinearModel`] is a
//! plain linear-Gaussian system.

mod ekf;
mod smoother;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};

use crate::dynamics::{self, StepContext, TransitionJacobian};
use crate::error::{Error, Result};
use crate::linalg::symmetrize;
use crate::mobility::{EffectiveMobility, MobilitySpec};
use crate::model::{Block, Country, ModelParams};
use crate::policy::{multiplier_path, PolicyCalendar, PolicyMultipliers};

pub use ekf::{predict, run_filter, update, Update};
pub use smoother::{bf_smooth, bf_smooth_rows, rts_smooth, SmoothedRows};

/// Mean and covariance of the latent state on one date.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub date: NaiveDate,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn std_dev(&self, k: usize) -> f64 {
        self.cov[(k, k)].max(0.0).sqrt()
    }
}

/// A linear operator `R^dim -> R^dim` that can multiply from the left by
/// itself or by its transpose.
pub trait LinearMap: Send + Sync + std::fmt::Debug {
    fn dim(&self) -> usize;

    /// `F M`.
    fn apply(&self, m: &DMatrix<f64>) -> DMatrix<f64>;

    /// `F' M`.
    fn apply_transpose(&self, m: &DMatrix<f64>) -> DMatrix<f64>;

    fn apply_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        let m = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
        self.apply(&m).column(0).into_owned()
    }

    fn apply_transpose_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        let m = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
        self.apply_transpose(&m).column(0).into_owned()
    }

    /// `F P F'` for symmetric `P`.
    fn congruence(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        let fp = self.apply(p);
        let mut out = self.apply(&fp.transpose());
        symmetrize(&mut out);
        out
    }

    /// `F' P F` for symmetric `P`.
    fn transpose_congruence(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        let ftp = self.apply_transpose(p);
        let mut out = self.apply_transpose(&ftp.transpose());
        symmetrize(&mut out);
        out
    }
}

impl LinearMap for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self * m
    }

    fn apply_transpose(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.tr_mul(m)
    }
}

impl LinearMap for TransitionJacobian {
    fn dim(&self) -> usize {
        TransitionJacobian::dim(self)
    }

    fn apply(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        TransitionJacobian::apply(self, m)
    }

    fn apply_transpose(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        TransitionJacobian::apply_transpose(self, m)
    }
}

/// Linearized moments of one transition.
#[derive(Debug)]
pub struct Transition {
    pub mean: DVector<f64>,
    pub jacobian: Box<dyn LinearMap>,
    pub noise: DMatrix<f64>,
}

/// A discrete-time state-space with a partially observed state.
pub trait StateSpace: Sync {
    fn dim(&self) -> usize;

    /// Number of transitions (one per observation date).
    fn steps(&self) -> usize;

    /// Moments of the transition into step `step` from the filtered mean of
    /// the previous step.
    fn transition(&self, step: usize, date: NaiveDate, mean: &DVector<f64>) -> Result<Transition>;

    /// The state index measured by each observation row.
    fn observed(&self) -> &[usize];

    /// Variance of each observation error.
    fn meas_var(&self) -> f64;
}

/// Daily observation vectors; `None` marks a missing state-day.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl ObservationSeries {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<Vec<Option<f64>>>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::dim("observation rows", dates.len(), values.len()));
        }
        if let Some(w) = dates.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Data(format!("observation dates not increasing at {}", w[1])));
        }
        Ok(ObservationSeries { dates, values })
    }

    /// Fully observed series from dense vectors.
    pub fn complete(dates: Vec<NaiveDate>, values: &[DVector<f64>]) -> Result<Self> {
        let rows = values.iter().map(|v| v.iter().map(|x| Some(*x)).collect()).collect();
        ObservationSeries::new(dates, rows)
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

/// What the filter keeps for each date.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Retain {
    /// Means and marginal variances only; enough for the likelihood.
    Moments,
    /// Full predicted and filtered covariances plus the artifacts both
    /// smoothers need.
    Full,
    /// Selected rows of each filtered covariance plus the adjoint artifacts:
    /// enough for [`bf_smooth_rows`] on those indices.
    Rows(Vec<usize>),
}

/// Per-step quantities the adjoint (Bryson-Frazier) recursion consumes.
#[derive(Debug)]
pub struct AdjointArtifacts {
    pub jacobian: Box<dyn LinearMap>,
    /// Kalman gain, `dim x m`.
    pub gain: DMatrix<f64>,
    pub innovation: DVector<f64>,
    /// Inverse innovation covariance, `m x m`.
    pub s_inv: DMatrix<f64>,
    /// State index of each of the `m` observed rows.
    pub observed: Vec<usize>,
}

#[derive(Debug)]
pub struct FilterStep {
    pub date: NaiveDate,
    pub predicted_mean: DVector<f64>,
    pub filtered_mean: DVector<f64>,
    pub filtered_var: DVector<f64>,
    pub predicted_cov: Option<DMatrix<f64>>,
    pub filtered_cov: Option<DMatrix<f64>>,
    /// Retained rows of the filtered covariance (`Retain::Rows`).
    pub filtered_rows: Option<DMatrix<f64>>,
    pub loglik: f64,
    pub adjoint: Option<AdjointArtifacts>,
}

impl FilterStep {
    pub fn filtered(&self) -> Option<GaussianBelief> {
        self.filtered_cov.as_ref().map(|cov| GaussianBelief {
            date: self.date,
            mean: self.filtered_mean.clone(),
            cov: cov.clone(),
        })
    }

    pub fn predicted(&self) -> Option<GaussianBelief> {
        self.predicted_cov.as_ref().map(|cov| GaussianBelief {
            date: self.date,
            mean: self.predicted_mean.clone(),
            cov: cov.clone(),
        })
    }
}

#[derive(Debug)]
pub struct FilterOutput {
    pub init: GaussianBelief,
    pub steps: Vec<FilterStep>,
    pub loglik: f64,
    pub retain: Retain,
    /// Largest matrix factorized for inversion during the pass.
    pub max_inverted: usize,
    /// Number of PSD repairs that shifted a covariance.
    pub repairs: usize,
}

impl FilterOutput {
    pub fn dates(&self) -> Vec<NaiveDate> {
        self.steps.iter().map(|s| s.date).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SmootherOutput {
    pub beliefs: Vec<GaussianBelief>,
    pub max_inverted: usize,
}

/// Prior on the day before the first observation: `I0` = 100 per state with
/// standard deviation 1000, the rest of the population susceptible (so S and
/// I are perfectly negatively correlated), nobody dead or recovered, and
/// `beta0 = beta_bar` with standard deviation `beta_bar`.
pub fn initial_belief(country: &Country, params: &ModelParams, date: NaiveDate) -> GaussianBelief {
    initial_belief_with(country, params, date, 100.0, 1000.0)
}

pub fn initial_belief_with(
    country: &Country,
    params: &ModelParams,
    date: NaiveDate,
    i0: f64,
    i0_sd: f64,
) -> GaussianBelief {
    let n = country.len();
    let p = country.populations();
    let mut mean = DVector::zeros(5 * n);
    let mut cov = DMatrix::zeros(5 * n, 5 * n);
    let (s0, i0_at, b0) = (Block::S as usize * n, Block::I as usize * n, Block::Beta as usize * n);
    for j in 0..n {
        mean[s0 + j] = p[j] - i0;
        mean[i0_at + j] = i0;
        mean[b0 + j] = params.beta_bar;
        let v = i0_sd * i0_sd;
        cov[(s0 + j, s0 + j)] = v;
        cov[(i0_at + j, i0_at + j)] = v;
        cov[(s0 + j, i0_at + j)] = -v;
        cov[(i0_at + j, s0 + j)] = -v;
        cov[(b0 + j, b0 + j)] = params.beta_bar * params.beta_bar;
    }
    GaussianBelief { date, mean, cov }
}

/// The stacked `[D, S, I, R, beta0]` system with the D block observed.
///
/// The transition into date `t` uses the policy multipliers in force on
/// `t - 1`.
#[derive(Debug, Clone)]
pub struct EpidemicModel {
    params: ModelParams,
    populations: DVector<f64>,
    thetas: Vec<PolicyMultipliers>,
    mobility: Vec<EffectiveMobility>,
    observed: Vec<usize>,
}

impl EpidemicModel {
    pub fn new(
        country: &Country,
        params: &ModelParams,
        calendar: &PolicyCalendar,
        mobility: &MobilitySpec,
        dates: &[NaiveDate],
    ) -> Result<Self> {
        let n = country.len();
        if mobility.n() != n {
            return Err(Error::dim("mobility matrix size", n, mobility.n()));
        }
        let days: Vec<NaiveDate> = dates.iter().map(|d| *d - chrono::Duration::days(1)).collect();
        let thetas = multiplier_path(calendar, params, country, &days)?;
        let mobility = thetas
            .iter()
            .map(|t| EffectiveMobility::new(mobility, t, params))
            .collect::<Result<Vec<_>>>()?;
        Ok(EpidemicModel {
            params: *params,
            populations: country.populations().clone(),
            thetas,
            mobility,
            observed: Block::D.range(n).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.populations.len()
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn theta(&self, step: usize) -> &PolicyMultipliers {
        &self.thetas[step]
    }

    pub fn context(&self, step: usize) -> StepContext<'_> {
        StepContext {
            params: &self.params,
            populations: &self.populations,
            theta: &self.thetas[step],
            mobility: &self.mobility[step],
        }
    }
}

impl StateSpace for EpidemicModel {
    fn dim(&self) -> usize {
        5 * self.n()
    }

    fn steps(&self) -> usize {
        self.thetas.len()
    }

    fn transition(&self, step: usize, date: NaiveDate, mean: &DVector<f64>) -> Result<Transition> {
        let ctx = self.context(step);
        let next = dynamics::conditional_mean(mean, &ctx);
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::numerical(date, "non-finite predicted mean"));
        }
        Ok(Transition {
            mean: next,
            jacobian: Box::new(dynamics::jacobian(mean, &ctx)),
            noise: dynamics::conditional_cov(mean, &ctx),
        })
    }

    fn observed(&self) -> &[usize] {
        &self.observed
    }

    fn meas_var(&self) -> f64 {
        self.params.meas_sd * self.params.meas_sd
    }
}

/// `x_k = F x_{k-1} + offset + w_k`, `w_k ~ N(0, Q)`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub f: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub q: DMatrix<f64>,
    pub observed: Vec<usize>,
    pub meas_var: f64,
    pub steps: usize,
}

impl StateSpace for LinearModel {
    fn dim(&self) -> usize {
        self.f.nrows()
    }

    fn steps(&self) -> usize {
        self.steps
    }

    fn transition(&self, _step: usize, _date: NaiveDate, mean: &DVector<f64>) -> Result<Transition> {
        Ok(Transition {
            mean: &self.f * mean + &self.offset,
            jacobian: Box::new(self.f.clone()),
            noise: self.q.clone(),
        })
    }

    fn observed(&self) -> &[usize] {
        &self.observed
    }

    fn meas_var(&self) -> f64 {
        self.meas_var
    }
}

/// Filters a death panel through the epidemic model.
pub fn filter_panel(
    country: &Country,
    params: &ModelParams,
    calendar: &PolicyCalendar,
    mobility: &MobilitySpec,
    obs: &ObservationSeries,
    init: &GaussianBelief,
    retain: Retain,
) -> Result<FilterOutput> {
    let model = EpidemicModel::new(country, params, calendar, mobility, &obs.dates)?;
    run_filter(&model, obs, init, retain)
}

#[cfg(test)]
mod tests;
