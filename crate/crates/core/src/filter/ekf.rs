use chrono::NaiveDate;
use nalgebra::{Cholesky, DMatrix, DVector};

use super::{
    AdjointArtifacts, FilterOutput, FilterStep, GaussianBelief, ObservationSeries, Retain, StateSpace,
    Transition,
};
use crate::error::{Error, Result};
use crate::linalg::{gaussian_log_density, repair_psd, Repair};

/// `x' = m(x)`, `P' = F P F' + V`, followed by PSD repair. Returns the
/// predicted belief and whether a repair shifted it.
pub fn predict(belief: &GaussianBelief, transition: &Transition, date: NaiveDate) -> Result<(GaussianBelief, Repair)> {
    let mut cov = transition.jacobian.congruence(&belief.cov);
    cov += &transition.noise;
    if cov.iter().any(|x| !x.is_finite()) || transition.mean.iter().any(|x| !x.is_finite()) {
        return Err(Error::numerical(date, "non-finite predicted moments"));
    }
    let repair = repair_psd(&mut cov);
    Ok((
        GaussianBelief {
            date,
            mean: transition.mean.clone(),
            cov,
        },
        repair,
    ))
}

/// Result of one measurement update.
#[derive(Debug)]
pub struct Update {
    pub belief: GaussianBelief,
    pub loglik: f64,
    pub gain: DMatrix<f64>,
    pub innovation: DVector<f64>,
    pub s_inv: DMatrix<f64>,
    /// State index of each observation row that was present.
    pub observed: Vec<usize>,
}

/// Linear update observing `x[observed[r]] + noise` for every row `r` whose
/// value is present. The covariance uses the Joseph form
/// `(I - KH) P (I - KH)' + K R K'`, expanded so that it costs one rank-`m`
/// product.
pub fn update(
    predicted: &GaussianBelief,
    obs: &[Option<f64>],
    observed: &[usize],
    meas_var: f64,
) -> Result<Update> {
    if obs.len() != observed.len() {
        return Err(Error::dim("observation vector", observed.len(), obs.len()));
    }
    let date = predicted.date;
    let dim = predicted.dim();
    let (rows, values): (Vec<usize>, Vec<f64>) = observed
        .iter()
        .zip(obs)
        .filter_map(|(k, v)| v.map(|v| (*k, v)))
        .unzip();
    let m = rows.len();
    if m == 0 {
        return Ok(Update {
            belief: predicted.clone(),
            loglik: 0.0,
            gain: DMatrix::zeros(dim, 0),
            innovation: DVector::zeros(0),
            s_inv: DMatrix::zeros(0, 0),
            observed: rows,
        });
    }
    let p = &predicted.cov;
    let innovation = DVector::from_fn(m, |r, _| values[r] - predicted.mean[rows[r]]);
    let pht = p.select_columns(&rows);
    let mut s = pht.select_rows(&rows);
    for r in 0..m {
        s[(r, r)] += meas_var;
    }
    let s_full = s.clone();
    let chol = Cholesky::new(s).ok_or_else(|| Error::numerical(date, "innovation covariance is not positive definite"))?;
    let s_inv = chol.inverse();
    let gain = &pht * &s_inv;
    let loglik = gaussian_log_density(&innovation, &chol);
    if !loglik.is_finite() {
        return Err(Error::numerical(date, "non-finite log-likelihood increment"));
    }
    let mean = &predicted.mean + &gain * &innovation;

    // Expanded: P - K H P - P H' K' + K S K' = P + W + W' with
    // W = (K S / 2 - P H') K'.
    let z = &gain * (s_full * 0.5) - &pht;
    let w = &z * gain.transpose();
    let mut cov = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        for i in j..dim {
            let v = p[(i, j)] + (w[(i, j)] + w[(j, i)]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    if cov.iter().any(|x| !x.is_finite()) {
        return Err(Error::numerical(date, "non-finite filtered covariance"));
    }
    Ok(Update {
        belief: GaussianBelief { date, mean, cov },
        loglik,
        gain,
        innovation,
        s_inv,
        observed: rows,
    })
}

/// Alternating predict/update over every observation date.
pub fn run_filter<M: StateSpace + ?Sized>(
    model: &M,
    obs: &ObservationSeries,
    init: &GaussianBelief,
    retain: Retain,
) -> Result<FilterOutput> {
    let dim = model.dim();
    if init.dim() != dim || init.cov.shape() != (dim, dim) {
        return Err(Error::dim("initial belief", dim, init.dim()));
    }
    if obs.len() != model.steps() {
        return Err(Error::dim("observation dates", model.steps(), obs.len()));
    }
    if let Some(first) = obs.dates.first() {
        if *first <= init.date {
            return Err(Error::Data(format!(
                "initial belief dated {} is not before the first observation {}",
                init.date, first
            )));
        }
    }
    let observed = model.observed();
    let meas_var = model.meas_var();
    let mut steps = Vec::with_capacity(obs.len());
    let mut current = init.clone();
    let mut total = 0.0;
    let mut max_inverted = 0;
    let mut repairs = 0;
    for (k, (date, values)) in obs.dates.iter().zip(&obs.values).enumerate() {
        let transition = model.transition(k, *date, &current.mean)?;
        let (predicted, repair) = predict(&current, &transition, *date)?;
        let up = update(&predicted, values, observed, meas_var)?;
        max_inverted = max_inverted.max(up.observed.len());
        if let Repair::Shifted(shift) = repair {
            repairs += 1;
            log::debug!("{date}: predicted covariance shifted by {shift:.3e}");
        }
        total += up.loglik;
        let filtered_var = up.belief.cov.diagonal();
        let adjoint = match retain {
            Retain::Moments => None,
            Retain::Full | Retain::Rows(_) => Some(AdjointArtifacts {
                jacobian: transition.jacobian,
                gain: up.gain,
                innovation: up.innovation,
                s_inv: up.s_inv,
                observed: up.observed,
            }),
        };
        let (predicted_cov, filtered_rows) = match &retain {
            Retain::Moments => (None, None),
            Retain::Full => (Some(predicted.cov), None),
            Retain::Rows(rows) => (None, Some(up.belief.cov.select_rows(rows))),
        };
        steps.push(FilterStep {
            date: *date,
            predicted_mean: predicted.mean,
            filtered_mean: up.belief.mean.clone(),
            filtered_var,
            predicted_cov,
            filtered_cov: matches!(retain, Retain::Full).then(|| up.belief.cov.clone()),
            filtered_rows,
            loglik: up.loglik,
            adjoint,
        });
        current = up.belief;
    }
    Ok(FilterOutput {
        init: init.clone(),
        steps,
        loglik: total,
        retain,
        max_inverted,
        repairs,
    })
}
