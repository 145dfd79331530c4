use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};

use super::{AdjointArtifacts, FilterOutput, FilterStep, GaussianBelief, Retain, SmootherOutput};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_jittered, symmetrize};

fn need_full(out: &FilterOutput) -> Result<()> {
    if out.retain != Retain::Full {
        return Err(Error::Config(
            "smoothing with covariances needs a filter run that retained full covariances".into(),
        ));
    }
    Ok(())
}

fn artifacts(step: &FilterStep) -> &AdjointArtifacts {
    step.adjoint.as_ref().expect("retained filter step carries adjoint artifacts")
}

fn filtered_cov(step: &FilterStep) -> &DMatrix<f64> {
    step.filtered_cov.as_ref().expect("full filter step carries covariance")
}

/// Rauch-Tung-Striebel backward pass. Inverts the `dim x dim` predicted
/// covariance at every step; a singular one is regularized with a warning.
pub fn rts_smooth(out: &FilterOutput) -> Result<SmootherOutput> {
    need_full(out)?;
    let steps = &out.steps;
    let Some(last) = steps.last() else {
        return Ok(SmootherOutput {
            beliefs: Vec::new(),
            max_inverted: 0,
        });
    };
    let dim = last.filtered_mean.len();
    let mut beliefs = vec![last.filtered().expect("full filter step")];
    for k in (0..steps.len() - 1).rev() {
        let next = &steps[k + 1];
        let pf = filtered_cov(&steps[k]);
        let pp = next.predicted_cov.as_ref().expect("full filter step carries prediction");
        let f = &artifacts(next).jacobian;
        // G' = Pp^{-1} F Pf, solved on the unit-diagonal rescaling of Pp:
        // compartment and transmission-rate variances differ by many orders
        // of magnitude.
        let scale = pp.diagonal().map(|v| if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 });
        let scaled = DMatrix::from_fn(dim, dim, |i, j| pp[(i, j)] * scale[i] * scale[j]);
        let (chol, jitter) = cholesky_jittered(&scaled)
            .ok_or_else(|| Error::numerical(next.date, "predicted covariance cannot be factorized"))?;
        if jitter > 0.0 {
            log::warn!("{}: predicted covariance regularized by {jitter:.3e} for smoothing", next.date);
        }
        let mut rhs = f.apply(pf);
        for (i, mut row) in rhs.row_iter_mut().enumerate() {
            row *= scale[i];
        }
        let mut gt = chol.solve(&rhs);
        for (i, mut row) in gt.row_iter_mut().enumerate() {
            row *= scale[i];
        }
        let g = gt.transpose();
        let later = beliefs.last().expect("seeded with the last date");
        let mean = &steps[k].filtered_mean + &g * (&later.mean - &next.predicted_mean);
        let mut cov = pf + &g * (&later.cov - pp) * &gt;
        symmetrize(&mut cov);
        beliefs.push(GaussianBelief {
            date: steps[k].date,
            mean,
            cov,
        });
    }
    beliefs.reverse();
    Ok(SmootherOutput {
        beliefs,
        max_inverted: out.max_inverted.max(dim),
    })
}

/// `lambda~ = -H' S^{-1} y + C' lambda^` with `C = I - K H`.
fn adjoint_mean_step(art: &AdjointArtifacts, lam: &DVector<f64>) -> DVector<f64> {
    let u = &art.s_inv * &art.innovation + art.gain.tr_mul(lam);
    let mut out = lam.clone();
    for (r, k) in art.observed.iter().enumerate() {
        out[*k] -= u[r];
    }
    out
}

/// `Lambda~ = H' S^{-1} H + C' Lambda^ C`.
fn adjoint_cov_step(art: &AdjointArtifacts, lam: &DMatrix<f64>) -> DMatrix<f64> {
    let b = lam * &art.gain;
    let inner = art.gain.tr_mul(&b) + &art.s_inv;
    let mut out = lam.clone();
    for (r, k) in art.observed.iter().enumerate() {
        let mut row = out.row_mut(*k);
        row -= b.column(r).transpose();
    }
    for (r, k) in art.observed.iter().enumerate() {
        let mut col = out.column_mut(*k);
        col -= b.column(r);
    }
    for (a, ka) in art.observed.iter().enumerate() {
        for (c, kc) in art.observed.iter().enumerate() {
            out[(*ka, *kc)] += inner[(a, c)];
        }
    }
    symmetrize(&mut out);
    out
}

/// Modified Bryson-Frazier backward pass. Uses only the stored gains,
/// innovations, inverse innovation covariances (`m x m`) and Jacobians; no
/// state-sized matrix is inverted.
pub fn bf_smooth(out: &FilterOutput) -> Result<SmootherOutput> {
    need_full(out)?;
    let Some(last) = out.steps.last() else {
        return Ok(SmootherOutput {
            beliefs: Vec::new(),
            max_inverted: 0,
        });
    };
    let dim = last.filtered_mean.len();
    let mut lam = DVector::zeros(dim);
    let mut big = DMatrix::zeros(dim, dim);
    let mut beliefs = Vec::with_capacity(out.steps.len());
    for step in out.steps.iter().rev() {
        let pf = filtered_cov(step);
        let mean = &step.filtered_mean - pf * &lam;
        let mut cov = pf - pf * &big * pf;
        symmetrize(&mut cov);
        beliefs.push(GaussianBelief {
            date: step.date,
            mean,
            cov,
        });
        let art = artifacts(step);
        let lam_t = adjoint_mean_step(art, &lam);
        let big_t = adjoint_cov_step(art, &big);
        lam = art.jacobian.apply_transpose_vec(&lam_t);
        big = art.jacobian.transpose_congruence(&big_t);
    }
    beliefs.reverse();
    Ok(SmootherOutput {
        beliefs,
        max_inverted: out.max_inverted,
    })
}

/// Smoothed means of selected state indices.
#[derive(Debug, Clone)]
pub struct SmoothedRows {
    pub rows: Vec<usize>,
    pub dates: Vec<NaiveDate>,
    /// One vector per date, aligned with `rows`.
    pub means: Vec<DVector<f64>>,
    /// Largest matrix inverted by the filter and smoother together.
    pub max_inverted: usize,
}

/// Means-only Bryson-Frazier pass over the rows retained by the filter
/// (`Retain::Rows`), or over every index after a `Retain::Full` run. The
/// adjoint vector needs only the filtered covariance rows being reported.
pub fn bf_smooth_rows(out: &FilterOutput) -> Result<SmoothedRows> {
    let rows: Vec<usize> = match &out.retain {
        Retain::Rows(r) => r.clone(),
        Retain::Full => (0..out.init.dim()).collect(),
        Retain::Moments => {
            return Err(Error::Config(
                "smoothing needs a filter run that retained adjoint artifacts".into(),
            ))
        }
    };
    let dim = out.init.dim();
    let mut lam = DVector::zeros(dim);
    let mut means = Vec::with_capacity(out.steps.len());
    for step in out.steps.iter().rev() {
        let p_rows = match &step.filtered_rows {
            Some(p) => p.clone(),
            None => filtered_cov(step).select_rows(&rows),
        };
        let base = DVector::from_fn(rows.len(), |r, _| step.filtered_mean[rows[r]]);
        means.push(base - p_rows * &lam);
        let art = artifacts(step);
        lam = art.jacobian.apply_transpose_vec(&adjoint_mean_step(art, &lam));
    }
    means.reverse();
    Ok(SmoothedRows {
        rows,
        dates: out.dates(),
        means,
        max_inverted: out.max_inverted,
    })
}
