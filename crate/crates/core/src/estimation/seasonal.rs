use chrono::{Datelike, NaiveDate};
use nalgebra::DMatrix;

use super::DeathPanel;
use crate::error::{Error, Result};

/// Additive split of a daily series into trend, weekly seasonal and
/// remainder.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub remainder: Vec<f64>,
}

/// A weekly-seasonality decomposition of a daily series.
pub trait SeasonalDecomposer: Sync {
    fn decompose(&self, dates: &[NaiveDate], series: &[f64]) -> Decomposition;
}

/// Trend is a centered 7-day moving average (ends padded by repeating the
/// first and last values); the seasonal term is the day-of-week mean of the
/// detrended series, recentered so the seven means sum to zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct WeeklyMeans;

impl SeasonalDecomposer for WeeklyMeans {
    fn decompose(&self, dates: &[NaiveDate], series: &[f64]) -> Decomposition {
        let n = series.len();
        let at = |k: isize| series[k.clamp(0, n as isize - 1) as usize];
        let trend: Vec<f64> = (0..n as isize)
            .map(|t| (t - 3..=t + 3).map(at).sum::<f64>() / 7.0)
            .collect();
        let mut sums = [0.0; 7];
        let mut counts = [0usize; 7];
        for ((d, x), tr) in dates.iter().zip(series).zip(&trend) {
            let k = d.weekday().num_days_from_monday() as usize;
            sums[k] += x - tr;
            counts[k] += 1;
        }
        let mut means = [0.0; 7];
        for k in 0..7 {
            if counts[k] > 0 {
                means[k] = sums[k] / counts[k] as f64;
            }
        }
        let centre = means.iter().sum::<f64>() / 7.0;
        let seasonal: Vec<f64> = dates
            .iter()
            .map(|d| means[d.weekday().num_days_from_monday() as usize] - centre)
            .collect();
        let remainder = (0..n).map(|t| series[t] - trend[t] - seasonal[t]).collect();
        Decomposition {
            trend,
            seasonal,
            remainder,
        }
    }
}

/// Seasonally adjusts with [`WeeklyMeans`].
pub fn seasonal_adjust(panel: &DeathPanel) -> Result<DeathPanel> {
    seasonal_adjust_with(panel, &WeeklyMeans)
}

/// Removes the weekly component from each state's daily increments, floors
/// the result at zero, re-cumulates from the first observed level, and
/// rescales the increments so each state's final total is unchanged.
pub fn seasonal_adjust_with(panel: &DeathPanel, decomposer: &dyn SeasonalDecomposer) -> Result<DeathPanel> {
    let t = panel.len();
    if t < 21 {
        return Err(Error::Data(format!(
            "seasonal adjustment needs at least 21 days of data, got {t}"
        )));
    }
    let raw = &panel.raw;
    let mut adjusted = DMatrix::zeros(t, panel.n());
    let inc_dates = &panel.dates[1..];
    for j in 0..panel.n() {
        let col = raw.column(j);
        let inc: Vec<f64> = (1..t).map(|k| col[k] - col[k - 1]).collect();
        let parts = decomposer.decompose(inc_dates, &inc);
        let mut adj: Vec<f64> = inc
            .iter()
            .zip(&parts.seasonal)
            .map(|(x, s)| (x - s).max(0.0))
            .collect();
        let target = col[t - 1] - col[0];
        let got: f64 = adj.iter().sum();
        if got > 0.0 {
            adj.iter_mut().for_each(|a| *a *= target / got);
        }
        adjusted[(0, j)] = col[0];
        for k in 1..t {
            adjusted[(k, j)] = adjusted[(k - 1, j)] + adj[k - 1];
        }
        adjusted[(t - 1, j)] = col[t - 1];
    }
    Ok(DeathPanel {
        adjusted: Some(adjusted),
        ..panel.clone()
    })
}
