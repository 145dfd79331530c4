//! Policy-adjusted mobility matrices, net-flow operators and flow covariances.
//!
//! Matrix convention: row = origin, column = destination, zero diagonal.
//! A net-flow operator `Omega` maps a compartment vector `Z` to the expected
//! net inflow `Omega Z`; its columns sum to zero because every person who
//! leaves one state arrives in another.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{Country, ModelParams};
use crate::policy::PolicyMultipliers;

/// Baseline daily travel and commute fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilitySpec {
    pub w_trav: DMatrix<f64>,
    pub w_com: DMatrix<f64>,
}

impl MobilitySpec {
    pub fn new(w_trav: DMatrix<f64>, w_com: DMatrix<f64>) -> Result<Self> {
        let n = w_trav.nrows();
        for (what, m) in [("travel matrix", &w_trav), ("commute matrix", &w_com)] {
            if m.nrows() != n {
                return Err(Error::dim(what, n, m.nrows()));
            }
            if m.ncols() != n {
                return Err(Error::dim(what, n, m.ncols()));
            }
        }
        Ok(MobilitySpec { w_trav, w_com })
    }

    /// Closed borders.
    pub fn zeros(n: usize) -> Self {
        MobilitySpec {
            w_trav: DMatrix::zeros(n, n),
            w_com: DMatrix::zeros(n, n),
        }
    }

    pub fn n(&self) -> usize {
        self.w_trav.nrows()
    }

    /// Flows among the states at `indices` only, in that order.
    pub fn select(&self, indices: &[usize]) -> MobilitySpec {
        let pick = |m: &DMatrix<f64>| m.select_rows(indices).select_columns(indices);
        MobilitySpec {
            w_trav: pick(&self.w_trav),
            w_com: pick(&self.w_com),
        }
    }

    pub fn violations(&self, country: &Country) -> Vec<String> {
        let mut out = Vec::new();
        if self.n() != country.len() {
            out.push(format!(
                "mobility matrices are {}x{} but the country has {} states",
                self.n(),
                self.n(),
                country.len()
            ));
            return out;
        }
        for (label, m) in [("travel", &self.w_trav), ("commute", &self.w_com)] {
            for (k, code) in country.codes().iter().enumerate() {
                let row = m.row(k);
                if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    out.push(format!("{label} fractions from {code} must be finite and >= 0"));
                }
                if m[(k, k)] != 0.0 {
                    out.push(format!("{label} matrix has a self-loop at {code}"));
                }
                let total: f64 = row.iter().sum();
                if total >= 1.0 {
                    out.push(format!("{label} fractions leaving {code} sum to {total} (must be < 1)"));
                }
            }
        }
        out
    }
}

fn check_len(what: &'static str, n: usize, v: &DVector<f64>) -> Result<()> {
    if v.len() == n {
        Ok(())
    } else {
        Err(Error::dim(what, n, v.len()))
    }
}

/// `tau_trav * W_trav * d(theta_T) * d(theta_S)`: inbound travel into a state
/// shrinks under its travel ban and stay-at-home order.
pub fn effective_travel(
    w_trav: &DMatrix<f64>,
    theta_t: &DVector<f64>,
    theta_s: &DVector<f64>,
    tau_trav: f64,
) -> Result<DMatrix<f64>> {
    let n = w_trav.ncols();
    check_len("theta_t", n, theta_t)?;
    check_len("theta_s", n, theta_s)?;
    let mut out = w_trav * tau_trav;
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= theta_t[j] * theta_s[j];
    }
    Ok(out)
}

/// `W_com * d(theta_S)`.
pub fn effective_commute(w_com: &DMatrix<f64>, theta_s: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = w_com.ncols();
    check_len("theta_s", n, theta_s)?;
    let mut out = w_com.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= theta_s[j];
    }
    Ok(out)
}

/// `W' - d(W 1)`.
pub fn omega_travel(w_trav_t: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = w_trav_t.transpose();
    for k in 0..out.nrows() {
        out[(k, k)] -= w_trav_t.row(k).sum();
    }
    out
}

/// `tau_com (W' - d(W 1))`.
pub fn omega_commute(w_com_t: &DMatrix<f64>, tau_com: f64) -> DMatrix<f64> {
    omega_travel(w_com_t) * tau_com
}

/// Covariance of the net inflows generated by independent Poisson movers,
/// `C(W, Z, tau) = tau^2 { -W o (Z 1') - W' o (1 Z') + d(W'Z + (W 1) o Z) }`.
pub fn flow_cov(w: &DMatrix<f64>, z: &DVector<f64>, tau: f64) -> Result<DMatrix<f64>> {
    let n = w.nrows();
    if w.ncols() != n {
        return Err(Error::dim("flow matrix columns", n, w.ncols()));
    }
    check_len("compartment vector", n, z)?;
    let inflow = w.tr_mul(z);
    let t2 = tau * tau;
    Ok(DMatrix::from_fn(n, n, |k, j| {
        let off = -(w[(k, j)] * z[k] + w[(j, k)] * z[j]);
        if k == j {
            t2 * (off + inflow[k] + w.row(k).sum() * z[k])
        } else {
            t2 * off
        }
    }))
}

/// Variance of `I* o S*`, the product of flow-perturbed infected and
/// susceptible counts, when infected and susceptible movers are independent.
pub fn infection_product_cov(
    w_com_t: &DMatrix<f64>,
    w_trav_t: &DMatrix<f64>,
    s: &DVector<f64>,
    i: &DVector<f64>,
    tau_com: f64,
    omega: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = s.len();
    if omega.nrows() != n || omega.ncols() != n {
        return Err(Error::dim("omega", n, omega.nrows()));
    }
    let ci = flow_cov(w_com_t, i, tau_com)? + flow_cov(w_trav_t, i, 1.0)?;
    let cs = flow_cov(w_com_t, s, tau_com)? + flow_cov(w_trav_t, s, 1.0)?;
    let a_s = s + omega * s;
    let a_i = i + omega * i;
    Ok(DMatrix::from_fn(n, n, |k, j| {
        ci[(k, j)] * cs[(k, j)] + ci[(k, j)] * a_s[k] * a_s[j] + cs[(k, j)] * a_i[k] * a_i[j]
    }))
}

/// Mobility in force on one day.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveMobility {
    pub w_trav_t: DMatrix<f64>,
    pub w_com_t: DMatrix<f64>,
    /// `Omega_trav + Omega_com`.
    pub omega: DMatrix<f64>,
}

impl EffectiveMobility {
    pub fn new(spec: &MobilitySpec, theta: &PolicyMultipliers, params: &ModelParams) -> Result<Self> {
        let w_trav_t = effective_travel(&spec.w_trav, &theta.theta_t, &theta.theta_s, params.tau_trav)?;
        let w_com_t = effective_commute(&spec.w_com, &theta.theta_s)?;
        let omega = omega_travel(&w_trav_t) + omega_commute(&w_com_t, params.tau_com);
        Ok(EffectiveMobility {
            w_trav_t,
            w_com_t,
            omega,
        })
    }

    pub fn closed(n: usize) -> Self {
        EffectiveMobility {
            w_trav_t: DMatrix::zeros(n, n),
            w_com_t: DMatrix::zeros(n, n),
            omega: DMatrix::zeros(n, n),
        }
    }

    pub fn n(&self) -> usize {
        self.omega.nrows()
    }

    /// `(Id + Omega) z`.
    pub fn mix(&self, z: &DVector<f64>) -> DVector<f64> {
        z + &self.omega * z
    }
}
