//! Exact one-step sampler of the individual-level model.
//!
//! Movers are drawn pair by pair from Poisson laws (travelers at rate
//! `W_trav,t[k,j] Z_k`, commuters at `W_com,t[k,j] Z_k` and weighted by the
//! time fraction `tau_com`). Infections are Poisson at the flow-adjusted rate,
//! deaths `B(I, delta)`, recoveries `B(I - d, gamma / (1 - delta))`, and the
//! transmission rate takes one Euler step of the square-root process with
//! equicorrelated shocks.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson, StandardNormal};

use super::StepContext;
use crate::exec::Exec;
use crate::model::LatentState;

fn poisson<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> f64 {
    if lambda > 0.0 {
        Poisson::new(lambda).expect("finite positive rate").sample(rng)
    } else {
        0.0
    }
}

fn binomial<R: Rng + ?Sized>(rng: &mut R, n: f64, p: f64) -> f64 {
    let n = n.max(0.0).round() as u64;
    if n == 0 || p <= 0.0 {
        return 0.0;
    }
    Binomial::new(n, p.min(1.0)).expect("valid binomial").sample(rng) as f64
}

/// Time-weighted net inflows of one compartment.
fn net_flows<R: Rng + ?Sized>(
    rng: &mut R,
    z: &DVector<f64>,
    w_com_t: &DMatrix<f64>,
    w_trav_t: &DMatrix<f64>,
    tau_com: f64,
) -> DVector<f64> {
    let n = z.len();
    let mut net = DVector::zeros(n);
    for (w, weight) in [(w_com_t, tau_com), (w_trav_t, 1.0)] {
        for k in 0..n {
            for j in 0..n {
                if k == j {
                    continue;
                }
                let moved = poisson(rng, w[(k, j)] * z[k]);
                net[j] += weight * moved;
                net[k] -= weight * moved;
            }
        }
    }
    net
}

/// Draws the next state. Compartments of `x` should be integer-valued.
pub fn micro_step<R: Rng + ?Sized>(x: &LatentState, ctx: &StepContext, rng: &mut R) -> LatentState {
    let p = ctx.params;
    let n = x.n();
    let m = ctx.mobility;
    let i_star = &x.i + net_flows(rng, &x.i, &m.w_com_t, &m.w_trav_t, p.tau_com);
    let s_star = &x.s + net_flows(rng, &x.s, &m.w_com_t, &m.w_trav_t, p.tau_com);
    let scale = ctx.rate_scale();

    let mut next = x.clone();
    let common: f64 = rng.sample(StandardNormal);
    for j in 0..n {
        let rate = scale[j] * x.beta0[j] * i_star[j].max(0.0) * s_star[j].max(0.0);
        let infected = poisson(rng, rate).min(x.s[j]);
        let died = binomial(rng, x.i[j], p.delta);
        let recovered = binomial(rng, x.i[j] - died, p.gamma / (1.0 - p.delta));
        next.s[j] = x.s[j] - infected;
        next.i[j] = x.i[j] + infected - died - recovered;
        next.r[j] = x.r[j] + recovered;
        next.d[j] = x.d[j] + died;

        let own: f64 = rng.sample(StandardNormal);
        let eps = (1.0 - p.rho).sqrt() * own + p.rho.sqrt() * common;
        let b = x.beta0[j];
        let drift = b + p.kappa * (p.beta_bar - b) * p.dt;
        next.beta0[j] = (drift + p.sigma * (p.dt * b.max(0.0)).sqrt() * eps).max(0.0);
    }
    next
}

/// Deterministic stream for replication `rep` of a seeded experiment.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Sample mean and covariance of a stacked-state draw, with Monte-Carlo
/// standard errors for every entry.
#[derive(Debug, Clone)]
pub struct MomentEstimate {
    pub reps: usize,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub mean_se: DVector<f64>,
    pub cov_se: DMatrix<f64>,
}

/// Number of independent RNG streams a Monte-Carlo experiment is split into.
/// Fixed so that results do not depend on the execution mode.
pub const MC_STREAMS: usize = 64;

/// Moments of `micro_step(x)` over `reps` replications.
pub fn sample_moments(
    x: &LatentState,
    ctx: &StepContext,
    reps: usize,
    seed: u64,
    exec: Exec,
) -> MomentEstimate {
    let dim = 5 * x.n();
    let chunks = exec.fold_chunks(
        reps,
        MC_STREAMS,
        Vec::new,
        |mut acc: Vec<DVector<f64>>, range| {
            let mut rng = replication_rng(seed, range.start as u64);
            for _ in range {
                acc.push(micro_step(x, ctx, &mut rng).to_vector());
            }
            acc
        },
    );
    let draws: Vec<DVector<f64>> = chunks.into_iter().flatten().collect();
    let count = draws.len() as f64;
    let mean = draws.iter().fold(DVector::zeros(dim), |a, d| a + d) / count;
    let centered: Vec<DVector<f64>> = draws.iter().map(|d| d - &mean).collect();

    let mut cov = DMatrix::zeros(dim, dim);
    for c in &centered {
        cov.ger(1.0, c, c, 1.0);
    }
    cov /= count - 1.0;

    let mut sq = DMatrix::<f64>::zeros(dim, dim);
    for c in &centered {
        for a in 0..dim {
            for b in 0..=a {
                let dev = c[a] * c[b] - cov[(a, b)];
                sq[(a, b)] += dev * dev;
            }
        }
    }
    let cov_se = DMatrix::from_fn(dim, dim, |a, b| {
        let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
        let v = sq[(hi, lo)] / (count - 1.0) / count;
        v.sqrt()
    });
    let mean_se = cov.diagonal().map(|v| (v / count).sqrt());
    MomentEstimate {
        reps: draws.len(),
        mean,
        cov,
        mean_se,
        cov_se,
    }
}
