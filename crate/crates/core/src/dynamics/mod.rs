//! One-step transition of the stacked `[D, S, I, R, beta0]` state.
//!
//! Infections in each state follow a Poisson law whose rate is
//! `theta_S theta_M beta0 / p * I* S*`, where `I*` and `S*` are the infected and
//! susceptible counts after interstate travel and commuting. Deaths and
//! recoveries are binomial, and `beta0` follows a square-root process with
//! correlated shocks. This module gives the first two conditional moments of
//! that transition, its Jacobian, and an exact sampler ([`micro`]).

pub mod micro;

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut, DVector};

use crate::linalg::sym_sqrt;
use crate::mobility::{infection_product_cov, EffectiveMobility};
use crate::model::{Block, ModelParams};
use crate::policy::PolicyMultipliers;

pub use micro::{micro_step, sample_moments, MomentEstimate};

/// Everything the transition needs besides the state itself.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub params: &'a ModelParams,
    pub populations: &'a DVector<f64>,
    pub theta: &'a PolicyMultipliers,
    pub mobility: &'a EffectiveMobility,
}

impl StepContext<'_> {
    pub fn n(&self) -> usize {
        self.populations.len()
    }

    /// `theta_S theta_M / p`: the per-state factor that multiplies
    /// `beta0 (I*) (S*)` in the infection rate.
    fn rate_scale(&self) -> DVector<f64> {
        self.theta.transmission().component_div(self.populations)
    }
}

struct Blocks<'v> {
    n: usize,
    v: &'v DVector<f64>,
}

impl<'v> Blocks<'v> {
    fn new(v: &'v DVector<f64>) -> Self {
        Blocks { n: v.len() / 5, v }
    }

    fn get(&self, b: Block) -> DVector<f64> {
        self.v.rows(b as usize * self.n, self.n).into_owned()
    }
}

/// Expected new infections `c o beta0 o [(Id+Omega) I] o [(Id+Omega) S]`.
pub fn expected_infections(
    s: &DVector<f64>,
    i: &DVector<f64>,
    beta0: &DVector<f64>,
    ctx: &StepContext,
) -> DVector<f64> {
    let a_i = ctx.mobility.mix(i);
    let a_s = ctx.mobility.mix(s);
    ctx.rate_scale()
        .component_mul(beta0)
        .component_mul(&a_i)
        .component_mul(&a_s)
}

/// Unclamped conditional mean of the next stacked state.
pub fn mean_map(x: &DVector<f64>, ctx: &StepContext) -> DVector<f64> {
    let p = ctx.params;
    let b = Blocks::new(x);
    let (d, s, i, r, beta) = (
        b.get(Block::D),
        b.get(Block::S),
        b.get(Block::I),
        b.get(Block::R),
        b.get(Block::Beta),
    );
    let f = expected_infections(&s, &i, &beta, ctx);
    let n = b.n;
    let mut out = DVector::zeros(5 * n);
    out.rows_mut(0, n).copy_from(&(&d + &i * p.delta));
    out.rows_mut(n, n).copy_from(&(&s - &f));
    out.rows_mut(2 * n, n)
        .copy_from(&(&i * (1.0 - p.delta - p.gamma) + &f));
    out.rows_mut(3 * n, n).copy_from(&(&r + &i * p.gamma));
    out.rows_mut(4 * n, n).copy_from(
        &beta.map(|bt| bt + p.kappa * (p.beta_bar - bt) * p.dt),
    );
    out
}

/// Clamps a stacked state in place: negative `beta0` becomes zero; negative
/// `I` or `R` becomes zero with the difference taken from `S`; if `S` then
/// goes negative it is zeroed and the shortfall is taken from `R`, then `I`.
/// `D` is never touched, so per-state totals are preserved.
pub fn clamp_state(x: &mut DVector<f64>) {
    let n = x.len() / 5;
    for j in 0..n {
        let (di, ds, dr, db) = (2 * n + j, n + j, 3 * n + j, 4 * n + j);
        if x[db] < 0.0 {
            x[db] = 0.0;
        }
        for k in [di, dr] {
            if x[k] < 0.0 {
                x[ds] += x[k];
                x[k] = 0.0;
            }
        }
        if x[ds] < 0.0 {
            let mut short = -x[ds];
            x[ds] = 0.0;
            for k in [dr, di] {
                let take = short.min(x[k]);
                x[k] -= take;
                short -= take;
            }
        }
    }
}

/// Conditional mean of the next state, clamped.
pub fn conditional_mean(x: &DVector<f64>, ctx: &StepContext) -> DVector<f64> {
    let mut m = mean_map(x, ctx);
    clamp_state(&mut m);
    m
}

/// Conditional variance of next-day susceptibles,
/// `(c c') o D(...) + d(c o E[I* o S*])` with `c = theta beta0 / p`.
pub fn theta_cov(
    s: &DVector<f64>,
    i: &DVector<f64>,
    beta0: &DVector<f64>,
    ctx: &StepContext,
) -> DMatrix<f64> {
    let c = ctx.rate_scale().component_mul(beta0);
    let m = ctx.mobility;
    let prod = infection_product_cov(&m.w_com_t, &m.w_trav_t, s, i, ctx.params.tau_com, &m.omega)
        .expect("state and mobility dimensions agree");
    let mut out = DMatrix::from_fn(c.len(), c.len(), |a, b| c[a] * c[b] * prod[(a, b)]);
    let mean = expected_infections(s, i, beta0, ctx);
    for k in 0..c.len() {
        out[(k, k)] += mean[k];
    }
    out
}

/// Per-person covariance of `(d, -(d + r), r)`, the death/recovery
/// contribution to the `(D, I, R)` increments.
pub fn death_recovery_kernel(p: &ModelParams) -> [[f64; 3]; 3] {
    let (g, d) = (p.gamma, p.delta);
    let dd = d * (1.0 - d);
    let di = -d * (1.0 - d - g);
    let dr = -d * g;
    let ii = p.nu();
    let ir = -g * (1.0 - g - d);
    let rr = g - g * g;
    [[dd, di, dr], [di, ii, ir], [dr, ir, rr]]
}

/// Cross-state correlation of transmission-rate shocks: ones on the diagonal
/// and `rho` elsewhere.
pub fn shock_correlation(n: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |a, b| if a == b { 1.0 } else { rho })
}

/// The three independent noise sources of one transition: infections
/// (`Theta`), deaths/recoveries (scaled by `I`) and transmission-rate shocks.
#[derive(Debug, Clone)]
pub struct NoiseSources {
    n: usize,
    theta: DMatrix<f64>,
    infected: DVector<f64>,
    sqrt_beta: DVector<f64>,
    kernel: [[f64; 3]; 3],
    beta_scale: f64,
    rho: f64,
}

impl NoiseSources {
    /// Noise of the transition out of stacked state `x`. Negative
    /// compartments or rates are treated as zero.
    pub fn new(x: &DVector<f64>, ctx: &StepContext) -> Self {
        let b = Blocks::new(x);
        let pos = |v: DVector<f64>| v.map(|z| z.max(0.0));
        let s = pos(b.get(Block::S));
        let i = pos(b.get(Block::I));
        let beta = pos(b.get(Block::Beta));
        let p = ctx.params;
        NoiseSources {
            n: b.n,
            theta: theta_cov(&s, &i, &beta, ctx),
            infected: i,
            sqrt_beta: beta.map(f64::sqrt),
            kernel: death_recovery_kernel(p),
            beta_scale: p.sigma * p.sigma * p.dt,
            rho: p.rho,
        }
    }

    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    /// The full `5N x 5N` conditional covariance.
    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut v = DMatrix::zeros(5 * n, 5 * n);
        self.fill_infection(&mut v, &self.theta);
        self.fill_death_recovery(&mut v, &self.infected);
        self.fill_beta(&mut v, &self.sqrt_beta, &self.sqrt_beta);
        v
    }

    /// `Cov(X_t, X*_t)` for two systems whose matched standardized shocks have
    /// correlation `corr`: `corr * L_self * L_other'`, where each `L` stacks
    /// the symmetric square roots of the three sources.
    pub fn cross_covariance(&self, other: &NoiseSources, corr: f64) -> DMatrix<f64> {
        let n = self.n;
        let mut v = DMatrix::zeros(5 * n, 5 * n);
        let t = sym_sqrt(&self.theta) * sym_sqrt(&other.theta);
        self.fill_infection(&mut v, &t);
        let i_geo = self.infected.zip_map(&other.infected, |a, b| (a * b).sqrt());
        self.fill_death_recovery(&mut v, &i_geo);
        self.fill_beta(&mut v, &self.sqrt_beta, &other.sqrt_beta);
        v * corr
    }

    /// `(Cov(w, w* - w), Var(w* - w))` for the shocks `w` of this system and
    /// `w*` of `other`, paired as in [`Self::cross_covariance`] with
    /// correlation `1 - decorrelation`.
    ///
    /// Both are assembled from differences of the matched square roots rather
    /// than by subtracting covariances, so they vanish exactly for identical
    /// systems at zero decorrelation and keep full relative precision when
    /// the two systems nearly coincide.
    pub fn difference_covariances(&self, other: &NoiseSources, decorrelation: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.n;
        let u = decorrelation;
        let c = 1.0 - u;
        let fresh = (u * (2.0 - u)).sqrt();
        let mut cross = DMatrix::zeros(5 * n, 5 * n);
        let mut var = DMatrix::zeros(5 * n, 5 * n);

        // With roots L, L* of one source, w* - w = M xi + fresh L* xi' where
        // M = c (L* - L) - u L.
        let root = sym_sqrt(&self.theta);
        let root_s = sym_sqrt(&other.theta);
        let m = (&root_s - &root) * c - &root * u;
        self.fill_infection(&mut cross, &(&root * m.transpose()));
        let scaled = &root_s * fresh;
        self.fill_infection(&mut var, &(&m * m.transpose() + &scaled * scaled.transpose()));

        let a = self.infected.map(f64::sqrt);
        let a_s = other.infected.map(f64::sqrt);
        let m = (&a_s - &a) * c - &a * u;
        self.fill_death_recovery(&mut cross, &a.component_mul(&m));
        self.fill_death_recovery(&mut var, &(m.component_mul(&m) + other.infected.map(|i| i * u * (2.0 - u))));

        let m = (&other.sqrt_beta - &self.sqrt_beta) * c - &self.sqrt_beta * u;
        self.fill_beta(&mut cross, &self.sqrt_beta, &m);
        self.fill_beta(&mut var, &m, &m);
        let scaled = &other.sqrt_beta * fresh;
        self.fill_beta(&mut var, &scaled, &scaled);
        (cross, var)
    }

    fn fill_infection(&self, v: &mut DMatrix<f64>, t: &DMatrix<f64>) {
        let n = self.n;
        let (s0, i0) = (Block::S as usize * n, Block::I as usize * n);
        for a in 0..n {
            for b in 0..n {
                let x = t[(a, b)];
                v[(s0 + a, s0 + b)] += x;
                v[(s0 + a, i0 + b)] -= x;
                v[(i0 + a, s0 + b)] -= x;
                v[(i0 + a, i0 + b)] += x;
            }
        }
    }

    fn fill_death_recovery(&self, v: &mut DMatrix<f64>, scale: &DVector<f64>) {
        let n = self.n;
        let idx = [Block::D as usize * n, Block::I as usize * n, Block::R as usize * n];
        for j in 0..n {
            for (a, ra) in idx.iter().enumerate() {
                for (b, rb) in idx.iter().enumerate() {
                    v[(ra + j, rb + j)] += self.kernel[a][b] * scale[j];
                }
            }
        }
    }

    fn fill_beta(&self, v: &mut DMatrix<f64>, left: &DVector<f64>, right: &DVector<f64>) {
        let n = self.n;
        let o = Block::Beta as usize * n;
        for a in 0..n {
            for b in 0..n {
                let corr = if a == b { 1.0 } else { self.rho };
                v[(o + a, o + b)] += self.beta_scale * left[a] * corr * right[b];
            }
        }
    }
}

/// Conditional covariance of the next stacked state given `x`.
pub fn conditional_cov(x: &DVector<f64>, ctx: &StepContext) -> DMatrix<f64> {
    NoiseSources::new(x, ctx).covariance()
}

/// Jacobian of [`mean_map`], stored by its non-trivial pieces.
///
/// With `f` the expected-infection vector:
///
/// ```text
///        D    S          I                   R    beta
/// D  [   1    0          delta               0    0        ]
/// S  [   0    1 - Bs     -Bi                 0    -d(bb)   ]
/// I  [   0    Bs         (1-delta-gamma)+Bi  0    d(bb)    ]
/// R  [   0    0          gamma               1    0        ]
/// b  [   0    0          0                   0    1-kappa dt ]
/// ```
///
/// where `Bs = df/dS`, `Bi = df/dI` (dense `N x N`) and `bb = df/dbeta0`
/// (diagonal).
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionJacobian {
    n: usize,
    delta: f64,
    gamma: f64,
    beta_decay: f64,
    bs: DMatrix<f64>,
    bi: DMatrix<f64>,
    bb: DVector<f64>,
}

/// Jacobian of the conditional mean at `x`.
pub fn jacobian(x: &DVector<f64>, ctx: &StepContext) -> TransitionJacobian {
    let b = Blocks::new(x);
    let (s, i, beta) = (b.get(Block::S), b.get(Block::I), b.get(Block::Beta));
    let scale = ctx.rate_scale();
    let a_i = ctx.mobility.mix(&i);
    let a_s = ctx.mobility.mix(&s);
    let n = b.n;
    let mix = |row_scale: DVector<f64>| {
        let mut m = &ctx.mobility.omega + DMatrix::identity(n, n);
        for (k, mut row) in m.row_iter_mut().enumerate() {
            row *= row_scale[k];
        }
        m
    };
    let cb = scale.component_mul(&beta);
    let p = ctx.params;
    TransitionJacobian {
        n,
        delta: p.delta,
        gamma: p.gamma,
        beta_decay: 1.0 - p.kappa * p.dt,
        bs: mix(cb.component_mul(&a_i)),
        bi: mix(cb.component_mul(&a_s)),
        bb: scale.component_mul(&a_i).component_mul(&a_s),
    }
}

impl TransitionJacobian {
    pub fn dim(&self) -> usize {
        5 * self.n
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut j = DMatrix::zeros(5 * n, 5 * n);
        let (d, s, i, r, b) = (0, n, 2 * n, 3 * n, 4 * n);
        for k in 0..n {
            j[(d + k, d + k)] = 1.0;
            j[(d + k, i + k)] = self.delta;
            j[(s + k, s + k)] = 1.0;
            j[(i + k, i + k)] = 1.0 - self.delta - self.gamma;
            j[(r + k, i + k)] = self.gamma;
            j[(r + k, r + k)] = 1.0;
            j[(b + k, b + k)] = self.beta_decay;
            j[(s + k, b + k)] = -self.bb[k];
            j[(i + k, b + k)] = self.bb[k];
        }
        for a in 0..n {
            for c in 0..n {
                j[(s + a, s + c)] -= self.bs[(a, c)];
                j[(i + a, s + c)] += self.bs[(a, c)];
                j[(s + a, i + c)] -= self.bi[(a, c)];
                j[(i + a, i + c)] += self.bi[(a, c)];
            }
        }
        j
    }

    /// `J M` for a `5N x k` matrix `M`, in `O(N^2 k)`.
    pub fn apply(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        self.apply_add(m.as_view(), out.as_view_mut());
        out
    }

    /// `J' M` for a `5N x k` matrix `M`.
    pub fn apply_transpose(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        self.apply_transpose_add(m.as_view(), out.as_view_mut());
        out
    }

    /// `out += J M`.
    pub fn apply_add(&self, m: DMatrixView<f64>, mut out: DMatrixViewMut<f64>) {
        let n = self.n;
        assert_eq!(m.nrows(), 5 * n, "Jacobian row dimension");
        assert_eq!(out.shape(), m.shape(), "Jacobian output shape");
        let g = coupling(&self.bs, &self.bi, &m);
        let keep = 1.0 - self.delta - self.gamma;
        for c in 0..m.ncols() {
            for j in 0..n {
                let (d, s, i, r, b) = (m[(j, c)], m[(n + j, c)], m[(2 * n + j, c)], m[(3 * n + j, c)], m[(4 * n + j, c)]);
                let gj = g[(j, c)] + self.bb[j] * b;
                out[(j, c)] += d + self.delta * i;
                out[(n + j, c)] += s - gj;
                out[(2 * n + j, c)] += keep * i + gj;
                out[(3 * n + j, c)] += r + self.gamma * i;
                out[(4 * n + j, c)] += self.beta_decay * b;
            }
        }
    }

    /// `out += J' M`.
    pub fn apply_transpose_add(&self, m: DMatrixView<f64>, mut out: DMatrixViewMut<f64>) {
        let n = self.n;
        assert_eq!(m.nrows(), 5 * n, "Jacobian row dimension");
        assert_eq!(out.shape(), m.shape(), "Jacobian output shape");
        let diff = m.rows(2 * n, n) - m.rows(n, n);
        let hs = self.bs.tr_mul(&diff);
        let hi = self.bi.tr_mul(&diff);
        let keep = 1.0 - self.delta - self.gamma;
        for c in 0..m.ncols() {
            for j in 0..n {
                let (d, s, i, r, b) = (m[(j, c)], m[(n + j, c)], m[(2 * n + j, c)], m[(3 * n + j, c)], m[(4 * n + j, c)]);
                out[(j, c)] += d;
                out[(n + j, c)] += s + hs[(j, c)];
                out[(2 * n + j, c)] += self.delta * d + keep * i + self.gamma * r + hi[(j, c)];
                out[(3 * n + j, c)] += r;
                out[(4 * n + j, c)] += self.beta_decay * b + self.bb[j] * diff[(j, c)];
            }
        }
    }

    pub fn apply_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        let m = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
        self.apply(&m).column(0).into_owned()
    }

    pub fn apply_transpose_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        let m = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
        self.apply_transpose(&m).column(0).into_owned()
    }

    /// `J P J'` for symmetric `P`.
    pub fn congruence(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        let jp = self.apply(p);
        self.apply(&jp.transpose())
    }
}

/// `J* - J` for two Jacobians of the same model: only the infection
/// coupling (`Bs`, `Bi`, `bb`) can differ, so the product touches just the S
/// and I rows (or, transposed, the S, I and beta rows).
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianDifference {
    n: usize,
    bs: DMatrix<f64>,
    bi: DMatrix<f64>,
    bb: DVector<f64>,
}

impl TransitionJacobian {
    /// `self - base`. Both must come from the same parameters.
    pub fn minus(&self, base: &TransitionJacobian) -> JacobianDifference {
        assert!(
            self.n == base.n
                && self.delta == base.delta
                && self.gamma == base.gamma
                && self.beta_decay == base.beta_decay,
            "Jacobians of different models"
        );
        JacobianDifference {
            n: self.n,
            bs: &self.bs - &base.bs,
            bi: &self.bi - &base.bi,
            bb: &self.bb - &base.bb,
        }
    }
}

impl JacobianDifference {
    pub fn dim(&self) -> usize {
        5 * self.n
    }

    pub fn is_zero(&self) -> bool {
        self.bs.iter().chain(self.bi.iter()).chain(self.bb.iter()).all(|v| *v == 0.0)
    }

    /// `out += (J* - J) M`.
    pub fn apply_add(&self, m: DMatrixView<f64>, mut out: DMatrixViewMut<f64>) {
        let n = self.n;
        assert_eq!(m.nrows(), 5 * n, "Jacobian row dimension");
        assert_eq!(out.shape(), m.shape(), "Jacobian output shape");
        if self.is_zero() {
            return;
        }
        let g = coupling(&self.bs, &self.bi, &m);
        for c in 0..m.ncols() {
            for j in 0..n {
                let gj = g[(j, c)] + self.bb[j] * m[(4 * n + j, c)];
                out[(n + j, c)] -= gj;
                out[(2 * n + j, c)] += gj;
            }
        }
    }

    /// `out += (J* - J)' M`.
    pub fn apply_transpose_add(&self, m: DMatrixView<f64>, mut out: DMatrixViewMut<f64>) {
        let n = self.n;
        assert_eq!(m.nrows(), 5 * n, "Jacobian row dimension");
        assert_eq!(out.shape(), m.shape(), "Jacobian output shape");
        if self.is_zero() {
            return;
        }
        let diff = m.rows(2 * n, n) - m.rows(n, n);
        let hs = self.bs.tr_mul(&diff);
        let hi = self.bi.tr_mul(&diff);
        for c in 0..m.ncols() {
            for j in 0..n {
                out[(n + j, c)] += hs[(j, c)];
                out[(2 * n + j, c)] += hi[(j, c)];
                out[(4 * n + j, c)] += self.bb[j] * diff[(j, c)];
            }
        }
    }
}

/// `Bs M_S + Bi M_I` for a stacked `5N x k` matrix `M`.
fn coupling(bs: &DMatrix<f64>, bi: &DMatrix<f64>, m: &DMatrixView<f64>) -> DMatrix<f64> {
    let n = bs.nrows();
    let mut g = DMatrix::zeros(n, m.ncols());
    g.gemm(1.0, bs, &m.rows(n, n), 0.0);
    g.gemm(1.0, bi, &m.rows(2 * n, n), 1.0);
    g
}

/// Effective reproduction number per state,
/// `theta_M theta_S beta0 / (delta + gamma) * S / p`.
pub fn effective_r(
    beta0: &DVector<f64>,
    theta_m: &DVector<f64>,
    theta_s: &DVector<f64>,
    s: &DVector<f64>,
    populations: &DVector<f64>,
    params: &ModelParams,
) -> DVector<f64> {
    let r0 = beta0 / (params.delta + params.gamma);
    r0.component_mul(theta_m)
        .component_mul(theta_s)
        .component_mul(&s.component_div(populations))
}

#[cfg(test)]
mod tests;
