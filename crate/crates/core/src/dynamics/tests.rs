use super::*;
use crate::exec::Exec;
use crate::mobility::{EffectiveMobility, MobilitySpec};
use crate::model::LatentState;
use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn state(n: usize, rng: &mut ChaCha8Rng) -> (DVector<f64>, DVector<f64>) {
    let pops = DVector::from_fn(n, |_, _| rng.random_range(5e5..5e6));
    let i = DVector::from_fn(n, |k, _| rng.random_range(10.0..0.02 * pops[k]));
    let r = DVector::from_fn(n, |k, _| rng.random_range(0.0..0.05 * pops[k]));
    let d = DVector::from_fn(n, |_, _| rng.random_range(0.0..500.0));
    let s = &pops - &i - &r - &d;
    let beta = DVector::from_fn(n, |_, _| rng.random_range(0.02..0.4));
    let x = LatentState { d, s, i, r, beta0: beta };
    (x.to_vector(), pops)
}

fn random_mobility(n: usize, rng: &mut ChaCha8Rng) -> MobilitySpec {
    let mut gen = |scale: f64| {
        let mut w = DMatrix::from_fn(n, n, |_, _| rng.random_range(0.0..scale));
        w.fill_diagonal(0.0);
        w
    };
    let w_trav = gen(0.004);
    let w_com = gen(0.02);
    MobilitySpec::new(w_trav, w_com).unwrap()
}

fn random_theta(n: usize, p: &ModelParams, rng: &mut ChaCha8Rng) -> PolicyMultipliers {
    let mut pick = |low: f64| DVector::from_fn(n, |_, _| if rng.random_bool(0.5) { low } else { 1.0 });
    PolicyMultipliers {
        theta_m: pick(p.theta_m_low),
        theta_s: pick(p.theta_s_low),
        theta_t: pick(p.theta_t_low),
    }
}

fn single(pop: f64, s: f64, i: f64, beta: f64) -> (DVector<f64>, DVector<f64>) {
    let x = LatentState {
        d: DVector::from_element(1, 0.0),
        s: DVector::from_element(1, s),
        i: DVector::from_element(1, i),
        r: DVector::from_element(1, pop - s - i),
        beta0: DVector::from_element(1, beta),
    };
    (x.to_vector(), DVector::from_element(1, pop))
}

#[test]
fn no_infected_means_no_compartment_motion() {
    let p = ModelParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut x, pops) = state(3, &mut rng);
    x.rows_mut(6, 3).fill(0.0);
    let theta = PolicyMultipliers::ones(3);
    let mob = EffectiveMobility::new(&random_mobility(3, &mut rng), &theta, &p).unwrap();
    let ctx = StepContext { params: &p, populations: &pops, theta: &theta, mobility: &mob };
    let m = conditional_mean(&x, &ctx);
    assert_eq!(m.rows(0, 12), x.rows(0, 12));
    for k in 0..3 {
        let b = x[12 + k];
        assert!((m[12 + k] - (b + p.kappa * (p.beta_bar - b))).abs() < 1e-15);
    }
}

#[test]
fn single_state_infection_rate() {
    let p = ModelParams::default();
    let (x, pops) = single(1e6, 8e5, 1e3, 0.16);
    let theta = PolicyMultipliers::ones(1);
    let mob = EffectiveMobility::closed(1);
    let ctx = StepContext { params: &p, populations: &pops, theta: &theta, mobility: &mob };
    let m = conditional_mean(&x, &ctx);
    let new = 0.16 * (8e5 / 1e6) * 1e3;
    assert!((m[1] - (8e5 - new)).abs() < 1e-9);
    assert!((m[2] - (1e3 * (1.0 - p.delta - p.gamma) + new)).abs() < 1e-9);
}

#[test]
fn mean_preserves_state_totals() {
    let p = ModelParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for n in [1, 2, 5] {
        let (x, pops) = state(n, &mut rng);
        let theta = random_theta(n, &p, &mut rng);
        let mob = EffectiveMobility::new(&random_mobility(n, &mut rng), &theta, &p).unwrap();
        let ctx = StepContext { params: &p, populations: &pops, theta: &theta, mobility: &mob };
        let before = LatentState::from_vector(&x).unwrap().totals();
        let after = LatentState::from_vector(&conditional_mean(&x, &ctx)).unwrap().totals();
        for k in 0..n {
            assert!(((after[k] - before[k]) / before[k]).abs() < 1e-9);
        }
    }
}

#[test]
fn clamp_moves_shortfall_into_susceptibles() {
    let mut v = DVector::from_vec(vec![5.0, 100.0, -10.0, -3.0, -0.1]);
    clamp_state(&mut v);
    assert_eq!(v.as_slice(), &[5.0, 87.0, 0.0, 0.0, 0.0]);
    let mut v = DVector::from_vec(vec![5.0, -10.0, 4.0, 20.0, 0.1]);
    clamp_state(&mut v);
    assert_eq!(v.as_slice(), &[5.0, 0.0, 4.0, 10.0, 0.1]);
}

#[test]
fn theta_reduces_to_poisson_variance_without_mobility() {
    let p = ModelParams::default();
    let pops = DVector::from_vec(vec![1e6, 2e6]);
    let s = DVector::from_vec(vec![9e5, 1.5e6]);
    let i = DVector::from_vec(vec![1e3, 4e2]);
    let beta = DVector::from_vec(vec![0.2, 0.1]);
    let theta = PolicyMultipliers {
        theta_m: DVector::from_vec(vec![0.58, 1.0]),
        ..PolicyMultipliers::ones(2)
    };
    let mob = EffectiveMobility::closed(2);
    let ctx = StepContext { params: &p, populations: &pops, theta: &theta, mobility: &mob };
    let t = theta_cov(&s, &i, &beta, &ctx);
    let want = [0.58 * 0.2 * 0.9 * 1e3, 0.1 * 0.75 * 4e2];
    assert!((t[(0, 0)] - want[0]).abs() < 1e-9);
    assert!((t[(1, 1)] - want[1]).abs() < 1e-9);
    assert_eq!(t[(0, 1)], 0.0);
    let zero = theta_cov(&s, &DVector::zeros(2), &beta, &ctx);
    assert_eq!(zero, DMatrix::zeros(2, 2));
}

/// Exact Var(d + r) per infected person by enumerating the binomial death count.
fn nu_by_enumeration(p: &ModelParams, infected: u64) -> f64 {
    let q = p.gamma / (1.0 - p.delta);
    let n = infected as f64;
    let mut log_pmf = n * (1.0 - p.delta).ln();
    let (mut m1, mut m2) = (0.0, 0.0);
    for d in 0..=infected {
        if d > 0 {
            let k = d as f64;
            log_pmf += ((n - k + 1.0) / k).ln() + (p.delta / (1.0 - p.delta)).ln();
        }
        let w = log_pmf.exp();
        let k = d as f64;
        let cond_mean = k + (n - k) * q;
        let cond_var = (n - k) * q * (1.0 - q);
        m1 += w * cond_mean;
        m2 += w * (cond_var + cond_mean * cond_mean);
    }
    (m2 - m1 * m1) / n
}

#[test]
fn nu_matches_enumeration() {
    let p = ModelParams::default();
    let brute = nu_by_enumeration(&p, 400);
    assert!((p.nu() - brute).abs() < 1e-12, "{} vs {}", p.nu(), brute);
    // Table-2 arithmetic: (1 - delta - gamma)(delta + gamma).
    assert!((p.nu() - 0.066_669_2).abs() < 1e-7);
    let other = ModelParams { gamma: 0.1, delta: 0.0007, ..p };
    assert!((other.nu() - nu_by_enumeration(&other, 300)).abs() < 1e-12);
}

#[test]
fn covariance_without_infected_is_beta_block_only() {
    let p = ModelParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut x, pops) = state(3, &mut rng);
    x.rows_mut(6, 3).fill(0.0);
    let theta = PolicyMultipliers::ones(3);
    let mob = EffectiveMobility::closed(3);
    let ctx = StepContext { params: &p, populations: &pops, theta: &theta, mobility: &mob };
    let v = conditional_cov(&x, &ctx);
    assert_eq!(v.view((0, 0), (12, 15)).amax(), 0.0);
    for a in 0..3 {
        for b in 0..3 {
            let c = if a == b { 1.0 } else { p.rho };
            let want = p.sigma * p.sigma * x[12 + a].sqrt() * c * x[12 + b].sqrt();
            assert!((v[(12 + a, 12 + b)] - want).abs() < 1e-18);
        }
    }
}

/// Covariance of the single-state `[D, S, I, R, beta]` increment written out
/// term by term.
fn single_state_cov(p: &ModelParams, s: f64, i: f64, beta: f64, pop: f64, theta: f64) -> DMatrix<f64> {
    let (g, d) = (p.gamma, p.delta);
    let lam = theta * beta * s / pop;
    let nu = ((1.0 - d - g).powi(2) * d + g * (1.0 - d - g)) / (1.0 - d);
    let mut m = DMatrix::from_row_slice(
        5,
        5,
        &[
            d * (1.0 - d), 0.0, -d * (1.0 - d - g), -d * g, 0.0,
            0.0, lam, -lam, 0.0, 0.0,
            -d * (1.0 - d - g), -lam, lam + nu, -g * (1.0 - g - d), 0.0,
            -d * g, 0.0, -g * (1.0 - g - d), g - g * g, 0.0,
            0.0, 0.0, 0.0, 0.0, 0.0,
        ],
    ) * i;
    m[(4, 4)] = p.sigma * p.sigma * p.dt * beta;
    m
}

#[test]
fn zero_mobility_splits_into_independent_states() {
    let p = ModelParams { rho: 0.0, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 3;
    let (x, pops) = state(n, &mut rng);
    let theta = random_theta(n, &p, &mut rng);
    let mob = EffectiveMobility::closed(n);
    let ctx = StepContext { params: &p, populations: &pops, theta: &theta, mobility: &mob };
    let v = conditional_cov(&x, &ctx);
    let m = conditional_mean(&x, &ctx);
    let xs = LatentState::from_vector(&x).unwrap();
    let tr = theta.transmission();
    for j in 0..n {
        let want = single_state_cov(&p, xs.s[j], xs.i[j], xs.beta0[j], pops[j], tr[j]);
        let idx: Vec<usize> = (0..5).map(|b| b * n + j).collect();
        for a in 0..5 {
            for b in 0..5 {
                let got = v[(idx[a], idx[b])];
                assert!((got - want[(a, b)]).abs() <= 1e-9 * want[(a, b)].abs().max(1e-6), "state {j} ({a},{b})");
            }
        }
        // Same state through a one-state model.
        let (xj, pj) = single(pops[j], xs.s[j], xs.i[j], xs.beta0[j]);
        let mut xj = xj;
        xj[0] = xs.d[j];
        xj[3] = xs.r[j];
        let th = PolicyMultipliers {
            theta_m: DVector::from_element(1, theta.theta_m[j]),
            theta_s: DVector::from_element(1, theta.theta_s[j]),
            theta_t: DVector::from_element(1, theta.theta_t[j]),
        };
        let closed = EffectiveMobility::closed(1);
        let cj = StepContext { params: &p, populations: &pj, theta: &th, mobility: &closed };
        let mj = conditional_mean(&xj, &cj);
        let vj = conditional_cov(&xj, &cj);
        for a in 0..5 {
            assert_eq!(m[idx[a]], mj[a]);
            for b in 0..5 {
                assert_eq!(v[(idx[a], idx[b])], vj[(a, b)]);
            }
        }
    }
    for a in 0..5 * n {
        for b in 0..5 * n {
            if a % n != b % n {
                assert_eq!(v[(a, b)], 0.0);
            }
        }
    }
}

#[test]
fn covariance_is_symmetric_psd() {
    let p = ModelParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in [1, 2, 5] {
        let (x, pops) = state(n, &mut rng);
        let theta = random_theta(n, &p, &mut rng);
        let mob = EffectiveMobility::new(&random_mobility(n, &mut rng), &theta, &p).unwrap();
        let ctx = StepContext { params: &p, populations: &pops, theta: &theta, mobility: &mob };
        let v = conditional_cov(&x, &ctx);
        assert!((&v - v.transpose()).amax() <= 1e-12 * v.amax());
        let min = SymmetricEigen::new(v.clone()).eigenvalues.min();
        assert!(min >= -1e-8 * v.trace(), "min eigenvalue {min}");
    }
}

#[test]
fn cross_covariance_of_identical_twins_is_scaled_covariance() {
    let p = ModelParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (x, pops) = state(3, &mut rng);
    let theta = random_theta(3, &p, &mut rng);
    let mob = EffectiveMobility::new(&random_mobility(3, &mut rng), &theta, &p).unwrap();
    let ctx = StepContext { params: &p, populations: &pops, theta: &theta, mobility: &mob };
    let src = NoiseSources::new(&x, &ctx);
    let v = src.covariance();
    let c = src.cross_covariance(&src, 0.9);
    assert!((&c - &v * 0.9).amax() <= 1e-9 * v.amax());
}

#[test]
fn cross_covariance_keeps_joint_matrix_psd() {
    let p = ModelParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 3;
    let (x, pops) = state(n, &mut rng);
    let mob_spec = random_mobility(n, &mut rng);
    let t1 = random_theta(n, &p, &mut rng);
    let t2 = random_theta(n, &p, &mut rng);
    let m1 = EffectiveMobility::new(&mob_spec, &t1, &p).unwrap();
    let m2 = EffectiveMobility::new(&mob_spec, &t2, &p).unwrap();
    let c1 = StepContext { params: &p, populations: &pops, theta: &t1, mobility: &m1 };
    let c2 = StepContext { params: &p, populations: &pops, theta: &t2, mobility: &m2 };
    let a = NoiseSources::new(&x, &c1);
    let b = NoiseSources::new(&x, &c2);
    let corr = 1.0 - 1e-6;
    let cross = a.cross_covariance(&b, corr);
    let mut joint = DMatrix::zeros(10 * n, 10 * n);
    joint.view_mut((0, 0), (5 * n, 5 * n)).copy_from(&a.covariance());
    joint.view_mut((5 * n, 5 * n), (5 * n, 5 * n)).copy_from(&b.covariance());
    joint.view_mut((0, 5 * n), (5 * n, 5 * n)).copy_from(&cross);
    joint.view_mut((5 * n, 0), (5 * n, 5 * n)).copy_from(&cross.transpose());
    let min = SymmetricEigen::new(joint.clone()).eigenvalues.min();
    assert!(min >= -1e-8 * joint.trace(), "min eigenvalue {min}");
}

#[test]
fn jacobian_at_disease_free_state() {
    let p = ModelParams::default();
    let pops = DVector::from_vec(vec![1e6, 3e6]);
    let x = LatentState {
        d: DVector::zeros(2),
        s: pops.clone(),
        i: DVector::zeros(2),
        r: DVector::zeros(2),
        beta0: DVector::from_vec(vec![0.16, 0.2]),
    }
    .to_vector();
    let theta = PolicyMultipliers::ones(2);
    let mob = EffectiveMobility::closed(2);
    let ctx = StepContext { params: &p, populations: &pops, theta: &theta, mobility: &mob };
    let j = jacobian(&x, &ctx).to_dense();
    for row in 2..6 {
        for col in 8..10 {
            assert_eq!(j[(row, col)], 0.0);
        }
    }
    for k in 8..10 {
        assert_eq!(j[(k, k)], 1.0 - p.kappa);
    }
}

#[test]
fn single_state_jacobian_by_hand() {
    let p = ModelParams::default();
    let (x, pops) = single(1e6, 7e5, 2e3, 0.3);
    let theta = PolicyMultipliers::ones(1);
    let mob = EffectiveMobility::closed(1);
    let ctx = StepContext { params: &p, populations: &pops, theta: &theta, mobility: &mob };
    let j = jacobian(&x, &ctx).to_dense();
    let di_ds = 0.3 * 2e3 / 1e6;
    let di_di = 0.3 * 7e5 / 1e6;
    assert!((j[(2, 1)] - di_ds).abs() < 1e-15);
    assert!((j[(2, 2)] - (1.0 - p.delta - p.gamma + di_di)).abs() < 1e-15);
    assert!((j[(1, 1)] - (1.0 - di_ds)).abs() < 1e-15);
    assert!((j[(2, 4)] - 7e5 * 2e3 / 1e6).abs() < 1e-9);
}

/// Central finite differences of `mean_map`, column by column.
fn fd_jacobian(x: &DVector<f64>, ctx: &StepContext) -> DMatrix<f64> {
    let dim = x.len();
    let mut out = DMatrix::zeros(dim, dim);
    for k in 0..dim {
        let h = 1e-5 * x[k].abs().max(1.0);
        let mut up = x.clone();
        let mut dn = x.clone();
        up[k] += h;
        dn[k] -= h;
        let col = (mean_map(&up, ctx) - mean_map(&dn, ctx)) / (2.0 * h);
        out.set_column(k, &col);
    }
    out
}

#[test]
fn jacobian_matches_finite_differences() {
    let p = ModelParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for trial in 0..30 {
        let n = [1, 2, 5][trial % 3];
        let (x, pops) = state(n, &mut rng);
        let theta = random_theta(n, &p, &mut rng);
        let mob = EffectiveMobility::new(&random_mobility(n, &mut rng), &theta, &p).unwrap();
        let ctx = StepContext { params: &p, populations: &pops, theta: &theta, mobility: &mob };
        let an = jacobian(&x, &ctx).to_dense();
        let fd = fd_jacobian(&x, &ctx);
        for (a, f) in an.column_iter().zip(fd.column_iter()) {
            let scale = a.amax().max(1e-300);
            worst = worst.max((a - f).amax() / scale);
        }
    }
    assert!(worst < 1e-6, "max relative error {worst}");
}

#[test]
fn structured_products_match_dense() {
    let p = ModelParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 4;
    let (x, pops) = state(n, &mut rng);
    let theta = random_theta(n, &p, &mut rng);
    let mob = EffectiveMobility::new(&random_mobility(n, &mut rng), &theta, &p).unwrap();
    let ctx = StepContext { params: &p, populations: &pops, theta: &theta, mobility: &mob };
    let jac = jacobian(&x, &ctx);
    let dense = jac.to_dense();
    let m = DMatrix::from_fn(5 * n, 7, |_, _| rng.random_range(-1.0..1.0));
    let rel = |a: DMatrix<f64>, b: DMatrix<f64>| (&a - &b).amax() / b.amax();
    assert!(rel(jac.apply(&m), &dense * &m) < 1e-13);
    assert!(rel(jac.apply_transpose(&m), dense.transpose() * &m) < 1e-13);
    let sym = {
        let a = DMatrix::from_fn(5 * n, 5 * n, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose()
    };
    let want = &dense * &sym * dense.transpose();
    assert!(rel(jac.congruence(&sym), want) < 1e-13);
}

#[test]
fn reproduction_number_examples() {
    let p = ModelParams::default();
    let pops = DVector::from_vec(vec![1e6, 2e6]);
    let beta = DVector::from_element(2, 0.16);
    let ones = DVector::from_element(2, 1.0);
    let r = effective_r(&beta, &ones, &ones, &pops, &pops, &p);
    let want = 0.16 / (1.0 / 14.0 + 0.0004);
    assert!((r[0] - want).abs() < 1e-12);
    assert!((r[0] - 2.2275).abs() < 1e-3);
    let tm = DVector::from_element(2, 0.58);
    let ts = DVector::from_element(2, 0.64);
    let rp = effective_r(&beta, &tm, &ts, &pops, &pops, &p);
    assert!((rp[1] / r[1] - 0.3712).abs() < 1e-12);
    let zero = effective_r(&beta, &ones, &ones, &DVector::zeros(2), &pops, &p);
    assert_eq!(zero, DVector::zeros(2));
}

#[test]
fn micro_step_without_infected_is_inert() {
    let p = ModelParams::default();
    let pops = DVector::from_vec(vec![1e5, 2e5]);
    let x = LatentState {
        d: DVector::from_vec(vec![3.0, 0.0]),
        s: DVector::from_vec(vec![9e4, 2e5]),
        i: DVector::zeros(2),
        r: DVector::from_vec(vec![9997.0, 0.0]),
        beta0: DVector::from_element(2, 0.16),
    };
    let theta = PolicyMultipliers::ones(2);
    let mob = EffectiveMobility::closed(2);
    let ctx = StepContext { params: &p, populations: &pops, theta: &theta, mobility: &mob };
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..100 {
        let y = micro_step(&x, &ctx, &mut rng);
        assert_eq!((y.d.clone(), y.s.clone(), y.i.clone(), y.r.clone()), (x.d.clone(), x.s.clone(), x.i.clone(), x.r.clone()));
    }
}

#[test]
fn micro_step_conserves_totals_exactly() {
    let p = ModelParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 3;
    let (x, pops) = state(n, &mut rng);
    let mut xs = LatentState::from_vector(&x).unwrap();
    for v in [&mut xs.d, &mut xs.i, &mut xs.r] {
        v.apply(|z| *z = z.round());
    }
    xs.s = &pops.map(f64::round) - &xs.d - &xs.i - &xs.r;
    let theta = random_theta(n, &p, &mut rng);
    let mob = EffectiveMobility::new(&random_mobility(n, &mut rng), &theta, &p).unwrap();
    let ctx = StepContext { params: &p, populations: &pops, theta: &theta, mobility: &mob };
    let mut cur = xs.clone();
    for _ in 0..50 {
        cur = micro_step(&cur, &ctx, &mut rng);
        assert_eq!(cur.totals(), xs.totals());
        assert!(cur.beta0.iter().all(|b| *b >= 0.0));
    }
}

#[test]
fn micro_step_death_mean_matches_binomial() {
    let p = ModelParams::default();
    let (x, pops) = single(1e6, 9.9e5, 1e4, 0.16);
    let xs = LatentState::from_vector(&x).unwrap();
    let theta = PolicyMultipliers::ones(1);
    let mob = EffectiveMobility::closed(1);
    let ctx = StepContext { params: &p, populations: &pops, theta: &theta, mobility: &mob };
    let est = sample_moments(&xs, &ctx, 100_000, 21, Exec::default());
    let deaths = est.mean[0] - xs.d[0];
    assert!((deaths - 4.0).abs() <= 3.0 * est.mean_se[0], "mean deaths {deaths} (se {})", est.mean_se[0]);
}

#[test]
fn moment_estimates_do_not_depend_on_exec_mode() {
    let p = ModelParams::default();
    let (x, pops) = single(1e5, 9e4, 1e3, 0.16);
    let xs = LatentState::from_vector(&x).unwrap();
    let theta = PolicyMultipliers::ones(1);
    let mob = EffectiveMobility::closed(1);
    let ctx = StepContext { params: &p, populations: &pops, theta: &theta, mobility: &mob };
    let a = sample_moments(&xs, &ctx, 2_000, 3, Exec::Sequential);
    let b = sample_moments(&xs, &ctx, 2_000, 3, Exec::Parallel);
    assert_eq!(a.mean, b.mean);
    assert_eq!(a.cov, b.cov);
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn reproduction_argmax_is_scale_free(
            beta in prop::collection::vec(0.01..0.5f64, 4),
            frac in prop::collection::vec(0.01..1.0f64, 4),
            pops in prop::collection::vec(1e4..1e7f64, 4),
            scale in 0.1..100.0f64,
        ) {
            let p = ModelParams::default();
            let beta = DVector::from_vec(beta);
            let pops = DVector::from_vec(pops);
            let s = pops.component_mul(&DVector::from_vec(frac));
            let ones = DVector::from_element(4, 1.0);
            let a = effective_r(&beta, &ones, &ones, &s, &pops, &p);
            let b = effective_r(&beta, &ones, &ones, &(&s * scale), &(&pops * scale), &p);
            prop_assert_eq!(a.argmax().0, b.argmax().0);
        }
    }
}
