#![allow(clippy::needless_range_loop)]

use super::*;
use crate::dynamics::{conditional_cov, conditional_mean, jacobian};
use crate::mobility::MobilitySpec;
use crate::model::LatentState;
use crate::synth;
use chrono::Duration;
use nalgebra::SymmetricEigen;

fn day(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

fn dates_from(start: NaiveDate, k: usize) -> Vec<NaiveDate> {
    (1..=k as i64).map(|d| start + Duration::days(d)).collect()
}

fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1e-300)
}

fn vec_rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1e-300)
}

/// One-state belief with non-trivial covariance.
fn scalar_belief() -> GaussianBelief {
    let mean = DVector::from_vec(vec![120.0, 9.0e5, 4.0e3, 2.0e4, 0.2]);
    let a = DMatrix::from_row_slice(
        5,
        5,
        &[
            3.0, 0.0, 1.0, 0.5, 0.0, //
            0.0, 900.0, -800.0, 0.0, 0.01, //
            1.0, -800.0, 1000.0, 10.0, 0.02, //
            0.5, 0.0, 10.0, 50.0, 0.0, //
            0.0, 0.01, 0.02, 0.0, 0.004,
        ],
    );
    let cov = &a * a.transpose() / 100.0;
    GaussianBelief {
        date: day("2020-04-01"),
        mean,
        cov,
    }
}

#[test]
fn scalar_update_matches_hand_kalman() {
    let b = scalar_belief();
    let r = 1e-2;
    let z = 125.0;
    let up = update(&b, &[Some(z)], &[0], r).unwrap();

    // Scalar observation of component 0.
    let s = b.cov[(0, 0)] + r;
    let y = z - b.mean[0];
    let k: Vec<f64> = (0..5).map(|i| b.cov[(i, 0)] / s).collect();
    for i in 0..5 {
        let want = b.mean[i] + k[i] * y;
        assert!((up.belief.mean[i] - want).abs() <= 1e-12 * want.abs().max(1.0));
        for j in 0..5 {
            let want = b.cov[(i, j)] - k[i] * k[j] * s;
            let scale = b.cov[(i, i)].abs().max(b.cov[(j, j)].abs()).sqrt().powi(2);
            assert!((up.belief.cov[(i, j)] - want).abs() <= 1e-12 * scale, "({i},{j})");
        }
    }
    let ll = -0.5 * ((2.0 * std::f64::consts::PI).ln() + s.ln() + y * y / s);
    assert!((up.loglik - ll).abs() <= 1e-12 * ll.abs());
}

#[test]
fn exact_observation_leaves_mean_and_hits_peak_density() {
    let b = scalar_belief();
    let up = update(&b, &[Some(b.mean[0])], &[0], 1e-6).unwrap();
    assert_eq!(up.belief.mean, b.mean);
    let s = b.cov[(0, 0)] + 1e-6;
    let peak = -0.5 * (2.0 * std::f64::consts::PI * s).ln();
    assert!((up.loglik - peak).abs() < 1e-12);
}

#[test]
fn uninformative_observation_keeps_prior() {
    let b = scalar_belief();
    let up = update(&b, &[Some(500.0)], &[0], 1e14).unwrap();
    assert!(vec_rel(&up.belief.mean, &b.mean) < 1e-9);
    assert!(rel_diff(&up.belief.cov, &b.cov) < 1e-9);
}

#[test]
fn missing_rows_are_dropped() {
    let n = 2;
    let mut b = scalar_belief();
    b.mean = DVector::from_fn(10, |k, _| 10.0 + k as f64);
    let a = DMatrix::from_fn(10, 10, |i, j| ((i * 3 + j * 5) % 7) as f64 - 3.0);
    b.cov = &a * a.transpose() + DMatrix::identity(10, 10);
    let observed: Vec<usize> = (0..n).collect();
    let partial = update(&b, &[Some(11.0), None], &observed, 0.5).unwrap();
    let single = update(&b, &[Some(11.0)], &[0], 0.5).unwrap();
    assert_eq!(partial.belief.mean, single.belief.mean);
    assert_eq!(partial.belief.cov, single.belief.cov);
    assert_eq!(partial.observed, vec![0]);
    let none = update(&b, &[None, None], &observed, 0.5).unwrap();
    assert_eq!(none.belief, b);
    assert_eq!(none.loglik, 0.0);
}

#[test]
fn singular_innovation_is_numerical_error() {
    let mut b = scalar_belief();
    b.cov.fill(0.0);
    let err = update(&b, &[Some(1.0)], &[0], 0.0).unwrap_err();
    assert!(matches!(err, Error::Numerical { .. }), "{err}");
}

#[test]
fn noiseless_linear_prediction_is_congruence() {
    let f = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.0, 0.9, 0.1, 0.3, 0.0, 1.1]);
    let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0]);
    let p = &a * a.transpose();
    let b = GaussianBelief {
        date: day("2020-01-01"),
        mean: DVector::from_vec(vec![1.0, 2.0, 3.0]),
        cov: p.clone(),
    };
    let t = Transition {
        mean: &f * &b.mean,
        jacobian: Box::new(f.clone()),
        noise: DMatrix::zeros(3, 3),
    };
    let (pred, _) = predict(&b, &t, day("2020-01-02")).unwrap();
    assert!(rel_diff(&pred.cov, &(&f * &p * f.transpose())) < 1e-15);
}

fn two_state_country() -> Country {
    Country::new(vec!["AA".into(), "BB".into()], vec![2.0e6, 5.0e5]).unwrap()
}

#[test]
fn without_infected_only_beta_block_grows() {
    let c = two_state_country();
    let p = ModelParams::default();
    let dates = vec![day("2020-03-02")];
    let model = EpidemicModel::new(&c, &p, &PolicyCalendar::empty(), &MobilitySpec::zeros(2), &dates).unwrap();
    let x = LatentState {
        d: DVector::zeros(2),
        s: c.populations().clone(),
        i: DVector::zeros(2),
        r: DVector::zeros(2),
        beta0: DVector::from_vec(vec![0.16, 0.25]),
    }
    .to_vector();
    let b = GaussianBelief {
        date: day("2020-03-01"),
        mean: x.clone(),
        cov: DMatrix::zeros(10, 10),
    };
    let t = model.transition(0, dates[0], &x).unwrap();
    let (pred, _) = predict(&b, &t, dates[0]).unwrap();
    assert_eq!(pred.cov.view((0, 0), (8, 10)).amax(), 0.0);
    let s2 = p.sigma * p.sigma * p.dt;
    let want = [
        [s2 * 0.16, s2 * p.rho * (0.16f64 * 0.25).sqrt()],
        [s2 * p.rho * (0.16f64 * 0.25).sqrt(), s2 * 0.25],
    ];
    for a in 0..2 {
        for b in 0..2 {
            assert!((pred.cov[(8 + a, 8 + b)] - want[a][b]).abs() < 1e-18);
        }
    }
}

#[test]
fn predicted_national_deaths_grow_by_delta_infected() {
    let c = two_state_country();
    let p = ModelParams::default();
    let w = synth::gravity_mobility(&c, 0.002, 0.02, 1);
    let dates = vec![day("2020-04-02")];
    let model = EpidemicModel::new(&c, &p, &PolicyCalendar::empty(), &w, &dates).unwrap();
    let init = initial_belief_with(&c, &p, day("2020-04-01"), 5000.0, 100.0);
    let t = model.transition(0, dates[0], &init.mean).unwrap();
    let (pred, _) = predict(&init, &t, dates[0]).unwrap();
    let rise: f64 = pred.mean.rows(0, 2).sum() - init.mean.rows(0, 2).sum();
    assert!((rise - p.delta * 10_000.0).abs() < 1e-12);
}

/// Dense joint-Gaussian conditioning for `x_k = F x_{k-1} + c + w_k`,
/// `z_k = H x_k + e_k`. Returns the mean and covariance of every `x_k`
/// given `z_0..z_{upto}` and the log-density of the first `upto + 1`
/// observations.
struct DenseOracle {
    dim: usize,
    steps: usize,
    m: usize,
    mu: DVector<f64>,
    cov: DMatrix<f64>,
    h: DMatrix<f64>,
    r: f64,
}

impl DenseOracle {
    fn new(model: &LinearModel, init: &GaussianBelief) -> Self {
        let (dim, steps, m) = (model.dim(), model.steps, model.observed.len());
        // X = A u + b with u = (x_{-1}, w_0, ..., w_{K-1}).
        let mut a = DMatrix::zeros(dim * steps, dim * (steps + 1));
        let mut b = DVector::zeros(dim * steps);
        let mut u_cov = DMatrix::zeros(dim * (steps + 1), dim * (steps + 1));
        u_cov.view_mut((0, 0), (dim, dim)).copy_from(&init.cov);
        for k in 0..steps {
            u_cov.view_mut((dim * (k + 1), dim * (k + 1)), (dim, dim)).copy_from(&model.q);
        }
        let mut fpow = vec![DMatrix::identity(dim, dim)];
        for k in 1..=steps {
            fpow.push(&model.f * &fpow[k - 1]);
        }
        let mut mean = init.mean.clone();
        for k in 0..steps {
            mean = &model.f * mean + &model.offset;
            b.rows_mut(dim * k, dim).copy_from(&mean);
            a.view_mut((dim * k, 0), (dim, dim)).copy_from(&fpow[k + 1]);
            for j in 0..=k {
                a.view_mut((dim * k, dim * (j + 1)), (dim, dim)).copy_from(&fpow[k - j]);
            }
        }
        let x_cov = &a * u_cov * a.transpose();
        let mut h = DMatrix::zeros(m * steps, dim * steps);
        for k in 0..steps {
            for (r, idx) in model.observed.iter().enumerate() {
                h[(m * k + r, dim * k + idx)] = 1.0;
            }
        }
        DenseOracle {
            dim,
            steps,
            m,
            mu: b,
            cov: x_cov,
            h,
            r: model.meas_var,
        }
    }

    fn condition(&self, z: &[DVector<f64>], upto: usize) -> (Vec<DVector<f64>>, Vec<DMatrix<f64>>, f64) {
        let rows = self.m * (upto + 1);
        let h = self.h.rows(0, rows).into_owned();
        let zz = &h * &self.cov * h.transpose() + DMatrix::identity(rows, rows) * self.r;
        let xz = &self.cov * h.transpose();
        let mut zvec = DVector::zeros(rows);
        for k in 0..=upto {
            zvec.rows_mut(self.m * k, self.m).copy_from(&z[k]);
        }
        let resid = zvec - &h * &self.mu;
        let chol = zz.clone().cholesky().unwrap();
        let post_mu = &self.mu + &xz * chol.solve(&resid);
        let post_cov = &self.cov - &xz * chol.solve(&xz.transpose());
        let logdet: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let ll = -0.5 * (rows as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + resid.dot(&chol.solve(&resid)));
        let d = self.dim;
        let means = (0..self.steps).map(|k| post_mu.rows(d * k, d).into_owned()).collect();
        let covs = (0..self.steps).map(|k| post_cov.view((d * k, d * k), (d, d)).into_owned()).collect();
        (means, covs, ll)
    }
}

/// Two-state epidemic linearized at a mid-epidemic point.
fn linearized_toy(steps: usize) -> (LinearModel, GaussianBelief, Vec<DVector<f64>>) {
    let c = Country::new(vec!["AA".into(), "BB".into()], vec![5.0e4, 2.0e4]).unwrap();
    let p = ModelParams::default();
    let w = synth::gravity_mobility(&c, 0.003, 0.03, 11);
    let theta = PolicyMultipliers::ones(2);
    let mob = EffectiveMobility::new(&w, &theta, &p).unwrap();
    let ctx = StepContext {
        params: &p,
        populations: c.populations(),
        theta: &theta,
        mobility: &mob,
    };
    let x = LatentState {
        d: DVector::from_vec(vec![20.0, 5.0]),
        s: DVector::from_vec(vec![4.5e4, 1.85e4]),
        i: DVector::from_vec(vec![1500.0, 600.0]),
        r: DVector::from_vec(vec![3480.0, 895.0]),
        beta0: DVector::from_vec(vec![0.18, 0.14]),
    }
    .to_vector();
    let f = jacobian(&x, &ctx).to_dense();
    let offset = conditional_mean(&x, &ctx) - &f * &x;
    let q = conditional_cov(&x, &ctx);
    let model = LinearModel {
        f,
        offset,
        q,
        observed: vec![0, 1],
        meas_var: 0.25,
        steps,
    };
    let mut cov = DMatrix::from_diagonal(&DVector::from_vec(vec![
        1.0, 1.0, 400.0, 100.0, 2.5e5, 4.0e4, 100.0, 25.0, 0.01, 0.01,
    ]));
    cov[(2, 4)] = -0.5 * (400.0f64 * 2.5e5).sqrt();
    cov[(4, 2)] = cov[(2, 4)];
    let init = GaussianBelief {
        date: day("2020-04-30"),
        mean: x,
        cov,
    };
    // Deterministic, mildly irregular observations around the mean path.
    let mut z = Vec::new();
    let mut m = init.mean.clone();
    for k in 0..steps {
        m = &model.f * &m + &model.offset;
        let wiggle = ((k * 7 % 5) as f64 - 2.0) * 0.8;
        z.push(DVector::from_vec(vec![m[0] + wiggle, m[1] - 0.5 * wiggle]));
    }
    (model, init, z)
}

#[test]
fn linear_filter_and_smoothers_match_dense_conditioning() {
    let steps = 12;
    let (model, init, z) = linearized_toy(steps);
    let obs = ObservationSeries::complete(dates_from(init.date, steps), &z).unwrap();
    let out = run_filter(&model, &obs, &init, Retain::Full).unwrap();
    assert_eq!(out.repairs, 0);
    let oracle = DenseOracle::new(&model, &init);
    for k in 0..steps {
        let (means, covs, ll) = oracle.condition(&z, k);
        let f = out.steps[k].filtered().unwrap();
        assert!(vec_rel(&f.mean, &means[k]) < 1e-8, "filtered mean {k}");
        assert!(rel_diff(&f.cov, &covs[k]) < 1e-8, "filtered cov {k}: {}", rel_diff(&f.cov, &covs[k]));
        let partial: f64 = out.steps[..=k].iter().map(|s| s.loglik).sum();
        assert!((partial - ll).abs() < 1e-8 * ll.abs(), "loglik {k}: {partial} vs {ll}");
    }
    let (means, covs, _) = oracle.condition(&z, steps - 1);
    let rts = rts_smooth(&out).unwrap();
    let bf = bf_smooth(&out).unwrap();
    for k in 0..steps {
        for s in [&rts, &bf] {
            assert!(vec_rel(&s.beliefs[k].mean, &means[k]) < 1e-8, "smoothed mean {k}");
            assert!(rel_diff(&s.beliefs[k].cov, &covs[k]) < 1e-8, "smoothed cov {k}");
        }
    }
}

#[test]
fn smoothed_variances_do_not_exceed_filtered() {
    let steps = 12;
    let (model, init, z) = linearized_toy(steps);
    let obs = ObservationSeries::complete(dates_from(init.date, steps), &z).unwrap();
    let out = run_filter(&model, &obs, &init, Retain::Full).unwrap();
    let sm = rts_smooth(&out).unwrap();
    for (s, f) in sm.beliefs.iter().zip(&out.steps) {
        let fc = f.filtered_cov.as_ref().unwrap();
        let scale = fc.diagonal().amax();
        for k in 0..s.dim() {
            assert!(s.cov[(k, k)] <= fc[(k, k)] + 1e-8 * scale);
        }
    }
}

fn synthetic_run(n: usize, days: usize, seed: u64) -> (Country, ModelParams, PolicyCalendar, MobilitySpec, synth::SyntheticPath) {
    let c = synth::synthetic_country(n, seed);
    let p = ModelParams::default();
    let w = synth::gravity_mobility(&c, 0.002, 0.02, seed + 1);
    let start = day("2020-02-20");
    let cal = synth::synthetic_calendar(&c, start + Duration::days(days as i64), seed + 2);
    let x0 = synth::onset(&c, &p, 100.0);
    let path = synth::simulate(&c, &p, &cal, &w, &x0, start, days, seed + 3).unwrap();
    (c, p, cal, w, path)
}

#[test]
fn smoothers_agree_on_three_state_epidemic() {
    let (c, p, cal, w, path) = synthetic_run(3, 90, 40);
    let obs = ObservationSeries::complete(path.dates.clone(), &path.deaths).unwrap();
    let init = initial_belief(&c, &p, path.start);
    let out = filter_panel(&c, &p, &cal, &w, &obs, &init, Retain::Full).unwrap();
    let rts = rts_smooth(&out).unwrap();
    let bf = bf_smooth(&out).unwrap();
    for (a, b) in rts.beliefs.iter().zip(&bf.beliefs) {
        assert!(vec_rel(&a.mean, &b.mean) < 1e-6, "{}: {}", a.date, vec_rel(&a.mean, &b.mean));
    }
    let last = out.steps.last().unwrap().filtered().unwrap();
    assert_eq!(rts.beliefs.last().unwrap(), &last);
    assert_eq!(bf.beliefs.last().unwrap().mean, last.mean);
    assert_eq!(bf.max_inverted, 3);

    let rows = bf_smooth_rows(&out).unwrap();
    for (full, r) in bf.beliefs.iter().zip(&rows.means) {
        assert!(vec_rel(r, &full.mean) < 1e-12);
    }

    // Near-exact measurement: smoothed deaths sit on the data.
    for (b, z) in rts.beliefs.iter().zip(&path.deaths) {
        for j in 0..3 {
            assert!((b.mean[j] - z[j]).abs() <= 3.0 * p.meas_sd, "{} state {j}", b.date);
        }
    }

    let sub = ObservationSeries::complete(path.dates.clone(), &path.deaths).unwrap();
    let rows_out = filter_panel(&c, &p, &cal, &w, &sub, &init, Retain::Rows(vec![0, 1, 2])).unwrap();
    let means = bf_smooth_rows(&rows_out).unwrap();
    for (a, b) in means.means.iter().zip(&rows.means) {
        assert!(vec_rel(a, &b.rows(0, 3).into_owned()) < 1e-12);
    }
}

#[test]
fn loglik_is_permutation_equivariant() {
    let (c, p, cal, w, path) = synthetic_run(4, 60, 50);
    let obs = ObservationSeries::complete(path.dates.clone(), &path.deaths).unwrap();
    let init = initial_belief(&c, &p, path.start);
    let out = filter_panel(&c, &p, &cal, &w, &obs, &init, Retain::Moments).unwrap();

    let perm = [2usize, 0, 3, 1];
    let codes: Vec<String> = perm.iter().map(|k| c.codes()[*k].clone()).collect();
    let pops: Vec<f64> = perm.iter().map(|k| c.populations()[*k]).collect();
    let c2 = Country::new(codes, pops).unwrap();
    let pm = |m: &DMatrix<f64>| DMatrix::from_fn(4, 4, |a, b| m[(perm[a], perm[b])]);
    let w2 = MobilitySpec::new(pm(&w.w_trav), pm(&w.w_com)).unwrap();
    let z2: Vec<DVector<f64>> = path.deaths.iter().map(|z| DVector::from_fn(4, |a, _| z[perm[a]])).collect();
    let obs2 = ObservationSeries::complete(path.dates.clone(), &z2).unwrap();
    let init2 = initial_belief(&c2, &p, path.start);
    let out2 = filter_panel(&c2, &p, &cal, &w2, &obs2, &init2, Retain::Moments).unwrap();
    for (a, b) in out.steps.iter().zip(&out2.steps) {
        assert!((a.loglik - b.loglik).abs() <= 1e-8 * a.loglik.abs().max(1.0), "{}", a.date);
    }
}

#[test]
fn no_deaths_and_no_seed_keeps_infections_near_zero() {
    let c = two_state_country();
    let p = ModelParams::default();
    let start = day("2020-03-01");
    let dates = dates_from(start, 60);
    let zeros = vec![DVector::zeros(2); 60];
    let obs = ObservationSeries::complete(dates, &zeros).unwrap();
    let init = initial_belief_with(&c, &p, start, 0.0, 1.0);
    let out = filter_panel(&c, &p, &PolicyCalendar::empty(), &MobilitySpec::zeros(2), &obs, &init, Retain::Moments)
        .unwrap();
    for s in &out.steps {
        for j in 0..2 {
            assert!(s.filtered_mean[4 + j].abs() < 5.0, "{}: I = {}", s.date, s.filtered_mean[4 + j]);
        }
    }
}

/// Simulation study: pooled over eight seeded 3-state outbreaks (1000
/// initial infections per state, 150 days), the true I lies inside the
/// filtered 95% band on at least 90% of post-burn-in state-days.
#[test]
fn filtered_infections_track_simulated_truth() {
    let p = ModelParams::default();
    let start = day("2020-02-20");
    let days = 150;
    let burn_in = 30;
    let (mut inside, mut total) = (0, 0);
    for seed in 60..68u64 {
        let c = synth::synthetic_country(3, seed);
        let w = synth::gravity_mobility(&c, 0.002, 0.02, seed + 1);
        let cal = synth::synthetic_calendar(&c, start + Duration::days(days as i64), seed + 2);
        let x0 = synth::onset(&c, &p, 1000.0);
        let path = synth::simulate(&c, &p, &cal, &w, &x0, start, days, seed + 3).unwrap();
        let obs = ObservationSeries::complete(path.dates.clone(), &path.deaths).unwrap();
        let init = initial_belief(&c, &p, path.start);
        let out = filter_panel(&c, &p, &cal, &w, &obs, &init, Retain::Moments).unwrap();
        for (s, truth) in out.steps.iter().zip(&path.states).skip(burn_in) {
            for j in 0..3 {
                let k = Block::I.range(3).start + j;
                let sd = s.filtered_var[k].max(0.0).sqrt();
                total += 1;
                if (s.filtered_mean[k] - truth.i[j]).abs() <= 1.96 * sd {
                    inside += 1;
                }
            }
        }
    }
    let share = inside as f64 / total as f64;
    assert!(share >= 0.9, "coverage {share}");
}

#[test]
fn covariance_outputs_are_psd() {
    let (c, p, cal, w, path) = synthetic_run(3, 60, 70);
    let obs = ObservationSeries::complete(path.dates.clone(), &path.deaths).unwrap();
    let init = initial_belief(&c, &p, path.start);
    let out = filter_panel(&c, &p, &cal, &w, &obs, &init, Retain::Full).unwrap();
    for s in &out.steps {
        for cov in [s.filtered_cov.as_ref().unwrap(), s.predicted_cov.as_ref().unwrap()] {
            assert_eq!(cov, &cov.transpose());
            let min = SymmetricEigen::new(cov.clone()).eigenvalues.min();
            assert!(min >= -1e-8 * cov.trace(), "{}: {min}", s.date);
        }
    }
}

#[test]
fn init_must_precede_observations() {
    let c = two_state_country();
    let p = ModelParams::default();
    let start = day("2020-03-01");
    let obs = ObservationSeries::complete(vec![start], &[DVector::zeros(2)]).unwrap();
    let init = initial_belief(&c, &p, start);
    let err = filter_panel(&c, &p, &PolicyCalendar::empty(), &MobilitySpec::zeros(2), &obs, &init, Retain::Moments)
        .unwrap_err();
    assert!(matches!(err, Error::Data(_)));
}

