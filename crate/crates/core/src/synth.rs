//! Seeded synthetic inputs: mobility networks, policy calendars and death
//! panels drawn from the exact micro-level simulator.

use chrono::{Duration, NaiveDate};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dynamics::{micro_step, StepContext};
use crate::error::Result;
use crate::mobility::{EffectiveMobility, MobilitySpec};
use crate::model::{Country, LatentState, ModelParams};
use crate::policy::{multipliers_at, PolicyCalendar, PolicyInterval, PolicyKind};

/// `n` states named `S01, S02, ...` with log-uniform populations in
/// `[5e5, 2e7]`.
pub fn synthetic_country(n: usize, seed: u64) -> Country {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let codes = (1..=n).map(|k| format!("S{k:02}")).collect();
    let pops = (0..n)
        .map(|_| rng.random_range(5e5f64.ln()..2e7f64.ln()).exp().round())
        .collect();
    Country::new(codes, pops).expect("generated roster is valid")
}

/// Gravity-style network: flows from `i` to `j` proportional to `p_j` times a
/// random factor, scaled so that each row of `w_trav` sums to about
/// `travel` and each row of `w_com` to about `commute`.
pub fn gravity_mobility(country: &Country, travel: f64, commute: f64, seed: u64) -> MobilitySpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = country.len();
    let p = country.populations();
    let mut draw = |total: f64| {
        let mut w = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { p[j] * rng.random_range(0.2..1.8) });
        for mut row in w.row_iter_mut() {
            let s = row.sum();
            if s > 0.0 {
                row *= total / s;
            }
        }
        w
    };
    let w_trav = draw(travel);
    let w_com = draw(commute);
    MobilitySpec::new(w_trav, w_com).expect("generated matrices are valid")
}

/// Each state gets a stay-home order with probability 0.7 (starting in the
/// second half of March, ending between May and June), a mask mandate with
/// probability 0.5 (starting April to July, lasting to `horizon`), and a
/// travel ban with probability 0.3.
pub fn synthetic_calendar(country: &Country, horizon: NaiveDate, seed: u64) -> PolicyCalendar {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let day = |m: u32, d: u32| NaiveDate::from_ymd_opt(2020, m, d).expect("valid date");
    let mut entries = Vec::new();
    for code in country.codes() {
        let mut add = |kind, start: NaiveDate, end: NaiveDate| {
            if start <= end {
                entries.push(PolicyInterval {
                    state: code.clone(),
                    kind,
                    start,
                    end,
                });
            }
        };
        if rng.random_bool(0.7) {
            let start = day(3, 15) + Duration::days(rng.random_range(0..15));
            let end = day(5, 1) + Duration::days(rng.random_range(0..45));
            add(PolicyKind::StayHome, start, end.min(horizon));
        }
        if rng.random_bool(0.5) {
            let start = day(4, 1) + Duration::days(rng.random_range(0..100));
            add(PolicyKind::Mask, start, horizon);
        }
        if rng.random_bool(0.3) {
            let start = day(3, 15) + Duration::days(rng.random_range(0..20));
            add(PolicyKind::TravelBan, start, horizon);
        }
    }
    PolicyCalendar::new(entries).expect("generated intervals are ordered")
}

/// A simulated epidemic: true states and noisy death observations on
/// `dates` (the day after `start` onwards).
#[derive(Debug, Clone)]
pub struct SyntheticPath {
    pub start: NaiveDate,
    pub dates: Vec<NaiveDate>,
    pub states: Vec<LatentState>,
    pub deaths: Vec<DVector<f64>>,
}

/// Runs the micro-level simulator for `days` days from `init` (dated
/// `start`), using the multipliers of day `t - 1` for the step into `t`.
/// Observed deaths are `D + N(0, meas_sd^2)`.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    country: &Country,
    params: &ModelParams,
    calendar: &PolicyCalendar,
    mobility: &MobilitySpec,
    init: &LatentState,
    start: NaiveDate,
    days: usize,
    seed: u64,
) -> Result<SyntheticPath> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, params.meas_sd).map_err(|e| crate::Error::Config(format!("meas_sd: {e}")))?;
    let mut state = init.clone();
    let mut out = SyntheticPath {
        start,
        dates: Vec::with_capacity(days),
        states: Vec::with_capacity(days),
        deaths: Vec::with_capacity(days),
    };
    for k in 0..days {
        let prev = start + Duration::days(k as i64);
        let theta = multipliers_at(calendar, params, country, prev)?;
        let mob = EffectiveMobility::new(mobility, &theta, params)?;
        let ctx = StepContext {
            params,
            populations: country.populations(),
            theta: &theta,
            mobility: &mob,
        };
        state = micro_step(&state, &ctx, &mut rng);
        let observed = state.d.map(|d| d + noise.sample(&mut rng));
        out.dates.push(prev + Duration::days(1));
        out.states.push(state.clone());
        out.deaths.push(observed);
    }
    Ok(out)
}

/// Seed state with `i0` infected per state, integer-valued.
pub fn onset(country: &Country, params: &ModelParams, i0: f64) -> LatentState {
    let n = country.len();
    let mut x = LatentState::seeded(
        country,
        &DVector::from_element(n, i0.round()),
        &DVector::from_element(n, params.beta_bar),
    );
    x.s = x.s.map(f64::round);
    x
}
