//! Model constants, the country roster, and the stacked latent state.

use std::collections::HashMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mobility::MobilitySpec;
use crate::policy::PolicyCalendar;

/// Scalar model constants. All rates are per day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Recovery probability.
    pub gamma: f64,
    /// Death probability.
    pub delta: f64,
    /// Mean-reversion speed of the transmission rate.
    pub kappa: f64,
    /// Long-run transmission rate.
    pub beta_bar: f64,
    /// Transmission-rate volatility (per sqrt(day)).
    pub sigma: f64,
    /// Cross-state correlation of transmission-rate shocks.
    pub rho: f64,
    pub theta_m_low: f64,
    pub theta_s_low: f64,
    pub theta_t_low: f64,
    /// Fraction of the day a commuter spends in the visited state.
    pub tau_com: f64,
    /// Average stay of a traveler, in days.
    pub tau_trav: f64,
    /// Standard deviation of the death-count measurement error (persons).
    pub meas_sd: f64,
    /// Time step in days.
    pub dt: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            gamma: 1.0 / 14.0,
            delta: 0.0004,
            kappa: 0.001,
            beta_bar: 0.16,
            sigma: 0.05,
            rho: 0.49,
            theta_m_low: 0.58,
            theta_s_low: 0.64,
            theta_t_low: 0.10,
            tau_com: 0.36,
            tau_trav: 4.0,
            meas_sd: 0.001,
            dt: 1.0,
        }
    }
}

impl ModelParams {
    pub const FIELD_NAMES: [&'static str; 13] = [
        "gamma",
        "delta",
        "kappa",
        "beta_bar",
        "sigma",
        "rho",
        "theta_m_low",
        "theta_s_low",
        "theta_t_low",
        "tau_com",
        "tau_trav",
        "meas_sd",
        "dt",
    ];

    fn slot(&mut self, name: &str) -> Option<&mut f64> {
        Some(match name {
            "gamma" => &mut self.gamma,
            "delta" => &mut self.delta,
            "kappa" => &mut self.kappa,
            "beta_bar" => &mut self.beta_bar,
            "sigma" => &mut self.sigma,
            "rho" => &mut self.rho,
            "theta_m_low" => &mut self.theta_m_low,
            "theta_s_low" => &mut self.theta_s_low,
            "theta_t_low" => &mut self.theta_t_low,
            "tau_com" => &mut self.tau_com,
            "tau_trav" => &mut self.tau_trav,
            "meas_sd" => &mut self.meas_sd,
            "dt" => &mut self.dt,
            _ => return None,
        })
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.clone().slot(name).map(|v| *v)
    }

    /// Sets a field by name. Unknown names are configuration errors.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        match self.slot(name) {
            Some(slot) => {
                *slot = value;
                Ok(())
            }
            None => Err(Error::Config(format!("unknown parameter `{name}`"))),
        }
    }

    /// Variance of `d_t + r_t` per infected person: `(1-d-g)^2 d + g(1-d-g)) / (1-d)`.
    pub fn nu(&self) -> f64 {
        let (g, d) = (self.gamma, self.delta);
        let keep = 1.0 - d - g;
        (keep * keep * d + g * keep) / (1.0 - d)
    }

    /// Every invariant violation, each with a locus.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |ok: bool, msg: &str| {
            if !ok {
                out.push(msg.to_string());
            }
        };
        let open01 = |x: f64| x > 0.0 && x < 1.0;
        check(open01(self.gamma), "gamma out of (0,1)");
        check(open01(self.delta), "delta out of (0,1)");
        check(self.gamma + self.delta < 1.0, "gamma + delta must be < 1");
        check(open01(self.kappa), "kappa out of (0,1)");
        check(self.beta_bar > 0.0, "beta_bar must be > 0");
        check(self.sigma > 0.0, "sigma must be > 0");
        check(self.rho >= 0.0 && self.rho < 1.0, "rho out of [0,1)");
        check(open01(self.theta_m_low), "theta_m_low out of (0,1)");
        check(open01(self.theta_s_low), "theta_s_low out of (0,1)");
        check(open01(self.theta_t_low), "theta_t_low out of (0,1)");
        check(self.tau_com > 0.0 && self.tau_com <= 1.0, "tau_com out of (0,1]");
        check(self.tau_trav >= 1.0, "tau_trav must be >= 1");
        check(self.meas_sd > 0.0, "meas_sd must be > 0");
        check(self.dt > 0.0, "dt must be > 0");
        for name in Self::FIELD_NAMES {
            if !self.get(name).is_some_and(f64::is_finite) {
                out.push(format!("{name} is not finite"));
            }
        }
        out
    }
}

/// Ordered list of states with their populations.
#[derive(Debug, Clone, PartialEq)]
pub struct Country {
    codes: Vec<String>,
    populations: DVector<f64>,
    index: HashMap<String, usize>,
}

impl Country {
    pub fn new(codes: Vec<String>, populations: Vec<f64>) -> Result<Self> {
        if codes.is_empty() {
            return Err(Error::Config("country has no states".into()));
        }
        if codes.len() != populations.len() {
            return Err(Error::dim("populations", codes.len(), populations.len()));
        }
        let mut index = HashMap::with_capacity(codes.len());
        for (k, code) in codes.iter().enumerate() {
            if index.insert(code.clone(), k).is_some() {
                return Err(Error::Config(format!("duplicate state code `{code}`")));
            }
        }
        Ok(Country {
            codes,
            populations: DVector::from_vec(populations),
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &[String] {
        &self.codes
    }

    pub fn populations(&self) -> &DVector<f64> {
        &self.populations
    }

    pub fn index_of(&self, code: &str) -> Option<usize> {
        self.index.get(code).copied()
    }

    pub fn violations(&self) -> Vec<String> {
        self.codes
            .iter()
            .zip(self.populations.iter())
            .filter(|(_, p)| !(p.is_finite() && **p > 0.0))
            .map(|(c, p)| format!("population of {c} must be > 0 (got {p})"))
            .collect()
    }

    /// Restricts the roster to `codes`, in the given order.
    pub fn subset(&self, codes: &[&str]) -> Result<Country> {
        let pops = codes
            .iter()
            .map(|c| {
                self.index_of(c)
                    .map(|k| self.populations[k])
                    .ok_or_else(|| Error::Config(format!("unknown state code `{c}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Country::new(codes.iter().map(|c| c.to_string()).collect(), pops)
    }

    /// The 50 U.S. states plus DC with Census Bureau vintage-2019 resident
    /// population estimates.
    pub fn us_states_2019() -> Country {
        let (codes, pops): (Vec<String>, Vec<f64>) = US_2019
            .iter()
            .map(|(c, p)| (c.to_string(), *p as f64))
            .unzip();
        Country::new(codes, pops).expect("static roster is valid")
    }
}

const US_2019: [(&str, u32); 51] = [
    ("AL", 4_903_185),
    ("AK", 731_545),
    ("AZ", 7_278_717),
    ("AR", 3_017_804),
    ("CA", 39_512_223),
    ("CO", 5_758_736),
    ("CT", 3_565_287),
    ("DE", 973_764),
    ("DC", 705_749),
    ("FL", 21_477_737),
    ("GA", 10_617_423),
    ("HI", 1_415_872),
    ("ID", 1_787_065),
    ("IL", 12_671_821),
    ("IN", 6_732_219),
    ("IA", 3_155_070),
    ("KS", 2_913_314),
    ("KY", 4_467_673),
    ("LA", 4_648_794),
    ("ME", 1_344_212),
    ("MD", 6_045_680),
    ("MA", 6_892_503),
    ("MI", 9_986_857),
    ("MN", 5_639_632),
    ("MS", 2_976_149),
    ("MO", 6_137_428),
    ("MT", 1_068_778),
    ("NE", 1_934_408),
    ("NV", 3_080_156),
    ("NH", 1_359_711),
    ("NJ", 8_882_190),
    ("NM", 2_096_829),
    ("NY", 19_453_561),
    ("NC", 10_488_084),
    ("ND", 762_062),
    ("OH", 11_689_100),
    ("OK", 3_956_971),
    ("OR", 4_217_737),
    ("PA", 12_801_989),
    ("RI", 1_059_361),
    ("SC", 5_148_714),
    ("SD", 884_659),
    ("TN", 6_829_174),
    ("TX", 28_995_881),
    ("UT", 3_205_958),
    ("VT", 623_989),
    ("VA", 8_535_519),
    ("WA", 7_614_893),
    ("WV", 1_792_147),
    ("WI", 5_822_434),
    ("WY", 578_759),
];

/// Stacked latent state `[D, S, I, R, beta0]`, each block of length N.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub d: DVector<f64>,
    pub s: DVector<f64>,
    pub i: DVector<f64>,
    pub r: DVector<f64>,
    pub beta0: DVector<f64>,
}

/// Block offsets inside the stacked `5N` vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    D = 0,
    S = 1,
    I = 2,
    R = 3,
    Beta = 4,
}

impl Block {
    pub fn range(self, n: usize) -> std::ops::Range<usize> {
        let k = self as usize;
        k * n..(k + 1) * n
    }
}

impl LatentState {
    pub fn n(&self) -> usize {
        self.d.len()
    }

    /// Epidemic onset: `I0` infected per state, everyone else susceptible,
    /// transmission rates at `beta0`.
    pub fn seeded(country: &Country, i0: &DVector<f64>, beta0: &DVector<f64>) -> LatentState {
        let n = country.len();
        LatentState {
            d: DVector::zeros(n),
            s: country.populations() - i0,
            i: i0.clone(),
            r: DVector::zeros(n),
            beta0: beta0.clone(),
        }
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let n = self.n();
        let mut v = DVector::zeros(5 * n);
        for (block, src) in [
            (Block::D, &self.d),
            (Block::S, &self.s),
            (Block::I, &self.i),
            (Block::R, &self.r),
            (Block::Beta, &self.beta0),
        ] {
            v.rows_mut(block as usize * n, n).copy_from(src);
        }
        v
    }

    pub fn from_vector(v: &DVector<f64>) -> Result<LatentState> {
        if !v.len().is_multiple_of(5) || v.is_empty() {
            return Err(Error::dim("stacked state length (multiple of 5)", 5, v.len()));
        }
        let n = v.len() / 5;
        let take = |b: Block| v.rows(b as usize * n, n).into_owned();
        Ok(LatentState {
            d: take(Block::D),
            s: take(Block::S),
            i: take(Block::I),
            r: take(Block::R),
            beta0: take(Block::Beta),
        })
    }

    /// Per-state `S + I + R + D`.
    pub fn totals(&self) -> DVector<f64> {
        &self.s + &self.i + &self.r + &self.d
    }
}

/// Checks every invariant of a run configuration.
pub fn validate(
    country: &Country,
    params: &ModelParams,
    calendar: &PolicyCalendar,
    mobility: &MobilitySpec,
) -> std::result::Result<(), Vec<String>> {
    let mut out = params.violations();
    out.extend(country.violations());
    out.extend(calendar.violations(country));
    out.extend(mobility.violations(country));
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_two_defaults_are_valid() {
        assert!(ModelParams::default().violations().is_empty());
    }

    #[test]
    fn rho_above_one_is_reported() {
        let p = ModelParams {
            rho: 1.2,
            ..Default::default()
        };
        assert_eq!(p.violations(), vec!["rho out of [0,1)".to_string()]);
    }

    #[test]
    fn set_by_name_round_trips() {
        let mut p = ModelParams::default();
        for (k, name) in ModelParams::FIELD_NAMES.iter().enumerate() {
            p.set(name, k as f64 + 0.5).unwrap();
            assert_eq!(p.get(name), Some(k as f64 + 0.5));
        }
        assert!(p.set("gama", 0.1).is_err());
    }

    #[test]
    fn negative_population_names_the_state() {
        let c = Country::new(vec!["CA".into(), "NV".into()], vec![10.0, -3.0]).unwrap();
        let v = c.violations();
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("NV"));
    }

    #[test]
    fn duplicate_codes_rejected() {
        assert!(Country::new(vec!["CA".into(), "CA".into()], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn us_roster_has_51_states() {
        let us = Country::us_states_2019();
        assert_eq!(us.len(), 51);
        assert!(us.violations().is_empty());
        let total: f64 = us.populations().sum();
        assert!((total - 328_239_523.0).abs() < 1.0);
    }

    #[test]
    fn stacking_round_trips() {
        let x = LatentState {
            d: DVector::from_vec(vec![1.0, 2.0]),
            s: DVector::from_vec(vec![3.0, 4.0]),
            i: DVector::from_vec(vec![5.0, 6.0]),
            r: DVector::from_vec(vec![7.0, 8.0]),
            beta0: DVector::from_vec(vec![0.1, 0.2]),
        };
        let v = x.to_vector();
        assert_eq!(v.as_slice()[Block::I.range(2)][1], 6.0);
        assert_eq!(LatentState::from_vector(&v).unwrap(), x);
    }
}
