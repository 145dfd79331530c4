use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::model::Country;
use crate::policy::{PolicyCalendar, PolicyInterval, PolicyKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    /// Replace the named policies with fixed early spells.
    Strict,
    /// Remove the named policies altogether.
    Loose,
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "STRICT" => Ok(ScenarioKind::Strict),
            "LOOSE" => Ok(ScenarioKind::Loose),
            other => Err(Error::Config(format!("unknown scenario kind `{other}`"))),
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioKind::Strict => "STRICT",
            ScenarioKind::Loose => "LOOSE",
        })
    }
}

/// Which states deviate from the observed calendar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scope {
    All,
    State(String),
}

impl Scope {
    pub fn includes(&self, code: &str) -> bool {
        match self {
            Scope::All => true,
            Scope::State(s) => s == code,
        }
    }
}

impl FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "" => Err(Error::Config("empty scenario scope".into())),
            "ALL" | "ALL_STATES" => Ok(Scope::All),
            code => Ok(Scope::State(code.to_string())),
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::All => f.write_str("ALL"),
            Scope::State(s) => f.write_str(s),
        }
    }
}

/// Spells imposed by strict scenarios. An open end runs to the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StrictDates {
    pub mask: (NaiveDate, Option<NaiveDate>),
    pub stay_home: (NaiveDate, Option<NaiveDate>),
    pub travel_ban: (NaiveDate, Option<NaiveDate>),
}

impl Default for StrictDates {
    fn default() -> Self {
        let day = |m, d| NaiveDate::from_ymd_opt(2020, m, d).expect("valid date");
        StrictDates {
            mask: (day(4, 17), None),
            stay_home: (day(3, 19), Some(day(6, 9))),
            travel_ban: (day(3, 17), None),
        }
    }
}

impl StrictDates {
    pub fn get(&self, kind: PolicyKind) -> (NaiveDate, Option<NaiveDate>) {
        match kind {
            PolicyKind::Mask => self.mask,
            PolicyKind::StayHome => self.stay_home,
            PolicyKind::TravelBan => self.travel_ban,
        }
    }

    pub fn get_mut(&mut self, kind: PolicyKind) -> &mut (NaiveDate, Option<NaiveDate>) {
        match kind {
            PolicyKind::Mask => &mut self.mask,
            PolicyKind::StayHome => &mut self.stay_home,
            PolicyKind::TravelBan => &mut self.travel_ban,
        }
    }
}

/// A scenario before it is applied to an observed calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub kind: ScenarioKind,
    pub policies: Vec<PolicyKind>,
    pub scope: Scope,
    pub dates: StrictDates,
}

impl ScenarioSpec {
    /// One copy per state, each scoped to that state and named `name:CODE`.
    pub fn state_by_state(&self, country: &Country) -> Vec<ScenarioSpec> {
        country
            .codes()
            .iter()
            .map(|c| ScenarioSpec {
                name: format!("{}:{c}", self.name),
                scope: Scope::State(c.clone()),
                ..self.clone()
            })
            .collect()
    }
}

/// A fictitious calendar ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub calendar: PolicyCalendar,
    pub scope: Scope,
    pub description: String,
}

impl Scenario {
    /// The observed calendar itself.
    pub fn identity(name: &str, observed: &PolicyCalendar, scope: Scope) -> Scenario {
        Scenario {
            name: name.to_string(),
            calendar: observed.clone(),
            scope,
            description: "observed policies".into(),
        }
    }
}

/// Applies `spec` to the observed calendar. Strict spells starting after
/// `horizon` are dropped and open or late ends are cut at `horizon`.
pub fn build_scenario(
    spec: &ScenarioSpec,
    observed: &PolicyCalendar,
    country: &Country,
    horizon: NaiveDate,
) -> Result<Scenario> {
    if spec.policies.is_empty() {
        return Err(Error::Config(format!("scenario `{}` names no policies", spec.name)));
    }
    let states: Vec<String> = match &spec.scope {
        Scope::All => country.codes().to_vec(),
        Scope::State(code) => {
            if country.index_of(code).is_none() {
                return Err(Error::Config(format!("scenario `{}`: unknown state `{code}`", spec.name)));
            }
            vec![code.clone()]
        }
    };
    let mut calendar = observed.clone();
    for kind in &spec.policies {
        calendar = calendar.without(*kind, Some(&states));
    }
    if spec.kind == ScenarioKind::Strict {
        let mut extra = Vec::new();
        for kind in &spec.policies {
            let (start, end) = spec.dates.get(*kind);
            let end = end.map_or(horizon, |e| e.min(horizon));
            if start > end {
                continue;
            }
            extra.extend(states.iter().map(|s| PolicyInterval {
                state: s.clone(),
                kind: *kind,
                start,
                end,
            }));
        }
        calendar = calendar.with(extra)?;
    }
    let policies: Vec<&str> = spec.policies.iter().map(|k| k.token()).collect();
    let scope = match &spec.scope {
        Scope::All => "all states".to_string(),
        Scope::State(s) => s.clone(),
    };
    Ok(Scenario {
        name: spec.name.clone(),
        calendar,
        scope: spec.scope.clone(),
        description: format!("{} {} in {scope}", spec.kind, policies.join("+")),
    })
}

/// Mask mandates in every state from `start` to `horizon`, other policies as
/// observed.
pub fn mask_scenario(start: NaiveDate, horizon: NaiveDate, observed: &PolicyCalendar, country: &Country) -> Result<Scenario> {
    let dates = StrictDates {
        mask: (start, None),
        ..Default::default()
    };
    let spec = ScenarioSpec {
        name: format!("mask_from_{start}"),
        kind: ScenarioKind::Strict,
        policies: vec![PolicyKind::Mask],
        scope: Scope::All,
        dates,
    };
    build_scenario(&spec, observed, country, horizon)
}
