//! Containment-policy calendars and the daily policy multipliers they imply.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Country, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PolicyKind {
    #[serde(rename = "MASK")]
    Mask,
    #[serde(rename = "STAY_HOME")]
    StayHome,
    #[serde(rename = "TRAVEL_BAN")]
    TravelBan,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Mask, PolicyKind::StayHome, PolicyKind::TravelBan];

    pub fn token(self) -> &'static str {
        match self {
            PolicyKind::Mask => "MASK",
            PolicyKind::StayHome => "STAY_HOME",
            PolicyKind::TravelBan => "TRAVEL_BAN",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "MASK" => Ok(PolicyKind::Mask),
            "STAY_HOME" => Ok(PolicyKind::StayHome),
            "TRAVEL_BAN" => Ok(PolicyKind::TravelBan),
            other => Err(Error::Config(format!("unknown policy token `{other}`"))),
        }
    }
}

/// One dated policy spell; both ends inclusive.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PolicyInterval {
    pub state: String,
    pub kind: PolicyKind,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl PolicyInterval {
    pub fn covers(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

/// Per-state policy spells. Overlapping or touching spells of the same
/// `(state, kind)` are merged on construction, so entries are disjoint and sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PolicyCalendar {
    entries: Vec<PolicyInterval>,
}

impl PolicyCalendar {
    pub fn new(entries: Vec<PolicyInterval>) -> Result<Self> {
        if let Some(bad) = entries.iter().find(|e| e.end < e.start) {
            return Err(Error::Config(format!(
                "{} {} interval ends ({}) before it starts ({})",
                bad.state, bad.kind, bad.end, bad.start
            )));
        }
        Ok(PolicyCalendar {
            entries: merge(entries),
        })
    }

    pub fn empty() -> Self {
        PolicyCalendar::default()
    }

    pub fn entries(&self) -> &[PolicyInterval] {
        &self.entries
    }

    pub fn is_active(&self, state: &str, kind: PolicyKind, date: NaiveDate) -> bool {
        self.entries
            .iter()
            .any(|e| e.kind == kind && e.state == state && e.covers(date))
    }

    /// Drops every spell of `kind` in the given states (all states if `None`).
    pub fn without(&self, kind: PolicyKind, states: Option<&[String]>) -> PolicyCalendar {
        let entries = self
            .entries
            .iter()
            .filter(|e| !(e.kind == kind && states.is_none_or(|s| s.contains(&e.state))))
            .cloned()
            .collect();
        PolicyCalendar { entries }
    }

    /// Adds spells and re-merges.
    pub fn with(&self, extra: impl IntoIterator<Item = PolicyInterval>) -> Result<PolicyCalendar> {
        let mut all = self.entries.clone();
        all.extend(extra);
        PolicyCalendar::new(all)
    }

    /// Keeps only the spells of states in `country`.
    pub fn restricted_to(&self, country: &Country) -> PolicyCalendar {
        let entries = self
            .entries
            .iter()
            .filter(|e| country.index_of(&e.state).is_some())
            .cloned()
            .collect();
        PolicyCalendar { entries }
    }

    pub fn violations(&self, country: &Country) -> Vec<String> {
        self.entries
            .iter()
            .filter(|e| country.index_of(&e.state).is_none())
            .map(|e| format!("policy calendar references unknown state `{}`", e.state))
            .collect()
    }

    /// Policy spells indexed by state position, for fast daily lookups.
    fn indexed(&self, country: &Country) -> Result<Vec<(usize, &PolicyInterval)>> {
        self.entries
            .iter()
            .map(|e| {
                country.index_of(&e.state).map(|k| (k, e)).ok_or_else(|| {
                    Error::Config(format!("policy calendar references unknown state `{}`", e.state))
                })
            })
            .collect()
    }
}

fn merge(mut entries: Vec<PolicyInterval>) -> Vec<PolicyInterval> {
    entries.sort_by(|a, b| (&a.state, a.kind, a.start).cmp(&(&b.state, b.kind, b.start)));
    let mut out: Vec<PolicyInterval> = Vec::with_capacity(entries.len());
    for e in entries {
        match out.last_mut() {
            Some(last)
                if last.state == e.state
                    && last.kind == e.kind
                    && e.start <= last.end.succ_opt().unwrap_or(last.end) =>
            {
                last.end = last.end.max(e.end);
            }
            _ => out.push(e),
        }
    }
    out
}

/// Per-state multipliers for one day; each entry is either `theta_low` or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyMultipliers {
    pub theta_m: DVector<f64>,
    pub theta_s: DVector<f64>,
    pub theta_t: DVector<f64>,
}

impl PolicyMultipliers {
    pub fn ones(n: usize) -> Self {
        PolicyMultipliers {
            theta_m: DVector::from_element(n, 1.0),
            theta_s: DVector::from_element(n, 1.0),
            theta_t: DVector::from_element(n, 1.0),
        }
    }

    /// `theta_S * theta_M`, the factor applied to the transmission rate.
    pub fn transmission(&self) -> DVector<f64> {
        self.theta_s.component_mul(&self.theta_m)
    }
}

/// Multipliers in force on `date`.
pub fn multipliers_at(
    calendar: &PolicyCalendar,
    params: &ModelParams,
    country: &Country,
    date: NaiveDate,
) -> Result<PolicyMultipliers> {
    let indexed = calendar.indexed(country)?;
    Ok(multipliers_from(&indexed, params, country.len(), date))
}

fn multipliers_from(
    indexed: &[(usize, &PolicyInterval)],
    params: &ModelParams,
    n: usize,
    date: NaiveDate,
) -> PolicyMultipliers {
    let mut out = PolicyMultipliers::ones(n);
    for (k, e) in indexed.iter().filter(|(_, e)| e.covers(date)) {
        match e.kind {
            PolicyKind::Mask => out.theta_m[*k] = params.theta_m_low,
            PolicyKind::StayHome => out.theta_s[*k] = params.theta_s_low,
            PolicyKind::TravelBan => out.theta_t[*k] = params.theta_t_low,
        }
    }
    out
}

/// Multipliers for every date in `dates`.
pub fn multiplier_path(
    calendar: &PolicyCalendar,
    params: &ModelParams,
    country: &Country,
    dates: &[NaiveDate],
) -> Result<Vec<PolicyMultipliers>> {
    let indexed = calendar.indexed(country)?;
    Ok(dates
        .iter()
        .map(|d| multipliers_from(&indexed, params, country.len(), *d))
        .collect())
}
