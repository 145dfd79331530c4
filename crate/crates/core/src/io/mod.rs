//! File formats: CSV inputs and outputs, the parameter and scenario text
//! files, and metadata sidecars.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::counterfactual::{ScenarioKind, ScenarioSpec, Scope, StrictDates};
use crate::error::{Error, Result};
use crate::estimation::DeathPanel;
use crate::mobility::MobilitySpec;
use crate::model::{Country, ModelParams};
use crate::policy::{PolicyCalendar, PolicyInterval, PolicyKind};

/// Cumulative counts may dip below their running maximum by at most this
/// fraction before a load fails.
pub const MAX_DIP: f64 = 0.05;

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn csv_error(source: &str, e: csv::Error) -> Error {
    Error::Csv {
        path: source.to_string(),
        source: e,
    }
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r)
}

/// Reads rows of `T`, returning each with its 1-based line number.
fn rows<T: for<'de> Deserialize<'de>, R: Read>(r: R, source: &str, header: &[&str]) -> Result<Vec<(u64, T)>> {
    let mut rdr = reader(r);
    let found = rdr.headers().map_err(|e| csv_error(source, e))?.clone();
    if found.is_empty() {
        return Ok(Vec::new());
    }
    if found.iter().collect::<Vec<_>>() != header {
        return Err(Error::Data(format!(
            "{source}: header is `{}`, expected `{}`",
            found.iter().collect::<Vec<_>>().join(","),
            header.join(",")
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(source, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row: T = rec
            .deserialize(Some(&found))
            .map_err(|e| Error::Data(format!("{source}: line {line}: {e}")))?;
        out.push((line, row));
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct DeathRow {
    date: NaiveDate,
    state: String,
    cumulative_deaths: f64,
}

pub const DEATHS_HEADER: [&str; 3] = ["date", "state", "cumulative_deaths"];

/// Loads a long-format deaths file into a dense panel over every date from
/// the first to the last row. Columns follow `roster` order, restricted to
/// the states present in the file.
///
/// Gaps are forward-filled (zero before a state's first row) and dips of at
/// most [`MAX_DIP`] below the running maximum are raised to it; both are
/// logged as warnings.
pub fn read_deaths<R: Read>(r: R, source: &str, roster: &Country) -> Result<DeathPanel> {
    let rows: Vec<(u64, DeathRow)> = rows(r, source, &DEATHS_HEADER)?;
    if rows.is_empty() {
        return Err(Error::Data(format!("{source}: no death records")));
    }
    let mut seen = HashSet::new();
    for (line, row) in &rows {
        if roster.index_of(&row.state).is_none() {
            return Err(Error::Data(format!("{source}: line {line}: unknown state code `{}`", row.state)));
        }
        if !(row.cumulative_deaths.is_finite() && row.cumulative_deaths >= 0.0) {
            return Err(Error::Data(format!("{source}: line {line}: invalid count {}", row.cumulative_deaths)));
        }
        if !seen.insert((row.date, row.state.as_str())) {
            return Err(Error::Data(format!(
                "{source}: line {line}: duplicate record for {} on {}",
                row.state, row.date
            )));
        }
    }
    let first = rows.iter().map(|(_, r)| r.date).min().expect("non-empty");
    let last = rows.iter().map(|(_, r)| r.date).max().expect("non-empty");
    let dates: Vec<NaiveDate> = first.iter_days().take_while(|d| *d <= last).collect();
    let present: HashSet<&str> = rows.iter().map(|(_, r)| r.state.as_str()).collect();
    let codes: Vec<String> = roster.codes().iter().filter(|c| present.contains(c.as_str())).cloned().collect();
    let col: HashMap<&str, usize> = codes.iter().enumerate().map(|(k, c)| (c.as_str(), k)).collect();
    let mut cells: Vec<Option<f64>> = vec![None; dates.len() * codes.len()];
    for (_, row) in &rows {
        let t = (row.date - first).num_days() as usize;
        cells[t * codes.len() + col[row.state.as_str()]] = Some(row.cumulative_deaths);
    }
    let mut raw = DMatrix::zeros(dates.len(), codes.len());
    for (j, code) in codes.iter().enumerate() {
        let mut filled = 0;
        let mut dips = 0;
        let mut running = 0.0f64;
        let mut prev: Option<f64> = None;
        for t in 0..dates.len() {
            let v = match cells[t * codes.len() + j] {
                Some(v) => v,
                None => {
                    filled += 1;
                    prev.unwrap_or(0.0)
                }
            };
            let v = if v < running {
                if v < running * (1.0 - MAX_DIP) {
                    return Err(Error::Data(format!(
                        "{source}: {code} drops from {running} to {v} on {}",
                        dates[t]
                    )));
                }
                dips += 1;
                running
            } else {
                v
            };
            running = running.max(v);
            prev = Some(v);
            raw[(t, j)] = v;
        }
        if filled > 0 {
            log::warn!("{source}: {code}: filled {filled} missing dates");
        }
        if dips > 0 {
            log::warn!("{source}: {code}: raised {dips} small dips to the running maximum");
        }
    }
    DeathPanel::new(dates, codes, raw)
}

pub fn load_deaths(path: &Path, roster: &Country) -> Result<DeathPanel> {
    read_deaths(open(path)?, &path.display().to_string(), roster)
}

/// Writes the raw counts of `panel` in long format, date-major.
pub fn write_deaths<W: Write>(w: W, panel: &DeathPanel) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let err = |e| csv_error("deaths output", e);
    wtr.write_record(DEATHS_HEADER).map_err(err)?;
    for (t, date) in panel.dates.iter().enumerate() {
        for (j, code) in panel.codes.iter().enumerate() {
            wtr.write_record([&date.to_string(), code, &panel.raw[(t, j)].to_string()])
                .map_err(err)?;
        }
    }
    wtr.flush().map_err(|e| Error::Io {
        path: "deaths output".into(),
        source: e,
    })
}

#[derive(Debug, Deserialize)]
struct FlowRow {
    origin: String,
    destination: String,
    daily_fraction: f64,
}

pub const FLOW_HEADER: [&str; 3] = ["origin", "destination", "daily_fraction"];

/// Dense `N x N` flow matrix in `roster` order; absent pairs are zero. An
/// empty input gives the zero matrix.
pub fn read_flows<R: Read>(r: R, source: &str, roster: &Country) -> Result<DMatrix<f64>> {
    let n = roster.len();
    let mut w = DMatrix::zeros(n, n);
    let mut seen = HashSet::new();
    for (line, row) in rows::<FlowRow, _>(r, source, &FLOW_HEADER)? {
        let at = |code: &str| {
            roster
                .index_of(code)
                .ok_or_else(|| Error::Data(format!("{source}: line {line}: unknown state code `{code}`")))
        };
        let (i, j) = (at(&row.origin)?, at(&row.destination)?);
        if i == j {
            return Err(Error::Data(format!("{source}: line {line}: self-flow for {}", row.origin)));
        }
        if !(0.0..1.0).contains(&row.daily_fraction) {
            return Err(Error::Data(format!(
                "{source}: line {line}: fraction {} outside [0,1)",
                row.daily_fraction
            )));
        }
        if !seen.insert((i, j)) {
            return Err(Error::Data(format!(
                "{source}: line {line}: duplicate pair {} -> {}",
                row.origin, row.destination
            )));
        }
        w[(i, j)] = row.daily_fraction;
    }
    for (i, code) in roster.codes().iter().enumerate() {
        let s = w.row(i).sum();
        if s >= 1.0 {
            return Err(Error::Data(format!("{source}: outflows of {code} sum to {s} (must be < 1)")));
        }
    }
    Ok(w)
}

pub fn load_mobility(travel: &Path, commute: &Path, roster: &Country) -> Result<MobilitySpec> {
    let t = read_flows(open(travel)?, &travel.display().to_string(), roster)?;
    let c = read_flows(open(commute)?, &commute.display().to_string(), roster)?;
    MobilitySpec::new(t, c)
}

#[derive(Debug, Deserialize)]
struct PolicyRow {
    state: String,
    policy: String,
    start_date: NaiveDate,
    end_date: NaiveDate,
}

pub const POLICY_HEADER: [&str; 4] = ["state", "policy", "start_date", "end_date"];

pub fn read_policies<R: Read>(r: R, source: &str, roster: &Country) -> Result<PolicyCalendar> {
    let mut entries = Vec::new();
    for (line, row) in rows::<PolicyRow, _>(r, source, &POLICY_HEADER)? {
        let at = |e: Error| Error::Data(format!("{source}: line {line}: {e}"));
        if roster.index_of(&row.state).is_none() {
            return Err(Error::Data(format!("{source}: line {line}: unknown state code `{}`", row.state)));
        }
        let kind: PolicyKind = row.policy.parse().map_err(at)?;
        if row.end_date < row.start_date {
            return Err(Error::Data(format!(
                "{source}: line {line}: {} {kind} ends before it starts",
                row.state
            )));
        }
        entries.push(PolicyInterval {
            state: row.state,
            kind,
            start: row.start_date,
            end: row.end_date,
        });
    }
    PolicyCalendar::new(entries)
}

pub fn load_policies(path: &Path, roster: &Country) -> Result<PolicyCalendar> {
    read_policies(open(path)?, &path.display().to_string(), roster)
}

pub fn write_policies<W: Write>(w: W, calendar: &PolicyCalendar) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let err = |e| csv_error("policy output", e);
    wtr.write_record(POLICY_HEADER).map_err(err)?;
    for e in calendar.entries() {
        wtr.write_record([e.state.as_str(), e.kind.token(), &e.start.to_string(), &e.end.to_string()])
            .map_err(err)?;
    }
    wtr.flush().map_err(|e| Error::Io {
        path: "policy output".into(),
        source: e,
    })
}

#[derive(Debug, Deserialize)]
struct PopulationRow {
    state: String,
    population: f64,
}

/// Roster from a `state,population` file, in file order.
pub fn read_country<R: Read>(r: R, source: &str) -> Result<Country> {
    let rows: Vec<(u64, PopulationRow)> = rows(r, source, &["state", "population"])?;
    Country::new(
        rows.iter().map(|(_, r)| r.state.clone()).collect(),
        rows.iter().map(|(_, r)| r.population).collect(),
    )
    .and_then(|c| match c.violations().first() {
        Some(v) => Err(Error::Data(format!("{source}: {v}"))),
        None => Ok(c),
    })
}

pub fn load_country(path: &Path) -> Result<Country> {
    read_country(open(path)?, &path.display().to_string())
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

/// Parses `key = value` lines over `base`. Keys are [`ModelParams`] field
/// names; unknown or repeated keys are errors. `#` starts a comment.
pub fn parse_params(text: &str, base: &ModelParams) -> Result<ModelParams> {
    let mut p = *base;
    let mut seen = HashSet::new();
    for (k, raw) in text.lines().enumerate() {
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Config(format!("params line {}: {msg}", k + 1));
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim();
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| bad(format!("`{}` is not a number", value.trim())))?;
        if !seen.insert(key.to_string()) {
            return Err(bad(format!("`{key}` set twice")));
        }
        p.set(key, value).map_err(|e| bad(e.to_string()))?;
    }
    if let Some(v) = p.violations().first() {
        return Err(Error::Config(format!("params: {v}")));
    }
    Ok(p)
}

pub fn load_params(path: &Path, base: &ModelParams) -> Result<ModelParams> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_params(&text, base)
}

pub fn format_params(p: &ModelParams) -> String {
    ModelParams::FIELD_NAMES
        .iter()
        .map(|name| format!("{name} = {}\n", p.get(name).expect("field names are valid")))
        .collect()
}

/// Parses scenario lines `name | kind | policies | scope | overrides`.
///
/// `policies` is a comma list of policy tokens or `ALL`. `overrides` is
/// empty, `-`, or a `;` list of `POLICY.start=DATE` / `POLICY.end=DATE`
/// (`POLICY.end=horizon` reopens the end). Blank lines and `#` comments are
/// skipped.
pub fn parse_scenarios(text: &str) -> Result<Vec<ScenarioSpec>> {
    let mut out: Vec<ScenarioSpec> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Config(format!("scenario line {}: {msg}", k + 1));
        let fields: Vec<&str> = line.split('|').map(str::trim).collect();
        if !(4..=5).contains(&fields.len()) {
            return Err(bad(format!("expected 5 `|`-separated fields, got {}", fields.len())));
        }
        let name = fields[0];
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(bad(format!("invalid scenario name `{name}`")));
        }
        if out.iter().any(|s| s.name == name) {
            return Err(bad(format!("duplicate scenario `{name}`")));
        }
        let kind: ScenarioKind = fields[1].parse().map_err(|e: Error| bad(e.to_string()))?;
        let policies = parse_policy_list(fields[2]).map_err(|e| bad(e.to_string()))?;
        let scope: Scope = fields[3].parse().map_err(|e: Error| bad(e.to_string()))?;
        let mut dates = StrictDates::default();
        for item in fields.get(4).copied().unwrap_or("").split(';').map(str::trim) {
            if item.is_empty() || item == "-" {
                continue;
            }
            apply_override(&mut dates, item).map_err(|e| bad(e.to_string()))?;
        }
        out.push(ScenarioSpec {
            name: name.to_string(),
            kind,
            policies,
            scope,
            dates,
        });
    }
    Ok(out)
}

fn parse_policy_list(s: &str) -> Result<Vec<PolicyKind>> {
    if s.trim() == "ALL" {
        return Ok(PolicyKind::ALL.to_vec());
    }
    let mut out: Vec<PolicyKind> = Vec::new();
    for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let k: PolicyKind = tok.parse()?;
        if !out.contains(&k) {
            out.push(k);
        }
    }
    if out.is_empty() {
        return Err(Error::Config("no policies listed".into()));
    }
    Ok(out)
}

fn apply_override(dates: &mut StrictDates, item: &str) -> Result<()> {
    let bad = || Error::Config(format!("override `{item}` is not `POLICY.start=DATE` or `POLICY.end=DATE`"));
    let (lhs, value) = item.split_once('=').ok_or_else(bad)?;
    let (policy, field) = lhs.trim().split_once('.').ok_or_else(bad)?;
    let kind: PolicyKind = policy.parse()?;
    let value = value.trim();
    let date = || NaiveDate::parse_from_str(value, "%Y-%m-%d").map_err(|_| bad());
    let slot = dates.get_mut(kind);
    match field {
        "start" => slot.0 = date()?,
        "end" if value == "horizon" => slot.1 = None,
        "end" => slot.1 = Some(date()?),
        _ => return Err(bad()),
    }
    if slot.1.is_some_and(|e| e < slot.0) {
        return Err(Error::Config(format!("override `{item}` leaves {kind} ending before it starts")));
    }
    Ok(())
}

pub fn load_scenarios(path: &Path) -> Result<Vec<ScenarioSpec>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenarios(&text)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(sha256_hex(&bytes))
}

/// Provenance written next to every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub params: ModelParams,
    /// Input path -> sha256 of its contents.
    pub inputs: BTreeMap<String, String>,
    pub seed: Option<u64>,
    /// Command-specific settings (horizon, scenario, ...).
    pub settings: BTreeMap<String, String>,
}

impl RunMetadata {
    pub fn new(command: &str, params: &ModelParams) -> Self {
        RunMetadata {
            tool: "epistate".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            params: *params,
            inputs: BTreeMap::new(),
            seed: None,
            settings: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metadata serializes");
        s.push('\n');
        s
    }
}

/// `<output>.meta.json`.
pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    output.with_file_name(name)
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    let mut tmp = path.as_os_str().to_os_string();
    tmp.push(".part");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, contents).map_err(io_err)?;
    std::fs::rename(&tmp, path).map_err(|source| {
        let _ = std::fs::remove_file(&tmp);
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    })
}

/// Writes an output file and its metadata sidecar.
pub fn write_with_metadata(path: &Path, contents: &[u8], meta: &RunMetadata) -> Result<()> {
    write_atomic(path, contents)?;
    write_atomic(&sidecar_path(path), meta.to_json().as_bytes())
}

/// Plot-ready long table `date,series,value`.
pub fn long_table<'a>(rows: impl IntoIterator<Item = (NaiveDate, &'a str, f64)>) -> String {
    let mut out = String::from("date,series,value\n");
    for (d, s, v) in rows {
        out.push_str(&format!("{d},{s},{v}\n"));
    }
    out
}

/// Converts a death-count API payload to the deaths CSV schema.
///
/// Accepts either CSV already in that schema or a JSON array of records
/// with `date` (`YYYYMMDD` integer or ISO string), `state`, and a
/// cumulative `death` count (`null` rows are skipped). Output rows are
/// sorted by date, then state.
pub fn deaths_csv_from_payload(payload: &[u8]) -> Result<String> {
    let text = std::str::from_utf8(payload).map_err(|_| Error::Data("payload is not UTF-8".into()))?;
    let trimmed = text.trim_start();
    let mut records: Vec<(NaiveDate, String, f64)> = Vec::new();
    if trimmed.starts_with('[') {
        let items: Vec<serde_json::Value> =
            serde_json::from_str(trimmed).map_err(|e| Error::Data(format!("payload: {e}")))?;
        for (k, item) in items.iter().enumerate() {
            let bad = |what: &str| Error::Data(format!("payload record {k}: {what}"));
            let date = match item.get("date") {
                Some(serde_json::Value::Number(n)) => n
                    .as_u64()
                    .and_then(|v| NaiveDate::parse_from_str(&v.to_string(), "%Y%m%d").ok()),
                Some(serde_json::Value::String(s)) => NaiveDate::parse_from_str(s, "%Y-%m-%d")
                    .or_else(|_| NaiveDate::parse_from_str(s, "%Y%m%d"))
                    .ok(),
                _ => None,
            }
            .ok_or_else(|| bad("missing or malformed `date`"))?;
            let state = item
                .get("state")
                .and_then(|s| s.as_str())
                .ok_or_else(|| bad("missing `state`"))?;
            let death = match item.get("death") {
                Some(serde_json::Value::Null) => continue,
                Some(v) => v.as_f64().ok_or_else(|| bad("non-numeric `death`"))?,
                None => return Err(bad("missing `death`")),
            };
            records.push((date, state.to_string(), death));
        }
    } else {
        for (_, row) in rows::<DeathRow, _>(text.as_bytes(), "payload", &DEATHS_HEADER)? {
            records.push((row.date, row.state, row.cumulative_deaths));
        }
    }
    if records.is_empty() {
        return Err(Error::Data("payload contains no death records".into()));
    }
    records.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    let mut out = String::from("date,state,cumulative_deaths\n");
    for (d, s, v) in records {
        out.push_str(&format!("{d},{s},{v}\n"));
    }
    Ok(out)
}
