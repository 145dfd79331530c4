use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use chrono::{NaiveDate, Utc};
use nalgebra::DVector;

use epistate::counterfactual::{
    build_scenario, daily_dates, excess_report, mask_date_sweep, run_batch, Scenario, ScenarioSpec,
};
use epistate::dynamics::effective_r;
use epistate::estimation::{fit as fit_params, sensitivity_sweep, Bounds, FitOptions, NelderMeadOptions};
use epistate::filter::{bf_smooth_rows, filter_panel, Retain, SmoothedRows};
use epistate::io::{self, RunMetadata};
use epistate::model::{Block, LatentState};
use epistate::policy::multiplier_path;
use epistate::synth;
use epistate::Exec;

use crate::inputs::{self, Data};
use crate::output::{date_list, emit, opt, out_dir, text_cell, Table, COMPARTMENTS};
use crate::{InputArgs, OutArgs};

pub const DEFAULT_FETCH_URL: &str = "https://api.covidtracking.com/v1/states/daily.json";

/// Scenarios run when no scenario file is given.
pub const BUILTIN_SCENARIOS: &str = "\
strict_all        | STRICT | ALL        | ALL |
strict_mask       | STRICT | MASK       | ALL |
strict_stay_home  | STRICT | STAY_HOME  | ALL |
strict_travel_ban | STRICT | TRAVEL_BAN | ALL |
early_travel_ban  | STRICT | TRAVEL_BAN | ALL | TRAVEL_BAN.start=2020-02-12
loose_all         | LOOSE  | ALL        | ALL |
loose_mask        | LOOSE  | MASK       | ALL |
loose_stay_home   | LOOSE  | STAY_HOME  | ALL |
loose_travel_ban  | LOOSE  | TRAVEL_BAN | ALL |
";

pub fn validate(args: &InputArgs) -> Result<()> {
    let data = inputs::load(args)?;
    println!(
        "ok: {} states, deaths {}, {} policy spells, {:.0} deaths at the last date",
        data.country.len(),
        date_list(&data.observations.dates),
        data.calendar.entries().len(),
        data.panel.national_final()
    );
    Ok(())
}

pub fn fit(args: &InputArgs, out: &OutArgs, max_evals: usize) -> Result<()> {
    let data = inputs::load(args)?;
    let opts = FitOptions {
        nelder_mead: NelderMeadOptions {
            max_evals,
            ..Default::default()
        },
        exec: Exec::default(),
    };
    let r = fit_params(&data.problem(), &data.params, &Bounds::default(), &opts)?;
    let dir = out_dir(&out.out)?;
    let mut meta = data.metadata("fit")?;
    meta.settings.insert("max_evals".into(), max_evals.to_string());
    let json = serde_json::json!({
        "beta_bar": r.beta_bar,
        "sigma": r.sigma,
        "rho": r.rho,
        "kappa": r.kappa,
        "loglik": r.loglik,
        "start_loglik": r.start_loglik,
        "evaluations": r.evaluations,
        "iterations": r.iterations,
        "converged": r.converged,
        "at_bound": r.at_bound,
    });
    emit(dir, "fit.json", &format!("{}\n", serde_json::to_string_pretty(&json)?), &meta)?;
    emit(dir, "fitted_params.txt", &io::format_params(&r.params(&data.params)), &meta)?;
    println!(
        "beta_bar = {:.6}, sigma = {:.6}, rho = {:.4}, loglik = {:.3}{}{}",
        r.beta_bar,
        r.sigma,
        r.rho,
        r.loglik,
        if r.converged { "" } else { " (not converged)" },
        if r.at_bound.is_empty() {
            String::new()
        } else {
            format!(" (at bound: {})", r.at_bound.join(", "))
        }
    );
    Ok(())
}

pub fn filter(args: &InputArgs, out: &OutArgs) -> Result<()> {
    let data = inputs::load(args)?;
    let init = data.init();
    let run = filter_panel(
        &data.country,
        &data.params,
        &data.calendar,
        &data.mobility,
        &data.observations,
        &init,
        Retain::Moments,
    )?;
    let n = data.country.len();
    let mut t = Table::new(&["date", "state", "compartment", "mean", "sd"]);
    for step in &run.steps {
        for (b, name) in COMPARTMENTS.iter().enumerate() {
            for (j, code) in data.country.codes().iter().enumerate() {
                let k = b * n + j;
                t.row(&[
                    &step.date,
                    code,
                    name,
                    &step.filtered_mean[k],
                    &step.filtered_var[k].max(0.0).sqrt(),
                ]);
            }
        }
    }
    let dir = out_dir(&out.out)?;
    let mut meta = data.metadata("filter")?;
    meta.settings.insert("loglik".into(), run.loglik.to_string());
    meta.settings.insert("psd_repairs".into(), run.repairs.to_string());
    emit(dir, "filtered.csv", &t.finish(), &meta)?;
    println!("loglik = {:.3} over {}", run.loglik, date_list(&run.dates()));
    Ok(())
}

/// Bryson-Frazier means of the D, S, I and beta blocks.
fn smoothed(data: &Data) -> Result<SmoothedRows> {
    let n = data.country.len();
    let rows: Vec<usize> = [Block::D, Block::S, Block::I, Block::Beta]
        .iter()
        .flat_map(|b| b.range(n))
        .collect();
    let init = data.init();
    let run = filter_panel(
        &data.country,
        &data.params,
        &data.calendar,
        &data.mobility,
        &data.observations,
        &init,
        Retain::Rows(rows),
    )?;
    Ok(bf_smooth_rows(&run)?)
}

pub fn smooth(args: &InputArgs, out: &OutArgs) -> Result<()> {
    let data = inputs::load(args)?;
    let sm = smoothed(&data)?;
    let n = data.country.len();
    let mut t = Table::new(&["date", "state", "compartment", "mean"]);
    for (date, m) in sm.dates.iter().zip(&sm.means) {
        for (pos, k) in sm.rows.iter().enumerate() {
            t.row(&[date, &data.country.codes()[k % n], &COMPARTMENTS[k / n], &m[pos]]);
        }
    }
    let dir = out_dir(&out.out)?;
    emit(dir, "smoothed.csv", &t.finish(), &data.metadata("smooth")?)?;
    Ok(())
}

pub fn rt(args: &InputArgs, out: &OutArgs) -> Result<()> {
    let data = inputs::load(args)?;
    let sm = smoothed(&data)?;
    let n = data.country.len();
    let thetas = multiplier_path(&data.calendar, &data.params, &data.country, &sm.dates)?;
    let mut rows = Vec::new();
    for ((date, m), theta) in sm.dates.iter().zip(&sm.means).zip(&thetas) {
        // Retained rows are D, S, I, beta blocks in that order.
        let s = m.rows(n, n).map(|v| v.max(0.0));
        let i = m.rows(2 * n, n).map(|v| v.max(0.0));
        let beta = m.rows(3 * n, n).map(|v| v.max(0.0));
        let r = effective_r(&beta, &theta.theta_m, &theta.theta_s, &s, data.country.populations(), &data.params);
        for (j, code) in data.country.codes().iter().enumerate() {
            rows.push((*date, code.clone(), r[j]));
        }
        let total_i = i.sum();
        if total_i > 0.0 {
            rows.push((*date, "national".to_string(), r.dot(&i) / total_i));
        }
    }
    let dir = out_dir(&out.out)?;
    let table = io::long_table(rows.iter().map(|(d, s, v)| (*d, s.as_str(), *v)));
    emit(dir, "rt.csv", &table, &data.metadata("rt")?)?;
    Ok(())
}

pub fn simulate(args: &InputArgs, out: &OutArgs, seed: u64, start: NaiveDate, days: usize, i0: f64) -> Result<()> {
    if !(i0 >= 0.0 && i0.is_finite()) {
        bail!("--i0 must be a non-negative number");
    }
    let model = inputs::load_model(args)?;
    let n = model.country.len();
    let init = LatentState::seeded(
        &model.country,
        &DVector::from_element(n, i0.round()),
        &DVector::from_element(n, model.params.beta_bar),
    );
    let path = synth::simulate(
        &model.country,
        &model.params,
        &model.calendar,
        &model.mobility,
        &init,
        start,
        days,
        seed,
    )?;
    let mut deaths = Table::new(&io::DEATHS_HEADER);
    let mut traj = Table::new(&["date", "state", "compartment", "value"]);
    for ((date, x), obs) in path.dates.iter().zip(&path.states).zip(&path.deaths) {
        for (j, code) in model.country.codes().iter().enumerate() {
            deaths.row(&[date, code, &obs[j]]);
        }
        let v = x.to_vector();
        for (b, name) in COMPARTMENTS.iter().enumerate() {
            for (j, code) in model.country.codes().iter().enumerate() {
                traj.row(&[date, code, name, &v[b * n + j]]);
            }
        }
    }
    let mut meta = RunMetadata::new("simulate", &model.params);
    for f in &model.files {
        meta.add_input(f)?;
    }
    meta.seed = Some(seed);
    meta.settings.insert("start".into(), start.to_string());
    meta.settings.insert("days".into(), days.to_string());
    meta.settings.insert("i0".into(), i0.to_string());
    let dir = out_dir(&out.out)?;
    emit(dir, "simulated_deaths.csv", &deaths.finish(), &meta)?;
    emit(dir, "trajectory.csv", &traj.finish(), &meta)?;
    Ok(())
}

pub struct ScenarioArgs {
    pub names: Vec<String>,
    pub file: Option<PathBuf>,
    pub horizon: Option<NaiveDate>,
}

impl ScenarioArgs {
    fn specs(&self) -> Result<Vec<ScenarioSpec>> {
        let all = match &self.file {
            Some(p) => io::load_scenarios(p)?,
            None => io::parse_scenarios(BUILTIN_SCENARIOS).expect("built-in scenarios parse"),
        };
        if self.names.is_empty() {
            return Ok(all);
        }
        self.names
            .iter()
            .map(|name| {
                all.iter().find(|s| &s.name == name).cloned().ok_or_else(|| {
                    let known: Vec<&str> = all.iter().map(|s| s.name.as_str()).collect();
                    anyhow!("unknown scenario `{name}` (known: {})", known.join(", "))
                })
            })
            .collect()
    }

    fn horizon(&self, data: &Data) -> Result<NaiveDate> {
        let last = *data.observations.dates.last().expect("panels are non-empty");
        let h = self.horizon.unwrap_or(last);
        if h < data.observations.dates[0] || h > last {
            bail!("horizon {h} outside the data range {}", date_list(&data.observations.dates));
        }
        Ok(h)
    }
}

pub fn counterfactual(
    args: &InputArgs,
    out: &OutArgs,
    sc: &ScenarioArgs,
    state_by_state: bool,
    mask_sweep: Option<(NaiveDate, NaiveDate)>,
) -> Result<()> {
    let data = inputs::load(args)?;
    let horizon = sc.horizon(&data)?;
    let mut specs = sc.specs()?;
    if state_by_state {
        specs = specs.iter().flat_map(|s| s.state_by_state(&data.country)).collect();
    }
    let scenarios: Vec<Scenario> = specs
        .iter()
        .map(|s| build_scenario(s, &data.calendar, &data.country, horizon))
        .collect::<epistate::Result<_>>()?;
    let init = data.init();
    let base = data.baseline(&init);
    let results = run_batch(&base, &scenarios, Some(horizon), Exec::default());

    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (s, r) in scenarios.iter().zip(results) {
        match r {
            Ok(r) => ok.push(r),
            Err(e) => failures.push(format!("{}: {e}", s.name)),
        }
    }
    let mut meta = data.metadata("counterfactual")?;
    meta.settings.insert("horizon".into(), horizon.to_string());
    let names: Vec<&str> = scenarios.iter().map(|s| s.name.as_str()).collect();
    meta.settings.insert("scenarios".into(), names.join(","));
    if let Some(f) = &sc.file {
        meta.add_input(f)?;
    }
    let dir = out_dir(&out.out)?;

    let mut excess = Table::new(&["scenario", "state", "baseline", "counterfactual", "excess", "relative"]);
    for row in excess_report(&ok)? {
        excess.row(&[&row.scenario, &row.state, &row.baseline, &row.fictitious, &row.excess, &opt(row.relative)]);
    }
    emit(dir, "excess.csv", &excess.finish(), &meta)?;

    let mut paths = Vec::new();
    for r in &ok {
        for ((d, b), f) in r.dates.iter().zip(&r.baseline).zip(&r.fictitious) {
            paths.push((*d, format!("{}.baseline", r.scenario), b.sum()));
            paths.push((*d, format!("{}.counterfactual", r.scenario), f.sum()));
        }
    }
    emit(dir, "paths.csv", &io::long_table(paths.iter().map(|(d, s, v)| (*d, s.as_str(), *v))), &meta)?;

    let mut summary = format!("horizon: {horizon}\n");
    for (s, r) in scenarios.iter().zip(&ok) {
        let b = r.baseline_at_horizon().sum();
        summary.push_str(&format!(
            "{}: {} | national excess {:+.0} ({:+.2}% of {:.0} baseline deaths)\n",
            s.name,
            s.description,
            r.national_excess(),
            100.0 * r.national_excess() / b,
            b
        ));
    }
    for f in &failures {
        summary.push_str(&format!("FAILED {f}\n"));
    }

    if let Some((from, to)) = mask_sweep {
        let starts = daily_dates(from, to);
        let curve = mask_date_sweep(&base, &starts, Some(horizon), Exec::default());
        let mut t = Table::new(&["start_date", "national_excess", "error"]);
        for (d, r) in &curve {
            match r {
                Ok(v) => t.row(&[d, v, &""]),
                Err(e) => {
                    failures.push(format!("mask sweep {d}: {e}"));
                    t.row(&[d, &"", &text_cell(&e.to_string())])
                }
            }
        }
        emit(dir, "mask_sweep.csv", &t.finish(), &meta)?;
    }
    emit(dir, "summary.txt", &summary, &meta)?;
    print!("{summary}");
    if !failures.is_empty() {
        bail!("{} run(s) failed:\n  {}", failures.len(), failures.join("\n  "));
    }
    Ok(())
}

pub fn sweep(
    args: &InputArgs,
    out: &OutArgs,
    overrides: &[(String, f64)],
    sc: &ScenarioArgs,
    max_evals: usize,
) -> Result<()> {
    let data = inputs::load(args)?;
    let horizon = sc.horizon(&data)?;
    let specs = sc.specs()?;
    let opts = FitOptions {
        nelder_mead: NelderMeadOptions {
            max_evals,
            ..Default::default()
        },
        exec: Exec::default(),
    };
    let rows = sensitivity_sweep(
        &data.problem(),
        &data.params,
        &Bounds::default(),
        &opts,
        &specs,
        Some(horizon),
        overrides,
        Exec::default(),
    );
    let mut header = vec![
        "parameter".to_string(),
        "value".into(),
        "beta_bar".into(),
        "sigma".into(),
        "rho".into(),
        "loglik".into(),
        "converged".into(),
        "error".into(),
    ];
    header.extend(specs.iter().map(|s| format!("excess:{}", s.name)));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new(&header);
    let mut errors = 0;
    for row in &rows {
        let mut cells: Vec<String> = vec![row.parameter.clone(), row.value.to_string()];
        match &row.fit {
            Ok(f) => cells.extend([
                f.beta_bar.to_string(),
                f.sigma.to_string(),
                f.rho.to_string(),
                f.loglik.to_string(),
                f.converged.to_string(),
                String::new(),
            ]),
            Err(e) => {
                errors += 1;
                cells.extend(["", "", "", "", ""].map(String::from));
                cells.push(text_cell(e));
            }
        }
        for c in &row.counterfactuals {
            cells.push(c.national_excess.as_ref().map(|v| v.to_string()).unwrap_or_default());
        }
        let refs: Vec<&dyn std::fmt::Display> = cells.iter().map(|c| c as &dyn std::fmt::Display).collect();
        t.row(&refs);
    }
    let mut meta = data.metadata("sweep")?;
    meta.settings.insert("horizon".into(), horizon.to_string());
    let list: Vec<String> = overrides.iter().map(|(k, v)| format!("{k}={v}")).collect();
    meta.settings.insert("overrides".into(), list.join(","));
    let dir = out_dir(&out.out)?;
    emit(dir, "sweep.csv", &t.finish(), &meta)?;
    if errors > 0 {
        log::warn!("{errors} sweep row(s) failed; see the error column");
    }
    Ok(())
}

pub fn fetch(url: &str, output: &Path) -> Result<()> {
    let mut response = ureq::get(url).call().with_context(|| format!("fetching {url}"))?;
    let body = response
        .body_mut()
        .with_config()
        .limit(1 << 30)
        .read_to_vec()
        .with_context(|| format!("reading response from {url}"))?;
    let csv = io::deaths_csv_from_payload(&body).with_context(|| format!("converting response from {url}"))?;
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    io::write_atomic(output, csv.as_bytes())?;
    let meta: BTreeMap<&str, String> = BTreeMap::from([
        ("url", url.to_string()),
        ("retrieved_at", Utc::now().to_rfc3339()),
        ("payload_sha256", io::sha256_hex(&body)),
        ("sha256", io::sha256_hex(csv.as_bytes())),
        ("rows", (csv.lines().count() - 1).to_string()),
    ]);
    io::write_atomic(
        &io::sidecar_path(output),
        format!("{}\n", serde_json::to_string_pretty(&meta)?).as_bytes(),
    )?;
    println!("wrote {} ({} rows)", output.display(), meta["rows"]);
    Ok(())
}
