use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::Duration;

use epistate::counterfactual::Baseline;
use epistate::estimation::{seasonal_adjust, DeathPanel, Problem};
use epistate::filter::{initial_belief, GaussianBelief, ObservationSeries};
use epistate::io::{self, RunMetadata};
use epistate::mobility::MobilitySpec;
use epistate::{Country, ModelParams, PolicyCalendar};

use crate::InputArgs;

impl InputArgs {
    fn path(&self, explicit: &Option<PathBuf>, default: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.data_dir.join(default))
    }

    fn optional(&self, explicit: &Option<PathBuf>, default: &str) -> Option<PathBuf> {
        explicit.clone().or_else(|| {
            let p = self.data_dir.join(default);
            p.exists().then_some(p)
        })
    }
}

fn require(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!("input file {} does not exist", path.display());
    }
    Ok(())
}

/// Roster, calendar, mobility and parameters; everything but deaths.
#[derive(Debug)]
pub struct ModelInputs {
    pub country: Country,
    pub calendar: PolicyCalendar,
    pub mobility: MobilitySpec,
    pub params: ModelParams,
    pub files: Vec<PathBuf>,
}

pub fn load_model(args: &InputArgs) -> Result<ModelInputs> {
    let mut files = Vec::new();
    let country = match args.optional(&args.populations, "populations.csv") {
        Some(p) => {
            require(&p)?;
            files.push(p.clone());
            io::load_country(&p)?
        }
        None => Country::us_states_2019(),
    };
    let params = match args.optional(&args.params, "params.txt") {
        Some(p) => {
            require(&p)?;
            files.push(p.clone());
            io::load_params(&p, &ModelParams::default())?
        }
        None => ModelParams::default(),
    };
    let travel = args.path(&args.travel, "travel.csv");
    let commute = args.path(&args.commute, "commute.csv");
    let policies = args.path(&args.policies, "policies.csv");
    for p in [&travel, &commute, &policies] {
        require(p)?;
    }
    let mobility = io::load_mobility(&travel, &commute, &country)?;
    let calendar = io::load_policies(&policies, &country)?;
    files.extend([travel, commute, policies]);
    Ok(ModelInputs {
        country,
        calendar,
        mobility,
        params,
        files,
    })
}

/// Every input of a filtering run, restricted to the states with deaths
/// data.
#[derive(Debug)]
pub struct Data {
    pub country: Country,
    pub panel: DeathPanel,
    pub observations: ObservationSeries,
    pub calendar: PolicyCalendar,
    pub mobility: MobilitySpec,
    pub params: ModelParams,
    pub files: Vec<PathBuf>,
    pub adjusted: bool,
}

pub fn load(args: &InputArgs) -> Result<Data> {
    let model = load_model(args)?;
    let deaths = args.path(&args.deaths, "deaths.csv");
    require(&deaths)?;
    let panel = io::load_deaths(&deaths, &model.country)?;
    let codes: Vec<&str> = panel.codes.iter().map(String::as_str).collect();
    let country = model.country.subset(&codes)?;
    let idx: Vec<usize> = codes
        .iter()
        .map(|c| model.country.index_of(c).expect("panel codes come from the roster"))
        .collect();
    let mobility = model.mobility.select(&idx);
    let calendar = model.calendar.restricted_to(&country);
    let panel = if args.raw {
        panel
    } else {
        seasonal_adjust(&panel).context("seasonal adjustment")?
    };
    let observations = panel.observations();
    let mut files = model.files;
    files.insert(0, deaths);
    if let Err(v) = epistate::model::validate(&country, &model.params, &calendar, &mobility) {
        bail!("invalid configuration:\n  {}", v.join("\n  "));
    }
    Ok(Data {
        country,
        panel,
        observations,
        calendar,
        mobility,
        params: model.params,
        files,
        adjusted: !args.raw,
    })
}

impl Data {
    pub fn problem(&self) -> Problem<'_> {
        Problem {
            country: &self.country,
            calendar: &self.calendar,
            mobility: &self.mobility,
            observations: &self.observations,
        }
    }

    pub fn init(&self) -> GaussianBelief {
        initial_belief(&self.country, &self.params, self.observations.dates[0] - Duration::days(1))
    }

    pub fn baseline<'a>(&'a self, init: &'a GaussianBelief) -> Baseline<'a> {
        Baseline {
            country: &self.country,
            params: &self.params,
            calendar: &self.calendar,
            mobility: &self.mobility,
            observations: &self.observations,
            init,
        }
    }

    pub fn metadata(&self, command: &str) -> Result<RunMetadata> {
        let mut meta = RunMetadata::new(command, &self.params);
        for f in &self.files {
            meta.add_input(f)?;
        }
        meta.settings.insert("seasonal_adjustment".into(), self.adjusted.to_string());
        Ok(meta)
    }
}
