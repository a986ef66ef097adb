//! Experiment configs and the trial runner.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::ao::run_ao;
use crate::channel::{build_csit, estimate_sigma, sample_channels, ChannelSet, CsitModel};
use crate::config::{CsitMode, SolverConfig, SystemConfig};
use crate::error::{Error, Result};
use crate::harness::records::ExperimentRecord;
use crate::numerics::{CMat, C64};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Proposed,
    /// Same system with every IRS path removed.
    NoIrs,
    /// One sub-message per device.
    Noma,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::NoIrs => "no_irs",
            Scheme::Noma => "noma",
        }
    }
}

/// Keys that may be swept.
pub const SWEEP_AXES: [&str; 7] = ["snr_db", "M", "N", "K", "I", "L_groups", "l_train"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: String,
    pub values: Vec<f64>,
    /// Each entry overrides system fields for one curve; absent means one curve.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series: Vec<Map<String, Value>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Seeds {
    pub fn to_vec(&self) -> Vec<u64> {
        match self {
            Seeds::Count(n) => (0..*n).collect(),
            Seeds::List(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    pub sweep: Sweep,
    pub schemes: Vec<Scheme>,
    pub seeds: Seeds,
}

/// One fully resolved trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub point: usize,
    pub system: SystemConfig,
    pub seed: u64,
    pub scheme: Scheme,
}

fn merge(base: &SystemConfig, overrides: &Map<String, Value>) -> Result<SystemConfig> {
    let mut value = serde_json::to_value(base)?;
    let obj = value.as_object_mut().expect("struct serializes to an object");
    for (k, v) in overrides {
        obj.insert(k.clone(), v.clone());
    }
    serde_json::from_value(value).map_err(|e| Error::Config(format!("invalid override {overrides:?}: {e}")))
}

fn axis_value(axis: &str, x: f64) -> Value {
    match axis {
        "snr_db" | "l_train" => Value::from(x),
        _ => Value::from(x as u64),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Resolved system configs per sweep point, series-major.
    pub fn points(&self) -> Result<Vec<SystemConfig>> {
        if !SWEEP_AXES.contains(&self.sweep.axis.as_str()) {
            return Err(Error::Config(format!(
                "unknown sweep axis '{}' (expected one of {})",
                self.sweep.axis,
                SWEEP_AXES.join(", ")
            )));
        }
        let series = if self.sweep.series.is_empty() { vec![Map::new()] } else { self.sweep.series.clone() };
        let mut out = Vec::new();
        for s in &series {
            let base = merge(&self.system, s)?;
            for &x in &self.sweep.values {
                let mut o = Map::new();
                o.insert(self.sweep.axis.clone(), axis_value(&self.sweep.axis, x));
                out.push(merge(&base, &o)?);
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if self.sweep.values.is_empty() {
            return Err(Error::Config("sweep.values must not be empty".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("schemes must not be empty".into()));
        }
        if self.seeds.to_vec().is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        for (idx, p) in self.points()?.iter().enumerate() {
            p.validate().map_err(|e| Error::Config(format!("sweep point {idx}: {e}")))?;
        }
        Ok(())
    }

    /// Trials sorted by (sweep point, seed, scheme).
    pub fn trials(&self) -> Result<Vec<Trial>> {
        let mut schemes = self.schemes.clone();
        schemes.sort();
        schemes.dedup();
        let mut out = Vec::new();
        for (point, system) in self.points()?.into_iter().enumerate() {
            for seed in self.seeds.to_vec() {
                for &scheme in &schemes {
                    out.push(Trial { point, system: scheme_system(&system, scheme, seed), seed, scheme });
                }
            }
        }
        Ok(out)
    }
}

/// Scheme overrides: NOMA forces `I = 1` (capping `L_groups` at `K`).
fn scheme_system(base: &SystemConfig, scheme: Scheme, seed: u64) -> SystemConfig {
    let mut s = base.clone();
    s.seed = seed;
    if scheme == Scheme::Noma {
        s.sub_messages = 1;
        s.groups = s.groups.min(s.devices);
    }
    s
}

/// Zeroes the covariance entries that belong to IRS columns of the composite.
fn mask_irs(sigma: &CMat, antennas: usize, n1: usize) -> CMat {
    let keep = |idx: usize| idx % n1 == n1 - 1;
    let mut out = sigma.clone();
    for r in 0..antennas * n1 {
        for c in 0..antennas * n1 {
            if !(keep(r) && keep(c)) {
                out[(r, c)] = C64::new(0.0, 0.0);
            }
        }
    }
    out
}

/// Channels and receiver knowledge of one trial.
pub fn trial_channels(sys: &SystemConfig, scheme: Scheme) -> Result<(ChannelSet, CsitModel)> {
    let full = sample_channels(sys, &mut stream_rng(sys.seed, Stream::Channel))?;
    let channels = if scheme == Scheme::NoIrs { full.without_irs() } else { full };
    let csit = match sys.csit {
        CsitMode::Perfect => CsitModel::perfect(&channels),
        CsitMode::Estimated => {
            let n1 = sys.irs_elements + 1;
            let sigma = (0..sys.devices)
                .map(|k| {
                    let s = estimate_sigma(sys, k, &mut stream_rng(sys.seed, Stream::Covariance(k)), sys.covariance_samples)?;
                    Ok(if scheme == Scheme::NoIrs { mask_irs(&s, sys.antennas, n1) } else { s })
                })
                .collect::<Result<Vec<_>>>()?;
            build_csit(sys, &channels, &sigma, &mut stream_rng(sys.seed, Stream::CsitError))?
        }
    };
    Ok((channels, csit))
}

pub fn run_trial(trial: &Trial, solver: &SolverConfig) -> ExperimentRecord {
    let start = Instant::now();
    let outcome = trial_channels(&trial.system, trial.scheme).and_then(|(ch, csit)| {
        run_ao(&trial.system, solver, &ch, &csit, &mut stream_rng(trial.seed, Stream::Solver))
    });
    let wall = start.elapsed().as_secs_f64() * 1e3;
    ExperimentRecord::from_outcome(trial, outcome, wall)
}

/// Runs every trial on `parallelism` threads (`0` = all cores); rows come
/// back in trial order regardless of scheduling.
pub fn run_trials(cfg: &ExperimentConfig, parallelism: usize) -> Result<Vec<ExperimentRecord>> {
    let trials = cfg.trials()?;
    if parallelism == 1 {
        return Ok(trials.iter().map(|t| run_trial(t, &cfg.solver)).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(|| trials.par_iter().map(|t| run_trial(t, &cfg.solver)).collect()))
}
