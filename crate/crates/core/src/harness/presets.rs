//! Ready-made sweeps for the standard figures, at full or desk scale.

use serde_json::{json, Map, Value};

use crate::config::{SolverConfig, SystemConfig};
use crate::error::{Error, Result};
use crate::harness::experiment::{ExperimentConfig, Scheme, Seeds, Sweep};

pub const PRESET_NAMES: [&str; 4] = ["fig5", "fig6", "fig7", "fig8"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Full,
    Desk,
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Scale::Full),
            "desk" => Ok(Scale::Desk),
            other => Err(Error::Config(format!("unknown scale '{other}' (expected full or desk)"))),
        }
    }
}

fn series(items: Vec<Value>) -> Vec<Map<String, Value>> {
    items.into_iter().map(|v| v.as_object().expect("object literal").clone()).collect()
}

pub fn sweep_preset(name: &str, scale: Scale) -> Result<ExperimentConfig> {
    let desk = scale == Scale::Desk;
    let seeds = Seeds::Count(if desk { 20 } else { 100 });
    let base = SystemConfig { snr_db: 10.0, groups: 4, sub_messages: 2, ..Default::default() };
    let (system, sweep, schemes) = match name {
        "fig5" => {
            let mkn: [(u64, u64, u64); 3] = if desk { [(4, 6, 8), (8, 6, 8), (8, 8, 8)] } else { [(8, 12, 16), (16, 12, 16), (16, 16, 16)] };
            let s = mkn.iter().map(|(m, k, n)| json!({"M": m, "K": k, "N": n})).collect();
            (base, Sweep { axis: "snr_db".into(), values: vec![10.0], series: series(s) }, vec![Scheme::Proposed])
        }
        "fig6" => {
            let (m, k, n) = if desk { (8, 6, 8) } else { (16, 12, 16) };
            let system = SystemConfig { antennas: m, devices: k, irs_elements: n, ..base };
            let s = [1, 2, 4].iter().map(|l| json!({"L_groups": l})).collect();
            let sweep = Sweep { axis: "snr_db".into(), values: vec![0.0, 5.0, 10.0, 15.0, 20.0], series: series(s) };
            (system, sweep, vec![Scheme::Proposed, Scheme::Noma])
        }
        "fig7" => {
            let (m, ns, ks): (usize, [u64; 2], Vec<f64>) =
                if desk { (8, [4, 8], vec![2.0, 4.0, 6.0, 8.0]) } else { (16, [8, 16], vec![4.0, 8.0, 12.0, 16.0]) };
            let system = SystemConfig { antennas: m, ..base };
            let mut s = Vec::new();
            for csit in ["perfect", "estimated"] {
                for n in ns {
                    s.push(json!({"N": n, "csit": csit}));
                }
            }
            (system, Sweep { axis: "K".into(), values: ks, series: series(s) }, vec![Scheme::Proposed])
        }
        "fig8" => {
            let (ms, ns, k): (Vec<u64>, Vec<f64>, usize) =
                if desk { (vec![4, 8], vec![2.0, 4.0, 8.0], 6) } else { (vec![8, 16, 24], vec![4.0, 8.0, 16.0], 12) };
            let system = SystemConfig { devices: k, ..base };
            let s = ms.iter().map(|m| json!({"M": m})).collect();
            (system, Sweep { axis: "N".into(), values: ns, series: series(s) }, vec![Scheme::Proposed])
        }
        other => {
            return Err(Error::Config(format!(
                "unknown preset '{other}' (expected one of {})",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    let cfg = ExperimentConfig { system, solver: SolverConfig::default(), sweep, schemes, seeds };
    cfg.validate()?;
    Ok(cfg)
}
