//! Per-trial result rows and their CSV form.

use std::io::Write;

use crate::ao::AoResult;
use crate::error::{Error, Result};
use crate::harness::experiment::Trial;

pub const COLUMNS: [&str; 14] = [
    "seed",
    "snr_db",
    "M",
    "N",
    "K",
    "I",
    "L_groups",
    "csit_mode",
    "scheme",
    "iter_count",
    "r_min_final",
    "r_min_trace",
    "wall_time_ms",
    "status",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub seed: u64,
    pub snr_db: f64,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub i: usize,
    pub l_groups: usize,
    pub csit_mode: String,
    pub scheme: String,
    pub iter_count: usize,
    /// NaN when the trial failed.
    pub r_min_final: f64,
    pub r_min_trace: Vec<f64>,
    pub wall_time_ms: f64,
    /// `ok` or the error message.
    pub status: String,
}

impl ExperimentRecord {
    pub fn from_outcome(trial: &Trial, outcome: Result<AoResult>, wall_time_ms: f64) -> Self {
        let s = &trial.system;
        let (iter_count, r_min_final, r_min_trace, status) = match outcome {
            Ok(r) => (r.iterations, r.r_min(), r.trace, "ok".to_string()),
            Err(e) => (0, f64::NAN, Vec::new(), format!("error: {e}")),
        };
        Self {
            seed: trial.seed,
            snr_db: s.snr_db,
            m: s.antennas,
            n: s.irs_elements,
            k: s.devices,
            i: s.sub_messages,
            l_groups: s.groups,
            csit_mode: s.csit.as_str().to_string(),
            scheme: trial.scheme.as_str().to_string(),
            iter_count,
            r_min_final,
            r_min_trace,
            wall_time_ms,
            status,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn fields(&self, timing: bool) -> Vec<String> {
        let trace: Vec<String> = self.r_min_trace.iter().map(|x| format_g(*x)).collect();
        vec![
            self.seed.to_string(),
            format_g(self.snr_db),
            self.m.to_string(),
            self.n.to_string(),
            self.k.to_string(),
            self.i.to_string(),
            self.l_groups.to_string(),
            self.csit_mode.clone(),
            self.scheme.clone(),
            self.iter_count.to_string(),
            if self.r_min_final.is_nan() { String::new() } else { format_g(self.r_min_final) },
            trace.join(";"),
            if timing { format_g(self.wall_time_ms) } else { String::new() },
            self.status.clone(),
        ]
    }
}

/// `%g` with six significant digits: fixed notation for exponents in
/// `[-4, 6)`, scientific otherwise, trailing zeros trimmed.
pub fn format_g(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa.to_string()), exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Writes the header and one row per record. Wall times are left empty
/// unless `timing` is set, so repeated runs produce identical bytes.
pub fn write_csv<W: Write>(out: W, records: &[ExperimentRecord], timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in records {
        w.write_record(r.fields(timing))?;
    }
    w.flush().map_err(Error::Io)?;
    Ok(())
}
