//! Gnuplot script emission from a results CSV.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use crate::error::{Error, Result};
use crate::harness::records::{format_g, COLUMNS};

/// Candidate x-axes in order of preference on ties.
const AXES: [&str; 6] = ["snr_db", "K", "N", "M", "L_groups", "I"];
/// Columns that split curves when they vary.
const SERIES_KEYS: [&str; 7] = ["snr_db", "M", "N", "K", "I", "L_groups", "csit_mode"];

#[derive(Debug, Clone)]
pub struct Curve {
    pub label: String,
    /// `(x, mean, std)` sorted by `x`.
    pub points: Vec<(f64, f64, f64)>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Parses the CSV and aggregates `r_min_final` over seeds.
pub fn curves(csv_text: &str) -> Result<(String, Vec<Curve>)> {
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let missing: Vec<&str> = COLUMNS.iter().copied().filter(|c| !header.iter().any(|h| h == c)).collect();
    if !missing.is_empty() {
        return Err(Error::Validation(format!("CSV is missing columns: {}", missing.join(", "))));
    }
    let mut rows: Vec<BTreeMap<String, String>> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        rows.push(header.iter().cloned().zip(rec.iter().map(str::to_string)).collect());
    }
    if rows.is_empty() {
        return Err(Error::Validation("CSV has no data rows".into()));
    }
    let distinct = |key: &str| rows.iter().map(|r| r[key].clone()).collect::<BTreeSet<_>>().len();
    let mut x_axis = AXES[0];
    for a in AXES {
        if distinct(a) > distinct(x_axis) {
            x_axis = a;
        }
    }
    let varying: Vec<&str> = SERIES_KEYS.iter().copied().filter(|k| *k != x_axis && distinct(k) > 1).collect();

    let mut groups: BTreeMap<String, BTreeMap<u64, (f64, Vec<f64>)>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for r in &rows {
        let Ok(y) = r["r_min_final"].parse::<f64>() else { continue };
        let x: f64 = r[x_axis]
            .parse()
            .map_err(|_| Error::Validation(format!("non-numeric {x_axis} value '{}'", r[x_axis])))?;
        let mut label = r["scheme"].clone();
        for k in &varying {
            let _ = write!(label, " {k}={}", r[*k]);
        }
        if !groups.contains_key(&label) {
            order.push(label.clone());
        }
        groups.entry(label).or_default().entry(x.to_bits()).or_insert((x, Vec::new())).1.push(y);
    }
    if order.is_empty() {
        return Err(Error::Validation("CSV has no successful trials".into()));
    }
    let curves = order
        .into_iter()
        .map(|label| {
            let mut points: Vec<(f64, f64, f64)> = groups[&label]
                .values()
                .map(|(x, ys)| {
                    let (m, s) = mean_std(ys);
                    (*x, m, s)
                })
                .collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Curve { label, points }
        })
        .collect();
    Ok((x_axis.to_string(), curves))
}

/// Self-contained gnuplot script drawing mean ± std of the final min-rate.
pub fn emit_plot_script(csv_text: &str, image_name: &str) -> Result<String> {
    let (x_axis, curves) = curves(csv_text)?;
    let mut s = String::new();
    let _ = writeln!(s, "set terminal pngcairo size 900,600");
    let _ = writeln!(s, "set output '{image_name}'");
    let _ = writeln!(s, "set xlabel '{x_axis}'");
    let _ = writeln!(s, "set ylabel 'minimum rate (bit/s/Hz)'");
    let _ = writeln!(s, "set key outside right");
    let _ = writeln!(s, "set grid");
    for (idx, c) in curves.iter().enumerate() {
        let _ = writeln!(s, "$s{idx} << EOD");
        for (x, m, sd) in &c.points {
            let _ = writeln!(s, "{} {} {}", format_g(*x), format_g(*m), format_g(*sd));
        }
        let _ = writeln!(s, "EOD");
    }
    let plots: Vec<String> = curves
        .iter()
        .enumerate()
        .map(|(idx, c)| format!("$s{idx} using 1:2:3 with yerrorlines title '{}'", c.label.replace('\'', "")))
        .collect();
    let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
    Ok(s)
}
