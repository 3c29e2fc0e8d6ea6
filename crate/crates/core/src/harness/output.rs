//! Result files: one CSV per filter and a JSON summary per run.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{FilterSeries, FilterSummary, PfDiagnostics, Provenance, RunResult};
use crate::error::{Error, Result};
use crate::filters::FilterKind;

pub const SUMMARY_FILE: &str = "summary.json";

const FIXED_COLUMNS: [&str; 6] = [
    "t_s",
    "e_r_rad",
    "e_omega_x_rad_s",
    "e_omega_y_rad_s",
    "e_omega_z_rad_s",
    "group_error",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SummaryFile {
    config: ExperimentConfig,
    filters: Vec<FilterKind>,
    summaries: Vec<FilterSummary>,
    pf: Option<PfDiagnostics>,
    provenance: Provenance,
}

pub fn csv_file_name(kind: FilterKind) -> String {
    format!("{}.csv", kind.name())
}

/// Shortest decimal text that parses back to the same `f64`.
fn fmt(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_series(series: &FilterSeries, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = FIXED_COLUMNS.to_vec();
    header.extend(series.diagnostic_names.iter().map(String::as_str));
    w.write_record(&header)?;
    for i in 0..series.len() {
        let e = series.e_omega_rad_s[i];
        let mut row = vec![
            fmt(series.times_s[i]),
            fmt(series.e_r_rad[i]),
            fmt(e[0]),
            fmt(e[1]),
            fmt(e[2]),
            fmt(series.group_error[i]),
        ];
        row.extend(series.diagnostics[i].iter().map(|v| fmt(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_series(kind: FilterKind, path: &Path) -> Result<FilterSeries> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names.len() < FIXED_COLUMNS.len() || names[..FIXED_COLUMNS.len()] != FIXED_COLUMNS {
        return Err(Error::MalformedResult(format!(
            "{}: unexpected header",
            path.display()
        )));
    }
    let mut series = FilterSeries {
        kind,
        diagnostic_names: names[FIXED_COLUMNS.len()..]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        times_s: Vec::new(),
        e_r_rad: Vec::new(),
        e_omega_rad_s: Vec::new(),
        group_error: Vec::new(),
        diagnostics: Vec::new(),
    };
    for record in r.records() {
        let record = record?;
        let v: Vec<f64> = record
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| Error::MalformedResult(format!("{}: {e}", path.display())))
            })
            .collect::<Result<_>>()?;
        if v.len() != names.len() {
            return Err(Error::MalformedResult(format!(
                "{}: ragged row",
                path.display()
            )));
        }
        series.times_s.push(v[0]);
        series.e_r_rad.push(v[1]);
        series.e_omega_rad_s.push([v[2], v[3], v[4]]);
        series.group_error.push(v[5]);
        series.diagnostics.push(v[FIXED_COLUMNS.len()..].to_vec());
    }
    Ok(series)
}

pub fn write_run(result: &RunResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for s in &result.series {
        write_series(s, &dir.join(csv_file_name(s.kind)))?;
    }
    let summary = SummaryFile {
        config: result.config.clone(),
        filters: result.series.iter().map(|s| s.kind).collect(),
        summaries: result.summaries.clone(),
        pf: result.pf.clone(),
        provenance: result.provenance.clone(),
    };
    fs::write(
        dir.join(SUMMARY_FILE),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    Ok(())
}

pub fn read_run(dir: &Path) -> Result<RunResult> {
    let text = fs::read_to_string(dir.join(SUMMARY_FILE))?;
    let summary: SummaryFile = serde_json::from_str(&text)?;
    let series = summary
        .filters
        .iter()
        .map(|k| read_series(*k, &dir.join(csv_file_name(*k))))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunResult {
        config: summary.config,
        series,
        summaries: summary.summaries,
        pf: summary.pf,
        provenance: summary.provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn awkward_values_round_trip() {
        let series = FilterSeries {
            kind: FilterKind::Mef,
            diagnostic_names: vec!["gain_norm".into()],
            times_s: vec![0.0, 0.1 + 0.2, 1e-300],
            e_r_rad: vec![f64::MIN_POSITIVE, std::f64::consts::PI, 5e-324],
            e_omega_rad_s: vec![
                [-0.0, 1.0 / 3.0, 1e308],
                [f64::MAX, -1e-17, 2.5],
                [0.1, 0.2, 0.3],
            ],
            group_error: vec![0.0, 2.220446049250313e-16, 1.0],
            diagnostics: vec![vec![1.0], vec![f64::NAN], vec![123_456_789.123_456_78]],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        write_series(&series, &path).unwrap();
        let back = read_series(FilterKind::Mef, &path).unwrap();
        assert_eq!(back.times_s, series.times_s);
        assert_eq!(back.e_r_rad, series.e_r_rad);
        assert_eq!(back.e_omega_rad_s, series.e_omega_rad_s);
        assert!(back.e_omega_rad_s[0][0].is_sign_negative());
        assert_eq!(back.group_error, series.group_error);
        assert!(back.diagnostics[1][0].is_nan());
        assert_eq!(back.diagnostics[2], series.diagnostics[2]);
    }

    #[test]
    fn bad_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(matches!(
            read_series(FilterKind::Ekf, &path),
            Err(Error::MalformedResult(_))
        ));
    }
}
