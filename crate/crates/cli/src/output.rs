//! CSV serialization of trajectories and run summaries.

use gpslab_core::diagnostics::divergence_stats;
use gpslab_core::Trajectory;

use crate::error::{HarnessError, Result};

pub const TRAJECTORY_TAIL: [&str; 7] = [
    "tau1",
    "tau2",
    "tau_local",
    "tau_manifold",
    "offset",
    "cumulative_tau2",
    "lambda2",
];

pub fn trajectory_header(dim: usize) -> Vec<String> {
    let mut header = vec!["t".to_string()];
    header.extend((0..dim).map(|i| format!("x{i}")));
    header.extend(TRAJECTORY_TAIL.iter().map(|s| s.to_string()));
    header
}

fn finish(writer: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    writer
        .into_inner()
        .map_err(|e| HarnessError::io("flushing csv buffer", e.into_error()))
}

fn csv_err(e: csv::Error) -> HarnessError {
    HarnessError::io("writing csv", std::io::Error::other(e))
}

/// One row per main-path state, `t = T..0`.
pub fn trajectory_csv(tr: &Trajectory, dim: usize) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(trajectory_header(dim)).map_err(csv_err)?;
    for (state, rec) in tr.states.iter().zip(&tr.records) {
        let mut row = Vec::with_capacity(8 + dim);
        row.push(state.t.to_string());
        row.extend(state.x.iter().map(f64::to_string));
        row.push(rec.tau1_norm.to_string());
        row.push(rec.tau2_norm.to_string());
        row.push(rec.tau_local_norm.to_string());
        row.push(rec.tau_manifold_norm.to_string());
        row.push(rec.offset.to_string());
        row.push(rec.cumulative_tau2.to_string());
        row.push(rec.lambda2.map(|v| v.to_string()).unwrap_or_default());
        w.write_record(&row).map_err(csv_err)?;
    }
    finish(w)
}

/// Mean and sample standard deviation; the deviation of a single value is 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Per-seed summary figures of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunFigures {
    pub cumulative_tau2: f64,
    pub slope: f64,
    pub late_ratio: f64,
    pub final_offset: f64,
}

impl RunFigures {
    pub fn of(tr: &Trajectory) -> Self {
        let stats = divergence_stats(&tr.cycle_records());
        Self {
            cumulative_tau2: tr.cumulative_tau2(),
            slope: stats.slope,
            late_ratio: stats.late_ratio,
            final_offset: tr.final_offset(),
        }
    }
}

pub const SUMMARY_HEADER: [&str; 11] = [
    "run",
    "method",
    "seeds",
    "cumulative_tau2_mean",
    "cumulative_tau2_std",
    "slope_mean",
    "slope_std",
    "late_ratio_mean",
    "late_ratio_std",
    "final_offset_mean",
    "final_offset_std",
];

pub struct SummaryRow<'a> {
    pub run: &'a str,
    pub method: &'a str,
    pub figures: &'a [RunFigures],
}

pub fn summary_csv(rows: &[SummaryRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    for row in rows {
        let column = |f: fn(&RunFigures) -> f64| {
            let v: Vec<f64> = row.figures.iter().map(f).collect();
            mean_std(&v)
        };
        let mut rec = vec![
            row.run.to_string(),
            row.method.to_string(),
            row.figures.len().to_string(),
        ];
        for (m, s) in [
            column(|f| f.cumulative_tau2),
            column(|f| f.slope),
            column(|f| f.late_ratio),
            column(|f| f.final_offset),
        ] {
            rec.push(m.to_string());
            rec.push(s.to_string());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    finish(w)
}

pub const ABLATION_HEADER: [&str; 8] = [
    "scheduler",
    "kind",
    "lo",
    "hi",
    "final_offset_mean",
    "final_offset_std",
    "cumulative_tau2_mean",
    "cumulative_tau2_std",
];

pub struct AblationRow {
    pub label: String,
    pub kind: String,
    pub lo: f64,
    pub hi: f64,
    pub figures: Vec<RunFigures>,
}

pub fn ablation_csv(rows: &[AblationRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ABLATION_HEADER).map_err(csv_err)?;
    for row in rows {
        let offsets: Vec<f64> = row.figures.iter().map(|f| f.final_offset).collect();
        let errors: Vec<f64> = row.figures.iter().map(|f| f.cumulative_tau2).collect();
        let (om, os) = mean_std(&offsets);
        let (em, es) = mean_std(&errors);
        w.write_record([
            row.label.clone(),
            row.kind.clone(),
            row.lo.to_string(),
            row.hi.to_string(),
            om.to_string(),
            os.to_string(),
            em.to_string(),
            es.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}
