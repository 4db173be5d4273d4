//! Trajectory CSV, run report document and atomic file writes.

use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use tora_asd::simulation::{GateReport, RunReport};
use tora_asd::Trajectory;

/// Column names in file order.
pub fn csv_header(traj: &Trajectory) -> Vec<String> {
    let mut cols: Vec<String> = [
        "t", "x1", "x2", "x3", "x4", "y", "e", "u", "F_d", "F_d_hat", "v_p", "v_s", "e_p",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend((1..=traj.layout.q).map(|i| format!("xi_{i}")));
    cols.extend((1..=4).map(|i| format!("xs_hat_{i}")));
    cols.extend((1..=4).map(|i| format!("xp_hat_{i}")));
    cols.extend((1..=traj.layout.m).map(|i| format!("w_{i}")));
    cols
}

/// Writes the header and one row per sample; numbers use 13 significant digits.
pub fn write_csv<W: Write>(traj: &Trajectory, mut out: W) -> io::Result<()> {
    writeln!(out, "{}", csv_header(traj).join(","))?;
    let l = traj.layout;
    let mut row: Vec<f64> = Vec::with_capacity(csv_header(traj).len());
    for ((&t, z), s) in traj.times.iter().zip(&traj.states).zip(&traj.signals) {
        row.clear();
        row.push(t);
        row.extend_from_slice(&z[l.x()]);
        row.extend_from_slice(&[s.y, s.e, s.u, s.f_d, s.f_d_hat, s.v_p, s.v_s, s.e_p]);
        row.extend_from_slice(&z[l.xi()]);
        row.extend_from_slice(&z[l.xs_hat()]);
        row.extend_from_slice(&s.xp_hat);
        row.extend_from_slice(&z[l.w()]);
        let mut first = true;
        for v in &row {
            if !first {
                out.write_all(b",")?;
            }
            first = false;
            write!(out, "{v:.12e}")?;
        }
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Writes `path` by filling a temporary sibling and renaming it into place.
pub fn write_atomic(
    path: &Path,
    fill: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = io::BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct GateDocument {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckDocument {
    pub source: String,
    pub passed: bool,
    pub margin_a: Option<f64>,
    pub margin_a_aug: Option<f64>,
    pub gates: Vec<GateDocument>,
}

impl CheckDocument {
    pub fn new(source: &str, report: &GateReport) -> Self {
        Self {
            source: source.to_string(),
            passed: report.all_passed(),
            margin_a: report.margin_a,
            margin_a_aug: report.margin_a_aug,
            gates: report
                .gates
                .iter()
                .map(|g| GateDocument {
                    name: g.name.to_string(),
                    passed: g.passed,
                    detail: g.detail.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunDocument {
    pub source: String,
    pub reference: f64,
    pub duration: f64,
    pub step: f64,
    pub record_stride: usize,
    pub steps: usize,
    pub samples: usize,
    pub final_time: f64,
    pub final_output: f64,
    pub final_tracking_error: f64,
    pub settling_tolerance: f64,
    pub settling_time: Option<f64>,
    pub horizon_too_short: bool,
    pub max_plant_norm: f64,
    pub max_xs_hat_norm: f64,
    pub max_xi_norm: f64,
    pub margin_a: f64,
    pub margin_a_aug: f64,
    pub lyapunov_max_increase: f64,
    pub exo_norm_window_drift: f64,
    pub compensation_residual: Option<f64>,
    pub decomposition_identity: f64,
}

impl RunDocument {
    pub fn new(source: &str, cfg: &tora_asd::ScenarioConfig, r: &RunReport) -> Self {
        Self {
            source: source.to_string(),
            reference: cfg.reference,
            duration: cfg.duration,
            step: cfg.step,
            record_stride: cfg.record_stride,
            steps: r.steps,
            samples: r.samples,
            final_time: r.final_time,
            final_output: r.final_output,
            final_tracking_error: r.final_tracking_error,
            settling_tolerance: r.settling_tolerance,
            settling_time: r.settling_time,
            horizon_too_short: r.horizon_too_short,
            max_plant_norm: r.max_plant_norm,
            max_xs_hat_norm: r.max_xs_hat_norm,
            max_xi_norm: r.max_xi_norm,
            margin_a: r.margin_a,
            margin_a_aug: r.margin_a_aug,
            lyapunov_max_increase: r.lyapunov_max_increase,
            exo_norm_window_drift: r.exo_norm_window_drift,
            compensation_residual: r.compensation_residual,
            decomposition_identity: r.decomposition_identity,
        }
    }
}
