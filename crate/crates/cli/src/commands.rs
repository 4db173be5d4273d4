//! `check` and `run` verbs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use tora_asd::simulation::{check_configuration, run};
use tora_asd::ScenarioConfig;

use crate::config::{builtin, ConfigError, ConfigFile};
use crate::output::{write_atomic, write_csv, CheckDocument, RunDocument};

/// Where the scenario comes from plus command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct Selection {
    pub config: Option<PathBuf>,
    pub scenario: Option<String>,
    pub duration: Option<f64>,
    pub step: Option<f64>,
    pub stride: Option<usize>,
    pub settling_tolerance: Option<f64>,
    pub allow_unit_frequency: bool,
}

impl Selection {
    /// Loads the scenario and applies overrides; returns it with a label.
    pub fn resolve(&self) -> Result<(ScenarioConfig, String), ConfigError> {
        let (mut cfg, label) = match (&self.config, &self.scenario) {
            (Some(path), None) => (
                ConfigFile::load(path)?.to_scenario()?,
                path.display().to_string(),
            ),
            (None, Some(name)) => (builtin(name)?, name.clone()),
            _ => {
                return Err(ConfigError::Invalid(
                    "exactly one of --config and --scenario is required".into(),
                ))
            }
        };
        if let Some(d) = self.duration {
            cfg.duration = d;
        }
        if let Some(h) = self.step {
            cfg.step = h;
        }
        if let Some(s) = self.stride {
            cfg.record_stride = s;
        }
        if let Some(tol) = self.settling_tolerance {
            cfg.settling_tolerance = tol;
        }
        cfg.allow_unit_frequency |= self.allow_unit_frequency;
        Ok((cfg, label))
    }
}

fn fmt_margin(m: Option<f64>) -> String {
    m.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6e}"))
}

pub fn check_document(cfg: &ScenarioConfig, label: &str) -> CheckDocument {
    CheckDocument::new(label, &check_configuration(cfg))
}

pub fn render_check(doc: &CheckDocument) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "configuration: {}", doc.source);
    for g in &doc.gates {
        let tag = if g.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(s, "  {tag}  {:<16} {}", g.name, g.detail);
    }
    let _ = writeln!(s, "max Re eig(A)   = {}", fmt_margin(doc.margin_a));
    let _ = writeln!(s, "max Re eig(A_a) = {}", fmt_margin(doc.margin_a_aug));
    let _ = writeln!(
        s,
        "{}",
        if doc.passed {
            "all gates passed"
        } else {
            "configuration rejected"
        }
    );
    s
}

/// Runs the closed loop and writes the trajectory and report.
pub fn execute_run(
    cfg: &ScenarioConfig,
    label: &str,
    out: &Path,
    report: &Path,
) -> anyhow::Result<RunDocument> {
    let gates = check_configuration(cfg);
    if let Some(g) = gates.first_failure() {
        bail!("configuration rejected by {}: {}", g.name, g.detail);
    }
    let (traj, rep) = run(cfg).context("simulation failed")?;
    write_atomic(out, |w| write_csv(&traj, w))
        .with_context(|| format!("cannot write {}", out.display()))?;
    let doc = RunDocument::new(label, cfg, &rep);
    let json = serde_json::to_string_pretty(&doc)?;
    write_atomic(report, |w| {
        w.write_all(json.as_bytes())?;
        w.write_all(b"\n")
    })
    .with_context(|| format!("cannot write {}", report.display()))?;
    Ok(doc)
}

pub fn render_run(doc: &RunDocument) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{}: {} steps, {} samples, t = {}",
        doc.source, doc.steps, doc.samples, doc.final_time
    );
    let _ = writeln!(s, "final |y - r| = {:.6e}", doc.final_tracking_error);
    match doc.settling_time {
        Some(t) => {
            let _ = writeln!(s, "settling time ({} band) = {t}", doc.settling_tolerance);
        }
        None => {
            let _ = writeln!(
                s,
                "settling time ({} band) = not reached",
                doc.settling_tolerance
            );
        }
    }
    if doc.horizon_too_short {
        let _ = writeln!(s, "warning: horizon too short to judge settling");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_requires_one_source() {
        assert!(Selection::default().resolve().is_err());
        let both = Selection {
            config: Some("a.toml".into()),
            scenario: Some("paper-1".into()),
            ..Default::default()
        };
        assert!(both.resolve().is_err());
    }

    #[test]
    fn overrides_apply() {
        let sel = Selection {
            scenario: Some("paper-2".into()),
            duration: Some(3.0),
            step: Some(0.01),
            stride: Some(7),
            settling_tolerance: Some(0.05),
            allow_unit_frequency: true,
            ..Default::default()
        };
        let (cfg, label) = sel.resolve().unwrap();
        assert_eq!(label, "paper-2");
        assert_eq!((cfg.duration, cfg.step, cfg.record_stride), (3.0, 0.01, 7));
        assert_eq!(cfg.settling_tolerance, 0.05);
        assert!(cfg.allow_unit_frequency);
    }

    #[test]
    fn check_text_lists_every_gate() {
        let (cfg, label) = Selection {
            scenario: Some("paper-1".into()),
            ..Default::default()
        }
        .resolve()
        .unwrap();
        let doc = check_document(&cfg, &label);
        let text = render_check(&doc);
        assert!(doc.passed);
        assert_eq!(text.matches("PASS").count(), doc.gates.len());
        assert!(text.contains("max Re eig(A_a)"));
    }
}
