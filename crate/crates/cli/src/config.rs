//! TOML scenario files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tora_asd::control::PsiRateForm;
use tora_asd::simulation::DEFAULT_SETTLING_TOLERANCE;
use tora_asd::{ExoSystem, Matrix, ScenarioConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("unknown scenario `{0}` (built-in: paper-1, paper-2)")]
    UnknownScenario(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PsiRate {
    #[default]
    Exact,
    Printed,
}

impl From<PsiRate> for PsiRateForm {
    fn from(p: PsiRate) -> Self {
        match p {
            PsiRate::Exact => PsiRateForm::Exact,
            PsiRate::Printed => PsiRateForm::Printed,
        }
    }
}

impl From<PsiRateForm> for PsiRate {
    fn from(p: PsiRateForm) -> Self {
        match p {
            PsiRateForm::Exact => PsiRate::Exact,
            PsiRateForm::Printed => PsiRate::Printed,
        }
    }
}

/// Exosystem block: `drift` as a list of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExosystemFile {
    pub drift: Vec<Vec<f64>>,
    pub readout: Vec<f64>,
    pub initial: Vec<f64>,
}

fn default_duration() -> f64 {
    1500.0
}
fn default_step() -> f64 {
    1e-3
}
fn default_stride() -> usize {
    100
}
fn default_settling() -> f64 {
    DEFAULT_SETTLING_TOLERANCE
}

/// On-disk form of [`ScenarioConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub epsilon: f64,
    pub reference: f64,
    pub filter: f64,
    pub k: [f64; 4],
    pub l1: f64,
    pub l2: f64,
    pub b: f64,
    #[serde(default)]
    pub psi_rate: PsiRate,
    #[serde(default)]
    pub x0: [f64; 4],
    #[serde(default)]
    pub xs_hat0: [f64; 4],
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    #[serde(default = "default_settling")]
    pub settling_tolerance: f64,
    #[serde(default)]
    pub allow_unit_frequency: bool,
    pub exosystem: ExosystemFile,
}

impl ConfigFile {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: origin.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn to_scenario(&self) -> Result<ScenarioConfig, ConfigError> {
        let e = &self.exosystem;
        let m = e.drift.len();
        if let Some(row) = e.drift.iter().find(|r| r.len() != m) {
            return Err(ConfigError::Invalid(format!(
                "exosystem.drift must be square: {m} rows but a row has {} entries",
                row.len()
            )));
        }
        let drift = if m == 0 {
            Matrix::zeros(0, 0)
        } else {
            Matrix::from_rows(&e.drift).map_err(|err| ConfigError::Invalid(err.to_string()))?
        };
        let exo = ExoSystem::new(drift, e.readout.clone(), e.initial.clone())
            .map_err(|err| ConfigError::Invalid(format!("exosystem: {err}")))?;
        Ok(ScenarioConfig {
            epsilon: self.epsilon,
            reference: self.reference,
            filter: self.filter,
            k: self.k,
            l1: self.l1,
            l2: self.l2,
            b: self.b,
            psi_rate: self.psi_rate.into(),
            exo,
            x0: self.x0,
            xs_hat0: self.xs_hat0,
            duration: self.duration,
            step: self.step,
            record_stride: self.record_stride,
            settling_tolerance: self.settling_tolerance,
            allow_unit_frequency: self.allow_unit_frequency,
        })
    }

    pub fn from_scenario(cfg: &ScenarioConfig) -> Self {
        Self {
            epsilon: cfg.epsilon,
            reference: cfg.reference,
            filter: cfg.filter,
            k: cfg.k,
            l1: cfg.l1,
            l2: cfg.l2,
            b: cfg.b,
            psi_rate: cfg.psi_rate.into(),
            x0: cfg.x0,
            xs_hat0: cfg.xs_hat0,
            duration: cfg.duration,
            step: cfg.step,
            record_stride: cfg.record_stride,
            settling_tolerance: cfg.settling_tolerance,
            allow_unit_frequency: cfg.allow_unit_frequency,
            exosystem: ExosystemFile {
                drift: cfg.exo.drift().to_rows(),
                readout: cfg.exo.readout().to_vec(),
                initial: cfg.exo.initial().to_vec(),
            },
        }
    }
}

/// Built-in scenario by name.
pub fn builtin(name: &str) -> Result<ScenarioConfig, ConfigError> {
    ScenarioConfig::builtin(name).ok_or_else(|| ConfigError::UnknownScenario(name.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
epsilon = 0.2
reference = 0.5
filter = 1.0
k = [0.0, -0.2, -1.0, -2.0]
l1 = 10.0
l2 = 10.0
b = 1.0

[exosystem]
drift = [[0.0, 2.0], [-2.0, 0.0]]
readout = [1.0, 0.0]
initial = [0.0, 0.02]
"#;

    #[test]
    fn builtins_round_trip() {
        for name in ["paper-1", "paper-2"] {
            let cfg = builtin(name).unwrap();
            let file = ConfigFile::from_scenario(&cfg);
            let text = file.to_toml();
            let back = ConfigFile::parse(&text, Path::new("x.toml")).unwrap();
            assert_eq!(back, file);
            assert_eq!(back.to_scenario().unwrap(), cfg);
        }
    }

    #[test]
    fn defaults_fill_run_settings() {
        let f = ConfigFile::parse(MINIMAL, Path::new("m.toml")).unwrap();
        assert_eq!(f.duration, 1500.0);
        assert_eq!(f.record_stride, 100);
        assert_eq!(f.psi_rate, PsiRate::Exact);
        assert_eq!(f.x0, [0.0; 4]);
        assert_eq!(f.to_scenario().unwrap().exo.dim(), 2);
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let text = MINIMAL.replace("l2 = 10.0", "l2 = 10.0\ngain = 3.0");
        let err = ConfigFile::parse(&text, Path::new("bad.toml"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("gain"), "{err}");
        assert!(err.contains("line"), "{err}");
        assert!(err.contains("bad.toml"), "{err}");
    }

    #[test]
    fn ragged_drift_is_invalid() {
        let text = MINIMAL.replace("[[0.0, 2.0], [-2.0, 0.0]]", "[[0.0, 2.0], [-2.0]]");
        let f = ConfigFile::parse(&text, Path::new("r.toml")).unwrap();
        assert!(matches!(f.to_scenario(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn unknown_scenario() {
        assert!(matches!(
            builtin("paper-9"),
            Err(ConfigError::UnknownScenario(_))
        ));
    }
}
