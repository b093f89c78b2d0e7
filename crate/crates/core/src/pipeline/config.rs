//! Analysis configuration, read from JSON or TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::elliptical::EllipticalModel;
use crate::error::{Error, Result};
use crate::estimators::{EstimatorCase, RootRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_model")]
    pub model: EllipticalModel,
    #[serde(default)]
    pub case: EstimatorCase,
    #[serde(default)]
    pub root_rule: RootRule,
    #[serde(default)]
    pub flipflop: FlipFlopConfig,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Adds per-entry diagnostics, entry variances and iteration traces.
    #[serde(default)]
    pub verbose: bool,
}

fn default_model() -> EllipticalModel {
    EllipticalModel::Gaussian
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            model: default_model(),
            case: EstimatorCase::default(),
            root_rule: RootRule::default(),
            flipflop: FlipFlopConfig::default(),
            bootstrap: BootstrapConfig::default(),
            selection: SelectionConfig::default(),
            output: OutputConfig::default(),
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlipFlopConfig {
    pub enabled: bool,
    pub eps1: f64,
    pub eps2: f64,
    pub max_iter: usize,
}

impl Default for FlipFlopConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            eps1: 5e-6,
            eps2: 5e-6,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapConfig {
    pub size: usize,
    /// Root seed; every random stage derives its own seed from it.
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { size: 100, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    /// Candidate models; the selection stage is skipped when empty.
    pub models: Vec<EllipticalModel>,
    /// Files holding reference mean shapes (`K x D` JSON arrays of rows),
    /// resolved relative to the config file.
    pub references: Vec<PathBuf>,
    /// Group the others are compared with for the CV criterion.
    pub control: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Json,
    Csv,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("ellipform-out"),
            formats: vec![OutputFormat::Json, OutputFormat::Csv, OutputFormat::Svg],
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: OutputFormat) -> bool {
        self.formats.contains(&f)
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        // the estimators need finite second and fourth moments
        for m in std::iter::once(&self.model).chain(&self.selection.models) {
            m.validate()?;
            m.moment_constants()?;
        }
        let ff = &self.flipflop;
        if !(ff.eps1 > 0.0 && ff.eps2 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "flipflop.eps1 and flipflop.eps2 must be positive, got {} and {}",
                ff.eps1, ff.eps2
            )));
        }
        if ff.max_iter == 0 {
            return Err(Error::InvalidParameter("flipflop.max_iter must be at least 1".into()));
        }
        if self.bootstrap.size == 0 {
            return Err(Error::InvalidParameter("bootstrap.size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::InvalidParameter(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidParameter(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a `.toml` or JSON file. Relative reference paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        let mut cfg = if is_toml { Self::from_toml(&text) } else { Self::from_json(&text) }
            .map_err(|e| match e {
                Error::InvalidParameter(m) => Error::InvalidParameter(format!("{}: {m}", path.display())),
                other => other,
            })?;
        if let Some(base) = path.parent() {
            for r in &mut cfg.selection.references {
                if r.is_relative() {
                    *r = base.join(&*r);
                }
            }
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_json_gives_defaults() {
        let cfg = AnalysisConfig::from_json("{}").unwrap();
        assert_eq!(cfg, AnalysisConfig::default());
        assert_eq!(cfg.flipflop.eps1, 5e-6);
        assert_eq!(cfg.bootstrap.size, 100);
    }

    #[test]
    fn toml_and_json_agree() {
        let toml_text = r#"
            model = { kotz = { N = 2, r = 0.5, s = 1 } }
            case = "independent"
            [flipflop]
            enabled = false
            [bootstrap]
            size = 20
            seed = 7
            [selection]
            models = ["gaussian", { t = { m = 8 } }]
            control = "c"
            [output]
            dir = "out"
            formats = ["json"]
        "#;
        let json_text = r#"{
            "model": {"kotz": {"N": 2, "r": 0.5, "s": 1}},
            "case": "independent",
            "flipflop": {"enabled": false},
            "bootstrap": {"size": 20, "seed": 7},
            "selection": {"models": ["gaussian", {"t": {"m": 8}}], "control": "c"},
            "output": {"dir": "out", "formats": ["json"]}
        }"#;
        let a = AnalysisConfig::from_toml(toml_text).unwrap();
        let b = AnalysisConfig::from_json(json_text).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.case, EstimatorCase::Independent);
        assert!(a.output.wants(OutputFormat::Json) && !a.output.wants(OutputFormat::Svg));
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(AnalysisConfig::from_json(r#"{"flipflop": {"eps1": 0}}"#).is_err());
        assert!(AnalysisConfig::from_json(r#"{"bootstrap": {"size": 0}}"#).is_err());
        assert!(AnalysisConfig::from_json(r#"{"model": {"t": {"m": 3}}}"#).is_err());
        assert!(AnalysisConfig::from_json(r#"{"unknown": 1}"#).is_err());
    }

    #[test]
    fn references_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"selection": {"references": ["ref.json"]}}"#).unwrap();
        let cfg = AnalysisConfig::load(&path).unwrap();
        assert_eq!(cfg.selection.references, vec![dir.path().join("ref.json")]);
    }
}
