//! Declarative run configuration: one TOML file plus dotted-key overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{SampleConfig, SampleMode, SyntheticSpec};
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::losses::LossWeights;
use crate::network::{Components, ModelConfig};
use crate::train::TrainConfig;

/// Where tracklets come from. Paths win over the synthetic generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub train_path: Option<PathBuf>,
    pub val_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub train_count: usize,
    pub val_count: usize,
    pub test_count: usize,
    pub synthetic: SyntheticSpec,
    /// Crop margin around the reference box, meters per side.
    pub margin: f64,
    pub frame_interval: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        let s = SampleConfig::default();
        DataConfig {
            train_path: None,
            val_path: None,
            test_path: None,
            train_count: 64,
            val_count: 16,
            test_count: 16,
            synthetic: SyntheticSpec::default(),
            margin: s.margin,
            frame_interval: s.frame_interval,
        }
    }
}

/// Variant lists of the ablation command. Windows are total frame counts
/// `N` (reported as `1+(N-1)`), constraints the number of supervised history
/// boxes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblateConfig {
    pub components: Vec<String>,
    pub windows: Vec<usize>,
    pub constraints: Vec<usize>,
    /// First-frame target point range of the sparse test suite.
    pub sparse_points: [usize; 2],
}

impl Default for AblateConfig {
    fn default() -> Self {
        AblateConfig {
            components: ["C", "C+G+D", "C+L+D", "C+L+G+D"].map(String::from).to_vec(),
            windows: vec![2, 4, 6, 8],
            constraints: vec![0, 1, 2, 3],
            sparse_points: [0, 15],
        }
    }
}

impl AblateConfig {
    pub fn validate(&self) -> Result<()> {
        for c in &self.components {
            Components::from_label(c)?;
        }
        if self.windows.contains(&0) {
            return Err(Error::Config("ablate.windows must be positive".into()));
        }
        if self.sparse_points[0] > self.sparse_points[1] {
            return Err(Error::Config("ablate.sparse_points must be [min, max]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub loss: LossWeights,
    pub eval: EvalConfig,
    pub ablate: AblateConfig,
}

impl RunConfig {
    /// Parses TOML text, applies `key=value` overrides and validates.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (or starts from defaults when `None`) and applies overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.data.synthetic.validate()?;
        if !(self.data.margin >= 0.0) || !(self.data.frame_interval > 0.0) {
            return Err(Error::Config("data.margin must be >= 0 and data.frame_interval > 0".into()));
        }
        self.model.validate()?;
        self.train.validate()?;
        self.loss.validate()?;
        self.eval.validate()?;
        self.ablate.validate()?;
        if let Some(k) = self.loss.history_constraints {
            if k + 1 > self.model.n_frames {
                return Err(Error::Config(format!(
                    "loss.history_constraints = {k} exceeds the {} history frames",
                    self.model.n_frames - 1
                )));
            }
        }
        Ok(())
    }

    /// Sample assembly settings shared by training and tracking.
    pub fn sample_config(&self, mode: SampleMode) -> SampleConfig {
        SampleConfig {
            n_frames: self.model.n_frames,
            points_per_frame: self.model.points_per_frame,
            margin: self.data.margin,
            frame_interval: self.data.frame_interval,
            offset_range: self.train.offset_range,
            mode,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Writes the resolved config as `config.toml` inside `dir`.
    pub fn archive(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("config.toml");
        std::fs::write(&path, self.to_toml()?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Sets `a.b.c=value` in `table`. The value is read as a TOML value when it
/// parses as one and as a bare string otherwise.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not key=value")))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key `{key}` is malformed")));
    }
    let value = parse_value(raw.trim());
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml_str("", &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.train.epochs, 40);
        assert_eq!(cfg.train.learning_rate, 1e-4);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::from_toml_str("[model]\nwidth = 3\n", &[]), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml_str("bogus = 1\n", &[]), Err(Error::Config(_))));
    }

    #[test]
    fn overrides_nest_and_type() {
        let ov = [
            "model.channels=16".to_string(),
            "train.lr_schedule=cosine".to_string(),
            "data.synthetic.first_frame_points=[0, 15]".to_string(),
            "seed = 9".to_string(),
        ];
        let cfg = RunConfig::from_toml_str("[model]\nchannels = 64\n", &ov).unwrap();
        assert_eq!(cfg.model.channels, 16);
        assert_eq!(cfg.train.lr_schedule, crate::train::LrSchedule::Cosine);
        assert_eq!(cfg.data.synthetic.first_frame_points, Some([0, 15]));
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn bad_overrides() {
        assert!(RunConfig::from_toml_str("", &["model.channels".into()]).is_err());
        assert!(RunConfig::from_toml_str("", &["seed.x=1".into()]).is_err());
        assert!(RunConfig::from_toml_str("", &["model..c=1".into()]).is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.model = ModelConfig::micro();
        cfg.loss.history_constraints = Some(1);
        cfg.data.train_path = Some("a/b.txt".into());
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text, &[]).unwrap(), cfg);
    }

    #[test]
    fn ablation_lists_are_checked() {
        assert!(RunConfig::from_toml_str("", &["ablate.components=[\"C+X\"]".into()]).is_err());
        assert!(RunConfig::from_toml_str("", &["ablate.windows=[0]".into()]).is_err());
        let cfg = RunConfig::from_toml_str("", &["ablate.windows=[2, 4]".into()]).unwrap();
        assert_eq!(cfg.ablate.windows, vec![2, 4]);
    }

    #[test]
    fn constraints_bounded_by_window() {
        let err = RunConfig::from_toml_str("", &["loss.history_constraints=4".into()]);
        assert!(matches!(err, Err(Error::Config(_))));
    }
}
