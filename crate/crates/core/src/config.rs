//! Pipeline configuration: a TOML file plus `section.key=value` overrides.

use serde::Deserialize;
use thiserror::Error;

use crate::discretize::{DiscretizationMethod, FuzzyConfig};
use crate::geo::{ClassSet, Mode};
use crate::preprocess::{FeatureVector, HampelConfig, SegmentKind, SegmentationStrategy};
use crate::rnn::Candidate;
use crate::synth::{default_profiles, ModeProfile, SynthConfig};
use crate::train::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("override `{0}` is not of the form section.key=value")]
    Override(String),
    #[error("invalid {key}: {message}")]
    Invalid { key: &'static str, message: String },
}

fn invalid(key: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key, message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: DataSection,
    pub preprocess: PreprocessSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub split: SplitSection,
    pub synth: SynthSection,
    pub paths: PathsSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// 4 or 7.
    pub classes: usize,
    /// Gap that starts a new trajectory when reading the canonical dataset.
    pub max_gap_s: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection { classes: 4, max_gap_s: 600.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSection {
    pub segmentation: String,
    /// Threshold in the strategy's unit; the strategy default when absent.
    pub segment_parameter: Option<f64>,
    pub hampel: bool,
    pub hampel_half_width: usize,
    pub hampel_n_mad: f64,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        let h = HampelConfig::default();
        PreprocessSection {
            segmentation: "bearing".into(),
            segment_parameter: None,
            hampel: true,
            hampel_half_width: h.half_width,
            hampel_n_mad: h.n_mad,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// `embedded` or `raw`.
    pub input: String,
    /// Subset of `v_p`, `v_avg`, `v_sd`.
    pub features: Vec<String>,
    /// `width`, `entropy` or `fuzzy`.
    pub discretization: String,
    pub bins: usize,
    pub fuzzy_overlap: f64,
    pub embedding_dim: usize,
    /// z-score raw inputs with training-split statistics.
    pub standardize_raw: bool,
    pub hidden: usize,
    pub layers: usize,
    /// `maxout` or `tanh`.
    pub cell: String,
    pub pieces: usize,
    pub bias: bool,
    pub init_range: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            input: "embedded".into(),
            features: FeatureVector::NAMES.iter().map(|s| s.to_string()).collect(),
            discretization: "width".into(),
            bins: 20,
            fuzzy_overlap: 0.2,
            embedding_dim: 50,
            standardize_raw: false,
            hidden: 50,
            layers: 2,
            cell: "maxout".into(),
            pieces: 5,
            bias: false,
            init_range: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub chunk_length: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub clip_norm: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            chunk_length: t.chunk_length,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            seed: t.seed,
            clip_norm: t.clip_norm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    /// Train, validation and test shares of the persons.
    pub fractions: [f64; 3],
    /// Exact person counts; takes precedence over `fractions`.
    pub sizes: Option<[usize; 3]>,
    pub seed: u64,
    pub candidates: usize,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            fractions: [0.7, 0.1, 0.2],
            sizes: None,
            seed: 0,
            candidates: crate::ingest::DEFAULT_SLOBO_CANDIDATES,
        }
    }
}

impl SplitSection {
    /// Person counts for a dataset of `persons`, each part non-empty.
    pub fn sizes_for(&self, persons: usize) -> Result<(usize, usize, usize), ConfigError> {
        let (tr, va, te) = match self.sizes {
            Some([a, b, c]) => {
                if a + b + c != persons {
                    return Err(invalid("split.sizes", format!("{a}+{b}+{c} != {persons} persons")));
                }
                (a, b, c)
            }
            None => {
                let total: f64 = self.fractions.iter().sum();
                let va = (self.fractions[1] / total * persons as f64).round() as usize;
                let te = (self.fractions[2] / total * persons as f64).round() as usize;
                (persons.saturating_sub(va + te), va, te)
            }
        };
        if tr == 0 || va == 0 || te == 0 {
            return Err(invalid("split", format!("{persons} persons give an empty part ({tr}/{va}/{te})")));
        }
        Ok((tr, va, te))
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileEntry {
    pub mode: String,
    pub speed_mean: f64,
    pub speed_sd: f64,
    pub heading_volatility: f64,
    pub dwell: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub persons: usize,
    pub points_per_person: usize,
    pub sample_interval_s: f64,
    pub seed: u64,
    /// The four built-in profiles when empty.
    pub profiles: Vec<ProfileEntry>,
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        SynthSection {
            persons: s.persons,
            points_per_person: s.points_per_person,
            sample_interval_s: s.sample_interval_s,
            seed: s.seed,
            profiles: Vec::new(),
        }
    }
}

/// Default file locations; command-line paths take precedence.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub raw_dir: Option<String>,
    pub dataset: Option<String>,
    pub features: Option<String>,
    pub model: Option<String>,
    pub log: Option<String>,
    pub report: Option<String>,
    pub predictions: Option<String>,
    pub geojson: Option<String>,
}

/// A parsed configuration with the text that produced it.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    /// The file verbatim, followed by one `override` line per flag.
    pub echo: String,
}

fn override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Parses `text` and applies each `section.key=value` in order. Values are
/// read as TOML and fall back to plain strings.
pub fn load_config(text: &str, overrides: &[String]) -> Result<LoadedConfig, ConfigError> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.message().to_string()))?;
    for o in overrides {
        let (path, value) = o.split_once('=').ok_or_else(|| ConfigError::Override(o.clone()))?;
        let keys: Vec<&str> = path.trim().split('.').collect();
        if keys.iter().any(|k| k.is_empty()) {
            return Err(ConfigError::Override(o.clone()));
        }
        let mut node = &mut table;
        for k in &keys[..keys.len() - 1] {
            node = node
                .entry(k.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| ConfigError::Override(o.clone()))?;
        }
        node.insert(keys[keys.len() - 1].to_string(), override_value(value.trim()));
    }
    let config: PipelineConfig =
        table.try_into().map_err(|e: toml::de::Error| ConfigError::Syntax(e.message().to_string()))?;
    config.validate()?;
    let mut echo = text.trim_end().to_string();
    for o in overrides {
        if !echo.is_empty() {
            echo.push('\n');
        }
        echo.push_str("override ");
        echo.push_str(o.trim());
    }
    Ok(LoadedConfig { config, echo })
}

impl PipelineConfig {
    /// Checks every section by building the typed settings it feeds.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.class_set()?;
        self.segmentation()?;
        self.hampel()?;
        self.features()?;
        self.discretization()?;
        self.candidate()?;
        self.train_config()?;
        self.synth_config()?;
        let m = &self.model;
        if m.hidden == 0 || m.layers == 0 || m.pieces == 0 {
            return Err(invalid("model", "hidden, layers and pieces must be positive"));
        }
        if self.embedded()? && m.embedding_dim == 0 {
            return Err(invalid("model.embedding_dim", "must be positive"));
        }
        if !(m.init_range >= 0.0 && m.init_range.is_finite()) {
            return Err(invalid("model.init_range", m.init_range.to_string()));
        }
        if !(self.data.max_gap_s > 0.0) {
            return Err(invalid("data.max_gap_s", self.data.max_gap_s.to_string()));
        }
        let s = &self.split;
        if s.sizes.is_none() && !s.fractions.iter().all(|f| *f > 0.0 && f.is_finite()) {
            return Err(invalid("split.fractions", "all shares must be positive"));
        }
        if s.candidates == 0 {
            return Err(invalid("split.candidates", "must be positive"));
        }
        Ok(())
    }

    pub fn class_set(&self) -> Result<ClassSet, ConfigError> {
        ClassSet::from_count(self.data.classes).ok_or_else(|| invalid("data.classes", format!("{} (use 4 or 7)", self.data.classes)))
    }

    pub fn segmentation(&self) -> Result<SegmentationStrategy, ConfigError> {
        let p = &self.preprocess;
        let kind: SegmentKind = p.segmentation.parse().map_err(|_| invalid("preprocess.segmentation", &p.segmentation))?;
        let param = p.segment_parameter.unwrap_or_else(|| kind.default_parameter());
        SegmentationStrategy::new(kind, param).map_err(|e| invalid("preprocess.segment_parameter", e.to_string()))
    }

    pub fn hampel(&self) -> Result<Option<HampelConfig>, ConfigError> {
        let p = &self.preprocess;
        if !p.hampel {
            return Ok(None);
        }
        if p.hampel_half_width == 0 || !(p.hampel_n_mad >= 0.0 && p.hampel_n_mad.is_finite()) {
            return Err(invalid("preprocess.hampel", "half width must be positive and n_mad non-negative"));
        }
        Ok(Some(HampelConfig { half_width: p.hampel_half_width, n_mad: p.hampel_n_mad }))
    }

    /// Feature indices in the order listed.
    pub fn features(&self) -> Result<Vec<usize>, ConfigError> {
        let f = &self.model.features;
        if f.is_empty() {
            return Err(invalid("model.features", "at least one feature"));
        }
        let mut out = Vec::new();
        for name in f {
            let i = FeatureVector::NAMES
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| invalid("model.features", format!("unknown feature `{name}`")))?;
            if out.contains(&i) {
                return Err(invalid("model.features", format!("`{name}` listed twice")));
            }
            out.push(i);
        }
        Ok(out)
    }

    pub fn embedded(&self) -> Result<bool, ConfigError> {
        match self.model.input.as_str() {
            "embedded" => Ok(true),
            "raw" => Ok(false),
            other => Err(invalid("model.input", format!("`{other}` (use embedded or raw)"))),
        }
    }

    pub fn discretization(&self) -> Result<DiscretizationMethod, ConfigError> {
        let m = &self.model;
        if m.bins == 0 {
            return Err(invalid("model.bins", "must be positive"));
        }
        match m.discretization.as_str() {
            "width" => Ok(DiscretizationMethod::EqualWidth { bins: m.bins }),
            "entropy" => Ok(DiscretizationMethod::Rmep { max_bins: m.bins }),
            "fuzzy" => {
                let overlap = FuzzyConfig::new(m.fuzzy_overlap).map_err(|e| invalid("model.fuzzy_overlap", e.to_string()))?;
                Ok(DiscretizationMethod::Fuzzy { bins: m.bins, overlap })
            }
            other => Err(invalid("model.discretization", format!("`{other}` (use width, entropy or fuzzy)"))),
        }
    }

    pub fn candidate(&self) -> Result<Candidate, ConfigError> {
        match self.model.cell.as_str() {
            "maxout" => Ok(Candidate::Maxout),
            "tanh" => Ok(Candidate::Tanh),
            other => Err(invalid("model.cell", format!("`{other}` (use maxout or tanh)"))),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig, ConfigError> {
        let t = &self.train;
        let cfg = TrainConfig {
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            chunk_length: t.chunk_length,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            seed: t.seed,
            clip_norm: t.clip_norm,
        };
        cfg.validate().map_err(|e| invalid("train", e.to_string()))?;
        Ok(cfg)
    }

    pub fn synth_config(&self) -> Result<SynthConfig, ConfigError> {
        let s = &self.synth;
        let profiles = if s.profiles.is_empty() {
            default_profiles()
        } else {
            s.profiles
                .iter()
                .map(|p| {
                    let mode: Mode = p.mode.parse().map_err(|_| invalid("synth.profiles", format!("unknown mode `{}`", p.mode)))?;
                    let profile = ModeProfile {
                        mode,
                        speed_mean: p.speed_mean,
                        speed_sd: p.speed_sd,
                        heading_volatility: p.heading_volatility,
                        dwell: p.dwell,
                    };
                    profile.validate().map_err(|e| invalid("synth.profiles", e.to_string()))?;
                    Ok(profile)
                })
                .collect::<Result<Vec<_>, ConfigError>>()?
        };
        if s.points_per_person < 10 {
            return Err(invalid("synth.points_per_person", "at least 10"));
        }
        if !(s.sample_interval_s > 0.0 && s.sample_interval_s.is_finite()) {
            return Err(invalid("synth.sample_interval_s", s.sample_interval_s.to_string()));
        }
        Ok(SynthConfig {
            profiles,
            persons: s.persons,
            points_per_person: s.points_per_person,
            sample_interval_s: s.sample_interval_s,
            seed: s.seed,
        })
    }
}
