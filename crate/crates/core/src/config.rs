//! Run configuration, domain presets and their precedence.
//!
//! Values are layered: built-in defaults, then the domain preset, then the
//! config file, then backend URLs from the environment, then command-line
//! flags. Later layers win.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{ClusterSelection, DensityParams};
use crate::evaluation::EvalParams;
use crate::extraction::{question_by_index, ExtractionConfig, DEFAULT_TOP_K};
use crate::landscape::{ForceParams, FORCE_THRESHOLD_BAND};

pub const DISTANCE_THRESHOLD_BAND: (f64, f64) = (0.2, 0.5);

pub const ENV_QA_URL: &str = "INTENT_LANDSCAPE_QA_URL";
pub const ENV_TAGGER_URL: &str = "INTENT_LANDSCAPE_TAGGER_URL";
pub const ENV_EMBED_URL: &str = "INTENT_LANDSCAPE_EMBED_URL";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown preset {0:?} (expected airline, media, insurance, finance or software)")]
    UnknownPreset(String),
    #[error("question index {0} is out of range (0-2)")]
    QuestionIndex(usize),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("config file {path}: {message}")]
    File { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Airline,
    Media,
    Insurance,
    Finance,
    Software,
}

/// Per-domain clustering hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PresetValues {
    pub min_cluster_size: usize,
    pub distance_threshold: f64,
    pub force_cluster_threshold: f64,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Airline,
        Preset::Media,
        Preset::Insurance,
        Preset::Finance,
        Preset::Software,
    ];

    pub fn values(self) -> PresetValues {
        let (min_cluster_size, distance_threshold, force_cluster_threshold) = match self {
            Preset::Airline => (4, 0.29, 0.3),
            Preset::Media => (3, 0.42, 0.2),
            Preset::Insurance => (2, 0.5, 0.2),
            Preset::Finance => (2, 0.45, 0.2),
            Preset::Software => (2, 0.5, 0.3),
        };
        PresetValues {
            min_cluster_size,
            distance_threshold,
            force_cluster_threshold,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Airline => "airline",
            Preset::Media => "media",
            Preset::Insurance => "insurance",
            Preset::Finance => "finance",
            Preset::Software => "software",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| ConfigError::UnknownPreset(s.to_string()))
    }
}

/// Fully resolved configuration. Serialized into every artifact's metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub preset: Option<Preset>,
    pub question_index: usize,
    pub question_corrected: bool,
    pub question: String,
    pub top_k: usize,
    pub min_cluster_size: usize,
    pub min_samples: Option<usize>,
    pub selection: ClusterSelection,
    pub distance_threshold: f64,
    pub force_cluster_threshold: f64,
    pub unlabeled_threshold: f64,
    pub min_support: usize,
    pub qa_url: Option<String>,
    pub tagger_url: Option<String>,
    pub embed_url: Option<String>,
    pub seed: u64,
    pub max_in_flight: usize,
    pub batch_size: usize,
    /// Dimension of the built-in mock embedder.
    pub mock_dim: usize,
    /// Within-family perturbation of the mock embedder.
    pub mock_spread: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let eval = EvalParams::default();
        RunConfig {
            preset: None,
            question_index: 0,
            question_corrected: false,
            question: question_by_index(0, false).expect("Q1 exists").to_string(),
            top_k: DEFAULT_TOP_K,
            min_cluster_size: 2,
            min_samples: None,
            selection: ClusterSelection::ExcessOfMass,
            distance_threshold: 0.4,
            force_cluster_threshold: 0.25,
            unlabeled_threshold: eval.unlabeled_threshold,
            min_support: eval.min_support,
            qa_url: None,
            tagger_url: None,
            embed_url: None,
            seed: 0,
            max_in_flight: 4,
            batch_size: 64,
            mock_dim: 64,
            mock_spread: 0.05,
        }
    }
}

/// One configuration layer; unset fields leave lower layers untouched.
/// The config file is a JSON object of this shape.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigLayer {
    pub preset: Option<Preset>,
    pub question_index: Option<usize>,
    pub question_corrected: Option<bool>,
    pub top_k: Option<usize>,
    pub min_cluster_size: Option<usize>,
    pub min_samples: Option<usize>,
    pub selection: Option<ClusterSelection>,
    pub distance_threshold: Option<f64>,
    pub force_cluster_threshold: Option<f64>,
    pub unlabeled_threshold: Option<f64>,
    pub min_support: Option<usize>,
    pub qa_url: Option<String>,
    pub tagger_url: Option<String>,
    pub embed_url: Option<String>,
    pub seed: Option<u64>,
    pub max_in_flight: Option<usize>,
    pub batch_size: Option<usize>,
    pub mock_dim: Option<usize>,
    pub mock_spread: Option<f64>,
}

macro_rules! overlay {
    ($cfg:expr, $layer:expr, $($field:ident),* ; $($opt:ident),*) => {{
        $( if let Some(v) = $layer.$field.clone() { $cfg.$field = v; } )*
        $( if let Some(v) = $layer.$opt.clone() { $cfg.$opt = Some(v); } )*
    }};
}

impl ConfigLayer {
    pub fn from_file(path: &Path) -> Result<ConfigLayer, ConfigError> {
        let err = |message: String| ConfigError::File {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))
    }

    /// Backend URLs from the process environment.
    pub fn from_env() -> ConfigLayer {
        Self::from_env_with(|k| std::env::var(k).ok())
    }

    pub fn from_env_with(get: impl Fn(&str) -> Option<String>) -> ConfigLayer {
        let non_empty = |k: &str| get(k).filter(|v| !v.trim().is_empty());
        ConfigLayer {
            qa_url: non_empty(ENV_QA_URL),
            tagger_url: non_empty(ENV_TAGGER_URL),
            embed_url: non_empty(ENV_EMBED_URL),
            ..ConfigLayer::default()
        }
    }

    fn apply(&self, cfg: &mut RunConfig) {
        overlay!(cfg, self,
            question_index, question_corrected, top_k, min_cluster_size, selection,
            distance_threshold, force_cluster_threshold, unlabeled_threshold, min_support,
            seed, max_in_flight, batch_size, mock_dim, mock_spread;
            preset, min_samples, qa_url, tagger_url, embed_url);
    }
}

impl RunConfig {
    /// Resolves layers given lowest precedence first (file, env, flags).
    ///
    /// The preset is taken from the highest layer that names one and is
    /// applied just above the built-in defaults.
    pub fn resolve(layers: &[&ConfigLayer]) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        if let Some(preset) = layers.iter().rev().find_map(|l| l.preset) {
            let v = preset.values();
            cfg.preset = Some(preset);
            cfg.min_cluster_size = v.min_cluster_size;
            cfg.distance_threshold = v.distance_threshold;
            cfg.force_cluster_threshold = v.force_cluster_threshold;
        }
        for layer in layers {
            layer.apply(&mut cfg);
        }
        cfg.question = question_by_index(cfg.question_index, cfg.question_corrected)
            .ok_or(ConfigError::QuestionIndex(cfg.question_index))?
            .to_string();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Hard errors for values outside their domain.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.top_k == 0 {
            return bad("top_k must be at least 1".into());
        }
        if self.min_cluster_size < 2 {
            return bad(format!("min_cluster_size must be at least 2, got {}", self.min_cluster_size));
        }
        if self.min_samples == Some(0) {
            return bad("min_samples must be at least 1".into());
        }
        if !(self.distance_threshold > 0.0 && self.distance_threshold.is_finite()) {
            return bad(format!("distance_threshold must be positive, got {}", self.distance_threshold));
        }
        if !(self.force_cluster_threshold > 0.0 && self.force_cluster_threshold < 2.0) {
            return bad(format!(
                "force_cluster_threshold must lie in (0, 2), got {}",
                self.force_cluster_threshold
            ));
        }
        if !(self.unlabeled_threshold > 0.0 && self.unlabeled_threshold < 1.0) {
            return bad(format!("unlabeled_threshold must lie in (0, 1), got {}", self.unlabeled_threshold));
        }
        if self.min_support == 0 {
            return bad("min_support must be at least 1".into());
        }
        if self.mock_dim == 0 {
            return bad("mock_dim must be positive".into());
        }
        if !(self.mock_spread >= 0.0 && self.mock_spread.is_finite()) {
            return bad(format!("mock_spread must be non-negative, got {}", self.mock_spread));
        }
        Ok(())
    }

    /// Soft warnings for thresholds outside their usual working bands.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let (lo, hi) = DISTANCE_THRESHOLD_BAND;
        if !(lo..=hi).contains(&self.distance_threshold) {
            out.push(format!(
                "distance_threshold {} is outside the usual {lo}-{hi} band",
                self.distance_threshold
            ));
        }
        let (lo, hi) = FORCE_THRESHOLD_BAND;
        if !(lo..=hi).contains(&self.force_cluster_threshold) {
            out.push(format!(
                "force_cluster_threshold {} is outside the usual {lo}-{hi} band",
                self.force_cluster_threshold
            ));
        }
        out
    }

    pub fn extraction(&self) -> ExtractionConfig {
        ExtractionConfig {
            question: self.question.clone(),
            top_k: self.top_k,
            handle_impossible: true,
            max_in_flight: self.max_in_flight,
        }
    }

    pub fn density(&self) -> DensityParams {
        DensityParams {
            min_cluster_size: self.min_cluster_size,
            min_samples: self.min_samples,
            selection: self.selection,
        }
    }

    pub fn force(&self) -> ForceParams {
        ForceParams {
            force_cluster_threshold: self.force_cluster_threshold,
        }
    }

    pub fn eval(&self) -> EvalParams {
        EvalParams {
            unlabeled_threshold: self.unlabeled_threshold,
            min_support: self.min_support,
        }
    }
}
