use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::Modality;
use crate::error::{Error, Result};
use crate::features::Preprocess;
use crate::fusion::{FusionMethod, LateFusion, RepresentationKind};
use crate::models::{BprHyperParams, ModelKind};
use crate::split::SplitConfig;

pub const DEFAULT_LEARNING_RATES: [f64; 5] = [0.0001, 0.0005, 0.001, 0.005, 0.01];
pub const DEFAULT_REGS: [f64; 2] = [1e-5, 1e-2];
pub const REFERENCE_BATCH_SIZE: usize = 1024;
pub const REFERENCE_EPOCHS: usize = 200;
pub const DEFAULT_K: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Free-form name used as the report column group.
    #[serde(default = "default_dataset_name")]
    pub name: String,
    pub interactions: PathBuf,
    /// Item metadata (JSONL). Without it the pre-filter is skipped.
    #[serde(default)]
    pub metadata: Option<PathBuf>,
    /// Optional k-core filter applied after the pre-filter.
    #[serde(default)]
    pub k_core: Option<(usize, usize)>,
}

fn default_dataset_name() -> String {
    "dataset".into()
}

/// One extractor's output: a feature file per modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSet {
    pub extractor_tag: String,
    pub files: BTreeMap<Modality, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepresentationConfig {
    pub kind: RepresentationKind,
    pub fusion: FusionMethod,
    pub late: LateFusion,
    /// Projection matrices (MMFE, one row per output dim) for coordinate modes.
    pub projections: BTreeMap<Modality, PathBuf>,
}

impl Default for RepresentationConfig {
    fn default() -> Self {
        Self {
            kind: RepresentationKind::Joint,
            fusion: FusionMethod::Concat,
            late: LateFusion::Sum,
            projections: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Display name; defaults to the kind.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub latent_dim: Option<usize>,
    /// LightGCN propagation depth.
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_k_neighbors")]
    pub k_neighbors: usize,
    /// Item-graph neighbourhood size for the frozen graph model.
    #[serde(default = "default_graph_k")]
    pub graph_k: usize,
    #[serde(default = "default_graph_layers")]
    pub graph_layers: usize,
}

fn default_layers() -> usize {
    3
}
fn default_k_neighbors() -> usize {
    50
}
fn default_graph_k() -> usize {
    10
}
fn default_graph_layers() -> usize {
    1
}

impl ModelSpec {
    pub fn of(kind: ModelKind) -> Self {
        Self {
            kind,
            name: None,
            latent_dim: None,
            layers: default_layers(),
            k_neighbors: default_k_neighbors(),
            graph_k: default_graph_k(),
            graph_layers: default_graph_layers(),
        }
    }

    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.kind.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub learning_rates: Vec<f64>,
    pub regs: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            learning_rates: DEFAULT_LEARNING_RATES.to_vec(),
            regs: DEFAULT_REGS.to_vec(),
        }
    }
}

impl GridConfig {
    pub fn is_reference(&self) -> bool {
        self.learning_rates == DEFAULT_LEARNING_RATES && self.regs == DEFAULT_REGS
    }
}

/// Fixed (non-searched) training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub latent_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub init_std: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let hp = BprHyperParams::default();
        Self {
            latent_dim: hp.latent_dim,
            epochs: REFERENCE_EPOCHS,
            batch_size: REFERENCE_BATCH_SIZE,
            init_std: hp.init_std,
        }
    }
}

impl TrainingConfig {
    pub fn is_reference(&self) -> bool {
        self.epochs == REFERENCE_EPOCHS && self.batch_size == REFERENCE_BATCH_SIZE
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub feature_sets: Vec<FeatureSet>,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub representation: RepresentationConfig,
    #[serde(default)]
    pub preprocess: Preprocess,
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default = "default_k", rename = "K", alias = "k")]
    pub k: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Extraction timing CSV to co-display in the markdown report.
    #[serde(default)]
    pub timings: Option<PathBuf>,
}

fn default_k() -> usize {
    DEFAULT_K
}
fn default_seeds() -> Vec<u64> {
    vec![42]
}
fn default_workers() -> usize {
    1
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

impl ExperimentConfig {
    /// Parse YAML or JSON (a JSON document is valid YAML).
    pub fn from_yaml(text: &str) -> Result<Self> {
        serde_yaml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Load a config file; relative paths inside are resolved against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_yaml(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset.interactions);
        if let Some(m) = self.dataset.metadata.as_mut() {
            fix(m);
        }
        for fs in &mut self.feature_sets {
            fs.files.values_mut().for_each(fix);
        }
        self.representation.projections.values_mut().for_each(fix);
        fix(&mut self.output_dir);
        if let Some(t) = self.timings.as_mut() {
            fix(t);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        if self.models.is_empty() {
            return Err(Error::Config("no models configured".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("K must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds configured".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be positive".into()));
        }
        if self.grid.learning_rates.is_empty() || self.grid.regs.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if self.grid.learning_rates.iter().any(|&lr| !(lr.is_finite() && lr > 0.0))
            || self.grid.regs.iter().any(|&r| !(r.is_finite() && r >= 0.0))
        {
            return Err(Error::Config("grid values must be finite, lr > 0 and reg >= 0".into()));
        }
        let mut tags = std::collections::HashSet::new();
        for fs in &self.feature_sets {
            if fs.files.is_empty() {
                return Err(Error::Config(format!("feature set {:?} has no files", fs.extractor_tag)));
            }
            if fs.extractor_tag == super::NO_FEATURES_TAG || !tags.insert(&fs.extractor_tag) {
                return Err(Error::Config(format!("invalid or repeated extractor_tag {:?}", fs.extractor_tag)));
            }
        }
        if self.models.iter().any(|m| m.kind.is_multimodal()) && self.feature_sets.is_empty() {
            return Err(Error::Config("multimodal models need at least one feature set".into()));
        }
        let mut names = std::collections::HashSet::new();
        for m in &self.models {
            if !names.insert(m.display_name()) {
                return Err(Error::Config(format!("duplicate model name {:?}", m.display_name())));
            }
        }
        self.hyper(0.0, 0.0, 0, None).validate()
    }

    /// Whether the run follows the reference protocol (batch 1024, 200 epochs, 10-point grid).
    pub fn is_reference_protocol(&self) -> bool {
        self.training.is_reference() && self.grid.is_reference()
    }

    pub fn hyper(&self, learning_rate: f64, reg: f64, seed: u64, latent_dim: Option<usize>) -> BprHyperParams {
        BprHyperParams {
            latent_dim: latent_dim.unwrap_or(self.training.latent_dim),
            learning_rate,
            reg,
            epochs: self.training.epochs,
            batch_size: self.training.batch_size,
            seed,
            init_std: self.training.init_std,
        }
    }
}
