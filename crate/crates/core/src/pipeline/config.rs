//! TOML run configuration.
//!
//! ```toml
//! [data]
//! source = "synthetic"        # or "file"
//! normalize = "none"          # none | unit_columns | minmax01
//!
//! [data.synthetic]
//! subspaces = 10
//! dim_min = 6
//! dim_max = 12
//! ambient_dim = 784
//! points_per_subspace = 50
//! seed = 1
//!
//! [network]
//! hidden = []
//! latent = 64
//!
//! [model]
//! anchors = "auto"            # or an integer
//! clusters = 10
//!
//! [output]
//! dir = "out"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autoencoder::{Activation, AdamConfig};
use crate::dataset::{FileFormat, GeneratorConfig, Normalization};
use crate::error::{Error, Result};
use crate::self_expression::{AnchorCount, FitConfig, DENSE_CAP};
use crate::spectral::SpectralConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSection {
    pub path: PathBuf,
    pub format: FileFormat,
    /// Optional ground truth, one integer label per line.
    #[serde(default)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub source: DataSource,
    #[serde(default)]
    pub normalize: Normalization,
    #[serde(default)]
    pub synthetic: Option<GeneratorConfig>,
    #[serde(default)]
    pub file: Option<FileSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    /// Hidden widths between the input and the latent layer.
    pub hidden: Vec<usize>,
    pub latent: usize,
    pub latent_activation: Activation,
    pub output_activation: Activation,
    pub bias: bool,
    pub pretrain_epochs: usize,
    pub adam: AdamConfig,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            hidden: Vec::new(),
            latent: 64,
            latent_activation: Activation::Relu,
            output_activation: Activation::Identity,
            bias: true,
            pretrain_epochs: 100,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub anchors: AnchorCount,
    pub anchor_rank_tol: f64,
    pub clusters: usize,
    /// Regularizer of the dense least-squares reference. The factorized
    /// model does not depend on it; it is echoed for reproducibility.
    pub lambda: f64,
    pub max_outer: usize,
    pub threshold: f64,
    pub subspace_weight: f64,
    pub adam_steps_per_iter: usize,
    pub freeze_network: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        let fit = FitConfig::default();
        Self {
            anchors: fit.anchors,
            anchor_rank_tol: fit.anchor_rank_tol,
            clusters: 10,
            lambda: 1e-3,
            max_outer: fit.max_outer,
            threshold: fit.threshold,
            subspace_weight: fit.subspace_weight,
            adam_steps_per_iter: fit.adam_steps_per_iter,
            freeze_network: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Outer iterations at which the dense affinity is dumped; 0 is the
    /// affinity right after anchor initialization.
    pub dump_epochs: Vec<usize>,
    pub dump_affinity: bool,
    /// Dense computations (affinity dumps, CONN) run only up to this `n`.
    pub dense_cap: usize,
    pub save_model: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            dump_epochs: vec![0, 100, 500],
            dump_affinity: true,
            dense_cap: DENSE_CAP,
            save_model: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedSection {
    /// Seeds network initialization, anchors, the eigensolver and k-means.
    pub base: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub spectral: SpectralConfig,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub seeds: SeedSection,
}

impl RunConfig {
    /// Synthetic-data config with defaults everywhere else.
    pub fn synthetic(generator: GeneratorConfig) -> Self {
        Self {
            data: DataSection {
                source: DataSource::Synthetic,
                normalize: Normalization::None,
                synthetic: Some(generator),
                file: None,
            },
            network: NetworkSection::default(),
            model: ModelSection::default(),
            spectral: SpectralConfig::default(),
            output: OutputSection::default(),
            seeds: SeedSection::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok((Self::from_toml(&text)?, text))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Sample count when it is known before loading data.
    pub fn planned_n(&self) -> Option<usize> {
        match (self.data.source, &self.data.synthetic) {
            (DataSource::Synthetic, Some(g)) => Some(g.subspaces * g.points_per_subspace),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.data.source {
            DataSource::Synthetic => self
                .data
                .synthetic
                .as_ref()
                .ok_or_else(|| Error::config("source = \"synthetic\" needs a [data.synthetic] section"))?
                .validate()?,
            DataSource::File => {
                if self.data.file.is_none() {
                    return Err(Error::config("source = \"file\" needs a [data.file] section"));
                }
            }
        }
        let k = self.model.clusters;
        if k == 0 {
            return Err(Error::config("clusters k must be >= 1"));
        }
        if let AnchorCount::Fixed(m) = self.model.anchors {
            if m == 0 {
                return Err(Error::config("anchors m must be >= 1"));
            }
            if k > m {
                return Err(Error::config(format!(
                    "clusters k = {k} exceeds anchors m = {m}; need k <= m"
                )));
            }
            if let Some(n) = self.planned_n() {
                if m > n {
                    return Err(Error::config(format!(
                        "anchors m = {m} exceeds sample count n = {n}; need m <= n"
                    )));
                }
            }
        }
        if self.network.latent == 0 || self.network.hidden.iter().any(|&h| h == 0) {
            return Err(Error::config("network widths must be >= 1"));
        }
        if self.model.max_outer == 0 {
            return Err(Error::config("max_outer must be >= 1"));
        }
        if !(self.model.lambda > 0.0) {
            return Err(Error::config("lambda must be positive"));
        }
        self.spectral.validate()?;
        self.fit_config(1).validate()
    }

    /// Fit settings for data of ambient dimension `dim`.
    pub fn fit_config(&self, dim: usize) -> FitConfig {
        let mut layer_dims = vec![dim];
        layer_dims.extend(&self.network.hidden);
        layer_dims.push(self.network.latent);
        FitConfig {
            anchors: self.model.anchors,
            anchor_rank_tol: self.model.anchor_rank_tol,
            layer_dims,
            latent_activation: self.network.latent_activation,
            output_activation: self.network.output_activation,
            use_bias: self.network.bias,
            pretrain_epochs: self.network.pretrain_epochs,
            adam: self.network.adam,
            adam_steps_per_iter: self.model.adam_steps_per_iter,
            max_outer: self.model.max_outer,
            threshold: self.model.threshold,
            subspace_weight: self.model.subspace_weight,
            freeze_network: self.model.freeze_network,
            seed: self.seeds.base,
            snapshot_iterations: if self.output.dump_affinity {
                self.output.dump_epochs.clone()
            } else {
                Vec::new()
            },
        }
    }
}
