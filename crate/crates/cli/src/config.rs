//! TOML experiment configuration. Every field has a default, and the
//! defaults reproduce the canonical synthetic experiment.
//!
//! ```toml
//! output_dir = "runs/canonical"
//! repetitions = 20
//! truncate_to = 5
//! normalize = "none"
//!
//! [spec]
//! n_train = 15000
//! regime = { kind = "norm_noise", noise = "logistic", target = 0.10 }
//!
//! [solver]
//! learning_rate = 0.5
//! max_iters = 30000
//!
//! [model_noise]
//! kind = "logistic"
//! scale = 1.0
//!
//! [grid]
//! noises = ["logistic", "normal", "laplace", "hs", "label_flip"]
//! targets = [0.10]
//! n_train = [15000]
//! ```

use std::path::{Path, PathBuf};

use metricfit::datagen::SyntheticSpec;
use metricfit::io::TabularSpec;
use metricfit::{NoiseKind, NoiseSpec, Normalization, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelNoise {
    pub kind: NoiseKind,
    pub scale: f64,
}

impl Default for ModelNoise {
    fn default() -> Self {
        Self {
            kind: NoiseKind::Logistic,
            scale: 1.0,
        }
    }
}

impl ModelNoise {
    pub fn spec(&self) -> Result<NoiseSpec<f64>> {
        Ok(NoiseSpec::new(self.kind, self.scale)?)
    }
}

/// Datasets on disk, used instead of `[spec]` by `fit` and `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    pub train: PathBuf,
    pub test: Option<PathBuf>,
    /// Ground-truth model document, enabling recovery errors.
    pub truth: Option<PathBuf>,
    /// Read `train`/`test` as generic delimited tables instead of the
    /// native `z0..,label` format.
    pub tabular: Option<TabularSpec>,
}

/// Axes of the experiment grid; an empty axis takes its value from `[spec]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    /// Noise kinds, or `label_flip` for the fair-coin relabeling regime.
    pub noises: Vec<String>,
    /// Mislabel targets. For `label_flip` the flip probability is twice the target.
    pub targets: Vec<f64>,
    /// Training-set sizes; the test-set size stays `n_pairs − n_train` of `[spec]`.
    pub n_train: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub spec: SyntheticSpec,
    pub data: Option<DataSource>,
    pub solver: SolverConfig,
    /// The noise model assumed by the loss, which may differ from the
    /// generating noise.
    pub model_noise: ModelNoise,
    pub truncate_to: Option<usize>,
    pub repetitions: usize,
    pub output_dir: PathBuf,
    pub normalize: Normalization,
    /// Worker threads for `experiment`; 0 uses every core.
    pub workers: usize,
    pub grid: Grid,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            spec: SyntheticSpec::canonical(),
            data: None,
            solver: SolverConfig::default(),
            model_noise: ModelNoise::default(),
            truncate_to: None,
            repetitions: 1,
            output_dir: PathBuf::from("out"),
            normalize: Normalization::None,
            workers: 0,
            grid: Grid::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        toml::from_str(&text).map_err(|source| CliError::Toml {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(CliError::Config("repetitions must be at least 1".into()));
        }
        if self.truncate_to == Some(0) {
            return Err(CliError::Config("truncate_to must be at least 1".into()));
        }
        self.solver.validate()?;
        self.spec.validate()?;
        self.model_noise.spec()?;
        for t in &self.grid.targets {
            if !(0.0..0.5).contains(t) {
                return Err(CliError::Config(format!("grid target {t} outside [0, 0.5)")));
            }
        }
        for &n in &self.grid.n_train {
            if n == 0 {
                return Err(CliError::Config("grid n_train entries must be positive".into()));
            }
        }
        for name in &self.grid.noises {
            crate::experiment::GridNoise::parse(name)?;
        }
        Ok(())
    }

    /// Creates the output directory, which doubles as the writability check.
    pub fn prepare_output(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.output_dir).map_err(io_err(&self.output_dir))?;
        Ok(&self.output_dir)
    }
}
