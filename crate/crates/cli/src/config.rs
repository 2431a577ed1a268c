//! JSON run configuration.

use std::path::{Path, PathBuf};

use bdp_core::bilevel::{EigenSchedule, OneShotConfig, RegularizerKind, RetrainConfig, SearchConfig};
use bdp_core::data::{self, Dataset, Layout, SplitSpec};
use bdp_core::numcore::RngStream;
use bdp_core::pruning::{Criterion, PruneConfig};
use bdp_core::supernet::{OpKind, SpaceConfig};
use bdp_core::analysis::BoundSpace;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset: DatasetSource,
    #[serde(default)]
    pub split: SplitSpec,
    pub space: SpaceSection,
    pub search: SearchSection,
    pub prune: PruneConfig,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub eval: RetrainConfig,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    Csv(CsvSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub noise: f64,
    pub layout: Layout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSpec {
    /// Relative paths resolve against the config file's directory.
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSection {
    pub nodes_per_cell: usize,
    #[serde(default = "all_ops")]
    pub candidate_ops: Vec<OpKind>,
    /// Width of every node; inputs are zero-padded up to it. Defaults to the
    /// data dimension.
    #[serde(default)]
    pub feature_dim: Option<usize>,
    #[serde(default = "one")]
    pub num_cells: usize,
}

fn all_ops() -> Vec<OpKind> {
    OpKind::ALL.to_vec()
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default = "default_lr_w")]
    pub lr_w: f64,
    #[serde(default = "default_lr_alpha")]
    pub lr_alpha: f64,
    #[serde(default = "default_momentum")]
    pub momentum_w: f64,
    #[serde(default)]
    pub regularizer: RegularizerKind,
    #[serde(default)]
    pub eigen: EigenSchedule,
    #[serde(default)]
    pub one_shot: Option<OneShotConfig>,
}

fn default_lr_w() -> f64 {
    0.025
}

fn default_lr_alpha() -> f64 {
    3e-3
}

fn default_momentum() -> f64 {
    0.9
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default)]
    pub bound_space: BoundSpace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    /// Criterion pairs × ratio pairs.
    #[default]
    Criteria,
    /// Train:validation split fractions with pruning as configured.
    SplitRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default)]
    pub mode: GridMode,
    #[serde(default = "default_criteria")]
    pub criteria: Vec<(Criterion, Criterion)>,
    #[serde(default = "default_ratios")]
    pub ratios: Vec<(f64, f64)>,
    #[serde(default = "default_train_fractions")]
    pub train_fractions: Vec<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            mode: GridMode::default(),
            criteria: default_criteria(),
            ratios: default_ratios(),
            train_fractions: default_train_fractions(),
        }
    }
}

pub fn default_criteria() -> Vec<(Criterion, Criterion)> {
    use Criterion::{High, Low};
    vec![(Low, Low), (Low, High), (High, Low), (High, High)]
}

pub fn default_ratios() -> Vec<(f64, f64)> {
    vec![(25.0, 5.0), (20.0, 10.0), (15.0, 15.0), (10.0, 20.0), (5.0, 25.0)]
}

pub fn default_train_fractions() -> Vec<f64> {
    vec![0.1, 0.3, 0.5, 0.7, 0.9]
}

impl RunConfig {
    /// Reads and validates; any failure is a configuration error.
    pub fn load(path: &Path) -> Result<(RunConfig, PathBuf), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg = Self::from_json(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn from_json(text: &str) -> Result<RunConfig, CliError> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks everything that does not need the dataset itself.
    pub fn validate(&self) -> Result<(), CliError> {
        let cfg_err = |e: bdp_core::BdpError| CliError::Config(e.to_string());
        self.split.validate().map_err(cfg_err)?;
        if let DatasetSource::Synthetic(s) = &self.dataset {
            if s.classes < 2 || s.per_class < 1 || s.dim < 2 || !(s.noise >= 0.0 && s.noise.is_finite()) {
                return Err(CliError::Config(
                    "synthetic dataset needs classes >= 2, per_class >= 1, dim >= 2, finite noise >= 0".into(),
                ));
            }
        }
        // Class count is only known after loading; 2 is enough to validate
        // the rest of the space.
        self.search_config(self.space.feature_dim.unwrap_or(2), 2)
            .validate()
            .map_err(cfg_err)?;
        let e = &self.eval;
        if e.epochs == 0 || e.batch_size == 0 || !(e.lr > 0.0) || !(0.0..1.0).contains(&e.momentum) {
            return Err(CliError::Config(
                "eval needs epochs >= 1, batch_size >= 1, lr > 0, momentum in [0, 1)".into(),
            ));
        }
        let g = &self.grid;
        if g.ratios.iter().any(|&(t, v)| !(0.0..=100.0).contains(&t) || !(0.0..=100.0).contains(&v)) {
            return Err(CliError::Config("grid ratios must be percentages in [0, 100]".into()));
        }
        if g.train_fractions.iter().any(|&f| !(f > 0.0 && f < 1.0)) {
            return Err(CliError::Config("grid train_fractions must be in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn space_config(&self, feature_dim: usize, num_classes: usize) -> SpaceConfig {
        SpaceConfig {
            nodes_per_cell: self.space.nodes_per_cell,
            candidate_ops: self.space.candidate_ops.clone(),
            feature_dim,
            num_cells: self.space.num_cells,
            num_classes,
        }
    }

    pub fn search_config(&self, feature_dim: usize, num_classes: usize) -> SearchConfig {
        let s = &self.search;
        SearchConfig {
            epochs: s.epochs,
            batch_size: s.batch_size,
            lr_w: s.lr_w,
            lr_alpha: s.lr_alpha,
            momentum_w: s.momentum_w,
            seed: self.seed,
            prune: self.prune.clone(),
            space: self.space_config(feature_dim, num_classes),
            regularizer: s.regularizer,
            eigen: s.eigen,
            one_shot: s.one_shot,
        }
    }

    /// Generates or loads the data and pads it to the configured width.
    pub fn dataset(&self, base: &Path) -> Result<Dataset, CliError> {
        let raw = match &self.dataset {
            DatasetSource::Synthetic(s) => {
                let mut rng = RngStream::new(self.seed).derive("generator");
                data::gen_blobs(s.classes, s.per_class, s.dim, s.noise, s.layout, &mut rng)
                    .map_err(|e| CliError::Config(e.to_string()))?
            }
            DatasetSource::Csv(c) => {
                let path = if c.path.is_absolute() { c.path.clone() } else { base.join(&c.path) };
                data::load_csv(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
        };
        let width = self.space.feature_dim.unwrap_or(raw.dim());
        if width < raw.dim() {
            return Err(CliError::Config(format!(
                "feature_dim {width} is smaller than the data dimension {}",
                raw.dim()
            )));
        }
        raw.pad_features(width).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn output_dir(&self, flag: Option<&Path>) -> Result<PathBuf, CliError> {
        flag.map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .ok_or_else(|| CliError::Config("no output directory (use -o or output_dir)".into()))
    }
}
