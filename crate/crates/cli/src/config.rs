use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stresslens::aggregate::{AssembleConfig, Family};
use stresslens::eval::{PipelineConfig, SplitScheme};
use stresslens::features::{FeatureConfig, LabelScheme};
use stresslens::forest::{ForestConfig, DEFAULT_TREES};
use stresslens::ingest::DEFAULT_MIN_CONSECUTIVE_DAYS;
use stresslens::selection::{RankConfig, DEFAULT_K};
use stresslens::synth::CohortConfig;

use crate::error::CliError;

/// Everything a run depends on. Loaded from TOML, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Directory holding every stage artifact.
    pub out: PathBuf,
    /// Directory with the six input logs; `<out>/logs` when unset.
    pub input: Option<PathBuf>,
    /// Drives cohort generation and the split.
    pub seed: u64,
    pub scheme: SplitScheme,
    pub k: usize,
    pub ntree: usize,
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub forest_seed: u64,
    /// Trees in the forest that ranks candidate features.
    pub rank_trees: usize,
    pub labels: LabelScheme,
    /// Restrict candidate columns to these families.
    pub families: Option<Vec<Family>>,
    pub min_consecutive_days: usize,
    pub features: FeatureConfig,
    pub assemble: AssembleConfig,
    pub cohort: CohortConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("stresslens-run"),
            input: None,
            seed: CohortConfig::default().seed,
            scheme: SplitScheme::Random,
            k: DEFAULT_K,
            ntree: DEFAULT_TREES,
            mtry: None,
            min_leaf: ForestConfig::default().min_leaf,
            forest_seed: ForestConfig::default().seed,
            rank_trees: DEFAULT_TREES,
            labels: LabelScheme::Binary,
            families: None,
            min_consecutive_days: DEFAULT_MIN_CONSECUTIVE_DAYS,
            features: FeatureConfig::default(),
            assemble: AssembleConfig::default(),
            cohort: CohortConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.k == 0 {
            return Err(CliError::Input("k must be positive".into()));
        }
        if self.ntree == 0 || self.rank_trees == 0 {
            return Err(CliError::Input("forests need at least one tree".into()));
        }
        if self.min_leaf == 0 {
            return Err(CliError::Input("min_leaf must be positive".into()));
        }
        if self.mtry == Some(0) {
            return Err(CliError::Input("mtry must be positive".into()));
        }
        if matches!(&self.families, Some(f) if f.is_empty()) {
            return Err(CliError::Input("families must not be empty".into()));
        }
        Ok(())
    }

    pub fn logs_dir(&self) -> PathBuf {
        self.input.clone().unwrap_or_else(|| self.out.join("logs"))
    }

    /// The cohort actually generated: the run seed replaces the cohort's own.
    pub fn cohort(&self) -> CohortConfig {
        CohortConfig {
            seed: self.seed,
            ..self.cohort.clone()
        }
    }

    pub fn forest(&self) -> ForestConfig {
        ForestConfig {
            n_trees: self.ntree,
            mtry: self.mtry,
            min_leaf: self.min_leaf,
            seed: self.forest_seed,
        }
    }

    pub fn rank(&self, permutation: bool) -> RankConfig {
        RankConfig {
            forest: ForestConfig {
                n_trees: self.rank_trees,
                mtry: None,
                ..self.forest()
            },
            permutation,
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            k: self.k,
            labels: self.labels,
            families: self.families.clone(),
            rank: self.rank(false),
            forest: self.forest(),
        }
    }
}

pub fn parse_families(s: &str) -> Result<Vec<Family>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<Family>().map_err(|e| e.to_string()))
        .collect()
}
