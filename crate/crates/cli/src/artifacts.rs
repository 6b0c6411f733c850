//! Stage manifests and freshness checks.
//!
//! Every stage writes `<out>/<stage>.manifest.json` with the digest of the
//! configuration it ran under (cumulative over its upstream stages), the run
//! seed, and SHA-256 digests of the files it read and wrote. A stage that
//! consumes another stage's artifacts first re-checks that stage's manifest
//! against the current configuration and the files on disk.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use stresslens::digest;
use stresslens::eval::Provenance;

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Validate,
    Featurize,
    Select,
    Train,
    Evaluate,
    Ablate,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Validate => "validate",
            Stage::Featurize => "featurize",
            Stage::Select => "select",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Ablate => "ablate",
            Stage::Report => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    /// Path relative to the run directory (absolute if outside) to SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub struct Workspace<'a> {
    pub cfg: &'a RunConfig,
}

fn upstream(stage: Stage, cfg: &RunConfig) -> Option<Stage> {
    match stage {
        Stage::Synth => None,
        Stage::Validate => cfg.input.is_none().then_some(Stage::Synth),
        Stage::Featurize => Some(Stage::Validate),
        Stage::Select | Stage::Ablate => Some(Stage::Featurize),
        Stage::Train => Some(Stage::Select),
        Stage::Evaluate => Some(Stage::Train),
        Stage::Report => Some(Stage::Evaluate),
    }
}

/// Settings a stage itself depends on, excluding its upstream stages.
fn own_config(stage: Stage, cfg: &RunConfig) -> Value {
    match stage {
        Stage::Synth => json!({ "cohort": cfg.cohort() }),
        Stage::Validate => json!({
            "input": cfg.input.as_ref().map(|p| p.display().to_string()),
            "min_consecutive_days": cfg.min_consecutive_days,
        }),
        Stage::Featurize => json!({ "features": cfg.features, "assemble": cfg.assemble }),
        Stage::Select => json!({
            "scheme": cfg.scheme,
            "seed": cfg.seed,
            "labels": cfg.labels,
            "families": cfg.families,
            "k": cfg.k,
            "rank": cfg.rank(true),
        }),
        Stage::Train => json!({ "forest": cfg.forest() }),
        Stage::Evaluate | Stage::Report => Value::Null,
        Stage::Ablate => json!({
            "scheme": cfg.scheme,
            "seed": cfg.seed,
            "labels": cfg.labels,
            "k": cfg.k,
            "rank": cfg.rank(false),
            "forest": cfg.forest(),
        }),
    }
}

fn cumulative_config(stage: Stage, cfg: &RunConfig) -> Value {
    json!({
        "stage": stage.name(),
        "own": own_config(stage, cfg),
        "upstream": upstream(stage, cfg).map(|u| cumulative_config(u, cfg)),
    })
}

pub fn config_hash(stage: Stage, cfg: &RunConfig) -> Result<String, CliError> {
    digest::config_digest(&cumulative_config(stage, cfg)).map_err(CliError::pipeline)
}

fn digest_of(path: &Path) -> Result<String, CliError> {
    digest::file_digest(path).map_err(CliError::Data)
}

impl Workspace<'_> {
    pub fn path(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    fn manifest_path(&self, stage: Stage) -> PathBuf {
        self.path(&format!("{}.manifest.json", stage.name()))
    }

    /// Key under which `path` is recorded in a manifest.
    fn key(&self, path: &Path) -> String {
        path.strip_prefix(&self.cfg.out)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }

    fn resolve(&self, key: &str) -> PathBuf {
        let p = Path::new(key);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.cfg.out.join(p)
        }
    }

    pub fn provenance(&self, stage: Stage) -> Result<Provenance, CliError> {
        Ok(Provenance {
            config_hash: config_hash(stage, self.cfg)?,
            seed: self.cfg.seed,
        })
    }

    pub fn has_run(&self, stage: Stage) -> bool {
        self.manifest_path(stage).exists()
    }

    /// Loads the manifest of a finished stage and checks that it matches the
    /// current configuration and that none of its files changed since.
    pub fn require(&self, stage: Stage) -> Result<StageManifest, CliError> {
        let path = self.manifest_path(stage);
        if !path.exists() {
            return Err(CliError::MissingStage {
                stage: stage.name(),
                path,
            });
        }
        let m: StageManifest = read_json(&path)?;
        let stale = |path: PathBuf, reason: &str| CliError::Stale {
            stage: stage.name(),
            path,
            reason: reason.into(),
        };
        if m.config_hash != config_hash(stage, self.cfg)? {
            return Err(stale(path, "produced under a different configuration"));
        }
        for (key, sha) in m.inputs.iter().chain(&m.outputs) {
            let p = self.resolve(key);
            if !p.exists() {
                return Err(CliError::MissingStage {
                    stage: stage.name(),
                    path: p,
                });
            }
            if &digest_of(&p)? != sha {
                return Err(stale(p, "contents changed since the stage ran"));
            }
        }
        Ok(m)
    }

    /// Records a completed stage.
    pub fn finish(&self, stage: Stage, inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<StageManifest, CliError> {
        let digests = |files: &[PathBuf]| -> Result<BTreeMap<String, String>, CliError> {
            files.iter().map(|p| Ok((self.key(p), digest_of(p)?))).collect()
        };
        let m = StageManifest {
            stage: stage.name().into(),
            config_hash: config_hash(stage, self.cfg)?,
            seed: self.cfg.seed,
            inputs: digests(inputs)?,
            outputs: digests(outputs)?,
        };
        write_text(
            &self.manifest_path(stage),
            &(serde_json::to_string_pretty(&m).map_err(|e| CliError::pipeline(e.into()))? + "\n"),
        )?;
        Ok(m)
    }

    /// Output files of an upstream manifest, as paths.
    pub fn outputs_of(&self, m: &StageManifest) -> Vec<PathBuf> {
        m.outputs.keys().map(|k| self.resolve(k)).collect()
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Prepends a `#` provenance line to a CSV file.
pub fn stamp_csv(path: &Path, prov: &Provenance) -> Result<(), CliError> {
    let body = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    write_text(
        path,
        &format!("# config_hash={} seed={}\n{body}", prov.config_hash, prov.seed),
    )
}
