use std::fs;
use std::path::{Path, PathBuf};

use super::{ExperimentConfig, ExperimentError, Result};
use crate::corpus::make_split;
use crate::mappers::Method;
use crate::store::{generate_synthetic_pair, write_embeddings, SyntheticPair, SyntheticSpec, FILE_EXTENSION};

pub const SYNTHETIC_MODEL_TAG: &str = "synthetic";

#[derive(Debug, Clone)]
pub struct SyntheticWorkspace {
    pub config: ExperimentConfig,
    pub config_path: PathBuf,
    pub pair: SyntheticPair,
}

/// Generates a synthetic language pair and writes everything a grid run
/// needs into `dir`: one `.tldr` file per language, `splits.json` (seeded
/// with `spec.seed`) and `experiment.json` with outputs under `dir/out`.
pub fn write_synthetic_workspace(
    spec: &SyntheticSpec,
    dir: impl AsRef<Path>,
    methods: Vec<Method>,
    dims: Option<Vec<usize>>,
) -> Result<SyntheticWorkspace> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    let pair = generate_synthetic_pair(spec).map_err(|e| ExperimentError::InvalidConfig(e.to_string()))?;

    let mut files = std::collections::BTreeMap::new();
    for m in [&pair.x, &pair.y] {
        let name = format!("{}.{SYNTHETIC_MODEL_TAG}.{FILE_EXTENSION}", m.language());
        write_embeddings(m, dir.join(&name)).map_err(|e| ExperimentError::InvalidConfig(e.to_string()))?;
        files.insert(m.language().to_string(), PathBuf::from(name));
    }
    make_split(pair.x.doc_ids(), spec.seed)?.write(dir.join("splits.json"))?;

    let mut config = ExperimentConfig {
        languages: vec![spec.languages.0.clone(), spec.languages.1.clone()],
        embedding_files: [(SYNTHETIC_MODEL_TAG.to_string(), files)].into(),
        methods,
        dims,
        split_path: "splits.json".into(),
        seed: spec.seed,
        output_dir: "out".into(),
        nca: None,
    };
    let config_path = dir.join("experiment.json");
    fs::write(&config_path, config.to_json()).map_err(|e| ExperimentError::io(&config_path, e))?;
    config.resolve_relative_to(dir);
    config.validate()?;
    Ok(SyntheticWorkspace {
        config,
        config_path,
        pair,
    })
}
