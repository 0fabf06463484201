//! The experiment grid: every ordered language pair × method × dimension for
//! every embedding model, with per-cell reports, aggregation and CSV output.

mod aggregate;
mod synthetic;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, SplitAssignment};
use crate::eval::{evaluate_pair, RetrievalReport};
use crate::linalg::DenseMatrix;
use crate::mappers::{fit_lca, fit_lcc, fit_nca, MapperModel, Method};
use crate::nn::TrainConfig;
use crate::store::{read_embeddings, EmbeddingMatrix};

pub use aggregate::{aggregate, emit_outputs, AggregateTable, SweepPoint, TableRow, SWEEP_HEADER, TABLE_HEADER};
pub use synthetic::{write_synthetic_workspace, SyntheticWorkspace};

pub const DEFAULT_LANGUAGES: [&str; 5] = ["en", "ro", "nl", "de", "fr"];
/// Powers of two in the default sweep; `min(n_train, 768)` is appended.
pub const DEFAULT_SWEEP: [usize; 9] = [2, 4, 8, 16, 32, 64, 128, 256, 512];
pub const DEFAULT_SWEEP_CAP: usize = 768;
pub const CELLS_DIR: &str = "cells";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {message}")]
    ConfigFile { path: String, message: String },
    #[error(transparent)]
    Split(#[from] CorpusError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("no reports to aggregate")]
    NoReports,
    #[error("failed to build worker pool: {0}")]
    Pool(String),
}

impl ExperimentError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ExperimentError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

fn default_languages() -> Vec<String> {
    DEFAULT_LANGUAGES.iter().map(|s| s.to_string()).collect()
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_languages")]
    pub languages: Vec<String>,
    /// model tag → language → `.tldr` path.
    pub embedding_files: BTreeMap<String, BTreeMap<String, PathBuf>>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Sweep values for LCA and LCC; the default sweep when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    pub split_path: PathBuf,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    /// NCA training settings; defaults seeded with `seed` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nca: Option<TrainConfig>,
}

fn is_safe_name(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

impl ExperimentConfig {
    /// Reads a JSON config. Relative paths inside it are resolved against
    /// the config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| ExperimentError::ConfigFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        if let Some(base) = path.parent() {
            cfg.resolve_relative_to(base);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.split_path);
        fix(&mut self.output_dir);
        for files in self.embedding_files.values_mut() {
            files.values_mut().for_each(fix);
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ExperimentError::InvalidConfig(m));
        if self.languages.len() < 2 {
            return bad(format!("need at least two languages, got {}", self.languages.len()));
        }
        let mut seen = HashSet::new();
        for l in &self.languages {
            if !is_safe_name(l) {
                return bad(format!("language code {l:?} must be ASCII letters, digits, '-' or '_'"));
            }
            if !seen.insert(l) {
                return bad(format!("language {l} listed twice"));
            }
        }
        if self.embedding_files.is_empty() {
            return bad("embedding_files is empty".into());
        }
        for (model, files) in &self.embedding_files {
            if !is_safe_name(model) {
                return bad(format!("model tag {model:?} must be ASCII letters, digits, '-' or '_'"));
            }
            for l in &self.languages {
                if !files.contains_key(l) {
                    return bad(format!("model {model} has no embedding file for language {l}"));
                }
            }
        }
        if self.methods.is_empty() {
            return bad("methods is empty".into());
        }
        let mut seen = HashSet::new();
        if let Some(m) = self.methods.iter().find(|m| !seen.insert(**m)) {
            return bad(format!("method {m} listed twice"));
        }
        if let Some(dims) = &self.dims {
            if dims.is_empty() && self.methods.iter().any(|m| m.is_swept()) {
                return bad("dims is empty but lca/lcc are requested".into());
            }
            if dims.contains(&0) {
                return bad("dims must be at least 1".into());
            }
        }
        if let Some(nca) = &self.nca {
            nca.validate().map_err(|e| ExperimentError::InvalidConfig(e.to_string()))?;
        }
        Ok(())
    }

    pub fn nca_config(&self) -> TrainConfig {
        self.nca.clone().unwrap_or_else(|| TrainConfig {
            seed: self.seed,
            ..TrainConfig::default()
        })
    }

    /// Sorted, de-duplicated sweep values for a training set of `n_train`.
    pub fn sweep_dims(&self, n_train: usize) -> Vec<usize> {
        let mut dims = match &self.dims {
            Some(d) => d.clone(),
            None => default_dims(n_train),
        };
        dims.sort_unstable();
        dims.dedup();
        dims
    }

    /// Every cell of the grid, in canonical order.
    pub fn cells(&self, n_train: usize) -> Vec<Cell> {
        let dims = self.sweep_dims(n_train);
        let mut cells = Vec::new();
        for model in self.embedding_files.keys() {
            for source in &self.languages {
                for target in self.languages.iter().filter(|t| *t != source) {
                    for &method in &self.methods {
                        let cell = |dim| Cell {
                            model: model.clone(),
                            source: source.clone(),
                            target: target.clone(),
                            method,
                            dim,
                        };
                        if method.is_swept() {
                            cells.extend(dims.iter().map(|&d| cell(Some(d))));
                        } else {
                            cells.push(cell(None));
                        }
                    }
                }
            }
        }
        cells
    }
}

pub fn default_dims(n_train: usize) -> Vec<usize> {
    let cap = n_train.min(DEFAULT_SWEEP_CAP);
    let mut dims: Vec<usize> = DEFAULT_SWEEP.iter().copied().filter(|&d| d <= n_train).collect();
    if cap >= 1 {
        dims.push(cap);
    }
    dims.sort_unstable();
    dims.dedup();
    dims
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub model: String,
    pub source: String,
    pub target: String,
    pub method: Method,
    pub dim: Option<usize>,
}

impl Cell {
    pub fn file_name(&self) -> String {
        let dim = self.dim.map(|d| format!(".{d}")).unwrap_or_default();
        format!("{}.{}-{}.{}{dim}.json", self.model, self.source, self.target, self.method)
    }

    fn matches(&self, r: &RetrievalReport) -> bool {
        r.model == self.model
            && r.pair.0 == self.source
            && r.pair.1 == self.target
            && r.method == self.method
            && r.dim == self.dim
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}->{} {}", self.model, self.source, self.target, self.method)?;
        if let Some(d) = self.dim {
            write!(f, " dim={d}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Recompute cells that already have a report on disk.
    pub force: bool,
    /// Worker threads; rayon's default when `None`.
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub cell: Cell,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    /// Reports of every successful cell, in canonical cell order.
    pub reports: Vec<RetrievalReport>,
    pub failures: Vec<CellFailure>,
    pub computed: usize,
    pub reused: usize,
}

type Loaded = HashMap<(String, String), std::result::Result<Arc<EmbeddingMatrix>, String>>;

struct SplitRows {
    train: DenseMatrix,
    val: DenseMatrix,
    test: DenseMatrix,
}

/// Fits and evaluates every cell of the grid, writing one report file per
/// cell under `output_dir/cells`. Cells whose report already exists are
/// reused unless `opts.force` is set. Cell-level problems (missing files,
/// misaligned ids, fit failures) are collected in `failures`.
pub fn run_grid(cfg: &ExperimentConfig, opts: RunOptions) -> Result<GridOutcome> {
    cfg.validate()?;
    let split = SplitAssignment::read(&cfg.split_path)?;
    let cells_dir = cfg.output_dir.join(CELLS_DIR);
    fs::create_dir_all(&cells_dir).map_err(|e| ExperimentError::io(&cells_dir, e))?;

    let cells = cfg.cells(split.train.len());
    let mut pending = Vec::new();
    let mut reused: HashMap<Cell, RetrievalReport> = HashMap::new();
    for cell in &cells {
        match (!opts.force).then(|| existing_report(&cells_dir, cell)).flatten() {
            Some(r) => {
                reused.insert(cell.clone(), r);
            }
            None => pending.push(cell.clone()),
        }
    }
    log::info!("{} cells, {} reused, {} to compute", cells.len(), reused.len(), pending.len());

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = opts.workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| ExperimentError::Pool(e.to_string()))?;

    let tasks = group_tasks(&pending, cfg);
    let nca_cfg = cfg.nca_config();
    let results: Vec<(Cell, std::result::Result<RetrievalReport, String>)> = pool.install(|| {
        let loaded = load_embeddings(cfg, &tasks);
        tasks
            .par_iter()
            .flat_map_iter(|task| run_task(task, &loaded, &split, &nca_cfg))
            .collect()
    });

    let mut computed: HashMap<Cell, RetrievalReport> = HashMap::new();
    let mut failures = Vec::new();
    for (cell, result) in results {
        match result {
            Ok(report) => {
                let path = cells_dir.join(cell.file_name());
                let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
                fs::write(&path, json).map_err(|e| ExperimentError::io(&path, e))?;
                computed.insert(cell, report);
            }
            Err(error) => {
                log::error!("cell {cell} failed: {error}");
                failures.push(CellFailure { cell, error });
            }
        }
    }

    let order: HashMap<&Cell, usize> = cells.iter().enumerate().map(|(i, c)| (c, i)).collect();
    failures.sort_by_key(|f| order[&f.cell]);
    let n_computed = computed.len();
    let reports = cells
        .iter()
        .filter_map(|c| computed.remove(c).or_else(|| reused.remove(c)))
        .collect();
    Ok(GridOutcome {
        reports,
        failures,
        computed: n_computed,
        reused: cells.len() - pending.len(),
    })
}

fn existing_report(dir: &Path, cell: &Cell) -> Option<RetrievalReport> {
    let text = fs::read_to_string(dir.join(cell.file_name())).ok()?;
    let report: RetrievalReport = serde_json::from_str(&text).ok()?;
    cell.matches(&report).then_some(report)
}

/// Cells sharing one model, one unordered language pair and one method.
struct Task {
    model: String,
    langs: (String, String),
    method: Method,
    cells: Vec<Cell>,
}

fn group_tasks(pending: &[Cell], cfg: &ExperimentConfig) -> Vec<Task> {
    let rank: HashMap<&str, usize> = cfg.languages.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut groups: BTreeMap<(String, usize, usize, Method), Vec<Cell>> = BTreeMap::new();
    for cell in pending {
        let (a, b) = (rank[cell.source.as_str()], rank[cell.target.as_str()]);
        groups
            .entry((cell.model.clone(), a.min(b), a.max(b), cell.method))
            .or_default()
            .push(cell.clone());
    }
    groups
        .into_iter()
        .map(|((model, a, b, method), cells)| Task {
            model,
            langs: (cfg.languages[a].clone(), cfg.languages[b].clone()),
            method,
            cells,
        })
        .collect()
}

fn load_embeddings(cfg: &ExperimentConfig, tasks: &[Task]) -> Loaded {
    let mut wanted: Vec<(String, String)> = tasks
        .iter()
        .flat_map(|t| [(t.model.clone(), t.langs.0.clone()), (t.model.clone(), t.langs.1.clone())])
        .collect();
    wanted.sort();
    wanted.dedup();
    wanted
        .into_par_iter()
        .map(|(model, lang)| {
            let path = &cfg.embedding_files[&model][&lang];
            let loaded = read_embeddings(path)
                .map_err(|e| format!("{}: {e}", path.display()))
                .and_then(|m| {
                    if m.language() != lang {
                        Err(format!(
                            "{}: file is tagged language {:?}, configured as {lang:?}",
                            path.display(),
                            m.language()
                        ))
                    } else {
                        Ok(Arc::new(m))
                    }
                });
            ((model, lang), loaded)
        })
        .collect()
}

fn split_rows(m: &EmbeddingMatrix, split: &SplitAssignment) -> std::result::Result<SplitRows, String> {
    let rows = |ids: &[String], which: &str| {
        m.rows_for_ids(ids).map_err(|id| {
            format!(
                "{} embeddings ({}) lack {which} document {id:?}",
                m.language(),
                m.model_tag()
            )
        })
    };
    Ok(SplitRows {
        train: rows(&split.train, "train")?,
        val: rows(&split.val, "validation")?,
        test: rows(&split.test, "test")?,
    })
}

fn run_task(
    task: &Task,
    loaded: &Loaded,
    split: &SplitAssignment,
    nca_cfg: &TrainConfig,
) -> Vec<(Cell, std::result::Result<RetrievalReport, String>)> {
    let fail_all = |e: String| task.cells.iter().map(|c| (c.clone(), Err(e.clone()))).collect();
    let rows = |lang: &String| -> std::result::Result<SplitRows, String> {
        let m = loaded[&(task.model.clone(), lang.clone())].as_ref().map_err(Clone::clone)?;
        split_rows(m, split)
    };
    let (a, b) = match (rows(&task.langs.0), rows(&task.langs.1)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return fail_all(e),
    };
    if a.train.cols() != b.train.cols() {
        return fail_all(format!(
            "embedding widths differ: {} has {}, {} has {}",
            task.langs.0,
            a.train.cols(),
            task.langs.1,
            b.train.cols()
        ));
    }
    let oriented = |cell: &Cell| {
        if cell.source == task.langs.0 {
            (&a, &b)
        } else {
            (&b, &a)
        }
    };
    let report = |cell: &Cell, model: &MapperModel, x: &SplitRows, y: &SplitRows| {
        evaluate_pair(model, &x.test, &y.test)
            .map(|s| {
                RetrievalReport::new(
                    cell.model.clone(),
                    (cell.source.clone(), cell.target.clone()),
                    cell.method,
                    cell.dim,
                    s,
                )
            })
            .map_err(|e| e.to_string())
    };

    match task.method {
        Method::None => task
            .cells
            .iter()
            .map(|cell| {
                let (x, y) = oriented(cell);
                let model = MapperModel::None {
                    input_dim: x.train.cols(),
                };
                (cell.clone(), report(cell, &model, x, y))
            })
            .collect(),
        Method::Lca => task
            .cells
            .iter()
            .map(|cell| {
                let (x, y) = oriented(cell);
                let fitted = fit_lca(&x.train, &y.train, cell.dim.unwrap_or(0)).map_err(|e| e.to_string());
                let result = fitted.and_then(|m| report(cell, &MapperModel::Lca(m), x, y));
                (cell.clone(), result)
            })
            .collect(),
        Method::Lcc => {
            let mut out = Vec::with_capacity(task.cells.len());
            for source in [&task.langs.0, &task.langs.1] {
                let cells: Vec<&Cell> = task.cells.iter().filter(|c| &c.source == source).collect();
                let Some(widest) = cells.iter().filter_map(|c| c.dim).max() else {
                    continue;
                };
                let (x, y) = oriented(cells[0]);
                let wide = fit_lcc(&x.train, &y.train, widest);
                for cell in cells {
                    let result = match &wide {
                        Ok(w) => w
                            .truncated(cell.dim.unwrap_or(0))
                            .map_err(|e| e.to_string())
                            .and_then(|m| report(cell, &MapperModel::Lcc(m), x, y)),
                        Err(_) => fit_lcc(&x.train, &y.train, cell.dim.unwrap_or(0))
                            .map_err(|e| e.to_string())
                            .and_then(|m| report(cell, &MapperModel::Lcc(m), x, y)),
                    };
                    out.push((cell.clone(), result));
                }
            }
            out
        }
        Method::Nca => {
            let fitted = fit_nca(&a.train, &b.train, &a.val, &b.val, nca_cfg).map_err(|e| e.to_string());
            task.cells
                .iter()
                .map(|cell| {
                    let (x, y) = oriented(cell);
                    let result = fitted.clone().and_then(|m| {
                        let m = if cell.source == task.langs.0 { m } else { m.reversed() };
                        report(cell, &MapperModel::Nca(m), x, y)
                    });
                    (cell.clone(), result)
                })
                .collect()
        }
    }
}
