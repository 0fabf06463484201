use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use tldr_core::corpus::{make_split, prepare_corpus, RepairTable, SplitAssignment};
use tldr_core::eval::{evaluate_pair, RetrievalReport};
use tldr_core::experiment::{aggregate, emit_outputs, run_grid, ExperimentConfig, RunOptions};
use tldr_core::linalg::DenseMatrix;
use tldr_core::mappers::{fit_mapper, read_model, write_model, Method};
use tldr_core::nn::TrainConfig;
use tldr_core::store::{generate_synthetic_pair, read_embeddings, write_embeddings, EmbeddingMatrix, SyntheticSpec};

#[derive(Parser)]
#[command(name = "tldr", version, about = "Align document-embedding spaces across languages and score mate retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, repair and align a per-language XML corpus; write JSONL and splits.json.
    Prep(PrepArgs),
    /// Write a synthetic two-language embedding pair with a shared latent space.
    Synth(SynthArgs),
    /// Fit a mapping on the training split and save it.
    Fit(FitArgs),
    /// Score a saved mapping on the test split.
    Eval(EvalArgs),
    /// Run the full experiment grid described by a config file.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct PrepArgs {
    /// Directory holding one subdirectory of XML files per language.
    #[arg(long)]
    corpus_dir: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "en,ro,nl,de,fr")]
    languages: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    /// JSON object mapping entity names to replacements; replaces the built-in table.
    #[arg(long)]
    repair_table: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    docs: usize,
    #[arg(long)]
    latent_dim: usize,
    #[arg(long)]
    embed_dim: usize,
    /// Standard deviation of additive noise, in embedding units.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_x: PathBuf,
    #[arg(long)]
    out_y: PathBuf,
    #[arg(long, default_value = "x")]
    lang_x: String,
    #[arg(long, default_value = "y")]
    lang_y: String,
    /// Also write a split of the synthetic ids, seeded with `--seed`.
    #[arg(long)]
    split_out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    method: Method,
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    split: PathBuf,
    /// Basis size for LCA, shared dimension for LCC.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    model_out: PathBuf,
    /// JSON file with NCA training settings.
    #[arg(long)]
    nca_config: Option<PathBuf>,
    /// NCA seed; overrides the seed in `--nca-config`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Recompute cells that already have a report.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    workers: Option<usize>,
}

fn read_repair_table(path: &Path) -> Result<RepairTable> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let pairs: BTreeMap<String, String> =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(RepairTable::from_pairs(pairs)?)
}

fn prep(args: PrepArgs) -> Result<ExitCode> {
    let table = match &args.repair_table {
        Some(p) => read_repair_table(p)?,
        None => RepairTable::default(),
    };
    let summary = prepare_corpus(&args.corpus_dir, &args.languages, args.seed, &args.out_dir, &table)?;
    for (lang, n) in &summary.parsed {
        println!("{lang}: {n} documents parsed");
    }
    let (train, val, test) = summary.split;
    println!("aligned {} documents; split train={train} val={val} test={test}", summary.aligned);
    if !summary.unknown_entities.is_empty() {
        println!("unrepaired entity-like tokens: {}", summary.unknown_entities.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn synth(args: SynthArgs) -> Result<ExitCode> {
    let mut spec = SyntheticSpec::new(args.docs, args.latent_dim, args.embed_dim, args.noise, args.seed);
    spec.languages = (args.lang_x, args.lang_y);
    let pair = generate_synthetic_pair(&spec)?;
    write_embeddings(&pair.x, &args.out_x).with_context(|| format!("writing {}", args.out_x.display()))?;
    write_embeddings(&pair.y, &args.out_y).with_context(|| format!("writing {}", args.out_y.display()))?;
    if let Some(path) = &args.split_out {
        make_split(pair.x.doc_ids(), args.seed)?.write(path)?;
    }
    println!("wrote {} documents of dimension {}", pair.x.n_docs(), pair.x.dim());
    Ok(ExitCode::SUCCESS)
}

struct Rows {
    train: DenseMatrix,
    val: DenseMatrix,
    test: DenseMatrix,
}

fn load(path: &Path) -> Result<EmbeddingMatrix> {
    read_embeddings(path).with_context(|| format!("reading {}", path.display()))
}

fn split_rows(m: &EmbeddingMatrix, split: &SplitAssignment) -> Result<Rows> {
    let rows = |ids: &[String]| {
        m.rows_for_ids(ids)
            .map_err(|id| anyhow::anyhow!("{} embeddings lack document {id:?}", m.language()))
    };
    Ok(Rows {
        train: rows(&split.train)?,
        val: rows(&split.val)?,
        test: rows(&split.test)?,
    })
}

fn fit(args: FitArgs) -> Result<ExitCode> {
    let split = SplitAssignment::read(&args.split)?;
    let (x, y) = (load(&args.source)?, load(&args.target)?);
    let (xr, yr) = (split_rows(&x, &split)?, split_rows(&y, &split)?);
    let mut nca = match &args.nca_config {
        Some(p) => serde_json::from_str::<TrainConfig>(
            &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )
        .with_context(|| format!("parsing {}", p.display()))?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.seed {
        nca.seed = seed;
    }
    if args.method.is_swept() && args.dim.is_none() {
        bail!("--dim is required for {}", args.method);
    }
    let model = fit_mapper(args.method, &xr.train, &yr.train, &xr.val, &yr.val, args.dim, &nca)?;
    write_model(&model, &args.model_out).with_context(|| format!("writing {}", args.model_out.display()))?;
    println!("fitted {} on {} training documents", args.method, xr.train.rows());
    Ok(ExitCode::SUCCESS)
}

fn eval(args: EvalArgs) -> Result<ExitCode> {
    let model = read_model(&args.model).with_context(|| format!("reading {}", args.model.display()))?;
    let split = SplitAssignment::read(&args.split)?;
    let (x, y) = (load(&args.source)?, load(&args.target)?);
    let (xr, yr) = (split_rows(&x, &split)?, split_rows(&y, &split)?);
    let scores = evaluate_pair(&model, &xr.test, &yr.test)?;
    let report = RetrievalReport::new(
        x.model_tag(),
        (x.language().to_string(), y.language().to_string()),
        model.method(),
        model.dim(),
        scores,
    );
    let json = serde_json::to_string_pretty(&report)? + "\n";
    fs::write(&args.report, json).with_context(|| format!("writing {}", args.report.display()))?;
    println!(
        "mate retrieval rate {:.6}, MRR {:.6} over {} queries",
        report.mate_retrieval_rate, report.mean_reciprocal_rank, report.n_queries
    );
    Ok(ExitCode::SUCCESS)
}

fn sweep(args: SweepArgs) -> Result<ExitCode> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let outcome = run_grid(
        &cfg,
        RunOptions {
            force: args.force,
            workers: args.workers,
        },
    )?;
    if !outcome.reports.is_empty() {
        let (table, series) = aggregate(&outcome.reports)?;
        emit_outputs(&table, &series, &outcome.reports, &cfg.output_dir)?;
    }
    println!(
        "{} cells: {} computed, {} reused, {} failed",
        outcome.reports.len() + outcome.failures.len(),
        outcome.computed,
        outcome.reused,
        outcome.failures.len()
    );
    for f in &outcome.failures {
        eprintln!("failed {}: {}", f.cell, f.error);
    }
    Ok(if outcome.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prep(a) => prep(a),
        Command::Synth(a) => synth(a),
        Command::Fit(a) => fit(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(2)
    })
}
