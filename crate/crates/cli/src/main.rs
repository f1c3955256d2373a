//! Command-line interface: training, evaluation, grid search, induced-tree
//! dumping, and significance testing.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric
//! failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use treern::inference::InferenceError;
use treern::model::{ModelError, TaskKind};
use treern::tensor::TensorError;
use treern::train::{
    approx_randomization_test, dump_trees, evaluate, grid_search, load_datasets_from_dir,
    load_model, read_predictions, train, write_predictions, Datasets, TrainConfig, TrainError,
    TrainOutcome,
};

#[derive(Parser)]
#[command(name = "treern", version, about = "Relation-network sentence encoders with dependency-tree constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a JSON config and a data directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Directory holding train.tsv (required), dev.tsv and test.tsv
        /// (optional), and .conllu tree files for supervised modes.
        #[arg(long)]
        data_dir: PathBuf,
        /// Output directory for the checkpoint, reports, and predictions.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a data file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Optional path for a predictions TSV.
        #[arg(long)]
        preds_out: Option<PathBuf>,
    },
    /// Grid search over the configured axes; trains every cell.
    Grid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode and dump maximum spanning trees and marginals for raw sentences.
    ParseDump {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Plain text, one space-tokenized sentence per line.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Approximate randomization test between two prediction files.
    Sigtest {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        rounds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn exit_code_for(err: &TrainError) -> u8 {
    match err {
        TrainError::Config(_) => 1,
        TrainError::Diverged { .. } => 3,
        TrainError::Tensor(e) => match e {
            TensorError::Singular { .. } | TensorError::NonPositiveDet { .. } | TensorError::LogDomain { .. } => 3,
            _ => 2,
        },
        TrainError::Inference(InferenceError::Degenerate(_)) => 3,
        TrainError::Model(ModelError::Tensor(TensorError::Singular { .. })) => 3,
        TrainError::Model(ModelError::Encoder(treern::encoders::EncoderError::Inference(
            InferenceError::Degenerate(_),
        ))) => 3,
        _ => 2,
    }
}

fn read_config(path: &Path) -> Result<TrainConfig, TrainError> {
    let text = fs::read_to_string(path)?;
    let config: TrainConfig = serde_json::from_str(&text)?;
    config.validate()?;
    Ok(config)
}

fn run_train(config: &Path, data_dir: &Path, out: &Path) -> Result<(), TrainError> {
    let config = read_config(config)?;
    let data = load_datasets_from_dir(&config, data_dir)?;
    log::info!(
        "loaded {} train / {} dev{} examples",
        data.train.len(),
        data.dev.len(),
        data.test.as_ref().map(|t| format!(" / {} test", t.len())).unwrap_or_default()
    );
    let outcome = train(&config, &data, Some(out))?;
    finish_run(&outcome, &data, out)
}

fn run_grid(config: &Path, data_dir: &Path, out: &Path) -> Result<(), TrainError> {
    let config = read_config(config)?;
    let data = load_datasets_from_dir(&config, data_dir)?;
    let (best, reports) = grid_search(&config, &data, Some(out))?;
    fs::create_dir_all(out)?;
    fs::write(out.join("grid_reports.json"), serde_json::to_string_pretty(&reports)?)?;
    println!("grid: {} cells trained", reports.len());
    for (i, report) in reports.iter().enumerate() {
        println!(
            "  cell {i}: optimizer {:?}, lr {}, best dev {:.4}",
            report.config.optimizer,
            report.config.resolved_learning_rate(),
            report.best_dev_accuracy
        );
    }
    finish_run(&best, &data, out)
}

fn finish_run(outcome: &TrainOutcome, data: &Datasets, out: &Path) -> Result<(), TrainError> {
    fs::create_dir_all(out)?;
    fs::write(out.join("report.json"), serde_json::to_string_pretty(&outcome.report)?)?;
    fs::write(out.join("report.txt"), outcome.report.text_table())?;
    print!("{}", outcome.report.text_table());

    // predictions from the strongest available split
    let (split, examples) = match &data.test {
        Some(test) => ("test", test),
        None => ("dev", &data.dev),
    };
    let encoded = treern::data::encode_examples(examples, &outcome.vocab, &outcome.labels)?;
    let result = evaluate(&outcome.model, &outcome.store, &encoded)?;
    let preds_path = out.join("predictions.tsv");
    write_predictions(&preds_path, &result.predictions, &outcome.labels)?;
    log::info!("{split} predictions written to {}", preds_path.display());
    Ok(())
}

fn run_eval(checkpoint: &Path, data: &Path, preds_out: Option<&Path>) -> Result<(), TrainError> {
    let (model, store, meta) = load_model(checkpoint)?;
    let labels = meta.labels.clone();
    let examples = match meta.config.task {
        TaskKind::Single => treern::data::read_single_sentence_tsv(data, &labels)?,
        TaskKind::Pair => treern::data::read_pair_tsv(data, &labels)?,
    };
    let encoded = treern::data::encode_examples(&examples, &meta.vocab, &labels)?;
    let result = evaluate(&model, &store, &encoded)?;
    println!("accuracy {:.4} on {} examples", result.accuracy, encoded.len());
    if let Some(path) = preds_out {
        write_predictions(path, &result.predictions, &labels)?;
        println!("predictions written to {}", path.display());
    }
    Ok(())
}

fn run_parse_dump(checkpoint: &Path, input: &Path, out: &Path) -> Result<(), TrainError> {
    let (model, store, meta) = load_model(checkpoint)?;
    let text = fs::read_to_string(input)?;
    let sentences: Vec<Vec<String>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split_whitespace().map(str::to_string).collect())
        .collect();
    let stats = dump_trees(&model, &store, &meta.vocab, &sentences, out)?;
    println!(
        "decoded {} sentences; trees in {}, marginals in {}.marginals.tsv",
        stats.sentences,
        out.display(),
        out.display()
    );
    Ok(())
}

fn run_sigtest(a: &Path, b: &Path, rounds: usize, seed: u64) -> Result<(), TrainError> {
    let preds_a = read_predictions(a)?;
    let preds_b = read_predictions(b)?;
    if preds_a.len() != preds_b.len() {
        return Err(TrainError::Config(format!(
            "prediction files differ in length: {} vs {}",
            preds_a.len(),
            preds_b.len()
        )));
    }
    let score = |rows: &[(String, String, String)]| -> Vec<f64> {
        rows.iter().map(|(_, gold, pred)| if gold == pred { 1.0 } else { 0.0 }).collect()
    };
    let acc = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let scores_a = score(&preds_a);
    let scores_b = score(&preds_b);
    let p = approx_randomization_test(&scores_a, &scores_b, rounds, seed)?;
    println!("accuracy a {:.4}, accuracy b {:.4}", acc(&scores_a), acc(&scores_b));
    println!("p-value {p:.6} ({rounds} rounds, seed {seed})");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let result = match &cli.command {
        Command::Train { config, data_dir, out } => run_train(config, data_dir, out),
        Command::Eval { checkpoint, data, preds_out } => run_eval(checkpoint, data, preds_out.as_deref()),
        Command::Grid { config, data_dir, out } => run_grid(config, data_dir, out),
        Command::ParseDump { checkpoint, input, out } => run_parse_dump(checkpoint, input, out),
        Command::Sigtest { a, b, rounds, seed } => run_sigtest(a, b, *rounds, *seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
