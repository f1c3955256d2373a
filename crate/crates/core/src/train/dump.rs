//! Analysis dumps: induced trees, marginal matrices, and prediction files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::data::Vocabulary;
use crate::encoders::TreeMode;
use crate::inference::{cle_decode, is_valid_tree, ArcMatrix, DependencyTree};
use crate::model::TextClassifier;
use crate::tasks::{LabelSet, Prediction};
use crate::tensor::{ParamStore, Pass};

use super::{Result, TrainError};

pub struct DumpStats {
    pub sentences: usize,
    pub trees: Vec<DependencyTree>,
}

/// Decode and write the maximum spanning tree for each sentence using the
/// model's learned potentials. Trees go to `out` in the 10-column format;
/// the full marginal matrices go to `<out>.marginals.tsv`.
///
/// Requires a latent-tree model: decoding runs over the scores that define
/// the latent tree distribution.
pub fn dump_trees(
    model: &TextClassifier,
    store: &ParamStore,
    vocab: &Vocabulary,
    sentences: &[Vec<String>],
    out: &Path,
) -> Result<DumpStats> {
    let tree_mode = model.encoder().config().tree_mode;
    if tree_mode != TreeMode::Latent {
        return Err(TrainError::Config(format!(
            "tree dumping needs a latent-tree checkpoint; this model's tree mode is {tree_mode:?} \
             (supervised and tree-free encoders define no tree distribution to decode)"
        )));
    }
    let root_mode = model.encoder().config().root_mode;

    let mut tree_writer = BufWriter::new(File::create(out)?);
    let mut marginal_path = out.as_os_str().to_os_string();
    marginal_path.push(".marginals.tsv");
    let mut marginal_writer = BufWriter::new(File::create(&marginal_path)?);

    let mut trees = Vec::with_capacity(sentences.len());
    for (index, tokens) in sentences.iter().enumerate() {
        let ids = vocab.encode_sentence(tokens);
        let pass = Pass::eval(store);
        let repr = model.encode_sentence(&pass, &ids, None)?;
        let scores = repr
            .log_potentials
            .as_ref()
            .expect("latent encoders produce potential scores");
        let arcs = ArcMatrix::from_tensor(scores)?;
        let tree = cle_decode(&arcs, root_mode);
        debug_assert!(is_valid_tree(tree.heads(), root_mode));

        writeln!(tree_writer, "# sent_id = {index}")?;
        for (i, token) in tokens.iter().enumerate() {
            writeln!(
                tree_writer,
                "{}\t{}\t_\t_\t_\t_\t{}\t_\t_\t_",
                i + 1,
                token,
                tree.head_of(i + 1)
            )?;
        }
        writeln!(tree_writer)?;

        let marginals = repr.marginals.as_ref().expect("latent encoders produce marginals");
        write_marginal_block(&mut marginal_writer, index, &marginals.values())?;
        trees.push(tree);
    }
    tree_writer.flush()?;
    marginal_writer.flush()?;
    Ok(DumpStats { sentences: sentences.len(), trees })
}

fn write_marginal_block(w: &mut impl Write, index: usize, arcs: &ArcMatrix) -> Result<()> {
    writeln!(w, "# sent_id = {index}")?;
    write_arc_matrix(w, arcs)?;
    writeln!(w)?;
    Ok(())
}

/// Write an arc matrix as TSV: one row per head index starting at 0, one
/// column per modifier index starting at 1. Self-arcs print as 0.
pub fn write_marginals_tsv(path: &Path, arcs: &ArcMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_arc_matrix(&mut w, arcs)?;
    w.flush()?;
    Ok(())
}

fn write_arc_matrix(w: &mut impl Write, arcs: &ArcMatrix) -> Result<()> {
    let n = arcs.n();
    for h in 0..=n {
        let row: Vec<String> = (1..=n)
            .map(|m| if h == m { "0".to_string() } else { format!("{:.12}", arcs.get(h, m)) })
            .collect();
        writeln!(w, "{}", row.join("\t"))?;
    }
    Ok(())
}

/// Write predictions as TSV rows: example id, gold label, predicted label,
/// then one probability per class.
pub fn write_predictions(
    path: &Path,
    predictions: &[(String, usize, Prediction)],
    labels: &LabelSet,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (id, gold, prediction) in predictions {
        let probs: Vec<String> = prediction.probs.iter().map(|p| format!("{p:.12}")).collect();
        writeln!(
            w,
            "{}\t{}\t{}\t{}",
            id,
            labels.label(*gold)?,
            labels.label(prediction.label_index)?,
            probs.join("\t")
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Read a prediction TSV back as (id, gold label, predicted label) rows.
pub fn read_predictions(path: &Path) -> Result<Vec<(String, String, String)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            return Err(TrainError::Config(format!(
                "{}:{}: expected at least 3 tab-separated fields",
                path.display(),
                lineno + 1
            )));
        }
        rows.push((fields[0].to_string(), fields[1].to_string(), fields[2].to_string()));
    }
    Ok(rows)
}
