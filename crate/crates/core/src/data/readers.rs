//! Readers for the TSV corpus formats and the 10-column dependency format.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::inference::{is_valid_tree, DependencyTree, RootMode};
use crate::tasks::LabelSet;

use super::{DataError, Example, Result};

fn format_err(path: &Path, line: usize, message: impl Into<String>) -> DataError {
    DataError::Format { path: path.display().to_string(), line, message: message.into() }
}

fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

/// Read a single-sentence corpus: one example per line, `label<TAB>sentence`
/// with the sentence pre-tokenized by spaces. Trailing whitespace is
/// tolerated; unknown labels and empty sentences are rejected.
pub fn read_single_sentence_tsv(path: &Path, labels: &LabelSet) -> Result<Vec<Example>> {
    let reader = BufReader::new(File::open(path)?);
    let mut examples = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let (label, sentence) = line
            .split_once('\t')
            .ok_or_else(|| format_err(path, lineno + 1, "expected label<TAB>sentence"))?;
        labels
            .index_of(label)
            .map_err(|_| format_err(path, lineno + 1, format!("unknown label '{label}'")))?;
        let tokens = tokenize(sentence);
        if tokens.is_empty() {
            return Err(format_err(path, lineno + 1, "empty sentence"));
        }
        examples.push(Example::single(examples.len().to_string(), tokens, label.to_string()));
    }
    Ok(examples)
}

/// Read a sentence-pair corpus: `label<TAB>sentence1<TAB>sentence2` per line.
pub fn read_pair_tsv(path: &Path, labels: &LabelSet) -> Result<Vec<Example>> {
    let reader = BufReader::new(File::open(path)?);
    let mut examples = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(format_err(path, lineno + 1, format!("expected 3 tab-separated fields, got {}", fields.len())));
        }
        labels
            .index_of(fields[0])
            .map_err(|_| format_err(path, lineno + 1, format!("unknown label '{}'", fields[0])))?;
        let first = tokenize(fields[1]);
        let second = tokenize(fields[2]);
        if first.is_empty() || second.is_empty() {
            return Err(format_err(path, lineno + 1, "empty sentence"));
        }
        examples.push(Example::pair(examples.len().to_string(), first, second, fields[0].to_string()));
    }
    Ok(examples)
}

/// Read head arrays from a 10-column dependency treebank file: column 7 is
/// the head index with 0 for the root, sentences are blank-line separated,
/// `#` lines are comments, and multi-word-token ranges and empty nodes are
/// skipped. Trees are validated at load.
pub fn read_conllu_heads(path: &Path) -> Result<Vec<DependencyTree>> {
    let reader = BufReader::new(File::open(path)?);
    let mut trees = Vec::new();
    let mut heads: Vec<usize> = Vec::new();

    let mut finish = |heads: &mut Vec<usize>, lineno: usize| -> Result<()> {
        if heads.is_empty() {
            return Ok(());
        }
        let n = heads.len();
        if let Some(&bad) = heads.iter().find(|&&h| h > n) {
            return Err(format_err(path, lineno, format!("head index {bad} out of range for {n} words")));
        }
        if !is_valid_tree(heads, RootMode::MultiRoot) {
            return Err(format_err(path, lineno, format!("head assignment {heads:?} is not a valid tree")));
        }
        trees.push(DependencyTree::new(std::mem::take(heads)).expect("validated above"));
        Ok(())
    };

    let mut last_line = 0;
    for (lineno, line) in reader.lines().enumerate() {
        last_line = lineno + 1;
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            finish(&mut heads, lineno)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 10 {
            return Err(format_err(path, lineno + 1, format!("expected 10 tab-separated columns, got {}", fields.len())));
        }
        let id = fields[0];
        if id.contains('-') || id.contains('.') {
            continue; // multi-word token range or empty node
        }
        let word_index: usize = id
            .parse()
            .map_err(|_| format_err(path, lineno + 1, format!("token id '{id}' is not an integer")))?;
        if word_index != heads.len() + 1 {
            return Err(format_err(
                path,
                lineno + 1,
                format!("token id {word_index} out of sequence (expected {})", heads.len() + 1),
            ));
        }
        let head: usize = fields[6]
            .parse()
            .map_err(|_| format_err(path, lineno + 1, format!("head '{}' is not an integer", fields[6])))?;
        heads.push(head);
    }
    finish(&mut heads, last_line)?;
    Ok(trees)
}
