//! Pretrained word-embedding loading.
//!
//! File format: one token per line, `token v1 v2 ... vd` with decimal floats
//! separated by single spaces.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::tensor::{uniform, TensorData};

use super::{DataError, Result, Vocabulary, PAD};

/// Embedding matrix plus per-row provenance. All rows are finetuned during
/// training regardless of origin.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub matrix: TensorData,
    /// True for rows copied from the pretrained file.
    pub pretrained: Vec<bool>,
}

impl EmbeddingTable {
    /// Random table in [-0.05, 0.05] with a zero padding row.
    pub fn random(vocab_len: usize, dim: usize, rng: &mut ChaCha8Rng) -> EmbeddingTable {
        let mut matrix = uniform(vec![vocab_len, dim], -0.05, 0.05, rng);
        zero_row(&mut matrix, PAD, dim);
        EmbeddingTable { matrix, pretrained: vec![false; vocab_len] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingLoadReport {
    pub hits: usize,
    pub misses: usize,
    pub duplicates: usize,
    pub dim: usize,
}

fn zero_row(matrix: &mut TensorData, row: usize, dim: usize) {
    for v in &mut matrix.data_mut()[row * dim..(row + 1) * dim] {
        *v = 0.0;
    }
}

/// Load pretrained vectors for the vocabulary. Rows for tokens found in the
/// file are copied; all other rows are initialized uniformly in
/// [-0.05, 0.05]. The first occurrence of a duplicated token wins.
pub fn load_pretrained_embeddings(
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(EmbeddingTable, EmbeddingLoadReport)> {
    let mut table = EmbeddingTable::random(vocab.len(), dim, rng);

    let reader = BufReader::new(File::open(path)?);
    let mut duplicates = 0usize;
    let mut file_dim: Option<usize> = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(' ');
        let token = parts.next().unwrap_or_default();
        let values: std::result::Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
        let values = values.map_err(|e| DataError::Format {
            path: path.display().to_string(),
            line: lineno + 1,
            message: format!("bad float: {e}"),
        })?;
        match file_dim {
            None => file_dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(DataError::Format {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    message: format!("dimension {} differs from earlier lines ({d})", values.len()),
                });
            }
            Some(_) => {}
        }
        if values.len() != dim {
            return Err(DataError::Format {
                path: path.display().to_string(),
                line: lineno + 1,
                message: format!("file has {}-dimensional vectors but the model expects {dim}", values.len()),
            });
        }
        let index = vocab.encode(token);
        if index == super::UNK && vocab.decode(super::UNK) != token {
            continue; // token not in vocabulary
        }
        if table.pretrained[index] {
            duplicates += 1;
            log::warn!("duplicate embedding for '{token}' at {}:{} (first occurrence wins)", path.display(), lineno + 1);
            continue;
        }
        table.matrix.data_mut()[index * dim..(index + 1) * dim].copy_from_slice(&values);
        table.pretrained[index] = true;
    }

    let hits = table.pretrained.iter().filter(|&&p| p).count();
    let misses = vocab.len() - hits;
    if hits == 0 {
        log::warn!("no vocabulary tokens found in {}; all rows randomly initialized", path.display());
    }
    let report = EmbeddingLoadReport { hits, misses, duplicates, dim: file_dim.unwrap_or(dim) };
    Ok((table, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use std::io::Write;

    fn vocab_of(words: &str) -> Vocabulary {
        let sentence: Vec<String> = words.split_whitespace().map(str::to_string).collect();
        Vocabulary::build([sentence.as_slice()], 1, false)
    }

    #[test]
    fn copies_known_rows_and_randomizes_the_rest() {
        let vocab = vocab_of("red green blue white");
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "red 1.0 2.0 3.0").unwrap();
        writeln!(f, "blue -1.0 0.5 0.25").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (table, report) = load_pretrained_embeddings(f.path(), &vocab, 3, &mut rng).unwrap();
        assert_eq!(report.hits, 2);
        assert_eq!(report.misses, vocab.len() - 2);
        let red = vocab.encode("red");
        assert_eq!(&table.matrix.data()[red * 3..red * 3 + 3], &[1.0, 2.0, 3.0]);
        let green = vocab.encode("green");
        assert!(!table.pretrained[green]);
        assert!(table.matrix.data()[green * 3..green * 3 + 3].iter().all(|v| v.abs() <= 0.05));
    }

    #[test]
    fn first_duplicate_wins() {
        let vocab = vocab_of("red");
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "red 1.0 1.0").unwrap();
        writeln!(f, "red 9.0 9.0").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (table, report) = load_pretrained_embeddings(f.path(), &vocab, 2, &mut rng).unwrap();
        assert_eq!(report.duplicates, 1);
        let red = vocab.encode("red");
        assert_eq!(&table.matrix.data()[red * 2..red * 2 + 2], &[1.0, 1.0]);
    }

    #[test]
    fn inconsistent_dimension_reports_line() {
        let vocab = vocab_of("a b");
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "a 1.0 2.0").unwrap();
        writeln!(f, "b 1.0 2.0 3.0").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = load_pretrained_embeddings(f.path(), &vocab, 2, &mut rng).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }

    #[test]
    fn empty_file_gives_all_random_rows() {
        let vocab = vocab_of("a b");
        let f = tempfile::NamedTempFile::new().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (table, report) = load_pretrained_embeddings(f.path(), &vocab, 4, &mut rng).unwrap();
        assert_eq!(report.hits, 0);
        assert!(table.pretrained.iter().all(|p| !p));
    }
}
