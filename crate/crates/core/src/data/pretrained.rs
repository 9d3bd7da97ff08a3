use std::collections::HashSet;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::vocab::Vocabulary;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct PretrainedEmbeddings {
    /// `[vocab.len(), d]`
    pub table: Tensor,
    /// Number of vocabulary tokens found in the file.
    pub coverage: usize,
}

/// Parses `token v1 ... vd` lines. Every row is first drawn uniformly from
/// `[-0.5/d, 0.5/d]` (in id order, from `seed`) and then overwritten for
/// tokens present in the file, so out-of-vocabulary rows do not depend on
/// the file contents. The first occurrence of a token wins.
pub fn parse_pretrained(
    path: &Path,
    content: &str,
    vocab: &Vocabulary,
    d: usize,
    seed: u64,
) -> Result<PretrainedEmbeddings> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = Tensor::uniform(&[vocab.len(), d], 0.5 / d as f64, &mut rng);
    let mut seen = HashSet::new();
    for (i, line) in content.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(' ').filter(|f| !f.is_empty());
        let token = fields.next().expect("non-empty line");
        let values: Vec<&str> = fields.collect();
        if values.len() != d {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected {d} values after `{token}`, found {}", values.len()),
            ));
        }
        let mut row = Vec::with_capacity(d);
        for v in values {
            let x: f64 = v
                .parse()
                .map_err(|_| Error::parse(path, line_no, format!("unreadable number `{v}`")))?;
            row.push(x);
        }
        if let Some(id) = vocab.get(token) {
            if seen.insert(id) {
                table.data_mut()[id * d..(id + 1) * d].copy_from_slice(&row);
            }
        }
    }
    Ok(PretrainedEmbeddings {
        table,
        coverage: seen.len(),
    })
}

pub fn load_pretrained(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    d: usize,
    seed: u64,
) -> Result<PretrainedEmbeddings> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pretrained(path, &content, vocab, d, seed)
}
