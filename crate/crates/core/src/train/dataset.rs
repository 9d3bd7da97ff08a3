use crate::data::{tokenize, ClassificationRecord, QaGroup, Vocabulary};
use crate::metrics::RankedGroup;
use crate::error::Result;

/// Token ids of one classification example, truncated but not padded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledSentence {
    pub ids: Vec<usize>,
    pub label: usize,
}

/// A question with its encoded candidates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedGroup {
    pub question: Vec<usize>,
    pub candidates: Vec<Vec<usize>>,
    pub labels: Vec<u8>,
}

/// One (question, candidate) training pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairRef<'a> {
    pub question: &'a [usize],
    pub answer: &'a [usize],
    pub label: usize,
}

/// Vocabulary over the tokenized `texts`.
pub fn vocab_from_texts<'a>(
    texts: impl IntoIterator<Item = &'a str>,
    max_size: usize,
    min_count: usize,
) -> Vocabulary {
    let tokenized: Vec<Vec<String>> = texts.into_iter().map(tokenize).collect();
    Vocabulary::build(&tokenized, max_size, min_count)
}

/// Every question and candidate text of `groups`.
pub fn group_texts(groups: &[QaGroup]) -> impl Iterator<Item = &str> {
    groups
        .iter()
        .flat_map(|g| std::iter::once(g.question.as_str()).chain(g.candidates.iter().map(String::as_str)))
}

fn encode_text(vocab: &Vocabulary, text: &str, max_len: usize) -> Vec<usize> {
    let tokens = tokenize(text);
    vocab.encode(&tokens[..tokens.len().min(max_len)])
}

pub fn encode_classification(
    vocab: &Vocabulary,
    records: &[ClassificationRecord],
    max_len: usize,
) -> Vec<LabeledSentence> {
    records
        .iter()
        .map(|r| LabeledSentence {
            ids: encode_text(vocab, &r.text, max_len),
            label: r.label,
        })
        .collect()
}

pub fn encode_groups(vocab: &Vocabulary, groups: &[QaGroup], max_len: usize) -> Vec<EncodedGroup> {
    groups
        .iter()
        .map(|g| EncodedGroup {
            question: encode_text(vocab, &g.question, max_len),
            candidates: g.candidates.iter().map(|c| encode_text(vocab, c, max_len)).collect(),
            labels: g.labels.clone(),
        })
        .collect()
}

/// Flattens groups into pairs in group order.
pub fn flatten_pairs(groups: &[EncodedGroup]) -> Vec<PairRef<'_>> {
    groups
        .iter()
        .flat_map(|g| {
            g.candidates.iter().zip(&g.labels).map(move |(a, &y)| PairRef {
                question: &g.question,
                answer: a,
                label: y as usize,
            })
        })
        .collect()
}

/// Reassembles flat pair scores into ranked groups.
pub fn regroup(groups: &[EncodedGroup], scores: &[f64]) -> Result<Vec<RankedGroup>> {
    let mut offset = 0;
    let mut out = Vec::with_capacity(groups.len());
    for g in groups {
        let n = g.candidates.len();
        let labels = g.labels.iter().map(|&y| y == 1).collect();
        out.push(RankedGroup::new(scores[offset..offset + n].to_vec(), labels)?);
        offset += n;
    }
    Ok(out)
}

/// Fraction-of-items split by a seeded shuffle: `(train, held_out)` indices,
/// each in ascending order. At least one item lands on each side when `n ≥ 2`.
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    let mut held = ((n as f64) * fraction).round() as usize;
    if n >= 2 {
        held = held.clamp(1, n - 1);
    }
    let mut val = order[..held].to_vec();
    let mut train = order[held..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pairs_follow_group_order() {
        let groups = vec![
            EncodedGroup { question: vec![2], candidates: vec![vec![3], vec![4]], labels: vec![0, 1] },
            EncodedGroup { question: vec![5], candidates: vec![vec![6]], labels: vec![1] },
        ];
        let pairs = flatten_pairs(&groups);
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs[2].question, &[5]);
        assert_eq!(pairs.iter().map(|p| p.label).collect::<Vec<_>>(), vec![0, 1, 1]);
        let ranked = regroup(&groups, &[0.1, 0.9, 0.5]).unwrap();
        assert_eq!(ranked[0].scores, vec![0.1, 0.9]);
        assert_eq!(ranked[1].labels, vec![true]);
    }

    #[test]
    fn truncates_to_max_len() {
        let vocab = Vocabulary::from_tokens(["a", "b"]);
        let recs = vec![ClassificationRecord { label: 1, text: "a b a b a".into() }];
        let enc = encode_classification(&vocab, &recs, 3);
        assert_eq!(enc[0].ids.len(), 3);
    }

    proptest! {
        #[test]
        fn holdout_partitions(n in 0usize..300, fraction in 0.01f64..0.99, seed in any::<u64>()) {
            let (train, val) = holdout_split(n, fraction, seed);
            let mut all: Vec<usize> = train.iter().chain(&val).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            if n >= 2 {
                prop_assert!(!train.is_empty() && !val.is_empty());
            }
        }
    }
}
