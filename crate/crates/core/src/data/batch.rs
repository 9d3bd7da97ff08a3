use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::vocab::{Vocabulary, PAD};

/// A single sentence padded to at least the window size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedSentence {
    pub ids: Vec<usize>,
    /// True token count after truncation.
    pub length: usize,
    pub mask: Vec<bool>,
}

/// Valid-window mask for a sentence of `length` real tokens padded to
/// `padded` positions. Sentences shorter than the window keep exactly one
/// window over the padded prefix.
pub fn window_mask(length: usize, padded: usize, window: usize) -> Vec<bool> {
    assert!(padded >= window && padded >= length);
    let width = padded - window + 1;
    (0..width)
        .map(|i| if length < window { i == 0 } else { i + window <= length })
        .collect()
}

/// Truncates to `max_len` ids and pads to `max(window, length)`.
pub fn encode_sentence(
    vocab: &Vocabulary,
    tokens: &[String],
    max_len: usize,
    window: usize,
) -> EncodedSentence {
    assert!(max_len >= 1);
    let mut ids = vocab.encode(&tokens[..tokens.len().min(max_len)]);
    let length = ids.len();
    let padded = length.max(window);
    ids.resize(padded, PAD);
    EncodedSentence {
        mask: window_mask(length, padded, window),
        ids,
        length,
    }
}

/// Padded id matrix `[batch, padded_len]` with per-row window masks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentenceBatch {
    pub ids: Vec<usize>,
    pub lengths: Vec<usize>,
    /// `batch * (padded_len - window + 1)` booleans.
    pub conv_mask: Vec<bool>,
    pub padded_len: usize,
    pub window: usize,
}

impl SentenceBatch {
    /// Pads every row to the longest row (and at least `window`).
    pub fn from_rows<S: AsRef<[usize]>>(rows: &[S], window: usize) -> Self {
        let longest = rows.iter().map(|r| r.as_ref().len()).max().unwrap_or(0);
        Self::with_padding(rows, window, longest.max(window))
    }

    /// Pads every row to exactly `padded_len`, which must cover the longest row.
    pub fn with_padding<S: AsRef<[usize]>>(rows: &[S], window: usize, padded_len: usize) -> Self {
        let mut ids = Vec::with_capacity(rows.len() * padded_len);
        let mut lengths = Vec::with_capacity(rows.len());
        let mut conv_mask = Vec::new();
        for row in rows {
            let row = row.as_ref();
            assert!(row.len() <= padded_len, "row longer than padded length");
            ids.extend_from_slice(row);
            ids.extend(std::iter::repeat_n(PAD, padded_len - row.len()));
            lengths.push(row.len());
            conv_mask.extend(window_mask(row.len(), padded_len, window));
        }
        SentenceBatch {
            ids,
            lengths,
            conv_mask,
            padded_len,
            window,
        }
    }

    pub fn batch_size(&self) -> usize {
        self.lengths.len()
    }

    pub fn mask_width(&self) -> usize {
        self.padded_len + 1 - self.window
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.ids[i * self.padded_len..(i + 1) * self.padded_len]
    }
}

/// Deterministic shuffled partition of `0..n` into batches of `batch_size`;
/// the final partial batch is kept.
pub fn make_batches(n: usize, batch_size: usize, shuffle_seed: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab() -> Vocabulary {
        Vocabulary::from_tokens((0..50).map(|i| format!("w{i}")))
    }

    fn words(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("w{}", i % 50)).collect()
    }

    #[test]
    fn truncates_long_answers() {
        let enc = encode_sentence(&vocab(), &words(42), 40, 5);
        assert_eq!(enc.length, 40);
        assert_eq!(enc.ids.len(), 40);
        assert_eq!(enc.mask.len(), 36);
        assert!(enc.mask.iter().all(|&m| m));
    }

    #[test]
    fn short_sentence_gets_one_window() {
        let enc = encode_sentence(&vocab(), &words(2), 40, 5);
        assert_eq!(enc.ids.len(), 5);
        assert_eq!(&enc.ids[2..], &[PAD, PAD, PAD]);
        assert_eq!(enc.mask, vec![true]);
    }

    #[test]
    fn batch_mask_width() {
        let rows = vec![vec![2, 3, 4, 5, 6, 7], vec![2, 3]];
        let b = SentenceBatch::from_rows(&rows, 3);
        assert_eq!(b.padded_len, 6);
        assert_eq!(b.conv_mask.len(), 2 * 4);
        assert_eq!(&b.conv_mask[4..], &[true, false, false, false]);
        assert_eq!(b.row(1), &[2, 3, PAD, PAD, PAD, PAD]);
    }

    #[test]
    fn batch_sizes_and_determinism() {
        let b = make_batches(5, 2, 9);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![2, 2, 1]);
        assert_eq!(b, make_batches(5, 2, 9));
    }

    proptest! {
        #[test]
        fn batches_partition_items(n in 0usize..200, size in 1usize..17, seed in any::<u64>()) {
            let mut all: Vec<usize> = make_batches(n, size, seed).concat();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }

        #[test]
        fn mask_never_covers_padding(len in 0usize..30, extra in 0usize..10, h in 1usize..6) {
            let padded = len.max(h) + extra;
            let mask = window_mask(len, padded, h);
            prop_assert_eq!(mask.len(), padded - h + 1);
            prop_assert_eq!(mask.iter().filter(|&&m| m).count(), if len < h { 1 } else { len - h + 1 });
            if len >= h {
                for (i, &m) in mask.iter().enumerate() {
                    prop_assert!(!m || i + h <= len);
                }
            }
        }
    }
}
