//! Deterministic probe datasets.
//!
//! *Context-keyed classification*: every sentence opens with a context token
//! `ctxK`; somewhere after it sits one pattern trigram. The label is 1 iff the
//! trigram belongs to that context. Every trigram appears with both labels, so
//! a detector has to be conditioned on the context to separate them.
//!
//! *Toy QA*: each question carries one key token `keyK`; each of the
//! [`CANDIDATES`] answers carries the phrase of some key. Exactly one answer
//! carries the phrase of the question's key.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{ClassificationRecord, QaGroup};
use crate::error::{Error, Result};

/// Candidates per toy QA group.
pub const CANDIDATES: usize = 4;
/// Words per pattern or phrase.
pub const PATTERN_LEN: usize = 3;
/// First position a pattern may occupy; keeps the context token out of any
/// width-3 window that touches the pattern.
pub const PATTERN_OFFSET: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthSpec {
    pub seed: u64,
    /// Sentences (classification) or question groups (QA).
    pub n_examples: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub n_contexts: usize,
    pub n_patterns: usize,
    pub filler_vocab: usize,
}

impl SynthSpec {
    pub fn context_keyed(n_examples: usize, seed: u64) -> Self {
        SynthSpec {
            seed,
            n_examples,
            min_len: 8,
            max_len: 14,
            n_contexts: 4,
            n_patterns: 1,
            filler_vocab: 30,
        }
    }

    pub fn toy_qa(n_groups: usize, seed: u64) -> Self {
        SynthSpec {
            seed,
            n_examples: n_groups,
            min_len: 6,
            max_len: 10,
            n_contexts: 8,
            n_patterns: 1,
            filler_vocab: 30,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_contexts < 2 {
            return Err(Error::Config("at least two contexts are required".into()));
        }
        if self.n_patterns == 0 || self.filler_vocab == 0 || self.n_examples == 0 {
            return Err(Error::Config(
                "n_examples, n_patterns and filler_vocab must be positive".into(),
            ));
        }
        if self.min_len > self.max_len {
            return Err(Error::Config(format!(
                "min_len {} exceeds max_len {}",
                self.min_len, self.max_len
            )));
        }
        if self.min_len < PATTERN_OFFSET + PATTERN_LEN {
            return Err(Error::Config(format!(
                "sentences of {} tokens cannot hold a pattern after position {PATTERN_OFFSET}",
                self.min_len
            )));
        }
        Ok(())
    }
}

pub fn context_token(k: usize) -> String {
    format!("ctx{k}")
}

/// The trigram `m` owned by context `k`.
pub fn pattern_tokens(k: usize, m: usize) -> [String; PATTERN_LEN] {
    std::array::from_fn(|t| format!("p{k}m{m}t{t}"))
}

pub fn key_token(k: usize) -> String {
    format!("key{k}")
}

/// The answer phrase paired with key `k`.
pub fn phrase_tokens(k: usize) -> [String; PATTERN_LEN] {
    std::array::from_fn(|t| format!("ans{k}t{t}"))
}

fn filler(rng: &mut ChaCha8Rng, spec: &SynthSpec, len: usize) -> Vec<String> {
    (0..len).map(|_| format!("f{}", rng.random_range(0..spec.filler_vocab))).collect()
}

fn embed_phrase(rng: &mut ChaCha8Rng, words: &mut [String], phrase: &[String], first: usize) {
    let start = rng.random_range(first..=words.len() - phrase.len());
    words[start..start + phrase.len()].clone_from_slice(phrase);
}

pub fn gen_context_keyed(spec: &SynthSpec) -> Result<Vec<ClassificationRecord>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let c = spec.n_contexts;
    let mut out = Vec::with_capacity(spec.n_examples);
    for _ in 0..spec.n_examples {
        let len = rng.random_range(spec.min_len..=spec.max_len);
        let k = rng.random_range(0..c);
        let label = usize::from(rng.random_bool(0.5));
        let owner = if label == 1 {
            k
        } else {
            (k + rng.random_range(1..c)) % c
        };
        let m = rng.random_range(0..spec.n_patterns);
        let mut words = filler(&mut rng, spec, len);
        words[0] = context_token(k);
        embed_phrase(&mut rng, &mut words, &pattern_tokens(owner, m), PATTERN_OFFSET);
        out.push(ClassificationRecord { label, text: words.join(" ") });
    }
    Ok(out)
}

pub fn gen_toy_qa(spec: &SynthSpec) -> Result<Vec<QaGroup>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let c = spec.n_contexts;
    let mut out = Vec::with_capacity(spec.n_examples);
    for i in 0..spec.n_examples {
        let k = rng.random_range(0..c);
        let q_len = rng.random_range(spec.min_len..=spec.max_len);
        let mut question = filler(&mut rng, spec, q_len);
        let pos = rng.random_range(0..q_len);
        question[pos] = key_token(k);

        let mut others: Vec<usize> = (0..c).filter(|&j| j != k).collect();
        others.shuffle(&mut rng);
        let distractors: Vec<usize> = if others.len() >= CANDIDATES - 1 {
            others[..CANDIDATES - 1].to_vec()
        } else {
            (0..CANDIDATES - 1).map(|_| *others.choose(&mut rng).expect("c >= 2")).collect()
        };
        let positive = rng.random_range(0..CANDIDATES);
        let mut candidates = Vec::with_capacity(CANDIDATES);
        let mut labels = Vec::with_capacity(CANDIDATES);
        let mut next = distractors.into_iter();
        for slot in 0..CANDIDATES {
            let key = if slot == positive { k } else { next.next().expect("enough distractors") };
            let len = rng.random_range(spec.min_len..=spec.max_len);
            let mut words = filler(&mut rng, spec, len);
            embed_phrase(&mut rng, &mut words, &phrase_tokens(key), 0);
            candidates.push(words.join(" "));
            labels.push(u8::from(slot == positive));
        }
        out.push(QaGroup {
            qid: format!("q{i}"),
            question: question.join(" "),
            candidates,
            labels,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
    Test,
}

/// 70/15/15 assignment from a hash of the example index.
pub fn split_of(index: usize, seed: u64) -> Split {
    let mut z = seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    match z % 100 {
        0..70 => Split::Train,
        70..85 => Split::Dev,
        _ => Split::Test,
    }
}

/// Items partitioned into (train, dev, test) in original order.
pub fn split_three<T: Clone>(items: &[T], seed: u64) -> (Vec<T>, Vec<T>, Vec<T>) {
    let (mut train, mut dev, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (i, item) in items.iter().enumerate() {
        match split_of(i, seed) {
            Split::Train => train.push(item.clone()),
            Split::Dev => dev.push(item.clone()),
            Split::Test => test.push(item.clone()),
        }
    }
    (train, dev, test)
}

pub fn classification_tsv(records: &[ClassificationRecord]) -> String {
    records.iter().map(|r| format!("{}\t{}\n", r.label, r.text)).collect()
}

pub fn qa_tsv(groups: &[QaGroup]) -> String {
    let mut out = String::new();
    for g in groups {
        for (a, y) in g.candidates.iter().zip(&g.labels) {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", g.qid, g.question, a, y));
        }
    }
    out
}
