use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{clip_grad_norm, Adam, AdamConfig, DEFAULT_LR};
use super::dataset::{flatten_pairs, regroup, EncodedGroup, LabeledSentence, PairRef};
use crate::data::{make_batches, SentenceBatch};
use crate::error::{Error, Result};
use crate::metrics::{accuracy, mean_metrics, RankingMetrics};
use crate::model::{Classifier, Matcher};
use crate::tensor::{Graph, Mode, ParamStore, Var};

/// Optimization schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainPlan {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Share of the training file held out when no dev file is given.
    pub val_fraction: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub clip_norm: Option<f64>,
    pub workers: usize,
}

impl Default for TrainPlan {
    fn default() -> Self {
        TrainPlan {
            epochs: 30,
            batch_size: 128,
            lr: DEFAULT_LR,
            val_fraction: 0.15,
            patience: 5,
            seed: 1,
            clip_norm: None,
            workers: 1,
        }
    }
}

impl TrainPlan {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.workers == 0 {
            return Err(Error::Config("epochs, batch_size and workers must be positive".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config(format!("val_fraction {} outside (0, 1)", self.val_fraction)));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("bad learning rate {}", self.lr)));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("bad clip_norm {c}")));
            }
        }
        Ok(())
    }
}

/// Tracks the best validation metric; higher is better.
#[derive(Clone, Debug)]
pub struct EarlyStopper {
    patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper { patience, best: None, stale: 0 }
    }

    /// Records an epoch's metric and reports whether it is a new best.
    pub fn observe(&mut self, epoch: usize, metric: f64) -> bool {
        let improved = self.best.is_none_or(|(_, b)| metric > b);
        if improved {
            self.best = Some((epoch, metric));
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        improved
    }

    pub fn should_stop(&self) -> bool {
        self.stale >= self.patience
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: f64,
}

impl fmt::Display for EpochRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{:.6}\t{:.6}", self.epoch, self.train_loss, self.val_metric)
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_metric: f64,
}

impl TrainReport {
    /// Log file text, one `epoch<TAB>train_loss<TAB>val_metric` line per epoch.
    pub fn log_text(&self) -> String {
        self.log.iter().map(|r| format!("{r}\n")).collect()
    }
}

/// A model trained on samples of type `S`.
pub trait Objective<S: Sync>: Sync {
    type Validation: ?Sized + Sync;

    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
    /// Mean train-mode loss over `samples`.
    fn batch_loss(&self, g: &mut Graph, samples: &[&S], rng: &mut ChaCha8Rng) -> Result<Var>;
    /// Eval-mode validation metric, higher is better.
    fn validate(&self, data: &Self::Validation, batch_size: usize, workers: usize) -> Result<f64>;
}

/// Runs `f` over consecutive `batch_size` chunks of `items` on up to
/// `workers` threads and concatenates the results in input order.
pub fn parallel_batches<T, R, F>(items: &[T], batch_size: usize, workers: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&[T]) -> Result<Vec<R>> + Sync,
{
    let chunks: Vec<&[T]> = items.chunks(batch_size.max(1)).collect();
    let workers = workers.clamp(1, chunks.len().max(1));
    if workers == 1 {
        let mut out = Vec::with_capacity(items.len());
        for c in chunks {
            out.extend(f(c)?);
        }
        return Ok(out);
    }
    let per_worker = chunks.len().div_ceil(workers);
    let parts: Vec<Result<Vec<R>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = chunks
            .chunks(per_worker)
            .map(|group| {
                let f = &f;
                scope.spawn(move || {
                    let mut out = Vec::new();
                    for c in group {
                        out.extend(f(c)?);
                    }
                    Ok(out)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Eval-mode predictions for every sentence.
pub fn predict_all(
    model: &Classifier,
    data: &[LabeledSentence],
    batch_size: usize,
    workers: usize,
) -> Result<Vec<usize>> {
    let h = model.config().h;
    parallel_batches(data, batch_size, workers, |chunk| {
        let rows: Vec<&[usize]> = chunk.iter().map(|s| s.ids.as_slice()).collect();
        model.predict(&SentenceBatch::from_rows(&rows, h))
    })
}

pub fn classification_accuracy(
    model: &Classifier,
    data: &[LabeledSentence],
    batch_size: usize,
    workers: usize,
) -> Result<f64> {
    let predictions = predict_all(model, data, batch_size, workers)?;
    let labels: Vec<usize> = data.iter().map(|s| s.label).collect();
    accuracy(&predictions, &labels)
}

/// Eval-mode relevance scores for every pair.
pub fn score_pairs(
    model: &Matcher,
    pairs: &[PairRef<'_>],
    batch_size: usize,
    workers: usize,
) -> Result<Vec<f64>> {
    let h = model.config().h;
    parallel_batches(pairs, batch_size, workers, |chunk| {
        let (q, a) = pair_batches(chunk.iter(), h);
        model.score(&q, &a)
    })
}

pub fn ranking_metrics(
    model: &Matcher,
    groups: &[EncodedGroup],
    batch_size: usize,
    workers: usize,
) -> Result<RankingMetrics> {
    let pairs = flatten_pairs(groups);
    let scores = score_pairs(model, &pairs, batch_size, workers)?;
    mean_metrics(&regroup(groups, &scores)?)
}

fn pair_batches<'a, 'b: 'a>(
    pairs: impl Iterator<Item = &'a PairRef<'b>> + Clone,
    window: usize,
) -> (SentenceBatch, SentenceBatch) {
    let q: Vec<&[usize]> = pairs.clone().map(|p| p.question).collect();
    let a: Vec<&[usize]> = pairs.map(|p| p.answer).collect();
    (SentenceBatch::from_rows(&q, window), SentenceBatch::from_rows(&a, window))
}

impl Objective<LabeledSentence> for Classifier {
    type Validation = [LabeledSentence];

    fn store(&self) -> &ParamStore {
        self.params()
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        self.params_mut()
    }

    fn batch_loss(&self, g: &mut Graph, samples: &[&LabeledSentence], rng: &mut ChaCha8Rng) -> Result<Var> {
        let rows: Vec<&[usize]> = samples.iter().map(|s| s.ids.as_slice()).collect();
        let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
        let batch = SentenceBatch::from_rows(&rows, self.config().h);
        self.loss(g, &batch, &labels, Mode::Train, rng)
    }

    fn validate(&self, data: &[LabeledSentence], batch_size: usize, workers: usize) -> Result<f64> {
        classification_accuracy(self, data, batch_size, workers)
    }
}

impl<'s> Objective<PairRef<'s>> for Matcher {
    type Validation = [EncodedGroup];

    fn store(&self) -> &ParamStore {
        self.params()
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        self.params_mut()
    }

    fn batch_loss(&self, g: &mut Graph, samples: &[&PairRef<'s>], rng: &mut ChaCha8Rng) -> Result<Var> {
        let (q, a) = pair_batches(samples.iter().copied(), self.config().h);
        let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
        self.loss(g, &q, &a, &labels, Mode::Train, rng)
    }

    fn validate(&self, data: &[EncodedGroup], batch_size: usize, workers: usize) -> Result<f64> {
        Ok(ranking_metrics(self, data, batch_size, workers)?.map)
    }
}

fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Trains with Adam and early stopping, leaving the best-validation
/// parameters in `model`. `on_epoch` sees each log record as it is produced.
pub fn train<S, M>(
    model: &mut M,
    samples: &[S],
    validation: &M::Validation,
    plan: &TrainPlan,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainReport>
where
    S: Sync,
    M: Objective<S>,
{
    plan.validate()?;
    if samples.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let mut adam = Adam::new(AdamConfig { lr: plan.lr, ..AdamConfig::default() });
    let mut stopper = EarlyStopper::new(plan.patience);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(mix(plan.seed, 1));
    let mut best = model.store().snapshot();
    let mut log = Vec::new();

    for epoch in 1..=plan.epochs {
        let batches = make_batches(samples.len(), plan.batch_size, mix(plan.seed, 2 + epoch as u64));
        let mut total = 0.0;
        for (b, idx) in batches.iter().enumerate() {
            let refs: Vec<&S> = idx.iter().map(|&i| &samples[i]).collect();
            let mut g = Graph::new();
            let loss = model.batch_loss(&mut g, &refs, &mut dropout_rng)?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Divergence { epoch, batch: b });
            }
            total += value * refs.len() as f64;
            g.backward(loss)?;
            let store = model.store_mut();
            store.zero_grads();
            g.store_grads(store);
            if let Some(c) = plan.clip_norm {
                clip_grad_norm(store, c);
            }
            adam.step(store)?;
        }
        let record = EpochRecord {
            epoch,
            train_loss: total / samples.len() as f64,
            val_metric: model.validate(validation, plan.batch_size, plan.workers)?,
        };
        on_epoch(&record);
        log.push(record);
        if stopper.observe(epoch, record.val_metric) {
            best = model.store().snapshot();
        }
        if stopper.should_stop() {
            break;
        }
    }
    model.store_mut().restore(&best);
    let (best_epoch, best_metric) = stopper.best().expect("at least one epoch ran");
    Ok(TrainReport { log, best_epoch, best_metric })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, Task, Variant};

    fn toy_sentences(n: usize) -> Vec<LabeledSentence> {
        // label 1 iff token 7 appears
        (0..n)
            .map(|i| {
                let mut ids = vec![2 + (i % 5), 3 + (i % 3), 4, 5 + (i % 4)];
                let label = i % 2;
                if label == 1 {
                    ids[1 + i % 3] = 7;
                }
                LabeledSentence { ids, label }
            })
            .collect()
    }

    fn plan() -> TrainPlan {
        TrainPlan { epochs: 4, batch_size: 16, lr: 1e-2, seed: 9, ..TrainPlan::default() }
    }

    #[test]
    fn patience_two_stops_at_epoch_three() {
        let mut s = EarlyStopper::new(2);
        let metrics = [0.5, 0.4, 0.5, 0.9];
        let mut stopped = None;
        for (i, &m) in metrics.iter().enumerate() {
            s.observe(i + 1, m);
            if s.should_stop() {
                stopped = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped, Some(3));
        assert_eq!(s.best(), Some((1, 0.5)));
    }

    #[test]
    fn identical_seeds_give_identical_logs() {
        let data = toy_sentences(64);
        let run = || {
            let mut m = Classifier::new(ModelConfig::tiny(Task::Classify), Variant::Acnn, 3).unwrap();
            train(&mut m, &data[..48], &data[48..], &plan(), |_| {}).unwrap().log_text()
        };
        let a = run();
        assert_eq!(a, run());
        assert_eq!(a.lines().count(), 4);
        assert_eq!(a.lines().next().unwrap().split('\t').count(), 3);
    }

    #[test]
    fn best_parameters_are_restored() {
        let data = toy_sentences(64);
        let mut m = Classifier::new(ModelConfig::tiny(Task::Classify), Variant::Cnn, 3).unwrap();
        let report = train(&mut m, &data[..48], &data[48..], &plan(), |_| {}).unwrap();
        let best_seen = report.log.iter().map(|r| r.val_metric).fold(f64::MIN, f64::max);
        assert_eq!(report.best_metric, best_seen);
        let now = classification_accuracy(&m, &data[48..], 16, 1).unwrap();
        assert_eq!(now, best_seen);
    }

    #[test]
    fn matcher_trains_and_validates() {
        let groups: Vec<EncodedGroup> = (0..12)
            .map(|i| EncodedGroup {
                question: vec![2 + i % 4, 9, 10],
                candidates: (0..3).map(|j| vec![11 + j, 2 + i % 4, 12]).collect(),
                labels: (0..3).map(|j| u8::from(j == i % 3)).collect(),
            })
            .collect();
        let pairs = flatten_pairs(&groups[..8]);
        let mut m = Matcher::new(ModelConfig::tiny(Task::Match), Variant::TwoWay, 1).unwrap();
        let report = train(&mut m, &pairs, &groups[8..], &plan(), |_| {}).unwrap();
        assert!(report.log.iter().all(|r| r.val_metric > 0.0 && r.val_metric <= 1.0));
    }

    #[test]
    fn parallel_evaluation_matches_serial() {
        let data = toy_sentences(50);
        let m = Classifier::new(ModelConfig::tiny(Task::Classify), Variant::Acnn, 5).unwrap();
        let serial = predict_all(&m, &data, 7, 1).unwrap();
        assert_eq!(serial, predict_all(&m, &data, 7, 3).unwrap());
        assert_eq!(serial.len(), 50);
    }

    #[test]
    fn divergence_reports_position() {
        let data = toy_sentences(8);
        let mut m = Classifier::new(ModelConfig::tiny(Task::Classify), Variant::Cnn, 3).unwrap();
        let head = m.params().find("head.bias").unwrap();
        m.params_mut().value_mut(head).data_mut()[0] = f64::NAN;
        match train(&mut m, &data, &data, &plan(), |_| {}) {
            Err(Error::Divergence { epoch: 1, batch: 0 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn plan_invariants() {
        assert!(TrainPlan { val_fraction: 1.0, ..TrainPlan::default() }.validate().is_err());
        assert!(TrainPlan { patience: 0, ..TrainPlan::default() }.validate().is_err());
        assert!(TrainPlan::default().validate().is_ok());
    }
}
