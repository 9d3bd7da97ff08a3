//! Finite-difference gradient checks over whole models on tiny random inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::SentenceBatch;
use crate::error::Result;
use crate::model::{ModelConfig, Network, Variant};
use crate::tensor::{finite_diff_check, GradCheckReport, Mode};

/// Longest sentence drawn for a check.
pub const MAX_CHECK_LEN: usize = 12;
const CHECK_BATCH: usize = 3;

fn random_rows(rng: &mut ChaCha8Rng, vocab: usize, count: usize) -> Vec<Vec<usize>> {
    (0..count)
        .map(|_| {
            let len = rng.random_range(2..=MAX_CHECK_LEN);
            (0..len).map(|_| rng.random_range(2..vocab)).collect()
        })
        .collect()
}

/// Builds the tiny model of `variant` from `seed`, draws a random batch and
/// compares the analytic gradient of its full training loss (dropout
/// included, with a fixed mask) against central differences.
pub fn check_variant(variant: Variant, seed: u64, eps: f64, tol: f64) -> Result<GradCheckReport> {
    let config = ModelConfig::tiny(variant.task());
    let mut network = Network::new(config.clone(), variant, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    let h = config.h;
    let dropout_seed: u64 = rng.random();
    let batch = SentenceBatch::from_rows(&random_rows(&mut rng, config.vocab_size, CHECK_BATCH), h);
    let answers = SentenceBatch::from_rows(&random_rows(&mut rng, config.vocab_size, CHECK_BATCH), h);
    let labels: Vec<usize> = (0..CHECK_BATCH).map(|_| rng.random_range(0..2)).collect();

    match &mut network {
        Network::Classifier(m) => {
            let model = m.clone();
            finite_diff_check(
                m.params_mut(),
                |store, g| {
                    let mut probe = model.clone();
                    *probe.params_mut() = store.clone();
                    let mut drop = ChaCha8Rng::seed_from_u64(dropout_seed);
                    probe.loss(g, &batch, &labels, Mode::Train, &mut drop)
                },
                eps,
                tol,
            )
        }
        Network::Matcher(m) => {
            let model = m.clone();
            finite_diff_check(
                m.params_mut(),
                |store, g| {
                    let mut probe = model.clone();
                    *probe.params_mut() = store.clone();
                    let mut drop = ChaCha8Rng::seed_from_u64(dropout_seed);
                    probe.loss(g, &batch, &answers, &labels, Mode::Train, &mut drop)
                },
                eps,
                tol,
            )
        }
    }
}

/// `name<TAB>max_rel_error<TAB>checked<TAB>exempted` per parameter group.
pub fn format_check_report(report: &GradCheckReport) -> String {
    report
        .groups
        .iter()
        .map(|g| format!("{}\t{:.3e}\t{}\t{}\n", g.name, g.max_rel_error, g.checked, g.exempted))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_variant_passes_on_one_seed() {
        for v in Variant::ALL {
            let report = check_variant(v, 0, 1e-3, 1e-3).unwrap();
            assert!(report.passed, "{v}: {}", format_check_report(&report));
            assert!(report.exempted_fraction() < 0.1, "{v}");
        }
    }

    #[test]
    fn zero_tolerance_fails() {
        assert!(!check_variant(Variant::TwoWay, 1, 1e-3, 0.0).unwrap().passed);
    }
}
