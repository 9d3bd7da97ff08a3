//! Convolutional sentence encoders with input-conditioned filters.

mod classifier;
mod config;
pub mod layers;
mod matcher;

pub use classifier::Classifier;
pub use config::{ModelConfig, Task, Variant};
pub use matcher::{BankPins, Matcher};

use crate::data::SentenceBatch;
use crate::error::Result;
use crate::tensor::{ParamStore, Tensor};

/// Any trained model, as stored in a checkpoint.
#[derive(Clone, Debug)]
pub enum Network {
    Classifier(Classifier),
    Matcher(Matcher),
}

impl Network {
    pub fn new(config: ModelConfig, variant: Variant, seed: u64) -> Result<Self> {
        Ok(match variant.task() {
            Task::Classify => Network::Classifier(Classifier::new(config, variant, seed)?),
            Task::Match => Network::Matcher(Matcher::new(config, variant, seed)?),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        match self {
            Network::Classifier(m) => m.config(),
            Network::Matcher(m) => m.config(),
        }
    }

    pub fn variant(&self) -> Variant {
        match self {
            Network::Classifier(m) => m.variant(),
            Network::Matcher(m) => m.variant(),
        }
    }

    pub fn task(&self) -> Task {
        self.variant().task()
    }

    pub fn params(&self) -> &ParamStore {
        match self {
            Network::Classifier(m) => m.params(),
            Network::Matcher(m) => m.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        match self {
            Network::Classifier(m) => m.params_mut(),
            Network::Matcher(m) => m.params_mut(),
        }
    }

    /// Eval-mode generated banks for each sentence of `batch`.
    pub fn filter_banks(&self, batch: &SentenceBatch) -> Result<Option<Tensor>> {
        match self {
            Network::Classifier(m) => m.filter_banks(batch),
            Network::Matcher(m) => m.filter_banks(batch),
        }
    }
}

/// Sentence id and its flattened generated bank.
pub type FilterRow = (usize, Vec<f64>);

/// One row per sentence: its id and the flattened generated bank in
/// (filter, row, column) order. `None` for models without a generator.
pub fn export_filters(
    network: &Network,
    sentences: &[Vec<usize>],
    batch_size: usize,
) -> Result<Option<Vec<FilterRow>>> {
    let window = network.config().h;
    let mut rows = Vec::with_capacity(sentences.len());
    for (chunk_idx, chunk) in sentences.chunks(batch_size.max(1)).enumerate() {
        let batch = SentenceBatch::from_rows(chunk, window);
        let Some(banks) = network.filter_banks(&batch)? else {
            return Ok(None);
        };
        let width = banks.numel() / chunk.len();
        for (i, values) in banks.data().chunks(width).enumerate() {
            rows.push((chunk_idx * batch_size.max(1) + i, values.to_vec()));
        }
    }
    Ok(Some(rows))
}

/// Formats `v` with six significant digits, like C's `%g`.
pub fn format_sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let trim = |s: &str| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim(&format!("{v:.decimals$}"))
    }
}

/// `sample_id<TAB>v1<TAB>...` lines.
pub fn format_filter_rows(rows: &[FilterRow]) -> String {
    let mut out = String::new();
    for (id, values) in rows {
        out.push_str(&id.to_string());
        for v in values {
            out.push('\t');
            out.push_str(&format_sig6(*v));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig6_matches_printf_g() {
        assert_eq!(format_sig6(0.0), "0");
        assert_eq!(format_sig6(1.0), "1");
        assert_eq!(format_sig6(0.1234567), "0.123457");
        assert_eq!(format_sig6(-123456.7), "-123457");
        assert_eq!(format_sig6(1234567.0), "1.23457e+06");
        assert_eq!(format_sig6(0.00012345678), "0.000123457");
        assert_eq!(format_sig6(0.000012345678), "1.23457e-05");
        assert_eq!(format_sig6(2.5), "2.5");
        assert_eq!(format_sig6(999999.5), "1e+06");
    }

    #[test]
    fn export_rows_have_bank_width() {
        let cfg = ModelConfig::tiny(Task::Classify);
        let net = Network::new(cfg, Variant::Acnn, 3).unwrap();
        let sentences = vec![vec![2, 3, 4, 5], vec![6, 7], vec![2, 3, 4, 5]];
        let rows = export_filters(&net, &sentences, 2).unwrap().unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|(_, v)| v.len() == 4 * 3 * 8));
        assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(rows[0].1, rows[2].1);

        let mut net = net;
        if let Network::Classifier(m) = &net {
            let id = m.generator().unwrap().emitter;
            let shape = net.params().value(id).shape().to_vec();
            *net.params_mut().value_mut(id) = Tensor::zeros(&shape);
        }
        let rows = export_filters(&net, &sentences, 2).unwrap().unwrap();
        assert!(rows.iter().all(|(_, v)| v.iter().all(|&x| x == 0.0)));
        let text = format_filter_rows(&rows[..1]);
        assert_eq!(text.trim_end().split('\t').count(), 1 + 96);
    }

    #[test]
    fn static_models_export_nothing() {
        let net = Network::new(ModelConfig::tiny(Task::Match), Variant::Vanilla, 3).unwrap();
        assert!(export_filters(&net, &[vec![2, 3, 4]], 4).unwrap().is_none());
    }
}
