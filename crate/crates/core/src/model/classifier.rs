use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, Variant};
use super::layers::{adaptive_encode, embed, glorot, pinned_bank, FilterGenerator, StaticConvEncoder};
use crate::data::SentenceBatch;
use crate::error::{Error, Result};
use crate::tensor::{Graph, LossKind, Mode, ParamId, ParamStore, Tensor, Var};

#[derive(Clone, Copy, Debug)]
enum Encoder {
    Static(StaticConvEncoder),
    Adaptive(FilterGenerator),
}

/// Single-sentence classifier: embedding, one convolution layer (static or
/// generated from the same sentence), max-over-time pooling, affine head.
#[derive(Clone, Debug)]
pub struct Classifier {
    config: ModelConfig,
    variant: Variant,
    params: ParamStore,
    embedding: ParamId,
    encoder: Encoder,
    adaptive_bias: Option<ParamId>,
    head_weight: ParamId,
    head_bias: ParamId,
}

impl Classifier {
    pub fn new(config: ModelConfig, variant: Variant, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ModelConfig { vocab_size, d, h, k, l, .. } = config;
        let mut params = ParamStore::new();
        let embedding = params.add(
            "embedding",
            Tensor::uniform(&[vocab_size, d], config.emb_init, &mut rng),
        );
        let (encoder, adaptive_bias) = match variant {
            Variant::Cnn => (
                Encoder::Static(StaticConvEncoder::new(&mut params, "encoder", k, h, d, &mut rng)),
                None,
            ),
            Variant::Acnn => {
                let gen =
                    FilterGenerator::new(&mut params, "gen", l, h, d, config.bank_shape(), &mut rng);
                let bias = config
                    .adaptive_bias
                    .then(|| params.add("adaptive_bias", Tensor::zeros(&[k])));
                (Encoder::Adaptive(gen), bias)
            }
            other => {
                return Err(Error::Config(format!(
                    "variant `{other}` is not a classification model"
                )))
            }
        };
        let head_weight = params.add(
            "head.weight",
            glorot(&[config.n_classes, k], k, config.n_classes, &mut rng),
        );
        let head_bias = params.add("head.bias", Tensor::zeros(&[config.n_classes]));
        Ok(Classifier {
            config,
            variant,
            params,
            embedding,
            encoder,
            adaptive_bias,
            head_weight,
            head_bias,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn generator(&self) -> Option<&FilterGenerator> {
        match &self.encoder {
            Encoder::Adaptive(gen) => Some(gen),
            Encoder::Static(_) => None,
        }
    }

    fn embedded<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        batch: &SentenceBatch,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        let table = g.param(&self.params, self.embedding);
        let x = embed(g, table, batch)?;
        Ok(g.dropout(x, self.config.dropout, mode, rng)?)
    }

    /// Pooled sentence features `[B, K]`. For the adaptive model, `pin`
    /// replaces the generated bank with a constant `[K, h, d]` bank.
    pub fn features<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        batch: &SentenceBatch,
        mode: Mode,
        rng: &mut R,
        pin: Option<&Tensor>,
    ) -> Result<Var> {
        let x = self.embedded(g, batch, mode, rng)?;
        let mask = &batch.conv_mask;
        let h = match &self.encoder {
            Encoder::Static(enc) => enc.encode(g, &self.params, x, mask)?,
            Encoder::Adaptive(gen) => {
                let bank = match pin {
                    Some(bank) => pinned_bank(g, bank, batch.batch_size()),
                    None => gen.generate(g, &self.params, x, mask)?,
                };
                let bias = self.adaptive_bias.map(|b| g.param(&self.params, b));
                adaptive_encode(g, x, bank, bias, mask)?
            }
        };
        Ok(h)
    }

    /// Class logits `[B, n_classes]`.
    pub fn logits<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        batch: &SentenceBatch,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        let h = self.features(g, batch, mode, rng, None)?;
        let w = g.param(&self.params, self.head_weight);
        let b = g.param(&self.params, self.head_bias);
        Ok(g.affine(h, w, b)?)
    }

    pub fn loss<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        batch: &SentenceBatch,
        labels: &[usize],
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        let logits = self.logits(g, batch, mode, rng)?;
        Ok(g.loss(LossKind::SoftmaxCrossEntropy, logits, labels)?)
    }

    /// Eval-mode logits `[B, n_classes]`.
    pub fn eval_logits(&self, batch: &SentenceBatch) -> Result<Tensor> {
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let logits = self.logits(&mut g, batch, Mode::Eval, &mut rng)?;
        Ok(g.value(logits).clone())
    }

    /// Eval-mode arg-max classes.
    pub fn predict(&self, batch: &SentenceBatch) -> Result<Vec<usize>> {
        let c = self.config.n_classes;
        Ok(self
            .eval_logits(batch)?
            .data()
            .chunks(c)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                    .0
            })
            .collect())
    }

    /// Eval-mode generated banks `[B, f_s, h, d]`, or `None` for the static model.
    pub fn filter_banks(&self, batch: &SentenceBatch) -> Result<Option<Tensor>> {
        let Encoder::Adaptive(gen) = &self.encoder else {
            return Ok(None);
        };
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = self.embedded(&mut g, batch, Mode::Eval, &mut rng)?;
        let bank = gen.generate(&mut g, &self.params, x, &batch.conv_mask)?;
        Ok(Some(g.value(bank).clone()))
    }
}
