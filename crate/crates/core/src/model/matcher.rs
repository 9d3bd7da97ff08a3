use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, Variant};
use super::layers::{
    adaptive_encode, embed, glorot, match_features, pinned_bank, FilterGenerator, StaticConvEncoder,
};
use crate::data::SentenceBatch;
use crate::error::{Error, Result};
use crate::tensor::{Graph, LossKind, Mode, ParamId, ParamStore, Tensor, Var};

/// Constant banks replacing the filters applied to one side of the pair.
#[derive(Clone, Debug, Default)]
pub struct BankPins {
    /// Bank convolved with the question, `[K, h, d]`.
    pub question: Option<Tensor>,
    /// Bank convolved with the answer, `[K, h, d]`.
    pub answer: Option<Tensor>,
}

#[derive(Clone, Copy, Debug)]
struct Mlp {
    hidden_weight: ParamId,
    hidden_bias: ParamId,
    out_weight: ParamId,
    out_bias: ParamId,
}

/// Sentence-pair scorer. Depending on the variant, each side is encoded with
/// a static filter bank, with its own generated bank, or with the bank
/// generated from the other side; the matching vector then goes through a
/// one-hidden-layer MLP and a sigmoid.
#[derive(Clone, Debug)]
pub struct Matcher {
    config: ModelConfig,
    variant: Variant,
    params: ParamStore,
    embedding: ParamId,
    static_encoder: Option<StaticConvEncoder>,
    gen_q: Option<FilterGenerator>,
    gen_a: Option<FilterGenerator>,
    psi_q: Option<ParamId>,
    psi_a: Option<ParamId>,
    mlp: Mlp,
}

impl Matcher {
    pub fn new(config: ModelConfig, variant: Variant, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ModelConfig { vocab_size, d, h, k, l, .. } = config;
        let bank = config.bank_shape();
        let mut params = ParamStore::new();
        let embedding = params.add(
            "embedding",
            Tensor::uniform(&[vocab_size, d], config.emb_init, &mut rng),
        );
        let (uses_static, uses_q, uses_a, uses_psi_q) = match variant {
            Variant::Vanilla => (true, false, false, false),
            Variant::SelfAdaptive | Variant::TwoWay => (false, true, true, true),
            Variant::OneWay => (true, true, false, false),
            other => {
                return Err(Error::Config(format!(
                    "variant `{other}` is not a matching model"
                )))
            }
        };
        let static_encoder =
            uses_static.then(|| StaticConvEncoder::new(&mut params, "encoder", k, h, d, &mut rng));
        let (gen_q, gen_a) = if config.share_generators {
            let shared = (uses_q || uses_a)
                .then(|| FilterGenerator::new(&mut params, "gen", l, h, d, bank, &mut rng));
            (shared.filter(|_| uses_q), shared.filter(|_| uses_a))
        } else {
            let q = uses_q.then(|| FilterGenerator::new(&mut params, "gen_q", l, h, d, bank, &mut rng));
            let a = uses_a.then(|| FilterGenerator::new(&mut params, "gen_a", l, h, d, bank, &mut rng));
            (q, a)
        };
        let adaptive = variant.is_adaptive() && config.adaptive_bias;
        let psi_q = (adaptive && uses_psi_q).then(|| params.add("psi_q", Tensor::zeros(&[k])));
        let psi_a = adaptive.then(|| params.add("psi_a", Tensor::zeros(&[k])));
        let wide = 4 * config.n_h;
        let hidden = config.mlp_hidden;
        let mlp = Mlp {
            hidden_weight: params.add("mlp.hidden.weight", glorot(&[hidden, wide], wide, hidden, &mut rng)),
            hidden_bias: params.add("mlp.hidden.bias", Tensor::zeros(&[hidden])),
            out_weight: params.add("mlp.out.weight", glorot(&[1, hidden], hidden, 1, &mut rng)),
            out_bias: params.add("mlp.out.bias", Tensor::zeros(&[1])),
        };
        Ok(Matcher {
            config,
            variant,
            params,
            embedding,
            static_encoder,
            gen_q,
            gen_a,
            psi_q,
            psi_a,
            mlp,
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

    pub fn question_generator(&self) -> Option<&FilterGenerator> {
        self.gen_q.as_ref()
    }

    pub fn answer_generator(&self) -> Option<&FilterGenerator> {
        self.gen_a.as_ref()
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

    fn bank(
        &self,
        g: &mut Graph,
        gen: Option<&FilterGenerator>,
        x: Var,
        batch: &SentenceBatch,
    ) -> Result<Var> {
        let gen = gen.expect("variant owns this generator");
        Ok(gen.generate(g, &self.params, x, &batch.conv_mask)?)
    }

    /// Sentence representations `(h_q, h_a)`, each `[B, n_h]`.
    pub fn encode_pair<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        question: &SentenceBatch,
        answer: &SentenceBatch,
        mode: Mode,
        rng: &mut R,
        pins: &BankPins,
    ) -> Result<(Var, Var)> {
        if question.batch_size() != answer.batch_size() {
            return Err(Error::Config(format!(
                "{} questions paired with {} answers",
                question.batch_size(),
                answer.batch_size()
            )));
        }
        let q = self.embedded(g, question, mode, rng)?;
        let a = self.embedded(g, answer, mode, rng)?;
        let batch = question.batch_size();
        let psi_q = self.psi_q.map(|p| g.param(&self.params, p));
        let psi_a = self.psi_a.map(|p| g.param(&self.params, p));

        // Banks applied to each side, in variant order.
        let (q_bank, a_bank) = match self.variant {
            Variant::Vanilla => (None, None),
            Variant::SelfAdaptive => (
                Some((self.gen_q.as_ref(), q, question)),
                Some((self.gen_a.as_ref(), a, answer)),
            ),
            Variant::OneWay => (None, Some((self.gen_q.as_ref(), q, question))),
            Variant::TwoWay => (
                Some((self.gen_a.as_ref(), a, answer)),
                Some((self.gen_q.as_ref(), q, question)),
            ),
            _ => unreachable!("validated in constructor"),
        };
        let side = |g: &mut Graph,
                        x: Var,
                        sentences: &SentenceBatch,
                        source: Option<(Option<&FilterGenerator>, Var, &SentenceBatch)>,
                        pin: Option<&Tensor>,
                        psi: Option<Var>|
         -> Result<Var> {
            match source {
                None => {
                    let enc = self.static_encoder.expect("variant owns a static encoder");
                    Ok(enc.encode(g, &self.params, x, &sentences.conv_mask)?)
                }
                Some((gen, src_x, src)) => {
                    let bank = match pin {
                        Some(bank) => pinned_bank(g, bank, batch),
                        None => self.bank(g, gen, src_x, src)?,
                    };
                    Ok(adaptive_encode(g, x, bank, psi, &sentences.conv_mask)?)
                }
            }
        };
        let h_q = side(g, q, question, q_bank, pins.question.as_ref(), psi_q)?;
        let h_a = side(g, a, answer, a_bank, pins.answer.as_ref(), psi_a)?;
        Ok((h_q, h_a))
    }

    /// Relevance probabilities `[B]`.
    pub fn probabilities_with<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        question: &SentenceBatch,
        answer: &SentenceBatch,
        mode: Mode,
        rng: &mut R,
        pins: &BankPins,
    ) -> Result<Var> {
        let (h_q, h_a) = self.encode_pair(g, question, answer, mode, rng, pins)?;
        let t = match_features(g, h_q, h_a)?;
        let p = |g: &mut Graph, id| g.param(&self.params, id);
        let (w1, b1) = (p(g, self.mlp.hidden_weight), p(g, self.mlp.hidden_bias));
        let (w2, b2) = (p(g, self.mlp.out_weight), p(g, self.mlp.out_bias));
        let hidden = g.affine(t, w1, b1)?;
        let hidden = g.relu(hidden);
        let score = g.affine(hidden, w2, b2)?;
        let prob = g.sigmoid(score);
        Ok(g.reshape(prob, &[question.batch_size()])?)
    }

    pub fn probabilities<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        question: &SentenceBatch,
        answer: &SentenceBatch,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        self.probabilities_with(g, question, answer, mode, rng, &BankPins::default())
    }

    pub fn loss<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        question: &SentenceBatch,
        answer: &SentenceBatch,
        labels: &[usize],
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        let p = self.probabilities(g, question, answer, mode, rng)?;
        Ok(g.loss(LossKind::BinaryCrossEntropy, p, labels)?)
    }

    /// Eval-mode relevance scores.
    pub fn score(&self, question: &SentenceBatch, answer: &SentenceBatch) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = self.probabilities(&mut g, question, answer, Mode::Eval, &mut rng)?;
        Ok(g.value(p).data().to_vec())
    }

    /// Eval-mode banks generated from `sentences` by the question-side
    /// generator, `[B, f_s, h, d]`; `None` when the variant has no generator.
    pub fn filter_banks(&self, sentences: &SentenceBatch) -> Result<Option<Tensor>> {
        let Some(gen) = self.gen_q.as_ref().or(self.gen_a.as_ref()) else {
            return Ok(None);
        };
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = self.embedded(&mut g, sentences, Mode::Eval, &mut rng)?;
        let bank = gen.generate(&mut g, &self.params, x, &sentences.conv_mask)?;
        Ok(Some(g.value(bank).clone()))
    }
}
