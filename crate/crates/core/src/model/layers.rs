//! Building blocks shared by the classifier and the matcher.

use rand::Rng;

use crate::data::SentenceBatch;
use crate::error::TensorError;
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};

/// Uniform init in `[-s, s]`, `s = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let scale = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::uniform(shape, scale, rng)
}

/// Looks up the rows of a batch in an embedding table: `[B, T, d]`.
pub fn embed(g: &mut Graph, table: Var, batch: &SentenceBatch) -> Result<Var, TensorError> {
    let d = g.shape(table)[1];
    let rows = g.gather_rows(table, &batch.ids)?;
    g.reshape(rows, &[batch.batch_size(), batch.padded_len, d])
}

/// `relu(conv1d(x, w, b))` followed by masked max-over-time: `[B, K]`.
pub fn encode_basic(
    g: &mut Graph,
    x: Var,
    weight: Var,
    bias: Var,
    mask: &[bool],
) -> Result<Var, TensorError> {
    let p = g.conv1d(x, weight, Some(bias))?;
    let p = g.relu(p);
    g.max_over_time(p, mask)
}

/// Convolves each sample with its own bank, then relu and masked pooling.
pub fn adaptive_encode(
    g: &mut Graph,
    x: Var,
    bank: Var,
    bias: Option<Var>,
    mask: &[bool],
) -> Result<Var, TensorError> {
    let p = g.conv1d_per_sample(x, bank, bias)?;
    let p = g.relu(p);
    g.max_over_time(p, mask)
}

/// `[h_q; h_a; h_q - h_a; h_q * h_a]` along the feature axis.
pub fn match_features(g: &mut Graph, h_q: Var, h_a: Var) -> Result<Var, TensorError> {
    let diff = g.sub(h_q, h_a)?;
    let prod = g.mul(h_q, h_a)?;
    let axis = g.shape(h_q).len() - 1;
    g.concat(&[h_q, h_a, diff, prod], axis)
}

/// Static convolution encoder: `W: [K, h, d]`, `b: [K]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StaticConvEncoder {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl StaticConvEncoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        k: usize,
        h: usize,
        d: usize,
        rng: &mut R,
    ) -> Self {
        let weight = store.add(format!("{prefix}.weight"), glorot(&[k, h, d], h * d, k * h, rng));
        let bias = store.add(format!("{prefix}.bias"), Tensor::zeros(&[k]));
        StaticConvEncoder { weight, bias }
    }

    pub fn encode(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        mask: &[bool],
    ) -> Result<Var, TensorError> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        encode_basic(g, x, w, b, mask)
    }
}

/// Filter-generation module: a static encoder producing the code `z` (`l`
/// feature maps) and a linear emitter `[l, f_s * k_x * k_y]` with no bias.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FilterGenerator {
    pub encoder: StaticConvEncoder,
    pub emitter: ParamId,
    pub bank: [usize; 3],
}

impl FilterGenerator {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        l: usize,
        h: usize,
        d: usize,
        bank: [usize; 3],
        rng: &mut R,
    ) -> Self {
        let encoder = StaticConvEncoder::new(store, &format!("{prefix}.encoder"), l, h, d, rng);
        let n: usize = bank.iter().product();
        let emitter = store.add(format!("{prefix}.emitter"), glorot(&[l, n], l, n, rng));
        FilterGenerator {
            encoder,
            emitter,
            bank,
        }
    }

    /// Code vectors `[B, l]`.
    pub fn code(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        mask: &[bool],
    ) -> Result<Var, TensorError> {
        self.encoder.encode(g, store, x, mask)
    }

    /// Per-sample filter banks `[B, f_s, k_x, k_y]`.
    pub fn generate(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        mask: &[bool],
    ) -> Result<Var, TensorError> {
        let z = self.code(g, store, x, mask)?;
        let emitter = g.param(store, self.emitter);
        g.transposed_conv_generate(z, emitter, self.bank)
    }

    pub fn numel(&self, store: &ParamStore) -> usize {
        [self.encoder.weight, self.encoder.bias, self.emitter]
            .iter()
            .map(|&id| store.value(id).numel())
            .sum()
    }
}

/// Replaces a generated bank by the constant `bank` (`[K, h, d]`) repeated
/// over the batch.
pub fn pinned_bank(g: &mut Graph, bank: &Tensor, batch: usize) -> Var {
    g.constant(bank.repeat_leading(batch))
}
