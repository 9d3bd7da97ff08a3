//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// `out[b][k][t] = bias[k] + sum_{i,j} w(b)[k][i][j] * x[b][t+i][j]`, with
/// `w(b)` either the shared `[K,h,d]` kernel or sample `b`'s own slice.
pub fn naive_conv(
    x: &[f64],
    (batch, t_len, d): (usize, usize, usize),
    w: &[f64],
    (k, h): (usize, usize),
    per_sample: bool,
    bias: Option<&[f64]>,
) -> Vec<f64> {
    let width = t_len - h + 1;
    let mut out = vec![0.0; batch * k * width];
    for b in 0..batch {
        let w_off = if per_sample { b * k * h * d } else { 0 };
        for f in 0..k {
            for t in 0..width {
                let mut acc = bias.map_or(0.0, |bias| bias[f]);
                for i in 0..h {
                    for j in 0..d {
                        acc += w[w_off + (f * h + i) * d + j] * x[(b * t_len + t + i) * d + j];
                    }
                }
                out[(b * k + f) * width + t] = acc;
            }
        }
    }
    out
}

/// 1-based rank of candidate `i`: one plus the number of candidates that
/// precede it (higher score, or equal score at a lower index).
pub fn rank_of(scores: &[f64], i: usize) -> usize {
    1 + (0..scores.len())
        .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
        .count()
}

/// Average precision from positive ranks; `None` without positives.
pub fn brute_ap(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let mut ranks: Vec<usize> = (0..scores.len()).filter(|&i| labels[i]).map(|i| rank_of(scores, i)).collect();
    if ranks.is_empty() {
        return None;
    }
    ranks.sort_unstable();
    let sum: f64 = ranks.iter().enumerate().map(|(n, &r)| (n + 1) as f64 / r as f64).sum();
    Some(sum / ranks.len() as f64)
}

pub fn brute_rr(scores: &[f64], labels: &[bool]) -> Option<f64> {
    (0..scores.len())
        .filter(|&i| labels[i])
        .map(|i| rank_of(scores, i))
        .min()
        .map(|r| 1.0 / r as f64)
}
