use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Task {
    Classify,
    Match,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Classify => "classify",
            Task::Match => "match",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classify" => Ok(Task::Classify),
            "match" => Ok(Task::Match),
            other => Err(Error::Config(format!("unknown task `{other}`"))),
        }
    }
}

/// Model family. `Cnn`/`Acnn` classify single sentences; the other four
/// score question/answer pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Cnn,
    Acnn,
    Vanilla,
    SelfAdaptive,
    OneWay,
    TwoWay,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Cnn,
        Variant::Acnn,
        Variant::Vanilla,
        Variant::SelfAdaptive,
        Variant::OneWay,
        Variant::TwoWay,
    ];

    pub fn task(self) -> Task {
        match self {
            Variant::Cnn | Variant::Acnn => Task::Classify,
            _ => Task::Match,
        }
    }

    /// Whether the variant owns a filter generator.
    pub fn is_adaptive(self) -> bool {
        !matches!(self, Variant::Cnn | Variant::Vanilla)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Cnn => "cnn",
            Variant::Acnn => "acnn",
            Variant::Vanilla => "vanilla",
            Variant::SelfAdaptive => "self_adaptive",
            Variant::OneWay => "one_way",
            Variant::TwoWay => "two_way",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

/// Architecture hyperparameters.
///
/// The generated-filter extents are redundant with the encoder settings
/// (`f_s == k`, `k_x == h`, `k_y == d`, `n_h == k`); they are kept as fields
/// so checkpoints record them, and [`ModelConfig::validate`] enforces them.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    /// Embedding dimension.
    pub d: usize,
    /// Window size in words.
    pub h: usize,
    /// Number of feature maps.
    pub k: usize,
    /// Dimension of the generator code `z`.
    pub l: usize,
    pub f_s: usize,
    pub k_x: usize,
    pub k_y: usize,
    pub n_h: usize,
    pub n_classes: usize,
    pub mlp_hidden: usize,
    pub share_generators: bool,
    pub adaptive_bias: bool,
    /// Embedding rows start uniform in `[-emb_init, emb_init]`.
    pub emb_init: f64,
    /// Dropout rate applied to embedded words in train mode.
    pub dropout: f64,
}

impl ModelConfig {
    /// Defaults for `task` with derived extents filled in.
    pub fn new(task: Task, vocab_size: usize, d: usize, h: usize, k: usize, l: usize) -> Self {
        let (adaptive_bias, emb_init, dropout) = match task {
            Task::Classify => (false, 0.001, 0.2),
            Task::Match => (true, 0.1, 0.5),
        };
        ModelConfig {
            vocab_size,
            d,
            h,
            k,
            l,
            f_s: k,
            k_x: h,
            k_y: d,
            n_h: k,
            n_classes: 2,
            mlp_hidden: k,
            share_generators: true,
            adaptive_bias,
            emb_init,
            dropout,
        }
    }

    /// Tiny configuration used by gradient checks.
    pub fn tiny(task: Task) -> Self {
        let mut c = Self::new(task, 50, 8, 3, 4, 6);
        c.mlp_hidden = 8;
        c.emb_init = 0.5;
        c
    }

    /// Recomputes the derived extents after `d`, `h` or `k` changed.
    pub fn sync_derived(&mut self) {
        self.f_s = self.k;
        self.k_x = self.h;
        self.k_y = self.d;
        self.n_h = self.k;
    }

    pub fn bank_shape(&self) -> [usize; 3] {
        [self.f_s, self.k_x, self.k_y]
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("d", self.d),
            ("h", self.h),
            ("k", self.k),
            ("l", self.l),
            ("n_classes", self.n_classes),
            ("mlp_hidden", self.mlp_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.vocab_size < 2 {
            return Err(Error::Config("vocab_size must hold PAD and UNK".into()));
        }
        if self.k_x != self.h || self.k_y != self.d {
            return Err(Error::Config(format!(
                "generated kernel ({}, {}) must equal (h, d) = ({}, {})",
                self.k_x, self.k_y, self.h, self.d
            )));
        }
        if self.f_s != self.k {
            return Err(Error::Config(format!("f_s = {} must equal k = {}", self.f_s, self.k)));
        }
        if self.n_h != self.k {
            return Err(Error::Config(format!("n_h = {} must equal k = {}", self.n_h, self.k)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.emb_init >= 0.0 && self.emb_init.is_finite()) {
            return Err(Error::Config("emb_init must be a finite non-negative scale".into()));
        }
        Ok(())
    }

    /// `key=value` pairs in a fixed order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("vocab_size", self.vocab_size.to_string()),
            ("d", self.d.to_string()),
            ("h", self.h.to_string()),
            ("k", self.k.to_string()),
            ("l", self.l.to_string()),
            ("f_s", self.f_s.to_string()),
            ("k_x", self.k_x.to_string()),
            ("k_y", self.k_y.to_string()),
            ("n_h", self.n_h.to_string()),
            ("n_classes", self.n_classes.to_string()),
            ("mlp_hidden", self.mlp_hidden.to_string()),
            ("share_generators", self.share_generators.to_string()),
            ("adaptive_bias", self.adaptive_bias.to_string()),
            ("emb_init", self.emb_init.to_string()),
            ("dropout", self.dropout.to_string()),
        ]
    }

    /// Inverse of [`ModelConfig::to_pairs`]; every key is required.
    pub fn from_pairs<'a>(lookup: impl Fn(&str) -> Option<&'a str>) -> Result<Self> {
        fn get<'a, T: FromStr>(lookup: &impl Fn(&str) -> Option<&'a str>, key: &str) -> Result<T> {
            let raw = lookup(key).ok_or_else(|| Error::Config(format!("missing key `{key}`")))?;
            raw.parse()
                .map_err(|_| Error::Config(format!("bad value `{raw}` for `{key}`")))
        }
        let c = ModelConfig {
            vocab_size: get(&lookup, "vocab_size")?,
            d: get(&lookup, "d")?,
            h: get(&lookup, "h")?,
            k: get(&lookup, "k")?,
            l: get(&lookup, "l")?,
            f_s: get(&lookup, "f_s")?,
            k_x: get(&lookup, "k_x")?,
            k_y: get(&lookup, "k_y")?,
            n_h: get(&lookup, "n_h")?,
            n_classes: get(&lookup, "n_classes")?,
            mlp_hidden: get(&lookup, "mlp_hidden")?,
            share_generators: get(&lookup, "share_generators")?,
            adaptive_bias: get(&lookup, "adaptive_bias")?,
            emb_init: get(&lookup, "emb_init")?,
            dropout: get(&lookup, "dropout")?,
        };
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn variants_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert!("three_way".parse::<Variant>().is_err());
        assert_eq!(Variant::Acnn.task(), Task::Classify);
        assert_eq!(Variant::OneWay.task(), Task::Match);
    }

    #[test]
    fn invariants_enforced() {
        let mut c = ModelConfig::new(Task::Classify, 100, 8, 3, 4, 6);
        assert!(c.validate().is_ok());
        c.k_x = 4;
        assert!(c.validate().is_err());
        c.k_x = 3;
        c.n_h = 5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn pairs_round_trip() {
        let c = ModelConfig::tiny(Task::Match);
        let map: HashMap<&str, String> = c.to_pairs().into_iter().collect();
        let back = ModelConfig::from_pairs(|k| map.get(k).map(String::as_str)).unwrap();
        assert_eq!(back, c);
    }
}
