//! Binary checkpoint format, all integers little-endian:
//!
//! ```text
//! "ACNN" | version: u32 | body | crc32(body): u32
//! body = header_len: u32 | header (UTF-8 key=value lines)
//!        | n_tensors: u32 | tensor*
//! tensor = name_len: u32 | name | rank: u32 | extents: u64*rank | values: f32*numel
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Network, Variant};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"ACNN";
pub const VERSION: u32 = 1;

/// A trained network together with what is needed to feed it text.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub network: Network,
    pub vocab: Vocabulary,
    /// Truncation length applied to every sentence.
    pub max_len: usize,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    fn header(&self) -> String {
        let mut lines = vec![
            ("task".to_string(), self.network.task().to_string()),
            ("variant".to_string(), self.network.variant().to_string()),
            ("max_len".to_string(), self.max_len.to_string()),
        ];
        lines.extend(self.network.config().to_pairs().into_iter().map(|(k, v)| (k.to_string(), v)));
        lines.push(("vocab".to_string(), self.vocab.entries().join(" ")));
        lines.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut body = Vec::new();
        let header = self.header();
        body.extend((header.len() as u32).to_le_bytes());
        body.extend(header.as_bytes());
        let params = self.network.params();
        body.extend((params.len() as u32).to_le_bytes());
        for (_, name, value) in params.iter() {
            body.extend((name.len() as u32).to_le_bytes());
            body.extend(name.as_bytes());
            body.extend((value.rank() as u32).to_le_bytes());
            for &e in value.shape() {
                body.extend((e as u64).to_le_bytes());
            }
            for &v in value.data() {
                body.extend((v as f32).to_le_bytes());
            }
        }
        let mut out = Vec::with_capacity(body.len() + 12);
        out.extend(MAGIC);
        out.extend(VERSION.to_le_bytes());
        out.extend(&body);
        out.extend(crc32fast::hash(&body).to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(bad("file truncated"));
        }
        if &bytes[..4] != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let (body, crc) = bytes[8..].split_at(bytes.len() - 12);
        if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().expect("4 bytes")) {
            return Err(bad("checksum mismatch (truncated or corrupted file)"));
        }

        let mut r = Reader { buf: body, pos: 0 };
        let header_len = r.u32()? as usize;
        let header = std::str::from_utf8(r.take(header_len)?).map_err(|_| bad("header is not UTF-8"))?;
        let mut fields = BTreeMap::new();
        for line in header.lines() {
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("bad header line `{line}`")))?;
            fields.insert(k, v);
        }
        let field = |k: &str| fields.get(k).copied().ok_or_else(|| bad(format!("header lacks `{k}`")));
        let variant: Variant = field("variant")?.parse()?;
        if field("task")? != variant.task().to_string() {
            return Err(bad("task and variant disagree"));
        }
        let max_len = field("max_len")?.parse().map_err(|_| bad("bad max_len"))?;
        let config = ModelConfig::from_pairs(|k| fields.get(k).copied())?;
        let entries = field("vocab")?;
        let vocab = Vocabulary::from_tokens(entries.split(' ').filter(|t| !t.is_empty()));
        if vocab.len() != config.vocab_size {
            return Err(bad(format!(
                "vocabulary has {} entries, config says {}",
                vocab.len(),
                config.vocab_size
            )));
        }

        let mut network = Network::new(config, variant, 0)?;
        let count = r.u32()? as usize;
        if count != network.params().len() {
            return Err(bad(format!("{count} tensors stored, model has {}", network.params().len())));
        }
        let mut seen = std::collections::HashSet::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| bad("tensor name is not UTF-8"))?
                .to_string();
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(usize::try_from(r.u64()?).map_err(|_| bad("extent overflow"))?);
            }
            let numel = shape.iter().try_fold(1usize, |a, &e| a.checked_mul(e));
            let numel = numel.ok_or_else(|| bad("extent overflow"))?;
            let raw = r.take(numel.checked_mul(4).ok_or_else(|| bad("extent overflow"))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect();
            let tensor = Tensor::new(shape, data)?;
            if !seen.insert(name.clone()) {
                return Err(bad(format!("tensor `{name}` stored twice")));
            }
            network
                .params_mut()
                .set(&name, tensor)
                .map_err(|e| bad(format!("tensor `{name}`: {e}")))?;
        }
        if r.pos != body.len() {
            return Err(bad("trailing bytes after tensors"));
        }
        Ok(Checkpoint { network, vocab, max_len })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| bad("body truncated"))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SentenceBatch;

    fn checkpoint(variant: Variant) -> Checkpoint {
        let config = ModelConfig::tiny(variant.task());
        let tokens: Vec<String> = (0..config.vocab_size - 2).map(|i| format!("w{i}")).collect();
        Checkpoint {
            network: Network::new(config, variant, 11).unwrap(),
            vocab: Vocabulary::from_tokens(tokens),
            max_len: 40,
        }
    }

    #[test]
    fn double_save_is_byte_identical() {
        for v in Variant::ALL {
            let bytes = checkpoint(v).to_bytes();
            let again = Checkpoint::from_bytes(&bytes).unwrap().to_bytes();
            assert_eq!(bytes, again, "{v}");
        }
    }

    #[test]
    fn round_trip_keeps_config_and_predictions() {
        let ck = checkpoint(Variant::Acnn);
        let loaded = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(loaded.network.config(), ck.network.config());
        assert_eq!(loaded.max_len, 40);
        assert_eq!(loaded.vocab.entries(), ck.vocab.entries());
        let batch = SentenceBatch::from_rows(&[vec![2, 3, 4, 5, 6], vec![7, 8]], 3);
        let (Network::Classifier(a), Network::Classifier(b)) = (&ck.network, &loaded.network) else {
            panic!("classifier expected");
        };
        let mut g1 = crate::tensor::Graph::new();
        let mut g2 = crate::tensor::Graph::new();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let l1 = a.logits(&mut g1, &batch, crate::tensor::Mode::Eval, &mut rng).unwrap();
        let l2 = b.logits(&mut g2, &batch, crate::tensor::Mode::Eval, &mut rng).unwrap();
        assert!(g1.value(l1).max_abs_diff(g2.value(l2)) < 1e-6);
    }

    #[test]
    fn every_corrupted_byte_is_rejected() {
        let bytes = checkpoint(Variant::OneWay).to_bytes();
        for i in (0..bytes.len()).step_by(97).chain([0, 5, bytes.len() - 1]) {
            let mut b = bytes.clone();
            b[i] ^= 0x40;
            assert!(Checkpoint::from_bytes(&b).is_err(), "byte {i}");
        }
    }

    #[test]
    fn truncation_and_header_errors() {
        let bytes = checkpoint(Variant::Cnn).to_bytes();
        for len in [0, 3, 11, bytes.len() / 2, bytes.len() - 1] {
            assert!(Checkpoint::from_bytes(&bytes[..len]).is_err());
        }
        let mut b = bytes.clone();
        b[4] = 2;
        let err = Checkpoint::from_bytes(&b).unwrap_err().to_string();
        assert!(err.contains("version"), "{err}");
    }

    #[test]
    fn shape_disagreement_is_rejected() {
        // Same tensors, header claiming a different embedding dimension.
        let ck = checkpoint(Variant::Cnn);
        let bytes = ck.to_bytes();
        let body = &bytes[8..bytes.len() - 4];
        let header_len = u32::from_le_bytes(body[..4].try_into().unwrap()) as usize;
        let header = std::str::from_utf8(&body[4..4 + header_len]).unwrap();
        let forged = header.replace("\nk=4\n", "\nk=5\n").replace("f_s=4", "f_s=5").replace("n_h=4", "n_h=5");
        assert_ne!(forged, header);
        let mut new_body = (forged.len() as u32).to_le_bytes().to_vec();
        new_body.extend(forged.as_bytes());
        new_body.extend(&body[4 + header_len..]);
        let mut out = bytes[..8].to_vec();
        out.extend(&new_body);
        out.extend(crc32fast::hash(&new_body).to_le_bytes());
        let err = Checkpoint::from_bytes(&out).unwrap_err().to_string();
        assert!(err.contains("shape") || err.contains("tensor"), "{err}");
    }
}
