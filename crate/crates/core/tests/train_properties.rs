use std::path::Path;

use proptest::prelude::*;

use acnn::data::{parse_pretrained, Vocabulary};
use acnn::model::{ModelConfig, Network, Variant};
use acnn::train::{Checkpoint, EarlyStopper};

fn vocab(n: usize) -> Vocabulary {
    Vocabulary::from_tokens((0..n).map(|i| format!("w{i}")))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn early_stopper_tracks_the_running_best(metrics in prop::collection::vec(0.0f64..1.0, 1..40), patience in 1usize..6) {
        let mut s = EarlyStopper::new(patience);
        let mut best = f64::NEG_INFINITY;
        let mut stale = 0;
        for (epoch, &m) in metrics.iter().enumerate() {
            let improved = s.observe(epoch + 1, m);
            prop_assert_eq!(improved, m > best);
            if m > best {
                best = m;
                stale = 0;
            } else {
                stale += 1;
            }
            let (_, reported) = s.best().unwrap();
            prop_assert_eq!(reported, best);
            prop_assert!(metrics[..=epoch].iter().all(|&x| x <= reported));
            prop_assert_eq!(s.should_stop(), stale >= patience);
        }
    }

    /// Rows come from the file exactly when the token is in both; coverage
    /// counts those tokens and other rows do not depend on the file.
    #[test]
    fn pretrained_rows_and_coverage(
        n_vocab in 1usize..20,
        file_tokens in prop::collection::vec(0usize..30, 0..25),
        d in 1usize..5,
        seed in any::<u64>(),
    ) {
        let v = vocab(n_vocab);
        let content: String = file_tokens
            .iter()
            .enumerate()
            .map(|(i, t)| format!("w{t} {}\n", vec![format!("{}", i + 1); d].join(" ")))
            .collect();
        let loaded = parse_pretrained(Path::new("e.txt"), &content, &v, d, seed).unwrap();
        let empty = parse_pretrained(Path::new("e.txt"), "", &v, d, seed).unwrap();
        let mut covered = 0;
        for id in 0..v.len() {
            let row = &loaded.table.data()[id * d..(id + 1) * d];
            let first = v.token(id).and_then(|tok| file_tokens.iter().position(|t| format!("w{t}") == tok));
            match first {
                Some(i) => {
                    covered += 1;
                    prop_assert!(row.iter().all(|&x| x == (i + 1) as f64));
                }
                None => prop_assert_eq!(row, &empty.table.data()[id * d..(id + 1) * d]),
            }
        }
        prop_assert_eq!(loaded.coverage, covered);
    }

    #[test]
    fn checkpoints_are_lossless_at_single_precision(seed in any::<u64>(), pick in 0usize..6) {
        let variant = Variant::ALL[pick];
        let cfg = ModelConfig::tiny(variant.task());
        let ck = Checkpoint { network: Network::new(cfg.clone(), variant, seed).unwrap(), vocab: vocab(cfg.vocab_size - 2), max_len: 33 };
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        prop_assert_eq!(back.max_len, 33);
        prop_assert_eq!(back.vocab.entries(), ck.vocab.entries());
        prop_assert_eq!(back.network.variant(), variant);
        for ((_, name, a), (_, other, b)) in ck.network.params().iter().zip(back.network.params().iter()) {
            prop_assert_eq!(name, other);
            prop_assert_eq!(a.shape(), b.shape());
            for (x, y) in a.data().iter().zip(b.data()) {
                prop_assert_eq!(*x as f32, *y as f32);
            }
        }
        prop_assert_eq!(back.to_bytes(), ck.to_bytes());
    }
}
