mod common;

use proptest::prelude::*;

use acnn::metrics::{accuracy, average_precision, mean_metrics, reciprocal_rank, GroupScore, RankedGroup};
use common::{brute_ap, brute_rr};

fn scored(s: GroupScore) -> Option<f64> {
    match s {
        GroupScore::Scored(v) => Some(v),
        GroupScore::Skip => None,
    }
}

/// Scores on a coarse grid so ties are common.
fn group() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (1usize..10).prop_flat_map(|n| {
        (
            prop::collection::vec((0u8..6).prop_map(|s| f64::from(s) / 5.0), n),
            prop::collection::vec(any::<bool>(), n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn per_group_metrics_match_the_oracle((scores, labels) in group()) {
        let g = RankedGroup::new(scores.clone(), labels.clone()).unwrap();
        let ap = scored(average_precision(&g));
        let rr = scored(reciprocal_rank(&g));
        prop_assert_eq!(ap, brute_ap(&scores, &labels));
        prop_assert_eq!(rr, brute_rr(&scores, &labels));
        if let (Some(ap), Some(rr)) = (ap, rr) {
            prop_assert!(ap > 0.0 && ap <= 1.0);
            prop_assert!(rr > 0.0 && rr <= 1.0);
        }
    }

    #[test]
    fn metrics_only_see_the_ordering((scores, labels) in group(), scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
        let a = RankedGroup::new(scores.clone(), labels.clone()).unwrap();
        let moved: Vec<f64> = scores.iter().map(|s| (s * scale + shift).exp()).collect();
        let b = RankedGroup::new(moved, labels).unwrap();
        prop_assert_eq!(average_precision(&a), average_precision(&b));
        prop_assert_eq!(reciprocal_rank(&a), reciprocal_rank(&b));
    }

    #[test]
    fn single_positive_makes_ap_the_reciprocal_rank(scores in prop::collection::vec(0.0f64..1.0, 1..10), pick in any::<prop::sample::Index>()) {
        let positive = pick.index(scores.len());
        let labels: Vec<bool> = (0..scores.len()).map(|i| i == positive).collect();
        let g = RankedGroup::new(scores, labels).unwrap();
        prop_assert_eq!(average_precision(&g), reciprocal_rank(&g));
    }

    #[test]
    fn means_skip_groups_without_positives(groups in prop::collection::vec(group(), 1..20)) {
        let ranked: Vec<RankedGroup> = groups
            .iter()
            .map(|(s, l)| RankedGroup::new(s.clone(), l.clone()).unwrap())
            .collect();
        let kept: Vec<&(Vec<f64>, Vec<bool>)> = groups.iter().filter(|(_, l)| l.iter().any(|&y| y)).collect();
        match mean_metrics(&ranked) {
            Ok(m) => {
                prop_assert_eq!(m.groups, kept.len());
                let map: f64 = kept.iter().map(|(s, l)| brute_ap(s, l).unwrap()).sum::<f64>() / kept.len() as f64;
                let mrr: f64 = kept.iter().map(|(s, l)| brute_rr(s, l).unwrap()).sum::<f64>() / kept.len() as f64;
                prop_assert_eq!(m.map, map);
                prop_assert_eq!(m.mrr, mrr);
            }
            Err(_) => prop_assert!(kept.is_empty()),
        }
    }

    #[test]
    fn accuracy_counts_matches(pairs in prop::collection::vec((0usize..3, 0usize..3), 1..50)) {
        let (p, y): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let hits = pairs.iter().filter(|(a, b)| a == b).count();
        prop_assert_eq!(accuracy(&p, &y).unwrap(), hits as f64 / pairs.len() as f64);
    }
}

#[test]
fn worked_average_precision_examples() {
    let ap = |s: &[f64], l: &[bool]| scored(average_precision(&RankedGroup::new(s.to_vec(), l.to_vec()).unwrap()));
    assert_eq!(ap(&[0.9, 0.2, 0.1], &[true, false, false]), Some(1.0));
    assert_eq!(ap(&[0.9, 0.5], &[false, true]), Some(0.5));
    assert!((ap(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap() - 5.0 / 6.0).abs() < 1e-12);
    assert_eq!(ap(&[0.3, 0.3], &[false, false]), None);
}
