mod common;

use common::eer_oracle;
use proptest::prelude::*;
use qv_core::audio::Label;
use qv_core::metrics::{confusion, eer, report, ScoreSet};

fn score_set() -> impl Strategy<Value = (Vec<f64>, Vec<Label>)> {
    (2usize..=20)
        .prop_flat_map(|n| {
            (
                // few distinct values so ties are common
                proptest::collection::vec(
                    prop_oneof![(-4i32..5).prop_map(|v| v as f64 * 0.5), -3.0f64..3.0],
                    n,
                ),
                proptest::collection::vec(any::<bool>(), n),
            )
        })
        .prop_filter("both classes", |(_, b)| {
            b.iter().any(|&x| x) && b.iter().any(|&x| !x)
        })
        .prop_map(|(s, b)| {
            let labels = b
                .into_iter()
                .map(|x| if x { Label::Bonafide } else { Label::Spoof })
                .collect();
            (s, labels)
        })
}

fn swapped(l: &[Label]) -> Vec<Label> {
    l.iter()
        .map(|&x| {
            if x == Label::Bonafide {
                Label::Spoof
            } else {
                Label::Bonafide
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn matches_exhaustive_oracle((s, l) in score_set()) {
        let got = eer(&ScoreSet::unnamed(s.clone(), l.clone()).unwrap()).unwrap().eer;
        let want = eer_oracle(&s, &l);
        prop_assert!((got - want).abs() <= 1e-9, "eer {} oracle {}", got, want);
        prop_assert!((0.0..=1.0).contains(&got));
    }

    #[test]
    fn invariant_under_increasing_maps((s, l) in score_set()) {
        let base = eer(&ScoreSet::unnamed(s.clone(), l.clone()).unwrap()).unwrap().eer;
        for f in [|v: f64| 3.0 * v + 7.0, |v: f64| v.exp(), |v: f64| v * v * v] {
            let t: Vec<f64> = s.iter().map(|&v| f(v)).collect();
            let e = eer(&ScoreSet::unnamed(t, l.clone()).unwrap()).unwrap().eer;
            prop_assert!((e - base).abs() <= 1e-12, "{} vs {}", e, base);
        }
    }

    #[test]
    fn negate_and_swap_is_symmetric((s, l) in score_set()) {
        let base = eer(&ScoreSet::unnamed(s.clone(), l.clone()).unwrap()).unwrap().eer;
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        let e = eer(&ScoreSet::unnamed(neg, swapped(&l)).unwrap()).unwrap().eer;
        prop_assert!((e - base).abs() <= 1e-12, "{} vs {}", e, base);
    }

    #[test]
    fn report_counts_are_consistent((s, l) in score_set()) {
        let set = ScoreSet::unnamed(s.clone(), l).unwrap();
        let r = report(&set).unwrap();
        let total: u64 = r.confusion.iter().flatten().sum();
        prop_assert_eq!(total as usize, s.len());
        prop_assert_eq!(r.n_bonafide + r.n_spoof, s.len());
        prop_assert!((0.0..=1.0).contains(&r.eer));
        prop_assert_eq!(r.confusion, confusion(&set, r.eer_threshold));
    }
}

#[test]
fn hand_derived_case() {
    let scores = vec![0.9, 0.8, 0.7, 0.6, 0.65, 0.3, 0.2, 0.1];
    let labels = [[Label::Bonafide; 4], [Label::Spoof; 4]].concat();
    assert_eq!(eer_oracle(&scores, &labels), 0.125);
    let set = ScoreSet::unnamed(scores, labels).unwrap();
    let e = eer(&set).unwrap();
    assert!((e.eer - 0.125).abs() <= 1e-12);
    assert_eq!(confusion(&set, e.threshold), [[3, 1], [1, 3]]);
}
